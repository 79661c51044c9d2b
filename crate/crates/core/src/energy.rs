//! The BDF energy
//! E(Q) = tr₀(D⁰Q) − κD(ρ_Q,ν) + (α/2)D(ρ_Q,ρ_Q) − (α/2)∬|Q(x,y)|²W(x−y)
//! and the pair-production difference F = E(Q₊) − E(Q₋).
//! Energies are in units of m_e c².

use std::f64::consts::PI;

use faer::Mat;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::coulomb::{coulomb_inner, ChargeDensity};
use crate::dirac::{block_at, FreeDirac};
use crate::error::{BdfError, Result};
use crate::lattice::MomentumLattice;
use crate::states::{density_of, exchange_operator, exchange_pairing, VacuumState};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub kinetic: f64,
    pub external: f64,
    pub direct: f64,
    pub exchange: f64,
    pub total: f64,
}

impl EnergyBreakdown {
    pub fn difference(&self, other: &EnergyBreakdown) -> EnergyBreakdown {
        EnergyBreakdown {
            kinetic: self.kinetic - other.kinetic,
            external: self.external - other.external,
            direct: self.direct - other.direct,
            exchange: self.exchange - other.exchange,
            total: self.total - other.total,
        }
    }
}

/// Largest α for which the energy is bounded below.
pub const ALPHA_MAX: f64 = 4.0 / PI;

pub fn check_alpha(alpha: f64) -> Result<()> {
    if (0.0..ALPHA_MAX).contains(&alpha) {
        Ok(())
    } else {
        Err(BdfError::InvalidArgument(format!(
            "alpha must lie in [0, 4/π), got {alpha}"
        )))
    }
}

/// tr₀(D⁰Q) = Σ_p tr(D⁰(p) Q(p,p)).
pub fn kinetic_signed(free: &FreeDirac, q: &Mat<Complex64>) -> f64 {
    (0..free.len())
        .map(|a| (free.hamiltonian[a] * block_at(q, a, a)).trace().re)
        .sum()
}

/// tr(|D⁰|(Q₊₊ − Q₋₋)), equal to the signed form and ≥ 0 on admissible Q.
pub fn kinetic_abs(free: &FreeDirac, q: &Mat<Complex64>) -> f64 {
    (0..free.len())
        .map(|a| {
            let b = block_at(q, a, a);
            free.energies[a] * ((free.plus[a] * b).trace().re - (free.minus[a] * b).trace().re)
        })
        .sum()
}

/// Energy from precomputed pieces. `exchange` is R_Q; it is not needed when
/// α = 0.
pub fn energy_from_parts(
    free: &FreeDirac,
    q: &Mat<Complex64>,
    rho_q: &ChargeDensity,
    exchange: Option<&Mat<Complex64>>,
    nu: &ChargeDensity,
    alpha: f64,
    kappa: f64,
) -> EnergyBreakdown {
    let kinetic = kinetic_signed(free, q);
    let external = -kappa * coulomb_inner(rho_q, nu);
    let (direct, exch) = if alpha == 0.0 {
        (0.0, 0.0)
    } else {
        let x = exchange
            .map(|r| exchange_pairing(q, r))
            .expect("exchange operator needed for α > 0");
        (0.5 * alpha * coulomb_inner(rho_q, rho_q), -0.5 * alpha * x)
    };
    EnergyBreakdown {
        kinetic,
        external,
        direct,
        exchange: exch,
        total: kinetic + external + direct + exch,
    }
}

pub fn bdf_energy(
    lattice: &MomentumLattice,
    state: &VacuumState,
    nu: &ChargeDensity,
    alpha: f64,
    kappa: f64,
) -> Result<EnergyBreakdown> {
    check_alpha(alpha)?;
    if state.spec != *lattice.spec() || nu.spec() != lattice.spec() {
        return Err(BdfError::LatticeMismatch(
            "state, density and lattice differ".into(),
        ));
    }
    let free = FreeDirac::new(lattice);
    let rho = density_of(lattice, &state.q)?;
    let r = (alpha != 0.0).then(|| exchange_operator(lattice, &state.q));
    Ok(energy_from_parts(
        &free,
        &state.q,
        &rho,
        r.as_ref(),
        nu,
        alpha,
        kappa,
    ))
}

/// −(κ²/2α) D(ν,ν), the lower bound of E for α > 0 (κ = αZ).
pub fn energy_lower_bound(nu: &ChargeDensity, alpha: f64, kappa: f64) -> f64 {
    -kappa * kappa / (2.0 * alpha) * coulomb_inner(nu, nu)
}

/// F(κ,α) = E(Q₊) − E(Q₋), with the per-term differences.
pub fn pair_energy_difference(
    lattice: &MomentumLattice,
    plus: &VacuumState,
    minus: &VacuumState,
    nu: &ChargeDensity,
    alpha: f64,
    kappa: f64,
) -> Result<EnergyBreakdown> {
    if plus.spec != minus.spec {
        return Err(BdfError::LatticeMismatch(format!(
            "{:?} vs {:?}",
            plus.spec, minus.spec
        )));
    }
    let ep = bdf_energy(lattice, plus, nu, alpha, kappa)?;
    let em = bdf_energy(lattice, minus, nu, alpha, kappa)?;
    Ok(ep.difference(&em))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{build_lattice, LatticeSpec};
    use crate::states::Provenance;

    #[test]
    fn zero_state_has_zero_energy() {
        let lat = build_lattice(LatticeSpec::new(4, 6.0, 2.0)).unwrap();
        let nu = ChargeDensity::gaussian(*lat.spec(), 1.0, 1.0);
        let e = bdf_energy(&lat, &VacuumState::zero(&lat, 0.0), &nu, 0.3, 0.5).unwrap();
        assert_eq!(
            e,
            EnergyBreakdown {
                kinetic: 0.0,
                external: 0.0,
                direct: 0.0,
                exchange: 0.0,
                total: 0.0
            }
        );
    }

    #[test]
    fn alpha_range_enforced() {
        let lat = build_lattice(LatticeSpec::new(4, 6.0, 2.0)).unwrap();
        let nu = ChargeDensity::zeros(*lat.spec());
        let q = VacuumState::zero(&lat, 0.0);
        assert!(bdf_energy(&lat, &q, &nu, 1.3, 0.0).is_err());
        assert!(bdf_energy(&lat, &q, &nu, -0.1, 0.0).is_err());
    }

    #[test]
    fn mismatched_pair_rejected() {
        let a = build_lattice(LatticeSpec::new(4, 6.0, 2.0)).unwrap();
        let b = build_lattice(LatticeSpec::new(4, 5.0, 2.0)).unwrap();
        let nu = ChargeDensity::zeros(*a.spec());
        let qa = VacuumState::zero(&a, 0.0);
        let qb =
            VacuumState::new(&b, Mat::zeros(b.dim(), b.dim()), 0.0, Provenance::Manual).unwrap();
        assert!(matches!(
            pair_energy_difference(&a, &qa, &qb, &nu, 0.0, 0.0),
            Err(BdfError::LatticeMismatch(_))
        ));
    }
}
