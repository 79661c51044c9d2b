//! Static pair production: the vacua Q₋ and Q₊ at Fermi levels μ₋ < 0 < μ₊,
//! F(κ,α) = E(Q₊) − E(Q₋), and the coupling κ_c(α) where F changes sign.
//!
//! The crossing eigenvalue of a time-reversal invariant lattice operator is a
//! Kramers pair, so Q₊ carries d = 2 electrons more than Q₋ and F ≈ dλ.
//! Deviations are therefore reported per electron, F/d − λ(κν_ren).

use std::f64::consts::PI;

use faer::Mat;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coulomb::{
    b_constant, coulomb_inner, renormalize_density, ChargeDensity, ScreeningTable,
};
use crate::energy::check_alpha;
use crate::error::{BdfError, Result};
use crate::lattice::MomentumLattice;
use crate::scf::{scf_solve, Preconditioner, ScfConfig, ScfResult};
use crate::spectral::{
    bracketed_root, diagonalize, eigenvalues, fermi_gap, gap_cluster, linear_operator,
    single_cluster,
};
use crate::states::{density_of, exchange_energy, generalized_trace};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PairSettings {
    pub mu_minus: f64,
    pub mu_plus: f64,
    /// Solver knobs shared by both vacua; κ, α and μ are overwritten per run.
    pub scf: ScfConfig,
    /// Bracket width at which the κ_c search stops.
    pub kappa_tol: f64,
    /// Half-width of the κ window around 1 on which μ± are validated.
    pub epsilon: f64,
}

impl Default for PairSettings {
    fn default() -> Self {
        PairSettings {
            mu_minus: -0.4,
            mu_plus: 0.4,
            scf: ScfConfig::default(),
            kappa_tol: 1e-4,
            epsilon: 0.15,
        }
    }
}

impl PairSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu_minus < 0.0
            && 0.0 < self.mu_plus
            && self.mu_minus > -1.0
            && self.mu_plus < 1.0)
        {
            return Err(BdfError::InvalidArgument(format!(
                "need -1 < mu_minus < 0 < mu_plus < 1, got ({}, {})",
                self.mu_minus, self.mu_plus
            )));
        }
        if !(self.kappa_tol > 0.0) {
            return Err(BdfError::InvalidArgument(format!(
                "kappa_tol must be positive, got {}",
                self.kappa_tol
            )));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(BdfError::InvalidArgument(format!(
                "epsilon must lie in (0, 1), got {}",
                self.epsilon
            )));
        }
        self.scf.validate()
    }

    fn window(&self) -> (f64, f64) {
        (self.mu_minus, self.mu_plus)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairProductionPoint {
    pub kappa: f64,
    pub alpha: f64,
    pub cutoff: f64,
    pub f_value: f64,
    /// λ(κν_ren, Λ); NaN when the window holds no eigenvalue.
    pub lambda_ren: f64,
    /// Size of the eigenvalue cluster at λ_ren (0 when there is none).
    pub multiplicity: usize,
    /// F/d − λ_ren, or F itself when d = 0.
    pub deviation: f64,
    pub converged_plus: bool,
    pub converged_minus: bool,
    pub charge_plus: f64,
    pub charge_minus: f64,
    pub iterations_plus: usize,
    pub iterations_minus: usize,
    /// Set when either run failed; the numeric fields are then NaN.
    pub error: Option<String>,
}

impl PairProductionPoint {
    pub fn charge_difference(&self) -> f64 {
        self.charge_plus - self.charge_minus
    }

    pub fn ok(&self) -> bool {
        self.error.is_none() && self.converged_plus && self.converged_minus
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalCouplingReport {
    pub alpha: f64,
    pub cutoff: f64,
    pub kappa_c: f64,
    pub bracket: (f64, f64),
    pub kappa_c0: f64,
    pub ratio: f64,
    pub b_lambda: f64,
    /// 1 + αB_Λ.
    pub predicted_ratio: f64,
    /// 1 + (2/3π)α log Λ.
    pub asymptotic_ratio: f64,
    /// Number of F evaluations (each is two SCF runs when α > 0).
    pub evaluations: usize,
}

fn settings_for(settings: &PairSettings, kappa: f64, alpha: f64, mu: f64) -> ScfConfig {
    ScfConfig {
        alpha,
        kappa,
        mu,
        ..settings.scf
    }
}

/// The two vacua at κ, α, differing only in the Fermi level.
pub fn vacua_pair(
    lattice: &MomentumLattice,
    nu: &ChargeDensity,
    kappa: f64,
    alpha: f64,
    settings: &PairSettings,
    screening: Option<&ScreeningTable>,
) -> Result<(ScfResult, ScfResult)> {
    settings.validate()?;
    let minus = scf_solve(
        lattice,
        nu,
        &settings_for(settings, kappa, alpha, settings.mu_minus),
        screening,
    )?;
    let plus = scf_solve(
        lattice,
        nu,
        &settings_for(settings, kappa, alpha, settings.mu_plus),
        screening,
    )?;
    Ok((minus, plus))
}

/// Checks that D^{κν} has exactly one eigenvalue cluster in (μ₋, μ₊), kept
/// at least `gap_tol` away from both Fermi levels, at κ = 1 − ε, 1, 1 + ε.
pub fn validate_fermi_levels(
    lattice: &MomentumLattice,
    nu: &ChargeDensity,
    settings: &PairSettings,
) -> Result<()> {
    settings.validate()?;
    for kappa in [1.0 - settings.epsilon, 1.0, 1.0 + settings.epsilon] {
        let values = eigenvalues(&linear_operator(lattice, nu, kappa))?;
        single_cluster(&values, settings.window())?;
        for mu in [settings.mu_minus, settings.mu_plus] {
            let (gap, eigenvalue) = fermi_gap(&values, mu);
            if gap <= settings.scf.gap_tol {
                return Err(BdfError::FermiDegeneracy {
                    mu,
                    eigenvalue,
                    tolerance: settings.scf.gap_tol,
                });
            }
        }
    }
    Ok(())
}

/// λ(κν_ren, Λ) and the size of its cluster in (μ₋, μ₊).
pub fn renormalized_eigenvalue(
    lattice: &MomentumLattice,
    nu: &ChargeDensity,
    kappa: f64,
    alpha: f64,
    settings: &PairSettings,
) -> Result<(f64, usize)> {
    let nu_ren = renormalize_density(nu, alpha, lattice.cutoff(), &settings.scf.quadrature)?;
    match gap_cluster(lattice, &nu_ren, kappa, settings.window()) {
        Ok(c) => Ok((c.lambda, c.multiplicity())),
        Err(BdfError::NoEigenvalue { .. }) => Ok((f64::NAN, 0)),
        Err(e) => Err(e),
    }
}

/// One scan point. Failures of either SCF run are recorded, not raised.
pub fn pair_point(
    lattice: &MomentumLattice,
    nu: &ChargeDensity,
    kappa: f64,
    alpha: f64,
    settings: &PairSettings,
    screening: Option<&ScreeningTable>,
) -> PairProductionPoint {
    let mut point = PairProductionPoint {
        kappa,
        alpha,
        cutoff: lattice.cutoff(),
        f_value: f64::NAN,
        lambda_ren: f64::NAN,
        multiplicity: 0,
        deviation: f64::NAN,
        converged_plus: false,
        converged_minus: false,
        charge_plus: f64::NAN,
        charge_minus: f64::NAN,
        iterations_plus: 0,
        iterations_minus: 0,
        error: None,
    };
    let mut run = || -> Result<()> {
        let (lambda, d) = renormalized_eigenvalue(lattice, nu, kappa, alpha, settings)?;
        point.lambda_ren = lambda;
        point.multiplicity = d;
        let (minus, plus) = vacua_pair(lattice, nu, kappa, alpha, settings, screening)?;
        point.converged_minus = minus.converged;
        point.converged_plus = plus.converged;
        point.iterations_minus = minus.residual_history.len();
        point.iterations_plus = plus.residual_history.len();
        point.charge_minus = generalized_trace(lattice, &minus.state.q);
        point.charge_plus = generalized_trace(lattice, &plus.state.q);
        point.f_value = plus.energy.total - minus.energy.total;
        point.deviation = if d == 0 {
            point.f_value
        } else {
            point.f_value / d as f64 - lambda
        };
        Ok(())
    };
    if let Err(e) = run() {
        point.error = Some(e.to_string());
    }
    point
}

/// F and λ(κν_ren) over a κ grid; points run in parallel and come back in
/// grid order.
pub fn f_scan(
    lattice: &MomentumLattice,
    nu: &ChargeDensity,
    kappas: &[f64],
    alpha: f64,
    settings: &PairSettings,
    screening: Option<&ScreeningTable>,
) -> Result<Vec<PairProductionPoint>> {
    check_alpha(alpha)?;
    settings.validate()?;
    let owned;
    let screening = match (screening, settings.scf.preconditioner, alpha > 0.0) {
        (None, Preconditioner::Dielectric, true) => {
            owned = ScreeningTable::for_lattice(lattice.spec(), settings.scf.quadrature)?;
            Some(&owned)
        }
        (s, _, _) => s,
    };
    Ok(kappas
        .par_iter()
        .map(|&k| pair_point(lattice, nu, k, alpha, settings, screening))
        .collect())
}

fn pair_energy(
    lattice: &MomentumLattice,
    nu: &ChargeDensity,
    kappa: f64,
    alpha: f64,
    settings: &PairSettings,
    screening: Option<&ScreeningTable>,
) -> Result<f64> {
    let (minus, plus) = vacua_pair(lattice, nu, kappa, alpha, settings, screening)?;
    for r in [&minus, &plus] {
        if !r.converged {
            return Err(BdfError::Scf {
                iteration: r.residual_history.len(),
                source: Box::new(BdfError::InvalidArgument(format!(
                    "no convergence at kappa = {kappa}, mu = {}, residual {:e}",
                    r.state.fermi_level,
                    r.final_residual()
                ))),
            });
        }
    }
    Ok(plus.energy.total - minus.energy.total)
}

/// Root of κ ↦ F(κ,α) on `bracket`, to a bracket no wider than
/// `settings.kappa_tol`. κ_c(0) is located the same way with α = 0.
pub fn critical_coupling(
    lattice: &MomentumLattice,
    nu: &ChargeDensity,
    alpha: f64,
    bracket: (f64, f64),
    settings: &PairSettings,
    screening: Option<&ScreeningTable>,
) -> Result<CriticalCouplingReport> {
    check_alpha(alpha)?;
    settings.validate()?;
    let owned;
    let screening = match screening {
        Some(s) => Some(s),
        None if alpha > 0.0 && settings.scf.preconditioner == Preconditioner::Dielectric => {
            owned = ScreeningTable::for_lattice(lattice.spec(), settings.scf.quadrature)?;
            Some(&owned)
        }
        None => None,
    };
    let root = |a: f64| -> Result<(f64, (f64, f64), usize)> {
        let f = |k: f64| pair_energy(lattice, nu, k, a, settings, screening);
        let (mut lo, mut hi) = bracket;
        let mut f_lo = f(lo)?;
        let mut f_hi = f(hi)?;
        let mut evaluations = 2;
        if f_lo.signum() == f_hi.signum() {
            return Err(BdfError::NoSignChange {
                lower: lo,
                upper: hi,
                f_lower: f_lo,
                f_upper: f_hi,
            });
        }
        let (x, _) = bracketed_root(
            &mut lo,
            &mut hi,
            &mut f_lo,
            &mut f_hi,
            0.0,
            settings.kappa_tol,
            &mut evaluations,
            f,
        )?;
        Ok((x, (lo, hi), evaluations))
    };
    let (kappa_c, bracket_c, evaluations) = root(alpha)?;
    let kappa_c0 = if alpha == 0.0 { kappa_c } else { root(0.0)?.0 };
    let b_lambda = b_constant(lattice.cutoff(), &settings.scf.quadrature)?;
    Ok(CriticalCouplingReport {
        alpha,
        cutoff: lattice.cutoff(),
        kappa_c,
        bracket: bracket_c,
        kappa_c0,
        ratio: kappa_c / kappa_c0,
        b_lambda,
        predicted_ratio: 1.0 + alpha * b_lambda,
        asymptotic_ratio: 1.0 + 2.0 / (3.0 * PI) * alpha * lattice.cutoff().ln(),
        evaluations,
    })
}

/// Mutual Hartree–Fock interaction of the orbitals in the window's single
/// eigenvalue cluster of D^{κν}: I(ΣQᵢ) − ΣI(Qᵢ) with
/// I(Q) = ½D(ρ_Q,ρ_Q) − ½∬|Q(x,y)|²/|x−y| and Qᵢ = |φᵢ⟩⟨φᵢ|.
///
/// Filling the cluster in Q₊ costs this energy on top of dλ; it is absent
/// for a simple eigenvalue.
pub fn cluster_interaction(
    lattice: &MomentumLattice,
    nu: &ChargeDensity,
    kappa: f64,
    window: (f64, f64),
) -> Result<f64> {
    let spectrum = diagonalize(&linear_operator(lattice, nu, kappa))?;
    let cluster = single_cluster(&spectrum.values, window)?;
    let dim = lattice.dim();
    let interaction = |q: &Mat<Complex64>| -> Result<f64> {
        let rho = density_of(lattice, q)?;
        Ok(0.5 * coulomb_inner(&rho, &rho) - 0.5 * exchange_energy(lattice, q))
    };
    let mut total = Mat::<Complex64>::zeros(dim, dim);
    let mut singles = 0.0;
    for i in cluster.first..cluster.first + cluster.multiplicity() {
        let v = spectrum.vectors.col(i);
        let qi = Mat::from_fn(dim, dim, |a, b| v[a] * v[b].conj());
        singles += interaction(&qi)?;
        total = Mat::from_fn(dim, dim, |a, b| total[(a, b)] + qi[(a, b)]);
    }
    Ok(interaction(&total)? - singles)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{build_lattice, LatticeSpec};
    use crate::spectral::{gap_eigenpair, normalize_crossing};

    fn setup() -> (MomentumLattice, ChargeDensity) {
        let lat = build_lattice(LatticeSpec::new(4, 6.0, 2.0)).unwrap();
        let nu = ChargeDensity::gaussian(*lat.spec(), 1.0, 0.8);
        let norm = normalize_crossing(&lat, &nu, (-0.6, 0.6), (5.0, 8.0)).unwrap();
        (lat, norm.nu_scaled)
    }

    #[test]
    fn linear_pair_energy_is_crossing_eigenvalue() {
        let (lat, nu) = setup();
        let s = PairSettings::default();
        for kappa in [0.95, 1.05] {
            let p = pair_point(&lat, &nu, kappa, 0.0, &s, None);
            assert!(p.ok(), "{p:?}");
            let e = gap_eigenpair(&lat, &nu, kappa, (s.mu_minus, s.mu_plus)).unwrap();
            assert_eq!(p.multiplicity, e.multiplicity);
            assert!((p.f_value - e.multiplicity as f64 * e.lambda).abs() < 1e-10);
            assert!((p.charge_difference() - p.multiplicity as f64).abs() < 1e-8);
        }
    }

    #[test]
    fn empty_window_gives_identical_vacua() {
        let (lat, nu) = setup();
        let s = PairSettings {
            mu_minus: -0.05,
            mu_plus: 0.05,
            ..Default::default()
        };
        // Far below the crossing the bound state sits above μ₊.
        let p = pair_point(&lat, &nu, 0.3, 0.0, &s, None);
        assert_eq!(p.multiplicity, 0);
        assert_eq!(p.f_value, 0.0);
    }

    #[test]
    fn linear_critical_coupling_is_normalized() {
        let (lat, nu) = setup();
        let r =
            critical_coupling(&lat, &nu, 0.0, (0.9, 1.1), &PairSettings::default(), None).unwrap();
        assert!((r.kappa_c - 1.0).abs() < 1e-4, "{r:?}");
        assert!(r.bracket.1 - r.bracket.0 <= 1e-4);
        assert_eq!(r.ratio, 1.0);
    }

    #[test]
    fn failed_points_are_flagged() {
        let (lat, nu) = setup();
        let s = PairSettings::default();
        let pts = f_scan(&lat, &nu, &[0.9, 1.0], 0.0, &s, None).unwrap();
        assert_eq!(pts.len(), 2);
        let bad = pair_point(
            &lat,
            &nu,
            1.0,
            0.0,
            &PairSettings { mu_plus: 2.0, ..s },
            None,
        );
        assert!(bad.error.is_some());
    }

    #[test]
    fn fermi_levels_validated_on_window() {
        let (lat, nu) = setup();
        validate_fermi_levels(
            &lat,
            &nu,
            &PairSettings {
                epsilon: 0.05,
                ..Default::default()
            },
        )
        .unwrap();
        let wide = PairSettings {
            mu_minus: -0.99,
            mu_plus: 0.99,
            ..Default::default()
        };
        assert!(validate_fermi_levels(&lat, &nu, &wide).is_err());
    }

    #[test]
    fn no_sign_change_is_an_error() {
        let (lat, nu) = setup();
        let r = critical_coupling(&lat, &nu, 0.0, (0.5, 0.6), &PairSettings::default(), None);
        assert!(matches!(r, Err(BdfError::NoSignChange { .. })));
    }
}
