//! Charge densities, the Coulomb form D(f,g), potentials V_ρ, and the
//! continuum screening functions Z_Λ, B_Λ(k), B_Λ, U_Λ.
//!
//! A density is stored by its box Fourier coefficients ρ_K = ∫_box ρ e^{-iK·x}
//! on a grid with 2n points per axis, so every momentum transfer p − q between
//! two retained momenta is represented. With V = L³:
//!
//! - ρ(x) = V⁻¹ Σ_K ρ_K e^{iK·x}, total charge = ρ_0
//! - D(f,g) = V⁻¹ Σ_{K≠0} 4π f_K conj(g_K)/|K|²
//! - ‖ρ‖²_{L²} = V⁻¹ Σ_K |ρ_K|²
//! - (V_ρ)_K = 4π ρ_K/|K|², K = 0 dropped (neutralizing background)

use std::f64::consts::PI;

use faer::Mat;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{BdfError, Result};
use crate::lattice::{fft3, fold, unfold, LatticeSpec, MomentumLattice};
use crate::quadrature::{integrate, QuadratureSettings};

/// Coefficients of a real scalar field on the doubled grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ChargeDensity {
    spec: LatticeSpec,
    coeffs: Vec<Complex64>,
}

/// Points per axis of the density grid for a lattice with n points per axis.
pub fn density_points(spec: &LatticeSpec) -> usize {
    2 * spec.n_per_axis
}

pub(crate) fn density_offset(j: [i32; 3], n2: usize) -> usize {
    (unfold(j[0], n2) * n2 + unfold(j[1], n2)) * n2 + unfold(j[2], n2)
}

/// Folded integer momenta of the density grid, in storage order.
fn density_indices(n2: usize) -> impl Iterator<Item = [i32; 3]> {
    (0..n2 * n2 * n2).map(move |g| {
        let iz = g % n2;
        let iy = (g / n2) % n2;
        let ix = g / (n2 * n2);
        [fold(ix, n2), fold(iy, n2), fold(iz, n2)]
    })
}

fn norm2(j: [i32; 3]) -> i64 {
    j.iter().map(|&x| (x as i64) * (x as i64)).sum()
}

impl ChargeDensity {
    pub fn zeros(spec: LatticeSpec) -> Self {
        let n2 = density_points(&spec);
        ChargeDensity {
            spec,
            coeffs: vec![Complex64::new(0.0, 0.0); n2 * n2 * n2],
        }
    }

    /// ν(x) = Z (2πσ²)^{-3/2} e^{-|x|²/2σ²}, periodized, centered at the origin.
    pub fn gaussian(spec: LatticeSpec, charge: f64, width: f64) -> Self {
        let dk = spec.dk();
        let mut rho = Self::zeros(spec);
        let n2 = density_points(&spec);
        for (c, j) in rho.coeffs.iter_mut().zip(density_indices(n2)) {
            let k2 = dk * dk * norm2(j) as f64;
            *c = Complex64::new(charge * (-0.5 * width * width * k2).exp(), 0.0);
        }
        rho
    }

    /// Coefficients in storage order of the density grid. Conjugation symmetry
    /// is imposed by averaging ρ_K with conj(ρ_{-K}).
    pub fn from_coefficients(spec: LatticeSpec, coeffs: Vec<Complex64>) -> Result<Self> {
        let n2 = density_points(&spec);
        if coeffs.len() != n2 * n2 * n2 {
            return Err(BdfError::InvalidArgument(format!(
                "expected {} density coefficients, got {}",
                n2 * n2 * n2,
                coeffs.len()
            )));
        }
        if coeffs
            .iter()
            .any(|c| !c.re.is_finite() || !c.im.is_finite())
        {
            return Err(BdfError::NonFinite("density coefficients".into()));
        }
        let mut sym = coeffs.clone();
        for (g, j) in density_indices(n2).enumerate() {
            let mirror = density_offset([-j[0], -j[1], -j[2]], n2);
            sym[g] = 0.5 * (coeffs[g] + coeffs[mirror].conj());
        }
        Ok(ChargeDensity { spec, coeffs: sym })
    }

    /// Samples ρ(x_j) at x_j = j·L/(2n), storage order as the coefficients.
    pub fn from_position_values(spec: LatticeSpec, values: &[f64]) -> Result<Self> {
        let n2 = density_points(&spec);
        if values.len() != n2 * n2 * n2 {
            return Err(BdfError::InvalidArgument(format!(
                "expected {} density samples, got {}",
                n2 * n2 * n2,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(BdfError::NonFinite("density samples".into()));
        }
        let h3 = (spec.box_length / n2 as f64).powi(3);
        let mut buf: Vec<Complex64> = values.iter().map(|v| Complex64::new(*v, 0.0)).collect();
        fft3(&mut buf, n2, false);
        buf.iter_mut().for_each(|c| *c *= h3);
        Self::from_coefficients(spec, buf)
    }

    pub fn spec(&self) -> &LatticeSpec {
        &self.spec
    }

    pub fn points_per_axis(&self) -> usize {
        density_points(&self.spec)
    }

    pub fn coefficients(&self) -> &[Complex64] {
        &self.coeffs
    }

    /// ρ_K for K = j·Δk, any j with components in [-2n.. 2n) folded.
    pub fn coefficient(&self, j: [i32; 3]) -> Complex64 {
        self.coeffs[density_offset(j, density_points(&self.spec))]
    }

    pub fn total_charge(&self) -> f64 {
        self.coeffs[0].re
    }

    /// Folded integer momenta matching [`Self::coefficients`].
    pub fn indices(&self) -> impl Iterator<Item = [i32; 3]> {
        density_indices(density_points(&self.spec))
    }

    /// ρ(x_j) on the 2n³ position grid.
    pub fn position_values(&self) -> Vec<f64> {
        let n2 = density_points(&self.spec);
        let mut buf = self.coeffs.clone();
        fft3(&mut buf, n2, true);
        let v = self.spec.volume();
        buf.iter().map(|c| c.re / v).collect()
    }

    pub fn scaled(&self, s: f64) -> Self {
        ChargeDensity {
            spec: self.spec,
            coeffs: self.coeffs.iter().map(|c| c * s).collect(),
        }
    }

    /// self + s·other.
    pub fn axpy(&self, s: f64, other: &ChargeDensity) -> Self {
        assert_eq!(self.spec, other.spec, "densities on different lattices");
        ChargeDensity {
            spec: self.spec,
            coeffs: self
                .coeffs
                .iter()
                .zip(&other.coeffs)
                .map(|(a, b)| a + b * s)
                .collect(),
        }
    }

    pub fn sub(&self, other: &ChargeDensity) -> Self {
        self.axpy(-1.0, other)
    }

    /// Multiply ρ_K by a radial function of |K|.
    pub fn radial_multiply<F: Fn(f64) -> f64>(&self, f: F) -> Self {
        let dk = self.spec.dk();
        let coeffs = self
            .coeffs
            .iter()
            .zip(self.indices())
            .map(|(c, j)| c * f(dk * (norm2(j) as f64).sqrt()))
            .collect();
        ChargeDensity {
            spec: self.spec,
            coeffs,
        }
    }

    pub fn l2_norm(&self) -> f64 {
        (self.coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>() / self.spec.volume()).sqrt()
    }

    pub fn coulomb_norm(&self) -> f64 {
        coulomb_inner(self, self).max(0.0).sqrt()
    }

    /// ‖ρ‖_{L²∩𝒞} = max(‖ρ‖_{L²}, ‖ρ‖_𝒞).
    pub fn l2c_norm(&self) -> f64 {
        self.l2_norm().max(self.coulomb_norm())
    }

    /// Largest imaginary part of the position samples; zero for real fields
    /// up to round-off.
    pub fn imaginary_residue(&self) -> f64 {
        let n2 = density_points(&self.spec);
        let mut buf = self.coeffs.clone();
        fft3(&mut buf, n2, true);
        let v = self.spec.volume();
        buf.iter().map(|c| (c.im / v).abs()).fold(0.0, f64::max)
    }
}

/// D(f,g) = V⁻¹ Σ_{K≠0} 4π f_K conj(g_K)/|K|².
pub fn coulomb_inner(f: &ChargeDensity, g: &ChargeDensity) -> f64 {
    assert_eq!(f.spec, g.spec, "densities on different lattices");
    let dk2 = f.spec.dk().powi(2);
    let mut s = 0.0;
    for ((a, b), j) in f.coeffs.iter().zip(&g.coeffs).zip(f.indices()) {
        let n = norm2(j);
        if n == 0 {
            continue;
        }
        s += (a * b.conj()).re / (dk2 * n as f64);
    }
    4.0 * PI * s / f.spec.volume()
}

/// V_ρ = ρ ⋆ |x|⁻¹, held by its Fourier coefficients on the density grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Potential {
    spec: LatticeSpec,
    coeffs: Vec<Complex64>,
}

pub fn coulomb_potential(rho: &ChargeDensity) -> Potential {
    let dk2 = rho.spec.dk().powi(2);
    let coeffs = rho
        .coeffs
        .iter()
        .zip(rho.indices())
        .map(|(c, j)| {
            let n = norm2(j);
            if n == 0 {
                Complex64::new(0.0, 0.0)
            } else {
                c * (4.0 * PI / (dk2 * n as f64))
            }
        })
        .collect();
    Potential {
        spec: rho.spec,
        coeffs,
    }
}

impl Potential {
    pub fn coefficient(&self, j: [i32; 3]) -> Complex64 {
        self.coeffs[density_offset(j, density_points(&self.spec))]
    }

    pub fn coefficients(&self) -> &[Complex64] {
        &self.coeffs
    }

    /// V(x_j) on the 2n³ position grid.
    pub fn position_values(&self) -> Vec<f64> {
        let n2 = density_points(&self.spec);
        let mut buf = self.coeffs.clone();
        fft3(&mut buf, n2, true);
        let v = self.spec.volume();
        buf.iter().map(|c| c.re / v).collect()
    }

    /// max_x |V(x)| over the density grid.
    pub fn sup_norm(&self) -> f64 {
        self.position_values()
            .iter()
            .map(|v| v.abs())
            .fold(0.0, f64::max)
    }

    /// Matrix of multiplication by V on the cutoff spinor space:
    /// ⟨e_p, V e_q⟩ = V⁻¹ V_{p−q} times the 4×4 identity.
    pub fn operator(&self, lattice: &MomentumLattice) -> Mat<Complex64> {
        assert_eq!(
            *lattice.spec(),
            self.spec,
            "potential on a different lattice"
        );
        let pts = lattice.points();
        let m = pts.len();
        let inv_v = 1.0 / lattice.volume();
        let mut out = Mat::<Complex64>::zeros(4 * m, 4 * m);
        for b in 0..m {
            for a in 0..m {
                let j = [
                    pts[a][0] - pts[b][0],
                    pts[a][1] - pts[b][1],
                    pts[a][2] - pts[b][2],
                ];
                let v = self.coefficient(j) * inv_v;
                for s in 0..4 {
                    out[(4 * a + s, 4 * b + s)] = v;
                }
            }
        }
        out
    }
}

/// Z_Λ(r) = (√(1+Λ²) − √(1+(Λ−r)²))/r, evaluated as
/// (2Λ − r)/(√(1+Λ²) + √(1+(Λ−r)²)) which is free of cancellation and gives
/// the r → 0 limit Λ/√(1+Λ²) directly.
pub fn z_cutoff(r: f64, cutoff: f64) -> Result<f64> {
    if !(r >= 0.0) {
        return Err(BdfError::InvalidArgument(format!(
            "z_cutoff needs r >= 0, got {r}"
        )));
    }
    let a = (1.0 + cutoff * cutoff).sqrt();
    let b = (1.0 + (cutoff - r) * (cutoff - r)).sqrt();
    Ok((2.0 * cutoff - r) / (a + b))
}

fn check_cutoff(cutoff: f64) -> Result<()> {
    if cutoff.is_finite() && cutoff > 1.0 {
        Ok(())
    } else {
        Err(BdfError::InvalidArgument(format!(
            "cutoff must exceed 1, got {cutoff}"
        )))
    }
}

/// 1 − Z_Λ(r), computed without cancellation (Z_Λ(0) → 1 as Λ → ∞).
fn z_cutoff_complement(r: f64, cutoff: f64) -> f64 {
    let a = (1.0 + cutoff * cutoff).sqrt();
    let b = (1.0 + (cutoff - r) * (cutoff - r)).sqrt();
    // a − Λ = 1/(a + Λ); b − (Λ − r) likewise when Λ ≥ r.
    let a_part = 1.0 / (a + cutoff);
    let b_part = if cutoff >= r {
        1.0 / (b + cutoff - r)
    } else {
        b + r - cutoff
    };
    (a_part + b_part) / (a + b)
}

/// artanh Z_Λ(r), the upper limit after substituting z = tanh t.
fn t_cutoff(r: f64, cutoff: f64) -> f64 {
    let c = z_cutoff_complement(r, cutoff);
    0.5 * ((2.0 - c) / c).ln()
}

/// B_Λ = π⁻¹ ∫₀^{Λ/√(1+Λ²)} (z² − z⁴/3)/(1 − z²) dz.
///
/// Integrated in t with z = tanh t, which absorbs the 1/(1 − z²) growth
/// near the endpoint: B_Λ = π⁻¹ ∫₀^{arsinh Λ} (tanh²t − tanh⁴t/3) dt.
pub fn b_constant(cutoff: f64, settings: &QuadratureSettings) -> Result<f64> {
    check_cutoff(cutoff)?;
    let r = integrate(
        |t: f64| {
            let z2 = t.tanh().powi(2);
            z2 - z2 * z2 / 3.0
        },
        0.0,
        cutoff.asinh(),
        settings,
    )?;
    Ok(r.value / PI)
}

/// Large-Λ expansion (2/3π) log Λ − 5/(9π) + 2 log 2/(3π).
pub fn b_constant_asymptotic(cutoff: f64) -> f64 {
    (2.0 / (3.0 * PI)) * cutoff.ln() - 5.0 / (9.0 * PI) + 2.0 * 2f64.ln() / (3.0 * PI)
}

/// B_Λ(k), vanishing for |k| > 2Λ.
pub fn b_function(k: f64, cutoff: f64, settings: &QuadratureSettings) -> Result<f64> {
    check_cutoff(cutoff)?;
    if !(k >= 0.0) {
        return Err(BdfError::InvalidArgument(format!(
            "b_function needs |k| >= 0, got {k}"
        )));
    }
    if k > 2.0 * cutoff {
        return Ok(0.0);
    }
    let top = z_cutoff(k, cutoff)?;
    let k2 = k * k;
    // Same z = tanh t substitution as in b_constant for the first integral.
    let first = integrate(
        |t: f64| {
            let z2 = t.tanh().powi(2);
            let sech2 = 1.0 - z2;
            (z2 - z2 * z2 / 3.0) / (1.0 + 0.25 * k2 * sech2)
        },
        0.0,
        t_cutoff(k, cutoff),
        settings,
    )?;
    let mut total = first.value / PI;
    if k > 0.0 {
        let root = (1.0 + cutoff * cutoff).sqrt();
        let second = integrate(
            |z| (z - z.powi(3) / 3.0) / (root - 0.5 * k * z),
            0.0,
            top,
            settings,
        )?;
        total += k / (2.0 * PI) * second.value;
    }
    Ok(total)
}

/// U_Λ(r) = B_Λ − B_Λ(r).
pub fn u_function(r: f64, cutoff: f64, settings: &QuadratureSettings) -> Result<f64> {
    Ok(b_constant(cutoff, settings)? - b_function(r, cutoff, settings)?)
}

/// The uniform bound (258/π)(1 + log(1+r²)/(3π)) on U_Λ(r).
pub fn u_bound(r: f64) -> f64 {
    (258.0 / PI) * (1.0 + (1.0 + r * r).ln() / (3.0 * PI))
}

/// ν_ren = ν/(1 + αB_Λ).
pub fn renormalize_density(
    nu: &ChargeDensity,
    alpha: f64,
    cutoff: f64,
    settings: &QuadratureSettings,
) -> Result<ChargeDensity> {
    if !(alpha >= 0.0) {
        return Err(BdfError::InvalidArgument(format!(
            "alpha must be >= 0, got {alpha}"
        )));
    }
    if alpha == 0.0 {
        return Ok(nu.clone());
    }
    Ok(nu.scaled(1.0 / (1.0 + alpha * b_constant(cutoff, settings)?)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScreeningEntry {
    pub k: f64,
    pub b: f64,
    pub u: f64,
}

/// B_Λ(k) and U_Λ(k) tabulated on a set of radii.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreeningTable {
    pub cutoff: f64,
    pub b_lambda: f64,
    pub settings: QuadratureSettings,
    pub entries: Vec<ScreeningEntry>,
    /// Spacing when the radii are the lattice values Δk·√s, s = 0, 1, 2, …
    lattice_dk: Option<f64>,
}

impl ScreeningTable {
    pub fn for_radii(cutoff: f64, radii: &[f64], settings: QuadratureSettings) -> Result<Self> {
        let b_lambda = b_constant(cutoff, &settings)?;
        let entries = radii
            .iter()
            .map(|&k| {
                let b = b_function(k, cutoff, &settings)?;
                Ok(ScreeningEntry {
                    k,
                    b,
                    u: b_lambda - b,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ScreeningTable {
            cutoff,
            b_lambda,
            settings,
            entries,
            lattice_dk: None,
        })
    }

    /// Every radius |K| = Δk·√s of the density grid; entry s holds |K|² = Δk²·s.
    pub fn for_lattice(spec: &LatticeSpec, settings: QuadratureSettings) -> Result<Self> {
        let n = spec.n_per_axis as i64;
        let dk = spec.dk();
        let max_s = 3 * n * n;
        let radii: Vec<f64> = (0..=max_s).map(|s| dk * (s as f64).sqrt()).collect();
        let mut table = Self::for_radii(spec.cutoff, &radii, settings)?;
        table.lattice_dk = Some(dk);
        Ok(table)
    }

    /// B_Λ(K) for K = j·Δk on a table built by [`Self::for_lattice`].
    pub fn b_at(&self, j: [i32; 3]) -> f64 {
        assert!(
            self.lattice_dk.is_some(),
            "table not built on lattice radii"
        );
        self.entries[norm2(j) as usize].b
    }

    /// Distinct radii actually present on the density grid.
    pub fn realized(&self) -> Vec<ScreeningEntry> {
        match self.lattice_dk {
            None => self.entries.clone(),
            Some(_) => self
                .entries
                .iter()
                .enumerate()
                .filter(|(s, _)| is_sum_of_three_squares(*s as u64))
                .map(|(_, e)| *e)
                .collect(),
        }
    }

    /// (1 + αB_Λ(K))⁻¹ applied to a density: the first-order dielectric
    /// response of the vacuum, used to precondition density updates.
    pub fn dielectric_inverse(&self, rho: &ChargeDensity, alpha: f64) -> ChargeDensity {
        let coeffs = rho
            .coefficients()
            .iter()
            .zip(rho.indices())
            .map(|(c, j)| c / (1.0 + alpha * self.b_at(j)))
            .collect();
        ChargeDensity {
            spec: rho.spec,
            coeffs,
        }
    }
}

fn is_sum_of_three_squares(s: u64) -> bool {
    // Legendre: s is a sum of three squares unless s = 4^a (8b + 7).
    if s == 0 {
        return true;
    }
    let mut t = s;
    while t.is_multiple_of(4) {
        t /= 4;
    }
    t % 8 != 7
}
