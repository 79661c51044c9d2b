//! Spectral projections by dense diagonalization, linear vacua, gap
//! eigenpairs and the κ_c = 1 normalization of the external density.

use faer::{Mat, Side};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::coulomb::{coulomb_potential, ChargeDensity};
use crate::dirac::FreeDirac;
use crate::error::{BdfError, Result};
use crate::lattice::{MomentumLattice, SpinorField};
use crate::states::{Provenance, VacuumState};

/// Default distance below which an eigenvalue counts as touching μ.
pub const GAP_TOL: f64 = 1e-6;

/// Eigenvalues closer than this are one (Kramers) cluster.
pub const CLUSTER_TOL: f64 = 1e-7;

#[derive(Debug, Clone)]
pub struct Spectrum {
    /// Ascending.
    pub values: Vec<f64>,
    /// Columns are the matching orthonormal eigenvectors.
    pub vectors: Mat<Complex64>,
}

pub fn diagonalize(h: &Mat<Complex64>) -> Result<Spectrum> {
    let evd = h
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| BdfError::Eigen(format!("{e:?}")))?;
    let s = evd.S().column_vector();
    let values = (0..h.nrows()).map(|i| s[i].re).collect();
    Ok(Spectrum {
        values,
        vectors: evd.U().to_owned(),
    })
}

pub fn eigenvalues(h: &Mat<Complex64>) -> Result<Vec<f64>> {
    h.self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| BdfError::Eigen(format!("{e:?}")))
}

/// Smallest |λ − μ| over the spectrum, with the offending eigenvalue.
pub fn fermi_gap(values: &[f64], mu: f64) -> (f64, f64) {
    values
        .iter()
        .map(|&v| ((v - mu).abs(), v))
        .fold(
            (f64::INFINITY, f64::NAN),
            |acc, x| if x.0 < acc.0 { x } else { acc },
        )
}

fn check_gap(values: &[f64], mu: f64, gap_tol: f64) -> Result<()> {
    let (gap, ev) = fermi_gap(values, mu);
    if gap <= gap_tol {
        Err(BdfError::FermiDegeneracy {
            mu,
            eigenvalue: ev,
            tolerance: gap_tol,
        })
    } else {
        Ok(())
    }
}

/// U_occ U_occ* for the eigenvectors with eigenvalue ≤ μ.
pub fn projector_below(spectrum: &Spectrum, mu: f64) -> Mat<Complex64> {
    let rank = spectrum.values.iter().filter(|&&v| v <= mu).count();
    let u = spectrum.vectors.subcols(0, rank);
    let mut p = u * u.adjoint();
    // Exact hermiticity; the product is Hermitian only up to round-off.
    let n = p.nrows();
    for j in 0..n {
        for i in 0..j {
            let v = 0.5 * (p[(i, j)] + p[(j, i)].conj());
            p[(i, j)] = v;
            p[(j, i)] = v.conj();
        }
        p[(j, j)] = Complex64::new(p[(j, j)].re, 0.0);
    }
    p
}

#[derive(Debug, Clone)]
pub struct Projection {
    pub projector: Mat<Complex64>,
    pub eigenvalues: Vec<f64>,
    pub rank: usize,
    /// Distance from μ to the spectrum.
    pub fermi_gap: f64,
}

/// χ_(−∞,μ](H), failing when an eigenvalue lies within `gap_tol` of μ.
pub fn spectral_projection_with(h: &Mat<Complex64>, mu: f64, gap_tol: f64) -> Result<Projection> {
    let spectrum = diagonalize(h)?;
    check_gap(&spectrum.values, mu, gap_tol)?;
    let projector = projector_below(&spectrum, mu);
    let rank = spectrum.values.iter().filter(|&&v| v <= mu).count();
    let (fermi_gap, _) = fermi_gap(&spectrum.values, mu);
    Ok(Projection {
        projector,
        eigenvalues: spectrum.values,
        rank,
        fermi_gap,
    })
}

pub fn spectral_projection(h: &Mat<Complex64>, mu: f64) -> Result<Mat<Complex64>> {
    Ok(spectral_projection_with(h, mu, GAP_TOL)?.projector)
}

/// D^{κν} = Π_Λ(D⁰ − κV_ν)Π_Λ.
pub fn linear_operator(
    lattice: &MomentumLattice,
    nu: &ChargeDensity,
    kappa: f64,
) -> Mat<Complex64> {
    let free = FreeDirac::new(lattice);
    let mut h = crate::dirac::blocks_to_dense(&free.hamiltonian);
    if kappa != 0.0 {
        let v = coulomb_potential(nu).operator(lattice);
        h = Mat::from_fn(h.nrows(), h.ncols(), |i, j| h[(i, j)] - v[(i, j)] * kappa);
    }
    h
}

/// Subtract P⁰₋ in place: P → P − P⁰₋.
pub fn subtract_free_sea(lattice: &MomentumLattice, p: &mut Mat<Complex64>) {
    let free = FreeDirac::new(lattice);
    for a in 0..free.len() {
        for i in 0..4 {
            for j in 0..4 {
                p[(4 * a + i, 4 * a + j)] -= free.minus[a].0[i][j];
            }
        }
    }
}

/// Q_lin = χ_(−∞,μ](D^{κν}) − P⁰₋.
pub fn linear_vacuum(
    lattice: &MomentumLattice,
    nu: &ChargeDensity,
    kappa: f64,
    mu: f64,
) -> Result<VacuumState> {
    let h = linear_operator(lattice, nu, kappa);
    let mut p = spectral_projection(&h, mu)?;
    subtract_free_sea(lattice, &mut p);
    VacuumState::new(lattice, p, mu, Provenance::Linear)
}

/// A group of (near-)degenerate eigenvalues.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    /// Mean of the member eigenvalues.
    pub lambda: f64,
    pub members: Vec<f64>,
    /// Index of the first member in the ascending spectrum.
    pub first: usize,
    /// Distance to the nearest eigenvalue outside the cluster.
    pub gap_margin: f64,
}

impl Cluster {
    pub fn multiplicity(&self) -> usize {
        self.members.len()
    }

    /// Max − min of the members.
    pub fn spread(&self) -> f64 {
        self.members.last().unwrap() - self.members[0]
    }
}

/// Clusters of the ascending spectrum lying strictly inside (lower, upper).
pub fn clusters_in_window(values: &[f64], lower: f64, upper: f64) -> Vec<Cluster> {
    let mut out: Vec<Cluster> = Vec::new();
    let mut i = 0;
    while i < values.len() {
        let mut j = i + 1;
        while j < values.len() && values[j] - values[j - 1] <= CLUSTER_TOL {
            j += 1;
        }
        let members = values[i..j].to_vec();
        let lambda = members.iter().sum::<f64>() / members.len() as f64;
        if lambda > lower && lambda < upper {
            let below = if i > 0 {
                lambda - values[i - 1]
            } else {
                f64::INFINITY
            };
            let above = if j < values.len() {
                values[j] - lambda
            } else {
                f64::INFINITY
            };
            out.push(Cluster {
                lambda,
                members,
                first: i,
                gap_margin: below.min(above),
            });
        }
        i = j;
    }
    out
}

/// The single eigenvalue cluster of D^{κν} inside the window, from
/// eigenvalues only.
pub fn gap_cluster(
    lattice: &MomentumLattice,
    nu: &ChargeDensity,
    kappa: f64,
    window: (f64, f64),
) -> Result<Cluster> {
    let values = eigenvalues(&linear_operator(lattice, nu, kappa))?;
    single_cluster(&values, window)
}

/// The only cluster in the window, or an error naming how many there are.
pub fn single_cluster(values: &[f64], window: (f64, f64)) -> Result<Cluster> {
    let mut cl = clusters_in_window(values, window.0, window.1);
    match cl.len() {
        0 => Err(BdfError::NoEigenvalue {
            lower: window.0,
            upper: window.1,
        }),
        1 => Ok(cl.pop().unwrap()),
        count => Err(BdfError::MultipleEigenvalues {
            lower: window.0,
            upper: window.1,
            count,
        }),
    }
}

#[derive(Debug, Clone)]
pub struct GapEigenpair {
    pub lambda: f64,
    /// Unit-norm eigenvector in the momentum representation.
    pub phi: SpinorField,
    pub gap_margin: f64,
    /// Size of the degenerate cluster (2 for Kramers pairs).
    pub multiplicity: usize,
    pub cluster: Vec<f64>,
    /// ‖(D − λ)φ‖.
    pub residual: f64,
}

/// The eigenvalue cluster of D^{κν} in the window and one eigenvector of it.
/// The vector's phase is fixed by making its largest-magnitude component real
/// and positive (first such component on ties).
pub fn gap_eigenpair(
    lattice: &MomentumLattice,
    nu: &ChargeDensity,
    kappa: f64,
    window: (f64, f64),
) -> Result<GapEigenpair> {
    let h = linear_operator(lattice, nu, kappa);
    let spectrum = diagonalize(&h)?;
    let cluster = single_cluster(&spectrum.values, window)?;
    let col = spectrum.vectors.col(cluster.first);
    let mut v: Vec<Complex64> = (0..col.nrows()).map(|i| col[i]).collect();
    let mut best = 0;
    for (i, c) in v.iter().enumerate() {
        if c.norm() > v[best].norm() + 1e-12 {
            best = i;
        }
    }
    let phase = v[best].conj() / v[best].norm();
    v.iter_mut().for_each(|c| *c *= phase);

    let mut res = 0.0;
    for i in 0..h.nrows() {
        let mut s = -v[i] * cluster.lambda;
        for j in 0..h.ncols() {
            s += h[(i, j)] * v[j];
        }
        res += s.norm_sqr();
    }
    Ok(GapEigenpair {
        lambda: cluster.lambda,
        phi: SpinorField::from_ball_vector(lattice, &v),
        gap_margin: cluster.gap_margin,
        multiplicity: cluster.multiplicity(),
        cluster: cluster.members.clone(),
        residual: res.sqrt(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossingSample {
    pub kappa: f64,
    /// NaN when no eigenvalue lies in the window.
    pub lambda: f64,
    pub gap_margin: f64,
    pub multiplicity: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossingProfile {
    pub samples: Vec<CrossingSample>,
    /// Linear interpolation of the first sign change of λ.
    pub kappa_c: Option<f64>,
    /// λ nonincreasing over the samples where it is defined.
    pub monotonic: bool,
    /// Largest |Δλ| between neighbouring defined samples.
    pub max_step: f64,
}

/// Tracks the cluster nearest to zero in the window on an ascending κ grid.
pub fn crossing_scan(
    lattice: &MomentumLattice,
    nu: &ChargeDensity,
    kappas: &[f64],
    window: (f64, f64),
) -> Result<CrossingProfile> {
    use rayon::prelude::*;
    if kappas.windows(2).any(|w| w[1] <= w[0]) {
        return Err(BdfError::InvalidArgument(
            "κ samples must be ascending".into(),
        ));
    }
    let samples = kappas
        .par_iter()
        .map(|&kappa| {
            let values = eigenvalues(&linear_operator(lattice, nu, kappa))?;
            Ok(match nearest_zero(&values, window) {
                Some(c) => CrossingSample {
                    kappa,
                    lambda: c.lambda,
                    gap_margin: c.gap_margin,
                    multiplicity: c.multiplicity(),
                },
                None => CrossingSample {
                    kappa,
                    lambda: f64::NAN,
                    gap_margin: f64::NAN,
                    multiplicity: 0,
                },
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let defined: Vec<&CrossingSample> = samples.iter().filter(|s| s.lambda.is_finite()).collect();
    let mut kappa_c = None;
    let mut monotonic = true;
    let mut max_step: f64 = 0.0;
    for w in defined.windows(2) {
        let (a, b) = (w[0], w[1]);
        max_step = max_step.max((b.lambda - a.lambda).abs());
        if b.lambda > a.lambda {
            monotonic = false;
        }
        if kappa_c.is_none() && a.lambda > 0.0 && b.lambda <= 0.0 {
            let t = a.lambda / (a.lambda - b.lambda);
            kappa_c = Some(a.kappa + t * (b.kappa - a.kappa));
        }
    }
    Ok(CrossingProfile {
        samples,
        kappa_c,
        monotonic,
        max_step,
    })
}

fn nearest_zero(values: &[f64], window: (f64, f64)) -> Option<Cluster> {
    clusters_in_window(values, window.0, window.1)
        .into_iter()
        .min_by(|a, b| a.lambda.abs().total_cmp(&b.lambda.abs()))
}

#[derive(Debug, Clone)]
pub struct Normalization {
    pub nu_scaled: ChargeDensity,
    pub kappa_c0: f64,
    pub bracket: (f64, f64),
    pub lambda_at_root: f64,
    pub evaluations: usize,
}

/// Finds κ_c0 where the eigenvalue nearest zero in the window vanishes and
/// rescales ν by it, so the rescaled problem crosses at κ = 1.
///
/// Bracketing root search: Illinois-modified regula falsi, with a bisection
/// step when the bracket repeatedly fails to halve. Stops once |λ| ≤ 1e-8.
pub fn normalize_crossing(
    lattice: &MomentumLattice,
    nu: &ChargeDensity,
    window: (f64, f64),
    range: (f64, f64),
) -> Result<Normalization> {
    let eval = |kappa: f64| -> Result<f64> {
        let values = eigenvalues(&linear_operator(lattice, nu, kappa))?;
        nearest_zero(&values, window)
            .map(|c| c.lambda)
            .ok_or(BdfError::NoEigenvalue {
                lower: window.0,
                upper: window.1,
            })
    };
    let (mut lo, mut hi) = range;
    let mut f_lo = eval(lo)?;
    let mut f_hi = eval(hi)?;
    let mut evaluations = 2;
    if f_lo.signum() == f_hi.signum() {
        return Err(BdfError::NoSignChange {
            lower: lo,
            upper: hi,
            f_lower: f_lo,
            f_upper: f_hi,
        });
    }
    let (root, value) = bracketed_root(
        &mut lo,
        &mut hi,
        &mut f_lo,
        &mut f_hi,
        1e-8,
        0.0,
        &mut evaluations,
        eval,
    )?;
    Ok(Normalization {
        nu_scaled: nu.scaled(root),
        kappa_c0: root,
        bracket: (lo, hi),
        lambda_at_root: value,
        evaluations,
    })
}

/// Shrinks a sign-changing bracket until |f| ≤ f_tol at the returned point,
/// or the bracket is narrower than x_tol. Regula falsi with the Illinois
/// correction; falls back to bisection when the bracket stalls.
#[allow(clippy::too_many_arguments)]
pub fn bracketed_root<F: FnMut(f64) -> Result<f64>>(
    lo: &mut f64,
    hi: &mut f64,
    f_lo: &mut f64,
    f_hi: &mut f64,
    f_tol: f64,
    x_tol: f64,
    evaluations: &mut usize,
    mut f: F,
) -> Result<(f64, f64)> {
    if f_lo.abs() <= f_tol {
        return Ok((*lo, *f_lo));
    }
    if f_hi.abs() <= f_tol {
        return Ok((*hi, *f_hi));
    }
    let mut side = 0i32;
    let mut width = *hi - *lo;
    let mut slow_steps = 0;
    for _ in 0..200 {
        let interp = (*lo * *f_hi - *hi * *f_lo) / (*f_hi - *f_lo);
        let mid = 0.5 * (*lo + *hi);
        let x = if interp.is_finite() && interp > *lo && interp < *hi {
            interp
        } else {
            mid
        };
        let fx = f(x)?;
        *evaluations += 1;
        if fx.abs() <= f_tol || (*hi - *lo) <= x_tol {
            return Ok((x, fx));
        }
        if fx.signum() == f_lo.signum() {
            *lo = x;
            *f_lo = fx;
            if side == -1 {
                *f_hi *= 0.5;
            }
            side = -1;
        } else {
            *hi = x;
            *f_hi = fx;
            if side == 1 {
                *f_lo *= 0.5;
            }
            side = 1;
        }
        let new_width = *hi - *lo;
        slow_steps = if new_width > 0.5 * width {
            slow_steps + 1
        } else {
            0
        };
        if slow_steps >= 4 {
            // Stalled on one side: bisect.
            slow_steps = 0;
            let m = 0.5 * (*lo + *hi);
            let fm = f(m)?;
            *evaluations += 1;
            if fm.abs() <= f_tol || new_width <= x_tol {
                return Ok((m, fm));
            }
            if fm.signum() == f_lo.signum() {
                *lo = m;
                *f_lo = fm;
            } else {
                *hi = m;
                *f_hi = fm;
            }
            side = 0;
        }
        width = *hi - *lo;
        if width <= x_tol {
            let m = 0.5 * (*lo + *hi);
            return Ok((m, f(m)?));
        }
    }
    let m = 0.5 * (*lo + *hi);
    Ok((m, f(m)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dirac::free_projectors;
    use crate::lattice::{build_lattice, LatticeSpec};

    fn toy() -> MomentumLattice {
        build_lattice(LatticeSpec::new(4, 6.0, 2.0)).unwrap()
    }

    #[test]
    fn free_sea_projection() {
        let lat = toy();
        let h = linear_operator(&lat, &ChargeDensity::zeros(*lat.spec()), 0.0);
        let pr = spectral_projection_with(&h, 0.0, GAP_TOL).unwrap();
        assert_eq!(pr.rank, 2 * lat.len());
        let (_, pm) = free_projectors(&lat);
        assert!((&pr.projector - pm.matrix()).norm_l2() < 1e-12);
        assert!(matches!(
            spectral_projection(&h, 1.0),
            Err(BdfError::FermiDegeneracy { .. })
        ));
    }

    #[test]
    fn diagonal_projection_rank() {
        let mut h = Mat::<Complex64>::zeros(3, 3);
        h[(0, 0)] = Complex64::new(-2.0, 0.0);
        h[(1, 1)] = Complex64::new(-1.0, 0.0);
        h[(2, 2)] = Complex64::new(3.0, 0.0);
        let pr = spectral_projection_with(&h, 0.0, GAP_TOL).unwrap();
        assert_eq!(pr.rank, 2);
        assert!((pr.projector[(2, 2)]).norm() < 1e-15);
        assert!((pr.projector[(0, 0)] - Complex64::new(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn zero_coupling_vacuum_is_zero() {
        let lat = toy();
        let nu = ChargeDensity::gaussian(*lat.spec(), 1.0, 1.0);
        let q = linear_vacuum(&lat, &nu, 0.0, 0.0).unwrap();
        assert!(q.q.norm_l2() < 1e-12);
        assert!(matches!(
            gap_eigenpair(&lat, &nu, 0.0, (-1.0 + 1e-9, 1.0 - 1e-9)),
            Err(BdfError::NoEigenvalue { .. })
        ));
    }

    #[test]
    fn clusters() {
        let v = [-3.0, -0.5, 0.1, 0.1 + 1e-9, 0.3, 2.0];
        let c = clusters_in_window(&v, -0.4, 0.4);
        assert_eq!(c.len(), 2);
        assert_eq!(c[0].multiplicity(), 2);
        assert!((c[0].gap_margin - 0.2).abs() < 1e-8);
        assert!(matches!(
            single_cluster(&v, (-0.4, 0.4)),
            Err(BdfError::MultipleEigenvalues { count: 2, .. })
        ));
        assert_eq!(single_cluster(&v, (0.0, 0.2)).unwrap().first, 2);
    }

    #[test]
    fn root_finder_on_cubic() {
        let f = |x: f64| Ok::<f64, BdfError>(x * x * x - 2.0 * x - 5.0);
        let (mut lo, mut hi) = (2.0, 3.0);
        let (mut flo, mut fhi) = (f(lo).unwrap(), f(hi).unwrap());
        let mut n = 0;
        let (x, fx) =
            bracketed_root(&mut lo, &mut hi, &mut flo, &mut fhi, 1e-12, 0.0, &mut n, f).unwrap();
        assert!(fx.abs() <= 1e-12);
        assert!((x - 2.0945514815423265).abs() < 1e-12);
        assert!(n < 15, "{n} evaluations");
    }
}
