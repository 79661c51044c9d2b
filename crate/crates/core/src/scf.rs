//! Self-consistent solution of Q = χ_(−∞,μ](D_Q) − P⁰₋ with
//! D_Q = Π_Λ(D⁰ − κV_ν + α(V_ρ − R_Q))Π_Λ.
//!
//! Each step projects exactly (Q is never damped); only the density that
//! feeds V_ρ is mixed, optionally through the vacuum dielectric response
//! (1 + αB_Λ(k))⁻¹.

use faer::Mat;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::coulomb::{coulomb_potential, renormalize_density, ChargeDensity, ScreeningTable};
use crate::dirac::{FreeDirac, LatticeOperator};
use crate::energy::{check_alpha, energy_from_parts, EnergyBreakdown};
use crate::error::{BdfError, Result};
use crate::lattice::MomentumLattice;
use crate::quadrature::QuadratureSettings;
use crate::spectral::{linear_operator, spectral_projection_with, subtract_free_sea, GAP_TOL};
use crate::states::{density_of, exchange_operator, q_norm, Provenance, VacuumState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preconditioner {
    None,
    Dielectric,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Initialization {
    Zero,
    /// Q_lin(κν_ren), the linear vacuum of the renormalized density.
    LinearRenormalized,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScfConfig {
    pub alpha: f64,
    pub kappa: f64,
    pub mu: f64,
    pub max_iters: usize,
    pub x_tol: f64,
    pub damping: f64,
    pub preconditioner: Preconditioner,
    pub init: Initialization,
    /// Minimum distance between μ and the spectrum at every step.
    pub gap_tol: f64,
    pub quadrature: QuadratureSettings,
}

impl Default for ScfConfig {
    fn default() -> Self {
        ScfConfig {
            alpha: 0.0,
            kappa: 1.0,
            mu: 0.4,
            max_iters: 60,
            x_tol: 1e-8,
            damping: 0.7,
            preconditioner: Preconditioner::Dielectric,
            init: Initialization::LinearRenormalized,
            gap_tol: GAP_TOL,
            quadrature: QuadratureSettings::default(),
        }
    }
}

impl ScfConfig {
    pub fn validate(&self) -> Result<()> {
        check_alpha(self.alpha)?;
        let bad = |msg: String| Err(BdfError::InvalidArgument(msg));
        if !self.kappa.is_finite() {
            return bad(format!("kappa must be finite, got {}", self.kappa));
        }
        if !(self.mu > -1.0 && self.mu < 1.0) {
            return bad(format!("mu must lie in (-1, 1), got {}", self.mu));
        }
        if self.max_iters == 0 {
            return bad("max_iters must be positive".into());
        }
        if !(self.x_tol > 0.0) {
            return bad(format!("x_tol must be positive, got {}", self.x_tol));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return bad(format!("damping must lie in (0, 1], got {}", self.damping));
        }
        if !(self.gap_tol >= 0.0) {
            return bad(format!("gap_tol must be >= 0, got {}", self.gap_tol));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct ScfResult {
    pub state: VacuumState,
    /// ρ of the returned Q (not the mixed density).
    pub density: ChargeDensity,
    pub energy: EnergyBreakdown,
    /// (iteration, X-norm of the increment), iterations counted from 1.
    pub residual_history: Vec<(usize, f64)>,
    pub converged: bool,
    /// Geometric ratio fitted to the residual history; NaN with fewer than
    /// two positive residuals.
    pub contraction_estimate: f64,
    /// Distance from μ to the spectrum of the last mean-field operator.
    pub fermi_gap: f64,
}

impl ScfResult {
    pub fn final_residual(&self) -> f64 {
        self.residual_history.last().map_or(f64::NAN, |r| r.1)
    }
}

/// D^{κν} + α(V_ρ − R_Q). At α = 0 no interaction term is assembled and the
/// result is exactly `linear_operator(lattice, nu, kappa)`.
pub fn mean_field_operator(
    lattice: &MomentumLattice,
    q: &Mat<Complex64>,
    rho: &ChargeDensity,
    nu: &ChargeDensity,
    alpha: f64,
    kappa: f64,
) -> Result<LatticeOperator> {
    lattice.ensure_spec(rho.spec())?;
    lattice.ensure_spec(nu.spec())?;
    if q.nrows() != lattice.dim() || q.ncols() != lattice.dim() {
        return Err(BdfError::InvalidArgument(format!(
            "state matrix is {}x{}, lattice dimension {}",
            q.nrows(),
            q.ncols(),
            lattice.dim()
        )));
    }
    Ok(LatticeOperator::from_matrix(mean_field_matrix(
        lattice, q, rho, nu, alpha, kappa,
    )))
}

fn mean_field_matrix(
    lattice: &MomentumLattice,
    q: &Mat<Complex64>,
    rho: &ChargeDensity,
    nu: &ChargeDensity,
    alpha: f64,
    kappa: f64,
) -> Mat<Complex64> {
    let h = linear_operator(lattice, nu, kappa);
    if alpha == 0.0 {
        return h;
    }
    let v = coulomb_potential(rho).operator(lattice);
    let r = exchange_operator(lattice, q);
    Mat::from_fn(h.nrows(), h.ncols(), |i, j| {
        h[(i, j)] + (v[(i, j)] - r[(i, j)]) * alpha
    })
}

/// χ_(−∞,μ](D) − P⁰₋ and its density; also returns the Fermi gap.
fn project(
    lattice: &MomentumLattice,
    h: &Mat<Complex64>,
    mu: f64,
    gap_tol: f64,
) -> Result<(Mat<Complex64>, ChargeDensity, f64)> {
    let proj = spectral_projection_with(h, mu, gap_tol)?;
    let mut q = proj.projector;
    subtract_free_sea(lattice, &mut q);
    let rho = density_of(lattice, &q)?;
    Ok((q, rho, proj.fermi_gap))
}

fn diff(a: &Mat<Complex64>, b: &Mat<Complex64>) -> Mat<Complex64> {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] - b[(i, j)])
}

/// ‖Q − Φ(Q,ρ)‖_𝒬 + ‖ρ − ρ[Φ(Q,ρ)]‖_{L²∩𝒞}, where Φ(Q,ρ) = χ_(−∞,μ](D) − P⁰₋
/// with D the mean-field operator built from (Q, ρ).
#[allow(clippy::too_many_arguments)]
pub fn fixed_point_residual(
    lattice: &MomentumLattice,
    q: &Mat<Complex64>,
    rho: &ChargeDensity,
    nu: &ChargeDensity,
    alpha: f64,
    kappa: f64,
    mu: f64,
) -> Result<f64> {
    check_alpha(alpha)?;
    let h = mean_field_operator(lattice, q, rho, nu, alpha, kappa)?.into_matrix();
    let (q_new, rho_new, _) = project(lattice, &h, mu, GAP_TOL)?;
    Ok(q_norm(lattice, &diff(q, &q_new)) + rho.sub(&rho_new).l2c_norm())
}

/// Starting point chosen by `config.init`.
pub fn initial_state(
    lattice: &MomentumLattice,
    nu: &ChargeDensity,
    config: &ScfConfig,
) -> Result<(Mat<Complex64>, ChargeDensity)> {
    match config.init {
        Initialization::Zero => Ok((
            Mat::zeros(lattice.dim(), lattice.dim()),
            ChargeDensity::zeros(*lattice.spec()),
        )),
        Initialization::LinearRenormalized => {
            let nu_ren =
                renormalize_density(nu, config.alpha, lattice.cutoff(), &config.quadrature)?;
            let h = linear_operator(lattice, &nu_ren, config.kappa);
            let (q, rho, _) = project(lattice, &h, config.mu, config.gap_tol)?;
            Ok((q, rho))
        }
    }
}

/// Runs the iteration from `config.init`. The screening table is only used
/// with the dielectric preconditioner; it is built on demand when absent.
pub fn scf_solve(
    lattice: &MomentumLattice,
    nu: &ChargeDensity,
    config: &ScfConfig,
    screening: Option<&ScreeningTable>,
) -> Result<ScfResult> {
    config.validate()?;
    let start = initial_state(lattice, nu, config)?;
    scf_solve_from(lattice, nu, config, screening, start)
}

/// Runs the iteration from an explicit (Q, ρ).
pub fn scf_solve_from(
    lattice: &MomentumLattice,
    nu: &ChargeDensity,
    config: &ScfConfig,
    screening: Option<&ScreeningTable>,
    start: (Mat<Complex64>, ChargeDensity),
) -> Result<ScfResult> {
    config.validate()?;
    lattice.ensure_spec(nu.spec())?;
    let free = FreeDirac::new(lattice);
    let wrap = |iteration: usize| {
        move |e: BdfError| BdfError::Scf {
            iteration,
            source: Box::new(e),
        }
    };

    if config.alpha == 0.0 {
        // The map does not depend on (Q, ρ): one projection is the fixed point.
        let h = linear_operator(lattice, nu, config.kappa);
        let (q, rho, gap) = project(lattice, &h, config.mu, config.gap_tol).map_err(wrap(1))?;
        let energy = energy_from_parts(&free, &q, &rho, None, nu, 0.0, config.kappa);
        return Ok(ScfResult {
            state: VacuumState::new(lattice, q, config.mu, Provenance::Scf)?,
            density: rho,
            energy,
            residual_history: vec![(1, 0.0)],
            converged: true,
            contraction_estimate: 0.0,
            fermi_gap: gap,
        });
    }

    let owned_table;
    let table = match (config.preconditioner, screening) {
        (Preconditioner::None, _) => None,
        (Preconditioner::Dielectric, Some(t)) => Some(t),
        (Preconditioner::Dielectric, None) => {
            owned_table = ScreeningTable::for_lattice(lattice.spec(), config.quadrature)?;
            Some(&owned_table)
        }
    };

    let (mut q, mut rho) = start;
    lattice.ensure_spec(rho.spec())?;
    let mut history = Vec::new();
    let mut best: Option<(f64, Mat<Complex64>, f64)> = None;
    let mut converged = false;
    let mut gap = f64::NAN;

    for it in 1..=config.max_iters {
        let h = mean_field_matrix(lattice, &q, &rho, nu, config.alpha, config.kappa);
        let (q_new, rho_raw, g) =
            project(lattice, &h, config.mu, config.gap_tol).map_err(wrap(it))?;
        gap = g;
        let step = rho_raw.sub(&rho);
        let step = match table {
            Some(t) => t.dielectric_inverse(&step, config.alpha),
            None => step,
        };
        let rho_new = rho.axpy(config.damping, &step);
        let res = q_norm(lattice, &diff(&q_new, &q)) + rho_new.sub(&rho).l2c_norm();
        history.push((it, res));
        q = q_new;
        rho = rho_new;
        if best.as_ref().is_none_or(|b| res < b.0) {
            best = Some((res, q.clone(), gap));
        }
        if !res.is_finite() {
            return Err(wrap(it)(BdfError::NonFinite("SCF residual".into())));
        }
        if res <= config.x_tol {
            converged = true;
            break;
        }
    }

    if !converged {
        if let Some((_, bq, bg)) = best {
            q = bq;
            gap = bg;
        }
    }
    let density = density_of(lattice, &q)?;
    let r = exchange_operator(lattice, &q);
    let energy = energy_from_parts(
        &free,
        &q,
        &density,
        Some(&r),
        nu,
        config.alpha,
        config.kappa,
    );
    let contraction_estimate = contraction_fit(&history);
    Ok(ScfResult {
        state: VacuumState::new(lattice, q, config.mu, Provenance::Scf)?,
        density,
        energy,
        residual_history: history,
        converged,
        contraction_estimate,
        fermi_gap: gap,
    })
}

/// exp of the least-squares slope of log(residual) against iteration,
/// skipping a burn-in of three iterations when at least three points remain.
pub fn contraction_fit(history: &[(usize, f64)]) -> f64 {
    let pts: Vec<(f64, f64)> = history
        .iter()
        .filter(|r| r.1 > 0.0 && r.1.is_finite())
        .map(|r| (r.0 as f64, r.1.ln()))
        .collect();
    let pts = if pts.len() >= 6 { &pts[3..] } else { &pts[..] };
    if pts.len() < 2 {
        return f64::NAN;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    (sxy / sxx).exp()
}
