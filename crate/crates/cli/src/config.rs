//! Run configuration. Every table and key is optional except inside
//! `[lattice]`, which must be given whole when present.

use std::path::{Path, PathBuf};

use bdf_vacuum::lattice::LatticeSpec;
use bdf_vacuum::pairprod::PairSettings;
use bdf_vacuum::quadrature::QuadratureSettings;
use bdf_vacuum::scf::{Initialization, Preconditioner, ScfConfig};
use bdf_vacuum::spectral::GAP_TOL;
use bdf_vacuum::suite::SuiteOptions;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Seed for every randomized input (bound suite samples).
    pub seed: u64,
    pub lattice: LatticeSpec,
    pub density: DensityConfig,
    pub physics: PhysicsConfig,
    pub solver: SolverConfig,
    pub screening: ScreeningConfig,
    pub suite: SuiteConfig,
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DensityKind {
    Gaussian,
    File,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DensityConfig {
    pub kind: DensityKind,
    /// Total charge of the Gaussian. Ignored when `normalize` is set.
    pub depth: f64,
    pub width: f64,
    /// Whitespace-separated real samples on the 2n×2n×2n position grid,
    /// last axis fastest. Relative paths resolve against the config file.
    pub path: Option<PathBuf>,
    /// Rescale ν so the eigenvalue nearest zero in (mu_minus, mu_plus)
    /// crosses zero at κ = 1.
    pub normalize: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhysicsConfig {
    pub alpha: f64,
    pub kappa: f64,
    /// κ grid for scans, ascending.
    pub kappas: Vec<f64>,
    pub mu: f64,
    pub mu_minus: f64,
    pub mu_plus: f64,
    /// α ladder for the critical-coupling search; empty skips it.
    pub alphas: Vec<f64>,
    pub bracket: (f64, f64),
    /// Λ ladder for `screening-table`; empty means the lattice cutoff.
    pub cutoffs: Vec<f64>,
    /// κ = 1 ± epsilon is where the Fermi levels are validated.
    pub epsilon: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub damping: f64,
    pub x_tol: f64,
    pub max_iters: usize,
    pub preconditioner: Preconditioner,
    pub init: Initialization,
    pub gap_tol: f64,
    pub kappa_tol: f64,
    pub quadrature: QuadratureSettings,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScreeningConfig {
    /// Largest tabulated radius as a multiple of Λ.
    pub k_max_over_cutoff: f64,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SuiteConfig {
    pub criteria: Vec<usize>,
    pub random_inputs: usize,
    pub kernel_pairs: usize,
    pub enforce_budgets: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub directory: PathBuf,
    pub formats: Vec<Format>,
    /// Also write the vacuum state(s) as binary state files.
    pub save_state: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 20_240_601,
            lattice: LatticeSpec::new(8, 12.0, 2.0),
            density: DensityConfig::default(),
            physics: PhysicsConfig::default(),
            solver: SolverConfig::default(),
            screening: ScreeningConfig::default(),
            suite: SuiteConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

impl Default for DensityConfig {
    fn default() -> Self {
        DensityConfig {
            kind: DensityKind::Gaussian,
            depth: 1.0,
            width: 0.5,
            path: None,
            normalize: true,
        }
    }
}

impl Default for PhysicsConfig {
    fn default() -> Self {
        PhysicsConfig {
            alpha: 0.0,
            kappa: 1.0,
            kappas: vec![0.9, 0.95, 1.0, 1.05, 1.1],
            mu: 0.4,
            mu_minus: -0.4,
            mu_plus: 0.4,
            alphas: Vec::new(),
            bracket: (0.95, 1.05),
            cutoffs: Vec::new(),
            epsilon: 0.15,
        }
    }
}

impl Default for SolverConfig {
    fn default() -> Self {
        let scf = ScfConfig::default();
        SolverConfig {
            damping: scf.damping,
            x_tol: scf.x_tol,
            max_iters: scf.max_iters,
            preconditioner: scf.preconditioner,
            init: scf.init,
            gap_tol: GAP_TOL,
            kappa_tol: 1e-4,
            quadrature: QuadratureSettings::default(),
        }
    }
}

impl Default for ScreeningConfig {
    fn default() -> Self {
        ScreeningConfig {
            k_max_over_cutoff: 2.0,
            points: 101,
        }
    }
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            criteria: (1..=8).collect(),
            random_inputs: 50,
            kernel_pairs: 10_000,
            enforce_budgets: true,
        }
    }
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            directory: PathBuf::from("bdf-out"),
            formats: vec![Format::Csv, Format::Json],
            save_state: false,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut config = Self::parse(&text)?;
        if let Some(p) = config.density.path.as_mut() {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(config)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let config: RunConfig =
            toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |key: &str, msg: String| Err(CliError::Config(format!("{key}: {msg}")));
        self.lattice
            .validate()
            .map_err(|e| CliError::Config(format!("lattice: {e}")))?;
        let d = &self.density;
        if !(d.width > 0.0 && d.width.is_finite()) {
            return bad(
                "density.width",
                format!("must be positive, got {}", d.width),
            );
        }
        if !d.depth.is_finite() {
            return bad("density.depth", format!("must be finite, got {}", d.depth));
        }
        if d.kind == DensityKind::File && d.path.is_none() {
            return bad(
                "density.path",
                "required when density.kind = \"file\"".into(),
            );
        }
        let p = &self.physics;
        if p.kappas.is_empty() || p.kappas.windows(2).any(|w| w[1] <= w[0]) {
            return bad(
                "physics.kappas",
                "must be a non-empty ascending list".into(),
            );
        }
        if !(p.bracket.0 < p.bracket.1) {
            return bad(
                "physics.bracket",
                format!("need lower < upper, got {:?}", p.bracket),
            );
        }
        if p.cutoffs.iter().any(|&c| !(c > 0.0 && c.is_finite())) {
            return bad("physics.cutoffs", "every cutoff must be positive".into());
        }
        self.scf_config(p.alpha, p.kappa, p.mu)
            .validate()
            .map_err(|e| CliError::Config(format!("physics/solver: {e}")))?;
        self.pair_settings(0.0)
            .validate()
            .map_err(|e| CliError::Config(format!("physics/solver: {e}")))?;
        for &a in &p.alphas {
            bdf_vacuum::energy::check_alpha(a)
                .map_err(|e| CliError::Config(format!("physics.alphas: {e}")))?;
        }
        if self.screening.points < 2 || !(self.screening.k_max_over_cutoff > 0.0) {
            return bad(
                "screening",
                "need points >= 2 and k_max_over_cutoff > 0".into(),
            );
        }
        if let Some(&c) = self.suite.criteria.iter().find(|&&c| !(1..=8).contains(&c)) {
            return bad(
                "suite.criteria",
                format!("no criterion {c}; valid ids are 1 to 8"),
            );
        }
        if self.output.formats.is_empty() {
            return bad("output.formats", "at least one format is required".into());
        }
        Ok(())
    }

    pub fn scf_config(&self, alpha: f64, kappa: f64, mu: f64) -> ScfConfig {
        let s = &self.solver;
        ScfConfig {
            alpha,
            kappa,
            mu,
            max_iters: s.max_iters,
            x_tol: s.x_tol,
            damping: s.damping,
            preconditioner: s.preconditioner,
            init: s.init,
            gap_tol: s.gap_tol,
            quadrature: s.quadrature,
        }
    }

    pub fn pair_settings(&self, alpha: f64) -> PairSettings {
        let p = &self.physics;
        PairSettings {
            mu_minus: p.mu_minus,
            mu_plus: p.mu_plus,
            scf: self.scf_config(alpha, p.kappa, p.mu_plus),
            kappa_tol: self.solver.kappa_tol,
            epsilon: p.epsilon,
        }
    }

    pub fn suite_options(&self) -> SuiteOptions {
        SuiteOptions {
            lattice: self.lattice,
            width: self.density.width,
            mu_minus: self.physics.mu_minus,
            mu_plus: self.physics.mu_plus,
            alphas: if self.physics.alphas.is_empty() {
                SuiteOptions::default().alphas
            } else {
                self.physics.alphas.clone()
            },
            kappas: SuiteOptions::default().kappas,
            seed: self.seed,
            random_inputs: self.suite.random_inputs,
            kernel_pairs: self.suite.kernel_pairs,
            enforce_budgets: self.suite.enforce_budgets,
        }
    }

    pub fn wants(&self, f: Format) -> bool {
        self.output.formats.contains(&f)
    }
}
