use std::time::Instant;

use bdf_vacuum::coulomb::{b_constant_asymptotic, ChargeDensity, ScreeningTable};
use bdf_vacuum::energy::bdf_energy;
use bdf_vacuum::io::save_state;
use bdf_vacuum::lattice::{build_lattice, MomentumLattice};
use bdf_vacuum::pairprod::{critical_coupling, f_scan, validate_fermi_levels};
use bdf_vacuum::scf::{scf_solve, Preconditioner};
use bdf_vacuum::spectral::{crossing_scan, linear_vacuum, normalize_crossing};
use bdf_vacuum::states::{admissibility_check, generalized_trace};
use bdf_vacuum::suite::{locate_crossing, run_suite};
use serde_json::{json, Value};

use crate::config::{DensityKind, Format, RunConfig};
use crate::output::{field, Cell, Emitter, Field};
use crate::CliError;

/// The external density actually used, and how it was obtained.
pub struct Problem {
    pub lattice: MomentumLattice,
    pub nu: ChargeDensity,
    /// κ_c of the unscaled density when it was normalized, else NaN.
    pub raw_crossing: f64,
}

impl Problem {
    pub fn build(config: &RunConfig) -> Result<Self, CliError> {
        let lattice = build_lattice(config.lattice)?;
        let d = &config.density;
        let base = match d.kind {
            DensityKind::Gaussian => {
                let charge = if d.normalize { 1.0 } else { d.depth };
                ChargeDensity::gaussian(config.lattice, charge, d.width)
            }
            DensityKind::File => {
                let path = d.path.as_ref().expect("validated");
                let text = std::fs::read_to_string(path).map_err(|e| {
                    CliError::Config(format!("density.path: {}: {e}", path.display()))
                })?;
                let values = text
                    .split_whitespace()
                    .map(|t| t.parse::<f64>())
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|e| {
                        CliError::Config(format!("density.path: {}: {e}", path.display()))
                    })?;
                ChargeDensity::from_position_values(config.lattice, &values)
                    .map_err(|e| CliError::Config(format!("density.path: {e}")))?
            }
        };
        if !d.normalize {
            return Ok(Problem {
                lattice,
                nu: base,
                raw_crossing: f64::NAN,
            });
        }
        let window = (config.physics.mu_minus, config.physics.mu_plus);
        let bracket = locate_crossing(&lattice, &base, window, 0.5, 60.0)?;
        let norm = normalize_crossing(&lattice, &base, window, bracket)?;
        Ok(Problem {
            lattice,
            nu: norm.nu_scaled,
            raw_crossing: norm.kappa_c0,
        })
    }

    fn summary(&self) -> Value {
        json!({
            "total_charge": self.nu.total_charge(),
            "raw_crossing": finite_or_null(self.raw_crossing),
            "dimension": self.lattice.dim(),
            "momenta": self.lattice.len(),
        })
    }
}

fn finite_or_null(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        Value::Null
    }
}

/// serde_json writes NaN as null; keep that explicit for nested structs.
fn to_json<T: serde::Serialize>(x: &T) -> Value {
    serde_json::to_value(x).unwrap_or(Value::Null)
}

const PROBLEM_FIELDS: [Field; 4] = [
    field("result.problem.total_charge", "e", "total charge of the external density nu used in the run"),
    field("result.problem.raw_crossing", "e", "charge of the unscaled density at which its eigenvalue crosses zero (null when not normalized)"),
    field("result.problem.dimension", "", "dimension 4m of the cutoff Hilbert space"),
    field("result.problem.momenta", "", "number m of lattice momenta inside the cutoff ball"),
];

const SCREENING_COLUMNS: [Field; 3] = [
    field("k", "m_e c / hbar", "momentum radius"),
    field("B_Lambda_k", "", "screening function B_Lambda(k)"),
    field("U_Lambda_k", "", "B_Lambda(0) - B_Lambda(k)"),
];

pub fn screening_table(config: &RunConfig, out: &mut Emitter) -> Result<i32, CliError> {
    let cutoffs = if config.physics.cutoffs.is_empty() {
        vec![config.lattice.cutoff]
    } else {
        config.physics.cutoffs.clone()
    };
    let q = config.solver.quadrature;
    let mut summary = Vec::new();
    for (i, &cutoff) in cutoffs.iter().enumerate() {
        let k_max = config.screening.k_max_over_cutoff * cutoff;
        let n = config.screening.points;
        let radii: Vec<f64> = (0..n).map(|s| k_max * s as f64 / (n - 1) as f64).collect();
        let table = ScreeningTable::for_radii(cutoff, &radii, q)?;
        if config.wants(Format::Csv) {
            let rows: Vec<Vec<Cell>> = table
                .entries
                .iter()
                .map(|e| vec![Cell::F(e.k), Cell::F(e.b), Cell::F(e.u)])
                .collect();
            let meta = [
                ("cutoff", format!("{cutoff:?}")),
                ("b_lambda", format!("{:?}", table.b_lambda)),
                ("abs_tol", format!("{:?}", q.abs_tol)),
                ("rel_tol", format!("{:?}", q.rel_tol)),
                ("max_intervals", q.max_intervals.to_string()),
            ];
            out.csv(
                &format!("screening_{i}.csv"),
                &meta,
                &SCREENING_COLUMNS,
                &rows,
            )?;
        }
        summary.push(json!({
            "cutoff": cutoff,
            "b_lambda": table.b_lambda,
            "b_lambda_asymptotic": b_constant_asymptotic(cutoff),
            "file": format!("screening_{i}.csv"),
            "entries": table.entries.iter().map(|e| [e.k, e.b, e.u]).collect::<Vec<_>>(),
        }));
    }
    if config.wants(Format::Json) {
        out.json(
            "screening.json",
            &[
                field(
                    "result.tables[].cutoff",
                    "m_e c / hbar",
                    "ultraviolet cutoff Lambda",
                ),
                field(
                    "result.tables[].b_lambda",
                    "",
                    "B_Lambda = B_Lambda(0) by quadrature",
                ),
                field(
                    "result.tables[].b_lambda_asymptotic",
                    "",
                    "large-Lambda expansion of B_Lambda",
                ),
                field(
                    "result.tables[].entries",
                    "",
                    "rows [k, B_Lambda(k), U_Lambda(k)]",
                ),
            ],
            json!({ "tables": summary }),
        )?;
    }
    Ok(0)
}

const SCAN_COLUMNS: [Field; 4] = [
    field(
        "kappa",
        "",
        "coupling kappa multiplying the external density",
    ),
    field(
        "lambda",
        "m_e c^2",
        "eigenvalue of D^{kappa nu} nearest zero in (mu_minus, mu_plus); NaN if none",
    ),
    field(
        "gap_margin",
        "m_e c^2",
        "distance from that cluster to the nearest other eigenvalue",
    ),
    field(
        "multiplicity",
        "",
        "size of the eigenvalue cluster (0 if none)",
    ),
];

pub fn linear_scan(config: &RunConfig, out: &mut Emitter) -> Result<i32, CliError> {
    let problem = Problem::build(config)?;
    let p = &config.physics;
    let profile = crossing_scan(
        &problem.lattice,
        &problem.nu,
        &p.kappas,
        (p.mu_minus, p.mu_plus),
    )?;
    let vacuum = linear_vacuum(&problem.lattice, &problem.nu, p.kappa, p.mu)?;
    let energy = bdf_energy(&problem.lattice, &vacuum, &problem.nu, 0.0, p.kappa)?;
    let charge = generalized_trace(&problem.lattice, &vacuum.q);
    let admissibility = admissibility_check(&problem.lattice, &vacuum.q);
    if config.wants(Format::Csv) {
        let rows: Vec<Vec<Cell>> = profile
            .samples
            .iter()
            .map(|s| {
                vec![
                    Cell::F(s.kappa),
                    Cell::F(s.lambda),
                    Cell::F(s.gap_margin),
                    Cell::I(s.multiplicity),
                ]
            })
            .collect();
        let meta = [
            ("mu_minus", format!("{:?}", p.mu_minus)),
            ("mu_plus", format!("{:?}", p.mu_plus)),
        ];
        out.csv("linear_scan.csv", &meta, &SCAN_COLUMNS, &rows)?;
    }
    if config.output.save_state {
        save_state(&out.path("linear_vacuum.state"), &vacuum)?;
        out.binary(
            "linear_vacuum.state",
            "linear vacuum Q_lin at (physics.kappa, physics.mu)",
        );
    }
    if config.wants(Format::Json) {
        let mut fields = PROBLEM_FIELDS.to_vec();
        fields.extend([
            field("result.profile.samples", "", "the rows of linear_scan.csv"),
            field(
                "result.profile.kappa_c",
                "",
                "interpolated zero crossing of lambda (null if none)",
            ),
            field(
                "result.profile.monotonic",
                "",
                "lambda nonincreasing along the grid",
            ),
            field(
                "result.profile.max_step",
                "m_e c^2",
                "largest |delta lambda| between neighbouring samples",
            ),
            field("result.vacuum.kappa", "", "kappa of the linear vacuum"),
            field(
                "result.vacuum.mu",
                "m_e c^2",
                "Fermi level of the linear vacuum",
            ),
            field("result.vacuum.charge", "e", "generalized trace tr0(Q)"),
            field(
                "result.vacuum.energy",
                "m_e c^2",
                "energy breakdown at alpha = 0",
            ),
            field(
                "result.vacuum.admissibility",
                "",
                "projector and spectral residuals of Q",
            ),
        ]);
        out.json(
            "linear_scan.json",
            &fields,
            json!({
                "problem": problem.summary(),
                "profile": to_json(&profile),
                "vacuum": {
                    "kappa": p.kappa,
                    "mu": p.mu,
                    "charge": charge,
                    "energy": to_json(&energy),
                    "admissibility": to_json(&admissibility),
                },
            }),
        )?;
    }
    Ok(0)
}

fn screening_for(config: &RunConfig, alpha: f64) -> Result<Option<ScreeningTable>, CliError> {
    if alpha > 0.0 && config.solver.preconditioner == Preconditioner::Dielectric {
        Ok(Some(ScreeningTable::for_lattice(
            &config.lattice,
            config.solver.quadrature,
        )?))
    } else {
        Ok(None)
    }
}

pub fn scf(config: &RunConfig, out: &mut Emitter) -> Result<i32, CliError> {
    let problem = Problem::build(config)?;
    let p = &config.physics;
    let screening = screening_for(config, p.alpha)?;
    let result = scf_solve(
        &problem.lattice,
        &problem.nu,
        &config.scf_config(p.alpha, p.kappa, p.mu),
        screening.as_ref(),
    )?;
    let charge = generalized_trace(&problem.lattice, &result.state.q);
    let admissibility = admissibility_check(&problem.lattice, &result.state.q);
    if config.wants(Format::Csv) {
        let rows: Vec<Vec<Cell>> = result
            .residual_history
            .iter()
            .map(|&(i, r)| vec![Cell::I(i), Cell::F(r)])
            .collect();
        out.csv(
            "scf_residuals.csv",
            &[("converged", result.converged.to_string())],
            &[
                field("iteration", "", "iteration number, from 1"),
                field(
                    "residual",
                    "",
                    "X-norm of the increment of (Q, rho) at that iteration",
                ),
            ],
            &rows,
        )?;
    }
    if config.output.save_state {
        save_state(&out.path("scf.state"), &result.state)?;
        out.binary(
            "scf.state",
            "converged (or best) vacuum Q at (physics.alpha, physics.kappa, physics.mu)",
        );
    }
    if config.wants(Format::Json) {
        let mut fields = PROBLEM_FIELDS.to_vec();
        fields.extend([
            field("result.converged", "", "final residual below solver.x_tol"),
            field("result.iterations", "", "number of iterations run"),
            field("result.final_residual", "", "last residual"),
            field(
                "result.contraction_estimate",
                "",
                "geometric ratio fitted to the residual history",
            ),
            field(
                "result.fermi_gap",
                "m_e c^2",
                "distance from mu to the spectrum of the last mean-field operator",
            ),
            field("result.charge", "e", "generalized trace tr0(Q)"),
            field(
                "result.energy",
                "m_e c^2",
                "energy breakdown: kinetic, external, direct, exchange, total",
            ),
            field(
                "result.admissibility",
                "",
                "projector and spectral residuals of Q",
            ),
            field("result.residual_history", "", "pairs [iteration, residual]"),
        ]);
        out.json(
            "scf.json",
            &fields,
            json!({
                "problem": problem.summary(),
                "converged": result.converged,
                "iterations": result.residual_history.len(),
                "final_residual": result.final_residual(),
                "contraction_estimate": finite_or_null(result.contraction_estimate),
                "fermi_gap": result.fermi_gap,
                "charge": charge,
                "energy": to_json(&result.energy),
                "admissibility": to_json(&admissibility),
                "residual_history": result.residual_history,
            }),
        )?;
    }
    Ok(if result.converged { 0 } else { 3 })
}

const PAIR_COLUMNS: [Field; 12] = [
    field("kappa", "", "coupling kappa"),
    field("alpha", "", "fine-structure constant alpha"),
    field(
        "f_value",
        "m_e c^2",
        "F = E(Q+) - E(Q-), energy to add the electrons of the crossing cluster",
    ),
    field(
        "lambda_ren",
        "m_e c^2",
        "eigenvalue of D^{kappa nu_ren} in (mu_minus, mu_plus); NaN if none",
    ),
    field("multiplicity", "", "size d of that eigenvalue cluster"),
    field("deviation", "m_e c^2", "F/d - lambda_ren (F when d = 0)"),
    field("charge_plus", "e", "tr0 of the vacuum at mu_plus"),
    field("charge_minus", "e", "tr0 of the vacuum at mu_minus"),
    field("converged_plus", "", "1 if the mu_plus run converged"),
    field("converged_minus", "", "1 if the mu_minus run converged"),
    field("iterations_plus", "", "iterations of the mu_plus run"),
    field("iterations_minus", "", "iterations of the mu_minus run"),
];

pub fn pair_production(config: &RunConfig, out: &mut Emitter) -> Result<i32, CliError> {
    let problem = Problem::build(config)?;
    let p = &config.physics;
    let settings = config.pair_settings(p.alpha);
    validate_fermi_levels(&problem.lattice, &problem.nu, &settings)?;
    let screening = screening_for(
        config,
        p.alpha.max(p.alphas.iter().cloned().fold(0.0, f64::max)),
    )?;
    let points = f_scan(
        &problem.lattice,
        &problem.nu,
        &p.kappas,
        p.alpha,
        &settings,
        screening.as_ref(),
    )?;
    let mut reports = Vec::new();
    for &alpha in &p.alphas {
        reports.push(critical_coupling(
            &problem.lattice,
            &problem.nu,
            alpha,
            p.bracket,
            &config.pair_settings(alpha),
            screening.as_ref(),
        )?);
    }
    if config.wants(Format::Csv) {
        let rows: Vec<Vec<Cell>> = points
            .iter()
            .map(|q| {
                vec![
                    Cell::F(q.kappa),
                    Cell::F(q.alpha),
                    Cell::F(q.f_value),
                    Cell::F(q.lambda_ren),
                    Cell::I(q.multiplicity),
                    Cell::F(q.deviation),
                    Cell::F(q.charge_plus),
                    Cell::F(q.charge_minus),
                    Cell::B(q.converged_plus),
                    Cell::B(q.converged_minus),
                    Cell::I(q.iterations_plus),
                    Cell::I(q.iterations_minus),
                ]
            })
            .collect();
        let meta = [
            ("cutoff", format!("{:?}", config.lattice.cutoff)),
            ("mu_minus", format!("{:?}", p.mu_minus)),
            ("mu_plus", format!("{:?}", p.mu_plus)),
        ];
        out.csv("pair_production.csv", &meta, &PAIR_COLUMNS, &rows)?;
    }
    if config.wants(Format::Json) {
        let mut fields = PROBLEM_FIELDS.to_vec();
        fields.extend([
            field(
                "result.points",
                "",
                "the rows of pair_production.csv, plus an error message per failed point",
            ),
            field(
                "result.critical_coupling[].kappa_c",
                "",
                "root of kappa -> F(kappa, alpha)",
            ),
            field(
                "result.critical_coupling[].kappa_c0",
                "",
                "the same root at alpha = 0",
            ),
            field("result.critical_coupling[].ratio", "", "kappa_c / kappa_c0"),
            field(
                "result.critical_coupling[].b_lambda",
                "",
                "continuum B_Lambda",
            ),
            field(
                "result.critical_coupling[].predicted_ratio",
                "",
                "1 + alpha B_Lambda",
            ),
            field(
                "result.critical_coupling[].asymptotic_ratio",
                "",
                "1 + (2/3pi) alpha log Lambda",
            ),
            field(
                "result.critical_coupling[].evaluations",
                "",
                "evaluations of F per root",
            ),
        ]);
        out.json(
            "pair_production.json",
            &fields,
            json!({
                "problem": problem.summary(),
                "points": to_json(&points),
                "critical_coupling": to_json(&reports),
            }),
        )?;
    }
    let failed = points.iter().filter(|q| !q.ok()).count();
    Ok(if failed == 0 { 0 } else { 3 })
}

pub fn invariant_suite(config: &RunConfig, out: &mut Emitter) -> Result<i32, CliError> {
    let options = config.suite_options();
    let start = Instant::now();
    let outcomes = run_suite(&options, &config.suite.criteria)?;
    out.timings
        .push(("suite".into(), start.elapsed().as_secs_f64()));
    println!(
        "{:<3} {:<45} {:<6} {:>9} {:>9}",
        "id", "criterion", "result", "seconds", "budget"
    );
    for o in &outcomes {
        println!(
            "{:<3} {:<45} {:<6} {:>9.1} {:>9.0}",
            o.id,
            o.title,
            if o.passed { "PASS" } else { "FAIL" },
            o.seconds,
            o.budget_seconds
        );
        for note in &o.notes {
            println!("    {note}");
        }
        out.timings.push((format!("criterion {}", o.id), o.seconds));
    }
    if config.wants(Format::Csv) {
        let rows: Vec<Vec<Cell>> = outcomes
            .iter()
            .map(|o| vec![Cell::I(o.id), Cell::B(o.passed), Cell::F(o.budget_seconds)])
            .collect();
        out.csv(
            "invariant_suite.csv",
            &[],
            &[
                field("id", "", "acceptance criterion number"),
                field("passed", "", "1 if every check of the criterion held"),
                field(
                    "budget_seconds",
                    "s",
                    "runtime budget (timings are in the metadata sidecar)",
                ),
            ],
            &rows,
        )?;
    }
    if config.wants(Format::Json) {
        let results: Vec<Value> = outcomes
            .iter()
            .map(|o| {
                json!({
                    "id": o.id,
                    "title": o.title,
                    "passed": o.passed,
                    "budget_seconds": o.budget_seconds,
                    "metrics": o.metrics.iter().map(|(k, v)| json!({ "name": k, "value": finite_or_null(*v) })).collect::<Vec<_>>(),
                    "notes": o.notes,
                })
            })
            .collect();
        out.json(
            "invariant_suite.json",
            &[
                field("result.criteria[].id", "", "acceptance criterion number"),
                field("result.criteria[].title", "", "short name of the criterion"),
                field("result.criteria[].passed", "", "every check held"),
                field(
                    "result.criteria[].metrics",
                    "",
                    "named measurements in the order taken",
                ),
                field(
                    "result.criteria[].notes",
                    "",
                    "violated checks and diagnostics",
                ),
            ],
            json!({ "criteria": results }),
        )?;
    }
    Ok(if outcomes.iter().all(|o| o.passed) {
        0
    } else {
        2
    })
}
