//! The eight acceptance criteria at their stated tolerances, one test each.
//!
//! Checks run one at a time behind a lock so the reported runtimes are not
//! inflated by sibling tests, and each writes a PASS/FAIL line straight to
//! stdout (bypassing the harness capture) so the table shows up in a plain
//! `cargo test` log.

use std::io::Write;
use std::sync::{Mutex, OnceLock};

use bdf_vacuum::suite::{
    alpha_zero_exactness, bound_suite, contraction_trend, expansion_trend, polarization_identity,
    projector_invariants, screening_constant, threshold_shift, CanonicalProblem, Outcome,
    SuiteOptions,
};

static SERIAL: Mutex<()> = Mutex::new(());
static PROBLEM: OnceLock<CanonicalProblem> = OnceLock::new();

fn options() -> SuiteOptions {
    SuiteOptions::default()
}

fn problem() -> &'static CanonicalProblem {
    PROBLEM.get_or_init(|| {
        let o = options();
        CanonicalProblem::build(o.lattice, o.width, (o.mu_minus, o.mu_plus))
            .expect("canonical problem")
    })
}

fn report(run: impl FnOnce() -> Outcome) {
    let guard = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let outcome = run();
    drop(guard);
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{outcome}");
    for (k, v) in outcome.metrics.iter().skip(6) {
        let _ = writeln!(out, "    {k} = {v:.6e}");
    }
    for n in &outcome.notes {
        let _ = writeln!(out, "    {n}");
    }
    let _ = out.flush();
    assert!(outcome.passed, "{outcome}\n{}", outcome.notes.join("\n"));
}

#[test]
fn criterion_1_screening_constant() {
    report(|| screening_constant(&options()));
}

#[test]
fn criterion_2_polarization_identity() {
    report(|| polarization_identity(&options()));
}

#[test]
fn criterion_3_bound_suite() {
    report(|| bound_suite(&options()));
}

#[test]
fn criterion_4_projector_and_charge() {
    report(|| {
        let p = problem();
        projector_invariants(p, &options())
    });
}

#[test]
fn criterion_5_alpha_zero_exactness() {
    report(|| {
        let p = problem();
        alpha_zero_exactness(p, &options())
    });
}

#[test]
fn criterion_6_contraction_trend() {
    report(|| {
        let p = problem();
        contraction_trend(p, &options())
    });
}

#[test]
fn criterion_7_expansion_trend() {
    report(|| {
        let p = problem();
        expansion_trend(p, &options())
    });
}

#[test]
fn criterion_8_threshold_shift() {
    report(|| {
        let p = problem();
        threshold_shift(p, &options())
    });
}
