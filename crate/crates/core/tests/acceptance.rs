//! Acceptance run: one PASS/FAIL line per criterion, with the tolerances of
//! the criteria and the measured values. A failing criterion is printed, not
//! asserted; the test only fails if the harness itself breaks.
//!
//! The lines go to stderr even when test output is captured.

use dbar_core::cli::{Experiment, Outcome};
use dbar_core::domains::ModelKind;
use dbar_core::solver::{ExperimentConfig, FieldKind};
use std::io::Write;
use std::time::Duration;

fn ball() -> ExperimentConfig {
    ExperimentConfig::for_domain(ModelKind::Ball { radius: 1.0 })
}

fn ellipsoid() -> ExperimentConfig {
    ExperimentConfig::for_domain(ModelKind::Ellipsoid { m: 2 })
}

struct Report {
    lines: Vec<String>,
    failed: Vec<usize>,
}

impl Report {
    fn criterion(&mut self, id: usize, title: &str, pass: bool, detail: String) {
        let tag = if pass { "PASS" } else { "FAIL" };
        self.lines.push(format!("[{tag}] {id:>2}. {title}: {detail}"));
        if !pass {
            self.failed.push(id);
        }
    }

    fn info(&mut self, title: &str, pass: bool, detail: String) {
        let tag = if pass { "pass" } else { "fail" };
        self.lines.push(format!("       supplementary ({tag}) {title}: {detail}"));
    }
}

/// Run an experiment; an evaluation error is reported as a missing outcome.
fn run(e: Experiment, cfg: &ExperimentConfig, errors: &mut Vec<String>) -> Option<Outcome> {
    match e.run(cfg) {
        Ok(o) => Some(o),
        Err(err) => {
            errors.push(format!("{}: {err:#}", e.name()));
            None
        }
    }
}

/// `(all named assertions pass, "name = measured (target)" for each)`.
fn check(outcomes: &[&Option<Outcome>], names: &[&str]) -> (bool, String) {
    let mut pass = true;
    let mut parts = Vec::new();
    for o in outcomes {
        let Some(o) = o else {
            return (false, "experiment did not run".into());
        };
        for n in names {
            match o.assertion(n) {
                Some(a) => {
                    pass &= a.pass;
                    let note = a.note.as_deref().map(|t| format!(" [{t}]")).unwrap_or_default();
                    parts.push(format!("{} {}: {:.4e} ({}){note}", o.domain, n, a.measured, a.target));
                }
                None if o.assertions.iter().any(|a| a.name.starts_with(n)) => {
                    for a in o.assertions.iter().filter(|a| a.name.starts_with(n)) {
                        pass &= a.pass;
                        parts.push(format!("{} {}: {:.4e} ({})", o.domain, a.name, a.measured, a.target));
                    }
                }
                None => {
                    pass = false;
                    parts.push(format!("{} {n}: missing", o.domain));
                }
            }
        }
    }
    (pass, parts.join("; "))
}

fn seconds(outcomes: &[&Option<Outcome>]) -> f64 {
    outcomes.iter().filter_map(|o| o.as_ref()).map(|o| o.seconds).sum()
}

fn timed(r: &mut Report, id: usize, title: &str, outcomes: &[&Option<Outcome>], names: &[&str], limit: Duration) {
    let (pass, detail) = check(outcomes, names);
    let t = seconds(outcomes);
    let in_time = t < limit.as_secs_f64();
    r.criterion(id, title, pass && in_time, format!("{detail}; runtime {t:.1} s (< {} s)", limit.as_secs()));
}

#[test]
fn acceptance() {
    let mut errors = Vec::new();
    let mut r = Report { lines: Vec::new(), failed: Vec::new() };
    let (b, e) = (ball(), ellipsoid());

    let forms = run(Experiment::VerifyForms, &b, &mut errors);
    timed(
        &mut r,
        1,
        "form algebra identities on 1000 random cases, error <= 1e-12",
        &[&forms],
        &["(f^g)^T = f^T ^ g^T", "f^B ^ g^B = 0", "f^B ^ g = f^B ^ g^T"],
        Duration::from_secs(5),
    );

    let tau_b = run(Experiment::TauScaling, &b, &mut errors);
    let tau_e = run(Experiment::TauScaling, &e, &mut errors);
    timed(
        &mut r,
        2,
        "tau2 slope 0.5 ± 0.05 (ball), 0.25 ± 0.05 (ellipsoid m=2), eps = 2^-12..2^-4",
        &[&tau_b, &tau_e],
        &["slope of tau2 against eps"],
        Duration::from_secs(120),
    );

    let sup_b = run(Experiment::SupportCalibrate, &b, &mut errors);
    let sup_e = run(Experiment::SupportCalibrate, &e, &mut errors);
    timed(
        &mut r,
        3,
        "support bound: 0 violations on 1e4 pairs, zero margin > 0 on 1e5 far pairs, Leray identity <= 1e-10 on 1e4 pairs",
        &[&sup_b, &sup_e],
        &["support-bound violations", "zero margin over far pairs", "Leray identity residual"],
        Duration::from_secs(300),
    );

    let shell_b = run(Experiment::ShellIntegrals, &b, &mut errors);
    let shell_e = run(Experiment::ShellIntegrals, &e, &mut errors);
    timed(
        &mut r,
        4,
        "shell exponents of |K^T| and |K^B| within 0.1 of 1/m+1 and 2/m (q=1, j=0)",
        &[&shell_b, &shell_e],
        &["epsilon-exponent of |K^T|", "epsilon-exponent of |K^B|"],
        Duration::from_secs(600),
    );

    let weighted = run(Experiment::WeightedEstimates, &b, &mut errors);
    timed(
        &mut r,
        5,
        "weighted dist-exponent at (k,s)=(2,1) on the ball within 0.1 of s+1+1/m-k, gamma variant within 0.15",
        &[&weighted],
        &["dist-exponent at (k,s) = (2,1)", "gamma-power dist-exponent at (k,s) = (2,1)"],
        Duration::from_secs(1200),
    );
    if let Some(w) = &weighted {
        let sup = &w.details["supplementary_k2_s025"];
        let slope = sup["fit"]["slope"].as_f64().unwrap_or(f64::NAN);
        let pred = sup["predicted"].as_f64().unwrap_or(f64::NAN);
        r.info("admissible pair (k,s)=(2,0.25)", (slope - pred).abs() <= 0.1, format!("slope {slope:.3} vs predicted {pred:.3}"));
    }

    let kb = run(Experiment::KernelBounds, &b, &mut errors);
    timed(
        &mut r,
        6,
        "r_1 = 6 (ball), 10 (ellipsoid m=2), gamma_1, exponent identity = 0 exactly",
        &[&kb],
        &["r_1 and gamma_1 on the", "exponent identity vanishes"],
        Duration::from_secs(1),
    );

    let lp = run(Experiment::LpSuite, &b, &mut errors);
    timed(
        &mut r,
        7,
        "LP: moments <= 1e-8, tangential commutator <= 1e-10, Heideman slope <= -M (M = 2, 4), Vandermonde <= 1e-10",
        &[&lp],
        &["moment certificate", "tangential commutator", "Heideman decay slope", "Vandermonde a = (-6, 16, -9)"],
        Duration::from_secs(300),
    );

    let res = run(Experiment::SolveResidual, &b, &mut errors);
    timed(
        &mut r,
        8,
        "manufactured bump solution on the ball: relative sup residual <= 5e-2 (dist >= 0.05), default budget",
        &[&res],
        &["relative sup residual of dbar u - f"],
        Duration::from_secs(1800),
    );
    let mut poly = b.clone();
    poly.field = Some(FieldKind::PolynomialSolution);
    let mut top = b.clone();
    top.q = 2;
    let mut poly_e = e.clone();
    poly_e.field = Some(FieldKind::PolynomialSolution);
    for (label, cfg) in [("ball polynomial", &poly), ("ball q = 2", &top), ("ellipsoid polynomial", &poly_e)] {
        if let Some(o) = run(Experiment::SolveResidual, cfg, &mut errors) {
            let a = o.assertion("relative sup residual of dbar u - f").expect("residual assertion");
            r.info(label, a.pass, format!("{:.3e} ({}), {:.1} s", a.measured, a.target, o.seconds));
        }
    }

    let reg_b = run(Experiment::RegularityGain, &b, &mut errors);
    let reg_e = run(Experiment::RegularityGain, &e, &mut errors);
    timed(
        &mut r,
        9,
        "Holder exponent of u above s+1/2-0.05 (ball), s+1/4-0.05 (ellipsoid m=2), s = 0.3",
        &[&reg_b, &reg_e],
        &["fitted Holder exponent of u"],
        Duration::from_secs(1800),
    );

    timed(
        &mut r,
        10,
        "Schur checker on 100 random kernels, margin >= 0 for (1,1,1), (1,inf,inf), (2,1,2)",
        &[&kb],
        &["Schur margin A - |T|"],
        Duration::from_secs(60),
    );

    let (pass, detail) = check(&[&reg_b], &["Bochner-Martinelli exponent gain"]);
    r.info("Bochner-Martinelli gain >= 0.9", pass, detail);
    let (pass, detail) = check(
        &[&res],
        &["split against unsplit collar integral", "closed-form kernel against exterior-algebra route", "integration by parts against direct"],
    );
    r.info("collar decomposition and integration by parts", pass, detail);

    // written to the stderr handle directly so the report survives output capture
    let mut text = String::from("\nacceptance criteria\n");
    for line in &r.lines {
        text += &format!("{line}\n");
    }
    text += &format!("failed criteria: {:?}\n", r.failed);
    for err in &errors {
        text += &format!("evaluation error: {err}\n");
    }
    std::io::stderr().write_all(text.as_bytes()).expect("report written");
    assert!(errors.is_empty(), "experiments could not be evaluated: {errors:?}");
}
