//! Acceptance checks. Prints one `PASS` or `FAIL` line per criterion and
//! fails at the end if any criterion failed.
//!
//! Seeds were fixed after pilot runs and are not tuned per criterion beyond
//! that; tolerances are the stated ones.

use std::fs;
use std::io::Write;
use std::process::Command;
use std::time::{Duration, Instant};

use dsf::analysis::{
    coalescence_experiment, coalescence_tail_fit, exp_tail_fit, forest_census, lyapunov_drift_test,
    martingale_drift_test, spaced_starts, stay_bound, stay_probability_bound_check,
};
use dsf::domination::{
    coupled_domination_run, minimal_l0, z_walk_drift, z_walk_pmf, DominationParams,
};
use dsf::exploration::{run_until_regenerations, DEFAULT_STEP_CAP};
use dsf::field::{mix64, replica_seed};
use dsf::replicas::run_replicas;
use dsf::scaling::{
    b1_diagnostic, e1_diagnostic, estimate_constants, B1Grid, ScalingConstants, WebSettings,
};
use dsf::successor::{successor, successor_bruteforce};
use dsf::{Error, Field, FieldParams, Vertex};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn params(d: usize, seed: u64) -> FieldParams {
    FieldParams::new(d, 0.5, seed).unwrap()
}

fn mins(m: u64) -> Duration {
    Duration::from_secs(60 * m)
}

/// Oracle with a growing window: a hit inside the window is the true answer
/// because the whole window is scanned.
fn oracle_successor(field: &Field, u: &Vertex) -> Vertex {
    let mut w = 2;
    loop {
        match successor_bruteforce(field, u, w) {
            Ok(v) => return v,
            Err(Error::OracleWindowTooSmall { .. }) => w *= 2,
            Err(e) => panic!("{e}"),
        }
    }
}

fn c1_successor_oracle() -> Outcome {
    let mut checked = 0;
    let mut mismatches = 0;
    for d in [2usize, 3, 4] {
        for p in [0.2, 0.5, 0.8] {
            let field = Field::from_parts(d, p, 41).unwrap();
            let results = run_replicas(10_000, |i| {
                let h = replica_seed(0xacce, i);
                let u = Vertex::new(
                    &(0..d as u64)
                        .map(|k| (mix64(h ^ k) % 2001) as i64 - 1000)
                        .collect::<Vec<_>>(),
                );
                successor(&field, &u).unwrap() == oracle_successor(&field, &u)
            });
            checked += results.len();
            mismatches += results.iter().filter(|ok| !**ok).count();
        }
    }
    outcome(
        mismatches == 0,
        format!("{checked} vertices, {mismatches} mismatches"),
    )
}

fn c2_domination() -> Outcome {
    let l0 = minimal_l0(0.5).unwrap();
    let p = params(2, 12);
    let starts = [Vertex::from([0, 0]), Vertex::from([5, 0])];
    let violations: usize = run_replicas(10_000, |r| {
        coupled_domination_run(&Field::new(p.for_replica(r)), &starts, l0, 1000)
            .unwrap()
            .violations()
    })
    .into_iter()
    .sum();
    outcome(
        l0 == 4 && violations == 0,
        format!("l0 {l0}, 10000 runs x 1000 steps, {violations} violations"),
    )
}

fn c3_regeneration_tail() -> Outcome {
    let p = params(2, 13);
    let starts = [Vertex::from([0, 0]), Vertex::from([5, 0])];
    let taus: Vec<u64> = run_replicas(10_000, |r| {
        run_until_regenerations(&Field::new(p.for_replica(r)), &starts, 1, DEFAULT_STEP_CAP)
            .unwrap()[0]
            .tau_steps
    });
    let fit = exp_tail_fit(&taus).unwrap();
    outcome(
        fit.slope < 0.0 && fit.r_squared >= 0.95,
        format!(
            "slope {:.4}, R^2 {:.4} over tau <= {}",
            fit.slope,
            fit.r_squared,
            fit.thresholds.last().unwrap()
        ),
    )
}

fn c4_z_walk() -> Outcome {
    let mut worst_sum = 0.0f64;
    let mut all_negative = true;
    for i in 1..=99 {
        let p = i as f64 / 100.0;
        let l0 = minimal_l0(p).unwrap();
        let zp = DominationParams::new(p, l0).unwrap();
        all_negative &= z_walk_drift(&zp) < 0.0;
        // the positive tail is geometric; sum far enough that the rest is negligible
        let kmax = (80.0 / -(1.0 - p).ln()).ceil() as i64;
        let total: f64 = (-1..=kmax).map(|k| z_walk_pmf(&zp, k)).sum();
        worst_sum = worst_sum.max((total - 1.0).abs());
    }
    let (a, b) = (minimal_l0(0.5).unwrap(), minimal_l0(0.1).unwrap());
    outcome(
        worst_sum <= 1e-12 && all_negative && a == 4 && b == 72,
        format!("max |sum - 1| {worst_sum:.1e}, drifts negative: {all_negative}, l0(0.5) {a}, l0(0.1) {b}"),
    )
}

fn c5_martingale() -> Outcome {
    let rows = martingale_drift_test(params(2, 5), 10, 5, 10_000).unwrap();
    let worst = rows
        .iter()
        .map(|r| r.increment.mean.abs() / r.increment.se)
        .fold(0.0, f64::max);
    outcome(
        rows.iter().all(|r| r.within(3.0)),
        format!("max |mean|/SE over j = 1..5: {worst:.2}"),
    )
}

fn c6_coalescence_tail() -> Outcome {
    let samples = coalescence_experiment(params(2, 7), 1, 10_000, 100_000).unwrap();
    let censored = samples.iter().filter(|s| s.censored).count();
    let fit = coalescence_tail_fit(&samples, 100, 10_000).unwrap();
    outcome(
        (-0.65..=-0.35).contains(&fit.slope),
        format!(
            "slope {:.3}, R^2 {:.4}, {censored} censored",
            fit.slope, fit.r_squared
        ),
    )
}

fn c7_stay_probability() -> Outcome {
    let bound = stay_bound(0.5);
    let mut pass = true;
    let mut parts = Vec::new();
    for m in [1, 2, 5, 10] {
        let e = stay_probability_bound_check(params(2, 3), m, 10_000).unwrap();
        pass &= e.empirical.mean <= bound + 3.0 * e.empirical.se;
        parts.push(format!("m={m}: {:.3}", e.empirical.mean));
    }
    outcome(pass, format!("{} vs bound {bound:.6}", parts.join(", ")))
}

fn census(d: usize) -> Vec<usize> {
    let p = params(d, 1000);
    let starts = spaced_starts(d, 20, 40);
    run_replicas(100, |r| {
        forest_census(&Field::new(p.for_replica(r)), &starts, 100_000, &[])
            .unwrap()
            .final_components()
    })
}

fn c8_dichotomy() -> Outcome {
    let single_2 = census(2).iter().filter(|&&c| c == 1).count();
    let several_4 = census(4).iter().filter(|&&c| c > 1).count();
    outcome(
        single_2 >= 99 && several_4 >= 60,
        format!("d=2: {single_2}/100 with one component (need 99); d=4: {several_4}/100 with several (need 60)"),
    )
}

fn c9_lyapunov() -> Outcome {
    let e = lyapunov_drift_test(params(3, 9), [80, 0], 10_000).unwrap();
    outcome(
        e.adjusted_interval.1 < 0.0,
        format!(
            "mean {:.3e}, 99% upper bound {:.3e} (plain estimator {:.3e} +- {:.3e})",
            e.adjusted.mean, e.adjusted_interval.1, e.raw.mean, e.raw.se
        ),
    )
}

fn web_constants() -> ScalingConstants {
    estimate_constants(params(2, 1), 100, 1000).unwrap()
}

fn c10_e1(constants: ScalingConstants) -> Outcome {
    let settings = WebSettings {
        n: 100.0,
        t: 1.0,
        constants,
    };
    let r = e1_diagnostic(params(2, 2), &settings, 0.0, 1.0, 10, 100).unwrap();
    outcome(
        r.relative_error.abs() <= 0.15,
        format!(
            "mean {:.4} +- {:.4} vs {:.4} ({:+.1}%)",
            r.eta_hat.mean,
            r.eta_hat.se,
            r.target,
            100.0 * r.relative_error
        ),
    )
}

fn c11_b1(constants: ScalingConstants) -> Outcome {
    let settings = WebSettings {
        n: 100.0,
        t: 1.0,
        constants,
    };
    let r = b1_diagnostic(
        params(2, 2),
        &settings,
        &[0.05, 0.8],
        &B1Grid::default(),
        100,
    )
    .unwrap();
    let diff = r.difference(0, 1);
    outcome(
        diff.mean >= 3.0 * diff.se,
        format!(
            "P = {:.4} at 0.05, {:.4} at 0.8; difference {:.4} +- {:.4}",
            r.rows[0].pooled.mean, r.rows[1].pooled.mean, diff.mean, diff.se
        ),
    )
}

fn c12_determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let run = |workers: &str, out: &str| {
        let status = Command::new(env!("CARGO_BIN_EXE_dsf"))
            .args([
                "coalesce",
                "--d",
                "2",
                "--p",
                "0.5",
                "--sep",
                "1",
                "--replicas",
                "10000",
                "--cap",
                "100000",
                "--seed",
                "7",
                "--workers",
                workers,
                "--out",
            ])
            .arg(dir.path().join(out))
            .status()
            .unwrap();
        assert!(status.success());
    };
    run("1", "a");
    run("3", "b");
    let mut same = true;
    for f in ["coalesce.csv", "summary.json"] {
        let a = fs::read(dir.path().join("a").join(f)).unwrap();
        let b = fs::read(dir.path().join("b").join(f)).unwrap();
        same &= !a.is_empty() && a == b;
    }
    outcome(same, "coalesce run with 1 and 3 workers")
}

#[test]
fn acceptance() {
    let mut out = std::io::stdout();
    let mut failed = Vec::new();
    let mut report = |id: u32, name: &str, limit: Duration, f: &dyn Fn() -> Outcome| {
        let start = Instant::now();
        let o = f();
        let elapsed = start.elapsed();
        let pass = o.pass && elapsed <= limit;
        if !pass {
            failed.push(id);
        }
        // written around the test harness capture so the lines always show
        writeln!(
            out,
            "{} {id:>2} {name}: {} [{:.1}s, limit {}s]",
            if pass { "PASS" } else { "FAIL" },
            o.detail,
            elapsed.as_secs_f64(),
            limit.as_secs()
        )
        .unwrap();
        out.flush().unwrap();
    };
    report(
        1,
        "successor oracle equivalence",
        mins(1),
        &c1_successor_oracle,
    );
    report(2, "domination coupling", mins(5), &c2_domination);
    report(3, "regeneration tail", mins(5), &c3_regeneration_tail);
    report(
        4,
        "comparison walk arithmetic",
        Duration::from_secs(1),
        &c4_z_walk,
    );
    report(5, "martingale increments", mins(10), &c5_martingale);
    report(6, "coalescence tail", mins(20), &c6_coalescence_tail);
    report(7, "stay probability bound", mins(10), &c7_stay_probability);
    report(8, "dichotomy census", mins(30), &c8_dichotomy);
    report(9, "Lyapunov drift", mins(10), &c9_lyapunov);
    let constants = web_constants();
    report(10, "E1 window mean", mins(30), &|| c10_e1(constants));
    report(11, "B1 monotonicity", mins(30), &|| c11_b1(constants));
    report(12, "determinism across workers", mins(2), &c12_determinism);
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
