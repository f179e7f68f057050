//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails.

use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use langevin_core::decay::{max_r_beta, onto_check, PhiTransform, RateFunction};
use langevin_core::ergodic::{
    annulus_exit_time, density_bin_masses, mean_hitting_time, occupancy_lower_bound,
    time_average_measure, Bins, MeasureOptions,
};
use langevin_core::sde::{simulate, SimConfig, StoppingRule};
use langevin_core::stability::{
    classify, decay_rate, exceedance_probability, moment_decay_check, StabilityCase,
};
use langevin_core::{DiffusionSpec, PotentialParams};

const P: PotentialParams = PotentialParams {
    a: 1.0,
    b: 1.0,
    lambda: 1.0,
};

/// Noiseless solution of x' = x − x³.
fn flow_oracle(x0: f64, t: f64) -> f64 {
    let e = (2.0 * t).exp();
    x0.signum() * (x0 * x0 * e / (1.0 + x0 * x0 * (e - 1.0))).sqrt()
}

fn flow_error(x0: f64, dt: f64) -> f64 {
    let tr = simulate(
        &P,
        &DiffusionSpec::constant(0.0),
        x0,
        &SimConfig::new(dt, 5.0, 0),
        &StoppingRule::None,
    )
    .expect("noiseless path");
    tr.times
        .iter()
        .zip(&tr.states)
        .map(|(&t, &x)| (x - flow_oracle(x0, t)).abs())
        .fold(0.0, f64::max)
}

fn criterion_1() -> (bool, String) {
    let start = Instant::now();
    let mut ok = true;
    let mut worst = 0.0f64;
    let mut ratios = Vec::new();
    for x0 in [0.5, -0.5, 2.0, -2.0] {
        let e1 = flow_error(x0, 1e-3);
        let e2 = flow_error(x0, 5e-4);
        let ratio = e1 / e2;
        worst = worst.max(e1);
        ratios.push(ratio);
        ok &= e1 <= 5e-3 && (1.6..=2.4).contains(&ratio);
    }
    let secs = start.elapsed().as_secs_f64();
    ok &= secs < 1.0;
    (
        ok,
        format!("max error {worst:.3e}, halving ratios {ratios:.3?}, {secs:.3} s"),
    )
}

fn criterion_2() -> (bool, String) {
    use StabilityCase::*;
    let cases = [
        (
            DiffusionSpec::linear_at_root(0.0, 1.0, 1.0),
            0.0,
            UnstableBelowSqrt2,
        ),
        (
            DiffusionSpec::critical_linear(0.0, 1.0),
            0.0,
            UnstableCriticalLinear,
        ),
        (
            DiffusionSpec::linear_at_root(0.0, 2.0, 1.0),
            0.0,
            AsymptoticallyStableInProb,
        ),
        (
            DiffusionSpec::linear_at_root(1.0, 0.5, 1.0),
            1.0,
            StableNondegenerateWell,
        ),
        (
            DiffusionSpec::linear_at_root(-1.0, 3.0, 1.0),
            -1.0,
            StableNondegenerateWell,
        ),
        (
            DiffusionSpec::oscillatory(1.0, 0.5, 1.5, 0.5),
            1.0,
            StableNondegenerateWell,
        ),
        (
            DiffusionSpec::oscillatory(-1.0, 0.5, 1.5, 0.5),
            -1.0,
            StableNondegenerateWell,
        ),
        (
            DiffusionSpec::polynomial(vec![-1.0, 1.0]),
            1.0,
            StableNondegenerateWell,
        ),
        (
            DiffusionSpec::polynomial(vec![-1.0, 0.0, 1.0]),
            -1.0,
            StableNondegenerateWell,
        ),
        (
            DiffusionSpec::tabulated(vec![-2.0, 1.0, 3.0], vec![3.0, 0.0, 2.0]),
            1.0,
            StableNondegenerateWell,
        ),
        (
            DiffusionSpec::tabulated(vec![-3.0, -1.0, 0.0], vec![1.0, 0.0, 0.5]),
            -1.0,
            StableNondegenerateWell,
        ),
    ];
    let mut failures = Vec::new();
    for (d, x_e, want) in &cases {
        match classify(&P, d, *x_e) {
            Ok(v) if v.case == *want => {}
            Ok(v) => failures.push(format!("{d:?} at {x_e}: {}", v.case.as_str())),
            Err(e) => failures.push(format!("{d:?} at {x_e}: {e}")),
        }
    }
    if failures.is_empty() {
        (true, format!("{} verdicts match", cases.len()))
    } else {
        (false, failures.join("; "))
    }
}

fn criterion_3() -> (bool, String) {
    let cfg = SimConfig::new(1e-3, 50.0, 3);
    let n = 1000;
    let unstable = exceedance_probability(
        &P,
        &DiffusionSpec::linear_at_root(0.0, 1.0, 1.0),
        0.0,
        0.01,
        0.1,
        &cfg,
        n,
        0,
    )
    .expect("kappa = 1 batch");
    let stable = DiffusionSpec::linear_at_root(0.0, 2.0, 1.0);
    let probs: Vec<_> = [0.1, 0.01, 0.001]
        .iter()
        .map(|&x0| {
            exceedance_probability(&P, &stable, 0.0, x0, 0.1, &cfg, n, 0).expect("kappa = 2 batch")
        })
        .collect();
    let monotone = probs
        .windows(2)
        .all(|w| w[1].mean <= w[0].mean + 2.0 * (w[0].se * w[0].se + w[1].se * w[1].se).sqrt());
    let ok = unstable.mean >= 0.99 && monotone;
    let p: Vec<String> = probs
        .iter()
        .map(|e| format!("{:.3}±{:.3}", e.mean, e.se))
        .collect();
    (
        ok,
        format!(
            "kappa=1 exceedance {:.3}; kappa=2 exceedance over x0 0.1/0.01/0.001: {}",
            unstable.mean,
            p.join(", ")
        ),
    )
}

fn criterion_4() -> (bool, String) {
    let mut ok = true;
    let mut notes = Vec::new();
    let families = [
        DiffusionSpec::linear_at_root(1.0, 0.5, 5.0),
        DiffusionSpec::linear_at_root(-1.0, 1.0, 5.0),
        DiffusionSpec::oscillatory(1.0, 0.5, 1.5, 0.5),
        DiffusionSpec::polynomial(vec![-1.0, 1.0]),
        DiffusionSpec::tabulated(vec![-2.0, 1.0, 3.0], vec![3.0, 0.0, 2.0]),
        DiffusionSpec::constant(0.0),
    ];
    for d in &families {
        let x_e = if matches!(d, DiffusionSpec::LinearAtRoot { x_e, .. } if *x_e < 0.0) {
            -1.0
        } else {
            1.0
        };
        match decay_rate(&P, d, x_e, 1.0) {
            Ok(r) if r.c == 2.0 => {}
            Ok(r) => {
                ok = false;
                notes.push(format!("alpha=1 {d:?}: c = {}", r.c));
            }
            Err(e) => {
                ok = false;
                notes.push(format!("alpha=1 {d:?}: {e}"));
            }
        }
    }
    for beta in [0.25, 0.5, 1.0] {
        let r = decay_rate(&P, &DiffusionSpec::linear_at_root(1.0, beta, 5.0), 1.0, 2.0)
            .expect("alpha = 2");
        let want = 4.0 - beta * beta;
        let inside = r.analytic_bounds.is_some_and(|b| b.contains(r.c / r.alpha));
        if (r.c - want).abs() > 1e-4 || !inside {
            ok = false;
        }
        notes.push(format!("beta={beta}: c={:.6} (4-beta^2={want})", r.c));
    }
    let d = DiffusionSpec::linear_at_root(1.0, 0.5, 5.0);
    let times = [0.5, 1.0, 2.0];
    let m = moment_decay_check(
        &P,
        &d,
        1.0,
        1.0,
        2.0,
        &times,
        10_000,
        &SimConfig::new(1e-3, 2.0, 4),
        0,
    )
    .expect("moment decay batch");
    for ((t, e), b) in times.iter().zip(&m.estimates).zip(&m.bounds) {
        let holds = e.mean <= (-2.0 * t).exp() + 2.0 * e.se && (b - (-2.0 * t).exp()).abs() < 1e-12;
        ok &= holds;
        notes.push(format!(
            "E|X_{t}-1| = {:.4}±{:.4} vs e^-2t = {:.4}",
            e.mean,
            e.se,
            (-2.0 * t).exp()
        ));
    }
    ok &= m.pass();
    (ok, notes.join("; "))
}

fn criterion_5() -> (bool, String) {
    let cfg = SimConfig::new(1e-3, 200.0, 5);
    let n = 2000;
    let mut ok = true;
    let mut notes = Vec::new();
    for (x_e, x0, expected) in [(0.0, 0.3, 4.0404), (1.0, 1.3, 5.0505)] {
        let d = DiffusionSpec::linear_at_root(x_e, 1.0, 1.0);
        let st = annulus_exit_time(&P, &d, x_e, 0.1, 0.5, x0, &cfg, n, 0).expect("annulus batch");
        let bound = st.bound.unwrap_or(f64::NAN);
        let holds = (bound - expected).abs() < 1e-4 && st.bound_holds() == Some(true);
        ok &= holds;
        notes.push(format!(
            "annulus x_e={x_e}: mean {:.4}±{:.4} vs bound {bound:.4}",
            st.estimate.mean, st.estimate.se
        ));
    }
    let st = mean_hitting_time(
        &P,
        &DiffusionSpec::constant(1.0),
        2.0,
        (-1.5, 1.5),
        &cfg,
        n,
        0,
    )
    .expect("hitting batch");
    let bound = st.bound.unwrap_or(f64::NAN);
    ok &= (bound - 1.06667).abs() < 1e-5 && st.bound_holds() == Some(true);
    notes.push(format!(
        "hitting from 2: mean {:.4}±{:.4} vs bound {bound:.5}",
        st.estimate.mean, st.estimate.se
    ));
    (ok, notes.join("; "))
}

fn criterion_6() -> (bool, String) {
    let bins = Bins::new(-3.0, 3.0, 60).expect("bins");
    // unnormalized log density for σ ≡ 1: x² − x⁴/2
    let oracle = density_bin_masses(|x| x * x - x.powi(4) / 2.0, &bins).expect("oracle masses");
    let d = DiffusionSpec::constant(1.0);
    let run = |x0: f64, seed: u64| {
        time_average_measure(
            &P,
            &d,
            x0,
            &SimConfig::new(1e-3, 1e4, seed),
            &bins,
            &MeasureOptions::default(),
        )
        .expect("long path")
    };
    let (m1, m2) = std::thread::scope(|s| {
        let h1 = s.spawn(|| run(2.0, 61));
        let h2 = s.spawn(|| run(-2.0, 62));
        (h1.join().expect("run 1"), h2.join().expect("run 2"))
    });
    let l1a = m1.l1_to(&oracle).expect("l1");
    let l1b = m2.l1_to(&oracle).expect("l1");
    let l12 = m1.l1_distance(&m2).expect("l1");
    let bound = occupancy_lower_bound(1.0, 3.0, 1.0).expect("bound");
    let cov = m1.coverage.min(m2.coverage);
    let ok =
        l1a <= 0.05 && l1b <= 0.05 && l12 <= 0.05 && (bound - 0.28826).abs() < 1e-5 && cov >= bound;
    (
        ok,
        format!("L1 to density {l1a:.4} / {l1b:.4}, between runs {l12:.4}, occupation {cov:.6} >= {bound:.5}"),
    )
}

fn criterion_7() -> (bool, String) {
    let mut ok = true;
    let mut notes = Vec::new();
    let transforms = [
        PhiTransform::new(RateFunction::linear_capped(1.0), 2.0),
        PhiTransform::new(RateFunction::linear_capped(0.25), 0.7),
        PhiTransform::new(RateFunction::super_geometric_max(2.0), 1.0),
        PhiTransform::new(RateFunction::super_geometric_max(3.0), 0.5),
        PhiTransform::new(RateFunction::power_capped(0.5, 1.0), 2.0),
        PhiTransform::new(
            RateFunction::smoothed(RateFunction::linear_capped(1.0)),
            1.0,
        ),
    ];
    let grid: Vec<f64> = (-24..=24).map(|k| 10f64.powf(k as f64 * 0.25)).collect();
    let (mut quad_err, mut inv_err) = (0.0f64, 0.0f64);
    for tr in transforms {
        let tr = tr.expect("transform");
        for &t in &grid {
            let a = tr.phi_c(t).expect("phi");
            let b = tr.phi_c_quadrature(t).expect("quadrature");
            quad_err = quad_err.max((a - b).abs() / a.abs().max(1.0));
            if tr.onto.is_onto() {
                let back = tr.phi_c_inverse(a).expect("inverse");
                inv_err = inv_err.max((back - t).abs() / t);
            }
        }
    }
    ok &= quad_err <= 1e-9 && inv_err <= 1e-9;
    notes.push(format!(
        "quadrature {quad_err:.1e}, round trip {inv_err:.1e}"
    ));

    let lin = PhiTransform::new(RateFunction::linear_capped(1.0), 2.0).expect("linear");
    let mut env_err = 0.0f64;
    for v0 in [0.1, 0.5, 0.99] {
        for k in 0..=100 {
            let t = k as f64 * 0.1;
            env_err =
                env_err.max((lin.envelope(v0, t).expect("envelope") - v0 * (-2.0 * t).exp()).abs());
        }
    }
    ok &= env_err <= 1e-8;
    notes.push(format!("linear envelope {env_err:.1e}"));

    let fit_grid: Vec<f64> = (0..=40).map(|k| 10f64.powf(k as f64 * 0.2)).collect();
    for (beta, c) in [(1.0, 2.0), (2.0, 1.0), (3.0, 0.5)] {
        let (rate, v0) = if beta == 1.0 {
            (RateFunction::linear_capped(1.0), 0.5)
        } else {
            (RateFunction::super_geometric_max(beta), max_r_beta(beta))
        };
        let fit = PhiTransform::new(rate, c)
            .and_then(|tr| tr.asymptotic_rate(v0, &fit_grid))
            .expect("fit");
        let want = c.powf(beta);
        let good = fit.conclusive
            && (fit.beta - beta).abs() <= 0.01 * beta
            && (fit.rate - want).abs() <= 0.01 * want;
        ok &= good;
        notes.push(format!(
            "beta {beta}: fit ({:.4}, {:.4})",
            fit.beta, fit.rate
        ));
    }

    let onto = [
        (RateFunction::linear_capped(1.0), true),
        (RateFunction::super_geometric_max(2.0), true),
        (
            RateFunction::smoothed(RateFunction::linear_capped(1.0)),
            true,
        ),
        (RateFunction::power_capped(0.5, 1.0), false),
        (RateFunction::power_capped(0.9, 2.0), false),
    ];
    let onto_ok = onto
        .iter()
        .all(|(r, want)| onto_check(r).is_onto() == *want);
    ok &= onto_ok;
    notes.push(format!(
        "onto checks {}",
        if onto_ok { "match" } else { "differ" }
    ));
    (ok, notes.join("; "))
}

type Criterion = fn() -> (bool, String);

fn cli_run(bin: &str, args: &[&str], out: &Path) -> (i32, Vec<(String, Vec<u8>)>) {
    let o = Command::new(bin)
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("spawn langevin");
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(out)
        .map(|rd| {
            rd.map(|e| {
                let e = e.expect("dir entry");
                (
                    e.file_name().to_string_lossy().into_owned(),
                    fs::read(e.path()).expect("read output"),
                )
            })
            .collect()
        })
        .unwrap_or_default();
    files.sort();
    files.push(("stdout".into(), o.stdout));
    (o.status.code().unwrap_or(-1), files)
}

fn criterion_8() -> (bool, String) {
    let bin = env!("CARGO_BIN_EXE_langevin");
    let dir = tempfile::tempdir().expect("tempdir");
    let commands: [&[&str]; 6] = [
        &[
            "simulate",
            "--sigma_s",
            "0.7",
            "--x0",
            "0.2",
            "--t_max",
            "5",
            "--seed",
            "11",
        ],
        &["classify", "--sigma", "oscillatory", "--sigma_x_e", "0"],
        &[
            "exit-time",
            "--sigma",
            "linear",
            "--n_paths",
            "300",
            "--seed",
            "12",
            "--t_max",
            "100",
        ],
        &[
            "invariant",
            "--t_max",
            "200",
            "--seed",
            "13",
            "--bins",
            "40",
        ],
        &["envelope", "--rate", "supergeometric", "--rate_beta", "2"],
        &[
            "decay-rate",
            "--sigma",
            "linear",
            "--sigma_x_e",
            "1",
            "--sigma_kappa",
            "0.5",
            "--alpha",
            "2",
        ],
    ];
    let mut ok = true;
    let mut notes = Vec::new();
    for (i, cmd) in commands.iter().enumerate() {
        let mut runs = Vec::new();
        for (j, par) in ["1", "1", "4", "4"].iter().enumerate() {
            let out = dir.path().join(format!("c{i}_{j}"));
            let mut args = cmd.to_vec();
            if cmd[0] == "exit-time" {
                args.extend(["--parallelism", par]);
            }
            runs.push(cli_run(bin, &args, &out));
        }
        let same = runs.windows(2).all(|w| w[0] == w[1]);
        let code = runs[0].0;
        let files = runs[0].1.len();
        ok &= same && (code == 0 || code == 2) && files >= 2;
        notes.push(format!(
            "{} exit {code} {}",
            cmd[0],
            if same { "identical" } else { "DIFFERS" }
        ));
    }
    (ok, notes.join("; "))
}

fn main() {
    let criteria: [(&str, Criterion); 8] = [
        ("deterministic flow", criterion_1),
        ("classifier thresholds", criterion_2),
        ("empirical instability/stability", criterion_3),
        ("decay rate", criterion_4),
        ("exit-time bounds", criterion_5),
        ("invariant measure", criterion_6),
        ("decay transform", criterion_7),
        ("reproducibility", criterion_8),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let (ok, detail) = f();
        if !ok {
            failed += 1;
        }
        println!(
            "criterion {} ({name}): {} [{:.1} s] {detail}",
            i + 1,
            if ok { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
