//! Acceptance suite: one test per criterion, each printing a PASS line and
//! enforcing its runtime budget where one is pinned.
//!
//! Tolerances here are the product contract; they are asserted, never
//! loosened at runtime.

use std::time::{Duration, Instant};

use rand::Rng;

use gengrad_core::activation::{
    pathological_derivative_probe, ApproximantFamily, BlendingFunction, PiecewiseActivation,
};
use gengrad_core::analysis::{
    convergence_experiment, limiting_subgradient_check, lipschitz_probe, smooth_region_agreement,
    WitnessOptions,
};
use gengrad_core::fixtures::{
    fixture, random_theta, smooth_theta, KINK_PINNED_FIXTURES, STANDARD_FIXTURES,
};
use gengrad_core::gradients::{backprop_generalized, backprop_smoothed, pathsum_risk_gradient};
use gengrad_core::network::Architecture;
use gengrad_core::report::rng;
use gengrad_core::risk::{EmpiricalMeasure, Loss, Sample};

fn budget(start: Instant, limit_secs: u64, name: &str) {
    let elapsed = start.elapsed();
    assert!(
        elapsed <= Duration::from_secs(limit_secs),
        "{name} took {elapsed:?}, budget {limit_secs}s"
    );
}

fn all_architectures(max_width: usize, max_depth: usize) -> Vec<Architecture> {
    let mut archs = Vec::new();
    for depth in 1..=max_depth {
        let slots = depth + 1;
        for code in 0..max_width.pow(slots as u32) {
            let mut widths = Vec::with_capacity(slots);
            let mut rem = code;
            for _ in 0..slots {
                widths.push(rem % max_width + 1);
                rem /= max_width;
            }
            archs.push(Architecture::new(widths).unwrap());
        }
    }
    archs
}

fn random_measure(arch: &Architecture, seed: u64) -> EmpiricalMeasure {
    let mut gen = rng(seed);
    let samples = (0..2)
        .map(|_| Sample {
            x: (0..arch.input_dim()).map(|_| gen.random_range(-1.5..=1.5)).collect(),
            y: (0..arch.output_dim()).map(|_| gen.random_range(-1.5..=1.5)).collect(),
            w: gen.random_range(0.1..=2.0),
        })
        .collect();
    EmpiricalMeasure::new(samples).unwrap()
}

/// Criterion 1: the literal path-sum oracle agrees with both backprop routes
/// to 1e-12 relative on every architecture with depth <= 3 and widths <= 4,
/// over 100 seeded (theta, dataset) draws each.
#[test]
fn criterion_1_oracle_equivalence() {
    let start = Instant::now();
    let activations = [
        PiecewiseActivation::relu(),
        PiecewiseActivation::leaky_relu(0.1).unwrap(),
        PiecewiseActivation::abs_activation(),
        PiecewiseActivation::hard_tanh(),
    ];
    let losses = [Loss::Mse, Loss::RidgeMse { lambda: 0.1 }];
    let archs = all_architectures(4, 3);
    assert_eq!(archs.len(), 16 + 64 + 256);
    let mut worst = 0.0_f64;
    for (a_idx, arch) in archs.iter().enumerate() {
        for draw in 0..100u64 {
            let seed = (a_idx as u64) * 1_000 + draw;
            let theta = random_theta(arch, seed, 1.0);
            let measure = random_measure(arch, seed ^ 0xdead);
            let act = &activations[(draw as usize) % activations.len()];
            let loss = &losses[(draw as usize) % losses.len()];
            let fam = ApproximantFamily::new(act.clone(), BlendingFunction::CubicSmoothstep);

            let bp = backprop_generalized(&theta, arch, &measure, loss, act).unwrap();
            let ps = pathsum_risk_gradient(&theta, arch, &measure, loss, |v| act.value(v), |v| {
                act.generalized_derivative(v)
            })
            .unwrap();
            let rel = bp.distance(&ps) / bp.l2_norm().max(1.0);
            worst = worst.max(rel);
            assert!(rel <= 1e-12, "arch {:?} draw {draw}: generalized {rel}", arch.widths());

            let n = 3;
            let bps = backprop_smoothed(&theta, arch, &measure, loss, &fam, n).unwrap();
            let pss = pathsum_risk_gradient(&theta, arch, &measure, loss, |v| fam.value(n, v), |v| {
                fam.derivative(n, v)
            })
            .unwrap();
            let rel = bps.distance(&pss) / bps.l2_norm().max(1.0);
            worst = worst.max(rel);
            assert!(rel <= 1e-12, "arch {:?} draw {draw}: smoothed {rel}", arch.widths());
        }
    }
    budget(start, 60, "criterion 1");
    println!("criterion 1 (oracle equivalence): PASS (worst relative gap {worst:.3e})");
}

/// Criterion 2: on the four standard fixtures with 20 random thetas each,
/// the smoothed gradients stabilize bit-exactly at some m <= 2^20 and the
/// stabilized limit is identical for both blending ramps.
#[test]
fn criterion_2_gradient_limit() {
    let start = Instant::now();
    let schedule: Vec<u64> = (0..=20).map(|p| 1u64 << p).collect();
    let mut worst_m = 0u64;
    for name in STANDARD_FIXTURES {
        let f = fixture(name).unwrap();
        let smooth = ApproximantFamily::new(f.activation.clone(), BlendingFunction::CubicSmoothstep);
        let bump = ApproximantFamily::new(f.activation.clone(), BlendingFunction::Bump);
        for draw in 0..20u64 {
            let theta = random_theta(&f.arch, 50_000 + draw, 1.0);
            let a = convergence_experiment(&theta, &f.arch, &f.measure, &f.loss, &smooth, &schedule)
                .unwrap();
            let b = convergence_experiment(&theta, &f.arch, &f.measure, &f.loss, &bump, &schedule)
                .unwrap();
            let m_a = a.stabilization_index.unwrap_or_else(|| {
                panic!("{name} draw {draw}: no stabilization within 2^20")
            });
            let m_b = b.stabilization_index.expect("bump ramp stabilization");
            for report in [&a, &b] {
                let m = report.stabilization_index.unwrap();
                for e in &report.history {
                    if e.n >= m {
                        assert_eq!(e.discrepancy, 0.0, "{name} draw {draw} n={}", e.n);
                        assert_eq!(&e.grad, &report.limit);
                    }
                }
            }
            assert_eq!(a.limit, b.limit, "{name} draw {draw}: ramp-dependent limit");
            worst_m = worst_m.max(m_a).max(m_b);
        }
    }
    budget(start, 120, "criterion 2");
    println!("criterion 2 (gradient limit): PASS (largest stabilization index {worst_m})");
}

/// Criterion 3: at 50 margin-clearing random thetas per fixture, central
/// finite differences of the risk match the generalized gradient to 1e-4
/// relative.
#[test]
fn criterion_3_smooth_region_agreement() {
    let start = Instant::now();
    let h = 1e-6;
    let mut worst = 0.0_f64;
    for name in STANDARD_FIXTURES {
        let f = fixture(name).unwrap();
        for draw in 0..50u64 {
            let theta = smooth_theta(&f.arch, &f.measure, &f.activation, 60_000 + draw, h).unwrap();
            let r = smooth_region_agreement(&theta, &f.arch, &f.measure, &f.loss, &f.activation, h)
                .unwrap();
            assert!(r.margin_ok, "{name} draw {draw}: margin violated");
            assert!(r.discrepancy <= 1e-4, "{name} draw {draw}: {}", r.discrepancy);
            worst = worst.max(r.discrepancy);
        }
    }
    budget(start, 60, "criterion 3");
    println!("criterion 3 (smooth-region agreement): PASS (worst discrepancy {worst:.3e})");
}

/// Criterion 4: on the kink-pinned fixtures the witness sequence halves its
/// distance down to 1e-8, matches finite differences at every step, keeps
/// the sign condition, and lands the gradient gap under 1e-8.
#[test]
fn criterion_4_limiting_subgradient_witness() {
    let start = Instant::now();
    assert!(KINK_PINNED_FIXTURES.len() >= 3);
    for name in KINK_PINNED_FIXTURES {
        let f = fixture(name).unwrap();
        let fam = ApproximantFamily::new(f.activation.clone(), BlendingFunction::CubicSmoothstep);
        let options = WitnessOptions { input_box: f.input_box, ..WitnessOptions::default() };
        let witness = limiting_subgradient_check(
            &f.theta,
            &f.arch,
            &f.measure,
            &f.loss,
            &f.activation,
            &fam,
            8,
            &[1e-4, 1e-6, 1e-8],
            &options,
        )
        .unwrap();
        for w in witness.distances.windows(2) {
            assert!(w[1] <= 0.51 * w[0], "{name}: distances do not halve");
        }
        assert!(*witness.distances.last().unwrap() <= 1e-8, "{name}");
        assert!(*witness.grad_gaps.last().unwrap() <= 1e-8, "{name}");
        for (i, step) in witness.steps.iter().enumerate() {
            assert!(
                step.fd_relative_error <= 1e-4,
                "{name} step {i}: fd error {}",
                step.fd_relative_error
            );
            assert_eq!(step.sign_violations, 0, "{name} step {i}");
        }
        assert!(witness.passes(), "{name}: {:?}", witness.findings());
    }
    budget(start, 120, "criterion 4");
    println!("criterion 4 (limiting-subgradient witness): PASS");
}

/// Criterion 5: the approximants are C1 at all four per-kink patch
/// boundaries for n up to 1024, and the closed-form derivative matches
/// finite differences at 10^4 interior points per activation.
#[test]
fn criterion_5_mollifier_c1() {
    let activations = [
        PiecewiseActivation::relu(),
        PiecewiseActivation::leaky_relu(0.1).unwrap(),
        PiecewiseActivation::abs_activation(),
        PiecewiseActivation::hard_tanh(),
    ];
    let ns: Vec<u64> = (0..=10).map(|p| 1u64 << p).collect();
    let mut worst_joint = 0.0_f64;
    for act in &activations {
        for eta in [BlendingFunction::CubicSmoothstep, BlendingFunction::Bump] {
            let fam = ApproximantFamily::new(act.clone(), eta);
            for &n in &ns {
                let defect = fam.boundary_c1_defect(n);
                assert!(defect <= 1e-6, "{} n={n} {eta:?}: defect {defect}", act.name());
                worst_joint = worst_joint.max(defect);
            }
        }
    }

    let mut worst_fd = 0.0_f64;
    let h = 3e-8;
    for act in &activations {
        let fam = ApproximantFamily::new(act.clone(), BlendingFunction::CubicSmoothstep);
        let mut gen = rng(42);
        let mut checked = 0usize;
        while checked < 10_000 {
            let x = gen.random_range(-3.0..=3.0);
            let n = ns[gen.random_range(0..ns.len())];
            // interior: away from the four patch boundaries of every kink
            let delta = fam.delta();
            let near_boundary = fam.base().kinks().points().iter().any(|&y| {
                let d = (x - y).abs();
                [delta / (2 * n) as f64, delta / n as f64]
                    .iter()
                    .any(|b| (d - b).abs() <= 16.0 * h)
            });
            if near_boundary {
                continue;
            }
            let fd = (fam.value(n, x + h) - fam.value(n, x - h)) / (2.0 * h);
            let analytic = fam.derivative(n, x);
            let rel = (fd - analytic).abs() / analytic.abs().max(1.0);
            assert!(rel <= 1e-6, "{} n={n} x={x}: rel {rel}", act.name());
            worst_fd = worst_fd.max(rel);
            checked += 1;
        }
    }
    println!(
        "criterion 5 (mollifier C1): PASS (worst joint defect {worst_joint:.3e}, worst fd gap {worst_fd:.3e})"
    );
}

/// Criterion 6: the x·sin(1/x) fixture has |g'((k·pi)^-1)| = k·pi exactly in
/// closed form, growing without bound, and the hypothesis validator flags
/// its derivative as not locally bounded.
#[test]
fn criterion_6_pathological_fixture() {
    let probe = pathological_derivative_probe(100);
    assert_eq!(probe.len(), 100);
    for (idx, &(x, mag)) in probe.iter().enumerate() {
        let k = (idx + 1) as f64;
        assert_eq!(mag, k * std::f64::consts::PI);
        assert_eq!(x, (k * std::f64::consts::PI).recip());
    }
    assert!(probe.windows(2).all(|w| w[1].1 > w[0].1));
    assert!(probe.last().unwrap().1 > 300.0);

    let report = PiecewiseActivation::oscillatory().validate(2.0);
    assert!(report.value_continuous);
    assert!(!report.derivative_locally_bounded, "sup {}", report.derivative_sup);
    assert!(!report.hypotheses_hold());
    println!("criterion 6 (pathological fixture): PASS (flagged, sup {:.3e})", report.derivative_sup);
}

/// Criterion 7: the empirical Lipschitz constant over 10^4 unit-ball pairs
/// is finite, varies at most 10% across two seeds, and for the affine
/// fixture stays below the hand-derived closed-form bound.
#[test]
fn criterion_7_lipschitz_probe() {
    for name in STANDARD_FIXTURES {
        let f = fixture(name).unwrap();
        let c1 = lipschitz_probe(&f.arch, &f.measure, &f.loss, &f.activation, &f.theta, 1.0, 10_000, 101)
            .unwrap();
        let c2 = lipschitz_probe(&f.arch, &f.measure, &f.loss, &f.activation, &f.theta, 1.0, 10_000, 202)
            .unwrap();
        assert!(c1.is_finite() && c2.is_finite());
        let ratio = (c1 - c2).abs() / c1.min(c2);
        assert!(ratio <= 0.1, "{name}: seeds disagree by {ratio}");
        if name == "affine-1-1" {
            // closed-form bound: sup of ‖∇L‖ over the ball, assembled from
            // |residual| <= (‖center‖+1)(|x|+1)+|y| per sample
            let reach = f.theta.l2_norm() + 1.0;
            let bound: f64 = f
                .measure
                .samples()
                .iter()
                .map(|s| {
                    let x = s.x[0];
                    2.0 * s.w * (reach * (x.abs() + 1.0) + s.y[0].abs()) * (x * x + 1.0).sqrt()
                })
                .sum();
            assert!(c1.max(c2) <= bound, "{name}: {c1}/{c2} above bound {bound}");
        }
    }
    println!("criterion 7 (lipschitz probe): PASS");
}

/// Criterion 8: every command is byte-deterministic for a fixed config and
/// seed, including across GENGRAD_THREADS settings.
#[test]
fn criterion_8_cli_determinism() {
    use std::collections::BTreeMap;
    use std::process::Command;

    let bin = env!("CARGO_BIN_EXE_gengrad");
    let dir = tempfile::tempdir().unwrap();

    let configs = [
        ("gradcheck", r#"{"fixture":"relu-1-2-1","seed":5,"theta_count":3}"#),
        ("converge", r#"{"fixture":"relu-1-2-1","seed":5,"theta_count":2}"#),
        ("subgrad", r#"{"fixture":"relu-1-1-1-pinned","seed":5}"#),
        (
            "mollifier",
            r#"{"fixture":"relu-1-2-1","grid":{"lo":-0.5,"hi":0.5,"step":0.01},"n_list":[1,4]}"#,
        ),
        ("lipschitz", r#"{"fixture":"affine-1-1","seed":5,"n_pairs":500}"#),
    ];

    let run = |command: &str, config_path: &std::path::Path, out: &std::path::Path, threads: Option<&str>| {
        let mut cmd = Command::new(bin);
        cmd.arg(command)
            .arg("--config")
            .arg(config_path)
            .arg("--out")
            .arg(out)
            .env_remove("GENGRAD_THREADS");
        if let Some(t) = threads {
            cmd.env("GENGRAD_THREADS", t);
        }
        let output = cmd.output().unwrap();
        assert!(
            output.status.code() == Some(0),
            "{command} exited with {:?}: {}",
            output.status.code(),
            String::from_utf8_lossy(&output.stderr)
        );
        let mut files = BTreeMap::new();
        files.insert("<stdout>".to_string(), output.stdout);
        for entry in std::fs::read_dir(out).unwrap() {
            let path = entry.unwrap().path();
            files.insert(
                path.file_name().unwrap().to_string_lossy().into_owned(),
                std::fs::read(&path).unwrap(),
            );
        }
        files
    };

    for (command, config_text) in configs {
        let config_path = dir.path().join(format!("{command}.json"));
        std::fs::write(&config_path, config_text).unwrap();
        let mut outputs = Vec::new();
        for (tag, threads) in [("a", None), ("b", None), ("t1", Some("1")), ("t4", Some("4"))] {
            let out = dir.path().join(format!("{command}_{tag}"));
            std::fs::create_dir_all(&out).unwrap();
            outputs.push(run(command, &config_path, &out, threads));
        }
        for other in &outputs[1..] {
            assert_eq!(&outputs[0], other, "{command}: outputs differ across runs");
        }
    }
    println!("criterion 8 (cli determinism): PASS");
}
