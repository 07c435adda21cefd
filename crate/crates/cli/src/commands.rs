//! The five experiment commands. Each writes its machine-readable artifacts
//! into the output directory and returns pass/fail for the exit code; every
//! number goes through the full-precision formatter so reruns are
//! byte-identical.

use std::path::{Path, PathBuf};

use serde::Serialize;

use gengrad_core::activation::{ActivationReport, ApproximantFamily, BlendingFunction};
use gengrad_core::analysis::{
    convergence_experiment, limiting_subgradient_check, lipschitz_probe, smooth_region_agreement,
    SubgradientWitness, WitnessOptions,
};
use gengrad_core::fixtures::{random_theta, smooth_theta};
use gengrad_core::gradients::{
    backprop_generalized, backprop_smoothed, pathsum_risk_gradient, PATHSUM_CHAIN_LIMIT,
};
use gengrad_core::report::{csv_row, format_f64, to_json};
use gengrad_core::risk::Loss;
use gengrad_core::{Error, Result};

use crate::config::{Experiment, ExperimentConfig, GridSpec, OutputFormat};

pub const GRADCHECK_DISCREPANCY_TOL: f64 = 1e-4;
pub const ORACLE_TOL: f64 = 1e-12;

pub struct Context {
    pub config: ExperimentConfig,
    pub out_dir: PathBuf,
    pub format: OutputFormat,
}

impl Context {
    fn write(&self, name: &str, contents: &str) -> Result<()> {
        std::fs::create_dir_all(&self.out_dir)?;
        std::fs::write(self.out_dir.join(name), contents)?;
        Ok(())
    }

    fn summarize(&self, command: &str, pass: bool, metric_name: &str, metric: f64) -> Result<()> {
        match self.format {
            OutputFormat::Json => {
                #[derive(Serialize)]
                struct Summary<'a> {
                    command: &'a str,
                    pass: bool,
                    metric: &'a str,
                    value: f64,
                }
                print!(
                    "{}",
                    to_json(&Summary { command, pass, metric: metric_name, value: metric })?
                );
            }
            OutputFormat::Csv => {
                print!(
                    "{}",
                    csv_row(&[
                        command.to_string(),
                        pass.to_string(),
                        metric_name.to_string(),
                        format_f64(metric),
                    ])
                );
            }
        }
        Ok(())
    }
}

fn default_schedule() -> Vec<u64> {
    (0..=20).map(|p| 1u64 << p).collect()
}

// ---------------------------------------------------------------------------
// gradcheck
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct GradcheckEntry {
    index: usize,
    discrepancy: f64,
    min_kink_distance: f64,
    margin_ok: bool,
    oracle_generalized: Option<f64>,
    oracle_smoothed: Option<f64>,
}

#[derive(Serialize)]
struct GradcheckReport<'a> {
    command: &'a str,
    seed: u64,
    fixture: Option<String>,
    widths: Vec<usize>,
    activation: &'a str,
    activation_hypotheses: ActivationReport,
    fd_step: f64,
    per_theta: Vec<GradcheckEntry>,
    max_discrepancy: f64,
    pass: bool,
}

pub fn cmd_gradcheck(ctx: &Context) -> Result<bool> {
    let exp = Experiment::resolve(&ctx.config)?;
    let h = ctx.config.fd_step.unwrap_or(1e-6);
    let count = ctx.config.theta_count.unwrap_or(20);
    let fam = ApproximantFamily::new(exp.activation.clone(), exp.eta);

    let hypotheses = exp.activation.validate(3.0);
    let oracle_feasible = (1..=exp.arch.depth())
        .map(|k| exp.arch.width(k) as u128)
        .product::<u128>()
        <= PATHSUM_CHAIN_LIMIT;

    let mut entries = Vec::with_capacity(count);
    let mut max_discrepancy = 0.0_f64;
    let mut oracle_ok = true;
    for index in 0..count {
        let theta = smooth_theta(
            &exp.arch,
            &exp.measure,
            &exp.activation,
            exp.seed.wrapping_add(index as u64),
            h,
        )?;
        let agreement =
            smooth_region_agreement(&theta, &exp.arch, &exp.measure, &exp.loss, &exp.activation, h)?;
        if agreement.margin_ok {
            max_discrepancy = max_discrepancy.max(agreement.discrepancy);
        }
        let (oracle_generalized, oracle_smoothed) = if oracle_feasible {
            let bp = backprop_generalized(&theta, &exp.arch, &exp.measure, &exp.loss, &exp.activation)?;
            let ps = pathsum_risk_gradient(
                &theta,
                &exp.arch,
                &exp.measure,
                &exp.loss,
                |v| exp.activation.value(v),
                |v| exp.activation.generalized_derivative(v),
            )?;
            let rel_g = bp.distance(&ps) / bp.l2_norm().max(1.0);
            let n = 3;
            let bps = backprop_smoothed(&theta, &exp.arch, &exp.measure, &exp.loss, &fam, n)?;
            let pss = pathsum_risk_gradient(
                &theta,
                &exp.arch,
                &exp.measure,
                &exp.loss,
                |v| fam.value(n, v),
                |v| fam.derivative(n, v),
            )?;
            let rel_s = bps.distance(&pss) / bps.l2_norm().max(1.0);
            oracle_ok &= rel_g <= ORACLE_TOL && rel_s <= ORACLE_TOL;
            (Some(rel_g), Some(rel_s))
        } else {
            (None, None)
        };
        entries.push(GradcheckEntry {
            index,
            discrepancy: agreement.discrepancy,
            min_kink_distance: agreement.min_kink_distance,
            margin_ok: agreement.margin_ok,
            oracle_generalized,
            oracle_smoothed,
        });
    }

    let pass = hypotheses.hypotheses_hold()
        && oracle_ok
        && max_discrepancy <= GRADCHECK_DISCREPANCY_TOL
        && entries.iter().all(|e| e.margin_ok);
    let report = GradcheckReport {
        command: "gradcheck",
        seed: exp.seed,
        fixture: exp.fixture_name.clone(),
        widths: exp.arch.widths().to_vec(),
        activation: exp.activation.name(),
        activation_hypotheses: hypotheses,
        fd_step: h,
        per_theta: entries,
        max_discrepancy,
        pass,
    };
    ctx.write("gradcheck_report.json", &to_json(&report)?)?;
    ctx.summarize("gradcheck", pass, "max_discrepancy", max_discrepancy)?;
    Ok(pass)
}

// ---------------------------------------------------------------------------
// converge
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct ConvergeEntry {
    index: usize,
    stabilization_index: Option<u64>,
    bump_stabilization_index: Option<u64>,
    eta_limits_match: bool,
    final_discrepancy: f64,
}

#[derive(Serialize)]
struct ConvergeReport<'a> {
    command: &'a str,
    seed: u64,
    fixture: Option<String>,
    widths: Vec<usize>,
    n_schedule: Vec<u64>,
    per_theta: Vec<ConvergeEntry>,
    pass: bool,
}

pub fn cmd_converge(ctx: &Context) -> Result<bool> {
    let exp = Experiment::resolve(&ctx.config)?;
    let schedule = ctx.config.n_schedule.clone().unwrap_or_else(default_schedule);
    let count = ctx.config.theta_count.unwrap_or(20);
    let smooth_fam = ApproximantFamily::new(exp.activation.clone(), BlendingFunction::CubicSmoothstep);
    let bump_fam = ApproximantFamily::new(exp.activation.clone(), BlendingFunction::Bump);

    let mut entries = Vec::with_capacity(count);
    let mut first_history = None;
    let mut pass = true;
    for index in 0..count {
        let theta = if count == 1 {
            exp.theta.clone()
        } else {
            random_theta(&exp.arch, exp.seed.wrapping_add(index as u64), 1.0)
        };
        let report = convergence_experiment(
            &theta,
            &exp.arch,
            &exp.measure,
            &exp.loss,
            &smooth_fam,
            &schedule,
        )?;
        let bump_report = convergence_experiment(
            &theta,
            &exp.arch,
            &exp.measure,
            &exp.loss,
            &bump_fam,
            &schedule,
        )?;
        // the stabilized values must agree bit-for-bit across the two ramps
        let eta_limits_match = match (report.stabilization_index, bump_report.stabilization_index)
        {
            (Some(a), Some(b)) => {
                let grad_a = &report.history.iter().find(|e| e.n == a).unwrap().grad;
                let grad_b = &bump_report.history.iter().find(|e| e.n == b).unwrap().grad;
                grad_a == grad_b && report.limit == bump_report.limit && grad_a == &report.limit
            }
            _ => false,
        };
        let final_discrepancy = report.history.last().map(|e| e.discrepancy).unwrap_or(f64::NAN);
        pass &= report.stabilized() && bump_report.stabilized() && eta_limits_match;
        entries.push(ConvergeEntry {
            index,
            stabilization_index: report.stabilization_index,
            bump_stabilization_index: bump_report.stabilization_index,
            eta_limits_match,
            final_discrepancy,
        });
        if first_history.is_none() {
            first_history = Some(report.history_csv());
        }
    }

    let stabilized = entries.iter().filter(|e| e.stabilization_index.is_some()).count();
    let report = ConvergeReport {
        command: "converge",
        seed: exp.seed,
        fixture: exp.fixture_name.clone(),
        widths: exp.arch.widths().to_vec(),
        n_schedule: schedule,
        per_theta: entries,
        pass,
    };
    ctx.write("converge_report.json", &to_json(&report)?)?;
    if let Some(history) = first_history {
        ctx.write("converge_history.csv", &history)?;
    }
    ctx.summarize("converge", pass, "stabilized_fraction", stabilized as f64 / count as f64)?;
    Ok(pass)
}

// ---------------------------------------------------------------------------
// subgrad
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct SubgradReport<'a> {
    command: &'a str,
    seed: u64,
    fixture: Option<String>,
    widths: Vec<usize>,
    witness: SubgradientWitness,
    findings: Vec<String>,
    pass: bool,
}

pub fn cmd_subgrad(ctx: &Context) -> Result<bool> {
    let exp = Experiment::resolve(&ctx.config)?;
    let n_dirs = ctx.config.n_dirs.unwrap_or(8);
    let radii = ctx.config.radii.clone().unwrap_or_else(|| vec![1e-4, 1e-6, 1e-8]);
    let fam = ApproximantFamily::new(exp.activation.clone(), exp.eta);
    let options = WitnessOptions {
        input_box: exp.input_box,
        seed: exp.seed,
        ..WitnessOptions::default()
    };
    let witness = limiting_subgradient_check(
        &exp.theta,
        &exp.arch,
        &exp.measure,
        &exp.loss,
        &exp.activation,
        &fam,
        n_dirs,
        &radii,
        &options,
    )?;
    let findings = witness.findings();
    let pass = findings.is_empty();
    let last_gap = *witness.grad_gaps.last().unwrap_or(&f64::NAN);
    let report = SubgradReport {
        command: "subgrad",
        seed: exp.seed,
        fixture: exp.fixture_name.clone(),
        widths: exp.arch.widths().to_vec(),
        witness,
        findings,
        pass,
    };
    ctx.write("subgrad_witness.json", &to_json(&report)?)?;
    ctx.summarize("subgrad", pass, "last_grad_gap", last_gap)?;
    Ok(pass)
}

// ---------------------------------------------------------------------------
// mollifier
// ---------------------------------------------------------------------------

pub fn cmd_mollifier(ctx: &Context) -> Result<bool> {
    let config = &ctx.config;
    let activation = match (&config.activation, &config.fixture) {
        (Some(desc), _) => desc.build()?,
        (None, Some(name)) => gengrad_core::fixtures::fixture(name)?.activation,
        (None, None) => {
            return Err(Error::InvalidArgument(
                "mollifier needs an activation or a fixture".into(),
            ))
        }
    };
    let eta = config.eta.unwrap_or(BlendingFunction::CubicSmoothstep);
    let fam = ApproximantFamily::new(activation, eta);
    let grid = config
        .grid
        .clone()
        .unwrap_or(GridSpec { lo: -1.0, hi: 1.0, step: 1e-3 })
        .points()?;
    let n_list = config.n_list.clone().unwrap_or_else(|| vec![1, 4, 16]);
    if n_list.is_empty() || n_list.contains(&0) {
        return Err(Error::InvalidArgument("n_list entries must be at least 1".into()));
    }

    let mut csv = String::from("x,n,value,derivative\n");
    for &n in &n_list {
        for &x in &grid {
            csv.push_str(&csv_row(&[
                format_f64(x),
                n.to_string(),
                format_f64(fam.value(n, x)),
                format_f64(fam.derivative(n, x)),
            ]));
        }
    }
    ctx.write("mollifier.csv", &csv)?;
    let rows = (n_list.len() * grid.len()) as f64;
    ctx.summarize("mollifier", true, "rows", rows)?;
    Ok(true)
}

// ---------------------------------------------------------------------------
// lipschitz
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct LipschitzReport<'a> {
    command: &'a str,
    seeds: Vec<u64>,
    fixture: Option<String>,
    widths: Vec<usize>,
    ball_radius: f64,
    n_pairs: usize,
    constants: Vec<f64>,
    seed_ratio: f64,
    affine_bound: Option<f64>,
    pass: bool,
}

pub fn cmd_lipschitz(ctx: &Context) -> Result<bool> {
    let exp = Experiment::resolve(&ctx.config)?;
    let radius = ctx.config.ball_radius.unwrap_or(1.0);
    let n_pairs = ctx.config.n_pairs.unwrap_or(10_000);
    let seeds = ctx
        .config
        .seeds
        .clone()
        .unwrap_or_else(|| vec![exp.seed, exp.seed.wrapping_add(1)]);

    let constants: Vec<f64> = seeds
        .iter()
        .map(|&s| {
            lipschitz_probe(
                &exp.arch,
                &exp.measure,
                &exp.loss,
                &exp.activation,
                &exp.theta,
                radius,
                n_pairs,
                s,
            )
        })
        .collect::<Result<_>>()?;
    let max = constants.iter().cloned().fold(0.0_f64, f64::max);
    let min = constants.iter().cloned().fold(f64::INFINITY, f64::min);
    let seed_ratio = if min > 0.0 { (max - min) / min } else { 0.0 };

    // closed-form slope bound for the single-affine-layer MSE case
    let affine_bound = (exp.arch.widths() == [1, 1] && exp.loss == Loss::Mse).then(|| {
        let reach = exp.theta.l2_norm() + radius;
        exp.measure
            .samples()
            .iter()
            .map(|s| {
                let x = s.x[0];
                let residual_bound = reach * (x.abs() + 1.0) + s.y[0].abs();
                2.0 * s.w * residual_bound * (x * x + 1.0).sqrt()
            })
            .sum::<f64>()
    });

    let mut pass = constants.iter().all(|c| c.is_finite()) && seed_ratio <= 0.1;
    if let Some(bound) = affine_bound {
        pass &= max <= bound;
    }
    let report = LipschitzReport {
        command: "lipschitz",
        seeds,
        fixture: exp.fixture_name.clone(),
        widths: exp.arch.widths().to_vec(),
        ball_radius: radius,
        n_pairs,
        constants,
        seed_ratio,
        affine_bound,
        pass,
    };
    ctx.write("lipschitz_report.json", &to_json(&report)?)?;
    ctx.summarize("lipschitz", pass, "max_constant", max)?;
    Ok(pass)
}

pub fn out_dir(config: &ExperimentConfig, flag: Option<&Path>) -> PathBuf {
    flag.map(Path::to_path_buf)
        .or_else(|| config.out.clone())
        .unwrap_or_else(|| PathBuf::from("."))
}
