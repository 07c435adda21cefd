//! Experiment harnesses: gradient-convergence sweeps, finite-difference
//! oracles, left-approach witness sequences for the limiting-subgradient
//! property, and Lipschitz/boundedness probes.
//!
//! Every sampling routine takes an explicit seed and draws from a dedicated
//! deterministic generator, so reports are byte-reproducible.

use rand::Rng;
use serde::Serialize;

use crate::activation::{ApproximantFamily, PiecewiseActivation};
use crate::error::{Error, Result};
use crate::gradients::{backprop_generalized, backprop_smoothed, realization_partials, GradientVector};
use crate::network::{forward, Architecture, ParamVector};
use crate::report::{csv_row, format_f64, rng};
use crate::risk::{risk, risk_smoothed, EmpiricalMeasure, Loss};

/// Central-difference gradient `(f(θ+h·e_i) − f(θ−h·e_i)) / 2h`.
pub fn fd_gradient<F>(f: F, theta: &ParamVector, h: f64) -> Vec<f64>
where
    F: Fn(&ParamVector) -> f64,
{
    assert!(h > 0.0, "finite-difference step must be positive");
    let mut grad = Vec::with_capacity(theta.len());
    let mut probe = theta.clone();
    for i in 0..theta.len() {
        let orig = theta.as_slice()[i];
        probe.as_mut_slice()[i] = orig + h;
        let plus = f(&probe);
        probe.as_mut_slice()[i] = orig - h;
        let minus = f(&probe);
        probe.as_mut_slice()[i] = orig;
        grad.push((plus - minus) / (2.0 * h));
    }
    grad
}

/// Minimum distance from any hidden pre-activation (over all samples) to the
/// activation's kink set. `+∞` when there are no hidden layers, no samples,
/// or no kinks.
pub fn min_kink_distance(
    theta: &ParamVector,
    arch: &Architecture,
    measure: &EmpiricalMeasure,
    act: &PiecewiseActivation,
) -> Result<f64> {
    hidden_kink_distance(theta, arch, measure, act, false)
}

/// As [`min_kink_distance`] but ignoring pre-activations that sit exactly on
/// a kink (those are reproduced exactly by every approximant).
pub fn min_positive_kink_distance(
    theta: &ParamVector,
    arch: &Architecture,
    measure: &EmpiricalMeasure,
    act: &PiecewiseActivation,
) -> Result<f64> {
    hidden_kink_distance(theta, arch, measure, act, true)
}

fn hidden_kink_distance(
    theta: &ParamVector,
    arch: &Architecture,
    measure: &EmpiricalMeasure,
    act: &PiecewiseActivation,
    skip_exact: bool,
) -> Result<f64> {
    let mut min = f64::INFINITY;
    for s in measure.samples() {
        let trace = forward(theta, arch, &s.x, act)?;
        for k in 1..arch.depth() {
            for &pre in trace.preactivation(k) {
                let d = act.kinks().distance(pre);
                if skip_exact && d == 0.0 {
                    continue;
                }
                min = min.min(d);
            }
        }
    }
    Ok(min)
}

// ---------------------------------------------------------------------------
// Convergence experiment
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize)]
pub struct ConvergenceEntry {
    pub n: u64,
    pub grad: Vec<f64>,
    /// `‖∇L_n(θ) − G(θ)‖₂`.
    pub discrepancy: f64,
    /// `|L_n(θ) − L_0(θ)|`.
    pub risk_gap: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConvergenceReport {
    pub theta: Vec<f64>,
    pub history: Vec<ConvergenceEntry>,
    /// Smallest scheduled `n` from which every later discrepancy is exactly
    /// zero; `None` when the schedule ends before stabilization.
    pub stabilization_index: Option<u64>,
    /// `G(θ)` by reverse accumulation with the generalized derivative.
    pub limit: Vec<f64>,
}

impl ConvergenceReport {
    pub fn stabilized(&self) -> bool {
        self.stabilization_index.is_some()
    }

    /// History table with columns `n, discrepancy_norm, risk_gap`.
    pub fn history_csv(&self) -> String {
        let mut out = String::from("n,discrepancy_norm,risk_gap\n");
        for e in &self.history {
            out.push_str(&csv_row(&[
                e.n.to_string(),
                format_f64(e.discrepancy),
                format_f64(e.risk_gap),
            ]));
        }
        out
    }
}

/// Evaluates `∇L_n(θ)` along the schedule, recording discrepancies against
/// the generalized gradient and detecting the stabilization index. A schedule
/// that ends before stabilization is reported, not an error.
pub fn convergence_experiment(
    theta: &ParamVector,
    arch: &Architecture,
    measure: &EmpiricalMeasure,
    loss: &Loss,
    fam: &ApproximantFamily,
    n_schedule: &[u64],
) -> Result<ConvergenceReport> {
    if n_schedule.is_empty() || n_schedule[0] == 0 {
        return Err(Error::InvalidArgument("schedule must start at n >= 1".into()));
    }
    if n_schedule.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument("schedule must be strictly increasing".into()));
    }
    let limit = backprop_generalized(theta, arch, measure, loss, fam.base())?;
    let base_risk = risk(theta, arch, measure, loss, fam.base())?;
    let mut history = Vec::with_capacity(n_schedule.len());
    for &n in n_schedule {
        let grad = backprop_smoothed(theta, arch, measure, loss, fam, n)?;
        let discrepancy = grad.distance(&limit);
        let risk_gap = (risk_smoothed(theta, arch, measure, loss, fam, n)? - base_risk).abs();
        history.push(ConvergenceEntry {
            n,
            grad: grad.into_vec(),
            discrepancy,
            risk_gap,
        });
    }
    let mut stabilization_index = None;
    for e in history.iter().rev() {
        if e.discrepancy == 0.0 {
            stabilization_index = Some(e.n);
        } else {
            break;
        }
    }
    Ok(ConvergenceReport {
        theta: theta.as_slice().to_vec(),
        history,
        stabilization_index,
        limit: limit.into_vec(),
    })
}

// ---------------------------------------------------------------------------
// Left-approach witness construction
// ---------------------------------------------------------------------------

/// Empirical max-norm Lipschitz constant of `θ ↦ (N^{k,θ}(x))_k` over the
/// input box and a parameter ball, multiplied by a safety factor of 2.
pub fn estimate_network_lipschitz(
    theta: &ParamVector,
    arch: &Architecture,
    act: &PiecewiseActivation,
    input_box: (f64, f64),
    radius: f64,
    n_pairs: usize,
    seed: u64,
) -> Result<f64> {
    theta.check_len(arch)?;
    let inputs = box_inputs(arch.input_dim(), input_box, 24, seed ^ 0x9e37_79b9)?;
    let mut gen = rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..n_pairs.max(1) {
        let perturb = |gen: &mut rand_chacha::ChaCha8Rng| -> ParamVector {
            let mut t = theta.clone();
            for v in t.as_mut_slice() {
                *v += gen.random_range(-radius..=radius);
            }
            t
        };
        let a = perturb(&mut gen);
        let b = perturb(&mut gen);
        let dist = a
            .as_slice()
            .iter()
            .zip(b.as_slice())
            .map(|(p, q)| (p - q).abs())
            .fold(0.0_f64, f64::max);
        if dist == 0.0 {
            continue;
        }
        for x in &inputs {
            let ta = forward(&a, arch, x, act)?;
            let tb = forward(&b, arch, x, act)?;
            for k in 1..=arch.depth() {
                for (p, q) in ta.preactivation(k).iter().zip(tb.preactivation(k)) {
                    worst = worst.max((p - q).abs() / dist);
                }
            }
        }
    }
    let c = 2.0 * worst;
    if !c.is_finite() {
        return Err(Error::NonFinite("network Lipschitz estimate".into()));
    }
    Ok(c.max(1.0))
}

/// Inputs covering a box: every corner for low dimensions (just the two
/// extreme corners above dimension 5), then seeded uniform fill to `count`.
fn box_inputs(dim: usize, (a, b): (f64, f64), count: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if !(a.is_finite() && b.is_finite() && a <= b) {
        return Err(Error::InvalidArgument(format!("empty or invalid input box [{a}, {b}]")));
    }
    let mut inputs: Vec<Vec<f64>> = if dim <= 5 {
        (0..1usize << dim)
            .map(|bits| (0..dim).map(|i| if bits >> i & 1 == 1 { b } else { a }).collect())
            .collect()
    } else {
        vec![vec![a; dim], vec![b; dim]]
    };
    let mut gen = rng(seed);
    while inputs.len() < count {
        inputs.push((0..dim).map(|_| gen.random_range(a..=b)).collect());
    }
    Ok(inputs)
}

/// The witness parameter sequence: weights unchanged, biases shifted per
/// layer by `1.5·c_k·δ'` against the witness sign, so that every
/// pre-activation over the input box approaches its `θ`-value from the side
/// where the generalized derivative is one-sidedly continuous.
#[derive(Clone, Debug, Serialize)]
pub struct LeftApproachSequence {
    pub epsilons: Vec<f64>,
    pub params: Vec<ParamVector>,
    /// Sign `z` of the guaranteed inequality `z·(pre(ϑ) − pre(θ)) ≤ 0`.
    pub witness_sign: f64,
    /// Layer constants `c_1..c_L` of the recursion `c_{k+1} = 2·c_k·max{1,C}`.
    pub layer_constants: Vec<f64>,
    /// The empirical constant `C` (already safety-doubled).
    pub lipschitz_estimate: f64,
}

pub fn left_approach_sequence(
    theta: &ParamVector,
    arch: &Architecture,
    input_box: (f64, f64),
    epsilon_schedule: &[f64],
    act: &PiecewiseActivation,
) -> Result<LeftApproachSequence> {
    left_approach_with_seed(theta, arch, input_box, epsilon_schedule, act, 0)
}

pub fn left_approach_with_seed(
    theta: &ParamVector,
    arch: &Architecture,
    input_box: (f64, f64),
    epsilon_schedule: &[f64],
    act: &PiecewiseActivation,
    seed: u64,
) -> Result<LeftApproachSequence> {
    theta.check_len(arch)?;
    let (a, b) = input_box;
    if !(a.is_finite() && b.is_finite() && a <= b) {
        return Err(Error::InvalidArgument(format!("empty or invalid input box [{a}, {b}]")));
    }
    if epsilon_schedule.is_empty()
        || epsilon_schedule.iter().any(|&e| !e.is_finite() || e <= 0.0)
        || epsilon_schedule.windows(2).any(|w| w[0] <= w[1])
    {
        return Err(Error::InvalidArgument(
            "epsilon schedule must be strictly decreasing and positive".into(),
        ));
    }
    let probe_radius = epsilon_schedule[0].min(1.0);
    let c = estimate_network_lipschitz(theta, arch, act, input_box, probe_radius, 64, seed)?;

    let ell0 = arch.input_dim() as f64;
    let mut constants = vec![(ell0 * a.abs()).max(ell0 * b.abs()).max(1.0)];
    for _ in 1..arch.depth() {
        let prev = *constants.last().unwrap();
        constants.push(2.0 * prev * c.max(1.0));
    }
    let c_last = *constants.last().unwrap();
    let d = arch.param_count() as f64;
    let z = act.approach_side().witness_sign();

    let mut params = Vec::with_capacity(epsilon_schedule.len());
    for &eps in epsilon_schedule {
        let delta_prime = 1.0_f64.min(eps / (2.0 * c_last * d));
        let mut vartheta = theta.clone();
        for k in 1..=arch.depth() {
            let shift = 1.5 * constants[k - 1] * delta_prime;
            for i in 1..=arch.width(k) {
                let idx = arch.bias_index(k, i)?;
                vartheta.as_mut_slice()[idx] = theta.as_slice()[idx] - z * shift;
            }
        }
        params.push(vartheta);
    }
    Ok(LeftApproachSequence {
        epsilons: epsilon_schedule.to_vec(),
        params,
        witness_sign: z,
        layer_constants: constants,
        lipschitz_estimate: c,
    })
}

/// Counts sampled violations of `z·(pre(ϑ) − pre(θ)) ≤ 0` over box corners
/// and seeded interior inputs, across every layer and unit.
#[allow(clippy::too_many_arguments)]
pub fn count_sign_violations(
    theta: &ParamVector,
    vartheta: &ParamVector,
    arch: &Architecture,
    act: &PiecewiseActivation,
    input_box: (f64, f64),
    z: f64,
    n_inputs: usize,
    seed: u64,
) -> Result<usize> {
    let inputs = box_inputs(arch.input_dim(), input_box, n_inputs, seed)?;
    let mut violations = 0;
    for x in &inputs {
        let base = forward(theta, arch, x, act)?;
        let moved = forward(vartheta, arch, x, act)?;
        for k in 1..=arch.depth() {
            for (p, q) in moved.preactivation(k).iter().zip(base.preactivation(k)) {
                if z * (p - q) > 0.0 {
                    violations += 1;
                }
            }
        }
    }
    Ok(violations)
}

// ---------------------------------------------------------------------------
// Limiting-subgradient witness
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize)]
pub struct FrechetSample {
    pub radius: f64,
    /// Minimum over the sampled directions of
    /// `(L(ϑ+h) − L(ϑ) − ⟨G(ϑ), h⟩)/‖h‖` at `‖h‖ = radius`.
    pub min_quotient: f64,
    /// Whether the radius fits inside the step's guaranteed-smooth ball
    /// (`radius·8·(1+C) ≤ kink gap`); only valid samples feed pass/fail.
    pub valid: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct WitnessStep {
    pub epsilon: f64,
    pub distance: f64,
    pub grad_gap: f64,
    pub kink_gap: f64,
    pub fd_step: f64,
    pub fd_relative_error: f64,
    pub sign_violations: usize,
    /// Max over samples and hidden units of
    /// `|d_g(N^{k,ϑ}(x)) − d_g(N^{k,θ}(x))|`: the backward factors along the
    /// witness must converge to their values at `θ`.
    pub backward_factor_gap: f64,
    /// Bit-equality of `∇L_n(ϑ)` at a stabilized `n` with `G(ϑ)`.
    pub smoothed_limit_agrees: bool,
    pub frechet: Vec<FrechetSample>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SubgradientWitness {
    pub seed: u64,
    pub theta: Vec<f64>,
    pub witness_sign: f64,
    pub lipschitz_estimate: f64,
    pub grad_at_theta: Vec<f64>,
    pub sequence: Vec<Vec<f64>>,
    pub grads: Vec<Vec<f64>>,
    pub distances: Vec<f64>,
    pub grad_gaps: Vec<f64>,
    /// Per step, the sampled minimum quotient over all directions and radii.
    pub frechet_quotients: Vec<f64>,
    pub frechet_at_theta: Vec<FrechetSample>,
    pub steps: Vec<WitnessStep>,
}

pub const WITNESS_FD_TOL: f64 = 1e-4;
pub const WITNESS_GAP_TOL: f64 = 1e-8;
pub const FRECHET_QUOTIENT_TOL: f64 = 1e-6;

impl SubgradientWitness {
    /// Findings that keep this witness from certifying the limiting
    /// Fréchet-subgradient property; empty means pass.
    pub fn findings(&self) -> Vec<String> {
        let mut findings = Vec::new();
        if self.distances.windows(2).any(|w| w[1] >= w[0]) {
            findings.push("witness distances are not strictly decreasing".into());
        }
        if self
            .distances
            .windows(2)
            .any(|w| w[1] > 0.51 * w[0])
        {
            findings.push("witness distances do not halve per step".into());
        }
        match self.distances.last() {
            Some(&d) if d <= WITNESS_GAP_TOL => {}
            _ => findings.push(format!("witness distance does not reach {WITNESS_GAP_TOL:e}")),
        }
        match self.grad_gaps.last() {
            Some(&g) if g <= WITNESS_GAP_TOL => {}
            _ => findings.push(format!(
                "gradient gap does not reach {WITNESS_GAP_TOL:e} at the last step"
            )),
        }
        for (i, step) in self.steps.iter().enumerate() {
            if step.fd_relative_error > WITNESS_FD_TOL {
                findings.push(format!(
                    "step {i}: finite differences disagree with the gradient ({:.3e})",
                    step.fd_relative_error
                ));
            }
            if step.sign_violations > 0 {
                findings.push(format!(
                    "step {i}: {} pre-activation sign violations",
                    step.sign_violations
                ));
            }
            if !step.smoothed_limit_agrees {
                findings.push(format!("step {i}: stabilized smoothed gradient mismatch"));
            }
            if i + 1 == self.steps.len() && step.backward_factor_gap > 1e-6 {
                findings.push(format!(
                    "backward factors do not converge along the witness ({:.3e})",
                    step.backward_factor_gap
                ));
            }
            if let Some(sample) = step.frechet.iter().rev().find(|s| s.valid) {
                if sample.min_quotient < -FRECHET_QUOTIENT_TOL {
                    findings.push(format!(
                        "step {i}: quotient {:.3e} at radius {:.3e}",
                        sample.min_quotient, sample.radius
                    ));
                }
            }
        }
        findings
    }

    pub fn passes(&self) -> bool {
        self.findings().is_empty()
    }
}

pub struct WitnessOptions {
    pub eps_start: f64,
    /// Hard cap on the number of halvings; the sweep stops earlier, at the
    /// first step where both the distance and the gradient gap are at or
    /// below `target`. Never undershooting keeps the kink gap, and with it
    /// the attainable finite-difference accuracy, as large as possible.
    pub max_halvings: usize,
    pub target: f64,
    pub input_box: (f64, f64),
    pub sign_check_inputs: usize,
    pub seed: u64,
}

impl Default for WitnessOptions {
    fn default() -> Self {
        Self {
            eps_start: 1e-2,
            max_halvings: 60,
            target: 9.5e-9,
            input_box: (-1.0, 1.0),
            sign_check_inputs: 100,
            seed: 0,
        }
    }
}

/// Builds the left-approach sequence `ϑ_n → θ` and verifies, per step, that
/// the risk is differentiable there empirically (finite differences match
/// `G(ϑ_n)`), that the sampled Fréchet quotients are nonnegative within
/// tolerance on the valid radii, and that `G(ϑ_n) → G(θ)`.
#[allow(clippy::too_many_arguments)]
pub fn limiting_subgradient_check(
    theta: &ParamVector,
    arch: &Architecture,
    measure: &EmpiricalMeasure,
    loss: &Loss,
    act: &PiecewiseActivation,
    fam: &ApproximantFamily,
    n_dirs: usize,
    radii: &[f64],
    options: &WitnessOptions,
) -> Result<SubgradientWitness> {
    if n_dirs == 0 {
        return Err(Error::InvalidArgument("need at least one probe direction".into()));
    }
    if radii.is_empty()
        || radii.iter().any(|&r| !r.is_finite() || r <= 0.0)
        || radii.windows(2).any(|w| w[0] <= w[1])
    {
        return Err(Error::InvalidArgument(
            "radii must be strictly decreasing and positive".into(),
        ));
    }
    let mut input_box = options.input_box;
    if let Some((lo, hi)) = measure.input_bounds() {
        input_box = (input_box.0.min(lo), input_box.1.max(hi));
    }
    let eps_schedule: Vec<f64> = (0..=options.max_halvings)
        .map(|j| options.eps_start * 0.5_f64.powi(j as i32))
        .collect();
    let seq = left_approach_with_seed(theta, arch, input_box, &eps_schedule, act, options.seed)?;
    let c = seq.lipschitz_estimate;

    let grad_at_theta = backprop_generalized(theta, arch, measure, loss, act)?;
    let mut gen = rng(options.seed ^ 0x5151_5151);
    let directions: Vec<Vec<f64>> = (0..n_dirs)
        .map(|_| unit_direction(theta.len(), &mut gen))
        .collect();

    let theta_gap = min_kink_distance(theta, arch, measure, act)?;
    let frechet_at_theta = frechet_samples(
        theta, arch, measure, loss, act, &grad_at_theta, &directions, radii, theta_gap, c,
    )?;

    let mut steps = Vec::new();
    let mut sequence = Vec::new();
    let mut grads = Vec::new();
    let mut distances = Vec::new();
    let mut grad_gaps = Vec::new();
    let mut frechet_quotients = Vec::new();
    for (step_idx, vartheta) in seq.params.iter().enumerate() {
        let distance = l2_distance(theta.as_slice(), vartheta.as_slice());
        let grad = backprop_generalized(vartheta, arch, measure, loss, act)?;
        let grad_gap = grad.distance(&grad_at_theta);
        let kink_gap = min_kink_distance(vartheta, arch, measure, act)?;

        // FD step small enough that no stencil point can move a
        // pre-activation across a kink: one coordinate step of size h moves
        // pre-activations by at most s_max·h to first order.
        let fd_step = if kink_gap.is_finite() {
            let s_max = max_preactivation_sensitivity(vartheta, arch, measure, act)?;
            (kink_gap / (8.0 * (1.0 + s_max))).min(1e-6)
        } else {
            1e-6
        };
        let fd = fd_gradient(
            |t| risk(t, arch, measure, loss, act).expect("risk evaluation"),
            vartheta,
            fd_step,
        );
        let fd_err = l2_distance(&fd, grad.as_slice()) / grad.l2_norm().max(1.0);

        let sign_violations = count_sign_violations(
            theta,
            vartheta,
            arch,
            act,
            input_box,
            seq.witness_sign,
            options.sign_check_inputs,
            options.seed ^ (step_idx as u64).wrapping_mul(0x9e37),
        )?;

        let backward_factor_gap = backward_factor_gap(theta, vartheta, arch, measure, act)?;

        let smoothed_limit_agrees =
            stabilized_gradient_agrees(vartheta, arch, measure, loss, fam, &grad, kink_gap)?;

        let frechet = frechet_samples(
            vartheta, arch, measure, loss, act, &grad, &directions, radii, kink_gap, c,
        )?;
        frechet_quotients.push(
            frechet
                .iter()
                .map(|s| s.min_quotient)
                .fold(f64::INFINITY, f64::min),
        );

        steps.push(WitnessStep {
            epsilon: seq.epsilons[step_idx],
            distance,
            grad_gap,
            kink_gap,
            fd_step,
            fd_relative_error: fd_err,
            sign_violations,
            backward_factor_gap,
            smoothed_limit_agrees,
            frechet,
        });
        sequence.push(vartheta.as_slice().to_vec());
        grads.push(grad.into_vec());
        distances.push(distance);
        grad_gaps.push(grad_gap);
        if distance <= options.target && grad_gap <= options.target {
            break;
        }
    }

    Ok(SubgradientWitness {
        seed: options.seed,
        theta: theta.as_slice().to_vec(),
        witness_sign: seq.witness_sign,
        lipschitz_estimate: c,
        grad_at_theta: grad_at_theta.into_vec(),
        sequence,
        grads,
        distances,
        grad_gaps,
        frechet_quotients,
        frechet_at_theta,
        steps,
    })
}

/// Max over samples and hidden units of the difference in generalized
/// derivatives of the pre-activations between two parameter vectors.
fn backward_factor_gap(
    theta: &ParamVector,
    vartheta: &ParamVector,
    arch: &Architecture,
    measure: &EmpiricalMeasure,
    act: &PiecewiseActivation,
) -> Result<f64> {
    let mut gap = 0.0_f64;
    for s in measure.samples() {
        let base = forward(theta, arch, &s.x, act)?;
        let moved = forward(vartheta, arch, &s.x, act)?;
        for k in 1..arch.depth() {
            for (p, q) in moved.preactivation(k).iter().zip(base.preactivation(k)) {
                gap = gap
                    .max((act.generalized_derivative(*p) - act.generalized_derivative(*q)).abs());
            }
        }
    }
    Ok(gap)
}

/// Largest `|∂N^{k}_i/∂θ_l|` over samples, layers, units, and coordinates;
/// bounds how far one finite-difference coordinate step moves any
/// pre-activation.
fn max_preactivation_sensitivity(
    theta: &ParamVector,
    arch: &Architecture,
    measure: &EmpiricalMeasure,
    act: &PiecewiseActivation,
) -> Result<f64> {
    let mut s_max = 0.0_f64;
    for s in measure.samples() {
        for k in 1..=arch.depth() {
            let rows = realization_partials(
                theta,
                arch,
                &s.x,
                |v| act.value(v),
                |v| act.generalized_derivative(v),
                k,
            )?;
            for row in rows {
                for partial in row {
                    s_max = s_max.max(partial.abs());
                }
            }
        }
    }
    Ok(s_max)
}

fn stabilized_gradient_agrees(
    vartheta: &ParamVector,
    arch: &Architecture,
    measure: &EmpiricalMeasure,
    loss: &Loss,
    fam: &ApproximantFamily,
    grad: &GradientVector,
    kink_gap: f64,
) -> Result<bool> {
    // pre-activations exactly on kinks are reproduced by every n, so only the
    // positive gap constrains the index
    let gap = if kink_gap == 0.0 {
        min_positive_kink_distance(vartheta, arch, measure, fam.base())?
    } else {
        kink_gap
    };
    let n = if gap.is_finite() && gap > 0.0 {
        let needed = fam.delta() / gap;
        let mut n = 1u64;
        while (n as f64) < needed && n < 1 << 50 {
            n <<= 1;
        }
        n
    } else {
        1
    };
    let smoothed = backprop_smoothed(vartheta, arch, measure, loss, fam, n)?;
    Ok(&smoothed == grad)
}

#[allow(clippy::too_many_arguments)]
fn frechet_samples(
    at: &ParamVector,
    arch: &Architecture,
    measure: &EmpiricalMeasure,
    loss: &Loss,
    act: &PiecewiseActivation,
    grad: &GradientVector,
    directions: &[Vec<f64>],
    radii: &[f64],
    kink_gap: f64,
    lipschitz: f64,
) -> Result<Vec<FrechetSample>> {
    let base = risk(at, arch, measure, loss, act)?;
    let mut samples = Vec::with_capacity(radii.len());
    for &radius in radii {
        let valid = radius * 8.0 * (1.0 + lipschitz) <= kink_gap;
        let mut min_quotient = f64::INFINITY;
        for dir in directions {
            let mut moved = at.clone();
            for (v, d) in moved.as_mut_slice().iter_mut().zip(dir) {
                *v += radius * d;
            }
            let inner: f64 = grad.as_slice().iter().zip(dir).map(|(g, d)| g * d).sum();
            let quotient = (risk(&moved, arch, measure, loss, act)? - base) / radius - inner;
            min_quotient = min_quotient.min(quotient);
        }
        samples.push(FrechetSample { radius, min_quotient, valid });
    }
    Ok(samples)
}

fn unit_direction(dim: usize, gen: &mut rand_chacha::ChaCha8Rng) -> Vec<f64> {
    use rand_distr::{Distribution, StandardNormal};
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(gen)).collect();
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|a| a / norm).collect();
        }
    }
}

fn l2_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(p, q)| (p - q) * (p - q))
        .sum::<f64>()
        .sqrt()
}

// ---------------------------------------------------------------------------
// Smooth-region agreement
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize)]
pub struct SmoothAgreement {
    /// `‖FD(L, h) − G(θ)‖ / max(1, ‖G(θ)‖)`.
    pub discrepancy: f64,
    pub min_kink_distance: f64,
    pub margin_required: f64,
    /// Whether every sample pre-activation clears the kink margin; when
    /// false the discrepancy is reported but not meaningful (the FD stencil
    /// may straddle a kink).
    pub margin_ok: bool,
    pub h: f64,
}

/// Compares the finite-difference gradient of the risk with the generalized
/// gradient at a point asserted to lie in a smooth region.
pub fn smooth_region_agreement(
    theta: &ParamVector,
    arch: &Architecture,
    measure: &EmpiricalMeasure,
    loss: &Loss,
    act: &PiecewiseActivation,
    h: f64,
) -> Result<SmoothAgreement> {
    if !h.is_finite() || h <= 0.0 {
        return Err(Error::InvalidArgument("finite-difference step must be positive".into()));
    }
    let min_dist = min_kink_distance(theta, arch, measure, act)?;
    let margin_required = 10.0 * h * theta.l2_norm().max(1.0);
    let margin_ok = min_dist >= margin_required;
    let grad = backprop_generalized(theta, arch, measure, loss, act)?;
    let fd = fd_gradient(
        |t| risk(t, arch, measure, loss, act).expect("risk evaluation"),
        theta,
        h,
    );
    let discrepancy = l2_distance(&fd, grad.as_slice()) / grad.l2_norm().max(1.0);
    Ok(SmoothAgreement {
        discrepancy,
        min_kink_distance: min_dist,
        margin_required,
        margin_ok,
        h,
    })
}

// ---------------------------------------------------------------------------
// Lipschitz probe
// ---------------------------------------------------------------------------

/// Max sampled difference quotient `|L(θ) − L(ϑ)| / ‖θ − ϑ‖` over pairs in
/// the ball. Each pair takes a short step from a uniform ball point along
/// the locally steepest direction (estimated by finite differences), so the
/// quotient reads off `‖∇L‖` there and the max concentrates tightly across
/// seeds.
#[allow(clippy::too_many_arguments)]
pub fn lipschitz_probe(
    arch: &Architecture,
    measure: &EmpiricalMeasure,
    loss: &Loss,
    act: &PiecewiseActivation,
    ball_center: &ParamVector,
    ball_radius: f64,
    n_pairs: usize,
    seed: u64,
) -> Result<f64> {
    ball_center.check_len(arch)?;
    if !ball_radius.is_finite() || ball_radius <= 0.0 || n_pairs == 0 {
        return Err(Error::InvalidArgument("need a positive radius and at least one pair".into()));
    }
    let mut gen = rng(seed);
    let d = arch.param_count();
    let step = 1e-4 * ball_radius;
    let mut worst: f64 = 0.0;
    for _ in 0..n_pairs {
        let dir = unit_direction(d, &mut gen);
        let r = ball_radius * gen.random_range(0.0..1.0_f64).powf(1.0 / d as f64);
        let mut a = ball_center.clone();
        for (v, u) in a.as_mut_slice().iter_mut().zip(&dir) {
            *v += r * u;
        }
        let grad = fd_gradient(
            |t| risk(t, arch, measure, loss, act).expect("risk evaluation"),
            &a,
            step,
        );
        let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        let step_dir = if norm > 0.0 {
            grad.into_iter().map(|g| g / norm).collect()
        } else {
            unit_direction(d, &mut gen)
        };
        let mut b = a.clone();
        for (v, u) in b.as_mut_slice().iter_mut().zip(&step_dir) {
            *v += step * u;
        }
        // project back into the ball if the step left it
        let off = l2_distance(b.as_slice(), ball_center.as_slice());
        if off > ball_radius {
            let scale = ball_radius / off;
            for (v, c) in b.as_mut_slice().iter_mut().zip(ball_center.as_slice()) {
                *v = c + (*v - c) * scale;
            }
        }
        let dist = l2_distance(a.as_slice(), b.as_slice());
        if dist == 0.0 {
            continue;
        }
        let la = risk(&a, arch, measure, loss, act)?;
        let lb = risk(&b, arch, measure, loss, act)?;
        worst = worst.max((la - lb).abs() / dist);
    }
    Ok(worst)
}

// ---------------------------------------------------------------------------
// Uniform-bound probe
// ---------------------------------------------------------------------------

/// Sampling box for [`uniform_bound_probe`]; zero-width boxes pin the
/// corresponding coordinate.
#[derive(Clone, Debug)]
pub struct ProbeBox {
    pub theta_lo: Vec<f64>,
    pub theta_hi: Vec<f64>,
    pub input_lo: Vec<f64>,
    pub input_hi: Vec<f64>,
}

impl ProbeBox {
    /// Box of radius `r` around a center, with inputs in `[a, b]^{l_0}`.
    pub fn around(theta: &ParamVector, r: f64, input_box: (f64, f64), input_dim: usize) -> Self {
        Self {
            theta_lo: theta.as_slice().iter().map(|v| v - r).collect(),
            theta_hi: theta.as_slice().iter().map(|v| v + r).collect(),
            input_lo: vec![input_box.0; input_dim],
            input_hi: vec![input_box.1; input_dim],
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct LayerBoundReport {
    pub layer: usize,
    pub sup_preactivation: f64,
    pub sup_activation_value: f64,
    pub sup_activation_derivative: f64,
    pub sup_parameter_partial: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct UniformBoundReport {
    pub per_layer: Vec<LayerBoundReport>,
    pub all_finite: bool,
}

/// Empirical sup over sampled `(θ, n, x)` of `|N^{k,θ}_n(x)|`,
/// `|G_n(N^{k,θ}_n(x))|`, `|G_n'(N^{k,θ}_n(x))|`, and `|∂N^{k,θ}_n/∂θ_j|`,
/// per layer.
pub fn uniform_bound_probe(
    arch: &Architecture,
    fam: &ApproximantFamily,
    probe_box: &ProbeBox,
    n_schedule: &[u64],
    samples: usize,
    seed: u64,
) -> Result<UniformBoundReport> {
    if probe_box.theta_lo.len() != arch.param_count()
        || probe_box.theta_hi.len() != arch.param_count()
        || probe_box.input_lo.len() != arch.input_dim()
        || probe_box.input_hi.len() != arch.input_dim()
    {
        return Err(Error::DimensionMismatch("probe box shape".into()));
    }
    if probe_box
        .theta_lo
        .iter()
        .zip(&probe_box.theta_hi)
        .chain(probe_box.input_lo.iter().zip(&probe_box.input_hi))
        .any(|(lo, hi)| !lo.is_finite() || !hi.is_finite() || lo > hi)
    {
        return Err(Error::InvalidArgument("probe box has inverted bounds".into()));
    }
    if n_schedule.is_empty() || n_schedule.contains(&0) {
        return Err(Error::InvalidArgument("need approximant indices n >= 1".into()));
    }
    let mut gen = rng(seed);
    let mut draw = |lo: &[f64], hi: &[f64]| -> Vec<f64> {
        lo.iter()
            .zip(hi)
            .map(|(&a, &b)| if a == b { a } else { gen.random_range(a..=b) })
            .collect()
    };
    let thetas: Vec<ParamVector> = (0..samples.max(1))
        .map(|_| ParamVector::new(draw(&probe_box.theta_lo, &probe_box.theta_hi)))
        .collect();
    let inputs: Vec<Vec<f64>> = (0..samples.max(1))
        .map(|_| draw(&probe_box.input_lo, &probe_box.input_hi))
        .collect();

    let mut per_layer: Vec<LayerBoundReport> = (1..=arch.depth())
        .map(|k| LayerBoundReport {
            layer: k,
            sup_preactivation: 0.0,
            sup_activation_value: 0.0,
            sup_activation_derivative: 0.0,
            sup_parameter_partial: 0.0,
        })
        .collect();
    for theta in &thetas {
        for x in &inputs {
            for &n in n_schedule {
                let value = |v: f64| fam.value(n, v);
                let deriv = |v: f64| fam.derivative(n, v);
                let trace = crate::network::forward_approx(theta, arch, x, fam, n)?;
                for k in 1..=arch.depth() {
                    let report = &mut per_layer[k - 1];
                    for &pre in trace.preactivation(k) {
                        report.sup_preactivation = report.sup_preactivation.max(pre.abs());
                        report.sup_activation_value =
                            report.sup_activation_value.max(value(pre).abs());
                        report.sup_activation_derivative =
                            report.sup_activation_derivative.max(deriv(pre).abs());
                    }
                    let rows = realization_partials(theta, arch, x, value, deriv, k)?;
                    for row in rows {
                        for partial in row {
                            report.sup_parameter_partial =
                                report.sup_parameter_partial.max(partial.abs());
                        }
                    }
                }
            }
        }
    }
    let all_finite = per_layer.iter().all(|r| {
        r.sup_preactivation.is_finite()
            && r.sup_activation_value.is_finite()
            && r.sup_activation_derivative.is_finite()
            && r.sup_parameter_partial.is_finite()
    });
    Ok(UniformBoundReport { per_layer, all_finite })
}
