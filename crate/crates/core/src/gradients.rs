//! Three independent gradient computations for the risk functional: reverse
//! accumulation through the nonsmooth activation's generalized derivative
//! (the production path), reverse accumulation through the C¹ approximants
//! `G_n`, and a literal path-sum oracle that enumerates every index chain of
//! the closed-form partial-derivative formulas.
//!
//! The path-sum is exponential in depth and exists purely for verification;
//! it carries a hard size guard. At kink pre-activations the backward factor
//! is exactly the prescribed kink value — no averaging, no subgradient
//! intervals — which is what makes the limit gradient single-valued.

use serde::{Deserialize, Serialize};

use crate::activation::{ApproximantFamily, PiecewiseActivation};
use crate::error::{Error, Result};
use crate::network::{forward_with, Architecture, ForwardTrace, ParamIndex, ParamVector};
use crate::risk::{EmpiricalMeasure, Loss};

/// Hard guard on the number of index chains the path-sum oracle may touch.
pub const PATHSUM_CHAIN_LIMIT: u128 = 1_000_000;

/// Flat gradient vector aligned with the parameter layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GradientVector {
    g: Vec<f64>,
}

impl GradientVector {
    pub fn new(g: Vec<f64>) -> Result<Self> {
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("gradient vector".into()));
        }
        Ok(Self { g })
    }

    pub fn len(&self) -> usize {
        self.g.len()
    }

    pub fn is_empty(&self) -> bool {
        self.g.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.g
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.g
    }

    pub fn l2_norm(&self) -> f64 {
        self.g.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// `‖self − other‖₂`.
    pub fn distance(&self, other: &Self) -> f64 {
        debug_assert_eq!(self.len(), other.len());
        self.g
            .iter()
            .zip(&other.g)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    /// Little-endian 64-bit float serialization for golden fixtures.
    pub fn to_le_bytes(&self) -> Vec<u8> {
        self.g.iter().flat_map(|v| v.to_le_bytes()).collect()
    }

    pub fn from_le_bytes(bytes: &[u8]) -> Result<Self> {
        if !bytes.len().is_multiple_of(8) {
            return Err(Error::InvalidArgument("byte length is not a multiple of 8".into()));
        }
        Self::new(
            bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect(),
        )
    }
}

fn check_range(cond: bool, what: impl Fn() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::IndexOutOfRange(what()))
    }
}

fn chain_count(arch: &Architecture, k: usize, upper: usize) -> u128 {
    (k..=upper).map(|w| arch.width(w) as u128).product()
}

fn guard_chains(arch: &Architecture, k: usize, upper: usize) -> Result<()> {
    let chains = chain_count(arch, k, upper);
    if chains > PATHSUM_CHAIN_LIMIT {
        return Err(Error::PathSumTooLarge { chains, limit: PATHSUM_CHAIN_LIMIT });
    }
    Ok(())
}

/// Visits every tuple `(v_k, …, v_K)` with `1 ≤ v_w ≤ ℓ_w`, in ascending
/// lexicographic order.
fn for_each_chain(widths: &[usize], mut f: impl FnMut(&[usize])) {
    let mut chain = vec![1usize; widths.len()];
    loop {
        f(&chain);
        let mut pos = widths.len();
        loop {
            if pos == 0 {
                return;
            }
            pos -= 1;
            if chain[pos] < widths[pos] {
                chain[pos] += 1;
                chain[pos + 1..].fill(1);
                break;
            }
        }
    }
}

/// Product of the weight and activation-derivative factors along one chain:
/// `Π_{p=k+1}^{K} w^p_{v_p, v_{p−1}} · g'(N^{p−1}_{v_{p−1}}(x))`.
fn chain_product<D>(
    theta: &ParamVector,
    arch: &Architecture,
    trace: &ForwardTrace,
    deriv_fn: &D,
    k: usize,
    chain: &[usize],
) -> f64
where
    D: Fn(f64) -> f64,
{
    let flat = theta.as_slice();
    let mut prod = 1.0;
    for (step, p) in (k + 1..k + chain.len()).enumerate() {
        let v_prev = chain[step];
        let v_cur = chain[step + 1];
        let w = flat[arch
            .weight_index(p, v_cur, v_prev)
            .expect("chain indices are in range")];
        prod *= w * deriv_fn(trace.preactivation(p - 1)[v_prev - 1]);
    }
    prod
}

/// Literal path-sum evaluation of `∂N^{K}_h / ∂w^k_{i,j}`: enumerates every
/// index chain `v_k..v_K`, multiplying the input factor
/// `[g(N^{k−1}_j(x)) for k > 1, x_j for k = 1]`, the endpoint indicators, and
/// the weight/derivative factors along the chain.
#[allow(clippy::too_many_arguments)]
pub fn pathsum_partial_weight<V, D>(
    theta: &ParamVector,
    arch: &Architecture,
    x: &[f64],
    act_value: V,
    act_deriv: D,
    k: usize,
    i: usize,
    j: usize,
    upper: usize,
    h: usize,
) -> Result<f64>
where
    V: Fn(f64) -> f64,
    D: Fn(f64) -> f64,
{
    theta.check_len(arch)?;
    check_range(
        (1..=arch.depth()).contains(&upper) && (1..=upper).contains(&k),
        || format!("layers k={k}, K={upper}"),
    )?;
    check_range(
        (1..=arch.width(k)).contains(&i)
            && (1..=arch.width(k - 1)).contains(&j)
            && (1..=arch.width(upper)).contains(&h),
        || format!("units i={i}, j={j}, h={h}"),
    )?;
    guard_chains(arch, k, upper)?;
    let trace = forward_with(theta, arch, x, &act_value)?;
    let input_factor = if k == 1 {
        x[j - 1]
    } else {
        act_value(trace.preactivation(k - 1)[j - 1])
    };
    Ok(pathsum_weight_from_trace(
        theta, arch, &trace, &act_deriv, input_factor, k, i, upper, h,
    ))
}

#[allow(clippy::too_many_arguments)]
fn pathsum_weight_from_trace<D>(
    theta: &ParamVector,
    arch: &Architecture,
    trace: &ForwardTrace,
    act_deriv: &D,
    input_factor: f64,
    k: usize,
    i: usize,
    upper: usize,
    h: usize,
) -> f64
where
    D: Fn(f64) -> f64,
{
    let widths: Vec<usize> = (k..=upper).map(|w| arch.width(w)).collect();
    let mut sum = 0.0;
    for_each_chain(&widths, |chain| {
        let indicators = ((chain[0] == i) as u8 as f64) * ((chain[chain.len() - 1] == h) as u8 as f64);
        if indicators != 0.0 {
            sum += input_factor * indicators * chain_product(theta, arch, trace, act_deriv, k, chain);
        }
    });
    sum
}

/// Literal path-sum evaluation of `∂N^{K}_h / ∂b^k_i`: endpoint indicators
/// and chain factors only.
#[allow(clippy::too_many_arguments)]
pub fn pathsum_partial_bias<V, D>(
    theta: &ParamVector,
    arch: &Architecture,
    x: &[f64],
    act_value: V,
    act_deriv: D,
    k: usize,
    i: usize,
    upper: usize,
    h: usize,
) -> Result<f64>
where
    V: Fn(f64) -> f64,
    D: Fn(f64) -> f64,
{
    theta.check_len(arch)?;
    check_range(
        (1..=arch.depth()).contains(&upper) && (1..=upper).contains(&k),
        || format!("layers k={k}, K={upper}"),
    )?;
    check_range(
        (1..=arch.width(k)).contains(&i) && (1..=arch.width(upper)).contains(&h),
        || format!("units i={i}, h={h}"),
    )?;
    guard_chains(arch, k, upper)?;
    let trace = forward_with(theta, arch, x, &act_value)?;
    Ok(pathsum_bias_from_trace(theta, arch, &trace, &act_deriv, k, i, upper, h))
}

#[allow(clippy::too_many_arguments)]
fn pathsum_bias_from_trace<D>(
    theta: &ParamVector,
    arch: &Architecture,
    trace: &ForwardTrace,
    act_deriv: &D,
    k: usize,
    i: usize,
    upper: usize,
    h: usize,
) -> f64
where
    D: Fn(f64) -> f64,
{
    let widths: Vec<usize> = (k..=upper).map(|w| arch.width(w)).collect();
    let mut sum = 0.0;
    for_each_chain(&widths, |chain| {
        let indicators = ((chain[0] == i) as u8 as f64) * ((chain[chain.len() - 1] == h) as u8 as f64);
        if indicators != 0.0 {
            sum += indicators * chain_product(theta, arch, trace, act_deriv, k, chain);
        }
    });
    sum
}

/// Per-sample reverse accumulation. Accumulation order is fixed: the `∂_θ H`
/// seed first, then layers in descending order with ascending unit indices.
fn sample_gradient<D>(
    theta: &ParamVector,
    arch: &Architecture,
    trace: &ForwardTrace,
    y: &[f64],
    loss: &Loss,
    deriv_fn: &D,
) -> Vec<f64>
where
    D: Fn(f64) -> f64,
{
    let flat = theta.as_slice();
    let depth = arch.depth();
    let z = trace.output();
    let mut g = if loss.theta_independent() {
        vec![0.0; arch.param_count()]
    } else {
        loss.grad_theta(z, y, flat)
    };
    let mut delta = loss.grad_z(z, y, flat);
    for k in (1..=depth).rev() {
        let input: &[f64] = if k == 1 { trace.input() } else { trace.activation(k - 1) };
        let w_in = arch.width(k - 1);
        let base = arch.offset(k - 1);
        for i in 1..=arch.width(k) {
            let d_i = delta[i - 1];
            g[arch.width(k) * w_in + i + base - 1] += d_i;
            let row = (i - 1) * w_in + base;
            for (j, &inp) in input.iter().enumerate() {
                g[row + j] += d_i * inp;
            }
        }
        if k > 1 {
            let pre = trace.preactivation(k - 1);
            delta = (1..=w_in)
                .map(|j| {
                    let mut acc = 0.0;
                    for i in 1..=arch.width(k) {
                        acc += delta[i - 1] * flat[(i - 1) * w_in + j + base - 1];
                    }
                    acc * deriv_fn(pre[j - 1])
                })
                .collect();
        }
    }
    g
}

fn backprop_with<V, D>(
    theta: &ParamVector,
    arch: &Architecture,
    measure: &EmpiricalMeasure,
    loss: &Loss,
    value_fn: V,
    deriv_fn: D,
) -> Result<GradientVector>
where
    V: Fn(f64) -> f64 + Sync,
    D: Fn(f64) -> f64 + Sync,
{
    theta.check_len(arch)?;
    measure.check_dims(arch)?;
    loss.check_dims(arch)?;
    use rayon::prelude::*;
    let per_sample: Vec<Vec<f64>> = measure
        .samples()
        .par_iter()
        .map(|s| -> Result<Vec<f64>> {
            let trace = forward_with(theta, arch, &s.x, &value_fn)?;
            Ok(sample_gradient(theta, arch, &trace, &s.y, loss, &deriv_fn))
        })
        .collect::<Result<_>>()?;
    let mut total = vec![0.0; arch.param_count()];
    for (s, gs) in measure.samples().iter().zip(&per_sample) {
        for (acc, v) in total.iter_mut().zip(gs) {
            *acc += s.w * v;
        }
    }
    GradientVector::new(total)
}

/// The generalized gradient: reverse accumulation with the forward trace of
/// `A` and backward factors `d_g A` at the stored pre-activations.
pub fn backprop_generalized(
    theta: &ParamVector,
    arch: &Architecture,
    measure: &EmpiricalMeasure,
    loss: &Loss,
    act: &PiecewiseActivation,
) -> Result<GradientVector> {
    backprop_with(
        theta,
        arch,
        measure,
        loss,
        |v| act.value(v),
        |v| act.generalized_derivative(v),
    )
}

/// Exact gradient of the smoothed risk `L_n`; converges to
/// [`backprop_generalized`] as `n → ∞`, with eventual bit-equality.
pub fn backprop_smoothed(
    theta: &ParamVector,
    arch: &Architecture,
    measure: &EmpiricalMeasure,
    loss: &Loss,
    fam: &ApproximantFamily,
    n: u64,
) -> Result<GradientVector> {
    assert!(n >= 1, "approximant index must be at least 1");
    backprop_with(
        theta,
        arch,
        measure,
        loss,
        |v| fam.value(n, v),
        |v| fam.derivative(n, v),
    )
}

/// Risk gradient assembled entry-by-entry from the literal path sums and the
/// chain rule `∂_θ H + Σ_h ∂_h H · ∂N^L_h/∂θ_l`. Oracle only; guarded.
pub fn pathsum_risk_gradient<V, D>(
    theta: &ParamVector,
    arch: &Architecture,
    measure: &EmpiricalMeasure,
    loss: &Loss,
    act_value: V,
    act_deriv: D,
) -> Result<GradientVector>
where
    V: Fn(f64) -> f64,
    D: Fn(f64) -> f64,
{
    theta.check_len(arch)?;
    measure.check_dims(arch)?;
    loss.check_dims(arch)?;
    guard_chains(arch, 1, arch.depth())?;
    let depth = arch.depth();
    let d = arch.param_count();
    let mut total = vec![0.0; d];
    let mut per_sample = vec![vec![0.0; d]; measure.samples().len()];
    for (s_idx, s) in measure.samples().iter().enumerate() {
        let trace = forward_with(theta, arch, &s.x, &act_value)?;
        let gz = loss.grad_z(trace.output(), &s.y, theta.as_slice());
        let gt = loss.grad_theta(trace.output(), &s.y, theta.as_slice());
        for l in 0..d {
            let mut entry = gt[l];
            for h in 1..=arch.width(depth) {
                let partial = match arch.decompose(l)? {
                    ParamIndex::Weight { k, i, j } => {
                        let input_factor = if k == 1 {
                            s.x[j - 1]
                        } else {
                            act_value(trace.preactivation(k - 1)[j - 1])
                        };
                        pathsum_weight_from_trace(
                            theta, arch, &trace, &act_deriv, input_factor, k, i, depth, h,
                        )
                    }
                    ParamIndex::Bias { k, i } => {
                        pathsum_bias_from_trace(theta, arch, &trace, &act_deriv, k, i, depth, h)
                    }
                };
                entry += gz[h - 1] * partial;
            }
            per_sample[s_idx][l] = entry;
        }
    }
    for (s, gs) in measure.samples().iter().zip(&per_sample) {
        for (acc, v) in total.iter_mut().zip(gs) {
            *acc += s.w * v;
        }
    }
    GradientVector::new(total)
}

/// All partials `∂N^{K}_h/∂θ_l` of one realization layer, by reverse
/// accumulation seeded with each output unit. Rows indexed by `h − 1`.
pub fn realization_partials<V, D>(
    theta: &ParamVector,
    arch: &Architecture,
    x: &[f64],
    value_fn: V,
    deriv_fn: D,
    upper: usize,
) -> Result<Vec<Vec<f64>>>
where
    V: Fn(f64) -> f64,
    D: Fn(f64) -> f64,
{
    theta.check_len(arch)?;
    check_range((1..=arch.depth()).contains(&upper), || format!("layer {upper}"))?;
    let trace = forward_with(theta, arch, x, &value_fn)?;
    let flat = theta.as_slice();
    let mut rows = Vec::with_capacity(arch.width(upper));
    for h in 1..=arch.width(upper) {
        let mut g = vec![0.0; arch.param_count()];
        let mut delta = vec![0.0; arch.width(upper)];
        delta[h - 1] = 1.0;
        for k in (1..=upper).rev() {
            let input: &[f64] = if k == 1 { trace.input() } else { trace.activation(k - 1) };
            let w_in = arch.width(k - 1);
            let base = arch.offset(k - 1);
            for i in 1..=arch.width(k) {
                let d_i = delta[i - 1];
                g[arch.width(k) * w_in + i + base - 1] += d_i;
                let row = (i - 1) * w_in + base;
                for (j, &inp) in input.iter().enumerate() {
                    g[row + j] += d_i * inp;
                }
            }
            if k > 1 {
                let pre = trace.preactivation(k - 1);
                delta = (1..=w_in)
                    .map(|j| {
                        let mut acc = 0.0;
                        for i in 1..=arch.width(k) {
                            acc += delta[i - 1] * flat[(i - 1) * w_in + j + base - 1];
                        }
                        acc * deriv_fn(pre[j - 1])
                    })
                    .collect();
            }
        }
        rows.push(g);
    }
    Ok(rows)
}
