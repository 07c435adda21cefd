//! Piecewise-C¹ scalar activations with explicit kink sets, their single-valued
//! generalized derivatives, and the C¹ approximant family `G_n` built by
//! blending a kink linearization into the original function over shrinking
//! annuli.
//!
//! An activation is a pair `(A, a)` where `A` is continuous on ℝ and C¹ off a
//! finite kink set `S`, and `a` equals `A'` off `S`. On `S` the derivative is
//! prescribed by a kink-value map `g`, giving the total generalized derivative
//! `d_g A`. The approximant `G_n` agrees with `A` outside a radius-`δ/n`
//! neighborhood of `S`, is the affine linearization `g(y)·(x−y) + A(y)` within
//! radius `δ/(2n)` of the nearest kink `y`, and interpolates between the two
//! with a C¹ blending ramp `η` in the annulus between those radii.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

type ScalarFn = dyn Fn(f64) -> f64 + Send + Sync;

/// Side from which the generalized derivative is one-sidedly continuous at
/// every kink.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    /// Direction sign `z` with `lim_{h↓0} d_g(y + z·h) = g(y)` at every kink.
    pub fn continuity_sign(self) -> f64 {
        match self {
            Side::Left => -1.0,
            Side::Right => 1.0,
        }
    }

    /// Sign `z` of the witness inequality `z·(pre(ϑ) − pre(θ)) ≤ 0`: bias
    /// perturbations must push every pre-activation toward the continuity
    /// side, so the witness moves pre-activations in direction
    /// `continuity_sign`, i.e. `z = −continuity_sign`.
    pub fn witness_sign(self) -> f64 {
        -self.continuity_sign()
    }
}

/// Strictly increasing finite set of kink locations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KinkSet {
    points: Vec<f64>,
}

impl KinkSet {
    /// Builds a kink set from arbitrary finite points; sorts them and rejects
    /// duplicates and non-finite entries.
    pub fn new(mut points: Vec<f64>) -> Result<Self> {
        if points.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("kink set".into()));
        }
        points.sort_by(f64::total_cmp);
        if points.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidArgument("duplicate kink points".into()));
        }
        Ok(Self { points })
    }

    pub fn empty() -> Self {
        Self { points: Vec::new() }
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Half-gap `δ = ½·min({|v−w| : v,w distinct kinks} ∪ {1})`.
    ///
    /// Always in `(0, ½]`; the degenerate sets (empty or singleton) give `½`.
    pub fn half_gap(&self) -> f64 {
        let min_gap = self
            .points
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min);
        0.5 * min_gap.min(1.0)
    }

    /// Nearest kink as `(index, distance)`; `None` for the empty set.
    ///
    /// Ties (only possible at distance ≥ δ) resolve to the lower index.
    pub fn nearest(&self, x: f64) -> Option<(usize, f64)> {
        if self.points.is_empty() {
            return None;
        }
        let idx = self.points.partition_point(|&p| p < x);
        let mut best = None;
        for cand in [idx.wrapping_sub(1), idx] {
            if let Some(&p) = self.points.get(cand) {
                let d = (x - p).abs();
                match best {
                    None => best = Some((cand, d)),
                    Some((_, bd)) if d < bd => best = Some((cand, d)),
                    _ => {}
                }
            }
        }
        best
    }

    /// Index of the unique nearest kink for `x` inside the open neighborhood
    /// `O_δ = ∪_i (y_i − δ, y_i + δ)`; rejects points outside it, where the
    /// minimizer may fail to be unique.
    pub fn nearest_kink_index(&self, x: f64) -> Result<usize> {
        let delta = self.half_gap();
        match self.nearest(x) {
            Some((i, d)) if d < delta => Ok(i),
            _ => Err(Error::OutsideKinkNeighborhood { x, delta }),
        }
    }

    /// Exact-match lookup (floating-point equality).
    pub fn position_of(&self, x: f64) -> Option<usize> {
        let idx = self.points.partition_point(|&p| p < x);
        (self.points.get(idx) == Some(&x)).then_some(idx)
    }

    /// Distance from `x` to the kink set (`+∞` when empty).
    pub fn distance(&self, x: f64) -> f64 {
        self.nearest(x).map_or(f64::INFINITY, |(_, d)| d)
    }
}

/// A continuous activation that is C¹ off a finite kink set, together with
/// its off-kink derivative, prescribed kink derivative values, and the side
/// on which those values are one-sidedly continuous.
#[derive(Clone)]
pub struct PiecewiseActivation {
    name: String,
    value: Arc<ScalarFn>,
    offkink_derivative: Arc<ScalarFn>,
    kinks: KinkSet,
    kink_values: Vec<f64>,
    approach_side: Side,
}

impl fmt::Debug for PiecewiseActivation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PiecewiseActivation")
            .field("name", &self.name)
            .field("kinks", &self.kinks.points)
            .field("kink_values", &self.kink_values)
            .field("approach_side", &self.approach_side)
            .finish()
    }
}

impl PiecewiseActivation {
    pub fn new(
        name: impl Into<String>,
        value: Arc<ScalarFn>,
        offkink_derivative: Arc<ScalarFn>,
        kinks: KinkSet,
        kink_values: Vec<f64>,
        approach_side: Side,
    ) -> Result<Self> {
        if kink_values.len() != kinks.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} kink values for {} kinks",
                kink_values.len(),
                kinks.len()
            )));
        }
        if kink_values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("kink values".into()));
        }
        Ok(Self {
            name: name.into(),
            value,
            offkink_derivative,
            kinks,
            kink_values,
            approach_side,
        })
    }

    /// `max{x, 0}` with kink derivative `g(0) = 0` (the left derivative, the
    /// convention of the mainstream autodiff frameworks).
    pub fn relu() -> Self {
        Self::new(
            "relu",
            Arc::new(|x: f64| x.max(0.0)),
            Arc::new(|x: f64| if x > 0.0 { 1.0 } else { 0.0 }),
            KinkSet::new(vec![0.0]).expect("static kink set"),
            vec![0.0],
            Side::Left,
        )
        .expect("static activation")
    }

    /// `max{γx, x}` for `γ ∈ [0, 1)` with `g(0) = γ` (left derivative).
    pub fn leaky_relu(gamma: f64) -> Result<Self> {
        if !gamma.is_finite() {
            return Err(Error::NonFinite("leaky slope".into()));
        }
        Self::new(
            format!("leaky_relu({gamma})"),
            Arc::new(move |x: f64| if x > 0.0 { x } else { gamma * x }),
            Arc::new(move |x: f64| if x > 0.0 { 1.0 } else { gamma }),
            KinkSet::new(vec![0.0])?,
            vec![gamma],
            Side::Left,
        )
    }

    /// `|x|` with configurable `g(0)`.
    ///
    /// The one-sided continuity hypothesis holds only for `g(0) = −1` (left)
    /// or `g(0) = +1` (right); other values build fine but fail validation,
    /// which is what negative-control fixtures rely on.
    pub fn abs_with(kink_value: f64, approach_side: Side) -> Result<Self> {
        Self::new(
            format!("abs(g0={kink_value})"),
            Arc::new(|x: f64| x.abs()),
            Arc::new(|x: f64| if x > 0.0 { 1.0 } else { -1.0 }),
            KinkSet::new(vec![0.0])?,
            vec![kink_value],
            approach_side,
        )
    }

    pub fn abs_activation() -> Self {
        Self::abs_with(-1.0, Side::Left).expect("static activation")
    }

    /// Two-kink ramp `clamp(x, −1, 1)` with left-derivative kink values.
    pub fn hard_tanh() -> Self {
        Self::new(
            "hard_tanh",
            Arc::new(|x: f64| x.clamp(-1.0, 1.0)),
            Arc::new(|x: f64| if x > -1.0 && x < 1.0 { 1.0 } else { 0.0 }),
            KinkSet::new(vec![-1.0, 1.0]).expect("static kink set"),
            vec![0.0, 1.0],
            Side::Left,
        )
        .expect("static activation")
    }

    /// Smooth softplus `ln(1 + eˣ)` with an empty kink set; the degenerate
    /// case in which every approximant equals the activation itself.
    pub fn softplus() -> Self {
        Self::new(
            "softplus",
            Arc::new(|x: f64| x.max(0.0) + (-x.abs()).exp().ln_1p()),
            Arc::new(|x: f64| 1.0 / (1.0 + (-x).exp())),
            KinkSet::empty(),
            Vec::new(),
            Side::Left,
        )
        .expect("static activation")
    }

    /// `x·sin(1/x)` for `x > 0`, zero otherwise: continuous and locally
    /// Lipschitz, but with an off-kink derivative that is unbounded near the
    /// kink. Violates the locally-bounded-derivative hypothesis on purpose.
    pub fn oscillatory() -> Self {
        Self::new(
            "x_sin_inv",
            Arc::new(|x: f64| if x > 0.0 { x * (x.recip()).sin() } else { 0.0 }),
            Arc::new(|x: f64| {
                if x > 0.0 {
                    let r = x.recip();
                    r.sin() - r.cos() * r
                } else {
                    0.0
                }
            }),
            KinkSet::new(vec![0.0]).expect("static kink set"),
            vec![0.0],
            Side::Left,
        )
        .expect("static activation")
    }

    /// Continuous piecewise-linear activation: `slopes[i]` applies left of
    /// `knots[i]` for `i = 0`, between `knots[i−1]` and `knots[i]` otherwise,
    /// and `slopes[r]` right of the last knot. Kink derivative values default
    /// to the slope on `approach_side`; `overrides` replaces individual ones.
    pub fn piecewise_linear(
        knots: Vec<f64>,
        slopes: Vec<f64>,
        value_at_first_knot: f64,
        approach_side: Side,
        overrides: Option<&BTreeMap<String, f64>>,
    ) -> Result<Self> {
        if knots.is_empty() {
            return Err(Error::InvalidArgument("piecewise-linear activation needs at least one knot".into()));
        }
        if slopes.len() != knots.len() + 1 {
            return Err(Error::DimensionMismatch(format!(
                "{} slopes for {} knots (need knots + 1)",
                slopes.len(),
                knots.len()
            )));
        }
        if slopes.iter().any(|s| !s.is_finite()) || !value_at_first_knot.is_finite() {
            return Err(Error::NonFinite("piecewise-linear data".into()));
        }
        let kinks = KinkSet::new(knots)?;
        let knots = kinks.points().to_vec();
        let mut knot_values = vec![value_at_first_knot];
        for i in 1..knots.len() {
            knot_values.push(knot_values[i - 1] + slopes[i] * (knots[i] - knots[i - 1]));
        }
        let mut kink_values: Vec<f64> = (0..knots.len())
            .map(|i| match approach_side {
                Side::Left => slopes[i],
                Side::Right => slopes[i + 1],
            })
            .collect();
        if let Some(map) = overrides {
            apply_kink_overrides(&kinks, &mut kink_values, map)?;
        }

        let eval = {
            let knots = knots.clone();
            let slopes = slopes.clone();
            let knot_values = knot_values;
            move |x: f64| {
                let j = knots.partition_point(|&p| p <= x);
                if j == 0 {
                    knot_values[0] + slopes[0] * (x - knots[0])
                } else {
                    knot_values[j - 1] + slopes[j] * (x - knots[j - 1])
                }
            }
        };
        let deriv = {
            let knots = knots.clone();
            let slopes = slopes.clone();
            move |x: f64| {
                let j = knots.partition_point(|&p| p <= x);
                if j == 0 {
                    slopes[0]
                } else {
                    slopes[j]
                }
            }
        };
        Self::new(
            "custom_pwl",
            Arc::new(eval),
            Arc::new(deriv),
            kinks,
            kink_values,
            approach_side,
        )
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// The activation value `A(x)`.
    pub fn value(&self, x: f64) -> f64 {
        (self.value)(x)
    }

    /// The derivative `a(x)` of `A` on ℝ∖S; unspecified but total on S.
    pub fn offkink_derivative(&self, x: f64) -> f64 {
        (self.offkink_derivative)(x)
    }

    pub fn kinks(&self) -> &KinkSet {
        &self.kinks
    }

    pub fn kink_values(&self) -> &[f64] {
        &self.kink_values
    }

    pub fn kink_value(&self, index: usize) -> f64 {
        self.kink_values[index]
    }

    pub fn approach_side(&self) -> Side {
        self.approach_side
    }

    /// The generalized derivative `d_g A`: the off-kink derivative away from
    /// the kink set and the prescribed kink value on it. Total on ℝ.
    pub fn generalized_derivative(&self, x: f64) -> f64 {
        match self.kinks.position_of(x) {
            Some(i) => self.kink_values[i],
            None => (self.offkink_derivative)(x),
        }
    }

    /// Replaces the kink derivative value at `index`.
    pub fn with_kink_value(mut self, index: usize, value: f64) -> Result<Self> {
        if index >= self.kink_values.len() {
            return Err(Error::IndexOutOfRange(format!("kink index {index}")));
        }
        if !value.is_finite() {
            return Err(Error::NonFinite("kink value".into()));
        }
        self.kink_values[index] = value;
        self.name = format!("{}[g({})={}]", self.name, self.kinks.points()[index], value);
        Ok(self)
    }

    /// Sampled validation of the activation hypotheses; see
    /// [`ActivationReport`].
    pub fn validate(&self, half_width: f64) -> ActivationReport {
        validate_activation(self, half_width)
    }
}

fn apply_kink_overrides(
    kinks: &KinkSet,
    kink_values: &mut [f64],
    map: &BTreeMap<String, f64>,
) -> Result<()> {
    for (key, &value) in map {
        let point: f64 = key
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("kink key {key:?} is not a number")))?;
        let idx = kinks.position_of(point).ok_or_else(|| {
            Error::InvalidArgument(format!("kink override at {point} matches no kink"))
        })?;
        if !value.is_finite() {
            return Err(Error::NonFinite("kink override".into()));
        }
        kink_values[idx] = value;
    }
    Ok(())
}

/// JSON descriptor for the built-in activations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ActivationDescriptor {
    Relu {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        kink_values: Option<BTreeMap<String, f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        approach_side: Option<Side>,
    },
    LeakyRelu {
        gamma: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        kink_values: Option<BTreeMap<String, f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        approach_side: Option<Side>,
    },
    Abs {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        kink_values: Option<BTreeMap<String, f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        approach_side: Option<Side>,
    },
    CustomPwl {
        knots: Vec<f64>,
        slopes: Vec<f64>,
        #[serde(default)]
        value_at_first_knot: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        kink_values: Option<BTreeMap<String, f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        approach_side: Option<Side>,
    },
}

impl ActivationDescriptor {
    pub fn build(&self) -> Result<PiecewiseActivation> {
        let (mut act, overrides, side) = match self {
            Self::Relu { kink_values, approach_side } => {
                (PiecewiseActivation::relu(), kink_values, approach_side)
            }
            Self::LeakyRelu { gamma, kink_values, approach_side } => {
                (PiecewiseActivation::leaky_relu(*gamma)?, kink_values, approach_side)
            }
            Self::Abs { kink_values, approach_side } => {
                (PiecewiseActivation::abs_activation(), kink_values, approach_side)
            }
            Self::CustomPwl {
                knots,
                slopes,
                value_at_first_knot,
                kink_values,
                approach_side,
            } => {
                let side = approach_side.unwrap_or(Side::Left);
                let act = PiecewiseActivation::piecewise_linear(
                    knots.clone(),
                    slopes.clone(),
                    *value_at_first_knot,
                    side,
                    kink_values.as_ref(),
                )?;
                return Ok(act);
            }
        };
        if let Some(map) = overrides {
            let kinks = act.kinks.clone();
            apply_kink_overrides(&kinks, &mut act.kink_values, map)?;
        }
        if let Some(side) = side {
            act.approach_side = *side;
        }
        Ok(act)
    }
}

/// C¹ blending ramp with `η(0) = η'(0) = η'(1) = 0`, `η(1) = 1`, and
/// `η((0,1)) ⊆ [0,1]`.
///
/// Two independent implementations are provided so tests can confirm the
/// stabilized gradient limit does not depend on the choice.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlendingFunction {
    /// `η(t) = 3t² − 2t³`.
    CubicSmoothstep,
    /// `η(t) = exp(1 − 1/(1 − (t−1)²))` on `(0, 2)`, zero elsewhere.
    Bump,
}

impl BlendingFunction {
    pub fn value(self, t: f64) -> f64 {
        match self {
            Self::CubicSmoothstep => t * t * (3.0 - 2.0 * t),
            Self::Bump => {
                if t > 0.0 && t < 2.0 {
                    let u = t - 1.0;
                    (1.0 - (1.0 - u * u).recip()).exp()
                } else {
                    0.0
                }
            }
        }
    }

    pub fn derivative(self, t: f64) -> f64 {
        match self {
            Self::CubicSmoothstep => 6.0 * t * (1.0 - t),
            Self::Bump => {
                if t > 0.0 && t < 2.0 {
                    let u = t - 1.0;
                    let eta = (1.0 - (1.0 - u * u).recip()).exp();
                    if eta == 0.0 {
                        // underflowed; the true product is 0 in the limit
                        return 0.0;
                    }
                    let denom = 1.0 - u * u;
                    eta * (-2.0 * u) / (denom * denom)
                } else {
                    0.0
                }
            }
        }
    }
}

/// Which of the three branches of `G_n` applies at a point.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Zone {
    /// Distance to the kink set at least `δ/n`: `G_n = A`.
    Outer,
    /// Strictly between `δ/(2n)` and `δ/n`: blended.
    Blend,
    /// Distance at most `δ/(2n)`: affine linearization around the nearest kink.
    Inner,
}

/// The approximant family `n ↦ G_n` induced by an activation, a blending
/// ramp, and the kink half-gap `δ`.
#[derive(Clone, Debug)]
pub struct ApproximantFamily {
    base: PiecewiseActivation,
    eta: BlendingFunction,
    delta: f64,
}

impl ApproximantFamily {
    pub fn new(base: PiecewiseActivation, eta: BlendingFunction) -> Self {
        let delta = base.kinks.half_gap();
        Self { base, eta, delta }
    }

    pub fn base(&self) -> &PiecewiseActivation {
        &self.base
    }

    pub fn eta(&self) -> BlendingFunction {
        self.eta
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Zone of `x` under `G_n` plus the nearest kink index when relevant.
    /// Boundary membership uses exact comparisons on the computed distances,
    /// so zone dispatch is deterministic.
    pub fn zone(&self, n: u64, x: f64) -> (Zone, Option<usize>) {
        assert!(n >= 1, "approximant index must be at least 1");
        let Some((idx, dist)) = self.base.kinks.nearest(x) else {
            return (Zone::Outer, None);
        };
        let n = n as f64;
        if dist >= self.delta / n {
            (Zone::Outer, None)
        } else if dist <= self.delta / (2.0 * n) {
            (Zone::Inner, Some(idx))
        } else {
            (Zone::Blend, Some(idx))
        }
    }

    /// `G_n(x)`.
    pub fn value(&self, n: u64, x: f64) -> f64 {
        let (zone, idx) = self.zone(n, x);
        match zone {
            Zone::Outer => self.base.value(x),
            Zone::Inner => {
                let i = idx.expect("inner zone has a nearest kink");
                let y = self.base.kinks.points()[i];
                self.base.kink_value(i) * (x - y) + self.base.value(y)
            }
            Zone::Blend => {
                let i = idx.expect("blend zone has a nearest kink");
                let y = self.base.kinks.points()[i];
                let gamma = self.base.kink_value(i);
                let t = (2.0 * n as f64 * (x - y).abs() - self.delta) / self.delta;
                let eta = self.eta.value(t);
                (1.0 - eta) * (gamma * (x - y) + self.base.value(y)) + eta * self.base.value(x)
            }
        }
    }

    /// `(G_n)'(x)`, in closed form per zone.
    pub fn derivative(&self, n: u64, x: f64) -> f64 {
        let (zone, idx) = self.zone(n, x);
        match zone {
            Zone::Outer => self.base.offkink_derivative(x),
            Zone::Inner => {
                let i = idx.expect("inner zone has a nearest kink");
                self.base.kink_value(i)
            }
            Zone::Blend => {
                let i = idx.expect("blend zone has a nearest kink");
                let y = self.base.kinks.points()[i];
                let gamma = self.base.kink_value(i);
                let scale = 2.0 * n as f64 / self.delta;
                let t = (2.0 * n as f64 * (x - y).abs() - self.delta) / self.delta;
                let sign = if x > y { 1.0 } else { -1.0 };
                let eta = self.eta.value(t);
                let eta_d = self.eta.derivative(t);
                let value_gap = self.base.value(x) - self.base.value(y) - gamma * (x - y);
                scale * sign * eta_d * value_gap
                    + (1.0 - eta) * gamma
                    + self.base.offkink_derivative(x) * eta
            }
        }
    }

    /// Maximum mismatch between left- and right-sided numerical derivatives
    /// of `G_n` over the four patch boundaries of every kink.
    pub fn boundary_c1_defect(&self, n: u64) -> f64 {
        assert!(n >= 1);
        let nf = n as f64;
        let width = self.delta / (2.0 * nf);
        let h = (1e-8_f64).min(width / 64.0);
        let mut worst = 0.0_f64;
        for &y in self.base.kinks.points() {
            for offset in [
                -self.delta / nf,
                -self.delta / (2.0 * nf),
                self.delta / (2.0 * nf),
                self.delta / nf,
            ] {
                let p = y + offset;
                let left = one_sided_derivative(|x| self.value(n, x), p, -h);
                let right = one_sided_derivative(|x| self.value(n, x), p, h);
                worst = worst.max((left - right).abs());
            }
        }
        worst
    }

    /// Sweeps every `n` in `1..=n_max` on the grid and records, per point,
    /// the first index from which `G_n(x) = A(x)` and `(G_n)'(x) = d_g A(x)`
    /// hold exactly through `n_max`, plus the empirical sup of
    /// `|G_n| + |(G_n)'|` over the sweep.
    pub fn validate(&self, grid: &[f64], n_max: u64) -> ApproximantValidation {
        assert!(n_max >= 1);
        let mut entries = Vec::with_capacity(grid.len());
        let mut sup = 0.0_f64;
        for &x in grid {
            let target_value = self.base.value(x);
            let target_deriv = self.base.generalized_derivative(x);
            let mut stabilization = None;
            for n in 1..=n_max {
                let v = self.value(n, x);
                let d = self.derivative(n, x);
                sup = sup.max(v.abs() + d.abs());
                if v == target_value && d == target_deriv {
                    stabilization.get_or_insert(n);
                } else {
                    stabilization = None;
                }
            }
            entries.push(ApproximantGridEntry { x, stabilization });
        }
        ApproximantValidation {
            n_max,
            sup_value_plus_derivative: sup,
            entries,
        }
    }
}

fn one_sided_derivative(f: impl Fn(f64) -> f64, p: f64, h: f64) -> f64 {
    // second-order one-sided stencil; h carries the approach sign
    (-3.0 * f(p) + 4.0 * f(p + h) - f(p + 2.0 * h)) / (2.0 * h)
}

/// One grid point of [`ApproximantFamily::validate`]; `stabilization` is
/// `None` when the point failed to stabilize by `n_max`.
#[derive(Clone, Debug, Serialize)]
pub struct ApproximantGridEntry {
    pub x: f64,
    pub stabilization: Option<u64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ApproximantValidation {
    pub n_max: u64,
    pub sup_value_plus_derivative: f64,
    pub entries: Vec<ApproximantGridEntry>,
}

impl ApproximantValidation {
    pub fn all_stabilized(&self) -> bool {
        self.entries.iter().all(|e| e.stabilization.is_some())
    }
}

/// Probe points `x_k = (kπ)^{-1}` of the `x·sin(1/x)` fixture together with
/// the closed-form derivative magnitudes `|g'(x_k)| = kπ`, which grow without
/// bound even though the function itself is locally Lipschitz.
pub fn pathological_derivative_probe(k_max: u32) -> Vec<(f64, f64)> {
    assert!(k_max >= 1);
    (1..=k_max)
        .map(|k| {
            let mag = k as f64 * std::f64::consts::PI;
            (mag.recip(), mag)
        })
        .collect()
}

const VALUE_CONTINUITY_TOL: f64 = 1e-7;
const ONE_SIDED_TOL: f64 = 1e-7;
const DERIV_FD_TOL: f64 = 1e-6;
const DERIV_FD_KINK_MARGIN: f64 = 0.05;
/// Empirical sup of `|d_g A|` above this flags the locally-bounded-derivative
/// hypothesis as violated. Arbitrary but documented; the hypothesis is
/// qualitative.
pub const DERIVATIVE_BOUND_THRESHOLD: f64 = 1e9;

/// Sampled checks of the activation hypotheses: value continuity at kinks,
/// agreement of the off-kink derivative with finite differences, one-sided
/// continuity of `d_g A` on the stored side, and local boundedness of the
/// generalized derivative.
#[derive(Clone, Debug, Serialize)]
pub struct ActivationReport {
    pub value_continuous: bool,
    pub derivative_consistent: bool,
    pub max_derivative_fd_error: f64,
    pub one_sided_continuous: bool,
    pub max_one_sided_defect: f64,
    pub derivative_locally_bounded: bool,
    pub derivative_sup: f64,
    pub bound_threshold: f64,
}

impl ActivationReport {
    pub fn hypotheses_hold(&self) -> bool {
        self.value_continuous
            && self.derivative_consistent
            && self.one_sided_continuous
            && self.derivative_locally_bounded
    }
}

fn validate_activation(act: &PiecewiseActivation, half_width: f64) -> ActivationReport {
    let m = half_width.abs().max(1.0);

    let mut value_continuous = true;
    let mut one_sided_defect = 0.0_f64;
    let z = act.approach_side.continuity_sign();
    for (i, &y) in act.kinks.points().iter().enumerate() {
        let vy = act.value(y);
        let gy = act.kink_values[i];
        // tail of a shrinking-step sweep from both sides
        for j in 36..=44u32 {
            let h = 2.0_f64.powi(-(j as i32));
            for s in [-1.0, 1.0] {
                if (act.value(y + s * h) - vy).abs() > VALUE_CONTINUITY_TOL {
                    value_continuous = false;
                }
            }
        }
        for j in 36..=44u32 {
            let h = 2.0_f64.powi(-(j as i32));
            let d = (act.generalized_derivative(y + z * h) - gy).abs();
            one_sided_defect = one_sided_defect.max(d);
        }
    }
    let one_sided_continuous = one_sided_defect <= ONE_SIDED_TOL;

    let mut fd_error = 0.0_f64;
    let grid_n = 2001;
    let fd_h = 1e-6;
    for i in 0..grid_n {
        let x = -m + 2.0 * m * (i as f64) / ((grid_n - 1) as f64);
        if act.kinks.distance(x) < DERIV_FD_KINK_MARGIN {
            continue;
        }
        let fd = (act.value(x + fd_h) - act.value(x - fd_h)) / (2.0 * fd_h);
        let d = act.offkink_derivative(x);
        let rel = (fd - d).abs() / d.abs().max(1.0);
        fd_error = fd_error.max(rel);
    }
    let derivative_consistent = fd_error <= DERIV_FD_TOL;

    let mut sup = 0.0_f64;
    for i in 0..grid_n {
        let x = -m + 2.0 * m * (i as f64) / ((grid_n - 1) as f64);
        sup = sup.max(act.generalized_derivative(x).abs());
    }
    // log-refined probes approaching every kink catch derivative blow-up
    for &y in act.kinks.points() {
        for j in 1..=45u32 {
            let h = 2.0_f64.powi(-(j as i32));
            for s in [-1.0, 1.0] {
                let x = y + s * h;
                if x.abs() <= m {
                    sup = sup.max(act.generalized_derivative(x).abs());
                }
            }
        }
    }
    let derivative_locally_bounded = sup <= DERIVATIVE_BOUND_THRESHOLD;

    ActivationReport {
        value_continuous,
        derivative_consistent,
        max_derivative_fd_error: fd_error,
        one_sided_continuous,
        max_one_sided_defect: one_sided_defect,
        derivative_locally_bounded,
        derivative_sup: sup,
        bound_threshold: DERIVATIVE_BOUND_THRESHOLD,
    }
}
