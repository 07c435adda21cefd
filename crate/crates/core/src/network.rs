//! Fully-connected feedforward architecture description, the flat parameter
//! layout, and forward evaluation with full pre-activation traces.
//!
//! The flat layout packs, per layer `k = 1..L`, the row-major weight matrix
//! followed by the bias vector. All public accessors speak the 1-based
//! `(k, i, j)` convention; the only 0-based shift in the crate is the final
//! `- 1` in [`Architecture::weight_index`] / [`Architecture::bias_index`].

use serde::{Deserialize, Serialize};

use crate::activation::{ApproximantFamily, PiecewiseActivation};
use crate::error::{Error, Result};

/// Layer widths `(ℓ_0, …, ℓ_L)` with `L ≥ 1`, plus the derived cumulative
/// parameter offsets.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct Architecture {
    widths: Vec<usize>,
    offsets: Vec<usize>,
}

impl Architecture {
    pub fn new(widths: Vec<usize>) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::InvalidArgument(
                "architecture needs an input layer and at least one affine layer".into(),
            ));
        }
        if widths.contains(&0) {
            return Err(Error::InvalidArgument("layer widths must be positive".into()));
        }
        // offsets[k] = sum_{n=1}^{k} l_n (l_{n-1} + 1)
        let mut offsets = vec![0usize];
        for k in 1..widths.len() {
            offsets.push(offsets[k - 1] + widths[k] * (widths[k - 1] + 1));
        }
        Ok(Self { widths, offsets })
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    /// Number of affine layers `L`.
    pub fn depth(&self) -> usize {
        self.widths.len() - 1
    }

    /// `ℓ_k` for `k = 0..=L`.
    pub fn width(&self, k: usize) -> usize {
        self.widths[k]
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().unwrap()
    }

    /// Cumulative offset `d_k` for `k = 0..=L`; `d_0 = 0` and `d_L` is the
    /// total parameter count.
    pub fn offset(&self, k: usize) -> usize {
        self.offsets[k]
    }

    /// Total parameter count `Σ_k ℓ_k (ℓ_{k−1} + 1)`.
    pub fn param_count(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    fn check_layer(&self, k: usize) -> Result<()> {
        if k == 0 || k > self.depth() {
            return Err(Error::IndexOutOfRange(format!(
                "layer {k} outside 1..={}",
                self.depth()
            )));
        }
        Ok(())
    }

    /// 0-based flat index of weight `(k, i, j)`, `1 ≤ i ≤ ℓ_k`,
    /// `1 ≤ j ≤ ℓ_{k−1}`: the 1-based layout position is
    /// `(i−1)·ℓ_{k−1} + j + d_{k−1}`.
    pub fn weight_index(&self, k: usize, i: usize, j: usize) -> Result<usize> {
        self.check_layer(k)?;
        if i == 0 || i > self.widths[k] || j == 0 || j > self.widths[k - 1] {
            return Err(Error::IndexOutOfRange(format!("weight ({k},{i},{j})")));
        }
        Ok((i - 1) * self.widths[k - 1] + j + self.offsets[k - 1] - 1)
    }

    /// 0-based flat index of bias `(k, i)`: 1-based position
    /// `ℓ_k·ℓ_{k−1} + i + d_{k−1}`.
    pub fn bias_index(&self, k: usize, i: usize) -> Result<usize> {
        self.check_layer(k)?;
        if i == 0 || i > self.widths[k] {
            return Err(Error::IndexOutOfRange(format!("bias ({k},{i})")));
        }
        Ok(self.widths[k] * self.widths[k - 1] + i + self.offsets[k - 1] - 1)
    }

    /// Inverse of the flat layout for a 0-based index.
    pub fn decompose(&self, flat: usize) -> Result<ParamIndex> {
        if flat >= self.param_count() {
            return Err(Error::IndexOutOfRange(format!("flat index {flat}")));
        }
        let one_based = flat + 1;
        let k = (1..=self.depth())
            .find(|&k| one_based <= self.offsets[k])
            .expect("flat index within total count");
        let t = one_based - self.offsets[k - 1];
        let w_count = self.widths[k] * self.widths[k - 1];
        if t <= w_count {
            let i = (t - 1) / self.widths[k - 1] + 1;
            let j = t - (i - 1) * self.widths[k - 1];
            Ok(ParamIndex::Weight { k, i, j })
        } else {
            Ok(ParamIndex::Bias { k, i: t - w_count })
        }
    }
}

impl TryFrom<Vec<usize>> for Architecture {
    type Error = Error;
    fn try_from(widths: Vec<usize>) -> Result<Self> {
        Architecture::new(widths)
    }
}

impl From<Architecture> for Vec<usize> {
    fn from(a: Architecture) -> Self {
        a.widths
    }
}

/// Role of one flat parameter slot.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamIndex {
    Weight { k: usize, i: usize, j: usize },
    Bias { k: usize, i: usize },
}

/// Flat parameter vector, layout-aligned with an [`Architecture`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamVector {
    theta: Vec<f64>,
}

impl ParamVector {
    pub fn new(theta: Vec<f64>) -> Self {
        Self { theta }
    }

    pub fn zeros(len: usize) -> Self {
        Self { theta: vec![0.0; len] }
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.theta
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.theta
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.theta
    }

    pub fn check_len(&self, arch: &Architecture) -> Result<()> {
        if self.theta.len() != arch.param_count() {
            return Err(Error::DimensionMismatch(format!(
                "parameter vector of length {} for architecture with {} parameters",
                self.theta.len(),
                arch.param_count()
            )));
        }
        Ok(())
    }

    /// Little-endian 64-bit float serialization for golden fixtures.
    pub fn to_le_bytes(&self) -> Vec<u8> {
        self.theta.iter().flat_map(|v| v.to_le_bytes()).collect()
    }

    pub fn from_le_bytes(bytes: &[u8]) -> Result<Self> {
        if !bytes.len().is_multiple_of(8) {
            return Err(Error::InvalidArgument(
                "byte length is not a multiple of 8".into(),
            ));
        }
        let theta = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Self { theta })
    }

    pub fn l2_norm(&self) -> f64 {
        self.theta.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

impl From<Vec<f64>> for ParamVector {
    fn from(theta: Vec<f64>) -> Self {
        Self::new(theta)
    }
}

/// Architecture plus parameters in the `{"widths": [...], "theta": [...]}`
/// interchange shape.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NetworkSnapshot {
    pub widths: Vec<usize>,
    pub theta: Vec<f64>,
}

impl NetworkSnapshot {
    pub fn new(arch: &Architecture, theta: &ParamVector) -> Self {
        Self {
            widths: arch.widths().to_vec(),
            theta: theta.as_slice().to_vec(),
        }
    }

    pub fn into_parts(self) -> Result<(Architecture, ParamVector)> {
        let arch = Architecture::new(self.widths)?;
        let theta = ParamVector::new(self.theta);
        theta.check_len(&arch)?;
        Ok((arch, theta))
    }
}

/// Weight `w^{k,θ}_{i,j}` in the 1-based convention.
pub fn weight(theta: &ParamVector, arch: &Architecture, k: usize, i: usize, j: usize) -> Result<f64> {
    theta.check_len(arch)?;
    Ok(theta.as_slice()[arch.weight_index(k, i, j)?])
}

/// Bias `b^{k,θ}_i` in the 1-based convention.
pub fn bias(theta: &ParamVector, arch: &Architecture, k: usize, i: usize) -> Result<f64> {
    theta.check_len(arch)?;
    Ok(theta.as_slice()[arch.bias_index(k, i)?])
}

/// Pre-activations of every layer for one input, plus the post-activation
/// values actually fed forward. The output layer carries no activation.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardTrace {
    input: Vec<f64>,
    preacts: Vec<Vec<f64>>,
    activations: Vec<Vec<f64>>,
}

impl ForwardTrace {
    pub fn input(&self) -> &[f64] {
        &self.input
    }

    /// Pre-activation vector of layer `k = 1..=L`.
    pub fn preactivation(&self, k: usize) -> &[f64] {
        &self.preacts[k - 1]
    }

    pub fn preactivations(&self) -> &[Vec<f64>] {
        &self.preacts
    }

    /// Post-activation values of hidden layer `k = 1..=L−1`.
    pub fn activation(&self, k: usize) -> &[f64] {
        &self.activations[k - 1]
    }

    /// Network output `N^{L,θ}(x)`.
    pub fn output(&self) -> &[f64] {
        self.preacts.last().expect("at least one layer")
    }
}

/// Forward pass with an arbitrary scalar activation. Biases seed each unit's
/// accumulator, then weighted inputs are added in ascending `j`, so traces
/// are bit-reproducible.
pub fn forward_with<F>(theta: &ParamVector, arch: &Architecture, x: &[f64], act: F) -> Result<ForwardTrace>
where
    F: Fn(f64) -> f64,
{
    theta.check_len(arch)?;
    if x.len() != arch.input_dim() {
        return Err(Error::DimensionMismatch(format!(
            "input of length {} for input layer of width {}",
            x.len(),
            arch.input_dim()
        )));
    }
    let flat = theta.as_slice();
    let depth = arch.depth();
    let mut preacts: Vec<Vec<f64>> = Vec::with_capacity(depth);
    let mut activations: Vec<Vec<f64>> = Vec::with_capacity(depth.saturating_sub(1));
    for k in 1..=depth {
        let input: &[f64] = if k == 1 { x } else { &activations[k - 2] };
        let w_in = arch.width(k - 1);
        let base = arch.offset(k - 1);
        let mut layer = Vec::with_capacity(arch.width(k));
        for i in 1..=arch.width(k) {
            let mut acc = flat[arch.width(k) * w_in + i + base - 1];
            let row = (i - 1) * w_in + base;
            for (j, &inp) in input.iter().enumerate() {
                acc += flat[row + j] * inp;
            }
            layer.push(acc);
        }
        if k < depth {
            activations.push(layer.iter().map(|&v| act(v)).collect());
        }
        preacts.push(layer);
    }
    Ok(ForwardTrace {
        input: x.to_vec(),
        preacts,
        activations,
    })
}

/// Forward pass with the nonsmooth activation `A`.
pub fn forward(
    theta: &ParamVector,
    arch: &Architecture,
    x: &[f64],
    act: &PiecewiseActivation,
) -> Result<ForwardTrace> {
    forward_with(theta, arch, x, |v| act.value(v))
}

/// Forward pass with the C¹ approximant `G_n`. For fixed `(θ, x)` the trace
/// equals the `A`-trace exactly once `n` exceeds the stabilization index.
pub fn forward_approx(
    theta: &ParamVector,
    arch: &Architecture,
    x: &[f64],
    fam: &ApproximantFamily,
    n: u64,
) -> Result<ForwardTrace> {
    forward_with(theta, arch, x, |v| fam.value(n, v))
}
