//! Finite empirical measures, C¹ losses, and the risk functional
//! `L(θ) = Σ_s w_s · H(N^{L,θ}(x_s), y_s, θ)`.
//!
//! Restricting the data measure to finite weighted sums of point masses makes
//! every integral an exact finite sum, so gradient-limit experiments carry no
//! quadrature error. Per-sample terms may be computed in parallel, but the
//! final reduction always runs in stored sample order for bit reproducibility.

use serde::{Deserialize, Serialize};

use crate::activation::{ApproximantFamily, PiecewiseActivation};
use crate::error::{Error, Result};
use crate::network::{forward_with, Architecture, ParamVector};

/// One weighted input/output pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub w: f64,
}

/// Finite weighted empirical measure on input/output pairs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MeasureJson", into = "MeasureJson")]
pub struct EmpiricalMeasure {
    samples: Vec<Sample>,
}

#[derive(Serialize, Deserialize)]
struct MeasureJson {
    samples: Vec<Sample>,
}

impl TryFrom<MeasureJson> for EmpiricalMeasure {
    type Error = Error;
    fn try_from(j: MeasureJson) -> Result<Self> {
        EmpiricalMeasure::new(j.samples)
    }
}

impl From<EmpiricalMeasure> for MeasureJson {
    fn from(m: EmpiricalMeasure) -> Self {
        MeasureJson { samples: m.samples }
    }
}

impl EmpiricalMeasure {
    pub fn new(samples: Vec<Sample>) -> Result<Self> {
        for (idx, s) in samples.iter().enumerate() {
            if !(s.w.is_finite() && s.w >= 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "sample {idx} has mass {}, need a finite nonnegative value",
                    s.w
                )));
            }
            if s.x.iter().chain(&s.y).any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("sample {idx}")));
            }
            if s.x.len() != samples[0].x.len() || s.y.len() != samples[0].y.len() {
                return Err(Error::DimensionMismatch(format!(
                    "sample {idx} has shape ({}, {}), sample 0 has ({}, {})",
                    s.x.len(),
                    s.y.len(),
                    samples[0].x.len(),
                    samples[0].y.len()
                )));
            }
        }
        Ok(Self { samples })
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.samples.iter().map(|s| s.w).sum()
    }

    /// Componentwise bounding interval `[a, b]` of the input support, or
    /// `None` for the empty measure.
    pub fn input_bounds(&self) -> Option<(f64, f64)> {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for s in &self.samples {
            for &v in &s.x {
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        (lo <= hi).then_some((lo, hi))
    }

    pub fn check_dims(&self, arch: &Architecture) -> Result<()> {
        for (idx, s) in self.samples.iter().enumerate() {
            if s.x.len() != arch.input_dim() || s.y.len() != arch.output_dim() {
                return Err(Error::DimensionMismatch(format!(
                    "sample {idx} has shape ({}, {}) but the architecture expects ({}, {})",
                    s.x.len(),
                    s.y.len(),
                    arch.input_dim(),
                    arch.output_dim()
                )));
            }
        }
        Ok(())
    }

    /// Scales every mass by `c`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(
            self.samples
                .iter()
                .map(|s| Sample { x: s.x.clone(), y: s.y.clone(), w: c * s.w })
                .collect(),
        )
    }

    /// CSV with columns `x_0..x_{l0-1}, y_0..y_{lL-1}, w`.
    pub fn from_csv(data: &str, input_dim: usize, output_dim: usize) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(data.as_bytes());
        let mut samples = Vec::new();
        for record in reader.records() {
            let record = record?;
            if record.len() != input_dim + output_dim + 1 {
                return Err(Error::DimensionMismatch(format!(
                    "csv row with {} fields, expected {}",
                    record.len(),
                    input_dim + output_dim + 1
                )));
            }
            let parse = |s: &str| -> Result<f64> {
                s.trim()
                    .parse()
                    .map_err(|_| Error::InvalidArgument(format!("bad number {s:?} in dataset")))
            };
            let fields: Vec<f64> = record.iter().map(parse).collect::<Result<_>>()?;
            samples.push(Sample {
                x: fields[..input_dim].to_vec(),
                y: fields[input_dim..input_dim + output_dim].to_vec(),
                w: fields[input_dim + output_dim],
            });
        }
        Self::new(samples)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        if let Some(first) = self.samples.first() {
            let mut header: Vec<String> = (0..first.x.len()).map(|i| format!("x_{i}")).collect();
            header.extend((0..first.y.len()).map(|i| format!("y_{i}")));
            header.push("w".into());
            out.push_str(&header.join(","));
            out.push('\n');
            for s in &self.samples {
                let row: Vec<String> = s
                    .x
                    .iter()
                    .chain(&s.y)
                    .chain(std::iter::once(&s.w))
                    .map(|v| crate::report::format_f64(*v))
                    .collect();
                out.push_str(&row.join(","));
                out.push('\n');
            }
        }
        out
    }
}

/// C¹ loss `H(z, y, θ)` with closed-form partials in `z` and `θ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Loss {
    /// `‖z − y‖²`.
    Mse,
    /// `Σ_l c_l (z_l − y_l)²`.
    WeightedMse { weights: Vec<f64> },
    /// `‖z − y‖² + λ‖θ‖²`; exercises a nonzero `∂_θ H`.
    RidgeMse { lambda: f64 },
    /// `Σ_l exp(exp(z_l))`; a growth-condition violator for probe tests.
    DoubleExp,
}

impl Loss {
    pub fn value(&self, z: &[f64], y: &[f64], theta: &[f64]) -> f64 {
        match self {
            Loss::Mse => z.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum(),
            Loss::WeightedMse { weights } => z
                .iter()
                .zip(y)
                .zip(weights)
                .map(|((a, b), c)| c * (a - b) * (a - b))
                .sum(),
            Loss::RidgeMse { lambda } => {
                let mse: f64 = z.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
                mse + lambda * theta.iter().map(|t| t * t).sum::<f64>()
            }
            Loss::DoubleExp => z.iter().map(|a| a.exp().exp()).sum(),
        }
    }

    pub fn grad_z(&self, z: &[f64], y: &[f64], _theta: &[f64]) -> Vec<f64> {
        match self {
            Loss::Mse | Loss::RidgeMse { .. } => {
                z.iter().zip(y).map(|(a, b)| 2.0 * (a - b)).collect()
            }
            Loss::WeightedMse { weights } => z
                .iter()
                .zip(y)
                .zip(weights)
                .map(|((a, b), c)| 2.0 * c * (a - b))
                .collect(),
            Loss::DoubleExp => z.iter().map(|a| a.exp().exp() * a.exp()).collect(),
        }
    }

    pub fn grad_theta(&self, _z: &[f64], _y: &[f64], theta: &[f64]) -> Vec<f64> {
        match self {
            Loss::Mse | Loss::WeightedMse { .. } | Loss::DoubleExp => vec![0.0; theta.len()],
            Loss::RidgeMse { lambda } => theta.iter().map(|t| 2.0 * lambda * t).collect(),
        }
    }

    /// Whether `∂_θ H` is identically zero, letting gradient code skip it.
    pub fn theta_independent(&self) -> bool {
        !matches!(self, Loss::RidgeMse { .. })
    }

    pub fn check_dims(&self, arch: &Architecture) -> Result<()> {
        if let Loss::WeightedMse { weights } = self {
            if weights.len() != arch.output_dim() {
                return Err(Error::DimensionMismatch(format!(
                    "{} loss weights for output width {}",
                    weights.len(),
                    arch.output_dim()
                )));
            }
        }
        Ok(())
    }
}

fn risk_with<F>(
    theta: &ParamVector,
    arch: &Architecture,
    measure: &EmpiricalMeasure,
    loss: &Loss,
    act: F,
) -> Result<f64>
where
    F: Fn(f64) -> f64 + Sync,
{
    measure.check_dims(arch)?;
    loss.check_dims(arch)?;
    use rayon::prelude::*;
    let terms: Vec<f64> = measure
        .samples()
        .par_iter()
        .map(|s| {
            let trace = forward_with(theta, arch, &s.x, &act)?;
            Ok(loss.value(trace.output(), &s.y, theta.as_slice()))
        })
        .collect::<Result<_>>()?;
    // sequential reduction in canonical sample order
    Ok(measure
        .samples()
        .iter()
        .zip(terms)
        .fold(0.0, |acc, (s, h)| acc + s.w * h))
}

/// Risk under the nonsmooth activation `A`.
pub fn risk(
    theta: &ParamVector,
    arch: &Architecture,
    measure: &EmpiricalMeasure,
    loss: &Loss,
    act: &PiecewiseActivation,
) -> Result<f64> {
    risk_with(theta, arch, measure, loss, |v| act.value(v))
}

/// Risk under the approximant `G_n`; equals [`risk`] exactly once `n` passes
/// the stabilization index of every sample.
pub fn risk_smoothed(
    theta: &ParamVector,
    arch: &Architecture,
    measure: &EmpiricalMeasure,
    loss: &Loss,
    fam: &ApproximantFamily,
    n: u64,
) -> Result<f64> {
    assert!(n >= 1, "approximant index must be at least 1");
    risk_with(theta, arch, measure, loss, |v| fam.value(n, v))
}

/// Above this empirical sup the probe flags the loss as a likely violator of
/// the growth hypothesis. Arbitrary but documented; the hypothesis is
/// qualitative.
pub const GROWTH_FLAG_THRESHOLD: f64 = 1e9;

#[derive(Clone, Debug, Serialize)]
pub struct GrowthReport {
    pub seed: u64,
    pub empirical_sup: f64,
    pub flagged: bool,
    pub threshold: f64,
    pub radius: f64,
}

/// Grid/sampled estimate of
/// `sup (‖∇_z H‖ + ‖∇_θ H‖) / (1 + |H(Z, y, Θ)|)` over `z, Z ∈ [−r,r]^{l_L}`,
/// `θ, Θ ∈ [−r,r]^d`, and data outputs `y`. The numerator and denominator
/// points range independently, so the estimate is
/// `sup(numerator) / (1 + min|H|)` per `y`.
pub fn loss_growth_probe(
    loss: &Loss,
    arch: &Architecture,
    measure: &EmpiricalMeasure,
    r: f64,
    seed: u64,
) -> Result<GrowthReport> {
    if !r.is_finite() || r <= 0.0 {
        return Err(Error::InvalidArgument("probe radius must be positive".into()));
    }
    loss.check_dims(arch)?;
    use rand::Rng;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let out_dim = arch.output_dim();
    let d = arch.param_count();
    let n_z = 256;
    let n_theta = 64;
    let zs: Vec<Vec<f64>> = (0..n_z)
        .map(|_| (0..out_dim).map(|_| rng.random_range(-r..=r)).collect())
        .collect();
    let thetas: Vec<Vec<f64>> = (0..n_theta)
        .map(|_| (0..d).map(|_| rng.random_range(-r..=r)).collect())
        .collect();

    let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
    let mut sup = 0.0_f64;
    for s in measure.samples() {
        let mut numer = 0.0_f64;
        let mut min_denom = f64::INFINITY;
        for z in &zs {
            for theta in &thetas {
                let gz = loss.grad_z(z, &s.y, theta);
                let gt = loss.grad_theta(z, &s.y, theta);
                numer = numer.max(norm(&gz) + norm(&gt));
                min_denom = min_denom.min(1.0 + loss.value(z, &s.y, theta).abs());
            }
        }
        if min_denom.is_finite() && min_denom > 0.0 {
            sup = sup.max(numer / min_denom);
        } else {
            sup = f64::INFINITY;
        }
    }
    Ok(GrowthReport {
        seed,
        empirical_sup: sup,
        flagged: sup.is_nan() || sup > GROWTH_FLAG_THRESHOLD,
        threshold: GROWTH_FLAG_THRESHOLD,
        radius: r,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activation::BlendingFunction;

    fn one_sample(x: f64, y: f64, w: f64) -> EmpiricalMeasure {
        EmpiricalMeasure::new(vec![Sample { x: vec![x], y: vec![y], w }]).unwrap()
    }

    #[test]
    fn risk_examples() {
        let relu = PiecewiseActivation::relu();
        let arch = Architecture::new(vec![1, 1]).unwrap();

        // exact fit: zero loss
        let theta = ParamVector::new(vec![1.0, 0.0]);
        let m = one_sample(2.0, 2.0, 1.0);
        assert_eq!(risk(&theta, &arch, &m, &Loss::Mse, &relu).unwrap(), 0.0);

        // hand forward pass + loss
        let m = one_sample(2.0, 1.0, 1.0);
        assert_eq!(risk(&theta, &arch, &m, &Loss::Mse, &relu).unwrap(), 1.0);

        // two equally weighted samples average the per-sample losses
        let m = EmpiricalMeasure::new(vec![
            Sample { x: vec![2.0], y: vec![1.0], w: 0.5 },
            Sample { x: vec![0.0], y: vec![1.0], w: 0.5 },
        ])
        .unwrap();
        let l1 = risk(&theta, &arch, &one_sample(2.0, 1.0, 1.0), &Loss::Mse, &relu).unwrap();
        let l2 = risk(&theta, &arch, &one_sample(0.0, 1.0, 1.0), &Loss::Mse, &relu).unwrap();
        assert_eq!(risk(&theta, &arch, &m, &Loss::Mse, &relu).unwrap(), 0.5 * (l1 + l2));
    }

    #[test]
    fn mass_scaling_by_powers_of_two_is_exact() {
        let relu = PiecewiseActivation::relu();
        let arch = Architecture::new(vec![1, 2, 1]).unwrap();
        let theta = ParamVector::new(vec![0.3, -0.7, 0.9, 0.11, 0.5, -0.25, 0.4]);
        let m = EmpiricalMeasure::new(vec![
            Sample { x: vec![0.2], y: vec![0.4], w: 0.3 },
            Sample { x: vec![-1.1], y: vec![0.9], w: 1.7 },
        ])
        .unwrap();
        let base = risk(&theta, &arch, &m, &Loss::Mse, &relu).unwrap();
        for c in [0.0, 0.5, 2.0, 8.0] {
            let scaled = risk(&theta, &arch, &m.scaled(c).unwrap(), &Loss::Mse, &relu).unwrap();
            assert_eq!(scaled, c * base);
        }
        // non-dyadic scale: exact up to reassociation rounding only
        let scaled = risk(&theta, &arch, &m.scaled(0.3).unwrap(), &Loss::Mse, &relu).unwrap();
        assert!((scaled - 0.3 * base).abs() <= 1e-12 * base.abs().max(1.0));
    }

    #[test]
    fn smoothed_risk_stabilizes() {
        let fam = ApproximantFamily::new(PiecewiseActivation::relu(), BlendingFunction::CubicSmoothstep);
        let arch = Architecture::new(vec![1, 1, 1]).unwrap();
        let m = one_sample(0.9, 0.3, 1.0);
        let theta = ParamVector::new(vec![0.7, -0.3, 1.1, 0.2]);
        let exact = risk(&theta, &arch, &m, &Loss::Mse, fam.base()).unwrap();
        assert_ne!(risk_smoothed(&theta, &arch, &m, &Loss::Mse, &fam, 1).unwrap(), exact);
        for n in [8u64, 64, 1 << 20] {
            assert_eq!(risk_smoothed(&theta, &arch, &m, &Loss::Mse, &fam, n).unwrap(), exact);
        }

        // a kink-pinned hidden unit costs nothing at any n
        let theta = ParamVector::new(vec![1.0, -0.9, 1.1, 0.2]);
        let exact = risk(&theta, &arch, &m, &Loss::Mse, fam.base()).unwrap();
        for n in 1..=32u64 {
            assert_eq!(risk_smoothed(&theta, &arch, &m, &Loss::Mse, &fam, n).unwrap(), exact);
        }

        // empty kink set: the approximant is the activation itself
        let fam = ApproximantFamily::new(PiecewiseActivation::softplus(), BlendingFunction::Bump);
        let exact = risk(&theta, &arch, &m, &Loss::Mse, fam.base()).unwrap();
        assert_eq!(risk_smoothed(&theta, &arch, &m, &Loss::Mse, &fam, 1).unwrap(), exact);
    }

    #[test]
    fn growth_probe_flags_double_exponential() {
        let arch = Architecture::new(vec![1, 1]).unwrap();
        let m = one_sample(1.0, 2.0, 1.0);
        let mse = loss_growth_probe(&Loss::Mse, &arch, &m, 3.0, 7).unwrap();
        assert!(!mse.flagged, "sup {}", mse.empirical_sup);
        let ridge = loss_growth_probe(&Loss::RidgeMse { lambda: 0.5 }, &arch, &m, 3.0, 7).unwrap();
        assert!(!ridge.flagged);
        let bad = loss_growth_probe(&Loss::DoubleExp, &arch, &m, 5.0, 7).unwrap();
        assert!(bad.flagged, "sup {}", bad.empirical_sup);
    }

    #[test]
    fn loss_gradients_match_finite_differences() {
        let z = [0.4, -1.3];
        let y = [0.1, 0.2];
        let theta = [0.5, -0.7, 0.9];
        let h = 1e-6;
        for loss in [
            Loss::Mse,
            Loss::WeightedMse { weights: vec![0.5, 2.0] },
            Loss::RidgeMse { lambda: 0.3 },
            Loss::DoubleExp,
        ] {
            let gz = loss.grad_z(&z, &y, &theta);
            for l in 0..z.len() {
                let mut zp = z;
                zp[l] += h;
                let mut zm = z;
                zm[l] -= h;
                let fd = (loss.value(&zp, &y, &theta) - loss.value(&zm, &y, &theta)) / (2.0 * h);
                assert!((fd - gz[l]).abs() <= 1e-6 * gz[l].abs().max(1.0), "{loss:?}");
            }
            let gt = loss.grad_theta(&z, &y, &theta);
            for l in 0..theta.len() {
                let mut tp = theta;
                tp[l] += h;
                let mut tm = theta;
                tm[l] -= h;
                let fd = (loss.value(&z, &y, &tp) - loss.value(&z, &y, &tm)) / (2.0 * h);
                assert!((fd - gt[l]).abs() <= 1e-6 * gt[l].abs().max(1.0), "{loss:?}");
            }
        }
    }

    #[test]
    fn dataset_formats_round_trip() {
        let m = EmpiricalMeasure::new(vec![
            Sample { x: vec![0.25, -1.5], y: vec![2.0], w: 1.0 },
            Sample { x: vec![0.5, 0.125], y: vec![-3.0], w: 0.5 },
        ])
        .unwrap();
        let json = serde_json::to_string(&m).unwrap();
        assert!(json.contains("\"samples\""));
        let back: EmpiricalMeasure = serde_json::from_str(&json).unwrap();
        assert_eq!(back, m);

        let csv = m.to_csv();
        assert!(csv.starts_with("x_0,x_1,y_0,w\n"));
        let back = EmpiricalMeasure::from_csv(&csv, 2, 1).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn measure_validation() {
        assert!(EmpiricalMeasure::new(vec![Sample { x: vec![0.0], y: vec![0.0], w: -1.0 }]).is_err());
        assert!(EmpiricalMeasure::new(vec![
            Sample { x: vec![0.0], y: vec![0.0], w: 1.0 },
            Sample { x: vec![0.0, 1.0], y: vec![0.0], w: 1.0 },
        ])
        .is_err());
        let m = EmpiricalMeasure::new(vec![Sample { x: vec![0.0, 2.0], y: vec![0.0], w: 1.0 }]).unwrap();
        let arch = Architecture::new(vec![1, 1]).unwrap();
        assert!(m.check_dims(&arch).is_err());
        assert_eq!(m.input_bounds(), Some((0.0, 2.0)));
    }
}
