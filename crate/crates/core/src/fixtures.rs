//! Named experiment fixtures shared by the test suites and the CLI.
//!
//! The `*-pinned` and `*-zero` fixtures place a hidden pre-activation exactly
//! on a kink at a data point (the all-zero parameter vector pins every unit),
//! which is the degenerate case the witness experiments target.

use rand::Rng;

use crate::activation::PiecewiseActivation;
use crate::analysis::min_kink_distance;
use crate::error::{Error, Result};
use crate::network::{Architecture, ParamVector};
use crate::report::rng;
use crate::risk::{EmpiricalMeasure, Loss, Sample};

#[derive(Clone, Debug)]
pub struct Fixture {
    pub name: &'static str,
    pub arch: Architecture,
    pub activation: PiecewiseActivation,
    pub loss: Loss,
    pub measure: EmpiricalMeasure,
    /// Canonical parameter vector; exactly kink-pinned for the `*-pinned`
    /// and `*-zero` fixtures.
    pub theta: ParamVector,
    pub input_box: (f64, f64),
}

pub const STANDARD_FIXTURES: [&str; 4] = ["affine-1-1", "relu-1-2-1", "relu-2-3-2", "leaky-2-3-2"];
pub const KINK_PINNED_FIXTURES: [&str; 3] =
    ["relu-1-1-1-pinned", "relu-1-2-1-zero", "relu-2-3-2-pinned"];

pub fn fixture_names() -> Vec<&'static str> {
    STANDARD_FIXTURES.iter().chain(&KINK_PINNED_FIXTURES).copied().collect()
}

/// Uniform parameter draw in `[-scale, scale]^d`.
pub fn random_theta(arch: &Architecture, seed: u64, scale: f64) -> ParamVector {
    let mut gen = rng(seed);
    ParamVector::new(
        (0..arch.param_count())
            .map(|_| gen.random_range(-scale..=scale))
            .collect(),
    )
}

/// Seeded rejection sampling for a parameter vector whose sample
/// pre-activations all clear the kink margin `10·h·max(1, ‖θ‖)` used by the
/// smooth-region agreement check.
pub fn smooth_theta(
    arch: &Architecture,
    measure: &EmpiricalMeasure,
    act: &PiecewiseActivation,
    seed: u64,
    fd_step: f64,
) -> Result<ParamVector> {
    let mut gen = rng(seed);
    for _ in 0..10_000 {
        let theta = ParamVector::new(
            (0..arch.param_count())
                .map(|_| gen.random_range(-1.0..=1.0))
                .collect(),
        );
        let margin = 10.0 * fd_step * theta.l2_norm().max(1.0);
        if min_kink_distance(&theta, arch, measure, act)? >= margin {
            return Ok(theta);
        }
    }
    Err(Error::InvalidArgument(
        "could not sample a parameter vector clearing the kink margin".into(),
    ))
}

fn samples_1d(data: &[(f64, f64, f64)]) -> Result<EmpiricalMeasure> {
    EmpiricalMeasure::new(
        data.iter()
            .map(|&(x, y, w)| Sample { x: vec![x], y: vec![y], w })
            .collect(),
    )
}

fn samples_2d(data: &[([f64; 2], [f64; 2], f64)]) -> Result<EmpiricalMeasure> {
    EmpiricalMeasure::new(
        data.iter()
            .map(|&(x, y, w)| Sample { x: x.to_vec(), y: y.to_vec(), w })
            .collect(),
    )
}

pub fn fixture(name: &str) -> Result<Fixture> {
    match name {
        "affine-1-1" => Ok(Fixture {
            name: "affine-1-1",
            arch: Architecture::new(vec![1, 1])?,
            activation: PiecewiseActivation::relu(),
            loss: Loss::Mse,
            measure: samples_1d(&[(2.0, 1.0, 1.0), (-0.5, 0.3, 0.5), (1.2, -0.7, 1.0)])?,
            theta: ParamVector::new(vec![1.0, 0.0]),
            input_box: (-1.0, 2.5),
        }),
        "relu-1-2-1" => {
            let arch = Architecture::new(vec![1, 2, 1])?;
            let theta = random_theta(&arch, 1001, 1.0);
            Ok(Fixture {
                name: "relu-1-2-1",
                arch,
                activation: PiecewiseActivation::relu(),
                loss: Loss::Mse,
                measure: samples_1d(&[(0.8, 0.5, 1.0), (-0.6, -0.2, 1.0), (0.3, 0.9, 0.5)])?,
                theta,
                input_box: (-1.0, 1.0),
            })
        }
        "relu-2-3-2" => {
            let arch = Architecture::new(vec![2, 3, 2])?;
            let theta = random_theta(&arch, 1002, 1.0);
            Ok(Fixture {
                name: "relu-2-3-2",
                arch,
                activation: PiecewiseActivation::relu(),
                loss: Loss::Mse,
                measure: measure_2x2()?,
                theta,
                input_box: (-1.5, 1.5),
            })
        }
        "leaky-2-3-2" => {
            let arch = Architecture::new(vec![2, 3, 2])?;
            let theta = random_theta(&arch, 1003, 1.0);
            Ok(Fixture {
                name: "leaky-2-3-2",
                arch,
                activation: PiecewiseActivation::leaky_relu(0.1)?,
                loss: Loss::Mse,
                measure: measure_2x2()?,
                theta,
                input_box: (-1.5, 1.5),
            })
        }
        "relu-1-1-1-pinned" => Ok(Fixture {
            name: "relu-1-1-1-pinned",
            arch: Architecture::new(vec![1, 1, 1])?,
            activation: PiecewiseActivation::relu(),
            loss: Loss::Mse,
            // at x = 1 the hidden pre-activation is exactly 1·1 − 1 = 0
            measure: samples_1d(&[(1.0, 1.0, 1.0), (0.45, -0.3, 1.0)])?,
            theta: ParamVector::new(vec![1.0, -1.0, 0.8, 0.3]),
            input_box: (-1.5, 1.5),
        }),
        "relu-1-2-1-zero" => {
            let arch = Architecture::new(vec![1, 2, 1])?;
            let theta = ParamVector::zeros(arch.param_count());
            Ok(Fixture {
                name: "relu-1-2-1-zero",
                arch,
                activation: PiecewiseActivation::relu(),
                loss: Loss::Mse,
                measure: samples_1d(&[(0.6, 0.4, 1.0), (-0.3, -0.5, 1.0)])?,
                theta,
                input_box: (-1.0, 1.0),
            })
        }
        "relu-2-3-2-pinned" => {
            let arch = Architecture::new(vec![2, 3, 2])?;
            let mut theta = random_theta(&arch, 1004, 1.0);
            // pin hidden unit (1,1) at the first sample: weights ±0.5 on the
            // equal input coordinates cancel exactly, bias zero
            theta.as_mut_slice()[arch.weight_index(1, 1, 1)?] = 0.5;
            theta.as_mut_slice()[arch.weight_index(1, 1, 2)?] = -0.5;
            theta.as_mut_slice()[arch.bias_index(1, 1)?] = 0.0;
            Ok(Fixture {
                name: "relu-2-3-2-pinned",
                arch,
                activation: PiecewiseActivation::relu(),
                loss: Loss::Mse,
                measure: samples_2d(&[
                    ([0.8, 0.8], [0.3, -0.8], 1.0),
                    ([-1.1, 0.7], [0.0, 0.5], 0.7),
                ])?,
                theta,
                input_box: (-1.5, 1.5),
            })
        }
        other => Err(Error::InvalidArgument(format!("unknown fixture {other:?}"))),
    }
}

fn measure_2x2() -> Result<EmpiricalMeasure> {
    samples_2d(&[
        ([0.4, -0.2], [0.3, -0.8], 1.0),
        ([-1.1, 0.7], [0.0, 0.5], 0.7),
        ([0.9, 0.35], [-0.4, 0.1], 1.0),
        ([-0.25, -0.85], [0.6, -0.3], 0.5),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::forward;

    #[test]
    fn all_fixtures_build_consistently() {
        for name in fixture_names() {
            let f = fixture(name).unwrap();
            f.theta.check_len(&f.arch).unwrap();
            f.measure.check_dims(&f.arch).unwrap();
            let (lo, hi) = f.measure.input_bounds().unwrap();
            assert!(f.input_box.0 <= lo && hi <= f.input_box.1, "{name}");
        }
        assert!(fixture("nope").is_err());
    }

    #[test]
    fn pinned_fixtures_hit_a_kink_exactly() {
        for name in KINK_PINNED_FIXTURES {
            let f = fixture(name).unwrap();
            let mut pinned = false;
            for s in f.measure.samples() {
                let trace = forward(&f.theta, &f.arch, &s.x, &f.activation).unwrap();
                for k in 1..f.arch.depth() {
                    pinned |= trace
                        .preactivation(k)
                        .iter()
                        .any(|&p| f.activation.kinks().distance(p) == 0.0);
                }
            }
            assert!(pinned, "{name} has no kink-pinned pre-activation");
        }
    }

    #[test]
    fn smooth_theta_clears_margin() {
        let f = fixture("relu-2-3-2").unwrap();
        let theta = smooth_theta(&f.arch, &f.measure, &f.activation, 7, 1e-6).unwrap();
        let margin = 10.0 * 1e-6 * theta.l2_norm().max(1.0);
        assert!(min_kink_distance(&theta, &f.arch, &f.measure, &f.activation).unwrap() >= margin);
    }
}
