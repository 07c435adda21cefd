//! Experiment configuration: JSON file with per-command fields, resolved
//! against the named fixtures. Command-line flags override the seed, output
//! directory, and summary format.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use gengrad_core::activation::{ActivationDescriptor, BlendingFunction, PiecewiseActivation};
use gengrad_core::fixtures;
use gengrad_core::network::{Architecture, NetworkSnapshot, ParamVector};
use gengrad_core::risk::{EmpiricalMeasure, Loss};
use gengrad_core::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Json,
    Csv,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ThetaSource {
    /// `{"widths": [...], "theta": [...]}` JSON, bare JSON array, or `.bin`
    /// little-endian 64-bit floats.
    File { path: PathBuf },
    /// Seeded uniform draw in `[-scale, scale]^d`.
    Random {
        #[serde(default = "default_scale")]
        scale: f64,
    },
    /// The fixture's canonical parameter vector.
    Fixture,
    Zeros,
    Inline { values: Vec<f64> },
}

fn default_scale() -> f64 {
    1.0
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

impl GridSpec {
    pub fn points(&self) -> Result<Vec<f64>> {
        if !(self.step > 0.0 && self.lo.is_finite() && self.hi >= self.lo) {
            return Err(Error::InvalidArgument("invalid grid specification".into()));
        }
        let count = ((self.hi - self.lo) / self.step).round() as usize + 1;
        Ok((0..count).map(|i| self.lo + i as f64 * self.step).collect())
    }
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Named fixture presetting architecture, activation, loss, dataset, and
    /// the canonical parameter vector; every explicit field overrides it.
    pub fixture: Option<String>,
    pub widths: Option<Vec<usize>>,
    pub activation: Option<ActivationDescriptor>,
    pub loss: Option<Loss>,
    /// Dataset path: `.json` (`{"samples": [...]}`) or `.csv`
    /// (`x_0..,y_0..,w` columns).
    pub dataset: Option<PathBuf>,
    pub theta: Option<ThetaSource>,
    /// Number of seeded parameter draws for the multi-θ commands.
    pub theta_count: Option<usize>,
    pub n_schedule: Option<Vec<u64>>,
    pub radii: Option<Vec<f64>>,
    pub n_dirs: Option<usize>,
    pub eta: Option<BlendingFunction>,
    pub seed: Option<u64>,
    /// Seed pair for the Lipschitz stability comparison.
    pub seeds: Option<Vec<u64>>,
    pub out: Option<PathBuf>,
    pub format: Option<OutputFormat>,
    pub grid: Option<GridSpec>,
    pub n_list: Option<Vec<u64>>,
    pub ball_radius: Option<f64>,
    pub n_pairs: Option<usize>,
    pub fd_step: Option<f64>,
    pub input_box: Option<[f64; 2]>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let config: ExperimentConfig = serde_json::from_str(&text)?;
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<()> {
        if let Some(schedule) = &self.n_schedule {
            if schedule.is_empty() || schedule[0] == 0 {
                return Err(Error::InvalidArgument("n_schedule must start at n >= 1".into()));
            }
            if schedule.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidArgument(
                    "n_schedule must be strictly increasing".into(),
                ));
            }
        }
        if let Some(radii) = &self.radii {
            if radii.is_empty()
                || radii.iter().any(|&r| !r.is_finite() || r <= 0.0)
                || radii.windows(2).any(|w| w[0] <= w[1])
            {
                return Err(Error::InvalidArgument(
                    "radii must be strictly decreasing and positive".into(),
                ));
            }
        }
        if self.n_dirs == Some(0) {
            return Err(Error::InvalidArgument("n_dirs must be at least 1".into()));
        }
        if let Some(seeds) = &self.seeds {
            if seeds.is_empty() {
                return Err(Error::InvalidArgument("seeds must be non-empty".into()));
            }
        }
        if let Some(dataset) = &self.dataset {
            if !dataset.exists() {
                return Err(Error::InvalidArgument(format!(
                    "dataset file {} does not exist",
                    dataset.display()
                )));
            }
        }
        if let Some(ThetaSource::File { path }) = &self.theta {
            if !path.exists() {
                return Err(Error::InvalidArgument(format!(
                    "theta file {} does not exist",
                    path.display()
                )));
            }
        }
        Ok(())
    }
}

/// A fully-resolved experiment: everything the commands need.
pub struct Experiment {
    pub fixture_name: Option<String>,
    pub arch: Architecture,
    pub activation: PiecewiseActivation,
    pub loss: Loss,
    pub measure: EmpiricalMeasure,
    /// Canonical parameter vector (fixture θ or the first draw).
    pub theta: ParamVector,
    pub input_box: (f64, f64),
    pub seed: u64,
    pub eta: BlendingFunction,
}

impl Experiment {
    pub fn resolve(config: &ExperimentConfig) -> Result<Self> {
        let fixture = config
            .fixture
            .as_deref()
            .map(fixtures::fixture)
            .transpose()?;

        let arch = match (&config.widths, &fixture) {
            (Some(widths), _) => Architecture::new(widths.clone())?,
            (None, Some(f)) => f.arch.clone(),
            (None, None) => {
                return Err(Error::InvalidArgument(
                    "config needs either a fixture or explicit widths".into(),
                ))
            }
        };
        let activation = match (&config.activation, &fixture) {
            (Some(desc), _) => desc.build()?,
            (None, Some(f)) => f.activation.clone(),
            (None, None) => PiecewiseActivation::relu(),
        };
        let loss = match (&config.loss, &fixture) {
            (Some(loss), _) => loss.clone(),
            (None, Some(f)) => f.loss.clone(),
            (None, None) => Loss::Mse,
        };
        let measure = match (&config.dataset, &fixture) {
            (Some(path), _) => load_dataset(path, &arch)?,
            (None, Some(f)) => f.measure.clone(),
            (None, None) => {
                return Err(Error::InvalidArgument(
                    "config needs either a fixture or a dataset".into(),
                ))
            }
        };
        measure.check_dims(&arch)?;

        let seed = config.seed.unwrap_or(0);
        let theta = match &config.theta {
            Some(ThetaSource::File { path }) => load_theta(path, &arch)?,
            Some(ThetaSource::Random { scale }) => fixtures::random_theta(&arch, seed, *scale),
            Some(ThetaSource::Zeros) => ParamVector::zeros(arch.param_count()),
            Some(ThetaSource::Inline { values }) => ParamVector::new(values.clone()),
            Some(ThetaSource::Fixture) | None => match &fixture {
                Some(f) if f.arch == arch => f.theta.clone(),
                _ => fixtures::random_theta(&arch, seed, 1.0),
            },
        };
        theta.check_len(&arch)?;

        let mut input_box = fixture.as_ref().map(|f| f.input_box).unwrap_or((-1.0, 1.0));
        if let Some([a, b]) = config.input_box {
            input_box = (a, b);
        }
        if let Some((lo, hi)) = measure.input_bounds() {
            input_box = (input_box.0.min(lo), input_box.1.max(hi));
        }

        Ok(Self {
            fixture_name: config.fixture.clone(),
            arch,
            activation,
            loss,
            measure,
            theta,
            input_box,
            seed,
            eta: config.eta.unwrap_or(BlendingFunction::CubicSmoothstep),
        })
    }
}

fn load_dataset(path: &Path, arch: &Architecture) -> Result<EmpiricalMeasure> {
    let text = std::fs::read_to_string(path)?;
    match path.extension().and_then(|e| e.to_str()) {
        Some("csv") => EmpiricalMeasure::from_csv(&text, arch.input_dim(), arch.output_dim()),
        _ => Ok(serde_json::from_str(&text)?),
    }
}

fn load_theta(path: &Path, arch: &Architecture) -> Result<ParamVector> {
    if path.extension().and_then(|e| e.to_str()) == Some("bin") {
        let bytes = std::fs::read(path)?;
        return ParamVector::from_le_bytes(&bytes);
    }
    let text = std::fs::read_to_string(path)?;
    if let Ok(snapshot) = serde_json::from_str::<NetworkSnapshot>(&text) {
        let (snap_arch, theta) = snapshot.into_parts()?;
        if &snap_arch != arch {
            return Err(Error::DimensionMismatch(
                "theta file architecture differs from the configured one".into(),
            ));
        }
        return Ok(theta);
    }
    Ok(ParamVector::new(serde_json::from_str::<Vec<f64>>(&text)?))
}
