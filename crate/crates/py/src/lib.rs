//! Python bindings: thin wrappers over the core types plus the experiment
//! harnesses. Report-producing functions return JSON text in the same
//! full-precision format the CLI writes, so Python can `json.loads` them.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use gengrad_core::activation::{
    pathological_derivative_probe, ApproximantFamily, BlendingFunction, PiecewiseActivation, Side,
};
use gengrad_core::analysis::{self, WitnessOptions};
use gengrad_core::fixtures;
use gengrad_core::gradients;
use gengrad_core::network::{self, Architecture, ParamVector};
use gengrad_core::report::to_json;
use gengrad_core::risk::{self, EmpiricalMeasure, Loss as CoreLoss, Sample};

fn err(e: gengrad_core::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn check_n(n: u64) -> PyResult<()> {
    if n == 0 {
        return Err(PyValueError::new_err("approximant index n must be at least 1"));
    }
    Ok(())
}

fn parse_side(side: &str) -> PyResult<Side> {
    match side {
        "left" => Ok(Side::Left),
        "right" => Ok(Side::Right),
        other => Err(PyValueError::new_err(format!(
            "approach side must be \"left\" or \"right\", got {other:?}"
        ))),
    }
}

fn parse_eta(eta: &str) -> PyResult<BlendingFunction> {
    match eta {
        "cubic_smoothstep" | "smoothstep" => Ok(BlendingFunction::CubicSmoothstep),
        "bump" => Ok(BlendingFunction::Bump),
        other => Err(PyValueError::new_err(format!(
            "blending function must be \"cubic_smoothstep\" or \"bump\", got {other:?}"
        ))),
    }
}

/// Piecewise-C¹ activation with an explicit kink set and prescribed kink
/// derivative values.
#[pyclass(skip_from_py_object)]
#[derive(Clone)]
pub struct Activation {
    inner: PiecewiseActivation,
}

#[pymethods]
impl Activation {
    #[staticmethod]
    fn relu() -> Self {
        Self { inner: PiecewiseActivation::relu() }
    }

    #[staticmethod]
    fn leaky_relu(gamma: f64) -> PyResult<Self> {
        Ok(Self { inner: PiecewiseActivation::leaky_relu(gamma).map_err(err)? })
    }

    #[staticmethod]
    #[pyo3(signature = (kink_value=-1.0, side="left"))]
    fn abs(kink_value: f64, side: &str) -> PyResult<Self> {
        Ok(Self {
            inner: PiecewiseActivation::abs_with(kink_value, parse_side(side)?).map_err(err)?,
        })
    }

    #[staticmethod]
    fn hard_tanh() -> Self {
        Self { inner: PiecewiseActivation::hard_tanh() }
    }

    #[staticmethod]
    fn softplus() -> Self {
        Self { inner: PiecewiseActivation::softplus() }
    }

    #[staticmethod]
    fn oscillatory() -> Self {
        Self { inner: PiecewiseActivation::oscillatory() }
    }

    /// Builds from the JSON descriptor shape used by the CLI configs.
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let desc: gengrad_core::ActivationDescriptor =
            serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?;
        Ok(Self { inner: desc.build().map_err(err)? })
    }

    fn value(&self, x: f64) -> f64 {
        self.inner.value(x)
    }

    /// The generalized derivative `d_g A` (total on the reals).
    fn derivative(&self, x: f64) -> f64 {
        self.inner.generalized_derivative(x)
    }

    fn offkink_derivative(&self, x: f64) -> f64 {
        self.inner.offkink_derivative(x)
    }

    fn kinks(&self) -> Vec<f64> {
        self.inner.kinks().points().to_vec()
    }

    fn kink_values(&self) -> Vec<f64> {
        self.inner.kink_values().to_vec()
    }

    fn approach_side(&self) -> &'static str {
        match self.inner.approach_side() {
            Side::Left => "left",
            Side::Right => "right",
        }
    }

    fn name(&self) -> String {
        self.inner.name().to_string()
    }

    /// Sampled hypothesis checks as JSON (continuity, one-sided continuity,
    /// derivative boundedness).
    #[pyo3(signature = (half_width=3.0))]
    fn validate(&self, half_width: f64) -> PyResult<String> {
        to_json(&self.inner.validate(half_width)).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!("Activation({})", self.inner.name())
    }
}

/// The C¹ approximant family `n -> G_n` for an activation.
#[pyclass(skip_from_py_object)]
#[derive(Clone)]
pub struct Approximants {
    inner: ApproximantFamily,
}

#[pymethods]
impl Approximants {
    #[new]
    #[pyo3(signature = (activation, eta="cubic_smoothstep"))]
    fn new(activation: PyRef<'_, Activation>, eta: &str) -> PyResult<Self> {
        Ok(Self { inner: ApproximantFamily::new(activation.inner.clone(), parse_eta(eta)?) })
    }

    fn value(&self, n: u64, x: f64) -> PyResult<f64> {
        check_n(n)?;
        Ok(self.inner.value(n, x))
    }

    fn derivative(&self, n: u64, x: f64) -> PyResult<f64> {
        check_n(n)?;
        Ok(self.inner.derivative(n, x))
    }

    fn delta(&self) -> f64 {
        self.inner.delta()
    }

    fn boundary_c1_defect(&self, n: u64) -> PyResult<f64> {
        check_n(n)?;
        Ok(self.inner.boundary_c1_defect(n))
    }

    /// Per-grid-point stabilization sweep as JSON.
    fn validate(&self, grid: Vec<f64>, n_max: u64) -> PyResult<String> {
        check_n(n_max)?;
        to_json(&self.inner.validate(&grid, n_max)).map_err(err)
    }
}

/// Architecture plus forward evaluation over the flat parameter layout.
#[pyclass(skip_from_py_object)]
#[derive(Clone)]
pub struct Network {
    arch: Architecture,
}

#[pymethods]
impl Network {
    #[new]
    fn new(widths: Vec<usize>) -> PyResult<Self> {
        Ok(Self { arch: Architecture::new(widths).map_err(err)? })
    }

    fn widths(&self) -> Vec<usize> {
        self.arch.widths().to_vec()
    }

    fn depth(&self) -> usize {
        self.arch.depth()
    }

    fn param_count(&self) -> usize {
        self.arch.param_count()
    }

    /// 0-based flat index of weight `(k, i, j)` in the 1-based convention.
    fn weight_index(&self, k: usize, i: usize, j: usize) -> PyResult<usize> {
        self.arch.weight_index(k, i, j).map_err(err)
    }

    /// 0-based flat index of bias `(k, i)`.
    fn bias_index(&self, k: usize, i: usize) -> PyResult<usize> {
        self.arch.bias_index(k, i).map_err(err)
    }

    /// Full forward pass: returns `(output, preactivations_per_layer)`.
    fn forward(
        &self,
        theta: Vec<f64>,
        x: Vec<f64>,
        activation: PyRef<'_, Activation>,
    ) -> PyResult<(Vec<f64>, Vec<Vec<f64>>)> {
        let theta = ParamVector::new(theta);
        let trace = network::forward(&theta, &self.arch, &x, &activation.inner).map_err(err)?;
        Ok((trace.output().to_vec(), trace.preactivations().to_vec()))
    }

    /// Forward pass through `G_n`.
    fn forward_approx(
        &self,
        theta: Vec<f64>,
        x: Vec<f64>,
        approximants: PyRef<'_, Approximants>,
        n: u64,
    ) -> PyResult<(Vec<f64>, Vec<Vec<f64>>)> {
        check_n(n)?;
        let theta = ParamVector::new(theta);
        let trace =
            network::forward_approx(&theta, &self.arch, &x, &approximants.inner, n).map_err(err)?;
        Ok((trace.output().to_vec(), trace.preactivations().to_vec()))
    }
}

/// Finite weighted empirical measure of input/output pairs.
#[pyclass(skip_from_py_object)]
#[derive(Clone)]
pub struct Dataset {
    inner: EmpiricalMeasure,
}

#[pymethods]
impl Dataset {
    #[new]
    fn new(samples: Vec<(Vec<f64>, Vec<f64>, f64)>) -> PyResult<Self> {
        let samples = samples
            .into_iter()
            .map(|(x, y, w)| Sample { x, y, w })
            .collect();
        Ok(Self { inner: EmpiricalMeasure::new(samples).map_err(err)? })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?,
        })
    }

    fn to_json(&self) -> PyResult<String> {
        to_json(&self.inner).map_err(err)
    }

    fn total_mass(&self) -> f64 {
        self.inner.total_mass()
    }

    fn __len__(&self) -> usize {
        self.inner.samples().len()
    }
}

/// C¹ loss function.
#[pyclass(skip_from_py_object)]
#[derive(Clone)]
pub struct Loss {
    inner: CoreLoss,
}

#[pymethods]
impl Loss {
    #[staticmethod]
    fn mse() -> Self {
        Self { inner: CoreLoss::Mse }
    }

    #[staticmethod]
    fn weighted_mse(weights: Vec<f64>) -> Self {
        Self { inner: CoreLoss::WeightedMse { weights } }
    }

    #[staticmethod]
    fn ridge_mse(lambda: f64) -> Self {
        Self { inner: CoreLoss::RidgeMse { lambda } }
    }

    fn value(&self, z: Vec<f64>, y: Vec<f64>, theta: Vec<f64>) -> f64 {
        self.inner.value(&z, &y, &theta)
    }
}

/// Risk under the nonsmooth activation.
#[pyfunction]
fn risk_value(
    theta: Vec<f64>,
    network: PyRef<'_, Network>,
    dataset: PyRef<'_, Dataset>,
    loss: PyRef<'_, Loss>,
    activation: PyRef<'_, Activation>,
) -> PyResult<f64> {
    risk::risk(
        &ParamVector::new(theta),
        &network.arch,
        &dataset.inner,
        &loss.inner,
        &activation.inner,
    )
    .map_err(err)
}

/// Risk under the approximant `G_n`.
#[pyfunction]
fn risk_smoothed(
    theta: Vec<f64>,
    network: PyRef<'_, Network>,
    dataset: PyRef<'_, Dataset>,
    loss: PyRef<'_, Loss>,
    approximants: PyRef<'_, Approximants>,
    n: u64,
) -> PyResult<f64> {
    check_n(n)?;
    risk::risk_smoothed(
        &ParamVector::new(theta),
        &network.arch,
        &dataset.inner,
        &loss.inner,
        &approximants.inner,
        n,
    )
    .map_err(err)
}

/// The generalized gradient by reverse accumulation with `d_g A`.
#[pyfunction]
fn gradient(
    theta: Vec<f64>,
    network: PyRef<'_, Network>,
    dataset: PyRef<'_, Dataset>,
    loss: PyRef<'_, Loss>,
    activation: PyRef<'_, Activation>,
) -> PyResult<Vec<f64>> {
    Ok(gradients::backprop_generalized(
        &ParamVector::new(theta),
        &network.arch,
        &dataset.inner,
        &loss.inner,
        &activation.inner,
    )
    .map_err(err)?
    .into_vec())
}

/// The exact gradient of the smoothed risk.
#[pyfunction]
fn gradient_smoothed(
    theta: Vec<f64>,
    network: PyRef<'_, Network>,
    dataset: PyRef<'_, Dataset>,
    loss: PyRef<'_, Loss>,
    approximants: PyRef<'_, Approximants>,
    n: u64,
) -> PyResult<Vec<f64>> {
    check_n(n)?;
    Ok(gradients::backprop_smoothed(
        &ParamVector::new(theta),
        &network.arch,
        &dataset.inner,
        &loss.inner,
        &approximants.inner,
        n,
    )
    .map_err(err)?
    .into_vec())
}

/// The literal path-sum oracle (guarded against oversized architectures).
#[pyfunction]
fn gradient_pathsum(
    theta: Vec<f64>,
    network: PyRef<'_, Network>,
    dataset: PyRef<'_, Dataset>,
    loss: PyRef<'_, Loss>,
    activation: PyRef<'_, Activation>,
) -> PyResult<Vec<f64>> {
    let act = activation.inner.clone();
    Ok(gradients::pathsum_risk_gradient(
        &ParamVector::new(theta),
        &network.arch,
        &dataset.inner,
        &loss.inner,
        |v| act.value(v),
        |v| act.generalized_derivative(v),
    )
    .map_err(err)?
    .into_vec())
}

/// Gradient convergence sweep along an approximant-index schedule; returns
/// the full report as JSON.
#[pyfunction]
fn convergence_experiment(
    theta: Vec<f64>,
    network: PyRef<'_, Network>,
    dataset: PyRef<'_, Dataset>,
    loss: PyRef<'_, Loss>,
    approximants: PyRef<'_, Approximants>,
    n_schedule: Vec<u64>,
) -> PyResult<String> {
    let report = analysis::convergence_experiment(
        &ParamVector::new(theta),
        &network.arch,
        &dataset.inner,
        &loss.inner,
        &approximants.inner,
        &n_schedule,
    )
    .map_err(err)?;
    to_json(&report).map_err(err)
}

/// Limiting-subgradient witness sequence; returns the witness as JSON.
#[pyfunction]
#[pyo3(signature = (theta, network, dataset, loss, activation, approximants, n_dirs=8, radii=vec![1e-4, 1e-6, 1e-8], seed=0))]
#[allow(clippy::too_many_arguments)]
fn subgradient_witness(
    theta: Vec<f64>,
    network: PyRef<'_, Network>,
    dataset: PyRef<'_, Dataset>,
    loss: PyRef<'_, Loss>,
    activation: PyRef<'_, Activation>,
    approximants: PyRef<'_, Approximants>,
    n_dirs: usize,
    radii: Vec<f64>,
    seed: u64,
) -> PyResult<String> {
    let options = WitnessOptions { seed, ..WitnessOptions::default() };
    let witness = analysis::limiting_subgradient_check(
        &ParamVector::new(theta),
        &network.arch,
        &dataset.inner,
        &loss.inner,
        &activation.inner,
        &approximants.inner,
        n_dirs,
        &radii,
        &options,
    )
    .map_err(err)?;
    to_json(&witness).map_err(err)
}

/// Finite-difference vs generalized-gradient agreement at a smooth point;
/// returns JSON.
#[pyfunction]
#[pyo3(signature = (theta, network, dataset, loss, activation, h=1e-6))]
fn smooth_region_agreement(
    theta: Vec<f64>,
    network: PyRef<'_, Network>,
    dataset: PyRef<'_, Dataset>,
    loss: PyRef<'_, Loss>,
    activation: PyRef<'_, Activation>,
    h: f64,
) -> PyResult<String> {
    let report = analysis::smooth_region_agreement(
        &ParamVector::new(theta),
        &network.arch,
        &dataset.inner,
        &loss.inner,
        &activation.inner,
        h,
    )
    .map_err(err)?;
    to_json(&report).map_err(err)
}

/// Empirical local Lipschitz constant of the risk over a parameter ball.
#[pyfunction]
#[pyo3(signature = (center, network, dataset, loss, activation, radius=1.0, n_pairs=1000, seed=0))]
#[allow(clippy::too_many_arguments)]
fn lipschitz_probe(
    center: Vec<f64>,
    network: PyRef<'_, Network>,
    dataset: PyRef<'_, Dataset>,
    loss: PyRef<'_, Loss>,
    activation: PyRef<'_, Activation>,
    radius: f64,
    n_pairs: usize,
    seed: u64,
) -> PyResult<f64> {
    analysis::lipschitz_probe(
        &network.arch,
        &dataset.inner,
        &loss.inner,
        &activation.inner,
        &ParamVector::new(center),
        radius,
        n_pairs,
        seed,
    )
    .map_err(err)
}

/// `(x_k, |g'(x_k)|)` for the `x·sin(1/x)` fixture: `x_k = 1/(k·pi)` with
/// exact magnitudes `k·pi`.
#[pyfunction]
fn pathological_probe(k_max: u32) -> Vec<(f64, f64)> {
    pathological_derivative_probe(k_max)
}

/// Names of the built-in experiment fixtures.
#[pyfunction]
fn fixture_names() -> Vec<&'static str> {
    fixtures::fixture_names()
}

/// A named fixture exploded into `(widths, theta, samples)` plus its
/// activation and loss.
#[pyfunction]
fn fixture(py: Python<'_>, name: &str) -> PyResult<Py<PyAny>> {
    let f = fixtures::fixture(name).map_err(err)?;
    let samples: Vec<(Vec<f64>, Vec<f64>, f64)> = f
        .measure
        .samples()
        .iter()
        .map(|s| (s.x.clone(), s.y.clone(), s.w))
        .collect();
    let dict = pyo3::types::PyDict::new(py);
    dict.set_item("name", f.name)?;
    dict.set_item("widths", f.arch.widths().to_vec())?;
    dict.set_item("theta", f.theta.into_vec())?;
    dict.set_item("samples", samples)?;
    dict.set_item("activation", Activation { inner: f.activation }.into_pyobject(py)?)?;
    dict.set_item("loss", Loss { inner: f.loss }.into_pyobject(py)?)?;
    dict.set_item("input_box", f.input_box)?;
    Ok(dict.into())
}

/// Uniform seeded parameter draw in `[-scale, scale]^d`.
#[pyfunction]
#[pyo3(signature = (network, seed, scale=1.0))]
fn random_theta(network: PyRef<'_, Network>, seed: u64, scale: f64) -> Vec<f64> {
    fixtures::random_theta(&network.arch, seed, scale).into_vec()
}

#[pymodule]
mod gengrad {
    #[pymodule_export]
    use super::{
        convergence_experiment, fixture, fixture_names, gradient, gradient_pathsum,
        gradient_smoothed, lipschitz_probe, pathological_probe, random_theta, risk_smoothed,
        risk_value, smooth_region_agreement, subgradient_witness, Activation, Approximants,
        Dataset, Loss, Network,
    };
}
