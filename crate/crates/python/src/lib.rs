// Copyright 2026 optomech contributors
// SPDX-License-Identifier: Apache-2.0

//! Python bindings: presets, the control environment, schedule replay,
//! diagnostics and training.

use std::ops::ControlFlow;

use nalgebra::DMatrix;
use num_complex::Complex64;
use optomech_core::config::{self, ExperimentConfig};
use optomech_core::control::{self, TargetSpec};
use optomech_core::diagnostics::{self, Subsystem, WignerGridSpec};
use optomech_core::dynamics::{evolve_episode_with, DensityMatrix, PulseSchedule};
use optomech_core::experiment;
use optomech_core::hilbert::{self, carrier_detunings, SystemConfig};
use optomech_core::Error;
use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn to_py(e: Error) -> PyErr {
    if e.is_config_error() {
        PyValueError::new_err(e.to_string())
    } else if matches!(e, Error::Io { .. } | Error::Csv(_) | Error::Checkpoint(_)) {
        PyOSError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

fn load(preset: Option<&str>, toml: Option<&str>) -> PyResult<ExperimentConfig> {
    match (preset, toml) {
        (Some(p), None) => config::preset(p).map_err(to_py),
        (None, Some(t)) => ExperimentConfig::from_toml_str(t).map_err(to_py),
        _ => Err(PyValueError::new_err("pass exactly one of `preset` or `toml`")),
    }
}

/// TOML text of a built-in parameter set.
#[pyfunction]
fn preset_toml(name: &str) -> PyResult<String> {
    config::preset(name).and_then(|c| c.to_toml()).map_err(to_py)
}

#[pyfunction]
fn preset_names() -> Vec<&'static str> {
    config::PRESETS.to_vec()
}

/// Transition coefficient `A^{(m)}_{n,s} = √m ⟨n|D(−β)|s⟩`.
#[pyfunction]
fn displaced_fock_coeff(m: usize, n: usize, s: usize, beta: f64) -> f64 {
    hilbert::displaced_fock_coeff(m, n, s, beta)
}

/// `-10 log10(1 - F)` with clamping.
#[pyfunction]
fn reward_from_fidelity(f: f64) -> f64 {
    control::reward_from_fidelity(f)
}

/// Episodic environment built from a preset name or TOML config text.
#[pyclass(module = "optomech")]
struct Environment {
    inner: control::Environment,
}

#[pymethods]
impl Environment {
    #[new]
    #[pyo3(signature = (preset=None, toml=None))]
    fn new(preset: Option<&str>, toml: Option<&str>) -> PyResult<Self> {
        let cfg = load(preset, toml)?;
        let env = control::Environment::new(
            cfg.system_config().map_err(to_py)?,
            cfg.target_spec().map_err(to_py)?,
            cfg.episode_spec().map_err(to_py)?,
        )
        .map_err(to_py)?;
        Ok(Environment { inner: env })
    }

    /// Returns the vacuum observation (`2D²` reals).
    fn reset(&mut self) -> Vec<f64> {
        self.inner.reset()
    }

    /// Returns `(observation, reward, fidelity, done)`.
    fn step(&mut self, action: Vec<f64>) -> PyResult<(Vec<f64>, f64, f64, bool)> {
        let o = self.inner.step(&action).map_err(to_py)?;
        Ok((o.observation, o.reward, o.fidelity, o.done))
    }

    #[getter]
    fn obs_dim(&self) -> usize {
        self.inner.obs_dim()
    }

    #[getter]
    fn action_dim(&self) -> usize {
        self.inner.action_dim()
    }

    #[getter]
    fn omega_max(&self) -> f64 {
        self.inner.omega_max()
    }

    #[getter]
    fn steps(&self) -> usize {
        self.inner.spec().steps
    }

    #[getter]
    fn fidelity(&self) -> f64 {
        self.inner.fidelity()
    }

    /// Carrier detunings `Δ_l` of the pulses.
    #[getter]
    fn detunings(&self) -> Vec<f64> {
        self.inner.schedule().detunings().deltas().to_vec()
    }

    /// Amplitudes applied so far, one row per step.
    #[getter]
    fn schedule(&self) -> Vec<Vec<f64>> {
        self.inner.schedule().amplitudes().to_vec()
    }
}

/// Replays `amplitudes` (one row per step) and returns the fidelity after
/// every step, starting with the initial state.
#[pyfunction]
#[pyo3(signature = (amplitudes, preset=None, toml=None))]
fn replay(amplitudes: Vec<Vec<f64>>, preset: Option<&str>, toml: Option<&str>) -> PyResult<Vec<f64>> {
    let cfg = load(preset, toml)?;
    let (sys, target, spec) = parts(&cfg)?;
    let det = carrier_detunings(&target, &sys).map_err(to_py)?;
    let sched = PulseSchedule::new(det, amplitudes, spec.total_time, spec.omega_max).map_err(to_py)?;
    let traj = evolve_episode_with(&DensityMatrix::ground(&sys), &sched, &sys, true, spec.integrator).map_err(to_py)?;
    traj.states
        .iter()
        .map(|rho| control::state_fidelity(rho, &target, spec.fidelity))
        .collect::<Result<Vec<_>, _>>()
        .map_err(to_py)
}

fn parts(cfg: &ExperimentConfig) -> PyResult<(SystemConfig, TargetSpec, control::EpisodeSpec)> {
    Ok((
        cfg.system_config().map_err(to_py)?,
        cfg.target_spec().map_err(to_py)?,
        cfg.episode_spec().map_err(to_py)?,
    ))
}

fn density(re: Vec<Vec<f64>>, im: Vec<Vec<f64>>, dims: Vec<usize>) -> PyResult<DensityMatrix> {
    let d = re.len();
    if im.len() != d || re.iter().chain(&im).any(|r| r.len() != d) {
        return Err(PyValueError::new_err("`re` and `im` must be square and of equal size"));
    }
    let m = DMatrix::from_fn(d, d, |i, j| Complex64::new(re[i][j], im[i][j]));
    DensityMatrix::from_matrix(m, dims).map_err(to_py)
}

/// Wigner function `W(re + i·im)` of a single-mode density matrix on a
/// square grid; returns `(axis, values)` with `values[i][j] = W(axis[i] + i·axis[j])`.
#[pyfunction]
#[pyo3(signature = (re, im, extent=4.0, points=81))]
fn wigner(re: Vec<Vec<f64>>, im: Vec<Vec<f64>>, extent: f64, points: usize) -> PyResult<(Vec<f64>, Vec<Vec<f64>>)> {
    let d = re.len();
    let rho = density(re, im, vec![d])?;
    let spec = WignerGridSpec {
        re_min: -extent,
        re_max: extent,
        im_min: -extent,
        im_max: extent,
        n_re: points,
        n_im: points,
    };
    let g = diagnostics::wigner(&rho, &spec).map_err(to_py)?;
    let values = (0..g.re.len()).map(|i| (0..g.im.len()).map(|j| g.values[(i, j)]).collect()).collect();
    Ok((g.re, values))
}

/// `log₂‖ρ^{T_2}‖₁` of a two-mode density matrix with factor dimensions `dims`.
#[pyfunction]
fn log_negativity(re: Vec<Vec<f64>>, im: Vec<Vec<f64>>, dims: (usize, usize)) -> PyResult<f64> {
    let rho = density(re, im, vec![dims.0, dims.1])?;
    diagnostics::log_negativity(&rho).map_err(to_py)
}

/// Reduced mechanical state of a joint observation vector, as `(re, im)`.
#[pyfunction]
#[pyo3(signature = (observation, preset=None, toml=None))]
fn mechanical_state(observation: Vec<f64>, preset: Option<&str>, toml: Option<&str>) -> PyResult<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let cfg = load(preset, toml)?;
    let sys = cfg.system_config().map_err(to_py)?;
    let rho = control::devectorize_state(&observation, sys.dims()).map_err(to_py)?;
    let rho_b = diagnostics::partial_trace(&rho, Subsystem::Mechanics).map_err(to_py)?;
    let m = rho_b.matrix();
    let rows = |f: fn(&Complex64) -> f64| (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| f(&m[(i, j)])).collect()).collect();
    Ok((rows(|z| z.re), rows(|z| z.im)))
}

/// Runs training with the given config and returns
/// `(best_fidelity, best_epoch, epochs_run, best_schedule)`. Outputs go to
/// the config's output directory. `stop_at` ends training once an episode
/// reaches that fidelity.
#[pyfunction]
#[pyo3(signature = (preset=None, toml=None, epochs=None, seed=None, out=None, stop_at=None))]
fn train(
    py: Python<'_>,
    preset: Option<&str>,
    toml: Option<&str>,
    epochs: Option<usize>,
    seed: Option<u64>,
    out: Option<std::path::PathBuf>,
    stop_at: Option<f64>,
) -> PyResult<(f64, usize, usize, Vec<Vec<f64>>)> {
    let mut cfg = load(preset, toml)?;
    if let Some(e) = epochs {
        cfg.rl.epochs = e;
    }
    if let Some(s) = seed {
        cfg.rl.seed = s;
    }
    if let Some(o) = out {
        cfg.output.dir = o;
    }
    let s = py
        .detach(|| {
            experiment::cmd_train_with(&cfg, |rec| match stop_at {
                Some(f) if rec.episode_fidelity >= f => ControlFlow::Break(()),
                _ => ControlFlow::Continue(()),
            })
        })
        .map_err(to_py)?;
    Ok((
        s.results.best_fidelity,
        s.results.best_epoch,
        s.results.epochs_run,
        s.best_schedule.amplitudes().to_vec(),
    ))
}

#[pymodule]
fn optomech(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Environment>()?;
    m.add_function(wrap_pyfunction!(preset_toml, m)?)?;
    m.add_function(wrap_pyfunction!(preset_names, m)?)?;
    m.add_function(wrap_pyfunction!(displaced_fock_coeff, m)?)?;
    m.add_function(wrap_pyfunction!(reward_from_fidelity, m)?)?;
    m.add_function(wrap_pyfunction!(replay, m)?)?;
    m.add_function(wrap_pyfunction!(wigner, m)?)?;
    m.add_function(wrap_pyfunction!(log_negativity, m)?)?;
    m.add_function(wrap_pyfunction!(mechanical_state, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add("__version__", experiment::VERSION)?;
    Ok(())
}
