//! Python bindings: boxes, detections, CSBA association, the UniKF track,
//! WLS arithmetic, frame metrics and the benchmark runner.

use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyBool, PyDict, PyList, PyString};
use serde_json::Value;

use latefuse::assoc::CsbaParams;
use latefuse::eval::{FpReference, Prediction};
use latefuse::geometry::{self, BevBox};
use latefuse::io::{self, SummaryRow};
use latefuse::noise::{ClassLabel, Detection, GtObject, SceneSpec, Sigma};
use latefuse::pipeline::{self, ExperimentConfig, Method, NoiseLevel};
use latefuse::unikf::{FilterParams, Measurement, TrackState};

fn err(e: latefuse::Error) -> PyErr {
    match e {
        latefuse::Error::Io { .. } => PyOSError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn to_py(py: Python<'_>, v: &Value) -> PyResult<Py<PyAny>> {
    Ok(match v {
        Value::Null => py.None(),
        Value::Bool(b) => PyBool::new(py, *b).to_owned().into_any().unbind(),
        Value::Number(n) => match n.as_i64() {
            Some(i) => i.into_pyobject(py)?.into_any().unbind(),
            None => n.as_f64().unwrap_or(f64::NAN).into_pyobject(py)?.into_any().unbind(),
        },
        Value::String(s) => PyString::new(py, s).into_any().unbind(),
        Value::Array(items) => {
            let list = PyList::empty(py);
            for item in items {
                list.append(to_py(py, item)?)?;
            }
            list.into_any().unbind()
        }
        Value::Object(map) => {
            let dict = PyDict::new(py);
            for (k, item) in map {
                dict.set_item(k, to_py(py, item)?)?;
            }
            dict.into_any().unbind()
        }
    })
}

fn serde_to_py<T: serde::Serialize>(py: Python<'_>, v: &T) -> PyResult<Py<PyAny>> {
    let value = serde_json::to_value(v).map_err(|e| PyValueError::new_err(e.to_string()))?;
    to_py(py, &value)
}

/// Oriented bird's-eye-view box: center (x, y), width, depth, yaw in radians.
#[pyclass(name = "BevBox", module = "latefuse", frozen, from_py_object)]
#[derive(Clone)]
struct PyBevBox {
    inner: BevBox,
}

#[pymethods]
impl PyBevBox {
    #[new]
    fn new(x: f64, y: f64, w: f64, d: f64, theta: f64) -> PyResult<Self> {
        Ok(Self {
            inner: BevBox::new(x, y, w, d, theta).map_err(err)?,
        })
    }

    #[getter]
    fn x(&self) -> f64 {
        self.inner.x
    }
    #[getter]
    fn y(&self) -> f64 {
        self.inner.y
    }
    #[getter]
    fn w(&self) -> f64 {
        self.inner.w
    }
    #[getter]
    fn d(&self) -> f64 {
        self.inner.d
    }
    #[getter]
    fn theta(&self) -> f64 {
        self.inner.theta
    }

    fn area(&self) -> f64 {
        self.inner.area()
    }

    /// Rotated IoU.
    fn iou(&self, other: &PyBevBox) -> f64 {
        geometry::iou_bev(&self.inner, &other.inner)
    }

    /// Rotated generalized IoU, in [-1, 1].
    fn giou(&self, other: &PyBevBox) -> f64 {
        geometry::giou_bev(&self.inner, &other.inner)
    }

    fn __repr__(&self) -> String {
        let b = &self.inner;
        format!("BevBox(x={}, y={}, w={}, d={}, theta={})", b.x, b.y, b.w, b.d, b.theta)
    }
}

/// A detection with per-component standard deviations.
#[pyclass(name = "Detection", module = "latefuse", frozen, from_py_object)]
#[derive(Clone)]
struct PyDetection {
    inner: Detection,
}

#[pymethods]
impl PyDetection {
    #[new]
    #[pyo3(signature = (bbox, sigma_x, sigma_y, sigma_w, sigma_d, sigma_theta, cls="car", gt_id=0, source=0, t_us=0, t_recv_us=None))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        bbox: &PyBevBox,
        sigma_x: f64,
        sigma_y: f64,
        sigma_w: f64,
        sigma_d: f64,
        sigma_theta: f64,
        cls: &str,
        gt_id: u64,
        source: u32,
        t_us: i64,
        t_recv_us: Option<i64>,
    ) -> PyResult<Self> {
        let inner = Detection {
            bbox: bbox.inner,
            source,
            t_meas: t_us,
            t_recv: t_recv_us.unwrap_or(t_us),
            gt_id,
            class: cls.parse::<ClassLabel>().map_err(err)?,
            sigma: Sigma {
                x: sigma_x,
                y: sigma_y,
                theta: sigma_theta,
                w: sigma_w,
                d: sigma_d,
            },
        };
        inner.validate().map_err(err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn bbox(&self) -> PyBevBox {
        PyBevBox { inner: self.inner.bbox }
    }
    #[getter]
    fn cls(&self) -> &'static str {
        self.inner.class.as_str()
    }
    #[getter]
    fn gt_id(&self) -> u64 {
        self.inner.gt_id
    }
    #[getter]
    fn t_us(&self) -> i64 {
        self.inner.t_meas
    }
}

fn detections(v: &[PyDetection]) -> Vec<Detection> {
    v.iter().map(|d| d.inner.clone()).collect()
}

/// CSBA association of two detection lists. Returns
/// `(pairs, unmatched_a, unmatched_b)` with pairs as `(i, j, score)`.
#[pyfunction]
#[pyo3(signature = (a, b, gate=None))]
fn csba_associate(
    a: Vec<PyDetection>,
    b: Vec<PyDetection>,
    gate: Option<f64>,
) -> (Vec<(usize, usize, f64)>, Vec<usize>, Vec<usize>) {
    let mut params = CsbaParams::default();
    if let Some(g) = gate {
        params.gate = g;
    }
    let r = latefuse::assoc::csba_associate(&detections(&a), &detections(&b), &params);
    (r.pairs, r.unmatched_a, r.unmatched_b)
}

/// Inverse-variance weighted mean and its variance.
#[pyfunction]
fn inverse_variance_mean(values: Vec<f64>, variances: Vec<f64>) -> PyResult<(f64, f64)> {
    latefuse::baselines::inverse_variance_mean(&values, &variances).map_err(err)
}

/// Per-frame metrics. Predictions and ground truth are both given as
/// detections; only box, class and gt_id are used.
#[pyfunction]
#[pyo3(signature = (predictions, ground_truth, fp_reference="lineage"))]
fn evaluate_frame(
    py: Python<'_>,
    predictions: Vec<PyDetection>,
    ground_truth: Vec<PyDetection>,
    fp_reference: &str,
) -> PyResult<Py<PyAny>> {
    let fp_ref = match fp_reference {
        "lineage" => FpReference::Lineage,
        "nearest" => FpReference::Nearest,
        v => return Err(PyValueError::new_err(format!("fp_reference must be lineage or nearest, got '{v}'"))),
    };
    let preds: Vec<Prediction> = predictions
        .iter()
        .map(|p| Prediction {
            bbox: p.inner.bbox,
            class: p.inner.class,
            gt_id: p.inner.gt_id,
        })
        .collect();
    let gts: Vec<GtObject> = ground_truth
        .iter()
        .map(|g| GtObject {
            gt_id: g.inner.gt_id,
            class: g.inner.class,
            bbox: g.inner.bbox,
            vx: 0.0,
            vy: 0.0,
        })
        .collect();
    serde_to_py(py, &latefuse::eval::evaluate_frame(&preds, &gts, fp_ref))
}

/// Single-object UniKF track: constant-velocity state
/// `[x, y, vx, vy, w, d, theta]` with out-of-sequence rollback.
#[pyclass(name = "Track", module = "latefuse")]
struct PyTrack {
    state: TrackState,
    params: FilterParams,
}

#[pymethods]
impl PyTrack {
    #[new]
    #[pyo3(signature = (detection, track_id=0))]
    fn new(detection: &PyDetection, track_id: u64) -> Self {
        let params = FilterParams::default();
        Self {
            state: TrackState::new(track_id, &detection.inner, &params),
            params,
        }
    }

    /// Feeds one detection; returns whether it was applied.
    fn ingest(&mut self, detection: &PyDetection) -> PyResult<bool> {
        let m = Measurement::from_detection(&detection.inner, &self.params);
        Ok(self.state.ingest(&m, &self.params).map_err(err)?.accepted())
    }

    #[getter]
    fn t_us(&self) -> i64 {
        self.state.t_filter()
    }

    #[getter]
    fn state(&self) -> Vec<f64> {
        self.state.x().iter().copied().collect()
    }

    #[getter]
    fn covariance(&self) -> Vec<Vec<f64>> {
        let p = self.state.p();
        (0..7).map(|i| (0..7).map(|j| p[(i, j)]).collect()).collect()
    }

    /// Current estimate as a box.
    fn bbox(&self) -> PyBevBox {
        PyBevBox {
            inner: self.state.fused_box().bbox,
        }
    }
}

/// Noise preset parameters by name (noise1, noise2, noise3).
#[pyfunction]
fn noise_preset(py: Python<'_>, name: &str) -> PyResult<Py<PyAny>> {
    let p = io::resolve_noise_preset(name).map_err(err)?;
    let dict = PyDict::new(py);
    dict.set_item("name", p.name)?;
    dict.set_item("noise", serde_to_py(py, &p.noise)?)?;
    dict.set_item("iou_th", p.iou_th)?;
    dict.set_item("dist_th", p.dist_th)?;
    Ok(dict.into_any().unbind())
}

/// Runs methods x noise levels over Monte Carlo trials on a synthetic scene
/// and returns one summary dict per (level, method).
#[pyfunction]
#[pyo3(signature = (methods="unikf,none", noise="noise1", trials=5, seed=0, objects=None, duration_s=None, jobs=1))]
#[allow(clippy::too_many_arguments)]
fn run_benchmark(
    py: Python<'_>,
    methods: &str,
    noise: &str,
    trials: u32,
    seed: u64,
    objects: Option<usize>,
    duration_s: Option<f64>,
    jobs: usize,
) -> PyResult<Py<PyAny>> {
    let mut cfg = ExperimentConfig::default();
    cfg.methods = Method::parse_list(methods).map_err(err)?;
    cfg.levels = noise
        .split(',')
        .map(|s| NoiseLevel::parse(s.trim()))
        .collect::<latefuse::Result<_>>()
        .map_err(err)?;
    cfg.trials = trials;
    cfg.seed = seed;
    if let Some(n) = objects {
        cfg.scene.counts = SceneSpec::mixed("", n, 1, 1).counts;
    }
    if let Some(d) = duration_s {
        cfg.scene.duration_us = (d * 1e6).round() as i64;
    }
    let result = py
        .detach(|| {
            cfg.validate()?;
            let scene = pipeline::build_scene(&cfg)?;
            pipeline::run_experiment(&cfg, &scene, jobs.max(1))
        })
        .map_err(err)?;
    let rows: Vec<SummaryRow> = result
        .runs
        .iter()
        .map(|r| SummaryRow::new(&r.level, r.method.as_str(), &r.evaluation.summary))
        .collect();
    serde_to_py(py, &rows)
}

#[pymodule(name = "latefuse")]
fn latefuse_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyBevBox>()?;
    m.add_class::<PyDetection>()?;
    m.add_class::<PyTrack>()?;
    m.add_function(wrap_pyfunction!(csba_associate, m)?)?;
    m.add_function(wrap_pyfunction!(inverse_variance_mean, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate_frame, m)?)?;
    m.add_function(wrap_pyfunction!(noise_preset, m)?)?;
    m.add_function(wrap_pyfunction!(run_benchmark, m)?)?;
    Ok(())
}
