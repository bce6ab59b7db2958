//! Python bindings. Build with `--features extension-module` and import as
//! `onestep_vqa`.

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use onestep_vqa::evaluation::{self, HyperparamChoice, SplitPlan};
use onestep_vqa::nss::RealField;
use onestep_vqa::regressor::{default_epsilon, train_rows};
use onestep_vqa::subjective::{self, Rating, RatingTable};
use onestep_vqa::{Hyperparams, TrainedModel, Variant, VariantConfig, VqaError};

fn py_err(e: VqaError) -> PyErr {
    if e.is_io() {
        PyIOError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

fn variant_of(name: &str) -> PyResult<VariantConfig> {
    name.parse::<Variant>().map(VariantConfig::of).map_err(py_err)
}

/// Luma planes of a decoded Y4M file.
#[pyclass(name = "Video", frozen)]
struct PyVideo {
    inner: onestep_vqa::VideoSequence,
}

#[pymethods]
impl PyVideo {
    #[getter]
    fn width(&self) -> usize {
        self.inner.width()
    }

    #[getter]
    fn height(&self) -> usize {
        self.inner.height()
    }

    #[getter]
    fn frame_rate(&self) -> f64 {
        self.inner.frame_rate()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    /// Row-major luma samples of frame `index`.
    fn frame(&self, index: usize) -> PyResult<Vec<u8>> {
        self.inner
            .frames()
            .get(index)
            .map(|f| f.samples().to_vec())
            .ok_or_else(|| PyValueError::new_err(format!("frame {index} out of range")))
    }
}

#[pyfunction]
fn load_y4m(path: &str) -> PyResult<PyVideo> {
    onestep_vqa::load_y4m(path)
        .map(|inner| PyVideo { inner })
        .map_err(py_err)
}

#[pyclass(name = "FeatureVector", frozen)]
struct PyFeatureVector {
    #[pyo3(get)]
    values: Vec<f64>,
    #[pyo3(get)]
    labels: Vec<String>,
    #[pyo3(get)]
    variant: String,
}

#[pymethods]
impl PyFeatureVector {
    fn __len__(&self) -> usize {
        self.values.len()
    }

    fn get(&self, label: &str) -> Option<f64> {
        self.labels.iter().position(|l| l == label).map(|i| self.values[i])
    }
}

#[pyfunction]
#[pyo3(signature = (reference, compressed, variant = "base"))]
fn extract_features(py: Python<'_>, reference: &str, compressed: &str, variant: &str) -> PyResult<PyFeatureVector> {
    let cfg = variant_of(variant)?;
    let fv = py
        .detach(|| onestep_vqa::extract_features_from_files(reference, compressed, cfg))
        .map_err(py_err)?;
    Ok(PyFeatureVector {
        values: fv.values,
        labels: fv.labels,
        variant: cfg.name.name().to_string(),
    })
}

#[pyfunction]
#[pyo3(signature = (variant = "base"))]
fn feature_labels(variant: &str) -> PyResult<Vec<String>> {
    Ok(variant_of(variant)?.labels())
}

#[pyclass(name = "TrainedModel", frozen)]
struct PyModel {
    inner: TrainedModel,
}

#[pymethods]
impl PyModel {
    fn predict(&self, values: Vec<f64>) -> PyResult<f64> {
        self.inner.predict_values(&values).map_err(py_err)
    }

    fn predict_many(&self, rows: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
        rows.iter()
            .map(|r| self.inner.predict_values(r).map_err(py_err))
            .collect()
    }

    #[getter]
    fn n_features(&self) -> usize {
        self.inner.n_features()
    }

    #[getter]
    fn n_support_vectors(&self) -> usize {
        self.inner.support_vectors.len()
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(py_err)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        TrainedModel::from_json(text)
            .map(|inner| PyModel { inner })
            .map_err(py_err)
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save(path).map_err(py_err)
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        TrainedModel::load(path).map(|inner| PyModel { inner }).map_err(py_err)
    }
}

/// Trains an RBF epsilon-SVR. `epsilon` defaults to 0.1% of the score range.
#[pyfunction]
#[pyo3(signature = (features, scores, cost = 64.0, gamma = None, epsilon = None, variant = None))]
fn train(
    py: Python<'_>,
    features: Vec<Vec<f64>>,
    scores: Vec<f64>,
    cost: f64,
    gamma: Option<f64>,
    epsilon: Option<f64>,
    variant: Option<&str>,
) -> PyResult<PyModel> {
    let variant = variant.map(variant_of).transpose()?;
    let dims = features.first().map_or(1, Vec::len).max(1);
    let hp = Hyperparams {
        cost,
        gamma: gamma.unwrap_or(1.0 / dims as f64),
        epsilon: epsilon.unwrap_or_else(|| default_epsilon(&scores)),
    };
    py.detach(|| train_rows(&features, &scores, hp, variant))
        .map(|inner| PyModel { inner })
        .map_err(py_err)
}

#[pyfunction]
fn srocc(predictions: Vec<f64>, mos: Vec<f64>) -> PyResult<f64> {
    evaluation::srocc(&predictions, &mos).map_err(py_err)
}

#[pyfunction]
fn pearson(a: Vec<f64>, b: Vec<f64>) -> PyResult<f64> {
    evaluation::pearson(&a, &b).map_err(py_err)
}

type LogisticResult = (f64, f64, (f64, f64, f64, f64), String);

/// Returns `(lcc, rmse, (beta1, beta2, beta3, beta4), status)`.
#[pyfunction]
fn fit_logistic(predictions: Vec<f64>, mos: Vec<f64>) -> PyResult<LogisticResult> {
    let fit = evaluation::fit_logistic_then_lcc_rmse(&predictions, &mos).map_err(py_err)?;
    let p = fit.params;
    let status = serde_json::to_value(fit.status)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default();
    Ok((fit.lcc, fit.rmse, (p.beta1, p.beta2, p.beta3, p.beta4), status))
}

/// Returns `(decision, p_value)` with decision in {-1, 0, 1}.
#[pyfunction]
#[pyo3(signature = (a, b, level = 0.05))]
fn wilcoxon_rank_sum(a: Vec<f64>, b: Vec<f64>, level: f64) -> PyResult<(i8, f64)> {
    let t = evaluation::rank_sum_test(&a, &b, level).map_err(py_err)?;
    Ok((t.decision, t.p_value))
}

/// Repeated content-disjoint split evaluation; returns the report as JSON text.
#[pyfunction]
#[pyo3(signature = (features, scores, content_ids, iterations = 1000, seed = 0, cost = 64.0, gamma = None, epsilon = None))]
#[allow(clippy::too_many_arguments)]
fn run_split_evaluation(
    py: Python<'_>,
    features: Vec<Vec<f64>>,
    scores: Vec<f64>,
    content_ids: Vec<String>,
    iterations: usize,
    seed: u64,
    cost: f64,
    gamma: Option<f64>,
    epsilon: Option<f64>,
) -> PyResult<String> {
    let dims = features.first().map_or(1, Vec::len).max(1);
    let hp = Hyperparams {
        cost,
        gamma: gamma.unwrap_or(1.0 / dims as f64),
        epsilon: epsilon.unwrap_or_else(|| default_epsilon(&scores)),
    };
    let plan = SplitPlan::new(content_ids, seed, iterations);
    let report = py
        .detach(|| {
            evaluation::run_split_evaluation(&features, &scores, &plan, HyperparamChoice::Fixed(hp), "python", None)
        })
        .map_err(py_err)?;
    serde_json::to_string(&report).map_err(|e| PyValueError::new_err(e.to_string()))
}

/// MSCN coefficients of a row-major real field.
#[pyfunction]
fn compute_mscn(values: Vec<f64>, width: usize, height: usize) -> PyResult<Vec<f64>> {
    let field = RealField::new(width, height, &values).map_err(py_err)?;
    onestep_vqa::compute_mscn(&field)
        .map(|m| m.into_coefficients())
        .map_err(py_err)
}

/// Returns `(alpha, sigma)`.
#[pyfunction]
fn fit_ggd(samples: Vec<f64>) -> PyResult<(f64, f64)> {
    onestep_vqa::fit_ggd(&samples)
        .map(|f| (f.alpha, f.sigma))
        .map_err(py_err)
}

/// Returns `(si, ti)` of a Y4M file.
#[pyfunction]
fn siti(path: &str) -> PyResult<(f64, f64)> {
    let video = onestep_vqa::load_y4m(path).map_err(py_err)?;
    let s = subjective::compute_siti(&video);
    Ok((s.si, s.ti))
}

fn rating_table(rows: Vec<(String, u8, String, f64)>) -> PyResult<RatingTable> {
    RatingTable::new(
        rows.into_iter()
            .map(|(subject_id, session, video_id, raw_score)| Rating {
                subject_id,
                session,
                video_id,
                raw_score,
            })
            .collect(),
    )
    .map_err(py_err)
}

/// Rows are `(subject_id, session, video_id, raw_score)`; returns z per row.
#[pyfunction]
fn zscore(rows: Vec<(String, u8, String, f64)>) -> PyResult<Vec<f64>> {
    let z = subjective::zscore(&rating_table(rows)?).map_err(py_err)?;
    Ok(z.into_iter().map(|r| r.z).collect())
}

/// Returns `(video_id, mean_z, mos)` per video in first-appearance order.
#[pyfunction]
fn mos(rows: Vec<(String, u8, String, f64)>) -> PyResult<Vec<(String, f64, f64)>> {
    let z = subjective::zscore(&rating_table(rows)?).map_err(py_err)?;
    let entries = subjective::mos(&z).map_err(py_err)?;
    Ok(entries.into_iter().map(|e| (e.video_id, e.mean_z, e.mos)).collect())
}

#[pymodule]
#[pyo3(name = "onestep_vqa")]
fn onestep_vqa_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", onestep_vqa::VERSION)?;
    m.add_class::<PyVideo>()?;
    m.add_class::<PyFeatureVector>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(load_y4m, m)?)?;
    m.add_function(wrap_pyfunction!(extract_features, m)?)?;
    m.add_function(wrap_pyfunction!(feature_labels, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(srocc, m)?)?;
    m.add_function(wrap_pyfunction!(pearson, m)?)?;
    m.add_function(wrap_pyfunction!(fit_logistic, m)?)?;
    m.add_function(wrap_pyfunction!(wilcoxon_rank_sum, m)?)?;
    m.add_function(wrap_pyfunction!(run_split_evaluation, m)?)?;
    m.add_function(wrap_pyfunction!(compute_mscn, m)?)?;
    m.add_function(wrap_pyfunction!(fit_ggd, m)?)?;
    m.add_function(wrap_pyfunction!(siti, m)?)?;
    m.add_function(wrap_pyfunction!(zscore, m)?)?;
    m.add_function(wrap_pyfunction!(mos, m)?)?;
    Ok(())
}
