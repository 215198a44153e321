//! Python bindings: embedding files, the decoupling operators, the
//! alignment head, exact retrieval, metrics and the pipeline runner.

use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use sdec_core::eval::{self, RecallMode};
use sdec_core::pipeline::{self, Overrides, PipelineError, RunConfig};
use sdec_core::store::{load_embedding_set, write_embedding_set};
use sdec_core::synthetic::{factor_dataset, write_fixture, FactorConfig};
use sdec_core::{alignment, decouple, TrainConfig};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn pipeline_err(e: PipelineError) -> PyErr {
    // config and validation problems are caller errors; the rest are runtime
    match e.exit_code() {
        2 => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

/// A named set of equal-length f32 vectors, stored in `.sdec` files.
#[pyclass(name = "EmbeddingSet", module = "sdec", frozen)]
struct PyEmbeddingSet(sdec_core::EmbeddingSet);

#[pymethods]
impl PyEmbeddingSet {
    #[new]
    fn new(model_id: String, ids: Vec<String>, rows: Vec<Vec<f32>>) -> PyResult<Self> {
        if ids.len() != rows.len() {
            return Err(value_err(format!("{} ids but {} rows", ids.len(), rows.len())));
        }
        let dim = rows.first().map_or(0, Vec::len);
        let set = sdec_core::EmbeddingSet::from_rows(model_id, dim, ids.into_iter().zip(rows)).map_err(value_err)?;
        Ok(Self(set))
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        load_embedding_set(path).map(Self).map_err(value_err)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        write_embedding_set(&self.0, path).map_err(value_err)
    }

    #[getter]
    fn model_id(&self) -> &str {
        self.0.model_id()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.0.dim()
    }

    #[getter]
    fn ids(&self) -> Vec<String> {
        self.0.ids().to_vec()
    }

    fn get(&self, id: &str) -> Option<Vec<f32>> {
        self.0.get(id).map(<[f32]>::to_vec)
    }

    fn rows(&self) -> Vec<Vec<f32>> {
        self.0.rows().map(|(_, r)| r.to_vec()).collect()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn __contains__(&self, id: &str) -> bool {
        self.0.position(id).is_some()
    }

    fn __repr__(&self) -> String {
        format!("EmbeddingSet(model_id={:?}, rows={}, dim={})", self.0.model_id(), self.0.len(), self.0.dim())
    }
}

/// Affine map from the uni-modal space into the multi-modal space.
#[pyclass(name = "AlignmentHead", module = "sdec", frozen)]
struct PyAlignmentHead(sdec_core::AlignmentHead);

#[pymethods]
impl PyAlignmentHead {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        alignment::load_head(path).map(Self).map_err(value_err)
    }

    #[staticmethod]
    #[pyo3(signature = (dim, tau_student = 0.1, tau_teacher = 0.05))]
    fn identity(dim: usize, tau_student: f64, tau_teacher: f64) -> PyResult<Self> {
        sdec_core::AlignmentHead::identity(dim, tau_student, tau_teacher).map(Self).map_err(value_err)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        alignment::save_head(&self.0, path).map_err(value_err)
    }

    fn forward(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        self.0.forward(&x).map_err(value_err)
    }

    #[getter]
    fn dim_in(&self) -> usize {
        self.0.dim_in()
    }

    #[getter]
    fn dim_out(&self) -> usize {
        self.0.dim_out()
    }
}

/// Exact cosine top-k over a gallery; ties go to the smaller id.
#[pyclass(name = "RetrievalIndex", module = "sdec", frozen)]
struct PyRetrievalIndex(sdec_core::RetrievalIndex);

type Hits = Vec<(String, f64)>;

fn hits(list: sdec_core::RankedList) -> Hits {
    list.hits.into_iter().map(|h| (h.gallery_id, h.score)).collect()
}

#[pymethods]
impl PyRetrievalIndex {
    #[new]
    fn new(gallery: &PyEmbeddingSet) -> PyResult<Self> {
        sdec_core::RetrievalIndex::build(&gallery.0).map(Self).map_err(value_err)
    }

    #[pyo3(signature = (vector, k, exclude_id = None))]
    fn query(&self, vector: Vec<f32>, k: usize, exclude_id: Option<&str>) -> PyResult<Hits> {
        self.0.query_topk("query", &vector, k, exclude_id).map(hits).map_err(value_err)
    }

    /// Returns `(query_id, [(gallery_id, score), ...])` pairs in query order.
    #[pyo3(signature = (queries, k, allow_self_match = false))]
    fn batch(
        &self,
        py: Python<'_>,
        queries: &PyEmbeddingSet,
        k: usize,
        allow_self_match: bool,
    ) -> PyResult<Vec<(String, Hits)>> {
        let lists = py.detach(|| self.0.batch_retrieve(&queries.0, k, allow_self_match)).map_err(value_err)?;
        Ok(lists.into_iter().map(|l| (l.query_id.clone(), hits(l))).collect())
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }
}

#[pyfunction]
fn normalize(v: Vec<f64>) -> PyResult<Vec<f64>> {
    decouple::normalize(&v).map_err(value_err)
}

#[pyfunction]
fn fuse(x: Vec<f64>, y: Vec<f64>) -> PyResult<Vec<f64>> {
    decouple::fuse(&x, &y).map_err(value_err)
}

#[pyfunction]
fn confidence_alpha(s_r: Vec<f64>, c_r: Vec<f64>) -> PyResult<f64> {
    decouple::confidence_alpha(&s_r, &c_r).map_err(value_err)
}

/// Returns `(s_pure, alpha)` for unit `s_r` and `c_r`.
#[pyfunction]
#[pyo3(signature = (s_r, c_r, clamp_alpha = false))]
fn project_style(s_r: Vec<f64>, c_r: Vec<f64>, clamp_alpha: bool) -> PyResult<(Vec<f64>, f64)> {
    let p = decouple::project_style(&s_r, &c_r, clamp_alpha).map_err(value_err)?;
    Ok((p.s_pure, p.alpha))
}

#[pyfunction]
fn average_precision(flags: Vec<bool>, n_relevant: usize, k: usize) -> PyResult<f64> {
    eval::average_precision_from_flags(&flags, n_relevant, k).map_err(value_err)
}

/// `mode` is `"any_hit"` or `"proportional"`.
#[pyfunction]
#[pyo3(signature = (flags, n_relevant, k, mode = "any_hit"))]
fn recall(flags: Vec<bool>, n_relevant: usize, k: usize, mode: &str) -> PyResult<f64> {
    let mode = match mode {
        "any_hit" => RecallMode::AnyHit,
        "proportional" => RecallMode::Proportional,
        other => return Err(value_err(format!("unknown recall mode {other:?}"))),
    };
    eval::recall_from_flags(&flags, n_relevant, k, mode).map_err(value_err)
}

#[pyfunction]
fn clustering_accuracy(pred: Vec<usize>, truth: Vec<usize>) -> PyResult<f64> {
    eval::clustering_accuracy(&pred, &truth).map_err(value_err)
}

#[pyfunction]
fn adjusted_rand_index(pred: Vec<usize>, truth: Vec<usize>) -> PyResult<f64> {
    eval::adjusted_rand_index(&pred, &truth).map_err(value_err)
}

#[pyfunction]
fn spearman_rho(x: Vec<f64>, y: Vec<f64>) -> PyResult<f64> {
    eval::spearman_rho(&x, &y).map_err(value_err)
}

#[pyfunction]
fn style_score(generated: Vec<f64>, reference: Vec<f64>) -> PyResult<f64> {
    eval::style_score(&generated, &reference).map_err(value_err)
}

fn load_config(path: PathBuf, output_dir: Option<PathBuf>) -> PyResult<RunConfig> {
    let mut cfg = RunConfig::load(path).map_err(pipeline_err)?;
    cfg.apply(&Overrides { output_dir, ..Overrides::default() });
    Ok(cfg)
}

/// Lists validation problems; an empty list means the config is runnable.
#[pyfunction]
fn validate(config: PathBuf) -> PyResult<Vec<String>> {
    let cfg = load_config(config, None)?;
    Ok(pipeline::validate(&cfg).issues.iter().map(ToString::to_string).collect())
}

/// Runs every stage and returns the metrics report as JSON text.
#[pyfunction]
#[pyo3(signature = (config, force = false, output_dir = None))]
fn run_pipeline(py: Python<'_>, config: PathBuf, force: bool, output_dir: Option<PathBuf>) -> PyResult<String> {
    let cfg = load_config(config, output_dir)?;
    let outcome = py.detach(|| pipeline::run_pipeline(&cfg, force)).map_err(pipeline_err)?;
    Ok(outcome.report.expect("the eval stage produces a report").to_json())
}

/// Runs the five-row feature grid and returns the summary table as TSV.
#[pyfunction]
#[pyo3(signature = (config, force = false, output_dir = None))]
fn run_ablation(py: Python<'_>, config: PathBuf, force: bool, output_dir: Option<PathBuf>) -> PyResult<String> {
    let cfg = load_config(config, output_dir)?;
    let outcome = py.detach(|| pipeline::run_ablation(&cfg, force)).map_err(pipeline_err)?;
    Ok(pipeline::ablation_table_tsv(&outcome.rows))
}

/// Writes a synthetic dataset with known style and content factors and
/// returns the path of its run config.
#[pyfunction]
#[pyo3(signature = (out_dir, items = 2000, seed = 0, epochs = 300))]
fn synth(out_dir: PathBuf, items: usize, seed: u64, epochs: usize) -> PyResult<PathBuf> {
    let ds = factor_dataset(&FactorConfig { items, seed, rated_fraction: 0.2, ..FactorConfig::default() })
        .map_err(value_err)?;
    let train = TrainConfig { seed, learning_rate: 1.0, epochs, ..TrainConfig::default() };
    write_fixture(&ds, &out_dir, &train).map_err(value_err)
}

#[pymodule]
fn sdec(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyEmbeddingSet>()?;
    m.add_class::<PyAlignmentHead>()?;
    m.add_class::<PyRetrievalIndex>()?;
    m.add_function(wrap_pyfunction!(normalize, m)?)?;
    m.add_function(wrap_pyfunction!(fuse, m)?)?;
    m.add_function(wrap_pyfunction!(confidence_alpha, m)?)?;
    m.add_function(wrap_pyfunction!(project_style, m)?)?;
    m.add_function(wrap_pyfunction!(average_precision, m)?)?;
    m.add_function(wrap_pyfunction!(recall, m)?)?;
    m.add_function(wrap_pyfunction!(clustering_accuracy, m)?)?;
    m.add_function(wrap_pyfunction!(adjusted_rand_index, m)?)?;
    m.add_function(wrap_pyfunction!(spearman_rho, m)?)?;
    m.add_function(wrap_pyfunction!(style_score, m)?)?;
    m.add_function(wrap_pyfunction!(validate, m)?)?;
    m.add_function(wrap_pyfunction!(run_pipeline, m)?)?;
    m.add_function(wrap_pyfunction!(run_ablation, m)?)?;
    m.add_function(wrap_pyfunction!(synth, m)?)?;
    Ok(())
}
