//! Python bindings: generate corpora, build datasets, train, evaluate and
//! run what-if analyses, plus the metric and reweighting primitives.
//!
//! Configuration is passed as keyword arguments using the same keys as the
//! command line's `--set KEY=VALUE`.

use std::path::PathBuf;

use citeshield::cli::{CliError, RunConfig};
use citeshield::graph::SplitName;
use citeshield::objectives::{Factor, GroupDroConfig};
use citeshield::synth::{generate, SyntheticCorpus};
use citeshield::train::{self, FitOutcome, HistoryRow, ModelMeta, TrainConfig};
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use serde::Serialize;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Keyword arguments as a TOML table, via Python's JSON encoder.
fn kwargs_table(py: Python<'_>, kwargs: Option<&Bound<'_, PyDict>>) -> PyResult<toml::Table> {
    let Some(kwargs) = kwargs else {
        return Ok(toml::Table::new());
    };
    let text: String = py.import("json")?.call_method1("dumps", (kwargs,))?.extract()?;
    serde_json::from_str(&text).map_err(value_err)
}

fn run_config(py: Python<'_>, kwargs: Option<&Bound<'_, PyDict>>) -> PyResult<RunConfig> {
    let cfg = RunConfig::from_table(&kwargs_table(py, kwargs)?).map_err(value_err)?;
    cfg.gen.validate().map_err(value_err)?;
    cfg.train.validate().map_err(value_err)?;
    Ok(cfg)
}

/// Any serializable value as plain Python objects.
fn to_py<T: Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(value_err)?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

fn parse_split(name: &str) -> PyResult<SplitName> {
    match name {
        "train" => Ok(SplitName::Train),
        "val" => Ok(SplitName::Val),
        "test" => Ok(SplitName::Test),
        other => Err(PyValueError::new_err(format!("unknown split {:?}", other))),
    }
}

fn train_err(e: train::TrainError) -> PyErr {
    let e = CliError::from(e);
    match e {
        CliError::Io { .. } => PyIOError::new_err(e.to_string()),
        _ => value_err(e),
    }
}

/// A generated corpus with its ground truth.
#[pyclass(name = "Corpus", module = "citeshield_py")]
pub struct PyCorpus {
    inner: SyntheticCorpus,
}

#[pymethods]
impl PyCorpus {
    /// Generates a corpus; keyword arguments override generator settings.
    #[staticmethod]
    #[pyo3(signature = (**kwargs))]
    fn generate(py: Python<'_>, kwargs: Option<&Bound<'_, PyDict>>) -> PyResult<Self> {
        let cfg = run_config(py, kwargs)?;
        Ok(Self {
            inner: generate(&cfg.gen).map_err(value_err)?,
        })
    }

    fn __len__(&self) -> usize {
        self.inner.records.len()
    }

    fn ids(&self) -> Vec<String> {
        self.inner.records.iter().map(|r| r.id.clone()).collect()
    }

    /// Five-year citation counts.
    fn labels(&self) -> Vec<f64> {
        self.inner.labels()
    }

    /// Agent scores per paper as dicts (`a1`, `a2`, `a3`, `v`, `r`, `c`,
    /// `h`, `q`, `pub_year`).
    fn features(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &self.inner.features)
    }

    /// Ground-truth exposure per paper.
    fn exposure(&self) -> Vec<f64> {
        self.inner.truth.iter().map(|t| t.e_true).collect()
    }

    /// Writes the corpus files (`corpus.jsonl`, `citations.tsv`, ...).
    fn write(&self, dir: PathBuf) -> PyResult<()> {
        self.inner.write(&dir).map_err(|e| PyIOError::new_err(e.to_string()))
    }
}

/// A corpus prepared for training under one configuration.
#[pyclass(name = "Dataset", module = "citeshield_py")]
pub struct PyDataset {
    inner: train::Dataset,
    config: TrainConfig,
}

#[pymethods]
impl PyDataset {
    /// Keyword arguments override training settings (splits, environment
    /// threshold, model size, ...).
    #[new]
    #[pyo3(signature = (corpus, **kwargs))]
    fn new(py: Python<'_>, corpus: &PyCorpus, kwargs: Option<&Bound<'_, PyDict>>) -> PyResult<Self> {
        let config = run_config(py, kwargs)?.train;
        let inner = train::Dataset::from_synthetic(&corpus.inner, &config).map_err(train_err)?;
        Ok(Self { inner, config })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    /// Row indices of a split (`train`, `val` or `test`).
    fn indices(&self, split: &str) -> PyResult<Vec<usize>> {
        Ok(self.inner.indices(parse_split(split)?))
    }

    fn ids(&self) -> Vec<String> {
        self.inner.ids.clone()
    }

    /// The training settings the dataset was built with.
    fn config(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &self.config)
    }
}

/// A trained (or loaded) model.
#[pyclass(name = "Model", module = "citeshield_py")]
pub struct PyModel {
    model: citeshield::predictor::Model,
    meta: ModelMeta,
    history: Vec<HistoryRow>,
}

#[pymethods]
impl PyModel {
    /// Trains on `dataset` with its configuration. Keyword arguments may
    /// override optimization and model settings, not the data layout.
    #[staticmethod]
    #[pyo3(signature = (dataset, **kwargs))]
    fn fit(py: Python<'_>, dataset: &PyDataset, kwargs: Option<&Bound<'_, PyDict>>) -> PyResult<Self> {
        let overrides = kwargs_table(py, kwargs)?;
        for k in ["tau", "train_years", "val_years", "test_years"] {
            if overrides.contains_key(k) {
                return Err(PyValueError::new_err(format!("{} is fixed by the dataset", k)));
            }
        }
        let mut table = match toml::Value::try_from(&dataset.config).map_err(value_err)? {
            toml::Value::Table(t) => t,
            _ => unreachable!("config serializes to a table"),
        };
        table.extend(overrides);
        let cfg: TrainConfig = toml::Value::Table(table).try_into().map_err(value_err)?;
        let FitOutcome { model, meta, history, .. } = py
            .detach(|| train::fit(&dataset.inner, &cfg))
            .map_err(train_err)?;
        Ok(Self { model, meta, history })
    }

    /// Loads a checkpoint directory written by `save` or the `train` command.
    #[staticmethod]
    fn load(dir: PathBuf) -> PyResult<Self> {
        let (model, meta) = train::load_checkpoint(&dir).map_err(train_err)?;
        Ok(Self {
            model,
            meta,
            history: vec![],
        })
    }

    fn save(&self, dir: PathBuf) -> PyResult<()> {
        std::fs::create_dir_all(&dir).map_err(|e| PyIOError::new_err(e.to_string()))?;
        train::save_checkpoint(&dir, &self.model, &self.meta).map_err(train_err)
    }

    #[getter]
    fn best_epoch(&self) -> usize {
        self.meta.best_epoch
    }

    #[getter]
    fn epochs_trained(&self) -> usize {
        self.meta.epochs_trained
    }

    /// Per-epoch history rows (empty for a loaded checkpoint).
    fn history(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &self.history)
    }

    /// Metric report on a split, as a dict.
    #[pyo3(signature = (dataset, split = "test"))]
    fn evaluate(&self, py: Python<'_>, dataset: &PyDataset, split: &str) -> PyResult<Py<PyAny>> {
        let (report, loss, _) = train::evaluate(&self.model, &dataset.inner, parse_split(split)?).map_err(train_err)?;
        let out = to_py(py, &report)?;
        let d = out.bind(py).cast::<PyDict>()?;
        d.set_item("loss", loss)?;
        d.set_item("worst_group_rmsle", report.worst_group_rmsle())?;
        Ok(out)
    }

    /// `u = log(1 + predicted citations)` and, for the two-stage model, the
    /// exposure estimate, for a split.
    #[pyo3(signature = (dataset, split = "test"))]
    fn predict(&self, py: Python<'_>, dataset: &PyDataset, split: &str) -> PyResult<Py<PyAny>> {
        let idx = dataset.inner.indices(parse_split(split)?);
        let pred = train::predict(&self.model, &dataset.inner, &idx).map_err(train_err)?;
        let d = PyDict::new(py);
        d.set_item("ids", idx.iter().map(|&i| dataset.inner.ids[i].clone()).collect::<Vec<_>>())?;
        d.set_item("u", pred.u)?;
        d.set_item("e_hat", pred.e_hat)?;
        Ok(d.into_any().unbind())
    }

    /// Counterfactual rows and per-factor summary for a split (or `all`).
    #[pyo3(signature = (dataset, split = "test", factors = vec!["R".to_string(), "Q".to_string()]))]
    fn whatif(&self, py: Python<'_>, dataset: &PyDataset, split: &str, factors: Vec<String>) -> PyResult<(Py<PyAny>, Py<PyAny>)> {
        let factors: Vec<Factor> = factors.iter().map(|f| Factor::parse(f)).collect::<Result<_, _>>().map_err(value_err)?;
        let idx = if split == "all" {
            (0..dataset.inner.len()).collect()
        } else {
            dataset.inner.indices(parse_split(split)?)
        };
        let (rows, summary) =
            citeshield::whatif::whatif(&self.model, &self.meta, &dataset.inner, &idx, &factors).map_err(value_err)?;
        Ok((to_py(py, &rows)?, to_py(py, &summary)?))
    }
}

/// Mean absolute error between `log1p(y)` and `u`.
#[pyfunction]
fn male(y: Vec<f64>, u: Vec<f64>) -> PyResult<f64> {
    citeshield::metrics::male(&y, &u).map_err(value_err)
}

/// Root mean squared error between `log1p(y)` and `u`.
#[pyfunction]
fn rmsle(y: Vec<f64>, u: Vec<f64>) -> PyResult<f64> {
    citeshield::metrics::rmsle(&y, &u).map_err(value_err)
}

/// NDCG@k with gain `log1p(y)`, ranking by `u`.
#[pyfunction]
fn ndcg_at_k(y: Vec<f64>, u: Vec<f64>, k: usize) -> PyResult<f64> {
    citeshield::metrics::ndcg_at_k(&y, &u, k).map_err(value_err)
}

#[pyfunction]
fn spearman(a: Vec<f64>, b: Vec<f64>) -> PyResult<f64> {
    citeshield::metrics::spearman(&a, &b).map_err(value_err)
}

/// One reweighting step for the (low, high) venue environments.
#[pyfunction]
#[pyo3(signature = (w, losses, alpha = 0.1, w_min = 0.1, w_max = 0.9, eps = 1e-8))]
fn update_group_weights(w: [f64; 2], losses: [f64; 2], alpha: f64, w_min: f64, w_max: f64, eps: f64) -> [f64; 2] {
    citeshield::objectives::update_group_weights(w, losses, &GroupDroConfig { alpha, eps, w_min, w_max })
}

/// Runs the command line with `args` (without the program name) and
/// returns its exit code.
#[pyfunction]
fn main(py: Python<'_>, args: Vec<String>) -> i32 {
    let argv: Vec<String> = std::iter::once("citeshield".to_string()).chain(args).collect();
    py.detach(|| citeshield::cli::main_with_args(argv))
}

#[pymodule]
fn citeshield_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyCorpus>()?;
    m.add_class::<PyDataset>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(male, m)?)?;
    m.add_function(wrap_pyfunction!(rmsle, m)?)?;
    m.add_function(wrap_pyfunction!(ndcg_at_k, m)?)?;
    m.add_function(wrap_pyfunction!(spearman, m)?)?;
    m.add_function(wrap_pyfunction!(update_group_weights, m)?)?;
    m.add_function(wrap_pyfunction!(main, m)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use pyo3::ffi::c_str;

    fn with_module<F: FnOnce(Python<'_>, &Bound<'_, PyModule>)>(f: F) {
        Python::initialize();
        Python::attach(|py| {
            let m = PyModule::new(py, "citeshield_py").unwrap();
            citeshield_py(&m).unwrap();
            f(py, &m)
        })
    }

    #[test]
    fn keyword_arguments_route_to_configs() {
        with_module(|py, _| {
            let kw = PyDict::new(py);
            kw.set_item("n_papers", 50).unwrap();
            kw.set_item("hidden", 8).unwrap();
            kw.set_item("factors", vec!["Q"]).unwrap();
            kw.set_item("seed", 4).unwrap();
            let cfg = run_config(py, Some(&kw)).unwrap();
            assert_eq!(cfg.gen.n_papers, 50);
            assert_eq!(cfg.train.hidden, 8);
            assert_eq!(cfg.train.factors, vec![Factor::Q]);
            assert_eq!((cfg.gen.seed, cfg.train.seed), (4, 4));
            kw.set_item("bogus", 1).unwrap();
            assert!(run_config(py, Some(&kw)).unwrap_err().is_instance_of::<PyValueError>(py));
        });
    }

    #[test]
    fn module_round_trip_from_python() {
        with_module(|py, m| {
            let locals = PyDict::new(py);
            locals.set_item("cs", m).unwrap();
            py.run(
                c_str!(
                    r#"
corpus = cs.Corpus.generate(n_papers=120, n_authors=70, n_venues=8, seed=2)
data = cs.Dataset(corpus, hidden=8, heads=2, head_hidden=8, disc_hidden=4, max_epochs=1, warmup_epochs=1)
model = cs.Model.fit(data)
rep = model.evaluate(data, "val")
assert rep["male"] == model.history()[-1]["val_male"], rep
assert len(model.predict(data)["u"]) == len(data.indices("test"))
w = cs.update_group_weights([0.5, 0.5], [1.0, 1.0])
assert w == [0.5, 0.5]
"#
                ),
                None,
                Some(&locals),
            )
            .unwrap();
        });
    }

    #[test]
    fn splits_and_data_layout_keys_are_checked() {
        assert!(parse_split("val").is_ok());
        with_module(|py, m| {
            assert!(parse_split("holdout").unwrap_err().is_instance_of::<PyValueError>(py));
            let locals = PyDict::new(py);
            locals.set_item("cs", m).unwrap();
            let r = py.run(
                c_str!(
                    r#"
corpus = cs.Corpus.generate(n_papers=80, n_authors=50, n_venues=6, seed=1)
data = cs.Dataset(corpus, hidden=8, heads=2, head_hidden=8, disc_hidden=4)
cs.Model.fit(data, tau=0.3)
"#
                ),
                None,
                Some(&locals),
            );
            assert!(r.unwrap_err().is_instance_of::<PyValueError>(py));
        });
    }
}
