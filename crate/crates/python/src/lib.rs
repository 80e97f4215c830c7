//! Python bindings. The module is importable as `logsieve`.

use std::collections::BTreeMap;

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};

use logsieve::filter::{filter_lines, match_pattern, FilterReport as CoreReport};
use logsieve::metrics::{EvalReport, MatchStats};
use logsieve::parser::{parse_lines, Config as CoreConfig};
use logsieve::pattern_model::{select_patterns, PatternModel};
use logsieve::privacy::{
    aggregate as core_aggregate, encode_pattern, encoding_jaccard, BloomConfig, BloomEncoding,
    EncodingStore as CoreStore, StoreOptions, DEFAULT_STORE_PERMUTATIONS, DEFAULT_STORE_THRESHOLD,
};
use logsieve::tokenizer::{tokenize_line, Pattern};

create_exception!(logsieve, LogsieveError, PyException);

fn err(e: logsieve::Error) -> PyErr {
    match e {
        logsieve::Error::Config(_) | logsieve::Error::Usage(_) => PyValueError::new_err(e.to_string()),
        e => LogsieveError::new_err(e.to_string()),
    }
}

fn pattern_of(text: &str) -> PyResult<Pattern> {
    tokenize_line(text).ok_or_else(|| PyValueError::new_err("line has no tokens"))
}

/// Parameters shared by training and filtering. Keyword arguments override
/// the defaults, e.g. `Config(alpha=0.7, gamma=10)`.
#[pyclass(name = "Config", from_py_object)]
#[derive(Clone)]
struct PyConfig {
    inner: CoreConfig,
}

#[pymethods]
impl PyConfig {
    #[new]
    #[pyo3(signature = (**overrides))]
    fn new(py: Python<'_>, overrides: Option<&Bound<'_, PyDict>>) -> PyResult<Self> {
        let inner = match overrides {
            Some(d) => {
                let json: String = py.import("json")?.call_method1("dumps", (d,))?.extract()?;
                CoreConfig::from_json(&json).map_err(err)?
            }
            None => CoreConfig::default(),
        };
        Ok(PyConfig { inner })
    }

    #[getter]
    fn alpha(&self) -> f64 {
        self.inner.alpha
    }

    #[getter]
    fn beta(&self) -> f64 {
        self.inner.beta
    }

    #[getter]
    fn gamma(&self) -> u64 {
        self.inner.gamma
    }

    #[getter]
    fn coverage_fraction(&self) -> f64 {
        self.inner.coverage_fraction
    }

    fn to_json(&self) -> String {
        serde_json::to_string(&self.inner).expect("config serializes")
    }

    fn __repr__(&self) -> String {
        format!("Config({})", self.to_json())
    }
}

fn config_or_default(cfg: Option<PyConfig>) -> CoreConfig {
    cfg.map(|c| c.inner).unwrap_or_default()
}

/// Tokens of one line, wildcards as `*`; `None` for a blank line.
#[pyfunction]
fn tokenize(line: &str) -> Option<Vec<String>> {
    tokenize_line(line).map(|p| p.tokens().iter().map(|t| t.as_str().to_owned()).collect())
}

/// Mines patterns without selecting. Returns a dict with `patterns`
/// (pattern text to frequency), `trace`, `preprocessed` and `quality_loss`.
#[pyfunction]
#[pyo3(signature = (files, config=None))]
fn parse<'py>(
    py: Python<'py>,
    files: Vec<Vec<String>>,
    config: Option<PyConfig>,
) -> PyResult<Bound<'py, PyDict>> {
    let cfg = config_or_default(config);
    let out = py.detach(|| parse_lines(&files, &cfg)).map_err(err)?;
    let loss = EvalReport::build(out.patterns.stats(), false).map_err(err)?.quality_loss;
    let patterns: BTreeMap<String, u64> =
        out.patterns.iter().map(|(p, s)| (p.to_string(), s.frequency)).collect();
    let d = PyDict::new(py);
    d.set_item("patterns", patterns)?;
    d.set_item("trace", out.trace)?;
    d.set_item("preprocessed", out.preprocessed)?;
    d.set_item("quality_loss", loss)?;
    Ok(d)
}

/// Mines and selects patterns from training files (each a list of lines).
#[pyfunction]
#[pyo3(signature = (files, config=None))]
fn train(py: Python<'_>, files: Vec<Vec<String>>, config: Option<PyConfig>) -> PyResult<Model> {
    let cfg = config_or_default(config);
    let inner = py
        .detach(|| {
            let out = parse_lines(&files, &cfg)?;
            select_patterns(&out.patterns, &cfg)
        })
        .map_err(err)?;
    Ok(Model { inner })
}

#[pyclass(frozen)]
struct Model {
    inner: PatternModel,
}

#[pymethods]
impl Model {
    #[staticmethod]
    fn load(path: &str) -> PyResult<Model> {
        Ok(Model {
            inner: PatternModel::load(path).map_err(err)?,
        })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save(path).map_err(err)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    /// `(pattern text, frequency)` in id order.
    fn patterns(&self) -> Vec<(String, u64)> {
        self.inner
            .patterns()
            .iter()
            .map(|s| (s.pattern.to_string(), s.frequency))
            .collect()
    }

    /// Id of the first pattern the line matches, or `None`.
    #[pyo3(signature = (line, alpha=None))]
    fn match_line(&self, line: &str, alpha: Option<f64>) -> Option<usize> {
        let p = tokenize_line(line)?;
        match_pattern(&self.inner, &p, alpha.unwrap_or(self.inner.config().alpha))
    }

    /// Quality loss over the model's training statistics.
    fn quality_loss(&self) -> PyResult<f64> {
        let stats: BTreeMap<Pattern, MatchStats> = self
            .inner
            .patterns()
            .iter()
            .map(|s| {
                let m = MatchStats {
                    frequency: s.frequency,
                    match_count: s.match_count,
                    length_sum: s.length_sum,
                    files: Default::default(),
                };
                (s.pattern.clone(), m)
            })
            .collect();
        Ok(EvalReport::build(&stats, false).map_err(err)?.quality_loss)
    }

    /// Encodings of every pattern, weighted by frequency.
    #[pyo3(signature = (m=1024, k=2, shingle_n=2, seed=0))]
    fn encode(&self, m: usize, k: usize, shingle_n: usize, seed: u64) -> PyResult<Vec<Encoding>> {
        let bloom = bloom_config(m, k, shingle_n, seed)?;
        Ok(self
            .inner
            .patterns()
            .iter()
            .map(|s| Encoding {
                inner: encode_pattern(&s.pattern, &bloom).with_frequency(s.frequency),
            })
            .collect())
    }

    /// Filters lines. Returns a dict with `anomalies` (list of
    /// `(line number, line)`) and `totals`.
    #[pyo3(signature = (lines, encodings=None, config=None))]
    fn filter<'py>(
        &self,
        py: Python<'py>,
        lines: Vec<String>,
        encodings: Option<PyRef<'py, EncodingStore>>,
        config: Option<PyConfig>,
    ) -> PyResult<Bound<'py, PyDict>> {
        let cfg = config_or_default(config);
        let store = encodings.as_ref().map(|s| &s.inner);
        let report = py
            .detach(|| filter_lines(&self.inner, store, &lines, &cfg))
            .map_err(err)?;
        report_dict(py, &report)
    }
}

fn report_dict<'py>(py: Python<'py>, r: &CoreReport) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("anomalies", PyList::new(py, r.anomalies.iter().cloned())?)?;
    let totals = PyDict::new(py);
    totals.set_item("lines_in", r.totals.lines_in)?;
    totals.set_item("matched", r.totals.matched)?;
    totals.set_item("matched_by_encoding", r.totals.matched_by_encoding)?;
    totals.set_item("frequency_suppressed", r.totals.frequency_suppressed)?;
    totals.set_item("anomalous", r.totals.anomalous)?;
    totals.set_item("blank", r.totals.blank)?;
    d.set_item("totals", totals)?;
    Ok(d)
}

fn bloom_config(m: usize, k: usize, shingle_n: usize, seed: u64) -> PyResult<BloomConfig> {
    let cfg = BloomConfig { m, k, shingle_n, seed };
    cfg.validate().map_err(err)?;
    Ok(cfg)
}

#[pyclass(frozen, from_py_object)]
#[derive(Clone)]
struct Encoding {
    inner: BloomEncoding,
}

#[pymethods]
impl Encoding {
    #[getter]
    fn frequency(&self) -> u64 {
        self.inner.frequency()
    }

    #[getter]
    fn fill_ratio(&self) -> f64 {
        self.inner.fill_ratio()
    }

    fn to_base64(&self) -> String {
        self.inner.to_base64()
    }

    fn jaccard(&self, other: &Encoding) -> PyResult<f64> {
        encoding_jaccard(&self.inner, &other.inner).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!(
            "Encoding(m={}, set_bits={}, frequency={})",
            self.inner.config().m,
            self.inner.set_bits(),
            self.inner.frequency()
        )
    }
}

/// Encodes one line or pattern text.
#[pyfunction]
#[pyo3(signature = (text, frequency=1, m=1024, k=2, shingle_n=2, seed=0))]
fn encode(text: &str, frequency: u64, m: usize, k: usize, shingle_n: usize, seed: u64) -> PyResult<Encoding> {
    let bloom = bloom_config(m, k, shingle_n, seed)?;
    Ok(Encoding {
        inner: encode_pattern(&pattern_of(text)?, &bloom).with_frequency(frequency),
    })
}

#[pyclass(frozen)]
struct EncodingStore {
    inner: CoreStore,
}

#[pymethods]
impl EncodingStore {
    #[staticmethod]
    #[pyo3(signature = (path, threshold=DEFAULT_STORE_THRESHOLD, permutations=DEFAULT_STORE_PERMUTATIONS))]
    fn load(path: &str, threshold: f64, permutations: usize) -> PyResult<EncodingStore> {
        let options = StoreOptions { threshold, num_permutations: permutations };
        Ok(EncodingStore {
            inner: CoreStore::load(path, options).map_err(err)?,
        })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save(path).map_err(err)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    /// Whether the line's pattern matches a stored encoding.
    fn matches(&self, line: &str) -> PyResult<bool> {
        Ok(self.inner.match_encoded(&pattern_of(line)?))
    }

    fn encodings(&self) -> Vec<Encoding> {
        self.inner
            .encodings()
            .iter()
            .map(|e| Encoding { inner: e.clone() })
            .collect()
    }
}

/// Builds a store from `(encoding, client)` submissions. All encodings must
/// share one bloom configuration.
#[pyfunction]
#[pyo3(signature = (submissions, coverage=0.98, threshold=DEFAULT_STORE_THRESHOLD, permutations=DEFAULT_STORE_PERMUTATIONS))]
fn aggregate(
    py: Python<'_>,
    submissions: Vec<(Encoding, String)>,
    coverage: f64,
    threshold: f64,
    permutations: usize,
) -> PyResult<EncodingStore> {
    let Some((first, _)) = submissions.first() else {
        return Err(PyValueError::new_err("no submissions"));
    };
    let bloom = *first.inner.config();
    let subs: Vec<(BloomEncoding, String)> = submissions.into_iter().map(|(e, c)| (e.inner, c)).collect();
    let options = StoreOptions { threshold, num_permutations: permutations };
    let inner = py
        .detach(|| core_aggregate(&subs, &bloom, coverage, options))
        .map_err(err)?;
    Ok(EncodingStore { inner })
}

#[pymodule]
#[pyo3(name = "logsieve")]
fn logsieve_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("LogsieveError", m.py().get_type::<LogsieveError>())?;
    m.add_class::<PyConfig>()?;
    m.add_class::<Model>()?;
    m.add_class::<Encoding>()?;
    m.add_class::<EncodingStore>()?;
    m.add_function(wrap_pyfunction!(tokenize, m)?)?;
    m.add_function(wrap_pyfunction!(parse, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(encode, m)?)?;
    m.add_function(wrap_pyfunction!(aggregate, m)?)?;
    Ok(())
}
