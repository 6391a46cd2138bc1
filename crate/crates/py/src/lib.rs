//! Python bindings. Requests and results cross the boundary as plain
//! dicts and lists (JSON shaped), the same documents the HTTP API uses.

use pyo3::create_exception;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyString;
use ypsp_core::geo::{haversine_km as haversine, Gazetteer, LatLon};
use ypsp_core::relax::PenaltyTable;
use ypsp_core::schema::{BusinessRecord, Schema};
use ypsp_core::store::{Iri, Term};
use ypsp_core::{Directory, DirectoryError, StructuredQuery};

create_exception!(ypsp, YpspError, PyValueError, "Invalid query, request, record or data.");

fn err(e: impl std::fmt::Display) -> PyErr {
    YpspError::new_err(e.to_string())
}

fn dir_err(e: DirectoryError) -> PyErr {
    match e {
        DirectoryError::Parse(p) => YpspError::new_err(format!("line {}, column {}: {}", p.line, p.column, p.message)),
        other => err(other),
    }
}

fn to_py(py: Python<'_>, value: &serde_json::Value) -> PyResult<Py<PyAny>> {
    let json = py.import("json")?;
    Ok(json.call_method1("loads", (value.to_string(),))?.unbind())
}

/// Accepts a JSON string or any JSON-serializable Python object.
fn json_text(obj: &Bound<'_, PyAny>) -> PyResult<String> {
    if let Ok(s) = obj.cast::<PyString>() {
        return Ok(s.to_str()?.to_string());
    }
    let json = obj.py().import("json")?;
    json.call_method1("dumps", (obj,))?.extract()
}

fn term_text(t: &Term) -> String {
    match t {
        Term::Iri(i) => i.as_str().to_string(),
        Term::Literal(l) => l.lexical().to_string(),
        Term::Blank(b) => format!("_:{}", b.label()),
    }
}

#[pyclass(name = "Directory", module = "ypsp")]
struct PyDirectory {
    inner: Directory,
}

#[pymethods]
impl PyDirectory {
    /// Builds an empty directory from schema JSON text and gazetteer TSV text.
    #[new]
    #[pyo3(signature = (schema, gazetteer, penalties = None))]
    fn new(schema: &str, gazetteer: &str, penalties: Option<&str>) -> PyResult<Self> {
        let schema = Schema::load(schema.as_bytes()).map_err(err)?;
        let gazetteer = Gazetteer::parse(gazetteer).map_err(err)?;
        let penalties = match penalties {
            Some(text) => PenaltyTable::from_toml(text).map_err(err)?,
            None => PenaltyTable::default(),
        };
        Ok(PyDirectory { inner: Directory::new(schema, gazetteer, penalties) })
    }

    /// Same as the constructor but reads files, then loads each data file.
    #[staticmethod]
    #[pyo3(signature = (schema, gazetteer, data = Vec::new(), penalties = None))]
    fn from_files(schema: &str, gazetteer: &str, data: Vec<String>, penalties: Option<&str>) -> PyResult<Self> {
        let read = |p: &str| std::fs::read_to_string(p).map_err(|e| err(format!("{p}: {e}")));
        let penalties = penalties.map(read).transpose()?;
        let mut d = Self::new(&read(schema)?, &read(gazetteer)?, penalties.as_deref())?;
        for path in data {
            d.load_ntriples(&read(&path)?)?;
        }
        Ok(d)
    }

    /// Loads N-Triples text (all or nothing); returns (entities, triples).
    fn load_ntriples(&mut self, text: &str) -> PyResult<(usize, usize)> {
        let s = self.inner.load_ntriples(text.as_bytes()).map_err(dir_err)?;
        self.inner.refresh_geo();
        Ok((s.entities, s.triples))
    }

    fn export_ntriples(&self) -> String {
        String::from_utf8(self.inner.export_ntriples()).expect("N-Triples are UTF-8")
    }

    fn __len__(&self) -> usize {
        self.inner.store().len()
    }

    /// SPARQL results JSON text, byte for byte what `/sparql` returns.
    fn sparql(&self, query: &str) -> PyResult<String> {
        let body = self.inner.sparql(query).map_err(dir_err)?;
        Ok(String::from_utf8(body).expect("JSON is UTF-8"))
    }

    /// Rows as dicts of variable name to IRI or lexical form.
    fn select(&self, query: &str) -> PyResult<Vec<std::collections::BTreeMap<String, String>>> {
        let q = self.inner.parse(query).map_err(dir_err)?;
        Ok(self
            .inner
            .execute(&q)
            .rows
            .iter()
            .map(|row| row.iter().map(|(v, t)| (v.name().to_string(), term_text(t))).collect())
            .collect())
    }

    fn structured_to_sparql(&self, request: &Bound<'_, PyAny>) -> PyResult<String> {
        let sq: StructuredQuery = serde_json::from_str(&json_text(request)?).map_err(err)?;
        self.inner.structured_to_sparql(&sq).map_err(dir_err)
    }

    /// Structured search with relaxation; returns the `/search` document.
    fn search(&self, py: Python<'_>, request: &Bound<'_, PyAny>) -> PyResult<Py<PyAny>> {
        let sq: StructuredQuery = serde_json::from_str(&json_text(request)?).map_err(err)?;
        if sq.federate {
            return Err(err("federated search needs the HTTP service"));
        }
        let outcome = self.inner.search(&sq).map_err(dir_err)?;
        to_py(py, &outcome.to_json())
    }

    /// Registers a record (`{"class": .., "values": {..}}`); returns the receipt.
    fn register(&mut self, py: Python<'_>, record: &Bound<'_, PyAny>) -> PyResult<Py<PyAny>> {
        let record: BusinessRecord = serde_json::from_str(&json_text(record)?).map_err(err)?;
        let receipt = self.inner.register(&record).map_err(dir_err)?;
        self.inner.refresh_geo();
        to_py(py, &serde_json::to_value(receipt).expect("json"))
    }

    fn update(&mut self, py: Python<'_>, iri: &str, record: &Bound<'_, PyAny>) -> PyResult<Py<PyAny>> {
        let record: BusinessRecord = serde_json::from_str(&json_text(record)?).map_err(err)?;
        let iri = Iri::new(iri).map_err(err)?;
        let receipt = self.inner.update(&iri, &record).map_err(dir_err)?;
        self.inner.refresh_geo();
        to_py(py, &serde_json::to_value(receipt).expect("json"))
    }

    fn record(&self, py: Python<'_>, iri: &str) -> PyResult<Option<Py<PyAny>>> {
        let iri = Iri::new(iri).map_err(err)?;
        self.inner.record(&iri).map(|r| to_py(py, &serde_json::to_value(r).expect("json"))).transpose()
    }

    fn form_spec(&self, py: Python<'_>, class: &str) -> PyResult<Py<PyAny>> {
        let spec = self.inner.form_spec(class).map_err(dir_err)?;
        to_py(py, &serde_json::to_value(spec).expect("json"))
    }
}

/// Parses a query and returns its canonical text.
#[pyfunction]
fn parse_query(text: &str) -> PyResult<String> {
    ypsp_core::query::parse_query(text)
        .map(|q| q.to_string())
        .map_err(|p| YpspError::new_err(format!("line {}, column {}: {}", p.line, p.column, p.message)))
}

#[pyfunction]
fn haversine_km(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> PyResult<f64> {
    let a = LatLon::new(lat1, lon1).map_err(err)?;
    let b = LatLon::new(lat2, lon2).map_err(err)?;
    Ok(haversine(a, b))
}

#[pymodule]
pub fn ypsp(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDirectory>()?;
    m.add_function(wrap_pyfunction!(parse_query, m)?)?;
    m.add_function(wrap_pyfunction!(haversine_km, m)?)?;
    m.add("YpspError", m.py().get_type::<YpspError>())?;
    Ok(())
}
