//! Geospatial support: great-circle distance, a uniform lat/lon grid over
//! entity coordinates, `nearby` resolution and a locality gazetteer.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::schema::{Schema, LAT, LONG};
use crate::store::{Iri, Term, TripleStore};

/// Mean Earth radius (IUGG), km.
pub const EARTH_RADIUS_KM: f64 = 6371.0088;
pub const DEFAULT_CELL_DEG: f64 = 0.02;
pub const DEFAULT_ADJACENCY_KM: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeoError {
    #[error("invalid coordinates ({lat}, {lon})")]
    InvalidCoordinates { lat: f64, lon: f64 },
    #[error("unknown locality {name:?} (did you mean {}?)", .suggestions.join(", "))]
    UnknownLocality { name: String, suggestions: Vec<String> },
    #[error("gazetteer line {line}: {message}")]
    Gazetteer { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatLon {
    lat: f64,
    lon: f64,
}

impl LatLon {
    pub fn new(lat: f64, lon: f64) -> Result<Self, GeoError> {
        if lat.is_finite() && lon.is_finite() && lat.abs() <= 90.0 && lon.abs() <= 180.0 {
            Ok(LatLon { lat, lon })
        } else {
            Err(GeoError::InvalidCoordinates { lat, lon })
        }
    }

    pub fn lat(&self) -> f64 {
        self.lat
    }

    pub fn lon(&self) -> f64 {
        self.lon
    }
}

pub fn haversine_km(a: LatLon, b: LatLon) -> f64 {
    let (phi1, phi2) = (a.lat.to_radians(), b.lat.to_radians());
    let dphi = (b.lat - a.lat).to_radians();
    let dlambda = (b.lon - a.lon).to_radians();
    let h = (dphi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (dlambda / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum IndexDiagnostic {
    MissingLongitude { entity: String },
    MissingLatitude { entity: String },
    MultiplePositions { entity: String },
    InvalidPosition { entity: String },
}

/// Uniform grid of `cell_deg`-sized cells keyed by (row, column) where
/// `row = floor((lat + 90) / cell)` and `col = floor((lon + 180) / cell)`.
#[derive(Debug, Clone)]
pub struct GeoIndex {
    cell_deg: f64,
    rows: i64,
    cols: i64,
    cells: HashMap<(i64, i64), Vec<(Iri, LatLon)>>,
    positions: BTreeMap<Iri, LatLon>,
    diagnostics: Vec<IndexDiagnostic>,
}

impl Default for GeoIndex {
    fn default() -> Self {
        GeoIndex::with_cell_size(DEFAULT_CELL_DEG)
    }
}

impl GeoIndex {
    pub fn with_cell_size(cell_deg: f64) -> Self {
        assert!(cell_deg > 0.0 && cell_deg.is_finite(), "cell size must be positive");
        GeoIndex {
            cell_deg,
            rows: (180.0 / cell_deg).ceil() as i64,
            cols: (360.0 / cell_deg).ceil() as i64,
            cells: HashMap::new(),
            positions: BTreeMap::new(),
            diagnostics: Vec::new(),
        }
    }

    /// Indexes every subject carrying exactly one `lat` and one `long`
    /// decimal in the schema namespace.
    pub fn build(store: &TripleStore, schema: &Schema) -> Self {
        Self::build_with(store, schema, DEFAULT_CELL_DEG)
    }

    pub fn build_with(store: &TripleStore, schema: &Schema, cell_deg: f64) -> Self {
        let mut index = GeoIndex::with_cell_size(cell_deg);
        let lat_p = Term::Iri(schema.iri(LAT));
        let lon_p = Term::Iri(schema.iri(LONG));
        let mut subjects = store.subjects_with(&lat_p);
        subjects.extend(store.subjects_with(&lon_p));
        subjects.sort();
        subjects.dedup();
        for subject in subjects {
            let Term::Iri(iri) = &subject else { continue };
            let lats = store.objects(&subject, &lat_p);
            let lons = store.objects(&subject, &lon_p);
            let entity = iri.as_str().to_string();
            let diag = match (lats.len(), lons.len()) {
                (1, 1) => {
                    let value = |t: &Term| t.as_literal().and_then(|l| l.as_f64());
                    match (value(&lats[0]), value(&lons[0])) {
                        (Some(lat), Some(lon)) => match LatLon::new(lat, lon) {
                            Ok(pos) => {
                                index.insert(iri.clone(), pos);
                                continue;
                            }
                            Err(_) => IndexDiagnostic::InvalidPosition { entity },
                        },
                        _ => IndexDiagnostic::InvalidPosition { entity },
                    }
                }
                (_, 0) => IndexDiagnostic::MissingLongitude { entity },
                (0, _) => IndexDiagnostic::MissingLatitude { entity },
                _ => IndexDiagnostic::MultiplePositions { entity },
            };
            index.diagnostics.push(diag);
        }
        index
    }

    fn cell_of(&self, pos: LatLon) -> (i64, i64) {
        let row = (((pos.lat + 90.0) / self.cell_deg).floor() as i64).clamp(0, self.rows - 1);
        let col = (((pos.lon + 180.0) / self.cell_deg).floor() as i64).clamp(0, self.cols - 1);
        (row, col)
    }

    /// Adds or moves an entity.
    pub fn insert(&mut self, entity: Iri, pos: LatLon) {
        self.remove(&entity);
        let cell = self.cell_of(pos);
        self.cells.entry(cell).or_default().push((entity.clone(), pos));
        self.positions.insert(entity, pos);
    }

    pub fn remove(&mut self, entity: &Iri) -> Option<LatLon> {
        let pos = self.positions.remove(entity)?;
        let cell = self.cell_of(pos);
        if let Some(bucket) = self.cells.get_mut(&cell) {
            bucket.retain(|(e, _)| e != entity);
            if bucket.is_empty() {
                self.cells.remove(&cell);
            }
        }
        Some(pos)
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn position(&self, entity: &Iri) -> Option<LatLon> {
        self.positions.get(entity).copied()
    }

    pub fn entities(&self) -> impl Iterator<Item = (&Iri, LatLon)> {
        self.positions.iter().map(|(e, p)| (e, *p))
    }

    pub fn diagnostics(&self) -> &[IndexDiagnostic] {
        &self.diagnostics
    }

    /// Entities within `radius_km` of `center`, nearest first (ties by IRI).
    pub fn nearby(&self, center: LatLon, radius_km: f64) -> Vec<(Iri, f64)> {
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !(radius_km > 0.0) {
            return Vec::new();
        }
        let (rows, cols) = self.candidate_ranges(center, radius_km);
        let mut hits = Vec::new();
        let mut consider = |bucket: &Vec<(Iri, LatLon)>| {
            for (entity, pos) in bucket {
                let d = haversine_km(center, *pos);
                if d <= radius_km {
                    hits.push((entity.clone(), d));
                }
            }
        };
        let candidate_cells: i64 = (rows.1 - rows.0 + 1) * cols.iter().map(|(a, b)| b - a + 1).sum::<i64>();
        if candidate_cells as usize > self.cells.len() {
            for (&(row, col), bucket) in &self.cells {
                let in_rows = row >= rows.0 && row <= rows.1;
                if in_rows && cols.iter().any(|&(a, b)| col >= a && col <= b) {
                    consider(bucket);
                }
            }
        } else {
            for row in rows.0..=rows.1 {
                for &(a, b) in &cols {
                    for col in a..=b {
                        if let Some(bucket) = self.cells.get(&(row, col)) {
                            consider(bucket);
                        }
                    }
                }
            }
        }
        hits.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
        hits
    }

    /// Row range and (possibly wrapped) column ranges covering the bounding
    /// box of the spherical cap.
    fn candidate_ranges(&self, center: LatLon, radius_km: f64) -> ((i64, i64), Vec<(i64, i64)>) {
        // Pad so rounding never drops a boundary cell; the distance filter is exact.
        const PAD_DEG: f64 = 1e-6;
        let angular = radius_km / EARTH_RADIUS_KM;
        let all_cols = vec![(0, self.cols - 1)];
        if angular >= std::f64::consts::PI {
            return ((0, self.rows - 1), all_cols);
        }
        let dlat = angular.to_degrees() + PAD_DEG;
        let lat_lo = (center.lat - dlat).max(-90.0);
        let lat_hi = (center.lat + dlat).min(90.0);
        let row_of = |lat: f64| (((lat + 90.0) / self.cell_deg).floor() as i64).clamp(0, self.rows - 1);
        let rows = (row_of(lat_lo), row_of(lat_hi));
        if center.lat.abs() + dlat >= 90.0 {
            return (rows, all_cols);
        }
        let ratio = angular.sin() / center.lat.to_radians().cos();
        if ratio >= 1.0 {
            return (rows, all_cols);
        }
        let dlon = ratio.asin().to_degrees() + PAD_DEG;
        if dlon >= 180.0 {
            return (rows, all_cols);
        }
        let col_of = |lon: f64| (((lon + 180.0) / self.cell_deg).floor() as i64).clamp(0, self.cols - 1);
        let (west, east) = (center.lon - dlon, center.lon + dlon);
        let cols = if west < -180.0 {
            vec![(col_of(west + 360.0), self.cols - 1), (0, col_of(east))]
        } else if east > 180.0 {
            vec![(col_of(west), self.cols - 1), (0, col_of(east - 360.0))]
        } else {
            vec![(col_of(west), col_of(east))]
        };
        (rows, cols)
    }
}

/// Locality names (case-folded) mapped to centroids.
#[derive(Debug, Clone, Default)]
pub struct Gazetteer {
    entries: BTreeMap<String, (String, LatLon)>,
}

impl Gazetteer {
    /// Parses `name<TAB>lat<TAB>lon` lines; `#` starts a comment line.
    pub fn parse(text: &str) -> Result<Self, GeoError> {
        let mut g = Gazetteer::default();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let err = |message: &str| GeoError::Gazetteer { line, message: message.to_string() };
            let fields: Vec<&str> = raw.split('\t').collect();
            let [name, lat, lon] = fields.as_slice() else {
                return Err(err("expected name<TAB>lat<TAB>lon"));
            };
            let name = name.trim();
            if name.is_empty() {
                return Err(err("empty locality name"));
            }
            let lat: f64 = lat.trim().parse().map_err(|_| err("latitude is not a number"))?;
            let lon: f64 = lon.trim().parse().map_err(|_| err("longitude is not a number"))?;
            let pos = LatLon::new(lat, lon).map_err(|_| err("coordinates out of range"))?;
            if g.insert(name, pos).is_err() {
                return Err(err(&format!("duplicate locality {name:?}")));
            }
        }
        Ok(g)
    }

    pub fn insert(&mut self, name: &str, pos: LatLon) -> Result<(), GeoError> {
        let key = fold(name);
        if self.entries.contains_key(&key) {
            return Err(GeoError::Gazetteer { line: 0, message: format!("duplicate locality {name:?}") });
        }
        self.entries.insert(key, (name.to_string(), pos));
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn resolve(&self, name: &str) -> Result<LatLon, GeoError> {
        self.entries.get(&fold(name)).map(|(_, pos)| *pos).ok_or_else(|| GeoError::UnknownLocality {
            name: name.to_string(),
            suggestions: self.suggestions(name),
        })
    }

    /// Other localities whose centroid lies within `max_km`, nearest first.
    pub fn adjacent(&self, name: &str, max_km: f64) -> Result<Vec<(String, f64)>, GeoError> {
        let key = fold(name);
        let origin = self.resolve(name)?;
        let mut out: Vec<(String, f64)> = self
            .entries
            .iter()
            .filter(|(k, _)| **k != key)
            .map(|(_, (display, pos))| (display.clone(), haversine_km(origin, *pos)))
            .filter(|(_, d)| *d <= max_km)
            .collect();
        out.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
        Ok(out)
    }

    fn suggestions(&self, name: &str) -> Vec<String> {
        let key = fold(name);
        let mut scored: Vec<(usize, &String)> =
            self.entries.iter().map(|(k, (display, _))| (strsim::levenshtein(&key, k), display)).collect();
        scored.sort();
        scored.into_iter().take(3).map(|(_, d)| d.clone()).collect()
    }
}

fn fold(name: &str) -> String {
    name.trim().to_lowercase()
}
