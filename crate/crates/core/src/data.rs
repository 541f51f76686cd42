//! Surveillance inputs: counts, populations at risk, spatial adjacency, and
//! the structure matrices of the trend, seasonal and spatial priors.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Mean Earth radius used by the haversine distance.
pub const EARTH_RADIUS_KM: f64 = 6371.0;

/// Undirected neighbourhood graph over locations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Adjacency {
    neighbors: Vec<BTreeSet<usize>>,
    num_components: usize,
}

impl Adjacency {
    /// Builds a graph on `n` nodes. Duplicate edges are ignored; self-loops
    /// and out-of-range endpoints are rejected.
    pub fn from_edges<I>(n: usize, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut neighbors = vec![BTreeSet::new(); n];
        for (a, b) in edges {
            if a >= n || b >= n {
                return Err(Error::OutOfRange(format!(
                    "edge ({a}, {b}) on a graph with {n} nodes"
                )));
            }
            if a == b {
                return Err(Error::invalid(format!("self-loop on node {a}")));
            }
            neighbors[a].insert(b);
            neighbors[b].insert(a);
        }
        let num_components = count_components(&neighbors);
        Ok(Self {
            neighbors,
            num_components,
        })
    }

    pub fn empty(n: usize) -> Self {
        Self {
            neighbors: vec![BTreeSet::new(); n],
            num_components: n,
        }
    }

    pub fn len(&self) -> usize {
        self.neighbors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }

    pub fn neighbors(&self, i: usize) -> &BTreeSet<usize> {
        &self.neighbors[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    pub fn num_components(&self) -> usize {
        self.num_components
    }

    /// Edge list with `i < j`, in lexicographic order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        self.neighbors
            .iter()
            .enumerate()
            .flat_map(|(i, set)| set.iter().filter(move |&&j| j > i).map(move |&j| (i, j)))
            .collect()
    }

    /// Fraction of unordered location pairs that are neighbours.
    pub fn edge_density(&self) -> f64 {
        let n = self.len();
        if n < 2 {
            return 0.0;
        }
        self.edges().len() as f64 / (n * (n - 1) / 2) as f64
    }
}

fn count_components(neighbors: &[BTreeSet<usize>]) -> usize {
    let mut seen = vec![false; neighbors.len()];
    let mut components = 0;
    for start in 0..neighbors.len() {
        if seen[start] {
            continue;
        }
        components += 1;
        seen[start] = true;
        let mut queue = VecDeque::from([start]);
        while let Some(node) = queue.pop_front() {
            for &next in &neighbors[node] {
                if !seen[next] {
                    seen[next] = true;
                    queue.push_back(next);
                }
            }
        }
    }
    components
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StructureKind {
    Rw2,
    Crw1,
    Spatial,
}

/// Symmetric positive semidefinite structure matrix of an intrinsic GMRF
/// prior. The prior precision is `kappa * entries`. Stored sparsely.
#[derive(Debug, Clone)]
pub struct StructureMatrix {
    dim: usize,
    rank_deficiency: usize,
    kind: StructureKind,
    // upper triangle including the diagonal
    upper: Vec<(usize, usize, f64)>,
}

impl StructureMatrix {
    fn from_entries(dim: usize, entries: BTreeMap<(usize, usize), f64>, rank_deficiency: usize, kind: StructureKind) -> Self {
        let upper = entries
            .into_iter()
            .filter(|&((i, j), v)| i <= j && v != 0.0)
            .map(|((i, j), v)| (i, j, v))
            .collect();
        Self {
            dim,
            rank_deficiency,
            kind,
            upper,
        }
    }

    /// Second-order random walk: `DᵀD` with `D` the `(T-2)×T` second
    /// difference operator.
    pub fn rw2(t: usize) -> Result<Self> {
        if t < 3 {
            return Err(Error::invalid(format!("RW2 needs T >= 3, got {t}")));
        }
        let mut m = BTreeMap::new();
        let stencil = [1.0, -2.0, 1.0];
        for row in 0..t - 2 {
            for a in 0..3 {
                for b in a..3 {
                    *m.entry((row + a, row + b)).or_insert(0.0) += stencil[a] * stencil[b];
                }
            }
        }
        Ok(Self::from_entries(t, m, 2, StructureKind::Rw2))
    }

    /// Cyclic first-order random walk on `c` seasons.
    pub fn crw1(c: usize) -> Result<Self> {
        if c < 3 {
            return Err(Error::invalid(format!("cyclic RW1 needs C >= 3, got {c}")));
        }
        let mut m = BTreeMap::new();
        for i in 0..c {
            let next = (i + 1) % c;
            *m.entry((i, i)).or_insert(0.0) += 1.0;
            *m.entry((next, next)).or_insert(0.0) += 1.0;
            *m.entry((i.min(next), i.max(next))).or_insert(0.0) -= 1.0;
        }
        Ok(Self::from_entries(c, m, 1, StructureKind::Crw1))
    }

    /// Besag/ICAR structure: `|n(i)|` on the diagonal, `-1` for neighbours.
    pub fn spatial(adjacency: &Adjacency) -> Self {
        let n = adjacency.len();
        let mut m = BTreeMap::new();
        for i in 0..n {
            m.insert((i, i), adjacency.degree(i) as f64);
            for &j in adjacency.neighbors(i) {
                if i < j {
                    m.insert((i, j), -1.0);
                }
            }
        }
        Self::from_entries(n, m, adjacency.num_components(), StructureKind::Spatial)
    }

    /// Nonzero entries of the upper triangle, diagonal included.
    pub fn upper_triangle(&self) -> &[(usize, usize, f64)] {
        &self.upper
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.dim, self.dim);
        for &(i, j, v) in &self.upper {
            d[(i, j)] = v;
            d[(j, i)] = v;
        }
        d
    }

    /// `R x`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.dim);
        let mut out = vec![0.0; self.dim];
        for &(i, j, v) in &self.upper {
            out[i] += v * x[j];
            if i != j {
                out[j] += v * x[i];
            }
        }
        out
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rank_deficiency(&self) -> usize {
        self.rank_deficiency
    }

    /// Rank of the matrix, i.e. the exponent numerator of the prior's
    /// precision power.
    pub fn rank(&self) -> usize {
        self.dim - self.rank_deficiency
    }

    pub fn kind(&self) -> StructureKind {
        self.kind
    }

    /// `xᵀ R x`, evaluated as a sum of squared increments so it never
    /// goes negative through cancellation.
    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim());
        match self.kind {
            StructureKind::Rw2 => x.windows(3).map(|w| (w[2] - 2.0 * w[1] + w[0]).powi(2)).sum(),
            // zero row sums: xᵀRx = -Σ_{i<j} R_ij (x_i - x_j)²
            StructureKind::Crw1 | StructureKind::Spatial => self
                .upper
                .iter()
                .filter(|&&(i, j, _)| i != j)
                .map(|&(i, j, v)| -v * (x[i] - x[j]).powi(2))
                .sum(),
        }
    }
}

/// Area-level surveillance data: counts with missingness, populations at
/// risk and the neighbourhood graph. Matrices are location-major (`[i][t]`).
#[derive(Debug, Clone)]
pub struct SurveillanceData {
    counts: Vec<Vec<Option<u64>>>,
    populations: Vec<Vec<f64>>,
    adjacency: Adjacency,
    location_labels: Vec<String>,
    time_labels: Vec<String>,
}

impl SurveillanceData {
    pub fn new(
        counts: Vec<Vec<Option<u64>>>,
        populations: Vec<Vec<f64>>,
        adjacency: Adjacency,
        location_labels: Vec<String>,
        time_labels: Vec<String>,
    ) -> Result<Self> {
        let i = counts.len();
        if i == 0 {
            return Err(Error::DimensionMismatch("no locations".into()));
        }
        let t = counts[0].len();
        if t == 0 {
            return Err(Error::DimensionMismatch("no time points".into()));
        }
        if counts.iter().any(|row| row.len() != t) {
            return Err(Error::DimensionMismatch("ragged count matrix".into()));
        }
        if populations.len() != i || populations.iter().any(|row| row.len() != t) {
            return Err(Error::DimensionMismatch(format!(
                "populations must be {i}x{t} to match counts"
            )));
        }
        for (loc, row) in populations.iter().enumerate() {
            for (time, &value) in row.iter().enumerate() {
                if !(value > 0.0) || !value.is_finite() {
                    return Err(Error::NonpositivePopulation {
                        location: loc,
                        time,
                        value,
                    });
                }
            }
        }
        if adjacency.len() != i {
            return Err(Error::DimensionMismatch(format!(
                "adjacency has {} nodes but data has {i} locations",
                adjacency.len()
            )));
        }
        if location_labels.len() != i || time_labels.len() != t {
            return Err(Error::DimensionMismatch("label count mismatch".into()));
        }
        Ok(Self {
            counts,
            populations,
            adjacency,
            location_labels,
            time_labels,
        })
    }

    /// Convenience constructor with generated labels (`loc1..`, `t1..`).
    pub fn unlabeled(
        counts: Vec<Vec<Option<u64>>>,
        populations: Vec<Vec<f64>>,
        adjacency: Adjacency,
    ) -> Result<Self> {
        let i = counts.len();
        let t = counts.first().map_or(0, Vec::len);
        let locs = (1..=i).map(|k| format!("loc{k}")).collect();
        let times = (1..=t).map(|k| format!("t{k}")).collect();
        Self::new(counts, populations, adjacency, locs, times)
    }

    pub fn num_locations(&self) -> usize {
        self.counts.len()
    }

    pub fn num_times(&self) -> usize {
        self.counts[0].len()
    }

    pub fn count(&self, i: usize, t: usize) -> Option<u64> {
        self.counts[i][t]
    }

    pub fn counts(&self) -> &[Vec<Option<u64>>] {
        &self.counts
    }

    pub fn population(&self, i: usize, t: usize) -> f64 {
        self.populations[i][t]
    }

    pub fn populations(&self) -> &[Vec<f64>] {
        &self.populations
    }

    pub fn adjacency(&self) -> &Adjacency {
        &self.adjacency
    }

    pub fn location_labels(&self) -> &[String] {
        &self.location_labels
    }

    pub fn time_labels(&self) -> &[String] {
        &self.time_labels
    }

    /// Copy with one cell marked missing.
    pub fn with_missing(&self, i: usize, t: usize) -> Self {
        let mut out = self.clone();
        out.counts[i][t] = None;
        out
    }

    /// Copy with one cell replaced.
    pub fn with_count(&self, i: usize, t: usize, value: Option<u64>) -> Self {
        let mut out = self.clone();
        out.counts[i][t] = value;
        out
    }

    /// Sum of observed counts and of the populations at the observed cells.
    pub fn observed_totals(&self) -> (f64, f64) {
        let mut cases = 0.0;
        let mut exposure = 0.0;
        for (row, pops) in self.counts.iter().zip(&self.populations) {
            for (c, e) in row.iter().zip(pops) {
                if let Some(y) = c {
                    cases += *y as f64;
                    exposure += e;
                }
            }
        }
        (cases, exposure)
    }
}

struct LabeledMatrix {
    row_labels: Vec<String>,
    col_labels: Vec<String>,
    cells: Vec<Vec<String>>,
}

fn read_labeled_matrix(path: &Path) -> Result<LabeledMatrix> {
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(csv_err)?;
    let header = reader.headers().map_err(csv_err)?.clone();
    if header.len() < 2 {
        return Err(Error::Parse(format!(
            "{}: header needs a corner cell and at least one time label",
            path.display()
        )));
    }
    let col_labels: Vec<String> = header.iter().skip(1).map(str::to_owned).collect();
    let mut row_labels = Vec::new();
    let mut cells = Vec::new();
    for record in reader.records() {
        let record = record.map_err(csv_err)?;
        if record.len() != header.len() {
            return Err(Error::DimensionMismatch(format!(
                "{}: row {} has {} fields, header has {}",
                path.display(),
                row_labels.len() + 1,
                record.len(),
                header.len()
            )));
        }
        row_labels.push(record[0].to_owned());
        cells.push(record.iter().skip(1).map(str::to_owned).collect());
    }
    Ok(LabeledMatrix {
        row_labels,
        col_labels,
        cells,
    })
}

fn is_missing(cell: &str) -> bool {
    cell.is_empty() || cell.eq_ignore_ascii_case("NA")
}

fn parse_count(cell: &str, location: usize, time: usize) -> Result<Option<u64>> {
    if is_missing(cell) {
        return Ok(None);
    }
    let value: f64 = cell
        .parse()
        .map_err(|_| Error::Parse(format!("count `{cell}` at ({location}, {time})")))?;
    if value < 0.0 {
        return Err(Error::NegativeCount {
            location,
            time,
            value: cell.to_owned(),
        });
    }
    if value.fract() != 0.0 || !value.is_finite() {
        return Err(Error::Parse(format!(
            "count `{cell}` at ({location}, {time}) is not an integer"
        )));
    }
    Ok(Some(value as u64))
}

/// Reads a labelled count matrix (`NA` or empty cells are missing).
pub fn load_counts(path: impl AsRef<Path>) -> Result<(Vec<String>, Vec<String>, Vec<Vec<Option<u64>>>)> {
    let m = read_labeled_matrix(path.as_ref())?;
    let counts = m
        .cells
        .iter()
        .enumerate()
        .map(|(i, row)| {
            row.iter()
                .enumerate()
                .map(|(t, cell)| parse_count(cell, i, t))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((m.row_labels, m.col_labels, counts))
}

pub fn load_populations(path: impl AsRef<Path>) -> Result<(Vec<String>, Vec<String>, Vec<Vec<f64>>)> {
    let m = read_labeled_matrix(path.as_ref())?;
    let mut pops = Vec::with_capacity(m.cells.len());
    for (i, row) in m.cells.iter().enumerate() {
        let mut out = Vec::with_capacity(row.len());
        for (t, cell) in row.iter().enumerate() {
            if is_missing(cell) {
                return Err(Error::Parse(format!(
                    "missing population at ({i}, {t}); populations must be complete"
                )));
            }
            let value: f64 = cell
                .parse()
                .map_err(|_| Error::Parse(format!("population `{cell}` at ({i}, {t})")))?;
            if !(value > 0.0) {
                return Err(Error::NonpositivePopulation {
                    location: i,
                    time: t,
                    value,
                });
            }
            out.push(value);
        }
        pops.push(out);
    }
    Ok((m.row_labels, m.col_labels, pops))
}

fn label_index(labels: &[String]) -> BTreeMap<&str, usize> {
    labels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect()
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(n, l)| (n + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

/// Parses an undirected `labelA,labelB` edge list against known labels.
pub fn parse_edge_list(text: &str, labels: &[String]) -> Result<Adjacency> {
    let index = label_index(labels);
    let mut edges = Vec::new();
    for (line_no, line) in content_lines(text) {
        let mut parts = line.split(',').map(str::trim);
        let (Some(a), Some(b), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(Error::Parse(format!(
                "edge list line {line_no}: expected `labelA,labelB`"
            )));
        };
        let ia = *index.get(a).ok_or_else(|| Error::UnknownLabel(a.to_owned()))?;
        let ib = *index.get(b).ok_or_else(|| Error::UnknownLabel(b.to_owned()))?;
        edges.push((ia, ib));
    }
    Adjacency::from_edges(labels.len(), edges)
}

pub fn load_edge_list(path: impl AsRef<Path>, labels: &[String]) -> Result<Adjacency> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_edge_list(&text, labels)
}

/// A location label with latitude/longitude in degrees.
#[derive(Debug, Clone, PartialEq)]
pub struct Coordinate {
    pub label: String,
    pub lat: f64,
    pub lon: f64,
}

pub fn parse_coordinates(text: &str) -> Result<Vec<Coordinate>> {
    let mut out = Vec::new();
    for (line_no, line) in content_lines(text) {
        let parts: Vec<&str> = line.split(',').map(str::trim).collect();
        if parts.len() != 3 {
            return Err(Error::Parse(format!(
                "coordinates line {line_no}: expected `label,lat,lon`"
            )));
        }
        // tolerate a header row
        if line_no == 1 && parts[1].parse::<f64>().is_err() {
            continue;
        }
        let parse = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| Error::Parse(format!("coordinates line {line_no}: bad number `{s}`")))
        };
        out.push(Coordinate {
            label: parts[0].to_owned(),
            lat: parse(parts[1])?,
            lon: parse(parts[2])?,
        });
    }
    Ok(out)
}

pub fn load_coordinates(path: impl AsRef<Path>) -> Result<Vec<Coordinate>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_coordinates(&text)
}

/// Loads counts, populations and an edge-list adjacency into validated data.
pub fn load_surveillance(
    counts_path: impl AsRef<Path>,
    populations_path: impl AsRef<Path>,
    adjacency_path: impl AsRef<Path>,
) -> Result<SurveillanceData> {
    let (locs, times, counts) = load_counts(counts_path)?;
    let adjacency = load_edge_list(adjacency_path, &locs)?;
    load_surveillance_with(locs, times, counts, populations_path, adjacency)
}

/// Same as [`load_surveillance`] with an already-built adjacency (for
/// example one derived from coordinates).
pub fn load_surveillance_with(
    locs: Vec<String>,
    times: Vec<String>,
    counts: Vec<Vec<Option<u64>>>,
    populations_path: impl AsRef<Path>,
    adjacency: Adjacency,
) -> Result<SurveillanceData> {
    let (pop_locs, pop_times, populations) = load_populations(populations_path)?;
    if pop_locs != locs || pop_times != times {
        return Err(Error::DimensionMismatch(format!(
            "populations are {}x{} with different labels; counts are {}x{}",
            pop_locs.len(),
            pop_times.len(),
            locs.len(),
            times.len()
        )));
    }
    SurveillanceData::new(counts, populations, adjacency, locs, times)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Writes a labelled location × time matrix.
pub fn write_labeled_matrix<F>(
    path: impl AsRef<Path>,
    corner: &str,
    row_labels: &[String],
    col_labels: &[String],
    mut cell: F,
) -> Result<()>
where
    F: FnMut(usize, usize) -> String,
{
    let mut out = String::new();
    out.push_str(corner);
    for c in col_labels {
        out.push(',');
        out.push_str(c);
    }
    out.push('\n');
    for (i, r) in row_labels.iter().enumerate() {
        out.push_str(r);
        for j in 0..col_labels.len() {
            out.push(',');
            out.push_str(&cell(i, j));
        }
        out.push('\n');
    }
    write_text(path.as_ref(), &out)
}

pub fn write_counts(path: impl AsRef<Path>, data: &SurveillanceData) -> Result<()> {
    write_labeled_matrix(
        path,
        "location",
        data.location_labels(),
        data.time_labels(),
        |i, t| data.count(i, t).map_or_else(|| "NA".to_owned(), |y| y.to_string()),
    )
}

pub fn write_populations(path: impl AsRef<Path>, data: &SurveillanceData) -> Result<()> {
    write_labeled_matrix(
        path,
        "location",
        data.location_labels(),
        data.time_labels(),
        |i, t| data.population(i, t).to_string(),
    )
}

pub fn write_edge_list(path: impl AsRef<Path>, adjacency: &Adjacency, labels: &[String]) -> Result<()> {
    let mut out = String::new();
    for (a, b) in adjacency.edges() {
        out.push_str(&format!("{},{}\n", labels[a], labels[b]));
    }
    write_text(path.as_ref(), &out)
}

/// Parses a `YYYY-MM` month label into (year, month).
pub fn parse_month(label: &str) -> Result<(i32, u32)> {
    let bad = || Error::Parse(format!("month label `{label}` is not YYYY-MM"));
    let (y, m) = label.trim().split_once('-').ok_or_else(bad)?;
    let year: i32 = y.parse().map_err(|_| bad())?;
    let month: u32 = m.parse().map_err(|_| bad())?;
    if !(1..=12).contains(&month) {
        return Err(bad());
    }
    Ok((year, month))
}

/// Linear interpolation of annual population anchors onto month labels.
///
/// An annual value is anchored at January of its year. Months after the
/// last anchor but within its year keep the last anchor value.
pub fn interpolate_population(annual: &[Vec<(i32, f64)>], months: &[String]) -> Result<Vec<Vec<f64>>> {
    let positions = months
        .iter()
        .map(|m| parse_month(m).map(|(y, mo)| y as f64 + (mo - 1) as f64 / 12.0))
        .collect::<Result<Vec<_>>>()?;
    annual
        .iter()
        .enumerate()
        .map(|(loc, anchors)| {
            if anchors.len() < 2 {
                return Err(Error::invalid(format!(
                    "location {loc}: need at least 2 annual anchors, got {}",
                    anchors.len()
                )));
            }
            if anchors.windows(2).any(|w| w[1].0 <= w[0].0) {
                return Err(Error::invalid(format!(
                    "location {loc}: anchor years must be strictly increasing"
                )));
            }
            let first = anchors[0].0 as f64;
            let last = anchors[anchors.len() - 1].0 as f64;
            positions
                .iter()
                .zip(months)
                .map(|(&x, label)| {
                    if x < first || x >= last + 1.0 {
                        return Err(Error::invalid(format!(
                            "month {label} outside anchor range {first}..{last}"
                        )));
                    }
                    if x >= last {
                        return Ok(anchors[anchors.len() - 1].1);
                    }
                    let k = anchors
                        .windows(2)
                        .position(|w| x < w[1].0 as f64)
                        .expect("position is below the last anchor");
                    let (y0, v0) = anchors[k];
                    let (y1, v1) = anchors[k + 1];
                    let w = (x - y0 as f64) / (y1 - y0) as f64;
                    Ok(v0 + w * (v1 - v0))
                })
                .collect()
        })
        .collect()
}

/// Great-circle distance on a sphere of radius [`EARTH_RADIUS_KM`].
pub fn haversine_km(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> f64 {
    let (p1, p2) = (lat1.to_radians(), lat2.to_radians());
    let dp = p2 - p1;
    let dl = (lon2 - lon1).to_radians();
    let h = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin()
}

/// Locations are neighbours when their great-circle distance is at most
/// `threshold_km`. Use [`Adjacency::edge_density`] to tune the threshold.
pub fn adjacency_from_distances(coordinates: &[(f64, f64)], threshold_km: f64) -> Result<Adjacency> {
    if coordinates.len() < 2 {
        return Err(Error::invalid("need at least 2 locations"));
    }
    if !(threshold_km > 0.0) || !threshold_km.is_finite() {
        return Err(Error::invalid(format!("threshold must be positive, got {threshold_km}")));
    }
    for (k, &(lat, lon)) in coordinates.iter().enumerate() {
        if !(-90.0..=90.0).contains(&lat) || !(-180.0..=180.0).contains(&lon) {
            return Err(Error::OutOfRange(format!(
                "coordinate {k} ({lat}, {lon}) outside valid latitude/longitude"
            )));
        }
    }
    let n = coordinates.len();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let (a, b) = (coordinates[i], coordinates[j]);
            if haversine_km(a.0, a.1, b.0, b.1) <= threshold_km {
                edges.push((i, j));
            }
        }
    }
    Adjacency::from_edges(n, edges)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::SymmetricEigen;
    use proptest::prelude::*;
    use std::io::Write;

    fn write_tmp(dir: &tempfile::TempDir, name: &str, text: &str) -> std::path::PathBuf {
        let p = dir.path().join(name);
        fs::File::create(&p).unwrap().write_all(text.as_bytes()).unwrap();
        p
    }

    fn minimal_files(dir: &tempfile::TempDir, pops: &str) -> (std::path::PathBuf, std::path::PathBuf, std::path::PathBuf) {
        let c = write_tmp(dir, "counts.csv", "location,t1,t2,t3\nA,1,0,NA\nB,2,3,4\n");
        let p = write_tmp(dir, "pops.csv", pops);
        let e = write_tmp(dir, "adj.edges", "A,B\nB,A\n");
        (c, p, e)
    }

    #[test]
    fn loads_minimal_input() {
        let dir = tempfile::tempdir().unwrap();
        let (c, p, e) = minimal_files(&dir, "location,t1,t2,t3\nA,10,10,10\nB,20,20,20\n");
        let data = load_surveillance(c, p, e).unwrap();
        assert_eq!(data.num_locations(), 2);
        assert_eq!(data.num_times(), 3);
        assert_eq!(data.adjacency().num_components(), 1);
        assert_eq!(data.count(0, 2), None);
        assert_eq!(data.count(0, 0), Some(1));
        assert_eq!(data.count(1, 2), Some(4));
    }

    #[test]
    fn zero_population_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let (c, p, e) = minimal_files(&dir, "location,t1,t2,t3\nA,10,0,10\nB,20,20,20\n");
        let err = load_surveillance(c, p, e).unwrap_err();
        assert!(err.to_string().contains("nonpositive population"), "{err}");
    }

    #[test]
    fn dimension_mismatch_and_bad_labels() {
        let dir = tempfile::tempdir().unwrap();
        let (c, p, _) = minimal_files(&dir, "location,t1,t2\nA,10,10\nB,20,20\n");
        let e = write_tmp(&dir, "adj2.edges", "A,B\n");
        assert!(matches!(load_surveillance(&c, &p, &e), Err(Error::DimensionMismatch(_))));
        let bad = write_tmp(&dir, "bad.edges", "A,Z\n");
        let (_, p_ok, _) = minimal_files(&dir, "location,t1,t2,t3\nA,1,1,1\nB,1,1,1\n");
        assert!(matches!(load_surveillance(&c, &p_ok, &bad), Err(Error::UnknownLabel(l)) if l == "Z"));
    }

    #[test]
    fn negative_count_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let c = write_tmp(&dir, "c.csv", "location,t1\nA,-1\n");
        assert!(matches!(load_counts(c), Err(Error::NegativeCount { .. })));
    }

    #[test]
    fn interpolation_anchor_and_midpoint() {
        let anchors = vec![vec![(2013, 1200.0), (2014, 1212.0)]];
        let months: Vec<String> = vec!["2013-01".into(), "2013-07".into()];
        let out = interpolate_population(&anchors, &months).unwrap();
        assert_eq!(out[0][0], 1200.0);
        assert!((out[0][1] - 1206.0).abs() < 1e-9);
    }

    #[test]
    fn interpolation_monthly_progression() {
        let anchors = vec![vec![(2013, 1200.0), (2014, 1212.0)]];
        let months: Vec<String> = (1..=12).map(|m| format!("2013-{m:02}")).collect();
        let out = interpolate_population(&anchors, &months).unwrap();
        for (k, v) in out[0].iter().enumerate() {
            // direct formula v0 + (k/12) * (v1 - v0)
            let expected = 1200.0 + (k as f64 / 12.0) * 12.0;
            assert!((v - expected).abs() < 1e-9);
        }
        for w in out[0].windows(2) {
            assert!((w[1] - w[0] - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn interpolation_flat_after_last_anchor_and_errors() {
        let anchors = vec![vec![(2013, 100.0), (2014, 200.0)]];
        let out = interpolate_population(&anchors, &["2014-06".to_owned()]).unwrap();
        assert_eq!(out[0][0], 200.0);
        assert!(interpolate_population(&[vec![(2013, 1.0)]], &["2013-01".to_owned()]).is_err());
        assert!(interpolate_population(&[vec![(2014, 1.0), (2013, 2.0)]], &["2013-01".to_owned()]).is_err());
        assert!(interpolate_population(&anchors, &["2012-12".to_owned()]).is_err());
    }

    #[test]
    fn distance_adjacency_examples() {
        let same = adjacency_from_distances(&[(48.0, 2.0), (48.0, 2.0)], 1.0).unwrap();
        assert_eq!(same.edges(), vec![(0, 1)]);
        let anti = adjacency_from_distances(&[(10.0, 20.0), (-10.0, -160.0)], 820.0).unwrap();
        assert!(anti.edges().is_empty());
        // cities at 0, 500 and 1100 km along the equator; one degree of longitude is 6371*pi/180 km
        let km_per_deg = EARTH_RADIUS_KM * std::f64::consts::PI / 180.0;
        let coords = [(0.0, 0.0), (0.0, 500.0 / km_per_deg), (0.0, 1100.0 / km_per_deg)];
        let adj = adjacency_from_distances(&coords, 820.0).unwrap();
        assert_eq!(adj.edges(), vec![(0, 1), (1, 2)]);
        assert!((adj.edge_density() - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn distance_adjacency_errors() {
        assert!(adjacency_from_distances(&[(0.0, 0.0)], 10.0).is_err());
        assert!(adjacency_from_distances(&[(0.0, 0.0), (1.0, 1.0)], 0.0).is_err());
        assert!(adjacency_from_distances(&[(95.0, 0.0), (1.0, 1.0)], 10.0).is_err());
    }

    #[test]
    fn rw2_matches_displayed_band() {
        let m = StructureMatrix::rw2(10).unwrap();
        let e = m.to_dense();
        let row = |r: usize| (0..10).map(|c| e[(r, c)]).collect::<Vec<_>>();
        assert_eq!(row(0), vec![1.0, -2.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(row(1), vec![-2.0, 5.0, -4.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(row(2), vec![1.0, -4.0, 6.0, -4.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(row(9), vec![0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, -2.0, 1.0]);
        assert_eq!(m.rank_deficiency(), 2);
    }

    #[test]
    fn rw2_t4_full() {
        let m = StructureMatrix::rw2(4).unwrap();
        let expected = DMatrix::from_row_slice(
            4,
            4,
            &[1., -2., 1., 0., -2., 5., -4., 1., 1., -4., 5., -2., 0., 1., -2., 1.],
        );
        assert_eq!(m.to_dense(), expected);
        assert!(StructureMatrix::rw2(2).is_err());
    }

    #[test]
    fn crw1_examples() {
        let m = StructureMatrix::crw1(12).unwrap();
        for i in 0..12 {
            assert_eq!(m.to_dense()[(i, i)], 2.0);
        }
        assert_eq!(m.to_dense()[(0, 11)], -1.0);
        assert_eq!(m.to_dense()[(11, 0)], -1.0);
        let m3 = StructureMatrix::crw1(3).unwrap();
        let expected = DMatrix::from_row_slice(3, 3, &[2., -1., -1., -1., 2., -1., -1., -1., 2.]);
        assert_eq!(m3.to_dense(), expected);
        assert!(StructureMatrix::crw1(2).is_err());
    }

    #[test]
    fn spatial_examples() {
        let path = Adjacency::from_edges(3, [(0, 1), (1, 2)]).unwrap();
        let m = StructureMatrix::spatial(&path);
        let expected = DMatrix::from_row_slice(3, 3, &[1., -1., 0., -1., 2., -1., 0., -1., 1.]);
        assert_eq!(m.to_dense(), expected);
        assert_eq!(m.rank_deficiency(), 1);

        let empty = StructureMatrix::spatial(&Adjacency::empty(3));
        assert_eq!(empty.to_dense(), DMatrix::<f64>::zeros(3, 3));
        assert_eq!(empty.rank_deficiency(), 3);
    }

    fn check_structure(m: &StructureMatrix) {
        let e = m.to_dense();
        assert_eq!(e, e.transpose());
        for i in 0..m.dim() {
            assert!(e.row(i).sum().abs() < 1e-12);
        }
        let mut eig: Vec<f64> = SymmetricEigen::new(e.clone()).eigenvalues.iter().copied().collect();
        eig.sort_by(f64::total_cmp);
        let k = m.rank_deficiency();
        for v in &eig[..k] {
            assert!(v.abs() < 1e-9, "null eigenvalue {v}");
        }
        if k < eig.len() {
            assert!(eig[k] > 1e-9, "first nonnull eigenvalue {}", eig[k]);
        }
    }

    #[test]
    fn structure_invariants_desk_size() {
        for t in 3..=20 {
            check_structure(&StructureMatrix::rw2(t).unwrap());
        }
        for c in 3..=15 {
            check_structure(&StructureMatrix::crw1(c).unwrap());
        }
        let two_components = Adjacency::from_edges(5, [(0, 1), (2, 3), (3, 4)]).unwrap();
        assert_eq!(two_components.num_components(), 2);
        check_structure(&StructureMatrix::spatial(&two_components));
        check_structure(&StructureMatrix::spatial(&Adjacency::empty(4)));
    }

    #[test]
    fn quadratic_forms_nonnegative() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let adj = Adjacency::from_edges(6, [(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (0, 5), (1, 4)]).unwrap();
        let mats = [
            StructureMatrix::rw2(12).unwrap(),
            StructureMatrix::crw1(12).unwrap(),
            StructureMatrix::spatial(&adj),
        ];
        for m in &mats {
            for _ in 0..1000 {
                let x: Vec<f64> = (0..m.dim()).map(|_| rng.random_range(-5.0..5.0)).collect();
                let dense = nalgebra::DVector::from_vec(x.clone());
                let q = m.quadratic_form(&x);
                assert!(q >= -1e-9);
                assert!((q - (dense.transpose() * m.to_dense() * &dense)[(0, 0)]).abs() < 1e-8 * (1.0 + q));
            }
        }
    }

    proptest! {
        #[test]
        fn distance_adjacency_symmetric_under_relabeling(
            coords in prop::collection::vec((-60.0f64..70.0, -30.0f64..40.0), 2..8),
            threshold in 100.0f64..3000.0,
        ) {
            let adj = adjacency_from_distances(&coords, threshold).unwrap();
            let mut reversed = coords.clone();
            reversed.reverse();
            let radj = adjacency_from_distances(&reversed, threshold).unwrap();
            let n = coords.len();
            for i in 0..n {
                for j in 0..n {
                    prop_assert_eq!(adj.neighbors(i).contains(&j), adj.neighbors(j).contains(&i));
                    prop_assert_eq!(
                        adj.neighbors(i).contains(&j),
                        radj.neighbors(n - 1 - i).contains(&(n - 1 - j))
                    );
                }
            }
        }
    }
}
