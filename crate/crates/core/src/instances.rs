//! City instances: construction, TSPLIB node-coordinate files, generators and
//! basic geometry.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::ops::{Add, Mul, Sub};

use rand::{Rng, SeedableRng};
use rand_xoshiro::SplitMix64;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const ORIGIN: Point = Point { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dist(self, other: Point) -> f64 {
        (self - other).norm()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Point {
    type Output = Point;
    fn add(self, o: Point) -> Point {
        Point::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Point {
    type Output = Point;
    fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Point {
    type Output = Point;
    fn mul(self, s: f64) -> Point {
        Point::new(self.x * s, self.y * s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Euclid2D,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InstanceError {
    #[error("an instance needs at least 3 cities, got {0}")]
    TooFewCities(usize),
    #[error("cities {first} and {second} share coordinates ({x}, {y})")]
    DuplicateCoordinates { first: usize, second: usize, x: f64, y: f64 },
    #[error("city {0} has a non-finite coordinate")]
    NonFinite(usize),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// A named set of 2-D cities, immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct CityInstance {
    name: String,
    cities: Vec<Point>,
    metric: Metric,
    optimal_cost: Option<f64>,
}

impl CityInstance {
    pub fn new(name: impl Into<String>, cities: Vec<Point>) -> Result<Self, InstanceError> {
        if cities.len() < 3 {
            return Err(InstanceError::TooFewCities(cities.len()));
        }
        if let Some(i) = cities.iter().position(|c| !c.is_finite()) {
            return Err(InstanceError::NonFinite(i));
        }
        if let Some((first, second)) = find_duplicate(&cities) {
            let c = cities[second];
            return Err(InstanceError::DuplicateCoordinates { first, second, x: c.x, y: c.y });
        }
        Ok(Self { name: name.into(), cities, metric: Metric::Euclid2D, optimal_cost: None })
    }

    /// Attaches a known optimal tour length.
    pub fn with_optimal_cost(mut self, cost: f64) -> Self {
        self.optimal_cost = Some(cost);
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn cities(&self) -> &[Point] {
        &self.cities
    }

    pub fn len(&self) -> usize {
        self.cities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cities.is_empty()
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn optimal_cost(&self) -> Option<f64> {
        self.optimal_cost
    }

    pub fn dist(&self, i: usize, j: usize) -> f64 {
        self.cities[i].dist(self.cities[j])
    }

    /// Largest pairwise distance.
    pub fn diameter(&self) -> f64 {
        let c = &self.cities;
        let mut best = 0.0_f64;
        for i in 0..c.len() {
            for j in i + 1..c.len() {
                best = best.max(c[i].dist(c[j]));
            }
        }
        best
    }

    /// Node-coordinate TSPLIB text. Coordinates use the shortest decimal form
    /// that parses back to the same `f64`.
    pub fn to_tsplib(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "NAME : {}", self.name);
        if let Some(c) = self.optimal_cost {
            let _ = writeln!(out, "COMMENT : optimal {c}");
        }
        let _ = writeln!(out, "TYPE : TSP");
        let _ = writeln!(out, "DIMENSION : {}", self.cities.len());
        let _ = writeln!(out, "EDGE_WEIGHT_TYPE : EUC_2D");
        let _ = writeln!(out, "NODE_COORD_SECTION");
        for (i, c) in self.cities.iter().enumerate() {
            let _ = writeln!(out, "{} {:?} {:?}", i + 1, c.x, c.y);
        }
        out.push_str("EOF\n");
        out
    }
}

fn key(p: &Point) -> (u64, u64) {
    // +0.0 folds -0.0 onto 0.0
    ((p.x + 0.0).to_bits(), (p.y + 0.0).to_bits())
}

fn find_duplicate(cities: &[Point]) -> Option<(usize, usize)> {
    let mut seen = std::collections::HashMap::with_capacity(cities.len());
    for (i, c) in cities.iter().enumerate() {
        if let Some(&first) = seen.get(&key(c)) {
            return Some((first, i));
        }
        seen.insert(key(c), i);
    }
    None
}

/// Moves every city by uniform noise of magnitude `1e-9 x diameter` until no
/// two cities coincide. Deterministic per seed.
pub fn jitter_duplicates(cities: &mut [Point], seed: u64) {
    let mut diameter = 0.0_f64;
    for i in 0..cities.len() {
        for j in i + 1..cities.len() {
            diameter = diameter.max(cities[i].dist(cities[j]));
        }
    }
    let amp = 1e-9 * if diameter > 0.0 { diameter } else { 1.0 };
    let mut rng = SplitMix64::seed_from_u64(seed);
    while find_duplicate(cities).is_some() {
        for c in cities.iter_mut() {
            c.x += amp * (2.0 * rng.random::<f64>() - 1.0);
            c.y += amp * (2.0 * rng.random::<f64>() - 1.0);
        }
    }
}

/// Result of reading a TSPLIB file before instance validation.
#[derive(Debug, Clone, PartialEq)]
pub struct TsplibFile {
    pub name: String,
    pub edge_weight_type: String,
    pub cities: Vec<Point>,
    /// Set when the file declares `ATT`; distances are still Euclidean.
    pub att_warning: bool,
}

/// Reads the node-coordinate subset of TSPLIB without building an instance.
/// Duplicate coordinates are kept.
pub fn read_tsplib(text: &str) -> Result<TsplibFile, InstanceError> {
    let err = |line: usize, message: String| InstanceError::Parse { line, message };
    let mut name = String::from("unnamed");
    let mut dimension: Option<(usize, usize)> = None;
    let mut ewt: Option<String> = None;
    let mut in_coords = false;
    let mut saw_section = false;
    let mut cities = Vec::new();
    let mut last_line = 0;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        last_line = line_no;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if line == "EOF" {
            break;
        }
        if in_coords {
            let mut parts = line.split_whitespace();
            let fields: Vec<&str> = parts.by_ref().take(4).collect();
            if fields.len() != 3 {
                if fields.first().is_some_and(|f| f.parse::<f64>().is_err()) {
                    // a keyword ends the section
                    in_coords = false;
                } else {
                    return Err(err(line_no, format!("expected 'index x y', got '{line}'")));
                }
            } else {
                let index: usize = fields[0]
                    .parse()
                    .map_err(|_| err(line_no, format!("bad node index '{}'", fields[0])))?;
                if index != cities.len() + 1 {
                    return Err(err(line_no, format!("node index {index}, expected {}", cities.len() + 1)));
                }
                let x: f64 = fields[1].parse().map_err(|_| err(line_no, format!("bad x '{}'", fields[1])))?;
                let y: f64 = fields[2].parse().map_err(|_| err(line_no, format!("bad y '{}'", fields[2])))?;
                if !x.is_finite() || !y.is_finite() {
                    return Err(err(line_no, "non-finite coordinate".into()));
                }
                cities.push(Point::new(x, y));
                continue;
            }
        }
        let (key, value) = match line.split_once(':') {
            Some((k, v)) => (k.trim(), v.trim()),
            None => match line.split_once(char::is_whitespace) {
                Some((k, v)) => (k.trim(), v.trim()),
                None => (line, ""),
            },
        };
        match key.to_ascii_uppercase().as_str() {
            "NAME" => name = value.to_string(),
            "TYPE" => {
                if !value.eq_ignore_ascii_case("TSP") {
                    return Err(err(line_no, format!("unsupported TYPE '{value}'")));
                }
            }
            "DIMENSION" => {
                let d = value.parse().map_err(|_| err(line_no, format!("bad DIMENSION '{value}'")))?;
                dimension = Some((d, line_no));
            }
            "EDGE_WEIGHT_TYPE" => {
                let v = value.to_ascii_uppercase();
                if v != "EUC_2D" && v != "ATT" {
                    return Err(err(line_no, format!("unsupported EDGE_WEIGHT_TYPE '{value}'")));
                }
                ewt = Some(v);
            }
            "NODE_COORD_SECTION" => {
                in_coords = true;
                saw_section = true;
            }
            "COMMENT" | "DISPLAY_DATA_TYPE" | "NODE_COORD_TYPE" => {}
            other => return Err(err(line_no, format!("unsupported keyword '{other}'"))),
        }
    }

    if !saw_section {
        return Err(err(last_line, "missing NODE_COORD_SECTION".into()));
    }
    if let Some((d, line)) = dimension {
        if d != cities.len() {
            return Err(err(line, format!("DIMENSION {d} but {} coordinate lines", cities.len())));
        }
    }
    let edge_weight_type = ewt.unwrap_or_else(|| "EUC_2D".into());
    let att_warning = edge_weight_type == "ATT";
    Ok(TsplibFile { name, edge_weight_type, cities, att_warning })
}

/// Parses a TSPLIB node-coordinate file into an instance. `ATT` files are
/// accepted and measured with plain Euclidean distance.
pub fn parse_tsplib(text: &str) -> Result<CityInstance, InstanceError> {
    let file = read_tsplib(text)?;
    if let Some((first, second)) = find_duplicate(&file.cities) {
        return Err(InstanceError::Parse {
            line: duplicate_line(text).unwrap_or(0),
            message: format!("nodes {} and {} share coordinates", first + 1, second + 1),
        });
    }
    let inst = CityInstance::new(file.name, file.cities)?;
    Ok(match known_optimum(inst.name()) {
        Some(c) => inst.with_optimal_cost(c),
        None => inst,
    })
}

fn duplicate_line(text: &str) -> Option<usize> {
    let mut seen = HashSet::new();
    let mut in_coords = false;
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.to_ascii_uppercase().starts_with("NODE_COORD_SECTION") {
            in_coords = true;
            continue;
        }
        if !in_coords {
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() == 3 {
            if let (Ok(x), Ok(y)) = (f[1].parse::<f64>(), f[2].parse::<f64>()) {
                if !seen.insert(key(&Point::new(x, y))) {
                    return Some(idx + 1);
                }
            }
        }
    }
    None
}

/// Euclidean optimal tour lengths of bundled named instances.
pub fn known_optimum(name: &str) -> Option<f64> {
    match name {
        "att48" => Some(ATT48_OPTIMAL_EUCLIDEAN),
        _ => None,
    }
}

/// Length of the TSPLIB optimal att48 tour measured with plain Euclidean
/// distance on the raw coordinates.
pub const ATT48_OPTIMAL_EUCLIDEAN: f64 = 33_523.708_507_435_59;

const ATT48_TSP: &str = include_str!("../data/att48.tsp");

/// The 48 state capitals instance, carrying its Euclidean optimum.
pub fn att48() -> CityInstance {
    parse_tsplib(ATT48_TSP).expect("bundled att48 parses")
}

/// `n` cities uniform on the unit square, drawn from SplitMix64 seeded with
/// `seed` (x then y for each city).
pub fn gen_random_uniform(n: usize, seed: u64) -> Result<CityInstance, InstanceError> {
    if n < 3 {
        return Err(InstanceError::TooFewCities(n));
    }
    let mut rng = SplitMix64::seed_from_u64(seed);
    let mut cities: Vec<Point> = (0..n).map(|_| Point::new(rng.random(), rng.random())).collect();
    // a collision in 53-bit uniforms is astronomically unlikely; redraw if it happens
    while let Some((_, second)) = find_duplicate(&cities) {
        cities[second] = Point::new(rng.random(), rng.random());
    }
    CityInstance::new(format!("random-n{n}-s{seed}"), cities)
}

/// Unit-spaced `rows x cols` lattice, city `r * cols + c` at `(c, r)`.
///
/// The optimum is attached when it is known in closed form: `rows * cols`
/// for an even number of cities on a lattice at least 2 wide in both
/// directions, and `2 (n - 1)` for a single row or column.
pub fn gen_grid(rows: usize, cols: usize) -> Result<CityInstance, InstanceError> {
    let n = rows * cols;
    if n < 3 {
        return Err(InstanceError::TooFewCities(n));
    }
    let cities = (0..rows)
        .flat_map(|r| (0..cols).map(move |c| Point::new(c as f64, r as f64)))
        .collect();
    let inst = CityInstance::new(format!("grid{rows}x{cols}"), cities)?;
    let optimum = if rows == 1 || cols == 1 {
        Some(2.0 * (n - 1) as f64)
    } else if n.is_multiple_of(2) {
        Some(n as f64)
    } else {
        None
    };
    Ok(match optimum {
        Some(c) => inst.with_optimal_cost(c),
        None => inst,
    })
}

/// Symmetric pairwise distances, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    d: Vec<f64>,
}

impl DistanceMatrix {
    pub fn from_points(points: &[Point]) -> Self {
        let n = points.len();
        let mut d = vec![0.0; n * n];
        for i in 0..n {
            for j in i + 1..n {
                let v = points[i].dist(points[j]);
                d[i * n + j] = v;
                d[j * n + i] = v;
            }
        }
        Self { n, d }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.d[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.d[i * self.n..(i + 1) * self.n]
    }

    /// Order-sensitive checksum of all entries.
    pub fn checksum(&self) -> u64 {
        self.d.iter().fold(0xcbf2_9ce4_8422_2325_u64, |h, v| (h ^ v.to_bits()).wrapping_mul(0x1000_0000_01b3))
    }
}

pub fn distance_matrix(inst: &CityInstance) -> DistanceMatrix {
    DistanceMatrix::from_points(inst.cities())
}

/// Centroid of the cities and the radius of the smallest circle around it
/// that contains every city.
pub fn enclosing_geometry(inst: &CityInstance) -> (Point, f64) {
    centroid_and_radius(inst.cities())
}

pub(crate) fn centroid_and_radius(points: &[Point]) -> (Point, f64) {
    let n = points.len() as f64;
    let sum = points.iter().fold(Point::ORIGIN, |acc, &p| acc + p);
    let center = Point::new(sum.x / n, sum.y / n);
    let radius = points.iter().map(|&p| p.dist(center)).fold(0.0, f64::max);
    (center, radius)
}
