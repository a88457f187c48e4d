//! Instance generation, oracle labeling, serialization, and splitting.
//!
//! Datasets are line-delimited UTF-8 text: one JSON header line followed by
//! one JSON record per instance. Coordinates are written with 17 significant
//! digits so files round-trip losslessly and diff cleanly. Every instance is
//! generated from its own RNG substream, so generation is order-independent
//! and byte-identical for a fixed (task, m, count, seed, ordering) tuple.

use crate::geometry::{
    convex_hull, delaunay_triangulate, held_karp, in_circumcircle, nearest_neighbor_tour,
    orient2d, tour_length, two_opt, GeometryError, Orientation, Point, PointSet, Position, Tour,
    TriangleIdx, DEFAULT_HK_MAX,
};
use crate::sequencing::{
    canonicalize_dt, canonicalize_hull, canonicalize_tour, sort_input, SequencingError,
    TokenSequence,
};
use crate::Task;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

pub const FORMAT_VERSION: u32 = 1;

/// Input/output ordering regime for the generated sequences.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Ordering {
    /// Lexicographically sorted inputs, canonical output ordering.
    Sorted,
    /// Seeded shuffle of both the input points and the output structure.
    Random,
}

impl std::str::FromStr for Ordering {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sorted" => Ok(Ordering::Sorted),
            "random" => Ok(Ordering::Random),
            other => Err(format!("unknown ordering {other:?} (expected sorted or random)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InstanceMeta {
    /// RNG substream index this instance was drawn from.
    pub seed: u64,
    /// Whether the label comes from an exact solver.
    pub optimal: bool,
}

/// One training/evaluation pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub task: Task,
    pub points: PointSet,
    pub label: TokenSequence,
    pub meta: InstanceMeta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub format_version: u32,
    pub task: Task,
    pub m: usize,
    pub count: usize,
    pub seed: u64,
    pub ordering: Ordering,
    /// PRNG and substream policy, recorded for reproducibility.
    pub prng: String,
    /// Largest instance labeled by the exact TSP solver.
    pub hk_max: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub header: DatasetHeader,
    pub instances: Vec<Instance>,
}

#[derive(Debug)]
pub enum DatasetError {
    InfeasibleConfig(String),
    CorruptFile(String),
    VersionMismatch { found: u32, expected: u32 },
    InvariantViolation(String),
    Io(std::io::Error),
    Geometry(GeometryError),
    Sequencing(SequencingError),
}

impl fmt::Display for DatasetError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DatasetError::InfeasibleConfig(why) => write!(f, "infeasible config: {why}"),
            DatasetError::CorruptFile(why) => write!(f, "corrupt dataset file: {why}"),
            DatasetError::VersionMismatch { found, expected } => {
                write!(f, "format version mismatch: found {found}, expected {expected}")
            }
            DatasetError::InvariantViolation(why) => write!(f, "invariant violation: {why}"),
            DatasetError::Io(e) => write!(f, "io error: {e}"),
            DatasetError::Geometry(e) => write!(f, "{e}"),
            DatasetError::Sequencing(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for DatasetError {}

impl From<std::io::Error> for DatasetError {
    fn from(e: std::io::Error) -> Self {
        DatasetError::Io(e)
    }
}

impl From<GeometryError> for DatasetError {
    fn from(e: GeometryError) -> Self {
        DatasetError::Geometry(e)
    }
}

impl From<SequencingError> for DatasetError {
    fn from(e: SequencingError) -> Self {
        DatasetError::Sequencing(e)
    }
}

/// Generation parameters beyond the identifying tuple.
#[derive(Debug, Clone, Copy)]
pub struct GenOptions {
    pub hk_max: usize,
}

impl Default for GenOptions {
    fn default() -> Self {
        GenOptions { hk_max: DEFAULT_HK_MAX }
    }
}

/// Generates `count` instances of `task` with `m` points each, i.i.d.
/// uniform on the unit square. Degenerate configurations (duplicates,
/// near-collinear triples for DT/Hull, near-cocircular quadruples for DT,
/// zero-area tours for TSP) are resampled. Instances are independent and
/// generation parallelizes over them.
pub fn generate(
    task: Task,
    m: usize,
    count: usize,
    seed: u64,
    ordering: Ordering,
    opts: GenOptions,
) -> Result<Dataset, DatasetError> {
    if m < task.min_points() {
        return Err(DatasetError::InfeasibleConfig(format!(
            "task {task} needs at least {} points, got {m}",
            task.min_points()
        )));
    }
    if count == 0 {
        return Err(DatasetError::InfeasibleConfig("count must be at least 1".into()));
    }

    let instances: Result<Vec<Instance>, DatasetError> = (0..count as u64)
        .into_par_iter()
        .map(|i| generate_one(task, m, seed, i, ordering, opts))
        .collect();

    Ok(Dataset {
        header: DatasetHeader {
            format_version: FORMAT_VERSION,
            task,
            m,
            count,
            seed,
            ordering,
            prng: "chacha8, per-instance substream = instance index".into(),
            hk_max: opts.hk_max,
        },
        instances: instances?,
    })
}

fn generate_one(
    task: Task,
    m: usize,
    seed: u64,
    index: u64,
    ordering: Ordering,
    opts: GenOptions,
) -> Result<Instance, DatasetError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);

    loop {
        let mut points = PointSet::new(
            (0..m)
                .map(|_| Point::new(rng.gen::<f64>(), rng.gen::<f64>()))
                .collect(),
        );
        if points.has_duplicates() || is_degenerate(task, &points) {
            continue;
        }
        if ordering == Ordering::Random {
            points.points.shuffle(&mut rng);
        }

        // Labels live in the stored point order. For sorted ordering the
        // stored order is the lexicographic one the solvers see; for random
        // ordering the solvers still work index-wise on the shuffled points.
        let stored = match ordering {
            Ordering::Sorted => sort_input(&points).sorted_points,
            Ordering::Random => points,
        };

        let (label, optimal) = match label_instance(task, &stored, ordering, opts, &mut rng) {
            Ok(v) => v,
            // Zero-area tour orientation: resample the instance.
            Err(DatasetError::Sequencing(SequencingError::ZeroSignedArea)) => continue,
            Err(e) => return Err(e),
        };

        return Ok(Instance {
            task,
            points: stored,
            label,
            meta: InstanceMeta { seed: index, optimal },
        });
    }
}

fn is_degenerate(task: Task, ps: &PointSet) -> bool {
    let m = ps.len();
    match task {
        Task::Dt | Task::Hull => {
            for i in 0..m {
                for j in (i + 1)..m {
                    for k in (j + 1)..m {
                        if orient2d(ps[i], ps[j], ps[k]) == Orientation::Collinear {
                            return true;
                        }
                    }
                }
            }
            if task == Task::Dt {
                for i in 0..m {
                    for j in (i + 1)..m {
                        for k in (j + 1)..m {
                            for l in (k + 1)..m {
                                let pos = in_circumcircle(ps[i], ps[j], ps[k], ps[l])
                                    .expect("collinear triples already excluded");
                                if pos == Position::OnBoundary {
                                    return true;
                                }
                            }
                        }
                    }
                }
            }
            false
        }
        Task::Tsp => false,
    }
}

fn label_instance(
    task: Task,
    ps: &PointSet,
    ordering: Ordering,
    opts: GenOptions,
    rng: &mut ChaCha8Rng,
) -> Result<(TokenSequence, bool), DatasetError> {
    match task {
        Task::Dt => {
            let tris = delaunay_triangulate(ps)?;
            let label = match ordering {
                Ordering::Sorted => canonicalize_dt(&tris, ps)?,
                Ordering::Random => {
                    let mut shuffled = tris.clone();
                    shuffled.shuffle(rng);
                    let mut body = Vec::with_capacity(shuffled.len() * 3);
                    for t in &shuffled {
                        let mut idx = t.indices();
                        idx.shuffle(rng);
                        body.extend_from_slice(&idx);
                    }
                    TokenSequence::from_body(&body)
                }
            };
            Ok((label, true))
        }
        Task::Hull => {
            let hull = convex_hull(ps)?;
            let label = match ordering {
                Ordering::Sorted => canonicalize_hull(&hull, ps),
                Ordering::Random => TokenSequence::from_body(&shuffle_cycle(&hull, rng)),
            };
            Ok((label, true))
        }
        Task::Tsp => {
            let m = ps.len();
            let (tour, optimal) = if m <= opts.hk_max {
                (held_karp(ps, opts.hk_max)?.0, true)
            } else {
                (two_opt(ps, &nearest_neighbor_tour(ps)), false)
            };
            let label = match ordering {
                Ordering::Sorted => {
                    if m == 2 {
                        // Two cities: orientation is meaningless; the lone
                        // cycle starting at city 0 is canonical.
                        TokenSequence::from_body(&[0, 1])
                    } else {
                        canonicalize_tour(&tour, ps)?
                    }
                }
                Ordering::Random => TokenSequence::from_body(&shuffle_cycle(&tour.order, rng)),
            };
            Ok((label, optimal))
        }
    }
}

fn shuffle_cycle(cycle: &[usize], rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut c = cycle.to_vec();
    if rng.gen::<bool>() {
        c.reverse();
    }
    let k = rng.gen_range(0..c.len());
    c.rotate_left(k);
    c
}

/// Deterministic split after a seeded shuffle: the first `floor(count * f)`
/// shuffled instances become the training set.
pub fn split(dataset: &Dataset, train_fraction: f64) -> Result<(Dataset, Dataset), DatasetError> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(DatasetError::InfeasibleConfig(format!(
            "train fraction must be in (0, 1), got {train_fraction}"
        )));
    }
    let count = dataset.instances.len();
    let mut order: Vec<usize> = (0..count).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(dataset.header.seed);
    // Distinct stream so the shuffle never reuses an instance substream.
    rng.set_stream(u64::MAX);
    order.shuffle(&mut rng);

    let n_train = (count as f64 * train_fraction).floor() as usize;
    let mk = |idx: &[usize]| Dataset {
        header: DatasetHeader { count: idx.len(), ..dataset.header.clone() },
        instances: idx.iter().map(|&i| dataset.instances[i].clone()).collect(),
    };
    Ok((mk(&order[..n_train]), mk(&order[n_train..])))
}

#[derive(Serialize, Deserialize)]
struct RecordJson {
    points: Vec<[f64; 2]>,
    label: Vec<usize>,
    seed: u64,
    optimal: bool,
}

fn format_record(inst: &Instance) -> String {
    let mut s = String::with_capacity(64 * inst.points.len());
    s.push_str("{\"points\":[");
    for (k, p) in inst.points.points.iter().enumerate() {
        if k > 0 {
            s.push(',');
        }
        // 17 significant digits: lossless f64 round-trip.
        s.push_str(&format!("[{:.16e},{:.16e}]", p.x, p.y));
    }
    s.push_str("],\"label\":[");
    for (k, i) in inst.label.body_indices().iter().enumerate() {
        if k > 0 {
            s.push(',');
        }
        s.push_str(&i.to_string());
    }
    s.push_str(&format!("],\"seed\":{},\"optimal\":{}}}", inst.meta.seed, inst.meta.optimal));
    s
}

/// Writes the dataset as a header line plus one record line per instance.
pub fn save(dataset: &Dataset, path: &Path) -> Result<(), DatasetError> {
    let mut out = String::new();
    out.push_str(
        &serde_json::to_string(&dataset.header)
            .map_err(|e| DatasetError::Io(std::io::Error::other(e)))?,
    );
    out.push('\n');
    for inst in &dataset.instances {
        out.push_str(&format_record(inst));
        out.push('\n');
    }
    let mut f = fs::File::create(path)?;
    f.write_all(out.as_bytes())?;
    Ok(())
}

/// Reads a dataset and validates structure, index ranges, and DT label
/// feasibility (every label triangle must have a strictly empty
/// circumcircle).
pub fn load(path: &Path) -> Result<Dataset, DatasetError> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header_line = lines
        .next()
        .ok_or_else(|| DatasetError::CorruptFile("empty file".into()))?;
    let header: DatasetHeader = serde_json::from_str(header_line)
        .map_err(|e| DatasetError::CorruptFile(format!("bad header: {e}")))?;
    if header.format_version != FORMAT_VERSION {
        return Err(DatasetError::VersionMismatch {
            found: header.format_version,
            expected: FORMAT_VERSION,
        });
    }

    let mut instances = Vec::with_capacity(header.count);
    for (lineno, line) in lines.enumerate() {
        let rec: RecordJson = serde_json::from_str(line)
            .map_err(|e| DatasetError::CorruptFile(format!("record {}: {e}", lineno + 1)))?;
        if rec.points.len() != header.m {
            return Err(DatasetError::InvariantViolation(format!(
                "record {}: {} points, header says {}",
                lineno + 1,
                rec.points.len(),
                header.m
            )));
        }
        let points = PointSet::new(rec.points.iter().map(|&[x, y]| Point::new(x, y)).collect());
        if points.points.iter().any(|p| !p.is_finite()) {
            return Err(DatasetError::InvariantViolation(format!(
                "record {}: non-finite coordinate",
                lineno + 1
            )));
        }
        if rec.label.iter().any(|&i| i >= header.m) {
            return Err(DatasetError::InvariantViolation(format!(
                "record {}: label index out of range",
                lineno + 1
            )));
        }
        let label = TokenSequence::from_body(&rec.label);
        validate_label(header.task, &points, &label, lineno + 1)?;
        instances.push(Instance {
            task: header.task,
            points,
            label,
            meta: InstanceMeta { seed: rec.seed, optimal: rec.optimal },
        });
    }

    if instances.len() != header.count {
        return Err(DatasetError::CorruptFile(format!(
            "truncated: header says {} records, found {}",
            header.count,
            instances.len()
        )));
    }
    Ok(Dataset { header, instances })
}

fn validate_label(
    task: Task,
    points: &PointSet,
    label: &TokenSequence,
    lineno: usize,
) -> Result<(), DatasetError> {
    let body = label.body_indices();
    let m = points.len();
    match task {
        Task::Dt => {
            if body.len() % 3 != 0 {
                return Err(DatasetError::InvariantViolation(format!(
                    "record {lineno}: DT label length not a multiple of 3"
                )));
            }
            for t in body.chunks_exact(3) {
                if t[0] == t[1] || t[1] == t[2] || t[0] == t[2] {
                    return Err(DatasetError::InvariantViolation(format!(
                        "record {lineno}: repeated index inside a label triangle"
                    )));
                }
                let tri = TriangleIdx::new(t[0], t[1], t[2]);
                for q in 0..m {
                    if tri.contains(q) {
                        continue;
                    }
                    let pos = in_circumcircle(
                        points[tri.a],
                        points[tri.b],
                        points[tri.c],
                        points[q],
                    )
                    .map_err(|_| {
                        DatasetError::InvariantViolation(format!(
                            "record {lineno}: degenerate label triangle"
                        ))
                    })?;
                    if pos == Position::Inside {
                        return Err(DatasetError::InvariantViolation(format!(
                            "record {lineno}: label triangle violates the empty-circumcircle condition"
                        )));
                    }
                }
            }
        }
        Task::Hull => {
            let mut seen = vec![false; m];
            for &i in &body {
                if seen[i] {
                    return Err(DatasetError::InvariantViolation(format!(
                        "record {lineno}: repeated index in hull label"
                    )));
                }
                seen[i] = true;
            }
        }
        Task::Tsp => {
            if !Tour::new(body).is_valid(m) {
                return Err(DatasetError::InvariantViolation(format!(
                    "record {lineno}: TSP label is not a permutation"
                )));
            }
        }
    }
    Ok(())
}

/// Reference tour length of a TSP instance's label.
pub fn label_tour_length(inst: &Instance) -> Result<f64, GeometryError> {
    tour_length(&inst.points, &Tour::new(inst.label.body_indices()))
}
