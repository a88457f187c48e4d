//! Canonical input/output sequence ordering and conversion between solver
//! outputs, token sequences, and task solutions.
//!
//! Inputs are sorted lexicographically (x, then y). Output bodies are
//! normalized so that equivalent solutions map to one sequence: triangles
//! ascend internally and are ordered by incenter, cycles start at the
//! lexicographically smallest point and run counter-clockwise. Indices are
//! 0-based everywhere; the paper-style 1-based form only exists in display
//! output.

use crate::geometry::{
    incenter, signed_polygon_area, GeometryError, Point, PointSet, Tour, TriangleIdx, EPS_GEO,
};
use crate::Task;
use serde::{Deserialize, Serialize};
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Token {
    Begin,
    End,
    Index(usize),
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Token::Begin => write!(f, "=>"),
            Token::End => write!(f, "<="),
            // 1-based in display, matching the usual figure notation.
            Token::Index(i) => write!(f, "{}", i + 1),
        }
    }
}

/// A sentinel-framed output sequence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSequence {
    pub tokens: Vec<Token>,
}

impl TokenSequence {
    /// Wraps body indices in Begin/End sentinels.
    pub fn from_body(body: &[usize]) -> Self {
        let mut tokens = Vec::with_capacity(body.len() + 2);
        tokens.push(Token::Begin);
        tokens.extend(body.iter().map(|&i| Token::Index(i)));
        tokens.push(Token::End);
        TokenSequence { tokens }
    }

    /// Body tokens between the sentinels. Call only on framed sequences.
    pub fn body(&self) -> &[Token] {
        &self.tokens[1..self.tokens.len() - 1]
    }

    pub fn body_indices(&self) -> Vec<usize> {
        self.body()
            .iter()
            .map(|t| match t {
                Token::Index(i) => *i,
                _ => unreachable!("sentinel inside body"),
            })
            .collect()
    }

    pub fn body_len(&self) -> usize {
        self.tokens.len().saturating_sub(2)
    }

    /// Checks sentinel framing and index range.
    pub fn validate(&self, m: usize) -> Result<(), SequencingError> {
        if self.tokens.len() < 2 {
            return Err(SequencingError::MalformedSequence("sequence shorter than sentinels"));
        }
        if self.tokens[0] != Token::Begin {
            return Err(SequencingError::MalformedSequence("missing begin sentinel"));
        }
        if *self.tokens.last().unwrap() != Token::End {
            return Err(SequencingError::MalformedSequence("missing end sentinel"));
        }
        for t in self.body() {
            match t {
                Token::Begin | Token::End => {
                    return Err(SequencingError::MalformedSequence("sentinel inside body"))
                }
                Token::Index(i) if *i >= m => {
                    return Err(SequencingError::MalformedSequence("index out of range"))
                }
                _ => {}
            }
        }
        Ok(())
    }
}

/// Result of [`sort_input`]: the sorted points plus the original-to-sorted
/// index map.
#[derive(Debug, Clone)]
pub struct CanonicalInstanceLayout {
    pub sorted_points: PointSet,
    /// `permutation[original_index] == sorted_index`.
    pub permutation: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SequencingError {
    MalformedSequence(&'static str),
    ZeroSignedArea,
    Geometry(GeometryError),
}

impl fmt::Display for SequencingError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SequencingError::MalformedSequence(why) => write!(f, "malformed sequence: {why}"),
            SequencingError::ZeroSignedArea => {
                write!(f, "tour polygon has zero signed area; orientation undefined")
            }
            SequencingError::Geometry(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for SequencingError {}

impl From<GeometryError> for SequencingError {
    fn from(e: GeometryError) -> Self {
        SequencingError::Geometry(e)
    }
}

fn lex_cmp(p: &Point, q: &Point) -> std::cmp::Ordering {
    p.x.partial_cmp(&q.x).unwrap().then(p.y.partial_cmp(&q.y).unwrap())
}

/// Stable lexicographic sort (x ascending, then y).
pub fn sort_input(ps: &PointSet) -> CanonicalInstanceLayout {
    let m = ps.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| lex_cmp(&ps[i], &ps[j]));
    let sorted_points = PointSet::new(order.iter().map(|&i| ps[i]).collect());
    let mut permutation = vec![0usize; m];
    for (sorted_idx, &orig_idx) in order.iter().enumerate() {
        permutation[orig_idx] = sorted_idx;
    }
    CanonicalInstanceLayout { sorted_points, permutation }
}

/// Canonical triangulation sequence: indices ascend within each triangle,
/// triangles ordered by incenter x then y (lexicographic triple as the final
/// tie-break), flattened between sentinels.
pub fn canonicalize_dt(
    tris: &[TriangleIdx],
    ps: &PointSet,
) -> Result<TokenSequence, SequencingError> {
    let mut keyed: Vec<(Point, TriangleIdx)> = tris
        .iter()
        .map(|t| {
            let [a, b, c] = t.indices();
            Ok((incenter(ps[a], ps[b], ps[c])?, *t))
        })
        .collect::<Result<_, GeometryError>>()?;
    keyed.sort_by(|(pa, ta), (pb, tb)| lex_cmp(pa, pb).then_with(|| ta.cmp(tb)));
    let body: Vec<usize> = keyed
        .iter()
        .flat_map(|(_, t)| t.indices())
        .collect();
    Ok(TokenSequence::from_body(&body))
}

/// Canonical hull sequence: CCW, starting at the lexicographically smallest
/// hull point.
pub fn canonicalize_hull(hull: &[usize], ps: &PointSet) -> TokenSequence {
    let cycle = canonicalize_cycle(hull, ps);
    TokenSequence::from_body(&cycle)
}

/// Canonical tour sequence: orientation from the signed area of the tour
/// polygon (optimal planar tours are simple, so the sign is well defined),
/// then the same start/direction normalization as the hull.
pub fn canonicalize_tour(t: &Tour, ps: &PointSet) -> Result<TokenSequence, SequencingError> {
    let area = signed_polygon_area(ps, &t.order);
    if area.abs() <= EPS_GEO {
        return Err(SequencingError::ZeroSignedArea);
    }
    Ok(TokenSequence::from_body(&canonicalize_cycle(&t.order, ps)))
}

/// Rotates/reflects a cycle so it starts at the lexicographically smallest
/// point and traverses CCW (positive signed area).
fn canonicalize_cycle(cycle: &[usize], ps: &PointSet) -> Vec<usize> {
    let mut c: Vec<usize> = cycle.to_vec();
    if signed_polygon_area(ps, &c) < 0.0 {
        c.reverse();
    }
    let start = c
        .iter()
        .enumerate()
        .min_by(|(_, &i), (_, &j)| lex_cmp(&ps[i], &ps[j]))
        .map(|(k, _)| k)
        .unwrap_or(0);
    c.rotate_left(start);
    c
}

/// A parsed DT prediction: raw triples in emission order plus bookkeeping
/// about what had to be dropped.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedDt {
    pub triples: Vec<[usize; 3]>,
    /// Trailing body tokens (1 or 2) that could not form a triangle.
    pub excluded_tokens: usize,
    /// Raw triples repeating an earlier triple (as unordered sets).
    pub duplicate_triples: usize,
}

impl ParsedDt {
    /// Canonical de-duplicated triangle set; triples with repeated indices
    /// cannot form a triangle and are skipped.
    pub fn triangle_set(&self) -> Vec<TriangleIdx> {
        let mut out: Vec<TriangleIdx> = self
            .triples
            .iter()
            .filter(|t| t[0] != t[1] && t[1] != t[2] && t[0] != t[2])
            .map(|t| TriangleIdx::new(t[0], t[1], t[2]))
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedHull {
    pub cycle: Vec<usize>,
    pub has_duplicates: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedTsp {
    pub order: Vec<usize>,
    /// True iff `order` is a permutation of all `m` cities.
    pub valid: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParsedOutput {
    Dt(ParsedDt),
    Hull(ParsedHull),
    Tsp(ParsedTsp),
}

/// Interprets a sentinel-framed sequence as a task solution. Invalid
/// structure inside the body (duplicates, missing cities, leftover tokens)
/// is reported through flags, not errors; only broken framing is an error.
pub fn parse_output(
    task: Task,
    seq: &TokenSequence,
    m: usize,
) -> Result<ParsedOutput, SequencingError> {
    seq.validate(m)?;
    let body = seq.body_indices();
    match task {
        Task::Dt => {
            let mut triples = Vec::with_capacity(body.len() / 3);
            for chunk in body.chunks_exact(3) {
                triples.push([chunk[0], chunk[1], chunk[2]]);
            }
            let excluded_tokens = body.len() % 3;
            let mut seen: Vec<[usize; 3]> = Vec::new();
            let mut duplicate_triples = 0;
            for t in &triples {
                let mut key = *t;
                key.sort_unstable();
                if seen.contains(&key) {
                    duplicate_triples += 1;
                } else {
                    seen.push(key);
                }
            }
            Ok(ParsedOutput::Dt(ParsedDt { triples, excluded_tokens, duplicate_triples }))
        }
        Task::Hull => {
            let mut seen = vec![false; m];
            let mut has_duplicates = false;
            for &i in &body {
                if seen[i] {
                    has_duplicates = true;
                }
                seen[i] = true;
            }
            Ok(ParsedOutput::Hull(ParsedHull { cycle: body, has_duplicates }))
        }
        Task::Tsp => {
            let tour = Tour::new(body.clone());
            let valid = tour.is_valid(m);
            Ok(ParsedOutput::Tsp(ParsedTsp { order: body, valid }))
        }
    }
}
