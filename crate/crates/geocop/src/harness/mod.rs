//! Evaluation metrics, report formats, and experiment orchestration.

pub mod experiment;
pub mod svg;

pub use experiment::{evaluate, run_experiment, Ablation, EarlyStopConfig, ExperimentConfig};

use crate::geometry::{in_circumcircle, polygon_area, tour_length, PointSet, Position, Tour, TriangleIdx};
use crate::sequencing::{ParsedDt, ParsedHull, ParsedTsp};
use crate::Task;
use serde::{Deserialize, Serialize};
use std::fmt;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug)]
pub enum HarnessError {
    SampleMismatch { predictions: usize, truths: usize },
    ConfigInvalid(String),
    Model(crate::model::ModelError),
    Dataset(crate::dataset::DatasetError),
    Io(std::io::Error),
}

impl fmt::Display for HarnessError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HarnessError::SampleMismatch { predictions, truths } => {
                write!(f, "sample mismatch: {predictions} predictions vs {truths} ground truths")
            }
            HarnessError::ConfigInvalid(why) => write!(f, "invalid experiment config: {why}"),
            HarnessError::Model(e) => write!(f, "{e}"),
            HarnessError::Dataset(e) => write!(f, "{e}"),
            HarnessError::Io(e) => write!(f, "io error: {e}"),
        }
    }
}

impl std::error::Error for HarnessError {}

impl From<crate::model::ModelError> for HarnessError {
    fn from(e: crate::model::ModelError) -> Self {
        HarnessError::Model(e)
    }
}

impl From<crate::dataset::DatasetError> for HarnessError {
    fn from(e: crate::dataset::DatasetError) -> Self {
        HarnessError::Dataset(e)
    }
}

impl From<std::io::Error> for HarnessError {
    fn from(e: std::io::Error) -> Self {
        HarnessError::Io(e)
    }
}

/// Triangulation metrics, all in percent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DtMetrics {
    /// Triangle coverage: predicted-set overlap with the ground-truth set,
    /// averaged over samples (ground-truth denominator).
    pub tc: f64,
    /// Exact-triangulation accuracy (set equality per sample).
    pub acc: f64,
    /// Triangle-count accuracy; trailing non-triple tokens are excluded
    /// from the predicted count.
    pub tca: f64,
    /// Share of predicted triangles satisfying the empty-circumcircle
    /// condition, pooled over all predicted triangles.
    pub dtr: f64,
    /// Raw duplicate triple count across all samples (duplicates collapse
    /// for TC/ACC; reported since they do occur).
    pub duplicate_triples: usize,
    pub predicted_triangles: usize,
    pub truth_triangles: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HullMetrics {
    /// Cycle equality up to rotation and reflection, in percent.
    pub acc: f64,
    /// Mean predicted-polygon area over true hull area, in percent.
    pub ac: f64,
    /// Predictions whose polygon self-intersects (their AC uses the raw
    /// shoelace value and is flagged here).
    pub self_intersecting: usize,
    /// Predictions with fewer than 3 vertices (AC contribution 0).
    pub degenerate: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TspMetrics {
    /// Average tour length over valid tours only.
    pub atl: f64,
    /// Valid-tour rate in percent.
    pub vtr: f64,
    /// Mean reference (label) tour length over all samples.
    pub reference_atl: f64,
    /// Mean relative gap to the reference over valid tours with exact
    /// (optimal) references; None when no such sample exists.
    pub optimality_gap: Option<f64>,
    pub valid_tours: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub decode_seconds: f64,
    pub total_seconds: f64,
}

/// Aggregate evaluation report for one task/model/decoder combination.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub schema_version: u32,
    pub task: Task,
    pub samples: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<DtMetrics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hull: Option<HullMetrics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tsp: Option<TspMetrics>,
    /// Share of decodes that needed at least one fallback step, in percent.
    pub fallback_decode_rate: f64,
    pub truncated_decodes: usize,
    pub timing: Timing,
}

impl MetricsReport {
    /// One `metric,value` row per line.
    pub fn to_csv(&self) -> String {
        let mut rows: Vec<(String, String)> = vec![
            ("schema_version".into(), self.schema_version.to_string()),
            ("task".into(), self.task.to_string()),
            ("samples".into(), self.samples.to_string()),
        ];
        if let Some(dt) = &self.dt {
            rows.push(("tc_percent".into(), format!("{:.4}", dt.tc)));
            rows.push(("acc_percent".into(), format!("{:.4}", dt.acc)));
            rows.push(("tca_percent".into(), format!("{:.4}", dt.tca)));
            rows.push(("dtr_percent".into(), format!("{:.4}", dt.dtr)));
            rows.push(("duplicate_triples".into(), dt.duplicate_triples.to_string()));
            rows.push(("predicted_triangles".into(), dt.predicted_triangles.to_string()));
            rows.push(("truth_triangles".into(), dt.truth_triangles.to_string()));
        }
        if let Some(hull) = &self.hull {
            rows.push(("acc_percent".into(), format!("{:.4}", hull.acc)));
            rows.push(("ac_percent".into(), format!("{:.4}", hull.ac)));
            rows.push(("self_intersecting".into(), hull.self_intersecting.to_string()));
            rows.push(("degenerate".into(), hull.degenerate.to_string()));
        }
        if let Some(tsp) = &self.tsp {
            rows.push(("atl".into(), format!("{:.6}", tsp.atl)));
            rows.push(("vtr_percent".into(), format!("{:.4}", tsp.vtr)));
            rows.push(("reference_atl".into(), format!("{:.6}", tsp.reference_atl)));
            if let Some(gap) = tsp.optimality_gap {
                rows.push(("optimality_gap_percent".into(), format!("{:.4}", gap * 100.0)));
            }
            rows.push(("valid_tours".into(), tsp.valid_tours.to_string()));
        }
        rows.push(("fallback_decode_rate_percent".into(), format!("{:.4}", self.fallback_decode_rate)));
        rows.push(("truncated_decodes".into(), self.truncated_decodes.to_string()));
        rows.push(("decode_seconds".into(), format!("{:.3}", self.timing.decode_seconds)));
        rows.push(("total_seconds".into(), format!("{:.3}", self.timing.total_seconds)));

        let mut out = String::from("metric,value\n");
        for (k, v) in rows {
            out.push_str(&k);
            out.push(',');
            out.push_str(&v);
            out.push('\n');
        }
        out
    }
}

/// Triangulation metrics over parsed predictions against ground-truth
/// triangle sets.
pub fn metrics_dt(
    predictions: &[ParsedDt],
    truths: &[Vec<TriangleIdx>],
    point_sets: &[PointSet],
) -> Result<DtMetrics, HarnessError> {
    if predictions.len() != truths.len() || predictions.len() != point_sets.len() {
        return Err(HarnessError::SampleMismatch {
            predictions: predictions.len(),
            truths: truths.len(),
        });
    }
    let s = predictions.len() as f64;
    let mut tc_sum = 0.0;
    let mut acc_hits = 0usize;
    let mut tca_hits = 0usize;
    let mut duplicate_triples = 0usize;
    let mut predicted_triangles = 0usize;
    let mut truth_triangles = 0usize;
    let mut dtr_ok = 0usize;

    for ((pred, truth), ps) in predictions.iter().zip(truths).zip(point_sets) {
        let pred_set = pred.triangle_set();
        let overlap = pred_set.iter().filter(|t| truth.contains(t)).count();
        tc_sum += overlap as f64 / truth.len().max(1) as f64;
        if pred_set == *truth {
            acc_hits += 1;
        }
        if pred.triples.len() == truth.len() {
            tca_hits += 1;
        }
        duplicate_triples += pred.duplicate_triples;
        predicted_triangles += pred.triples.len();
        truth_triangles += truth.len();
        for t in &pred.triples {
            if triangle_is_delaunay(ps, t) {
                dtr_ok += 1;
            }
        }
    }

    Ok(DtMetrics {
        tc: 100.0 * tc_sum / s,
        acc: 100.0 * acc_hits as f64 / s,
        tca: 100.0 * tca_hits as f64 / s,
        dtr: 100.0 * dtr_ok as f64 / predicted_triangles.max(1) as f64,
        duplicate_triples,
        predicted_triangles,
        truth_triangles,
    })
}

fn triangle_is_delaunay(ps: &PointSet, t: &[usize; 3]) -> bool {
    if t[0] == t[1] || t[1] == t[2] || t[0] == t[2] {
        return false;
    }
    for (q, &pt) in ps.points.iter().enumerate() {
        if t.contains(&q) {
            continue;
        }
        match in_circumcircle(ps[t[0]], ps[t[1]], ps[t[2]], pt) {
            Ok(Position::Inside) => return false,
            Ok(_) => {}
            Err(_) => return false,
        }
    }
    true
}

/// Hull metrics: exact cycle accuracy (rotation/reflection invariant) and
/// area coverage.
pub fn metrics_hull(
    predictions: &[ParsedHull],
    truths: &[Vec<usize>],
    point_sets: &[PointSet],
) -> Result<HullMetrics, HarnessError> {
    if predictions.len() != truths.len() || predictions.len() != point_sets.len() {
        return Err(HarnessError::SampleMismatch {
            predictions: predictions.len(),
            truths: truths.len(),
        });
    }
    let s = predictions.len() as f64;
    let mut acc_hits = 0usize;
    let mut ac_sum = 0.0;
    let mut self_intersecting = 0usize;
    let mut degenerate = 0usize;

    for ((pred, truth), ps) in predictions.iter().zip(truths).zip(point_sets) {
        if cycles_equal(&pred.cycle, truth) {
            acc_hits += 1;
        }
        if pred.cycle.len() < 3 {
            degenerate += 1;
            continue; // AC contribution 0
        }
        if polygon_self_intersects(ps, &pred.cycle) {
            self_intersecting += 1;
        }
        let truth_area = polygon_area(ps, truth);
        if truth_area > 0.0 {
            ac_sum += polygon_area(ps, &pred.cycle) / truth_area;
        }
    }

    Ok(HullMetrics {
        acc: 100.0 * acc_hits as f64 / s,
        ac: 100.0 * ac_sum / s,
        self_intersecting,
        degenerate,
    })
}

/// True iff the cycles are equal up to rotation and reflection.
fn cycles_equal(a: &[usize], b: &[usize]) -> bool {
    if a.len() != b.len() || a.is_empty() {
        return a.len() == b.len();
    }
    let n = a.len();
    let reversed: Vec<usize> = a.iter().rev().cloned().collect();
    for cand in [a.to_vec(), reversed] {
        for shift in 0..n {
            if (0..n).all(|k| cand[(k + shift) % n] == b[k]) {
                return true;
            }
        }
    }
    false
}

fn polygon_self_intersects(ps: &PointSet, cycle: &[usize]) -> bool {
    use crate::geometry::{orient2d, Orientation};
    let n = cycle.len();
    let seg = |k: usize| (ps[cycle[k]], ps[cycle[(k + 1) % n]]);
    let proper_cross = |a, b, c, d| {
        let abc = orient2d(a, b, c);
        let abd = orient2d(a, b, d);
        let cda = orient2d(c, d, a);
        let cdb = orient2d(c, d, b);
        abc != Orientation::Collinear
            && abd != Orientation::Collinear
            && cda != Orientation::Collinear
            && cdb != Orientation::Collinear
            && abc != abd
            && cda != cdb
    };
    for i in 0..n {
        for j in (i + 1)..n {
            // Skip adjacent edges (they share an endpoint).
            if j == i + 1 || (i == 0 && j == n - 1) {
                continue;
            }
            let (a, b) = seg(i);
            let (c, d) = seg(j);
            if proper_cross(a, b, c, d) {
                return true;
            }
        }
    }
    false
}

/// TSP metrics: valid-tour rate and average tour length over valid tours,
/// with the optimality gap against exact reference lengths.
pub fn metrics_tsp(
    predictions: &[ParsedTsp],
    point_sets: &[PointSet],
    references: &[(f64, bool)],
) -> Result<TspMetrics, HarnessError> {
    if predictions.len() != point_sets.len() || predictions.len() != references.len() {
        return Err(HarnessError::SampleMismatch {
            predictions: predictions.len(),
            truths: references.len(),
        });
    }
    let mut valid = 0usize;
    let mut atl_sum = 0.0;
    let mut ref_sum = 0.0;
    let mut gap_sum = 0.0;
    let mut gap_n = 0usize;

    for ((pred, ps), &(ref_len, optimal)) in predictions.iter().zip(point_sets).zip(references) {
        ref_sum += ref_len;
        if !pred.valid {
            continue;
        }
        valid += 1;
        let len = tour_length(ps, &Tour::new(pred.order.clone()))
            .expect("valid flag guarantees a permutation");
        atl_sum += len;
        if optimal && ref_len > 0.0 {
            gap_sum += len / ref_len - 1.0;
            gap_n += 1;
        }
    }

    let s = predictions.len() as f64;
    Ok(TspMetrics {
        atl: if valid > 0 { atl_sum / valid as f64 } else { 0.0 },
        vtr: 100.0 * valid as f64 / s,
        reference_atl: ref_sum / s,
        optimality_gap: (gap_n > 0).then(|| gap_sum / gap_n as f64),
        valid_tours: valid,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sequencing::{parse_output, ParsedOutput, TokenSequence};

    fn parsed_dt(body: &[usize], m: usize) -> ParsedDt {
        match parse_output(Task::Dt, &TokenSequence::from_body(body), m).unwrap() {
            ParsedOutput::Dt(d) => d,
            _ => unreachable!(),
        }
    }

    /// The worked example: two samples with five-triangle ground truths, one
    /// predicted perfectly, the other with four of five correct. TC must be
    /// 90% and ACC 50%.
    #[test]
    fn dt_worked_example() {
        let m = 12;
        let truth: Vec<TriangleIdx> = (0..5)
            .map(|k| TriangleIdx::new(2 * k, 2 * k + 1, 2 * k + 2))
            .collect();
        let perfect: Vec<usize> = truth.iter().flat_map(|t| t.indices()).collect();
        // Four of five correct; the fifth triangle is wrong.
        let mut partial: Vec<usize> = truth[..4].iter().flat_map(|t| t.indices()).collect();
        partial.extend_from_slice(&[7, 9, 11]);

        let preds = vec![parsed_dt(&perfect, m), parsed_dt(&partial, m)];
        let truths = vec![truth.clone(), truth];
        let ps = PointSet::new(
            (0..m)
                .map(|i| crate::geometry::Point::new(i as f64 * 0.07, (i as f64 * 0.13).sin().abs()))
                .collect(),
        );
        let out = metrics_dt(&preds, &truths, &[ps.clone(), ps]).unwrap();
        assert!((out.tc - 90.0).abs() < 1e-9, "TC {}", out.tc);
        assert!((out.acc - 50.0).abs() < 1e-9, "ACC {}", out.acc);
        assert!((out.tca - 100.0).abs() < 1e-9, "both predicted 5 triangles");
    }

    #[test]
    fn dt_tca_exclusion_rule() {
        // Five body tokens: one triangle counted, two tokens excluded.
        let m = 6;
        let pred = parsed_dt(&[0, 1, 2, 3, 4], m);
        assert_eq!(pred.excluded_tokens, 2);
        let truth = vec![vec![TriangleIdx::new(0, 1, 2)]];
        let ps = PointSet::from_pairs(&[
            (0.0, 0.0),
            (1.0, 0.0),
            (0.5, 0.9),
            (0.1, 0.4),
            (0.9, 0.4),
            (0.5, 0.2),
        ]);
        let out = metrics_dt(&[pred], &truth, &[ps]).unwrap();
        // Predicted count after exclusion is 1 == truth count.
        assert!((out.tca - 100.0).abs() < 1e-9);
    }

    #[test]
    fn dt_identity_is_all_hundred() {
        let ps = PointSet::from_pairs(&[(0.0, 0.0), (1.0, 0.0), (0.9, 0.9), (0.0, 1.0)]);
        let tris = crate::geometry::delaunay_triangulate(&ps).unwrap();
        let body: Vec<usize> = tris.iter().flat_map(|t| t.indices()).collect();
        let pred = parsed_dt(&body, 4);
        let out = metrics_dt(&[pred], &[tris], &[ps]).unwrap();
        assert_eq!(
            (out.tc, out.acc, out.tca, out.dtr),
            (100.0, 100.0, 100.0, 100.0)
        );
    }

    #[test]
    fn hull_rotation_reflection_equivalence() {
        let ps = PointSet::from_pairs(&[
            (0.0, 0.0),
            (1.0, 0.0),
            (1.0, 1.0),
            (0.0, 1.0),
            (0.5, 0.5),
        ]);
        let truth = vec![0usize, 1, 2, 3];
        let rotated_reversed = vec![2usize, 1, 0, 3];
        let pred = ParsedHull { cycle: rotated_reversed, has_duplicates: false };
        let out = metrics_hull(&[pred], &[truth.clone()], &[ps.clone()]).unwrap();
        assert_eq!(out.acc, 100.0);
        assert!((out.ac - 100.0).abs() < 1e-9);

        // A prediction including the interior point covers the full area but
        // is not the same polygon.
        let bigger = ParsedHull { cycle: vec![0, 1, 2, 4, 3], has_duplicates: false };
        let out = metrics_hull(&[bigger], &[truth], &[ps]).unwrap();
        assert_eq!(out.acc, 0.0);
        assert!(out.ac < 100.0);
    }

    #[test]
    fn hull_degenerate_prediction_counts_zero() {
        let ps = PointSet::from_pairs(&[(0.0, 0.0), (1.0, 0.0), (0.5, 0.8)]);
        let pred = ParsedHull { cycle: vec![0, 1], has_duplicates: false };
        let out = metrics_hull(&[pred], &[vec![0, 1, 2]], &[ps]).unwrap();
        assert_eq!(out.degenerate, 1);
        assert_eq!(out.ac, 0.0);
    }

    #[test]
    fn tsp_validity_and_lengths() {
        let ps = PointSet::from_pairs(&[(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]);
        let good = ParsedTsp { order: vec![0, 1, 2, 3], valid: true };
        let bad = ParsedTsp { order: vec![0, 1, 1, 3], valid: false };
        let refs = [(4.0, true), (4.0, true)];
        let out = metrics_tsp(&[good, bad], &[ps.clone(), ps], &refs).unwrap();
        assert_eq!(out.vtr, 50.0);
        assert!((out.atl - 4.0).abs() < 1e-12);
        assert!((out.reference_atl - 4.0).abs() < 1e-12);
        assert!(out.optimality_gap.unwrap().abs() < 1e-12);
    }

    #[test]
    fn sample_mismatch_is_an_error() {
        let out = metrics_tsp(&[], &[PointSet::from_pairs(&[(0.0, 0.0)])], &[(1.0, true)]);
        assert!(matches!(out, Err(HarnessError::SampleMismatch { .. })));
    }

    #[test]
    fn self_intersection_is_detected() {
        let ps = PointSet::from_pairs(&[(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]);
        let crossing = ParsedHull { cycle: vec![0, 2, 1, 3], has_duplicates: false };
        let out = metrics_hull(&[crossing], &[vec![0, 1, 2, 3]], &[ps]).unwrap();
        assert_eq!(out.self_intersecting, 1);
    }

    #[test]
    fn csv_has_one_row_per_metric() {
        let report = MetricsReport {
            schema_version: REPORT_SCHEMA_VERSION,
            task: Task::Tsp,
            samples: 10,
            dt: None,
            hull: None,
            tsp: Some(TspMetrics {
                atl: 2.5,
                vtr: 100.0,
                reference_atl: 2.4,
                optimality_gap: Some(0.04),
                valid_tours: 10,
            }),
            fallback_decode_rate: 0.0,
            truncated_decodes: 0,
            timing: Timing { decode_seconds: 1.0, total_seconds: 2.0 },
        };
        let csv = report.to_csv();
        assert!(csv.starts_with("metric,value\n"));
        assert!(csv.contains("atl,2.500000\n"));
        assert!(csv.contains("vtr_percent,100.0000\n"));
        let json = serde_json::to_string(&report).unwrap();
        let back: MetricsReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, report);
    }
}
