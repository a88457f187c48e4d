//! SVG renderings of predictions against ground truth: elements present in
//! the ground truth draw blue, predicted elements not in the ground truth
//! draw red, and ground-truth elements the prediction missed draw as dashed
//! blue.

use crate::geometry::{PointSet, TriangleIdx};

const SIZE: f64 = 600.0;
const MARGIN: f64 = 30.0;
const BLUE: &str = "#1f77b4";
const RED: &str = "#d62728";

struct Canvas {
    body: String,
    min_x: f64,
    min_y: f64,
    scale: f64,
}

impl Canvas {
    fn new(ps: &PointSet) -> Self {
        let (mut min_x, mut max_x) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut min_y, mut max_y) = (f64::INFINITY, f64::NEG_INFINITY);
        for p in &ps.points {
            min_x = min_x.min(p.x);
            max_x = max_x.max(p.x);
            min_y = min_y.min(p.y);
            max_y = max_y.max(p.y);
        }
        let span = (max_x - min_x).max(max_y - min_y).max(1e-9);
        Canvas {
            body: String::new(),
            min_x,
            min_y,
            scale: (SIZE - 2.0 * MARGIN) / span,
        }
    }

    fn tx(&self, x: f64) -> f64 {
        MARGIN + (x - self.min_x) * self.scale
    }

    fn ty(&self, y: f64) -> f64 {
        // Flip: SVG y grows downward.
        SIZE - MARGIN - (y - self.min_y) * self.scale
    }

    fn line(&mut self, ps: &PointSet, a: usize, b: usize, color: &str, dashed: bool) {
        let dash = if dashed { " stroke-dasharray=\"6 4\"" } else { "" };
        self.body.push_str(&format!(
            "<line x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"{color}\" stroke-width=\"1.6\"{dash}/>\n",
            self.tx(ps[a].x),
            self.ty(ps[a].y),
            self.tx(ps[b].x),
            self.ty(ps[b].y),
        ));
    }

    fn points(&mut self, ps: &PointSet) {
        for (i, p) in ps.points.iter().enumerate() {
            self.body.push_str(&format!(
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3.5\" fill=\"#222\"/>\n<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"11\" fill=\"#555\">{}</text>\n",
                self.tx(p.x),
                self.ty(p.y),
                self.tx(p.x) + 5.0,
                self.ty(p.y) - 5.0,
                i + 1,
            ));
        }
    }

    fn finish(self) -> String {
        format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{SIZE}\" height=\"{SIZE}\" viewBox=\"0 0 {SIZE} {SIZE}\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n{}</svg>\n",
            self.body
        )
    }
}

fn edge_key(a: usize, b: usize) -> (usize, usize) {
    (a.min(b), a.max(b))
}

fn triangle_edges(tris: &[[usize; 3]]) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    for t in tris {
        for (a, b) in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
            let k = edge_key(a, b);
            if !edges.contains(&k) {
                edges.push(k);
            }
        }
    }
    edges
}

fn cycle_edges(cycle: &[usize]) -> Vec<(usize, usize)> {
    let n = cycle.len();
    if n < 2 {
        return Vec::new();
    }
    (0..n).map(|k| edge_key(cycle[k], cycle[(k + 1) % n])).collect()
}

fn render_edges(
    ps: &PointSet,
    predicted: &[(usize, usize)],
    truth: &[(usize, usize)],
) -> String {
    let mut canvas = Canvas::new(ps);
    for &(a, b) in truth {
        if !predicted.contains(&(a, b)) {
            canvas.line(ps, a, b, BLUE, true); // missed
        }
    }
    for &(a, b) in predicted {
        let color = if truth.contains(&(a, b)) { BLUE } else { RED };
        canvas.line(ps, a, b, color, false);
    }
    canvas.points(ps);
    canvas.finish()
}

pub fn render_dt(ps: &PointSet, predicted: &[[usize; 3]], truth: &[TriangleIdx]) -> String {
    let truth_raw: Vec<[usize; 3]> = truth.iter().map(|t| t.indices()).collect();
    render_edges(ps, &triangle_edges(predicted), &triangle_edges(&truth_raw))
}

pub fn render_hull(ps: &PointSet, predicted: &[usize], truth: &[usize]) -> String {
    render_edges(ps, &cycle_edges(predicted), &cycle_edges(truth))
}

pub fn render_tsp(ps: &PointSet, predicted: &[usize], truth: &[usize]) -> String {
    render_edges(ps, &cycle_edges(predicted), &cycle_edges(truth))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn svg_marks_wrong_edges_red() {
        let ps = PointSet::from_pairs(&[(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]);
        let truth = vec![0usize, 1, 2, 3];
        let pred = vec![0usize, 2, 1, 3];
        let svg = render_tsp(&ps, &pred, &truth);
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains(RED), "crossing tour must produce red edges");
        assert!(svg.contains(BLUE));
        assert!(svg.ends_with("</svg>\n"));
    }

    #[test]
    fn svg_identical_prediction_is_all_blue() {
        let ps = PointSet::from_pairs(&[(0.0, 0.0), (1.0, 0.0), (0.5, 0.9)]);
        let tris = vec![TriangleIdx::new(0, 1, 2)];
        let svg = render_dt(&ps, &[[0, 1, 2]], &tris);
        assert!(!svg.contains(RED));
        assert!(svg.contains(BLUE));
    }
}
