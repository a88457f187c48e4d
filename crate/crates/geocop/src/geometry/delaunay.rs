//! Incremental Delaunay triangulation.
//!
//! Points are inserted in lexicographic order, each new point connecting to
//! the visible part of the running convex hull, and edges are then flipped
//! until every pair of adjacent triangles passes the (strict) incircle test.
//! The strict test leaves cocircular quads on whichever diagonal the
//! insertion order produced, so ties break deterministically.

use super::{
    cross, in_circumcircle, orient2d, GeometryError, Orientation, PointSet, Position, TriangleIdx,
};

/// Triangulate the convex hull of `ps`.
///
/// Returns canonical index triangles sorted ascending. O(m^2) construction
/// plus O(m^2) flip scans; fine at the point counts this project uses.
pub fn delaunay_triangulate(ps: &PointSet) -> Result<Vec<TriangleIdx>, GeometryError> {
    let m = ps.len();
    if m < 3 {
        return Err(GeometryError::TooFewPoints { got: m, need: 3 });
    }
    if ps.has_duplicates() {
        return Err(GeometryError::DuplicatePoints);
    }

    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| {
        let (p, q) = (ps[i], ps[j]);
        p.x.partial_cmp(&q.x).unwrap().then(p.y.partial_cmp(&q.y).unwrap())
    });

    // Triangles stay CCW throughout. `hull` is the CCW boundary of what has
    // been triangulated so far and keeps collinear boundary vertices, so
    // later insertions never skip over them.
    let mut tris: Vec<[usize; 3]> = Vec::new();
    let mut hull: Vec<usize> = Vec::new();
    // Lexicographic prefix of points that are still collinear.
    let mut chain: Vec<usize> = vec![order[0], order[1]];

    for &pi in &order[2..] {
        if tris.is_empty() {
            match chain_orientation(ps, &chain, pi) {
                Orientation::Collinear => {
                    chain.push(pi);
                    continue;
                }
                Orientation::Ccw => {
                    for w in chain.windows(2) {
                        tris.push([w[0], w[1], pi]);
                    }
                    hull = chain.clone();
                    hull.push(pi);
                }
                Orientation::Cw => {
                    for w in chain.windows(2) {
                        tris.push([w[1], w[0], pi]);
                    }
                    hull = chain.iter().rev().cloned().collect();
                    hull.push(pi);
                }
            }
            continue;
        }

        insert_outside(ps, &mut tris, &mut hull, pi);
    }

    if tris.is_empty() {
        return Err(GeometryError::AllCollinear);
    }

    lawson_flips(ps, &mut tris);

    let mut out: Vec<TriangleIdx> = tris
        .into_iter()
        .map(|t| TriangleIdx::new(t[0], t[1], t[2]))
        .collect();
    out.sort_unstable();
    Ok(out)
}

/// Orientation of `p` against the line carried by the collinear chain.
fn chain_orientation(ps: &PointSet, chain: &[usize], p: usize) -> Orientation {
    orient2d(ps[chain[0]], ps[*chain.last().unwrap()], ps[p])
}

/// Connects a new point (lexicographically beyond everything triangulated so
/// far, hence outside or on the boundary line of the hull) to the strictly
/// visible hull edges and splices it into the hull.
fn insert_outside(ps: &PointSet, tris: &mut Vec<[usize; 3]>, hull: &mut Vec<usize>, pi: usize) {
    let h = hull.len();
    let p = ps[pi];
    let visible: Vec<bool> = (0..h)
        .map(|k| orient2d(ps[hull[k]], ps[hull[(k + 1) % h]], p) == Orientation::Cw)
        .collect();
    debug_assert!(visible.iter().any(|&v| v), "new point sees no hull edge");

    // Rotate so the visible run does not wrap, then splice.
    let start = (0..h)
        .find(|&k| visible[k] && !visible[(k + h - 1) % h])
        .expect("visible edges form one contiguous run");
    let mut run_len = 0;
    while visible[(start + run_len) % h] {
        run_len += 1;
    }
    for k in 0..run_len {
        let u = hull[(start + k) % h];
        let v = hull[(start + k + 1) % h];
        tris.push([v, u, pi]);
    }

    let mut new_hull = Vec::with_capacity(h + 2 - run_len);
    // Keep start vertex, insert p, continue at the end of the run.
    let mut k = (start + run_len) % h;
    new_hull.push(hull[start]);
    new_hull.push(pi);
    while k != start {
        new_hull.push(hull[k]);
        k = (k + 1) % h;
    }
    *hull = new_hull;
}

/// Flips edges until every adjacent pair satisfies the strict empty-
/// circumcircle condition.
fn lawson_flips(ps: &PointSet, tris: &mut [[usize; 3]]) {
    let budget = 100 * tris.len() * tris.len() + 1000;
    let mut flips = 0;
    loop {
        let mut flipped = false;
        'scan: for t1 in 0..tris.len() {
            for t2 in (t1 + 1)..tris.len() {
                if let Some((u, v)) = shared_edge(tris[t1], tris[t2]) {
                    let a = opposite(tris[t1], u, v);
                    let b = opposite(tris[t2], u, v);
                    let inside = in_circumcircle(ps[u], ps[v], ps[a], ps[b])
                        .expect("triangulation holds no degenerate triangles");
                    if inside != Position::Inside {
                        continue;
                    }
                    // The new diagonal must properly cross the old one.
                    if !segments_cross(ps, a, b, u, v) {
                        continue;
                    }
                    tris[t1] = orient_ccw(ps, [u, a, b]);
                    tris[t2] = orient_ccw(ps, [v, b, a]);
                    flipped = true;
                    flips += 1;
                    assert!(flips <= budget, "edge flipping exceeded its budget");
                    break 'scan;
                }
            }
        }
        if !flipped {
            return;
        }
    }
}

fn shared_edge(t1: [usize; 3], t2: [usize; 3]) -> Option<(usize, usize)> {
    let mut common = [0usize; 3];
    let mut n = 0;
    for &v in &t1 {
        if t2.contains(&v) {
            if n == 2 {
                return None; // duplicate triangle; nothing sane to flip
            }
            common[n] = v;
            n += 1;
        }
    }
    (n == 2).then_some((common[0], common[1]))
}

fn opposite(t: [usize; 3], u: usize, v: usize) -> usize {
    *t.iter().find(|&&w| w != u && w != v).unwrap()
}

fn orient_ccw(ps: &PointSet, t: [usize; 3]) -> [usize; 3] {
    if cross(ps[t[0]], ps[t[1]], ps[t[2]]) < 0.0 {
        [t[0], t[2], t[1]]
    } else {
        t
    }
}

fn segments_cross(ps: &PointSet, a: usize, b: usize, u: usize, v: usize) -> bool {
    let strict = |x, y, z| matches!(orient2d(x, y, z), Orientation::Ccw | Orientation::Cw);
    strict(ps[a], ps[b], ps[u])
        && strict(ps[a], ps[b], ps[v])
        && orient2d(ps[a], ps[b], ps[u]) != orient2d(ps[a], ps[b], ps[v])
        && strict(ps[u], ps[v], ps[a])
        && strict(ps[u], ps[v], ps[b])
        && orient2d(ps[u], ps[v], ps[a]) != orient2d(ps[u], ps[v], ps[b])
}

#[cfg(test)]
mod tests {
    use super::super::{convex_hull, in_circumcircle, GeometryError, Point, Position};
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    /// Every input point must be outside (or on) the circumcircle of every
    /// triangle it is not a vertex of.
    fn assert_delaunay(ps: &PointSet, tris: &[TriangleIdx]) {
        for t in tris {
            let [a, b, c] = t.indices();
            for (qi, &q) in ps.points.iter().enumerate() {
                if t.contains(qi) {
                    continue;
                }
                let pos = in_circumcircle(ps[a], ps[b], ps[c], q).unwrap();
                assert_ne!(pos, Position::Inside, "point {qi} inside circumcircle of {t:?}");
            }
        }
    }

    #[test]
    fn three_points_single_triangle() {
        let ps = PointSet::from_pairs(&[(0.0, 0.0), (1.0, 0.0), (0.3, 0.8)]);
        let tris = delaunay_triangulate(&ps).unwrap();
        assert_eq!(tris, vec![TriangleIdx::new(0, 1, 2)]);
    }

    #[test]
    fn four_point_kite_matches_incircle_oracle() {
        // Both diagonals triangulate this quad; only one passes the incircle
        // test. The oracle below derives the expected diagonal exhaustively.
        let ps = PointSet::from_pairs(&[(0.0, 0.0), (1.0, 0.0), (0.9, 0.9), (0.0, 1.0)]);
        let tris = delaunay_triangulate(&ps).unwrap();

        let diag_02 = vec![TriangleIdx::new(0, 1, 2), TriangleIdx::new(0, 2, 3)];
        let diag_13 = vec![TriangleIdx::new(0, 1, 3), TriangleIdx::new(1, 2, 3)];
        let valid = |cand: &[TriangleIdx]| {
            cand.iter().all(|t| {
                let [a, b, c] = t.indices();
                (0..4).filter(|i| !t.contains(*i)).all(|q| {
                    in_circumcircle(ps[a], ps[b], ps[c], ps[q]).unwrap() != Position::Inside
                })
            })
        };
        assert!(valid(&diag_02));
        assert!(!valid(&diag_13));
        assert_eq!(tris, diag_02);
    }

    #[test]
    fn cocircular_square_is_deterministic() {
        let ps = PointSet::from_pairs(&[(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]);
        let tris = delaunay_triangulate(&ps).unwrap();
        assert_eq!(tris.len(), 2);
        // Non-strict condition holds for whichever diagonal was picked.
        assert_delaunay(&ps, &tris);
        // Same input, same output.
        assert_eq!(tris, delaunay_triangulate(&ps).unwrap());
    }

    #[test]
    fn collinear_prefix_is_handled() {
        // First three points share a vertical line.
        let ps = PointSet::from_pairs(&[(0.0, 0.0), (0.0, 0.5), (0.0, 1.0), (1.0, 0.4)]);
        let tris = delaunay_triangulate(&ps).unwrap();
        assert_eq!(tris.len(), 2);
        assert_delaunay(&ps, &tris);
        assert!(tris.contains(&TriangleIdx::new(0, 1, 3)));
        assert!(tris.contains(&TriangleIdx::new(1, 2, 3)));
    }

    #[test]
    fn error_cases() {
        let two = PointSet::from_pairs(&[(0.0, 0.0), (1.0, 0.0)]);
        assert!(matches!(
            delaunay_triangulate(&two),
            Err(GeometryError::TooFewPoints { .. })
        ));
        let line = PointSet::from_pairs(&[(0.0, 0.0), (0.5, 0.5), (1.0, 1.0)]);
        assert_eq!(delaunay_triangulate(&line), Err(GeometryError::AllCollinear));
        let dup = PointSet::from_pairs(&[(0.0, 0.0), (1.0, 0.0), (1.0, 0.0), (0.0, 1.0)]);
        assert_eq!(delaunay_triangulate(&dup), Err(GeometryError::DuplicatePoints));
    }

    #[test]
    fn random_sets_satisfy_delaunay_and_count() {
        let mut rng = StdRng::seed_from_u64(42);
        for _ in 0..50 {
            let m = rng.gen_range(3..=12);
            let ps = PointSet::new(
                (0..m)
                    .map(|_| Point::new(rng.gen::<f64>(), rng.gen::<f64>()))
                    .collect(),
            );
            let tris = delaunay_triangulate(&ps).unwrap();
            assert_delaunay(&ps, &tris);
            let h = convex_hull(&ps).unwrap().len();
            assert_eq!(tris.len(), 2 * m - 2 - h, "triangle count formula, m={m} h={h}");
        }
    }
}
