//! Andrew's monotone chain convex hull.

use super::{cross, GeometryError, PointSet, EPS_GEO};

/// Hull vertex indices in CCW order, starting at the lexicographically
/// smallest point. Collinear boundary points are dropped: every returned
/// vertex is an extreme point.
pub fn convex_hull(ps: &PointSet) -> Result<Vec<usize>, GeometryError> {
    let m = ps.len();
    if m < 3 {
        return Err(GeometryError::TooFewPoints { got: m, need: 3 });
    }

    let mut idx: Vec<usize> = (0..m).collect();
    idx.sort_by(|&i, &j| {
        let (p, q) = (ps[i], ps[j]);
        p.x.partial_cmp(&q.x).unwrap().then(p.y.partial_cmp(&q.y).unwrap())
    });

    let mut lower: Vec<usize> = Vec::new();
    for &i in &idx {
        while lower.len() >= 2 {
            let a = lower[lower.len() - 2];
            let b = lower[lower.len() - 1];
            if cross(ps[a], ps[b], ps[i]) <= EPS_GEO {
                lower.pop();
            } else {
                break;
            }
        }
        lower.push(i);
    }

    let mut upper: Vec<usize> = Vec::new();
    for &i in idx.iter().rev() {
        while upper.len() >= 2 {
            let a = upper[upper.len() - 2];
            let b = upper[upper.len() - 1];
            if cross(ps[a], ps[b], ps[i]) <= EPS_GEO {
                upper.pop();
            } else {
                break;
            }
        }
        upper.push(i);
    }

    // Chain endpoints are shared; drop them from one side.
    lower.pop();
    upper.pop();
    if lower.len() + upper.len() < 3 {
        return Err(GeometryError::AllCollinear);
    }
    lower.extend(upper);
    Ok(lower)
}

#[cfg(test)]
mod tests {
    use super::super::{orient2d, Orientation, Point};
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    /// Brute-force extreme-point oracle: a point is on the hull iff no
    /// triangle of the other points contains it (Caratheodory).
    fn extreme_points_bruteforce(ps: &PointSet) -> Vec<usize> {
        let m = ps.len();
        let inside_triangle = |p: Point, a: Point, b: Point, c: Point| {
            let d1 = cross(a, b, p);
            let d2 = cross(b, c, p);
            let d3 = cross(c, a, p);
            let has_neg = d1 < -EPS_GEO || d2 < -EPS_GEO || d3 < -EPS_GEO;
            let has_pos = d1 > EPS_GEO || d2 > EPS_GEO || d3 > EPS_GEO;
            !(has_neg && has_pos)
        };
        (0..m)
            .filter(|&i| {
                let p = ps[i];
                let others: Vec<usize> = (0..m).filter(|&j| j != i).collect();
                let n = others.len();
                for x in 0..n {
                    for y in (x + 1)..n {
                        for z in (y + 1)..n {
                            let (a, b, c) = (ps[others[x]], ps[others[y]], ps[others[z]]);
                            if orient2d(a, b, c) != Orientation::Collinear
                                && inside_triangle(p, a, b, c)
                            {
                                return false;
                            }
                        }
                    }
                }
                true
            })
            .collect()
    }

    #[test]
    fn square_with_center() {
        let ps = PointSet::from_pairs(&[(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0), (0.5, 0.5)]);
        let hull = convex_hull(&ps).unwrap();
        assert_eq!(hull, vec![0, 1, 2, 3]);
    }

    #[test]
    fn triangle_is_its_own_hull() {
        let ps = PointSet::from_pairs(&[(0.0, 0.0), (1.0, 0.0), (0.4, 0.9)]);
        assert_eq!(convex_hull(&ps).unwrap(), vec![0, 1, 2]);
    }

    #[test]
    fn collinear_fails() {
        let ps = PointSet::from_pairs(&[(0.0, 0.0), (0.5, 0.5), (1.0, 1.0), (0.25, 0.25)]);
        assert_eq!(convex_hull(&ps), Err(GeometryError::AllCollinear));
    }

    #[test]
    fn matches_bruteforce_on_random_sets() {
        let mut rng = StdRng::seed_from_u64(7);
        for _ in 0..40 {
            let m = rng.gen_range(3..=10);
            let ps = PointSet::new(
                (0..m)
                    .map(|_| Point::new(rng.gen::<f64>(), rng.gen::<f64>()))
                    .collect(),
            );
            let hull = convex_hull(&ps).unwrap();
            let mut sorted = hull.clone();
            sorted.sort_unstable();
            let mut expect = extreme_points_bruteforce(&ps);
            expect.sort_unstable();
            assert_eq!(sorted, expect);

            // CCW orientation of every consecutive triple, starting at lex min.
            let h = hull.len();
            for k in 0..h {
                let (a, b, c) = (hull[k], hull[(k + 1) % h], hull[(k + 2) % h]);
                assert_eq!(orient2d(ps[a], ps[b], ps[c]), Orientation::Ccw);
            }
            let lex_min = (0..m)
                .min_by(|&i, &j| {
                    let (p, q) = (ps[i], ps[j]);
                    p.x.partial_cmp(&q.x).unwrap().then(p.y.partial_cmp(&q.y).unwrap())
                })
                .unwrap();
            assert_eq!(hull[0], lex_min);
        }
    }
}
