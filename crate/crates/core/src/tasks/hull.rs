//! Convex Hull instance generation: points uniform in the unit square,
//! quantized to three decimals, presented sorted by x; the answer is the
//! hull vertex sequence counterclockwise from the smallest-x point, given
//! as pointer positions into the presented list.

use super::{AnswerStep, InstanceInfo, Query, RawProblem, TaskInstance, TaskKind, GENERATION_RETRIES};
use crate::error::{DncError, Result};
use crate::rng;
use rand_chacha::ChaCha8Rng;

pub(super) fn generate(
    points_range: (usize, usize),
    lesson_id: usize,
    seed: u64,
    rng: &mut ChaCha8Rng,
) -> Result<TaskInstance> {
    let n = rng::uniform_range(rng, points_range.0, points_range.1);
    for _ in 0..GENERATION_RETRIES {
        let mut pts: Vec<(f64, f64)> = (0..n)
            .map(|_| (quantize(rng::uniform(rng)), quantize(rng::uniform(rng))))
            .collect();
        // Ties on x broken by y; the first point is the hull start.
        pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        if pts.windows(2).any(|w| w[0] == w[1]) {
            continue; // duplicate after quantization
        }
        let hull = convex_hull_positions(&pts);
        if hull.len() < 3 {
            continue; // fully collinear draw
        }
        // Resample when a non-vertex point sits exactly on the hull
        // boundary; targets must leave every non-hull point strictly inside.
        if !non_hull_points_strictly_inside(&pts, &hull) {
            continue;
        }
        let mut target: Vec<AnswerStep> = hull.iter().map(|&i| AnswerStep::Point(i as u16 + 1)).collect();
        target.push(AnswerStep::Stop);
        let meta = InstanceInfo {
            n,
            nodes: None,
            edges: None,
            seed,
            lesson: lesson_id,
        };
        return Ok(TaskInstance {
            kind: TaskKind::ConvexHull,
            seed,
            lesson: lesson_id,
            raw: RawProblem::Points { points: pts },
            query: Query::None,
            target,
            meta,
        });
    }
    Err(DncError::Generation {
        retries: GENERATION_RETRIES,
        reason: format!("no non-degenerate point set of size {n}"),
    })
}

fn quantize(v: f64) -> f64 {
    (v * 1000.0).round() / 1000.0
}

/// z-component of (a−o) × (b−o): positive for a counterclockwise turn.
pub fn cross(o: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Monotone chain over points already sorted by (x, y). Returns 0-based
/// indices of hull vertices, counterclockwise, starting at the smallest-x
/// point (ties by y). Strict turns only: collinear boundary points are
/// excluded.
pub fn convex_hull_positions(pts: &[(f64, f64)]) -> Vec<usize> {
    let n = pts.len();
    if n < 3 {
        return (0..n).collect();
    }
    let build = |iter: &mut dyn Iterator<Item = usize>| -> Vec<usize> {
        let mut chain: Vec<usize> = Vec::new();
        for i in iter {
            while chain.len() >= 2
                && cross(pts[chain[chain.len() - 2]], pts[chain[chain.len() - 1]], pts[i]) <= 0.0
            {
                chain.pop();
            }
            chain.push(i);
        }
        chain
    };
    let mut lower = build(&mut (0..n));
    let mut upper = build(&mut (0..n).rev());
    lower.pop();
    upper.pop();
    lower.append(&mut upper);
    lower
}

fn non_hull_points_strictly_inside(pts: &[(f64, f64)], hull: &[usize]) -> bool {
    let on_hull: std::collections::BTreeSet<usize> = hull.iter().copied().collect();
    for (i, &p) in pts.iter().enumerate() {
        if on_hull.contains(&i) {
            continue;
        }
        for w in 0..hull.len() {
            let a = pts[hull[w]];
            let b = pts[hull[(w + 1) % hull.len()]];
            if cross(a, b, p) <= 0.0 {
                return false;
            }
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{RootSeed, Stream};
    use crate::tasks::LessonSpec;

    #[test]
    fn square_with_interior_point() {
        let mut pts = vec![(0.1, 0.1), (0.9, 0.1), (0.9, 0.9), (0.1, 0.9), (0.5, 0.5)];
        pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        // Sorted: (0.1,0.1) (0.1,0.9) (0.5,0.5) (0.9,0.1) (0.9,0.9)
        let hull = convex_hull_positions(&pts);
        assert_eq!(hull.len(), 4);
        assert_eq!(pts[hull[0]], (0.1, 0.1), "starts at smallest (x, y)");
        // Counterclockwise: bottom edge first.
        assert_eq!(pts[hull[1]], (0.9, 0.1));
        assert_eq!(pts[hull[2]], (0.9, 0.9));
        assert_eq!(pts[hull[3]], (0.1, 0.9));
        assert!(!hull.contains(&2), "interior point excluded");
    }

    #[test]
    fn collinear_boundary_point_excluded() {
        let pts = vec![(0.0, 0.0), (0.5, 0.0), (0.5, 0.5), (1.0, 0.0)];
        // (0.5, 0.0) lies on the bottom edge.
        let hull = convex_hull_positions(&pts);
        assert_eq!(hull, vec![0, 3, 2]);
    }

    #[test]
    fn generated_instances_are_clean() {
        let lesson = LessonSpec::ConvexHull { points: (5, 20) };
        let mut rng = RootSeed(17).stream(Stream::Dataset(5));
        for i in 0..100 {
            let inst = crate::tasks::generate(&lesson, 1, i, &mut rng, false).unwrap();
            let crate::tasks::RawProblem::Points { points } = &inst.raw else { panic!() };
            // Presented sorted ascending by x (ties by y).
            for w in points.windows(2) {
                assert!(w[0] <= w[1]);
            }
            // Every non-hull point strictly inside.
            let hull: Vec<usize> = inst
                .target
                .iter()
                .filter_map(|s| match s {
                    crate::tasks::AnswerStep::Point(p) => Some(*p as usize - 1),
                    _ => None,
                })
                .collect();
            assert!(hull.len() >= 3);
            assert!(non_hull_points_strictly_inside(points, &hull));
        }
    }
}
