//! Pareto front quality indicators for bi-objective maximization:
//! hypervolume, additive epsilon and R2.

use crate::error::{Error, Result};

/// A non-dominated set of (e, cvar) points, maximization sense, kept sorted
/// by e descending.
#[derive(Debug, Clone, PartialEq)]
pub struct Front {
    points: Vec<(f64, f64)>,
}

fn dominates(a: (f64, f64), b: (f64, f64)) -> bool {
    a.0 >= b.0 && a.1 >= b.1 && (a.0 > b.0 || a.1 > b.1)
}

impl Front {
    /// Keeps the maximal non-dominated subset of `points` (duplicates
    /// collapse to one) in canonical order.
    pub fn new(points: &[(f64, f64)]) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Indicator("empty front".into()));
        }
        if points.iter().any(|p| !p.0.is_finite() || !p.1.is_finite()) {
            return Err(Error::Indicator("non-finite front point".into()));
        }
        let mut kept: Vec<(f64, f64)> = Vec::new();
        for &p in points {
            if kept.iter().any(|&q| dominates(q, p) || q == p) {
                continue;
            }
            kept.retain(|&q| !dominates(p, q));
            kept.push(p);
        }
        kept.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.total_cmp(&b.1)));
        Ok(Front { points: kept })
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// 2-D maximization hypervolume against a reference point every front
/// point must dominate: a staircase sweep by descending e.
pub fn hypervolume(front: &Front, reference: (f64, f64)) -> Result<f64> {
    let mut volume = 0.0;
    let mut cvar_floor = reference.1;
    for &(e, cvar) in front.points() {
        if e <= reference.0 || cvar <= reference.1 {
            return Err(Error::Indicator(format!(
                "front point ({e}, {cvar}) does not dominate the reference {reference:?}"
            )));
        }
        // points come sorted by e descending, cvar strictly ascending
        volume += (e - reference.0) * (cvar - cvar_floor);
        cvar_floor = cvar;
    }
    Ok(volume)
}

/// Additive unary epsilon indicator (maximization): the smallest shift that
/// makes `approx` weakly dominate `reference`. Non-positive when `approx`
/// already covers the reference front.
pub fn epsilon_indicator(approx: &Front, reference: &Front) -> f64 {
    reference
        .points()
        .iter()
        .map(|&(re, rc)| {
            approx
                .points()
                .iter()
                .map(|&(ae, ac)| (re - ae).max(rc - ac))
                .fold(f64::INFINITY, f64::min)
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

/// 21 uniformly spaced bi-objective weight vectors (t, 1 - t).
pub fn default_weight_vectors() -> Vec<(f64, f64)> {
    (0..=20).map(|i| {
        let t = i as f64 / 20.0;
        (t, 1.0 - t)
    }).collect()
}

/// R2 indicator, weighted-Chebyshev maximization form; lower is better.
/// The ideal point must weakly dominate every front point.
pub fn r2_indicator(
    front: &Front,
    weight_vectors: &[(f64, f64)],
    ideal: (f64, f64),
) -> Result<f64> {
    if weight_vectors.is_empty() {
        return Err(Error::Indicator("no weight vectors".into()));
    }
    for &(w1, w2) in weight_vectors {
        if w1 < 0.0 || w2 < 0.0 || (w1 + w2 - 1.0).abs() > 1e-9 {
            return Err(Error::Indicator(format!(
                "malformed weight vector ({w1}, {w2})"
            )));
        }
    }
    let total: f64 = weight_vectors
        .iter()
        .map(|&(w1, w2)| {
            front
                .points()
                .iter()
                .map(|&(e, c)| (w1 * (ideal.0 - e)).max(w2 * (ideal.1 - c)))
                .fold(f64::INFINITY, f64::min)
        })
        .sum();
    Ok(total / weight_vectors.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn hypervolume_two_rectangles() {
        let front = Front::new(&[(1.0, 2.0), (2.0, 1.0)]).unwrap();
        assert_eq!(hypervolume(&front, (0.0, 0.0)).unwrap(), 3.0);
    }

    #[test]
    fn hypervolume_single_point() {
        let front = Front::new(&[(2.0, 3.0)]).unwrap();
        assert_eq!(hypervolume(&front, (0.0, 0.0)).unwrap(), 6.0);
    }

    #[test]
    fn hypervolume_ignores_dominated_points() {
        let a = Front::new(&[(2.0, 2.0)]).unwrap();
        let b = Front::new(&[(2.0, 2.0), (1.0, 1.0)]).unwrap();
        assert_eq!(
            hypervolume(&a, (0.0, 0.0)).unwrap(),
            hypervolume(&b, (0.0, 0.0)).unwrap()
        );
    }

    #[test]
    fn hypervolume_rejects_non_dominating_point() {
        let front = Front::new(&[(1.0, 1.0)]).unwrap();
        assert!(hypervolume(&front, (2.0, 0.0)).is_err());
    }

    #[test]
    fn hypervolume_monotone_under_insertion() {
        let base = Front::new(&[(2.0, 1.0), (1.0, 2.0)]).unwrap();
        let more = Front::new(&[(2.0, 1.0), (1.0, 2.0), (1.7, 1.7)]).unwrap();
        assert!(
            hypervolume(&more, (0.0, 0.0)).unwrap()
                >= hypervolume(&base, (0.0, 0.0)).unwrap()
        );
    }

    #[test]
    fn epsilon_self_is_zero() {
        let front = Front::new(&[(1.0, 3.0), (2.0, 2.0), (3.0, 1.0)]).unwrap();
        assert_eq!(epsilon_indicator(&front, &front), 0.0);
    }

    #[test]
    fn epsilon_shift_examples() {
        let approx = Front::new(&[(1.0, 1.0)]).unwrap();
        let reference = Front::new(&[(2.0, 2.0)]).unwrap();
        assert_eq!(epsilon_indicator(&approx, &reference), 1.0);

        let better = Front::new(&[(3.0, 3.0)]).unwrap();
        assert_eq!(epsilon_indicator(&better, &reference), -1.0);
    }

    #[test]
    fn r2_front_containing_ideal_is_zero() {
        let front = Front::new(&[(1.0, 1.0)]).unwrap();
        let r2 = r2_indicator(&front, &default_weight_vectors(), (1.0, 1.0)).unwrap();
        assert_eq!(r2, 0.0);
    }

    #[test]
    fn r2_hand_examples() {
        let vectors = vec![(1.0, 0.0), (0.0, 1.0)];
        let single = Front::new(&[(0.0, 0.0)]).unwrap();
        assert_abs_diff_eq!(
            r2_indicator(&single, &vectors, (1.0, 1.0)).unwrap(),
            1.0,
            epsilon = 1e-12
        );
        let corners = Front::new(&[(1.0, 0.0), (0.0, 1.0)]).unwrap();
        assert_eq!(r2_indicator(&corners, &vectors, (1.0, 1.0)).unwrap(), 0.0);
    }

    #[test]
    fn r2_non_increasing_under_insertion() {
        let ideal = (3.0, 3.0);
        let vectors = default_weight_vectors();
        let base = Front::new(&[(2.0, 1.0), (1.0, 2.0)]).unwrap();
        let more = Front::new(&[(2.0, 1.0), (1.0, 2.0), (1.8, 1.8)]).unwrap();
        assert!(
            r2_indicator(&more, &vectors, ideal).unwrap()
                <= r2_indicator(&base, &vectors, ideal).unwrap() + 1e-12
        );
    }

    #[test]
    fn r2_rejects_malformed_vectors() {
        let front = Front::new(&[(1.0, 1.0)]).unwrap();
        assert!(r2_indicator(&front, &[(0.7, 0.7)], (2.0, 2.0)).is_err());
    }

    #[test]
    fn front_keeps_collinear_points() {
        let front = Front::new(&[(1.0, 3.0), (2.0, 2.0), (3.0, 1.0)]).unwrap();
        assert_eq!(front.len(), 3);
    }

    #[test]
    fn front_filters_to_non_dominated() {
        let front = Front::new(&[(1.0, 2.0), (2.0, 1.0), (0.0, 0.0)]).unwrap();
        assert_eq!(front.points(), &[(2.0, 1.0), (1.0, 2.0)]);
    }

    #[test]
    fn hypervolume_matches_monte_carlo() {
        use rand::Rng;
        use rand_chacha::rand_core::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2024);
        for _ in 0..5 {
            let raw: Vec<(f64, f64)> = (0..8)
                .map(|_| (rng.gen_range(0.5..4.0), rng.gen_range(0.5..4.0)))
                .collect();
            let front = Front::new(&raw).unwrap();
            let hv = hypervolume(&front, (0.0, 0.0)).unwrap();
            let (max_e, max_c) = front.points().iter().fold((0.0f64, 0.0f64), |m, p| {
                (m.0.max(p.0), m.1.max(p.1))
            });
            let samples = 200_000;
            let mut hits = 0u32;
            for _ in 0..samples {
                let p = (rng.gen_range(0.0..max_e), rng.gen_range(0.0..max_c));
                if front.points().iter().any(|&q| q.0 >= p.0 && q.1 >= p.1) {
                    hits += 1;
                }
            }
            let estimate = max_e * max_c * hits as f64 / samples as f64;
            assert!(
                (estimate - hv).abs() / hv < 0.02,
                "MC {estimate} vs exact {hv}"
            );
        }
    }
}
