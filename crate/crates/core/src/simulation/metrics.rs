//! Resilience metrics: the trapezoid score of a served-fraction curve and the
//! gust-weighted aggregation of per-episode scores.

/// Trapezoid-rule average of a served-fraction curve sampled at integer hours
/// `0..=H`: `(1/H) * Σ (P[t-1] + P[t]) / 2`. A curve pinned at 1.0 scores
/// exactly 1.
pub fn trapezoid_resilience(curve: &[f64]) -> f64 {
    assert!(curve.len() >= 2, "curve needs at least the endpoints");
    let h = curve.len() - 1;
    let interior: f64 = curve[1..h].iter().sum();
    ((curve[0] + curve[h]) / 2.0 + interior) / h as f64
}

/// Combine per-episode resilience scores of one area into its headline value:
/// gust episodes carry weight `lambda`, the rest `1 - lambda`, each averaged
/// within their population. If either population is empty its term is dropped
/// and the other carries full weight, so the result is always a weighted mean
/// of observed scores.
pub fn aggregate_resilience(scores: &[f64], gust: &[bool], lambda: f64) -> f64 {
    assert_eq!(scores.len(), gust.len());
    assert!(!scores.is_empty(), "cannot aggregate zero episodes");
    assert!((0.0..=1.0).contains(&lambda));
    let mut sum_g = 0.0;
    let mut n_g = 0u64;
    let mut sum_n = 0.0;
    let mut n_n = 0u64;
    for (&r, &g) in scores.iter().zip(gust) {
        if g {
            sum_g += r;
            n_g += 1;
        } else {
            sum_n += r;
            n_n += 1;
        }
    }
    match (n_g, n_n) {
        (0, _) => sum_n / n_n as f64,
        (_, 0) => sum_g / n_g as f64,
        _ => lambda * (sum_g / n_g as f64) + (1.0 - lambda) * (sum_n / n_n as f64),
    }
}

/// Streaming form of [`aggregate_resilience`] for convergence traces.
#[derive(Debug, Clone, Default)]
pub struct RunningAggregate {
    sum_gust: f64,
    n_gust: u64,
    sum_other: f64,
    n_other: u64,
}

impl RunningAggregate {
    pub fn push(&mut self, score: f64, gust: bool) {
        if gust {
            self.sum_gust += score;
            self.n_gust += 1;
        } else {
            self.sum_other += score;
            self.n_other += 1;
        }
    }

    pub fn n_gust(&self) -> u64 {
        self.n_gust
    }

    pub fn n_episodes(&self) -> u64 {
        self.n_gust + self.n_other
    }

    pub fn value(&self, lambda: f64) -> f64 {
        match (self.n_gust, self.n_other) {
            (0, 0) => panic!("cannot aggregate zero episodes"),
            (0, n) => self.sum_other / n as f64,
            (g, 0) => self.sum_gust / g as f64,
            (g, n) => {
                lambda * (self.sum_gust / g as f64) + (1.0 - lambda) * (self.sum_other / n as f64)
            }
        }
    }
}
