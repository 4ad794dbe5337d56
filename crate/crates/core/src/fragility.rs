//! Line fragility: the hourly probability that a segment fails under a given
//! wind speed, with tree contact as an independent second failure mode.

use crate::network::NetworkGraph;
use crate::weather::WindField;
use rand::Rng;
use serde::Deserialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FragilityError {
    #[error("fragility curve needs v_min < v_max, got [{v_min}, {v_max}]")]
    BadSpeedBand { v_min: f64, v_max: f64 },
    #[error("fragility cap {0} must lie in (0, 1]")]
    BadCap(f64),
    #[error("fragility shape {0} must be positive")]
    BadShape(f64),
    #[error("tree exposure scale {0} must be non-negative")]
    BadAlpha(f64),
}

/// Capped logistic fragility curve. Below `v_min` the line never fails; at
/// and above `v_max` the hourly failure probability saturates at `p_cap`;
/// between, a logistic ramp centered on the band midpoint.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FragilityCurve {
    pub v_min: f64,
    pub v_max: f64,
    pub p_cap: f64,
    pub shape: f64,
}

impl FragilityCurve {
    /// Direct wind damage to poles and conductors.
    pub const DEFAULT_WIND: Self = Self {
        v_min: 10.0,
        v_max: 40.0,
        p_cap: 0.15,
        shape: 0.35,
    };
    /// Tree-contact mode: limbs start failing at lower speeds and saturate
    /// earlier and higher than direct wind damage.
    pub const DEFAULT_TREE: Self = Self {
        v_min: 8.0,
        v_max: 35.0,
        p_cap: 0.25,
        shape: 0.30,
    };

    pub fn validate(&self) -> Result<(), FragilityError> {
        if !(self.v_min.is_finite() && self.v_max.is_finite() && self.v_min < self.v_max) {
            return Err(FragilityError::BadSpeedBand {
                v_min: self.v_min,
                v_max: self.v_max,
            });
        }
        if !(self.p_cap > 0.0 && self.p_cap <= 1.0) {
            return Err(FragilityError::BadCap(self.p_cap));
        }
        if !(self.shape > 0.0 && self.shape.is_finite()) {
            return Err(FragilityError::BadShape(self.shape));
        }
        Ok(())
    }

    /// Hourly failure probability at wind speed `v`.
    pub fn probability(&self, v: f64) -> f64 {
        if v < self.v_min {
            0.0
        } else if v >= self.v_max {
            self.p_cap
        } else {
            let mid = (self.v_min + self.v_max) / 2.0;
            self.p_cap * logistic(self.shape * (v - mid))
        }
    }
}

#[inline]
fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Wind curve plus tree-contact curve scaled by canopy exposure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FragilityModel {
    pub wind: FragilityCurve,
    pub tree: FragilityCurve,
    /// Scales how much of the canopy over a span can actually strike it.
    pub alpha: f64,
}

impl FragilityModel {
    pub fn validate(&self) -> Result<(), FragilityError> {
        self.wind.validate()?;
        self.tree.validate()?;
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(FragilityError::BadAlpha(self.alpha));
        }
        Ok(())
    }

    /// Joint hourly failure probability for a span with canopy fraction
    /// `tree_cover`: the two modes are independent, so
    /// `p = 1 - (1 - p_wind)(1 - t * alpha * p_tree)`, with the tree term
    /// clamped into [0, 1].
    pub fn p_joint(&self, v: f64, tree_cover: f32) -> f64 {
        let p_wind = self.wind.probability(v);
        let p_tree = (tree_cover as f64 * self.alpha * self.tree.probability(v)).clamp(0.0, 1.0);
        1.0 - (1.0 - p_wind) * (1.0 - p_tree)
    }
}

impl Default for FragilityModel {
    fn default() -> Self {
        Self {
            wind: FragilityCurve::DEFAULT_WIND,
            tree: FragilityCurve::DEFAULT_TREE,
            alpha: 1.0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FragilityConfig {
    pub wind: FragilityCurve,
    pub tree_curve: FragilityCurve,
    pub tree_alpha: f64,
}

impl Default for FragilityConfig {
    fn default() -> Self {
        Self {
            wind: FragilityCurve::DEFAULT_WIND,
            tree_curve: FragilityCurve::DEFAULT_TREE,
            tree_alpha: 1.0,
        }
    }
}

impl FragilityConfig {
    pub fn model(&self) -> FragilityModel {
        FragilityModel {
            wind: self.wind,
            tree: self.tree_curve,
            alpha: self.tree_alpha,
        }
    }
}

/// Per-patch failure probabilities for one hour of wind, evaluated once so
/// the per-edge loop does three multiplies instead of two logistic calls.
pub struct HourlyFailureProbs {
    p_wind: Vec<f64>,
    p_tree_raw: Vec<f64>,
    alpha: f64,
}

impl HourlyFailureProbs {
    pub fn new(model: &FragilityModel, field: &WindField) -> Self {
        let p_wind = field.speeds.iter().map(|&v| model.wind.probability(v)).collect();
        let p_tree_raw = field.speeds.iter().map(|&v| model.tree.probability(v)).collect();
        Self {
            p_wind,
            p_tree_raw,
            alpha: model.alpha,
        }
    }

    #[inline]
    pub fn for_edge(&self, patch: u32, tree_cover: f32) -> f64 {
        let pw = self.p_wind[patch as usize];
        let pt = (tree_cover as f64 * self.alpha * self.p_tree_raw[patch as usize]).clamp(0.0, 1.0);
        1.0 - (1.0 - pw) * (1.0 - pt)
    }
}

/// Bernoulli-sample which intact edges fail this hour. Edges are visited in
/// ascending id order, one draw per intact edge, so the outcome is a pure
/// function of the RNG stream. Returns the newly failed edge ids, ascending.
pub fn sample_failures(
    graph: &NetworkGraph,
    model: &FragilityModel,
    field: &WindField,
    intact: &[bool],
    rng: &mut impl Rng,
) -> Vec<u32> {
    debug_assert_eq!(intact.len(), graph.edges.len());
    let probs = HourlyFailureProbs::new(model, field);
    let mut failed = Vec::new();
    for (eid, e) in graph.edges.iter().enumerate() {
        if !intact[eid] {
            continue;
        }
        let p = probs.for_edge(e.patch, e.tree_cover);
        if p > 0.0 && rng.gen_bool(p) {
            failed.push(eid as u32);
        }
    }
    failed
}
