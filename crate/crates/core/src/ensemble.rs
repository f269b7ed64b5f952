//! Weighted-bagging ensemble over per-stage surrogates, and the
//! correlation-driven weight update.
//!
//! The ensemble posterior treats members as independent:
//! `mean = sum c_i mu_i`, `variance = sum c_i^2 sigma_i^2`.
//!
//! Each weight update correlates every member's predictions on the
//! full-resource configurations with their observed losses, clips negative
//! correlations to zero, squares and renormalizes (amplification), then blends
//! with the previous weights: `c_next = rho * c_prev + (1 - rho) * delta`.

use serde::{Deserialize, Serialize};

use crate::error::{HoistError, Result};
use crate::space::ConfigSpace;
use crate::store::EvaluationStore;
use crate::surrogate::{ForestModel, PosteriorPrediction, Surrogate};

const SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightVector {
    weights: Vec<f64>,
    iteration: u64,
}

impl WeightVector {
    /// `1/K` everywhere.
    pub fn uniform(k: usize) -> Self {
        assert!(k >= 1, "weight vector needs at least one member");
        WeightVector {
            weights: vec![1.0 / k as f64; k],
            iteration: 0,
        }
    }

    pub fn new(weights: Vec<f64>, iteration: u64) -> Result<Self> {
        if weights.is_empty() {
            return Err(HoistError::InvalidOptions("empty weight vector".into()));
        }
        if weights.iter().any(|w| !(0.0..=1.0).contains(w)) {
            return Err(HoistError::InvalidOptions(format!(
                "weights must lie in [0, 1]: {weights:?}"
            )));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(HoistError::InvalidOptions(format!(
                "weights must sum to 1, got {sum}"
            )));
        }
        Ok(WeightVector { weights, iteration })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// `f_global = sum c_i f_i` over the members that are fitted.
#[derive(Debug, Clone)]
pub struct EnsembleSurrogate<M = ForestModel> {
    members: Vec<Option<M>>,
    weights: WeightVector,
}

impl<M: Surrogate> EnsembleSurrogate<M> {
    pub fn new(members: Vec<Option<M>>, weights: WeightVector) -> Result<Self> {
        if members.len() != weights.len() {
            return Err(HoistError::InvalidOptions(format!(
                "{} members but {} weights",
                members.len(),
                weights.len()
            )));
        }
        Ok(EnsembleSurrogate { members, weights })
    }

    pub fn members(&self) -> &[Option<M>] {
        &self.members
    }

    pub fn into_members(self) -> Vec<Option<M>> {
        self.members
    }

    pub fn weights(&self) -> &WeightVector {
        &self.weights
    }

    pub fn active_mask(&self) -> Vec<bool> {
        self.members.iter().map(Option::is_some).collect()
    }

    pub fn is_usable(&self) -> bool {
        self.members.iter().any(Option::is_some)
    }

    /// Stored weights restricted to active members and rescaled to sum to 1.
    /// If every active member carries zero weight, they share it equally.
    pub fn effective_weights(&self) -> Result<Vec<f64>> {
        let active = self.active_mask();
        let n_active = active.iter().filter(|a| **a).count();
        if n_active == 0 {
            return Err(HoistError::EnsembleUnusable);
        }
        let mass: f64 = self
            .weights
            .weights()
            .iter()
            .zip(&active)
            .filter(|(_, a)| **a)
            .map(|(w, _)| w)
            .sum();
        Ok(self
            .weights
            .weights()
            .iter()
            .zip(&active)
            .map(|(w, a)| match (a, mass > 0.0) {
                (false, _) => 0.0,
                (true, true) => w / mass,
                (true, false) => 1.0 / n_active as f64,
            })
            .collect())
    }
}

impl<M: Surrogate> Surrogate for EnsembleSurrogate<M> {
    fn predict_encoded(&self, x: &[f64]) -> Result<PosteriorPrediction> {
        let weights = self.effective_weights()?;
        let mut mean = 0.0;
        let mut variance = 0.0;
        for (member, c) in self.members.iter().zip(weights) {
            if let Some(m) = member {
                let p = m.predict_encoded(x)?;
                mean += c * p.mean;
                variance += c * c * p.variance;
            }
        }
        Ok(PosteriorPrediction { mean, variance })
    }
}

/// `(v - min) / (max - min)`; a constant input maps to all zeros.
pub fn min_max_normalize(values: &[f64]) -> Vec<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if values.is_empty() || lo == hi {
        return vec![0.0; values.len()];
    }
    values.iter().map(|v| (v - lo) / (hi - lo)).collect()
}

/// Pearson correlation; 0 when either side is constant.
pub fn pearson_correlation(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(HoistError::Correlation(format!(
            "length mismatch: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if a.len() < 2 {
        return Err(HoistError::Correlation(format!(
            "need at least 2 points, got {}",
            a.len()
        )));
    }
    let constant = |v: &[f64]| v.iter().all(|x| *x == v[0]);
    if constant(a) || constant(b) {
        return Ok(0.0);
    }
    let n = a.len() as f64;
    let mean_a = a.iter().sum::<f64>() / n;
    let mean_b = b.iter().sum::<f64>() / n;
    let (mut cov, mut var_a, mut var_b) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - mean_a, y - mean_b);
        cov += dx * dy;
        var_a += dx * dx;
        var_b += dy * dy;
    }
    if var_a == 0.0 || var_b == 0.0 {
        return Ok(0.0);
    }
    Ok((cov / (var_a.sqrt() * var_b.sqrt())).clamp(-1.0, 1.0))
}

/// Clip negatives to zero, then square and divide by the sum of squares.
/// Returns `None` when nothing survives the clip.
pub fn amplify(raw: &[f64]) -> Option<Vec<f64>> {
    let squares: Vec<f64> = raw.iter().map(|d| d.max(0.0).powi(2)).collect();
    let total: f64 = squares.iter().sum();
    if total > 0.0 {
        Some(squares.iter().map(|s| s / total).collect())
    } else {
        None
    }
}

/// `rho * c_prev + (1 - rho) * delta`.
pub fn smooth_update(c_prev: &WeightVector, delta: &[f64], rho: f64) -> WeightVector {
    WeightVector {
        weights: c_prev
            .weights()
            .iter()
            .zip(delta)
            .map(|(c, d)| (rho * c + (1.0 - rho) * d).clamp(0.0, 1.0))
            .collect(),
        iteration: c_prev.iteration() + 1,
    }
}

/// Outcome of one weight-learning step.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightUpdate {
    pub weights: WeightVector,
    /// Correlation per member before clipping; 0 for inactive members.
    pub delta_raw: Vec<f64>,
    /// Amplified vector used in the blend; `None` when it vanished and
    /// `c_prev` was kept.
    pub delta: Option<Vec<f64>>,
}

/// One step of the weight-learning rule against the full-resource dataset.
pub fn learn_weights<M: Surrogate>(
    store: &EvaluationStore,
    space: &ConfigSpace,
    members: &[Option<M>],
    c_prev: &WeightVector,
    rho: f64,
) -> Result<WeightUpdate> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(HoistError::InvalidOptions(format!("rho {rho} outside [0, 1]")));
    }
    if members.len() != c_prev.len() || members.len() != store.stage_count() {
        return Err(HoistError::InvalidOptions(format!(
            "{} members, {} weights, {} stages",
            members.len(),
            c_prev.len(),
            store.stage_count()
        )));
    }
    let complete = store.complete();
    if complete.len() < 2 {
        return Err(HoistError::InsufficientCompleteData(complete.len()));
    }

    let observed = min_max_normalize(&complete.losses());
    let encoded = complete
        .configs()
        .map(|c| space.encode(c))
        .collect::<Result<Vec<_>>>()?;

    let delta_raw = members
        .iter()
        .map(|member| match member {
            None => Ok(0.0),
            Some(m) => {
                let predicted = encoded
                    .iter()
                    .map(|x| m.predict_encoded(x).map(|p| p.mean))
                    .collect::<Result<Vec<_>>>()?;
                pearson_correlation(&predicted, &observed)
            }
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(match amplify(&delta_raw) {
        Some(delta) => WeightUpdate {
            weights: smooth_update(c_prev, &delta, rho),
            delta_raw,
            delta: Some(delta),
        },
        None => WeightUpdate {
            weights: WeightVector {
                weights: c_prev.weights.clone(),
                iteration: c_prev.iteration + 1,
            },
            delta_raw,
            delta: None,
        },
    })
}
