//! Probabilistic random-forest regression in the SMAC style.
//!
//! Targets are min-max normalized per training set, each tree is grown on a
//! bootstrap resample with per-split feature subsampling, and the Gaussian
//! posterior at a point is the mean and (population) variance of the per-tree
//! predictions.

use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ensemble::min_max_normalize;
use crate::error::{HoistError, Result};
use crate::space::{ConfigSpace, Configuration};
use crate::store::StageDataset;

/// Gaussian posterior over the normalized loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PosteriorPrediction {
    pub mean: f64,
    pub variance: f64,
}

impl PosteriorPrediction {
    pub fn std_dev(&self) -> f64 {
        self.variance.max(0.0).sqrt()
    }
}

/// Anything that yields a posterior for an encoded configuration.
pub trait Surrogate {
    fn predict_encoded(&self, x: &[f64]) -> Result<PosteriorPrediction>;

    fn predict(&self, config: &Configuration, space: &ConfigSpace) -> Result<PosteriorPrediction> {
        self.predict_encoded(&space.encode(config)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForestParams {
    pub tree_count: usize,
    pub max_features_fraction: f64,
    pub min_samples_split: usize,
    pub bootstrap: bool,
    pub variance_floor: f64,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            tree_count: 10,
            max_features_fraction: 0.8,
            min_samples_split: 2,
            bootstrap: true,
            variance_floor: 1e-8,
            seed: 0,
        }
    }
}

impl ForestParams {
    pub fn validate(&self) -> Result<()> {
        if self.tree_count == 0 {
            return Err(HoistError::Fit("tree_count must be positive".into()));
        }
        if !(self.max_features_fraction > 0.0 && self.max_features_fraction <= 1.0) {
            return Err(HoistError::Fit(format!(
                "max_features_fraction {} outside (0, 1]",
                self.max_features_fraction
            )));
        }
        if self.min_samples_split < 2 {
            return Err(HoistError::Fit("min_samples_split must be >= 2".into()));
        }
        if !(self.variance_floor > 0.0) {
            return Err(HoistError::Fit("variance_floor must be > 0".into()));
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        ForestParams {
            seed,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Leaf(f64),
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
struct RegressionTree {
    nodes: Vec<Node>,
}

impl RegressionTree {
    fn predict(&self, x: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf(v) => return v,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if x[feature] <= threshold { left } else { right },
            }
        }
    }
}

struct TreeBuilder<'a> {
    features: &'a [Vec<f64>],
    targets: &'a [f64],
    n_try: usize,
    min_samples_split: usize,
    nodes: Vec<Node>,
}

struct SplitChoice {
    feature: usize,
    threshold: f64,
    gain: f64,
}

impl TreeBuilder<'_> {
    fn grow(&mut self, rows: Vec<usize>, rng: &mut ChaCha8Rng) -> usize {
        let id = self.nodes.len();
        let mean = rows.iter().map(|&r| self.targets[r]).sum::<f64>() / rows.len() as f64;
        self.nodes.push(Node::Leaf(mean));

        let first = self.targets[rows[0]];
        let pure = rows.iter().all(|&r| self.targets[r] == first);
        if pure || rows.len() < self.min_samples_split {
            return id;
        }

        let dim = self.features[0].len();
        let mut tried: Vec<usize> = sample_indices(rng, dim, self.n_try).into_vec();
        tried.sort_unstable();
        let mut choice = self.best_split(&rows, &tried);
        if choice.is_none() && tried.len() < dim {
            // Nothing separable among the sampled features; look at the rest.
            let rest: Vec<usize> = (0..dim).filter(|f| !tried.contains(f)).collect();
            choice = self.best_split(&rows, &rest);
        }
        let Some(choice) = choice else {
            return id;
        };

        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = rows
            .iter()
            .partition(|&&r| self.features[r][choice.feature] <= choice.threshold);
        let left = self.grow(left_rows, rng);
        let right = self.grow(right_rows, rng);
        self.nodes[id] = Node::Split {
            feature: choice.feature,
            threshold: choice.threshold,
            left,
            right,
        };
        id
    }

    /// Largest squared-error reduction; earlier features and lower thresholds win ties.
    fn best_split(&self, rows: &[usize], candidates: &[usize]) -> Option<SplitChoice> {
        let n = rows.len() as f64;
        let total: f64 = rows.iter().map(|&r| self.targets[r]).sum();
        let parent = total * total / n;
        let mut best: Option<SplitChoice> = None;
        let mut order = rows.to_vec();
        for &f in candidates {
            order.sort_by(|&a, &b| self.features[a][f].total_cmp(&self.features[b][f]));
            let mut left_sum = 0.0;
            for k in 0..order.len() - 1 {
                left_sum += self.targets[order[k]];
                let lo = self.features[order[k]][f];
                let hi = self.features[order[k + 1]][f];
                if lo == hi {
                    continue;
                }
                let mut threshold = lo + (hi - lo) / 2.0;
                if threshold >= hi {
                    threshold = lo;
                }
                let nl = (k + 1) as f64;
                let nr = n - nl;
                let right_sum = total - left_sum;
                let gain = left_sum * left_sum / nl + right_sum * right_sum / nr - parent;
                if best.as_ref().is_none_or(|b| gain > b.gain) {
                    best = Some(SplitChoice {
                        feature: f,
                        threshold,
                        gain,
                    });
                }
            }
        }
        best
    }
}

/// A fitted forest. Predictions are on the normalized `[0, 1]` loss scale of
/// its training set.
#[derive(Debug, Clone, PartialEq)]
pub struct ForestModel {
    trees: Vec<RegressionTree>,
    training_normalization: (f64, f64),
    feature_dim: usize,
    variance_floor: f64,
}

impl ForestModel {
    pub fn tree_count(&self) -> usize {
        self.trees.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    /// `(min, max)` of the raw training losses.
    pub fn training_normalization(&self) -> (f64, f64) {
        self.training_normalization
    }

    /// Maps a normalized value back onto the raw loss scale.
    pub fn denormalize(&self, value: f64) -> f64 {
        let (lo, hi) = self.training_normalization;
        lo + value * (hi - lo)
    }

    pub fn tree_predictions(&self, x: &[f64]) -> Vec<f64> {
        self.trees.iter().map(|t| t.predict(x)).collect()
    }

    /// Fits on pre-encoded rows and raw (unnormalized) targets.
    pub fn fit(features: &[Vec<f64>], raw_targets: &[f64], params: &ForestParams) -> Result<Self> {
        params.validate()?;
        if features.len() != raw_targets.len() {
            return Err(HoistError::Fit(format!(
                "{} feature rows but {} targets",
                features.len(),
                raw_targets.len()
            )));
        }
        if features.len() < 2 {
            return Err(HoistError::Fit(format!(
                "need at least 2 records, got {}",
                features.len()
            )));
        }
        if raw_targets.iter().any(|y| !y.is_finite()) {
            return Err(HoistError::Fit("non-finite training target".into()));
        }
        let dim = features[0].len();
        if dim == 0 || features.iter().any(|row| row.len() != dim) {
            return Err(HoistError::Fit("feature rows must share a positive width".into()));
        }

        let lo = raw_targets.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = raw_targets.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let targets = min_max_normalize(raw_targets);
        let n_try = ((params.max_features_fraction * dim as f64).ceil() as usize).clamp(1, dim);
        let n = features.len();

        let trees = (0..params.tree_count)
            .map(|t| {
                let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
                rng.set_stream(t as u64);
                let rows: Vec<usize> = if params.bootstrap {
                    (0..n).map(|_| rng.gen_range(0..n)).collect()
                } else {
                    (0..n).collect()
                };
                let mut builder = TreeBuilder {
                    features,
                    targets: &targets,
                    n_try,
                    min_samples_split: params.min_samples_split,
                    nodes: Vec::new(),
                };
                builder.grow(rows, &mut rng);
                RegressionTree {
                    nodes: builder.nodes,
                }
            })
            .collect();

        Ok(ForestModel {
            trees,
            training_normalization: (lo, hi),
            feature_dim: dim,
            variance_floor: params.variance_floor,
        })
    }
}

impl Surrogate for ForestModel {
    fn predict_encoded(&self, x: &[f64]) -> Result<PosteriorPrediction> {
        if x.len() != self.feature_dim {
            return Err(HoistError::Encoding {
                param: "<features>".into(),
                reason: format!("expected {} features, got {}", self.feature_dim, x.len()),
            });
        }
        let preds = self.tree_predictions(x);
        let k = preds.len() as f64;
        let mean = preds.iter().sum::<f64>() / k;
        let variance = preds.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / k;
        Ok(PosteriorPrediction {
            mean,
            variance: variance.max(self.variance_floor),
        })
    }
}

/// Fits one stage dataset. Failed evaluations never reach a stage dataset, so
/// every record here is usable.
pub fn fit_forest(
    dataset: &StageDataset,
    space: &ConfigSpace,
    params: &ForestParams,
) -> Result<ForestModel> {
    if dataset.len() < 2 {
        return Err(HoistError::Fit(format!(
            "stage {} has {} records, need at least 2",
            dataset.stage_index,
            dataset.len()
        )));
    }
    let features = dataset
        .configs()
        .map(|c| space.encode(c))
        .collect::<Result<Vec<_>>>()?;
    ForestModel::fit(&features, &dataset.losses(), params)
}
