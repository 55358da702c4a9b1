//! Gradient-boosted regression trees.
//!
//! Two tree learners share the second-order split objective: an exact
//! greedy learner that enumerates every distinct threshold, and a
//! histogram learner that grows leaf-wise over quantile bins with
//! gradient-based one-side sampling and exclusive feature bundling.

mod efb;
mod exact;
mod goss;
mod hist;
mod tree;

pub use efb::{efb_bundle, BundleLayout, DENSE_FRACTION};
pub use exact::build_tree_exact;
pub use goss::{goss_sample, GossSample};
pub use hist::{build_tree_hist, BinMapper, BinnedData, Histogram, HistogramBin};
pub use tree::{Ensemble, EnsembleKind, TreeNode};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoostConfig {
    pub rounds: usize,
    pub learning_rate: f64,
    /// Depth limit of exact-greedy trees.
    pub max_depth: usize,
    /// Leaf budget of histogram trees.
    pub max_leaves: usize,
    /// Optional depth limit of histogram trees.
    pub hist_max_depth: Option<usize>,
    pub lambda: f64,
    pub gamma: f64,
    pub min_child_hessian: f64,
    pub bins: usize,
    pub goss_a: f64,
    pub goss_b: f64,
    pub efb_max_conflict: f64,
    /// Rounds without validation improvement before stopping; 0 disables.
    pub early_stop_rounds: usize,
    /// Chronological tail of the rows held out for early stopping.
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for BoostConfig {
    fn default() -> Self {
        BoostConfig {
            rounds: 500,
            learning_rate: 0.05,
            max_depth: 4,
            max_leaves: 15,
            hist_max_depth: None,
            lambda: 1.0,
            gamma: 0.0,
            min_child_hessian: 1.0,
            bins: 32,
            goss_a: 0.2,
            goss_b: 0.1,
            efb_max_conflict: 0.0,
            early_stop_rounds: 50,
            validation_fraction: 0.2,
            seed: 7,
        }
    }
}

impl BoostConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.lambda >= 0.0 && self.gamma >= 0.0) {
            return fail("lambda and gamma must be non-negative");
        }
        if !(self.goss_a >= 0.0 && self.goss_b >= 0.0 && self.goss_a + self.goss_b <= 1.0) {
            return fail("GOSS rates must satisfy 0 ≤ a + b ≤ 1");
        }
        if self.bins < 2 {
            return fail("bins must be at least 2");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail("learning_rate must be positive");
        }
        if self.max_leaves == 0 {
            return fail("max_leaves must be at least 1");
        }
        if self.min_child_hessian.is_nan() || self.min_child_hessian < 0.0 {
            return fail("min_child_hessian must be non-negative");
        }
        if !(0.0..=0.5).contains(&self.validation_fraction) {
            return fail("validation_fraction must be in [0, 0.5]");
        }
        if !(0.0..=1.0).contains(&self.efb_max_conflict) {
            return fail("efb_max_conflict must be a fraction");
        }
        Ok(())
    }

    /// GOSS with `a = 1` keeps every row at weight 1.
    pub fn without_goss(mut self) -> Self {
        self.goss_a = 1.0;
        self.goss_b = 0.0;
        self
    }
}

/// Gradient and hessian of ½(ŷ − y)².
pub fn grad_hess(y: &[f64], y_hat: &[f64]) -> (Vec<f64>, Vec<f64>) {
    assert_eq!(y.len(), y_hat.len(), "grad_hess length mismatch");
    let g = y.iter().zip(y_hat).map(|(y, p)| p - y).collect();
    (g, vec![1.0; y.len()])
}

/// Regularised gain of splitting a node into the given children.
pub fn split_gain(g_l: f64, h_l: f64, g_r: f64, h_r: f64, lambda: f64, gamma: f64) -> f64 {
    let score = |g: f64, h: f64| g * g / (h + lambda);
    0.5 * (score(g_l, h_l) + score(g_r, h_r) - score(g_l + g_r, h_l + h_r)) - gamma
}

/// Optimal leaf value −G/(H+λ).
pub fn leaf_weight(g: f64, h: f64, lambda: f64) -> f64 {
    if h + lambda == 0.0 {
        0.0
    } else {
        -g / (h + lambda)
    }
}

/// A candidate split found by either learner.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct SplitChoice {
    pub feature: usize,
    pub threshold: f64,
    pub gain: f64,
    pub default_left: bool,
}

/// Fixed-order fold: strictly greater gain wins, so ties keep the lower
/// feature index (and within a feature, the lower threshold).
pub(crate) fn fold_best(candidates: impl IntoIterator<Item = Option<SplitChoice>>) -> Option<SplitChoice> {
    candidates.into_iter().flatten().fold(None, |best: Option<SplitChoice>, c| match best {
        Some(b) if c.gain <= b.gain => Some(b),
        _ => Some(c),
    })
}

/// Per-round record of a boosting run.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BoostTrace {
    pub train_rmse: Vec<f64>,
    pub val_rmse: Vec<f64>,
    pub best_round: usize,
    pub stopped_early: bool,
}

fn rmse_of(y: &[f64], pred: &[f64]) -> f64 {
    (y.iter().zip(pred).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / y.len() as f64).sqrt()
}

/// Fits a boosted ensemble to `(x, y)`.
///
/// Rows are taken to be in time order; with early stopping enabled the last
/// `validation_fraction` of them is held out and the ensemble is truncated
/// to its best validation round.
pub fn boost_fit(x: &Matrix, y: &[f64], cfg: &BoostConfig, kind: EnsembleKind) -> Result<(Ensemble, BoostTrace)> {
    cfg.validate()?;
    if x.rows() != y.len() {
        return Err(Error::LengthMismatch { left: x.rows(), right: y.len() });
    }
    let n = y.len();
    if n < 10 {
        return Err(Error::InsufficientData(format!("{n} rows, boosting needs at least 10")));
    }
    let n_val = if cfg.early_stop_rounds > 0 && cfg.validation_fraction > 0.0 {
        ((n as f64 * cfg.validation_fraction).round() as usize).clamp(1, n - 2)
    } else {
        0
    };
    let n_train = n - n_val;
    let train_idx: Vec<usize> = (0..n_train).collect();
    let val_idx: Vec<usize> = (n_train..n).collect();
    let x_train = x.select_rows(&train_idx);
    let y_train = &y[..n_train];
    let y_val = &y[n_train..];

    let base_score = y_train.iter().sum::<f64>() / n_train as f64;
    let mut ensemble = Ensemble {
        base_score,
        learning_rate: cfg.learning_rate,
        kind,
        n_features: x.cols(),
        layout: None,
        trees: Vec::new(),
    };

    let binned = match kind {
        EnsembleKind::Histogram => {
            let data = BinnedData::fit(&x_train, cfg.bins, cfg.efb_max_conflict);
            ensemble.layout = data.layout.clone();
            Some(data)
        }
        EnsembleKind::Exact => None,
    };
    let x_val = x.select_rows(&val_idx);

    let mut pred_train = vec![base_score; n_train];
    let mut pred_val = vec![base_score; n_val];
    let mut trace = BoostTrace::default();
    let mut best_val = if n_val > 0 { rmse_of(y_val, &pred_val) } else { f64::INFINITY };
    let mut best_round = 0;

    for round in 0..cfg.rounds {
        let (g, h) = grad_hess(y_train, &pred_train);
        let tree = match &binned {
            None => build_tree_exact(&x_train, &g, &h, cfg),
            Some(data) => {
                let sample = goss_sample(&g, cfg.goss_a, cfg.goss_b, cfg.seed.wrapping_add(round as u64))?;
                build_tree_hist(data, &g, &h, &sample, cfg)
            }
        };
        for (i, p) in pred_train.iter_mut().enumerate() {
            *p += cfg.learning_rate * ensemble.tree_output(&tree, x_train.row(i));
        }
        for (i, p) in pred_val.iter_mut().enumerate() {
            *p += cfg.learning_rate * ensemble.tree_output(&tree, x_val.row(i));
        }
        ensemble.trees.push(tree);

        let train_rmse = rmse_of(y_train, &pred_train);
        if !train_rmse.is_finite() {
            return Err(Error::TrainingDiverged { epoch: round, loss: train_rmse });
        }
        trace.train_rmse.push(train_rmse);
        if n_val > 0 {
            let val_rmse = rmse_of(y_val, &pred_val);
            trace.val_rmse.push(val_rmse);
            if val_rmse < best_val {
                best_val = val_rmse;
                best_round = round + 1;
            } else if round + 1 - best_round >= cfg.early_stop_rounds {
                trace.stopped_early = true;
                break;
            }
        } else {
            best_round = round + 1;
        }
    }
    ensemble.trees.truncate(best_round);
    trace.best_round = best_round;
    Ok((ensemble, trace))
}

/// Predictions for every row of `x`.
pub fn boost_predict(ensemble: &Ensemble, x: &Matrix) -> Result<Vec<f64>> {
    if x.cols() != ensemble.n_features {
        return Err(Error::Dimension(format!(
            "matrix has {} features, ensemble expects {}",
            x.cols(),
            ensemble.n_features
        )));
    }
    Ok((0..x.rows()).map(|i| ensemble.predict_row(x.row(i))).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grad_hess_cases() {
        let (g, h) = grad_hess(&[5.0, 1.0], &[7.0, 1.0]);
        assert_eq!(g, vec![2.0, 0.0]);
        assert_eq!(h, vec![1.0, 1.0]);
        let shifted: Vec<f64> = [7.0, 1.0].iter().map(|v| v + 3.0).collect();
        let (g2, _) = grad_hess(&[5.0, 1.0], &shifted);
        assert_eq!(g2, vec![5.0, 3.0]);
    }

    #[test]
    fn split_gain_cases() {
        assert_eq!(split_gain(0.0, 3.0, 0.0, 2.0, 1.0, 0.7), -0.7);
        assert!((split_gain(4.0, 2.0, -4.0, 2.0, 1.0, 0.0) - 16.0 / 3.0).abs() < 1e-15);
        let g = split_gain(4.0, 2.0, -4.0, 2.0, 1e15, 0.5);
        assert!((g + 0.5).abs() < 1e-12);
    }

    #[test]
    fn config_validation() {
        assert!(BoostConfig::default().validate().is_ok());
        let bad = BoostConfig { goss_a: 0.7, goss_b: 0.4, ..BoostConfig::default() };
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
        let bad = BoostConfig { bins: 1, ..BoostConfig::default() };
        assert!(bad.validate().is_err());
        let bad = BoostConfig { lambda: -1.0, ..BoostConfig::default() };
        assert!(bad.validate().is_err());
    }

    fn step_data() -> (Matrix, Vec<f64>) {
        let x = Matrix::from_vec(40, 1, (0..40).map(f64::from).collect());
        let y = (0..40).map(|i| if i < 20 { 100.0 } else { 300.0 }).collect();
        (x, y)
    }

    #[test]
    fn zero_rounds_predicts_mean() {
        let (x, y) = step_data();
        let cfg = BoostConfig { rounds: 0, early_stop_rounds: 0, ..BoostConfig::default() };
        let (ens, _) = boost_fit(&x, &y, &cfg, EnsembleKind::Exact).unwrap();
        assert!(boost_predict(&ens, &x).unwrap().iter().all(|&p| p == 200.0));
    }

    #[test]
    fn threshold_target_is_learned_to_precision() {
        let (x, y) = step_data();
        for kind in [EnsembleKind::Exact, EnsembleKind::Histogram] {
            let cfg = BoostConfig {
                rounds: 2000,
                learning_rate: 0.3,
                max_depth: 1,
                max_leaves: 2,
                early_stop_rounds: 0,
                ..BoostConfig::default()
            }
            .without_goss();
            let (ens, trace) = boost_fit(&x, &y, &cfg, kind).unwrap();
            let pred = boost_predict(&ens, &x).unwrap();
            let rmse = rmse_of(&y, &pred);
            assert!(rmse < 1e-6 * 200.0, "{kind:?}: {rmse}");
            assert!(trace.train_rmse.windows(2).all(|w| w[1] <= w[0]));
        }
    }

    #[test]
    fn too_few_rows() {
        let x = Matrix::zeros(5, 1);
        assert!(matches!(
            boost_fit(&x, &[0.0; 5], &BoostConfig::default(), EnsembleKind::Exact),
            Err(Error::InsufficientData(_))
        ));
    }
}
