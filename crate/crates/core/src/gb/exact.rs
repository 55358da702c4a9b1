use rayon::prelude::*;

use super::{fold_best, leaf_weight, split_gain, BoostConfig, SplitChoice, TreeNode};
use crate::matrix::Matrix;

/// Best split of one feature over `rows`, scanning every midpoint between
/// consecutive distinct values.
fn best_split_for_feature(
    x: &Matrix,
    g: &[f64],
    h: &[f64],
    rows: &[usize],
    feature: usize,
    cfg: &BoostConfig,
) -> Option<SplitChoice> {
    let mut present: Vec<(f64, usize)> = Vec::with_capacity(rows.len());
    let (mut g_miss, mut h_miss) = (0.0, 0.0);
    for &r in rows {
        let v = x.get(r, feature);
        if v.is_nan() {
            g_miss += g[r];
            h_miss += h[r];
        } else {
            present.push((v, r));
        }
    }
    present.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let g_present: f64 = present.iter().map(|&(_, r)| g[r]).sum();
    let h_present: f64 = present.iter().map(|&(_, r)| h[r]).sum();
    let has_missing = present.len() < rows.len();

    let mut best: Option<SplitChoice> = None;
    let (mut g_l, mut h_l) = (0.0, 0.0);
    for k in 0..present.len().saturating_sub(1) {
        let (v, r) = present[k];
        g_l += g[r];
        h_l += h[r];
        let next = present[k + 1].0;
        if next <= v {
            continue;
        }
        let mut threshold = v + (next - v) / 2.0;
        if threshold <= v {
            threshold = next;
        }
        let g_r = g_present - g_l;
        let h_r = h_present - h_l;
        // Missing rows on the left, then on the right; left wins ties.
        let options: [(bool, f64, f64, f64, f64); 2] = [
            (true, g_l + g_miss, h_l + h_miss, g_r, h_r),
            (false, g_l, h_l, g_r + g_miss, h_r + h_miss),
        ];
        let mut local: Option<SplitChoice> = None;
        for (default_left, gl, hl, gr, hr) in options {
            if hl < cfg.min_child_hessian || hr < cfg.min_child_hessian {
                continue;
            }
            if hl + cfg.lambda <= 0.0 || hr + cfg.lambda <= 0.0 {
                continue;
            }
            let gain = split_gain(gl, hl, gr, hr, cfg.lambda, cfg.gamma);
            let default_left = if has_missing { default_left } else { hl >= hr };
            let c = SplitChoice { feature, threshold, gain, default_left };
            local = fold_best([local, Some(c)]);
            if !has_missing {
                break;
            }
        }
        best = fold_best([best, local]);
    }
    best
}

fn grow(x: &Matrix, g: &[f64], h: &[f64], rows: Vec<usize>, depth: usize, cfg: &BoostConfig) -> TreeNode {
    let g_sum: f64 = rows.iter().map(|&r| g[r]).sum();
    let h_sum: f64 = rows.iter().map(|&r| h[r]).sum();
    let leaf = || TreeNode::leaf(leaf_weight(g_sum, h_sum, cfg.lambda));
    if depth >= cfg.max_depth || rows.len() < 2 {
        return leaf();
    }
    let per_feature: Vec<Option<SplitChoice>> = (0..x.cols())
        .into_par_iter()
        .map(|f| best_split_for_feature(x, g, h, &rows, f, cfg))
        .collect();
    let Some(best) = fold_best(per_feature) else {
        return leaf();
    };
    if best.gain <= 0.0 {
        return leaf();
    }
    let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&r| {
        let v = x.get(r, best.feature);
        if v.is_nan() {
            best.default_left
        } else {
            v < best.threshold
        }
    });
    TreeNode::Split {
        feature: best.feature,
        threshold: best.threshold,
        default_left: best.default_left,
        gain: best.gain,
        left: Box::new(grow(x, g, h, left_rows, depth + 1, cfg)),
        right: Box::new(grow(x, g, h, right_rows, depth + 1, cfg)),
    }
}

/// Depth-first exact-greedy tree on gradients `g` and hessians `h`.
///
/// Each node takes the highest-gain split over all features and midpoints;
/// growth stops at `max_depth`, at non-positive gain, or when a child would
/// fall below `min_child_hessian`. Ties go to the lowest feature index, then
/// the lowest threshold.
pub fn build_tree_exact(x: &Matrix, g: &[f64], h: &[f64], cfg: &BoostConfig) -> TreeNode {
    assert_eq!(x.rows(), g.len(), "gradient length");
    assert_eq!(g.len(), h.len(), "hessian length");
    grow(x, g, h, (0..x.rows()).collect(), 0, cfg)
}
