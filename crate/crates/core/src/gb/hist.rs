use rayon::prelude::*;

use super::efb::{efb_bundle, sparsity_patterns, BundleLayout};
use super::{fold_best, leaf_weight, split_gain, BoostConfig, GossSample, SplitChoice, TreeNode};
use crate::matrix::Matrix;

const MISSING_BIN: u16 = u16::MAX;

/// Cut points splitting `values` into at most `max_bins` quantile bins.
///
/// With no more distinct values than bins, every midpoint between
/// consecutive distinct values becomes a cut.
pub(crate) fn quantile_cuts(mut values: Vec<f64>, max_bins: usize) -> Vec<f64> {
    values.retain(|v| !v.is_nan());
    values.sort_by(f64::total_cmp);
    let mut distinct = values.clone();
    distinct.dedup();
    let midpoint = |lo: f64, hi: f64| {
        let m = lo + (hi - lo) / 2.0;
        if m <= lo {
            hi
        } else {
            m
        }
    };
    if distinct.len() <= max_bins {
        return distinct.windows(2).map(|w| midpoint(w[0], w[1])).collect();
    }
    let n = values.len();
    let mut cuts: Vec<f64> = Vec::with_capacity(max_bins - 1);
    for k in 1..max_bins {
        let upper = values[k * n / max_bins];
        // largest distinct value strictly below `upper`
        let pos = distinct.partition_point(|&d| d < upper);
        if pos == 0 {
            continue;
        }
        let c = midpoint(distinct[pos - 1], upper);
        if cuts.last().is_none_or(|&last| c > last) {
            cuts.push(c);
        }
    }
    cuts
}

/// Per-column cut points; a value's bin is the number of cuts ≤ it.
#[derive(Debug, Clone, PartialEq)]
pub struct BinMapper {
    pub cuts: Vec<Vec<f64>>,
}

impl BinMapper {
    pub fn fit(x: &Matrix, max_bins: usize) -> Self {
        BinMapper {
            cuts: (0..x.cols()).map(|j| quantile_cuts(x.column(j), max_bins)).collect(),
        }
    }

    pub fn bin(&self, col: usize, v: f64) -> u16 {
        if v.is_nan() {
            MISSING_BIN
        } else {
            self.cuts[col].partition_point(|&c| c <= v) as u16
        }
    }

    pub fn num_bins(&self, col: usize) -> usize {
        self.cuts[col].len() + 1
    }
}

/// Training rows after bundling and binning, stored column-major.
#[derive(Debug, Clone)]
pub struct BinnedData {
    pub layout: Option<BundleLayout>,
    pub mapper: BinMapper,
    n_rows: usize,
    bins: Vec<Vec<u16>>,
}

impl BinnedData {
    pub fn fit(x: &Matrix, max_bins: usize, max_conflict: f64) -> Self {
        let bundles = efb_bundle(&sparsity_patterns(x), x.rows(), max_conflict);
        let layout = BundleLayout::new(x, &bundles, max_bins);
        let (layout, encoded) = if layout.is_identity() {
            (None, x.clone())
        } else {
            let enc = layout.encode(x);
            (Some(layout), enc)
        };
        let mapper = BinMapper::fit(&encoded, max_bins);
        let bins = (0..encoded.cols())
            .map(|j| (0..encoded.rows()).map(|i| mapper.bin(j, encoded.get(i, j))).collect())
            .collect();
        BinnedData { layout, mapper, n_rows: x.rows(), bins }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.bins.len()
    }

    pub fn bin_index(&self, row: usize, col: usize) -> u16 {
        self.bins[col][row]
    }

    /// Weighted gradient histograms of every column over `rows`.
    pub fn histograms(&self, rows: &[usize], wg: &[f64], wh: &[f64]) -> Vec<Histogram> {
        (0..self.n_cols())
            .into_par_iter()
            .map(|j| {
                let mut hist = Histogram {
                    bins: vec![HistogramBin::default(); self.mapper.num_bins(j)],
                    missing: HistogramBin::default(),
                };
                let col = &self.bins[j];
                for &r in rows {
                    let slot = match col[r] {
                        MISSING_BIN => &mut hist.missing,
                        b => &mut hist.bins[b as usize],
                    };
                    slot.sum_g += wg[r];
                    slot.sum_h += wh[r];
                    slot.count += 1;
                }
                hist
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct HistogramBin {
    pub sum_g: f64,
    pub sum_h: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub bins: Vec<HistogramBin>,
    pub missing: HistogramBin,
}

impl Histogram {
    pub fn total(&self) -> HistogramBin {
        let mut t = self.missing;
        for b in &self.bins {
            t.sum_g += b.sum_g;
            t.sum_h += b.sum_h;
            t.count += b.count;
        }
        t
    }

    fn best_split(&self, col: usize, cuts: &[f64], cfg: &BoostConfig) -> Option<SplitChoice> {
        let total = self.total();
        let m = self.missing;
        let present_g = total.sum_g - m.sum_g;
        let present_h = total.sum_h - m.sum_h;
        let present_n = total.count - m.count;
        let mut best: Option<SplitChoice> = None;
        let mut best_k = 0;
        let mut left = HistogramBin::default();
        for (k, &threshold) in cuts.iter().enumerate() {
            let b = self.bins[k];
            left.sum_g += b.sum_g;
            left.sum_h += b.sum_h;
            left.count += b.count;
            if left.count == 0 || left.count == present_n {
                continue;
            }
            let (g_r, h_r) = (present_g - left.sum_g, present_h - left.sum_h);
            let options = [
                (true, left.sum_g + m.sum_g, left.sum_h + m.sum_h, g_r, h_r),
                (false, left.sum_g, left.sum_h, g_r + m.sum_g, h_r + m.sum_h),
            ];
            let mut local = None;
            for (default_left, gl, hl, gr, hr) in options {
                if hl < cfg.min_child_hessian || hr < cfg.min_child_hessian {
                    continue;
                }
                if hl + cfg.lambda <= 0.0 || hr + cfg.lambda <= 0.0 {
                    continue;
                }
                let gain = split_gain(gl, hl, gr, hr, cfg.lambda, cfg.gamma);
                let default_left = if m.count > 0 { default_left } else { hl >= hr };
                local = fold_best([local, Some(SplitChoice { feature: col, threshold, gain, default_left })]);
                if m.count == 0 {
                    break;
                }
            }
            let prev = best.map(|b| b.gain);
            best = fold_best([best, local]);
            if best.map(|b| b.gain) != prev {
                best_k = k;
            }
        }
        // Cuts over empty bins give the same partition; centre the threshold in that run.
        if let Some(choice) = best.as_mut() {
            let last = (best_k + 1..cuts.len()).take_while(|&j| self.bins[j].count == 0).last().unwrap_or(best_k);
            let mid = 0.5 * (cuts[best_k] + cuts[last]);
            let k = (best_k..=last)
                .min_by(|&a, &b| (cuts[a] - mid).abs().total_cmp(&(cuts[b] - mid).abs()))
                .unwrap_or(best_k);
            choice.threshold = cuts[k];
        }
        best
    }
}

enum ArenaNode {
    Leaf { weight: f64 },
    Split { choice: SplitChoice, left: usize, right: usize },
}

struct OpenLeaf {
    node: usize,
    rows: Vec<usize>,
    depth: usize,
    best: Option<SplitChoice>,
}

fn to_tree(arena: &[ArenaNode], id: usize) -> TreeNode {
    match &arena[id] {
        ArenaNode::Leaf { weight } => TreeNode::leaf(*weight),
        ArenaNode::Split { choice, left, right } => TreeNode::Split {
            feature: choice.feature,
            threshold: choice.threshold,
            default_left: choice.default_left,
            gain: choice.gain,
            left: Box::new(to_tree(arena, *left)),
            right: Box::new(to_tree(arena, *right)),
        },
    }
}

/// Leaf-wise histogram tree over a weighted row sample.
///
/// The leaf with the largest positive gain is split next until
/// `max_leaves` is reached, no leaf has positive gain, or the optional
/// depth limit blocks every candidate. Split thresholds are bin cut points
/// in the bundled column space.
pub fn build_tree_hist(data: &BinnedData, g: &[f64], h: &[f64], sample: &GossSample, cfg: &BoostConfig) -> TreeNode {
    let n = data.n_rows();
    assert_eq!(g.len(), n, "gradient length");
    let mut wg = vec![0.0; n];
    let mut wh = vec![0.0; n];
    for (&i, &w) in sample.indices.iter().zip(&sample.weights) {
        wg[i] = g[i] * w;
        wh[i] = h[i] * w;
    }
    let depth_ok = |d: usize| cfg.hist_max_depth.is_none_or(|m| d < m);
    let find = |rows: &[usize], depth: usize| -> Option<SplitChoice> {
        if !depth_ok(depth) || rows.len() < 2 {
            return None;
        }
        let hists = data.histograms(rows, &wg, &wh);
        fold_best(
            hists
                .iter()
                .enumerate()
                .map(|(j, hist)| hist.best_split(j, &data.mapper.cuts[j], cfg)),
        )
        .filter(|c| c.gain > 0.0)
    };
    let leaf_value = |rows: &[usize]| {
        let gs: f64 = rows.iter().map(|&r| wg[r]).sum();
        let hs: f64 = rows.iter().map(|&r| wh[r]).sum();
        leaf_weight(gs, hs, cfg.lambda)
    };

    let root_rows = sample.indices.clone();
    let mut arena = vec![ArenaNode::Leaf { weight: leaf_value(&root_rows) }];
    let best = find(&root_rows, 0);
    let mut open = vec![OpenLeaf { node: 0, rows: root_rows, depth: 0, best }];
    let mut leaves = 1;

    while leaves < cfg.max_leaves {
        // Highest gain wins; earlier leaves win ties.
        let pick = open
            .iter()
            .enumerate()
            .filter_map(|(i, l)| l.best.map(|b| (i, b.gain)))
            .fold(None, |acc: Option<(usize, f64)>, (i, gain)| match acc {
                Some((_, g)) if gain <= g => acc,
                _ => Some((i, gain)),
            });
        let Some((idx, _)) = pick else { break };
        let leaf = open.remove(idx);
        let choice = leaf.best.expect("picked leaf has a split");
        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = leaf.rows.iter().partition(|&&r| {
            match data.bin_index(r, choice.feature) {
                MISSING_BIN => choice.default_left,
                b => (b as usize) < data.mapper.cuts[choice.feature].partition_point(|&c| c <= choice.threshold),
            }
        });
        let l_id = arena.len();
        arena.push(ArenaNode::Leaf { weight: leaf_value(&left_rows) });
        let r_id = arena.len();
        arena.push(ArenaNode::Leaf { weight: leaf_value(&right_rows) });
        arena[leaf.node] = ArenaNode::Split { choice, left: l_id, right: r_id };
        leaves += 1;
        let depth = leaf.depth + 1;
        let lb = find(&left_rows, depth);
        let rb = find(&right_rows, depth);
        open.push(OpenLeaf { node: l_id, rows: left_rows, depth, best: lb });
        open.push(OpenLeaf { node: r_id, rows: right_rows, depth, best: rb });
    }
    to_tree(&arena, 0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn few_distinct_values_cut_at_midpoints() {
        assert_eq!(quantile_cuts(vec![3.0, 1.0, 2.0, 2.0], 8), vec![1.5, 2.5]);
    }

    #[test]
    fn quantile_cuts_respect_bin_budget() {
        let v: Vec<f64> = (0..1000).map(|i| (i as f64).sqrt()).collect();
        let cuts = quantile_cuts(v, 16);
        assert!(cuts.len() <= 15 && cuts.len() >= 12);
        assert!(cuts.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn histogram_sums_are_conserved() {
        let rows: Vec<Vec<f64>> = (0..97).map(|i| vec![(i * 31 % 17) as f64, (i as f64).sin()]).collect();
        let x = Matrix::from_rows(&rows);
        let data = BinnedData::fit(&x, 8, 0.0);
        let g: Vec<f64> = (0..97).map(|i| (i as f64 * 0.37).cos() * 3.0).collect();
        let h: Vec<f64> = (0..97).map(|i| 1.0 + (i % 3) as f64).collect();
        let idx: Vec<usize> = (0..97).collect();
        let hists = data.histograms(&idx, &g, &h);
        let (dg, dh): (f64, f64) = (g.iter().sum(), h.iter().sum());
        for hist in &hists {
            let t = hist.total();
            assert!((t.sum_g - dg).abs() <= 1e-9 * dg.abs().max(1.0));
            assert!((t.sum_h - dh).abs() <= 1e-9 * dh);
            assert_eq!(t.count, 97);
        }
    }

    #[test]
    fn single_leaf_budget() {
        let x = Matrix::from_vec(10, 1, (0..10).map(f64::from).collect());
        let data = BinnedData::fit(&x, 32, 0.0);
        let g: Vec<f64> = (0..10).map(|i| if i < 5 { 1.0 } else { -1.0 }).collect();
        let cfg = BoostConfig { max_leaves: 1, ..BoostConfig::default() };
        let t = build_tree_hist(&data, &g, &[1.0; 10], &GossSample::full(10), &cfg);
        assert_eq!(t.num_leaves(), 1);
    }

    #[test]
    fn doubling_weights_keeps_splits() {
        let rows: Vec<Vec<f64>> = (0..40).map(|i| vec![(i * 7 % 13) as f64, (i * 5 % 11) as f64]).collect();
        let x = Matrix::from_rows(&rows);
        let data = BinnedData::fit(&x, 32, 0.0);
        let g: Vec<f64> = (0..40).map(|i| ((i * 13 % 7) as f64) - 3.0).collect();
        let h = vec![1.0; 40];
        let cfg = BoostConfig { max_leaves: 6, lambda: 0.0, min_child_hessian: 0.0, ..BoostConfig::default() };
        let one = build_tree_hist(&data, &g, &h, &GossSample::full(40), &cfg);
        let two = build_tree_hist(
            &data,
            &g,
            &h,
            &GossSample { indices: (0..40).collect(), weights: vec![2.0; 40] },
            &cfg,
        );
        fn splits(t: &TreeNode, out: &mut Vec<(usize, u64)>) {
            if let TreeNode::Split { feature, threshold, left, right, .. } = t {
                out.push((*feature, threshold.to_bits()));
                splits(left, out);
                splits(right, out);
            }
        }
        let (mut a, mut b) = (Vec::new(), Vec::new());
        splits(&one, &mut a);
        splits(&two, &mut b);
        assert!(!a.is_empty());
        assert_eq!(a, b);
    }
}
