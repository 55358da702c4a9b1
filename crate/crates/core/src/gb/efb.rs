use serde::{Deserialize, Serialize};

use crate::decimal;
use crate::matrix::Matrix;

/// Features non-zero on more than this fraction of rows never bundle.
pub const DENSE_FRACTION: f64 = 0.5;

/// Greedy exclusive feature bundling.
///
/// `nonzero[f]` lists the ascending row indices where feature `f` is
/// non-zero. Sparse features are visited by decreasing support and placed
/// in the first bundle whose accumulated conflicts stay within
/// `max_conflict · n_rows`. Returns bundles of ascending feature indices,
/// ordered by their first feature.
pub fn efb_bundle(nonzero: &[Vec<usize>], n_rows: usize, max_conflict: f64) -> Vec<Vec<usize>> {
    let budget = (max_conflict * n_rows as f64).floor() as usize;
    let mut order: Vec<usize> = (0..nonzero.len()).collect();
    order.sort_by(|&a, &b| nonzero[b].len().cmp(&nonzero[a].len()).then(a.cmp(&b)));

    struct Open {
        features: Vec<usize>,
        used: Vec<bool>,
        conflicts: usize,
    }
    let mut dense: Vec<Vec<usize>> = Vec::new();
    let mut open: Vec<Open> = Vec::new();
    for f in order {
        if nonzero[f].len() as f64 > DENSE_FRACTION * n_rows as f64 {
            dense.push(vec![f]);
            continue;
        }
        let mut placed = false;
        for b in open.iter_mut() {
            let clash = nonzero[f].iter().filter(|&&r| b.used[r]).count();
            if b.conflicts + clash <= budget {
                b.features.push(f);
                b.conflicts += clash;
                for &r in &nonzero[f] {
                    b.used[r] = true;
                }
                placed = true;
                break;
            }
        }
        if !placed {
            let mut used = vec![false; n_rows];
            for &r in &nonzero[f] {
                used[r] = true;
            }
            open.push(Open { features: vec![f], used, conflicts: 0 });
        }
    }
    let mut bundles: Vec<Vec<usize>> = dense
        .into_iter()
        .chain(open.into_iter().map(|b| b.features))
        .map(|mut b| {
            b.sort_unstable();
            b
        })
        .collect();
    bundles.sort_by_key(|b| b[0]);
    bundles
}

/// Non-zero row sets of each column.
pub fn sparsity_patterns(x: &Matrix) -> Vec<Vec<usize>> {
    (0..x.cols())
        .map(|j| (0..x.rows()).filter(|&i| x.get(i, j) != 0.0).collect())
        .collect()
}

/// One member of a multi-feature bundle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleMember {
    pub feature: usize,
    /// Bin cut points of the member's non-zero values.
    #[serde(with = "decimal::vec")]
    pub cuts: Vec<f64>,
    /// Encoded values of this member start at `offset + 1`.
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum BundleColumn {
    Single(usize),
    Merged(Vec<BundleMember>),
}

/// Maps raw feature rows to bundled columns.
///
/// Single columns pass their raw value through. A merged column encodes
/// the first non-zero member `m` as `offset_m + 1 + bin_m(x)` and the
/// all-zero case as 0, so members occupy disjoint value ranges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleLayout {
    pub columns: Vec<BundleColumn>,
}

fn bin_of(cuts: &[f64], v: f64) -> usize {
    cuts.partition_point(|&c| c <= v)
}

impl BundleLayout {
    /// Builds the layout for `bundles` using training matrix `x`.
    pub fn new(x: &Matrix, bundles: &[Vec<usize>], max_bins: usize) -> Self {
        let columns = bundles
            .iter()
            .map(|b| {
                if b.len() == 1 {
                    return BundleColumn::Single(b[0]);
                }
                let mut offset = 0;
                let members = b
                    .iter()
                    .map(|&f| {
                        let values: Vec<f64> = (0..x.rows())
                            .map(|i| x.get(i, f))
                            .filter(|v| *v != 0.0 && !v.is_nan())
                            .collect();
                        let cuts = super::hist::quantile_cuts(values, max_bins);
                        let member = BundleMember { feature: f, offset, cuts };
                        offset += member.cuts.len() + 1;
                        member
                    })
                    .collect();
                BundleColumn::Merged(members)
            })
            .collect();
        BundleLayout { columns }
    }

    pub fn is_identity(&self) -> bool {
        self.columns.iter().enumerate().all(|(i, c)| *c == BundleColumn::Single(i))
    }

    pub fn encode_row(&self, row: &[f64]) -> Vec<f64> {
        self.columns
            .iter()
            .map(|c| match c {
                BundleColumn::Single(f) => row[*f],
                BundleColumn::Merged(members) => members
                    .iter()
                    .find(|m| row[m.feature] != 0.0 && !row[m.feature].is_nan())
                    .map_or(0.0, |m| (m.offset + 1 + bin_of(&m.cuts, row[m.feature])) as f64),
            })
            .collect()
    }

    pub fn encode(&self, x: &Matrix) -> Matrix {
        let rows: Vec<Vec<f64>> = (0..x.rows()).map(|i| self.encode_row(x.row(i))).collect();
        if rows.is_empty() {
            return Matrix::zeros(0, self.columns.len());
        }
        Matrix::from_rows(&rows)
    }
}
