use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Rows kept by one-side sampling and the weight each carries.
#[derive(Debug, Clone, PartialEq)]
pub struct GossSample {
    /// Ascending row indices.
    pub indices: Vec<usize>,
    pub weights: Vec<f64>,
}

impl GossSample {
    pub fn full(n: usize) -> Self {
        GossSample { indices: (0..n).collect(), weights: vec![1.0; n] }
    }
}

fn ceil_count(rate: f64, n: usize) -> usize {
    // Guard against 0.2 * 200 landing a hair above 40.
    (((rate * n as f64) - 1e-9).ceil().max(0.0) as usize).min(n)
}

/// Gradient-based one-side sampling.
///
/// Keeps the `⌈a·n⌉` rows with the largest `|g|` at weight 1 and draws
/// `⌈b·n⌉` of the rest uniformly without replacement at weight `(1−a)/b`,
/// which keeps the weighted gradient sum unbiased.
pub fn goss_sample(g: &[f64], a: f64, b: f64, seed: u64) -> Result<GossSample> {
    if !(a >= 0.0 && b >= 0.0 && a + b <= 1.0 + 1e-12) {
        return Err(Error::Config(format!("GOSS rates a = {a}, b = {b} must satisfy a + b ≤ 1")));
    }
    let n = g.len();
    let top_n = ceil_count(a, n);
    if top_n >= n {
        return Ok(GossSample::full(n));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| g[j].abs().total_cmp(&g[i].abs()).then(i.cmp(&j)));
    let (top, rest) = order.split_at(top_n);

    let mut picked: Vec<(usize, f64)> = top.iter().map(|&i| (i, 1.0)).collect();
    let rand_n = ceil_count(b, n).min(rest.len());
    if rand_n > 0 {
        let amplify = (1.0 - a) / b;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for k in rand::seq::index::sample(&mut rng, rest.len(), rand_n) {
            picked.push((rest[k], amplify));
        }
    }
    picked.sort_unstable_by_key(|&(i, _)| i);
    Ok(GossSample {
        indices: picked.iter().map(|&(i, _)| i).collect(),
        weights: picked.iter().map(|&(_, w)| w).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_rows_when_top_fraction_is_everything() {
        let g: Vec<f64> = (0..10).map(|i| i as f64 - 4.5).collect();
        let s = goss_sample(&g, 1.0, 0.0, 3).unwrap();
        assert_eq!(s, GossSample::full(10));
        let s = goss_sample(&g, 0.95, 0.0, 3).unwrap();
        assert_eq!(s.indices.len(), 10);
    }

    #[test]
    fn pure_random_half_is_unit_weight() {
        let g: Vec<f64> = (0..10).map(f64::from).collect();
        let s = goss_sample(&g, 0.0, 1.0, 3).unwrap();
        assert_eq!(s, GossSample::full(10));
    }

    #[test]
    fn keeps_largest_gradients() {
        let g: Vec<f64> = (0..200).map(|i| if i % 50 == 0 { 100.0 } else { 0.01 * i as f64 }).collect();
        let s = goss_sample(&g, 0.02, 0.1, 11).unwrap();
        for big in [0, 50, 100, 150] {
            let pos = s.indices.iter().position(|&i| i == big).unwrap();
            assert_eq!(s.weights[pos], 1.0);
        }
        assert_eq!(s.indices.len(), 4 + 20);
        assert!(s.weights.iter().filter(|&&w| w != 1.0).all(|&w| (w - 9.8).abs() < 1e-12));
        assert!(s.indices.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn deterministic_per_seed() {
        let g: Vec<f64> = (0..100).map(|i| ((i * 37) % 11) as f64).collect();
        assert_eq!(goss_sample(&g, 0.2, 0.1, 5).unwrap(), goss_sample(&g, 0.2, 0.1, 5).unwrap());
        assert_ne!(goss_sample(&g, 0.2, 0.1, 5).unwrap(), goss_sample(&g, 0.2, 0.1, 6).unwrap());
    }

    #[test]
    fn rejects_rates_over_one() {
        assert!(matches!(goss_sample(&[1.0], 0.7, 0.4, 0), Err(Error::Config(_))));
    }
}
