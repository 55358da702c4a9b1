use normbase::gb::{boost_fit, BoostConfig, Ensemble, EnsembleKind};
use normbase::matrix::Matrix;
use normbase::metrics::{cv_rmse, nmbe, r_squared, rmse};
use normbase::normalize::{cumulative, cumulative_reduction, ensemble_mean};
use proptest::prelude::*;

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

fn members() -> impl Strategy<Value = Vec<Vec<f64>>> {
    (1usize..6, 1usize..40).prop_flat_map(|(m, n)| prop::collection::vec(prop::collection::vec(-1e4..1e4f64, n), m))
}

fn pairs() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (3usize..120).prop_flat_map(|n| {
        (prop::collection::vec(10.0..5000.0f64, n), prop::collection::vec(0.5..1.5f64, n))
            .prop_map(|(a, f)| {
                let p = a.iter().zip(&f).map(|(x, k)| x * k).collect();
                (a, p)
            })
    })
}

proptest! {
    #[test]
    fn ensemble_stays_within_member_range(ms in members()) {
        let refs: Vec<&[f64]> = ms.iter().map(Vec::as_slice).collect();
        let mean = ensemble_mean(&refs).unwrap();
        for (t, v) in mean.iter().enumerate() {
            let lo = ms.iter().map(|m| m[t]).fold(f64::INFINITY, f64::min);
            let hi = ms.iter().map(|m| m[t]).fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(lo <= *v && *v <= hi);
        }
    }

    #[test]
    fn ensemble_ignores_member_order(ms in members(), rot in 0usize..6) {
        let refs: Vec<&[f64]> = ms.iter().map(Vec::as_slice).collect();
        let mut rotated = refs.clone();
        let k = rot % rotated.len();
        rotated.rotate_left(k);
        rotated.reverse();
        let a = ensemble_mean(&refs).unwrap();
        let b = ensemble_mean(&rotated).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!(close(*x, *y, 1e-12), "{} vs {}", x, y);
        }
    }

    #[test]
    fn cumulative_of_non_negative_series_never_decreases(v in prop::collection::vec(0.0..1e5f64, 0..200)) {
        let c = cumulative(&v);
        prop_assert_eq!(c.len(), v.len());
        prop_assert!(c.windows(2).all(|w| w[1] >= w[0]));
        if let Some(last) = c.last() {
            prop_assert!(close(*last, v.iter().sum(), 1e-12));
        }
    }

    #[test]
    fn reduction_matches_cumulative_endpoints((a, p) in pairs()) {
        let (total, frac) = cumulative_reduction(&a, &p).unwrap();
        let ca = cumulative(&a);
        let cp = cumulative(&p);
        prop_assert_eq!(total, cp.last().unwrap() - ca.last().unwrap());
        prop_assert_eq!(frac, total / cp.last().unwrap());
    }

    #[test]
    fn scaling_both_series_leaves_relative_metrics_unchanged((a, p) in pairs(), k in 0.01..100.0f64) {
        let ak: Vec<f64> = a.iter().map(|v| v * k).collect();
        let pk: Vec<f64> = p.iter().map(|v| v * k).collect();
        prop_assert!(close(rmse(&ak, &pk).unwrap(), k * rmse(&a, &p).unwrap(), 1e-10));
        prop_assert!(close(cv_rmse(&ak, &pk).unwrap(), cv_rmse(&a, &p).unwrap(), 1e-10));
        prop_assert!(close(nmbe(&ak, &pk, 1).unwrap(), nmbe(&a, &p, 1).unwrap(), 1e-10));
        let (r1, r2) = (r_squared(&ak, &pk).unwrap(), r_squared(&a, &p).unwrap());
        prop_assert!(close(r1, r2, 1e-9), "{} vs {}", r1, r2);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn ensembles_round_trip_through_json(
        rows in prop::collection::vec(prop::collection::vec(-5.0..5.0f64, 3), 20..60),
        hist in any::<bool>(),
        seed in 0u64..1000,
    ) {
        let n = rows.len();
        let x = Matrix::from_vec(n, 3, rows.concat());
        let y: Vec<f64> = rows.iter().map(|r| r[0] * 2.0 - r[1].abs() + 0.1 * r[2]).collect();
        let cfg = BoostConfig { rounds: 15, early_stop_rounds: 0, seed, ..BoostConfig::default() };
        let kind = if hist { EnsembleKind::Histogram } else { EnsembleKind::Exact };
        let (model, _) = boost_fit(&x, &y, &cfg, kind).unwrap();
        let back = Ensemble::from_json(&model.to_json()).unwrap();
        for i in 0..n {
            prop_assert_eq!(model.predict_row(x.row(i)).to_bits(), back.predict_row(x.row(i)).to_bits());
        }
        prop_assert_eq!(back.to_json(), model.to_json());
    }
}
