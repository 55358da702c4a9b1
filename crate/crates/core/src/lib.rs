//! Weather-normalized energy baselines.
//!
//! `normbase` turns sub-daily meter and weather readings into a daily
//! counterfactual of what a building would have consumed, checks that
//! counterfactual against the ASHRAE Guideline 14 calibration bounds, and
//! reports the energy avoided during a study window.
//!
//! The stages are usable one at a time:
//!
//! * [`tsdata`] parses, gap-fills, resamples and aligns series.
//! * [`features`] builds and scales model inputs.
//! * [`nn`] and [`gb`] hold the neural and boosted-tree regressors.
//! * [`metrics`] scores predictions and applies the calibration gate.
//! * [`normalize`] runs the whole pipeline and builds the report.
//! * [`synth`] generates buildings with a known answer.
//!
//! ```
//! use normbase::metrics::{ashrae_gate, KpiSet};
//!
//! let fit = KpiSet { rmse: 12.0, cv_rmse: 0.08, r2: 0.93, nmbe: 0.01, n: 365 };
//! assert!(ashrae_gate(&fit, &fit).pass);
//! ```

pub mod cli;
pub mod decimal;
pub mod error;
pub mod features;
pub mod gb;
pub mod matrix;
pub mod metrics;
pub mod nn;
pub mod normalize;
pub mod plot;
pub mod synth;
pub mod tsdata;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/data.md")]
    mod data {}
    #[doc = include_str!("../../../book/src/features.md")]
    mod features {}
    #[doc = include_str!("../../../book/src/models.md")]
    mod models {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
    #[doc = include_str!("../../../book/src/normalization.md")]
    mod normalization {}
    #[doc = include_str!("../../../book/src/synth.md")]
    mod synth {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
