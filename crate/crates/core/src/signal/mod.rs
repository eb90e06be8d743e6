//! Continuous-signal preprocessing: filter design and application, ICA
//! artifact removal, and epoching with baseline correction.

mod epoch;
pub mod filter;
pub mod ica;
pub mod pipeline;
mod recording;

pub use epoch::{epoch_and_baseline, Condition, EpochSet, EpochingReport, SkippedTrial};
pub use filter::{
    design_butterworth_bandpass, design_notch, filter_zero_phase, FilterCoefficients,
};
pub use ica::{fastica_decompose, flag_frontal_components, ica_reconstruct, IcaDecomposition, IcaReport};
pub use pipeline::{design_filters, preprocess, IcaSettings, PreprocessConfig, PreprocessReport};
pub use recording::{EegRecording, Marker};

use ndarray::Array2;

use crate::error::Result;

/// Applies `filters` in order to every channel, zero-phase.
pub fn filter_channels(data: &Array2<f64>, filters: &[FilterCoefficients]) -> Result<Array2<f64>> {
    let mut out = data.clone();
    for mut row in out.rows_mut() {
        let mut x = row.to_vec();
        for f in filters {
            x = filter_zero_phase(&x, f)?;
        }
        row.assign(&ndarray::ArrayView1::from(&x));
    }
    Ok(out)
}
