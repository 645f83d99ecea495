//! Run configuration mirroring the training command's flags.

use serde::{Deserialize, Serialize};

use crate::data::resample::{ResampleMethod, SmoteMode};
use crate::error::{Error, Result};
use crate::models::LossKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelSelection {
    Baseline,
    Hybrid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub with_vegetation: bool,
    pub satellite_img: bool,
    pub gray_scale: bool,
    pub resample_method: ResampleMethod,
    /// Majority rows kept per minority row when undersampling.
    pub other_size: f64,
    pub test_size: f64,
    pub archive: bool,
    pub seed: u64,
    pub model_selection: ModelSelection,
    pub loss_function: LossKind,
    pub learning_rate: f64,
    pub epochs: usize,
    pub display_step: usize,
    pub threshold: f64,
    pub batch: bool,
    pub batch_size: Option<usize>,
    /// Z-score tabular features with training-split statistics.
    pub standardize: bool,
    pub smote_k: usize,
    pub smote_mode: SmoteMode,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            with_vegetation: true,
            satellite_img: false,
            gray_scale: true,
            resample_method: ResampleMethod::Undersample,
            other_size: 1.8,
            test_size: 0.2,
            archive: true,
            seed: 0,
            model_selection: ModelSelection::Baseline,
            loss_function: LossKind::Mse,
            learning_rate: 0.01,
            epochs: 100,
            display_step: 10,
            threshold: 0.5,
            batch: false,
            batch_size: None,
            standardize: true,
            smote_k: 5,
            smote_mode: SmoteMode::Standard,
        }
    }
}

pub const DEFAULT_HYBRID_BATCH: usize = 32;

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let usage = |m: &str| Err(Error::Usage(m.to_string()));
        if self.batch_size.is_some() && !self.batch {
            return usage("--batch-size requires --batch=True");
        }
        if self.batch_size == Some(0) {
            return usage("--batch-size must be positive");
        }
        if !self.gray_scale && self.satellite_img {
            return usage("only gray-scale imagery is supported");
        }
        if self.model_selection == ModelSelection::Hybrid && !self.satellite_img {
            return usage("the hybrid model needs --satellite-img=True");
        }
        if self.resample_method == ResampleMethod::Smote && self.satellite_img {
            return usage("SMOTE cannot synthesize image tiles; use undersampling");
        }
        if !(0.0..1.0).contains(&self.test_size) {
            return usage("--test-size must lie in [0, 1)");
        }
        if !(self.other_size > 0.0) {
            return usage("--other-size must be positive");
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return usage("--learning-rate must be positive");
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return usage("--threshold must lie in [0, 1]");
        }
        if self.epochs == 0 {
            return usage("--epochs must be positive");
        }
        Ok(())
    }

    /// Rows per optimizer step; `None` is full batch. The hybrid model
    /// always trains in mini-batches.
    pub fn effective_batch_size(&self) -> Option<usize> {
        match (self.model_selection, self.batch) {
            (_, true) => Some(self.batch_size.unwrap_or(DEFAULT_HYBRID_BATCH)),
            (ModelSelection::Hybrid, false) => Some(DEFAULT_HYBRID_BATCH),
            (ModelSelection::Baseline, false) => None,
        }
    }

    pub fn feature_width(&self) -> usize {
        if self.with_vegetation { 20 } else { 14 }
    }
}
