//! Run configuration: a TOML-friendly document plus per-strategy
//! defaults for the fields the document may leave out.

use serde::{Deserialize, Serialize};

use crate::corpus::Task;
use crate::frontend::FeaturePipeline;
use crate::models::{LmclParams, ResNetConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Backbone and margin-loss weights trained jointly on the task.
    E2e,
    /// Frozen embeddings, only a classifier head is trained.
    TwoStage,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::E2e => "e2e",
            Strategy::TwoStage => "two_stage",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "e2e" => Ok(Strategy::E2e),
            "two_stage" => Ok(Strategy::TwoStage),
            other => Err(Error::InvalidInput(format!(
                "unknown strategy `{other}` (expected e2e or two_stage)"
            ))),
        }
    }

    /// (batch size, learning rate) used when the config leaves them out.
    fn defaults(self) -> (usize, f64) {
        match self {
            Strategy::E2e => (64, 1e-4),
            Strategy::TwoStage => (256, 1e-3),
        }
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Which dev metric picks the best epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMetric {
    DevAccuracy,
    #[default]
    DevMacroF1,
}

impl SelectionMetric {
    pub fn as_str(self) -> &'static str {
        match self {
            SelectionMetric::DevAccuracy => "dev_accuracy",
            SelectionMetric::DevMacroF1 => "dev_macro_f1",
        }
    }
}

/// The tunable part of a training run, loadable from TOML. Every field
/// has a default so a minimal config can be empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Unset means the strategy default (64 e2e, 256 two-stage).
    pub batch_size: Option<usize>,
    /// Unset means the strategy default (1e-4 e2e, 1e-3 two-stage).
    pub learning_rate: Option<f64>,
    pub epochs: usize,
    pub seed: u64,
    pub selection_metric: SelectionMetric,
    /// Random crop + frequency masking on training batches.
    pub augment: bool,
    pub freq_mask_width: usize,
    /// Oversample minority classes to equal per-class batch exposure.
    pub balanced_sampler: bool,
    /// Keep decoded waveforms in memory across epochs. Costs ~128 KB per
    /// second of audio; turn off for corpora that do not fit in RAM.
    pub cache_audio: bool,
    /// Hidden width of the two-stage head; 0 means a single affine layer.
    pub head_hidden: usize,
    pub features: FeaturePipeline,
    pub backbone: ResNetConfig,
    pub lmcl: LmclParams,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            batch_size: None,
            learning_rate: None,
            epochs: 50,
            seed: 0,
            selection_metric: SelectionMetric::default(),
            augment: true,
            freq_mask_width: 8,
            balanced_sampler: false,
            cache_audio: true,
            head_hidden: 0,
            features: FeaturePipeline::default(),
            backbone: ResNetConfig::default(),
            lmcl: LmclParams::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidConfig(format!("run config: {e}")))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_toml_str(&crate::tsv::read_to_string(path)?)
    }
}

/// A complete training request: what to learn, how, and with which knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub task: Task,
    pub strategy: Strategy,
    pub run: RunConfig,
}

impl TrainConfig {
    pub fn new(task: Task, strategy: Strategy, run: RunConfig) -> Self {
        TrainConfig {
            task,
            strategy,
            run,
        }
    }

    pub fn batch_size(&self) -> usize {
        self.run.batch_size.unwrap_or(self.strategy.defaults().0)
    }

    pub fn learning_rate(&self) -> f64 {
        self.run.learning_rate.unwrap_or(self.strategy.defaults().1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.run.epochs == 0 {
            return Err(Error::InvalidConfig("epochs must be positive".into()));
        }
        if self.batch_size() == 0 {
            return Err(Error::InvalidConfig("batch_size must be positive".into()));
        }
        let lr = self.learning_rate();
        if !lr.is_finite() || lr <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "learning_rate must be positive and finite, got {lr}"
            )));
        }
        if self.run.augment && self.run.freq_mask_width == 0 {
            return Err(Error::InvalidConfig(
                "freq_mask_width must be positive when augmentation is on".into(),
            ));
        }
        self.run.features.validate()?;
        self.run.lmcl.validate()?;
        if self.strategy == Strategy::E2e {
            self.run.backbone.validate()?;
            let want = self.run.features.n_coeffs();
            if self.run.backbone.input_coeffs != want {
                return Err(Error::InvalidConfig(format!(
                    "backbone expects {} input coefficients but the feature pipeline produces {want}",
                    self.run.backbone.input_coeffs
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_toml_is_all_defaults() {
        let cfg = RunConfig::from_toml_str("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.epochs, 50);
        assert_eq!(cfg.selection_metric, SelectionMetric::DevMacroF1);
        assert!(cfg.augment);
        assert!(cfg.cache_audio);
        assert!(!cfg.balanced_sampler);
    }

    #[test]
    fn strategy_defaults_fill_unset_fields() {
        let run = RunConfig::default();
        let e2e = TrainConfig::new(Task::Vocoder, Strategy::E2e, run.clone());
        assert_eq!(e2e.batch_size(), 64);
        assert_eq!(e2e.learning_rate(), 1e-4);
        let two = TrainConfig::new(Task::Vocoder, Strategy::TwoStage, run);
        assert_eq!(two.batch_size(), 256);
        assert_eq!(two.learning_rate(), 1e-3);

        let mut run = RunConfig::default();
        run.batch_size = Some(8);
        run.learning_rate = Some(0.5);
        let cfg = TrainConfig::new(Task::Vocoder, Strategy::E2e, run);
        assert_eq!(cfg.batch_size(), 8);
        assert_eq!(cfg.learning_rate(), 0.5);
    }

    #[test]
    fn nested_sections_parse_and_unknown_keys_fail() {
        let cfg = RunConfig::from_toml_str(
            r#"
            epochs = 3
            seed = 7
            selection_metric = "dev_accuracy"

            [features]
            window_seconds = 1.0

            [features.lfcc]
            n_filters = 24
            n_coeffs = 12

            [backbone]
            input_coeffs = 36
            block_counts = [1, 1]
            widths = [4, 8]
            embed_dim = 16

            [lmcl]
            scale = 24.0
            "#,
        )
        .unwrap();
        assert_eq!(cfg.epochs, 3);
        assert_eq!(cfg.selection_metric, SelectionMetric::DevAccuracy);
        assert_eq!(cfg.features.lfcc.n_coeffs, 12);
        assert_eq!(cfg.backbone.widths, vec![4, 8]);
        assert_eq!(cfg.lmcl.scale, 24.0);
        // 12 coeffs with deltas on = 36 network inputs.
        TrainConfig::new(Task::Vocoder, Strategy::E2e, cfg)
            .validate()
            .unwrap();

        assert!(RunConfig::from_toml_str("no_such_knob = 1").is_err());
    }

    #[test]
    fn validation_catches_inconsistent_configs() {
        let mut run = RunConfig::default();
        run.epochs = 0;
        assert!(TrainConfig::new(Task::Binary, Strategy::E2e, run).validate().is_err());

        let mut run = RunConfig::default();
        run.backbone.input_coeffs = 7; // pipeline default produces 60
        assert!(TrainConfig::new(Task::Binary, Strategy::E2e, run.clone()).validate().is_err());
        // Two-stage never touches the backbone config.
        assert!(TrainConfig::new(Task::Binary, Strategy::TwoStage, run).validate().is_ok());

        let mut run = RunConfig::default();
        run.learning_rate = Some(-1.0);
        assert!(TrainConfig::new(Task::Binary, Strategy::E2e, run).validate().is_err());
    }
}
