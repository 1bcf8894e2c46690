//! Hyperparameters and their structured-text configuration file.
//!
//! A config file is flat TOML whose keys match the fields of [`ConfigLayer`].
//! Layers are merged in order defaults < file < command-line flags, then the
//! result is validated.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::adapter::AdapterParams;
use crate::error::{Result, TdaError};
use crate::numeric::DEFAULT_LOGIT_SCALE;

/// Whether the current sample may enter a cache before its own adapted
/// prediction is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UpdateOrder {
    #[default]
    UpdateThenPredict,
    PredictThenUpdate,
}

impl fmt::Display for UpdateOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            UpdateOrder::UpdateThenPredict => "update-then-predict",
            UpdateOrder::PredictThenUpdate => "predict-then-update",
        })
    }
}

impl FromStr for UpdateOrder {
    type Err = TdaError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "update-then-predict" => Ok(UpdateOrder::UpdateThenPredict),
            "predict-then-update" => Ok(UpdateOrder::PredictThenUpdate),
            other => Err(TdaError::config(
                "update_order",
                format!("unknown value `{other}` (expected update-then-predict or predict-then-update)"),
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TdaConfig {
    /// Maximum entries per class in the positive cache.
    pub pos_capacity: usize,
    /// Maximum entries per class in the negative cache.
    pub neg_capacity: usize,
    /// Probability above which a class is marked in a negative pseudo label.
    pub mask_threshold: f64,
    /// Open entropy interval admitting samples into the negative cache.
    pub entropy_low: f64,
    pub entropy_high: f64,
    pub pos_params: AdapterParams,
    pub neg_params: AdapterParams,
    pub logit_scale: f64,
    pub update_order: UpdateOrder,
}

impl Default for TdaConfig {
    fn default() -> Self {
        Self {
            pos_capacity: 3,
            neg_capacity: 2,
            mask_threshold: 0.03,
            entropy_low: 0.2,
            entropy_high: 0.5,
            pos_params: AdapterParams::default(),
            neg_params: AdapterParams::default(),
            logit_scale: DEFAULT_LOGIT_SCALE,
            update_order: UpdateOrder::default(),
        }
    }
}

impl TdaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.pos_capacity == 0 {
            return Err(TdaError::config("pos_capacity", "must be at least 1"));
        }
        if self.neg_capacity == 0 {
            return Err(TdaError::config("neg_capacity", "must be at least 1"));
        }
        if !(self.mask_threshold > 0.0 && self.mask_threshold < 1.0) {
            return Err(TdaError::config("mask_threshold", "must lie in (0, 1)"));
        }
        let (lo, hi) = (self.entropy_low, self.entropy_high);
        if !(lo.is_finite() && hi.is_finite() && 0.0 <= lo && lo < hi && hi <= 1.0) {
            return Err(TdaError::config(
                "tau",
                format!("need 0 <= entropy_low < entropy_high <= 1, got [{lo}, {hi}]"),
            ));
        }
        check_params("pos", &self.pos_params)?;
        check_params("neg", &self.neg_params)?;
        if !(self.logit_scale.is_finite() && self.logit_scale > 0.0) {
            return Err(TdaError::config("logit_scale", "must be positive and finite"));
        }
        Ok(())
    }

    /// Renders the config in config-file syntax.
    pub fn to_toml(&self) -> String {
        toml::to_string(&ConfigLayer::from(*self)).expect("flat config always serializes")
    }
}

fn check_params(prefix: &str, p: &AdapterParams) -> Result<()> {
    if !(p.alpha.is_finite() && p.alpha > 0.0) {
        return Err(TdaError::config(&format!("{prefix}_alpha"), "must be positive and finite"));
    }
    if !(p.beta.is_finite() && p.beta > 0.0) {
        return Err(TdaError::config(&format!("{prefix}_beta"), "must be positive and finite"));
    }
    Ok(())
}

/// A partial config: one file or one set of command-line flags.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigLayer {
    pub pos_capacity: Option<usize>,
    pub neg_capacity: Option<usize>,
    pub mask_threshold: Option<f64>,
    pub entropy_low: Option<f64>,
    pub entropy_high: Option<f64>,
    pub pos_alpha: Option<f64>,
    pub pos_beta: Option<f64>,
    pub neg_alpha: Option<f64>,
    pub neg_beta: Option<f64>,
    pub logit_scale: Option<f64>,
    pub update_order: Option<UpdateOrder>,
}

impl ConfigLayer {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let field = unknown_field(e.message()).unwrap_or("config");
            TdaError::config(field, e.message().trim().to_string())
        })
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| TdaError::io(format!("reading config {}", path.display()), e))?;
        Self::parse(&text)
    }

    /// Applies this layer on top of `base`.
    pub fn apply(&self, base: TdaConfig) -> TdaConfig {
        TdaConfig {
            pos_capacity: self.pos_capacity.unwrap_or(base.pos_capacity),
            neg_capacity: self.neg_capacity.unwrap_or(base.neg_capacity),
            mask_threshold: self.mask_threshold.unwrap_or(base.mask_threshold),
            entropy_low: self.entropy_low.unwrap_or(base.entropy_low),
            entropy_high: self.entropy_high.unwrap_or(base.entropy_high),
            pos_params: AdapterParams {
                alpha: self.pos_alpha.unwrap_or(base.pos_params.alpha),
                beta: self.pos_beta.unwrap_or(base.pos_params.beta),
            },
            neg_params: AdapterParams {
                alpha: self.neg_alpha.unwrap_or(base.neg_params.alpha),
                beta: self.neg_beta.unwrap_or(base.neg_params.beta),
            },
            logit_scale: self.logit_scale.unwrap_or(base.logit_scale),
            update_order: self.update_order.unwrap_or(base.update_order),
        }
    }
}

impl From<TdaConfig> for ConfigLayer {
    fn from(c: TdaConfig) -> Self {
        Self {
            pos_capacity: Some(c.pos_capacity),
            neg_capacity: Some(c.neg_capacity),
            mask_threshold: Some(c.mask_threshold),
            entropy_low: Some(c.entropy_low),
            entropy_high: Some(c.entropy_high),
            pos_alpha: Some(c.pos_params.alpha),
            pos_beta: Some(c.pos_params.beta),
            neg_alpha: Some(c.neg_params.alpha),
            neg_beta: Some(c.neg_params.beta),
            logit_scale: Some(c.logit_scale),
            update_order: Some(c.update_order),
        }
    }
}

// toml reports unknown keys as "unknown field `x`, expected ...".
fn unknown_field(message: &str) -> Option<&str> {
    let rest = message.split("unknown field `").nth(1)?;
    rest.split('`').next()
}

/// Defaults, then the optional file, then `flags`; validated.
pub fn load_config(path: Option<&Path>, flags: &ConfigLayer) -> Result<TdaConfig> {
    let mut cfg = TdaConfig::default();
    if let Some(path) = path {
        cfg = ConfigLayer::from_file(path)?.apply(cfg);
    }
    let cfg = flags.apply(cfg);
    cfg.validate()?;
    Ok(cfg)
}
