use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::kg::MultiKgStore;
use crate::model::{Activation, Composition, ModelShape, ScoreFn};
use crate::{Error, Result};

/// Hyperparameters and schedule of a training run. Every field has a default,
/// so a config file only lists what it changes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Margin of the ranking loss.
    pub gamma: f64,
    /// Weight of the distillation loss.
    pub alpha: f64,
    /// Per-KG overrides of `alpha`, keyed by KG name.
    pub alpha_per_kg: BTreeMap<String, f64>,
    /// Largest validation-MRR deficit at which the worse model still teaches.
    pub theta: f64,
    pub top_k: usize,
    pub neg_samples: usize,
    pub lr: f64,
    pub epochs_stage1: usize,
    pub epochs_stage2: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Epochs between validation evaluations (gate refresh, early stopping).
    pub eval_every: usize,
    /// Stage-1 early stopping, in evaluations without improvement.
    pub patience: usize,
    pub dim: usize,
    pub layers: usize,
    pub composition: Composition,
    pub activation: Activation,
    pub score_fn: ScoreFn,
    /// `false` drops the `max(0, ·)` of the margin loss.
    pub hinge: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            gamma: 1.0,
            alpha: 0.5,
            alpha_per_kg: BTreeMap::new(),
            theta: 0.1,
            top_k: 10,
            neg_samples: 16,
            lr: 1e-3,
            epochs_stage1: 100,
            epochs_stage2: 50,
            batch_size: 256,
            seed: 0,
            eval_every: 1,
            patience: 10,
            dim: 32,
            layers: 1,
            composition: Composition::Sub,
            activation: Activation::Tanh,
            score_fn: ScoreFn::TransEL1,
            hinge: true,
        }
    }
}

impl TrainConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return fail(format!("gamma must be > 0, got {}", self.gamma));
        }
        for (name, a) in
            std::iter::once(("alpha", &self.alpha)).chain(self.alpha_per_kg.iter().map(|(k, v)| (k.as_str(), v)))
        {
            if !(*a >= 0.0 && a.is_finite()) {
                return fail(format!("alpha for {name} must be >= 0, got {a}"));
            }
        }
        if !(self.theta >= 0.0 && self.theta.is_finite()) {
            return fail(format!("theta must be >= 0, got {}", self.theta));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return fail(format!("lr must be > 0, got {}", self.lr));
        }
        for (name, v) in [
            ("top_k", self.top_k),
            ("neg_samples", self.neg_samples),
            ("batch_size", self.batch_size),
            ("eval_every", self.eval_every),
            ("patience", self.patience),
            ("dim", self.dim),
            ("layers", self.layers),
        ] {
            if v == 0 {
                return fail(format!("{name} must be >= 1"));
            }
        }
        Ok(())
    }

    /// Checks the parts of the config that depend on the data.
    pub fn check_against(&self, store: &MultiKgStore) -> Result<()> {
        let smallest = store.kgs.iter().map(|k| k.num_entities()).min().unwrap_or(0);
        if self.top_k > smallest {
            return Err(Error::Config(format!(
                "top_k = {} exceeds the smallest entity vocabulary ({smallest})",
                self.top_k
            )));
        }
        for name in self.alpha_per_kg.keys() {
            if store.kg_index(name).is_none() {
                return Err(Error::Config(format!("alpha_per_kg names unknown KG `{name}`")));
            }
        }
        Ok(())
    }

    pub fn alpha_for(&self, kg_name: &str) -> f64 {
        self.alpha_per_kg.get(kg_name).copied().unwrap_or(self.alpha)
    }

    pub fn shape(&self, n_entities: usize, n_relations: usize, fused: bool) -> ModelShape {
        ModelShape {
            n_entities,
            n_relations,
            dim: self.dim,
            layers: self.layers,
            fused,
            composition: self.composition,
            activation: self.activation,
            score_fn: self.score_fn,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults_and_round_trips() {
        let c = TrainConfig::from_toml("").unwrap();
        assert_eq!(c, TrainConfig::default());
        let mut d = c.clone();
        d.alpha_per_kg.insert("fr".into(), 0.25);
        d.score_fn = ScoreFn::DistMult;
        assert_eq!(TrainConfig::from_toml(&d.to_toml()).unwrap(), d);
        assert_eq!(d.alpha_for("fr"), 0.25);
        assert_eq!(d.alpha_for("en"), 0.5);
    }

    #[test]
    fn bad_values_are_config_errors() {
        assert!(matches!(TrainConfig::from_toml("gamma = 0.0"), Err(Error::Config(_))));
        assert!(matches!(TrainConfig::from_toml("top_k = 0"), Err(Error::Config(_))));
        assert!(matches!(TrainConfig::from_toml("unknown = 1"), Err(Error::Config(_))));
        assert!(TrainConfig::from_toml("score_fn = \"transe-l2\"\nhinge = false").is_ok());
    }
}
