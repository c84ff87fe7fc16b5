//! One-cycle learning-rate schedule and training recipe documents.

use std::f64::consts::PI;

use crate::kv::KvDoc;
use crate::{Error, Result};

/// Cosine one-cycle schedule: warm up from `initial_lr` to `max_lr` over the
/// first `pct_start` of the steps, then anneal to `final_lr`.
#[derive(Debug, Clone, PartialEq)]
pub struct OneCycleConfig {
    pub max_lr: f64,
    pub initial_lr: f64,
    pub final_lr: f64,
    pub pct_start: f64,
    pub total_steps: usize,
}

impl Default for OneCycleConfig {
    fn default() -> Self {
        Self {
            max_lr: 0.01,
            initial_lr: 0.001,
            final_lr: 0.001,
            pct_start: 0.3,
            total_steps: 50,
        }
    }
}

impl OneCycleConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.initial_lr > 0.0 && self.initial_lr <= self.max_lr) {
            return Err(Error::input("need 0 < initial_lr <= max_lr"));
        }
        if !(self.final_lr > 0.0 && self.final_lr <= self.max_lr) {
            return Err(Error::input("need 0 < final_lr <= max_lr"));
        }
        if !(self.pct_start > 0.0 && self.pct_start < 1.0) {
            return Err(Error::input("pct_start must lie in (0, 1)"));
        }
        if self.total_steps < 2 {
            return Err(Error::input("total_steps must be at least 2"));
        }
        Ok(())
    }

    /// Step at which the peak is reached.
    pub fn ramp_steps(&self) -> usize {
        ((self.pct_start * self.total_steps as f64).round() as usize).clamp(1, self.total_steps - 1)
    }

    pub fn anneal_steps(&self) -> usize {
        self.total_steps - self.ramp_steps()
    }

    /// Largest possible change between consecutive steps of the anneal phase.
    pub fn anneal_step_bound(&self) -> f64 {
        PI * (self.max_lr - self.final_lr) / (2.0 * self.anneal_steps() as f64)
    }

    /// Same bound for the warm-up phase.
    pub fn ramp_step_bound(&self) -> f64 {
        PI * (self.max_lr - self.initial_lr) / (2.0 * self.ramp_steps() as f64)
    }

    fn write_kv(&self, doc: &mut KvDoc, prefix: &str) {
        doc.set(&format!("{prefix}max_lr"), self.max_lr);
        doc.set(&format!("{prefix}initial_lr"), self.initial_lr);
        doc.set(&format!("{prefix}final_lr"), self.final_lr);
        doc.set(&format!("{prefix}pct_start"), self.pct_start);
        doc.set(&format!("{prefix}total_steps"), self.total_steps);
        doc.set(&format!("{prefix}anneal"), "cosine");
    }

    /// Reads `<prefix>max_lr` etc.; absent keys keep their defaults.
    pub fn from_kv(doc: &KvDoc, prefix: &str) -> Result<Self> {
        let mut c = Self::default();
        let key = |k: &str| format!("{prefix}{k}");
        if let Some(v) = doc.get_parsed(&key("max_lr"))? {
            c.max_lr = v;
        }
        if let Some(v) = doc.get_parsed(&key("initial_lr"))? {
            c.initial_lr = v;
        }
        if let Some(v) = doc.get_parsed(&key("final_lr"))? {
            c.final_lr = v;
        }
        if let Some(v) = doc.get_parsed(&key("pct_start"))? {
            c.pct_start = v;
        }
        if let Some(v) = doc.get_parsed(&key("total_steps"))? {
            c.total_steps = v;
        }
        if let Some(a) = doc.get(&key("anneal")) {
            if a != "cosine" {
                return Err(Error::parse(key("anneal"), format!("unsupported anneal `{a}`")));
            }
        }
        c.validate()?;
        Ok(c)
    }
}

/// Learning rate at `step` in `0..=total_steps`.
pub fn lr_at(config: &OneCycleConfig, step: usize) -> Result<f64> {
    config.validate()?;
    if step > config.total_steps {
        return Err(Error::input(format!(
            "step {step} beyond total_steps {}",
            config.total_steps
        )));
    }
    let ramp = config.ramp_steps();
    let lr = if step < ramp {
        let t = step as f64 / ramp as f64;
        let u = 0.5 * (1.0 - (PI * t).cos());
        config.initial_lr * (1.0 - u) + config.max_lr * u
    } else {
        let t = (step - ramp) as f64 / config.anneal_steps() as f64;
        let u = 0.5 * (1.0 + (PI * t).cos());
        config.final_lr * (1.0 - u) + config.max_lr * u
    };
    Ok(lr)
}

/// Every `(step, lr)` pair from 0 to `total_steps` inclusive.
pub fn schedule(config: &OneCycleConfig) -> Result<Vec<(usize, f64)>> {
    (0..=config.total_steps)
        .map(|s| lr_at(config, s).map(|lr| (s, lr)))
        .collect()
}

pub fn schedule_csv(config: &OneCycleConfig) -> Result<String> {
    let mut out = String::from("step,lr\n");
    for (s, lr) in schedule(config)? {
        out.push_str(&format!("{s},{lr}\n"));
    }
    Ok(out)
}

pub const MASK_CLASSES: [&str; 3] = ["with mask", "incorrect mask", "without mask"];

/// SGD training recipe for driving an external trainer.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingRecipe {
    pub batch_size: usize,
    pub epochs: usize,
    pub momentum: f64,
    pub weight_decay: f64,
    pub image_size: usize,
    pub lr: OneCycleConfig,
    pub classification_loss: String,
    pub localization_loss: String,
    pub classes: Vec<String>,
}

impl Default for TrainingRecipe {
    /// Mask-detector fine-tuning: batch 32, 50 epochs, SGD momentum 0.937,
    /// weight decay 5e-4, 320 px input, one-cycle LR in [0.001, 0.01].
    fn default() -> Self {
        Self {
            batch_size: 32,
            epochs: 50,
            momentum: 0.937,
            weight_decay: 0.0005,
            image_size: 320,
            lr: OneCycleConfig::default(),
            classification_loss: "cross_entropy".into(),
            localization_loss: "ciou".into(),
            classes: MASK_CLASSES.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl TrainingRecipe {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.epochs == 0 || self.image_size == 0 {
            return Err(Error::input("batch_size, epochs and image_size must be positive"));
        }
        if !(self.momentum > 0.0 && self.weight_decay > 0.0) {
            return Err(Error::input("momentum and weight_decay must be positive"));
        }
        if self.classes.is_empty() {
            return Err(Error::input("class list is empty"));
        }
        if self.classes.iter().any(|c| c.is_empty() || c.contains(',') || c.trim() != c) {
            return Err(Error::input("class names must be non-empty, trimmed and free of commas"));
        }
        self.lr.validate()
    }
}

/// Serializes a recipe as a sorted `key = value` document.
pub fn emit_recipe(recipe: &TrainingRecipe) -> Result<String> {
    recipe.validate()?;
    let mut doc = KvDoc::new();
    doc.set("batch_size", recipe.batch_size);
    doc.set("epochs", recipe.epochs);
    doc.set("optimizer", "sgd");
    doc.set("momentum", recipe.momentum);
    doc.set("weight_decay", recipe.weight_decay);
    doc.set("image_size", recipe.image_size);
    doc.set("classification_loss", &recipe.classification_loss);
    doc.set("localization_loss", &recipe.localization_loss);
    doc.set("classes", recipe.classes.join(","));
    recipe.lr.write_kv(&mut doc, "lr.");
    Ok(format!("# training recipe\n{}", doc.to_text()))
}

pub fn parse_recipe(text: &str) -> Result<TrainingRecipe> {
    let doc = KvDoc::parse(text)?;
    if let Some(opt) = doc.get("optimizer") {
        if opt != "sgd" {
            return Err(Error::parse("optimizer", format!("unsupported optimizer `{opt}`")));
        }
    }
    let recipe = TrainingRecipe {
        batch_size: doc.require("batch_size")?,
        epochs: doc.require("epochs")?,
        momentum: doc.require("momentum")?,
        weight_decay: doc.require("weight_decay")?,
        image_size: doc.require("image_size")?,
        lr: OneCycleConfig::from_kv(&doc, "lr.")?,
        classification_loss: doc.require("classification_loss")?,
        localization_loss: doc.require("localization_loss")?,
        classes: doc
            .require::<String>("classes")?
            .split(',')
            .map(str::to_string)
            .collect(),
    };
    recipe.validate()?;
    Ok(recipe)
}
