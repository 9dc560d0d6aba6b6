//! Run configuration: a sectioned TOML file describing data paths, model
//! hyperparameters, the sharing plan, and training settings. Unknown keys
//! are rejected so typos fail before any compute starts.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use polynmt::model::ModelConfig;
use polynmt::sharing::{plan_from_text, SharingPlan, Strategy};
use polynmt::training::TrainConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F32,
    F64,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct SharingSection {
    /// Built-in strategy name (NONE, EMBED, …, FULL).
    pub strategy: Option<String>,
    /// Path to an explicit plan file; mutually exclusive with `strategy`.
    pub plan: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairConfig {
    /// Target language name; must match the plan's target list.
    pub lang: String,
    pub train_src: PathBuf,
    pub train_tgt: PathBuf,
    #[serde(default)]
    pub dev_src: Option<PathBuf>,
    #[serde(default)]
    pub dev_tgt: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub out_dir: PathBuf,
    /// Learned merge file (see `learn-bpe`); required for training.
    #[serde(default)]
    pub bpe_model: Option<PathBuf>,
    #[serde(default)]
    pub precision: Precision,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub sharing: SharingSection,
    #[serde(default)]
    pub training: TrainConfig,
    #[serde(rename = "pair", default)]
    pub pairs: Vec<PairConfig>,
}

impl RunConfig {
    /// Parse a config file; relative paths are taken relative to the file.
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let mut config: RunConfig = toml::from_str(&text).map_err(|e| {
            anyhow::anyhow!("cannot parse config {}: {}", path.display(), e.message())
        })?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        config.rebase(base);
        config.check()?;
        Ok(config)
    }

    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.out_dir);
        if let Some(p) = &mut self.bpe_model {
            fix(p);
        }
        if let Some(p) = &mut self.sharing.plan {
            fix(p);
        }
        for pair in &mut self.pairs {
            fix(&mut pair.train_src);
            fix(&mut pair.train_tgt);
            if let Some(p) = &mut pair.dev_src {
                fix(p);
            }
            if let Some(p) = &mut pair.dev_tgt {
                fix(p);
            }
        }
    }

    fn check(&self) -> Result<()> {
        if self.pairs.is_empty() {
            bail!("config lists no [[pair]] sections");
        }
        for pair in &self.pairs {
            if self.pairs.iter().filter(|p| p.lang == pair.lang).count() > 1 {
                bail!("duplicate target language '{}'", pair.lang);
            }
            if pair.dev_src.is_some() != pair.dev_tgt.is_some() {
                bail!("pair '{}' must set both dev_src and dev_tgt or neither", pair.lang);
            }
        }
        if self.sharing.strategy.is_some() && self.sharing.plan.is_some() {
            bail!("set sharing.strategy or sharing.plan, not both");
        }
        Ok(())
    }

    pub fn langs(&self) -> Vec<String> {
        self.pairs.iter().map(|p| p.lang.clone()).collect()
    }

    /// Build the sharing plan: a named strategy, an explicit plan file, or
    /// FULL when the config says nothing.
    pub fn resolve_plan(&self) -> Result<SharingPlan> {
        let langs = self.langs();
        let plan = match (&self.sharing.strategy, &self.sharing.plan) {
            (Some(name), None) => {
                SharingPlan::from_strategy(Strategy::from_name(name)?, &langs)?
            }
            (None, Some(path)) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("cannot read plan {}", path.display()))?;
                let plan = plan_from_text(&text)?;
                if plan.targets != langs {
                    bail!(
                        "plan targets [{}] do not match config pairs [{}]",
                        plan.targets.join(", "),
                        langs.join(", ")
                    );
                }
                plan
            }
            (None, None) => SharingPlan::from_strategy(Strategy::Full, &langs)?,
            (Some(_), Some(_)) => unreachable!("rejected in check()"),
        };
        Ok(plan)
    }
}
