use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use gdd::model::ModelConfig;

pub const SEED_ENV: &str = "GDD_SEED";

/// Every model setting as an optional flag; a set flag overrides the config
/// file, which overrides `GDD_SEED` and the built-in defaults.
#[derive(Debug, Clone, Default, Args)]
pub struct ConfigArgs {
    /// Flat `key = value` configuration file
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[arg(long, alias = "d_model")]
    pub d_model: Option<String>,
    #[arg(long, alias = "d_tag")]
    pub d_tag: Option<String>,
    #[arg(long, alias = "d_head")]
    pub d_head: Option<String>,
    #[arg(long, alias = "d_hid")]
    pub d_hid: Option<String>,
    #[arg(long, alias = "dual_heads")]
    pub dual_heads: Option<String>,
    #[arg(long, alias = "rel_heads")]
    pub rel_heads: Option<String>,
    #[arg(long)]
    pub layers: Option<String>,
    #[arg(long, alias = "local_heads")]
    pub local_heads: Option<String>,
    #[arg(long, alias = "kappa_max")]
    pub kappa_max: Option<String>,
    #[arg(long, alias = "sample_interval")]
    pub sample_interval: Option<String>,
    #[arg(long)]
    pub dropout: Option<String>,
    #[arg(long)]
    pub lr: Option<String>,
    #[arg(long)]
    pub l2: Option<String>,
    #[arg(long)]
    pub epochs: Option<String>,
    #[arg(long, alias = "batch_size")]
    pub batch_size: Option<String>,
    #[arg(long)]
    pub patience: Option<String>,
    #[arg(long)]
    pub seed: Option<String>,
    #[arg(long, alias = "normalize_mask")]
    pub normalize_mask: Option<String>,
    #[arg(long, alias = "use_mask")]
    pub use_mask: Option<String>,
    /// covariance | original
    #[arg(long)]
    pub attention: Option<String>,
    #[arg(long, alias = "scale_logits")]
    pub scale_logits: Option<String>,
    #[arg(long, alias = "drop_punct")]
    pub drop_punct: Option<String>,
}

impl ConfigArgs {
    fn flags(&self) -> [(&'static str, &Option<String>); 22] {
        [
            ("d_model", &self.d_model),
            ("d_tag", &self.d_tag),
            ("d_head", &self.d_head),
            ("d_hid", &self.d_hid),
            ("dual_heads", &self.dual_heads),
            ("rel_heads", &self.rel_heads),
            ("layers", &self.layers),
            ("local_heads", &self.local_heads),
            ("kappa_max", &self.kappa_max),
            ("sample_interval", &self.sample_interval),
            ("dropout", &self.dropout),
            ("lr", &self.lr),
            ("l2", &self.l2),
            ("epochs", &self.epochs),
            ("batch_size", &self.batch_size),
            ("patience", &self.patience),
            ("seed", &self.seed),
            ("normalize_mask", &self.normalize_mask),
            ("use_mask", &self.use_mask),
            ("attention", &self.attention),
            ("scale_logits", &self.scale_logits),
            ("drop_punct", &self.drop_punct),
        ]
    }

    /// Resolves the final config starting from `base`.
    pub fn resolve(&self, base: ModelConfig) -> Result<ModelConfig> {
        let mut cfg = base;
        if let Ok(seed) = std::env::var(SEED_ENV) {
            cfg.set("seed", &seed)
                .with_context(|| format!("environment variable {SEED_ENV}"))?;
        }
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            cfg.apply_file(&text)
                .with_context(|| format!("in {}", path.display()))?;
        }
        for (key, value) in self.flags() {
            if let Some(v) = value {
                cfg.set(key, v)
                    .with_context(|| format!("flag --{}", key.replace('_', "-")))?;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flag_table_covers_every_key() {
        let args = ConfigArgs::default();
        let keys: Vec<&str> = args.flags().iter().map(|(k, _)| *k).collect();
        assert_eq!(keys, ModelConfig::KEYS);
    }

    #[test]
    fn flags_beat_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.txt");
        std::fs::write(&path, "d_model = 12\nlr = 0.5\n").unwrap();
        let args = ConfigArgs {
            config: Some(path),
            lr: Some("0.25".into()),
            ..ConfigArgs::default()
        };
        let cfg = args.resolve(ModelConfig::default()).unwrap();
        assert_eq!(cfg.d_model, 12);
        assert_eq!(cfg.lr, 0.25);
        let bad = ConfigArgs {
            dropout: Some("1.5".into()),
            ..ConfigArgs::default()
        };
        assert!(bad.resolve(ModelConfig::default()).is_err());
    }
}
