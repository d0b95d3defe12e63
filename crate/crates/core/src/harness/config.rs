//! Flat `key = value` experiment configuration.
//!
//! One pair per line, `#` starts a comment, unknown keys are rejected.
//! Every key has a documented meaning; most have a default.

use crate::error::{Error, Result};
use crate::switch::{Estimator, TrainingMode};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

/// `(key, default, meaning)` for every accepted key.
pub const KEYS: &[(&str, Option<&str>, &str)] = &[
    ("seed", Some("0"), "RNG seed for every phase"),
    ("alpha0", Some("0.5"), "symmetric Dirichlet prior concentration"),
    ("estimator", Some("analytic_mean"), "implicit_mc | analytic_mean"),
    ("k", Some("150"), "switch samples per step for implicit_mc"),
    ("mode", Some("sequential"), "switch training schedule: sequential | joint"),
    ("inactive_switch", Some("mean"), "switches outside the trained layer: mean | unit"),
    ("switch_epochs", Some("1"), "epochs of switch training (per layer when sequential)"),
    ("switch_batch_size", Some("100"), "minibatch size for switch training"),
    ("switch_lr", Some("0.1"), "SGD step size for switch parameters"),
    ("switch_subset", None, "train switches on the first N training examples"),
    ("kl_weight", None, "weight on the KL term (default 1/N)"),
    ("dims", None, "synthetic task dimensions d_x,d_h"),
    ("n", Some("4000"), "synthetic dataset size"),
    ("method", Some("dirichlet"), "ranking: dirichlet | l1 | l2 | derivative | random"),
    ("keep_counts", None, "channels kept per prunable layer, e.g. 6,8,40,20"),
    ("rate", None, "fraction of channels removed per layer"),
    ("fold_switch_means", Some("false"), "scale kept channels by their switch mean before removal"),
    ("rank_batch", Some("500"), "examples used by the derivative ranker"),
    ("widths", Some("20,50,800,500"), "LeNet-5 widths c1,c2,f1,f2 when training from scratch"),
    ("batch_size", Some("64"), "minibatch size for weight training"),
    ("momentum", Some("0.9"), "SGD momentum for weight training"),
    ("baseline_epochs", Some("3"), "epochs of baseline training"),
    ("baseline_lr", Some("0.05"), "step size for baseline training"),
    ("finetune_epochs", Some("2"), "epochs of fine-tuning after pruning"),
    ("finetune_lr", Some("0.01"), "step size for fine-tuning"),
    ("weight_decay", Some("0"), "L2 penalty for weight training"),
    ("train_subset", None, "use the first N MNIST training images"),
    ("test_subset", None, "use the first N MNIST test images"),
    ("val_size", Some("2000"), "training images held out for fine-tuning selection"),
    ("mnist_dir", Some("data/mnist"), "directory holding the four MNIST IDX files"),
    ("model_in", None, "input model file (DPM1)"),
    ("model_out", None, "output model file (DPM1)"),
    ("ranking", None, "ranking CSV path"),
    ("plan", None, "pruning plan JSON path"),
    ("out_dir", Some("out"), "directory for reports"),
    ("image_index", Some("0"), "test image used for feature-map export"),
    ("layer", Some("0"), "prunable layer ordinal for feature-map export"),
];

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ExperimentConfig {
    values: BTreeMap<String, String>,
}

fn known(key: &str) -> Option<&'static (&'static str, Option<&'static str>, &'static str)> {
    KEYS.iter().find(|(k, _, _)| *k == key)
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::config(format!("line {}: expected key = value, got {raw:?}", n + 1)))?;
            cfg.set(k.trim(), v.trim())
                .map_err(|e| Error::config(format!("line {}: {e}", n + 1)))?;
        }
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if known(key).is_none() {
            return Err(Error::config(format!("unknown key {key:?}")));
        }
        self.values.insert(key.to_string(), value.to_string());
        Ok(())
    }

    /// Applies a `key=value` override.
    pub fn set_pair(&mut self, pair: &str) -> Result<()> {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| Error::config(format!("override {pair:?} is not key=value")))?;
        self.set(k.trim(), v.trim())
    }

    /// Copies every explicitly set key of `other` over `self`.
    pub fn merge(&mut self, other: &ExperimentConfig) {
        for (k, v) in &other.values {
            self.values.insert(k.clone(), v.clone());
        }
    }

    /// Builds a config from `defaults`, then each argument in order: a
    /// `key=value` override or the path of a config file to merge in.
    pub fn from_args<I, S>(defaults: &[(&str, &str)], args: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut cfg = ExperimentConfig::default();
        for (k, v) in defaults {
            cfg.set(k, v)?;
        }
        for arg in args {
            let arg = arg.as_ref();
            if arg.contains('=') {
                cfg.set_pair(arg)?;
            } else {
                cfg.merge(&Self::load(arg)?);
            }
        }
        Ok(cfg)
    }

    /// The explicit value or the default.
    pub fn get(&self, key: &str) -> Option<&str> {
        match self.values.get(key) {
            Some(v) => Some(v.as_str()),
            None => known(key).and_then(|(_, d, _)| *d),
        }
    }

    pub fn is_set(&self, key: &str) -> bool {
        self.values.contains_key(key)
    }

    /// Fails with every missing key listed.
    pub fn require(&self, keys: &[&str]) -> Result<()> {
        let missing: Vec<&str> = keys.iter().copied().filter(|k| self.get(k).is_none()).collect();
        if missing.is_empty() {
            Ok(())
        } else {
            Err(Error::config(format!("missing config keys: {}", missing.join(", "))))
        }
    }

    pub fn parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|e| Error::config(format!("{key} = {v:?}: {e}")))
            })
            .transpose()
    }

    pub fn value<T: FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        self.parsed(key)?
            .ok_or_else(|| Error::config(format!("missing config keys: {key}")))
    }

    pub fn list(&self, key: &str) -> Result<Option<Vec<usize>>> {
        self.get(key)
            .map(|v| {
                v.split(',')
                    .map(|p| {
                        p.trim()
                            .parse::<usize>()
                            .map_err(|e| Error::config(format!("{key} = {v:?}: {e}")))
                    })
                    .collect()
            })
            .transpose()
    }

    pub fn path(&self, key: &str) -> Option<PathBuf> {
        self.get(key).map(PathBuf::from)
    }

    pub fn seed(&self) -> Result<u64> {
        self.value("seed")
    }

    pub fn estimator(&self) -> Result<Estimator> {
        match self.get("estimator") {
            Some("analytic_mean") => Ok(Estimator::AnalyticMean),
            Some("implicit_mc") => Ok(Estimator::ImplicitMc { k: self.value("k")? }),
            other => Err(Error::config(format!(
                "estimator = {other:?}: expected implicit_mc | analytic_mean"
            ))),
        }
    }

    pub fn mode(&self) -> Result<TrainingMode> {
        match self.get("mode") {
            Some("sequential") => Ok(TrainingMode::PerLayerSequential),
            Some("joint") => Ok(TrainingMode::Joint),
            other => Err(Error::config(format!("mode = {other:?}: expected sequential | joint"))),
        }
    }

    /// Every key with its effective value, explicit keys marked `(set)`.
    pub fn render(&self) -> String {
        KEYS.iter()
            .filter_map(|(k, _, _)| {
                self.get(k).map(|v| {
                    let mark = if self.is_set(k) { " (set)" } else { "" };
                    format!("{k} = {v}{mark}")
                })
            })
            .collect::<Vec<_>>()
            .join("\n")
    }

    /// Logs the resolved configuration.
    pub fn log_resolved(&self, run: &str) {
        log::info!("{run} configuration:\n{}", self.render());
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_defaults() {
        let c = ExperimentConfig::parse("# demo\nseed = 7\nalpha0=0.3 # sparse\n\nkeep_counts = 6,8,40,20\n").unwrap();
        assert_eq!(c.seed().unwrap(), 7);
        assert_eq!(c.value::<f64>("alpha0").unwrap(), 0.3);
        assert_eq!(c.value::<f64>("switch_lr").unwrap(), 0.1);
        assert_eq!(c.list("keep_counts").unwrap(), Some(vec![6, 8, 40, 20]));
        assert!(c.render().contains("seed = 7 (set)"));
    }

    #[test]
    fn rejects_unknown_and_reports_missing() {
        assert!(matches!(ExperimentConfig::parse("sede = 1"), Err(Error::Config(_))));
        assert!(ExperimentConfig::parse("no equals sign").is_err());
        let err = ExperimentConfig::default().require(&["dims", "seed", "model_in"]).unwrap_err();
        assert_eq!(err.to_string(), "config error: missing config keys: dims, model_in");
    }

    #[test]
    fn args_apply_in_order() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("run.conf");
        std::fs::write(&file, "seed = 3\nk = 40\n").unwrap();
        let args = ["k=10".to_string(), file.display().to_string(), "seed=9".to_string()];
        let c = ExperimentConfig::from_args(&[("dims", "100,20"), ("k", "5")], args).unwrap();
        assert_eq!(c.get("dims"), Some("100,20"));
        assert_eq!(c.value::<usize>("k").unwrap(), 40);
        assert_eq!(c.seed().unwrap(), 9);
        assert!(ExperimentConfig::from_args(&[], ["missing.conf"]).is_err());
    }

    #[test]
    fn estimator_parsing() {
        let mut c = ExperimentConfig::default();
        assert_eq!(c.estimator().unwrap(), Estimator::AnalyticMean);
        c.set_pair("estimator=implicit_mc").unwrap();
        c.set_pair("k=20").unwrap();
        assert_eq!(c.estimator().unwrap(), Estimator::ImplicitMc { k: 20 });
        c.set_pair("estimator=other").unwrap();
        assert!(c.estimator().is_err());
    }
}
