//! Run configuration: defaults, then a flat `key=value` file, then flags.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use spgnn::graph::{parse_tu_dataset, select_k, Dataset};
use spgnn::model::ModelConfig;
use spgnn::train::{default_l2, TrainConfig};
use spgnn::{Error, Result};

/// Name of the resolved-configuration echo written to every output
/// directory. Passing it back through `--config` reproduces the run.
pub const CONFIG_ECHO: &str = "config.txt";

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub dataset: String,
    pub data_dir: PathBuf,
    pub social: bool,
    pub model: ModelConfig,
    /// `None` applies the dataset-size rule.
    pub k: Option<usize>,
    pub train: TrainConfig,
    /// `None` applies the large-graph L2 rule.
    pub l2: Option<f64>,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset: String::new(),
            data_dir: PathBuf::from("data"),
            social: false,
            model: ModelConfig::default(),
            k: None,
            train: TrainConfig::default(),
            l2: None,
            out: PathBuf::from("out"),
        }
    }
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Config(format!(
            "{key}: expected true or false, got `{value}`"
        ))),
    }
}

impl RunConfig {
    /// Applies one key. Unknown keys are configuration errors naming the key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "dataset" => self.dataset = value.to_string(),
            "data_dir" => self.data_dir = PathBuf::from(value),
            "social" => self.social = parse_bool(key, value)?,
            "out" => self.out = PathBuf::from(value),
            "k" => {
                self.k = match value {
                    "auto" => None,
                    v => Some(v.parse().map_err(|_| {
                        Error::Config(format!("k: expected an integer or `auto`, got `{v}`"))
                    })?),
                }
            }
            "l2" => {
                self.l2 = match value {
                    "auto" => None,
                    v => Some(v.parse().map_err(|_| {
                        Error::Config(format!("l2: expected a number or `auto`, got `{v}`"))
                    })?),
                }
            }
            _ => {
                if !self.model.set(key, value)? && !self.train.set(key, value)? {
                    return Err(Error::Config(format!("unknown configuration key `{key}`")));
                }
            }
        }
        Ok(())
    }

    /// Applies a `key=value` file; blank lines and `#` comments are ignored.
    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = fs::read_to_string(path).map_err(|_| Error::MissingFile(path.to_path_buf()))?;
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("{}:{}: expected key=value", path.display(), i + 1))
            })?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    pub fn dataset_dir(&self) -> PathBuf {
        let direct = Path::new(&self.dataset);
        if direct.components().count() > 1 {
            direct.to_path_buf()
        } else {
            self.data_dir.join(&self.dataset)
        }
    }

    pub fn dataset_name(&self) -> String {
        Path::new(&self.dataset)
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default()
    }

    pub fn load_dataset(&self) -> Result<Dataset> {
        if self.dataset.is_empty() {
            return Err(Error::Config("no dataset given (use --dataset)".into()));
        }
        parse_tu_dataset(self.dataset_dir(), &self.dataset_name())
    }

    /// Pooling-size candidates after applying the override or the size rule.
    pub fn k_candidates(&self, d: &Dataset) -> Vec<usize> {
        match self.k {
            Some(k) => vec![k],
            None => select_k(d, self.social).candidates(),
        }
    }

    /// Training configuration with the L2 rule resolved.
    pub fn resolved_train(&self, d: &Dataset) -> TrainConfig {
        TrainConfig {
            l2_lambda: self.l2.unwrap_or_else(|| default_l2(d)),
            ..self.train.clone()
        }
    }

    /// Every key, in a fixed order, as accepted by [`RunConfig::set`].
    pub fn echo(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "dataset={}", self.dataset);
        let _ = writeln!(out, "data_dir={}", self.data_dir.display());
        let _ = writeln!(out, "social={}", self.social);
        for (k, v) in self.model.to_kv() {
            if k == "k" {
                let _ = writeln!(
                    out,
                    "k={}",
                    self.k.map_or("auto".to_string(), |k| k.to_string())
                );
            } else {
                let _ = writeln!(out, "{k}={v}");
            }
        }
        for (k, v) in self.train.to_kv() {
            if k == "l2" {
                let _ = writeln!(
                    out,
                    "l2={}",
                    self.l2.map_or("auto".to_string(), |l| l.to_string())
                );
            } else {
                let _ = writeln!(out, "{k}={v}");
            }
        }
        let _ = writeln!(out, "out={}", self.out.display());
        out
    }
}
