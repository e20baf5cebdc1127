//! The TOML run configuration: training hyperparameters plus I/O, plotting,
//! evaluation and sweep settings.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use udrn::eval::SyntheticSpec;
use udrn::{Error, Result, TrainConfig};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub io: IoConfig,
    /// Generate the data instead of reading `io.input_path`.
    pub synthetic: Option<SyntheticSpec>,
    pub plot: PlotConfig,
    pub eval: EvalConfig,
    pub sweep: SweepConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IoConfig {
    /// Delimited text with a header row, or a `.bin` matrix file.
    pub input_path: Option<PathBuf>,
    /// Header name of the label column in delimited input.
    pub label_column: Option<String>,
    pub delimiter: char,
    pub output_dir: PathBuf,
}

impl Default for IoConfig {
    fn default() -> Self {
        Self {
            input_path: None,
            label_column: None,
            delimiter: ',',
            output_dir: PathBuf::from("udrn-out"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlotFormat {
    Svg,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColorBy {
    Label,
    None,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlotConfig {
    pub format: PlotFormat,
    /// Marker radius in pixels.
    pub point_size: f64,
    pub color_by: ColorBy,
}

impl Default for PlotConfig {
    fn default() -> Self {
        Self {
            format: PlotFormat::Svg,
            point_size: 2.5,
            color_by: ColorBy::Label,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SmdSpace {
    /// Rank in the selected input columns.
    Selected,
    /// Rank in the backbone output.
    Latent,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub knn_k: usize,
    pub split_seed: u64,
    pub smd_k: usize,
    pub smd_space: SmdSpace,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            knn_k: 5,
            split_seed: 0,
            smd_k: 10,
            smd_space: SmdSpace::Selected,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub kinds: Vec<String>,
    /// Augmentation strengths; zero disables augmentation for every kind.
    pub values: Vec<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            kinds: vec!["uniform".into(), "bernoulli".into(), "normal".into()],
            values: vec![0.0, 0.03, 0.05, 0.08, 0.1, 0.3, 0.5],
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::config(format!("invalid config: {e}")))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        // Relative input paths resolve against the config file's directory.
        if let (Some(input), Some(dir)) = (&cfg.io.input_path, path.parent()) {
            if input.is_relative() {
                cfg.io.input_path = Some(dir.join(input));
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config(format!("config does not serialize: {e}")))
    }

    /// Sets the root seed of both the trainer and the synthetic generator.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.train.seed = seed;
        if let Some(s) = &mut self.synthetic {
            s.seed = seed;
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        match (&self.io.input_path, &self.synthetic) {
            (Some(_), Some(_)) => {
                return Err(Error::config("set either io.input_path or [synthetic], not both"));
            }
            (None, None) => return Err(Error::config("no data source: set io.input_path or a [synthetic] section")),
            (Some(p), None) if !p.exists() => {
                return Err(Error::config(format!("io.input_path {} does not exist", p.display())));
            }
            (_, Some(s)) => s.validate()?,
            _ => {}
        }
        if !self.io.delimiter.is_ascii() {
            return Err(Error::config("io.delimiter must be a single ASCII character"));
        }
        if !(self.plot.point_size > 0.0 && self.plot.point_size.is_finite()) {
            return Err(Error::config("plot.point_size must be > 0"));
        }
        if self.eval.knn_k < 1 || self.eval.smd_k < 1 {
            return Err(Error::config("eval.knn_k and eval.smd_k must be >= 1"));
        }
        let registry = udrn::augment::augmenter_registry();
        for kind in &self.sweep.kinds {
            registry.get(kind)?;
        }
        if let Some(v) = self.sweep.values.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
            return Err(Error::config(format!("sweep.values must be finite and >= 0, got {v}")));
        }
        Ok(())
    }
}
