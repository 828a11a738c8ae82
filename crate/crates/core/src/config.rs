//! Run configuration: documented defaults, `key=value` config files, and
//! startup validation.

use crate::error::{Error, Result};
use std::fmt;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FusionMode {
    /// Stack the four view outputs on top of each other (default).
    RowConcat,
    /// Pad all views to the tallest and sum elementwise.
    Sum,
    /// Pad all views to the tallest and concatenate along columns.
    ColConcat,
}

impl FusionMode {
    pub fn as_str(self) -> &'static str {
        match self {
            FusionMode::RowConcat => "row_concat",
            FusionMode::Sum => "sum",
            FusionMode::ColConcat => "col_concat",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "row_concat" => Ok(FusionMode::RowConcat),
            "sum" => Ok(FusionMode::Sum),
            "col_concat" => Ok(FusionMode::ColConcat),
            _ => Err(Error::config(format!("unknown fusion mode '{s}'"))),
        }
    }
}

impl fmt::Display for FusionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProviderKind {
    /// Trainable lookup table, seeded Gaussian init.
    Learned,
    /// Matrices precomputed offline and loaded from CSSM files.
    FileBacked,
}

impl ProviderKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ProviderKind::Learned => "learned",
            ProviderKind::FileBacked => "file",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "learned" => Ok(ProviderKind::Learned),
            "file" => Ok(ProviderKind::FileBacked),
            _ => Err(Error::config(format!("unknown embedding provider '{s}'"))),
        }
    }
}

impl fmt::Display for ProviderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// All tunables in one place. Every field has a documented default; CLI
/// flags override config-file values which override these defaults.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Common width every view is projected to.
    pub d: usize,
    /// Attention heads per view encoder.
    pub n_heads: usize,
    /// Token-embedding width before projection.
    pub d_embed: usize,
    /// Maximum token sequence length; longer snippets are truncated.
    pub t_max: usize,
    /// Row budget for the syntax-tree view.
    pub l_ast: usize,
    /// Row budget for the control-flow view.
    pub l_cfg: usize,
    /// Row budget for the data-flow view.
    pub l_dfg: usize,
    /// Number of convolution kernels.
    pub conv_kernels: usize,
    /// Kernel height.
    pub conv_kh: usize,
    /// Kernel width.
    pub conv_kw: usize,
    /// Hidden width of the classifier MLP.
    pub mlp_hidden: usize,
    /// Adam learning rate.
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Add reverse edges to every structural view before fusion.
    pub metapath: bool,
    pub fusion: FusionMode,
    pub provider: ProviderKind,
    /// Decision threshold on the predicted probability.
    pub threshold: f64,
    /// Minimum corpus frequency for a token to enter the vocabulary.
    pub min_count: usize,
    /// Learn per-head query/key/value projections instead of using raw
    /// column slices.
    pub head_projections: bool,
    /// Add sinusoidal position rows to token embeddings.
    pub positions: bool,
    pub train_ratio: f64,
    pub val_ratio: f64,
    pub test_ratio: f64,
    /// Worker parallelism for per-snippet preprocessing and evaluation.
    pub jobs: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            d: 64,
            n_heads: 4,
            d_embed: 64,
            t_max: 512,
            l_ast: 256,
            l_cfg: 64,
            l_dfg: 64,
            conv_kernels: 8,
            conv_kh: 3,
            conv_kw: 3,
            mlp_hidden: 32,
            lr: 1e-5,
            batch_size: 16,
            epochs: 20,
            seed: 42,
            metapath: true,
            fusion: FusionMode::RowConcat,
            provider: ProviderKind::Learned,
            threshold: 0.5,
            min_count: 1,
            head_projections: false,
            positions: false,
            train_ratio: 0.8,
            val_ratio: 0.1,
            test_ratio: 0.1,
            jobs: 1,
        }
    }
}

impl RunConfig {
    /// Reject invalid combinations before any work happens.
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.n_heads == 0 {
            return Err(Error::config("d and n_heads must be positive"));
        }
        if self.d % self.n_heads != 0 {
            return Err(Error::config(format!(
                "d = {} not divisible by n_heads = {}",
                self.d, self.n_heads
            )));
        }
        if self.d_embed == 0 || self.t_max == 0 {
            return Err(Error::config("d_embed and t_max must be positive"));
        }
        if self.l_ast == 0 || self.l_cfg == 0 || self.l_dfg == 0 {
            return Err(Error::config("view row budgets must be positive"));
        }
        if self.conv_kernels == 0 || self.conv_kh == 0 || self.conv_kw == 0 {
            return Err(Error::config("conv spec must be positive"));
        }
        if self.conv_kh > self.fused_rows() || self.conv_kw > self.fused_cols() {
            return Err(Error::config(format!(
                "conv kernel {}x{} larger than fused matrix {}x{}",
                self.conv_kh,
                self.conv_kw,
                self.fused_rows(),
                self.fused_cols()
            )));
        }
        if self.mlp_hidden == 0 {
            return Err(Error::config("mlp_hidden must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be positive"));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::config("lr must be positive and finite"));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::config("threshold must lie in (0, 1)"));
        }
        if self.min_count == 0 {
            return Err(Error::config("min_count must be at least 1"));
        }
        let ratios = [self.train_ratio, self.val_ratio, self.test_ratio];
        if ratios.iter().any(|r| *r <= 0.0 || !r.is_finite()) {
            return Err(Error::config("split ratios must be positive"));
        }
        if (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::config("split ratios must sum to 1"));
        }
        if self.jobs == 0 {
            return Err(Error::config("jobs must be at least 1"));
        }
        Ok(())
    }

    /// Row count of the fused matrix fed to the convolution.
    pub fn fused_rows(&self) -> usize {
        match self.fusion {
            FusionMode::RowConcat => self.l_ast + self.l_cfg + self.l_dfg + self.t_max,
            FusionMode::Sum | FusionMode::ColConcat => self.max_view_rows(),
        }
    }

    /// Column count of the fused matrix fed to the convolution.
    pub fn fused_cols(&self) -> usize {
        match self.fusion {
            FusionMode::RowConcat | FusionMode::Sum => self.d,
            FusionMode::ColConcat => 4 * self.d,
        }
    }

    pub fn max_view_rows(&self) -> usize {
        self.l_ast.max(self.l_cfg).max(self.l_dfg).max(self.t_max)
    }

    /// Apply one `key=value` setting.
    pub fn apply_kv(&mut self, key: &str, value: &str) -> Result<()> {
        apply_one(self, key, value)
    }

    /// Load settings from a `key=value` file; `#` starts a comment line.
    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)?;
        for (ln, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::config(format!(
                    "{}:{}: expected key=value, got '{line}'",
                    path.display(),
                    ln + 1
                )));
            };
            self.apply_kv(key.trim(), value.trim())?;
        }
        Ok(())
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::config(format!("invalid value '{value}' for '{key}'")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "on" => Ok(true),
        "false" | "0" | "off" => Ok(false),
        _ => Err(Error::config(format!("invalid value '{value}' for '{key}'"))),
    }
}

fn apply_one(cfg: &mut RunConfig, key: &str, value: &str) -> Result<()> {
    match key {
        "d" => cfg.d = parse_num(key, value)?,
        "n_heads" => cfg.n_heads = parse_num(key, value)?,
        "d_embed" => cfg.d_embed = parse_num(key, value)?,
        "t_max" => cfg.t_max = parse_num(key, value)?,
        "l_ast" => cfg.l_ast = parse_num(key, value)?,
        "l_cfg" => cfg.l_cfg = parse_num(key, value)?,
        "l_dfg" => cfg.l_dfg = parse_num(key, value)?,
        "conv_kernels" => cfg.conv_kernels = parse_num(key, value)?,
        "conv_kh" => cfg.conv_kh = parse_num(key, value)?,
        "conv_kw" => cfg.conv_kw = parse_num(key, value)?,
        "mlp_hidden" => cfg.mlp_hidden = parse_num(key, value)?,
        "lr" => cfg.lr = parse_num(key, value)?,
        "batch_size" => cfg.batch_size = parse_num(key, value)?,
        "epochs" => cfg.epochs = parse_num(key, value)?,
        "seed" => cfg.seed = parse_num(key, value)?,
        "metapath" => cfg.metapath = parse_bool(key, value)?,
        "fusion" => cfg.fusion = FusionMode::parse(value)?,
        "provider" => cfg.provider = ProviderKind::parse(value)?,
        "threshold" => cfg.threshold = parse_num(key, value)?,
        "min_count" => cfg.min_count = parse_num(key, value)?,
        "head_projections" => cfg.head_projections = parse_bool(key, value)?,
        "positions" => cfg.positions = parse_bool(key, value)?,
        "train_ratio" => cfg.train_ratio = parse_num(key, value)?,
        "val_ratio" => cfg.val_ratio = parse_num(key, value)?,
        "test_ratio" => cfg.test_ratio = parse_num(key, value)?,
        "jobs" => cfg.jobs = parse_num(key, value)?,
        _ => return Err(Error::config(format!("unknown config key '{key}'"))),
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        RunConfig::default().validate().unwrap();
    }

    #[test]
    fn indivisible_heads_rejected() {
        let cfg = RunConfig {
            d: 10,
            n_heads: 4,
            ..RunConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn kv_roundtrip() {
        let mut cfg = RunConfig::default();
        cfg.apply_kv("d", "16").unwrap();
        cfg.apply_kv("fusion", "sum").unwrap();
        cfg.apply_kv("provider", "file").unwrap();
        cfg.apply_kv("metapath", "false").unwrap();
        assert_eq!(cfg.d, 16);
        assert_eq!(cfg.fusion, FusionMode::Sum);
        assert_eq!(cfg.provider, ProviderKind::FileBacked);
        assert!(!cfg.metapath);
        assert!(cfg.apply_kv("nope", "1").is_err());
    }

    #[test]
    fn oversized_kernel_rejected() {
        let cfg = RunConfig {
            conv_kw: 65,
            ..RunConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn bad_ratios_rejected() {
        let cfg = RunConfig {
            train_ratio: 0.5,
            val_ratio: 0.2,
            test_ratio: 0.2,
            ..RunConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
