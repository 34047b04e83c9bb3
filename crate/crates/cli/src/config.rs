//! Job configuration: a list of ensembles crossed with a list of analyses.

use std::collections::BTreeMap;
use std::path::PathBuf;

use ccgldpc::ensemble::parse_degrees;
use ccgldpc::{Component, Coupling, DeConfig, EnsembleSpec};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("no ensembles given")]
    Empty,
    #[error("no analyses given")]
    NoAnalyses,
    #[error("ensemble #{index}: {source}")]
    Spec { index: usize, source: ccgldpc::SpecError },
    #[error("{0}")]
    Invalid(String),
    #[error("cannot read config {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("cannot parse config {path}: {source}")]
    Parse { path: PathBuf, source: serde_json::Error },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Analysis {
    Bp,
    Map,
    ExitCurve,
    Dmin,
    Wenum,
    Transfer,
}

impl Analysis {
    pub fn name(self) -> &'static str {
        match self {
            Analysis::Bp => "bp",
            Analysis::Map => "map",
            Analysis::ExitCurve => "exit-curve",
            Analysis::Dmin => "dmin",
            Analysis::Wenum => "wenum",
            Analysis::Transfer => "transfer",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

/// One ensemble, written the way the command line takes it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleEntry {
    /// `"dv,dc"`.
    pub ensemble: String,
    /// `"ldpc"` or `"conv:NUM/DEN"` (octal).
    pub component: String,
    /// `"uncoupled"` or `"m,L"`.
    #[serde(default = "uncoupled")]
    pub coupling: String,
    /// Published values per analysis, echoed next to the computed ones.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub reference: BTreeMap<String, f64>,
}

fn uncoupled() -> String {
    "uncoupled".into()
}

impl EnsembleEntry {
    pub fn spec(&self) -> Result<EnsembleSpec, ccgldpc::SpecError> {
        let (dv, dc) = parse_degrees(&self.ensemble)?;
        let component: Component = self.component.parse()?;
        let coupling: Coupling = self.coupling.parse()?;
        EnsembleSpec::new(dv, dc, component, coupling)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    pub max_iterations: usize,
    pub target: f64,
    pub stall_tol: f64,
}

impl From<Tolerances> for DeConfig {
    fn from(t: Tolerances) -> Self {
        DeConfig { max_iterations: t.max_iterations, target: t.target, stall_tol: t.stall_tol }
    }
}

fn default_resolution() -> f64 {
    1e-4
}

fn default_alpha() -> f64 {
    0.5
}

fn default_exit_step() -> f64 {
    5e-3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JobConfig {
    pub ensembles: Vec<EnsembleEntry>,
    pub analyses: Vec<Analysis>,
    /// Bisection width for BP, agreement between grid halvings for MAP.
    #[serde(default = "default_resolution")]
    pub resolution: f64,
    /// DE tolerances; the per-ensemble defaults apply when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerances: Option<Tolerances>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Segments per constraint node (`N`) for `dmin` and `wenum`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub segments: Vec<usize>,
    /// Block lengths `n` for `dmin` and `wenum`, each ensemble using `N = n / d_c`;
    /// an alternative to `segments` that compares ensembles at matched length.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub block_lengths: Vec<usize>,
    /// Weight cap; `dmin` doubles it from 32 while the bound is truncated when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cap: Option<usize>,
    /// `dmin` on the two-encoder braided structure instead of the single-edge ensemble.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub structured: bool,
    #[serde(default = "default_exit_step")]
    pub exit_step: f64,
    /// `(q_s, q_p)` pairs for `transfer`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub points: Vec<(f64, f64)>,
    /// Trellis sections for the Monte-Carlo cross-check of `transfer`; none when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mc_sections: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub format: Format,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
}

impl JobConfig {
    pub fn new(ensembles: Vec<EnsembleEntry>, analyses: Vec<Analysis>) -> Self {
        JobConfig {
            ensembles,
            analyses,
            resolution: default_resolution(),
            tolerances: None,
            alpha: default_alpha(),
            segments: Vec::new(),
            block_lengths: Vec::new(),
            cap: None,
            structured: false,
            exit_step: default_exit_step(),
            points: Vec::new(),
            mc_sections: None,
            seed: 0,
            out: None,
            format: Format::Csv,
            workers: None,
        }
    }

    pub fn from_json(text: &str, path: &std::path::Path) -> Result<Self, ConfigError> {
        serde_json::from_str(text).map_err(|source| ConfigError::Parse { path: path.to_path_buf(), source })
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.to_path_buf(), source })?;
        Self::from_json(&text, path)
    }

    /// Checks every setting and returns the parsed ensembles in config order.
    pub fn validate(&self) -> Result<Vec<EnsembleSpec>, ConfigError> {
        if self.ensembles.is_empty() {
            return Err(ConfigError::Empty);
        }
        if self.analyses.is_empty() {
            return Err(ConfigError::NoAnalyses);
        }
        let specs = self
            .ensembles
            .iter()
            .enumerate()
            .map(|(index, e)| e.spec().map_err(|source| ConfigError::Spec { index, source }))
            .collect::<Result<Vec<_>, _>>()?;
        let invalid = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        if !(self.resolution >= 1e-6 && self.resolution < 0.5) {
            return invalid("resolution must lie in [1e-6, 0.5)");
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return invalid("alpha must lie in (0, 1)");
        }
        if !(self.exit_step > 0.0 && self.exit_step <= 0.1) {
            return invalid("exit_step must lie in (0, 0.1]");
        }
        if let Some(t) = self.tolerances {
            DeConfig::from(t).validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        }
        let needs_segments = self.analyses.iter().any(|a| matches!(a, Analysis::Dmin | Analysis::Wenum));
        if needs_segments {
            match (self.segments.is_empty(), self.block_lengths.is_empty()) {
                (true, true) => return invalid("dmin and wenum need segment counts or block lengths"),
                (false, false) => return invalid("give either segments or block_lengths, not both"),
                _ => {}
            }
            if self.segments.contains(&0) || self.block_lengths.contains(&0) {
                return invalid("segment counts and block lengths must be positive");
            }
            for (spec, n) in specs.iter().flat_map(|s| self.block_lengths.iter().map(move |&n| (s, n))) {
                if n % spec.dc as usize != 0 {
                    return Err(ConfigError::Invalid(format!("block length {n} is not a multiple of d_c = {}", spec.dc)));
                }
            }
        }
        if self.analyses.contains(&Analysis::Wenum) && self.cap.is_none() {
            return invalid("wenum needs a weight cap");
        }
        if self.analyses.contains(&Analysis::Transfer) {
            if self.points.is_empty() {
                return invalid("transfer needs at least one (q_s, q_p) point");
            }
            if self.points.iter().any(|&(a, b)| !(0.0..=1.0).contains(&a) || !(0.0..=1.0).contains(&b)) {
                return invalid("transfer points must lie in [0, 1]^2");
            }
            if matches!(self.mc_sections, Some(n) if n < 1000) {
                return invalid("mc_sections must be at least 1000");
            }
        }
        if self.workers == Some(0) {
            return invalid("workers must be positive");
        }
        Ok(specs)
    }

    /// Sorted, distinct segment counts `N` used for `spec`.
    pub fn segments_for(&self, spec: &EnsembleSpec) -> Vec<usize> {
        let mut s = if self.block_lengths.is_empty() {
            self.segments.clone()
        } else {
            self.block_lengths.iter().map(|n| n / spec.dc as usize).collect()
        };
        s.sort_unstable();
        s.dedup();
        s
    }

    /// SHA-256 over the settings that determine the results (output
    /// location, format and worker count excluded).
    pub fn hash(&self) -> String {
        let canonical = JobConfig { out: None, format: Format::Csv, workers: None, ..self.clone() };
        let bytes = serde_json::to_vec(&canonical).expect("config serialises");
        Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
    }
}
