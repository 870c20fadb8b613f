//! Run-configuration file: a single TOML document with sections
//! `[source]`, `[[codecs]]`, `[budgets]`, `[output]` plus top-level
//! `seed` and `perception_metric`. Every run is stamped with the SHA-256
//! hash of the canonicalized config and the master seed.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};
use ltc_core::codec::{
    AffineTransform, Codec, CodecConfig, CodecMode, EvalBudget, PerceptionMetric,
};
use ltc_core::lattice::{build_lattice, LatticeFamily};
use ltc_core::metrics::GaussianSpec;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    #[serde(default = "default_metric")]
    pub perception_metric: String,
    pub source: SourceConfig,
    pub codecs: Vec<CodecDescriptor>,
    #[serde(default)]
    pub budgets: BudgetConfig,
    pub output: OutputConfig,
}

fn default_metric() -> String {
    "sliced_w2sq".into()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceConfig {
    pub dim: usize,
    #[serde(default)]
    pub mean: f64,
    #[serde(default = "one")]
    pub var: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CodecDescriptor {
    /// deterministic | pd | sd | qsd
    pub mode: String,
    /// IntegerZ | DnChecker | DnDual | E8 | BarnesWall16
    pub family: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<f64>,
    /// Alternative to `scale`: expanded into one run per entry, in order.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scales: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<u32>,
    #[serde(default = "one")]
    pub analysis_scale: f64,
    #[serde(default = "one")]
    pub synthesis_scale: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BudgetConfig {
    pub rate_outer: usize,
    pub rate_inner: usize,
    pub rate_plugin: usize,
    pub distortion: usize,
    pub perception: usize,
    pub projections: usize,
}

impl Default for BudgetConfig {
    fn default() -> Self {
        let b = EvalBudget::default();
        BudgetConfig {
            rate_outer: b.rate_outer,
            rate_inner: b.rate_inner,
            rate_plugin: b.rate_plugin,
            distortion: b.distortion,
            perception: b.perception,
            projections: b.projections,
        }
    }
}

impl BudgetConfig {
    pub fn to_eval_budget(&self) -> EvalBudget {
        EvalBudget {
            rate_outer: self.rate_outer,
            rate_inner: self.rate_inner,
            rate_plugin: self.rate_plugin,
            distortion: self.distortion,
            perception: self.perception,
            projections: self.projections,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub path: String,
}

/// One expanded run: a codec descriptor pinned to a single scale.
#[derive(Debug, Clone)]
pub struct RunRow {
    pub run_id: usize,
    pub mode: CodecMode,
    pub family: LatticeFamily,
    pub scale: f64,
    pub analysis_scale: f64,
    pub synthesis_scale: f64,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.source.dim == 0 {
            return Err(CliError::Config("[source] dim must be positive".into()));
        }
        if !(self.source.var > 0.0) {
            return Err(CliError::Config("[source] var must be positive".into()));
        }
        if self.codecs.is_empty() {
            return Err(CliError::Config(
                "at least one [[codecs]] entry required".into(),
            ));
        }
        PerceptionMetric::parse(&self.perception_metric)
            .map_err(|e| CliError::Config(e.to_string()))?;
        for (i, c) in self.codecs.iter().enumerate() {
            let ctx = format!("[[codecs]] entry {i}");
            LatticeFamily::parse(&c.family).map_err(|e| CliError::Config(format!("{ctx}: {e}")))?;
            match (c.scale, &c.scales) {
                (Some(_), Some(_)) => {
                    return Err(CliError::Config(format!(
                        "{ctx}: give either scale or scales, not both"
                    )))
                }
                (None, None) => {
                    return Err(CliError::Config(format!(
                        "{ctx}: missing scale (or scales)"
                    )))
                }
                (Some(s), None) if !(s > 0.0) => {
                    return Err(CliError::Config(format!("{ctx}: scale must be positive")))
                }
                (None, Some(list)) if list.is_empty() || list.iter().any(|s| !(*s > 0.0)) => {
                    return Err(CliError::Config(format!(
                        "{ctx}: scales must be a nonempty list of positive reals"
                    )))
                }
                _ => {}
            }
            self.descriptor_mode(c)
                .map_err(|e| CliError::Config(format!("{ctx}: {e}")))?;
        }
        self.budgets
            .to_eval_budget()
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        if self.output.path.is_empty() {
            return Err(CliError::Config("[output] path must not be empty".into()));
        }
        Ok(())
    }

    fn descriptor_mode(&self, c: &CodecDescriptor) -> std::result::Result<CodecMode, String> {
        match c.mode.as_str() {
            "deterministic" => {
                if c.s.is_some() || c.gamma.is_some() {
                    return Err("deterministic mode takes neither s nor gamma".into());
                }
                Ok(CodecMode::Deterministic)
            }
            "pd" => {
                if c.gamma.is_some() {
                    return Err("pd mode takes no gamma".into());
                }
                let s = c.s.unwrap_or(1.0);
                if !(s >= 1.0) {
                    return Err(format!("pd requires s >= 1, got {s}"));
                }
                Ok(CodecMode::Pd { s })
            }
            "sd" => {
                if c.s.is_some() || c.gamma.is_some() {
                    return Err("sd mode takes neither s nor gamma".into());
                }
                Ok(CodecMode::Sd)
            }
            "qsd" => {
                let gamma = c.gamma.ok_or("qsd mode requires gamma")?;
                if gamma < 1 {
                    return Err("qsd requires gamma >= 1".into());
                }
                let s = c.s.unwrap_or(1.0);
                if !(s >= 1.0) {
                    return Err(format!("qsd requires s >= 1, got {s}"));
                }
                Ok(CodecMode::Qsd { gamma, s })
            }
            other => Err(format!("unknown mode '{other}'")),
        }
    }

    /// Expand scale sweeps into individual runs, in config order.
    pub fn rows(&self) -> Result<Vec<RunRow>> {
        let mut rows = Vec::new();
        for c in &self.codecs {
            let family =
                LatticeFamily::parse(&c.family).map_err(|e| CliError::Config(e.to_string()))?;
            let mode = self.descriptor_mode(c).map_err(CliError::Config)?;
            let scales: Vec<f64> = match (&c.scale, &c.scales) {
                (Some(s), None) => vec![*s],
                (None, Some(list)) => list.clone(),
                _ => unreachable!("validated"),
            };
            for scale in scales {
                rows.push(RunRow {
                    run_id: rows.len(),
                    mode,
                    family,
                    scale,
                    analysis_scale: c.analysis_scale,
                    synthesis_scale: c.synthesis_scale,
                });
            }
        }
        Ok(rows)
    }

    pub fn source_spec(&self) -> Result<GaussianSpec> {
        Ok(GaussianSpec::iid(
            self.source.dim,
            self.source.mean,
            self.source.var,
        )?)
    }

    pub fn metric(&self) -> PerceptionMetric {
        PerceptionMetric::parse(&self.perception_metric).expect("validated")
    }

    /// Build the runnable codec for one expanded row.
    pub fn build_codec(&self, row: &RunRow) -> Result<Codec> {
        let dim = self.source.dim;
        let lattice = build_lattice(row.family, dim, row.scale)?;
        let analysis = AffineTransform::scalar(dim, row.analysis_scale);
        let synthesis = AffineTransform::scalar(dim, row.synthesis_scale);
        let source = self.source_spec()?;
        let cfg = CodecConfig::for_source(row.mode, lattice, analysis, synthesis, &source)?;
        Ok(Codec::new(cfg)?)
    }

    /// SHA-256 of the canonical JSON form, truncated to 16 hex characters.
    pub fn hash(&self) -> String {
        let canon = serde_json::to_string(self).expect("config serializes");
        let mut h = Sha256::new();
        h.update(canon.as_bytes());
        let digest = h.finalize();
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}
