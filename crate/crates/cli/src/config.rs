//! Run configuration: a TOML file with one table per concern, overridable
//! from the environment and then from command-line flags.
//!
//! Environment overrides use `TCL_CHAOS__<SECTION>__<KEY>=<value>`; the value
//! is read as a TOML literal when it parses as one and as a string otherwise.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tcl_chaos::basis::{ImpurityParams, LatticeParams, Parity};
use tcl_chaos::classical::ClassicalParams;
use tcl_chaos::crossover::{Diagnostic, ModelKind, PipelineOptions};
use tcl_chaos::stats::FitMethod;

use crate::CliError;

pub const ENV_PREFIX: &str = "TCL_CHAOS__";

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub pipeline: PipelineConfig,
    pub sweep: SweepConfig,
    pub map: MapConfig,
    pub poincare: PoincareConfig,
    pub input: InputConfig,
    pub run: RunSection,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelChoice {
    Lattice,
    Impurity,
}

impl From<ModelChoice> for ModelKind {
    fn from(m: ModelChoice) -> Self {
        match m {
            ModelChoice::Lattice => ModelKind::Lattice,
            ModelChoice::Impurity => ModelKind::Impurity,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub kind: ModelChoice,
    pub sites: usize,
    pub spins: usize,
    pub lambda: f64,
    pub hopping: f64,
    pub omega_c: f64,
    pub omega_s: f64,
    pub mu: f64,
    pub n_cutoff: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            kind: ModelChoice::Lattice,
            sites: 3,
            spins: 8,
            lambda: 1.0,
            hopping: 0.5,
            omega_c: 1.0,
            omega_s: 1.0,
            mu: 1.0,
            n_cutoff: 128,
        }
    }
}

impl ModelConfig {
    pub fn lattice(&self) -> LatticeParams {
        LatticeParams {
            sites: self.sites,
            spins: self.spins,
            lambda: self.lambda,
            hopping: self.hopping,
            omega_c: self.omega_c,
            omega_s: self.omega_s,
        }
    }

    pub fn impurity(&self) -> ImpurityParams {
        ImpurityParams {
            spins: self.spins,
            lambda: self.lambda,
            mu: self.mu,
            omega_c: self.omega_c,
            omega_s: self.omega_s,
            n_cutoff: self.n_cutoff,
        }
        .normalized()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub n_ex: u32,
    pub parity: Parity,
    /// Unset trims fall back to the per-model defaults for computed spectra
    /// and to no trimming for spectra read from a file.
    pub drop_low: Option<f64>,
    pub drop_high: Option<f64>,
    pub degree: usize,
    pub fit: FitMethod,
    pub block_size: usize,
    pub t_min: f64,
    pub t_max: f64,
    pub time_points: usize,
    pub max_dim: usize,
    pub dos_bins: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            n_ex: 36,
            parity: Parity::Symmetric,
            drop_low: None,
            drop_high: None,
            degree: tcl_chaos::unfolding::DEFAULT_DEGREE,
            fit: FitMethod::Mle,
            block_size: tcl_chaos::sff::DEFAULT_BLOCK_SIZE,
            t_min: tcl_chaos::sff::DEFAULT_T_MIN,
            t_max: tcl_chaos::sff::DEFAULT_T_MAX,
            time_points: tcl_chaos::sff::DEFAULT_TIME_POINTS,
            max_dim: tcl_chaos::spectra::DEFAULT_MAX_DENSE_DIM,
            dos_bins: 60,
        }
    }
}

impl PipelineConfig {
    /// Trim fractions and fit settings; `kind` is `None` for file input.
    pub fn options(&self, kind: Option<ModelKind>) -> PipelineOptions {
        let base = match kind {
            Some(k) => PipelineOptions::for_model(k),
            None => PipelineOptions {
                drop_low_frac: 0.0,
                drop_high_frac: 0.0,
                degree: self.degree,
                method: self.fit,
            },
        };
        PipelineOptions {
            drop_low_frac: self.drop_low.unwrap_or(base.drop_low_frac),
            drop_high_frac: self.drop_high.unwrap_or(base.drop_high_frac),
            degree: self.degree,
            method: self.fit,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    /// `J/λ` values for the lattice, `μ` values for the impurity.
    pub grid: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MapConfig {
    pub lattice_curve: Option<PathBuf>,
    pub impurity_curve: Option<PathBuf>,
    pub diagnostics: Vec<Diagnostic>,
}

impl Default for MapConfig {
    fn default() -> Self {
        Self {
            lattice_curve: None,
            impurity_curve: None,
            diagnostics: vec![Diagnostic::Brody, Diagnostic::GapRatio],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PoincareConfig {
    /// Energy per spin; exactly one of `energy` and `energy_above_ground`
    /// may be set. Neither means one unit above the classical minimum.
    pub energy: Option<f64>,
    pub energy_above_ground: Option<f64>,
    pub n_seeds: usize,
    pub n_crossings: usize,
    pub tol: f64,
    pub max_time: f64,
}

impl Default for PoincareConfig {
    fn default() -> Self {
        let o = tcl_chaos::classical::SectionOptions::default();
        Self {
            energy: None,
            energy_above_ground: None,
            n_seeds: 8,
            n_crossings: 400,
            tol: o.tol,
            max_time: o.max_time,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InputConfig {
    /// Spectrum CSV to analyse instead of diagonalizing the model.
    pub spectrum: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub out: PathBuf,
    /// Worker threads; 0 uses every available core.
    pub workers: usize,
    pub seed: u64,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            out: PathBuf::from("out"),
            workers: 0,
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn classical(&self) -> ClassicalParams {
        ClassicalParams::from(&self.model.impurity())
    }
}

/// Flag values that take precedence over file and environment.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
    pub seed: Option<u64>,
}

/// Loads `path` (or defaults), applies environment overrides from `env`, then
/// flag overrides. Unknown keys anywhere are an error naming the key.
pub fn load<I>(path: Option<&Path>, env: I, flags: &Overrides) -> Result<RunConfig, CliError>
where
    I: IntoIterator<Item = (String, String)>,
{
    let mut table = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
            text.parse::<toml::Table>().map_err(|e| CliError::Config(format!("{}: {}", p.display(), e.message())))?
        }
        None => toml::Table::new(),
    };
    let mut vars: Vec<(String, String)> = env.into_iter().filter(|(k, _)| k.starts_with(ENV_PREFIX)).collect();
    vars.sort();
    for (key, value) in vars {
        apply_env(&mut table, &key, &value)?;
    }
    let mut cfg: RunConfig = RunConfig::deserialize(toml::Value::Table(table)).map_err(|e| CliError::Config(e.message().to_string()))?;
    if let Some(o) = &flags.out {
        cfg.run.out.clone_from(o);
    }
    if let Some(w) = flags.workers {
        cfg.run.workers = w;
    }
    if let Some(s) = flags.seed {
        cfg.run.seed = s;
    }
    Ok(cfg)
}

fn apply_env(table: &mut toml::Table, key: &str, value: &str) -> Result<(), CliError> {
    let rest = &key[ENV_PREFIX.len()..];
    let (section, field) = rest
        .split_once("__")
        .ok_or_else(|| CliError::Config(format!("environment override `{key}` must look like {ENV_PREFIX}SECTION__KEY")))?;
    let (section, field) = (section.to_ascii_lowercase(), field.to_ascii_lowercase());
    let parsed = format!("v = {value}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(value.to_string()));
    let entry = table.entry(section.clone()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
    match entry {
        toml::Value::Table(t) => {
            t.insert(field, parsed);
            Ok(())
        }
        _ => Err(CliError::Config(format!("`{section}` is not a table"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<RunConfig, CliError> {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        std::fs::write(&p, text).unwrap();
        load(Some(&p), Vec::new(), &Overrides::default())
    }

    #[test]
    fn defaults_follow_the_reference_pipeline() {
        let c = RunConfig::default();
        assert_eq!(c.pipeline.n_ex, 36);
        assert_eq!(c.pipeline.degree, 12);
        assert_eq!(c.pipeline.block_size, 100);
        let o = c.pipeline.options(Some(ModelKind::Impurity));
        assert_eq!((o.drop_low_frac, o.drop_high_frac), (0.1, 0.5));
    }

    #[test]
    fn unknown_keys_are_named() {
        let err = parse("[model]\nspinz = 3\n").unwrap_err().to_string();
        assert!(err.contains("spinz"), "{err}");
        let err = parse("[modle]\n").unwrap_err().to_string();
        assert!(err.contains("modle"), "{err}");
    }

    #[test]
    fn precedence_is_flags_env_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        std::fs::write(&p, "[model]\nspins = 3\nlambda = 0.5\n[run]\nseed = 4\n").unwrap();
        let env = vec![
            ("TCL_CHAOS__MODEL__SPINS".to_string(), "5".to_string()),
            ("TCL_CHAOS__MODEL__KIND".to_string(), "impurity".to_string()),
            ("TCL_CHAOS__RUN__SEED".to_string(), "6".to_string()),
            ("UNRELATED".to_string(), "1".to_string()),
        ];
        let flags = Overrides {
            seed: Some(7),
            ..Overrides::default()
        };
        let c = load(Some(&p), env, &flags).unwrap();
        assert_eq!(c.model.spins, 5);
        assert_eq!(c.model.kind, ModelChoice::Impurity);
        assert_eq!(c.model.lambda, 0.5);
        assert_eq!(c.run.seed, 7);
    }

    #[test]
    fn bad_env_key_is_rejected() {
        let env = vec![("TCL_CHAOS__MODEL__BOGUS".to_string(), "1".to_string())];
        let err = load(None, env, &Overrides::default()).unwrap_err().to_string();
        assert!(err.contains("bogus"), "{err}");
    }
}
