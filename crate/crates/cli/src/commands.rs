use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use serde::Serialize;
use serde_json::json;
use tcl_chaos::basis::{build_impurity_basis_with_budget, build_sector_basis_with_budget};
use tcl_chaos::classical::{ground_state, poincare_section_with, SectionOptions};
use tcl_chaos::crossover::{extract_map, sweep, DiagnosticCurve, ModelKind, SweepModel};
use tcl_chaos::hamiltonian::{assemble_impurity_hamiltonian, assemble_lattice_hamiltonian};
use tcl_chaos::par::with_workers;
use tcl_chaos::sff::{log_time_grid, sff};
use tcl_chaos::spectra::{diagonalize_with_budget, trim_spectrum, Spectrum, TrimRecord};
use tcl_chaos::stats::{gap_ratios, mean_r_goe, mean_r_poisson, stats_report, FitMethod};
use tcl_chaos::unfolding::{dos_histogram, unfold, UnfoldedSpectrum};

use crate::config::{ModelChoice, RunConfig};
use crate::manifest::{Artifacts, Manifest};
use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Spectrum,
    Unfold,
    Stats,
    Sff,
    Sweep,
    Map,
    Poincare,
    Plot,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Spectrum => "spectrum",
            Command::Unfold => "unfold",
            Command::Stats => "stats",
            Command::Sff => "sff",
            Command::Sweep => "sweep",
            Command::Map => "map",
            Command::Poincare => "poincare",
            Command::Plot => "plot",
        }
    }
}

impl FromStr for Command {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        Ok(match s {
            "spectrum" => Command::Spectrum,
            "unfold" => Command::Unfold,
            "stats" => Command::Stats,
            "sff" => Command::Sff,
            "sweep" => Command::Sweep,
            "map" => Command::Map,
            "poincare" => Command::Poincare,
            "plot" => Command::Plot,
            other => return Err(CliError::Config(format!("unknown command `{other}`"))),
        })
    }
}

/// What a finished run produced.
#[derive(Debug)]
pub struct RunReport {
    pub manifest: std::path::PathBuf,
    pub outputs: Vec<std::path::PathBuf>,
    pub summary: serde_json::Value,
}

/// Runs `command` under `cfg` on a pool of `cfg.run.workers` threads and
/// writes the manifest.
pub fn run(command: Command, cfg: &RunConfig) -> Result<RunReport, CliError> {
    let start = Instant::now();
    let mut art = Artifacts::new(&cfg.run.out)?;
    let summary = with_workers(cfg.run.workers, || dispatch(command, cfg, &mut art))?;
    let manifest = Manifest {
        command: command.name(),
        tool_version: env!("CARGO_PKG_VERSION"),
        library_version: env!("CARGO_PKG_VERSION"),
        parallel: tcl_chaos::par::is_parallel(),
        config: cfg,
        inputs: &art.inputs,
        outputs: &art.outputs,
        summary: summary.clone(),
        wall_time_s: start.elapsed().as_secs_f64(),
    }
    .write(art.dir())?;
    Ok(RunReport {
        manifest,
        outputs: art.outputs.iter().map(|r| art.dir().join(&r.path)).collect(),
        summary,
    })
}

fn dispatch(command: Command, cfg: &RunConfig, art: &mut Artifacts) -> Result<serde_json::Value, CliError> {
    match command {
        Command::Spectrum => spectrum(cfg, art),
        Command::Unfold => unfold_cmd(cfg, art),
        Command::Stats => stats(cfg, art),
        Command::Sff => sff_cmd(cfg, art),
        Command::Sweep => sweep_cmd(cfg, art),
        Command::Map => map(cfg, art),
        Command::Poincare => poincare(cfg, art),
        Command::Plot => crate::plot::plot_all(art),
    }
}

fn model_kind(cfg: &RunConfig) -> ModelKind {
    cfg.model.kind.into()
}

fn compute_spectrum(cfg: &RunConfig) -> Result<(Spectrum, usize), CliError> {
    let max_dim = cfg.pipeline.max_dim;
    let h = match cfg.model.kind {
        ModelChoice::Lattice => {
            let basis = build_sector_basis_with_budget(&cfg.model.lattice(), cfg.pipeline.n_ex, cfg.pipeline.parity, max_dim)?;
            assemble_lattice_hamiltonian(&basis)?
        }
        ModelChoice::Impurity => {
            let basis = build_impurity_basis_with_budget(&cfg.model.impurity(), max_dim)?;
            assemble_impurity_hamiltonian(&basis)?
        }
    };
    let dim = h.dim();
    Ok((diagonalize_with_budget(&h, max_dim)?, dim))
}

/// Spectrum from `[input] spectrum` if set, otherwise from the model, with
/// the model kind used for default trims (`None` for file input).
fn source_spectrum(cfg: &RunConfig, art: &mut Artifacts) -> Result<(Spectrum, Option<ModelKind>), CliError> {
    match &cfg.input.spectrum {
        Some(p) => {
            let data = art.read_input(p)?;
            Ok((Spectrum::read_csv(&data[..])?, None))
        }
        None => Ok((compute_spectrum(cfg)?.0, Some(model_kind(cfg)))),
    }
}

fn trimmed_and_unfolded(cfg: &RunConfig, art: &mut Artifacts) -> Result<(Spectrum, UnfoldedSpectrum), CliError> {
    let (raw, kind) = source_spectrum(cfg, art)?;
    let opts = cfg.pipeline.options(kind);
    let trimmed = trim_spectrum(&raw, opts.drop_low_frac, opts.drop_high_frac)?;
    let unfolded = unfold(&trimmed, opts.degree)?;
    Ok((raw, unfolded))
}

fn spectrum(cfg: &RunConfig, art: &mut Artifacts) -> Result<serde_json::Value, CliError> {
    let (spec, dim) = compute_spectrum(cfg)?;
    art.write_with("spectrum.csv", |w| spec.write_csv(w))?;
    Ok(json!({ "dim": dim, "levels": spec.len() }))
}

fn unfold_cmd(cfg: &RunConfig, art: &mut Artifacts) -> Result<serde_json::Value, CliError> {
    let (raw, unfolded) = trimmed_and_unfolded(cfg, art)?;
    let trimmed = &unfolded.source;
    let bins = cfg.pipeline.dos_bins;
    art.write_with("spectrum_trimmed.csv", |w| trimmed.write_csv(w))?;
    art.write_with("unfolded.csv", |w| unfolded.write_csv(w))?;
    art.write_with("dos_raw.csv", |w| dos_histogram(trimmed.values(), bins)?.write_csv(w))?;
    art.write_with("dos_unfolded.csv", |w| dos_histogram(unfolded.values(), bins)?.write_csv(w))?;
    Ok(json!({
        "levels": raw.len(),
        "levels_used": unfolded.len(),
        "degree": unfolded.fit.degree(),
        "residual": unfolded.residual,
        "condition": unfolded.condition,
        "mean_spacing": unfolded.mean_spacing(),
    }))
}

#[derive(Serialize)]
struct StatsSummary<'a> {
    params: &'a str,
    trims: &'a [TrimRecord],
    n_levels_used: usize,
    b: f64,
    b_std_err: f64,
    b_method: FitMethod,
    mean_r: f64,
    mean_r_std_err: f64,
    mean_r_poisson: f64,
    mean_r_goe: f64,
}

fn stats(cfg: &RunConfig, art: &mut Artifacts) -> Result<serde_json::Value, CliError> {
    let (_, unfolded) = trimmed_and_unfolded(cfg, art)?;
    let report = stats_report(&unfolded, cfg.pipeline.fit)?;
    let ratios = gap_ratios(&unfolded.source)?;
    let summary = StatsSummary {
        params: &report.params,
        trims: &unfolded.source.provenance.trims,
        n_levels_used: report.n_levels_used,
        b: report.b,
        b_std_err: report.b_std_err,
        b_method: report.b_method,
        mean_r: ratios.mean_r,
        mean_r_std_err: ratios.std_err,
        mean_r_poisson: mean_r_poisson(),
        mean_r_goe: mean_r_goe(),
    };
    art.write_with("unfolded.csv", |w| unfolded.write_csv(w))?;
    art.write_with("spacing.csv", |w| report.histograms.spacing.write_csv(w))?;
    art.write_with("ratio.csv", |w| report.histograms.ratio.write_csv(w))?;
    art.write_json("stats.json", &summary)?;
    Ok(json!({ "b": report.b, "mean_r": ratios.mean_r, "n_levels_used": report.n_levels_used }))
}

fn sff_cmd(cfg: &RunConfig, art: &mut Artifacts) -> Result<serde_json::Value, CliError> {
    let (_, unfolded) = trimmed_and_unfolded(cfg, art)?;
    let p = &cfg.pipeline;
    let times = log_time_grid(p.t_min, p.t_max, p.time_points)?;
    let curve = sff(&unfolded, p.block_size, &times)?;
    art.write_with("sff.csv", |w| curve.write_csv(w))?;
    Ok(json!({ "n_blocks": curve.n_blocks, "block_size": curve.block_size, "levels_used": unfolded.len() }))
}

fn sweep_cmd(cfg: &RunConfig, art: &mut Artifacts) -> Result<serde_json::Value, CliError> {
    if cfg.sweep.grid.is_empty() {
        return Err(CliError::Config("sweep needs a non-empty `[sweep] grid`".into()));
    }
    let model = match cfg.model.kind {
        ModelChoice::Lattice => SweepModel::Lattice {
            params: cfg.model.lattice(),
            n_ex: cfg.pipeline.n_ex,
            parity: cfg.pipeline.parity,
        },
        ModelChoice::Impurity => SweepModel::Impurity {
            params: cfg.model.impurity(),
        },
    };
    let curve = sweep(&model, &cfg.sweep.grid, &cfg.pipeline.options(Some(model.kind())))?;
    art.write_with("curve.csv", |w| curve.write_csv(w))?;
    let flagged: Vec<_> = curve
        .points
        .iter()
        .filter(|p| !p.flags.is_empty())
        .map(|p| json!({ "control": p.control, "flags": p.flags }))
        .collect();
    Ok(json!({ "points": curve.points.len(), "failed": curve.failed, "flagged": flagged }))
}

fn read_curve(path: Option<&Path>, what: &str, art: &mut Artifacts) -> Result<DiagnosticCurve, CliError> {
    let path = path.ok_or_else(|| CliError::Config(format!("map needs `[map] {what}`")))?;
    let data = art.read_input(path)?;
    Ok(DiagnosticCurve::read_csv(&data[..])?)
}

fn map(cfg: &RunConfig, art: &mut Artifacts) -> Result<serde_json::Value, CliError> {
    let lattice = read_curve(cfg.map.lattice_curve.as_deref(), "lattice_curve", art)?;
    let impurity = read_curve(cfg.map.impurity_curve.as_deref(), "impurity_curve", art)?;
    if lattice.model != ModelKind::Lattice || impurity.model != ModelKind::Impurity {
        return Err(CliError::Config(format!(
            "map expects a lattice and an impurity curve, got {} and {}",
            lattice.model, impurity.model
        )));
    }
    let mut windows = serde_json::Map::new();
    for &d in &cfg.map.diagnostics {
        let m = extract_map(&lattice, &impurity, d)?;
        art.write_with(&format!("map_{d}.csv"), |w| m.write_csv(w))?;
        windows.insert(d.to_string(), json!({ "window": m.window, "value_window": m.value_window }));
    }
    Ok(serde_json::Value::Object(windows))
}

#[derive(Serialize)]
struct TrajectorySummary {
    crossings: usize,
    truncated: bool,
    accepted_steps: usize,
    rejected_steps: usize,
    max_energy_error: f64,
}

fn poincare(cfg: &RunConfig, art: &mut Artifacts) -> Result<serde_json::Value, CliError> {
    let params = cfg.classical();
    let pc = &cfg.poincare;
    let (_, e0) = ground_state(&params)?;
    let energy = match (pc.energy, pc.energy_above_ground) {
        (Some(_), Some(_)) => return Err(CliError::Config("set only one of `energy` and `energy_above_ground`".into())),
        (Some(e), None) => e,
        (None, Some(d)) => e0 + d,
        (None, None) => e0 + 1.0,
    };
    let opts = SectionOptions {
        tol: pc.tol,
        max_time: pc.max_time,
    };
    let section = poincare_section_with(&params, energy, pc.n_seeds, pc.n_crossings, cfg.run.seed, &opts)?;
    art.write_with("section.csv", |w| section.write_csv(w))?;
    let trajectories: Vec<TrajectorySummary> = section
        .trajectories
        .iter()
        .map(|t| TrajectorySummary {
            crossings: t.points.len(),
            truncated: t.truncated,
            accepted_steps: t.stats.accepted,
            rejected_steps: t.stats.rejected,
            max_energy_error: t.max_energy_error,
        })
        .collect();
    let proxy = section.dimension_proxy();
    art.write_json(
        "section.json",
        &json!({
            "params": section.params,
            "energy": energy,
            "ground_energy": e0,
            "direction": section.direction,
            "seed": section.seed,
            "options": section.options,
            "dimension_proxy": proxy,
            "trajectories": trajectories,
        }),
    )?;
    Ok(json!({ "energy": energy, "dimension_proxy": proxy }))
}
