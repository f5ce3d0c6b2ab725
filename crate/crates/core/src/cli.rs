//! Command-line driver. Frequencies in and out are ordinary frequencies in
//! cycles per internal time unit; everything inside the library is angular.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;

use crate::config::{OutputFormat, RunConfig, Task};
use crate::error::{Error, Result};
use crate::estimators::{estimate_s2, estimate_s3, estimate_s4_corr_grid, frame_fft_record, FrameSpec, SpectralEstimate};
use crate::models::ModelBundle;
use crate::polyspectra::{s2_grid, s3_grid, s4_cut_grid, GridKind};
use crate::sme::{simulate_with, InitialState, SimConfig, TrajectoryRecord};
use crate::validation::{default_suite, ValidationReport};

pub const GIT_DESCRIBE: &str = env!("QPOLY_GIT_DESCRIBE");
const DEFAULT_VALIDATE_SEED: u64 = 7;

#[derive(Debug, Parser)]
#[command(name = "qpoly", version, about = "Noise polyspectra of continuously measured quantum systems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory, overrides `output.dir`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads for grid evaluation and estimators.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Overrides `sim.seed` (and seeds the validation suite).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overrides the spectrum or estimate order.
    #[arg(long, global = true, value_parser = clap::value_parser!(u8).range(2..=4))]
    pub order: Option<u8>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Analytic spectrum on the configured grid.
    Spectrum,
    /// Stochastic master equation trajectory.
    Simulate,
    /// Spectra estimated from a trajectory file.
    Estimate,
    /// Built-in oracle suite; exit code 2 if any check fails.
    Validate,
}

impl Command {
    fn task(self) -> Task {
        match self {
            Command::Spectrum => Task::Spectrum,
            Command::Simulate => Task::Simulate,
            Command::Estimate => Task::Estimate,
            Command::Validate => Task::Validate,
        }
    }
}

#[derive(Debug)]
pub enum Outcome {
    Done(Vec<PathBuf>),
    ValidationFailed(Vec<PathBuf>),
}

/// Parses arguments, runs, and maps the result onto the exit code.
pub fn run_from_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(Outcome::Done(files)) => {
            for f in files {
                println!("{}", f.display());
            }
            0
        }
        Ok(Outcome::ValidationFailed(files)) => {
            for f in files {
                println!("{}", f.display());
            }
            eprintln!("validation failed");
            2
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

pub fn execute(cli: &Cli) -> Result<Outcome> {
    let run = || -> Result<Outcome> {
        let cfg = resolve_config(cli)?;
        match cli.command {
            Command::Spectrum => Ok(Outcome::Done(run_spectrum(&need(cfg)?)?)),
            Command::Simulate => Ok(Outcome::Done(run_simulate(&need(cfg)?)?)),
            Command::Estimate => Ok(Outcome::Done(run_estimate(&need(cfg)?)?)),
            Command::Validate => {
                let seed = cli
                    .seed
                    .or_else(|| cfg.as_ref().and_then(|c| c.sim.as_ref()).map(|s| s.seed))
                    .unwrap_or(DEFAULT_VALIDATE_SEED);
                let out = cli
                    .out
                    .clone()
                    .or_else(|| cfg.as_ref().map(|c| c.output.dir.clone()))
                    .unwrap_or_else(|| PathBuf::from("out"));
                let (report, files) = run_validate(seed, &out)?;
                Ok(if report.passed {
                    Outcome::Done(files)
                } else {
                    Outcome::ValidationFailed(files)
                })
            }
        }
    };
    match cli.workers {
        Some(n) => {
            if n == 0 {
                return Err(Error::InvalidArgument("--workers must be at least 1".into()));
            }
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::InvalidArgument(e.to_string()))?;
            pool.install(run)
        }
        None => run(),
    }
}

fn need(cfg: Option<RunConfig>) -> Result<RunConfig> {
    cfg.ok_or_else(|| Error::Config("this subcommand needs --config".into()))
}

/// Loads the config and applies command-line overrides. The subcommand
/// takes precedence over the `task` field.
pub fn resolve_config(cli: &Cli) -> Result<Option<RunConfig>> {
    let Some(path) = &cli.config else {
        return Ok(None);
    };
    let mut cfg = RunConfig::load(path)?;
    let task = cli.command.task();
    if cfg.task != task {
        log::info!("config task {:?} replaced by subcommand {:?}", cfg.task, task);
        cfg.task = task;
    }
    if let Some(dir) = &cli.out {
        cfg.output.dir = dir.clone();
    }
    if let Some(seed) = cli.seed {
        if let Some(sim) = cfg.sim.as_mut() {
            sim.seed = seed;
        }
    }
    if let Some(order) = cli.order {
        if let Some(g) = cfg.grid.as_mut() {
            g.order = order as usize;
        }
        if let Some(e) = cfg.estimate.as_mut() {
            e.order = order as usize;
        }
    }
    cfg.validate()?;
    Ok(Some(cfg))
}

#[derive(Clone, Debug, Serialize)]
pub struct ModelInfo {
    pub name: String,
    pub hash: String,
    pub dim: usize,
    pub time_unit_seconds: f64,
}

impl ModelInfo {
    fn of(m: &ModelBundle) -> Self {
        Self {
            name: m.name.clone(),
            hash: m.hash(),
            dim: m.dim(),
            time_unit_seconds: m.time_unit,
        }
    }
}

/// Sidecar JSON for every output.
#[derive(Clone, Debug, Serialize)]
pub struct RunMetadata {
    pub version: &'static str,
    pub git_describe: &'static str,
    pub task: Task,
    pub order: Option<usize>,
    pub kind: Option<GridKind>,
    pub model: ModelInfo,
    pub beta: f64,
    pub include_shot_noise: bool,
    pub include_measurement_damping: bool,
    pub frequency_unit: String,
    /// Ordinary-frequency axes.
    pub axes: Vec<Vec<f64>>,
    pub seed: Option<u64>,
    pub files: Vec<String>,
    pub notes: Vec<String>,
    pub config: RunConfig,
}

impl RunMetadata {
    fn new(cfg: &RunConfig, model: &ModelBundle) -> Self {
        Self {
            version: env!("CARGO_PKG_VERSION"),
            git_describe: GIT_DESCRIBE,
            task: cfg.task,
            order: None,
            kind: None,
            model: ModelInfo::of(model),
            beta: cfg.measurement.beta,
            include_shot_noise: cfg.measurement.include_shot_noise,
            include_measurement_damping: cfg.measurement.include_measurement_damping,
            frequency_unit: frequency_unit(model.time_unit),
            axes: Vec::new(),
            seed: None,
            files: Vec::new(),
            notes: Vec::new(),
            config: cfg.clone(),
        }
    }

    fn header(&self) -> Vec<String> {
        vec![
            format!("qpoly {} ({})", self.version, self.git_describe),
            format!("model {} hash {}", self.model.name, self.model.hash),
            format!("beta {}", self.beta),
            format!("frequency unit {}", self.frequency_unit),
        ]
    }
}

fn frequency_unit(time_unit: f64) -> String {
    match time_unit {
        t if t == 1.0 => "1/time".into(),
        t if t == 1e-9 => "GHz".into(),
        t if t == 1e-6 => "MHz".into(),
        t => format!("cycles per {t} s"),
    }
}

fn to_angular(f: &[f64]) -> Vec<f64> {
    f.iter().map(|x| 2.0 * PI * x).collect()
}

fn to_ordinary(w: &[f64]) -> Vec<f64> {
    w.iter().map(|x| x / (2.0 * PI)).collect()
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    Ok(BufWriter::new(File::create(path)?))
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

fn comment_lines(w: &mut impl Write, lines: &[String]) -> Result<()> {
    for l in lines {
        writeln!(w, "# {l}")?;
    }
    Ok(())
}

/// Columns sharing a frequency axis.
pub fn write_columns(path: &Path, header: &[String], freq: &[f64], cols: &[(&str, &[f64])]) -> Result<()> {
    let mut file = create(path)?;
    comment_lines(&mut file, header)?;
    let mut w = csv::Writer::from_writer(file);
    let mut names = vec!["freq"];
    names.extend(cols.iter().map(|c| c.0));
    w.write_record(&names).map_err(csv_err)?;
    for (i, f) in freq.iter().enumerate() {
        let mut row = vec![f.to_string()];
        row.extend(cols.iter().map(|c| c.1[i].to_string()));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Row-major matrix; rows follow the first axis.
pub fn write_matrix(path: &Path, header: &[String], rows: usize, cols: usize, values: &[f64]) -> Result<()> {
    let mut file = create(path)?;
    comment_lines(&mut file, header)?;
    writeln!(file, "# rows: first axis ({rows}), columns: second axis ({cols}); axes in the JSON file")?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(file);
    for r in 0..rows {
        w.write_record(values[r * cols..(r + 1) * cols].iter().map(|v| v.to_string()))
            .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut f = create(path)?;
    serde_json::to_writer_pretty(&mut f, value)?;
    writeln!(f)?;
    f.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct DataFile<'a> {
    metadata: &'a RunMetadata,
    data: Vec<(&'a str, &'a [f64])>,
}

struct Emitter<'a> {
    cfg: &'a RunConfig,
    stem: String,
    files: Vec<PathBuf>,
}

impl<'a> Emitter<'a> {
    fn new(cfg: &'a RunConfig, tag: &str) -> Self {
        Self {
            cfg,
            stem: format!("{}_{tag}", cfg.output.prefix),
            files: Vec::new(),
        }
    }

    fn path(&self, suffix: &str) -> PathBuf {
        self.cfg.output.dir.join(format!("{}{suffix}", self.stem))
    }

    /// Writes the named arrays (1-D columns or 2-D matrices) and the metadata.
    fn emit(mut self, meta: &mut RunMetadata, data: &[(&str, &[f64])]) -> Result<Vec<PathBuf>> {
        let header = meta.header();
        match self.cfg.output.format {
            OutputFormat::Csv => {
                if meta.axes.len() == 1 {
                    let p = self.path(".csv");
                    write_columns(&p, &header, &meta.axes[0], data)?;
                    self.files.push(p);
                } else {
                    let (r, c) = (meta.axes[0].len(), meta.axes[1].len());
                    for (name, values) in data {
                        let p = self.path(&format!("_{name}.csv"));
                        write_matrix(&p, &header, r, c, values)?;
                        self.files.push(p);
                    }
                }
                let meta_path = self.path(".json");
                meta.files = self.files.iter().map(|p| file_name(p)).collect();
                write_json(&meta_path, meta)?;
                self.files.push(meta_path);
            }
            OutputFormat::Json => {
                let p = self.path(".json");
                meta.files = vec![file_name(&p)];
                write_json(
                    &p,
                    &DataFile {
                        metadata: meta,
                        data: data.to_vec(),
                    },
                )?;
                self.files.push(p);
            }
        }
        Ok(self.files)
    }
}

fn file_name(p: &Path) -> String {
    p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

pub fn run_spectrum(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let grid = cfg
        .grid
        .as_ref()
        .ok_or_else(|| Error::Config("spectrum needs a [grid] section".into()))?;
    let model = cfg.build_model()?;
    let m = &cfg.measurement;
    let l = model.liouvillian_with_damping(m.beta, m.include_measurement_damping)?;
    let axes = grid.axes()?;
    let mut meta = RunMetadata::new(cfg, &model);
    meta.order = Some(grid.order);
    meta.axes = axes.clone();
    let w: Vec<Vec<f64>> = axes.iter().map(|a| to_angular(a)).collect();
    let em = Emitter::new(cfg, &format!("s{}", grid.order));
    match grid.order {
        2 => {
            meta.kind = Some(GridKind::Full);
            let v = s2_grid(&l, &w[0], m.beta, m.include_shot_noise)?;
            em.emit(&mut meta, &[("s2", &v)])
        }
        3 => {
            meta.kind = Some(GridKind::Full);
            let v = s3_grid(&l, &w[0], &w[1], m.beta)?;
            let re: Vec<f64> = v.iter().map(|z| z.re).collect();
            let im: Vec<f64> = v.iter().map(|z| z.im).collect();
            em.emit(&mut meta, &[("re", &re), ("im", &im)])
        }
        4 => {
            meta.kind = Some(GridKind::S4CorrelationCut);
            let singular = axes[0].iter().any(|&a| a == 0.0 || axes[1].iter().any(|&b| b.abs() == a.abs()))
                || axes[1].contains(&0.0);
            if singular {
                meta.notes.push(
                    "grid touches f1 = 0, f2 = 0 or |f1| = |f2|; coincident pairings are skipped there".into(),
                );
            }
            let v = s4_cut_grid(&l, &w[0], &w[1], m.beta)?;
            em.emit(&mut meta, &[("cut", &v)])
        }
        n => Err(Error::UnsupportedOrder(n)),
    }
}

pub fn run_simulate(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let sim = cfg.sim_section()?;
    let model = cfg.build_model()?;
    let m = &cfg.measurement;
    let mut sc = SimConfig::new(sim.dt, sim.steps, sim.seed, m.beta);
    sc.record_expectation_every = sim.record_expectation_every;
    sc.initial_state = InitialState::Steady;
    let l = model.liouvillian_with_damping(m.beta, m.include_measurement_damping)?;
    let record = simulate_with(l.matrix(), &model.a, l.steady_state(), &sc, model.hash_bytes())?;
    let path = cfg.trajectory_path();
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    record.save(&path)?;
    let mut files = vec![path.clone(), crate::sme::sidecar_path(&path)];
    if !record.expectation.is_empty() {
        let every = record.expectation_every;
        let p = cfg.output.dir.join(format!("{}_expectation.csv", cfg.output.prefix));
        let t: Vec<f64> = (0..record.expectation.len()).map(|k| (k * every) as f64 * sim.dt).collect();
        let mut meta = RunMetadata::new(cfg, &model);
        meta.seed = Some(sim.seed);
        write_columns(&p, &meta.header(), &t, &[("expectation", &record.expectation)])?;
        files.push(p);
    }
    let mut meta = RunMetadata::new(cfg, &model);
    meta.seed = Some(sim.seed);
    meta.files = files.iter().map(|p| file_name(p)).collect();
    let p = cfg.output.dir.join(format!("{}_simulate.json", cfg.output.prefix));
    write_json(&p, &meta)?;
    files.push(p);
    Ok(files)
}

pub fn run_estimate(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let est = cfg
        .estimate
        .as_ref()
        .ok_or_else(|| Error::Config("estimate needs an [estimate] section".into()))?;
    let input = est.input.clone().unwrap_or_else(|| cfg.trajectory_path());
    let record = TrajectoryRecord::load(&input)?;
    let model = cfg.build_model()?;
    let matches = record.model_hash == model.hash_bytes();
    if !matches {
        log::warn!("trajectory was produced by a different model; analytic comparison skipped");
    }
    let mut spec = FrameSpec::new(est.frame_length, est.frames_per_estimate);
    spec.window = est.window;
    let frames = frame_fft_record(&record, &spec)?;
    let mut meta = RunMetadata::new(cfg, &model);
    meta.beta = record.beta;
    meta.seed = Some(record.seed);
    meta.order = Some(est.order);
    meta.notes.push(format!("input {}", input.display()));
    let m = &cfg.measurement;
    let em = Emitter::new(cfg, &format!("est_s{}", est.order));
    let ordinary = |e: &SpectralEstimate| -> Vec<Vec<f64>> { e.axes.iter().map(|a| to_ordinary(a)).collect() };
    match est.order {
        2 => {
            let e = estimate_s2(&frames, &spec)?;
            note_frames(&mut meta, &e);
            meta.kind = Some(GridKind::Full);
            meta.axes = ordinary(&e);
            let mut data: Vec<(&str, &[f64])> = vec![("s2", &e.values), ("std_err", &e.std_err)];
            let analytic;
            if matches {
                let l = model.liouvillian_with_damping(record.beta, m.include_measurement_damping)?;
                analytic = s2_grid(&l, &e.axes[0], record.beta, true)?;
                data.push(("analytic", &analytic));
                meta.notes.push("analytic column includes the shot-noise floor".into());
            }
            em.emit(&mut meta, &data)
        }
        3 => {
            let e = estimate_s3(&frames, &spec, est.s3_max_bin)?;
            note_frames(&mut meta, &e);
            meta.kind = Some(GridKind::Full);
            meta.axes = ordinary(&e);
            em.emit(
                &mut meta,
                &[("re", &e.values), ("im", &e.imag), ("std_err_re", &e.std_err), ("std_err_im", &e.std_err_imag)],
            )
        }
        4 => {
            if est.s4_bins.is_empty() {
                return Err(Error::Config("estimate.s4_bins is empty".into()));
            }
            let mut e = estimate_s4_corr_grid(&frames, &spec, &est.s4_bins)?;
            note_frames(&mut meta, &e);
            let nb = est.s4_bins.len();
            for i in 0..nb {
                e.values[i * nb + i] = f64::NAN;
                e.std_err[i * nb + i] = f64::NAN;
            }
            meta.notes.push("diagonal cells (f1 = f2) are not cut values and are written as NaN".into());
            meta.kind = Some(GridKind::S4CorrelationCut);
            meta.axes = ordinary(&e);
            em.emit(&mut meta, &[("cut", &e.values), ("std_err", &e.std_err)])
        }
        n => Err(Error::UnsupportedOrder(n)),
    }
}

fn note_frames(meta: &mut RunMetadata, e: &SpectralEstimate) {
    meta.notes.push(format!("{} frames in {} groups", e.n_frames, e.n_groups));
}

pub fn run_validate(seed: u64, out: &Path) -> Result<(ValidationReport, Vec<PathBuf>)> {
    let report = default_suite(seed)?;
    #[derive(Serialize)]
    struct Doc<'a> {
        version: &'static str,
        git_describe: &'static str,
        #[serde(flatten)]
        report: &'a ValidationReport,
    }
    let p = out.join("validation.json");
    write_json(
        &p,
        &Doc {
            version: env!("CARGO_PKG_VERSION"),
            git_describe: GIT_DESCRIBE,
            report: &report,
        },
    )?;
    for c in &report.checks {
        log::info!(
            "{} {}: {:.3e} (tolerance {:.1e})",
            if c.passed { "pass" } else { "FAIL" },
            c.name,
            c.measured,
            c.tolerance
        );
    }
    Ok((report, vec![p]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_flags() {
        let cli = Cli::try_parse_from(["qpoly", "spectrum", "--config", "a.toml", "--order", "3", "--workers", "2"]).unwrap();
        assert_eq!(cli.command, Command::Spectrum);
        assert_eq!(cli.order, Some(3));
        assert!(Cli::try_parse_from(["qpoly", "spectrum", "--order", "5"]).is_err());
        assert!(Cli::try_parse_from(["qpoly", "frobnicate"]).is_err());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(run_from_args(["qpoly", "spectrum"]), 1);
        assert_eq!(run_from_args(["qpoly", "spectrum", "--config", "/nonexistent.toml"]), 1);
        assert_eq!(run_from_args(["qpoly", "--bogus"]), 1);
    }

    #[test]
    fn units() {
        assert_eq!(frequency_unit(1e-9), "GHz");
        let w = to_angular(&[1.0]);
        assert!((to_ordinary(&w)[0] - 1.0).abs() < 1e-15);
    }
}
