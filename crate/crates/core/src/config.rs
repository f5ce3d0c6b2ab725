//! TOML run configuration.
//!
//! Frequencies are given as ordinary frequencies in cycles per internal time
//! unit of the model: plain numbers for the dimensionless single spin, GHz
//! for the ZnO pair (whose internal unit is the nanosecond).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::Window;
use crate::liouvillian::{lindblad_dissipator, DissipatorSpec};
use crate::models::{single_spin_model, zno_indium_model, ModelBundle, SingleSpinParams, SpinPairParams};
use crate::operator::{DensityMatrix, Operator, C64};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Spectrum,
    Simulate,
    Estimate,
    Validate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum ModelConfig {
    SingleSpin(SingleSpinParams),
    Zno(SpinPairParams),
    /// Matrices from a JSON file, see [`CustomModelFile`].
    Custom { path: PathBuf },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasurementConfig {
    pub beta: f64,
    #[serde(default)]
    pub include_shot_noise: bool,
    #[serde(default = "yes")]
    pub include_measurement_damping: bool,
}

fn yes() -> bool {
    true
}

impl Default for MeasurementConfig {
    fn default() -> Self {
        Self {
            beta: 1.0,
            include_shot_noise: false,
            include_measurement_damping: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default = "two")]
    pub order: usize,
    pub f_min: f64,
    pub f_max: f64,
    pub points: usize,
    /// Second axis for orders 3 and 4; defaults to the first.
    #[serde(default)]
    pub f2_min: Option<f64>,
    #[serde(default)]
    pub f2_max: Option<f64>,
    #[serde(default)]
    pub points2: Option<usize>,
}

fn two() -> usize {
    2
}

impl GridConfig {
    fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
        if n == 1 {
            return vec![lo];
        }
        (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()
    }

    /// Ordinary-frequency axes.
    pub fn axes(&self) -> Result<Vec<Vec<f64>>> {
        self.validate()?;
        let first = Self::linspace(self.f_min, self.f_max, self.points);
        if self.order == 2 {
            return Ok(vec![first]);
        }
        let second = Self::linspace(
            self.f2_min.unwrap_or(self.f_min),
            self.f2_max.unwrap_or(self.f_max),
            self.points2.unwrap_or(self.points),
        );
        Ok(vec![first, second])
    }

    pub fn validate(&self) -> Result<()> {
        if !(2..=4).contains(&self.order) {
            return Err(Error::UnsupportedOrder(self.order));
        }
        let lo2 = self.f2_min.unwrap_or(self.f_min);
        let hi2 = self.f2_max.unwrap_or(self.f_max);
        for (lo, hi, n) in [(self.f_min, self.f_max, self.points), (lo2, hi2, self.points2.unwrap_or(self.points))] {
            if !lo.is_finite() || !hi.is_finite() {
                return Err(Error::Config("grid ranges must be finite".into()));
            }
            if n == 0 || (n > 1 && hi <= lo) {
                return Err(Error::Config(format!("grid range [{lo}, {hi}] with {n} points is not ordered")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    pub dt: f64,
    pub steps: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub record_expectation_every: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateSection {
    /// Trajectory file; defaults to `<output.dir>/<output.prefix>.traj`.
    #[serde(default)]
    pub input: Option<PathBuf>,
    #[serde(default = "two")]
    pub order: usize,
    pub frame_length: usize,
    pub frames_per_estimate: usize,
    #[serde(default)]
    pub window: Window,
    /// Largest bin index of the bispectrum grid.
    #[serde(default = "eight")]
    pub s3_max_bin: usize,
    /// Positive bin indices of the S4 correlation grid.
    #[serde(default)]
    pub s4_bins: Vec<i64>,
}

fn eight() -> usize {
    8
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
    #[serde(default)]
    pub format: OutputFormat,
    #[serde(default = "default_prefix")]
    pub prefix: String,
}

fn default_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_prefix() -> String {
    "qpoly".into()
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: default_dir(),
            format: OutputFormat::Csv,
            prefix: default_prefix(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub task: Task,
    pub model: ModelConfig,
    #[serde(default)]
    pub measurement: MeasurementConfig,
    #[serde(default)]
    pub grid: Option<GridConfig>,
    #[serde(default)]
    pub sim: Option<SimSection>,
    #[serde(default)]
    pub estimate: Option<EstimateSection>,
    #[serde(default)]
    pub output: OutputConfig,
}

impl RunConfig {
    /// Parses TOML; errors carry the line and column of the offending item.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })?;
        // custom model paths are relative to the config file
        if let ModelConfig::Custom { path: p } = &mut cfg.model {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.measurement.beta >= 0.0) || !self.measurement.beta.is_finite() {
            return Err(Error::Config(format!("beta must be finite and >= 0, got {}", self.measurement.beta)));
        }
        match self.task {
            Task::Spectrum => {
                self.grid
                    .as_ref()
                    .ok_or_else(|| Error::Config("task 'spectrum' needs a [grid] section".into()))?
                    .validate()?;
            }
            Task::Simulate => {
                self.sim_section()?;
            }
            Task::Estimate => {
                self.estimate
                    .as_ref()
                    .ok_or_else(|| Error::Config("task 'estimate' needs an [estimate] section".into()))?;
            }
            Task::Validate => {}
        }
        Ok(())
    }

    pub fn sim_section(&self) -> Result<&SimSection> {
        let s = self
            .sim
            .as_ref()
            .ok_or_else(|| Error::Config("task needs a [sim] section".into()))?;
        if !(s.dt > 0.0) || s.steps == 0 {
            return Err(Error::Config("sim.dt must be positive and sim.steps at least 1".into()));
        }
        Ok(s)
    }

    pub fn build_model(&self) -> Result<ModelBundle> {
        match &self.model {
            ModelConfig::SingleSpin(p) => single_spin_model(p),
            ModelConfig::Zno(p) => zno_indium_model(p),
            ModelConfig::Custom { path } => CustomModelFile::load(path)?.build(),
        }
    }

    pub fn trajectory_path(&self) -> PathBuf {
        self.output.dir.join(format!("{}.traj", self.output.prefix))
    }
}

/// Complex matrix as rows of `[re, im]` pairs.
pub type ComplexRows = Vec<Vec<[f64; 2]>>;

fn to_operator(rows: &ComplexRows) -> Result<Operator> {
    let rows: Vec<Vec<C64>> = rows
        .iter()
        .map(|r| r.iter().map(|&[re, im]| C64::new(re, im)).collect())
        .collect();
    Operator::from_rows(&rows)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RelaxationEntry {
    pub rate: f64,
    pub rho_final: ComplexRows,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JumpEntry {
    pub rate: f64,
    pub jump: ComplexRows,
}

/// JSON description of an arbitrary model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomModelFile {
    pub h: ComplexRows,
    pub a: ComplexRows,
    #[serde(default)]
    pub relaxations: Vec<RelaxationEntry>,
    #[serde(default)]
    pub lindblad: Vec<JumpEntry>,
    #[serde(default = "unit_time")]
    pub time_unit: f64,
}

fn unit_time() -> f64 {
    1.0
}

impl CustomModelFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn build(&self) -> Result<ModelBundle> {
        let h = to_operator(&self.h)?;
        let a = to_operator(&self.a)?;
        let mut dissipators = Vec::new();
        for r in &self.relaxations {
            let rho = DensityMatrix::new(to_operator(&r.rho_final)?)?;
            dissipators.push(DissipatorSpec::relaxation_whole(r.rate, rho));
        }
        for j in &self.lindblad {
            dissipators.push(DissipatorSpec::custom(j.rate, lindblad_dissipator(&to_operator(&j.jump)?)?));
        }
        ModelBundle::new("custom", h, a, dissipators, vec!["system".into()], self.time_unit)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SPIN: &str = r#"
task = "spectrum"

[model]
type = "single-spin"
omega = [1.0, 0.0, 0.0]
gamma = 0.1

[measurement]
beta = 1.0

[grid]
order = 2
f_min = 0.0
f_max = 0.5
points = 101
"#;

    const ZNO: &str = r#"
task = "spectrum"

[model]
type = "zno"
b_field = [0.1, 0.0, 0.0]
gamma_e = 0.05
gamma_n = 5e-5
hyperfine_mode = "x-only"

[grid]
order = 4
f_min = 0.1
f_max = 3.5
points = 20
"#;

    #[test]
    fn parses_and_round_trips() {
        for text in [SPIN, ZNO] {
            let cfg = RunConfig::from_toml_str(text).unwrap();
            let again = RunConfig::from_toml_str(&cfg.to_toml_string().unwrap()).unwrap();
            assert_eq!(cfg, again);
            let twice = RunConfig::from_toml_str(&again.to_toml_string().unwrap()).unwrap();
            assert_eq!(again, twice);
        }
        let cfg = RunConfig::from_toml_str(ZNO).unwrap();
        assert_eq!(cfg.build_model().unwrap().dim(), 20);
        assert_eq!(cfg.grid.unwrap().axes().unwrap().len(), 2);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let bad = SPIN.replace("gamma = 0.1", "gamma = \"fast\"");
        let err = RunConfig::from_toml_str(&bad).unwrap_err().to_string();
        assert!(err.contains("line 4"), "{err}");
        let unknown = SPIN.replace("gamma = 0.1", "gamma = 0.1\ngama = 2");
        assert!(RunConfig::from_toml_str(&unknown).is_err());
    }

    #[test]
    fn task_sections_required() {
        let no_grid = SPIN.split("[grid]").next().unwrap().to_string();
        assert!(RunConfig::from_toml_str(&no_grid).is_err());
        let unordered = SPIN.replace("f_max = 0.5", "f_max = -0.5");
        assert!(RunConfig::from_toml_str(&unordered).is_err());
        let sim = SPIN.replace("task = \"spectrum\"", "task = \"simulate\"");
        assert!(RunConfig::from_toml_str(&sim).is_err());
    }

    #[test]
    fn custom_model_file() {
        let dir = tempfile::tempdir().unwrap();
        let file = CustomModelFile {
            h: vec![vec![[0.0, 0.0], [0.5, 0.0]], vec![[0.5, 0.0], [0.0, 0.0]]],
            a: vec![vec![[1.0, 0.0], [0.0, 0.0]], vec![[0.0, 0.0], [-1.0, 0.0]]],
            relaxations: vec![RelaxationEntry {
                rate: 0.1,
                rho_final: vec![vec![[0.5, 0.0], [0.0, 0.0]], vec![[0.0, 0.0], [0.5, 0.0]]],
            }],
            lindblad: vec![],
            time_unit: 1.0,
        };
        std::fs::write(dir.path().join("m.json"), serde_json::to_string(&file).unwrap()).unwrap();
        let text = SPIN.replace(
            "type = \"single-spin\"\nomega = [1.0, 0.0, 0.0]\ngamma = 0.1",
            "type = \"custom\"\npath = \"m.json\"",
        );
        std::fs::write(dir.path().join("run.toml"), text).unwrap();
        let cfg = RunConfig::load(&dir.path().join("run.toml")).unwrap();
        let custom = cfg.build_model().unwrap();
        let spin = single_spin_model(&SingleSpinParams::new([1.0, 0.0, 0.0], 0.1)).unwrap();
        assert_eq!(custom.hash(), spin.hash());
    }
}
