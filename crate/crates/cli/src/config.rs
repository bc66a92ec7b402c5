//! JSON run configuration and matrix files.

use std::fs;
use std::path::{Path, PathBuf};

use mumab_core::{
    ChannelModel, DeltaSpec, Horizon, MeanMatrix, ParamOverrides, ResolvedRun, RewardDist,
    RunConfig, TiebreakMode,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub system: SystemSection,
    pub rewards: RewardsSection,
    #[serde(default)]
    pub protocol: ProtocolSection,
    #[serde(default)]
    pub horizon: HorizonSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub k: usize,
    pub m: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardsSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<MatrixValues>,
    /// Relative paths are resolved against the config file's directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix_file: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<Generator>,
    #[serde(default = "default_distribution")]
    pub distribution: RewardDist,
    /// Seed of the matrix generator.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub allow_zero_atom: bool,
}

fn default_distribution() -> RewardDist {
    RewardDist::PointMass
}

/// Row-major values, either nested by user or flat.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixValues {
    Nested(Vec<Vec<f64>>),
    Flat(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Generator {
    /// Every mean drawn uniformly from `[low, high]`.
    Uniform { low: f64, high: f64 },
    /// `base + bonus` where the channel index equals the user index, `base`
    /// elsewhere.
    Diagonal { base: f64, bonus: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolSection {
    #[serde(default)]
    pub delta: DeltaField,
    #[serde(default)]
    pub tiebreak_mode: TiebreakMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_fix: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rounds: Option<u32>,
}

/// `"oracle"` or a number.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DeltaField {
    Keyword(DeltaKeyword),
    Value(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeltaKeyword {
    Oracle,
}

impl Default for DeltaField {
    fn default() -> Self {
        DeltaField::Keyword(DeltaKeyword::Oracle)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HorizonSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epochs: Option<u32>,
}

impl Default for HorizonSection {
    fn default() -> Self {
        Self {
            steps: None,
            epochs: Some(10),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seeds: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed_list: Option<Vec<u64>>,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            seeds: Some(20),
            seed_list: None,
        }
    }
}

impl SweepSection {
    pub fn seeds(&self) -> Result<Vec<u64>> {
        match (self.seeds, &self.seed_list) {
            (Some(_), Some(_)) => Err(CliError::Validation(
                "sweep: give either seeds or seed_list, not both".into(),
            )),
            (_, Some(list)) if list.is_empty() => {
                Err(CliError::Validation("sweep: seed_list is empty".into()))
            }
            (_, Some(list)) => Ok(list.clone()),
            (Some(0), None) => Err(CliError::Validation("sweep: seeds must be positive".into())),
            (Some(n), None) => Ok((0..n as u64).collect()),
            (None, None) => Ok((0..20).collect()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    /// Per-step trace of a single run.
    #[serde(default = "default_trace")]
    pub trace: PathBuf,
    /// Averaged curve of a sweep.
    #[serde(default = "default_curve")]
    pub curve: PathBuf,
    #[serde(default = "default_summary")]
    pub summary: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plot: Option<PathBuf>,
}

fn default_trace() -> PathBuf {
    "trace.csv".into()
}

fn default_curve() -> PathBuf {
    "curve.csv".into()
}

fn default_summary() -> PathBuf {
    "summary.json".into()
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            trace: default_trace(),
            curve: default_curve(),
            summary: default_summary(),
            plot: None,
        }
    }
}

/// Standalone matrix file: `{"k": .., "m": .., "values": ..}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixFile {
    pub k: usize,
    pub m: usize,
    pub values: MatrixValues,
}

impl MatrixFile {
    pub fn load(path: &Path) -> Result<MeanMatrix> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let file: MatrixFile = serde_json::from_str(&text)
            .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
        build_matrix(file.k, file.m, &file.values)
    }
}

fn build_matrix(k: usize, m: usize, values: &MatrixValues) -> Result<MeanMatrix> {
    let flat = match values {
        MatrixValues::Flat(v) => v.clone(),
        MatrixValues::Nested(rows) => {
            if rows.len() != k || rows.iter().any(|r| r.len() != m) {
                return Err(CliError::Validation(format!(
                    "matrix must have {k} rows of {m} values"
                )));
            }
            rows.concat()
        }
    };
    Ok(MeanMatrix::new(k, m, flat)?)
}

impl Generator {
    pub fn generate(&self, k: usize, m: usize, seed: u64) -> Result<MeanMatrix> {
        let values = match *self {
            Generator::Uniform { low, high } => {
                if !(0.0 <= low && low <= high && high <= 1.0) {
                    return Err(CliError::Validation(format!(
                        "uniform generator needs 0 <= low <= high <= 1, got [{low}, {high}]"
                    )));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                (0..k * m)
                    .map(|_| low + (high - low) * rng.random::<f64>())
                    .collect()
            }
            Generator::Diagonal { base, bonus } => {
                if !(base >= 0.0 && bonus >= 0.0 && base + bonus <= 1.0) {
                    return Err(CliError::Validation(format!(
                        "diagonal generator needs base, bonus >= 0 and base + bonus <= 1, got {base}, {bonus}"
                    )));
                }
                (0..k * m)
                    .map(|i| if i / m == i % m { base + bonus } else { base })
                    .collect()
            }
        };
        Ok(MeanMatrix::new(k, m, values)?)
    }
}

/// A config with every input resolved.
#[derive(Debug, Clone)]
pub struct Loaded {
    /// Self-contained equivalent of the input: the matrix is inlined and
    /// every derived parameter is written out.
    pub effective: ConfigFile,
    pub run: RunConfig,
    pub resolved: ResolvedRun,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| CliError::Validation(format!("config: {e}")))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
    }

    pub fn matrix(&self, base: &Path) -> Result<MeanMatrix> {
        let SystemSection { k, m } = self.system;
        let r = &self.rewards;
        let matrix = match (&r.matrix, &r.matrix_file, &r.generator) {
            (Some(v), None, None) => build_matrix(k, m, v)?,
            (None, Some(p), None) => MatrixFile::load(&base.join(p))?,
            (None, None, Some(g)) => g.generate(k, m, r.seed)?,
            _ => {
                return Err(CliError::Validation(
                    "rewards: give exactly one of matrix, matrix_file, generator".into(),
                ))
            }
        };
        if (matrix.k(), matrix.m()) != (k, m) {
            return Err(CliError::Validation(format!(
                "matrix is {}x{} but system says k={k}, m={m}",
                matrix.k(),
                matrix.m()
            )));
        }
        Ok(matrix)
    }

    fn horizon(&self) -> Result<Horizon> {
        match (self.horizon.steps, self.horizon.epochs) {
            (Some(t), None) => Ok(Horizon::Steps(t)),
            (None, Some(l)) => Ok(Horizon::Epochs(l)),
            _ => Err(CliError::Validation(
                "horizon: give exactly one of steps, epochs".into(),
            )),
        }
    }

    /// Builds the simulation input. `base` is the directory that relative
    /// matrix paths are taken from.
    pub fn load(&self, base: &Path, allow_zero_atom: bool) -> Result<Loaded> {
        let matrix = self.matrix(base)?;
        let allow = allow_zero_atom || self.rewards.allow_zero_atom;
        let model = ChannelModel::uniform_family(matrix.clone(), self.rewards.distribution, allow)?;
        let p = &self.protocol;
        let run = RunConfig {
            model,
            delta: match p.delta {
                DeltaField::Keyword(DeltaKeyword::Oracle) => DeltaSpec::Oracle,
                DeltaField::Value(d) => DeltaSpec::Explicit(d),
            },
            tiebreak_mode: p.tiebreak_mode,
            overrides: ParamOverrides {
                t_fix: p.t_fix,
                gamma: p.gamma,
                rounds: p.rounds,
            },
            horizon: self.horizon()?,
        };
        let resolved = run.resolve()?;
        self.sweep.seeds()?;

        let mut effective = self.clone();
        effective.rewards.matrix = Some(MatrixValues::Nested(matrix.rows()));
        effective.rewards.matrix_file = None;
        effective.rewards.generator = None;
        effective.rewards.allow_zero_atom = allow;
        effective.protocol.t_fix = Some(resolved.params.t_fix);
        effective.protocol.gamma = Some(resolved.params.gamma);
        effective.protocol.rounds = Some(resolved.params.rounds);
        Ok(Loaded {
            effective,
            run,
            resolved,
        })
    }
}

/// Reads a config file and resolves it relative to its own directory.
pub fn load_path(path: &Path, allow_zero_atom: bool) -> Result<Loaded> {
    let file = ConfigFile::read(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    file.load(base, allow_zero_atom)
}
