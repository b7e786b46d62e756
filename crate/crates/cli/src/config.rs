use std::path::Path;

use serde::{Deserialize, Serialize};
use truncsa::{
    Algorithm, GainSchedule, Problem, ProblemSpec, ResetPolicy, Tolerances, TruncationSequence,
    Vector,
};

use crate::error::CliError;

/// A complete experiment description, read from a single JSON file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemSpec,
    pub gain: GainSchedule,
    pub truncation: TruncationConfig,
    pub run: RunSection,
    #[serde(default)]
    pub tolerances: Tolerances,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResetKind {
    #[default]
    ToInitial,
    ToFixedPoint,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruncationConfig {
    pub center: Vector,
    pub r0: f64,
    pub growth: f64,
    #[serde(default)]
    pub reset_kind: ResetKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reset_target: Option<Vector>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub x0: Vector,
    pub horizon: u64,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_stride")]
    pub stride: u64,
}

fn default_replications() -> usize {
    1000
}

fn default_stride() -> u64 {
    1
}

/// Everything a command needs, built and validated from a [`RunConfig`].
#[derive(Clone, Debug)]
pub struct Experiment {
    pub problem: Problem,
    pub algorithm: Algorithm,
    pub x0: Vector,
    pub horizon: u64,
    pub replications: usize,
    pub master_seed: u64,
    pub stride: u64,
    pub tolerances: Tolerances,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<RunConfig, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<RunConfig, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        RunConfig::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn reset_policy(&self) -> Result<ResetPolicy, CliError> {
        match (self.truncation.reset_kind, &self.truncation.reset_target) {
            (ResetKind::ToInitial, None) => Ok(ResetPolicy::ToInitial),
            (ResetKind::ToFixedPoint, Some(t)) => Ok(ResetPolicy::ToFixedPoint(t.clone())),
            (ResetKind::ToInitial, Some(_)) => Err(CliError::Config(
                "reset_target is only meaningful with reset_kind \"to_fixed_point\"".into(),
            )),
            (ResetKind::ToFixedPoint, None) => Err(CliError::Config(
                "reset_kind \"to_fixed_point\" requires reset_target".into(),
            )),
        }
    }

    /// Builds the problem and algorithm; component checks stay with their owners.
    pub fn experiment(&self) -> Result<Experiment, CliError> {
        self.tolerances.validate()?;
        if self.run.horizon == 0 {
            return Err(CliError::Config("run.horizon must be positive".into()));
        }
        if self.run.stride == 0 {
            return Err(CliError::Config("run.stride must be positive".into()));
        }
        let problem = self.problem.build()?;
        let truncation = TruncationSequence::new(
            self.truncation.center.clone(),
            self.truncation.r0,
            self.truncation.growth,
        )?;
        let reset = self.reset_policy()?;
        reset.validate(&truncation)?;
        if self.run.x0.dim() != problem.dim() || truncation.dim() != problem.dim() {
            return Err(truncsa::Error::DimensionMismatch {
                expected: problem.dim(),
                found: if self.run.x0.dim() != problem.dim() {
                    self.run.x0.dim()
                } else {
                    truncation.dim()
                },
            }
            .into());
        }
        let margin = truncation.boundary_margin(0, &self.run.x0)?;
        if margin < 0.0 {
            return Err(truncsa::Error::InitialPointOutside { margin }.into());
        }
        Ok(Experiment {
            problem,
            algorithm: Algorithm {
                schedule: self.gain,
                truncation,
                reset,
            },
            x0: self.run.x0.clone(),
            horizon: self.run.horizon,
            replications: self.run.replications,
            master_seed: self.run.master_seed,
            stride: self.run.stride,
            tolerances: self.tolerances,
        })
    }
}
