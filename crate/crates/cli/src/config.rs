//! Run configuration: one JSON document with `params`, `sim`, `profile` and
//! an optional `calibration` section.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use finger_dyn_core::actuation::{ForceProfile, ForceTable};
use finger_dyn_core::calibration::{Bounds, FreeParam};
use finger_dyn_core::sim::SimConfig;
use finger_dyn_core::{Error as CoreError, FingerParams};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub params: FingerParams,
    pub sim: SimConfig,
    pub profile: ForceProfile,
    pub calibration: Option<CalibrationSection>,
    /// Directory relative paths in the document are resolved against.
    pub base_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationSection {
    /// Reference trajectory CSV; `--reference` overrides it.
    #[serde(default)]
    pub reference: Option<PathBuf>,
    pub free: Vec<FreeParam>,
    pub bounds: BTreeMap<FreeParam, [f64; 2]>,
    /// Starting point; parameters not listed start from `params`.
    #[serde(default)]
    pub x0: BTreeMap<FreeParam, f64>,
    #[serde(default = "unit_weights")]
    pub weights: [f64; 3],
}

fn unit_weights() -> [f64; 3] {
    [1.0; 3]
}

impl CalibrationSection {
    pub fn free_with_bounds(&self) -> Vec<(FreeParam, Bounds)> {
        self.free
            .iter()
            .map(|p| {
                let [lo, hi] = self.bounds[p];
                (*p, Bounds::new(lo, hi))
            })
            .collect()
    }

    pub fn start(&self, params: &FingerParams) -> Vec<f64> {
        self.free
            .iter()
            .map(|p| self.x0.get(p).copied().unwrap_or_else(|| p.get(params)))
            .collect()
    }

    fn validate(&self, params: &FingerParams) -> Result<(), CliError> {
        if self.free.is_empty() {
            return Err(invalid("calibration.free", "needs at least one parameter"));
        }
        for p in &self.free {
            let Some([lo, hi]) = self.bounds.get(p).copied() else {
                return Err(invalid(
                    format!("calibration.bounds.{p}"),
                    "missing bounds for a free parameter",
                ));
            };
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(invalid(
                    format!("calibration.bounds.{p}"),
                    "must be finite with lo < hi",
                ));
            }
        }
        for p in self.bounds.keys() {
            if !self.free.contains(p) {
                return Err(invalid(
                    format!("calibration.bounds.{p}"),
                    "parameter is not listed in `free`",
                ));
            }
        }
        for p in self.x0.keys() {
            if !self.free.contains(p) {
                return Err(invalid(
                    format!("calibration.x0.{p}"),
                    "parameter is not listed in `free`",
                ));
            }
        }
        for (p, v) in self.free.iter().zip(self.start(params)) {
            let [lo, hi] = self.bounds[p];
            if !(lo..=hi).contains(&v) {
                return Err(invalid(
                    format!("calibration.x0.{p}"),
                    format!("starting value {v} outside [{lo}, {hi}]"),
                ));
            }
        }
        Ok(())
    }
}

fn invalid(key: impl Into<String>, constraint: impl Into<String>) -> CliError {
    CliError::Validation {
        key: key.into(),
        constraint: constraint.into(),
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    params: FingerParams,
    #[serde(default)]
    sim: SimConfig,
    #[serde(default)]
    profile: Option<Value>,
    #[serde(default)]
    calibration: Option<CalibrationSection>,
}

/// A force table given by file instead of inline points.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TableFile {
    csv: PathBuf,
}

pub fn parse_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    parse_config_str(&text, &base_dir).map_err(|e| e.in_file(path))
}

pub fn parse_config_str(text: &str, base_dir: &Path) -> Result<RunConfig, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let raw: RawConfig = serde_path_to_error::deserialize(de).map_err(|e| CliError::Parse {
        file: None,
        key: e.path().to_string(),
        message: e.inner().to_string(),
    })?;

    let profile = match raw.profile {
        None => ForceProfile::default(),
        Some(v) => parse_profile(v, base_dir)?,
    };

    let RawConfig {
        params,
        sim,
        calibration,
        ..
    } = raw;
    params.validate().map_err(|e| prefixed(e, "params"))?;
    sim.validate().map_err(CliError::from)?;
    profile.validate().map_err(CliError::from)?;
    if let Some(c) = &calibration {
        c.validate(&params)?;
    }

    Ok(RunConfig {
        params,
        sim,
        profile,
        calibration,
        base_dir: base_dir.to_path_buf(),
    })
}

/// Same shape as [`ForceProfile`] but externally tagged, which lets
/// `serde_path_to_error` see inside the variant.
#[derive(Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
enum Located {
    Step {
        #[serde(rename = "F0")]
        f0: f64,
        #[serde(default)]
        t_on: f64,
        #[serde(default)]
        t_off: Option<f64>,
    },
    Ramp {
        #[serde(rename = "F0")]
        f0: f64,
        #[serde(rename = "F1")]
        f1: f64,
        t0: f64,
        t1: f64,
    },
    Pulse {
        #[serde(rename = "F0")]
        f0: f64,
        period: f64,
        duty: f64,
    },
    Table(ForceTable),
}

impl From<Located> for ForceProfile {
    fn from(l: Located) -> Self {
        match l {
            Located::Step { f0, t_on, t_off } => ForceProfile::Step { f0, t_on, t_off },
            Located::Ramp { f0, f1, t0, t1 } => ForceProfile::Ramp { f0, f1, t0, t1 },
            Located::Pulse { f0, period, duty } => ForceProfile::Pulse { f0, period, duty },
            Located::Table(t) => ForceProfile::Table(t),
        }
    }
}

fn parse_profile(v: Value, base_dir: &Path) -> Result<ForceProfile, CliError> {
    let parse_err = |key: String, message: String| CliError::Parse {
        file: None,
        key,
        message,
    };
    let Value::Object(mut fields) = v else {
        return Err(parse_err("profile".into(), "expected an object".into()));
    };
    let kind = match fields.remove("kind") {
        Some(Value::String(k)) => k,
        Some(_) => return Err(parse_err("profile.kind".into(), "expected a string".into())),
        None => return Err(parse_err("profile.kind".into(), "missing field `kind`".into())),
    };
    if kind == "table" && fields.contains_key("csv") {
        let file: TableFile = serde_path_to_error::deserialize(Value::Object(fields))
            .map_err(|e| parse_err(format!("profile.{}", e.path()), e.inner().to_string()))?;
        let path = base_dir.join(&file.csv);
        let table = ForceTable::from_csv_path(&path).map_err(|e| match e {
            CoreError::Io(source) => CliError::Io { path, source },
            other => CliError::from(other),
        })?;
        return Ok(ForceProfile::Table(table));
    }
    let tagged = Value::Object([(kind, Value::Object(fields))].into_iter().collect());
    let located: Located = serde_path_to_error::deserialize(tagged).map_err(|e| {
        let path = e.path().to_string();
        let key = match path.split_once('.') {
            Some((_, rest)) if !rest.is_empty() => format!("profile.{rest}"),
            _ => "profile.kind".to_string(),
        };
        parse_err(key, e.inner().to_string())
    })?;
    Ok(located.into())
}

fn prefixed(e: CoreError, section: &str) -> CliError {
    match e {
        CoreError::Validation { key, constraint } => invalid(format!("{section}.{key}"), constraint),
        other => other.into(),
    }
}

impl RunConfig {
    pub fn resolve(&self, p: &Path) -> PathBuf {
        self.base_dir.join(p)
    }
}
