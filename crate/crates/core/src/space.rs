//! Hyperparameter search spaces.
//!
//! A [`ConfigSpace`] is an ordered list of parameter definitions. The order is
//! fixed once the space is built because [`ConfigSpace::encode`] maps a
//! configuration to one coordinate per parameter, in that order, each scaled
//! into `[0, 1]` for the forest surrogates.
//!
//! Spaces can be loaded from a JSON document:
//!
//! ```json
//! {"parameters": [
//!   {"name": "lr", "kind": "continuous-log", "lower": 1e-7, "upper": 1e-2},
//!   {"name": "layers", "kind": "integer", "lower": 1, "upper": 4},
//!   {"name": "act", "kind": "categorical", "choices": ["relu", "tanh"]}
//! ]}
//! ```

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{HoistError, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum ParamKind {
    Continuous { lower: f64, upper: f64 },
    /// Bounds are on the raw value; sampling is uniform in the base-10 exponent.
    ContinuousLog { lower: f64, upper: f64 },
    /// Inclusive integer range.
    Integer { lower: i64, upper: i64 },
    Categorical { choices: Vec<String> },
}

impl ParamKind {
    pub fn label(&self) -> &'static str {
        match self {
            ParamKind::Continuous { .. } => "continuous",
            ParamKind::ContinuousLog { .. } => "continuous-log",
            ParamKind::Integer { .. } => "integer",
            ParamKind::Categorical { .. } => "categorical",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSpec {
    name: String,
    kind: ParamKind,
}

impl ParameterSpec {
    pub fn continuous(name: impl Into<String>, lower: f64, upper: f64) -> Result<Self> {
        Self::new(name, ParamKind::Continuous { lower, upper })
    }

    pub fn continuous_log(name: impl Into<String>, lower: f64, upper: f64) -> Result<Self> {
        Self::new(name, ParamKind::ContinuousLog { lower, upper })
    }

    pub fn integer(name: impl Into<String>, lower: i64, upper: i64) -> Result<Self> {
        Self::new(name, ParamKind::Integer { lower, upper })
    }

    pub fn categorical<S: Into<String>>(
        name: impl Into<String>,
        choices: impl IntoIterator<Item = S>,
    ) -> Result<Self> {
        let choices = choices.into_iter().map(Into::into).collect();
        Self::new(name, ParamKind::Categorical { choices })
    }

    pub fn new(name: impl Into<String>, kind: ParamKind) -> Result<Self> {
        let name = name.into();
        let invalid = |reason: &str| HoistError::InvalidSpace {
            param: name.clone(),
            reason: reason.to_string(),
        };
        if name.is_empty() {
            return Err(invalid("empty name"));
        }
        match &kind {
            ParamKind::Continuous { lower, upper } => {
                if !lower.is_finite() || !upper.is_finite() {
                    return Err(invalid("bounds must be finite"));
                }
                if lower >= upper {
                    return Err(invalid("lower must be < upper"));
                }
            }
            ParamKind::ContinuousLog { lower, upper } => {
                if !lower.is_finite() || !upper.is_finite() {
                    return Err(invalid("bounds must be finite"));
                }
                if *lower <= 0.0 {
                    return Err(invalid("lower must be > 0 for continuous-log"));
                }
                if lower >= upper {
                    return Err(invalid("lower must be < upper"));
                }
            }
            ParamKind::Integer { lower, upper } => {
                if lower >= upper {
                    return Err(invalid("lower must be < upper"));
                }
            }
            ParamKind::Categorical { choices } => {
                let distinct: HashSet<&String> = choices.iter().collect();
                if distinct.len() != choices.len() {
                    return Err(invalid("duplicate choices"));
                }
                if choices.len() < 2 {
                    return Err(invalid("categorical needs at least 2 choices"));
                }
            }
        }
        Ok(ParameterSpec { name, kind })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kind(&self) -> &ParamKind {
        &self.kind
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Value {
        match &self.kind {
            ParamKind::Continuous { lower, upper } => {
                let u: f64 = rng.gen();
                Value::Real((lower + u * (upper - lower)).clamp(*lower, *upper))
            }
            ParamKind::ContinuousLog { lower, upper } => {
                let (lo, hi) = (lower.log10(), upper.log10());
                let u: f64 = rng.gen();
                Value::Real(10f64.powf(lo + u * (hi - lo)).clamp(*lower, *upper))
            }
            ParamKind::Integer { lower, upper } => Value::Int(rng.gen_range(*lower..=*upper)),
            ParamKind::Categorical { choices } => {
                Value::Choice(choices[rng.gen_range(0..choices.len())].clone())
            }
        }
    }

    fn check(&self, value: &Value) -> Result<Value> {
        let err = |reason: String| HoistError::Encoding {
            param: self.name.clone(),
            reason,
        };
        match (&self.kind, value) {
            (
                ParamKind::Continuous { lower, upper } | ParamKind::ContinuousLog { lower, upper },
                v,
            ) => {
                let x = v
                    .as_f64()
                    .ok_or_else(|| err(format!("expected a number, got {v}")))?;
                if !(x >= *lower && x <= *upper) {
                    return Err(err(format!("{x} outside [{lower}, {upper}]")));
                }
                Ok(Value::Real(x))
            }
            (ParamKind::Integer { lower, upper }, v) => {
                let x = match v {
                    Value::Int(i) => *i,
                    Value::Real(r) if r.fract() == 0.0 && r.abs() < 9.0e15 => *r as i64,
                    other => return Err(err(format!("expected an integer, got {other}"))),
                };
                if x < *lower || x > *upper {
                    return Err(err(format!("{x} outside [{lower}, {upper}]")));
                }
                Ok(Value::Int(x))
            }
            (ParamKind::Categorical { choices }, Value::Choice(c)) => {
                if choices.contains(c) {
                    Ok(Value::Choice(c.clone()))
                } else {
                    Err(err(format!("`{c}` is not one of {choices:?}")))
                }
            }
            (ParamKind::Categorical { .. }, other) => {
                Err(err(format!("expected a choice label, got {other}")))
            }
        }
    }

    fn encode(&self, value: &Value) -> Result<f64> {
        let value = self.check(value)?;
        Ok(match (&self.kind, value) {
            (ParamKind::Continuous { lower, upper }, Value::Real(v)) => {
                (v - lower) / (upper - lower)
            }
            (ParamKind::ContinuousLog { lower, upper }, Value::Real(v)) => {
                (v.log10() - lower.log10()) / (upper.log10() - lower.log10())
            }
            (ParamKind::Integer { lower, upper }, Value::Int(v)) => {
                (v - lower) as f64 / (upper - lower) as f64
            }
            (ParamKind::Categorical { choices }, Value::Choice(c)) => {
                let idx = choices.iter().position(|x| *x == c).unwrap_or(0);
                idx as f64 / (choices.len() - 1) as f64
            }
            _ => unreachable!("check() normalizes the value variant"),
        })
    }

    fn decode(&self, coord: f64) -> Value {
        let c = coord.clamp(0.0, 1.0);
        match &self.kind {
            ParamKind::Continuous { lower, upper } => {
                Value::Real((lower + c * (upper - lower)).clamp(*lower, *upper))
            }
            ParamKind::ContinuousLog { lower, upper } => {
                let (lo, hi) = (lower.log10(), upper.log10());
                Value::Real(10f64.powf(lo + c * (hi - lo)).clamp(*lower, *upper))
            }
            ParamKind::Integer { lower, upper } => {
                let v = *lower as f64 + c * (upper - lower) as f64;
                Value::Int((v.round() as i64).clamp(*lower, *upper))
            }
            ParamKind::Categorical { choices } => {
                let idx = (c * (choices.len() - 1) as f64).round() as usize;
                Value::Choice(choices[idx.min(choices.len() - 1)].clone())
            }
        }
    }
}

/// A concrete parameter value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Int(i64),
    Real(f64),
    Choice(String),
}

impl Value {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Int(i) => Some(*i as f64),
            Value::Real(r) => Some(*r),
            Value::Choice(_) => None,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(i) => write!(f, "{i}"),
            Value::Real(r) => write!(f, "{r}"),
            Value::Choice(c) => write!(f, "{c:?}"),
        }
    }
}

/// A point of the search space. Build one through [`ConfigSpace`] so values
/// are validated and the id is unique within a run.
#[derive(Debug, Clone, PartialEq)]
pub struct Configuration {
    id: u64,
    values: BTreeMap<String, Value>,
}

impl Configuration {
    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn values(&self) -> &BTreeMap<String, Value> {
        &self.values
    }

    pub fn get(&self, name: &str) -> Option<&Value> {
        self.values.get(name)
    }

    /// Numeric value of `name`, if present and numeric.
    pub fn real(&self, name: &str) -> Option<f64> {
        self.values.get(name).and_then(Value::as_f64)
    }

    /// Same assignment, ignoring ids.
    pub fn same_values(&self, other: &Configuration) -> bool {
        self.values == other.values
    }
}

/// Hands out configuration ids; never repeats within one generator.
#[derive(Debug, Clone, Default)]
pub struct ConfigIdGen {
    next: u64,
}

impl ConfigIdGen {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn starting_at(next: u64) -> Self {
        ConfigIdGen { next }
    }

    pub fn next_id(&mut self) -> u64 {
        let id = self.next;
        self.next += 1;
        id
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigSpace {
    parameters: Vec<ParameterSpec>,
}

impl ConfigSpace {
    pub fn new(parameters: Vec<ParameterSpec>) -> Result<Self> {
        if parameters.is_empty() {
            return Err(HoistError::InvalidSpace {
                param: "<space>".into(),
                reason: "no parameters".into(),
            });
        }
        let mut seen = HashSet::new();
        for p in &parameters {
            if !seen.insert(p.name.as_str()) {
                return Err(HoistError::InvalidSpace {
                    param: p.name.clone(),
                    reason: "duplicate parameter name".into(),
                });
            }
        }
        Ok(ConfigSpace { parameters })
    }

    pub fn parameters(&self) -> &[ParameterSpec] {
        &self.parameters
    }

    pub fn dim(&self) -> usize {
        self.parameters.len()
    }

    pub fn parameter(&self, name: &str) -> Option<&ParameterSpec> {
        self.parameters.iter().find(|p| p.name == name)
    }

    /// Validates `values` against the space and wraps them with `id`.
    pub fn configuration(&self, id: u64, values: BTreeMap<String, Value>) -> Result<Configuration> {
        let mut checked = BTreeMap::new();
        for p in &self.parameters {
            let v = values.get(&p.name).ok_or_else(|| HoistError::Encoding {
                param: p.name.clone(),
                reason: "missing value".into(),
            })?;
            checked.insert(p.name.clone(), p.check(v)?);
        }
        if let Some(extra) = values.keys().find(|k| self.parameter(k).is_none()) {
            return Err(HoistError::Encoding {
                param: extra.clone(),
                reason: "not a parameter of this space".into(),
            });
        }
        Ok(Configuration {
            id,
            values: checked,
        })
    }

    /// Draws `count` independent uniform configurations.
    pub fn sample_uniform<R: Rng + ?Sized>(
        &self,
        count: usize,
        rng: &mut R,
        ids: &mut ConfigIdGen,
    ) -> Vec<Configuration> {
        assert!(count >= 1, "sample count must be positive");
        (0..count)
            .map(|_| {
                let values = self
                    .parameters
                    .iter()
                    .map(|p| (p.name.clone(), p.sample(rng)))
                    .collect();
                Configuration {
                    id: ids.next_id(),
                    values,
                }
            })
            .collect()
    }

    /// Maps a configuration to `[0, 1]^dim`, one coordinate per parameter in space order.
    pub fn encode(&self, config: &Configuration) -> Result<Vec<f64>> {
        self.parameters
            .iter()
            .map(|p| {
                let v = config.values.get(&p.name).ok_or_else(|| HoistError::Encoding {
                    param: p.name.clone(),
                    reason: "missing value".into(),
                })?;
                p.encode(v)
            })
            .collect()
    }

    /// Inverse of [`encode`](Self::encode). Coordinates are clamped into `[0, 1]`.
    pub fn decode(&self, id: u64, coords: &[f64]) -> Result<Configuration> {
        if coords.len() != self.dim() {
            return Err(HoistError::Encoding {
                param: "<space>".into(),
                reason: format!("expected {} coordinates, got {}", self.dim(), coords.len()),
            });
        }
        let values = self
            .parameters
            .iter()
            .zip(coords)
            .map(|(p, &c)| (p.name.clone(), p.decode(c)))
            .collect();
        Ok(Configuration { id, values })
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: SpaceFile =
            serde_json::from_str(text).map_err(|e| HoistError::SpaceFile(e.to_string()))?;
        file.into_space()
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| HoistError::io(path, e))?;
        Self::from_json_str(&text)
    }

    pub fn to_json_string(&self) -> String {
        let file = SpaceFile {
            parameters: self
                .parameters
                .iter()
                .map(|p| {
                    let mut entry = SpaceEntry {
                        name: p.name.clone(),
                        kind: p.kind.label().to_string(),
                        lower: None,
                        upper: None,
                        choices: None,
                    };
                    match &p.kind {
                        ParamKind::Continuous { lower, upper }
                        | ParamKind::ContinuousLog { lower, upper } => {
                            entry.lower = Some(*lower);
                            entry.upper = Some(*upper);
                        }
                        ParamKind::Integer { lower, upper } => {
                            entry.lower = Some(*lower as f64);
                            entry.upper = Some(*upper as f64);
                        }
                        ParamKind::Categorical { choices } => entry.choices = Some(choices.clone()),
                    }
                    entry
                })
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("space serializes")
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpaceFile {
    parameters: Vec<SpaceEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpaceEntry {
    name: String,
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lower: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    upper: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    choices: Option<Vec<String>>,
}

impl SpaceFile {
    fn into_space(self) -> Result<ConfigSpace> {
        let mut params = Vec::with_capacity(self.parameters.len());
        for (i, e) in self.parameters.into_iter().enumerate() {
            let field_err = |field: &str, reason: &str| {
                HoistError::SpaceFile(format!("parameters[{i}] (`{}`).{field}: {reason}", e.name))
            };
            let numeric = e.kind != "categorical";
            if numeric && e.choices.is_some() {
                return Err(field_err("choices", "only allowed for categorical parameters"));
            }
            if !numeric && (e.lower.is_some() || e.upper.is_some()) {
                return Err(field_err("lower", "bounds are not allowed for categorical parameters"));
            }
            let bounds = || -> Result<(f64, f64)> {
                let lower = e.lower.ok_or_else(|| field_err("lower", "missing"))?;
                let upper = e.upper.ok_or_else(|| field_err("upper", "missing"))?;
                Ok((lower, upper))
            };
            let kind = match e.kind.as_str() {
                "continuous" => {
                    let (lower, upper) = bounds()?;
                    ParamKind::Continuous { lower, upper }
                }
                "continuous-log" => {
                    let (lower, upper) = bounds()?;
                    ParamKind::ContinuousLog { lower, upper }
                }
                "integer" => {
                    let (lower, upper) = bounds()?;
                    if lower.fract() != 0.0 {
                        return Err(field_err("lower", "must be an integer"));
                    }
                    if upper.fract() != 0.0 {
                        return Err(field_err("upper", "must be an integer"));
                    }
                    ParamKind::Integer {
                        lower: lower as i64,
                        upper: upper as i64,
                    }
                }
                "categorical" => ParamKind::Categorical {
                    choices: e.choices.clone().ok_or_else(|| field_err("choices", "missing"))?,
                },
                other => {
                    return Err(field_err(
                        "kind",
                        &format!(
                            "unknown kind `{other}` (expected continuous, continuous-log, integer or categorical)"
                        ),
                    ))
                }
            };
            params.push(ParameterSpec::new(e.name.clone(), kind)?);
        }
        ConfigSpace::new(params)
    }
}
