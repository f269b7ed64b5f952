//! Multi-fidelity objectives: synthetic benchmarks with known fidelity
//! behaviour, and an adapter that evaluates configurations in a child process.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::process::{Command, Stdio};
use std::sync::mpsc;
use std::time::{Duration, Instant};

use serde::Serialize;

use crate::error::EvalError;
use crate::space::{ConfigSpace, Configuration, ParameterSpec, Value};

/// A loss that depends on a configuration and the resource it was given.
pub trait Objective: Sync {
    fn name(&self) -> &str;

    fn evaluate(
        &self,
        config: &Configuration,
        resource: f64,
        max_resource: f64,
    ) -> Result<f64, EvalError>;
}

/// Wraps a closure as an objective.
pub struct FnObjective<F> {
    name: String,
    f: F,
}

impl<F> FnObjective<F>
where
    F: Fn(&Configuration, f64, f64) -> Result<f64, EvalError> + Sync,
{
    pub fn new(name: impl Into<String>, f: F) -> Self {
        FnObjective {
            name: name.into(),
            f,
        }
    }
}

impl<F> Objective for FnObjective<F>
where
    F: Fn(&Configuration, f64, f64) -> Result<f64, EvalError> + Sync,
{
    fn name(&self) -> &str {
        &self.name
    }

    fn evaluate(&self, config: &Configuration, resource: f64, max_resource: f64) -> Result<f64, EvalError> {
        (self.f)(config, resource, max_resource)
    }
}

fn param(config: &Configuration, name: &str) -> Result<f64, EvalError> {
    config
        .real(name)
        .ok_or_else(|| EvalError::Other(format!("configuration has no numeric `{name}`")))
}

/// Asymptotic loss shared by the curve and deceptive benchmarks; minimum 0 at (0.3, 0.7).
pub fn asymptotic_loss(x1: f64, x2: f64) -> f64 {
    (x1 - 0.3).powi(2) + (x2 - 0.7).powi(2)
}

/// `f_inf(x1, x2) + a * r^(-b)`: a power-law learning curve that converges to
/// the asymptotic loss as the resource grows.
pub fn eval_curve_bench(x1: f64, x2: f64, a: f64, b: f64, r: f64) -> Result<f64, EvalError> {
    if !(r >= 1.0) {
        return Err(EvalError::Other(format!("resource must be >= 1, got {r}")));
    }
    Ok(asymptotic_loss(x1, x2) + a * r.powf(-b))
}

/// Below `threshold * R` the ranking is inverted (`1 - f_inf`); at or above it
/// the loss is `f_inf`.
pub fn eval_deceptive_bench(
    x1: f64,
    x2: f64,
    r: f64,
    max_resource: f64,
    threshold: f64,
) -> Result<f64, EvalError> {
    if !(r >= 1.0) {
        return Err(EvalError::Other(format!("resource must be >= 1, got {r}")));
    }
    let f = asymptotic_loss(x1, x2);
    Ok(if r / max_resource < threshold { 1.0 - f } else { f })
}

pub fn branin(x1: f64, x2: f64) -> f64 {
    use std::f64::consts::PI;
    let b = 5.1 / (4.0 * PI * PI);
    let c = 5.0 / PI;
    let t = 1.0 / (8.0 * PI);
    (x2 - b * x1 * x1 + c * x1 - 6.0).powi(2) + 10.0 * (1.0 - t) * x1.cos() + 10.0
}

/// Branin plus a periodic distortion that fades out linearly as `r -> R`.
pub fn eval_distorted_branin(x1: f64, x2: f64, r: f64, max_resource: f64) -> f64 {
    let distortion = (3.0 * std::f64::consts::PI * (x1 + 5.0) / 15.0).sin().abs();
    branin(x1, x2) + (1.0 - r / max_resource) * 10.0 * distortion
}

fn curve_space() -> ConfigSpace {
    ConfigSpace::new(vec![
        ParameterSpec::continuous("x1", 0.0, 1.0).expect("valid"),
        ParameterSpec::continuous("x2", 0.0, 1.0).expect("valid"),
        ParameterSpec::continuous("a", 0.1, 1.0).expect("valid"),
        ParameterSpec::continuous("b", 0.3, 1.0).expect("valid"),
    ])
    .expect("valid")
}

#[derive(Debug, Clone, Copy, Default)]
pub struct CurveBench;

impl CurveBench {
    pub fn space() -> ConfigSpace {
        curve_space()
    }
}

impl Objective for CurveBench {
    fn name(&self) -> &str {
        "curve-bench"
    }

    fn evaluate(&self, config: &Configuration, resource: f64, _max: f64) -> Result<f64, EvalError> {
        eval_curve_bench(
            param(config, "x1")?,
            param(config, "x2")?,
            param(config, "a")?,
            param(config, "b")?,
            resource,
        )
    }
}

#[derive(Debug, Clone, Copy)]
pub struct DeceptiveBench {
    pub threshold: f64,
}

impl Default for DeceptiveBench {
    fn default() -> Self {
        DeceptiveBench { threshold: 0.5 }
    }
}

impl DeceptiveBench {
    pub fn space() -> ConfigSpace {
        curve_space()
    }
}

impl Objective for DeceptiveBench {
    fn name(&self) -> &str {
        "deceptive-bench"
    }

    fn evaluate(&self, config: &Configuration, resource: f64, max: f64) -> Result<f64, EvalError> {
        eval_deceptive_bench(
            param(config, "x1")?,
            param(config, "x2")?,
            resource,
            max,
            self.threshold,
        )
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct DistortedBranin;

impl DistortedBranin {
    pub fn space() -> ConfigSpace {
        ConfigSpace::new(vec![
            ParameterSpec::continuous("x1", -5.0, 10.0).expect("valid"),
            ParameterSpec::continuous("x2", 0.0, 15.0).expect("valid"),
        ])
        .expect("valid")
    }
}

impl Objective for DistortedBranin {
    fn name(&self) -> &str {
        "distorted-branin"
    }

    fn evaluate(&self, config: &Configuration, resource: f64, max: f64) -> Result<f64, EvalError> {
        Ok(eval_distorted_branin(
            param(config, "x1")?,
            param(config, "x2")?,
            resource,
            max,
        ))
    }
}

#[derive(Serialize)]
struct ExternalRequest<'a> {
    config: &'a BTreeMap<String, Value>,
    resource: f64,
    max_resource: f64,
}

/// Runs one child process per evaluation.
///
/// The child gets one JSON line on stdin,
/// `{"config":{...},"resource":r,"max_resource":R}`, and must print one JSON
/// line `{"loss":v}` on stdout before exiting with status 0.
#[derive(Debug, Clone)]
pub struct ExternalCommand {
    program: String,
    args: Vec<String>,
    timeout: Duration,
}

impl ExternalCommand {
    pub fn new(program: impl Into<String>, args: Vec<String>, timeout: Duration) -> Self {
        ExternalCommand {
            program: program.into(),
            args,
            timeout,
        }
    }

    /// Splits `command` on whitespace: the first word is the program.
    pub fn parse(command: &str, timeout: Duration) -> Option<Self> {
        let mut words = command.split_whitespace().map(str::to_string);
        let program = words.next()?;
        Some(Self::new(program, words.collect(), timeout))
    }

    pub fn request_line(config: &Configuration, resource: f64, max_resource: f64) -> String {
        serde_json::to_string(&ExternalRequest {
            config: config.values(),
            resource,
            max_resource,
        })
        .expect("request serializes")
    }

    pub fn parse_response(stdout: &str) -> Result<f64, EvalError> {
        let line = stdout
            .lines()
            .find(|l| !l.trim().is_empty())
            .ok_or_else(|| EvalError::Malformed("empty response".into()))?;
        let value: serde_json::Value =
            serde_json::from_str(line).map_err(|e| EvalError::Malformed(format!("{e}: {line}")))?;
        let loss = value
            .get("loss")
            .ok_or_else(|| EvalError::Malformed(format!("missing `loss`: {line}")))?;
        let v = match loss {
            serde_json::Value::Number(n) => n
                .as_f64()
                .ok_or_else(|| EvalError::Malformed(format!("unrepresentable loss {n}")))?,
            serde_json::Value::String(s) => match s.trim().parse::<f64>() {
                Ok(v) if !v.is_finite() => return Err(EvalError::NonFinite(s.clone())),
                _ => return Err(EvalError::Malformed(format!("loss must be a number: {line}"))),
            },
            other => return Err(EvalError::Malformed(format!("loss must be a number, got {other}"))),
        };
        if !v.is_finite() {
            return Err(EvalError::NonFinite(v.to_string()));
        }
        Ok(v)
    }

    pub fn eval_external(
        &self,
        config: &Configuration,
        resource: f64,
        max_resource: f64,
    ) -> Result<f64, EvalError> {
        let mut child = Command::new(&self.program)
            .args(&self.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| EvalError::Other(format!("cannot spawn `{}`: {e}", self.program)))?;

        let mut request = Self::request_line(config, resource, max_resource);
        request.push('\n');
        if let Some(mut stdin) = child.stdin.take() {
            // A child that exits without reading closes the pipe; its exit status tells the story.
            let _ = stdin.write_all(request.as_bytes());
        }

        let mut stdout = child.stdout.take().expect("stdout piped");
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            let mut buf = String::new();
            let read = stdout.read_to_string(&mut buf).map(|_| buf);
            let _ = tx.send(read);
        });

        let deadline = Instant::now() + self.timeout;
        let status = loop {
            match child.try_wait() {
                Ok(Some(status)) => break status,
                Ok(None) if Instant::now() >= deadline => {
                    let _ = child.kill();
                    let _ = child.wait();
                    return Err(EvalError::Timeout(self.timeout.as_secs_f64()));
                }
                Ok(None) => std::thread::sleep(Duration::from_millis(2)),
                Err(e) => return Err(EvalError::Other(format!("wait failed: {e}"))),
            }
        };
        if !status.success() {
            return Err(EvalError::ExitStatus(status.to_string()));
        }
        let remaining = deadline.saturating_duration_since(Instant::now());
        let out = rx
            .recv_timeout(remaining.max(Duration::from_millis(100)))
            .map_err(|_| EvalError::Timeout(self.timeout.as_secs_f64()))?
            .map_err(|e| EvalError::Malformed(format!("stdout is not UTF-8: {e}")))?;
        Self::parse_response(&out)
    }
}

impl Objective for ExternalCommand {
    fn name(&self) -> &str {
        "external"
    }

    fn evaluate(&self, config: &Configuration, resource: f64, max: f64) -> Result<f64, EvalError> {
        self.eval_external(config, resource, max)
    }
}
