//! Experiment configuration in a sectioned `key = value` text format.
//!
//! ```text
//! # comments run to the end of the line
//! [problem]
//! constraint = rll-1-inf
//! channel = bsc
//! epsilon = 0.1
//!
//! [sa]
//! a = 0.75
//! theta0 = random
//! ```
//!
//! Sections are `problem`, `sa`, `estimate`, `oracle` and `output`. Missing
//! keys take their defaults; unknown sections or keys are errors. Lists are
//! comma separated and matrix rows are separated by `;`.

use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::optimizer::{validate_config, InitialTheta, SAConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemConfig {
    /// `rll-D-K`, `rll-D-inf`, `unconstrained-K` or a constraint file path.
    pub constraint: String,
    /// `bsc`, `bec` or a channel file path.
    pub channel: String,
    pub epsilon: f64,
}

impl Default for ProblemConfig {
    fn default() -> Self {
        ProblemConfig {
            constraint: "rll-1-inf".into(),
            channel: "bsc".into(),
            epsilon: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateConfig {
    pub n: usize,
    pub replicas: usize,
    /// Evaluation point; `None` means uniform rows.
    pub theta: Option<Vec<f64>>,
}

impl Default for EstimateConfig {
    fn default() -> Self {
        EstimateConfig {
            n: 4096,
            replicas: 1,
            theta: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleConfig {
    pub n: usize,
    pub h: f64,
    pub pi: f64,
    pub eps_grid: Vec<f64>,
    pub delta_grid: Vec<f64>,
    /// Periodic chain for the perturbation experiment; `None` means the
    /// two-state flip chain.
    pub matrix: Option<Vec<Vec<f64>>>,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            n: 10,
            h: 1e-4,
            pi: 0.5,
            eps_grid: vec![1e-5, 3e-5, 1e-4, 3e-4, 1e-3, 3e-3, 1e-2],
            delta_grid: vec![1e-3, 3e-3, 1e-2, 3e-2, 1e-1],
            matrix: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct OutputConfig {
    pub out: Option<String>,
    pub dump_blocks: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExperimentConfig {
    pub problem: ProblemConfig,
    pub sa: SAConfig,
    pub estimate: EstimateConfig,
    pub oracle: OracleConfig,
    pub output: OutputConfig,
}

fn parse_value<T: FromStr>(line: usize, key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::Parse {
        line,
        msg: format!("invalid value `{value}` for `{key}`"),
    })
}

fn parse_list(line: usize, key: &str, value: &str) -> Result<Vec<f64>> {
    value
        .split(',')
        .map(|v| parse_value(line, key, v.trim()))
        .collect()
}

fn parse_matrix(line: usize, key: &str, value: &str) -> Result<Vec<Vec<f64>>> {
    value.split(';').map(|row| parse_list(line, key, row)).collect()
}

fn parse_optional(value: &str) -> Option<&str> {
    (value != "none").then_some(value)
}

fn list(v: &[f64]) -> String {
    v.iter().map(f64::to_string).collect::<Vec<_>>().join(", ")
}

fn matrix(m: &[Vec<f64>]) -> String {
    m.iter().map(|r| list(r)).collect::<Vec<_>>().join("; ")
}

impl ExperimentConfig {
    /// Parses and validates; the first problem found is reported.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        let mut section: Option<String> = None;
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            if let Some(name) = content.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
                let name = name.trim();
                if !["problem", "sa", "estimate", "oracle", "output"].contains(&name) {
                    return Err(Error::Parse {
                        line,
                        msg: format!("unknown section `[{name}]`"),
                    });
                }
                section = Some(name.to_string());
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| Error::Parse {
                line,
                msg: format!("expected `key = value`, got `{content}`"),
            })?;
            let (key, value) = (key.trim(), value.trim());
            let Some(sec) = section.as_deref() else {
                return Err(Error::Parse {
                    line,
                    msg: format!("key `{key}` outside any section"),
                });
            };
            cfg.set(sec, key, value, line)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn set(&mut self, section: &str, key: &str, value: &str, line: usize) -> Result<()> {
        let p = |v: &str| -> Result<f64> { parse_value(line, key, v) };
        let u = |v: &str| -> Result<usize> { parse_value(line, key, v) };
        match (section, key) {
            ("problem", "constraint") => self.problem.constraint = value.to_string(),
            ("problem", "channel") => self.problem.channel = value.to_string(),
            ("problem", "epsilon") => self.problem.epsilon = p(value)?,
            ("sa", "a") => self.sa.a = p(value)?,
            ("sa", "b") => self.sa.b = p(value)?,
            ("sa", "alpha") => self.sa.blocking.alpha = p(value)?,
            ("sa", "beta") => self.sa.blocking.beta = p(value)?,
            ("sa", "eps_floor") => self.sa.epsilon_floor = p(value)?,
            ("sa", "theta0") => {
                self.sa.theta0 = if value == "random" {
                    InitialTheta::Random
                } else {
                    InitialTheta::Given(parse_list(line, key, value)?)
                }
            }
            ("sa", "iters") => self.sa.max_iters = parse_value(line, key, value)?,
            ("sa", "seed") => self.sa.seed = parse_value(line, key, value)?,
            ("sa", "grad_window") => self.sa.stop.window = u(value)?,
            ("sa", "grad_tol") => self.sa.stop.grad_tol = p(value)?,
            ("sa", "replicas") => self.sa.replicas = u(value)?,
            ("sa", "projection") => self.sa.projection = parse_value(line, key, value)?,
            ("sa", "objective_every") => self.sa.objective_every = parse_value(line, key, value)?,
            ("sa", "objective_min_len") => self.sa.objective_min_len = u(value)?,
            ("sa", "max_sample_len") => self.sa.max_sample_len = parse_optional(value).map(u).transpose()?,
            ("estimate", "n") => self.estimate.n = u(value)?,
            ("estimate", "replicas") => self.estimate.replicas = u(value)?,
            ("estimate", "theta") => {
                self.estimate.theta = parse_optional(value)
                    .map(|v| parse_list(line, key, v))
                    .transpose()?
            }
            ("oracle", "n") => self.oracle.n = u(value)?,
            ("oracle", "h") => self.oracle.h = p(value)?,
            ("oracle", "pi") => self.oracle.pi = p(value)?,
            ("oracle", "eps_grid") => self.oracle.eps_grid = parse_list(line, key, value)?,
            ("oracle", "delta_grid") => self.oracle.delta_grid = parse_list(line, key, value)?,
            ("oracle", "matrix") => {
                self.oracle.matrix = parse_optional(value)
                    .map(|v| parse_matrix(line, key, v))
                    .transpose()?
            }
            ("output", "out") => self.output.out = parse_optional(value).map(str::to_string),
            ("output", "dump_blocks") => self.output.dump_blocks = parse_optional(value).map(str::to_string),
            _ => {
                return Err(Error::Parse {
                    line,
                    msg: format!("unknown key `{key}` in [{section}]"),
                })
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        validate_config(&self.sa)?;
        if self.estimate.replicas == 0 {
            return Err(Error::InvalidConfig("replicas: requires at least one".into()));
        }
        Ok(())
    }

    /// Canonical text form; [`ExperimentConfig::parse`] inverts it exactly.
    pub fn to_text(&self) -> String {
        let opt = |v: &Option<String>| v.clone().unwrap_or_else(|| "none".into());
        let mut s = String::new();
        let sa = &self.sa;
        let theta0 = match &sa.theta0 {
            InitialTheta::Random => "random".to_string(),
            InitialTheta::Given(t) => list(t),
        };
        let _ = writeln!(s, "[problem]");
        let _ = writeln!(s, "constraint = {}", self.problem.constraint);
        let _ = writeln!(s, "channel = {}", self.problem.channel);
        let _ = writeln!(s, "epsilon = {}", self.problem.epsilon);
        let _ = writeln!(s, "\n[sa]");
        let _ = writeln!(s, "a = {}", sa.a);
        let _ = writeln!(s, "b = {}", sa.b);
        let _ = writeln!(s, "alpha = {}", sa.blocking.alpha);
        let _ = writeln!(s, "beta = {}", sa.blocking.beta);
        let _ = writeln!(s, "eps_floor = {}", sa.epsilon_floor);
        let _ = writeln!(s, "theta0 = {theta0}");
        let _ = writeln!(s, "iters = {}", sa.max_iters);
        let _ = writeln!(s, "seed = {}", sa.seed);
        let _ = writeln!(s, "grad_window = {}", sa.stop.window);
        let _ = writeln!(s, "grad_tol = {}", sa.stop.grad_tol);
        let _ = writeln!(s, "replicas = {}", sa.replicas);
        let _ = writeln!(s, "projection = {}", sa.projection);
        let _ = writeln!(s, "objective_every = {}", sa.objective_every);
        let _ = writeln!(s, "objective_min_len = {}", sa.objective_min_len);
        let _ = writeln!(s, "max_sample_len = {}", opt(&sa.max_sample_len.map(|m| m.to_string())));
        let _ = writeln!(s, "\n[estimate]");
        let _ = writeln!(s, "n = {}", self.estimate.n);
        let _ = writeln!(s, "replicas = {}", self.estimate.replicas);
        let _ = writeln!(s, "theta = {}", opt(&self.estimate.theta.as_deref().map(list)));
        let _ = writeln!(s, "\n[oracle]");
        let _ = writeln!(s, "n = {}", self.oracle.n);
        let _ = writeln!(s, "h = {}", self.oracle.h);
        let _ = writeln!(s, "pi = {}", self.oracle.pi);
        let _ = writeln!(s, "eps_grid = {}", list(&self.oracle.eps_grid));
        let _ = writeln!(s, "delta_grid = {}", list(&self.oracle.delta_grid));
        let _ = writeln!(s, "matrix = {}", opt(&self.oracle.matrix.as_deref().map(matrix)));
        let _ = writeln!(s, "\n[output]");
        let _ = writeln!(s, "out = {}", opt(&self.output.out));
        let _ = writeln!(s, "dump_blocks = {}", opt(&self.output.dump_blocks));
        s
    }

    /// Hex SHA-256 of the canonical text.
    pub fn hash(&self) -> String {
        use sha2::{Digest, Sha256};
        hex::encode(Sha256::digest(self.to_text().as_bytes()))
    }
}
