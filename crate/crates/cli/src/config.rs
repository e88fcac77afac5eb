//! Flat `key=value` experiment configuration.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use batscast::analytics::NetworkParams;
use batscast::sim::AccessPolicy;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Plan,
    Simulate,
    Sweep,
    Robustness,
    SinglePhase,
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "plan" => Ok(Mode::Plan),
            "simulate" => Ok(Mode::Simulate),
            "sweep" => Ok(Mode::Sweep),
            "robustness" => Ok(Mode::Robustness),
            "single-phase" | "single_phase" => Ok(Mode::SinglePhase),
            other => Err(format!(
                "unknown mode `{other}` (plan, simulate, sweep, robustness, single-phase)"
            )),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Plan => "plan",
            Mode::Simulate => "simulate",
            Mode::Sweep => "sweep",
            Mode::Robustness => "robustness",
            Mode::SinglePhase => "single-phase",
        })
    }
}

/// A configuration problem tied to one key.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfigError {
    pub field: String,
    pub reason: String,
}

impl ConfigError {
    fn new(field: &str, reason: impl Into<String>) -> Self {
        Self {
            field: field.to_string(),
            reason: reason.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.reason)
    }
}

const KEYS: &[&str] = &[
    "mode",
    "k",
    "p0",
    "p1",
    "p2",
    "batch_size",
    "file_packets",
    "eta",
    "epsilon",
    "n",
    "seed",
    "runs",
    "degree_distribution",
    "out_dir",
    "access",
    "payload_len",
    "trace",
    "slot_cap",
    "k_min",
    "k_max",
    "design_k",
    "analytic_only",
];

/// Raw key/value pairs, later entries overriding earlier ones.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RawConfig(BTreeMap<String, String>);

impl RawConfig {
    /// Parses `key = value` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut raw = Self::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            raw.set_pair(line)
                .map_err(|e| ConfigError::new(&e.field, format!("line {}: {}", i + 1, e.reason)))?;
        }
        Ok(raw)
    }

    /// Applies one `key=value` override.
    pub fn set_pair(&mut self, pair: &str) -> Result<(), ConfigError> {
        let (key, value) = pair
            .split_once('=')
            .ok_or_else(|| ConfigError::new(pair.trim(), "expected key=value"))?;
        self.set(key.trim(), value.trim())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        if !KEYS.contains(&key) {
            return Err(ConfigError::new(key, "unknown key"));
        }
        self.0.insert(key.to_string(), value.to_string());
        Ok(())
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, ConfigError>
    where
        T::Err: fmt::Display,
    {
        self.0
            .get(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|e| ConfigError::new(key, format!("cannot parse `{v}`: {e}")))
            })
            .transpose()
    }

    fn require<T: FromStr>(&self, key: &str, mode: Mode) -> Result<T, ConfigError>
    where
        T::Err: fmt::Display,
    {
        self.get(key)?
            .ok_or_else(|| ConfigError::new(key, format!("missing, required in {mode} mode")))
    }
}

/// Everything one CLI invocation needs.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub params: NetworkParams,
    /// Batch count; the planner's optimum when absent.
    pub n: Option<usize>,
    pub seed: u64,
    pub runs: u64,
    pub degree_distribution: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub access: AccessPolicy,
    pub payload_len: usize,
    pub trace: bool,
    pub slot_cap: Option<u64>,
    pub k_min: usize,
    pub k_max: usize,
    pub design_k: usize,
    /// Sweep only: skip the simulations.
    pub analytic_only: bool,
}

fn parse_access(raw: &RawConfig) -> Result<AccessPolicy, ConfigError> {
    match raw.0.get("access").map(String::as_str) {
        None | Some("round_robin") | Some("round-robin") => Ok(AccessPolicy::RoundRobin),
        Some("random") => Ok(AccessPolicy::Random),
        Some(other) => Err(ConfigError::new(
            "access",
            format!("`{other}` is not round_robin or random"),
        )),
    }
}

impl ExperimentConfig {
    pub fn from_raw(raw: &RawConfig) -> Result<Self, ConfigError> {
        let mode: Mode = raw
            .0
            .get("mode")
            .ok_or_else(|| ConfigError::new("mode", "missing"))?
            .parse()
            .map_err(|e| ConfigError::new("mode", e))?;
        let defaults = NetworkParams::default();
        let (k_min, k_max, k) = if mode == Mode::Sweep {
            let lo: usize = raw.require("k_min", mode)?;
            let hi: usize = raw.require("k_max", mode)?;
            if lo == 0 || hi < lo {
                return Err(ConfigError::new("k_max", format!("range {lo}..={hi} is empty or starts at 0")));
            }
            (lo, hi, lo)
        } else {
            let k = raw.require("k", mode)?;
            (k, k, k)
        };
        let params = NetworkParams {
            k,
            p0: raw.require("p0", mode)?,
            p1: raw.require("p1", mode)?,
            p2: raw.require("p2", mode)?,
            batch_size: raw.get("batch_size")?.unwrap_or(defaults.batch_size),
            file_packets: raw.require("file_packets", mode)?,
            eta: raw.get("eta")?.unwrap_or(defaults.eta),
            epsilon: raw.get("epsilon")?.unwrap_or(defaults.epsilon),
        };
        params.validate().map_err(|e| match e {
            batscast::Error::InvalidParam { field, reason } => ConfigError::new(field, reason),
            other => ConfigError::new("params", other.to_string()),
        })?;
        let design_k = if mode == Mode::Robustness {
            let d: usize = raw.require("design_k", mode)?;
            if d == 0 || d > k {
                return Err(ConfigError::new("design_k", format!("must be in 1..={k}")));
            }
            d
        } else {
            raw.get("design_k")?.unwrap_or(k)
        };
        let runs = raw.get("runs")?.unwrap_or(1);
        if runs == 0 {
            return Err(ConfigError::new("runs", "must be >= 1"));
        }
        let n = raw.get("n")?;
        if n == Some(0) {
            return Err(ConfigError::new("n", "must be >= 1"));
        }
        Ok(Self {
            mode,
            params,
            n,
            seed: raw.get("seed")?.unwrap_or(0),
            runs,
            degree_distribution: raw.get("degree_distribution")?,
            out_dir: raw.get("out_dir")?.unwrap_or_else(|| PathBuf::from(".")),
            access: parse_access(raw)?,
            payload_len: raw.get("payload_len")?.unwrap_or(16),
            trace: raw.get("trace")?.unwrap_or(false),
            slot_cap: raw.get("slot_cap")?,
            k_min,
            k_max,
            design_k,
            analytic_only: raw.get("analytic_only")?.unwrap_or(false),
        })
    }

    /// Every resolved setting as `key=value` pairs, for output headers.
    pub fn describe(&self) -> String {
        let p = &self.params;
        let mut out = format!(
            "mode={} k={} p0={} p1={} p2={} batch_size={} file_packets={} eta={} epsilon={} seed={} runs={}",
            self.mode, p.k, p.p0, p.p1, p.p2, p.batch_size, p.file_packets, p.eta, p.epsilon, self.seed, self.runs
        );
        if let Some(n) = self.n {
            out += &format!(" n={n}");
        }
        if let Some(path) = &self.degree_distribution {
            out += &format!(" degree_distribution={}", path.display());
        }
        let access = match self.access {
            AccessPolicy::RoundRobin => "round_robin",
            AccessPolicy::Random => "random",
        };
        out += &format!(" access={access} payload_len={}", self.payload_len);
        if let Some(cap) = self.slot_cap {
            out += &format!(" slot_cap={cap}");
        }
        match self.mode {
            Mode::Sweep => out += &format!(" k_min={} k_max={} analytic_only={}", self.k_min, self.k_max, self.analytic_only),
            Mode::Robustness => out += &format!(" design_k={}", self.design_k),
            _ => {}
        }
        out
    }
}
