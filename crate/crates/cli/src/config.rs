//! Sectioned key-value run configuration with a strict schema: unknown
//! sections or keys are hard errors, every diagnostic carries the line, and
//! all defaults match the bundled three-emitter demo scenario.

use std::fmt::Write as _;
use std::path::Path;

use bundle_core::master::{max_dt_free, max_dt_pulse, IntegrationPlan};
use bundle_core::model::{PulseTrain, SystemConfig};

#[derive(Debug)]
pub struct ConfigError {
    pub message: String,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.message)
    }
}

impl std::error::Error for ConfigError {}

fn err<T>(message: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError {
        message: message.into(),
    })
}

/// Fully validated run configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    // [system]
    pub n_emitters: usize,
    pub spacing: f64,
    pub gamma_1d: f64,
    pub gamma: f64,
    pub gamma_f: f64,
    pub pumped: Vec<usize>,
    // [pump]
    pub nbar: f64,
    pub delta: f64,
    pub first_peak: f64,
    pub period: f64,
    pub repetitions: usize,
    pub calibrate: bool,
    // [run]
    pub dt_pulse: f64,
    pub dt_free: f64,
    pub t_end: f64,
    pub n_trajectories: usize,
    pub master_seed: u64,
    pub snapshot_times: Vec<f64>,
    pub sample_every: usize,
    // [output]
    pub directory: String,
    pub formats: Vec<String>,
    pub plots: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let n = 3;
        RunConfig {
            n_emitters: n,
            spacing: 1.0,
            gamma_1d: 1.0,
            gamma: 0.05,
            gamma_f: 2.0,
            pumped: (1..=n).collect(),
            nbar: 4182.0,
            delta: 200.0,
            first_peak: 0.5,
            period: 6.0,
            repetitions: 1,
            calibrate: true,
            dt_pulse: 0.0, // 0 = derive from delta
            dt_free: 0.0,  // 0 = derive from n_emitters
            t_end: 0.0,    // 0 = derive from the pulse schedule
            n_trajectories: 10_000,
            master_seed: 1,
            snapshot_times: Vec::new(),
            sample_every: 10,
            directory: "out".into(),
            formats: vec!["csv".into(), "json".into()],
            plots: true,
        }
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<RunConfig, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
            message: format!("cannot read config {}: {e}", path.display()),
        })?;
        RunConfig::parse(&text)
    }

    pub fn parse(text: &str) -> Result<RunConfig, ConfigError> {
        let mut cfg = RunConfig::default();
        let mut pumped_set = false;
        let mut section = String::new();
        for (line_no, raw) in text.lines().enumerate() {
            let line_no = line_no + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| ConfigError {
                        message: format!("line {line_no}: malformed section header {line:?}"),
                    })?
                    .trim();
                if !["system", "pump", "run", "output"].contains(&name) {
                    return err(format!("line {line_no}: unknown section [{name}]"));
                }
                section = name.to_string();
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError {
                message: format!("line {line_no}: expected `key = value`, got {line:?}"),
            })?;
            let key = key.trim();
            let value = value.trim();
            cfg.apply(&section, key, value, line_no, &mut pumped_set)?;
        }
        if !pumped_set {
            cfg.pumped = (1..=cfg.n_emitters).collect();
        }
        cfg.finalize()?;
        Ok(cfg)
    }

    fn apply(
        &mut self,
        section: &str,
        key: &str,
        value: &str,
        line: usize,
        pumped_set: &mut bool,
    ) -> Result<(), ConfigError> {
        let bad_key = || {
            err::<()>(format!(
                "line {line}: unknown key `{key}` in section [{section}]"
            ))
        };
        match section {
            "system" => match key {
                "n_emitters" => self.n_emitters = parse_num(key, value, line)?,
                "spacing" => self.spacing = parse_num(key, value, line)?,
                "gamma_1d" => self.gamma_1d = parse_num(key, value, line)?,
                "gamma" => self.gamma = parse_num(key, value, line)?,
                "gamma_f" => self.gamma_f = parse_num(key, value, line)?,
                "pumped" => {
                    self.pumped = parse_list(key, value, line)?;
                    *pumped_set = true;
                }
                _ => bad_key()?,
            },
            "pump" => match key {
                "nbar" => self.nbar = parse_num(key, value, line)?,
                "delta" => self.delta = parse_num(key, value, line)?,
                "first_peak" => self.first_peak = parse_num(key, value, line)?,
                "period" => self.period = parse_num(key, value, line)?,
                "repetitions" => self.repetitions = parse_num(key, value, line)?,
                "calibrate" => self.calibrate = parse_bool(key, value, line)?,
                _ => bad_key()?,
            },
            "run" => match key {
                "dt_pulse" => self.dt_pulse = parse_num(key, value, line)?,
                "dt_free" => self.dt_free = parse_num(key, value, line)?,
                "t_end" => self.t_end = parse_num(key, value, line)?,
                "n_trajectories" => self.n_trajectories = parse_num(key, value, line)?,
                "master_seed" => self.master_seed = parse_num(key, value, line)?,
                "snapshot_times" => self.snapshot_times = parse_list(key, value, line)?,
                "sample_every" => self.sample_every = parse_num(key, value, line)?,
                _ => bad_key()?,
            },
            "output" => match key {
                "directory" => self.directory = value.to_string(),
                "formats" => {
                    self.formats = value
                        .split(',')
                        .map(|s| s.trim().to_string())
                        .filter(|s| !s.is_empty())
                        .collect()
                }
                "plots" => self.plots = parse_bool(key, value, line)?,
                _ => bad_key()?,
            },
            "" => {
                return err(format!(
                    "line {line}: key `{key}` appears before any [section]"
                ))
            }
            _ => unreachable!("section names are validated"),
        }
        Ok(())
    }

    /// Fill derived defaults and check physical validity.
    fn finalize(&mut self) -> Result<(), ConfigError> {
        if self.t_end == 0.0 {
            self.t_end = self.first_peak + self.period * self.repetitions as f64;
        }
        if self.dt_pulse == 0.0 {
            self.dt_pulse = 1.0 / (20.0 * self.delta);
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        // physical validity via the core types, with key names in messages
        self.system().map_err(|e| ConfigError {
            message: format!("invalid [system] config: {e}"),
        })?;
        if !(self.nbar > 0.0) {
            return err(format!("key `nbar`: must be positive, got {}", self.nbar));
        }
        if !(self.delta > 0.0) {
            return err(format!("key `delta`: must be positive, got {}", self.delta));
        }
        if self.repetitions == 0 {
            return err("key `repetitions`: must be >= 1");
        }
        if self.n_trajectories == 0 {
            return err("key `n_trajectories`: must be >= 1");
        }
        if self.sample_every == 0 {
            return err("key `sample_every`: must be >= 1");
        }
        let last_peak = self.first_peak + self.period * (self.repetitions - 1) as f64;
        let needed = if self.repetitions > 1 {
            last_peak + self.period
        } else {
            last_peak + 1.0
        };
        if self.t_end < needed {
            return err(format!(
                "key `t_end` = {} leaves no room for emission after the last pulse (need >= {needed})",
                self.t_end
            ));
        }
        let cfg = self.system().unwrap();
        let train = self.train_with(self.nbar);
        train.validate(&cfg).map_err(|e| ConfigError {
            message: format!("invalid [pump] config: {e}"),
        })?;
        self.plan(&cfg, &train)
            .validate(&cfg, &train)
            .map_err(|e| ConfigError {
                message: format!("invalid [run] config: {e}"),
            })?;
        Ok(())
    }

    pub fn system(&self) -> Result<SystemConfig, bundle_core::Error> {
        let positions = (0..self.n_emitters)
            .map(|j| j as f64 * self.spacing)
            .collect();
        SystemConfig::new(
            self.n_emitters,
            positions,
            self.gamma_1d,
            self.gamma,
            self.gamma_f,
            self.pumped.clone(),
        )
    }

    pub fn train_with(&self, nbar: f64) -> PulseTrain {
        let cfg = self
            .system()
            .expect("validated config always builds a system");
        PulseTrain::repeated(
            &cfg,
            nbar,
            self.delta,
            self.first_peak,
            self.period,
            self.repetitions,
        )
    }

    pub fn plan(&self, cfg: &SystemConfig, train: &PulseTrain) -> IntegrationPlan {
        let dt_pulse = if self.dt_pulse > 0.0 {
            self.dt_pulse
        } else {
            0.5 * max_dt_pulse(train)
        };
        let dt_free = if self.dt_free > 0.0 {
            self.dt_free
        } else {
            max_dt_free(cfg)
        };
        IntegrationPlan {
            t_start: 0.0,
            t_end: self.t_end,
            dt_pulse,
            dt_free,
            sample_every: self.sample_every,
        }
    }

    /// Canonical rendering: every field, fixed order. The fingerprint and
    /// the golden-file tests key off this.
    pub fn canonical(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "[system]");
        let _ = writeln!(s, "n_emitters = {}", self.n_emitters);
        let _ = writeln!(s, "spacing = {}", self.spacing);
        let _ = writeln!(s, "gamma_1d = {}", self.gamma_1d);
        let _ = writeln!(s, "gamma = {}", self.gamma);
        let _ = writeln!(s, "gamma_f = {}", self.gamma_f);
        let _ = writeln!(s, "pumped = {}", join(&self.pumped));
        let _ = writeln!(s, "[pump]");
        let _ = writeln!(s, "nbar = {}", self.nbar);
        let _ = writeln!(s, "delta = {}", self.delta);
        let _ = writeln!(s, "first_peak = {}", self.first_peak);
        let _ = writeln!(s, "period = {}", self.period);
        let _ = writeln!(s, "repetitions = {}", self.repetitions);
        let _ = writeln!(s, "calibrate = {}", self.calibrate);
        let _ = writeln!(s, "[run]");
        let _ = writeln!(s, "dt_pulse = {}", self.dt_pulse);
        let _ = writeln!(s, "dt_free = {}", self.dt_free);
        let _ = writeln!(s, "t_end = {}", self.t_end);
        let _ = writeln!(s, "n_trajectories = {}", self.n_trajectories);
        let _ = writeln!(s, "master_seed = {}", self.master_seed);
        let _ = writeln!(s, "snapshot_times = {}", join(&self.snapshot_times));
        let _ = writeln!(s, "sample_every = {}", self.sample_every);
        let _ = writeln!(s, "[output]");
        let _ = writeln!(s, "directory = {}", self.directory);
        let _ = writeln!(s, "formats = {}", self.formats.join(","));
        let _ = writeln!(s, "plots = {}", self.plots);
        s
    }
}

fn join<T: std::fmt::Display>(items: &[T]) -> String {
    items
        .iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

trait FromConfigValue: Sized {
    fn from_value(s: &str) -> Option<Self>;
}

macro_rules! impl_from_value {
    ($($t:ty),*) => {$(
        impl FromConfigValue for $t {
            fn from_value(s: &str) -> Option<Self> {
                s.parse().ok()
            }
        }
    )*};
}
impl_from_value!(usize, u64, f64);

fn parse_num<T: FromConfigValue>(key: &str, value: &str, line: usize) -> Result<T, ConfigError> {
    T::from_value(value).ok_or_else(|| ConfigError {
        message: format!("line {line}: key `{key}`: cannot parse {value:?} as a number"),
    })
}

fn parse_bool(key: &str, value: &str, line: usize) -> Result<bool, ConfigError> {
    match value {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => err(format!(
            "line {line}: key `{key}`: cannot parse {value:?} as a boolean"
        )),
    }
}

fn parse_list<T: FromConfigValue>(
    key: &str,
    value: &str,
    line: usize,
) -> Result<Vec<T>, ConfigError> {
    value
        .split(',')
        .map(|s| s.trim())
        .filter(|s| !s.is_empty())
        .map(|s| {
            T::from_value(s).ok_or_else(|| ConfigError {
                message: format!("line {line}: key `{key}`: cannot parse element {s:?}"),
            })
        })
        .collect()
}
