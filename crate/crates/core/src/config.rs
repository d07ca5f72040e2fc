//! Run configuration as `key=value` lines.
//!
//! `#` starts a comment, blank lines are ignored, unknown or repeated keys are
//! errors and missing keys take their defaults. [`Config::to_text`] writes every
//! key in a fixed order and parses back to the same value.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::str::FromStr;
use std::time::Duration;

use crate::error::{Error, Result};

/// Search mode for each batch.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolveMode {
    Minimize,
    Satisfy,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Config {
    pub min_conf: f64,
    pub lambda_x: f64,
    pub lambda_y: f64,
    pub kappa: usize,
    pub beta: usize,
    pub tau_extra: usize,
    pub beta_d: usize,
    pub gamma_d: usize,
    pub fill_gaps: bool,
    pub presolve: bool,
    pub lifespan: usize,
    pub iou_min: f64,
    pub k: usize,
    pub kmeans_seed: u64,
    pub c_occ: i64,
    pub c_stay: i64,
    pub cost_scale: f64,
    pub cross_class_cap: i64,
    pub independence_gap: u32,
    pub batch_time_limit_ms: u64,
    /// Node budget per batch search; makes limited runs reproducible across machines.
    pub batch_node_limit: Option<u64>,
    pub mode: SolveMode,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            min_conf: 0.3,
            lambda_x: 40.0,
            lambda_y: 40.0,
            kappa: 30,
            beta: 5,
            tau_extra: 2,
            beta_d: 4,
            gamma_d: 5,
            fill_gaps: false,
            presolve: true,
            lifespan: 3,
            iou_min: 0.5,
            k: 10,
            kmeans_seed: 0,
            c_occ: 300,
            c_stay: 30,
            cost_scale: 1000.0,
            cross_class_cap: 700,
            independence_gap: 10,
            batch_time_limit_ms: 2000,
            batch_node_limit: None,
            mode: SolveMode::Minimize,
        }
    }
}

const KEYS: &[&str] = &[
    "min_conf",
    "lambda_x",
    "lambda_y",
    "kappa",
    "beta",
    "tau_extra",
    "beta_d",
    "gamma_d",
    "fill_gaps",
    "presolve",
    "lifespan",
    "iou_min",
    "k",
    "kmeans_seed",
    "c_occ",
    "c_stay",
    "cost_scale",
    "cross_class_cap",
    "independence_gap",
    "batch_time_limit_ms",
    "batch_node_limit",
    "mode",
];

fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {v:?}")))
}

fn switch(key: &str, v: &str) -> Result<bool> {
    match v {
        "on" | "true" | "1" => Ok(true),
        "off" | "false" | "0" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected on/off, got {v:?}"))),
    }
}

fn on_off(b: bool) -> &'static str {
    if b {
        "on"
    } else {
        "off"
    }
}

impl Config {
    /// Parse config text, starting from the defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut c = Config::default();
        let mut seen = HashSet::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::parse("config", n + 1, format!("expected key=value, got {line:?}")));
            };
            let (key, value) = (key.trim(), value.trim());
            if !KEYS.contains(&key) {
                return Err(Error::parse("config", n + 1, format!("unknown key {key:?}")));
            }
            if !seen.insert(key.to_string()) {
                return Err(Error::parse("config", n + 1, format!("duplicate key {key:?}")));
            }
            c.set(key, value)
                .map_err(|e| Error::parse("config", n + 1, e.to_string()))?;
        }
        c.validate()?;
        Ok(c)
    }

    /// Set one key from its text value without validating cross-key ranges.
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "min_conf" => self.min_conf = num(key, v)?,
            "lambda_x" => self.lambda_x = num(key, v)?,
            "lambda_y" => self.lambda_y = num(key, v)?,
            "kappa" => self.kappa = num(key, v)?,
            "beta" => self.beta = num(key, v)?,
            "tau_extra" => self.tau_extra = num(key, v)?,
            "beta_d" => self.beta_d = num(key, v)?,
            "gamma_d" => self.gamma_d = num(key, v)?,
            "fill_gaps" => self.fill_gaps = switch(key, v)?,
            "presolve" => self.presolve = switch(key, v)?,
            "lifespan" => self.lifespan = num(key, v)?,
            "iou_min" => self.iou_min = num(key, v)?,
            "k" => self.k = num(key, v)?,
            "kmeans_seed" => self.kmeans_seed = num(key, v)?,
            "c_occ" => self.c_occ = num(key, v)?,
            "c_stay" => self.c_stay = num(key, v)?,
            "cost_scale" => self.cost_scale = num(key, v)?,
            "cross_class_cap" => self.cross_class_cap = num(key, v)?,
            "independence_gap" => self.independence_gap = num(key, v)?,
            "batch_time_limit_ms" => self.batch_time_limit_ms = num(key, v)?,
            "batch_node_limit" => {
                self.batch_node_limit = match v {
                    "none" => None,
                    _ => Some(num(key, v)?),
                }
            }
            "mode" => {
                self.mode = match v {
                    "minimize" => SolveMode::Minimize,
                    "satisfy" => SolveMode::Satisfy,
                    _ => return Err(Error::Config(format!("mode: expected minimize or satisfy, got {v:?}"))),
                }
            }
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        if !unit(self.min_conf) {
            return fail("min_conf must lie in [0, 1]");
        }
        if !unit(self.iou_min) {
            return fail("iou_min must lie in [0, 1]");
        }
        if !(self.lambda_x > 0.0 && self.lambda_y > 0.0) || !self.lambda_x.is_finite() || !self.lambda_y.is_finite() {
            return fail("lambda_x and lambda_y must be positive");
        }
        if self.kappa <= self.beta {
            return fail("kappa must exceed beta");
        }
        if self.lifespan == 0 {
            return fail("lifespan must be at least 1");
        }
        if self.k == 0 {
            return fail("k must be at least 1");
        }
        if self.c_occ < 0 || self.c_stay < 0 || self.cross_class_cap < 0 {
            return fail("costs must be nonnegative");
        }
        if !(self.cost_scale > 0.0 && self.cost_scale.is_finite()) {
            return fail("cost_scale must be positive");
        }
        Ok(())
    }

    /// Every key in canonical order; parses back to an equal config.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let node_limit = self
            .batch_node_limit
            .map_or_else(|| "none".to_string(), |n| n.to_string());
        let mode = match self.mode {
            SolveMode::Minimize => "minimize",
            SolveMode::Satisfy => "satisfy",
        };
        let values: [String; 22] = [
            self.min_conf.to_string(),
            self.lambda_x.to_string(),
            self.lambda_y.to_string(),
            self.kappa.to_string(),
            self.beta.to_string(),
            self.tau_extra.to_string(),
            self.beta_d.to_string(),
            self.gamma_d.to_string(),
            on_off(self.fill_gaps).to_string(),
            on_off(self.presolve).to_string(),
            self.lifespan.to_string(),
            self.iou_min.to_string(),
            self.k.to_string(),
            self.kmeans_seed.to_string(),
            self.c_occ.to_string(),
            self.c_stay.to_string(),
            self.cost_scale.to_string(),
            self.cross_class_cap.to_string(),
            self.independence_gap.to_string(),
            self.batch_time_limit_ms.to_string(),
            node_limit,
            mode.to_string(),
        ];
        for (k, v) in KEYS.iter().zip(values) {
            writeln!(s, "{k}={v}").unwrap();
        }
        s
    }

    pub fn time_limit(&self) -> Option<Duration> {
        (self.batch_time_limit_ms > 0).then(|| Duration::from_millis(self.batch_time_limit_ms))
    }
}
