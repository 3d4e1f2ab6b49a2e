//! Experiment configuration read from a flat JSON object.
//!
//! Every key is optional except `master_seed`. Unknown keys and values of
//! the wrong JSON type are parse errors; well-typed but invalid values are
//! validation errors. Both name the offending key.
//!
//! | key | type | default |
//! |---|---|---|
//! | `case` | `"SP"`, `"HT"`, `"HL"` | `"SP"` |
//! | `covariate_tail` | `"normal"`, `"t3"` | `"normal"` |
//! | `n_target` | integer | 150 |
//! | `n_external` | integer | 20000 |
//! | `d_covariates` | integer | 100 |
//! | `sp_fraction` | number | 0.7 |
//! | `intercept` | number | 1 |
//! | `coef` | number or array | 1 for every covariate |
//! | `noise_sd` | number | 1 |
//! | `bias_offset`, `bias_shape`, `bias_scale` | number | 2, 1, 1 |
//! | `covariance` | `"ar1"`, `"independent"` | `"ar1"` |
//! | `ar1_rho` | number (ar1 only) | 0.5 |
//! | `covariate_variance` | number (independent only) | 1 |
//! | `include_intercept` | bool | true |
//! | `master_seed` | integer | required |
//! | `replications` | integer | 500 |
//! | `rates` | array of numbers | `[0.0075, 0.03, 0.12, 0.48]` |
//! | `estimators` | array of names | all eight |
//! | `penalty` | `"l1"`, `"l2"` | `"l1"` |
//! | `criterion` | `"AIC"`, `"BIC"` | `"AIC"` |
//! | `grid_size` | integer | 20 |
//! | `grid_ratio` | number | 1e-4 |
//! | `lambda` | number | none (tune over the grid) |
//! | `combined_fraction` | number | 0.5 |
//! | `trim_alpha` | number | 0.1 |
//! | `osmac_pilot` | `"target"`, `"true"` | `"target"` |
//! | `tol`, `max_iter` | number, integer | 1e-8, 1000 |
//! | `output` | string | none |
//! | `workers` | integer | 1 |

use std::path::{Path, PathBuf};

use serde_json::{Map, Value};

use crate::data::PenaltyKind;
use crate::error::{Error, Result};
use crate::simulation::{Case, Covariance, EstimatorKind, OsmacPilot, ScenarioConfig};
use crate::tuning::{Criterion, DEFAULT_GRID_RATIO};

pub const DEFAULT_RATES: [f64; 4] = [0.0075, 0.03, 0.12, 0.48];

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub scenario: ScenarioConfig,
    pub replications: usize,
    pub rates: Vec<f64>,
    pub estimators: Vec<EstimatorKind>,
    pub penalty: PenaltyKind,
    pub criterion: Criterion,
    pub grid_size: usize,
    pub grid_ratio: f64,
    /// Skips tuning and fits every subsample at this λ.
    pub fixed_lambda: Option<f64>,
    /// Share of each subsample taken by target-guided selection in the
    /// combined estimators.
    pub combined_fraction: f64,
    pub trim_alpha: f64,
    pub osmac_pilot: OsmacPilot,
    pub tol: f64,
    pub max_iter: usize,
    pub output: Option<PathBuf>,
    pub workers: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scenario: ScenarioConfig::default(),
            replications: 500,
            rates: DEFAULT_RATES.to_vec(),
            estimators: EstimatorKind::ALL.to_vec(),
            penalty: PenaltyKind::L1,
            criterion: Criterion::Aic,
            grid_size: 20,
            grid_ratio: DEFAULT_GRID_RATIO,
            fixed_lambda: None,
            combined_fraction: 0.5,
            trim_alpha: 0.1,
            osmac_pilot: OsmacPilot::Target,
            tol: 1e-8,
            max_iter: 1000,
            output: None,
            workers: 1,
        }
    }
}

fn invalid(key: &str, message: impl Into<String>) -> Error {
    Error::ConfigValidation { key: key.into(), message: message.into() }
}

fn parse_err(key: &str, message: impl Into<String>) -> Error {
    Error::ConfigParse { key: key.into(), message: message.into() }
}

impl ExperimentConfig {
    pub fn from_path<P: AsRef<Path>>(path: P) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| Error::Io(format!("{}: {e}", path.as_ref().display())))?;
        Self::from_json_str(&text)
    }

    /// Parses and validates.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text).map_err(|e| parse_err("<document>", e.to_string()))?;
        let Value::Object(map) = value else {
            return Err(parse_err("<document>", "expected a JSON object"));
        };
        let cfg = Self::from_map(map)?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn from_map(mut map: Map<String, Value>) -> Result<Self> {
        let mut cfg = Self::default();
        let mut fields = Fields { map: &mut map };

        if let Some(s) = fields.string("case")? {
            cfg.scenario.case = s.parse().map_err(|e: Error| invalid("case", e.to_string()))?;
        }
        if let Some(s) = fields.string("covariate_tail")? {
            cfg.scenario.covariate_tail = s.parse().map_err(|e: Error| invalid("covariate_tail", e.to_string()))?;
        }
        if let Some(v) = fields.count("n_target")? {
            cfg.scenario.n_target = v;
        }
        if let Some(v) = fields.count("n_external")? {
            cfg.scenario.n_external = v;
        }
        if let Some(v) = fields.count("d_covariates")? {
            cfg.scenario.d_covariates = v;
        }
        if let Some(v) = fields.number("sp_fraction")? {
            cfg.scenario.sp_fraction = v;
        }
        if let Some(v) = fields.number("intercept")? {
            cfg.scenario.intercept = v;
        }
        cfg.scenario.coef = match fields.take("coef") {
            None => vec![1.0; cfg.scenario.d_covariates],
            Some(Value::Number(n)) => vec![n.as_f64().unwrap_or(f64::NAN); cfg.scenario.d_covariates],
            Some(Value::Array(items)) => items
                .iter()
                .map(|v| v.as_f64().ok_or_else(|| parse_err("coef", "array entries must be numbers")))
                .collect::<Result<_>>()?,
            Some(_) => return Err(parse_err("coef", "expected a number or an array of numbers")),
        };
        if let Some(v) = fields.number("noise_sd")? {
            cfg.scenario.noise_sd = v;
        }
        if let Some(v) = fields.number("bias_offset")? {
            cfg.scenario.bias_offset = v;
        }
        if let Some(v) = fields.number("bias_shape")? {
            cfg.scenario.bias_shape = v;
        }
        if let Some(v) = fields.number("bias_scale")? {
            cfg.scenario.bias_scale = v;
        }
        let covariance = fields.string("covariance")?.unwrap_or_else(|| "ar1".into());
        let rho = fields.number("ar1_rho")?;
        let variance = fields.number("covariate_variance")?;
        cfg.scenario.covariance = match covariance.to_ascii_lowercase().as_str() {
            "ar1" => {
                if variance.is_some() {
                    return Err(invalid("covariate_variance", "only used with \"covariance\": \"independent\""));
                }
                Covariance::Ar1 { rho: rho.unwrap_or(0.5) }
            }
            "independent" => {
                if rho.is_some() {
                    return Err(invalid("ar1_rho", "only used with \"covariance\": \"ar1\""));
                }
                Covariance::Independent { variance: variance.unwrap_or(1.0) }
            }
            other => return Err(invalid("covariance", format!("unknown covariance `{other}` (expected ar1 or independent)"))),
        };
        if let Some(v) = fields.boolean("include_intercept")? {
            cfg.scenario.include_intercept = v;
        }
        cfg.scenario.master_seed = fields
            .integer("master_seed")?
            .ok_or_else(|| parse_err("master_seed", "missing required key"))?;
        if let Some(v) = fields.count("replications")? {
            cfg.replications = v;
        }
        if let Some(items) = fields.array("rates")? {
            cfg.rates = items
                .iter()
                .map(|v| v.as_f64().ok_or_else(|| parse_err("rates", "entries must be numbers")))
                .collect::<Result<_>>()?;
        }
        if let Some(items) = fields.array("estimators")? {
            cfg.estimators = items
                .iter()
                .map(|v| {
                    let name = v.as_str().ok_or_else(|| parse_err("estimators", "entries must be strings"))?;
                    name.parse().map_err(|e: Error| invalid("estimators", e.to_string()))
                })
                .collect::<Result<_>>()?;
        }
        if let Some(s) = fields.string("penalty")? {
            cfg.penalty = match s.to_ascii_lowercase().as_str() {
                "l1" => PenaltyKind::L1,
                "l2" => PenaltyKind::L2,
                other => return Err(invalid("penalty", format!("unknown penalty `{other}` (expected l1 or l2)"))),
            };
        }
        if let Some(s) = fields.string("criterion")? {
            cfg.criterion = s.parse().map_err(|e: Error| invalid("criterion", e.to_string()))?;
        }
        if let Some(v) = fields.count("grid_size")? {
            cfg.grid_size = v;
        }
        if let Some(v) = fields.number("grid_ratio")? {
            cfg.grid_ratio = v;
        }
        if let Some(v) = fields.number("lambda")? {
            cfg.fixed_lambda = Some(v);
        }
        if let Some(v) = fields.number("combined_fraction")? {
            cfg.combined_fraction = v;
        }
        if let Some(v) = fields.number("trim_alpha")? {
            cfg.trim_alpha = v;
        }
        if let Some(s) = fields.string("osmac_pilot")? {
            cfg.osmac_pilot = s.parse().map_err(|e: Error| invalid("osmac_pilot", e.to_string()))?;
        }
        if let Some(v) = fields.number("tol")? {
            cfg.tol = v;
        }
        if let Some(v) = fields.count("max_iter")? {
            cfg.max_iter = v;
        }
        if let Some(s) = fields.string("output")? {
            cfg.output = Some(PathBuf::from(s));
        }
        if let Some(v) = fields.count("workers")? {
            cfg.workers = v;
        }
        if let Some(key) = map.keys().next() {
            return Err(parse_err(key, "unknown key"));
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.scenario;
        for (key, v) in [("n_target", s.n_target), ("n_external", s.n_external), ("d_covariates", s.d_covariates)] {
            if v == 0 {
                return Err(invalid(key, "must be positive"));
            }
        }
        if s.n_target <= s.n_cols() {
            return Err(invalid("n_target", format!("must exceed the {} design columns", s.n_cols())));
        }
        if s.coef.len() != s.d_covariates {
            return Err(invalid("coef", format!("{} entries for {} covariates", s.coef.len(), s.d_covariates)));
        }
        if s.coef.iter().any(|c| !c.is_finite()) {
            return Err(invalid("coef", "entries must be finite"));
        }
        if !(0.0..=1.0).contains(&s.sp_fraction) {
            return Err(invalid("sp_fraction", "must lie in [0, 1]"));
        }
        if !s.intercept.is_finite() {
            return Err(invalid("intercept", "must be finite"));
        }
        if !(s.noise_sd >= 0.0 && s.noise_sd.is_finite()) {
            return Err(invalid("noise_sd", "must be finite and nonnegative"));
        }
        if !s.bias_offset.is_finite() {
            return Err(invalid("bias_offset", "must be finite"));
        }
        for (key, v) in [("bias_shape", s.bias_shape), ("bias_scale", s.bias_scale)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(key, "must be positive and finite"));
            }
        }
        match s.covariance {
            Covariance::Ar1 { rho } if !(rho > -1.0 && rho < 1.0) => {
                return Err(invalid("ar1_rho", "must lie in (-1, 1)"));
            }
            Covariance::Independent { variance } if !(variance > 0.0 && variance.is_finite()) => {
                return Err(invalid("covariate_variance", "must be positive and finite"));
            }
            _ => {}
        }
        if s.case == Case::HighLeverage && s.n_cols() < 2 {
            return Err(invalid("case", "HL needs at least two design columns"));
        }
        if self.replications == 0 {
            return Err(invalid("replications", "must be positive"));
        }
        if self.rates.is_empty() {
            return Err(invalid("rates", "must not be empty"));
        }
        if let Some(r) = self.rates.iter().find(|r| !(**r > 0.0 && **r <= 1.0)) {
            return Err(invalid("rates", format!("rate {r} outside (0, 1]")));
        }
        if self.estimators.is_empty() {
            return Err(invalid("estimators", "must not be empty"));
        }
        if self.grid_size < 2 {
            return Err(invalid("grid_size", "must be at least 2"));
        }
        if !(self.grid_ratio > 0.0 && self.grid_ratio < 1.0) {
            return Err(invalid("grid_ratio", "must lie in (0, 1)"));
        }
        if let Some(l) = self.fixed_lambda {
            if !(l >= 0.0 && l.is_finite()) {
                return Err(invalid("lambda", "must be finite and nonnegative"));
            }
        }
        if !(0.0..=1.0).contains(&self.combined_fraction) {
            return Err(invalid("combined_fraction", "must lie in [0, 1]"));
        }
        if !(0.0..0.5).contains(&self.trim_alpha) {
            return Err(invalid("trim_alpha", "must lie in [0, 0.5)"));
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(invalid("tol", "must be positive"));
        }
        if self.max_iter == 0 {
            return Err(invalid("max_iter", "must be positive"));
        }
        if self.workers == 0 {
            return Err(invalid("workers", "must be positive"));
        }
        Ok(())
    }
}

/// Removes keys from the map as they are read so leftovers are unknown.
struct Fields<'a> {
    map: &'a mut Map<String, Value>,
}

impl Fields<'_> {
    fn take(&mut self, key: &str) -> Option<Value> {
        self.map.remove(key)
    }

    fn number(&mut self, key: &str) -> Result<Option<f64>> {
        match self.take(key) {
            None => Ok(None),
            Some(Value::Number(n)) => Ok(n.as_f64()),
            Some(_) => Err(parse_err(key, "expected a number")),
        }
    }

    fn integer(&mut self, key: &str) -> Result<Option<u64>> {
        match self.take(key) {
            None => Ok(None),
            Some(Value::Number(n)) => n.as_u64().map(Some).ok_or_else(|| parse_err(key, "expected a nonnegative integer")),
            Some(_) => Err(parse_err(key, "expected a nonnegative integer")),
        }
    }

    fn count(&mut self, key: &str) -> Result<Option<usize>> {
        self.integer(key)?
            .map(|v| usize::try_from(v).map_err(|_| parse_err(key, "integer too large")))
            .transpose()
    }

    fn string(&mut self, key: &str) -> Result<Option<String>> {
        match self.take(key) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s)),
            Some(_) => Err(parse_err(key, "expected a string")),
        }
    }

    fn boolean(&mut self, key: &str) -> Result<Option<bool>> {
        match self.take(key) {
            None => Ok(None),
            Some(Value::Bool(b)) => Ok(Some(b)),
            Some(_) => Err(parse_err(key, "expected true or false")),
        }
    }

    fn array(&mut self, key: &str) -> Result<Option<Vec<Value>>> {
        match self.take(key) {
            None => Ok(None),
            Some(Value::Array(a)) => Ok(Some(a)),
            Some(_) => Err(parse_err(key, "expected an array")),
        }
    }
}
