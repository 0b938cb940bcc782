//! Configuration, parameter sweeps and result tables.

mod emit;

pub use emit::{write_csv, write_json, write_svg, OutputFormat, COLUMNS};

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::collective::{key_rate_collective, plob_bound, CollectiveRateBreakdown};
use crate::error::{Error, Result};
use crate::finite_size::{
    best_over_delta, key_rate_coherent, key_rate_coherent_asymptotic, AbortReason, CoherentOptions,
    CoherentRateBreakdown, EntropyConvention, FiniteSizeParams, DELTA_CANDIDATES,
};
use crate::gaussian::{Attack, ProtocolParams, SymmetricLink};
use crate::mc::{run_protocol, McOptions, SiftedRecord};

/// Prefix of environment variables overriding configuration keys.
pub const ENV_PREFIX: &str = "CVQKD_";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    #[default]
    Collective,
    Coherent,
    CoherentAsymptotic,
    Mc,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    #[default]
    Linear,
    Log,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub param: String,
    pub from: f64,
    pub to: f64,
    #[serde(default = "one")]
    pub steps: usize,
    #[serde(default)]
    pub scale: Scale,
}

fn one() -> usize {
    1
}

/// Names accepted by [`SweepSpec::param`].
pub const SWEEP_PARAMS: [&str; 11] = [
    "distance_km",
    "attenuation_db_per_km",
    "epr_variance",
    "excess_noise",
    "beta",
    "block_size",
    "pe_fraction",
    "delta",
    "m_th",
    "t_split",
    "d0",
];

impl SweepSpec {
    pub fn points(&self) -> Result<Vec<f64>> {
        if !SWEEP_PARAMS.contains(&self.param.as_str()) {
            return Err(Error::config(format!(
                "sweep.param: unknown parameter '{}' (expected one of {})",
                self.param,
                SWEEP_PARAMS.join(", ")
            )));
        }
        if self.steps == 0 {
            return Err(Error::config("sweep.steps must be at least 1"));
        }
        if !(self.from.is_finite() && self.to.is_finite()) || self.from > self.to {
            return Err(Error::config(format!(
                "sweep bounds must be finite and ordered, got from = {} to = {}",
                self.from, self.to
            )));
        }
        if self.steps == 1 {
            return Ok(vec![self.from]);
        }
        let last = (self.steps - 1) as f64;
        match self.scale {
            Scale::Linear => Ok((0..self.steps)
                .map(|i| self.from + (self.to - self.from) * i as f64 / last)
                .collect()),
            Scale::Log => {
                if !(self.from > 0.0) {
                    return Err(Error::config("log sweeps need positive bounds"));
                }
                let (lo, hi) = (self.from.log10(), self.to.log10());
                Ok((0..self.steps)
                    .map(|i| 10f64.powf(lo + (hi - lo) * i as f64 / last))
                    .collect())
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub mode: Mode,
    pub distance_km: f64,
    pub attenuation_db_per_km: f64,
    pub epr_variance: f64,
    pub excess_noise: f64,
    pub beta: f64,
    pub attack: Attack,
    pub omega: Option<f64>,
    /// Block size N; a float is accepted so that `1e10` can be written.
    pub block_size: f64,
    pub pe_fraction: f64,
    pub alpha: f64,
    /// Bin width; optimized over a fixed candidate set when absent.
    pub delta: Option<f64>,
    pub m_th: f64,
    pub t_split: f64,
    pub eps_total: f64,
    pub eps_s: Option<f64>,
    pub eps_c: Option<f64>,
    pub eps_1: Option<f64>,
    pub d0: Option<f64>,
    pub d0_safety: f64,
    pub p_pass: f64,
    pub tap_in_model: bool,
    pub entropy: EntropyConvention,
    pub seed: u64,
    pub mc_signals: Option<f64>,
    pub round_dump: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub format: OutputFormat,
    pub sweep: Option<SweepSpec>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let link = SymmetricLink::default();
        RunConfig {
            mode: Mode::Collective,
            distance_km: link.distance_km,
            attenuation_db_per_km: link.attenuation_db_per_km,
            epr_variance: link.epr_variance,
            excess_noise: link.excess_noise,
            beta: link.beta,
            attack: link.attack,
            omega: None,
            block_size: 1e10,
            pe_fraction: 0.5,
            alpha: 52.0,
            delta: None,
            m_th: 12.0,
            t_split: 0.75,
            eps_total: 1e-20,
            eps_s: None,
            eps_c: None,
            eps_1: None,
            d0: None,
            d0_safety: 1.05,
            p_pass: 0.99,
            tap_in_model: false,
            entropy: EntropyConvention::Shannon,
            seed: 0,
            mc_signals: None,
            round_dump: None,
            output: None,
            format: OutputFormat::Csv,
            sweep: None,
        }
    }
}

fn env_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

/// Applies `CVQKD_<KEY>` (top-level keys) and `CVQKD_SWEEP_<KEY>` overrides.
fn apply_env(table: &mut toml::Table, vars: impl IntoIterator<Item = (String, String)>) {
    let mut vars: Vec<_> = vars
        .into_iter()
        .filter_map(|(k, v)| {
            k.strip_prefix(ENV_PREFIX)
                .map(|k| (k.to_ascii_lowercase(), v))
        })
        .collect();
    vars.sort();
    for (key, raw) in vars {
        let value = env_value(&raw);
        if let Some(field) = key.strip_prefix("sweep_") {
            let sweep = table
                .entry("sweep")
                .or_insert_with(|| toml::Value::Table(toml::Table::new()));
            if let toml::Value::Table(sweep) = sweep {
                sweep.insert(field.to_string(), value);
            }
        } else {
            table.insert(key, value);
        }
    }
}

impl RunConfig {
    /// Parses a configuration document, then applies overrides from `vars`.
    pub fn from_toml_with_env(
        text: &str,
        vars: impl IntoIterator<Item = (String, String)>,
    ) -> Result<Self> {
        // Parsing the text directly first gives diagnostics with line numbers.
        toml::from_str::<RunConfig>(text)
            .map_err(|e| Error::config(format!("invalid config: {e}")))?;
        let mut table: toml::Table =
            toml::from_str(text).map_err(|e| Error::config(format!("invalid config: {e}")))?;
        apply_env(&mut table, vars);
        let config: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::config(format!("invalid config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        Self::from_toml_with_env(text, std::iter::empty())
    }

    /// Reads a file and applies `CVQKD_*` overrides from the process environment.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_with_env(&text, std::env::vars())
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(sweep) = &self.sweep {
            let points = sweep.points()?;
            if self.round_dump.is_some() && points.len() > 1 {
                return Err(Error::config("round_dump needs a single-point run"));
            }
        }
        if self.round_dump.is_some() && self.mode != Mode::Mc {
            return Err(Error::config("round_dump is only available in mc mode"));
        }
        if !(self.d0_safety > 0.0) {
            return Err(Error::config("d0_safety must be positive"));
        }
        if !(self.eps_total > 0.0 && self.eps_total < 1.0) {
            return Err(Error::config("eps_total must lie in (0, 1)"));
        }
        // Out-of-range inputs at either end of the axis are configuration errors.
        let (axis, points) = self.axis()?;
        let ends = [points[0], points[points.len() - 1]];
        for value in ends {
            let mut probe = self.clone();
            probe.set_param(&axis, value)?;
            probe.probe().map_err(|e| match e {
                Error::Domain(msg) => Error::Config(msg),
                other => other,
            })?;
        }
        Ok(())
    }

    fn probe(&self) -> Result<()> {
        self.link().params()?;
        if self.mode != Mode::Collective {
            self.finite_size(self.delta.unwrap_or(DELTA_CANDIDATES[0]))?
                .validate()?;
        }
        Ok(())
    }

    pub fn set_param(&mut self, name: &str, value: f64) -> Result<()> {
        match name {
            "distance_km" => self.distance_km = value,
            "attenuation_db_per_km" => self.attenuation_db_per_km = value,
            "epr_variance" => self.epr_variance = value,
            "excess_noise" => self.excess_noise = value,
            "beta" => self.beta = value,
            "block_size" => self.block_size = value,
            "pe_fraction" => self.pe_fraction = value,
            "delta" => self.delta = Some(value),
            "m_th" => self.m_th = value,
            "t_split" => self.t_split = value,
            "d0" => self.d0 = Some(value),
            other => {
                return Err(Error::config(format!("unknown sweep parameter '{other}'")));
            }
        }
        Ok(())
    }

    pub fn link(&self) -> SymmetricLink {
        SymmetricLink {
            distance_km: self.distance_km,
            attenuation_db_per_km: self.attenuation_db_per_km,
            epr_variance: self.epr_variance,
            excess_noise: self.excess_noise,
            beta: self.beta,
            attack: self.attack,
            omega: self.omega,
        }
    }

    fn block(&self) -> Result<u64> {
        let n = self.block_size.round();
        if !(n >= 3.0 && n < 2f64.powi(63)) {
            return Err(Error::config(format!(
                "block_size must be an integer >= 3, got {}",
                self.block_size
            )));
        }
        Ok(n as u64)
    }

    pub fn finite_size(&self, delta: f64) -> Result<FiniteSizeParams> {
        let eps_s = self.eps_s.unwrap_or(self.eps_total / 2.0);
        let fs = FiniteSizeParams {
            alpha: self.alpha,
            delta,
            m_th: self.m_th,
            t_split: self.t_split,
            eps_s,
            eps_c: self.eps_c.unwrap_or(self.eps_total / 2.0),
            eps_1: self.eps_1.unwrap_or(eps_s / 2.0),
            eps_budget: self.eps_total,
            p_pass: self.p_pass,
            ..FiniteSizeParams::with_block_size(self.block()?)
        };
        fs.with_pe_fraction(self.pe_fraction)
    }

    pub fn coherent_options(&self) -> CoherentOptions {
        CoherentOptions {
            d0: self.d0,
            d0_safety: self.d0_safety,
            tap_in_model: self.tap_in_model,
            entropy: self.entropy,
        }
    }

    fn mc_options(&self, keep_records: bool) -> Result<McOptions> {
        let signals = match self.mc_signals {
            None => None,
            Some(v) if v >= 3.0 && v.is_finite() => Some(v.round() as u64),
            Some(v) => return Err(Error::config(format!("mc_signals must be >= 3, got {v}"))),
        };
        Ok(McOptions {
            signals,
            keep_records,
        })
    }

    fn delta_candidates(&self) -> Vec<f64> {
        match self.delta {
            Some(d) => vec![d],
            None => DELTA_CANDIDATES.to_vec(),
        }
    }

    /// Axis values of the run: the sweep points, or the configured value of
    /// the default axis (distance) for a single evaluation.
    pub fn axis(&self) -> Result<(String, Vec<f64>)> {
        match &self.sweep {
            Some(sweep) => Ok((sweep.param.clone(), sweep.points()?)),
            None => Ok(("distance_km".into(), vec![self.distance_km])),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Breakdown {
    Collective(CollectiveRateBreakdown),
    Coherent(Box<CoherentRateBreakdown>),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KeyRateResult {
    pub axis: f64,
    pub key_rate: f64,
    pub plob: f64,
    pub abort_reason: Option<AbortReason>,
    pub breakdown: Breakdown,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunOutput {
    pub axis_name: String,
    pub mode: Mode,
    pub rows: Vec<KeyRateResult>,
    /// Sifted records of a single-point Monte-Carlo run, when requested.
    pub records: Vec<SiftedRecord>,
}

impl RunOutput {
    /// True when every point aborted.
    pub fn all_aborted(&self) -> bool {
        !self.rows.is_empty() && self.rows.iter().all(|r| r.abort_reason.is_some())
    }
}

fn evaluate(
    config: &RunConfig,
    seed: u64,
    keep_records: bool,
) -> Result<(KeyRateResult, Vec<SiftedRecord>)> {
    let params: ProtocolParams = config.link().params()?;
    let plob = plob_bound(params.total_transmissivity())?;
    let opts = config.coherent_options();
    let candidates = config.delta_candidates();
    let base = config.finite_size(candidates[0])?;
    let mut records = Vec::new();
    let breakdown = match config.mode {
        Mode::Collective => Breakdown::Collective(key_rate_collective(&params)?),
        Mode::Coherent => {
            Breakdown::Coherent(Box::new(best_over_delta(&base, &candidates, |fs| {
                key_rate_coherent(&params, fs, &opts)
            })?))
        }
        Mode::CoherentAsymptotic => {
            Breakdown::Coherent(Box::new(best_over_delta(&base, &candidates, |fs| {
                key_rate_coherent_asymptotic(&params, fs, &opts)
            })?))
        }
        Mode::Mc => {
            let delta = match config.delta {
                Some(d) => d,
                None => {
                    best_over_delta(&base, &candidates, |fs| {
                        key_rate_coherent(&params, fs, &opts)
                    })?
                    .delta
                }
            };
            let fs = config.finite_size(delta)?;
            let run = run_protocol(&params, &fs, &opts, &config.mc_options(keep_records)?, seed)?;
            records = run.records;
            Breakdown::Coherent(Box::new(run.breakdown))
        }
    };
    let (key_rate, abort_reason) = match &breakdown {
        Breakdown::Collective(b) => (b.key_rate, None),
        Breakdown::Coherent(b) => (b.key_rate, b.abort_reason),
    };
    Ok((
        KeyRateResult {
            axis: 0.0,
            key_rate,
            plob,
            abort_reason,
            breakdown,
        },
        records,
    ))
}

#[cfg(feature = "parallel")]
fn map_points<T: Send>(n: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn map_points<T>(n: usize, f: impl Fn(usize) -> T) -> Vec<T> {
    (0..n).map(f).collect()
}

/// Evaluates every sweep point in order. Monte-Carlo points use seed
/// `seed + index`.
pub fn run(config: &RunConfig) -> Result<RunOutput> {
    config.validate()?;
    let (axis_name, points) = config.axis()?;
    let keep_records = config.round_dump.is_some();
    let results = map_points(points.len(), |i| {
        let mut point = config.clone();
        point.set_param(&axis_name, points[i])?;
        let (mut row, records) =
            evaluate(&point, config.seed.wrapping_add(i as u64), keep_records)?;
        row.axis = points[i];
        Ok((row, records))
    });
    let mut rows = Vec::with_capacity(points.len());
    let mut records = Vec::new();
    for result in results {
        let (row, recs) = result?;
        rows.push(row);
        records = recs;
    }
    Ok(RunOutput {
        axis_name,
        mode: config.mode,
        rows,
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_points() {
        let spec = SweepSpec {
            param: "distance_km".into(),
            from: 0.0,
            to: 1.0,
            steps: 5,
            scale: Scale::Linear,
        };
        assert_eq!(spec.points().unwrap(), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        let log = SweepSpec {
            param: "block_size".into(),
            from: 1e6,
            to: 1e12,
            steps: 7,
            scale: Scale::Log,
        };
        let pts = log.points().unwrap();
        assert!((pts[3] - 1e9).abs() < 1e-3);
        let bad = SweepSpec {
            from: 2.0,
            ..spec.clone()
        };
        assert!(bad.points().is_err());
        let bad = SweepSpec {
            param: "nope".into(),
            ..spec.clone()
        };
        assert!(bad.points().is_err());
        let bad = SweepSpec { steps: 0, ..spec };
        assert!(bad.points().is_err());
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = RunConfig::from_toml("distance_km = 3\nexcess_nosie = 0.1\n").unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        assert!(err.to_string().contains("excess_nosie"), "{err}");
        assert!(RunConfig::from_toml(
            "[sweep]\nparam = \"distance_km\"\nfrom = 0\nto = 1\nstep = 2\n"
        )
        .is_err());
    }

    #[test]
    fn env_overrides() {
        let vars = vec![
            ("CVQKD_DISTANCE_KM".to_string(), "7.5".to_string()),
            ("CVQKD_MODE".to_string(), "coherent".to_string()),
            ("CVQKD_SWEEP_STEPS".to_string(), "3".to_string()),
            ("OTHER".to_string(), "1".to_string()),
        ];
        let text = "distance_km = 1\n[sweep]\nparam = \"block_size\"\nfrom = 1e7\nto = 1e9\n";
        let config = RunConfig::from_toml_with_env(text, vars).unwrap();
        assert_eq!(config.distance_km, 7.5);
        assert_eq!(config.mode, Mode::Coherent);
        assert_eq!(config.sweep.unwrap().steps, 3);
        let bad = vec![("CVQKD_BOGUS".to_string(), "1".to_string())];
        assert!(RunConfig::from_toml_with_env("", bad).is_err());
    }

    #[test]
    fn single_point_equals_library_call() {
        let config = RunConfig::from_toml(
            "distance_km = 4\n[sweep]\nparam = \"distance_km\"\nfrom = 12\nto = 12\nsteps = 1\n",
        )
        .unwrap();
        let out = run(&config).unwrap();
        assert_eq!(out.rows.len(), 1);
        let direct =
            key_rate_collective(&SymmetricLink::at_distance(12.0).params().unwrap()).unwrap();
        assert_eq!(out.rows[0].key_rate, direct.key_rate);
        assert_eq!(out.rows[0].axis, 12.0);
    }

    #[test]
    fn invalid_physics_is_not_config_error() {
        let err = RunConfig::from_toml("epr_variance = 0.5\n").unwrap_err();
        assert!(matches!(err, Error::Model(_)), "{err}");
    }
}
