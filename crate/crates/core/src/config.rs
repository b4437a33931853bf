//! Run configuration: the full parameter set of one simulation, a
//! validated default profile, and a flat `key = value` file format.

use crate::cost::{CostModel, CostWeights, QosConstraints};
use crate::error::{ConfigError, DomainError};
use crate::protocol::Strategy;
use crate::scalar::Scalar;

/// Churn intensities, in expected node events per query epoch.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ChurnModel {
    pub leave_rate: f64,
    pub join_rate: f64,
}

impl ChurnModel {
    pub fn is_enabled(&self) -> bool {
        self.leave_rate > 0.0 || self.join_rate > 0.0
    }
}

/// Everything a run needs. Construct via [`Default`] and override fields,
/// or parse a config file with [`SimConfig::parse`].
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig<S> {
    pub node_count: usize,
    pub object_count: u32,
    pub max_objects_per_peer: u32,
    pub deg_min: usize,
    pub deg_avg: f64,
    pub deg_max: usize,
    pub max_bw: S,
    pub max_ll: S,
    pub max_files: u32,
    pub ttl: u32,
    pub queries_per_run: usize,
    pub strategy: Strategy,
    pub weights: CostWeights<S>,
    pub min_bandwidth: S,
    pub max_latency: S,
    pub churn: ChurnModel,
    /// Nodes re-probe their links every `probe_period` epochs (1 = always).
    pub probe_period: usize,
    /// Relative jitter applied to probed bandwidths (0 = exact probes).
    pub probe_noise: S,
    pub seed: u64,
}

impl<S: Scalar> Default for SimConfig<S> {
    /// The reference profile: 1000 nodes, 50 objects (at most 15 per peer),
    /// degrees 3..=12 averaging 6, scale maxima 10 / 100 / 50, QoS floor
    /// of 2 bandwidth units and ceiling of 20 latency units, TTL 5.
    fn default() -> Self {
        SimConfig {
            node_count: 1000,
            object_count: 50,
            max_objects_per_peer: 15,
            deg_min: 3,
            deg_avg: 6.0,
            deg_max: 12,
            max_bw: S::from_int(10),
            max_ll: S::from_int(100),
            max_files: 50,
            ttl: 5,
            queries_per_run: 100,
            strategy: Strategy::QosAdaptive,
            weights: CostWeights::default(),
            min_bandwidth: S::from_int(2),
            max_latency: S::from_int(20),
            churn: ChurnModel::default(),
            probe_period: 1,
            probe_noise: S::zero(),
            seed: 42,
        }
    }
}

impl<S: Scalar> SimConfig<S> {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let fail = |msg: String| Err(ConfigError::Invalid(msg));
        if self.node_count < 2 {
            return fail(format!("node_count must be at least 2, got {}", self.node_count));
        }
        if self.object_count == 0 {
            return fail("object_count must be at least 1".into());
        }
        if self.deg_min < 1 {
            return fail("deg_min must be at least 1".into());
        }
        if self.deg_max < self.deg_min {
            return fail(format!(
                "deg_max ({}) must be at least deg_min ({})",
                self.deg_max, self.deg_min
            ));
        }
        if self.deg_max >= self.node_count {
            return fail(format!(
                "deg_max ({}) must be below node_count ({})",
                self.deg_max, self.node_count
            ));
        }
        if !(self.deg_min as f64 <= self.deg_avg && self.deg_avg <= self.deg_max as f64) {
            return fail(format!(
                "deg_avg ({}) must lie within [deg_min, deg_max] = [{}, {}]",
                self.deg_avg, self.deg_min, self.deg_max
            ));
        }
        if self.max_bw <= S::zero() {
            return fail("max_bw must be positive".into());
        }
        if self.max_ll <= S::zero() {
            return fail("max_ll must be positive".into());
        }
        if self.max_files == 0 {
            return fail("max_files must be at least 1".into());
        }
        if self.ttl == 0 {
            return fail("ttl must be at least 1".into());
        }
        if self.queries_per_run == 0 {
            return fail("queries_per_run must be at least 1".into());
        }
        if self.min_bandwidth <= S::zero() || self.min_bandwidth > self.max_bw {
            return fail(format!(
                "min_bandwidth ({}) must lie in (0, max_bw]",
                self.min_bandwidth
            ));
        }
        if self.max_latency <= S::zero() || self.max_latency > self.max_ll {
            return fail(format!(
                "max_latency ({}) must lie in (0, max_ll]",
                self.max_latency
            ));
        }
        if !self.churn.leave_rate.is_finite() || self.churn.leave_rate < 0.0 {
            return fail("leave_rate must be finite and non-negative".into());
        }
        if !self.churn.join_rate.is_finite() || self.churn.join_rate < 0.0 {
            return fail("join_rate must be finite and non-negative".into());
        }
        if self.probe_period == 0 {
            return fail("probe_period must be at least 1".into());
        }
        if self.probe_noise < S::zero() || self.probe_noise > S::one() {
            return fail("probe_noise must lie in [0, 1]".into());
        }
        Ok(())
    }

    pub fn cost_model(&self) -> Result<CostModel<S>, DomainError> {
        CostModel::new(self.max_bw.clone(), self.max_ll.clone(), self.weights.clone())
    }

    pub fn constraints(&self, model: &CostModel<S>) -> Result<QosConstraints<S>, DomainError> {
        QosConstraints::new(self.min_bandwidth.clone(), self.max_latency.clone(), model)
    }

    /// Parses a flat `key = value` file. Unknown and duplicated keys are
    /// errors; `#` starts a full-line comment. Omitted keys keep their
    /// default value. The three weight keys (`w_bandwidth`, `w_latency`,
    /// `w_past`) are combined and must still sum to 1.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut config: SimConfig<S> = SimConfig::default();
        let mut seen: Vec<String> = Vec::new();
        let mut w_bandwidth = config.weights.bandwidth().clone();
        let mut w_latency = config.weights.latency().clone();
        let mut w_past = config.weights.past().clone();
        let mut weights_touched = false;

        for (idx, raw) in text.lines().enumerate() {
            let lineno = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(ConfigError::parse(lineno, "expected `key = value`"));
            };
            let key = key.trim();
            let value = value.trim();
            if value.is_empty() {
                return Err(ConfigError::parse(lineno, format!("empty value for {key}")));
            }
            if seen.iter().any(|k| k == key) {
                return Err(ConfigError::parse(lineno, format!("duplicate key {key}")));
            }
            seen.push(key.to_string());

            let bad = |what: &str| ConfigError::parse(lineno, format!("bad {what}: {value}"));
            match key {
                "node_count" => config.node_count = value.parse().map_err(|_| bad(key))?,
                "object_count" => config.object_count = value.parse().map_err(|_| bad(key))?,
                "max_objects_per_peer" => {
                    config.max_objects_per_peer = value.parse().map_err(|_| bad(key))?
                }
                "deg_min" => config.deg_min = value.parse().map_err(|_| bad(key))?,
                "deg_avg" => config.deg_avg = value.parse().map_err(|_| bad(key))?,
                "deg_max" => config.deg_max = value.parse().map_err(|_| bad(key))?,
                "max_bw" => config.max_bw = S::parse_text(value).ok_or_else(|| bad(key))?,
                "max_ll" => config.max_ll = S::parse_text(value).ok_or_else(|| bad(key))?,
                "max_files" => config.max_files = value.parse().map_err(|_| bad(key))?,
                "ttl" => config.ttl = value.parse().map_err(|_| bad(key))?,
                "queries_per_run" => {
                    config.queries_per_run = value.parse().map_err(|_| bad(key))?
                }
                "strategy" => {
                    config.strategy = value
                        .parse()
                        .map_err(|e: String| ConfigError::parse(lineno, e))?
                }
                "w_bandwidth" => {
                    w_bandwidth = S::parse_text(value).ok_or_else(|| bad(key))?;
                    weights_touched = true;
                }
                "w_latency" => {
                    w_latency = S::parse_text(value).ok_or_else(|| bad(key))?;
                    weights_touched = true;
                }
                "w_past" => {
                    w_past = S::parse_text(value).ok_or_else(|| bad(key))?;
                    weights_touched = true;
                }
                "min_bandwidth" => {
                    config.min_bandwidth = S::parse_text(value).ok_or_else(|| bad(key))?
                }
                "max_latency" => {
                    config.max_latency = S::parse_text(value).ok_or_else(|| bad(key))?
                }
                "leave_rate" => config.churn.leave_rate = value.parse().map_err(|_| bad(key))?,
                "join_rate" => config.churn.join_rate = value.parse().map_err(|_| bad(key))?,
                "probe_period" => config.probe_period = value.parse().map_err(|_| bad(key))?,
                "probe_noise" => {
                    config.probe_noise = S::parse_text(value).ok_or_else(|| bad(key))?
                }
                "seed" => config.seed = value.parse().map_err(|_| bad(key))?,
                other => {
                    return Err(ConfigError::parse(lineno, format!("unknown key: {other}")));
                }
            }
        }

        if weights_touched {
            config.weights = CostWeights::new(w_bandwidth, w_latency, w_past)
                .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        }
        config.validate()?;
        Ok(config)
    }
}
