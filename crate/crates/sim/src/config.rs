//! Experiment configuration, read from TOML. The grammar is documented in
//! `docs/config.md`.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use matmono_core::linalg::{c, CMat};
use matmono_core::PowerConstraint;
use serde::Deserialize;

use crate::channel::exponential_corr;
use crate::SimError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    Uplink,
    Sensor,
    Relay,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    ClosedForm,
    Oracle,
    NonRobust,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::ClosedForm => "closed_form",
            Algorithm::Oracle => "oracle",
            Algorithm::NonRobust => "non_robust",
        }
    }
}

/// Per-node power constraint.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ConstraintSpec {
    SumPower { total: f64 },
    PerAntenna { budgets: Vec<f64> },
    Joint { total: f64, cap: f64 },
    /// `R_s = scale * [rho^{|i-j|}]`
    Shaping {
        rho: f64,
        #[serde(default = "one")]
        scale: f64,
    },
}

fn one() -> f64 {
    1.0
}

impl ConstraintSpec {
    pub fn build(&self, antennas: usize) -> Result<PowerConstraint, SimError> {
        let k = match self {
            ConstraintSpec::SumPower { total } => PowerConstraint::sum_power(*total),
            ConstraintSpec::PerAntenna { budgets } => {
                if budgets.len() != antennas {
                    return Err(SimError::Config(format!(
                        "{} per-antenna budgets for {antennas} antennas",
                        budgets.len()
                    )));
                }
                PowerConstraint::per_antenna(budgets)
            }
            ConstraintSpec::Joint { total, cap } => PowerConstraint::Joint { total: *total, cap: *cap },
            ConstraintSpec::Shaping { rho, scale } => {
                if !(*scale > 0.0) {
                    return Err(SimError::Config("shaping scale must be positive".into()));
                }
                PowerConstraint::Shaping { shape: exponential_corr(*rho, antennas)? * c(*scale) }
            }
        };
        k.validate(antennas).map_err(|e| SimError::Config(e.to_string()))?;
        Ok(k)
    }

    /// Total transmit power `P` used in the SNR definition `P / sigma^2`.
    pub fn nominal_power(&self, antennas: usize) -> f64 {
        match self {
            ConstraintSpec::SumPower { total } | ConstraintSpec::Joint { total, .. } => *total,
            ConstraintSpec::PerAntenna { budgets } => budgets.iter().sum(),
            ConstraintSpec::Shaping { scale, .. } => scale * antennas as f64,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UplinkSettings {
    #[serde(default = "two")]
    pub users: usize,
    #[serde(default = "four")]
    pub user_antennas: usize,
    #[serde(default = "eight")]
    pub bs_antennas: usize,
    /// Streams per user; defaults to the user antenna count.
    pub streams: Option<usize>,
    #[serde(default = "half")]
    pub r_r: f64,
    #[serde(default = "half")]
    pub r_t: f64,
    pub constraint: ConstraintSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceLaw {
    /// Each pairwise distance i.i.d. uniform on [0, 1]; draws whose source
    /// covariance is not positive definite are rejected.
    Iid,
    /// Sensors placed uniformly on a unit segment, distance `|x_m - x_n|`.
    Line,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorSettings {
    #[serde(default = "sensor_counts")]
    pub sensor_counts: Vec<usize>,
    #[serde(default = "four")]
    pub sensor_antennas: usize,
    #[serde(default = "eight")]
    pub fusion_antennas: usize,
    /// Dimension of each sensor's observation block.
    #[serde(default = "four")]
    pub block_dim: usize,
    #[serde(default = "iid")]
    pub distance_law: DistanceLaw,
    pub constraint: ConstraintSpec,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RelaySettings {
    /// Antennas at the source, each relay and the destination.
    #[serde(default = "relay_antennas")]
    pub antennas: Vec<usize>,
    #[serde(default = "psi_rho")]
    pub psi_rho: f64,
    #[serde(default = "sigma_e2")]
    pub sigma_e2: Vec<f64>,
    /// Objective index 1..=6 in the order of `ObjectiveKind::ALL`.
    #[serde(default = "one_usize")]
    pub objective: usize,
    /// Stream weights (the eigenvalues of a diagonal `W`) for objective 2.
    pub stream_weights: Option<Vec<f64>>,
    #[serde(default = "one")]
    pub source_var: f64,
    pub constraint: ConstraintSpec,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSettings {
    #[serde(default = "four")]
    pub restarts: usize,
    #[serde(default = "oracle_iter")]
    pub max_iter: usize,
    #[serde(default = "oracle_tol")]
    pub rel_tol: f64,
}

impl Default for OracleSettings {
    fn default() -> Self {
        OracleSettings { restarts: 4, max_iter: oracle_iter(), rel_tol: oracle_tol() }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: ScenarioKind,
    #[serde(default = "trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    pub snr_grid_db: Vec<f64>,
    pub algorithms: Vec<Algorithm>,
    pub output: Option<PathBuf>,
    /// Non-converged solves make `mmo run` exit with status 3.
    #[serde(default)]
    pub strict: bool,
    /// Record solver wall time; off by default so reruns are byte-identical.
    #[serde(default)]
    pub record_timing: bool,
    #[serde(default)]
    pub oracle: OracleSettings,
    pub uplink: Option<UplinkSettings>,
    pub sensor: Option<SensorSettings>,
    pub relay: Option<RelaySettings>,
}

fn two() -> usize {
    2
}
fn four() -> usize {
    4
}
fn eight() -> usize {
    8
}
fn one_usize() -> usize {
    1
}
fn half() -> f64 {
    0.5
}
fn trials() -> usize {
    100
}
fn iid() -> DistanceLaw {
    DistanceLaw::Iid
}
fn sensor_counts() -> Vec<usize> {
    vec![2, 4, 6]
}
fn relay_antennas() -> Vec<usize> {
    vec![4, 4, 4]
}
fn psi_rho() -> f64 {
    0.6
}
fn sigma_e2() -> Vec<f64> {
    vec![0.0, 0.004, 0.008]
}
fn oracle_iter() -> usize {
    5000
}
fn oracle_tol() -> f64 {
    1e-10
}

fn corr_ok(name: &str, r: f64) -> Result<(), SimError> {
    if (0.0..1.0).contains(&r) {
        Ok(())
    } else {
        Err(SimError::Config(format!("{name} = {r} is outside [0, 1)")))
    }
}

fn positive(name: &str, n: usize) -> Result<(), SimError> {
    if n == 0 {
        return Err(SimError::Config(format!("{name} must be at least 1")));
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, SimError> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| SimError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SimError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        positive("trials", self.trials)?;
        if self.snr_grid_db.is_empty() || self.snr_grid_db.iter().any(|s| !s.is_finite()) {
            return Err(SimError::Config("snr_grid_db must be a non-empty list of finite values".into()));
        }
        let algos: BTreeSet<Algorithm> = self.algorithms.iter().copied().collect();
        if algos.is_empty() || algos.len() != self.algorithms.len() {
            return Err(SimError::Config("algorithms must be a non-empty list without repeats".into()));
        }
        let allowed: &[Algorithm] = match self.scenario {
            ScenarioKind::Uplink | ScenarioKind::Sensor => &[Algorithm::ClosedForm, Algorithm::Oracle],
            ScenarioKind::Relay => &[Algorithm::ClosedForm, Algorithm::NonRobust],
        };
        if let Some(a) = algos.iter().find(|a| !allowed.contains(a)) {
            return Err(SimError::Config(format!("algorithm {} is not available for this scenario", a.name())));
        }
        positive("oracle.restarts", self.oracle.restarts)?;
        positive("oracle.max_iter", self.oracle.max_iter)?;

        let sections = [self.uplink.is_some(), self.sensor.is_some(), self.relay.is_some()];
        let want = match self.scenario {
            ScenarioKind::Uplink => 0,
            ScenarioKind::Sensor => 1,
            ScenarioKind::Relay => 2,
        };
        let names = ["uplink", "sensor", "relay"];
        for (i, present) in sections.iter().enumerate() {
            if i == want && !present {
                return Err(SimError::Config(format!("missing [{}] section", names[i])));
            }
            if i != want && *present {
                return Err(SimError::Config(format!("[{}] section does not match the scenario", names[i])));
            }
        }
        match self.scenario {
            ScenarioKind::Uplink => {
                let u = self.uplink.as_ref().expect("checked");
                positive("uplink.users", u.users)?;
                positive("uplink.user_antennas", u.user_antennas)?;
                positive("uplink.bs_antennas", u.bs_antennas)?;
                positive("uplink.streams", u.streams.unwrap_or(u.user_antennas))?;
                corr_ok("uplink.r_r", u.r_r)?;
                corr_ok("uplink.r_t", u.r_t)?;
                u.constraint.build(u.user_antennas)?;
            }
            ScenarioKind::Sensor => {
                let s = self.sensor.as_ref().expect("checked");
                if s.sensor_counts.is_empty() {
                    return Err(SimError::Config("sensor.sensor_counts is empty".into()));
                }
                for &k in &s.sensor_counts {
                    positive("sensor count", k)?;
                }
                positive("sensor.sensor_antennas", s.sensor_antennas)?;
                positive("sensor.fusion_antennas", s.fusion_antennas)?;
                positive("sensor.block_dim", s.block_dim)?;
                s.constraint.build(s.sensor_antennas)?;
            }
            ScenarioKind::Relay => {
                let r = self.relay.as_ref().expect("checked");
                if r.antennas.len() < 2 {
                    return Err(SimError::Config("relay.antennas needs at least a source and a destination".into()));
                }
                for &n in &r.antennas {
                    positive("relay antenna count", n)?;
                }
                if r.antennas[..r.antennas.len() - 1].windows(2).any(|w| w[0] != w[1]) {
                    return Err(SimError::Config("the source and relays must have equal antenna counts".into()));
                }
                corr_ok("relay.psi_rho", r.psi_rho)?;
                if r.sigma_e2.is_empty() {
                    return Err(SimError::Config("relay.sigma_e2 is empty".into()));
                }
                for &e in &r.sigma_e2 {
                    corr_ok("relay.sigma_e2", e)?;
                }
                if !(r.source_var > 0.0) {
                    return Err(SimError::Config("relay.source_var must be positive".into()));
                }
                let kind = matmono_relay::ObjectiveKind::from_index(r.objective)
                    .map_err(|_| SimError::Config(format!("relay.objective {} is not in 1..=6", r.objective)))?;
                let streams = self.relay_streams();
                match (&r.stream_weights, kind == matmono_relay::ObjectiveKind::WeightedMse) {
                    (Some(w), true) => {
                        if w.len() != streams || w.iter().any(|v| !(*v > 0.0)) {
                            return Err(SimError::Config(format!("relay.stream_weights needs {streams} positive values")));
                        }
                    }
                    (None, true) => return Err(SimError::Config("objective 2 needs relay.stream_weights".into())),
                    (Some(_), false) => {
                        return Err(SimError::Config("relay.stream_weights is only used by objective 2".into()))
                    }
                    (None, false) => {}
                }
                r.constraint.build(r.antennas[0])?;
            }
        }
        Ok(())
    }

    /// The same experiment restricted to the oracle.
    pub fn oracle_only(&self) -> Result<Self, SimError> {
        let out = ExperimentConfig { algorithms: vec![Algorithm::Oracle], ..self.clone() };
        out.validate()?;
        Ok(out)
    }

    pub(crate) fn relay_streams(&self) -> usize {
        let r = self.relay.as_ref().expect("relay scenario");
        r.antennas[0].min(*r.antennas.last().unwrap())
    }

    pub(crate) fn relay_weight(&self) -> Option<CMat> {
        let w = self.relay.as_ref()?.stream_weights.as_ref()?;
        Some(matmono_core::linalg::from_real_diag(w))
    }
}
