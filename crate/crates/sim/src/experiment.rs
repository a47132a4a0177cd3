//! Monte-Carlo trials.
//!
//! Trial `t` of a sweep draws all of its randomness from a ChaCha8 stream
//! seeded with `seed ^ t`, so a record never depends on which other trials
//! ran or on the thread that ran it. Channels are drawn once per trial and
//! reused across the SNR grid (and, for the relay, across `sigma_e2`).

use std::collections::BTreeMap;
use std::time::Instant;

use log::{debug, info};
use matmono_core::linalg::{c, hermitian_inv_sqrt, hermitian_sqrt, CMat};
use matmono_core::random::complex_gaussian;
use matmono_core::{PowerConstraint, Tolerances};
use matmono_oracle::{projected_gradient_restarts, OracleReport, PgOptions, SensorModel, SensorNegSumMse, UplinkSumRate};
use matmono_relay::{
    cascade_mse_matrix, cascade_solve, evaluate_sum_rate, optimal_rotations, ObjectiveKind, ObjectiveSpec, RelayScenario,
};
use matmono_sensor::{alternating_solve_sensors, SensorScenario};
use matmono_uplink::{alternating_solve_uplink, UplinkScenario};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::channel::{exponential_corr, relay_csi_from_draws, sample_channel, source_covariance};
use crate::config::{Algorithm, ExperimentConfig, ScenarioKind};
use crate::record::{write_csv, RunRecord};
use crate::SimError;

/// One point of the non-SNR sweep: a sensor count or an error variance.
#[derive(Debug, Clone, Copy)]
enum Sweep {
    None,
    Sensors(usize),
    ErrorVar(f64),
}

impl Sweep {
    fn label(self, kind: ScenarioKind) -> String {
        match (kind, self) {
            (ScenarioKind::Sensor, Sweep::Sensors(k)) => format!("sensor/K={k}"),
            (ScenarioKind::Relay, Sweep::ErrorVar(e)) => format!("relay/sigma_e2={e}"),
            _ => "uplink".to_string(),
        }
    }
}

fn sweeps(cfg: &ExperimentConfig) -> Vec<Sweep> {
    match cfg.scenario {
        ScenarioKind::Uplink => vec![Sweep::None],
        ScenarioKind::Sensor => cfg.sensor.as_ref().unwrap().sensor_counts.iter().map(|&k| Sweep::Sensors(k)).collect(),
        ScenarioKind::Relay => cfg.relay.as_ref().unwrap().sigma_e2.iter().map(|&e| Sweep::ErrorVar(e)).collect(),
    }
}

fn noise_var(nominal: f64, snr_db: f64) -> f64 {
    nominal / 10f64.powf(snr_db / 10.0)
}

struct Timed<T> {
    value: T,
    ms: f64,
}

fn timed<T>(on: bool, f: impl FnOnce() -> T) -> Timed<T> {
    let start = Instant::now();
    let value = f();
    Timed { value, ms: if on { start.elapsed().as_secs_f64() * 1e3 } else { 0.0 } }
}

struct Ctx<'a> {
    cfg: &'a ExperimentConfig,
    scenario: String,
    trial: usize,
    seed: u64,
}

impl Ctx<'_> {
    fn record(&self, algorithm: Algorithm, snr_db: f64, metric: &str, value: f64, ms: f64, converged: bool) -> Result<RunRecord, SimError> {
        if !value.is_finite() {
            return Err(SimError::Solver {
                context: format!("{} trial {} at {snr_db} dB ({})", self.scenario, self.trial, algorithm.name()),
                source: matmono_core::Error::InvalidInput(format!("non-finite {metric}")),
            });
        }
        Ok(RunRecord {
            scenario: self.scenario.clone(),
            algorithm: algorithm.name().to_string(),
            trial: self.trial,
            snr_db,
            metric_name: metric.to_string(),
            value,
            wall_time_ms: ms,
            converged,
        })
    }

    fn wrap<T>(&self, algorithm: Algorithm, snr_db: f64, r: matmono_core::Result<T>) -> Result<T, SimError> {
        r.map_err(|source| SimError::Solver {
            context: format!("{} trial {} at {snr_db} dB ({})", self.scenario, self.trial, algorithm.name()),
            source,
        })
    }

    fn pg_options(&self) -> PgOptions {
        let o = &self.cfg.oracle;
        PgOptions { restarts: o.restarts, max_iter: o.max_iter, rel_tol: o.rel_tol, seed: self.seed, ..PgOptions::default() }
    }
}

fn uplink_trial(ctx: &Ctx, rng: &mut ChaCha8Rng) -> Result<Vec<RunRecord>, SimError> {
    let cfg = ctx.cfg;
    let u = cfg.uplink.as_ref().unwrap();
    let r_rx = exponential_corr(u.r_r, u.bs_antennas)?;
    let r_tx = exponential_corr(u.r_t, u.user_antennas)?;
    let channels: Vec<CMat> =
        (0..u.users).map(|_| sample_channel(&r_rx, &r_tx, rng)).collect::<Result<_, _>>()?;
    let streams = u.streams.unwrap_or(u.user_antennas);
    let constraint = u.constraint.build(u.user_antennas)?;
    let nominal = u.constraint.nominal_power(u.user_antennas);
    let tol = Tolerances::DEFAULT;

    let mut out = Vec::new();
    for &snr_db in &cfg.snr_grid_db {
        let sigma2 = noise_var(nominal, snr_db);
        let scn = UplinkScenario::new(
            channels.clone(),
            CMat::identity(u.bs_antennas, u.bs_antennas) * c(sigma2),
            vec![CMat::identity(streams, streams); u.users],
            vec![constraint.clone(); u.users],
        )?;
        for &alg in &cfg.algorithms {
            match alg {
                Algorithm::ClosedForm => {
                    let t = timed(cfg.record_timing, || alternating_solve_uplink(&scn, None, Default::default(), &tol));
                    let st = ctx.wrap(alg, snr_db, t.value)?;
                    let v = *st.objective_trace.last().unwrap();
                    out.push(ctx.record(alg, snr_db, "sum_rate", v, t.ms, st.converged)?);
                }
                Algorithm::Oracle => {
                    let obj = UplinkSumRate {
                        channels: scn.channels.clone(),
                        noise_cov: scn.noise_cov.clone(),
                        weights: scn.weights.clone(),
                    };
                    let init = ctx.wrap(alg, snr_db, matmono_uplink::default_init(&scn))?;
                    let opts = ctx.pg_options();
                    let t = timed(cfg.record_timing, || projected_gradient_restarts(&obj, &scn.constraints, &init, &opts));
                    let (rep, _): (OracleReport, _) = ctx.wrap(alg, snr_db, t.value)?;
                    out.push(ctx.record(alg, snr_db, "sum_rate", rep.best_objective, t.ms, rep.converged)?);
                }
                Algorithm::NonRobust => unreachable!("rejected by validation"),
            }
        }
    }
    Ok(out)
}

fn sensor_trial(ctx: &Ctx, rng: &mut ChaCha8Rng, sensors: usize) -> Result<Vec<RunRecord>, SimError> {
    let cfg = ctx.cfg;
    let s = cfg.sensor.as_ref().unwrap();
    let cx = source_covariance(sensors, s.block_dim, s.distance_law, rng)?;
    let channels: Vec<CMat> =
        (0..sensors).map(|_| complex_gaussian(rng, s.fusion_antennas, s.sensor_antennas, 1.0)).collect();
    let constraint = s.constraint.build(s.sensor_antennas)?;
    let nominal = s.constraint.nominal_power(s.sensor_antennas);
    let tol = Tolerances::DEFAULT;

    let mut out = Vec::new();
    for &snr_db in &cfg.snr_grid_db {
        let sigma2 = noise_var(nominal, snr_db);
        let scn = SensorScenario::new(
            cx.clone(),
            vec![s.block_dim; sensors],
            channels.clone(),
            vec![CMat::identity(s.fusion_antennas, s.fusion_antennas) * c(sigma2); sensors],
            vec![constraint.clone(); sensors],
        )?;
        for &alg in &cfg.algorithms {
            match alg {
                Algorithm::ClosedForm => {
                    let t = timed(cfg.record_timing, || alternating_solve_sensors(&scn, None, Default::default(), &tol));
                    let st = ctx.wrap(alg, snr_db, t.value)?;
                    let v = *st.objective_trace.last().unwrap();
                    out.push(ctx.record(alg, snr_db, "mutual_info", v, t.ms, st.converged)?);
                }
                Algorithm::Oracle => {
                    // Sum-MSE baseline: the oracle minimises the estimation
                    // MSE and is scored by the mutual information it attains.
                    let model = ctx.wrap(
                        alg,
                        snr_db,
                        SensorModel::new(&scn.source_cov, &scn.channels, &scn.noise_covs, &scn.block_covs),
                    )?;
                    let init: Vec<CMat> = (0..sensors)
                        .map(|k| {
                            let (nt, nk) = scn.compressor_shape(k);
                            scn.constraints[k].scaled_identity_init(nt, nk)
                        })
                        .collect::<Result<_, _>>()?;
                    let opts = ctx.pg_options();
                    let t = timed(cfg.record_timing, || {
                        let (rep, ys) = projected_gradient_restarts(&SensorNegSumMse(model), &scn.constraints, &init, &opts)?;
                        let xs: Vec<CMat> = ys
                            .iter()
                            .zip(&scn.block_covs)
                            .map(|(y, r)| Ok(y * hermitian_inv_sqrt(r)?))
                            .collect::<matmono_core::Result<_>>()?;
                        Ok((rep, matmono_sensor::mutual_information(&scn, &xs)?))
                    });
                    let (rep, mi) = ctx.wrap(alg, snr_db, t.value)?;
                    out.push(ctx.record(alg, snr_db, "mutual_info", mi, t.ms, rep.converged)?);
                }
                Algorithm::NonRobust => unreachable!("rejected by validation"),
            }
        }
    }
    Ok(out)
}

/// Mean detection MSE per stream with optimal rotations and feedback.
fn per_stream_mse(scn: &RelayScenario, fs: &[CMat]) -> matmono_core::Result<f64> {
    let (q, fb) = optimal_rotations(scn, fs)?;
    let m = cascade_mse_matrix(scn, fs, &q, &fb)?.matrix;
    Ok((0..m.nrows()).map(|i| m[(i, i)].re).sum::<f64>() / m.nrows() as f64)
}

fn relay_trial(ctx: &Ctx, rng: &mut ChaCha8Rng, sigma_e2: f64) -> Result<Vec<RunRecord>, SimError> {
    let cfg = ctx.cfg;
    let r = cfg.relay.as_ref().unwrap();
    let hops = r.antennas.len() - 1;
    let mut est = Vec::with_capacity(hops);
    let mut errs = Vec::with_capacity(hops);
    for k in 0..hops {
        let (rows, cols) = (r.antennas[k + 1], r.antennas[k]);
        let psi = exponential_corr(r.psi_rho, cols)?;
        let g_hat = complex_gaussian(rng, rows, cols, 1.0);
        let g_err = complex_gaussian(rng, rows, cols, 1.0);
        let csi = relay_csi_from_draws(sigma_e2, &hermitian_sqrt(&psi)?, &g_hat, &g_err)?;
        est.push(csi.estimate);
        errs.push(psi * c(sigma_e2));
    }
    let kind = ObjectiveKind::from_index(r.objective)?;
    let objective = ObjectiveSpec::new(kind, cfg.relay_weight())?;
    let constraints: Vec<PowerConstraint> =
        (0..hops).map(|k| r.constraint.build(r.antennas[k])).collect::<Result<_, _>>()?;
    let (metric, eval): (&str, fn(&RelayScenario, &[CMat]) -> matmono_core::Result<f64>) =
        if kind == ObjectiveKind::LogDetMse { ("sum_rate", evaluate_sum_rate) } else { ("per_stream_mse", per_stream_mse) };
    let tol = Tolerances::DEFAULT;

    let mut out = Vec::new();
    for &snr_db in &cfg.snr_grid_db {
        let noise: Vec<f64> = (0..hops).map(|k| noise_var(r.constraint.nominal_power(r.antennas[k]), snr_db)).collect();
        let scn = RelayScenario::new(
            est.clone(),
            errs.clone(),
            noise,
            r.source_var,
            constraints.clone(),
            objective.clone(),
            cfg.relay_streams(),
        )?;
        for &alg in &cfg.algorithms {
            let design = match alg {
                Algorithm::ClosedForm => scn.clone(),
                Algorithm::NonRobust => scn.with_perfect_csi(),
                Algorithm::Oracle => unreachable!("rejected by validation"),
            };
            let t = timed(cfg.record_timing, || cascade_solve(&design, None, Default::default(), &tol));
            let st = ctx.wrap(alg, snr_db, t.value)?;
            let v = ctx.wrap(alg, snr_db, eval(&scn, &st.forwarders()))?;
            out.push(ctx.record(alg, snr_db, metric, v, t.ms, st.converged)?);
        }
    }
    Ok(out)
}

/// Records of one trial of one sweep point, in no particular order.
fn run_trial(cfg: &ExperimentConfig, sweep: Sweep, trial: usize) -> Result<Vec<RunRecord>, SimError> {
    let seed = cfg.seed ^ trial as u64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if let Sweep::Sensors(k) = sweep {
        rng.set_stream(k as u64);
    }
    let ctx = Ctx { cfg, scenario: sweep.label(cfg.scenario), trial, seed };
    let out = match sweep {
        Sweep::None => uplink_trial(&ctx, &mut rng),
        Sweep::Sensors(k) => sensor_trial(&ctx, &mut rng, k),
        Sweep::ErrorVar(e) => relay_trial(&ctx, &mut rng, e),
    }?;
    debug!("{} trial {trial}: {} records", ctx.scenario, out.len());
    Ok(out)
}

/// Runs every trial on the current rayon pool and returns the records
/// sorted by (scenario, algorithm, trial, snr). The CSV is written when the
/// config names an output file.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<RunRecord>, SimError> {
    cfg.validate()?;
    let tasks: Vec<(Sweep, usize)> =
        sweeps(cfg).into_iter().flat_map(|s| (0..cfg.trials).map(move |t| (s, t))).collect();
    info!("running {} trials over {} sweep points", tasks.len(), tasks.len() / cfg.trials);
    let chunks: Vec<Vec<RunRecord>> =
        tasks.par_iter().map(|&(s, t)| run_trial(cfg, s, t)).collect::<Result<_, _>>()?;
    let mut records: Vec<RunRecord> = chunks.into_iter().flatten().collect();
    RunRecord::sort(&mut records);
    if let Some(path) = &cfg.output {
        write_csv(path, &records)?;
        info!("wrote {} records to {}", records.len(), path.display());
    }
    Ok(records)
}

/// Mean metric per (scenario, algorithm, snr).
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub scenario: String,
    pub algorithm: String,
    pub snr_db: f64,
    pub mean: f64,
    pub count: usize,
}

pub fn summarize(records: &[RunRecord]) -> Vec<SummaryRow> {
    let mut acc: BTreeMap<(String, String, u64), (f64, f64, usize)> = BTreeMap::new();
    for r in records {
        // Order the key by SNR through the bit pattern of a sign-flipped float.
        let bits = r.snr_db.to_bits();
        let key = if r.snr_db.is_sign_negative() { !bits } else { bits | (1 << 63) };
        let e = acc.entry((r.scenario.clone(), r.algorithm.clone(), key)).or_insert((r.snr_db, 0.0, 0));
        e.1 += r.value;
        e.2 += 1;
    }
    acc.into_iter()
        .map(|((scenario, algorithm, _), (snr_db, sum, count))| SummaryRow {
            scenario,
            algorithm,
            snr_db,
            mean: sum / count as f64,
            count,
        })
        .collect()
}
