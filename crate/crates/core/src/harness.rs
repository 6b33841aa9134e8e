//! Closed-loop trials: transport, testbed, device and signal chain stepped
//! together at the control rate.
//!
//! Each tick samples all three cells, filters them, lets the transport react
//! to the filtered end-cell force, and then advances the testbed by the
//! carriage motion of that tick. Gripper commands take effect at the end of
//! the tick.

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::gripper::{GripperCommand, GripperState};
use crate::scenario::ScenarioConfig;
use crate::signal::{stddev, DropOldestQueue, MovingAverage, Sampler, CH_END, CH_ENDOFORCE, CH_PLATE};
use crate::testbed::{NoiseSpec, Testbed};
use crate::trace::{metrics_from_filtered, write_trace, Event, TelemetryRecord};
use crate::transport::{Phase, TransportState};

/// Capacity of the telemetry hand-off queue, in frames.
pub const TELEMETRY_QUEUE_FRAMES: usize = 1024;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 output function.
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of trial `index`: `mix64(master + (index + 1) * GOLDEN_GAMMA)` with
/// wrapping arithmetic, i.e. the `index + 1`-th SplitMix64 output from state
/// `master`.
pub fn trial_seed(master: u64, index: u32) -> u64 {
    mix64(master.wrapping_add(GOLDEN_GAMMA.wrapping_mul(u64::from(index) + 1)))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialReport {
    pub trial_index: u32,
    pub seed: u64,
    pub rmse_n: f64,
    pub endoforce_std_n: f64,
    /// Time of the threshold stop, if the insertion stopped.
    pub halted_at_s: Option<f64>,
    /// First tick with wall contact in the noise-free testbed state.
    pub first_contact_s: Option<f64>,
    /// Largest filtered device reading, N.
    pub max_force_n: f64,
    pub dropped_frames: u64,
    pub ticks: usize,
    pub trace_path: Option<PathBuf>,
}

/// A finished trial with its in-memory telemetry.
#[derive(Debug, Clone)]
pub struct TrialRun {
    pub report: TrialReport,
    pub records: Vec<TelemetryRecord>,
}

pub fn trace_file_name(cfg: &ScenarioConfig, index: u32) -> String {
    format!("{}_trial{}.csv", cfg.name, index)
}

/// Runs one trial and returns its report and telemetry. When `out_dir` is
/// given the trace is written there.
pub fn simulate_trial(cfg: &ScenarioConfig, index: u32, seed: u64, out_dir: Option<&Path>) -> Result<TrialRun> {
    cfg.validate()?;
    let fault = |t: f64| {
        move |e: Error| Error::TrialFault {
            trial: index,
            t,
            source: Box::new(e),
        }
    };

    let dt = cfg.transport.dt();
    let noise = NoiseSpec {
        seed,
        ..cfg.effective_noise()
    };
    let mut testbed = Testbed::new(cfg.pathway, cfg.contact, cfg.geometry, noise);
    let mut sampler = Sampler::new(cfg.transport.control_rate_hz);
    let mut filters: [MovingAverage; 3] = std::array::from_fn(|_| MovingAverage::new(cfg.filter));
    let queue = DropOldestQueue::new(TELEMETRY_QUEUE_FRAMES);

    let mut gripper = GripperState::default()
        .dispatch(GripperCommand::SeatHolder)
        .and_then(|g| g.dispatch(GripperCommand::LockLever))
        .map_err(fault(0.0))?;
    let mut transport = TransportState::default();

    let ticks = cfg.tick_count();
    let mut records = Vec::with_capacity(ticks);
    let mut endo_filt = Vec::with_capacity(ticks);
    let mut sum_filt = Vec::with_capacity(ticks);
    let mut halted_at = None;
    let mut first_contact = None;

    for _ in 0..ticks {
        let contact_now = testbed.state().f_collision > 0.0;
        let depth = testbed.state().depth_mm;
        let frame = sampler.sample(&mut testbed).map_err(fault(testbed.state().t))?;
        let t = frame.t;
        let raw = &frame.channel_values;
        let endo = filters[CH_ENDOFORCE].push(raw[CH_ENDOFORCE]);
        let plate = filters[CH_PLATE].push(raw[CH_PLATE]);
        let end = filters[CH_END].push(raw[CH_END]);
        let sum = plate + end;
        if contact_now && first_contact.is_none() {
            first_contact = Some(t);
        }

        let (next, command) = transport.step(&cfg.transport, &gripper, end, dt).map_err(fault(t))?;
        let mut events = Vec::new();
        if next.phase != transport.phase {
            if next.phase == Phase::Halted {
                events.push(Event::Halt);
                halted_at = Some(t);
            } else {
                events.push(Event::Phase(next.phase));
            }
            log::debug!("t={t:.3}s transport {} -> {}", transport.phase, next.phase);
        }

        let advance = (next.scope_depth_mm - transport.scope_depth_mm).max(0.0);
        testbed
            .step(advance / dt, gripper.transmits_force(), dt)
            .map_err(fault(t))?;

        if let Some(cmd) = command {
            let before = gripper;
            gripper = gripper.dispatch(cmd).map_err(fault(t))?;
            log::debug!("t={t:.3}s gripper {cmd:?}: {before} -> {gripper}");
            events.push(Event::Gripper(cmd));
        }
        transport = next;

        queue.push(TelemetryRecord {
            t,
            seq: frame.sequence,
            phase: transport.phase,
            depth_mm: depth,
            endoforce_raw_n: raw[CH_ENDOFORCE],
            endoforce_filt_n: endo,
            plate_n: raw[CH_PLATE],
            end_n: raw[CH_END],
            sum_filt_n: sum,
            grip: gripper.grip,
            events,
        });
        records.extend(queue.drain());
        endo_filt.push(endo);
        sum_filt.push(sum);
    }

    let metrics = metrics_from_filtered(&endo_filt, &sum_filt).map_err(fault(cfg.duration_s))?;
    let trace_path = match out_dir {
        Some(dir) => {
            let path = dir.join(trace_file_name(cfg, index));
            write_trace(&records, &path)?;
            Some(path)
        }
        None => None,
    };
    let report = TrialReport {
        trial_index: index,
        seed,
        rmse_n: metrics.rmse_n,
        endoforce_std_n: metrics.endoforce_std_n,
        halted_at_s: halted_at,
        first_contact_s: first_contact,
        max_force_n: endo_filt.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        dropped_frames: queue.dropped(),
        ticks,
        trace_path,
    };
    log::info!(
        "{} trial {}: rmse {:.4} N, std {:.4} N, halted at {:?} s",
        cfg.name,
        index,
        report.rmse_n,
        report.endoforce_std_n,
        report.halted_at_s
    );
    Ok(TrialRun { report, records })
}

pub fn run_trial(cfg: &ScenarioConfig, index: u32, seed: u64, out_dir: Option<&Path>) -> Result<TrialReport> {
    simulate_trial(cfg, index, seed, out_dir).map(|run| run.report)
}

#[derive(Debug, Clone, Serialize)]
pub struct TrialOutcome {
    pub trial_index: u32,
    pub report: Option<TrialReport>,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScenarioSummary {
    pub completed: usize,
    pub failed: usize,
    pub mean_rmse_n: f64,
    pub min_rmse_n: f64,
    pub max_rmse_n: f64,
    pub mean_std_n: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScenarioOutcome {
    pub name: String,
    pub trials: Vec<TrialOutcome>,
    /// `None` when no trial completed.
    pub summary: Option<ScenarioSummary>,
}

impl ScenarioOutcome {
    pub fn reports(&self) -> impl Iterator<Item = &TrialReport> {
        self.trials.iter().filter_map(|t| t.report.as_ref())
    }
}

/// Runs all trials of a scenario in parallel, one thread per trial.
///
/// A failing trial is kept in the outcome with its diagnostic.
pub fn run_scenario(cfg: &ScenarioConfig, out_dir: Option<&Path>) -> Result<ScenarioOutcome> {
    cfg.validate()?;
    let results: Vec<(u32, Result<TrialReport>)> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..cfg.trials)
            .map(|i| {
                let seed = trial_seed(cfg.noise.seed, i);
                (i, scope.spawn(move || run_trial(cfg, i, seed, out_dir)))
            })
            .collect();
        handles
            .into_iter()
            .map(|(i, h)| {
                let r = h
                    .join()
                    .unwrap_or_else(|_| Err(Error::Consistency(format!("trial {i} panicked"))));
                (i, r)
            })
            .collect()
    });

    let trials: Vec<TrialOutcome> = results
        .into_iter()
        .map(|(i, r)| match r {
            Ok(report) => TrialOutcome {
                trial_index: i,
                report: Some(report),
                failure: None,
            },
            Err(e) => {
                log::error!("{e}");
                TrialOutcome {
                    trial_index: i,
                    report: None,
                    failure: Some(e.to_string()),
                }
            }
        })
        .collect();

    let rmses: Vec<f64> = trials
        .iter()
        .filter_map(|t| t.report.as_ref())
        .map(|r| r.rmse_n)
        .collect();
    let stds: Vec<f64> = trials
        .iter()
        .filter_map(|t| t.report.as_ref())
        .map(|r| r.endoforce_std_n)
        .collect();
    let summary = (!rmses.is_empty()).then(|| {
        let n = rmses.len() as f64;
        ScenarioSummary {
            completed: rmses.len(),
            failed: trials.len() - rmses.len(),
            mean_rmse_n: rmses.iter().sum::<f64>() / n,
            min_rmse_n: rmses.iter().cloned().fold(f64::INFINITY, f64::min),
            max_rmse_n: rmses.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            mean_std_n: stds.iter().sum::<f64>() / n,
        }
    });
    Ok(ScenarioOutcome {
        name: cfg.name.clone(),
        trials,
        summary,
    })
}

/// Stream index reserved for the calibration hold.
const CALIBRATION_STREAM: u32 = u32::MAX;

/// Seed used for the calibration hold of a scenario.
pub fn calibration_seed(master: u64) -> u64 {
    trial_seed(master, CALIBRATION_STREAM)
}

/// Post-filter std of the device channel on a zero-motion hold.
///
/// The hold lasts the scenario duration; only full-window filter outputs are
/// counted.
pub fn hold_std(cfg: &ScenarioConfig, noise: NoiseSpec) -> Result<f64> {
    let mut testbed = Testbed::new(cfg.pathway, cfg.contact, cfg.geometry, noise);
    let mut filter = MovingAverage::new(cfg.filter);
    let mut out = Vec::with_capacity(cfg.tick_count());
    for _ in 0..cfg.tick_count() {
        let r = testbed.read()?;
        let y = filter.push(r.endoforce);
        if filter.is_full() {
            out.push(y);
        }
    }
    if out.len() < 2 {
        return Err(Error::Config(format!(
            "a {} s hold yields fewer than 2 full filter windows",
            cfg.duration_s
        )));
    }
    stddev(&out)
}

pub const CALIBRATION_SIGMA_MAX_N: f64 = 5.0;
pub const CALIBRATION_MAX_ITERATIONS: usize = 40;

/// Bisects the device-channel noise sigma over `[0, 5] N` until the filtered
/// hold std is within `tol` of `target_std`.
///
/// The hold is seeded with [`calibration_seed`]. The scenario's current sigma
/// is returned unchanged if it already matches.
pub fn calibrate_noise(cfg: &ScenarioConfig, target_std: f64, tol: f64) -> Result<NoiseSpec> {
    cfg.validate()?;
    if !(target_std.is_finite() && target_std >= 0.0) {
        return Err(Error::domain(format!("target std must be >= 0, got {target_std}")));
    }
    if !(tol.is_finite() && tol > 0.0) {
        return Err(Error::domain(format!("tolerance must be > 0, got {tol}")));
    }
    let hold_seed = calibration_seed(cfg.noise.seed);
    let achieved = |sigma: f64| {
        hold_std(
            cfg,
            NoiseSpec {
                sigma_endoforce_n: sigma,
                seed: hold_seed,
                ..cfg.noise
            },
        )
    };
    let with_sigma = |sigma: f64| NoiseSpec {
        sigma_endoforce_n: sigma,
        ..cfg.noise
    };

    if (achieved(cfg.noise.sigma_endoforce_n)? - target_std).abs() <= tol {
        return Ok(cfg.noise);
    }
    let (mut lo, mut hi) = (0.0, CALIBRATION_SIGMA_MAX_N);
    let at_lo = achieved(lo)?;
    if (at_lo - target_std).abs() <= tol {
        return Ok(with_sigma(lo));
    }
    let at_hi = achieved(hi)?;
    if (at_hi - target_std).abs() <= tol {
        return Ok(with_sigma(hi));
    }
    if target_std > at_hi {
        return Err(Error::Calibration {
            best_sigma: hi,
            achieved_std: at_hi,
            target_std,
        });
    }
    let mut best = (hi, at_hi);
    for _ in 0..CALIBRATION_MAX_ITERATIONS {
        let mid = 0.5 * (lo + hi);
        let s = achieved(mid)?;
        if (s - target_std).abs() < (best.1 - target_std).abs() {
            best = (mid, s);
        }
        if (s - target_std).abs() <= tol {
            log::info!("calibrated sigma {mid:.6} N -> filtered std {s:.6} N");
            return Ok(with_sigma(mid));
        }
        if s < target_std {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::Calibration {
        best_sigma: best.0,
        achieved_std: best.1,
        target_std,
    })
}
