//! Grasp, advance, release, return: the linear transport cycle.
//!
//! The carriage grips the tube, drives it forward by one stroke, releases it
//! and returns empty to the start, so the scope advances by one stroke per
//! cycle and never retracts. A distal force above the stop threshold latches
//! the controller in `Halted` with the gripper left as it is.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gripper::{Grip, GripperCommand, GripperState};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TransportConfig {
    /// Carriage travel per cycle, mm.
    pub stroke_mm: f64,
    /// Advance speed, mm/s.
    pub speed_mm_s: f64,
    /// Empty return speed, mm/s.
    pub return_speed_mm_s: f64,
    /// Filtered distal force that stops the insertion, N.
    pub stop_threshold_n: f64,
    pub control_rate_hz: f64,
    /// Extra time held in the grasp and release phases after the gripper has switched, s.
    pub dwell_s: f64,
    /// Acceleration limit for a trapezoidal profile, mm/s². `None` gives a rectangular profile.
    pub accel_mm_s2: Option<f64>,
}

impl Default for TransportConfig {
    fn default() -> Self {
        Self {
            stroke_mm: 100.0,
            speed_mm_s: 10.0,
            return_speed_mm_s: 300.0,
            stop_threshold_n: 3.0,
            control_rate_hz: 125.0,
            dwell_s: 0.0,
            accel_mm_s2: None,
        }
    }
}

impl TransportConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::Config(format!("transport.{name} must be > 0, got {v}")))
            }
        };
        positive("stroke_mm", self.stroke_mm)?;
        positive("speed_mm_s", self.speed_mm_s)?;
        positive("return_speed_mm_s", self.return_speed_mm_s)?;
        positive("stop_threshold_n", self.stop_threshold_n)?;
        positive("control_rate_hz", self.control_rate_hz)?;
        if let Some(a) = self.accel_mm_s2 {
            positive("accel_mm_s2", a)?;
        }
        if !(self.dwell_s.is_finite() && self.dwell_s >= 0.0) {
            return Err(Error::Config(format!(
                "transport.dwell_s must be >= 0, got {}",
                self.dwell_s
            )));
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.control_rate_hz
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Phase {
    Idle,
    Grasping,
    Advancing,
    ReleasingAtEnd,
    Returning,
    Halted,
}

impl Phase {
    pub const ALL: [Phase; 6] = [
        Phase::Idle,
        Phase::Grasping,
        Phase::Advancing,
        Phase::ReleasingAtEnd,
        Phase::Returning,
        Phase::Halted,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Phase::Idle => "idle",
            Phase::Grasping => "grasping",
            Phase::Advancing => "advancing",
            Phase::ReleasingAtEnd => "releasing",
            Phase::Returning => "returning",
            Phase::Halted => "halted",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.tag() == tag)
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransportState {
    pub phase: Phase,
    pub carriage_pos_mm: f64,
    pub scope_depth_mm: f64,
    pub cycle_count: u64,
    /// Depth delivered by the strokes finished so far, mm.
    pub completed_mm: f64,
    /// Carriage speed magnitude in the current motion phase, mm/s.
    pub carriage_speed_mm_s: f64,
    /// Time spent in the current phase after its gripper condition was met, s.
    pub dwell_elapsed_s: f64,
}

impl Default for TransportState {
    fn default() -> Self {
        Self {
            phase: Phase::Idle,
            carriage_pos_mm: 0.0,
            scope_depth_mm: 0.0,
            cycle_count: 0,
            completed_mm: 0.0,
            carriage_speed_mm_s: 0.0,
            dwell_elapsed_s: 0.0,
        }
    }
}

impl TransportState {
    /// Scope insertion depth, mm.
    pub fn net_advancement(&self) -> f64 {
        self.scope_depth_mm
    }

    /// Depth implied by the cycle count and the progress of the current stroke.
    pub fn expected_depth(&self, cfg: &TransportConfig) -> f64 {
        let cycles = self.cycle_count as f64;
        match self.phase {
            Phase::ReleasingAtEnd | Phase::Returning => (cycles + 1.0) * cfg.stroke_mm,
            _ => cycles * cfg.stroke_mm + self.carriage_pos_mm,
        }
    }

    fn enter(self, phase: Phase) -> Self {
        Self {
            phase,
            carriage_speed_mm_s: 0.0,
            dwell_elapsed_s: 0.0,
            ..self
        }
    }

    /// Scope depth from the accumulated strokes; equal to `expected_depth`
    /// up to rounding, and never decreasing.
    fn with_depth(mut self) -> Self {
        self.scope_depth_mm = match self.phase {
            Phase::ReleasingAtEnd | Phase::Returning => self.completed_mm,
            _ => self.completed_mm + self.carriage_pos_mm,
        };
        self
    }

    /// Advances the controller by one tick.
    ///
    /// `distal_force` is the filtered end-cell reading. The returned command,
    /// if any, must be dispatched to the gripper before the next tick.
    pub fn step(
        &self,
        cfg: &TransportConfig,
        gripper: &GripperState,
        distal_force: f64,
        dt: f64,
    ) -> Result<(TransportState, Option<GripperCommand>)> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::domain(format!("dt must be > 0, got {dt}")));
        }
        if !distal_force.is_finite() {
            return Err(Error::domain(format!(
                "distal force must be finite, got {distal_force}"
            )));
        }
        if self.phase == Phase::Halted {
            return Ok((*self, None));
        }
        if distal_force > cfg.stop_threshold_n {
            log::debug!(
                "distal force {distal_force:.4} N above {} N: halting at depth {:.3} mm",
                cfg.stop_threshold_n,
                self.scope_depth_mm
            );
            return Ok((self.enter(Phase::Halted), None));
        }
        match self.phase {
            Phase::Advancing if !gripper.transmits_force() => {
                return Err(Error::Consistency(format!(
                    "advancing with gripper {gripper} not holding the tube"
                )))
            }
            Phase::Returning if gripper.transmits_force() => {
                return Err(Error::Consistency(format!(
                    "returning with gripper {gripper} still holding the tube"
                )))
            }
            _ => {}
        }

        let mut next = *self;
        let mut command = None;
        match self.phase {
            Phase::Idle => {
                next = next.enter(Phase::Grasping);
                command = Some(GripperCommand::RotateCw);
            }
            Phase::Grasping => {
                if gripper.grip == Grip::Gripped {
                    if self.dwell_elapsed_s >= cfg.dwell_s {
                        next = next.enter(Phase::Advancing);
                    } else {
                        next.dwell_elapsed_s += dt;
                    }
                }
            }
            Phase::Advancing => {
                let remaining = cfg.stroke_mm - self.carriage_pos_mm;
                let speed = profile_speed(cfg.speed_mm_s, cfg.accel_mm_s2, self.carriage_speed_mm_s, remaining, dt);
                let delta = (speed * dt).min(remaining);
                next.carriage_speed_mm_s = speed;
                if delta >= remaining {
                    next.carriage_pos_mm = cfg.stroke_mm;
                    next.completed_mm += cfg.stroke_mm;
                    next = next.enter(Phase::ReleasingAtEnd);
                    command = Some(GripperCommand::RotateCcw);
                } else {
                    next.carriage_pos_mm += delta;
                }
            }
            Phase::ReleasingAtEnd => {
                if gripper.grip == Grip::Released {
                    if self.dwell_elapsed_s >= cfg.dwell_s {
                        next = next.enter(Phase::Returning);
                    } else {
                        next.dwell_elapsed_s += dt;
                    }
                }
            }
            Phase::Returning => {
                let remaining = self.carriage_pos_mm;
                let speed = profile_speed(
                    cfg.return_speed_mm_s,
                    cfg.accel_mm_s2,
                    self.carriage_speed_mm_s,
                    remaining,
                    dt,
                );
                next.carriage_speed_mm_s = speed;
                if speed * dt >= remaining {
                    next.carriage_pos_mm = 0.0;
                    next.cycle_count += 1;
                    next = next.enter(Phase::Grasping);
                    command = Some(GripperCommand::RotateCw);
                } else {
                    next.carriage_pos_mm -= speed * dt;
                }
            }
            Phase::Halted => unreachable!(),
        }
        Ok((next.with_depth(), command))
    }
}

/// Speed for the next tick: constant `cruise`, or a trapezoid when an
/// acceleration limit is set.
fn profile_speed(cruise: f64, accel: Option<f64>, current: f64, remaining: f64, dt: f64) -> f64 {
    match accel {
        None => cruise,
        Some(a) => {
            let braking = (2.0 * a * remaining).sqrt();
            (current + a * dt).min(cruise).min(braking).max(a * dt)
        }
    }
}
