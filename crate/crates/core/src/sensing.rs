//! Force transmission from the insertion-tube holder to the load cell.
//!
//! The holder pushes on a force transmission arm that pivots on a hinge and
//! presses a preloaded ball tip onto the cell. Inside the band between tip
//! lift-off and limiter engagement the cell reading is an affine function of
//! the axial force:
//!
//! ```text
//! cell = preload + (1 - hinge_loss) * ratio_in_out * f_axial
//! ```
//!
//! Below zero the tip lifts off the seat and the cell reads nothing; above
//! `overload_threshold` the limiter takes the load and the cell reading is
//! capped.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Parameters of the force transmission stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LeverGeometry {
    /// Output force over input force of the transmission arm.
    pub ratio_in_out: f64,
    /// Spring preload at the ball tip, N.
    pub preload: f64,
    /// Largest force the limiter lets through to the cell, N.
    pub overload_threshold: f64,
    /// Fractional loss at hinge and ball contact, in `[0, 1)`.
    pub hinge_loss: f64,
}

impl Default for LeverGeometry {
    fn default() -> Self {
        Self {
            ratio_in_out: 1.0,
            preload: 2.0,
            overload_threshold: 50.0,
            hinge_loss: 0.0,
        }
    }
}

/// One evaluation of the lever map, with the clamp flags that produced it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellReading {
    /// Force seen by the cell, N, always in `[0, overload_threshold]`.
    pub force: f64,
    pub limiter_engaged: bool,
    pub contact_lost: bool,
}

impl LeverGeometry {
    pub fn validate(&self) -> Result<()> {
        let ok = self.ratio_in_out.is_finite()
            && self.ratio_in_out > 0.0
            && self.preload.is_finite()
            && self.preload >= 0.0
            && self.overload_threshold.is_finite()
            && self.overload_threshold > self.preload
            && (0.0..1.0).contains(&self.hinge_loss);
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "lever geometry requires ratio > 0, preload >= 0, threshold > preload, 0 <= loss < 1; got {self:?}"
            )))
        }
    }

    /// Effective gain from axial force to cell force.
    pub fn gain(&self) -> f64 {
        (1.0 - self.hinge_loss) * self.ratio_in_out
    }

    /// Cell force before the lift-off and limiter clamps.
    pub fn unclamped(&self, f_axial: f64) -> f64 {
        self.preload + self.gain() * f_axial
    }

    pub fn raw_cell_force(&self, f_axial: f64) -> Result<CellReading> {
        if !f_axial.is_finite() {
            return Err(Error::domain(format!("axial force must be finite, got {f_axial}")));
        }
        let pre = self.unclamped(f_axial);
        Ok(CellReading {
            force: pre.clamp(0.0, self.overload_threshold),
            limiter_engaged: pre > self.overload_threshold,
            contact_lost: pre < 0.0,
        })
    }

    /// Axial force interval on which readings are exactly affine.
    pub fn measurable_range(&self) -> (f64, f64) {
        let g = self.gain();
        (-self.preload / g, (self.overload_threshold - self.preload) / g)
    }
}

/// Runtime state of the sensing stage: tare offset and the last clamp flags.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SensingState {
    pub tare_offset: f64,
    pub limiter_engaged: bool,
    pub contact_lost: bool,
}

impl SensingState {
    /// Captures the zero-load offset. Must be called with no external load.
    pub fn capture_tare(geom: &LeverGeometry) -> Self {
        Self {
            tare_offset: geom.unclamped(0.0).clamp(0.0, geom.overload_threshold),
            limiter_engaged: false,
            contact_lost: false,
        }
    }

    /// Cell force minus the tare offset. Updates the clamp flags.
    pub fn tared_reading(&mut self, f_axial: f64, geom: &LeverGeometry) -> Result<f64> {
        let reading = geom.raw_cell_force(f_axial)?;
        self.limiter_engaged = reading.limiter_engaged;
        self.contact_lost = reading.contact_lost;
        Ok(reading.force - self.tare_offset)
    }
}
