//! Insertion testbed: a scope driven through an access sheath toward an end
//! wall, with a friction cell under the sheath plate and a collision cell at
//! the wall.
//!
//! Friction is distributed Coulomb drag over the inserted length. On a curved
//! pathway the drag is amplified by the capstan factor `exp(mu * theta)`,
//! where the wrapped angle grows with insertion depth. The wall is a linear
//! spring-damper. While the tube is gripped the device sees exactly
//! `friction + collision`; while released the scope is unloaded and any wall
//! reaction is carried by static friction in the sheath.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sensing::{LeverGeometry, SensingState};
use crate::signal::CellSource;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PathwayKind {
    Straight,
    Curved,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathwaySpec {
    pub kind: PathwayKind,
    pub bend_angle_rad: f64,
    pub sheath_id_mm: f64,
    pub scope_od_mm: f64,
    /// Distance from the sheath entry to the end wall, mm.
    pub length_mm: f64,
    /// Coulomb coefficient between scope and sheath.
    pub mu: f64,
    /// Distributed normal contact load, N/mm.
    pub normal_load_n_per_mm: f64,
}

impl PathwaySpec {
    pub const DEFAULT_BEND_RAD: f64 = std::f64::consts::FRAC_PI_2;

    pub fn straight() -> Self {
        Self {
            kind: PathwayKind::Straight,
            bend_angle_rad: 0.0,
            sheath_id_mm: 4.0,
            scope_od_mm: 3.0,
            length_mm: 300.0,
            mu: 0.2,
            normal_load_n_per_mm: 0.01,
        }
    }

    pub fn curved() -> Self {
        Self {
            kind: PathwayKind::Curved,
            bend_angle_rad: Self::DEFAULT_BEND_RAD,
            ..Self::straight()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(format!("pathway: {msg}")));
        if !(self.scope_od_mm > 0.0 && self.scope_od_mm < self.sheath_id_mm) {
            return fail(format!(
                "scope OD {} mm must be positive and below sheath ID {} mm",
                self.scope_od_mm, self.sheath_id_mm
            ));
        }
        if !(self.length_mm.is_finite() && self.length_mm > 0.0) {
            return fail(format!("length_mm must be > 0, got {}", self.length_mm));
        }
        if !(self.mu.is_finite() && self.mu >= 0.0) {
            return fail(format!("mu must be >= 0, got {}", self.mu));
        }
        if !(self.normal_load_n_per_mm.is_finite() && self.normal_load_n_per_mm >= 0.0) {
            return fail(format!(
                "normal_load_n_per_mm must be >= 0, got {}",
                self.normal_load_n_per_mm
            ));
        }
        if !(self.bend_angle_rad.is_finite() && self.bend_angle_rad >= 0.0) {
            return fail(format!("bend_angle_rad must be >= 0, got {}", self.bend_angle_rad));
        }
        match (self.kind, self.bend_angle_rad == 0.0) {
            (PathwayKind::Straight, false) => fail("a straight pathway has no bend".into()),
            (PathwayKind::Curved, true) => fail("a curved pathway needs a bend angle > 0".into()),
            _ => Ok(()),
        }
    }

    /// Wrapped angle at the given depth; the bend engages in proportion to insertion.
    pub fn engaged_angle(&self, depth_mm: f64) -> f64 {
        self.bend_angle_rad * (depth_mm / self.length_mm).clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContactModel {
    pub wall_pos_mm: f64,
    pub wall_stiffness_n_per_mm: f64,
    pub wall_damping_n_s_per_mm: f64,
}

impl ContactModel {
    pub fn at_wall(wall_pos_mm: f64) -> Self {
        Self {
            wall_pos_mm,
            wall_stiffness_n_per_mm: 4.0,
            wall_damping_n_s_per_mm: 0.05,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.wall_stiffness_n_per_mm.is_finite() && self.wall_stiffness_n_per_mm > 0.0) {
            return Err(Error::Config(format!(
                "contact.wall_stiffness_n_per_mm must be > 0, got {}",
                self.wall_stiffness_n_per_mm
            )));
        }
        if !(self.wall_damping_n_s_per_mm.is_finite() && self.wall_damping_n_s_per_mm >= 0.0) {
            return Err(Error::Config(format!(
                "contact.wall_damping_n_s_per_mm must be >= 0, got {}",
                self.wall_damping_n_s_per_mm
            )));
        }
        Ok(())
    }
}

/// Additive white Gaussian noise per channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSpec {
    pub sigma_endoforce_n: f64,
    pub sigma_ref_cells_n: f64,
    pub seed: u64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            sigma_endoforce_n: 2.25,
            sigma_ref_cells_n: 0.1,
            seed: 0x5EED_F0CE_2025,
        }
    }
}

impl NoiseSpec {
    pub fn silent(seed: u64) -> Self {
        Self {
            sigma_endoforce_n: 0.0,
            sigma_ref_cells_n: 0.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("sigma_endoforce_n", self.sigma_endoforce_n),
            ("sigma_ref_cells_n", self.sigma_ref_cells_n),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("noise.{name} must be >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SimState {
    pub depth_mm: f64,
    pub velocity_mm_s: f64,
    pub f_friction: f64,
    pub f_collision: f64,
    /// Axial force at the device input; always `f_friction + f_collision`.
    pub f_axial_true: f64,
    pub t: f64,
}

/// Sheath friction on the scope, N.
///
/// Sliding (`velocity > 0`) gives the kinetic value; at rest the previous
/// value `held` is returned.
pub fn friction_force(depth_mm: f64, velocity_mm_s: f64, pathway: &PathwaySpec, held: f64) -> Result<f64> {
    if !(depth_mm.is_finite() && depth_mm >= 0.0) {
        return Err(Error::domain(format!("depth must be >= 0, got {depth_mm}")));
    }
    if velocity_mm_s <= 0.0 {
        return Ok(held);
    }
    let base = pathway.mu * pathway.normal_load_n_per_mm * depth_mm.min(pathway.length_mm);
    Ok(match pathway.kind {
        PathwayKind::Straight => base,
        PathwayKind::Curved => base * (pathway.mu * pathway.engaged_angle(depth_mm)).exp(),
    })
}

/// Wall reaction on the scope tip, N.
pub fn collision_force(depth_mm: f64, velocity_mm_s: f64, contact: &ContactModel) -> f64 {
    let penetration = depth_mm - contact.wall_pos_mm;
    if penetration <= 0.0 {
        return 0.0;
    }
    (contact.wall_stiffness_n_per_mm * penetration + contact.wall_damping_n_s_per_mm * velocity_mm_s).max(0.0)
}

/// Advances the testbed by `dt` with the scope driven at `commanded_velocity`.
///
/// `engaged` says whether the gripper holds the tube; an unheld scope cannot be
/// driven.
pub fn step_sim(
    state: &SimState,
    commanded_velocity: f64,
    engaged: bool,
    pathway: &PathwaySpec,
    contact: &ContactModel,
    dt: f64,
) -> Result<SimState> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::domain(format!("dt must be > 0, got {dt}")));
    }
    if !(commanded_velocity.is_finite() && commanded_velocity >= 0.0) {
        return Err(Error::domain(format!(
            "commanded velocity must be finite and >= 0, got {commanded_velocity}"
        )));
    }
    if !engaged && commanded_velocity > 0.0 {
        return Err(Error::Consistency(
            "scope driven forward while the gripper is released".into(),
        ));
    }
    let depth = state.depth_mm + commanded_velocity * dt;
    let (f_friction, f_collision) = if engaged {
        (
            friction_force(depth, commanded_velocity, pathway, state.f_friction)?,
            collision_force(depth, commanded_velocity, contact),
        )
    } else {
        let wall = collision_force(depth, 0.0, contact);
        (0.0 - wall, wall)
    };
    Ok(SimState {
        depth_mm: depth,
        velocity_mm_s: commanded_velocity,
        f_friction,
        f_collision,
        f_axial_true: f_friction + f_collision,
        t: state.t + dt,
    })
}

/// One simultaneous reading of the three cells, N.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellTriple {
    /// Tared device reading.
    pub endoforce: f64,
    pub plate: f64,
    pub end: f64,
}

impl CellTriple {
    pub fn to_array(self) -> [f64; 3] {
        [self.endoforce, self.plate, self.end]
    }
}

/// Reads the device cell and both reference cells with additive noise.
///
/// Three standard normals are drawn per call regardless of the sigmas, so the
/// noise stream of a seed does not depend on the noise amplitudes.
pub fn read_cells<R: Rng + ?Sized>(
    state: &SimState,
    geometry: &LeverGeometry,
    sensing: &mut SensingState,
    noise: &NoiseSpec,
    rng: &mut R,
) -> Result<CellTriple> {
    let z_dev: f64 = rng.sample(StandardNormal);
    let z_plate: f64 = rng.sample(StandardNormal);
    let z_end: f64 = rng.sample(StandardNormal);
    let device = sensing.tared_reading(state.f_axial_true, geometry)?;
    Ok(CellTriple {
        endoforce: device + noise.sigma_endoforce_n * z_dev,
        plate: state.f_friction + noise.sigma_ref_cells_n * z_plate,
        end: state.f_collision + noise.sigma_ref_cells_n * z_end,
    })
}

/// The testbed with its device, noise source and simulation state.
#[derive(Debug, Clone)]
pub struct Testbed {
    pub pathway: PathwaySpec,
    pub contact: ContactModel,
    pub geometry: LeverGeometry,
    pub noise: NoiseSpec,
    sensing: SensingState,
    state: SimState,
    rng: ChaCha8Rng,
    last: Option<CellTriple>,
}

impl Testbed {
    /// Builds the testbed at rest and tares the device cell.
    pub fn new(pathway: PathwaySpec, contact: ContactModel, geometry: LeverGeometry, noise: NoiseSpec) -> Self {
        Self {
            pathway,
            contact,
            geometry,
            noise,
            sensing: SensingState::capture_tare(&geometry),
            state: SimState::default(),
            rng: ChaCha8Rng::seed_from_u64(noise.seed),
            last: None,
        }
    }

    pub fn state(&self) -> &SimState {
        &self.state
    }

    pub fn sensing(&self) -> &SensingState {
        &self.sensing
    }

    /// The noise-free readings of the last `read`, for oracle checks.
    pub fn last_reading(&self) -> Option<CellTriple> {
        self.last
    }

    pub fn step(&mut self, commanded_velocity: f64, engaged: bool, dt: f64) -> Result<()> {
        self.state = step_sim(
            &self.state,
            commanded_velocity,
            engaged,
            &self.pathway,
            &self.contact,
            dt,
        )?;
        Ok(())
    }

    pub fn read(&mut self) -> Result<CellTriple> {
        let triple = read_cells(
            &self.state,
            &self.geometry,
            &mut self.sensing,
            &self.noise,
            &mut self.rng,
        )?;
        self.last = Some(triple);
        Ok(triple)
    }
}

impl CellSource for Testbed {
    fn channel_count(&self) -> usize {
        3
    }

    fn read_into(&mut self, out: &mut [f64]) -> Result<()> {
        let values = self.read()?.to_array();
        out.copy_from_slice(&values);
        Ok(())
    }
}
