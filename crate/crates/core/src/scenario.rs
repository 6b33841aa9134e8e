//! Scenario files.
//!
//! A scenario is a TOML document of flat keys grouped in single-level
//! sections. Dotted keys and `[section]` tables are equivalent:
//!
//! ```toml
//! name = "straight"
//! duration_s = 60.0
//! trials = 3
//! noise_free = false
//!
//! pathway.kind = "curved"       # "straight" | "curved"
//! pathway.bend_angle_rad = 1.5707963267948966
//! pathway.mu = 0.2
//!
//! [transport]
//! speed_mm_s = 10.0
//! stop_threshold_n = 3.0
//!
//! [dsp]
//! window = 25
//! ```
//!
//! Sections: `pathway`, `contact`, `geometry`, `transport`, `noise`, `dsp`.
//! Every key is optional and unknown keys are rejected. The wall sits at the
//! end of the pathway (`contact.wall_pos_mm = pathway.length_mm`).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sensing::LeverGeometry;
use crate::signal::FilterSpec;
use crate::testbed::{ContactModel, NoiseSpec, PathwayKind, PathwaySpec};
use crate::transport::TransportConfig;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioConfig {
    pub name: String,
    pub pathway: PathwaySpec,
    pub contact: ContactModel,
    pub geometry: LeverGeometry,
    pub transport: TransportConfig,
    pub noise: NoiseSpec,
    pub filter: FilterSpec,
    pub duration_s: f64,
    pub trials: u32,
    /// Oracle mode: all noise sources silenced.
    pub noise_free: bool,
}

impl ScenarioConfig {
    pub fn new(kind: PathwayKind) -> Self {
        let pathway = match kind {
            PathwayKind::Straight => PathwaySpec::straight(),
            PathwayKind::Curved => PathwaySpec::curved(),
        };
        Self {
            name: kind_name(kind).to_string(),
            pathway,
            contact: ContactModel::at_wall(pathway.length_mm),
            geometry: LeverGeometry::default(),
            transport: TransportConfig::default(),
            noise: NoiseSpec::default(),
            filter: FilterSpec::default(),
            duration_s: 60.0,
            trials: 3,
            noise_free: false,
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let raw: RawScenario = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let cfg = raw.resolve()?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.pathway.validate()?;
        self.contact.validate()?;
        if self.contact.wall_pos_mm != self.pathway.length_mm {
            return Err(Error::Config(format!(
                "wall position {} mm must equal pathway length {} mm",
                self.contact.wall_pos_mm, self.pathway.length_mm
            )));
        }
        self.geometry.validate()?;
        self.transport.validate()?;
        self.noise.validate()?;
        self.filter.validate()?;
        if !(self.duration_s.is_finite() && self.duration_s > 0.0) {
            return Err(Error::Config(format!(
                "duration_s must be > 0, got {}",
                self.duration_s
            )));
        }
        if self.trials < 1 {
            return Err(Error::Config("trials must be >= 1".into()));
        }
        Ok(())
    }

    /// Switches pathway kind, restoring the default bend for the new kind.
    pub fn with_pathway_kind(mut self, kind: PathwayKind) -> Self {
        if self.pathway.kind != kind {
            self.pathway.kind = kind;
            self.pathway.bend_angle_rad = match kind {
                PathwayKind::Straight => 0.0,
                PathwayKind::Curved => PathwaySpec::DEFAULT_BEND_RAD,
            };
        }
        self
    }

    /// Number of control ticks in one trial.
    pub fn tick_count(&self) -> usize {
        (self.duration_s * self.transport.control_rate_hz).round() as usize
    }

    /// The noise actually applied in a trial.
    pub fn effective_noise(&self) -> NoiseSpec {
        if self.noise_free {
            NoiseSpec::silent(self.noise.seed)
        } else {
            self.noise
        }
    }
}

fn kind_name(kind: PathwayKind) -> &'static str {
    match kind {
        PathwayKind::Straight => "straight",
        PathwayKind::Curved => "curved",
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    name: Option<String>,
    duration_s: Option<f64>,
    trials: Option<u32>,
    noise_free: Option<bool>,
    #[serde(default)]
    pathway: RawPathway,
    #[serde(default)]
    contact: RawContact,
    #[serde(default)]
    geometry: LeverGeometry,
    #[serde(default)]
    transport: TransportConfig,
    #[serde(default)]
    noise: NoiseSpec,
    #[serde(default)]
    dsp: FilterSpec,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPathway {
    kind: Option<PathwayKind>,
    bend_angle_rad: Option<f64>,
    sheath_id_mm: Option<f64>,
    scope_od_mm: Option<f64>,
    length_mm: Option<f64>,
    mu: Option<f64>,
    normal_load_n_per_mm: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawContact {
    wall_stiffness_n_per_mm: Option<f64>,
    wall_damping_n_s_per_mm: Option<f64>,
}

impl RawScenario {
    fn resolve(self) -> Result<ScenarioConfig> {
        let kind = self.pathway.kind.unwrap_or(PathwayKind::Straight);
        let mut cfg = ScenarioConfig::new(kind);
        if let Some(name) = self.name {
            cfg.name = name;
        }
        if let Some(d) = self.duration_s {
            cfg.duration_s = d;
        }
        if let Some(t) = self.trials {
            cfg.trials = t;
        }
        if let Some(n) = self.noise_free {
            cfg.noise_free = n;
        }

        let p = &mut cfg.pathway;
        let raw = self.pathway;
        if let Some(v) = raw.bend_angle_rad {
            p.bend_angle_rad = v;
        }
        if let Some(v) = raw.sheath_id_mm {
            p.sheath_id_mm = v;
        }
        if let Some(v) = raw.scope_od_mm {
            p.scope_od_mm = v;
        }
        if let Some(v) = raw.length_mm {
            p.length_mm = v;
        }
        if let Some(v) = raw.mu {
            p.mu = v;
        }
        if let Some(v) = raw.normal_load_n_per_mm {
            p.normal_load_n_per_mm = v;
        }

        cfg.contact.wall_pos_mm = cfg.pathway.length_mm;
        if let Some(v) = self.contact.wall_stiffness_n_per_mm {
            cfg.contact.wall_stiffness_n_per_mm = v;
        }
        if let Some(v) = self.contact.wall_damping_n_s_per_mm {
            cfg.contact.wall_damping_n_s_per_mm = v;
        }
        cfg.geometry = self.geometry;
        cfg.transport = self.transport;
        cfg.noise = self.noise;
        cfg.filter = self.dsp;
        Ok(cfg)
    }
}
