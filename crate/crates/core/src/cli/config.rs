use std::path::PathBuf;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::bench::{self, BenchmarkPreset};
use crate::poly::{DynamicalSystem, Polynomial};
use crate::shapes::RaySpec;
use crate::verify::StateBox;
use crate::vsiter::{
    ConfigError, DegreeRange, InitialV, IterationConfig, Placement, RoundConfig, ShapeSpec, VStepCentering,
};

pub const CONFIG_VERSION: u32 = 1;

/// A run as written in a TOML file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub system: SystemSection,
    #[serde(default)]
    pub degrees: DegreesSection,
    #[serde(default)]
    pub tolerances: TolerancesSection,
    #[serde(default)]
    pub margins: MarginsSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub verify: VerifySection,
    /// Empty with a preset system means the preset's rounds.
    #[serde(default)]
    pub rounds: Vec<RoundSection>,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    /// Right-hand sides in polynomial text, one per state.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dynamics: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DegreesSection {
    pub v: u32,
    pub s0: [u32; 2],
    pub si: [u32; 2],
}

impl Default for DegreesSection {
    fn default() -> Self {
        DegreesSection {
            v: 6,
            s0: [2, 4],
            si: [0, 4],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TolerancesSection {
    pub gamma_bisect: f64,
    pub beta_bisect: f64,
    pub beta_stall: f64,
    /// 0 certifies the largest level set of the initial `V` only.
    pub max_iters: usize,
}

impl Default for TolerancesSection {
    fn default() -> Self {
        TolerancesSection {
            gamma_bisect: 1e-3,
            beta_bisect: 1e-3,
            beta_stall: 1e-3,
            max_iters: 100,
        }
    }
}

/// `l1` and `l2` in polynomial text; unset means `1e-6 * x'x`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarginsSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l1: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l2: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CenteringName {
    Uniform,
    #[default]
    Containment,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    #[serde(default)]
    pub v_centering: CenteringName,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySection {
    pub samples: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub box_lo: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub box_hi: Option<Vec<f64>>,
}

impl Default for VerifySection {
    fn default() -> Self {
        VerifySection {
            samples: 10_000,
            box_lo: None,
            box_hi: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoundSection {
    /// "lyapunov", "previous" or a polynomial.
    pub initial_v: String,
    #[serde(default)]
    pub shapes: Vec<ShapeSection>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CenterMode {
    Origin,
    Ray,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShapeSection {
    pub center_mode: CenterMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_deg: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psi_deg: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    /// Shape matrix, row-major.
    #[serde(rename = "N")]
    pub n: Vec<f64>,
}

/// A validated run, ready for the iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedRun {
    pub system: DynamicalSystem,
    pub config: IterationConfig,
    pub rounds: Vec<RoundConfig>,
    pub bounds: StateBox,
    pub seed: u64,
    pub samples: usize,
    pub output_dir: PathBuf,
    pub preset: Option<BenchmarkPreset>,
}

/// Half-width of the verification box when neither the file nor a preset gives one.
pub const DEFAULT_BOX_RADIUS: f64 = 10.0;

fn err(field: impl Into<String>, message: impl std::fmt::Display) -> ConfigError {
    ConfigError::new(field, message.to_string())
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<RunConfig, ConfigError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| {
            let msg = e.message().to_string();
            let line = e
                .span()
                .map(|s| format!(" (line {})", text[..s.start].lines().count().max(1)))
                .unwrap_or_default();
            err("<file>", format!("{msg}{line}"))
        })?;
        if cfg.version != CONFIG_VERSION {
            return Err(err(
                "version",
                format!("unsupported config version {} (expected {CONFIG_VERSION})", cfg.version),
            ));
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    /// The preset written out in full, including its rounds.
    pub fn from_preset(p: &BenchmarkPreset) -> RunConfig {
        let c = &p.config;
        RunConfig {
            version: CONFIG_VERSION,
            seed: 0,
            output_dir: PathBuf::from(format!("out/{}", p.name)),
            system: SystemSection {
                preset: Some(p.name.to_string()),
                name: None,
                dynamics: None,
            },
            degrees: DegreesSection {
                v: c.deg_v,
                s0: [c.deg_s0.min, c.deg_s0.max],
                si: [c.deg_si.min, c.deg_si.max],
            },
            tolerances: TolerancesSection {
                gamma_bisect: c.gamma_bisect_tol,
                beta_bisect: c.beta_bisect_tol,
                beta_stall: c.beta_stall_tol,
                max_iters: c.max_iters,
            },
            margins: MarginsSection::default(),
            solver: SolverSection::default(),
            verify: VerifySection {
                samples: 10_000,
                box_lo: Some(p.bounds.lo().to_vec()),
                box_hi: Some(p.bounds.hi().to_vec()),
            },
            rounds: p.rounds.iter().map(round_section).collect(),
        }
    }

    pub fn resolve(&self) -> Result<ResolvedRun, ConfigError> {
        let (system, preset) = self.resolve_system()?;
        let n = system.nvars();
        let mut config = IterationConfig::new(n);
        config.deg_v = self.degrees.v;
        config.deg_s0 = DegreeRange::new(self.degrees.s0[0], self.degrees.s0[1]);
        config.deg_si = DegreeRange::new(self.degrees.si[0], self.degrees.si[1]);
        config.gamma_bisect_tol = self.tolerances.gamma_bisect;
        config.beta_bisect_tol = self.tolerances.beta_bisect;
        config.beta_stall_tol = self.tolerances.beta_stall;
        config.max_iters = self.tolerances.max_iters;
        config.v_centering = match self.solver.v_centering {
            CenteringName::Uniform => VStepCentering::Uniform,
            CenteringName::Containment => VStepCentering::Containment,
        };
        for (field, text, slot) in [
            ("margins.l1", &self.margins.l1, &mut config.l1),
            ("margins.l2", &self.margins.l2, &mut config.l2),
        ] {
            if let Some(t) = text {
                *slot = Polynomial::parse(t, n).map_err(|e| err(field, e))?;
            }
        }

        let rounds = if self.rounds.is_empty() {
            match &preset {
                Some(p) => p.rounds.clone(),
                None => return Err(err("rounds", "at least one round is required")),
            }
        } else {
            self.rounds
                .iter()
                .enumerate()
                .map(|(k, r)| resolve_round(r, k, n))
                .collect::<Result<Vec<_>, _>>()?
        };
        if !matches!(rounds[0].initial_v, InitialV::LyapunovEquation | InitialV::Explicit(_)) {
            return Err(err("rounds[0].initial_v", "the first round has no previous result"));
        }
        for (k, r) in rounds.iter().enumerate() {
            config.validate(&system, r.shapes.len()).map_err(|e| {
                let field = if e.field.starts_with("degrees") || e.field.starts_with("tolerances") {
                    e.field.clone()
                } else {
                    format!("rounds[{k}].{}", e.field)
                };
                ConfigError::new(field, e.message)
            })?;
        }

        let bounds = match (&self.verify.box_lo, &self.verify.box_hi) {
            (Some(lo), Some(hi)) => {
                if lo.len() != n || hi.len() != n {
                    return Err(err("verify.box_lo", format!("box needs {n} coordinates per corner")));
                }
                StateBox::new(lo.clone(), hi.clone()).map_err(|e| err("verify.box_lo", e))?
            }
            (None, None) => match &preset {
                Some(p) => p.bounds.clone(),
                None => StateBox::cube(n, DEFAULT_BOX_RADIUS).expect("default box"),
            },
            _ => return Err(err("verify.box_hi", "box_lo and box_hi must be given together")),
        };
        if self.verify.samples == 0 {
            return Err(err("verify.samples", "must be positive"));
        }
        Ok(ResolvedRun {
            system,
            config,
            rounds,
            bounds,
            seed: self.seed,
            samples: self.verify.samples,
            output_dir: self.output_dir.clone(),
            preset,
        })
    }

    fn resolve_system(&self) -> Result<(DynamicalSystem, Option<BenchmarkPreset>), ConfigError> {
        let s = &self.system;
        match (&s.preset, &s.dynamics) {
            (Some(name), None) => {
                let p = bench::get(name).map_err(|e| err("system.preset", e))?;
                Ok((p.system.clone(), Some(p)))
            }
            (None, Some(rhs)) => {
                let name = s.name.clone().unwrap_or_else(|| "custom".to_string());
                let sys = DynamicalSystem::parse(name, rhs).map_err(|e| err("system.dynamics", e))?;
                Ok((sys, None))
            }
            _ => Err(err("system", "give exactly one of `preset` or `dynamics`")),
        }
    }
}

fn round_section(r: &RoundConfig) -> RoundSection {
    RoundSection {
        initial_v: match &r.initial_v {
            InitialV::LyapunovEquation => "lyapunov".to_string(),
            InitialV::Previous => "previous".to_string(),
            InitialV::Explicit(p) => p.to_string(),
        },
        shapes: r
            .shapes
            .iter()
            .map(|s| {
                let n = s.n.nrows();
                let m: Vec<f64> = (0..n * n).map(|k| s.n[(k / n, k % n)]).collect();
                let (center_mode, theta_deg, psi_deg, sigma) = match s.placement {
                    Placement::Origin => (CenterMode::Origin, None, None, None),
                    Placement::Ray {
                        ray: RaySpec::Planar { theta_deg },
                        sigma,
                    } => (CenterMode::Ray, Some(theta_deg), None, Some(sigma)),
                    Placement::Ray {
                        ray: RaySpec::Spatial { theta_deg, psi_deg },
                        sigma,
                    } => (CenterMode::Ray, Some(theta_deg), Some(psi_deg), Some(sigma)),
                };
                ShapeSection {
                    center_mode,
                    theta_deg,
                    psi_deg,
                    sigma,
                    n: m,
                }
            })
            .collect(),
    }
}

fn resolve_round(r: &RoundSection, k: usize, n: usize) -> Result<RoundConfig, ConfigError> {
    let path = format!("rounds[{k}]");
    let initial_v = match r.initial_v.trim() {
        "lyapunov" => InitialV::LyapunovEquation,
        "previous" => InitialV::Previous,
        text => InitialV::Explicit(
            Polynomial::parse(text, n).map_err(|e| err(format!("{path}.initial_v"), e))?,
        ),
    };
    let shapes = r
        .shapes
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let path = format!("{path}.shapes[{i}]");
            if s.n.len() != n * n {
                return Err(err(format!("{path}.N"), format!("expected {} entries, found {}", n * n, s.n.len())));
            }
            let m = DMatrix::from_row_slice(n, n, &s.n);
            crate::shapes::ShapeFunction::origin_centered(m.clone()).map_err(|e| err(format!("{path}.N"), e))?;
            let placement = match s.center_mode {
                CenterMode::Origin => Placement::Origin,
                CenterMode::Ray => {
                    let theta_deg = s
                        .theta_deg
                        .ok_or_else(|| err(format!("{path}.theta_deg"), "required for center_mode = \"ray\""))?;
                    let ray = match (n, s.psi_deg) {
                        (2, None) => RaySpec::Planar { theta_deg },
                        (3, Some(psi_deg)) => RaySpec::Spatial { theta_deg, psi_deg },
                        (2, Some(_)) => return Err(err(format!("{path}.psi_deg"), "only used for 3 states")),
                        (3, None) => return Err(err(format!("{path}.psi_deg"), "required for 3 states")),
                        _ => return Err(err(format!("{path}.center_mode"), "rays need 2 or 3 states")),
                    };
                    let sigma = s.sigma.unwrap_or(bench::SIGMA);
                    if !(sigma > 0.0 && sigma < 1.0) {
                        return Err(err(format!("{path}.sigma"), format!("must lie in (0, 1), got {sigma}")));
                    }
                    Placement::Ray { ray, sigma }
                }
            };
            Ok(ShapeSpec { n: m, placement })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(RoundConfig { initial_v, shapes })
}
