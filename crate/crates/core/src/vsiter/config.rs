use nalgebra::DMatrix;

use crate::poly::{DynamicalSystem, Polynomial};
use crate::sdp::SdpOptions;
use crate::shapes::RaySpec;

/// A configuration field that failed validation.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{field}: {message}")]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError {
            field: field.into(),
            message: message.into(),
        }
    }
}

/// Degree range `[min, max]` of an SOS multiplier.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DegreeRange {
    pub min: u32,
    pub max: u32,
}

impl DegreeRange {
    pub const fn new(min: u32, max: u32) -> Self {
        DegreeRange { min, max }
    }
}

/// Which SOS blocks the V-step pushes away from the PSD boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum VStepCentering {
    /// Every block of the program, including the Gram matrix of `V`.
    Uniform,
    /// Only the shape containment constraints; falls back to `Uniform`
    /// when there are no shapes.
    #[default]
    Containment,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationConfig {
    /// Degree of `V`; its Gram basis spans degrees `1 ..= deg_v / 2`.
    pub deg_v: u32,
    pub deg_s0: DegreeRange,
    pub deg_si: DegreeRange,
    /// `V - l1` must be SOS.
    pub l1: Polynomial,
    /// Decrease margin: `dV/dt <= -l2` on the certified set.
    pub l2: Polynomial,
    pub gamma_bisect_tol: f64,
    pub beta_bisect_tol: f64,
    pub beta_stall_tol: f64,
    pub max_iters: usize,
    /// Doubling limit for `gamma`; reaching it feasibly means global stability.
    pub gamma_cap: f64,
    /// `Q` of the Lyapunov equation for the first candidate.
    pub lyapunov_q: DMatrix<f64>,
    /// Solver settings for the V-step; bisection trials and replays stop at
    /// the first strictly feasible point.
    pub sdp: SdpOptions,
    pub v_centering: VStepCentering,
}

impl IterationConfig {
    pub fn new(nvars: usize) -> Self {
        let xtx = Polynomial::from_terms(
            nvars,
            (0..nvars).map(|k| {
                let mut e = vec![0; nvars];
                e[k] = 2;
                (crate::Monomial::new(e), 1e-6)
            }),
        );
        IterationConfig {
            deg_v: 6,
            deg_s0: DegreeRange::new(2, 4),
            deg_si: DegreeRange::new(0, 4),
            l1: xtx.clone(),
            l2: xtx,
            gamma_bisect_tol: 1e-3,
            beta_bisect_tol: 1e-3,
            beta_stall_tol: 1e-3,
            max_iters: 100,
            gamma_cap: (1u64 << 30) as f64,
            lyapunov_q: DMatrix::identity(nvars, nvars),
            sdp: SdpOptions::default(),
            v_centering: VStepCentering::default(),
        }
    }

    pub fn nvars(&self) -> usize {
        self.l1.nvars()
    }

    /// Checks degree compatibility with the system and the shape count.
    pub fn validate(&self, sys: &DynamicalSystem, nshapes: usize) -> Result<(), ConfigError> {
        let n = sys.nvars();
        if self.l1.nvars() != n || self.l2.nvars() != n {
            return Err(ConfigError::new("l1", "l1 and l2 must use the system's variables"));
        }
        if self.lyapunov_q.shape() != (n, n) {
            return Err(ConfigError::new("lyapunov_q", format!("expected {n}x{n} matrix")));
        }
        if self.deg_v < 2 || self.deg_v % 2 != 0 {
            return Err(ConfigError::new("degrees.v", "deg(V) must be even and at least 2"));
        }
        for (field, r) in [("degrees.s0", self.deg_s0), ("degrees.si", self.deg_si)] {
            if r.min > r.max {
                return Err(ConfigError::new(field, format!("min {} exceeds max {}", r.min, r.max)));
            }
        }
        if self.deg_s0.min < 2 && self.deg_s0.max >= 2 {
            // s0 with a constant term makes (V - gamma) s0 negative at the origin
            return Err(ConfigError::new("degrees.s0", "s0 must not have a constant term (min >= 2)"));
        }
        if self.deg_v < self.l1.degree() {
            return Err(ConfigError::new(
                "degrees.v",
                format!("deg(V) = {} < deg(l1) = {}", self.deg_v, self.l1.degree()),
            ));
        }
        if nshapes > 0 && 2 + self.deg_si.max < self.deg_v {
            return Err(ConfigError::new(
                "degrees.si",
                format!(
                    "deg(p_i) + deg(s_i) = 2 + {} < deg(V) = {}",
                    self.deg_si.max, self.deg_v
                ),
            ));
        }
        let vdot = self.deg_v - 1 + sys.degree();
        let need = vdot.max(self.l2.degree());
        if self.deg_v + self.deg_s0.max < need {
            return Err(ConfigError::new(
                "degrees.s0",
                format!(
                    "deg(V) + deg(s0) = {} + {} < max(deg(dV/dx f), deg(l2)) = {}",
                    self.deg_v, self.deg_s0.max, need
                ),
            ));
        }
        for (field, v) in [
            ("tolerances.gamma_bisect", self.gamma_bisect_tol),
            ("tolerances.beta_bisect", self.beta_bisect_tol),
            ("tolerances.beta_stall", self.beta_stall_tol),
        ] {
            if !(v > 0.0 && v < 1.0) {
                return Err(ConfigError::new(field, format!("must lie in (0, 1), got {v}")));
            }
        }
        if !(self.gamma_cap > 1.0) {
            return Err(ConfigError::new("gamma_cap", "must exceed 1"));
        }
        Ok(())
    }
}

/// Where a shape function is centered.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Placement {
    Origin,
    /// `sigma` times the first crossing of the ray with the incoming level set.
    Ray { ray: RaySpec, sigma: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShapeSpec {
    pub n: DMatrix<f64>,
    pub placement: Placement,
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialV {
    /// `x^T P x` from the Lyapunov equation of the linearization.
    LyapunovEquation,
    /// The previous round's result, normalized to level 1.
    Previous,
    Explicit(Polynomial),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundConfig {
    pub initial_v: InitialV,
    pub shapes: Vec<ShapeSpec>,
}
