//! Quadratic shape functions and their shifted centers.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::poly::Polynomial;

/// Points with every coordinate inside this bound are searched for a crossing.
const SEARCH_BOX: f64 = 1e3;
const MARCH_FRACTION: f64 = 0.01;
const MAX_BISECTIONS: usize = 200;
const ROOT_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ShapeError {
    #[error("shape matrix must be symmetric positive definite")]
    NotPositiveDefinite,
    #[error("expected dimension {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("ray leaves the search box without reaching level {gamma}")]
    NoIntersection { gamma: f64 },
    #[error("level must be positive, got {0}")]
    NonPositiveLevel(f64),
    #[error("sigma must lie in (0, 1), got {0}")]
    SigmaOutOfRange(f64),
}

/// `p(x) = (x - c)^T N (x - c)` with its current level `beta`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeFunction {
    n: DMatrix<f64>,
    center: Vec<f64>,
    pub beta: f64,
}

impl ShapeFunction {
    pub fn new(n: DMatrix<f64>, center: Vec<f64>) -> Result<Self, ShapeError> {
        let dim = center.len();
        if n.shape() != (dim, dim) {
            return Err(ShapeError::DimensionMismatch {
                expected: dim,
                found: n.nrows(),
            });
        }
        let asym = (&n - n.transpose()).amax();
        if !n.iter().all(|v| v.is_finite())
            || asym > 1e-12 * n.amax().max(1.0)
            || n.clone().symmetric_eigenvalues().min() <= 0.0
        {
            return Err(ShapeError::NotPositiveDefinite);
        }
        Ok(ShapeFunction {
            n,
            center,
            beta: 0.0,
        })
    }

    pub fn origin_centered(n: DMatrix<f64>) -> Result<Self, ShapeError> {
        let dim = n.nrows();
        Self::new(n, vec![0.0; dim])
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.n
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn nvars(&self) -> usize {
        self.center.len()
    }

    pub fn as_polynomial(&self) -> Polynomial {
        let dim = self.nvars();
        let rowmajor: Vec<f64> = (0..dim * dim).map(|k| self.n[(k / dim, k % dim)]).collect();
        Polynomial::quadratic_form(&rowmajor, &self.center)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let d: Vec<f64> = x.iter().zip(&self.center).map(|(a, c)| a - c).collect();
        let mut s = 0.0;
        for i in 0..d.len() {
            for j in 0..d.len() {
                s += d[i] * self.n[(i, j)] * d[j];
            }
        }
        s
    }
}

/// Ray direction from the origin, angles in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RaySpec {
    /// Elevation `theta` and azimuth `psi`.
    Spatial { theta_deg: f64, psi_deg: f64 },
    Planar { theta_deg: f64 },
}

impl RaySpec {
    pub fn nvars(&self) -> usize {
        match self {
            RaySpec::Planar { .. } => 2,
            RaySpec::Spatial { .. } => 3,
        }
    }

    pub fn direction(&self) -> Vec<f64> {
        match *self {
            RaySpec::Planar { theta_deg } => {
                let t = theta_deg.to_radians();
                vec![t.cos(), t.sin()]
            }
            RaySpec::Spatial { theta_deg, psi_deg } => {
                let (t, p) = (theta_deg.to_radians(), psi_deg.to_radians());
                vec![t.cos() * p.cos(), t.cos() * p.sin(), t.sin()]
            }
        }
    }
}

/// First point where the ray meets `{V = gamma}`.
pub fn ray_level_intersection(v: &Polynomial, gamma: f64, ray: &RaySpec) -> Result<Vec<f64>, ShapeError> {
    if v.nvars() != ray.nvars() {
        return Err(ShapeError::DimensionMismatch {
            expected: v.nvars(),
            found: ray.nvars(),
        });
    }
    if gamma <= 0.0 || !gamma.is_finite() {
        return Err(ShapeError::NonPositiveLevel(gamma));
    }
    let u = ray.direction();
    let g = |r: f64| {
        let x: Vec<f64> = u.iter().map(|k| r * k).collect();
        v.eval(&x) - gamma
    };
    let r_max = SEARCH_BOX / u.iter().fold(0.0f64, |m, k| m.max(k.abs()));
    let quad = v.homogeneous_part(2).eval(&u);
    let guess = if quad > 0.0 { (gamma / quad).sqrt() } else { 1.0 };
    // bounded march length keeps pathological guesses from stalling
    let step = (MARCH_FRACTION * guess).clamp(r_max * 1e-7, r_max * 1e-2);

    let mut lo = 0.0;
    let mut hi = None;
    while lo < r_max {
        let r = (lo + step).min(r_max);
        if g(r) >= 0.0 {
            hi = Some(r);
            break;
        }
        lo = r;
    }
    let mut hi = hi.ok_or(ShapeError::NoIntersection { gamma })?;
    let mut best = hi;
    for _ in 0..MAX_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        let gm = g(mid);
        best = mid;
        if gm.abs() <= ROOT_TOL * gamma.max(1.0) {
            break;
        }
        if gm >= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= f64::EPSILON * hi {
            best = if g(hi).abs() < g(lo).abs() { hi } else { lo };
            break;
        }
    }
    Ok(u.iter().map(|k| best * k).collect())
}

/// `sigma * x_i`, a point strictly inside the level set along the same ray.
pub fn shifting_center(intersection: &[f64], sigma: f64) -> Result<Vec<f64>, ShapeError> {
    if !(sigma > 0.0 && sigma < 1.0) {
        return Err(ShapeError::SigmaOutOfRange(sigma));
    }
    Ok(intersection.iter().map(|v| sigma * v).collect())
}

/// Directions to the 8 vertices and 6 face centers of a cube about the origin.
pub fn cuboid_angles() -> Vec<RaySpec> {
    const PSI: [f64; 14] = [
        -45.0, -45.0, -135.0, -135.0, 45.0, 45.0, 135.0, 135.0, 0.0, 90.0, 180.0, -90.0, 0.0, 0.0,
    ];
    const THETA: [f64; 14] = [
        -35.0, 35.0, -35.0, 35.0, -35.0, 35.0, -35.0, 35.0, 0.0, 0.0, 0.0, 0.0, 90.0, -90.0,
    ];
    PSI.iter()
        .zip(THETA)
        .map(|(&psi_deg, theta_deg)| RaySpec::Spatial { theta_deg, psi_deg })
        .collect()
}
