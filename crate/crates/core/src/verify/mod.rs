//! Trajectory-based validation of certificates, independent of the SOS machinery.

mod check;
mod contour;

use std::fmt::Write as _;

use crate::poly::{CompiledPoly, CompiledSystem, DynamicalSystem};
use crate::vsiter::Certificate;

pub use check::{check_certificate, CheckSettings, VerificationReport, Violation, ViolationKind};
pub use contour::{marching_squares, polylines_csv, straddling_cells, Polyline};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum VerifyError {
    #[error("box bounds must be finite with lo < hi in every coordinate")]
    InvalidBox,
    #[error("expected {expected} variables, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("grid resolution must be at least 2, got {0}")]
    Resolution(usize),
    #[error("contour extraction supports 2 variables, found {0}")]
    NotPlanar(usize),
    #[error("point clouds support 3 variables, found {0}")]
    NotSpatial(usize),
}

/// Fixed-step RK4 settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorSettings {
    pub dt: f64,
    pub t_max: f64,
    pub converge_eps: f64,
    pub escape_radius: f64,
}

impl Default for IntegratorSettings {
    fn default() -> Self {
        IntegratorSettings {
            dt: 1e-3,
            t_max: 50.0,
            converge_eps: 1e-4,
            escape_radius: 1e3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryResult {
    pub converged: bool,
    pub escaped: bool,
    pub final_norm: f64,
    pub steps: usize,
    pub final_state: Vec<f64>,
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Integrates from `x0` until the state reaches the origin ball, leaves the
/// escape radius, or time runs out.
pub fn simulate(sys: &CompiledSystem, x0: &[f64], settings: &IntegratorSettings) -> TrajectoryResult {
    let n = x0.len();
    let dt = settings.dt;
    let max_steps = (settings.t_max / dt).round() as usize;
    let mut x = x0.to_vec();
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut tmp = vec![0.0; n];
    let mut steps = 0;
    loop {
        let r = norm(&x);
        if r <= settings.converge_eps || r > settings.escape_radius || !r.is_finite() || steps >= max_steps {
            let converged = r <= settings.converge_eps;
            return TrajectoryResult {
                converged,
                escaped: !converged && !(r <= settings.escape_radius),
                final_norm: r,
                steps,
                final_state: x,
            };
        }
        sys.eval_into(&x, &mut k1);
        for i in 0..n {
            tmp[i] = x[i] + 0.5 * dt * k1[i];
        }
        sys.eval_into(&tmp, &mut k2);
        for i in 0..n {
            tmp[i] = x[i] + 0.5 * dt * k2[i];
        }
        sys.eval_into(&tmp, &mut k3);
        for i in 0..n {
            tmp[i] = x[i] + dt * k3[i];
        }
        sys.eval_into(&tmp, &mut k4);
        for i in 0..n {
            x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        steps += 1;
    }
}

/// Axis-aligned box `[lo_1, hi_1] x ... x [lo_n, hi_n]`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateBox {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl StateBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self, VerifyError> {
        if lo.is_empty() || lo.len() != hi.len() || lo.iter().zip(&hi).any(|(a, b)| !(a.is_finite() && b.is_finite() && a < b)) {
            return Err(VerifyError::InvalidBox);
        }
        Ok(StateBox { lo, hi })
    }

    /// `[-r, r]^n`.
    pub fn cube(n: usize, r: f64) -> Result<Self, VerifyError> {
        Self::new(vec![-r; n], vec![r; n])
    }

    pub fn nvars(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn volume(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(a, b)| b - a).product()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter().zip(self.lo.iter().zip(&self.hi)).all(|(v, (a, b))| *a <= *v && *v <= *b)
    }
}

/// Cell-centered grid with `resolution` cells per axis; the first coordinate
/// varies fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub bounds: StateBox,
    pub resolution: usize,
}

impl Grid {
    pub fn new(bounds: StateBox, resolution: usize) -> Result<Self, VerifyError> {
        if resolution < 2 {
            return Err(VerifyError::Resolution(resolution));
        }
        Ok(Grid { bounds, resolution })
    }

    pub fn len(&self) -> usize {
        self.resolution.pow(self.bounds.nvars() as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn cell_volume(&self) -> f64 {
        self.bounds.volume() / self.len() as f64
    }

    pub fn center(&self, mut index: usize) -> Vec<f64> {
        let r = self.resolution;
        (0..self.bounds.nvars())
            .map(|k| {
                let i = index % r;
                index /= r;
                let (a, b) = (self.bounds.lo[k], self.bounds.hi[k]);
                a + (i as f64 + 0.5) * (b - a) / r as f64
            })
            .collect()
    }

    pub fn centers(&self) -> impl Iterator<Item = Vec<f64>> + '_ {
        (0..self.len()).map(|i| self.center(i))
    }
}

/// Grid cells whose centers converge to the origin.
#[derive(Debug, Clone, PartialEq)]
pub struct RoaMask {
    pub grid: Grid,
    pub inside: Vec<bool>,
}

impl RoaMask {
    pub fn count(&self) -> usize {
        self.inside.iter().filter(|&&b| b).count()
    }

    pub fn area(&self) -> f64 {
        self.count() as f64 * self.grid.cell_volume()
    }

    /// Rows `x1,..,xn,in_roa` under a commented header.
    pub fn to_csv(&self, header: &str) -> String {
        let n = self.grid.bounds.nvars();
        let mut s = String::new();
        for line in header.lines() {
            let _ = writeln!(s, "# {line}");
        }
        for k in 1..=n {
            let _ = write!(s, "x{k},");
        }
        s.push_str("in_roa\n");
        for (i, &b) in self.inside.iter().enumerate() {
            for v in self.grid.center(i) {
                let _ = write!(s, "{v},");
            }
            let _ = writeln!(s, "{}", u8::from(b));
        }
        s
    }
}

fn check_dims(sys: &DynamicalSystem, bounds: &StateBox) -> Result<(), VerifyError> {
    if sys.nvars() != bounds.nvars() {
        return Err(VerifyError::DimensionMismatch {
            expected: sys.nvars(),
            found: bounds.nvars(),
        });
    }
    Ok(())
}

/// Brute-force region of attraction: simulate from every cell center.
pub fn oracle_roa_mask(
    sys: &DynamicalSystem,
    bounds: &StateBox,
    resolution: usize,
    settings: &IntegratorSettings,
) -> Result<RoaMask, VerifyError> {
    check_dims(sys, bounds)?;
    let grid = Grid::new(bounds.clone(), resolution)?;
    let compiled = sys.compile();
    let inside = grid.centers().map(|x| simulate(&compiled, &x, settings).converged).collect();
    Ok(RoaMask { grid, inside })
}

/// Membership in the union of the certified sets `{V <= gamma}`.
pub struct CertifiedRegion {
    parts: Vec<(CompiledPoly, f64)>,
}

impl CertifiedRegion {
    pub fn new(certs: &[&Certificate]) -> Self {
        CertifiedRegion {
            parts: certs.iter().map(|c| (c.v.compile(), c.gamma)).collect(),
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.parts.iter().any(|(v, g)| v.eval(x) <= *g)
    }

    pub fn mask(&self, grid: &Grid) -> Vec<bool> {
        grid.centers().map(|x| self.contains(&x)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoverageReport {
    pub estimated_area: f64,
    pub oracle_area: f64,
    /// `estimated_area / oracle_area`.
    pub ratio: f64,
    /// Certified cells whose centers do not converge.
    pub violations: usize,
}

/// Area of the certified union against the oracle on the oracle's grid.
pub fn coverage(certs: &[&Certificate], oracle: &RoaMask) -> Result<CoverageReport, VerifyError> {
    for c in certs {
        if c.nvars() != oracle.grid.bounds.nvars() {
            return Err(VerifyError::DimensionMismatch {
                expected: oracle.grid.bounds.nvars(),
                found: c.nvars(),
            });
        }
    }
    let est = CertifiedRegion::new(certs).mask(&oracle.grid);
    let cell = oracle.grid.cell_volume();
    let count = est.iter().filter(|&&b| b).count();
    let violations = est.iter().zip(&oracle.inside).filter(|(&e, &o)| e && !o).count();
    let estimated_area = count as f64 * cell;
    let oracle_area = oracle.area();
    Ok(CoverageReport {
        estimated_area,
        oracle_area,
        ratio: if oracle_area > 0.0 { estimated_area / oracle_area } else { 0.0 },
        violations,
    })
}

/// Area (volume) of the certified union inside `bounds` by grid counting.
pub fn certified_area(certs: &[&Certificate], bounds: &StateBox, resolution: usize) -> Result<f64, VerifyError> {
    let grid = Grid::new(bounds.clone(), resolution)?;
    let region = CertifiedRegion::new(certs);
    let count = grid.centers().filter(|x| region.contains(x)).count();
    Ok(count as f64 * grid.cell_volume())
}

/// Monte-Carlo volume of the certified union inside `bounds`.
pub fn monte_carlo_volume(certs: &[&Certificate], bounds: &StateBox, samples: usize, seed: u64) -> f64 {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let region = CertifiedRegion::new(certs);
    let mut x = vec![0.0; bounds.nvars()];
    let mut hits = 0usize;
    for _ in 0..samples {
        for (k, xk) in x.iter_mut().enumerate() {
            *xk = rng.random_range(bounds.lo[k]..bounds.hi[k]);
        }
        if region.contains(&x) {
            hits += 1;
        }
    }
    bounds.volume() * hits as f64 / samples.max(1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Polynomial;

    fn decay() -> DynamicalSystem {
        DynamicalSystem::parse("decay", &["-x1", "-x2"]).unwrap()
    }

    #[test]
    fn exponential_decay_converges_on_time() {
        let sys = decay().compile();
        let r = simulate(&sys, &[1.0, 1.0], &IntegratorSettings::default());
        assert!(r.converged && !r.escaped);
        assert!(r.final_norm <= 1e-4);
        // |x(t)| = sqrt(2) e^{-t} crosses 1e-4 at t = ln(sqrt(2) 1e4)
        let t = (2f64.sqrt() * 1e4).ln();
        assert!((r.steps as f64 * 1e-3 - t).abs() < 2e-3);
    }

    #[test]
    fn rk4_error_shrinks_fourth_order() {
        let sys = decay().compile();
        let exact = (-1.0f64).exp();
        let run = |dt: f64| {
            let s = IntegratorSettings {
                dt,
                t_max: 1.0,
                converge_eps: 0.0,
                escape_radius: 1e3,
            };
            (simulate(&sys, &[1.0, 0.0], &s).final_state[0] - exact).abs()
        };
        let ratio = run(0.1) / run(0.05);
        assert!((ratio - 16.0).abs() < 1.0, "ratio {ratio}");
    }

    #[test]
    fn van_der_pol_outside_cycle_diverges() {
        let sys = DynamicalSystem::parse("vdp", &["-x2", "x1 + 5*x2*(x1^2 - 1)"]).unwrap().compile();
        let r = simulate(&sys, &[3.0, 3.0], &IntegratorSettings::default());
        assert!(!r.converged);
        let half = IntegratorSettings {
            dt: 5e-4,
            ..Default::default()
        };
        assert!(!simulate(&sys, &[3.0, 3.0], &half).converged);
        assert!(simulate(&sys, &[0.3, 0.3], &IntegratorSettings::default()).converged);
    }

    #[test]
    fn second_sink_is_not_membership() {
        let sys = DynamicalSystem::parse("ex2", &["-4*x1^3 + 6*x1^2 - 2*x1", "-2*x2"]).unwrap().compile();
        let r = simulate(&sys, &[0.75, 0.0], &IntegratorSettings::default());
        assert!(!r.converged && !r.escaped);
        assert!((r.final_state[0] - 1.0).abs() < 1e-6);
        assert!(simulate(&sys, &[0.25, 0.5], &IntegratorSettings::default()).converged);
    }

    #[test]
    fn grid_centers_and_volume() {
        let g = Grid::new(StateBox::new(vec![0.0, -1.0], vec![1.0, 1.0]).unwrap(), 4).unwrap();
        assert_eq!(g.len(), 16);
        assert_eq!(g.center(0), vec![0.125, -0.75]);
        assert_eq!(g.center(1), vec![0.375, -0.75]);
        assert_eq!(g.center(4), vec![0.125, -0.25]);
        assert!((g.cell_volume() - 0.125).abs() < 1e-15);
        assert!(StateBox::new(vec![1.0], vec![0.0]).is_err());
    }

    #[test]
    fn decay_mask_is_full() {
        let b = StateBox::cube(2, 2.0).unwrap();
        let m = oracle_roa_mask(&decay(), &b, 11, &IntegratorSettings::default()).unwrap();
        assert_eq!(m.count(), 121);
        assert!((m.area() - 16.0).abs() < 1e-12);
        let csv = m.to_csv("resolution 11");
        assert!(csv.starts_with("# resolution 11\nx1,x2,in_roa\n"));
        assert_eq!(csv.lines().count(), 2 + 121);
    }

    fn disk_certificate(sys: DynamicalSystem, gamma: f64) -> Certificate {
        let n = sys.nvars();
        let v = Polynomial::parse("x1^2 + x2^2", n).unwrap();
        Certificate {
            system: sys,
            v,
            gamma,
            s0: Polynomial::zero(n),
            shapes: Vec::new(),
            l1: Polynomial::zero(n),
            l2: Polynomial::zero(n),
            round_index: 0,
            iter_index: 0,
            global: false,
        }
    }

    #[test]
    fn disk_coverage_is_pi_over_16() {
        let b = StateBox::cube(2, 2.0).unwrap();
        let m = oracle_roa_mask(&decay(), &b, 201, &IntegratorSettings::default()).unwrap();
        let cert = disk_certificate(decay(), 1.0);
        let rep = coverage(&[&cert], &m).unwrap();
        assert!((rep.ratio - std::f64::consts::PI / 16.0).abs() < 2e-3, "{}", rep.ratio);
        assert_eq!(rep.violations, 0);
        let mc = monte_carlo_volume(&[&cert], &b, 200_000, 3);
        assert!((mc - std::f64::consts::PI).abs() < 0.06);
    }
}
