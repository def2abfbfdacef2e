use crate::poly::{DynamicalSystem, Polynomial};
use crate::sdp::SdpOptions;
use crate::shapes::ShapeFunction;
use crate::sos::{monomial_basis, SosError, SosExpression, SosProgram};

use super::{IterationConfig, VStepCentering, VsError};

/// Halving limit below 1 before the gamma search gives up.
const GAMMA_FLOOR: f64 = 1.0 / (1u64 << 30) as f64;
const MAX_BISECTIONS: usize = 60;
/// First bracket for a shape level with no usable lower bound.
const BETA_START: f64 = 1.0 / 1024.0;

pub(crate) fn trial_options(base: &SdpOptions) -> SdpOptions {
    SdpOptions {
        stop_at_feasible: true,
        ..base.clone()
    }
}

/// Outcome of one feasibility trial: the multiplier if feasible.
struct Trial {
    multiplier: Option<Polynomial>,
    iterations: usize,
}

fn multiplier_trial(
    constant: Polynomial,
    factor: Polynomial,
    deg: super::DegreeRange,
    opts: &SdpOptions,
) -> Result<Trial, VsError> {
    let n = constant.nvars();
    let mut prog = SosProgram::new(n);
    let s = prog.add_gram(monomial_basis(n, deg.min, deg.max)?)?;
    let mut expr = SosExpression::new(constant);
    expr.add_product(&s, factor);
    prog.require_sos("trial", expr)?;
    let sol = match prog.solve(opts) {
        Ok(sol) => sol,
        Err(SosError::StructurallyInfeasible { .. }) => {
            return Ok(Trial {
                multiplier: None,
                iterations: 0,
            })
        }
        Err(e) => return Err(e.into()),
    };
    let multiplier = if sol.is_feasible() {
        Some(sol.extract(&s)?.polynomial)
    } else {
        None
    };
    Ok(Trial {
        multiplier,
        iterations: sol.sdp.iterations,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GammaResult {
    pub gamma: f64,
    pub s0: Polynomial,
    /// Feasible all the way to the doubling cap.
    pub unbounded: bool,
    pub sdp_iterations: usize,
    pub trials: usize,
}

/// Largest `gamma` with `-(dV/dt + l2) + (V - gamma) s0` SOS for some SOS `s0`.
pub fn gamma_step(v: &Polynomial, sys: &DynamicalSystem, cfg: &IterationConfig) -> Result<GammaResult, VsError> {
    let vdot = sys.lie_derivative(v).map_err(|_| VsError::Dimension)?;
    let constant = -&(&vdot + &cfg.l2);
    let opts = trial_options(&cfg.sdp);
    let mut sdp_iterations = 0;
    let mut trials = 0;
    let mut test = |gamma: f64| -> Result<Option<Polynomial>, VsError> {
        let factor = v - &Polynomial::constant(v.nvars(), gamma);
        let t = multiplier_trial(constant.clone(), factor, cfg.deg_s0, &opts)?;
        sdp_iterations += t.iterations;
        trials += 1;
        Ok(t.multiplier)
    };

    let (mut lo, mut s0, mut hi) = match test(1.0)? {
        Some(s) => {
            let (mut lo, mut s0) = (1.0, s);
            loop {
                let g = 2.0 * lo;
                if g > cfg.gamma_cap {
                    drop(test);
                    return Ok(GammaResult {
                        gamma: lo,
                        s0,
                        unbounded: true,
                        sdp_iterations,
                        trials,
                    });
                }
                match test(g)? {
                    Some(s) => (lo, s0) = (g, s),
                    None => break (lo, s0, g),
                }
            }
        }
        None => {
            let mut hi = 1.0;
            loop {
                let g = 0.5 * hi;
                if g < GAMMA_FLOOR {
                    return Err(VsError::InfeasibleAtZero);
                }
                match test(g)? {
                    Some(s) => break (g, s, hi),
                    None => hi = g,
                }
            }
        }
    };
    for _ in 0..MAX_BISECTIONS {
        if hi - lo <= cfg.gamma_bisect_tol * lo {
            break;
        }
        let mid = 0.5 * (lo + hi);
        match test(mid)? {
            Some(s) => (lo, s0) = (mid, s),
            None => hi = mid,
        }
    }
    drop(test);
    Ok(GammaResult {
        gamma: lo,
        s0,
        unbounded: false,
        sdp_iterations,
        trials,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BetaResult {
    pub beta: f64,
    pub s: Polynomial,
    pub sdp_iterations: usize,
    pub trials: usize,
}

/// Largest `beta` with `-(V - gamma) + (p - beta) s` SOS for some SOS `s`,
/// searched upward from `lower` when that level is still feasible.
pub fn beta_step(
    v: &Polynomial,
    gamma: f64,
    shape: &ShapeFunction,
    index: usize,
    lower: f64,
    cfg: &IterationConfig,
) -> Result<BetaResult, VsError> {
    let n = v.nvars();
    let p = shape.as_polynomial();
    let constant = &Polynomial::constant(n, gamma) - v;
    let opts = trial_options(&cfg.sdp);
    let mut sdp_iterations = 0;
    let mut trials = 0;
    let mut test = |beta: f64| -> Result<Option<Polynomial>, VsError> {
        let factor = &p - &Polynomial::constant(n, beta);
        let t = multiplier_trial(constant.clone(), factor, cfg.deg_si, &opts)?;
        sdp_iterations += t.iterations;
        trials += 1;
        Ok(t.multiplier)
    };

    let mut start = None;
    if lower > 0.0 {
        if let Some(s) = test(lower)? {
            start = Some((lower, s));
        }
    }
    let (mut lo, mut s) = match start {
        Some(x) => x,
        None => match test(0.0)? {
            Some(s) => (0.0, s),
            None => {
                return Err(VsError::ShapeInfeasible {
                    index,
                    value_at_center: v.eval(shape.center()),
                    gamma,
                })
            }
        },
    };
    let mut hi = if lo > 0.0 { 2.0 * lo } else { BETA_START };
    loop {
        if hi > cfg.gamma_cap {
            hi = lo;
            break;
        }
        match test(hi)? {
            Some(x) => {
                (lo, s) = (hi, x);
                hi *= 2.0;
            }
            None => break,
        }
    }
    for _ in 0..MAX_BISECTIONS {
        if hi - lo <= cfg.beta_bisect_tol * lo.max(f64::MIN_POSITIVE) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        match test(mid)? {
            Some(x) => (lo, s) = (mid, x),
            None => hi = mid,
        }
    }
    drop(test);
    Ok(BetaResult {
        beta: lo,
        s,
        sdp_iterations,
        trials,
    })
}

/// A shape with its fixed level and multiplier, as used by the V-step.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedShape {
    pub shape: ShapeFunction,
    pub beta: f64,
    pub s: Polynomial,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VStepResult {
    pub v: Polynomial,
    pub sdp_iterations: usize,
}

/// New `V = l1 + Z'QZ` satisfying the decrease and containment constraints
/// for fixed multipliers. `Err(VStepInfeasible)` when none exists.
pub fn v_step(
    sys: &DynamicalSystem,
    gamma: f64,
    s0: &Polynomial,
    shapes: &[FixedShape],
    cfg: &IterationConfig,
) -> Result<VStepResult, VsError> {
    let n = sys.nvars();
    let f = sys.field().to_vec();
    let mut prog = SosProgram::new(n);
    let q = prog.add_gram(monomial_basis(n, 2, cfg.deg_v)?)?;
    let g = Polynomial::constant(n, gamma);

    // -(dV/dt + l2) + (V - gamma) s0 with V = l1 + Z'QZ
    let l1dot = sys.lie_derivative(&cfg.l1).map_err(|_| VsError::Dimension)?;
    let c = &(-&(&l1dot + &cfg.l2)) + &(&(&cfg.l1 - &g) * s0);
    let mut decrease = SosExpression::new(c);
    decrease.add_lie_derivative(&q, f.iter().map(|fk| -fk).collect());
    decrease.add_product(&q, s0.clone());
    prog.require_sos("decrease", decrease)?;

    for (i, fs) in shapes.iter().enumerate() {
        // -(V - gamma) + (p - beta) s
        let p = &fs.shape.as_polynomial() - &Polynomial::constant(n, fs.beta);
        let c = &(&g - &cfg.l1) + &(&p * &fs.s);
        let mut contain = SosExpression::new(c);
        contain.add_product(&q, Polynomial::constant(n, -1.0));
        prog.require_sos(format!("shape{}", i + 1), contain)?;
    }

    if cfg.v_centering == VStepCentering::Containment && !shapes.is_empty() {
        prog.set_margin_weight(&q, 0.0);
        prog.set_constraint_margin_weight(0, 0.0);
    }
    let sol = match prog.solve(&cfg.sdp) {
        Ok(sol) => sol,
        Err(SosError::StructurallyInfeasible { .. }) => return Err(VsError::VStepInfeasible),
        Err(e) => return Err(e.into()),
    };
    log::debug!(
        "v-step: {:?} margin {:.3e} after {} iterations",
        sol.status(),
        sol.sdp.margin,
        sol.sdp.iterations
    );
    if !sol.is_feasible() {
        return Err(VsError::VStepInfeasible);
    }
    let gram = sol.extract(&q)?;
    Ok(VStepResult {
        v: &cfg.l1 + &gram.polynomial,
        sdp_iterations: sol.sdp.iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn p(s: &str, n: usize) -> Polynomial {
        Polynomial::parse(s, n).unwrap()
    }

    fn disk_cfg() -> IterationConfig {
        let mut cfg = IterationConfig::new(2);
        cfg.deg_v = 2;
        cfg.deg_si = DegreeRange::new(0, 2);
        cfg
    }

    use super::super::DegreeRange;

    #[test]
    fn identical_quadratics() {
        let v = p("x1^2 + x2^2", 2);
        let shape = ShapeFunction::origin_centered(DMatrix::identity(2, 2)).unwrap();
        let r = beta_step(&v, 1.0, &shape, 0, 0.0, &disk_cfg()).unwrap();
        assert!((r.beta - 1.0).abs() <= 1e-3, "beta {}", r.beta);
    }

    #[test]
    fn shifted_disk() {
        let v = p("x1^2 + x2^2", 2);
        let shape = ShapeFunction::new(DMatrix::identity(2, 2), vec![0.4, 0.0]).unwrap();
        let r = beta_step(&v, 1.0, &shape, 0, 0.0, &disk_cfg()).unwrap();
        assert!((r.beta - 0.36).abs() <= 0.36e-3, "beta {}", r.beta);
        // warm start from a feasible lower bound lands on the same level
        let w = beta_step(&v, 1.0, &shape, 0, 0.3, &disk_cfg()).unwrap();
        assert!((w.beta - 0.36).abs() <= 0.36e-3);
        assert!(w.trials < r.trials);
    }

    #[test]
    fn center_outside_level_set() {
        let v = p("x1^2 + x2^2", 2);
        let shape = ShapeFunction::new(DMatrix::identity(2, 2), vec![1.5, 0.0]).unwrap();
        match beta_step(&v, 1.0, &shape, 2, 0.0, &disk_cfg()) {
            Err(VsError::ShapeInfeasible { index, value_at_center, .. }) => {
                assert_eq!(index, 2);
                assert!((value_at_center - 2.25).abs() < 1e-12);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn globally_stable_gamma_is_unbounded() {
        let sys = DynamicalSystem::parse("decay", &["-x1"]).unwrap();
        let mut cfg = IterationConfig::new(1);
        cfg.deg_v = 2;
        let r = gamma_step(&p("x1^2", 1), &sys, &cfg).unwrap();
        assert!(r.unbounded);
        assert_eq!(r.gamma, cfg.gamma_cap);
    }

    #[test]
    fn unstable_system_fails_at_zero() {
        let sys = DynamicalSystem::parse("growth", &["x1"]).unwrap();
        let mut cfg = IterationConfig::new(1);
        cfg.deg_v = 2;
        assert_eq!(
            gamma_step(&p("x1^2", 1), &sys, &cfg),
            Err(VsError::InfeasibleAtZero)
        );
    }

    #[test]
    fn van_der_pol_small_level_is_feasible() {
        let sys = DynamicalSystem::parse("vdp", &["-x2", "x1 + 5*x2*(x1^2 - 1)"]).unwrap();
        let cfg = IterationConfig::new(2);
        let v0 = crate::lyap::initial_candidate(&sys, &cfg.lyapunov_q).unwrap();
        let vdot = sys.lie_derivative(&v0).unwrap();
        let t = multiplier_trial(
            -&(&vdot + &cfg.l2),
            &v0 - &Polynomial::constant(2, 0.1),
            cfg.deg_s0,
            &trial_options(&cfg.sdp),
        )
        .unwrap();
        assert!(t.multiplier.is_some());

        let r = gamma_step(&v0, &sys, &cfg).unwrap();
        assert!(r.gamma > 0.1 && !r.unbounded);
        // grid oracle: no point of {V0 <= gamma} other than the origin has dV/dt >= 0
        let h = 0.01;
        for i in -400..=400 {
            for j in -400..=400 {
                let x = [i as f64 * h, j as f64 * h];
                if (i, j) != (0, 0) && v0.eval(&x) <= r.gamma {
                    assert!(vdot.eval(&x) < 0.0, "dV/dt >= 0 at {x:?}");
                }
            }
        }
    }

    #[test]
    fn inflated_shape_level_blocks_the_v_step() {
        let sys = DynamicalSystem::parse("vdp", &["-x2", "x1 + 5*x2*(x1^2 - 1)"]).unwrap();
        let cfg = IterationConfig::new(2);
        let v0 = crate::lyap::initial_candidate(&sys, &cfg.lyapunov_q).unwrap();
        let g = gamma_step(&v0, &sys, &cfg).unwrap();
        let n = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.5]);
        let shape = ShapeFunction::origin_centered(n).unwrap();
        let b = beta_step(&v0, g.gamma, &shape, 1, 0.0, &cfg).unwrap();
        let fixed = |beta: f64| FixedShape {
            shape: shape.clone(),
            beta,
            s: b.s.clone(),
        };
        assert!(v_step(&sys, g.gamma, &g.s0, &[fixed(b.beta)], &cfg).is_ok());
        assert_eq!(
            v_step(&sys, g.gamma, &g.s0, &[fixed(10.0 * b.beta)], &cfg),
            Err(VsError::VStepInfeasible)
        );
    }
}
