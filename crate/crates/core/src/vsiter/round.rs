use std::fmt::Write as _;
use std::time::Instant;

use crate::lyap;
use crate::poly::{DynamicalSystem, Polynomial};
use crate::shapes::{ray_level_intersection, shifting_center, ShapeFunction};

use super::steps::{beta_step, gamma_step, v_step, FixedShape, GammaResult};
use super::{Certificate, ConfigError, InitialV, IterationConfig, Placement, RoundConfig, ShapeSpec, VsError};

/// Levels certified from the gamma and beta steps are shaded by this
/// fraction so the stored certificate has slack against rounding.
const CERT_BACKOFF: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    /// No new `V` satisfies the V-step constraints.
    VStepInfeasible,
    /// Every `beta_i` grew by less than the stall tolerance twice in a row.
    BetaStalled,
    MaxIters,
    /// `gamma` is unbounded: the origin is globally asymptotically stable.
    GlobalStability,
    /// A later gamma or beta step lost feasibility.
    LostFeasibility,
}

impl StopReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            StopReason::VStepInfeasible => "v_step_infeasible",
            StopReason::BetaStalled => "beta_stalled",
            StopReason::MaxIters => "max_iters",
            StopReason::GlobalStability => "global_stability",
            StopReason::LostFeasibility => "lost_feasibility",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub round: usize,
    pub iter: usize,
    pub gamma: f64,
    pub betas: Vec<f64>,
    pub gamma_sdp_iters: usize,
    pub beta_sdp_iters: usize,
    pub v_sdp_iters: usize,
    pub wall_secs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundResult {
    pub round_index: usize,
    pub certificate: Certificate,
    pub trace: Vec<TraceRow>,
    pub stop: StopReason,
    /// Shapes as placed at the start of the round.
    pub shapes: Vec<ShapeFunction>,
    pub initial_v: Polynomial,
}

impl RoundResult {
    /// The round's `V` normalized so the certified set is `{V <= 1}`.
    pub fn normalized_v(&self) -> Polynomial {
        self.certificate.v.scale(1.0 / self.certificate.gamma)
    }
}

/// Centers each shape on the level set `{V = gamma}`.
pub fn place_shapes(v: &Polynomial, gamma: f64, specs: &[ShapeSpec]) -> Result<Vec<ShapeFunction>, VsError> {
    specs
        .iter()
        .map(|spec| {
            let center = match spec.placement {
                Placement::Origin => vec![0.0; v.nvars()],
                Placement::Ray { ray, sigma } => {
                    let hit = ray_level_intersection(v, gamma, &ray)?;
                    shifting_center(&hit, sigma)?
                }
            };
            Ok(ShapeFunction::new(spec.n.clone(), center)?)
        })
        .collect()
}

fn certificate(
    sys: &DynamicalSystem,
    cfg: &IterationConfig,
    v: &Polynomial,
    gamma: f64,
    s0: &Polynomial,
    shapes: Vec<FixedShape>,
    round_index: usize,
    iter_index: usize,
) -> Certificate {
    Certificate {
        system: sys.clone(),
        v: v.clone(),
        gamma,
        s0: s0.clone(),
        shapes,
        l1: cfg.l1.clone(),
        l2: cfg.l2.clone(),
        round_index,
        iter_index,
        global: false,
    }
}

fn replays(cert: &Certificate, cfg: &IterationConfig, stage: &str) -> Result<bool, VsError> {
    let report = cert.replay(&cfg.sdp)?;
    if !report.passed() {
        log::debug!(
            "round {} iter {} ({stage}): certificate rejected on replay: {:?}",
            cert.round_index,
            cert.iter_index,
            report.items.iter().filter(|i| i.status != crate::sdp::SdpStatus::Feasible).collect::<Vec<_>>()
        );
    }
    Ok(report.passed())
}

fn global_certificate(sys: &DynamicalSystem, cfg: &IterationConfig, v: &Polynomial, g: &GammaResult, round: usize) -> Certificate {
    Certificate {
        global: true,
        ..certificate(sys, cfg, v, g.gamma, &g.s0, Vec::new(), round, 1)
    }
}

/// The largest certified sublevel set of a fixed `V`, with no shapes.
pub fn level_set_certificate(sys: &DynamicalSystem, v: &Polynomial, cfg: &IterationConfig) -> Result<Certificate, VsError> {
    let g = gamma_step(v, sys, cfg)?;
    if g.unbounded {
        return Ok(global_certificate(sys, cfg, v, &g, 0));
    }
    let gamma = g.gamma * (1.0 - CERT_BACKOFF);
    Ok(certificate(sys, cfg, v, gamma, &g.s0, Vec::new(), 0, 0))
}

/// One round of the iteration starting from `v_init`. With `max_iters == 0`
/// the round only certifies the largest sublevel set of `v_init`.
pub fn run_round(
    sys: &DynamicalSystem,
    round: &RoundConfig,
    cfg: &IterationConfig,
    v_init: &Polynomial,
    round_index: usize,
) -> Result<RoundResult, VsError> {
    cfg.validate(sys, round.shapes.len())?;
    let clock = Instant::now();
    let first = gamma_step(v_init, sys, cfg)?;
    if first.unbounded {
        let trace = vec![TraceRow {
            round: round_index,
            iter: 1,
            gamma: first.gamma,
            betas: Vec::new(),
            gamma_sdp_iters: first.sdp_iterations,
            beta_sdp_iters: 0,
            v_sdp_iters: 0,
            wall_secs: clock.elapsed().as_secs_f64(),
        }];
        return Ok(RoundResult {
            round_index,
            certificate: global_certificate(sys, cfg, v_init, &first, round_index),
            trace,
            stop: StopReason::GlobalStability,
            shapes: Vec::new(),
            initial_v: v_init.clone(),
        });
    }
    if cfg.max_iters == 0 {
        let gamma = first.gamma * (1.0 - CERT_BACKOFF);
        return Ok(RoundResult {
            round_index,
            certificate: certificate(sys, cfg, v_init, gamma, &first.s0, Vec::new(), round_index, 0),
            trace: Vec::new(),
            stop: StopReason::MaxIters,
            shapes: Vec::new(),
            initial_v: v_init.clone(),
        });
    }
    let shapes = place_shapes(v_init, first.gamma, &round.shapes)?;

    let mut v = v_init.clone();
    let mut pending = Some(first);
    let mut betas = vec![0.0; shapes.len()];
    let mut last_good: Option<Certificate> = None;
    let mut trace = Vec::new();
    let mut stalled = 0;
    let mut stop = StopReason::MaxIters;

    for iter in 1..=cfg.max_iters {
        let g = match pending.take() {
            Some(g) => g,
            None => match gamma_step(&v, sys, cfg) {
                Ok(g) => g,
                Err(VsError::InfeasibleAtZero) => {
                    stop = StopReason::LostFeasibility;
                    break;
                }
                Err(e) => return Err(e),
            },
        };
        if g.unbounded {
            last_good = Some(global_certificate(sys, cfg, &v, &g, round_index));
            stop = StopReason::GlobalStability;
            break;
        }

        let mut fixed = Vec::with_capacity(shapes.len());
        let mut beta_iters = 0;
        let mut lost = false;
        for (i, shape) in shapes.iter().enumerate() {
            match beta_step(&v, g.gamma, shape, i + 1, betas[i], cfg) {
                Ok(b) => {
                    beta_iters += b.sdp_iterations;
                    let mut sh = shape.clone();
                    sh.beta = b.beta;
                    fixed.push(FixedShape {
                        shape: sh,
                        beta: b.beta,
                        s: b.s,
                    });
                }
                Err(e @ VsError::ShapeInfeasible { .. }) if iter == 1 => return Err(e),
                Err(VsError::ShapeInfeasible { .. }) => {
                    lost = true;
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        if lost {
            stop = StopReason::LostFeasibility;
            break;
        }

        let shaded: Vec<FixedShape> = fixed
            .iter()
            .map(|f| FixedShape {
                beta: f.beta * (1.0 - CERT_BACKOFF),
                ..f.clone()
            })
            .collect();
        let cert = certificate(sys, cfg, &v, g.gamma, &g.s0, shaded, round_index, iter);
        if replays(&cert, cfg, "level sets")? {
            last_good = Some(cert);
        }

        let new_betas: Vec<f64> = fixed.iter().map(|f| f.beta).collect();
        let mut row = TraceRow {
            round: round_index,
            iter,
            gamma: g.gamma,
            betas: new_betas.clone(),
            gamma_sdp_iters: g.sdp_iterations,
            beta_sdp_iters: beta_iters,
            v_sdp_iters: 0,
            wall_secs: 0.0,
        };
        let vs = match v_step(sys, g.gamma, &g.s0, &fixed, cfg) {
            Ok(vs) => vs,
            Err(VsError::VStepInfeasible) => {
                row.wall_secs = clock.elapsed().as_secs_f64();
                trace.push(row);
                stop = StopReason::VStepInfeasible;
                break;
            }
            Err(e) => return Err(e),
        };
        row.v_sdp_iters = vs.sdp_iterations;
        row.wall_secs = clock.elapsed().as_secs_f64();
        trace.push(row);
        log::info!(
            "round {round_index} iter {iter}: gamma {:.6} betas {:?}",
            g.gamma,
            new_betas
        );

        let cert = certificate(sys, cfg, &vs.v, g.gamma, &g.s0, fixed, round_index, iter);
        if replays(&cert, cfg, "new V")? {
            last_good = Some(cert);
        }

        let grew = new_betas
            .iter()
            .zip(&betas)
            .any(|(&b, &old)| old <= 0.0 || (b - old) / old >= cfg.beta_stall_tol);
        stalled = if grew { 0 } else { stalled + 1 };
        betas = new_betas;
        v = vs.v.scale(1.0 / g.gamma);
        if !shapes.is_empty() && stalled >= 2 {
            stop = StopReason::BetaStalled;
            break;
        }
    }

    let certificate = last_good.ok_or(VsError::NoCertificate)?;
    Ok(RoundResult {
        round_index,
        certificate,
        trace,
        stop,
        shapes,
        initial_v: v_init.clone(),
    })
}

/// Runs the rounds in order; each round after the first starts from the
/// previous round's normalized `V` unless it names another start.
pub fn run_multiround(
    sys: &DynamicalSystem,
    rounds: &[RoundConfig],
    cfg: &IterationConfig,
) -> Result<Vec<RoundResult>, VsError> {
    if rounds.is_empty() {
        return Err(ConfigError::new("rounds", "at least one round is required").into());
    }
    let mut out: Vec<RoundResult> = Vec::with_capacity(rounds.len());
    for (k, round) in rounds.iter().enumerate() {
        let v_init = match &round.initial_v {
            InitialV::LyapunovEquation => lyap::initial_candidate(sys, &cfg.lyapunov_q)?,
            InitialV::Explicit(p) => {
                if p.nvars() != sys.nvars() {
                    return Err(VsError::Dimension);
                }
                p.clone()
            }
            InitialV::Previous => match out.last() {
                Some(prev) => prev.normalized_v(),
                None => {
                    return Err(ConfigError::new(
                        format!("rounds[{k}].initial_v"),
                        "the first round has no previous result",
                    )
                    .into())
                }
            },
        };
        let result = run_round(sys, round, cfg, &v_init, k + 1)?;
        log::info!(
            "round {} finished after {} iterations ({})",
            k + 1,
            result.trace.len(),
            result.stop.as_str()
        );
        let global = result.stop == StopReason::GlobalStability;
        out.push(result);
        if global {
            break;
        }
    }
    Ok(out)
}

/// Trace as CSV: one row per iteration, beta columns padded to the widest round.
pub fn trace_csv(rows: &[TraceRow]) -> String {
    let width = rows.iter().map(|r| r.betas.len()).max().unwrap_or(0);
    let mut s = String::from("round,iter,gamma");
    for i in 1..=width {
        let _ = write!(s, ",beta_{i}");
    }
    s.push_str(",gamma_sdp_iters,beta_sdp_iters,v_sdp_iters\n");
    for r in rows {
        let _ = write!(s, "{},{},{}", r.round, r.iter, r.gamma);
        for i in 0..width {
            match r.betas.get(i) {
                Some(b) => {
                    let _ = write!(s, ",{b}");
                }
                None => s.push(','),
            }
        }
        let _ = writeln!(s, ",{},{},{}", r.gamma_sdp_iters, r.beta_sdp_iters, r.v_sdp_iters);
    }
    s
}

/// Wall-clock seconds since each round started, kept apart from the
/// reproducible trace.
pub fn timing_csv(rows: &[TraceRow]) -> String {
    let mut s = String::from("round,iter,wall_secs\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{:.3}", r.round, r.iter, r.wall_secs);
    }
    s
}
