//! Infeasible-start primal-dual interior-point method, HKM search direction
//! with Mehrotra predictor-corrector steps.
//!
//! Standard form: minimize `<C, X>` subject to `A(X) = b`, `X` PSD, with
//! dual `maximize b'y` subject to `C - A*(y) = Z` PSD.

use nalgebra::DMatrix;

use super::dense::{max_step, min_eigenvalue, SchurFactor};
use super::presolve::{Reduced, Row};
use super::{Entry, SdpOptions};

/// Fraction of the distance to the cone boundary taken per step.
const STEP_FRACTION: f64 = 0.98;
/// Iterations without improvement of the best iterate before giving up.
const STALL_LIMIT: usize = 8;

struct BlockRow {
    row: usize,
    ents: Vec<(usize, usize, f64)>,
}

struct StdForm {
    sizes: Vec<usize>,
    b: Vec<f64>,
    by_block: Vec<Vec<BlockRow>>,
    c: Vec<Vec<(usize, usize, f64)>>,
}

impl StdForm {
    fn new(sizes: Vec<usize>, rows: &[Row], c: &[Entry]) -> Self {
        let mut by_block: Vec<Vec<BlockRow>> = sizes.iter().map(|_| Vec::new()).collect();
        for (r, row) in rows.iter().enumerate() {
            for e in &row.entries {
                let list = &mut by_block[e.block];
                match list.last_mut() {
                    Some(br) if br.row == r => br.ents.push((e.i, e.j, e.coef)),
                    _ => list.push(BlockRow {
                        row: r,
                        ents: vec![(e.i, e.j, e.coef)],
                    }),
                }
            }
        }
        let mut cb: Vec<Vec<(usize, usize, f64)>> = sizes.iter().map(|_| Vec::new()).collect();
        for e in c {
            cb[e.block].push((e.i, e.j, e.coef));
        }
        StdForm {
            sizes,
            b: rows.iter().map(|r| r.rhs).collect(),
            by_block,
            c: cb,
        }
    }

    fn m(&self) -> usize {
        self.b.len()
    }

    fn apply(&self, x: &[DMatrix<f64>]) -> Vec<f64> {
        let mut out = vec![0.0; self.m()];
        for (blk, rows) in self.by_block.iter().enumerate() {
            for br in rows {
                out[br.row] += br.ents.iter().map(|&(i, j, c)| c * x[blk][(i, j)]).sum::<f64>();
            }
        }
        out
    }

    fn adjoint(&self, y: &[f64]) -> Vec<DMatrix<f64>> {
        let mut out: Vec<DMatrix<f64>> = self.sizes.iter().map(|&n| DMatrix::zeros(n, n)).collect();
        for (blk, rows) in self.by_block.iter().enumerate() {
            for br in rows {
                scatter(&mut out[blk], &br.ents, y[br.row]);
            }
        }
        out
    }

    fn c_mats(&self) -> Vec<DMatrix<f64>> {
        let mut out: Vec<DMatrix<f64>> = self.sizes.iter().map(|&n| DMatrix::zeros(n, n)).collect();
        for (blk, ents) in self.c.iter().enumerate() {
            scatter(&mut out[blk], ents, 1.0);
        }
        out
    }

    /// `out_i -= <A_i, H>` for possibly nonsymmetric block matrices `H`.
    fn sub_inner(&self, h: &[DMatrix<f64>], out: &mut [f64]) {
        for (blk, rows) in self.by_block.iter().enumerate() {
            let n = self.sizes[blk];
            let hs = h[blk].as_slice();
            for br in rows {
                out[br.row] -= inner(&br.ents, hs, n);
            }
        }
    }

    /// Schur complement `M_ij = <A_i, X A_j Z^-1>`, lower triangle, row-major.
    fn schur(&self, x: &[DMatrix<f64>], zinv: &[DMatrix<f64>]) -> Vec<f64> {
        let m = self.m();
        let mut mm = vec![0.0; m * m];
        for (blk, rows) in self.by_block.iter().enumerate() {
            let n = self.sizes[blk];
            let xs = x[blk].as_slice();
            let zs = zinv[blk].as_slice();
            let mut g = vec![0.0; n * n];
            for (pj, rj) in rows.iter().enumerate() {
                g.iter_mut().for_each(|v| *v = 0.0);
                for &(k, l, c) in &rj.ents {
                    if k == l {
                        rank1(&mut g, n, &xs[k * n..(k + 1) * n], &zs[k * n..(k + 1) * n], c);
                    } else {
                        let h = 0.5 * c;
                        rank1(&mut g, n, &xs[k * n..(k + 1) * n], &zs[l * n..(l + 1) * n], h);
                        rank1(&mut g, n, &xs[l * n..(l + 1) * n], &zs[k * n..(k + 1) * n], h);
                    }
                }
                let base = rj.row * m;
                for ri in &rows[..=pj] {
                    mm[base + ri.row] += inner(&ri.ents, &g, n);
                }
            }
        }
        mm
    }
}

fn scatter(m: &mut DMatrix<f64>, ents: &[(usize, usize, f64)], scale: f64) {
    for &(i, j, c) in ents {
        if i == j {
            m[(i, i)] += c * scale;
        } else {
            let h = 0.5 * c * scale;
            m[(i, j)] += h;
            m[(j, i)] += h;
        }
    }
}

/// `g += c * u v^T` with `g` column-major.
fn rank1(g: &mut [f64], n: usize, u: &[f64], v: &[f64], c: f64) {
    for s in 0..n {
        let a = c * v[s];
        if a == 0.0 {
            continue;
        }
        let col = &mut g[s * n..(s + 1) * n];
        for (gi, ui) in col.iter_mut().zip(u) {
            *gi += a * ui;
        }
    }
}

fn inner(ents: &[(usize, usize, f64)], g: &[f64], n: usize) -> f64 {
    ents.iter()
        .map(|&(i, j, c)| {
            if i == j {
                c * g[i * n + i]
            } else {
                0.5 * c * (g[j * n + i] + g[i * n + j])
            }
        })
        .sum()
}

fn frob_inner(a: &[DMatrix<f64>], b: &[DMatrix<f64>]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.dot(y)).sum()
}

fn frob_norm(a: &[DMatrix<f64>]) -> f64 {
    a.iter().map(|x| x.norm_squared()).sum::<f64>().sqrt()
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let t = m.transpose();
    *m += t;
    *m *= 0.5;
}

/// Metrics of the current iterate, handed to the early-stop hook.
pub(crate) struct Snapshot<'a> {
    pub x: &'a [DMatrix<f64>],
    pub rp: &'a [f64],
    pub pobj: f64,
    pub dobj: f64,
    pub rd_norm: f64,
}

struct RunResult {
    x: Vec<DMatrix<f64>>,
    rp: Vec<f64>,
    pobj: f64,
    dobj: f64,
    rd_norm: f64,
    iterations: usize,
}

fn initial_point(sf: &StdForm) -> (Vec<DMatrix<f64>>, Vec<DMatrix<f64>>) {
    let mut xs = Vec::new();
    let mut zs = Vec::new();
    for (blk, &n) in sf.sizes.iter().enumerate() {
        let nf = n as f64;
        let mut xi = 10.0f64.max(nf.sqrt());
        let mut eta = 10.0f64.max(nf.sqrt());
        for br in &sf.by_block[blk] {
            let an = br.ents.iter().map(|e| e.2 * e.2).sum::<f64>().sqrt();
            xi = xi.max(nf * (1.0 + sf.b[br.row].abs()) / (1.0 + an));
            eta = eta.max(an);
        }
        let cn = sf.c[blk].iter().map(|e| e.2 * e.2).sum::<f64>().sqrt();
        eta = eta.max(cn);
        xs.push(DMatrix::identity(n, n) * xi);
        zs.push(DMatrix::identity(n, n) * eta);
    }
    (xs, zs)
}

fn run(sf: &StdForm, opts: &SdpOptions, hook: &mut dyn FnMut(&Snapshot) -> bool) -> RunResult {
    let m = sf.m();
    let nb = sf.sizes.len();
    let big_n: f64 = sf.sizes.iter().sum::<usize>() as f64;
    let cm = sf.c_mats();
    let c_norm = frob_norm(&cm);
    let (mut x, mut z) = initial_point(sf);
    let mut y = vec![0.0; m];
    let pinf_tol = 1e-2 * opts.eq_tol;

    let mut iter = 0;
    let mut best: Option<(f64, RunResult)> = None;
    let mut stall = 0;
    loop {
        let ax = sf.apply(&x);
        let rp: Vec<f64> = sf.b.iter().zip(&ax).map(|(b, a)| b - a).collect();
        let aty = sf.adjoint(&y);
        let rd: Vec<DMatrix<f64>> = (0..nb).map(|k| &cm[k] - &aty[k] - &z[k]).collect();
        let rd_norm = frob_norm(&rd);
        let pobj = frob_inner(&cm, &x);
        let dobj: f64 = sf.b.iter().zip(&y).map(|(b, yi)| b * yi).sum();
        let xz = frob_inner(&x, &z);
        let pinf = rp
            .iter()
            .zip(&sf.b)
            .fold(0.0f64, |a, (r, b)| a.max(r.abs() / (1.0 + b.abs())));
        let dinf = rd_norm / (1.0 + c_norm);
        let rel_gap = xz / (1.0 + pobj.abs() + dobj.abs());
        log::trace!(
            "ipm {iter:3} pobj {pobj:+.6e} dobj {dobj:+.6e} pinf {pinf:.2e} dinf {dinf:.2e} gap {rel_gap:.2e}"
        );

        let snap = Snapshot {
            x: &x,
            rp: &rp,
            pobj,
            dobj,
            rd_norm,
        };
        let converged = pinf <= pinf_tol && dinf <= opts.gap_tol && rel_gap <= opts.gap_tol;
        if hook(&snap) || converged {
            return RunResult {
                x,
                rp,
                pobj,
                dobj,
                rd_norm,
                iterations: iter,
            };
        }
        let merit = (pinf / pinf_tol)
            .max(dinf / opts.gap_tol)
            .max(rel_gap / opts.gap_tol);
        if best.as_ref().is_none_or(|(bm, _)| merit < *bm) {
            best = Some((
                merit,
                RunResult {
                    x: x.clone(),
                    rp: rp.clone(),
                    pobj,
                    dobj,
                    rd_norm,
                    iterations: iter,
                },
            ));
            stall = 0;
        } else {
            stall += 1;
        }
        let give_up = |best: Option<(f64, RunResult)>, iter: usize| {
            let mut r = best.expect("at least one iterate").1;
            r.iterations = iter;
            r
        };
        if iter >= opts.max_iters || stall >= STALL_LIMIT {
            log::debug!("ipm stopped at iteration {iter} without convergence");
            return give_up(best, iter);
        }

        let mut xl = Vec::with_capacity(nb);
        let mut zl = Vec::with_capacity(nb);
        let mut zinv = Vec::with_capacity(nb);
        let mut breakdown = false;
        for k in 0..nb {
            match (x[k].clone().cholesky(), z[k].clone().cholesky()) {
                (Some(cx), Some(cz)) => {
                    xl.push(cx.l());
                    zl.push(cz.l());
                    let mut zi = cz.inverse();
                    symmetrize(&mut zi);
                    zinv.push(zi);
                }
                _ => {
                    breakdown = true;
                    break;
                }
            }
        }
        if breakdown {
            log::debug!("ipm breakdown at iteration {iter}: iterate left the cone");
            return give_up(best, iter);
        }

        let factor = SchurFactor::new(sf.schur(&x, &zinv), m);
        if factor.collapsed > 0 {
            log::trace!("schur: {} collapsed pivots", factor.collapsed);
        }
        let mu = xz / big_n;
        // W = X Rd Z^-1
        let w: Vec<DMatrix<f64>> = (0..nb).map(|k| &x[k] * &rd[k] * &zinv[k]).collect();

        let direction = |rc_zinv: &[DMatrix<f64>]| {
            let h: Vec<DMatrix<f64>> = (0..nb).map(|k| &rc_zinv[k] - &w[k]).collect();
            let mut rhs = rp.clone();
            sf.sub_inner(&h, &mut rhs);
            let dy = factor.solve(&rhs);
            let atdy = sf.adjoint(&dy);
            let dz: Vec<DMatrix<f64>> = (0..nb).map(|k| &rd[k] - &atdy[k]).collect();
            let dx: Vec<DMatrix<f64>> = (0..nb)
                .map(|k| {
                    let mut d = &rc_zinv[k] - &x[k] * &dz[k] * &zinv[k];
                    symmetrize(&mut d);
                    d
                })
                .collect();
            (dx, dy, dz)
        };
        let steps = |dx: &[DMatrix<f64>], dz: &[DMatrix<f64>]| {
            let mut ap = f64::INFINITY;
            let mut ad = f64::INFINITY;
            for k in 0..nb {
                ap = ap.min(max_step(&xl[k], &dx[k]));
                ad = ad.min(max_step(&zl[k], &dz[k]));
            }
            ((STEP_FRACTION * ap).min(1.0), (STEP_FRACTION * ad).min(1.0))
        };

        let pred: Vec<DMatrix<f64>> = x.iter().map(|xk| -xk).collect();
        let (dxa, _, dza) = direction(&pred);
        let (ap, ad) = steps(&dxa, &dza);
        let mut mu_aff = 0.0;
        for k in 0..nb {
            mu_aff += (&x[k] + &dxa[k] * ap).dot(&(&z[k] + &dza[k] * ad));
        }
        mu_aff /= big_n;
        let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);

        let corr: Vec<DMatrix<f64>> = (0..nb)
            .map(|k| &zinv[k] * (sigma * mu) - &x[k] - &dxa[k] * &dza[k] * &zinv[k])
            .collect();
        let (dx, dy, dz) = direction(&corr);
        let (ap, ad) = steps(&dx, &dz);
        for k in 0..nb {
            x[k] += &dx[k] * ap;
            z[k] += &dz[k] * ad;
            symmetrize(&mut x[k]);
            symmetrize(&mut z[k]);
        }
        for (yi, d) in y.iter_mut().zip(&dy) {
            *yi += ad * d;
        }
        iter += 1;
        if ap.max(ad) < 1e-12 {
            log::debug!("ipm stalled at iteration {iter}");
            iter = opts.max_iters;
        }
    }
}

fn normalized(entries: Vec<Entry>, rhs: f64) -> (Row, f64) {
    let norm = entries.iter().map(|e| e.coef * e.coef).sum::<f64>().sqrt();
    let row = Row {
        entries: entries
            .into_iter()
            .map(|e| Entry {
                coef: e.coef / norm,
                ..e
            })
            .collect(),
        rhs: rhs / norm,
    };
    (row, norm)
}

/// Largest primal residual that is repaired by projection instead of being
/// reported as undecided.
const PROJECT_LIMIT: f64 = 1e-5;

fn witness(xp: &[DMatrix<f64>], t: f64, weights: &[f64]) -> Vec<DMatrix<f64>> {
    xp.iter()
        .zip(weights)
        .map(|(xb, &w)| {
            let n = xb.nrows();
            xb + DMatrix::<f64>::identity(n, n) * (t * w)
        })
        .collect()
}

pub(crate) enum MarginOutcome {
    Witness { x: Vec<DMatrix<f64>>, margin: f64 },
    Infeasible { bound: f64 },
    Undecided { margin: f64 },
}

pub(crate) struct MarginResult {
    pub outcome: MarginOutcome,
    pub iterations: usize,
}

/// Maximize the PSD margin `t` over `A(X) = b`, with `X = X' + t I`,
/// `t = t_cap - w`, `w >= 0`.
///
/// The objective `w + eps tr(X')` keeps the dual strictly feasible. A dual
/// bound above `t_cap + eps * trace_bound` proves that no `X` with trace below
/// `trace_bound` has a nonnegative margin.
pub(crate) fn solve_margin(red: &Reduced, opts: &SdpOptions) -> MarginResult {
    let t_cap = opts.margin_cap;
    let eps = opts.trace_weight;
    let mut sizes = red.blocks.clone();
    let wblk = sizes.len();
    sizes.push(1);
    let mut rows = Vec::with_capacity(red.rows.len());
    let mut scales = Vec::with_capacity(red.rows.len());
    for r in &red.rows {
        let tr: f64 = r.entries.iter().filter(|e| e.i == e.j).map(|e| e.coef * red.weights[e.block]).sum();
        let mut entries = r.entries.clone();
        if tr != 0.0 {
            entries.push(Entry {
                block: wblk,
                i: 0,
                j: 0,
                coef: -tr,
            });
        }
        let (row, s) = normalized(entries, r.rhs - t_cap * tr);
        rows.push(row);
        scales.push(s);
    }
    let mut objective = vec![Entry {
        block: wblk,
        i: 0,
        j: 0,
        coef: 1.0,
    }];
    for (b, &n) in red.blocks.iter().enumerate() {
        for i in 0..n {
            objective.push(Entry {
                block: b,
                i,
                j: i,
                coef: eps,
            });
        }
    }
    let sf = StdForm::new(sizes, &rows, &objective);
    let threshold = t_cap + opts.psd_tol + eps * opts.trace_bound;

    let orig_residual = |rp: &[f64]| -> f64 {
        rp.iter()
            .zip(&scales)
            .fold(0.0f64, |a, (r, s)| a.max((r * s).abs()))
    };
    // Lower bound on the regularized optimum from an approximately
    // dual-feasible y.
    let lower = |s: &Snapshot| s.dobj - s.rd_norm * (opts.trace_bound + s.pobj.abs());

    let projector = red.projector();
    let mut hook = |s: &Snapshot| -> bool {
        let t = t_cap - s.x[wblk][(0, 0)];
        if opts.stop_at_feasible && t > 0.0 && orig_residual(s.rp) <= 1e-3 * t.min(1.0) {
            let mut x = witness(&s.x[..red.blocks.len()], t, &red.weights);
            projector.project(red, &mut x);
            if x.iter().all(|b| min_eigenvalue(b) > 0.0) {
                return true;
            }
        }
        lower(s) > threshold
    };
    let res = run(&sf, opts, &mut hook);
    let snap = Snapshot {
        x: &res.x,
        rp: &res.rp,
        pobj: res.pobj,
        dobj: res.dobj,
        rd_norm: res.rd_norm,
    };
    let lb = lower(&snap);

    let w = res.x[wblk][(0, 0)];
    let t = t_cap - w;
    let outcome = if lb > threshold {
        MarginOutcome::Infeasible { bound: t_cap - lb }
    } else if t >= -opts.psd_tol && orig_residual(&res.rp) <= PROJECT_LIMIT {
        let mut x = witness(&res.x[..red.blocks.len()], t, &red.weights);
        projector.project(red, &mut x);
        MarginOutcome::Witness { x, margin: t }
    } else {
        MarginOutcome::Undecided { margin: t }
    };
    MarginResult {
        outcome,
        iterations: res.iterations,
    }
}

pub(crate) struct ObjectiveResult {
    pub x: Option<Vec<DMatrix<f64>>>,
    pub iterations: usize,
}

/// Minimize `<C, X>` from an infeasible start.
pub(crate) fn solve_objective(red: &Reduced, obj: &[Entry], opts: &SdpOptions) -> ObjectiveResult {
    let sf = StdForm::new(red.blocks.clone(), &red.rows, obj);
    let res = run(&sf, opts, &mut |_| false);
    let pinf = res.rp.iter().fold(0.0f64, |a, r| a.max(r.abs()));
    let x = (pinf <= opts.eq_tol).then_some(res.x);
    ObjectiveResult {
        x,
        iterations: res.iterations,
    }
}
