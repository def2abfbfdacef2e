//! Small dense semidefinite programs.
//!
//! A problem is a list of symmetric PSD blocks plus sparse linear equality
//! rows over their upper-triangular entries. Pure feasibility problems are
//! solved through a margin formulation
//!
//! ```text
//!     maximize t   s.t.   A(X) = b,   X - t I  PSD,   t <= t_cap
//! ```
//!
//! with a small trace penalty. It is strictly feasible in both primal and
//! dual form whenever the equality system is consistent, so the
//! interior-point iteration ends with a PSD witness (`t >= -psd_tol`), a dual
//! bound proving `t < 0` for every solution of bounded trace, or neither when
//! the problem sits on the boundary. Problems with an objective are solved in a second phase
//! once feasibility is established.

mod dense;
mod dump;
mod ipm;
mod presolve;

use nalgebra::DMatrix;

pub use dump::dump_problem;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SdpError {
    #[error("block {0} referenced by a row does not exist")]
    UnknownBlock(usize),
    #[error("entry ({i},{j}) outside block {block} of side {side}")]
    EntryOutOfRange {
        block: usize,
        i: usize,
        j: usize,
        side: usize,
    },
    #[error("entries must be upper-triangular (i <= j), got ({i},{j})")]
    LowerEntry { i: usize, j: usize },
    #[error("block {0} has zero side length")]
    EmptyBlock(usize),
    #[error("non-finite coefficient in row {0}")]
    NonFinite(usize),
    #[error("margin weights must be finite, nonnegative and one per block")]
    MarginWeights,
}

/// Coefficient on the upper-triangular matrix entry `X_b[i][j]`, `i <= j`.
///
/// A row evaluates to `sum coef * X_b[i][j]`; an off-diagonal entry is
/// counted once, not twice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Entry {
    pub block: usize,
    pub i: usize,
    pub j: usize,
    pub coef: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EqualityRow {
    pub entries: Vec<Entry>,
    pub rhs: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Feasibility,
    Minimize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SdpProblem {
    pub blocks: Vec<usize>,
    pub rows: Vec<EqualityRow>,
    pub objective: Option<Vec<Entry>>,
    /// Per-block weight `w_b` of the feasibility margin, `X_b - t w_b I`
    /// PSD. `None` weights every block by 1; a zero weight leaves the block
    /// out of the centering.
    pub margin_weights: Option<Vec<f64>>,
}

impl SdpProblem {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a PSD block and returns its id.
    pub fn add_block(&mut self, side: usize) -> usize {
        self.blocks.push(side);
        self.blocks.len() - 1
    }

    pub fn add_row(&mut self, entries: Vec<Entry>, rhs: f64) {
        self.rows.push(EqualityRow { entries, rhs });
    }

    pub fn sense(&self) -> Sense {
        match &self.objective {
            Some(_) => Sense::Minimize,
            None => Sense::Feasibility,
        }
    }

    pub fn validate(&self) -> Result<(), SdpError> {
        for (b, &side) in self.blocks.iter().enumerate() {
            if side == 0 {
                return Err(SdpError::EmptyBlock(b));
            }
        }
        let check = |e: &Entry| -> Result<(), SdpError> {
            let side = *self.blocks.get(e.block).ok_or(SdpError::UnknownBlock(e.block))?;
            if e.i > e.j {
                return Err(SdpError::LowerEntry { i: e.i, j: e.j });
            }
            if e.j >= side {
                return Err(SdpError::EntryOutOfRange {
                    block: e.block,
                    i: e.i,
                    j: e.j,
                    side,
                });
            }
            Ok(())
        };
        for (r, row) in self.rows.iter().enumerate() {
            if !row.rhs.is_finite() {
                return Err(SdpError::NonFinite(r));
            }
            for e in &row.entries {
                check(e)?;
                if !e.coef.is_finite() {
                    return Err(SdpError::NonFinite(r));
                }
            }
        }
        if let Some(obj) = &self.objective {
            for e in obj {
                check(e)?;
            }
        }
        if let Some(w) = &self.margin_weights {
            if w.len() != self.blocks.len() || w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) || w.iter().all(|&v| v == 0.0) {
                return Err(SdpError::MarginWeights);
            }
        }
        Ok(())
    }

    /// Row values `A(X)` for block matrices `x`.
    pub fn apply(&self, x: &[DMatrix<f64>]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|r| r.entries.iter().map(|e| e.coef * x[e.block][(e.i, e.j)]).sum())
            .collect()
    }

    /// Largest equality violation, each row measured relative to its
    /// coefficient norm.
    pub fn residual(&self, x: &[DMatrix<f64>]) -> f64 {
        self.rows
            .iter()
            .map(|r| {
                let lhs: f64 = r.entries.iter().map(|e| e.coef * x[e.block][(e.i, e.j)]).sum();
                let norm = r
                    .entries
                    .iter()
                    .map(|e| e.coef * e.coef)
                    .sum::<f64>()
                    .sqrt()
                    .max(1.0);
                (lhs - r.rhs).abs() / norm
            })
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdpOptions {
    pub eq_tol: f64,
    pub psd_tol: f64,
    pub gap_tol: f64,
    pub max_iters: usize,
    /// Upper bound on the margin in feasibility mode.
    pub margin_cap: f64,
    /// Weight of the total trace in the margin objective.
    pub trace_weight: f64,
    /// Infeasibility is certified for solutions with total trace below this.
    pub trace_bound: f64,
    /// Stop as soon as a PSD witness is found instead of maximizing the
    /// margin. Infeasibility is still decided by the dual bound.
    pub stop_at_feasible: bool,
}

impl Default for SdpOptions {
    fn default() -> Self {
        SdpOptions {
            eq_tol: 1e-7,
            psd_tol: 1e-8,
            gap_tol: 1e-8,
            max_iters: 200,
            margin_cap: 1.0,
            trace_weight: 1e-9,
            trace_bound: 1e6,
            stop_at_feasible: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SdpStatus {
    Feasible,
    Infeasible,
    /// Neither a witness nor an infeasibility certificate within tolerance.
    Marginal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdpSolution {
    pub status: SdpStatus,
    /// One symmetric matrix per block; empty when infeasible.
    pub blocks: Vec<DMatrix<f64>>,
    pub primal_residual: f64,
    pub min_eigenvalues: Vec<f64>,
    pub objective: Option<f64>,
    /// Best margin found (largest `t` with `X - t I` PSD), or its dual bound
    /// when infeasible.
    pub margin: f64,
    pub iterations: usize,
}

impl SdpSolution {
    pub fn is_feasible(&self) -> bool {
        self.status == SdpStatus::Feasible
    }

    fn without_solution(status: SdpStatus, margin: f64, iterations: usize) -> Self {
        SdpSolution {
            status,
            blocks: Vec::new(),
            primal_residual: f64::INFINITY,
            min_eigenvalues: Vec::new(),
            objective: None,
            margin,
            iterations,
        }
    }
}

/// Solve a feasibility or minimization problem.
pub fn solve(problem: &SdpProblem, opts: &SdpOptions) -> Result<SdpSolution, SdpError> {
    problem.validate()?;
    let reduced = match presolve::presolve(problem) {
        presolve::Presolved::Infeasible => {
            return Ok(SdpSolution::without_solution(SdpStatus::Infeasible, f64::NEG_INFINITY, 0))
        }
        presolve::Presolved::Reduced(r) => r,
    };

    let phase1 = ipm::solve_margin(&reduced, opts);
    let mut iterations = phase1.iterations;
    let (x, margin) = match phase1.outcome {
        ipm::MarginOutcome::Witness { x, margin } => (x, margin),
        ipm::MarginOutcome::Infeasible { bound } => {
            return Ok(SdpSolution::without_solution(SdpStatus::Infeasible, bound, iterations))
        }
        ipm::MarginOutcome::Undecided { margin } => {
            return Ok(SdpSolution::without_solution(SdpStatus::Marginal, margin, iterations))
        }
    };

    let mut blocks = x;
    let mut objective = None;
    if let Some(obj) = &problem.objective {
        let phase2 = ipm::solve_objective(&reduced, obj, opts);
        iterations += phase2.iterations;
        if let Some(x2) = phase2.x {
            if certify(problem, &x2, opts).is_some() {
                blocks = x2;
            }
        }
        objective = Some(
            obj.iter()
                .map(|e| e.coef * blocks[e.block][(e.i, e.j)])
                .sum(),
        );
    }

    match certify(problem, &blocks, opts) {
        Some((residual, eigs)) => Ok(SdpSolution {
            status: SdpStatus::Feasible,
            blocks,
            primal_residual: residual,
            min_eigenvalues: eigs,
            objective,
            margin,
            iterations,
        }),
        None => Ok(SdpSolution {
            status: SdpStatus::Marginal,
            primal_residual: problem.residual(&blocks),
            min_eigenvalues: blocks.iter().map(dense::min_eigenvalue).collect(),
            blocks,
            objective,
            margin,
            iterations,
        }),
    }
}

/// Residual and per-block minimum eigenvalues, if both are within tolerance.
fn certify(problem: &SdpProblem, x: &[DMatrix<f64>], opts: &SdpOptions) -> Option<(f64, Vec<f64>)> {
    let residual = problem.residual(x);
    let eigs: Vec<f64> = x.iter().map(dense::min_eigenvalue).collect();
    let ok = residual <= opts.eq_tol && eigs.iter().all(|&l| l >= -opts.psd_tol);
    ok.then_some((residual, eigs))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn e(block: usize, i: usize, j: usize, coef: f64) -> Entry {
        Entry { block, i, j, coef }
    }

    #[test]
    fn rank_one_gram_is_feasible() {
        // Gram of (x1 + x2)^2 over (x1, x2)
        let mut p = SdpProblem::new();
        let b = p.add_block(2);
        p.add_row(vec![e(b, 0, 0, 1.0)], 1.0);
        p.add_row(vec![e(b, 1, 1, 1.0)], 1.0);
        p.add_row(vec![e(b, 0, 1, 1.0)], 1.0);
        let sol = solve(&p, &SdpOptions::default()).unwrap();
        assert_eq!(sol.status, SdpStatus::Feasible);
        assert!(sol.primal_residual <= 1e-7);
        assert!(sol.min_eigenvalues[0] >= -1e-8);
        assert!((sol.blocks[0][(0, 1)] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn negative_diagonal_is_infeasible() {
        let mut p = SdpProblem::new();
        let b = p.add_block(2);
        p.add_row(vec![e(b, 0, 0, 1.0)], -1.0);
        let sol = solve(&p, &SdpOptions::default()).unwrap();
        assert_eq!(sol.status, SdpStatus::Infeasible);
        assert!(sol.margin < 0.0);
    }

    #[test]
    fn off_diagonal_too_large_is_infeasible() {
        // [[1, 2], [2, 1]] has a negative eigenvalue
        let mut p = SdpProblem::new();
        let b = p.add_block(2);
        p.add_row(vec![e(b, 0, 0, 1.0)], 1.0);
        p.add_row(vec![e(b, 1, 1, 1.0)], 1.0);
        p.add_row(vec![e(b, 0, 1, 1.0)], 2.0);
        assert_eq!(solve(&p, &SdpOptions::default()).unwrap().status, SdpStatus::Infeasible);
    }

    #[test]
    fn minimize_trace() {
        // min X00 + X11  s.t.  X01 = 1  ->  optimum 2 at [[1,1],[1,1]]
        let mut p = SdpProblem::new();
        let b = p.add_block(2);
        p.add_row(vec![e(b, 0, 1, 1.0)], 1.0);
        p.objective = Some(vec![e(b, 0, 0, 1.0), e(b, 1, 1, 1.0)]);
        let sol = solve(&p, &SdpOptions::default()).unwrap();
        assert_eq!(sol.status, SdpStatus::Feasible);
        assert!((sol.objective.unwrap() - 2.0).abs() < 1e-6, "{:?}", sol.objective);
    }

    #[test]
    fn coupled_blocks() {
        // X0 = a (1x1), X1 = [[c, d], [d, e]] with a + c = 1, d = 0.4, e = 1, a = 0.5
        let mut p = SdpProblem::new();
        let b0 = p.add_block(1);
        let b1 = p.add_block(2);
        p.add_row(vec![e(b0, 0, 0, 1.0), e(b1, 0, 0, 1.0)], 1.0);
        p.add_row(vec![e(b1, 0, 1, 1.0)], 0.4);
        p.add_row(vec![e(b1, 1, 1, 1.0)], 1.0);
        p.add_row(vec![e(b0, 0, 0, 1.0)], 0.5);
        let sol = solve(&p, &SdpOptions::default()).unwrap();
        assert!(sol.is_feasible());
        assert!((sol.blocks[1][(0, 0)] - 0.5).abs() < 1e-6);
    }

    #[test]
    fn inconsistent_duplicate_rows_are_infeasible() {
        let mut p = SdpProblem::new();
        let b = p.add_block(1);
        p.add_row(vec![e(b, 0, 0, 1.0)], 1.0);
        p.add_row(vec![e(b, 0, 0, 2.0)], 3.0);
        assert_eq!(solve(&p, &SdpOptions::default()).unwrap().status, SdpStatus::Infeasible);
    }

    #[test]
    fn malformed_problems_error() {
        let mut p = SdpProblem::new();
        p.add_block(2);
        p.add_row(vec![e(0, 1, 0, 1.0)], 1.0);
        assert_eq!(solve(&p, &SdpOptions::default()), Err(SdpError::LowerEntry { i: 1, j: 0 }));
        let mut q = SdpProblem::new();
        q.add_block(2);
        q.add_row(vec![e(3, 0, 0, 1.0)], 1.0);
        assert_eq!(solve(&q, &SdpOptions::default()), Err(SdpError::UnknownBlock(3)));
        let mut r = SdpProblem::new();
        r.add_block(2);
        r.add_row(vec![e(0, 0, 2, 1.0)], 1.0);
        assert!(matches!(
            solve(&r, &SdpOptions::default()),
            Err(SdpError::EntryOutOfRange { .. })
        ));
    }

    #[test]
    fn deterministic_repeat() {
        let mut p = SdpProblem::new();
        let b = p.add_block(3);
        p.add_row(vec![e(b, 0, 0, 1.0), e(b, 1, 1, 1.0)], 2.0);
        p.add_row(vec![e(b, 0, 2, 1.0)], 0.3);
        p.add_row(vec![e(b, 2, 2, 1.0)], 1.0);
        let a = solve(&p, &SdpOptions::default()).unwrap();
        let c = solve(&p, &SdpOptions::default()).unwrap();
        assert_eq!(a.status, c.status);
        assert_eq!(a.primal_residual.to_bits(), c.primal_residual.to_bits());
        assert_eq!(a.blocks, c.blocks);
    }

    fn random_problem(seed: u64, side: usize, nrows: usize, rank: usize) -> SdpProblem {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let f = DMatrix::<f64>::from_fn(side, rank, |_, _| rng.random_range(-1.0..1.0));
        let x0 = &f * f.transpose();
        let mut p = SdpProblem::new();
        let b = p.add_block(side);
        for _ in 0..nrows {
            let mut entries = Vec::new();
            for _ in 0..3 {
                let i = rng.random_range(0..side);
                let j = rng.random_range(i..side);
                entries.push(e(b, i, j, rng.random_range(-2.0..2.0)));
            }
            let rhs = entries.iter().map(|en| en.coef * x0[(en.i, en.j)]).sum();
            p.add_row(entries, rhs);
        }
        p
    }

    #[test]
    fn random_feasible_problems() {
        let _ = env_logger::builder().is_test(true).try_init();
        for seed in 0..20 {
            let p = random_problem(seed, 8, 20, 8);
            let sol = solve(&p, &SdpOptions::default()).unwrap();
            assert_eq!(sol.status, SdpStatus::Feasible, "seed {seed}");
            assert!(p.residual(&sol.blocks) <= 1e-7);
        }
    }

    #[test]
    fn stop_at_feasible_returns_witness() {
        let p = random_problem(7, 10, 25, 10);
        let opts = SdpOptions {
            stop_at_feasible: true,
            ..SdpOptions::default()
        };
        let fast = solve(&p, &opts).unwrap();
        let full = solve(&p, &SdpOptions::default()).unwrap();
        assert!(fast.is_feasible() && full.is_feasible());
        assert!(fast.iterations <= full.iterations);
        assert!(fast.margin <= full.margin + 1e-9);
    }

    #[test]
    fn row_scaling_does_not_flip_status() {
        let mut p = SdpProblem::new();
        let b = p.add_block(2);
        p.add_row(vec![e(b, 0, 0, 1.0)], 1.0);
        p.add_row(vec![e(b, 1, 1, 1.0)], 1.0);
        p.add_row(vec![e(b, 0, 1, 1.0)], 0.99);
        let mut q = p.clone();
        for r in &mut q.rows {
            r.rhs *= 1e3;
            for en in &mut r.entries {
                en.coef *= 1e3;
            }
        }
        let opts = SdpOptions::default();
        assert_eq!(solve(&p, &opts).unwrap().status, solve(&q, &opts).unwrap().status);
    }
}
