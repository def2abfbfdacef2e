use std::collections::{BTreeMap, HashMap};

use nalgebra::DMatrix;

use super::dense::SchurFactor;
use super::{Entry, SdpProblem};

/// A row with no coefficients must have a right-hand side below this.
const ZERO_ROW_TOL: f64 = 1e-10;
/// Residual norm under which a unit row counts as linearly dependent.
const DEPENDENT_TOL: f64 = 1e-9;
/// Right-hand-side mismatch under which a dependent row is consistent.
const CONSISTENT_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Row {
    pub entries: Vec<Entry>,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Reduced {
    pub blocks: Vec<usize>,
    pub weights: Vec<f64>,
    pub rows: Vec<Row>,
}

#[derive(Debug)]
pub(crate) enum Presolved {
    Reduced(Reduced),
    Infeasible,
}

/// Least-norm correction onto the affine set `A(X) = b`.
pub(crate) struct Projector {
    factor: SchurFactor,
}

impl Reduced {
    pub fn projector(&self) -> Projector {
        let m = self.rows.len();
        let mut cols: BTreeMap<(usize, usize, usize), Vec<(usize, f64)>> = BTreeMap::new();
        for (r, row) in self.rows.iter().enumerate() {
            for e in &row.entries {
                cols.entry((e.block, e.i, e.j)).or_default().push((r, e.coef));
            }
        }
        let mut g = vec![0.0; m * m];
        for ((_, i, j), list) in &cols {
            let w = if i == j { 1.0 } else { 0.5 };
            for (a, &(ra, ca)) in list.iter().enumerate() {
                for &(rb, cb) in &list[..=a] {
                    g[ra.max(rb) * m + ra.min(rb)] += w * ca * cb;
                }
            }
        }
        Projector {
            factor: SchurFactor::new(g, m),
        }
    }

    pub fn residual(&self, x: &[DMatrix<f64>]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|r| r.rhs - r.entries.iter().map(|e| e.coef * x[e.block][(e.i, e.j)]).sum::<f64>())
            .collect()
    }
}

impl Projector {
    pub fn project(&self, red: &Reduced, x: &mut [DMatrix<f64>]) {
        for _ in 0..2 {
            let u = self.factor.solve(&red.residual(x));
            for (row, &ui) in red.rows.iter().zip(&u) {
                for e in &row.entries {
                    let m = &mut x[e.block];
                    if e.i == e.j {
                        m[(e.i, e.i)] += e.coef * ui;
                    } else {
                        m[(e.i, e.j)] += 0.5 * e.coef * ui;
                        m[(e.j, e.i)] += 0.5 * e.coef * ui;
                    }
                }
            }
        }
    }
}

/// Merge repeated entries, scale rows to unit norm and drop dependent rows.
pub(crate) fn presolve(p: &SdpProblem) -> Presolved {
    let mut rows = Vec::with_capacity(p.rows.len());
    for r in &p.rows {
        let mut merged: BTreeMap<(usize, usize, usize), f64> = BTreeMap::new();
        for e in &r.entries {
            *merged.entry((e.block, e.i, e.j)).or_insert(0.0) += e.coef;
        }
        let big = merged.values().fold(0.0f64, |m, c| m.max(c.abs()));
        let entries: Vec<Entry> = merged
            .into_iter()
            .filter(|(_, c)| c.abs() > 1e-15 * big && *c != 0.0)
            .map(|((block, i, j), coef)| Entry { block, i, j, coef })
            .collect();
        let norm = entries.iter().map(|e| e.coef * e.coef).sum::<f64>().sqrt();
        if norm == 0.0 {
            if r.rhs.abs() > ZERO_ROW_TOL {
                return Presolved::Infeasible;
            }
            continue;
        }
        rows.push(Row {
            entries: entries
                .into_iter()
                .map(|e| Entry {
                    coef: e.coef / norm,
                    ..e
                })
                .collect(),
            rhs: r.rhs / norm,
        });
    }

    // A row owning a column no other row touches is independent of the rest,
    // so only the remaining rows need an explicit rank test.
    let mut count: HashMap<(usize, usize, usize), usize> = HashMap::new();
    for r in &rows {
        for e in &r.entries {
            *count.entry((e.block, e.i, e.j)).or_insert(0) += 1;
        }
    }
    let shared: Vec<usize> = rows
        .iter()
        .enumerate()
        .filter(|(_, r)| r.entries.iter().all(|e| count[&(e.block, e.i, e.j)] > 1))
        .map(|(k, _)| k)
        .collect();

    let mut drop = vec![false; rows.len()];
    if !shared.is_empty() {
        let mut cols: BTreeMap<(usize, usize, usize), usize> = BTreeMap::new();
        for &k in &shared {
            for e in &rows[k].entries {
                let next = cols.len();
                cols.entry((e.block, e.i, e.j)).or_insert(next);
            }
        }
        let ncols = cols.len();
        let mut basis: Vec<(Vec<f64>, f64)> = Vec::new();
        for &k in &shared {
            let mut v = vec![0.0; ncols];
            for e in &rows[k].entries {
                v[cols[&(e.block, e.i, e.j)]] = e.coef;
            }
            let mut rhs = rows[k].rhs;
            for _ in 0..2 {
                for (q, qr) in &basis {
                    let c: f64 = v.iter().zip(q).map(|(a, b)| a * b).sum();
                    for (vi, qi) in v.iter_mut().zip(q) {
                        *vi -= c * qi;
                    }
                    rhs -= c * qr;
                }
            }
            let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
            if norm <= DEPENDENT_TOL {
                if rhs.abs() > CONSISTENT_TOL {
                    return Presolved::Infeasible;
                }
                drop[k] = true;
            } else {
                v.iter_mut().for_each(|a| *a /= norm);
                basis.push((v, rhs / norm));
            }
        }
    }
    let rows = rows
        .into_iter()
        .zip(drop)
        .filter(|(_, d)| !d)
        .map(|(r, _)| r)
        .collect();
    Presolved::Reduced(Reduced {
        blocks: p.blocks.clone(),
        weights: p.margin_weights.clone().unwrap_or_else(|| vec![1.0; p.blocks.len()]),
        rows,
    })
}
