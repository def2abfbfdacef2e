//! SOS constraints as semidefinite programs.
//!
//! Every unknown SOS polynomial is a Gram form `Z' Q Z` with `Q` PSD. A
//! constraint "expression is SOS", where the expression is affine in the Gram
//! matrices, gets its own Gram form and one linear equality per monomial.

mod basis;

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::DMatrix;

use crate::poly::{Monomial, Polynomial};
use crate::sdp::{self, Entry, EqualityRow, SdpError, SdpOptions, SdpProblem, SdpSolution, SdpStatus};

pub use basis::{monomial_basis, MonomialBasis};

/// A coefficient row with no unknowns tolerates this much right-hand side.
const STRUCTURAL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SosError {
    #[error("invalid degree range [{min_deg}, {max_deg}]")]
    InvalidDegreeRange { min_deg: u32, max_deg: u32 },
    #[error("expected {expected} variables, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("Gram variable needs a nonempty basis")]
    EmptyBasis,
    #[error("constraint {constraint:?}: monomial {monomial} has coefficient {value} but no unknown can produce it")]
    StructurallyInfeasible {
        constraint: String,
        monomial: String,
        value: f64,
    },
    #[error("program has no constraints")]
    NoConstraints,
    #[error("solution has no block for Gram variable {0}")]
    MissingVariable(usize),
    #[error(transparent)]
    Sdp(#[from] SdpError),
}

/// Handle to a PSD Gram block of an SOS program.
#[derive(Debug, Clone, PartialEq)]
pub struct GramVariable {
    id: usize,
    basis: MonomialBasis,
}

impl GramVariable {
    /// Block index in the assembled problem.
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn basis(&self) -> &MonomialBasis {
        &self.basis
    }
}

/// Linear map applied to a Gram form inside an expression.
#[derive(Debug, Clone, PartialEq)]
pub enum GramMap {
    /// `g -> p * g`
    Multiply(Polynomial),
    /// `g -> grad(g) . f`
    LieDerivative(Vec<Polynomial>),
}

impl GramMap {
    fn negated(&self) -> GramMap {
        match self {
            GramMap::Multiply(p) => GramMap::Multiply(-p),
            GramMap::LieDerivative(f) => GramMap::LieDerivative(f.iter().map(|fk| -fk).collect()),
        }
    }

    fn apply(&self, g: &Polynomial) -> Polynomial {
        match self {
            GramMap::Multiply(p) => p * g,
            GramMap::LieDerivative(f) => g.lie_derivative(f).expect("dimensions checked"),
        }
    }

    /// Calls `out(monomial, coef)` for each term of the image of `c * m`.
    fn image(&self, m: &Monomial, c: f64, out: &mut impl FnMut(Monomial, f64)) {
        match self {
            GramMap::Multiply(p) => {
                for (pm, pc) in p.terms() {
                    out(m.mul(pm), c * pc);
                }
            }
            GramMap::LieDerivative(f) => {
                for (v, fv) in f.iter().enumerate() {
                    let e = m.exponents()[v];
                    if e == 0 {
                        continue;
                    }
                    let mut exps = m.exponents().to_vec();
                    exps[v] -= 1;
                    let d = Monomial::new(exps);
                    for (fm, fc) in fv.terms() {
                        out(d.mul(fm), c * e as f64 * fc);
                    }
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GramTerm {
    pub var: GramVariable,
    pub map: GramMap,
}

impl GramTerm {
    /// Image of each upper-triangular Gram entry `(k, l)`; off-diagonal
    /// entries stand for `2 Z_k Z_l`.
    fn for_each_entry(&self, mut out: impl FnMut(usize, usize, Monomial, f64)) {
        let z = self.var.basis.entries();
        for k in 0..z.len() {
            for l in k..z.len() {
                let base = z[k].mul(&z[l]);
                let factor = if k == l { 1.0 } else { 2.0 };
                self.map.image(&base, factor, &mut |m, c| out(k, l, m, c));
            }
        }
    }
}

/// `constant + sum_k map_k(Z_k' Q_k Z_k)`, affine in the Gram matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct SosExpression {
    pub constant: Polynomial,
    pub terms: Vec<GramTerm>,
}

impl SosExpression {
    pub fn new(constant: Polynomial) -> Self {
        SosExpression {
            constant,
            terms: Vec::new(),
        }
    }

    pub fn nvars(&self) -> usize {
        self.constant.nvars()
    }

    /// Adds `multiplier * (Z' Q Z)`.
    pub fn add_product(&mut self, var: &GramVariable, multiplier: Polynomial) -> &mut Self {
        self.terms.push(GramTerm {
            var: var.clone(),
            map: GramMap::Multiply(multiplier),
        });
        self
    }

    /// Adds `grad(Z' Q Z) . field`.
    pub fn add_lie_derivative(&mut self, var: &GramVariable, field: Vec<Polynomial>) -> &mut Self {
        self.terms.push(GramTerm {
            var: var.clone(),
            map: GramMap::LieDerivative(field),
        });
        self
    }

    fn check_dims(&self) -> Result<(), SosError> {
        let n = self.nvars();
        let bad = |found: usize| {
            (found != n).then_some(SosError::DimensionMismatch { expected: n, found })
        };
        for t in &self.terms {
            if let Some(e) = bad(t.var.basis.nvars()) {
                return Err(e);
            }
            match &t.map {
                GramMap::Multiply(p) => {
                    if let Some(e) = bad(p.nvars()) {
                        return Err(e);
                    }
                }
                GramMap::LieDerivative(f) => {
                    if let Some(e) = bad(f.len()) {
                        return Err(e);
                    }
                    if let Some(e) = f.iter().find_map(|fk| bad(fk.nvars())) {
                        return Err(e);
                    }
                }
            }
        }
        Ok(())
    }

    /// Monomials that can carry a nonzero coefficient.
    fn support(&self) -> BTreeSet<Monomial> {
        let mut s: BTreeSet<Monomial> = self.constant.terms().map(|(m, _)| m.clone()).collect();
        for t in &self.terms {
            t.for_each_entry(|_, _, m, _| {
                s.insert(m);
            });
        }
        s
    }

    /// The expression's polynomial for given Gram values, indexed by block id.
    pub fn evaluate(&self, grams: &[DMatrix<f64>]) -> Polynomial {
        let mut out = self.constant.clone();
        for t in &self.terms {
            let g = t.var.basis.gram_polynomial(&grams[t.var.id]);
            out = &out + &t.map.apply(&g);
        }
        out
    }
}

/// Linear equalities stating `expr == target`, one per monomial that can
/// appear on either side. Unknowns are upper-triangular Gram entries.
pub fn coefficient_match(expr: &SosExpression, target: &Polynomial) -> Result<Vec<EqualityRow>, SosError> {
    expr.check_dims()?;
    if target.nvars() != expr.nvars() {
        return Err(SosError::DimensionMismatch {
            expected: expr.nvars(),
            found: target.nvars(),
        });
    }
    let mut rows: BTreeMap<Monomial, BTreeMap<(usize, usize, usize), f64>> = BTreeMap::new();
    for t in &expr.terms {
        let id = t.var.id;
        t.for_each_entry(|k, l, m, c| {
            *rows.entry(m).or_default().entry((id, k, l)).or_insert(0.0) += c;
        });
    }
    for (m, _) in target.terms().chain(expr.constant.terms()) {
        rows.entry(m.clone()).or_default();
    }
    let mut out = Vec::with_capacity(rows.len());
    for (m, entries) in rows {
        let rhs = target.coeff(&m) - expr.constant.coeff(&m);
        let entries: Vec<Entry> = entries
            .into_iter()
            .filter(|(_, c)| *c != 0.0)
            .map(|((block, i, j), coef)| Entry { block, i, j, coef })
            .collect();
        if entries.is_empty() {
            if rhs.abs() > STRUCTURAL_TOL {
                return Err(SosError::StructurallyInfeasible {
                    constraint: String::new(),
                    monomial: m.to_string(),
                    value: rhs,
                });
            }
            continue;
        }
        out.push(EqualityRow { entries, rhs });
    }
    Ok(out)
}

/// Drops basis monomials whose Gram diagonal is forced to zero: `z^2` cannot
/// appear in the expression and no other pair of basis entries produces it.
/// A PSD matrix with a zero diagonal entry has a zero row, so the SOS set is
/// unchanged.
fn prune_forced_zeros(mut z: Vec<Monomial>, support: &BTreeSet<Monomial>) -> Vec<Monomial> {
    loop {
        let before = z.len();
        let snapshot = z.clone();
        z.retain(|zk| {
            let sq = zk.mul(zk);
            if support.contains(&sq) {
                return true;
            }
            snapshot.iter().enumerate().any(|(a, za)| {
                za != zk && snapshot[a + 1..].iter().any(|zb| zb != zk && za.mul(zb) == sq)
            })
        });
        if z.len() == before {
            return z;
        }
    }
}

/// Gram basis for an expression: full degree range of its support, with
/// forced-zero entries removed.
fn expression_basis(expr: &SosExpression) -> Option<MonomialBasis> {
    let support = expr.support();
    let lo = support.iter().map(Monomial::degree).min()?;
    let hi = support.iter().map(Monomial::degree).max()?;
    let full = monomial_basis(expr.nvars(), lo, hi).ok()?;
    let z = prune_forced_zeros(full.entries().to_vec(), &support);
    (!z.is_empty()).then(|| MonomialBasis::new(expr.nvars(), z))
}

#[derive(Debug, Clone, PartialEq)]
struct Constraint {
    name: String,
    expr: SosExpression,
}

/// A set of SOS constraints over shared Gram variables.
#[derive(Debug, Clone, PartialEq)]
pub struct SosProgram {
    nvars: usize,
    vars: Vec<GramVariable>,
    constraints: Vec<Constraint>,
    objective: Option<Vec<Entry>>,
    var_weights: Vec<(usize, f64)>,
    constraint_weights: Vec<(usize, f64)>,
}

/// The SDP image of a program, with the Gram variable of each constraint.
#[derive(Debug, Clone, PartialEq)]
pub struct Assembled {
    pub problem: SdpProblem,
    pub expression_vars: Vec<Option<GramVariable>>,
}

impl SosProgram {
    pub fn new(nvars: usize) -> Self {
        SosProgram {
            nvars,
            vars: Vec::new(),
            constraints: Vec::new(),
            objective: None,
            var_weights: Vec::new(),
            constraint_weights: Vec::new(),
        }
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    /// New unknown SOS polynomial `Z' Q Z` over `basis`.
    pub fn add_gram(&mut self, basis: MonomialBasis) -> Result<GramVariable, SosError> {
        if basis.is_empty() {
            return Err(SosError::EmptyBasis);
        }
        if basis.nvars() != self.nvars {
            return Err(SosError::DimensionMismatch {
                expected: self.nvars,
                found: basis.nvars(),
            });
        }
        let v = GramVariable {
            id: self.vars.len(),
            basis,
        };
        self.vars.push(v.clone());
        Ok(v)
    }

    /// Require `expr` to be SOS.
    pub fn require_sos(&mut self, name: impl Into<String>, expr: SosExpression) -> Result<(), SosError> {
        if expr.nvars() != self.nvars {
            return Err(SosError::DimensionMismatch {
                expected: self.nvars,
                found: expr.nvars(),
            });
        }
        expr.check_dims()?;
        self.constraints.push(Constraint {
            name: name.into(),
            expr,
        });
        Ok(())
    }

    /// Minimize the summed traces of the given Gram variables.
    pub fn minimize_trace(&mut self, vars: &[&GramVariable]) {
        let mut entries = Vec::new();
        for v in vars {
            for i in 0..v.basis.len() {
                entries.push(Entry {
                    block: v.id,
                    i,
                    j: i,
                    coef: 1.0,
                });
            }
        }
        self.objective = Some(entries);
    }

    /// Weight of `var` in the feasibility margin (default 1). Zero leaves
    /// it out of the centering: it is only kept PSD.
    pub fn set_margin_weight(&mut self, var: &GramVariable, weight: f64) {
        self.var_weights.retain(|(id, _)| *id != var.id);
        self.var_weights.push((var.id, weight));
    }

    /// Margin weight of the Gram matrix of the `index`-th constraint.
    pub fn set_constraint_margin_weight(&mut self, index: usize, weight: f64) {
        self.constraint_weights.retain(|(i, _)| *i != index);
        self.constraint_weights.push((index, weight));
    }

    pub fn assemble(&self) -> Result<Assembled, SosError> {
        if self.constraints.is_empty() {
            return Err(SosError::NoConstraints);
        }
        let mut problem = SdpProblem::new();
        for v in &self.vars {
            problem.add_block(v.basis.len());
        }
        let mut expression_vars = Vec::with_capacity(self.constraints.len());
        for c in &self.constraints {
            // expr in SOS  <=>  Z_e' Q_e Z_e - (expr - constant) = constant
            let mut matched = SosExpression::new(Polynomial::zero(self.nvars));
            let evar = expression_basis(&c.expr).map(|basis| GramVariable {
                id: problem.add_block(basis.len()),
                basis,
            });
            if let Some(ev) = &evar {
                matched.add_product(ev, Polynomial::constant(self.nvars, 1.0));
            }
            for t in &c.expr.terms {
                matched.terms.push(GramTerm {
                    var: t.var.clone(),
                    map: t.map.negated(),
                });
            }
            let rows = coefficient_match(&matched, &c.expr.constant).map_err(|e| match e {
                SosError::StructurallyInfeasible { monomial, value, .. } => SosError::StructurallyInfeasible {
                    constraint: c.name.clone(),
                    monomial,
                    value,
                },
                other => other,
            })?;
            problem.rows.extend(rows);
            expression_vars.push(evar);
        }
        problem.objective = self.objective.clone();
        if !self.var_weights.is_empty() || !self.constraint_weights.is_empty() {
            let mut w = vec![1.0; problem.blocks.len()];
            for &(id, wt) in &self.var_weights {
                w[id] = wt;
            }
            for &(c, wt) in &self.constraint_weights {
                if let Some(Some(ev)) = expression_vars.get(c) {
                    w[ev.id] = wt;
                }
            }
            problem.margin_weights = Some(w);
        }
        Ok(Assembled {
            problem,
            expression_vars,
        })
    }

    pub fn solve(&self, opts: &SdpOptions) -> Result<SosSolution, SosError> {
        let assembled = self.assemble()?;
        let sdp = sdp::solve(&assembled.problem, opts)?;
        Ok(SosSolution {
            sdp,
            program: self.clone(),
            expression_vars: assembled.expression_vars,
        })
    }
}

/// Polynomial `Z' Q Z` recovered from a solved Gram block.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtractedGram {
    pub polynomial: Polynomial,
    pub gram: DMatrix<f64>,
    pub min_eigenvalue: f64,
}

pub fn extract(sol: &SdpSolution, var: &GramVariable) -> Result<ExtractedGram, SosError> {
    let q = sol.blocks.get(var.id).ok_or(SosError::MissingVariable(var.id))?;
    if q.nrows() != var.basis.len() {
        return Err(SosError::MissingVariable(var.id));
    }
    let min_eigenvalue = if q.nrows() == 1 {
        q[(0, 0)]
    } else {
        q.clone().symmetric_eigenvalues().min()
    };
    Ok(ExtractedGram {
        polynomial: var.basis.gram_polynomial(q),
        gram: q.clone(),
        min_eigenvalue,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SosSolution {
    pub sdp: SdpSolution,
    program: SosProgram,
    expression_vars: Vec<Option<GramVariable>>,
}

impl SosSolution {
    pub fn status(&self) -> SdpStatus {
        self.sdp.status
    }

    pub fn is_feasible(&self) -> bool {
        self.sdp.is_feasible()
    }

    pub fn extract(&self, var: &GramVariable) -> Result<ExtractedGram, SosError> {
        extract(&self.sdp, var)
    }

    /// Largest coefficient mismatch between each constraint expression and
    /// its SOS Gram form. Empty unless feasible.
    pub fn identity_residuals(&self) -> Vec<f64> {
        if !self.is_feasible() {
            return Vec::new();
        }
        self.program
            .constraints
            .iter()
            .zip(&self.expression_vars)
            .map(|(c, ev)| {
                let lhs = c.expr.evaluate(&self.sdp.blocks);
                let rhs = match ev {
                    Some(v) => v.basis.gram_polynomial(&self.sdp.blocks[v.id]),
                    None => Polynomial::zero(self.program.nvars),
                };
                lhs.max_coeff_diff(&rhs)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(s: &str, n: usize) -> Polynomial {
        Polynomial::parse(s, n).unwrap()
    }

    fn is_sos(poly: &Polynomial) -> SosSolution {
        let mut prog = SosProgram::new(poly.nvars());
        prog.require_sos("p", SosExpression::new(poly.clone())).unwrap();
        prog.solve(&SdpOptions::default()).unwrap()
    }

    #[test]
    fn sum_of_squares_two_vars() {
        let mut prog = SosProgram::new(2);
        prog.require_sos("p", SosExpression::new(p("x1^2 + x2^2", 2))).unwrap();
        let a = prog.assemble().unwrap();
        assert_eq!(a.problem.blocks, vec![2]);
        assert_eq!(a.problem.rows.len(), 3);
        let sol = prog.solve(&SdpOptions::default()).unwrap();
        assert!(sol.is_feasible());
        assert!(sol.identity_residuals()[0] <= 1e-7);
    }

    #[test]
    fn motzkin_is_not_sos() {
        let m = p("x1^4*x2^2 + x1^2*x2^4 - 3*x1^2*x2^2 + 1", 2);
        assert!(!is_sos(&m).is_feasible());
        // shifted by a square-friendly term it becomes SOS
        assert!(is_sos(&p("x1^4*x2^2 + x1^2*x2^4 + 1", 2)).is_feasible());
    }

    #[test]
    fn matching_examples() {
        let basis = monomial_basis(2, 2, 2).unwrap();
        let mut prog = SosProgram::new(2);
        let q = prog.add_gram(basis).unwrap();
        let mut expr = SosExpression::new(Polynomial::zero(2));
        expr.add_product(&q, Polynomial::constant(2, 1.0));
        let rows = coefficient_match(&expr, &p("x1^2 + 2*x1*x2 + x2^2", 2)).unwrap();
        assert_eq!(rows.len(), 3);
        // basis is (x2, x1): x2^2 -> Q00, x1*x2 -> 2 Q01, x1^2 -> Q11
        let mut by_entry: Vec<(usize, usize, f64, f64)> = rows
            .iter()
            .map(|r| (r.entries[0].i, r.entries[0].j, r.entries[0].coef, r.rhs))
            .collect();
        by_entry.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(by_entry, vec![(0, 0, 1.0, 1.0), (0, 1, 2.0, 2.0), (1, 1, 1.0, 1.0)]);
    }

    #[test]
    fn quartic_has_gram_freedom() {
        let basis = monomial_basis(1, 0, 4).unwrap();
        let mut prog = SosProgram::new(1);
        let q = prog.add_gram(basis).unwrap();
        let mut expr = SosExpression::new(Polynomial::zero(1));
        expr.add_product(&q, Polynomial::constant(1, 1.0));
        let rows = coefficient_match(&expr, &p("x1^4", 1)).unwrap();
        assert_eq!(rows.len(), 5);
        assert!(rows.len() < 6, "3x3 Gram has 6 unknowns");
    }

    #[test]
    fn parity_obstruction() {
        let basis = monomial_basis(1, 2, 2).unwrap();
        let mut prog = SosProgram::new(1);
        let q = prog.add_gram(basis).unwrap();
        let mut expr = SosExpression::new(Polynomial::zero(1));
        expr.add_product(&q, Polynomial::constant(1, 1.0));
        assert!(matches!(
            coefficient_match(&expr, &p("x1^3", 1)),
            Err(SosError::StructurallyInfeasible { .. })
        ));
    }

    #[test]
    fn odd_polynomial_rejected_structurally() {
        // x1^3 alone: basis degrees 2..1 is empty, monomial cannot be matched
        let mut prog = SosProgram::new(1);
        prog.require_sos("cubic", SosExpression::new(p("x1^3", 1))).unwrap();
        match prog.assemble() {
            Err(SosError::StructurallyInfeasible { constraint, monomial, .. }) => {
                assert_eq!(constraint, "cubic");
                assert_eq!(monomial, "x1^3");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn multiplier_search() {
        // find SOS s with  x^2 * s - (x^4 + x^2)  SOS  (s = x^2 + 1 works)
        let mut prog = SosProgram::new(1);
        let s = prog.add_gram(monomial_basis(1, 0, 2).unwrap()).unwrap();
        let mut expr = SosExpression::new(-&p("x1^4 + x1^2", 1));
        expr.add_product(&s, p("x1^2", 1));
        prog.require_sos("c", expr).unwrap();
        let sol = prog.solve(&SdpOptions::default()).unwrap();
        assert!(sol.is_feasible());
        let got = sol.extract(&s).unwrap();
        assert!(got.min_eigenvalue >= -1e-8);
        assert!(sol.identity_residuals()[0] <= 1e-7);
    }

    #[test]
    fn lie_derivative_term_matches_direct() {
        let f = vec![p("-x2", 2), p("x1 + 5*x1^2*x2 - 5*x2", 2)];
        let basis = monomial_basis(2, 2, 4).unwrap();
        let mut prog = SosProgram::new(2);
        let v = prog.add_gram(basis.clone()).unwrap();
        let mut expr = SosExpression::new(Polynomial::zero(2));
        expr.add_lie_derivative(&v, f.clone());
        let n = basis.len();
        let q = DMatrix::from_fn(n, n, |i, j| 1.0 / (1.0 + i as f64 + j as f64));
        let direct = basis.gram_polynomial(&q).lie_derivative(&f).unwrap();
        let mut grams = vec![q.clone()];
        let via_expr = expr.evaluate(&grams);
        assert!(via_expr.max_coeff_diff(&direct) < 1e-12);
        // coefficient rows reproduce the same polynomial
        let rows = coefficient_match(&expr, &direct).unwrap();
        grams.truncate(1);
        for r in rows {
            let lhs: f64 = r.entries.iter().map(|e| e.coef * q[(e.i, e.j)]).sum();
            assert!((lhs - r.rhs).abs() < 1e-12);
        }
    }

    #[test]
    fn forced_zero_pruning_is_sound() {
        // x1^2 * x2^2 + 1: x1 and x2 alone cannot appear squared
        let poly = p("x1^2*x2^2 + 1", 2);
        let expr = SosExpression::new(poly);
        let b = expression_basis(&expr).unwrap();
        assert!(b.entries().iter().all(|m| m.degree() != 1 || m.exponents() == [1, 1]));
        assert!(is_sos(&p("x1^2*x2^2 + 1", 2)).is_feasible());
    }
}
