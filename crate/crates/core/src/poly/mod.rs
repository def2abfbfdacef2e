//! Sparse multivariate polynomials with real coefficients.
//!
//! A [`Polynomial`] maps exponent vectors to nonzero coefficients. Terms are
//! kept in graded-lex order so that printing, hashing of serialized output,
//! and coefficient matching are deterministic.

mod monomial;
mod parse;
mod system;

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

pub use monomial::Monomial;
pub use parse::ParsePolyError;
pub use system::{CompiledPoly, CompiledSystem, DynamicalSystem, SystemError};

/// Coefficients smaller than this in magnitude are dropped after arithmetic.
pub const PRUNE_TOL: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PolyError {
    #[error("dimension mismatch: {left} vs {right} variables")]
    DimensionMismatch { left: usize, right: usize },
}

#[derive(Clone, PartialEq)]
pub struct Polynomial {
    nvars: usize,
    terms: BTreeMap<Monomial, f64>,
}

impl Polynomial {
    pub fn zero(nvars: usize) -> Self {
        Polynomial {
            nvars,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(nvars: usize, c: f64) -> Self {
        let mut p = Polynomial::zero(nvars);
        p.add_term(Monomial::one(nvars), c);
        p
    }

    /// The coordinate polynomial `x_k` (zero-based).
    pub fn var(nvars: usize, k: usize) -> Self {
        let mut p = Polynomial::zero(nvars);
        p.add_term(Monomial::var(nvars, k), 1.0);
        p
    }

    pub fn monomial(m: Monomial, c: f64) -> Self {
        let mut p = Polynomial::zero(m.nvars());
        p.add_term(m, c);
        p
    }

    pub fn from_terms<I>(nvars: usize, terms: I) -> Self
    where
        I: IntoIterator<Item = (Monomial, f64)>,
    {
        let mut p = Polynomial::zero(nvars);
        for (m, c) in terms {
            assert_eq!(m.nvars(), nvars, "monomial has wrong variable count");
            p.add_term(m, c);
        }
        p.prune();
        p
    }

    /// Quadratic form `(x - c)^T M (x - c)` for a row-major symmetric `M`.
    pub fn quadratic_form(m: &[f64], center: &[f64]) -> Self {
        let n = center.len();
        assert_eq!(m.len(), n * n, "matrix must be n x n");
        let shifted: Vec<Polynomial> = (0..n)
            .map(|k| &Polynomial::var(n, k) - &Polynomial::constant(n, center[k]))
            .collect();
        let mut out = Polynomial::zero(n);
        for i in 0..n {
            for j in 0..n {
                let a = m[i * n + j];
                if a != 0.0 {
                    out = &out + &(&shifted[i] * &shifted[j]).scale(a);
                }
            }
        }
        out
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Maximum term degree; 0 for the zero polynomial.
    pub fn degree(&self) -> u32 {
        self.terms.keys().map(Monomial::degree).max().unwrap_or(0)
    }

    /// Minimum term degree; 0 for the zero polynomial.
    pub fn min_degree(&self) -> u32 {
        self.terms.keys().map(Monomial::degree).min().unwrap_or(0)
    }

    pub fn coeff(&self, m: &Monomial) -> f64 {
        self.terms.get(m).copied().unwrap_or(0.0)
    }

    pub fn constant_term(&self) -> f64 {
        self.coeff(&Monomial::one(self.nvars))
    }

    /// Terms in ascending graded-lex order.
    pub fn terms(&self) -> impl DoubleEndedIterator<Item = (&Monomial, f64)> + '_ {
        self.terms.iter().map(|(m, &c)| (m, c))
    }

    fn add_term(&mut self, m: Monomial, c: f64) {
        if c == 0.0 {
            return;
        }
        *self.terms.entry(m).or_insert(0.0) += c;
    }

    fn prune(&mut self) {
        self.terms.retain(|_, c| c.abs() >= PRUNE_TOL);
    }

    /// Part of the polynomial with terms of exactly degree `d`.
    pub fn homogeneous_part(&self, d: u32) -> Polynomial {
        Polynomial {
            nvars: self.nvars,
            terms: self
                .terms
                .iter()
                .filter(|(m, _)| m.degree() == d)
                .map(|(m, &c)| (m.clone(), c))
                .collect(),
        }
    }

    fn check_dims(&self, other: &Polynomial) -> Result<(), PolyError> {
        if self.nvars != other.nvars {
            return Err(PolyError::DimensionMismatch {
                left: self.nvars,
                right: other.nvars,
            });
        }
        Ok(())
    }

    pub fn try_add(&self, other: &Polynomial) -> Result<Polynomial, PolyError> {
        self.check_dims(other)?;
        let mut out = self.clone();
        for (m, &c) in &other.terms {
            out.add_term(m.clone(), c);
        }
        out.prune();
        Ok(out)
    }

    pub fn try_sub(&self, other: &Polynomial) -> Result<Polynomial, PolyError> {
        self.check_dims(other)?;
        let mut out = self.clone();
        for (m, &c) in &other.terms {
            out.add_term(m.clone(), -c);
        }
        out.prune();
        Ok(out)
    }

    pub fn try_mul(&self, other: &Polynomial) -> Result<Polynomial, PolyError> {
        self.check_dims(other)?;
        let mut out = Polynomial::zero(self.nvars);
        for (ma, &ca) in &self.terms {
            for (mb, &cb) in &other.terms {
                out.add_term(ma.mul(mb), ca * cb);
            }
        }
        out.prune();
        Ok(out)
    }

    pub fn scale(&self, s: f64) -> Polynomial {
        let mut out = Polynomial {
            nvars: self.nvars,
            terms: self.terms.iter().map(|(m, &c)| (m.clone(), c * s)).collect(),
        };
        out.prune();
        out
    }

    pub fn try_eval(&self, x: &[f64]) -> Result<f64, PolyError> {
        if x.len() != self.nvars {
            return Err(PolyError::DimensionMismatch {
                left: self.nvars,
                right: x.len(),
            });
        }
        Ok(self.eval(x))
    }

    /// Term-by-term evaluation. Panics if `x.len() != nvars`.
    pub fn eval(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.nvars, "evaluation point has wrong dimension");
        self.terms.iter().map(|(m, &c)| c * m.eval(x)).sum()
    }

    /// Partial derivative with respect to `x_k` (zero-based).
    pub fn derivative(&self, k: usize) -> Polynomial {
        let mut out = Polynomial::zero(self.nvars);
        for (m, &c) in &self.terms {
            let e = m.exponents()[k];
            if e == 0 {
                continue;
            }
            let mut exps = m.exponents().to_vec();
            exps[k] -= 1;
            out.add_term(Monomial::new(exps), c * e as f64);
        }
        out.prune();
        out
    }

    pub fn grad(&self) -> Vec<Polynomial> {
        (0..self.nvars).map(|k| self.derivative(k)).collect()
    }

    /// Directional derivative `sum_k f_k * dp/dx_k`.
    pub fn lie_derivative(&self, field: &[Polynomial]) -> Result<Polynomial, PolyError> {
        if field.len() != self.nvars {
            return Err(PolyError::DimensionMismatch {
                left: self.nvars,
                right: field.len(),
            });
        }
        let mut out = Polynomial::zero(self.nvars);
        for (k, fk) in field.iter().enumerate() {
            let d = self.derivative(k);
            if d.is_zero() {
                continue;
            }
            out = out.try_add(&d.try_mul(fk)?)?;
        }
        Ok(out)
    }

    /// Largest absolute coefficient difference against `other`.
    pub fn max_coeff_diff(&self, other: &Polynomial) -> f64 {
        let mut worst: f64 = 0.0;
        for (m, &c) in &self.terms {
            worst = worst.max((c - other.coeff(m)).abs());
        }
        for (m, &c) in &other.terms {
            if !self.terms.contains_key(m) {
                worst = worst.max(c.abs());
            }
        }
        worst
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.terms.values().fold(0.0, |a, c| a.max(c.abs()))
    }

    pub fn compile(&self) -> CompiledPoly {
        CompiledPoly::new(self)
    }
}

impl fmt::Display for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (idx, (m, &c)) in self.terms.iter().rev().enumerate() {
            let neg = c < 0.0;
            let mag = c.abs();
            if idx == 0 {
                if neg {
                    write!(f, "-")?;
                }
            } else if neg {
                write!(f, " - ")?;
            } else {
                write!(f, " + ")?;
            }
            if m.is_constant() {
                write!(f, "{}", fmt_coeff(mag))?;
            } else if mag == 1.0 {
                write!(f, "{}", m)?;
            } else {
                write!(f, "{}*{}", fmt_coeff(mag), m)?;
            }
        }
        Ok(())
    }
}

impl fmt::Debug for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Polynomial[{}]({})", self.nvars, self)
    }
}

/// Shortest round-trip decimal, switching to exponent form for very long
/// renderings.
pub(crate) fn fmt_coeff(c: f64) -> String {
    let plain = format!("{}", c);
    if plain.len() > 18 {
        format!("{:e}", c)
    } else {
        plain
    }
}

impl Add for &Polynomial {
    type Output = Polynomial;
    fn add(self, rhs: &Polynomial) -> Polynomial {
        self.try_add(rhs).expect("polynomial dimension mismatch")
    }
}

impl Sub for &Polynomial {
    type Output = Polynomial;
    fn sub(self, rhs: &Polynomial) -> Polynomial {
        self.try_sub(rhs).expect("polynomial dimension mismatch")
    }
}

impl Mul for &Polynomial {
    type Output = Polynomial;
    fn mul(self, rhs: &Polynomial) -> Polynomial {
        self.try_mul(rhs).expect("polynomial dimension mismatch")
    }
}

impl Neg for &Polynomial {
    type Output = Polynomial;
    fn neg(self) -> Polynomial {
        self.scale(-1.0)
    }
}
