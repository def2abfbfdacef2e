use crate::poly::{Monomial, Polynomial};
use nalgebra::DMatrix;

use super::SosError;

/// Monomial vector `Z` of a Gram representation `Z' Q Z`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MonomialBasis {
    nvars: usize,
    entries: Vec<Monomial>,
}

impl MonomialBasis {
    /// Sorts and deduplicates `entries`.
    pub fn new(nvars: usize, mut entries: Vec<Monomial>) -> Self {
        debug_assert!(entries.iter().all(|m| m.nvars() == nvars));
        entries.sort();
        entries.dedup();
        MonomialBasis { nvars, entries }
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn entries(&self) -> &[Monomial] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Expand `Z' Q Z`.
    pub fn gram_polynomial(&self, q: &DMatrix<f64>) -> Polynomial {
        let n = self.len();
        assert_eq!((q.nrows(), q.ncols()), (n, n), "Gram size must match basis");
        let mut terms = Vec::with_capacity(n * (n + 1) / 2);
        for k in 0..n {
            terms.push((self.entries[k].mul(&self.entries[k]), q[(k, k)]));
            for l in k + 1..n {
                let c = q[(k, l)] + q[(l, k)];
                terms.push((self.entries[k].mul(&self.entries[l]), c));
            }
        }
        Polynomial::from_terms(self.nvars, terms)
    }
}

/// Gram basis for an SOS polynomial whose terms have degree within
/// `[min_deg, max_deg]`: all monomials of degree `ceil(min/2) ..= floor(max/2)`.
pub fn monomial_basis(nvars: usize, min_deg: u32, max_deg: u32) -> Result<MonomialBasis, SosError> {
    if min_deg > max_deg {
        return Err(SosError::InvalidDegreeRange { min_deg, max_deg });
    }
    let lo = min_deg.div_ceil(2);
    let hi = max_deg / 2;
    let mut entries = Vec::new();
    for d in lo..=hi {
        entries.extend(Monomial::all_of_degree(nvars, d));
    }
    Ok(MonomialBasis::new(nvars, entries))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basis_examples() {
        let b = monomial_basis(2, 2, 2).unwrap();
        assert_eq!(b.entries(), &[Monomial::var(2, 1), Monomial::var(2, 0)]);
        assert_eq!(monomial_basis(2, 2, 6).unwrap().len(), 9);
        assert_eq!(monomial_basis(3, 2, 4).unwrap().len(), 9);
        assert_eq!(monomial_basis(3, 0, 4).unwrap().len(), 10);
        assert!(matches!(
            monomial_basis(2, 4, 2),
            Err(SosError::InvalidDegreeRange { .. })
        ));
    }

    #[test]
    fn enumeration_matches_binomial_count() {
        // number of monomials of degree <= d in n variables is C(n + d, d)
        fn binom(n: u64, k: u64) -> u64 {
            (1..=k).fold(1, |acc, i| acc * (n + 1 - i) / i)
        }
        for n in 1..=3usize {
            for d in 0..=5u32 {
                let all = monomial_basis(n, 0, 2 * d).unwrap().len() as u64;
                assert_eq!(all, binom(n as u64 + d as u64, d as u64));
            }
        }
    }

    #[test]
    fn gram_expansion() {
        let b = monomial_basis(2, 2, 2).unwrap();
        let id = DMatrix::<f64>::identity(2, 2);
        assert_eq!(b.gram_polynomial(&id), Polynomial::parse("x1^2 + x2^2", 2).unwrap());
        let ones = DMatrix::from_element(2, 2, 1.0);
        assert_eq!(
            b.gram_polynomial(&ones),
            Polynomial::parse("x1^2 + 2*x1*x2 + x2^2", 2).unwrap()
        );
    }
}
