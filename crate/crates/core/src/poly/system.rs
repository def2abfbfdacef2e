use super::{ParsePolyError, PolyError, Polynomial};

/// Equilibrium residual allowed at the origin.
const ORIGIN_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SystemError {
    #[error("system needs at least one state variable")]
    Empty,
    #[error("component f{index} has {found} variables, expected {expected}")]
    Dimension {
        index: usize,
        found: usize,
        expected: usize,
    },
    #[error("origin is not an equilibrium: f{index}(0) = {value}")]
    NotEquilibrium { index: usize, value: f64 },
    #[error("failed to parse f{index}: {source}")]
    Parse {
        index: usize,
        #[source]
        source: ParsePolyError,
    },
}

/// Polynomial vector field `x' = f(x)` with an equilibrium at the origin.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicalSystem {
    name: String,
    f: Vec<Polynomial>,
}

impl DynamicalSystem {
    pub fn new(name: impl Into<String>, f: Vec<Polynomial>) -> Result<Self, SystemError> {
        let n = f.len();
        if n == 0 {
            return Err(SystemError::Empty);
        }
        for (k, fk) in f.iter().enumerate() {
            if fk.nvars() != n {
                return Err(SystemError::Dimension {
                    index: k + 1,
                    found: fk.nvars(),
                    expected: n,
                });
            }
            let c = fk.constant_term();
            if c.abs() > ORIGIN_TOL {
                return Err(SystemError::NotEquilibrium {
                    index: k + 1,
                    value: c,
                });
            }
        }
        Ok(DynamicalSystem {
            name: name.into(),
            f,
        })
    }

    /// Build from one text polynomial per state component.
    pub fn parse<S: AsRef<str>>(name: impl Into<String>, rhs: &[S]) -> Result<Self, SystemError> {
        let n = rhs.len();
        let f = rhs
            .iter()
            .enumerate()
            .map(|(k, s)| {
                Polynomial::parse(s.as_ref(), n).map_err(|source| SystemError::Parse {
                    index: k + 1,
                    source,
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        DynamicalSystem::new(name, f)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn nvars(&self) -> usize {
        self.f.len()
    }

    pub fn field(&self) -> &[Polynomial] {
        &self.f
    }

    pub fn degree(&self) -> u32 {
        self.f.iter().map(Polynomial::degree).max().unwrap_or(0)
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        self.f.iter().map(|fk| fk.eval(x)).collect()
    }

    /// `dV/dx . f` for a scalar polynomial `v`.
    pub fn lie_derivative(&self, v: &Polynomial) -> Result<Polynomial, PolyError> {
        v.lie_derivative(&self.f)
    }

    pub fn compile(&self) -> CompiledSystem {
        CompiledSystem::new(self)
    }
}

/// Flat, allocation-free evaluator for a polynomial.
#[derive(Debug, Clone)]
pub struct CompiledPoly {
    nvars: usize,
    max_exp: usize,
    coeffs: Vec<f64>,
    exps: Vec<u8>,
}

impl CompiledPoly {
    pub fn new(p: &Polynomial) -> Self {
        let nvars = p.nvars();
        let mut coeffs = Vec::with_capacity(p.len());
        let mut exps = Vec::with_capacity(p.len() * nvars);
        let mut max_exp = 0usize;
        for (m, c) in p.terms() {
            coeffs.push(c);
            for &e in m.exponents() {
                let e = u8::try_from(e).expect("exponent too large for compiled evaluation");
                max_exp = max_exp.max(e as usize);
                exps.push(e);
            }
        }
        CompiledPoly {
            nvars,
            max_exp,
            coeffs,
            exps,
        }
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut pows = [[1.0f64; 16]; 4];
        if self.nvars <= 4 && self.max_exp < 16 {
            fill_powers(x, self.max_exp, &mut pows);
            self.eval_with(&pows)
        } else {
            self.coeffs
                .iter()
                .zip(self.exps.chunks(self.nvars.max(1)))
                .map(|(&c, e)| {
                    c * e
                        .iter()
                        .zip(x)
                        .map(|(&ek, &xk)| xk.powi(ek as i32))
                        .product::<f64>()
                })
                .sum()
        }
    }

    fn eval_with(&self, pows: &[[f64; 16]; 4]) -> f64 {
        let n = self.nvars;
        let mut acc = 0.0;
        for (t, &c) in self.coeffs.iter().enumerate() {
            let e = &self.exps[t * n..(t + 1) * n];
            let mut term = c;
            for k in 0..n {
                term *= pows[k][e[k] as usize];
            }
            acc += term;
        }
        acc
    }
}

fn fill_powers(x: &[f64], max_exp: usize, pows: &mut [[f64; 16]; 4]) {
    for (k, &xk) in x.iter().enumerate().take(4) {
        let row = &mut pows[k];
        row[0] = 1.0;
        for e in 1..=max_exp {
            row[e] = row[e - 1] * xk;
        }
    }
}

/// Compiled vector field for trajectory integration.
#[derive(Debug, Clone)]
pub struct CompiledSystem {
    components: Vec<CompiledPoly>,
    max_exp: usize,
}

impl CompiledSystem {
    pub fn new(sys: &DynamicalSystem) -> Self {
        let components: Vec<CompiledPoly> = sys.field().iter().map(CompiledPoly::new).collect();
        let max_exp = components.iter().map(|c| c.max_exp).max().unwrap_or(0);
        CompiledSystem {
            components,
            max_exp,
        }
    }

    pub fn nvars(&self) -> usize {
        self.components.len()
    }

    /// Writes `f(x)` into `out`.
    pub fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        if self.components.len() <= 4 && self.max_exp < 16 {
            let mut pows = [[1.0f64; 16]; 4];
            fill_powers(x, self.max_exp, &mut pows);
            for (o, c) in out.iter_mut().zip(&self.components) {
                *o = c.eval_with(&pows);
            }
        } else {
            for (o, c) in out.iter_mut().zip(&self.components) {
                *o = c.eval(x);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vdp() -> DynamicalSystem {
        DynamicalSystem::parse("vdp", &["-x2", "x1 + 5*x1^2*x2 - 5*x2"]).unwrap()
    }

    #[test]
    fn origin_is_equilibrium() {
        assert_eq!(vdp().eval(&[0.0, 0.0]), vec![0.0, 0.0]);
    }

    #[test]
    fn rejects_nonzero_origin() {
        let err = DynamicalSystem::parse("bad", &["x1 + 1", "x2"]).unwrap_err();
        assert!(matches!(err, SystemError::NotEquilibrium { index: 1, .. }));
    }

    #[test]
    fn rejects_dimension_mismatch() {
        let f = vec![Polynomial::var(2, 0), Polynomial::var(3, 1)];
        assert!(matches!(
            DynamicalSystem::new("bad", f),
            Err(SystemError::Dimension { index: 2, .. })
        ));
    }

    #[test]
    fn compiled_matches_direct() {
        let sys = vdp();
        let c = sys.compile();
        let mut out = [0.0; 2];
        for x in [[0.1, 0.2], [-1.3, 2.5], [3.0, -3.0]] {
            c.eval_into(&x, &mut out);
            let direct = sys.eval(&x);
            for k in 0..2 {
                assert!((out[k] - direct[k]).abs() <= 1e-12 * (1.0 + direct[k].abs()));
            }
        }
        let q = Polynomial::parse("2*x1^5*x2 - x2^3 + 0.5", 2).unwrap();
        assert!((q.compile().eval(&[1.1, -0.4]) - q.eval(&[1.1, -0.4])).abs() < 1e-12);
    }
}
