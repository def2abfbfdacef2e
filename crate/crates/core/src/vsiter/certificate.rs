use std::fmt::Write as _;

use nalgebra::DMatrix;

use crate::poly::{DynamicalSystem, Polynomial};
use crate::sdp::{SdpOptions, SdpStatus};
use crate::shapes::ShapeFunction;
use crate::sos::{SosExpression, SosProgram};

use super::steps::{trial_options, FixedShape};
use super::VsError;

const FORMAT_HEADER: &str = "roa-certificate 1";
/// Coefficient-identity residual accepted on replay, relative to the
/// constraint's largest coefficient.
const REPLAY_RESIDUAL: f64 = 1e-6;

/// `{V <= gamma}` with the multipliers proving it lies in the region of
/// attraction and contains every `{p_i <= beta_i}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    pub system: DynamicalSystem,
    pub v: Polynomial,
    pub gamma: f64,
    pub s0: Polynomial,
    pub shapes: Vec<FixedShape>,
    pub l1: Polynomial,
    pub l2: Polynomial,
    pub round_index: usize,
    pub iter_index: usize,
    /// `gamma` was feasible up to the doubling cap.
    pub global: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayItem {
    pub name: String,
    pub status: SdpStatus,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayReport {
    pub items: Vec<ReplayItem>,
}

impl ReplayReport {
    pub fn passed(&self) -> bool {
        self.items
            .iter()
            .all(|i| i.status == SdpStatus::Feasible && i.residual <= REPLAY_RESIDUAL)
    }

    pub fn max_residual(&self) -> f64 {
        self.items.iter().map(|i| i.residual).fold(0.0, f64::max)
    }
}

fn replay_sos(name: &str, p: &Polynomial, opts: &SdpOptions) -> Result<ReplayItem, VsError> {
    if p.is_zero() {
        return Ok(ReplayItem {
            name: name.to_string(),
            status: SdpStatus::Feasible,
            residual: 0.0,
        });
    }
    let mut prog = SosProgram::new(p.nvars());
    prog.require_sos(name, SosExpression::new(p.clone()))?;
    let (status, residual) = match prog.solve(opts) {
        Ok(sol) => {
            let r = sol.identity_residuals().first().copied().unwrap_or(f64::INFINITY);
            (sol.status(), r / p.max_abs_coeff().max(1.0))
        }
        Err(crate::sos::SosError::StructurallyInfeasible { .. }) => (SdpStatus::Infeasible, f64::INFINITY),
        Err(e) => return Err(e.into()),
    };
    Ok(ReplayItem {
        name: name.to_string(),
        status,
        residual,
    })
}

impl Certificate {
    pub fn nvars(&self) -> usize {
        self.v.nvars()
    }

    /// Whether `x` lies in the certified set `{V <= gamma}`.
    pub fn contains(&self, x: &[f64]) -> bool {
        self.v.eval(x) <= self.gamma
    }

    /// The constraint polynomials that must each be SOS.
    pub fn constraints(&self) -> Vec<(String, Polynomial)> {
        let n = self.nvars();
        let g = Polynomial::constant(n, self.gamma);
        let vdot = self.system.lie_derivative(&self.v).expect("dimensions checked");
        let mut out = vec![
            ("v_minus_l1".to_string(), &self.v - &self.l1),
            ("s0".to_string(), self.s0.clone()),
            (
                "decrease".to_string(),
                &(-&(&vdot + &self.l2)) + &(&(&self.v - &g) * &self.s0),
            ),
        ];
        for (i, fs) in self.shapes.iter().enumerate() {
            let p = &fs.shape.as_polynomial() - &Polynomial::constant(n, fs.beta);
            out.push((format!("s{}", i + 1), fs.s.clone()));
            out.push((format!("shape{}", i + 1), &(&g - &self.v) + &(&p * &fs.s)));
        }
        out
    }

    /// Re-derives SOS membership of every constraint from the stored
    /// polynomials alone.
    pub fn replay(&self, sdp: &SdpOptions) -> Result<ReplayReport, VsError> {
        let opts = trial_options(sdp);
        let items = self
            .constraints()
            .iter()
            .map(|(name, p)| replay_sos(name, p, &opts))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(ReplayReport { items })
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let n = self.nvars();
        let _ = writeln!(s, "{FORMAT_HEADER}");
        let _ = writeln!(s, "system {}", self.system.name());
        let _ = writeln!(s, "nvars {n}");
        for (k, fk) in self.system.field().iter().enumerate() {
            let _ = writeln!(s, "f{} {}", k + 1, fk);
        }
        let _ = writeln!(s, "round {}", self.round_index);
        let _ = writeln!(s, "iteration {}", self.iter_index);
        let _ = writeln!(s, "global {}", self.global);
        let _ = writeln!(s, "gamma {}", self.gamma);
        let _ = writeln!(s, "V {}", self.v);
        let _ = writeln!(s, "l1 {}", self.l1);
        let _ = writeln!(s, "l2 {}", self.l2);
        let _ = writeln!(s, "s0 {}", self.s0);
        let _ = writeln!(s, "shapes {}", self.shapes.len());
        for (i, fs) in self.shapes.iter().enumerate() {
            let m = fs.shape.matrix();
            let nrow: Vec<String> = (0..n * n).map(|k| m[(k / n, k % n)].to_string()).collect();
            let center: Vec<String> = fs.shape.center().iter().map(|c| c.to_string()).collect();
            let _ = writeln!(s, "shape {}", i + 1);
            let _ = writeln!(s, "N {}", nrow.join(" "));
            let _ = writeln!(s, "center {}", center.join(" "));
            let _ = writeln!(s, "beta {}", fs.beta);
            let _ = writeln!(s, "s {}", fs.s);
        }
        let _ = writeln!(s, "end");
        s
    }

    pub fn from_text(text: &str) -> Result<Certificate, CertificateError> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(k, l)| (k + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let (ln, head) = lines.next().ok_or(CertificateError::Empty)?;
        if head != FORMAT_HEADER {
            return Err(CertificateError::syntax(ln, format!("expected header {FORMAT_HEADER:?}")));
        }
        let mut next = |key: &str| -> Result<(usize, String), CertificateError> {
            let (ln, l) = lines.next().ok_or(CertificateError::Truncated)?;
            let rest = l
                .strip_prefix(key)
                .filter(|r| r.is_empty() || r.starts_with(' '))
                .ok_or_else(|| CertificateError::syntax(ln, format!("expected {key:?}")))?;
            Ok((ln, rest.trim().to_string()))
        };
        fn num<T: std::str::FromStr>(ln: usize, s: &str) -> Result<T, CertificateError> {
            s.parse().map_err(|_| CertificateError::syntax(ln, format!("bad number {s:?}")))
        }
        fn poly(ln: usize, s: &str, n: usize) -> Result<Polynomial, CertificateError> {
            Polynomial::parse(s, n).map_err(|e| CertificateError::syntax(ln, e.to_string()))
        }
        fn floats(ln: usize, s: &str, count: usize) -> Result<Vec<f64>, CertificateError> {
            let v: Vec<f64> = s.split_whitespace().map(|t| num(ln, t)).collect::<Result<_, _>>()?;
            if v.len() != count {
                return Err(CertificateError::syntax(ln, format!("expected {count} numbers")));
            }
            Ok(v)
        }

        let (_, name) = next("system")?;
        let (ln, nv) = next("nvars")?;
        let n: usize = num(ln, &nv)?;
        let mut field = Vec::with_capacity(n);
        for k in 0..n {
            let (ln, fk) = next(&format!("f{}", k + 1))?;
            field.push(poly(ln, &fk, n)?);
        }
        let system = DynamicalSystem::new(name, field).map_err(|e| CertificateError::syntax(ln, e.to_string()))?;
        let (ln, r) = next("round")?;
        let round_index = num(ln, &r)?;
        let (ln, it) = next("iteration")?;
        let iter_index = num(ln, &it)?;
        let (ln, gl) = next("global")?;
        let global = num(ln, &gl)?;
        let (ln, g) = next("gamma")?;
        let gamma = num(ln, &g)?;
        let (ln, v) = next("V")?;
        let v = poly(ln, &v, n)?;
        let (ln, l1) = next("l1")?;
        let l1 = poly(ln, &l1, n)?;
        let (ln, l2) = next("l2")?;
        let l2 = poly(ln, &l2, n)?;
        let (ln, s0) = next("s0")?;
        let s0 = poly(ln, &s0, n)?;
        let (ln, k) = next("shapes")?;
        let k: usize = num(ln, &k)?;
        let mut shapes = Vec::with_capacity(k);
        for i in 0..k {
            let (ln, idx) = next("shape")?;
            if num::<usize>(ln, &idx)? != i + 1 {
                return Err(CertificateError::syntax(ln, "shapes out of order"));
            }
            let (ln, m) = next("N")?;
            let m = DMatrix::from_row_slice(n, n, &floats(ln, &m, n * n)?);
            let (ln2, c) = next("center")?;
            let c = floats(ln2, &c, n)?;
            let shape = ShapeFunction::new(m, c).map_err(|e| CertificateError::syntax(ln, e.to_string()))?;
            let (ln, b) = next("beta")?;
            let beta = num(ln, &b)?;
            let (ln, s) = next("s")?;
            let s = poly(ln, &s, n)?;
            shapes.push(FixedShape { shape, beta, s });
        }
        next("end")?;
        Ok(Certificate {
            system,
            v,
            gamma,
            s0,
            shapes,
            l1,
            l2,
            round_index,
            iter_index,
            global,
        })
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CertificateError {
    #[error("empty certificate")]
    Empty,
    #[error("certificate ends early")]
    Truncated,
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
}

impl CertificateError {
    fn syntax(line: usize, message: impl Into<String>) -> Self {
        CertificateError::Syntax {
            line,
            message: message.into(),
        }
    }
}
