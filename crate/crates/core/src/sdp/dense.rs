use nalgebra::DMatrix;

/// Pivot substituted for a collapsed one; it zeroes that direction in solves.
const HUGE_PIVOT: f64 = 1e100;

pub(crate) fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 1 {
        return m[(0, 0)];
    }
    m.clone()
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let k = 4 * c;
        acc[0] += a[k] * b[k];
        acc[1] += a[k + 1] * b[k + 1];
        acc[2] += a[k + 2] * b[k + 2];
        acc[3] += a[k + 3] * b[k + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for k in 4 * chunks..a.len() {
        s += a[k] * b[k];
    }
    s
}

/// Dense symmetric positive (semi)definite factorization `A = L L^T` on a
/// row-major lower triangle, with iterative refinement against the original.
pub(crate) struct SchurFactor {
    n: usize,
    l: Vec<f64>,
    a: Vec<f64>,
    pub collapsed: usize,
}

impl SchurFactor {
    /// `a` is row-major `n x n`; only the lower triangle is read.
    pub fn new(a: Vec<f64>, n: usize) -> Self {
        let mut l = a.clone();
        let mut collapsed = 0;
        for i in 0..n {
            let (head, tail) = l.split_at_mut(i * n);
            let row_i = &mut tail[..n];
            for j in 0..i {
                let row_j = &head[j * n..j * n + j + 1];
                let v = (row_i[j] - dot(&row_i[..j], &row_j[..j])) / row_j[j];
                row_i[j] = v;
            }
            let d = row_i[i] - dot(&row_i[..i], &row_i[..i]);
            row_i[i] = if d > 1e-14 * a[i * n + i].abs() && d > 0.0 {
                d.sqrt()
            } else {
                collapsed += 1;
                HUGE_PIVOT.sqrt()
            };
        }
        SchurFactor { n, l, a, collapsed }
    }

    fn solve_once(&self, rhs: &[f64]) -> Vec<f64> {
        let n = self.n;
        let l = &self.l;
        let mut z = rhs.to_vec();
        for i in 0..n {
            let s = dot(&l[i * n..i * n + i], &z[..i]);
            z[i] = (z[i] - s) / l[i * n + i];
        }
        for i in (0..n).rev() {
            z[i] /= l[i * n + i];
            let zi = z[i];
            for k in 0..i {
                z[k] -= l[i * n + k] * zi;
            }
        }
        z
    }

    fn multiply(&self, x: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut out = vec![0.0; n];
        for i in 0..n {
            let row = &self.a[i * n..i * n + i + 1];
            out[i] += dot(&row[..i], &x[..i]) + row[i] * x[i];
            for k in 0..i {
                out[k] += row[k] * x[i];
            }
        }
        out
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let mut x = self.solve_once(rhs);
        if self.collapsed == 0 {
            let ax = self.multiply(&x);
            let r: Vec<f64> = rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
            let dx = self.solve_once(&r);
            for (xi, d) in x.iter_mut().zip(dx) {
                *xi += d;
            }
        }
        x
    }
}

/// Largest `alpha` keeping `X + alpha dX` PSD, given the Cholesky factor of `X`.
/// Returns infinity when every step is allowed.
pub(crate) fn max_step(l: &DMatrix<f64>, d: &DMatrix<f64>) -> f64 {
    let t = l.solve_lower_triangular(d).expect("nonsingular factor");
    let w = l
        .solve_lower_triangular(&t.transpose())
        .expect("nonsingular factor");
    let w = (&w + w.transpose()) * 0.5;
    let lmin = min_eigenvalue(&w);
    if lmin >= 0.0 {
        f64::INFINITY
    } else {
        -1.0 / lmin
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn factor_and_solve() {
        // [[4, 2, 0], [2, 5, 1], [0, 1, 3]]
        let a = vec![4.0, 0.0, 0.0, 2.0, 5.0, 0.0, 0.0, 1.0, 3.0];
        let f = SchurFactor::new(a, 3);
        assert_eq!(f.collapsed, 0);
        let x = f.solve(&[6.0, 8.0, 4.0]);
        for (xi, e) in x.iter().zip([1.0, 1.0, 1.0]) {
            assert!((xi - e).abs() < 1e-12);
        }
    }

    #[test]
    fn singular_pivot_collapses() {
        let a = vec![1.0, 0.0, 1.0, 1.0];
        let f = SchurFactor::new(a, 2);
        assert_eq!(f.collapsed, 1);
        let x = f.solve(&[2.0, 2.0]);
        assert!((x[0] - 2.0).abs() < 1e-12 && x[1].abs() < 1e-30);
    }

    #[test]
    fn step_to_boundary() {
        let x = DMatrix::<f64>::identity(2, 2);
        let d = DMatrix::from_row_slice(2, 2, &[-2.0, 0.0, 0.0, 1.0]);
        let l = x.clone().cholesky().unwrap().l();
        assert!((max_step(&l, &d) - 0.5).abs() < 1e-12);
        assert!(max_step(&l, &DMatrix::identity(2, 2)).is_infinite());
    }
}
