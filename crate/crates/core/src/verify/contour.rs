use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::poly::Polynomial;

use super::{StateBox, VerifyError};

#[derive(Debug, Clone, PartialEq)]
pub struct Polyline {
    pub points: Vec<[f64; 2]>,
    /// Closed polylines repeat their first point at the end.
    pub closed: bool,
}

/// Edge of the vertex grid: `(vertical, i, j)` starts at vertex `(i, j)`.
type EdgeId = (bool, usize, usize);

/// Contour `{V = gamma}` on a `resolution x resolution` vertex grid, as
/// ordered polylines. Saddle cells are split by the sign at the cell center.
pub fn marching_squares(
    v: &Polynomial,
    gamma: f64,
    bounds: &StateBox,
    resolution: usize,
) -> Result<Vec<Polyline>, VerifyError> {
    if v.nvars() != 2 || bounds.nvars() != 2 {
        return Err(VerifyError::NotPlanar(v.nvars().max(bounds.nvars())));
    }
    if resolution < 2 {
        return Err(VerifyError::Resolution(resolution));
    }
    let r = resolution;
    let (lo, hi) = (bounds.lo(), bounds.hi());
    let hx = (hi[0] - lo[0]) / (r - 1) as f64;
    let hy = (hi[1] - lo[1]) / (r - 1) as f64;
    let coord = |i: usize, j: usize| [lo[0] + i as f64 * hx, lo[1] + j as f64 * hy];
    let vc = v.compile();
    let f: Vec<f64> = (0..r * r).map(|k| vc.eval(&coord(k % r, k / r)) - gamma).collect();
    let at = |i: usize, j: usize| f[j * r + i];

    let mut links: BTreeMap<EdgeId, Vec<EdgeId>> = BTreeMap::new();
    let mut link = |a: EdgeId, b: EdgeId| {
        links.entry(a).or_default().push(b);
        links.entry(b).or_default().push(a);
    };
    for j in 0..r - 1 {
        for i in 0..r - 1 {
            let fa = at(i, j);
            let fb = at(i + 1, j);
            let fc = at(i + 1, j + 1);
            let fd = at(i, j + 1);
            let inside = [fa <= 0.0, fb <= 0.0, fc <= 0.0, fd <= 0.0];
            let bottom = (false, i, j);
            let right = (true, i + 1, j);
            let top = (false, i, j + 1);
            let left = (true, i, j);
            let mut crossed = Vec::with_capacity(4);
            if inside[0] != inside[1] {
                crossed.push(bottom);
            }
            if inside[1] != inside[2] {
                crossed.push(right);
            }
            if inside[3] != inside[2] {
                crossed.push(top);
            }
            if inside[0] != inside[3] {
                crossed.push(left);
            }
            match crossed.len() {
                2 => link(crossed[0], crossed[1]),
                4 => {
                    let center_inside = (fa + fb + fc + fd) / 4.0 <= 0.0;
                    if center_inside == inside[0] {
                        link(bottom, right);
                        link(top, left);
                    } else {
                        link(bottom, left);
                        link(right, top);
                    }
                }
                _ => {}
            }
        }
    }

    let point = |e: EdgeId| -> [f64; 2] {
        let (vertical, i, j) = e;
        let (i2, j2) = if vertical { (i, j + 1) } else { (i + 1, j) };
        let (f0, f1) = (at(i, j), at(i2, j2));
        let t = f0 / (f0 - f1);
        let p0 = coord(i, j);
        let p1 = coord(i2, j2);
        [p0[0] + t * (p1[0] - p0[0]), p0[1] + t * (p1[1] - p0[1])]
    };

    let mut used: BTreeMap<EdgeId, bool> = links.keys().map(|&k| (k, false)).collect();
    let mut out = Vec::new();
    let walk = |start: EdgeId, used: &mut BTreeMap<EdgeId, bool>| -> (Vec<EdgeId>, bool) {
        let mut path = vec![start];
        used.insert(start, true);
        let mut cur = start;
        loop {
            let next = links[&cur].iter().copied().find(|n| !used[n]);
            match next {
                Some(n) => {
                    used.insert(n, true);
                    path.push(n);
                    cur = n;
                }
                None => {
                    let closed = path.len() > 2 && links[&cur].contains(&start);
                    return (path, closed);
                }
            }
        }
    };
    // open ends first so every open polyline is traversed end to end
    let ends: Vec<EdgeId> = links.iter().filter(|(_, n)| n.len() == 1).map(|(&k, _)| k).collect();
    for e in ends {
        if !used[&e] {
            let (path, _) = walk(e, &mut used);
            out.push(Polyline {
                points: path.into_iter().map(point).collect(),
                closed: false,
            });
        }
    }
    let keys: Vec<EdgeId> = links.keys().copied().collect();
    for e in keys {
        if !used[&e] {
            let (path, closed) = walk(e, &mut used);
            let mut points: Vec<[f64; 2]> = path.into_iter().map(point).collect();
            if closed {
                points.push(points[0]);
            }
            out.push(Polyline { points, closed });
        }
    }
    Ok(out)
}

/// Rows `polyline,x1,x2`, numbering polylines from 1.
pub fn polylines_csv(lines: &[Polyline]) -> String {
    let mut s = String::from("polyline,x1,x2\n");
    for (k, l) in lines.iter().enumerate() {
        for p in &l.points {
            let _ = writeln!(s, "{},{},{}", k + 1, p[0], p[1]);
        }
    }
    s
}

/// Centers of the cells of a `resolution^3` vertex grid whose corner values
/// bracket `gamma`.
pub fn straddling_cells(
    v: &Polynomial,
    gamma: f64,
    bounds: &StateBox,
    resolution: usize,
) -> Result<Vec<[f64; 3]>, VerifyError> {
    if v.nvars() != 3 || bounds.nvars() != 3 {
        return Err(VerifyError::NotSpatial(v.nvars().max(bounds.nvars())));
    }
    if resolution < 2 {
        return Err(VerifyError::Resolution(resolution));
    }
    let r = resolution;
    let (lo, hi) = (bounds.lo(), bounds.hi());
    let h: Vec<f64> = (0..3).map(|k| (hi[k] - lo[k]) / (r - 1) as f64).collect();
    let vc = v.compile();
    let idx = |i: usize, j: usize, k: usize| (k * r + j) * r + i;
    let mut f = vec![0.0; r * r * r];
    for k in 0..r {
        for j in 0..r {
            for i in 0..r {
                let x = [lo[0] + i as f64 * h[0], lo[1] + j as f64 * h[1], lo[2] + k as f64 * h[2]];
                f[idx(i, j, k)] = vc.eval(&x) - gamma;
            }
        }
    }
    let mut out = Vec::new();
    for k in 0..r - 1 {
        for j in 0..r - 1 {
            for i in 0..r - 1 {
                let mut below = false;
                let mut above = false;
                for c in 0..8 {
                    let val = f[idx(i + (c & 1), j + ((c >> 1) & 1), k + ((c >> 2) & 1))];
                    below |= val <= 0.0;
                    above |= val > 0.0;
                }
                if below && above {
                    out.push([
                        lo[0] + (i as f64 + 0.5) * h[0],
                        lo[1] + (j as f64 + 0.5) * h[1],
                        lo[2] + (k as f64 + 0.5) * h[2],
                    ]);
                }
            }
        }
    }
    Ok(out)
}
