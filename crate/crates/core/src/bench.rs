//! The four example systems with their published run configurations.

use nalgebra::{DMatrix, DVector};

use crate::poly::DynamicalSystem;
use crate::shapes::{cuboid_angles, RaySpec};
use crate::verify::StateBox;
use crate::vsiter::{InitialV, IterationConfig, Placement, RoundConfig, ShapeSpec};

/// Shape centers sit at this fraction of the ray's first level-set crossing.
pub const SIGMA: f64 = 0.8;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BenchError {
    #[error("unknown benchmark '{0}' (expected one of: vdp, ex2, ex3, ex4)")]
    Unknown(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Equilibrium {
    pub point: Vec<f64>,
    pub label: &'static str,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PresetNotes {
    pub equilibria: Vec<Equilibrium>,
    /// Points no sound estimate may contain.
    pub excluded: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkPreset {
    pub name: &'static str,
    pub summary: &'static str,
    pub system: DynamicalSystem,
    pub config: IterationConfig,
    pub rounds: Vec<RoundConfig>,
    pub bounds: StateBox,
    pub notes: PresetNotes,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PresetSummary {
    pub name: &'static str,
    pub summary: &'static str,
    pub nvars: usize,
    pub rounds: usize,
    pub shapes_per_round: Vec<usize>,
}

pub const NAMES: [&str; 4] = ["vdp", "ex2", "ex3", "ex4"];

fn diag(d: &[f64]) -> DMatrix<f64> {
    DMatrix::from_diagonal(&DVector::from_row_slice(d))
}

fn sym2(a: f64, b: f64, c: f64) -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[a, b, b, c])
}

fn ray(ray: RaySpec, n: DMatrix<f64>) -> ShapeSpec {
    ShapeSpec {
        n,
        placement: Placement::Ray { ray, sigma: SIGMA },
    }
}

fn planar(theta_deg: f64, n: DMatrix<f64>) -> ShapeSpec {
    ray(RaySpec::Planar { theta_deg }, n)
}

fn round(k: usize, shapes: Vec<ShapeSpec>) -> RoundConfig {
    RoundConfig {
        initial_v: if k == 0 {
            InitialV::LyapunovEquation
        } else {
            InitialV::Previous
        },
        shapes,
    }
}

fn system(name: &str, rhs: &[&str]) -> DynamicalSystem {
    DynamicalSystem::parse(name, rhs).expect("preset dynamics parse")
}

fn boxed(lo: &[f64], hi: &[f64]) -> StateBox {
    StateBox::new(lo.to_vec(), hi.to_vec()).expect("preset box")
}

fn origin(n: usize) -> Equilibrium {
    Equilibrium {
        point: vec![0.0; n],
        label: "stable node (estimated)",
    }
}

fn vdp() -> BenchmarkPreset {
    let n = sym2(1.0, 0.0, 0.5);
    let rounds = (0..3)
        .map(|k| round(k, [60.0, 209.0, 260.0].iter().map(|&t| planar(t, n.clone())).collect()))
        .collect();
    BenchmarkPreset {
        name: "vdp",
        summary: "reversed Van der Pol oscillator, bounded ROA inside the limit cycle",
        system: system("vdp", &["-x2", "x1 + 5*x2*(x1^2 - 1)"]),
        config: IterationConfig::new(2),
        rounds,
        bounds: boxed(&[-3.0, -3.0], &[3.0, 3.0]),
        notes: PresetNotes {
            equilibria: vec![origin(2)],
            excluded: vec![],
        },
    }
}

fn ex2() -> BenchmarkPreset {
    let a = sym2(5.0, 0.0, 0.3);
    let b = sym2(0.5, 0.0, 1.0);
    let thetas = [132.0, 183.0, 234.0];
    let mats = [[&a, &a, &a], [&b, &b, &b], [&b, &a, &b]];
    let rounds = mats
        .iter()
        .enumerate()
        .map(|(k, ms)| round(k, thetas.iter().zip(ms).map(|(&t, &m)| planar(t, m.clone())).collect()))
        .collect();
    BenchmarkPreset {
        name: "ex2",
        summary: "two stable nodes separated by a saddle at (0.5, 0), unbounded ROA",
        system: system("ex2", &["-4*x1^3 + 6*x1^2 - 2*x1", "-2*x2"]),
        config: IterationConfig::new(2),
        rounds,
        bounds: boxed(&[-4.0, -3.0], &[2.0, 3.0]),
        notes: PresetNotes {
            equilibria: vec![
                origin(2),
                Equilibrium {
                    point: vec![0.5, 0.0],
                    label: "saddle",
                },
                Equilibrium {
                    point: vec![1.0, 0.0],
                    label: "stable node",
                },
            ],
            excluded: vec![vec![0.5, 0.0], vec![1.0, 0.0]],
        },
    }
}

/// Saddle of the third example as printed, before refinement.
pub const EX3_SADDLE_PRINTED: [f64; 2] = [1.45, 18.17];

fn ex3() -> BenchmarkPreset {
    let sys = system("ex3", &["-50*x1 - 16*x2 + 13.8*x1*x2", "13*x1 - 9*x2 + 5.5*x1*x2"]);
    let saddle = refine_equilibrium(&sys, &EX3_SADDLE_PRINTED).expect("saddle refinement converges");
    let rounds = vec![
        round(
            0,
            vec![
                planar(183.0, sym2(15.0, 0.0, 0.3)),
                planar(183.0, sym2(14.47, 18.55, 26.53)),
                planar(285.0, sym2(0.5, 0.0, 12.0)),
            ],
        ),
        round(1, vec![planar(178.0, sym2(1.0, 0.0, 1.0)), planar(236.0, sym2(0.3, 0.0, 1.0))]),
    ];
    BenchmarkPreset {
        name: "ex3",
        summary: "stable node with a saddle near (1.45, 18.17), non-symmetric ROA",
        system: sys,
        config: IterationConfig::new(2),
        rounds,
        bounds: boxed(&[-8.0, -25.0], &[2.0, 20.0]),
        notes: PresetNotes {
            equilibria: vec![
                origin(2),
                Equilibrium {
                    point: saddle.clone(),
                    label: "saddle",
                },
            ],
            excluded: vec![saddle],
        },
    }
}

fn ex4() -> BenchmarkPreset {
    let n = diag(&[1.0, 0.5, 0.5]);
    let cuboid = || cuboid_angles().into_iter().map(|r| ray(r, n.clone())).collect::<Vec<_>>();
    let rounds = vec![
        round(
            0,
            vec![ShapeSpec {
                n: n.clone(),
                placement: Placement::Origin,
            }],
        ),
        round(1, cuboid()),
        round(2, cuboid()),
    ];
    BenchmarkPreset {
        name: "ex4",
        summary: "third-order system with three unstable equilibria besides the origin",
        system: system(
            "ex4",
            &[
                "x2 + x3^2",
                "x3 - x1^2 - x1*(x1 - x1^3/6)",
                "-x1 - 2*x2 - x3 + x2^3 + (2/3*x3^3 + 2/5*x3^5)/10",
            ],
        ),
        config: IterationConfig::new(3),
        rounds,
        bounds: StateBox::cube(3, 4.0).expect("preset box"),
        notes: PresetNotes {
            equilibria: vec![origin(3)],
            excluded: vec![],
        },
    }
}

pub fn get(name: &str) -> Result<BenchmarkPreset, BenchError> {
    match name {
        "vdp" => Ok(vdp()),
        "ex2" => Ok(ex2()),
        "ex3" => Ok(ex3()),
        "ex4" => Ok(ex4()),
        _ => Err(BenchError::Unknown(name.to_string())),
    }
}

pub fn list() -> Vec<PresetSummary> {
    NAMES
        .iter()
        .map(|name| {
            let p = get(name).expect("listed preset");
            PresetSummary {
                name: p.name,
                summary: p.summary,
                nvars: p.system.nvars(),
                rounds: p.rounds.len(),
                shapes_per_round: p.rounds.iter().map(|r| r.shapes.len()).collect(),
            }
        })
        .collect()
}

/// Jacobian of the vector field at `x`, row `i` holding the partials of `f_i`.
pub fn jacobian(sys: &DynamicalSystem, x: &[f64]) -> DMatrix<f64> {
    let n = sys.nvars();
    DMatrix::from_fn(n, n, |i, j| sys.field()[i].derivative(j).eval(x))
}

/// Newton iteration from `x0` to a root of the vector field.
pub fn refine_equilibrium(sys: &DynamicalSystem, x0: &[f64]) -> Option<Vec<f64>> {
    let mut x = DVector::from_row_slice(x0);
    for _ in 0..50 {
        let f = DVector::from_vec(sys.eval(x.as_slice()));
        if f.amax() <= 1e-13 * (1.0 + x.amax()) {
            return Some(x.as_slice().to_vec());
        }
        let step = jacobian(sys, x.as_slice()).lu().solve(&f)?;
        x -= step;
        if !x.iter().all(|v| v.is_finite()) {
            return None;
        }
    }
    let f = DVector::from_vec(sys.eval(x.as_slice()));
    (f.amax() <= 1e-10).then(|| x.as_slice().to_vec())
}
