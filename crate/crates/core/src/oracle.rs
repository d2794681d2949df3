//! Brute-force ground truth, deliberately independent of the production
//! half-space machinery: exact attainable sets for affine maps via polygon
//! clipping, behavior enumeration by trajectory sampling, and
//! finite-difference derivative checks.

use nalgebra::{DMatrix, DVector};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use std::collections::HashSet;

use crate::dynamics::{DiscreteSystem, InputSymbol, SystemModel};
use crate::error::{Error, Result};
use crate::geometry::{clip_polygon, ConvexPolytope};
use crate::quantizer::{CellIdx, Quantizer};

const CLIP_EPS: f64 = 1e-12;

/// Affine step x -> A_u x + b_u with one matrix per input symbol.
pub struct LinearSystem {
    pub mats: Vec<DMatrix<f64>>,
    pub offs: Vec<DVector<f64>>,
}

impl LinearSystem {
    pub fn new(mats: Vec<DMatrix<f64>>, offs: Vec<DVector<f64>>) -> Result<Self> {
        if mats.is_empty() || mats.len() != offs.len() {
            return Err(Error::Config("need one (A, b) per input".into()));
        }
        for a in &mats {
            if a.clone().lu().determinant().abs() < 1e-12 {
                return Err(Error::Config("singular step matrix".into()));
            }
        }
        Ok(LinearSystem { mats, offs })
    }

    pub fn apply(&self, u: usize, x: &[f64]) -> Vec<f64> {
        let v = &self.mats[u] * DVector::from_column_slice(x) + &self.offs[u];
        v.as_slice().to_vec()
    }

    /// Packages the affine maps as a discrete-time model for the production
    /// pipeline, so oracle and abstraction run the same instance.
    pub fn to_model(&self) -> SystemModel {
        let mats = self.mats.clone();
        let offs = self.offs.clone();
        let jac_mats = self.mats.clone();
        let n = self.mats[0].nrows();
        SystemModel::Discrete(DiscreteSystem {
            n,
            inputs: (0..self.mats.len())
                .map(|u| InputSymbol::scalar(u as f64))
                .collect(),
            step: Box::new(move |x, u| {
                let u = u[0] as usize;
                let v = &mats[u] * DVector::from_column_slice(x) + &offs[u];
                v.as_slice().to_vec()
            }),
            jacobian: Box::new(move |_, u| jac_mats[u[0] as usize].clone()),
        })
    }
}

fn verts_2d(p: &ConvexPolytope) -> Vec<[f64; 2]> {
    p.vertices.iter().map(|v| [v[0], v[1]]).collect()
}

fn clip_to_cell(mut poly: Vec<[f64; 2]>, cell: &ConvexPolytope) -> Option<Vec<[f64; 2]>> {
    for f in &cell.facets {
        let r = f.as_row();
        poly = clip_polygon(&poly, [r.a[0], r.a[1]], r.b, CLIP_EPS);
        if poly.len() < 3 {
            return None;
        }
    }
    Some(poly)
}

fn affine_image(sys: &LinearSystem, u: usize, poly: &[[f64; 2]]) -> Vec<[f64; 2]> {
    poly.iter()
        .map(|v| {
            let y = sys.apply(u, v);
            [y[0], y[1]]
        })
        .collect()
}

/// Exact attainable set of a window by the forward recursion
/// M_k = cell_k intersect image(M_{k-1}); None means the window is
/// infeasible.
pub fn exact_window_set(
    sys: &LinearSystem,
    cells: &[ConvexPolytope],
    window_cells: &[usize],
    inputs: &[usize],
) -> Result<Option<ConvexPolytope>> {
    if window_cells.len() != inputs.len() + 1 || window_cells.is_empty() {
        return Err(Error::Config("window needs k+1 cells for k inputs".into()));
    }
    let mut m = verts_2d(&cells[window_cells[0]]);
    for (i, &u) in inputs.iter().enumerate() {
        let img = affine_image(sys, u, &m);
        match clip_to_cell(img, &cells[window_cells[i + 1]]) {
            Some(next) => m = next,
            None => return Ok(None),
        }
    }
    Ok(ConvexPolytope::from_vertices_2d(&m).ok())
}

/// Same set by the intersection form: M_k is the intersection over tau of the
/// forward images of cell_{k-tau} under the input suffix. Independent of the
/// recursion above; tests require exact agreement.
pub fn exact_window_set_intersection(
    sys: &LinearSystem,
    cells: &[ConvexPolytope],
    window_cells: &[usize],
    inputs: &[usize],
) -> Result<Option<ConvexPolytope>> {
    if window_cells.len() != inputs.len() + 1 || window_cells.is_empty() {
        return Err(Error::Config("window needs k+1 cells for k inputs".into()));
    }
    let k = inputs.len();
    let mut m = verts_2d(&cells[window_cells[k]]);
    for tau in 1..=k {
        // image of cell_{k-tau} under u_{k-tau} .. u_{k-1}
        let mut img = verts_2d(&cells[window_cells[k - tau]]);
        for &u in &inputs[k - tau..] {
            img = affine_image(sys, u, &img);
        }
        let hull = ConvexPolytope::from_vertices_2d(&img)
            .map_err(|e| Error::BadGeometry(format!("degenerate image: {e}")))?;
        match clip_to_cell(m, &hull) {
            Some(next) => m = next,
            None => return Ok(None),
        }
    }
    Ok(ConvexPolytope::from_vertices_2d(&m).ok())
}

pub type Window = (Vec<CellIdx>, Vec<usize>);

/// Every cell word observed along simulated trajectories: a dense grid plus
/// `n_random` extra initial points, all input words of length `n_steps`, and
/// all quantizer choices expanded at cell boundaries. Words whose trajectory
/// leaves the covered region are dropped.
pub fn sampled_behavior(
    sys: &SystemModel,
    q: &Quantizer,
    n_steps: usize,
    grid_per_axis: usize,
    n_random: usize,
    seed: u64,
) -> Result<HashSet<Window>> {
    let mut lo = vec![f64::INFINITY; 2];
    let mut hi = vec![f64::NEG_INFINITY; 2];
    for c in &q.cells {
        for v in &c.poly.vertices {
            for d in 0..2 {
                lo[d] = lo[d].min(v[d]);
                hi[d] = hi[d].max(v[d]);
            }
        }
    }
    let mut inits: Vec<Vec<f64>> = Vec::new();
    for i in 0..grid_per_axis {
        for j in 0..grid_per_axis {
            let fx = (i as f64 + 0.5) / grid_per_axis as f64;
            let fy = (j as f64 + 0.5) / grid_per_axis as f64;
            inits.push(vec![lo[0] + fx * (hi[0] - lo[0]), lo[1] + fy * (hi[1] - lo[1])]);
        }
    }
    let mut rng = StdRng::seed_from_u64(seed);
    for _ in 0..n_random {
        inits.push(vec![
            rng.gen_range(lo[0]..hi[0]),
            rng.gen_range(lo[1]..hi[1]),
        ]);
    }

    let m = sys.inputs().len();
    let mut words: Vec<Vec<usize>> = vec![Vec::new()];
    for _ in 0..n_steps {
        words = words
            .iter()
            .flat_map(|w| {
                (0..m).map(move |u| {
                    let mut w2 = w.clone();
                    w2.push(u);
                    w2
                })
            })
            .collect();
    }

    let mut out: HashSet<Window> = HashSet::new();
    for x0 in &inits {
        for word in &words {
            let mut choices: Vec<Vec<CellIdx>> = Vec::with_capacity(n_steps + 1);
            let mut x = x0.clone();
            let mut complete = true;
            let cs = q.locate(&x);
            if cs.is_empty() {
                continue;
            }
            choices.push(cs);
            for &u in word {
                x = sys.step(&x, u)?;
                let cs = q.locate(&x);
                if cs.is_empty() {
                    complete = false;
                    break;
                }
                choices.push(cs);
            }
            if !complete {
                continue;
            }
            // cartesian product of the locate choices along the trajectory
            let mut acc: Vec<Vec<CellIdx>> = vec![Vec::new()];
            for step in &choices {
                acc = acc
                    .iter()
                    .flat_map(|pfx| {
                        step.iter().map(move |&c| {
                            let mut p = pfx.clone();
                            p.push(c);
                            p
                        })
                    })
                    .collect();
            }
            for cells in acc {
                out.insert((cells, word.clone()));
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct FdReport {
    pub pass: bool,
    pub worst_rel: f64,
    pub worst_at: Vec<f64>,
}

/// Central-difference check of the supplied state derivative (the step map's
/// Jacobian for discrete systems, the vector field's for sampled ones) at
/// random points of the box [lo, hi].
pub fn fd_jacobian_check(
    sys: &SystemModel,
    lo: &[f64],
    hi: &[f64],
    n_probes: usize,
    seed: u64,
) -> FdReport {
    let n = sys.n();
    let mut rng = StdRng::seed_from_u64(seed);
    let mut report = FdReport {
        pass: true,
        worst_rel: 0.0,
        worst_at: vec![],
    };
    let eval = |x: &[f64], u: usize| -> Vec<f64> {
        match sys {
            SystemModel::Discrete(s) => (s.step)(x, &s.inputs[u].value),
            SystemModel::Sampled(s) => {
                let mut out = vec![0.0; n];
                (s.rhs)(x, &s.inputs[u].value, &mut out);
                out
            }
        }
    };
    let jac = |x: &[f64], u: usize| -> DMatrix<f64> {
        match sys {
            SystemModel::Discrete(s) => (s.jacobian)(x, &s.inputs[u].value),
            SystemModel::Sampled(s) => (s.rhs_jac)(x, &s.inputs[u].value),
        }
    };
    for _ in 0..n_probes {
        let x: Vec<f64> = (0..n).map(|d| rng.gen_range(lo[d]..hi[d])).collect();
        for u in 0..sys.inputs().len() {
            let j = jac(&x, u);
            let mut fd = DMatrix::zeros(n, n);
            for d in 0..n {
                let h = 1e-6 * (1.0 + x[d].abs());
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[d] += h;
                xm[d] -= h;
                let fp = eval(&xp, u);
                let fm = eval(&xm, u);
                for r in 0..n {
                    fd[(r, d)] = (fp[r] - fm[r]) / (2.0 * h);
                }
            }
            let rel = (&fd - &j).norm() / j.norm().max(1.0);
            if rel > report.worst_rel {
                report.worst_rel = rel;
                report.worst_at = x.clone();
            }
        }
    }
    report.pass = report.worst_rel <= 1e-5;
    report
}
