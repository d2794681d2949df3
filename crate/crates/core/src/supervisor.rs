//! Worst-case reach-while-avoid synthesis on the abstraction automaton.
//! The automaton induces an AND-OR graph: the controller picks the input,
//! the plant (and the quantizer's boundary nondeterminism) picks the
//! successor window. Optimal values come from a Dijkstra sweep with a bucket
//! queue, since all edge costs are one sample period.

use crate::abstraction::Abstraction;
use crate::dynamics::SystemModel;
use crate::error::{Error, Result};
use crate::quantizer::{CellIdx, Quantizer};

pub const INF: u32 = u32::MAX;
const NO_INPUT: u8 = u8::MAX;

pub struct SynthesisProblem<'a> {
    pub abs: &'a Abstraction,
    pub q: &'a Quantizer,
    pub start: Vec<CellIdx>,
    /// Per cell index: newest-cell membership in the target region Z.
    pub target: Vec<bool>,
}

impl<'a> SynthesisProblem<'a> {
    pub fn new(
        abs: &'a Abstraction,
        q: &'a Quantizer,
        start: Vec<CellIdx>,
        target: Vec<bool>,
    ) -> Result<Self> {
        if abs.n_horizon == 0 {
            return Err(Error::Config("synthesis needs memory span >= 1".into()));
        }
        for (idx, &t) in target.iter().enumerate() {
            if t && !q.is_operating(idx) {
                return Err(Error::Config(format!(
                    "target cell {idx} outside the operating range"
                )));
            }
        }
        for &s in &start {
            if !q.is_operating(s) {
                return Err(Error::Config(format!("start cell {s} must be operating")));
            }
        }
        Ok(SynthesisProblem {
            abs,
            q,
            start,
            target,
        })
    }
}

/// Cells that contain the given point (operating cells only).
pub fn start_cells(q: &Quantizer, x: &[f64]) -> Vec<CellIdx> {
    q.locate(x).into_iter().filter(|&c| q.is_operating(c)).collect()
}

/// Flags the cells entirely contained in the ellipsoid E(omega) around
/// (pi, 0); containment is exact via vertex membership (E is convex) and is
/// checked modulo the horizontal period.
pub fn cells_inside_ellipse(q: &Quantizer, omega: f64) -> Vec<bool> {
    let mut out = vec![false; q.n_total()];
    let shifts: Vec<f64> = if q.period.is_finite() {
        vec![-q.period, 0.0, q.period]
    } else {
        vec![0.0]
    };
    for (idx, c) in q.cells.iter().enumerate() {
        out[idx] = shifts.iter().any(|&s| {
            c.poly
                .vertices
                .iter()
                .all(|v| ellipse_value(omega, &[v[0] + s, v[1]]) <= 42.0 * omega * omega)
        });
    }
    out
}

/// Left-hand side of the E-membership inequality at absolute coordinates x.
pub fn ellipse_value(omega: f64, x: &[f64]) -> f64 {
    let y1 = x[0] - std::f64::consts::PI;
    let y2 = x[1];
    63.0 * omega * omega * y1 * y1 + 12.0 * omega * y2 * y1 + 56.0 * y2 * y2
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct Strategy {
    pub n: usize,
    /// Worst-case steps to target, per level then node; INF when losing.
    pub value: Vec<Vec<u32>>,
    /// Chosen input per state; meaningful only at states with finite nonzero
    /// value.
    pub policy: Vec<Vec<u8>>,
    pub target: Vec<bool>,
    pub start: Vec<CellIdx>,
    pub winnable: bool,
    /// Max value over the start states, when winnable.
    pub bound: Option<u32>,
}

impl Strategy {
    pub fn input_at(&self, level: usize, node: u32) -> Option<usize> {
        let p = self.policy[level][node as usize];
        (p != NO_INPUT).then_some(p as usize)
    }
}

pub fn synthesize(p: &SynthesisProblem) -> Strategy {
    let abs = p.abs;
    let n = abs.n_horizon;
    let m_inputs = {
        // input symbols present on edges; the alphabet size is not stored on
        // the abstraction, so take the max label + 1
        let mut m = 0usize;
        for lvl in &abs.levels {
            for ch in &lvl.children {
                for e in ch {
                    m = m.max(e.input as usize + 1);
                }
            }
        }
        m.max(1)
    };

    // dense state ids over levels 0..n
    let mut off = vec![0usize; n + 1];
    for k in 1..=n {
        off[k] = off[k - 1] + abs.levels[k - 1].nodes.len();
    }
    let n_states = off[n - 1] + abs.levels[n - 1].nodes.len();
    let sid = |k: usize, node: u32| off[k] + node as usize;

    // AND groups: one per (state, input) with at least one successor;
    // a group resolves when all its successors have resolved
    let mut group_state: Vec<usize> = Vec::new();
    let mut group_input: Vec<u8> = Vec::new();
    let mut group_pending: Vec<u32> = Vec::new();
    let mut rev: Vec<Vec<u32>> = vec![Vec::new(); n_states];
    let mut value: Vec<u32> = vec![INF; n_states];
    let mut chosen: Vec<u8> = vec![NO_INPUT; n_states];
    let mut buckets: Vec<Vec<usize>> = vec![Vec::new()];

    for k in 0..n {
        for (ni, node) in abs.levels[k].nodes.iter().enumerate() {
            let s = sid(k, ni as u32);
            if !node.extendable {
                continue; // left the operating range: losing
            }
            if p.target[node.cell] {
                value[s] = 0;
                buckets[0].push(s);
                continue;
            }
            for u in 0..m_inputs {
                let mut succs: Vec<usize> = Vec::new();
                for e in &abs.levels[k].children[ni] {
                    if e.input as usize != u {
                        continue;
                    }
                    let t = if k + 1 < n {
                        sid(k + 1, e.node)
                    } else {
                        // full memory: shift-register semantics drop the
                        // oldest cell
                        sid(n - 1, abs.levels[n].nodes[e.node as usize].suffix)
                    };
                    succs.push(t);
                }
                if succs.is_empty() {
                    // no successor recorded for this input: conservatively
                    // not a usable choice (cannot happen for a covering
                    // quantizer)
                    continue;
                }
                let g = group_state.len() as u32;
                group_state.push(s);
                group_input.push(u as u8);
                group_pending.push(succs.len() as u32);
                for t in succs {
                    rev[t].push(g);
                }
            }
        }
    }

    let mut v = 0usize;
    while v < buckets.len() {
        let mut i = 0;
        while i < buckets[v].len() {
            let s = buckets[v][i];
            i += 1;
            if value[s] != v as u32 {
                continue;
            }
            for gi in 0..rev[s].len() {
                let g = rev[s][gi] as usize;
                group_pending[g] -= 1;
                if group_pending[g] == 0 {
                    let ps = group_state[g];
                    if value[ps] == INF {
                        // first completed group: its worst successor is s,
                        // the highest-valued one, so the value is minimal
                        value[ps] = v as u32 + 1;
                        chosen[ps] = group_input[g];
                        while buckets.len() <= v + 1 {
                            buckets.push(Vec::new());
                        }
                        buckets[v + 1].push(ps);
                    }
                }
            }
        }
        v += 1;
    }

    let mut val_out = Vec::with_capacity(n);
    let mut pol_out = Vec::with_capacity(n);
    for k in 0..n {
        let len = abs.levels[k].nodes.len();
        val_out.push(value[off[k]..off[k] + len].to_vec());
        pol_out.push(chosen[off[k]..off[k] + len].to_vec());
    }
    let start_vals: Vec<u32> = p.start.iter().map(|&c| val_out[0][c]).collect();
    let winnable = !start_vals.is_empty() && start_vals.iter().all(|&v| v != INF);
    Strategy {
        n,
        value: val_out,
        policy: pol_out,
        target: p.target.clone(),
        start: p.start.clone(),
        winnable,
        bound: winnable.then(|| start_vals.into_iter().max().unwrap()),
    }
}

/// Exact certificate of the minimax recursion: at every state with finite
/// value v > 0 the chosen input exists and its worst successor has value
/// v - 1. Used by tests.
pub fn check_value_consistency(p: &SynthesisProblem, strat: &Strategy) -> bool {
    let abs = p.abs;
    let n = strat.n;
    for k in 0..n {
        for ni in 0..abs.levels[k].nodes.len() {
            let v = strat.value[k][ni];
            if v == INF || v == 0 {
                continue;
            }
            let u = match strat.input_at(k, ni as u32) {
                Some(u) => u,
                None => return false,
            };
            let mut worst = None::<u32>;
            for e in &abs.levels[k].children[ni] {
                if e.input as usize != u {
                    continue;
                }
                let sv = if k + 1 < n {
                    strat.value[k + 1][e.node as usize]
                } else {
                    strat.value[n - 1][abs.levels[n].nodes[e.node as usize].suffix as usize]
                };
                if sv == INF {
                    return false;
                }
                worst = Some(worst.map_or(sv, |w| w.max(sv)));
            }
            if worst != Some(v - 1) {
                return false;
            }
        }
    }
    true
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct ClosedLoopRun {
    pub xs: Vec<Vec<f64>>,
    pub us: Vec<usize>,
    pub cells: Vec<CellIdx>,
    /// Number of samples after which a target cell was entered.
    pub reached: Option<usize>,
}

pub fn run_closed_loop(
    sys: &SystemModel,
    q: &Quantizer,
    abs: &Abstraction,
    strat: &Strategy,
    x0: &[f64],
    max_steps: usize,
) -> Result<ClosedLoopRun> {
    let n = strat.n;
    let located = q.locate(x0);
    let cell0 = *located
        .first()
        .ok_or_else(|| Error::PolicyGap(format!("{x0:?} not covered by the quantizer")))?;
    let mut run = ClosedLoopRun {
        xs: vec![x0.to_vec()],
        us: Vec::new(),
        cells: vec![cell0],
        reached: None,
    };
    if strat.target[cell0] {
        run.reached = Some(0);
        return Ok(run);
    }
    let mut x = x0.to_vec();
    let mut level = 0usize;
    let mut node: u32 = cell0 as u32;
    for step in 0..max_steps {
        if !q.is_operating(abs.levels[level].nodes[node as usize].cell) {
            return Err(Error::PolicyGap(format!("left the operating range at step {step}")));
        }
        let u = strat.input_at(level, node).ok_or_else(|| {
            Error::PolicyGap(format!("no policy for window at level {level}"))
        })?;
        x = sys.step(&x, u)?;
        // boundary points belong to several cells; take the lowest id whose
        // transition the abstraction knows (soundness says one exists)
        let candidates = q.locate(&x);
        let mut next = None;
        for &c in &candidates {
            if let Some(e) = abs.levels[level].children[node as usize]
                .iter()
                .find(|e| e.input as usize == u && e.cell == c)
            {
                next = Some((c, e.node));
                break;
            }
        }
        let (c, child) = next.ok_or_else(|| {
            Error::PolicyGap(format!(
                "observed cells {candidates:?} at step {step} not among the successors"
            ))
        })?;
        run.us.push(u);
        run.xs.push(x.clone());
        run.cells.push(c);
        if level + 1 < n {
            level += 1;
            node = child;
        } else {
            node = abs.levels[n].nodes[child as usize].suffix;
        }
        if strat.target[c] {
            run.reached = Some(step + 1);
            return Ok(run);
        }
    }
    Ok(run)
}

#[derive(Clone, Debug)]
pub struct EllipsoidReport {
    pub invariant: bool,
    pub max_abs_u: f64,
    pub witness: Option<Vec<f64>>,
}

/// Monte Carlo check that E(omega) is positively invariant for the pendulum
/// under the low-level feedback u = 2(pi - x1 - x2/omega), saturated at the
/// physical limit |u| <= 2. Boundary samples are flowed over [0, 1] (five
/// sample periods of the case study).
pub fn verify_ellipsoid_invariance(
    omega: f64,
    gamma: f64,
    n_samples: usize,
) -> Result<EllipsoidReport> {
    if omega <= 0.0 || gamma < 0.0 || gamma > omega {
        return Err(Error::ConditionsViolated(format!(
            "need omega > 0 and 0 <= gamma <= omega, got omega={omega} gamma={gamma}"
        )));
    }
    let w2 = omega * omega;
    let bound = 42.0 * w2;
    let feedback = move |x: &[f64]| {
        let u = 2.0 * (std::f64::consts::PI - x[0] - x[1] / omega);
        u.clamp(-2.0, 2.0)
    };
    let rhs = move |x: &[f64], out: &mut [f64]| {
        let u = feedback(x);
        out[0] = x[1];
        out[1] = -w2 * x[0].sin() - u * w2 * x[0].cos() - 2.0 * gamma * x[1];
    };
    let mut report = EllipsoidReport {
        invariant: true,
        max_abs_u: 0.0,
        witness: None,
    };
    for i in 0..n_samples {
        let th = std::f64::consts::TAU * i as f64 / n_samples as f64;
        let dir = [th.cos(), th.sin()];
        let scale = (bound / ellipse_value(omega, &[dir[0] + std::f64::consts::PI, dir[1]]))
            .sqrt();
        let mut x = vec![
            std::f64::consts::PI + scale * dir[0],
            scale * dir[1],
        ];
        report.max_abs_u = report.max_abs_u.max(feedback(&x).abs());
        for _ in 0..20 {
            x = crate::dynamics::integrate(rhs, &x, 0.05, 1e-9)?.x_end;
            report.max_abs_u = report.max_abs_u.max(feedback(&x).abs());
            if ellipse_value(omega, &x) > bound * (1.0 + 1e-6) {
                report.invariant = false;
                report.witness = Some(x.clone());
                return Ok(report);
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::abstraction::{build_abstraction, BuildOptions};
    use crate::dynamics::{DiscreteSystem, InputSymbol, SystemModel};
    use crate::quantizer::build_box_quantizer;
    use nalgebra::DMatrix;

    /// 4x1 row of unit boxes. Input 0 contracts toward 3.4 inside cell 3,
    /// input 1 contracts toward 0 inside cell 0. Cell images never graze the
    /// source cell, so the reach game has finite worst-case values:
    ///   input 0: [0,1] -> [2.55,2.80] in cell 2, [1,2] -> cells {2,3},
    ///            [2,3] -> cell 3, [3,4] -> cell 3.
    fn contractor() -> SystemModel {
        SystemModel::Discrete(DiscreteSystem {
            n: 2,
            inputs: vec![InputSymbol::scalar(0.0), InputSymbol::scalar(1.0)],
            step: Box::new(|x, u| vec![0.25 * x[0] + 2.55 * (1.0 - u[0]), x[1]]),
            jacobian: Box::new(|_, _| {
                DMatrix::from_row_slice(2, 2, &[0.25, 0.0, 0.0, 1.0])
            }),
        })
    }

    #[test]
    fn reaches_rightmost_cell() {
        let q = build_box_quantizer([0.0, 0.0], [1.0, 1.0], 4, 1).unwrap();
        let sys = contractor();
        let abs = build_abstraction(
            &sys,
            &q,
            &BuildOptions {
                n_horizon: 1,
                candidate_margin: 0.6,
            },
        )
        .unwrap();
        let mut target = vec![false; q.n_total()];
        target[3] = true; // rightmost cell
        let p = SynthesisProblem::new(&abs, &q, vec![0], target).unwrap();
        let strat = synthesize(&p);
        assert!(strat.winnable, "values {:?}", strat.value[0]);
        assert!(check_value_consistency(&p, &strat));
        // hand-computed minimax values: v3=0, v2=1, v1=max(v2,v3)+1=2, v0=v2+1=2
        assert_eq!(&strat.value[0][..4], &[2, 2, 1, 0]);
        assert_eq!(strat.bound, Some(2));
        for c in 0..3 {
            assert_eq!(strat.input_at(0, c as u32), Some(0));
        }
        let run = run_closed_loop(&sys, &q, &abs, &strat, &[0.5, 0.5], 10).unwrap();
        assert_eq!(run.reached, Some(2));
        assert_eq!(run.cells, vec![0, 2, 3]);
        assert_eq!(run.us, vec![0, 0]);
    }

    #[test]
    fn unreachable_target_is_losing() {
        let q = build_box_quantizer([0.0, 0.0], [1.0, 1.0], 4, 1).unwrap();
        // pure right drift, target on the left: no way back
        let sys = SystemModel::Discrete(DiscreteSystem {
            n: 2,
            inputs: vec![InputSymbol::scalar(0.0)],
            step: Box::new(|x, _| vec![x[0] + 0.5, x[1]]),
            jacobian: Box::new(|_, _| DMatrix::identity(2, 2)),
        });
        let abs = build_abstraction(
            &sys,
            &q,
            &BuildOptions {
                n_horizon: 1,
                candidate_margin: 0.4,
            },
        )
        .unwrap();
        let mut target = vec![false; q.n_total()];
        target[0] = true;
        let p = SynthesisProblem::new(&abs, &q, vec![3], target).unwrap();
        let strat = synthesize(&p);
        assert!(!strat.winnable);
        assert_eq!(strat.value[0][3], INF);
    }

    #[test]
    fn start_in_target_needs_no_policy() {
        let q = build_box_quantizer([0.0, 0.0], [1.0, 1.0], 2, 1).unwrap();
        let sys = contractor();
        let abs = build_abstraction(
            &sys,
            &q,
            &BuildOptions {
                n_horizon: 1,
                candidate_margin: 0.4,
            },
        )
        .unwrap();
        let mut target = vec![false; q.n_total()];
        target[0] = true;
        let p = SynthesisProblem::new(&abs, &q, vec![0], target).unwrap();
        let strat = synthesize(&p);
        assert!(strat.winnable);
        assert_eq!(strat.bound, Some(0));
    }

    #[test]
    fn anti_optimism_under_edge_deletion() {
        // removing a transition removes a guarantee, so values can only grow
        let q = build_box_quantizer([0.0, 0.0], [1.0, 1.0], 4, 1).unwrap();
        let sys = contractor();
        let mut abs = build_abstraction(
            &sys,
            &q,
            &BuildOptions {
                n_horizon: 1,
                candidate_margin: 0.6,
            },
        )
        .unwrap();
        let mut target = vec![false; q.n_total()];
        target[3] = true;
        let base = {
            let p = SynthesisProblem::new(&abs, &q, vec![0], target.clone()).unwrap();
            synthesize(&p).value[0].clone()
        };
        // delete the progress edge 2 -> 3 under the right drift
        abs.levels[0].children[2].retain(|e| !(e.input == 0 && e.cell == 3));
        let p = SynthesisProblem::new(&abs, &q, vec![0], target).unwrap();
        let after = synthesize(&p).value[0].clone();
        for (b, a) in base.iter().zip(&after) {
            assert!(*a >= *b, "value improved after deleting a transition");
        }
        assert_eq!(after[2], INF);
    }

    #[test]
    fn ellipse_checks() {
        let rep = verify_ellipsoid_invariance(1.0, 0.01, 256).unwrap();
        assert!(rep.invariant, "witness {:?}", rep.witness);
        assert!(rep.max_abs_u <= 2.0 + 1e-12);
        // center is an equilibrium of the feedback law
        assert!(
            (2.0 * (std::f64::consts::PI - std::f64::consts::PI - 0.0)).abs() == 0.0
        );
        assert!(verify_ellipsoid_invariance(1.0, 2.0, 8).is_err());
    }
}
