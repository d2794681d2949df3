//! Finite-horizon behavioural abstraction of a sampled or discrete plant on a
//! cell quantizer. A window of length k is a run (cell_0, u_0, cell_1, ...,
//! u_{k-1}, cell_k) of the abstraction; it is kept iff the polyhedron built
//! from the transported supporting half-spaces of every visited cell still
//! meets the newest cell. Transported constraint sets are shared between all
//! windows with a common suffix, so each (cell, input word) chain is computed
//! once.

use crate::dynamics::SystemModel;
use crate::error::{Error, Result};
use crate::geometry::{feasible_rows, HalfSpacePair, LinRow};
use crate::quantizer::{CellIdx, Quantizer};
use rayon::prelude::*;
use std::collections::{HashMap, HashSet};

/// Longest input word a chain key can hold (4 bits per symbol).
const WORD_CAP: usize = 12;

/// Input word packed little-endian into nibbles, length in the top byte.
fn pack_push(word: u64, u: usize) -> u64 {
    let len = word >> 56;
    debug_assert!(len < WORD_CAP as u64 && u < 16);
    (word & !(0xffu64 << 56)) | ((u as u64) << (4 * len)) | ((len + 1) << 56)
}

/// One transported constraint set: the supporting pairs of a cell's superset
/// pushed through the dynamics under `word`, in the cell's canonical frame.
/// `degraded` marks a chain whose transport failed (singular sensitivity or
/// flow escape); it then carries no constraints, which only over-approximates.
#[derive(Clone, Debug)]
pub struct ChainData {
    pub cell: CellIdx,
    pub word: u64,
    pub pairs: Vec<HalfSpacePair>,
    pub degraded: bool,
}

#[derive(Debug, Default)]
pub struct ChainStore {
    pub chains: Vec<ChainData>,
    index: HashMap<(CellIdx, u64), u32>,
}

impl ChainStore {
    fn insert(&mut self, data: ChainData) -> u32 {
        let id = self.chains.len() as u32;
        let prev = self.index.insert((data.cell, data.word), id);
        debug_assert!(prev.is_none(), "duplicate chain");
        self.chains.push(data);
        id
    }

    fn get(&self, cell: CellIdx, word: u64) -> Option<u32> {
        self.index.get(&(cell, word)).copied()
    }
}

pub const NO_NODE: u32 = u32::MAX;

/// One window. `shift` is the horizontal offset of the newest cell from its
/// canonical position, measured in the frame of the window's first cell.
/// `chains` lists (chain id, shift of that chain's cell); an empty list on an
/// extendable=false node means the constraint set is the whole space.
#[derive(Clone, Debug)]
pub struct Node {
    pub parent: u32,
    pub input: u8,
    pub cell: CellIdx,
    pub shift: f64,
    /// Index into the previous level: the window with the first cell dropped.
    pub suffix: u32,
    pub extendable: bool,
    pub chains: Vec<(u32, f64)>,
}

#[derive(Clone, Copy, Debug)]
pub struct ChildEdge {
    pub input: u8,
    pub cell: CellIdx,
    pub node: u32,
}

#[derive(Debug, Default)]
pub struct Level {
    pub nodes: Vec<Node>,
    /// Per node, sorted by (input, cell). Filled when the next level is built.
    pub children: Vec<Vec<ChildEdge>>,
}

#[derive(Clone, Debug, Default, serde::Serialize)]
pub struct BuildStats {
    /// Supporting pairs created: initial pairs plus one per transported pair.
    pub half_space_solves: u64,
    /// Emptiness LPs attempted.
    pub feasibility_tests: u64,
    /// States of the automaton realization: all of C plus the stored windows
    /// of length 1..horizon-1. Windows that leave the operating range carry a
    /// sentinel constraint set and are not stored, mirroring the sparse-entry
    /// bookkeeping the statistics are conventionally reported in.
    pub states: u64,
    /// Stored windows of length 1..=horizon.
    pub transitions: u64,
    /// All windows per level, including ones ending outside the operating
    /// range.
    pub per_level_windows: Vec<usize>,
    /// Stored (operating-range-ending) windows per level.
    pub per_level_stored: Vec<usize>,
    pub degraded_chains: u64,
}

#[derive(Debug)]
pub struct Abstraction {
    pub n_horizon: usize,
    pub levels: Vec<Level>,
    pub chains: ChainStore,
    pub stats: BuildStats,
}

#[derive(Clone, Debug)]
pub struct BuildOptions {
    pub n_horizon: usize,
    /// Inflation of the carrier-point bounding box when scanning for target
    /// cells of a length-1 window. Generous by default; the builder checks in
    /// debug that the constraint polyhedron stays inside the scanned region.
    pub candidate_margin: f64,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions {
            n_horizon: 1,
            candidate_margin: 0.5,
        }
    }
}

struct NewChild {
    input: u8,
    cell: CellIdx,
    shift: f64,
    suffix: u32,
}

pub fn build_abstraction(
    sys: &SystemModel,
    q: &Quantizer,
    opts: &BuildOptions,
) -> Result<Abstraction> {
    if opts.n_horizon >= WORD_CAP {
        return Err(Error::HorizonExceeded { built: WORD_CAP - 1 });
    }
    let m = sys.inputs().len();
    if m > 16 {
        return Err(Error::Config("more than 16 input symbols".into()));
    }
    let mut store = ChainStore::default();
    let mut stats = BuildStats::default();

    // level 0: every cell is a window of length 0; node index == cell index
    let mut level0 = Level::default();
    for idx in 0..q.n_total() {
        let operating = q.is_operating(idx);
        let chains = if operating {
            let pairs = q.cells[idx].support.pairs().to_vec();
            stats.half_space_solves += pairs.len() as u64;
            let cid = store.insert(ChainData {
                cell: idx,
                word: 0,
                pairs,
                degraded: false,
            });
            vec![(cid, 0.0)]
        } else {
            Vec::new()
        };
        level0.nodes.push(Node {
            parent: NO_NODE,
            input: 0,
            cell: idx,
            shift: 0.0,
            suffix: NO_NODE,
            extendable: operating,
            chains,
        });
        level0.children.push(Vec::new());
    }
    stats.per_level_windows.push(level0.nodes.len());
    stats.per_level_stored.push(q.operating_count());
    let mut levels = vec![level0];

    for k in 0..opts.n_horizon {
        // phase A: transport every chain referenced at level k by every input,
        // deduplicated across windows sharing a suffix
        let mut wanted: Vec<u32> = Vec::new();
        {
            let mut seen = HashSet::new();
            for node in &levels[k].nodes {
                if !node.extendable {
                    continue;
                }
                for &(cid, _) in &node.chains {
                    if seen.insert(cid) {
                        wanted.push(cid);
                    }
                }
            }
        }
        wanted.sort_unstable();
        let mut ext: HashMap<(u32, usize), u32> = HashMap::new();
        let mut fresh: Vec<(u32, usize)> = Vec::new();
        for &cid in &wanted {
            for u in 0..m {
                let word = pack_push(store.chains[cid as usize].word, u);
                match store.get(store.chains[cid as usize].cell, word) {
                    Some(id) => {
                        ext.insert((cid, u), id);
                    }
                    None => fresh.push((cid, u)),
                }
            }
        }
        let pushed: Vec<(CellIdx, u64, Vec<HalfSpacePair>, bool, u64)> = fresh
            .par_iter()
            .map(|&(cid, u)| {
                let src = &store.chains[cid as usize];
                let word = pack_push(src.word, u);
                if src.degraded {
                    return (src.cell, word, Vec::new(), true, 0);
                }
                let mut out = Vec::with_capacity(src.pairs.len());
                for pair in &src.pairs {
                    match sys.comp_ext(u, pair) {
                        Ok(p) => out.push(p),
                        Err(_) => return (src.cell, word, Vec::new(), true, 0),
                    }
                }
                let solves = out.len() as u64;
                (src.cell, word, out, false, solves)
            })
            .collect();
        for (&(cid, u), (cell, word, pairs, degraded, solves)) in
            fresh.iter().zip(pushed.into_iter())
        {
            stats.half_space_solves += solves;
            if degraded {
                stats.degraded_chains += 1;
            }
            let id = store.insert(ChainData {
                cell,
                word,
                pairs,
                degraded,
            });
            ext.insert((cid, u), id);
        }

        // phase B: try to append one more cell to every extendable window
        let prev_children: Option<&Level> = if k >= 1 { Some(&levels[k - 1]) } else { None };
        let cur = &levels[k];
        let results: Vec<(u32, Vec<NewChild>, u64)> = cur
            .nodes
            .par_iter()
            .enumerate()
            .filter(|(_, node)| node.extendable)
            .map(|(ni, node)| {
                let mut found = Vec::new();
                let mut tests = 0u64;
                let shift1 = if k == 0 { 0.0 } else { shift_at_level1(&levels, k, ni as u32) };
                for u in 0..m {
                    // constraint rows common to all candidates: every chain of
                    // the window, transported once more
                    let mut ext_chains: Vec<(u32, f64)> = Vec::with_capacity(node.chains.len());
                    let mut base_rows: Vec<LinRow> = Vec::new();
                    for &(cid, cs) in &node.chains {
                        let eid = ext[&(cid, u)];
                        ext_chains.push((eid, cs));
                        for p in &store.chains[eid as usize].pairs {
                            let mut r = p.as_row();
                            r.b += r.a[0] * cs;
                            base_rows.push(r);
                        }
                    }
                    let candidates: Vec<(CellIdx, f64, u32)> = if let Some(prev) = prev_children {
                        // nesting: a longer window is feasible only if the
                        // window with its first cell dropped is
                        prev.children[node.suffix as usize]
                            .iter()
                            .filter(|e| e.input as usize == u)
                            .map(|e| {
                                let s = levels[k].nodes[e.node as usize].shift + shift1;
                                (e.cell, s, e.node)
                            })
                            .collect()
                    } else {
                        let probes: Vec<&[f64]> = ext_chains
                            .iter()
                            .flat_map(|&(eid, _)| {
                                store.chains[eid as usize].pairs.iter().map(|p| p.p.as_slice())
                            })
                            .collect();
                        if probes.is_empty() {
                            // transport degraded end to end: fall back to
                            // scanning everything at every wrap shift a single
                            // step could reach
                            all_cells_fallback(q)
                        } else {
                            debug_assert!(carrier_box_sound(&base_rows, &probes, opts.candidate_margin));
                            q.candidate_cells(&probes, opts.candidate_margin)
                                .into_iter()
                                .map(|(c, s)| (c, s, NO_NODE))
                                .collect()
                        }
                    };
                    for (cell, cshift, suffix_node) in candidates {
                        // emptiness of P(S) for the prospective longer window:
                        // the new cell enters through its superset's
                        // supporting pairs, exactly as stored in the memo
                        let mut rows = target_rows(q, cell, cshift);
                        rows.extend(base_rows.iter().cloned());
                        tests += 1;
                        if feasible_rows(&rows, sys.n()).is_feasible_conservative() {
                            let suffix = if k == 0 { cell as u32 } else { suffix_node };
                            found.push(NewChild {
                                input: u as u8,
                                cell,
                                shift: cshift,
                                suffix,
                            });
                        }
                    }
                }
                (ni as u32, found, tests)
            })
            .collect();

        // deterministic assembly in (node, input, candidate) order
        let mut next = Level::default();
        let mut edges: Vec<(u32, ChildEdge)> = Vec::new();
        let mut dup = HashSet::new();
        for (ni, found, tests) in results {
            stats.feasibility_tests += tests;
            for c in found {
                if !dup.insert((ni, c.input, c.cell)) {
                    return Err(Error::BadGeometry(format!(
                        "cell {} reached twice from one window under input {}; \
                         candidate box wider than the wrap period",
                        c.cell, c.input
                    )));
                }
                let node_id = next.nodes.len() as u32;
                let operating = q.is_operating(c.cell);
                let chains = if operating {
                    let parent_chains = &levels[k].nodes[ni as usize].chains;
                    let mut list = Vec::with_capacity(parent_chains.len() + 1);
                    let eps = store.get(c.cell, 0).expect("operating cell has a base chain");
                    list.push((eps, c.shift));
                    for &(cid, cs) in parent_chains {
                        list.push((ext[&(cid, c.input as usize)], cs));
                    }
                    list
                } else {
                    Vec::new()
                };
                next.nodes.push(Node {
                    parent: ni,
                    input: c.input,
                    cell: c.cell,
                    shift: c.shift,
                    suffix: c.suffix,
                    extendable: operating,
                    chains,
                });
                next.children.push(Vec::new());
                edges.push((
                    ni,
                    ChildEdge {
                        input: c.input,
                        cell: c.cell,
                        node: node_id,
                    },
                ));
            }
        }
        for (ni, e) in edges {
            levels[k].children[ni as usize].push(e);
        }
        stats.per_level_windows.push(next.nodes.len());
        stats
            .per_level_stored
            .push(next.nodes.iter().filter(|nd| nd.extendable).count());
        levels.push(next);
    }

    stats.states = q.n_total() as u64;
    for (k, &stored) in stats.per_level_stored.iter().enumerate() {
        if k >= 1 && k < opts.n_horizon {
            stats.states += stored as u64;
        }
        if k >= 1 {
            stats.transitions += stored as u64;
        }
    }
    Ok(Abstraction {
        n_horizon: opts.n_horizon,
        levels,
        chains: store,
        stats,
    })
}

/// Offset of a window's second cell from its canonical position, in the frame
/// of the window's first cell.
fn shift_at_level1(levels: &[Level], mut k: usize, mut node: u32) -> f64 {
    while k > 1 {
        node = levels[k].nodes[node as usize].parent;
        k -= 1;
    }
    levels[1].nodes[node as usize].shift
}

/// Constraint rows standing in for a prospective target cell: a tight outer
/// polyhedral approximation of its superset, built from the supporting pairs
/// at the arc midpoints plus the ball tangent planes at the cell vertices.
/// Overflow symbols contribute their strip half-plane.
fn target_rows(q: &Quantizer, idx: CellIdx, shift: f64) -> Vec<LinRow> {
    let c = match q.cells.get(idx) {
        Some(c) => c,
        None => return q.cell_rows(idx, shift),
    };
    let mut rows = Vec::new();
    let mut push = |a: Vec<f64>, b: f64| {
        rows.push(LinRow {
            b: b + a[0] * shift,
            a,
        });
    };
    let m = c.poly.vertices.len();
    for (i, cover) in c.superset.covers.iter().enumerate() {
        match cover {
            crate::geometry::FacetCover::Flat => {
                let r = c.poly.facets[i].as_row();
                push(r.a, r.b);
            }
            crate::geometry::FacetCover::Arc { center } => {
                // tangent planes at the endpoints, midpoint and quarter
                // points of the arc from vertex i to vertex i+1
                let rad = c.superset.radius;
                let a = &c.poly.vertices[i];
                let b = &c.poly.vertices[(i + 1) % m];
                let ta = (a[1] - center[1]).atan2(a[0] - center[0]);
                let mut tb = (b[1] - center[1]).atan2(b[0] - center[0]);
                while tb < ta {
                    tb += std::f64::consts::TAU;
                }
                for j in 0..=4 {
                    let t = ta + (tb - ta) * j as f64 / 4.0;
                    let n = vec![t.cos(), t.sin()];
                    let bb = n[0] * center[0] + n[1] * center[1] + rad;
                    push(n, bb);
                }
            }
        }
    }
    rows
}

fn all_cells_fallback(q: &Quantizer) -> Vec<(CellIdx, f64, u32)> {
    let mut out = Vec::new();
    let shifts: &[f64] = if q.period.is_finite() {
        &[-1.0, 0.0, 1.0]
    } else {
        &[0.0]
    };
    for idx in 0..q.cells.len() {
        for &m in shifts {
            out.push((idx, m * q.period.min(f64::MAX), NO_NODE));
        }
    }
    out.push((q.overflow_pos(), 0.0, NO_NODE));
    out.push((q.overflow_neg(), 0.0, NO_NODE));
    out
}

/// Debug check: the polyhedron cut out by `rows` does not reach beyond the
/// inflated bounding box of the carrier points, so the candidate scan cannot
/// miss a reachable cell.
#[cfg(debug_assertions)]
fn carrier_box_sound(rows: &[LinRow], probes: &[&[f64]], margin: f64) -> bool {
    use crate::geometry::polytope_from_rows_2d;
    if probes.first().map(|p| p.len()) != Some(2) {
        return true;
    }
    let poly = match polytope_from_rows_2d(rows, 1e6) {
        Some(p) => p,
        None => return true, // empty: nothing to miss
    };
    let (lo, hi) = poly.bbox();
    let (mut xlo, mut xhi, mut ylo, mut yhi) =
        (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for p in probes {
        xlo = xlo.min(p[0]);
        xhi = xhi.max(p[0]);
        ylo = ylo.min(p[1]);
        yhi = yhi.max(p[1]);
    }
    lo[0] >= xlo - margin && hi[0] <= xhi + margin && lo[1] >= ylo - margin && hi[1] <= yhi + margin
}

#[cfg(not(debug_assertions))]
fn carrier_box_sound(_rows: &[LinRow], _probes: &[&[f64]], _margin: f64) -> bool {
    true
}

/// Where a queried window sits in the table.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum WindowStatus {
    /// A stored node (level, node index) with a nonsentinel constraint set.
    Stored(usize, u32),
    /// The window left the operating range at some point; from there on the
    /// constraint set is the unconstrained sentinel and every continuation is
    /// admitted.
    WholeSpace,
    Infeasible,
}

impl Abstraction {
    /// Find the stored node for an explicit window. `cells.len()` must be
    /// `inputs.len() + 1`.
    pub fn find_node(&self, cells: &[CellIdx], inputs: &[usize]) -> Option<(usize, u32)> {
        match self.classify_window(cells, inputs) {
            Ok(WindowStatus::Stored(k, n)) => Some((k, n)),
            _ => None,
        }
    }

    pub fn classify_window(&self, cells: &[CellIdx], inputs: &[usize]) -> Result<WindowStatus> {
        if cells.len() != inputs.len() + 1 || cells.is_empty() {
            return Ok(WindowStatus::Infeasible);
        }
        if inputs.len() > self.n_horizon {
            return Err(Error::HorizonExceeded {
                built: self.n_horizon,
            });
        }
        if cells[0] >= self.levels[0].nodes.len() {
            return Ok(WindowStatus::Infeasible);
        }
        let mut node = cells[0] as u32;
        for (k, (&u, &c)) in inputs.iter().zip(&cells[1..]).enumerate() {
            if !self.levels[k].nodes[node as usize].extendable {
                // sentinel branch: no constraints accumulate any more
                return Ok(WindowStatus::WholeSpace);
            }
            match self.levels[k].children[node as usize]
                .iter()
                .find(|e| e.input as usize == u && e.cell == c)
            {
                Some(edge) => node = edge.node,
                None => return Ok(WindowStatus::Infeasible),
            }
        }
        Ok(WindowStatus::Stored(inputs.len(), node))
    }

    pub fn window_feasible(&self, cells: &[CellIdx], inputs: &[usize]) -> bool {
        !matches!(
            self.classify_window(cells, inputs),
            Ok(WindowStatus::Infeasible) | Err(_)
        )
    }

    /// Constraint rows of the transported support set attached to a window,
    /// in the frame of the window's first cell. Empty means the whole space.
    pub fn support_rows(&self, level: usize, node: u32) -> Vec<LinRow> {
        let nd = &self.levels[level].nodes[node as usize];
        let mut rows = Vec::new();
        for &(cid, cs) in &nd.chains {
            for p in &self.chains.chains[cid as usize].pairs {
                let mut r = p.as_row();
                r.b += r.a[0] * cs;
                rows.push(r);
            }
        }
        rows
    }

    /// Cells and inputs of the window a node stands for, oldest first.
    pub fn window_of(&self, level: usize, node: u32) -> (Vec<CellIdx>, Vec<usize>) {
        let mut cells = Vec::with_capacity(level + 1);
        let mut inputs = Vec::with_capacity(level);
        let mut k = level;
        let mut ni = node;
        loop {
            let nd = &self.levels[k].nodes[ni as usize];
            cells.push(nd.cell);
            if k == 0 {
                break;
            }
            inputs.push(nd.input as usize);
            ni = nd.parent;
            k -= 1;
        }
        cells.reverse();
        inputs.reverse();
        (cells, inputs)
    }
}
