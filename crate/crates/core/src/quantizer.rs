//! Hexagonal covering of a cylindrical state space: operating cells (regular
//! hexagons, truncated to pentagons at the strip boundary), overflow symbols
//! for the two half-planes beyond the strip, optional obstacle cells, and
//! point/region-to-cell lookup.
//!
//! Lattice: hexagons with vertex set s{(0,+-2),(+-sqrt3,+-1)} tile the plane
//! with centers (sqrt3 s j, 3 s k), j == k (mod 2). The first coordinate is
//! periodic; cells are stored once in a canonical frame and looked up with
//! wrap shifts.

use crate::error::{Error, Result};
use crate::geometry::{
    clip_polygon, norm, strongly_convex_hull, strongly_convex_hull_with_flats,
    supporting_approximation,
    ConvexPolytope, LinRow, StronglyConvexSuperset, SupportSet, TOL_GEOM,
};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

#[derive(
    Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
pub enum CellKind {
    Operating,
    Obstacle,
    OverflowPos,
    OverflowNeg,
}

#[derive(
    Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
pub struct CellId {
    pub kind: CellKind,
    /// half-column index j in [0, n_half_cols); zero for overflow ids
    pub col: i32,
    /// row index k with j == k (mod 2); zero for overflow ids
    pub row: i32,
}

impl CellId {
    pub fn operating(col: i32, row: i32) -> Self {
        CellId {
            kind: CellKind::Operating,
            col,
            row,
        }
    }
}

impl std::fmt::Display for CellId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.kind {
            CellKind::Operating => write!(f, "c{}r{}", self.col, self.row),
            CellKind::Obstacle => write!(f, "obst:c{}r{}", self.col, self.row),
            CellKind::OverflowPos => write!(f, "ovf+"),
            CellKind::OverflowNeg => write!(f, "ovf-"),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Cell {
    pub id: CellId,
    pub poly: ConvexPolytope,
    pub superset: StronglyConvexSuperset,
    pub support: SupportSet,
    pub center: [f64; 2],
    pub bbox: ([f64; 2], [f64; 2]),
}

/// Index-based handle into a quantizer: indices < cells.len() are stored
/// cells, the two values after that are the overflow symbols.
pub type CellIdx = usize;

#[derive(Clone, Debug, Serialize)]
pub struct Quantizer {
    pub s: f64,
    pub n_half_cols: i32,
    pub strip: (f64, f64),
    pub period: f64,
    pub radius: f64,
    pub lattice: LatticeKind,
    pub cells: Vec<Cell>,
    #[serde(skip)]
    index: HashMap<(i32, i32), CellIdx>,
}

/// Cell arrangement; drives candidate enumeration.
#[derive(Clone, Debug, Serialize)]
pub enum LatticeKind {
    /// Hexagons of scale s on a periodic strip; `s` and `n_half_cols` on the
    /// quantizer describe the lattice.
    Hex,
    /// Axis-aligned box grid, not periodic, no overflow symbols in use.
    Grid {
        origin: [f64; 2],
        w: f64,
        h: f64,
        cols: i32,
        rows: i32,
    },
}

pub fn wrap_delta(dx: f64, period: f64) -> f64 {
    if !period.is_finite() {
        return dx;
    }
    dx - period * (dx / period).round()
}

/// Tiles the cylinder (first coordinate periodic) with hexagons of scale s,
/// clipped to the strip in the second coordinate; cells whose row falls
/// outside `row_override` (when given) are dropped instead of auto-deriving
/// rows from the strip.
pub fn build_hex_quantizer(
    s: f64,
    strip: (f64, f64),
    period: f64,
    obstacles: &[CellId],
    radius: f64,
    row_override: Option<(i32, i32)>,
) -> Result<Quantizer> {
    let pitch = 3.0f64.sqrt() * s;
    let cols = period / pitch;
    let n_half_cols = cols.round() as i64;
    if (cols - n_half_cols as f64).abs() > 1e-12 || n_half_cols < 1 {
        return Err(Error::BadGeometry(format!(
            "period {period} not divisible by the lattice column pitch {pitch}"
        )));
    }
    if n_half_cols % 2 != 0 {
        return Err(Error::BadGeometry(
            "periodic wrap needs an even number of half-columns".into(),
        ));
    }
    let n_half_cols = n_half_cols as i32;
    let (lo, hi) = strip;
    if !(hi > lo) {
        return Err(Error::BadGeometry("empty strip".into()));
    }
    let r3 = 3.0f64.sqrt();
    let mut cells = Vec::new();
    let mut index = HashMap::new();
    for j in 0..n_half_cols {
        let cx = r3 * s * j as f64;
        // rows whose hexagon has interior overlap with the strip
        let k_lo = ((lo / s - 2.0) / 3.0).floor() as i32;
        let k_hi = ((hi / s + 2.0) / 3.0).ceil() as i32;
        for k in k_lo..=k_hi {
            if (j - k).rem_euclid(2) != 0 {
                continue;
            }
            if let Some((rlo, rhi)) = row_override {
                if k < rlo || k > rhi {
                    continue;
                }
            }
            let cy = 3.0 * s * k as f64;
            if cy - 2.0 * s >= hi - 1e-12 || cy + 2.0 * s <= lo + 1e-12 {
                continue;
            }
            let hexagon = [
                [cx, cy + 2.0 * s],
                [cx + r3 * s, cy + s],
                [cx + r3 * s, cy - s],
                [cx, cy - 2.0 * s],
                [cx - r3 * s, cy - s],
                [cx - r3 * s, cy + s],
            ];
            let clipped = clip_polygon(
                &clip_polygon(&hexagon, [0.0, 1.0], hi, 1e-12),
                [0.0, -1.0],
                -lo,
                1e-12,
            );
            if clipped.len() < 3 {
                continue;
            }
            let poly = ConvexPolytope::from_vertices_2d(&clipped)?;
            // horizontal facets can only come from the strip cut
            let flats: Vec<bool> = poly
                .facets
                .iter()
                .map(|f| f.v[0].abs() < 1e-9 * norm(&f.v))
                .collect();
            let superset = strongly_convex_hull_with_flats(&poly, radius, &flats)?;
            // supporting pairs feed the half-space transport, whose validity
            // needs every pair tangent to a full radius-r ball around the
            // cell; the flat strip cut stays in the superset (sound as a
            // same-step constraint) but must not be transported, so the
            // pairs come from the all-arc cover instead
            let support = supporting_approximation(&strongly_convex_hull(&poly, radius)?);
            let id = CellId::operating(j, k);
            let bbox = {
                let (l, h) = poly.bbox();
                ([l[0], l[1]], [h[0], h[1]])
            };
            index.insert((j, k), cells.len());
            cells.push(Cell {
                id,
                poly,
                superset,
                support,
                center: [cx, cy],
                bbox,
            });
        }
    }
    let mut q = Quantizer {
        s,
        n_half_cols,
        strip,
        period,
        radius,
        lattice: LatticeKind::Hex,
        cells,
        index,
    };
    for ob in obstacles {
        let idx = q
            .index
            .get(&(ob.col, ob.row))
            .copied()
            .ok_or_else(|| Error::BadGeometry(format!("obstacle {ob} has no cell")))?;
        q.cells[idx].id.kind = CellKind::Obstacle;
    }
    Ok(q)
}

/// Axis-aligned box grid of cols x rows cells, each taking its facets as
/// supports directly (the superset is the cell itself: exact for affine
/// dynamics, where no curvature compensation is needed). Not periodic; the
/// overflow symbols exist but sit behind an unreachable strip.
pub fn build_box_quantizer(
    origin: [f64; 2],
    cell: [f64; 2],
    cols: i32,
    rows: i32,
) -> Result<Quantizer> {
    let (w, h) = (cell[0], cell[1]);
    if w <= 0.0 || h <= 0.0 || cols < 1 || rows < 1 {
        return Err(Error::BadGeometry("degenerate box grid".into()));
    }
    let mut cells = Vec::new();
    let mut index = HashMap::new();
    for col in 0..cols {
        for row in 0..rows {
            let x0 = origin[0] + w * col as f64;
            let y0 = origin[1] + h * row as f64;
            let poly = ConvexPolytope::from_vertices_2d(&[
                [x0, y0],
                [x0 + w, y0],
                [x0 + w, y0 + h],
                [x0, y0 + h],
            ])?;
            let flats = vec![true; 4];
            let superset = StronglyConvexSuperset {
                generator: poly.clone(),
                radius: f64::INFINITY,
                covers: flats.iter().map(|_| crate::geometry::FacetCover::Flat).collect(),
            };
            let support = supporting_approximation(&superset);
            let bbox = ([x0, y0], [x0 + w, y0 + h]);
            index.insert((col, row), cells.len());
            cells.push(Cell {
                id: CellId::operating(col, row),
                poly,
                superset,
                support,
                center: [x0 + w / 2.0, y0 + h / 2.0],
                bbox,
            });
        }
    }
    Ok(Quantizer {
        s: w.min(h),
        n_half_cols: cols,
        strip: (f64::NEG_INFINITY, f64::INFINITY),
        period: f64::INFINITY,
        radius: f64::INFINITY,
        lattice: LatticeKind::Grid {
            origin,
            w,
            h,
            cols,
            rows,
        },
        cells,
        index,
    })
}

impl Quantizer {
    pub fn overflow_pos(&self) -> CellIdx {
        self.cells.len()
    }

    pub fn overflow_neg(&self) -> CellIdx {
        self.cells.len() + 1
    }

    /// |C| = stored cells plus the two overflow symbols.
    pub fn n_total(&self) -> usize {
        self.cells.len() + 2
    }

    pub fn kind(&self, idx: CellIdx) -> CellKind {
        if idx < self.cells.len() {
            self.cells[idx].id.kind
        } else if idx == self.overflow_pos() {
            CellKind::OverflowPos
        } else {
            CellKind::OverflowNeg
        }
    }

    pub fn id(&self, idx: CellIdx) -> CellId {
        if idx < self.cells.len() {
            self.cells[idx].id
        } else if idx == self.overflow_pos() {
            CellId {
                kind: CellKind::OverflowPos,
                col: 0,
                row: 0,
            }
        } else {
            CellId {
                kind: CellKind::OverflowNeg,
                col: 0,
                row: 0,
            }
        }
    }

    pub fn idx_of(&self, id: &CellId) -> Option<CellIdx> {
        match id.kind {
            CellKind::OverflowPos => Some(self.overflow_pos()),
            CellKind::OverflowNeg => Some(self.overflow_neg()),
            _ => self.index.get(&(id.col, id.row)).copied(),
        }
    }

    pub fn cell(&self, idx: CellIdx) -> Option<&Cell> {
        self.cells.get(idx)
    }

    /// Member of C' (constraint propagation continues only through these).
    pub fn is_operating(&self, idx: CellIdx) -> bool {
        idx < self.cells.len() && self.cells[idx].id.kind == CellKind::Operating
    }

    pub fn operating_count(&self) -> usize {
        self.cells
            .iter()
            .filter(|c| c.id.kind == CellKind::Operating)
            .count()
    }

    /// All cells containing x (first coordinate wrapped); boundary points
    /// report every incident cell. Sorted by CellId for reproducible
    /// tie-breaking.
    pub fn locate(&self, x: &[f64]) -> Vec<CellIdx> {
        let mut out = Vec::new();
        for (i, c) in self.cells.iter().enumerate() {
            let px = c.center[0] + wrap_delta(x[0] - c.center[0], self.period);
            if px < c.bbox.0[0] - TOL_GEOM
                || px > c.bbox.1[0] + TOL_GEOM
                || x[1] < c.bbox.0[1] - TOL_GEOM
                || x[1] > c.bbox.1[1] + TOL_GEOM
            {
                continue;
            }
            if c.poly.contains(&[px, x[1]], TOL_GEOM) {
                out.push(i);
            }
        }
        if x[1] >= self.strip.1 - TOL_GEOM {
            out.push(self.overflow_pos());
        }
        if x[1] <= self.strip.0 + TOL_GEOM {
            out.push(self.overflow_neg());
        }
        out.sort_by_key(|&i| self.id(i));
        out
    }

    /// Constraint rows of a cell placed at horizontal offset `shift` from its
    /// canonical position. Overflow symbols contribute their single strip
    /// half-plane (shift-invariant).
    pub fn cell_rows(&self, idx: CellIdx, shift: f64) -> Vec<LinRow> {
        if let Some(c) = self.cells.get(idx) {
            c.poly
                .facets
                .iter()
                .map(|f| {
                    let mut r = f.as_row();
                    r.b += r.a[0] * shift;
                    r
                })
                .collect()
        } else if idx == self.overflow_pos() {
            vec![LinRow {
                a: vec![0.0, -1.0],
                b: -self.strip.1,
            }]
        } else {
            vec![LinRow {
                a: vec![0.0, 1.0],
                b: self.strip.0,
            }]
        }
    }

    /// Largest chord-to-arc gap over all superset facets; zero when every
    /// cover is flat.
    pub fn max_sagitta(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for c in &self.cells {
            let m = c.poly.vertices.len();
            for (i, cover) in c.superset.covers.iter().enumerate() {
                if matches!(cover, crate::geometry::FacetCover::Arc { .. }) {
                    let a = &c.poly.vertices[i];
                    let b = &c.poly.vertices[(i + 1) % m];
                    let l = crate::geometry::dist(a, b);
                    let r = c.superset.radius;
                    worst = worst.max(r - (r * r - l * l / 4.0).max(0.0).sqrt());
                }
            }
        }
        worst
    }

    /// All cells (with their wrap shift relative to the probe frame) whose
    /// bounding box meets the bounding box of the probe points inflated by
    /// `inflation`. A superset of the truly intersecting cells; missing one
    /// would silently drop transitions.
    pub fn candidate_cells(&self, probes: &[&[f64]], inflation: f64) -> Vec<(CellIdx, f64)> {
        let mut xlo = f64::INFINITY;
        let mut xhi = f64::NEG_INFINITY;
        let mut ylo = f64::INFINITY;
        let mut yhi = f64::NEG_INFINITY;
        for p in probes {
            xlo = xlo.min(p[0]);
            xhi = xhi.max(p[0]);
            ylo = ylo.min(p[1]);
            yhi = yhi.max(p[1]);
        }
        xlo -= inflation;
        xhi += inflation;
        ylo -= inflation;
        yhi += inflation;
        let mut out = Vec::new();
        match &self.lattice {
            LatticeKind::Hex => {
                let pitch = 3.0f64.sqrt() * self.s;
                let j_lo = (xlo / pitch).floor() as i64 - 1;
                let j_hi = (xhi / pitch).ceil() as i64 + 1;
                for j in j_lo..=j_hi {
                    let j0 = j.rem_euclid(self.n_half_cols as i64) as i32;
                    let shift =
                        (j - j0 as i64) as f64 / self.n_half_cols as f64 * self.period;
                    let k_lo = ((ylo / self.s - 2.0) / 3.0).floor() as i32 - 1;
                    let k_hi = ((yhi / self.s + 2.0) / 3.0).ceil() as i32 + 1;
                    for k in k_lo..=k_hi {
                        if let Some(&idx) = self.index.get(&(j0, k)) {
                            let c = &self.cells[idx];
                            if c.bbox.0[0] + shift <= xhi
                                && c.bbox.1[0] + shift >= xlo
                                && c.bbox.0[1] <= yhi
                                && c.bbox.1[1] >= ylo
                            {
                                out.push((idx, shift));
                            }
                        }
                    }
                }
            }
            LatticeKind::Grid {
                origin,
                w,
                h,
                cols,
                rows,
            } => {
                let c_lo = (((xlo - origin[0]) / w).floor() as i64).max(0) as i32;
                let c_hi = (((xhi - origin[0]) / w).ceil() as i64).min(*cols as i64 - 1) as i32;
                let r_lo = (((ylo - origin[1]) / h).floor() as i64).max(0) as i32;
                let r_hi = (((yhi - origin[1]) / h).ceil() as i64).min(*rows as i64 - 1) as i32;
                for col in c_lo..=c_hi {
                    for row in r_lo..=r_hi {
                        if let Some(&idx) = self.index.get(&(col, row)) {
                            let c = &self.cells[idx];
                            if c.bbox.0[0] <= xhi
                                && c.bbox.1[0] >= xlo
                                && c.bbox.0[1] <= yhi
                                && c.bbox.1[1] >= ylo
                            {
                                out.push((idx, 0.0));
                            }
                        }
                    }
                }
            }
        }
        if yhi >= self.strip.1 {
            out.push((self.overflow_pos(), 0.0));
        }
        if ylo <= self.strip.0 {
            out.push((self.overflow_neg(), 0.0));
        }
        out
    }
}

/// The case-study quantizer: scale pi/(16 sqrt3), strip [-pi, pi], period
/// 2 pi. Cell counts are load-bearing for everything downstream, so they are
/// asserted here.
pub fn cylinder_hex_quantizer(obstacles: &[CellId], radius: f64) -> Result<Quantizer> {
    let s = std::f64::consts::PI / (16.0 * 3.0f64.sqrt());
    let pi = std::f64::consts::PI;
    let q = build_hex_quantizer(s, (-pi, pi), 2.0 * pi, obstacles, radius, None)?;
    let n_op = q.cells.len();
    if n_op != 304 {
        return Err(Error::BadGeometry(format!(
            "expected 304 operating-range cells, lattice produced {n_op}"
        )));
    }
    debug_assert_eq!(q.n_total(), 306);
    Ok(q)
}
