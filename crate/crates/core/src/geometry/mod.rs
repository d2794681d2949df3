//! Half-space pairs, implicit polyhedra, convex polytope cells and their
//! strongly convex supersets.
//!
//! The atom of every set representation here is a point/normal pair (p, v)
//! standing for the half-space { x : <v, x - p> <= 0 }. Finite collections of
//! such pairs describe polyhedra implicitly; feasibility queries against them
//! reduce to small dense linear programs.

mod clip;
mod lp;

pub use clip::clip_polygon;
pub use lp::{phase_one, LinRow};

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Geometric tolerance used for membership and cross-checks.
pub const TOL_GEOM: f64 = 1e-9;

/// Feasibility tolerance of the LP solver.
pub const TOL_LP: f64 = 1e-8;

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// The half-space { x : <v, x - p> <= 0 }. Normals are kept unnormalized as
/// produced; all downstream tests are scale-invariant in v.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HalfSpacePair {
    pub p: Vec<f64>,
    pub v: Vec<f64>,
}

impl HalfSpacePair {
    pub fn new(p: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        if norm(&v) == 0.0 {
            return Err(Error::ZeroNormal);
        }
        Ok(HalfSpacePair { p, v })
    }

    /// <v, x - p>; nonpositive inside.
    pub fn eval(&self, x: &[f64]) -> f64 {
        dot(&self.v, x) - dot(&self.v, &self.p)
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        // tolerance scaled by |v| so the test is invariant under row scaling
        self.eval(x) <= tol * norm(&self.v)
    }

    pub fn translated(&self, d: &[f64]) -> Self {
        HalfSpacePair {
            p: self.p.iter().zip(d).map(|(a, b)| a + b).collect(),
            v: self.v.clone(),
        }
    }

    /// Row (a, b) of the inequality a.x <= b.
    pub fn as_row(&self) -> LinRow {
        LinRow {
            a: self.v.clone(),
            b: dot(&self.v, &self.p),
        }
    }
}

/// A finite set Sigma of supporting pairs, implicitly describing the
/// polyhedron P(Sigma). The two sentinels are sparse markers: an empty set of
/// pairs means P = whole space, the "all pairs" value means P = empty set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum SupportSet {
    WholeSpace,
    EmptyPoly,
    Pairs(Vec<HalfSpacePair>),
}

impl SupportSet {
    pub fn from_pairs(pairs: Vec<HalfSpacePair>) -> Self {
        SupportSet::Pairs(pairs)
    }

    pub fn pairs(&self) -> &[HalfSpacePair] {
        match self {
            SupportSet::Pairs(p) => p,
            _ => &[],
        }
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        match self {
            SupportSet::WholeSpace => true,
            SupportSet::EmptyPoly => false,
            SupportSet::Pairs(pairs) => pairs.iter().all(|h| h.contains(x, tol)),
        }
    }
}

/// Bounded convex polytope with both a vertex list (counterclockwise in 2-D)
/// and an irredundant H-representation. Both descriptions are cross-checked
/// at construction.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConvexPolytope {
    pub vertices: Vec<Vec<f64>>,
    pub facets: Vec<HalfSpacePair>,
}

impl ConvexPolytope {
    /// Builds a 2-D polytope from its vertex list. Vertices may arrive in
    /// either orientation; they are stored counterclockwise. Consecutive
    /// duplicates (within 1e-12 of the diameter) are merged.
    pub fn from_vertices_2d(verts: &[[f64; 2]]) -> Result<Self> {
        let mut vs: Vec<[f64; 2]> = Vec::with_capacity(verts.len());
        let diam = polygon_diameter(verts).max(1e-300);
        for &v in verts {
            if let Some(last) = vs.last() {
                if dist2(*last, v) <= 1e-12 * diam {
                    continue;
                }
            }
            vs.push(v);
        }
        while vs.len() > 1 && dist2(vs[0], *vs.last().unwrap()) <= 1e-12 * diam {
            vs.pop();
        }
        if vs.len() < 3 {
            return Err(Error::BadGeometry(format!(
                "need at least 3 distinct vertices, got {}",
                vs.len()
            )));
        }
        if signed_area(&vs) < 0.0 {
            vs.reverse();
        }
        let mut facets = Vec::with_capacity(vs.len());
        for i in 0..vs.len() {
            let a = vs[i];
            let b = vs[(i + 1) % vs.len()];
            let d = [b[0] - a[0], b[1] - a[1]];
            // outward normal of a counterclockwise edge
            let n = [d[1], -d[0]];
            facets.push(HalfSpacePair::new(vec![a[0], a[1]], vec![n[0], n[1]])?);
        }
        let poly = ConvexPolytope {
            vertices: vs.iter().map(|v| vec![v[0], v[1]]).collect(),
            facets,
        };
        // convexity and representation cross-check
        for v in &poly.vertices {
            for f in &poly.facets {
                if !f.contains(v, TOL_GEOM) {
                    return Err(Error::BadGeometry(
                        "vertex violates a facet: polygon not convex".into(),
                    ));
                }
            }
        }
        Ok(poly)
    }

    pub fn dim(&self) -> usize {
        self.vertices[0].len()
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        self.facets.iter().all(|f| f.contains(x, tol))
    }

    pub fn centroid(&self) -> Vec<f64> {
        let n = self.dim();
        let mut c = vec![0.0; n];
        for v in &self.vertices {
            for i in 0..n {
                c[i] += v[i];
            }
        }
        for ci in c.iter_mut() {
            *ci /= self.vertices.len() as f64;
        }
        c
    }

    /// Radius of the smallest enclosing ball of the vertices. Exact in 2-D
    /// (minimal enclosing circle by enumeration over support pairs/triples,
    /// fine for the small cells handled here); centroid bound otherwise.
    pub fn circumradius(&self) -> f64 {
        if self.dim() == 2 {
            return min_enclosing_circle_radius(&self.vertices);
        }
        let c = self.centroid();
        self.vertices
            .iter()
            .map(|v| dist(v, &c))
            .fold(0.0, f64::max)
    }

    pub fn bbox(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.dim();
        let mut lo = vec![f64::INFINITY; n];
        let mut hi = vec![f64::NEG_INFINITY; n];
        for v in &self.vertices {
            for i in 0..n {
                lo[i] = lo[i].min(v[i]);
                hi[i] = hi[i].max(v[i]);
            }
        }
        (lo, hi)
    }

    pub fn translated(&self, d: &[f64]) -> Self {
        ConvexPolytope {
            vertices: self
                .vertices
                .iter()
                .map(|v| v.iter().zip(d).map(|(a, b)| a + b).collect())
                .collect(),
            facets: self.facets.iter().map(|f| f.translated(d)).collect(),
        }
    }

    /// Exact Euclidean distance from x to the polygon (2-D only); 0 inside.
    pub fn distance_2d(&self, x: &[f64]) -> f64 {
        if self.contains(x, 0.0) {
            return 0.0;
        }
        let m = self.vertices.len();
        let mut best = f64::INFINITY;
        for i in 0..m {
            let a = &self.vertices[i];
            let b = &self.vertices[(i + 1) % m];
            best = best.min(point_segment_distance(x, a, b));
        }
        best
    }

    pub fn area_2d(&self) -> f64 {
        let vs: Vec<[f64; 2]> = self.vertices.iter().map(|v| [v[0], v[1]]).collect();
        signed_area(&vs)
    }
}

fn dist2(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

fn polygon_diameter(vs: &[[f64; 2]]) -> f64 {
    let mut d: f64 = 0.0;
    for i in 0..vs.len() {
        for j in i + 1..vs.len() {
            d = d.max(dist2(vs[i], vs[j]));
        }
    }
    d
}

fn signed_area(vs: &[[f64; 2]]) -> f64 {
    let mut s = 0.0;
    for i in 0..vs.len() {
        let a = vs[i];
        let b = vs[(i + 1) % vs.len()];
        s += a[0] * b[1] - b[0] * a[1];
    }
    s / 2.0
}

fn min_enclosing_circle_radius(vs: &[Vec<f64>]) -> f64 {
    let m = vs.len();
    let contains_all = |c: [f64; 2], r: f64| {
        vs.iter()
            .all(|v| (v[0] - c[0]).powi(2) + (v[1] - c[1]).powi(2) <= r * r + 1e-12 * r.max(1.0))
    };
    let mut best = f64::INFINITY;
    for i in 0..m {
        for j in i + 1..m {
            let c = [(vs[i][0] + vs[j][0]) / 2.0, (vs[i][1] + vs[j][1]) / 2.0];
            let r = dist(&vs[i], &vs[j]) / 2.0;
            if r < best && contains_all(c, r) {
                best = r;
            }
            for k in j + 1..m {
                if let Some((c, r)) = circumcircle(&vs[i], &vs[j], &vs[k]) {
                    if r < best && contains_all(c, r) {
                        best = r;
                    }
                }
            }
        }
    }
    best
}

fn circumcircle(a: &[f64], b: &[f64], c: &[f64]) -> Option<([f64; 2], f64)> {
    let d = 2.0 * (a[0] * (b[1] - c[1]) + b[0] * (c[1] - a[1]) + c[0] * (a[1] - b[1]));
    if d.abs() < 1e-300 {
        return None;
    }
    let a2 = a[0] * a[0] + a[1] * a[1];
    let b2 = b[0] * b[0] + b[1] * b[1];
    let c2 = c[0] * c[0] + c[1] * c[1];
    let ux = (a2 * (b[1] - c[1]) + b2 * (c[1] - a[1]) + c2 * (a[1] - b[1])) / d;
    let uy = (a2 * (c[0] - b[0]) + b2 * (a[0] - c[0]) + c2 * (b[0] - a[0])) / d;
    let r = ((a[0] - ux).powi(2) + (a[1] - uy).powi(2)).sqrt();
    Some(([ux, uy], r))
}

fn point_segment_distance(x: &[f64], a: &[f64], b: &[f64]) -> f64 {
    let ab: Vec<f64> = b.iter().zip(a).map(|(p, q)| p - q).collect();
    let ax: Vec<f64> = x.iter().zip(a).map(|(p, q)| p - q).collect();
    let len2 = dot(&ab, &ab);
    let t = if len2 > 0.0 {
        (dot(&ab, &ax) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let proj: Vec<f64> = a.iter().zip(&ab).map(|(ai, di)| ai + t * di).collect();
    dist(x, &proj)
}

/// Per-facet covering element of a strongly convex superset: a ball of the
/// common radius through the facet's endpoints, or the flat facet half-space
/// itself (used for strip-truncation edges).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub enum FacetCover {
    Arc { center: Vec<f64> },
    Flat,
}

/// Intersection of closed balls of one common radius (plus optional flat
/// cuts), covering a generator polytope. The generator is contained in every
/// ball; this is checked at construction.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StronglyConvexSuperset {
    pub generator: ConvexPolytope,
    pub radius: f64,
    pub covers: Vec<FacetCover>,
}

impl StronglyConvexSuperset {
    pub fn balls(&self) -> Vec<(Vec<f64>, f64)> {
        self.covers
            .iter()
            .filter_map(|c| match c {
                FacetCover::Arc { center } => Some((center.clone(), self.radius)),
                FacetCover::Flat => None,
            })
            .collect()
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        self.covers.iter().enumerate().all(|(i, c)| match c {
            FacetCover::Arc { center } => dist(x, center) <= self.radius + tol,
            FacetCover::Flat => self.generator.facets[i].contains(x, tol),
        })
    }
}

/// Smallest intersection of per-facet balls of radius r containing the cell:
/// for each facet, the ball whose boundary sphere passes through both facet
/// endpoints with center on the inward side.
pub fn strongly_convex_hull(cell: &ConvexPolytope, r: f64) -> Result<StronglyConvexSuperset> {
    let flats = vec![false; cell.facets.len()];
    strongly_convex_hull_with_flats(cell, r, &flats)
}

/// Variant keeping selected facets as flat cuts (no ball). Used for cells
/// truncated by the operating-strip boundary, whose straight cut edge is kept
/// as-is; the intersection with a half-plane preserves convexity of the
/// superset.
pub fn strongly_convex_hull_with_flats(
    cell: &ConvexPolytope,
    r: f64,
    flat_facets: &[bool],
) -> Result<StronglyConvexSuperset> {
    if cell.dim() != 2 {
        return Err(Error::BadGeometry("superset construction is 2-D".into()));
    }
    if r <= 0.0 {
        return Err(Error::BadGeometry("radius must be positive".into()));
    }
    let m = cell.vertices.len();
    let mut covers = Vec::with_capacity(m);
    for i in 0..m {
        if flat_facets[i] {
            covers.push(FacetCover::Flat);
            continue;
        }
        let a = &cell.vertices[i];
        let b = &cell.vertices[(i + 1) % m];
        let l = dist(a, b);
        if 2.0 * r < l {
            return Err(Error::CellTooLarge {
                radius: r,
                detail: format!("facet chord {l:.6} exceeds ball diameter"),
            });
        }
        let mid = [(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0];
        let v = &cell.facets[i].v;
        let vn = norm(v);
        let h = (r * r - (l / 2.0) * (l / 2.0)).sqrt();
        // center displaced inward from the edge midpoint
        let center = vec![mid[0] - h * v[0] / vn, mid[1] - h * v[1] / vn];
        covers.push(FacetCover::Arc { center });
    }
    let sup = StronglyConvexSuperset {
        generator: cell.clone(),
        radius: r,
        covers,
    };
    for (c, _) in sup.balls() {
        for v in &cell.vertices {
            if dist(v, &c) > r + TOL_GEOM {
                return Err(Error::CellTooLarge {
                    radius: r,
                    detail: "a vertex escapes a facet ball".into(),
                });
            }
        }
    }
    Ok(sup)
}

/// One supporting pair per facet: on arc facets p is the outermost point of
/// the arc (edge midpoint pushed outward by the sagitta) and v the outward
/// facet normal; flat facets keep their half-space exactly.
pub fn supporting_approximation(sup: &StronglyConvexSuperset) -> SupportSet {
    let cell = &sup.generator;
    let m = cell.vertices.len();
    let mut pairs = Vec::with_capacity(m);
    for i in 0..m {
        let f = &cell.facets[i];
        let vn = norm(&f.v);
        let unit: Vec<f64> = f.v.iter().map(|c| c / vn).collect();
        match &sup.covers[i] {
            FacetCover::Arc { center } => {
                let p: Vec<f64> = center
                    .iter()
                    .zip(&unit)
                    .map(|(c, u)| c + sup.radius * u)
                    .collect();
                pairs.push(HalfSpacePair { p, v: f.v.clone() });
            }
            FacetCover::Flat => {
                let a = &cell.vertices[i];
                let b = &cell.vertices[(i + 1) % m];
                let mid: Vec<f64> = a.iter().zip(b).map(|(x, y)| (x + y) / 2.0).collect();
                pairs.push(HalfSpacePair {
                    p: mid,
                    v: f.v.clone(),
                });
            }
        }
    }
    SupportSet::Pairs(pairs)
}

/// Outcome of a linear feasibility query.
#[derive(Clone, Debug, PartialEq)]
pub enum Feasibility {
    Feasible(Vec<f64>),
    Infeasible,
    /// Solver did not converge within its iteration cap. Callers must treat
    /// this as feasible; dropping a transition would break soundness.
    Indeterminate,
}

impl Feasibility {
    pub fn is_feasible_conservative(&self) -> bool {
        !matches!(self, Feasibility::Infeasible)
    }
}

/// Is P(a) intersect b nonempty? Sentinels short-circuit; otherwise the
/// combined inequality system goes to the phase-one solver.
pub fn feasible(a: &SupportSet, b: &ConvexPolytope) -> Feasibility {
    match a {
        SupportSet::EmptyPoly => Feasibility::Infeasible,
        SupportSet::WholeSpace => Feasibility::Feasible(b.vertices[0].clone()),
        SupportSet::Pairs(pairs) => {
            let rows: Vec<LinRow> = pairs
                .iter()
                .chain(&b.facets)
                .map(|h| h.as_row())
                .collect();
            feasible_rows(&rows, b.dim())
        }
    }
}

/// Feasibility of { x : a_i . x <= b_i } for an explicit row system.
pub fn feasible_rows(rows: &[LinRow], n: usize) -> Feasibility {
    phase_one(rows, n, TOL_LP)
}

/// Intersects 2-D half-plane rows into an explicit polygon by clipping a
/// bounding square. Returns None when the intersection is empty (or thinner
/// than eps).
pub fn polytope_from_rows_2d(rows: &[LinRow], half_extent: f64) -> Option<ConvexPolytope> {
    let h = half_extent;
    let mut poly = vec![[-h, -h], [h, -h], [h, h], [-h, h]];
    for r in rows {
        poly = clip_polygon(&poly, [r.a[0], r.a[1]], r.b, 1e-12);
        if poly.len() < 3 {
            return None;
        }
    }
    ConvexPolytope::from_vertices_2d(&poly).ok()
}

/// One-sided Hausdorff gap between a cell and the polyhedron of its
/// supporting pairs: max over vertices of the outer polygon of the distance
/// to the cell. Exact for convex sets since the distance function is convex.
pub fn hausdorff_gap_2d(cell: &ConvexPolytope, support: &SupportSet) -> f64 {
    let rows: Vec<LinRow> = support.pairs().iter().map(|h| h.as_row()).collect();
    let (lo, hi) = cell.bbox();
    let extent = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(lo[0].abs())
        .max(hi[0].abs())
        .max(lo[1].abs())
        .max(hi[1].abs())
        * 4.0
        + 1.0;
    let outer = polytope_from_rows_2d(&rows, extent).expect("support polyhedron empty");
    outer
        .vertices
        .iter()
        .map(|v| cell.distance_2d(v))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests;
