use super::*;
use proptest::prelude::*;
use rand::Rng as _;
use rand::SeedableRng as _;
use rand_chacha::ChaCha8Rng;

fn hex_scale() -> f64 {
    std::f64::consts::PI / (16.0 * 3.0f64.sqrt())
}

fn unit_hexagon(s: f64) -> ConvexPolytope {
    let r3 = 3.0f64.sqrt();
    ConvexPolytope::from_vertices_2d(&[
        [0.0, 2.0 * s],
        [r3 * s, s],
        [r3 * s, -s],
        [0.0, -2.0 * s],
        [-r3 * s, -s],
        [-r3 * s, s],
    ])
    .unwrap()
}

fn square(side: f64) -> ConvexPolytope {
    let h = side / 2.0;
    ConvexPolytope::from_vertices_2d(&[[-h, -h], [h, -h], [h, h], [-h, h]]).unwrap()
}

#[test]
fn feasible_shared_boundary() {
    let a = SupportSet::Pairs(vec![
        HalfSpacePair::new(vec![0.0, 0.0], vec![1.0, 0.0]).unwrap()
    ]);
    let b = ConvexPolytope::from_vertices_2d(&[[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
        .unwrap();
    match feasible(&a, &b) {
        Feasibility::Feasible(w) => assert!(w[0] <= 1e-7 && w[0] >= -1e-7 || w[0] < 0.0),
        other => panic!("expected feasible, got {other:?}"),
    }
}

#[test]
fn feasible_disjoint_slabs() {
    let a = SupportSet::Pairs(vec![
        HalfSpacePair::new(vec![0.0, 0.0], vec![1.0, 0.0]).unwrap(),
        HalfSpacePair::new(vec![1.0, 0.0], vec![-1.0, 0.0]).unwrap(),
    ]);
    let b = square(18.0);
    assert_eq!(feasible(&a, &b), Feasibility::Infeasible);
}

#[test]
fn feasible_empty_sentinel() {
    let b = square(1.0);
    assert_eq!(feasible(&SupportSet::EmptyPoly, &b), Feasibility::Infeasible);
    assert!(matches!(
        feasible(&SupportSet::WholeSpace, &b),
        Feasibility::Feasible(_)
    ));
}

#[test]
fn hexagon_sagitta() {
    let s = hex_scale();
    let hex = unit_hexagon(s);
    let edge = 2.0 * s;
    assert!((edge - std::f64::consts::PI / (8.0 * 3.0f64.sqrt())).abs() < 1e-15);
    let sup = strongly_convex_hull(&hex, 0.4).unwrap();
    assert_eq!(sup.balls().len(), 6);
    let expected_gap = 0.4 - (0.16 - (edge / 2.0) * (edge / 2.0)).sqrt();
    assert!((expected_gap - 0.0164).abs() < 5e-4, "gap {expected_gap}");
    // dense boundary sampling: superset boundary stays within sagitta of cell
    let support = supporting_approximation(&sup);
    for (i, pair) in support.pairs().iter().enumerate() {
        let mid_a = &hex.vertices[i];
        let mid_b = &hex.vertices[(i + 1) % 6];
        let mid = [(mid_a[0] + mid_b[0]) / 2.0, (mid_a[1] + mid_b[1]) / 2.0];
        let d = dist(&pair.p, &mid);
        assert!((d - expected_gap).abs() < 1e-12, "arc midpoint off by {d}");
    }
}

#[test]
fn square_sagitta_quadratic() {
    let sq = square(0.1);
    let sup = strongly_convex_hull(&sq, 10.0).unwrap();
    let gap = 10.0 - (100.0f64 - 0.0025).sqrt();
    assert!((gap - 1.25e-4).abs() < 1e-6);
    let support = supporting_approximation(&sup);
    for pair in support.pairs() {
        let vn = norm(&pair.v);
        let offset = dot(&pair.v, &pair.p) / vn - 0.05;
        assert!((offset - gap).abs() < 1e-12);
    }
}

#[test]
fn triangle_at_circumradius() {
    let r3 = 3.0f64.sqrt();
    let tri =
        ConvexPolytope::from_vertices_2d(&[[1.0, 0.0], [-0.5, r3 / 2.0], [-0.5, -r3 / 2.0]])
            .unwrap();
    let r = tri.circumradius();
    assert!((r - 1.0).abs() < 1e-12);
    let sup = strongly_convex_hull(&tri, r).unwrap();
    for (c, radius) in sup.balls() {
        for v in &tri.vertices {
            assert!((dist(v, &c) - radius).abs() < 1e-9);
        }
    }
}

#[test]
fn hexagon_support_normal_angles() {
    let hex = unit_hexagon(hex_scale());
    let sup = strongly_convex_hull(&hex, 0.4).unwrap();
    let support = supporting_approximation(&sup);
    let mut angles: Vec<f64> = support
        .pairs()
        .iter()
        .map(|h| {
            let a = h.v[1].atan2(h.v[0]).to_degrees();
            (a + 360.0) % 360.0
        })
        .collect();
    angles.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let expected = [0.0, 60.0, 120.0, 180.0, 240.0, 300.0];
    for (a, e) in angles.iter().zip(expected) {
        assert!((a - e).abs() < 1e-9, "angle {a} vs {e}");
    }
}

#[test]
fn containment_chain() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let hex = unit_hexagon(hex_scale());
    let sup = strongly_convex_hull(&hex, 0.4).unwrap();
    let support = supporting_approximation(&sup);
    for v in &hex.vertices {
        assert!(sup.contains(v, TOL_GEOM));
        assert!(support.contains(v, TOL_GEOM));
    }
    // dense boundary sampling of the cell
    for _ in 0..1000 {
        let i = rng.gen_range(0..hex.vertices.len());
        let a = &hex.vertices[i];
        let b = &hex.vertices[(i + 1) % hex.vertices.len()];
        let t: f64 = rng.gen();
        let x = [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
        assert!(sup.contains(&x, TOL_GEOM));
        assert!(support.contains(&x, TOL_GEOM));
    }
}

#[test]
fn cell_too_large_rejected() {
    let sq = square(1.0);
    match strongly_convex_hull(&sq, 0.4) {
        Err(Error::CellTooLarge { .. }) => {}
        other => panic!("expected CellTooLarge, got {other:?}"),
    }
}

#[test]
fn flat_truncation_facet() {
    // hexagon clipped from above, strip facet kept flat
    let s = hex_scale();
    let hex = unit_hexagon(s);
    let verts: Vec<[f64; 2]> = hex.vertices.iter().map(|v| [v[0], v[1]]).collect();
    // cut height inside the vertical-edge span so the clip yields a pentagon,
    // as the operating-strip boundary does for the boundary row of cells
    let cut = clip_polygon(&verts, [0.0, 1.0], 0.5 * s, 1e-12);
    let pent = ConvexPolytope::from_vertices_2d(&cut).unwrap();
    assert_eq!(pent.vertices.len(), 5);
    let flats: Vec<bool> = pent
        .facets
        .iter()
        .map(|f| {
            let vn = norm(&f.v);
            (f.v[1] / vn - 1.0).abs() < 1e-9
        })
        .collect();
    assert_eq!(flats.iter().filter(|f| **f).count(), 1);
    let sup = strongly_convex_hull_with_flats(&pent, 0.4, &flats).unwrap();
    assert_eq!(sup.balls().len(), 4);
    let support = supporting_approximation(&sup);
    // truncation facet supported exactly on the straight edge (sagitta 0)
    let idx = flats.iter().position(|f| *f).unwrap();
    let pair = &support.pairs()[idx];
    assert!((pair.eval(&pair.p)).abs() < 1e-12);
    assert!((pair.p[1] - 0.5 * s).abs() < 1e-12);
}

#[test]
fn sagitta_quadratic_exponent() {
    // Hausdorff gap between cell and P(Sigma) over halved scales: slope of
    // log-gap vs log-scale must be quadratic
    let s0 = hex_scale();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for k in 0..4 {
        let s = s0 / (1 << k) as f64;
        let hex = unit_hexagon(s);
        let sup = strongly_convex_hull(&hex, 0.4).unwrap();
        let gap = hausdorff_gap_2d(&hex, &supporting_approximation(&sup));
        xs.push((s).ln());
        ys.push(gap.ln());
    }
    let slope = fit_slope(&xs, &ys);
    assert!((1.9..=2.1).contains(&slope), "exponent {slope}");
}

pub fn fit_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let num: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let den: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    num / den
}

#[test]
fn ball_containment_lemma() {
    // for x, y in a ball of radius r, the ball of radius |x-y|^2/(8r) about
    // the midpoint lies inside
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let r = 1.7;
    for _ in 0..10_000 {
        let x = sample_ball(&mut rng, r);
        let y = sample_ball(&mut rng, r);
        let d = dist(&x, &y);
        let rho = d * d / (8.0 * r);
        let mid = [(x[0] + y[0]) / 2.0, (x[1] + y[1]) / 2.0];
        // farthest point of the small ball from the origin
        let mn = norm(&mid);
        let reach = if mn > 0.0 { mn + rho } else { rho };
        assert!(reach <= r + 1e-12, "escape by {}", reach - r);
    }
}

fn sample_ball(rng: &mut ChaCha8Rng, r: f64) -> Vec<f64> {
    loop {
        let x = rng.gen_range(-r..r);
        let y = rng.gen_range(-r..r);
        if x * x + y * y <= r * r {
            return vec![x, y];
        }
    }
}

#[test]
fn lp_matches_clipping_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let mut feas = 0;
    for _ in 0..500 {
        let m = rng.gen_range(2..8);
        let rows: Vec<LinRow> = (0..m)
            .map(|_| {
                let ang: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
                LinRow {
                    a: vec![ang.cos(), ang.sin()],
                    b: rng.gen_range(-0.6..1.0),
                }
            })
            .collect();
        let by_clip = polytope_from_rows_2d(&rows, 100.0).is_some();
        let by_lp = feasible_rows(&rows, 2);
        match by_lp {
            Feasibility::Feasible(w) => {
                feas += 1;
                for r in &rows {
                    assert!(dot(&r.a, &w) <= r.b + 1e-6, "witness violates a row");
                }
                assert!(by_clip, "LP feasible but clipping found empty set");
            }
            Feasibility::Infeasible => {
                assert!(!by_clip, "LP infeasible but clipping found a polygon");
            }
            Feasibility::Indeterminate => {}
        }
    }
    assert!(feas > 50, "degenerate corpus");
}

proptest! {
    #[test]
    fn feasible_invariant_under_row_scaling(
        scale in 1e-3f64..1e3,
        shift_x in -1.0f64..1.0,
        shift_y in -1.0f64..1.0,
    ) {
        let a = SupportSet::Pairs(vec![
            HalfSpacePair::new(vec![shift_x, shift_y], vec![scale, 0.0]).unwrap(),
            HalfSpacePair::new(vec![shift_x, shift_y], vec![0.0, -scale]).unwrap(),
        ]);
        let b = square(1.0);
        let unscaled = SupportSet::Pairs(vec![
            HalfSpacePair::new(vec![shift_x, shift_y], vec![1.0, 0.0]).unwrap(),
            HalfSpacePair::new(vec![shift_x, shift_y], vec![0.0, -1.0]).unwrap(),
        ]);
        let r1 = feasible(&a, &b).is_feasible_conservative();
        let r2 = feasible(&unscaled, &b).is_feasible_conservative();
        prop_assert_eq!(r1, r2);
    }

    #[test]
    fn clip_stays_inside(b in -0.4f64..1.4) {
        let sq = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
        let out = clip_polygon(&sq, [1.0, 0.0], b, 1e-12);
        for p in &out {
            prop_assert!(p[0] <= b + 1e-9);
            prop_assert!(p[0] >= -1e-9 && p[1] >= -1e-9 && p[1] <= 1.0 + 1e-9);
        }
    }
}
