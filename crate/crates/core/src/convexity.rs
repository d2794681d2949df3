//! Sufficient conditions under which images of strongly convex sets stay
//! convex, packaged as certificates that bound the admissible superset
//! radius r, plus samplers estimating the required curvature constants and a
//! grid-sizing helper.

use crate::dynamics::{SampledSystem, SystemModel};
use crate::error::{Error, Result};
use crate::geometry::{norm, ConvexPolytope};
use nalgebra::DMatrix;
use rand::Rng as _;
use rand::SeedableRng as _;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CertificateKind {
    DiscreteL1L2,
    ContinuousM1M2,
    ContinuousC2,
    PendulumClosedForm,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Horizon {
    Steps(usize),
    Time(f64),
}

/// A convexity certificate: the named bounds and the largest superset radius
/// they admit. `estimated` marks Monte Carlo constants (non-rigorous); exact
/// constants can be injected through configuration instead.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Certificate {
    pub kind: CertificateKind,
    pub horizon: Horizon,
    pub bounds: BTreeMap<String, f64>,
    pub r_max: f64,
    pub valid: bool,
    pub estimated: bool,
}

impl Certificate {
    /// Does the certificate admit supersets of radius r?
    pub fn admits(&self, r: f64) -> bool {
        self.valid && r <= self.r_max
    }
}

/// r_max = 1 / (L2 sum_{tau<N} L1^tau); infinite for L2 = 0 (affine maps).
pub fn radius_discrete(l1: f64, l2: f64, n: usize) -> Certificate {
    assert!(l1 > 0.0 && l2 >= 0.0 && n >= 1);
    let geo: f64 = (0..n).map(|t| l1.powi(t as i32)).sum();
    let r_max = if l2 == 0.0 { f64::INFINITY } else { 1.0 / (l2 * geo) };
    Certificate {
        kind: CertificateKind::DiscreteL1L2,
        horizon: Horizon::Steps(n),
        bounds: BTreeMap::from([("L1".into(), l1), ("L2".into(), l2)]),
        r_max,
        valid: r_max > 0.0,
        estimated: false,
    }
}

/// r_max = M1 / (M2 (e^{M1 t} - 1)), degenerating to 1/(M2 t) at M1 = 0 and
/// to infinity for M2 = 0.
pub fn radius_continuous(m1: f64, m2: f64, t: f64) -> Certificate {
    assert!(m2 >= 0.0 && t > 0.0);
    let r_max = if m2 == 0.0 {
        f64::INFINITY
    } else if m1 == 0.0 {
        1.0 / (m2 * t)
    } else {
        m1 / (m2 * ((m1 * t).exp() - 1.0))
    };
    Certificate {
        kind: CertificateKind::ContinuousM1M2,
        horizon: Horizon::Time(t),
        bounds: BTreeMap::from([("M1".into(), m1), ("M2".into(), m2)]),
        r_max,
        valid: r_max > 0.0,
        estimated: false,
    }
}

/// Closed-form radius for the pendulum family, valid under two side
/// conditions on the damping and the time horizon.
pub fn radius_pendulum(omega: f64, gamma: f64, u_hat: f64, t: f64) -> Result<Certificate> {
    let w_hat = 1.0f64.max(omega.abs() * (1.0 + u_hat * u_hat).powf(0.25));
    if !(0.0..=0.75 * w_hat).contains(&gamma) {
        return Err(Error::ConditionsViolated(format!(
            "damping gamma = {gamma} outside [0, 3/4 w_hat] with w_hat = {w_hat}"
        )));
    }
    if 2.0 * (w_hat * w_hat - gamma * gamma).sqrt() * t > std::f64::consts::PI {
        return Err(Error::ConditionsViolated(format!(
            "horizon t = {t} violates 2 sqrt(w_hat^2 - gamma^2) t <= pi"
        )));
    }
    let num = 12.0 * w_hat * w_hat * (1.0 + (w_hat + gamma).powi(2)).powf(-1.5);
    let den = (3.0 * w_hat * t).sinh()
        + (w_hat * t).sinh() * (12.0 * (w_hat.powi(-2) + 1.0).powf(-1.5) - 3.0);
    let r_max = if den > 0.0 { num / den } else { f64::INFINITY };
    Ok(Certificate {
        kind: CertificateKind::PendulumClosedForm,
        horizon: Horizon::Time(t),
        bounds: BTreeMap::from([
            ("omega".into(), omega),
            ("gamma".into(), gamma),
            ("u_hat".into(), u_hat),
            ("w_hat".into(), w_hat),
        ]),
        r_max,
        valid: r_max > 0.0,
        estimated: false,
    })
}

/// Finite-difference Jacobian of the one-step map.
pub fn fd_step_jacobian(sys: &SystemModel, x: &[f64], u: usize) -> Result<DMatrix<f64>> {
    let n = sys.n();
    let mut j = DMatrix::zeros(n, n);
    let h = 1e-6;
    for c in 0..n {
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[c] += h;
        xm[c] -= h;
        let fp = sys.step(&xp, u)?;
        let fm = sys.step(&xm, u)?;
        for r in 0..n {
            j[(r, c)] = (fp[r] - fm[r]) / (2.0 * h);
        }
    }
    Ok(j)
}

pub struct EstimatedBounds {
    pub l1: f64,
    pub l2: f64,
    pub estimated: bool,
}

const SAFETY: f64 = 1.05;

/// Monte Carlo estimates of the one-step curvature constants over tube
/// sample points: L1 bounds the singular-value quotient of the step
/// Jacobian, L2 its relative Lipschitz constant. Inflated by a safety
/// factor and flagged as estimated.
pub fn estimate_bounds_discrete(
    sys: &SystemModel,
    tube_samples: &[Vec<f64>],
    seed: u64,
) -> Result<EstimatedBounds> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = sys.n();
    let mut l1: f64 = 0.0;
    let mut l2: f64 = 0.0;
    let h = 1e-4;
    for x in tube_samples {
        for u in 0..sys.inputs().len() {
            let j = fd_step_jacobian(sys, x, u)?;
            let svd = j.clone().svd(false, false);
            let smax = svd.singular_values.max();
            let smin = svd.singular_values.min();
            if smin <= 1e-12 {
                return Err(Error::SingularJacobian { at: x.clone() });
            }
            l1 = l1.max(smax * smax / smin);
            // Lipschitz quotient of x -> D1G at a random nearby probe
            let dir: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let dn = norm(&dir);
            if dn == 0.0 {
                continue;
            }
            let xh: Vec<f64> = x.iter().zip(&dir).map(|(a, d)| a + h * d / dn).collect();
            let jh = fd_step_jacobian(sys, &xh, u)?;
            let inv = j.clone().try_inverse().ok_or(Error::SingularJacobian {
                at: x.clone(),
            })?;
            let quot = (&inv * &jh - DMatrix::<f64>::identity(n, n)).norm() / h;
            l2 = l2.max(quot);
        }
    }
    Ok(EstimatedBounds {
        l1: l1 * SAFETY,
        l2: l2 * SAFETY,
        estimated: true,
    })
}

/// Monte Carlo estimates of the continuous-time constants: M1 bounds
/// 2 mu+ - mu- of the symmetric part of D1F, M2 its Lipschitz constant.
pub fn estimate_bounds_continuous(
    sys: &SampledSystem,
    tube_samples: &[Vec<f64>],
    seed: u64,
) -> Result<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = sys.n;
    let mut m1 = f64::NEG_INFINITY;
    let mut m2: f64 = 0.0;
    let h = 1e-4;
    for x in tube_samples {
        for u in 0..sys.inputs.len() {
            let uv = &sys.inputs[u].value;
            let a = (sys.rhs_jac)(x, uv);
            let sym = (&a + a.transpose()) * 0.5;
            let eig = sym.symmetric_eigenvalues();
            m1 = m1.max(2.0 * eig.max() - eig.min());
            let dir: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let dn = norm(&dir);
            if dn == 0.0 {
                continue;
            }
            let xh: Vec<f64> = x.iter().zip(&dir).map(|(a, d)| a + h * d / dn).collect();
            let ah = (sys.rhs_jac)(&xh, uv);
            m2 = m2.max((&ah - &a).norm() / h);
        }
    }
    Ok((m1 * SAFETY, m2 * SAFETY))
}

/// Monte Carlo maximum of the normalized back-transported second variation,
/// the constant of the C^2 criterion: max over x, unit h, u, delta <= t of
/// |D2phi(delta)^-1 D2^2 phi(delta) h^2| / |h|^2. The criterion admits radii
/// r with r * L2 <= 1.
pub fn estimate_l2_integral(
    sys: &SampledSystem,
    cell_samples: &[Vec<f64>],
    t: f64,
    n_deltas: usize,
    seed: u64,
) -> Result<f64> {
    if sys.rhs_hess.is_none() {
        return Err(Error::HessianUnavailable);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = sys.n;
    let mut worst: f64 = 0.0;
    for x in cell_samples {
        for u in 0..sys.inputs.len() {
            let ang: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            let hvec: Vec<f64> = if n == 2 {
                vec![ang.cos(), ang.sin()]
            } else {
                let mut v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let vn = norm(&v).max(1e-12);
                v.iter_mut().for_each(|c| *c /= vn);
                v
            };
            for k in 1..=n_deltas {
                let delta = t * k as f64 / n_deltas as f64;
                let z = sys.second_variation_transport(x, u, &hvec, delta)?;
                // back-transport through the flow Jacobian at delta
                let j = fd_flow_jacobian(sys, x, u, delta)?;
                let lu = j.lu();
                let zin = nalgebra::DVector::from_column_slice(&z);
                let back = lu.solve(&zin).ok_or(Error::SingularJacobian {
                    at: x.clone(),
                })?;
                worst = worst.max(back.norm());
            }
        }
    }
    Ok(worst * SAFETY)
}

/// Finite-difference Jacobian of the time-delta flow map.
fn fd_flow_jacobian(sys: &SampledSystem, x: &[f64], u: usize, delta: f64) -> Result<DMatrix<f64>> {
    let n = sys.n;
    let mut j = DMatrix::zeros(n, n);
    let h = 1e-6;
    for c in 0..n {
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[c] += h;
        xm[c] -= h;
        let fp = sys.flow(&xp, u, delta)?;
        let fm = sys.flow(&xm, u, delta)?;
        for r in 0..n {
            j[(r, c)] = (fp[r] - fm[r]) / (2.0 * h);
        }
    }
    Ok(j)
}

/// Largest dyadic scale lambda = 2^k such that the scaled template cell is
/// coverable by balls of the certified radius (circumradius test) and the
/// inflated covering stays inside the allowed overshoot `slack` around the
/// target region.
pub fn grid_sizing(r_max: f64, template: &ConvexPolytope, slack: f64) -> Result<f64> {
    let cr = template.circumradius();
    if slack <= 0.0 {
        return Err(Error::NoAdmissibleScale);
    }
    let mut bound = slack / cr;
    if r_max.is_finite() {
        bound = bound.min(r_max / cr);
    }
    if bound <= 0.0 || !bound.is_finite() {
        return Err(Error::NoAdmissibleScale);
    }
    let k = bound.log2().floor() as i32;
    if k < -40 {
        return Err(Error::NoAdmissibleScale);
    }
    Ok(2.0f64.powi(k))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::InputSymbol;
    use crate::geometry::{strongly_convex_hull, StronglyConvexSuperset};
    use crate::pendulum::{pendulum_system, PendulumParams};
    use proptest::prelude::*;

    #[test]
    fn discrete_radius_examples() {
        assert!((radius_discrete(1.0, 1.0, 3).r_max - 1.0 / 3.0).abs() < 1e-15);
        assert!(radius_discrete(2.0, 0.0, 5).r_max.is_infinite());
        assert!((radius_discrete(2.0, 0.5, 2).r_max - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn continuous_radius_examples() {
        assert!((radius_continuous(0.0, 1.0, 0.5).r_max - 2.0).abs() < 1e-15);
        assert!((radius_continuous(1.0, 1.0, 2.0f64.ln()).r_max - 1.0).abs() < 1e-12);
        assert!(radius_continuous(3.0, 0.0, 1.0).r_max.is_infinite());
    }

    #[test]
    fn pendulum_radius_value() {
        let c = radius_pendulum(1.0, 0.01, 2.0, 0.6).unwrap();
        assert!(c.valid);
        assert!((0.40..=0.41).contains(&c.r_max), "r = {}", c.r_max);
        assert!(c.admits(0.4));
    }

    #[test]
    fn pendulum_side_conditions() {
        assert!(matches!(
            radius_pendulum(1.0, 2.0, 2.0, 0.6),
            Err(Error::ConditionsViolated(_))
        ));
        assert!(matches!(
            radius_pendulum(1.0, 0.01, 2.0, 2.0),
            Err(Error::ConditionsViolated(_))
        ));
    }

    #[test]
    fn pendulum_radius_blows_up_at_zero() {
        let mut last = 0.0;
        for t in [0.6, 0.3, 0.1, 0.01] {
            let r = radius_pendulum(1.0, 0.01, 2.0, t).unwrap().r_max;
            assert!(r > last, "r must grow as t shrinks");
            last = r;
        }
        assert!(last > 10.0);
    }

    #[test]
    fn generic_continuous_certificate_weaker_than_closed_form() {
        let p = PendulumParams::default();
        let sys = pendulum_system(&p);
        let mut samples = Vec::new();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..200 {
            samples.push(vec![
                rng.gen_range(-4.0..4.0),
                rng.gen_range(-3.4..3.4),
            ]);
        }
        let (m1, m2) = estimate_bounds_continuous(&sys, &samples, 1).unwrap();
        let generic = radius_continuous(m1, m2, 0.6);
        let closed = radius_pendulum(p.omega, p.gamma, p.u_hat, 0.6).unwrap();
        assert!(
            generic.r_max < closed.r_max,
            "generic {} vs closed {}",
            generic.r_max,
            closed.r_max
        );
    }

    #[test]
    fn estimate_bounds_linear_and_identity() {
        let ident = SystemModel::Discrete(crate::dynamics::DiscreteSystem {
            n: 2,
            inputs: vec![InputSymbol::scalar(0.0)],
            step: Box::new(|x, _| x.to_vec()),
            jacobian: Box::new(|_, _| DMatrix::identity(2, 2)),
        });
        let samples: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64 * 0.1, -0.3]).collect();
        let b = estimate_bounds_discrete(&ident, &samples, 2).unwrap();
        assert!((b.l1 - SAFETY).abs() < 1e-4);
        assert!(b.l2 < 1e-4);

        let lin = SystemModel::Discrete(crate::dynamics::DiscreteSystem {
            n: 2,
            inputs: vec![InputSymbol::scalar(0.0)],
            step: Box::new(|x, _| vec![2.0 * x[0] + x[1], 0.5 * x[1]]),
            jacobian: Box::new(|_, _| DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 0.0, 0.5])),
        });
        let b = estimate_bounds_discrete(&lin, &samples, 2).unwrap();
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 0.0, 0.5]);
        let svd = a.svd(false, false);
        let smax: f64 = svd.singular_values.max();
        let smin: f64 = svd.singular_values.min();
        let expect = smax * smax / smin;
        assert!((b.l1 / SAFETY - expect).abs() < 1e-3);
        assert!(b.l2 < 1e-3);
    }

    #[test]
    fn l2_integral_linear_zero_and_pendulum() {
        let mut rot = crate::dynamics::SampledSystem {
            n: 2,
            inputs: vec![InputSymbol::scalar(0.0)],
            rhs: Box::new(|x, _, out| {
                out[0] = x[1];
                out[1] = -x[0];
            }),
            rhs_jac: Box::new(|_, _| DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0])),
            rhs_hess: None,
            t_sample: 0.5,
            period: None,
            ode_tol: 1e-9,
        };
        rot.rhs_hess = Some(Box::new(|_, _, _| vec![0.0, 0.0]));
        let samples = vec![vec![0.2, 0.1], vec![-0.4, 0.6]];
        let l2 = estimate_l2_integral(&rot, &samples, 0.5, 3, 4).unwrap();
        assert!(l2 < 1e-8, "linear system must have zero curvature, got {l2}");

        let sys = pendulum_system(&PendulumParams::default());
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let samples: Vec<Vec<f64>> = (0..40)
            .map(|_| vec![rng.gen_range(-3.2..3.2), rng.gen_range(-3.2..3.2)])
            .collect();
        let l2 = estimate_l2_integral(&sys, &samples, 0.6, 3, 4).unwrap();
        assert!(l2 > 0.0);
        assert!(
            1.0 / l2 >= 0.4,
            "C2 criterion should admit the 0.4 supersets, 1/L2 = {}",
            1.0 / l2
        );
    }

    #[test]
    fn midpoint_convexity_probe() {
        // at 90 percent of the certified radius, images of the superset show
        // no midpoint violation: the midpoint of two image points flows back
        // into the superset
        let p = PendulumParams::default();
        let sys = pendulum_system(&p);
        let cert = radius_pendulum(p.omega, p.gamma, p.u_hat, 0.6).unwrap();
        let r = 0.9 * cert.r_max;
        let s = std::f64::consts::PI / (16.0 * 3.0f64.sqrt());
        let r3 = 3.0f64.sqrt();
        let hex = ConvexPolytope::from_vertices_2d(&[
            [0.0, 2.0 * s],
            [r3 * s, s],
            [r3 * s, -s],
            [0.0, -2.0 * s],
            [-r3 * s, -s],
            [-r3 * s, s],
        ])
        .unwrap()
        .translated(&[1.1, 0.4]);
        let sup = strongly_convex_hull(&hex, r).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let mut tested = 0;
        for _ in 0..1000 {
            let x = sample_superset(&mut rng, &sup);
            let y = sample_superset(&mut rng, &sup);
            let u = rng.gen_range(0..3);
            let t = 0.2 * rng.gen_range(1..=3) as f64;
            let fx = sys.flow(&x, u, t).unwrap();
            let fy = sys.flow(&y, u, t).unwrap();
            let mid = [(fx[0] + fy[0]) / 2.0, (fx[1] + fy[1]) / 2.0];
            let back = sys.flow(&mid, u, -t).unwrap();
            assert!(
                sup.contains(&back, 1e-7),
                "midpoint preimage escaped at {back:?}"
            );
            tested += 1;
        }
        assert_eq!(tested, 1000);
    }

    fn sample_superset(rng: &mut ChaCha8Rng, sup: &StronglyConvexSuperset) -> Vec<f64> {
        let (lo, hi) = sup.generator.bbox();
        loop {
            let x = vec![
                rng.gen_range(lo[0] - 0.05..hi[0] + 0.05),
                rng.gen_range(lo[1] - 0.05..hi[1] + 0.05),
            ];
            if sup.contains(&x, 0.0) {
                return x;
            }
        }
    }

    #[test]
    fn grid_sizing_examples() {
        let s = std::f64::consts::PI / (16.0 * 3.0f64.sqrt());
        let r3 = 3.0f64.sqrt();
        let hex = ConvexPolytope::from_vertices_2d(&[
            [0.0, 2.0 * s],
            [r3 * s, s],
            [r3 * s, -s],
            [0.0, -2.0 * s],
            [-r3 * s, -s],
            [-r3 * s, s],
        ])
        .unwrap();
        // the case-study grid is admissible at its certified radius
        let r = radius_pendulum(1.0, 0.01, 2.0, 0.6).unwrap().r_max;
        let lambda = grid_sizing(r, &hex, 1.0).unwrap();
        assert!(lambda >= 1.0, "lambda {lambda}");
        // infinite radius: scale limited by the slack only
        let l2 = grid_sizing(f64::INFINITY, &hex, 0.5).unwrap();
        assert!(l2 * hex.circumradius() <= 0.5);
        // zero slack: nothing fits
        assert!(matches!(
            grid_sizing(r, &hex, 0.0),
            Err(Error::NoAdmissibleScale)
        ));
    }

    proptest! {
        #[test]
        fn radius_monotone(
            l1 in 0.5f64..3.0,
            l2 in 0.01f64..2.0,
            n in 1usize..6,
        ) {
            let a = radius_discrete(l1, l2, n).r_max;
            let b = radius_discrete(l1, l2, n + 1).r_max;
            prop_assert!(b <= a);
            let c = radius_discrete(l1, l2 * 1.5, n).r_max;
            prop_assert!(c <= a);
            let d = radius_discrete(l1 * 1.1, l2, n).r_max;
            prop_assert!(d <= a + 1e-12);
        }

        #[test]
        fn continuous_radius_monotone(
            m1 in -1.0f64..3.0,
            m2 in 0.01f64..2.0,
            t in 0.05f64..2.0,
        ) {
            let a = radius_continuous(m1, m2, t).r_max;
            let b = radius_continuous(m1, m2, t * 1.5).r_max;
            prop_assert!(b <= a + 1e-12);
            let c = radius_continuous(m1, m2 * 2.0, t).r_max;
            prop_assert!(c <= a + 1e-12);
        }
    }
}
