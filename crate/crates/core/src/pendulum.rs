//! Built-in plant: pendulum on a cart-like actuated pivot,
//!   dx1/dt = x2
//!   dx2/dt = -w^2 sin(x1) - u w^2 cos(x1) - 2 g x2
//! with angular position x1 living on a circle of period 2 pi. The input
//! alphabet is a finite set of constant accelerations.

use crate::dynamics::{InputSymbol, SampledSystem, ODE_TOL};
use nalgebra::DMatrix;
use std::f64::consts::PI;

#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct PendulumParams {
    pub omega: f64,
    pub gamma: f64,
    pub u_hat: f64,
    pub t_sample: f64,
}

impl Default for PendulumParams {
    fn default() -> Self {
        PendulumParams {
            omega: 1.0,
            gamma: 0.01,
            u_hat: 2.0,
            t_sample: 0.2,
        }
    }
}

/// Input alphabet {0, -u_hat, +u_hat}.
pub fn pendulum_inputs(u_hat: f64) -> Vec<InputSymbol> {
    vec![
        InputSymbol::scalar(0.0),
        InputSymbol::scalar(-u_hat),
        InputSymbol::scalar(u_hat),
    ]
}

pub fn pendulum_system(p: &PendulumParams) -> SampledSystem {
    let (w, g) = (p.omega, p.gamma);
    let w2 = w * w;
    SampledSystem {
        n: 2,
        inputs: pendulum_inputs(p.u_hat),
        rhs: Box::new(move |x, u, out| {
            out[0] = x[1];
            out[1] = -w2 * x[0].sin() - u[0] * w2 * x[0].cos() - 2.0 * g * x[1];
        }),
        rhs_jac: Box::new(move |x, u| {
            DMatrix::from_row_slice(
                2,
                2,
                &[
                    0.0,
                    1.0,
                    -w2 * x[0].cos() + u[0] * w2 * x[0].sin(),
                    -2.0 * g,
                ],
            )
        }),
        rhs_hess: Some(Box::new(move |x, u, h| {
            // only the x1 x1 entry of the second row is nonzero
            let d2 = w2 * x[0].sin() + u[0] * w2 * x[0].cos();
            vec![0.0, d2 * h[0] * h[0]]
        })),
        t_sample: p.t_sample,
        period: Some(vec![2.0 * PI, 0.0]),
        ode_tol: ODE_TOL,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::integrate_fixed;
    use crate::geometry::{dist, norm, HalfSpacePair};
    use rand::Rng as _;
    use rand::SeedableRng as _;
    use rand_chacha::ChaCha8Rng;

    fn sys() -> SampledSystem {
        pendulum_system(&PendulumParams::default())
    }

    /// Central-difference Jacobian of the sampled flow map x0 -> phi(T, x0, u).
    fn fd_flow_jacobian(s: &SampledSystem, x0: &[f64], u: usize) -> [[f64; 2]; 2] {
        let h = 1e-6;
        let mut j = [[0.0; 2]; 2];
        for c in 0..2 {
            let mut xp = x0.to_vec();
            let mut xm = x0.to_vec();
            xp[c] += h;
            xm[c] -= h;
            let fp = s.step(&xp, u).unwrap();
            let fm = s.step(&xm, u).unwrap();
            for r in 0..2 {
                j[r][c] = (fp[r] - fm[r]) / (2.0 * h);
            }
        }
        j
    }

    #[test]
    fn flow_matches_reference() {
        let s = sys();
        let x = s.flow(&[0.1, 0.0], 0, 0.2).unwrap();
        let reference = integrate_fixed(
            |x, out| {
                out[0] = x[1];
                out[1] = -x[0].sin() - 0.02 * x[1];
            },
            &[0.1, 0.0],
            0.2,
            20_000,
        );
        assert!(dist(&x, &reference) < 1e-8, "{x:?} vs {reference:?}");
    }

    #[test]
    fn fixed_step_fallback_agrees() {
        let s = sys();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let x0 = [
                rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI),
                rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI),
            ];
            let u = rng.gen_range(0..3);
            let uv = s.inputs[u].value.clone();
            let adaptive = s.step(&x0, u).unwrap();
            let rhs = &s.rhs;
            let fixed = integrate_fixed(|x, out| rhs(x, &uv, out), &x0, s.t_sample, 200);
            assert!(dist(&adaptive, &fixed) < 1e-6);
        }
    }

    #[test]
    fn comp_ext_matches_fd_flow_jacobian() {
        // transported normal must equal (D2 phi(T,p)^-1)* v
        let s = sys();
        let p = [0.0, 0.0];
        let v = [0.0, 1.0];
        let out = s
            .comp_ext(0, &HalfSpacePair::new(p.to_vec(), v.to_vec()).unwrap())
            .unwrap();
        let j = fd_flow_jacobian(&s, &p, 0);
        // solve J^T y = v
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        let y = [
            (j[1][1] * v[0] - j[1][0] * v[1]) / det,
            (-j[0][1] * v[0] + j[0][0] * v[1]) / det,
        ];
        assert!(dist(&out.v, &y) < 1e-5, "{:?} vs {:?}", out.v, y);
    }

    #[test]
    fn adjoint_duality() {
        // <D2 phi(T,p) h, y(T)> = <h, v> for random probes
        let s = sys();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let p = [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)];
            let v = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            let h = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            let u = rng.gen_range(0..3);
            let out = s
                .comp_ext(u, &HalfSpacePair::new(p.to_vec(), v.to_vec()).unwrap())
                .unwrap();
            let j = fd_flow_jacobian(&s, &p, u);
            let jh = [
                j[0][0] * h[0] + j[0][1] * h[1],
                j[1][0] * h[0] + j[1][1] * h[1],
            ];
            let lhs = jh[0] * out.v[0] + jh[1] * out.v[1];
            let rhs = h[0] * v[0] + h[1] * v[1];
            assert!((lhs - rhs).abs() < 1e-6, "duality gap {}", lhs - rhs);
        }
    }

    #[test]
    fn second_variation_order() {
        let s = sys();
        let x0 = [0.7, -0.4];
        let t = 0.2;
        for scale in [1e-2, 5e-3] {
            let h = [scale, -0.5 * scale];
            let z = s.second_variation_transport(&x0, 2, &h, t).unwrap();
            let xp: Vec<f64> = x0.iter().zip(&h).map(|(a, b)| a + b).collect();
            let xm: Vec<f64> = x0.iter().zip(&h).map(|(a, b)| a - b).collect();
            let fp = s.flow(&xp, 2, t).unwrap();
            let fm = s.flow(&xm, 2, t).unwrap();
            let f0 = s.flow(&x0, 2, t).unwrap();
            let sec = [
                fp[0] - 2.0 * f0[0] + fm[0],
                fp[1] - 2.0 * f0[1] + fm[1],
            ];
            let err = dist(&sec, &z);
            assert!(
                err < 10.0 * norm(&h).powi(3),
                "second difference err {err} at scale {scale}"
            );
        }
    }
}
