//! System models, flow evaluation, and the complementary extension that
//! transports a supporting point/normal pair through one step of the
//! dynamics: (p, v) maps to (G(p,u), (D1G(p,u)^-1)* v).
//!
//! For explicit discrete maps the normal transport is one linear solve; for
//! sampled systems the pair is integrated jointly as a 2n-dimensional ODE
//! with the adjoint equation dy/dt = -D1F(x,u)* y, never by forming a
//! transition matrix.

use crate::error::{Error, Result};
use crate::geometry::HalfSpacePair;
use nalgebra::DMatrix;

/// Default integrator tolerance (absolute and relative).
pub const ODE_TOL: f64 = 1e-9;

/// Condition-number cap above which a Jacobian is treated as singular.
pub const COND_CAP: f64 = 1e12;

#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct InputSymbol {
    pub label: String,
    pub value: Vec<f64>,
}

impl InputSymbol {
    pub fn scalar(u: f64) -> Self {
        InputSymbol {
            label: format!("{u}"),
            value: vec![u],
        }
    }
}

pub type StepFn = Box<dyn Fn(&[f64], &[f64]) -> Vec<f64> + Sync + Send>;
pub type JacFn = Box<dyn Fn(&[f64], &[f64]) -> DMatrix<f64> + Sync + Send>;
pub type RhsFn = Box<dyn Fn(&[f64], &[f64], &mut [f64]) + Sync + Send>;
/// Second state derivative applied twice to a direction: D1^2 F(x,u)[h,h].
pub type HessFn = Box<dyn Fn(&[f64], &[f64], &[f64]) -> Vec<f64> + Sync + Send>;

/// Explicit discrete-time system x+ = G(x, u) with state-Jacobian access.
pub struct DiscreteSystem {
    pub n: usize,
    pub inputs: Vec<InputSymbol>,
    pub step: StepFn,
    pub jacobian: JacFn,
}

/// Sampled continuous-time system dx/dt = F(x, u) under piecewise-constant
/// inputs with sampling period `t_sample`. `period` marks an optional spatial
/// period (cylinder identification) that the quantizer applies at lookup;
/// integration itself always runs in the covering space.
pub struct SampledSystem {
    pub n: usize,
    pub inputs: Vec<InputSymbol>,
    pub rhs: RhsFn,
    pub rhs_jac: JacFn,
    pub rhs_hess: Option<HessFn>,
    pub t_sample: f64,
    pub period: Option<Vec<f64>>,
    pub ode_tol: f64,
}

#[derive(Clone, Debug)]
pub struct FlowResult {
    pub x_end: Vec<f64>,
    pub y_end: Option<Vec<f64>>,
    pub steps_taken: usize,
    pub est_error: f64,
}

/// Dormand-Prince 5(4) embedded pair, adaptive steps. Stage times are not
/// stored: all systems integrated here are autonomous.
struct Dopri {
    a: [[f64; 6]; 7],
    b5: [f64; 7],
    b4: [f64; 7],
}

const DOPRI: Dopri = Dopri {
    a: [
        [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [
            19372.0 / 6561.0,
            -25360.0 / 2187.0,
            64448.0 / 6561.0,
            -212.0 / 729.0,
            0.0,
            0.0,
        ],
        [
            9017.0 / 3168.0,
            -355.0 / 33.0,
            46732.0 / 5247.0,
            49.0 / 176.0,
            -5103.0 / 18656.0,
            0.0,
        ],
        [
            35.0 / 384.0,
            0.0,
            500.0 / 1113.0,
            125.0 / 192.0,
            -2187.0 / 6784.0,
            11.0 / 84.0,
        ],
    ],
    b5: [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
        0.0,
    ],
    b4: [
        5179.0 / 57600.0,
        0.0,
        7571.0 / 16695.0,
        393.0 / 640.0,
        -92097.0 / 339200.0,
        187.0 / 2100.0,
        1.0 / 40.0,
    ],
};

const STATE_CAP: f64 = 1e8;

/// Integrates dx/dt = f(x) from 0 to t with the embedded pair, local error
/// per step below tol (absolute and relative).
pub fn integrate<F: Fn(&[f64], &mut [f64])>(
    f: F,
    x0: &[f64],
    t: f64,
    tol: f64,
) -> Result<FlowResult> {
    let n = x0.len();
    let mut x = x0.to_vec();
    if t == 0.0 {
        return Ok(FlowResult {
            x_end: x,
            y_end: None,
            steps_taken: 0,
            est_error: 0.0,
        });
    }
    let dir = t.signum();
    let t_abs = t.abs();
    let mut time = 0.0f64;
    let mut dt = (t_abs / 10.0).min(0.1).max(1e-6);
    let mut k = vec![vec![0.0f64; n]; 7];
    let mut stage = vec![0.0f64; n];
    let mut x5 = vec![0.0f64; n];
    let mut steps = 0usize;
    let mut worst = 0.0f64;
    f(&x, &mut k[0]);
    while time < t_abs {
        if dt < 1e-14 * t_abs.max(1.0) {
            return Err(Error::FlowEscape { t: dir * time });
        }
        dt = dt.min(t_abs - time);
        for s in 1..7 {
            for i in 0..n {
                let mut acc = 0.0;
                for j in 0..s {
                    acc += DOPRI.a[s][j] * k[j][i];
                }
                stage[i] = x[i] + dir * dt * acc;
            }
            f(&stage, &mut k[s]);
        }
        let mut err = 0.0f64;
        for i in 0..n {
            let mut acc5 = 0.0;
            let mut acc4 = 0.0;
            for s in 0..7 {
                acc5 += DOPRI.b5[s] * k[s][i];
                acc4 += DOPRI.b4[s] * k[s][i];
            }
            x5[i] = x[i] + dir * dt * acc5;
            let e = dt * (acc5 - acc4);
            let scale = tol + tol * x[i].abs().max(x5[i].abs());
            err = err.max((e / scale).abs());
        }
        if err <= 1.0 {
            time += dt;
            std::mem::swap(&mut x, &mut x5);
            // FSAL property of the pair
            k.swap(0, 6);
            steps += 1;
            worst = worst.max(err * tol);
            if x.iter().any(|v| !v.is_finite() || v.abs() > STATE_CAP) {
                return Err(Error::FlowEscape { t: dir * time });
            }
        } else {
            f(&x, &mut k[0]);
        }
        let fac = (0.9 * err.max(1e-10).powf(-0.2)).clamp(0.2, 5.0);
        dt *= fac;
        if steps > 1_000_000 {
            return Err(Error::FlowEscape { t: dir * time });
        }
    }
    Ok(FlowResult {
        x_end: x,
        y_end: None,
        steps_taken: steps,
        est_error: worst,
    })
}

/// Classic fixed-step fourth-order integrator; fallback and cross-check.
pub fn integrate_fixed<F: Fn(&[f64], &mut [f64])>(
    f: F,
    x0: &[f64],
    t: f64,
    n_steps: usize,
) -> Vec<f64> {
    let n = x0.len();
    let mut x = x0.to_vec();
    let dt = t / n_steps as f64;
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    for _ in 0..n_steps {
        f(&x, &mut k1);
        for i in 0..n {
            tmp[i] = x[i] + 0.5 * dt * k1[i];
        }
        f(&tmp, &mut k2);
        for i in 0..n {
            tmp[i] = x[i] + 0.5 * dt * k2[i];
        }
        f(&tmp, &mut k3);
        for i in 0..n {
            tmp[i] = x[i] + dt * k3[i];
        }
        f(&tmp, &mut k4);
        for i in 0..n {
            x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    x
}

impl SampledSystem {
    pub fn input_value(&self, u: usize) -> &[f64] {
        &self.inputs[u].value
    }

    /// State at time t under the constant input with index u.
    pub fn flow(&self, x0: &[f64], u: usize, t: f64) -> Result<Vec<f64>> {
        let uv = self.inputs[u].value.clone();
        let rhs = &self.rhs;
        Ok(integrate(|x, out| rhs(x, &uv, out), x0, t, self.ode_tol)?.x_end)
    }

    /// One sampling period.
    pub fn step(&self, x0: &[f64], u: usize) -> Result<Vec<f64>> {
        self.flow(x0, u, self.t_sample)
    }

    /// Transports (p, v) through one sampling period: the state runs forward
    /// while the normal obeys the adjoint equation, as one joint 2n system.
    pub fn comp_ext(&self, u: usize, pair: &HalfSpacePair) -> Result<HalfSpacePair> {
        let n = self.n;
        let uv = self.inputs[u].value.clone();
        let rhs = &self.rhs;
        let jac = &self.rhs_jac;
        let joint = |z: &[f64], out: &mut [f64]| {
            let (x, y) = z.split_at(n);
            rhs(x, &uv, &mut out[..n]);
            let a = jac(x, &uv);
            for i in 0..n {
                let mut acc = 0.0;
                for j in 0..n {
                    // -(D1F)* y
                    acc -= a[(j, i)] * y[j];
                }
                out[n + i] = acc;
            }
        };
        let mut z0 = Vec::with_capacity(2 * n);
        z0.extend_from_slice(&pair.p);
        z0.extend_from_slice(&pair.v);
        let res = integrate(joint, &z0, self.t_sample, self.ode_tol)?;
        let (x_end, y_end) = res.x_end.split_at(n);
        HalfSpacePair::new(x_end.to_vec(), y_end.to_vec())
            .map_err(|_| Error::SingularJacobian { at: pair.p.clone() })
    }

    /// z(t) = D2^2 phi(t, x0, u) h^2 via the joint first/second variation
    /// system: dy/dt = D1F y with y(0)=h, dz/dt = D1F z + D1^2F[y,y], z(0)=0.
    pub fn second_variation_transport(
        &self,
        x0: &[f64],
        u: usize,
        h: &[f64],
        t: f64,
    ) -> Result<Vec<f64>> {
        let hess = self.rhs_hess.as_ref().ok_or(Error::HessianUnavailable)?;
        let n = self.n;
        let uv = self.inputs[u].value.clone();
        let rhs = &self.rhs;
        let jac = &self.rhs_jac;
        let joint = |w: &[f64], out: &mut [f64]| {
            let x = &w[..n];
            let y = &w[n..2 * n];
            let z = &w[2 * n..];
            rhs(x, &uv, &mut out[..n]);
            let a = jac(x, &uv);
            let q = hess(x, &uv, y);
            for i in 0..n {
                let mut ay = 0.0;
                let mut az = 0.0;
                for j in 0..n {
                    ay += a[(i, j)] * y[j];
                    az += a[(i, j)] * z[j];
                }
                out[n + i] = ay;
                out[2 * n + i] = az + q[i];
            }
        };
        let mut w0 = Vec::with_capacity(3 * n);
        w0.extend_from_slice(x0);
        w0.extend_from_slice(h);
        w0.extend(std::iter::repeat(0.0).take(n));
        let res = integrate(joint, &w0, t, self.ode_tol)?;
        Ok(res.x_end[2 * n..].to_vec())
    }
}

impl DiscreteSystem {
    /// (p, v) -> (G(p,u), w) with D1G(p,u)* w = v: one factorization + solve.
    pub fn comp_ext(&self, u: usize, pair: &HalfSpacePair) -> Result<HalfSpacePair> {
        let uv = &self.inputs[u].value;
        let a = (self.jacobian)(&pair.p, uv);
        let at = a.transpose();
        let lu = at.clone().lu();
        let v = nalgebra::DVector::from_column_slice(&pair.v);
        let sol = lu.solve(&v).ok_or(Error::SingularJacobian {
            at: pair.p.clone(),
        })?;
        // crude condition estimate guards against near-singular transports
        let cond = at.norm() * sol.norm() / v.norm().max(1e-300);
        if !sol.iter().all(|x| x.is_finite()) || cond > COND_CAP {
            return Err(Error::SingularJacobian {
                at: pair.p.clone(),
            });
        }
        let image = (self.step)(&pair.p, uv);
        HalfSpacePair::new(image, sol.as_slice().to_vec())
            .map_err(|_| Error::SingularJacobian { at: pair.p.clone() })
    }
}

/// Uniform one-step interface over both system kinds, used by the
/// abstraction builder.
pub enum SystemModel {
    Discrete(DiscreteSystem),
    Sampled(SampledSystem),
}

impl SystemModel {
    pub fn n(&self) -> usize {
        match self {
            SystemModel::Discrete(s) => s.n,
            SystemModel::Sampled(s) => s.n,
        }
    }

    pub fn inputs(&self) -> &[InputSymbol] {
        match self {
            SystemModel::Discrete(s) => &s.inputs,
            SystemModel::Sampled(s) => &s.inputs,
        }
    }

    pub fn step(&self, x: &[f64], u: usize) -> Result<Vec<f64>> {
        match self {
            SystemModel::Discrete(s) => Ok((s.step)(x, &s.inputs[u].value)),
            SystemModel::Sampled(s) => s.step(x, u),
        }
    }

    pub fn comp_ext(&self, u: usize, pair: &HalfSpacePair) -> Result<HalfSpacePair> {
        match self {
            SystemModel::Discrete(s) => s.comp_ext(u, pair),
            SystemModel::Sampled(s) => s.comp_ext(u, pair),
        }
    }

    pub fn period(&self) -> Option<&[f64]> {
        match self {
            SystemModel::Discrete(_) => None,
            SystemModel::Sampled(s) => s.period.as_deref(),
        }
    }
}
