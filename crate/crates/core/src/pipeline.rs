//! Orchestration: configuration to system model, certificates, quantizer,
//! abstraction, strategy, and emitted artifacts. The CLI is a thin shell
//! around these functions so batch runs and tests share one code path.

use std::collections::BTreeMap;
use std::collections::HashMap;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::Serialize;

use crate::abstraction::{build_abstraction, Abstraction, BuildOptions, BuildStats};
use crate::config::{
    ProjectConfig, QuantizerConfig, RadiusConfig, SystemConfig, TargetConfig,
};
use crate::convexity::{
    estimate_bounds_continuous, estimate_bounds_discrete, radius_continuous, radius_discrete,
    radius_pendulum, Certificate,
};
use crate::dynamics::{InputSymbol, SampledSystem, SystemModel};
use crate::error::{Error, Result};
use crate::expr::{parse_expr, Expr};
use crate::pendulum::{pendulum_system, PendulumParams};
use crate::quantizer::{build_box_quantizer, cylinder_hex_quantizer, CellId, Quantizer};
use crate::supervisor::{
    cells_inside_ellipse, ellipse_value, run_closed_loop, start_cells, synthesize,
    ClosedLoopRun, Strategy, SynthesisProblem, INF,
};
use crate::svg::SvgCanvas;

pub const THREADS_ENV: &str = "ABSYNTH_THREADS";

/// Runs `f` inside a dedicated rayon pool. Thread count resolution:
/// explicit config value, else the ABSYNTH_THREADS variable, else rayon's
/// default; 0 means one thread per core.
pub fn with_pool<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    let n = match threads {
        Some(n) => Some(n),
        None => match std::env::var(THREADS_ENV) {
            Ok(v) => Some(v.parse::<usize>().map_err(|_| {
                Error::Config(format!("{THREADS_ENV}='{v}' is not a thread count"))
            })?),
            Err(_) => None,
        },
    };
    match n {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

// ---------------------------------------------------------------------------
// system construction

/// C ABI a system plugin exports from `absynth_plugin_v1`. Jacobian entries
/// are row-major. The library stays loaded for the lifetime of the process.
#[repr(C)]
pub struct PluginVTable {
    pub abi_version: u32,
    pub state_dim: u32,
    pub input_dim: u32,
    pub n_inputs: u32,
    pub t_sample: f64,
    pub ode_tol: f64,
    pub input_value: unsafe extern "C" fn(u: u32, out: *mut f64),
    pub rhs: unsafe extern "C" fn(x: *const f64, u: *const f64, out: *mut f64),
    pub rhs_jac: unsafe extern "C" fn(x: *const f64, u: *const f64, out: *mut f64),
}

pub const PLUGIN_ABI: u32 = 1;

fn load_plugin(path: &str) -> Result<SampledSystem> {
    let lib = unsafe { libloading::Library::new(path) }
        .map_err(|e| Error::Config(format!("plugin '{path}': {e}")))?;
    let vt: PluginVTable = unsafe {
        let entry: libloading::Symbol<unsafe extern "C" fn() -> PluginVTable> = lib
            .get(b"absynth_plugin_v1")
            .map_err(|e| Error::Config(format!("plugin '{path}': {e}")))?;
        entry()
    };
    if vt.abi_version != PLUGIN_ABI {
        return Err(Error::Config(format!(
            "plugin '{path}': abi {} (expected {PLUGIN_ABI})",
            vt.abi_version
        )));
    }
    if vt.state_dim == 0 || vt.n_inputs == 0 || vt.t_sample <= 0.0 || vt.ode_tol <= 0.0 {
        return Err(Error::Config(format!("plugin '{path}': degenerate dimensions")));
    }
    // fn pointers must outlive the returned closures
    std::mem::forget(lib);
    let n = vt.state_dim as usize;
    let d = vt.input_dim as usize;
    let mut inputs = Vec::new();
    for u in 0..vt.n_inputs {
        let mut val = vec![0.0; d];
        unsafe { (vt.input_value)(u, val.as_mut_ptr()) };
        inputs.push(InputSymbol {
            label: format!("u{u}"),
            value: val,
        });
    }
    let (rhs_fn, jac_fn) = (vt.rhs, vt.rhs_jac);
    Ok(SampledSystem {
        n,
        inputs,
        rhs: Box::new(move |x, u, out| unsafe {
            rhs_fn(x.as_ptr(), u.as_ptr(), out.as_mut_ptr())
        }),
        rhs_jac: Box::new(move |x, u| {
            let mut buf = vec![0.0; n * n];
            unsafe { jac_fn(x.as_ptr(), u.as_ptr(), buf.as_mut_ptr()) };
            DMatrix::from_row_slice(n, n, &buf)
        }),
        rhs_hess: None,
        t_sample: vt.t_sample,
        period: None,
        ode_tol: vt.ode_tol,
    })
}

fn expression_system(
    rhs_src: &[String],
    input_rows: &[Vec<f64>],
    t_sample: f64,
    ode_tol: f64,
    period: Option<Vec<f64>>,
) -> Result<SampledSystem> {
    let n = rhs_src.len();
    let d = input_rows[0].len();
    let exprs: Vec<Expr> = rhs_src
        .iter()
        .map(|s| parse_expr(s))
        .collect::<Result<_>>()?;
    let allowed: Vec<String> = (1..=n)
        .map(|i| format!("x{i}"))
        .chain((1..=d).map(|i| format!("u{i}")))
        .collect();
    for e in &exprs {
        let mut vs = Vec::new();
        e.free_vars(&mut vs);
        for v in vs {
            if !allowed.contains(&v) {
                return Err(Error::Config(format!(
                    "rhs uses '{v}'; allowed variables are x1..x{n} and u1..u{d}"
                )));
            }
        }
    }
    let jac: Vec<Vec<Expr>> = exprs
        .iter()
        .map(|e| (1..=n).map(|i| e.diff(&format!("x{i}"))).collect())
        .collect();
    let hess: Vec<Vec<Vec<Expr>>> = jac
        .iter()
        .map(|row| {
            row.iter()
                .map(|e| (1..=n).map(|i| e.diff(&format!("x{i}"))).collect())
                .collect()
        })
        .collect();
    let env_of = move |x: &[f64], u: &[f64]| -> HashMap<String, f64> {
        let mut env = HashMap::with_capacity(x.len() + u.len());
        for (i, v) in x.iter().enumerate() {
            env.insert(format!("x{}", i + 1), *v);
        }
        for (i, v) in u.iter().enumerate() {
            env.insert(format!("u{}", i + 1), *v);
        }
        env
    };
    let inputs: Vec<InputSymbol> = input_rows
        .iter()
        .enumerate()
        .map(|(i, row)| InputSymbol {
            label: format!("u{i}"),
            value: row.clone(),
        })
        .collect();
    let exprs_rhs = exprs;
    let jac_c = jac;
    let hess_c = hess;
    Ok(SampledSystem {
        n,
        inputs,
        rhs: Box::new(move |x, u, out| {
            let env = env_of(x, u);
            for (i, e) in exprs_rhs.iter().enumerate() {
                out[i] = e.eval(&env).expect("validated variables");
            }
        }),
        rhs_jac: Box::new(move |x, u| {
            let env = env_of(x, u);
            DMatrix::from_fn(n, n, |r, c| {
                jac_c[r][c].eval(&env).expect("validated variables")
            })
        }),
        rhs_hess: Some(Box::new(move |x, u, h| {
            let env = env_of(x, u);
            (0..n)
                .map(|i| {
                    let mut acc = 0.0;
                    for j in 0..n {
                        for k in 0..n {
                            acc += hess_c[i][j][k].eval(&env).expect("validated variables")
                                * h[j]
                                * h[k];
                        }
                    }
                    acc
                })
                .collect()
        })),
        t_sample,
        period,
        ode_tol,
    })
}

pub fn build_system(cfg: &SystemConfig) -> Result<SystemModel> {
    Ok(match cfg {
        SystemConfig::Pendulum {
            omega,
            gamma,
            u_hat,
            t_sample,
        } => SystemModel::Sampled(pendulum_system(&PendulumParams {
            omega: *omega,
            gamma: *gamma,
            u_hat: *u_hat,
            t_sample: *t_sample,
        })),
        SystemConfig::Expression {
            rhs,
            inputs,
            t_sample,
            ode_tol,
            period,
        } => SystemModel::Sampled(expression_system(
            rhs,
            inputs,
            *t_sample,
            *ode_tol,
            period.clone(),
        )?),
        SystemConfig::Plugin { path } => SystemModel::Sampled(load_plugin(path)?),
    })
}

// ---------------------------------------------------------------------------
// certificates and quantizer

#[derive(Debug, Serialize)]
pub struct CertifyReport {
    /// one certificate per horizon 1..=N
    pub certificates: Vec<Certificate>,
    pub requested_radius: Option<f64>,
    pub admitted: bool,
    pub resolved_radius: f64,
}

/// Grid of probe points covering the quantizer's operating region, used by
/// the Monte Carlo bound estimators when no closed form applies.
fn certify_samples(qcfg: &QuantizerConfig) -> Vec<Vec<f64>> {
    let (lo, hi) = match qcfg {
        QuantizerConfig::HexCylinder { .. } => {
            let pi = std::f64::consts::PI;
            ([0.0, -pi], [2.0 * pi, pi])
        }
        QuantizerConfig::Box { origin, cell, cols, rows } => (
            *origin,
            [
                origin[0] + cell[0] * *cols as f64,
                origin[1] + cell[1] * *rows as f64,
            ],
        ),
    };
    let m = 9;
    let mut pts = Vec::with_capacity(m * m);
    for i in 0..m {
        for j in 0..m {
            pts.push(vec![
                lo[0] + (hi[0] - lo[0]) * (i as f64 + 0.5) / m as f64,
                lo[1] + (hi[1] - lo[1]) * (j as f64 + 0.5) / m as f64,
            ]);
        }
    }
    pts
}

pub fn certify(cfg: &ProjectConfig) -> Result<CertifyReport> {
    let n_horizon = cfg.abstraction.n_horizon;
    let mut certs = Vec::with_capacity(n_horizon);
    match &cfg.system {
        SystemConfig::Pendulum {
            omega,
            gamma,
            u_hat,
            t_sample,
        } => {
            for k in 1..=n_horizon {
                certs.push(radius_pendulum(*omega, *gamma, *u_hat, k as f64 * t_sample)?);
            }
        }
        _ => {
            let sys = build_system(&cfg.system)?;
            let samples = certify_samples(&cfg.quantizer);
            match &sys {
                SystemModel::Sampled(s) => {
                    let (m1, m2) = estimate_bounds_continuous(s, &samples, 11)?;
                    for k in 1..=n_horizon {
                        let mut c = radius_continuous(m1, m2, k as f64 * s.t_sample);
                        c.estimated = true;
                        certs.push(c);
                    }
                }
                SystemModel::Discrete(_) => {
                    let b = estimate_bounds_discrete(&sys, &samples, 11)?;
                    for k in 1..=n_horizon {
                        let mut c = radius_discrete(b.l1, b.l2, k);
                        c.estimated = b.estimated;
                        certs.push(c);
                    }
                }
            }
        }
    }
    let limiting = certs
        .iter()
        .map(|c| c.r_max)
        .fold(f64::INFINITY, f64::min);
    let (requested, resolved, admitted) = match &cfg.quantizer {
        QuantizerConfig::HexCylinder {
            superset_radius: RadiusConfig::Fixed(r),
            ..
        } => (Some(*r), *r, certs.iter().all(|c| c.admits(*r))),
        _ => {
            // auto, or a box cover whose flat facets need no curvature bound
            let r = if limiting.is_finite() {
                limiting * 0.999
            } else {
                limiting
            };
            (None, r, certs.iter().all(|c| c.valid))
        }
    };
    Ok(CertifyReport {
        certificates: certs,
        requested_radius: requested,
        admitted,
        resolved_radius: resolved,
    })
}

pub fn build_quantizer(cfg: &ProjectConfig, radius: f64) -> Result<Quantizer> {
    match &cfg.quantizer {
        QuantizerConfig::HexCylinder { obstacles, .. } => {
            let ids: Vec<CellId> = obstacles
                .iter()
                .map(|&(c, r)| CellId::operating(c, r))
                .collect();
            cylinder_hex_quantizer(&ids, radius)
        }
        QuantizerConfig::Box {
            origin,
            cell,
            cols,
            rows,
        } => build_box_quantizer(*origin, *cell, *cols, *rows),
    }
}

// ---------------------------------------------------------------------------
// the assembled pipeline

pub struct Pipeline {
    pub cfg: ProjectConfig,
    pub sys: SystemModel,
    pub q: Quantizer,
    pub report: CertifyReport,
}

impl Pipeline {
    pub fn new(cfg: ProjectConfig) -> Result<Self> {
        cfg.validate()?;
        let report = certify(&cfg)?;
        if !report.admitted {
            return Err(Error::ConditionsViolated(format!(
                "superset radius {} exceeds certified maximum {}",
                report.resolved_radius,
                report
                    .certificates
                    .iter()
                    .map(|c| c.r_max)
                    .fold(f64::INFINITY, f64::min)
            )));
        }
        let sys = build_system(&cfg.system)?;
        let q = build_quantizer(&cfg, report.resolved_radius)?;
        Ok(Pipeline {
            cfg,
            sys,
            q,
            report,
        })
    }

    pub fn abstraction(&self, n_horizon: usize) -> Result<Abstraction> {
        let opts = BuildOptions {
            n_horizon,
            candidate_margin: self.cfg.abstraction.candidate_margin,
        };
        with_pool(self.cfg.abstraction.threads, || {
            build_abstraction(&self.sys, &self.q, &opts)
        })?
    }

    pub fn target_cells(&self) -> Result<Vec<bool>> {
        match &self.cfg.synthesis.target {
            TargetConfig::Ellipse => match &self.cfg.system {
                SystemConfig::Pendulum { omega, .. } => Ok(cells_inside_ellipse(&self.q, *omega)),
                _ => Err(Error::Config(
                    "target kind 'ellipse' is defined for the pendulum system only".into(),
                )),
            },
            TargetConfig::Cells { cells } => {
                let mut flags = vec![false; self.q.n_total()];
                for &c in cells {
                    if c >= flags.len() {
                        return Err(Error::Config(format!("target cell {c} out of range")));
                    }
                    flags[c] = true;
                }
                Ok(flags)
            }
        }
    }

    pub fn synthesis_problem<'a>(&'a self, abs: &'a Abstraction) -> Result<SynthesisProblem<'a>> {
        let start = start_cells(&self.q, &self.cfg.synthesis.start);
        if start.is_empty() {
            return Err(Error::Config(format!(
                "start point {:?} is not in the operating range",
                self.cfg.synthesis.start
            )));
        }
        SynthesisProblem::new(abs, &self.q, start, self.target_cells()?)
    }

    pub fn synthesize(&self, abs: &Abstraction) -> Result<Strategy> {
        Ok(synthesize(&self.synthesis_problem(abs)?))
    }

    pub fn simulate(
        &self,
        abs: &Abstraction,
        strat: &Strategy,
        x0s: &[Vec<f64>],
    ) -> Result<Vec<ClosedLoopRun>> {
        x0s.iter()
            .map(|x0| {
                run_closed_loop(
                    &self.sys,
                    &self.q,
                    abs,
                    strat,
                    x0,
                    self.cfg.synthesis.max_steps,
                )
            })
            .collect()
    }

    pub fn out_dir(&self) -> PathBuf {
        PathBuf::from(&self.cfg.output.dir)
    }

    pub fn wants(&self, format: &str) -> bool {
        self.cfg.output.formats.iter().any(|f| f == format)
    }
}

// ---------------------------------------------------------------------------
// artifacts

#[derive(Serialize)]
struct TransitionSystemFile {
    schema: &'static str,
    n_horizon: usize,
    n_cells: usize,
    states: u64,
    transitions: u64,
    stats: BuildStats,
    /// per level: nodes as [parent, input, cell]
    nodes: Vec<Vec<[i64; 3]>>,
    /// per level: edges as [from_node, input, cell, to_node]
    edges: Vec<Vec<[i64; 4]>>,
}

pub fn write_transition_system(path: &Path, q: &Quantizer, abs: &Abstraction) -> Result<()> {
    let mut nodes = Vec::new();
    let mut edges = Vec::new();
    for lvl in &abs.levels {
        nodes.push(
            lvl.nodes
                .iter()
                .map(|n| {
                    let parent = if n.parent == u32::MAX {
                        -1
                    } else {
                        n.parent as i64
                    };
                    [parent, n.input as i64, n.cell as i64]
                })
                .collect::<Vec<_>>(),
        );
        edges.push(
            lvl.children
                .iter()
                .enumerate()
                .flat_map(|(from, ch)| {
                    ch.iter()
                        .map(move |e| [from as i64, e.input as i64, e.cell as i64, e.node as i64])
                })
                .collect::<Vec<_>>(),
        );
    }
    let file = TransitionSystemFile {
        schema: "transition-system/v1",
        n_horizon: abs.n_horizon,
        n_cells: q.n_total(),
        states: abs.stats.states,
        transitions: abs.stats.transitions,
        stats: abs.stats.clone(),
        nodes,
        edges,
    };
    write_json(path, &file)
}

#[derive(Serialize)]
struct StrategyFile {
    schema: &'static str,
    n_horizon: usize,
    start_cells: Vec<usize>,
    winnable: bool,
    bound: Option<u32>,
    /// histogram of finite values; losing states under "inf"
    value_histogram: BTreeMap<String, u64>,
    policy: Vec<PolicyEntry>,
}

#[derive(Serialize)]
struct PolicyEntry {
    cells: Vec<usize>,
    inputs: Vec<usize>,
    input: usize,
    value: u32,
}

pub fn write_strategy(path: &Path, abs: &Abstraction, strat: &Strategy) -> Result<()> {
    let mut histogram: BTreeMap<String, u64> = BTreeMap::new();
    let mut policy = Vec::new();
    for (k, vals) in strat.value.iter().enumerate() {
        for (ni, &v) in vals.iter().enumerate() {
            let key = if v == INF {
                "inf".to_string()
            } else {
                format!("{v:03}")
            };
            *histogram.entry(key).or_insert(0) += 1;
            if v != INF && v > 0 {
                let (cells, inputs) = abs.window_of(k, ni as u32);
                policy.push(PolicyEntry {
                    cells,
                    inputs,
                    input: strat.input_at(k, ni as u32).expect("finite state has policy"),
                    value: v,
                });
            }
        }
    }
    let file = StrategyFile {
        schema: "strategy/v1",
        n_horizon: strat.n,
        start_cells: strat.start.clone(),
        winnable: strat.winnable,
        bound: strat.bound,
        value_histogram: histogram,
        policy,
    };
    write_json(path, &file)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut f = std::fs::File::create(path)?;
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    Ok(())
}

/// RFC 4180: CRLF line endings, header row, no quoting needed for numeric
/// fields.
pub fn trajectory_csv(sys_t_sample: f64, q: &Quantizer, run: &ClosedLoopRun) -> String {
    let mut out = String::from("t,x1,x2,u,cell\r\n");
    for (k, x) in run.xs.iter().enumerate() {
        let u = run
            .us
            .get(k)
            .map(|u| u.to_string())
            .unwrap_or_default();
        let cell = q.cells[run.cells[k]].id;
        out.push_str(&format!(
            "{:.6},{:.9},{:.9},{},{}\r\n",
            k as f64 * sys_t_sample,
            x[0],
            x[1],
            u,
            cell
        ));
    }
    out
}

/// Phase-plane figure: cell mosaic, winnable shading, target ellipse,
/// obstacles hatched, trajectories overlaid.
pub fn render_phase_plot(
    q: &Quantizer,
    strat: Option<&Strategy>,
    target: &[bool],
    ellipse_omega: Option<f64>,
    runs: &[ClosedLoopRun],
) -> String {
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for c in &q.cells {
        for v in &c.poly.vertices {
            for d in 0..2 {
                lo[d] = lo[d].min(v[d]);
                hi[d] = hi[d].max(v[d]);
            }
        }
    }
    let pad = 0.05 * (hi[0] - lo[0]);
    let mut svg = SvgCanvas::new(lo[0] - pad, lo[1] - pad, hi[0] + pad, hi[1] + pad, 900.0);
    for (idx, c) in q.cells.iter().enumerate() {
        let pts: Vec<[f64; 2]> = c.poly.vertices.iter().map(|v| [v[0], v[1]]).collect();
        let winnable = strat
            .map(|s| s.value[0].get(idx).is_some_and(|&v| v != INF))
            .unwrap_or(false);
        let fill = if !q.is_operating(idx) {
            "url(#hatch)"
        } else if target.get(idx).copied().unwrap_or(false) {
            "#7bc87b"
        } else if winnable {
            "#bcd6f0"
        } else {
            "none"
        };
        svg.polygon(&pts, fill, "#999", 0.6);
    }
    if let Some(omega) = ellipse_omega {
        let bound = 42.0 * omega * omega;
        let pi = std::f64::consts::PI;
        let pts: Vec<[f64; 2]> = (0..=128)
            .map(|i| {
                let th = std::f64::consts::TAU * i as f64 / 128.0;
                let dir = [th.cos(), th.sin()];
                let g = ellipse_value(omega, &[pi + dir[0], dir[1]]);
                let s = (bound / g).sqrt();
                [pi + s * dir[0], s * dir[1]]
            })
            .collect();
        svg.polyline(&pts, "#116611", 1.8);
    }
    for run in runs {
        // canonical x1 lives on a cylinder: break the line where it wraps
        let mut seg: Vec<[f64; 2]> = Vec::new();
        for x in &run.xs {
            if let Some(last) = seg.last() {
                if q.period.is_finite() && (x[0] - last[0]).abs() > 0.5 * q.period {
                    svg.polyline(&seg, "#c22", 1.4);
                    seg.clear();
                }
            }
            seg.push([x[0], x[1]]);
        }
        if seg.len() > 1 {
            svg.polyline(&seg, "#c22", 1.4);
        }
        for x in &run.xs {
            svg.circle([x[0], x[1]], 0.015, "#c22", "none");
        }
    }
    svg.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::pendulum_default_config;

    #[test]
    fn pendulum_certify_report() {
        let cfg = pendulum_default_config();
        let rep = certify(&cfg).unwrap();
        assert_eq!(rep.certificates.len(), 3);
        // the horizon-3 certificate is the binding one
        let r3 = rep.certificates[2].r_max;
        assert!(r3 >= 0.40 && r3 <= 0.41, "r_max {r3}");
        assert!(rep.admitted);
        assert!(!rep.certificates.iter().any(|c| c.estimated));
    }

    #[test]
    fn damping_violation_surfaces() {
        let cfg = ProjectConfig::from_json(
            &pendulum_default_config().to_json(),
            &["system.gamma=2.0".into()],
        )
        .unwrap();
        match certify(&cfg) {
            Err(Error::ConditionsViolated(_)) => {}
            other => panic!("expected a condition violation, got {other:?}"),
        }
    }

    #[test]
    fn linear_expression_is_unbounded() {
        let json = r#"{
            "version": 1,
            "system": {
                "kind": "expression",
                "rhs": ["x2", "-x1 - x2 + u1"],
                "inputs": [[0.0], [1.0]],
                "t_sample": 0.25
            },
            "quantizer": {"kind": "box", "origin": [-2.0, -2.0], "cell": [1.0, 1.0], "cols": 4, "rows": 4},
            "abstraction": {"n_horizon": 1, "candidate_margin": 0.6}
        }"#;
        let cfg = ProjectConfig::from_json(json, &[]).unwrap();
        let rep = certify(&cfg).unwrap();
        // zero curvature: any radius is admissible
        assert!(rep.certificates.iter().all(|c| c.r_max.is_infinite()));
        assert!(rep.certificates.iter().all(|c| c.estimated));
    }

    #[test]
    fn expression_pipeline_end_to_end() {
        // the pendulum written in the expression language must reproduce the
        // built-in model's flow
        let json = r#"{
            "version": 1,
            "system": {
                "kind": "expression",
                "rhs": ["x2", "-sin(x1) - u1*cos(x1) - 0.02*x2"],
                "inputs": [[0.0], [-2.0], [2.0]],
                "t_sample": 0.2,
                "period": [6.283185307179586, 0.0]
            },
            "quantizer": {"kind": "box", "origin": [0.0, 0.0], "cell": [1.0, 1.0], "cols": 2, "rows": 2},
            "abstraction": {"n_horizon": 1, "candidate_margin": 0.6}
        }"#;
        let cfg = ProjectConfig::from_json(json, &[]).unwrap();
        let sys = build_system(&cfg.system).unwrap();
        let builtin = SystemModel::Sampled(pendulum_system(&PendulumParams::default()));
        for x0 in [[0.3, -0.4], [2.0, 1.0]] {
            for u in 0..3 {
                let a = sys.step(&x0, u).unwrap();
                let b = builtin.step(&x0, u).unwrap();
                assert!((a[0] - b[0]).abs() + (a[1] - b[1]).abs() < 1e-7, "{a:?} vs {b:?}");
            }
        }
        // expression Jacobians agree with the analytic ones to solver accuracy
        let rep = crate::oracle::fd_jacobian_check(&sys, &[-1.0, -1.0], &[4.0, 1.0], 10, 5);
        assert!(rep.pass, "worst {}", rep.worst_rel);
    }

    #[test]
    fn missing_plugin_reports_cleanly() {
        match load_plugin("/nonexistent/libnope.so") {
            Err(Error::Config(msg)) => assert!(msg.contains("libnope")),
            Err(e) => panic!("unexpected error {e}"),
            Ok(_) => panic!("loading a missing plugin succeeded"),
        }
    }

    #[test]
    fn csv_shape() {
        let q = build_box_quantizer([0.0, 0.0], [1.0, 1.0], 2, 1).unwrap();
        let run = ClosedLoopRun {
            xs: vec![vec![0.5, 0.5], vec![1.5, 0.5]],
            us: vec![1],
            cells: vec![0, 1],
            reached: Some(1),
        };
        let csv = trajectory_csv(0.5, &q, &run);
        let lines: Vec<&str> = csv.split("\r\n").collect();
        assert_eq!(lines[0], "t,x1,x2,u,cell");
        assert!(lines[1].starts_with("0.000000,0.500000000,0.500000000,1,"));
        assert_eq!(lines.len(), 4); // header, two rows, trailing empty
    }
}
