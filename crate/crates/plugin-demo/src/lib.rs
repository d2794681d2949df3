//! Example system plugin: damped harmonic oscillator with a force offset per
//! input symbol. Mirrors the vtable in the core pipeline module; keep the
//! layouts in sync by hand, the plugin must not link the core crate.

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

const FORCES: [f64; 2] = [0.0, 1.0];

unsafe extern "C" fn input_value(u: u32, out: *mut f64) {
    *out = FORCES[u as usize];
}

unsafe extern "C" fn rhs(x: *const f64, u: *const f64, out: *mut f64) {
    let x = std::slice::from_raw_parts(x, 2);
    let out = std::slice::from_raw_parts_mut(out, 2);
    out[0] = x[1];
    out[1] = -x[0] - 0.2 * x[1] + *u;
}

unsafe extern "C" fn rhs_jac(_x: *const f64, _u: *const f64, out: *mut f64) {
    let out = std::slice::from_raw_parts_mut(out, 4);
    out.copy_from_slice(&[0.0, 1.0, -1.0, -0.2]);
}

#[no_mangle]
pub extern "C" fn absynth_plugin_v1() -> PluginVTable {
    PluginVTable {
        abi_version: 1,
        state_dim: 2,
        input_dim: 1,
        n_inputs: FORCES.len() as u32,
        t_sample: 0.25,
        ode_tol: 1e-9,
        input_value,
        rhs,
        rhs_jac,
    }
}
