//! Time integration of the scaled Euler-Poisson system
//!
//! `dn/dt = -div((1 + eps n) v)`
//! `dv/dt = -eps (v.grad) v - grad phi - alpha grad n / (1 + eps n)
//!          - (a/sqrt(eps)) e x v`,        `e = (1, 0, 0)`,
//! `-eps^2 Lap phi + exp(eps phi) - 1 = eps n`.
//!
//! Stepping is Strang splitting: exact half rotation of the transverse
//! velocity pair, classical RK4 on the dealiased rotation-free system with
//! the potential re-solved (warm-started) at every stage, exact half
//! rotation. The rotation preserves |v| pointwise and the rotation-free flow
//! conserves the Hamiltonian, so energy drift comes from the RK4 truncation
//! alone.
//!
//! In d = 2 the slab convention is used: fields depend on (x, y) but the
//! velocity keeps all three components, so the magnetic rotation acts on
//! (v_y, v_z) exactly as in d = 3. In d = 1 the velocity is longitudinal
//! only and the rotation is the identity.

use crate::error::{Error, Result};
use crate::field::{check_same_grid, ScalarField, Spectrum, VectorField};
use crate::poisson::{self, exp_um1_plus1, PoissonDiagnostics, SolverConfig};

#[derive(Clone, Copy, Debug)]
pub struct PlasmaParams {
    /// Long-wave parameter, in (0, 1].
    pub eps: f64,
    /// Magnetic field strength along e = (1,0,0).
    pub a: f64,
    /// Isothermal pressure coefficient, >= 0.
    pub alpha: f64,
    /// Density floor margin: the run aborts when 1 + eps*n < c0/2.
    pub c0: f64,
}

impl PlasmaParams {
    pub fn cold(eps: f64, a: f64) -> Self {
        PlasmaParams { eps, a, alpha: 0.0, c0: 1.0 }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if !(self.eps > 0.0 && self.eps <= 1.0) {
            return Err(Error::InvalidParameter(format!("eps = {} outside (0, 1]", self.eps)));
        }
        if dim >= 2 && !(self.a > 0.0) {
            // a = 0 is allowed (impulse conservation runs) but the long-wave
            // machinery divides by a; reject only negative values here.
            if self.a < 0.0 {
                return Err(Error::InvalidParameter("a must be >= 0".into()));
            }
        }
        if self.alpha < 0.0 {
            return Err(Error::InvalidParameter("alpha must be >= 0".into()));
        }
        if !(self.c0 > 0.0) {
            return Err(Error::InvalidParameter("c0 must be positive".into()));
        }
        Ok(())
    }

    /// Rotation rate a / sqrt(eps).
    pub fn rotation_rate(&self) -> f64 {
        self.a / self.eps.sqrt()
    }
}

#[derive(Clone, Debug)]
pub struct PlasmaState {
    pub n: ScalarField,
    pub v: VectorField,
    pub phi: ScalarField,
    pub t: f64,
}

impl PlasmaState {
    /// Rest state with a consistent (identically zero) potential.
    pub fn rest(grid: &std::sync::Arc<crate::grid::Grid>) -> Self {
        PlasmaState {
            n: ScalarField::zeros(grid),
            v: VectorField::zeros(grid),
            phi: ScalarField::zeros(grid),
            t: 0.0,
        }
    }

    /// Solve the scaled Poisson equation for the current density, warm-started
    /// from the stored potential.
    pub fn resolve_potential(&mut self, params: &PlasmaParams, cfg: &SolverConfig) -> Result<PoissonDiagnostics> {
        let solver = cfg.clone().warmed(self.phi.clone());
        let (phi, diag) = poisson::solve_scaled(&self.n, params.eps, &solver)?;
        self.phi = phi;
        Ok(diag)
    }
}

#[derive(Clone, Debug)]
pub struct SimConfig {
    /// Fixed step; None picks the CFL/rotation-resolving automatic step.
    pub dt: Option<f64>,
    /// Cap on the rotation angle per step, dt * a / sqrt(eps) <= theta_cap.
    pub theta_cap: f64,
    /// Norm index s for the logged H^s / eps-weighted norms.
    pub log_norm_s: f64,
    pub log_every: usize,
    pub snap_every: usize,
    pub poisson: SolverConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            dt: None,
            theta_cap: 0.2,
            log_norm_s: 3.0,
            log_every: 1,
            snap_every: 0,
            poisson: SolverConfig::default(),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct ConservationSample {
    pub t: f64,
    /// Scaled Hamiltonian H_raw / eps^2; NaN when alpha > 0 (no energy
    /// theorem is available there and none is reported).
    pub hamiltonian: f64,
    pub impulse: [f64; 3],
    pub l2_n: f64,
    pub l2_v: f64,
    pub hs_n: f64,
    pub hseps_v: f64,
}

#[derive(Clone, Debug, Default)]
pub struct ConservationLog {
    pub s: f64,
    pub samples: Vec<ConservationSample>,
}

#[derive(Clone, Debug)]
pub struct SimOutcome {
    pub state: PlasmaState,
    pub log: ConservationLog,
    pub snapshots: Vec<PlasmaState>,
    /// Violated invariant when the run stopped early; the state above is the
    /// last good one.
    pub abort: Option<String>,
    /// Largest |n| seen in the outer 10% shell (boundary contamination
    /// monitor).
    pub shell_max: f64,
}

fn density_floor(n: &ScalarField, params: &PlasmaParams) -> Result<()> {
    let min = 1.0 + params.eps * n.min_value();
    if min < params.c0 / 2.0 {
        Err(Error::DensityFloorViolated { min_density: min })
    } else {
        Ok(())
    }
}

/// Rotation-free right-hand side; returns the dealiased tendencies and the
/// potential used (for warm-starting the next stage).
fn rhs_norot(
    n: &ScalarField,
    v: &VectorField,
    params: &PlasmaParams,
    warm: Option<&ScalarField>,
    poisson_cfg: &SolverConfig,
) -> Result<(ScalarField, VectorField, ScalarField)> {
    let grid = n.grid().clone();
    let dim = grid.dim();
    density_floor(n, params)?;

    let mut cfg = poisson_cfg.clone();
    if let Some(w) = warm {
        cfg.warm_start = Some(w.clone());
    }
    let (phi, _) = poisson::solve_scaled(n, params.eps, &cfg)?;

    // density tendency: -sum_a d_a[(1 + eps n) v_a]
    let rho = n.map(|x| 1.0 + params.eps * x);
    let mut div_spec = Spectrum::zeros(&grid);
    for a in 0..dim {
        let mut fa = rho.zip(v.component(a), |r, vv| r * vv).to_spectrum();
        fa.differentiate(a)?;
        div_spec.add_scaled(&fa, 1.0);
    }
    div_spec.dealias();
    let mut dn = div_spec.to_field();
    dn.scale(-1.0);

    // velocity tendencies
    let phi_spec = phi.to_spectrum();
    let n_spec = n.to_spectrum();
    let grad_phi: Vec<ScalarField> =
        (0..dim).map(|a| phi_spec.derivative(a).unwrap().to_field()).collect();
    let grad_n: Vec<ScalarField> = if params.alpha != 0.0 {
        (0..dim).map(|a| n_spec.derivative(a).unwrap().to_field()).collect()
    } else {
        Vec::new()
    };

    let mut dv_components = Vec::with_capacity(v.len());
    for c in 0..v.len() {
        let vc_spec = v.component(c).to_spectrum();
        let mut dvc = ScalarField::zeros(&grid);
        if params.eps != 0.0 {
            for a in 0..dim {
                let dvc_da = vc_spec.derivative(a)?.to_field();
                let adv = v.component(a).zip(&dvc_da, |va, g| va * g);
                dvc.add_scaled(&adv, -params.eps);
            }
        }
        if c < dim {
            dvc.add_scaled(&grad_phi[c], -1.0);
            if params.alpha != 0.0 {
                let press = grad_n[c].zip(&rho, |g, r| g / r);
                dvc.add_scaled(&press, -params.alpha);
            }
        }
        dv_components.push(dvc.dealias());
    }
    let dv = VectorField::from_components(dv_components)?;
    Ok((dn, dv, phi))
}

/// Full right-hand side of the scaled system, magnetic rotation included.
pub fn rhs(
    state: &PlasmaState,
    params: &PlasmaParams,
    poisson_cfg: &SolverConfig,
) -> Result<(ScalarField, VectorField)> {
    params.validate(state.n.grid().dim())?;
    let (dn, mut dv, _) = rhs_norot(&state.n, &state.v, params, Some(&state.phi), poisson_cfg)?;
    if state.v.len() == 3 {
        // -(a/sqrt(eps)) e x v = (0, +W v_z, -W v_y)
        let w = params.rotation_rate();
        dv.component_mut(1).add_scaled(state.v.component(2), w);
        dv.component_mut(2).add_scaled(state.v.component(1), -w);
    }
    Ok((dn, dv))
}

/// Exact solution of `dv/dt = -(a/sqrt(eps)) e x v` over `dt`: the pair
/// (v_y, v_z) rotates by theta = a dt / sqrt(eps), v_x is untouched and the
/// pointwise speed is preserved exactly.
pub fn rotation_substep(v: &VectorField, dt: f64, params: &PlasmaParams) -> VectorField {
    if v.len() < 3 {
        return v.clone();
    }
    let theta = params.rotation_rate() * dt;
    let (s, c) = theta.sin_cos();
    let vy = v.component(1);
    let vz = v.component(2);
    let new_y = vy.zip(vz, |y, z| c * y + s * z);
    let new_z = vy.zip(vz, |y, z| -s * y + c * z);
    VectorField::from_components(vec![v.component(0).clone(), new_y, new_z]).expect("same grid")
}

/// Advective step bound 0.4 * h_min / (1 + eps max|v| + sqrt(1 + alpha)).
pub fn cfl_limit(state: &PlasmaState, params: &PlasmaParams) -> f64 {
    let h = state.n.grid().min_spacing();
    0.4 * h / (1.0 + params.eps * state.v.max_speed() + (1.0 + params.alpha).sqrt())
}

/// One Strang step. Negative dt is accepted (reversibility probes); the CFL
/// check uses |dt|.
pub fn step(state: &PlasmaState, dt: f64, params: &PlasmaParams, cfg: &SimConfig) -> Result<PlasmaState> {
    let limit = cfl_limit(state, params);
    if !(dt.abs() <= limit * (1.0 + 1e-9)) {
        return Err(Error::CflViolation { dt: dt.abs(), limit });
    }
    density_floor(&state.n, params)?;

    let v_half = rotation_substep(&state.v, dt / 2.0, params);

    let (k1n, k1v, phi1) = rhs_norot(&state.n, &v_half, params, Some(&state.phi), &cfg.poisson)?;
    let mut n2 = state.n.clone();
    n2.add_scaled(&k1n, dt / 2.0);
    let mut v2 = v_half.clone();
    v2.add_scaled(&k1v, dt / 2.0);
    let (k2n, k2v, phi2) = rhs_norot(&n2, &v2, params, Some(&phi1), &cfg.poisson)?;
    let mut n3 = state.n.clone();
    n3.add_scaled(&k2n, dt / 2.0);
    let mut v3 = v_half.clone();
    v3.add_scaled(&k2v, dt / 2.0);
    let (k3n, k3v, phi3) = rhs_norot(&n3, &v3, params, Some(&phi2), &cfg.poisson)?;
    let mut n4 = state.n.clone();
    n4.add_scaled(&k3n, dt);
    let mut v4 = v_half.clone();
    v4.add_scaled(&k3v, dt);
    let (k4n, k4v, phi4) = rhs_norot(&n4, &v4, params, Some(&phi3), &cfg.poisson)?;

    let mut n_new = state.n.clone();
    n_new.add_scaled(&k1n, dt / 6.0);
    n_new.add_scaled(&k2n, dt / 3.0);
    n_new.add_scaled(&k3n, dt / 3.0);
    n_new.add_scaled(&k4n, dt / 6.0);
    let mut v_mid = v_half;
    v_mid.add_scaled(&k1v, dt / 6.0);
    v_mid.add_scaled(&k2v, dt / 3.0);
    v_mid.add_scaled(&k3v, dt / 3.0);
    v_mid.add_scaled(&k4v, dt / 6.0);
    let v_new = rotation_substep(&v_mid, dt / 2.0, params);

    density_floor(&n_new, params)?;
    let solver = cfg.poisson.clone().warmed(phi4);
    let (phi_new, _) = poisson::solve_scaled(&n_new, params.eps, &solver)?;
    Ok(PlasmaState { n: n_new, v: v_new, phi: phi_new, t: state.t + dt })
}

/// Scaled Hamiltonian: the conserved energy of the unscaled system evaluated
/// on the unscaled reconstruction (n, phi, v scaled by eps), integrated over
/// the computational torus and divided by eps^2:
///
/// `H = (1/2) int (1 + eps n)|v|^2 + (eps/2) int |grad phi|^2
///      + eps^{-2} int [exp(eps phi)(eps phi - 1) + 1]`.
pub fn hamiltonian(state: &PlasmaState, params: &PlasmaParams) -> f64 {
    let eps = params.eps;
    let mut kinetic = ScalarField::zeros(state.n.grid());
    for c in 0..state.v.len() {
        let sq = state.v.component(c).zip(state.v.component(c), |a, b| a * b);
        kinetic.add_scaled(&sq, 0.5);
    }
    let weighted = kinetic.zip(&state.n, |k, n| k * (1.0 + eps * n));
    let mut h = weighted.integral();

    let phi_spec = state.phi.to_spectrum();
    let mut grad_sq = 0.0;
    for a in 0..state.n.grid().dim() {
        grad_sq += phi_spec.derivative(a).unwrap().sobolev_norm_sq(0.0);
    }
    h += 0.5 * eps * grad_sq;
    h += state.phi.map(|p| exp_um1_plus1(eps * p)).integral() / (eps * eps);
    h
}

/// Impulse int (1 + eps n) v per component (missing components are zero).
pub fn impulse(state: &PlasmaState, params: &PlasmaParams) -> [f64; 3] {
    let mut p = [0.0; 3];
    for c in 0..state.v.len() {
        p[c] = state.v.component(c).zip(&state.n, |v, n| v * (1.0 + params.eps * n)).integral();
    }
    p
}

fn record(state: &PlasmaState, params: &PlasmaParams, s: f64) -> ConservationSample {
    ConservationSample {
        t: state.t,
        hamiltonian: if params.alpha > 0.0 { f64::NAN } else { hamiltonian(state, params) },
        impulse: impulse(state, params),
        l2_n: state.n.l2_norm(),
        l2_v: state.v.l2_norm(),
        hs_n: state.n.sobolev_norm(s),
        hseps_v: state.v.hs_eps_norm(s, params.eps, 1.0).unwrap_or(f64::NAN),
    }
}

/// Automatic step: 0.8x the advective bound, additionally resolving the
/// rotation angle to theta_cap.
pub fn auto_dt(state: &PlasmaState, params: &PlasmaParams, cfg: &SimConfig) -> f64 {
    let mut dt = 0.8 * cfl_limit(state, params);
    if params.a > 0.0 && state.v.len() == 3 {
        dt = dt.min(cfg.theta_cap / params.rotation_rate());
    }
    dt
}

/// Integrate to `initial.t + horizon` with conservation logging. An invariant
/// violation mid-run aborts and reports the last good state.
pub fn simulate(
    initial: &PlasmaState,
    params: &PlasmaParams,
    horizon: f64,
    cfg: &SimConfig,
) -> Result<SimOutcome> {
    let grid = initial.n.grid().clone();
    params.validate(grid.dim())?;
    check_same_grid(&grid, initial.v.grid())?;
    if horizon < 0.0 {
        return Err(Error::InvalidParameter("horizon must be >= 0".into()));
    }

    let mut state = initial.clone();
    state.n = state.n.dealias();
    let comps: Vec<ScalarField> =
        state.v.components().iter().map(|c| c.dealias()).collect();
    state.v = VectorField::from_components(comps)?;
    state.resolve_potential(params, &cfg.poisson)?;

    let s = cfg.log_norm_s;
    let mut log = ConservationLog { s, samples: vec![record(&state, params, s)] };
    let mut shell_max = state.n.outer_shell_max(0.1);
    let mut snapshots = Vec::new();
    if horizon == 0.0 {
        return Ok(SimOutcome { state, log, snapshots, abort: None, shell_max });
    }

    let target = cfg.dt.unwrap_or_else(|| auto_dt(&state, params, cfg));
    let nsteps = (horizon / target).ceil().max(1.0) as usize;
    let dt = horizon / nsteps as f64;
    let mut abort = None;
    for i in 1..=nsteps {
        match step(&state, dt, params, cfg) {
            Ok(next) => state = next,
            Err(e) => {
                abort = Some(format!("t = {}: {e}", state.t));
                break;
            }
        }
        if i % cfg.log_every.max(1) == 0 || i == nsteps {
            log.samples.push(record(&state, params, s));
            shell_max = shell_max.max(state.n.outer_shell_max(0.1));
        }
        if cfg.snap_every > 0 && i % cfg.snap_every == 0 {
            snapshots.push(state.clone());
        }
    }
    Ok(SimOutcome { state, log, snapshots, abort, shell_max })
}
