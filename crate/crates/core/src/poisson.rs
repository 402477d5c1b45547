//! Nonlinear Poisson sub-problem for the electric potential.
//!
//! Unscaled equation: `-Lap(phi) + exp(phi) - 1 = n`.
//! Scaled equation:   `-eps^2 Lap(phi) + exp(eps*phi) - 1 = eps*n`.
//!
//! Both are instances of `-mu*Lap(phi) + exp(kappa*phi) - 1 = data`; Newton
//! with a Fourier-preconditioned conjugate-gradient inner solve is the
//! production path, and the sub/super-solution sweep (`monotone_solve`) is
//! kept as a slow bound-certified oracle.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::field::{check_same_grid, ScalarField};
use crate::grid::Grid;

#[derive(Clone, Debug)]
pub struct SolverConfig {
    /// L2 residual target of the outer equation.
    pub tol: f64,
    pub max_newton: usize,
    pub max_monotone: usize,
    /// Shift of the monotone sweep; defaults to twice the Lipschitz bound
    /// 2*exp(K_plus) = 2*(1 + |n|_inf).
    pub lambda: Option<f64>,
    pub warm_start: Option<ScalarField>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig { tol: 1e-11, max_newton: 60, max_monotone: 10_000, lambda: None, warm_start: None }
    }
}

impl SolverConfig {
    pub fn with_tol(tol: f64) -> Self {
        SolverConfig { tol, ..Default::default() }
    }

    pub fn warmed(mut self, phi: ScalarField) -> Self {
        self.warm_start = Some(phi);
        self
    }
}

/// A-priori diagnostics attached to every converged solve.
///
/// `energy_lhs <= i1/2` is the discrete energy inequality for the transformed
/// problem `psi = kappa*phi`, `-mu_psi*Lap(psi) + exp(psi) - 1 = data` with
/// `mu_psi = mu/kappa` (the unscaled equation has `mu_psi = 1`), using the
/// provable margin constant `m = min(inf(1 + data), 1)`:
///
/// `int[ (m/2) psi^2 + (mu/2)|grad psi|^2 + mu^2 |Lap psi|^2
///        + 2 mu e^psi |grad psi|^2 + (1/2)(e^psi - 1)^2 ]
///    <= (1/2) [ |data|_2^2 / m + |data|_2^2 + mu |grad data|_2^2 ]`.
#[derive(Clone, Debug)]
pub struct PoissonDiagnostics {
    /// inf(1 + data): the density margin (stored uncapped).
    pub c_inf: f64,
    /// Right-hand side of the energy inequality, times two.
    pub i1: f64,
    /// ln(1 - |n_eff|_inf)/kappa; -inf when the sup reaches 1.
    pub bound_lo: f64,
    /// ln(1 + |n_eff|_inf)/kappa.
    pub bound_hi: f64,
    /// Left-hand side of the energy inequality.
    pub energy_lhs: f64,
    pub iterations: usize,
    pub residual: f64,
}

fn lap(f: &ScalarField) -> ScalarField {
    let mut s = f.to_spectrum();
    s.apply_laplacian();
    s.to_field()
}

/// Solve `(-mu*Lap + shift) u = rhs` exactly in Fourier space.
fn helmholtz_solve(rhs: &ScalarField, mu: f64, shift: f64) -> ScalarField {
    let mut s = rhs.to_spectrum();
    s.helmholtz_invert(mu, shift);
    s.to_field()
}

/// Preconditioned conjugate gradients for an SPD operator given as a closure.
/// Returns (solution, iterations); `tol` is an absolute quadrature-L2 target
/// on the residual.
fn pcg<A, P>(apply: A, precond: P, b: &ScalarField, x0: ScalarField, tol: f64, max_iter: usize) -> Result<(ScalarField, usize)>
where
    A: Fn(&ScalarField) -> ScalarField,
    P: Fn(&ScalarField) -> ScalarField,
{
    let mut x = x0;
    let ax = apply(&x);
    let mut r = b.clone();
    r.add_scaled(&ax, -1.0);
    let mut z = precond(&r);
    let mut p = z.clone();
    let mut rz = r.inner(&z);
    for it in 0..max_iter {
        let rnorm = r.l2_norm();
        if rnorm <= tol {
            return Ok((x, it));
        }
        let q = apply(&p);
        let pq = p.inner(&q);
        if pq <= 0.0 || !pq.is_finite() {
            return Err(Error::NoConvergence { iterations: it, residual: rnorm });
        }
        let alpha = rz / pq;
        x.add_scaled(&p, alpha);
        r.add_scaled(&q, -alpha);
        z = precond(&r);
        let rz_new = r.inner(&z);
        let beta = rz_new / rz;
        rz = rz_new;
        let mut p_next = z.clone();
        p_next.add_scaled(&p, beta);
        p = p_next;
    }
    let rnorm = r.l2_norm();
    if rnorm <= tol {
        Ok((x, max_iter))
    } else {
        Err(Error::NoConvergence { iterations: max_iter, residual: rnorm })
    }
}

/// `exp(u)*(u-1) + 1`, accurate near u = 0 (used by the Hamiltonian too).
pub(crate) fn exp_um1_plus1(u: f64) -> f64 {
    if u.abs() > 0.5 {
        u.exp() * (u - 1.0) + 1.0
    } else {
        // sum_{j>=2} u^j (j-1)/j!
        let mut term = u * u; // u^j / j! * j! ... build u^j/j! incrementally
        let mut fac = 2.0;
        let mut acc = 0.0;
        for j in 2..20 {
            let contrib = term / fac * (j as f64 - 1.0);
            acc += contrib;
            if contrib.abs() < f64::EPSILON * acc.abs() {
                break;
            }
            term *= u;
            fac *= (j + 1) as f64;
        }
        acc
    }
}

struct Problem {
    mu: f64,
    kappa: f64,
    data: ScalarField,
}

impl Problem {
    fn residual(&self, phi: &ScalarField) -> ScalarField {
        let mut r = lap(phi);
        r.scale(-self.mu);
        let k = self.kappa;
        for ((r, p), d) in r.values_mut().iter_mut().zip(phi.values()).zip(self.data.values()) {
            *r += (k * p).exp_m1() - d;
        }
        r
    }

    fn diagnostics(&self, phi: &ScalarField, iterations: usize, residual: f64) -> PoissonDiagnostics {
        let sup = self.data.max_abs();
        let c_inf = 1.0 + self.data.min_value();
        let m = c_inf.min(1.0);
        let mu = self.mu / self.kappa;
        let psi = phi.map(|p| self.kappa * p);

        let data_l2_sq = self.data.l2_norm().powi(2);
        let mut grad_data_sq = 0.0;
        let spec_d = self.data.to_spectrum();
        for a in 0..self.data.grid().dim() {
            grad_data_sq += spec_d.derivative(a).unwrap().sobolev_norm_sq(0.0);
        }
        let i1 = data_l2_sq / m + data_l2_sq + mu * grad_data_sq;

        let spec = psi.to_spectrum();
        let mut grad_sq = 0.0;
        let mut e_grad = 0.0;
        let exp_psi = psi.map(f64::exp);
        for a in 0..psi.grid().dim() {
            let da = spec.derivative(a).unwrap().to_field();
            grad_sq += da.l2_norm().powi(2);
            e_grad += da.zip(&exp_psi, |g, e| e * g * g).integral();
        }
        let mut lap_spec = spec.clone();
        lap_spec.apply_laplacian();
        let lap_sq = lap_spec.sobolev_norm_sq(0.0);
        let psi_sq = psi.l2_norm().powi(2);
        let em1_sq = psi.map(|p| p.exp_m1().powi(2)).integral();
        let energy_lhs =
            0.5 * m * psi_sq + 0.5 * mu * grad_sq + mu * mu * lap_sq + 2.0 * mu * e_grad + 0.5 * em1_sq;

        let bound_lo = if sup < 1.0 { (1.0 - sup).ln() / self.kappa } else { f64::NEG_INFINITY };
        let bound_hi = sup.ln_1p() / self.kappa;
        PoissonDiagnostics { c_inf, i1, bound_lo, bound_hi, energy_lhs, iterations, residual }
    }

    fn newton(&self, cfg: &SolverConfig) -> Result<(ScalarField, PoissonDiagnostics)> {
        let floor = 1.0 + self.data.min_value();
        if floor <= 0.0 {
            return Err(Error::DensityFloorViolated { min_density: floor });
        }
        let mut phi = match &cfg.warm_start {
            Some(w) => {
                check_same_grid(self.data.grid(), w.grid())?;
                w.clone()
            }
            // pointwise balance exp(kappa*phi) - 1 = data is an excellent start
            None => self.data.map(|d| d.ln_1p() / self.kappa),
        };
        let inner_tol = 0.01 * cfg.tol;
        let mut last_res = f64::INFINITY;
        for it in 0..=cfg.max_newton {
            let r = self.residual(&phi);
            last_res = r.l2_norm();
            if last_res <= cfg.tol {
                return Ok((phi, self.diagnostics(&phi, it, last_res)));
            }
            if it == cfg.max_newton {
                break;
            }
            // Jacobian multiplier kappa * exp(kappa*phi)
            let w = phi.map(|p| self.kappa * (self.kappa * p).exp());
            let wbar = w.mean();
            let mu = self.mu;
            let apply = |u: &ScalarField| {
                let mut out = lap(u);
                out.scale(-mu);
                for (o, (uu, ww)) in out.values_mut().iter_mut().zip(u.values().iter().zip(w.values())) {
                    *o += ww * uu;
                }
                out
            };
            let precond = |r: &ScalarField| helmholtz_solve(r, mu, wbar);
            let mut rhs = r;
            rhs.scale(-1.0);
            let x0 = ScalarField::zeros(self.data.grid());
            let (delta, _) = pcg(apply, precond, &rhs, x0, inner_tol, 600)?;
            phi.add_scaled(&delta, 1.0);
        }
        Err(Error::NoConvergence { iterations: cfg.max_newton, residual: last_res })
    }
}

/// Solve `-Lap(phi) + exp(phi) - 1 = n` by Newton iteration.
pub fn solve_unscaled(n: &ScalarField, cfg: &SolverConfig) -> Result<(ScalarField, PoissonDiagnostics)> {
    let problem = Problem { mu: 1.0, kappa: 1.0, data: n.clone() };
    problem.newton(cfg)
}

/// Solve `-eps^2 Lap(phi) + exp(eps*phi) - 1 = eps*n` by Newton iteration.
pub fn solve_scaled(n: &ScalarField, eps: f64, cfg: &SolverConfig) -> Result<(ScalarField, PoissonDiagnostics)> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::InvalidParameter(format!("eps = {eps} outside (0, 1]")));
    }
    let problem = Problem { mu: eps * eps, kappa: eps, data: n.map(|v| eps * v) };
    problem.newton(cfg)
}

/// Sub/super-solution sweep for the unscaled equation: iterate
/// `(-Lap + lambda) phi_{k+1} = lambda*phi_k - (exp(phi_k) - 1) + n` upward
/// from the constant sub-solution `ln(1 - |n|_inf)`. Pointwise monotonicity is
/// enforced at every step (round-off tolerance 1e-13).
pub fn monotone_solve(n: &ScalarField, cfg: &SolverConfig) -> Result<(ScalarField, PoissonDiagnostics)> {
    let sup = n.max_abs();
    if sup >= 1.0 {
        return Err(Error::AmplitudeTooLarge { sup });
    }
    let problem = Problem { mu: 1.0, kappa: 1.0, data: n.clone() };
    let lambda = cfg.lambda.unwrap_or(2.0 * (1.0 + sup));
    let mut phi = ScalarField::constant(n.grid(), (1.0 - sup).ln());
    let mut last_res = f64::INFINITY;
    for it in 0..cfg.max_monotone {
        let mut rhs = phi.map(|p| lambda * p - p.exp_m1());
        rhs.add_scaled(n, 1.0);
        let next = helmholtz_solve(&rhs, 1.0, lambda);
        let mut drop = 0.0f64;
        for (a, b) in next.values().iter().zip(phi.values()) {
            drop = drop.min(a - b);
        }
        if drop < -1e-13 {
            return Err(Error::MonotonicityViolated { iteration: it, drop: -drop });
        }
        phi = next;
        let r = problem.residual(&phi);
        last_res = r.l2_norm();
        if last_res <= cfg.tol {
            return Ok((phi, problem.diagnostics(&phi, it + 1, last_res)));
        }
    }
    Err(Error::NoConvergence { iterations: cfg.max_monotone, residual: last_res })
}

/// Apply the linearized operator `M_eps(phi) u = -eps*Lap(u) + exp(eps*phi) u`.
pub fn apply_m(phi: &ScalarField, u: &ScalarField, eps: f64) -> Result<ScalarField> {
    check_same_grid(phi.grid(), u.grid())?;
    let mut out = lap(u);
    out.scale(-eps);
    for (o, (uu, pp)) in out.values_mut().iter_mut().zip(u.values().iter().zip(phi.values())) {
        *o += (eps * pp).exp() * uu;
    }
    Ok(out)
}

/// Invert `M_eps(phi)` by preconditioned conjugate gradients:
/// returns u with `|M u - v|_2 <= cfg.tol`.
pub fn invert_m(phi: &ScalarField, v: &ScalarField, eps: f64, cfg: &SolverConfig) -> Result<ScalarField> {
    check_same_grid(phi.grid(), v.grid())?;
    if eps <= 0.0 {
        return Err(Error::InvalidParameter(format!("eps = {eps} must be positive")));
    }
    let w = phi.map(|p| (eps * p).exp());
    let wbar = w.mean();
    let apply = |u: &ScalarField| {
        let mut out = lap(u);
        out.scale(-eps);
        for (o, (uu, ww)) in out.values_mut().iter_mut().zip(u.values().iter().zip(w.values())) {
            *o += ww * uu;
        }
        out
    };
    let precond = |r: &ScalarField| helmholtz_solve(r, eps, wbar);
    let x0 = ScalarField::zeros(v.grid());
    let (u, _) = pcg(apply, precond, v, x0, cfg.tol, 2000)?;
    Ok(u)
}

/// Grid helper shared by tests and experiments.
pub fn default_grid_2d(n: usize, l: f64) -> Arc<Grid> {
    crate::grid::make_grid(2, &[n, n], &[l, l]).expect("valid grid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{cosine_mode, gaussian_bump, random_band_limited};

    fn grid() -> Arc<Grid> {
        default_grid_2d(64, 40.0)
    }

    #[test]
    fn zero_density_zero_potential() {
        let g = grid();
        let n = ScalarField::zeros(&g);
        let (phi, diag) = solve_unscaled(&n, &SolverConfig::default()).unwrap();
        assert!(phi.max_abs() <= 1e-14);
        assert!(diag.residual <= 1e-14);
    }

    #[test]
    fn constant_density_exact() {
        let g = grid();
        for c in [0.3, -0.4, 0.9] {
            let n = ScalarField::constant(&g, c);
            let (phi, _) = solve_unscaled(&n, &SolverConfig::default()).unwrap();
            let expect = (1.0f64 + c).ln();
            assert!((phi.max_value() - expect).abs() < 1e-12);
            assert!((phi.min_value() - expect).abs() < 1e-12);
        }
        let eps = 0.2;
        let n = ScalarField::constant(&g, 0.5);
        let (phi, _) = solve_scaled(&n, eps, &SolverConfig::default()).unwrap();
        let expect = (1.0f64 + eps * 0.5).ln() / eps;
        assert!((phi.max_value() - expect).abs() < 1e-12);
    }

    #[test]
    fn pointwise_bounds_random_density() {
        let g = grid();
        let n = random_band_limited(&g, 4, 0.5, 7);
        let (phi, diag) = solve_unscaled(&n, &SolverConfig::default()).unwrap();
        assert!(phi.min_value() >= diag.bound_lo - 1e-10);
        assert!(phi.max_value() <= diag.bound_hi + 1e-10);
        assert!(diag.energy_lhs <= 0.5 * diag.i1 + 1e-8);
    }

    #[test]
    fn density_floor_rejected() {
        let g = grid();
        let n = ScalarField::constant(&g, -1.0);
        assert!(matches!(
            solve_unscaled(&n, &SolverConfig::default()),
            Err(Error::DensityFloorViolated { .. })
        ));
    }

    #[test]
    fn monotone_matches_newton() {
        let g = grid();
        let n = random_band_limited(&g, 4, 0.4, 11);
        let cfg = SolverConfig::default();
        let (phi_n, _) = solve_unscaled(&n, &cfg).unwrap();
        let (phi_m, diag) = monotone_solve(&n, &cfg).unwrap();
        let mut diff = phi_n.clone();
        diff.add_scaled(&phi_m, -1.0);
        assert!(diff.l2_norm() <= 1e-9, "cross-solver gap {}", diff.l2_norm());
        assert!(diag.iterations > 1);
    }

    #[test]
    fn monotone_constant_case() {
        let g = grid();
        let n = ScalarField::constant(&g, 0.3);
        let (phi, _) = monotone_solve(&n, &SolverConfig::default()).unwrap();
        assert!((phi.max_value() - 1.3f64.ln()).abs() < 1e-10);
    }

    #[test]
    fn uniqueness_under_warm_start() {
        let g = grid();
        let n = random_band_limited(&g, 4, 0.5, 13);
        let cfg = SolverConfig::default();
        let (phi_a, _) = solve_unscaled(&n, &cfg).unwrap();
        let warm = cfg.clone().warmed(ScalarField::constant(&g, 0.25));
        let (phi_b, _) = solve_unscaled(&n, &warm).unwrap();
        let mut diff = phi_a.clone();
        diff.add_scaled(&phi_b, -1.0);
        assert!(diff.l2_norm() <= 10.0 * cfg.tol);
    }

    #[test]
    fn quasineutral_limit_first_order() {
        // |phi - n|_2 = O(eps) as eps -> 0 for fixed smooth n.
        let g = grid();
        let n = gaussian_bump(&g, 0.5, 4.0).dealias();
        let mut errs = Vec::new();
        for eps in [0.2, 0.1, 0.05] {
            let (phi, _) = solve_scaled(&n, eps, &SolverConfig::default()).unwrap();
            let mut diff = phi.clone();
            diff.add_scaled(&n, -1.0);
            errs.push((eps, diff.l2_norm()));
        }
        let slope = ((errs[0].1 / errs[2].1).ln()) / ((errs[0].0 / errs[2].0).ln());
        assert!((slope - 1.0).abs() < 0.35, "quasineutral order {slope}");
    }

    #[test]
    fn exp_bound_lemma() {
        // |e^phi - 1|_2 <= ((e^{|phi|_inf} - 1)/|phi|_inf) |phi|_2
        let g = grid();
        let n = random_band_limited(&g, 4, 0.5, 17);
        let (phi, _) = solve_unscaled(&n, &SolverConfig::default()).unwrap();
        let sup = phi.max_abs();
        let lhs = phi.map(|p| p.exp_m1().powi(2)).integral().sqrt();
        let rhs = (sup.exp_m1() / sup) * phi.l2_norm();
        assert!(lhs <= rhs * (1.0 + 1e-12));
    }

    #[test]
    fn apply_m_fourier_eigenfunction() {
        // phi = 0, eps = 1: M u = (1 + |k|^2) u on a pure mode.
        let g = crate::grid::make_grid(2, &[32, 32], &[2.0 * std::f64::consts::PI, 2.0 * std::f64::consts::PI]).unwrap();
        let u = cosine_mode(&g, &[1, 0], 1.0, 0.0);
        let phi = ScalarField::zeros(&g);
        let mu = apply_m(&phi, &u, 1.0).unwrap();
        let mut diff = mu.clone();
        diff.add_scaled(&u, -2.0);
        assert!(diff.max_abs() < 1e-12);
    }

    #[test]
    fn apply_m_self_adjoint_and_coercive() {
        let g = grid();
        let phi = random_band_limited(&g, 4, 0.8, 23);
        let u = random_band_limited(&g, 5, 1.0, 29);
        let w = random_band_limited(&g, 5, 1.0, 31);
        for eps in [1.0, 0.1] {
            let mu_u = apply_m(&phi, &u, eps).unwrap();
            let mu_w = apply_m(&phi, &w, eps).unwrap();
            let a = mu_u.inner(&w);
            let b = u.inner(&mu_w);
            assert!((a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0));

            // coercivity: <u, Mu> >= e^{-eps|phi|_inf} |u|^2 + eps |grad u|^2
            let quad = u.inner(&mu_u);
            let mut grad_sq = 0.0;
            for axis in 0..2 {
                grad_sq += u.derivative(axis).unwrap().l2_norm().powi(2);
            }
            let lower = (-eps * phi.max_abs()).exp() * u.l2_norm().powi(2) + eps * grad_sq;
            assert!(quad >= lower - 1e-10 * quad.abs());
        }
    }

    #[test]
    fn invert_m_diagonal_case() {
        // phi = 0: u_k = v_k / (eps |k|^2 + 1).
        let g = crate::grid::make_grid(1, &[64], &[2.0 * std::f64::consts::PI]).unwrap();
        let v = cosine_mode(&g, &[3], 1.0, 0.4);
        let phi = ScalarField::zeros(&g);
        let eps = 0.5;
        let u = invert_m(&phi, &v, eps, &SolverConfig::default()).unwrap();
        let mut expect = v.clone();
        expect.scale(1.0 / (eps * 9.0 + 1.0));
        let mut diff = u.clone();
        diff.add_scaled(&expect, -1.0);
        assert!(diff.max_abs() < 1e-10);
    }

    #[test]
    fn invert_m_round_trip() {
        let g = grid();
        let phi = random_band_limited(&g, 4, 0.7, 37);
        let u0 = random_band_limited(&g, 5, 1.0, 41);
        for eps in [1.0, 0.1, 0.01] {
            let v = apply_m(&phi, &u0, eps).unwrap();
            let u = invert_m(&phi, &v, eps, &SolverConfig::default()).unwrap();
            let mut diff = u.clone();
            diff.add_scaled(&u0, -1.0);
            assert!(diff.l2_norm() <= 1e-9, "eps={eps} err={}", diff.l2_norm());
        }
    }

    #[test]
    fn invert_m_squared_coercivity_estimate() {
        // e^{-eps*P}|u|^2 + eps|grad u|^2 <= e^{eps*P}|v|^2, P = |phi|_inf.
        let g = grid();
        for (i, eps) in [1.0, 0.1, 0.01].into_iter().enumerate() {
            let phi = random_band_limited(&g, 4, 0.9, 43 + i as u64);
            let v = random_band_limited(&g, 5, 1.0, 53 + i as u64);
            let u = invert_m(&phi, &v, eps, &SolverConfig::default()).unwrap();
            let p = phi.max_abs();
            let mut grad_sq = 0.0;
            for axis in 0..2 {
                grad_sq += u.derivative(axis).unwrap().l2_norm().powi(2);
            }
            let lhs = (-eps * p).exp() * u.l2_norm().powi(2) + eps * grad_sq;
            let rhs = (eps * p).exp() * v.l2_norm().powi(2);
            assert!(lhs <= rhs * (1.0 + 1e-10), "eps={eps}: {lhs} vs {rhs}");
        }
    }
}
