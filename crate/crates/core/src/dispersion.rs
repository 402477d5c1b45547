//! Plane-wave dispersion relation of the linearized Euler-Poisson system.
//!
//! The biquadratic for `w = omega^2` is
//! `w^2 + w*(a^2 - |k|^2/(1+|k|^2)) - a^2*k1^2/(1+|k|^2) = 0`,
//! and the equivalent rational form is
//! `(1+|k|^2) - k1^2/w - |kp|^2/(w + a^2) = 0` with `|kp|^2 = k2^2 + k3^2`.

use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct DispersionRoots {
    pub k: [f64; 3],
    pub a: f64,
    /// The two roots of the biquadratic, sorted ascending.
    pub omega_sq: [f64; 2],
    /// A root is propagating when omega^2 >= 0.
    pub propagating: [bool; 2],
    /// Relative residual of each root in the biquadratic.
    pub residual: [f64; 2],
}

/// Solve the quadratic `w^2 + b*w - c = 0` (c >= 0) without cancellation.
fn stable_roots(b: f64, c: f64) -> [f64; 2] {
    debug_assert!(c >= -0.0);
    let disc = (b * b + 4.0 * c).sqrt();
    if c == 0.0 {
        let mut r = [0.0, -b];
        r.sort_by(f64::total_cmp);
        return r;
    }
    // q carries the sign of -b so the large-magnitude root is formed by
    // addition, never by cancellation of nearby values.
    let q = -0.5 * (b + b.signum() * disc);
    let mut r = [q, -c / q];
    r.sort_by(f64::total_cmp);
    r
}

/// Roots of the dispersion relation at wave vector `k` and field strength `a`.
pub fn dispersion_roots(k: [f64; 3], a: f64) -> DispersionRoots {
    let ksq = k[0] * k[0] + k[1] * k[1] + k[2] * k[2];
    let b = a * a - ksq / (1.0 + ksq);
    let c = a * a * k[0] * k[0] / (1.0 + ksq);
    let omega_sq = stable_roots(b, c);
    let scale = 1.0f64.max(a * a).max(ksq / (1.0 + ksq));
    let mut residual = [0.0; 2];
    let mut propagating = [false; 2];
    for (i, &w) in omega_sq.iter().enumerate() {
        residual[i] = (w * w + b * w - c).abs() / (scale * scale);
        propagating[i] = w >= 0.0;
    }
    DispersionRoots { k, a, omega_sq, propagating, residual }
}

#[derive(Clone, Debug)]
pub struct EquivalenceReport {
    /// Relative residual of the rational form per root; None for
    /// non-propagating roots.
    pub residual: [Option<f64>; 2],
}

const RESONANCE_TOL: f64 = 1e-12;

/// Check the rational form of the dispersion relation on the propagating
/// roots. Roots at the excluded resonances omega^2 = 0 or omega^2 = -a^2 are
/// rejected.
pub fn verify_equivalent_form(roots: &DispersionRoots) -> Result<EquivalenceReport> {
    let ksq: f64 = roots.k.iter().map(|x| x * x).sum();
    let kperp_sq = roots.k[1] * roots.k[1] + roots.k[2] * roots.k[2];
    let a2 = roots.a * roots.a;
    let scale = 1.0 + ksq;
    let mut residual = [None, None];
    for i in 0..2 {
        if !roots.propagating[i] {
            continue;
        }
        let w = roots.omega_sq[i];
        if w.abs() <= RESONANCE_TOL * scale || (w + a2).abs() <= RESONANCE_TOL * scale {
            return Err(Error::ResonantRoot { omega_sq: w });
        }
        let r = (1.0 + ksq) - roots.k[0] * roots.k[0] / w - kperp_sq / (w + a2);
        residual[i] = Some(r.abs() / scale);
    }
    Ok(EquivalenceReport { residual })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_field_reduction() {
        // a = 0 collapses the relation to omega^2 = |k|^2 / (1 + |k|^2).
        for k in [[1.0, 0.0, 0.0], [0.3, -1.2, 0.8], [4.0, 4.0, 4.0]] {
            let r = dispersion_roots(k, 0.0);
            let ksq: f64 = k.iter().map(|x| x * x).sum();
            let expect = ksq / (1.0 + ksq);
            let got = r.omega_sq[1];
            assert!((got - expect).abs() <= 1e-14 * expect.max(1.0), "{got} vs {expect}");
            assert_eq!(r.omega_sq[0], 0.0);
        }
    }

    #[test]
    fn zero_wave_vector() {
        let r = dispersion_roots([0.0; 3], 2.0);
        assert_eq!(r.omega_sq, [-4.0, 0.0]);
        assert_eq!(r.propagating, [false, true]);
    }

    #[test]
    fn hand_value_unit_k() {
        // k = (1,0,0), a = 1: w^2 + w/2 - 1/2 = 0 has roots 1/2 and -1.
        let r = dispersion_roots([1.0, 0.0, 0.0], 1.0);
        assert!((r.omega_sq[1] - 0.5).abs() < 1e-15);
        assert!((r.omega_sq[0] + 1.0).abs() < 1e-15);
        assert!(r.residual[0] < 1e-12 && r.residual[1] < 1e-12);
    }

    #[test]
    fn equivalent_form_on_sweep() {
        // 100 deterministic (k, a) samples; every propagating root satisfies
        // the rational form.
        let mut count = 0;
        for i in 0..5 {
            for j in 0..5 {
                for l in 0..2 {
                    for ai in 0..2 {
                        let k = [0.3 + i as f64, -0.7 + 0.5 * j as f64, 0.2 * l as f64];
                        let a = 0.5 + 1.5 * ai as f64;
                        let roots = dispersion_roots(k, a);
                        let rep = verify_equivalent_form(&roots).unwrap();
                        for r in rep.residual.into_iter().flatten() {
                            assert!(r <= 1e-10, "residual {r} at k={k:?} a={a}");
                            count += 1;
                        }
                    }
                }
            }
        }
        assert!(count >= 100);
    }

    #[test]
    fn equivalent_form_hand_case() {
        // a = 0, k = (1,0,0): (1+1) - 1/(1/2) = 0.
        let roots = dispersion_roots([1.0, 0.0, 0.0], 0.0);
        let rep = verify_equivalent_form(&roots).unwrap();
        assert!(rep.residual[1].unwrap() <= 1e-14);
    }

    #[test]
    fn resonant_roots_rejected() {
        let roots = dispersion_roots([0.0; 3], 1.0);
        assert!(matches!(verify_equivalent_form(&roots), Err(Error::ResonantRoot { .. })));
    }

    #[test]
    fn weak_dispersion_limits() {
        // a = 0 branch: omega^2 < 1 always, -> 1 as |k| -> inf, ~ |k|^2 as k -> 0.
        for i in 1..60 {
            let kx = 0.1 * i as f64;
            let w = dispersion_roots([kx, 0.0, 0.0], 0.0).omega_sq[1];
            assert!(w < 1.0);
        }
        let w_large = dispersion_roots([300.0, 0.0, 0.0], 0.0).omega_sq[1];
        assert!((w_large - 1.0).abs() < 2e-5);
        let k_small = 1e-4;
        let w_small = dispersion_roots([k_small, 0.0, 0.0], 0.0).omega_sq[1];
        assert!((w_small / (k_small * k_small) - 1.0).abs() < 1e-7);
    }

    #[test]
    fn root_continuity_in_a() {
        // Propagating branch moves continuously as a -> 0.
        let k = [0.9, 0.4, -0.3];
        let w0 = dispersion_roots(k, 0.0).omega_sq[1];
        let mut prev = w0;
        for i in 1..=20 {
            let a = 1e-3 * i as f64;
            let w = dispersion_roots(k, a).omega_sq[1];
            assert!((w - prev).abs() < 1e-3);
            prev = w;
        }
        assert!((prev - w0).abs() < 0.05);
    }
}
