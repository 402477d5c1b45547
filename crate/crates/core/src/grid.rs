//! Periodic tensor grid with cached FFT plans and spectral mode tables.
//!
//! Conventions, fixed once for the whole crate:
//! * row-major storage, axis 0 is x (the longitudinal direction), the last
//!   axis is contiguous;
//! * physical coordinates run over `[-L/2, L/2)` per axis with spacing
//!   `h = L/N`;
//! * the forward transform is quadrature-normalized so that the k = 0
//!   coefficient equals `mean * volume`:
//!   `fhat_k = (V/Ntot) * sum_j f_j exp(-i k . x_j)`, and the inverse is
//!   `f_j = (1/V) * sum_k fhat_k exp(+i k . x_j)`.  With this choice the
//!   discrete L2 norm satisfies `|f|_2^2 = (1/V) sum_k |fhat_k|^2` (Parseval);
//! * spectral differentiation multiplies by `i*k` with the Nyquist mode
//!   zeroed (the `dk` table below); Laplacians use `-(sum_j dk_j^2)` so that
//!   `<u, -Lap u> = sum_j |D_j u|_2^2` holds exactly;
//! * the 2/3-rule dealias mask zeroes every mode with `|m| > N/3` on any
//!   axis.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

pub const MAX_DIM: usize = 3;

pub struct Grid {
    dim: usize,
    points: Vec<usize>,
    lengths: Vec<f64>,
    strides: Vec<usize>,
    ntot: usize,
    volume: f64,
    /// Physical wavenumbers 2*pi*m/L in FFT ordering, per axis.
    k: Vec<Vec<f64>>,
    /// Same table with the Nyquist entry replaced by zero (differentiation).
    dk: Vec<Vec<f64>>,
    /// 2/3-rule keep mask per axis.
    keep: Vec<Vec<bool>>,
    fwd: Vec<Arc<dyn Fft<f64>>>,
    inv: Vec<Arc<dyn Fft<f64>>>,
}

impl std::fmt::Debug for Grid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Grid")
            .field("dim", &self.dim)
            .field("points", &self.points)
            .field("lengths", &self.lengths)
            .finish()
    }
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.points == other.points && self.lengths == other.lengths
    }
}

/// Build a shared periodic grid. Point counts must be powers of two >= 8.
pub fn make_grid(dim: usize, points: &[usize], lengths: &[f64]) -> Result<Arc<Grid>> {
    Grid::new(dim, points, lengths).map(Arc::new)
}

impl Grid {
    pub fn new(dim: usize, points: &[usize], lengths: &[f64]) -> Result<Grid> {
        if dim == 0 || dim > MAX_DIM {
            return Err(Error::BadDimension(dim));
        }
        if points.len() != dim || lengths.len() != dim {
            return Err(Error::BadDimension(dim));
        }
        for (axis, &n) in points.iter().enumerate() {
            if n < 8 || !n.is_power_of_two() {
                return Err(Error::BadPointCount { axis, points: n });
            }
        }
        for (axis, &l) in lengths.iter().enumerate() {
            if !(l > 0.0 && l.is_finite()) {
                return Err(Error::BadLength { axis, length: l });
            }
        }

        let mut strides = vec![0usize; dim];
        strides[dim - 1] = 1;
        for a in (0..dim.saturating_sub(1)).rev() {
            strides[a] = strides[a + 1] * points[a + 1];
        }
        let ntot: usize = points.iter().product();
        let volume: f64 = lengths.iter().product();

        let mut k = Vec::with_capacity(dim);
        let mut dk = Vec::with_capacity(dim);
        let mut keep = Vec::with_capacity(dim);
        for a in 0..dim {
            let n = points[a];
            let base = 2.0 * std::f64::consts::PI / lengths[a];
            let mut ka = Vec::with_capacity(n);
            let mut dka = Vec::with_capacity(n);
            let mut keepa = Vec::with_capacity(n);
            for i in 0..n {
                let m = if i <= n / 2 { i as i64 } else { i as i64 - n as i64 };
                ka.push(base * m as f64);
                dka.push(if i == n / 2 { 0.0 } else { base * m as f64 });
                keepa.push(3 * m.unsigned_abs() as usize <= n);
            }
            k.push(ka);
            dk.push(dka);
            keep.push(keepa);
        }

        let mut planner = FftPlanner::<f64>::new();
        let fwd = points.iter().map(|&n| planner.plan_fft_forward(n)).collect();
        let inv = points.iter().map(|&n| planner.plan_fft_inverse(n)).collect();

        Ok(Grid { dim, points: points.to_vec(), lengths: lengths.to_vec(), strides, ntot, volume, k, dk, keep, fwd, inv })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points(&self) -> &[usize] {
        &self.points
    }

    pub fn lengths(&self) -> &[f64] {
        &self.lengths
    }

    pub fn len(&self) -> usize {
        self.ntot
    }

    pub fn is_empty(&self) -> bool {
        self.ntot == 0
    }

    pub fn volume(&self) -> f64 {
        self.volume
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.lengths[axis] / self.points[axis] as f64
    }

    pub fn min_spacing(&self) -> f64 {
        (0..self.dim).map(|a| self.spacing(a)).fold(f64::INFINITY, f64::min)
    }

    /// Quadrature weight of a single point, prod_j h_j = V/Ntot.
    pub fn cell_volume(&self) -> f64 {
        self.volume / self.ntot as f64
    }

    pub fn wavenumbers(&self, axis: usize) -> &[f64] {
        &self.k[axis]
    }

    /// Nyquist-zeroed wavenumber table used by spectral differentiation.
    pub fn diff_wavenumbers(&self, axis: usize) -> &[f64] {
        &self.dk[axis]
    }

    pub fn dealias_keep(&self, axis: usize) -> &[bool] {
        &self.keep[axis]
    }

    /// Coordinates along one axis, centered: x_i = i*h - L/2.
    pub fn coords(&self, axis: usize) -> Vec<f64> {
        let h = self.spacing(axis);
        let half = self.lengths[axis] / 2.0;
        (0..self.points[axis]).map(|i| i as f64 * h - half).collect()
    }

    /// Visit every storage index together with its per-axis mode/point digits.
    #[inline]
    pub fn for_each_index<F: FnMut(usize, [usize; 3])>(&self, mut f: F) {
        match self.dim {
            1 => {
                for i0 in 0..self.points[0] {
                    f(i0, [i0, 0, 0]);
                }
            }
            2 => {
                let mut idx = 0;
                for i0 in 0..self.points[0] {
                    for i1 in 0..self.points[1] {
                        f(idx, [i0, i1, 0]);
                        idx += 1;
                    }
                }
            }
            3 => {
                let mut idx = 0;
                for i0 in 0..self.points[0] {
                    for i1 in 0..self.points[1] {
                        for i2 in 0..self.points[2] {
                            f(idx, [i0, i1, i2]);
                            idx += 1;
                        }
                    }
                }
            }
            _ => unreachable!(),
        }
    }

    fn fft_axis(&self, buf: &mut [Complex64], axis: usize, forward: bool) {
        let n = self.points[axis];
        let plan = if forward { &self.fwd[axis] } else { &self.inv[axis] };
        let mut scratch = vec![Complex64::new(0.0, 0.0); plan.get_inplace_scratch_len()];
        let stride = self.strides[axis];
        if stride == 1 {
            for chunk in buf.chunks_exact_mut(n) {
                plan.process_with_scratch(chunk, &mut scratch);
            }
        } else {
            let mut line = vec![Complex64::new(0.0, 0.0); n];
            let block = stride * n;
            let nblocks = self.ntot / block;
            for b in 0..nblocks {
                let base = b * block;
                for s in 0..stride {
                    let start = base + s;
                    for (t, slot) in line.iter_mut().enumerate() {
                        *slot = buf[start + t * stride];
                    }
                    plan.process_with_scratch(&mut line, &mut scratch);
                    for (t, slot) in line.iter().enumerate() {
                        buf[start + t * stride] = *slot;
                    }
                }
            }
        }
    }

    /// Real samples -> quadrature-normalized spectral coefficients.
    pub fn forward(&self, values: &[f64]) -> Vec<Complex64> {
        assert_eq!(values.len(), self.ntot);
        let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        for a in 0..self.dim {
            self.fft_axis(&mut buf, a, true);
        }
        let scale = self.volume / self.ntot as f64;
        for c in buf.iter_mut() {
            *c *= scale;
        }
        buf
    }

    /// Spectral coefficients -> real samples (real part of the inverse).
    pub fn inverse(&self, coeffs: &[Complex64]) -> Vec<f64> {
        assert_eq!(coeffs.len(), self.ntot);
        let mut buf = coeffs.to_vec();
        for a in 0..self.dim {
            self.fft_axis(&mut buf, a, false);
        }
        let scale = 1.0 / self.volume;
        buf.iter().map(|c| c.re * scale).collect()
    }
}
