//! Real fields on a periodic grid, their spectral counterparts, discrete
//! Sobolev norms and the `ZKF1` dump format.

use std::io::{Read, Write};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::Grid;

/// `(1 + x)^s` and friends without paying `powf` for the common exponents.
#[inline]
pub(crate) fn spow(base: f64, s: f64) -> f64 {
    if s == 0.0 {
        1.0
    } else if s == 1.0 {
        base
    } else if s == 2.0 {
        base * base
    } else if s.fract() == 0.0 && s.abs() <= 16.0 {
        base.powi(s as i32)
    } else {
        base.powf(s)
    }
}

/// Real-valued samples on a shared grid.
#[derive(Clone, Debug)]
pub struct ScalarField {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

/// Spectral coefficients of a real field, quadrature-normalized (see grid.rs).
#[derive(Clone, Debug)]
pub struct Spectrum {
    grid: Arc<Grid>,
    coeffs: Vec<Complex64>,
}

pub fn check_same_grid(a: &Grid, b: &Grid) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(Error::GridMismatch)
    }
}

impl ScalarField {
    pub fn zeros(grid: &Arc<Grid>) -> Self {
        ScalarField { grid: grid.clone(), values: vec![0.0; grid.len()] }
    }

    pub fn constant(grid: &Arc<Grid>, c: f64) -> Self {
        ScalarField { grid: grid.clone(), values: vec![c; grid.len()] }
    }

    pub fn from_values(grid: &Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Dump(format!(
                "value count {} does not match grid size {}",
                values.len(),
                grid.len()
            )));
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite field sample".into()));
        }
        Ok(ScalarField { grid: grid.clone(), values })
    }

    /// Build from a closure of the centered physical coordinates.
    pub fn from_fn<F: FnMut(&[f64]) -> f64>(grid: &Arc<Grid>, mut f: F) -> Self {
        let coords: Vec<Vec<f64>> = (0..grid.dim()).map(|a| grid.coords(a)).collect();
        let mut values = vec![0.0; grid.len()];
        let mut x = [0.0f64; 3];
        grid.for_each_index(|idx, digits| {
            for a in 0..grid.dim() {
                x[a] = coords[a][digits[a]];
            }
            values[idx] = f(&x[..grid.dim()]);
        });
        ScalarField { grid: grid.clone(), values }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn to_spectrum(&self) -> Spectrum {
        Spectrum { grid: self.grid.clone(), coeffs: self.grid.forward(&self.values) }
    }

    /// Spectral partial derivative along `axis` (Nyquist mode zeroed).
    pub fn derivative(&self, axis: usize) -> Result<ScalarField> {
        if axis >= self.grid.dim() {
            return Err(Error::AxisOutOfRange { axis, dim: self.grid.dim() });
        }
        let mut s = self.to_spectrum();
        s.differentiate(axis)?;
        Ok(s.to_field())
    }

    /// 2/3-rule spectral truncation.
    pub fn dealias(&self) -> ScalarField {
        let mut s = self.to_spectrum();
        s.dealias();
        s.to_field()
    }

    /// Discrete `H^s` norm, `|f|^2 = (1/V) sum_k (1+|k|^2)^s |fhat_k|^2`.
    pub fn sobolev_norm(&self, s: f64) -> f64 {
        assert!(s >= 0.0, "Sobolev index must be nonnegative");
        self.to_spectrum().sobolev_norm_sq(s).sqrt()
    }

    /// eps-weighted norm `(|f|_{H^s}^2 + eps*w*|grad f|_{H^s}^2)^{1/2}`.
    pub fn hs_eps_norm(&self, s: f64, eps: f64, weight: f64) -> Result<f64> {
        self.to_spectrum().hs_eps_norm_sq(s, eps, weight).map(f64::sqrt)
    }

    /// Quadrature L2 norm.
    pub fn l2_norm(&self) -> f64 {
        let w = self.grid.cell_volume();
        (self.values.iter().map(|v| v * v).sum::<f64>() * w).sqrt()
    }

    pub fn inner(&self, other: &ScalarField) -> f64 {
        let w = self.grid.cell_volume();
        self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum::<f64>() * w
    }

    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_volume()
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn scale(&mut self, c: f64) {
        for v in self.values.iter_mut() {
            *v *= c;
        }
    }

    /// `self += c * other`.
    pub fn add_scaled(&mut self, other: &ScalarField, c: f64) {
        debug_assert_eq!(self.values.len(), other.values.len());
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += c * b;
        }
    }

    pub fn map<F: Fn(f64) -> f64>(&self, f: F) -> ScalarField {
        ScalarField { grid: self.grid.clone(), values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn zip<F: Fn(f64, f64) -> f64>(&self, other: &ScalarField, f: F) -> ScalarField {
        debug_assert_eq!(self.values.len(), other.values.len());
        let values = self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect();
        ScalarField { grid: self.grid.clone(), values }
    }

    /// Pointwise product, then 2/3 truncation.
    pub fn mul_dealiased(&self, other: &ScalarField) -> ScalarField {
        self.zip(other, |a, b| a * b).dealias()
    }

    /// `f(x - delta, y, z)` as an exact spectral phase shift.
    pub fn shift_x(&self, delta: f64) -> ScalarField {
        let mut s = self.to_spectrum();
        s.shift_x(delta);
        s.to_field()
    }

    /// Largest |f| over the outer `frac` shell of the box (boundary monitor).
    pub fn outer_shell_max(&self, frac: f64) -> f64 {
        let grid = &self.grid;
        let coords: Vec<Vec<f64>> = (0..grid.dim()).map(|a| grid.coords(a)).collect();
        let half: Vec<f64> = (0..grid.dim()).map(|a| grid.lengths()[a] / 2.0).collect();
        let mut m = 0.0f64;
        let values = &self.values;
        grid.for_each_index(|idx, digits| {
            let mut outer = false;
            for a in 0..grid.dim() {
                if coords[a][digits[a]].abs() >= (1.0 - frac) * half[a] {
                    outer = true;
                    break;
                }
            }
            if outer {
                m = m.max(values[idx].abs());
            }
        });
        m
    }
}

impl Spectrum {
    pub fn zeros(grid: &Arc<Grid>) -> Self {
        Spectrum { grid: grid.clone(), coeffs: vec![Complex64::new(0.0, 0.0); grid.len()] }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    pub fn to_field(&self) -> ScalarField {
        ScalarField { grid: self.grid.clone(), values: self.grid.inverse(&self.coeffs) }
    }

    pub fn scale(&mut self, c: f64) {
        for z in self.coeffs.iter_mut() {
            *z *= c;
        }
    }

    pub fn add_scaled(&mut self, other: &Spectrum, c: f64) {
        debug_assert_eq!(self.coeffs.len(), other.coeffs.len());
        for (a, b) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *a += c * b;
        }
    }

    /// Multiply by `i*dk_axis` in place.
    pub fn differentiate(&mut self, axis: usize) -> Result<()> {
        if axis >= self.grid.dim() {
            return Err(Error::AxisOutOfRange { axis, dim: self.grid.dim() });
        }
        let grid = self.grid.clone();
        let dk = grid.diff_wavenumbers(axis);
        let coeffs = &mut self.coeffs;
        grid.for_each_index(|idx, digits| {
            let k = dk[digits[axis]];
            let z = coeffs[idx];
            coeffs[idx] = Complex64::new(-k * z.im, k * z.re);
        });
        Ok(())
    }

    pub fn derivative(&self, axis: usize) -> Result<Spectrum> {
        let mut out = self.clone();
        out.differentiate(axis)?;
        Ok(out)
    }

    /// Multiply by `-(sum_j dk_j^2)` in place (the discrete Laplacian symbol).
    pub fn apply_laplacian(&mut self) {
        let grid = self.grid.clone();
        let dim = grid.dim();
        let coeffs = &mut self.coeffs;
        grid.for_each_index(|idx, digits| {
            let mut k2 = 0.0;
            for a in 0..dim {
                let k = grid.diff_wavenumbers(a)[digits[a]];
                k2 += k * k;
            }
            coeffs[idx] *= -k2;
        });
    }

    /// Divide by `shift + mu * |dk|^2` in place: inverts `(-mu*Lap + shift)`.
    pub fn helmholtz_invert(&mut self, mu: f64, shift: f64) {
        let grid = self.grid.clone();
        let dim = grid.dim();
        let coeffs = &mut self.coeffs;
        grid.for_each_index(|idx, digits| {
            let mut k2 = 0.0;
            for a in 0..dim {
                let k = grid.diff_wavenumbers(a)[digits[a]];
                k2 += k * k;
            }
            coeffs[idx] /= shift + mu * k2;
        });
    }

    /// Zero every mode with `|m| > N/3` on any axis. Idempotent.
    pub fn dealias(&mut self) {
        let grid = self.grid.clone();
        let dim = grid.dim();
        let coeffs = &mut self.coeffs;
        grid.for_each_index(|idx, digits| {
            for a in 0..dim {
                if !grid.dealias_keep(a)[digits[a]] {
                    coeffs[idx] = Complex64::new(0.0, 0.0);
                    return;
                }
            }
        });
    }

    /// Multiply by `-(sum_{j>=1} dk_j^2)` in place (transverse Laplacian).
    pub fn apply_perp_laplacian(&mut self) {
        let grid = self.grid.clone();
        let dim = grid.dim();
        let coeffs = &mut self.coeffs;
        grid.for_each_index(|idx, digits| {
            let mut k2 = 0.0;
            for a in 1..dim {
                let k = grid.diff_wavenumbers(a)[digits[a]];
                k2 += k * k;
            }
            coeffs[idx] *= -k2;
        });
    }

    /// Zero the content annihilated by d/dX (k_x = 0 and x-Nyquist modes);
    /// this is the projection `dX^{-1} dX`.
    pub fn zero_x_kernel(&mut self) {
        let grid = self.grid.clone();
        let dk = grid.diff_wavenumbers(0);
        let coeffs = &mut self.coeffs;
        grid.for_each_index(|idx, digits| {
            if dk[digits[0]] == 0.0 {
                coeffs[idx] = Complex64::new(0.0, 0.0);
            }
        });
    }

    /// Antiderivative along x: divide by `i*dk_x`, zeroing the k_x = 0 and
    /// Nyquist content (the projection kernel of d/dX).
    pub fn integrate_x(&mut self) {
        let grid = self.grid.clone();
        let dk = grid.diff_wavenumbers(0);
        let coeffs = &mut self.coeffs;
        grid.for_each_index(|idx, digits| {
            let k = dk[digits[0]];
            let z = coeffs[idx];
            coeffs[idx] = if k == 0.0 {
                Complex64::new(0.0, 0.0)
            } else {
                Complex64::new(z.im / k, -z.re / k)
            };
        });
    }

    /// Phase shift realizing `f(x - delta)`.
    pub fn shift_x(&mut self, delta: f64) {
        if delta == 0.0 {
            return;
        }
        let grid = self.grid.clone();
        let k = grid.wavenumbers(0);
        let coeffs = &mut self.coeffs;
        let phases: Vec<Complex64> =
            k.iter().map(|&kx| Complex64::new(0.0, -kx * delta).exp()).collect();
        grid.for_each_index(|idx, digits| {
            coeffs[idx] *= phases[digits[0]];
        });
    }

    pub fn sobolev_norm_sq(&self, s: f64) -> f64 {
        let grid = &self.grid;
        let dim = grid.dim();
        let mut acc = 0.0;
        let coeffs = &self.coeffs;
        grid.for_each_index(|idx, digits| {
            let mut k2 = 0.0;
            for a in 0..dim {
                let k = grid.wavenumbers(a)[digits[a]];
                k2 += k * k;
            }
            acc += spow(1.0 + k2, s) * coeffs[idx].norm_sqr();
        });
        acc / grid.volume()
    }

    pub fn hs_eps_norm_sq(&self, s: f64, eps: f64, weight: f64) -> Result<f64> {
        if weight < 0.0 {
            return Err(Error::NegativeWeight(weight));
        }
        if eps < 0.0 {
            return Err(Error::InvalidParameter(format!("negative eps {eps}")));
        }
        let grid = &self.grid;
        let dim = grid.dim();
        let ew = eps * weight;
        let mut acc = 0.0;
        let coeffs = &self.coeffs;
        grid.for_each_index(|idx, digits| {
            let mut k2 = 0.0;
            let mut dk2 = 0.0;
            for a in 0..dim {
                let k = grid.wavenumbers(a)[digits[a]];
                k2 += k * k;
                let d = grid.diff_wavenumbers(a)[digits[a]];
                dk2 += d * d;
            }
            acc += spow(1.0 + k2, s) * (1.0 + ew * dk2) * coeffs[idx].norm_sqr();
        });
        Ok(acc / grid.volume())
    }
}

/// Velocity container; one component in d = 1, three (slab convention) in
/// d = 2 and d = 3.
#[derive(Clone, Debug)]
pub struct VectorField {
    components: Vec<ScalarField>,
}

pub fn velocity_components(dim: usize) -> usize {
    if dim == 1 {
        1
    } else {
        3
    }
}

impl VectorField {
    pub fn zeros(grid: &Arc<Grid>) -> Self {
        let n = velocity_components(grid.dim());
        VectorField { components: (0..n).map(|_| ScalarField::zeros(grid)).collect() }
    }

    pub fn from_components(components: Vec<ScalarField>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidParameter("empty vector field".into()));
        }
        let grid = components[0].grid().clone();
        if components.len() != velocity_components(grid.dim()) {
            return Err(Error::InvalidParameter(format!(
                "expected {} velocity components, got {}",
                velocity_components(grid.dim()),
                components.len()
            )));
        }
        for c in &components[1..] {
            check_same_grid(&grid, c.grid())?;
        }
        Ok(VectorField { components })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.components[0].grid()
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn component(&self, i: usize) -> &ScalarField {
        &self.components[i]
    }

    pub fn component_mut(&mut self, i: usize) -> &mut ScalarField {
        &mut self.components[i]
    }

    pub fn components(&self) -> &[ScalarField] {
        &self.components
    }

    pub fn add_scaled(&mut self, other: &VectorField, c: f64) {
        for (a, b) in self.components.iter_mut().zip(&other.components) {
            a.add_scaled(b, c);
        }
    }

    pub fn scale(&mut self, c: f64) {
        for a in self.components.iter_mut() {
            a.scale(c);
        }
    }

    /// Pointwise maximum speed, max_x |v(x)|.
    pub fn max_speed(&self) -> f64 {
        let n = self.components[0].values().len();
        let mut m = 0.0f64;
        for i in 0..n {
            let mut s = 0.0;
            for c in &self.components {
                let v = c.values()[i];
                s += v * v;
            }
            m = m.max(s);
        }
        m.sqrt()
    }

    pub fn l2_norm(&self) -> f64 {
        self.components.iter().map(|c| c.l2_norm().powi(2)).sum::<f64>().sqrt()
    }

    pub fn hs_eps_norm(&self, s: f64, eps: f64, weight: f64) -> Result<f64> {
        let mut acc = 0.0;
        for c in &self.components {
            acc += c.hs_eps_norm(s, eps, weight)?.powi(2);
        }
        Ok(acc.sqrt())
    }
}

// ---------------------------------------------------------------------------
// deterministic test/experiment data
// ---------------------------------------------------------------------------

/// Random real field, band-limited to `|m| <= max_mode` per axis with a
/// Gaussian spectral taper, rescaled so that max|f| = amplitude. Deterministic
/// in (grid shape, max_mode, amplitude, seed).
pub fn random_band_limited(
    grid: &Arc<Grid>,
    max_mode: usize,
    amplitude: f64,
    seed: u64,
) -> ScalarField {
    let dim = grid.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mm = max_mode as i64;
    let m0 = (max_mode as f64 / 1.5).max(1.0);
    let mut spec = Spectrum::zeros(grid);

    let mode_index = |grid: &Grid, m: [i64; 3]| -> usize {
        let mut idx = 0usize;
        let mut stride = 1usize;
        for a in (0..dim).rev() {
            let n = grid.points()[a] as i64;
            let i = if m[a] >= 0 { m[a] } else { n + m[a] } as usize;
            idx += i * stride;
            stride *= n as usize;
        }
        idx
    };

    let mut m = [0i64; 3];
    let ranges: Vec<Vec<i64>> = (0..3)
        .map(|a| if a < dim { (-mm..=mm).collect() } else { vec![0] })
        .collect();
    for &m0i in &ranges[0] {
        for &m1i in &ranges[1] {
            for &m2i in &ranges[2] {
                m = [m0i, m1i, m2i];
                // take one representative per conjugate pair
                let lead = m.iter().find(|&&x| x != 0).copied().unwrap_or(0);
                if lead <= 0 {
                    continue;
                }
                let msq = (m[0] * m[0] + m[1] * m[1] + m[2] * m[2]) as f64;
                let taper = (-msq / (m0 * m0)).exp();
                let re: f64 = rng.gen_range(-1.0..=1.0);
                let im: f64 = rng.gen_range(-1.0..=1.0);
                let c = Complex64::new(taper * re, taper * im);
                let idx = mode_index(grid, m);
                let neg = mode_index(grid, [-m[0], -m[1], -m[2]]);
                spec.coeffs_mut()[idx] = c;
                spec.coeffs_mut()[neg] = c.conj();
            }
        }
    }
    let _ = m;
    let mut f = spec.to_field();
    let sup = f.max_abs();
    if sup > 0.0 {
        f.scale(amplitude / sup);
    }
    f
}

/// Centered Gaussian bump `amplitude * exp(-|x|^2 / width_sq)`.
pub fn gaussian_bump(grid: &Arc<Grid>, amplitude: f64, width_sq: f64) -> ScalarField {
    ScalarField::from_fn(grid, |x| {
        let r2: f64 = x.iter().map(|&c| c * c).sum();
        amplitude * (-r2 / width_sq).exp()
    })
}

/// `amplitude * cos(k . x + phase)` for an integer mode vector.
pub fn cosine_mode(grid: &Arc<Grid>, modes: &[i64], amplitude: f64, phase: f64) -> ScalarField {
    let dim = grid.dim();
    let ks: Vec<f64> = (0..dim)
        .map(|a| 2.0 * std::f64::consts::PI * modes[a] as f64 / grid.lengths()[a])
        .collect();
    ScalarField::from_fn(grid, |x| {
        let arg: f64 = x.iter().zip(&ks).map(|(&c, &k)| c * k).sum();
        amplitude * (arg + phase).cos()
    })
}

// ---------------------------------------------------------------------------
// ZKF1 dump format
// ---------------------------------------------------------------------------

/// Write `ZKF1 dim N1 [N2 [N3]] L1 [L2 [L3]]\n` followed by row-major
/// little-endian f64 samples.
pub fn write_zkf1<W: Write>(field: &ScalarField, w: &mut W) -> Result<()> {
    let grid = field.grid();
    let mut header = format!("ZKF1 {}", grid.dim());
    for &n in grid.points() {
        header.push_str(&format!(" {n}"));
    }
    for &l in grid.lengths() {
        header.push_str(&format!(" {l}"));
    }
    header.push('\n');
    let io = |e: std::io::Error| Error::Dump(e.to_string());
    w.write_all(header.as_bytes()).map_err(io)?;
    for &v in field.values() {
        w.write_all(&v.to_le_bytes()).map_err(io)?;
    }
    Ok(())
}

/// Read a `ZKF1` dump, rejecting malformed headers and size mismatches.
pub fn read_zkf1<R: Read>(r: &mut R) -> Result<ScalarField> {
    let io = |e: std::io::Error| Error::Dump(e.to_string());
    let mut header = Vec::new();
    let mut byte = [0u8; 1];
    loop {
        let read = r.read(&mut byte).map_err(io)?;
        if read == 0 {
            return Err(Error::Dump("truncated header".into()));
        }
        if byte[0] == b'\n' {
            break;
        }
        header.push(byte[0]);
        if header.len() > 256 {
            return Err(Error::Dump("header too long".into()));
        }
    }
    let header = String::from_utf8(header).map_err(|_| Error::Dump("non-utf8 header".into()))?;
    let tokens: Vec<&str> = header.split_whitespace().collect();
    if tokens.first() != Some(&"ZKF1") {
        return Err(Error::Dump("bad magic, expected ZKF1".into()));
    }
    let dim: usize = tokens
        .get(1)
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| Error::Dump("missing dimension".into()))?;
    if tokens.len() != 2 + 2 * dim {
        return Err(Error::Dump(format!(
            "expected {} header tokens, got {}",
            2 + 2 * dim,
            tokens.len()
        )));
    }
    let mut points = Vec::with_capacity(dim);
    let mut lengths = Vec::with_capacity(dim);
    for a in 0..dim {
        points.push(
            tokens[2 + a]
                .parse::<usize>()
                .map_err(|_| Error::Dump(format!("bad point count {}", tokens[2 + a])))?,
        );
        lengths.push(
            tokens[2 + dim + a]
                .parse::<f64>()
                .map_err(|_| Error::Dump(format!("bad length {}", tokens[2 + dim + a])))?,
        );
    }
    let grid = crate::grid::make_grid(dim, &points, &lengths)?;
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes).map_err(io)?;
    if bytes.len() != grid.len() * 8 {
        return Err(Error::Dump(format!(
            "payload holds {} bytes, grid needs {}",
            bytes.len(),
            grid.len() * 8
        )));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    ScalarField::from_values(&grid, values)
}
