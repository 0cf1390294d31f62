//! Periodic grids, sampled fields and their discrete Fourier spectra.
//!
//! A [`Field`] holds samples `f(x_p)` at `x_p = period * p / n` for
//! `p ∈ {0, …, n-1}^d`, row-major with axis 0 slowest. A [`Spectrum`] holds
//! the coefficients in FFT order: slot `i` on an axis carries frequency `i`
//! for `i < n/2` and `i - n` otherwise, so every axis covers `[-n/2, n/2)`.
//!
//! Normalization: `coeffs(ξ) = n^{-d} Σ_p f(x_p) e^{-i κ ξ·x_p}` with
//! `κ = 2π / period`, and the inverse is the plain sum. With this choice the
//! constant symbol gives back the pointwise product of its inputs.

use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::{FftDirection, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default box length.
pub const DEFAULT_PERIOD: f64 = 2.0 * PI;

/// Coefficients below this fraction of the largest one are treated as zero
/// when a spectrum is reduced to its active modes.
pub const ACTIVE_REL_TOL: f64 = 64.0 * f64::EPSILON;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    d: usize,
    n: usize,
    period: f64,
}

impl GridSpec {
    pub fn new(d: usize, n: usize, period: f64) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidGrid("dimension must be at least 1".into()));
        }
        if n < 4 || !n.is_power_of_two() {
            return Err(Error::InvalidGrid(format!(
                "points per axis must be a power of two >= 4, got {n}"
            )));
        }
        if !(period.is_finite() && period > 0.0) {
            return Err(Error::InvalidGrid(format!("period must be positive, got {period}")));
        }
        n.checked_pow(d as u32)
            .filter(|&len| len <= (1usize << 34))
            .ok_or_else(|| Error::InvalidGrid(format!("{n}^{d} samples do not fit memory")))?;
        Ok(Self { d, n, period })
    }

    /// Grid on `[0, 2π)^d`.
    pub fn periodic(d: usize, n: usize) -> Result<Self> {
        Self::new(d, n, DEFAULT_PERIOD)
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn len(&self) -> usize {
        self.n.pow(self.d as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Physical wavenumber of the unit lattice frequency, `2π / period`.
    pub fn wavenumber(&self) -> f64 {
        2.0 * PI / self.period
    }

    /// Quadrature weight `(period / n)^d`.
    pub fn cell_volume(&self) -> f64 {
        (self.period / self.n as f64).powi(self.d as i32)
    }

    pub fn volume(&self) -> f64 {
        self.period.powi(self.d as i32)
    }

    /// Same dimension and period, different resolution.
    pub fn with_n(&self, n: usize) -> Result<Self> {
        Self::new(self.d, n, self.period)
    }

    pub fn same_shape(&self, other: &GridSpec) -> bool {
        self.d == other.d && self.n == other.n && self.period == other.period
    }

    /// Frequency carried by FFT slot `i` on one axis.
    pub fn freq(&self, i: usize) -> i64 {
        let n = self.n as i64;
        let i = i as i64;
        if i < n / 2 {
            i
        } else {
            i - n
        }
    }

    /// FFT slot of frequency `k`, if `k ∈ [-n/2, n/2)`.
    pub fn slot(&self, k: i64) -> Option<usize> {
        let n = self.n as i64;
        if k >= -n / 2 && k < n / 2 {
            Some(k.rem_euclid(n) as usize)
        } else {
            None
        }
    }

    /// Writes the frequency vector of flat index `flat` into `out`.
    pub fn frequency_of(&self, flat: usize, out: &mut [i64]) {
        let mut rest = flat;
        for axis in (0..self.d).rev() {
            out[axis] = self.freq(rest % self.n);
            rest /= self.n;
        }
    }

    pub fn index_of(&self, freq: &[i64]) -> Option<usize> {
        let mut flat = 0usize;
        for &k in freq {
            flat = flat * self.n + self.slot(k)?;
        }
        Some(flat)
    }

    /// Writes the physical coordinates of sample `flat` into `out`.
    pub fn point(&self, flat: usize, out: &mut [f64]) {
        let h = self.period / self.n as f64;
        let mut rest = flat;
        for axis in (0..self.d).rev() {
            out[axis] = h * (rest % self.n) as f64;
            rest /= self.n;
        }
    }

    fn check_same(&self, other: &GridSpec) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!("{self:?} vs {other:?}")))
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    grid: GridSpec,
    samples: Vec<Complex64>,
}

impl Field {
    pub fn new(grid: GridSpec, samples: Vec<Complex64>) -> Result<Self> {
        if samples.len() != grid.len() {
            return Err(Error::InvalidArgument(format!(
                "expected {} samples, got {}",
                grid.len(),
                samples.len()
            )));
        }
        Ok(Self { grid, samples })
    }

    pub fn zeros(grid: GridSpec) -> Self {
        Self {
            grid,
            samples: vec![Complex64::new(0.0, 0.0); grid.len()],
        }
    }

    pub fn from_fn(grid: GridSpec, f: impl Fn(&[f64]) -> Complex64) -> Self {
        let mut x = vec![0.0; grid.d()];
        let samples = (0..grid.len())
            .map(|p| {
                grid.point(p, &mut x);
                f(&x)
            })
            .collect();
        Self { grid, samples }
    }

    pub fn from_real_fn(grid: GridSpec, f: impl Fn(&[f64]) -> f64) -> Self {
        Self::from_fn(grid, |x| Complex64::new(f(x), 0.0))
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    pub fn samples_mut(&mut self) -> &mut [Complex64] {
        &mut self.samples
    }

    pub fn into_samples(self) -> Vec<Complex64> {
        self.samples
    }

    pub fn max_abs(&self) -> f64 {
        self.samples.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Imaginary parts within `1e-12 * max|f|`.
    pub fn is_real(&self) -> bool {
        let tol = 1e-12 * self.max_abs();
        self.samples.iter().all(|z| z.im.abs() <= tol)
    }

    pub fn scaled(&self, c: Complex64) -> Field {
        Field {
            grid: self.grid,
            samples: self.samples.iter().map(|z| z * c).collect(),
        }
    }

    /// `self + c * other`.
    pub fn axpy(&self, c: Complex64, other: &Field) -> Result<Field> {
        self.grid.check_same(&other.grid)?;
        Ok(Field {
            grid: self.grid,
            samples: self
                .samples
                .iter()
                .zip(&other.samples)
                .map(|(a, b)| a + c * b)
                .collect(),
        })
    }

    pub fn add(&self, other: &Field) -> Result<Field> {
        self.axpy(Complex64::new(1.0, 0.0), other)
    }

    pub fn sub(&self, other: &Field) -> Result<Field> {
        self.axpy(Complex64::new(-1.0, 0.0), other)
    }

    /// Relative discrete L² distance `‖self - other‖ / ‖other‖`.
    pub fn rel_l2_error(&self, reference: &Field) -> Result<f64> {
        reference.grid.check_same(&self.grid)?;
        let mut num = 0.0;
        let mut den = 0.0;
        for (a, b) in self.samples.iter().zip(&reference.samples) {
            num += (a - b).norm_sqr();
            den += b.norm_sqr();
        }
        Ok(if den == 0.0 { num.sqrt() } else { (num / den).sqrt() })
    }
}

/// A mode of a spectrum with a non-negligible coefficient.
#[derive(Clone, Debug, PartialEq)]
pub struct Mode {
    pub freq: Vec<i64>,
    pub value: Complex64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum {
    grid: GridSpec,
    coeffs: Vec<Complex64>,
}

impl Spectrum {
    pub fn new(grid: GridSpec, coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() != grid.len() {
            return Err(Error::InvalidArgument(format!(
                "expected {} coefficients, got {}",
                grid.len(),
                coeffs.len()
            )));
        }
        Ok(Self { grid, coeffs })
    }

    pub fn zeros(grid: GridSpec) -> Self {
        Self {
            grid,
            coeffs: vec![Complex64::new(0.0, 0.0); grid.len()],
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    /// Raw coefficients in FFT order.
    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    /// Coefficient at `freq`; zero outside `[-n/2, n/2)^d`.
    pub fn coeff(&self, freq: &[i64]) -> Complex64 {
        self.grid
            .index_of(freq)
            .map_or(Complex64::new(0.0, 0.0), |i| self.coeffs[i])
    }

    pub fn set(&mut self, freq: &[i64], value: Complex64) -> Result<()> {
        let i = self.grid.index_of(freq).ok_or_else(|| {
            Error::InvalidArgument(format!("frequency {freq:?} outside the grid"))
        })?;
        self.coeffs[i] = value;
        Ok(())
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// `Σ_ξ |coeffs(ξ)|²`.
    pub fn energy(&self) -> f64 {
        self.coeffs.iter().map(|z| z.norm_sqr()).sum()
    }

    /// Modes whose coefficient exceeds [`ACTIVE_REL_TOL`] times the largest.
    pub fn active_modes(&self) -> Vec<Mode> {
        let cut = ACTIVE_REL_TOL * self.max_abs();
        let mut freq = vec![0i64; self.grid.d()];
        let mut out = Vec::new();
        for (i, &c) in self.coeffs.iter().enumerate() {
            if c.norm() > cut {
                self.grid.frequency_of(i, &mut freq);
                out.push(Mode {
                    freq: freq.clone(),
                    value: c,
                });
            }
        }
        out
    }

    /// Largest `|ξ_axis|` over the active modes.
    pub fn max_active_frequency(&self) -> i64 {
        self.active_modes()
            .iter()
            .flat_map(|m| m.freq.iter().map(|k| k.abs()))
            .max()
            .unwrap_or(0)
    }

    /// Multiplies every coefficient by `m(ξ)`.
    pub fn map_modes(&self, m: impl Fn(&[i64]) -> Complex64) -> Spectrum {
        let mut freq = vec![0i64; self.grid.d()];
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                self.grid.frequency_of(i, &mut freq);
                c * m(&freq)
            })
            .collect();
        Spectrum {
            grid: self.grid,
            coeffs,
        }
    }

    /// Multiplies by `i κ ξ_axis`; the Nyquist frequency `-n/2` is zeroed.
    pub fn differentiate(&self, axis: usize) -> Spectrum {
        let kappa = self.grid.wavenumber();
        let nyquist = -(self.grid.n() as i64) / 2;
        self.map_modes(|xi| {
            if xi[axis] == nyquist {
                Complex64::new(0.0, 0.0)
            } else {
                Complex64::new(0.0, kappa * xi[axis] as f64)
            }
        })
    }

    /// Re-embeds the coefficients on a grid with `n_new` points per axis.
    /// Modes outside the new frequency range are dropped.
    pub fn resized(&self, n_new: usize) -> Result<Spectrum> {
        let grid = self.grid.with_n(n_new)?;
        let mut out = Spectrum::zeros(grid);
        let mut freq = vec![0i64; self.grid.d()];
        for (i, &c) in self.coeffs.iter().enumerate() {
            self.grid.frequency_of(i, &mut freq);
            if let Some(j) = grid.index_of(&freq) {
                out.coeffs[j] = c;
            }
        }
        Ok(out)
    }
}

fn fft_nd(data: &mut [Complex64], grid: &GridSpec, direction: FftDirection) {
    let n = grid.n();
    let d = grid.d();
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft(n, direction);
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    if d == 1 {
        fft.process_with_scratch(data, &mut scratch);
        return;
    }
    let mut line = vec![Complex64::new(0.0, 0.0); n];
    let total = data.len();
    for axis in 0..d {
        let stride = n.pow((d - 1 - axis) as u32);
        if stride == 1 {
            // contiguous lines
            for chunk in data.chunks_exact_mut(n) {
                fft.process_with_scratch(chunk, &mut scratch);
            }
            continue;
        }
        let block = stride * n;
        for base in (0..total).step_by(block) {
            for offset in 0..stride {
                let start = base + offset;
                for (k, v) in line.iter_mut().enumerate() {
                    *v = data[start + k * stride];
                }
                fft.process_with_scratch(&mut line, &mut scratch);
                for (k, v) in line.iter().enumerate() {
                    data[start + k * stride] = *v;
                }
            }
        }
    }
}

pub fn dft_forward(f: &Field) -> Spectrum {
    let mut coeffs = f.samples.clone();
    fft_nd(&mut coeffs, &f.grid, FftDirection::Forward);
    let scale = 1.0 / f.grid.len() as f64;
    coeffs.iter_mut().for_each(|c| *c *= scale);
    Spectrum {
        grid: f.grid,
        coeffs,
    }
}

pub fn dft_inverse(s: &Spectrum) -> Field {
    let mut samples = s.coeffs.clone();
    fft_nd(&mut samples, &s.grid, FftDirection::Inverse);
    Field {
        grid: s.grid,
        samples,
    }
}

pub fn spectral_derivative(f: &Field, axis: usize) -> Result<Field> {
    if axis >= f.grid.d() {
        return Err(Error::InvalidArgument(format!(
            "axis {axis} out of range for d = {}",
            f.grid.d()
        )));
    }
    Ok(dft_inverse(&dft_forward(f).differentiate(axis)))
}

/// `∂^α f` for a multi-index given as per-axis orders.
pub fn spectral_partial(f: &Field, orders: &[usize]) -> Result<Field> {
    if orders.len() != f.grid.d() {
        return Err(Error::InvalidArgument("multi-index length must equal d".into()));
    }
    let mut s = dft_forward(f);
    for (axis, &k) in orders.iter().enumerate() {
        for _ in 0..k {
            s = s.differentiate(axis);
        }
    }
    Ok(dft_inverse(&s))
}

/// Spectral interpolation (or truncation) onto `n_new` points per axis.
pub fn resample(f: &Field, n_new: usize) -> Result<Field> {
    if n_new == f.grid.n() {
        return Ok(f.clone());
    }
    Ok(dft_inverse(&dft_forward(f).resized(n_new)?))
}

fn check_common_grid(fs: &[&Field]) -> Result<GridSpec> {
    let first = fs
        .first()
        .ok_or_else(|| Error::InvalidArgument("at least one field is required".into()))?;
    for f in &fs[1..] {
        first.grid.check_same(&f.grid)?;
    }
    Ok(first.grid)
}

/// Pointwise product of the inputs on the grid enlarged by `pad_factor`.
/// Exact whenever the summed degrees fit the enlarged grid.
pub fn padded_product(fs: &[&Field], pad_factor: usize) -> Result<Field> {
    let grid = check_common_grid(fs)?;
    if pad_factor < fs.len() {
        return Err(Error::PadTooSmall {
            pad: pad_factor,
            factors: fs.len(),
        });
    }
    let fine = grid.with_n(grid.n() * pad_factor)?;
    let mut out = vec![Complex64::new(1.0, 0.0); fine.len()];
    for f in fs {
        let up = resample(f, fine.n())?;
        out.iter_mut().zip(&up.samples).for_each(|(o, v)| *o *= v);
    }
    Field::new(fine, out)
}

/// Dealiased product: computed on the padded grid, then spectrally truncated
/// back to the input resolution.
pub fn dealiased_product(fs: &[&Field], pad_factor: usize) -> Result<Field> {
    let grid = check_common_grid(fs)?;
    let fine = padded_product(fs, pad_factor)?;
    resample(&fine, grid.n())
}

/// Quadrature pairing `(period/n)^d Σ_p f(x_p) g(x_p)` (bilinear, no conjugate).
pub fn pair(f: &Field, g: &Field) -> Result<Complex64> {
    f.grid.check_same(&g.grid)?;
    let sum: Complex64 = f.samples.iter().zip(&g.samples).map(|(a, b)| a * b).sum();
    Ok(sum * f.grid.cell_volume())
}

fn dilated_spectrum(s: &Spectrum, t: u32, n_out: usize) -> Result<Spectrum> {
    let grid = s.grid.with_n(n_out)?;
    let factor = 1i64 << t;
    let mut out = Spectrum::zeros(grid);
    for mode in s.active_modes() {
        let target: Vec<i64> = mode.freq.iter().map(|k| k * factor).collect();
        let j = grid.index_of(&target).ok_or(Error::FrequencyOverflow {
            n: n_out,
            needed: target.iter().map(|k| k.abs()).max().unwrap_or(0),
        })?;
        out.coeffs[j] = mode.value;
    }
    Ok(out)
}

/// Smallest resolution holding `f(2^t x)` without wrap-around.
pub fn dilation_resolution(f: &Field, t: u32) -> usize {
    let needed = dft_forward(f).max_active_frequency() << t;
    let mut n = f.grid.n();
    while needed >= (n as i64) / 2 {
        n *= 2;
    }
    n
}

/// `f(2^t x)` by remapping `coeffs'(2^t ξ) = coeffs(ξ)`. When the dilated
/// spectrum does not fit, the grid is enlarged if `enlarge` is set and an
/// overflow is reported otherwise.
pub fn dilate_dyadic(f: &Field, t: u32, enlarge: bool) -> Result<Field> {
    let n_out = dilation_resolution(f, t);
    if n_out != f.grid.n() && !enlarge {
        return Err(Error::FrequencyOverflow {
            n: f.grid.n(),
            needed: dft_forward(f).max_active_frequency() << t,
        });
    }
    dilate_dyadic_onto(f, t, n_out)
}

/// `f(2^t x)` sampled on a grid with `n_out` points per axis.
pub fn dilate_dyadic_onto(f: &Field, t: u32, n_out: usize) -> Result<Field> {
    if t == 0 && n_out == f.grid.n() {
        return Ok(f.clone());
    }
    let s = dilated_spectrum(&dft_forward(f), t, n_out)?;
    Ok(dft_inverse(&s))
}
