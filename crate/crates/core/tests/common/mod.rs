#![allow(dead_code)]

use mlab_core::grid::{dft_inverse, Field, GridSpec, Spectrum};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Trigonometric polynomial with random coefficients on `|ξ|_∞ <= degree`.
pub fn trig_field(grid: GridSpec, degree: i64, seed: u64) -> Field {
    trig_field_where(grid, seed, |xi| xi.iter().all(|k| k.abs() <= degree))
}

/// Random coefficients on the lattice points accepted by `keep`.
pub fn trig_field_where(grid: GridSpec, seed: u64, keep: impl Fn(&[i64]) -> bool) -> Field {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut spec = Spectrum::zeros(grid);
    let mut xi = vec![0i64; grid.d()];
    for flat in 0..grid.len() {
        grid.frequency_of(flat, &mut xi);
        let c = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        if keep(&xi) {
            spec.coeffs_mut()[flat] = c;
        }
    }
    dft_inverse(&spec)
}

/// Samples drawn uniformly from the unit square, no band limit.
pub fn noise_field(grid: GridSpec, seed: u64) -> Field {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = (0..grid.len())
        .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect();
    Field::new(grid, samples).unwrap()
}

/// Relative difference of two complex numbers.
pub fn rel(a: Complex64, b: Complex64) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}
