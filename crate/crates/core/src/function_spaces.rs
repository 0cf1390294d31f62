//! Discrete Lebesgue, Bessel-potential and Sobolev norms on the torus.
//!
//! Frequencies enter in physical units `κ ξ`, `κ = 2π / period`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{dft_forward, dft_inverse, spectral_partial, Field};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormParams {
    pub p: f64,
    pub s: f64,
}

impl NormParams {
    pub fn new(p: f64, s: f64) -> Result<Self> {
        if !(p >= 1.0) {
            return Err(Error::InvalidArgument(format!("p must be >= 1, got {p}")));
        }
        if !(s >= 0.0 && s.is_finite()) {
            return Err(Error::InvalidArgument(format!("s must be >= 0, got {s}")));
        }
        Ok(Self { p, s })
    }
}

/// Hölder conjugate `r / (r - 1)`; `∞` for `r = 1`, `1` for `r = ∞`.
pub fn conjugate_exponent(r: f64) -> f64 {
    if r == 1.0 {
        f64::INFINITY
    } else if r.is_infinite() {
        1.0
    } else {
        r / (r - 1.0)
    }
}

/// `((period/n)^d Σ |f|^p)^{1/p}`, or `max |f|` for `p = ∞`.
pub fn lp_norm(f: &Field, p: f64) -> Result<f64> {
    if p.is_infinite() && p > 0.0 {
        return Ok(f.max_abs());
    }
    if !(p >= 1.0) {
        return Err(Error::InvalidArgument(format!("p must be >= 1, got {p}")));
    }
    let scale = f.max_abs();
    if scale == 0.0 {
        return Ok(0.0);
    }
    // factor out the maximum so large p cannot overflow
    let sum: f64 = f.samples().iter().map(|z| (z.norm() / scale).powf(p)).sum();
    Ok(scale * (sum * f.grid().cell_volume()).powf(1.0 / p))
}

/// Multiplies the spectrum by `(1 + |κξ|²)^{s/2}`.
pub fn bessel_potential(f: &Field, s: f64) -> Result<Field> {
    if !(s >= 0.0 && s.is_finite()) {
        return Err(Error::InvalidArgument(format!("s must be >= 0, got {s}")));
    }
    if s == 0.0 {
        return Ok(f.clone());
    }
    let kappa = f.grid().wavenumber();
    let spec = dft_forward(f).map_modes(|xi| {
        let r2: f64 = xi.iter().map(|&k| (kappa * k as f64).powi(2)).sum();
        Complex64::new((1.0 + r2).powf(s / 2.0), 0.0)
    });
    Ok(dft_inverse(&spec))
}

/// `‖(1 - Δ)^{s/2} f‖_{L^p}` for `p > 1`.
pub fn bessel_norm(f: &Field, p: f64, s: f64) -> Result<f64> {
    if !(p > 1.0) {
        return Err(Error::InvalidArgument(format!("p must be > 1, got {p}")));
    }
    lp_norm(&bessel_potential(f, s)?, p)
}

/// All multi-indices of length `d` with `|α| <= k`.
pub fn multi_indices_up_to(d: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(prefix: &mut Vec<usize>, d: usize, left: usize, out: &mut Vec<Vec<usize>>) {
        if prefix.len() == d {
            out.push(prefix.clone());
            return;
        }
        for a in 0..=left {
            prefix.push(a);
            rec(prefix, d, left - a, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), d, k, &mut out);
    out
}

/// `Σ_{|α| <= k} ‖∂^α f‖_{L^p}` over distinct multi-indices, derivatives spectral.
pub fn sobolev_wkp_norm(f: &Field, k: usize, p: f64) -> Result<f64> {
    multi_indices_up_to(f.grid().d(), k)
        .iter()
        .map(|alpha| lp_norm(&spectral_partial(f, alpha)?, p))
        .sum()
}

/// `max_x |∇φ(x)|` (order 1) or `max_x max_{i,j} |∂_i∂_j φ(x)|` (order 2).
pub fn grad_sup_norms(phi: &Field, order: usize) -> Result<f64> {
    let d = phi.grid().d();
    let unit = |axes: &[usize]| {
        let mut a = vec![0usize; d];
        axes.iter().for_each(|&i| a[i] += 1);
        a
    };
    match order {
        1 => {
            let mut sq = vec![0.0; phi.grid().len()];
            for i in 0..d {
                let g = spectral_partial(phi, &unit(&[i]))?;
                sq.iter_mut().zip(g.samples()).for_each(|(s, v)| *s += v.norm_sqr());
            }
            Ok(sq.into_iter().fold(0.0, f64::max).sqrt())
        }
        2 => {
            let mut best: f64 = 0.0;
            for i in 0..d {
                for j in i..d {
                    best = best.max(spectral_partial(phi, &unit(&[i, j]))?.max_abs());
                }
            }
            Ok(best)
        }
        _ => Err(Error::InvalidArgument(format!("order must be 1 or 2, got {order}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{dilate_dyadic, GridSpec};
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    #[test]
    fn lp_examples() {
        let g = GridSpec::periodic(1, 8).unwrap();
        let one = Field::from_real_fn(g, |_| 1.0);
        assert_abs_diff_eq!(lp_norm(&one, 2.0).unwrap(), (2.0 * PI).sqrt(), epsilon = 1e-14);
        assert_eq!(lp_norm(&one, f64::INFINITY).unwrap(), 1.0);
        assert!(lp_norm(&one, 0.5).is_err());
        let f = Field::from_real_fn(g, |x| x[0].cos() + 0.5 * (2.0 * x[0]).sin());
        let big = dilate_dyadic(&f, 3, true).unwrap();
        for p in [1.0, 2.0, 4.0, f64::INFINITY] {
            let (a, b) = (lp_norm(&f, p).unwrap(), lp_norm(&big, p).unwrap());
            assert!((a - b).abs() <= 1e-12 * a, "p={p}");
        }
    }

    #[test]
    fn bessel_examples() {
        let g = GridSpec::periodic(1, 16).unwrap();
        let f = Field::from_fn(g, |x| Complex64::from_polar(1.0, 3.0 * x[0]));
        assert_eq!(bessel_potential(&f, 0.0).unwrap(), f);
        let b = bessel_potential(&f, 1.5).unwrap();
        assert!(b.rel_l2_error(&f.scaled(Complex64::new(10f64.powf(0.75), 0.0))).unwrap() < 1e-13);
        assert!(bessel_potential(&f, -1.0).is_err());
        assert!(bessel_norm(&f, 1.0, 1.0).is_err());
    }

    #[test]
    fn sobolev_of_sine() {
        let g = GridSpec::periodic(1, 16).unwrap();
        let f = Field::from_real_fn(g, |x| x[0].sin());
        assert_abs_diff_eq!(sobolev_wkp_norm(&f, 1, 2.0).unwrap(), 2.0 * PI.sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(
            sobolev_wkp_norm(&f, 0, 3.0).unwrap(),
            lp_norm(&f, 3.0).unwrap(),
            epsilon = 1e-15
        );
        assert_eq!(multi_indices_up_to(2, 2).len(), 6);
    }

    #[test]
    fn sup_norm_examples() {
        let g = GridSpec::periodic(2, 16).unwrap();
        let one = Field::from_real_fn(g, |_| 1.0);
        assert!(grad_sup_norms(&one, 1).unwrap() < 1e-14);
        let s = Field::from_real_fn(g, |x| x[0].sin());
        assert_abs_diff_eq!(grad_sup_norms(&s, 1).unwrap(), 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(grad_sup_norms(&s, 2).unwrap(), 1.0, epsilon = 1e-10);
        assert!(grad_sup_norms(&s, 3).is_err());
    }
}
