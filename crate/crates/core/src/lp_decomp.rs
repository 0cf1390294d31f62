//! Dyadic partitions of unity and separable expansions of annulus-localized
//! symbols.
//!
//! Radii are in lattice units: the frequency `ξ ∈ Z^d` has radius `|ξ|`.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use faer::Mat;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{dft_forward, dft_inverse, Field, GridSpec};
use crate::snapshot::{read_block, write_block, Block};
use crate::symbols::{check_poly_homogeneity, SymbolSpec};

/// Smooth transition `e(t) / (e(t) + e(1-t))` with `e(t) = exp(-1/t)`;
/// exactly 0 for `t <= 0` and exactly 1 for `t >= 1`.
pub fn smooth_step(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        let a = (-1.0 / t).exp();
        let b = (-1.0 / (1.0 - t)).exp();
        a / (a + b)
    }
}

/// Radial plateau: 1 on `[0, 1]`, 0 on `[2, ∞)`.
pub fn plateau(r: f64) -> f64 {
    smooth_step(2.0 - r)
}

/// `ψ(r) = χ(r) - χ(2r)`, supported in `[1/2, 2]`.
pub fn bump(r: f64) -> f64 {
    plateau(r) - plateau(2.0 * r)
}

/// `φ(r) = χ(r/2) - χ(4r)`: 1 on `[1/2, 2]`, supported in `[1/4, 4]`.
pub fn cutoff(r: f64) -> f64 {
    plateau(r / 2.0) - plateau(4.0 * r)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DyadicPartition {
    pub j_min: i32,
    pub j_max: i32,
}

impl DyadicPartition {
    pub fn new(j_min: i32, j_max: i32) -> Result<Self> {
        if j_min > j_max {
            return Err(Error::InvalidArgument(format!(
                "empty scale range {j_min}..={j_max}"
            )));
        }
        Ok(Self { j_min, j_max })
    }

    pub fn scales(&self) -> impl Iterator<Item = i32> {
        self.j_min..=self.j_max
    }

    /// `ψ(2^{-j} r)`.
    pub fn psi(&self, j: i32, r: f64) -> f64 {
        bump(r * 2f64.powi(-j))
    }

    /// `Σ_{j_min <= j <= j_max} ψ(2^{-j} r)`.
    pub fn partial_sum(&self, r: f64) -> f64 {
        self.scales().map(|j| self.psi(j, r)).sum()
    }

    /// The partial sum is exactly 1 on `[2^{j_min}, 2^{j_max}]`.
    pub fn covers(&self, r: f64) -> bool {
        r >= 2f64.powi(self.j_min) && r <= 2f64.powi(self.j_max)
    }

    /// Smallest partition covering the radii `r_lo..=r_hi` (both positive).
    pub fn covering(r_lo: f64, r_hi: f64) -> Result<Self> {
        if !(r_lo > 0.0 && r_hi >= r_lo) {
            return Err(Error::InvalidArgument("covering range must be positive".into()));
        }
        Self::new(r_lo.log2().floor() as i32, r_hi.log2().ceil() as i32)
    }
}

fn lattice_radius(freq: &[i64]) -> f64 {
    (freq.iter().map(|&k| (k * k) as f64).sum::<f64>()).sqrt()
}

/// Multiplies the spectrum of `f` by `ψ(2^{-j} |ξ|)`.
pub fn localize(f: &Field, partition: &DyadicPartition, j: i32) -> Result<Field> {
    if j < partition.j_min || j > partition.j_max {
        return Err(Error::InvalidArgument(format!(
            "scale {j} outside {}..={}",
            partition.j_min, partition.j_max
        )));
    }
    let s = dft_forward(f).map_modes(|xi| Complex64::new(partition.psi(j, lattice_radius(xi)), 0.0));
    Ok(dft_inverse(&s))
}

/// Index of the first slot whose active spectrum leaves the covered range.
pub(crate) fn first_uncovered(fs: &[&Field], partition: &DyadicPartition) -> Option<usize> {
    fs.iter().position(|f| {
        dft_forward(f)
            .active_modes()
            .iter()
            .any(|m| !partition.covers(lattice_radius(&m.freq)))
    })
}

/// Points of the polar (or spherical) annulus discretization.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnulusResolution {
    /// Log-uniform radii in `[1/4, 4]`.
    pub radial: usize,
    /// Angles per full turn; `d = 3` uses `angular/2` polar midpoints times
    /// `angular` azimuths, `d = 1` ignores it.
    pub angular: usize,
}

impl Default for AnnulusResolution {
    fn default() -> Self {
        Self {
            radial: 32,
            angular: 64,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
struct AngularGrid {
    d: usize,
    angular: usize,
    /// Flat unit vectors, `count × d`.
    directions: Vec<f64>,
    weights: Vec<f64>,
}

impl AngularGrid {
    fn new(d: usize, angular: usize) -> Result<Self> {
        match d {
            1 => Ok(Self {
                d,
                angular: 2,
                directions: vec![1.0, -1.0],
                weights: vec![1.0, 1.0],
            }),
            2 => {
                if angular < 4 || !angular.is_power_of_two() {
                    return Err(Error::InvalidArgument(
                        "angular resolution must be a power of two >= 4".into(),
                    ));
                }
                let h = 2.0 * PI / angular as f64;
                let directions = (0..angular)
                    .flat_map(|k| {
                        let t = h * k as f64;
                        [t.cos(), t.sin()]
                    })
                    .collect();
                Ok(Self {
                    d,
                    angular,
                    directions,
                    weights: vec![h; angular],
                })
            }
            3 => {
                if angular < 4 || angular % 2 != 0 {
                    return Err(Error::InvalidArgument(
                        "angular resolution must be even and >= 4".into(),
                    ));
                }
                let n_theta = angular / 2;
                let (ht, hp) = (PI / n_theta as f64, 2.0 * PI / angular as f64);
                let mut directions = Vec::with_capacity(3 * n_theta * angular);
                let mut weights = Vec::with_capacity(n_theta * angular);
                for i in 0..n_theta {
                    let theta = ht * (i as f64 + 0.5);
                    for k in 0..angular {
                        let ph = hp * k as f64;
                        directions.extend([theta.sin() * ph.cos(), theta.sin() * ph.sin(), theta.cos()]);
                        weights.push(theta.sin() * ht * hp);
                    }
                }
                Ok(Self {
                    d,
                    angular,
                    directions,
                    weights,
                })
            }
            _ => Err(Error::InvalidArgument(format!(
                "separable expansions support d <= 3, got {d}"
            ))),
        }
    }

    fn len(&self) -> usize {
        self.weights.len()
    }

    fn direction(&self, a: usize) -> &[f64] {
        &self.directions[a * self.d..(a + 1) * self.d]
    }
}

/// Angular table of one slot, prepared for off-grid evaluation.
#[derive(Clone, Debug, PartialEq)]
struct AngularFactor {
    values: Vec<f64>,
    /// Trigonometric interpolation coefficients (d = 2 only).
    trig: Vec<(i64, Complex64)>,
}

impl AngularFactor {
    fn new(values: Vec<f64>, grid: &AngularGrid) -> Self {
        let trig = if grid.d == 2 {
            let g = GridSpec::periodic(1, grid.angular).expect("validated angular grid");
            let s = dft_forward(&Field::new(g, values.iter().map(|&v| Complex64::new(v, 0.0)).collect()).unwrap());
            (0..grid.angular)
                .map(|i| (g.freq(i), s.coeffs()[i]))
                .filter(|(_, c)| c.norm() > 0.0)
                .collect()
        } else {
            Vec::new()
        };
        Self { values, trig }
    }

    /// Value at the unit direction `omega`.
    fn eval(&self, grid: &AngularGrid, omega: &[f64]) -> f64 {
        match grid.d {
            1 => {
                if omega[0] >= 0.0 {
                    self.values[0]
                } else {
                    self.values[1]
                }
            }
            2 => {
                let theta = omega[1].atan2(omega[0]);
                let half = grid.angular as i64 / 2;
                self.trig
                    .iter()
                    .map(|&(k, c)| {
                        if k == -half {
                            c.re * (k as f64 * theta).cos()
                        } else {
                            (c * Complex64::from_polar(1.0, k as f64 * theta)).re
                        }
                    })
                    .sum()
            }
            _ => {
                let n_theta = grid.angular / 2;
                let n_phi = grid.angular;
                let theta = omega[2].clamp(-1.0, 1.0).acos();
                let phi = omega[1].atan2(omega[0]).rem_euclid(2.0 * PI);
                let ti = (theta / (PI / n_theta as f64) - 0.5).clamp(0.0, (n_theta - 1) as f64);
                let pk = phi / (2.0 * PI / n_phi as f64);
                let (i0, ft) = (ti.floor() as usize, ti.fract());
                let i1 = (i0 + 1).min(n_theta - 1);
                let k0 = pk.floor() as usize % n_phi;
                let fp = pk.fract();
                let k1 = (k0 + 1) % n_phi;
                let v = |i: usize, k: usize| self.values[i * n_phi + k];
                (1.0 - ft) * ((1.0 - fp) * v(i0, k0) + fp * v(i0, k1))
                    + ft * ((1.0 - fp) * v(i1, k0) + fp * v(i1, k1))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SeparableTerm {
    pub coefficient: f64,
    slots: Vec<AngularFactor>,
}

/// Truncated separable expansion
/// `φ(ξ_1)⋯φ(ξ_m) σ(ξ_1, …, ξ_m) ≈ Σ_l c_l F_{l,1}(ξ_1) ⋯ F_{l,m}(ξ_m)`
/// with `F_{l,j}(ξ) = φ(|ξ|) A_{l,j}(ξ/|ξ|) / ‖φ‖`.
#[derive(Clone, Debug, PartialEq)]
pub struct SeparableExpansion {
    m: usize,
    d: usize,
    symbol: String,
    resolution: AnnulusResolution,
    radii: Vec<f64>,
    radial_weights: Vec<f64>,
    /// Discrete `‖φ‖` over the radial grid.
    radial_norm: f64,
    angular: AngularGrid,
    terms: Vec<SeparableTerm>,
    spectrum: Vec<f64>,
    residual: f64,
}

fn radial_grid(points: usize, d: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if points < 2 {
        return Err(Error::InvalidArgument("at least two radial points".into()));
    }
    let (lo, hi) = ((0.25f64).ln(), (4.0f64).ln());
    let h = (hi - lo) / (points - 1) as f64;
    let radii: Vec<f64> = (0..points).map(|i| (lo + h * i as f64).exp()).collect();
    let weights = radii
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let trap = if i == 0 || i == points - 1 { 0.5 } else { 1.0 };
            trap * h * r.powi(d as i32)
        })
        .collect();
    Ok((radii, weights))
}

/// Unfactored discretization of `φ(ξ_1) φ(ξ_2) σ(ξ_1, ξ_2)` on the product
/// annulus grid with square-root quadrature weights; rows and columns are
/// indexed by `(radius, direction)` with the radius slowest.
pub fn dense_kernel(sigma: &SymbolSpec, resolution: AnnulusResolution) -> Result<Mat<f64>> {
    if sigma.m() != 2 {
        return Err(Error::InvalidArgument("dense kernel needs arity 2".into()));
    }
    let d = sigma.d();
    let (radii, rw) = radial_grid(resolution.radial, d)?;
    let ang = AngularGrid::new(d, resolution.angular)?;
    let na = ang.len();
    let size = radii.len() * na;
    let point = |i: usize| -> (Vec<f64>, f64) {
        let (ri, a) = (i / na, i % na);
        let x = ang.direction(a).iter().map(|c| c * radii[ri]).collect();
        (x, (rw[ri] * ang.weights[a]).sqrt() * cutoff(radii[ri]))
    };
    let pts: Vec<(Vec<f64>, f64)> = (0..size).map(point).collect();
    let mut xi = vec![0.0; 2 * d];
    Ok(Mat::from_fn(size, size, |r, c| {
        xi[..d].copy_from_slice(&pts[r].0);
        xi[d..].copy_from_slice(&pts[c].0);
        pts[r].1 * pts[c].1 * sigma.eval(&xi).re
    }))
}

/// Number of alternating refinement sweeps per rank-one term when `m > 2`.
pub const ALS_ITERATIONS: usize = 200;

/// Builds the separable expansion of a poly-homogeneous symbol.
///
/// Degree-0 homogeneity makes the discretized kernel the tensor product of
/// the radial cutoff profile with an angular kernel, so the factorization is
/// computed on the angular part: an SVD for `m = 2`, greedy rank-one
/// deflation with [`ALS_ITERATIONS`] refinement sweeps otherwise. `rank` is
/// clamped to the number of angular points.
pub fn separable_expand(
    sigma: &SymbolSpec,
    resolution: AnnulusResolution,
    rank: usize,
    seed: u64,
) -> Result<SeparableExpansion> {
    if rank == 0 {
        return Err(Error::InvalidArgument("rank must be at least 1".into()));
    }
    if !sigma.flags().poly_homogeneous || !check_poly_homogeneity(sigma, 64, seed)?.passed {
        return Err(Error::NotPolyHomogeneous(sigma.id().to_string()));
    }
    let (m, d) = (sigma.m(), sigma.d());
    let (radii, radial_weights) = radial_grid(resolution.radial, d)?;
    let radial_norm = radii
        .iter()
        .zip(&radial_weights)
        .map(|(r, w)| w * cutoff(*r).powi(2))
        .sum::<f64>()
        .sqrt();
    let angular = AngularGrid::new(d, resolution.angular)?;
    let na = angular.len();
    let total = na
        .checked_pow(m as u32)
        .filter(|&t| t <= 1 << 24)
        .ok_or_else(|| Error::InvalidArgument(format!("{na}^{m} angular tensor too large")))?;
    let sw: Vec<f64> = angular.weights.iter().map(|w| w.sqrt()).collect();

    let mut tensor = vec![0.0; total];
    let mut xi = vec![0.0; m * d];
    let mut idx = vec![0usize; m];
    for (flat, t) in tensor.iter_mut().enumerate() {
        unflatten(flat, na, &mut idx);
        let mut w = 1.0;
        for (j, &a) in idx.iter().enumerate() {
            xi[j * d..(j + 1) * d].copy_from_slice(angular.direction(a));
            w *= sw[a];
        }
        let v = sigma.eval(&xi);
        if v.im.abs() > 1e-12 * v.re.abs().max(1.0) {
            return Err(Error::InvalidArgument(format!(
                "symbol `{}` is not real-valued",
                sigma.id()
            )));
        }
        *t = w * v.re;
    }

    let scale = radial_norm.powi(m as i32);
    let unweight = |v: Vec<f64>| -> Vec<f64> { v.iter().zip(&sw).map(|(x, s)| x / s).collect() };
    let rank = rank.min(na);
    let (terms, spectrum, residual) = if m == 2 {
        let a = Mat::from_fn(na, na, |r, c| tensor[r * na + c]);
        let svd = a
            .svd()
            .map_err(|e| Error::InvalidArgument(format!("SVD failed: {e:?}")))?;
        let (u, v, sv) = (svd.U(), svd.V(), svd.S().column_vector());
        let mut order: Vec<usize> = (0..na).collect();
        order.sort_by(|&x, &y| sv[y].total_cmp(&sv[x]));
        let s: Vec<f64> = order.iter().map(|&i| sv[i]).collect();
        let total_energy: f64 = s.iter().map(|v| v * v).sum();
        let tail: f64 = s[rank..].iter().map(|v| v * v).sum();
        let terms = order[..rank]
            .iter()
            .map(|&i| SeparableTerm {
                coefficient: scale * sv[i],
                slots: vec![
                    AngularFactor::new(unweight((0..na).map(|r| u[(r, i)]).collect()), &angular),
                    AngularFactor::new(unweight((0..na).map(|r| v[(r, i)]).collect()), &angular),
                ],
            })
            .collect();
        let residual = if total_energy > 0.0 { (tail / total_energy).sqrt() } else { 0.0 };
        (terms, s.iter().map(|v| v * scale).collect(), residual)
    } else {
        let initial = norm(&tensor);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut found: Vec<(f64, Vec<Vec<f64>>)> = Vec::new();
        for _ in 0..rank {
            if norm(&tensor) <= 1e-15 * initial {
                break;
            }
            let (lambda, vecs) = rank_one(&tensor, na, m, &mut rng);
            deflate(&mut tensor, na, lambda, &vecs);
            found.push((lambda, vecs));
        }
        found.sort_by(|a, b| b.0.abs().total_cmp(&a.0.abs()));
        let spectrum = found.iter().map(|(l, _)| l.abs() * scale).collect();
        let terms = found
            .into_iter()
            .map(|(lambda, vecs)| SeparableTerm {
                coefficient: lambda * scale,
                slots: vecs
                    .into_iter()
                    .map(|v| AngularFactor::new(unweight(v), &angular))
                    .collect(),
            })
            .collect();
        let residual = if initial > 0.0 { norm(&tensor) / initial } else { 0.0 };
        (terms, spectrum, residual)
    };

    Ok(SeparableExpansion {
        m,
        d,
        symbol: sigma.id().to_string(),
        resolution,
        radii,
        radial_weights,
        radial_norm,
        angular,
        terms,
        spectrum,
        residual,
    })
}

fn unflatten(mut flat: usize, n: usize, idx: &mut [usize]) {
    for slot in (0..idx.len()).rev() {
        idx[slot] = flat % n;
        flat /= n;
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Contraction of `tensor` with every vector except slot `skip`.
fn contract(tensor: &[f64], n: usize, vecs: &[Vec<f64>], skip: usize) -> Vec<f64> {
    let m = vecs.len();
    let mut out = vec![0.0; n];
    let mut idx = vec![0usize; m];
    for (flat, &t) in tensor.iter().enumerate() {
        unflatten(flat, n, &mut idx);
        let mut w = t;
        for (k, v) in vecs.iter().enumerate() {
            if k != skip {
                w *= v[idx[k]];
            }
        }
        out[idx[skip]] += w;
    }
    out
}

fn rank_one(tensor: &[f64], n: usize, m: usize, rng: &mut ChaCha8Rng) -> (f64, Vec<Vec<f64>>) {
    let mut vecs: Vec<Vec<f64>> = (0..m)
        .map(|_| {
            let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let s = norm(&v);
            v.into_iter().map(|x| x / s).collect()
        })
        .collect();
    let mut lambda = 0.0;
    for _ in 0..ALS_ITERATIONS {
        let mut y = Vec::new();
        for j in 0..m {
            y = contract(tensor, n, &vecs, j);
            let s = norm(&y);
            if s == 0.0 {
                return (0.0, vecs);
            }
            vecs[j] = y.iter().map(|x| x / s).collect();
        }
        let new_lambda: f64 = y.iter().zip(&vecs[m - 1]).map(|(a, b)| a * b).sum();
        let done = (new_lambda - lambda).abs() <= 1e-15 * new_lambda.abs();
        lambda = new_lambda;
        if done {
            break;
        }
    }
    (lambda, vecs)
}

fn deflate(tensor: &mut [f64], n: usize, lambda: f64, vecs: &[Vec<f64>]) {
    let mut idx = vec![0usize; vecs.len()];
    for (flat, t) in tensor.iter_mut().enumerate() {
        unflatten(flat, n, &mut idx);
        let p: f64 = vecs.iter().zip(&idx).map(|(v, &i)| v[i]).product();
        *t -= lambda * p;
    }
}

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    m: usize,
    d: usize,
    symbol: String,
    radial_points: usize,
    angular_points: usize,
    directions: usize,
    rank: usize,
    residual: f64,
    spectrum: Vec<f64>,
    coefficients: Vec<f64>,
}

const FORMAT_TAG: &str = "mlab-separable-expansion/1";

impl SeparableExpansion {
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn symbol_id(&self) -> &str {
        &self.symbol
    }

    pub fn rank(&self) -> usize {
        self.terms.len()
    }

    pub fn resolution(&self) -> AnnulusResolution {
        self.resolution
    }

    /// Relative Frobenius error of the truncation.
    pub fn residual(&self) -> f64 {
        self.residual
    }

    /// Singular values (or greedy term magnitudes), nonincreasing.
    pub fn spectrum(&self) -> &[f64] {
        &self.spectrum
    }

    pub fn terms(&self) -> &[SeparableTerm] {
        &self.terms
    }

    pub fn coefficients(&self) -> Vec<f64> {
        self.terms.iter().map(|t| t.coefficient).collect()
    }

    /// Discrete norm of the radial cutoff over the radial grid.
    pub fn radial_norm(&self) -> f64 {
        self.radial_norm
    }

    /// Tail ratio `sqrt(Σ_{l > rank} s_l²) / sqrt(Σ s_l²)` of the recorded
    /// spectrum.
    pub fn residual_at(&self, rank: usize) -> f64 {
        let total: f64 = self.spectrum.iter().map(|s| s * s).sum();
        if total == 0.0 {
            return 0.0;
        }
        let tail: f64 = self.spectrum.iter().skip(rank).map(|s| s * s).sum();
        (tail / total).sqrt()
    }

    /// Factor table of term `l`, slot `j` on the annulus grid,
    /// `radial × directions` with the radius slowest.
    pub fn factor_table(&self, l: usize, j: usize) -> Vec<f64> {
        let ang = &self.terms[l].slots[j].values;
        self.radii
            .iter()
            .flat_map(|&r| {
                let rad = cutoff(r) / self.radial_norm;
                ang.iter().map(move |a| rad * a)
            })
            .collect()
    }

    /// `F_{l,j}(ξ)` at a real frequency vector in lattice units.
    pub fn factor(&self, l: usize, j: usize, xi: &[f64]) -> f64 {
        let r = xi.iter().map(|c| c * c).sum::<f64>().sqrt();
        let rad = cutoff(r);
        if rad == 0.0 {
            return 0.0;
        }
        let omega: Vec<f64> = xi.iter().map(|c| c / r).collect();
        rad / self.radial_norm * self.terms[l].slots[j].eval(&self.angular, &omega)
    }

    /// Evaluates the truncated expansion `Σ_l c_l ∏_j F_{l,j}(ξ_j)`.
    pub fn eval(&self, xi: &[f64]) -> f64 {
        let d = self.d;
        (0..self.terms.len())
            .map(|l| {
                self.terms[l].coefficient
                    * (0..self.m)
                        .map(|j| self.factor(l, j, &xi[j * d..(j + 1) * d]))
                        .product::<f64>()
            })
            .sum()
    }

    /// JSON header (prefixed by its little-endian `u64` byte length), then
    /// one `MLABFLD1` block per term and slot holding the factor table.
    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        let header = Header {
            format: FORMAT_TAG.into(),
            m: self.m,
            d: self.d,
            symbol: self.symbol.clone(),
            radial_points: self.resolution.radial,
            angular_points: self.resolution.angular,
            directions: self.angular.len(),
            rank: self.terms.len(),
            residual: self.residual,
            spectrum: self.spectrum.clone(),
            coefficients: self.coefficients(),
        };
        let json = serde_json::to_vec(&header)?;
        w.write_all(&(json.len() as u64).to_le_bytes())?;
        w.write_all(&json)?;
        for l in 0..self.terms.len() {
            for j in 0..self.m {
                let table = self.factor_table(l, j);
                write_block(
                    w,
                    &Block {
                        d: 1,
                        n: table.len() as u32,
                        period: 1.0,
                        data: table.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
                    },
                )?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut len = [0u8; 8];
        r.read_exact(&mut len)?;
        let len = u64::from_le_bytes(len);
        if len > 1 << 30 {
            return Err(Error::Snapshot("implausible header length".into()));
        }
        let mut json = vec![0u8; len as usize];
        r.read_exact(&mut json)?;
        let h: Header = serde_json::from_slice(&json)?;
        if h.format != FORMAT_TAG || h.coefficients.len() != h.rank {
            return Err(Error::Snapshot("unrecognized expansion header".into()));
        }
        let resolution = AnnulusResolution {
            radial: h.radial_points,
            angular: h.angular_points,
        };
        let (radii, radial_weights) = radial_grid(resolution.radial, h.d)?;
        let radial_norm = radii
            .iter()
            .zip(&radial_weights)
            .map(|(r, w)| w * cutoff(*r).powi(2))
            .sum::<f64>()
            .sqrt();
        let angular = AngularGrid::new(h.d, resolution.angular)?;
        let na = angular.len();
        if na != h.directions {
            return Err(Error::Snapshot("direction count mismatch".into()));
        }
        // a radius where the cutoff is exactly 1 recovers the angular table
        let plateau_row = radii
            .iter()
            .position(|&r| cutoff(r) == 1.0)
            .ok_or_else(|| Error::Snapshot("radial grid misses the plateau".into()))?;
        let mut terms = Vec::with_capacity(h.rank);
        for &coefficient in &h.coefficients {
            let mut slots = Vec::with_capacity(h.m);
            for _ in 0..h.m {
                let b = read_block(r)?;
                if b.d != 1 || b.data.len() != radii.len() * na {
                    return Err(Error::Snapshot("factor table has the wrong shape".into()));
                }
                let values = b.data[plateau_row * na..(plateau_row + 1) * na]
                    .iter()
                    .map(|z| z.re * radial_norm)
                    .collect();
                slots.push(AngularFactor::new(values, &angular));
            }
            terms.push(SeparableTerm { coefficient, slots });
        }
        Ok(Self {
            m: h.m,
            d: h.d,
            symbol: h.symbol,
            resolution,
            radii,
            radial_weights,
            radial_norm,
            angular,
            terms,
            spectrum: h.spectrum,
            residual: h.residual,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(&mut BufReader::new(File::open(path)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Spectrum;
    use crate::symbols::{constant, parse_symbol, power_symbol, det_symbol, product_symbol, riesz};

    #[test]
    fn profiles_have_exact_supports() {
        for i in 0..=4000 {
            let r = i as f64 * 0.002;
            if !(0.5..=2.0).contains(&r) {
                assert_eq!(bump(r), 0.0, "psi({r})");
            }
            if !(0.25..=4.0).contains(&r) {
                assert_eq!(cutoff(r), 0.0, "phi({r})");
            }
            if (0.5..=2.0).contains(&r) {
                assert_eq!(cutoff(r), 1.0, "phi({r})");
            }
            assert!(bump(r) >= 0.0);
        }
    }

    #[test]
    fn partition_sums() {
        let p = DyadicPartition::new(-1, 3).unwrap();
        assert!((p.partial_sum(1.0) - 1.0).abs() <= 1e-12);
        assert_eq!(p.partial_sum(2f64.powi(-1) / 4.0), 0.0);
        assert!(DyadicPartition::new(2, 1).is_err());
        let q = DyadicPartition::covering(1.0, 11.4).unwrap();
        assert_eq!((q.j_min, q.j_max), (0, 4));
    }

    #[test]
    fn localize_examples() {
        let g = GridSpec::periodic(2, 32).unwrap();
        let p = DyadicPartition::new(0, 4).unwrap();
        let f = Field::from_fn(g, |x| Complex64::from_polar(1.0, 4.0 * x[0]));
        assert!(localize(&f, &p, 2).unwrap().rel_l2_error(&f).unwrap() < 1e-14);
        let one = Field::from_fn(g, |x| Complex64::from_polar(1.0, x[1]));
        assert!(localize(&one, &p, 3).unwrap().max_abs() < 1e-15);
        assert!(localize(&f, &p, 5).is_err());
    }

    #[test]
    fn localized_pieces_rebuild_mean_free_field() {
        let g = GridSpec::periodic(2, 32).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut s = Spectrum::zeros(g);
        s.coeffs_mut()
            .iter_mut()
            .for_each(|c| *c = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        s.set(&[0, 0], Complex64::new(0.0, 0.0)).unwrap();
        let f = dft_inverse(&s);
        let p = DyadicPartition::new(0, 5).unwrap();
        let mut sum = Field::zeros(g);
        for j in p.scales() {
            sum = sum.add(&localize(&f, &p, j).unwrap()).unwrap();
        }
        assert!(sum.rel_l2_error(&f).unwrap() <= 1e-10);
    }

    #[test]
    fn constant_symbol_has_single_coefficient() {
        let e = separable_expand(&constant(2, 2, 1.0), AnnulusResolution::default(), 8, 1).unwrap();
        let s = e.spectrum();
        assert!(s[1] <= 1e-12 * s[0]);
        // ‖φ‖² over the full annulus grid: radial norm² times the angular measure 2π
        let phi_sq = e.radial_norm().powi(2) * 2.0 * PI;
        assert!((s[0] - phi_sq).abs() <= 1e-12 * phi_sq, "{} vs {phi_sq}", s[0]);
        assert!(e.residual_at(1) < 1e-12);
    }

    #[test]
    fn product_symbols_expand_at_rank_one() {
        for d in [1usize, 2, 3] {
            let a = product_symbol(&[riesz(d, 1).unwrap(), riesz(d, d).unwrap()]).unwrap();
            let res = AnnulusResolution { radial: 16, angular: if d == 3 { 16 } else { 32 } };
            let e = separable_expand(&a, res, 1, 3).unwrap();
            assert!(e.residual() <= 1e-10, "d={d}: {}", e.residual());
        }
        let three = parse_symbol("riesz_product:1,2,1", 2, 0).unwrap();
        let e = separable_expand(&three, AnnulusResolution { radial: 8, angular: 16 }, 1, 3).unwrap();
        assert!(e.residual() <= 1e-10, "{}", e.residual());
    }

    #[test]
    fn spectrum_matches_dense_kernel_svd() {
        let res = AnnulusResolution { radial: 8, angular: 16 };
        for id in ["det_norm:2", "det_norm:1", "dot_norm:2"] {
            let sigma = parse_symbol(id, 2, 0).unwrap();
            let e = separable_expand(&sigma, res, 16, 1).unwrap();
            let k = dense_kernel(&sigma, res).unwrap();
            let mut sv: Vec<f64> = k.singular_values().unwrap();
            sv.sort_by(|a, b| b.total_cmp(a));
            for (a, b) in e.spectrum().iter().zip(&sv) {
                assert!((a - b).abs() <= 1e-10 * sv[0], "{id}: {a} vs {b}");
            }
            assert!(sv[16..].iter().all(|&v| v <= 1e-10 * sv[0]));
        }
    }

    #[test]
    fn rejects_inhomogeneous_symbols() {
        let sq = power_symbol(&det_symbol(2).unwrap(), 2);
        assert!(matches!(
            separable_expand(&sq, AnnulusResolution::default(), 4, 1),
            Err(Error::NotPolyHomogeneous(_))
        ));
    }

    #[test]
    fn residual_nonincreasing_in_rank() {
        let sigma = parse_symbol("det_norm:1", 2, 0).unwrap();
        let e = separable_expand(&sigma, AnnulusResolution::default(), 64, 1).unwrap();
        let mut last = f64::INFINITY;
        for r in 1..=64 {
            let v = e.residual_at(r);
            assert!(v <= last);
            last = v;
        }
        assert!(e.spectrum().windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn expansion_evaluates_off_grid() {
        let sigma = parse_symbol("det_norm:2", 2, 0).unwrap();
        let e = separable_expand(&sigma, AnnulusResolution::default(), 32, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let xi: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.5..1.5)).collect();
            let r1 = (xi[0] * xi[0] + xi[1] * xi[1]).sqrt();
            let r2 = (xi[2] * xi[2] + xi[3] * xi[3]).sqrt();
            let expect = cutoff(r1) * cutoff(r2) * sigma.eval(&xi).re;
            assert!((e.eval(&xi) - expect).abs() < 1e-12, "{xi:?} {} {expect}", e.eval(&xi));
        }
    }

    #[test]
    fn three_dimensional_angular_interpolation_is_close() {
        let sigma = parse_symbol("dot_norm:2", 3, 0).unwrap();
        let e = separable_expand(&sigma, AnnulusResolution { radial: 8, angular: 32 }, 64, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let xi: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let r1 = xi[..3].iter().map(|c| c * c).sum::<f64>().sqrt();
            let r2 = xi[3..].iter().map(|c| c * c).sum::<f64>().sqrt();
            if !(0.5..=2.0).contains(&r1) || !(0.5..=2.0).contains(&r2) {
                continue;
            }
            assert!((e.eval(&xi) - sigma.eval(&xi).re).abs() < 0.05);
        }
    }

    #[test]
    fn save_and_load_round_trip() {
        let sigma = parse_symbol("det_norm:2", 2, 0).unwrap();
        let e = separable_expand(&sigma, AnnulusResolution { radial: 16, angular: 32 }, 5, 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("exp.bin");
        e.save(&path).unwrap();
        let back = SeparableExpansion::load(&path).unwrap();
        assert_eq!(back.rank(), 5);
        assert_eq!(back.spectrum(), e.spectrum());
        for l in 0..5 {
            for j in 0..2 {
                let (a, b) = (e.factor_table(l, j), back.factor_table(l, j));
                assert!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() < 1e-14));
            }
        }
        let xi = [0.3, 0.9, -1.2, 0.4];
        assert!((e.eval(&xi) - back.eval(&xi)).abs() < 1e-13);
    }
}
