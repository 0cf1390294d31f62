//! Jacobian and Hessian determinants: pointwise, through their Fourier
//! symbols, and as exact polynomial identities.

pub mod poly;

use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::One;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{resample, spectral_partial, Field, GridSpec};
use crate::multilinear::{apply_direct, pair_direct, OperatorSpec};
use crate::symbols::{det_symbol, power_symbol};
use poly::{det, minor, permutations, rational, PolyField};

fn check_common(us: &[&Field]) -> Result<GridSpec> {
    let g = *us
        .first()
        .ok_or_else(|| Error::InvalidArgument("no fields given".into()))?
        .grid();
    for u in &us[1..] {
        if !g.same_shape(u.grid()) {
            return Err(Error::GridMismatch(format!("{g:?} vs {:?}", u.grid())));
        }
    }
    Ok(g)
}

/// Determinant of a small complex matrix stored row-major.
pub fn complex_det(a: &[Complex64], n: usize) -> Complex64 {
    match n {
        1 => a[0],
        2 => a[0] * a[3] - a[1] * a[2],
        3 => {
            a[0] * (a[4] * a[8] - a[5] * a[7]) - a[1] * (a[3] * a[8] - a[5] * a[6])
                + a[2] * (a[3] * a[7] - a[4] * a[6])
        }
        _ => {
            let mut total = Complex64::new(0.0, 0.0);
            let mut sub = vec![Complex64::new(0.0, 0.0); (n - 1) * (n - 1)];
            for c in 0..n {
                let mut k = 0;
                for r in 1..n {
                    for cc in (0..n).filter(|&cc| cc != c) {
                        sub[k] = a[r * n + cc];
                        k += 1;
                    }
                }
                let s = if c % 2 == 0 { 1.0 } else { -1.0 };
                total += a[c] * complex_det(&sub, n - 1) * s;
            }
            total
        }
    }
}

fn padded_n(g: &GridSpec) -> usize {
    g.n() * g.d().next_power_of_two()
}

fn pointwise_det(entries: &[Field], d: usize, grid: GridSpec) -> Result<Field> {
    let mut out = Vec::with_capacity(grid.len());
    let mut m = vec![Complex64::new(0.0, 0.0); d * d];
    for p in 0..grid.len() {
        for (k, e) in entries.iter().enumerate() {
            m[k] = e.samples()[p];
        }
        out.push(complex_det(&m, d));
    }
    Field::new(grid, out)
}

/// `det(∂_i u_j)` on the grid padded by `d` (rounded up to a power of two).
/// Exact for trigonometric polynomials whose product fits that grid.
pub fn jacobian_det_pointwise(us: &[&Field]) -> Result<Field> {
    let g = check_common(us)?;
    let d = g.d();
    if us.len() != d {
        return Err(Error::InvalidArgument(format!("need {d} components, got {}", us.len())));
    }
    let fine = g.with_n(padded_n(&g))?;
    let mut entries = Vec::with_capacity(d * d);
    for i in 0..d {
        for u in us {
            let mut a = vec![0usize; d];
            a[i] = 1;
            entries.push(resample(&spectral_partial(u, &a)?, fine.n())?);
        }
    }
    pointwise_det(&entries, d, fine)
}

/// `det ∇²u` on the grid padded by `d`.
pub fn hessian_det_pointwise(u: &Field) -> Result<Field> {
    let g = *u.grid();
    let d = g.d();
    let fine = g.with_n(padded_n(&g))?;
    let mut entries = Vec::with_capacity(d * d);
    for i in 0..d {
        for j in 0..d {
            let mut a = vec![0usize; d];
            a[i] += 1;
            a[j] += 1;
            entries.push(resample(&spectral_partial(u, &a)?, fine.n())?);
        }
    }
    pointwise_det(&entries, d, fine)
}

/// Constant `c` with `det ∇u = c · T_det(u_1, …, u_d)`: `i^d`.
pub fn jacobian_constant(d: usize) -> Complex64 {
    Complex64::new(0.0, 1.0).powu(d as u32)
}

/// Constant `c'` with `det ∇²u = c' · T_{det²}(u, …, u)`: `(-1)^d / d!`.
pub fn hessian_constant(d: usize) -> Complex64 {
    let fact: f64 = (1..=d).map(|k| k as f64).product();
    let sign = if d % 2 == 0 { 1.0 } else { -1.0 };
    Complex64::new(sign / fact, 0.0)
}

/// `c · T_det(u_1, …, u_d)`, evaluated by the direct oracle.
pub fn jacobian_det_fourier(us: &[&Field]) -> Result<Field> {
    let g = check_common(us)?;
    let op = OperatorSpec::direct(det_symbol(g.d())?);
    Ok(apply_direct(&op, us)?.scaled(jacobian_constant(g.d())))
}

/// `c' · T_{det²}(u, …, u)`, evaluated by the direct oracle.
pub fn hessian_det_fourier(u: &Field) -> Result<Field> {
    let d = u.grid().d();
    let op = OperatorSpec::direct(power_symbol(&det_symbol(d)?, 2));
    let copies: Vec<&Field> = vec![u; d];
    Ok(apply_direct(&op, &copies)?.scaled(hessian_constant(d)))
}

/// `∫ det ∇u · φ` through the sparse Fourier pairing.
pub fn jacobian_pairing(us: &[&Field], phi: &Field) -> Result<Complex64> {
    let g = check_common(us)?;
    let op = OperatorSpec::direct(det_symbol(g.d())?);
    Ok(pair_direct(&op, us, phi)? * jacobian_constant(g.d()))
}

/// `∫ det ∇²u · φ` through the sparse Fourier pairing.
pub fn hessian_pairing(u: &Field, phi: &Field) -> Result<Complex64> {
    let d = u.grid().d();
    let op = OperatorSpec::direct(power_symbol(&det_symbol(d)?, 2));
    let copies: Vec<&Field> = vec![u; d];
    Ok(pair_direct(&op, &copies, phi)? * hessian_constant(d))
}

/// Ratio between the pointwise Jacobian determinant and `T_det` for the
/// single-mode map `u_j = e^{i x_j}`, which must equal [`jacobian_constant`].
pub fn calibrate_jacobian(d: usize) -> Result<Complex64> {
    let g = GridSpec::periodic(d, 8)?;
    let us: Vec<Field> = (0..d)
        .map(|j| Field::from_fn(g, move |x| Complex64::from_polar(1.0, x[j])))
        .collect();
    let refs: Vec<&Field> = us.iter().collect();
    let pointwise = jacobian_det_pointwise(&refs)?;
    let raw = apply_direct(&OperatorSpec::direct(det_symbol(d)?), &refs)?;
    Ok(pointwise.samples()[0] / raw.samples()[0])
}

/// Ratio between the pointwise Hessian determinant and `T_{det²}` for
/// `u = Σ_j e^{i x_j}`, which must equal [`hessian_constant`].
pub fn calibrate_hessian(d: usize) -> Result<Complex64> {
    let g = GridSpec::periodic(d, 8)?;
    let u = Field::from_fn(g, |x| x.iter().map(|&t| Complex64::from_polar(1.0, t)).sum());
    let pointwise = hessian_det_pointwise(&u)?;
    let copies: Vec<&Field> = vec![&u; d];
    let raw = apply_direct(
        &OperatorSpec::direct(power_symbol(&det_symbol(d)?, 2)),
        &copies,
    )?;
    Ok(pointwise.samples()[0] / raw.samples()[0])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetReport {
    pub identity: String,
    pub dimension: usize,
    pub degree: u32,
    pub instances: usize,
    pub passed: bool,
    /// Term count of the largest residual polynomial.
    pub residual_terms: usize,
    /// The largest residual polynomial, `0` when the identity holds.
    pub residual: String,
    pub note: Option<String>,
}

impl DetReport {
    fn from_residuals(identity: &str, dimension: usize, degree: u32, residuals: &[PolyField]) -> Self {
        let worst = residuals.iter().max_by_key(|r| r.term_count());
        let residual_terms = worst.map_or(0, |r| r.term_count());
        Self {
            identity: identity.into(),
            dimension,
            degree,
            instances: 1,
            passed: residual_terms == 0,
            residual_terms,
            residual: worst.map_or("0".into(), |r| r.to_string()),
            note: None,
        }
    }

    fn with_note(mut self, note: &str) -> Self {
        self.note = Some(note.into());
        self
    }

    /// Folds reports of the same identity over several instances.
    pub fn merge(reports: &[DetReport]) -> Option<DetReport> {
        let first = reports.first()?;
        let worst = reports.iter().max_by_key(|r| r.residual_terms).unwrap();
        Some(DetReport {
            identity: first.identity.clone(),
            dimension: first.dimension,
            degree: reports.iter().map(|r| r.degree).max().unwrap_or(0),
            instances: reports.iter().map(|r| r.instances).sum(),
            passed: reports.iter().all(|r| r.passed),
            residual_terms: worst.residual_terms,
            residual: worst.residual.clone(),
            note: first.note.clone(),
        })
    }
}

fn check_dim(d: usize, lo: usize, hi: usize) -> Result<()> {
    if d < lo || d > hi {
        return Err(Error::InvalidArgument(format!("dimension {d} outside {lo}..={hi}")));
    }
    Ok(())
}

fn gradient_matrix(u: &[PolyField]) -> Vec<Vec<PolyField>> {
    // M[i][j] = ∂_i u_j
    let d = u.len();
    (0..d)
        .map(|i| (0..d).map(|j| u[j].derivative(i)).collect())
        .collect()
}

fn hessian_matrix(u: &PolyField) -> Vec<Vec<PolyField>> {
    let d = u.d();
    (0..d)
        .map(|i| (0..d).map(|j| u.derivative(i).derivative(j)).collect())
        .collect()
}

/// Cofactor `C_{ij} = (-1)^{i+j} det M^{(i,j)}`.
fn cofactor(m: &[Vec<PolyField>], i: usize, j: usize) -> PolyField {
    let c = det(&minor(m, &[i], &[j]));
    if (i + j) % 2 == 0 {
        c
    } else {
        -&c
    }
}

/// Checks `Σ_i ∂_i C_{ij} = 0` and `det ∇u = Σ_i ∂_i(u_j C_{ij})` for every
/// column `j`, with `M_{ij} = ∂_i u_j`.
pub fn symbolic_piola_check(u: &[PolyField]) -> Result<Vec<DetReport>> {
    let d = u.len();
    check_dim(d, 2, 4)?;
    if u.iter().any(|p| p.d() != d) {
        return Err(Error::InvalidArgument("components must have d variables".into()));
    }
    let m = gradient_matrix(u);
    let jac = det(&m);
    let cof: Vec<Vec<PolyField>> = (0..d)
        .map(|i| (0..d).map(|j| cofactor(&m, i, j)).collect())
        .collect();
    let mut div_res = Vec::new();
    let mut det_res = Vec::new();
    for j in 0..d {
        let mut div = PolyField::zero(d);
        let mut form = PolyField::zero(d);
        for i in 0..d {
            div = &div + &cof[i][j].derivative(i);
            form = &form + &(&u[j] * &cof[i][j]).derivative(i);
        }
        div_res.push(div);
        det_res.push(&jac - &form);
    }
    let degree = u.iter().map(|p| p.degree()).max().unwrap_or(0);
    Ok(vec![
        DetReport::from_residuals("piola_divergence", d, degree, &div_res),
        DetReport::from_residuals("piola_det_divergence_form", d, degree, &det_res),
    ])
}

/// Checks `2 det ∇²u = 2∂_{12}(∂_1u ∂_2u) - ∂_{11}((∂_2u)²) - ∂_{22}((∂_1u)²)`.
pub fn symbolic_hessian2d_check(u: &PolyField) -> Result<DetReport> {
    check_dim(u.d(), 2, 2)?;
    let (u1, u2) = (u.derivative(0), u.derivative(1));
    let two = rational(2, 1);
    let lhs = det(&hessian_matrix(u)).scale(&two);
    let rhs = &(&(&u1 * &u2).derivative(0).derivative(1).scale(&two)
        - &(&u2 * &u2).derivative(0).derivative(0))
        - &(&u1 * &u1).derivative(1).derivative(1);
    Ok(DetReport::from_residuals("hessian_2d", 2, u.degree(), &[&lhs - &rhs]))
}

fn constant_matrix(rows: &[Vec<BigRational>]) -> Vec<Vec<PolyField>> {
    rows.iter()
        .map(|r| r.iter().map(|c| PolyField::constant(0, c.clone())).collect())
        .collect()
}

/// Checks `det P_τ = sign(τ) (∏_i ν_{τ(i),i}) det(ν_1, …, ν_d)`, where
/// column `i` of `P_τ` is `ν_{τ(i),i} ν_{τ(i)}` and `ν_{k,i}` is the `i`-th
/// component of `ν_k`.
pub fn symbolic_detptau_check(tau: &[usize], nu: &[Vec<BigRational>]) -> Result<DetReport> {
    let d = tau.len();
    check_dim(d, 2, 5)?;
    if nu.len() != d || nu.iter().any(|v| v.len() != d) {
        return Err(Error::InvalidArgument("need d vectors of length d".into()));
    }
    let mut seen = vec![false; d];
    for &t in tau {
        if t >= d || seen[t] {
            return Err(Error::InvalidArgument(format!("{tau:?} is not a permutation")));
        }
        seen[t] = true;
    }
    let (_, sign) = permutations(d)
        .into_iter()
        .find(|(p, _)| p == tau)
        .expect("tau is a permutation");
    // rows of P_τ: P[r][i] = ν_{τ(i),i} ν_{τ(i),r}
    let p: Vec<Vec<BigRational>> = (0..d)
        .map(|r| (0..d).map(|i| &nu[tau[i]][i] * &nu[tau[i]][r]).collect())
        .collect();
    let nu_cols: Vec<Vec<BigRational>> = (0..d)
        .map(|r| (0..d).map(|k| nu[k][r].clone()).collect())
        .collect();
    let lhs = det(&constant_matrix(&p));
    let prod = (0..d).fold(BigRational::one(), |acc, i| acc * &nu[tau[i]][i]);
    let rhs = det(&constant_matrix(&nu_cols)).scale(&(prod * rational(sign as i64, 1)));
    Ok(DetReport::from_residuals("det_p_tau", d, 0, &[&lhs - &rhs]))
}

/// Fully symbolic check that `Σ_τ det P_τ = det(ν_1, …, ν_d)²` with the
/// `d²` entries of the `ν_k` as independent variables.
pub fn symbolic_detptau_sum_check(d: usize) -> Result<DetReport> {
    check_dim(d, 2, 3)?;
    let vars = d * d;
    let entry = |k: usize, i: usize| PolyField::var(vars, k * d + i);
    let mut sum = PolyField::zero(vars);
    for (tau, _) in permutations(d) {
        let p: Vec<Vec<PolyField>> = (0..d)
            .map(|r| (0..d).map(|i| &entry(tau[i], i) * &entry(tau[i], r)).collect())
            .collect();
        sum = &sum + &det(&p);
    }
    let cols: Vec<Vec<PolyField>> = (0..d)
        .map(|r| (0..d).map(|k| entry(k, r)).collect())
        .collect();
    let dn = det(&cols);
    Ok(DetReport::from_residuals("det_p_tau_sum", d, 2 * d as u32, &[&sum - &(&dn * &dn)]))
}

/// Second cofactor `C_{ij}^{kl} = ∂² det H / ∂H_{ij} ∂H_{kl}`.
pub fn second_cofactor(h: &[Vec<PolyField>], i: usize, j: usize, k: usize, l: usize) -> PolyField {
    let vars = h[0][0].d();
    if i == k || j == l {
        return PolyField::zero(vars);
    }
    let sub = minor(h, &[i, k], &[j, l]);
    let m = if sub.is_empty() { PolyField::one(vars) } else { det(&sub) };
    let parity = (i + j + k + l) % 2 == 0;
    let same_order = (i < k) == (j < l);
    if parity == same_order {
        m
    } else {
        -&m
    }
}

/// Checks the double-permutation formula, the second-cofactor divergence
/// form and the four cofactor symmetries for `H = ∇²u`.
///
/// Both displayed formulas hold with the opposite sign:
/// `Σ_{σ,τ} sgn σ sgn τ ∂_{σ2}∂_{τ2}[…] = -d! det H` and
/// `Σ_{i,j} ∂_i∂_j[Σ_{k≠i,l≠j} ∂_k u ∂_l u C_{ij}^{kl}] = -d(d-1) det H`.
pub fn symbolic_baer_jerison_check(u: &PolyField) -> Result<Vec<DetReport>> {
    let d = u.d();
    check_dim(d, 2, 3)?;
    let h = hessian_matrix(u);
    let hdet = det(&h);
    let grad: Vec<PolyField> = (0..d).map(|i| u.derivative(i)).collect();
    let deg = u.degree();
    let fact: i64 = (1..=d as i64).product();

    let perms = permutations(d);
    let mut perm_sum = PolyField::zero(d);
    for (s, ss) in &perms {
        for (t, ts) in &perms {
            let mut inner = &grad[s[0]] * &grad[t[0]];
            for k in 2..d {
                inner = &inner * &h[s[k]][t[k]];
            }
            let term = inner.derivative(s[1]).derivative(t[1]);
            perm_sum = if ss * ts > 0 { &perm_sum + &term } else { &perm_sum - &term };
        }
    }
    let perm_res = &perm_sum + &hdet.scale(&rational(fact, 1));

    let mut div_sum = PolyField::zero(d);
    for i in 0..d {
        for j in 0..d {
            let mut inner = PolyField::zero(d);
            for k in (0..d).filter(|&k| k != i) {
                for l in (0..d).filter(|&l| l != j) {
                    let c = second_cofactor(&h, i, j, k, l);
                    inner = &inner + &(&(&grad[k] * &grad[l]) * &c);
                }
            }
            div_sum = &div_sum + &inner.derivative(i).derivative(j);
        }
    }
    let div_res = &div_sum + &hdet.scale(&rational((d * (d - 1)) as i64, 1));

    let mut sym = [Vec::new(), Vec::new(), Vec::new(), Vec::new()];
    for i in 0..d {
        for j in 0..d {
            for k in 0..d {
                for l in 0..d {
                    let c = second_cofactor(&h, i, j, k, l);
                    sym[0].push(&c + &second_cofactor(&h, k, j, i, l));
                    sym[1].push(&c + &second_cofactor(&h, i, l, k, j));
                    sym[2].push(&c - &second_cofactor(&h, j, i, l, k));
                    sym[3].push(&c - &second_cofactor(&h, k, l, i, j));
                }
            }
        }
    }
    let sign_note = "holds with the sign opposite to the displayed formula";
    Ok(vec![
        DetReport::from_residuals("baer_jerison_permutation_sum", d, deg, &[perm_res])
            .with_note(sign_note),
        DetReport::from_residuals("baer_jerison_second_cofactor_divergence", d, deg, &[div_res])
            .with_note(sign_note),
        DetReport::from_residuals("second_cofactor_row_swap", d, deg, &sym[0]),
        DetReport::from_residuals("second_cofactor_column_swap", d, deg, &sym[1]),
        DetReport::from_residuals("second_cofactor_transpose", d, deg, &sym[2]),
        DetReport::from_residuals("second_cofactor_pair_swap", d, deg, &sym[3]),
    ])
}

fn random_rational<R: Rng>(rng: &mut R) -> BigRational {
    rational(rng.gen_range(-9..=9), rng.gen_range(1..=5))
}

/// Runs every identity over `instances` random rational inputs per
/// dimension and folds the results into one report per identity and
/// dimension. Dimensions outside an identity's range are skipped.
pub fn run_identity_suite(dims: &[usize], instances: usize, seed: u64) -> Result<Vec<DetReport>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let mut push = |reports: Vec<DetReport>| {
        if let Some(r) = DetReport::merge(&reports) {
            out.push(r);
        }
    };
    for &d in dims {
        if (2..=4).contains(&d) {
            let degree = if d == 2 { 3 } else { 2 };
            let mut div = Vec::new();
            let mut form = Vec::new();
            for _ in 0..instances {
                let u: Vec<PolyField> = (0..d).map(|_| PolyField::random(d, degree, 6, &mut rng)).collect();
                let mut r = symbolic_piola_check(&u)?;
                form.push(r.pop().unwrap());
                div.push(r.pop().unwrap());
            }
            push(div);
            push(form);
        }
        if d == 2 {
            let reps = (0..instances)
                .map(|_| symbolic_hessian2d_check(&PolyField::random(2, 4, 8, &mut rng)))
                .collect::<Result<Vec<_>>>()?;
            push(reps);
        }
        if (2..=4).contains(&d) {
            let perms = permutations(d);
            let mut reps = Vec::new();
            for inst in 0..instances.max(if d <= 3 { perms.len() } else { 0 }) {
                // d <= 3 visits every permutation at least once
                let tau = if d <= 3 {
                    perms[inst % perms.len()].0.clone()
                } else {
                    perms[rng.gen_range(0..perms.len())].0.clone()
                };
                let nu: Vec<Vec<BigRational>> = (0..d)
                    .map(|_| (0..d).map(|_| random_rational(&mut rng)).collect())
                    .collect();
                reps.push(symbolic_detptau_check(&tau, &nu)?);
            }
            push(reps);
        }
        if (2..=3).contains(&d) {
            push(vec![symbolic_detptau_sum_check(d)?]);
            let degree = if d == 2 { 3 } else { 4 };
            let mut by_id: Vec<Vec<DetReport>> = vec![Vec::new(); 6];
            for _ in 0..instances {
                let u = PolyField::random(d, degree, 8, &mut rng);
                for (k, r) in symbolic_baer_jerison_check(&u)?.into_iter().enumerate() {
                    by_id[k].push(r);
                }
            }
            for reps in by_id {
                push(reps);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;

    #[test]
    fn calibration_constants() {
        for d in [2, 3] {
            let c = calibrate_jacobian(d).unwrap();
            assert!((c - jacobian_constant(d)).norm() < 1e-12, "d={d}: {c}");
            let c = calibrate_hessian(d).unwrap();
            assert!((c - hessian_constant(d)).norm() < 1e-12, "d={d}: {c}");
        }
    }

    #[test]
    fn diagonal_examples() {
        let g = GridSpec::periodic(2, 16).unwrap();
        let u1 = Field::from_real_fn(g, |x| x[0].sin());
        let u2 = Field::from_real_fn(g, |x| x[1].sin());
        let jp = jacobian_det_pointwise(&[&u1, &u2]).unwrap();
        let expect = Field::from_real_fn(*jp.grid(), |x| x[0].cos() * x[1].cos());
        assert!(jp.rel_l2_error(&expect).unwrap() < 1e-12);
        let jf = jacobian_det_fourier(&[&u1, &u2]).unwrap();
        assert!(jf.rel_l2_error(&expect).unwrap() < 1e-10);
        assert!(jacobian_det_fourier(&[&u1, &u1]).unwrap().max_abs() < 1e-12);

        let u = Field::from_real_fn(g, |x| x[0].cos() + x[1].cos());
        let hf = hessian_det_fourier(&u).unwrap();
        assert!(hf.rel_l2_error(&expect_cos(hf.grid())).unwrap() < 1e-10);
        let hp = hessian_det_pointwise(&u).unwrap();
        assert!(hp.rel_l2_error(&expect_cos(hp.grid())).unwrap() < 1e-12);
        let wave = Field::from_fn(g, |x| Complex64::from_polar(1.0, x[0] + 2.0 * x[1]));
        assert!(hessian_det_fourier(&wave).unwrap().max_abs() < 1e-12);
        assert!(hessian_det_pointwise(&wave).unwrap().max_abs() < 1e-12);
    }

    fn expect_cos(g: &GridSpec) -> Field {
        Field::from_real_fn(*g, |x| x[0].cos() * x[1].cos())
    }

    #[test]
    fn identity_examples() {
        // u = x1 x2: Hessian [[0,1],[1,0]], both sides -2
        let xy = &PolyField::var(2, 0) * &PolyField::var(2, 1);
        assert!(symbolic_hessian2d_check(&xy).unwrap().passed);
        assert_eq!(det(&hessian_matrix(&xy)), PolyField::constant(2, rational(-1, 1)));
        let sq = &(&PolyField::var(2, 0) * &PolyField::var(2, 0)) + &(&PolyField::var(2, 1) * &PolyField::var(2, 1));
        assert_eq!(det(&hessian_matrix(&sq)).scale(&rational(2, 1)), PolyField::constant(2, rational(8, 1)));
        assert!(symbolic_hessian2d_check(&sq).unwrap().passed);

        let ident: Vec<PolyField> = (0..3).map(|i| PolyField::var(3, i)).collect();
        assert!(symbolic_piola_check(&ident).unwrap().iter().all(|r| r.passed));

        let nu: Vec<Vec<BigRational>> = (0..3)
            .map(|k| (0..3).map(|i| rational((k == i) as i64, 1)).collect())
            .collect();
        assert!(symbolic_detptau_check(&[0, 1, 2], &nu).unwrap().passed);
        assert!(symbolic_detptau_check(&[0, 0, 2], &nu).is_err());
    }

    #[test]
    fn second_cofactor_is_second_derivative_of_det() {
        // independent oracle: differentiate det of a generic matrix twice
        for d in [2usize, 3, 4] {
            let vars = d * d;
            let h: Vec<Vec<PolyField>> = (0..d)
                .map(|i| (0..d).map(|j| PolyField::var(vars, i * d + j)).collect())
                .collect();
            let full = det(&h);
            for i in 0..d {
                for j in 0..d {
                    for k in 0..d {
                        for l in 0..d {
                            let expect = full.derivative(i * d + j).derivative(k * d + l);
                            assert_eq!(second_cofactor(&h, i, j, k, l), expect, "{i}{j}{k}{l}");
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn quadratic_form_constant_hessian() {
        // u = x^T Q x with Q = [[1, 1/2], [1/2, 3]]: det(∇²u) = det(2Q) = 11
        let (x, y) = (PolyField::var(2, 0), PolyField::var(2, 1));
        let u = &(&(&x * &x) + &(&x * &y)) + &(&y * &y).scale(&rational(3, 1));
        assert_eq!(det(&hessian_matrix(&u)), PolyField::constant(2, rational(11, 1)));
        assert!(symbolic_baer_jerison_check(&u).unwrap().iter().all(|r| r.passed));
    }

    #[test]
    fn displayed_sign_fails() {
        // the permutation sum equals -d! det, never +d! det, for a nondegenerate u
        let (x, y) = (PolyField::var(2, 0), PolyField::var(2, 1));
        let u = &(&x * &x) + &(&y * &y);
        let reps = symbolic_baer_jerison_check(&u).unwrap();
        assert!(reps[0].passed);
        let grad: Vec<PolyField> = (0..2).map(|i| u.derivative(i)).collect();
        let sum = &(&(&grad[1] * &grad[1]).derivative(0).derivative(0)
            + &(&grad[0] * &grad[0]).derivative(1).derivative(1))
            - &(&grad[0] * &grad[1]).derivative(0).derivative(1).scale(&rational(2, 1));
        assert_eq!(sum, PolyField::constant(2, rational(-8, 1)));
    }
}
