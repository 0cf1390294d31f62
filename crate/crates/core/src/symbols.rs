//! Multiplier symbols and sampled checks of their regularity hypotheses.
//!
//! A symbol of arity `m` in dimension `d` is evaluated on a flat slice of
//! `m * d` reals, slot `j` occupying `[j*d, (j+1)*d)`. Operators pass
//! physical frequencies `κ ξ` with `κ = 2π / period`.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Evaluator = Arc<dyn Fn(&[f64]) -> Complex64 + Send + Sync>;

/// What to return when some slot is the zero vector.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum ZeroRule {
    /// Call the evaluator anyway.
    Evaluate,
    /// Return this value without evaluating.
    Value(f64),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SymbolFlags {
    pub poly_homogeneous: bool,
    /// Linear in each slot separately.
    pub multilinear: bool,
    /// `Some(k)`: the k-th power of an alternating multilinear map.
    pub alternating_power: Option<u32>,
    pub product_form: bool,
}

#[derive(Clone)]
pub struct SymbolSpec {
    id: String,
    m: usize,
    d: usize,
    eval: Evaluator,
    flags: SymbolFlags,
    zero_rule: ZeroRule,
}

impl fmt::Debug for SymbolSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SymbolSpec")
            .field("id", &self.id)
            .field("m", &self.m)
            .field("d", &self.d)
            .field("flags", &self.flags)
            .field("zero_rule", &self.zero_rule)
            .finish()
    }
}

impl SymbolSpec {
    pub fn from_fn(
        id: impl Into<String>,
        m: usize,
        d: usize,
        flags: SymbolFlags,
        zero_rule: ZeroRule,
        eval: impl Fn(&[f64]) -> Complex64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            id: id.into(),
            m,
            d,
            eval: Arc::new(eval),
            flags,
            zero_rule,
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn flags(&self) -> SymbolFlags {
        self.flags
    }

    pub fn zero_rule(&self) -> ZeroRule {
        self.zero_rule
    }

    pub fn with_zero_rule(mut self, rule: ZeroRule) -> Self {
        self.zero_rule = rule;
        self
    }

    pub fn with_flags(mut self, flags: SymbolFlags) -> Self {
        self.flags = flags;
        self
    }

    /// Evaluates at the flat tuple `xi` of length `m * d`.
    pub fn eval(&self, xi: &[f64]) -> Complex64 {
        debug_assert_eq!(xi.len(), self.m * self.d);
        if let ZeroRule::Value(v) = self.zero_rule {
            if xi.chunks_exact(self.d).any(|s| s.iter().all(|&c| c == 0.0)) {
                return Complex64::new(v, 0.0);
            }
        }
        (self.eval)(xi)
    }

    /// Evaluates at integer lattice frequencies scaled by `kappa`.
    pub fn eval_lattice(&self, xi: &[i64], kappa: f64) -> Complex64 {
        let x: Vec<f64> = xi.iter().map(|&k| kappa * k as f64).collect();
        self.eval(&x)
    }
}

fn re(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

/// Determinant of the `d × d` matrix whose columns are the slots of `xi`.
/// Cofactor expansion, so integer inputs of moderate size are exact.
pub fn det_columns(xi: &[f64], d: usize) -> f64 {
    let a = |col: usize, row: usize| xi[col * d + row];
    match d {
        1 => a(0, 0),
        2 => a(0, 0) * a(1, 1) - a(1, 0) * a(0, 1),
        3 => {
            a(0, 0) * (a(1, 1) * a(2, 2) - a(2, 1) * a(1, 2))
                - a(1, 0) * (a(0, 1) * a(2, 2) - a(2, 1) * a(0, 2))
                + a(2, 0) * (a(0, 1) * a(1, 2) - a(1, 1) * a(0, 2))
        }
        _ => {
            let mut total = 0.0;
            let mut minor = vec![0.0; (d - 1) * (d - 1)];
            for c in 0..d {
                let entry = a(c, 0);
                if entry == 0.0 {
                    continue;
                }
                let mut k = 0;
                for cc in (0..d).filter(|&cc| cc != c) {
                    for r in 1..d {
                        minor[k] = a(cc, r);
                        k += 1;
                    }
                }
                let sign = if c % 2 == 0 { 1.0 } else { -1.0 };
                total += sign * entry * det_columns(&minor, d - 1);
            }
            total
        }
    }
}

fn slot_norm(s: &[f64]) -> f64 {
    s.iter().map(|c| c * c).sum::<f64>().sqrt()
}

/// The constant symbol `c` of arity `m`.
pub fn constant(m: usize, d: usize, c: f64) -> SymbolSpec {
    SymbolSpec::from_fn(
        if c == 1.0 { "one".to_string() } else { format!("const:{c}") },
        m,
        d,
        SymbolFlags {
            poly_homogeneous: true,
            product_form: true,
            ..Default::default()
        },
        ZeroRule::Evaluate,
        move |_| re(c),
    )
}

/// `det(ξ_1, …, ξ_d)` with the slots as columns.
pub fn det_symbol(d: usize) -> Result<SymbolSpec> {
    if d < 2 {
        return Err(Error::InvalidArgument("det symbol needs d >= 2".into()));
    }
    Ok(SymbolSpec::from_fn(
        "det",
        d,
        d,
        SymbolFlags {
            multilinear: true,
            alternating_power: Some(1),
            ..Default::default()
        },
        ZeroRule::Evaluate,
        move |xi| re(det_columns(xi, d)),
    ))
}

/// `ξ_1 · ξ_2`.
pub fn dot_symbol(d: usize) -> SymbolSpec {
    SymbolSpec::from_fn(
        "dot",
        2,
        d,
        SymbolFlags {
            multilinear: true,
            ..Default::default()
        },
        ZeroRule::Evaluate,
        move |xi| re(xi[..d].iter().zip(&xi[d..]).map(|(a, b)| a * b).sum()),
    )
}

/// `base^k`.
pub fn power_symbol(base: &SymbolSpec, k: u32) -> SymbolSpec {
    let b = base.clone();
    let flags = SymbolFlags {
        poly_homogeneous: base.flags.poly_homogeneous,
        multilinear: k == 1 && base.flags.multilinear,
        alternating_power: base.flags.alternating_power.map(|p| p * k),
        product_form: base.flags.product_form,
    };
    let id = if base.id == "det" {
        format!("det_pow:{k}")
    } else {
        format!("pow({},{k})", base.id)
    };
    SymbolSpec::from_fn(id, base.m, base.d, flags, base.zero_rule, move |xi| {
        b.eval(xi).powu(k)
    })
}

/// Exponent of a degree-0 normalized power.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum NormalizedPower {
    /// `|base|^β / ∏|ξ_j|^β`.
    Abs(f64),
    /// `base^k / ∏|ξ_j|^k`, keeping the sign.
    Signed(u32),
}

/// Degree-0 normalization of a multilinear base symbol.
pub fn normalized_power_symbol(base: &SymbolSpec, power: NormalizedPower) -> Result<SymbolSpec> {
    if !base.flags.multilinear {
        return Err(Error::InvalidArgument(format!(
            "normalization needs a multilinear base, `{}` is not",
            base.id
        )));
    }
    let (d, m) = (base.d, base.m);
    let b = base.clone();
    let (id, eval): (String, Evaluator) = match power {
        NormalizedPower::Abs(beta) => {
            if !(beta > 0.0 && beta.is_finite()) {
                return Err(Error::InvalidArgument(format!("beta must be positive, got {beta}")));
            }
            (
                format!("{}_norm:{beta}", base.id),
                Arc::new(move |xi: &[f64]| {
                    let norms: f64 = xi.chunks_exact(d).map(slot_norm).product();
                    re((b.eval(xi).norm() / norms).powf(beta))
                }),
            )
        }
        NormalizedPower::Signed(k) => {
            if k == 0 {
                return Err(Error::InvalidArgument("power must be positive".into()));
            }
            (
                format!("{}_norm_signed:{k}", base.id),
                Arc::new(move |xi: &[f64]| {
                    let norms: f64 = xi.chunks_exact(d).map(slot_norm).product();
                    (b.eval(xi) / norms).powu(k)
                }),
            )
        }
    };
    let alternating_power = match power {
        NormalizedPower::Signed(k) => base.flags.alternating_power.map(|p| p * k),
        NormalizedPower::Abs(_) => None,
    };
    Ok(SymbolSpec {
        id,
        m,
        d,
        eval,
        flags: SymbolFlags {
            poly_homogeneous: true,
            multilinear: false,
            alternating_power,
            product_form: false,
        },
        zero_rule: ZeroRule::Value(0.0),
    })
}

/// `a_1(ξ_1) ⋯ a_m(ξ_m)` from single-slot factors.
pub fn product_symbol(factors: &[SymbolSpec]) -> Result<SymbolSpec> {
    let first = factors
        .first()
        .ok_or_else(|| Error::InvalidArgument("product needs at least one factor".into()))?;
    let d = first.d;
    if let Some(bad) = factors.iter().find(|f| f.m != 1 || f.d != d) {
        return Err(Error::InvalidArgument(format!(
            "factor `{}` must have arity 1 and dimension {d}",
            bad.id
        )));
    }
    let fs: Vec<SymbolSpec> = factors.to_vec();
    let id = format!(
        "product({})",
        fs.iter().map(|f| f.id.as_str()).collect::<Vec<_>>().join(",")
    );
    let poly_homogeneous = fs.iter().all(|f| f.flags.poly_homogeneous);
    Ok(SymbolSpec::from_fn(
        id,
        fs.len(),
        d,
        SymbolFlags {
            poly_homogeneous,
            product_form: true,
            ..Default::default()
        },
        ZeroRule::Evaluate,
        move |xi| {
            fs.iter()
                .zip(xi.chunks_exact(d))
                .map(|(f, s)| f.eval(s))
                .product()
        },
    ))
}

/// Riesz-type factor `ξ_j / |ξ|` (1-based `j`); `j = 0` is the constant 1.
pub fn riesz(d: usize, j: usize) -> Result<SymbolSpec> {
    if j == 0 {
        return Ok(constant(1, d, 1.0));
    }
    if j > d {
        return Err(Error::InvalidArgument(format!("Riesz index {j} exceeds d = {d}")));
    }
    Ok(SymbolSpec::from_fn(
        format!("riesz:{j}"),
        1,
        d,
        SymbolFlags {
            poly_homogeneous: true,
            product_form: true,
            ..Default::default()
        },
        ZeroRule::Value(0.0),
        move |xi| re(xi[j - 1] / slot_norm(xi)),
    ))
}

/// Symbol registry used by the command line.
///
/// Accepted ids: `one`, `det`, `det_pow:k`, `det_norm:beta`,
/// `dot_norm:beta`, `riesz_product:j1,…,jm`. `m` only matters for `one`.
pub fn parse_symbol(id: &str, d: usize, m: usize) -> Result<SymbolSpec> {
    let unknown = || Error::UnknownSymbol(id.to_string());
    let (head, arg) = match id.split_once(':') {
        Some((h, a)) => (h, Some(a)),
        None => (id, None),
    };
    let num = |a: Option<&str>| -> Result<f64> {
        a.and_then(|s| s.trim().parse::<f64>().ok()).ok_or_else(unknown)
    };
    match head {
        "one" if arg.is_none() => Ok(constant(m, d, 1.0)),
        "det" if arg.is_none() => det_symbol(d),
        "det_pow" => {
            let k = num(arg)?;
            if k < 1.0 || k.fract() != 0.0 {
                return Err(unknown());
            }
            Ok(power_symbol(&det_symbol(d)?, k as u32))
        }
        "det_norm" => normalized_power_symbol(&det_symbol(d)?, NormalizedPower::Abs(num(arg)?)),
        "dot_norm" => normalized_power_symbol(&dot_symbol(d), NormalizedPower::Abs(num(arg)?)),
        "riesz_product" => {
            let js: Vec<usize> = arg
                .ok_or_else(unknown)?
                .split(',')
                .map(|s| s.trim().parse::<usize>().map_err(|_| unknown()))
                .collect::<Result<_>>()?;
            let factors = js.iter().map(|&j| riesz(d, j)).collect::<Result<Vec<_>>>()?;
            product_symbol(&factors)
        }
        _ => Err(unknown()),
    }
}

/// Numerically probes that `σ` vanishes on repeated slots and is additive in
/// the first slot, on random integer tuples.
pub fn probe_alternating(sigma: &SymbolSpec, trials: usize, seed: u64) -> bool {
    let (m, d) = (sigma.m, sigma.d);
    if m < 2 {
        return false;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..trials {
        let mut xi: Vec<f64> = (0..m * d).map(|_| rng.gen_range(-6..=6) as f64).collect();
        let scale = xi.iter().map(|v| v.abs()).fold(1.0, f64::max).powi(m as i32);
        let tol = 1e-9 * scale;
        let (a, b) = (rng.gen_range(0..m), rng.gen_range(0..m));
        let base = sigma.eval(&xi);
        let extra: Vec<f64> = (0..d).map(|_| rng.gen_range(-6..=6) as f64).collect();
        let mut shifted = xi.clone();
        let mut only = xi.clone();
        for c in 0..d {
            shifted[c] += extra[c];
            only[c] = extra[c];
        }
        if (sigma.eval(&shifted) - base - sigma.eval(&only)).norm() > tol {
            return false;
        }
        if a != b {
            for c in 0..d {
                xi[b * d + c] = xi[a * d + c];
            }
            if sigma.eval(&xi).norm() > tol {
                return false;
            }
        }
    }
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstantEstimate {
    /// Per-coordinate derivative orders, length `m * d`.
    pub alpha: Vec<usize>,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaleEntry {
    pub scale: f64,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub condition: String,
    pub symbol: String,
    pub sample_set: String,
    pub samples: usize,
    pub skipped: usize,
    pub constants: Vec<ConstantEstimate>,
    pub per_scale: Vec<ScaleEntry>,
    /// The statistic compared with `threshold`: maximal deviation,
    /// scale-stability ratio or supremum norm depending on the check.
    pub worst_ratio: f64,
    pub threshold: f64,
    pub passed: bool,
}

fn random_tuple(rng: &mut ChaCha8Rng, m: usize, d: usize, lattice: bool) -> Vec<f64> {
    loop {
        let xi: Vec<f64> = (0..m * d)
            .map(|_| {
                if lattice {
                    rng.gen_range(-8..=8) as f64
                } else {
                    rng.gen_range(-1.0..1.0)
                }
            })
            .collect();
        let min_slot = xi.chunks_exact(d).map(slot_norm).fold(f64::INFINITY, f64::min);
        if min_slot >= if lattice { 1.0 } else { 0.25 } {
            return xi;
        }
    }
}

/// Draws random nonzero integer tuples and per-slot factors `2^{-4..4}` and
/// reports `max |σ(t ξ) - σ(ξ)|`.
pub fn check_poly_homogeneity(sigma: &SymbolSpec, samples: usize, seed: u64) -> Result<ConditionReport> {
    if samples == 0 {
        return Err(Error::InvalidArgument("at least one sample is required".into()));
    }
    let (m, d) = (sigma.m, sigma.d);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let xi = random_tuple(&mut rng, m, d, true);
        let mut scaled = xi.clone();
        for slot in scaled.chunks_exact_mut(d) {
            let t = 2f64.powi(rng.gen_range(-4..=4));
            slot.iter_mut().for_each(|c| *c *= t);
        }
        worst = worst.max((sigma.eval(&scaled) - sigma.eval(&xi)).norm());
    }
    let threshold = 1e-10;
    Ok(ConditionReport {
        condition: "poly_homogeneity".into(),
        symbol: sigma.id.clone(),
        sample_set: format!("{samples} integer tuples in [-8,8]^{}, slot scales 2^-4..2^4", m * d),
        samples,
        skipped: 0,
        constants: Vec::new(),
        per_scale: Vec::new(),
        worst_ratio: worst,
        threshold,
        passed: worst <= threshold,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DerivativeWeight {
    /// `(|ξ_1| + ⋯ + |ξ_m|)^{|α|}`.
    Cm,
    /// `|ξ_1|^{|α_1|} ⋯ |ξ_m|^{|α_m|}`.
    Product,
}

/// All multi-indices over `vars` coordinates with `1 <= |α| <= max_order`.
fn multi_indices(vars: usize, max_order: usize) -> Vec<Vec<usize>> {
    fn rec(prefix: &mut Vec<usize>, vars: usize, left: usize, out: &mut Vec<Vec<usize>>) {
        if prefix.len() == vars {
            if prefix.iter().sum::<usize>() > 0 {
                out.push(prefix.clone());
            }
            return;
        }
        for a in 0..=left {
            prefix.push(a);
            rec(prefix, vars, left - a, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), vars, max_order, &mut out);
    out
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Tensor-product central difference `∂^α f(x)` with step `h`:
/// per coordinate `Σ_i (-1)^i C(a,i) f(x + (a/2 - i) h e_v) / h^a`.
fn central_difference(sigma: &SymbolSpec, x: &[f64], alpha: &[usize], h: f64) -> Complex64 {
    let active: Vec<(usize, usize)> = alpha
        .iter()
        .enumerate()
        .filter(|(_, &a)| a > 0)
        .map(|(v, &a)| (v, a))
        .collect();
    let mut counters = vec![0usize; active.len()];
    let mut total = Complex64::new(0.0, 0.0);
    let mut point = x.to_vec();
    loop {
        let mut weight = 1.0;
        for (k, &(v, a)) in active.iter().enumerate() {
            let i = counters[k];
            point[v] = x[v] + (a as f64 / 2.0 - i as f64) * h;
            weight *= if i % 2 == 0 { 1.0 } else { -1.0 } * binomial(a, i);
        }
        total += sigma.eval(&point) * weight;
        let mut k = 0;
        loop {
            if k == active.len() {
                let order: usize = alpha.iter().sum();
                return total / h.powi(order as i32);
            }
            counters[k] += 1;
            if counters[k] <= active[k].1 {
                break;
            }
            counters[k] = 0;
            k += 1;
        }
    }
}

/// Largest finite-difference estimate below which derivatives count as zero.
const DERIVATIVE_FLOOR: f64 = 1e-8;

/// Finite-difference estimates of the weighted derivatives
/// `|∂^α σ| · weight^{|α|}` at random tuples across the scales `2^{-2..3}`.
///
/// The step is `|ξ|/64` with `|ξ|` the joint norm of the tuple; tuples with a
/// slot shorter than `max_order` steps are skipped. The reported ratio is the
/// spread max/min of the per-scale suprema and passes at `<= 2`.
pub fn check_derivative_conditions(
    sigma: &SymbolSpec,
    which: DerivativeWeight,
    max_order: usize,
    samples: usize,
    seed: u64,
) -> Result<ConditionReport> {
    if max_order == 0 {
        return Err(Error::InvalidArgument("max_order must be at least 1".into()));
    }
    if samples == 0 {
        return Err(Error::InvalidArgument("at least one sample is required".into()));
    }
    let (m, d) = (sigma.m, sigma.d);
    let alphas = multi_indices(m * d, max_order);
    let scales: Vec<f64> = (-2..=3).map(|e| 2f64.powi(e)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut per_scale = vec![0.0f64; scales.len()];
    let mut constants = vec![0.0f64; alphas.len()];
    let mut skipped = 0;
    for _ in 0..samples {
        let base = random_tuple(&mut rng, m, d, false);
        for (si, &s) in scales.iter().enumerate() {
            let xi: Vec<f64> = base.iter().map(|c| c * s).collect();
            let h = slot_norm(&xi) / 64.0;
            let slot_norms: Vec<f64> = xi.chunks_exact(d).map(slot_norm).collect();
            if slot_norms.iter().any(|&r| r <= max_order as f64 * h) {
                skipped += 1;
                continue;
            }
            for (ai, alpha) in alphas.iter().enumerate() {
                let order: usize = alpha.iter().sum();
                let weight = match which {
                    DerivativeWeight::Cm => slot_norms.iter().sum::<f64>().powi(order as i32),
                    DerivativeWeight::Product => slot_norms
                        .iter()
                        .enumerate()
                        .map(|(j, r)| r.powi(alpha[j * d..(j + 1) * d].iter().sum::<usize>() as i32))
                        .product(),
                };
                let v = central_difference(sigma, &xi, alpha, h).norm() * weight;
                per_scale[si] = per_scale[si].max(v);
                constants[ai] = constants[ai].max(v);
            }
        }
    }
    let hi = per_scale.iter().cloned().fold(0.0, f64::max);
    let lo = per_scale.iter().cloned().fold(f64::INFINITY, f64::min);
    let ratio = if hi <= DERIVATIVE_FLOOR {
        1.0
    } else if lo <= 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    };
    let threshold = 2.0;
    let name = match which {
        DerivativeWeight::Cm => "derivative_cm",
        DerivativeWeight::Product => "derivative_product",
    };
    Ok(ConditionReport {
        condition: name.into(),
        symbol: sigma.id.clone(),
        sample_set: format!("{samples} random tuples, scales 2^-2..2^3, orders 1..={max_order}"),
        samples,
        skipped,
        constants: alphas
            .into_iter()
            .zip(constants)
            .map(|(alpha, value)| ConstantEstimate { alpha, value })
            .collect(),
        per_scale: scales
            .into_iter()
            .zip(per_scale)
            .map(|(scale, value)| ScaleEntry { scale, value })
            .collect(),
        worst_ratio: ratio,
        threshold,
        passed: ratio <= threshold,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AnnulusOptions {
    /// Points per axis of the uniform grid on `[-2, 2]^{m d}`; must be even.
    pub points_per_axis: usize,
    /// Pass when the supremum over `R` stays at or below this value.
    pub threshold: f64,
}

impl Default for AnnulusOptions {
    fn default() -> Self {
        Self {
            points_per_axis: 16,
            threshold: f64::INFINITY,
        }
    }
}

/// Discrete `H^order` norm of `a_R(ξ) = a(R ξ)` over the product annulus
/// `1 <= |(ξ_1, …, ξ_m)| <= 2`, for each `R`, with finite differences at the
/// grid step. Reports the supremum over `R`.
pub fn check_hormander_annulus(
    a: &SymbolSpec,
    smoothness_order: usize,
    r_list: &[f64],
    opts: AnnulusOptions,
) -> Result<ConditionReport> {
    if r_list.is_empty() || r_list.iter().any(|&r| !(r > 0.0 && r.is_finite())) {
        return Err(Error::InvalidArgument("R list must be nonempty and positive".into()));
    }
    let p = opts.points_per_axis;
    if p < 2 || p % 2 != 0 {
        return Err(Error::InvalidArgument("points per axis must be even".into()));
    }
    let vars = a.m * a.d;
    let h = 4.0 / p as f64;
    let total = p
        .checked_pow(vars as u32)
        .filter(|&t| t <= 1 << 24)
        .ok_or_else(|| Error::InvalidArgument("annulus grid too large".into()))?;
    let mut alphas = vec![vec![0usize; vars]];
    alphas.extend(multi_indices(vars, smoothness_order));
    let mut points = Vec::new();
    let mut x = vec![0.0; vars];
    for flat in 0..total {
        let mut rest = flat;
        for v in (0..vars).rev() {
            x[v] = -2.0 + h * ((rest % p) as f64 + 0.5);
            rest /= p;
        }
        let r = slot_norm(&x);
        if (1.0..=2.0).contains(&r) {
            points.push(x.clone());
        }
    }
    let cell = h.powi(vars as i32);
    let mut per_scale = Vec::with_capacity(r_list.len());
    for &big_r in r_list {
        let scaled = SymbolSpec::from_fn(
            a.id.clone(),
            a.m,
            a.d,
            a.flags,
            ZeroRule::Evaluate,
            {
                let a = a.clone();
                move |xi: &[f64]| {
                    let y: Vec<f64> = xi.iter().map(|c| c * big_r).collect();
                    a.eval(&y)
                }
            },
        );
        let mut sum = 0.0;
        for pt in &points {
            for alpha in &alphas {
                let v = if alpha.iter().all(|&k| k == 0) {
                    scaled.eval(pt)
                } else {
                    central_difference(&scaled, pt, alpha, h)
                };
                sum += v.norm_sqr();
            }
        }
        per_scale.push(ScaleEntry {
            scale: big_r,
            value: (sum * cell).sqrt(),
        });
    }
    let sup = per_scale.iter().map(|e| e.value).fold(0.0, f64::max);
    Ok(ConditionReport {
        condition: "hormander_annulus".into(),
        symbol: a.id.clone(),
        sample_set: format!(
            "{} grid points of a {p}^{vars} grid on [-2,2]^{vars} inside 1 <= |xi| <= 2",
            points.len()
        ),
        samples: points.len(),
        skipped: 0,
        constants: Vec::new(),
        per_scale,
        worst_ratio: sup,
        threshold: opts.threshold,
        passed: sup.is_finite() && sup <= opts.threshold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::{prop_assert_eq, proptest};

    fn unit(d: usize, i: usize) -> Vec<f64> {
        (0..d).map(|k| if k == i { 1.0 } else { 0.0 }).collect()
    }

    fn tuple(slots: &[Vec<f64>]) -> Vec<f64> {
        slots.concat()
    }

    #[test]
    fn det_on_basis_vectors() {
        for d in 2..=5 {
            let det = det_symbol(d).unwrap();
            let id: Vec<Vec<f64>> = (0..d).map(|i| unit(d, i)).collect();
            assert_eq!(det.eval(&tuple(&id)).re, 1.0);
            let mut swapped = id.clone();
            swapped.swap(0, 1);
            assert_eq!(det.eval(&tuple(&swapped)).re, -1.0);
            let mut repeated = id.clone();
            repeated[1] = repeated[0].clone();
            assert_eq!(det.eval(&tuple(&repeated)).re, 0.0);
        }
        assert!(det_symbol(1).is_err());
    }

    #[test]
    fn det_matches_lu_determinant() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for d in 2..=5 {
            let xi: Vec<f64> = (0..d * d).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let m = faer::Mat::from_fn(d, d, |r, c| xi[c * d + r]);
            assert!((det_columns(&xi, d) - m.determinant()).abs() < 1e-10);
        }
    }

    #[test]
    fn det_power_examples() {
        let det = det_symbol(2).unwrap();
        let sq = power_symbol(&det, 2);
        assert_eq!(sq.eval(&[1.0, 0.0, 0.0, 1.0]).re, 1.0);
        assert_eq!(sq.eval(&[0.0, 1.0, 1.0, 0.0]).re, 1.0);
        assert_eq!(sq.flags().alternating_power, Some(2));
        let cube = power_symbol(&det, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let v: Vec<f64> = (0..4).map(|_| rng.gen_range(-9..=9) as f64).collect();
            let direct = v[0] * v[3] - v[2] * v[1];
            assert_eq!(cube.eval(&v).re, direct * direct * direct);
        }
    }

    #[test]
    fn normalized_examples() {
        let dot = normalized_power_symbol(&dot_symbol(2), NormalizedPower::Abs(1.7)).unwrap();
        assert_abs_diff_eq!(dot.eval(&[1.0, 0.0, 1.0, 0.0]).re, 1.0, epsilon = 1e-15);
        assert_eq!(dot.eval(&[1.0, 0.0, 0.0, 1.0]).re, 0.0);
        assert_eq!(dot.eval(&[0.0, 0.0, 0.0, 1.0]).re, 0.0);
        let det = normalized_power_symbol(&det_symbol(2).unwrap(), NormalizedPower::Abs(1.0)).unwrap();
        assert_abs_diff_eq!(
            det.eval(&[1.0, 0.0, 1.0, 1.0]).re,
            1.0 / 2f64.sqrt(),
            epsilon = 1e-15
        );
        let signed =
            normalized_power_symbol(&det_symbol(2).unwrap(), NormalizedPower::Signed(1)).unwrap();
        assert_abs_diff_eq!(signed.eval(&[0.0, 1.0, 1.0, 0.0]).re, -1.0, epsilon = 1e-15);
        assert!(normalized_power_symbol(&det, NormalizedPower::Abs(1.0)).is_err());
    }

    #[test]
    fn product_examples() {
        let one = product_symbol(&[constant(1, 2, 1.0), constant(1, 2, 1.0)]).unwrap();
        assert_eq!(one.m(), 2);
        assert_eq!(one.eval(&[3.0, 1.0, -2.0, 5.0]).re, 1.0);
        let r = product_symbol(&[riesz(2, 1).unwrap(), constant(1, 2, 1.0)]).unwrap();
        assert_abs_diff_eq!(r.eval(&[1.0, 0.0, 4.0, -3.0]).re, 1.0, epsilon = 1e-15);
        assert!(product_symbol(&[det_symbol(2).unwrap()]).is_err());
    }

    #[test]
    fn product_of_tables_is_pointwise() {
        let t1 = [0.5, -1.0, 2.0, 0.25];
        let t2 = [3.0, 1.5, -0.5, 4.0];
        let f1 = SymbolSpec::from_fn("t1", 1, 1, SymbolFlags::default(), ZeroRule::Evaluate, move |x| {
            re(t1[(x[0] as i64).rem_euclid(4) as usize])
        });
        let f2 = SymbolSpec::from_fn("t2", 1, 1, SymbolFlags::default(), ZeroRule::Evaluate, move |x| {
            re(t2[(x[0] as i64).rem_euclid(4) as usize])
        });
        let p = product_symbol(&[f1, f2]).unwrap();
        for a in 0..4 {
            for b in 0..4 {
                assert_eq!(p.eval(&[a as f64, b as f64]).re, t1[a] * t2[b]);
            }
        }
    }

    #[test]
    fn registry() {
        assert_eq!(parse_symbol("one", 2, 3).unwrap().m(), 3);
        assert_eq!(parse_symbol("det", 3, 0).unwrap().m(), 3);
        assert_eq!(parse_symbol("det_pow:2", 2, 0).unwrap().id(), "det_pow:2");
        assert!(parse_symbol("det_norm:2", 2, 0).unwrap().flags().poly_homogeneous);
        assert_eq!(parse_symbol("riesz_product:1,0,2", 2, 0).unwrap().m(), 3);
        assert!(parse_symbol("dot_norm:1", 3, 0).is_ok());
        for bad in ["nope", "det_pow:x", "det_pow:1.5", "riesz_product:4", "det_norm:-1", "one:2"] {
            assert!(parse_symbol(bad, 2, 2).is_err(), "{bad}");
        }
    }

    #[test]
    fn homogeneity_checks() {
        let det = det_symbol(2).unwrap();
        for beta in [1.0, 2.0, 3.0] {
            let s = normalized_power_symbol(&det, NormalizedPower::Abs(beta)).unwrap();
            let rep = check_poly_homogeneity(&s, 200, 3).unwrap();
            assert!(rep.passed, "beta {beta}: {}", rep.worst_ratio);
        }
        let rep = check_poly_homogeneity(&power_symbol(&det, 2), 50, 3).unwrap();
        assert!(!rep.passed && rep.worst_ratio > 1.0);
        let rp = parse_symbol("riesz_product:1,2", 2, 0).unwrap();
        assert!(check_poly_homogeneity(&rp, 200, 4).unwrap().passed);
        assert!(check_poly_homogeneity(&rp, 0, 4).is_err());
    }

    #[test]
    fn derivative_checks() {
        let one = constant(2, 2, 1.0);
        let rep = check_derivative_conditions(&one, DerivativeWeight::Cm, 2, 10, 1).unwrap();
        assert!(rep.passed);
        assert!(rep.constants.iter().all(|c| c.value <= 1e-8));

        let nd = parse_symbol("det_norm:2", 2, 0).unwrap();
        let rep = check_derivative_conditions(&nd, DerivativeWeight::Cm, 1, 20, 2).unwrap();
        assert!(rep.passed, "{:?}", rep.per_scale);
        assert!(rep.worst_ratio.is_finite());
        let rep = check_derivative_conditions(&nd, DerivativeWeight::Product, 2, 20, 2).unwrap();
        assert!(rep.passed, "{:?}", rep.per_scale);

        let det = det_symbol(2).unwrap();
        let rep = check_derivative_conditions(&det, DerivativeWeight::Product, 1, 20, 2).unwrap();
        assert!(!rep.passed);
        let grow: Vec<f64> = rep.per_scale.iter().map(|e| e.value).collect();
        assert!(grow.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn annulus_checks() {
        let one = constant(1, 2, 1.0);
        let rep = check_hormander_annulus(&one, 2, &[0.5, 1.0, 4.0], AnnulusOptions::default()).unwrap();
        let h: f64 = 4.0 / 16.0;
        let measure = rep.samples as f64 * h * h;
        for e in &rep.per_scale {
            assert_abs_diff_eq!(e.value, measure.sqrt(), epsilon = 1e-12);
        }
        // the discrete measure approaches 3π
        assert!((measure - 3.0 * std::f64::consts::PI).abs() < 0.5);

        let nd = parse_symbol("det_norm:2", 2, 0).unwrap();
        let rs: Vec<f64> = (-3..=3).map(|e| 2f64.powi(e)).collect();
        let opts = AnnulusOptions { points_per_axis: 8, threshold: f64::INFINITY };
        let rep = check_hormander_annulus(&nd, 1, &rs, opts).unwrap();
        let first = rep.per_scale[0].value;
        assert!(rep.per_scale.iter().all(|e| (e.value - first).abs() <= 1e-10 * first));

        let mihlin = |j: usize| {
            SymbolSpec::from_fn(format!("mihlin:{j}"), 1, 1, SymbolFlags::default(), ZeroRule::Evaluate, move |x| {
                re(x[0] * x[0] / (1.0 + x[0] * x[0]) + j as f64)
            })
        };
        let prod = product_symbol(&[mihlin(0), mihlin(1)]).unwrap();
        let rep = check_hormander_annulus(&prod, 2, &rs, AnnulusOptions { points_per_axis: 32, threshold: 100.0 }).unwrap();
        assert!(rep.passed, "{:?}", rep.per_scale);
        assert!(check_hormander_annulus(&prod, 2, &[], AnnulusOptions::default()).is_err());
    }

    #[test]
    fn alternating_probe() {
        assert!(probe_alternating(&det_symbol(2).unwrap(), 20, 1));
        assert!(probe_alternating(&det_symbol(3).unwrap(), 20, 1));
        assert!(!probe_alternating(&dot_symbol(2), 20, 1));
        assert!(!probe_alternating(&power_symbol(&det_symbol(2).unwrap(), 2), 20, 1));
        assert!(!probe_alternating(&constant(2, 2, 1.0), 20, 1));
    }

    proptest! {
        #[test]
        fn det_is_multilinear_and_shift_invariant(
            v in proptest::collection::vec(-20i64..=20, 9),
            w in proptest::collection::vec(-20i64..=20, 3),
        ) {
            let det = det_symbol(3).unwrap();
            let x: Vec<f64> = v.iter().map(|&k| k as f64).collect();
            let mut plus = x.clone();
            let mut only = x.clone();
            for c in 0..3 {
                plus[c] += w[c] as f64;
                only[c] = w[c] as f64;
            }
            prop_assert_eq!(det.eval(&plus).re, det.eval(&x).re + det.eval(&only).re);
            let mut shifted = x.clone();
            for c in 0..3 {
                shifted[c] = x[c] + x[3 + c] + x[6 + c];
            }
            prop_assert_eq!(det.eval(&shifted).re, det.eval(&x).re);
            let mut rep = x.clone();
            for c in 0..3 {
                rep[6 + c] = rep[3 + c];
            }
            prop_assert_eq!(det.eval(&rep).re, 0.0);
        }
    }
}
