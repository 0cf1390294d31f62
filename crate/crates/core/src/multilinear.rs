//! The multilinear operator
//! `T(f_1, …, f_m)(x) = Σ_{ξ_1,…,ξ_m} a(κξ_1, …, κξ_m) f̂_1(ξ_1) ⋯ f̂_m(ξ_m) e^{iκ x·(ξ_1+⋯+ξ_m)}`.
//!
//! [`apply_direct`] enumerates frequency tuples and is the reference for
//! every other path. Outputs live on the grid enlarged by the pad factor, so
//! `ξ_1 + ⋯ + ξ_m` never wraps around.

use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{dft_forward, dft_inverse, pair, resample, spectral_partial, Field, GridSpec, Mode, Spectrum};
use crate::lp_decomp::{first_uncovered, DyadicPartition, SeparableExpansion};
use crate::symbols::{probe_alternating, SymbolFlags, SymbolSpec, ZeroRule};

/// Default cap on the number of enumerated frequency tuples.
pub const DEFAULT_BUDGET: u128 = 1 << 27;

/// Budget from `MLAB_BUDGET`, falling back to [`DEFAULT_BUDGET`].
pub fn budget_from_env() -> u128 {
    std::env::var("MLAB_BUDGET")
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .unwrap_or(DEFAULT_BUDGET)
}

#[derive(Clone, Debug)]
pub enum Strategy {
    Direct,
    Separable {
        expansion: Arc<SeparableExpansion>,
        partition: DyadicPartition,
    },
}

#[derive(Clone, Debug)]
pub struct OperatorSpec {
    pub symbol: SymbolSpec,
    pub strategy: Strategy,
    pub pad_factor: usize,
    /// Maximal number of frequency tuples the direct path may enumerate.
    pub budget: u128,
}

impl OperatorSpec {
    /// Direct evaluation, pad factor `m`, budget from the environment.
    pub fn direct(symbol: SymbolSpec) -> Self {
        let pad_factor = symbol.m().max(1);
        Self {
            symbol,
            strategy: Strategy::Direct,
            pad_factor,
            budget: budget_from_env(),
        }
    }

    pub fn separable(
        symbol: SymbolSpec,
        expansion: Arc<SeparableExpansion>,
        partition: DyadicPartition,
    ) -> Result<Self> {
        if !symbol.flags().poly_homogeneous {
            return Err(Error::NotPolyHomogeneous(symbol.id().to_string()));
        }
        if expansion.m() != symbol.m() || expansion.d() != symbol.d() {
            return Err(Error::InvalidArgument(format!(
                "expansion of arity {} in d = {} does not match symbol `{}`",
                expansion.m(),
                expansion.d(),
                symbol.id()
            )));
        }
        let mut op = Self::direct(symbol);
        op.strategy = Strategy::Separable {
            expansion,
            partition,
        };
        Ok(op)
    }

    pub fn with_pad_factor(mut self, pad_factor: usize) -> Self {
        self.pad_factor = pad_factor;
        self
    }

    pub fn with_budget(mut self, budget: u128) -> Self {
        self.budget = budget;
        self
    }

    fn check_inputs(&self, fs: &[&Field]) -> Result<GridSpec> {
        if fs.len() != self.symbol.m() {
            return Err(Error::InvalidArgument(format!(
                "symbol `{}` takes {} inputs, got {}",
                self.symbol.id(),
                self.symbol.m(),
                fs.len()
            )));
        }
        let grid = *fs[0].grid();
        for f in &fs[1..] {
            if !grid.same_shape(f.grid()) {
                return Err(Error::GridMismatch(format!("{grid:?} vs {:?}", f.grid())));
            }
        }
        if grid.d() != self.symbol.d() {
            return Err(Error::GridMismatch(format!(
                "symbol dimension {} vs grid dimension {}",
                self.symbol.d(),
                grid.d()
            )));
        }
        if self.pad_factor < fs.len() {
            return Err(Error::PadTooSmall {
                pad: self.pad_factor,
                factors: fs.len(),
            });
        }
        Ok(grid)
    }

    /// Output grid: the input grid enlarged by the pad factor.
    pub fn output_grid(&self, input: &GridSpec) -> Result<GridSpec> {
        input.with_n(input.n() * self.pad_factor.next_power_of_two())
    }
}

fn check_budget(counts: impl Iterator<Item = usize>, budget: u128) -> Result<()> {
    let count = counts.fold(1u128, |acc, c| acc.saturating_mul(c as u128));
    if count > budget {
        return Err(Error::BudgetExceeded { count, budget });
    }
    Ok(())
}

/// Visits every tuple of indices `idx[j] < lens[j]` in row-major order.
fn for_each_tuple(lens: &[usize], mut visit: impl FnMut(&[usize])) {
    if lens.iter().any(|&l| l == 0) {
        return;
    }
    let mut idx = vec![0usize; lens.len()];
    loop {
        visit(&idx);
        let mut j = lens.len();
        loop {
            if j == 0 {
                return;
            }
            j -= 1;
            idx[j] += 1;
            if idx[j] < lens[j] {
                break;
            }
            idx[j] = 0;
        }
    }
}

/// Dispatches on the operator strategy.
pub fn apply(op: &OperatorSpec, fs: &[&Field]) -> Result<Field> {
    match op.strategy {
        Strategy::Direct => apply_direct(op, fs),
        Strategy::Separable { .. } => apply_separable(op, fs),
    }
}

/// Exhaustive evaluation over the active modes of the inputs.
///
/// Only modes above the active threshold enter, so the enumeration count and
/// the budget check use the product of active mode counts.
pub fn apply_direct(op: &OperatorSpec, fs: &[&Field]) -> Result<Field> {
    let grid = op.check_inputs(fs)?;
    let out_grid = op.output_grid(&grid)?;
    let actives: Vec<Vec<Mode>> = fs.iter().map(|f| dft_forward(f).active_modes()).collect();
    check_budget(actives.iter().map(Vec::len), op.budget)?;

    let (m, d) = (fs.len(), grid.d());
    let kappa = grid.wavenumber();
    let lens: Vec<usize> = actives.iter().map(Vec::len).collect();
    let mut out = Spectrum::zeros(out_grid);
    let mut xi = vec![0.0; m * d];
    let mut eta = vec![0i64; d];
    for_each_tuple(&lens, |idx| {
        eta.iter_mut().for_each(|e| *e = 0);
        let mut prod = Complex64::new(1.0, 0.0);
        for (j, &i) in idx.iter().enumerate() {
            let mode = &actives[j][i];
            prod *= mode.value;
            for c in 0..d {
                xi[j * d + c] = kappa * mode.freq[c] as f64;
                eta[c] += mode.freq[c];
            }
        }
        if let Some(k) = out_grid.index_of(&eta) {
            out.coeffs_mut()[k] += op.symbol.eval(&xi) * prod;
        }
    });
    Ok(dft_inverse(&out))
}

/// Fast path through the separable expansion.
///
/// For each term `l` and slot `j` the input spectrum is multiplied by
/// `Σ_s F_{l,j}(2^{-s} ξ) ψ(2^{-s} ξ)`; summing the scales per slot before
/// taking products is the same bilinear sum as looping over scale tuples.
pub fn apply_separable(op: &OperatorSpec, fs: &[&Field]) -> Result<Field> {
    let (expansion, partition) = match &op.strategy {
        Strategy::Separable {
            expansion,
            partition,
        } => (expansion, partition),
        Strategy::Direct => return Err(Error::MissingExpansion),
    };
    let grid = op.check_inputs(fs)?;
    if let Some(slot) = first_uncovered(fs, partition) {
        return Err(Error::UncoveredSpectrum { slot });
    }
    let out_grid = op.output_grid(&grid)?;
    let spectra: Vec<Spectrum> = fs.iter().map(|f| dft_forward(f)).collect();
    let mut acc = vec![Complex64::new(0.0, 0.0); out_grid.len()];
    for (l, term) in expansion.terms().iter().enumerate() {
        let mut prod = vec![Complex64::new(term.coefficient, 0.0); out_grid.len()];
        for (j, s) in spectra.iter().enumerate() {
            let filtered = s.map_modes(|freq| {
                let x: Vec<f64> = freq.iter().map(|&k| k as f64).collect();
                let r = x.iter().map(|c| c * c).sum::<f64>().sqrt();
                let mut g = 0.0;
                for sc in partition.scales() {
                    let psi = partition.psi(sc, r);
                    if psi != 0.0 {
                        let t = 2f64.powi(-sc);
                        let scaled: Vec<f64> = x.iter().map(|c| c * t).collect();
                        g += psi * expansion.factor(l, j, &scaled);
                    }
                }
                Complex64::new(g, 0.0)
            });
            let up = resample(&dft_inverse(&filtered), out_grid.n())?;
            prod.iter_mut().zip(up.samples()).for_each(|(p, v)| *p *= v);
        }
        acc.iter_mut().zip(&prod).for_each(|(a, p)| *a += p);
    }
    Field::new(out_grid, acc)
}

/// `⟨T_a(f_1, …, f_m), φ⟩` by sparse enumeration, with `φ` on the input grid.
///
/// Uses `L^d Σ a(κξ) ∏ f̂_j(ξ_j) φ̂(-(ξ_1 + ⋯ + ξ_m))`: the first `m - 1`
/// slots and the modes of `φ` are enumerated, the last slot is looked up.
pub fn pair_direct(op: &OperatorSpec, fs: &[&Field], phi: &Field) -> Result<Complex64> {
    let grid = op.check_inputs(fs)?;
    if !grid.same_shape(phi.grid()) {
        return Err(Error::GridMismatch(format!("{grid:?} vs {:?}", phi.grid())));
    }
    let (m, d) = (fs.len(), grid.d());
    let kappa = grid.wavenumber();
    // repeated inputs (e.g. d copies of u) are transformed once
    let mut spectra: Vec<Spectrum> = Vec::with_capacity(m);
    let mut which = Vec::with_capacity(m);
    for (j, f) in fs.iter().enumerate() {
        match fs[..j].iter().position(|g| std::ptr::eq(*g, *f)) {
            Some(i) => which.push(which[i]),
            None => {
                which.push(spectra.len());
                spectra.push(dft_forward(f));
            }
        }
    }
    let mut actives: Vec<Vec<Mode>> = which[..m - 1].iter().map(|&i| spectra[i].active_modes()).collect();
    actives.push(dft_forward(phi).active_modes());
    check_budget(actives.iter().map(Vec::len), op.budget)?;
    let last = &spectra[which[m - 1]];

    let lens: Vec<usize> = actives.iter().map(Vec::len).collect();
    let mut total = Complex64::new(0.0, 0.0);
    let mut xi = vec![0.0; m * d];
    let mut tail = vec![0i64; d];
    for_each_tuple(&lens, |idx| {
        let phi_mode = &actives[m - 1][idx[m - 1]];
        // ξ_m = -ζ - (ξ_1 + ⋯ + ξ_{m-1})
        for c in 0..d {
            tail[c] = -phi_mode.freq[c];
        }
        let mut prod = phi_mode.value;
        for (j, &i) in idx[..m - 1].iter().enumerate() {
            let mode = &actives[j][i];
            prod *= mode.value;
            for c in 0..d {
                xi[j * d + c] = kappa * mode.freq[c] as f64;
                tail[c] -= mode.freq[c];
            }
        }
        let f_last = last.coeff(&tail);
        if f_last.norm() == 0.0 {
            return;
        }
        for c in 0..d {
            xi[(m - 1) * d + c] = kappa * tail[c] as f64;
        }
        total += op.symbol.eval(&xi) * prod * f_last;
    });
    Ok(total * grid.volume())
}

/// Reduced symbol `∏_i σ(e_{ℓ_i}, ξ_2, …, ξ_m)`, independent of `ξ_1`.
fn reduced_symbol(sigma: &SymbolSpec, ells: &[usize]) -> SymbolSpec {
    let (m, d) = (sigma.m(), sigma.d());
    let base = sigma.clone();
    let ells = ells.to_vec();
    SymbolSpec::from_fn(
        format!("reduced({},{ells:?})", sigma.id()),
        m,
        d,
        SymbolFlags::default(),
        ZeroRule::Evaluate,
        move |xi| {
            let mut arg = xi.to_vec();
            ells.iter()
                .map(|&l| {
                    for c in 0..d {
                        arg[c] = if c == l { 1.0 } else { 0.0 };
                    }
                    base.eval(&arg)
                })
                .product()
        },
    )
}

/// `⟨T_{σ^k}(f_1, …, f_m), φ⟩` through the alternating rewrite
/// `σ(ξ_1, …, ξ_m) = σ(ξ_1 + ⋯ + ξ_m, ξ_2, …, ξ_m)`.
///
/// Expanding `σ^k` over `(ℓ_1, …, ℓ_k) ∈ {1..d}^k` leaves the output-frequency
/// factors `(κη)_{ℓ_1} ⋯ (κη)_{ℓ_k}`, which move onto `φ` as
/// `i^k ⟨T_{C_ℓ}(f), ∂_{ℓ_1} ⋯ ∂_{ℓ_k} φ⟩`.
pub fn pair_with_transfer(sigma: &SymbolSpec, k: u32, fs: &[&Field], phi: &Field) -> Result<Complex64> {
    if !probe_alternating(sigma, 32, 0x5eed) {
        return Err(Error::NotAlternating(sigma.id().to_string()));
    }
    let d = sigma.d();
    let template = OperatorSpec::direct(sigma.clone());
    let grid = template.check_inputs(fs)?;
    if !grid.same_shape(phi.grid()) {
        return Err(Error::GridMismatch(format!("{grid:?} vs {:?}", phi.grid())));
    }
    let out_grid = template.output_grid(&grid)?;
    let i_k = Complex64::new(0.0, 1.0).powu(k);
    let lens = vec![d; k as usize];
    let mut tuples = Vec::new();
    if k == 0 {
        tuples.push(Vec::new());
    } else {
        for_each_tuple(&lens, |idx| tuples.push(idx.to_vec()));
    }
    let mut total = Complex64::new(0.0, 0.0);
    for ells in tuples {
        let mut orders = vec![0usize; d];
        ells.iter().for_each(|&l| orders[l] += 1);
        let test = resample(&spectral_partial(phi, &orders)?, out_grid.n())?;
        let op = OperatorSpec {
            symbol: reduced_symbol(sigma, &ells),
            ..template.clone()
        };
        let g = apply_direct(&op, fs)?;
        total += pair(&g, &test)?;
    }
    Ok(i_k * total)
}
