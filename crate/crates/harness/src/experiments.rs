//! Boundedness scans, derivative-transfer scans and the Jacobian/Hessian
//! estimate experiments.
//!
//! Every experiment draws a seeded family, evaluates a ratio `R` for each
//! member, and repeats it along the dilation sweep `f ↦ f(2^t x)`.

use std::sync::Arc;
use std::time::Instant;

use mlab_core::determinants::{hessian_pairing, jacobian_pairing, run_identity_suite, DetReport};
use mlab_core::function_spaces::{bessel_norm, grad_sup_norms, lp_norm, sobolev_wkp_norm};
use mlab_core::grid::{dft_forward, dilate_dyadic, dilate_dyadic_onto, dilation_resolution, Field, GridSpec};
use mlab_core::lp_decomp::{separable_expand, AnnulusResolution, DyadicPartition, SeparableExpansion};
use mlab_core::multilinear::{apply, pair_with_transfer, OperatorSpec};
use mlab_core::symbols::{parse_symbol, SymbolSpec};

use crate::config::{ExperimentConfig, StrategyConfig};
use crate::error::{HarnessError, Result};
use crate::family::{member_seed, random_field, FieldProfile};
use crate::report::{invariance_spread, oscillation_growth, sweep_table, AuxSweep, Check, ReportRecord, Stats};

/// Bound on `s_rank / s_1` reported by `decompose-symbol`.
pub const DECAY_THRESHOLD: f64 = 1e-6;

/// Slot reserved for the test function `φ` in [`member_seed`].
const PHI_SLOT: usize = 1000;
/// Slot offset for the perturbations `w` in `v = u + ε w`.
const PERTURBATION_SLOT: usize = 2000;

/// All fields dilated by `2^t` onto one grid large enough for each.
pub fn dilate_together(fields: &[&Field], t: u32) -> Result<Vec<Field>> {
    let n = fields.iter().map(|f| dilation_resolution(f, t)).max().unwrap_or(0);
    fields
        .iter()
        .map(|f| Ok(dilate_dyadic_onto(f, t, n)?))
        .collect()
}

/// Smallest and largest lattice radius among the active modes.
fn radius_range(fields: &[Field]) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    for f in fields {
        for m in dft_forward(f).active_modes() {
            let r = m.freq.iter().map(|&k| (k * k) as f64).sum::<f64>().sqrt();
            lo = lo.min(r);
            hi = hi.max(r);
        }
    }
    (lo, hi)
}

fn family_member(cfg: &ExperimentConfig, grid: GridSpec, member: usize, slots: usize) -> Vec<Field> {
    let profile = FieldProfile::from(&cfg.family);
    (0..slots)
        .map(|j| random_field(member_seed(cfg.seed, member, j), grid, profile))
        .collect()
}

fn test_function(cfg: &ExperimentConfig, grid: GridSpec, member: usize) -> Field {
    // φ is real, low frequency and carries a mean so that φ ≡ const is included
    let profile = FieldProfile::new(0.0, false).band(None, Some(cfg.family.phi_radius));
    random_field(member_seed(cfg.seed, member, PHI_SLOT), grid, profile)
}

fn check_s(cfg: &ExperimentConfig, expected: f64, rule: &str) -> Result<()> {
    if (cfg.s - expected).abs() > 1e-12 {
        return Err(HarnessError::Config(format!("s must equal {rule} = {expected}, got {}", cfg.s)));
    }
    Ok(())
}

fn finish(mut record: ReportRecord, steps: &[u32], per_member: &[Vec<f64>], started: Instant) -> ReportRecord {
    record.ratios = per_member.iter().map(|r| r[0]).collect();
    record.stats = Stats::of(&record.ratios);
    record.sweep = sweep_table(steps, per_member);
    record.runtime_s = started.elapsed().as_secs_f64();
    record
}

struct Engine {
    symbol: SymbolSpec,
    expansion: Option<Arc<SeparableExpansion>>,
}

impl Engine {
    fn new(cfg: &ExperimentConfig, symbol: SymbolSpec) -> Result<Self> {
        let expansion = match cfg.strategy {
            StrategyConfig::Direct => None,
            StrategyConfig::Separable { rank } => Some(Arc::new(separable_expand(
                &symbol,
                AnnulusResolution::default(),
                rank,
                cfg.seed,
            )?)),
        };
        Ok(Self { symbol, expansion })
    }

    fn operator(&self, fields: &[Field]) -> Result<OperatorSpec> {
        match &self.expansion {
            None => Ok(OperatorSpec::direct(self.symbol.clone())),
            Some(e) => {
                let (lo, hi) = radius_range(fields);
                let partition = DyadicPartition::covering(lo, hi)?;
                Ok(OperatorSpec::separable(self.symbol.clone(), e.clone(), partition)?)
            }
        }
    }
}

/// `R = ‖T(f_1, …, f_m)‖_{L^r} / ∏ ‖f_j‖_{L^{p_j}}` over the family and the
/// dilation sweep.
///
/// Poly-homogeneous symbols must give a dilation-invariant `R` (checked
/// against `thresholds.invariance`); other symbols are held to
/// `thresholds.oscillation`.
pub fn boundedness_scan(cfg: &ExperimentConfig) -> Result<ReportRecord> {
    let started = Instant::now();
    cfg.validate()?;
    let grid = cfg.grid.spec()?;
    let m = cfg.m();
    let symbol = parse_symbol(&cfg.symbol, grid.d(), m)?;
    if symbol.m() != m {
        return Err(HarnessError::Config(format!(
            "symbol `{}` takes {} inputs but {m} exponents are given",
            cfg.symbol,
            symbol.m()
        )));
    }
    let invariant = symbol.flags().poly_homogeneous;
    let engine = Engine::new(cfg, symbol)?;
    let steps: Vec<u32> = cfg.dilation.steps().collect();
    let mut per_member = Vec::with_capacity(cfg.family.size);
    for member in 0..cfg.family.size {
        let fs = family_member(cfg, grid, member, m);
        let refs: Vec<&Field> = fs.iter().collect();
        let mut ratios = Vec::with_capacity(steps.len());
        for &t in &steps {
            let dilated = dilate_together(&refs, t)?;
            let drefs: Vec<&Field> = dilated.iter().collect();
            let out = apply(&engine.operator(&dilated)?, &drefs)?;
            let mut den = 1.0;
            for (f, &p) in dilated.iter().zip(&cfg.exponents) {
                den *= lp_norm(f, p)?;
            }
            ratios.push(lp_norm(&out, cfg.r)? / den);
        }
        per_member.push(ratios);
    }
    let mut record = ReportRecord::new("boundedness-scan", &cfg.id, &cfg.hash(), &cfg.symbol);
    record.push_check(if invariant {
        Check::at_most("sweep_spread", invariance_spread(&per_member), cfg.thresholds.invariance)
    } else {
        Check::at_most("sweep_growth", oscillation_growth(&per_member), cfg.thresholds.oscillation)
    });
    Ok(finish(record, &steps, &per_member, started))
}

/// `|⟨T_{σ^k}(f), φ⟩| / (∏ ‖f_j‖_{L^{p_j}_s} ‖φ‖_{W^{k, r_*}})` with
/// `s = k(m-1)/m`, the pairing evaluated through the derivative transfer.
/// `f` and `φ` are dilated together.
pub fn thm3_estimate_ratio(cfg: &ExperimentConfig) -> Result<ReportRecord> {
    let started = Instant::now();
    cfg.validate()?;
    let grid = cfg.grid.spec()?;
    let m = cfg.m();
    let k = cfg.k;
    check_s(cfg, k as f64 * (m as f64 - 1.0) / m as f64, "k(m-1)/m")?;
    let sigma = parse_symbol(&cfg.symbol, grid.d(), m)?;
    if sigma.m() != m {
        return Err(HarnessError::Config(format!("symbol `{}` must take {m} inputs", cfg.symbol)));
    }
    let r_star = cfg.r_star();
    let steps: Vec<u32> = cfg.dilation.steps().collect();
    let mut per_member = Vec::with_capacity(cfg.family.size);
    for member in 0..cfg.family.size {
        let mut fields = family_member(cfg, grid, member, m);
        fields.push(test_function(cfg, grid, member));
        let refs: Vec<&Field> = fields.iter().collect();
        let mut ratios = Vec::with_capacity(steps.len());
        for &t in &steps {
            let dilated = dilate_together(&refs, t)?;
            let (fs, phi) = dilated.split_at(m);
            let frefs: Vec<&Field> = fs.iter().collect();
            let num = pair_with_transfer(&sigma, k, &frefs, &phi[0])?.norm();
            let mut den = sobolev_wkp_norm(&phi[0], k as usize, r_star)?;
            for (f, &p) in fs.iter().zip(&cfg.exponents) {
                den *= bessel_norm(f, p, cfg.s)?;
            }
            ratios.push(num / den);
        }
        per_member.push(ratios);
    }
    let label = format!("{}^{k}", cfg.symbol);
    let mut record = ReportRecord::new("thm3-scan", &cfg.id, &cfg.hash(), &label);
    record.push_check(Check::at_most("sweep_growth", oscillation_growth(&per_member), cfg.thresholds.oscillation));
    Ok(finish(record, &steps, &per_member, started))
}

/// Which determinant an estimate experiment measures.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DetKind {
    Jacobian,
    Hessian,
}

impl DetKind {
    fn name(self) -> &'static str {
        match self {
            DetKind::Jacobian => "jacobian-estimate",
            DetKind::Hessian => "hessian-estimate",
        }
    }
}

/// Plain and difference ratios of the determinant estimates.
///
/// Jacobian: `u = (u_1, …, u_d)`, `s = 1 - 1/d`, test norm `‖∇φ‖_∞`.
/// Hessian: scalar `u`, `s = 2 - 2/d`, test norm `max |∂_i∂_j φ|`.
/// The pairings `∫ det(…) φ` use the calibrated Fourier form, which equals
/// the pointwise determinant for these trigonometric inputs. `u`, `v` and
/// `φ` are dilated together.
pub fn det_estimate(cfg: &ExperimentConfig, kind: DetKind) -> Result<ReportRecord> {
    let started = Instant::now();
    cfg.validate()?;
    let grid = cfg.grid.spec()?;
    let d = grid.d();
    if d < 2 || cfg.m() != d {
        return Err(HarnessError::Config(format!("need d >= 2 and {d} exponents")));
    }
    if (cfg.r - 1.0).abs() > 1e-12 {
        return Err(HarnessError::Config("the estimates use r = 1".into()));
    }
    let (comps, order) = match kind {
        DetKind::Jacobian => {
            check_s(cfg, 1.0 - 1.0 / d as f64, "1 - 1/d")?;
            (d, 1)
        }
        DetKind::Hessian => {
            check_s(cfg, 2.0 - 2.0 / d as f64, "2 - 2/d")?;
            (1, 2)
        }
    };
    let eps = cfg.family.perturbation;
    let profile = FieldProfile::from(&cfg.family);
    let pairing = |u: &[Field], phi: &Field| -> Result<f64> {
        Ok(match kind {
            DetKind::Jacobian => jacobian_pairing(&u.iter().collect::<Vec<_>>(), phi)?.re,
            DetKind::Hessian => hessian_pairing(&u[0], phi)?.re,
        })
    };
    // ‖u_j‖ in L^{p_j}_s, with u_j = u for the Hessian; repeats are reused
    let norms = |u: &[Field]| -> Result<Vec<f64>> {
        let mut out: Vec<f64> = Vec::with_capacity(cfg.m());
        for (j, &p) in cfg.exponents.iter().enumerate() {
            let c = j.min(comps - 1);
            let seen = (0..j).find(|&i| i.min(comps - 1) == c && cfg.exponents[i] == p);
            out.push(match seen {
                Some(i) => out[i],
                None => bessel_norm(&u[c], p, cfg.s)?,
            });
        }
        Ok(out)
    };

    let steps: Vec<u32> = cfg.dilation.steps().collect();
    let mut plain = Vec::with_capacity(cfg.family.size);
    let mut diff = Vec::with_capacity(cfg.family.size);
    let mut diff_numerators: Vec<f64> = Vec::new();
    for member in 0..cfg.family.size {
        let u = family_member(cfg, grid, member, comps);
        let v: Vec<Field> = if eps == 0.0 {
            u.clone()
        } else {
            u.iter()
                .enumerate()
                .map(|(j, uj)| {
                    let w = random_field(member_seed(cfg.seed, member, PERTURBATION_SLOT + j), grid, profile);
                    Ok(uj.axpy(eps.into(), &w)?)
                })
                .collect::<Result<_>>()?
        };
        let phi = test_function(cfg, grid, member);
        let mut all: Vec<&Field> = u.iter().chain(&v).collect();
        all.push(&phi);
        let (mut plain_r, mut diff_r) = (Vec::new(), Vec::new());
        for &t in &steps {
            let dilated = dilate_together(&all, t)?;
            let (ut, rest) = dilated.split_at(comps);
            let (vt, phi_t) = rest.split_at(comps);
            let test_norm = grad_sup_norms(&dilate_dyadic(&phi, t, true)?, order)?;
            let (pu, pv) = (pairing(ut, &phi_t[0])?, pairing(vt, &phi_t[0])?);
            let (nu, nv) = (norms(ut)?, norms(vt)?);
            let (prod_u, prod_v): (f64, f64) = (nu.iter().product(), nv.iter().product());
            plain_r.push(pu.abs() / (prod_u * test_norm));

            let numerator = (pu - pv).abs();
            diff_numerators.push(numerator);
            let uv: Vec<Field> = ut.iter().zip(vt).map(|(a, b)| a.sub(b)).collect::<std::result::Result<_, _>>()?;
            let nd = norms(&uv)?;
            let spread: f64 = (0..cfg.m()).map(|j| nd[j] / (nu[j] + nv[j])).sum();
            let rhs = (prod_u + prod_v) * spread * test_norm;
            diff_r.push(if numerator == 0.0 { 0.0 } else { numerator / rhs });
        }
        plain.push(plain_r);
        diff.push(diff_r);
    }

    let symbol = match kind {
        DetKind::Jacobian => "det",
        DetKind::Hessian => "det_pow:2",
    };
    let mut record = ReportRecord::new(kind.name(), &cfg.id, &cfg.hash(), symbol);
    record.push_check(Check::at_most("sweep_growth", oscillation_growth(&plain), cfg.thresholds.oscillation));
    if eps == 0.0 {
        let worst = diff_numerators.iter().copied().fold(0.0, f64::max);
        record.push_check(Check::at_most("difference_numerator", worst, 0.0));
    } else {
        record.push_check(Check::at_most(
            "difference_sweep_growth",
            oscillation_growth(&diff),
            cfg.thresholds.oscillation,
        ));
    }
    record.aux_sweeps.push(AuxSweep {
        name: "difference".into(),
        sweep: sweep_table(&steps, &diff),
    });
    Ok(finish(record, &steps, &plain, started))
}

pub fn jacobian_estimate(cfg: &ExperimentConfig) -> Result<ReportRecord> {
    det_estimate(cfg, DetKind::Jacobian)
}

pub fn hessian_estimate(cfg: &ExperimentConfig) -> Result<ReportRecord> {
    det_estimate(cfg, DetKind::Hessian)
}

/// Separable expansion of the configured symbol. The record's ratios are
/// the normalized singular values `s_i / s_1`.
pub fn decompose_symbol(cfg: &ExperimentConfig) -> Result<(ReportRecord, SeparableExpansion)> {
    let started = Instant::now();
    cfg.validate()?;
    let StrategyConfig::Separable { rank } = cfg.strategy else {
        return Err(HarnessError::Config("decompose-symbol needs a separable strategy with a rank".into()));
    };
    let sigma = parse_symbol(&cfg.symbol, cfg.grid.d, cfg.m())?;
    let e = separable_expand(&sigma, AnnulusResolution::default(), rank, cfg.seed)?;
    let s = e.spectrum();
    let mut record = ReportRecord::new("decompose-symbol", &cfg.id, &cfg.hash(), &cfg.symbol);
    record.ratios = s.iter().map(|v| v / s[0]).collect();
    record.stats = Stats::of(&record.ratios);
    let tail = s.get(rank - 1).copied().unwrap_or(0.0) / s[0];
    record.push_check(Check::at_most("coefficient_tail", tail, DECAY_THRESHOLD));
    record.runtime_s = started.elapsed().as_secs_f64();
    Ok((record, e))
}

/// Exact identity suite; one check per identity and dimension, valued by
/// the term count of the worst residual.
pub fn verify_identities(
    id: &str,
    dims: &[usize],
    instances: usize,
    seed: u64,
) -> Result<(ReportRecord, Vec<DetReport>)> {
    let started = Instant::now();
    let reports = run_identity_suite(dims, instances, seed)?;
    let mut record = ReportRecord::new("verify-identities", id, "", "polynomial");
    for r in &reports {
        record.push_check(Check::at_most(
            &format!("{}:d{}", r.identity, r.dimension),
            r.residual_terms as f64,
            0.0,
        ));
    }
    record.runtime_s = started.elapsed().as_secs_f64();
    Ok((record, reports))
}
