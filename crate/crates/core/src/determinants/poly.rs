//! Multivariate polynomials with exact rational coefficients.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use rand::Rng;

/// Polynomial in `d` variables. Zero coefficients are never stored.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PolyField {
    d: usize,
    terms: BTreeMap<Vec<u32>, BigRational>,
}

pub fn rational(num: i64, den: i64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

impl PolyField {
    pub fn zero(d: usize) -> Self {
        Self {
            d,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(d: usize, c: BigRational) -> Self {
        Self::monomial(vec![0; d], c)
    }

    pub fn one(d: usize) -> Self {
        Self::constant(d, BigRational::one())
    }

    /// The coordinate `x_i` (0-based).
    pub fn var(d: usize, i: usize) -> Self {
        let mut e = vec![0; d];
        e[i] = 1;
        Self::monomial(e, BigRational::one())
    }

    pub fn monomial(exponents: Vec<u32>, c: BigRational) -> Self {
        let mut p = Self::zero(exponents.len());
        if !c.is_zero() {
            p.terms.insert(exponents, c);
        }
        p
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn terms(&self) -> &BTreeMap<Vec<u32>, BigRational> {
        &self.terms
    }

    pub fn term_count(&self) -> usize {
        self.terms.len()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Total degree; 0 for the zero polynomial.
    pub fn degree(&self) -> u32 {
        self.terms.keys().map(|e| e.iter().sum()).max().unwrap_or(0)
    }

    fn add_term(&mut self, e: Vec<u32>, c: BigRational) {
        if c.is_zero() {
            return;
        }
        match self.terms.entry(e) {
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(c);
            }
            std::collections::btree_map::Entry::Occupied(mut o) => {
                *o.get_mut() += c;
                if o.get().is_zero() {
                    o.remove();
                }
            }
        }
    }

    pub fn scale(&self, c: &BigRational) -> Self {
        if c.is_zero() {
            return Self::zero(self.d);
        }
        Self {
            d: self.d,
            terms: self.terms.iter().map(|(e, v)| (e.clone(), v * c)).collect(),
        }
    }

    /// `∂/∂x_i` (0-based).
    pub fn derivative(&self, i: usize) -> Self {
        let mut out = Self::zero(self.d);
        for (e, c) in &self.terms {
            if e[i] == 0 {
                continue;
            }
            let mut e2 = e.clone();
            e2[i] -= 1;
            out.add_term(e2, c * BigRational::from_integer(BigInt::from(e[i])));
        }
        out
    }

    pub fn eval(&self, x: &[BigRational]) -> BigRational {
        self.terms
            .iter()
            .map(|(e, c)| {
                e.iter()
                    .zip(x)
                    .fold(c.clone(), |acc, (&k, xi)| acc * num_traits::pow(xi.clone(), k as usize))
            })
            .fold(BigRational::zero(), |a, b| a + b)
    }

    /// Random polynomial of total degree at most `degree` with `terms`
    /// monomials and coefficients `p/q`, `|p| <= 5`, `1 <= q <= 4`.
    pub fn random<R: Rng>(d: usize, degree: u32, terms: usize, rng: &mut R) -> Self {
        let mut p = Self::zero(d);
        for _ in 0..terms {
            let mut e = vec![0u32; d];
            let mut left = rng.gen_range(0..=degree);
            for slot in e.iter_mut() {
                let k = rng.gen_range(0..=left);
                *slot = k;
                left -= k;
            }
            // spread leftover degree onto a random variable
            e[rng.gen_range(0..d)] += left;
            let num = rng.gen_range(-5..=5);
            let den = rng.gen_range(1..=4);
            p.add_term(e, rational(num, den));
        }
        p
    }
}

impl Add for &PolyField {
    type Output = PolyField;
    fn add(self, rhs: &PolyField) -> PolyField {
        let mut out = self.clone();
        for (e, c) in &rhs.terms {
            out.add_term(e.clone(), c.clone());
        }
        out
    }
}

impl Sub for &PolyField {
    type Output = PolyField;
    fn sub(self, rhs: &PolyField) -> PolyField {
        let mut out = self.clone();
        for (e, c) in &rhs.terms {
            out.add_term(e.clone(), -c.clone());
        }
        out
    }
}

impl Neg for &PolyField {
    type Output = PolyField;
    fn neg(self) -> PolyField {
        PolyField {
            d: self.d,
            terms: self.terms.iter().map(|(e, c)| (e.clone(), -c.clone())).collect(),
        }
    }
}

impl Mul for &PolyField {
    type Output = PolyField;
    fn mul(self, rhs: &PolyField) -> PolyField {
        let mut out = PolyField::zero(self.d);
        for (e1, c1) in &self.terms {
            for (e2, c2) in &rhs.terms {
                let e: Vec<u32> = e1.iter().zip(e2).map(|(a, b)| a + b).collect();
                out.add_term(e, c1 * c2);
            }
        }
        out
    }
}

impl fmt::Display for PolyField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (k, (e, c)) in self.terms.iter().rev().enumerate() {
            let sign = if c.is_negative() { "-" } else { "+" };
            if k == 0 {
                if c.is_negative() {
                    write!(f, "-")?;
                }
            } else {
                write!(f, " {sign} ")?;
            }
            write!(f, "{}", c.abs())?;
            for (i, &p) in e.iter().enumerate() {
                match p {
                    0 => {}
                    1 => write!(f, "*x{}", i + 1)?,
                    _ => write!(f, "*x{}^{p}", i + 1)?,
                }
            }
        }
        Ok(())
    }
}

/// All permutations of `0..d` with their signs.
pub fn permutations(d: usize) -> Vec<(Vec<usize>, i32)> {
    fn rec(prefix: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<(Vec<usize>, i32)>) {
        let d = used.len();
        if prefix.len() == d {
            let mut inversions = 0;
            for a in 0..d {
                for b in a + 1..d {
                    if prefix[a] > prefix[b] {
                        inversions += 1;
                    }
                }
            }
            out.push((prefix.clone(), if inversions % 2 == 0 { 1 } else { -1 }));
            return;
        }
        for v in 0..d {
            if !used[v] {
                used[v] = true;
                prefix.push(v);
                rec(prefix, used, out);
                prefix.pop();
                used[v] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), &mut vec![false; d], &mut out);
    out
}

/// Determinant by cofactor expansion along the first row. `m` must be
/// non-empty, since the variable count is read from its entries.
pub fn det(m: &[Vec<PolyField>]) -> PolyField {
    let n = m.len();
    let vars = m[0][0].d();
    match n {
        1 => m[0][0].clone(),
        _ => {
            let mut total = PolyField::zero(vars);
            for c in 0..n {
                if m[0][c].is_zero() {
                    continue;
                }
                let minor: Vec<Vec<PolyField>> = m[1..]
                    .iter()
                    .map(|row| {
                        row.iter()
                            .enumerate()
                            .filter(|&(k, _)| k != c)
                            .map(|(_, p)| p.clone())
                            .collect()
                    })
                    .collect();
                let term = &m[0][c] * &det(&minor);
                total = if c % 2 == 0 { &total + &term } else { &total - &term };
            }
            total
        }
    }
}

/// `m` with the listed rows and columns removed.
pub fn minor(m: &[Vec<PolyField>], rows: &[usize], cols: &[usize]) -> Vec<Vec<PolyField>> {
    m.iter()
        .enumerate()
        .filter(|(i, _)| !rows.contains(i))
        .map(|(_, row)| {
            row.iter()
                .enumerate()
                .filter(|(j, _)| !cols.contains(j))
                .map(|(_, p)| p.clone())
                .collect()
        })
        .collect()
}
