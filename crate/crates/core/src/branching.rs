//! Exact analytics for the infinite-type branching process with offspring
//! intensity `u e^{-(x-y)^+} dy` on `[0, inf)`.
//!
//! Coefficients are exact big rationals up to [`N_MAX`]. Densities `f_n` and
//! expected counts `F_n` are evaluated in log space so that they stay finite
//! for large `n` and near criticality.

use std::cmp::Ordering;
use std::fmt;
use std::sync::OnceLock;

use num_bigint::{BigInt, BigUint};
use num_integer::binomial;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::Serialize;
use statrs::function::gamma::ln_gamma;

use crate::error::{check_range, Error, Result};
use crate::quadrature::integrate;

/// Size of the cached exact Catalan table.
pub const N_MAX: usize = 60;

/// Truncation point of the numeric operator tail, relative to `x`.
pub const TAIL_WIDTH: f64 = 60.0;

/// The Catalan triangle `c[k][n]`, `0 <= k <= n <= n_max`, built by recursion.
#[derive(Debug, Clone, PartialEq)]
pub struct CatalanTriangle {
    rows: Vec<Vec<BigUint>>,
}

impl CatalanTriangle {
    pub fn build(n_max: usize) -> Self {
        let mut rows: Vec<Vec<BigUint>> = vec![vec![BigUint::one()]];
        for n in 1..=n_max {
            let prev = &rows[n - 1];
            // c[k][n] = sum_{l=k-1}^{n-1} c[l][n-1]; a suffix sum over the previous row.
            let mut row = vec![BigUint::zero(); n + 1];
            let mut acc = BigUint::zero();
            for k in (1..=n).rev() {
                acc += &prev[k - 1];
                row[k] = acc.clone();
            }
            row[0] = acc;
            rows.push(row);
        }
        Self { rows }
    }

    pub fn n_max(&self) -> usize {
        self.rows.len() - 1
    }

    pub fn get(&self, k: usize, n: usize) -> Option<&BigUint> {
        self.rows.get(n).and_then(|r| r.get(k))
    }

    pub fn row(&self, n: usize) -> Option<&[BigUint]> {
        self.rows.get(n).map(Vec::as_slice)
    }
}

/// Shared table up to [`N_MAX`].
pub fn catalan_table() -> &'static CatalanTriangle {
    static TABLE: OnceLock<CatalanTriangle> = OnceLock::new();
    TABLE.get_or_init(|| CatalanTriangle::build(N_MAX))
}

/// `(k+1)/(n+1) * binom(2n-k, n)`, exact.
pub fn catalan_closed_form(k: usize, n: usize) -> Result<BigUint> {
    check_k_n(k, n)?;
    let b: BigUint = binomial(BigUint::from(2 * n - k), BigUint::from(n));
    Ok(b * BigUint::from(k + 1) / BigUint::from(n + 1))
}

/// `c_{k,n}`; served from the table when `n <= N_MAX`.
pub fn catalan(k: usize, n: usize) -> Result<BigUint> {
    check_k_n(k, n)?;
    match catalan_table().get(k, n) {
        Some(c) => Ok(c.clone()),
        None => catalan_closed_form(k, n),
    }
}

fn check_k_n(k: usize, n: usize) -> Result<()> {
    check_range("k", k as f64, k <= n, "0 <= k <= n")
}

fn ln_biguint(b: &BigUint) -> f64 {
    let bits = b.bits();
    if bits <= 1000 {
        b.to_f64().unwrap().ln()
    } else {
        let shift = bits - 64;
        (b >> shift).to_f64().unwrap().ln() + shift as f64 * std::f64::consts::LN_2
    }
}

fn ln_catalan(k: usize, n: usize) -> f64 {
    match catalan_table().get(k, n) {
        Some(c) => ln_biguint(c),
        None => {
            let (k, n) = (k as f64, n as f64);
            (k + 1.0).ln() - (n + 1.0).ln() + ln_gamma(2.0 * n - k + 1.0)
                - ln_gamma(n + 1.0)
                - ln_gamma(n - k + 1.0)
        }
    }
}

fn factorial(k: usize) -> BigUint {
    (1..=k).fold(BigUint::one(), |acc, i| acc * BigUint::from(i))
}

fn ratio(num: BigUint, den: BigUint) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

/// `q(x) e^{lambda x}` with exact rational `lambda` and coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpTerm {
    pub lambda: BigRational,
    pub coeffs: Vec<BigRational>,
}

/// A finite sum of polynomial-times-exponential terms. The `lambda = 0` term
/// is the plain polynomial part.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExpPolynomial {
    terms: Vec<ExpTerm>,
}

impl ExpPolynomial {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn polynomial(coeffs: Vec<BigRational>) -> Self {
        Self::with_exp(BigRational::zero(), coeffs)
    }

    pub fn with_exp(lambda: BigRational, coeffs: Vec<BigRational>) -> Self {
        let mut p = Self {
            terms: vec![ExpTerm { lambda, coeffs }],
        };
        p.normalize();
        p
    }

    /// `(x + 2) e^{x/2}`, the eigenfunction of `T` with eigenvalue 4.
    pub fn eigenfunction() -> Self {
        let int = |v: i64| BigRational::from_integer(BigInt::from(v));
        Self::with_exp(
            BigRational::new(BigInt::from(1), BigInt::from(2)),
            vec![int(2), int(1)],
        )
    }

    pub fn terms(&self) -> &[ExpTerm] {
        &self.terms
    }

    /// Coefficients of the plain polynomial part, lowest degree first.
    pub fn coeffs(&self) -> &[BigRational] {
        self.part(&BigRational::zero())
    }

    pub fn part(&self, lambda: &BigRational) -> &[BigRational] {
        self.terms
            .iter()
            .find(|t| &t.lambda == lambda)
            .map(|t| t.coeffs.as_slice())
            .unwrap_or(&[])
    }

    pub fn is_polynomial(&self) -> bool {
        self.terms.iter().all(|t| t.lambda.is_zero())
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    fn normalize(&mut self) {
        self.terms.sort_by(|a, b| a.lambda.cmp(&b.lambda));
        let mut merged: Vec<ExpTerm> = Vec::with_capacity(self.terms.len());
        for t in self.terms.drain(..) {
            match merged.last_mut() {
                Some(last) if last.lambda == t.lambda => {
                    if last.coeffs.len() < t.coeffs.len() {
                        last.coeffs.resize(t.coeffs.len(), BigRational::zero());
                    }
                    for (a, b) in last.coeffs.iter_mut().zip(t.coeffs) {
                        *a += b;
                    }
                }
                _ => merged.push(t),
            }
        }
        for t in &mut merged {
            while t.coeffs.last().is_some_and(Zero::is_zero) {
                t.coeffs.pop();
            }
        }
        merged.retain(|t| !t.coeffs.is_empty());
        self.terms = merged;
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut p = Self {
            terms: self.terms.iter().chain(&other.terms).cloned().collect(),
        };
        p.normalize();
        p
    }

    pub fn scale(&self, c: &BigRational) -> Self {
        let mut p = self.clone();
        for t in &mut p.terms {
            for a in &mut t.coeffs {
                *a *= c;
            }
        }
        p.normalize();
        p
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(&-BigRational::one()))
    }

    /// Largest absolute coefficient over all terms.
    pub fn max_abs_coeff(&self) -> f64 {
        self.terms
            .iter()
            .flat_map(|t| &t.coeffs)
            .map(|a| a.abs().to_f64().unwrap_or(f64::INFINITY))
            .fold(0.0, f64::max)
    }

    /// Floating evaluation with compensated summation within each term.
    pub fn eval(&self, x: f64) -> f64 {
        let mut total = Neumaier::default();
        for t in &self.terms {
            let mut s = Neumaier::default();
            let mut pow = 1.0;
            for a in &t.coeffs {
                s.add(a.to_f64().unwrap() * pow);
                pow *= x;
            }
            total.add(s.sum() * (t.lambda.to_f64().unwrap() * x).exp());
        }
        total.sum()
    }

    /// Exact evaluation of a pure polynomial at a rational point.
    pub fn eval_exact(&self, x: &BigRational) -> Result<BigRational> {
        if !self.is_polynomial() {
            return Err(Error::Unsupported(
                "exact evaluation of exponential terms".into(),
            ));
        }
        Ok(self
            .coeffs()
            .iter()
            .rev()
            .fold(BigRational::zero(), |acc, a| acc * x + a))
    }

    /// Exact image under `T g(x) = int_0^x g + int_x^inf e^{x-y} g(y) dy`.
    ///
    /// Every exponential rate must be below 1 so that the tail integral
    /// converges.
    pub fn apply_t(&self) -> Result<Self> {
        let one = BigRational::one();
        let mut out = Self::zero();
        for t in &self.terms {
            if t.lambda >= one {
                return Err(Error::Unsupported(format!(
                    "exponential rate {} >= 1 makes the tail integral diverge",
                    t.lambda
                )));
            }
            for (k, a) in t.coeffs.iter().enumerate() {
                if !a.is_zero() {
                    out = out.add(&t_monomial(k, &t.lambda).scale(a));
                }
            }
        }
        Ok(out)
    }
}

/// `T(x^k e^{lambda x})` in closed form.
fn t_monomial(k: usize, lambda: &BigRational) -> ExpPolynomial {
    let mu = lambda - BigRational::one();
    // falling[j] = k!/(k-j)!
    let mut falling = vec![BigRational::one(); k + 1];
    for j in 1..=k {
        falling[j] = &falling[j - 1] * BigRational::from_integer(BigInt::from(k + 1 - j));
    }
    let sign = |j: usize| if j.is_multiple_of(2) { BigRational::one() } else { -BigRational::one() };
    let pow = |b: &BigRational, e: usize| (0..e).fold(BigRational::one(), |acc, _| acc * b);

    if lambda.is_zero() {
        // x^{k+1}/(k+1) + sum_j k!/(k-j)! x^{k-j}
        let mut coeffs = vec![BigRational::zero(); k + 2];
        coeffs[k + 1] = BigRational::new(BigInt::one(), BigInt::from(k + 1));
        for j in 0..=k {
            coeffs[k - j] += &falling[j];
        }
        return ExpPolynomial::polynomial(coeffs);
    }

    let mut coeffs = vec![BigRational::zero(); k + 1];
    for j in 0..=k {
        let w = pow(lambda, j + 1).recip() - pow(&mu, j + 1).recip();
        coeffs[k - j] = sign(j) * &falling[j] * w;
    }
    let constant = -(sign(k) * &falling[k] / pow(lambda, k + 1));
    ExpPolynomial::with_exp(lambda.clone(), coeffs)
        .add(&ExpPolynomial::polynomial(vec![constant]))
}

#[derive(Default)]
struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    fn sum(&self) -> f64 {
        self.sum + self.comp
    }
}

/// `g_n(x) = sum_k c_{k,n} x^k / k!` with exact coefficients.
pub fn g_poly(n: usize) -> ExpPolynomial {
    let coeffs = (0..=n)
        .map(|k| ratio(catalan(k, n).unwrap(), factorial(k)))
        .collect();
    ExpPolynomial::polynomial(coeffs)
}

/// `T f (x)` by adaptive quadrature, with the tail cut at `x + TAIL_WIDTH`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NumericT {
    pub value: f64,
    /// Quadrature of the discarded tail over the next `TAIL_WIDTH`; an
    /// estimate of the truncation error for polynomially bounded `f`.
    pub tail_remainder: f64,
}

pub fn apply_t_numeric<F: Fn(f64) -> f64>(f: F, x: f64) -> Result<NumericT> {
    check_range("x", x, x >= 0.0, ">= 0")?;
    let tol = 1e-14;
    let head = integrate(&f, 0.0, x, 0.0, tol);
    let kernel = |y: f64| (x - y).exp() * f(y);
    let tail = integrate(kernel, x, x + TAIL_WIDTH, 0.0, tol);
    let rest = integrate(kernel, x + TAIL_WIDTH, x + 2.0 * TAIL_WIDTH, 0.0, tol);
    Ok(NumericT {
        value: head + tail,
        tail_remainder: rest.abs(),
    })
}

fn log_sum_exp(it: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = it.collect();
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|a| (a - m).exp()).sum::<f64>().ln()
}

/// `ln g_n(x)` by log-sum-exp over `k`.
pub fn ln_g(n: usize, x: f64) -> Result<f64> {
    check_range("x", x, x >= 0.0, ">= 0")?;
    if x == 0.0 {
        return Ok(ln_catalan(0, n));
    }
    let lx = x.ln();
    Ok(log_sum_exp(
        (0..=n).map(|k| ln_catalan(k, n) - ln_gamma(k as f64 + 1.0) + k as f64 * lx),
    ))
}

fn check_nru(n: usize, r: f64, u: f64) -> Result<()> {
    check_range("n", n as f64, n >= 1, ">= 1")?;
    check_range("R", r, r >= 0.0, ">= 0")?;
    check_range("u", u, u >= 0.0, ">= 0")
}

/// `ln f_n(R) = n ln u + ln g_{n-1}(R)`.
pub fn ln_f_n(n: usize, r: f64, u: f64) -> Result<f64> {
    check_nru(n, r, u)?;
    if u == 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(n as f64 * u.ln() + ln_g(n - 1, r)?)
}

/// Density of generation-`n` types at `R`: `u^n g_{n-1}(R)`.
pub fn f_n(n: usize, r: f64, u: f64) -> Result<f64> {
    ln_f_n(n, r, u).map(f64::exp)
}

/// `ln F_n(R)` where `F_n(R) = u^n sum_k c_{k,n-1} R^{k+1}/(k+1)!`.
pub fn ln_big_f_n(n: usize, r: f64, u: f64) -> Result<f64> {
    check_nru(n, r, u)?;
    if u == 0.0 || r == 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    let lr = r.ln();
    let m = n - 1;
    let s = log_sum_exp(
        (0..=m).map(|k| ln_catalan(k, m) - ln_gamma(k as f64 + 2.0) + (k + 1) as f64 * lr),
    );
    Ok(n as f64 * u.ln() + s)
}

/// Expected number of generation-`n` particles with type in `[0, R]`.
pub fn big_f_n(n: usize, r: f64, u: f64) -> Result<f64> {
    ln_big_f_n(n, r, u).map(f64::exp)
}

/// `F_n(R)` as an exact rational for rational `R`, `u`.
pub fn big_f_n_exact(n: usize, r: &BigRational, u: &BigRational) -> Result<BigRational> {
    check_range("n", n as f64, n >= 1, ">= 1")?;
    let m = n - 1;
    let mut r_pow = r.clone();
    let mut sum = BigRational::zero();
    for k in 0..=m {
        sum += ratio(catalan(k, m)?, factorial(k + 1)) * &r_pow;
        r_pow *= r;
    }
    let u_pow = (0..n).fold(BigRational::one(), |acc, _| acc * u);
    Ok(sum * u_pow)
}

/// `u e^{4ux} / (1 - 4u)`, an upper bound on `sum_n f_n(x)` for `u < 1/4`.
pub fn subcritical_bound(x: f64, u: f64) -> Result<f64> {
    check_subcritical(x, u)?;
    Ok(u * (4.0 * u * x).exp() / (1.0 - 4.0 * u))
}

/// `e^{4uR} / (4(1 - 4u))`, an upper bound on `sum_n F_n(R)` for `u < 1/4`.
pub fn subcritical_sum_bound(r: f64, u: f64) -> Result<f64> {
    check_subcritical(r, u)?;
    Ok((4.0 * u * r).exp() / (4.0 * (1.0 - 4.0 * u)))
}

fn check_subcritical(x: f64, u: f64) -> Result<()> {
    check_range("x", x, x >= 0.0, ">= 0")?;
    check_range("u", u, (0.0..0.25).contains(&u), "0 <= u < 1/4")
}

/// `ln` of [`supercritical_lower`].
pub fn ln_supercritical_lower(n: usize, r: f64, u: f64) -> Result<f64> {
    check_range("R", r, r >= 0.0, ">= 0")?;
    check_range("u", u, u >= 0.0, ">= 0")?;
    let n1 = (n + 1) as f64;
    Ok(n1 * u.ln() + n as f64 * 4f64.ln() + r.ln() - (2.0 * n1 * n1).ln())
}

/// `u^{n+1} 4^n R / (2(n+1)^2)`, a lower bound on `F_{n+1}(R)`.
pub fn supercritical_lower(n: usize, r: f64, u: f64) -> Result<f64> {
    ln_supercritical_lower(n, r, u).map(f64::exp)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Criticality {
    Subcritical,
    /// Exactly `u = 1/4`; no claim is made either way.
    Critical,
    Supercritical,
}

pub fn criticality(u: f64) -> Criticality {
    match u.partial_cmp(&0.25) {
        Some(Ordering::Less) => Criticality::Subcritical,
        Some(Ordering::Greater) => Criticality::Supercritical,
        _ => Criticality::Critical,
    }
}

impl fmt::Display for Criticality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Criticality::Subcritical => "subcritical",
            Criticality::Critical => "critical (no claim)",
            Criticality::Supercritical => "supercritical",
        })
    }
}

pub const TABLE_CSV_HEADER: &str = "n,R,u,f_n,F_n,subcritical_bound,supercritical_lower";

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BranchingRow {
    pub n: usize,
    #[serde(rename = "R")]
    pub r: f64,
    pub u: f64,
    pub f_n: f64,
    #[serde(rename = "F_n")]
    pub big_f_n: f64,
    /// `None` unless `u < 1/4`.
    pub subcritical_bound: Option<f64>,
    /// Lower bound for `F_n`, i.e. the formula at index `n - 1`.
    pub supercritical_lower: f64,
}

impl BranchingRow {
    pub fn csv(&self) -> String {
        let sub = self.subcritical_bound.map(|v| format!("{v:.10e}")).unwrap_or_default();
        format!(
            "{},{},{},{:.10e},{:.10e},{},{:.10e}",
            self.n, self.r, self.u, self.f_n, self.big_f_n, sub, self.supercritical_lower
        )
    }
}

pub fn branching_table(u: f64, r: f64, n_max: usize) -> Result<Vec<BranchingRow>> {
    check_nru(1, r, u)?;
    let sub = subcritical_bound(r, u).ok();
    (1..=n_max)
        .map(|n| {
            Ok(BranchingRow {
                n,
                r,
                u,
                f_n: f_n(n, r, u)?,
                big_f_n: big_f_n(n, r, u)?,
                subcritical_bound: sub,
                supercritical_lower: supercritical_lower(n - 1, r, u)?,
            })
        })
        .collect()
}
