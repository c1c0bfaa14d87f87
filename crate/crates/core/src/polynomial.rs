//! Sparse multivariate polynomials with exact arithmetic over a coefficient ring.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

/// Coefficient ring for [`Polynomial`].
pub trait Coefficient:
    Clone
    + PartialEq
    + fmt::Debug
    + Zero
    + One
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Neg<Output = Self>
    + Send
    + Sync
{
    fn half() -> Self;
    fn from_i64(v: i64) -> Self;
    fn to_f64(&self) -> f64;
}

impl Coefficient for f64 {
    fn half() -> Self {
        0.5
    }
    fn from_i64(v: i64) -> Self {
        v as f64
    }
    fn to_f64(&self) -> f64 {
        *self
    }
}

impl Coefficient for BigRational {
    fn half() -> Self {
        BigRational::new(BigInt::from(1), BigInt::from(2))
    }
    fn from_i64(v: i64) -> Self {
        BigRational::from_integer(BigInt::from(v))
    }
    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }
}

/// Polynomial in `nvars` variables; each term is keyed by its exponent vector.
#[derive(Clone, PartialEq)]
pub struct Polynomial<C: Coefficient = f64> {
    nvars: usize,
    terms: BTreeMap<Vec<u32>, C>,
}

impl<C: Coefficient> fmt::Debug for Polynomial<C> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let mut first = true;
        for (e, c) in &self.terms {
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            write!(f, "{c:?}")?;
            for (k, p) in e.iter().enumerate() {
                if *p > 0 {
                    write!(f, "·v{k}^{p}")?;
                }
            }
        }
        Ok(())
    }
}

impl<C: Coefficient> Polynomial<C> {
    pub fn zero(nvars: usize) -> Self {
        Self { nvars, terms: BTreeMap::new() }
    }

    pub fn constant(nvars: usize, c: C) -> Self {
        Self::monomial(nvars, vec![0; nvars], c)
    }

    /// The coordinate function `v_k`.
    pub fn var(nvars: usize, k: usize) -> Self {
        assert!(k < nvars);
        let mut e = vec![0; nvars];
        e[k] = 1;
        Self::monomial(nvars, e, C::one())
    }

    pub fn monomial(nvars: usize, exponents: Vec<u32>, c: C) -> Self {
        assert_eq!(exponents.len(), nvars);
        let mut p = Self::zero(nvars);
        p.add_term(exponents, c);
        p
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn degree(&self) -> u32 {
        self.terms.keys().map(|e| e.iter().sum()).max().unwrap_or(0)
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Vec<u32>, &C)> {
        self.terms.iter()
    }

    fn add_term(&mut self, e: Vec<u32>, c: C) {
        if c.is_zero() {
            return;
        }
        match self.terms.get_mut(&e) {
            Some(existing) => {
                let sum = existing.clone() + c;
                if sum.is_zero() {
                    self.terms.remove(&e);
                } else {
                    *existing = sum;
                }
            }
            None => {
                self.terms.insert(e, c);
            }
        }
    }

    pub fn scale(&self, c: &C) -> Self {
        let mut out = Self::zero(self.nvars);
        for (e, a) in &self.terms {
            out.add_term(e.clone(), a.clone() * c.clone());
        }
        out
    }

    /// Partial derivative with respect to `v_k`.
    pub fn derivative(&self, k: usize) -> Self {
        let mut out = Self::zero(self.nvars);
        for (e, c) in &self.terms {
            if e[k] == 0 {
                continue;
            }
            let mut e2 = e.clone();
            e2[k] -= 1;
            out.add_term(e2, c.clone() * C::from_i64(e[k] as i64));
        }
        out
    }

    /// `v_k · self`.
    pub fn mul_var(&self, k: usize) -> Self {
        let mut out = Self::zero(self.nvars);
        for (e, c) in &self.terms {
            let mut e2 = e.clone();
            e2[k] += 1;
            out.add_term(e2, c.clone());
        }
        out
    }

    pub fn evaluate(&self, point: &[C]) -> C {
        assert_eq!(point.len(), self.nvars);
        let mut acc = C::zero();
        for (e, c) in &self.terms {
            let mut term = c.clone();
            for (v, &p) in point.iter().zip(e) {
                for _ in 0..p {
                    term = term * v.clone();
                }
            }
            acc = acc + term;
        }
        acc
    }

    /// Floating-point evaluation regardless of the coefficient ring.
    pub fn evaluate_f64(&self, point: &[f64]) -> f64 {
        assert_eq!(point.len(), self.nvars);
        self.terms
            .iter()
            .map(|(e, c)| {
                e.iter().zip(point).fold(c.to_f64(), |acc, (&p, &v)| acc * v.powi(p as i32))
            })
            .sum()
    }

    pub fn to_f64(&self) -> Polynomial<f64> {
        let mut out = Polynomial::zero(self.nvars);
        for (e, c) in &self.terms {
            out.add_term(e.clone(), c.to_f64());
        }
        out
    }
}

impl<C: Coefficient> Add for &Polynomial<C> {
    type Output = Polynomial<C>;
    fn add(self, rhs: Self) -> Polynomial<C> {
        assert_eq!(self.nvars, rhs.nvars);
        let mut out = self.clone();
        for (e, c) in &rhs.terms {
            out.add_term(e.clone(), c.clone());
        }
        out
    }
}

impl<C: Coefficient> Sub for &Polynomial<C> {
    type Output = Polynomial<C>;
    fn sub(self, rhs: Self) -> Polynomial<C> {
        assert_eq!(self.nvars, rhs.nvars);
        let mut out = self.clone();
        for (e, c) in &rhs.terms {
            out.add_term(e.clone(), -c.clone());
        }
        out
    }
}

impl<C: Coefficient> Mul for &Polynomial<C> {
    type Output = Polynomial<C>;
    fn mul(self, rhs: Self) -> Polynomial<C> {
        assert_eq!(self.nvars, rhs.nvars);
        let mut out = Polynomial::zero(self.nvars);
        for (e1, c1) in &self.terms {
            for (e2, c2) in &rhs.terms {
                let e: Vec<u32> = e1.iter().zip(e2).map(|(a, b)| a + b).collect();
                out.add_term(e, c1.clone() * c2.clone());
            }
        }
        out
    }
}

impl<C: Coefficient> Neg for &Polynomial<C> {
    type Output = Polynomial<C>;
    fn neg(self) -> Polynomial<C> {
        self.scale(&-C::one())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arithmetic_and_cancellation() {
        let x = Polynomial::<f64>::var(3, 0);
        let y = Polynomial::<f64>::var(3, 1);
        let s = &x + &y;
        let d = &x - &y;
        let prod = &s * &d;
        let expected = &(&x * &x) - &(&y * &y);
        assert_eq!(prod, expected);
        assert!((&prod - &expected).is_zero());
        assert_eq!(prod.degree(), 2);
    }

    #[test]
    fn derivative_and_evaluation() {
        let x = Polynomial::<f64>::var(3, 0);
        let z = Polynomial::<f64>::var(3, 2);
        let f = &(&(&x * &x) * &z) + &Polynomial::constant(3, 2.0);
        assert_eq!(f.evaluate(&[3.0, 0.0, 2.0]), 20.0);
        assert_eq!(f.derivative(0).evaluate_f64(&[3.0, 0.0, 2.0]), 12.0);
        assert!(f.derivative(1).is_zero());
        assert_eq!(z.mul_var(2), &z * &z);
    }

    #[test]
    fn rational_half_is_exact() {
        let h = <BigRational as Coefficient>::half();
        let two = <BigRational as Coefficient>::from_i64(2);
        assert_eq!(h * two, BigRational::one());
    }
}
