//! Forward-mode automatic differentiation with multi-component dual numbers.

use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use nalgebra::DMatrix;
use num_traits::{One, Zero};

use super::scalar::{Real, Scalar};
use crate::error::{Error, Result};

/// A value together with its partial derivatives with respect to every
/// independent variable of one evaluation.
///
/// An empty `derivs` vector denotes a constant; it combines with variables of
/// any width as if it were all zeros. Comparisons look at `value` only.
#[derive(Clone, Debug)]
pub struct Dual<R> {
    pub value: R,
    pub derivs: Vec<R>,
}

impl<R: Real> Dual<R> {
    pub fn constant(value: R) -> Self {
        Self {
            value,
            derivs: Vec::new(),
        }
    }

    /// Independent variable `index` out of `n`, with unit seed.
    pub fn variable(value: R, index: usize, n: usize) -> Self {
        Self::seeded(value, index, n, R::one())
    }

    /// Independent variable with seed `seed` in slot `index`.
    pub fn seeded(value: R, index: usize, n: usize, seed: R) -> Self {
        let mut derivs = vec![R::zero(); n];
        derivs[index] = seed;
        Self { value, derivs }
    }

    /// One variable per entry of `x`.
    pub fn variables(x: &[R]) -> Vec<Self> {
        let n = x.len();
        x.iter()
            .enumerate()
            .map(|(i, &v)| Self::variable(v, i, n))
            .collect()
    }

    pub fn deriv(&self, index: usize) -> R {
        self.derivs.get(index).copied().unwrap_or_else(R::zero)
    }

    fn map_derivs(&self, factor: R) -> Vec<R> {
        self.derivs.iter().map(|&d| d * factor).collect()
    }

    /// `a * da + b * db`, treating a missing slot as zero.
    fn combine(a: R, da: &[R], b: R, db: &[R]) -> Vec<R> {
        let n = da.len().max(db.len());
        (0..n)
            .map(|i| {
                let x = da.get(i).map_or(R::zero(), |&d| a * d);
                let y = db.get(i).map_or(R::zero(), |&d| b * d);
                x + y
            })
            .collect()
    }

    fn nan_like(&self) -> Self {
        Self {
            value: R::nan(),
            derivs: vec![R::nan(); self.derivs.len().max(1)],
        }
    }
}

impl<R: Real> PartialEq for Dual<R> {
    fn eq(&self, other: &Self) -> bool {
        self.value == other.value
    }
}

impl<R: Real> PartialOrd for Dual<R> {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        self.value.partial_cmp(&other.value)
    }
}

impl<R: Real> fmt::Display for Dual<R> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} + {:?}ε", self.value, self.derivs)
    }
}

impl<R: Real> Add for Dual<R> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self {
            value: self.value + rhs.value,
            derivs: Self::combine(R::one(), &self.derivs, R::one(), &rhs.derivs),
        }
    }
}

impl<R: Real> Sub for Dual<R> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Self {
            value: self.value - rhs.value,
            derivs: Self::combine(R::one(), &self.derivs, -R::one(), &rhs.derivs),
        }
    }
}

impl<R: Real> Mul for Dual<R> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        Self {
            value: self.value * rhs.value,
            derivs: Self::combine(rhs.value, &self.derivs, self.value, &rhs.derivs),
        }
    }
}

impl<R: Real> Div for Dual<R> {
    type Output = Self;
    fn div(self, rhs: Self) -> Self {
        let inv = R::one() / rhs.value;
        let value = self.value * inv;
        Self {
            value,
            derivs: Self::combine(inv, &self.derivs, -value * inv, &rhs.derivs),
        }
    }
}

impl<R: Real> Neg for Dual<R> {
    type Output = Self;
    fn neg(self) -> Self {
        Self {
            value: -self.value,
            derivs: self.derivs.into_iter().map(|d| -d).collect(),
        }
    }
}

impl<R: Real> Zero for Dual<R> {
    fn zero() -> Self {
        Self::constant(R::zero())
    }
    fn is_zero(&self) -> bool {
        self.value.is_zero() && self.derivs.iter().all(|d| d.is_zero())
    }
}

impl<R: Real> One for Dual<R> {
    fn one() -> Self {
        Self::constant(R::one())
    }
}

impl<R: Real> Scalar for Dual<R> {
    fn cst(x: f64) -> Self {
        Self::constant(R::cst(x))
    }

    fn re(&self) -> f64 {
        self.value.as_f64()
    }

    fn exp(self) -> Self {
        let e = self.value.exp();
        Self {
            value: e,
            derivs: self.map_derivs(e),
        }
    }

    fn ln(self) -> Self {
        if self.value <= R::zero() {
            return self.nan_like();
        }
        Self {
            value: self.value.ln(),
            derivs: self.map_derivs(self.value.recip()),
        }
    }

    fn sqrt(self) -> Self {
        if self.value < R::zero() || (self.value.is_zero() && !self.derivs.is_empty()) {
            return self.nan_like();
        }
        let s = self.value.sqrt();
        let half = R::cst(0.5);
        Self {
            value: s,
            derivs: self.map_derivs(half / s),
        }
    }

    fn powf(self, e: f64) -> Self {
        let e = R::cst(e);
        let v = self.value.powf(e);
        let dv = e * self.value.powf(e - R::one());
        Self {
            value: v,
            derivs: self.map_derivs(dv),
        }
    }

    fn powi(self, n: i32) -> Self {
        let v = self.value.powi(n);
        let dv = if n == 0 {
            R::zero()
        } else {
            R::cst(n as f64) * self.value.powi(n - 1)
        };
        Self {
            value: v,
            derivs: self.map_derivs(dv),
        }
    }

    fn is_finite(&self) -> bool {
        self.value.is_finite() && self.derivs.iter().all(|d| d.is_finite())
    }
}

fn check_finite<R: Real>(d: &Dual<R>, what: &str) -> Result<()> {
    if d.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "{what} is not finite (value {}); a log or sqrt argument was non-positive",
            d.value
        )))
    }
}

/// Gradient of a scalar function by one forward sweep.
pub fn gradient<R, F>(f: F, x: &[R]) -> Result<Vec<R>>
where
    R: Real,
    F: Fn(&[Dual<R>]) -> Dual<R>,
{
    let out = f(&Dual::variables(x));
    check_finite(&out, "function value")?;
    Ok((0..x.len()).map(|i| out.deriv(i)).collect())
}

/// Jacobian (rows = outputs) of a vector function by one forward sweep.
pub fn jacobian<R, F>(f: F, x: &[R]) -> Result<DMatrix<R>>
where
    R: Real,
    F: Fn(&[Dual<R>]) -> Vec<Dual<R>>,
{
    try_jacobian(|v| Ok(f(v)), x)
}

/// [`jacobian`] for functions that may fail.
pub fn try_jacobian<R, F>(f: F, x: &[R]) -> Result<DMatrix<R>>
where
    R: Real,
    F: Fn(&[Dual<R>]) -> Result<Vec<Dual<R>>>,
{
    let out = f(&Dual::variables(x))?;
    jacobian_from_duals(&out, x.len())
}

pub(crate) fn jacobian_from_duals<R: Real>(out: &[Dual<R>], n: usize) -> Result<DMatrix<R>> {
    for (i, d) in out.iter().enumerate() {
        check_finite(d, &format!("output {i}"))?;
    }
    Ok(DMatrix::from_fn(out.len(), n, |i, j| out[i].deriv(j)))
}
