//! Second-order forward-mode dual numbers over a fixed number of variables.

use std::ops::{Add, Div, Mul, Neg, Sub};

/// Scalar arithmetic shared by plain values and jets, so model formulas are
/// written once and evaluated either way.
pub trait Scalar:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
{
    fn constant(c: f64) -> Self;
    fn value(&self) -> f64;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    /// Applies a unary function given its value and first two derivatives.
    fn lift(self, f: f64, df: f64, d2f: f64) -> Self;

    fn powf(self, p: f64) -> Self {
        let x = self.value();
        self.lift(x.powf(p), p * x.powf(p - 1.0), p * (p - 1.0) * x.powf(p - 2.0))
    }
}

impl Scalar for f64 {
    fn constant(c: f64) -> Self {
        c
    }
    fn value(&self) -> f64 {
        *self
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn ln(self) -> Self {
        f64::ln(self)
    }
    fn lift(self, f: f64, _df: f64, _d2f: f64) -> Self {
        f
    }
    fn powf(self, p: f64) -> Self {
        f64::powf(self, p)
    }
}

/// Value, gradient and Hessian with respect to `N` variables.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet<const N: usize> {
    pub v: f64,
    pub g: [f64; N],
    pub h: [[f64; N]; N],
}

impl<const N: usize> Jet<N> {
    pub fn variable(value: f64, index: usize) -> Self {
        let mut j = Self::constant(value);
        j.g[index] = 1.0;
        j
    }

    /// Variable `index` if `Some`, otherwise a constant.
    pub fn maybe_variable(value: f64, index: Option<usize>) -> Self {
        match index {
            Some(i) => Self::variable(value, i),
            None => Self::constant(value),
        }
    }

    #[inline]
    fn chain(self, f: f64, df: f64, d2f: f64) -> Self {
        let mut out = Self::constant(f);
        for i in 0..N {
            out.g[i] = df * self.g[i];
            for j in 0..N {
                out.h[i][j] = df * self.h[i][j] + d2f * self.g[i] * self.g[j];
            }
        }
        out
    }
}

impl<const N: usize> Scalar for Jet<N> {
    fn constant(c: f64) -> Self {
        Self {
            v: c,
            g: [0.0; N],
            h: [[0.0; N]; N],
        }
    }
    fn value(&self) -> f64 {
        self.v
    }
    fn exp(self) -> Self {
        let e = self.v.exp();
        self.chain(e, e, e)
    }
    fn ln(self) -> Self {
        let x = self.v;
        self.chain(x.ln(), 1.0 / x, -1.0 / (x * x))
    }
    fn lift(self, f: f64, df: f64, d2f: f64) -> Self {
        self.chain(f, df, d2f)
    }
}

impl<const N: usize> Add for Jet<N> {
    type Output = Self;
    #[inline]
    fn add(mut self, o: Self) -> Self {
        self.v += o.v;
        for i in 0..N {
            self.g[i] += o.g[i];
            for j in 0..N {
                self.h[i][j] += o.h[i][j];
            }
        }
        self
    }
}

impl<const N: usize> Sub for Jet<N> {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        self + (-o)
    }
}

impl<const N: usize> Neg for Jet<N> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        self * -1.0
    }
}

impl<const N: usize> Mul for Jet<N> {
    type Output = Self;
    #[inline]
    fn mul(self, o: Self) -> Self {
        let mut out = Self::constant(self.v * o.v);
        for i in 0..N {
            out.g[i] = self.v * o.g[i] + o.v * self.g[i];
            for j in 0..N {
                out.h[i][j] = self.v * o.h[i][j]
                    + o.v * self.h[i][j]
                    + self.g[i] * o.g[j]
                    + o.g[i] * self.g[j];
            }
        }
        out
    }
}

impl<const N: usize> Div for Jet<N> {
    type Output = Self;
    #[inline]
    fn div(self, o: Self) -> Self {
        let x = o.v;
        self * o.chain(1.0 / x, -1.0 / (x * x), 2.0 / (x * x * x))
    }
}

impl<const N: usize> Add<f64> for Jet<N> {
    type Output = Self;
    #[inline]
    fn add(mut self, c: f64) -> Self {
        self.v += c;
        self
    }
}

impl<const N: usize> Sub<f64> for Jet<N> {
    type Output = Self;
    #[inline]
    fn sub(mut self, c: f64) -> Self {
        self.v -= c;
        self
    }
}

impl<const N: usize> Mul<f64> for Jet<N> {
    type Output = Self;
    #[inline]
    fn mul(mut self, c: f64) -> Self {
        self.v *= c;
        for i in 0..N {
            self.g[i] *= c;
            for j in 0..N {
                self.h[i][j] *= c;
            }
        }
        self
    }
}

impl<const N: usize> Div<f64> for Jet<N> {
    type Output = Self;
    #[inline]
    fn div(self, c: f64) -> Self {
        self * (1.0 / c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn f<T: Scalar>(x: T, y: T) -> T {
        (x * y).exp() / (x + 2.0) + (y.ln() * x).powf(1.5) - x * 3.0
    }

    #[test]
    fn jet_matches_finite_differences() {
        let (x0, y0) = (0.7, 1.9);
        let j = f(Jet::<2>::variable(x0, 0), Jet::<2>::variable(y0, 1));
        assert_relative_eq!(j.v, f(x0, y0), epsilon = 1e-14);
        let h = 1e-5;
        let fx = |x: f64, y: f64| f(x, y);
        let gx = (fx(x0 + h, y0) - fx(x0 - h, y0)) / (2.0 * h);
        let gy = (fx(x0, y0 + h) - fx(x0, y0 - h)) / (2.0 * h);
        assert_relative_eq!(j.g[0], gx, max_relative = 1e-8);
        assert_relative_eq!(j.g[1], gy, max_relative = 1e-8);
        let h = 1e-4;
        let hxy = (fx(x0 + h, y0 + h) - fx(x0 + h, y0 - h) - fx(x0 - h, y0 + h)
            + fx(x0 - h, y0 - h))
            / (4.0 * h * h);
        let hxx = (fx(x0 + h, y0) - 2.0 * fx(x0, y0) + fx(x0 - h, y0)) / (h * h);
        assert_relative_eq!(j.h[0][1], hxy, max_relative = 1e-6);
        assert_relative_eq!(j.h[1][0], hxy, max_relative = 1e-6);
        assert_relative_eq!(j.h[0][0], hxx, max_relative = 1e-6);
    }

    #[test]
    fn constants_carry_no_derivatives() {
        let c = Jet::<3>::maybe_variable(2.0, None);
        let x = Jet::<3>::variable(3.0, 1);
        let p = c * x;
        assert_eq!(p.g, [0.0, 2.0, 0.0]);
        assert_eq!(p.h, [[0.0; 3]; 3]);
    }
}
