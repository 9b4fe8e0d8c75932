//! Scalar abstraction shared by plain complex evaluation and derivative jets.
//!
//! Kernel, support-function and extension code is written once against
//! [`Scalar`]; instantiating it with [`Jet2`] yields exact first and second
//! partial derivatives with respect to `N` real variables.

use num_complex::Complex64;
use std::fmt::Debug;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

pub type C64 = Complex64;

/// Shorthand constructor for a complex number.
pub const fn c64(re: f64, im: f64) -> C64 {
    Complex64::new(re, im)
}

pub trait Scalar:
    Copy
    + Debug
    + PartialEq
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
    + Send
    + Sync
{
    fn from_c64(c: C64) -> Self;
    /// Value part (the jet's zeroth-order term).
    fn value(&self) -> C64;
    fn conj(self) -> Self;
    /// Apply a holomorphic scalar function given its value and first two
    /// derivatives at `self.value()`.
    fn chain(self, f0: C64, f1: C64, f2: C64) -> Self;
    fn mulc(self, c: C64) -> Self;
    fn is_exact_zero(&self) -> bool;

    fn from_f64(x: f64) -> Self {
        Self::from_c64(c64(x, 0.0))
    }
    fn zero() -> Self {
        Self::from_f64(0.0)
    }
    fn one() -> Self {
        Self::from_f64(1.0)
    }
    fn scale_re(self, x: f64) -> Self {
        self.mulc(c64(x, 0.0))
    }
    fn re(self) -> Self {
        (self + self.conj()).scale_re(0.5)
    }
    fn abs2(self) -> Self {
        self * self.conj()
    }
    fn recip(self) -> Self {
        let v = self.value();
        let r = v.inv();
        self.chain(r, -r * r, 2.0 * r * r * r)
    }
    fn sqrt(self) -> Self {
        let v = self.value();
        let s = v.sqrt();
        self.chain(s, 0.5 / s, -0.25 / (s * v))
    }
    fn powf(self, p: f64) -> Self {
        let v = self.value();
        if v == C64::new(0.0, 0.0) {
            return Self::zero();
        }
        self.chain(
            v.powf(p),
            p * v.powf(p - 1.0),
            p * (p - 1.0) * v.powf(p - 2.0),
        )
    }
    fn ipow(self, k: u32) -> Self {
        let mut acc = Self::one();
        for _ in 0..k {
            acc *= self;
        }
        acc
    }
    fn exp(self) -> Self {
        let e = self.value().exp();
        self.chain(e, e, e)
    }
    /// Modulus of a complex-valued quantity as a (real-valued) scalar.
    fn abs(self) -> Self {
        self.abs2().sqrt()
    }
}

impl Scalar for C64 {
    #[inline]
    fn from_c64(c: C64) -> Self {
        c
    }
    #[inline]
    fn value(&self) -> C64 {
        *self
    }
    #[inline]
    fn conj(self) -> Self {
        Complex64::conj(&self)
    }
    #[inline]
    fn chain(self, f0: C64, _f1: C64, _f2: C64) -> Self {
        f0
    }
    #[inline]
    fn mulc(self, c: C64) -> Self {
        self * c
    }
    #[inline]
    fn is_exact_zero(&self) -> bool {
        self.re == 0.0 && self.im == 0.0
    }
    #[inline]
    fn recip(self) -> Self {
        self.inv()
    }
    #[inline]
    fn sqrt(self) -> Self {
        Complex64::sqrt(self)
    }
    #[inline]
    fn abs(self) -> Self {
        c64(self.norm(), 0.0)
    }
}

/// Second-order Taylor jet in `N` real variables with complex values.
///
/// `g[i]` is the first partial along variable `i`; `h[i][j]` the second
/// partial. Complex conjugation acts componentwise because all seeds are
/// real coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet2<const N: usize> {
    pub v: C64,
    pub g: [C64; N],
    pub h: [[C64; N]; N],
}

impl<const N: usize> Jet2<N> {
    pub fn constant(v: C64) -> Self {
        Self {
            v,
            g: [C64::new(0.0, 0.0); N],
            h: [[C64::new(0.0, 0.0); N]; N],
        }
    }

    /// Independent real variable number `i` with value `x`.
    pub fn var(x: f64, i: usize) -> Self {
        let mut j = Self::constant(c64(x, 0.0));
        j.g[i] = c64(1.0, 0.0);
        j
    }

    /// Complex coordinate `x + iy` with `x` seeded as variable `ix` and `y` as `iy`.
    pub fn complex_var(z: C64, ix: usize, iy: usize) -> Self {
        let mut j = Self::constant(z);
        j.g[ix] = c64(1.0, 0.0);
        j.g[iy] = c64(0.0, 1.0);
        j
    }
}

impl<const N: usize> Add for Jet2<N> {
    type Output = Self;
    #[inline]
    fn add(mut self, o: Self) -> Self {
        self += o;
        self
    }
}

impl<const N: usize> AddAssign for Jet2<N> {
    #[inline]
    fn add_assign(&mut self, o: Self) {
        self.v += o.v;
        for i in 0..N {
            self.g[i] += o.g[i];
            for j in 0..N {
                self.h[i][j] += o.h[i][j];
            }
        }
    }
}

impl<const N: usize> Sub for Jet2<N> {
    type Output = Self;
    #[inline]
    fn sub(mut self, o: Self) -> Self {
        self -= o;
        self
    }
}

impl<const N: usize> SubAssign for Jet2<N> {
    #[inline]
    fn sub_assign(&mut self, o: Self) {
        self.v -= o.v;
        for i in 0..N {
            self.g[i] -= o.g[i];
            for j in 0..N {
                self.h[i][j] -= o.h[i][j];
            }
        }
    }
}

impl<const N: usize> Neg for Jet2<N> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        self.mulc(c64(-1.0, 0.0))
    }
}

impl<const N: usize> Mul for Jet2<N> {
    type Output = Self;
    #[inline]
    fn mul(self, o: Self) -> Self {
        let mut r = Self::constant(self.v * o.v);
        for i in 0..N {
            r.g[i] = self.v * o.g[i] + o.v * self.g[i];
        }
        for i in 0..N {
            for j in 0..N {
                r.h[i][j] = self.v * o.h[i][j]
                    + o.v * self.h[i][j]
                    + self.g[i] * o.g[j]
                    + o.g[i] * self.g[j];
            }
        }
        r
    }
}

impl<const N: usize> MulAssign for Jet2<N> {
    #[inline]
    fn mul_assign(&mut self, o: Self) {
        *self = *self * o;
    }
}

impl<const N: usize> Div for Jet2<N> {
    type Output = Self;
    #[inline]
    fn div(self, o: Self) -> Self {
        self * o.recip()
    }
}

impl<const N: usize> Scalar for Jet2<N> {
    fn from_c64(c: C64) -> Self {
        Self::constant(c)
    }
    fn value(&self) -> C64 {
        self.v
    }
    fn conj(self) -> Self {
        let mut r = self;
        r.v = r.v.conj();
        for i in 0..N {
            r.g[i] = r.g[i].conj();
            for j in 0..N {
                r.h[i][j] = r.h[i][j].conj();
            }
        }
        r
    }
    fn chain(self, f0: C64, f1: C64, f2: C64) -> Self {
        let mut r = Self::constant(f0);
        for i in 0..N {
            r.g[i] = f1 * self.g[i];
        }
        for i in 0..N {
            for j in 0..N {
                r.h[i][j] = f1 * self.h[i][j] + f2 * self.g[i] * self.g[j];
            }
        }
        r
    }
    fn mulc(self, c: C64) -> Self {
        let mut r = self;
        r.v *= c;
        for i in 0..N {
            r.g[i] *= c;
            for j in 0..N {
                r.h[i][j] *= c;
            }
        }
        r
    }
    fn is_exact_zero(&self) -> bool {
        let z = |c: &C64| c.re == 0.0 && c.im == 0.0;
        z(&self.v) && self.g.iter().all(z) && self.h.iter().all(|row| row.iter().all(z))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    type J = Jet2<2>;

    #[test]
    fn product_and_quotient_rules() {
        let x = J::var(1.5, 0);
        let y = J::var(-0.5, 1);
        let f = x * x * y / (x + y);
        // f = x^2 y / (x + y); compare with central differences
        let e = |a: f64, b: f64| a * a * b / (a + b);
        let h = 1e-4;
        let fx = (e(1.5 + h, -0.5) - e(1.5 - h, -0.5)) / (2.0 * h);
        let fxy = (e(1.5 + h, -0.5 + h) - e(1.5 + h, -0.5 - h) - e(1.5 - h, -0.5 + h)
            + e(1.5 - h, -0.5 - h))
            / (4.0 * h * h);
        assert!((f.v.re - e(1.5, -0.5)).abs() < 1e-14);
        assert!((f.g[0].re - fx).abs() < 1e-7);
        assert!((f.h[0][1].re - fxy).abs() < 1e-5);
        assert!((f.h[0][1] - f.h[1][0]).norm() < 1e-12);
    }

    #[test]
    fn conj_of_complex_coordinate_is_antiholomorphic() {
        // z = x + i y; dz/dzbar = 0 and dzbar/dzbar = 1 with d/dzbar = (d_x + i d_y)/2
        let z = J::complex_var(c64(0.3, 0.4), 0, 1);
        let zb = z.conj();
        let dbar = |j: &J| (j.g[0] + c64(0.0, 1.0) * j.g[1]) * 0.5;
        assert!(dbar(&z).norm() < 1e-15);
        assert!((dbar(&zb) - c64(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn sqrt_and_powf_match_closed_forms() {
        let x = J::var(2.0, 0);
        let s = x.sqrt();
        assert!((s.g[0].re - 0.5 / 2f64.sqrt()).abs() < 1e-14);
        assert!((s.h[0][0].re + 0.25 * 2f64.powf(-1.5)).abs() < 1e-14);
        let p = x.powf(0.3);
        assert!((p.h[0][0].re - 0.3 * (-0.7) * 2f64.powf(-1.7)).abs() < 1e-14);
    }
}
