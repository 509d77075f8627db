//! Forward-mode automatic differentiation scalars.
//!
//! `Dual<S>` propagates one derivative through arithmetic; nesting duals
//! (`Dual<Dual<f64>>`, ...) yields exact higher derivatives. All geometric
//! kernels in this crate are written once, generically over [`Scalar`], so the
//! same code path that evaluates a field also differentiates it — no finite
//! differences anywhere.
//!
//! Evaluable fields are stored as trait objects (see [`crate::fields`]), and
//! trait objects cannot have generic methods. The [`AdScalar`] tower fixes a
//! maximum nesting depth (four dual levels above `f64`, one more than any
//! computation in the crate requires) and gives generic code a way to evaluate
//! a field at its own level and to climb one level for an inner derivative.

use std::fmt::Debug;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

/// Arithmetic interface shared by `f64` and nested dual numbers.
pub trait Scalar:
    Copy
    + Debug
    + PartialEq
    + Send
    + Sync
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
{
    fn from_f64(v: f64) -> Self;
    fn zero() -> Self {
        Self::from_f64(0.0)
    }
    fn one() -> Self {
        Self::from_f64(1.0)
    }
    /// Constant (derivative-free) part, taken recursively.
    fn value(self) -> f64;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn exp(self) -> Self;
    fn sinh(self) -> Self;
    fn cosh(self) -> Self;
    fn sqrt(self) -> Self;
    fn powi(self, n: i32) -> Self;
    fn recip(self) -> Self {
        Self::one() / self
    }
}

impl Scalar for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
    fn value(self) -> f64 {
        self
    }
    fn sin(self) -> Self {
        f64::sin(self)
    }
    fn cos(self) -> Self {
        f64::cos(self)
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn sinh(self) -> Self {
        f64::sinh(self)
    }
    fn cosh(self) -> Self {
        f64::cosh(self)
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    fn powi(self, n: i32) -> Self {
        f64::powi(self, n)
    }
}

/// Dual number a + b·ε with ε² = 0 over an arbitrary scalar.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dual<S> {
    pub re: S,
    pub eps: S,
}

impl<S: Scalar> Dual<S> {
    pub fn new(re: S, eps: S) -> Self {
        Dual { re, eps }
    }
    pub fn constant(re: S) -> Self {
        Dual {
            re,
            eps: S::zero(),
        }
    }
    /// Seeds the variable direction: d/dt (re + t) at t = 0.
    pub fn var(re: S) -> Self {
        Dual { re, eps: S::one() }
    }
}

impl<S: Scalar> Add for Dual<S> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Dual::new(self.re + o.re, self.eps + o.eps)
    }
}
impl<S: Scalar> Sub for Dual<S> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Dual::new(self.re - o.re, self.eps - o.eps)
    }
}
impl<S: Scalar> Mul for Dual<S> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        Dual::new(self.re * o.re, self.re * o.eps + self.eps * o.re)
    }
}
impl<S: Scalar> Div for Dual<S> {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        let q = self.re / o.re;
        Dual::new(q, (self.eps - q * o.eps) / o.re)
    }
}
impl<S: Scalar> Neg for Dual<S> {
    type Output = Self;
    fn neg(self) -> Self {
        Dual::new(-self.re, -self.eps)
    }
}
impl<S: Scalar> AddAssign for Dual<S> {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}
impl<S: Scalar> SubAssign for Dual<S> {
    fn sub_assign(&mut self, o: Self) {
        *self = *self - o;
    }
}
impl<S: Scalar> MulAssign for Dual<S> {
    fn mul_assign(&mut self, o: Self) {
        *self = *self * o;
    }
}

impl<S: Scalar> Scalar for Dual<S> {
    fn from_f64(v: f64) -> Self {
        Dual::constant(S::from_f64(v))
    }
    fn value(self) -> f64 {
        self.re.value()
    }
    fn sin(self) -> Self {
        Dual::new(self.re.sin(), self.eps * self.re.cos())
    }
    fn cos(self) -> Self {
        Dual::new(self.re.cos(), -self.eps * self.re.sin())
    }
    fn exp(self) -> Self {
        let e = self.re.exp();
        Dual::new(e, self.eps * e)
    }
    fn sinh(self) -> Self {
        Dual::new(self.re.sinh(), self.eps * self.re.cosh())
    }
    fn cosh(self) -> Self {
        Dual::new(self.re.cosh(), self.eps * self.re.sinh())
    }
    fn sqrt(self) -> Self {
        let r = self.re.sqrt();
        Dual::new(r, self.eps / (S::from_f64(2.0) * r))
    }
    fn powi(self, n: i32) -> Self {
        match n {
            0 => Self::one(),
            1 => self,
            _ if n > 1 => {
                let d = S::from_f64(n as f64);
                Dual::new(
                    self.re.powi(n),
                    d * self.re.powi(n - 1) * self.eps,
                )
            }
            _ => Self::one() / self.powi(-n),
        }
    }
}

/// One dual level above `f64`: first derivatives.
pub type D1 = Dual<f64>;
/// Two levels: second derivatives.
pub type D2 = Dual<D1>;
/// Three levels: the deepest nesting reached by the bundle computations
/// (a Lie bracket of fields whose coefficients contain a horizontal
/// Laplacian costs 1 + 2 levels).
pub type D3 = Dual<D2>;
/// Spare level.
pub type D4 = Dual<D3>;
/// Terminator; evaluating a field at this depth panics.
pub type D5 = Dual<D4>;

/// Scalar levels at which trait-object fields can be evaluated.
///
/// `Up` is the next level, used for inner derivatives; `up`/`down_*` convert
/// between a level and the dual number one level above it.
pub trait AdScalar: Scalar {
    type Up: AdScalar;
    const DEPTH: usize;
    fn up(re: Self, eps: Self) -> Self::Up;
    fn down_re(u: Self::Up) -> Self;
    fn down_eps(u: Self::Up) -> Self;
    /// Evaluates a trait-object field at this level (see [`crate::fields::SmoothMap`]).
    fn eval_map(f: &dyn crate::fields::SmoothMap, p: &[Self], out: &mut [Self]);
}

macro_rules! ad_level {
    ($lvl:ty, $up:ty, $depth:expr, $method:ident) => {
        impl AdScalar for $lvl {
            type Up = $up;
            const DEPTH: usize = $depth;
            fn up(re: Self, eps: Self) -> Self::Up {
                Dual { re, eps }
            }
            fn down_re(u: Self::Up) -> Self {
                u.re
            }
            fn down_eps(u: Self::Up) -> Self {
                u.eps
            }
            fn eval_map(f: &dyn crate::fields::SmoothMap, p: &[Self], out: &mut [Self]) {
                f.$method(p, out)
            }
        }
    };
}

ad_level!(f64, D1, 0, eval0);
ad_level!(D1, D2, 1, eval1);
ad_level!(D2, D3, 2, eval2);
ad_level!(D3, D4, 3, eval3);
ad_level!(D4, D5, 4, eval4);

impl AdScalar for D5 {
    type Up = D5;
    const DEPTH: usize = 5;
    fn up(_: Self, _: Self) -> Self::Up {
        panic!("AD depth exceeded: no dual level above D5")
    }
    fn down_re(u: Self::Up) -> Self {
        u
    }
    fn down_eps(u: Self::Up) -> Self {
        u
    }
    fn eval_map(_: &dyn crate::fields::SmoothMap, _: &[Self], _: &mut [Self]) {
        panic!("AD depth exceeded: fields are evaluable up to four nested dual levels")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn poly<S: Scalar>(x: S) -> S {
        // x³ − 2x + 5
        x.powi(3) - S::from_f64(2.0) * x + S::from_f64(5.0)
    }

    #[test]
    fn first_derivative_exact() {
        let x = D1::var(1.5);
        let y = poly(x);
        assert_eq!(y.re, 1.5f64.powi(3) - 3.0 + 5.0);
        assert_eq!(y.eps, 3.0 * 1.5f64.powi(2) - 2.0); // 3x² − 2
    }

    #[test]
    fn second_derivative_via_nesting() {
        let x = D2::var(D1::var(0.7));
        let y = poly(x);
        // d²/dx² (x³ − 2x + 5) = 6x
        assert!((y.eps.eps - 6.0 * 0.7).abs() < 1e-15);
    }

    #[test]
    fn third_derivative_via_nesting() {
        let x = D3::var(D2::var(D1::var(0.3)));
        let y = x.powi(4);
        // d³/dx³ x⁴ = 24x
        assert!((y.eps.eps.eps - 24.0 * 0.3).abs() < 1e-13);
    }

    #[test]
    fn division_chain_rule() {
        let x = D1::var(2.0);
        let y = D1::constant(3.0) / x;
        assert!((y.eps - (-3.0 / 4.0)).abs() < 1e-15);
    }

    #[test]
    fn trig_and_exp() {
        let x = D1::var(0.4);
        assert!((x.sin().eps - 0.4f64.cos()).abs() < 1e-15);
        assert!((x.exp().eps - 0.4f64.exp()).abs() < 1e-15);
        assert!((x.cosh().eps - 0.4f64.sinh()).abs() < 1e-15);
    }
}
