//! Scalar types that the coefficient algebra is generic over.
//!
//! The same formulas are evaluated with plain `f64`, with outward-rounded
//! [`Interval`]s, with forward-mode [`Dual`] numbers (for derivative bounds)
//! and with truncated polynomials in κ ([`Poly`]) for Lipschitz bounds.

use std::ops::{Add, Mul, Neg, Sub};

/// A commutative ring with embedded `f64` constants.
pub trait Real:
    Copy + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Neg<Output = Self>
{
    /// Embeds an exactly representable constant.
    fn cst(v: f64) -> Self;

    fn sqr(self) -> Self {
        self * self
    }
}

impl Real for f64 {
    #[inline]
    fn cst(v: f64) -> Self {
        v
    }
}

// ---------------------------------------------------------------------------
// Directed rounding from error-free transformations.

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    let e = (a - (s - bb)) + (b - bb);
    (s, e)
}

/// Below this magnitude the fma residual of a product may itself be inexact.
const TINY: f64 = 1e-290;

#[inline]
fn add_down(a: f64, b: f64) -> f64 {
    let (s, e) = two_sum(a, b);
    if !s.is_finite() {
        return if s.is_nan() { f64::NEG_INFINITY } else { s };
    }
    if e < 0.0 {
        s.next_down()
    } else {
        s
    }
}

#[inline]
fn add_up(a: f64, b: f64) -> f64 {
    let (s, e) = two_sum(a, b);
    if !s.is_finite() {
        return if s.is_nan() { f64::INFINITY } else { s };
    }
    if e > 0.0 {
        s.next_up()
    } else {
        s
    }
}

#[inline]
fn mul_down(a: f64, b: f64) -> f64 {
    if a == 0.0 || b == 0.0 {
        return 0.0;
    }
    let p = a * b;
    if !p.is_finite() {
        return if p.is_nan() { f64::NEG_INFINITY } else { p };
    }
    if p.abs() < TINY {
        return p.next_down();
    }
    if a.mul_add(b, -p) < 0.0 {
        p.next_down()
    } else {
        p
    }
}

#[inline]
fn mul_up(a: f64, b: f64) -> f64 {
    if a == 0.0 || b == 0.0 {
        return 0.0;
    }
    let p = a * b;
    if !p.is_finite() {
        return if p.is_nan() { f64::INFINITY } else { p };
    }
    if p.abs() < TINY {
        return p.next_up();
    }
    if a.mul_add(b, -p) > 0.0 {
        p.next_up()
    } else {
        p
    }
}

/// A closed interval `[lo, hi]` with outward rounding on every operation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        debug_assert!(lo <= hi || lo.is_nan() || hi.is_nan(), "[{lo}, {hi}]");
        Self { lo, hi }
    }

    pub fn point(v: f64) -> Self {
        Self { lo: v, hi: v }
    }

    /// Enclosure of `sqrt(v)` for a nonnegative float `v`.
    pub fn sqrt_of(v: f64) -> Self {
        Self::point(v).sqrt()
    }

    pub fn sqrt(self) -> Self {
        fn down(v: f64) -> f64 {
            if v <= 0.0 {
                return 0.0;
            }
            let r = v.sqrt();
            if r.mul_add(r, -v) > 0.0 {
                r.next_down()
            } else {
                r
            }
        }
        fn up(v: f64) -> f64 {
            if v < 0.0 {
                return f64::NAN;
            }
            if v == 0.0 {
                return 0.0;
            }
            let r = v.sqrt();
            if r.mul_add(r, -v) < 0.0 {
                r.next_up()
            } else {
                r
            }
        }
        Self {
            lo: down(self.lo),
            hi: up(self.hi),
        }
    }

    pub fn mid(&self) -> f64 {
        0.5 * self.lo + 0.5 * self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    /// Largest absolute value in the interval.
    pub fn mag(&self) -> f64 {
        self.lo.abs().max(self.hi.abs())
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }

    pub fn hull(self, other: Self) -> Self {
        Self {
            lo: self.lo.min(other.lo),
            hi: self.hi.max(other.hi),
        }
    }

    /// `[0, mag]`-style symmetric enclosure `[-mag, mag]`.
    pub fn symmetric(self) -> Self {
        let m = self.mag();
        Self { lo: -m, hi: m }
    }

    pub fn is_finite(&self) -> bool {
        self.lo.is_finite() && self.hi.is_finite()
    }
}

impl Add for Interval {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        Self {
            lo: add_down(self.lo, o.lo),
            hi: add_up(self.hi, o.hi),
        }
    }
}

impl Sub for Interval {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        Self {
            lo: add_down(self.lo, -o.hi),
            hi: add_up(self.hi, -o.lo),
        }
    }
}

impl Neg for Interval {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Self {
            lo: -self.hi,
            hi: -self.lo,
        }
    }
}

impl Mul for Interval {
    type Output = Self;
    #[inline]
    fn mul(self, o: Self) -> Self {
        let (a, b, c, d) = (self.lo, self.hi, o.lo, o.hi);
        let lo = mul_down(a, c)
            .min(mul_down(a, d))
            .min(mul_down(b, c))
            .min(mul_down(b, d));
        let hi = mul_up(a, c)
            .max(mul_up(a, d))
            .max(mul_up(b, c))
            .max(mul_up(b, d));
        Self { lo, hi }
    }
}

impl Real for Interval {
    #[inline]
    fn cst(v: f64) -> Self {
        Self::point(v)
    }

    fn sqr(self) -> Self {
        if self.lo >= 0.0 {
            Self::new(mul_down(self.lo, self.lo), mul_up(self.hi, self.hi))
        } else if self.hi <= 0.0 {
            Self::new(mul_down(self.hi, self.hi), mul_up(self.lo, self.lo))
        } else {
            let m = self.mag();
            Self::new(0.0, mul_up(m, m))
        }
    }
}

// ---------------------------------------------------------------------------

/// Forward-mode dual number with `N` partial derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dual<T, const N: usize> {
    pub val: T,
    pub d: [T; N],
}

impl<T: Real, const N: usize> Dual<T, N> {
    pub fn constant(val: T) -> Self {
        Self {
            val,
            d: [T::cst(0.0); N],
        }
    }

    /// The `k`-th independent variable with value `val`.
    pub fn var(val: T, k: usize) -> Self {
        let mut d = [T::cst(0.0); N];
        d[k] = T::cst(1.0);
        Self { val, d }
    }
}

impl<T: Real, const N: usize> Add for Dual<T, N> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        let mut d = self.d;
        for (x, y) in d.iter_mut().zip(o.d) {
            *x = *x + y;
        }
        Self {
            val: self.val + o.val,
            d,
        }
    }
}

impl<T: Real, const N: usize> Sub for Dual<T, N> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        let mut d = self.d;
        for (x, y) in d.iter_mut().zip(o.d) {
            *x = *x - y;
        }
        Self {
            val: self.val - o.val,
            d,
        }
    }
}

impl<T: Real, const N: usize> Neg for Dual<T, N> {
    type Output = Self;
    fn neg(self) -> Self {
        Self {
            val: -self.val,
            d: self.d.map(|x| -x),
        }
    }
}

impl<T: Real, const N: usize> Mul for Dual<T, N> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        let mut d = self.d;
        for (x, y) in d.iter_mut().zip(o.d) {
            *x = *x * o.val + self.val * y;
        }
        Self {
            val: self.val * o.val,
            d,
        }
    }
}

impl<T: Real, const N: usize> Real for Dual<T, N> {
    fn cst(v: f64) -> Self {
        Self::constant(T::cst(v))
    }
}

// ---------------------------------------------------------------------------

/// Maximum number of coefficients (degree 7) a [`Poly`] can hold.
pub const POLY_CAP: usize = 8;

/// A polynomial in one variable, stored by ascending powers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Poly<T> {
    pub coef: [T; POLY_CAP],
    pub deg: usize,
}

impl<T: Real> Poly<T> {
    pub fn constant(c: T) -> Self {
        let mut coef = [T::cst(0.0); POLY_CAP];
        coef[0] = c;
        Self { coef, deg: 0 }
    }

    /// The monomial `x`.
    pub fn x() -> Self {
        let mut coef = [T::cst(0.0); POLY_CAP];
        coef[1] = T::cst(1.0);
        Self { coef, deg: 1 }
    }

    pub fn eval(&self, x: T) -> T {
        let mut acc = self.coef[self.deg];
        for k in (0..self.deg).rev() {
            acc = acc * x + self.coef[k];
        }
        acc
    }

    /// Coefficients of `t -> p(c + t)`.
    pub fn shifted(&self, c: T) -> Self {
        // repeated synthetic division
        let mut a = self.coef;
        for i in 0..self.deg {
            for k in (i..self.deg).rev() {
                a[k] = a[k] + c * a[k + 1];
            }
        }
        Self {
            coef: a,
            deg: self.deg,
        }
    }
}

impl<T: Real> Add for Poly<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        let mut coef = self.coef;
        for (x, y) in coef.iter_mut().zip(o.coef) {
            *x = *x + y;
        }
        Self {
            coef,
            deg: self.deg.max(o.deg),
        }
    }
}

impl<T: Real> Sub for Poly<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        let mut coef = self.coef;
        for (x, y) in coef.iter_mut().zip(o.coef) {
            *x = *x - y;
        }
        Self {
            coef,
            deg: self.deg.max(o.deg),
        }
    }
}

impl<T: Real> Neg for Poly<T> {
    type Output = Self;
    fn neg(self) -> Self {
        Self {
            coef: self.coef.map(|x| -x),
            deg: self.deg,
        }
    }
}

impl<T: Real> Mul for Poly<T> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        let deg = self.deg + o.deg;
        assert!(deg < POLY_CAP, "polynomial degree {deg} exceeds capacity");
        let mut coef = [T::cst(0.0); POLY_CAP];
        for i in 0..=self.deg {
            for j in 0..=o.deg {
                coef[i + j] = coef[i + j] + self.coef[i] * o.coef[j];
            }
        }
        Self { coef, deg }
    }
}

impl<T: Real> Real for Poly<T> {
    fn cst(v: f64) -> Self {
        Self::constant(T::cst(v))
    }
}

impl Poly<Interval> {
    /// Rigorous lower bound of the polynomial over `[lo, hi]`.
    ///
    /// Expands around the cell centre `m` and subtracts `L * r`, where
    /// `L = sum k |b_k| r^(k-1)` bounds `|p'|` on the cell.
    pub fn lower_bound_on(&self, lo: f64, hi: f64) -> f64 {
        let m = 0.5 * lo + 0.5 * hi;
        let r = (Interval::point(hi) - Interval::point(m))
            .hi
            .max((Interval::point(m) - Interval::point(lo)).hi);
        let b = self.shifted(Interval::point(m));
        let ri = Interval::point(r);
        let mut lip = Interval::point(0.0);
        let mut rk = Interval::point(1.0);
        for k in 1..=self.deg {
            let term = Interval::cst(k as f64) * Interval::point(b.coef[k].mag()) * rk;
            lip = lip + Interval::point(term.hi);
            rk = rk * ri;
        }
        (Interval::point(b.coef[0].lo) - lip * ri).lo
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Exact value of `a op b` as a rational check: the true result lies in
    /// the interval iff the float residual has the right sign.
    fn contains_sum(i: Interval, a: f64, b: f64) -> bool {
        let (s, e) = two_sum(a, b);
        // true = s + e exactly
        (i.lo < s || (i.lo == s && e >= 0.0)) && (i.hi > s || (i.hi == s && e <= 0.0))
    }

    fn contains_product(i: Interval, a: f64, b: f64) -> bool {
        let p = a * b;
        let e = a.mul_add(b, -p);
        (i.lo < p || (i.lo == p && e >= 0.0)) && (i.hi > p || (i.hi == p && e <= 0.0))
    }

    proptest! {
        #[test]
        fn sums_and_products_enclose_exact_results(a in -1e6f64..1e6, b in -1e6f64..1e6) {
            let (ia, ib) = (Interval::point(a), Interval::point(b));
            prop_assert!(contains_sum(ia + ib, a, b));
            prop_assert!(contains_sum(ia - ib, a, -b));
            prop_assert!(contains_product(ia * ib, a, b));
            // at most one ulp wide
            let s = ia + ib;
            prop_assert!(s.hi == s.lo || s.hi == s.lo.next_up());
        }

        #[test]
        fn interval_ops_enclose_samples(
            a in -10.0f64..10.0, wa in 0.0f64..2.0,
            b in -10.0f64..10.0, wb in 0.0f64..2.0,
            t in 0.0f64..1.0, u in 0.0f64..1.0,
        ) {
            let ia = Interval::new(a, a + wa);
            let ib = Interval::new(b, b + wb);
            let x = a + t * wa;
            let y = b + u * wb;
            if ia.contains(x) && ib.contains(y) {
                let prod = ia * ib;
                prop_assert!(prod.lo <= x * y && x * y <= prod.hi);
                let sq = ia.sqr();
                prop_assert!(sq.lo <= x * x && x * x <= sq.hi);
                prop_assert!(sq.lo >= 0.0);
            }
        }

        #[test]
        fn sqrt_encloses(v in 0.0f64..1e8) {
            let r = Interval::sqrt_of(v);
            prop_assert!(r.lo <= r.hi);
            // r.lo^2 <= v <= r.hi^2 checked with exact residuals
            prop_assert!(r.lo.mul_add(r.lo, -v) <= 0.0);
            prop_assert!(r.hi.mul_add(r.hi, -v) >= 0.0);
        }

        #[test]
        fn poly_lower_bound_is_below_samples(
            c in proptest::collection::vec(-5.0f64..5.0, 5),
            lo in 0.0f64..0.9, w in 0.0f64..0.1, t in 0.0f64..1.0,
        ) {
            let x = Poly::<Interval>::x();
            let mut p = Poly::cst(0.0);
            for (k, ck) in c.iter().enumerate() {
                let mut mono = Poly::constant(Interval::point(*ck));
                for _ in 0..k {
                    mono = mono * x;
                }
                p = p + mono;
            }
            let hi = lo + w;
            let bound = p.lower_bound_on(lo, hi);
            let k = lo + t * w;
            let exact = p.eval(Interval::point(k));
            prop_assert!(bound <= exact.hi, "{bound} > {:?}", exact);
        }
    }

    #[test]
    fn zero_times_anything_is_exact_zero() {
        let z = Interval::point(0.0) * Interval::new(-1e300, 1e300);
        assert_eq!(z, Interval::point(0.0));
    }

    #[test]
    fn dual_derivative_of_cubic() {
        // d/dx (x^3 - 2x) at x = 1.5 is 3*2.25 - 2
        let x = Dual::<f64, 1>::var(1.5, 0);
        let y = x * x * x - Dual::cst(2.0) * x;
        assert_eq!(y.val, 1.5f64.powi(3) - 3.0);
        assert_eq!(y.d[0], 4.75);
    }

    #[test]
    fn poly_shift_matches_evaluation() {
        let x = Poly::<f64>::x();
        let p = (x - Poly::cst(1.0)) * (x + Poly::cst(2.0)) * x;
        let q = p.shifted(0.5);
        for t in [-0.3, 0.0, 0.25, 1.0] {
            assert!((q.eval(t) - p.eval(0.5 + t)).abs() < 1e-14);
        }
    }
}
