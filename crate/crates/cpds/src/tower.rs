//! Exact bounds on numbers too large to write down.
//!
//! A [`Point`] is exp_h(v) for a small exact v, where exp_0(v) = v and
//! exp_{h+1}(v) = 2^exp_h(v). Points compare exactly. A [`Big`] is a closed
//! interval of points that is guaranteed to contain the true value; it is a
//! single point whenever the value fits in memory.

use std::cmp::Ordering;
use std::fmt;

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};

/// Values up to this many bits are kept as plain integers.
pub const EXACT_BITS: u64 = 1 << 16;

#[derive(Clone, Debug)]
pub struct Point {
    pub h: u32,
    pub v: BigUint,
}

fn pow2_exact(e: &BigUint) -> Option<BigUint> {
    let e = e.to_u64()?;
    (e <= EXACT_BITS).then(|| BigUint::one() << e)
}

impl Point {
    pub fn exact(v: BigUint) -> Point {
        Point { h: 0, v }
    }

    pub fn from_u64(v: u64) -> Point {
        Point::exact(BigUint::from(v))
    }

    pub fn as_exact(&self) -> Option<&BigUint> {
        (self.h == 0).then_some(&self.v)
    }

    pub fn pow2(&self) -> Point {
        if self.h == 0 {
            if let Some(x) = pow2_exact(&self.v) {
                return Point::exact(x);
            }
        }
        Point { h: self.h + 1, v: self.v.clone() }
    }

    /// Exact base-2 logarithm of a tower point (h >= 1).
    fn log2_tower(&self) -> Point {
        debug_assert!(self.h >= 1);
        Point { h: self.h - 1, v: self.v.clone() }
    }

    /// floor(log2) for positive values.
    pub fn log2_floor(&self) -> Point {
        if self.h == 0 {
            Point::from_u64(self.v.bits().saturating_sub(1))
        } else {
            self.log2_tower()
        }
    }

    pub fn log2_ceil(&self) -> Point {
        if self.h == 0 {
            let b = self.v.bits();
            let pow = !self.v.is_zero() && self.v.count_ones() == 1;
            Point::from_u64(if pow { b - 1 } else { b })
        } else {
            self.log2_tower()
        }
    }

    /// Round an oversized plain integer down or up to the next level.
    fn normalize(self, up: bool) -> Point {
        if self.h == 0 && self.v.bits() > EXACT_BITS {
            let p = if up { self.log2_ceil() } else { self.log2_floor() };
            return p.pow2();
        }
        self
    }

    pub fn is_zero(&self) -> bool {
        self.h == 0 && self.v.is_zero()
    }

    /// Lower bound on a + b.
    pub fn add_lo(&self, b: &Point) -> Point {
        match (self.as_exact(), b.as_exact()) {
            (Some(x), Some(y)) => Point::exact(x + y).normalize(false),
            _ => std::cmp::max(self.clone(), b.clone()),
        }
    }

    /// Upper bound on a + b.
    pub fn add_hi(&self, b: &Point) -> Point {
        match (self.as_exact(), b.as_exact()) {
            (Some(x), Some(y)) => Point::exact(x + y).normalize(true),
            _ => std::cmp::max(self.clone(), b.clone()).double_hi(),
        }
    }

    /// Upper bound on 2a.
    fn double_hi(&self) -> Point {
        if self.h == 0 {
            return Point::exact(&self.v << 1u32).normalize(true);
        }
        self.log2_tower().add_hi(&Point::from_u64(1)).pow2()
    }

    pub fn mul_lo(&self, b: &Point) -> Point {
        if self.is_zero() || b.is_zero() {
            return Point::from_u64(0);
        }
        match (self.as_exact(), b.as_exact()) {
            (Some(x), Some(y)) if x.bits() + y.bits() <= EXACT_BITS + 1 => Point::exact(x * y).normalize(false),
            _ => self.log2_floor().add_lo(&b.log2_floor()).pow2(),
        }
    }

    pub fn mul_hi(&self, b: &Point) -> Point {
        if self.is_zero() || b.is_zero() {
            return Point::from_u64(0);
        }
        match (self.as_exact(), b.as_exact()) {
            (Some(x), Some(y)) if x.bits() + y.bits() <= EXACT_BITS + 1 => Point::exact(x * y).normalize(true),
            _ => self.log2_ceil().add_hi(&b.log2_ceil()).pow2(),
        }
    }
}

/// exp_d(v) if it is small enough, else None (then it exceeds 2^EXACT_BITS).
fn lift(v: &BigUint, d: u32) -> Option<BigUint> {
    let mut x = v.clone();
    for _ in 0..d {
        x = pow2_exact(&x)?;
    }
    Some(x)
}

impl Ord for Point {
    fn cmp(&self, o: &Point) -> Ordering {
        let (lo, hi, flip) = if self.h <= o.h { (self, o, false) } else { (o, self, true) };
        // compare exp_{lo.h}(lo.v) with exp_{lo.h}(exp_d(hi.v))
        let r = match lift(&hi.v, hi.h - lo.h) {
            Some(x) => lo.v.cmp(&x),
            None => Ordering::Less,
        };
        if flip {
            r.reverse()
        } else {
            r
        }
    }
}

impl PartialEq for Point {
    fn eq(&self, o: &Point) -> bool {
        self.cmp(o) == Ordering::Equal
    }
}

impl Eq for Point {}

impl PartialOrd for Point {
    fn partial_cmp(&self, o: &Point) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

impl fmt::Display for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let inner = if self.v.bits() <= 128 {
            self.v.to_string()
        } else {
            format!("2^{}..", self.v.bits() - 1)
        };
        let mut s = inner;
        for _ in 0..self.h {
            s = format!("2^({})", s);
        }
        write!(f, "{}", s)
    }
}

/// A value known to lie in [lo, hi].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Big {
    pub lo: Point,
    pub hi: Point,
}

/// Outcome of comparing bounded values.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Decided {
    Holds,
    Fails,
    Unknown,
}

impl Big {
    pub fn from_u64(v: u64) -> Big {
        Big::exact(BigUint::from(v))
    }

    pub fn exact(v: BigUint) -> Big {
        let lo = Point::exact(v.clone()).normalize(false);
        let hi = Point::exact(v).normalize(true);
        Big { lo, hi }
    }

    pub fn is_exact(&self) -> bool {
        self.lo == self.hi
    }

    pub fn to_biguint(&self) -> Option<BigUint> {
        if self.is_exact() {
            self.lo.as_exact().cloned()
        } else {
            None
        }
    }

    pub fn pow2(&self) -> Big {
        Big { lo: self.lo.pow2(), hi: self.hi.pow2() }
    }

    pub fn add(&self, o: &Big) -> Big {
        Big { lo: self.lo.add_lo(&o.lo), hi: self.hi.add_hi(&o.hi) }
    }

    pub fn mul(&self, o: &Big) -> Big {
        Big { lo: self.lo.mul_lo(&o.lo), hi: self.hi.mul_hi(&o.hi) }
    }

    /// self >= o, decided from the bounds.
    pub fn ge(&self, o: &Big) -> Decided {
        if self.lo >= o.hi {
            Decided::Holds
        } else if self.hi < o.lo {
            Decided::Fails
        } else {
            Decided::Unknown
        }
    }
}

impl fmt::Display for Big {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_exact() {
            write!(f, "{}", self.lo)
        } else {
            write!(f, "[{}, {}]", self.lo, self.hi)
        }
    }
}

/// exp_k(i)
pub fn exp_k(k: u32, i: &Big) -> Big {
    let mut x = i.clone();
    for _ in 0..k {
        x = x.pow2();
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn points_compare_across_heights() {
        let a = Point::from_u64(16).pow2(); // 65536
        assert_eq!(a, Point::from_u64(65536));
        let t = Point::from_u64(100_000).pow2();
        assert_eq!(t.h, 1);
        assert!(t > Point::exact(BigUint::one() << 65000u32));
        assert!(t.pow2() > t);
        assert!(Point::from_u64(5).pow2().pow2() < Point::from_u64(33).pow2());
    }

    #[test]
    fn bounds_contain_exact_values() {
        let x = Big::from_u64(3).mul(&Big::from_u64(7)).add(&Big::from_u64(1));
        assert_eq!(x.to_biguint(), Some(BigUint::from(22u32)));
        let big = Big::from_u64(70_000).pow2();
        let s = big.add(&big);
        assert!(s.ge(&big) == Decided::Holds);
        assert_eq!(Big::from_u64(2).ge(&Big::from_u64(3)), Decided::Fails);
        assert_eq!(exp_k(2, &Big::from_u64(3)).to_biguint(), Some(BigUint::from(256u32)));
    }
}
