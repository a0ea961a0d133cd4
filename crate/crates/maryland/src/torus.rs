//! Points of the circle R/Z in exact fixed point.
//!
//! A [`TorusPoint`] stores an integer `lo` in `[0, 2^bits)` and a width in
//! ulps. When the width is zero the point is exactly `lo / 2^bits`; otherwise
//! the true value lies in the open interval `(lo, lo + width) / 2^bits`.
//! Shifts `theta + k alpha` are a single multiply and reduce, so the error
//! grows like `|k| * width(alpha)` rather than with the number of additions.
//!
//! [`Phase`] is a 128-bit wrapping copy of a point for the double-precision
//! bulk paths (cocycle products, box operators, quadrature).

use rug::ops::{Pow, RemRounding};
use rug::{Assign, Float, Integer, Rational};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TorusPoint {
    lo: Integer,
    width: Integer,
    bits: u32,
}

fn modulus(bits: u32) -> Integer {
    Integer::from(1) << bits
}

impl TorusPoint {
    pub fn zero(bits: u32) -> Self {
        TorusPoint {
            lo: Integer::new(),
            width: Integer::new(),
            bits,
        }
    }

    /// Builds from raw parts; `lo` is reduced mod 1.
    pub fn from_parts(lo: Integer, width: Integer, bits: u32) -> Self {
        let lo = lo.rem_euc(modulus(bits));
        TorusPoint { lo, width, bits }
    }

    /// Exact rational input reduced mod 1. Dyadic values are stored exactly.
    pub fn from_rational(x: &Rational, bits: u32) -> Self {
        let scaled = x * Rational::from(modulus(bits));
        let (fl, rem) = {
            let num = scaled.numer().clone();
            let den = scaled.denom().clone();
            let (q, r) = num.div_rem_euc(den);
            (q, r)
        };
        let width = if rem == 0 { Integer::new() } else { Integer::from(1) };
        TorusPoint::from_parts(fl, width, bits)
    }

    /// Parses a decimal literal such as `0.618`, `-1.5e-3` or `1/3`.
    pub fn from_decimal(s: &str, bits: u32) -> Result<Self> {
        Ok(Self::from_rational(&parse_decimal(s)?, bits))
    }

    /// Conservative conversion from a rounded float: the float is assumed
    /// correct to within one ulp at `bits`.
    pub fn from_float(x: &Float, bits: u32) -> Self {
        let scaled = Float::with_val(x.prec().max(bits + 64), x) << bits;
        let fl = scaled.floor().to_integer().expect("finite value");
        TorusPoint::from_parts(fl - 1u32, Integer::from(3), bits)
    }

    /// Exact conversion of a double (every finite double is dyadic).
    pub fn from_f64(x: f64, bits: u32) -> Self {
        let r = Rational::from_f64(x).expect("finite value");
        Self::from_rational(&r, bits)
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn lo(&self) -> &Integer {
        &self.lo
    }

    pub fn width(&self) -> &Integer {
        &self.width
    }

    pub fn is_exact(&self) -> bool {
        self.width == 0
    }

    /// Radius of the enclosing interval, as a real number.
    pub fn error_bound(&self) -> f64 {
        let w = Float::with_val(64, &self.width) >> self.bits;
        w.to_f64()
    }

    /// Same point at a different fixed-point resolution (widened by one ulp
    /// when precision is dropped).
    pub fn with_bits(&self, bits: u32) -> Self {
        if bits >= self.bits {
            let s = bits - self.bits;
            TorusPoint::from_parts(
                Integer::from(&self.lo << s),
                Integer::from(&self.width << s),
                bits,
            )
        } else {
            let s = self.bits - bits;
            let lo = Integer::from(&self.lo >> s);
            let width = Integer::from(&self.width >> s) + 2u32;
            TorusPoint::from_parts(lo, width, bits)
        }
    }

    fn check_bits(&self, other: &TorusPoint) {
        assert_eq!(self.bits, other.bits, "torus points at different precision");
    }

    pub fn add(&self, other: &TorusPoint) -> TorusPoint {
        self.check_bits(other);
        TorusPoint::from_parts(
            Integer::from(&self.lo + &other.lo),
            Integer::from(&self.width + &other.width),
            self.bits,
        )
    }

    pub fn neg(&self) -> TorusPoint {
        let lo = Integer::from(-&self.lo) - &self.width;
        TorusPoint::from_parts(lo, self.width.clone(), self.bits)
    }

    pub fn sub(&self, other: &TorusPoint) -> TorusPoint {
        self.add(&other.neg())
    }

    /// `k * self` mod 1.
    pub fn scale(&self, k: &Integer) -> TorusPoint {
        let abs = Integer::from(k.abs_ref());
        let lo = Integer::from(&self.lo * &abs);
        let width = Integer::from(&self.width * &abs);
        let p = TorusPoint::from_parts(lo, width, self.bits);
        if *k < 0 {
            p.neg()
        } else {
            p
        }
    }

    /// `self + k * alpha` mod 1 by one multiply-reduce.
    pub fn shift(&self, alpha: &TorusPoint, k: &Integer) -> TorusPoint {
        self.add(&alpha.scale(k))
    }

    pub fn shift_by(&self, alpha: &TorusPoint, k: i128) -> TorusPoint {
        self.shift(alpha, &Integer::from(k))
    }

    /// `self - 1/2`.
    pub fn minus_half(&self) -> TorusPoint {
        let half = Integer::from(1) << (self.bits - 1);
        TorusPoint::from_parts(
            Integer::from(&self.lo - &half),
            self.width.clone(),
            self.bits,
        )
    }

    /// Twice the midpoint, in half-ulps, reduced to `[0, 2^(bits+1))`.
    fn mid_halfulps(&self) -> Integer {
        let v = Integer::from(&self.lo << 1) + &self.width;
        v.rem_euc(modulus(self.bits + 1))
    }

    /// Midpoint in `[0, 1)`.
    pub fn value(&self, prec: u32) -> Float {
        let p = prec.max(self.bits + 8);
        let mut f = Float::with_val(p, self.mid_halfulps());
        f >>= self.bits + 1;
        Float::with_val(prec, f)
    }

    pub fn value_f64(&self) -> f64 {
        self.value(64).to_f64()
    }

    /// Midpoint mapped to `[-1/2, 1/2)`, in half-ulps.
    fn signed_mid_halfulps(&self) -> Integer {
        let m = self.mid_halfulps();
        let half = modulus(self.bits);
        if m >= half {
            m - modulus(self.bits + 1)
        } else {
            m
        }
    }

    /// Closed bounds on `||x|| * 2^bits` (distance to the nearest integer).
    pub fn norm_bounds(&self) -> (Integer, Integer) {
        let one = modulus(self.bits);
        let half = Integer::from(&one >> 1);
        let s = if self.lo >= half {
            Integer::from(&self.lo - &one)
        } else {
            self.lo.clone()
        };
        let e = Integer::from(&s + &self.width);
        if s >= 0 {
            if e <= half {
                (s, e)
            } else {
                let other = Integer::from(&one - &e);
                let lo = if other < s { other.max(Integer::new()) } else { s };
                (lo, half)
            }
        } else if e <= 0 {
            (Integer::from(-&e), Integer::from(-&s))
        } else {
            let hi = Integer::from(-&s).max(e);
            (Integer::new(), hi)
        }
    }

    /// True when `||x|| = 0` cannot be excluded.
    pub fn may_be_integer(&self) -> bool {
        let (lo, _) = self.norm_bounds();
        lo == 0
    }

    /// `||x|| = min(value, 1 - value)` at the midpoint.
    pub fn norm_dist(&self, prec: u32) -> Float {
        let s = self.signed_mid_halfulps();
        let p = prec.max(self.bits + 8);
        let mut f = Float::with_val(p, s.abs());
        f >>= self.bits + 1;
        Float::with_val(prec, f)
    }

    pub fn norm_dist_f64(&self) -> f64 {
        self.norm_dist(64).to_f64()
    }

    /// `sin(pi x)` and `cos(pi x)` at the midpoint with relative accuracy,
    /// reducing the argument exactly before calling the transcendental.
    /// The representative of `x` is taken in `[0, 1)`.
    pub fn sin_cos_pi(&self, prec: u32) -> (Float, Float) {
        let p = prec.max(self.bits + 8) + 16;
        let s = self.signed_mid_halfulps();
        let neg = s < 0;
        let a = s.abs();
        // a / 2^(bits+1) = |t| in [0, 1/2]
        let quarter = modulus(self.bits - 1);
        let pi = Float::with_val(p, rug::float::Constant::Pi);
        let to_angle = |n: Integer| {
            let mut f = Float::with_val(p, n);
            f >>= self.bits + 1;
            f * &pi
        };
        let half = modulus(self.bits);
        let (sin_abs, cos) = if a <= quarter {
            let ang = to_angle(a);
            let (s, c) = ang.sin_cos(Float::new(p));
            (s, c)
        } else {
            let r = half - a;
            let ang = to_angle(r);
            let (s, c) = ang.sin_cos(Float::new(p));
            (c, s)
        };
        // representative in [0, 1): sin >= 0, cos changes sign past 1/2
        let cos = if neg { -cos } else { cos };
        (Float::with_val(prec, sin_abs), Float::with_val(prec, cos))
    }

    pub fn cos_pi(&self, prec: u32) -> Float {
        self.sin_cos_pi(prec).1
    }

    pub fn sin_pi(&self, prec: u32) -> Float {
        self.sin_cos_pi(prec).0
    }

    /// Lower bound of `|cos(pi x)|` implied by the error radius is zero.
    pub fn cos_may_vanish(&self) -> bool {
        self.minus_half().may_be_integer()
    }

    /// 128-bit wrapping copy of the midpoint.
    pub fn to_phase(&self) -> Phase {
        let m = self.mid_halfulps();
        let b = self.bits + 1;
        let v = if b >= 128 {
            m >> (b - 128)
        } else {
            m << (128 - b)
        };
        Phase(v.to_u128_wrapping())
    }
}

/// Parses `[-]digits[.digits][e[-]digits]` or `num/den` exactly.
pub fn parse_decimal(s: &str) -> Result<Rational> {
    let t = s.trim();
    if t.is_empty() {
        return Err(Error::invalid("decimal", "empty string"));
    }
    if t.contains('/') {
        return Rational::parse(t)
            .map(Rational::from)
            .map_err(|e| Error::invalid("decimal", e.to_string()));
    }
    let (mant, exp) = match t.find(['e', 'E']) {
        Some(i) => {
            let e: i64 = t[i + 1..]
                .parse()
                .map_err(|_| Error::invalid("decimal", format!("bad exponent in {t:?}")))?;
            (&t[..i], e)
        }
        None => (t, 0),
    };
    let (neg, mant) = match mant.strip_prefix('-') {
        Some(r) => (true, r),
        None => (false, mant.strip_prefix('+').unwrap_or(mant)),
    };
    let (int_part, frac_part) = match mant.find('.') {
        Some(i) => (&mant[..i], &mant[i + 1..]),
        None => (mant, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(Error::invalid("decimal", format!("no digits in {t:?}")));
    }
    if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) {
        return Err(Error::invalid("decimal", format!("not a decimal: {t:?}")));
    }
    let digits = format!("{int_part}{frac_part}");
    let mut num = Integer::new();
    num.assign(Integer::parse(if digits.is_empty() { "0" } else { &digits }).unwrap());
    let scale = exp - frac_part.len() as i64;
    let ten = Integer::from(10);
    let mut r = Rational::from(num);
    if scale >= 0 {
        r *= Rational::from(ten.pow(scale as u32));
    } else {
        r /= Rational::from(ten.pow((-scale) as u32));
    }
    if neg {
        r = -r;
    }
    Ok(r)
}

/// A point of R/Z as a 128-bit wrapping fraction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Phase(pub u128);

const TWO_M128: f64 = 1.0 / 340282366920938463463374607431768211456.0;

impl Phase {
    pub fn from_f64(x: f64) -> Phase {
        let f = x - x.floor();
        // exact for doubles: f = m 2^-e with e <= 1074, keep top bits
        let v = (f * 2f64.powi(64)) as u128;
        let lowbits = ((f * 2f64.powi(64) - v as f64) * 2f64.powi(64)) as u128;
        Phase((v << 64).wrapping_add(lowbits))
    }

    pub fn shift(self, alpha: Phase, k: i64) -> Phase {
        Phase(self.0.wrapping_add(alpha.0.wrapping_mul(k as i128 as u128)))
    }

    pub fn add(self, other: Phase) -> Phase {
        Phase(self.0.wrapping_add(other.0))
    }

    pub fn value(self) -> f64 {
        self.0 as f64 * TWO_M128
    }

    /// Distance to the nearest integer.
    pub fn norm(self) -> f64 {
        let s = self.0 as i128;
        (s.unsigned_abs() as f64) * TWO_M128
    }

    /// `(sin(pi x), cos(pi x))` for the representative in `[0, 1)`, with full
    /// relative accuracy near zeros.
    pub fn sin_cos_pi(self) -> (f64, f64) {
        let s = self.0 as i128;
        let neg = s < 0;
        let a = s.unsigned_abs();
        let quarter = 1u128 << 126;
        let half = 1u128 << 127;
        let (sa, c) = if a <= quarter {
            let ang = std::f64::consts::PI * (a as f64 * TWO_M128);
            ang.sin_cos()
        } else {
            let r = half - a;
            let ang = std::f64::consts::PI * (r as f64 * TWO_M128);
            let (s, c) = ang.sin_cos();
            (c, s)
        };
        (sa, if neg { -c } else { c })
    }

    pub fn cos_pi(self) -> f64 {
        self.sin_cos_pi().1
    }

    /// `ln|cos(pi x)|`.
    pub fn ln_abs_cos_pi(self) -> f64 {
        self.cos_pi().abs().ln()
    }
}
