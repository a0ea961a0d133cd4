//! Continued fractions and convergents.
//!
//! Convergents follow `p_{-1} = 1, q_{-1} = 0, p_0 = 0, q_0 = 1` and
//! `q_{k+1} = a_{k+1} q_k + q_{k-1}`, so the golden mean has
//! `q_1, q_2, ... = 1, 2, 3, 5, ...`.

use rug::ops::Pow;
use rug::{Float, Integer, Rational};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::torus::{parse_decimal, TorusPoint};

pub const DEFAULT_PRECISION_BITS: u32 = 256;

/// An irrational frequency in (0, 1) with certified partial quotients.
#[derive(Clone, Debug)]
pub struct Frequency {
    value: TorusPoint,
    quotients: Vec<Integer>,
    // stored with offset one: index 0 holds p_{-1}, q_{-1}
    p: Vec<Integer>,
    q: Vec<Integer>,
    golden_tail: bool,
}

fn convergents(quotients: &[Integer]) -> (Vec<Integer>, Vec<Integer>) {
    let mut p = vec![Integer::from(1), Integer::from(0)];
    let mut q = vec![Integer::from(0), Integer::from(1)];
    for a in quotients {
        let k = p.len();
        let np = Integer::from(a * &p[k - 1]) + &p[k - 2];
        let nq = Integer::from(a * &q[k - 1]) + &q[k - 2];
        p.push(np);
        q.push(nq);
    }
    (p, q)
}

/// Continued-fraction digits of every point in the open interval
/// `(lo, hi)`, stopping when they stop agreeing.
fn expand_interval(mut lo: Rational, mut hi: Rational, depth: usize) -> (Vec<Integer>, bool) {
    let mut out = Vec::with_capacity(depth);
    while out.len() < depth {
        if lo <= 0 || hi > 1 {
            return (out, false);
        }
        // x in (lo, hi) => 1/x in (1/hi, 1/lo)
        let inv_hi = Rational::from(hi.recip_ref());
        let inv_lo = Rational::from(lo.recip_ref());
        let a_min = Integer::from(inv_hi.floor_ref());
        let a_max = Integer::from(inv_lo.ceil_ref()) - 1u32;
        if a_min != a_max || a_min == 0 {
            return (out, false);
        }
        let nlo = inv_hi - &a_min;
        let nhi = inv_lo - &a_min;
        out.push(a_min);
        lo = nlo;
        hi = nhi;
    }
    (out, true)
}

impl Frequency {
    /// Expands `x` to `depth` partial quotients, failing with
    /// `PrecisionExhausted` when the error interval no longer pins a digit.
    pub fn expand(x: &TorusPoint, depth: usize) -> Result<Frequency> {
        if depth == 0 {
            return Err(Error::invalid("depth", "must be at least 1"));
        }
        let quotients = Self::certified_quotients(x, depth)?;
        let (p, q) = convergents(&quotients);
        Ok(Frequency {
            value: x.clone(),
            quotients,
            p,
            q,
            golden_tail: false,
        })
    }

    /// Expands as far as the precision allows.
    pub fn expand_max(x: &TorusPoint) -> Result<Frequency> {
        let one = Integer::from(1) << x.bits();
        let lo = Rational::from((x.lo().clone(), one.clone()));
        let hi = Rational::from((Integer::from(x.lo() + x.width()), one));
        let (quotients, _) = if x.is_exact() {
            return Err(Error::invalid("value", "dyadic rational, not irrational"));
        } else {
            expand_interval(lo, hi, x.bits() as usize * 2)
        };
        if quotients.is_empty() {
            return Err(Error::PrecisionExhausted { depth: 0, bits: x.bits() });
        }
        let (p, q) = convergents(&quotients);
        Ok(Frequency {
            value: x.clone(),
            quotients,
            p,
            q,
            golden_tail: false,
        })
    }

    fn certified_quotients(x: &TorusPoint, depth: usize) -> Result<Vec<Integer>> {
        if x.is_exact() {
            // A dyadic rational has a terminating expansion; only the digits
            // before the end are meaningful for an irrational nearby.
            let r = Rational::from((x.lo().clone(), Integer::from(1) << x.bits()));
            if r <= 0 {
                return Err(Error::invalid("value", "must lie in (0, 1)"));
            }
            return Err(Error::PrecisionExhausted { depth: 0, bits: x.bits() });
        }
        let one = Integer::from(1) << x.bits();
        let lo = Rational::from((x.lo().clone(), one.clone()));
        let hi = Rational::from((Integer::from(x.lo() + x.width()), one));
        let (qs, complete) = expand_interval(lo, hi, depth);
        if !complete {
            return Err(Error::PrecisionExhausted {
                depth: qs.len(),
                bits: x.bits(),
            });
        }
        Ok(qs)
    }

    /// Frequency with the given leading partial quotients followed by a tail
    /// of ones, stored to `depth` quotients. The value is materialized at
    /// `bits` from the exact quotient data.
    pub fn from_quotients(prefix: &[Integer], depth: usize, bits: u32) -> Result<Frequency> {
        if prefix.is_empty() {
            return Err(Error::invalid("quotients", "need at least one partial quotient"));
        }
        if prefix.iter().any(|a| *a <= 0) {
            return Err(Error::invalid("quotients", "partial quotients must be positive"));
        }
        if bits < 16 {
            return Err(Error::invalid("precision_bits", "must be at least 16"));
        }
        let mut quotients = prefix.to_vec();
        while quotients.len() < depth {
            quotients.push(Integer::from(1));
        }
        let (p, q) = convergents(prefix);
        let k = prefix.len();
        let size_bits = q[k + 1].significant_bits();
        let prec = bits + 2 * size_bits + 64;
        let phi = (Float::with_val(prec, 5).sqrt() + 1u32) / 2u32;
        let num = Float::with_val(prec, &phi * &p[k + 1]) + &p[k];
        let den = Float::with_val(prec, &phi * &q[k + 1]) + &q[k];
        let value = TorusPoint::from_float(&(num / den), bits);
        let (p, q) = convergents(&quotients);
        Ok(Frequency {
            value,
            quotients,
            p,
            q,
            golden_tail: true,
        })
    }

    pub fn golden_mean(depth: usize, bits: u32) -> Frequency {
        Self::from_quotients(&[Integer::from(1)], depth, bits).expect("valid quotients")
    }

    /// Frequency whose first partial quotients are `ceil(e^{q_n})`, as long
    /// as `q_n <= max_q`, followed by a tail of ones.
    pub fn liouville(max_q: u64, depth: usize, bits: u32) -> Result<Frequency> {
        Self::from_quotients(&liouville_quotients(max_q), depth, bits)
    }

    /// Same quotient data at a new depth; for expansions of a value the new
    /// digits are certified from the stored value.
    pub fn with_depth(&self, depth: usize) -> Result<Frequency> {
        if depth <= self.quotients.len() {
            let quotients = self.quotients[..depth.max(1)].to_vec();
            let (p, q) = convergents(&quotients);
            return Ok(Frequency {
                value: self.value.clone(),
                quotients,
                p,
                q,
                golden_tail: self.golden_tail,
            });
        }
        if self.golden_tail {
            let mut quotients = self.quotients.clone();
            quotients.resize(depth, Integer::from(1));
            let (p, q) = convergents(&quotients);
            Ok(Frequency {
                value: self.value.clone(),
                quotients,
                p,
                q,
                golden_tail: true,
            })
        } else {
            Frequency::expand(&self.value, depth)
        }
    }

    pub fn value(&self) -> &TorusPoint {
        &self.value
    }

    pub fn precision_bits(&self) -> u32 {
        self.value.bits()
    }

    /// Number of stored partial quotients `K`; convergents exist for `0..=K`.
    pub fn depth(&self) -> usize {
        self.quotients.len()
    }

    pub fn quotients(&self) -> &[Integer] {
        &self.quotients
    }

    pub fn has_golden_tail(&self) -> bool {
        self.golden_tail
    }

    /// `a_k` for `1 <= k <= K`.
    pub fn a(&self, k: usize) -> Result<&Integer> {
        if k == 0 || k > self.depth() {
            return Err(Error::IndexOutOfRange { index: k, depth: self.depth() });
        }
        Ok(&self.quotients[k - 1])
    }

    /// `q_k` for `-1 <= k <= K`.
    pub fn q(&self, k: isize) -> Result<&Integer> {
        let i = k + 1;
        if i < 0 || i as usize >= self.q.len() {
            return Err(Error::IndexOutOfRange {
                index: k.max(0) as usize,
                depth: self.depth(),
            });
        }
        Ok(&self.q[i as usize])
    }

    pub fn p(&self, k: isize) -> Result<&Integer> {
        let i = k + 1;
        if i < 0 || i as usize >= self.p.len() {
            return Err(Error::IndexOutOfRange {
                index: k.max(0) as usize,
                depth: self.depth(),
            });
        }
        Ok(&self.p[i as usize])
    }

    /// `q_n` as u64 when it fits.
    pub fn q_u64(&self, n: usize) -> Result<u64> {
        self.q(n as isize)?
            .to_u64()
            .ok_or_else(|| Error::invalid("q_n", "does not fit in 64 bits"))
    }

    /// `k alpha` mod 1 in fixed point.
    pub fn multiple(&self, k: &Integer) -> TorusPoint {
        self.value.scale(k)
    }

    /// Signed `q_k alpha - p_k` as a fixed-point interval `(lo, lo + width)`
    /// in ulps; its sign is `(-1)^k`.
    pub fn signed_gap(&self, k: usize) -> Result<(Integer, Integer)> {
        let q = self.q(k as isize)?;
        let p = self.p(k as isize)?;
        let bits = self.value.bits();
        let lo = Integer::from(self.value.lo() * q) - Integer::from(p << bits);
        let w = Integer::from(self.value.width() * q);
        Ok((lo, w))
    }

    /// `||q_k alpha||` at precision `prec`.
    pub fn gap(&self, k: usize, prec: u32) -> Result<Float> {
        let (lo, w) = self.signed_gap(k)?;
        let mid = Integer::from(&lo << 1) + &w;
        let mut f = Float::with_val(prec.max(self.value.bits() + 8), mid.abs());
        f >>= self.value.bits() + 1;
        Ok(Float::with_val(prec, f))
    }

    /// Serializable description of the exact data.
    pub fn to_spec(&self) -> FrequencySpec {
        FrequencySpec::Quotients {
            quotients: self.quotients.iter().map(Quotient::from).collect(),
            precision_bits: self.value.bits(),
        }
    }

    pub fn from_json(s: &str) -> Result<Frequency> {
        let spec: FrequencySpec =
            serde_json::from_str(s).map_err(|e| Error::invalid("frequency", e.to_string()))?;
        spec.build()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_spec()).expect("serializable")
    }
}

/// `ceil(e^{q_n})` quotients while `q_n <= max_q`.
pub fn liouville_quotients(max_q: u64) -> Vec<Integer> {
    let mut out = Vec::new();
    let (mut q_prev, mut q) = (Integer::from(0), Integer::from(1));
    while q <= max_q {
        let qf = q.to_f64();
        let prec = (qf * std::f64::consts::LOG2_E) as u32 + 128;
        let e = Float::with_val(prec, Float::with_val(prec, &q).exp());
        let a = e.ceil().to_integer().expect("finite");
        let next = Integer::from(&a * &q) + &q_prev;
        out.push(a);
        q_prev = q;
        q = next;
    }
    out
}

/// `ln q_{n+1} / q_n`.
pub fn beta_n(f: &Frequency, n: usize) -> Result<f64> {
    let qn1 = f.q(n as isize + 1)?;
    let qn = f.q(n as isize)?;
    let prec = 128;
    let num = Float::with_val(prec, qn1).ln();
    Ok((num / Float::with_val(prec, qn)).to_f64())
}

/// Largest `beta_n` over `n_min <= n < K`: a finite-depth lower proxy for
/// the limsup, nondecreasing in depth.
pub fn beta_estimate(f: &Frequency, n_min: usize) -> f64 {
    (n_min..f.depth())
        .filter_map(|n| beta_n(f, n).ok())
        .fold(0.0, f64::max)
}

/// Serialized form of a frequency.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum FrequencySpec {
    Quotients {
        quotients: Vec<Quotient>,
        #[serde(default = "default_bits")]
        precision_bits: u32,
    },
    Decimal {
        decimal: String,
        #[serde(default = "default_bits")]
        precision_bits: u32,
    },
}

fn default_bits() -> u32 {
    DEFAULT_PRECISION_BITS
}

impl FrequencySpec {
    pub fn build(&self) -> Result<Frequency> {
        match self {
            FrequencySpec::Quotients { quotients, precision_bits } => {
                let qs = quotients
                    .iter()
                    .map(Quotient::to_integer)
                    .collect::<Result<Vec<_>>>()?;
                Frequency::from_quotients(&qs, qs.len(), *precision_bits)
            }
            FrequencySpec::Decimal { decimal, precision_bits } => {
                let r = parse_decimal(decimal)?;
                if r <= 0 || r >= 1 {
                    return Err(Error::invalid("decimal", "frequency must lie in (0, 1)"));
                }
                Frequency::expand_max(&TorusPoint::from_rational(&r, *precision_bits))
            }
        }
    }
}

/// A partial quotient: a JSON number when small, a decimal string otherwise.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum Quotient {
    Small(u64),
    Big(String),
}

impl From<&Integer> for Quotient {
    fn from(a: &Integer) -> Self {
        match a.to_u64() {
            Some(v) => Quotient::Small(v),
            None => Quotient::Big(a.to_string()),
        }
    }
}

impl Quotient {
    pub fn to_integer(&self) -> Result<Integer> {
        match self {
            Quotient::Small(v) => Ok(Integer::from(*v)),
            Quotient::Big(s) => Integer::parse(s)
                .map(Integer::from)
                .map_err(|e| Error::invalid("quotients", e.to_string())),
        }
    }
}

/// Exact comparison helpers on fixed-point distances used by the
/// continued-fraction property checks.
pub mod exact {
    use super::*;

    /// Closed bounds of `||m alpha|| * 2^bits`.
    pub fn norm_multiple(f: &Frequency, m: &Integer) -> (Integer, Integer) {
        f.multiple(m).norm_bounds()
    }

    /// `Some(true)` if `||x|| <= ||y||` is certain, `Some(false)` if the
    /// reverse strict inequality is certain, `None` if undecided.
    pub fn le(x: &(Integer, Integer), y: &(Integer, Integer)) -> Option<bool> {
        if x.1 <= y.0 {
            Some(true)
        } else if x.0 > y.1 {
            Some(false)
        } else {
            None
        }
    }

    /// `10^k` helper for tests and constructions.
    pub fn pow10(k: u32) -> Integer {
        Integer::from(10).pow(k)
    }
}
