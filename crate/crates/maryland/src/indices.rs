//! Per-scale resonance indices: `delta_n`, the minimal anti-resonance site
//! `(m_n, ell_n)`, the cosine table `c_{n,ell}` and the alternate index.
//!
//! All comparisons that decide a clause are done on fixed-point enclosures;
//! a comparison whose enclosures overlap is reported as undecided rather
//! than guessed.

use std::collections::BTreeMap;

use rug::ops::RemRounding;
use rug::{Float, Integer};
use serde::{Deserialize, Serialize};

use crate::cf::{beta_n, Frequency};
use crate::error::{Error, Result};
use crate::torus::TorusPoint;

/// Scales with `q_n` below this are handled by brute force only.
pub const LARGE_SCALE_Q: u64 = 20;
/// Default half-width of the cosine table.
pub const C_TABLE_MAX: i64 = 50;
/// Above this many distance evaluations clause (4) is not checked.
const CLAUSE4_BUDGET: u64 = 200_000_000;
/// Largest `q_n` for which the minimizer over a period is found by a scan.
const SCAN_LIMIT: u64 = 1 << 22;

/// Closed enclosure `[lo, hi]` of a nonnegative quantity in ulps.
#[derive(Clone, Debug)]
struct Bnd {
    lo: Integer,
    hi: Integer,
}

impl Bnd {
    fn of(p: &TorusPoint) -> Bnd {
        let (lo, hi) = p.norm_bounds();
        Bnd { lo, hi }
    }

    fn scaled(&self, k: &Integer) -> Bnd {
        Bnd {
            lo: Integer::from(&self.lo * k),
            hi: Integer::from(&self.hi * k),
        }
    }

    fn min(&self, other: &Bnd) -> Bnd {
        Bnd {
            lo: self.lo.clone().min(other.lo.clone()),
            hi: self.hi.clone().min(other.hi.clone()),
        }
    }
}

/// `a <= b`: `Some(true)`/`Some(false)` when certain.
fn cert_le(a: &Bnd, b: &Bnd) -> Option<bool> {
    if a.hi <= b.lo {
        Some(true)
    } else if a.lo > b.hi {
        Some(false)
    } else {
        None
    }
}

/// `a < b`.
fn cert_lt(a: &Bnd, b: &Bnd) -> Option<bool> {
    if a.hi < b.lo {
        Some(true)
    } else if a.lo >= b.hi {
        Some(false)
    } else {
        None
    }
}

/// Quantities of one scale shared by the constructions below.
pub(crate) struct Scale<'a> {
    pub f: &'a Frequency,
    pub n: usize,
    pub q: Integer,
    pub p: Integer,
    pub a_next: Integer,
    pub psi: TorusPoint,
    gap: Bnd,
}

impl<'a> Scale<'a> {
    pub fn new(f: &'a Frequency, theta: &TorusPoint, n: usize) -> Result<Scale<'a>> {
        let q = f.q(n as isize)?.clone();
        let p = f.p(n as isize)?.clone();
        let a_next = f.a(n + 1)?.clone();
        let theta = theta.with_bits(f.precision_bits());
        let psi = theta.minus_half();
        let gap = Bnd::of(&f.multiple(&q));
        if gap.lo == 0 {
            return Err(Error::PrecisionExhausted {
                depth: n,
                bits: f.precision_bits(),
            });
        }
        Ok(Scale {
            f,
            n,
            q,
            p,
            a_next,
            psi,
            gap,
        })
    }

    fn alpha(&self) -> &TorusPoint {
        self.f.value()
    }

    /// `theta - 1/2 + k alpha`.
    pub fn site(&self, k: &Integer) -> TorusPoint {
        self.psi.shift(self.alpha(), k)
    }

    fn dist(&self, k: &Integer) -> Bnd {
        Bnd::of(&self.site(k))
    }

    /// `||q_n (theta - 1/2)||`.
    fn phase_dist(&self) -> Bnd {
        Bnd::of(&self.psi.scale(&self.q))
    }

    /// Representative of `k` in `[-q/2, q/2)` and the quotient.
    fn split(&self, k: &Integer) -> (Integer, Integer) {
        let h = Integer::from(&self.q >> 1);
        let t = Integer::from(k + &h);
        let (l, _) = t.div_rem_floor(self.q.clone());
        let m = k - Integer::from(&l * &self.q);
        (m, l)
    }

    fn in_range(&self, m: &Integer) -> bool {
        let twice = Integer::from(m << 1);
        twice >= Integer::from(-&self.q) && twice < self.q
    }
}

/// `delta_n = (ln||q_n(theta - 1/2)|| - ln||q_n alpha||) / q_n` at the
/// precision of the frequency.
pub fn delta_n(f: &Frequency, theta: &TorusPoint, n: usize) -> Result<Float> {
    let s = Scale::new(f, theta, n)?;
    let x = s.psi.scale(&s.q);
    if x.may_be_integer() {
        return Err(Error::SingularPhase { n });
    }
    let prec = f.precision_bits();
    let num = x.norm_dist(prec).ln() - f.gap(n, prec)?.ln();
    Ok(num / Float::with_val(prec, &s.q))
}

/// `delta_n * q_n = ln e^{delta_n q_n}`, the log-space form used throughout.
pub fn delta_n_times_q(f: &Frequency, theta: &TorusPoint, n: usize) -> Result<f64> {
    let d = delta_n(f, theta, n)?;
    let q = Float::with_val(d.prec(), f.q(n as isize)?);
    Ok((d * q).to_f64())
}

/// `max(0, delta_n)`. Unlike [`delta_n`] this is finite when
/// `q_n(theta - 1/2)` is (numerically) an integer, where `delta_n = -inf`.
pub fn delta_n_plus(f: &Frequency, theta: &TorusPoint, n: usize) -> Result<f64> {
    match delta_n(f, theta, n) {
        Ok(d) => Ok(d.to_f64().max(0.0)),
        Err(Error::SingularPhase { .. }) => {
            let s = Scale::new(f, theta, n)?;
            if cert_le(&s.phase_dist(), &s.gap) == Some(true) {
                Ok(0.0)
            } else {
                Err(Error::SingularPhase { n })
            }
        }
        Err(e) => Err(e),
    }
}

/// Largest `max(0, delta_n)` over `n_min <= n < K`.
pub fn delta_estimate(f: &Frequency, theta: &TorusPoint, n_min: usize) -> Result<f64> {
    let mut best = 0.0f64;
    for n in n_min..f.depth() {
        best = best.max(delta_n(f, theta, n)?.to_f64());
    }
    Ok(best)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MinimalKind {
    Generic,
    TildeCase,
}

/// Output of the explicit construction of a minimal site.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MinimalSite {
    pub m: i128,
    pub ell: i128,
    pub kind: MinimalKind,
    pub j0: i128,
    pub j1: i128,
}

fn to_i128(x: &Integer, what: &str) -> Result<i128> {
    x.to_i128()
        .ok_or_else(|| Error::invalid(what, "exceeds 128-bit range"))
}

/// Steps one to three of the construction: `j_0`, `j_1` and the split of
/// `k_n = j_0 + j_1` into `m + ell q_n`.
pub(crate) fn generic_site(s: &Scale) -> Result<(Integer, Integer, Integer, Integer)> {
    let bits = s.f.precision_bits();
    // ||q_n(theta - 1/2)|| = 0 is allowed here: j_0 = 0 then qualifies
    let x = s.psi.scale(&s.q);
    let xd = Bnd::of(&x);
    let (dlo, dw) = s.f.signed_gap(s.n)?;
    // midpoints in half-ulps
    let xs = {
        let one = Integer::from(1) << bits;
        let half = Integer::from(&one >> 1);
        let lo = x.lo().clone();
        let lo = if lo >= half { lo - one } else { lo };
        Integer::from(&lo << 1) + x.width()
    };
    let dm = Integer::from(&dlo << 1) + &dw;
    let mut cands: Vec<Integer> = Vec::new();
    let period = Integer::from(1) << (bits + 1);
    for shift in [-1i32, 0, 1] {
        let num = -(&xs + Integer::from(&period * shift));
        let (fl, _) = num.clone().div_rem_floor(dm.clone());
        for off in -1..=2 {
            cands.push(Integer::from(&fl + off));
        }
    }
    cands.sort();
    cands.dedup();
    let two_x = xd.scaled(&Integer::from(2));
    let mut chosen: Option<Integer> = None;
    for j in cands {
        // (1): 2 ||q_n(theta - 1/2) + j q_n alpha|| <= ||q_n alpha||
        let y = s.psi.shift(s.f.value(), &j).scale(&s.q);
        let c1 = cert_le(&Bnd::of(&y).scaled(&Integer::from(2)), &s.gap);
        // (2): (2|j| - 1) ||q_n alpha|| <= 2 ||q_n(theta - 1/2)||
        let lhs = s.gap.scaled(&(Integer::from(j.abs_ref()) * 2u32 - 1u32).max(Integer::new()));
        let c2 = cert_le(&lhs, &two_x);
        if c1 == Some(true) && c2 == Some(true) {
            let better = match &chosen {
                None => true,
                Some(c) => {
                    let (a, b) = (Integer::from(j.abs_ref()), Integer::from(c.abs_ref()));
                    a < b || (a == b && j < *c)
                }
            };
            if better {
                chosen = Some(j);
            }
        }
    }
    let j0 = chosen.ok_or_else(|| {
        Error::ConstructionFailed(format!("no certified j_0 at scale {}", s.n))
    })?;
    // p: nearest integer to q_n * (theta - 1/2 + j_0 alpha), representative in [0, 1)
    let z = s.psi.shift(s.f.value(), &j0);
    let zq = Integer::from(z.lo() << 1) + z.width(); // half-ulps
    let zq = Integer::from(&zq * &s.q);
    let p = {
        let denom = Integer::from(1) << (bits + 1);
        let t = zq + Integer::from(&denom >> 1);
        t.div_rem_floor(denom).0
    };
    // j_1 p_n == -p (mod q_n)
    let inv = s
        .p
        .clone()
        .invert(&s.q)
        .map_err(|_| Error::ConstructionFailed("p_n not invertible mod q_n".into()))?;
    let r = (-p * inv).rem_euc(s.q.clone());
    let (j1, _) = s.split(&r);
    let k = Integer::from(&j0 + &j1);
    let (m, ell) = s.split(&k);
    Ok((m, ell, j0, j1))
}

/// Index in `[-q/2, q/2)` minimizing `||theta - 1/2 + k alpha||`.
fn period_minimizer(s: &Scale) -> Result<Integer> {
    let q = s.q.to_u64().filter(|&q| q <= SCAN_LIMIT);
    match q {
        Some(q) => {
            let start = -((q / 2) as i128);
            let mut pt = s.site(&Integer::from(start));
            let mut best = (pt.norm_dist(64), start);
            for i in 1..q as i128 {
                pt = pt.add(s.f.value());
                let d = pt.norm_dist(64);
                if d < best.0 {
                    best = (d, start + i);
                }
            }
            Ok(Integer::from(best.1))
        }
        None => Err(Error::ConstructionFailed("period too long to scan".into())),
    }
}

/// The explicit construction of a minimal pair at scale `n`.
pub fn theta_minimal(f: &Frequency, theta: &TorusPoint, n: usize) -> Result<MinimalSite> {
    let s = Scale::new(f, theta, n)?;
    if s.q < LARGE_SCALE_Q {
        return Err(Error::SmallScale {
            n,
            q: s.q.to_string(),
            threshold: LARGE_SCALE_Q,
        });
    }
    let (m, ell, j0, j1) = generic_site(&s)?;
    let generic = MinimalSite {
        m: to_i128(&m, "m_n")?,
        ell: to_i128(&ell, "ell_n")?,
        kind: MinimalKind::Generic,
        j0: to_i128(&j0, "j_0")?,
        j1: to_i128(&j1, "j_1")?,
    };
    if s.a_next >= 4 || ell == 0 {
        return Ok(generic);
    }
    let tilde = if s.q <= SCAN_LIMIT {
        Some(period_minimizer(&s)?)
    } else {
        // the minimizer, when it is below a third of ||q_n alpha||, is unique
        // and belongs to the candidate set
        candidate_set(&s, &m, &ell)?
            .into_iter()
            .find(|c| cert_lt(&s.dist(c).scaled(&Integer::from(3)), &s.gap) == Some(true))
    };
    if let Some(t) = tilde {
        if cert_lt(&s.dist(&t).scaled(&Integer::from(3)), &s.gap) == Some(true) {
            return Ok(MinimalSite {
                m: to_i128(&t, "m_n")?,
                ell: 0,
                kind: MinimalKind::TildeCase,
                ..generic
            });
        }
    }
    Ok(generic)
}

/// Clauses of the minimality definition, in checking order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Clause {
    /// `m in [-q_n/2, q_n/2)`
    SiteRange,
    /// `|ell| <= (e^{delta_n q_n} + q_n + 1/2) / q_n`
    ShiftBound,
    /// `||theta - 1/2 + (m + ell q_n) alpha|| < (1/2 + 1/(2 q_n)) ||q_n alpha||`
    Proximity,
    /// local minimality along the translates (large `a_{n+1}`)
    TranslateMinimum,
    /// minimality over one period (small `a_{n+1}`)
    PeriodMinimum,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "verdict", content = "clause")]
pub enum Verdict {
    Pass,
    Fail(Clause),
    /// enclosures too wide (or the scan too long) to decide this clause
    Undecided(Clause),
}

impl Verdict {
    pub fn passed(&self) -> bool {
        matches!(self, Verdict::Pass)
    }
}

fn decide(c: Option<bool>, clause: Clause) -> Option<Verdict> {
    match c {
        Some(true) => None,
        Some(false) => Some(Verdict::Fail(clause)),
        None => Some(Verdict::Undecided(clause)),
    }
}

/// Minimum of the distance enclosures over `site + k`, `k` in `ks`.
fn min_dist(s: &Scale, site: &Integer, ks: std::ops::Range<i128>) -> Bnd {
    let mut pt = s.site(&Integer::from(site + ks.start));
    let mut best = Bnd::of(&pt);
    for _ in ks.start + 1..ks.end {
        pt = pt.add(s.f.value());
        best = best.min(&Bnd::of(&pt));
    }
    best
}

/// Checks the four clauses literally and reports the first that fails.
pub fn verify_minimal(f: &Frequency, theta: &TorusPoint, n: usize, m: i128, ell: i128) -> Verdict {
    let s = match Scale::new(f, theta, n) {
        Ok(s) => s,
        Err(_) => return Verdict::Undecided(Clause::SiteRange),
    };
    let mi = Integer::from(m);
    if !s.in_range(&mi) {
        return Verdict::Fail(Clause::SiteRange);
    }
    // (2): (|ell| q_n - q_n - 1/2) ||q_n alpha|| <= ||q_n(theta - 1/2)||, doubled
    let lhs_k = (Integer::from(ell.unsigned_abs()) * &s.q) * 2u32 - Integer::from(&s.q * 2u32) - 1u32;
    if lhs_k > 0 {
        let c = cert_le(&s.gap.scaled(&lhs_k), &s.phase_dist().scaled(&Integer::from(2)));
        if let Some(v) = decide(c, Clause::ShiftBound) {
            return v;
        }
    }
    // (3): 2 q_n ||y|| < (q_n + 1) ||q_n alpha||
    let k = &mi + Integer::from(ell) * &s.q;
    let c = cert_lt(
        &s.dist(&k).scaled(&Integer::from(&s.q * 2u32)),
        &s.gap.scaled(&Integer::from(&s.q + 1u32)),
    );
    if let Some(v) = decide(c, Clause::Proximity) {
        return v;
    }
    // (4)
    let twenty = Integer::from(20);
    let q = match s.q.to_u64() {
        Some(q) => q,
        None => return Verdict::Undecided(Clause::TranslateMinimum),
    };
    if s.a_next >= 4 {
        let jmax: Integer = Integer::from(&s.a_next / 6u32);
        let work = Integer::from(&jmax * 2u32) + 1u32;
        let work = Integer::from(&work * (2 * q - 1));
        if work > CLAUSE4_BUDGET {
            return Verdict::Undecided(Clause::TranslateMinimum);
        }
        let jmax = jmax.to_i128().unwrap();
        let qi = q as i128;
        for j in -jmax..=jmax {
            let centre = Integer::from(m + j * qi);
            let lhs = s.dist(&centre);
            let rhs = min_dist(&s, &centre, -(qi - 1)..qi).scaled(&twenty);
            if let Some(v) = decide(cert_le(&lhs, &rhs), Clause::TranslateMinimum) {
                return v;
            }
        }
    } else {
        if q > CLAUSE4_BUDGET {
            return Verdict::Undecided(Clause::PeriodMinimum);
        }
        let lo = -((q / 2) as i128);
        let rhs = min_dist(&s, &Integer::new(), lo..lo + q as i128).scaled(&twenty);
        let lhs = s.dist(&mi);
        if let Some(v) = decide(cert_le(&lhs, &rhs), Clause::PeriodMinimum) {
            return v;
        }
    }
    Verdict::Pass
}

/// The candidate set for the minimizer over a period when `a_{n+1} <= 3`,
/// keyed on `(a_{n+1}, ell_n, a_{n+2}, sign ell_n)` for the generic pair
/// `(m_n, ell_n)`.
fn candidate_set(s: &Scale, m: &Integer, ell: &Integer) -> Result<Vec<Integer>> {
    let a = s
        .a_next
        .to_u32()
        .filter(|a| (1..=3).contains(a))
        .ok_or_else(|| Error::WrongBranch { a: s.a_next.to_string() })?;
    let b: i32 = if *ell > 0 { 1 } else { -1 };
    let q_prev = s.f.q(s.n as isize - 1)?.clone();
    let abs_ell = Integer::from(ell.abs_ref());
    let back = m - Integer::from(&q_prev * b);
    let fwd = m + (Integer::from(&s.q - &q_prev) * b);
    let out = match a {
        2 | 3 => {
            if abs_ell == a {
                vec![back]
            } else {
                vec![]
            }
        }
        _ => {
            if abs_ell == 1 {
                vec![back]
            } else if abs_ell == 2 {
                let a2 = s.f.a(s.n + 2)?;
                if *a2 >= 2 {
                    vec![fwd]
                } else {
                    vec![back, fwd]
                }
            } else {
                vec![]
            }
        }
    };
    Ok(out)
}

/// The candidate set for `m~_n` built from the generic construction.
pub fn tilde_m_candidates(f: &Frequency, theta: &TorusPoint, n: usize) -> Result<Vec<i128>> {
    let s = Scale::new(f, theta, n)?;
    if s.a_next >= 4 {
        return Err(Error::WrongBranch { a: s.a_next.to_string() });
    }
    let (m, ell, _, _) = generic_site(&s)?;
    candidate_set(&s, &m, &ell)?
        .iter()
        .map(|c| to_i128(c, "candidate"))
        .collect()
}

/// `(m_n, ell_n)` from the generic construction, before the small-`a_{n+1}`
/// refinement.
pub fn generic_pair(f: &Frequency, theta: &TorusPoint, n: usize) -> Result<(i128, i128)> {
    let s = Scale::new(f, theta, n)?;
    let (m, ell, _, _) = generic_site(&s)?;
    Ok((to_i128(&m, "m_n")?, to_i128(&ell, "ell_n")?))
}

/// One entry of the cosine table.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CosEntry {
    pub c: f64,
    pub ln_c: f64,
}

/// Default window `min(50, floor(q_{n+1} / (6 q_n)))`.
pub fn default_window(f: &Frequency, n: usize) -> Result<i64> {
    let w = f.q(n as isize + 1)? / Integer::from(f.q(n as isize)? * 6u32);
    Ok(w.to_i64().unwrap_or(i64::MAX).min(C_TABLE_MAX))
}

/// `c_{n,ell} = |cos(pi theta_{m_n + ell q_n})|` for `|ell| <= window`.
pub fn c_table(
    f: &Frequency,
    theta: &TorusPoint,
    n: usize,
    m: i128,
    window: i64,
) -> Result<BTreeMap<i64, CosEntry>> {
    let theta = theta.with_bits(f.precision_bits());
    let q = f.q(n as isize)?;
    let prec = f.precision_bits();
    let mut out = BTreeMap::new();
    for ell in -window..=window {
        let k = Integer::from(m) + Integer::from(q * ell);
        let c = theta.shift(f.value(), &k).cos_pi(prec).abs();
        let ln_c = Float::with_val(prec, c.ln_ref()).to_f64();
        out.insert(ell, CosEntry { c: c.to_f64(), ln_c });
    }
    Ok(out)
}

/// `delta'_n = (ln q_{n+1} + ln c_{n,0}) / q_n`.
pub fn delta_alternate(f: &Frequency, theta: &TorusPoint, n: usize) -> Result<f64> {
    let site = theta_minimal(f, theta, n)?;
    delta_alternate_at(f, theta, n, site.m)
}

pub fn delta_alternate_at(f: &Frequency, theta: &TorusPoint, n: usize, m: i128) -> Result<f64> {
    let prec = f.precision_bits();
    let theta = theta.with_bits(prec);
    let c0 = theta.shift_by(f.value(), m).cos_pi(prec).abs();
    let v = Float::with_val(prec, f.q(n as isize + 1)?).ln() + c0.ln();
    Ok((v / Float::with_val(prec, f.q(n as isize)?)).to_f64())
}

/// Per-scale record of resonances and anti-resonances.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ResonanceProfile {
    pub n: usize,
    pub q_n: String,
    pub q_next: String,
    pub beta_n: f64,
    pub delta_n: f64,
    /// `delta_n * q_n`, i.e. `ln e^{delta_n q_n}`
    pub delta_n_q: f64,
    pub delta_n_prime: f64,
    pub m_n: i128,
    pub ell_n: i128,
    pub minimal_kind: MinimalKind,
    pub c_table: BTreeMap<i64, CosEntry>,
}

impl ResonanceProfile {
    pub fn c_at_ell_n(&self) -> Option<f64> {
        let ell = i64::try_from(self.ell_n).ok()?;
        self.c_table.get(&ell).map(|e| e.c)
    }
}

/// Builds the profile of scale `n` with the default cosine window, or with
/// `window` when given.
pub fn profile(
    f: &Frequency,
    theta: &TorusPoint,
    n: usize,
    window: Option<i64>,
) -> Result<ResonanceProfile> {
    let site = theta_minimal(f, theta, n)?;
    let d = delta_n(f, theta, n)?;
    let q = f.q(n as isize)?;
    let dq = Float::with_val(d.prec(), &d * q).to_f64();
    let window = match window {
        Some(w) => w,
        None => default_window(f, n)?,
    };
    let window = window.max(i64::try_from(site.ell.abs()).unwrap_or(i64::MAX).min(C_TABLE_MAX));
    Ok(ResonanceProfile {
        n,
        q_n: q.to_string(),
        q_next: f.q(n as isize + 1)?.to_string(),
        beta_n: beta_n(f, n)?,
        delta_n: d.to_f64(),
        delta_n_q: dq,
        delta_n_prime: delta_alternate_at(f, theta, n, site.m)?,
        m_n: site.m,
        ell_n: site.ell,
        minimal_kind: site.kind,
        c_table: c_table(f, theta, n, site.m, window)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn theta(s: &str) -> TorusPoint {
        TorusPoint::from_decimal(s, 256).unwrap()
    }

    #[test]
    fn delta_n_half_gap_offset() {
        // ||q_n(theta - 1/2)|| = ||q_n alpha|| / 2 by construction
        let f = Frequency::golden_mean(20, 256);
        let n = 10;
        let q = f.q(n).unwrap().clone();
        let gap = f.multiple(&q);
        // theta - 1/2 = (q_n alpha - p_n) / (2 q_n)
        let (lo, _) = f.signed_gap(n as usize).unwrap();
        let x = TorusPoint::from_parts(
            &lo / Integer::from(&q * 2u32),
            Integer::from(1),
            256,
        );
        let th = x.add(&theta("0.5"));
        let d = delta_n(&f, &th, n as usize).unwrap().to_f64();
        let expected = -(2f64.ln()) / q.to_f64();
        assert!((d - expected).abs() < 1e-12, "{d} vs {expected}");
        let _ = gap;
    }

    #[test]
    fn delta_n_upper_boundary() {
        // theta with q_n(theta - 1/2) = 1/2 mod 1
        let f = Frequency::golden_mean(20, 256);
        let n = 9usize;
        let q = f.q_u64(n).unwrap();
        let th = TorusPoint::from_rational(
            &(rug::Rational::from((1, 2)) + rug::Rational::from((1, 2 * q))),
            256,
        );
        let d = delta_n(&f, &th, n).unwrap().to_f64();
        let g = f.gap(n, 256).unwrap().to_f64();
        let expected = ((0.5f64).ln() - g.ln()) / q as f64;
        assert!((d - expected).abs() < 1e-14);
        assert!(d < beta_n(&f, n).unwrap());
    }

    #[test]
    fn singular_phase_is_reported() {
        let f = Frequency::golden_mean(20, 256);
        let th = theta("0.5");
        assert!(matches!(delta_n(&f, &th, 8), Err(Error::SingularPhase { .. })));
    }

    #[test]
    fn small_scale_rejected() {
        let f = Frequency::golden_mean(20, 256);
        assert!(matches!(
            theta_minimal(&f, &theta("0.3"), 5),
            Err(Error::SmallScale { .. })
        ));
    }

    #[test]
    fn construction_passes_verification_golden() {
        let f = Frequency::golden_mean(30, 256);
        for n in 7..20 {
            let s = theta_minimal(&f, &theta("0.3"), n).unwrap();
            assert_eq!(verify_minimal(&f, &theta("0.3"), n, s.m, s.ell), Verdict::Pass, "n = {n}");
        }
    }

    #[test]
    fn range_clause_fires_first() {
        let f = Frequency::golden_mean(30, 256);
        let n = 12;
        let q = f.q_u64(n).unwrap() as i128;
        let s = theta_minimal(&f, &theta("0.3"), n).unwrap();
        let v = verify_minimal(&f, &theta("0.3"), n, (q + 1) / 2, s.ell);
        assert_eq!(v, Verdict::Fail(Clause::SiteRange));
    }

    #[test]
    fn candidate_table_small_cases() {
        let f = Frequency::golden_mean(30, 256);
        assert!(matches!(
            tilde_m_candidates(
                &Frequency::from_quotients(&[Integer::from(7)], 30, 256).unwrap(),
                &theta("0.3"),
                0
            ),
            Err(Error::WrongBranch { .. })
        ));
        let _ = f;
    }
}
