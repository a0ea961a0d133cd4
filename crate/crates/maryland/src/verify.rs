//! Scale-by-scale checks of eigenfunction decay.
//!
//! An eigenfunction is re-centred at its largest entry, normalized so that
//! `|phi(0)|^2 + |phi(-1)|^2 = 2`, and then tested against
//! `ln|phi(k)| <= -(L - max(0, delta_n) - c eps)|k|` on
//! `q_n/12 <= |k| < q_{n+1}/12` for every requested scale.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::cf::{beta_n, Frequency};
use crate::cocycle::{det_ptilde_at, lyapunov_closed, lyapunov_tilde, ModelParams};
use crate::error::{Error, Result};
use crate::indices::{delta_estimate, delta_n_plus, profile, theta_minimal, ResonanceProfile, LARGE_SCALE_Q};
use crate::interp::dist_to_multiples;
use crate::operator::{BoxOperator, Eigenpair};
use crate::torus::TorusPoint;

/// `|phi(0)|` and `|phi(-1)|` both below this cannot be normalized.
pub const NORMALIZABLE_FLOOR: f64 = 1e-8;

/// Largest `tau` in `(eps / (2 max(L, 1)), eps / max(L, 1)]` with `tau q`
/// integral, returned as `(tau, tau q)`.
pub fn block_radius(q: u64, lyapunov: f64, eps: f64) -> Result<(f64, i64)> {
    if !(eps > 0.0) {
        return Err(Error::invalid("eps", "must be positive"));
    }
    let m = lyapunov.max(1.0);
    let lo = eps / (2.0 * m);
    let hi = eps / m;
    // a relative slack of 1e-12 keeps decimal inputs such as 0.1 * 100 on
    // the closed end
    let b = (hi * q as f64 * (1.0 + 1e-12)).floor() as i64;
    if b < 1 || (b as f64) <= lo * q as f64 {
        return Err(Error::EmptyInterval { q, lo, hi });
    }
    Ok((b as f64 / q as f64, b))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScalePartition {
    pub n: usize,
    pub q_n: u64,
    pub q_next: u64,
    pub tau: f64,
    pub b_n: i64,
    pub m_n: i64,
    pub ell_n: i64,
    /// `dist(m_n, q_n Z) <= b_n`: the blocks split around `m_n`.
    pub m_resonant: bool,
}

impl ScalePartition {
    /// `R_ell = [ell q_n - b_n, ell q_n + b_n]`.
    pub fn block(&self, ell: i64) -> (i64, i64) {
        let c = ell * self.q_n as i64;
        (c - self.b_n, c + self.b_n)
    }

    /// `(R_ell^-, R_ell^+)` with `R^- = [ell q - b, ell q + m - 1]` and
    /// `R^+ = [ell q + m + 1, ell q + b]`, when `m_n` is resonant.
    pub fn split_block(&self, ell: i64) -> Option<((i64, i64), (i64, i64))> {
        if !self.m_resonant {
            return None;
        }
        let c = ell * self.q_n as i64;
        Some(((c - self.b_n, c + self.m_n - 1), (c + self.m_n + 1, c + self.b_n)))
    }

    /// Indices `ell` whose block meets `[lo, hi]`.
    pub fn ells_meeting(&self, lo: i64, hi: i64) -> std::ops::RangeInclusive<i64> {
        let q = self.q_n as i64;
        let first = (lo - self.b_n).div_euclid(q) + i64::from((lo - self.b_n).rem_euclid(q) != 0);
        let last = (hi + self.b_n).div_euclid(q);
        first..=last
    }
}

/// Block radius and the location of the deepest cosine minimum at scale `n`.
pub fn partition(f: &Frequency, theta: &TorusPoint, n: usize, lyapunov: f64, eps: f64) -> Result<ScalePartition> {
    let q_n = f.q_u64(n)?;
    if q_n < LARGE_SCALE_Q {
        return Err(Error::SmallScale { n, q: q_n.to_string(), threshold: LARGE_SCALE_Q });
    }
    let q_next = f.q_u64(n + 1)?;
    let (tau, b_n) = block_radius(q_n, lyapunov, eps)?;
    let site = theta_minimal(f, theta, n)?;
    let m_n = site.m as i64;
    Ok(ScalePartition {
        n,
        q_n,
        q_next,
        tau,
        b_n,
        m_n,
        ell_n: site.ell as i64,
        m_resonant: dist_to_multiples(m_n, q_n as i64) <= b_n,
    })
}

/// `ln|phi(k)|` on consecutive sites.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LogProfile {
    pub start: i64,
    pub ln_abs: Vec<f64>,
}

impl LogProfile {
    pub fn from_fn(lo: i64, hi: i64, f: impl Fn(i64) -> f64) -> LogProfile {
        LogProfile { start: lo, ln_abs: (lo..=hi).map(f).collect() }
    }

    pub fn end(&self) -> i64 {
        self.start + self.ln_abs.len() as i64 - 1
    }

    pub fn at(&self, k: i64) -> Option<f64> {
        if k < self.start {
            return None;
        }
        self.ln_abs.get((k - self.start) as usize).copied()
    }

    /// Largest value over `[a, b]` clipped to the profile, if non-empty.
    pub fn max_over(&self, a: i64, b: i64) -> Option<f64> {
        let a = a.max(self.start);
        let b = b.min(self.end());
        if a > b {
            return None;
        }
        Some((a..=b).map(|k| self.at(k).unwrap()).fold(f64::NEG_INFINITY, f64::max))
    }
}

/// `ln r_ell` for one block, with the split maxima when they apply.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockMax {
    pub r: f64,
    pub r_minus: Option<f64>,
    pub r_plus: Option<f64>,
}

/// `ln max_{k in R_ell} |phi(k)|` for every block meeting the profile.
pub fn r_table(phi: &LogProfile, part: &ScalePartition) -> BTreeMap<i64, BlockMax> {
    let mut out = BTreeMap::new();
    for ell in part.ells_meeting(phi.start, phi.end()) {
        let (a, b) = part.block(ell);
        let Some(r) = phi.max_over(a, b) else { continue };
        let (r_minus, r_plus) = match part.split_block(ell) {
            Some(((a1, b1), (a2, b2))) => (phi.max_over(a1, b1), phi.max_over(a2, b2)),
            None => (None, None),
        };
        out.insert(ell, BlockMax { r, r_minus, r_plus });
    }
    out
}

/// Envelope constant: the exponent is `L - delta_n - c eps`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeOptions {
    pub eps: f64,
    pub c_factor: f64,
    pub trim: f64,
    /// Energies with `L(E) <= delta + c eps + margin` are out of regime.
    pub regime_margin: f64,
    /// Also tabulate block maxima `r_ell` per scale.
    pub block_tables: bool,
}

impl EnvelopeOptions {
    pub fn new(eps: f64, c_factor: f64) -> Self {
        EnvelopeOptions { eps, c_factor, trim: 0.1, regime_margin: 0.01, block_tables: false }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Violation {
    pub k: i64,
    pub ln_phi: f64,
    pub bound: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScaleCheck {
    pub n: usize,
    pub q_n: u64,
    pub delta_n: f64,
    pub rate: f64,
    /// `[q_n/12, q_{n+1}/12)` in `|k|`.
    pub window: (f64, f64),
    pub tested: usize,
    pub violations: usize,
    pub r_table: BTreeMap<i64, BlockMax>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DecayReport {
    pub energy: f64,
    pub lyapunov: f64,
    pub eps: f64,
    pub c_factor: f64,
    /// Box site the profile was centred on.
    pub center: i64,
    pub in_regime: bool,
    pub delta_estimate: f64,
    pub scales: Vec<ScaleCheck>,
    pub profile: Vec<ResonanceProfile>,
    pub fitted_rate: f64,
    pub envelope_pass: bool,
    pub violations: Vec<Violation>,
    /// Smallest tested scale from which every larger tested scale passes.
    pub first_passing_scale: Option<usize>,
    /// `max |phi(k)| / |k|` over the tested region.
    pub shnol_c0: f64,
}

/// Scales whose windows meet `|k| <= reach`, starting at the first large
/// scale.
pub fn scales_within(f: &Frequency, reach: i64) -> Vec<usize> {
    (0..f.depth())
        .filter(|&n| {
            let Ok(q) = f.q_u64(n) else { return false };
            q >= LARGE_SCALE_Q && (q as f64) / 12.0 <= reach as f64 && f.q_u64(n + 1).is_ok()
        })
        .collect()
}

/// Least-squares slope of `y` against `x`.
pub fn ls_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    if points.len() < 2 {
        return f64::NAN;
    }
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

/// Checks a profile centred at site 0 (phase `theta` there) on the sites
/// `allowed` (relative to the centre).
#[allow(clippy::too_many_arguments)]
pub fn envelope_check(
    phi: &LogProfile,
    energy: f64,
    lambda: f64,
    f: &Frequency,
    theta: &TorusPoint,
    opts: &EnvelopeOptions,
    scales: &[usize],
    allowed: (i64, i64),
) -> Result<DecayReport> {
    let at0 = phi.at(0).unwrap_or(f64::NEG_INFINITY);
    let at1 = phi.at(-1).unwrap_or(f64::NEG_INFINITY);
    if at0 < NORMALIZABLE_FLOOR.ln() && at1 < NORMALIZABLE_FLOOR.ln() {
        return Err(Error::NotNormalizable);
    }
    let lyapunov = lyapunov_closed(lambda, energy);
    let n_min = scales.first().copied().unwrap_or(0);
    let delta_est = delta_estimate(f, theta, n_min).unwrap_or(f64::NAN);
    let in_regime = !(lyapunov <= delta_est.max(0.0) + opts.c_factor * opts.eps + opts.regime_margin);
    let lo = allowed.0.max(phi.start);
    let hi = allowed.1.min(phi.end());
    let mut checks = Vec::new();
    let mut violations = Vec::new();
    let mut fit = Vec::new();
    let mut shnol = f64::NEG_INFINITY;
    for &n in scales {
        let q = f.q_u64(n)?;
        let q_next = f.q_u64(n + 1)?;
        let d = delta_n_plus(f, theta, n)?;
        let rate = lyapunov - d - opts.c_factor * opts.eps;
        let (w_lo, w_hi) = (q as f64 / 12.0, q_next as f64 / 12.0);
        let mut tested = 0;
        let mut bad = 0;
        for k in lo..=hi {
            let ak = k.abs() as f64;
            if ak < w_lo || ak >= w_hi {
                continue;
            }
            let v = phi.at(k).unwrap();
            tested += 1;
            let bound = -rate * ak;
            if v > bound {
                bad += 1;
                violations.push(Violation { k, ln_phi: v, bound });
            }
            if v.is_finite() {
                fit.push((ak, v));
            }
            if k != 0 {
                shnol = shnol.max(v - ak.ln());
            }
        }
        let r = match opts.block_tables.then(|| partition(f, theta, n, lyapunov, opts.eps)) {
            Some(Ok(p)) => r_table(&LogProfile { start: lo, ln_abs: (lo..=hi).map(|k| phi.at(k).unwrap()).collect() }, &p),
            _ => BTreeMap::new(),
        };
        checks.push(ScaleCheck {
            n,
            q_n: q,
            delta_n: d,
            rate,
            window: (w_lo, w_hi),
            tested,
            violations: bad,
            r_table: r,
        });
    }
    // fitted over distinct sites only; windows of consecutive scales do not overlap
    let fitted_rate = ls_slope(&fit);
    let first_passing_scale = {
        let mut first = None;
        for c in checks.iter().rev() {
            if c.violations > 0 {
                break;
            }
            first = Some(c.n);
        }
        first
    };
    Ok(DecayReport {
        energy,
        lyapunov,
        eps: opts.eps,
        c_factor: opts.c_factor,
        center: 0,
        in_regime,
        delta_estimate: delta_est,
        envelope_pass: violations.is_empty(),
        scales: checks,
        profile: Vec::new(),
        fitted_rate,
        violations,
        first_passing_scale,
        shnol_c0: shnol.exp(),
    })
}

/// Re-centres an eigenvector of `bx` at its largest entry and normalizes
/// it to `|phi(0)|^2 + |phi(-1)|^2 = 2`. Returns the profile, the centre
/// site and the phase at the centre.
pub fn centre_eigenpair(bx: &BoxOperator, pair: &Eigenpair, f: &Frequency, theta: &TorusPoint) -> (LogProfile, i64, TorusPoint) {
    let c_idx = pair.argmax();
    let center = bx.x1 + c_idx as i64;
    let l0 = pair.ln_abs[c_idx];
    let l1 = if c_idx > 0 { pair.ln_abs[c_idx - 1] } else { f64::NEG_INFINITY };
    let m = l0.max(l1);
    let norm = m + 0.5 * ((2.0 * (l0 - m)).exp() + (2.0 * (l1 - m)).exp()).ln();
    let shift = 0.5 * std::f64::consts::LN_2 - norm;
    let profile = LogProfile {
        start: bx.x1 - center,
        ln_abs: pair.ln_abs.iter().map(|v| v + shift).collect(),
    };
    let theta_c = theta.with_bits(f.precision_bits()).shift_by(f.value(), center as i128);
    (profile, center, theta_c)
}

/// Sites of `bx` that survive a trim of `trim` of the width on each side.
pub fn trimmed(bx: &BoxOperator, trim: f64) -> (i64, i64) {
    let w = (bx.x2 - bx.x1) as f64;
    let cut = (trim * w).ceil() as i64;
    (bx.x1 + cut, bx.x2 - cut)
}

/// Envelope check of one box eigenpair, centred at its maximum.
pub fn check_eigenpair(
    bx: &BoxOperator,
    pair: &Eigenpair,
    lambda: f64,
    f: &Frequency,
    theta: &TorusPoint,
    opts: &EnvelopeOptions,
    scales: &[usize],
) -> Result<DecayReport> {
    let (phi, center, theta_c) = centre_eigenpair(bx, pair, f, theta);
    let (a, b) = trimmed(bx, opts.trim);
    let mut report = envelope_check(&phi, pair.energy, lambda, f, &theta_c, opts, scales, (a - center, b - center))?;
    report.center = center;
    Ok(report)
}

/// Attaches resonance profiles for the tested scales.
pub fn with_profiles(mut report: DecayReport, f: &Frequency, theta_center: &TorusPoint) -> DecayReport {
    report.profile = report
        .scales
        .iter()
        .filter_map(|s| profile(f, theta_center, s.n, Some(8)).ok())
        .collect();
    report
}

/// `ln g_{k, ell}`: `max(delta q, ln|ell|, 0) - (beta - 6 eps) q` when
/// `beta >= delta + 200 eps`, else `2 eps k`.
pub fn ln_g(beta: f64, delta: f64, q: f64, ell: i64, k: f64, eps: f64) -> f64 {
    if beta >= delta + 200.0 * eps {
        let l = (ell.unsigned_abs() as f64).ln().max(0.0);
        (delta * q).max(l) - (beta - 6.0 * eps) * q
    } else {
        2.0 * eps * k
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NumeratorEntry {
    pub ell: Option<i64>,
    /// `(1/q_n) ln|P~_{q_n - 1}|` at the shifted phase.
    pub measured: f64,
    pub bound: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NumeratorReport {
    pub n: usize,
    pub q_n: u64,
    pub beta_n: f64,
    pub delta_n: f64,
    pub l_tilde: f64,
    /// `theta + (m_n - q_n + 1) alpha`.
    pub base: NumeratorEntry,
    /// `theta + (m_n + ell q_n + 1) alpha`.
    pub family: Vec<NumeratorEntry>,
}

/// Exponents `(1/q_n) ln|P~_{q_n-1}|` at `theta_{m_n - q_n + 1}` and at
/// `theta_{m_n + ell q_n + 1}` for `0 < |ell| <= ell_max`, against
/// `L~ + delta_n - beta_n + 3 eps + ln(C0)/q_n` and
/// `L~ - beta_n + 4 eps + max(delta_n, ln|ell|/q_n, 0)`.
pub fn numerator_bound_check(
    f: &Frequency,
    theta: &TorusPoint,
    params: &ModelParams,
    n: usize,
    c0: f64,
    eps: f64,
    ell_max: i64,
) -> Result<NumeratorReport> {
    let q = f.q_u64(n)?;
    let qf = q as f64;
    let site = theta_minimal(f, theta, n)?;
    let m = site.m as i64;
    let beta = beta_n(f, n)?;
    let delta = crate::indices::delta_n(f, theta, n).map(|d| d.to_f64()).unwrap_or(0.0);
    let lt = lyapunov_tilde(params.lambda, params.energy);
    let p = params.with_theta(theta);
    let measure = |start: i64| det_ptilde_at(&p, start, q - 1).ln_abs / qf;
    let base_m = measure(m - q as i64 + 1);
    let base_b = lt + delta - beta + 3.0 * eps + c0.max(1e-300).ln() / qf;
    let mut family = Vec::new();
    for ell in -ell_max..=ell_max {
        if ell == 0 {
            continue;
        }
        let v = measure(m + ell * q as i64 + 1);
        let b = lt - beta + 4.0 * eps + delta.max((ell.unsigned_abs() as f64).ln() / qf).max(0.0);
        family.push(NumeratorEntry { ell: Some(ell), measured: v, bound: b, pass: v <= b });
    }
    Ok(NumeratorReport {
        n,
        q_n: q,
        beta_n: beta,
        delta_n: delta,
        l_tilde: lt,
        base: NumeratorEntry { ell: None, measured: base_m, bound: base_b, pass: base_m <= base_b },
        family,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BlockMargin {
    pub ell: i64,
    pub ln_r: f64,
    pub ln_rhs: f64,
    /// `ln_rhs - ln_r`; negative means the inequality fails.
    pub margin: f64,
}

/// For `0 < |ell| <= ell_max`, compares `ln r_ell` with
/// `c eps q - q L - ln max(|ell|, 1) + max(ln r_{ell-1}, ln r_{ell+1}) + branch`,
/// where `c` is 40 (50 when `m_n` is resonant) and the branch is
/// `max(ln|ell|, delta q)` if `beta >= delta + 200 eps`, else `beta q`.
#[allow(clippy::too_many_arguments)]
pub fn block_recursion_diagnostic(
    phi: &LogProfile,
    part: &ScalePartition,
    lyapunov: f64,
    beta: f64,
    delta: f64,
    eps: f64,
    ell_max: i64,
) -> Vec<BlockMargin> {
    let table = r_table(phi, part);
    let q = part.q_n as f64;
    let c = if part.m_resonant { 50.0 } else { 40.0 };
    let mut out = Vec::new();
    for ell in -ell_max..=ell_max {
        if ell == 0 {
            continue;
        }
        let (Some(r), Some(rm), Some(rp)) = (table.get(&ell), table.get(&(ell - 1)), table.get(&(ell + 1))) else {
            continue;
        };
        let la = (ell.unsigned_abs() as f64).ln();
        let branch = if beta >= delta + 200.0 * eps { la.max(delta * q) } else { beta * q };
        let rhs = c * eps * q - q * lyapunov - la.max(0.0) + rm.r.max(rp.r) + branch;
        out.push(BlockMargin { ell, ln_r: r.r, ln_rhs: rhs, margin: rhs - r.r });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn radius_examples() {
        assert_eq!(block_radius(100, 1.0, 0.1).unwrap(), (0.1, 10));
        assert!(matches!(block_radius(13, 0.88, 0.05), Err(Error::EmptyInterval { q: 13, .. })));
    }

    #[test]
    fn r_table_trivial_profiles() {
        let part = ScalePartition { n: 0, q_n: 30, q_next: 50, tau: 0.1, b_n: 3, m_n: 10, ell_n: 0, m_resonant: false };
        let ones = LogProfile::from_fn(-100, 100, |_| 0.0);
        assert!(r_table(&ones, &part).values().all(|b| b.r == 0.0));
        let decay = LogProfile::from_fn(-100, 100, |k| -(k.abs() as f64));
        let t = r_table(&decay, &part);
        for ell in [-3i64, -2, -1, 1, 2, 3] {
            assert_eq!(t[&ell].r, -((ell.abs() * 30 - 3) as f64));
        }
    }

    #[test]
    fn g_dispatch() {
        // beta >= delta + 200 eps: max(delta q, ln|ell|, 0) - (beta - 6 eps) q
        let v = ln_g(1.0, 0.1, 50.0, 3, 10.0, 1e-3);
        assert!((v - (5.0 - (1.0 - 0.006) * 50.0)).abs() < 1e-12);
        // otherwise 2 eps k
        assert_eq!(ln_g(0.1, 0.0, 50.0, 3, 10.0, 1e-3), 0.02);
    }

    #[test]
    fn slope_of_line() {
        let pts: Vec<(f64, f64)> = (0..10).map(|i| (i as f64, 3.0 - 0.5 * i as f64)).collect();
        assert!((ls_slope(&pts) + 0.5).abs() < 1e-12);
    }
}
