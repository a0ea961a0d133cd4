//! Transfer matrices, determinants and Lyapunov exponents.
//!
//! `A(theta) = [[E - lambda tan(pi theta), -1], [1, 0]]` has a pole where
//! `cos(pi theta) = 0`; `F = cos(pi theta) A` is bounded and is the default
//! computational path. Long products are kept as [`ScaledMatrix`] values so
//! `e^{Lk}` never overflows.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cf::Frequency;
use crate::error::{Error, Result};
use crate::torus::{Phase, TorusPoint};

pub type Mat2 = [[f64; 2]; 2];

/// Below this `|cos(pi theta_k)|` a site is treated as singular for the
/// tan-form quantities; it is far above the 128-bit phase error.
pub const SINGULAR_COS: f64 = 1e-28;

/// Coupling, energy, frequency and phase.
#[derive(Clone, Debug)]
pub struct ModelParams {
    pub lambda: f64,
    pub energy: f64,
    alpha: TorusPoint,
    theta: TorusPoint,
    alpha_phase: Phase,
    theta_phase: Phase,
}

impl ModelParams {
    pub fn new(lambda: f64, energy: f64, alpha: &TorusPoint, theta: &TorusPoint) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::invalid("lambda", "must be a positive finite number"));
        }
        if !energy.is_finite() {
            return Err(Error::invalid("energy", "must be finite"));
        }
        let theta = theta.with_bits(alpha.bits());
        Ok(ModelParams {
            lambda,
            energy,
            alpha_phase: alpha.to_phase(),
            theta_phase: theta.to_phase(),
            alpha: alpha.clone(),
            theta,
        })
    }

    pub fn from_frequency(lambda: f64, energy: f64, f: &Frequency, theta: &TorusPoint) -> Result<Self> {
        Self::new(lambda, energy, f.value(), theta)
    }

    pub fn alpha(&self) -> &TorusPoint {
        &self.alpha
    }

    pub fn theta(&self) -> &TorusPoint {
        &self.theta
    }

    pub fn alpha_phase(&self) -> Phase {
        self.alpha_phase
    }

    pub fn theta_phase(&self) -> Phase {
        self.theta_phase
    }

    /// `theta_k = theta + k alpha` in 128-bit fixed point.
    pub fn phase(&self, k: i64) -> Phase {
        self.theta_phase.shift(self.alpha_phase, k)
    }

    /// `theta_k` in full fixed point.
    pub fn site(&self, k: i64) -> TorusPoint {
        self.theta.shift_by(&self.alpha, k as i128)
    }

    pub fn with_energy(&self, energy: f64) -> Self {
        ModelParams { energy, ..self.clone() }
    }

    /// Same model seen from site `k`: phase `theta + k alpha`.
    pub fn shifted(&self, k: i64) -> Self {
        let theta = self.site(k);
        ModelParams {
            theta_phase: theta.to_phase(),
            theta,
            ..self.clone()
        }
    }

    /// Replaces the phase, keeping `alpha` and the precision.
    pub fn with_theta(&self, theta: &TorusPoint) -> Self {
        let theta = theta.with_bits(self.alpha.bits());
        ModelParams {
            theta_phase: theta.to_phase(),
            theta,
            ..self.clone()
        }
    }

    /// Diagonal entry `lambda tan(pi theta_k)`.
    pub fn potential(&self, k: i64) -> Result<f64> {
        let (s, c) = self.phase(k).sin_cos_pi();
        if c.abs() < SINGULAR_COS {
            return Err(Error::SingularSite { site: k });
        }
        Ok(self.lambda * s / c)
    }
}

/// One step of the `A` cocycle at site `k`.
pub fn step_a(params: &ModelParams, k: i64) -> Result<Mat2> {
    let v = params.potential(k)?;
    Ok([[params.energy - v, -1.0], [1.0, 0.0]])
}

fn step_f_phase(params: &ModelParams, ph: Phase) -> Mat2 {
    let (s, c) = ph.sin_cos_pi();
    [[params.energy * c - params.lambda * s, -c], [c, 0.0]]
}

/// One step of the `F` cocycle: `cos(pi theta_k) A(theta_k)`.
pub fn step_f(params: &ModelParams, k: i64) -> Mat2 {
    step_f_phase(params, params.phase(k))
}

pub fn mat_mul(a: &Mat2, b: &Mat2) -> Mat2 {
    [
        [
            a[0][0] * b[0][0] + a[0][1] * b[1][0],
            a[0][0] * b[0][1] + a[0][1] * b[1][1],
        ],
        [
            a[1][0] * b[0][0] + a[1][1] * b[1][0],
            a[1][0] * b[0][1] + a[1][1] * b[1][1],
        ],
    ]
}

pub fn det2(a: &Mat2) -> f64 {
    a[0][0] * a[1][1] - a[0][1] * a[1][0]
}

/// A value `sign * e^{ln_abs}`; zero has `sign = 0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignedLog {
    pub sign: f64,
    pub ln_abs: f64,
}

impl SignedLog {
    pub fn from_f64(x: f64) -> SignedLog {
        if x == 0.0 {
            SignedLog { sign: 0.0, ln_abs: f64::NEG_INFINITY }
        } else {
            SignedLog { sign: x.signum(), ln_abs: x.abs().ln() }
        }
    }

    pub fn new(x: f64, log_scale: f64) -> SignedLog {
        let mut s = SignedLog::from_f64(x);
        s.ln_abs += log_scale;
        s
    }

    pub fn to_f64(self) -> f64 {
        self.sign * self.ln_abs.exp()
    }

    pub fn mul(self, other: SignedLog) -> SignedLog {
        SignedLog {
            sign: self.sign * other.sign,
            ln_abs: self.ln_abs + other.ln_abs,
        }
    }

    pub fn div(self, other: SignedLog) -> SignedLog {
        SignedLog {
            sign: self.sign * other.sign,
            ln_abs: self.ln_abs - other.ln_abs,
        }
    }

    /// `|self - other| / |other|`, computed without leaving log space when
    /// the magnitudes differ wildly.
    pub fn rel_diff(self, other: SignedLog) -> f64 {
        if other.sign == 0.0 {
            return if self.sign == 0.0 { 0.0 } else { f64::INFINITY };
        }
        let r = (self.ln_abs - other.ln_abs).exp() * self.sign * other.sign;
        (r - 1.0).abs()
    }
}

/// `e^{log_scale} * m` with the largest entry of `m` in `[1/2, 2]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScaledMatrix {
    pub m: Mat2,
    pub log_scale: f64,
}

impl ScaledMatrix {
    pub fn identity() -> Self {
        ScaledMatrix {
            m: [[1.0, 0.0], [0.0, 1.0]],
            log_scale: 0.0,
        }
    }

    pub fn from_mat(m: Mat2) -> Self {
        let mut s = ScaledMatrix { m, log_scale: 0.0 };
        s.normalize();
        s
    }

    fn max_abs(&self) -> f64 {
        self.m
            .iter()
            .flatten()
            .fold(0.0f64, |acc, x| acc.max(x.abs()))
    }

    /// Rescales by a power of two (exact) into the band.
    pub fn normalize(&mut self) {
        let mx = self.max_abs();
        if mx == 0.0 || !mx.is_finite() {
            return;
        }
        if (0.5..=2.0).contains(&mx) {
            return;
        }
        let e = mx.log2().round() as i32;
        let f = 2f64.powi(-e);
        for row in self.m.iter_mut() {
            for x in row.iter_mut() {
                *x *= f;
            }
        }
        self.log_scale += e as f64 * std::f64::consts::LN_2;
    }

    /// `self * other`.
    pub fn mul(&self, other: &ScaledMatrix) -> ScaledMatrix {
        let mut out = ScaledMatrix {
            m: mat_mul(&self.m, &other.m),
            log_scale: self.log_scale + other.log_scale,
        };
        out.normalize();
        out
    }

    /// `step * self` for a raw matrix.
    pub fn left_mul(&mut self, step: &Mat2) {
        self.m = mat_mul(step, &self.m);
        self.normalize();
    }

    pub fn inverse(&self) -> ScaledMatrix {
        let d = det2(&self.m);
        let m = [
            [self.m[1][1] / d, -self.m[0][1] / d],
            [-self.m[1][0] / d, self.m[0][0] / d],
        ];
        let mut out = ScaledMatrix { m, log_scale: -self.log_scale };
        out.normalize();
        out
    }

    /// Inverse when the determinant is known in log form; the adjugate is
    /// exact, so this avoids the cancellation in `det2` of a long product.
    pub fn inverse_with_det(&self, det: SignedLog) -> ScaledMatrix {
        let s = det.sign;
        let m = [
            [self.m[1][1] * s, -self.m[0][1] * s],
            [-self.m[1][0] * s, self.m[0][0] * s],
        ];
        let mut out = ScaledMatrix { m, log_scale: self.log_scale - det.ln_abs };
        out.normalize();
        out
    }

    pub fn entry(&self, i: usize, j: usize) -> SignedLog {
        SignedLog::new(self.m[i][j], self.log_scale)
    }

    /// Natural log of the operator norm.
    pub fn ln_norm(&self) -> f64 {
        let [[a, b], [c, d]] = self.m;
        let s = 0.5 * (a * a + b * b + c * c + d * d);
        let det = a * d - b * c;
        let disc = (s * s - det * det).max(0.0).sqrt();
        0.5 * (s + disc).ln() + self.log_scale
    }

    pub fn ln_abs_det(&self) -> f64 {
        det2(&self.m).abs().ln() + 2.0 * self.log_scale
    }

    /// Plain matrix; overflows for large log scales.
    pub fn value(&self) -> Mat2 {
        let f = self.log_scale.exp();
        [
            [self.m[0][0] * f, self.m[0][1] * f],
            [self.m[1][0] * f, self.m[1][1] * f],
        ]
    }
}

/// Product of `F` over sites `start, ..., start + len - 1`, later sites on
/// the left.
pub fn product_f_window(params: &ModelParams, start: i64, len: u64) -> ScaledMatrix {
    let mut acc = ScaledMatrix::identity();
    let mut ph = params.phase(start);
    for _ in 0..len {
        acc.left_mul(&step_f_phase(params, ph));
        ph = ph.add(params.alpha_phase);
    }
    acc
}

/// `F_k = F(theta_{k-1}) ... F(theta_0)`; for negative `k` this is
/// `F_{-k}(theta + k alpha)^{-1}`.
pub fn product_f(params: &ModelParams, k: i64) -> ScaledMatrix {
    if k >= 0 {
        product_f_window(params, 0, k as u64)
    } else {
        let len = k.unsigned_abs();
        let c = cos_log_sum(params, k, len);
        let det = SignedLog { sign: 1.0, ln_abs: 2.0 * c.ln_abs };
        product_f_window(params, k, len).inverse_with_det(det)
    }
}

/// `sum ln|cos(pi theta_j)|` and the sign of the product over a window.
pub fn cos_log_sum(params: &ModelParams, start: i64, len: u64) -> SignedLog {
    let mut sign = 1.0;
    let mut sum = 0.0;
    let mut ph = params.phase(start);
    for _ in 0..len {
        let c = ph.cos_pi();
        if c == 0.0 {
            return SignedLog { sign: 0.0, ln_abs: f64::NEG_INFINITY };
        }
        sign *= c.signum();
        sum += c.abs().ln();
        ph = ph.add(params.alpha_phase);
    }
    SignedLog { sign, ln_abs: sum }
}

/// `A_k` derived from the `F` product by removing the cosine factors.
pub fn product_a(params: &ModelParams, k: i64) -> Result<ScaledMatrix> {
    let (start, len) = if k >= 0 { (0, k as u64) } else { (k, k.unsigned_abs()) };
    for j in start..start + len as i64 {
        if params.phase(j).cos_pi().abs() < SINGULAR_COS {
            return Err(Error::SingularSite { site: j });
        }
    }
    let fw = product_f_window(params, start, len);
    let c = cos_log_sum(params, start, len);
    let mut a = fw;
    a.log_scale -= c.ln_abs;
    if c.sign < 0.0 {
        for row in a.m.iter_mut() {
            for x in row.iter_mut() {
                *x = -*x;
            }
        }
    }
    Ok(if k >= 0 { a } else { a.inverse_with_det(SignedLog { sign: 1.0, ln_abs: 0.0 }) })
}

/// Runs a two-term recurrence `x_j = c_j x_{j-1} - d_j x_{j-2}` from
/// `x_0 = 1, x_{-1} = 0`, rescaling both terms every step.
fn signed_log_recurrence<I>(coeffs: I) -> (SignedLog, SignedLog)
where
    I: Iterator<Item = (f64, f64)>,
{
    let (mut cur, mut prev, mut scale) = (1.0f64, 0.0f64, 0.0f64);
    for (c, d) in coeffs {
        let next = c.mul_add(cur, -d * prev);
        prev = cur;
        cur = next;
        let m = cur.abs().max(prev.abs());
        if m > 0.0 && m.is_finite() {
            cur /= m;
            prev /= m;
            scale += m.ln();
        }
    }
    (SignedLog::new(cur, scale), SignedLog::new(prev, scale))
}

/// `P_k(theta) = det(E - H)` on sites `0..k`, by the three-term recurrence.
pub fn det_p(params: &ModelParams, k: u64) -> Result<SignedLog> {
    Ok(det_p_pair(params, 0, k)?.0)
}

/// `(P_k, P_{k-1})` for the block starting at site `start`.
pub fn det_p_pair(params: &ModelParams, start: i64, k: u64) -> Result<(SignedLog, SignedLog)> {
    let mut diag = Vec::with_capacity(k as usize);
    for j in 0..k as i64 {
        diag.push(params.energy - params.potential(start + j)?);
    }
    Ok(signed_log_recurrence(diag.into_iter().map(|c| (c, 1.0))))
}

/// `P~_k = prod cos(pi theta_j) P_k`, by the bounded recurrence
/// `P~_j = (E c_{j-1} - lambda s_{j-1}) P~_{j-1} - c_{j-1} c_{j-2} P~_{j-2}`.
pub fn det_ptilde(params: &ModelParams, k: u64) -> SignedLog {
    det_ptilde_at(params, 0, k)
}

/// `P~_k(theta_start)`.
pub fn det_ptilde_at(params: &ModelParams, start: i64, k: u64) -> SignedLog {
    let mut ph = params.phase(start);
    let mut prev_c = 0.0;
    let it = (0..k).map(move |_| {
        let (s, c) = ph.sin_cos_pi();
        ph = ph.add(params.alpha_phase);
        let out = (params.energy * c - params.lambda * s, c * prev_c);
        prev_c = c;
        out
    });
    signed_log_recurrence(it).0
}

/// `ln((R + sqrt(R^2 - 4)) / 2)` with
/// `R = (sqrt((2+E)^2 + lambda^2) + sqrt((2-E)^2 + lambda^2)) / 2`.
pub fn lyapunov_closed(lambda: f64, energy: f64) -> f64 {
    let r = 0.5 * ((2.0 + energy).hypot(lambda) + (2.0 - energy).hypot(lambda));
    // (R + sqrt(R^2 - 4))/2 = e^L, written to avoid cancellation near R = 2
    let t = ((r - 2.0) * (r + 2.0)).max(0.0).sqrt();
    ((r - 2.0 + t) / 2.0).ln_1p()
}

/// `L - ln 2`, the exponent of the `F` cocycle.
pub fn lyapunov_tilde(lambda: f64, energy: f64) -> f64 {
    lyapunov_closed(lambda, energy) - std::f64::consts::LN_2
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LyapunovEstimate {
    pub l_hat: f64,
    pub stderr: f64,
    pub samples: Vec<f64>,
}

/// Compensated (Neumaier) mean.
pub fn mean(xs: &[f64]) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for &x in xs {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    (sum + comp) / xs.len() as f64
}

/// Bootstrap standard error of the mean.
pub fn bootstrap_stderr(xs: &[f64], resamples: usize, seed: u64) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut means = Vec::with_capacity(resamples);
    let mut buf = vec![0.0; xs.len()];
    for _ in 0..resamples {
        for b in buf.iter_mut() {
            *b = xs[rng.gen_range(0..xs.len())];
        }
        means.push(mean(&buf));
    }
    let mu = mean(&means);
    let var = means.iter().map(|m| (m - mu) * (m - mu)).sum::<f64>() / (resamples - 1) as f64;
    var.sqrt()
}

/// `(1/k) ln||F_k||` averaged over `samples` equally spaced phases with a
/// seeded random offset, plus `ln 2`.
pub fn lyapunov_empirical(
    lambda: f64,
    energy: f64,
    alpha: &TorusPoint,
    k: u64,
    samples: usize,
    seed: u64,
) -> Result<LyapunovEstimate> {
    if k == 0 || samples == 0 {
        return Err(Error::invalid("k", "k and samples must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let offset: f64 = rng.gen();
    let base = ModelParams::new(lambda, energy, alpha, &TorusPoint::zero(alpha.bits()))?;
    let vals: Vec<f64> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let th = TorusPoint::from_f64((i as f64 + offset) / samples as f64, alpha.bits());
            let p = base.with_theta(&th);
            product_f(&p, k as i64).ln_norm() / k as f64 + std::f64::consts::LN_2
        })
        .collect();
    Ok(LyapunovEstimate {
        l_hat: mean(&vals),
        stderr: bootstrap_stderr(&vals, 200, seed ^ 0x9e37_79b9),
        samples: vals,
    })
}

/// `S = sum_{j != j_0} ln|cos(pi(theta + j alpha))| + (q_n - 1) ln 2` over
/// `0 <= j < q_n`, with `j_0` the minimizing index.
pub fn lana_check(f: &Frequency, theta: &TorusPoint, n: usize) -> Result<(f64, u64)> {
    let q = f.q_u64(n)?;
    let params = ModelParams::new(1.0, 0.0, f.value(), theta)?;
    let mut ph = params.phase(0);
    let (mut sum, mut min_v, mut j0) = (0.0f64, f64::INFINITY, 0u64);
    for j in 0..q {
        let v = ph.ln_abs_cos_pi();
        sum += v;
        if v < min_v {
            min_v = v;
            j0 = j;
        }
        ph = ph.add(params.alpha_phase);
    }
    if q == 1 {
        return Ok((0.0, 0));
    }
    Ok((sum - min_v + (q - 1) as f64 * std::f64::consts::LN_2, j0))
}

/// Measured constant in `|P~_j| <= C e^{(L~ + eps) j}` over `1 <= j <= k`,
/// reported as `ln C`.
pub fn ptilde_growth_constant(params: &ModelParams, k: u64, eps: f64) -> f64 {
    let lt = lyapunov_tilde(params.lambda, params.energy);
    let mut ph = params.phase(0);
    let (mut cur, mut prev, mut scale, mut prev_c) = (1.0f64, 0.0f64, 0.0f64, 0.0f64);
    let mut worst = f64::NEG_INFINITY;
    for j in 1..=k {
        let (s, c) = ph.sin_cos_pi();
        ph = ph.add(params.alpha_phase);
        let next = (params.energy * c - params.lambda * s).mul_add(cur, -(c * prev_c) * prev);
        prev = cur;
        cur = next;
        prev_c = c;
        let m = cur.abs().max(prev.abs());
        if m > 0.0 {
            cur /= m;
            prev /= m;
            scale += m.ln();
        }
        let ln_p = cur.abs().ln() + scale;
        worst = worst.max(ln_p - (lt + eps) * j as f64);
    }
    worst
}
