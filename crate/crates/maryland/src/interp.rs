//! Interpolation structure of `P~_k` in the phase.
//!
//! `P~_k(theta)` is a homogeneous polynomial of degree `k` in
//! `(cos pi theta, sin pi theta)`, so it is fixed by its values at any `k+1`
//! distinct phases and `P~_k / cos^k` is a degree-`k` polynomial in
//! `tan pi theta`.

use rayon::prelude::*;
use rug::ops::Pow;
use rug::Float;
use serde::{Deserialize, Serialize};

use crate::cf::Frequency;
use crate::cocycle::{det_ptilde_at, lyapunov_tilde, ModelParams};
use crate::error::{Error, Result};
use crate::strategy::{AvoidingLattice, QuadratureRule};
use crate::torus::TorusPoint;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    /// `I_0 ∪ I_ell` around a resonance.
    Resonant,
    /// `I~_0 ∪ I~_y` for a non-resonant `y`.
    Nonresonant,
    Custom,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeScale {
    Resonant { n: usize, ell: i64 },
    Nonresonant { n: usize, n0: usize, s: u64, y: i64 },
    None,
}

#[derive(Clone, Debug)]
pub struct NodeSet {
    pub indices: Vec<i64>,
    pub thetas: Vec<TorusPoint>,
    pub kind: NodeKind,
    pub scale: NodeScale,
}

impl NodeSet {
    /// Arbitrary phases, indexed `0..len`.
    pub fn custom(thetas: Vec<TorusPoint>) -> NodeSet {
        NodeSet {
            indices: (0..thetas.len() as i64).collect(),
            thetas,
            kind: NodeKind::Custom,
            scale: NodeScale::None,
        }
    }

    /// Orbit points `theta + j alpha` for the given sites.
    pub fn orbit(f: &Frequency, theta: &TorusPoint, indices: Vec<i64>) -> NodeSet {
        let theta = theta.with_bits(f.precision_bits());
        let thetas = indices
            .iter()
            .map(|&j| theta.shift_by(f.value(), j as i128))
            .collect();
        NodeSet {
            indices,
            thetas,
            kind: NodeKind::Custom,
            scale: NodeScale::None,
        }
    }

    pub fn len(&self) -> usize {
        self.thetas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thetas.is_empty()
    }

    /// Interpolation degree `|nodes| - 1`.
    pub fn degree(&self) -> usize {
        self.len().saturating_sub(1)
    }

    /// `ln|sin pi(theta_j - theta_l)|` summed over `l != j`, for every `j`.
    fn log_denominators(&self) -> Result<Vec<f64>> {
        let n = self.len();
        let mut out = vec![0.0; n];
        for j in 0..n {
            for l in 0..n {
                if l == j {
                    continue;
                }
                let d = self.thetas[j].sub(&self.thetas[l]);
                if d.may_be_integer() {
                    return Err(Error::DegenerateNodes { i: j.min(l), j: j.max(l) });
                }
                out[j] += log_sin_pi(d.norm_dist_f64());
            }
        }
        Ok(out)
    }
}

fn log_sin_pi(d: f64) -> f64 {
    (std::f64::consts::PI * d).sin().abs().ln()
}

fn torus_dist(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(1.0);
    d.min(1.0 - d)
}

/// `I_ell = [(ell-1) q - floor(q/2), ell q - floor(q/2) - 1]`.
pub fn resonant_block(q: i64, ell: i64) -> (i64, i64) {
    ((ell - 1) * q - q / 2, ell * q - q / 2 - 1)
}

/// The `2 q_n` sites of `I_0 ∪ I_ell` with `0 < |ell| <= 2 q_{n+1} / (3 q_n)`.
pub fn build_resonant_nodes(f: &Frequency, theta: &TorusPoint, n: usize, ell: i64) -> Result<NodeSet> {
    let q = f.q_u64(n)? as i64;
    let q_next = f.q_u64(n + 1)? as i64;
    // |ell| * 3 q_n <= 2 q_{n+1}, in integers
    if ell == 0 || (ell.unsigned_abs() as i128) * 3 * q as i128 > 2 * q_next as i128 {
        return Err(Error::RangeViolation {
            ell,
            bound: format!("2*{q_next}/(3*{q})"),
        });
    }
    resonant_nodes_any(f, theta, n, ell)
}

/// `I_0 ∪ I_ell` for any `ell != 0`, without the range check.
pub fn resonant_nodes_any(f: &Frequency, theta: &TorusPoint, n: usize, ell: i64) -> Result<NodeSet> {
    if ell == 0 {
        return Err(Error::invalid("ell", "must be nonzero"));
    }
    let q = f.q_u64(n)? as i64;
    let (a0, b0) = resonant_block(q, 0);
    let (a1, b1) = resonant_block(q, ell);
    let indices = (a0..=b0).chain(a1..=b1).collect();
    let mut set = NodeSet::orbit(f, theta, indices);
    set.kind = NodeKind::Resonant;
    set.scale = NodeScale::Resonant { n, ell };
    Ok(set)
}

/// `dist(y, q Z)`.
pub fn dist_to_multiples(y: i64, q: i64) -> i64 {
    let r = y.rem_euclid(q);
    r.min(q - r)
}

/// `I~_0 ∪ I~_y` for a site `y` with `dist(y, q_n Z) > b_n`.
pub fn build_nonresonant_nodes(
    f: &Frequency,
    theta: &TorusPoint,
    n: usize,
    y: i64,
    b_n: i64,
) -> Result<NodeSet> {
    let q = f.q_u64(n)? as i64;
    let dist = dist_to_multiples(y, q);
    if dist <= b_n {
        return Err(Error::ResonantY { y, dist, b_n });
    }
    let n0 = (1..=n)
        .find(|&n0| 2 * f.q_u64(n - n0).map(|v| v as i64).unwrap_or(i64::MAX) <= dist)
        .ok_or_else(|| Error::ConstructionFailed(format!("no scale fits dist(y, q_n Z) = {dist}")))?;
    let qs = f.q_u64(n - n0)? as i64;
    let s = dist / (2 * qs);
    let sq = s * qs;
    let lo = -(sq / 2) - sq;
    let hi = -(sq / 2) - 1;
    let indices = (lo..=hi).chain(y + lo..=y + hi).collect();
    let mut set = NodeSet::orbit(f, theta, indices);
    set.kind = NodeKind::Nonresonant;
    set.scale = NodeScale::Nonresonant { n, n0, s: s as u64, y };
    Ok(set)
}

/// `P~_k` at a real phase, in `prec`-bit arithmetic with exact argument
/// reduction for every `sin`/`cos`.
pub fn ptilde_mp(lambda: f64, energy: f64, theta: &Float, alpha: &Float, k: usize, prec: u32) -> Float {
    let mut cur = Float::with_val(prec, 1);
    let mut prev = Float::new(prec);
    let mut prev_c = Float::new(prec);
    let mut x = Float::with_val(prec, theta);
    for _ in 0..k {
        let s = Float::with_val(prec, x.sin_pi_ref());
        let c = Float::with_val(prec, x.cos_pi_ref());
        let diag = Float::with_val(prec, &c * energy) - Float::with_val(prec, &s * lambda);
        let coupling = Float::with_val(prec, &c * &prev_c);
        let next = Float::with_val(prec, &diag * &cur) - Float::with_val(prec, &coupling * &prev);
        prev = cur;
        cur = next;
        prev_c = c;
        x += alpha;
    }
    cur
}

fn alpha_float(params: &ModelParams, prec: u32) -> Float {
    params.alpha().value(prec)
}

/// Condition estimate of the Vandermonde system at nodes `t`, as a natural
/// log: `ln ||V|| + ln ||V^{-1}||` with Gautschi's bound for the inverse.
pub fn vandermonde_log_condition(t: &[f64]) -> f64 {
    let k = t.len();
    let ln_v = t
        .iter()
        .map(|&ti| {
            let a = ti.abs();
            (0..k).map(|j| a.powi(j as i32)).sum::<f64>().ln()
        })
        .fold(f64::NEG_INFINITY, f64::max);
    let ln_inv = (0..k)
        .map(|j| {
            (0..k)
                .filter(|&i| i != j)
                .map(|i| ((1.0 + t[i].abs()) / (t[j] - t[i]).abs()).ln())
                .sum::<f64>()
        })
        .fold(f64::NEG_INFINITY, f64::max);
    ln_v + ln_inv
}

/// Fits `g_k` through `k+1` nodes `tan pi theta_j` and returns the largest
/// deviation `|P~_k / cos^k - g_k(tan)|` at fresh phases, relative to the
/// largest value seen at those phases.
pub fn g_poly_check(params: &ModelParams, k: usize, test_points: usize, prec: u32) -> Result<f64> {
    let nodes: Vec<Float> = (0..=k)
        .map(|j| Float::with_val(prec, (j as f64 + 0.5) / (k + 1) as f64 - 0.5))
        .collect();
    let t: Vec<Float> = nodes.iter().map(|x| Float::with_val(prec, x.tan_pi_ref())).collect();
    let t64: Vec<f64> = t.iter().map(|v| v.to_f64()).collect();
    let ln_cond = vandermonde_log_condition(&t64);
    let budget_bits = prec.saturating_sub(20) as f64;
    if ln_cond > budget_bits * std::f64::consts::LN_2 {
        return Err(Error::IllConditioned {
            estimate: ln_cond.exp(),
            budget: 2f64.powf(budget_bits),
        });
    }
    let alpha = alpha_float(params, prec);
    let reduced = |x: &Float| -> Float {
        let p = ptilde_mp(params.lambda, params.energy, x, &alpha, k, prec);
        let c = Float::with_val(prec, x.cos_pi_ref());
        let ck = c.pow(k as i32);
        p / ck
    };
    // Newton divided differences
    let mut coef: Vec<Float> = nodes.iter().map(reduced).collect();
    for level in 1..=k {
        for i in (level..=k).rev() {
            let num = Float::with_val(prec, &coef[i] - &coef[i - 1]);
            let den = Float::with_val(prec, &t[i] - &t[i - level]);
            coef[i] = num / den;
        }
    }
    let golden = (5f64.sqrt() - 1.0) / 2.0;
    let mut worst = Float::new(prec);
    let mut scale = Float::new(prec);
    for i in 0..test_points {
        let u = ((i as f64 + 1.0) * golden).fract();
        let x = Float::with_val(prec, 0.9 * (u - 0.5));
        let tx = Float::with_val(prec, x.tan_pi_ref());
        let mut g = Float::with_val(prec, &coef[k]);
        for j in (0..k).rev() {
            g *= Float::with_val(prec, &tx - &t[j]);
            g += &coef[j];
        }
        let y = reduced(&x);
        let r = Float::with_val(prec, &y - &g).abs();
        if r > worst {
            worst = r;
        }
        let ay = y.abs();
        if ay > scale {
            scale = ay;
        }
    }
    if scale.is_zero() {
        return Ok(worst.to_f64());
    }
    Ok((worst / scale).to_f64())
}

/// `sum_j P~_k(theta_j) prod_{l != j} sin pi(theta - theta_l) / sin pi(theta_j - theta_l)`.
///
/// Every node is taken at its representative in `[0, 1)` and `P~_k` is
/// evaluated at that same real number, so the identity holds exactly.
pub fn lagrange_reconstruct(
    params: &ModelParams,
    k: usize,
    nodes: &NodeSet,
    theta_eval: &TorusPoint,
    prec: u32,
) -> Result<Float> {
    if nodes.len() != k + 1 {
        return Err(Error::invalid("nodes", format!("need {} nodes, got {}", k + 1, nodes.len())));
    }
    let alpha = alpha_float(params, prec);
    let xs: Vec<Float> = nodes.thetas.iter().map(|t| t.value(prec)).collect();
    let x = theta_eval.value(prec);
    let sin_diff = |a: &Float, b: &Float| -> Float {
        let d = Float::with_val(prec, a - b);
        d.sin_pi()
    };
    for i in 0..xs.len() {
        for j in i + 1..xs.len() {
            if nodes.thetas[i].sub(&nodes.thetas[j]).may_be_integer() {
                return Err(Error::DegenerateNodes { i, j });
            }
        }
    }
    if let Some(i) = xs.iter().position(|xi| *xi == x) {
        return Ok(ptilde_mp(params.lambda, params.energy, &xs[i], &alpha, k, prec));
    }
    let mut total = Float::new(prec);
    for (j, xj) in xs.iter().enumerate() {
        let mut term = ptilde_mp(params.lambda, params.energy, xj, &alpha, k, prec);
        for (l, xl) in xs.iter().enumerate() {
            if l != j {
                term *= sin_diff(&x, xl);
                term /= sin_diff(xj, xl);
            }
        }
        total += term;
    }
    Ok(total)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Uniformity {
    /// Refined estimate of `gamma`.
    pub gamma_hat: f64,
    /// Grid maximum; a lower bound of the true value.
    pub gamma_grid: f64,
    pub argmax_theta: f64,
    pub argmax_node: usize,
}

struct LogBasis {
    xs: Vec<f64>,
    denom: Vec<f64>,
}

impl LogBasis {
    /// `ln |l_j(theta)|` for the cardinal function of node `j`.
    fn term(&self, theta: f64, j: usize) -> f64 {
        let mut s = 0.0;
        for (l, &x) in self.xs.iter().enumerate() {
            if l != j {
                s += log_sin_pi(torus_dist(theta, x));
            }
        }
        s - self.denom[j]
    }

    /// `max_j ln|l_j(theta)|` and the maximizing node.
    fn max_term(&self, theta: f64) -> (f64, usize) {
        let logs: Vec<f64> = self.xs.iter().map(|&x| log_sin_pi(torus_dist(theta, x))).collect();
        let total: f64 = logs.iter().sum();
        let mut best = (f64::NEG_INFINITY, 0);
        for j in 0..logs.len() {
            let v = if logs[j].is_finite() && total.is_finite() {
                total - logs[j] - self.denom[j]
            } else {
                self.term(theta, j)
            };
            if v > best.0 {
                best = (v, j);
            }
        }
        best
    }
}

/// `(1/k) ln sup_theta max_j prod_{l != j} |sin pi(theta - theta_l)| / |sin pi(theta_j - theta_l)|`
/// with `k = |nodes| - 1`, from a grid plus golden-section refinement around
/// the grid maximum.
pub fn uniformity_gamma(nodes: &NodeSet, grid_size: usize) -> Result<Uniformity> {
    let k = nodes.degree();
    if k == 0 {
        return Err(Error::invalid("nodes", "need at least two nodes"));
    }
    if grid_size < 10 * nodes.len() {
        return Err(Error::invalid("grid", format!("must be at least {}", 10 * nodes.len())));
    }
    let basis = LogBasis {
        xs: nodes.thetas.iter().map(|t| t.value_f64()).collect(),
        denom: nodes.log_denominators()?,
    };
    let (best, theta_star, j_star) = (0..grid_size)
        .into_par_iter()
        .map(|i| {
            let th = (i as f64 + 0.5) / grid_size as f64;
            let (v, j) = basis.max_term(th);
            (v, th, j)
        })
        .reduce(
            || (f64::NEG_INFINITY, 0.0, 0),
            |a, b| if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) { b } else { a },
        );
    let h = 1.0 / grid_size as f64;
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = (theta_star - h, theta_star + h);
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let (mut fc, mut fd) = (basis.term(c, j_star), basis.term(d, j_star));
    for _ in 0..80 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = basis.term(c, j_star);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = basis.term(d, j_star);
        }
    }
    let (refined, arg) = if fc > best.max(fd) {
        (fc, c)
    } else if fd > best {
        (fd, d)
    } else {
        (best, theta_star)
    };
    Ok(Uniformity {
        gamma_hat: refined / k as f64,
        gamma_grid: best / k as f64,
        argmax_theta: arg.rem_euclid(1.0),
        argmax_node: j_star,
    })
}

/// Upper bound for `ln sup_theta |sum_j v_j l_j(theta)|` on a grid, given
/// `ln|v_j|` at the nodes.
pub fn reconstructed_log_sup(nodes: &NodeSet, ln_values: &[f64], grid_size: usize) -> Result<f64> {
    if ln_values.len() != nodes.len() {
        return Err(Error::invalid("values", "one value per node"));
    }
    let basis = LogBasis {
        xs: nodes.thetas.iter().map(|t| t.value_f64()).collect(),
        denom: nodes.log_denominators()?,
    };
    let sup = (0..grid_size)
        .into_par_iter()
        .map(|i| {
            let th = (i as f64 + 0.5) / grid_size as f64;
            let terms: Vec<f64> = (0..nodes.len()).map(|j| ln_values[j] + basis.term(th, j)).collect();
            let m = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            m + terms.iter().map(|t| (t - m).exp()).sum::<f64>().ln()
        })
        .reduce(|| f64::NEG_INFINITY, f64::max);
    Ok(sup)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HermanEstimate {
    /// `(1/k)` times the mean of `ln|P~_k|`.
    pub mean: f64,
    /// `L~` from the closed form.
    pub lower_bound: f64,
    pub offset: f64,
    pub quad_points: usize,
}

/// `(1/k) * mean ln|P~_k(theta_i)|` over the lattice `theta_i = (i + u)/N`,
/// with `u` picked among a few candidates to keep the lattice away from
/// the zeros of `P~_k`.
pub fn herman_average(params: &ModelParams, k: u64, quad_points: usize) -> Result<HermanEstimate> {
    herman_average_with(params, k, quad_points, &AvoidingLattice { offsets: 8 })
}

/// [`herman_average`] with an explicit quadrature rule.
pub fn herman_average_with(
    params: &ModelParams,
    k: u64,
    quad_points: usize,
    rule: &dyn QuadratureRule,
) -> Result<HermanEstimate> {
    if k == 0 || quad_points == 0 {
        return Err(Error::invalid("k", "k and quad_points must be positive"));
    }
    let bits = params.alpha().bits();
    let g = |t: f64| det_ptilde_at(&params.with_theta(&TorusPoint::from_f64(t, bits)), 0, k).ln_abs;
    let q = rule.mean(quad_points, &g);
    Ok(HermanEstimate {
        mean: q.mean / k as f64,
        lower_bound: lyapunov_tilde(params.lambda, params.energy),
        offset: q.offset,
        quad_points,
    })
}
