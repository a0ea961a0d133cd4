//! Dirichlet restrictions of `H` to integer boxes.
//!
//! Eigenvalues come from Sturm-count bisection. Eigenvectors are assembled
//! from the two one-sided ratio recurrences joined at the site where they
//! disagree least, and are kept as per-site logarithms so exponentially
//! small tails survive past `f64` underflow.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cocycle::{ModelParams, SignedLog, SINGULAR_COS};
use crate::error::{Error, Result};

/// Pivots that land exactly on zero are nudged to this value.
const PIVOT_FLOOR: f64 = 1e-300;
const LANES: usize = 8;
/// Absolute width at which bisection stops near zero.
const BISECTION_FLOOR: f64 = 1e-20;
/// Neighbouring eigenvalues closer than this (relative) are solved as a
/// cluster.
pub const CLUSTER_GAP: f64 = 1e-10;
/// Green's functions are refused this close (relative to `||H||`) to the
/// spectrum.
pub const NEAR_EIGENVALUE: f64 = 1e-8;

#[derive(Clone, Debug)]
pub struct BoxOperator {
    pub x1: i64,
    pub x2: i64,
    pub params: Option<ModelParams>,
    pub diag: Vec<f64>,
}

/// Restriction of `H` to `[x1, x2]`.
pub fn build_box(params: &ModelParams, x1: i64, x2: i64) -> Result<BoxOperator> {
    if x2 < x1 {
        return Err(Error::invalid("box", format!("empty interval [{x1}, {x2}]")));
    }
    let diag = (x1..=x2)
        .into_par_iter()
        .map(|j| {
            let (s, c) = params.phase(j).sin_cos_pi();
            if c.abs() < SINGULAR_COS || (c.abs() < 1e-12 && params.site(j).cos_may_vanish()) {
                return Err(Error::SingularSite { site: j });
            }
            Ok(params.lambda * s / c)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(BoxOperator {
        x1,
        x2,
        params: Some(params.clone()),
        diag,
    })
}

impl BoxOperator {
    /// Tridiagonal matrix with unit off-diagonal and the given diagonal,
    /// indexed from `x1`.
    pub fn from_diagonal(x1: i64, diag: Vec<f64>) -> BoxOperator {
        let x2 = x1 + diag.len() as i64 - 1;
        BoxOperator { x1, x2, params: None, diag }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    /// `||diag||_inf + 2`, an upper bound for `||H||`.
    pub fn norm(&self) -> f64 {
        self.diag.iter().fold(0.0f64, |a, d| a.max(d.abs())) + 2.0
    }

    pub fn contains(&self, k: i64) -> bool {
        (self.x1..=self.x2).contains(&k)
    }

    /// Restriction to `[a, b]`, which must lie inside the box.
    pub fn sub_box(&self, a: i64, b: i64) -> Result<BoxOperator> {
        if a > b || !self.contains(a) || !self.contains(b) {
            return Err(Error::invalid("interval", format!("[{a}, {b}] not inside [{}, {}]", self.x1, self.x2)));
        }
        let lo = (a - self.x1) as usize;
        let hi = (b - self.x1) as usize;
        Ok(BoxOperator {
            x1: a,
            x2: b,
            params: self.params.clone(),
            diag: self.diag[lo..=hi].to_vec(),
        })
    }

    /// `(H - E) v`.
    pub fn apply_shifted(&self, v: &[f64], energy: f64) -> Vec<f64> {
        let n = self.len();
        (0..n)
            .map(|i| {
                let mut s = (self.diag[i] - energy) * v[i];
                if i > 0 {
                    s += v[i - 1];
                }
                if i + 1 < n {
                    s += v[i + 1];
                }
                s
            })
            .collect()
    }

    /// Number of eigenvalues strictly below `energy`.
    pub fn count_below(&self, energy: f64) -> usize {
        let mut count = 0;
        let mut q = 1.0f64;
        let mut first = true;
        for &d in &self.diag {
            q = if first { d - energy } else { (d - energy) - 1.0 / q };
            first = false;
            if q == 0.0 {
                q = -PIVOT_FLOOR;
            }
            if q < 0.0 {
                count += 1;
            }
        }
        count
    }

    fn gershgorin(&self) -> (f64, f64) {
        let lo = self.diag.iter().cloned().fold(f64::INFINITY, f64::min) - 2.0;
        let hi = self.diag.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 2.0;
        (lo, hi)
    }

    /// Sturm counts for several energies in one pass; the independent
    /// chains keep the divider busy.
    fn count_below_lanes(&self, energies: &[f64; LANES]) -> [usize; LANES] {
        let mut count = [0usize; LANES];
        let mut inv = [0.0f64; LANES];
        for &d in &self.diag {
            for l in 0..LANES {
                let mut q = (d - energies[l]) - inv[l];
                if q == 0.0 {
                    q = -PIVOT_FLOOR;
                }
                count[l] += (q < 0.0) as usize;
                inv[l] = 1.0 / q;
            }
        }
        count
    }

    /// The `index`-th smallest eigenvalue (0-based) by bisection to full
    /// double precision.
    pub fn eigenvalue(&self, index: usize) -> f64 {
        self.eigenvalue_lanes(&[index])[0]
    }

    /// Bisection for up to `LANES` eigenvalues in lockstep.
    fn eigenvalue_lanes(&self, indices: &[usize]) -> Vec<f64> {
        let (g_lo, g_hi) = self.gershgorin();
        let mut lo = [g_lo; LANES];
        let mut hi = [g_hi; LANES];
        let mut done = [false; LANES];
        for l in indices.len()..LANES {
            done[l] = true;
        }
        while !done.iter().all(|d| *d) {
            let mut mid = [0.0; LANES];
            for l in 0..LANES {
                mid[l] = 0.5 * (lo[l] + hi[l]);
                let narrow = hi[l] - lo[l] <= 2.0 * f64::EPSILON * lo[l].abs().max(hi[l].abs()) + BISECTION_FLOOR;
                if mid[l] <= lo[l] || mid[l] >= hi[l] || narrow {
                    done[l] = true;
                }
            }
            let counts = self.count_below_lanes(&mid);
            for l in 0..LANES {
                if done[l] {
                    continue;
                }
                if counts[l] > indices[l] {
                    hi[l] = mid[l];
                } else {
                    lo[l] = mid[l];
                }
            }
        }
        (0..indices.len()).map(|l| 0.5 * (lo[l] + hi[l])).collect()
    }

    /// Eigenvalue indices in the requested range.
    pub fn index_range(&self, which: Which) -> std::ops::Range<usize> {
        match which {
            Which::All => 0..self.len(),
            Which::Window(a, b) => self.count_below(a)..self.count_below(b),
        }
    }

    pub fn eigenvalues(&self, which: Which) -> Vec<f64> {
        let idx: Vec<usize> = self.index_range(which).collect();
        idx.par_chunks(LANES)
            .flat_map_iter(|c| self.eigenvalue_lanes(c))
            .collect()
    }

    /// Fails when `energy` is within the refusal margin of the spectrum.
    pub fn check_resolvent(&self, energy: f64) -> Result<()> {
        let margin = NEAR_EIGENVALUE * self.norm();
        if self.count_below(energy - margin) != self.count_below(energy + margin) {
            return Err(Error::NearEigenvalue { energy, gap: margin });
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Which {
    All,
    /// Eigenvalues in `[lo, hi)`.
    Window(f64, f64),
}

#[derive(Clone, Debug)]
pub struct Eigenpair {
    pub energy: f64,
    /// Unit Euclidean norm, largest entry positive; tails may underflow.
    pub vector: Vec<f64>,
    /// `ln|v(k)|` of the same normalized vector, finite far below `f64` range.
    pub ln_abs: Vec<f64>,
    /// Sign of every entry, kept where `vector` has underflowed.
    pub signs: Vec<f64>,
    pub residual: f64,
}

impl Eigenpair {
    pub fn sign(&self, i: usize) -> f64 {
        self.signs[i]
    }

    pub fn log_value(&self, i: usize) -> SignedLog {
        SignedLog {
            sign: self.sign(i),
            ln_abs: self.ln_abs[i],
        }
    }

    /// Index of the largest entry.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for i in 1..self.ln_abs.len() {
            if self.ln_abs[i] > self.ln_abs[best] {
                best = i;
            }
        }
        best
    }
}

fn guard(x: f64) -> f64 {
    if x == 0.0 {
        PIVOT_FLOOR
    } else {
        x
    }
}

/// One-sided ratios and the twist mismatch at every site.
struct Twist {
    /// `u(k+1) / u(k)` for the solution vanishing left of the box.
    left: Vec<f64>,
    /// `u(k-1) / u(k)` for the solution vanishing right of the box.
    right: Vec<f64>,
    gamma: Vec<f64>,
}

impl Twist {
    fn new(diag: &[f64], energy: f64) -> Twist {
        let n = diag.len();
        let mut left = vec![0.0; n];
        let mut inv = 0.0;
        for k in 0..n {
            left[k] = guard((energy - diag[k]) - inv);
            inv = 1.0 / left[k];
        }
        let mut right = vec![0.0; n];
        let mut inv = 0.0;
        for k in (0..n).rev() {
            right[k] = guard((energy - diag[k]) - inv);
            inv = 1.0 / right[k];
        }
        let gamma = (0..n)
            .map(|t| {
                let l = if t > 0 { 1.0 / left[t - 1] } else { 0.0 };
                let r = if t + 1 < n { 1.0 / right[t + 1] } else { 0.0 };
                (diag[t] - energy) + l + r
            })
            .collect();
        Twist { left, right, gamma }
    }

    /// Sites ordered by increasing `|gamma|`.
    fn order(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.gamma.len()).collect();
        idx.sort_by(|&a, &b| self.gamma[a].abs().total_cmp(&self.gamma[b].abs()));
        idx
    }

    /// Log-magnitudes and signs of the vector with `u(t) = 1`.
    fn vector(&self, t: usize) -> (Vec<f64>, Vec<f64>) {
        let n = self.gamma.len();
        let mut ln = vec![0.0; n];
        let mut sg = vec![1.0; n];
        for k in (0..t).rev() {
            // u(k) = u(k+1) / left[k]
            ln[k] = ln[k + 1] - self.left[k].abs().ln();
            sg[k] = sg[k + 1] * self.left[k].signum();
        }
        for k in t + 1..n {
            ln[k] = ln[k - 1] - self.right[k].abs().ln();
            sg[k] = sg[k - 1] * self.right[k].signum();
        }
        (ln, sg)
    }
}

fn log_sum_exp(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + xs.map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Normalizes a log-form vector to unit norm with its largest entry
/// positive.
fn finish(ln: Vec<f64>, sg: Vec<f64>) -> Normalized {
    let ln_norm = 0.5 * log_sum_exp(ln.iter().map(|x| 2.0 * x));
    let top = (0..ln.len()).max_by(|&a, &b| ln[a].total_cmp(&ln[b])).unwrap_or(0);
    let flip = sg[top];
    let ln: Vec<f64> = ln.iter().map(|x| x - ln_norm).collect();
    let sg: Vec<f64> = sg.iter().map(|s| s * flip).collect();
    let v = ln.iter().zip(&sg).map(|(l, s)| s * l.exp()).collect();
    (v, ln, sg)
}

/// Unit vector, its log-magnitudes and its signs.
type Normalized = (Vec<f64>, Vec<f64>, Vec<f64>);

fn from_linear(v: Vec<f64>) -> Normalized {
    let ln = v.iter().map(|x| x.abs().ln()).collect();
    let sg = v.iter().map(|x| if *x < 0.0 { -1.0 } else { 1.0 }).collect();
    finish(ln, sg)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Solves `(H - E) x = b` by tridiagonal elimination with partial pivoting.
pub fn solve_shifted(diag: &[f64], energy: f64, b: &[f64]) -> Vec<f64> {
    let n = diag.len();
    if n == 1 {
        return vec![b[0] / guard(diag[0] - energy)];
    }
    // the sub-diagonal is all ones; du2 collects fill-in from row swaps
    let mut d: Vec<f64> = diag.iter().map(|x| x - energy).collect();
    let mut du = vec![1.0f64; n - 1];
    let mut du2 = vec![0.0f64; n.saturating_sub(2)];
    let mut rhs = b.to_vec();
    for i in 0..n - 1 {
        if d[i].abs() >= 1.0 {
            let f = 1.0 / d[i];
            d[i + 1] -= f * du[i];
            rhs[i + 1] -= f * rhs[i];
            if i + 2 < n {
                du2[i] = 0.0;
            }
        } else {
            let f = d[i];
            d[i] = 1.0;
            let tmp = d[i + 1];
            d[i + 1] = du[i] - f * tmp;
            if i + 2 < n {
                du2[i] = du[i + 1];
                du[i + 1] = -f * du2[i];
            }
            du[i] = tmp;
            rhs.swap(i, i + 1);
            rhs[i + 1] -= f * rhs[i];
        }
    }
    let mut x = vec![0.0; n];
    x[n - 1] = rhs[n - 1] / guard(d[n - 1]);
    x[n - 2] = (rhs[n - 2] - du[n - 2] * x[n - 1]) / guard(d[n - 2]);
    for i in (0..n.saturating_sub(2)).rev() {
        x[i] = (rhs[i] - du[i] * x[i + 1] - du2[i] * x[i + 2]) / guard(d[i]);
    }
    x
}

fn residual_of(bx: &BoxOperator, v: &[f64], energy: f64) -> f64 {
    norm2(&bx.apply_shifted(v, energy))
}

/// Eigenvectors for a run of eigenvalues that are numerically
/// indistinguishable.
fn cluster_vectors(bx: &BoxOperator, energies: &[f64]) -> Result<Vec<Eigenpair>> {
    let tol = 1e-10 * bx.norm();
    let center = energies.iter().sum::<f64>() / energies.len() as f64;
    let twist = Twist::new(&bx.diag, center);
    let mut accepted: Vec<Normalized> = Vec::new();
    let budget = (200 * energies.len()).min(bx.len());
    for &t in twist.order().iter().take(budget) {
        if accepted.len() == energies.len() {
            break;
        }
        let (ln, sg) = twist.vector(t);
        let (mut v, mut ln, mut sg) = finish(ln, sg);
        let coeffs: Vec<f64> = accepted.iter().map(|(w, _, _)| dot(&v, w)).collect();
        if coeffs.iter().any(|c| c.abs() > 1e-12) {
            for (c, (w, _, _)) in coeffs.iter().zip(&accepted) {
                for (x, y) in v.iter_mut().zip(w) {
                    *x -= c * y;
                }
            }
            let r = norm2(&v);
            if r < 0.5 {
                continue;
            }
            (v, ln, sg) = from_linear(v);
        }
        if residual_of(bx, &v, center) <= tol {
            accepted.push((v, ln, sg));
        }
    }
    // inverse iteration for anything the twists did not supply
    let mut rng = ChaCha8Rng::seed_from_u64(bx.len() as u64 ^ center.to_bits());
    let shift = center + f64::EPSILON * center.abs().max(1.0) * 4.0;
    while accepted.len() < energies.len() {
        let mut v: Vec<f64> = (0..bx.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut ok = false;
        for _ in 0..6 {
            for (w, _, _) in &accepted {
                let c = dot(&v, w);
                for (x, y) in v.iter_mut().zip(w) {
                    *x -= c * y;
                }
            }
            let nv = norm2(&v);
            v.iter_mut().for_each(|x| *x /= nv);
            if residual_of(bx, &v, center) <= tol {
                ok = true;
                break;
            }
            v = solve_shifted(&bx.diag, shift, &v);
        }
        if !ok {
            return Err(Error::ConvergenceFailure(format!(
                "cluster of {} eigenvalues near {center}: {} vectors found",
                energies.len(),
                accepted.len()
            )));
        }
        accepted.push(from_linear(v));
    }
    // pair vectors with energies by Rayleigh quotient
    accepted.sort_by(|a, b| {
        let ra = dot(&a.0, &bx.apply_shifted(&a.0, 0.0));
        let rb = dot(&b.0, &bx.apply_shifted(&b.0, 0.0));
        ra.total_cmp(&rb)
    });
    Ok(accepted
        .into_iter()
        .zip(energies)
        .map(|((vector, ln_abs, signs), &energy)| Eigenpair {
            residual: residual_of(bx, &vector, energy),
            energy,
            vector,
            ln_abs,
            signs,
        })
        .collect())
}

fn single_vector(bx: &BoxOperator, energy: f64) -> Result<Eigenpair> {
    let twist = Twist::new(&bx.diag, energy);
    let tol = 1e-10 * bx.norm();
    let mut best: Option<Eigenpair> = None;
    let first = (0..bx.len())
        .min_by(|&a, &b| twist.gamma[a].abs().total_cmp(&twist.gamma[b].abs()))
        .unwrap_or(0);
    // the minimizing twist nearly always suffices; a few runners-up cover
    // ties between distant sites
    let runners_up = std::iter::once(()).flat_map(|_| twist.order().into_iter().filter(move |&t| t != first).take(7));
    let candidates = std::iter::once(first).chain(runners_up);
    for t in candidates {
        let (ln, sg) = twist.vector(t);
        let (vector, ln_abs, signs) = finish(ln, sg);
        let residual = residual_of(bx, &vector, energy);
        if best.as_ref().is_none_or(|b| residual < b.residual) {
            best = Some(Eigenpair { energy, vector, ln_abs, signs, residual });
        }
        if residual <= tol {
            break;
        }
    }
    let best = best.expect("non-empty box");
    if best.residual <= tol {
        return Ok(best);
    }
    cluster_vectors(bx, &[energy]).map(|mut v| v.remove(0))
}

/// Groups sorted eigenvalues into runs separated by more than the cluster
/// gap.
fn clusters(values: &[f64]) -> Vec<std::ops::Range<usize>> {
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..=values.len() {
        let split = i == values.len()
            || values[i] - values[i - 1] > CLUSTER_GAP * values[i].abs().max(values[i - 1].abs()).max(1.0);
        if split {
            out.push(start..i);
            start = i;
        }
    }
    out
}

/// Computes the requested eigenpairs and maps each through `f`, so large
/// boxes never hold every vector at once.
pub fn eigensolve_with<T, F>(bx: &BoxOperator, which: Which, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&Eigenpair) -> T + Sync,
{
    let range = bx.index_range(which);
    // extend to whole clusters at the edges of the window
    let values = bx.eigenvalues(Which::All);
    let groups = clusters(&values);
    let results: Vec<Result<Vec<(usize, T)>>> = groups
        .par_iter()
        .filter(|g| g.start < range.end && g.end > range.start)
        .map(|g| {
            let pairs = if g.len() == 1 {
                vec![single_vector(bx, values[g.start])?]
            } else {
                cluster_vectors(bx, &values[g.clone()])?
            };
            Ok(pairs
                .iter()
                .enumerate()
                .filter(|(i, _)| range.contains(&(g.start + i)))
                .map(|(i, p)| (g.start + i, f(p)))
                .collect())
        })
        .collect();
    let mut flat = Vec::with_capacity(range.len());
    for r in results {
        flat.extend(r?);
    }
    flat.sort_by_key(|(i, _)| *i);
    Ok(flat.into_iter().map(|(_, t)| t).collect())
}

/// All eigenpairs in the requested range, sorted by energy.
pub fn eigensolve(bx: &BoxOperator, which: Which) -> Result<Vec<Eigenpair>> {
    eigensolve_with(bx, which, |p| p.clone())
}

/// Leading and trailing principal minors of `H - E` in signed-log form:
/// `lead[i]` covers the first `i` sites, `trail[i]` the sites from `i` on.
fn minors(diag: &[f64], energy: f64) -> (Vec<SignedLog>, Vec<SignedLog>) {
    let run = |it: &mut dyn Iterator<Item = &f64>| -> Vec<SignedLog> {
        let mut out = vec![SignedLog::from_f64(1.0)];
        let (mut cur, mut prev, mut scale) = (1.0f64, 0.0f64, 0.0f64);
        for d in it {
            let next = (d - energy).mul_add(cur, -prev);
            prev = cur;
            cur = next;
            let m = cur.abs().max(prev.abs());
            if m > 0.0 && m.is_finite() {
                cur /= m;
                prev /= m;
                scale += m.ln();
            }
            out.push(SignedLog::new(cur, scale));
        }
        out
    };
    let lead = run(&mut diag.iter());
    let mut trail = run(&mut diag.iter().rev());
    trail.reverse();
    (lead, trail)
}

/// `G(x, y) = <e_x, (H_box - E)^{-1} e_y>` as a ratio of minors.
pub fn greens_det(bx: &BoxOperator, energy: f64, x: i64, y: i64) -> Result<SignedLog> {
    if !bx.contains(x) || !bx.contains(y) {
        return Err(Error::invalid("site", "outside the box"));
    }
    bx.check_resolvent(energy)?;
    let (lead, trail) = minors(&bx.diag, energy);
    let (a, b) = if x <= y { (x, y) } else { (y, x) };
    let i = (a - bx.x1) as usize;
    let j = (b - bx.x1) as usize;
    let sign = if (j - i).is_multiple_of(2) { 1.0 } else { -1.0 };
    let num = lead[i].mul(trail[j + 1]);
    let mut g = num.div(lead[bx.len()]);
    g.sign *= sign;
    Ok(g)
}

/// Column `x` of `(H_box - E)^{-1}` by a direct solve.
pub fn greens_direct(bx: &BoxOperator, energy: f64, x: i64) -> Result<Vec<f64>> {
    if !bx.contains(x) {
        return Err(Error::invalid("site", "outside the box"));
    }
    bx.check_resolvent(energy)?;
    let mut e = vec![0.0; bx.len()];
    e[(x - bx.x1) as usize] = 1.0;
    Ok(solve_shifted(&bx.diag, energy, &e))
}

/// A solution of the three-term equation on consecutive sites.
#[derive(Clone, Debug)]
pub struct Solution {
    pub start: i64,
    pub values: Vec<SignedLog>,
}

impl Solution {
    pub fn end(&self) -> i64 {
        self.start + self.values.len() as i64 - 1
    }

    pub fn at(&self, k: i64) -> Option<SignedLog> {
        if k < self.start {
            return None;
        }
        self.values.get((k - self.start) as usize).copied()
    }

    pub fn from_eigenpair(bx: &BoxOperator, pair: &Eigenpair) -> Solution {
        Solution {
            start: bx.x1,
            values: (0..pair.vector.len()).map(|i| pair.log_value(i)).collect(),
        }
    }
}

/// Extends `(phi(0), phi(-1))` over `[lo, hi]` (which must contain `-1` and
/// `0`) through `phi(k+1) + phi(k-1) + v_k phi(k) = E phi(k)`.
pub fn extend_solution(params: &ModelParams, phi0: f64, phi_minus1: f64, lo: i64, hi: i64) -> Result<Solution> {
    if lo > -1 || hi < 0 {
        return Err(Error::invalid("range", "must contain -1 and 0"));
    }
    let len = (hi - lo + 1) as usize;
    let mut values = vec![SignedLog::from_f64(0.0); len];
    let idx = |k: i64| (k - lo) as usize;
    values[idx(0)] = SignedLog::from_f64(phi0);
    values[idx(-1)] = SignedLog::from_f64(phi_minus1);
    // forward: phi(k+1) = (E - v_k) phi(k) - phi(k-1)
    let (mut cur, mut prev, mut scale) = (phi0, phi_minus1, 0.0f64);
    for k in 0..hi {
        let c = params.energy - params.potential(k)?;
        let next = c.mul_add(cur, -prev);
        prev = cur;
        cur = next;
        values[idx(k + 1)] = SignedLog::new(cur, scale);
        let m = cur.abs().max(prev.abs());
        if m > 0.0 {
            cur /= m;
            prev /= m;
            scale += m.ln();
        }
    }
    // backward: phi(k-1) = (E - v_k) phi(k) - phi(k+1)
    let (mut cur, mut next, mut scale) = (phi_minus1, phi0, 0.0f64);
    for k in (lo + 1..=-1).rev() {
        let c = params.energy - params.potential(k)?;
        let p = c.mul_add(cur, -next);
        next = cur;
        cur = p;
        values[idx(k - 1)] = SignedLog::new(cur, scale);
        let m = cur.abs().max(next.abs());
        if m > 0.0 {
            cur /= m;
            next /= m;
            scale += m.ln();
        }
    }
    Ok(Solution { start: lo, values })
}

/// Relative defect of `phi(y) = -G(x1, y) phi(x1 - 1) - G(x2, y) phi(x2 + 1)`
/// on the sub-box `[x1, x2]` of `bx`, with `G` the resolvent of that
/// sub-box. The defect is measured against the largest of the three terms.
pub fn green_identity_check(bx: &BoxOperator, phi: &Solution, energy: f64, x1: i64, x2: i64, y: i64) -> Result<f64> {
    if !(x1 <= y && y <= x2) {
        return Err(Error::invalid("y", "must lie in [x1, x2]"));
    }
    let missing = || Error::invalid("solution", "does not cover [x1 - 1, x2 + 1]");
    let left = phi.at(x1 - 1).ok_or_else(missing)?;
    let right = phi.at(x2 + 1).ok_or_else(missing)?;
    let center = phi.at(y).ok_or_else(missing)?;
    let sub = bx.sub_box(x1, x2)?;
    let t1 = greens_det(&sub, energy, x1, y)?.mul(left);
    let t2 = greens_det(&sub, energy, x2, y)?.mul(right);
    let scale = center.ln_abs.max(t1.ln_abs).max(t2.ln_abs);
    if !scale.is_finite() {
        return Ok(0.0);
    }
    let lin = |s: SignedLog| s.sign * (s.ln_abs - scale).exp();
    Ok((lin(center) + lin(t1) + lin(t2)).abs())
}
