//! Independent brute-force oracles shared by the integration tests.
#![allow(dead_code)]

pub mod continued;

use maryland::cf::Frequency;
use maryland::torus::TorusPoint;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rug::float::Constant;
use rug::{Float, Integer};

pub const ORACLE_PREC: u32 = 1024;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn golden(depth: usize) -> Frequency {
    Frequency::golden_mean(depth, 256)
}

pub fn theta(x: f64) -> TorusPoint {
    TorusPoint::from_f64(x, 256)
}

/// `||x||` for a real `x`.
pub fn norm(x: &Float) -> Float {
    let fl = Float::with_val(x.prec(), x.floor_ref());
    let fr = Float::with_val(x.prec(), x - &fl);
    let other = Float::with_val(x.prec(), 1 - Float::with_val(x.prec(), &fr));
    if fr < other {
        fr
    } else {
        other
    }
}

pub struct Orbit {
    pub alpha: Float,
    pub psi: Float,
    pub q: u64,
    pub a_next: Integer,
    pub gap: Float,
    pub phase_dist: Float,
}

impl Orbit {
    /// `theta - 1/2` and the scale data of `n`, evaluated from scratch.
    pub fn new(f: &Frequency, th: &TorusPoint, n: usize) -> Orbit {
        let alpha = f.value().value(ORACLE_PREC);
        let psi = th.value(ORACLE_PREC) - Float::with_val(ORACLE_PREC, 0.5);
        let q = f.q_u64(n).unwrap();
        let gap = norm(&Float::with_val(ORACLE_PREC, &alpha * q));
        let phase_dist = norm(&Float::with_val(ORACLE_PREC, &psi * q));
        Orbit { alpha, psi, q, a_next: f.a(n + 1).unwrap().clone(), gap, phase_dist }
    }

    /// `||theta - 1/2 + k alpha||`.
    pub fn dist(&self, k: i128) -> Float {
        let ka = Float::with_val(ORACLE_PREC, &self.alpha * Integer::from(k));
        norm(&Float::with_val(ORACLE_PREC, &self.psi + &ka))
    }

    pub fn delta_n(&self) -> Float {
        let num = Float::with_val(ORACLE_PREC, self.phase_dist.ln_ref()) - Float::with_val(ORACLE_PREC, self.gap.ln_ref());
        num / self.q
    }

    /// `e^{delta_n q_n}`.
    pub fn growth(&self) -> Float {
        Float::with_val(ORACLE_PREC, &self.phase_dist / &self.gap)
    }

    fn min_dist(&self, from: i128, to: i128) -> Float {
        let mut best = self.dist(from);
        let mut x = Float::with_val(ORACLE_PREC, &self.psi + Float::with_val(ORACLE_PREC, &self.alpha * Integer::from(from)));
        for _ in from + 1..to {
            x += &self.alpha;
            let d = norm(&x);
            if d < best {
                best = d;
            }
        }
        best
    }

    /// `min_{|k| < q_n} ||theta - 1/2 + (c + k) alpha||`.
    pub fn min_dist_around(&self, c: i128) -> Float {
        let q = self.q as i128;
        self.min_dist(c - q + 1, c + q)
    }

    /// Clause (4) of the minimality definition for `(m, ell)`.
    pub fn clause4(&self, m: i128, ell: i128) -> bool {
        let q = self.q as i128;
        let _ = ell;
        if self.a_next >= 4 {
            let jmax = Integer::from(&self.a_next / 6u32).to_i128().unwrap();
            (-jmax..=jmax).all(|j| {
                let c = m + j * q;
                self.dist(c) <= Float::with_val(ORACLE_PREC, self.min_dist(c - q + 1, c + q) * 20u32)
            })
        } else {
            let lo = -(q / 2);
            self.dist(m) <= Float::with_val(ORACLE_PREC, self.min_dist(lo, lo + q) * 20u32)
        }
    }

    /// Every `(m, ell)` satisfying clauses (1)-(4).
    pub fn minimal_pairs(&self) -> Vec<(i128, i128)> {
        let q = self.q as i128;
        let gq = Float::with_val(ORACLE_PREC, &self.gap * (q as f64 + 1.0)) / (2 * q);
        // (|ell| q - q - 1/2) <= e^{delta q}
        let g = self.growth().to_f64();
        let ell_max = ((g + q as f64 + 0.5) / q as f64).floor() as i128;
        let mut out = Vec::new();
        for m in -(q / 2)..(q - q / 2) {
            for ell in -ell_max..=ell_max {
                let lhs = (ell.abs() * q) as f64 - q as f64 - 0.5;
                if lhs > g {
                    continue;
                }
                if self.dist(m + ell * q) < gq && self.clause4(m, ell) {
                    out.push((m, ell));
                }
            }
        }
        out
    }

    /// Index in `[-q/2, q/2)` minimizing the distance.
    pub fn period_minimizer(&self) -> (i128, Float) {
        let q = self.q as i128;
        let lo = -(q / 2);
        let mut best = (lo, self.dist(lo));
        for k in lo + 1..lo + q {
            let d = self.dist(k);
            if d < best.1 {
                best = (k, d);
            }
        }
        best
    }
}

/// Determinant of a dense matrix by Gaussian elimination with partial
/// pivoting.
pub fn dense_det(mut a: Vec<Vec<Float>>) -> Float {
    let n = a.len();
    let prec = a[0][0].prec();
    let mut det = Float::with_val(prec, 1);
    for c in 0..n {
        let p = (c..n)
            .max_by(|&i, &j| a[i][c].clone().abs().partial_cmp(&a[j][c].clone().abs()).unwrap())
            .unwrap();
        if p != c {
            a.swap(p, c);
            det = -det;
        }
        let piv = a[c][c].clone();
        if piv.is_zero() {
            return Float::with_val(prec, 0);
        }
        det *= &piv;
        for r in c + 1..n {
            let factor = Float::with_val(prec, &a[r][c] / &piv);
            if factor.is_zero() {
                continue;
            }
            for k in c..n {
                let t = Float::with_val(prec, &factor * &a[c][k]);
                a[r][k] -= t;
            }
        }
    }
    det
}

/// `det (E - H)` on sites `0..k` built from scratch as a dense matrix.
pub fn dense_det_p(lambda: f64, energy: f64, alpha: &Float, theta: &Float, k: usize, prec: u32) -> Float {
    let pi = Float::with_val(prec, Constant::Pi);
    let mut a = vec![vec![Float::with_val(prec, 0); k]; k];
    for j in 0..k {
        let x = Float::with_val(prec, theta + Float::with_val(prec, alpha * j as u32));
        let t = Float::with_val(prec, &pi * x).tan();
        a[j][j] = Float::with_val(prec, energy) - Float::with_val(prec, t * lambda);
        if j + 1 < k {
            a[j][j + 1] = Float::with_val(prec, -1);
            a[j + 1][j] = Float::with_val(prec, -1);
        }
    }
    dense_det(a)
}

/// A random frequency with small leading quotients and a chosen quotient
/// `a_{n+1}`, and the first scale `n` with `q_n >= 20`.
pub fn random_frequency(rng: &mut ChaCha8Rng, max_a: u32, next: Option<u32>) -> (Frequency, usize) {
    loop {
        let mut prefix: Vec<Integer> = Vec::new();
        let (mut q0, mut q1) = (0u64, 1u64);
        while q1 < 20 {
            let a = rng.gen_range(1..=max_a) as u64;
            prefix.push(Integer::from(a));
            (q0, q1) = (q1, a * q1 + q0);
        }
        if q1 > 5000 {
            continue;
        }
        let n = prefix.len();
        let a_next = next.unwrap_or_else(|| rng.gen_range(1..=max_a));
        prefix.push(Integer::from(a_next));
        for _ in 0..3 {
            prefix.push(Integer::from(rng.gen_range(1..=max_a)));
        }
        let depth = prefix.len() + 2;
        return (Frequency::from_quotients(&prefix, depth, 256).unwrap(), n);
    }
}
