//! Continued-fraction identities checked with exact integer arithmetic.

use maryland::cf::{exact, Frequency};
use maryland::torus::TorusPoint;
use rug::{Float, Integer};

pub fn sqrt2_minus_one(depth: usize) -> Frequency {
    let x = TorusPoint::from_float(&(Float::with_val(600, 2).sqrt() - 1u32), 512);
    Frequency::expand(&x, depth).unwrap()
}

pub fn liouville(depth: usize) -> Frequency {
    Frequency::liouville(64, depth, 512).unwrap()
}

pub fn check_recurrence_and_coprime(f: &Frequency) {
    for k in 1..f.depth() as isize {
        let a = f.a(k as usize + 1).unwrap();
        let lhs = f.q(k + 1).unwrap().clone();
        let rhs = Integer::from(a * f.q(k).unwrap()) + f.q(k - 1).unwrap();
        assert_eq!(lhs, rhs, "recurrence at k = {k}");
        assert_eq!(f.p(k).unwrap().clone().gcd(f.q(k).unwrap()), 1, "gcd at k = {k}");
        if k >= 2 {
            assert!(f.q(k).unwrap() > f.q(k - 1).unwrap());
        }
    }
}

pub fn check_two_sided_bound(f: &Frequency) {
    let one = Integer::from(1) << f.precision_bits();
    // from k = 1 on; at k = 0 it fails whenever a_1 = 1 (q_0 = q_1)
    for k in 1..f.depth() - 1 {
        let (lo, hi) = exact::norm_multiple(f, f.q(k as isize).unwrap());
        let qn1 = f.q(k as isize + 1).unwrap();
        // 1/(2 q_{k+1}) <= ||q_k alpha||  <=>  2^bits <= 2 q_{k+1} lo
        assert!(one <= Integer::from(&lo * qn1) * 2u32, "lower bound at k = {k}");
        // ||q_k alpha|| <= 1/q_{k+1}
        assert!(Integer::from(&hi * qn1) <= one, "upper bound at k = {k}");
    }
}

pub fn check_gap_identity(f: &Frequency) {
    for k in 1..f.depth() - 1 {
        let (l0, w0) = f.signed_gap(k - 1).unwrap();
        let (l1, w1) = f.signed_gap(k).unwrap();
        let (l2, w2) = f.signed_gap(k + 1).unwrap();
        let a = f.a(k + 1).unwrap();
        // the signed gaps q_j alpha - p_j obey the convergent recurrence
        assert_eq!(l2, Integer::from(a * &l1) + &l0, "k = {k}");
        let mid = |l: &Integer, w: &Integer| Integer::from(l << 1) + w;
        let (m0, m1, m2) = (mid(&l0, &w0), mid(&l1, &w1), mid(&l2, &w2));
        // signs alternate and are certain, so ||.|| is |mid| / 2^{bits+1}
        let certain = |l: &Integer, w: &Integer| *l > 0 || Integer::from(l + w) < 0;
        assert!(certain(&l0, &w0) && certain(&l1, &w1) && certain(&l2, &w2));
        assert_eq!(m0.cmp0(), m2.cmp0());
        assert_ne!(m0.cmp0(), m1.cmp0());
        assert_eq!(m0.abs(), (a * m1.abs()) + m2.abs(), "k = {k}");
    }
}

pub fn check_best_approximation(f: &Frequency, q_max: u64) {
    for k in 1..f.depth() {
        let Ok(qk) = f.q_u64(k) else { break };
        if qk > q_max {
            break;
        }
        let prev = f.q(k as isize - 1).unwrap().clone();
        let target = exact::norm_multiple(f, &prev);
        for m in 1..qk {
            if prev == m {
                continue;
            }
            let d = exact::norm_multiple(f, &Integer::from(m));
            assert_eq!(exact::le(&target, &d), Some(true), "k = {k}, m = {m}");
        }
    }
}

