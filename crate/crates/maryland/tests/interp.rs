mod common;

use common::{dense_det_p, golden, rng, theta};
use maryland::cf::Frequency;
use maryland::cocycle::{lyapunov_closed, lyapunov_tilde, ModelParams};
use maryland::interp::*;
use maryland::strategy::{MidpointLattice, Strategies};
use maryland::torus::TorusPoint;
use maryland::verify::block_radius;
use maryland::Error;
use proptest::prelude::*;
use rand::Rng;
use rug::float::Constant;
use rug::{Float, Integer, Rational};

const PREC: u32 = 256;

/// `P~_k(x)` at a real `x` from the dense 512-bit determinant.
fn oracle_ptilde(lambda: f64, e: f64, alpha: &Float, x: &Float, k: usize) -> Float {
    const P: u32 = 512;
    let det = dense_det_p(lambda, e, alpha, x, k, P);
    let pi = Float::with_val(P, Constant::Pi);
    let mut prod = Float::with_val(P, 1);
    for j in 0..k {
        let t = Float::with_val(P, x + Float::with_val(P, alpha * j as u32));
        prod *= Float::with_val(P, &pi * t).cos();
    }
    det * prod
}

fn random_nodes(r: &mut impl Rng, count: usize) -> NodeSet {
    NodeSet::custom((0..count).map(|_| TorusPoint::from_f64(r.gen(), PREC)).collect())
}

#[test]
fn lagrange_matches_dense_oracle() {
    let mut r = rng(20);
    let f = golden(40);
    let alpha = f.value().value(512);
    for _ in 0..5 {
        let (lambda, e) = (r.gen_range(0.5..3.0), r.gen_range(-2.0..2.0));
        let params = ModelParams::from_frequency(lambda, e, &f, &theta(0.0)).unwrap();
        let nodes = random_nodes(&mut r, 11);
        let at = TorusPoint::from_f64(r.gen(), PREC);
        let got = lagrange_reconstruct(&params, 10, &nodes, &at, PREC).unwrap();
        let want = oracle_ptilde(lambda, e, &alpha, &at.value(512), 10);
        let err = Float::with_val(512, &got - &want).abs() / Float::with_val(512, want.abs_ref());
        assert!(err.to_f64() <= 1e-25, "relative error {:e}", err.to_f64());
    }
}

#[test]
fn lagrange_is_cardinal_at_nodes() {
    let mut r = rng(21);
    let f = golden(40);
    let params = ModelParams::from_frequency(2.0, 0.3, &f, &theta(0.0)).unwrap();
    let nodes = random_nodes(&mut r, 9);
    let alpha = f.value().value(PREC);
    for t in &nodes.thetas {
        let got = lagrange_reconstruct(&params, 8, &nodes, t, PREC).unwrap();
        let want = ptilde_mp(2.0, 0.3, &t.value(PREC), &alpha, 8, PREC);
        assert_eq!(got, want);
    }
}

#[test]
fn lagrange_rejects_duplicates_and_wrong_count() {
    let f = golden(20);
    let params = ModelParams::from_frequency(2.0, 0.0, &f, &theta(0.0)).unwrap();
    let mut thetas: Vec<TorusPoint> = (0..4).map(|i| theta(0.1 + 0.2 * i as f64)).collect();
    thetas.push(thetas[1].clone());
    let nodes = NodeSet::custom(thetas);
    assert!(matches!(
        lagrange_reconstruct(&params, 4, &nodes, &theta(0.05), PREC),
        Err(Error::DegenerateNodes { i: 1, j: 4 })
    ));
    assert!(lagrange_reconstruct(&params, 3, &nodes, &theta(0.05), PREC).is_err());
}

#[test]
fn polynomial_structure() {
    let f = golden(40);
    let params = ModelParams::from_frequency(2.0, 0.5, &f, &theta(0.27)).unwrap();
    assert!(g_poly_check(&params, 1, 20, PREC).unwrap() <= 1e-12);
    let r20 = g_poly_check(&params, 20, 20, PREC).unwrap();
    assert!(r20 <= 1e-20, "k = 20: {r20:e}");
    assert!(matches!(g_poly_check(&params, 40, 20, 64), Err(Error::IllConditioned { .. })));
}

/// Brute-force `gamma` on a uniform grid; a lower bound of the supremum.
fn gamma_brute(nodes: &NodeSet, grid: usize) -> f64 {
    let xs: Vec<f64> = nodes.thetas.iter().map(|t| t.value_f64()).collect();
    let ls = |a: f64, b: f64| (std::f64::consts::PI * (a - b)).sin().abs().ln();
    let denom: Vec<f64> = (0..xs.len())
        .map(|j| (0..xs.len()).filter(|&l| l != j).map(|l| ls(xs[j], xs[l])).sum())
        .collect();
    let mut best = f64::NEG_INFINITY;
    for i in 0..grid {
        let th = i as f64 / grid as f64;
        let logs: Vec<f64> = xs.iter().map(|&x| ls(th, x)).collect();
        let total: f64 = logs.iter().sum();
        for j in 0..xs.len() {
            best = best.max(total - logs[j] - denom[j]);
        }
    }
    best / nodes.degree() as f64
}

#[test]
fn equally_spaced_nodes_are_uniform() {
    let nodes = NodeSet::custom((0..21).map(|j| TorusPoint::from_rational(&Rational::from((j, 21)), PREC)).collect());
    let u = uniformity_gamma(&nodes, 2100).unwrap();
    assert!(u.gamma_hat <= 0.2, "{}", u.gamma_hat);
    let brute = gamma_brute(&nodes, 20_000);
    assert!(u.gamma_hat >= brute - 1e-6 && u.gamma_grid <= u.gamma_hat);
}

#[test]
fn clustered_nodes_are_not_uniform() {
    let mut thetas: Vec<TorusPoint> = (0..20).map(|j| TorusPoint::from_rational(&Rational::from((j, 20)), PREC)).collect();
    thetas.push(theta(0.025 + 1e-12));
    thetas[1] = theta(0.025);
    let nodes = NodeSet::custom(thetas);
    let u = uniformity_gamma(&nodes, 2100).unwrap();
    assert!(u.gamma_hat >= 1.0, "{}", u.gamma_hat);
}

#[test]
fn uniformity_grid_too_small() {
    let nodes = NodeSet::custom((0..5).map(|j| TorusPoint::from_rational(&Rational::from((j, 5)), PREC)).collect());
    assert!(uniformity_gamma(&nodes, 49).is_err());
}

#[test]
fn resonant_uniformity_at_89() {
    let f = golden(20);
    let n = 10;
    assert_eq!(f.q_u64(n).unwrap(), 89);
    let q_next = f.q_u64(n + 1).unwrap() as f64;
    let nodes = resonant_nodes_any(&f, &theta(0.3), n, 3).unwrap();
    assert_eq!(nodes.len(), 178);
    let u = uniformity_gamma(&nodes, 20 * nodes.len()).unwrap();
    let bound = (q_next / 3.0).ln() / 177.0 + 0.05;
    println!("gamma = {:.4}, bound = {bound:.4}", u.gamma_hat);
    assert!(u.gamma_hat <= bound);
    assert!(u.gamma_hat >= gamma_brute(&nodes, 20_000) - 1e-6);
}

#[test]
fn resonant_blocks() {
    let f = golden(12);
    let set = resonant_nodes_any(&f, &theta(0.3), 4, 1).unwrap();
    assert_eq!(set.len(), 10);
    // q_1 = 2, q_2 = 9: the range bound 2 q_2 / (3 q_1) = 3 is attained
    let g = Frequency::from_quotients(&[Integer::from(2), Integer::from(4)], 6, PREC).unwrap();
    assert_eq!((g.q_u64(1).unwrap(), g.q_u64(2).unwrap()), (2, 9));
    for ell in [-3i64, -1, 1, 2, 3] {
        let s = build_resonant_nodes(&g, &theta(0.3), 1, ell).unwrap();
        let mut idx = s.indices.clone();
        idx.sort();
        idx.dedup();
        assert_eq!(idx.len(), 4, "I_0 and I_ell overlap for ell = {ell}");
    }
    for ell in [-4i64, 4] {
        assert!(matches!(
            build_resonant_nodes(&g, &theta(0.3), 1, ell),
            Err(Error::RangeViolation { .. })
        ));
    }
}

#[test]
fn nonresonant_construction() {
    let f = golden(25);
    for n in [8usize, 9, 10] {
        let q = f.q_u64(n).unwrap() as i64;
        let (_, b) = block_radius(q as u64, lyapunov_closed(2.0, 0.0), 0.05).unwrap();
        for y in [b + 1, q / 4, q / 2, q + q / 3, -q / 2 - 1] {
            let set = build_nonresonant_nodes(&f, &theta(0.3), n, y, b).unwrap();
            let NodeScale::Nonresonant { n0, s, .. } = set.scale else { panic!() };
            let qs = f.q_u64(n - n0).unwrap() as i64;
            let q_up = f.q_u64(n - n0 + 1).unwrap() as i64;
            let dist = dist_to_multiples(y, q);
            // n0 least, s greatest
            assert!(2 * qs <= dist && (n0 == 1 || 2 * f.q_u64(n - n0 + 1).unwrap() as i64 > dist));
            assert!(2 * s as i64 * qs <= dist && dist < 2 * (s as i64 + 1) * qs);
            assert!(b < dist && dist < 2 * q_up, "y = {y}");
            assert!((s as i64) * qs < q_up);
            let mut idx = set.indices.clone();
            idx.sort();
            idx.dedup();
            assert_eq!(idx.len() as i64, 2 * s as i64 * qs);
        }
        assert!(matches!(
            build_nonresonant_nodes(&f, &theta(0.3), n, q + b, b),
            Err(Error::ResonantY { .. })
        ));
    }
}

#[test]
fn nonresonant_uniformity() {
    // eps-uniformity only holds from some scale on; report the first tested
    // scale from which every y with dist(y, q_n Z) >= q_n / 4 has gamma <= 0.1
    let f = golden(25);
    let mut worst_by_scale = Vec::new();
    for n in 8usize..=12 {
        let q = f.q_u64(n).unwrap() as i64;
        let (_, b) = block_radius(q as u64, lyapunov_closed(2.0, 0.0), 0.05).unwrap();
        let mut worst = 0.0f64;
        for y in -2 * q..2 * q {
            if 4 * dist_to_multiples(y, q) < q {
                continue;
            }
            let set = build_nonresonant_nodes(&f, &theta(0.3), n, y, b).unwrap();
            worst = worst.max(uniformity_gamma(&set, 20 * set.len()).unwrap().gamma_hat);
        }
        println!("q = {q}: worst gamma {worst:.4}");
        worst_by_scale.push((q, worst));
    }
    let first = worst_by_scale
        .iter()
        .rposition(|&(_, g)| g > 0.1)
        .map_or(0, |i| i + 1);
    let q_first = worst_by_scale.get(first).map(|p| p.0);
    println!("first passing scale: {q_first:?}");
    assert!(matches!(q_first, Some(q) if q <= 89), "{worst_by_scale:?}");
}

#[test]
fn herman_closed_form_at_k1() {
    // mean of ln|a cos(pi t) - b sin(pi t)| over the circle is ln(sqrt(a^2+b^2)/2)
    let f = golden(30);
    for (lambda, e) in [(2.0, 0.0), (2.0, 2.0), (0.5, 1.0), (4.0, 0.0)] {
        let params = ModelParams::from_frequency(lambda, e, &f, &theta(0.0)).unwrap();
        let h = herman_average(&params, 1, 10_000).unwrap();
        let exact = (e * e + lambda * lambda).sqrt().ln() - 2f64.ln();
        assert!((h.mean - exact).abs() <= 1e-4, "({lambda}, {e}): {} vs {exact}", h.mean);
    }
}

#[test]
fn herman_lower_bound() {
    let f = golden(30);
    let params = ModelParams::from_frequency(2.0, 0.0, &f, &theta(0.0)).unwrap();
    let h = herman_average(&params, 100, 10_000).unwrap();
    assert!(h.mean >= lyapunov_tilde(2.0, 0.0) - 0.01, "{}", h.mean);
    assert_eq!(h.lower_bound, lyapunov_tilde(2.0, 0.0));
    let h2 = herman_average(&params, 100, 20_000).unwrap();
    assert!((h2.mean - h.mean).abs() < 1e-3, "{} vs {}", h2.mean, h.mean);
}

#[test]
fn herman_with_registered_rules() {
    let f = golden(30);
    let params = ModelParams::from_frequency(2.0, 1.0, &f, &theta(0.0)).unwrap();
    let s = Strategies::default();
    let tol = 0.01 + 2.0 / 10_000f64.sqrt();
    for name in s.quadrature.names() {
        let h = herman_average_with(&params, 50, 10_000, s.quadrature.get(name).unwrap()).unwrap();
        assert!(h.mean >= h.lower_bound - tol, "{name}: {}", h.mean);
    }
    let m = herman_average_with(&params, 50, 10_000, &MidpointLattice).unwrap();
    assert_eq!(m.offset, 0.5);
}

#[test]
fn small_node_values_force_small_sup() {
    // node values below (|ell|/q_{n+1}) e^{(L~ - 2 eps)(2q_n - 1)} give a
    // reconstructed sup below e^{(L~ - eps/2)(2q_n - 1)}
    let f = golden(20);
    let eps = 0.1;
    let lt = lyapunov_tilde(2.0, 0.0);
    let mut r = rng(22);
    for n in [8usize, 9] {
        let q = f.q_u64(n).unwrap() as f64;
        let q_next = f.q_u64(n + 1).unwrap() as f64;
        let nodes = resonant_nodes_any(&f, &theta(0.3), n, 1).unwrap();
        let deg = 2.0 * q - 1.0;
        let cap = (1.0 / q_next).ln() + (lt - 2.0 * eps) * deg;
        let values: Vec<f64> = (0..nodes.len()).map(|_| cap - r.gen_range(0.0..3.0)).collect();
        let sup = reconstructed_log_sup(&nodes, &values, 20 * nodes.len()).unwrap();
        assert!(sup < (lt - eps / 2.0) * deg, "q = {q}: {sup}");
        // and this contradicts the average lower bound, which actual values obey
        let params = ModelParams::from_frequency(2.0, 0.0, &f, &theta(0.3)).unwrap();
        let h = herman_average(&params, deg as u64, 10_000).unwrap();
        assert!(h.mean * deg > sup);
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 32, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn resonant_sets_have_2q_distinct_sites(n in 4usize..12, ell in 1i64..6) {
        let f = golden(20);
        let set = resonant_nodes_any(&f, &theta(0.3), n, ell).unwrap();
        let mut idx = set.indices.clone();
        idx.sort();
        idx.dedup();
        prop_assert_eq!(idx.len() as u64, 2 * f.q_u64(n).unwrap());
    }

    #[test]
    fn gamma_is_shift_invariant(shift in 0.0f64..1.0) {
        let base: Vec<f64> = (0..12).map(|j| (j as f64 * 0.618034) % 1.0).collect();
        let a = NodeSet::custom(base.iter().map(|&x| TorusPoint::from_f64(x, PREC)).collect());
        let b = NodeSet::custom(base.iter().map(|&x| TorusPoint::from_f64((x + shift) % 1.0, PREC)).collect());
        let ga = uniformity_gamma(&a, 600).unwrap().gamma_hat;
        let gb = uniformity_gamma(&b, 600).unwrap().gamma_hat;
        prop_assert!((ga - gb).abs() < 1e-3);
    }
}
