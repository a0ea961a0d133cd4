mod common;

use common::{golden, rng, theta};
use maryland::cocycle::{det_p_pair, product_a, ModelParams, SignedLog};
use maryland::operator::*;
use maryland::strategy::Strategies;
use maryland::torus::TorusPoint;
use maryland::Error;
use proptest::prelude::*;
use rand::Rng;
use rug::Float;

fn maryland_box(lambda: f64, th: f64, x1: i64, x2: i64) -> BoxOperator {
    let p = ModelParams::from_frequency(lambda, 0.0, &golden(40), &theta(th)).unwrap();
    build_box(&p, x1, x2).unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn residual(bx: &BoxOperator, pair: &Eigenpair) -> f64 {
    let r = bx.apply_shifted(&pair.vector, pair.energy);
    r.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[test]
fn free_laplacian_spectrum() {
    let n = 1000;
    let bx = BoxOperator::from_diagonal(0, vec![0.0; n]);
    let ev = bx.eigenvalues(Which::All);
    for (i, e) in ev.iter().enumerate() {
        let m = (n - i) as f64;
        let exact = 2.0 * (std::f64::consts::PI * m / (n as f64 + 1.0)).cos();
        assert!((e - exact).abs() <= 1e-10, "m = {m}: {e} vs {exact}");
    }
    let pairs = eigensolve(&bx, Which::All).unwrap();
    for p in &pairs {
        assert!(residual(&bx, p) <= 1e-10 * bx.norm());
    }
}

#[test]
fn two_site_quadratic() {
    let mut r = rng(30);
    for _ in 0..20 {
        let (d1, d2) = (r.gen_range(-5.0..5.0), r.gen_range(-5.0..5.0));
        let ev = BoxOperator::from_diagonal(3, vec![d1, d2]).eigenvalues(Which::All);
        let disc = ((d1 - d2) * (d1 - d2) + 4.0f64).sqrt();
        assert!((ev[0] - (d1 + d2 - disc) / 2.0).abs() <= 1e-13);
        assert!((ev[1] - (d1 + d2 + disc) / 2.0).abs() <= 1e-13);
    }
}

#[test]
fn trace_identity() {
    let mut r = rng(31);
    let diag: Vec<f64> = (0..200).map(|_| r.gen_range(-4.0..4.0)).collect();
    let trace: f64 = diag.iter().sum();
    let bx = BoxOperator::from_diagonal(0, diag);
    let sum: f64 = bx.eigenvalues(Which::All).iter().sum();
    assert!((sum - trace).abs() <= 1e-8);
    let bx = maryland_box(2.0, 0.3, -100, 99);
    let sum: f64 = bx.eigenvalues(Which::All).iter().sum();
    let trace: f64 = bx.diag.iter().sum();
    assert!((sum - trace).abs() <= 1e-8 * bx.norm());
}

#[test]
fn maryland_eigenpairs_are_backward_stable() {
    let bx = maryland_box(2.0, 0.3, -150, 150);
    let pairs = eigensolve(&bx, Which::All).unwrap();
    assert_eq!(pairs.len(), bx.len());
    for w in pairs.windows(2) {
        assert!(w[0].energy <= w[1].energy);
    }
    for p in &pairs {
        assert!(residual(&bx, p) <= 1e-10 * bx.norm(), "E = {}", p.energy);
        let norm: f64 = p.vector.iter().map(|x| x * x).sum();
        assert!((norm - 1.0).abs() < 1e-12);
        assert!(p.vector[p.argmax()] > 0.0);
    }
    let window = eigensolve(&bx, Which::Window(-1.0, 1.0)).unwrap();
    let inside: Vec<f64> = pairs.iter().map(|p| p.energy).filter(|e| (-1.0..1.0).contains(e)).collect();
    assert_eq!(window.iter().map(|p| p.energy).collect::<Vec<_>>(), inside);
}

/// Negative pivots of `H - E`, counted from 256-bit leading minors
/// (Sylvester's law of inertia).
fn sturm_oracle(diag: &[f64], e: f64) -> usize {
    let prec = 256;
    let (mut prev, mut cur) = (Float::with_val(prec, 0), Float::with_val(prec, 1));
    let mut count = 0;
    for &d in diag {
        let next = Float::with_val(prec, Float::with_val(prec, d - e) * &cur) - &prev;
        if (next < 0) != (cur < 0) {
            count += 1;
        }
        prev = cur;
        cur = next;
    }
    count
}

#[test]
fn sturm_counts() {
    let bx = maryland_box(2.0, 0.3, -100, 100);
    let ev = bx.eigenvalues(Which::All);
    let mut r = rng(32);
    for _ in 0..50 {
        let e = r.gen_range(-10.0..10.0);
        let c = bx.count_below(e);
        assert_eq!(c, sturm_oracle(&bx.diag, e), "E = {e}");
        assert_eq!(c, ev.iter().filter(|&&x| x < e).count());
    }
}

#[test]
fn cauchy_interlacing() {
    let full = maryland_box(2.0, 0.3, 0, 300);
    for n in 1..=300usize {
        let small = full.sub_box(0, n as i64 - 1).unwrap().eigenvalues(Which::All);
        let big = full.sub_box(0, n as i64).unwrap().eigenvalues(Which::All);
        let tol = 1e-12 * full.norm();
        for i in 0..n {
            assert!(big[i] <= small[i] + tol && small[i] <= big[i + 1] + tol, "n = {n}, i = {i}");
        }
    }
}

#[test]
fn green_det_matches_direct() {
    let mut r = rng(33);
    let mut done = 0;
    while done < 100 {
        let len = r.gen_range(1..=500i64);
        let x1 = r.gen_range(-1000..1000);
        let bx = maryland_box(r.gen_range(0.5..4.0), r.gen(), x1, x1 + len - 1);
        let e = r.gen_range(-4.0..4.0);
        let x = r.gen_range(bx.x1..=bx.x2);
        let y = r.gen_range(bx.x1..=bx.x2);
        let Ok(col) = greens_direct(&bx, e, x) else { continue };
        let det = greens_det(&bx, e, x, y).unwrap().to_f64();
        let direct = col[(y - bx.x1) as usize];
        assert!(rel(det, direct) <= 1e-8, "G({x}, {y}) = {det} vs {direct}");
        done += 1;
    }
}

#[test]
fn green_boundary_columns_are_determinant_ratios() {
    let mut r = rng(34);
    let mut done = 0;
    while done < 100 {
        let params = ModelParams::from_frequency(r.gen_range(0.5..4.0), r.gen_range(-3.0..3.0), &golden(40), &theta(r.gen())).unwrap();
        let x1 = r.gen_range(-500..500i64);
        let x2 = x1 + r.gen_range(0..200i64);
        let bx = build_box(&params, x1, x2).unwrap();
        let e = params.energy;
        let y = r.gen_range(x1..=x2);
        let (Ok(c1), Ok(c2)) = (greens_direct(&bx, e, x1), greens_direct(&bx, e, x2)) else { continue };
        let whole = det_p_pair(&params, x1, (x2 - x1 + 1) as u64).unwrap().0;
        let right = det_p_pair(&params, y + 1, (x2 - y) as u64).unwrap().0;
        let left = det_p_pair(&params, x1, (y - x1) as u64).unwrap().0;
        let g1 = right.div(whole);
        let g2 = left.div(whole);
        let d1 = c1[(y - x1) as usize].abs().ln();
        let d2 = c2[(y - x1) as usize].abs().ln();
        assert!((g1.ln_abs - d1).abs() <= 1e-8, "G(x1, y)");
        assert!((g2.ln_abs - d2).abs() <= 1e-8, "G(x2, y)");
        done += 1;
    }
}

#[test]
fn one_site_green() {
    let bx = BoxOperator::from_diagonal(7, vec![1.25]);
    let g = greens_det(&bx, -0.5, 7, 7).unwrap().to_f64();
    assert!((g - 1.0 / 1.75).abs() < 1e-15);
    assert!(matches!(greens_det(&bx, 1.25, 7, 7), Err(Error::NearEigenvalue { .. })));
}

#[test]
fn green_strategies_agree() {
    let s = Strategies::default();
    let bx = maryland_box(2.0, 0.3, -40, 40);
    for (x, y) in [(-40, 3), (0, 0), (12, -7), (40, 40)] {
        let a = s.greens.get("det").unwrap().green(&bx, 0.37, x, y).unwrap();
        let b = s.greens.get("direct").unwrap().green(&bx, 0.37, x, y).unwrap();
        assert!(rel(a, b) <= 1e-8);
    }
}

fn lin(s: SignedLog) -> f64 {
    s.to_f64()
}

#[test]
fn extension_matches_transfer_matrices() {
    let mut r = rng(35);
    for _ in 0..20 {
        let params = ModelParams::from_frequency(2.0, r.gen_range(-3.0..3.0), &golden(40), &theta(r.gen())).unwrap();
        let (phi0, phim) = (r.gen_range(-1.0..1.0f64), r.gen_range(-1.0..1.0f64));
        let k = r.gen_range(1..=1000i64);
        let sol = extend_solution(&params, phi0, phim, -k - 1, k).unwrap();
        // forward: (phi(k), phi(k-1)) = A_k (phi(0), phi(-1))
        let a = product_a(&params, k).unwrap();
        let scale = a.log_scale;
        let want_k = (a.m[0][0] * phi0 + a.m[0][1] * phim, scale);
        let got_k = sol.at(k).unwrap();
        assert!((got_k.ln_abs - (want_k.0.abs().ln() + want_k.1)).abs() <= 1e-8, "k = {k}");
        assert_eq!(got_k.sign, want_k.0.signum());
        // backward: (phi(-k), phi(-k-1)) = A_{-k} (phi(0), phi(-1))
        let b = product_a(&params, -k).unwrap();
        let want = b.m[0][0] * phi0 + b.m[0][1] * phim;
        let got = sol.at(-k).unwrap();
        assert!((got.ln_abs - (want.abs().ln() + b.log_scale)).abs() <= 1e-8, "-k = {}", -k);
        // three-term equation at interior sites
        for j in (-k..k).step_by(7) {
            let v = params.potential(j).unwrap();
            let (l, c, rr) = (sol.at(j - 1).unwrap(), sol.at(j).unwrap(), sol.at(j + 1).unwrap());
            let m = l.ln_abs.max(c.ln_abs).max(rr.ln_abs) + (v - params.energy).abs().max(1.0).ln();
            let t = |s: SignedLog| s.sign * (s.ln_abs - m).exp();
            let res = t(rr) + t(l) + (v - params.energy) * t(c);
            assert!(res.abs() <= 1e-9, "j = {j}: {res:e}");
        }
    }
    let params = ModelParams::from_frequency(2.0, 0.4, &golden(40), &theta(0.3)).unwrap();
    let sol = extend_solution(&params, 1.0, 0.0, -1, 1).unwrap();
    assert!((lin(sol.at(1).unwrap()) - (0.4 - params.potential(0).unwrap())).abs() < 1e-14);
}

#[test]
fn green_expansion_of_eigenvectors() {
    let bx = maryland_box(2.0, 0.3, -200, 200);
    let pairs = eigensolve(&bx, Which::Window(-0.5, 0.5)).unwrap();
    assert!(!pairs.is_empty());
    let mut r = rng(36);
    let mut checked = 0;
    for pair in &pairs {
        let phi = Solution::from_eigenpair(&bx, pair);
        let centre = bx.x1 + pair.argmax() as i64;
        if !(-150..=150).contains(&centre) {
            continue;
        }
        // 1-site interval: the eigenvalue equation
        let res = green_identity_check(&bx, &phi, pair.energy, centre, centre, centre).unwrap();
        assert!(res <= 1e-12, "1-site: {res:e}");
        for _ in 0..5 {
            let x1 = centre - r.gen_range(1..40);
            let x2 = centre + r.gen_range(1..40);
            let Ok(res) = green_identity_check(&bx, &phi, pair.energy, x1, x2, centre) else { continue };
            assert!(res <= 1e-8, "[{x1}, {x2}]: {res:e}");
            let mut bad = phi.clone();
            let i = (centre - bx.x1) as usize;
            bad.values[i].ln_abs += (1e-3f64).ln_1p();
            let res = green_identity_check(&bx, &bad, pair.energy, x1, x2, centre).unwrap();
            assert!(res > 1e-4, "corrupted: {res:e}");
            checked += 1;
        }
    }
    assert!(checked >= 20, "{checked}");
}

#[test]
fn singular_sites_are_rejected() {
    let f = golden(40);
    let near_pole = TorusPoint::from_decimal("0.5", 256).unwrap().shift_by(f.value(), -5);
    let p = ModelParams::from_frequency(2.0, 0.0, &f, &near_pole).unwrap();
    assert!(matches!(build_box(&p, 0, 10), Err(Error::SingularSite { site: 5 })));
    let eps = TorusPoint::from_decimal("0.000000000000000000000000000001", 256).unwrap();
    let p = ModelParams::from_frequency(2.0, 0.0, &f, &near_pole.add(&eps)).unwrap();
    assert!(matches!(build_box(&p, 0, 10), Err(Error::SingularSite { site: 5 })));
    let f64bits = maryland::cf::Frequency::golden_mean(20, 64);
    let coarse = TorusPoint::from_decimal("0.5", 64).unwrap().shift_by(f64bits.value(), -5);
    let p = ModelParams::from_frequency(2.0, 0.0, &f64bits, &coarse).unwrap();
    assert!(matches!(build_box(&p, 0, 10), Err(Error::SingularSite { site: 5 })));
    // a huge but finite entry is admitted
    let far = TorusPoint::from_decimal("0.000000000001", 256).unwrap();
    let p = ModelParams::from_frequency(2.0, 0.0, &f, &near_pole.add(&far)).unwrap();
    let bx = build_box(&p, 0, 10).unwrap();
    assert!(bx.diag[5].abs() > 1e11);
}

#[test]
fn quarter_phase() {
    let f = golden(40);
    let p = ModelParams::from_frequency(2.0, 0.0, &f, &TorusPoint::from_decimal("0.25", 256).unwrap()).unwrap();
    let bx = build_box(&p, 0, 0).unwrap();
    assert!((bx.diag[0] - 2.0).abs() < 1e-15);
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 32, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn box_is_covariant(x1 in -5000i64..5000, len in 1i64..200, th in 0.0f64..1.0) {
        let p = ModelParams::from_frequency(2.0, 0.0, &golden(40), &theta(th)).unwrap();
        let a = build_box(&p, x1, x1 + len - 1).unwrap();
        let b = build_box(&p.shifted(x1), 0, len - 1).unwrap();
        for (u, v) in a.diag.iter().zip(&b.diag) {
            prop_assert!((u - v).abs() <= 1e-12 * u.abs().max(1.0));
        }
    }
}
