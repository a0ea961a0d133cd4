//! Quick invariant suite with closed-form or independent references.

use maryland::cf::Frequency;
use maryland::cocycle::{det_p, lyapunov_closed, lyapunov_empirical, lyapunov_tilde, product_a, ModelParams};
use maryland::indices::{theta_minimal, verify_minimal};
use maryland::interp::{g_poly_check, herman_average};
use maryland::operator::{build_box, eigensolve, greens_det, greens_direct, BoxOperator, Which};
use maryland::torus::TorusPoint;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rug::Integer;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::CliError;

#[derive(Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

type Check = fn(&ExperimentConfig) -> Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn golden() -> Frequency {
    Frequency::golden_mean(40, 256)
}

fn random_params(r: &mut ChaCha8Rng) -> ModelParams {
    let alpha = TorusPoint::from_f64(r.gen_range(0.05..0.95), 256);
    let th = TorusPoint::from_f64(r.gen(), 256);
    ModelParams::new(r.gen_range(0.5..4.0), r.gen_range(-3.0..3.0), &alpha, &th).expect("valid parameters")
}

fn convergents(_: &ExperimentConfig) -> Result<String, String> {
    let f = golden();
    for k in 1..f.depth() as isize - 1 {
        let (p0, q0) = (f.p(k - 1).unwrap(), f.q(k - 1).unwrap());
        let (p1, q1) = (f.p(k).unwrap(), f.q(k).unwrap());
        let a = f.a(k as usize + 1).unwrap();
        ensure(*f.q(k + 1).unwrap() == Integer::from(a * q1) + q0, || format!("recurrence at {k}"))?;
        let cross = Integer::from(p1 * q0) - Integer::from(p0 * q1);
        ensure(cross.abs() == 1, || format!("p_k q_(k-1) - p_(k-1) q_k at {k}"))?;
    }
    Ok(format!("{} golden convergents", f.depth()))
}

fn lyapunov(cfg: &ExperimentConfig) -> Result<String, String> {
    ensure((lyapunov_closed(2.0, 0.0) - 0.881374).abs() < 1e-6, || "L(2, 0)".into())?;
    ensure((lyapunov_closed(2.0, 2.0) - 1.061275).abs() < 1e-6, || "L(2, 2)".into())?;
    let est = lyapunov_empirical(2.0, 0.0, golden().value(), 20_000, 16, cfg.seed).map_err(|e| e.to_string())?;
    let err = (est.l_hat - lyapunov_closed(2.0, 0.0)).abs();
    ensure(err <= 0.02, || format!("empirical {} vs closed form", est.l_hat))?;
    Ok(format!("|L_hat - L| = {err:.1e}"))
}

fn determinants(cfg: &ExperimentConfig) -> Result<String, String> {
    let mut r = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let p = random_params(&mut r);
        let k = r.gen_range(1..=1000u64);
        let a = product_a(&p, k as i64).map_err(|e| e.to_string())?.entry(0, 0);
        worst = worst.max(a.rel_diff(det_p(&p, k).map_err(|e| e.to_string())?));
    }
    ensure(worst <= 1e-8, || format!("relative difference {worst:e}"))?;
    Ok(format!("recurrence vs transfer product {worst:.1e}"))
}

fn greens(cfg: &ExperimentConfig) -> Result<String, String> {
    let mut r = ChaCha8Rng::seed_from_u64(cfg.seed);
    let f = golden();
    let mut worst = 0.0f64;
    let mut done = 0;
    while done < 30 {
        let params = ModelParams::from_frequency(r.gen_range(0.5..4.0), 0.0, &f, &TorusPoint::from_f64(r.gen(), 256))
            .map_err(|e| e.to_string())?;
        let x1 = r.gen_range(-500..500);
        let Ok(bx) = build_box(&params, x1, x1 + r.gen_range(0..200)) else { continue };
        let e = r.gen_range(-4.0..4.0);
        let (x, y) = (r.gen_range(bx.x1..=bx.x2), r.gen_range(bx.x1..=bx.x2));
        let Ok(col) = greens_direct(&bx, e, x) else { continue };
        let det = greens_det(&bx, e, x, y).map_err(|e| e.to_string())?.to_f64();
        let direct = col[(y - bx.x1) as usize];
        worst = worst.max((det - direct).abs() / direct.abs());
        done += 1;
    }
    ensure(worst <= 1e-8, || format!("relative difference {worst:e}"))?;
    Ok(format!("determinant ratio vs solve {worst:.1e}"))
}

fn eigensolver(_: &ExperimentConfig) -> Result<String, String> {
    let n = 200;
    let bx = BoxOperator::from_diagonal(0, vec![0.0; n]);
    let mut worst = 0.0f64;
    for (i, e) in bx.eigenvalues(Which::All).iter().enumerate() {
        let exact = 2.0 * (std::f64::consts::PI * (n - i) as f64 / (n as f64 + 1.0)).cos();
        worst = worst.max((e - exact).abs());
    }
    ensure(worst <= 1e-10, || format!("free spectrum {worst:e}"))?;
    let params = ModelParams::from_frequency(2.0, 0.0, &golden(), &TorusPoint::from_f64(0.3, 256)).map_err(|e| e.to_string())?;
    let bx = build_box(&params, -100, 100).map_err(|e| e.to_string())?;
    let mut res = 0.0f64;
    for p in eigensolve(&bx, Which::All).map_err(|e| e.to_string())? {
        let r = bx.apply_shifted(&p.vector, p.energy);
        res = res.max(r.iter().map(|x| x * x).sum::<f64>().sqrt() / bx.norm());
    }
    ensure(res <= 1e-10, || format!("residual {res:e}"))?;
    Ok(format!("free spectrum {worst:.1e}, residual / |H| {res:.1e}"))
}

fn herman(_: &ExperimentConfig) -> Result<String, String> {
    let f = golden();
    let params = ModelParams::from_frequency(2.0, 1.0, &f, &TorusPoint::from_f64(0.0, 256)).map_err(|e| e.to_string())?;
    let h1 = herman_average(&params, 1, 10_000).map_err(|e| e.to_string())?;
    let exact = 5f64.sqrt().ln() - 2f64.ln();
    ensure((h1.mean - exact).abs() <= 1e-4, || format!("k = 1: {} vs {exact}", h1.mean))?;
    let h = herman_average(&params, 50, 10_000).map_err(|e| e.to_string())?;
    let lt = lyapunov_tilde(2.0, 1.0);
    ensure(h.mean >= lt - 0.01, || format!("k = 50: {} vs {lt}", h.mean))?;
    Ok(format!("k = 1 error {:.1e}, k = 50 margin {:.4}", (h1.mean - exact).abs(), h.mean - lt))
}

fn polynomial(_: &ExperimentConfig) -> Result<String, String> {
    let params = ModelParams::from_frequency(2.0, 0.5, &golden(), &TorusPoint::from_f64(0.27, 256)).map_err(|e| e.to_string())?;
    let g = g_poly_check(&params, 20, 20, 256).map_err(|e| e.to_string())?;
    ensure(g <= 1e-20, || format!("residual {g:e}"))?;
    Ok(format!("degree 20 residual {g:.1e}"))
}

fn minimal_sites(cfg: &ExperimentConfig) -> Result<String, String> {
    let f = golden();
    let th = cfg.phase().map_err(|e| e.to_string())?;
    let mut count = 0;
    for n in 7..20 {
        let Ok(s) = theta_minimal(&f, &th, n) else { continue };
        ensure(verify_minimal(&f, &th, n, s.m, s.ell).passed(), || format!("scale {n}"))?;
        count += 1;
    }
    ensure(count > 0, || "no scale could be checked".into())?;
    Ok(format!("{count} golden scales certified"))
}

const CHECKS: [(&str, Check); 8] = [
    ("convergents", convergents),
    ("lyapunov", lyapunov),
    ("determinants", determinants),
    ("greens", greens),
    ("eigensolver", eigensolver),
    ("herman", herman),
    ("polynomial", polynomial),
    ("minimal_sites", minimal_sites),
];

pub fn run(cfg: &ExperimentConfig) -> Result<Vec<CheckResult>, CliError> {
    Ok(CHECKS
        .iter()
        .map(|(name, check)| match check(cfg) {
            Ok(detail) => CheckResult { name, pass: true, detail },
            Err(detail) => CheckResult { name, pass: false, detail },
        })
        .collect())
}
