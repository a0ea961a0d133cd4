use maryland::cf::{beta_n, Frequency};
use maryland::cocycle::{lyapunov_closed, lyapunov_tilde, ModelParams};
use maryland::indices::profile;
use maryland::interp::{herman_average_with, resonant_nodes_any, uniformity_gamma};
use maryland::operator::{build_box, eigensolve, BoxOperator, Which};
use maryland::strategy::{LyapunovOptions, Strategies};
use maryland::verify::{check_eigenpair, scales_within, DecayReport};
use rayon::prelude::*;
use serde::Serialize;

use crate::artifact::Writer;
use crate::config::ExperimentConfig;
use crate::error::CliError;

/// Smallest `q_n` the scale-dependent checks accept.
const MIN_SCALE_Q: u64 = 20;

pub struct Outcome {
    pub summary: String,
    /// Set when a checked property fails; the run still writes its files.
    pub failure: Option<String>,
}

impl Outcome {
    fn ok(summary: String) -> Self {
        Outcome { summary, failure: None }
    }
}

fn model(cfg: &ExperimentConfig, f: &Frequency, energy: f64) -> Result<ModelParams, CliError> {
    Ok(ModelParams::from_frequency(cfg.lambda, energy, f, &cfg.phase()?)?)
}

fn which(cfg: &ExperimentConfig) -> Which {
    match cfg.window {
        Some([lo, hi]) => Which::Window(lo, hi),
        None => Which::All,
    }
}

fn box_operator(cfg: &ExperimentConfig, f: &Frequency) -> Result<BoxOperator, CliError> {
    let [x1, x2] = cfg.box_sites;
    Ok(build_box(&model(cfg, f, 0.0)?, x1, x2)?)
}

/// Configured scales, or every scale with `q_n >= 20` whose window fits in
/// `reach` sites.
fn scales_for(cfg: &ExperimentConfig, f: &Frequency, reach: i64) -> Vec<usize> {
    if !cfg.scales.is_empty() {
        return cfg.scales.clone();
    }
    scales_within(f, reach)
        .into_iter()
        .filter(|&n| f.q_u64(n).is_ok_and(|q| q >= MIN_SCALE_Q))
        .collect()
}

#[derive(Serialize)]
struct CfRow {
    n: usize,
    a_n: String,
    p_n: String,
    q_n: String,
    gap: f64,
    beta_n: Option<f64>,
}

pub fn cf(cfg: &ExperimentConfig, out: &mut Writer) -> Result<Outcome, CliError> {
    let f = cfg.frequency()?;
    let mut rows = Vec::new();
    for n in 0..f.depth() {
        rows.push(CfRow {
            n,
            a_n: if n == 0 { "0".into() } else { f.a(n)?.to_string() },
            p_n: f.p(n as isize)?.to_string(),
            q_n: f.q(n as isize)?.to_string(),
            gap: f.gap(n, 64)?.to_f64(),
            beta_n: beta_n(&f, n).ok(),
        });
    }
    out.csv("cf.csv", &rows)?;
    Ok(Outcome::ok(format!("{} convergents", rows.len())))
}

#[derive(Serialize)]
struct IndexRow {
    n: usize,
    q_n: String,
    q_next: String,
    beta_n: f64,
    delta_n: f64,
    delta_n_prime: f64,
    delta: f64,
    m_n: String,
    ell_n: String,
    kind: String,
}

pub fn indices(cfg: &ExperimentConfig, out: &mut Writer) -> Result<Outcome, CliError> {
    let f = cfg.frequency()?;
    let th = cfg.phase()?;
    let strategies = Strategies::default();
    let estimator = strategies.delta.get(&cfg.strategies.delta_estimator)?;
    let scales: Vec<usize> = if cfg.scales.is_empty() { (1..f.depth().saturating_sub(2)).collect() } else { cfg.scales.clone() };
    let mut rows = Vec::new();
    let mut profiles = Vec::new();
    for n in scales {
        // scales whose phase is numerically singular are skipped
        let Ok(p) = profile(&f, &th, n, None) else { continue };
        rows.push(IndexRow {
            n,
            q_n: p.q_n.clone(),
            q_next: p.q_next.clone(),
            beta_n: p.beta_n,
            delta_n: p.delta_n,
            delta_n_prime: p.delta_n_prime,
            delta: estimator.delta(&f, &th, n)?,
            m_n: p.m_n.to_string(),
            ell_n: p.ell_n.to_string(),
            kind: format!("{:?}", p.minimal_kind),
        });
        profiles.push(p);
    }
    out.csv("indices.csv", &rows)?;
    out.json("indices.json", &profiles)?;
    Ok(Outcome::ok(format!("{} scales", rows.len())))
}

#[derive(Serialize)]
struct LyapunovRow {
    lambda: f64,
    energy: f64,
    method: String,
    value: f64,
    stderr: Option<f64>,
    closed_form: f64,
    iterations: u64,
    samples: usize,
}

pub fn lyapunov(cfg: &ExperimentConfig, out: &mut Writer) -> Result<Outcome, CliError> {
    let f = cfg.frequency()?;
    let strategies = Strategies::default();
    let method = strategies.lyapunov.get(&cfg.strategies.lyapunov_method)?;
    let opts = LyapunovOptions { k: cfg.iterations, samples: cfg.samples, seed: cfg.seed };
    let mut rows = Vec::new();
    for &e in &cfg.energies {
        let v = method.lyapunov(cfg.lambda, e, f.value(), &opts)?;
        rows.push(LyapunovRow {
            lambda: cfg.lambda,
            energy: e,
            method: cfg.strategies.lyapunov_method.clone(),
            value: v.value,
            stderr: v.stderr,
            closed_form: lyapunov_closed(cfg.lambda, e),
            iterations: cfg.iterations,
            samples: cfg.samples,
        });
    }
    out.csv("lyapunov.csv", &rows)?;
    Ok(Outcome::ok(format!("{} energies", rows.len())))
}

#[derive(Serialize)]
struct SpectrumRow {
    index: usize,
    energy: f64,
}

pub fn spectrum(cfg: &ExperimentConfig, out: &mut Writer) -> Result<Outcome, CliError> {
    let f = cfg.frequency()?;
    let bx = box_operator(cfg, &f)?;
    let w = which(cfg);
    let first = bx.index_range(w).start;
    let rows: Vec<SpectrumRow> = bx
        .eigenvalues(w)
        .into_iter()
        .enumerate()
        .map(|(i, energy)| SpectrumRow { index: first + i, energy })
        .collect();
    out.csv("spectrum.csv", &rows)?;
    Ok(Outcome::ok(format!("{} eigenvalues", rows.len())))
}

#[derive(Serialize)]
struct EigfunRow {
    pair: usize,
    energy: f64,
    site: i64,
    ln_abs: f64,
    sign: f64,
}

pub fn eigfun(cfg: &ExperimentConfig, out: &mut Writer) -> Result<Outcome, CliError> {
    let f = cfg.frequency()?;
    let bx = box_operator(cfg, &f)?;
    let pairs = eigensolve(&bx, which(cfg))?;
    let mut rows = Vec::new();
    for (i, p) in pairs.iter().enumerate() {
        for (j, &l) in p.ln_abs.iter().enumerate() {
            rows.push(EigfunRow { pair: i, energy: p.energy, site: bx.x1 + j as i64, ln_abs: l, sign: p.sign(j) });
        }
    }
    out.csv("eigfun.csv", &rows)?;
    Ok(Outcome::ok(format!("{} eigenpairs on {} sites", pairs.len(), bx.len())))
}

#[derive(Serialize)]
struct UniformityRow {
    n: usize,
    q_n: u64,
    ell: i64,
    nodes: usize,
    gamma_hat: f64,
    bound: f64,
    argmax_theta: f64,
}

pub fn uniformity(cfg: &ExperimentConfig, out: &mut Writer) -> Result<Outcome, CliError> {
    let f = cfg.frequency()?;
    let th = cfg.phase()?;
    let scales: Vec<usize> = if cfg.scales.is_empty() {
        (1..f.depth() - 1)
            .filter(|&n| f.q_u64(n).is_ok_and(|q| (MIN_SCALE_Q..=100).contains(&q)))
            .collect()
    } else {
        cfg.scales.clone()
    };
    let mut rows = Vec::new();
    for n in scales {
        let q = f.q_u64(n)?;
        let q_next = f.q_u64(n + 1)? as f64;
        for &ell in &cfg.ells {
            let nodes = resonant_nodes_any(&f, &th, n, ell)?;
            let u = uniformity_gamma(&nodes, 20 * nodes.len())?;
            rows.push(UniformityRow {
                n,
                q_n: q,
                ell,
                nodes: nodes.len(),
                gamma_hat: u.gamma_hat,
                bound: (q_next / ell.unsigned_abs() as f64).ln() / (2.0 * q as f64 - 1.0),
                argmax_theta: u.argmax_theta,
            });
        }
    }
    out.csv("uniformity.csv", &rows)?;
    Ok(Outcome::ok(format!("{} node sets", rows.len())))
}

#[derive(Serialize)]
struct HermanRow {
    lambda: f64,
    energy: f64,
    k: u64,
    rule: String,
    quad_points: usize,
    mean: f64,
    lower_bound: f64,
    offset: f64,
}

pub fn herman(cfg: &ExperimentConfig, out: &mut Writer) -> Result<Outcome, CliError> {
    let f = cfg.frequency()?;
    let strategies = Strategies::default();
    let rule = strategies.quadrature.get(&cfg.strategies.quadrature)?;
    let mut rows = Vec::new();
    for &e in &cfg.energies {
        let params = model(cfg, &f, e)?;
        for &k in &cfg.herman_k {
            let h = herman_average_with(&params, k, cfg.quad_points, rule)?;
            rows.push(HermanRow {
                lambda: cfg.lambda,
                energy: e,
                k,
                rule: cfg.strategies.quadrature.clone(),
                quad_points: cfg.quad_points,
                mean: h.mean,
                lower_bound: lyapunov_tilde(cfg.lambda, e),
                offset: h.offset,
            });
        }
    }
    out.csv("herman.csv", &rows)?;
    Ok(Outcome::ok(format!("{} averages", rows.len())))
}

#[derive(Serialize)]
struct DecayRow {
    energy: f64,
    center: i64,
    lyapunov: f64,
    in_regime: bool,
    envelope_pass: bool,
    fitted_rate: f64,
    violations: usize,
    first_passing_scale: Option<usize>,
    shnol_c0: f64,
}

pub fn verify_decay(cfg: &ExperimentConfig, out: &mut Writer) -> Result<Outcome, CliError> {
    let f = cfg.frequency()?;
    let th = cfg.phase()?;
    let bx = box_operator(cfg, &f)?;
    let pairs = eigensolve(&bx, which(cfg))?;
    let strategies = Strategies::default();
    let mut opts = strategies.envelope.get(&cfg.strategies.envelope)?.options(cfg.eps);
    opts.trim = cfg.trim;
    let reach = bx.x1.abs().max(bx.x2.abs());
    let scales = scales_for(cfg, &f, reach);
    let reports: Vec<DecayReport> = pairs
        .par_iter()
        .map(|p| check_eigenpair(&bx, p, cfg.lambda, &f, &th, &opts, &scales))
        .collect::<Result<_, _>>()?;
    let rows: Vec<DecayRow> = reports
        .iter()
        .map(|r| DecayRow {
            energy: r.energy,
            center: r.center,
            lyapunov: r.lyapunov,
            in_regime: r.in_regime,
            envelope_pass: r.envelope_pass,
            fitted_rate: r.fitted_rate,
            violations: r.violations.len(),
            first_passing_scale: r.first_passing_scale,
            shnol_c0: r.shnol_c0,
        })
        .collect();
    out.csv("verify_decay.csv", &rows)?;
    out.json("verify_decay.json", &reports)?;
    let in_regime = reports.iter().filter(|r| r.in_regime).count();
    let failed = reports.iter().filter(|r| r.in_regime && !r.envelope_pass).count();
    let summary = format!("{in_regime} of {} eigenpairs in regime, {failed} fail the envelope", reports.len());
    let failure = (failed > 0).then(|| format!("{failed} in-regime eigenpairs violate the envelope"));
    Ok(Outcome { summary, failure })
}
