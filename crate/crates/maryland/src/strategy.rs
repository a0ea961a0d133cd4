//! Interchangeable numerical methods, registered by name.
//!
//! Each family is a trait; a [`Registry`] holds boxed implementations and
//! hands them out by name so a front end can pick one at run time.

use rayon::prelude::*;

use crate::cf::Frequency;
use crate::cocycle::{lyapunov_closed, lyapunov_empirical};
use crate::error::{Error, Result};
use crate::indices::{delta_alternate, delta_n};
use crate::operator::{greens_det, greens_direct, BoxOperator};
use crate::torus::TorusPoint;
use crate::verify::EnvelopeOptions;

pub trait Named {
    fn name(&self) -> &'static str;
}

/// Named implementations of one method family.
pub struct Registry<T: ?Sized + Named> {
    kind: &'static str,
    entries: Vec<Box<T>>,
}

impl<T: ?Sized + Named> Registry<T> {
    pub fn new(kind: &'static str) -> Self {
        Registry { kind, entries: Vec::new() }
    }

    pub fn register(&mut self, entry: Box<T>) -> &mut Self {
        self.entries.retain(|e| e.name() != entry.name());
        self.entries.push(entry);
        self
    }

    pub fn get(&self, name: &str) -> Result<&T> {
        self.entries
            .iter()
            .find(|e| e.name() == name)
            .map(|e| e.as_ref())
            .ok_or_else(|| {
                Error::invalid(self.kind, format!("unknown method '{name}' (known: {})", self.names().join(", ")))
            })
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.iter().map(|e| e.name()).collect()
    }

    /// First registered entry.
    pub fn default_entry(&self) -> &T {
        self.entries[0].as_ref()
    }
}

// Green's function

pub trait GreensMethod: Named + Send + Sync {
    /// `G(x, y) = <e_x, (H_box - E)^{-1} e_y>`.
    fn green(&self, bx: &BoxOperator, energy: f64, x: i64, y: i64) -> Result<f64>;
}

pub struct DeterminantRatio;

impl Named for DeterminantRatio {
    fn name(&self) -> &'static str {
        "det"
    }
}

impl GreensMethod for DeterminantRatio {
    fn green(&self, bx: &BoxOperator, energy: f64, x: i64, y: i64) -> Result<f64> {
        Ok(greens_det(bx, energy, x, y)?.to_f64())
    }
}

pub struct DirectSolve;

impl Named for DirectSolve {
    fn name(&self) -> &'static str {
        "direct"
    }
}

impl GreensMethod for DirectSolve {
    fn green(&self, bx: &BoxOperator, energy: f64, x: i64, y: i64) -> Result<f64> {
        if !bx.contains(y) {
            return Err(Error::invalid("site", "outside the box"));
        }
        let col = greens_direct(bx, energy, x)?;
        Ok(col[(y - bx.x1) as usize])
    }
}

// Lyapunov exponent

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LyapunovOptions {
    pub k: u64,
    pub samples: usize,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LyapunovValue {
    pub value: f64,
    pub stderr: Option<f64>,
}

pub trait LyapunovMethod: Named + Send + Sync {
    fn lyapunov(&self, lambda: f64, energy: f64, alpha: &TorusPoint, opts: &LyapunovOptions) -> Result<LyapunovValue>;
}

pub struct ClosedForm;

impl Named for ClosedForm {
    fn name(&self) -> &'static str {
        "closed"
    }
}

impl LyapunovMethod for ClosedForm {
    fn lyapunov(&self, lambda: f64, energy: f64, _: &TorusPoint, _: &LyapunovOptions) -> Result<LyapunovValue> {
        if !(lambda > 0.0) {
            return Err(Error::invalid("lambda", "must be positive"));
        }
        Ok(LyapunovValue { value: lyapunov_closed(lambda, energy), stderr: None })
    }
}

pub struct Empirical;

impl Named for Empirical {
    fn name(&self) -> &'static str {
        "empirical"
    }
}

impl LyapunovMethod for Empirical {
    fn lyapunov(&self, lambda: f64, energy: f64, alpha: &TorusPoint, opts: &LyapunovOptions) -> Result<LyapunovValue> {
        let est = lyapunov_empirical(lambda, energy, alpha, opts.k, opts.samples, opts.seed)?;
        Ok(LyapunovValue { value: est.l_hat, stderr: Some(est.stderr) })
    }
}

// delta estimators

pub trait DeltaEstimator: Named + Send + Sync {
    fn delta(&self, f: &Frequency, theta: &TorusPoint, n: usize) -> Result<f64>;
}

/// `delta_n` from `||q_n(theta - 1/2)||`.
pub struct DeltaN;

impl Named for DeltaN {
    fn name(&self) -> &'static str {
        "delta-n"
    }
}

impl DeltaEstimator for DeltaN {
    fn delta(&self, f: &Frequency, theta: &TorusPoint, n: usize) -> Result<f64> {
        Ok(delta_n(f, theta, n)?.to_f64())
    }
}

/// `delta'_n` from the cosine at the minimal site.
pub struct DeltaPrime;

impl Named for DeltaPrime {
    fn name(&self) -> &'static str {
        "delta-prime"
    }
}

impl DeltaEstimator for DeltaPrime {
    fn delta(&self, f: &Frequency, theta: &TorusPoint, n: usize) -> Result<f64> {
        delta_alternate(f, theta, n)
    }
}

// quadrature on the circle

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadratureResult {
    pub mean: f64,
    /// Lattice offset used, if the rule has one.
    pub offset: f64,
}

pub trait QuadratureRule: Named + Send + Sync {
    /// Mean of `g` over `n` points of `[0, 1)`.
    fn mean(&self, n: usize, g: &(dyn Fn(f64) -> f64 + Sync)) -> QuadratureResult;
}

fn lattice_values(n: usize, u: f64, g: &(dyn Fn(f64) -> f64 + Sync)) -> Vec<f64> {
    (0..n).into_par_iter().map(|i| g((i as f64 + u) / n as f64)).collect()
}

/// `(i + 1/2) / N`.
pub struct MidpointLattice;

impl Named for MidpointLattice {
    fn name(&self) -> &'static str {
        "midpoint"
    }
}

impl QuadratureRule for MidpointLattice {
    fn mean(&self, n: usize, g: &(dyn Fn(f64) -> f64 + Sync)) -> QuadratureResult {
        QuadratureResult { mean: crate::cocycle::mean(&lattice_values(n, 0.5, g)), offset: 0.5 }
    }
}

/// `(i + u) / N` with `u` chosen among `offsets` candidates to maximize the
/// smallest sampled value, which keeps the lattice off logarithmic poles.
pub struct AvoidingLattice {
    pub offsets: usize,
}

impl Named for AvoidingLattice {
    fn name(&self) -> &'static str {
        "avoiding"
    }
}

impl QuadratureRule for AvoidingLattice {
    fn mean(&self, n: usize, g: &(dyn Fn(f64) -> f64 + Sync)) -> QuadratureResult {
        let mut best: Option<(f64, f64, Vec<f64>)> = None;
        for r in 0..self.offsets.max(1) {
            let u = (r as f64 + 0.5) / self.offsets.max(1) as f64;
            let vals = lattice_values(n, u, g);
            let worst = vals.iter().cloned().fold(f64::INFINITY, f64::min);
            if best.as_ref().is_none_or(|b| worst > b.1) {
                best = Some((u, worst, vals));
            }
        }
        let (u, _, vals) = best.expect("at least one offset");
        QuadratureResult { mean: crate::cocycle::mean(&vals), offset: u }
    }
}

/// Kronecker sequence `frac((i + 1/2) / phi)`.
pub struct GoldenKronecker;

impl Named for GoldenKronecker {
    fn name(&self) -> &'static str {
        "kronecker"
    }
}

impl QuadratureRule for GoldenKronecker {
    fn mean(&self, n: usize, g: &(dyn Fn(f64) -> f64 + Sync)) -> QuadratureResult {
        let step = (5f64.sqrt() - 1.0) / 2.0;
        let vals: Vec<f64> = (0..n)
            .into_par_iter()
            .map(|i| g(((i as f64 + 0.5) * step).fract()))
            .collect();
        QuadratureResult { mean: crate::cocycle::mean(&vals), offset: 0.0 }
    }
}

// envelope constant

pub trait EnvelopeMode: Named + Send + Sync {
    fn c_factor(&self) -> f64;

    fn options(&self, eps: f64) -> EnvelopeOptions {
        EnvelopeOptions::new(eps, self.c_factor())
    }
}

/// `L - delta_n - 650 eps`.
pub struct LiteralEnvelope;

impl Named for LiteralEnvelope {
    fn name(&self) -> &'static str {
        "literal"
    }
}

impl EnvelopeMode for LiteralEnvelope {
    fn c_factor(&self) -> f64 {
        650.0
    }
}

/// `L - delta_n - eps`.
pub struct TightEnvelope;

impl Named for TightEnvelope {
    fn name(&self) -> &'static str {
        "tight"
    }
}

impl EnvelopeMode for TightEnvelope {
    fn c_factor(&self) -> f64 {
        1.0
    }
}

/// All method families with the built-in implementations. The first entry
/// of each registry is its default.
pub struct Strategies {
    pub greens: Registry<dyn GreensMethod>,
    pub lyapunov: Registry<dyn LyapunovMethod>,
    pub delta: Registry<dyn DeltaEstimator>,
    pub quadrature: Registry<dyn QuadratureRule>,
    pub envelope: Registry<dyn EnvelopeMode>,
}

impl Default for Strategies {
    fn default() -> Self {
        let mut greens: Registry<dyn GreensMethod> = Registry::new("greens");
        greens.register(Box::new(DeterminantRatio)).register(Box::new(DirectSolve));
        let mut lyapunov: Registry<dyn LyapunovMethod> = Registry::new("lyapunov_method");
        lyapunov.register(Box::new(ClosedForm)).register(Box::new(Empirical));
        let mut delta: Registry<dyn DeltaEstimator> = Registry::new("delta_estimator");
        delta.register(Box::new(DeltaN)).register(Box::new(DeltaPrime));
        let mut quadrature: Registry<dyn QuadratureRule> = Registry::new("quadrature");
        quadrature
            .register(Box::new(AvoidingLattice { offsets: 8 }))
            .register(Box::new(MidpointLattice))
            .register(Box::new(GoldenKronecker));
        let mut envelope: Registry<dyn EnvelopeMode> = Registry::new("envelope");
        envelope.register(Box::new(LiteralEnvelope)).register(Box::new(TightEnvelope));
        Strategies { greens, lyapunov, delta, quadrature, envelope }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lookup_by_name() {
        let s = Strategies::default();
        assert_eq!(s.greens.get("direct").unwrap().name(), "direct");
        assert_eq!(s.envelope.get("tight").unwrap().c_factor(), 1.0);
        assert_eq!(s.envelope.default_entry().c_factor(), 650.0);
        assert_eq!(s.quadrature.names(), vec!["avoiding", "midpoint", "kronecker"]);
        match s.delta.get("nope") {
            Err(Error::InvalidInput { field, .. }) => assert_eq!(field, "delta_estimator"),
            _ => panic!("expected InvalidInput"),
        }
    }

    #[test]
    fn re_registering_replaces() {
        let mut r: Registry<dyn QuadratureRule> = Registry::new("quadrature");
        r.register(Box::new(AvoidingLattice { offsets: 2 }));
        r.register(Box::new(AvoidingLattice { offsets: 4 }));
        assert_eq!(r.names().len(), 1);
    }

    #[test]
    fn quadrature_rules_agree_on_smooth_integrand() {
        let s = Strategies::default();
        let g = |t: f64| (2.0 * std::f64::consts::PI * t).cos().powi(2);
        for name in s.quadrature.names() {
            let m = s.quadrature.get(name).unwrap().mean(4096, &g).mean;
            assert!((m - 0.5).abs() < 1e-3, "{name}: {m}");
        }
    }
}
