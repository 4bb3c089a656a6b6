//! BSDE generators f(s, z), their ratio g = f/z, assumption checks and the
//! integrability constants of the Lipschitz construction.

use crate::error::{Error, Result};
use crate::paths::TimeGrid;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::fmt;
use std::sync::Arc;

pub type TimeFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
pub type GeneratorFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Generator specification. All variants satisfy |f(s,z)| <= c(1+z^2) for the
/// stored quadratic-growth constant, and g(s,0) = 0 by convention.
#[derive(Clone)]
pub enum GeneratorSpec {
    /// f(s, z) = alpha z^2.
    Quadratic { alpha: f64 },
    /// f(s, z) = b_s z with |b_s| <= bound.
    LinearBounded { coeff: TimeFn, bound: f64 },
    /// User-supplied Lipschitz generator with |f(s,z) - f(s,z')| <= phi(s)|z - z'|.
    LipschitzCustom { f: GeneratorFn, phi_bound: TimeFn },
}

impl fmt::Debug for GeneratorSpec {
    fn fmt(&self, fm: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GeneratorSpec::Quadratic { alpha } => write!(fm, "Quadratic {{ alpha: {alpha} }}"),
            GeneratorSpec::LinearBounded { bound, .. } => {
                write!(fm, "LinearBounded {{ bound: {bound} }}")
            }
            GeneratorSpec::LipschitzCustom { .. } => write!(fm, "LipschitzCustom"),
        }
    }
}

impl GeneratorSpec {
    pub fn quadratic(alpha: f64) -> Self {
        GeneratorSpec::Quadratic { alpha }
    }

    pub fn linear_const(b: f64) -> Self {
        GeneratorSpec::LinearBounded {
            coeff: Arc::new(move |_| b),
            bound: b.abs(),
        }
    }

    /// Generator value f(t, z).
    pub fn eval_f(&self, t: f64, z: f64) -> f64 {
        match self {
            GeneratorSpec::Quadratic { alpha } => alpha * z * z,
            GeneratorSpec::LinearBounded { coeff, .. } => coeff(t) * z,
            GeneratorSpec::LipschitzCustom { f, .. } => f(t, z),
        }
    }

    /// Ratio g(t, z) = f(t, z)/z, set to 0 at z = 0.
    pub fn eval_g(&self, t: f64, z: f64) -> f64 {
        if z == 0.0 {
            return 0.0;
        }
        match self {
            GeneratorSpec::Quadratic { alpha } => alpha * z,
            GeneratorSpec::LinearBounded { coeff, .. } => coeff(t),
            GeneratorSpec::LipschitzCustom { f, .. } => f(t, z) / z,
        }
    }

    /// Lipschitz bound phi(t) on z -> f(t, z), when the variant carries one.
    pub fn phi_bound(&self, t: f64) -> Option<f64> {
        match self {
            GeneratorSpec::Quadratic { .. } => None,
            GeneratorSpec::LinearBounded { coeff, .. } => Some(coeff(t).abs()),
            GeneratorSpec::LipschitzCustom { phi_bound, .. } => Some(phi_bound(t)),
        }
    }
}

/// Free-function forms of the two evaluations.
pub fn eval_f(spec: &GeneratorSpec, t: f64, z: f64) -> f64 {
    spec.eval_f(t, z)
}

pub fn eval_g(spec: &GeneratorSpec, t: f64, z: f64) -> f64 {
    spec.eval_g(t, z)
}

/// A single violation found while sampling an assumption.
#[derive(Debug, Clone, Serialize)]
pub struct Violation {
    pub t: f64,
    pub z: f64,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct H1Report {
    pub ok: bool,
    pub violations: Vec<Violation>,
    pub samples: usize,
}

/// Samples the quadratic-growth bound |f| <= c(1+z^2) and scans g for jumps
/// in z. A sampler, not a prover: "ok" means no violation found on budget.
pub fn check_h1(spec: &GeneratorSpec, c: f64, horizon: f64, sample_budget: usize) -> H1Report {
    let mut violations = Vec::new();
    let mut samples = 0;
    let mut rng = ChaCha8Rng::seed_from_u64(0x41_5348);
    let lattice: Vec<f64> = (-40..=40).map(|i| i as f64 * 0.25).collect();
    let probe = |t: f64, z: f64, violations: &mut Vec<Violation>| {
        let fv = spec.eval_f(t, z);
        if fv.abs() > c * (1.0 + z * z) + 1e-12 {
            violations.push(Violation {
                t,
                z,
                detail: format!("|f| = {} exceeds c(1+z^2) = {}", fv.abs(), c * (1.0 + z * z)),
            });
        }
        // jump detector: finite differences of g at shrinking offsets
        let h1 = 1e-4;
        let h2 = 1e-6;
        let d1 = (spec.eval_g(t, z + h1) - spec.eval_g(t, z)).abs();
        let d2 = (spec.eval_g(t, z + h2) - spec.eval_g(t, z)).abs();
        if d2 > 0.1 && d2 > 0.5 * d1 {
            violations.push(Violation {
                t,
                z,
                detail: format!("g jump suspected: |dg| = {d2} at offset {h2}"),
            });
        }
    };
    'outer: for k in 0..=8 {
        let t = horizon * k as f64 / 8.0;
        for &z in &lattice {
            probe(t, z, &mut violations);
            samples += 1;
            if samples >= sample_budget {
                break 'outer;
            }
        }
    }
    while samples < sample_budget {
        let t = rng.gen::<f64>() * horizon;
        let z = (rng.gen::<f64>() - 0.5) * 40.0;
        probe(t, z, &mut violations);
        samples += 1;
    }
    H1Report {
        ok: violations.is_empty(),
        violations,
        samples,
    }
}

/// Cumulative squared Lipschitz bound Phi_t = int_0^t phi_s^2 ds on a grid
/// (trapezoid rule; exact for constant phi).
#[derive(Debug, Clone)]
pub struct PhiIntegral {
    pub grid: TimeGrid,
    pub values: Vec<f64>,
}

impl PhiIntegral {
    pub fn from_phi(grid: &TimeGrid, phi: &dyn Fn(f64) -> f64) -> Self {
        let nodes = grid.nodes();
        let mut values = Vec::with_capacity(nodes.len());
        values.push(0.0);
        for i in 1..nodes.len() {
            let a = phi(nodes[i - 1]).powi(2);
            let b = phi(nodes[i]).powi(2);
            let prev = values[i - 1];
            values.push(prev + 0.5 * (a + b) * (nodes[i] - nodes[i - 1]));
        }
        PhiIntegral {
            grid: grid.clone(),
            values,
        }
    }

    pub fn zero(grid: &TimeGrid) -> Self {
        PhiIntegral {
            grid: grid.clone(),
            values: vec![0.0; grid.n_nodes()],
        }
    }
}

/// Psi(kappa) = 1 + 4 sqrt(kappa) / (sqrt(kappa) - 1)^2, kappa > 1.
pub fn psi_of_kappa(kappa: f64) -> Result<f64> {
    if !(kappa > 1.0) {
        return Err(Error::invalid(format!("kappa must exceed 1, got {kappa}")));
    }
    let s = kappa.sqrt();
    Ok(1.0 + 4.0 * s / ((s - 1.0) * (s - 1.0)))
}

/// The alternative printed form (1 + (2 sqrt(k) + 1)/k) * k / (sqrt(k)-1)^2.
pub fn psi_of_kappa_alt(kappa: f64) -> Result<f64> {
    if !(kappa > 1.0) {
        return Err(Error::invalid(format!("kappa must exceed 1, got {kappa}")));
    }
    let s = kappa.sqrt();
    Ok((1.0 + (2.0 * s + 1.0) / kappa) * kappa / ((s - 1.0) * (s - 1.0)))
}

/// theta(q) = sqrt(1 + ln((2q-1)/(2(q-1))) / q^2) - 1, decreasing on (1, inf).
pub fn theta(q: f64) -> Result<f64> {
    if !(q > 1.0) {
        return Err(Error::invalid(format!("theta requires q > 1, got {q}")));
    }
    Ok((1.0 + ((2.0 * q - 1.0) / (2.0 * (q - 1.0))).ln() / (q * q)).sqrt() - 1.0)
}

/// Inverse of theta by bisection to 1e-12.
pub fn theta_inverse(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::domain(format!("theta_inverse requires x > 0, got {x}")));
    }
    let mut lo = 1.0 + 1e-14;
    while theta(lo)? < x {
        lo = 1.0 + (lo - 1.0) / 2.0;
        if lo - 1.0 < 1e-300 {
            return Err(Error::domain(format!("x = {x} above the range of theta")));
        }
    }
    let mut hi = lo.max(2.0);
    while theta(hi)? > x {
        hi *= 2.0;
        if hi > 1e30 {
            return Err(Error::domain(format!("x = {x} below reachable theta values")));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if theta(mid)? > x {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-12 * hi.max(1.0) {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Psi(||L||) = (1 + ||L||/2) q/(q - 1) with q = theta^{-1}(||L||).
pub fn psi_of_bmo(bmo_norm: f64) -> Result<f64> {
    let q = theta_inverse(bmo_norm)?;
    Ok((1.0 + bmo_norm / 2.0) * q / (q - 1.0))
}

/// Maximal exponential integrability order b^2 / (4a|b-a|) of the hitting-time
/// terminal variable; infinite when a = b.
pub fn exp_integrability_bound(a: f64, b: f64) -> f64 {
    if a == b {
        return f64::INFINITY;
    }
    b * b / (4.0 * a * (b - a).abs())
}

/// Constants report for the iteration's integrability bookkeeping. The BMO
/// norm is user-supplied configuration, never estimated from paths.
#[derive(Debug, Clone, Serialize, Default)]
pub struct ConstantsReport {
    pub kappa: Option<f64>,
    pub psi_kappa: Option<f64>,
    pub bmo_norm: Option<f64>,
    pub theta_inverse: Option<f64>,
    pub psi_bmo: Option<f64>,
    pub gamma: Option<f64>,
    pub alpha_h3: Option<f64>,
    pub delta_h3: Option<f64>,
}

impl ConstantsReport {
    pub fn compute(
        kappa: Option<f64>,
        bmo_norm: Option<f64>,
        gamma: Option<f64>,
        alpha_h3: Option<f64>,
        delta_h3: Option<f64>,
    ) -> Result<Self> {
        if kappa.is_none() && bmo_norm.is_none() {
            return Err(Error::invalid("provide at least one of kappa, bmo_norm"));
        }
        let mut rep = ConstantsReport {
            kappa,
            bmo_norm,
            gamma,
            alpha_h3,
            delta_h3,
            ..Default::default()
        };
        if let Some(k) = kappa {
            rep.psi_kappa = Some(psi_of_kappa(k)?);
        }
        if let Some(l) = bmo_norm {
            rep.theta_inverse = Some(theta_inverse(l)?);
            rep.psi_bmo = Some(psi_of_bmo(l)?);
        }
        Ok(rep)
    }
}
