//! Closed-form solution families of the quadratic BSDE.
//!
//! Three sources of explicit solutions are covered: the hitting-time family
//! (first, second and mixed solutions stopped at affine barriers), the
//! square-endpoint family driven by xi_k = W_1^2 / (2(1+1/k)), and the
//! log-transform solution built from the exponential martingale
//! M_t = E[exp(2 alpha xi) | F_t].

mod explicit_log;
mod hitting;
mod registry;
mod square;

pub use explicit_log::{explicit_log_solution, ConditionalEngine, GaussHermite};
pub use hitting::{
    detect_two_barriers, first_solution, mixed_solution, second_solution, synthetic_first_solution_path,
};
pub use registry::{families, lookup_family, FamilyParams, SolutionFamily};
pub use square::square_endpoint_solution;

use crate::error::{Error, Result};
use crate::paths::HittingRecord;
use serde::Serialize;
use std::sync::Arc;

/// Terminal condition of the BSDE.
#[derive(Clone)]
pub enum TerminalSpec {
    /// xi = 2a(b-a) tau_b - 2a + shift_d, delivered at the hitting time of
    /// W <= b t - 1. The continuum construction uses b = 1 and a shift.
    HittingAffine { a: f64, b: f64, shift_d: f64 },
    /// xi_k = W_1^2 / (2(1 + 1/k)); `None` is the k = infinity marker W_1^2/2.
    SquareEndpoint { k: Option<u32> },
    /// Arbitrary functional of the discretized path.
    CustomFunctional {
        eval: Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>,
    },
}

impl std::fmt::Debug for TerminalSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TerminalSpec::HittingAffine { a, b, shift_d } => {
                write!(f, "HittingAffine {{ a: {a}, b: {b}, shift_d: {shift_d} }}")
            }
            TerminalSpec::SquareEndpoint { k } => write!(f, "SquareEndpoint {{ k: {k:?} }}"),
            TerminalSpec::CustomFunctional { .. } => write!(f, "CustomFunctional"),
        }
    }
}

impl TerminalSpec {
    /// Terminal depending on the endpoint W_T only.
    pub fn markovian(g: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        TerminalSpec::CustomFunctional {
            eval: Arc::new(move |_times, w| g(*w.last().unwrap())),
        }
    }

    pub fn hitting_xi(a: f64, b: f64, shift_d: f64, tau: f64) -> f64 {
        2.0 * a * (b - a) * tau - 2.0 * a + shift_d
    }

    pub fn square_xi(k: Option<u32>, w_terminal: f64) -> f64 {
        match k {
            Some(k) => w_terminal * w_terminal / (2.0 * (1.0 + 1.0 / k as f64)),
            None => w_terminal * w_terminal / 2.0,
        }
    }

    /// Evaluates xi on a discretized path; hitting terminals read the record.
    pub fn evaluate(
        &self,
        times: &[f64],
        w: &[f64],
        hitting: Option<&HittingRecord>,
    ) -> Result<f64> {
        match self {
            TerminalSpec::HittingAffine { a, b, shift_d } => {
                let rec = hitting.ok_or_else(|| {
                    Error::invalid("hitting-affine terminal needs a hitting record")
                })?;
                match rec.tau_value() {
                    Some(tau) => Ok(Self::hitting_xi(*a, *b, *shift_d, tau)),
                    None => Ok(f64::NAN),
                }
            }
            TerminalSpec::SquareEndpoint { k } => Ok(Self::square_xi(*k, *w.last().unwrap())),
            TerminalSpec::CustomFunctional { eval } => Ok(eval(times, w)),
        }
    }
}

/// Which family produced a solution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum SolutionLabel {
    First { a: f64, b: f64 },
    Second { a: f64, b: f64 },
    Mixed { a: f64, c: f64, d: f64 },
    ExplicitLog { alpha: f64 },
    SquareEndpoint { k: Option<u32> },
    Iterated,
}

/// One path of a candidate solution, possibly stopped at a hitting time.
/// `times` are grid nodes up to the stop with interpolated crossing times
/// inserted; `z[i]` applies on [times[i], times[i+1]).
#[derive(Debug, Clone)]
pub struct PathSolution {
    pub times: Vec<f64>,
    pub w: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    pub hitting: Option<HittingRecord>,
    pub xi: f64,
    pub truncated: bool,
}

impl PathSolution {
    pub fn terminal_y(&self) -> f64 {
        *self.y.last().unwrap()
    }
}

/// A candidate (Y, Z) process ensemble for the BSDE with generator alpha z^2.
#[derive(Debug, Clone)]
pub struct SolutionPath {
    pub label: SolutionLabel,
    pub alpha: f64,
    pub paths: Vec<PathSolution>,
    /// Conditional-martingale trajectories, carried by explicit-log solutions.
    pub m: Option<Vec<Vec<f64>>>,
    /// First time Y is defined (k = infinity leaves Y undefined at the origin).
    pub defined_from: Option<f64>,
}

impl SolutionPath {
    pub fn n_paths(&self) -> usize {
        self.paths.len()
    }

    pub fn truncated_fraction(&self) -> f64 {
        if self.paths.is_empty() {
            return 0.0;
        }
        self.paths.iter().filter(|p| p.truncated).count() as f64 / self.paths.len() as f64
    }
}

/// Laplace transform E exp(-lambda tau_b) = exp(-b(sqrt(1 + 2 lambda / b^2) - 1)),
/// analytically continued down to lambda = -b^2/2.
pub fn laplace_tau(b: f64, lambda: f64) -> Result<f64> {
    if !(b > 0.0) {
        return Err(Error::invalid(format!("barrier slope must be positive, got {b}")));
    }
    let floor = -b * b / 2.0;
    if lambda < floor - 1e-12 {
        return Err(Error::domain(format!(
            "lambda = {lambda} below the continuation boundary {floor}"
        )));
    }
    let arg = (1.0 + 2.0 * lambda / (b * b)).max(0.0);
    Ok((-b * (arg.sqrt() - 1.0)).exp())
}

/// Laplace transform of rho_c = inf{t: W_t <= t - c}: exp(-c(sqrt(1+2 lambda)-1)).
pub fn laplace_rho(c: f64, lambda: f64) -> Result<f64> {
    if !(c > 0.0) {
        return Err(Error::invalid(format!("rho_c requires c > 0, got {c}")));
    }
    if lambda < -0.5 - 1e-12 {
        return Err(Error::domain(format!("lambda = {lambda} below -1/2")));
    }
    let arg = (1.0 + 2.0 * lambda).max(0.0);
    Ok((-c * (arg.sqrt() - 1.0)).exp())
}

/// The three uniqueness scenarios of the hitting-time example.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Scenario {
    /// b >= 2a: one solution, which is a measure solution.
    A,
    /// 2a > b >= a: two distinct solutions, both measure solutions.
    B,
    /// a > b: two solutions, exactly one of which is a measure solution.
    C,
}

pub fn classify_scenario(a: f64, b: f64) -> Result<Scenario> {
    if !(a > 0.0 && b > 0.0) {
        return Err(Error::invalid(format!("scenario needs a, b > 0, got a={a}, b={b}")));
    }
    Ok(if b >= 2.0 * a {
        Scenario::A
    } else if b >= a {
        Scenario::B
    } else {
        Scenario::C
    })
}

/// E of the first solution's stochastic exponential at tau_b:
/// 1 when b >= a, exp(2(b-a)) when a > b.
pub fn first_solution_measure_value(a: f64, b: f64) -> f64 {
    if b >= a {
        1.0
    } else {
        (2.0 * (b - a)).exp()
    }
}

/// The second solution extends to a measure solution for every (a, b).
pub fn second_solution_measure_value(_a: f64, _b: f64) -> f64 {
    1.0
}

/// Closed-form segment expectations for the mixed solution: the first block
/// behaves like a coefficient-a solution stopped at rho_c, the second like a
/// coefficient-(1-a) solution over the fresh leg to rho_1.
pub fn mixed_segment_measure_values(a: f64, c: f64) -> (f64, f64) {
    let seg1 = if a <= 1.0 { 1.0 } else { (2.0 * c * (1.0 - a)).exp() };
    let seg2 = if a >= 0.0 { 1.0 } else { (2.0 * a * (1.0 - c)).exp() };
    (seg1, seg2)
}

/// Number of distinct explicit solutions per scenario.
pub fn scenario_solution_count(s: Scenario) -> usize {
    match s {
        Scenario::A => 1,
        Scenario::B | Scenario::C => 2,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn laplace_boundary_and_values() {
        assert!((laplace_tau(1.0, 0.0).unwrap() - 1.0).abs() < 1e-15);
        assert!((laplace_tau(1.0, -0.5).unwrap() - std::f64::consts::E).abs() < 1e-12);
        assert!((laplace_tau(1.0, 1.5).unwrap() - (-1.0f64).exp()).abs() < 1e-12);
        assert!(laplace_tau(1.0, -0.51).is_err());
        assert!(laplace_tau(0.0, 0.0).is_err());
    }

    #[test]
    fn scenario_trichotomy() {
        assert_eq!(classify_scenario(1.0, 3.0).unwrap(), Scenario::A);
        assert_eq!(classify_scenario(1.0, 1.5).unwrap(), Scenario::B);
        assert_eq!(classify_scenario(1.0, 0.5).unwrap(), Scenario::C);
        assert_eq!(classify_scenario(1.0, 2.0).unwrap(), Scenario::A);
        assert_eq!(classify_scenario(1.0, 1.0).unwrap(), Scenario::B);
        assert!(classify_scenario(0.0, 1.0).is_err());
    }

    #[test]
    fn measure_values_per_branch() {
        assert_eq!(first_solution_measure_value(0.5, 1.0), 1.0);
        assert!((first_solution_measure_value(1.0, 0.5) - (-1.0f64).exp()).abs() < 1e-15);
        assert_eq!(first_solution_measure_value(1.0, 1.0), 1.0);
        assert_eq!(second_solution_measure_value(1.0, 0.5), 1.0);
        assert_eq!(second_solution_measure_value(0.5, 1.0), 1.0);
    }

    #[test]
    fn mixed_segments_flag_non_measure_side() {
        let (s1, s2) = mixed_segment_measure_values(0.5, 0.5);
        assert_eq!((s1, s2), (1.0, 1.0));
        let (s1, s2) = mixed_segment_measure_values(2.0, 0.5);
        assert!((s1 - (-2.0f64).exp()).abs() < 1e-15);
        assert_eq!(s2, 1.0);
        let (s1, s2) = mixed_segment_measure_values(-0.5, 0.25);
        assert_eq!(s1, 1.0);
        assert!((s2 - (-0.75f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn hitting_xi_formula() {
        // a=0.5, b=1, tau=1: xi = 2*0.5*0.5*1 - 1 = -0.5
        assert!((TerminalSpec::hitting_xi(0.5, 1.0, 0.0, 1.0) + 0.5).abs() < 1e-15);
    }
}
