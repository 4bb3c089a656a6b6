//! Registry of candidate-solution families.
//!
//! Every family builds a `SolutionPath` from shared parameters and an
//! ensemble, behind the common `SolutionFamily` trait. The CLI selects a
//! family by name at runtime and feeds the result to the verification
//! pipeline, so new families plug in without touching the verifier.

use super::{
    detect_two_barriers, explicit_log_solution, first_solution, first_solution_measure_value,
    mixed_segment_measure_values, mixed_solution, second_solution, second_solution_measure_value,
    square_endpoint_solution, ConditionalEngine, SolutionPath, TerminalSpec,
};
use crate::error::{Error, Result};
use crate::generators::GeneratorSpec;
use crate::paths::{detect_hitting_ensemble, AffineBarrier, BrownianEnsemble};

/// Parameter bag shared by the families; unused fields are ignored.
#[derive(Debug, Clone, Copy)]
pub struct FamilyParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub alpha: f64,
    /// Square-endpoint index; `None` once `infinite_k` is set.
    pub k: u32,
    pub infinite_k: bool,
    pub bridge_correction: bool,
}

impl Default for FamilyParams {
    fn default() -> Self {
        FamilyParams {
            a: 1.0,
            b: 1.0,
            c: 0.5,
            d: 0.0,
            alpha: 0.5,
            k: 1,
            infinite_k: false,
            bridge_correction: true,
        }
    }
}

impl FamilyParams {
    pub fn square_k(&self) -> Option<u32> {
        if self.infinite_k {
            None
        } else {
            Some(self.k)
        }
    }
}

/// One interchangeable candidate-solution construction.
pub trait SolutionFamily: Send + Sync {
    fn name(&self) -> &'static str;
    fn describe(&self) -> &'static str;
    fn build(&self, params: &FamilyParams, ens: &BrownianEnsemble) -> Result<SolutionPath>;
    /// Generator the candidate is checked against.
    fn generator(&self, params: &FamilyParams) -> GeneratorSpec;
    /// Closed-form value of E V_T when the paper provides one.
    fn closed_form_reference(&self, params: &FamilyParams) -> Option<f64>;
}

struct FirstFamily;
struct SecondFamily;
struct MixedFamily;
struct SquareEndpointFamily;
struct ExplicitLogFamily;

impl SolutionFamily for FirstFamily {
    fn name(&self) -> &'static str {
        "first"
    }
    fn describe(&self) -> &'static str {
        "Y = 2a W - 2a^2 t stopped at tau_b; measure solution iff b >= a"
    }
    fn build(&self, p: &FamilyParams, ens: &BrownianEnsemble) -> Result<SolutionPath> {
        let recs = detect_hitting_ensemble(ens, AffineBarrier::tau_b(p.b), p.bridge_correction);
        first_solution(p.a, p.b, ens, &recs)
    }
    fn generator(&self, _: &FamilyParams) -> GeneratorSpec {
        GeneratorSpec::quadratic(0.5)
    }
    fn closed_form_reference(&self, p: &FamilyParams) -> Option<f64> {
        Some(first_solution_measure_value(p.a, p.b))
    }
}

impl SolutionFamily for SecondFamily {
    fn name(&self) -> &'static str {
        "second"
    }
    fn describe(&self) -> &'static str {
        "Y = ln E[e^xi | F] stopped at tau_b; always extends to a measure solution"
    }
    fn build(&self, p: &FamilyParams, ens: &BrownianEnsemble) -> Result<SolutionPath> {
        let recs = detect_hitting_ensemble(ens, AffineBarrier::tau_b(p.b), p.bridge_correction);
        second_solution(p.a, p.b, ens, &recs)
    }
    fn generator(&self, _: &FamilyParams) -> GeneratorSpec {
        GeneratorSpec::quadratic(0.5)
    }
    fn closed_form_reference(&self, p: &FamilyParams) -> Option<f64> {
        Some(second_solution_measure_value(p.a, p.b))
    }
}

impl SolutionFamily for MixedFamily {
    fn name(&self) -> &'static str {
        "mixed"
    }
    fn describe(&self) -> &'static str {
        "continuum member switching Z = 2a to 2(1-a) at rho_c, stopped at rho_1"
    }
    fn build(&self, p: &FamilyParams, ens: &BrownianEnsemble) -> Result<SolutionPath> {
        let recs = detect_two_barriers(
            ens,
            AffineBarrier::rho_c(p.c),
            AffineBarrier::rho_c(1.0),
            p.bridge_correction,
        );
        mixed_solution(p.a, p.c, p.d, ens, &recs)
    }
    fn generator(&self, _: &FamilyParams) -> GeneratorSpec {
        GeneratorSpec::quadratic(0.5)
    }
    fn closed_form_reference(&self, p: &FamilyParams) -> Option<f64> {
        let (s1, s2) = mixed_segment_measure_values(p.a, p.c);
        Some(s1 * s2)
    }
}

impl SolutionFamily for SquareEndpointFamily {
    fn name(&self) -> &'static str {
        "square-endpoint"
    }
    fn describe(&self) -> &'static str {
        "Y = W^2/(2 f_k) + log correction on horizon 1; k = infinity is the non-solvable case"
    }
    fn build(&self, p: &FamilyParams, ens: &BrownianEnsemble) -> Result<SolutionPath> {
        square_endpoint_solution(p.square_k(), ens)
    }
    fn generator(&self, _: &FamilyParams) -> GeneratorSpec {
        GeneratorSpec::quadratic(0.5)
    }
    fn closed_form_reference(&self, p: &FamilyParams) -> Option<f64> {
        if p.infinite_k {
            None
        } else {
            Some(1.0)
        }
    }
}

impl SolutionFamily for ExplicitLogFamily {
    fn name(&self) -> &'static str {
        "explicit-log"
    }
    fn describe(&self) -> &'static str {
        "regression-engine log-transform solution for the hitting-affine terminal"
    }
    fn build(&self, p: &FamilyParams, ens: &BrownianEnsemble) -> Result<SolutionPath> {
        let terminal = TerminalSpec::HittingAffine {
            a: p.a,
            b: p.b,
            shift_d: 0.0,
        };
        explicit_log_solution(p.alpha, &terminal, ens, &ConditionalEngine::default_regression())
    }
    fn generator(&self, p: &FamilyParams) -> GeneratorSpec {
        GeneratorSpec::quadratic(p.alpha)
    }
    fn closed_form_reference(&self, _: &FamilyParams) -> Option<f64> {
        None
    }
}

/// All registered families.
pub fn families() -> Vec<Box<dyn SolutionFamily>> {
    vec![
        Box::new(FirstFamily),
        Box::new(SecondFamily),
        Box::new(MixedFamily),
        Box::new(SquareEndpointFamily),
        Box::new(ExplicitLogFamily),
    ]
}

pub fn lookup_family(name: &str) -> Result<Box<dyn SolutionFamily>> {
    families()
        .into_iter()
        .find(|f| f.name() == name)
        .ok_or_else(|| {
            let known: Vec<&str> = families().iter().map(|f| f.name()).collect();
            Error::invalid(format!("unknown family '{name}'; known: {}", known.join(", ")))
        })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::paths::{build_grid, simulate_ensemble};

    #[test]
    fn registry_names_are_unique_and_resolvable() {
        let fams = families();
        let mut names: Vec<&str> = fams.iter().map(|f| f.name()).collect();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), fams.len());
        for name in names {
            assert_eq!(lookup_family(name).unwrap().name(), name);
        }
        assert!(lookup_family("nope").is_err());
    }

    #[test]
    fn families_build_on_a_small_ensemble() {
        let grid = build_grid(1.0, 32).unwrap();
        let unit = simulate_ensemble(&grid, 64, 8).unwrap();
        let long_grid = build_grid(20.0, 800).unwrap();
        let long = simulate_ensemble(&long_grid, 64, 8).unwrap();
        let params = FamilyParams::default();
        for fam in families() {
            let ens = if matches!(fam.name(), "square-endpoint") { &unit } else { &long };
            let sol = fam.build(&params, ens).unwrap();
            assert_eq!(sol.n_paths(), 64, "family {}", fam.name());
        }
    }
}
