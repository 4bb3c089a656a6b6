//! The square-endpoint family on horizon 1: Z^k = W / f_k with f_k(t) = 1/k + t.
//!
//! The terminal-matching value process is
//!   Y^k_t = W_t^2 / (2 f_k(t)) + (1/2) ln(f_k(1) / f_k(t)),
//! whose Ito differential is exactly Z dW - Z^2/2 dt (the deterministic log
//! term cancels the dt/(2 f_k) contribution of the quadratic term), so the
//! discretized BSDE residual vanishes at first order in the step size.
//! The k = infinity marker realizes the pair (W_t^2/(2t) + ln(1/t)/2, W_t/t),
//! which is only defined on (0, 1] and whose control is not square
//! integrable at the origin - the non-solvability example.

use super::{PathSolution, SolutionLabel, SolutionPath, TerminalSpec};
use crate::error::{Error, Result};
use crate::paths::BrownianEnsemble;
use rayon::prelude::*;

pub fn square_endpoint_solution(k: Option<u32>, ens: &BrownianEnsemble) -> Result<SolutionPath> {
    if (ens.grid().horizon() - 1.0).abs() > 1e-12 {
        return Err(Error::invalid(format!(
            "square-endpoint family lives on horizon 1, got {}",
            ens.grid().horizon()
        )));
    }
    if let Some(0) = k {
        return Err(Error::invalid("k must be a positive integer or the infinity marker"));
    }
    let f = move |t: f64| match k {
        Some(k) => 1.0 / k as f64 + t,
        None => t,
    };
    let f1 = f(1.0);
    let nodes = ens.grid().nodes().to_vec();
    let paths: Vec<PathSolution> = (0..ens.n_paths())
        .into_par_iter()
        .map(|p| {
            let w = ens.path_values(p).to_vec();
            let mut y = Vec::with_capacity(nodes.len());
            let mut z = Vec::with_capacity(nodes.len());
            for (i, &t) in nodes.iter().enumerate() {
                let ft = f(t);
                if ft <= 0.0 {
                    // undefined-at-origin marker for k = infinity
                    y.push(f64::NAN);
                    z.push(0.0);
                } else {
                    y.push(w[i] * w[i] / (2.0 * ft) + 0.5 * (f1 / ft).ln());
                    z.push(w[i] / ft);
                }
            }
            let xi = TerminalSpec::square_xi(k, *w.last().unwrap());
            PathSolution {
                times: nodes.clone(),
                w,
                y,
                z,
                hitting: None,
                xi,
                truncated: false,
            }
        })
        .collect();
    let defined_from = if k.is_none() {
        Some(nodes[1])
    } else {
        None
    };
    Ok(SolutionPath {
        label: SolutionLabel::SquareEndpoint { k },
        alpha: 0.5,
        paths,
        m: None,
        defined_from,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::paths::{build_grid, simulate_ensemble};

    #[test]
    fn terminal_matches_xi_exactly() {
        let grid = build_grid(1.0, 64).unwrap();
        let ens = simulate_ensemble(&grid, 32, 9).unwrap();
        let sol = square_endpoint_solution(Some(1), &ens).unwrap();
        for p in &sol.paths {
            // k=1, t=1: Y = W_1^2 / 4 = xi_1, log term vanishes
            let w1 = *p.w.last().unwrap();
            assert_eq!(p.terminal_y(), w1 * w1 / 4.0);
            assert_eq!(p.xi, w1 * w1 / 4.0);
        }
    }

    #[test]
    fn infinity_marker_undefined_at_origin() {
        let grid = build_grid(1.0, 16).unwrap();
        let ens = simulate_ensemble(&grid, 8, 3).unwrap();
        let sol = square_endpoint_solution(None, &ens).unwrap();
        assert!(sol.defined_from.is_some());
        for p in &sol.paths {
            assert!(p.y[0].is_nan());
            assert_eq!(p.z[0], 0.0);
            assert!(p.y[1..].iter().all(|y| y.is_finite()));
            let w1 = *p.w.last().unwrap();
            assert_eq!(p.xi, w1 * w1 / 2.0);
        }
    }

    #[test]
    fn requires_unit_horizon() {
        let grid = build_grid(2.0, 16).unwrap();
        let ens = simulate_ensemble(&grid, 4, 3).unwrap();
        assert!(square_endpoint_solution(Some(1), &ens).is_err());
    }
}
