//! Constructive measure-solution iteration.
//!
//! Starting from the base measure, each round projects the terminal variable
//! onto the current filtration under the current measure (weighted regression
//! per node), extracts the control by a martingale-increment regression
//! against the tilted Brownian increments, and re-tilts with the stochastic
//! exponential of int g(s, Z^n) dW. Importance weights always refer back to
//! the one simulated ensemble; no re-simulation under the new measures.

use crate::closedform::{PathSolution, SolutionLabel, SolutionPath, TerminalSpec};
use crate::error::{Error, Result};
use crate::generators::{GeneratorSpec, PhiIntegral};
use crate::paths::{detect_hitting_ensemble, AffineBarrier, BrownianEnsemble, HittingRecord};
use crate::regression::{predict, weighted_least_squares, Basis, NodeState, RegressionEngine};
use crate::stats::{effective_sample_size, geometric_ratio};
use crate::verify::{martingale_expectation, GirsanovWeight, MeasureReport};
use rayon::prelude::*;
use serde::Serialize;

/// Exponent weights of the boundedness diagnostics.
#[derive(Debug, Clone, Copy)]
pub struct DiagnosticsConfig {
    pub beta: f64,
    pub p: f64,
    /// Constant Lipschitz bound when the generator does not carry one
    /// (quadratic runs); None falls back to Phi = 0.
    pub phi_override: Option<f64>,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        DiagnosticsConfig {
            beta: 1.0,
            p: 2.0,
            phi_override: None,
        }
    }
}

impl DiagnosticsConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0) {
            return Err(Error::invalid(format!("beta must be positive, got {}", self.beta)));
        }
        if !(self.p > 1.0) {
            return Err(Error::invalid(format!("p must exceed 1, got {}", self.p)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct IterateConfig {
    pub engine: RegressionEngine,
    pub max_iter: usize,
    pub tol: f64,
    pub diagnostics: DiagnosticsConfig,
    /// Fraction of n_paths below which the effective sample size aborts.
    pub min_ess_fraction: f64,
}

impl Default for IterateConfig {
    fn default() -> Self {
        IterateConfig {
            engine: RegressionEngine::default(),
            max_iter: 10,
            tol: 1e-4,
            diagnostics: DiagnosticsConfig::default(),
            min_ess_fraction: 0.05,
        }
    }
}

/// Snapshot after one iteration.
#[derive(Debug, Clone)]
pub struct IterationState {
    pub n: usize,
    pub log_weights: Vec<f64>,
    pub y0: f64,
    pub dist_l2: f64,
    pub dist_l2_weighted: f64,
    pub ess: f64,
    pub sup_weighted_y: f64,
    pub weighted_z_l2: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TraceRow {
    pub n: usize,
    pub dist_l2: f64,
    pub dist_l2_weighted: f64,
    pub ess: f64,
    pub y0: f64,
    pub sup_weighted_y: f64,
    pub weighted_z_l2: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceTrace {
    pub rows: Vec<TraceRow>,
    /// Fitted geometric decay ratio of dist_l2 (least squares on the log).
    pub fitted_ratio: Option<f64>,
}

/// Table of (n, dist, ess, Y0, diagnostics) with a geometric-decay fit.
pub fn convergence_trace(states: &[IterationState]) -> ConvergenceTrace {
    let rows: Vec<TraceRow> = states
        .iter()
        .map(|s| TraceRow {
            n: s.n,
            dist_l2: s.dist_l2,
            dist_l2_weighted: s.dist_l2_weighted,
            ess: s.ess,
            y0: s.y0,
            sup_weighted_y: s.sup_weighted_y,
            weighted_z_l2: s.weighted_z_l2,
        })
        .collect();
    let dists: Vec<f64> = states.iter().map(|s| s.dist_l2).collect();
    ConvergenceTrace {
        rows,
        fitted_ratio: geometric_ratio(&dists),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundednessReport {
    pub sup_weighted_y: Vec<f64>,
    pub weighted_z_l2: Vec<f64>,
    /// Last value at most twice the median of the history, for both series.
    pub no_growth_trend: bool,
}

/// Monitors the two weighted norms across iterations.
pub fn boundedness_monitor(states: &[IterationState]) -> BoundednessReport {
    let a: Vec<f64> = states.iter().map(|s| s.sup_weighted_y).collect();
    let b: Vec<f64> = states.iter().map(|s| s.weighted_z_l2).collect();
    let ok = |xs: &[f64]| -> bool {
        if xs.len() < 2 {
            return true;
        }
        let mut sorted = xs.to_vec();
        sorted.sort_by(|x, y| x.partial_cmp(y).unwrap());
        let median = sorted[sorted.len() / 2];
        *xs.last().unwrap() <= 2.0 * median + 1e-12
    };
    BoundednessReport {
        no_growth_trend: ok(&a) && ok(&b),
        sup_weighted_y: a,
        weighted_z_l2: b,
    }
}

pub struct IterateOutput {
    pub states: Vec<IterationState>,
    pub solution: SolutionPath,
    pub report: MeasureReport,
    pub converged: bool,
}

struct NodeFit {
    y: Vec<Vec<f64>>,
    z: Vec<Vec<f64>>,
}

/// Runs the iteration until the weighted L2 distance of successive controls
/// falls below `tol` or `max_iter` rounds pass.
pub fn iterate_measure_solution(
    terminal: &TerminalSpec,
    spec: &GeneratorSpec,
    ens: &BrownianEnsemble,
    cfg: &IterateConfig,
) -> Result<IterateOutput> {
    cfg.diagnostics.validate()?;
    let n_paths = ens.n_paths();
    let nodes = ens.grid().nodes().to_vec();
    let n_nodes = nodes.len();
    if n_paths < 16 || n_nodes < 2 {
        return Err(Error::invalid("iteration needs at least 16 paths and 2 nodes"));
    }

    let records: Option<Vec<HittingRecord>> = match terminal {
        TerminalSpec::HittingAffine { b, .. } => {
            Some(detect_hitting_ensemble(ens, AffineBarrier::tau_b(*b), true))
        }
        _ => None,
    };

    // f(.,0) normalization: shift xi by int f(s,0) ds and subtract f(s,0)
    // from the generator so g stays the ratio of the shifted drift
    let f0: Vec<f64> = nodes.iter().map(|&t| spec.eval_f(t, 0.0)).collect();
    let f0_shift: f64 = (0..n_nodes - 1)
        .map(|i| f0[i] * (nodes[i + 1] - nodes[i]))
        .sum();
    let g_of = |t: f64, z: f64| -> f64 {
        if z == 0.0 {
            0.0
        } else {
            (spec.eval_f(t, z) - spec.eval_f(t, 0.0)) / z
        }
    };

    let mut xi = Vec::with_capacity(n_paths);
    for p in 0..n_paths {
        let rec = records.as_ref().map(|r| &r[p]);
        xi.push(terminal.evaluate(&nodes, ens.path_values(p), rec)? + f0_shift);
    }

    let basis = match (&cfg.engine.basis, &records) {
        (Basis::Polynomial { degree }, Some(_)) => Basis::Hitting { degree: *degree },
        (b, _) => b.clone(),
    };
    let dim = basis.dim();

    let state_at = |p: usize, i: usize| -> NodeState {
        let t = nodes[i];
        let w = ens.path_values(p)[i];
        match &records {
            Some(recs) => {
                let rec = &recs[p];
                let (hit, stopped, dist) = match rec.tau_value() {
                    Some(tau) if tau <= t => (true, tau, 0.0),
                    _ => (false, t, rec.barrier.distance(t, w).max(0.0)),
                };
                NodeState {
                    t,
                    w,
                    hit,
                    stopped_time: stopped,
                    dist,
                    hit_payload: 0.0,
                }
            }
            None => NodeState::markovian(t, w),
        }
    };

    let phi = PhiIntegral::from_phi(ens.grid(), &|t| {
        cfg.diagnostics
            .phi_override
            .or_else(|| spec.phi_bound(t))
            .unwrap_or(0.0)
    });
    let beta = cfg.diagnostics.beta;
    let p_exp = cfg.diagnostics.p;

    let mut log_weights = vec![0.0f64; n_paths];
    let mut prev_fit: Option<NodeFit> = None;
    let mut states: Vec<IterationState> = Vec::new();
    let mut converged = false;
    let mut rising = 0usize;

    for n in 1..=cfg.max_iter {
        let weights: Vec<f64> = log_weights.iter().map(|lw| lw.exp()).collect();
        let ess = effective_sample_size(&weights);
        if ess < cfg.min_ess_fraction * n_paths as f64 {
            let trace = states
                .iter()
                .map(|s| format!("n={} dist={:.3e} ess={:.0} y0={:.4}", s.n, s.dist_l2, s.ess, s.y0))
                .collect();
            return Err(Error::WeightDegeneracy {
                iteration: n,
                ess,
                n_paths,
                trace,
            });
        }

        // (1) projection: Y^n_t = E^{n-1}[xi | F_t] by weighted regression
        let mut y_coeffs: Vec<Vec<f64>> = Vec::with_capacity(n_nodes);
        for i in 0..n_nodes {
            let rows = (0..n_paths).into_par_iter().map(|p| {
                let mut feat = [0.0; 12];
                basis.fill(&state_at(p, i), &mut feat[..dim]);
                (feat, xi[p], weights[p])
            });
            let coeffs = match weighted_least_squares(dim, cfg.engine.ridge, rows) {
                Ok(c) => c,
                Err(_) => y_coeffs
                    .last()
                    .cloned()
                    .ok_or_else(|| Error::Internal("projection failed at node 0".into()))?,
            };
            y_coeffs.push(coeffs);
        }

        // (2) control extraction: regression of dY against the tilted increment
        let tilt_g: Vec<Vec<f64>> = (0..n_paths)
            .into_par_iter()
            .map(|p| {
                (0..n_nodes - 1)
                    .map(|i| match &prev_fit {
                        Some(fit) => {
                            let z = predict(&basis, &fit.z[i], &state_at(p, i));
                            g_of(nodes[i], z)
                        }
                        None => 0.0,
                    })
                    .collect()
            })
            .collect();

        let mut z_coeffs: Vec<Vec<f64>> = Vec::with_capacity(n_nodes);
        for i in 0..n_nodes - 1 {
            let dt = nodes[i + 1] - nodes[i];
            let yi = &y_coeffs[i];
            let yi1 = &y_coeffs[i + 1];
            let rows = (0..n_paths).into_par_iter().map(|p| {
                let s0 = state_at(p, i);
                let s1 = state_at(p, i + 1);
                let mut feat = [0.0; 12];
                basis.fill(&s0, &mut feat[..dim]);
                let dy = predict(&basis, yi1, &s1) - predict(&basis, yi, &s0);
                let dw = ens.path_values(p)[i + 1] - ens.path_values(p)[i] - tilt_g[p][i] * dt;
                (feat, dy * dw / dt, weights[p])
            });
            let coeffs = match weighted_least_squares(dim, cfg.engine.ridge, rows) {
                Ok(c) => c,
                Err(_) => z_coeffs.last().cloned().unwrap_or_else(|| vec![0.0; dim]),
            };
            z_coeffs.push(coeffs);
        }
        z_coeffs.push(z_coeffs.last().cloned().unwrap_or_else(|| vec![0.0; dim]));

        // (3) re-tilt: ln R^n = sum g(t, Z^n) dW - 1/2 sum g^2 dt
        let new_log_weights: Vec<f64> = (0..n_paths)
            .into_par_iter()
            .map(|p| {
                let mut lr = 0.0;
                for i in 0..n_nodes - 1 {
                    let dt = nodes[i + 1] - nodes[i];
                    let dw = ens.path_values(p)[i + 1] - ens.path_values(p)[i];
                    let z = predict(&basis, &z_coeffs[i], &state_at(p, i));
                    let g = g_of(nodes[i], z);
                    lr += g * dw - 0.5 * g * g * dt;
                }
                lr
            })
            .collect();

        // distances under the latest weights, plain and e^{beta Phi}-weighted
        let new_weights: Vec<f64> = new_log_weights.iter().map(|lw| lw.exp()).collect();
        let wsum: f64 = new_weights.iter().sum();
        let mut dist2 = 0.0;
        let mut dist2_w = 0.0;
        let per_path: Vec<(f64, f64)> = (0..n_paths)
            .into_par_iter()
            .map(|p| {
                let mut acc = 0.0;
                let mut acc_w = 0.0;
                for i in 0..n_nodes - 1 {
                    let dt = nodes[i + 1] - nodes[i];
                    let s = state_at(p, i);
                    let z_new = predict(&basis, &z_coeffs[i], &s);
                    let z_old = match &prev_fit {
                        Some(fit) => predict(&basis, &fit.z[i], &s),
                        None => 0.0,
                    };
                    let d2 = (z_new - z_old) * (z_new - z_old) * dt;
                    acc += d2 * new_weights[p];
                    acc_w += d2 * new_weights[p] * (beta * phi.values[i]).exp();
                }
                (acc, acc_w)
            })
            .collect();
        for (a, b) in &per_path {
            dist2 += a;
            dist2_w += b;
        }
        dist2 /= wsum;
        dist2_w /= wsum;

        // diagnostics under the previous measure (weights R^{n-1})
        let wprev_sum: f64 = weights.iter().sum();
        let diag: Vec<(f64, f64)> = (0..n_paths)
            .into_par_iter()
            .map(|p| {
                let mut sup_y = 0.0f64;
                let mut int_z = 0.0;
                for i in 0..n_nodes {
                    let s = state_at(p, i);
                    let y = predict(&basis, &y_coeffs[i], &s);
                    let wy = (beta * phi.values[i]).exp() * y.abs().powf(p_exp);
                    sup_y = sup_y.max(wy);
                    if i < n_nodes - 1 {
                        let z = predict(&basis, &z_coeffs[i], &s);
                        int_z += (beta * phi.values[i]).exp() * z * z * (nodes[i + 1] - nodes[i]);
                    }
                }
                (sup_y * weights[p], int_z.powf(p_exp / 2.0) * weights[p])
            })
            .collect();
        let sup_weighted_y = diag.iter().map(|d| d.0).sum::<f64>() / wprev_sum;
        let weighted_z_l2 = diag.iter().map(|d| d.1).sum::<f64>() / wprev_sum;

        let y0 = {
            let s = state_at(0, 0);
            predict(&basis, &y_coeffs[0], &s)
        };

        let dist = dist2.sqrt();
        let dist_w = dist2_w.sqrt();
        if let Some(last) = states.last() {
            if dist >= last.dist_l2 {
                rising += 1;
            } else {
                rising = 0;
            }
        }
        states.push(IterationState {
            n,
            log_weights: new_log_weights.clone(),
            y0,
            dist_l2: dist,
            dist_l2_weighted: dist_w,
            ess: effective_sample_size(&new_weights),
            sup_weighted_y,
            weighted_z_l2,
        });

        let zero_drift = (0..n_nodes - 1).all(|i| {
            let c = &z_coeffs[i];
            c.iter().all(|v| *v == 0.0)
        }) || new_log_weights.iter().all(|lw| *lw == 0.0);

        prev_fit = Some(NodeFit {
            y: y_coeffs,
            z: z_coeffs,
        });
        log_weights = new_log_weights;

        if dist_w < cfg.tol || zero_drift {
            converged = true;
            break;
        }
        if rising >= 5 {
            return Err(Error::NonConvergence(format!(
                "dist_L2 non-decreasing over 5 consecutive iterations (n = {n})"
            )));
        }
    }

    let fit = prev_fit.ok_or_else(|| Error::Internal("no iterations ran".into()))?;
    let alpha = match spec {
        GeneratorSpec::Quadratic { alpha } => *alpha,
        _ => 0.0,
    };
    let paths: Vec<PathSolution> = (0..n_paths)
        .map(|p| {
            let mut y = Vec::with_capacity(n_nodes);
            let mut z = Vec::with_capacity(n_nodes);
            for i in 0..n_nodes {
                let s = state_at(p, i);
                y.push(predict(&basis, &fit.y[i], &s));
                z.push(predict(&basis, &fit.z[i], &s));
            }
            PathSolution {
                times: nodes.clone(),
                w: ens.path_values(p).to_vec(),
                y,
                z,
                hitting: records.as_ref().map(|r| r[p]),
                xi: xi[p],
                truncated: records
                    .as_ref()
                    .map(|r| r[p].is_truncated())
                    .unwrap_or(false),
            }
        })
        .collect();
    let solution = SolutionPath {
        label: SolutionLabel::Iterated,
        alpha,
        paths,
        m: None,
        defined_from: None,
    };
    let weight = GirsanovWeight::from_solution(&solution, spec);
    let report = martingale_expectation(&weight, None, None);
    Ok(IterateOutput {
        states,
        solution,
        report,
        converged,
    })
}
