//! The log-transform solution Y = ln(M)/2a (shifted to Y_0 = 0) with
//! Z = H / (2a M), where M_t = E[exp(2a xi) | F_t] = M_0 + int H dW.
//!
//! Two realizations of the conditional expectation are provided: weighted
//! polynomial regression (the generic engine, shared with the iteration) and
//! Gauss-Hermite quadrature for terminals xi = G(W_T), which serves as a
//! high-accuracy oracle in tests.

use super::{PathSolution, SolutionLabel, SolutionPath, TerminalSpec};
use crate::error::{Error, Result};
use crate::paths::{detect_hitting_ensemble, AffineBarrier, BrownianEnsemble, HittingRecord};
use crate::regression::{predict, weighted_least_squares, Basis, NodeState, RegressionEngine};
use rayon::prelude::*;
use std::sync::Arc;

type EndpointFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// How M_t and H_t are estimated.
#[derive(Clone)]
pub enum ConditionalEngine {
    /// Least-squares projection on path-state features; H by regression of
    /// martingale increments against the Brownian increment.
    Regression(RegressionEngine),
    /// Exact Gaussian conditioning for xi = g(W_T); needs dg for H.
    Quadrature {
        g: EndpointFn,
        dg: EndpointFn,
        n_points: usize,
    },
}

impl ConditionalEngine {
    pub fn default_regression() -> Self {
        ConditionalEngine::Regression(RegressionEngine::default())
    }

    pub fn quadrature(
        g: impl Fn(f64) -> f64 + Send + Sync + 'static,
        dg: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        ConditionalEngine::Quadrature {
            g: Arc::new(g),
            dg: Arc::new(dg),
            n_points: 48,
        }
    }
}

/// Gauss-Hermite rule adapted to standard normal expectations:
/// E f(G) ~ sum_i weight_i f(point_i).
pub struct GaussHermite {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussHermite {
    /// Physicists' nodes by Newton iteration on the orthonormal recurrence,
    /// then rescaled by sqrt(2) and normalized by 1/sqrt(pi).
    pub fn new(n: usize) -> Self {
        let mut x = vec![0.0; n];
        let mut w = vec![0.0; n];
        let m = (n + 1) / 2;
        let mut z = 0.0f64;
        for i in 0..m {
            z = match i {
                0 => {
                    let a = (2 * n + 1) as f64;
                    a.sqrt() - 1.85575 * a.powf(-1.0 / 6.0)
                }
                1 => z - 1.14 * (n as f64).powf(0.426) / z,
                2 => 1.86 * z - 0.86 * x[0],
                3 => 1.91 * z - 0.91 * x[1],
                _ => 2.0 * z - x[i - 2],
            };
            let mut pp = 0.0;
            for _ in 0..200 {
                // orthonormal Hermite values p1 = h_n(z), p2 = h_{n-1}(z)
                let mut p1 = std::f64::consts::PI.powf(-0.25);
                let mut p2 = 0.0;
                for j in 1..=n {
                    let p3 = p2;
                    p2 = p1;
                    p1 = z * (2.0 / j as f64).sqrt() * p2
                        - ((j as f64 - 1.0) / j as f64).sqrt() * p3;
                }
                pp = (2.0 * n as f64).sqrt() * p2;
                let dz = p1 / pp;
                z -= dz;
                if dz.abs() < 1e-15 {
                    break;
                }
            }
            x[i] = z;
            x[n - 1 - i] = -z;
            w[i] = 2.0 / (pp * pp);
            w[n - 1 - i] = w[i];
        }
        // map to N(0,1): point sqrt(2) x, weight w / sqrt(pi)
        let norm = std::f64::consts::PI.sqrt();
        GaussHermite {
            points: x.iter().map(|v| v * std::f64::consts::SQRT_2).collect(),
            weights: w.iter().map(|v| v / norm).collect(),
        }
    }

    pub fn expect(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.points
            .iter()
            .zip(self.weights.iter())
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

/// Prefix-mean stability probe for E exp(2 alpha xi): consistent growth across
/// sample doublings flags a diverging moment.
fn probe_exp_moment(e2axi: &[f64]) -> Result<()> {
    let n = e2axi.len();
    if n < 16 {
        return Ok(());
    }
    let mean_to = |k: usize| e2axi[..k].iter().sum::<f64>() / k as f64;
    let m1 = mean_to(n / 4);
    let m2 = mean_to(n / 2);
    let m3 = mean_to(n);
    if !m3.is_finite() {
        return Err(Error::DivergingMoment(
            "exp(2 alpha xi) overflowed on the sample".into(),
        ));
    }
    let r1 = m2 / m1;
    let r2 = m3 / m2;
    if r1 > 1.2 && r2 > 1.2 {
        return Err(Error::DivergingMoment(format!(
            "estimate of E exp(2 alpha xi) grows with sample size: {m1:.4e} -> {m2:.4e} -> {m3:.4e}"
        )));
    }
    Ok(())
}

/// Builds the explicit log-transform solution on the ensemble grid. Hitting
/// terminals detect their stopping times internally (bridge-corrected).
pub fn explicit_log_solution(
    alpha: f64,
    terminal: &TerminalSpec,
    ens: &BrownianEnsemble,
    engine: &ConditionalEngine,
) -> Result<SolutionPath> {
    if !(alpha > 0.0) {
        return Err(Error::invalid(format!("alpha must be positive, got {alpha}")));
    }
    let n_paths = ens.n_paths();
    let nodes = ens.grid().nodes().to_vec();
    let n_nodes = nodes.len();

    let records: Option<Vec<HittingRecord>> = match terminal {
        TerminalSpec::HittingAffine { b, .. } => Some(detect_hitting_ensemble(
            ens,
            AffineBarrier::tau_b(*b),
            true,
        )),
        _ => None,
    };

    let mut xi = Vec::with_capacity(n_paths);
    for p in 0..n_paths {
        let rec = records.as_ref().map(|r| &r[p]);
        xi.push(terminal.evaluate(&nodes, ens.path_values(p), rec)?);
    }
    let e2axi: Vec<f64> = xi.iter().map(|x| (2.0 * alpha * x).exp()).collect();
    let finite: Vec<f64> = e2axi.iter().cloned().filter(|v| v.is_finite()).collect();
    if finite.len() < n_paths {
        return Err(Error::DivergingMoment(format!(
            "{} of {} terminal exponentials are not finite",
            n_paths - finite.len(),
            n_paths
        )));
    }
    probe_exp_moment(&e2axi)?;

    // m[p * n_nodes + i], z likewise
    let (m, z) = match engine {
        ConditionalEngine::Quadrature { g, dg, n_points } => {
            if records.is_some() {
                return Err(Error::invalid(
                    "quadrature engine handles endpoint terminals only",
                ));
            }
            quadrature_fit(alpha, g, dg, *n_points, ens)?
        }
        ConditionalEngine::Regression(cfg) => {
            regression_fit(alpha, cfg, ens, &e2axi, records.as_deref())?
        }
    };

    let mut paths = Vec::with_capacity(n_paths);
    let mut m_out = Vec::with_capacity(n_paths);
    for p in 0..n_paths {
        let mrow = &m[p * n_nodes..(p + 1) * n_nodes];
        let zrow = &z[p * n_nodes..(p + 1) * n_nodes];
        let m0 = mrow[0];
        let y: Vec<f64> = mrow
            .iter()
            .map(|&mv| (mv.ln() - m0.ln()) / (2.0 * alpha))
            .collect();
        let rec = records.as_ref().map(|r| r[p]);
        let truncated = rec.map(|r| r.is_truncated()).unwrap_or(false);
        paths.push(PathSolution {
            times: nodes.clone(),
            w: ens.path_values(p).to_vec(),
            y,
            z: zrow.to_vec(),
            hitting: rec,
            xi: xi[p] - m0.ln() / (2.0 * alpha),
            truncated,
        });
        m_out.push(mrow.to_vec());
    }
    Ok(SolutionPath {
        label: SolutionLabel::ExplicitLog { alpha },
        alpha,
        paths,
        m: Some(m_out),
        defined_from: None,
    })
}

fn quadrature_fit(
    alpha: f64,
    g: &EndpointFn,
    dg: &EndpointFn,
    n_points: usize,
    ens: &BrownianEnsemble,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let nodes = ens.grid().nodes().to_vec();
    let horizon = ens.grid().horizon();
    let n_nodes = nodes.len();
    let gh = GaussHermite::new(n_points);
    let n_paths = ens.n_paths();
    let mut m = vec![0.0; n_paths * n_nodes];
    let mut z = vec![0.0; n_paths * n_nodes];
    m.par_chunks_mut(n_nodes)
        .zip(z.par_chunks_mut(n_nodes))
        .enumerate()
        .for_each(|(p, (mrow, zrow))| {
            let w = ens.path_values(p);
            for i in 0..n_nodes {
                let remaining = horizon - nodes[i];
                if remaining <= 0.0 {
                    mrow[i] = (2.0 * alpha * g(w[i])).exp();
                    zrow[i] = dg(w[i]);
                } else {
                    let sd = remaining.sqrt();
                    let mv = gh.expect(|u| (2.0 * alpha * g(w[i] + sd * u)).exp());
                    let hv = gh.expect(|u| {
                        let x = w[i] + sd * u;
                        (2.0 * alpha * g(x)).exp() * 2.0 * alpha * dg(x)
                    });
                    mrow[i] = mv;
                    zrow[i] = hv / (2.0 * alpha * mv);
                }
            }
        });
    Ok((m, z))
}

fn regression_fit(
    alpha: f64,
    cfg: &RegressionEngine,
    ens: &BrownianEnsemble,
    e2axi: &[f64],
    records: Option<&[HittingRecord]>,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let nodes = ens.grid().nodes().to_vec();
    let n_nodes = nodes.len();
    let n_paths = ens.n_paths();

    let basis = match (&cfg.basis, records) {
        (Basis::Polynomial { degree }, Some(_)) => Basis::HittingExp { degree: *degree },
        (b, _) => b.clone(),
    };
    let dim = basis.dim();

    let state_at = |p: usize, i: usize| -> NodeState {
        let t = nodes[i];
        let w = ens.path_values(p)[i];
        match records {
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
                    hit_payload: e2axi[p],
                }
            }
            None => NodeState::markovian(t, w),
        }
    };

    let mut m = vec![0.0; n_paths * n_nodes];
    let mut z = vec![0.0; n_paths * n_nodes];
    let m0_floor = 1e-10 * (e2axi.iter().sum::<f64>() / n_paths as f64).max(1e-300);

    let mut prev_m_coeffs: Option<Vec<f64>> = None;
    let mut prev_h_coeffs: Option<Vec<f64>> = None;
    for i in 0..n_nodes {
        let states: Vec<NodeState> = (0..n_paths).map(|p| state_at(p, i)).collect();
        let rows = (0..n_paths).into_par_iter().map(|p| {
            let mut feat = [0.0; 12];
            basis.fill(&states[p], &mut feat[..dim]);
            (feat, e2axi[p], 1.0)
        });
        let m_coeffs = match weighted_least_squares(dim, cfg.ridge, rows) {
            Ok(c) => c,
            Err(_) => prev_m_coeffs
                .clone()
                .ok_or_else(|| Error::Internal("regression failed at the first node".into()))?,
        };
        // martingale-increment regression for H over [t_i, t_{i+1})
        let h_coeffs = if i + 1 < n_nodes {
            let dt = nodes[i + 1] - nodes[i];
            let mc = &m_coeffs;
            let rows = (0..n_paths).into_par_iter().map(|p| {
                let mut feat = [0.0; 12];
                basis.fill(&states[p], &mut feat[..dim]);
                let m_here = predict(&basis, mc, &states[p]).max(m0_floor);
                let dw = ens.path_values(p)[i + 1] - ens.path_values(p)[i];
                ((feat), (e2axi[p] - m_here) * dw / dt, 1.0)
            });
            match weighted_least_squares(dim, cfg.ridge, rows) {
                Ok(c) => c,
                Err(_) => prev_h_coeffs.clone().unwrap_or_else(|| vec![0.0; dim]),
            }
        } else {
            prev_h_coeffs.clone().unwrap_or_else(|| vec![0.0; dim])
        };

        for p in 0..n_paths {
            let mv = predict(&basis, &m_coeffs, &states[p]).max(m0_floor);
            let hv = predict(&basis, &h_coeffs, &states[p]);
            m[p * n_nodes + i] = mv;
            z[p * n_nodes + i] = hv / (2.0 * alpha * mv);
        }
        prev_m_coeffs = Some(m_coeffs);
        prev_h_coeffs = Some(h_coeffs);
    }
    Ok((m, z))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::paths::{build_grid, simulate_ensemble};

    #[test]
    fn gauss_hermite_moments() {
        let gh = GaussHermite::new(48);
        assert!((gh.expect(|_| 1.0) - 1.0).abs() < 1e-12);
        assert!((gh.expect(|x| x * x) - 1.0).abs() < 1e-11);
        assert!((gh.expect(|x| x.powi(4)) - 3.0).abs() < 1e-10);
        // E e^G = e^{1/2}
        assert!((gh.expect(f64::exp) - (0.5f64).exp()).abs() < 1e-10);
    }

    #[test]
    fn constant_terminal_gives_zero_solution() {
        let grid = build_grid(1.0, 10).unwrap();
        let ens = simulate_ensemble(&grid, 500, 21).unwrap();
        let terminal = TerminalSpec::markovian(|_| 0.7);
        let sol = explicit_log_solution(
            0.5,
            &terminal,
            &ens,
            &ConditionalEngine::default_regression(),
        )
        .unwrap();
        for p in &sol.paths {
            assert!(p.y.iter().all(|&y| y.abs() < 1e-9), "Y not flat: {:?}", &p.y[..3]);
            assert!(p.z.iter().all(|&z| z.abs() < 1e-9));
        }
    }

    #[test]
    fn quadrature_matches_square_endpoint_closed_form() {
        // xi_1 = W_1^2/4, alpha = 1/2: ln M_t = W^2/(2(1+t)) + ln(2/(1+t))/2,
        // Z = W/(1+t); quadrature engine must reproduce both to high accuracy.
        let grid = build_grid(1.0, 8).unwrap();
        let ens = simulate_ensemble(&grid, 64, 33).unwrap();
        let engine = ConditionalEngine::quadrature(|w| w * w / 4.0, |w| w / 2.0);
        let sol = explicit_log_solution(0.5, &TerminalSpec::SquareEndpoint { k: Some(1) }, &ens, &engine)
            .unwrap();
        let m = sol.m.as_ref().unwrap();
        for (p, path) in sol.paths.iter().enumerate() {
            for (i, &t) in path.times.iter().enumerate() {
                let w = path.w[i];
                let ln_m_ref = w * w / (2.0 * (1.0 + t)) + 0.5 * (2.0 / (1.0 + t)).ln();
                assert!(
                    (m[p][i].ln() - ln_m_ref).abs() < 1e-9,
                    "ln M mismatch at t={t}: {} vs {ln_m_ref}",
                    m[p][i].ln()
                );
                let z_ref = w / (1.0 + t);
                assert!((path.z[i] - z_ref).abs() < 1e-9, "Z mismatch at t={t}");
            }
        }
    }

    #[test]
    fn regression_engine_tracks_square_endpoint() {
        let grid = build_grid(1.0, 16).unwrap();
        let ens = simulate_ensemble(&grid, 20_000, 55).unwrap();
        let sol = explicit_log_solution(
            0.5,
            &TerminalSpec::SquareEndpoint { k: Some(1) },
            &ens,
            &ConditionalEngine::default_regression(),
        )
        .unwrap();
        // engine tolerance at a few interior nodes: Y - (W^2/(2(1+t)) - ln(1+t)/2)
        for &probe_t in &[0.25, 0.5, 0.75] {
            let i = sol.paths[0]
                .times
                .iter()
                .position(|&t| (t - probe_t).abs() < 1e-9)
                .unwrap();
            let mut err = crate::stats::Summary::new();
            for p in &sol.paths {
                let w = p.w[i];
                let y_ref = w * w / (2.0 * (1.0 + probe_t)) - 0.5 * (1.0 + probe_t).ln();
                err.push(p.y[i] - y_ref);
            }
            assert!(
                err.rms_from() < 0.02,
                "node {probe_t}: rms error {}",
                err.rms_from()
            );
        }
    }

    #[test]
    fn diverging_moment_is_rejected() {
        // xi = W_1^2/2 with alpha = 1/2: E exp(2 alpha xi) = infinity
        let grid = build_grid(1.0, 8).unwrap();
        let ens = simulate_ensemble(&grid, 60_000, 99).unwrap();
        let err = explicit_log_solution(
            0.5,
            &TerminalSpec::SquareEndpoint { k: None },
            &ens,
            &ConditionalEngine::default_regression(),
        );
        assert!(matches!(err, Err(Error::DivergingMoment(_))), "{err:?}");
    }
}
