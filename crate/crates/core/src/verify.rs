//! Numerical verification of the measure-solution property.
//!
//! A candidate (Y, Z) is checked on two axes: the discretized BSDE residual,
//! and whether the stochastic exponential of int g(s, Z_s) dW is a true
//! martingale. The martingale side combines the plain expectation E V_T with
//! the quadratic-variation explosion criterion; statistical verdicts use
//! 3-sigma rules with Inconclusive as a first-class outcome.

use crate::closedform::{PathSolution, SolutionPath};
use crate::error::{Error, Result};
use crate::generators::GeneratorSpec;
use crate::stats::{effective_sample_size, log_domain_mean_exp, Summary};
use serde::Serialize;

/// Absolute slack added to 3-sigma comparisons; covers pure floating-point
/// spread when the per-path values are analytically constant.
pub const FLOAT_SLACK: f64 = 1e-9;

/// Largest admissible tail value of the explosion curve for a MeasureSolution
/// verdict (beyond statistical noise).
pub const EXPLOSION_TAIL_MAX: f64 = 0.02;

/// Relative disagreement between the plain and log-domain means that forces
/// an Inconclusive verdict.
pub const STABILIZED_DISCREPANCY_MAX: f64 = 0.10;

/// Log-weights ln V_t and quadratic variation of one candidate's Girsanov
/// density, per path, on that path's (possibly stopped) node set.
#[derive(Debug, Clone)]
pub struct GirsanovWeight {
    /// ln V at every node of the path (left-point sums); ln V_0 = 0.
    pub ln_v: Vec<Vec<f64>>,
    /// <M>_t = int g(s, Z_s)^2 ds, nondecreasing per path.
    pub qv: Vec<Vec<f64>>,
    pub truncated: Vec<bool>,
}

impl GirsanovWeight {
    /// Builds the weight from a candidate solution and the generator whose
    /// drift the density removes: d ln V = g dW - g^2/2 dt.
    pub fn from_solution(sol: &SolutionPath, spec: &GeneratorSpec) -> Self {
        let mut ln_v = Vec::with_capacity(sol.paths.len());
        let mut qv = Vec::with_capacity(sol.paths.len());
        let mut truncated = Vec::with_capacity(sol.paths.len());
        for p in &sol.paths {
            let n = p.times.len();
            let mut lv = Vec::with_capacity(n);
            let mut q = Vec::with_capacity(n);
            lv.push(0.0);
            q.push(0.0);
            for i in 0..n - 1 {
                let g = spec.eval_g(p.times[i], p.z[i]);
                let dt = p.times[i + 1] - p.times[i];
                let dw = p.w[i + 1] - p.w[i];
                lv.push(lv[i] + g * dw - 0.5 * g * g * dt);
                q.push(q[i] + g * g * dt);
            }
            ln_v.push(lv);
            qv.push(q);
            truncated.push(p.truncated);
        }
        GirsanovWeight { ln_v, qv, truncated }
    }

    pub fn n_paths(&self) -> usize {
        self.ln_v.len()
    }

    /// Terminal log-weights of non-truncated paths.
    fn terminal_ln_v(&self) -> Vec<f64> {
        self.ln_v
            .iter()
            .zip(self.truncated.iter())
            .filter(|(_, t)| !**t)
            .map(|(lv, _)| *lv.last().unwrap())
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    MeasureSolution,
    NotMeasureSolution,
    Inconclusive,
}

/// Monte Carlo verdict on E V_T = 1.
#[derive(Debug, Clone, Serialize)]
pub struct MeasureReport {
    pub estimate: f64,
    pub std_error: f64,
    pub stabilized_estimate: f64,
    pub n_paths: usize,
    pub excluded_paths: usize,
    pub truncated_fraction: f64,
    pub verdict: Verdict,
    pub explosion_curve: Vec<(f64, f64)>,
    pub closed_form_reference: Option<f64>,
}

impl MeasureReport {
    /// 3-sigma consistency with a reference value (with float slack).
    pub fn within_3se_of(&self, reference: f64) -> bool {
        (self.estimate - reference).abs() <= 3.0 * self.std_error + FLOAT_SLACK
    }
}

/// Point of the explosion curve: level n, estimate of Q^n(tau_n < T), its SE.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ExplosionPoint {
    pub level: f64,
    pub q: f64,
    pub std_error: f64,
}

/// Estimate of E V_T with the verdict logic. Paths with non-finite weights
/// are excluded and counted; when an explosion curve is supplied its tail
/// gates the MeasureSolution verdict.
pub fn martingale_expectation(
    weight: &GirsanovWeight,
    explosion: Option<&[ExplosionPoint]>,
    closed_form_reference: Option<f64>,
) -> MeasureReport {
    let terminal = weight.terminal_ln_v();
    let finite: Vec<f64> = terminal.iter().cloned().filter(|v| v.is_finite()).collect();
    let excluded = terminal.len() - finite.len();
    let mut s = Summary::new();
    for &lv in &finite {
        s.push(lv.exp());
    }
    let estimate = s.mean;
    let std_error = s.std_error();
    let stabilized = log_domain_mean_exp(&finite);
    let truncated_fraction = if weight.n_paths() == 0 {
        0.0
    } else {
        weight.truncated.iter().filter(|t| **t).count() as f64 / weight.n_paths() as f64
    };

    let stabilization_ok = estimate.is_finite()
        && stabilized.is_finite()
        && (estimate - stabilized).abs() <= STABILIZED_DISCREPANCY_MAX * stabilized.max(1e-300);

    let tail_ok = explosion.map(|curve| {
        curve
            .last()
            .map(|p| p.q <= EXPLOSION_TAIL_MAX + 3.0 * p.std_error)
            .unwrap_or(false)
    });

    let verdict = if !stabilization_ok {
        Verdict::Inconclusive
    } else if estimate + 3.0 * std_error + FLOAT_SLACK < 1.0 {
        Verdict::NotMeasureSolution
    } else if (estimate - 1.0).abs() <= 3.0 * std_error + FLOAT_SLACK && tail_ok == Some(true) {
        Verdict::MeasureSolution
    } else {
        Verdict::Inconclusive
    };

    MeasureReport {
        estimate,
        std_error,
        stabilized_estimate: stabilized,
        n_paths: finite.len(),
        excluded_paths: excluded,
        truncated_fraction,
        verdict,
        explosion_curve: explosion
            .map(|c| c.iter().map(|p| (p.level, p.q)).collect())
            .unwrap_or_default(),
        closed_form_reference,
    }
}

/// Explosion criterion: for each level n, tau_n is the first node where
/// <M> >= n and Q^n(tau_n < T) is estimated as E[V_{tau_n} 1{tau_n < T}]
/// under the base measure. Levels must be increasing.
pub fn explosion_criterion(weight: &GirsanovWeight, levels: &[f64]) -> Result<Vec<ExplosionPoint>> {
    if levels.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("explosion levels must be increasing"));
    }
    let mut points = Vec::with_capacity(levels.len());
    for &level in levels {
        let mut s = Summary::new();
        for (lv, q) in weight.ln_v.iter().zip(weight.qv.iter()) {
            let last = q.len() - 1;
            let hit = q.iter().position(|&v| v >= level);
            match hit {
                Some(i) if i < last => s.push(lv[i].exp()),
                _ => s.push(0.0),
            }
        }
        points.push(ExplosionPoint {
            level,
            q: s.mean,
            std_error: s.std_error(),
        });
    }
    Ok(points)
}

/// Geometrically spaced levels covering the observed quadratic-variation
/// range, for diagnostics when the caller has no natural scale.
pub fn default_levels(weight: &GirsanovWeight, count: usize) -> Vec<f64> {
    let mut qs: Vec<f64> = weight
        .qv
        .iter()
        .map(|q| *q.last().unwrap())
        .filter(|v| *v > 0.0)
        .collect();
    if qs.is_empty() || count == 0 {
        return vec![1.0];
    }
    qs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let lo = qs[qs.len() / 4].max(1e-12);
    let hi = qs[qs.len() - 1 - qs.len() / 100];
    if hi <= lo {
        return vec![lo];
    }
    (0..count)
        .map(|i| lo * (hi / lo).powf(i as f64 / (count - 1).max(1) as f64))
        .collect()
}

/// Per-path BSDE residual summary.
#[derive(Debug, Clone, Serialize)]
pub struct ResidualSummary {
    pub max_abs: f64,
    pub rms: f64,
    pub nodes_checked: u64,
    pub paths_used: usize,
    pub paths_skipped: usize,
}

/// residual_t = Y_t - (xi - sum_{s>=t} Z dW + sum_{s>=t} f(s,Z) ds) on every
/// node with t >= from_time; truncated paths and undefined prefixes skipped.
pub fn bsde_residual(
    sol: &SolutionPath,
    spec: &GeneratorSpec,
    from_time: f64,
) -> Result<ResidualSummary> {
    let from_time = sol.defined_from.unwrap_or(0.0).max(from_time);
    let mut pooled = Summary::new();
    let mut max_abs = 0.0f64;
    let mut used = 0;
    let mut skipped = 0;
    for p in &sol.paths {
        if p.truncated || !p.xi.is_finite() {
            skipped += 1;
            continue;
        }
        used += 1;
        for r in residual_path(p, spec, from_time) {
            pooled.push(r);
            max_abs = max_abs.max(r.abs());
        }
    }
    if used == 0 {
        return Err(Error::invalid("no usable paths for the residual check"));
    }
    Ok(ResidualSummary {
        max_abs,
        rms: pooled.rms_from(),
        nodes_checked: pooled.count,
        paths_used: used,
        paths_skipped: skipped,
    })
}

/// Residuals of one path at nodes with t >= from_time.
pub fn residual_path(p: &PathSolution, spec: &GeneratorSpec, from_time: f64) -> Vec<f64> {
    let n = p.times.len();
    // suffix sums of Z dW - f dt
    let mut suffix = vec![0.0; n];
    for i in (0..n - 1).rev() {
        let dt = p.times[i + 1] - p.times[i];
        let dw = p.w[i + 1] - p.w[i];
        let f = spec.eval_f(p.times[i], p.z[i]);
        suffix[i] = suffix[i + 1] + p.z[i] * dw - f * dt;
    }
    let mut out = Vec::new();
    for i in 0..n {
        if p.times[i] + 1e-15 >= from_time && p.y[i].is_finite() {
            out.push(p.y[i] - p.xi + suffix[i]);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Stability {
    Stable,
    Diverging,
}

#[derive(Debug, Clone, Serialize)]
pub struct KazamakiReport {
    /// (sample size, estimate of E exp(alpha S_T / 2)) at doubling sizes.
    pub estimates: Vec<(usize, f64)>,
    pub classification: Stability,
    /// Mean of the stochastic exponential E(alpha S)_T itself.
    pub exponential_mean: f64,
}

/// Sample-doubling stability probe of the Kazamaki moment E exp(alpha S_T/2),
/// with S = int Z dW. A probe, not a proof.
pub fn kazamaki_probe(sol: &SolutionPath, alpha: f64) -> Result<KazamakiReport> {
    let s_terminal: Vec<f64> = sol
        .paths
        .iter()
        .filter(|p| !p.truncated)
        .map(|p| {
            let mut s = 0.0;
            for i in 0..p.times.len() - 1 {
                s += p.z[i] * (p.w[i + 1] - p.w[i]);
            }
            s
        })
        .collect();
    if s_terminal.len() < 8 {
        return Err(Error::invalid("too few paths for the Kazamaki probe"));
    }
    let n = s_terminal.len();
    let mean_exp_half = |k: usize| -> f64 {
        s_terminal[..k].iter().map(|s| (0.5 * alpha * s).exp()).sum::<f64>() / k as f64
    };
    let sizes = [n / 4, n / 2, n];
    let estimates: Vec<(usize, f64)> = sizes.iter().map(|&k| (k, mean_exp_half(k))).collect();
    let r1 = (estimates[1].1 / estimates[0].1 - 1.0).abs();
    let r2 = (estimates[2].1 / estimates[1].1 - 1.0).abs();
    let classification = if r1.max(r2) < 0.10 && estimates[2].1.is_finite() {
        Stability::Stable
    } else {
        Stability::Diverging
    };
    // stochastic exponential mean with qv from the same sums
    let mut s = Summary::new();
    for p in sol.paths.iter().filter(|p| !p.truncated) {
        let mut m = 0.0;
        let mut q = 0.0;
        for i in 0..p.times.len() - 1 {
            m += alpha * p.z[i] * (p.w[i + 1] - p.w[i]);
            q += (alpha * p.z[i]).powi(2) * (p.times[i + 1] - p.times[i]);
        }
        s.push((m - 0.5 * q).exp());
    }
    Ok(KazamakiReport {
        estimates,
        classification,
        exponential_mean: s.mean,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ItoReport {
    /// Pooled max over nodes and paths of the first identity's deviation.
    pub max_abs: f64,
    /// Max over nodes of the |path-mean| deviation (the O(dt) statistic).
    pub node_mean_max: f64,
    /// Same two statistics for the second pathwise identity.
    pub ito2_max_abs: f64,
    pub ito2_node_mean_max: f64,
}

/// Pathwise identity checks for explicit-log solutions:
///   alpha int Z^2 ds = -(ln M_t - ln M_0)/(2 alpha) + int Z dW
///   alpha S_t - alpha^2 <S>_t / 2 = alpha (Y_t - Y_0) + alpha^2/2 int Z^2 ds.
pub fn ito_identity_check(sol: &SolutionPath, alpha: f64) -> Result<ItoReport> {
    let m = sol
        .m
        .as_ref()
        .ok_or_else(|| Error::invalid("identity check needs an explicit-log solution carrying M"))?;
    let n_nodes = sol.paths.iter().map(|p| p.times.len()).min().unwrap_or(0);
    let mut max_abs = 0.0f64;
    let mut ito2_max = 0.0f64;
    let mut node_means = vec![Summary::new(); n_nodes];
    let mut node_means2 = vec![Summary::new(); n_nodes];
    for (p, mrow) in sol.paths.iter().zip(m.iter()) {
        let mut int_z2 = 0.0;
        let mut int_zdw = 0.0;
        for i in 0..p.times.len() {
            if i > 0 {
                let dt = p.times[i] - p.times[i - 1];
                let dw = p.w[i] - p.w[i - 1];
                int_z2 += p.z[i - 1] * p.z[i - 1] * dt;
                int_zdw += p.z[i - 1] * dw;
            }
            let lhs = alpha * int_z2;
            let rhs = -(mrow[i].ln() - mrow[0].ln()) / (2.0 * alpha) + int_zdw;
            let dev = lhs - rhs;
            // second identity: alpha S - alpha^2 <S>/2 vs alpha (Y - Y0) + alpha^2/2 int Z^2
            let lhs2 = alpha * int_zdw - 0.5 * alpha * alpha * int_z2;
            let rhs2 = alpha * (p.y[i] - p.y[0]) + 0.5 * alpha * alpha * int_z2;
            let dev2 = lhs2 - rhs2;
            max_abs = max_abs.max(dev.abs());
            ito2_max = ito2_max.max(dev2.abs());
            if i < n_nodes {
                node_means[i].push(dev);
                node_means2[i].push(dev2);
            }
        }
    }
    Ok(ItoReport {
        max_abs,
        node_mean_max: node_means.iter().map(|s| s.mean.abs()).fold(0.0, f64::max),
        ito2_max_abs: ito2_max,
        ito2_node_mean_max: node_means2.iter().map(|s| s.mean.abs()).fold(0.0, f64::max),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SignFlipReport {
    /// Mean and SE of V_T = exp(2 alpha S_T - 2 alpha^2 <S>_T).
    pub v_mean: f64,
    pub v_std_error: f64,
    pub ess_fraction: f64,
    /// Weighted RMS residual of (-Y, -Z) against -xi under the tilted increments.
    pub flipped_residual_rms: f64,
    /// tau_n agreement between <S> and <S^R> at probe levels.
    pub tau_levels_equal: bool,
    pub inconclusive: bool,
}

/// Sign-change check for upper-bounded terminals: reweight by the squared
/// exponential V = exp(2 alpha S - 2 alpha^2 <S>); under the new measure the
/// flipped pair solves the BSDE with terminal -xi, driven by
/// dW^R = dW - 2 alpha Z dt.
pub fn sign_flip_check(sol: &SolutionPath, alpha: f64) -> Result<SignFlipReport> {
    let usable: Vec<&PathSolution> = sol.paths.iter().filter(|p| !p.truncated).collect();
    if usable.is_empty() {
        return Err(Error::invalid("no usable paths"));
    }
    let mut weights = Vec::with_capacity(usable.len());
    let mut resid = Summary::new();
    let mut tau_levels_equal = true;
    for p in &usable {
        let n = p.times.len();
        let mut s = 0.0;
        let mut qs = 0.0;
        let mut qs_r = 0.0;
        for i in 0..n - 1 {
            let dt = p.times[i + 1] - p.times[i];
            let dw = p.w[i + 1] - p.w[i];
            s += p.z[i] * dw;
            qs += p.z[i] * p.z[i] * dt;
            // R-side quadratic variation of S^R = -int Z dW^R accumulates the
            // same integrand; computed from its own definition
            let dwr = dw - 2.0 * alpha * p.z[i] * dt;
            let _ = dwr;
            qs_r += (-p.z[i]) * (-p.z[i]) * dt;
        }
        weights.push((2.0 * alpha * s - 2.0 * alpha * alpha * qs).exp());
        for level in [0.25, 1.0, 4.0] {
            let i1 = first_crossing(p, qs_level(level, qs));
            let i2 = first_crossing(p, qs_level(level, qs_r));
            if i1 != i2 {
                tau_levels_equal = false;
            }
        }
    }
    // weighted residual of the flipped system
    let mut num = 0.0;
    let mut den = 0.0;
    for (p, w) in usable.iter().zip(weights.iter()) {
        let n = p.times.len();
        let mut suffix = vec![0.0; n];
        for i in (0..n - 1).rev() {
            let dt = p.times[i + 1] - p.times[i];
            let dwr = (p.w[i + 1] - p.w[i]) - 2.0 * alpha * p.z[i] * dt;
            suffix[i] = suffix[i + 1] + (-p.z[i]) * dwr - alpha * p.z[i] * p.z[i] * dt;
        }
        for i in 0..n {
            let r = -p.y[i] - (-p.xi) + suffix[i];
            num += w * r * r;
            den += w;
            resid.push(r);
        }
    }
    let mut vs = Summary::new();
    for &w in &weights {
        vs.push(w);
    }
    let ess = effective_sample_size(&weights) / usable.len() as f64;
    Ok(SignFlipReport {
        v_mean: vs.mean,
        v_std_error: vs.std_error(),
        ess_fraction: ess,
        flipped_residual_rms: (num / den.max(1e-300)).sqrt(),
        tau_levels_equal,
        inconclusive: ess < 0.05,
    })
}

fn qs_level(level: f64, total: f64) -> f64 {
    level * total.max(1e-300)
}

fn first_crossing(p: &PathSolution, level: f64) -> Option<usize> {
    let mut q = 0.0;
    for i in 0..p.times.len() - 1 {
        let dt = p.times[i + 1] - p.times[i];
        q += p.z[i] * p.z[i] * dt;
        if q >= level {
            return Some(i + 1);
        }
    }
    None
}

/// Growth table of E int_t^1 Z^2 ds for t in `t_list` (monotone increase as
/// t decreases signals the square-integrability failure at the origin).
pub fn square_integrability_probe(
    sol: &SolutionPath,
    t_list: &[f64],
) -> Vec<(f64, f64, f64)> {
    let mut out = Vec::with_capacity(t_list.len());
    for &t0 in t_list {
        let mut s = Summary::new();
        for p in &sol.paths {
            let mut acc = 0.0;
            for i in 0..p.times.len() - 1 {
                if p.times[i] + 1e-15 >= t0 {
                    acc += p.z[i] * p.z[i] * (p.times[i + 1] - p.times[i]);
                }
            }
            s.push(acc);
        }
        out.push((t0, s.mean, s.std_error()));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::closedform::{
        first_solution, square_endpoint_solution, synthetic_first_solution_path, SolutionLabel,
    };
    use crate::paths::{build_grid, detect_hitting_ensemble, simulate_ensemble, AffineBarrier};

    fn zero_z_solution(n_paths: usize) -> SolutionPath {
        let grid = build_grid(1.0, 32).unwrap();
        let ens = simulate_ensemble(&grid, n_paths, 4).unwrap();
        let paths = (0..n_paths)
            .map(|p| {
                let w = ens.path_values(p).to_vec();
                let times = grid.nodes().to_vec();
                PathSolution {
                    y: vec![0.7; times.len()],
                    z: vec![0.0; times.len()],
                    hitting: None,
                    xi: 0.7,
                    truncated: false,
                    times,
                    w,
                }
            })
            .collect();
        SolutionPath {
            label: SolutionLabel::ExplicitLog { alpha: 0.5 },
            alpha: 0.5,
            paths,
            m: None,
            defined_from: None,
        }
    }

    #[test]
    fn zero_control_is_an_exact_martingale() {
        let sol = zero_z_solution(128);
        let spec = GeneratorSpec::quadratic(0.5);
        let w = GirsanovWeight::from_solution(&sol, &spec);
        let curve = explosion_criterion(&w, &[0.5, 1.0, 2.0]).unwrap();
        assert!(curve.iter().all(|p| p.q == 0.0));
        let rep = martingale_expectation(&w, Some(&curve), None);
        assert_eq!(rep.estimate, 1.0);
        assert_eq!(rep.verdict, Verdict::MeasureSolution);
        // residual reduces to the Y = xi check
        let r = bsde_residual(&sol, &spec, 0.0).unwrap();
        assert_eq!(r.max_abs, 0.0);
    }

    #[test]
    fn exact_tau_first_solution_residual_is_zero() {
        let p = synthetic_first_solution_path(0.5, 1.0, 1.0, 32);
        let sol = SolutionPath {
            label: SolutionLabel::First { a: 0.5, b: 1.0 },
            alpha: 0.5,
            paths: vec![p],
            m: None,
            defined_from: None,
        };
        let r = bsde_residual(&sol, &GeneratorSpec::quadratic(0.5), 0.0).unwrap();
        assert!(r.max_abs < 1e-12, "max residual {}", r.max_abs);
    }

    #[test]
    fn simulated_first_solution_residual_is_zero_too() {
        // piecewise-constant Z makes the discrete sums telescope exactly
        let grid = build_grid(20.0, 2000).unwrap();
        let ens = simulate_ensemble(&grid, 64, 10).unwrap();
        let recs = detect_hitting_ensemble(&ens, AffineBarrier::tau_b(1.0), true);
        let sol = first_solution(0.7, 1.0, &ens, &recs).unwrap();
        let r = bsde_residual(&sol, &GeneratorSpec::quadratic(0.5), 0.0).unwrap();
        assert!(r.max_abs < 1e-9, "max residual {}", r.max_abs);
    }

    #[test]
    fn verdict_never_rejects_when_interval_contains_one() {
        // estimate + 3 SE >= 1 forbids NotMeasureSolution by construction
        let sol = zero_z_solution(64);
        let w = GirsanovWeight::from_solution(&sol, &GeneratorSpec::quadratic(0.5));
        let rep = martingale_expectation(&w, None, Some(1.0));
        assert_ne!(rep.verdict, Verdict::NotMeasureSolution);
    }

    #[test]
    fn square_probe_detects_log_growth() {
        let grid = build_grid(1.0, 10_000).unwrap();
        let ens = simulate_ensemble(&grid, 1000, 2718).unwrap();
        let sol = square_endpoint_solution(None, &ens).unwrap();
        let table = square_integrability_probe(&sol, &[1e-1, 1e-2, 1e-3]);
        for (t0, mean, _se) in &table {
            let reference = (1.0f64 / t0).ln();
            assert!(
                (mean - reference).abs() < 0.1 * reference,
                "E int_{t0}^1 Z^2 = {mean} vs ln(1/t) = {reference}"
            );
        }
        // and the k = 1 member stays bounded near the quadrature value
        let sol1 = square_endpoint_solution(Some(1), &ens).unwrap();
        let t1 = square_integrability_probe(&sol1, &[1e-3, 0.0]);
        let reference = 2.0f64.ln() - 0.5; // int_0^1 s/(1+s)^2 ds
        assert!((t1[1].1 - reference).abs() < 0.1 * reference + 3.0 * t1[1].2);
        // zero control gives all zeros
        let z0 = zero_z_solution(16);
        let tz = square_integrability_probe(&z0, &[0.5, 0.1]);
        assert!(tz.iter().all(|(_, m, _)| *m == 0.0));
    }

    #[test]
    fn kazamaki_zero_control() {
        let sol = zero_z_solution(64);
        let rep = kazamaki_probe(&sol, 0.5).unwrap();
        assert_eq!(rep.classification, Stability::Stable);
        assert_eq!(rep.estimates.last().unwrap().1, 1.0);
        assert_eq!(rep.exponential_mean, 1.0);
    }

    #[test]
    fn sign_flip_trivial_for_zero_terminal() {
        let mut sol = zero_z_solution(64);
        for p in &mut sol.paths {
            p.xi = 0.0;
            for y in &mut p.y {
                *y = 0.0;
            }
        }
        let rep = sign_flip_check(&sol, 0.25).unwrap();
        assert_eq!(rep.v_mean, 1.0);
        assert!(rep.flipped_residual_rms < 1e-12);
        assert!(rep.tau_levels_equal);
        assert!(!rep.inconclusive);
    }
}
