//! The hitting-time solution family: first, second and mixed solutions of the
//! quadratic BSDE with generator z^2/2 stopped at affine barriers.

use super::{PathSolution, SolutionLabel, SolutionPath, TerminalSpec};
use crate::error::{Error, Result};
use crate::paths::{
    path_rng, AffineBarrier, BarrierTracker, BrownianEnsemble, HittingRecord, StreamClass,
};
use rand::Rng;
use rayon::prelude::*;

/// Builds the stopped node arrays (times, w) for one path: grid nodes strictly
/// before tau plus the interpolated crossing itself. Crossing times from
/// bridge corrections carry the barrier value as their path value.
fn stopped_nodes(
    values: &[f64],
    nodes: &[f64],
    rec: &HittingRecord,
) -> (Vec<f64>, Vec<f64>, bool) {
    match rec.tau_value() {
        Some(tau) => {
            let mut times = Vec::new();
            let mut w = Vec::new();
            for (i, &t) in nodes.iter().enumerate() {
                if t < tau {
                    times.push(t);
                    w.push(values[i]);
                } else {
                    break;
                }
            }
            times.push(tau);
            w.push(rec.w_at_tau);
            (times, w, false)
        }
        None => (nodes.to_vec(), values.to_vec(), true),
    }
}

/// First solution: Y = 2a W_{t^tau} - 2a^2 (t^tau), Z = 2a on [0, tau].
pub fn first_solution(
    a: f64,
    b: f64,
    ens: &BrownianEnsemble,
    hitting: &[HittingRecord],
) -> Result<SolutionPath> {
    build_constant_z(a, b, ens, hitting, 2.0 * a, 0.0, SolutionLabel::First { a, b })
}

/// Second solution: Y = ln M_{t^tau} with Z = 2(b-a) when 2a > b; coincides
/// with the first solution when 2a <= b.
pub fn second_solution(
    a: f64,
    b: f64,
    ens: &BrownianEnsemble,
    hitting: &[HittingRecord],
) -> Result<SolutionPath> {
    if 2.0 * a <= b {
        let mut sol = first_solution(a, b, ens, hitting)?;
        sol.label = SolutionLabel::Second { a, b };
        return Ok(sol);
    }
    // ln M_{t^tau} = 2b - 4a + 2(b-a) W - 2(b-a)^2 t, stopped
    build_constant_z(
        a,
        b,
        ens,
        hitting,
        2.0 * (b - a),
        2.0 * b - 4.0 * a,
        SolutionLabel::Second { a, b },
    )
}

/// Shared constructor for solutions with constant Z = coef before the stop:
/// Y_t = offset + coef W_t - coef^2/2 t (the quadratic generator z^2/2 turns
/// the drift into -coef^2/2).
fn build_constant_z(
    a: f64,
    b: f64,
    ens: &BrownianEnsemble,
    hitting: &[HittingRecord],
    coef: f64,
    offset: f64,
    label: SolutionLabel,
) -> Result<SolutionPath> {
    if hitting.len() != ens.n_paths() {
        return Err(Error::GridMismatch(format!(
            "{} hitting records for {} paths",
            hitting.len(),
            ens.n_paths()
        )));
    }
    let nodes = ens.grid().nodes();
    let paths: Vec<PathSolution> = (0..ens.n_paths())
        .into_par_iter()
        .map(|p| {
            let rec = &hitting[p];
            let (times, w, truncated) = stopped_nodes(ens.path_values(p), nodes, rec);
            let y: Vec<f64> = times
                .iter()
                .zip(w.iter())
                .map(|(&t, &wv)| offset + coef * wv - 0.5 * coef * coef * t)
                .collect();
            let mut z = vec![coef; times.len()];
            if !truncated {
                *z.last_mut().unwrap() = 0.0;
            }
            let xi = match rec.tau_value() {
                Some(tau) => TerminalSpec::hitting_xi(a, b, 0.0, tau),
                None => f64::NAN,
            };
            PathSolution {
                times,
                w,
                y,
                z,
                hitting: Some(*rec),
                xi,
                truncated,
            }
        })
        .collect();
    Ok(SolutionPath {
        label,
        alpha: 0.5,
        paths,
        m: None,
        defined_from: None,
    })
}

/// Detects two nested barriers on stored paths with one shared bridge uniform
/// per interval, so the nearer line always fires first.
pub fn detect_two_barriers(
    ens: &BrownianEnsemble,
    near: AffineBarrier,
    far: AffineBarrier,
    bridge_correction: bool,
) -> Vec<(HittingRecord, HittingRecord)> {
    let nodes = ens.grid().nodes();
    (0..ens.n_paths())
        .into_par_iter()
        .map(|p| {
            let mut rng = path_rng(ens.seed(), p, StreamClass::Bridge);
            let values = ens.path_values(p);
            let mut tn = BarrierTracker::new(near);
            let mut tf = BarrierTracker::new(far);
            let mut rec_n = tn.check_start().map(|e| HittingRecord::from_event(near, &e));
            let mut rec_f = tf.check_start().map(|e| HittingRecord::from_event(far, &e));
            for i in 0..nodes.len() - 1 {
                if rec_n.is_some() && rec_f.is_some() {
                    break;
                }
                let u = if bridge_correction {
                    Some(rng.gen::<f64>())
                } else {
                    None
                };
                let (t0, t1) = (nodes[i], nodes[i + 1]);
                let (w0, w1) = (values[i], values[i + 1]);
                let mut tau_near_here: Option<f64> = None;
                if rec_n.is_none() {
                    if let Some(ev) = tn.observe(i, t0, t1, w0, w1, u) {
                        tau_near_here = Some(ev.tau);
                        rec_n = Some(HittingRecord::from_event(near, &ev));
                    }
                }
                if rec_f.is_none() {
                    if let Some(mut ev) = tf.observe(i, t0, t1, w0, w1, u) {
                        // keep crossings strictly ordered when both fire here
                        if let Some(prev) = tau_near_here {
                            if ev.tau <= prev {
                                ev.tau = 0.5 * (prev + t1);
                                ev.w_at_tau = far.line(ev.tau);
                            }
                        }
                        rec_f = Some(HittingRecord::from_event(far, &ev));
                    }
                }
            }
            (
                rec_n.unwrap_or_else(|| HittingRecord::truncated(near)),
                rec_f.unwrap_or_else(|| HittingRecord::truncated(far)),
            )
        })
        .collect()
}

/// Mixed solution of the continuum construction: Z switches from 2a to 2(1-a)
/// at rho_c and stops at rho_1; Y starts at l = d + 2ac + 2(1-a)(1-c) and the
/// terminal value is xi = 2a(1-a) rho_1 + d.
pub fn mixed_solution(
    a: f64,
    c: f64,
    d: f64,
    ens: &BrownianEnsemble,
    records: &[(HittingRecord, HittingRecord)],
) -> Result<SolutionPath> {
    if !(c > 0.0 && c < 1.0) {
        return Err(Error::invalid(format!("mixing time parameter c must lie in (0,1), got {c}")));
    }
    if records.len() != ens.n_paths() {
        return Err(Error::GridMismatch(format!(
            "{} record pairs for {} paths",
            records.len(),
            ens.n_paths()
        )));
    }
    let nodes = ens.grid().nodes();
    let l = d + 2.0 * a * c + 2.0 * (1.0 - a) * (1.0 - c);
    let z1 = 2.0 * a;
    let z2 = 2.0 * (1.0 - a);

    let paths: Vec<Result<PathSolution>> = (0..ens.n_paths())
        .into_par_iter()
        .map(|p| {
            let (rec_c, rec_1) = &records[p];
            let values = ens.path_values(p);
            match (rec_c.tau_value(), rec_1.tau_value()) {
                (Some(rho_c), Some(rho_1)) => {
                    if rho_c > rho_1 {
                        return Err(Error::Internal(format!(
                            "path {p}: rho_c = {rho_c} after rho_1 = {rho_1}"
                        )));
                    }
                    let mut times = Vec::new();
                    let mut w = Vec::new();
                    for (i, &t) in nodes.iter().enumerate() {
                        if t < rho_c {
                            times.push(t);
                            w.push(values[i]);
                        } else {
                            break;
                        }
                    }
                    times.push(rho_c);
                    w.push(rec_c.w_at_tau);
                    for (i, &t) in nodes.iter().enumerate() {
                        if t > rho_c && t < rho_1 {
                            times.push(t);
                            w.push(values[i]);
                        }
                    }
                    if rho_1 > rho_c {
                        times.push(rho_1);
                        w.push(rec_1.w_at_tau);
                    }
                    let w_rho_c = rec_c.w_at_tau;
                    let y: Vec<f64> = times
                        .iter()
                        .zip(w.iter())
                        .map(|(&t, &wv)| {
                            if t <= rho_c {
                                l + z1 * wv - 0.5 * z1 * z1 * t
                            } else {
                                l + z1 * w_rho_c - 0.5 * z1 * z1 * rho_c
                                    + z2 * (wv - w_rho_c)
                                    - 0.5 * z2 * z2 * (t - rho_c)
                            }
                        })
                        .collect();
                    let z: Vec<f64> = times
                        .iter()
                        .map(|&t| if t < rho_c { z1 } else if t < rho_1 { z2 } else { 0.0 })
                        .collect();
                    let xi = 2.0 * a * (1.0 - a) * rho_1 + d;
                    Ok(PathSolution {
                        times,
                        w,
                        y,
                        z,
                        hitting: Some(*rec_1),
                        xi,
                        truncated: false,
                    })
                }
                _ => {
                    let y: Vec<f64> = nodes
                        .iter()
                        .zip(values.iter())
                        .map(|(&t, &wv)| match rec_c.tau_value() {
                            Some(rho_c) if t > rho_c => {
                                l + z1 * rec_c.w_at_tau - 0.5 * z1 * z1 * rho_c
                                    + z2 * (wv - rec_c.w_at_tau)
                                    - 0.5 * z2 * z2 * (t - rho_c)
                            }
                            _ => l + z1 * wv - 0.5 * z1 * z1 * t,
                        })
                        .collect();
                    let z: Vec<f64> = nodes
                        .iter()
                        .map(|&t| match rec_c.tau_value() {
                            Some(rho_c) if t >= rho_c => z2,
                            _ => z1,
                        })
                        .collect();
                    Ok(PathSolution {
                        times: nodes.to_vec(),
                        w: values.to_vec(),
                        y,
                        z,
                        hitting: Some(*rec_1),
                        xi: f64::NAN,
                        truncated: true,
                    })
                }
            }
        })
        .collect();
    let paths = paths.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(SolutionPath {
        label: SolutionLabel::Mixed { a, c, d },
        alpha: 0.5,
        paths,
        m: None,
        defined_from: None,
    })
}

/// Synthetic path hitting the barrier at exactly `tau` (terminal identities
/// hold to machine precision on it): W runs linearly from 0 to b tau - 1.
pub fn synthetic_first_solution_path(a: f64, b: f64, tau: f64, n_steps: usize) -> PathSolution {
    let w_tau = b * tau - 1.0;
    let times: Vec<f64> = (0..=n_steps).map(|i| tau * i as f64 / n_steps as f64).collect();
    let w: Vec<f64> = times.iter().map(|&t| w_tau * t / tau).collect();
    let y: Vec<f64> = times
        .iter()
        .zip(w.iter())
        .map(|(&t, &wv)| 2.0 * a * wv - 2.0 * a * a * t)
        .collect();
    let mut z = vec![2.0 * a; times.len()];
    *z.last_mut().unwrap() = 0.0;
    let rec = HittingRecord {
        barrier: AffineBarrier::tau_b(b),
        tau: crate::paths::Tau::Hit(tau),
        crossing_index: Some(n_steps - 1),
        bridge_corrected: false,
        w_at_tau: w_tau,
    };
    PathSolution {
        times,
        w,
        y,
        z,
        hitting: Some(rec),
        xi: TerminalSpec::hitting_xi(a, b, 0.0, tau),
        truncated: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::paths::{build_grid, detect_hitting_ensemble, simulate_ensemble};

    fn small_setup(b: f64) -> (BrownianEnsemble, Vec<HittingRecord>) {
        let grid = build_grid(30.0, 3000).unwrap();
        let ens = simulate_ensemble(&grid, 256, 42).unwrap();
        let recs = detect_hitting_ensemble(&ens, AffineBarrier::tau_b(b), true);
        (ens, recs)
    }

    #[test]
    fn first_solution_terminal_identity() {
        let (ens, recs) = small_setup(1.0);
        let sol = first_solution(0.5, 1.0, &ens, &recs).unwrap();
        for p in sol.paths.iter().filter(|p| !p.truncated) {
            assert!(
                (p.terminal_y() - p.xi).abs() < 1e-10,
                "Y_tau = {} vs xi = {}",
                p.terminal_y(),
                p.xi
            );
        }
    }

    #[test]
    fn exact_tau_path_identity_is_machine_precision() {
        let p = synthetic_first_solution_path(0.5, 1.0, 1.0, 16);
        assert_eq!(p.terminal_y(), -0.5);
        assert_eq!(p.xi, -0.5);
        let p = synthetic_first_solution_path(1.3, 0.7, 2.3, 64);
        assert!((p.terminal_y() - p.xi).abs() < 1e-13);
    }

    #[test]
    fn degenerate_a_zero() {
        let (ens, recs) = small_setup(1.0);
        let sol = first_solution(0.0, 1.0, &ens, &recs).unwrap();
        for p in &sol.paths {
            assert!(p.y.iter().all(|&y| y == 0.0));
            assert!(p.z[..p.z.len() - 1].iter().all(|&z| z == 0.0));
            if !p.truncated {
                assert_eq!(p.xi, 0.0);
            }
        }
    }

    #[test]
    fn second_equals_first_when_2a_le_b() {
        let (ens, recs) = small_setup(1.5);
        let f = first_solution(0.5, 1.5, &ens, &recs).unwrap();
        let s = second_solution(0.5, 1.5, &ens, &recs).unwrap();
        for (pf, ps) in f.paths.iter().zip(s.paths.iter()) {
            assert_eq!(pf.y, ps.y);
            assert_eq!(pf.z, ps.z);
        }
    }

    #[test]
    fn second_solution_branch_values() {
        // a = 1, b = 1: ln M == -2 on every path, Z == 0
        let (ens, recs) = small_setup(1.0);
        let s = second_solution(1.0, 1.0, &ens, &recs).unwrap();
        for p in s.paths.iter().filter(|p| !p.truncated) {
            assert!((p.y[0] + 2.0).abs() < 1e-12, "raw ln M_0 = {}", p.y[0]);
            assert!((p.terminal_y() - p.xi).abs() < 1e-10);
            assert!(p.z[..p.z.len() - 1].iter().all(|&z| z == 0.0));
        }
        // terminal check from the formula at tau = 2
        let tau = 2.0;
        let ln_m = 2.0 - 4.0 + 0.0 * tau;
        assert_eq!(ln_m, -2.0);
        assert_eq!(TerminalSpec::hitting_xi(1.0, 1.0, 0.0, tau), -2.0);
    }

    #[test]
    fn mixed_solution_terminal_and_degeneration() {
        let grid = build_grid(40.0, 4000).unwrap();
        let ens = simulate_ensemble(&grid, 200, 77).unwrap();
        let recs = detect_two_barriers(&ens, AffineBarrier::rho_c(0.5), AffineBarrier::rho_c(1.0), true);
        for (rc, r1) in &recs {
            if let (Some(tc), Some(t1)) = (rc.tau_value(), r1.tau_value()) {
                assert!(tc <= t1, "rho_c {tc} after rho_1 {t1}");
            }
        }
        let sol = mixed_solution(0.5, 0.5, 0.0, &ens, &recs).unwrap();
        // l = d + 2ac + 2(1-a)(1-c) = 0.5 + 0.5 = 1
        for p in sol.paths.iter().filter(|p| !p.truncated) {
            assert!((p.y[0] - 1.0).abs() < 1e-12);
            assert!(
                (p.terminal_y() - p.xi).abs() < 1e-9,
                "terminal {} vs xi {}",
                p.terminal_y(),
                p.xi
            );
        }
    }

    #[test]
    fn mixed_y0_is_affine_in_c() {
        // Y_0 = l sweeps affinely between d + 2(1-a) and d + 2a
        let a = 0.7;
        let d = 0.3;
        let y0 = |c: f64| d + 2.0 * a * c + 2.0 * (1.0 - a) * (1.0 - c);
        let lo = y0(1e-9);
        let hi = y0(1.0 - 1e-9);
        assert!((lo - (d + 2.0 * (1.0 - a))).abs() < 1e-6);
        assert!((hi - (d + 2.0 * a)).abs() < 1e-6);
        let mid = y0(0.5);
        assert!((mid - 0.5 * (lo + hi)).abs() < 1e-9, "affine interpolation fails");
    }

    #[test]
    fn mixed_rejects_bad_c() {
        let grid = build_grid(2.0, 10).unwrap();
        let ens = simulate_ensemble(&grid, 2, 1).unwrap();
        let recs = detect_two_barriers(&ens, AffineBarrier::rho_c(0.5), AffineBarrier::rho_c(1.0), true);
        assert!(mixed_solution(0.5, 1.5, 0.0, &ens, &recs).is_err());
    }
}
