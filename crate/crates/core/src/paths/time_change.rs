//! Deterministic time change mapping random-horizon solutions to horizon 1.
//!
//! rho(t) = t/(1+t) compresses [0, inf) onto [0, 1); its inverse is
//! t/(1-t) and the integrand scaling is h(t) = 1/(1-t). A solution (Y, Z)
//! of the random-horizon equation becomes (y_t, z_t) =
//! (Y_{rho^{-1}(t)}, h(t) Z_{rho^{-1}(t)}) driven by the time-changed
//! Brownian motion w~_t = int h^{-1}(s) dW_{rho^{-1}(s)}.

use crate::error::{Error, Result};

pub fn time_scale(t: f64) -> f64 {
    t / (1.0 + t)
}

pub fn time_scale_inverse(t: f64) -> f64 {
    t / (1.0 - t)
}

pub fn inverse_time_scale(t: f64) -> f64 {
    1.0 / (1.0 - t)
}

/// One path of a time-changed solution on a horizon-1 grid.
///
/// Nodes run over the uniform grid up to the mapped stopping time
/// `hat_tau = rho(tau)`, with `hat_tau` itself appended as the final node so
/// terminal identities can be checked exactly. `w_tilde` carries the
/// time-changed Brownian motion evaluated at the same nodes.
#[derive(Debug, Clone)]
pub struct TimeChangedPath {
    pub times: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    pub w_tilde: Vec<f64>,
    pub hat_tau: f64,
    pub hat_xi: f64,
}

/// Applies the time change to one stopped path.
///
/// `times`/`y`/`z`/`w` describe the original solution up to `tau` (the last
/// entry of `times` must be `tau`); `n_out` controls the output resolution.
pub fn time_change_path(
    times: &[f64],
    y: &[f64],
    z: &[f64],
    w: &[f64],
    tau: f64,
    xi: f64,
    n_out: usize,
) -> Result<TimeChangedPath> {
    if !(tau.is_finite() && tau >= 0.0) {
        return Err(Error::invalid("time change requires a finite stopping time"));
    }
    if times.len() < 2 || times.len() != y.len() || y.len() != z.len() || z.len() != w.len() {
        return Err(Error::GridMismatch(format!(
            "inconsistent path arrays: {} times, {} y, {} z, {} w",
            times.len(),
            y.len(),
            z.len(),
            w.len()
        )));
    }
    if n_out < 2 {
        return Err(Error::invalid("n_out must be at least 2"));
    }
    let hat_tau = time_scale(tau);

    // w~ at original nodes: left-point sums of h^{-1}(rho(t_j)) dW = dW/(1+t_j)
    let mut w_tilde_orig = Vec::with_capacity(times.len());
    w_tilde_orig.push(0.0);
    for j in 1..times.len() {
        let dw = w[j] - w[j - 1];
        let prev = *w_tilde_orig.last().unwrap();
        w_tilde_orig.push(prev + dw / (1.0 + times[j - 1]));
    }

    let interp = |xs: &[f64], s: f64| -> f64 {
        // linear interpolation in original time
        match times.binary_search_by(|t| t.partial_cmp(&s).unwrap()) {
            Ok(j) => xs[j],
            Err(j) => {
                if j == 0 {
                    xs[0]
                } else if j >= times.len() {
                    *xs.last().unwrap()
                } else {
                    let t0 = times[j - 1];
                    let t1 = times[j];
                    let a = (s - t0) / (t1 - t0);
                    xs[j - 1] * (1.0 - a) + xs[j] * a
                }
            }
        }
    };
    let left_value = |xs: &[f64], s: f64| -> f64 {
        match times.binary_search_by(|t| t.partial_cmp(&s).unwrap()) {
            Ok(j) => xs[j],
            Err(j) => xs[j.saturating_sub(1).min(xs.len() - 1)],
        }
    };

    let mut out_times = Vec::new();
    for i in 0..n_out {
        let t = i as f64 / (n_out - 1) as f64;
        if t < hat_tau {
            out_times.push(t);
        } else {
            break;
        }
    }
    out_times.push(hat_tau);

    let mut out = TimeChangedPath {
        times: out_times,
        y: Vec::new(),
        z: Vec::new(),
        w_tilde: Vec::new(),
        hat_tau,
        hat_xi: xi,
    };
    for &t_hat in &out.times {
        let s = if t_hat >= hat_tau { tau } else { time_scale_inverse(t_hat) };
        out.y.push(interp(y, s));
        out.z.push(inverse_time_scale(t_hat.min(hat_tau)) * left_value(z, s));
        out.w_tilde.push(interp(&w_tilde_orig, s));
    }
    // exact terminal alignment: y at hat_tau is Y_tau
    let last = out.y.len() - 1;
    out.y[last] = y[y.len() - 1];
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scale_pair_inverts() {
        assert!((time_scale(time_scale_inverse(0.4)) - 0.4).abs() < 1e-15);
        assert!((time_scale(3.0) - 0.75).abs() < 1e-15);
        for k in 1..20 {
            let t = k as f64 / 21.0;
            assert!((time_scale(time_scale_inverse(t)) - t).abs() < 4.0 * f64::EPSILON);
        }
    }

    #[test]
    fn terminal_value_is_preserved() {
        let times = [0.0, 0.5, 1.0, 1.5, 2.0];
        let y = [0.0, 0.2, 0.1, -0.3, 0.7];
        let z = [1.0, 1.0, 1.0, 1.0, 0.0];
        let w = [0.0, 0.3, -0.1, 0.2, 0.5];
        let tc = time_change_path(&times, &y, &z, &w, 2.0, 0.7, 9).unwrap();
        assert!((tc.hat_tau - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(*tc.y.last().unwrap(), 0.7);
        assert_eq!(tc.w_tilde[0], 0.0);
    }

    #[test]
    fn rejects_infinite_tau() {
        let times = [0.0, 1.0];
        let arr = [0.0, 1.0];
        assert!(time_change_path(&times, &arr, &arr, &arr, f64::INFINITY, 0.0, 4).is_err());
    }
}
