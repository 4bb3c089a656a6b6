//! Weighted least-squares regression on per-node path features.
//!
//! Conditional expectations are realized as projections onto a small feature
//! basis, with importance weights carried by the current measure. Normal
//! equations are accumulated over fixed-size path chunks and merged in chunk
//! order, so coefficient vectors are bit-stable across thread counts.

use crate::error::{Error, Result};
use rayon::prelude::*;

/// Chunk size for deterministic parallel accumulation.
const CHUNK: usize = 8192;

/// Feature basis evaluated on per-path state at one node.
#[derive(Debug, Clone)]
pub enum Basis {
    /// 1, w, w^2, ..., w^degree in the Brownian value, scaled by sqrt(t) to
    /// keep the normal equations conditioned across nodes.
    Polynomial { degree: usize },
    /// Partition by the hit indicator: on the not-hit set a polynomial in the
    /// distance above the barrier, on the hit set an affine function of the
    /// stopped time (which spans hitting-affine terminal variables exactly).
    Hitting { degree: usize },
    /// Hit-side feature replaced by the exponential terminal itself, for
    /// projections of exp(2 alpha xi) whose hit-side value is known at t.
    HittingExp { degree: usize },
}

/// Per-path state handed to the basis at a given node.
#[derive(Debug, Clone, Copy)]
pub struct NodeState {
    pub t: f64,
    pub w: f64,
    /// Whether the path's stopping time is <= t.
    pub hit: bool,
    /// Stopped time tau ^ t (equals t when not yet hit).
    pub stopped_time: f64,
    /// Distance of w above the barrier line (not-hit side), 0 after the hit.
    pub dist: f64,
    /// Terminal payload for HittingExp (exp(2 alpha xi)).
    pub hit_payload: f64,
}

impl NodeState {
    pub fn markovian(t: f64, w: f64) -> Self {
        NodeState {
            t,
            w,
            hit: false,
            stopped_time: t,
            dist: 0.0,
            hit_payload: 0.0,
        }
    }
}

impl Basis {
    pub fn dim(&self) -> usize {
        match self {
            Basis::Polynomial { degree } => degree + 1,
            Basis::Hitting { degree } => degree + 3,
            Basis::HittingExp { degree } => degree + 2,
        }
    }

    pub fn fill(&self, s: &NodeState, out: &mut [f64]) {
        match self {
            Basis::Polynomial { degree } => {
                let scale = s.t.sqrt().max(1e-3);
                let x = s.w / scale;
                let mut p = 1.0;
                for k in 0..=*degree {
                    out[k] = p;
                    p *= x;
                }
            }
            Basis::Hitting { degree } => {
                let not = !s.hit;
                out[0] = if s.hit { 1.0 } else { 0.0 };
                out[1] = if s.hit { s.stopped_time } else { 0.0 };
                let mut p = if not { 1.0 } else { 0.0 };
                let x = s.dist / (1.0 + s.t).sqrt();
                for k in 0..=*degree {
                    out[2 + k] = p;
                    p *= x;
                }
            }
            Basis::HittingExp { degree } => {
                out[0] = if s.hit { s.hit_payload } else { 0.0 };
                let mut p = if s.hit { 0.0 } else { 1.0 };
                let x = s.dist / (1.0 + s.t).sqrt();
                for k in 0..=*degree {
                    out[1 + k] = p;
                    p *= x;
                }
            }
        }
    }
}

/// Regression configuration shared by the conditional-expectation engines.
#[derive(Debug, Clone)]
pub struct RegressionEngine {
    pub basis: Basis,
    pub ridge: f64,
    /// Nodes with fewer effective samples reuse the previous node's fit.
    pub min_node_samples: f64,
}

impl Default for RegressionEngine {
    fn default() -> Self {
        RegressionEngine {
            basis: Basis::Polynomial { degree: 4 },
            ridge: 1e-8,
            min_node_samples: 50.0,
        }
    }
}

/// Solves (X'WX + ridge I) c = X'Wy accumulated from (features, target, weight)
/// triples. Returns the coefficient vector.
pub fn weighted_least_squares(
    dim: usize,
    ridge: f64,
    rows: impl IndexedParallelIterator<Item = ([f64; 12], f64, f64)>,
) -> Result<Vec<f64>> {
    if dim > 12 {
        return Err(Error::invalid("basis dimension above the supported 12"));
    }
    struct Accum {
        xtx: Vec<f64>,
        xty: Vec<f64>,
    }
    let partials: Vec<Accum> = rows
        .chunks(CHUNK)
        .map(|chunk| {
            let mut acc = Accum {
                xtx: vec![0.0; dim * dim],
                xty: vec![0.0; dim],
            };
            for (feat, y, w) in chunk {
                for i in 0..dim {
                    let wi = w * feat[i];
                    acc.xty[i] += wi * y;
                    for j in i..dim {
                        acc.xtx[i * dim + j] += wi * feat[j];
                    }
                }
            }
            acc
        })
        .collect();

    let mut xtx = vec![0.0; dim * dim];
    let mut xty = vec![0.0; dim];
    for acc in &partials {
        for i in 0..dim * dim {
            xtx[i] += acc.xtx[i];
        }
        for i in 0..dim {
            xty[i] += acc.xty[i];
        }
    }
    for i in 0..dim {
        for j in 0..i {
            xtx[i * dim + j] = xtx[j * dim + i];
        }
    }
    let trace: f64 = (0..dim).map(|i| xtx[i * dim + i]).sum();
    let lambda = ridge * (trace / dim as f64).max(1e-300);
    for i in 0..dim {
        xtx[i * dim + i] += lambda;
    }
    solve_dense(dim, &mut xtx, &mut xty)?;
    Ok(xty)
}

/// Gaussian elimination with partial pivoting on a small dense system.
fn solve_dense(n: usize, a: &mut [f64], b: &mut [f64]) -> Result<()> {
    for col in 0..n {
        let mut piv = col;
        let mut best = a[col * n + col].abs();
        for r in col + 1..n {
            let v = a[r * n + col].abs();
            if v > best {
                best = v;
                piv = r;
            }
        }
        if best == 0.0 || !best.is_finite() {
            return Err(Error::Internal("singular normal equations".into()));
        }
        if piv != col {
            for k in 0..n {
                a.swap(col * n + k, piv * n + k);
            }
            b.swap(col, piv);
        }
        let d = a[col * n + col];
        for r in col + 1..n {
            let factor = a[r * n + col] / d;
            if factor == 0.0 {
                continue;
            }
            for k in col..n {
                a[r * n + k] -= factor * a[col * n + k];
            }
            b[r] -= factor * b[col];
        }
    }
    for col in (0..n).rev() {
        let mut s = b[col];
        for k in col + 1..n {
            s -= a[col * n + k] * b[k];
        }
        b[col] = s / a[col * n + col];
    }
    Ok(())
}

/// Evaluates a fitted coefficient vector on one state.
pub fn predict(basis: &Basis, coeffs: &[f64], s: &NodeState) -> f64 {
    let mut feat = [0.0; 12];
    basis.fill(s, &mut feat[..basis.dim()]);
    coeffs.iter().zip(feat.iter()).map(|(c, f)| c * f).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_polynomial_relationship() {
        // y = 2 + 3w - 0.5 w^2 exactly, unit weights
        let n = 4000;
        let ws: Vec<f64> = (0..n).map(|i| (i as f64 / n as f64 - 0.5) * 4.0).collect();
        let basis = Basis::Polynomial { degree: 2 };
        let states: Vec<NodeState> = ws.iter().map(|&w| NodeState::markovian(1.0, w)).collect();
        let rows: Vec<([f64; 12], f64, f64)> = states
            .iter()
            .map(|s| {
                let mut feat = [0.0; 12];
                basis.fill(s, &mut feat[..3]);
                (feat, 2.0 + 3.0 * s.w - 0.5 * s.w * s.w, 1.0)
            })
            .collect();
        let coeffs = weighted_least_squares(3, 1e-12, rows.into_par_iter()).unwrap();
        for (s, truth) in states.iter().zip(ws.iter().map(|w| 2.0 + 3.0 * w - 0.5 * w * w)) {
            let got = predict(&basis, &coeffs, s);
            assert!((got - truth).abs() < 1e-8, "{got} vs {truth}");
        }
    }

    #[test]
    fn weights_steer_the_fit() {
        // two clusters; all weight on the first forces its mean as intercept
        let rows: Vec<([f64; 12], f64, f64)> = (0..100)
            .map(|i| {
                let y = if i < 50 { 1.0 } else { 5.0 };
                let w = if i < 50 { 1.0 } else { 0.0 };
                let mut feat = [0.0; 12];
                feat[0] = 1.0;
                (feat, y, w)
            })
            .collect();
        let coeffs = weighted_least_squares(1, 0.0, rows.into_par_iter()).unwrap();
        assert!((coeffs[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn chunked_accumulation_is_deterministic() {
        let rows: Vec<([f64; 12], f64, f64)> = (0..50_000)
            .map(|i| {
                let w = ((i * 2654435761_usize) % 10_000) as f64 / 10_000.0 - 0.5;
                let mut feat = [0.0; 12];
                feat[0] = 1.0;
                feat[1] = w;
                (feat, 0.3 * w + 0.1, 1.0 + (i % 7) as f64 * 0.1)
            })
            .collect();
        let a = weighted_least_squares(2, 1e-10, rows.clone().into_par_iter()).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| weighted_least_squares(2, 1e-10, rows.into_par_iter()).unwrap());
        assert_eq!(a, b, "coefficients depend on thread count");
    }
}
