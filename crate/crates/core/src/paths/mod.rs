//! Time grids, Brownian ensembles and hitting-time machinery.
//!
//! Increments are drawn from counter-based per-path substreams, so a given
//! (seed, grid, n_paths) triple reproduces a bit-identical ensemble no matter
//! how many worker threads are used.

mod barrier;
mod time_change;
mod walk;

pub use barrier::{AffineBarrier, BarrierTracker, CrossEvent, HittingRecord, Tau};
pub use time_change::{inverse_time_scale, time_change_path, time_scale, time_scale_inverse, TimeChangedPath};
pub use walk::{walk_hitting, HittingWalkConfig, NoObserver, StepObserver, WalkOutcome};

use crate::error::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

/// Discretization of [0, horizon].
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    nodes: Vec<f64>,
}

impl TimeGrid {
    /// Builds a grid from explicit nodes; enforces t_0 = 0, strict increase, N >= 1.
    pub fn from_nodes(nodes: Vec<f64>) -> Result<Self> {
        if nodes.len() < 2 {
            return Err(Error::invalid("grid needs at least two nodes"));
        }
        if nodes[0] != 0.0 {
            return Err(Error::invalid("grid must start at t = 0"));
        }
        if nodes.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("grid nodes must be strictly increasing"));
        }
        Ok(TimeGrid { nodes })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn horizon(&self) -> f64 {
        *self.nodes.last().unwrap()
    }

    pub fn n_steps(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn dt(&self, i: usize) -> f64 {
        self.nodes[i + 1] - self.nodes[i]
    }
}

/// Uniform grid with spacing horizon / n_steps.
pub fn build_grid(horizon: f64, n_steps: usize) -> Result<TimeGrid> {
    if !(horizon > 0.0) {
        return Err(Error::invalid(format!("horizon must be positive, got {horizon}")));
    }
    if n_steps == 0 {
        return Err(Error::invalid("n_steps must be at least 1"));
    }
    let mut nodes: Vec<f64> = (0..=n_steps)
        .map(|i| i as f64 * horizon / n_steps as f64)
        .collect();
    // force the endpoint so horizon round-trips exactly
    nodes[n_steps] = horizon;
    TimeGrid::from_nodes(nodes)
}

/// Stream classes keep the increment draws independent of any auxiliary draws
/// (bridge uniforms, engine extras) on the same path.
#[derive(Debug, Clone, Copy)]
pub enum StreamClass {
    Increments = 0,
    Bridge = 1,
    Aux = 2,
}

/// Counter-based RNG for one path substream.
pub fn path_rng(seed: u64, path: usize, class: StreamClass) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((class as u64) << 56) ^ path as u64);
    rng
}

/// Ensemble of discretized Brownian paths on a common grid.
#[derive(Debug, Clone)]
pub struct BrownianEnsemble {
    grid: TimeGrid,
    n_paths: usize,
    seed: u64,
    /// Row-major: increments[path * n_steps + i] = W(t_{i+1}) - W(t_i).
    increments: Vec<f64>,
    /// Row-major: values[path * (n_steps + 1) + i] = W(t_i); prefix sums of increments.
    values: Vec<f64>,
}

impl BrownianEnsemble {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn path_values(&self, path: usize) -> &[f64] {
        let n = self.grid.n_nodes();
        &self.values[path * n..(path + 1) * n]
    }

    pub fn path_increments(&self, path: usize) -> &[f64] {
        let n = self.grid.n_steps();
        &self.increments[path * n..(path + 1) * n]
    }

    /// Coarsens the ensemble by keeping every `factor`-th node. Increments are
    /// summed, so the coarse ensemble rides the same Brownian paths (common
    /// random numbers across grid refinements).
    pub fn coarsen(&self, factor: usize) -> Result<BrownianEnsemble> {
        let steps = self.grid.n_steps();
        if factor == 0 || steps % factor != 0 {
            return Err(Error::invalid(format!(
                "coarsening factor {factor} does not divide {steps} steps"
            )));
        }
        let coarse_steps = steps / factor;
        let nodes: Vec<f64> = (0..=coarse_steps)
            .map(|i| self.grid.nodes()[i * factor])
            .collect();
        let grid = TimeGrid::from_nodes(nodes)?;
        let mut values = Vec::with_capacity(self.n_paths * (coarse_steps + 1));
        let mut increments = Vec::with_capacity(self.n_paths * coarse_steps);
        for p in 0..self.n_paths {
            let v = self.path_values(p);
            for i in 0..=coarse_steps {
                values.push(v[i * factor]);
            }
            for i in 0..coarse_steps {
                increments.push(v[(i + 1) * factor] - v[i * factor]);
            }
        }
        Ok(BrownianEnsemble {
            grid,
            n_paths: self.n_paths,
            seed: self.seed,
            increments,
            values,
        })
    }
}

/// Simulates `n_paths` Brownian paths on `grid` with independent per-path substreams.
pub fn simulate_ensemble(grid: &TimeGrid, n_paths: usize, seed: u64) -> Result<BrownianEnsemble> {
    if n_paths == 0 {
        return Err(Error::invalid("n_paths must be positive"));
    }
    let n_steps = grid.n_steps();
    let sqrt_dt: Vec<f64> = (0..n_steps).map(|i| grid.dt(i).sqrt()).collect();
    let mut increments = vec![0.0; n_paths * n_steps];
    let mut values = vec![0.0; n_paths * (n_steps + 1)];

    increments
        .par_chunks_mut(n_steps)
        .zip(values.par_chunks_mut(n_steps + 1))
        .enumerate()
        .for_each(|(path, (inc, val))| {
            let mut rng = path_rng(seed, path, StreamClass::Increments);
            let mut w = 0.0;
            val[0] = 0.0;
            for i in 0..n_steps {
                let z: f64 = StandardNormal.sample(&mut rng);
                let dw = z * sqrt_dt[i];
                inc[i] = dw;
                w += dw;
                val[i + 1] = w;
            }
        });

    Ok(BrownianEnsemble {
        grid: grid.clone(),
        n_paths,
        seed,
        increments,
        values,
    })
}

/// First crossing of an affine barrier by a stored path, with optional
/// Brownian-bridge correction inside non-crossing intervals.
pub fn detect_hitting(
    path_values: &[f64],
    grid: &TimeGrid,
    barrier: AffineBarrier,
    bridge_correction: bool,
    bridge_rng: &mut ChaCha8Rng,
) -> HittingRecord {
    debug_assert_eq!(path_values.len(), grid.n_nodes());
    let mut tracker = BarrierTracker::new(barrier);
    if let Some(ev) = tracker.check_start() {
        return HittingRecord::from_event(barrier, &ev);
    }
    for i in 0..grid.n_steps() {
        let u = if bridge_correction {
            Some(rand::Rng::gen::<f64>(bridge_rng))
        } else {
            None
        };
        if let Some(ev) = tracker.observe(
            i,
            grid.nodes()[i],
            grid.nodes()[i + 1],
            path_values[i],
            path_values[i + 1],
            u,
        ) {
            return HittingRecord::from_event(barrier, &ev);
        }
    }
    HittingRecord::truncated(barrier)
}

/// Hitting records for every path of an ensemble, in path order.
pub fn detect_hitting_ensemble(
    ens: &BrownianEnsemble,
    barrier: AffineBarrier,
    bridge_correction: bool,
) -> Vec<HittingRecord> {
    (0..ens.n_paths())
        .into_par_iter()
        .map(|p| {
            let mut rng = path_rng(ens.seed(), p, StreamClass::Bridge);
            detect_hitting(ens.path_values(p), ens.grid(), barrier, bridge_correction, &mut rng)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn build_grid_examples() {
        let g = build_grid(1.0, 4).unwrap();
        assert_eq!(g.nodes(), &[0.0, 0.25, 0.5, 0.75, 1.0]);
        let g = build_grid(1.0, 1).unwrap();
        assert_eq!(g.nodes(), &[0.0, 1.0]);
        let g = build_grid(2.0, 8).unwrap();
        assert_eq!(g.n_nodes(), 9);
        assert!((g.dt(3) - 0.25).abs() < 1e-15);
        assert!(build_grid(0.0, 4).is_err());
        assert!(build_grid(-1.0, 4).is_err());
        assert!(build_grid(1.0, 0).is_err());
    }

    #[test]
    fn ensemble_is_reproducible_and_consistent() {
        let grid = build_grid(1.0, 16).unwrap();
        let a = simulate_ensemble(&grid, 64, 99).unwrap();
        let b = simulate_ensemble(&grid, 64, 99).unwrap();
        assert_eq!(a.values, b.values);
        assert_eq!(a.increments, b.increments);
        // prefix sums hold exactly
        for p in 0..a.n_paths() {
            let v = a.path_values(p);
            let inc = a.path_increments(p);
            assert_eq!(v[0], 0.0);
            for i in 0..grid.n_steps() {
                assert_eq!(v[i + 1] - v[i], inc[i]);
            }
        }
        let c = simulate_ensemble(&grid, 64, 100).unwrap();
        assert_ne!(a.values, c.values);
    }

    #[test]
    fn ensemble_thread_count_does_not_change_draws() {
        let grid = build_grid(1.0, 8).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let single = pool.install(|| simulate_ensemble(&grid, 32, 7).unwrap());
        let multi = simulate_ensemble(&grid, 32, 7).unwrap();
        assert_eq!(single.values, multi.values);
    }

    #[test]
    fn endpoint_moments_match_brownian_law() {
        // CLT bound 3/sqrt(n) on the mean; chi-square bound on the variance.
        let grid = build_grid(1.0, 1).unwrap();
        let n = 1_000_000;
        let ens = simulate_ensemble(&grid, n, 2024).unwrap();
        let mut s = crate::stats::Summary::new();
        for p in 0..n {
            s.push(ens.path_values(p)[1]);
        }
        assert!(s.mean.abs() < 4e-3, "mean {} out of CLT band", s.mean);
        assert!((s.variance() - 1.0).abs() < 5e-3, "variance {}", s.variance());
    }

    #[test]
    fn coarsen_sums_increments() {
        let grid = build_grid(1.0, 8).unwrap();
        let ens = simulate_ensemble(&grid, 4, 5).unwrap();
        let coarse = ens.coarsen(4).unwrap();
        assert_eq!(coarse.grid().n_steps(), 2);
        for p in 0..4 {
            assert_eq!(coarse.path_values(p)[1], ens.path_values(p)[4]);
            assert_eq!(coarse.path_values(p)[2], ens.path_values(p)[8]);
        }
        assert!(ens.coarsen(3).is_err());
    }

    #[test]
    fn deterministic_path_hits_line_at_one() {
        // W = 0, barrier W <= t - 1 crosses exactly at t = 1.
        let grid = build_grid(2.0, 8).unwrap();
        let path = vec![0.0; grid.n_nodes()];
        let mut rng = path_rng(1, 0, StreamClass::Bridge);
        let rec = detect_hitting(&path, &grid, AffineBarrier::below(1.0, -1.0), false, &mut rng);
        assert_eq!(rec.tau_value(), Some(1.0));
        assert!(!rec.bridge_corrected);
    }

    #[test]
    fn degenerate_start_hits_at_zero() {
        let grid = build_grid(1.0, 4).unwrap();
        let path = vec![0.0; grid.n_nodes()];
        let mut rng = path_rng(1, 0, StreamClass::Bridge);
        let rec = detect_hitting(&path, &grid, AffineBarrier::below(1.0, 1.0), false, &mut rng);
        assert_eq!(rec.tau_value(), Some(0.0));
    }

    #[test]
    fn bridge_fires_no_later_than_grid_crossing() {
        let grid = build_grid(4.0, 256).unwrap();
        let ens = simulate_ensemble(&grid, 256, 11).unwrap();
        let barrier = AffineBarrier::below(1.0, -1.0);
        let plain = detect_hitting_ensemble(&ens, barrier, false);
        let bridged = detect_hitting_ensemble(&ens, barrier, true);
        let mut fired_earlier = 0;
        for (p, b) in plain.iter().zip(bridged.iter()) {
            match (b.tau_value(), p.tau_value()) {
                (Some(tb), Some(tp)) => {
                    assert!(tb <= tp + 1e-12, "bridge {tb} later than grid {tp}");
                    if tb < tp {
                        fired_earlier += 1;
                    }
                }
                (Some(_), None) => fired_earlier += 1,
                (None, Some(tp)) => panic!("grid crossing at {tp} missed by bridge detector"),
                (None, None) => {}
            }
        }
        assert!(fired_earlier > 0, "expected some bridge-corrected firings");
    }
}
