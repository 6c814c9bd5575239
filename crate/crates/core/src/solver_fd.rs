//! Method-of-lines solver for `u_tt = u_rr + (d-1)/r u_r + zeta |u|^{p-1} u`
//! in physical variables, with classic four-stage Runge-Kutta in time.
//!
//! Boundary handling: even extension at the origin (the Laplacian there is
//! `d u_rr(0)`) and a homogeneous Dirichlet wall at `r_max`. The wall is exact
//! only while no signal has reached it, so callers size `r_max` to at least
//! the data support plus the run length plus 2.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{FieldState, RadialGrid};
use crate::par;
use crate::params::{validate_params, ModelParams};

/// Any sample exceeding this magnitude aborts the run.
pub const DIVERGENCE_THRESHOLD: f64 = 1e8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvolutionConfig {
    /// `dt = cfl · h`.
    pub cfl: f64,
    pub t_end: f64,
    /// Keep every `snapshot_stride`-th step (the first and last are always kept).
    pub snapshot_stride: usize,
}

impl EvolutionConfig {
    pub const DEFAULT_CFL: f64 = 0.25;

    pub fn new(cfl: f64, t_end: f64, snapshot_stride: usize) -> Result<Self> {
        let cfg = EvolutionConfig { cfl, t_end, snapshot_stride };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Stride chosen so snapshots are `snapshot_dt` apart (rounded to whole steps).
    pub fn with_snapshot_interval(cfl: f64, t_end: f64, grid: &RadialGrid, snapshot_dt: f64) -> Result<Self> {
        let dt = cfl * grid.h;
        let stride = ((snapshot_dt / dt).round() as usize).max(1);
        Self::new(cfl, t_end, stride)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.cfl > 0.0 && self.cfl <= 0.5) {
            return Err(Error::Config(format!("cfl = {} must lie in (0, 0.5]", self.cfl)));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(Error::Config(format!("t_end = {} must be positive", self.t_end)));
        }
        if self.snapshot_stride == 0 {
            return Err(Error::Config("snapshot_stride must be at least 1".into()));
        }
        Ok(())
    }

    pub fn dt(&self, grid: &RadialGrid) -> f64 {
        self.cfl * grid.h
    }

    /// Number of steps; `t_end` is rounded to a whole number of steps.
    pub fn steps(&self, grid: &RadialGrid) -> usize {
        (self.t_end / self.dt(grid)).round().max(1.0) as usize
    }
}

/// Time-ordered snapshots of one evolution.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trajectory {
    pub params: ModelParams,
    pub grid: RadialGrid,
    pub config: EvolutionConfig,
    pub provenance: String,
    pub snapshots: Vec<FieldState>,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.t).collect()
    }

    pub fn first(&self) -> &FieldState {
        &self.snapshots[0]
    }

    pub fn last(&self) -> &FieldState {
        self.snapshots.last().expect("trajectory is never empty")
    }

    /// Snapshot whose time matches `t` to within `1e-9 max(1, |t|)`.
    pub fn at_time(&self, t: f64) -> Option<&FieldState> {
        let tol = 1e-9 * t.abs().max(1.0);
        let i = self.snapshots.partition_point(|s| s.t < t - tol);
        self.snapshots.get(i).filter(|s| (s.t - t).abs() <= tol)
    }
}

/// Acceleration `u_tt` at every node.
///
/// The Laplacian is taken in flux form,
/// `(a_{j+1/2}(u_{j+1} - u_j) - a_{j-1/2}(u_j - u_{j-1})) / (h V_j)` with
/// `a = r^{d-1}` at cell faces and `V_j` the exact shell volume of the dual
/// cell, which keeps the operator symmetric in the volume-weighted inner
/// product. At the origin this is `2d (u_1 - u_0)/h²`.
pub fn rhs(u: &[f64], grid: &RadialGrid, params: &ModelParams, out: &mut [f64]) {
    Laplacian::new(grid, params.d).apply(u, params, out);
}

/// Precomputed flux-form coefficients: `lo[j]` multiplies `u_{j-1} - u_j`,
/// `hi[j]` multiplies `u_{j+1} - u_j`.
struct Laplacian {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl Laplacian {
    fn new(grid: &RadialGrid, d: u32) -> Self {
        let n = grid.n;
        let inv_h2 = 1.0 / (grid.h * grid.h);
        let (dm1, di, df) = (d as i32 - 1, d as i32, d as f64);
        let mut lo = vec![0.0; n + 1];
        let mut hi = vec![0.0; n + 1];
        hi[0] = 2.0 * df * inv_h2;
        for j in 1..n {
            let x = j as f64;
            let (a, b) = (x - 0.5, x + 0.5);
            let vol = (b.powi(di) - a.powi(di)) / df;
            lo[j] = a.powi(dm1) / vol * inv_h2;
            hi[j] = b.powi(dm1) / vol * inv_h2;
        }
        Laplacian { lo, hi }
    }

    fn apply(&self, u: &[f64], params: &ModelParams, out: &mut [f64]) {
        let n = u.len() - 1;
        let zeta = params.zeta_f64();
        let nonlinear = params.zeta != 0;
        let (lo, hi) = (&self.lo, &self.hi);
        par::fill(out, |j| {
            if j == n {
                return 0.0;
            }
            let lap = if j == 0 {
                hi[0] * (u[1] - u[0])
            } else {
                hi[j] * (u[j + 1] - u[j]) + lo[j] * (u[j - 1] - u[j])
            };
            if nonlinear {
                lap + zeta * params.power(u[j])
            } else {
                lap
            }
        });
    }
}

/// Allocation-free RK4 stepper.
pub struct FdStepper {
    grid: RadialGrid,
    params: ModelParams,
    lap: Laplacian,
    k_u: [Vec<f64>; 4],
    k_v: [Vec<f64>; 4],
    stage_u: Vec<f64>,
    stage_v: Vec<f64>,
}

impl FdStepper {
    pub fn new(grid: RadialGrid, params: ModelParams) -> Self {
        let z = || vec![0.0; grid.len()];
        FdStepper {
            grid,
            params,
            lap: Laplacian::new(&grid, params.d),
            k_u: [z(), z(), z(), z()],
            k_v: [z(), z(), z(), z()],
            stage_u: z(),
            stage_v: z(),
        }
    }

    /// Advances `(u, u_t)` by `dt` (negative `dt` steps backward).
    pub fn step(&mut self, state: &mut FieldState, dt: f64) {
        let (u, v) = (&state.u, &state.ut);
        let weights = [0.0, 0.5, 0.5, 1.0];
        for s in 0..4 {
            if s == 0 {
                self.k_u[0].copy_from_slice(v);
                self.lap.apply(u, &self.params, &mut self.k_v[0]);
            } else {
                let a = weights[s] * dt;
                let (ku, kv) = (&self.k_u[s - 1], &self.k_v[s - 1]);
                par::fill2(&mut self.stage_u, &mut self.stage_v, |j| (u[j] + a * ku[j], v[j] + a * kv[j]));
                self.k_u[s].copy_from_slice(&self.stage_v);
                self.lap.apply(&self.stage_u, &self.params, &mut self.k_v[s]);
            }
        }
        let c = dt / 6.0;
        let (ku, kv) = (&self.k_u, &self.k_v);
        let n = self.grid.n;
        par::fill2(&mut self.stage_u, &mut self.stage_v, |j| {
            if j == n {
                return (u[j], 0.0);
            }
            (
                u[j] + c * (ku[0][j] + 2.0 * ku[1][j] + 2.0 * ku[2][j] + ku[3][j]),
                v[j] + c * (kv[0][j] + 2.0 * kv[1][j] + 2.0 * kv[2][j] + kv[3][j]),
            )
        });
        std::mem::swap(&mut state.u, &mut self.stage_u);
        std::mem::swap(&mut state.ut, &mut self.stage_v);
    }
}

pub(crate) fn guard(state: &FieldState, grid: &RadialGrid) -> Result<()> {
    let n = grid.len();
    let ok = |j: usize| {
        let (a, b) = (state.u[j], state.ut[j]);
        a.is_finite() && b.is_finite() && a.abs() <= DIVERGENCE_THRESHOLD && b.abs() <= DIVERGENCE_THRESHOLD
    };
    match par::first_bad(n, ok) {
        None => Ok(()),
        Some(node) => {
            let value = if state.u[node].abs() > state.ut[node].abs() || !state.u[node].is_finite() {
                state.u[node]
            } else {
                state.ut[node]
            };
            Err(Error::Divergence { t: state.t, node, r: grid.r(node), value })
        }
    }
}

/// Runs the evolution, calling `observe` on every kept snapshot in time order.
pub fn evolve_with<F>(
    initial: &FieldState,
    grid: &RadialGrid,
    cfg: &EvolutionConfig,
    params: &ModelParams,
    backward: bool,
    mut observe: F,
) -> Result<()>
where
    F: FnMut(&FieldState) -> Result<()>,
{
    validate_params(params)?;
    cfg.validate()?;
    initial.check(grid)?;
    let dt = if backward { -cfg.dt(grid) } else { cfg.dt(grid) };
    let steps = cfg.steps(grid);
    let t0 = initial.t;
    let mut stepper = FdStepper::new(*grid, *params);
    let mut state = initial.clone();
    observe(&state)?;
    for k in 1..=steps {
        stepper.step(&mut state, dt);
        state.t = t0 + k as f64 * dt;
        guard(&state, grid)?;
        if k % cfg.snapshot_stride == 0 || k == steps {
            observe(&state)?;
        }
    }
    Ok(())
}

/// Forward evolution from `initial.t` to `initial.t + t_end`.
pub fn evolve(initial: &FieldState, grid: &RadialGrid, cfg: &EvolutionConfig, params: &ModelParams) -> Result<Trajectory> {
    let mut snapshots = Vec::new();
    evolve_with(initial, grid, cfg, params, false, |s| {
        snapshots.push(s.clone());
        Ok(())
    })?;
    Ok(Trajectory {
        params: *params,
        grid: *grid,
        config: *cfg,
        provenance: "fd:forward".into(),
        snapshots,
    })
}

/// Backward evolution from `last.t` to `last.t - t_end`. Snapshots are
/// returned in increasing time order, ending with `last` itself.
pub fn evolve_backward(last: &FieldState, grid: &RadialGrid, cfg: &EvolutionConfig, params: &ModelParams) -> Result<Trajectory> {
    let mut snapshots = Vec::new();
    evolve_with(last, grid, cfg, params, true, |s| {
        snapshots.push(s.clone());
        Ok(())
    })?;
    snapshots.reverse();
    Ok(Trajectory {
        params: *params,
        grid: *grid,
        config: *cfg,
        provenance: "fd:backward".into(),
        snapshots,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn params(d: u32, zeta: i32) -> ModelParams {
        ModelParams { d, p: crate::params::p_conformal(d), zeta }
    }

    #[test]
    fn harmonic_constant_has_zero_acceleration() {
        let g = RadialGrid::new(10.0, 100).unwrap();
        let u = vec![1.7; g.len()];
        let mut out = vec![1.0; g.len()];
        rhs(&u, &g, &params(4, 0), &mut out);
        assert!(out[..g.n].iter().all(|a| a.abs() < 1e-12));
    }

    #[test]
    fn cubic_nonlinearity_on_constant() {
        let g = RadialGrid::new(10.0, 100).unwrap();
        let c = 0.8;
        let u = vec![c; g.len()];
        let mut out = vec![0.0; g.len()];
        rhs(&u, &g, &ModelParams { d: 3, p: 3.0, zeta: -1 }, &mut out);
        for a in &out[..g.n] {
            assert_relative_eq!(*a, -c * c * c, max_relative = 1e-12);
        }
    }

    #[test]
    fn spherical_eigenfunction_in_3d() {
        // -Δ(sin r / r) = sin r / r; the error should fall by ~4 per halving
        let errs: Vec<f64> = [0.02, 0.01]
            .iter()
            .map(|&h| {
                let g = RadialGrid::with_spacing(10.0, h).unwrap();
                let u = g.sample(|r| if r == 0.0 { 1.0 } else { r.sin() / r });
                let mut acc = vec![0.0; g.len()];
                rhs(&u, &g, &params(3, 0), &mut acc);
                (0..g.n).map(|j| (acc[j] + u[j]).abs()).fold(0.0, f64::max)
            })
            .collect();
        assert!(errs[1] < 1e-4, "{errs:?}");
        assert!(errs[0] / errs[1] > 3.5, "{errs:?}");
    }

    #[test]
    fn zero_data_stays_zero() {
        let g = RadialGrid::new(10.0, 200).unwrap();
        let cfg = EvolutionConfig::new(0.25, 2.0, 10).unwrap();
        let traj = evolve(&FieldState::zeros(&g, 0.0), &g, &cfg, &params(5, -1)).unwrap();
        assert!(traj.snapshots.iter().all(|s| s.u.iter().chain(&s.ut).all(|v| *v == 0.0)));
        let back = evolve_backward(traj.last(), &g, &cfg, &params(5, -1)).unwrap();
        assert!(back.first().u.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn times_are_increasing_both_directions() {
        let g = RadialGrid::new(10.0, 100).unwrap();
        let cfg = EvolutionConfig::new(0.25, 1.0, 3).unwrap();
        let s = FieldState::from_fns(&g, 0.0, |r| (-r * r).exp(), |_| 0.0);
        let fwd = evolve(&s, &g, &cfg, &params(4, -1)).unwrap();
        let back = evolve_backward(fwd.last(), &g, &cfg, &params(4, -1)).unwrap();
        for traj in [&fwd, &back] {
            assert!(traj.times().windows(2).all(|w| w[0] < w[1]));
        }
        assert!(back.first().t.abs() < 1e-12);
        assert_relative_eq!(fwd.last().t, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn divergence_guard_trips() {
        let g = RadialGrid::new(10.0, 100).unwrap();
        let mut s = FieldState::zeros(&g, 0.0);
        s.u[5] = 2e8;
        let cfg = EvolutionConfig::new(0.25, 1.0, 1).unwrap();
        let err = evolve(&s, &g, &cfg, &params(3, 0)).unwrap_err();
        assert!(matches!(err, Error::Divergence { .. }), "{err}");
    }

    #[test]
    fn config_validation() {
        assert!(EvolutionConfig::new(0.6, 1.0, 1).is_err());
        assert!(EvolutionConfig::new(0.25, -1.0, 1).is_err());
        assert!(EvolutionConfig::new(0.25, 1.0, 0).is_err());
    }
}
