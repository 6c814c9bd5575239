//! Characteristic solver for the reduced system
//!
//! ```text
//! (∂_t + ∂_r) v_+ = f,   (∂_t - ∂_r) v_- = f,   w_t = (v_+ + v_-)/2,
//! f(r, t) = -λ_d w / r² + zeta sign(w)|w|^p / r^{(p-1)(d-1)/2}
//! ```
//!
//! on a mesh with `dt = h`, so the lines `t ∓ r = const` pass exactly through
//! mesh nodes. Each step moves `v_+` one node outward and `v_-` one node
//! inward and adds the integral of the source across the cell, shared by
//! both families: `u = w / r^k` is taken at the cell center and the factors
//! `r^{k-2}`, `r^k` are integrated exactly. The source is evaluated twice per
//! step: first from a Taylor predictor of `w` at the half step, then from the
//! bilinear cell-center average over both time levels.
//!
//! The first cell uses the expansion `u = a + b r²` fitted to the two
//! nodes next to the origin and integrates the source in closed form, since
//! `w/r²` behaves like `r^{(d-5)/2}` there. It is integrated separately
//! along the incoming and the outgoing diagonal, with the fit interpolated
//! linearly in time: for even `d` the weight is concentrated at the origin
//! and the two diagonals reach it at different times.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{interpolate, reduction_weight, to_reduced, FieldState, RadialGrid, ReducedState};
use crate::history::ReducedHistory;
use crate::par;
use crate::params::{validate_params, ModelParams};
use crate::solver_fd::DIVERGENCE_THRESHOLD;

/// Steps between two checks of `w` against the spatial integral of `w_r`.
pub const RECONCILE_EVERY: usize = 100;
/// Allowed change of `w - ∫ w_r` relative to `max |w|`.
pub const RECONCILE_TOL: f64 = 1e-6;

/// `f(r, w) = -λ_d w / r² + zeta sign(w)|w|^p / r^{(p-1)(d-1)/2}` for `r > 0`.
pub fn source_term(r: f64, w: f64, params: &ModelParams) -> f64 {
    let lambda = params.constants().lambda_d;
    let linear = if lambda == 0.0 { 0.0 } else { -lambda * w / (r * r) };
    if params.zeta == 0 {
        linear
    } else {
        let k = params.half_dim();
        linear + params.zeta_f64() * params.power(w) / r.powf((params.p - 1.0) * k)
    }
}

/// `u = a + b r²` through `u(h) = u1`, `u(2h) = u2`.
fn origin_fit(u1: f64, u2: f64, h: f64) -> (f64, f64) {
    ((4.0 * u1 - u2) / 3.0, (u2 - u1) / (3.0 * h * h))
}

/// Integral of the source across the first cell `[0, h]` along a diagonal
/// on which `u = a(r) + b(r) r²`, with the fit coefficients moving linearly
/// from `(a0, b0)` at `r = 0` to `(a1, b1)` at `r = h`.
fn origin_diagonal_integral(
    (a0, b0): (f64, f64),
    (a1, b1): (f64, f64),
    h: f64,
    params: &ModelParams,
    lambda: f64,
) -> f64 {
    let k = params.half_dim();
    let mut total = 0.0;
    if lambda != 0.0 {
        // ∫_0^h r^{k-2} u dr, with k - 2 > -1 whenever λ_d ≠ 0
        let lo = h.powf(k - 1.0);
        let hi = h.powf(k + 1.0);
        total -= lambda
            * (a0 * lo / (k - 1.0) + (a1 - a0) * lo / k + b0 * hi / (k + 1.0) + (b1 - b0) * hi / (k + 2.0));
    }
    if params.zeta != 0 {
        // two-point Gauss-Legendre on ∫_0^h r^k sign(u)|u|^p dr
        let g = 0.5 / 3f64.sqrt();
        let s: f64 = [0.5 - g, 0.5 + g]
            .iter()
            .map(|&x| {
                let r = x * h;
                let u = a0 + x * (a1 - a0) + (b0 + x * (b1 - b0)) * r * r;
                r.powf(k) * params.power(u)
            })
            .sum();
        total += params.zeta_f64() * 0.5 * h * s;
    }
    total
}

/// Reusable buffers for [`char_step`].
pub struct CharStepper {
    grid: RadialGrid,
    params: ModelParams,
    lambda: f64,
    /// Cell source values, `cells[c]` for the cell `[r_c, r_{c+1}]`.
    cells: Vec<f64>,
    /// First-cell sources along the incoming and the outgoing diagonal.
    origin_in: f64,
    origin_out: f64,
    w_new: Vec<f64>,
    inv_weight: Vec<f64>,
    /// `(1/h)∫ r^{k-2} dr` and `(1/h)∫ r^k dr` over each cell, `k = (d-1)/2`.
    weight_linear: Vec<f64>,
    weight_power: Vec<f64>,
}

impl CharStepper {
    pub fn new(grid: RadialGrid, params: ModelParams) -> Self {
        let k = params.half_dim();
        let inv_weight = (0..grid.len())
            .map(|j| if j == 0 { 0.0 } else { 1.0 / reduction_weight(grid.r(j), params.d) })
            .collect();
        let cell_integral = |c: usize, m: f64| {
            let (a, b) = (grid.r(c), grid.r(c + 1));
            if (m + 1.0).abs() < 1e-12 {
                (b / a).ln() / grid.h
            } else {
                (b.powf(m + 1.0) - a.powf(m + 1.0)) / ((m + 1.0) * grid.h)
            }
        };
        let weight_linear = (0..grid.n).map(|c| if c == 0 { 0.0 } else { cell_integral(c, k - 2.0) }).collect();
        let weight_power = (0..grid.n).map(|c| cell_integral(c, k)).collect();
        CharStepper {
            grid,
            params,
            lambda: params.constants().lambda_d,
            cells: vec![0.0; grid.n],
            origin_in: 0.0,
            origin_out: 0.0,
            w_new: vec![0.0; grid.len()],
            inv_weight,
            weight_linear,
            weight_power,
        }
    }

    /// Fills the cell sources from `w` at the old level and an estimate of
    /// `w` at the new level. Away from the origin `u = w / r^k` is averaged
    /// over the four cell corners and the radial weights are integrated
    /// exactly. The first cell is integrated along each diagonal separately,
    /// since the weight `r^{k-2}` tells apart the two time levels there.
    fn cell_sources(&mut self, w_old: &[f64]) {
        let h = self.grid.h;
        let params = self.params;
        let lambda = self.lambda;
        let nonlinear = params.zeta != 0;
        let zeta = params.zeta_f64();
        let (w_new, inv_w) = (&self.w_new, &self.inv_weight);
        let (wl, wp) = (&self.weight_linear, &self.weight_power);
        par::fill(&mut self.cells, |c| {
            if c == 0 {
                return 0.0;
            }
            let u = 0.25
                * ((w_old[c] + w_new[c]) * inv_w[c] + (w_old[c + 1] + w_new[c + 1]) * inv_w[c + 1]);
            let mut f = -lambda * u * wl[c];
            if nonlinear {
                f += zeta * params.power(u) * wp[c];
            }
            f
        });
        let old = origin_fit(w_old[1] * inv_w[1], w_old[2] * inv_w[2], h);
        let new = origin_fit(w_new[1] * inv_w[1], w_new[2] * inv_w[2], h);
        self.origin_in = origin_diagonal_integral(new, old, h, &params, lambda) / h;
        self.origin_out = origin_diagonal_integral(old, new, h, &params, lambda) / h;
    }

    fn transport(&self, from: &ReducedState, to: &mut ReducedState) {
        let n = self.grid.n;
        let h = self.grid.h;
        let cells = &self.cells;
        par::fill2(&mut to.v_plus, &mut to.v_minus, |j| {
            let vp = if j == 0 { 0.0 } else { from.v_plus[j - 1] + h * cells[j - 1] };
            let vm = if j == n { 0.0 } else { from.v_minus[j + 1] + h * cells[j] };
            (vp, vm)
        });
        to.v_plus[1] = from.v_plus[0] + h * self.origin_out;
        to.v_minus[0] = from.v_minus[1] + h * self.origin_in;
        to.v_plus[0] = -to.v_minus[0];
        let half_h = 0.5 * h;
        par::fill(&mut to.w, |j| {
            if j == 0 {
                0.0
            } else {
                from.w[j] + half_h * (from.w_t(j) + 0.5 * (to.v_plus[j] + to.v_minus[j]))
            }
        });
        to.t = from.t + h;
    }

    /// One step of length `h`, writing into `next`.
    pub fn step_into(&mut self, state: &ReducedState, next: &mut ReducedState) {
        let h = self.grid.h;
        // predictor: new level from the current slope
        par::fill(&mut self.w_new, |j| state.w[j] + h * state.w_t(j));
        self.cell_sources(&state.w);
        self.transport(state, next);
        // corrector
        self.w_new.copy_from_slice(&next.w);
        self.cell_sources(&state.w);
        self.transport(state, next);
    }
}

/// Advances a reduced state by one characteristic step `dt = h`.
pub fn char_step(state: &ReducedState, grid: &RadialGrid, params: &ModelParams) -> Result<ReducedState> {
    let mut stepper = CharStepper::new(*grid, *params);
    let mut next = ReducedState::zeros(grid, state.t);
    stepper.step_into(state, &mut next);
    guard(&next, grid)?;
    Ok(next)
}

fn guard(state: &ReducedState, grid: &RadialGrid) -> Result<()> {
    let ok = |j: usize| {
        [state.w[j], state.v_plus[j], state.v_minus[j]]
            .iter()
            .all(|v| v.is_finite() && v.abs() <= DIVERGENCE_THRESHOLD)
    };
    match par::first_bad(grid.len(), ok) {
        None => Ok(()),
        Some(node) => {
            let value = [state.w[node], state.v_plus[node], state.v_minus[node]]
                .into_iter()
                .fold(0.0f64, |m, v| if v.is_finite() { m.max(v.abs()) } else { f64::INFINITY });
            Err(Error::Divergence { t: state.t, node, r: grid.r(node), value })
        }
    }
}

/// `w(r) - w(r_1) - ∫_{r_1}^r w_r`, with `w_r = (v_- - v_+)/2` integrated by
/// the trapezoid rule. Anchoring at the first interior node leaves out the
/// origin cell, where the two diagonals see different source integrals.
pub fn w_offset(state: &ReducedState, grid: &RadialGrid) -> Vec<f64> {
    let mut out = vec![0.0; grid.len()];
    let mut acc = 0.0;
    for j in 2..grid.len() {
        acc += 0.5 * grid.h * (state.w_r(j - 1) + state.w_r(j));
        out[j] = state.w[j] - state.w[1] - acc;
    }
    out
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CharTrajectory {
    pub params: ModelParams,
    pub grid: RadialGrid,
    pub provenance: String,
    pub snapshots: Vec<ReducedState>,
}

impl CharTrajectory {
    pub fn at_time(&self, t: f64) -> Option<&ReducedState> {
        self.index_of(t).map(|i| &self.snapshots[i])
    }

    pub fn last(&self) -> &ReducedState {
        self.snapshots.last().expect("trajectory is never empty")
    }

    /// Field-variable view of snapshot `i`.
    pub fn field_state(&self, i: usize) -> Result<FieldState> {
        crate::grid::from_reduced(&self.snapshots[i], &self.grid, &self.params)
    }
}

/// Runs the characteristic solver for `round(t_end / h)` steps, passing the
/// initial state and every later state to `observe`. Every
/// [`RECONCILE_EVERY`] steps the time-integrated `w` is checked against the
/// spatial integral of `w_r`.
pub fn evolve_char_with<F>(
    initial: &ReducedState,
    grid: &RadialGrid,
    t_end: f64,
    params: &ModelParams,
    mut observe: F,
) -> Result<()>
where
    F: FnMut(usize, &ReducedState) -> Result<()>,
{
    validate_params(params)?;
    if !(t_end > 0.0) {
        return Err(Error::Config(format!("t_end = {t_end} must be positive")));
    }
    initial.check_origin()?;
    let steps = (t_end / grid.h).round().max(1.0) as usize;
    let t0 = initial.t;
    let mut stepper = CharStepper::new(*grid, *params);
    let mut state = initial.clone();
    let mut next = ReducedState::zeros(grid, t0);
    let offset0 = w_offset(&state, grid);
    observe(0, &state)?;
    for k in 1..=steps {
        stepper.step_into(&state, &mut next);
        std::mem::swap(&mut state, &mut next);
        state.t = t0 + k as f64 * grid.h;
        guard(&state, grid)?;
        if k % RECONCILE_EVERY == 0 {
            let offset = w_offset(&state, grid);
            let w_max = state.w.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let drift = offset.iter().zip(&offset0).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            if drift > RECONCILE_TOL * w_max {
                return Err(Error::State(format!(
                    "w drifted from ∫w_r by {drift:e} (max |w| = {w_max:e}) at t = {}",
                    state.t
                )));
            }
        }
        observe(k, &state)?;
    }
    Ok(())
}

/// Runs [`evolve_char_with`], keeping every `stride`-th state and the last.
pub fn evolve_char(
    initial: &ReducedState,
    grid: &RadialGrid,
    t_end: f64,
    stride: usize,
    params: &ModelParams,
) -> Result<CharTrajectory> {
    if stride == 0 {
        return Err(Error::Config("snapshot stride must be at least 1".into()));
    }
    let steps = (t_end / grid.h).round().max(1.0) as usize;
    let mut snapshots = Vec::new();
    evolve_char_with(initial, grid, t_end, params, |k, s| {
        if k % stride == 0 || k == steps {
            snapshots.push(s.clone());
        }
        Ok(())
    })?;
    Ok(CharTrajectory { params: *params, grid: *grid, provenance: "char:forward".into(), snapshots })
}

/// Runs [`evolve_char_with`] up to the largest of `times`, keeping the
/// states at those times (each rounded to a whole number of steps).
pub fn evolve_char_keep(
    initial: &ReducedState,
    grid: &RadialGrid,
    times: &[f64],
    params: &ModelParams,
) -> Result<CharTrajectory> {
    let t0 = initial.t;
    let mut keep: Vec<usize> = times
        .iter()
        .map(|&t| {
            if t < t0 {
                Err(Error::Precondition(format!("time {t} precedes the initial time {t0}")))
            } else {
                Ok(((t - t0) / grid.h).round() as usize)
            }
        })
        .collect::<Result<_>>()?;
    keep.sort_unstable();
    keep.dedup();
    let last = *keep.last().ok_or_else(|| Error::Precondition("no times requested".into()))?;
    let mut snapshots = Vec::new();
    if last == 0 {
        snapshots.push(initial.clone());
    } else {
        evolve_char_with(initial, grid, last as f64 * grid.h, params, |k, s| {
            if keep.binary_search(&k).is_ok() {
                snapshots.push(s.clone());
            }
            Ok(())
        })?;
    }
    Ok(CharTrajectory { params: *params, grid: *grid, provenance: "char:forward".into(), snapshots })
}

/// Converts field data and runs [`evolve_char`].
pub fn evolve_char_from_field(
    initial: &FieldState,
    grid: &RadialGrid,
    t_end: f64,
    stride: usize,
    params: &ModelParams,
) -> Result<CharTrajectory> {
    initial.check(grid)?;
    evolve_char(&to_reduced(initial, grid, params), grid, t_end, stride, params)
}

/// Samples `v_+` along `t - r = eta` between `t1` and `t2` and integrates
/// the source along the same line (trapezoid rule over the stored times).
/// Returns `(v_+(t1 - eta, t1), v_+(t2 - eta, t2), ∫ f dt)`.
pub fn trace_characteristic<H: ReducedHistory + ?Sized>(
    history: &H,
    eta: f64,
    t1: f64,
    t2: f64,
) -> Result<(f64, f64, f64)> {
    if !(eta < t1 && t1 < t2) {
        return Err(Error::Precondition(format!("need eta < t1 < t2, got {eta}, {t1}, {t2}")));
    }
    let grid = *history.grid();
    if t2 - eta > grid.r_max + 1e-9 {
        return Err(Error::Domain(format!(
            "characteristic t - r = {eta} reaches r = {} > r_max = {} by t = {t2}",
            t2 - eta,
            grid.r_max
        )));
    }
    let i1 = history
        .index_of(t1)
        .ok_or_else(|| Error::Precondition(format!("no snapshot at t1 = {t1}")))?;
    let i2 = history
        .index_of(t2)
        .ok_or_else(|| Error::Precondition(format!("no snapshot at t2 = {t2}")))?;
    let params = *history.params();
    let mut samples = Vec::with_capacity(i2 - i1 + 1);
    for i in i1..=i2 {
        let t = history.time(i);
        let r = t - eta;
        let red = history.reduced(i);
        let w = interpolate(&red.w, grid.h, r).ok_or_else(|| Error::Domain(format!("r = {r} off mesh")))?;
        let vp = interpolate(&red.v_plus, grid.h, r).ok_or_else(|| Error::Domain(format!("r = {r} off mesh")))?;
        samples.push((t, vp, source_term(r, w, &params)));
    }
    let integral = samples
        .windows(2)
        .map(|s| 0.5 * (s[1].0 - s[0].0) * (s[0].2 + s[1].2))
        .sum();
    Ok((samples[0].1, samples[samples.len() - 1].1, integral))
}
