//! Radiation profiles `g_+(η) = lim ½ v_+(t - η, t)`: extraction from
//! stored evolutions, the approximate free wave
//! `ũ = -r^{-(d-1)/2} ∫_{t-r}^{t+r} g`, and its use to build free-wave data
//! with a prescribed profile.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{energy, integrate_linear, interpolate, radial_derivative, to_reduced, FieldState, RadialGrid};
use crate::history::ReducedHistory;
use crate::par;
use crate::params::ModelParams;
use crate::solver_char::evolve_char_keep;
use crate::solver_fd::{evolve_with, EvolutionConfig};

/// Fraction of the window, at each end, over which profiles are ramped to 0.
pub const TAPER_FRACTION: f64 = 0.05;

/// Uniform grid in retarded time `η = t - r`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EtaGrid {
    pub eta_min: f64,
    pub d_eta: f64,
    /// Number of intervals.
    pub n: usize,
}

impl EtaGrid {
    /// Grid over `[eta_min, eta_max]` with spacing as close to `d_eta` as a
    /// whole number of intervals allows.
    pub fn new(eta_min: f64, eta_max: f64, d_eta: f64) -> Result<Self> {
        if !(eta_max > eta_min) || !(d_eta > 0.0) || !eta_min.is_finite() || !eta_max.is_finite() {
            return Err(Error::Precondition(format!(
                "eta grid needs eta_min < eta_max and d_eta > 0, got [{eta_min}, {eta_max}] step {d_eta}"
            )));
        }
        let n = ((eta_max - eta_min) / d_eta).round().max(2.0) as usize;
        Ok(EtaGrid { eta_min, d_eta: (eta_max - eta_min) / n as f64, n })
    }

    pub fn eta_max(&self) -> f64 {
        self.eta_min + self.n as f64 * self.d_eta
    }

    pub fn len(&self) -> usize {
        self.n + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn eta(&self, i: usize) -> f64 {
        self.eta_min + i as f64 * self.d_eta
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.eta(i)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadiationProfile {
    pub eta: EtaGrid,
    pub g: Vec<f64>,
    /// Per-node convergence estimate; zero for prescribed profiles.
    pub quality: Vec<f64>,
    /// Extraction time, `None` for prescribed profiles.
    pub t_extract: Option<f64>,
}

impl RadiationProfile {
    /// Prescribed profile sampled from `f`.
    pub fn from_fn(eta: EtaGrid, f: impl Fn(f64) -> f64) -> Self {
        RadiationProfile {
            g: eta.nodes().into_iter().map(f).collect(),
            quality: vec![0.0; eta.len()],
            eta,
            t_extract: None,
        }
    }

    pub fn zeros(eta: EtaGrid) -> Self {
        Self::from_fn(eta, |_| 0.0)
    }

    /// Piecewise-linear value, zero outside the window.
    pub fn value_at(&self, eta: f64) -> f64 {
        let s = eta - self.eta.eta_min;
        if s < 0.0 || s > self.eta.n as f64 * self.eta.d_eta {
            return 0.0;
        }
        interpolate(&self.g, self.eta.d_eta, s).unwrap_or(0.0)
    }

    /// `‖g‖²_{L²}` of the piecewise-linear interpolant (trapezoid rule on `g²`).
    pub fn norm_sq(&self) -> f64 {
        let g = &self.g;
        self.eta.d_eta * par::sum(self.eta.n, |i| 0.5 * (g[i] * g[i] + g[i + 1] * g[i + 1]))
    }

    pub fn integral(&self) -> f64 {
        let g = &self.g;
        self.eta.d_eta * par::sum(self.eta.n, |i| 0.5 * (g[i] + g[i + 1]))
    }

    pub fn max_quality(&self) -> f64 {
        self.quality.iter().fold(0.0f64, |m, q| m.max(*q))
    }

    /// `‖self - reference‖ / ‖reference‖` on this profile's grid.
    pub fn relative_l2_error(&self, reference: &RadiationProfile) -> f64 {
        let diff: Vec<f64> = (0..self.eta.len())
            .map(|i| self.g[i] - reference.value_at(self.eta.eta(i)))
            .collect();
        let num = self.eta.d_eta * par::sum(self.eta.n, |i| 0.5 * (diff[i] * diff[i] + diff[i + 1] * diff[i + 1]));
        let den = reference.norm_sq();
        if den == 0.0 {
            if num == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            (num / den).sqrt()
        }
    }

    /// Multiplies by a cubic ramp `3x² - 2x³` over [`TAPER_FRACTION`] of the
    /// window at each end.
    pub fn tapered(&self) -> Self {
        let m = ((TAPER_FRACTION * self.eta.n as f64).ceil() as usize).max(1);
        let n = self.eta.n;
        let ramp = |i: usize| {
            let k = i.min(n - i);
            if k >= m {
                1.0
            } else {
                let x = k as f64 / m as f64;
                x * x * (3.0 - 2.0 * x)
            }
        };
        let mut out = self.clone();
        for (i, v) in out.g.iter_mut().enumerate() {
            *v *= ramp(i);
        }
        out
    }
}

/// Samples `g(η) = ½ v_+(t - η, t)` at the largest time of `t_list`;
/// `quality(η)` is half the change of `v_+` from the second-largest time.
pub fn extract_radiation<H: ReducedHistory + ?Sized>(
    history: &H,
    eta: &EtaGrid,
    t_list: &[f64],
) -> Result<RadiationProfile> {
    if t_list.len() < 2 {
        return Err(Error::Precondition("extraction needs at least two times".into()));
    }
    if t_list.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Precondition("extraction times must increase".into()));
    }
    let grid = *history.grid();
    let (t_prev, t_last) = (t_list[t_list.len() - 2], t_list[t_list.len() - 1]);
    for &t in t_list {
        if t - eta.eta_max() < 1.0 {
            return Err(Error::Precondition(format!(
                "t - eta = {} < 1 at t = {t}; extraction needs t - eta_max >= 1",
                t - eta.eta_max()
            )));
        }
        if t - eta.eta_min > grid.r_max + 1e-9 {
            return Err(Error::Domain(format!(
                "sample r = t - eta = {} exceeds r_max = {} at t = {t}",
                t - eta.eta_min,
                grid.r_max
            )));
        }
    }
    let idx = |t: f64| {
        history
            .index_of(t)
            .ok_or_else(|| Error::Precondition(format!("no snapshot at t = {t}")))
    };
    let last = history.reduced(idx(t_last)?);
    let prev = history.reduced(idx(t_prev)?);
    let sample = |v: &[f64], t: f64, e: f64| interpolate(v, grid.h, t - e).unwrap_or(0.0);
    let mut g = vec![0.0; eta.len()];
    let mut quality = vec![0.0; eta.len()];
    par::fill2(&mut g, &mut quality, |i| {
        let e = eta.eta(i);
        let a = sample(&last.v_plus, t_last, e);
        let b = sample(&prev.v_plus, t_prev, e);
        (0.5 * a, 0.5 * (a - b).abs())
    });
    Ok(RadiationProfile { eta: *eta, g, quality, t_extract: Some(t_last) })
}

/// Smooth radial cutoff `1 → 0` over `[start, start + width]` (quintic
/// smoothstep, C²).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cutoff {
    pub start: f64,
    pub width: f64,
}

impl Cutoff {
    /// Value and radial derivative.
    pub fn eval(&self, r: f64) -> (f64, f64) {
        let x = (r - self.start) / self.width;
        if x <= 0.0 {
            (1.0, 0.0)
        } else if x >= 1.0 {
            (0.0, 0.0)
        } else {
            let s = x * x * x * (10.0 - 15.0 * x + 6.0 * x * x);
            let ds = 30.0 * x * x * (1.0 - x) * (1.0 - x) / self.width;
            (1.0 - s, -ds)
        }
    }
}

/// Closed-form evaluator of `ũ = -r^{-k} ∫_{t-r}^{t+r} g(η) dη`, `k = (d-1)/2`,
/// for a piecewise-linear `g`.
#[derive(Debug, Clone)]
pub struct FreeWave {
    profile: RadiationProfile,
    /// Running integral of `g` at the grid nodes.
    cumulative: Vec<f64>,
    k: f64,
    d: u32,
    cutoff: Option<Cutoff>,
}

/// Builds the evaluator for the tapered profile.
pub fn approximate_free_wave(g: &RadiationProfile, params: &ModelParams) -> FreeWave {
    let profile = g.tapered();
    let h = profile.eta.d_eta;
    let mut cumulative = vec![0.0; profile.g.len()];
    for i in 1..cumulative.len() {
        cumulative[i] = cumulative[i - 1] + 0.5 * h * (profile.g[i - 1] + profile.g[i]);
    }
    FreeWave { profile, cumulative, k: params.half_dim(), d: params.d, cutoff: None }
}

impl FreeWave {
    pub fn profile(&self) -> &RadiationProfile {
        &self.profile
    }

    pub fn with_cutoff(mut self, cutoff: Cutoff) -> Self {
        self.cutoff = Some(cutoff);
        self
    }

    /// `∫_{-∞}^{x} g`.
    fn antiderivative(&self, x: f64) -> f64 {
        let e = &self.profile.eta;
        let s = (x - e.eta_min) / e.d_eta;
        if s <= 0.0 {
            return 0.0;
        }
        if s >= e.n as f64 {
            return self.cumulative[e.n];
        }
        let i = (s.floor() as usize).min(e.n - 1);
        let f = s - i as f64;
        let (a, b) = (self.profile.g[i], self.profile.g[i + 1]);
        self.cumulative[i] + e.d_eta * f * (a + 0.5 * (b - a) * f)
    }

    /// `(w̃, w̃_t, w̃_r)` with `w̃ = r^k ũ = -(G(t + r) - G(t - r))`.
    pub fn reduced(&self, r: f64, t: f64) -> (f64, f64, f64) {
        let g = |x: f64| self.profile.value_at(x);
        let w = -(self.antiderivative(t + r) - self.antiderivative(t - r));
        let wt = -(g(t + r) - g(t - r));
        let wr = -(g(t + r) + g(t - r));
        (w, wt, wr)
    }

    /// `(ũ, ũ_t, ũ_r)` at `(r, t)`, including the cutoff if one is set. At
    /// the origin the limits are returned: zero for `d > 3`, and
    /// `(-2g(t), -2g'(t), 0)` for `d = 3`.
    pub fn eval(&self, r: f64, t: f64) -> (f64, f64, f64) {
        if r <= 0.0 {
            if self.d != 3 {
                return (0.0, 0.0, 0.0);
            }
            let e = self.profile.eta.d_eta;
            let g = |x: f64| self.profile.value_at(x);
            return (-2.0 * g(t), -(g(t + e) - g(t - e)) / e, 0.0);
        }
        let (w, wt, wr) = self.reduced(r, t);
        let inv = r.powf(-self.k);
        let (u, ut, ur) = (w * inv, wt * inv, (wr - self.k * w / r) * inv);
        match self.cutoff {
            None => (u, ut, ur),
            Some(c) => {
                let (chi, dchi) = c.eval(r);
                (chi * u, chi * ut, chi * ur + dchi * u)
            }
        }
    }

    /// `(ũ, ũ_t)` on the mesh at time `t`.
    pub fn sample(&self, grid: &RadialGrid, t: f64) -> FieldState {
        let mut s = FieldState::zeros(grid, t);
        par::fill2(&mut s.u, &mut s.ut, |j| {
            let (u, ut, _) = self.eval(grid.r(j), t);
            (u, ut)
        });
        s
    }
}

/// Radius from which [`invert_radiation`] cuts off the `C₁ r^{-k}` exterior
/// tail of `ũ` at `t_match`, and the cutoff width; `None` for mean-zero
/// profiles, whose `ũ` has no tail.
pub fn tail_cutoff(g: &RadiationProfile, t_match: f64) -> Option<Cutoff> {
    let total: f64 = g.tapered().integral();
    let scale = g.eta.d_eta * g.g.iter().map(|v| v.abs()).sum::<f64>();
    if total.abs() <= 1e-9 * scale {
        None
    } else {
        Some(Cutoff { start: t_match - g.eta.eta_min + 1.0, width: (0.5 * t_match).max(10.0) })
    }
}

/// Smallest `r_max` accepted by [`invert_radiation`].
pub fn inversion_r_max(g: &RadiationProfile, t_match: f64) -> f64 {
    match tail_cutoff(g, t_match) {
        Some(c) => c.start + c.width + 2.0,
        None => t_match - g.eta.eta_min + 2.0,
    }
}

/// Data at `t = 0` of a free wave whose radiation profile approximates `g`:
/// `(ũ, ũ_t)` sampled at `t_match` and evolved backward with `zeta = 0`.
pub fn invert_radiation(
    g: &RadiationProfile,
    t_match: f64,
    grid: &RadialGrid,
    params: &ModelParams,
) -> Result<FieldState> {
    if !(t_match > g.eta.eta_max() + 1.0) {
        return Err(Error::Precondition(format!(
            "t_match = {t_match} must exceed eta_max + 1 = {}",
            g.eta.eta_max() + 1.0
        )));
    }
    let needed = inversion_r_max(g, t_match);
    if grid.r_max < needed {
        return Err(Error::Domain(format!(
            "inversion at t_match = {t_match} needs r_max >= {needed}, grid has {}",
            grid.r_max
        )));
    }
    let mut wave = approximate_free_wave(g, params);
    if let Some(c) = tail_cutoff(g, t_match) {
        wave = wave.with_cutoff(c);
    }
    let start = wave.sample(grid, t_match);
    let cfg = EvolutionConfig::new(EvolutionConfig::DEFAULT_CFL, t_match, usize::MAX)?;
    let mut last = None;
    evolve_with(&start, grid, &cfg, &params.as_linear(), true, |s| {
        last = Some(s.clone());
        Ok(())
    })?;
    let mut data = last.expect("evolution observes its final state");
    data.t = 0.0;
    Ok(data)
}

/// `(‖T_+(u₀, u₁)‖², ‖(u₀, u₁)‖²_{Ḣ¹×L²} / (2c_d))`, with the profile extracted
/// from a linear characteristic evolution at `t_extract` (quality from
/// `0.9 t_extract`).
pub fn isometry_residual(
    data: &FieldState,
    grid: &RadialGrid,
    params: &ModelParams,
    eta: &EtaGrid,
    t_extract: f64,
) -> Result<(f64, f64)> {
    let linear = params.as_linear();
    let c_d = linear.constants().c_d;
    let rhs = energy(data, grid, &linear) / c_d;
    if data.u.iter().chain(&data.ut).all(|v| *v == 0.0) {
        return Ok((0.0, rhs));
    }
    let profile = extract_from_data(data, grid, &linear, eta, t_extract)?;
    Ok((profile.norm_sq(), rhs))
}

/// Forward characteristic evolution of `data` and extraction at
/// `t_extract`, with quality from `0.9 t_extract`.
pub fn extract_from_data(
    data: &FieldState,
    grid: &RadialGrid,
    params: &ModelParams,
    eta: &EtaGrid,
    t_extract: f64,
) -> Result<RadiationProfile> {
    data.check(grid)?;
    let round = |t: f64| data.t + ((t - data.t) / grid.h).round() * grid.h;
    let times = [round(0.9 * t_extract), round(t_extract)];
    let traj = evolve_char_keep(&to_reduced(data, grid, params), grid, &times, params)?;
    extract_radiation(&traj, eta, &times)
}

/// `∫_{r_lo}^{r_hi} (|r^k u_r + g(t - r)|² + |r^k u_t - g(t - r)|²) dr` at the
/// state's time, `k = (d-1)/2`.
pub fn radiation_gap(
    state: &FieldState,
    grid: &RadialGrid,
    g: &RadiationProfile,
    r_lo: f64,
    r_hi: f64,
    params: &ModelParams,
) -> f64 {
    let ur = radial_derivative(&state.u, grid.h);
    let k = params.half_dim();
    let mut density = vec![0.0; grid.len()];
    par::fill(&mut density, |j| {
        let r = grid.r(j);
        let wgt = r.powf(k);
        let gv = g.value_at(state.t - r);
        let a = wgt * ur[j] + gv;
        let b = wgt * state.ut[j] - gv;
        a * a + b * b
    });
    integrate_linear(&density, grid.h, r_lo, r_hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn bump(x: f64) -> f64 {
        if x.abs() >= 1.0 {
            0.0
        } else {
            (1.0 - x * x).powi(4)
        }
    }

    #[test]
    fn eta_grid_snaps_spacing() {
        let e = EtaGrid::new(-2.0, 3.0, 0.3).unwrap();
        assert_eq!(e.n, 17);
        assert_relative_eq!(e.eta_max(), 3.0, epsilon = 1e-14);
        assert!(EtaGrid::new(1.0, 1.0, 0.1).is_err());
        assert!(EtaGrid::new(0.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn taper_ramps_ends_only() {
        let e = EtaGrid::new(0.0, 10.0, 0.1).unwrap();
        let p = RadiationProfile::from_fn(e, |_| 1.0).tapered();
        assert_eq!(p.g[0], 0.0);
        assert_eq!(p.g[100], 0.0);
        assert_eq!(p.g[50], 1.0);
        assert_eq!(p.g[5], 1.0);
        assert!(p.g[3] > 0.0 && p.g[3] < 1.0);
        assert!(p.g.windows(2).take(5).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn norm_and_integral_of_linear_interpolant() {
        let e = EtaGrid::new(-1.0, 1.0, 0.5).unwrap();
        let p = RadiationProfile::from_fn(e, |x| x);
        assert_relative_eq!(p.integral(), 0.0, epsilon = 1e-15);
        // trapezoid of x² on 4 intervals of 0.5
        assert_relative_eq!(p.norm_sq(), 0.75, epsilon = 1e-14);
    }

    #[test]
    fn zero_profile_gives_zero_wave() {
        let e = EtaGrid::new(-3.0, 3.0, 0.05).unwrap();
        let params = ModelParams { d: 5, p: 2.0, zeta: 0 };
        let w = approximate_free_wave(&RadiationProfile::zeros(e), &params);
        for (r, t) in [(0.0, 1.0), (0.5, 2.0), (10.0, 3.0)] {
            assert_eq!(w.eval(r, t), (0.0, 0.0, 0.0));
        }
    }

    #[test]
    fn wave_vanishes_inside_the_gap() {
        let e = EtaGrid::new(-2.0, 2.0, 0.01).unwrap();
        let params = ModelParams { d: 4, p: 7.0 / 3.0, zeta: 0 };
        let w = approximate_free_wave(&RadiationProfile::from_fn(e, bump), &params);
        let t = 10.0;
        for r in [0.5, 3.0, 7.9] {
            assert_eq!(w.eval(r, t).0, 0.0);
        }
    }

    #[test]
    fn exterior_tail_is_the_total_integral() {
        let e = EtaGrid::new(-2.0, 2.0, 0.01).unwrap();
        let params = ModelParams { d: 6, p: 1.8, zeta: 0 };
        let profile = RadiationProfile::from_fn(e, bump);
        let w = approximate_free_wave(&profile, &params);
        let c1 = -w.profile().integral();
        for (r, t) in [(5.0, 2.0), (12.0, 1.0)] {
            assert_relative_eq!(w.eval(r, t).0, c1 * r.powf(-2.5), max_relative = 1e-12);
        }
    }

    #[test]
    fn reduced_derivatives_match_differences() {
        let e = EtaGrid::new(-2.0, 2.0, 0.001).unwrap();
        let params = ModelParams { d: 5, p: 2.0, zeta: 0 };
        let w = approximate_free_wave(&RadiationProfile::from_fn(e, bump), &params);
        let (r, t, d) = (3.1, 3.7, 1e-4);
        let (_, ut, ur) = w.eval(r, t);
        let dt = (w.eval(r, t + d).0 - w.eval(r, t - d).0) / (2.0 * d);
        let dr = (w.eval(r + d, t).0 - w.eval(r - d, t).0) / (2.0 * d);
        assert_relative_eq!(ut, dt, max_relative = 1e-4);
        assert_relative_eq!(ur, dr, max_relative = 1e-4);
    }

    #[test]
    fn cutoff_is_smooth_step() {
        let c = Cutoff { start: 2.0, width: 4.0 };
        assert_eq!(c.eval(1.0), (1.0, 0.0));
        assert_eq!(c.eval(7.0), (0.0, 0.0));
        let (v, dv) = c.eval(4.0);
        assert_relative_eq!(v, 0.5, epsilon = 1e-15);
        assert_relative_eq!(dv, -30.0 / 16.0 / 4.0, epsilon = 1e-14);
    }

    #[test]
    fn inversion_rejects_small_domain_and_early_match() {
        let e = EtaGrid::new(-2.0, 2.0, 0.05).unwrap();
        let params = ModelParams { d: 3, p: 3.0, zeta: 0 };
        let p = RadiationProfile::from_fn(e, bump);
        let g = RadialGrid::new(20.0, 400).unwrap();
        assert!(matches!(invert_radiation(&p, 2.5, &g, &params), Err(Error::Precondition(_))));
        assert!(matches!(invert_radiation(&p, 30.0, &g, &params), Err(Error::Domain(_))));
        // nonzero mean: the tail cutoff enlarges the requirement
        assert!(inversion_r_max(&p, 10.0) > 10.0 + 2.0 + 2.0);
        let odd = RadiationProfile::from_fn(e, |x| x * bump(x));
        assert_relative_eq!(inversion_r_max(&odd, 10.0), 14.0);
    }

    #[test]
    fn zero_profile_inverts_to_zero() {
        let e = EtaGrid::new(-2.0, 2.0, 0.05).unwrap();
        let params = ModelParams { d: 5, p: 2.0, zeta: 0 };
        let g = RadialGrid::new(20.0, 400).unwrap();
        let data = invert_radiation(&RadiationProfile::zeros(e), 8.0, &g, &params).unwrap();
        assert!(data.u.iter().chain(&data.ut).all(|v| *v == 0.0));
        assert_eq!(data.t, 0.0);
    }

    #[test]
    fn isometry_of_zero_data() {
        let g = RadialGrid::new(20.0, 400).unwrap();
        let e = EtaGrid::new(-2.0, 2.0, g.h).unwrap();
        let params = ModelParams { d: 4, p: 7.0 / 3.0, zeta: 0 };
        assert_eq!(isometry_residual(&FieldState::zeros(&g, 0.0), &g, &params, &e, 10.0).unwrap(), (0.0, 0.0));
    }
}
