//! Observables over stored trajectories: cone energies and fluxes, Morawetz
//! sums, potential decay, pointwise bounds, scattering deficits and decay
//! fits.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{
    energy, energy_density, integrate_linear, interpolate, local_energy, radial_derivative, volume_weight,
    FieldState, RadialGrid,
};
use crate::par;
use crate::params::ModelParams;
use crate::radiation::{radiation_gap, RadiationProfile};
use crate::solver_fd::Trajectory;

/// Every slack and threshold used by the checks, in one place.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerances {
    /// Relative slack on `flux_total ≤ E`.
    pub flux_total: f64,
    /// Relative slack on the windowed Morawetz sum `≤ 2E`.
    pub morawetz: f64,
    /// Relative slack on `‖g_+‖² ≤ E/c_d`.
    pub radiation_bound: f64,
    /// Relative slack on `Ẽ ≤ E`.
    pub energy_gap_sign: f64,
    /// Cone monotonicity violations allowed, relative to `E`.
    pub cone_monotonicity: f64,
    /// Flux identity residual allowed, relative to `E`.
    pub flux_residual: f64,
    /// Relative energy drift of a run.
    pub energy_drift: f64,
    /// Relative slack on the pointwise bounds.
    pub pointwise: f64,
    /// Energy distribution slack, relative to `E`.
    pub distribution: f64,
    /// Exterior deficit at the end relative to its value at `t = 10`.
    pub exterior_decay: f64,
    /// Increases of the exterior deficit allowed, relative to `E`.
    pub exterior_monotone: f64,
    /// Full deficit at the end relative to its initial value.
    pub full_deficit: f64,
    /// `(E - c_d‖g_+‖²)/E`.
    pub energy_gap: f64,
    /// Late-window minimum of `∫|u|^{p+1}` relative to its initial value.
    pub potential_min: f64,
    /// Isometry gap.
    pub isometry: f64,
    /// Round-trip error of the profile inversion.
    pub round_trip: f64,
    /// Minimum goodness of fit for decay rates.
    pub decay_r2: f64,
    /// Minimum error reduction factor per halving of `h`.
    pub refinement_factor: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            flux_total: 1e-3,
            morawetz: 1e-3,
            radiation_bound: 1e-3,
            energy_gap_sign: 1e-3,
            cone_monotonicity: 1e-6,
            flux_residual: 1e-2,
            energy_drift: 1e-3,
            pointwise: 1e-3,
            distribution: 1e-2,
            exterior_decay: 0.1,
            exterior_monotone: 1e-3,
            full_deficit: 0.15,
            energy_gap: 0.05,
            potential_min: 0.05,
            isometry: 0.02,
            round_trip: 0.05,
            decay_r2: 0.8,
            refinement_factor: 1.8,
        }
    }
}

/// Pass/fail outcome of one check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub bound: f64,
    pub detail: String,
}

impl Verdict {
    /// `value ≤ bound`.
    pub fn at_most(name: &str, value: f64, bound: f64, detail: impl Into<String>) -> Self {
        Verdict { name: name.into(), passed: value <= bound, value, bound, detail: detail.into() }
    }

    /// `value ≥ bound`.
    pub fn at_least(name: &str, value: f64, bound: f64, detail: impl Into<String>) -> Self {
        Verdict { name: name.into(), passed: value >= bound, value, bound, detail: detail.into() }
    }
}

/// Scalar observables at one time. Fields that were not requested are `None`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub e_total: f64,
    pub e_interior: Option<f64>,
    pub flux_residual: Option<f64>,
    pub morawetz_partials: Option<[f64; 3]>,
    pub potential_integral: Option<f64>,
    pub exterior_deficit: Option<f64>,
    pub full_deficit: Option<f64>,
    pub pointwise_ratio_max: Option<(f64, f64)>,
}

/// Least-squares line through `(log t, log value)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub exponent: f64,
    pub intercept: f64,
    pub r2: f64,
    pub window: (f64, f64),
    pub samples: usize,
}

/// Fits `value ≈ e^{intercept} t^{exponent}` over samples with `t` in
/// `window`; nonpositive samples are skipped.
pub fn fit_decay(series: &[(f64, f64)], window: (f64, f64)) -> Result<DecayFit> {
    if !(window.1 > window.0) {
        return Err(Error::Precondition(format!("empty fit window {window:?}")));
    }
    let pts: Vec<(f64, f64)> = series
        .iter()
        .filter(|(t, v)| *t >= window.0 && *t <= window.1 && *t > 0.0 && *v > 0.0 && v.is_finite())
        .map(|(t, v)| (t.ln(), v.ln()))
        .collect();
    if pts.len() < 8 {
        return Err(Error::Precondition(format!(
            "decay fit needs at least 8 positive samples in {window:?}, found {}",
            pts.len()
        )));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let exponent = sxy / sxx;
    let intercept = my - exponent * mx;
    let ss_res: f64 = pts.iter().map(|p| (p.1 - intercept - exponent * p.0).powi(2)).sum();
    let r2 = if syy <= 1e-300 { 1.0 } else { 1.0 - ss_res / syy };
    Ok(DecayFit { exponent, intercept, r2, window, samples: pts.len() })
}

/// Trapezoid rule over (possibly uneven) samples `(t, value)`.
pub fn time_integral(series: &[(f64, f64)]) -> f64 {
    series.windows(2).map(|w| 0.5 * (w[1].0 - w[0].0) * (w[0].1 + w[1].1)).sum()
}

fn snapshots_in(traj: &Trajectory, t1: f64, t2: f64) -> impl Iterator<Item = &FieldState> {
    let tol = 1e-9 * t2.abs().max(1.0);
    traj.snapshots.iter().filter(move |s| s.t >= t1 - tol && s.t <= t2 + tol)
}

/// Integrand of the cone flux at `r`: `c_d r^{d-1}(½(u_r + u_t)² - zeta/(p+1)|u|^{p+1})`,
/// and of the Hardy term: `c_d r^{d-3} u²`.
fn cone_integrands(state: &FieldState, ur: &[f64], grid: &RadialGrid, r: f64, params: &ModelParams) -> Result<(f64, f64)> {
    let off = || Error::Domain(format!("cone radius {r} outside [0, {}]", grid.r_max));
    let u = interpolate(&state.u, grid.h, r).ok_or_else(off)?;
    let ut = interpolate(&state.ut, grid.h, r).ok_or_else(off)?;
    let urv = interpolate(ur, grid.h, r).ok_or_else(off)?;
    let c_d = params.constants().c_d;
    let s = urv + ut;
    let flux = volume_weight(r, params.d, c_d) * (0.5 * s * s + params.potential_density(u));
    let hardy = c_d * r.powi(params.d as i32 - 3) * u * u;
    Ok((flux, hardy))
}

/// Both sides of the cone flux identity
/// `E(t₂; B(0, t₂-η)) - E(t₁; B(0, t₁-η)) = ∫_{t₁}^{t₂} c_d r^{d-1}(½(u_r+u_t)² - zeta/(p+1)|u|^{p+1})|_{r=t-η} dt`,
/// the right side sampled at the stored snapshots.
pub fn flux_balance(traj: &Trajectory, eta: f64, t1: f64, t2: f64, params: &ModelParams) -> Result<(f64, f64)> {
    if !(eta <= t1 && t1 < t2) {
        return Err(Error::Precondition(format!("need eta <= t1 < t2, got {eta}, {t1}, {t2}")));
    }
    let grid = traj.grid;
    if t2 - eta > grid.r_max {
        return Err(Error::Domain(format!("cone radius {} exceeds r_max = {}", t2 - eta, grid.r_max)));
    }
    let s1 = traj.at_time(t1).ok_or_else(|| Error::Precondition(format!("no snapshot at t1 = {t1}")))?;
    let s2 = traj.at_time(t2).ok_or_else(|| Error::Precondition(format!("no snapshot at t2 = {t2}")))?;
    let delta = local_energy(s2, &grid, 0.0, t2 - eta, params) - local_energy(s1, &grid, 0.0, t1 - eta, params);
    let samples = snapshots_in(traj, t1, t2)
        .map(|s| {
            let ur = radial_derivative(&s.u, grid.h);
            cone_integrands(s, &ur, &grid, s.t - eta, params).map(|(f, _)| (s.t, f))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((delta, time_integral(&samples)))
}

/// `(t, ΔE, surface)` for every snapshot from `t1` on whose cone stays inside
/// the domain: both sides of the flux identity between `t1` and `t`.
pub fn flux_series(traj: &Trajectory, eta: f64, t1: f64, params: &ModelParams) -> Result<Vec<(f64, f64, f64)>> {
    if !(eta <= t1) {
        return Err(Error::Precondition(format!("need eta <= t1, got {eta}, {t1}")));
    }
    let grid = traj.grid;
    let tol = 1e-9 * t1.abs().max(1.0);
    let items: Vec<&FieldState> =
        traj.snapshots.iter().filter(|s| s.t >= t1 - tol && s.t - eta <= grid.r_max).collect();
    let rows = par::map_items(&items, |s| {
        let ur = radial_derivative(&s.u, grid.h);
        let e = local_energy(s, &grid, 0.0, s.t - eta, params);
        cone_integrands(s, &ur, &grid, s.t - eta, params).map(|(f, _)| (s.t, e, f))
    });
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    let mut out = Vec::with_capacity(rows.len());
    let mut acc = 0.0;
    for (i, r) in rows.iter().enumerate() {
        if i > 0 {
            let q = &rows[i - 1];
            acc += 0.5 * (r.0 - q.0) * (q.2 + r.2);
        }
        out.push((r.0, r.1 - rows[0].1, acc));
    }
    Ok(out)
}

/// `E(t; B(0, t - η))` at every snapshot with `t ≥ η`.
pub fn cone_energy_series(traj: &Trajectory, eta: f64, params: &ModelParams) -> Vec<(f64, f64)> {
    let items: Vec<&FieldState> = traj.snapshots.iter().filter(|s| s.t >= eta).collect();
    par::map_items(&items, |s| (s.t, local_energy(s, &traj.grid, 0.0, s.t - eta, params)))
}

/// Most negative increment of `E(t; B(0, t - η))` between consecutive
/// snapshots (0 if it never decreases).
pub fn cone_monotonicity(traj: &Trajectory, eta: f64, params: &ModelParams) -> f64 {
    worst_increment(&cone_energy_series(traj, eta, params), -1.0)
}

/// Largest increment of `E(t; B(0, s - t))` over snapshots with `t ≤ s`
/// (0 if it never increases). The backward cone energy is nonincreasing.
pub fn backward_cone_monotonicity(traj: &Trajectory, s: f64, params: &ModelParams) -> f64 {
    let items: Vec<&FieldState> = traj.snapshots.iter().filter(|st| st.t <= s).collect();
    let series = par::map_items(&items, |st| (st.t, local_energy(st, &traj.grid, 0.0, s - st.t, params)));
    -worst_increment(&series, 1.0)
}

/// Most negative of `sign · (v_{i+1} - v_i)`, times `sign`, or 0.
fn worst_increment(series: &[(f64, f64)], sign: f64) -> f64 {
    let _ = sign;
    series
        .windows(2)
        .map(|w| if sign < 0.0 { w[1].1 - w[0].1 } else { w[0].1 - w[1].1 })
        .fold(0.0f64, f64::min)
}

/// `(flux_total, hardy_term)`: the cone flux and `∫ c_d r^{d-3} u² dt` along
/// `t - r = η`, accumulated over the stored window from `max(η, t_0)`.
pub fn cone_surface_bounds(traj: &Trajectory, eta: f64, params: &ModelParams) -> Result<(f64, f64)> {
    let grid = traj.grid;
    let items: Vec<&FieldState> = traj.snapshots.iter().filter(|s| s.t >= eta && s.t - eta <= grid.r_max).collect();
    let rows = par::map_items(&items, |s| {
        let ur = radial_derivative(&s.u, grid.h);
        cone_integrands(s, &ur, &grid, s.t - eta, params).map(|(f, hd)| (s.t, f, hd))
    });
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    let flux: Vec<(f64, f64)> = rows.iter().map(|r| (r.0, r.1)).collect();
    let hardy: Vec<(f64, f64)> = rows.iter().map(|r| (r.0, r.2)).collect();
    Ok((time_integral(&flux), time_integral(&hardy)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MorawetzReport {
    /// `(1/2R)∫∫_{|x|<R}(|∇u|² + |u_t|² + ((d-1)(p-1)-2)/(p+1)|u|^{p+1})`.
    pub interior: f64,
    /// `((d-1)/4R²)∫∫_{|x|=R}|u|²`.
    pub sphere: f64,
    /// `((d-1)(p-1)/2(p+1))∫∫_{|x|>R}|u|^{p+1}/|x|`.
    pub exterior: f64,
    pub energy: f64,
    /// `(interior + sphere + exterior) / 2E`.
    pub ratio: f64,
    pub passed: bool,
}

/// Per-snapshot integrands of the three Morawetz terms.
fn morawetz_rates(state: &FieldState, grid: &RadialGrid, radius: f64, params: &ModelParams) -> [f64; 3] {
    let d = params.d;
    let p = params.p;
    let c_d = params.constants().c_d;
    let ur = radial_derivative(&state.u, grid.h);
    let a = ((d as f64 - 1.0) * (p - 1.0) - 2.0) / (p + 1.0);
    let mut inner = vec![0.0; grid.len()];
    let mut outer = vec![0.0; grid.len()];
    par::fill2(&mut inner, &mut outer, |j| {
        let r = grid.r(j);
        let u = state.u[j];
        let pot = u.abs().powf(p + 1.0);
        let vol = volume_weight(r, d, c_d);
        let outer = if j == 0 { 0.0 } else { vol / r * pot };
        (vol * (ur[j] * ur[j] + state.ut[j] * state.ut[j] + a * pot), outer)
    });
    let u_r = interpolate(&state.u, grid.h, radius).unwrap_or(0.0);
    [
        integrate_linear(&inner, grid.h, 0.0, radius) / (2.0 * radius),
        (d as f64 - 1.0) / (4.0 * radius * radius) * volume_weight(radius, d, c_d) * u_r * u_r,
        (d as f64 - 1.0) * (p - 1.0) / (2.0 * (p + 1.0)) * integrate_linear(&outer, grid.h, radius, grid.r_max),
    ]
}

/// Cumulative Morawetz partial sums at every snapshot.
pub fn morawetz_partials(traj: &Trajectory, radius: f64, params: &ModelParams) -> Vec<(f64, [f64; 3])> {
    let rates = par::map_items(&traj.snapshots, |s| (s.t, morawetz_rates(s, &traj.grid, radius, params)));
    let mut acc = [0.0; 3];
    let mut out = Vec::with_capacity(rates.len());
    for (i, (t, r)) in rates.iter().enumerate() {
        if i > 0 {
            let (t0, r0) = &rates[i - 1];
            for k in 0..3 {
                acc[k] += 0.5 * (t - t0) * (r0[k] + r[k]);
            }
        }
        out.push((*t, acc));
    }
    out
}

/// The three Morawetz terms over the stored window and the check
/// `sum ≤ 2E(1 + slack)`, each term nonnegative.
pub fn morawetz_report(traj: &Trajectory, radius: f64, params: &ModelParams, slack: f64) -> Result<MorawetzReport> {
    if params.zeta != -1 {
        return Err(Error::Precondition("the Morawetz estimate is for the defocusing equation".into()));
    }
    if !(radius > 0.0) {
        return Err(Error::Precondition(format!("radius {radius} must be positive")));
    }
    let e = energy(traj.first(), &traj.grid, params);
    let [interior, sphere, exterior] = morawetz_partials(traj, radius, params).last().map(|x| x.1).unwrap_or([0.0; 3]);
    let sum = interior + sphere + exterior;
    let ratio = if e > 0.0 { sum / (2.0 * e) } else { 0.0 };
    let passed = interior >= 0.0 && sphere >= 0.0 && exterior >= 0.0 && sum <= 2.0 * e * (1.0 + slack);
    Ok(MorawetzReport { interior, sphere, exterior, energy: e, ratio, passed })
}

/// `e₊ = ½|∇u|² + ½|u_t|² + |u|^{p+1}/(p+1)` times the volume element.
fn positive_density(state: &FieldState, grid: &RadialGrid, params: &ModelParams) -> Vec<f64> {
    let ur = radial_derivative(&state.u, grid.h);
    let c_d = params.constants().c_d;
    let p = params.p;
    let mut out = vec![0.0; grid.len()];
    par::fill(&mut out, |j| {
        let u = state.u[j];
        volume_weight(grid.r(j), params.d, c_d)
            * (0.5 * ur[j] * ur[j] + 0.5 * state.ut[j] * state.ut[j] + u.abs().powf(p + 1.0) / (p + 1.0))
    });
    out
}

/// `(∫_{|t|>R}∫_{|x|<R} e₊, ∫_{-R}^{R}∫_{|x|>R} e₊)` over the stored window,
/// which should straddle `t = 0`.
pub fn energy_distribution_check(traj: &Trajectory, radius: f64, params: &ModelParams) -> (f64, f64) {
    let grid = traj.grid;
    let rows = par::map_items(&traj.snapshots, |s| {
        let dens = positive_density(s, &grid, params);
        (
            s.t,
            integrate_linear(&dens, grid.h, 0.0, radius),
            integrate_linear(&dens, grid.h, radius, grid.r_max),
        )
    });
    let tol = 1e-12 * radius.max(1.0);
    let mut lhs = 0.0;
    let mut rhs = 0.0;
    for w in rows.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        let mid = 0.5 * (a.0 + b.0);
        let dt = b.0 - a.0;
        if mid.abs() > radius + tol {
            lhs += 0.5 * dt * (a.1 + b.1);
        } else {
            rhs += 0.5 * dt * (a.2 + b.2);
        }
    }
    (lhs, rhs)
}

/// `∫ |u|^{p+1} dx` at every snapshot.
pub fn potential_series(traj: &Trajectory, params: &ModelParams) -> Result<Vec<(f64, f64)>> {
    if params.zeta == 0 {
        return Err(Error::Precondition("the potential series is defined for the nonlinear equation".into()));
    }
    let grid = traj.grid;
    let c_d = params.constants().c_d;
    Ok(par::map_items(&traj.snapshots, |s| {
        let mut dens = vec![0.0; grid.len()];
        par::fill(&mut dens, |j| volume_weight(grid.r(j), params.d, c_d) * s.u[j].abs().powf(params.p + 1.0));
        (s.t, integrate_linear(&dens, grid.h, 0.0, grid.r_max))
    }))
}

/// Minimum over the last third of the series.
pub fn late_minimum(series: &[(f64, f64)]) -> Option<f64> {
    let (t0, t1) = (series.first()?.0, series.last()?.0);
    let cut = t1 - (t1 - t0) / 3.0;
    series.iter().filter(|(t, _)| *t >= cut).map(|x| x.1).reduce(f64::min)
}

/// Explicit constants in `|u(r)| ≤ K₁ r^{-(d-2)/2}‖u‖_{Ḣ¹}` and
/// `|u(r)| ≤ K₂ r^{-2(d-1)/(p+3)}‖u‖_{Ḣ¹}^{2/(p+3)}‖u‖_{L^{p+1}}^{(p+1)/(p+3)}`.
pub fn pointwise_constants(params: &ModelParams) -> (f64, f64) {
    let c_d = params.constants().c_d;
    let d = params.d as f64;
    let p = params.p;
    let k1 = (c_d * (d - 2.0)).powf(-0.5);
    let k2 = (2f64.powf(2.0 * d + p + 1.0) / (c_d * c_d)).powf(1.0 / (p + 3.0));
    (k1, k2)
}

/// Maxima over `r ≥ h` of `|u(r)| r^{(d-2)/2} / ‖u‖_{Ḣ¹}` and of
/// `|u(r)| r^{2(d-1)/(p+3)} / (‖u‖_{Ḣ¹}^{2/(p+3)} ‖u‖_{L^{p+1}}^{(p+1)/(p+3)})`.
pub fn pointwise_ratio(state: &FieldState, grid: &RadialGrid, params: &ModelParams) -> (f64, f64) {
    let d = params.d;
    let p = params.p;
    let c_d = params.constants().c_d;
    let ur = radial_derivative(&state.u, grid.h);
    let mut grad = vec![0.0; grid.len()];
    let mut pot = vec![0.0; grid.len()];
    par::fill2(&mut grad, &mut pot, |j| {
        let vol = volume_weight(grid.r(j), d, c_d);
        (vol * ur[j] * ur[j], vol * state.u[j].abs().powf(p + 1.0))
    });
    let h1 = integrate_linear(&grad, grid.h, 0.0, grid.r_max).sqrt();
    let lp = integrate_linear(&pot, grid.h, 0.0, grid.r_max).powf(1.0 / (p + 1.0));
    if h1 == 0.0 {
        return (0.0, 0.0);
    }
    let e1 = (d as f64 - 2.0) / 2.0;
    let e2 = 2.0 * (d as f64 - 1.0) / (p + 3.0);
    let denom2 = h1.powf(2.0 / (p + 3.0)) * lp.powf((p + 1.0) / (p + 3.0));
    (1..grid.len()).fold((0.0f64, 0.0f64), |(m1, m2), j| {
        let r = grid.r(j);
        let a = state.u[j].abs();
        let r2 = if denom2 > 0.0 { a * r.powf(e2) / denom2 } else { 0.0 };
        (m1.max(a * r.powf(e1) / h1), m2.max(r2))
    })
}

fn difference_density(
    a: &FieldState,
    b: &FieldState,
    grid: &RadialGrid,
    params: &ModelParams,
) -> Vec<f64> {
    let du: Vec<f64> = a.u.iter().zip(&b.u).map(|(x, y)| x - y).collect();
    let dur = radial_derivative(&du, grid.h);
    let c_d = params.constants().c_d;
    let mut out = vec![0.0; grid.len()];
    par::fill(&mut out, |j| {
        let dt = a.ut[j] - b.ut[j];
        volume_weight(grid.r(j), params.d, c_d) * (dur[j] * dur[j] + dt * dt)
    });
    out
}

fn paired<'a>(traj: &'a Trajectory, free: &'a Trajectory) -> Result<Vec<(&'a FieldState, &'a FieldState)>> {
    if traj.grid != free.grid {
        return Err(Error::Precondition("trajectories live on different grids".into()));
    }
    traj.snapshots
        .iter()
        .map(|s| {
            free.at_time(s.t)
                .map(|f| (s, f))
                .ok_or_else(|| Error::Precondition(format!("free wave has no snapshot at t = {}", s.t)))
        })
        .collect()
}

/// `∫_{|x|>t-η}(|∇(u - ũ)|² + |∂_t(u - ũ)|²) dx` at every snapshot of `traj`;
/// `free` must hold snapshots at the same times.
pub fn exterior_deficit(traj: &Trajectory, free: &Trajectory, eta: f64, params: &ModelParams) -> Result<Vec<(f64, f64)>> {
    let grid = traj.grid;
    let pairs = paired(traj, free)?;
    Ok(par::map_items(&pairs, |(a, b)| {
        let dens = difference_density(a, b, &grid, params);
        (a.t, integrate_linear(&dens, grid.h, (a.t - eta).max(0.0), grid.r_max))
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FullDeficit {
    pub series: Vec<(f64, f64)>,
    pub energy: f64,
    /// `E - c_d ‖g_+‖²`.
    pub energy_gap: f64,
}

/// Whole-space deficit at every snapshot and the gap `E - c_d‖g_+‖²`.
pub fn full_deficit(traj: &Trajectory, free: &Trajectory, g: &RadiationProfile, params: &ModelParams) -> Result<FullDeficit> {
    let grid = traj.grid;
    let pairs = paired(traj, free)?;
    let series = par::map_items(&pairs, |(a, b)| {
        (a.t, integrate_linear(&difference_density(a, b, &grid, params), grid.h, 0.0, grid.r_max))
    });
    let e = energy(traj.first(), &grid, params);
    let gap = e - params.constants().c_d * g.norm_sq();
    Ok(FullDeficit { series, energy: e, energy_gap: gap })
}

/// `E(t; B(0, t - c t^{1-κ}))` at every snapshot where the radius is
/// positive, and the log-log fit over `window`.
pub fn interior_decay(
    traj: &Trajectory,
    c: f64,
    kappa: f64,
    window: (f64, f64),
    params: &ModelParams,
) -> Result<(Vec<(f64, f64)>, Result<DecayFit>)> {
    if !(kappa > 0.0 && kappa < 1.0) {
        return Err(Error::Precondition(format!("kappa = {kappa} must lie in (0, 1)")));
    }
    let items: Vec<&FieldState> = traj
        .snapshots
        .iter()
        .filter(|s| s.t > 0.0 && s.t - c * s.t.powf(1.0 - kappa) > 0.0)
        .collect();
    let series = par::map_items(&items, |s| {
        let radius = s.t - c * s.t.powf(1.0 - kappa);
        (s.t, local_energy(s, &traj.grid, 0.0, radius, params))
    });
    let fit = fit_decay(&series, window);
    Ok((series, fit))
}

/// `∫_{t - c t^γ}^{t + R} (|r^k u_r + g(t-r)|² + |r^k u_t - g(t-r)|²) dr` at
/// every snapshot, `k = (d-1)/2`.
pub fn middle_band_deficit(
    traj: &Trajectory,
    g: &RadiationProfile,
    c: f64,
    gamma: f64,
    reach: f64,
    params: &ModelParams,
) -> Result<Vec<(f64, f64)>> {
    let two_beta = 2.0 * params.constants().beta;
    if !(gamma >= 0.0 && gamma <= two_beta + 1e-12) {
        return Err(Error::Precondition(format!("gamma = {gamma} must lie in [0, 2 beta = {two_beta}]")));
    }
    let grid = traj.grid;
    Ok(par::map_items(&traj.snapshots, |s| {
        let lo = (s.t - c * s.t.max(0.0).powf(gamma)).max(0.0);
        (s.t, radiation_gap(s, &grid, g, lo, s.t + reach, params))
    }))
}

/// Largest increase between consecutive samples at or after `t_from`.
pub fn max_increase_after(series: &[(f64, f64)], t_from: f64) -> f64 {
    series
        .windows(2)
        .filter(|w| w[0].0 >= t_from)
        .map(|w| w[1].1 - w[0].1)
        .fold(0.0f64, f64::max)
}

/// Value of the series at the sample nearest to `t`.
pub fn value_near(series: &[(f64, f64)], t: f64) -> Option<f64> {
    series
        .iter()
        .min_by(|a, b| (a.0 - t).abs().total_cmp(&(b.0 - t).abs()))
        .map(|x| x.1)
}

/// Per-snapshot record of the cheap observables.
pub fn snapshot_record(state: &FieldState, grid: &RadialGrid, eta: f64, params: &ModelParams) -> DiagnosticsRecord {
    let dens = energy_density(state, grid, params);
    let e_total = integrate_linear(&dens, grid.h, 0.0, grid.r_max);
    let e_interior = (state.t > eta).then(|| integrate_linear(&dens, grid.h, 0.0, state.t - eta));
    let potential_integral = (params.zeta != 0).then(|| {
        let c_d = params.constants().c_d;
        let mut pot = vec![0.0; grid.len()];
        par::fill(&mut pot, |j| volume_weight(grid.r(j), params.d, c_d) * state.u[j].abs().powf(params.p + 1.0));
        integrate_linear(&pot, grid.h, 0.0, grid.r_max)
    });
    DiagnosticsRecord {
        t: state.t,
        e_total,
        e_interior,
        potential_integral,
        pointwise_ratio_max: Some(pointwise_ratio(state, grid, params)),
        ..Default::default()
    }
}
