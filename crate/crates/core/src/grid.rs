//! Uniform radial meshes, field snapshots, the `u <-> (w, v_+, v_-)`
//! transforms and quadrature-based energies.
//!
//! All integrals over `R^d` are reduced to `c_d ∫ f(r) r^{d-1} dr` and
//! evaluated with the composite trapezoid rule on the mesh.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;
use crate::params::ModelParams;

pub const MIN_NODES: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadialGrid {
    pub r_max: f64,
    /// Number of cells; nodes are `r_j = j h` for `j = 0..=n`.
    pub n: usize,
    pub h: f64,
}

impl RadialGrid {
    pub fn new(r_max: f64, n: usize) -> Result<Self> {
        if !(r_max.is_finite() && r_max > 0.0) {
            return Err(Error::Grid(format!("r_max = {r_max} must be positive")));
        }
        if n < MIN_NODES {
            return Err(Error::Grid(format!("n = {n} is below the minimum of {MIN_NODES}")));
        }
        Ok(RadialGrid { r_max, n, h: r_max / n as f64 })
    }

    /// Grid with spacing as close to `h` as an integer cell count allows.
    pub fn with_spacing(r_max: f64, h: f64) -> Result<Self> {
        if !(h.is_finite() && h > 0.0) {
            return Err(Error::Grid(format!("h = {h} must be positive")));
        }
        let n = (r_max / h).round() as usize;
        Self::new(r_max, n)
    }

    pub fn len(&self) -> usize {
        self.n + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn r(&self, j: usize) -> f64 {
        j as f64 * self.h
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.len()).map(|j| self.r(j)).collect()
    }

    pub fn sample(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        (0..self.len()).map(|j| f(self.r(j))).collect()
    }
}

/// `r^{m/2}`, exact for integer powers.
#[inline]
pub(crate) fn half_power(r: f64, m: u32) -> f64 {
    let whole = r.powi((m / 2) as i32);
    if m.is_multiple_of(2) {
        whole
    } else {
        whole * r.sqrt()
    }
}

/// `r^{(d-1)/2}`.
#[inline]
pub fn reduction_weight(r: f64, d: u32) -> f64 {
    half_power(r, d - 1)
}

/// `c_d r^{d-1}`, the radial volume element.
#[inline]
pub(crate) fn volume_weight(r: f64, d: u32, c_d: f64) -> f64 {
    c_d * r.powi(d as i32 - 1)
}

/// Sampled `(u, u_t)` at time `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldState {
    pub t: f64,
    pub u: Vec<f64>,
    pub ut: Vec<f64>,
}

impl FieldState {
    pub fn zeros(grid: &RadialGrid, t: f64) -> Self {
        FieldState { t, u: vec![0.0; grid.len()], ut: vec![0.0; grid.len()] }
    }

    pub fn from_fns(grid: &RadialGrid, t: f64, u: impl Fn(f64) -> f64, ut: impl Fn(f64) -> f64) -> Self {
        FieldState { t, u: grid.sample(u), ut: grid.sample(ut) }
    }

    pub fn check(&self, grid: &RadialGrid) -> Result<()> {
        if self.u.len() != grid.len() || self.ut.len() != grid.len() {
            return Err(Error::State(format!(
                "state has {} / {} samples, grid has {} nodes",
                self.u.len(),
                self.ut.len(),
                grid.len()
            )));
        }
        if let Some(j) = self.u.iter().chain(&self.ut).position(|v| !v.is_finite()) {
            return Err(Error::State(format!("non-finite sample at index {}", j % grid.len())));
        }
        Ok(())
    }

    /// The same samples on a larger grid with the same spacing, zero beyond
    /// the old outer node.
    pub fn padded(&self, from: &RadialGrid, to: &RadialGrid) -> Result<FieldState> {
        self.check(from)?;
        if (from.h - to.h).abs() > 1e-12 * from.h || to.len() < from.len() {
            return Err(Error::Grid(format!(
                "cannot pad from (h = {}, {} nodes) to (h = {}, {} nodes)",
                from.h,
                from.len(),
                to.h,
                to.len()
            )));
        }
        let mut out = FieldState::zeros(to, self.t);
        out.u[..from.len()].copy_from_slice(&self.u);
        out.ut[..from.len()].copy_from_slice(&self.ut);
        Ok(out)
    }
}

/// Sampled `(w, v_+, v_-)` at time `t`, with `w = r^{(d-1)/2} u`,
/// `v_+ = w_t - w_r` and `v_- = w_t + w_r`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReducedState {
    pub t: f64,
    pub w: Vec<f64>,
    pub v_plus: Vec<f64>,
    pub v_minus: Vec<f64>,
}

impl ReducedState {
    pub fn zeros(grid: &RadialGrid, t: f64) -> Self {
        let n = grid.len();
        ReducedState { t, w: vec![0.0; n], v_plus: vec![0.0; n], v_minus: vec![0.0; n] }
    }

    pub fn w_t(&self, j: usize) -> f64 {
        0.5 * (self.v_plus[j] + self.v_minus[j])
    }

    pub fn w_r(&self, j: usize) -> f64 {
        0.5 * (self.v_minus[j] - self.v_plus[j])
    }

    fn scale(&self) -> f64 {
        self.w
            .iter()
            .chain(&self.v_plus)
            .chain(&self.v_minus)
            .fold(1.0f64, |m, v| m.max(v.abs()))
    }

    /// Regularity at the origin: `w(0) = 0` and `v_+(0) + v_-(0) = 0`.
    pub fn check_origin(&self) -> Result<()> {
        let tol = 1e-12 * self.scale();
        if self.w[0].abs() > tol {
            return Err(Error::State(format!("w(0) = {:e} must vanish", self.w[0])));
        }
        let s = self.v_plus[0] + self.v_minus[0];
        if s.abs() > tol {
            return Err(Error::State(format!("v_+(0) + v_-(0) = {s:e} must vanish")));
        }
        Ok(())
    }
}

/// Second-order radial derivative: centered in the interior, one-sided at both ends.
pub fn radial_derivative(f: &[f64], h: f64) -> Vec<f64> {
    let n = f.len() - 1;
    let mut out = vec![0.0; f.len()];
    let inv2h = 0.5 / h;
    par::fill(&mut out, |j| {
        if j == 0 {
            (-3.0 * f[0] + 4.0 * f[1] - f[2]) * inv2h
        } else if j == n {
            (3.0 * f[n] - 4.0 * f[n - 1] + f[n - 2]) * inv2h
        } else {
            (f[j + 1] - f[j - 1]) * inv2h
        }
    });
    out
}

/// Composite trapezoid rule for nodal values on a uniform mesh.
pub fn trapezoid(values: &[f64], h: f64) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let inner = par::sum(n, |j| values[j]);
    h * (inner - 0.5 * (values[0] + values[n - 1]))
}

/// Exact integral over `[a, b]` of the piecewise-linear interpolant of
/// nodal values on `r_j = j h`. Clipped to the mesh.
pub fn integrate_linear(values: &[f64], h: f64, a: f64, b: f64) -> f64 {
    let r_end = (values.len() - 1) as f64 * h;
    let a = a.max(0.0);
    let b = b.min(r_end);
    if b <= a {
        return 0.0;
    }
    let interp = |x: f64, k: usize| {
        let s = (x - k as f64 * h) / h;
        values[k] + (values[k + 1] - values[k]) * s
    };
    let last_cell = values.len() - 2;
    let ka = ((a / h).floor() as usize).min(last_cell);
    let kb = ((b / h).floor() as usize).min(last_cell);
    if ka == kb {
        return 0.5 * (b - a) * (interp(a, ka) + interp(b, ka));
    }
    let head_end = (ka + 1) as f64 * h;
    let head = 0.5 * (head_end - a) * (interp(a, ka) + values[ka + 1]);
    let tail_start = kb as f64 * h;
    let tail = 0.5 * (b - tail_start) * (values[kb] + interp(b, kb));
    let full = if kb > ka + 1 {
        let m = kb - ka - 1;
        let base = ka + 1;
        h * par::sum(m, |c| 0.5 * (values[base + c] + values[base + c + 1]))
    } else {
        0.0
    };
    head + full + tail
}

/// Linear interpolation of nodal values at radius `r`; `None` outside the mesh.
pub fn interpolate(values: &[f64], h: f64, r: f64) -> Option<f64> {
    let n = values.len() - 1;
    let s = r / h;
    if !(s >= -1e-9 && s <= n as f64 + 1e-9) {
        return None;
    }
    let s = s.clamp(0.0, n as f64);
    let k = (s.floor() as usize).min(n - 1);
    let frac = s - k as f64;
    Some(values[k] + (values[k + 1] - values[k]) * frac)
}

/// Energy density per unit radius, `c_d r^{d-1} (½u_r² + ½u_t² - zeta/(p+1)|u|^{p+1})`.
pub fn energy_density(state: &FieldState, grid: &RadialGrid, params: &ModelParams) -> Vec<f64> {
    let ur = radial_derivative(&state.u, grid.h);
    let c_d = params.constants().c_d;
    let mut out = vec![0.0; grid.len()];
    par::fill(&mut out, |j| {
        let r = grid.r(j);
        let e = 0.5 * ur[j] * ur[j] + 0.5 * state.ut[j] * state.ut[j] + params.potential_density(state.u[j]);
        volume_weight(r, params.d, c_d) * e
    });
    out
}

/// Total energy; the potential term is absent for the linear equation.
pub fn energy(state: &FieldState, grid: &RadialGrid, params: &ModelParams) -> f64 {
    trapezoid(&energy_density(state, grid, params), grid.h)
}

/// `∫ (1 + |x|^kappa) e(x) dx`. With `kappa = 0` the weight is 2, so this
/// returns exactly twice [`energy`].
pub fn weighted_energy(state: &FieldState, grid: &RadialGrid, kappa: f64, params: &ModelParams) -> f64 {
    let density = energy_density(state, grid, params);
    let mut weighted = vec![0.0; grid.len()];
    par::fill(&mut weighted, |j| (1.0 + grid.r(j).powf(kappa)) * density[j]);
    trapezoid(&weighted, grid.h)
}

/// Energy in the annulus `r_lo < |x| < r_hi`. Additive over adjacent annuli.
pub fn local_energy(state: &FieldState, grid: &RadialGrid, r_lo: f64, r_hi: f64, params: &ModelParams) -> f64 {
    integrate_linear(&energy_density(state, grid, params), grid.h, r_lo, r_hi)
}

/// `(L u)(r) = u_r + (d-1)/2 · u/r`. The origin entry is set to zero; the
/// operator is singular there unless `u(0) = 0`.
pub fn l_operator(state: &FieldState, grid: &RadialGrid, params: &ModelParams) -> Vec<f64> {
    let ur = radial_derivative(&state.u, grid.h);
    let k = params.half_dim();
    let mut out = vec![0.0; grid.len()];
    par::fill(&mut out, |j| if j == 0 { 0.0 } else { ur[j] + k * state.u[j] / grid.r(j) });
    out
}

/// Both sides of `∫ (|Lu|² + λ_d |u|²/|x|²) dx = ∫ |u_r|² dx`.
pub fn l2_identity_residual(state: &FieldState, grid: &RadialGrid, params: &ModelParams) -> (f64, f64) {
    let lu = l_operator(state, grid, params);
    let ur = radial_derivative(&state.u, grid.h);
    let consts = params.constants();
    let d = params.d;
    let mut lhs_density = vec![0.0; grid.len()];
    let mut rhs_density = vec![0.0; grid.len()];
    par::fill2(&mut lhs_density, &mut rhs_density, |j| {
        if j == 0 {
            // r^{d-1}|Lu|² -> ((d-1)/2)² u(0)² r^{d-3}, nonzero only for d = 3
            let origin = if d == 3 { state.u[0] * state.u[0] } else { 0.0 };
            return (consts.c_d * origin, 0.0);
        }
        let r = grid.r(j);
        let u = state.u[j];
        let vol = volume_weight(r, d, consts.c_d);
        (vol * (lu[j] * lu[j] + consts.lambda_d * u * u / (r * r)), vol * ur[j] * ur[j])
    });
    (trapezoid(&lhs_density, grid.h), trapezoid(&rhs_density, grid.h))
}

/// `u -> (w, v_+, v_-)` with `w_r = r^{(d-1)/2} L u` from centered differences.
pub fn to_reduced(state: &FieldState, grid: &RadialGrid, params: &ModelParams) -> ReducedState {
    let lu = l_operator(state, grid, params);
    let d = params.d;
    let n = grid.len();
    let mut w = vec![0.0; n];
    let mut v_plus = vec![0.0; n];
    let mut v_minus = vec![0.0; n];
    par::fill(&mut w, |j| reduction_weight(grid.r(j), d) * state.u[j]);
    par::fill2(&mut v_plus, &mut v_minus, |j| {
        let (wt, wr) = if j == 0 {
            // w ~ u(0) r^{(d-1)/2}: w_r(0) = u(0) for d = 3 and 0 otherwise
            (0.0, if d == 3 { state.u[0] } else { 0.0 })
        } else {
            let s = reduction_weight(grid.r(j), d);
            (s * state.ut[j], s * lu[j])
        };
        (wt - wr, wt + wr)
    });
    ReducedState { t: state.t, w, v_plus, v_minus }
}

/// `(w, v_+, v_-) -> u`. The origin value is the quadratic extrapolation
/// `3u_1 - 3u_2 + u_3`.
pub fn from_reduced(red: &ReducedState, grid: &RadialGrid, params: &ModelParams) -> Result<FieldState> {
    red.check_origin()?;
    let d = params.d;
    let n = grid.len();
    let mut u = vec![0.0; n];
    let mut ut = vec![0.0; n];
    par::fill2(&mut u, &mut ut, |j| {
        if j == 0 {
            return (0.0, 0.0);
        }
        let s = reduction_weight(grid.r(j), d);
        (red.w[j] / s, red.w_t(j) / s)
    });
    u[0] = 3.0 * u[1] - 3.0 * u[2] + u[3];
    ut[0] = 3.0 * ut[1] - 3.0 * ut[2] + ut[3];
    Ok(FieldState { t: red.t, u, ut })
}
