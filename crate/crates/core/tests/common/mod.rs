//! Closed-form references shared by the integration tests.

#![allow(dead_code)]

use std::path::PathBuf;

use radwave::grid::ReducedState;

/// `F(s) = A s e^{-s²}`, the odd extension of `r u₀(r)` for `u₀ = A e^{-r²}`.
fn f(a: f64, s: f64) -> f64 {
    a * s * (-s * s).exp()
}

fn f1(a: f64, s: f64) -> f64 {
    a * (1.0 - 2.0 * s * s) * (-s * s).exp()
}

fn f2(a: f64, s: f64) -> f64 {
    a * (4.0 * s * s * s - 6.0 * s) * (-s * s).exp()
}

/// Three-dimensional free wave with `u₀ = A e^{-r²}`, `u₁ = 0`:
/// `r u(r, t) = (F(r + t) + F(r - t)) / 2`. Returns `(u, u_t)`.
pub fn dalembert_gaussian_3d(a: f64, r: f64, t: f64) -> (f64, f64) {
    if r < 1e-6 {
        return (f1(a, t), f2(a, t));
    }
    let u = (f(a, r + t) + f(a, r - t)) / (2.0 * r);
    let ut = (f1(a, r + t) - f1(a, r - t)) / (2.0 * r);
    (u, ut)
}

/// Exact transport of three-dimensional free reduced data by `k` grid steps
/// with `dt = h`: `v₋` moves inward, reflects at the origin as `v₊ = -v₋`,
/// and `v₊` moves outward. Nothing enters through `r_max`.
pub fn transported_3d(initial: &ReducedState, k: usize) -> (Vec<f64>, Vec<f64>) {
    let n = initial.v_plus.len();
    let v_plus = (0..n)
        .map(|j| if j >= k { initial.v_plus[j - k] } else { -initial.v_minus[k - j] })
        .collect();
    let v_minus = (0..n).map(|j| if j + k < n { initial.v_minus[j + k] } else { 0.0 }).collect();
    (v_plus, v_minus)
}

/// `log2(coarse / fine)`.
pub fn order(coarse: f64, fine: f64) -> f64 {
    (coarse / fine).log2()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

pub fn scenario_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

/// Midpoint of the admissible exponent range for dimension `d`.
pub fn mid_p(d: u32) -> f64 {
    0.5 * (radwave::params::p_conformal(d) + radwave::params::p_energy_critical(d))
}

/// Radiation profile of three-dimensional free data:
/// `g(η) = -½ (u₀(|η|) + |η| u₀'(|η|) + η u₁(|η|))`.
pub fn radiation_3d(u0: impl Fn(f64) -> f64, du0: impl Fn(f64) -> f64, u1: impl Fn(f64) -> f64, eta: f64) -> f64 {
    let s = eta.abs();
    -0.5 * (u0(s) + s * du0(s) + eta * u1(s))
}
