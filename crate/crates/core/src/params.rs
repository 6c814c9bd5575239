//! Model parameters `(d, p, zeta)` and every constant derived from them.

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};

/// Model parameters of `u_tt - Δu = zeta |u|^{p-1} u` in `d` space dimensions.
///
/// `zeta = -1` is the defocusing equation, `zeta = 0` the free wave equation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub d: u32,
    pub p: f64,
    pub zeta: i32,
}

/// A violated parameter invariant, with the bound and the offending value.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamViolation {
    pub rule: &'static str,
    pub message: String,
}

impl fmt::Display for ParamViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ({})", self.message, self.rule)
    }
}

impl std::error::Error for ParamViolation {}

/// Conformal exponent `1 + 4/(d-1)`.
pub fn p_conformal(d: u32) -> f64 {
    1.0 + 4.0 / (d as f64 - 1.0)
}

/// Energy-critical exponent `1 + 4/(d-2)`.
pub fn p_energy_critical(d: u32) -> f64 {
    1.0 + 4.0 / (d as f64 - 2.0)
}

/// Area of the unit sphere in `R^d`, for the supported dimensions.
pub fn sphere_area(d: u32) -> f64 {
    match d {
        3 => 4.0 * PI,
        4 => 2.0 * PI * PI,
        5 => 8.0 * PI * PI / 3.0,
        6 => PI * PI * PI,
        _ => f64::NAN,
    }
}

// Allows p = p_c(d) written as a rounded decimal (e.g. 2.3333333333333335).
const P_LOWER_SLACK: f64 = 1e-12;

/// Checks every invariant of [`ModelParams`], reporting the first violation.
pub fn validate_params(params: &ModelParams) -> Result<(), ParamViolation> {
    let ModelParams { d, p, zeta } = *params;
    if !(3..=6).contains(&d) {
        return Err(ParamViolation {
            rule: "d out of range",
            message: format!("d = {d} is outside 3..=6"),
        });
    }
    if !p.is_finite() {
        return Err(ParamViolation { rule: "p not finite", message: format!("p = {p}") });
    }
    let pc = p_conformal(d);
    let pe = p_energy_critical(d);
    if p < pc - P_LOWER_SLACK {
        return Err(ParamViolation {
            rule: "p < p_c(d)",
            message: format!("p = {p} < p_c({d}) = {pc}"),
        });
    }
    if p >= pe {
        return Err(ParamViolation {
            rule: "p ≥ p_e(d)",
            message: format!("p = {p} ≥ p_e({d}) = {pe}"),
        });
    }
    if zeta != 0 && zeta != -1 {
        return Err(ParamViolation {
            rule: "zeta not in {-1, 0}",
            message: format!("zeta = {zeta}; only -1 (defocusing) and 0 (linear) are supported"),
        });
    }
    Ok(())
}

impl ModelParams {
    pub fn new(d: u32, p: f64, zeta: i32) -> Result<Self, ParamViolation> {
        let params = ModelParams { d, p, zeta };
        validate_params(&params)?;
        Ok(params)
    }

    pub fn defocusing(d: u32, p: f64) -> Result<Self, ParamViolation> {
        Self::new(d, p, -1)
    }

    pub fn linear(d: u32, p: f64) -> Result<Self, ParamViolation> {
        Self::new(d, p, 0)
    }

    /// Same `(d, p)` with the nonlinearity switched off.
    pub fn as_linear(&self) -> Self {
        ModelParams { zeta: 0, ..*self }
    }

    pub fn is_linear(&self) -> bool {
        self.zeta == 0
    }

    pub fn zeta_f64(&self) -> f64 {
        self.zeta as f64
    }

    pub fn constants(&self) -> DerivedConstants {
        DerivedConstants::from_params(self)
    }

    /// `(d-1)/2`, the exponent of the reduction `w = r^{(d-1)/2} u`.
    pub fn half_dim(&self) -> f64 {
        (self.d as f64 - 1.0) / 2.0
    }

    /// `sign(u) |u|^p`.
    #[inline]
    pub fn power(&self, u: f64) -> f64 {
        if self.p.fract() == 0.0 {
            u.signum() * u.abs().powi(self.p as i32)
        } else {
            u.signum() * u.abs().powf(self.p)
        }
    }

    /// Potential energy density `-zeta/(p+1) |u|^{p+1}`, zero for the linear equation.
    #[inline]
    pub fn potential_density(&self, u: f64) -> f64 {
        if self.zeta == 0 {
            0.0
        } else {
            -self.zeta_f64() * u.abs().powf(self.p + 1.0) / (self.p + 1.0)
        }
    }
}

/// Closed-form constants that depend only on `(d, p)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedConstants {
    /// `(d-1)(d-3)/4`, coefficient of the `r^{-2}` potential of the reduced equation.
    pub lambda_d: f64,
    /// Decay rate `((d-1)(p-1) - 2) / (2(p+1))` of the variation of `v_+`.
    pub beta: f64,
    /// Minimal weighted-energy exponent `(4 - (d-2)(p-1)) / (p+1)`.
    pub kappa_0: f64,
    /// Critical Sobolev index `d/2 - 2/(p-1)`.
    pub s_p: f64,
    pub c_d: f64,
    pub p_c: f64,
    pub p_e: f64,
}

impl DerivedConstants {
    fn from_params(params: &ModelParams) -> Self {
        let d = params.d as f64;
        let p = params.p;
        DerivedConstants {
            lambda_d: (d - 1.0) * (d - 3.0) / 4.0,
            beta: ((d - 1.0) * (p - 1.0) - 2.0) / (2.0 * (p + 1.0)),
            kappa_0: (4.0 - (d - 2.0) * (p - 1.0)) / (p + 1.0),
            s_p: d / 2.0 - 2.0 / (p - 1.0),
            c_d: sphere_area(params.d),
            p_c: p_conformal(params.d),
            p_e: p_energy_critical(params.d),
        }
    }
}

/// Validates `params` and returns its derived constants.
pub fn derive_constants(params: &ModelParams) -> Result<DerivedConstants, ParamViolation> {
    validate_params(params)?;
    Ok(params.constants())
}
