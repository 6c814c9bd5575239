//! Scenario files, initial-data families, single runs and parameter sweeps.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{self as diag, DecayFit, DiagnosticsRecord, Tolerances, Verdict};
use crate::error::{Error, Result};
use crate::grid::{energy, from_reduced, weighted_energy, FieldState, RadialGrid};
use crate::io;
use crate::par;
use crate::params::{validate_params, DerivedConstants, ModelParams};
use crate::radiation::{extract_radiation, invert_radiation, inversion_r_max, EtaGrid, RadiationProfile};
use crate::solver_char::evolve_char_from_field;
use crate::solver_fd::{evolve, evolve_backward, EvolutionConfig, Trajectory};

pub const SUMMARY_SCHEMA_VERSION: u32 = 1;

fn one() -> f64 {
    1.0
}

fn default_name() -> String {
    "scenario".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default = "default_name")]
    pub name: String,
    pub model: ModelParams,
    pub grid: GridSpec,
    pub evolution: EvolutionSpec,
    pub initial_data: InitialDataFamily,
    #[serde(default)]
    pub diagnostics: DiagnosticsSpec,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub r_max: f64,
    pub h: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Solver {
    #[default]
    Fd,
    Char,
}

fn default_cfl() -> f64 {
    EvolutionConfig::DEFAULT_CFL
}

fn default_snapshot_dt() -> f64 {
    0.5
}

fn default_exports() -> usize {
    5
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolutionSpec {
    pub t_end: f64,
    #[serde(default = "default_cfl")]
    pub cfl: f64,
    /// Spacing of the snapshots the diagnostics see.
    #[serde(default = "default_snapshot_dt")]
    pub snapshot_dt: f64,
    #[serde(default)]
    pub solver: Solver,
    /// Number of evenly spaced snapshot files written besides the initial one.
    #[serde(default = "default_exports")]
    pub export_snapshots: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Observable {
    Energy,
    Cones,
    Flux,
    Morawetz,
    Potential,
    Pointwise,
    Radiation,
    Deficits,
    InteriorDecay,
    MiddleBand,
    Distribution,
}

fn default_requests() -> Vec<Observable> {
    vec![Observable::Energy, Observable::Cones, Observable::Flux, Observable::Pointwise]
}

fn default_eta_min() -> f64 {
    -10.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadiationSpec {
    #[serde(default = "default_eta_min")]
    pub eta_min: f64,
    /// Defaults to `t_extract / 2`.
    #[serde(default)]
    pub eta_max: Option<f64>,
    /// Defaults to the mesh spacing.
    #[serde(default)]
    pub d_eta: Option<f64>,
    /// Defaults to `t_end`.
    #[serde(default)]
    pub t_extract: Option<f64>,
}

impl Default for RadiationSpec {
    fn default() -> Self {
        RadiationSpec { eta_min: default_eta_min(), eta_max: None, d_eta: None, t_extract: None }
    }
}

fn default_ten() -> f64 {
    10.0
}

fn default_two() -> f64 {
    2.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsSpec {
    #[serde(default = "default_requests")]
    pub requests: Vec<Observable>,
    /// Cone vertex `t - r = eta` for the cone and flux checks.
    #[serde(default)]
    pub eta: f64,
    /// Cone of the exterior deficit; defaults to `eta`.
    #[serde(default)]
    pub deficit_eta: Option<f64>,
    /// Exterior deficit decay is measured relative to this time.
    #[serde(default = "default_ten")]
    pub deficit_reference_time: f64,
    /// `[t1, t2]` of the flux identity; defaults to `[max(eta, 0), t_end]`.
    #[serde(default)]
    pub flux_window: Option<[f64; 2]>,
    #[serde(default = "one")]
    pub morawetz_radius: f64,
    #[serde(default = "default_two")]
    pub distribution_radius: f64,
    #[serde(default = "one")]
    pub decay_c: f64,
    /// Defaults to `kappa_0`.
    #[serde(default)]
    pub decay_kappa: Option<f64>,
    /// Defaults to `[t_end / 5, t_end]`.
    #[serde(default)]
    pub decay_window: Option<[f64; 2]>,
    #[serde(default = "one")]
    pub band_c: f64,
    #[serde(default)]
    pub band_gamma: f64,
    #[serde(default = "one")]
    pub band_reach: f64,
    #[serde(default)]
    pub radiation: RadiationSpec,
}

impl Default for DiagnosticsSpec {
    fn default() -> Self {
        DiagnosticsSpec {
            requests: default_requests(),
            eta: 0.0,
            deficit_eta: None,
            deficit_reference_time: default_ten(),
            flux_window: None,
            morawetz_radius: 1.0,
            distribution_radius: 2.0,
            decay_c: 1.0,
            decay_kappa: None,
            decay_window: None,
            band_c: 1.0,
            band_gamma: 0.0,
            band_reach: 1.0,
            radiation: RadiationSpec::default(),
        }
    }
}

fn default_bumps() -> usize {
    4
}

fn default_max_radius() -> f64 {
    4.0
}

/// Initial data `(u₀, u₁)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialDataFamily {
    /// `u₀ = A e^{-r²/w²}`, `u₁ = V e^{-r²/w²}`.
    Gaussian {
        #[serde(default = "one")]
        amplitude: f64,
        #[serde(default = "one")]
        width: f64,
        #[serde(default)]
        velocity: f64,
    },
    /// `u₀ = A` on `[0, inner_radius]`, smoothly tapered to 0 at `outer_radius`; `u₁ = 0`.
    CompactBump {
        #[serde(default = "one")]
        amplitude: f64,
        inner_radius: f64,
        outer_radius: f64,
    },
    /// `u₀ = A` near the origin, `A r^{-2(p+d+1)/(p+1)² - ε}` for `r ≥ 2`,
    /// blended on `[1, 2]`, truncated smoothly on
    /// `[cutoff_radius, cutoff_radius + cutoff_width]`; `u₁ = 0`.
    PowerTail {
        epsilon: f64,
        #[serde(default = "one")]
        amplitude: f64,
        /// Defaults to `r_max - cutoff_width - 2`.
        #[serde(default)]
        cutoff_radius: Option<f64>,
        #[serde(default = "default_ten")]
        cutoff_width: f64,
    },
    /// Free-wave data whose radiation profile is read from `profile`.
    FromRadiation {
        profile: PathBuf,
        /// Defaults to 50 times the support radius of the profile.
        #[serde(default)]
        t_match: Option<f64>,
    },
    /// Sum of `bumps` even Gaussian bumps with random centres, widths and
    /// amplitudes in both components. `seed` defaults to the scenario seed.
    RandomSmooth {
        #[serde(default)]
        seed: Option<u64>,
        #[serde(default = "default_bumps")]
        bumps: usize,
        #[serde(default = "one")]
        amplitude: f64,
        #[serde(default = "default_max_radius")]
        max_radius: f64,
    },
}

/// Quintic smoothstep: 0 below 0, 1 above 1, `C²` at both ends.
pub fn smoothstep(x: f64) -> f64 {
    let x = x.clamp(0.0, 1.0);
    x * x * x * (10.0 - 15.0 * x + 6.0 * x * x)
}

/// Exponent of the power tail, `2(p+d+1)/(p+1)² + ε`.
pub fn power_tail_exponent(params: &ModelParams, epsilon: f64) -> f64 {
    2.0 * (params.p + params.d as f64 + 1.0) / (params.p + 1.0).powi(2) + epsilon
}

fn check_field(field: &str, ok: bool, message: impl Into<String>) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::scenario(field, message))
    }
}

impl InitialDataFamily {
    pub fn name(&self) -> &'static str {
        match self {
            InitialDataFamily::Gaussian { .. } => "gaussian",
            InitialDataFamily::CompactBump { .. } => "compact_bump",
            InitialDataFamily::PowerTail { .. } => "power_tail",
            InitialDataFamily::FromRadiation { .. } => "from_radiation",
            InitialDataFamily::RandomSmooth { .. } => "random_smooth",
        }
    }

    fn validate(&self, params: &ModelParams) -> Result<()> {
        let f = "initial_data";
        match *self {
            InitialDataFamily::Gaussian { amplitude, width, velocity } => {
                check_field(f, amplitude.is_finite() && velocity.is_finite(), "amplitudes must be finite")?;
                check_field(f, width > 0.0 && width.is_finite(), format!("width = {width} must be positive"))
            }
            InitialDataFamily::CompactBump { amplitude, inner_radius, outer_radius } => {
                check_field(f, amplitude.is_finite(), "amplitude must be finite")?;
                check_field(
                    f,
                    inner_radius >= 0.0 && outer_radius > inner_radius && outer_radius.is_finite(),
                    format!("need 0 <= inner_radius < outer_radius, got {inner_radius}, {outer_radius}"),
                )
            }
            InitialDataFamily::PowerTail { epsilon, amplitude, cutoff_radius, cutoff_width } => {
                check_field(f, epsilon > 0.0 && epsilon.is_finite(), format!("epsilon = {epsilon} must be positive"))?;
                check_field(f, amplitude.is_finite(), "amplitude must be finite")?;
                check_field(f, cutoff_width > 0.0, format!("cutoff_width = {cutoff_width} must be positive"))?;
                if let Some(rc) = cutoff_radius {
                    check_field(f, rc >= 2.0, format!("cutoff_radius = {rc} must be at least 2"))?;
                }
                let kappa = params.constants().kappa_0.max(0.0);
                let alpha = power_tail_exponent(params, epsilon);
                let d = params.d as f64;
                // r^{d-1+kappa} against |u_r|^2 ~ r^{-2 alpha - 2} and |u|^{p+1} ~ r^{-alpha (p+1)}
                let kinetic = d - 3.0 + kappa - 2.0 * alpha;
                let potential = d - 1.0 + kappa - alpha * (params.p + 1.0);
                check_field(
                    f,
                    kinetic < -1.0 && (params.is_linear() || potential < -1.0),
                    format!("the weighted energy with kappa_0 = {kappa} diverges for tail exponent {alpha}"),
                )
            }
            InitialDataFamily::FromRadiation { ref profile, t_match } => {
                if let Some(t) = t_match {
                    check_field(f, t > 0.0, format!("t_match = {t} must be positive"))?;
                }
                check_field(f, !profile.as_os_str().is_empty(), "profile path is empty")
            }
            InitialDataFamily::RandomSmooth { bumps, amplitude, max_radius, .. } => {
                check_field(f, bumps >= 1, "need at least one bump")?;
                check_field(f, amplitude.is_finite(), "amplitude must be finite")?;
                check_field(f, max_radius > 0.0, format!("max_radius = {max_radius} must be positive"))
            }
        }
    }
}

/// Default matching time for a profile: 50 times its support radius.
pub fn default_t_match(g: &RadiationProfile) -> f64 {
    50.0 * g.eta.eta_min.abs().max(g.eta.eta_max().abs()).max(1.0)
}

/// Radius beyond which the data vanish (or are below round-off), used by
/// the domain contract.
fn support_radius(family: &InitialDataFamily, grid_r_max: f64, params: &ModelParams) -> Result<f64> {
    Ok(match family {
        InitialDataFamily::Gaussian { amplitude, width, velocity } => {
            let a = amplitude.abs().max(velocity.abs());
            if a == 0.0 {
                0.0
            } else {
                width * (a / 1e-14).ln().max(0.0).sqrt()
            }
        }
        InitialDataFamily::CompactBump { outer_radius, .. } => *outer_radius,
        InitialDataFamily::PowerTail { cutoff_radius, cutoff_width, .. } => {
            cutoff_radius.unwrap_or(grid_r_max - cutoff_width - 2.0) + cutoff_width
        }
        InitialDataFamily::FromRadiation { profile, t_match } => {
            let g = io::read_profile(profile)?;
            let tm = t_match.unwrap_or_else(|| default_t_match(&g));
            inversion_r_max(&g, tm) - tm
        }
        InitialDataFamily::RandomSmooth { max_radius, .. } => {
            let _ = params;
            max_radius + 6.0
        }
    })
}

/// Samples `family` on `grid` at `t = 0`.
pub fn materialize(family: &InitialDataFamily, grid: &RadialGrid, params: &ModelParams) -> Result<FieldState> {
    validate_params(params)?;
    family.validate(params)?;
    let state = match *family {
        InitialDataFamily::Gaussian { amplitude, width, velocity } => FieldState::from_fns(
            grid,
            0.0,
            |r| amplitude * (-(r / width).powi(2)).exp(),
            |r| velocity * (-(r / width).powi(2)).exp(),
        ),
        InitialDataFamily::CompactBump { amplitude, inner_radius, outer_radius } => FieldState::from_fns(
            grid,
            0.0,
            |r| amplitude * (1.0 - smoothstep((r - inner_radius) / (outer_radius - inner_radius))),
            |_| 0.0,
        ),
        InitialDataFamily::PowerTail { epsilon, amplitude, cutoff_radius, cutoff_width } => {
            let alpha = power_tail_exponent(params, epsilon);
            let rc = cutoff_radius.unwrap_or(grid.r_max - cutoff_width - 2.0);
            FieldState::from_fns(
                grid,
                0.0,
                |r| {
                    let s = smoothstep(r - 1.0);
                    let core = (1.0 - s) + s * r.max(1.0).powf(-alpha);
                    amplitude * core * (1.0 - smoothstep((r - rc) / cutoff_width))
                },
                |_| 0.0,
            )
        }
        InitialDataFamily::FromRadiation { ref profile, t_match } => {
            let g = io::read_profile(profile)?;
            let tm = t_match.unwrap_or_else(|| default_t_match(&g));
            invert_radiation(&g, tm, grid, params)?
        }
        InitialDataFamily::RandomSmooth { seed, bumps, amplitude, max_radius } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.unwrap_or(0));
            let terms: Vec<[f64; 4]> = (0..bumps)
                .map(|_| {
                    [
                        rng.gen_range(0.0..max_radius),
                        rng.gen_range(0.3..1.2),
                        amplitude * rng.gen_range(-1.0..1.0),
                        amplitude * rng.gen_range(-1.0..1.0),
                    ]
                })
                .collect();
            let even_bump = |r: f64, c: f64, s: f64| (-((r - c) / s).powi(2)).exp() + (-((r + c) / s).powi(2)).exp();
            FieldState::from_fns(
                grid,
                0.0,
                |r| terms.iter().map(|t| t[2] * even_bump(r, t[0], t[1])).sum(),
                |r| terms.iter().map(|t| t[3] * even_bump(r, t[0], t[1])).sum(),
            )
        }
    };
    state.check(grid)?;
    Ok(state)
}

/// Parses scenario text; relative profile paths resolve against `base`.
pub fn parse_scenario(text: &str, path: &Path) -> Result<Scenario> {
    let mut sc: Scenario =
        toml::from_str(text).map_err(|e| Error::Parse { path: path.into(), message: e.to_string() })?;
    if let InitialDataFamily::FromRadiation { profile, .. } = &mut sc.initial_data {
        if profile.is_relative() {
            if let Some(dir) = path.parent() {
                *profile = dir.join(&*profile);
            }
        }
    }
    sc.validate()?;
    Ok(sc)
}

/// Reads and fully validates a scenario file.
pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_scenario(&text, path)
}

impl Scenario {
    pub fn wants(&self, o: Observable) -> bool {
        self.diagnostics.requests.contains(&o)
    }

    pub fn grid(&self) -> Result<RadialGrid> {
        RadialGrid::with_spacing(self.grid.r_max, self.grid.h).map_err(|e| Error::scenario("grid", e.to_string()))
    }

    /// The family with the scenario seed filled in where the family has none.
    pub fn resolved_family(&self) -> InitialDataFamily {
        match self.initial_data.clone() {
            InitialDataFamily::RandomSmooth { seed: None, bumps, amplitude, max_radius } => {
                InitialDataFamily::RandomSmooth { seed: Some(self.seed), bumps, amplitude, max_radius }
            }
            other => other,
        }
    }

    pub fn t_extract(&self) -> f64 {
        self.diagnostics.radiation.t_extract.unwrap_or(self.evolution.t_end)
    }

    pub fn eta_grid(&self) -> Result<EtaGrid> {
        let r = &self.diagnostics.radiation;
        let eta_max = r.eta_max.unwrap_or(0.5 * self.t_extract());
        EtaGrid::new(r.eta_min, eta_max, r.d_eta.unwrap_or(self.grid.h))
            .map_err(|e| Error::scenario("diagnostics.radiation", e.to_string()))
    }

    pub fn decay_kappa(&self) -> f64 {
        self.diagnostics.decay_kappa.unwrap_or(self.model.constants().kappa_0)
    }

    pub fn decay_window(&self) -> (f64, f64) {
        let w = self.diagnostics.decay_window.unwrap_or([0.2 * self.evolution.t_end, self.evolution.t_end]);
        (w[0], w[1])
    }

    pub fn flux_window(&self) -> (f64, f64) {
        let w = self.diagnostics.flux_window.unwrap_or([self.diagnostics.eta.max(0.0), self.evolution.t_end]);
        (w[0], w[1])
    }

    /// Checks every invariant that can be checked before running.
    pub fn validate(&self) -> Result<()> {
        validate_params(&self.model)?;
        let grid = self.grid()?;
        let ev = &self.evolution;
        check_field("evolution.t_end", ev.t_end > 0.0 && ev.t_end.is_finite(), format!("t_end = {} must be positive", ev.t_end))?;
        match ev.solver {
            Solver::Fd => {
                check_field("evolution.cfl", ev.cfl > 0.0 && ev.cfl <= 0.5, format!("cfl = {} must lie in (0, 0.5]", ev.cfl))?
            }
            Solver::Char => {}
        }
        check_field(
            "evolution.snapshot_dt",
            ev.snapshot_dt > 0.0 && ev.snapshot_dt <= ev.t_end,
            format!("snapshot_dt = {} must lie in (0, t_end]", ev.snapshot_dt),
        )?;
        self.initial_data.validate(&self.model)?;

        let support = support_radius(&self.initial_data, grid.r_max, &self.model)?;
        let needed = match self.initial_data {
            InitialDataFamily::PowerTail { cutoff_width, .. } => {
                let rc = support - cutoff_width;
                check_field(
                    "initial_data.cutoff_radius",
                    rc >= 2.0 * ev.t_end,
                    format!(
                        "the tail truncation at r = {rc} reaches the light cone before t_end = {}; the domain contract needs r_max >= {}",
                        ev.t_end,
                        2.0 * ev.t_end + cutoff_width + 2.0
                    ),
                )?;
                support + 2.0
            }
            _ => support + ev.t_end + 2.0,
        };
        check_field(
            "grid.r_max",
            grid.r_max >= needed - 1e-9,
            format!(
                "r_max = {} is too small for t_end = {}: the domain contract needs r_max >= {needed}",
                grid.r_max, ev.t_end
            ),
        )?;
        if let InitialDataFamily::FromRadiation { profile, t_match } = &self.initial_data {
            let g = io::read_profile(profile)?;
            let tm = t_match.unwrap_or_else(|| default_t_match(&g));
            let need = inversion_r_max(&g, tm);
            check_field(
                "grid.r_max",
                grid.r_max >= need,
                format!("inverting the profile at t_match = {tm} needs r_max >= {need}"),
            )?;
        }

        let dg = &self.diagnostics;
        let nonlinear_only = [Observable::Morawetz, Observable::Potential, Observable::InteriorDecay];
        for o in nonlinear_only {
            if self.wants(o) && self.model.zeta != -1 {
                return Err(Error::scenario("diagnostics.requests", format!("{o:?} needs the defocusing equation (zeta = -1)")));
            }
        }
        if self.wants(Observable::Flux) {
            let (t1, t2) = self.flux_window();
            check_field(
                "diagnostics.flux_window",
                dg.eta <= t1 && t1 < t2 && t2 <= ev.t_end,
                format!("need eta <= t1 < t2 <= t_end, got eta = {}, [{t1}, {t2}]", dg.eta),
            )?;
        }
        if self.wants(Observable::Radiation) || self.wants(Observable::Deficits) || self.wants(Observable::MiddleBand) {
            let eta = self.eta_grid()?;
            let te = self.t_extract();
            check_field(
                "diagnostics.radiation.t_extract",
                te <= ev.t_end && te - eta.eta_max() >= 1.0 && 0.9 * te - eta.eta_max() >= 1.0,
                format!("t_extract = {te} must not exceed t_end and must exceed eta_max + 1 at 0.9 t_extract"),
            )?;
            check_field(
                "diagnostics.radiation.eta_min",
                te - eta.eta_min <= grid.r_max,
                format!("extraction at t = {te} samples r = {} beyond r_max; the domain contract needs r_max >= {}", te - eta.eta_min, te - eta.eta_min),
            )?;
        }
        if self.wants(Observable::Deficits) {
            let eta = self.eta_grid()?;
            let te = self.t_extract();
            let need = te - eta.eta_min + 1.0 + (0.5 * te).max(10.0) + 2.0;
            check_field(
                "grid.r_max",
                grid.r_max >= need,
                format!("the free-wave reconstruction at t_match = {te} needs r_max >= {need}"),
            )?;
        }
        if self.wants(Observable::InteriorDecay) {
            let k = self.decay_kappa();
            check_field("diagnostics.decay_kappa", k > 0.0 && k < 1.0, format!("kappa = {k} must lie in (0, 1)"))?;
            let (a, b) = self.decay_window();
            check_field("diagnostics.decay_window", 0.0 < a && a < b, format!("decay window [{a}, {b}] is empty"))?;
        }
        if self.wants(Observable::MiddleBand) {
            let two_beta = 2.0 * self.model.constants().beta;
            check_field(
                "diagnostics.band_gamma",
                dg.band_gamma >= 0.0 && dg.band_gamma <= two_beta + 1e-12,
                format!("gamma = {} must lie in [0, 2 beta = {two_beta}]", dg.band_gamma),
            )?;
        }
        if self.wants(Observable::Morawetz) {
            check_field("diagnostics.morawetz_radius", dg.morawetz_radius > 0.0, "radius must be positive")?;
        }
        if self.wants(Observable::Distribution) {
            check_field("diagnostics.distribution_radius", dg.distribution_radius > 0.0, "radius must be positive")?;
        }
        Ok(())
    }
}

/// Summary of one run; every entry is a deterministic function of the
/// scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub schema_version: u32,
    pub code_version: String,
    pub name: String,
    pub seed: u64,
    pub family: String,
    pub params: ModelParams,
    pub constants: DerivedConstants,
    pub grid: RadialGrid,
    pub solver: Solver,
    pub t_end: f64,
    pub snapshots: usize,
    pub energy_initial: f64,
    pub energy_final: f64,
    pub energy_drift: f64,
    pub observations: BTreeMap<String, f64>,
    pub fits: BTreeMap<String, DecayFit>,
    pub verdicts: Vec<Verdict>,
    pub passed: bool,
}

/// Everything a run produces, in memory.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub summary: Summary,
    pub records: Vec<DiagnosticsRecord>,
    pub series: BTreeMap<String, Vec<(f64, f64)>>,
    pub profile: Option<RadiationProfile>,
    pub trajectory: Trajectory,
}

fn evolve_scenario(sc: &Scenario, data: &FieldState, grid: &RadialGrid) -> Result<Trajectory> {
    let ev = &sc.evolution;
    match ev.solver {
        Solver::Fd => {
            let cfg = EvolutionConfig::with_snapshot_interval(ev.cfl, ev.t_end, grid, ev.snapshot_dt)?;
            evolve(data, grid, &cfg, &sc.model)
        }
        Solver::Char => {
            let stride = ((ev.snapshot_dt / grid.h).round() as usize).max(1);
            let ch = evolve_char_from_field(data, grid, ev.t_end, stride, &sc.model)?;
            let snapshots = ch.snapshots.iter().map(|s| from_reduced(s, grid, &sc.model)).collect::<Result<Vec<_>>>()?;
            Ok(Trajectory {
                params: sc.model,
                grid: *grid,
                config: EvolutionConfig { cfl: 1.0, t_end: ev.t_end, snapshot_stride: stride },
                provenance: ch.provenance,
                snapshots,
            })
        }
    }
}

/// Snapshot time nearest `t`.
fn snapshot_time_near(traj: &Trajectory, t: f64) -> f64 {
    traj.snapshots.iter().map(|s| s.t).min_by(|a, b| (a - t).abs().total_cmp(&(b - t).abs())).unwrap_or(t)
}

/// Runs the scenario and evaluates every requested observable.
pub fn execute(sc: &Scenario) -> Result<RunOutcome> {
    sc.validate()?;
    let params = sc.model;
    let grid = sc.grid()?;
    let data = materialize(&sc.resolved_family(), &grid, &params)?;
    let traj = evolve_scenario(sc, &data, &grid)?;
    let tol = sc.tolerances;
    let dg = &sc.diagnostics;
    let e0 = energy(traj.first(), &grid, &params);
    let e1 = energy(traj.last(), &grid, &params);
    let scale = if e0 > 0.0 { e0 } else { 1.0 };
    let drift = if e0 > 0.0 { (e1 - e0).abs() / e0 } else { (e1 - e0).abs() };

    let mut obs = BTreeMap::new();
    let mut fits = BTreeMap::new();
    let mut verdicts = Vec::new();
    let mut series: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    let mut profile = None;

    let mut records: Vec<DiagnosticsRecord> = par::map_items(&traj.snapshots, |s| {
        let mut rec = diag::snapshot_record(s, &grid, dg.eta, &params);
        if !sc.wants(Observable::Pointwise) {
            rec.pointwise_ratio_max = None;
        }
        if !sc.wants(Observable::Potential) {
            rec.potential_integral = None;
        }
        rec
    });
    series.insert("energy".into(), records.iter().map(|r| (r.t, r.e_total)).collect());

    if sc.wants(Observable::Energy) {
        verdicts.push(Verdict::at_most("energy_drift", drift, tol.energy_drift, "|E(t_end) - E(0)| / E(0)"));
    }
    obs.insert("energy_initial".into(), e0);

    if sc.wants(Observable::Cones) {
        let worst = diag::cone_monotonicity(&traj, dg.eta, &params);
        verdicts.push(Verdict::at_most(
            "cone_monotonicity",
            -worst / scale,
            tol.cone_monotonicity,
            format!("most negative increment of E(t; B(0, t - {})) over E", dg.eta),
        ));
        let back = diag::backward_cone_monotonicity(&traj, sc.evolution.t_end, &params);
        obs.insert("backward_cone_increase".into(), back / scale);
        series.insert("cone_energy".into(), diag::cone_energy_series(&traj, dg.eta, &params));
        let (flux_total, hardy) = diag::cone_surface_bounds(&traj, dg.eta, &params)?;
        obs.insert("cone_flux_total".into(), flux_total);
        obs.insert("cone_hardy".into(), hardy);
        verdicts.push(Verdict::at_most("cone_flux_total", flux_total, e0 * (1.0 + tol.flux_total), "flux through t - r = eta <= E"));
    }

    if sc.wants(Observable::Flux) {
        let (t1, t2) = sc.flux_window();
        let rows = diag::flux_series(&traj, dg.eta, t1, &params)?;
        for (t, delta, surf) in &rows {
            if let Some(rec) = records.iter_mut().find(|r| r.t == *t) {
                rec.flux_residual = Some((delta - surf).abs() / scale);
            }
        }
        let (delta, surface) = diag::flux_balance(&traj, dg.eta, t1, t2, &params)?;
        obs.insert("flux_delta".into(), delta);
        obs.insert("flux_surface".into(), surface);
        verdicts.push(Verdict::at_most(
            "flux_residual",
            (delta - surface).abs() / scale,
            tol.flux_residual,
            format!("cone flux identity on [{t1}, {t2}]"),
        ));
    }

    if sc.wants(Observable::Morawetz) {
        let partials = diag::morawetz_partials(&traj, dg.morawetz_radius, &params);
        for (rec, (_, m)) in records.iter_mut().zip(&partials) {
            rec.morawetz_partials = Some(*m);
        }
        let rep = diag::morawetz_report(&traj, dg.morawetz_radius, &params, tol.morawetz)?;
        obs.insert("morawetz_interior".into(), rep.interior);
        obs.insert("morawetz_sphere".into(), rep.sphere);
        obs.insert("morawetz_exterior".into(), rep.exterior);
        obs.insert("morawetz_ratio".into(), rep.ratio);
        let sum = rep.interior + rep.sphere + rep.exterior;
        verdicts.push(Verdict::at_most("morawetz", sum, 2.0 * e0 * (1.0 + tol.morawetz), "windowed Morawetz sum <= 2E"));
        let min_term = rep.interior.min(rep.sphere).min(rep.exterior);
        verdicts.push(Verdict::at_least("morawetz_terms_nonnegative", min_term, 0.0, "smallest Morawetz term"));
    }

    if sc.wants(Observable::Potential) {
        let ps = diag::potential_series(&traj, &params)?;
        let init = ps.first().map(|x| x.1).unwrap_or(0.0);
        let late = diag::late_minimum(&ps).unwrap_or(0.0);
        let rel = if init > 0.0 { late / init } else { 0.0 };
        obs.insert("potential_late_min_ratio".into(), rel);
        verdicts.push(Verdict::at_most("potential_late_min", rel, tol.potential_min, "min over the last third / initial"));
        series.insert("potential".into(), ps);
    }

    if sc.wants(Observable::Pointwise) {
        let (k1, k2) = diag::pointwise_constants(&params);
        let (m1, m2) = records
            .iter()
            .filter_map(|r| r.pointwise_ratio_max)
            .fold((0.0f64, 0.0f64), |(a, b), (x, y)| (a.max(x), b.max(y)));
        obs.insert("pointwise_ratio1".into(), m1);
        obs.insert("pointwise_ratio2".into(), m2);
        verdicts.push(Verdict::at_most("pointwise_ratio1", m1, k1 * (1.0 + tol.pointwise), "Hardy-type pointwise bound"));
        verdicts.push(Verdict::at_most("pointwise_ratio2", m2, k2 * (1.0 + tol.pointwise), "interpolated pointwise bound"));
    }

    let needs_profile =
        sc.wants(Observable::Radiation) || sc.wants(Observable::Deficits) || sc.wants(Observable::MiddleBand);
    if needs_profile {
        let eta = sc.eta_grid()?;
        let te = snapshot_time_near(&traj, sc.t_extract());
        let tp = snapshot_time_near(&traj, 0.9 * sc.t_extract());
        let g = extract_radiation(&traj, &eta, &[tp, te])?;
        let c_d = params.constants().c_d;
        obs.insert("radiation_norm_sq".into(), g.norm_sq());
        obs.insert("radiation_quality".into(), g.max_quality());
        verdicts.push(Verdict::at_most(
            "radiation_bound",
            g.norm_sq(),
            e0 / c_d * (1.0 + tol.radiation_bound),
            "|g_+|^2 <= E / c_d",
        ));
        profile = Some(g);
    }

    if sc.wants(Observable::Deficits) {
        let g = profile.as_ref().expect("profile extracted above");
        let free0 = invert_radiation(g, snapshot_time_near(&traj, sc.t_extract()), &grid, &params)?;
        let lin = params.as_linear();
        let cfg = EvolutionConfig::with_snapshot_interval(
            EvolutionConfig::DEFAULT_CFL,
            sc.evolution.t_end,
            &grid,
            sc.evolution.snapshot_dt,
        )?;
        let mut free = evolve(&free0, &grid, &cfg, &lin)?;
        for s in free.snapshots.iter_mut() {
            s.t = snapshot_time_near(&traj, s.t);
        }
        let deta = dg.deficit_eta.unwrap_or(dg.eta);
        let ext = diag::exterior_deficit(&traj, &free, deta, &params)?;
        let full = diag::full_deficit(&traj, &free, g, &params)?;
        for rec in records.iter_mut() {
            rec.exterior_deficit = diag::value_near(&ext, rec.t);
            rec.full_deficit = diag::value_near(&full.series, rec.t);
        }
        let ext_ref = diag::value_near(&ext, dg.deficit_reference_time).unwrap_or(0.0);
        let ext_end = ext.last().map(|x| x.1).unwrap_or(0.0);
        let ext_ratio = if ext_ref > 0.0 { ext_end / ext_ref } else { 0.0 };
        obs.insert("exterior_deficit_ratio".into(), ext_ratio);
        verdicts.push(Verdict::at_most(
            "exterior_deficit_decay",
            ext_ratio,
            tol.exterior_decay,
            format!("exterior deficit at t_end over its value at t = {}", dg.deficit_reference_time),
        ));
        let incr = diag::max_increase_after(&ext, dg.deficit_reference_time) / scale;
        obs.insert("exterior_deficit_max_increase".into(), incr);
        verdicts.push(Verdict::at_most("exterior_deficit_monotone", incr, tol.exterior_monotone, "largest later increase over E"));
        let full0 = full.series.first().map(|x| x.1).unwrap_or(0.0);
        let full_end = full.series.last().map(|x| x.1).unwrap_or(0.0);
        let full_ratio = if full0 > 0.0 { full_end / full0 } else { 0.0 };
        obs.insert("full_deficit_ratio".into(), full_ratio);
        verdicts.push(Verdict::at_most("full_deficit_decay", full_ratio, tol.full_deficit, "full deficit at t_end over its initial value"));
        let gap = full.energy_gap / scale;
        obs.insert("energy_gap".into(), gap);
        verdicts.push(Verdict::at_most("energy_gap", gap, tol.energy_gap, "(E - c_d |g_+|^2) / E"));
        verdicts.push(Verdict::at_least("energy_gap_sign", gap, -tol.energy_gap_sign, "c_d |g_+|^2 <= E"));
        series.insert("exterior_deficit".into(), ext);
        series.insert("full_deficit".into(), full.series);
    }

    if sc.wants(Observable::InteriorDecay) {
        let (s, fit) = diag::interior_decay(&traj, dg.decay_c, sc.decay_kappa(), sc.decay_window(), &params)?;
        match fit {
            Ok(f) => {
                verdicts.push(Verdict {
                    name: "interior_decay_slope".into(),
                    passed: f.exponent < 0.0,
                    value: f.exponent,
                    bound: 0.0,
                    detail: "fitted log-log slope must be strictly negative".into(),
                });
                verdicts.push(Verdict::at_least("interior_decay_fit", f.r2, tol.decay_r2, "goodness of fit"));
                fits.insert("interior_decay".into(), f);
            }
            Err(e) => verdicts.push(Verdict { name: "interior_decay_slope".into(), passed: false, value: f64::NAN, bound: 0.0, detail: e.to_string() }),
        }
        series.insert("interior_energy".into(), s);
    }

    if sc.wants(Observable::MiddleBand) {
        let g = profile.as_ref().expect("profile extracted above");
        let band = diag::middle_band_deficit(&traj, g, dg.band_c, dg.band_gamma, dg.band_reach, &params)?;
        obs.insert("middle_band_late_max".into(), late_maximum(&band));
        series.insert("middle_band".into(), band);
    }

    if sc.wants(Observable::Distribution) {
        let ev = &sc.evolution;
        let cfg = EvolutionConfig::with_snapshot_interval(ev.cfl.min(0.5), ev.t_end, &grid, ev.snapshot_dt)?;
        let back = evolve_backward(&data, &grid, &cfg, &params)?;
        let mut two_sided = back.clone();
        two_sided.snapshots.extend(traj.snapshots.iter().skip(1).cloned());
        let (lhs, rhs) = diag::energy_distribution_check(&two_sided, dg.distribution_radius, &params);
        obs.insert("distribution_lhs".into(), lhs);
        obs.insert("distribution_rhs".into(), rhs);
        verdicts.push(Verdict::at_most("energy_distribution", lhs, rhs + tol.distribution * e0, "interior late energy <= exterior early energy"));
    }

    let passed = verdicts.iter().all(|v| v.passed);
    let summary = Summary {
        schema_version: SUMMARY_SCHEMA_VERSION,
        code_version: io::CODE_VERSION.into(),
        name: sc.name.clone(),
        seed: sc.seed,
        family: sc.initial_data.name().into(),
        params,
        constants: params.constants(),
        grid,
        solver: sc.evolution.solver,
        t_end: sc.evolution.t_end,
        snapshots: traj.snapshots.len(),
        energy_initial: e0,
        energy_final: e1,
        energy_drift: drift,
        observations: obs,
        fits,
        verdicts,
        passed,
    };
    Ok(RunOutcome { summary, records, series, profile, trajectory: traj })
}

fn late_maximum(series: &[(f64, f64)]) -> f64 {
    let (Some(a), Some(b)) = (series.first(), series.last()) else { return 0.0 };
    let cut = b.0 - (b.0 - a.0) / 3.0;
    series.iter().filter(|x| x.0 >= cut).map(|x| x.1).fold(0.0, f64::max)
}

const RECORD_COLUMNS: [&str; 12] = [
    "t",
    "e_total",
    "e_interior",
    "flux_residual",
    "morawetz_interior",
    "morawetz_sphere",
    "morawetz_exterior",
    "potential_integral",
    "exterior_deficit",
    "full_deficit",
    "pointwise_ratio1",
    "pointwise_ratio2",
];

/// Diagnostics table; absent observables are empty cells.
pub fn records_csv(records: &[DiagnosticsRecord]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let fail = |e: csv::Error| Error::State(format!("csv encoding failed: {e}"));
    w.write_record(RECORD_COLUMNS).map_err(fail)?;
    let cell = |v: Option<f64>| v.map(|x| serde_json::to_string(&x).unwrap_or_default()).unwrap_or_default();
    for r in records {
        let m = r.morawetz_partials;
        let pw = r.pointwise_ratio_max;
        let row = [
            cell(Some(r.t)),
            cell(Some(r.e_total)),
            cell(r.e_interior),
            cell(r.flux_residual),
            cell(m.map(|m| m[0])),
            cell(m.map(|m| m[1])),
            cell(m.map(|m| m[2])),
            cell(r.potential_integral),
            cell(r.exterior_deficit),
            cell(r.full_deficit),
            cell(pw.map(|p| p.0)),
            cell(pw.map(|p| p.1)),
        ];
        w.write_record(&row).map_err(fail)?;
    }
    w.into_inner().map_err(|e| Error::State(format!("csv encoding failed: {e}")))
}

/// Writes the artifacts of `outcome` into `dir`:
/// `summary.json`, `diagnostics.csv`, `series/*.csv`, `trajectory/`,
/// `radiation.csv` and `scenario.toml`.
pub fn write_outcome(sc: &Scenario, outcome: &RunOutcome, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let traj = &outcome.trajectory;
    let n = traj.snapshots.len();
    let k = sc.evolution.export_snapshots.max(1).min(n - 1).max(1);
    let mut picks: Vec<usize> = (0..=k).map(|i| (i * (n - 1) + k / 2) / k).collect();
    picks.dedup();
    let config = serde_json::to_value(sc.evolution)?;
    io::write_field_trajectory(
        &dir.join("trajectory"),
        picks.iter().map(|&i| &traj.snapshots[i]),
        &traj.grid,
        &traj.params,
        &traj.provenance,
        config,
    )?;
    io::write_atomic(&dir.join("diagnostics.csv"), &records_csv(&outcome.records)?)?;
    for (name, s) in &outcome.series {
        let bytes = io::csv_bytes(&["t", "value"], s.iter().map(|(t, v)| vec![*t, *v]))?;
        io::write_atomic(&dir.join("series").join(format!("{name}.csv")), &bytes)?;
    }
    if let Some(g) = &outcome.profile {
        io::write_profile(&dir.join("radiation.csv"), g, Some(&sc.model))?;
    }
    let text = toml::to_string(sc).map_err(|e| Error::State(format!("cannot render scenario: {e}")))?;
    io::write_atomic(&dir.join("scenario.toml"), text.as_bytes())?;
    io::write_json(&dir.join("summary.json"), &outcome.summary)
}

/// [`execute`] followed by [`write_outcome`].
pub fn run(sc: &Scenario, dir: &Path) -> Result<Summary> {
    let outcome = execute(sc)?;
    write_outcome(sc, &outcome, dir)?;
    Ok(outcome.summary)
}

/// Energy of `state`, and `E_κ` for `kappa = kappa_0` when that is positive.
pub fn data_energies(state: &FieldState, grid: &RadialGrid, params: &ModelParams) -> (f64, Option<f64>) {
    let k = params.constants().kappa_0;
    (energy(state, grid, params), (k > 0.0).then(|| weighted_energy(state, grid, k, params)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AxisName {
    D,
    P,
    Kappa,
    Epsilon,
    H,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub name: AxisName,
    pub values: Vec<f64>,
}

impl std::str::FromStr for Axis {
    type Err = Error;

    /// `name=v1,v2,...`
    fn from_str(s: &str) -> Result<Self> {
        let bad = |m: String| Error::scenario("sweep axis", m);
        let (name, vals) = s.split_once('=').ok_or_else(|| bad(format!("expected name=v1,v2,..., got {s:?}")))?;
        let name = match name.trim() {
            "d" => AxisName::D,
            "p" => AxisName::P,
            "kappa" => AxisName::Kappa,
            "epsilon" => AxisName::Epsilon,
            "h" => AxisName::H,
            other => return Err(bad(format!("unknown axis {other:?}; expected d, p, kappa, epsilon or h"))),
        };
        let values = vals
            .split(',')
            .map(|v| v.trim().parse::<f64>().map_err(|_| bad(format!("bad value {v:?}"))))
            .collect::<Result<Vec<_>>>()?;
        if values.is_empty() {
            return Err(bad("axis has no values".into()));
        }
        Ok(Axis { name, values })
    }
}

fn apply_axis(sc: &mut Scenario, name: AxisName, v: f64) -> Result<()> {
    match name {
        AxisName::D => {
            if v.fract() != 0.0 || v < 0.0 {
                return Err(Error::scenario("sweep axis d", format!("{v} is not a whole dimension")));
            }
            sc.model.d = v as u32;
        }
        AxisName::P => sc.model.p = v,
        AxisName::Kappa => sc.diagnostics.decay_kappa = Some(v),
        AxisName::H => sc.grid.h = v,
        AxisName::Epsilon => match &mut sc.initial_data {
            InitialDataFamily::PowerTail { epsilon, .. } => *epsilon = v,
            other => {
                return Err(Error::scenario("sweep axis epsilon", format!("family {} has no epsilon", other.name())))
            }
        },
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub cell: usize,
    pub values: Vec<f64>,
    pub ok: bool,
    pub error: Option<String>,
    pub passed: Option<bool>,
    pub energy_drift: Option<f64>,
    pub flux_residual: Option<f64>,
    pub decay_exponent: Option<f64>,
}

/// Observed convergence order of a quantity between two cells that differ
/// only in `h`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderEstimate {
    pub quantity: String,
    pub coarse_cell: usize,
    pub fine_cell: usize,
    pub h_coarse: f64,
    pub h_fine: f64,
    pub order: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub schema_version: u32,
    pub axes: Vec<Axis>,
    pub rows: Vec<SweepRow>,
    pub orders: Vec<OrderEstimate>,
}

fn cartesian(axes: &[Axis]) -> Vec<Vec<f64>> {
    axes.iter().fold(vec![Vec::new()], |acc, ax| {
        acc.iter().flat_map(|prefix| ax.values.iter().map(move |v| [prefix.clone(), vec![*v]].concat())).collect()
    })
}

fn run_cell(template: &Scenario, axes: &[Axis], values: &[f64], dir: &Path) -> Result<Summary> {
    let mut sc = template.clone();
    for (ax, v) in axes.iter().zip(values) {
        apply_axis(&mut sc, ax.name, *v)?;
    }
    sc.name = format!("{}[{}]", template.name, values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(","));
    run(&sc, dir)
}

fn order_estimates(axes: &[Axis], rows: &[SweepRow]) -> Vec<OrderEstimate> {
    let Some(hi) = axes.iter().position(|a| a.name == AxisName::H) else { return Vec::new() };
    let mut out = Vec::new();
    let mut groups: BTreeMap<String, Vec<&SweepRow>> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.ok) {
        let key: Vec<String> = r.values.iter().enumerate().filter(|(i, _)| *i != hi).map(|(_, v)| v.to_string()).collect();
        groups.entry(key.join(",")).or_default().push(r);
    }
    for cells in groups.values_mut() {
        cells.sort_by(|a, b| b.values[hi].total_cmp(&a.values[hi]));
        for w in cells.windows(2) {
            let (c, f) = (w[0], w[1]);
            let (hc, hf) = (c.values[hi], f.values[hi]);
            if !(hc > hf) {
                continue;
            }
            for (name, a, b) in [
                ("energy_drift", c.energy_drift, f.energy_drift),
                ("flux_residual", c.flux_residual, f.flux_residual),
            ] {
                if let (Some(a), Some(b)) = (a, b) {
                    if a > 0.0 && b > 0.0 {
                        out.push(OrderEstimate {
                            quantity: name.into(),
                            coarse_cell: c.cell,
                            fine_cell: f.cell,
                            h_coarse: hc,
                            h_fine: hf,
                            order: (a / b).ln() / (hc / hf).ln(),
                        });
                    }
                }
            }
        }
    }
    out
}

/// Runs every cell of the Cartesian product of `axes` into
/// `dir/cell_XXX`, up to `threads` cells at once (each cell sequential
/// inside). Cell failures are recorded and do not stop the sweep. Writes
/// `sweep.csv` and `sweep.json`.
pub fn sweep(template: &Scenario, axes: &[Axis], dir: &Path, threads: usize) -> Result<SweepTable> {
    let cells = cartesian(axes);
    let job = |(i, values): (usize, &Vec<f64>)| {
        let res = run_cell(template, axes, values, &dir.join(format!("cell_{i:03}")));
        match res {
            Ok(s) => SweepRow {
                cell: i,
                values: values.clone(),
                ok: true,
                error: None,
                passed: Some(s.passed),
                energy_drift: Some(s.energy_drift),
                flux_residual: s.verdicts.iter().find(|v| v.name == "flux_residual").map(|v| v.value),
                decay_exponent: s.fits.get("interior_decay").map(|f| f.exponent),
            },
            Err(e) => SweepRow {
                cell: i,
                values: values.clone(),
                ok: false,
                error: Some(e.to_string()),
                passed: None,
                energy_drift: None,
                flux_residual: None,
                decay_exponent: None,
            },
        }
    };
    let rows = run_cells(&cells, threads.max(1), job)?;
    let orders = order_estimates(axes, &rows);
    let table = SweepTable { schema_version: SUMMARY_SCHEMA_VERSION, axes: axes.to_vec(), rows, orders };
    write_sweep(&table, dir)?;
    Ok(table)
}

#[cfg(feature = "parallel")]
fn run_cells<F>(cells: &[Vec<f64>], threads: usize, job: F) -> Result<Vec<SweepRow>>
where
    F: Fn((usize, &Vec<f64>)) -> SweepRow + Sync + Send,
{
    use rayon::prelude::*;
    if threads == 1 {
        return Ok(cells.iter().enumerate().map(job).collect());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {threads} worker threads: {e}")))?;
    let previous = par::exec();
    par::set_exec(par::Exec::Sequential);
    let rows = pool.install(|| cells.par_iter().enumerate().map(&job).collect());
    par::set_exec(previous);
    Ok(rows)
}

#[cfg(not(feature = "parallel"))]
fn run_cells<F>(cells: &[Vec<f64>], _threads: usize, job: F) -> Result<Vec<SweepRow>>
where
    F: Fn((usize, &Vec<f64>)) -> SweepRow,
{
    Ok(cells.iter().enumerate().map(job).collect())
}

fn write_sweep(table: &SweepTable, dir: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let fail = |e: csv::Error| Error::State(format!("csv encoding failed: {e}"));
    let mut header: Vec<String> = vec!["cell".into()];
    header.extend(table.axes.iter().map(|a| serde_json::to_value(a.name).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default()));
    header.extend(["ok", "passed", "energy_drift", "flux_residual", "decay_exponent", "error"].map(String::from));
    w.write_record(&header).map_err(fail)?;
    let num = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in &table.rows {
        let mut rec = vec![r.cell.to_string()];
        rec.extend(r.values.iter().map(|v| v.to_string()));
        rec.push(r.ok.to_string());
        rec.push(r.passed.map(|b| b.to_string()).unwrap_or_default());
        rec.push(num(r.energy_drift));
        rec.push(num(r.flux_residual));
        rec.push(num(r.decay_exponent));
        rec.push(r.error.clone().unwrap_or_default());
        w.write_record(&rec).map_err(fail)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::State(format!("csv encoding failed: {e}")))?;
    io::write_atomic(&dir.join("sweep.csv"), &bytes)?;
    io::write_json(&dir.join("sweep.json"), table)
}
