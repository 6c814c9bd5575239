//! Acceptance suite. One line per criterion:
//!
//! ```text
//! criterion  N  PASS|FAIL  title  (seconds)
//!     detail
//! ```
//!
//! Pass criterion numbers as arguments to run a subset, e.g.
//! `cargo test --test acceptance -- 2 7`. Exits nonzero if any criterion fails.

mod common;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::*;
use radwave::diagnostics::*;
use radwave::grid::*;
use radwave::par::{self, Exec};
use radwave::params::*;
use radwave::radiation::*;
use radwave::scenario::{self, InitialDataFamily, RunOutcome, Scenario};
use radwave::solver_char::*;
use radwave::solver_fd::*;

type Check = Result<(bool, String), String>;

struct Report {
    lines: Vec<String>,
    failed: Vec<usize>,
}

impl Report {
    fn record(&mut self, n: usize, title: &str, start: Instant, check: Check) {
        let (passed, detail) = match check {
            Ok(x) => x,
            Err(e) => (false, format!("error: {e}")),
        };
        let line = format!(
            "criterion {n:>2}  {}  {title}  ({:.1} s)\n    {detail}",
            if passed { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
        println!("{line}");
        self.lines.push(line);
        if !passed {
            self.failed.push(n);
        }
    }
}

fn e<T, E: std::fmt::Display>(r: Result<T, E>) -> Result<T, String> {
    r.map_err(|x| x.to_string())
}

fn all_ok(flags: &[bool]) -> bool {
    flags.iter().all(|x| *x)
}

// 1

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 4.0 * f64::EPSILON * b.abs().max(1.0)
}

fn constants() -> Check {
    let mut ok = Vec::new();
    let c = e(derive_constants(&ModelParams { d: 3, p: 3.0, zeta: -1 }))?;
    ok.extend([c.lambda_d == 0.0, close(c.beta, 0.25), close(c.kappa_0, 0.5), close(c.s_p, 0.5)]);
    let c = e(derive_constants(&ModelParams { d: 4, p: 7.0 / 3.0, zeta: -1 }))?;
    ok.extend([close(c.lambda_d, 0.75), close(c.p_c, 7.0 / 3.0), close(c.p_e, 3.0)]);
    ok.extend([close(c.beta, 0.3), close(c.kappa_0, 0.4)]);
    let c = e(derive_constants(&ModelParams { d: 6, p: 9.0 / 5.0, zeta: -1 }))?;
    ok.extend([close(c.lambda_d, 3.75), close(c.p_c, 1.8), close(c.p_e, 2.0)]);
    ok.extend([close(c.beta, 5.0 / 14.0), close(c.kappa_0, 2.0 / 7.0)]);
    let lambdas: Vec<f64> = (3..=6)
        .map(|d| ModelParams { d, p: p_conformal(d), zeta: 0 }.constants().lambda_d)
        .collect();
    ok.push(lambdas == [0.0, 0.75, 2.0, 3.75]);
    let examples = all_ok(&ok);

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let d = rng.gen_range(3..=6);
        let p = rng.gen_range(p_conformal(d)..p_energy_critical(d));
        let c = e(derive_constants(&ModelParams { d, p, zeta: -1 }))?;
        worst = worst.max((c.kappa_0 - (1.0 - 2.0 * c.beta)).abs());
    }
    Ok((
        examples && worst <= 1e-14,
        format!("quoted examples match: {examples}; max |kappa_0 - (1 - 2 beta)| over 1000 draws = {worst:.1e} (<= 1e-14)"),
    ))
}

// 2

fn linear_exactness() -> Check {
    let p = ModelParams { d: 3, p: 3.0, zeta: 0 };
    let g = e(RadialGrid::with_spacing(110.0, 0.01))?;
    let s = FieldState::from_fns(
        &g,
        0.0,
        |r| (-(r - 5.0).powi(2)).exp(),
        |r| (r - 4.0) * (-(r - 5.0).powi(2)).exp(),
    );
    let red = to_reduced(&s, &g, &p);
    let steps = 10_000;
    let traj = e(evolve_char(&red, &g, steps as f64 * g.h, steps, &p))?;
    let (vp, vm) = transported_3d(&red, steps);
    let last = traj.last();
    let transport = max_abs_diff(&last.v_plus, &vp).max(max_abs_diff(&last.v_minus, &vm));

    let mut errs = Vec::new();
    for h in [0.04, 0.02, 0.01] {
        let g = e(RadialGrid::with_spacing(15.0, h))?;
        let s = FieldState::from_fns(&g, 0.0, |r| (-r * r).exp(), |_| 0.0);
        let cfg = e(EvolutionConfig::new(0.25, 5.0, usize::MAX))?;
        let tr = e(evolve(&s, &g, &cfg, &p))?;
        let last = tr.last();
        let err = (0..g.len())
            .map(|j| (last.u[j] - dalembert_gaussian_3d(1.0, g.r(j), last.t).0).abs())
            .fold(0.0, f64::max);
        errs.push(err);
    }
    let orders = [order(errs[0], errs[1]), order(errs[1], errs[2])];
    Ok((
        transport <= 1e-10 && orders.iter().all(|o| *o >= 1.8),
        format!(
            "characteristic transport error after 1e4 steps = {transport:.1e} (<= 1e-10); \
             FD max error vs d'Alembert at t = 5 for h = 0.04, 0.02, 0.01: {:.2e}, {:.2e}, {:.2e}; orders {:.2}, {:.2} (>= 1.8)",
            errs[0], errs[1], errs[2], orders[0], orders[1]
        ),
    ))
}

// 3

fn energy_conservation() -> Check {
    let p = ModelParams { d: 4, p: 7.0 / 3.0, zeta: -1 };
    let mut drifts = Vec::new();
    for h in [0.04, 0.02, 0.01] {
        let g = e(RadialGrid::with_spacing(30.0, h))?;
        let s = FieldState::from_fns(&g, 0.0, |r| 2.0 * (-r * r).exp(), |_| 0.0);
        let cfg = e(EvolutionConfig::new(0.25, 20.0, usize::MAX))?;
        let tr = e(evolve(&s, &g, &cfg, &p))?;
        let e0 = energy(tr.first(), &g, &p);
        drifts.push((energy(tr.last(), &g, &p) - e0).abs() / e0);
    }
    let orders = [order(drifts[0], drifts[1]), order(drifts[1], drifts[2])];
    Ok((
        drifts[2] <= 1e-3 && orders.iter().all(|o| *o >= 1.8),
        format!(
            "relative drift at t = 20 for h = 0.04, 0.02, 0.01: {:.2e}, {:.2e}, {:.2e} (<= 1e-3 at 0.01); orders {:.2}, {:.2} (>= 1.8)",
            drifts[0], drifts[1], drifts[2], orders[0], orders[1]
        ),
    ))
}

// 4

fn cross_solver_diff(p: &ModelParams, amplitude: f64, h: f64) -> Result<f64, String> {
    let t_end = 4.0;
    let g = e(RadialGrid::with_spacing(12.0, h))?;
    let s = FieldState::from_fns(&g, 0.0, |r| amplitude * (-r * r).exp(), |_| 0.0);
    let cfg = e(EvolutionConfig::new(0.25, t_end, usize::MAX))?;
    let fd = e(evolve(&s, &g, &cfg, p))?;
    let ch = e(evolve_char_from_field(&s, &g, t_end, usize::MAX, p))?;
    let u_char = e(ch.field_state(ch.snapshots.len() - 1))?;
    let u_fd = fd.last();
    if (u_fd.t - u_char.t).abs() > 1e-9 {
        return Err(format!("final times differ: {} vs {}", u_fd.t, u_char.t));
    }
    let from = (0.5 / h).round() as usize;
    Ok(max_abs_diff(&u_fd.u[from..], &u_char.u[from..]))
}

fn cross_solver() -> Check {
    let cases = [
        ("d=5 linear", ModelParams { d: 5, p: 2.2, zeta: 0 }, 1.0),
        ("d=4 nonlinear", ModelParams { d: 4, p: 7.0 / 3.0, zeta: -1 }, 1.5),
    ];
    let mut ok = true;
    let mut detail = Vec::new();
    for (name, p, a) in cases {
        let diffs = [0.04, 0.02, 0.01].map(|h| cross_solver_diff(&p, a, h));
        let diffs: Vec<f64> = diffs.into_iter().collect::<Result<_, _>>()?;
        let f = [diffs[0] / diffs[1], diffs[1] / diffs[2]];
        ok &= f.iter().all(|x| *x >= 1.8);
        detail.push(format!(
            "{name}: max |u_fd - u_char| on r >= 0.5 at t = 4 = {:.2e}, {:.2e}, {:.2e}; factors {:.2}, {:.2} (>= 1.8)",
            diffs[0], diffs[1], diffs[2], f[0], f[1]
        ));
    }
    Ok((ok, detail.join("\n    ")))
}

// 5

fn flux_identity() -> Check {
    let mut ok = true;
    let mut detail = Vec::new();
    for d in [4, 5] {
        let p = ModelParams { d, p: mid_p(d), zeta: -1 };
        let mut res = Vec::new();
        let mut worst_cone = 0.0f64;
        for h in [0.02, 0.01, 0.005] {
            let g = e(RadialGrid::with_spacing(30.0, h))?;
            let s = FieldState::from_fns(&g, 0.0, |r| 2.0 * (-r * r).exp(), |r| -(-r * r).exp());
            let cfg = e(EvolutionConfig::new(0.25, 12.0, 4))?;
            let tr = e(evolve(&s, &g, &cfg, &p))?;
            let e0 = energy(tr.first(), &g, &p);
            let (delta, surface) = e(flux_balance(&tr, 0.0, 2.0, 10.0, &p))?;
            res.push((delta - surface).abs() / e0);
            worst_cone = worst_cone.min(cone_monotonicity(&tr, 0.0, &p) / e0);
        }
        let halves = res[1] <= 0.5 * res[0] && res[2] <= 0.5 * res[1];
        ok &= res[1] <= 1e-2 && halves && worst_cone >= -1e-6;
        detail.push(format!(
            "d={d}: residual/E on [2, 10] for h = 0.02, 0.01, 0.005: {:.2e}, {:.2e}, {:.2e} (<= 1e-2 at 0.01, halving: {halves}); \
             most negative cone increment/E = {worst_cone:.1e} (>= -1e-6)",
            res[0], res[1], res[2]
        ));
    }
    Ok((ok, detail.join("\n    ")))
}

// Shared scenario runs for 6, 9, 10, 11 and 12.

fn nonlinear_runs() -> &'static Result<Vec<(String, RunOutcome)>, String> {
    static RUNS: OnceLock<Result<Vec<(String, RunOutcome)>, String>> = OnceLock::new();
    RUNS.get_or_init(|| {
        let mut paths: Vec<PathBuf> = e(std::fs::read_dir(scenario_dir()))?
            .filter_map(|x| x.ok().map(|x| x.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "toml"))
            .collect();
        paths.sort();
        let mut out = Vec::new();
        for path in paths {
            let sc = e(scenario::load_scenario(&path))?;
            if sc.model.is_linear() {
                continue;
            }
            let outcome = scenario::execute(&sc).map_err(|x| format!("{}: {x}", path.display()))?;
            out.push((sc.name.clone(), outcome));
        }
        Ok(out)
    })
}

fn find_run(name: &str) -> Result<&'static RunOutcome, String> {
    let runs = nonlinear_runs().as_ref().map_err(|x| x.clone())?;
    runs.iter()
        .find(|(n, _)| n == name)
        .map(|x| &x.1)
        .ok_or_else(|| format!("scenario {name} not found"))
}

fn verdict_check(names: &[&str]) -> Check {
    let runs = nonlinear_runs().as_ref().map_err(|x| x.clone())?;
    let mut ok = !runs.is_empty();
    let mut detail = Vec::new();
    for (scenario, outcome) in runs {
        let mut parts = Vec::new();
        for name in names {
            match outcome.summary.verdicts.iter().find(|v| v.name == *name) {
                Some(v) => {
                    ok &= v.passed;
                    parts.push(format!("{name} {:.4e} vs {:.4e} {}", v.value, v.bound, if v.passed { "ok" } else { "FAILED" }));
                }
                None => {
                    ok = false;
                    parts.push(format!("{name} missing"));
                }
            }
        }
        detail.push(format!("{scenario}: {}", parts.join("; ")));
    }
    Ok((ok, detail.join("\n    ")))
}

// 7

fn isometry_gap(d: u32, h: f64, t: f64) -> Result<f64, String> {
    let p = ModelParams { d, p: mid_p(d), zeta: 0 };
    let g = e(RadialGrid::with_spacing(t + 12.0, h))?;
    let s = FieldState::from_fns(&g, 0.0, |r| (-r * r).exp(), |r| 0.5 * (1.0 - r * r) * (-r * r).exp());
    let eta = e(EtaGrid::new(-6.0, 10.0, h))?;
    let (lhs, rhs) = e(isometry_residual(&s, &g, &p, &eta, t))?;
    Ok((lhs - rhs).abs() / rhs)
}

fn isometry() -> Check {
    let mut ok = true;
    let mut detail = Vec::new();
    for d in 3..=6 {
        let coarse = isometry_gap(d, 0.01, 25.0)?;
        let fine = isometry_gap(d, 0.005, 50.0)?;
        ok &= fine <= 0.02 && fine < coarse;
        detail.push(format!("d={d}: gap {coarse:.2e} at (h, t) = (0.01, 25), {fine:.2e} at (0.005, 50)"));
    }
    Ok((ok, format!("{} (<= 2e-2, shrinking)", detail.join("; "))))
}

// 8

fn round_trip_error(d: u32, h: f64, t_match: f64) -> Result<f64, String> {
    let p = ModelParams { d, p: mid_p(d), zeta: 0 };
    let eta = e(EtaGrid::new(-3.0, 3.0, h))?;
    let g = RadiationProfile::from_fn(eta, |s| {
        let x = s / 1.5;
        if x.abs() >= 1.0 {
            0.0
        } else {
            -8.0 * x * (1.0 - x * x).powi(3)
        }
    });
    let small = e(RadialGrid::with_spacing(inversion_r_max(&g, t_match), h))?;
    let data = e(invert_radiation(&g, t_match, &small, &p))?;
    let big = e(RadialGrid::with_spacing(2.0 * t_match + 6.0, h))?;
    let data = e(data.padded(&small, &big))?;
    let back = e(extract_from_data(&data, &big, &p, &eta, 2.0 * t_match))?;
    Ok(back.relative_l2_error(&g))
}

fn round_trip() -> Check {
    let mut ok = true;
    let mut detail = Vec::new();
    for d in 3..=6 {
        let coarse = round_trip_error(d, 0.01, 25.0)?;
        let fine = round_trip_error(d, 0.005, 50.0)?;
        ok &= fine <= 0.05 && fine < coarse;
        detail.push(format!("d={d}: {coarse:.2e} at (h, t_match) = (0.01, 25), {fine:.2e} at (0.005, 50)"));
    }
    Ok((ok, format!("relative error {} (<= 5e-2, improving)", detail.join("; "))))
}

// 10, 11

fn exterior_scattering() -> Check {
    let run = find_run("scattering_d4")?;
    let ext = run.series.get("exterior_deficit").ok_or("no exterior deficit series")?;
    let e0 = run.summary.energy_initial;
    let at10 = value_near(ext, 10.0).ok_or("no deficit at t = 10")?;
    let (t_end, at_end) = *ext.last().ok_or("empty deficit series")?;
    let ratio = at_end / at10;
    let incr = max_increase_after(ext, 10.0) / e0;
    Ok((
        t_end >= 100.0 - 1e-9 && ratio <= 0.1 && incr <= 1e-3,
        format!(
            "deficit(t=10) = {at10:.3e}, deficit(t={t_end}) = {at_end:.3e}, ratio {ratio:.2e} (<= 0.1); \
             largest increase after t = 10 over E = {incr:.1e} (<= 1e-3)"
        ),
    ))
}

fn energy_gap_scattering() -> Check {
    let run = find_run("scattering_d4")?;
    let obs = &run.summary.observations;
    let get = |k: &str| obs.get(k).copied().ok_or(format!("missing observation {k}"));
    let gap = get("energy_gap")?;
    let full = get("full_deficit_ratio")?;
    let pot = get("potential_late_min_ratio")?;
    Ok((
        gap.abs() <= 0.05 && full <= 0.15 && pot <= 0.05,
        format!(
            "(E - c_d |g_+|^2)/E = {gap:.2e} (|.| <= 5e-2); full deficit at T / initial = {full:.2e} (<= 0.15); \
             late potential minimum / initial = {pot:.2e} (<= 5e-2)"
        ),
    ))
}

// 12

fn interior_decay_check() -> Check {
    let run = find_run("power_tail_d3")?;
    let kappa0 = run.summary.constants.kappa_0;
    let fit = run.summary.fits.get("interior_decay").ok_or("no interior decay fit")?;
    Ok((
        fit.exponent < 0.0 && fit.r2 >= 0.8 && (kappa0 - 0.5).abs() < 1e-15 && fit.window == (20.0, 100.0),
        format!(
            "kappa_0 = {kappa0}; slope {:.3} (< 0), r^2 {:.3} (>= 0.8) over t in [{}, {}] with {} samples",
            fit.exponent, fit.r2, fit.window.0, fit.window.1, fit.samples
        ),
    ))
}

// 13

fn pointwise() -> Check {
    let mut ok = true;
    let mut detail = Vec::new();
    for d in 3..=6 {
        let p = ModelParams { d, p: mid_p(d), zeta: -1 };
        let g = e(RadialGrid::with_spacing(12.0, 0.01))?;
        let (k1, k2) = pointwise_constants(&p);
        let (mut m1, mut m2) = (0.0f64, 0.0f64);
        for seed in 0..50 {
            let family = InitialDataFamily::RandomSmooth { seed: Some(seed), bumps: 4, amplitude: 1.0, max_radius: 4.0 };
            let s = e(scenario::materialize(&family, &g, &p))?;
            let (a, b) = pointwise_ratio(&s, &g, &p);
            m1 = m1.max(a / k1);
            m2 = m2.max(b / k2);
        }
        ok &= m1 <= 1.0 + 1e-3 && m2 <= 1.0 + 1e-3;
        detail.push(format!("d={d}: max ratio1/K1 = {m1:.3}, ratio2/K2 = {m2:.3}"));
    }
    Ok((ok, format!("{} (<= 1.001)", detail.join("; "))))
}

// 14

fn collect_files(dir: &Path, base: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) -> std::io::Result<()> {
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            collect_files(&path, base, out)?;
        } else {
            out.insert(path.strip_prefix(base).unwrap().to_path_buf(), std::fs::read(&path)?);
        }
    }
    Ok(())
}

fn run_to_files(sc: &Scenario) -> Result<BTreeMap<PathBuf, Vec<u8>>, String> {
    let dir = e(tempfile::tempdir())?;
    e(scenario::run(sc, dir.path()))?;
    let mut files = BTreeMap::new();
    e(collect_files(dir.path(), dir.path(), &mut files))?;
    Ok(files)
}

fn in_pool<R: Send>(threads: usize, f: impl FnOnce() -> R + Send) -> R {
    #[cfg(feature = "parallel")]
    {
        rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(f)
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = threads;
        f()
    }
}

fn determinism() -> Check {
    let sc = e(scenario::load_scenario(&scenario_dir().join("random_d5.toml")))?;
    let before = par::exec();
    par::set_exec(Exec::Sequential);
    let a = run_to_files(&sc);
    let b = run_to_files(&sc);
    par::set_exec(Exec::Parallel);
    let c = in_pool(4, || run_to_files(&sc));
    par::set_exec(before);
    let (a, b, c) = (a?, b?, c?);
    let bytes: usize = a.values().map(Vec::len).sum();
    Ok((
        !a.is_empty() && a == b && a == c,
        format!(
            "{} files, {bytes} bytes; sequential re-run identical: {}; 4-thread parallel run identical: {}",
            a.len(),
            a == b,
            a == c
        ),
    ))
}

fn main() {
    let wanted: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let want = |n: usize| wanted.is_empty() || wanted.contains(&n);
    let mut report = Report { lines: Vec::new(), failed: Vec::new() };
    let suite: [(usize, &str, fn() -> Check); 14] = [
        (1, "derived constants", constants),
        (2, "three-dimensional linear exactness", linear_exactness),
        (3, "energy conservation", energy_conservation),
        (4, "cross-solver agreement", cross_solver),
        (5, "cone flux identity and monotonicity", flux_identity),
        (6, "Morawetz bound on nonlinear scenarios", || verdict_check(&["morawetz", "morawetz_terms_nonnegative"])),
        (7, "radiation isometry", isometry),
        (8, "radiation round trip", round_trip),
        (9, "nonlinear radiation bound", || verdict_check(&["radiation_bound"])),
        (10, "exterior scattering", exterior_scattering),
        (11, "energy-gap scattering", energy_gap_scattering),
        (12, "interior decay", interior_decay_check),
        (13, "pointwise bounds", pointwise),
        (14, "determinism", determinism),
    ];
    for (n, title, f) in suite {
        if want(n) {
            let start = Instant::now();
            report.record(n, title, start, f());
        }
    }
    let total = report.lines.len();
    println!("acceptance: {} of {total} criteria passed", total - report.failed.len());
    if !report.failed.is_empty() {
        println!("failed: {:?}", report.failed);
        std::process::exit(1);
    }
}
