mod common;

use std::path::Path;

use approx::assert_relative_eq;

use common::scenario_dir;
use radwave::grid::{weighted_energy, RadialGrid};
use radwave::plot::{emit_plots, slope_label};
use radwave::scenario::{self, load_scenario, materialize, parse_scenario, Axis, InitialDataFamily, Summary};
use radwave::ModelParams;

const SMALL: &str = r#"
name = "small"

[model]
d = 5
p = 2.2
zeta = -1

[grid]
r_max = 14.0
h = 0.04

[evolution]
t_end = 4.0
snapshot_dt = 0.04

[initial_data]
family = "gaussian"
amplitude = 1.0
"#;

fn small() -> scenario::Scenario {
    parse_scenario(SMALL, Path::new("small.toml")).unwrap()
}

#[test]
fn shipped_scenarios_validate() {
    let mut n = 0;
    for entry in std::fs::read_dir(scenario_dir()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|x| x == "toml") {
            let sc = load_scenario(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            sc.validate().unwrap();
            n += 1;
        }
    }
    assert!(n >= 5);
}

#[test]
fn power_tail_weighted_energy_settles_under_domain_doubling() {
    let params = ModelParams { d: 3, p: 3.0, zeta: -1 };
    let kappa = params.constants().kappa_0;
    let ew = |r_max: f64| {
        let grid = RadialGrid::with_spacing(r_max, 0.2).unwrap();
        let family = InitialDataFamily::PowerTail {
            epsilon: 0.01,
            amplitude: 1.0,
            cutoff_radius: Some(0.5 * r_max),
            cutoff_width: 0.5 * r_max - 2.0,
        };
        let s = materialize(&family, &grid, &params).unwrap();
        weighted_energy(&s, &grid, kappa, &params)
    };
    let e: Vec<f64> = [2e5, 4e5, 8e5].into_iter().map(ew).collect();
    let steps: Vec<f64> = e.windows(2).map(|w| w[1] - w[0]).collect();
    // the slowest tail integrand is r^{-1.04}, so increments shrink only by about 2^{-0.04}
    assert!(steps[1] < steps[0] && steps[1] > 0.0, "{e:?}");
    assert!(steps[1] / e[2] < 0.02, "{e:?}");
}

#[test]
fn one_cell_sweep_matches_run() {
    let sc = small();
    let dir = tempfile::tempdir().unwrap();
    let single = scenario::run(&sc, &dir.path().join("run")).unwrap();
    let axis: Axis = "h=0.04".parse().unwrap();
    let table = scenario::sweep(&sc, &[axis], &dir.path().join("sweep"), 1).unwrap();
    assert_eq!(table.rows.len(), 1);
    let cell: Summary =
        radwave::io::read_json(&dir.path().join("sweep/cell_000/summary.json")).unwrap();
    assert_eq!(cell.energy_final.to_bits(), single.energy_final.to_bits());
    assert_eq!(cell.verdicts, single.verdicts);
}

#[test]
fn h_sweep_reports_second_order_drift() {
    let sc = small();
    let dir = tempfile::tempdir().unwrap();
    let axis: Axis = "h=0.04,0.02".parse().unwrap();
    let table = scenario::sweep(&sc, &[axis], dir.path(), 2).unwrap();
    assert!(table.rows.iter().all(|r| r.ok));
    let drift = table.orders.iter().find(|o| o.quantity == "energy_drift").unwrap();
    assert!(drift.order > 1.5, "{drift:?}");
    assert!(dir.path().join("sweep.csv").exists());
}

#[test]
fn sweep_records_failing_cells_and_continues() {
    let sc = small();
    let dir = tempfile::tempdir().unwrap();
    let axis: Axis = "p=2.2,9.0".parse().unwrap();
    let table = scenario::sweep(&sc, &[axis], dir.path(), 1).unwrap();
    assert!(table.rows[0].ok);
    assert!(!table.rows[1].ok);
    assert!(table.rows[1].error.as_deref().unwrap().contains("p_e"));
}

#[test]
fn decay_plot_carries_fitted_slope() {
    let mut sc = load_scenario(&scenario_dir().join("power_tail_d3.toml")).unwrap();
    sc.grid.h = 0.1;
    sc.evolution.t_end = 40.0;
    sc.grid.r_max = 92.0;
    sc.initial_data = InitialDataFamily::PowerTail { epsilon: 0.01, amplitude: 0.1, cutoff_radius: Some(80.0), cutoff_width: 10.0 };
    sc.diagnostics.decay_window = Some([8.0, 40.0]);
    let dir = tempfile::tempdir().unwrap();
    let summary = scenario::run(&sc, dir.path()).unwrap();
    let fit = &summary.fits["interior_decay"];
    let rep = emit_plots(dir.path()).unwrap();
    let svg = std::fs::read_to_string(dir.path().join("plots/interior_energy_loglog.svg")).unwrap();
    assert!(svg.contains(&slope_label(fit)));
    let py = std::fs::read_to_string(dir.path().join("plots/interior_energy_loglog.py")).unwrap();
    assert!(py.contains(&format!("{:?}", fit.exponent)));
    assert!(rep.files.iter().any(|f| f.ends_with("energy.svg")));
}

#[test]
fn summary_carries_constants_and_schema() {
    let sc = small();
    let dir = tempfile::tempdir().unwrap();
    scenario::run(&sc, dir.path()).unwrap();
    let v: serde_json::Value = radwave::io::read_json(&dir.path().join("summary.json")).unwrap();
    assert_eq!(v["schema_version"], 1);
    assert_relative_eq!(v["constants"]["lambda_d"].as_f64().unwrap(), 2.0);
    assert!(v["verdicts"].as_array().unwrap().len() >= 4);
}
