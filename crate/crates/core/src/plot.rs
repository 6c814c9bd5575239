//! Static plots of a run directory: one SVG per diagnostics series, a
//! log-log decay plot with its fitted line, and a standalone matplotlib
//! script next to each figure.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::diagnostics::DecayFit;
use crate::error::{Error, Result};
use crate::io;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 60.0;

/// Files written by [`emit_plots`], and anything skipped.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PlotReport {
    pub files: Vec<PathBuf>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Scale {
    Linear,
    Log,
}

struct Figure<'a> {
    title: &'a str,
    x_label: &'a str,
    y_label: &'a str,
    x_scale: Scale,
    y_scale: Scale,
    points: Vec<(f64, f64)>,
    fit: Option<&'a DecayFit>,
}

fn transform(v: f64, s: Scale) -> f64 {
    match s {
        Scale::Linear => v,
        Scale::Log => v.log10(),
    }
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if lo == hi {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

fn tick_label(v: f64, s: Scale) -> String {
    match s {
        Scale::Linear => format!("{v:.3e}"),
        Scale::Log => format!("1e{v:.2}"),
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn render(fig: &Figure) -> String {
    let pts: Vec<(f64, f64)> = fig
        .points
        .iter()
        .map(|&(x, y)| (transform(x, fig.x_scale), transform(y, fig.y_scale)))
        .filter(|(x, y)| x.is_finite() && y.is_finite())
        .collect();
    let (x0, x1) = range(pts.iter().map(|p| p.0));
    let (y0, y1) = range(pts.iter().map(|p| p.1));
    let (pw, ph) = (WIDTH - 2.0 * MARGIN, HEIGHT - 2.0 * MARGIN);
    let sx = |x: f64| MARGIN + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| HEIGHT - MARGIN - (y - y0) / (y1 - y0) * ph;

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#);
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="24" text-anchor="middle" font-family="sans-serif" font-size="16">{}</text>"#,
        WIDTH / 2.0,
        escape(fig.title)
    );
    let _ = writeln!(
        s,
        r#"<rect x="{MARGIN}" y="{MARGIN}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-family="sans-serif" font-size="10">{}</text>"#,
            sx(xv),
            HEIGHT - MARGIN + 14.0,
            tick_label(xv, fig.x_scale)
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end" font-family="sans-serif" font-size="10">{}</text>"#,
            MARGIN - 4.0,
            sy(yv) + 3.0,
            tick_label(yv, fig.y_scale)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-family="sans-serif" font-size="12">{}</text>"#,
        WIDTH / 2.0,
        HEIGHT - 16.0,
        escape(fig.x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="14" y="{:.1}" text-anchor="middle" font-family="sans-serif" font-size="12" transform="rotate(-90 14 {:.1})">{}</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0,
        escape(fig.y_label)
    );
    let mut path = String::new();
    for (i, (x, y)) in pts.iter().enumerate() {
        let _ = write!(path, "{}{:.2},{:.2}", if i == 0 { "M" } else { " L" }, sx(*x), sy(*y));
    }
    let _ = writeln!(s, r#"<path d="{path}" fill="none" stroke="steelblue" stroke-width="1.5"/>"#);
    if let Some(fit) = fig.fit {
        let (a, b) = (fit.window.0.log10(), fit.window.1.log10());
        let line = |x: f64| (fit.intercept + fit.exponent * x * std::f64::consts::LN_10) / std::f64::consts::LN_10;
        let _ = writeln!(
            s,
            r#"<path d="M{:.2},{:.2} L{:.2},{:.2}" fill="none" stroke="firebrick" stroke-width="1.5" stroke-dasharray="6 4"/>"#,
            sx(a),
            sy(line(a)),
            sx(b),
            sy(line(b))
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end" font-family="sans-serif" font-size="12" fill="firebrick">{}</text>"#,
            WIDTH - MARGIN - 8.0,
            MARGIN + 18.0,
            escape(&slope_label(fit))
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Annotation of a decay plot.
pub fn slope_label(fit: &DecayFit) -> String {
    format!("slope = {:.4}, r^2 = {:.3}", fit.exponent, fit.r2)
}

fn script(csv_name: &str, fig: &Figure) -> String {
    let mut s = String::new();
    s.push_str("import csv\nimport math\nimport os\n\nimport matplotlib\nmatplotlib.use(\"Agg\")\nimport matplotlib.pyplot as plt\n\n");
    s.push_str("here = os.path.dirname(os.path.abspath(__file__))\n");
    let _ = writeln!(s, "with open(os.path.join(here, \"..\", \"series\", \"{csv_name}\")) as f:");
    s.push_str("    rows = [(float(r[\"t\"]), float(r[\"value\"])) for r in csv.DictReader(f)]\n");
    s.push_str("t = [r[0] for r in rows]\nv = [r[1] for r in rows]\n\nfig, ax = plt.subplots(figsize=(6.4, 4.0))\n");
    s.push_str("ax.plot(t, v)\n");
    if fig.x_scale == Scale::Log {
        s.push_str("ax.set_xscale(\"log\")\n");
    }
    if fig.y_scale == Scale::Log {
        s.push_str("ax.set_yscale(\"log\")\n");
    }
    if let Some(fit) = fig.fit {
        let _ = writeln!(s, "a, b = {:?}, {:?}", fit.window.0, fit.window.1);
        let _ = writeln!(s, "slope, intercept = {:?}, {:?}", fit.exponent, fit.intercept);
        s.push_str("xs = [a, b]\nax.plot(xs, [math.exp(intercept) * x ** slope for x in xs], \"--\")\n");
        let _ = writeln!(s, "ax.set_title({:?})", format!("{} ({})", fig.title, slope_label(fit)));
    } else {
        let _ = writeln!(s, "ax.set_title({:?})", fig.title);
    }
    let _ = writeln!(s, "ax.set_xlabel({:?})\nax.set_ylabel({:?})", fig.x_label, fig.y_label);
    let stem = csv_name.trim_end_matches(".csv");
    let _ = writeln!(s, "fig.savefig(os.path.join(here, \"{stem}.pdf\"))");
    s
}

fn read_series(path: &Path) -> Result<Vec<(f64, f64)>> {
    let (header, rows) = io::read_csv(path)?;
    if header.len() < 2 {
        return Err(Error::State(format!("{} has fewer than two columns", path.display())));
    }
    Ok(rows.into_iter().map(|r| (r[0], r[1])).collect())
}

fn read_fits(dir: &Path) -> Vec<(String, DecayFit)> {
    #[derive(serde::Deserialize)]
    struct Fits {
        #[serde(default)]
        fits: std::collections::BTreeMap<String, DecayFit>,
    }
    io::read_json::<Fits>(&dir.join("summary.json"))
        .map(|f| f.fits.into_iter().collect())
        .unwrap_or_default()
}

/// Writes `plots/<series>.svg` and `plots/<series>.py` for every
/// `series/*.csv` in `dir`, plus `plots/<series>_loglog.*` for each fitted
/// decay in `summary.json`. Series that are missing or unusable are skipped
/// with a note; with no series at all nothing is written.
pub fn emit_plots(dir: &Path) -> Result<PlotReport> {
    let mut report = PlotReport::default();
    let series_dir = dir.join("series");
    let mut names: Vec<PathBuf> = match fs::read_dir(&series_dir) {
        Ok(entries) => entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "csv"))
            .collect(),
        Err(_) => Vec::new(),
    };
    names.sort();
    if names.is_empty() {
        report.notes.push(format!("no diagnostics series under {}; nothing plotted", series_dir.display()));
        return Ok(report);
    }
    let fits = read_fits(dir);
    let out = dir.join("plots");
    fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    for path in names {
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("series").to_string();
        let csv_name = format!("{stem}.csv");
        let points = match read_series(&path) {
            Ok(p) => p,
            Err(e) => {
                report.notes.push(format!("skipped {stem}: {e}"));
                continue;
            }
        };
        if points.iter().filter(|p| p.0.is_finite() && p.1.is_finite()).count() < 2 {
            report.notes.push(format!("skipped {stem}: fewer than two samples"));
            continue;
        }
        let fig = Figure {
            title: &stem,
            x_label: "t",
            y_label: &stem,
            x_scale: Scale::Linear,
            y_scale: Scale::Linear,
            points: points.clone(),
            fit: None,
        };
        write_figure(&out, &stem, &csv_name, &fig, &mut report)?;

        for (name, fit) in fits.iter().filter(|(n, _)| series_for_fit(n) == stem) {
            let pts: Vec<(f64, f64)> = points.iter().copied().filter(|p| p.0 > 0.0 && p.1 > 0.0).collect();
            if pts.len() < 2 {
                report.notes.push(format!("skipped log-log plot of {name}: no positive samples"));
                continue;
            }
            let title = format!("{stem} (log-log)");
            let fig = Figure {
                title: &title,
                x_label: "t",
                y_label: &stem,
                x_scale: Scale::Log,
                y_scale: Scale::Log,
                points: pts,
                fit: Some(fit),
            };
            write_figure(&out, &format!("{stem}_loglog"), &csv_name, &fig, &mut report)?;
        }
    }
    Ok(report)
}

fn series_for_fit(fit_name: &str) -> &str {
    match fit_name {
        "interior_decay" => "interior_energy",
        other => other,
    }
}

fn write_figure(out: &Path, stem: &str, csv_name: &str, fig: &Figure, report: &mut PlotReport) -> Result<()> {
    let svg = out.join(format!("{stem}.svg"));
    io::write_atomic(&svg, render(fig).as_bytes())?;
    let py = out.join(format!("{stem}.py"));
    io::write_atomic(&py, script(csv_name, fig).as_bytes())?;
    report.files.push(svg);
    report.files.push(py);
    Ok(())
}
