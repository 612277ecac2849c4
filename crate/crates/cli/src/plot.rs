//! Standalone SVG line charts and trajectory overlays.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use obsplan::{Geometry, GeometryKind, Trajectory};

use crate::error::CliError;
use crate::manifest::{write_atomic, RunManifest};

const W: f64 = 720.0;
const H: f64 = 440.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const COLORS: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

/// A parsed CSV: header names and string rows.
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
    source: String,
}

impl Table {
    pub fn parse(text: &str, source: &str) -> Result<Self, CliError> {
        let schema = |e: csv::Error| CliError::Schema(format!("{source}: {e}"));
        let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(text.as_bytes());
        let header = reader.headers().map_err(schema)?.iter().map(str::to_string).collect();
        let mut rows = Vec::new();
        for rec in reader.records() {
            rows.push(rec.map_err(schema)?.iter().map(str::to_string).collect());
        }
        Ok(Self {
            header,
            rows,
            source: source.to_string(),
        })
    }

    pub fn column(&self, name: &str) -> Result<usize, CliError> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::Schema(format!("{}: missing column '{name}'", self.source)))
    }

    fn number(&self, row: &[String], col: usize) -> Option<f64> {
        row.get(col).and_then(|s| s.parse::<f64>().ok())
    }
}

pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

pub struct Chart<'a> {
    pub title: &'a str,
    pub x_label: &'a str,
    pub y_label: &'a str,
    pub log_x: bool,
    pub log_y: bool,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn nice_ticks(lo: f64, hi: f64, log: bool) -> Vec<f64> {
    if log {
        let (a, b) = (lo.floor() as i32, hi.ceil() as i32);
        return (a..=b).map(f64::from).filter(|t| *t >= lo - 1e-9 && *t <= hi + 1e-9).collect();
    }
    let span = (hi - lo).max(1e-300);
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|s| *s >= raw).unwrap_or(10.0 * mag);
    let mut t = (lo / step).ceil() * step;
    let mut out = Vec::new();
    while t <= hi + 1e-9 * span {
        out.push(t);
        t += step;
    }
    out
}

fn tick_label(v: f64, log: bool) -> String {
    if log {
        format!("1e{}", v.round() as i32)
    } else if v != 0.0 && (v.abs() < 1e-2 || v.abs() >= 1e4) {
        format!("{v:.1e}")
    } else {
        format!("{}", (v * 1e6).round() / 1e6)
    }
}

/// Renders series as an SVG line chart. Non-positive values are dropped on log axes.
pub fn line_chart(chart: &Chart<'_>, series: &[Series]) -> String {
    let tx = |v: f64| if chart.log_x { v.log10() } else { v };
    let ty = |v: f64| if chart.log_y { v.log10() } else { v };
    let keep = |&(x, y): &(f64, f64)| {
        x.is_finite() && y.is_finite() && (!chart.log_x || x > 0.0) && (!chart.log_y || y > 0.0)
    };
    let mapped: Vec<Vec<(f64, f64)>> = series
        .iter()
        .map(|s| s.points.iter().filter(|p| keep(p)).map(|&(x, y)| (tx(x), ty(y))).collect())
        .collect();
    let all = mapped.iter().flatten();
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 - x0 < 1e-12 {
        x0 -= 0.5;
        x1 += 0.5;
    }
    if y1 - y0 < 1e-12 * y1.abs().max(1.0) {
        let pad = 0.5 * y1.abs().max(1.0);
        y0 -= pad;
        y1 += pad;
    }
    let pw = W - LEFT - RIGHT;
    let ph = H - TOP - BOTTOM;
    let px = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let py = |y: f64| TOP + ph - (y - y0) / (y1 - y0) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#, LEFT + pw / 2.0, escape(chart.title));
    for t in nice_ticks(x0, x1, chart.log_x) {
        let x = px(t);
        let _ = writeln!(s, r##"<line x1="{x:.2}" y1="{TOP}" x2="{x:.2}" y2="{:.2}" stroke="#e5e5e5"/>"##, TOP + ph);
        let _ = writeln!(s, r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, TOP + ph + 18.0, tick_label(t, chart.log_x));
    }
    for t in nice_ticks(y0, y1, chart.log_y) {
        let y = py(t);
        let _ = writeln!(s, r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#e5e5e5"/>"##, LEFT + pw);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#, LEFT - 6.0, y + 4.0, tick_label(t, chart.log_y));
    }
    let _ = writeln!(s, r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, LEFT + pw / 2.0, H - 15.0, escape(chart.x_label));
    let _ = writeln!(
        s,
        r#"<text x="18" y="{0}" text-anchor="middle" transform="rotate(-90 18 {0})">{1}</text>"#,
        TOP + ph / 2.0,
        escape(chart.y_label)
    );
    for (i, (ser, pts)) in series.iter().zip(&mapped).enumerate() {
        let color = COLORS[i % COLORS.len()];
        if pts.len() > 1 {
            let path: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
            let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, path.join(" "));
        }
        if pts.len() <= 40 {
            for &(x, y) in pts {
                let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#, px(x), py(y));
            }
        }
        let ly = TOP + 10.0 + 18.0 * i as f64;
        let lx = LEFT + pw + 12.0;
        let _ = writeln!(s, r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#, lx + 20.0);
        let _ = writeln!(s, r#"<text x="{}" y="{}">{}</text>"#, lx + 26.0, ly + 4.0, escape(&ser.label));
    }
    s.push_str("</svg>\n");
    s
}

/// Error and covariance trace against time for one `kf.csv`.
pub fn kf_plot(text: &str, source: &str) -> Result<String, CliError> {
    let t = Table::parse(text, source)?;
    let (ct, ctr, cerr) = (t.column("time")?, t.column("trace_sigma")?, t.column("recon_mse")?);
    let mut trace = Vec::new();
    let mut err = Vec::new();
    for r in &t.rows {
        let Some(x) = t.number(r, ct) else { continue };
        if let Some(y) = t.number(r, ctr) {
            trace.push((x, y));
        }
        if let Some(y) = t.number(r, cerr) {
            err.push((x, y));
        }
    }
    let mut series = vec![Series { label: "trace(Sigma)".into(), points: trace }];
    if !err.is_empty() {
        series.push(Series { label: "reconstruction MSE".into(), points: err });
    }
    Ok(line_chart(
        &Chart {
            title: "Estimation error",
            x_label: "time",
            y_label: "value",
            log_x: false,
            log_y: true,
        },
        &series,
    ))
}

/// Steady error against sampling interval on log-x axes, one series per combination
/// of the other sweep axes.
pub fn sampling_plot(summary: &str, source: &str) -> Result<String, CliError> {
    let t = Table::parse(summary, source)?;
    let cdt = t.column("sampling_dt")?;
    let cstatus = t.column("status")?;
    let cy = t.column("steady_mse")?;
    let ctrace = t.column("limiting_trace")?;
    let cseed = t.column("seed")?;
    let others: Vec<usize> = (1..cseed).filter(|&c| c != cdt).collect();
    let mut groups: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    let mut use_trace = false;
    for r in &t.rows {
        if r.get(cstatus).map(String::as_str) != Some("ok") {
            continue;
        }
        let Some(x) = t.number(r, cdt) else { continue };
        let y = match t.number(r, cy) {
            Some(y) => y,
            None => {
                use_trace = true;
                match t.number(r, ctrace) {
                    Some(y) => y,
                    None => continue,
                }
            }
        };
        let label: Vec<String> = others.iter().map(|&c| format!("{}={}", t.header[c], r[c])).collect();
        let label = if label.is_empty() { "steady error".to_string() } else { label.join(", ") };
        groups.entry(label).or_default().push((x, y));
    }
    let series: Vec<Series> = groups
        .into_iter()
        .map(|(label, mut points)| {
            points.sort_by(|a, b| a.0.total_cmp(&b.0));
            Series { label, points }
        })
        .collect();
    Ok(line_chart(
        &Chart {
            title: "Estimation error against sampling interval",
            x_label: "sampling interval",
            y_label: if use_trace { "limiting trace" } else { "steady MSE" },
            log_x: true,
            log_y: true,
        },
        &series,
    ))
}

/// Sensor paths drawn over the grid or mask, with an arrow per step.
pub fn trajectory_plot(traj: &Trajectory, geom: &Geometry) -> String {
    let n = geom.n();
    let pts: Vec<[f64; 2]> = (0..n).map(|i| geom.coords(i)).collect();
    // coords are [row, col] for grids and masks, [x, 0] for lines.
    let (mut r1, mut c1) = (0.0f64, 0.0f64);
    for p in &pts {
        r1 = r1.max(p[0]);
        c1 = c1.max(p[1]);
    }
    let is_line = matches!(geom.kind(), GeometryKind::Line { .. });
    let (rows, cols) = if is_line { (1.0, r1 + 1.0) } else { (r1 + 1.0, c1 + 1.0) };
    let cell = (640.0 / cols).min(640.0 / rows).clamp(2.0, 40.0);
    let (w, h) = (cols * cell + 40.0, rows * cell + 40.0);
    let pos = |i: usize| {
        let p = pts[i];
        if is_line {
            (20.0 + (p[0] + 0.5) * cell, 20.0 + 0.5 * cell)
        } else {
            (20.0 + (p[1] + 0.5) * cell, 20.0 + (p[0] + 0.5) * cell)
        }
    };
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0}" height="{h:.0}" viewBox="0 0 {w:.1} {h:.1}">"#);
    let _ = writeln!(s, r##"<rect width="{w:.1}" height="{h:.1}" fill="#8c7a5b"/>"##);
    let _ = writeln!(s, "<defs>");
    for (j, color) in COLORS.iter().enumerate() {
        let _ = writeln!(
            s,
            r#"<marker id="a{j}" viewBox="0 0 10 10" refX="9" refY="5" markerWidth="6" markerHeight="6" orient="auto"><path d="M0,0 L10,5 L0,10 z" fill="{color}"/></marker>"#
        );
    }
    let _ = writeln!(s, "</defs>");
    for i in 0..n {
        let (x, y) = pos(i);
        let _ = writeln!(
            s,
            r##"<rect x="{:.2}" y="{:.2}" width="{cell:.2}" height="{cell:.2}" fill="#dfeaf5" stroke="#c5d5e5" stroke-width="0.3"/>"##,
            x - cell / 2.0,
            y - cell / 2.0
        );
    }
    let l = traj.period();
    for j in 0..traj.sensors() {
        let color = COLORS[j % COLORS.len()];
        let path = traj.sensor_path(j);
        for t in 0..l {
            let (a, b) = (path[t], path[(t + 1) % l]);
            if a == b {
                continue;
            }
            let ((x0, y0), (x1, y1)) = (pos(a), pos(b));
            // Wrapped moves would cross the whole picture; draw them short.
            let long = (x1 - x0).abs() > w / 2.0 || (y1 - y0).abs() > h / 2.0;
            let (x1, y1) = if long { (x0 + (x1 - x0).signum() * cell, y0) } else { (x1, y1) };
            let _ = writeln!(
                s,
                r#"<line x1="{x0:.2}" y1="{y0:.2}" x2="{x1:.2}" y2="{y1:.2}" stroke="{color}" stroke-width="1.5" marker-end="url(#a{})"/>"#,
                j % COLORS.len()
            );
        }
        let (x, y) = pos(path[0]);
        let _ = writeln!(s, r#"<circle cx="{x:.2}" cy="{y:.2}" r="{:.2}" fill="{color}"/>"#, (cell * 0.35).max(2.0));
    }
    s.push_str("</svg>\n");
    s
}

/// Renders every plot the manifest's files allow into `<dir>/plots`.
pub fn emit_plots(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let manifest = RunManifest::load(&dir.join(crate::manifest::MANIFEST_NAME))?;
    let out_dir = dir.join("plots");
    let mut written = Vec::new();
    let mut emit = |name: String, svg: String| -> Result<(), CliError> {
        let path = out_dir.join(name);
        write_atomic(&path, svg.as_bytes())?;
        written.push(path);
        Ok(())
    };
    let read = |rel: &str| -> Result<String, CliError> {
        std::fs::read_to_string(dir.join(rel))
            .map_err(|e| CliError::Schema(format!("{rel} listed in the manifest but unreadable: {e}")))
    };
    let files: Vec<&str> = manifest.files.iter().map(|f| f.path.as_str()).collect();
    for rel in &files {
        let stem = rel.rsplit_once('/').map(|(d, _)| d.replace('/', "_")).unwrap_or_default();
        let prefix = if stem.is_empty() { String::new() } else { format!("{stem}_") };
        if rel.ends_with("kf.csv") {
            emit(format!("{prefix}error_vs_time.svg"), kf_plot(&read(rel)?, rel)?)?;
        } else if rel.ends_with("trajectory.json") {
            let geom_rel = rel.replace("trajectory.json", "geometry.json");
            if !files.contains(&geom_rel.as_str()) {
                return Err(CliError::Schema(format!("{rel} has no geometry.json beside it")));
            }
            let traj = Trajectory::from_json(&read(rel)?)?;
            let geom: Geometry = serde_json::from_str(&read(&geom_rel)?)
                .map_err(|e| CliError::Schema(format!("{geom_rel}: {e}")))?;
            emit(format!("{prefix}trajectory.svg"), trajectory_plot(&traj, &geom))?;
        } else if *rel == "sweep_summary.csv" {
            let text = read(rel)?;
            if Table::parse(&text, rel)?.header.iter().any(|h| h == "sampling_dt") {
                emit("error_vs_sampling.svg".into(), sampling_plot(&text, rel)?)?;
            }
        }
    }
    Ok(written)
}
