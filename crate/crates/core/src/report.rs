//! BER-vs-SNR charts as standalone SVG files and a plain-text summary table.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{invalid, Result};
use crate::experiments::{BerPoint, Detector};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 460.0;
const LEFT: f64 = 72.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 56.0;

fn color(d: Detector) -> &'static str {
    match d {
        Detector::Ls => "#1f77b4",
        Detector::Mmse => "#2ca02c",
        Detector::Dnn => "#d62728",
        Detector::PerfectCsi => "#7f7f7f",
    }
}

/// Lowest value shown on the BER axis.
pub fn y_floor(points: &[BerPoint]) -> f64 {
    let smallest = points.iter().map(BerPoint::ber).filter(|&b| b > 0.0).fold(f64::INFINITY, f64::min);
    (smallest / 2.0).min(1e-5)
}

/// Where a point is drawn: its BER, or `1 / (2 n_bits)` when no errors were
/// seen, never below the axis floor.
pub fn plotted_ber(p: &BerPoint, floor: f64) -> f64 {
    if p.n_errors == 0 {
        (0.5 / p.n_bits.max(1) as f64).max(floor)
    } else {
        p.ber()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Chart {
    pub scenario_id: String,
    pub y_floor: f64,
    pub curves: Vec<Detector>,
    pub svg: String,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Renders one scenario. All points must share the scenario id.
pub fn render_chart(points: &[BerPoint]) -> Result<Chart> {
    let Some(first) = points.first() else {
        return invalid("cannot chart an empty set of points");
    };
    if points.iter().any(|p| p.scenario_id != first.scenario_id) {
        return invalid("a chart holds a single scenario");
    }
    let mut by_detector: BTreeMap<Detector, Vec<&BerPoint>> = BTreeMap::new();
    for p in points {
        by_detector.entry(p.detector).or_default().push(p);
    }
    for curve in by_detector.values_mut() {
        curve.sort_by(|a, b| a.snr_db.total_cmp(&b.snr_db));
    }
    let floor = y_floor(points);
    let (lo_dec, hi_dec) = (floor.log10().floor(), 0.0_f64);
    let finite: Vec<f64> = points.iter().map(|p| p.snr_db).filter(|s| s.is_finite()).collect();
    if finite.is_empty() {
        return invalid("no finite SNR values to place on the axis");
    }
    let x_min = finite.iter().copied().fold(f64::INFINITY, f64::min);
    let mut x_max = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if x_max == x_min {
        x_max = x_min + 1.0;
    }
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let sx = |snr: f64| LEFT + (snr - x_min) / (x_max - x_min) * plot_w;
    let sy = |ber: f64| TOP + (hi_dec - ber.log10()) / (hi_dec - lo_dec) * plot_h;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="14">BER vs SNR: {}</text>"#,
        LEFT + plot_w / 2.0,
        escape(&first.scenario_id)
    );
    let mut dec = lo_dec;
    while dec <= hi_dec {
        let y = sy(10f64.powf(dec));
        let _ = writeln!(
            svg,
            r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#ddd"/><text x="{:.2}" y="{:.2}" text-anchor="end">1e{dec}</text>"##,
            LEFT + plot_w,
            LEFT - 6.0,
            y + 4.0
        );
        dec += 1.0;
    }
    let mut ticks: Vec<f64> = finite.clone();
    ticks.sort_by(f64::total_cmp);
    ticks.dedup();
    for t in ticks {
        let x = sx(t);
        let _ = writeln!(
            svg,
            r##"<line x1="{x:.2}" y1="{TOP}" x2="{x:.2}" y2="{:.2}" stroke="#eee"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">{t}</text>"##,
            TOP + plot_h,
            TOP + plot_h + 18.0
        );
    }
    let _ =
        writeln!(svg, r#"<rect x="{LEFT}" y="{TOP}" width="{plot_w}" height="{plot_h}" fill="none" stroke="black"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">SNR (dB)</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 14.0
    );
    let _ = writeln!(
        svg,
        r#"<text transform="translate(18 {:.2}) rotate(-90)" text-anchor="middle">BER</text>"#,
        TOP + plot_h / 2.0
    );

    for (i, (det, curve)) in by_detector.iter().enumerate() {
        let c = color(*det);
        let drawn: Vec<(f64, f64, bool)> = curve
            .iter()
            .filter(|p| p.snr_db.is_finite())
            .map(|p| (sx(p.snr_db), sy(plotted_ber(p, floor)), p.n_errors == 0))
            .collect();
        let path: Vec<String> = drawn.iter().map(|(x, y, _)| format!("{x:.2},{y:.2}")).collect();
        let _ = writeln!(svg, r#"<polyline fill="none" stroke="{c}" stroke-width="1.6" points="{}"/>"#, path.join(" "));
        for (x, y, zero) in drawn {
            let fill = if zero { "white" } else { c };
            let _ = writeln!(svg, r#"<circle cx="{x:.2}" cy="{y:.2}" r="3.5" fill="{fill}" stroke="{c}"/>"#);
        }
        let ly = TOP + 14.0 + 18.0 * i as f64;
        let lx = LEFT + plot_w + 14.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{lx}" y1="{ly}" x2="{:.2}" y2="{ly}" stroke="{c}" stroke-width="1.6"/><text x="{:.2}" y="{:.2}">{det}</text>"#,
            lx + 22.0,
            lx + 28.0,
            ly + 4.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" font-size="10">hollow: no errors,</text><text x="{:.2}" y="{:.2}" font-size="10">drawn at 1/(2 bits)</text>"#,
        LEFT + plot_w + 14.0,
        TOP + plot_h - 16.0,
        LEFT + plot_w + 14.0,
        TOP + plot_h - 3.0
    );
    svg.push_str("</svg>\n");
    Ok(Chart {
        scenario_id: first.scenario_id.clone(),
        y_floor: floor,
        curves: by_detector.keys().copied().collect(),
        svg,
    })
}

/// Rows of scenario and detector, columns of SNR.
pub fn summary_table(points: &[BerPoint]) -> String {
    let mut snrs: Vec<f64> = points.iter().map(|p| p.snr_db).collect();
    snrs.sort_by(f64::total_cmp);
    snrs.dedup();
    let mut rows: BTreeMap<(&str, Detector), BTreeMap<u64, &BerPoint>> = BTreeMap::new();
    for p in points {
        rows.entry((&p.scenario_id, p.detector)).or_default().insert(p.snr_db.to_bits(), p);
    }
    let id_w = points.iter().map(|p| p.scenario_id.len()).max().unwrap_or(0).max(8);
    let mut out = format!("{:<id_w$}  {:<11}", "scenario", "detector");
    for s in &snrs {
        let _ = write!(out, " {:>10}", format!("{s} dB"));
    }
    out.push('\n');
    for ((id, det), cells) in rows {
        let _ = write!(out, "{id:<id_w$}  {:<11}", det.name());
        for s in &snrs {
            let cell = match cells.get(&s.to_bits()) {
                Some(p) if p.n_errors == 0 => format!("<{:.1e}", 1.0 / p.n_bits as f64),
                Some(p) => format!("{:.3e}", p.ber()),
                None => "-".into(),
            };
            let _ = write!(out, " {cell:>10}");
        }
        out.push('\n');
    }
    out
}

/// Writes `<scenario>.svg` for each scenario and `summary.txt` into `out_dir`.
pub fn emit_report(points: &[BerPoint], detectors: Option<&[Detector]>, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let selected: Vec<BerPoint> =
        points.iter().filter(|p| detectors.is_none_or(|ds| ds.contains(&p.detector))).cloned().collect();
    if selected.is_empty() {
        return invalid("no points to report for the selected detectors");
    }
    fs::create_dir_all(out_dir)?;
    let mut by_scenario: BTreeMap<&str, Vec<BerPoint>> = BTreeMap::new();
    for p in &selected {
        by_scenario.entry(&p.scenario_id).or_default().push(p.clone());
    }
    let mut written = Vec::new();
    for (id, pts) in by_scenario {
        let chart = render_chart(&pts)?;
        let path = out_dir.join(format!("{id}.svg"));
        fs::write(&path, chart.svg)?;
        written.push(path);
    }
    let summary = out_dir.join("summary.txt");
    fs::write(&summary, summary_table(&selected))?;
    written.push(summary);
    Ok(written)
}
