//! Static HTML/SVG summary of training runs and score reports.

use std::fmt::Write as _;
use std::path::Path;

use dan_core::eval::ScoreReport;
use dan_core::train::EpochMetrics;

const WIDTH: f64 = 560.0;
const HEIGHT: f64 = 280.0;
const MARGIN: f64 = 48.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

pub fn read_metrics(path: &Path) -> dan_core::Result<Vec<EpochMetrics>> {
    let text = std::fs::read_to_string(path).map_err(|source| dan_core::Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        out.push(serde_json::from_str(line).map_err(|e| dan_core::Error::Parse {
            path: path.display().to_string(),
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

struct Series {
    label: String,
    points: Vec<(f64, f64)>,
}

fn finite_range(values: impl Iterator<Item = f64>) -> Option<(f64, f64)> {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if lo > hi {
        return None;
    }
    Some(if hi - lo < 1e-12 { (lo - 0.5, hi + 0.5) } else { (lo, hi) })
}

fn line_chart(title: &str, y_label: &str, series: &[Series]) -> String {
    let mut svg = String::new();
    write!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" role="img" aria-label="{t}"><title>{t}</title>"#,
        t = escape(title)
    )
    .unwrap();
    let xs = finite_range(series.iter().flat_map(|s| s.points.iter().map(|p| p.0)));
    let ys = finite_range(series.iter().flat_map(|s| s.points.iter().map(|p| p.1)));
    let (Some((x0, x1)), Some((y0, y1))) = (xs, ys) else {
        svg.push_str(r#"<text x="20" y="40">no data</text></svg>"#);
        return svg;
    };
    let px = |x: f64| MARGIN + (x - x0) / (x1 - x0).max(1e-12) * (WIDTH - 2.0 * MARGIN);
    let py = |y: f64| HEIGHT - MARGIN - (y - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);
    write!(
        svg,
        r##"<rect x="{m}" y="{m}" width="{w}" height="{h}" fill="none" stroke="#999"/>"##,
        m = MARGIN,
        w = WIDTH - 2.0 * MARGIN,
        h = HEIGHT - 2.0 * MARGIN
    )
    .unwrap();
    for (v, anchor_y) in [(y0, py(y0)), (y1, py(y1))] {
        write!(svg, r#"<text x="{}" y="{}" font-size="11" text-anchor="end">{v:.3}</text>"#, MARGIN - 4.0, anchor_y + 4.0).unwrap();
    }
    for (v, anchor_x) in [(x0, px(x0)), (x1, px(x1))] {
        write!(svg, r#"<text x="{anchor_x}" y="{}" font-size="11" text-anchor="middle">{v}</text>"#, HEIGHT - MARGIN + 16.0).unwrap();
    }
    write!(svg, r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">epoch</text>"#, WIDTH / 2.0, HEIGHT - 8.0).unwrap();
    write!(svg, r#"<text x="12" y="{}" font-size="12" transform="rotate(-90 12 {})" text-anchor="middle">{}</text>"#, HEIGHT / 2.0, HEIGHT / 2.0, escape(y_label)).unwrap();
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = s
            .points
            .iter()
            .filter(|p| p.1.is_finite())
            .map(|&(x, y)| format!("{:.1},{:.1}", px(x), py(y)))
            .collect();
        write!(svg, r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#, pts.join(" ")).unwrap();
        for p in &pts {
            let (x, y) = p.split_once(',').expect("formatted pair");
            write!(svg, r#"<circle cx="{x}" cy="{y}" r="3" fill="{color}"/>"#).unwrap();
        }
        write!(
            svg,
            r#"<text x="{}" y="{}" font-size="11" fill="{color}">{}</text>"#,
            MARGIN + 8.0,
            MARGIN + 14.0 * (i as f64 + 1.0),
            escape(&s.label)
        )
        .unwrap();
    }
    svg.push_str("</svg>");
    svg
}

fn bar_chart(title: &str, bars: &[(String, f64)]) -> String {
    let mut svg = String::new();
    let height = MARGIN + 22.0 * bars.len() as f64 + 16.0;
    write!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" role="img" aria-label="{t}"><title>{t}</title>"#,
        t = escape(title)
    )
    .unwrap();
    let lo = bars.iter().map(|b| b.1).fold(0.0, f64::min);
    let span = 1.0 - lo;
    let left = 110.0;
    let usable = WIDTH - left - 60.0;
    let zero = left + (0.0 - lo) / span * usable;
    for (i, (name, value)) in bars.iter().enumerate() {
        let y = MARGIN / 2.0 + 22.0 * i as f64;
        let end = left + (value.clamp(lo, 1.0) - lo) / span * usable;
        let (x, w) = if end >= zero { (zero, end - zero) } else { (end, zero - end) };
        write!(
            svg,
            r##"<text x="{}" y="{}" font-size="12" text-anchor="end">{}</text><rect x="{x:.1}" y="{y}" width="{w:.1}" height="16" fill="#1f77b4"/><text x="{:.1}" y="{}" font-size="11">{value:.3}</text>"##,
            left - 6.0,
            y + 12.0,
            escape(name),
            end.max(zero) + 4.0,
            y + 12.0
        )
        .unwrap();
    }
    svg.push_str("</svg>");
    svg
}

fn split_series(runs: &[(String, Vec<EpochMetrics>)], value: impl Fn(&EpochMetrics) -> f64) -> Vec<Series> {
    let mut out = Vec::new();
    for (name, metrics) in runs {
        for split in ["train", "val"] {
            let points: Vec<(f64, f64)> =
                metrics.iter().filter(|m| m.split == split).map(|m| (m.epoch as f64, value(m))).collect();
            if !points.is_empty() {
                let label = if runs.len() > 1 { format!("{name} {split}") } else { split.to_string() };
                out.push(Series { label, points });
            }
        }
    }
    out
}

pub fn render(title: &str, runs: &[(String, Vec<EpochMetrics>)], scores: &[(String, ScoreReport)]) -> String {
    let mut html = String::new();
    write!(
        html,
        "<!DOCTYPE html>\n<html lang=\"en\"><head><meta charset=\"utf-8\"><title>{t}</title>\
         <style>body{{font-family:sans-serif;margin:2em;max-width:62em}}table{{border-collapse:collapse}}\
         td,th{{border:1px solid #ccc;padding:2px 8px;text-align:right}}figure{{margin:1em 0}}</style>\
         </head><body><h1>{t}</h1>\n",
        t = escape(title)
    )
    .unwrap();

    let metric = runs
        .iter()
        .flat_map(|(_, m)| m.first())
        .map(|m| m.metric_name.clone())
        .next()
        .unwrap_or_else(|| "metric".into());
    html.push_str("<h2>Loss</h2><figure>");
    html.push_str(&line_chart("loss per epoch", "loss", &split_series(runs, |m| m.loss)));
    write!(html, "</figure><h2>{}</h2><figure>", escape(&metric)).unwrap();
    html.push_str(&line_chart(&format!("{metric} per epoch"), &metric, &split_series(runs, |m| m.metric_value)));
    html.push_str("</figure>\n");

    for (name, metrics) in runs {
        write!(html, "<h3>{}</h3><table><tr><th>epoch</th><th>split</th><th>loss</th><th>{}</th><th>wall ms</th></tr>", escape(name), escape(&metric)).unwrap();
        for m in metrics {
            write!(
                html,
                "<tr><td>{}</td><td>{}</td><td>{:.5}</td><td>{:.4}</td><td>{}</td></tr>",
                m.epoch,
                escape(&m.split),
                m.loss,
                m.metric_value,
                m.wall_ms
            )
            .unwrap();
        }
        html.push_str("</table>\n");
    }

    for (name, s) in scores {
        write!(
            html,
            "<h2>Scores: {}</h2><p>task {} &middot; mode {:?} &middot; score <b>{:.4}</b> &middot; {} items</p><figure>",
            escape(name),
            s.task,
            s.mode,
            s.score,
            s.item_count
        )
        .unwrap();
        let bars: Vec<(String, f64)> = s.breakdown.iter().map(|(k, v)| (k.clone(), *v)).collect();
        html.push_str(&bar_chart(&format!("{} breakdown", s.task), &bars));
        html.push_str("</figure>\n");
    }
    html.push_str("</body></html>\n");
    html
}
