use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::harness::ResultTable;
use crate::metrics::MetricName;
use crate::perturb::PerturbationKind;
use crate::{Error, Result};

/// Fixed chart geometry and colours. Subgroup `i` (in definition order, `All`
/// first) is drawn with `palette[i % palette.len()]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotSettings {
    pub width: u32,
    pub height: u32,
    pub margin_left: u32,
    pub margin_right: u32,
    pub margin_top: u32,
    pub margin_bottom: u32,
    pub y_min: f64,
    pub y_max: f64,
    pub palette: Vec<String>,
}

impl Default for PlotSettings {
    fn default() -> Self {
        Self {
            width: 640,
            height: 400,
            margin_left: 56,
            margin_right: 150,
            margin_top: 36,
            margin_bottom: 48,
            y_min: 0.0,
            y_max: 1.0,
            palette: [
                "#222222", "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b",
                "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
            ]
            .map(String::from)
            .to_vec(),
        }
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// x-axis: signed level, clean at 0. Bidirectional kinds span -3..=3, blur
/// spans 0..=6.
fn x_domain(kind: PerturbationKind) -> (i32, i32) {
    if kind.is_bidirectional() {
        (-kind.max_level(), kind.max_level())
    } else {
        (0, kind.max_level())
    }
}

/// `(subgroup, palette index, (level, value) points)`
pub type Series = (String, usize, Vec<(i32, Option<f64>)>);

/// Renders one chart. `series` holds `(subgroup, palette index, points)` with
/// `None` for undefined points, which break the line.
pub fn render_chart(
    settings: &PlotSettings,
    title: &str,
    y_label: &str,
    kind: PerturbationKind,
    series: &[Series],
) -> String {
    let s = settings;
    let (x0, x1) = x_domain(kind);
    let plot_w = (s.width - s.margin_left - s.margin_right) as f64;
    let plot_h = (s.height - s.margin_top - s.margin_bottom) as f64;
    let px = |x: i32| s.margin_left as f64 + (x - x0) as f64 / (x1 - x0) as f64 * plot_w;
    let py = |y: f64| {
        let t = ((y - s.y_min) / (s.y_max - s.y_min)).clamp(0.0, 1.0);
        s.margin_top as f64 + (1.0 - t) * plot_h
    };

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#,
        w = s.width,
        h = s.height
    );
    let _ = writeln!(out, r#"<rect width="{}" height="{}" fill="white"/>"#, s.width, s.height);
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
        s.margin_left as f64 + plot_w / 2.0,
        escape(title)
    );

    for i in 0..=10 {
        let y = s.y_min + (s.y_max - s.y_min) * i as f64 / 10.0;
        let _ = writeln!(
            out,
            r##"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#e6e6e6"/>"##,
            px(x0),
            py(y),
            px(x1),
            py(y)
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{:.1}</text>"#,
            px(x0) - 6.0,
            py(y) + 4.0,
            y
        );
    }
    for x in x0..=x1 {
        let stroke = if x == 0 { "#999999" } else { "#e6e6e6" };
        let _ = writeln!(
            out,
            r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{stroke}"/>"#,
            px(x),
            py(s.y_min),
            px(x),
            py(s.y_max)
        );
        let label = if x == 0 { "clean".to_string() } else if kind.is_bidirectional() { format!("{x:+}") } else { x.to_string() };
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{label}</text>"#,
            px(x),
            py(s.y_min) + 18.0
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{} level</text>"#,
        s.margin_left as f64 + plot_w / 2.0,
        s.height as f64 - 8.0,
        kind
    );
    let _ = writeln!(
        out,
        r#"<text x="14" y="{:.2}" text-anchor="middle" transform="rotate(-90 14 {:.2})">{}</text>"#,
        s.margin_top as f64 + plot_h / 2.0,
        s.margin_top as f64 + plot_h / 2.0,
        escape(y_label)
    );

    for (name, index, points) in series {
        let colour = &s.palette[index % s.palette.len()];
        let mut segments: Vec<Vec<(i32, f64)>> = vec![Vec::new()];
        for &(x, y) in points {
            match y {
                Some(y) => segments.last_mut().expect("non-empty").push((x, y)),
                None => segments.push(Vec::new()),
            }
        }
        for seg in segments.iter().filter(|seg| !seg.is_empty()) {
            let pts: Vec<String> = seg
                .iter()
                .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
                .collect();
            let _ = writeln!(
                out,
                r#"<polyline fill="none" stroke="{colour}" stroke-width="2" points="{}"/>"#,
                pts.join(" ")
            );
            for &(x, y) in seg {
                let _ = writeln!(
                    out,
                    r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{colour}"/>"#,
                    px(x),
                    py(y)
                );
            }
        }
        let ly = s.margin_top as f64 + 12.0 + 18.0 * *index as f64;
        let lx = (s.width - s.margin_right) as f64 + 12.0;
        let _ = writeln!(
            out,
            r#"<line x1="{lx:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{colour}" stroke-width="2"/>"#,
            ly - 4.0,
            lx + 18.0,
            ly - 4.0
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{ly:.2}">{}</text>"#,
            lx + 24.0,
            escape(name)
        );
    }
    out.push_str("</svg>\n");
    out
}

fn file_safe(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' })
        .collect()
}

/// Writes one SVG per (class, kind) for `metric` into `dir`, named
/// `<metric>_<class>_<kind>.svg`. Returns the paths in write order.
pub fn emit_plots(rt: &ResultTable, metric: MetricName, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
    let settings = PlotSettings::default();
    let groups: Vec<&str> = rt.meta.subgroups.iter().map(|s| s.name.as_str()).collect();
    let kinds: Vec<PerturbationKind> = PerturbationKind::ALL
        .into_iter()
        .filter(|k| rt.meta.suite.iter().any(|s| s.kind == *k))
        .collect();

    let mut cells: BTreeMap<(&str, &str, Option<PerturbationKind>, i32), Option<f64>> = BTreeMap::new();
    for r in rt.rows.iter().filter(|r| r.metric == metric) {
        cells.insert((&r.class, &r.subgroup, r.kind, r.level), r.value.value());
    }

    let mut paths = Vec::new();
    for class in &rt.meta.classes {
        for &kind in &kinds {
            let (x0, x1) = x_domain(kind);
            let series: Vec<Series> = groups
                .iter()
                .enumerate()
                .map(|(i, g)| {
                    let points = (x0..=x1)
                        .filter_map(|x| {
                            let key = if x == 0 {
                                (class.as_str(), *g, None, 0)
                            } else {
                                (class.as_str(), *g, Some(kind), x)
                            };
                            cells.get(&key).map(|v| (x, *v))
                        })
                        .collect();
                    (g.to_string(), i, points)
                })
                .collect();
            let title = format!("{} / {} / {}", rt.meta.dataset, class, kind);
            let svg = render_chart(&settings, &title, metric.as_str(), kind, &series);
            let path = dir.join(format!(
                "{}_{}_{}.svg",
                metric.as_str(),
                file_safe(class),
                kind
            ));
            std::fs::write(&path, svg)
                .map_err(|e| Error::io(format!("writing {}", path.display()), e))?;
            paths.push(path);
        }
    }
    Ok(paths)
}
