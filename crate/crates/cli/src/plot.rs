//! Minimal SVG line charts rendered from the trace CSV.
//!
//! Everything here reads only the CSV text, so plots can be regenerated
//! from a saved trace and come out byte-identical.

use std::fmt::Write;

/// Points kept per series; longer traces are strided.
const MAX_POINTS: usize = 2000;
const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 420.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 130.0;
const MARGIN_Y: f64 = 40.0;
const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf",
];
/// Agents listed individually in a legend before it is summarised.
const LEGEND_ROWS: usize = 12;

#[derive(Debug, thiserror::Error)]
pub enum PlotError {
    #[error("trace CSV is empty")]
    Empty,
    #[error("trace CSV has no `{0}` column")]
    MissingColumn(String),
    #[error("trace CSV line {line}: {message}")]
    Malformed { line: usize, message: String },
}

/// One output file: name and the columns it draws.
struct Figure {
    file: &'static str,
    title: &'static str,
    prefix: &'static str,
    steps: bool,
}

const FIGURES: [Figure; 5] = [
    Figure {
        file: "x.svg",
        title: "Allocations x_i",
        prefix: "x",
        steps: false,
    },
    Figure {
        file: "lambda.svg",
        title: "Dual estimates lambda_i",
        prefix: "lambda",
        steps: false,
    },
    Figure {
        file: "e.svg",
        title: "KKT residuals e_i",
        prefix: "e",
        steps: false,
    },
    Figure {
        file: "imbalance.svg",
        title: "Balance residual sum A_i x_i - b_i",
        prefix: "imbalance",
        steps: false,
    },
    Figure {
        file: "sigma.svg",
        title: "Switching signals sigma_i",
        prefix: "sigma",
        steps: true,
    },
];

struct Table {
    header: Vec<String>,
    rows: Vec<Vec<f64>>,
}

impl Table {
    fn parse(csv: &str) -> Result<Self, PlotError> {
        let mut lines = csv.lines();
        let header: Vec<String> = lines
            .next()
            .ok_or(PlotError::Empty)?
            .split(',')
            .map(str::to_owned)
            .collect();
        let rows = lines
            .enumerate()
            .filter(|(_, l)| !l.is_empty())
            .map(|(k, l)| {
                let row: Vec<f64> = l
                    .split(',')
                    .map(|cell| {
                        if cell.is_empty() {
                            Ok(f64::NAN)
                        } else {
                            cell.parse().map_err(|_| PlotError::Malformed {
                                line: k + 2,
                                message: format!("`{cell}` is not a number"),
                            })
                        }
                    })
                    .collect::<Result<_, _>>()?;
                if row.len() != header.len() {
                    return Err(PlotError::Malformed {
                        line: k + 2,
                        message: format!("{} fields, header has {}", row.len(), header.len()),
                    });
                }
                Ok(row)
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { header, rows })
    }

    fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[k]).collect())
    }

    /// `prefix` itself, or `prefix_0, prefix_1, ...` in index order.
    fn series(&self, prefix: &str) -> Vec<(String, Vec<f64>)> {
        if let Some(c) = self.column(prefix) {
            return vec![(prefix.to_owned(), c)];
        }
        (0..)
            .map_while(|i| {
                let name = format!("{prefix}_{i}");
                self.column(&name).map(|c| (name, c))
            })
            .collect()
    }
}

/// Renders every figure; returns `(file name, svg text)` pairs.
pub fn render_all(csv: &str) -> Result<Vec<(&'static str, String)>, PlotError> {
    let table = Table::parse(csv)?;
    let t = table
        .column("t")
        .ok_or_else(|| PlotError::MissingColumn("t".into()))?;
    FIGURES
        .iter()
        .map(|fig| {
            let series = table.series(fig.prefix);
            if series.is_empty() {
                return Err(PlotError::MissingColumn(fig.prefix.into()));
            }
            Ok((fig.file, render(fig, &t, &series)))
        })
        .collect()
}

fn stride_indices(len: usize) -> Vec<usize> {
    let stride = len.div_ceil(MAX_POINTS).max(1);
    let mut idx: Vec<usize> = (0..len).step_by(stride).collect();
    if len > 0 && idx.last() != Some(&(len - 1)) {
        idx.push(len - 1);
    }
    idx
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(v), hi.max(v))
        });
    if !lo.is_finite() {
        return (-1.0, 1.0);
    }
    if hi - lo < 1e-12 {
        let pad = lo.abs().max(1.0) * 0.5;
        return (lo - pad, hi + pad);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

fn tick_label(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1e4 || v.abs() < 1e-2 {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

fn render(fig: &Figure, t: &[f64], series: &[(String, Vec<f64>)]) -> String {
    let idx = stride_indices(t.len());
    let (t0, t1) = match (t.first(), t.last()) {
        (Some(&a), Some(&b)) if b > a => (a, b),
        (Some(&a), _) => (a, a + 1.0),
        _ => (0.0, 1.0),
    };
    let (y0, y1) = if fig.steps {
        (-1.25, 1.25)
    } else {
        range(
            series
                .iter()
                .flat_map(|(_, v)| idx.iter().map(move |&k| v[k])),
        )
    };
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - 2.0 * MARGIN_Y;
    let sx = |v: f64| MARGIN_LEFT + (v - t0) / (t1 - t0) * plot_w;
    let sy = |v: f64| MARGIN_Y + (y1 - v) / (y1 - y0) * plot_h;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(
        svg,
        r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    );
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="22" font-size="14" text-anchor="middle">{}</text>"#,
        MARGIN_LEFT + plot_w / 2.0,
        fig.title
    );
    // axes and ticks
    let (left, right, top, bottom) = (
        MARGIN_LEFT,
        MARGIN_LEFT + plot_w,
        MARGIN_Y,
        MARGIN_Y + plot_h,
    );
    let _ = writeln!(
        svg,
        r##"<path d="M{left} {top} L{left} {bottom} L{right} {bottom}" fill="none" stroke="#333"/>"##
    );
    for k in 0..=4 {
        let f = k as f64 / 4.0;
        let (tv, yv) = (t0 + f * (t1 - t0), y0 + f * (y1 - y0));
        let (x, y) = (sx(tv), sy(yv));
        let _ = writeln!(
            svg,
            r##"<line x1="{x:.2}" y1="{bottom}" x2="{x:.2}" y2="{:.2}" stroke="#333"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"##,
            bottom + 4.0,
            bottom + 16.0,
            tick_label(tv)
        );
        let _ = writeln!(
            svg,
            r##"<line x1="{:.2}" y1="{y:.2}" x2="{left}" y2="{y:.2}" stroke="#333"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"##,
            left - 4.0,
            left - 6.0,
            y + 4.0,
            tick_label(yv)
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">t [s]</text>"#,
        MARGIN_LEFT + plot_w / 2.0,
        HEIGHT - 6.0
    );

    for (s, (name, values)) in series.iter().enumerate() {
        let colour = PALETTE[s % PALETTE.len()];
        let mut points = String::new();
        let mut prev: Option<f64> = None;
        for &k in &idx {
            let v = values[k];
            if !v.is_finite() {
                continue;
            }
            if fig.steps {
                if let Some(p) = prev {
                    let _ = write!(points, "{:.2},{:.2} ", sx(t[k]), sy(p));
                }
                prev = Some(v);
            }
            let _ = write!(points, "{:.2},{:.2} ", sx(t[k]), sy(v));
        }
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{colour}" stroke-width="1" points="{}"/>"#,
            points.trim_end()
        );
        if s < LEGEND_ROWS {
            let y = MARGIN_Y + 14.0 * s as f64;
            let x = right + 12.0;
            let _ = writeln!(
                svg,
                r#"<line x1="{x}" y1="{y}" x2="{}" y2="{y}" stroke="{colour}" stroke-width="2"/><text x="{}" y="{}">{name}</text>"#,
                x + 16.0,
                x + 20.0,
                y + 4.0
            );
        }
    }
    if series.len() > LEGEND_ROWS {
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}">+{} more</text>"#,
            right + 12.0,
            MARGIN_Y + 14.0 * LEGEND_ROWS as f64 + 4.0,
            series.len() - LEGEND_ROWS
        );
    }
    svg.push_str("</svg>\n");
    svg
}
