use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{Breakdown, KeyRateResult, RunOutput};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[cfg_attr(feature = "cli", derive(clap::ValueEnum))]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
    Svg,
}

/// Fixed column order of tabular output. Cells that do not apply to a mode
/// are left empty (CSV) or null (JSON).
pub const COLUMNS: [&str; 30] = [
    "axis",
    "key_rate_bits_per_use",
    "plob",
    "abort_reason",
    "mutual_info",
    "s_ab",
    "s_a_given_b",
    "holevo",
    "unclamped_rate",
    "delta",
    "overlap_term",
    "gamma_term",
    "d0",
    "mu",
    "nu",
    "sigma_star_sq",
    "xi_stat",
    "big_gamma",
    "eps_tilde",
    "eps_smooth_max",
    "leak_ec",
    "ell_low",
    "d_pe",
    "v_d_pe",
    "v_xa_pe",
    "v_xb_pe",
    "p_pass_emp",
    "t_q_hat",
    "h_b",
    "leak_ec_per_symbol",
];

fn sink_err(e: impl std::fmt::Display) -> Error {
    Error::io("<output>", std::io::Error::other(e.to_string()))
}

#[derive(Clone, Debug, PartialEq)]
enum Cell {
    Num(f64),
    Text(&'static str),
    Empty,
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::Empty, Cell::Num)
    }
}

fn cells(row: &KeyRateResult) -> Vec<Cell> {
    let mut out: Vec<Cell> = vec![
        row.axis.into(),
        row.key_rate.into(),
        row.plob.into(),
        row.abort_reason
            .map_or(Cell::Empty, |r| Cell::Text(r.as_str())),
    ];
    match &row.breakdown {
        Breakdown::Collective(b) => {
            out.extend(
                [
                    b.mutual_info,
                    b.s_ab,
                    b.s_a_given_b,
                    b.holevo,
                    b.unclamped_rate,
                ]
                .map(Cell::from),
            );
            out.resize(COLUMNS.len(), Cell::Empty);
        }
        Breakdown::Coherent(b) => {
            out.push(b.mutual_info.into());
            out.extend([Cell::Empty, Cell::Empty, Cell::Empty]);
            out.push(b.unclamped_rate.into());
            out.extend([
                b.delta.into(),
                b.overlap_term.into(),
                b.gamma_term.into(),
                b.d0.into(),
                b.mu.into(),
                b.nu.into(),
                b.sigma_star_sq.into(),
                b.xi_stat.into(),
                b.big_gamma.into(),
                b.eps_tilde.into(),
                b.eps_smooth_max.into(),
                b.leak_ec.into(),
                b.ell_low.into(),
            ]);
            let pe = b.pe;
            out.extend([
                pe.map(|p| p.d_pe).into(),
                pe.map(|p| p.v_d_pe).into(),
                pe.map(|p| p.v_xa_pe).into(),
                pe.map(|p| p.v_xb_pe).into(),
                pe.map(|p| p.p_pass_emp).into(),
                pe.map(|p| p.t_q_hat).into(),
                b.h_b.into(),
                b.leak_ec_per_symbol.into(),
            ]);
        }
    }
    debug_assert_eq!(out.len(), COLUMNS.len());
    out
}

/// Shortest decimal text that round-trips to the same double.
fn number_text(v: f64) -> String {
    format!("{v:?}")
}

pub fn write_csv<W: Write>(out: &RunOutput, sink: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(sink);
    writer.write_record(COLUMNS).map_err(sink_err)?;
    for row in &out.rows {
        let record: Vec<String> = cells(row)
            .into_iter()
            .map(|c| match c {
                Cell::Num(v) => number_text(v),
                Cell::Text(t) => t.to_string(),
                Cell::Empty => String::new(),
            })
            .collect();
        writer.write_record(&record).map_err(sink_err)?;
    }
    writer.flush().map_err(sink_err)
}

pub fn write_json<W: Write>(out: &RunOutput, mut sink: W) -> Result<()> {
    let rows: Vec<serde_json::Map<String, serde_json::Value>> = out
        .rows
        .iter()
        .map(|row| {
            COLUMNS
                .iter()
                .zip(cells(row))
                .map(|(name, cell)| {
                    let value = match cell {
                        Cell::Num(v) => serde_json::Number::from_f64(v)
                            .map_or(serde_json::Value::Null, serde_json::Value::Number),
                        Cell::Text(t) => serde_json::Value::String(t.into()),
                        Cell::Empty => serde_json::Value::Null,
                    };
                    (name.to_string(), value)
                })
                .collect()
        })
        .collect();
    let doc = serde_json::json!({
        "axis_name": out.axis_name,
        "mode": out.mode,
        "columns": COLUMNS,
        "rows": rows,
    });
    serde_json::to_writer_pretty(&mut sink, &doc).map_err(sink_err)?;
    writeln!(sink).map_err(sink_err)
}

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 20.0;
const BOTTOM: f64 = 50.0;

/// Splits positive values into polyline segments; zeros and non-finite
/// values break the line.
fn segments(points: &[(f64, f64)]) -> Vec<Vec<(f64, f64)>> {
    let mut out = Vec::new();
    let mut current = Vec::new();
    for &(x, y) in points {
        if y > 0.0 && y.is_finite() {
            current.push((x, y.log10()));
        } else if !current.is_empty() {
            out.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        out.push(current);
    }
    out
}

/// Line chart of the key rate (log scale) against the sweep axis, with the
/// PLOB bound for reference.
pub fn write_svg<W: Write>(out: &RunOutput, mut sink: W) -> Result<()> {
    let log_x = out.axis_name == "block_size" && out.rows.iter().all(|r| r.axis > 0.0);
    let xs: Vec<f64> = out
        .rows
        .iter()
        .map(|r| if log_x { r.axis.log10() } else { r.axis })
        .collect();
    let rate: Vec<(f64, f64)> = xs
        .iter()
        .zip(&out.rows)
        .map(|(&x, r)| (x, r.key_rate))
        .collect();
    let plob: Vec<(f64, f64)> = xs
        .iter()
        .zip(&out.rows)
        .map(|(&x, r)| (x, r.plob))
        .collect();
    let rate_lines = segments(&rate);
    let plob_lines = segments(&plob);

    let (x_lo, x_hi) = xs
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
            (lo.min(x), hi.max(x))
        });
    let (x_lo, x_hi) = if x_lo < x_hi {
        (x_lo, x_hi)
    } else {
        (x_lo - 1.0, x_lo + 1.0)
    };
    let logs: Vec<f64> = rate_lines.iter().flatten().map(|p| p.1).collect();
    let (y_lo, y_hi) = if logs.is_empty() {
        (-3.0, 1.0)
    } else {
        let lo = logs.iter().cloned().fold(f64::INFINITY, f64::min).floor();
        let hi = logs
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max)
            .ceil();
        (lo, if hi > lo { hi } else { lo + 1.0 })
    };

    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let px = |x: f64| LEFT + (x - x_lo) / (x_hi - x_lo) * plot_w;
    let py = |y: f64| TOP + (y_hi - y) / (y_hi - y_lo) * plot_h;

    let mut svg = String::new();
    let w = &mut svg;
    let _ = writeln!(
        w,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(
        w,
        r#"<defs><clipPath id="plot"><rect x="{LEFT}" y="{TOP}" width="{plot_w}" height="{plot_h}"/></clipPath></defs>"#
    );
    let _ = writeln!(w, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let decade_step = ((y_hi - y_lo) / 8.0).ceil().max(1.0);
    let mut e = y_lo;
    while e <= y_hi + 1e-9 {
        let y = py(e);
        let _ = writeln!(
            w,
            r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#ddd"/><text x="{:.2}" y="{:.2}" text-anchor="end">1e{}</text>"##,
            LEFT + plot_w,
            LEFT - 6.0,
            y + 4.0,
            e as i64
        );
        e += decade_step;
    }
    for i in 0..=5 {
        let x = x_lo + (x_hi - x_lo) * i as f64 / 5.0;
        let label = if log_x {
            format!("1e{x:.1}")
        } else {
            format!("{x:.3}")
        };
        let _ = writeln!(
            w,
            r##"<line x1="{0:.2}" y1="{TOP}" x2="{0:.2}" y2="{1:.2}" stroke="#eee"/><text x="{0:.2}" y="{2:.2}" text-anchor="middle">{label}</text>"##,
            px(x),
            TOP + plot_h,
            TOP + plot_h + 18.0
        );
    }
    let _ = writeln!(
        w,
        r#"<rect x="{LEFT}" y="{TOP}" width="{plot_w}" height="{plot_h}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(
        w,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 10.0,
        out.axis_name
    );
    let _ = writeln!(
        w,
        r#"<text transform="translate(16 {:.2}) rotate(-90)" text-anchor="middle">key rate (bits per use)</text>"#,
        TOP + plot_h / 2.0
    );
    let polyline = |w: &mut String, line: &[(f64, f64)], style: &str| {
        let pts: Vec<String> = line
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
            .collect();
        let _ = writeln!(
            w,
            r#"<polyline clip-path="url(#plot)" fill="none" {style} points="{}"/>"#,
            pts.join(" ")
        );
    };
    for line in &plob_lines {
        polyline(w, line, r##"stroke="#888" stroke-dasharray="6 4""##);
    }
    for line in &rate_lines {
        polyline(w, line, r##"stroke="#1f5fbf" stroke-width="2""##);
    }
    let _ = writeln!(
        w,
        r##"<text x="{:.2}" y="{:.2}" text-anchor="end" fill="#1f5fbf">rate</text><text x="{:.2}" y="{:.2}" text-anchor="end" fill="#888">PLOB</text>"##,
        LEFT + plot_w - 8.0,
        TOP + 16.0,
        LEFT + plot_w - 8.0,
        TOP + 32.0
    );
    let _ = writeln!(w, "</svg>");
    sink.write_all(svg.as_bytes()).map_err(sink_err)
}
