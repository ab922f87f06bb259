//! Matrix and curve CSVs, PGM heatmaps and SVG curve plots.

use std::fmt::Write as _;
use std::io::Write;

use crate::error::{Error, Result};
use crate::eval::confusion::{ConfusionMatrix, PerformanceCurve};

fn io_err(e: std::io::Error) -> Error {
    Error::io("<export>", e)
}

/// One CSV row per database frame.
pub fn write_matrix_csv<W: Write>(m: &ConfusionMatrix, mut out: W) -> Result<()> {
    for i in 0..m.rows() {
        let row: Vec<String> = m.row(i).iter().map(|v| v.to_string()).collect();
        writeln!(out, "{}", row.join(",")).map_err(io_err)?;
    }
    Ok(())
}

/// Parses a dense matrix CSV. Lines starting with `#` and blank lines are skipped.
pub fn parse_matrix_csv(text: &str) -> Result<ConfusionMatrix> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row = line
            .split(',')
            .map(|f| {
                f.trim().parse::<f64>().map_err(|_| Error::Parse {
                    line: n + 1,
                    message: format!("`{}` is not a number", f.trim()),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::Parse {
                    line: n + 1,
                    message: format!("{} fields, expected {}", row.len(), first.len()),
                });
            }
        }
        rows.push(row);
    }
    ConfusionMatrix::from_rows(&rows)
}

pub const CURVE_HEADER: &str = "d,ratio";

pub fn write_curve_csv<W: Write>(curve: &PerformanceCurve, mut out: W) -> Result<()> {
    writeln!(out, "{CURVE_HEADER}").map_err(io_err)?;
    for (d, r) in &curve.points {
        writeln!(out, "{d},{r}").map_err(io_err)?;
    }
    Ok(())
}

/// Parses a `d,ratio` curve; `k` is not stored in the file.
pub fn parse_curve_csv(text: &str, k: usize) -> Result<PerformanceCurve> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'));
    match lines.next() {
        Some((_, h)) if h.trim() == CURVE_HEADER => {}
        Some((n, _)) => {
            return Err(Error::Parse {
                line: n + 1,
                message: format!("expected header `{CURVE_HEADER}`"),
            })
        }
        None => {
            return Err(Error::Parse {
                line: 1,
                message: "missing header".into(),
            })
        }
    }
    let points = lines
        .map(|(n, l)| {
            let bad = || Error::Parse {
                line: n + 1,
                message: format!("malformed curve row `{l}`"),
            };
            let (d, r) = l.split_once(',').ok_or_else(bad)?;
            Ok((d.trim().parse().map_err(|_| bad())?, r.trim().parse().map_err(|_| bad())?))
        })
        .collect::<Result<_>>()?;
    Ok(PerformanceCurve { k, points })
}

/// Binary 8-bit PGM; entry 1.0 maps to grey 255. Values are clamped to `[0, 1]`.
pub fn write_pgm<W: Write>(m: &ConfusionMatrix, mut out: W) -> Result<()> {
    write!(out, "P5\n{} {}\n255\n", m.cols(), m.rows()).map_err(io_err)?;
    let bytes: Vec<u8> = m
        .data()
        .iter()
        .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    out.write_all(&bytes).map_err(io_err)
}

/// Line plot of inlier ratio against `d`, one polyline per curve.
pub fn curves_svg(curves: &[PerformanceCurve]) -> String {
    const W: f64 = 480.0;
    const H: f64 = 320.0;
    const PAD: f64 = 40.0;
    const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];
    let d_max = curves
        .iter()
        .flat_map(|c| c.points.iter().map(|p| p.0))
        .max()
        .unwrap_or(1)
        .max(1) as f64;
    let x = |d: f64| PAD + d / d_max * (W - 2.0 * PAD);
    let y = |r: f64| H - PAD - r * (H - 2.0 * PAD);
    let mut s = String::new();
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">"
    );
    let _ = writeln!(s, "<rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>");
    let _ = writeln!(
        s,
        "<polyline points=\"{},{} {},{} {},{}\" fill=\"none\" stroke=\"black\"/>",
        x(0.0),
        y(1.0),
        x(0.0),
        y(0.0),
        x(d_max),
        y(0.0)
    );
    let _ = writeln!(s, "<text x=\"{}\" y=\"{}\" font-size=\"12\">d</text>", W / 2.0, H - 8.0);
    let _ = writeln!(s, "<text x=\"4\" y=\"{}\" font-size=\"12\">1.0</text>", y(1.0) + 4.0);
    let _ = writeln!(s, "<text x=\"4\" y=\"{}\" font-size=\"12\">0.0</text>", y(0.0) + 4.0);
    for (n, c) in curves.iter().enumerate() {
        let color = COLORS[n % COLORS.len()];
        let pts: Vec<String> = c
            .points
            .iter()
            .map(|&(d, r)| format!("{:.2},{:.2}", x(d as f64), y(r)))
            .collect();
        let _ = writeln!(
            s,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"2\"/>",
            pts.join(" ")
        );
        let _ = writeln!(
            s,
            "<text x=\"{}\" y=\"{}\" font-size=\"12\" fill=\"{color}\">k={}</text>",
            W - PAD - 40.0,
            PAD + 14.0 * (n as f64 + 1.0),
            c.k
        );
    }
    s.push_str("</svg>\n");
    s
}
