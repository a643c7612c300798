// SPDX-License-Identifier: Apache-2.0

//! Minimal SVG line plots of emitted CSV files. The first column is the
//! abscissa; every other column is a series, and a column named `<s>_err`
//! becomes error bars on series `<s>`.

use std::fmt::Write;

use crate::error::{LabError, LabResult};
use crate::output::Csv;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PlotStyle {
    pub log_x: bool,
    pub log_y: bool,
}

impl std::str::FromStr for PlotStyle {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "lin" | "linear" => Ok(Self::default()),
            "logx" => Ok(Self {
                log_x: true,
                log_y: false,
            }),
            "logy" => Ok(Self {
                log_x: false,
                log_y: true,
            }),
            "loglog" => Ok(Self {
                log_x: true,
                log_y: true,
            }),
            _ => Err(format!(
                "plot style must be lin, logx, logy or loglog, got `{s}`"
            )),
        }
    }
}

const W: f64 = 640.0;
const H: f64 = 420.0;
const ML: f64 = 72.0;
const MR: f64 = 150.0;
const MT: f64 = 30.0;
const MB: f64 = 50.0;
const COLORS: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf",
];

struct Axis {
    lo: f64,
    hi: f64,
    log: bool,
}

impl Axis {
    fn fit(values: impl Iterator<Item = f64>, log: bool) -> LabResult<Self> {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values.filter(|v| v.is_finite() && (!log || *v > 0.0)) {
            let v = if log { v.log10() } else { v };
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if !lo.is_finite() {
            return Err(LabError::data("nothing to plot"));
        }
        if hi - lo < 1e-12 * (1.0 + lo.abs()) {
            lo -= 0.5;
            hi += 0.5;
        }
        Ok(Self { lo, hi, log })
    }

    fn map(&self, v: f64, a: f64, b: f64) -> Option<f64> {
        if !v.is_finite() || (self.log && v <= 0.0) {
            return None;
        }
        let u = if self.log { v.log10() } else { v };
        Some(a + (u - self.lo) / (self.hi - self.lo) * (b - a))
    }

    /// Tick positions in data units.
    fn ticks(&self) -> Vec<f64> {
        if self.log {
            let (a, b) = (self.lo.floor() as i32, self.hi.ceil() as i32);
            return (a..=b)
                .map(|k| 10f64.powi(k))
                .filter(|&t| t.log10() >= self.lo - 1e-9 && t.log10() <= self.hi + 1e-9)
                .collect();
        }
        let span = self.hi - self.lo;
        let raw = span / 5.0;
        let mag = 10f64.powf(raw.log10().floor());
        let step = [1.0, 2.0, 5.0, 10.0]
            .iter()
            .map(|m| m * mag)
            .find(|s| span / s <= 6.0)
            .unwrap_or(10.0 * mag);
        let mut t = (self.lo / step).ceil() * step;
        let mut out = Vec::new();
        while t <= self.hi + 1e-9 * step {
            out.push(if t.abs() < 1e-12 * step { 0.0 } else { t });
            t += step;
        }
        out
    }
}

fn label(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && !(1e-3..1e4).contains(&a) {
        format!("{v:.1e}")
    } else {
        let s = format!("{v:.4}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

pub fn render(csv: &Csv, title: &str, style: PlotStyle) -> LabResult<String> {
    if csv.columns.len() < 2 || csv.rows.is_empty() {
        return Err(LabError::data(format!(
            "{title}: need two columns and one row to plot"
        )));
    }
    let xs: Vec<f64> = (0..csv.rows.len()).map(|i| csv.value(i, 0)).collect();
    let series: Vec<(usize, Option<usize>)> = csv
        .columns
        .iter()
        .enumerate()
        .skip(1)
        .filter(|(_, c)| !c.ends_with("_err"))
        .map(|(k, c)| (k, csv.columns.iter().position(|e| *e == format!("{c}_err"))))
        .collect();
    let xa = Axis::fit(xs.iter().copied(), style.log_x)?;
    let ya = Axis::fit(
        series.iter().flat_map(|&(k, e)| {
            (0..csv.rows.len()).flat_map(move |i| {
                let d = e.map_or(0.0, |e| csv.value(i, e).abs());
                let v = csv.value(i, k);
                [v - d, v + d]
            })
        }),
        style.log_y,
    )?;
    let (x0, x1, y0, y1) = (ML, W - MR, H - MB, MT);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="18" text-anchor="middle" font-size="13">{}</text>"#,
        (x0 + x1) / 2.0,
        esc(title)
    );
    for t in xa.ticks() {
        let Some(px) = xa.map(t, x0, x1) else {
            continue;
        };
        let _ = writeln!(
            s,
            r##"<line x1="{px:.2}" y1="{y0:.2}" x2="{px:.2}" y2="{y1:.2}" stroke="#e5e5e5"/><text x="{px:.2}" y="{:.2}" text-anchor="middle">{}</text>"##,
            y0 + 16.0,
            label(t)
        );
    }
    for t in ya.ticks() {
        let Some(py) = ya.map(t, y0, y1) else {
            continue;
        };
        let _ = writeln!(
            s,
            r##"<line x1="{x0:.2}" y1="{py:.2}" x2="{x1:.2}" y2="{py:.2}" stroke="#e5e5e5"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"##,
            x0 - 6.0,
            py + 4.0,
            label(t)
        );
    }
    let _ = writeln!(
        s,
        r#"<rect x="{x0}" y="{y1}" width="{:.2}" height="{:.2}" fill="none" stroke="black"/>"#,
        x1 - x0,
        y0 - y1
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        (x0 + x1) / 2.0,
        H - 10.0,
        esc(&csv.columns[0])
    );
    for (i, &(k, e)) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let mut path = String::new();
        let mut pen_up = true;
        for i in 0..csv.rows.len() {
            let v = csv.value(i, k);
            match (xa.map(csv.value(i, 0), x0, x1), ya.map(v, y0, y1)) {
                (Some(px), Some(py)) => {
                    let _ = write!(path, "{}{px:.2},{py:.2} ", if pen_up { "M" } else { "L" });
                    pen_up = false;
                    if let Some(e) = e {
                        let d = csv.value(i, e).abs();
                        let lo = ya.map(v - d, y0, y1).unwrap_or(y0);
                        let hi = ya.map(v + d, y0, y1).unwrap_or(y1);
                        let _ = writeln!(
                            s,
                            r#"<line x1="{px:.2}" y1="{lo:.2}" x2="{px:.2}" y2="{hi:.2}" stroke="{color}" stroke-opacity="0.5"/>"#
                        );
                    }
                }
                _ => pen_up = true,
            }
        }
        let _ = writeln!(
            s,
            r#"<path d="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            path.trim_end()
        );
        let ly = y1 + 14.0 + 16.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<line x1="{:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/><text x="{:.2}" y="{:.2}">{}</text>"#,
            x1 + 10.0,
            x1 + 30.0,
            x1 + 35.0,
            ly + 4.0,
            esc(&csv.columns[k])
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_series_and_error_bars() {
        let mut c = Csv::new(&["x", "y", "y_err", "z"]);
        for i in 1..=10 {
            let x = i as f64;
            c.push(vec![x, x * x, 0.1 * x, 1.0 / x]);
        }
        let svg = render(&c, "t", PlotStyle::default()).unwrap();
        assert!(svg.starts_with("<svg"));
        assert_eq!(svg.matches("<path").count(), 2);
        assert!(svg.contains(">y</text>") && !svg.contains(">y_err</text>"));
        let log = render(&c, "t", "loglog".parse().unwrap()).unwrap();
        assert!(log.contains(">10</text>"));
    }

    #[test]
    fn log_axis_skips_non_positive() {
        let mut c = Csv::new(&["x", "y"]);
        c.push(vec![1.0, 0.0]);
        c.push(vec![2.0, 1.0]);
        c.push(vec![3.0, 10.0]);
        let svg = render(&c, "t", "logy".parse().unwrap()).unwrap();
        assert!(svg.contains("M"));
    }
}
