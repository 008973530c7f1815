//! CSV and SVG writers.
//!
//! Floats go through `Debug`, which prints the shortest string that
//! parses back to the same `f64`, so CSVs round-trip bit for bit.

use std::fmt::Write as _;

use resetlab::Trace;

pub struct Csv {
    text: String,
    columns: usize,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        Self {
            text: header.join(",") + "\n",
            columns: header.len(),
        }
    }

    pub fn row(&mut self, cells: &[Cell]) {
        assert_eq!(cells.len(), self.columns, "CSV row width");
        for (i, c) in cells.iter().enumerate() {
            if i > 0 {
                self.text.push(',');
            }
            match c {
                Cell::F(x) => write!(self.text, "{x:?}").unwrap(),
                Cell::I(x) => write!(self.text, "{x}").unwrap(),
                Cell::S(s) => self.text.push_str(s),
            }
        }
        self.text.push('\n');
    }

    pub fn finish(self) -> String {
        self.text
    }
}

pub enum Cell<'a> {
    F(f64),
    I(i64),
    S(&'a str),
}

pub const TRACE_COLUMNS: [&str; 7] = ["t", "r", "e", "u", "y", "x1", "x2"];

pub fn trace_csv(tr: &Trace) -> String {
    let mut csv = Csv::new(&TRACE_COLUMNS);
    for k in 0..tr.len() {
        csv.row(&[
            Cell::F(tr.t[k]),
            Cell::F(tr.r[k]),
            Cell::F(tr.e[k]),
            Cell::F(tr.u[k]),
            Cell::F(tr.y[k]),
            Cell::F(tr.x1[k]),
            Cell::F(tr.x2[k]),
        ]);
    }
    csv.finish()
}

/// Reset instants and the trigger value just before each jump.
pub fn resets_csv(tr: &Trace) -> String {
    let mut csv = Csv::new(&["t", "trigger"]);
    for (t, level) in tr.reset_times.iter().zip(&tr.reset_levels) {
        csv.row(&[Cell::F(*t), Cell::F(*level)]);
    }
    csv.finish()
}

/// Inverse of [`trace_csv`] and [`resets_csv`].
pub fn read_trace(trace: &str, resets: &str) -> Result<Trace, String> {
    let mut lines = trace.lines();
    let header = lines.next().ok_or("empty trace file")?;
    if header != TRACE_COLUMNS.join(",") {
        return Err(format!("unexpected header '{header}'"));
    }
    let mut tr = Trace::default();
    for (i, line) in lines.enumerate() {
        let v = parse_row(line, 7).map_err(|e| format!("row {}: {e}", i + 1))?;
        tr.t.push(v[0]);
        tr.r.push(v[1]);
        tr.e.push(v[2]);
        tr.u.push(v[3]);
        tr.y.push(v[4]);
        tr.x1.push(v[5]);
        tr.x2.push(v[6]);
    }
    for (i, line) in resets.lines().skip(1).enumerate() {
        let v = parse_row(line, 2).map_err(|e| format!("reset row {}: {e}", i + 1))?;
        tr.reset_times.push(v[0]);
        tr.reset_levels.push(v[1]);
    }
    Ok(tr)
}

fn parse_row(line: &str, width: usize) -> Result<Vec<f64>, String> {
    let v: Vec<f64> = line
        .split(',')
        .map(|c| c.parse::<f64>().map_err(|e| format!("'{c}': {e}")))
        .collect::<Result<_, _>>()?;
    if v.len() != width {
        return Err(format!("expected {width} columns, found {}", v.len()));
    }
    Ok(v)
}

pub struct Series<'a> {
    pub name: &'a str,
    pub x: &'a [f64],
    pub y: &'a [f64],
}

const W: f64 = 720.0;
const H: f64 = 420.0;
const PAD: f64 = 60.0;
const MAX_POINTS: usize = 2000;
const COLOURS: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#7f7f7f",
];

/// Minimal line chart. Non-finite points are skipped; long series are
/// decimated for file size.
pub fn line_chart(title: &str, xlabel: &str, ylabel: &str, log_x: bool, series: &[Series]) -> String {
    let tx = |x: f64| if log_x { x.log10() } else { x };
    let mut xs = (f64::INFINITY, f64::NEG_INFINITY);
    let mut ys = (f64::INFINITY, f64::NEG_INFINITY);
    for s in series {
        for (&x, &y) in s.x.iter().zip(s.y) {
            if x.is_finite() && y.is_finite() && (!log_x || x > 0.0) {
                xs = (xs.0.min(tx(x)), xs.1.max(tx(x)));
                ys = (ys.0.min(y), ys.1.max(y));
            }
        }
    }
    if !(xs.0 < xs.1) {
        xs = (xs.0.min(0.0), xs.0.max(0.0) + 1.0);
    }
    if !(ys.0 < ys.1) {
        ys = if ys.0.is_finite() { (ys.0 - 1.0, ys.0 + 1.0) } else { (0.0, 1.0) };
    }
    let px = |x: f64| PAD + (tx(x) - xs.0) / (xs.1 - xs.0) * (W - 2.0 * PAD);
    let py = |y: f64| H - PAD - (y - ys.0) / (ys.1 - ys.0) * (H - 2.0 * PAD);

    let mut svg = String::new();
    writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">"#
    )
    .unwrap();
    writeln!(svg, r#"<rect width="{W}" height="{H}" fill="white"/>"#).unwrap();
    writeln!(
        svg,
        r#"<rect x="{PAD}" y="{PAD}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        W - 2.0 * PAD,
        H - 2.0 * PAD
    )
    .unwrap();
    writeln!(svg, r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, esc(title)).unwrap();
    writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, W / 2.0, H - 16.0, esc(xlabel)).unwrap();
    writeln!(
        svg,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
        H / 2.0,
        H / 2.0,
        esc(ylabel)
    )
    .unwrap();
    let xlab = |v: f64| if log_x { format!("1e{v:.0}") } else { format!("{v:.3}") };
    for (v, anchor) in [(xs.0, "start"), (xs.1, "end")] {
        let x = PAD + (v - xs.0) / (xs.1 - xs.0) * (W - 2.0 * PAD);
        writeln!(svg, r#"<text x="{x}" y="{}" text-anchor="{anchor}">{}</text>"#, H - PAD + 16.0, xlab(v)).unwrap();
    }
    for v in [ys.0, ys.1] {
        writeln!(svg, r#"<text x="{}" y="{}" text-anchor="end">{:.4}</text>"#, PAD - 4.0, py(v) + 4.0, v).unwrap();
    }

    for (i, s) in series.iter().enumerate() {
        let colour = COLOURS[i % COLOURS.len()];
        let step = s.x.len().div_ceil(MAX_POINTS).max(1);
        let mut points = String::new();
        for k in (0..s.x.len()).step_by(step) {
            let (x, y) = (s.x[k], s.y[k]);
            if x.is_finite() && y.is_finite() && (!log_x || x > 0.0) {
                write!(points, "{:.2},{:.2} ", px(x), py(y)).unwrap();
            }
        }
        writeln!(
            svg,
            r#"<polyline fill="none" stroke="{colour}" stroke-width="1.2" points="{}"/>"#,
            points.trim_end()
        )
        .unwrap();
        let ly = PAD + 14.0 + 14.0 * i as f64;
        writeln!(
            svg,
            r#"<text x="{}" y="{ly}" fill="{colour}" text-anchor="end">{}</text>"#,
            W - PAD - 6.0,
            esc(s.name)
        )
        .unwrap();
    }
    svg.push_str("</svg>\n");
    svg
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip() {
        let vals = [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, f64::NAN, f64::INFINITY, -0.0];
        let mut csv = Csv::new(&["v"]);
        for v in vals {
            csv.row(&[Cell::F(v)]);
        }
        let text = csv.finish();
        for (line, v) in text.lines().skip(1).zip(vals) {
            assert_eq!(line.parse::<f64>().unwrap().to_bits(), v.to_bits(), "{line}");
        }
    }

    #[test]
    fn trace_round_trip() {
        let tr = Trace {
            t: vec![0.0, 0.1],
            r: vec![1.0, 1.0],
            e: vec![1.0, 0.7],
            u: vec![2.0, 1.0 / 7.0],
            y: vec![0.0, 0.3],
            x1: vec![f64::NAN, f64::NAN],
            x2: vec![f64::NAN, f64::NAN],
            reset_times: vec![0.05],
            reset_levels: vec![1e-17],
        };
        let back = read_trace(&trace_csv(&tr), &resets_csv(&tr)).unwrap();
        assert!(back.bit_identical(&tr));
    }

    #[test]
    fn chart_is_svg() {
        let x = [1.0, 10.0, 100.0];
        let y = [0.0, f64::NAN, 2.0];
        let svg = line_chart("a<b", "ω", "dB", true, &[Series { name: "s", x: &x, y: &y }]);
        assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
        assert!(svg.contains("a&lt;b"));
    }
}
