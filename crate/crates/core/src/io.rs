//! File formats: geometry CSV (`re,im`), series CSV (`t,value`), tabulated
//! densities (`x,h`), event logs as JSON lines (`k,t,theta,d`), and SVG.
//!
//! Numbers are written with Rust's shortest round-trip formatting, so every
//! value reads back bit-identical.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::cluster::Event;
use crate::conformal::Complex;
use crate::error::{Error, Result};
use crate::measures::TabulatedDensity;
use crate::trajectory::Trajectory;

fn csv_err(e: csv::Error) -> Error {
    Error::Parse(e.to_string())
}

#[derive(Serialize, Deserialize)]
struct PointRow {
    re: f64,
    im: f64,
}

#[derive(Serialize, Deserialize)]
struct SeriesRow {
    t: f64,
    value: f64,
}

#[derive(Deserialize)]
struct DensityRow {
    x: f64,
    h: f64,
}

pub fn write_points_csv<W: Write>(w: W, points: &[Complex]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for p in points {
        wr.serialize(PointRow { re: p.re, im: p.im }).map_err(csv_err)?;
    }
    if points.is_empty() {
        wr.write_record(["re", "im"]).map_err(csv_err)?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_points_csv<R: std::io::Read>(r: R) -> Result<Vec<Complex>> {
    let mut rd = csv::Reader::from_reader(r);
    check_header(&mut rd, &["re", "im"])?;
    rd.deserialize::<PointRow>().map(|row| row.map(|p| Complex::new(p.re, p.im)).map_err(csv_err)).collect()
}

pub fn write_series_csv<W: Write>(w: W, path: &Trajectory) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    if path.is_empty() {
        wr.write_record(["t", "value"]).map_err(csv_err)?;
    }
    for (&t, &value) in path.times.iter().zip(&path.values) {
        wr.serialize(SeriesRow { t, value }).map_err(csv_err)?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_series_csv<R: std::io::Read>(r: R) -> Result<Vec<(f64, f64)>> {
    let mut rd = csv::Reader::from_reader(r);
    check_header(&mut rd, &["t", "value"])?;
    rd.deserialize::<SeriesRow>().map(|row| row.map(|s| (s.t, s.value)).map_err(csv_err)).collect()
}

/// Reads `(x, h)` pairs on the grid `x_i = i/N` into a tabulated density.
pub fn read_density_csv<R: std::io::Read>(r: R) -> Result<TabulatedDensity> {
    let mut rd = csv::Reader::from_reader(r);
    check_header(&mut rd, &["x", "h"])?;
    let pairs = rd.deserialize::<DensityRow>().map(|row| row.map(|d| (d.x, d.h)).map_err(csv_err)).collect::<Result<Vec<_>>>()?;
    TabulatedDensity::from_pairs(&pairs)
}

fn check_header<R: std::io::Read>(rd: &mut csv::Reader<R>, expected: &[&str]) -> Result<()> {
    let h = rd.headers().map_err(csv_err)?;
    if h.iter().collect::<Vec<_>>() != expected {
        return Err(Error::Parse(format!(
            "expected CSV header `{}`, found `{}`",
            expected.join(","),
            h.iter().collect::<Vec<_>>().join(",")
        )));
    }
    Ok(())
}

/// One JSON object per line with fields `k, t, theta, d`.
pub fn write_events_jsonl<W: Write>(mut w: W, events: &[Event]) -> Result<()> {
    for e in events {
        let line = serde_json::to_string(e).map_err(|e| Error::Internal(e.to_string()))?;
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_events_jsonl<R: BufRead>(r: R) -> Result<Vec<Event>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let e: Event = serde_json::from_str(&line).map_err(|e| Error::Parse(format!("line {}: {e}", i + 1)))?;
        out.push(e);
    }
    Ok(out)
}

/// Styling of an SVG figure.
#[derive(Debug, Clone, Copy)]
pub struct SvgStyle {
    pub width: f64,
    pub stroke_width: f64,
    /// Decimal places of the emitted coordinates.
    pub precision: usize,
}

impl Default for SvgStyle {
    fn default() -> Self {
        Self { width: 800.0, stroke_width: 1.0, precision: 2 }
    }
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

/// Closed polylines in the plane with the unit circle drawn for scale. The
/// viewport is the bounding box of the data (and of the unit disk). Returns
/// `None` when there is nothing to draw.
pub fn render_boundaries_svg(objects: &[&[Complex]], marked: &[Complex], style: &SvgStyle) -> Option<String> {
    if objects.iter().all(|o| o.is_empty()) {
        return None;
    }
    let (mut lo_x, mut hi_x, mut lo_y, mut hi_y) = (-1.0f64, 1.0f64, -1.0f64, 1.0f64);
    for p in objects.iter().flat_map(|o| o.iter()).chain(marked) {
        lo_x = lo_x.min(p.re);
        hi_x = hi_x.max(p.re);
        lo_y = lo_y.min(p.im);
        hi_y = hi_y.max(p.im);
    }
    let span = (hi_x - lo_x).max(hi_y - lo_y) * 1.05;
    let (cx, cy) = (0.5 * (lo_x + hi_x), 0.5 * (lo_y + hi_y));
    let scale = style.width / span;
    let px = |p: Complex| ((p.re - cx) * scale + 0.5 * style.width, (cy - p.im) * scale + 0.5 * style.width);
    let prec = style.precision;
    let mut s = String::with_capacity(64 + objects.iter().map(|o| o.len() * 24).sum::<usize>());
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{w}" viewBox="0 0 {w} {w}">"#,
        w = style.width
    );
    let _ = writeln!(s, r##"<rect width="100%" height="100%" fill="#ffffff"/>"##);
    let (ox, oy) = px(Complex::new(0.0, 0.0));
    let _ = writeln!(
        s,
        r##"<circle cx="{ox:.prec$}" cy="{oy:.prec$}" r="{r:.prec$}" fill="#e8e8e8" stroke="#888888" stroke-width="{sw}"/>"##,
        r = scale,
        sw = style.stroke_width
    );
    for (k, obj) in objects.iter().enumerate() {
        if obj.is_empty() {
            continue;
        }
        let _ =
            write!(s, r#"<path fill="none" stroke="{}" stroke-width="{}" d=""#, PALETTE[k % PALETTE.len()], style.stroke_width);
        for (i, p) in obj.iter().enumerate() {
            let (x, y) = px(*p);
            let _ = write!(s, "{}{x:.prec$} {y:.prec$}", if i == 0 { "M" } else { " L" });
        }
        let _ = writeln!(s, r#" Z"/>"#);
    }
    for p in marked {
        let (x, y) = px(*p);
        let _ =
            writeln!(s, r##"<circle cx="{x:.prec$}" cy="{y:.prec$}" r="{r}" fill="#000000"/>"##, r = 1.5 * style.stroke_width);
    }
    s.push_str("</svg>\n");
    Some(s)
}

/// Trajectory panel: time on the horizontal axis, circle position (mod 1) on
/// the vertical axis; a path is broken where it wraps around the circle.
pub fn render_trajectories_svg(paths: &[&Trajectory], style: &SvgStyle) -> Option<String> {
    let nonempty: Vec<&&Trajectory> = paths.iter().filter(|p| !p.is_empty()).collect();
    if nonempty.is_empty() {
        return None;
    }
    let t0 = nonempty.iter().map(|p| p.times[0]).fold(f64::INFINITY, f64::min);
    let t1 = nonempty.iter().map(|p| *p.times.last().unwrap()).fold(f64::NEG_INFINITY, f64::max);
    let dt = if t1 > t0 { t1 - t0 } else { 1.0 };
    let (w, h, m) = (style.width, 0.6 * style.width, 40.0);
    let px = |t: f64, x: f64| (m + (t - t0) / dt * (w - 2.0 * m), h - m - x * (h - 2.0 * m));
    let prec = style.precision;
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    let _ = writeln!(s, r##"<rect width="100%" height="100%" fill="#ffffff"/>"##);
    let (ax0, ay0) = px(t0, 0.0);
    let (ax1, ay1) = px(t1.max(t0 + dt), 1.0);
    let _ = writeln!(
        s,
        r##"<rect x="{ax0:.prec$}" y="{ay1:.prec$}" width="{:.prec$}" height="{:.prec$}" fill="none" stroke="#888888"/>"##,
        ax1 - ax0,
        ay0 - ay1
    );
    let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" font-size="12" text-anchor="middle">time</text>"#, 0.5 * w, h - 8.0);
    let _ = writeln!(
        s,
        r#"<text x="12" y="{:.1}" font-size="12" text-anchor="middle" transform="rotate(-90 12 {:.1})">position (turns)</text>"#,
        0.5 * h,
        0.5 * h
    );
    for (k, p) in nonempty.iter().enumerate() {
        let _ =
            write!(s, r#"<path fill="none" stroke="{}" stroke-width="{}" d=""#, PALETTE[k % PALETTE.len()], style.stroke_width);
        let mut prev: Option<f64> = None;
        for (&t, &v) in p.times.iter().zip(&p.values) {
            let y = v.rem_euclid(1.0);
            let jump = prev.is_none_or(|q| (y - q).abs() > 0.5);
            let (x, yy) = px(t, y);
            let _ = write!(s, "{}{x:.prec$} {yy:.prec$}", if jump { " M" } else { " L" });
            prev = Some(y);
        }
        let _ = writeln!(s, r#""/>"#);
    }
    s.push_str("</svg>\n");
    Some(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conformal::circle_point;

    #[test]
    fn points_round_trip() {
        let pts: Vec<Complex> = (0..10).map(|k| circle_point(k as f64 / 7.0) * (1.0 + 1.0 / 3.0)).collect();
        let mut buf = Vec::new();
        write_points_csv(&mut buf, &pts).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("re,im\n"));
        assert_eq!(read_points_csv(&buf[..]).unwrap(), pts);
    }

    #[test]
    fn series_round_trip_and_header() {
        let mut p = Trajectory::new(0.0, 0.1);
        p.push(0.5, 1.0 / 3.0);
        let mut buf = Vec::new();
        write_series_csv(&mut buf, &p).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().next(), Some("t,value"));
        assert_eq!(read_series_csv(&buf[..]).unwrap(), vec![(0.0, 0.1), (0.5, 1.0 / 3.0)]);
        assert!(read_series_csv("a,b\n1,2\n".as_bytes()).is_err());
    }

    #[test]
    fn events_round_trip() {
        let ev = vec![Event { k: 1, t: 0.1 / 3.0, theta: 0.7, d: 0.02 }, Event { k: 2, t: 0.2, theta: 1e-17, d: 0.02 }];
        let mut buf = Vec::new();
        write_events_jsonl(&mut buf, &ev).unwrap();
        assert_eq!(read_events_jsonl(&buf[..]).unwrap(), ev);
        // every bit survives, so replayed logs reproduce runs exactly
        let many: Vec<Event> = (1..2000)
            .map(|k| Event { k, t: k as f64 * 9.8034e-5, theta: (k as f64 * 0.618_033_988_75).fract(), d: 0.02 })
            .collect();
        let mut buf = Vec::new();
        write_events_jsonl(&mut buf, &many).unwrap();
        assert_eq!(read_events_jsonl(&buf[..]).unwrap(), many);
        assert!(read_events_jsonl(r#"{"k":1,"t":0.1,"theta":0.2,"d":0.1,"x":1}"#.as_bytes()).is_err());
    }

    #[test]
    fn density_csv() {
        let mut text = String::from("x,h\n");
        for i in 0..32 {
            let x = i as f64 / 32.0;
            let _ = writeln!(text, "{x},{}", 1.0 + 0.5 * (std::f64::consts::TAU * x).cos());
        }
        let t = read_density_csv(text.as_bytes()).unwrap();
        assert!((t.eval(0.0) - 1.5).abs() < 1e-3);
    }

    #[test]
    fn svg_output() {
        let circle: Vec<Complex> = (0..64).map(|k| circle_point(k as f64 / 64.0) * 1.001).collect();
        let s = render_boundaries_svg(&[&circle], &[], &SvgStyle::default()).unwrap();
        assert!(s.starts_with("<svg"));
        assert_eq!(s.matches("<path").count(), 1);
        assert!(render_boundaries_svg(&[], &[], &SvgStyle::default()).is_none());
        let mut p = Trajectory::new(0.0, 0.9);
        p.push(1.0, 1.1);
        let s = render_trajectories_svg(&[&p], &SvgStyle::default()).unwrap();
        assert_eq!(s.matches(" M").count(), 2, "wrap splits the path");
        assert!(render_trajectories_svg(&[], &SvgStyle::default()).is_none());
    }
}
