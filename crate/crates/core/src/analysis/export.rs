//! CSV tables and SVG plots of analysis results.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::{AnalysisError, BandwidthReport, CountMatrix, IntervalTimeline, RoutineStats, TimeSeries};

const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf",
];
const NO_DATA: &str = "#d9d9d9";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SvgStyle {
    pub width: u32,
    pub height: u32,
    pub title: Option<String>,
}

impl Default for SvgStyle {
    fn default() -> Self {
        SvgStyle {
            width: 960,
            height: 420,
            title: None,
        }
    }
}

/// An analysis result that can be written as a table and drawn.
pub trait Report {
    fn is_empty(&self) -> bool;
    fn write_csv(&self, out: &mut dyn Write) -> Result<(), AnalysisError>;
    fn to_svg(&self, style: &SvgStyle) -> String;
}

pub fn export_csv(result: &dyn Report, path: impl AsRef<Path>) -> Result<(), AnalysisError> {
    if result.is_empty() {
        return Err(AnalysisError::EmptyResult);
    }
    let mut out = BufWriter::new(File::create(path)?);
    result.write_csv(&mut out)?;
    out.flush()?;
    Ok(())
}

pub fn export_svg(
    result: &dyn Report,
    path: impl AsRef<Path>,
    style: &SvgStyle,
) -> Result<(), AnalysisError> {
    if result.is_empty() {
        return Err(AnalysisError::EmptyResult);
    }
    std::fs::write(path, result.to_svg(style))?;
    Ok(())
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn color(i: usize) -> &'static str {
    PALETTE[i % PALETTE.len()]
}

/// Plot area inside fixed margins.
struct Canvas {
    out: String,
    x0: f64,
    y0: f64,
    w: f64,
    h: f64,
}

impl Canvas {
    fn new(style: &SvgStyle, left: f64, right: f64) -> Self {
        let (width, height) = (style.width.max(200) as f64, style.height.max(120) as f64);
        let mut out = String::new();
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">"#
        );
        let _ = writeln!(out, r#"<rect width="{width}" height="{height}" fill="white"/>"#);
        if let Some(t) = &style.title {
            let _ = writeln!(
                out,
                r#"<text x="{}" y="18" text-anchor="middle" font-size="14">{}</text>"#,
                width / 2.0,
                escape(t)
            );
        }
        Canvas {
            out,
            x0: left,
            y0: 30.0,
            w: width - left - right,
            h: height - 30.0 - 45.0,
        }
    }

    fn line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64, stroke: &str) {
        let _ = writeln!(
            self.out,
            r#"<line x1="{x1:.2}" y1="{y1:.2}" x2="{x2:.2}" y2="{y2:.2}" stroke="{stroke}"/>"#
        );
    }

    fn rect(&mut self, x: f64, y: f64, w: f64, h: f64, fill: &str, extra: &str) {
        let _ = writeln!(
            self.out,
            r#"<rect x="{x:.2}" y="{y:.2}" width="{:.2}" height="{:.2}" fill="{fill}"{extra}/>"#,
            w.max(0.0),
            h.max(0.0)
        );
    }

    fn text(&mut self, x: f64, y: f64, anchor: &str, s: &str) {
        let _ = writeln!(
            self.out,
            r#"<text x="{x:.2}" y="{y:.2}" text-anchor="{anchor}">{}</text>"#,
            escape(s)
        );
    }

    /// Bottom axis over `[t0, t1)` ns, labelled in seconds.
    fn time_axis(&mut self, t0: u64, t1: u64) {
        let y = self.y0 + self.h;
        self.line(self.x0, y, self.x0 + self.w, y, "black");
        for k in 0..=5 {
            let x = self.x0 + self.w * k as f64 / 5.0;
            let t = t0 as f64 + (t1 - t0) as f64 * k as f64 / 5.0;
            self.line(x, y, x, y + 4.0, "black");
            self.text(x, y + 16.0, "middle", &format!("{:.4}", t / 1e9));
        }
        self.text(self.x0 + self.w / 2.0, y + 32.0, "middle", "time (s)");
    }

    /// Left axis over `[0, max]`.
    fn value_axis(&mut self, max: f64, label: &str) {
        self.line(self.x0, self.y0, self.x0, self.y0 + self.h, "black");
        for k in 0..=4 {
            let v = max * k as f64 / 4.0;
            let y = self.y0 + self.h - self.h * k as f64 / 4.0;
            self.line(self.x0 - 4.0, y, self.x0, y, "black");
            self.text(self.x0 - 6.0, y + 4.0, "end", &format!("{v:.3}"));
        }
        let _ = writeln!(
            self.out,
            r#"<text transform="translate(14,{:.2}) rotate(-90)" text-anchor="middle">{}</text>"#,
            self.y0 + self.h / 2.0,
            escape(label)
        );
    }

    fn legend(&mut self, entries: &[(String, &str)]) {
        let mut x = self.x0;
        let y = self.y0 - 20.0;
        for (label, fill) in entries {
            self.rect(x, y, 10.0, 10.0, fill, "");
            self.text(x + 14.0, y + 9.0, "start", label);
            x += 24.0 + 7.0 * label.chars().count() as f64;
        }
    }

    fn finish(mut self) -> String {
        self.out.push_str("</svg>\n");
        self.out
    }
}

fn nice_max(v: f64) -> f64 {
    if v.is_finite() && v > 0.0 {
        v * 1.1
    } else {
        1.0
    }
}

fn series_svg(series: &[&TimeSeries], style: &SvgStyle, axis_label: &str) -> String {
    let mut c = Canvas::new(style, 70.0, 20.0);
    let first = series[0];
    let ymax = nice_max(series.iter().map(|s| s.max()).fold(0.0, f64::max));
    let span = (first.end - first.origin).max(1) as f64;
    let (x0, y0, w, h) = (c.x0, c.y0, c.w, c.h);
    let x = |t: u64| x0 + w * (t - first.origin) as f64 / span;
    let y = |v: f64| y0 + h - h * v / ymax;
    for (k, s) in series.iter().enumerate() {
        let mut points = String::new();
        for (i, &v) in s.values.iter().enumerate() {
            let (a, b) = (s.bin_start(i), s.bin_start(i) + s.width(i));
            let _ = write!(points, "{:.2},{:.2} {:.2},{:.2} ", x(a), y(v), x(b), y(v));
        }
        let _ = writeln!(
            c.out,
            r#"<polyline fill="none" stroke="{}" stroke-width="1.5" points="{}"/>"#,
            color(k),
            points.trim_end()
        );
    }
    c.value_axis(ymax, axis_label);
    c.time_axis(first.origin, first.end);
    let entries: Vec<(String, &str)> = series
        .iter()
        .enumerate()
        .map(|(k, s)| (s.label.clone(), color(k)))
        .collect();
    c.legend(&entries);
    c.finish()
}

impl Report for TimeSeries {
    fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn write_csv(&self, out: &mut dyn Write) -> Result<(), AnalysisError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["start_ns", "end_ns", &format!("{} ({})", self.label, self.units)])?;
        for (i, v) in self.values.iter().enumerate() {
            let s = self.bin_start(i);
            w.write_record([s.to_string(), (s + self.width(i)).to_string(), v.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    fn to_svg(&self, style: &SvgStyle) -> String {
        series_svg(&[self], style, &self.units)
    }
}

impl Report for BandwidthReport {
    fn is_empty(&self) -> bool {
        self.series.first().is_none_or(|s| s.values.is_empty())
    }

    fn write_csv(&self, out: &mut dyn Write) -> Result<(), AnalysisError> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["start_ns".to_string(), "end_ns".to_string()];
        header.extend(self.series.iter().map(|s| format!("{} ({})", s.label, s.units)));
        w.write_record(&header)?;
        let first = &self.series[0];
        for i in 0..first.values.len() {
            let s = first.bin_start(i);
            let mut row = vec![s.to_string(), (s + first.width(i)).to_string()];
            row.extend(self.series.iter().map(|s| s.values[i].to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    fn to_svg(&self, style: &SvgStyle) -> String {
        let refs: Vec<&TimeSeries> = self.series.iter().collect();
        series_svg(&refs, style, "MB/s")
    }
}

impl Report for IntervalTimeline {
    fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    fn write_csv(&self, out: &mut dyn Write) -> Result<(), AnalysisError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["appl", "task", "thread", "begin_ns", "end_ns", "code", "label", "open"])?;
        for (k, blocks) in &self.rows {
            for b in blocks {
                w.write_record([
                    k.appl.to_string(),
                    k.task.to_string(),
                    k.thread.to_string(),
                    b.begin.to_string(),
                    b.end.to_string(),
                    b.code.to_string(),
                    self.label(b.code),
                    b.open.to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    fn to_svg(&self, style: &SvgStyle) -> String {
        let mut c = Canvas::new(style, 90.0, 20.0);
        let codes: Vec<u64> = self.codes().into_iter().collect();
        let fill = |code: u64| color(codes.binary_search(&code).unwrap_or(0));
        let (t0, t1) = self
            .rows
            .values()
            .flatten()
            .fold((u64::MAX, 0), |(a, b), i| (a.min(i.begin), b.max(i.end)));
        let (t0, t1) = if t0 < t1 { (t0, t1) } else { (0, self.total_time.max(1)) };
        let row_h = c.h / self.rows.len() as f64;
        let (x0, w) = (c.x0, c.w);
        let x = |t: u64| x0 + w * (t - t0) as f64 / (t1 - t0) as f64;
        for (r, (k, blocks)) in self.rows.iter().enumerate() {
            let y = c.y0 + r as f64 * row_h;
            if row_h >= 8.0 {
                c.text(c.x0 - 6.0, y + row_h / 2.0 + 4.0, "end", &k.to_string());
            }
            for b in blocks {
                let extra = if b.open { r#" stroke="black" stroke-dasharray="2,2""# } else { "" };
                c.rect(x(b.begin), y + row_h * 0.1, x(b.end) - x(b.begin), row_h * 0.8, fill(b.code), extra);
            }
        }
        c.time_axis(t0, t1);
        let entries: Vec<(String, &str)> = codes.iter().map(|&k| (self.label(k), fill(k))).collect();
        c.legend(&entries);
        c.finish()
    }
}

impl Report for CountMatrix {
    fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    fn write_csv(&self, out: &mut dyn Write) -> Result<(), AnalysisError> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["sender\\receiver".to_string()];
        header.extend(self.labels.iter().cloned());
        w.write_record(&header)?;
        for (label, row) in self.labels.iter().zip(&self.counts) {
            let mut rec = vec![label.clone()];
            rec.extend(row.iter().map(u64::to_string));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    fn to_svg(&self, style: &SvgStyle) -> String {
        let mut c = Canvas::new(style, 90.0, 20.0);
        let n = self.len();
        let cell = (c.w.min(c.h) / n as f64).max(1.0);
        let max = self.counts.iter().flatten().copied().max().unwrap_or(0).max(1) as f64;
        for (i, row) in self.counts.iter().enumerate() {
            let y = c.y0 + i as f64 * cell;
            if cell >= 8.0 {
                c.text(c.x0 - 6.0, y + cell / 2.0 + 4.0, "end", &self.labels[i]);
            }
            for (j, &v) in row.iter().enumerate() {
                let x = c.x0 + j as f64 * cell;
                let fill = if v == 0 {
                    NO_DATA.to_string()
                } else {
                    // Light yellow to dark blue.
                    let f = v as f64 / max;
                    let mix = |a: f64, b: f64| (a + (b - a) * f).round() as u8;
                    format!("#{:02x}{:02x}{:02x}", mix(255.0, 8.0), mix(237.0, 48.0), mix(160.0, 107.0))
                };
                c.rect(x, y, cell, cell, &fill, r#" stroke="white""#);
                if v > 0 && cell >= 24.0 {
                    c.text(x + cell / 2.0, y + cell / 2.0 + 4.0, "middle", &v.to_string());
                }
            }
        }
        let bottom = c.y0 + n as f64 * cell;
        c.text(c.x0 + n as f64 * cell / 2.0, bottom + 18.0, "middle", "receiver");
        let _ = writeln!(
            c.out,
            r#"<text transform="translate(14,{:.2}) rotate(-90)" text-anchor="middle">sender</text>"#,
            c.y0 + n as f64 * cell / 2.0
        );
        c.finish()
    }
}

impl Report for RoutineStats {
    fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    fn write_csv(&self, out: &mut dyn Write) -> Result<(), AnalysisError> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = ["code", "label", "mean", "min", "max", "q1", "median", "q3"]
            .map(String::from)
            .to_vec();
        header.extend(self.tasks.iter().cloned());
        w.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![
                r.code.to_string(),
                r.label.clone(),
                r.mean.to_string(),
                r.min.to_string(),
                r.max.to_string(),
            ];
            rec.extend(r.quartiles.iter().map(f64::to_string));
            rec.extend(r.fractions.iter().map(f64::to_string));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    fn to_svg(&self, style: &SvgStyle) -> String {
        let mut c = Canvas::new(style, 70.0, 20.0);
        let slot = c.w / self.rows.len() as f64;
        let (y0, h) = (c.y0, c.h);
        let y = |f: f64| y0 + h - h * f;
        for (k, r) in self.rows.iter().enumerate() {
            let cx = c.x0 + slot * (k as f64 + 0.5);
            let half = slot * 0.25;
            let band = format!(r#" fill-opacity="0.35" stroke="{}""#, color(k));
            c.rect(cx - half, y(r.max), 2.0 * half, y(r.min) - y(r.max), color(k), &band);
            let _ = writeln!(
                c.out,
                r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{}" stroke-width="2.5"/>"#,
                cx - half,
                y(r.mean),
                cx + half,
                y(r.mean),
                color(k)
            );
            c.text(cx, c.y0 + c.h + 16.0, "middle", &r.label);
            c.text(cx + half + 4.0, y(r.mean) + 4.0, "start", &format!("{:.1}%", r.mean * 100.0));
        }
        c.value_axis(1.0, "fraction of time");
        c.line(c.x0, c.y0 + c.h, c.x0 + c.w, c.y0 + c.h, "black");
        c.finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::{call_timeline, testutil};
    use crate::record::EventRecord;

    fn csv_of(r: &dyn Report) -> String {
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        String::from_utf8(buf).unwrap()
    }

    #[test]
    fn series_csv_rows() {
        let s = TimeSeries {
            label: "p".into(),
            units: "tasks".into(),
            origin: 0,
            bin_width: 10,
            end: 25,
            values: vec![1.0, 2.0, 0.5],
        };
        let text = csv_of(&s);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[0], "start_ns,end_ns,p (tasks)");
        assert_eq!(lines[3], "20,25,0.5");
    }

    #[test]
    fn matrix_csv_shape() {
        let mut m = CountMatrix::zeros(vec!["a".into(), "b".into()]);
        m.counts[0][1] = 3;
        assert_eq!(csv_of(&m), "sender\\receiver,a,b\na,0,3\nb,0,0\n");
        let svg = m.to_svg(&SvgStyle::default());
        assert!(svg.contains(NO_DATA));
        assert!(svg.ends_with("</svg>\n"));
    }

    #[test]
    fn timeline_svg_colors_and_legend() {
        let mut b = testutil::bundle(2, 1, 100);
        b.registry
            .register(7, "MPI call", &[(1, "MPI_Waitany"), (2, "MPI_Allreduce")])
            .unwrap();
        for (task, t, v) in [(1, 0, 1), (1, 40, 2), (1, 60, 0), (2, 10, 2), (2, 30, 0)] {
            b.records.push(
                EventRecord {
                    location: testutil::loc(task, 1),
                    time: t,
                    pairs: vec![(7, v)],
                }
                .into(),
            );
        }
        let svg = call_timeline(&b, 7).unwrap().to_svg(&SvgStyle::default());
        let fills: std::collections::BTreeSet<&str> = svg
            .match_indices("fill=\"#")
            .map(|(i, _)| &svg[i + 6..i + 13])
            .filter(|c| *c != "#ffffff")
            .collect();
        assert!(fills.contains(color(0)) && fills.contains(color(1)));
        assert!(svg.contains(">MPI_Waitany</text>"));
        assert!(svg.contains(">MPI_Allreduce</text>"));
    }

    #[test]
    fn escaping_and_empty_results() {
        assert_eq!(escape("a<b & \"c\""), "a&lt;b &amp; &quot;c&quot;");
        let dir = tempfile::tempdir().unwrap();
        let empty = CountMatrix::zeros(vec![]);
        assert!(matches!(
            export_csv(&empty, dir.path().join("x.csv")),
            Err(AnalysisError::EmptyResult)
        ));
    }

    #[test]
    fn exports_are_deterministic() {
        let mut m = CountMatrix::zeros(vec!["a".into(), "b".into()]);
        m.counts[1][0] = 9;
        let dir = tempfile::tempdir().unwrap();
        let (p, q) = (dir.path().join("1.svg"), dir.path().join("2.svg"));
        export_svg(&m, &p, &SvgStyle::default()).unwrap();
        export_svg(&m, &q, &SvgStyle::default()).unwrap();
        assert_eq!(std::fs::read(p).unwrap(), std::fs::read(q).unwrap());
    }
}
