//! Minimal self-contained SVG plots: lines, points with error bars, and
//! heatmaps. Coordinates are printed with fixed precision so output is
//! byte-stable.

use std::fmt::Write;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 36.0;
const BOTTOM: f64 = 52.0;
const PALETTE: [&str; 4] = ["#1f5fa8", "#c0392b", "#2e8b57", "#7d3c98"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    Linear,
    Log,
}

#[derive(Debug, Clone)]
pub struct Axis {
    pub label: String,
    pub scale: Scale,
}

impl Axis {
    pub fn linear(label: &str) -> Self {
        Self {
            label: label.to_owned(),
            scale: Scale::Linear,
        }
    }

    pub fn log(label: &str) -> Self {
        Self {
            label: label.to_owned(),
            scale: Scale::Log,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mark {
    Line,
    Points,
}

#[derive(Debug, Clone)]
pub struct Series {
    pub name: String,
    pub mark: Mark,
    pub points: Vec<(f64, f64)>,
    /// One-sigma error bars on y.
    pub errors: Option<Vec<f64>>,
}

impl Series {
    pub fn line(name: &str, points: Vec<(f64, f64)>) -> Self {
        Self {
            name: name.to_owned(),
            mark: Mark::Line,
            points,
            errors: None,
        }
    }

    pub fn points(name: &str, points: Vec<(f64, f64)>) -> Self {
        Self {
            name: name.to_owned(),
            mark: Mark::Points,
            points,
            errors: None,
        }
    }

    pub fn with_errors(mut self, errors: Vec<f64>) -> Self {
        self.errors = Some(errors);
        self
    }
}

#[derive(Debug, Clone)]
pub struct Plot {
    pub title: String,
    pub x: Axis,
    pub y: Axis,
    pub series: Vec<Series>,
}

struct Mapping {
    scale: Scale,
    lo: f64,
    hi: f64,
    px_lo: f64,
    px_hi: f64,
}

impl Mapping {
    fn new(scale: Scale, values: impl Iterator<Item = f64>, px_lo: f64, px_hi: f64) -> Self {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values.filter(|v| v.is_finite() && (scale == Scale::Linear || *v > 0.0)) {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if !lo.is_finite() {
            (lo, hi) = (1.0, 10.0);
        }
        match scale {
            Scale::Linear => {
                if hi == lo {
                    (lo, hi) = (lo - 0.5, hi + 0.5);
                }
                let pad = 0.04 * (hi - lo);
                (lo, hi) = (lo - pad, hi + pad);
            }
            Scale::Log => {
                lo = 10f64.powf(lo.log10().floor());
                hi = 10f64.powf(hi.log10().ceil());
                if hi <= lo {
                    hi = lo * 10.0;
                }
            }
        }
        Self {
            scale,
            lo,
            hi,
            px_lo,
            px_hi,
        }
    }

    fn t(&self, v: f64) -> f64 {
        match self.scale {
            Scale::Linear => (v - self.lo) / (self.hi - self.lo),
            Scale::Log => (v.log10() - self.lo.log10()) / (self.hi.log10() - self.lo.log10()),
        }
    }

    fn px(&self, v: f64) -> Option<f64> {
        if !v.is_finite() || (self.scale == Scale::Log && v <= 0.0) {
            return None;
        }
        Some(self.px_lo + self.t(v).clamp(-0.05, 1.05) * (self.px_hi - self.px_lo))
    }

    fn ticks(&self) -> Vec<f64> {
        match self.scale {
            Scale::Log => {
                let (a, b) = (self.lo.log10().round() as i32, self.hi.log10().round() as i32);
                let step = ((b - a) / 8).max(1);
                (a..=b).step_by(step as usize).map(|e| 10f64.powi(e)).collect()
            }
            Scale::Linear => {
                let raw = (self.hi - self.lo) / 6.0;
                let mag = 10f64.powf(raw.log10().floor());
                let step = [1.0, 2.0, 5.0, 10.0]
                    .into_iter()
                    .map(|m| m * mag)
                    .find(|s| *s >= raw)
                    .unwrap_or(10.0 * mag);
                let first = (self.lo / step).ceil() as i64;
                let last = (self.hi / step).floor() as i64;
                (first..=last).map(|i| i as f64 * step).collect()
            }
        }
    }
}

fn tick_label(v: f64, scale: Scale) -> String {
    if scale == Scale::Log || (v != 0.0 && (v.abs() >= 1e5 || v.abs() < 1e-3)) {
        format!("{v:.0e}")
    } else {
        let s = format!("{v:.4}");
        s.trim_end_matches('0').trim_end_matches('.').to_owned()
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn frame(out: &mut String, title: &str, xlabel: &str, ylabel: &str) {
    let _ = write!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"sans-serif\" font-size=\"12\">\n\
<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
<text x=\"{:.1}\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n\
<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>\n\
<text x=\"16\" y=\"{:.1}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {:.1})\">{}</text>\n",
        WIDTH / 2.0,
        escape(title),
        LEFT + (WIDTH - LEFT - RIGHT) / 2.0,
        HEIGHT - 12.0,
        escape(xlabel),
        TOP + (HEIGHT - TOP - BOTTOM) / 2.0,
        TOP + (HEIGHT - TOP - BOTTOM) / 2.0,
        escape(ylabel),
    );
}

fn axes(out: &mut String, xm: &Mapping, ym: &Mapping) {
    let (x0, x1, y0, y1) = (LEFT, WIDTH - RIGHT, HEIGHT - BOTTOM, TOP);
    let _ = writeln!(
        out,
        "<rect x=\"{x0:.1}\" y=\"{y1:.1}\" width=\"{:.1}\" height=\"{:.1}\" fill=\"none\" stroke=\"black\"/>",
        x1 - x0,
        y0 - y1
    );
    for t in xm.ticks() {
        if let Some(px) = xm.px(t) {
            let _ = writeln!(
                out,
                "<line x1=\"{px:.1}\" y1=\"{y0:.1}\" x2=\"{px:.1}\" y2=\"{:.1}\" stroke=\"black\"/><text x=\"{px:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>",
                y0 + 5.0,
                y0 + 18.0,
                tick_label(t, xm.scale)
            );
        }
    }
    for t in ym.ticks() {
        if let Some(py) = ym.px(t) {
            let _ = writeln!(
                out,
                "<line x1=\"{:.1}\" y1=\"{py:.1}\" x2=\"{x0:.1}\" y2=\"{py:.1}\" stroke=\"black\"/><text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{}</text>",
                x0 - 5.0,
                x0 - 8.0,
                py + 4.0,
                tick_label(t, ym.scale)
            );
        }
    }
}

impl Plot {
    pub fn new(title: &str, x: Axis, y: Axis) -> Self {
        Self {
            title: title.to_owned(),
            x,
            y,
            series: Vec::new(),
        }
    }

    pub fn with(mut self, s: Series) -> Self {
        self.series.push(s);
        self
    }

    pub fn render(&self) -> String {
        let xm = Mapping::new(
            self.x.scale,
            self.series.iter().flat_map(|s| s.points.iter().map(|p| p.0)),
            LEFT,
            WIDTH - RIGHT,
        );
        let ym = Mapping::new(
            self.y.scale,
            self.series.iter().flat_map(|s| {
                s.points.iter().enumerate().flat_map(move |(i, p)| {
                    let e = s.errors.as_ref().map_or(0.0, |e| e[i]);
                    [p.1 - e, p.1 + e]
                })
            }),
            HEIGHT - BOTTOM,
            TOP,
        );
        let mut out = String::new();
        frame(&mut out, &self.title, &self.x.label, &self.y.label);
        axes(&mut out, &xm, &ym);
        for (k, s) in self.series.iter().enumerate() {
            let color = PALETTE[k % PALETTE.len()];
            let pts: Vec<Option<(f64, f64)>> = s
                .points
                .iter()
                .map(|&(x, y)| Some((xm.px(x)?, ym.px(y)?)))
                .collect();
            match s.mark {
                Mark::Line => {
                    // break the path wherever a point cannot be drawn
                    let mut d = String::new();
                    let mut pen_down = false;
                    for p in &pts {
                        match p {
                            Some((x, y)) => {
                                let _ = write!(d, "{}{x:.1},{y:.1} ", if pen_down { "L" } else { "M" });
                                pen_down = true;
                            }
                            None => pen_down = false,
                        }
                    }
                    let _ = writeln!(
                        out,
                        "<path d=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.3\"/>",
                        d.trim_end()
                    );
                }
                Mark::Points => {
                    for (i, p) in pts.iter().enumerate() {
                        let Some((x, y)) = p else { continue };
                        if let Some(errs) = &s.errors {
                            let yv = s.points[i].1;
                            if let (Some(a), Some(b)) = (ym.px(yv - errs[i]), ym.px(yv + errs[i])) {
                                let _ = writeln!(
                                    out,
                                    "<line x1=\"{x:.1}\" y1=\"{a:.1}\" x2=\"{x:.1}\" y2=\"{b:.1}\" stroke=\"{color}\"/>"
                                );
                            }
                        }
                        let _ = writeln!(out, "<circle cx=\"{x:.1}\" cy=\"{y:.1}\" r=\"2.2\" fill=\"{color}\"/>");
                    }
                }
            }
        }
        if self.series.len() > 1 {
            for (k, s) in self.series.iter().enumerate() {
                let y = TOP + 16.0 + 16.0 * k as f64;
                let x = WIDTH - RIGHT - 150.0;
                let _ = writeln!(
                    out,
                    "<rect x=\"{x:.1}\" y=\"{:.1}\" width=\"12\" height=\"3\" fill=\"{}\"/><text x=\"{:.1}\" y=\"{:.1}\">{}</text>",
                    y - 4.0,
                    PALETTE[k % PALETTE.len()],
                    x + 18.0,
                    y,
                    escape(&s.name)
                );
            }
        }
        out.push_str("</svg>\n");
        out
    }
}

/// Occurrence map with `values[row][col]`; rows run along y, columns along
/// x. Edges have one more entry than the matching dimension.
pub fn heatmap(title: &str, xlabel: &str, ylabel: &str, x_edges: &[f64], y_edges: &[f64], values: &[Vec<u64>]) -> String {
    let xm = Mapping {
        scale: Scale::Linear,
        lo: x_edges[0],
        hi: *x_edges.last().expect("edges"),
        px_lo: LEFT,
        px_hi: WIDTH - RIGHT,
    };
    let ym = Mapping {
        scale: Scale::Linear,
        lo: y_edges[0],
        hi: *y_edges.last().expect("edges"),
        px_lo: HEIGHT - BOTTOM,
        px_hi: TOP,
    };
    let max = values.iter().flatten().copied().max().unwrap_or(0).max(1) as f64;
    let mut out = String::new();
    frame(&mut out, title, xlabel, ylabel);
    for (r, row) in values.iter().enumerate() {
        for (c, &v) in row.iter().enumerate() {
            if v == 0 {
                continue;
            }
            let (xa, xb) = (xm.px(x_edges[c]).unwrap_or(LEFT), xm.px(x_edges[c + 1]).unwrap_or(LEFT));
            let (ya, yb) = (ym.px(y_edges[r]).unwrap_or(TOP), ym.px(y_edges[r + 1]).unwrap_or(TOP));
            // white to dark blue on a square-root scale, so faint lobes stay visible
            let s = (v as f64 / max).sqrt();
            let shade = |full: f64| (255.0 - s * (255.0 - full)).round() as u8;
            let _ = writeln!(
                out,
                "<rect x=\"{:.1}\" y=\"{:.1}\" width=\"{:.1}\" height=\"{:.1}\" fill=\"#{:02x}{:02x}{:02x}\"/>",
                xa.min(xb),
                ya.min(yb),
                (xb - xa).abs(),
                (yb - ya).abs(),
                shade(20.0),
                shade(50.0),
                shade(120.0)
            );
        }
    }
    axes(&mut out, &xm, &ym);
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_plot_is_well_formed_and_stable() {
        let p = Plot::new("decay <test>", Axis::linear("t (ns)"), Axis::log("counts")).with(Series::line(
            "data",
            vec![(0.0, 100.0), (1.0, 10.0), (2.0, 0.0), (3.0, 1.0)],
        ));
        let a = p.render();
        assert!(a.starts_with("<svg") && a.ends_with("</svg>\n"));
        assert!(a.contains("decay &lt;test&gt;"));
        // the zero count cannot sit on a log axis, so the path restarts
        assert_eq!(a.matches('M').count(), 2);
        assert_eq!(a, p.render());
    }

    #[test]
    fn error_bars_drawn_per_point() {
        let p = Plot::new("e", Axis::log("tau"), Axis::linear("g2"))
            .with(Series::points("env", vec![(1e-6, 1.2), (1e-3, 1.0)]).with_errors(vec![0.01, 0.02]));
        let s = p.render();
        assert_eq!(s.matches("<circle").count(), 2);
        assert!(s.matches("<line").count() >= 2);
    }

    #[test]
    fn heatmap_skips_empty_cells() {
        let s = heatmap("flid", "I", "tau", &[0.0, 1.0, 2.0], &[0.0, 5.0, 10.0], &[vec![0, 3], vec![1, 0]]);
        assert_eq!(s.matches("<rect").count(), 1 + 1 + 2);
    }
}
