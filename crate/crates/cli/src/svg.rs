//! Minimal deterministic SVG charts. Coordinates are printed with two decimals so the
//! same data always yields the same bytes.

use std::fmt::Write;

const W: f64 = 640.0;
const H: f64 = 400.0;
const LEFT: f64 = 64.0;
const RIGHT: f64 = 16.0;
const TOP: f64 = 36.0;
const BOTTOM: f64 = 44.0;

/// Linear map from a data range onto the plotting area.
struct Frame {
    x: [f64; 2],
    y: [f64; 2],
}

impl Frame {
    fn new(xs: impl Iterator<Item = f64> + Clone, ys: impl Iterator<Item = f64> + Clone) -> Self {
        Self {
            x: padded(range(xs), 0.0),
            y: padded(range(ys), 0.05),
        }
    }

    fn px(&self, v: f64) -> f64 {
        LEFT + (v - self.x[0]) / (self.x[1] - self.x[0]) * (W - LEFT - RIGHT)
    }

    fn py(&self, v: f64) -> f64 {
        H - BOTTOM - (v - self.y[0]) / (self.y[1] - self.y[0]) * (H - TOP - BOTTOM)
    }
}

fn range(v: impl Iterator<Item = f64>) -> [f64; 2] {
    let (lo, hi) = v
        .filter(|x| x.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| {
            (a.min(x), b.max(x))
        });
    if lo.is_finite() {
        [lo, hi]
    } else {
        [0.0, 1.0]
    }
}

fn padded(r: [f64; 2], frac: f64) -> [f64; 2] {
    let span = r[1] - r[0];
    if span > 0.0 {
        [r[0] - frac * span, r[1] + frac * span]
    } else {
        let d = r[0].abs().max(1.0) * 0.5;
        [r[0] - d, r[1] + d]
    }
}

fn label(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && !(1e-3..1e5).contains(&a) {
        format!("{v:.2e}")
    } else if a >= 100.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.3}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

fn open(out: &mut String, title: &str) {
    let _ = write!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\" \
         font-family=\"sans-serif\" font-size=\"11\">\n<rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n\
         <text x=\"{:.2}\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n",
        W / 2.0,
        escape(title)
    );
}

fn axes(out: &mut String, f: &Frame, xlab: &str, ylab: &str) {
    let (x0, x1, y0, y1) = (LEFT, W - RIGHT, TOP, H - BOTTOM);
    let _ = writeln!(
        out,
        "<rect x=\"{x0:.2}\" y=\"{y0:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"none\" stroke=\"black\"/>",
        x1 - x0,
        y1 - y0
    );
    for k in 0..=4 {
        let t = k as f64 / 4.0;
        let xv = f.x[0] + t * (f.x[1] - f.x[0]);
        let yv = f.y[0] + t * (f.y[1] - f.y[0]);
        let (px, py) = (f.px(xv), f.py(yv));
        let _ = writeln!(
            out,
            "<line x1=\"{px:.2}\" y1=\"{y1:.2}\" x2=\"{px:.2}\" y2=\"{:.2}\" stroke=\"black\"/>\
             <text x=\"{px:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{}</text>",
            y1 + 4.0,
            y1 + 16.0,
            label(xv)
        );
        let _ = writeln!(
            out,
            "<line x1=\"{:.2}\" y1=\"{py:.2}\" x2=\"{x0:.2}\" y2=\"{py:.2}\" stroke=\"black\"/>\
             <text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\">{}</text>",
            x0 - 4.0,
            x0 - 6.0,
            py + 4.0,
            label(yv)
        );
    }
    let _ = writeln!(
        out,
        "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{}</text>",
        (x0 + x1) / 2.0,
        H - 8.0,
        escape(xlab)
    );
    let _ = writeln!(
        out,
        "<text x=\"14\" y=\"{:.2}\" text-anchor=\"middle\" transform=\"rotate(-90 14 {:.2})\">{}</text>",
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0,
        escape(ylab)
    );
}

fn close(mut out: String) -> Vec<u8> {
    out.push_str("</svg>\n");
    out.into_bytes()
}

fn polyline(out: &mut String, pts: &[(f64, f64)], stroke: &str, dash: bool) {
    let mut d = String::new();
    for (k, (x, y)) in pts.iter().enumerate() {
        let _ = write!(d, "{}{x:.2},{y:.2}", if k == 0 { "" } else { " " });
    }
    let _ = writeln!(
        out,
        "<polyline points=\"{d}\" fill=\"none\" stroke=\"{stroke}\"{}/>",
        if dash {
            " stroke-dasharray=\"6 4\""
        } else {
            ""
        }
    );
}

/// Index plot of `M(0)` with the benchmark line; flagged observations are labelled.
pub fn index_plot(title: &str, m0: &[f64], benchmark: f64, flags: &[bool]) -> Vec<u8> {
    let n = m0.len();
    let f = Frame::new(
        (0..n).map(|i| i as f64),
        m0.iter().copied().chain([0.0, benchmark]),
    );
    let mut out = String::new();
    open(&mut out, title);
    axes(&mut out, &f, "index", "M(0)");
    for (i, &v) in m0.iter().enumerate() {
        let (x, y) = (f.px(i as f64), f.py(v));
        let _ = writeln!(
            out,
            "<line x1=\"{x:.2}\" y1=\"{:.2}\" x2=\"{x:.2}\" y2=\"{y:.2}\" stroke=\"{}\"/>",
            f.py(0.0),
            if flags[i] { "firebrick" } else { "gray" }
        );
        if flags[i] {
            let _ = writeln!(out, "<text x=\"{x:.2}\" y=\"{:.2}\" text-anchor=\"middle\" fill=\"firebrick\">{i}</text>", y - 4.0);
        }
    }
    let yb = f.py(benchmark);
    polyline(&mut out, &[(LEFT, yb), (W - RIGHT, yb)], "steelblue", true);
    close(out)
}

/// Predicted means with `± 1.96·sd` bands, against the target index.
pub fn band_plot(title: &str, mean: &[f64], sd: &[f64], truth: Option<&[f64]>) -> Vec<u8> {
    let n = mean.len();
    let lo: Vec<f64> = mean.iter().zip(sd).map(|(m, s)| m - 1.96 * s).collect();
    let hi: Vec<f64> = mean.iter().zip(sd).map(|(m, s)| m + 1.96 * s).collect();
    let ys = lo
        .iter()
        .chain(&hi)
        .copied()
        .chain(truth.unwrap_or(&[]).iter().copied())
        .collect::<Vec<_>>();
    let f = Frame::new((0..n).map(|i| i as f64), ys.iter().copied());
    let mut out = String::new();
    open(&mut out, title);
    axes(&mut out, &f, "target", "prediction");
    let mut band = String::new();
    let upper: Vec<(f64, f64)> = (0..n).map(|i| (f.px(i as f64), f.py(hi[i]))).collect();
    let lower: Vec<(f64, f64)> = (0..n)
        .rev()
        .map(|i| (f.px(i as f64), f.py(lo[i])))
        .collect();
    for (k, (x, y)) in upper.iter().chain(&lower).enumerate() {
        let _ = write!(band, "{}{x:.2},{y:.2}", if k == 0 { "" } else { " " });
    }
    let _ = writeln!(
        out,
        "<polygon points=\"{band}\" fill=\"lightsteelblue\" stroke=\"none\"/>"
    );
    let line: Vec<(f64, f64)> = (0..n).map(|i| (f.px(i as f64), f.py(mean[i]))).collect();
    polyline(&mut out, &line, "navy", false);
    if let Some(t) = truth {
        for (i, &v) in t.iter().enumerate() {
            let _ = writeln!(
                out,
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"2\" fill=\"black\"/>",
                f.px(i as f64),
                f.py(v)
            );
        }
    }
    close(out)
}

/// Intensity map of values on a regular grid (`xs × ys`, row-major in `ys`).
pub fn grid_plot(
    title: &str,
    xs: &[f64],
    ys: &[f64],
    value: &dyn Fn(usize, usize) -> f64,
) -> Vec<u8> {
    let vals: Vec<f64> = (0..ys.len())
        .flat_map(|j| (0..xs.len()).map(move |i| (i, j)))
        .map(|(i, j)| value(i, j))
        .collect();
    let vr = range(vals.iter().copied());
    // cells are centred on the grid nodes, so pad by half a cell
    let half = |v: &[f64]| {
        let r = range(v.iter().copied());
        let d = if v.len() > 1 {
            (r[1] - r[0]) / (v.len() - 1) as f64 / 2.0
        } else {
            0.5
        };
        [r[0] - d, r[1] + d]
    };
    let f = Frame {
        x: half(xs),
        y: half(ys),
    };
    let mut out = String::new();
    open(
        &mut out,
        &format!("{title} [{} to {}]", label(vr[0]), label(vr[1])),
    );
    let cw = (W - LEFT - RIGHT) / xs.len() as f64;
    let ch = (H - TOP - BOTTOM) / ys.len() as f64;
    for (j, _) in ys.iter().enumerate() {
        for (i, &x) in xs.iter().enumerate() {
            let t = if vr[1] > vr[0] {
                (value(i, j) - vr[0]) / (vr[1] - vr[0])
            } else {
                0.5
            };
            let shade = (255.0 * (1.0 - t)).round() as u8;
            let _ = writeln!(
                out,
                "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"rgb({shade},{shade},255)\"/>",
                f.px(x) - cw / 2.0,
                f.py(ys[j]) - ch / 2.0,
                cw,
                ch
            );
        }
    }
    axes(&mut out, &f, "x", "y");
    close(out)
}

/// Empirical semivariances with an optional fitted model curve.
pub fn variogram_plot(
    title: &str,
    centers: &[f64],
    gamma: &[f64],
    model: Option<&dyn Fn(f64) -> f64>,
) -> Vec<u8> {
    let hmax = centers.iter().copied().fold(0.0, f64::max);
    let curve: Vec<(f64, f64)> = match model {
        Some(m) => (0..=100)
            .map(|k| hmax * k as f64 / 100.0)
            .map(|h| (h, m(h)))
            .collect(),
        None => Vec::new(),
    };
    let f = Frame::new(
        centers.iter().copied().chain([0.0]),
        gamma
            .iter()
            .copied()
            .chain(curve.iter().map(|c| c.1))
            .chain([0.0]),
    );
    let mut out = String::new();
    open(&mut out, title);
    axes(&mut out, &f, "distance", "semivariance");
    for (&h, &g) in centers.iter().zip(gamma) {
        let _ = writeln!(
            out,
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"navy\"/>",
            f.px(h),
            f.py(g)
        );
    }
    if !curve.is_empty() {
        let pts: Vec<(f64, f64)> = curve.iter().map(|&(h, g)| (f.px(h), f.py(g))).collect();
        polyline(&mut out, &pts, "firebrick", false);
    }
    close(out)
}
