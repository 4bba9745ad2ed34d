//! Dependency-free SVG emission: pseudo-state trajectories over time and
//! eigenvalue scatters with the sector-boundary rays.

use num_complex::Complex64;

use crate::sim::Trajectory;

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 560.0;
const MARGIN: f64 = 56.0;

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f",
];

struct Frame {
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
}

impl Frame {
    fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> Self {
        let pad = |lo: &mut f64, hi: &mut f64| {
            if !(*hi > *lo) {
                *lo -= 1.0;
                *hi += 1.0;
            } else {
                let span = *hi - *lo;
                *lo -= 0.05 * span;
                *hi += 0.05 * span;
            }
        };
        let (mut x_min, mut x_max, mut y_min, mut y_max) = (x_min, x_max, y_min, y_max);
        pad(&mut x_min, &mut x_max);
        pad(&mut y_min, &mut y_max);
        Self {
            x_min,
            x_max,
            y_min,
            y_max,
        }
    }

    fn sx(&self, x: f64) -> f64 {
        MARGIN + (x - self.x_min) / (self.x_max - self.x_min) * (WIDTH - 2.0 * MARGIN)
    }

    fn sy(&self, y: f64) -> f64 {
        HEIGHT - MARGIN - (y - self.y_min) / (self.y_max - self.y_min) * (HEIGHT - 2.0 * MARGIN)
    }
}

fn header(title: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n\
         <rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"24\" font-family=\"sans-serif\" font-size=\"16\" \
         text-anchor=\"middle\">{}</text>\n",
        WIDTH / 2.0,
        xml_escape(title)
    )
}

fn axes(frame: &Frame, x_label: &str, y_label: &str) -> String {
    let mut out = String::new();
    let x0 = frame.sx(frame.x_min);
    let x1 = frame.sx(frame.x_max);
    let y0 = frame.sy(frame.y_min);
    let y1 = frame.sy(frame.y_max);
    out.push_str(&format!(
        "<rect x=\"{x0:.1}\" y=\"{y1:.1}\" width=\"{:.1}\" height=\"{:.1}\" fill=\"none\" \
         stroke=\"#333\" stroke-width=\"1\"/>\n",
        x1 - x0,
        y0 - y1
    ));
    // zero lines when inside the frame
    if frame.y_min < 0.0 && frame.y_max > 0.0 {
        let y = frame.sy(0.0);
        out.push_str(&format!(
            "<line x1=\"{x0:.1}\" y1=\"{y:.1}\" x2=\"{x1:.1}\" y2=\"{y:.1}\" stroke=\"#bbb\" \
             stroke-width=\"1\" stroke-dasharray=\"4,4\"/>\n"
        ));
    }
    if frame.x_min < 0.0 && frame.x_max > 0.0 {
        let x = frame.sx(0.0);
        out.push_str(&format!(
            "<line x1=\"{x:.1}\" y1=\"{y1:.1}\" x2=\"{x:.1}\" y2=\"{y0:.1}\" stroke=\"#bbb\" \
             stroke-width=\"1\" stroke-dasharray=\"4,4\"/>\n"
        ));
    }
    for frac in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let xv = frame.x_min + frac * (frame.x_max - frame.x_min);
        let yv = frame.y_min + frac * (frame.y_max - frame.y_min);
        out.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"10\" \
             text-anchor=\"middle\" fill=\"#333\">{:.3}</text>\n",
            frame.sx(xv),
            y0 + 16.0,
            xv
        ));
        out.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"10\" \
             text-anchor=\"end\" fill=\"#333\">{:.3}</text>\n",
            x0 - 6.0,
            frame.sy(yv) + 3.0,
            yv
        ));
    }
    out.push_str(&format!(
        "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"12\" \
         text-anchor=\"middle\">{}</text>\n",
        (x0 + x1) / 2.0,
        HEIGHT - 14.0,
        xml_escape(x_label)
    ));
    out.push_str(&format!(
        "<text x=\"16\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"12\" \
         text-anchor=\"middle\" transform=\"rotate(-90 16 {:.1})\">{}</text>\n",
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0,
        xml_escape(y_label)
    ));
    out
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// Line plot of every lifted pseudo-state over time.
pub fn trajectory_svg(trajectory: &Trajectory, title: &str) -> String {
    let n = trajectory.states.ncols();
    let t_min = trajectory.times.first().copied().unwrap_or(0.0);
    let t_max = trajectory.times.last().copied().unwrap_or(1.0);
    let mut y_min = f64::INFINITY;
    let mut y_max = f64::NEG_INFINITY;
    for v in trajectory.states.iter() {
        y_min = y_min.min(*v);
        y_max = y_max.max(*v);
    }
    if !y_min.is_finite() || !y_max.is_finite() {
        y_min = -1.0;
        y_max = 1.0;
    }
    let frame = Frame::new(t_min, t_max, y_min, y_max);

    let mut svg = header(title);
    svg.push_str(&axes(&frame, "t [s]", "pseudo-states"));
    for j in 0..n {
        let color = PALETTE[j % PALETTE.len()];
        let mut points = String::new();
        for (i, t) in trajectory.times.iter().enumerate() {
            points.push_str(&format!(
                "{:.2},{:.2} ",
                frame.sx(*t),
                frame.sy(trajectory.states[(i, j)])
            ));
        }
        svg.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" \
             points=\"{points}\"/>\n"
        ));
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"11\" \
             fill=\"{color}\">z_{}</text>\n",
            WIDTH - MARGIN + 6.0,
            40.0 + 14.0 * j as f64,
            j + 1
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

/// Scatter of eigenvalues with the sector boundary rays at plus and minus
/// `boundary` radians from the positive real axis.
pub fn eigenvalue_svg(eigenvalues: &[Complex64], boundary: f64, title: &str) -> String {
    let mut r_max = eigenvalues.iter().map(|z| z.norm()).fold(1e-3, f64::max);
    r_max *= 1.15;
    let frame = Frame::new(-r_max, r_max, -r_max, r_max);

    let mut svg = header(title);
    svg.push_str(&axes(&frame, "Re", "Im"));
    // boundary rays from the origin
    for sign in [1.0, -1.0] {
        let (dx, dy) = (boundary.cos(), sign * boundary.sin());
        svg.push_str(&format!(
            "<line x1=\"{:.1}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"#d62728\" \
             stroke-width=\"1.5\" stroke-dasharray=\"6,3\"/>\n",
            frame.sx(0.0),
            frame.sy(0.0),
            frame.sx(r_max * dx),
            frame.sy(r_max * dy)
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{:.1}\" y=\"36\" font-family=\"sans-serif\" font-size=\"11\" \
         fill=\"#d62728\">sector boundary at &#177;{:.4} rad</text>\n",
        MARGIN, boundary
    ));
    for z in eigenvalues {
        svg.push_str(&format!(
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"4\" fill=\"#1f77b4\" fill-opacity=\"0.8\"/>\n",
            frame.sx(z.re),
            frame.sy(z.im)
        ));
    }
    svg.push_str("</svg>\n");
    svg
}
