//! Plain SVG line chart of Z_n and M_n with their interval bands.

use std::fmt::Write;

use urnlab::estimators::Snapshot;

const WIDTH: f64 = 900.0;
const HEIGHT: f64 = 500.0;
const LEFT: f64 = 60.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
// long runs are decimated to at most this many plotted points
const MAX_POINTS: usize = 2000;

struct Frame {
    n_max: f64,
}

impl Frame {
    fn x(&self, n: u64) -> f64 {
        LEFT + (WIDTH - LEFT - RIGHT) * (n as f64 / self.n_max)
    }

    fn y(&self, v: f64) -> f64 {
        TOP + (HEIGHT - TOP - BOTTOM) * (1.0 - v.clamp(0.0, 1.0))
    }
}

fn decimate(rows: &[Snapshot]) -> Vec<&Snapshot> {
    let step = rows.len().div_ceil(MAX_POINTS).max(1);
    let mut out: Vec<&Snapshot> = rows.iter().step_by(step).collect();
    if let Some(last) = rows.last() {
        if out.last().map(|s| s.n) != Some(last.n) {
            out.push(last);
        }
    }
    out
}

fn polyline(out: &mut String, pts: &[(f64, f64)], colour: &str, width: f64) {
    let mut d = String::new();
    for (x, y) in pts {
        let _ = write!(d, "{x:.2},{y:.2} ");
    }
    let _ = writeln!(
        out,
        r#"<polyline fill="none" stroke="{colour}" stroke-width="{width}" points="{}"/>"#,
        d.trim_end()
    );
}

fn band(out: &mut String, lower: &[(f64, f64)], upper: &[(f64, f64)], colour: &str) {
    if lower.is_empty() {
        return;
    }
    let mut d = String::new();
    for (x, y) in lower.iter().chain(upper.iter().rev()) {
        let _ = write!(d, "{x:.2},{y:.2} ");
    }
    let _ = writeln!(
        out,
        r#"<polygon fill="{colour}" fill-opacity="0.45" stroke="none" points="{}"/>"#,
        d.trim_end()
    );
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub fn render(title: &str, rows: &[Snapshot], level: f64) -> String {
    let pts = decimate(rows);
    let frame = Frame {
        n_max: rows.last().map_or(1, |s| s.n.max(1)) as f64,
    };
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );

    let mut z_lo = Vec::new();
    let mut z_hi = Vec::new();
    let mut m_lo = Vec::new();
    let mut m_hi = Vec::new();
    for s in &pts {
        let x = frame.x(s.n);
        if let Some(ci) = s.ci_z {
            z_lo.push((x, frame.y(ci.lo())));
            z_hi.push((x, frame.y(ci.hi())));
        }
        if let Some(ci) = s.ci_m {
            m_lo.push((x, frame.y(ci.lo())));
            m_hi.push((x, frame.y(ci.hi())));
        }
    }
    band(&mut out, &z_lo, &z_hi, "#bbbbbb");
    band(&mut out, &m_lo, &m_hi, "#f4b6b6");

    // axes and grid
    let (x0, x1) = (LEFT, WIDTH - RIGHT);
    let (y0, y1) = (frame.y(0.0), frame.y(1.0));
    for i in 0..=4 {
        let v = i as f64 / 4.0;
        let y = frame.y(v);
        let _ = writeln!(
            out,
            r##"<line x1="{x0}" y1="{y:.2}" x2="{x1}" y2="{y:.2}" stroke="#e6e6e6"/><text x="{}" y="{:.2}" text-anchor="end">{v:.2}</text>"##,
            x0 - 6.0,
            y + 4.0
        );
    }
    for i in 0..=5 {
        let n = (frame.n_max * i as f64 / 5.0).round() as u64;
        let x = frame.x(n);
        let _ = writeln!(
            out,
            r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{n}</text>"#,
            y0 + 18.0
        );
    }
    let _ = writeln!(
        out,
        r#"<path d="M{x0},{y1} L{x0},{y0} L{x1},{y0}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle">n</text>"#,
        (x0 + x1) / 2.0,
        HEIGHT - 12.0
    );

    let z: Vec<_> = pts.iter().map(|s| (frame.x(s.n), frame.y(s.z))).collect();
    let m: Vec<_> = pts.iter().map(|s| (frame.x(s.n), frame.y(s.m))).collect();
    polyline(&mut out, &z, "black", 1.2);
    polyline(&mut out, &m, "#cc0000", 1.2);

    // legend
    let lx = x1 - 230.0;
    let entries = [
        ("black", "Z_n".to_string()),
        ("#cc0000", "M_n".to_string()),
        ("#bbbbbb", format!("{:.0}% interval around Z_n", 100.0 * level)),
        ("#f4b6b6", format!("{:.0}% interval around M_n", 100.0 * level)),
    ];
    for (i, (colour, label)) in entries.iter().enumerate() {
        let y = TOP + 14.0 + 16.0 * i as f64;
        let _ = writeln!(
            out,
            r#"<rect x="{lx}" y="{}" width="14" height="8" fill="{colour}"/><text x="{}" y="{y}">{}</text>"#,
            y - 8.0,
            lx + 20.0,
            escape(label)
        );
    }
    out.push_str("</svg>\n");
    out
}
