//! Minimal static SVG line plots.

use std::fmt::Write;

use dumbbell_core::log::{LogRow, TrajectoryLog};

const W: f64 = 640.0;
const H: f64 = 320.0;
const PAD: f64 = 48.0;
const COLORS: [&str; 3] = ["#d62728", "#2ca02c", "#1f77b4"];

pub struct Series<'a> {
    pub label: &'a str,
    pub y: Vec<f64>,
}

pub fn line_plot(title: &str, y_label: &str, t: &[f64], series: &[Series]) -> String {
    let (t0, t1) = bounds(t.iter().copied());
    let (mut y0, mut y1) = bounds(series.iter().flat_map(|s| s.y.iter().copied()));
    if y1 - y0 < 1e-12 {
        y0 -= 1.0;
        y1 += 1.0;
    }
    let sx = |x: f64| PAD + (x - t0) / (t1 - t0).max(1e-12) * (W - 2.0 * PAD);
    let sy = |y: f64| H - PAD - (y - y0) / (y1 - y0) * (H - 2.0 * PAD);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<rect x="{PAD}" y="{PAD}" width="{}" height="{}" fill="none" stroke="gray"/>"#,
        W - 2.0 * PAD,
        H - 2.0 * PAD
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="20" text-anchor="middle" font-size="13">{title}</text>"#,
        W / 2.0
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">t [s]</text>"#,
        W / 2.0,
        H - 10.0
    );
    let _ = writeln!(
        s,
        r#"<text x="12" y="{}" transform="rotate(-90 12 {})" text-anchor="middle">{y_label}</text>"#,
        H / 2.0,
        H / 2.0
    );
    for (v, y) in [(y0, H - PAD), (y1, PAD)] {
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="end">{v:.3}</text>"#,
            PAD - 4.0,
            y + 4.0
        );
    }
    for (v, x) in [(t0, PAD), (t1, W - PAD)] {
        let _ = writeln!(
            s,
            r#"<text x="{x}" y="{}" text-anchor="middle">{v:.2}</text>"#,
            H - PAD + 14.0
        );
    }
    for (i, ser) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let mut pts = String::new();
        for (x, y) in t.iter().zip(&ser.y) {
            let _ = write!(pts, "{:.2},{:.2} ", sx(*x), sy(*y));
        }
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.2" points="{}"/>"#,
            pts.trim_end()
        );
        let ly = PAD + 14.0 + 14.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{ly}" fill="{color}">{}</text>"#,
            W - PAD - 60.0,
            ser.label
        );
    }
    s.push_str("</svg>\n");
    s
}

fn bounds(it: impl Iterator<Item = f64>) -> (f64, f64) {
    it.filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(v), hi.max(v))
        })
}

fn axes<'a>(
    rows: &[LogRow],
    labels: [&'a str; 3],
    f: impl Fn(&LogRow) -> [f64; 3],
) -> Vec<Series<'a>> {
    (0..3)
        .map(|i| Series {
            label: labels[i],
            y: rows.iter().map(|r| f(r)[i]).collect(),
        })
        .collect()
}

/// File name and document for each of the standard plots.
pub fn standard_plots(log: &TrajectoryLog) -> Vec<(&'static str, String)> {
    let t: Vec<f64> = log.rows.iter().map(|r| r.t).collect();
    let rows = &log.rows;
    vec![
        (
            "omega.svg",
            line_plot(
                "Body angular velocity",
                "ω [rad/s]",
                &t,
                &axes(rows, ["ω_x", "ω_y", "ω_z"], |r| r.omega),
            ),
        ),
        (
            "euler.svg",
            line_plot(
                "Euler angles",
                "angle [deg]",
                &t,
                &axes(rows, ["roll", "pitch", "yaw"], |r| r.euler_deg),
            ),
        ),
        (
            "radii.svg",
            line_plot(
                "Tether radii",
                "r [m]",
                &t,
                &axes(rows, ["r_x", "r_y", "r_z"], |r| r.radii),
            ),
        ),
        (
            "vx.svg",
            line_plot(
                "Forward velocity",
                "v_x [m/s]",
                &t,
                &[Series {
                    label: "v_x",
                    y: rows.iter().map(|r| r.vel[0]).collect(),
                }],
            ),
        ),
    ]
}
