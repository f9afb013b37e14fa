//! Static four-panel plot of a trajectory: states, controls, adjoints, `H`.

use std::fmt::Write;

use super::trajectory::Trajectory;

const WIDTH: f64 = 900.0;
const PANEL_HEIGHT: f64 = 220.0;
const MARGIN: f64 = 60.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

struct Panel<'a> {
    title: &'a str,
    series: Vec<(String, &'a [f64])>,
    /// Skip flagged rows (values there are placeholders).
    skip_flagged: bool,
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 * (1.0 + lo.abs()) {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

fn series<'a>(prefix: &str, rows: &'a [Vec<f64>]) -> Vec<(String, &'a [f64])> {
    rows.iter().enumerate().map(|(i, r)| (format!("{prefix}{}", i + 1), r.as_slice())).collect()
}

pub fn render(traj: &Trajectory) -> String {
    let panels = [
        Panel { title: "states", series: series("x", &traj.x), skip_flagged: false },
        Panel { title: "controls", series: series("u", &traj.u), skip_flagged: false },
        Panel { title: "adjoints", series: series("lambda", &traj.lambda), skip_flagged: true },
        Panel { title: "Hamiltonian", series: vec![("H".to_string(), traj.h.as_slice())], skip_flagged: true },
    ];
    let height = panels.len() as f64 * (PANEL_HEIGHT + MARGIN) + MARGIN;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let (t0, t1) = bounds(traj.t.iter().copied());
    let plot_w = WIDTH - 2.0 * MARGIN;
    for (p, panel) in panels.iter().enumerate() {
        let top = MARGIN + p as f64 * (PANEL_HEIGHT + MARGIN);
        let keep = |k: usize| !(panel.skip_flagged && traj.flagged[k]);
        let (lo, hi) = bounds(panel.series.iter().flat_map(|(_, s)| s.iter().enumerate().filter(|(k, _)| keep(*k)).map(|(_, v)| *v)));
        let sx = |t: f64| MARGIN + (t - t0) / (t1 - t0) * plot_w;
        let sy = |v: f64| top + PANEL_HEIGHT - (v - lo) / (hi - lo) * PANEL_HEIGHT;
        let _ = writeln!(
            svg,
            r##"<g class="panel"><rect x="{MARGIN}" y="{top}" width="{plot_w}" height="{PANEL_HEIGHT}" fill="none" stroke="#444"/>"##
        );
        let _ = writeln!(svg, r#"<text x="{MARGIN}" y="{}" font-weight="bold">{}</text>"#, top - 8.0, panel.title);
        let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="end">{hi:.4e}</text>"#, MARGIN - 4.0, top + 10.0);
        let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="end">{lo:.4e}</text>"#, MARGIN - 4.0, top + PANEL_HEIGHT);
        let _ = writeln!(svg, r#"<text x="{MARGIN}" y="{}">{t0}</text>"#, top + PANEL_HEIGHT + 14.0);
        let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="end">{t1}</text>"#, MARGIN + plot_w, top + PANEL_HEIGHT + 14.0);
        for (s, (name, values)) in panel.series.iter().enumerate() {
            let color = COLORS[s % COLORS.len()];
            let mut points = String::new();
            for (k, v) in values.iter().enumerate().filter(|(k, _)| keep(*k)) {
                let _ = write!(points, "{:.2},{:.2} ", sx(traj.t[k]), sy(*v));
            }
            let _ = writeln!(
                svg,
                r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
                points.trim_end()
            );
            let _ = writeln!(
                svg,
                r#"<text x="{}" y="{}" fill="{color}">{name}</text>"#,
                MARGIN + plot_w - 80.0,
                top + 16.0 + 14.0 * s as f64
            );
        }
        let _ = writeln!(svg, "</g>");
    }
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn four_panels_and_flagged_rows_skipped() {
        let traj = Trajectory {
            t: vec![0.0, 0.5, 1.0],
            x: vec![vec![1.0, 2.0, 3.0]],
            u: vec![vec![0.0, 0.0, 0.0]],
            lambda: vec![vec![1.0, 2.0, 1e9]],
            h: vec![0.0, 1.0, 1e9],
            flagged: vec![false, false, true],
        };
        let svg = render(&traj);
        assert_eq!(svg.matches(r#"<g class="panel">"#).count(), 4);
        assert!(!svg.contains("1.0000e9"));
        assert!(svg.ends_with("</svg>\n"));
    }
}
