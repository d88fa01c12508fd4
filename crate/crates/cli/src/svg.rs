//! Minimal SVG emitter: density heat map (time across, coordinate up) with
//! trajectory polylines on top.

use std::fmt::Write as _;

use pilotwave::scenarios::PlotData;

const W: f64 = 800.0;
const H: f64 = 500.0;
const MARGIN: f64 = 50.0;
const MAX_ROWS: usize = 200;

/// Linear white-to-navy map for `s` in `[0, 1]`.
fn color(s: f64) -> String {
    let s = s.clamp(0.0, 1.0);
    let lerp = |a: f64, b: f64| (a + (b - a) * s).round() as u8;
    format!("#{:02x}{:02x}{:02x}", lerp(255.0, 8.0), lerp(255.0, 29.0), lerp(255.0, 88.0))
}

pub fn render(plot: &PlotData) -> String {
    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    )
    .unwrap();
    writeln!(s, r#"<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>"#).unwrap();
    let (Some(&t0), Some(&t1)) = (plot.times.first(), plot.times.last()) else {
        s.push_str("</svg>\n");
        return s;
    };
    let (x0, x1) = (plot.axis[0], plot.axis[plot.axis.len() - 1]);
    let (pw, ph) = (W - 2.0 * MARGIN, H - 2.0 * MARGIN);
    let span_t = (t1 - t0).max(f64::MIN_POSITIVE);
    let px = |t: f64| MARGIN + (t - t0) / span_t * pw;
    let py = |x: f64| MARGIN + (x1 - x) / (x1 - x0) * ph;

    // coarse rows: average neighbouring grid points
    let stride = plot.axis.len().div_ceil(MAX_ROWS);
    let peak = plot.density.iter().flatten().cloned().fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let cw = pw / plot.times.len() as f64;
    let rh = ph * stride as f64 / plot.axis.len() as f64;
    for (i, row) in plot.density.iter().enumerate() {
        for (j, chunk) in row.chunks(stride).enumerate() {
            let d = chunk.iter().sum::<f64>() / chunk.len() as f64;
            if d < 1e-3 * peak {
                continue;
            }
            let x = MARGIN + i as f64 * cw;
            let y = MARGIN + ph - (j + 1) as f64 * rh;
            writeln!(
                s,
                r#"<rect x="{x:.3}" y="{y:.3}" width="{:.3}" height="{:.3}" fill="{}"/>"#,
                cw + 0.5,
                rh + 0.5,
                color(d / peak)
            )
            .unwrap();
        }
    }
    for tr in &plot.traces {
        if tr.len() < 2 {
            continue;
        }
        let pts: Vec<String> = tr.iter().map(|&(t, x)| format!("{:.3},{:.3}", px(t), py(x))).collect();
        writeln!(s, r##"<polyline fill="none" stroke="#c0392b" stroke-width="0.8" points="{}"/>"##, pts.join(" ")).unwrap();
    }
    writeln!(
        s,
        r#"<rect x="{MARGIN}" y="{MARGIN}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    )
    .unwrap();
    let label = |s: &mut String, x: f64, y: f64, anchor: &str, text: String| {
        writeln!(s, r#"<text x="{x:.1}" y="{y:.1}" font-family="sans-serif" font-size="12" text-anchor="{anchor}">{text}</text>"#).unwrap();
    };
    label(&mut s, MARGIN, H - MARGIN + 18.0, "start", format!("t = {t0:.2}"));
    label(&mut s, W - MARGIN, H - MARGIN + 18.0, "end", format!("t = {t1:.2}"));
    label(&mut s, MARGIN - 6.0, MARGIN + 4.0, "end", format!("{x1:.1}"));
    label(&mut s, MARGIN - 6.0, H - MARGIN, "end", format!("{x0:.1}"));
    label(&mut s, W / 2.0, MARGIN - 16.0, "middle", format!("|psi|^2 marginal of {}", plot.coord));
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plot() -> PlotData {
        PlotData {
            coord: "x".into(),
            axis: (0..10).map(|i| i as f64).collect(),
            times: vec![0.0, 1.0],
            density: vec![vec![0.0, 1.0, 2.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]; 2],
            traces: vec![vec![(0.0, 2.0), (1.0, 3.0)]],
        }
    }

    #[test]
    fn emits_cells_and_polylines() {
        let s = render(&plot());
        assert!(s.starts_with("<svg") && s.ends_with("</svg>\n"));
        assert_eq!(s.matches("<polyline").count(), 1);
        // 3 non-empty cells per column, two columns, plus background and frame
        assert_eq!(s.matches("<rect").count(), 3 * 2 + 2);
        assert_eq!(s, render(&plot()));
    }

    #[test]
    fn empty_plot_is_valid() {
        let s = render(&PlotData::default());
        assert!(s.ends_with("</svg>\n"));
    }

    #[test]
    fn color_map_ends() {
        assert_eq!(color(0.0), "#ffffff");
        assert_eq!(color(1.0), "#081d58");
    }
}
