//! Plain-text artifacts for curves: per-vertex CSV tables and SVG
//! overlays of several contour families.
//!
//! Both writers are deterministic: no timestamps, no environment
//! queries, and floating-point values are printed with Rust's shortest
//! round-trip formatting, so identical inputs give identical bytes.

use std::io::{self, Write};

use super::{CurveGeometry, PolyCurve};

/// Writes one row per vertex: arclength, position, curvature, its second
/// arclength derivative, and the energy gradient sampled there.
pub fn write_curve_csv(
    out: &mut impl Write,
    geom: &CurveGeometry,
    grad: &[f64],
) -> io::Result<()> {
    writeln!(out, "s,x,y,kappa,kappa_ss,gradE")?;
    for i in 0..geom.len() {
        let g = grad.get(i).copied().unwrap_or(f64::NAN);
        writeln!(
            out,
            "{},{},{},{},{},{}",
            geom.arclengths[i],
            geom.points[i][0],
            geom.points[i][1],
            geom.kappa[i],
            geom.kappa_ss[i],
            g
        )?;
    }
    Ok(())
}

/// One family of curves drawn in a single color.
pub struct SvgLayer<'a> {
    pub label: String,
    pub color: String,
    pub curves: &'a [PolyCurve],
}

/// Fixed palette cycled by callers that build many layers.
pub const SVG_PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf",
];

/// Renders curve layers over the periodic domain `[0, side)²`.
///
/// The viewBox is the domain itself; the y axis is flipped so that
/// mathematical "up" is up on screen. `stroke` should be about one grid
/// cell. A small legend in the top-left names each layer.
pub fn svg_overlay(
    out: &mut impl Write,
    side: f64,
    stroke: f64,
    layers: &[SvgLayer<'_>],
) -> io::Result<()> {
    writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {side} {side}\">"
    )?;
    writeln!(
        out,
        "<rect x=\"0\" y=\"0\" width=\"{side}\" height=\"{side}\" fill=\"white\" stroke=\"#999\" stroke-width=\"{}\"/>",
        0.5 * stroke
    )?;
    for layer in layers {
        writeln!(out, "<g fill=\"none\" stroke=\"{}\" stroke-width=\"{stroke}\">", layer.color)?;
        for curve in layer.curves {
            if curve.points.is_empty() {
                continue;
            }
            let mut d = String::new();
            for (k, p) in curve.points.iter().enumerate() {
                let cmd = if k == 0 { 'M' } else { 'L' };
                // Flip y so the domain's upper half renders on top.
                d.push_str(&format!("{cmd}{} {} ", p[0], side - p[1]));
            }
            if curve.closed {
                d.push('Z');
            }
            writeln!(out, "<path d=\"{}\"/>", d.trim_end())?;
        }
        writeln!(out, "</g>")?;
    }
    // Legend: one swatch + label per layer, top-left corner.
    let font = 0.03 * side;
    for (k, layer) in layers.iter().enumerate() {
        let y = 0.04 * side + k as f64 * 0.04 * side;
        writeln!(
            out,
            "<line x1=\"{}\" y1=\"{y}\" x2=\"{}\" y2=\"{y}\" stroke=\"{}\" stroke-width=\"{}\"/>",
            0.02 * side,
            0.07 * side,
            layer.color,
            2.0 * stroke
        )?;
        writeln!(
            out,
            "<text x=\"{}\" y=\"{}\" font-size=\"{font}\" font-family=\"monospace\" fill=\"#333\">{}</text>",
            0.08 * side,
            y + 0.01 * side,
            escape_xml(&layer.label)
        )?;
    }
    writeln!(out, "</svg>")
}

fn escape_xml(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{curve_geometry, l2_gradient, resample_uniform};

    fn sample_curve() -> PolyCurve {
        let pts = (0..64)
            .map(|k| {
                let th = std::f64::consts::TAU * k as f64 / 64.0;
                [0.5 + 0.3 * th.cos(), 0.5 + 0.3 * th.sin()]
            })
            .collect();
        PolyCurve::new(pts, true)
    }

    #[test]
    fn csv_has_header_and_one_row_per_vertex() {
        let c = resample_uniform(&sample_curve(), 32).unwrap();
        let g = curve_geometry(&c).unwrap();
        let grad = l2_gradient(&g, 0.0);
        let mut buf = Vec::new();
        write_curve_csv(&mut buf, &g, &grad).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "s,x,y,kappa,kappa_ss,gradE");
        assert_eq!(lines.len(), 33);
        for line in &lines[1..] {
            assert_eq!(line.split(',').count(), 6);
            for tok in line.split(',') {
                tok.parse::<f64>().unwrap();
            }
        }
    }

    #[test]
    fn svg_is_wellformed_and_deterministic() {
        let c = sample_curve();
        let layers = [SvgLayer {
            label: "step 0 <t>".into(),
            color: SVG_PALETTE[0].into(),
            curves: std::slice::from_ref(&c),
        }];
        let render = || {
            let mut buf = Vec::new();
            svg_overlay(&mut buf, 1.0, 0.004, &layers).unwrap();
            buf
        };
        let a = render();
        let b = render();
        assert_eq!(a, b, "same input must give identical bytes");
        let text = String::from_utf8(a).unwrap();
        assert!(text.starts_with("<svg"));
        assert!(text.trim_end().ends_with("</svg>"));
        assert!(text.contains("path d=\"M"));
        assert!(text.contains("Z\""));
        assert!(text.contains("&lt;t&gt;"), "labels must be XML-escaped");
        assert!(!text.contains("<t>"));
    }
}
