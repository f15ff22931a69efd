use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::numerics::Matrix;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 60.0;
const TOP: f64 = 20.0;
const RIGHT: f64 = 500.0;
const BOTTOM: f64 = 440.0;
const MARGIN: f64 = 0.05;

pub const CLASS_COLORS: [&str; 3] = ["#1b9e77", "#d95f02", "#7570b3"];
pub const CLASS_NAMES: [&str; 3] = ["low", "medium", "high"];

/// Padded data interval; a degenerate axis gets unit width.
fn axis_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let span = if hi > lo { hi - lo } else { 1.0 };
    (lo - MARGIN * span, hi + MARGIN * span)
}

/// Scatter of a 2-D embedding as SVG, one color per stress class.
pub fn plot_embedding(coords: &Matrix, labels: &[u8]) -> Result<String> {
    if coords.cols() != 2 {
        return Err(Error::InvalidArgument(format!(
            "plot needs 2 columns, embedding has {}",
            coords.cols()
        )));
    }
    if coords.rows() != labels.len() {
        return Err(Error::InvalidInput(format!(
            "{} points but {} labels",
            coords.rows(),
            labels.len()
        )));
    }
    if coords.rows() == 0 || !coords.is_finite() {
        return Err(Error::InvalidInput("plot needs at least one finite point".into()));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l > 2) {
        return Err(Error::InvalidInput(format!("label {bad} outside 0..=2")));
    }
    let n = coords.rows();
    let (x0, x1) = axis_range((0..n).map(|i| coords[(i, 0)]));
    let (y0, y1) = axis_range((0..n).map(|i| coords[(i, 1)]));
    let px = |x: f64| LEFT + (x - x0) / (x1 - x0) * (RIGHT - LEFT);
    let py = |y: f64| BOTTOM - (y - y0) / (y1 - y0) * (BOTTOM - TOP);

    let mut s = String::new();
    let w = &mut s;
    writeln!(
        w,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
    )
    .unwrap();
    writeln!(w, r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#).unwrap();
    writeln!(
        w,
        r#"<rect x="{LEFT}" y="{TOP}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        RIGHT - LEFT,
        BOTTOM - TOP
    )
    .unwrap();
    writeln!(w, r#"<text x="{LEFT}" y="{}" text-anchor="start">{:.3}</text>"#, BOTTOM + 15.0, x0).unwrap();
    writeln!(w, r#"<text x="{RIGHT}" y="{}" text-anchor="end">{:.3}</text>"#, BOTTOM + 15.0, x1).unwrap();
    writeln!(w, r#"<text x="{}" y="{BOTTOM}" text-anchor="end">{:.3}</text>"#, LEFT - 4.0, y0).unwrap();
    writeln!(w, r#"<text x="{}" y="{}" text-anchor="end">{:.3}</text>"#, LEFT - 4.0, TOP + 10.0, y1).unwrap();
    writeln!(w, r#"<text x="{}" y="{}" text-anchor="middle">dim_0</text>"#, (LEFT + RIGHT) / 2.0, BOTTOM + 30.0).unwrap();
    writeln!(w, r#"<g id="points">"#).unwrap();
    for (i, &l) in labels.iter().enumerate() {
        writeln!(
            w,
            r#"<circle cx="{:.3}" cy="{:.3}" r="3" fill="{}" fill-opacity="0.8"/>"#,
            px(coords[(i, 0)]),
            py(coords[(i, 1)]),
            CLASS_COLORS[l as usize]
        )
        .unwrap();
    }
    writeln!(w, "</g>").unwrap();
    writeln!(w, r#"<g id="legend">"#).unwrap();
    for (k, (color, name)) in CLASS_COLORS.iter().zip(CLASS_NAMES).enumerate() {
        let y = TOP + 10.0 + 20.0 * k as f64;
        writeln!(
            w,
            r#"<g class="legend-entry"><rect x="{}" y="{y}" width="12" height="12" fill="{color}"/><text x="{}" y="{}">{k} {name}</text></g>"#,
            RIGHT + 20.0,
            RIGHT + 38.0,
            y + 10.0
        )
        .unwrap();
    }
    writeln!(w, "</g>").unwrap();
    writeln!(w, "</svg>").unwrap();
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn three() -> Matrix {
        Matrix::from_rows(&[vec![0.0, 0.0], vec![1.0, 2.0], vec![-3.0, 0.5]]).unwrap()
    }

    #[test]
    fn counts_circles_and_legend() {
        let svg = plot_embedding(&three(), &[0, 1, 2]).unwrap();
        assert_eq!(svg.matches("<circle").count(), 3);
        assert_eq!(svg.matches("legend-entry").count(), 3);
        for c in CLASS_COLORS {
            assert!(svg.contains(c));
        }
    }

    #[test]
    fn deterministic() {
        assert_eq!(
            plot_embedding(&three(), &[0, 1, 2]).unwrap(),
            plot_embedding(&three(), &[0, 1, 2]).unwrap()
        );
    }

    #[test]
    fn extremes_inside_plot_area() {
        let svg = plot_embedding(&three(), &[2, 2, 0]).unwrap();
        for circle in svg.lines().filter(|l| l.starts_with("<circle")) {
            let attr = |name: &str| -> f64 {
                let start = circle.find(&format!("{name}=\"")).unwrap() + name.len() + 2;
                let rest = &circle[start..];
                rest[..rest.find('"').unwrap()].parse().unwrap()
            };
            let (cx, cy) = (attr("cx"), attr("cy"));
            assert!(cx > LEFT && cx < RIGHT && cy > TOP && cy < BOTTOM, "{circle}");
            assert!(cx >= 0.0 && cx <= WIDTH && cy >= 0.0 && cy <= HEIGHT);
        }
        // x = -3 sits exactly 5% of the span inside the left edge
        let expect = LEFT + 0.05 / 1.1 * (RIGHT - LEFT);
        assert!(svg.contains(&format!("cx=\"{expect:.3}\"")));
    }

    #[test]
    fn single_point_and_errors() {
        let one = Matrix::from_rows(&[vec![5.0, 5.0]]).unwrap();
        assert!(plot_embedding(&one, &[1]).unwrap().contains("cx=\"280.000\""));
        let d3 = Matrix::zeros(2, 3);
        assert!(matches!(plot_embedding(&d3, &[0, 1]), Err(Error::InvalidArgument(_))));
        assert!(plot_embedding(&three(), &[0, 1]).is_err());
        assert!(plot_embedding(&three(), &[0, 1, 3]).is_err());
    }
}
