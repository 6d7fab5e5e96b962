//! Shapes, rasterization, contour extraction, and discrete curve geometry.
//!
//! Initial regions are analytic shapes sampled at cell centers. Evolved
//! regions come back out of the solver as 1/2-level contours of the
//! combination field, which this module polygonizes (periodic marching
//! squares), resamples to uniform arclength, and differentiates to get
//! curvature, Willmore energy, the flow's driving gradient, and normal
//! displacements between successive interfaces.

mod contour;
mod curve;
mod output;

pub use contour::extract_contours;
pub use curve::{
    curve_area, curve_geometry, distance_to_curves, l2_gradient, normal_displacement,
    resample_uniform, willmore_energy, CurveGeometry, PolyCurve,
};
pub use output::{svg_overlay, write_curve_csv, SvgLayer, SVG_PALETTE};

use thiserror::Error;

use crate::spectral::{GridSpec, IndicatorField};

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("contour stitching left an open chain of {got} segments (expected closed loops)")]
    OpenContour { got: usize },
    #[error("curve is open where a closed curve is required")]
    OpenCurve,
    #[error("curve has {got} vertices, need at least {need}")]
    TooFewVertices { got: usize, need: usize },
    #[error("vertex spacing varies by {max_dev:.2}% (> {limit}%); resample the curve first")]
    NonUniformSpacing { max_dev: f64, limit: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// Axis a band is bounded along (a "horizontal" band is bounded in y).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
}

/// Analytic initial regions. Cassini ovals and the five-petaled rose are
/// centered at the domain center; the circle and half-plane carry their
/// own placement.
#[derive(Debug, Clone, PartialEq)]
pub enum Shape {
    Circle {
        cx: f64,
        cy: f64,
        radius: f64,
    },
    /// `{ |axis coordinate − side/2| ≤ half_width }`, spanning the
    /// other axis completely.
    Band {
        axis: Axis,
        half_width: f64,
    },
    /// `{ ⟨p, normal⟩ ≤ offset }` with `normal` the outward direction.
    HalfPlane {
        normal: [f64; 2],
        offset: f64,
    },
    /// `(x²+y²)² − 2b²(x²−y²) ≤ a⁴−b⁴` in centered coordinates; connected
    /// (peanut-shaped) when a ≥ b, with a waist that thins as b → a.
    Cassini {
        a: f64,
        b: f64,
    },
    /// Five-petaled rose: `ρ ≤ max{0.01, r(θ)²}` with
    /// `r = 1/2 + (16c⁵ − 20c³ + 5c)/3`, `c = cos θ` (so the Chebyshev
    /// polynomial makes `r` oscillate five times per turn).
    Rose,
}

impl Shape {
    /// Membership test at a physical point; `side` fixes the domain
    /// center for the centered shapes.
    pub fn contains(&self, x: f64, y: f64, side: f64) -> bool {
        let half = 0.5 * side;
        match *self {
            Shape::Circle { cx, cy, radius } => {
                let dx = x - cx;
                let dy = y - cy;
                dx * dx + dy * dy <= radius * radius
            }
            Shape::Band { axis, half_width } => {
                let c = match axis {
                    Axis::X => x - half,
                    Axis::Y => y - half,
                };
                c.abs() <= half_width
            }
            Shape::HalfPlane { normal, offset } => x * normal[0] + y * normal[1] <= offset,
            Shape::Cassini { a, b } => {
                let dx = x - half;
                let dy = y - half;
                let q = dx * dx + dy * dy;
                q * q - 2.0 * b * b * (dx * dx - dy * dy) <= a.powi(4) - b.powi(4)
            }
            Shape::Rose => {
                let dx = x - half;
                let dy = y - half;
                let rho = dx.hypot(dy);
                if rho < 1e-12 {
                    return true;
                }
                let c = dx / rho;
                let cheb5 = 16.0 * c.powi(5) - 20.0 * c.powi(3) + 5.0 * c;
                let r = 0.5 + cheb5 / 3.0;
                rho <= (r * r).max(0.01)
            }
        }
    }

    /// Cell-center point sampling: a cell is inside iff its center is.
    pub fn rasterize(&self, grid: GridSpec) -> IndicatorField {
        IndicatorField::from_fn(grid, |x, y| self.contains(x, y, grid.side))
    }
}

/// Minimum distance, in whole cells, from any inside cell to the
/// periodic seam. Shapes need clearance ≥ 4 cells or wrap-around images
/// contaminate the evolution; the flow loop stops below 8.
pub fn seam_clearance(ind: &IndicatorField) -> usize {
    let n = ind.grid().n;
    let mut best = n;
    for j in 0..n {
        for i in 0..n {
            if ind.get(i, j) {
                let d = i.min(n - 1 - i).min(j).min(n - 1 - j);
                best = best.min(d);
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn circle_rasterization_area() {
        let grid = GridSpec::new(1.0, 1024).unwrap();
        let shape = Shape::Circle {
            cx: 0.5,
            cy: 0.5,
            radius: 0.25,
        };
        let ind = shape.rasterize(grid);
        let exact = PI * 0.25 * 0.25;
        let tol = 2.0 * (2.0 * PI * 0.25) * grid.cell();
        assert!(
            (ind.area() - exact).abs() < tol,
            "pixel area {} vs {exact}",
            ind.area()
        );
    }

    #[test]
    fn full_domain_shape_is_all_ones() {
        let grid = GridSpec::new(1.0, 32).unwrap();
        let shape = Shape::HalfPlane {
            normal: [1.0, 0.0],
            offset: 2.0,
        };
        assert!(shape.rasterize(grid).is_full());
    }

    #[test]
    fn cassini_is_connected_single_contour() {
        let grid = GridSpec::new(5.0, 1024).unwrap();
        let shape = Shape::Cassini { a: 0.6825, b: 0.678 };
        let ind = shape.rasterize(grid);
        assert!(!ind.is_empty());
        // Extremes: reaches x = ±√(a²+b²) on the long axis, pinches to
        // y = ±√(a²−b²) at the waist, which must still be several cells.
        let long = (0.6825f64.powi(2) + 0.678f64.powi(2)).sqrt();
        let waist = (0.6825f64.powi(2) - 0.678f64.powi(2)).sqrt();
        assert!((long - 0.962).abs() < 1e-3);
        assert!((waist - 0.0783).abs() < 1e-3);
        assert!(waist > 4.0 * grid.cell(), "waist under-resolved");
        // The waist is inside (connected region): center cell is inside.
        assert!(shape.contains(2.5, 2.5, 5.0));
        let curves = extract_contours(
            &crate::spectral::single_scale_field(&ind, grid.cell().powi(4), 0.0).unwrap(),
            0.5,
        )
        .unwrap();
        assert_eq!(curves.len(), 1, "expected a single closed interface");
    }

    #[test]
    fn rose_radius_stays_in_band() {
        // r(θ) ∈ [1/6, 5/6] so ρ ≤ r² ∈ [1/36, 25/36]; the 0.01 floor
        // never binds (1/36 > 0.01).
        for k in 0..500 {
            let th = 2.0 * PI * k as f64 / 500.0;
            let c: f64 = th.cos();
            let r = 0.5 + (16.0 * c.powi(5) - 20.0 * c.powi(3) + 5.0 * c) / 3.0;
            assert!(r >= 1.0 / 6.0 - 1e-12 && r <= 5.0 / 6.0 + 1e-12);
            assert!(r * r > 0.01);
        }
        let grid = GridSpec::new(5.0, 512).unwrap();
        let ind = Shape::Rose.rasterize(grid);
        assert!(!ind.is_empty());
        assert!(ind.area() < 25.0 * 0.2, "rose should be a small region");
    }

    #[test]
    fn seam_clearance_reports_cells() {
        let grid = GridSpec::new(1.0, 64).unwrap();
        let ind = Shape::Circle {
            cx: 0.5,
            cy: 0.5,
            radius: 0.25,
        }
        .rasterize(grid);
        let clear = seam_clearance(&ind);
        // Circle spans [0.25, 0.75]: 16 cells of margin, minus the
        // half-cell offsets.
        assert!((15..=17).contains(&clear), "clearance {clear}");
        let band = Shape::Band {
            axis: Axis::Y,
            half_width: 0.5,
        }
        .rasterize(grid);
        assert_eq!(seam_clearance(&band), 0);
    }
}
