//! Closed-polyline geometry: areas, uniform resampling, curvature,
//! energy, gradient, and normal displacement between interfaces.
//!
//! Sign conventions, frozen once: boundaries run counterclockwise with
//! the region on the left, the outward normal is `(t_y, -t_x)` for unit
//! tangent `t`, and the curvature of a circle is `-1/R`. Under these the
//! driving gradient of the energy `E = ∮(κ²/2 + λ) ds` is
//! `∂²_s κ + κ³/2 - λκ` and the interface law is `V = -∇E` with `V`
//! positive outward (so circles grow at rate `1/(2R³)` when λ = 0).

use super::GeometryError;

/// An ordered polyline, closed (implicit last→first segment) or open.
///
/// Contour extraction can also produce strands that wind around the
/// periodic domain; those are marked open, since in the plane they have
/// no closing segment (and no well-defined enclosed area).
#[derive(Debug, Clone, PartialEq)]
pub struct PolyCurve {
    pub points: Vec<[f64; 2]>,
    pub closed: bool,
}

impl PolyCurve {
    pub fn new(points: Vec<[f64; 2]>, closed: bool) -> Self {
        PolyCurve { points, closed }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Segment count: one fewer than vertices for open curves.
    pub fn segment_count(&self) -> usize {
        if self.closed {
            self.points.len()
        } else {
            self.points.len().saturating_sub(1)
        }
    }

    fn segment(&self, k: usize) -> ([f64; 2], [f64; 2]) {
        let m = self.points.len();
        (self.points[k], self.points[(k + 1) % m])
    }

    pub fn perimeter(&self) -> f64 {
        (0..self.segment_count())
            .map(|k| {
                let (a, b) = self.segment(k);
                (b[0] - a[0]).hypot(b[1] - a[1])
            })
            .sum()
    }

    /// Vertex average; used to pair components between steps.
    pub fn centroid(&self) -> [f64; 2] {
        let m = self.points.len().max(1) as f64;
        let (sx, sy) = self
            .points
            .iter()
            .fold((0.0, 0.0), |(sx, sy), p| (sx + p[0], sy + p[1]));
        [sx / m, sy / m]
    }
}

/// Signed shoelace area: positive for counterclockwise loops, negative
/// for holes.
pub fn curve_area(c: &PolyCurve) -> Result<f64, GeometryError> {
    if !c.closed {
        return Err(GeometryError::OpenCurve);
    }
    if c.points.len() < 3 {
        return Err(GeometryError::TooFewVertices {
            got: c.points.len(),
            need: 3,
        });
    }
    let mut acc = 0.0;
    for k in 0..c.points.len() {
        let (a, b) = c.segment(k);
        acc += a[0] * b[1] - b[0] * a[1];
    }
    Ok(0.5 * acc)
}

/// Resamples to `m` vertices at equal arclength spacing by linear
/// interpolation along the polyline (equal segments for closed curves,
/// endpoints preserved for open ones).
pub fn resample_uniform(c: &PolyCurve, m: usize) -> Result<PolyCurve, GeometryError> {
    if m < 16 {
        return Err(GeometryError::InvalidArgument(format!(
            "resample target {m} is below the minimum of 16"
        )));
    }
    if c.points.len() < 3 {
        return Err(GeometryError::TooFewVertices {
            got: c.points.len(),
            need: 3,
        });
    }
    let segs = c.segment_count();
    let mut cum = Vec::with_capacity(segs + 1);
    cum.push(0.0);
    for k in 0..segs {
        let (a, b) = c.segment(k);
        cum.push(cum[k] + (b[0] - a[0]).hypot(b[1] - a[1]));
    }
    let total = *cum.last().unwrap();
    if total <= 0.0 {
        return Err(GeometryError::InvalidArgument(
            "curve has zero length".into(),
        ));
    }
    let denom = if c.closed { m as f64 } else { (m - 1) as f64 };
    let mut out = Vec::with_capacity(m);
    let mut seg = 0usize;
    for k in 0..m {
        let s = total * k as f64 / denom;
        while seg + 1 < cum.len() - 1 && cum[seg + 1] <= s {
            seg += 1;
        }
        let (a, b) = c.segment(seg);
        let span = cum[seg + 1] - cum[seg];
        let t = if span > 0.0 { (s - cum[seg]) / span } else { 0.0 };
        out.push([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]);
    }
    Ok(PolyCurve::new(out, c.closed))
}

/// Discrete differential geometry of a uniformly resampled curve.
#[derive(Debug, Clone)]
pub struct CurveGeometry {
    pub points: Vec<[f64; 2]>,
    pub closed: bool,
    /// Cumulative arclength per vertex, starting at 0.
    pub arclengths: Vec<f64>,
    /// Signed curvature per vertex (circle: -1/R).
    pub kappa: Vec<f64>,
    /// Second arclength derivative of κ per vertex.
    pub kappa_ss: Vec<f64>,
    /// Mean vertex spacing.
    pub spacing: f64,
}

impl CurveGeometry {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn total_length(&self) -> f64 {
        let m = self.points.len() as f64;
        if self.closed {
            self.spacing * m
        } else {
            *self.arclengths.last().unwrap_or(&0.0)
        }
    }

    /// Outward unit normals `(t_y, -t_x)` from central-difference
    /// tangents (one-sided at open ends).
    pub fn normals(&self) -> Vec<[f64; 2]> {
        normals_of(&self.points, self.closed)
    }
}

fn normals_of(points: &[[f64; 2]], closed: bool) -> Vec<[f64; 2]> {
    let m = points.len();
    (0..m)
        .map(|i| {
            let (prev, next) = if closed {
                (points[(i + m - 1) % m], points[(i + 1) % m])
            } else {
                (points[i.saturating_sub(1)], points[(i + 1).min(m - 1)])
            };
            let tx = next[0] - prev[0];
            let ty = next[1] - prev[1];
            let norm = tx.hypot(ty).max(1e-300);
            [ty / norm, -tx / norm]
        })
        .collect()
}

/// Wraps an angle difference into (-π, π].
fn wrap_angle(d: f64) -> f64 {
    use std::f64::consts::{PI, TAU};
    let mut w = d % TAU;
    if w > PI {
        w -= TAU;
    } else if w <= -PI {
        w += TAU;
    }
    w
}

/// Allowed relative deviation of vertex spacing before curvature
/// stencils (which assume uniform spacing) are refused.
const SPACING_TOLERANCE_PERCENT: f64 = 1.0;

/// Curvature and its second arclength derivative by periodic central
/// differences of the tangent angle. Requires uniform spacing — run
/// [`resample_uniform`] first.
pub fn curve_geometry(c: &PolyCurve) -> Result<CurveGeometry, GeometryError> {
    let m = c.points.len();
    if m < 16 {
        return Err(GeometryError::TooFewVertices { got: m, need: 16 });
    }
    let segs = c.segment_count();
    let mut lengths = Vec::with_capacity(segs);
    let mut thetas = Vec::with_capacity(segs);
    for k in 0..segs {
        let (a, b) = c.segment(k);
        let dx = b[0] - a[0];
        let dy = b[1] - a[1];
        lengths.push(dx.hypot(dy));
        thetas.push(dy.atan2(dx));
    }
    let spacing = lengths.iter().sum::<f64>() / segs as f64;
    let max_dev = lengths
        .iter()
        .map(|l| (l - spacing).abs() / spacing * 100.0)
        .fold(0.0, f64::max);
    if max_dev > SPACING_TOLERANCE_PERCENT {
        return Err(GeometryError::NonUniformSpacing {
            max_dev,
            limit: SPACING_TOLERANCE_PERCENT,
        });
    }
    let mut arclengths = Vec::with_capacity(m);
    arclengths.push(0.0);
    for k in 0..m - 1 {
        arclengths.push(arclengths[k] + lengths[k]);
    }
    // κ at vertex i is the turn from segment i-1 to segment i per unit
    // arclength; counterclockwise turning (positive Δθ) is negative
    // curvature under the outward-normal convention.
    let kappa: Vec<f64> = (0..m)
        .map(|i| {
            let (prev, here) = if c.closed {
                (thetas[(i + segs - 1) % segs], thetas[i % segs])
            } else if i == 0 {
                (thetas[0], thetas[0])
            } else if i >= segs {
                (thetas[segs - 1], thetas[segs - 1])
            } else {
                (thetas[i - 1], thetas[i])
            };
            -wrap_angle(here - prev) / spacing
        })
        .collect();
    // Open ends have no turn information; copy the nearest interior value
    // so downstream sums see a sensible (flat-extended) profile.
    let mut kappa = kappa;
    if !c.closed && m >= 3 {
        kappa[0] = kappa[1];
        kappa[m - 1] = kappa[m - 2];
    }
    let kappa_ss: Vec<f64> = (0..m)
        .map(|i| {
            let (a, b, c_) = if c.closed {
                (
                    kappa[(i + m - 1) % m],
                    kappa[i],
                    kappa[(i + 1) % m],
                )
            } else if i == 0 || i == m - 1 {
                return 0.0;
            } else {
                (kappa[i - 1], kappa[i], kappa[i + 1])
            };
            (a - 2.0 * b + c_) / (spacing * spacing)
        })
        .collect();
    Ok(CurveGeometry {
        points: c.points.clone(),
        closed: c.closed,
        arclengths,
        kappa,
        kappa_ss,
        spacing,
    })
}

/// Energy `∮ (κ²/2 + λ) ds` by vertex-wise quadrature (exact trapezoid
/// for uniform closed curves).
pub fn willmore_energy(geom: &CurveGeometry, lambda: f64) -> f64 {
    let mut acc = 0.0;
    for (i, k) in geom.kappa.iter().enumerate() {
        // Endpoints of open strands get trapezoid half-weights.
        let w = if !geom.closed && (i == 0 || i == geom.kappa.len() - 1) {
            0.5 * geom.spacing
        } else {
            geom.spacing
        };
        acc += (0.5 * k * k + lambda) * w;
    }
    acc
}

/// The driving gradient `∇E = ∂²_s κ + κ³/2 - λκ` per vertex; the
/// interface law is `V = -∇E`.
pub fn l2_gradient(geom: &CurveGeometry, lambda: f64) -> Vec<f64> {
    geom.kappa
        .iter()
        .zip(&geom.kappa_ss)
        .map(|(k, kss)| kss + 0.5 * k * k * k - lambda * k)
        .collect()
}

fn cross(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

/// Signed distance from each vertex of `old` along its outward normal to
/// the nearest crossing of `new_curves` (positive = outward). Vertices
/// whose normal ray meets nothing within `±window` get `None`.
pub fn normal_displacement(
    old: &PolyCurve,
    new_curves: &[PolyCurve],
    window: f64,
) -> Result<Vec<Option<f64>>, GeometryError> {
    if old.points.len() < 3 {
        return Err(GeometryError::TooFewVertices {
            got: old.points.len(),
            need: 3,
        });
    }
    if new_curves.is_empty() {
        return Err(GeometryError::InvalidArgument(
            "no target curves to intersect".into(),
        ));
    }
    let normals = normals_of(&old.points, old.closed);
    let mut out = Vec::with_capacity(old.points.len());
    for (p, nrm) in old.points.iter().zip(&normals) {
        let mut best: Option<f64> = None;
        for curve in new_curves {
            for k in 0..curve.segment_count() {
                let (a, b) = curve.segment(k);
                let d = [b[0] - a[0], b[1] - a[1]];
                let denom = cross(*nrm, d);
                if denom.abs() < 1e-300 {
                    continue;
                }
                let w = [a[0] - p[0], a[1] - p[1]];
                let s = cross(w, d) / denom;
                let u = cross(w, *nrm) / denom;
                // Slack on the segment parameter so a ray through a shared
                // vertex cannot fall between both adjacent segments.
                if (-1e-9..1.0 + 1e-9).contains(&u) && s.abs() <= window {
                    if best.map_or(true, |b| s.abs() < b.abs()) {
                        best = Some(s);
                    }
                }
            }
        }
        out.push(best);
    }
    Ok(out)
}

/// Minimum Euclidean distance from a point to any segment of any curve.
pub fn distance_to_curves(p: [f64; 2], curves: &[PolyCurve]) -> f64 {
    let mut best = f64::INFINITY;
    for curve in curves {
        for k in 0..curve.segment_count() {
            let (a, b) = curve.segment(k);
            let dx = b[0] - a[0];
            let dy = b[1] - a[1];
            let len_sq = dx * dx + dy * dy;
            let t = if len_sq > 0.0 {
                (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len_sq).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let qx = a[0] + t * dx;
            let qy = a[1] + t * dy;
            best = best.min((p[0] - qx).hypot(p[1] - qy));
        }
    }
    best
}
