//! Level-set extraction on the periodic grid by marching squares.
//!
//! Nodes are the cell centers of a [`ScalarField`]; each 2×2 block of
//! nodes (including the blocks that wrap across the domain seam) is
//! scanned for sign changes of `value - level`, and the resulting
//! oriented segments are chained into loops. Orientation keeps the
//! region `value ≥ level` on the left, so outer boundaries come out
//! counterclockwise (positive shoelace area) and holes clockwise.
//!
//! Loops that wind around the periodic domain (band edges) cannot close
//! in the plane; they are returned as open strands covering one period.
//!
//! Output order is the row-major scan order of the squares that seed
//! each loop, and every crossing coordinate is computed exactly once per
//! grid edge, so repeated runs on the same field are bit-identical.

use std::collections::HashMap;

use super::{GeometryError, PolyCurve};
use crate::spectral::ScalarField;

/// Loops shorter than this many vertices are grid-scale specks
/// (typically threshold noise a single cell wide) and are discarded.
const MIN_LOOP_VERTICES: usize = 8;

/// A grid edge between adjacent nodes, identified by its lower-left
/// node: `axis 0` runs from node `(i, j)` to `((i+1) mod n, j)`,
/// `axis 1` from `(i, j)` to `(i, (j+1) mod n)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct EdgeKey {
    axis: u8,
    i: u32,
    j: u32,
}

/// Extracts the level set `{field = level}` as oriented polylines.
///
/// The region `{field ≥ level}` lies on the left of every segment.
/// Contractible loops are closed curves; strands winding around the
/// periodic domain are open. Coordinates are unwrapped to the nearest
/// periodic image of their predecessor, so loops straddling the seam
/// come out geometrically contiguous (possibly extending outside
/// `[0, side)`).
pub fn extract_contours(
    field: &ScalarField,
    level: f64,
) -> Result<Vec<PolyCurve>, GeometryError> {
    if !level.is_finite() {
        return Err(GeometryError::InvalidArgument(format!(
            "contour level must be finite, got {level}"
        )));
    }
    let grid = field.grid();
    let n = grid.n;
    let side = grid.side;
    let cell = grid.cell();
    let vals = field.values();
    if vals.iter().any(|v| !v.is_finite()) {
        return Err(GeometryError::InvalidArgument(
            "field contains non-finite values".into(),
        ));
    }
    let inside = |i: usize, j: usize| vals[j * n + i] >= level;

    // Pass 1: one crossing point per grid edge whose endpoints straddle
    // the level. Sharing the point between the two adjacent squares keeps
    // chained loops exactly continuous.
    let mut crossings: HashMap<EdgeKey, [f64; 2]> = HashMap::new();
    for j in 0..n {
        for i in 0..n {
            let v0 = vals[j * n + i];
            let in0 = v0 >= level;
            let ie = (i + 1) % n;
            let ve = vals[j * n + ie];
            if (ve >= level) != in0 {
                let t = (level - v0) / (ve - v0);
                crossings.insert(
                    EdgeKey { axis: 0, i: i as u32, j: j as u32 },
                    [(i as f64 + 0.5 + t) * cell, (j as f64 + 0.5) * cell],
                );
            }
            let jn = (j + 1) % n;
            let vn = vals[jn * n + i];
            if (vn >= level) != in0 {
                let t = (level - v0) / (vn - v0);
                crossings.insert(
                    EdgeKey { axis: 1, i: i as u32, j: j as u32 },
                    [(i as f64 + 0.5) * cell, (j as f64 + 0.5 + t) * cell],
                );
            }
        }
    }
    if crossings.is_empty() {
        return Ok(Vec::new());
    }

    // Pass 2: per square, oriented entry→exit segments. Each crossed
    // edge is the entry of exactly one square and the exit of exactly
    // one neighbor, so the chains below are uniquely determined.
    let mut segments: Vec<(EdgeKey, EdgeKey)> = Vec::new();
    let mut entry_of: HashMap<EdgeKey, usize> = HashMap::new();
    for j in 0..n {
        for i in 0..n {
            let ie = (i + 1) % n;
            let jn = (j + 1) % n;
            let sw = inside(i, j);
            let se = inside(ie, j);
            let ne = inside(ie, jn);
            let nw = inside(i, jn);
            let case =
                (sw as usize) | (se as usize) << 1 | (ne as usize) << 2 | (nw as usize) << 3;
            if case == 0 || case == 15 {
                continue;
            }
            let s = EdgeKey { axis: 0, i: i as u32, j: j as u32 };
            let nn = EdgeKey { axis: 0, i: i as u32, j: jn as u32 };
            let w = EdgeKey { axis: 1, i: i as u32, j: j as u32 };
            let e = EdgeKey { axis: 1, i: ie as u32, j: j as u32 };
            let mut emit = |entry: EdgeKey, exit: EdgeKey| {
                let idx = segments.len();
                segments.push((entry, exit));
                let clash = entry_of.insert(entry, idx);
                debug_assert!(clash.is_none(), "edge entered twice");
            };
            match case {
                1 => emit(s, w),
                2 => emit(e, s),
                3 => emit(e, w),
                4 => emit(nn, e),
                6 => emit(nn, s),
                7 => emit(nn, w),
                8 => emit(w, nn),
                9 => emit(s, nn),
                11 => emit(e, nn),
                12 => emit(w, e),
                13 => emit(s, e),
                14 => emit(w, s),
                5 | 10 => {
                    // Saddle: resolve connectivity by the block average.
                    let avg = 0.25
                        * (vals[j * n + i]
                            + vals[j * n + ie]
                            + vals[jn * n + i]
                            + vals[jn * n + ie]);
                    let center_inside = avg >= level;
                    if case == 5 {
                        if center_inside {
                            emit(nn, w);
                            emit(s, e);
                        } else {
                            emit(s, w);
                            emit(nn, e);
                        }
                    } else if center_inside {
                        emit(w, s);
                        emit(e, nn);
                    } else {
                        emit(e, s);
                        emit(w, nn);
                    }
                }
                _ => unreachable!(),
            }
        }
    }

    // Pass 3: chain segments into loops, walking in emission order so
    // the result never depends on hash-map iteration order.
    let mut used = vec![false; segments.len()];
    let mut loops = Vec::new();
    for start in 0..segments.len() {
        if used[start] {
            continue;
        }
        let start_edge = segments[start].0;
        let mut points: Vec<[f64; 2]> = Vec::new();
        let mut cur = start;
        loop {
            used[cur] = true;
            let raw = crossings[&segments[cur].0];
            let p = match points.last() {
                None => raw,
                Some(prev) => nearest_image(raw, *prev, side),
            };
            // Squares sharing an exactly-on-level node can emit
            // coincident crossings; collapse them.
            let duplicate = points
                .last()
                .is_some_and(|q| (p[0] - q[0]).hypot(p[1] - q[1]) < 1e-9 * cell);
            if !duplicate {
                points.push(p);
            }
            let exit = segments[cur].1;
            if exit == start_edge {
                break;
            }
            cur = match entry_of.get(&exit) {
                Some(&k) if !used[k] => k,
                _ => {
                    return Err(GeometryError::OpenContour { got: points.len() });
                }
            };
        }
        // Collapse a duplicate seam between last and first vertex.
        if points.len() >= 2 {
            let first = points[0];
            let last = nearest_image(first, *points.last().unwrap(), side);
            if (last[0] - points.last().unwrap()[0]).hypot(last[1] - points.last().unwrap()[1])
                < 1e-9 * cell
            {
                points.pop();
            }
        }
        if points.len() < MIN_LOOP_VERTICES {
            continue;
        }
        // A loop that closes onto a distant periodic image of its start
        // winds around the domain: no closing segment exists in the plane.
        let first = points[0];
        let last = *points.last().unwrap();
        let gap = [first[0] - last[0], first[1] - last[1]];
        let winds = gap[0].abs() > 0.5 * side || gap[1].abs() > 0.5 * side;
        loops.push(PolyCurve::new(points, !winds));
    }
    Ok(loops)
}

/// Shifts `p` by whole periods so it lands nearest `reference`.
fn nearest_image(p: [f64; 2], reference: [f64; 2], side: f64) -> [f64; 2] {
    [
        p[0] - side * ((p[0] - reference[0]) / side).round(),
        p[1] - side * ((p[1] - reference[1]) / side).round(),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::curve_area;
    use crate::spectral::GridSpec;

    fn field_from(grid: GridSpec, f: impl Fn(f64, f64) -> f64) -> ScalarField {
        let n = grid.n;
        let mut vals = Vec::with_capacity(n * n);
        for j in 0..n {
            for i in 0..n {
                let (x, y) = grid.center(i, j);
                vals.push(f(x, y));
            }
        }
        ScalarField::new(grid, vals).unwrap()
    }

    #[test]
    fn linear_ramp_gives_two_winding_strands() {
        // f = x - 0.5 on a periodic domain crosses zero twice: once at
        // x = 0.5 and once at the seam. Both strands wind vertically.
        let grid = GridSpec::new(1.0, 64).unwrap();
        let f = field_from(grid, |x, _| x - 0.5);
        let loops = extract_contours(&f, 0.0).unwrap();
        assert_eq!(loops.len(), 2);
        let straight = loops
            .iter()
            .find(|c| c.points.iter().all(|p| (p[0] - 0.5).abs() < 1e-12))
            .expect("one strand exactly on x = 0.5");
        assert!(!straight.closed);
        assert_eq!(straight.len(), 64);
        for c in &loops {
            assert!(!c.closed, "ramp strands wind around the domain");
        }
    }

    #[test]
    fn smooth_disk_gives_one_ccw_loop_with_correct_radius() {
        let grid = GridSpec::new(1.0, 128).unwrap();
        let r0 = 0.3;
        // Smooth radial profile; the 1/2 level sits exactly at r = r0.
        let f = field_from(grid, |x, y| {
            let r = (x - 0.5).hypot(y - 0.5);
            1.0 / (1.0 + ((r - r0) / 0.05).exp())
        });
        let loops = extract_contours(&f, 0.5).unwrap();
        assert_eq!(loops.len(), 1);
        let c = &loops[0];
        assert!(c.closed);
        let mean_r = c
            .points
            .iter()
            .map(|p| (p[0] - 0.5).hypot(p[1] - 0.5))
            .sum::<f64>()
            / c.len() as f64;
        assert!((mean_r - r0).abs() < grid.cell(), "mean radius {mean_r}");
        let area = curve_area(c).unwrap();
        assert!(area > 0.0, "outer boundary must be counterclockwise");
        let expect = std::f64::consts::PI * r0 * r0;
        assert!((area - expect).abs() / expect < 0.01, "area {area}");
    }

    #[test]
    fn annulus_outer_ccw_inner_cw() {
        let grid = GridSpec::new(1.0, 128).unwrap();
        let f = field_from(grid, |x, y| {
            let r = (x - 0.5).hypot(y - 0.5);
            // Positive inside the annulus 0.15 < r < 0.35.
            ((r - 0.15) * (0.35 - r)) / 0.01
        });
        let loops = extract_contours(&f, 0.0).unwrap();
        assert_eq!(loops.len(), 2);
        let areas: Vec<f64> = loops.iter().map(|c| curve_area(c).unwrap()).collect();
        let outer = areas.iter().cloned().fold(f64::MIN, f64::max);
        let inner = areas.iter().cloned().fold(f64::MAX, f64::min);
        assert!(outer > 0.0 && inner < 0.0, "outer {outer}, inner {inner}");
        let net = outer + inner;
        let expect = std::f64::consts::PI * (0.35_f64.powi(2) - 0.15_f64.powi(2));
        assert!((net - expect).abs() / expect < 0.02, "net area {net}");
    }

    #[test]
    fn disk_across_the_seam_is_contiguous() {
        let grid = GridSpec::new(1.0, 128).unwrap();
        let r0 = 0.2;
        // Center at the domain corner: the disk is split into four
        // patches in [0, 1)² but is one loop on the torus.
        let f = field_from(grid, |x, y| {
            let dx = (x - 0.0).rem_euclid(1.0).min((0.0 - x).rem_euclid(1.0));
            let dy = (y - 0.0).rem_euclid(1.0).min((0.0 - y).rem_euclid(1.0));
            r0 - dx.hypot(dy)
        });
        let loops = extract_contours(&f, 0.0).unwrap();
        assert_eq!(loops.len(), 1);
        let c = &loops[0];
        assert!(c.closed);
        // Unwrapped vertices must be contiguous: no segment longer than
        // a few cells.
        for k in 0..c.segment_count() {
            let a = c.points[k];
            let b = c.points[(k + 1) % c.len()];
            let d = (b[0] - a[0]).hypot(b[1] - a[1]);
            assert!(d < 3.0 * grid.cell(), "jump of {d} at segment {k}");
        }
        let area = curve_area(c).unwrap();
        let expect = std::f64::consts::PI * r0 * r0;
        assert!((area - expect).abs() / expect < 0.01);
    }

    #[test]
    fn saddle_rich_field_extracts_consistently() {
        // An oscillatory field full of saddles: every loop must close,
        // and orientation must be consistent (net signed area equals
        // inside fraction minus background when no strand winds).
        let grid = GridSpec::new(1.0, 64).unwrap();
        let f = field_from(grid, |x, y| {
            (2.0 * std::f64::consts::TAU * x).sin() * (3.0 * std::f64::consts::TAU * y).cos()
                + 0.3 * (std::f64::consts::TAU * (x + 2.0 * y)).sin()
        });
        let loops = extract_contours(&f, 0.05).unwrap();
        assert!(!loops.is_empty());
        for c in &loops {
            assert!(c.len() >= MIN_LOOP_VERTICES);
            if c.closed {
                curve_area(c).unwrap();
            }
        }
    }

    #[test]
    fn speck_loops_are_dropped() {
        // One isolated hot node: a 4-vertex diamond, below the minimum.
        let grid = GridSpec::new(1.0, 32).unwrap();
        let mut vals = vec![0.0; 32 * 32];
        vals[16 * 32 + 16] = 1.0;
        let f = ScalarField::new(grid, vals).unwrap();
        let loops = extract_contours(&f, 0.5).unwrap();
        assert!(loops.is_empty());
    }

    #[test]
    fn non_finite_fields_are_rejected() {
        let grid = GridSpec::new(1.0, 32).unwrap();
        let mut vals = vec![0.0; 32 * 32];
        vals[5] = f64::NAN;
        let f = ScalarField::new(grid, vals);
        // ScalarField::new may itself reject NaN; if not, the extractor must.
        if let Ok(f) = f {
            assert!(extract_contours(&f, 0.5).is_err());
        }
        let g = field_from(grid, |x, _| x);
        assert!(extract_contours(&g, f64::INFINITY).is_err());
    }
}
