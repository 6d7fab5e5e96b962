//! The iteration loop: repeated threshold-dynamics steps producing a
//! region sequence, with per-step diagnostics, early stopping, and
//! snapshot capture.
//!
//! Each step propagates the current indicator through the three-scale
//! combination field and rethresholds at 1/2. The region one step back
//! is diagnosed through the field it was cut from, so interface
//! positions are sub-cell accurate; the initial region, which has no
//! such field, is mollified for a fixed tiny time instead.
//!
//! Runs stop early when the region vanishes, fills the domain, or (for
//! components that do not wind around the torus) approaches the
//! periodic seam, where wrap-around interaction would contaminate the
//! free-space dynamics. Everything is deterministic: repeated runs on
//! the same inputs produce bit-identical trajectories.

use std::fmt;
use std::io::{self, Write};

use thiserror::Error;

use crate::geometry::{
    curve_geometry, extract_contours, normal_displacement, resample_uniform, willmore_energy,
    GeometryError, PolyCurve,
};
use crate::spectral::{
    single_scale_field, threshold_step, IndicatorField, ScalarField, SpectralError,
    ThresholdParams,
};

/// Stop when a non-winding component comes within this many cells of the
/// periodic seam.
pub const SEAM_GUARD_CELLS: usize = 8;

/// Steps that move the interface less than this fraction of a cell are
/// flagged: thresholding cannot represent sub-cell motion and pins the
/// interface instead.
const UNDER_RESOLVED_CELL_FRACTION: f64 = 0.5;

/// Soft per-step allowance for discretization noise before an energy
/// increase is logged.
const ENERGY_RISE_ALLOWANCE: f64 = 0.05;

#[derive(Debug, Error)]
pub enum FlowError {
    #[error("invalid flow configuration: {0}")]
    InvalidConfig(String),
    #[error("component pairing is ambiguous: {0}")]
    ComponentPairing(String),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Which per-step diagnostics to compute. Contours are extracted when
/// any of `energy`, `contour`, or `velocity` is set (or when snapshots
/// are requested); disabling all of them leaves only the O(n²) pixel
/// count per step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DiagnosticsFlags {
    pub area: bool,
    pub energy: bool,
    pub contour: bool,
    pub velocity: bool,
}

impl DiagnosticsFlags {
    pub fn all() -> Self {
        DiagnosticsFlags {
            area: true,
            energy: true,
            contour: true,
            velocity: true,
        }
    }

    pub fn area_only() -> Self {
        DiagnosticsFlags {
            area: true,
            energy: false,
            contour: false,
            velocity: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FlowConfig {
    pub params: ThresholdParams,
    pub steps: usize,
    /// Capture the region and its contours every this many steps
    /// (0 = never). Must divide `steps`. Step 0 is always captured.
    pub snapshot_every: usize,
    pub diagnostics: DiagnosticsFlags,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepStatus {
    Ok,
    Collapsed,
    Filled,
    UnderResolved,
}

impl fmt::Display for StepStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StepStatus::Ok => "ok",
            StepStatus::Collapsed => "collapsed",
            StepStatus::Filled => "filled",
            StepStatus::UnderResolved => "under_resolved",
        })
    }
}

/// One diagnostics row. Quantities not requested (or not computable that
/// step) are NaN; `components` counts extracted contour loops (0 when
/// contours were not computed).
#[derive(Debug, Clone)]
pub struct StepRecord {
    pub k: usize,
    pub t: f64,
    pub area: f64,
    pub components: usize,
    pub energy: f64,
    pub max_disp: f64,
    pub status: StepStatus,
}

#[derive(Debug, Clone, Default)]
pub struct Trajectory {
    pub records: Vec<StepRecord>,
    /// Soft anomalies: contour topology errors, energy increases beyond
    /// the per-step allowance, seam-guard reports.
    pub warnings: Vec<String>,
}

impl Trajectory {
    pub fn write_csv(&self, out: &mut impl Write) -> io::Result<()> {
        writeln!(out, "k,t,area,components,energy,max_disp,status")?;
        for r in &self.records {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.k, r.t, r.area, r.components, r.energy, r.max_disp, r.status
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Completed,
    Collapsed,
    Filled,
    SeamContact,
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StopReason::Completed => "completed",
            StopReason::Collapsed => "collapsed",
            StopReason::Filled => "filled",
            StopReason::SeamContact => "seam_contact",
        })
    }
}

/// State captured at a snapshot step: the region and the contours it was
/// diagnosed with (empty if contour extraction was off or failed).
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub k: usize,
    pub region: IndicatorField,
    pub curves: Vec<PolyCurve>,
}

#[derive(Debug)]
pub struct FlowResult {
    pub trajectory: Trajectory,
    pub final_region: IndicatorField,
    pub stop: StopReason,
    pub snapshots: Vec<Snapshot>,
}

impl FlowResult {
    /// Index of the last completed step (0 = only the initial state).
    pub fn steps_done(&self) -> usize {
        self.trajectory.records.last().map_or(0, |r| r.k)
    }
}

/// Vertex count for diagnostic resampling: at least two vertices per
/// interface cell, never fewer than 256.
fn diagnostic_vertex_count(perimeter: f64, cell: f64) -> usize {
    ((perimeter / (2.0 * cell)).ceil() as usize).max(256)
}

/// Mollification time for diagnosing a raw indicator: the interface
/// acquires a width of about four cells, enough that extracted contours
/// are smooth at the segment scale (sharp features stay within the
/// spacing tolerance of the curvature pass) without visibly moving them.
pub(crate) fn mollify_time(cell: f64) -> f64 {
    (4.0 * cell).powi(4)
}

fn extract_or_warn(
    field: &ScalarField,
    level: f64,
    k: usize,
    warnings: &mut Vec<String>,
) -> Vec<PolyCurve> {
    match extract_contours(field, level) {
        Ok(curves) => curves,
        Err(e) => {
            warnings.push(format!(
                "step {k}: contour extraction failed ({e}); contour diagnostics skipped"
            ));
            Vec::new()
        }
    }
}

fn resample_list(
    curves: &[PolyCurve],
    cell: f64,
    k: usize,
    warnings: &mut Vec<String>,
) -> Vec<PolyCurve> {
    let mut out = Vec::with_capacity(curves.len());
    for c in curves {
        match resample_uniform(c, diagnostic_vertex_count(c.perimeter(), cell)) {
            Ok(r) => out.push(r),
            Err(e) => warnings.push(format!("step {k}: dropping a contour from diagnostics ({e})")),
        }
    }
    out
}

fn energy_of(
    curves: &[PolyCurve],
    cell: f64,
    lambda: f64,
    k: usize,
    warnings: &mut Vec<String>,
) -> f64 {
    let mut total = 0.0;
    let mut any = false;
    for c in curves {
        // Chords shorten where the curve bends sharply within one sample
        // spacing, which breaks the uniform-spacing requirement of the
        // geometry pass; refining the sample restores it on smooth curves.
        let base = diagnostic_vertex_count(c.perimeter(), cell);
        let mut last_err = None;
        for refine in 0..5 {
            match resample_uniform(c, base << refine)
                .and_then(|r| curve_geometry(&r))
            {
                Ok(g) => {
                    total += willmore_energy(&g, lambda);
                    any = true;
                    last_err = None;
                    break;
                }
                Err(e) => last_err = Some(e),
            }
        }
        if let Some(e) = last_err {
            warnings.push(format!("step {k}: energy skips a contour ({e})"));
        }
    }
    if any {
        total
    } else {
        f64::NAN
    }
}

fn max_displacement(
    previous: &[PolyCurve],
    targets: &[PolyCurve],
    window: f64,
) -> f64 {
    let mut max_abs = f64::NAN;
    for old in previous {
        let Ok(disp) = normal_displacement(old, targets, window) else {
            continue;
        };
        for d in disp.into_iter().flatten() {
            if !(d.abs() <= max_abs) {
                // NaN-safe max of |d|.
                max_abs = if max_abs.is_nan() {
                    d.abs()
                } else {
                    max_abs.max(d.abs())
                };
            }
        }
    }
    max_abs
}

/// Smallest distance (in cells) from an inside cell to the seam, taken
/// only over directions the region does not wind around; `None` when no
/// bounded direction is within [`SEAM_GUARD_CELLS`].
///
/// A component winding around the torus (a band) crosses the seam by
/// construction; the seam is not special for it, so its winding
/// direction is exempt.
fn seam_guard_violation(ind: &IndicatorField) -> Option<usize> {
    let n = ind.grid().n;
    let vals = ind.values();
    let mut col = vec![false; n];
    let mut row = vec![false; n];
    for j in 0..n {
        let offset = j * n;
        for i in 0..n {
            if vals[offset + i] != 0 {
                col[i] = true;
                row[j] = true;
            }
        }
    }
    let mut worst = usize::MAX;
    for (occupied, spans_all) in [(&col, col.iter().all(|&b| b)), (&row, row.iter().all(|&b| b))]
    {
        if spans_all {
            continue;
        }
        for (i, &occ) in occupied.iter().enumerate() {
            if occ {
                worst = worst.min(i.min(n - 1 - i));
            }
        }
    }
    (worst < SEAM_GUARD_CELLS).then_some(worst)
}

/// Runs `cfg.steps` threshold steps from `initial`, recording one
/// diagnostics row per step (plus row 0 for the initial state) and
/// stopping early on collapse, fill, or seam contact.
pub fn evolve(initial: &IndicatorField, cfg: &FlowConfig) -> Result<FlowResult, FlowError> {
    if cfg.steps == 0 {
        return Err(FlowError::InvalidConfig("steps must be ≥ 1".into()));
    }
    if cfg.snapshot_every > 0 && cfg.steps % cfg.snapshot_every != 0 {
        return Err(FlowError::InvalidConfig(format!(
            "snapshot interval {} does not divide step count {}",
            cfg.snapshot_every, cfg.steps
        )));
    }
    if initial.is_empty() {
        return Err(FlowError::InvalidConfig("initial region is empty".into()));
    }
    if initial.is_full() {
        return Err(FlowError::InvalidConfig(
            "initial region fills the domain".into(),
        ));
    }
    let grid = initial.grid();
    let cell = grid.cell();
    let h = cfg.params.time_step;
    let lambda = cfg.params.lambda;
    let level = cfg.params.level;
    let window = grid.side / 8.0;
    let flags = cfg.diagnostics;
    let need_curves =
        flags.energy || flags.contour || flags.velocity || cfg.snapshot_every > 0;

    let mut warnings = Vec::new();
    let mut records: Vec<StepRecord> = Vec::with_capacity(cfg.steps + 1);
    let mut snapshots = Vec::new();

    let mut region = initial.clone();

    // Row 0: the initial region, diagnosed through a mollified copy.
    let raw0 = if need_curves {
        let f0 = single_scale_field(&region, mollify_time(cell), 0.0)?;
        extract_or_warn(&f0, level, 0, &mut warnings)
    } else {
        Vec::new()
    };
    let resampled0 = resample_list(&raw0, cell, 0, &mut warnings);
    let energy0 = if flags.energy {
        energy_of(&raw0, cell, lambda, 0, &mut warnings)
    } else {
        f64::NAN
    };
    records.push(StepRecord {
        k: 0,
        t: 0.0,
        area: if flags.area { region.area() } else { f64::NAN },
        components: raw0.len(),
        energy: energy0,
        max_disp: f64::NAN,
        status: StepStatus::Ok,
    });
    if cfg.snapshot_every > 0 {
        snapshots.push(Snapshot {
            k: 0,
            region: region.clone(),
            curves: raw0,
        });
    }
    let mut previous_curves = resampled0;
    let mut previous_energy = energy0;

    let mut stop = StopReason::Completed;
    if let Some(clearance) = seam_guard_violation(&region) {
        warnings.push(format!(
            "step 0: region within {clearance} cells of the periodic seam; stopping"
        ));
        stop = StopReason::SeamContact;
    } else {
        for k in 1..=cfg.steps {
            let (next, field) = threshold_step(&region, &cfg.params)?;
            region = next;
            let t = k as f64 * h;

            if region.is_empty() || region.is_full() {
                let filled = region.is_full();
                records.push(StepRecord {
                    k,
                    t,
                    area: if flags.area { region.area() } else { f64::NAN },
                    components: 0,
                    energy: f64::NAN,
                    max_disp: f64::NAN,
                    status: if filled {
                        StepStatus::Filled
                    } else {
                        StepStatus::Collapsed
                    },
                });
                stop = if filled {
                    StopReason::Filled
                } else {
                    StopReason::Collapsed
                };
                break;
            }

            // The new region is the level set of the field it was cut
            // from, so diagnose it there (sub-cell positions for free).
            let raw = if need_curves {
                extract_or_warn(&field, level, k, &mut warnings)
            } else {
                Vec::new()
            };
            let resampled = resample_list(&raw, cell, k, &mut warnings);
            let energy = if flags.energy {
                energy_of(&raw, cell, lambda, k, &mut warnings)
            } else {
                f64::NAN
            };
            let max_disp = if flags.velocity && !previous_curves.is_empty() && !raw.is_empty() {
                max_displacement(&previous_curves, &raw, window)
            } else {
                f64::NAN
            };
            let status = if max_disp.is_finite() && max_disp < UNDER_RESOLVED_CELL_FRACTION * cell
            {
                StepStatus::UnderResolved
            } else {
                StepStatus::Ok
            };
            if energy.is_finite() && previous_energy.is_finite() {
                let rise = (energy - previous_energy) / previous_energy.abs();
                if rise > ENERGY_RISE_ALLOWANCE {
                    warnings.push(format!(
                        "step {k}: energy rose {previous_energy:.6e} -> {energy:.6e} \
                         (+{:.2}%)",
                        100.0 * rise
                    ));
                }
            }
            records.push(StepRecord {
                k,
                t,
                area: if flags.area { region.area() } else { f64::NAN },
                components: raw.len(),
                energy,
                max_disp,
                status,
            });
            if cfg.snapshot_every > 0 && k % cfg.snapshot_every == 0 {
                snapshots.push(Snapshot {
                    k,
                    region: region.clone(),
                    curves: raw.clone(),
                });
            }
            if !resampled.is_empty() {
                previous_curves = resampled;
            }
            if energy.is_finite() {
                previous_energy = energy;
            }
            if let Some(clearance) = seam_guard_violation(&region) {
                warnings.push(format!(
                    "step {k}: region within {clearance} cells of the periodic seam; stopping"
                ));
                stop = StopReason::SeamContact;
                break;
            }
        }
    }

    Ok(FlowResult {
        trajectory: Trajectory { records, warnings },
        final_region: region,
        stop,
        snapshots,
    })
}

/// Per-vertex normal velocities across one step, measured between the
/// mollified interfaces of two indicators.
#[derive(Debug, Clone)]
pub struct StepVelocities {
    /// Uniformly resampled before-interfaces, one per component, aligned
    /// with `velocities`.
    pub curves: Vec<PolyCurve>,
    /// `velocities[c][v]` is the outward normal velocity at vertex `v`
    /// of component `c`, `None` where no crossing was found.
    pub velocities: Vec<Vec<Option<f64>>>,
}

impl StepVelocities {
    /// Mean over all measured vertices.
    pub fn mean(&self) -> Option<f64> {
        let mut acc = 0.0;
        let mut count = 0usize;
        for v in self.velocities.iter().flatten().flatten() {
            acc += v;
            count += 1;
        }
        (count > 0).then(|| acc / count as f64)
    }

    /// Fraction of vertices with a measurement.
    pub fn coverage(&self) -> f64 {
        let total: usize = self.velocities.iter().map(Vec::len).sum();
        if total == 0 {
            return 0.0;
        }
        let hit: usize = self
            .velocities
            .iter()
            .map(|c| c.iter().filter(|d| d.is_some()).count())
            .sum();
        hit as f64 / total as f64
    }
}

/// Outward normal velocity from the interface of `before` to that of
/// `after` across time `h`: both indicators are mollified, contoured,
/// components are paired by centroid proximity, and each before-vertex
/// is probed along its normal.
pub fn measure_step_velocity(
    before: &IndicatorField,
    after: &IndicatorField,
    h: f64,
) -> Result<StepVelocities, FlowError> {
    if !(h.is_finite() && h > 0.0) {
        return Err(FlowError::InvalidConfig(format!(
            "step time must be positive, got {h}"
        )));
    }
    if before.grid() != after.grid() {
        return Err(FlowError::InvalidConfig(
            "before/after indicators live on different grids".into(),
        ));
    }
    let grid = before.grid();
    let cell = grid.cell();
    let side = grid.side;
    let t0 = mollify_time(cell);
    let b_curves = extract_contours(&single_scale_field(before, t0, 0.0)?, 0.5)?;
    let a_curves = extract_contours(&single_scale_field(after, t0, 0.0)?, 0.5)?;
    if b_curves.is_empty() || a_curves.is_empty() {
        return Err(FlowError::ComponentPairing(format!(
            "{} before-contours vs {} after-contours",
            b_curves.len(),
            a_curves.len()
        )));
    }
    if b_curves.len() != a_curves.len() {
        return Err(FlowError::ComponentPairing(format!(
            "component count changed across the step: {} -> {}",
            b_curves.len(),
            a_curves.len()
        )));
    }
    // Nearest-centroid assignment (periodic metric); must be a bijection.
    let periodic_d2 = |p: [f64; 2], q: [f64; 2]| -> f64 {
        let mut acc = 0.0;
        for ax in 0..2 {
            let mut d = p[ax] - q[ax];
            d -= side * (d / side).round();
            acc += d * d;
        }
        acc
    };
    let a_centroids: Vec<[f64; 2]> = a_curves.iter().map(|c| c.centroid()).collect();
    let mut taken = vec![false; a_curves.len()];
    let mut pairs = Vec::with_capacity(b_curves.len());
    for b in &b_curves {
        let cb = b.centroid();
        let j = (0..a_curves.len())
            .min_by(|&x, &y| {
                periodic_d2(cb, a_centroids[x])
                    .partial_cmp(&periodic_d2(cb, a_centroids[y]))
                    .unwrap()
            })
            .expect("nonempty after-contours");
        if taken[j] {
            return Err(FlowError::ComponentPairing(format!(
                "two components claim the same target near ({:.4}, {:.4})",
                a_centroids[j][0], a_centroids[j][1]
            )));
        }
        taken[j] = true;
        pairs.push(j);
    }

    let window = side / 8.0;
    let mut curves = Vec::with_capacity(b_curves.len());
    let mut velocities = Vec::with_capacity(b_curves.len());
    for (b, &j) in b_curves.iter().zip(&pairs) {
        let resampled = resample_uniform(b, diagnostic_vertex_count(b.perimeter(), cell))?;
        // Re-anchor the target onto the same periodic image as the probe.
        let cb = resampled.centroid();
        let ca = a_centroids[j];
        let shift = [
            side * ((cb[0] - ca[0]) / side).round(),
            side * ((cb[1] - ca[1]) / side).round(),
        ];
        let mut target = a_curves[j].clone();
        if shift != [0.0, 0.0] {
            for p in &mut target.points {
                p[0] += shift[0];
                p[1] += shift[1];
            }
        }
        let disp = normal_displacement(&resampled, std::slice::from_ref(&target), window)?;
        velocities.push(disp.into_iter().map(|d| d.map(|d| d / h)).collect());
        curves.push(resampled);
    }
    Ok(StepVelocities { curves, velocities })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Axis, Shape};
    use crate::spectral::GridSpec;

    fn circle_field(grid: GridSpec, cx: f64, cy: f64, r: f64) -> IndicatorField {
        Shape::Circle { cx, cy, radius: r }.rasterize(grid)
    }

    #[test]
    fn band_is_stationary_with_ok_rows() {
        let grid = GridSpec::new(1.0, 256).unwrap();
        let band = Shape::Band {
            axis: Axis::Y,
            half_width: 0.25,
        }
        .rasterize(grid);
        let cfg = FlowConfig {
            params: ThresholdParams::new(1e-6, 0.0).unwrap(),
            steps: 10,
            snapshot_every: 0,
            diagnostics: DiagnosticsFlags::area_only(),
        };
        let out = evolve(&band, &cfg).unwrap();
        assert_eq!(out.stop, StopReason::Completed);
        assert_eq!(out.trajectory.records.len(), 11);
        let a0 = out.trajectory.records[0].area;
        for r in &out.trajectory.records {
            assert_eq!(r.status, StepStatus::Ok);
            assert!((r.area - a0).abs() <= grid.cell() * grid.cell());
        }
        assert_eq!(out.final_region.values(), band.values());
        assert!(out.trajectory.warnings.is_empty());
    }

    #[test]
    fn evolve_is_deterministic() {
        let grid = GridSpec::new(1.0, 128).unwrap();
        let ind = circle_field(grid, 0.5, 0.5, 0.22);
        let cfg = FlowConfig {
            params: ThresholdParams::new(1e-4, 0.3).unwrap(),
            steps: 3,
            snapshot_every: 3,
            diagnostics: DiagnosticsFlags::all(),
        };
        let a = evolve(&ind, &cfg).unwrap();
        let b = evolve(&ind, &cfg).unwrap();
        assert_eq!(a.final_region.values(), b.final_region.values());
        let csv = |r: &FlowResult| {
            let mut buf = Vec::new();
            r.trajectory.write_csv(&mut buf).unwrap();
            buf
        };
        assert_eq!(csv(&a), csv(&b), "trajectory must be bit-identical");
        assert_eq!(a.snapshots.len(), b.snapshots.len());
        for (sa, sb) in a.snapshots.iter().zip(&b.snapshots) {
            assert_eq!(sa.region.values(), sb.region.values());
            assert_eq!(sa.curves, sb.curves);
        }
    }

    #[test]
    fn mirror_symmetry_is_preserved() {
        let grid = GridSpec::new(1.0, 64).unwrap();
        let ind = circle_field(grid, 0.5, 0.5, 0.18);
        let n = grid.n;
        let mirrored = |v: &[u8], i: usize, j: usize| v[j * n + (n - 1 - i)];
        // The initial rasterization is exactly mirror-symmetric.
        for j in 0..n {
            for i in 0..n {
                assert_eq!(ind.values()[j * n + i], mirrored(ind.values(), i, j));
            }
        }
        let cfg = FlowConfig {
            params: ThresholdParams::new(1e-5, 0.0).unwrap(),
            steps: 2,
            snapshot_every: 0,
            diagnostics: DiagnosticsFlags::area_only(),
        };
        let out = evolve(&ind, &cfg).unwrap();
        let v = out.final_region.values();
        for j in 0..n {
            for i in 0..n {
                assert_eq!(v[j * n + i], mirrored(v, i, j), "asymmetry at ({i},{j})");
            }
        }
    }

    #[test]
    fn evolve_matches_manual_stepping() {
        let grid = GridSpec::new(1.0, 256).unwrap();
        let ind = circle_field(grid, 0.5, 0.5, 0.2);
        let params = ThresholdParams::new(1e-5, 0.25).unwrap();
        let cfg = FlowConfig {
            params: params.clone(),
            steps: 3,
            snapshot_every: 0,
            diagnostics: DiagnosticsFlags::area_only(),
        };
        let out = evolve(&ind, &cfg).unwrap();
        assert_eq!(out.stop, StopReason::Completed);
        let mut manual = ind.clone();
        for _ in 0..3 {
            manual = crate::spectral::threshold_step(&manual, &params).unwrap().0;
        }
        assert_eq!(out.final_region.values(), manual.values());
        assert_eq!(out.trajectory.records.len(), 4);
        let last = out.trajectory.records.last().unwrap();
        assert!((last.area - manual.area()).abs() < 1e-12);
        for (k, r) in out.trajectory.records.iter().enumerate() {
            assert_eq!(r.k, k);
            assert!((r.t - k as f64 * 1e-5).abs() < 1e-18, "t column at row {k}");
        }
    }

    #[test]
    fn tiny_circle_collapses_and_stops() {
        let grid = GridSpec::new(1.0, 128).unwrap();
        let ind = circle_field(grid, 0.5, 0.5, 0.02);
        let cfg = FlowConfig {
            params: ThresholdParams::new(1e-4, 0.0).unwrap(),
            steps: 5,
            snapshot_every: 0,
            diagnostics: DiagnosticsFlags::area_only(),
        };
        let out = evolve(&ind, &cfg).unwrap();
        assert_eq!(out.stop, StopReason::Collapsed);
        assert!(out.final_region.is_empty());
        let last = out.trajectory.records.last().unwrap();
        assert_eq!(last.status, StepStatus::Collapsed);
        assert!(last.k < 5, "collapse must stop the run early");
    }

    #[test]
    fn growing_circle_trips_the_seam_guard() {
        let grid = GridSpec::new(1.0, 128).unwrap();
        let ind = circle_field(grid, 0.5, 0.5, 0.42);
        // At this time step the kernel tail pushes the interface halo to
        // within a few cells of the seam after one step.
        let cfg = FlowConfig {
            params: ThresholdParams::new(2.5e-4, 0.0).unwrap(),
            steps: 12,
            snapshot_every: 0,
            diagnostics: DiagnosticsFlags::area_only(),
        };
        let out = evolve(&ind, &cfg).unwrap();
        assert_eq!(out.stop, StopReason::SeamContact);
        assert!(out.steps_done() >= 1, "initial state is clear of the seam");
        assert!(out.steps_done() < 12);
        assert!(out
            .trajectory
            .warnings
            .iter()
            .any(|w| w.contains("seam")));
    }

    #[test]
    fn initial_region_too_close_to_seam_stops_at_zero() {
        let grid = GridSpec::new(1.0, 128).unwrap();
        let ind = circle_field(grid, 0.06, 0.5, 0.05);
        let cfg = FlowConfig {
            params: ThresholdParams::new(1e-5, 0.0).unwrap(),
            steps: 3,
            snapshot_every: 0,
            diagnostics: DiagnosticsFlags::area_only(),
        };
        let out = evolve(&ind, &cfg).unwrap();
        assert_eq!(out.stop, StopReason::SeamContact);
        assert_eq!(out.steps_done(), 0);
    }

    #[test]
    fn bad_configs_are_rejected() {
        let grid = GridSpec::new(1.0, 64).unwrap();
        let ind = circle_field(grid, 0.5, 0.5, 0.2);
        let params = ThresholdParams::new(1e-5, 0.0).unwrap();
        let mk = |steps, every| FlowConfig {
            params: params.clone(),
            steps,
            snapshot_every: every,
            diagnostics: DiagnosticsFlags::area_only(),
        };
        assert!(matches!(
            evolve(&ind, &mk(0, 0)),
            Err(FlowError::InvalidConfig(_))
        ));
        assert!(matches!(
            evolve(&ind, &mk(10, 3)),
            Err(FlowError::InvalidConfig(_))
        ));
        let empty = IndicatorField::from_fn(grid, |_, _| false);
        assert!(evolve(&empty, &mk(1, 0)).is_err());
        let full = IndicatorField::from_fn(grid, |_, _| true);
        assert!(evolve(&full, &mk(1, 0)).is_err());
    }

    #[test]
    fn snapshots_cover_requested_steps() {
        let grid = GridSpec::new(5.0, 128).unwrap();
        let ind = circle_field(grid, 2.5, 2.5, 1.0);
        let cfg = FlowConfig {
            params: ThresholdParams::new(1e-3, 0.0).unwrap(),
            steps: 4,
            snapshot_every: 2,
            diagnostics: DiagnosticsFlags::all(),
        };
        let out = evolve(&ind, &cfg).unwrap();
        let ks: Vec<usize> = out.snapshots.iter().map(|s| s.k).collect();
        assert_eq!(ks, vec![0, 2, 4]);
        for s in &out.snapshots {
            assert!(!s.curves.is_empty(), "snapshot {} has contours", s.k);
        }
    }

    #[test]
    fn velocity_of_identical_indicators_is_zero() {
        let grid = GridSpec::new(1.0, 256).unwrap();
        let ind = circle_field(grid, 0.5, 0.5, 0.2);
        let v = measure_step_velocity(&ind, &ind, 1e-5).unwrap();
        assert!(v.coverage() > 0.99);
        for val in v.velocities.iter().flatten().flatten() {
            assert!(val.abs() < 1e-9, "velocity {val}");
        }
    }

    #[test]
    fn circle_step_velocity_matches_radius_ode() {
        let grid = GridSpec::new(1.0, 1024).unwrap();
        let r0 = 0.15;
        let h = 8e-6;
        let ind = circle_field(grid, 0.5, 0.5, r0);
        let params = ThresholdParams::new(h, 0.0).unwrap();
        let (after, _) = crate::spectral::threshold_step(&ind, &params).unwrap();
        let v = measure_step_velocity(&ind, &after, h).unwrap();
        let want = 1.0 / (2.0 * r0.powi(3));
        let mean = v.mean().unwrap();
        assert!(
            (mean - want).abs() / want < 0.2,
            "mean velocity {mean} vs {want}"
        );
    }

    #[test]
    fn band_velocity_is_flat_zero() {
        let grid = GridSpec::new(1.0, 256).unwrap();
        let band = Shape::Band {
            axis: Axis::Y,
            half_width: 0.25,
        }
        .rasterize(grid);
        let h = 1e-6;
        let params = ThresholdParams::new(h, 0.0).unwrap();
        let (after, _) = crate::spectral::threshold_step(&band, &params).unwrap();
        let v = measure_step_velocity(&band, &after, h).unwrap();
        let mean = v.mean().unwrap();
        assert!(
            mean.abs() < grid.cell() / h,
            "band mean velocity {mean} exceeds cell/h"
        );
    }

    #[test]
    fn two_disks_pair_by_centroid() {
        let grid = GridSpec::new(1.0, 256).unwrap();
        let two = |r1: f64, r2: f64| {
            IndicatorField::from_fn(grid, |x, y| {
                let d1 = (x - 0.3).hypot(y - 0.3);
                let d2 = (x - 0.72).hypot(y - 0.72);
                d1 <= r1 || d2 <= r2
            })
        };
        let before = two(0.1, 0.12);
        let after = two(0.104, 0.124);
        let v = measure_step_velocity(&before, &after, 1e-3).unwrap();
        assert_eq!(v.curves.len(), 2);
        for (c, vel) in v.curves.iter().zip(&v.velocities) {
            let grew = c.centroid();
            let want = if grew[0] < 0.5 { 0.004 } else { 0.004 } / 1e-3;
            let mean: f64 = {
                let hits: Vec<f64> = vel.iter().flatten().copied().collect();
                hits.iter().sum::<f64>() / hits.len() as f64
            };
            assert!(
                (mean - want).abs() / want < 0.2,
                "component at {grew:?}: mean {mean} vs {want}"
            );
        }
        // Merging components cannot be paired.
        let merged = circle_field(grid, 0.5, 0.5, 0.35);
        assert!(matches!(
            measure_step_velocity(&before, &merged, 1e-3),
            Err(FlowError::ComponentPairing(_))
        ));
    }
}
