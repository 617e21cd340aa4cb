//! Isocontour extraction for DF maps in the (energy, L_z) plane: a regular
//! evaluation grid, geometric level ladders, marching-squares polylines, and
//! the physical-domain boundary traced through circular-orbit minimization.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::Result;
use crate::synthesis::DistributionFunction;

/// A rectangular evaluation grid, energy-major.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct GridSpec {
    pub e_min: f64,
    pub e_max: f64,
    pub e_steps: usize,
    pub lz_min: f64,
    pub lz_max: f64,
    pub lz_steps: usize,
}

impl GridSpec {
    pub fn energy_values(&self) -> Vec<f64> {
        linspace(self.e_min, self.e_max, self.e_steps)
    }

    pub fn lz_values(&self) -> Vec<f64> {
        linspace(self.lz_min, self.lz_max, self.lz_steps)
    }
}

fn linspace(lo: f64, hi: f64, steps: usize) -> Vec<f64> {
    if steps <= 1 {
        return vec![lo];
    }
    (0..steps)
        .map(|i| lo + (hi - lo) * i as f64 / (steps - 1) as f64)
        .collect()
}

/// DF values sampled on a grid, row-major over energy.
#[derive(Clone, Debug)]
pub struct SampledGrid {
    pub spec: GridSpec,
    pub energies: Vec<f64>,
    pub lz: Vec<f64>,
    /// `values[i * lz_steps + j] = f(energies[i], lz[j])`
    pub values: Vec<f64>,
}

impl SampledGrid {
    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.lz.len() + j]
    }

    pub fn max_value(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Evaluate a DF over the grid (parallel over energy rows, deterministic
/// ordering).
pub fn sample_grid(df: &DistributionFunction, spec: &GridSpec) -> Result<SampledGrid> {
    let energies = spec.energy_values();
    let lz = spec.lz_values();
    let rows: Vec<Result<Vec<f64>>> = energies
        .par_iter()
        .map(|&e| lz.iter().map(|&l| df.eval(e, l)).collect())
        .collect();
    let mut values = Vec::with_capacity(energies.len() * lz.len());
    for row in rows {
        values.extend(row?);
    }
    Ok(SampledGrid {
        spec: *spec,
        energies,
        lz,
        values,
    })
}

/// Geometric contour levels anchored at `anchor`: anchor * ratio^k for
/// k = 1, 2, ... down to `floor` (exclusive). Successive levels differ by the
/// factor `ratio`.
pub fn geometric_levels(anchor: f64, ratio: f64, floor: f64) -> Vec<f64> {
    let mut levels = Vec::new();
    if !(anchor > 0.0) || !(0.0 < ratio && ratio < 1.0) {
        return levels;
    }
    let mut level = anchor * ratio;
    while level > floor && levels.len() < 64 {
        levels.push(level);
        level *= ratio;
    }
    levels
}

/// A polyline in the (energy, L_z) plane.
pub type Polyline = Vec<[f64; 2]>;

/// Marching squares: extract the isocontour segments of `level` from the
/// sampled grid and stitch them into polylines.
pub fn marching_squares(grid: &SampledGrid, level: f64) -> Vec<Polyline> {
    let ne = grid.energies.len();
    let nl = grid.lz.len();
    let mut segments: Vec<([f64; 2], [f64; 2])> = Vec::new();
    let interp = |va: f64, vb: f64, a: f64, b: f64| -> f64 {
        // va, vb straddle the level by construction.
        a + (level - va) / (vb - va) * (b - a)
    };
    for i in 0..ne.saturating_sub(1) {
        for j in 0..nl.saturating_sub(1) {
            let (e0, e1) = (grid.energies[i], grid.energies[i + 1]);
            let (l0, l1) = (grid.lz[j], grid.lz[j + 1]);
            // Corner values: bl = (e0, l0), br = (e0, l1), tr = (e1, l1), tl = (e1, l0).
            let bl = grid.value(i, j);
            let br = grid.value(i, j + 1);
            let tr = grid.value(i + 1, j + 1);
            let tl = grid.value(i + 1, j);
            let mut case = 0u8;
            if bl > level {
                case |= 1;
            }
            if br > level {
                case |= 2;
            }
            if tr > level {
                case |= 4;
            }
            if tl > level {
                case |= 8;
            }
            if case == 0 || case == 15 {
                continue;
            }
            // Edge crossing points (energy, lz); named by cell side.
            let bottom = || [e0, interp(bl, br, l0, l1)];
            let top = || [e1, interp(tl, tr, l0, l1)];
            let left = || [interp(bl, tl, e0, e1), l0];
            let right = || [interp(br, tr, e0, e1), l1];
            match case {
                1 | 14 => segments.push((left(), bottom())),
                2 | 13 => segments.push((bottom(), right())),
                3 | 12 => segments.push((left(), right())),
                4 | 11 => segments.push((right(), top())),
                6 | 9 => segments.push((bottom(), top())),
                7 | 8 => segments.push((left(), top())),
                5 | 10 => {
                    // Saddle: resolve by the cell-center average.
                    let center = 0.25 * (bl + br + tr + tl);
                    if (center > level) == (case == 5) {
                        segments.push((left(), top()));
                        segments.push((bottom(), right()));
                    } else {
                        segments.push((left(), bottom()));
                        segments.push((right(), top()));
                    }
                }
                _ => unreachable!(),
            }
        }
    }
    stitch(segments)
}

/// Join segments that share endpoints into polylines. Quadratic in segment
/// count per level, which is fine at plot-scale grids.
fn stitch(mut segments: Vec<([f64; 2], [f64; 2])>) -> Vec<Polyline> {
    let close = |a: [f64; 2], b: [f64; 2]| -> bool {
        let scale = a[0]
            .abs()
            .max(a[1].abs())
            .max(b[0].abs())
            .max(b[1].abs())
            .max(1.0);
        (a[0] - b[0]).abs() <= 1e-12 * scale && (a[1] - b[1]).abs() <= 1e-12 * scale
    };
    let mut polylines = Vec::new();
    while let Some((start, end)) = segments.pop() {
        let mut line = vec![start, end];
        loop {
            let head = line[0];
            let tail = *line.last().expect("non-empty");
            let mut attached = false;
            let mut idx = 0;
            while idx < segments.len() {
                let (a, b) = segments[idx];
                if close(tail, a) {
                    line.push(b);
                } else if close(tail, b) {
                    line.push(a);
                } else if close(head, a) {
                    line.insert(0, b);
                } else if close(head, b) {
                    line.insert(0, a);
                } else {
                    idx += 1;
                    continue;
                }
                segments.swap_remove(idx);
                attached = true;
            }
            if !attached {
                break;
            }
        }
        polylines.push(line);
    }
    polylines
}

/// Trace the physical-domain boundary in the (energy, L_z) plane: for each
/// |L_z| the lowest reachable energy is attained on a circular orbit, i.e. the
/// extremum over R of `pot(R) + L_z^2/(2 R^2)` in the equatorial plane
/// (a minimum for rising potentials, a maximum of `pot(R) - ...` for bounded
/// relative potentials).
pub fn physical_boundary(
    pot_in_plane: &dyn Fn(f64) -> f64,
    rising: bool,
    lz_values: &[f64],
) -> Vec<[f64; 2]> {
    lz_values
        .iter()
        .map(|&lz| {
            let objective = |radius: f64| -> f64 {
                let circ = lz * lz / (2.0 * radius * radius);
                if rising {
                    pot_in_plane(radius) + circ
                } else {
                    pot_in_plane(radius) - circ
                }
            };
            let mut best_r = 1e-3;
            let mut best = objective(best_r);
            let better = |a: f64, b: f64| if rising { a < b } else { a > b };
            // Coarse log sweep, then golden-section refinement.
            for i in 0..200 {
                let r = 1e-3 * 1.1f64.powi(i);
                let v = objective(r);
                if better(v, best) {
                    best = v;
                    best_r = r;
                }
            }
            let (mut lo, mut hi) = (best_r / 1.3, best_r * 1.3);
            let phi = 0.5 * (5f64.sqrt() - 1.0);
            for _ in 0..80 {
                let m1 = hi - phi * (hi - lo);
                let m2 = lo + phi * (hi - lo);
                if better(objective(m1), objective(m2)) {
                    hi = m2;
                } else {
                    lo = m1;
                }
            }
            [objective(0.5 * (lo + hi)), lz]
        })
        .collect()
}

/// Contour output payload: levels, per-level polylines and the domain
/// boundary, ready for serialization.
#[derive(Clone, Debug, Serialize)]
pub struct ContourSet {
    pub schema_version: u32,
    pub model: String,
    pub grid: GridSpec,
    pub level_ratio: f64,
    pub levels: Vec<f64>,
    pub contours: Vec<LevelContours>,
    pub boundary: Vec<[f64; 2]>,
}

#[derive(Clone, Debug, Serialize)]
pub struct LevelContours {
    pub level: f64,
    pub polylines: Vec<Polyline>,
}

pub const CONTOUR_SCHEMA_VERSION: u32 = 1;
