//! Echo extraction: temporal-norm peak picking and per-peak direction fits.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::axis::CenteredMatrix;
use crate::error::{invalid, Error, Result};
use crate::sh::{channel_count, dot, nearest_direction, norm, Beamformer, Direction, DirectionGrid};

/// ζ(j) = ‖column j‖₂ on the centred axis.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayMagnitudeSeries {
    pub j_min: i64,
    pub zeta: Vec<f64>,
}

impl DelayMagnitudeSeries {
    pub fn get(&self, j: i64) -> f64 {
        let i = j - self.j_min;
        if i < 0 || i as usize >= self.zeta.len() {
            0.0
        } else {
            self.zeta[i as usize]
        }
    }

    pub fn j_max(&self) -> i64 {
        self.j_min + self.zeta.len() as i64 - 1
    }

    pub fn max(&self) -> f64 {
        self.zeta.iter().copied().fold(0.0, f64::max)
    }
}

pub fn temporal_norm(m: &CenteredMatrix) -> DelayMagnitudeSeries {
    DelayMagnitudeSeries {
        j_min: m.j_min(),
        zeta: (m.j_min()..=m.j_max())
            .map(|j| norm(&m.column(j)))
            .collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakOptions {
    pub count: usize,
    pub min_separation: usize,
    /// Inclusive search window in samples.
    pub window: (i64, i64),
    /// Peaks below this fraction of the largest ζ in the window are ignored.
    pub relative_floor: f64,
}

impl PeakOptions {
    pub fn new(count: usize, min_separation: usize, j_max: usize) -> Self {
        Self {
            count,
            min_separation,
            window: (0, j_max as i64),
            relative_floor: 1e-6,
        }
    }
}

fn local_maxima(z: &DelayMagnitudeSeries, window: (i64, i64), floor: f64) -> Vec<i64> {
    let (lo, hi) = (window.0.max(z.j_min), window.1.min(z.j_max()));
    (lo..=hi)
        .filter(|&j| {
            let v = z.get(j);
            v > floor && v > z.get(j - 1) && v >= z.get(j + 1)
        })
        .collect()
}

fn greedy_select(z: &DelayMagnitudeSeries, mut candidates: Vec<i64>, seed: Vec<i64>, opts: &PeakOptions) -> Vec<i64> {
    candidates.sort_by(|a, b| z.get(*b).total_cmp(&z.get(*a)).then(a.cmp(b)));
    let mut chosen = seed;
    for j in candidates {
        if chosen.len() >= opts.count {
            break;
        }
        if chosen
            .iter()
            .all(|&c| (c - j).unsigned_abs() as usize >= opts.min_separation)
        {
            chosen.push(j);
        }
    }
    chosen.sort_unstable();
    chosen
}

/// Local maxima of ζ in the window (strict on the left, non-strict on the
/// right so plateaus resolve to their earliest sample), taken greedily by
/// magnitude under the separation constraint. Returned in ascending order.
pub fn pick_peaks(z: &DelayMagnitudeSeries, opts: &PeakOptions) -> Result<Vec<i64>> {
    if opts.count == 0 {
        return invalid("peak count must be at least 1");
    }
    let floor = opts.relative_floor * window_max(z, opts.window);
    Ok(greedy_select(z, local_maxima(z, opts.window, floor), Vec::new(), opts))
}

fn window_max(z: &DelayMagnitudeSeries, window: (i64, i64)) -> f64 {
    (window.0..=window.1).map(|j| z.get(j)).fold(0.0, f64::max)
}

/// Raw fit: the grid atom most correlated with the column.
pub fn fit_direction(column: &[f64], grid: &DirectionGrid) -> Result<(Direction, f64)> {
    nearest_direction(column, grid)
}

/// Fit that accounts for the reference leaking the direct sound into each
/// echo column: atoms are mapped through (I − y0 wᵀ) and compared by
/// normalized correlation. Atoms the map sends to (near) zero are skipped.
pub fn fit_direction_corrected(
    column: &[f64],
    y0: &[f64],
    w: &Beamformer,
    grid: &DirectionGrid,
) -> Result<(Direction, f64)> {
    let c = channel_count(grid.order);
    if column.len() != c || y0.len() != c || w.weights.len() != c {
        return invalid("column, y0 and beamformer must match the grid order");
    }
    let cn = norm(column);
    if cn == 0.0 || !cn.is_finite() {
        return Err(Error::ZeroInput);
    }
    let scale = w.response(y0);
    if scale.abs() < 1e-12 {
        return invalid("reference has no response toward the direct sound");
    }
    let y0: Vec<f64> = y0.iter().map(|y| y / scale).collect();
    let (i, s) = grid.best_by(|atom| {
        let beta = w.response(atom);
        let an = norm(atom);
        let p: Vec<f64> = atom.iter().zip(&y0).map(|(a, y)| a - beta * y).collect();
        let pn = norm(&p);
        if pn < 1e-9 * an {
            return f64::NEG_INFINITY;
        }
        dot(column, &p).abs() / pn
    });
    Ok((grid.directions[i], (s / cn).clamp(0.0, 1.0)))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EchoEstimate {
    /// Relative delay in samples.
    pub delay: i64,
    pub direction: Direction,
    pub gain: f64,
    pub raw_column: Vec<f64>,
    pub correlation: f64,
}

impl EchoEstimate {
    pub fn delay_seconds(&self, sample_rate: f64) -> f64 {
        self.delay as f64 / sample_rate
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtractOptions {
    /// Number of peaks P, including the direct path.
    pub peaks: usize,
    pub min_separation: usize,
    pub j_max: usize,
    pub relative_floor: f64,
}

impl Default for ExtractOptions {
    fn default() -> Self {
        Self {
            peaks: 15,
            min_separation: 2,
            j_max: 800,
            relative_floor: 1e-6,
        }
    }
}

/// Peaks of ζ with j = 0 always first, each with a fitted direction and a
/// gain ζ(peak)/ζ(0). Passing a reference beamformer switches the non-direct
/// peaks to the corrected fit, which is meant for GTVV input.
pub fn extract_echoes(
    m: &CenteredMatrix,
    grid: &DirectionGrid,
    opts: &ExtractOptions,
    correction: Option<&Beamformer>,
) -> Result<Vec<EchoEstimate>> {
    if opts.peaks == 0 {
        return invalid("peak count must be at least 1");
    }
    if m.order != grid.order {
        return invalid(format!(
            "matrix order {} does not match grid order {}",
            m.order, grid.order
        ));
    }
    let z = temporal_norm(m);
    let z0 = z.get(0);
    if z0 == 0.0 {
        return Err(Error::ZeroInput);
    }
    let popts = PeakOptions {
        count: opts.peaks,
        min_separation: opts.min_separation,
        window: (0, opts.j_max as i64),
        relative_floor: opts.relative_floor,
    };
    let floor = popts.relative_floor * window_max(&z, popts.window);
    let candidates: Vec<i64> = local_maxima(&z, popts.window, floor)
        .into_iter()
        .filter(|&j| j != 0)
        .collect();
    let delays = greedy_select(&z, candidates, vec![0], &popts);
    let y0 = m.column(0);

    delays
        .par_iter()
        .map(|&j| {
            let col = m.column(j);
            let (direction, correlation) = match correction {
                Some(w) if j != 0 => fit_direction_corrected(&col, &y0, w, grid)?,
                _ => fit_direction(&col, grid)?,
            };
            Ok(EchoEstimate {
                delay: j,
                direction,
                gain: z.get(j) / z0,
                raw_column: col,
                correlation,
            })
        })
        .collect()
}
