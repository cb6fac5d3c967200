//! One-dimensional α search: global log grid, then golden-section
//! refinement (in log α) around the best grid point.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad::golden_min;

/// Grid values within this relative distance of the minimum count as ties.
pub const TIE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaSearchConfig {
    pub grid_min: f64,
    pub grid_max: f64,
    pub grid_points: usize,
    /// Relative width at which golden-section refinement stops.
    pub refine_tol: f64,
}

impl AlphaSearchConfig {
    /// Analysis default; the upper end is further clipped to `0.999·(−2r)`.
    pub fn analysis() -> Self {
        Self { grid_min: 1e-3, grid_max: f64::INFINITY, grid_points: 200, refine_tol: 1e-6 }
    }

    /// Synthesis default: `[1e-3, 1e3]`.
    pub fn synthesis() -> Self {
        Self { grid_min: 1e-3, grid_max: 1e3, grid_points: 200, refine_tol: 1e-6 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.grid_min > 0.0 && self.grid_min.is_finite()) {
            return Err(Error::InvalidModel(format!("grid_min must be positive, got {}", self.grid_min)));
        }
        if !(self.grid_max > self.grid_min) {
            return Err(Error::InvalidModel(format!(
                "grid_max ({}) must exceed grid_min ({})",
                self.grid_max, self.grid_min
            )));
        }
        if self.grid_points < 16 {
            return Err(Error::InvalidModel(format!("grid_points must be at least 16, got {}", self.grid_points)));
        }
        if !(self.refine_tol > 0.0 && self.refine_tol < 1.0) {
            return Err(Error::InvalidModel(format!("refine_tol must lie in (0, 1), got {}", self.refine_tol)));
        }
        Ok(())
    }
}

impl Default for AlphaSearchConfig {
    fn default() -> Self {
        Self::analysis()
    }
}

/// Which end of the grid the minimizer landed on, if any.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    Low,
    High,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlphaMinimum {
    pub alpha: f64,
    pub value: f64,
    /// Grid samples `(α, value)`, increasing in α.
    pub curve: Vec<(f64, f64)>,
    pub boundary: Option<Boundary>,
}

/// `n` log-spaced points on `[lo, hi]`, endpoints included exactly.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| match i {
            0 => lo,
            _ if i == n - 1 => hi,
            _ => (a + (b - a) * i as f64 / (n - 1) as f64).exp(),
        })
        .collect()
}

/// Indices of strict interior local minima of a sampled curve.
pub fn local_minima(curve: &[(f64, f64)]) -> Vec<usize> {
    (1..curve.len().saturating_sub(1))
        .filter(|&i| curve[i].1 < curve[i - 1].1 && curve[i].1 <= curve[i + 1].1)
        .collect()
}

/// Minimize `f` over `[lo, hi]` with the grid size and tolerance of `cfg`.
///
/// Ties between grid values go to the smaller α. Non-finite values are
/// treated as `+∞`; an error is returned only if every grid value is.
pub fn minimize<F>(f: F, lo: f64, hi: f64, cfg: &AlphaSearchConfig) -> Result<AlphaMinimum>
where
    F: Fn(f64) -> Result<f64>,
{
    if !(lo > 0.0 && hi > lo) {
        return Err(Error::InvalidModel(format!("empty α range [{lo}, {hi}]")));
    }
    let grid = log_grid(lo, hi, cfg.grid_points);
    let curve: Vec<(f64, f64)> = grid.iter().map(|&a| f(a).map(|v| (a, v))).collect::<Result<_>>()?;
    let finite = |v: f64| if v.is_finite() { v } else { f64::INFINITY };
    let vmin = curve.iter().map(|&(_, v)| finite(v)).fold(f64::INFINITY, f64::min);
    if !vmin.is_finite() {
        return Err(Error::NumericalFailure("objective is non-finite on the whole α grid".into()));
    }
    let best = curve
        .iter()
        .position(|&(_, v)| finite(v) - vmin <= TIE_TOL * vmin.abs())
        .expect("a finite minimum exists");
    let last = curve.len() - 1;
    let boundary = match best {
        0 => Some(Boundary::Low),
        i if i == last => Some(Boundary::High),
        _ => None,
    };

    let (l, h) = (grid[best.saturating_sub(1)].ln(), grid[(best + 1).min(last)].ln());
    let g = |s: f64| f(s.exp()).map(finite);
    let (s, v) = golden_min(g, l, h, cfg.refine_tol)?;
    let (alpha, value) = if v < curve[best].1 { (s.exp(), v) } else { curve[best] };
    log::debug!("α search on [{lo:.3e}, {hi:.3e}]: α̂ = {alpha:.6}, value = {value:.9}");
    Ok(AlphaMinimum { alpha, value, curve, boundary })
}
