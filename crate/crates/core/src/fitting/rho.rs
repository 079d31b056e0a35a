//! One-dimensional search for the RBF shape parameter ρ.

use serde::{Deserialize, Serialize};

use crate::geom::Vec3;
use crate::mapping::CompositionStep;
use crate::{Error, Result};

use super::mean_position_error;

/// `e^{1/2}/√2`: translation steps with `ρ‖v‖` below this are diffeomorphic.
pub const DIFFEO_BOUND: f64 = 1.165_821_990_798_562_2;
/// Fraction of the bound actually used.
pub const BOUND_SAFETY: f64 = 0.99;

const GOLDEN_ITERATIONS: usize = 40;

/// Log-spaced candidate values for ρ [1/m].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RhoGrid {
    pub count: usize,
    pub min: f64,
    pub max: f64,
}

impl Default for RhoGrid {
    fn default() -> Self {
        Self { count: 64, min: 0.1, max: 100.0 }
    }
}

impl RhoGrid {
    pub fn validate(&self) -> Result<()> {
        if self.count < 2 || !(self.min > 0.0 && self.max > self.min && self.max.is_finite()) {
            return Err(Error::Config(format!("invalid rho grid {self:?}")));
        }
        Ok(())
    }

    pub fn values(&self) -> Vec<f64> {
        let (a, b) = (self.min.ln(), self.max.ln());
        let n = self.count - 1;
        (0..=n).map(|i| if i == n { self.max } else { (a + (b - a) * i as f64 / n as f64).exp() }).collect()
    }
}

/// Largest admissible ρ for a translation of norm `v_norm`, including the
/// safety factor. Infinite for a zero translation.
pub fn translation_rho_limit(v_norm: f64) -> f64 {
    if v_norm > 0.0 {
        BOUND_SAFETY * DIFFEO_BOUND / v_norm
    } else {
        f64::INFINITY
    }
}

/// Minimizes `cost` over the grid restricted to `ρ ≤ upper` and to values
/// accepted by `feasible`, then refines by golden-section search between the
/// neighbours of the best grid value. Ties go to the larger ρ.
///
/// Returns `None` when no grid value is admissible.
pub(crate) fn search_rho<C, F>(grid: &RhoGrid, upper: f64, cost: C, feasible: F) -> Option<(f64, f64)>
where
    C: Fn(f64) -> f64,
    F: Fn(f64) -> bool,
{
    let candidates: Vec<f64> = grid.values().into_iter().filter(|&r| r <= upper && feasible(r)).collect();
    let mut best: Option<(usize, f64)> = None;
    for (i, &r) in candidates.iter().enumerate() {
        let c = cost(r);
        if best.is_none_or(|(_, bc)| c <= bc) {
            best = Some((i, c));
        }
    }
    let (i, best_cost) = best?;
    let mut best = (candidates[i], best_cost);

    let lo = if i > 0 { candidates[i - 1] } else { candidates[i] };
    let hi = if i + 1 < candidates.len() { candidates[i + 1] } else { candidates[i] };
    if hi > lo {
        let (r, c) = golden_section(lo.ln(), hi.ln(), |t| cost(t.exp()));
        let r = r.exp();
        if c < best.1 && r <= upper && feasible(r) {
            best = (r, c);
        }
    }
    Some(best)
}

fn golden_section<C: Fn(f64) -> f64>(mut a: f64, mut b: f64, f: C) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - inv_phi * (b - a);
    let mut x2 = a + inv_phi * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..GOLDEN_ITERATIONS {
        if f1 < f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = f(x2);
        }
    }
    if f1 < f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Best ρ for a candidate position step with fixed `c` and `v`, measured by the
/// mean key-point error after applying the step to `points`.
///
/// With `bound` set (translation steps), ρ is kept below
/// `0.99·e^{1/2}/(√2‖v‖)`; if no grid value survives, that limit is returned.
pub fn optimize_rho(step: &CompositionStep, points: &[Vec3], goals: &[Vec3], bound: bool, grid: &RhoGrid) -> f64 {
    let upper = if bound { translation_rho_limit(step.v_translation.norm()) } else { f64::INFINITY };
    let cost = |rho: f64| step_cost(step, rho, points, goals, false);
    match search_rho(grid, upper, cost, |_| true) {
        Some((rho, _)) => rho,
        None => upper,
    }
}

pub(crate) fn step_cost(step: &CompositionStep, rho: f64, points: &[Vec3], goals: &[Vec3], about_center: bool) -> f64 {
    let s = CompositionStep { rho, ..*step };
    let moved: Vec<Vec3> = points.iter().map(|&p| s.apply_position(p, about_center)).collect();
    mean_position_error(&moved, goals)
}
