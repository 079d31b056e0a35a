//! Greedy RBF composition.
//!
//! Each iteration places a translation step on the key point with the largest
//! position error and a spin step on the one with the largest orientation
//! error, choosing ρ by line search. With orbital steps enabled, a rotation
//! about the origin centered on the point with the largest orbital error
//! competes with the translation, and the candidate with the lower mean
//! position error is kept.
//!
//! A position step is only accepted if it lowers the mean position error. If
//! the worst point's candidate does not, the remaining points are tried in
//! order of decreasing error. The diffeomorphism bound ties the kernel width
//! to the translation length, so a long correction drags every neighbour
//! along; when no full correction helps, shortened ones are tried, which
//! admit narrower kernels. If even those fail the position chain stalls.

use std::cmp::Ordering;

use crate::geom::{UnitQuaternion, Vec3};
use crate::mapping::{central_jacobian, CompositionStep, DiffeoMap, Method};
use crate::Result;

use super::rho::{search_rho, step_cost, translation_rho_limit};
use super::{
    bounding_box, mean_orientation_error, mean_position_error, orbital_rotations, orientation_error, FitConfig,
    FitDiagnostics, KeyPointSet,
};

const JACOBIAN_CHECK_STEP: f64 = 1e-4;
/// Number of times a non-improving translation is shortened before giving up.
const DAMPING_HALVINGS: usize = 8;

pub fn fit_diff(inits: &KeyPointSet, goals: &KeyPointSet, cfg: &FitConfig) -> Result<(DiffeoMap, FitDiagnostics)> {
    fit_composition(inits, goals, cfg, Method::Diff)
}

pub fn fit_rdiff(inits: &KeyPointSet, goals: &KeyPointSet, cfg: &FitConfig) -> Result<(DiffeoMap, FitDiagnostics)> {
    fit_composition(inits, goals, cfg, Method::RDiff)
}

fn fit_composition(
    inits: &KeyPointSet,
    goals: &KeyPointSet,
    cfg: &FitConfig,
    method: Method,
) -> Result<(DiffeoMap, FitDiagnostics)> {
    cfg.validate()?;
    inits.check_aligned(goals)?;
    let chain = compose(&inits.positions(), &inits.orientations(), goals, cfg, method == Method::RDiff);
    let mut map = DiffeoMap::empty(method);
    map.orbital_about_c3 = cfg.orbital_about_c3;
    map.position_steps = chain.position_steps;
    map.orientation_steps = chain.orientation_steps;
    map.metadata = chain.diagnostics.clone();
    Ok((map, chain.diagnostics))
}

pub(crate) struct Chain {
    pub position_steps: Vec<CompositionStep>,
    pub orientation_steps: Vec<CompositionStep>,
    pub diagnostics: FitDiagnostics,
}

/// Runs the greedy loop from the given starting poses toward `goals`.
pub(crate) fn compose(
    start_positions: &[Vec3],
    start_orientations: &[UnitQuaternion],
    goals: &KeyPointSet,
    cfg: &FitConfig,
    orbital: bool,
) -> Chain {
    let goal_p = goals.positions();
    let goal_q = goals.orientations();
    let mut p = start_positions.to_vec();
    let mut q = start_orientations.to_vec();
    let mut position_steps = Vec::new();
    let mut orientation_steps = Vec::new();

    let mut fp = mean_position_error(&p, &goal_p);
    let mut fq = mean_orientation_error(&q, &goal_q);
    let mut costs = vec![fp];
    let mut stalled = false;

    while position_steps.len() < cfg.j_max {
        let pos_done = fp < cfg.position_threshold;
        let ori_done = fq < cfg.orientation_threshold;
        if pos_done && ori_done {
            break;
        }

        let pos_step = if pos_done { None } else { position_candidate(&p, &goal_p, fp, cfg, orbital) };
        let ori_step = if ori_done { None } else { spin_candidate(&p, &q, &goal_q, fq, cfg) };
        if pos_step.is_none() && ori_step.is_none() {
            stalled = true;
            break;
        }

        let pos_step = pos_step.unwrap_or_else(CompositionStep::null_translation);
        let ori_step = ori_step.unwrap_or_else(CompositionStep::null_spin);
        for (pk, qk) in p.iter_mut().zip(q.iter_mut()) {
            *qk = ori_step.apply_orientation(*pk, *qk);
            *pk = pos_step.apply_position(*pk, cfg.orbital_about_c3);
        }
        position_steps.push(pos_step);
        orientation_steps.push(ori_step);

        fp = mean_position_error(&p, &goal_p);
        fq = mean_orientation_error(&q, &goal_q);
        costs.push(fp);
    }

    let converged = fp < cfg.position_threshold && fq < cfg.orientation_threshold;
    Chain {
        diagnostics: FitDiagnostics {
            iterations: position_steps.len(),
            final_position_cost: fp,
            final_orientation_cost: fq,
            converged,
            per_iteration_costs: costs,
            stalled: stalled && !converged,
            ta_residual: None,
        },
        position_steps,
        orientation_steps,
    }
}

/// Indices sorted by decreasing error, ties toward the lower index.
fn ranked(errors: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..errors.len()).collect();
    idx.sort_by(|&a, &b| errors[b].partial_cmp(&errors[a]).unwrap_or(Ordering::Equal).then(a.cmp(&b)));
    idx
}

fn position_candidate(p: &[Vec3], goals: &[Vec3], current: f64, cfg: &FitConfig, orbital: bool) -> Option<CompositionStep> {
    let by_position = ranked(&p.iter().zip(goals).map(|(&a, &b)| (b - a).norm()).collect::<Vec<_>>());
    let (r, by_orbit) = if orbital {
        let r = orbital_rotations(p, goals);
        let errs: Vec<f64> = r.iter().map(|q| q.log().norm()).collect();
        (r, ranked(&errs))
    } else {
        (Vec::new(), Vec::new())
    };

    for attempt in 0..p.len() {
        let m = by_position[attempt];
        let translation = translation_candidate(p, goals, m, 1.0, cfg);
        let orbit = if orbital { orbital_candidate(p, goals, &r, by_orbit[attempt], cfg) } else { None };

        // the orbital candidate replaces the translation only if strictly better
        let chosen = match (translation, orbit) {
            (Some(t), Some(o)) if o.1 < t.1 => Some(o),
            (Some(t), _) => Some(t),
            (None, o) => o,
        };
        if let Some((step, cost)) = chosen {
            if cost < current {
                return Some(step);
            }
        }
    }

    // No full correction helps: the kernel the bound allows is too wide. A
    // shorter v admits a larger ρ, so halve it until a localized step helps.
    let mut fraction = 1.0;
    for _ in 0..DAMPING_HALVINGS {
        fraction *= 0.5;
        for &m in &by_position {
            if let Some((step, cost)) = translation_candidate(p, goals, m, fraction, cfg) {
                if cost < current {
                    return Some(step);
                }
            }
        }
    }
    None
}

/// Translation of point `m` by `fraction` of its remaining error.
fn translation_candidate(p: &[Vec3], goals: &[Vec3], m: usize, fraction: f64, cfg: &FitConfig) -> Option<(CompositionStep, f64)> {
    let v = (goals[m] - p[m]) * fraction;
    if v.norm() == 0.0 {
        return None;
    }
    let step = CompositionStep::translation(0.0, p[m], v);
    let upper = translation_rho_limit(v.norm());
    let cost = |rho: f64| step_cost(&step, rho, p, goals, false);
    let (rho, c) = search_rho(&cfg.rho_grid, upper, cost, |_| true).unwrap_or_else(|| (upper, cost(upper)));
    Some((CompositionStep { rho, ..step }, c))
}

fn orbital_candidate(
    p: &[Vec3],
    goals: &[Vec3],
    r: &[UnitQuaternion],
    o: usize,
    cfg: &FitConfig,
) -> Option<(CompositionStep, f64)> {
    // v₃ = r_goal ⊗ r̄_o with r_goal the identity
    let v3 = r[o].conj();
    if v3.log().norm() < 1e-12 {
        return None;
    }
    let step = CompositionStep::orbital(0.0, p[o], v3);
    let about = cfg.orbital_about_c3;
    let (lo, hi) = bounding_box(p);
    let mut probes: Vec<Vec3> = p.to_vec();
    for i in 0..8 {
        probes.push(Vec3::new(
            if i & 1 == 0 { lo.x } else { hi.x },
            if i & 2 == 0 { lo.y } else { hi.y },
            if i & 4 == 0 { lo.z } else { hi.z },
        ));
    }
    let orientation_preserving = |rho: f64| {
        let s = CompositionStep { rho, ..step };
        probes
            .iter()
            .all(|&x| central_jacobian(|y| s.apply_position(y, about), x, JACOBIAN_CHECK_STEP).determinant() > 0.0)
    };
    let cost = |rho: f64| step_cost(&step, rho, p, goals, about);
    let (rho, c) = search_rho(&cfg.rho_grid, f64::INFINITY, cost, orientation_preserving)?;
    Some((CompositionStep { rho, ..step }, c))
}

fn spin_candidate(
    p: &[Vec3],
    q: &[UnitQuaternion],
    goals: &[UnitQuaternion],
    current: f64,
    cfg: &FitConfig,
) -> Option<CompositionStep> {
    let errors: Vec<f64> = q.iter().zip(goals).map(|(&a, &b)| orientation_error(a, b)).collect();
    let n = ranked(&errors)[0];
    let v2 = goals[n] * q[n].conj();
    let step = CompositionStep::spin(0.0, p[n], v2);
    let cost = |rho: f64| {
        let s = CompositionStep { rho, ..step };
        let moved: Vec<UnitQuaternion> = p.iter().zip(q).map(|(&pk, &qk)| s.apply_orientation(pk, qk)).collect();
        mean_orientation_error(&moved, goals)
    };
    let (rho, c) = search_rho(&cfg.rho_grid, f64::INFINITY, cost, |_| true)?;
    (c < current).then_some(CompositionStep { rho, ..step })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fitting::rho::DIFFEO_BOUND;
    use crate::fitting::KeyPoint;
    use std::f64::consts::FRAC_PI_2;

    fn set(ps: &[Vec3]) -> KeyPointSet {
        KeyPointSet::from_positions(ps).unwrap()
    }

    #[test]
    fn no_error_means_no_steps() {
        let s = set(&[Vec3::new(0.1, 0.2, 0.3), Vec3::new(0.4, 0.1, 0.2)]);
        for fit in [fit_diff, fit_rdiff] {
            let (map, diag) = fit(&s, &s, &FitConfig::default()).unwrap();
            assert!(map.is_empty());
            assert!(diag.converged);
            assert_eq!(diag.iterations, 0);
        }
    }

    #[test]
    fn single_point_translation_in_one_step() {
        let a = set(&[Vec3::new(0.3, 0.3, 0.3)]);
        let b = set(&[Vec3::new(0.35, 0.28, 0.4)]);
        let (map, diag) = fit_diff(&a, &b, &FitConfig::default()).unwrap();
        assert_eq!(diag.iterations, 1);
        assert!(diag.converged);
        assert!(diag.final_position_cost < 1e-12);
        assert_eq!(map.position_steps[0].kind, crate::mapping::StepKind::Translation);

        // the translation candidate is exact, so the orbital branch never wins
        let (map, diag) = fit_rdiff(&a, &b, &FitConfig::default()).unwrap();
        assert_eq!(diag.iterations, 1);
        assert_eq!(map.position_steps[0].kind, crate::mapping::StepKind::Translation);
    }

    #[test]
    fn translation_steps_respect_bound() {
        let a = set(&[Vec3::new(0.1, 0.1, 0.1), Vec3::new(0.5, 0.2, 0.3), Vec3::new(0.3, 0.5, 0.2), Vec3::new(0.2, 0.3, 0.5)]);
        let b = set(&[Vec3::new(0.4, 0.2, 0.1), Vec3::new(0.2, 0.4, 0.5), Vec3::new(0.5, 0.5, 0.4), Vec3::new(0.1, 0.2, 0.3)]);
        let (map, diag) = fit_diff(&a, &b, &FitConfig::default()).unwrap();
        for s in &map.position_steps {
            let v = s.v_translation.norm();
            if v > 0.0 {
                assert!(s.rho < DIFFEO_BOUND / v);
            }
        }
        assert!(diag.per_iteration_costs.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn rotated_workspace_prefers_orbital_steps() {
        let pts = [Vec3::new(0.4, 0.1, 0.0), Vec3::new(0.1, 0.45, 0.0), Vec3::new(-0.35, 0.15, 0.0), Vec3::new(0.05, -0.4, 0.0)];
        let rot = UnitQuaternion::rot_z(FRAC_PI_2);
        let goals: Vec<Vec3> = pts.iter().map(|&p| rot.rotate(p)).collect();
        let (a, b) = (set(&pts), set(&goals));
        let cfg = FitConfig::default();
        let (rmap, rdiag) = fit_rdiff(&a, &b, &cfg).unwrap();
        let (_, ddiag) = fit_diff(&a, &b, &cfg).unwrap();
        assert_eq!(rmap.position_steps[0].kind, crate::mapping::StepKind::Orbital);
        assert!(rdiag.converged);
        assert!(rdiag.final_position_cost <= 0.005);
        assert!(rdiag.iterations < ddiag.iterations, "rdiff {} diff {}", rdiag.iterations, ddiag.iterations);
    }

    #[test]
    fn orientation_is_fitted() {
        let a = KeyPointSet::new(vec![
            KeyPoint::new("a", Vec3::new(0.2, 0.2, 0.2)),
            KeyPoint::new("b", Vec3::new(0.5, 0.2, 0.2)),
        ])
        .unwrap();
        let b = KeyPointSet::new(vec![
            KeyPoint::new("a", Vec3::new(0.2, 0.2, 0.2)).with_orientation(UnitQuaternion::rot_x(0.8)),
            KeyPoint::new("b", Vec3::new(0.5, 0.2, 0.2)).with_orientation(UnitQuaternion::rot_y(-0.5)),
        ])
        .unwrap();
        let (map, diag) = fit_diff(&a, &b, &FitConfig::default()).unwrap();
        assert!(diag.converged, "{diag:?}");
        for (kp, goal) in a.points().iter().zip(b.points()) {
            let q = map.map_orientation(kp.position, kp.orientation);
            assert!(orientation_error(q, goal.orientation) < 0.02);
        }
    }

    #[test]
    fn stalls_rather_than_increase_cost() {
        // two coincident points that must separate: no RBF step can split them
        let a = KeyPointSet::new(vec![KeyPoint::new("a", Vec3::new(0.3, 0.3, 0.3)), KeyPoint::new("b", Vec3::new(0.3, 0.3, 0.3))]).unwrap();
        let b = KeyPointSet::new(vec![KeyPoint::new("a", Vec3::new(0.5, 0.3, 0.3)), KeyPoint::new("b", Vec3::new(0.1, 0.3, 0.3))]).unwrap();
        let (_, diag) = fit_diff(&a, &b, &FitConfig::default()).unwrap();
        assert!(!diag.converged);
        assert!(diag.stalled);
        assert!(diag.per_iteration_costs.windows(2).all(|w| w[1] <= w[0]));
    }
}
