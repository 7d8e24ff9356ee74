//! Dykstra's cyclic projection algorithm.
//!
//! Each set keeps a correction term; the iterate converges to the Euclidean
//! projection of the starting point onto the intersection. When the sets do
//! not intersect the per-cycle residual settles at a positive value, which is
//! what the feasibility oracle reads.

use super::sets::{dist, norm, Projector};

/// Outcome of [`project_intersection`].
#[derive(Debug, Clone)]
pub struct Projection {
    pub point: Vec<f64>,
    /// Largest distance from `point` to any of the sets.
    pub residual: f64,
    pub cycles: usize,
    pub converged: bool,
    /// The correction of the first set separates it from the second, so the
    /// two sets do not meet.
    pub separated: bool,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct DykstraConfig {
    pub tol: f64,
    /// Scale `tol` by `1 + ||x||`.
    pub relative: bool,
    pub max_iter: usize,
    /// Stop as soon as the residual is below tolerance, without waiting for
    /// the iterate to settle.
    pub stop_on_feasible: bool,
    /// Give up when doubling the cycle count no longer shrinks the residual.
    pub detect_stall: bool,
    /// With exactly two sets, test the first set's correction `w` (a normal
    /// direction of that set) for `min { w^T x : x in second set } > 0`,
    /// which proves the sets disjoint.
    pub separate: bool,
    /// Carry Dykstra's corrections. Without them this is plain alternating
    /// projection, which finds some common point rather than the nearest one.
    pub corrections: bool,
}

const STALL_MIN_CYCLES: usize = 1024;
const STALL_RATIO: f64 = 0.99;
const SEPARATION_MARGIN: f64 = 1e-12;

/// Projects `x0` onto the intersection of `sets`.
///
/// Returns once the point is within `tol` of every set and moved less than
/// `tol` over the last cycle, or after `max_iter` cycles. In the latter case
/// `residual > tol` and the reported point is the best cycle seen.
pub fn project_intersection(x0: &[f64], sets: &[&dyn Projector], tol: f64, max_iter: usize) -> Projection {
    assert!(tol > 0.0, "tolerance must be positive");
    dykstra(
        x0,
        sets,
        DykstraConfig { tol, relative: false, max_iter, stop_on_feasible: false, detect_stall: false, separate: false, corrections: true },
    )
}

pub(crate) fn dykstra(x0: &[f64], sets: &[&dyn Projector], cfg: DykstraConfig) -> Projection {
    assert!(!sets.is_empty(), "need at least one set");
    let d = x0.len();
    let k = sets.len();
    let mut x = x0.to_vec();
    let mut prev = vec![0.0; d];
    let mut before = vec![0.0; d];
    let mut corrections = vec![0.0; k * d];
    let mut nonzero = vec![false; k];

    let mut best = Projection { point: x.clone(), residual: f64::INFINITY, cycles: 0, converged: false, separated: false };
    let mut checkpoint = f64::INFINITY;

    for cycle in 1..=cfg.max_iter {
        prev.copy_from_slice(&x);
        for (i, set) in sets.iter().enumerate() {
            let q = &mut corrections[i * d..(i + 1) * d];
            if cfg.corrections && nonzero[i] {
                x.iter_mut().zip(q.iter()).for_each(|(xi, qi)| *xi += qi);
            }
            before.copy_from_slice(&x);
            set.project(&mut x);
            let mut any = false;
            for ((qi, b), xi) in q.iter_mut().zip(&before).zip(&x) {
                *qi = b - xi;
                any |= *qi != 0.0;
            }
            nonzero[i] = any;
        }

        let check = cycle <= 16 || cycle % 2 == 0 || cycle == cfg.max_iter;
        if !check {
            continue;
        }
        let residual = sets.iter().map(|s| s.distance(&x)).fold(0.0, f64::max);
        let tol = if cfg.relative { cfg.tol * (1.0 + norm(&x)) } else { cfg.tol };
        if residual < best.residual || !best.residual.is_finite() {
            best.point.copy_from_slice(&x);
            best.residual = residual;
        }
        best.cycles = cycle;
        if residual <= tol && (cfg.stop_on_feasible || dist(&x, &prev) <= tol) {
            return Projection { point: x, residual, cycles: cycle, converged: true, separated: false };
        }
        if !residual.is_finite() {
            break;
        }
        if cfg.separate && k == 2 && nonzero[0] {
            let w = &corrections[..d];
            if let Some(m) = sets[1].support_min(w) {
                if m > SEPARATION_MARGIN * norm(w) * (1.0 + norm(&x)) {
                    best.separated = true;
                    break;
                }
            }
        }
        if cycle.is_power_of_two() && cycle >= STALL_MIN_CYCLES / 2 {
            if cfg.detect_stall && cycle >= STALL_MIN_CYCLES && residual > tol && residual >= STALL_RATIO * checkpoint {
                break;
            }
            checkpoint = residual;
        }
    }
    best
}
