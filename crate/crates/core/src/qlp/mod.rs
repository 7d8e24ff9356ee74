//! Sampled quasi-linear programs.
//!
//! A problem over `x in R^d` minimizes `(lambda, ||x||^2)` in lexicographic
//! order subject to `x in X` and `a_i^T x <= lambda * b_i^T x` for every
//! sampled pair `(a_i, b_i)`. `X` is the intersection of the common sets; it
//! must be compact, convex, exclude the origin, and keep every `b_i^T x`
//! positive.
//!
//! For fixed `lambda` the sampled constraints are half-spaces through the
//! origin, so feasibility is monotone in `lambda` and the optimum is found by
//! bisection. At the final feasible level the minimum-norm feasible point is
//! the projection of the origin onto the feasible set, computed with
//! Dykstra's algorithm.

mod dykstra;
mod essential;
mod sets;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::symmat::dot;

pub use dykstra::{project_intersection, Projection};
pub use essential::{essential_set_exhaustive, essential_set_greedy, EssentialSet, EssentialTolerance, EXHAUSTIVE_CAP};
pub use sets::{CommonSet, Halfspace, PolyhedralCone, Projector};

use dykstra::{dykstra, DykstraConfig};

/// One sampled constraint `a^T x <= lambda * b^T x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl Constraint {
    pub fn new(a: Vec<f64>, b: Vec<f64>) -> Self {
        Self { a, b }
    }

    /// `a^T x - lambda * b^T x`; positive means violated.
    pub fn excess(&self, lambda: f64, x: &[f64]) -> f64 {
        dot(&self.a, x) - lambda * dot(&self.b, x)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QlpInstance {
    d: usize,
    constraints: Vec<Constraint>,
    common_set: Vec<CommonSet>,
}

impl QlpInstance {
    /// Validates dimensions and probes the common set: the projection of the
    /// origin onto `X` must exist, be nonzero, and be fixed by every set.
    pub fn new(d: usize, constraints: Vec<Constraint>, common_set: Vec<CommonSet>) -> Result<Self> {
        if d == 0 {
            return Err(Error::Dimension("problem dimension must be at least 1".into()));
        }
        if common_set.is_empty() {
            return Err(Error::Parameter("common set needs at least one member".into()));
        }
        for s in &common_set {
            s.validate(d)?;
        }
        if !common_set.iter().any(Projector::is_bounded) {
            return Err(Error::Parameter("common set is not bounded; add a ball, box or Frobenius ball".into()));
        }
        for (i, c) in constraints.iter().enumerate() {
            if c.a.len() != d || c.b.len() != d {
                return Err(Error::Dimension(format!("constraint {i} does not live in R^{d}")));
            }
        }
        let inst = Self { d, constraints, common_set };

        let probe = inst.project_onto_common(PROBE_TOL, DEFAULT_MAX_ITER);
        if probe.residual > PROBE_TOL {
            return Err(Error::Parameter(format!(
                "common set looks empty: projection residual {:.3e}",
                probe.residual
            )));
        }
        let scale = 1.0 + sets::norm(&probe.point);
        if sets::norm(&probe.point) <= 1e3 * PROBE_TOL * scale {
            return Err(Error::Parameter("common set contains the origin".into()));
        }
        Ok(inst)
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn common_set(&self) -> &[CommonSet] {
        &self.common_set
    }

    /// Same common set, constraints restricted to `indices` (in that order).
    pub fn restrict(&self, indices: &[usize]) -> Self {
        Self {
            d: self.d,
            constraints: indices.iter().map(|&i| self.constraints[i].clone()).collect(),
            common_set: self.common_set.clone(),
        }
    }

    /// Adds one constraint; the common set was probed already.
    pub fn with_constraint(&self, c: Constraint) -> Result<Self> {
        if c.a.len() != self.d || c.b.len() != self.d {
            return Err(Error::Dimension(format!("constraint does not live in R^{}", self.d)));
        }
        let mut next = self.clone();
        next.constraints.push(c);
        Ok(next)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let raw: QlpInstance = serde_json::from_str(s)?;
        Self::new(raw.d, raw.constraints, raw.common_set)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    fn project_onto_common(&self, tol: f64, max_iter: usize) -> Projection {
        let common = self.common_projectors();
        let sets: Vec<&dyn Projector> = common.iter().map(|s| s.as_ref()).collect();
        project_intersection(&vec![0.0; self.d], &sets, tol, max_iter)
    }

    /// The common set with `P >= I` and a Frobenius ball merged into one
    /// exactly projected set.
    fn common_projectors(&self) -> Vec<Box<dyn Projector>> {
        let psd = self.common_set.iter().find_map(|s| match s {
            CommonSet::PsdShifted { n } => Some(*n),
            _ => None,
        });
        let ball = self
            .common_set
            .iter()
            .filter_map(|s| match s {
                CommonSet::FroBall { radius } => Some(*radius),
                _ => None,
            })
            .reduce(f64::min);
        match (psd, ball) {
            (Some(n), Some(radius)) if radius >= (n as f64).sqrt() => {
                let mut out: Vec<Box<dyn Projector>> = vec![Box::new(sets::ShiftedPsdBall { n, radius })];
                out.extend(
                    self.common_set
                        .iter()
                        .filter(|s| !matches!(s, CommonSet::FroBall { .. } | CommonSet::PsdShifted { .. }))
                        .map(|s| Box::new(s.clone()) as Box<dyn Projector>),
                );
                out
            }
            _ => self.common_set.iter().map(|s| Box::new(s.clone()) as Box<dyn Projector>).collect(),
        }
    }

    fn common_residual(&self, x: &[f64]) -> f64 {
        self.common_set.iter().map(|s| s.distance(x)).fold(0.0, f64::max)
    }

    fn max_violation(&self, lambda: f64, x: &[f64]) -> f64 {
        self.constraints.iter().map(|c| c.excess(lambda, x)).fold(0.0, f64::max)
    }
}

const PROBE_TOL: f64 = 1e-9;
pub const DEFAULT_MAX_ITER: usize = 20_000;
pub const DEFAULT_TOL_FEAS: f64 = 1e-7;
pub const DEFAULT_REL_TOL_LAMBDA: f64 = 1e-6;
pub const DEFAULT_TOL_VIOL: f64 = 1e-9;
const LAMBDA_CAP: f64 = 1.152_921_504_606_847e18; // 2^60

/// Which quantity the bisection is uniform in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Search {
    /// Bisect on `lambda` itself.
    #[default]
    Lambda,
    /// Bisect on `sqrt(lambda)`; brackets and widths are given in that unit.
    SqrtLambda,
}

impl Search {
    fn to_lambda(self, t: f64) -> f64 {
        match self {
            Search::Lambda => t,
            Search::SqrtLambda => t * t,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    /// Final bracket width; `None` means `1e-6` times the bracket top.
    pub tol_lambda: Option<f64>,
    /// Feasibility tolerance, scaled by `1 + ||x||`. Projections run at a
    /// tenth of it.
    pub tol_feas: f64,
    pub max_iter: usize,
    /// Known feasible bracket top; probed by doubling from 1 when absent.
    pub lambda_hi: Option<f64>,
    pub search: Search,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol_lambda: None,
            tol_feas: DEFAULT_TOL_FEAS,
            max_iter: DEFAULT_MAX_ITER,
            lambda_hi: None,
            search: Search::Lambda,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Optimal,
    FeasibilityUncertain,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QlpSolution {
    pub lambda_star: f64,
    pub x_star: Vec<f64>,
    /// Largest `(a - lambda* b)^T x*` over the sampled constraints, clipped at 0.
    pub max_violation: f64,
    /// Distance estimate from `x*` to the common set.
    pub set_residual: f64,
    pub status: SolveStatus,
    /// Width of the final bisection bracket, in the search unit.
    pub bracket_width: f64,
    /// Top of the initial bracket, in the search unit.
    pub bracket_top: f64,
}

impl QlpSolution {
    /// Secondary cost `||x*||^2`.
    pub fn cost(&self) -> f64 {
        dot(&self.x_star, &self.x_star)
    }
}

/// Result of the feasibility oracle at one level.
#[derive(Debug, Clone)]
pub struct Feasibility {
    pub feasible: bool,
    pub witness: Vec<f64>,
    pub residual: f64,
    /// Infeasibility was proven by a separating direction rather than
    /// inferred from a stalled residual.
    pub certified: bool,
}

/// The sampled constraints at level `lambda` as one cone `{x : (a_i - lambda b_i)^T x <= 0}`.
fn level_cone(inst: &QlpInstance, lambda: f64) -> PolyhedralCone {
    let normals: Vec<Vec<f64>> = inst
        .constraints
        .iter()
        .map(|c| c.a.iter().zip(&c.b).map(|(a, b)| a - lambda * b).collect())
        .collect();
    PolyhedralCone::new(inst.d, normals.iter().map(Vec::as_slice))
}

fn run_level(inst: &QlpInstance, lambda: f64, start: &[f64], cfg: DykstraConfig) -> Projection {
    let cone = level_cone(inst, lambda);
    let common = inst.common_projectors();
    let mut sets: Vec<&dyn Projector> = vec![&cone];
    sets.extend(common.iter().map(|s| s.as_ref()));
    dykstra(start, &sets, cfg)
}

/// Is there `x in X` with `(a_i - lambda b_i)^T x <= 0` for every sample?
pub fn feasible_at(inst: &QlpInstance, lambda: f64, tol_feas: f64, max_iter: usize) -> Result<Feasibility> {
    if !(lambda >= 0.0) {
        return Err(Error::Parameter(format!("lambda must be nonnegative, got {lambda}")));
    }
    let cfg = DykstraConfig {
        tol: tol_feas,
        relative: true,
        max_iter,
        stop_on_feasible: true,
        detect_stall: true,
        separate: true,
        corrections: true,
    };
    let mut p = run_level(inst, lambda, &vec![0.0; inst.d], cfg);
    // Dykstra can sit on a slightly infeasible corner while its corrections
    // grow, long enough to look stalled. Plain alternation leaves at once.
    if !p.separated && !(p.residual <= tol_feas * (1.0 + sets::norm(&p.point))) {
        let start = p.point.clone();
        let q = run_level(inst, lambda, &start, DykstraConfig { corrections: false, ..cfg });
        if q.separated || q.residual < p.residual {
            p = q;
        }
    }
    let feasible = !p.separated && p.residual <= tol_feas * (1.0 + sets::norm(&p.point));
    Ok(Feasibility { feasible, witness: p.point, residual: p.residual, certified: p.separated })
}

/// Lexicographic minimizer of `(lambda, ||x||^2)`.
pub fn solve(inst: &QlpInstance, opts: &SolveOptions) -> Result<QlpSolution> {
    if !(opts.tol_feas > 0.0) || opts.max_iter == 0 {
        return Err(Error::Parameter("tolerances and iteration cap must be positive".into()));
    }
    if let Some(t) = opts.tol_lambda {
        if !(t > 0.0) {
            return Err(Error::Parameter(format!("tol_lambda must be positive, got {t}")));
        }
    }
    let feasible = |t: f64| feasible_at(inst, opts.search.to_lambda(t), opts.tol_feas, opts.max_iter).map(|f| f.feasible);

    let (lo, hi) = if inst.constraints.is_empty() || feasible(0.0)? {
        (0.0, 0.0)
    } else {
        let mut hi = match opts.lambda_hi {
            Some(h) if !(h > 0.0 && h.is_finite()) => {
                return Err(Error::Parameter(format!("degenerate bracket [0, {h}]")));
            }
            Some(h) => match opts.search {
                Search::Lambda => h,
                Search::SqrtLambda => h.sqrt(),
            },
            None => 1.0,
        };
        let cap = match opts.search {
            Search::Lambda => LAMBDA_CAP,
            Search::SqrtLambda => LAMBDA_CAP.sqrt(),
        };
        let mut lo = 0.0;
        while !feasible(hi)? {
            lo = hi;
            hi *= 2.0;
            if hi > cap {
                return Err(Error::Infeasible { cap: LAMBDA_CAP });
            }
        }
        let top = hi;
        let tol = opts.tol_lambda.unwrap_or(DEFAULT_REL_TOL_LAMBDA * top);
        while hi - lo > tol {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if feasible(mid)? {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        (lo, hi)
    };

    let lambda_star = opts.search.to_lambda(hi);
    let tol_proj = opts.tol_feas / 10.0;
    let p = if inst.constraints.is_empty() {
        inst.project_onto_common(tol_proj, opts.max_iter)
    } else {
        run_level(
            inst,
            lambda_star,
            &vec![0.0; inst.d],
            DykstraConfig {
                tol: tol_proj,
                relative: true,
                max_iter: opts.max_iter,
                stop_on_feasible: false,
                detect_stall: false,
                separate: false,
                corrections: true,
            },
        )
    };
    let x_star = p.point;
    let scale = 1.0 + sets::norm(&x_star);
    let set_residual = inst.common_residual(&x_star);
    let max_violation = inst.max_violation(lambda_star, &x_star);
    // Movement of the iterate is not part of the test: near lambda* the
    // feasible set is thin and Dykstra creeps long after the residual is met.
    let status = if p.residual <= tol_proj * scale && set_residual <= tol_proj * scale && max_violation <= opts.tol_feas * scale {
        SolveStatus::Optimal
    } else {
        SolveStatus::FeasibilityUncertain
    };
    let bracket_top = if hi == 0.0 { 0.0 } else { opts.lambda_hi.map_or(hi, |h| match opts.search {
        Search::Lambda => h,
        Search::SqrtLambda => h.sqrt(),
    }) };
    Ok(QlpSolution {
        lambda_star,
        x_star,
        max_violation,
        set_residual,
        status,
        bracket_width: hi - lo,
        bracket_top,
    })
}

/// Default violation slack: `1e-9` relative to the size of `lambda* b^T x*`.
pub fn default_tol_viol(sol: &QlpSolution, b: &[f64]) -> f64 {
    DEFAULT_TOL_VIOL * (sol.lambda_star * dot(b, &sol.x_star)).abs().max(1.0)
}

/// Would adding `(a, b)` change the optimum?
///
/// A satisfied constraint leaves `Opt` unchanged, and since the optimum is
/// unique a violated one strictly increases the lexicographic cost, so the
/// test reduces to `a^T x* > lambda* b^T x*`.
pub fn violates(sol: &QlpSolution, a: &[f64], b: &[f64], tol_viol: f64) -> Result<bool> {
    if sol.status != SolveStatus::Optimal {
        return Err(Error::State("violation test needs an optimal solution".into()));
    }
    Ok(dot(a, &sol.x_star) > sol.lambda_star * dot(b, &sol.x_star) + tol_viol)
}

/// Fraction of `m` fresh samples that [`violates`] flags.
pub fn estimate_violation_probability<F>(sol: &QlpSolution, mut sampler: F, m: usize, rng: &mut Rng) -> Result<f64>
where
    F: FnMut(&mut Rng) -> Constraint,
{
    if m == 0 {
        return Err(Error::Parameter("need at least one sample".into()));
    }
    let mut hits = 0usize;
    for _ in 0..m {
        let c = sampler(rng);
        let tol = default_tol_viol(sol, &c.b);
        if violates(sol, &c.a, &c.b, tol)? {
            hits += 1;
        }
    }
    Ok(hits as f64 / m as f64)
}
