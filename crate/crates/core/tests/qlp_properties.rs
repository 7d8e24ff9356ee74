//! Solver properties on random two-dimensional instances, checked against
//! exact polygon geometry.

use proptest::prelude::*;
use scenario_jsr::qlp::{
    essential_set_exhaustive, feasible_at, solve, violates, CommonSet, Constraint, EssentialTolerance, QlpInstance,
    SolveOptions, SolveStatus,
};

type Pt = (f64, f64);

#[derive(Debug, Clone)]
struct Inst {
    lo: Pt,
    hi: Pt,
    cons: Vec<(Pt, Pt)>,
}

impl Inst {
    fn qlp(&self) -> QlpInstance {
        let cons = self.cons.iter().map(|&((a0, a1), (b0, b1))| Constraint::new(vec![a0, a1], vec![b0, b1])).collect();
        let set = CommonSet::Box { lo: vec![self.lo.0, self.lo.1], hi: vec![self.hi.0, self.hi.1] };
        QlpInstance::new(2, cons, vec![set]).unwrap()
    }

    /// The feasible polygon at `lambda`: the box clipped by each
    /// `(a - lambda b)^T x <= 0`.
    fn polygon(&self, lambda: f64) -> Vec<Pt> {
        let mut poly = vec![self.lo, (self.hi.0, self.lo.1), self.hi, (self.lo.0, self.hi.1)];
        for &((a0, a1), (b0, b1)) in &self.cons {
            poly = clip(&poly, (a0 - lambda * b0, a1 - lambda * b1));
            if poly.is_empty() {
                break;
            }
        }
        poly
    }
}

/// Sutherland-Hodgman clip of a convex polygon by `h^T x <= 0`.
fn clip(poly: &[Pt], h: Pt) -> Vec<Pt> {
    let f = |p: Pt| h.0 * p.0 + h.1 * p.1;
    let mut out = Vec::new();
    for i in 0..poly.len() {
        let (p, q) = (poly[i], poly[(i + 1) % poly.len()]);
        let (fp, fq) = (f(p), f(q));
        if fp <= 0.0 {
            out.push(p);
        }
        if (fp < 0.0 && fq > 0.0) || (fp > 0.0 && fq < 0.0) {
            let t = fp / (fp - fq);
            out.push((p.0 + t * (q.0 - p.0), p.1 + t * (q.1 - p.1)));
        }
    }
    out
}

/// Smallest `|x|^2` over a convex polygon that excludes the origin.
fn min_norm_sq(poly: &[Pt]) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..poly.len() {
        let (p, q) = (poly[i], poly[(i + 1) % poly.len()]);
        let d = (q.0 - p.0, q.1 - p.1);
        let len = d.0 * d.0 + d.1 * d.1;
        let t = if len > 0.0 { (-(p.0 * d.0 + p.1 * d.1) / len).clamp(0.0, 1.0) } else { 0.0 };
        let x = (p.0 + t * d.0, p.1 + t * d.1);
        best = best.min(x.0 * x.0 + x.1 * x.1);
    }
    best
}

fn instance(max_cons: usize) -> impl Strategy<Value = Inst> {
    let pt = |lo: f64, hi: f64| (lo..hi, lo..hi);
    (pt(0.2, 1.0), pt(0.2, 1.5), prop::collection::vec((pt(0.0, 3.0), pt(0.3, 2.0)), 1..=max_cons)).prop_map(
        |(lo, span, cons)| Inst { lo, hi: (lo.0 + span.0, lo.1 + span.1), cons },
    )
}

fn opts() -> SolveOptions {
    SolveOptions { tol_lambda: Some(1e-7), ..SolveOptions::default() }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn feasibility_is_monotone_in_lambda(inst in instance(6), l1 in 0.0f64..4.0, dl in 0.0f64..1.0) {
        let q = inst.qlp();
        let lo = feasible_at(&q, l1, 1e-7, 20_000).unwrap();
        let hi = feasible_at(&q, l1 + dl, 1e-7, 20_000).unwrap();
        prop_assert!(!lo.feasible || hi.feasible);
    }

    #[test]
    fn lambda_matches_a_fine_scan(inst in instance(6)) {
        let sol = solve(&inst.qlp(), &opts()).unwrap();
        let step = 1e-4;
        let first = (0..).map(|k| k as f64 * step).find(|&l| !inst.polygon(l).is_empty()).unwrap();
        // The infimum lies in (first - step, first].
        prop_assert!(sol.lambda_star <= first + 1e-6, "{} vs scan {}", sol.lambda_star, first);
        prop_assert!(sol.lambda_star >= first - step - 1e-6, "{} vs scan {}", sol.lambda_star, first);
    }

    #[test]
    fn x_star_is_the_minimum_norm_point(inst in instance(6)) {
        let sol = solve(&inst.qlp(), &opts()).unwrap();
        prop_assert_eq!(sol.status, SolveStatus::Optimal);
        let poly = inst.polygon(sol.lambda_star + 1e-9);
        prop_assume!(!poly.is_empty());
        let exact = min_norm_sq(&poly);
        prop_assert!((sol.cost() - exact).abs() <= 1e-3, "cost {} vs {}", sol.cost(), exact);
    }

    #[test]
    fn violation_test_agrees_with_resolving(inst in instance(5), extra in ((0.0f64..3.0, 0.0f64..3.0), (0.3f64..2.0, 0.3f64..2.0))) {
        let q = inst.qlp();
        let sol = solve(&q, &opts()).unwrap();
        let ((a0, a1), (b0, b1)) = extra;
        let c = Constraint::new(vec![a0, a1], vec![b0, b1]);
        let excess = c.excess(sol.lambda_star, &sol.x_star);
        prop_assume!(excess.abs() > 1e-4);
        let flagged = violates(&sol, &c.a, &c.b, 1e-9).unwrap();
        let grown = solve(&q.with_constraint(c).unwrap(), &opts()).unwrap();
        let increased = grown.lambda_star > sol.lambda_star + 1e-5 || grown.cost() > sol.cost() + 1e-5;
        prop_assert_eq!(flagged, increased);
    }

    #[test]
    fn dropping_a_slack_constraint_changes_nothing(inst in instance(6)) {
        let q = inst.qlp();
        let sol = solve(&q, &opts()).unwrap();
        let slack = q.constraints().iter().position(|c| c.excess(sol.lambda_star, &sol.x_star) < -1e-3);
        prop_assume!(slack.is_some());
        let keep: Vec<usize> = (0..q.constraints().len()).filter(|&i| Some(i) != slack).collect();
        let again = solve(&q.restrict(&keep), &opts()).unwrap();
        prop_assert!((again.lambda_star - sol.lambda_star).abs() <= 1e-5);
        let moved = again.x_star.iter().zip(&sol.x_star).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        prop_assert!(moved <= 1e-3, "x* moved by {}", moved);
    }

    #[test]
    fn essential_sets_reproduce_the_optimum(inst in instance(6)) {
        let q = inst.qlp();
        let tol = EssentialTolerance::default();
        let full = solve(&q, &opts()).unwrap();
        let e = essential_set_exhaustive(&q, &opts(), tol).unwrap();
        prop_assert!(e.indices.len() <= 2, "essential set {:?}", e.indices);
        prop_assert!((e.lambda - full.lambda_star).abs() <= tol.lambda * full.lambda_star.max(1.0));
        prop_assert!((e.cost - full.cost()).abs() <= tol.cost * full.cost().max(1.0));
    }
}
