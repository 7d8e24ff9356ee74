//! Convex sets exposed through exact Euclidean projections.

use std::sync::Mutex;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::symmat::{self, dot, smat_slice, svec, tri_dim};

/// Exact projection onto one closed convex set in `R^d`.
pub trait Projector: Send + Sync {
    fn dim(&self) -> usize;

    /// Replaces `x` by its projection.
    fn project(&self, x: &mut [f64]);

    fn distance(&self, x: &[f64]) -> f64 {
        let mut p = x.to_vec();
        self.project(&mut p);
        dist(x, &p)
    }

    fn is_bounded(&self) -> bool {
        false
    }

    /// `min { w^T x : x in set }` when it has a cheap closed form.
    fn support_min(&self, _w: &[f64]) -> Option<f64> {
        None
    }
}

pub(crate) fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `{x : normal^T x <= offset}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Halfspace {
    normal: Vec<f64>,
    offset: f64,
    norm_sq: f64,
}

impl Halfspace {
    pub fn new(normal: Vec<f64>, offset: f64) -> Self {
        let norm_sq = dot(&normal, &normal);
        Self { normal, offset, norm_sq }
    }

    /// `{x : x_i >= bound}`.
    pub fn lower_bound(d: usize, i: usize, bound: f64) -> Self {
        let mut normal = vec![0.0; d];
        normal[i] = -1.0;
        Self::new(normal, -bound)
    }

    /// `{x : x_i <= bound}`.
    pub fn upper_bound(d: usize, i: usize, bound: f64) -> Self {
        let mut normal = vec![0.0; d];
        normal[i] = 1.0;
        Self::new(normal, bound)
    }

    pub fn normal(&self) -> &[f64] {
        &self.normal
    }

    pub fn slack(&self, x: &[f64]) -> f64 {
        self.offset - dot(&self.normal, x)
    }
}

impl Projector for Halfspace {
    fn dim(&self) -> usize {
        self.normal.len()
    }

    fn project(&self, x: &mut [f64]) {
        if self.norm_sq == 0.0 {
            return;
        }
        let excess = dot(&self.normal, x) - self.offset;
        if excess > 0.0 {
            let t = excess / self.norm_sq;
            for (xi, hi) in x.iter_mut().zip(&self.normal) {
                *xi -= t * hi;
            }
        }
    }

    fn distance(&self, x: &[f64]) -> f64 {
        if self.norm_sq == 0.0 {
            return if self.offset >= 0.0 { 0.0 } else { f64::INFINITY };
        }
        (dot(&self.normal, x) - self.offset).max(0.0) / self.norm_sq.sqrt()
    }
}

/// `{x : h_i^T x <= 0 for all i}`, projected exactly by solving the dual
/// nonnegative least-squares problem (Lawson-Hanson).
///
/// By Moreau's decomposition `P_K(z) = z - H^T mu` where `mu >= 0` minimizes
/// `||z - H^T mu||`. The passive set of the previous call seeds the next one,
/// which makes repeated projections from nearby points cheap.
#[derive(Debug)]
pub struct PolyhedralCone {
    d: usize,
    /// Unit normals, row-major.
    rows: Vec<f64>,
    warm: Mutex<Vec<usize>>,
}

impl Clone for PolyhedralCone {
    fn clone(&self) -> Self {
        Self { d: self.d, rows: self.rows.clone(), warm: Mutex::new(Vec::new()) }
    }
}

const NNLS_TOL: f64 = 1e-13;

impl PolyhedralCone {
    /// Zero normals are dropped; the others are scaled to unit length.
    pub fn new<'a>(d: usize, normals: impl IntoIterator<Item = &'a [f64]>) -> Self {
        let mut rows = Vec::new();
        for h in normals {
            assert_eq!(h.len(), d, "normal has the wrong dimension");
            let r = norm(h);
            if r > 0.0 {
                rows.extend(h.iter().map(|v| v / r));
            }
        }
        Self { d, rows, warm: Mutex::new(Vec::new()) }
    }

    pub fn len(&self) -> usize {
        self.rows.len().checked_div(self.d).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.rows[i * self.d..(i + 1) * self.d]
    }

    /// Largest `h_i^T x`, clipped at 0.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        self.rows.chunks_exact(self.d.max(1)).map(|h| dot(h, x)).fold(0.0, f64::max)
    }

    /// Least-squares coefficients of `z` on the passive columns, through the
    /// Gram matrix when it is well conditioned.
    fn solve_passive(&self, passive: &[usize], z: &DVector<f64>) -> DVector<f64> {
        let p = passive.len();
        let gram = DMatrix::from_fn(p, p, |i, j| dot(self.row(passive[i]), self.row(passive[j])));
        let rhs = DVector::from_fn(p, |i, _| dot(self.row(passive[i]), z.as_slice()));
        if let Some(chol) = gram.clone().cholesky() {
            let diag_min = chol.l_dirty().diagonal().min();
            if diag_min > 1e-6 {
                return chol.solve(&rhs);
            }
        }
        let a = DMatrix::from_fn(self.d, p, |r, c| self.row(passive[c])[r]);
        let svd = a.svd(true, true);
        let cutoff = 1e-12 * svd.singular_values.max();
        svd.solve(z, cutoff).expect("singular vectors were computed").column(0).into_owned()
    }

    fn residual(&self, z: &DVector<f64>, passive: &[usize], mu: &[f64]) -> Vec<f64> {
        let mut r = z.as_slice().to_vec();
        for (&j, &m) in passive.iter().zip(mu) {
            for (ri, hi) in r.iter_mut().zip(self.row(j)) {
                *ri -= m * hi;
            }
        }
        r
    }

    fn nnls(&self, z: &[f64]) -> Vec<f64> {
        let n_rows = self.len();
        let zv = DVector::from_column_slice(z);
        let tol = NNLS_TOL * (1.0 + norm(z));

        // Seed from the last passive set, dropping members until the
        // unconstrained fit is strictly positive.
        let mut passive: Vec<usize> = self.warm.lock().map(|w| w.clone()).unwrap_or_default();
        passive.retain(|&j| j < n_rows);
        let mut mu: Vec<f64> = Vec::new();
        while !passive.is_empty() {
            let s = self.solve_passive(&passive, &zv);
            if s.iter().all(|&v| v > 0.0) {
                mu = s.as_slice().to_vec();
                break;
            }
            let keep: Vec<usize> = passive.iter().zip(s.iter()).filter(|(_, &v)| v > 0.0).map(|(&j, _)| j).collect();
            passive = keep;
        }

        let mut r = self.residual(&zv, &passive, &mu);
        let mut in_passive = vec![false; n_rows];
        passive.iter().for_each(|&j| in_passive[j] = true);
        let mut banned = vec![false; n_rows];
        let cap = 10 * self.d + 100;
        for _ in 0..cap {
            let mut best = None;
            let mut best_w = tol;
            for j in 0..n_rows {
                if in_passive[j] || banned[j] {
                    continue;
                }
                let w = dot(self.row(j), &r);
                if w > best_w {
                    best_w = w;
                    best = Some(j);
                }
            }
            let Some(j) = best else { break };
            passive.push(j);
            mu.push(0.0);
            in_passive[j] = true;

            loop {
                let s = self.solve_passive(&passive, &zv);
                if s.iter().all(|&v| v > 0.0) {
                    mu = s.as_slice().to_vec();
                    break;
                }
                let mut alpha = 1.0_f64;
                let mut blocking = 0;
                for (k, &sk) in s.iter().enumerate() {
                    if sk <= 0.0 {
                        let ratio = mu[k] / (mu[k] - sk);
                        if ratio < alpha {
                            alpha = ratio;
                            blocking = k;
                        }
                    }
                }
                for (k, m) in mu.iter_mut().enumerate() {
                    *m += alpha * (s[k] - *m);
                }
                mu[blocking] = 0.0;
                let floor = 1e-14 * mu.iter().copied().fold(0.0, f64::max) + f64::MIN_POSITIVE;
                let mut k = 0;
                while k < passive.len() {
                    if mu[k] <= floor {
                        in_passive[passive[k]] = false;
                        passive.remove(k);
                        mu.remove(k);
                    } else {
                        k += 1;
                    }
                }
                if !in_passive[j] {
                    // The entering column cannot take positive weight; rounding.
                    banned[j] = true;
                    break;
                }
                if passive.is_empty() {
                    break;
                }
            }
            r = self.residual(&zv, &passive, &mu);
        }
        if let Ok(mut w) = self.warm.lock() {
            *w = passive;
        }
        r
    }
}

impl Projector for PolyhedralCone {
    fn dim(&self) -> usize {
        self.d
    }

    fn project(&self, x: &mut [f64]) {
        if self.max_violation(x) == 0.0 {
            return;
        }
        let p = self.nnls(x);
        x.copy_from_slice(&p);
    }

    /// Largest single-constraint distance, a lower bound on the distance to
    /// the cone that avoids a full projection.
    fn distance(&self, x: &[f64]) -> f64 {
        self.max_violation(x)
    }
}

/// `{svec(P) : P >= I, ||P||_F <= radius}` with its exact projection.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct ShiftedPsdBall {
    pub n: usize,
    pub radius: f64,
}

impl Projector for ShiftedPsdBall {
    fn dim(&self) -> usize {
        tri_dim(self.n)
    }

    fn project(&self, x: &mut [f64]) {
        let m = smat_slice(x).expect("PSD block dimension checked at build time");
        if let Ok(p) = symmat::proj_psd_shifted_ball(&m, self.radius) {
            x.copy_from_slice(&svec(&p).0);
        }
    }

    fn distance(&self, x: &[f64]) -> f64 {
        let psd = CommonSet::PsdShifted { n: self.n }.distance(x);
        psd.max((norm(x) - self.radius).max(0.0))
    }

    fn is_bounded(&self) -> bool {
        true
    }

    /// By von Neumann's trace inequality the minimizer shares eigenvectors
    /// with `W = smat(w)`; its eigenvalues are `max(1, -t w_i)` with `t` set
    /// by the norm cap.
    fn support_min(&self, w: &[f64]) -> Option<f64> {
        let eig = symmat::sym_eig(&smat_slice(w).ok()?).ok()?;
        let wv = &eig.eigenvalues;
        if wv[0] >= 0.0 {
            return Some(wv.iter().sum());
        }
        let norm_at = |t: f64| wv.iter().map(|&l| (-t * l).max(1.0).powi(2)).sum::<f64>().sqrt();
        let mut hi = self.radius / -wv[0];
        while norm_at(hi) < self.radius {
            hi *= 2.0;
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if norm_at(mid) <= self.radius {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Some(wv.iter().map(|&l| l * (-lo * l).max(1.0)).sum())
    }
}

/// The named convex sets a problem file may use for its common constraint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommonSet {
    /// Euclidean ball.
    Ball { center: Vec<f64>, radius: f64 },
    /// Axis-aligned box `lo <= x <= hi`.
    Box { lo: Vec<f64>, hi: Vec<f64> },
    /// `{svec(P) : P >= I}` for `n x n` symmetric `P`.
    PsdShifted { n: usize },
    /// `{svec(P) : ||P||_F <= C}`.
    FroBall {
        #[serde(rename = "C")]
        radius: f64,
    },
}

impl CommonSet {
    /// Dimension the set lives in, when it fixes one.
    pub fn fixed_dim(&self) -> Option<usize> {
        match self {
            CommonSet::Ball { center, .. } => Some(center.len()),
            CommonSet::Box { lo, .. } => Some(lo.len()),
            CommonSet::PsdShifted { n } => Some(tri_dim(*n)),
            CommonSet::FroBall { .. } => None,
        }
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        if let Some(k) = self.fixed_dim() {
            if k != d {
                return Err(Error::Dimension(format!("common set {self:?} lives in R^{k}, problem is R^{d}")));
            }
        }
        match self {
            CommonSet::Ball { radius, .. } | CommonSet::FroBall { radius } if !(*radius > 0.0) => {
                Err(Error::Parameter(format!("radius must be positive, got {radius}")))
            }
            CommonSet::Box { lo, hi } => {
                if lo.len() != hi.len() {
                    return Err(Error::Dimension("box bounds differ in length".into()));
                }
                match lo.iter().zip(hi).position(|(l, h)| !(l <= h)) {
                    Some(i) => Err(Error::Parameter(format!("box is empty along coordinate {i}"))),
                    None => Ok(()),
                }
            }
            CommonSet::PsdShifted { n } if *n == 0 => Err(Error::Parameter("PSD block needs n >= 1".into())),
            _ => Ok(()),
        }
    }
}

impl Projector for CommonSet {
    fn dim(&self) -> usize {
        self.fixed_dim().unwrap_or(0)
    }

    fn project(&self, x: &mut [f64]) {
        match self {
            CommonSet::Ball { center, radius } => {
                let r = dist(x, center);
                if r > *radius {
                    let t = radius / r;
                    for (xi, ci) in x.iter_mut().zip(center) {
                        *xi = ci + t * (*xi - ci);
                    }
                }
            }
            CommonSet::Box { lo, hi } => {
                for ((xi, l), h) in x.iter_mut().zip(lo).zip(hi) {
                    *xi = xi.clamp(*l, *h);
                }
            }
            CommonSet::PsdShifted { .. } => {
                let m = smat_slice(x).expect("PSD block dimension checked at build time");
                // A non-finite iterate has no projection; leave it for the caller's residual check.
                if let Ok(p) = symmat::proj_psd_shifted(&m) {
                    x.copy_from_slice(&svec(&p).0);
                }
            }
            CommonSet::FroBall { radius } => {
                let r = norm(x);
                if r > *radius {
                    let t = radius / r;
                    x.iter_mut().for_each(|v| *v *= t);
                }
            }
        }
    }

    fn distance(&self, x: &[f64]) -> f64 {
        match self {
            CommonSet::Ball { center, radius } => (dist(x, center) - radius).max(0.0),
            CommonSet::Box { lo, hi } => x
                .iter()
                .zip(lo.iter().zip(hi))
                .map(|(v, (l, h))| (l - v).max(v - h).max(0.0).powi(2))
                .sum::<f64>()
                .sqrt(),
            CommonSet::FroBall { radius } => (norm(x) - radius).max(0.0),
            CommonSet::PsdShifted { .. } => {
                let Ok(m) = smat_slice(x) else { return f64::INFINITY };
                match symmat::sym_eig(&m) {
                    Ok(eig) => eig.eigenvalues.iter().map(|l| (1.0 - l).max(0.0).powi(2)).sum::<f64>().sqrt(),
                    Err(_) => f64::INFINITY,
                }
            }
        }
    }

    fn is_bounded(&self) -> bool {
        matches!(self, CommonSet::Ball { .. } | CommonSet::Box { .. } | CommonSet::FroBall { .. })
    }

    fn support_min(&self, w: &[f64]) -> Option<f64> {
        match self {
            CommonSet::Ball { center, radius } => Some(dot(w, center) - radius * norm(w)),
            CommonSet::Box { lo, hi } => {
                Some(w.iter().zip(lo.iter().zip(hi)).map(|(wi, (l, h))| (wi * l).min(wi * h)).sum())
            }
            CommonSet::FroBall { radius } => Some(-radius * norm(w)),
            CommonSet::PsdShifted { .. } => {
                let eig = symmat::sym_eig(&smat_slice(w).ok()?).ok()?;
                Some(if eig.eigenvalues[0] >= 0.0 { eig.eigenvalues.iter().sum() } else { f64::NEG_INFINITY })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn halfspace_projection_and_distance() {
        let h = Halfspace::new(vec![3.0, 4.0], 5.0);
        let mut x = vec![3.0, 4.0];
        assert!((h.distance(&x) - 4.0).abs() < 1e-15);
        h.project(&mut x);
        assert!((dot(h.normal(), &x) - 5.0).abs() < 1e-12);
        assert_eq!(h.distance(&x), 0.0);
        let mut inside = vec![0.0, 0.0];
        h.project(&mut inside);
        assert_eq!(inside, vec![0.0, 0.0]);
    }

    #[test]
    fn common_set_projections() {
        let ball = CommonSet::Ball { center: vec![1.0, 0.0], radius: 1.0 };
        let mut x = vec![4.0, 0.0];
        ball.project(&mut x);
        assert!((x[0] - 2.0).abs() < 1e-15 && x[1] == 0.0);

        let bx = CommonSet::Box { lo: vec![1.0], hi: vec![2.0] };
        let mut x = vec![0.0];
        bx.project(&mut x);
        assert_eq!(x, vec![1.0]);
        assert_eq!(bx.distance(&[3.5]), 1.5);

        let psd = CommonSet::PsdShifted { n: 2 };
        let mut x = vec![0.0, 0.0, 0.0];
        psd.project(&mut x);
        assert!((x[0] - 1.0).abs() < 1e-14 && x[1].abs() < 1e-14 && (x[2] - 1.0).abs() < 1e-14);
        assert!((psd.distance(&[0.0, 0.0, 0.0]) - 2f64.sqrt()).abs() < 1e-14);

        let fro = CommonSet::FroBall { radius: 2.0 };
        let mut x = vec![3.0, 4.0, 0.0];
        fro.project(&mut x);
        assert!((norm(&x) - 2.0).abs() < 1e-14);
    }

    #[test]
    fn validation() {
        assert!(CommonSet::PsdShifted { n: 2 }.validate(3).is_ok());
        assert!(CommonSet::PsdShifted { n: 2 }.validate(4).is_err());
        assert!(CommonSet::FroBall { radius: 0.0 }.validate(3).is_err());
        assert!(CommonSet::Box { lo: vec![2.0], hi: vec![1.0] }.validate(1).is_err());
    }

    #[test]
    fn serde_names() {
        let sets = vec![
            CommonSet::PsdShifted { n: 2 },
            CommonSet::FroBall { radius: 20.0 },
            CommonSet::Box { lo: vec![1.0], hi: vec![2.0] },
        ];
        let s = serde_json::to_string(&sets).unwrap();
        assert_eq!(s, r#"[{"psd_shifted":{"n":2}},{"fro_ball":{"C":20.0}},{"box":{"lo":[1.0],"hi":[2.0]}}]"#);
        let back: Vec<CommonSet> = serde_json::from_str(&s).unwrap();
        assert_eq!(back, sets);
    }

    fn random_cone(d: usize, k: usize, rng: &mut crate::rng::Rng) -> Vec<Vec<f64>> {
        use rand::Rng as _;
        (0..k).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).collect()
    }

    #[test]
    fn cone_projection_satisfies_moreau() {
        use rand::Rng as _;
        let mut rng = crate::rng::rng_from_seed(31);
        for d in 1..6 {
            for k in [1, 3, 10, 40] {
                let normals = random_cone(d, k, &mut rng);
                let cone = PolyhedralCone::new(d, normals.iter().map(Vec::as_slice));
                for _ in 0..5 {
                    let z: Vec<f64> = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
                    let mut p = z.clone();
                    cone.project(&mut p);
                    let q: Vec<f64> = z.iter().zip(&p).map(|(a, b)| a - b).collect();
                    // p in K, z - p in the polar cone, and the two are orthogonal.
                    assert!(cone.max_violation(&p) <= 1e-10);
                    assert!(dot(&p, &q).abs() <= 1e-10);
                    for _ in 0..20 {
                        let mut y: Vec<f64> = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
                        cone.project(&mut y);
                        assert!(dot(&q, &y) <= 1e-10);
                    }
                }
            }
        }
    }

    #[test]
    fn cone_projection_matches_cyclic_projection() {
        use crate::qlp::project_intersection;
        use rand::Rng as _;
        let mut rng = crate::rng::rng_from_seed(37);
        for d in 2..5 {
            let normals = random_cone(d, 6, &mut rng);
            let cone = PolyhedralCone::new(d, normals.iter().map(Vec::as_slice));
            let halfspaces: Vec<Halfspace> = normals.iter().map(|h| Halfspace::new(h.clone(), 0.0)).collect();
            let sets: Vec<&dyn Projector> = halfspaces.iter().map(|h| h as &dyn Projector).collect();
            for _ in 0..10 {
                let z: Vec<f64> = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
                let mut p = z.clone();
                cone.project(&mut p);
                let oracle = project_intersection(&z, &sets, 1e-13, 200_000);
                assert!(dist(&p, &oracle.point) <= 1e-7, "d={d}: {p:?} vs {:?}", oracle.point);
            }
        }
    }

    #[test]
    fn empty_cone_is_everything() {
        let cone = PolyhedralCone::new(3, std::iter::empty());
        let mut x = vec![1.0, -2.0, 3.0];
        cone.project(&mut x);
        assert_eq!(x, vec![1.0, -2.0, 3.0]);
        let zero = [0.0, 0.0, 0.0];
        let cone = PolyhedralCone::new(3, [&zero[..]]);
        assert!(cone.is_empty());
    }
}
