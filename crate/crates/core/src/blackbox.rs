//! Hidden switched linear systems, Barabanov classification and a brute-force
//! JSR bracket used as a white-box oracle.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use nalgebra::{Complex, ComplexField, DMatrix, DVector, Dyn, SVD};
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;

/// `x(t+1) = A_sigma(t) x(t)` with the modes `A_1..A_m`.
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchedSystem {
    modes: Vec<DMatrix<f64>>,
}

impl SwitchedSystem {
    pub fn new(modes: Vec<DMatrix<f64>>) -> Result<Self> {
        let Some(first) = modes.first() else {
            return Err(Error::Parameter("a switched system needs at least one mode".into()));
        };
        let n = first.nrows();
        if n == 0 {
            return Err(Error::Dimension("modes must be at least 1x1".into()));
        }
        for (i, a) in modes.iter().enumerate() {
            if a.nrows() != n || a.ncols() != n {
                return Err(Error::Dimension(format!(
                    "mode {i} is {}x{}, expected {n}x{n}",
                    a.nrows(),
                    a.ncols()
                )));
            }
            if a.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric(format!("mode {i} has non-finite entries")));
            }
        }
        Ok(Self { modes })
    }

    pub fn n(&self) -> usize {
        self.modes[0].nrows()
    }

    pub fn m(&self) -> usize {
        self.modes.len()
    }

    pub fn modes(&self) -> &[DMatrix<f64>] {
        &self.modes
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let file: SystemFile = serde_json::from_str(s)?;
        file.into_system()
    }

    pub fn to_json(&self) -> Result<String> {
        let file = SystemFile {
            n: self.n(),
            m: self.m(),
            modes: self.modes.iter().map(|a| ModeEntries::Flat(row_major(a))).collect(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }
}

fn row_major(a: &DMatrix<f64>) -> Vec<f64> {
    a.transpose().as_slice().to_vec()
}

#[derive(Serialize, Deserialize)]
struct SystemFile {
    n: usize,
    m: usize,
    modes: Vec<ModeEntries>,
}

/// A mode is stored row-major, either flat or as nested rows.
#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum ModeEntries {
    Flat(Vec<f64>),
    Rows(Vec<Vec<f64>>),
}

impl SystemFile {
    fn into_system(self) -> Result<SwitchedSystem> {
        if self.modes.len() != self.m {
            return Err(Error::Parse(format!("declared m={} but found {} modes", self.m, self.modes.len())));
        }
        let n = self.n;
        let modes = self
            .modes
            .into_iter()
            .enumerate()
            .map(|(i, entries)| {
                let flat = match entries {
                    ModeEntries::Flat(v) => v,
                    ModeEntries::Rows(rows) => {
                        if rows.iter().any(|r| r.len() != n) {
                            return Err(Error::Parse(format!("mode {i} has a row whose length is not {n}")));
                        }
                        rows.concat()
                    }
                };
                if flat.len() != n * n {
                    return Err(Error::Parse(format!("mode {i} has {} entries, expected {}", flat.len(), n * n)));
                }
                Ok(DMatrix::from_row_slice(n, n, &flat))
            })
            .collect::<Result<Vec<_>>>()?;
        SwitchedSystem::new(modes)
    }
}

/// One sampled transition `y = A_sigma x` with the mode hidden.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

/// A batch of observations in a common dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    n: usize,
    observations: Vec<Observation>,
}

impl SampleSet {
    pub fn new(n: usize, observations: Vec<Observation>) -> Result<Self> {
        if n == 0 {
            return Err(Error::Dimension("state dimension must be at least 1".into()));
        }
        for (i, o) in observations.iter().enumerate() {
            if o.x.len() != n || o.y.len() != n {
                return Err(Error::Parameter(format!("observation {i} does not live in R^{n}")));
            }
        }
        Ok(Self { n, observations })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    /// Rows `x_1..x_n,y_1..y_n` after a `# n=<n>` header.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# n={}", self.n)?;
        let mut line = String::new();
        for o in &self.observations {
            line.clear();
            for (i, v) in o.x.iter().chain(&o.y).enumerate() {
                if i > 0 {
                    line.push(',');
                }
                write!(line, "{v:.16e}").expect("writing to a String");
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines.next().ok_or_else(|| Error::Parse("empty observations file".into()))??;
        let n: usize = header
            .trim()
            .strip_prefix("# n=")
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| Error::Parse(format!("expected `# n=<n>` header, got `{header}`")))?;
        let mut observations = Vec::new();
        for (lineno, line) in lines.enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let vals = line
                .split(',')
                .map(|t| t.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 2)))?;
            if vals.len() != 2 * n {
                return Err(Error::Parse(format!(
                    "line {}: expected {} values, got {}",
                    lineno + 2,
                    2 * n,
                    vals.len()
                )));
            }
            let (x, y) = vals.split_at(n);
            observations.push(Observation { x: x.to_vec(), y: y.to_vec() });
        }
        Self::new(n, observations)
    }
}

const SPHERE_REJECT: f64 = 1e-8;

/// Uniform point on the unit sphere in `R^n` (normalized Gaussian).
pub fn sample_uniform_sphere(n: usize, rng: &mut Rng) -> Vec<f64> {
    assert!(n >= 1, "sphere dimension must be at least 1");
    loop {
        let v: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let r = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if r >= SPHERE_REJECT {
            return v.into_iter().map(|x| x / r).collect();
        }
    }
}

fn apply(a: &DMatrix<f64>, x: &[f64]) -> Vec<f64> {
    (a * DVector::from_column_slice(x)).as_slice().to_vec()
}

/// Draws `x` on the sphere and a uniform mode, returning the mode too.
pub fn observe_with_mode(sys: &SwitchedSystem, rng: &mut Rng) -> (Observation, usize) {
    let x = sample_uniform_sphere(sys.n(), rng);
    let sigma = rng.random_range(0..sys.m());
    let y = apply(&sys.modes[sigma], &x);
    (Observation { x, y }, sigma)
}

/// One black-box transition; the mode index is discarded.
pub fn observe(sys: &SwitchedSystem, rng: &mut Rng) -> Observation {
    observe_with_mode(sys, rng).0
}

pub fn observe_many(sys: &SwitchedSystem, count: usize, rng: &mut Rng) -> SampleSet {
    let obs = (0..count).map(|_| observe(sys, rng)).collect();
    SampleSet::new(sys.n(), obs).expect("observations share the system dimension")
}

/// Thresholds for [`is_barabanov`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BarabanovTol {
    /// Relative tolerance on equal eigenvalue moduli.
    pub modulus: f64,
    /// Largest accepted condition number of the eigenvector matrix.
    pub max_cond: f64,
}

impl Default for BarabanovTol {
    fn default() -> Self {
        Self { modulus: 1e-8, max_cond: 1e10 }
    }
}

/// `A^T P A = gamma^2 P` with `P` positive definite.
#[derive(Debug, Clone, PartialEq)]
pub struct BarabanovWitness {
    pub gamma: f64,
    /// Scaled so its smallest eigenvalue is 1.
    pub p: DMatrix<f64>,
}

impl BarabanovWitness {
    /// `||A^T P A - gamma^2 P||_F`.
    pub fn residual(&self, a: &DMatrix<f64>) -> f64 {
        (a.transpose() * &self.p * a - &self.p * (self.gamma * self.gamma)).norm()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BarabanovReport {
    pub barabanov: bool,
    pub witness: Option<BarabanovWitness>,
    /// The decision sat within a factor 10 of one of its thresholds.
    pub near_threshold: bool,
}

const CLUSTER_TOL: f64 = 1e-6;
const NULL_TOL: f64 = 1e-9;
const EIG_EPS_LADDER: [f64; 4] = [1e-15, 1e-14, 1e-13, 1e-12];

fn svd<T: ComplexField<RealField = f64>>(m: &DMatrix<T>, want_v: bool) -> Result<SVD<T, Dyn, Dyn>> {
    let n = m.nrows().max(m.ncols()).max(1);
    EIG_EPS_LADDER
        .iter()
        .find_map(|&eps| m.clone().try_svd(false, want_v, eps, 1000 * n))
        .ok_or_else(|| Error::Numeric("SVD did not converge".into()))
}

fn eigenvalues(a: &DMatrix<f64>) -> Result<Vec<Complex<f64>>> {
    let n = a.nrows();
    // Tight clusters can stall the QR sweep at the finest tolerance.
    for eps in EIG_EPS_LADDER {
        if let Some(schur) = a.clone().try_schur(eps, 1000 * n.max(1)) {
            return Ok(schur.complex_eigenvalues().iter().copied().collect());
        }
    }
    Err(Error::Numeric("Schur decomposition did not converge".into()))
}

fn spectral_radius(a: &DMatrix<f64>) -> Result<f64> {
    Ok(eigenvalues(a)?.iter().map(|z| z.norm()).fold(0.0, f64::max))
}

fn spectral_norm(a: &DMatrix<f64>) -> Result<f64> {
    Ok(svd(a, false)?.singular_values.iter().copied().fold(0.0, f64::max))
}

/// Groups nearly equal eigenvalues; returns cluster means and sizes.
fn cluster(eigs: &[Complex<f64>], tol: f64) -> Vec<(Complex<f64>, usize)> {
    let mut groups: Vec<Vec<Complex<f64>>> = Vec::new();
    for &z in eigs {
        match groups.iter_mut().find(|g| g.iter().any(|w| (w - z).norm() <= tol)) {
            Some(g) => g.push(z),
            None => groups.push(vec![z]),
        }
    }
    groups
        .into_iter()
        .map(|g| {
            let k = g.len();
            (g.iter().sum::<Complex<f64>>() / k as f64, k)
        })
        .collect()
}

/// Basis of the numerical kernel of `A - mu I`.
fn eigenspace(a: &DMatrix<f64>, mu: Complex<f64>, thresh: f64) -> Result<Vec<DVector<Complex<f64>>>> {
    let n = a.nrows();
    let shifted = a.map(|v| Complex::new(v, 0.0)) - DMatrix::<Complex<f64>>::identity(n, n) * mu;
    let svd = svd(&shifted, true)?;
    let v_t = svd.v_t.expect("requested right singular vectors");
    Ok((0..n)
        .filter(|&i| svd.singular_values[i] <= thresh)
        .map(|i| v_t.row(i).transpose().map(|z| z.conj()))
        .collect())
}

fn condition_number(v: &DMatrix<Complex<f64>>) -> Result<f64> {
    let svd = svd(v, false)?;
    let max = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let min = svd.singular_values.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(if min > 0.0 { max / min } else { f64::INFINITY })
}

/// Does `A^T P A = gamma^2 P` hold for some `P > 0`?
///
/// That is the case exactly when `A` is diagonalizable over the complex
/// numbers with all eigenvalues of one modulus. With `A = V D V^-1`, the real
/// part of `V^-H V^-1` is then a witness.
pub fn is_barabanov(a: &DMatrix<f64>, tol: BarabanovTol) -> Result<BarabanovReport> {
    let n = a.nrows();
    if n == 0 || a.ncols() != n {
        return Err(Error::Dimension("Barabanov test needs a nonempty square matrix".into()));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("matrix has non-finite entries".into()));
    }
    let scale = a.norm();
    let negative = |near| Ok(BarabanovReport { barabanov: false, witness: None, near_threshold: near });
    if scale == 0.0 {
        let witness = BarabanovWitness { gamma: 0.0, p: DMatrix::identity(n, n) };
        return Ok(BarabanovReport { barabanov: true, witness: Some(witness), near_threshold: false });
    }

    let eigs = eigenvalues(a)?;
    let moduli: Vec<f64> = eigs.iter().map(|z| z.norm()).collect();
    let max = moduli.iter().copied().fold(0.0, f64::max);
    let min = moduli.iter().copied().fold(f64::INFINITY, f64::min);
    let spread = (max - min) / max.max(f64::MIN_POSITIVE);
    let modulus_near = spread > tol.modulus / 10.0 && spread <= tol.modulus * 10.0;
    if max <= f64::EPSILON * scale || spread > tol.modulus {
        // Nonzero nilpotent, or moduli differ.
        return negative(modulus_near);
    }

    let mut columns = Vec::with_capacity(n);
    for (mu, mult) in cluster(&eigs, CLUSTER_TOL * scale) {
        let basis = eigenspace(a, mu, NULL_TOL * scale)?;
        if basis.len() != mult {
            return negative(modulus_near);
        }
        columns.extend(basis);
    }
    let v = DMatrix::from_columns(&columns);
    let cond = condition_number(&v)?;
    let cond_near = cond > tol.max_cond / 10.0 && cond <= tol.max_cond * 10.0;
    if !(cond < tol.max_cond) {
        return negative(modulus_near || cond_near);
    }

    let v_inv = v.try_inverse().ok_or_else(|| Error::Numeric("eigenvector matrix is singular".into()))?;
    let g = v_inv.adjoint() * &v_inv;
    let p = DMatrix::from_fn(n, n, |i, j| 0.5 * (g[(i, j)].re + g[(j, i)].re));
    let min_eig = crate::symmat::min_eig(&crate::symmat::SymMatrix::symmetrize(&p))?;
    if !(min_eig > 0.0) {
        return Err(Error::Numeric("Barabanov witness is not positive definite".into()));
    }
    let witness = BarabanovWitness { gamma: moduli.iter().sum::<f64>() / n as f64, p: p / min_eig };
    Ok(BarabanovReport { barabanov: true, witness: Some(witness), near_threshold: modulus_near || cond_near })
}

/// Fails naming the first mode that is Barabanov.
pub fn assert_no_barabanov(sys: &SwitchedSystem, tol: BarabanovTol) -> Result<()> {
    for (index, a) in sys.modes.iter().enumerate() {
        let r = is_barabanov(a, tol)?;
        if r.barabanov {
            let gamma = r.witness.map_or(f64::NAN, |w| w.gamma);
            return Err(Error::Barabanov { index, gamma });
        }
    }
    Ok(())
}

/// Bracket `lower <= JSR <= upper` from products up to length `depth`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JsrBracket {
    pub lower: f64,
    pub upper: f64,
    pub depth: usize,
}

/// Largest number of length-`K` products the enumeration accepts.
pub const BRUTEFORCE_CAP: u64 = 1_000_000;

/// Enumerates all mode products of length `1..=depth`: the lower bound is the
/// best `rho(P)^(1/k)`, the upper bound the best `max ||P||_2^(1/k)` over `k`.
pub fn jsr_bruteforce_bounds(sys: &SwitchedSystem, depth: usize) -> Result<JsrBracket> {
    if depth == 0 {
        return Err(Error::Parameter("product depth must be at least 1".into()));
    }
    let m = sys.m() as u64;
    let count = u32::try_from(depth).ok().and_then(|k| m.checked_pow(k));
    if count.is_none_or(|c| c > BRUTEFORCE_CAP) {
        return Err(Error::Parameter(format!(
            "{m}^{depth} products exceed the enumeration cap of {BRUTEFORCE_CAP}"
        )));
    }
    let n = sys.n();
    let mut best_rho = vec![0.0_f64; depth];
    let mut best_norm = vec![0.0_f64; depth];
    // Depth-first over words; level k holds the product of the first k+1 letters.
    let mut stack: Vec<DMatrix<f64>> = Vec::with_capacity(depth);
    let mut word: Vec<usize> = Vec::with_capacity(depth);
    let mut next = 0usize;
    loop {
        if next < sys.m() && word.len() < depth {
            let a = &sys.modes[next];
            let prod = match stack.last() {
                Some(p) => a * p,
                None => a.clone(),
            };
            let k = word.len();
            best_rho[k] = best_rho[k].max(spectral_radius(&prod)?);
            best_norm[k] = best_norm[k].max(spectral_norm(&prod)?);
            word.push(next);
            stack.push(prod);
            next = 0;
        } else {
            let Some(last) = word.pop() else { break };
            stack.pop();
            next = last + 1;
        }
    }
    debug_assert!(stack.is_empty() && n > 0);
    let root = |v: f64, k: usize| v.powf(1.0 / (k + 1) as f64);
    let lower = (0..depth).map(|k| root(best_rho[k], k)).fold(0.0, f64::max);
    let upper = (0..depth).map(|k| root(best_norm[k], k)).fold(f64::INFINITY, f64::min);
    Ok(JsrBracket { lower, upper, depth })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use proptest::prelude::*;
    use crate::rng::Rng;

    fn rotation(theta: f64) -> DMatrix<f64> {
        let (s, c) = theta.sin_cos();
        DMatrix::from_row_slice(2, 2, &[c, -s, s, c])
    }

    fn random_orthogonal(n: usize, rng: &mut Rng) -> DMatrix<f64> {
        let g = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
        g.qr().q()
    }

    #[test]
    fn sphere_samples() {
        let mut rng = rng_from_seed(3);
        for _ in 0..10 {
            let v = sample_uniform_sphere(1, &mut rng);
            assert_eq!(v[0].abs(), 1.0);
        }
        let n = 3;
        let draws = 100_000;
        let mut mean = [0.0; 3];
        let mut second = 0.0;
        for _ in 0..draws {
            let v = sample_uniform_sphere(n, &mut rng);
            assert!((v.iter().map(|x| x * x).sum::<f64>().sqrt() - 1.0).abs() <= 1e-12);
            for i in 0..n {
                mean[i] += v[i] / draws as f64;
            }
            second += v[0] * v[0] / draws as f64;
        }
        for m in mean {
            assert!(m.abs() <= 4.0 / (draws as f64).sqrt());
        }
        // x_1^2 ~ Beta(1/2, (n-1)/2): variance 2(n-1)/(n^2(n+2)).
        let var = 2.0 * (n as f64 - 1.0) / ((n * n) as f64 * (n as f64 + 2.0));
        assert!((second - 1.0 / n as f64).abs() <= 5.0 * (var / draws as f64).sqrt());
    }

    #[test]
    fn observation_examples() {
        let mut rng = rng_from_seed(5);
        let zero = SwitchedSystem::new(vec![DMatrix::zeros(3, 3)]).unwrap();
        for _ in 0..20 {
            assert!(observe(&zero, &mut rng).y.iter().all(|&v| v == 0.0));
        }
        let scaled = SwitchedSystem::new(vec![DMatrix::identity(3, 3) * -0.7]).unwrap();
        for _ in 0..20 {
            let o = observe(&scaled, &mut rng);
            let ny = o.y.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((ny - 0.7).abs() < 1e-12);
        }
    }

    #[test]
    fn modes_are_uniform_and_outputs_exact() {
        let mut rng = rng_from_seed(11);
        let modes: Vec<_> = (0..3).map(|k| DMatrix::from_fn(2, 2, |i, j| (k + i * 2 + j) as f64 * 0.1)).collect();
        let sys = SwitchedSystem::new(modes).unwrap();
        let draws = 10_000;
        let mut counts = [0usize; 3];
        for _ in 0..draws {
            let (o, s) = observe_with_mode(&sys, &mut rng);
            counts[s] += 1;
            assert_eq!(o.y, apply(&sys.modes()[s], &o.x));
        }
        let p = 1.0 / 3.0;
        let sd = (draws as f64 * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!((c as f64 - draws as f64 * p).abs() <= 4.0 * sd, "{counts:?}");
        }
    }

    #[test]
    fn barabanov_examples() {
        let tol = BarabanovTol::default();
        let rot = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        let r = is_barabanov(&rot, tol).unwrap();
        assert!(r.barabanov);
        let w = r.witness.unwrap();
        assert!((w.gamma - 1.0).abs() < 1e-12);
        assert!(w.residual(&rot) <= 1e-8 * w.p.norm());
        assert!((rot.transpose() * &rot - DMatrix::<f64>::identity(2, 2)).norm() < 1e-15);

        let jordan = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
        assert!(!is_barabanov(&jordan, tol).unwrap().barabanov);
        let diag = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0]));
        assert!(!is_barabanov(&diag, tol).unwrap().barabanov);
        let nilpotent = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        assert!(!is_barabanov(&nilpotent, tol).unwrap().barabanov);
        let zero = DMatrix::zeros(2, 2);
        let r = is_barabanov(&zero, tol).unwrap();
        assert!(r.barabanov && r.witness.unwrap().gamma == 0.0);
        let bad = DMatrix::from_row_slice(1, 1, &[f64::NAN]);
        assert!(matches!(is_barabanov(&bad, tol), Err(Error::Numeric(_))));
    }

    #[test]
    fn conjugated_scaled_orthogonal_has_witness() {
        let mut rng = rng_from_seed(21);
        for n in 2..6 {
            let q = random_orthogonal(n, &mut rng);
            let t = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal)) + DMatrix::identity(n, n) * 2.0;
            let a = &t * q * 0.7 * t.clone().try_inverse().unwrap();
            let r = is_barabanov(&a, BarabanovTol::default()).unwrap();
            assert!(r.barabanov, "n={n}");
            let w = r.witness.unwrap();
            assert!((w.gamma - 0.7).abs() < 1e-8);
            assert!(w.residual(&a) <= 1e-8 * w.p.norm());
        }
    }

    #[test]
    fn assert_no_barabanov_examples() {
        let tol = BarabanovTol::default();
        let diag = SwitchedSystem::new(vec![DMatrix::from_diagonal(&DVector::from_vec(vec![0.9, 0.5]))]).unwrap();
        assert!(assert_no_barabanov(&diag, tol).is_ok());
        let eye = SwitchedSystem::new(vec![DMatrix::identity(2, 2)]).unwrap();
        assert!(matches!(assert_no_barabanov(&eye, tol), Err(Error::Barabanov { index: 0, .. })));
        let sys = SwitchedSystem::new(vec![diag.modes()[0].clone(), rotation(0.4) * 0.8]).unwrap();
        match assert_no_barabanov(&sys, tol) {
            Err(Error::Barabanov { index, gamma }) => {
                assert_eq!(index, 1);
                assert!((gamma - 0.8).abs() < 1e-12);
            }
            other => panic!("expected a Barabanov error, got {other:?}"),
        }
    }

    #[test]
    fn bruteforce_examples() {
        let diag = SwitchedSystem::new(vec![DMatrix::from_diagonal(&DVector::from_vec(vec![0.9, 0.5]))]).unwrap();
        for k in [1, 3, 7] {
            let b = jsr_bruteforce_bounds(&diag, k).unwrap();
            assert!((b.lower - 0.9).abs() < 1e-9 && (b.upper - 0.9).abs() < 1e-9);
        }
        let pair = SwitchedSystem::new(vec![
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]),
            DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0, 0.0]),
        ])
        .unwrap();
        let b = jsr_bruteforce_bounds(&pair, 4).unwrap();
        assert!((b.lower - 1.0).abs() < 1e-12 && (b.upper - 1.0).abs() < 1e-12);
        let zero = SwitchedSystem::new(vec![DMatrix::zeros(2, 2)]).unwrap();
        let b = jsr_bruteforce_bounds(&zero, 3).unwrap();
        assert_eq!((b.lower, b.upper), (0.0, 0.0));
        let many = SwitchedSystem::new(vec![DMatrix::identity(1, 1); 11]).unwrap();
        assert!(matches!(jsr_bruteforce_bounds(&many, 6), Err(Error::Parameter(_))));
        assert!(jsr_bruteforce_bounds(&many, 5).is_ok());
    }

    #[test]
    fn io_round_trips() {
        let sys = SwitchedSystem::new(vec![
            DMatrix::from_row_slice(2, 2, &[0.1, 0.2, 0.3, 0.4]),
            DMatrix::from_row_slice(2, 2, &[1.0 / 3.0, 0.0, -2.0, 1e-300]),
        ])
        .unwrap();
        assert_eq!(SwitchedSystem::from_json(&sys.to_json().unwrap()).unwrap(), sys);
        let nested = r#"{"n":2,"m":1,"modes":[[[0.1,0.2],[0.3,0.4]]]}"#;
        assert_eq!(SwitchedSystem::from_json(nested).unwrap().modes()[0], sys.modes()[0]);
        assert!(SwitchedSystem::from_json(r#"{"n":2,"m":2,"modes":[[1,2,3,4]]}"#).is_err());

        let mut rng = rng_from_seed(9);
        let set = observe_many(&sys, 25, &mut rng);
        let mut buf = Vec::new();
        set.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("# n=2\n"));
        assert_eq!(SampleSet::read_csv(buf.as_slice()).unwrap(), set);
        assert!(SampleSet::read_csv("# n=2\n1,2,3\n".as_bytes()).is_err());
        assert!(SampleSet::read_csv("n=2\n".as_bytes()).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn scaled_orthogonal_is_barabanov(seed in any::<u64>(), n in 1usize..6, c in 0.0f64..3.0) {
            let mut rng = rng_from_seed(seed);
            let a = random_orthogonal(n, &mut rng) * c;
            let r = is_barabanov(&a, BarabanovTol::default()).unwrap();
            prop_assert!(r.barabanov);
            let w = r.witness.unwrap();
            prop_assert!(w.residual(&a) <= 1e-8 * w.p.norm());
        }

        #[test]
        fn separated_moduli_are_rejected(seed in any::<u64>(), n in 2usize..6, gap in 1e-6f64..0.5) {
            let mut rng = rng_from_seed(seed);
            let mut d = vec![1.0; n];
            d[n - 1] = 1.0 + gap;
            let t = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal)) + DMatrix::identity(n, n) * 3.0;
            let a = &t * DMatrix::from_diagonal(&DVector::from_vec(d)) * t.clone().try_inverse().unwrap();
            prop_assert!(!is_barabanov(&a, BarabanovTol::default()).unwrap().barabanov);
        }

        #[test]
        fn bracket_is_ordered(seed in any::<u64>(), m in 1usize..4) {
            let mut rng = rng_from_seed(seed);
            let modes = (0..m).map(|_| DMatrix::from_fn(3, 3, |_, _| rng.random_range(-1.0..1.0))).collect();
            let sys = SwitchedSystem::new(modes).unwrap();
            let mut last_lower = 0.0;
            for k in 1..=5 {
                let b = jsr_bruteforce_bounds(&sys, k).unwrap();
                prop_assert!(b.lower <= b.upper + 1e-12);
                prop_assert!(b.lower >= last_lower);
                last_lower = b.lower;
            }
        }
    }
}
