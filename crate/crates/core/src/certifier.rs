//! Probabilistic JSR certificates from sampled transitions.
//!
//! Each observation `(x, y)` gives the constraint `y^T P y <= gamma^2 x^T P x`,
//! which is linear in `svec(P)` through `<yy^T, P> <= gamma^2 <xx^T, P>`. The
//! sampled program is solved over `{P >= I, ||P||_F <= C}`; the optimum
//! `(gamma*, P*)` then yields
//!
//! `rho <= gamma* / sqrt(1 - I^-1(eps kappa(P*) / m; (d-1)/2; 1/2))`
//!
//! with confidence `1 - beta`, where `eps` solves `phi(eps, d-1, N) = beta`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::blackbox::{self, observe_many, BarabanovTol, SampleSet, SwitchedSystem};
use crate::error::{Error, Result};
use crate::qlp::{self, CommonSet, Constraint, QlpInstance, QlpSolution, Search, SolveOptions, SolveStatus};
use crate::rng::stream;
use crate::scenario::{epsilon_for_confidence, inv_reg_inc_beta, phi, ConfidenceQuery};
use crate::symmat::{smat_slice, svec_outer, sym_eig, tri_dim, SymMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertConfig {
    /// Frobenius cap `C` on `P`; `None` means `10 n`.
    pub cap_c: Option<f64>,
    pub beta: f64,
    pub solve: SolveOptions,
}

impl Default for CertConfig {
    fn default() -> Self {
        Self { cap_c: None, beta: 0.05, solve: SolveOptions::default() }
    }
}

impl CertConfig {
    pub fn with_beta(beta: f64) -> Self {
        Self { beta, ..Self::default() }
    }

    pub fn cap_for(&self, n: usize) -> Result<f64> {
        let c = self.cap_c.unwrap_or(10.0 * n as f64);
        if !(c >= n as f64) || !c.is_finite() {
            return Err(Error::Parameter(format!("Frobenius cap C = {c} must be at least n = {n}")));
        }
        Ok(c)
    }
}

/// Constraint for one observation: `a = svec(yy^T)`, `b = svec(xx^T)`.
pub fn observation_constraint(x: &[f64], y: &[f64]) -> Constraint {
    Constraint::new(svec_outer(y), svec_outer(x))
}

/// The sampled program over `svec(P)` with `lambda = gamma^2`.
pub fn build_qlp(obs: &SampleSet, cfg: &CertConfig) -> Result<QlpInstance> {
    let n = obs.n();
    let cap = cfg.cap_for(n)?;
    let constraints = obs.observations().iter().map(|o| observation_constraint(&o.x, &o.y)).collect();
    QlpInstance::new(
        tri_dim(n),
        constraints,
        vec![CommonSet::PsdShifted { n }, CommonSet::FroBall { radius: cap }],
    )
}

/// `sqrt(det P / lambda_min(P)^n)`, evaluated in logs.
pub fn kappa(p: &SymMatrix) -> Result<f64> {
    let eig = sym_eig(p)?;
    let min = eig.eigenvalues[0];
    if !(min > 0.0) {
        return Err(Error::Parameter(format!("kappa needs a positive definite matrix, smallest eigenvalue is {min}")));
    }
    let log_ratio: f64 = eig.eigenvalues.iter().map(|l| (l / min).ln()).sum();
    Ok((0.5 * log_ratio).exp())
}

/// `gamma* / sqrt(1 - I^-1(eps kappa / m; (d-1)/2; 1/2))`, or `None` where
/// the radical is undefined.
pub fn jsr_bound(gamma_star: f64, eps: f64, kappa: f64, m: usize, d: usize) -> Result<Option<f64>> {
    if d < 2 || m == 0 {
        return Ok(None);
    }
    let arg = eps * kappa / m as f64;
    if !(arg < 1.0) {
        return Ok(None);
    }
    let factor = 1.0 - inv_reg_inc_beta(arg, (d as f64 - 1.0) / 2.0, 0.5)?;
    if !(factor > 0.0) {
        return Ok(None);
    }
    Ok(Some(gamma_star / factor.sqrt()))
}

/// Smallest `N >= d` with `eps(beta, d-1, N) kappa / m < 1`.
pub fn suggested_min_samples(beta: f64, d: usize, kappa: f64, m: usize) -> Result<Option<u64>> {
    if d < 2 || m == 0 {
        return Ok(None);
    }
    let k = d as u64 - 1;
    let ok = |n: u64| -> Result<bool> {
        let eps = epsilon_for_confidence(ConfidenceQuery::new(beta, k, n)?)?;
        Ok(eps * kappa / (m as f64) < 1.0)
    };
    let mut lo = d as u64;
    if ok(lo)? {
        return Ok(Some(lo));
    }
    let mut hi = lo;
    loop {
        hi = hi.saturating_mul(2);
        if hi >= 1 << 40 {
            return Ok(None);
        }
        if ok(hi)? {
            break;
        }
        lo = hi;
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if ok(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(Some(hi))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CertStatus {
    Certified,
    BoundUndefined,
    FeasibilityUncertain,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JsrCertificate {
    pub n: usize,
    pub m: usize,
    #[serde(rename = "N")]
    pub samples: usize,
    pub d: usize,
    pub beta: f64,
    pub eps: f64,
    pub eps_baseline: f64,
    pub gamma_star: f64,
    #[serde(rename = "P_star_svec")]
    pub p_star_svec: Vec<f64>,
    pub kappa: f64,
    pub bound_this_paper: Option<f64>,
    pub bound_baseline: Option<f64>,
    pub status: CertStatus,
    /// Final bisection bracket width on `gamma`.
    pub bracket_width: f64,
    pub seed: Option<u64>,
    /// Sample count that would make the bound defined at the current `kappa`.
    pub suggested_min_samples: Option<u64>,
}

impl JsrCertificate {
    pub fn p_star(&self) -> SymMatrix {
        smat_slice(&self.p_star_svec).expect("certificate holds a triangular svec")
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Solves the sampled program and builds the certificate; also returns the
/// raw solution for violation checks.
pub fn certify_with_solution(obs: &SampleSet, m: usize, cfg: &CertConfig) -> Result<(JsrCertificate, QlpSolution)> {
    let n = obs.n();
    let d = tri_dim(n);
    let samples = obs.len();
    if m == 0 {
        return Err(Error::Parameter("mode count m must be at least 1".into()));
    }
    if samples < d {
        return Err(Error::Precondition(format!("need N ≥ d = {d} observations, got N = {samples}")));
    }
    let inst = build_qlp(obs, cfg)?;
    let gamma_hi = obs
        .observations()
        .iter()
        .map(|o| norm(&o.y) / norm(&o.x))
        .fold(0.0, f64::max);
    if !gamma_hi.is_finite() {
        return Err(Error::Numeric("observation ratio ||y||/||x|| is not finite".into()));
    }
    let mut opts = cfg.solve;
    opts.search = Search::SqrtLambda;
    if opts.lambda_hi.is_none() && gamma_hi > 0.0 {
        opts.lambda_hi = Some(gamma_hi * gamma_hi);
    }
    let sol = qlp::solve(&inst, &opts)?;

    let gamma_star = sol.lambda_star.sqrt();
    let p = smat_slice(&sol.x_star)?;
    let kappa = kappa(&p)?;
    let eps = epsilon_for_confidence(ConfidenceQuery::new(cfg.beta, d as u64 - 1, samples as u64)?)?;
    let eps_baseline = epsilon_for_confidence(ConfidenceQuery::new(cfg.beta, d as u64, samples as u64)?)
        .unwrap_or(1.0);
    let bound_this_paper = jsr_bound(gamma_star, eps, kappa, m, d)?;
    let bound_baseline = if samples > d { jsr_bound(gamma_star, eps_baseline, kappa, m, d)? } else { None };
    let status = if sol.status == SolveStatus::FeasibilityUncertain {
        CertStatus::FeasibilityUncertain
    } else if bound_this_paper.is_none() {
        CertStatus::BoundUndefined
    } else {
        CertStatus::Certified
    };
    let suggested = if bound_this_paper.is_none() { suggested_min_samples(cfg.beta, d, kappa, m)? } else { None };
    let cert = JsrCertificate {
        n,
        m,
        samples,
        d,
        beta: cfg.beta,
        eps,
        eps_baseline,
        gamma_star,
        p_star_svec: sol.x_star.clone(),
        kappa,
        bound_this_paper,
        bound_baseline,
        status,
        bracket_width: sol.bracket_width,
        seed: None,
        suggested_min_samples: suggested,
    };
    Ok((cert, sol))
}

/// Certificate for `obs` drawn from a system with `m` modes.
pub fn certify(obs: &SampleSet, m: usize, cfg: &CertConfig) -> Result<JsrCertificate> {
    certify_with_solution(obs, m, cfg).map(|(c, _)| c)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Settings for [`validate_certificate_montecarlo`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidationConfig {
    pub samples: usize,
    pub trials: usize,
    /// Fresh samples per violation-probability estimate.
    pub fresh: usize,
    /// Product depth of the white-box bracket.
    pub depth: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub gamma_star: f64,
    pub bound_this_paper: Option<f64>,
    pub status: CertStatus,
    /// Estimated violation probability; `None` if the solve was not optimal.
    pub violation: Option<f64>,
    pub bound_below_lower: bool,
    pub violation_exceeds_eps: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub n: usize,
    pub m: usize,
    #[serde(rename = "N")]
    pub samples: usize,
    pub beta: f64,
    pub eps: f64,
    /// `phi(eps, d-1, N)`, the guaranteed failure probability.
    pub phi: f64,
    /// `phi + 3 sqrt(phi (1 - phi) / trials)`.
    pub threshold: f64,
    pub whitebox_lower: f64,
    pub whitebox_upper: f64,
    pub trials: usize,
    pub uncertain_trials: usize,
    pub bound_failure_freq: f64,
    pub violation_freq: f64,
    pub bound_ok: bool,
    pub violation_ok: bool,
    pub records: Vec<TrialRecord>,
}

/// Repeats the certification on independent sample sets drawn from `sys` and
/// compares the observed failure rates with the guarantee.
pub fn validate_certificate_montecarlo(
    sys: &SwitchedSystem,
    cfg: &CertConfig,
    vcfg: &ValidationConfig,
) -> Result<ValidationReport> {
    if vcfg.trials == 0 || vcfg.fresh == 0 {
        return Err(Error::Parameter("trials and fresh sample count must be positive".into()));
    }
    blackbox::assert_no_barabanov(sys, BarabanovTol::default())?;
    let bracket = blackbox::jsr_bruteforce_bounds(sys, vcfg.depth)?;
    let n = sys.n();
    let d = tri_dim(n);
    let eps = epsilon_for_confidence(ConfidenceQuery::new(cfg.beta, d as u64 - 1, vcfg.samples as u64)?)?;
    let phi_val = phi(eps, d as u64 - 1, vcfg.samples as u64)?;

    let mut records = (0..vcfg.trials)
        .into_par_iter()
        .map(|trial| -> Result<TrialRecord> {
            let mut rng = stream(vcfg.seed, trial as u64);
            let obs = observe_many(sys, vcfg.samples, &mut rng);
            let (cert, sol) = certify_with_solution(&obs, sys.m(), cfg)?;
            let violation = if sol.status == SolveStatus::Optimal {
                let sampler = |r: &mut crate::rng::Rng| {
                    let o = blackbox::observe(sys, r);
                    observation_constraint(&o.x, &o.y)
                };
                Some(qlp::estimate_violation_probability(&sol, sampler, vcfg.fresh, &mut rng)?)
            } else {
                None
            };
            Ok(TrialRecord {
                trial,
                gamma_star: cert.gamma_star,
                bound_this_paper: cert.bound_this_paper,
                status: cert.status,
                violation,
                bound_below_lower: cert.bound_this_paper.is_some_and(|b| b < bracket.lower),
                violation_exceeds_eps: violation.is_some_and(|v| v > eps),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    records.sort_by_key(|r| r.trial);

    let trials = vcfg.trials as f64;
    let threshold = phi_val + 3.0 * (phi_val * (1.0 - phi_val) / trials).sqrt();
    let bound_failure_freq = records.iter().filter(|r| r.bound_below_lower).count() as f64 / trials;
    let violation_freq = records.iter().filter(|r| r.violation_exceeds_eps).count() as f64 / trials;
    Ok(ValidationReport {
        n,
        m: sys.m(),
        samples: vcfg.samples,
        beta: cfg.beta,
        eps,
        phi: phi_val,
        threshold,
        whitebox_lower: bracket.lower,
        whitebox_upper: bracket.upper,
        trials: vcfg.trials,
        uncertain_trials: records.iter().filter(|r| r.violation.is_none()).count(),
        bound_failure_freq,
        violation_freq,
        bound_ok: bound_failure_freq <= threshold,
        violation_ok: violation_freq <= threshold,
        records,
    })
}
