//! Consensus over a hidden switching network.
//!
//! Row-stochastic modes fix the all-ones direction, so the JSR of interest is
//! that of the modes restricted to its orthogonal complement. Observations are
//! mapped there through a fixed `B` with `B B^T = I` and `B 1 = 0`.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::blackbox::{self, BarabanovTol, Observation, SampleSet, SwitchedSystem};
use crate::certifier::{self, CertConfig};
use crate::error::{Error, Result};
use crate::rng::{stream, Rng};
use crate::symmat::tri_dim;

/// First `n-1` rows of the Householder reflection sending `1/sqrt(n)` to `e_n`.
pub fn projection_matrix(n: usize) -> Result<DMatrix<f64>> {
    if n < 2 {
        return Err(Error::Parameter(format!("projection needs n >= 2, got {n}")));
    }
    let nf = n as f64;
    let mut v = DVector::from_element(n, 1.0 / nf.sqrt());
    v[n - 1] -= 1.0;
    let h = DMatrix::identity(n, n) - &v * v.transpose() * (2.0 / v.norm_squared());
    Ok(h.rows(0, n - 1).into_owned())
}

/// `(Bx, By) / ||Bx||`, or `None` when `x` is (numerically) along `1`.
pub fn project_pair(x: &[f64], y: &[f64], b: &DMatrix<f64>) -> Option<(Vec<f64>, Vec<f64>)> {
    let bx = b * DVector::from_column_slice(x);
    let by = b * DVector::from_column_slice(y);
    let r = bx.norm();
    if !(r > 1e-10) {
        return None;
    }
    Some(((bx / r).as_slice().to_vec(), (by / r).as_slice().to_vec()))
}

/// `B A B^T` for every mode.
pub fn project_modes(sys: &SwitchedSystem, b: &DMatrix<f64>) -> Result<SwitchedSystem> {
    SwitchedSystem::new(sys.modes().iter().map(|a| b * a * b.transpose()).collect())
}

fn strongly_connected(adj: &[Vec<bool>]) -> bool {
    let n = adj.len();
    let reach = |forward: bool| {
        let mut seen = vec![false; n];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(i) = stack.pop() {
            for j in 0..n {
                let edge = if forward { adj[i][j] } else { adj[j][i] };
                if edge && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen.into_iter().all(|s| s)
    };
    reach(true) && reach(false)
}

/// `m` random averaging matrices. Each mode comes from a strongly connected
/// digraph with self-loops in which every other edge is present with
/// probability `p_edge`; row `i` spreads weight evenly over its out-edges.
pub fn random_row_stochastic(n: usize, m: usize, p_edge: f64, rng: &mut Rng) -> Result<SwitchedSystem> {
    if !(p_edge > 0.0 && p_edge <= 1.0) {
        return Err(Error::Parameter(format!("edge probability must lie in (0, 1], got {p_edge}")));
    }
    if n == 0 || m == 0 {
        return Err(Error::Parameter("need n >= 1 and m >= 1".into()));
    }
    let modes = (0..m)
        .map(|_| {
            let adj = loop {
                let adj: Vec<Vec<bool>> =
                    (0..n).map(|i| (0..n).map(|j| i == j || rng.random_bool(p_edge)).collect()).collect();
                if strongly_connected(&adj) {
                    break adj;
                }
            };
            let mut a = DMatrix::zeros(n, n);
            for (i, row) in adj.iter().enumerate() {
                let cols: Vec<usize> = (0..n).filter(|&j| row[j]).collect();
                let w = 1.0 / cols.len() as f64;
                let (last, rest) = cols.split_last().expect("self-loop is always present");
                for &j in rest {
                    a[(i, j)] = w;
                }
                a[(i, *last)] = 1.0 - w * rest.len() as f64;
            }
            a
        })
        .collect();
    SwitchedSystem::new(modes)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub n: usize,
    pub m: usize,
    pub beta: f64,
    pub n_grid: Vec<usize>,
    pub seed: u64,
    /// Product depth of the white-box bracket.
    pub depth: usize,
    pub p_edge: f64,
    /// Use identity modes instead of random ones.
    pub identity: bool,
    /// Frobenius cap; `None` means `n - 1`, the smallest admissible value for
    /// the projected system. Larger caps let `kappa(P*)` grow into the
    /// hundreds at small `N`, which leaves the bound undefined there.
    pub cap_c: Option<f64>,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            n: 8,
            m: 3,
            beta: 0.05,
            n_grid: vec![500, 1000, 2000, 5000],
            seed: 2024,
            depth: 8,
            p_edge: 0.3,
            identity: false,
            cap_c: None,
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 || self.m == 0 {
            return Err(Error::Config(format!("need n >= 2 and m >= 1, got n={}, m={}", self.n, self.m)));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::Config(format!("beta must lie in (0, 1), got {}", self.beta)));
        }
        if self.n_grid.is_empty() || self.n_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("sample grid must be nonempty and strictly ascending".into()));
        }
        let d = tri_dim(self.n - 1);
        if let Some(&small) = self.n_grid.iter().find(|&&s| s < d) {
            return Err(Error::Config(format!("sample size {small} is below d = {d}")));
        }
        if self.depth == 0 {
            return Err(Error::Config("white-box depth must be at least 1".into()));
        }
        if let Some(c) = self.cap_c {
            if !(c.is_finite() && c >= (self.n - 1) as f64) {
                return Err(Error::Config(format!("Frobenius cap must be at least n - 1 = {}, got {c}", self.n - 1)));
            }
        }
        if !(self.p_edge > 0.0 && self.p_edge <= 1.0) {
            return Err(Error::Config(format!("edge probability must lie in (0, 1], got {}", self.p_edge)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    #[serde(rename = "N")]
    pub samples: usize,
    pub bound1: Option<f64>,
    pub bound2: Option<f64>,
    pub gamma_star: f64,
    pub kappa: f64,
    pub whitebox_lower: f64,
    pub whitebox_upper: f64,
    pub eps1: f64,
    pub eps2: f64,
    pub status: certifier::CertStatus,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub rows: Vec<SweepRow>,
    /// Hidden modes, full dimension.
    pub system: SwitchedSystem,
    /// System draws rejected for containing a Barabanov mode.
    pub redraws: usize,
}

pub const SWEEP_CSV_HEADER: &str = "N,bound1,bound2,gamma_star,kappa,whitebox_lower,whitebox_upper";

const REDRAW_BUDGET: usize = 20;

fn draw_system(cfg: &NetworkConfig, b: &DMatrix<f64>) -> Result<(SwitchedSystem, SwitchedSystem, usize)> {
    let mut rng = stream(cfg.seed, 0);
    for attempt in 0..REDRAW_BUDGET {
        let sys = if cfg.identity {
            SwitchedSystem::new(vec![DMatrix::identity(cfg.n, cfg.n); cfg.m])?
        } else {
            random_row_stochastic(cfg.n, cfg.m, cfg.p_edge, &mut rng)?
        };
        let projected = project_modes(&sys, b)?;
        match blackbox::assert_no_barabanov(&projected, BarabanovTol::default()) {
            Ok(()) => return Ok((sys, projected, attempt)),
            Err(Error::Barabanov { .. }) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(Error::Config(format!(
        "every one of {REDRAW_BUDGET} network draws had a Barabanov mode on the consensus complement"
    )))
}

/// Projected observations of `sys`, redrawing `x` along the kernel of `B`.
pub fn projected_samples(sys: &SwitchedSystem, b: &DMatrix<f64>, count: usize, rng: &mut Rng) -> SampleSet {
    let mut obs = Vec::with_capacity(count);
    while obs.len() < count {
        let o = blackbox::observe(sys, rng);
        if let Some((x, y)) = project_pair(&o.x, &o.y, b) {
            obs.push(Observation { x, y });
        }
    }
    SampleSet::new(b.nrows(), obs).expect("projected observations share one dimension")
}

/// Certifies the projected network at every sample size of the grid.
pub fn consensus_sweep(cfg: &NetworkConfig) -> Result<Sweep> {
    cfg.validate()?;
    let b = projection_matrix(cfg.n)?;
    let (system, projected, redraws) = draw_system(cfg, &b)?;
    let bracket = blackbox::jsr_bruteforce_bounds(&projected, cfg.depth)?;
    let cert_cfg = CertConfig { cap_c: Some(cfg.cap_c.unwrap_or((cfg.n - 1) as f64)), ..CertConfig::with_beta(cfg.beta) };

    let rows = cfg
        .n_grid
        .par_iter()
        .enumerate()
        .map(|(i, &samples)| -> Result<SweepRow> {
            let mut rng = stream(cfg.seed, 1 + i as u64);
            let obs = projected_samples(&system, &b, samples, &mut rng);
            let cert = certifier::certify(&obs, cfg.m, &cert_cfg)?;
            Ok(SweepRow {
                samples,
                bound1: cert.bound_this_paper,
                bound2: cert.bound_baseline,
                gamma_star: cert.gamma_star,
                kappa: cert.kappa,
                whitebox_lower: bracket.lower,
                whitebox_upper: bracket.upper,
                eps1: cert.eps,
                eps2: cert.eps_baseline,
                status: cert.status,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Sweep { rows, system, redraws })
}

fn fmt_float(out: &mut String, v: Option<f64>) {
    if let Some(v) = v {
        write!(out, "{v:.16e}").expect("writing to a String");
    }
}

/// CSV with [`SWEEP_CSV_HEADER`]; undefined bounds are left empty.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(SWEEP_CSV_HEADER);
    out.push('\n');
    for r in rows {
        write!(out, "{},", r.samples).expect("writing to a String");
        fmt_float(&mut out, r.bound1);
        out.push(',');
        fmt_float(&mut out, r.bound2);
        for v in [r.gamma_star, r.kappa, r.whitebox_lower, r.whitebox_upper] {
            out.push(',');
            fmt_float(&mut out, Some(v));
        }
        out.push('\n');
    }
    out
}
