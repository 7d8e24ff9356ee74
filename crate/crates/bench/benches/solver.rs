use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use nalgebra::{DMatrix, DVector};

use scenario_jsr::blackbox::{is_barabanov, observe_many, BarabanovTol, SwitchedSystem};
use scenario_jsr::certifier::{build_qlp, certify, CertConfig};
use scenario_jsr::consensus::{projected_samples, projection_matrix, random_row_stochastic};
use scenario_jsr::qlp::feasible_at;
use scenario_jsr::rng::stream;
use scenario_jsr::scenario::{epsilon_for_confidence, inv_reg_inc_beta, ConfidenceQuery};
use scenario_jsr::symmat::{proj_psd_shifted_ball, SymMatrix};

fn special_functions(c: &mut Criterion) {
    c.bench_function("inv_reg_inc_beta", |b| b.iter(|| inv_reg_inc_beta(black_box(0.3), 13.5, 0.5)));
    c.bench_function("epsilon_for_confidence k=27 N=5000", |b| {
        let q = ConfidenceQuery::new(0.05, 27, 5000).unwrap();
        b.iter(|| epsilon_for_confidence(black_box(q)))
    });
}

fn projections(c: &mut Criterion) {
    let q = SymMatrix::from_row_major(3, &[2.0, -1.0, 0.5, -1.0, -3.0, 4.0, 0.5, 4.0, 1.0]).unwrap();
    c.bench_function("proj_psd_shifted_ball 3x3", |b| b.iter(|| proj_psd_shifted_ball(black_box(&q), 5.0)));
}

fn diag_system() -> SwitchedSystem {
    SwitchedSystem::new(vec![DMatrix::from_diagonal(&DVector::from_vec(vec![0.9, 0.5]))]).unwrap()
}

fn certification(c: &mut Criterion) {
    let mut group = c.benchmark_group("certify diag(0.9, 0.5)");
    group.sample_size(10);
    for samples in [200usize, 1000] {
        let obs = observe_many(&diag_system(), samples, &mut stream(1, 0));
        group.bench_with_input(BenchmarkId::from_parameter(samples), &obs, |b, obs| {
            b.iter(|| certify(obs, 1, &CertConfig::default()).unwrap())
        });
    }
    group.finish();
}

fn consensus_oracle(c: &mut Criterion) {
    let sys = random_row_stochastic(8, 3, 0.3, &mut stream(2024, 0)).unwrap();
    let b = projection_matrix(8).unwrap();
    let obs = projected_samples(&sys, &b, 500, &mut stream(2024, 1));
    let inst = build_qlp(&obs, &CertConfig { cap_c: Some(7.0), ..CertConfig::default() }).unwrap();
    let mut group = c.benchmark_group("consensus feasibility N=500");
    group.sample_size(10);
    for gamma in [0.4, 0.8] {
        group.bench_with_input(BenchmarkId::from_parameter(gamma), &gamma, |bch, &g| {
            bch.iter(|| feasible_at(&inst, g * g, 1e-7, 20_000).unwrap())
        });
    }
    group.finish();
}

fn barabanov(c: &mut Criterion) {
    let t = DMatrix::from_row_slice(4, 4, &[3.0, 0.2, -0.1, 0.4, 0.1, 2.5, 0.3, 0.0, -0.2, 0.1, 3.2, 0.5, 0.3, 0.0, 0.2, 2.8]);
    let (s, co) = (0.6f64.sin(), 0.6f64.cos());
    let rot = DMatrix::from_row_slice(4, 4, &[co, -s, 0.0, 0.0, s, co, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, -1.0]);
    let a = &t * rot * t.clone().try_inverse().unwrap();
    c.bench_function("is_barabanov 4x4", |b| b.iter(|| is_barabanov(black_box(&a), BarabanovTol::default()).unwrap()));
}

criterion_group!(benches, special_functions, projections, certification, consensus_oracle, barabanov);
criterion_main!(benches);
