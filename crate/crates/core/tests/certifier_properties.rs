use nalgebra::DMatrix;
use proptest::prelude::*;
use scenario_jsr::blackbox::{assert_no_barabanov, observe_many, BarabanovTol, SampleSet, SwitchedSystem};
use scenario_jsr::certifier::{certify, CertConfig, CertStatus};
use scenario_jsr::rng::{rng_from_seed, stream};
use scenario_jsr::symmat::{min_eig, tri_dim};

fn system(seed: u64, n: usize, m: usize) -> Option<SwitchedSystem> {
    use rand::Rng as _;
    let mut rng = rng_from_seed(seed);
    let modes = (0..m).map(|_| DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0))).collect();
    let sys = SwitchedSystem::new(modes).ok()?;
    assert_no_barabanov(&sys, BarabanovTol::default()).ok()?;
    Some(sys)
}

fn prefix(obs: &SampleSet, k: usize) -> SampleSet {
    SampleSet::new(obs.n(), obs.observations()[..k].to_vec()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn certificate_invariants(seed in any::<u64>(), n in 2usize..4, m in 1usize..4, extra in 0usize..60) {
        let sys = system(seed, n, m);
        prop_assume!(sys.is_some());
        let sys = sys.unwrap();
        let d = tri_dim(n);
        let obs = observe_many(&sys, d + 10 + extra, &mut stream(seed, 1));
        let cfg = CertConfig::default();
        let cert = certify(&obs, m, &cfg).unwrap();

        prop_assert_eq!(cert.d, d);
        prop_assert!(cert.kappa >= 1.0 - 1e-10);
        prop_assert!(cert.eps < cert.eps_baseline);
        let p = cert.p_star();
        prop_assert!(min_eig(&p).unwrap() >= 1.0 - 1e-6);
        prop_assert!(p.frobenius_norm() <= cfg.cap_for(n).unwrap() * (1.0 + 1e-6));

        let gamma_hi = obs.observations().iter().map(|o| norm(&o.y) / norm(&o.x)).fold(0.0, f64::max);
        prop_assert!(cert.gamma_star <= gamma_hi * (1.0 + 1e-9));
        // Every sampled constraint holds at (gamma*, P*).
        let g2 = cert.gamma_star * cert.gamma_star;
        for o in obs.observations() {
            let (py, px) = (p.quad_form(&o.y), p.quad_form(&o.x));
            prop_assert!(py <= g2 * px + 1e-5 * (1.0 + px), "{} > {}", py, g2 * px);
        }

        match (cert.bound_this_paper, cert.bound_baseline) {
            (Some(b1), Some(b2)) => {
                prop_assert!(b1 <= b2);
                prop_assert!(b1 >= cert.gamma_star);
            }
            (None, _) => prop_assert!(cert.status != CertStatus::Certified),
            _ => {}
        }
    }

    #[test]
    fn gamma_grows_with_the_sample(seed in any::<u64>(), m in 1usize..3) {
        let sys = system(seed, 2, m);
        prop_assume!(sys.is_some());
        let obs = observe_many(&sys.unwrap(), 40, &mut stream(seed, 2));
        let cfg = CertConfig::default();
        let mut last = 0.0;
        for k in [4, 10, 20, 40] {
            let g = certify(&prefix(&obs, k), m, &cfg).unwrap().gamma_star;
            // The bisection resolves gamma to 1e-6 of its bracket top.
            prop_assert!(g >= last - 1e-5, "gamma* fell from {} to {} at N = {}", last, g, k);
            last = g;
        }
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}
