use proptest::prelude::*;

use seedbank::exact::{
    dense_expectations, exact_summary, expectations, pmf_n_gamma, Functional,
};
use seedbank::laws::LimitLaw;
use seedbank::model::{BlockState, ModelParams, Variant};
use seedbank::rng::RngSpec;
use seedbank::sampling::{enumerate_law, pgf_z};
use seedbank::simulator::{simulate_counts, StopCondition, TerminalReason};

fn rate() -> impl Strategy<Value = f64> {
    0.1f64..5.0
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn lengths_balance_and_grow(c1 in rate(), c2 in rate(), n in 2u32..60) {
        let p = ModelParams::new(c1, c2).unwrap();
        let s = exact_summary(n, &p).unwrap();
        let next = exact_summary(n + 1, &p).unwrap();
        prop_assert!(s.balance_residual < 1e-10, "{}", s.balance_residual);
        prop_assert!((s.expected_total - s.expected_active - s.expected_inactive).abs() < 1e-12 * s.expected_total);
        prop_assert!(next.expected_active > s.expected_active);
        prop_assert!(next.expected_inactive > s.expected_inactive);
        prop_assert!(s.expected_height < s.expected_total);
    }

    #[test]
    fn level_solver_matches_dense(c1 in rate(), c2 in rate(), n in 2u32..10) {
        let p = ModelParams::new(c1, c2).unwrap();
        for f in [Functional::PlantTime, Functional::SeedTime, Functional::ElapsedTime] {
            let fast = expectations(n, &p, f).unwrap();
            for (state, v) in dense_expectations(n, &p, f).unwrap() {
                let w = fast.get(state).unwrap();
                prop_assert!((v - w).abs() <= 1e-9 * v.abs().max(1.0), "{state}: {v} vs {w}");
            }
        }
    }

    #[test]
    fn n_gamma_law_is_a_distribution(c1 in rate(), n in 2u32..2000) {
        let pmf = pmf_n_gamma(n, c1).unwrap();
        prop_assert!((pmf.total() - 1.0).abs() < 1e-12);
        prop_assert!(pmf.support().all(|(m, p)| m < n && p >= 0.0));
    }

    #[test]
    fn paths_respect_the_chain(c1 in rate(), c2 in rate(), n in 1u32..60, seed in any::<u64>(), m in 1u32..6, bounded in any::<bool>()) {
        let p = ModelParams::new(c1, c2).unwrap();
        let variant = if bounded { Variant::Bounded(m) } else { Variant::Standard };
        let t = simulate_counts(n, 0, &p, variant, StopCondition::Absorption, RngSpec::new(seed, 0)).unwrap();
        let mut state = t.initial_state;
        let mut time = 0.0;
        for e in &t.events {
            prop_assert!(e.time > time);
            prop_assert_eq!(state.apply(e.kind, variant), Some(e.state_after));
            if let Variant::Bounded(m) = variant {
                prop_assert!(e.state_after.seeds <= m);
            }
            state = e.state_after;
            time = e.time;
        }
        prop_assert_eq!(t.terminal_reason, TerminalReason::Absorbed);
        prop_assert_eq!(t.final_state(), BlockState::new(1, 0));
    }

    #[test]
    fn sampling_formula_sums_to_one(n in 1u32..8, k_frac in 0.0f64..=1.0, c1 in rate()) {
        let k = (k_frac * f64::from(n)).round() as u32;
        let law = enumerate_law(k, n, c1).unwrap();
        prop_assert!((law.total() - 1.0).abs() < 1e-12);
        let closed = pgf_z(k, n, c1).unwrap();
        prop_assert!((closed.total() - 1.0).abs() < 1e-12);
        for (&z, &p) in &law.z {
            prop_assert!(z >= k && z <= n);
            prop_assert!((closed.prob(z) - p).abs() < 1e-12, "z = {}", z);
        }
    }

    #[test]
    fn limit_quantiles_invert(c1 in rate(), c2 in rate(), p in 0.001f64..0.999) {
        for law in [LimitLaw::beta(c1), LimitLaw::gamma(c1), LimitLaw::frechet(c1, c2), LimitLaw::exponential(c1, c2)] {
            let x = law.quantile(p);
            prop_assert!((law.cdf(x) - p).abs() < 1e-9, "{}: {} -> {}", law.name(), p, law.cdf(x));
        }
    }
}
