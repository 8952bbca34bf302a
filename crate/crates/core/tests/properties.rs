use proptest::prelude::*;

use icc_core::bayes::{predictive_cumulative, run_ensemble, BayesConfig, ChainSet};
use icc_core::diagnostics::{ess_iat, geweke_default, split_rhat};
use icc_core::fixtures::outbreak_three;
use icc_core::seir::Scenario;
use icc_core::timeseries::{cumulative, read_weekly_csv, segment_seasons, IncidenceSeries, SegmentConfig};

fn counts() -> impl Strategy<Value = Vec<u64>> {
    prop::collection::vec(prop_oneof![3 => Just(0u64), 2 => 0u64..8], 1..60)
}

proptest! {
    #[test]
    fn cumulative_of_parsed_csv_is_partial_sums(start in -20i64..100, xs in counts()) {
        let mut text = String::from("week,cases\n");
        for (i, x) in xs.iter().enumerate() {
            text.push_str(&format!("{},{}\n", start + i as i64, x));
        }
        let series = read_weekly_csv(text.as_bytes()).unwrap();
        let cum = cumulative(&series);
        let mut running = 0;
        for (i, x) in xs.iter().enumerate() {
            running += x;
            prop_assert_eq!(cum.at(start + i as i64), running);
        }
        prop_assert!(cum.values().windows(2).all(|w| w[0] <= w[1]));
        prop_assert_eq!(cum.total(), series.total());
    }

    #[test]
    fn seasons_are_disjoint_and_cover_active_weeks(
        xs in counts(),
        quiet_weeks in 1usize..5,
        quiet_level in 0u64..3,
    ) {
        let series = IncidenceSeries::new(1, xs).unwrap();
        let cfg = SegmentConfig { quiet_weeks, quiet_level };
        let seasons = segment_seasons(&series, cfg);
        for pair in seasons.windows(2) {
            prop_assert!(pair[0].last_week < pair[1].first_week);
        }
        for s in &seasons {
            prop_assert!(s.first_week <= s.last_week);
            prop_assert!(s.series.new_cases().iter().any(|&x| x > 0));
        }
        for week in series.weeks() {
            if series.get(week).unwrap() > quiet_level {
                prop_assert!(seasons.iter().any(|s| (s.first_week..=s.last_week).contains(&week)));
            }
        }
        for s in &seasons {
            let again = segment_seasons(&s.series, cfg);
            prop_assert_eq!(again.len(), 1);
            prop_assert_eq!(&again[0], s);
        }
    }

    #[test]
    fn ess_never_exceeds_length(xs in prop::collection::vec(-10.0f64..10.0, 20..400)) {
        if let Ok(ess) = ess_iat(&xs) {
            prop_assert!(ess > 0.0 && ess <= xs.len() as f64);
        }
    }

    #[test]
    fn rhat_affine_invariant(
        chains in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 40), 2..5),
        scale in prop_oneof![-100.0f64..-0.01, 0.01f64..100.0],
        shift in -1e3f64..1e3,
    ) {
        if let Ok(base) = split_rhat(&chains) {
            let moved: Vec<Vec<f64>> = chains
                .iter()
                .map(|c| c.iter().map(|x| scale * x + shift).collect())
                .collect();
            let r = split_rhat(&moved).unwrap();
            prop_assert!((r - base).abs() < 1e-9 * base, "{} vs {}", r, base);
        }
    }

    #[test]
    fn geweke_flips_sign_on_reversed_trend(
        slope in prop_oneof![-1.0f64..-0.01, 0.01f64..1.0],
        noise in prop::collection::vec(-0.5f64..0.5, 200..600),
    ) {
        let chain: Vec<f64> = noise.iter().enumerate().map(|(i, e)| slope * i as f64 + e).collect();
        let reversed: Vec<f64> = chain.iter().rev().copied().collect();
        let z = geweke_default(&chain).unwrap();
        let zr = geweke_default(&reversed).unwrap();
        prop_assert!(z.signum() == -zr.signum(), "{} {}", z, zr);
    }
}

fn small_ensemble(seed: u64) -> ChainSet {
    let data = outbreak_three().through(85).unwrap();
    let cfg = BayesConfig {
        burn_in: 500,
        draws: 300,
        seed,
        ..BayesConfig::default()
    };
    run_ensemble(&data, 86, &cfg).unwrap()
}

#[test]
fn retained_draws_stay_in_support() {
    let set = small_ensemble(3);
    let s = outbreak_three().through(85).unwrap().total() as f64;
    let lengths: Vec<_> = set.chains.iter().map(|c| c.draws.len()).collect();
    assert!(lengths.iter().all(|&n| n == 300), "{lengths:?}");
    for state in set.chains.iter().flat_map(|c| &c.draws) {
        assert!(state.l >= s);
        assert!(state.o.iter().all(|&o| o >= 0.0));
    }
}

#[test]
fn pooled_summary_ignores_chain_order() {
    let set = small_ensemble(5);
    let mut permuted = set.clone();
    permuted.chains.reverse();
    permuted.chains.swap(0, 1);
    let a = predictive_cumulative(&set, 86).unwrap();
    let b = predictive_cumulative(&permuted, 86).unwrap();
    assert_eq!(a.median, b.median);
    assert_eq!(a.q005, b.q005);
    assert_eq!(a.q995, b.q995);
    assert!((a.mean - b.mean).abs() <= 1e-12 * a.mean.abs());
}

#[test]
fn benchmark_vector_fractions_stay_bounded() {
    let traj = Scenario::benchmark().run().unwrap();
    assert_eq!(traj.clamp_events, 0);
    for x in &traj.states {
        assert!(x.v1 + x.v2 <= 1.0);
        assert!(x.to_array().iter().all(|&v| v >= 0.0));
    }
}
