use proptest::prelude::*;

use vrdlab_core::ecc::{self, Ber, EccGeometry, EccKind};
use vrdlab_core::params::AggOn;
use vrdlab_core::sampling::{self, Metric};
use vrdlab_core::stats;
use vrdlab_core::timing::{self, CampaignSpec, TimingParams};
use vrdlab_core::Exact;

fn values(max_len: usize) -> impl Strategy<Value = Vec<u64>> {
    prop::collection::vec(1u64..50, 1..max_len)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn summarize_ignores_order(v in prop::collection::vec(1.0f64..1e4, 2..80), seed: u64) {
        let mut shuffled = v.clone();
        // deterministic Fisher-Yates driven by the seed
        let mut s = seed;
        for i in (1..shuffled.len()).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            shuffled.swap(i, (s >> 33) as usize % (i + 1));
        }
        let a = stats::summarize(&v).unwrap();
        let b = stats::summarize(&shuffled).unwrap();
        prop_assert!((a.mean - b.mean).abs() <= 1e-9 * a.mean.abs());
        prop_assert!((a.stddev - b.stddev).abs() <= 1e-9 * a.stddev.max(1.0));
        prop_assert_eq!(a.min, b.min);
        prop_assert_eq!(a.max, b.max);
        prop_assert_eq!(a.quartiles, b.quartiles);
        prop_assert_eq!(a.histogram, b.histogram);
    }

    #[test]
    fn cv_is_scale_free(v in prop::collection::vec(1.0f64..1e4, 2..60), c in 0.01f64..100.0) {
        let scaled: Vec<f64> = v.iter().map(|x| x * c).collect();
        let a = stats::summarize(&v).unwrap().cv;
        let b = stats::summarize(&scaled).unwrap().cv;
        prop_assert!((a - b).abs() <= 1e-9 * a.max(1e-12));
    }

    #[test]
    fn chi_square_outputs_in_range(v in prop::collection::vec(0.0f64..100.0, 30..300)) {
        if let Ok(f) = stats::chi_square_normal_fit(&v, 0.05) {
            prop_assert!(f.statistic >= 0.0);
            prop_assert!((0.0..=1.0).contains(&f.p_value));
            prop_assert_eq!(f.reject, f.p_value < 0.05);
        }
    }

    #[test]
    fn run_lengths_cover_the_series(v in prop::collection::vec(0u8..3, 1..200)) {
        let h = stats::run_lengths(&v);
        prop_assert_eq!(h.series_len(), v.len());
    }

    #[test]
    fn find_min_grows_with_n(v in values(40)) {
        let m = v.len();
        let mut prev = Exact::from_integer(0);
        for n in 1..=m {
            let p: Exact = sampling::prob_find_min(&v, n).unwrap();
            prop_assert!(p >= prev);
            prev = p;
        }
        prop_assert_eq!(prev, Exact::from_integer(1));
    }

    #[test]
    fn normalized_min_shrinks_with_n(v in values(40)) {
        let m = v.len();
        let mut prev: Option<Exact> = None;
        for n in 1..=m {
            let e: Exact = sampling::expected_normalized_min(&v, n).unwrap();
            prop_assert!(e >= Exact::from_integer(1));
            if let Some(p) = prev {
                prop_assert!(e <= p);
            }
            prev = Some(e);
        }
        prop_assert_eq!(prev.unwrap(), Exact::from_integer(1));
    }

    #[test]
    fn within_margin_grows_with_n_and_margin(v in values(30), m1 in 0u32..10, dm in 0u32..10) {
        let lo = Exact::new(i128::from(m1), 10);
        let hi = Exact::new(i128::from(m1 + dm), 10);
        let mut prev = Exact::from_integer(0);
        for n in 1..=v.len() {
            let a: Exact = sampling::prob_min_within_margin(&v, n, lo).unwrap();
            let b: Exact = sampling::prob_min_within_margin(&v, n, hi).unwrap();
            prop_assert!(b >= a);
            prop_assert!(a >= prev);
            prev = a;
        }
    }

    #[test]
    fn float_and_exact_agree(v in values(60), n in 1usize..60) {
        prop_assume!(n <= v.len());
        let e: Exact = sampling::prob_find_min(&v, n).unwrap();
        let f: f64 = sampling::prob_find_min(&v, n).unwrap();
        let ef = *e.numer() as f64 / *e.denom() as f64;
        prop_assert!((ef - f).abs() < 1e-12);
    }

    #[test]
    fn ecc_monotone_in_ber(p in 0.0f64..0.05, dp in 0.0f64..0.05) {
        for kind in [EccKind::Sec, EccKind::Secded, EccKind::Ssc] {
            let g = EccGeometry::standard(kind);
            let a = ecc::error_probabilities(&g, Ber::new(p).unwrap()).unwrap();
            let b = ecc::error_probabilities(&g, Ber::new(p + dp).unwrap()).unwrap();
            prop_assert!(b.uncorrectable >= a.uncorrectable * (1.0 - 1e-12));
            prop_assert!(b.undetectable >= a.undetectable * (1.0 - 1e-12));
            for x in [a.uncorrectable, a.undetectable] {
                prop_assert!((0.0..=1.0).contains(&x));
            }
            prop_assert!(a.undetectable <= a.uncorrectable);
        }
    }

    #[test]
    fn campaign_time_is_linear(rows in 1u64..1000, meas in 1u64..1000, pats in 1u32..5, temps in 1u32..4, h in 1u64..10_000) {
        let p = TimingParams::default();
        let unit = CampaignSpec::single_row(1, h, AggOn::Tras);
        let spec = CampaignSpec { rows, measurements_per_row: meas, patterns: pats, temperatures: temps, ..unit.clone() };
        let one = timing::campaign_time(&p, &unit).unwrap().total.0;
        let all = timing::campaign_time(&p, &spec).unwrap().total.0;
        prop_assert_eq!(all, one * u128::from(rows) * u128::from(meas) * u128::from(pats) * u128::from(temps));
    }

    #[test]
    fn hammer_cost_is_additive(h in 0u64..1_000_000, ns in 32u64..100_000) {
        let p = TimingParams::default();
        let a = AggOn::from_ns(ns as f64).unwrap();
        let base = timing::schedule_time(&timing::build_single_bank_schedule(&p, 0, a));
        let full = timing::schedule_time(&timing::build_single_bank_schedule(&p, h, a));
        prop_assert_eq!(full.0 - base.0, timing::hammer_pair_cost(&p, a, 1).0 * u128::from(h));
    }
}

#[test]
fn acf_and_run_lengths_see_order() {
    let sorted: Vec<f64> = (0..200).map(|i| (i / 20) as f64).collect();
    let interleaved: Vec<f64> = (0..200).map(|i| sorted[(i * 37) % 200]).collect();
    assert_eq!(stats::summarize(&sorted).unwrap().mean, stats::summarize(&interleaved).unwrap().mean);
    assert_ne!(stats::acf(&sorted, 3).unwrap(), stats::acf(&interleaved, 3).unwrap());
    assert_ne!(stats::run_lengths(&sorted), stats::run_lengths(&interleaved));
}

#[test]
fn rowpress_ratio_in_hammer_limit() {
    let p = TimingParams::default();
    let ras = timing::hammer_pair_cost(&p, AggOn::Tras, 1).0 as f64;
    let refi = timing::hammer_pair_cost(&p, AggOn::Trefi, 1).0 as f64;
    assert!((refi / ras - 15_628.18 / 92.18).abs() < 0.01);
}

#[test]
fn monte_carlo_tracks_exact() {
    let v: Vec<u64> = (0..200).map(|i| 100 + (i * 7919) % 61).collect();
    for metric in [Metric::FindMin, Metric::NormalizedMin, Metric::WithinMargin(0.2)] {
        for n in [1, 5, 20] {
            let exact = metric.exact(&v, n).unwrap();
            let mc = sampling::monte_carlo_estimate(&v, n, metric, 20_000, 3).unwrap();
            let tol = 4.0 * mc.stderr.max(1e-9);
            assert!((mc.estimate - exact).abs() <= tol, "{metric} N={n}: {} vs {exact}", mc.estimate);
        }
    }
}
