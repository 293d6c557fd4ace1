use proptest::prelude::*;

use pnr_core::ingest::TRIGGER_CHANNEL;
use pnr_core::{
    bin_events, click_moments, click_pmf_poisson, mle_from_mean, synthetic_timetags, DetectorConfig, TimeTagRecord,
    TriggerConfig,
};

fn ln_choose(n: u64, k: u64) -> f64 {
    (1..=k).map(|i| ((n - k + i) as f64 / i as f64).ln()).sum()
}

proptest! {
    #[test]
    fn poisson_pmf_is_normalized(n in 1u32..=256, eta in 0.0f64..=1.0, p_d in 0.0f64..0.5, mu in 0.0f64..=1000.0) {
        let cfg = DetectorConfig::new(n, eta, p_d).unwrap();
        let pmf = click_pmf_poisson(&cfg, mu).unwrap();
        prop_assert!((pmf.total() - 1.0).abs() < 1e-12, "total {}", pmf.total());
        prop_assert!(pmf.probs().iter().all(|&p| (0.0..=1.0).contains(&p)));
    }

    #[test]
    fn poisson_pmf_is_binomial(n in 1u32..=64, eta in 0.0f64..=1.0, p_d in 0.0f64..0.2, mu in 0.0f64..=200.0) {
        let cfg = DetectorConfig::new(n, eta, p_d).unwrap();
        let pmf = click_pmf_poisson(&cfg, mu).unwrap();
        let q = 1.0 - (1.0 - p_d) * (-mu * eta / n as f64).exp();
        for x in 0..=n as u64 {
            let expected = ln_choose(n as u64, x).exp() * q.powi(x as i32) * (1.0 - q).powi((n as u64 - x) as i32);
            prop_assert!((pmf.probs()[x as usize] - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn mean_clicks_increase_with_mu(n in 1u32..=64, eta in 0.01f64..=1.0, p_d in 0.0f64..0.1, mu in 0.0f64..=50.0, dmu in 0.01f64..5.0) {
        let cfg = DetectorConfig::new(n, eta, p_d).unwrap();
        let (lo, _) = click_moments(&cfg, mu).unwrap();
        let (hi, _) = click_moments(&cfg, mu + dmu).unwrap();
        prop_assert!(hi > lo);
    }

    #[test]
    fn estimator_inverts_the_analytic_mean(mu in 0.0f64..=60.0, dark in proptest::bool::ANY, eta in 0.2f64..=1.0) {
        let p_d = if dark { 1e-3 } else { 0.0 };
        let cfg = DetectorConfig::new(16, eta, p_d).unwrap();
        let (mean, _) = click_moments(&cfg, mu).unwrap();
        let back = mle_from_mean(&cfg, mean).unwrap();
        prop_assert!((back - mu).abs() < 1e-10 * mu.max(1.0), "{back} vs {mu}");
    }

    #[test]
    fn estimator_increases_with_mean(a in 0.0f64..15.99, b in 0.0f64..15.99) {
        prop_assume!(a != b);
        let cfg = DetectorConfig::new(16, 0.49, 1e-3).unwrap();
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(mle_from_mean(&cfg, lo).unwrap() < mle_from_mean(&cfg, hi).unwrap());
    }

    #[test]
    fn ingest_recovers_click_patterns(pattern in proptest::collection::vec(0u32..=16, 1..40), seed in any::<u64>()) {
        let cfg = TriggerConfig::default();
        let records = synthetic_timetags(&pattern, &cfg, seed).unwrap();
        let binned = bin_events(&records, &cfg).unwrap();
        prop_assert_eq!(binned.sample.counts(), &pattern[..]);
        prop_assert_eq!(binned.stray_events, 0);
        prop_assert_eq!(binned.assigned_events, binned.detector_events);
    }

    #[test]
    fn ingest_ignores_record_order_and_conserves_events(
        events in proptest::collection::vec((1u8..=2, 0u64..40_000_000), 0..200),
        triggers in proptest::collection::btree_set(0u64..4u64, 1..4),
        seed in any::<u64>(),
    ) {
        let cfg = TriggerConfig::default();
        let mut records: Vec<TimeTagRecord> = triggers
            .iter()
            .map(|&k| TimeTagRecord { channel: TRIGGER_CHANNEL, timestamp_ps: k * 10_000_000 })
            .collect();
        records.extend(events.iter().map(|&(channel, timestamp_ps)| TimeTagRecord { channel, timestamp_ps }));
        let a = bin_events(&records, &cfg).unwrap();
        // idempotent
        prop_assert_eq!(&a, &bin_events(&records, &cfg).unwrap());
        // permutation safe
        let mut shuffled = records.clone();
        let len = shuffled.len();
        let mut state = seed;
        for i in (1..len).rev() {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            shuffled.swap(i, (state >> 33) as usize % (i + 1));
        }
        prop_assert_eq!(&a, &bin_events(&shuffled, &cfg).unwrap());
        prop_assert_eq!(a.assigned_events + a.stray_events, a.detector_events);
        prop_assert_eq!(a.detector_events, events.len() as u64);
        prop_assert!(a.sample.counts().iter().all(|&x| x as usize <= cfg.n_windows()));
    }
}

#[test]
fn normalization_on_a_mu_grid() {
    for n in [1u32, 2, 16, 64, 200] {
        for (eta, p_d) in [(0.49, 0.0), (1.0, 1e-3), (0.1, 0.2)] {
            let cfg = DetectorConfig::new(n, eta, p_d).unwrap();
            for i in 0..=1000 {
                let mu = i as f64;
                let total = click_pmf_poisson(&cfg, mu).unwrap().total();
                assert!((total - 1.0).abs() < 1e-12, "n={n} mu={mu}: {total}");
            }
        }
    }
}

#[test]
fn estimator_image_is_the_discrete_grid() {
    use pnr_core::{mle_mu, ClickSample};
    let cfg = DetectorConfig::new(4, 0.7, 0.0).unwrap();
    let n_pulses = 5usize;
    let grid: Vec<f64> = (0..4 * n_pulses)
        .map(|k| mle_from_mean(&cfg, k as f64 / n_pulses as f64).unwrap())
        .collect();
    // every sample of 5 pulses either saturates or lands on the grid
    for code in 0..5usize.pow(5) {
        let mut c = code;
        let counts: Vec<u32> = (0..n_pulses)
            .map(|_| {
                let x = (c % 5) as u32;
                c /= 5;
                x
            })
            .collect();
        let sample = ClickSample::new(counts.clone(), 4).unwrap();
        match mle_mu(&cfg, &sample) {
            Ok(est) => {
                let k = counts.iter().sum::<u32>() as usize;
                assert!((est.mu_hat - grid[k]).abs() <= 1e-12 * grid[k].max(1.0));
            }
            Err(e) => assert!(counts.iter().all(|&x| x == 4), "{counts:?}: {e}"),
        }
    }
}
