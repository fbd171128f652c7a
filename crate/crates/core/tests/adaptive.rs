use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tlcb_core::adaptive::{estimate_smoothness, estimation_size, piecewise_constant_projection, plan};
use tlcb_core::environment::generate_aux_dataset;
use tlcb_core::{AdaptiveParams, AuxDataset, BinId, RewardSpec, SourceSpec};

#[test]
fn projection_deviation_scales_with_the_exponent() {
    for beta in [0.5, 0.8, 1.0] {
        let f = move |x: &[f64]| 0.7 * x[0].powf(beta) + 0.1;
        let points: Vec<(f64, f64)> = (2..=8u32)
            .map(|l| {
                let bin = BinId::new(l, vec![1]).unwrap();
                let dev = (piecewise_constant_projection(&f, &bin, bin.side(), &[0.0]).unwrap() - 0.1).abs();
                (l as f64, dev.log2())
            })
            .collect();
        let n = points.len() as f64;
        let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
        let my = points.iter().map(|p| p.1).sum::<f64>() / n;
        let slope = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>()
            / points.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
        assert!((-slope - beta).abs() <= 0.05, "beta {beta}: fitted {}", -slope);
    }
}

#[test]
fn estimation_spends_exactly_its_budget() {
    let ap = AdaptiveParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let env = RewardSpec::standard_random(0.8, 0.05, &mut rng).unwrap();
    for (n_q, n_p) in [(2_000u64, 0u64), (2_000, 1_000), (1_000, 8_000), (500, 500)] {
        let src = SourceSpec { gamma: 1.0, mu: vec![0.5, 0.5], n_p };
        let aux = if n_p == 0 { AuxDataset::default() } else { generate_aux_dataset(&env, &src, &mut rng).unwrap() };
        let est = estimate_smoothness(n_q, n_p, &ap, &env, &aux, &mut rng).unwrap();
        let levels = plan(n_q, n_p, 2, &ap);
        let available = if n_p > n_q { n_p } else { n_q };
        assert_eq!(est.s_q + est.s_p, estimation_size(&levels, available, ap.estimation_fraction));
        assert!(est.s_q <= n_q && est.s_p <= n_p);
        assert!(est.s_q == 0 || est.s_p == 0);
        assert_eq!(est.s_q == 0, n_p > n_q);
        assert!((ap.beta_lo..=ap.beta_hi).contains(&est.beta_hat));
    }
}
