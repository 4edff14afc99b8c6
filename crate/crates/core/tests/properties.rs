mod common;

use common::*;
use dynlogit::dgp::{generate, DesignSpec};
use dynlogit::estimators::{fit_basic, fit_improved, fit_two_lag, ImprovedMode, SolverConfig, TwoLagMode};
use dynlogit::quadexp::{cond_distribution, Approximation, ImprovedWeights};
use dynlogit::{PanelDataset, PanelUnit, Theta};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn unit_strategy(t_max: usize) -> impl Strategy<Value = (PanelUnit, Theta, f64)> {
    (2..=t_max, 1..=2usize, any::<u64>(), -4.0..4.0f64).prop_map(|(t, k, seed, alpha)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let unit = random_unit(&mut rng, t, k, true);
        let theta = random_theta(&mut rng, k);
        (unit, theta, alpha)
    })
}

fn shifted(unit: &PanelUnit, shift: &[f64]) -> PanelUnit {
    let scale = vec![1.0; shift.len()];
    unit.map_covariates(&scale, shift)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn conditional_law_free_of_alpha((unit, theta, alpha) in unit_strategy(5)) {
        let lib = cond_distribution(&unit, &theta, Approximation::Basic).unwrap();
        for a in [alpha, -alpha, 0.0] {
            for (m, p) in conditional_probs(&unit, a, &theta, None) {
                let l = lib.iter().find(|(lm, _)| *lm == m).unwrap().1;
                prop_assert!((l - p).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn conditional_law_sums_to_one((unit, theta, _a) in unit_strategy(6), b in -2.0..2.0f64) {
        let s: f64 = cond_distribution(&unit, &theta, Approximation::Basic).unwrap().iter().map(|x| x.1).sum();
        prop_assert!((s - 1.0).abs() < 1e-12);
        let w = ImprovedWeights::from_unit(&unit, &vec![b; unit.k()]);
        let s: f64 = cond_distribution(&unit, &theta, Approximation::Improved(&w)).unwrap().iter().map(|x| x.1).sum();
        prop_assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn common_shift_in_covariates_is_invisible((unit, theta, _a) in unit_strategy(5), c in -3.0..3.0f64) {
        let moved = shifted(&unit, &vec![c; unit.k()]);
        let a = cond_distribution(&unit, &theta, Approximation::Basic).unwrap();
        let b = cond_distribution(&moved, &theta, Approximation::Basic).unwrap();
        for ((ma, pa), (mb, pb)) in a.iter().zip(&b) {
            prop_assert_eq!(ma, mb);
            prop_assert!((pa - pb).abs() < 1e-12);
        }
    }

    #[test]
    fn improved_at_zero_is_basic((unit, theta, _a) in unit_strategy(5)) {
        let w = ImprovedWeights::from_unit(&unit, &vec![0.0; unit.k()]);
        let a = cond_distribution(&unit, &theta, Approximation::Basic).unwrap();
        let b = cond_distribution(&unit, &theta, Approximation::Improved(&w)).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn improved_matches_oracle((unit, theta, alpha) in unit_strategy(5), b in -2.0..2.0f64) {
        let bar = vec![b; unit.k()];
        let w = ImprovedWeights::from_unit(&unit, &bar);
        let lib = cond_distribution(&unit, &theta, Approximation::Improved(&w)).unwrap();
        let q = q_weights(&unit, &bar);
        for (m, p) in conditional_probs(&unit, alpha, &theta, Some(&q)) {
            let l = lib.iter().find(|(lm, _)| *lm == m).unwrap().1;
            prop_assert!((l - p).abs() < 1e-12);
        }
    }

    #[test]
    fn adjacent_log_odds_ratio_is_gamma((unit, theta, alpha) in unit_strategy(5), s in 0usize..4) {
        // joint approximating model: flipping y_{s} changes the log-odds of y_{s+1} by gamma
        let t = unit.t();
        prop_assume!(s + 1 < t);
        let joint = joint_probs(&unit, alpha, &theta, None);
        for z in 0..1u32 << t {
            if (z >> s) & 1 == 1 || (z >> (s + 1)) & 1 == 1 {
                continue;
            }
            let lo = |z: u32| (joint[(z | 1 << (s + 1)) as usize] / joint[z as usize]).ln();
            prop_assert!((lo(z | 1 << s) - lo(z) - theta.gamma).abs() < 1e-10);
        }
    }
}

fn dataset(seed: u64, n: usize, t: usize, gamma: f64) -> PanelDataset {
    generate(&DesignSpec::benchmark(n, t, gamma, seed, 1), 0).unwrap()
}

#[test]
fn fixed_zero_beta_bar_fit_equals_basic_fit() {
    let d = dataset(3, 400, 4, 1.0);
    let cfg = SolverConfig::default();
    let a = fit_basic(&d, &cfg).unwrap();
    let b = fit_improved(&d, &ImprovedMode::Fixed(vec![0.0]), &cfg).unwrap();
    assert_eq!(a.theta_hat, b.theta_hat);
    assert_eq!(a.se, b.se);
    assert_eq!(a.loglik, b.loglik);
}

#[test]
fn start_point_does_not_matter() {
    let d = dataset(4, 600, 3, 0.5);
    let a = fit_basic(&d, &SolverConfig::default()).unwrap();
    for start in [Theta::new(vec![2.0], -1.0), Theta::new(vec![-1.0], 2.5)] {
        let cfg = SolverConfig { start: Some(start), ..SolverConfig::default() };
        let b = fit_basic(&d, &cfg).unwrap();
        for (x, y) in a.estimates().iter().zip(b.estimates()) {
            assert!((x - y).abs() < 1e-7, "{x} vs {y}");
        }
    }
}

#[test]
fn covariate_rescaling_rescales_beta() {
    let d = dataset(5, 600, 4, 1.0);
    let c = 2.5;
    let scaled = d.map_covariates(&[c], &[0.0]);
    let cfg = SolverConfig::default();
    let a = fit_basic(&d, &cfg).unwrap();
    let b = fit_basic(&scaled, &cfg).unwrap();
    assert!((a.theta_hat.beta[0] - c * b.theta_hat.beta[0]).abs() < 1e-8);
    assert!((a.theta_hat.gamma - b.theta_hat.gamma).abs() < 1e-8);
    assert!((a.loglik - b.loglik).abs() < 1e-8);
}

#[test]
fn newton_trace_is_nondecreasing() {
    for seed in 0..5 {
        let d = dataset(seed, 300, 5, 2.0);
        for fit in [
            fit_basic(&d, &SolverConfig::default()).unwrap(),
            fit_improved(&d, &ImprovedMode::Fixed(vec![1.0]), &SolverConfig::default()).unwrap(),
        ] {
            for w in fit.loglik_trace.windows(2) {
                assert!(w[1] >= w[0] - 1e-9 * w[0].abs().max(1.0), "{w:?}");
            }
        }
    }
}

#[test]
fn fit_score_vanishes_against_oracle_likelihood() {
    // the estimate is a stationary point of the brute-force conditional likelihood
    let d = dataset(6, 200, 4, 0.5);
    let fit = fit_basic(&d, &SolverConfig::default()).unwrap();
    let ll = |th: &Theta| -> f64 {
        d.units()
            .iter()
            .filter(|u| u.is_informative())
            .map(|u| conditional_loglik(u, th, None))
            .sum()
    };
    let h = 1e-5;
    let th = fit.estimates();
    for j in 0..th.len() {
        let (mut a, mut b) = (th.clone(), th.clone());
        a[j] += h;
        b[j] -= h;
        let g = (ll(&Theta::from_slice(&a, 1, 1)) - ll(&Theta::from_slice(&b, 1, 1))) / (2.0 * h);
        assert!(g.abs() < 1e-5, "gradient {g}");
    }
    let own = ll(&fit.theta_hat);
    assert!((own - fit.loglik).abs() < 1e-9 * own.abs());
}

#[test]
fn dynamic_improved_fixed_point() {
    let d = dataset(7, 800, 5, 1.0);
    let fit = fit_improved(&d, &ImprovedMode::Dynamic, &SolverConfig::default()).unwrap();
    let bar = fit.beta_bar.clone().unwrap();
    assert!((bar[0] - fit.theta_hat.beta[0]).abs() < 1e-8);
    // refitting with beta_bar frozen at the fixed point returns the same estimate
    let again = fit_improved(&d, &ImprovedMode::Fixed(bar), &SolverConfig::default()).unwrap();
    for (a, b) in fit.estimates().iter().zip(again.estimates()) {
        assert!((a - b).abs() < 1e-7);
    }
}

#[test]
fn csv_round_trip_preserves_fit() {
    let d = dataset(8, 250, 3, 0.5);
    let text = d.to_csv_string().unwrap();
    let back = PanelDataset::from_csv_reader(text.as_bytes()).unwrap();
    assert_eq!(back.to_csv_string().unwrap(), text);
    let cfg = SolverConfig::default();
    assert_eq!(fit_basic(&d, &cfg).unwrap().theta_hat, fit_basic(&back, &cfg).unwrap().theta_hat);
}

#[test]
fn two_lag_conditional_law_matches_oracle() {
    // exponent: z_+ alpha + sum z_t x_t'beta + sum_h gamma_h sum_t z_{t-h}(z_t - q_t)
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for i in 0..200 {
        let t = 3 + i % 3;
        let base = random_unit(&mut rng, t, 1, true);
        let ym1 = (i % 2) as u8;
        let unit = base.clone().with_lag2(ym1, vec![0.1]).unwrap();
        let th = random_theta(&mut rng, 1);
        let theta = Theta::two_lag(th.beta.clone(), th.gamma, -0.7 + 0.01 * i as f64);
        let bar = [0.4];
        let q = q_weights(&unit, &bar);
        let x = rows(&unit);
        let exponent = |mask: u32, q: &[f64]| {
            let z = bits(mask, t);
            let at = |s: isize| -> f64 {
                match s {
                    -1 => ym1 as f64,
                    0 => unit.y0() as f64,
                    s => z[s as usize - 1] as f64,
                }
            };
            let mut e = 0.0;
            for s in 1..=t {
                let zs = at(s as isize);
                e += zs * (1.3 + x[s - 1][0] * theta.beta[0]);
                e += theta.gamma * at(s as isize - 1) * (zs - q[s - 1]);
                e += theta.gamma2.unwrap() * at(s as isize - 2) * (zs - q[s - 1]);
            }
            e
        };
        let w = ImprovedWeights::from_unit(&unit, &bar);
        for (approx, qv) in [(Approximation::Basic, vec![0.5; t]), (Approximation::Improved(&w), q.clone())] {
            let lib = cond_distribution(&unit, &theta, approx).unwrap();
            let class: Vec<u32> = (0..1u32 << t).filter(|m| m.count_ones() as usize == unit.y_plus()).collect();
            let lse: f64 = class.iter().map(|&m| exponent(m, &qv).exp()).sum::<f64>().ln();
            for &m in &class {
                let p = (exponent(m, &qv) - lse).exp();
                let l = lib.iter().find(|(lm, _)| *lm == m).unwrap().1;
                assert!((p - l).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn two_lag_needs_presample_and_recovers_gamma2() {
    let d = dataset(9, 300, 4, 0.5);
    assert!(fit_two_lag(&d, &TwoLagMode::Basic, &SolverConfig::default()).is_err());

    let mut spec = DesignSpec::benchmark(4000, 6, 0.5, 9, 1);
    spec.lag2_presample = true;
    spec.gamma2 = 0.8;
    let d = generate(&spec, 0).unwrap();
    let fit = fit_two_lag(&d, &TwoLagMode::Improved(ImprovedMode::Dynamic), &SolverConfig::default()).unwrap();
    let g2 = fit.theta_hat.gamma2.unwrap();
    assert!((g2 - 0.8).abs() < 4.0 * fit.se[2], "gamma2 {g2} se {}", fit.se[2]);
}

#[test]
fn time_invariant_covariate_is_not_identified() {
    let units: Vec<PanelUnit> = (0..50)
        .map(|i| {
            let y = vec![(i % 2) as u8, ((i + 1) % 2) as u8, (i % 3 == 0) as u8];
            let v = i as f64 * 0.1;
            PanelUnit::new(format!("{i}"), 0, vec![v], y, vec![vec![v]; 3]).unwrap()
        })
        .collect();
    let d = PanelDataset::from_units(units).unwrap();
    match fit_basic(&d, &SolverConfig::default()) {
        Err(dynlogit::Error::NotIdentified { direction, .. }) => {
            assert!(direction[0].abs() > 0.99, "{direction:?}");
        }
        other => panic!("expected identification failure, got {other:?}"),
    }
}
