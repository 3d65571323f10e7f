use binsurv::km::{censoring_km, km_estimate};
use binsurv::{
    l_statistic_with, parse_csv, to_csv, Arm, StepFunction, Strictness, StudyConfig, SubjectRecord,
    TrialDataset, VarianceMode, WeightSpec,
};
use proptest::prelude::*;

fn arb_dataset() -> impl Strategy<Value = TrialDataset> {
    prop::collection::vec(
        (any::<bool>(), any::<bool>(), 1u32..=200, any::<bool>()),
        8..60,
    )
    .prop_map(|raw| {
        let records = raw
            .into_iter()
            .enumerate()
            .map(|(i, (treat, resp, k, event))| SubjectRecord {
                // two subjects per arm, each arm with a responder
                arm: match i {
                    0 | 1 => Arm::Control,
                    2 | 3 => Arm::Treatment,
                    _ if treat => Arm::Treatment,
                    _ => Arm::Control,
                },
                responder: resp || i == 0 || i == 2,
                time: k as f64 / 100.0,
                event,
            })
            .collect();
        TrialDataset::new(records).unwrap()
    })
}

fn arb_config() -> impl Strategy<Value = StudyConfig> {
    (
        prop::sample::select(vec![(0.0, 0.5, 1.0), (0.0, 1.0, 1.0), (0.2, 0.6, 1.5)]),
        prop::sample::select(vec![
            (0.0, 0.0, 0.0),
            (1.0, 0.0, 0.0),
            (0.0, 1.0, 0.0),
            (0.0, 0.0, 1.0),
            (1.0, 0.0, 1.0),
        ]),
        prop::sample::select(vec![VarianceMode::Pooled, VarianceMode::Unpooled]),
    )
        .prop_map(
            |((tau0, tau_b, tau), (eta, rho, gamma), mode)| StudyConfig {
                tau0,
                tau_b,
                tau,
                weights: WeightSpec::new(eta, rho, gamma),
                variance_mode: mode,
                ..StudyConfig::default()
            },
        )
}

fn check_survival_curve(f: &StepFunction, times: &[f64]) -> Result<(), TestCaseError> {
    prop_assert_eq!(f.initial_value(), 1.0);
    let mut prev = 1.0;
    for (&t, &v) in f.breakpoints().iter().zip(f.values()) {
        prop_assert!((0.0..=1.0).contains(&v));
        prop_assert!(v < prev, "curve must drop at each breakpoint");
        prop_assert!(times.contains(&t));
        prev = v;
    }
    Ok(())
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

proptest! {
    #[test]
    fn km_curves_are_monotone_probabilities(ds in arb_dataset()) {
        let (t, e) = ds.all_columns();
        let s = km_estimate(&t, &e).unwrap();
        let g = censoring_km(&t, &e).unwrap();
        check_survival_curve(&s, &t)?;
        check_survival_curve(&g, &t)?;
        let events = e.iter().filter(|&&x| x).count();
        prop_assert!(s.breakpoints().len() <= events);
        prop_assert!(g.breakpoints().len() <= t.len() - events);
        if e.iter().all(|&x| !x) {
            prop_assert_eq!(s.last_value(), 1.0);
        }
    }

    #[test]
    fn swapping_arms_negates_the_statistic(ds in arb_dataset(), cfg in arb_config()) {
        let a = l_statistic_with(&ds, &cfg, Strictness::Computable);
        let b = l_statistic_with(&ds.swapped(), &cfg, Strictness::Computable);
        prop_assume!(a.is_ok() && b.is_ok());
        let (a, b) = (a.unwrap(), b.unwrap());
        prop_assert!(close(a.u_b, -b.u_b, 1e-12));
        prop_assert!(close(a.u_s, -b.u_s, 1e-10));
        prop_assert!(close(a.sigma_b_hat, b.sigma_b_hat, 1e-10));
        prop_assert!(close(a.sigma_s_hat, b.sigma_s_hat, 1e-10));
        prop_assert!(close(a.rho_hat, b.rho_hat, 1e-8));
        prop_assert!(close(a.z, -b.z, 1e-8));
        prop_assert_eq!(a.p_hat, [b.p_hat[1], b.p_hat[0]]);
    }

    #[test]
    fn statistic_is_invariant_to_the_time_unit(
        ds in arb_dataset(),
        cfg in arb_config(),
        k in prop::sample::select(vec![0.5, 2.0, 3.7, 12.0]),
    ) {
        let scaled_cfg = StudyConfig {
            tau0: cfg.tau0 * k,
            tau_b: cfg.tau_b * k,
            tau: cfg.tau * k,
            ..cfg.clone()
        };
        let a = l_statistic_with(&ds, &cfg, Strictness::Computable);
        let b = l_statistic_with(&ds.rescaled(k), &scaled_cfg, Strictness::Computable);
        prop_assume!(a.is_ok() && b.is_ok());
        let (a, b) = (a.unwrap(), b.unwrap());
        prop_assert!(close(a.u_b, b.u_b, 1e-12));
        prop_assert!(close(a.u_s * k, b.u_s, 1e-9), "{} {}", a.u_s * k, b.u_s);
        prop_assert!(close(a.rho_hat, b.rho_hat, 1e-7), "{} {}", a.rho_hat, b.rho_hat);
        prop_assert!(close(a.z, b.z, 1e-7), "{} {}", a.z, b.z);
    }

    #[test]
    fn csv_round_trip(ds in arb_dataset()) {
        prop_assert_eq!(parse_csv(&to_csv(&ds)).unwrap(), ds);
    }
}
