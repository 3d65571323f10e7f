use binsurv::copsim::{map_replicates, Scenario};
use binsurv::{CovarianceForm, Fitted, Strictness, StudyConfig, VarianceMode};

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

fn median_covariance(theta: f64, form: CovarianceForm) -> f64 {
    let sc = Scenario {
        id: None,
        theta,
        a: 1.0,
        b: 1.0,
        b1: None,
        p0: 0.4,
        p1: 0.4,
        c: Some(3.0),
        n_per_arm: 300,
        cfg: StudyConfig {
            covariance: form,
            ..StudyConfig::default()
        },
        seed: 31,
    };
    let values = map_replicates(&sc, 101, |_, ds| {
        Fitted::with_strictness(ds, &sc.cfg, Strictness::Computable)
            .and_then(|f| f.sigma_bs(VarianceMode::Pooled))
            .unwrap()
    })
    .unwrap();
    median(values)
}

#[test]
fn association_gives_positive_covariance() {
    for form in [CovarianceForm::Kernel, CovarianceForm::RiskSet] {
        assert!(median_covariance(3.0, form) > 0.0, "{form:?}");
    }
}

#[test]
fn independence_covariance_is_small() {
    for form in [CovarianceForm::Kernel, CovarianceForm::RiskSet] {
        let dep = median_covariance(3.0, form);
        let ind = median_covariance(0.001, form);
        assert!(ind.abs() < 0.25 * dep, "{form:?}: {ind} vs {dep}");
    }
}
