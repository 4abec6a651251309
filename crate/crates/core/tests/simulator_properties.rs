use proptest::prelude::*;
use singfit::model::{self, ModelFamily, ParameterSet};
use singfit::simulator::{self, RecursionFamily, RecursionSpec, SimError};
use singfit::{fit, FitConfig, ModelSpec, ParamName};

fn lf_sup_error(refinement: u32) -> f64 {
    let (r0, a) = (0.1, 0.05);
    let mut spec = RecursionSpec::new(RecursionFamily::LinearFeedback, (r0, r0), a, 0.0, 40);
    spec.refinement = refinement;
    let ps = ParameterSet::linear(0.0, 1.0, 0.0, r0, a);
    let out = simulator::iterate_rates(&spec).unwrap();
    out.series
        .points()
        .map(|(k, r)| (r / model::lf_rate(&ps, k).unwrap() - 1.0).abs())
        .fold(0.0, f64::max)
}

#[test]
fn refined_lf_recursion_converges_to_the_continuum() {
    let errors: Vec<f64> = [1, 2, 4, 8, 16, 32, 64].into_iter().map(lf_sup_error).collect();
    for w in errors.windows(2) {
        assert!(w[1] < w[0], "{errors:?}");
    }
    assert!(errors.last().unwrap() < &0.01, "{errors:?}");
}

#[test]
fn nlf_log_rate_is_convex_on_each_sublattice() {
    for (seeds, beta) in [((0.1, 0.1), 0.5), ((0.1, 0.13), 0.383), ((0.05, 0.2), 0.1)] {
        let spec = RecursionSpec::new(RecursionFamily::NonlinearFeedback, seeds, 0.1, beta, 60);
        let out = simulator::iterate_rates(&spec).unwrap();
        let v = out.series.values();
        for parity in 0..2 {
            let logs: Vec<f64> = v.iter().skip(parity).step_by(2).map(|r| r.ln()).collect();
            for w in logs.windows(3) {
                assert!(w[2] - 2.0 * w[1] + w[0] > 0.0);
            }
        }
    }
}

#[test]
fn lf_log_rate_is_linear_on_each_sublattice() {
    let spec = RecursionSpec::new(RecursionFamily::LinearFeedback, (0.1, 0.12), 0.2, 0.0, 30);
    let v = simulator::iterate_rates(&spec).unwrap().series;
    for k in 4..v.len() {
        let second = v.values()[k].ln() - 2.0 * v.values()[k - 2].ln() + v.values()[k - 4].ln();
        assert!(second.abs() < 1e-12);
    }
}

proptest! {
    #[test]
    fn blowup_is_monotone_in_strength(beta in 0.2f64..0.9, a in 0.05f64..0.5, bump in 0.0f64..0.3, r0 in 0.05f64..0.5) {
        let run = |a_p: f64| {
            let spec = RecursionSpec::new(RecursionFamily::NonlinearFeedback, (r0, r0), a_p, beta, 5000);
            simulator::iterate_rates(&spec).unwrap().blowup_step.expect("overflows")
        };
        prop_assert!(run(a + bump) <= run(a));
    }
}

#[test]
fn blowup_lags_the_continuum_critical_time() {
    // Measured discrete-vs-continuum gap for the beta = 0.5 fixture; refining
    // the lattice closes it.
    let continuum = 1.0 / (0.5 * 0.1 * 0.1f64.sqrt());
    let step = |m: u32| {
        let mut spec = RecursionSpec::new(RecursionFamily::NonlinearFeedback, (0.1, 0.1), 0.1, 0.5, 500);
        spec.refinement = m;
        simulator::iterate_rates(&spec).unwrap().blowup_step.unwrap() as f64
    };
    let gaps: Vec<f64> = [1, 4, 16, 64, 256].into_iter().map(|m| step(m) - continuum).collect();
    for w in gaps.windows(2) {
        assert!(w[1] < w[0], "{gaps:?}");
    }
    assert!(gaps.iter().all(|&g| g > 0.0));
    assert!(*gaps.last().unwrap() < 2.0, "{gaps:?}");
}

#[test]
fn simulated_prices_accumulate_the_rates() {
    let spec = RecursionSpec::new(RecursionFamily::LinearFeedback, (0.1, 0.1), 0.176, 0.0, 15);
    let mut spec = spec;
    spec.start_year = 1970;
    let r = simulator::iterate_rates(&spec).unwrap().series;
    let p = simulator::integrate_prices(&r, 1.0).unwrap();
    assert_eq!(p.start_year, 1969);
    assert_eq!(p.len(), r.len() + 1);
    let logs: f64 = r.values().iter().sum();
    assert!((p.values().last().unwrap().ln() - logs).abs() < 1e-12);
}

#[test]
fn synthesized_fixture_is_fittable() {
    let ps = ParameterSet::nonlinear(1969.0, 1.0, 0.0, 0.165, 0.383, 1999.26);
    let data = simulator::synthesize(&ps, ModelFamily::NonlinearFeedback, 1969, 1990, 0.0, 0).unwrap();
    assert_eq!(data.len(), 22);
    let cfg = FitConfig::new(ModelSpec::log_cpi(ModelFamily::NonlinearFeedback)).freeze(ParamName::P0, 0.0);
    let res = fit(&data, &cfg).unwrap();
    assert!(res.converged);
    assert!(matches!(
        simulator::synthesize(&ps, ModelFamily::NonlinearFeedback, 1990, 2010, 0.0, 0),
        Err(SimError::Model(_))
    ));
}
