mod common;

use proptest::prelude::*;
use vppres::freq::{
    cumulative_energy, freq_response, uniform_grid, vpp_power_steady, ClosedForm, VppGain,
};
use vppres::statespace::model::{F_G, F_P, I_OQ};
use vppres::statespace::{simulate, SwitchedModel};

fn gains_in_region() -> impl Strategy<Value = (f64, f64)> {
    (10.7f64..30.0, 12.2f64..30.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn closed_form_nadir_matches_rk4((h, d) in gains_in_region()) {
        let cfg = common::base_case();
        let region = common::base_case_region(&cfg);
        let gain = VppGain::new(h, d);
        prop_assume!(region.contains(&gain));
        let sw = SwitchedModel::new(&cfg.grid, &cfg.device, &gain, &cfg.disturbance);
        let x0 = sw.equilibrium().unwrap();
        let traj = simulate(&sw, &x0, 15.0, 1e-3).unwrap();
        let cf = ClosedForm::new(&cfg.grid, &gain, &cfg.disturbance).unwrap();
        let nadir_cf = cf.second_branch(cf.nadir_time().unwrap());
        let (_, nadir_sim) = traj.nadir();
        prop_assert!(((nadir_sim - nadir_cf) / nadir_cf).abs() <= 0.02, "{nadir_sim} vs {nadir_cf}");
        prop_assert!(traj.swing_residual(&sw) <= 1e-6);
        for (t, x) in traj.times.iter().zip(&traj.states) {
            prop_assert!(x[I_OQ].abs() < 1e-9);
            let df = x[F_G] - 1.0;
            if *t >= 1.0 {
                prop_assert!((x[F_P] - x[F_G]).abs() <= 0.05 * df.abs(), "PLL lags at t={t}");
            }
        }
    }

    #[test]
    fn nadir_time_is_stationary((h, d) in (0.0f64..30.0, 0.0f64..30.0)) {
        let cfg = common::base_case();
        let Ok(cf) = ClosedForm::new(&cfg.grid, &VppGain::new(h, d), &cfg.disturbance) else {
            return Ok(());
        };
        let tn = cf.nadir_time().unwrap();
        prop_assert!(tn > 0.0);
        prop_assert!(cf.delta_f_rate(tn).abs() < 1e-6);
        prop_assert!(cf.delta_f(tn) <= cf.qss() && cf.qss() <= 0.0);
    }

    #[test]
    fn rocof_occurs_at_onset((h, d) in (0.0f64..30.0, 0.0f64..30.0)) {
        let cfg = common::base_case();
        let gain = VppGain::new(h, d);
        let Ok(cf) = ClosedForm::new(&cfg.grid, &gain, &cfg.disturbance) else {
            return Ok(());
        };
        let times = uniform_grid(20.0, 1e-3);
        let rates: Vec<f64> = times.iter().map(|&t| cf.delta_f_rate(t).abs()).collect();
        let (imax, max) = rates.iter().enumerate().fold((0, 0.0), |b, (i, &r)| if r > b.1 { (i, r) } else { b });
        let expected = cfg.disturbance.delta_p / (2.0 * (cfg.grid.h0 + h));
        prop_assert_eq!(imax, 0);
        prop_assert!((max - expected).abs() <= 0.01 * expected, "{max} vs {expected}");
        let tr = freq_response(&cfg.grid, &gain, &cfg.disturbance, &times[..2]).unwrap();
        let onset = (tr.delta_f[1] - tr.delta_f[0]).abs() / 1e-3;
        prop_assert!((onset - expected).abs() <= 0.01 * expected, "{onset} vs {expected}");
    }

    #[test]
    fn qss_is_reached_after_ten_time_constants((h, d) in (0.0f64..30.0, 1.0f64..30.0)) {
        let cfg = common::base_case();
        let Ok(cf) = ClosedForm::new(&cfg.grid, &VppGain::new(h, d), &cfg.disturbance) else {
            return Ok(());
        };
        let t = 10.0 / cf.ch.decay();
        prop_assert!((cf.delta_f(t) - cf.qss()).abs() <= 1e-3 * cf.qss().abs());
    }
}

#[test]
fn energy_rises_with_inertia_and_steady_power_with_damping() {
    let cfg = common::base_case();
    let hs: Vec<f64> = (0..10).map(|i| 11.0 + 2.0 * i as f64).collect();
    let ds: Vec<f64> = (0..10).map(|i| 12.5 + 1.9 * i as f64).collect();
    let energy = |h: f64, d: f64| {
        cumulative_energy(&cfg.grid, &VppGain::new(h, d), &cfg.disturbance, 60.0)
            .unwrap()
            .exact
    };
    for &d in &ds {
        for w in hs.windows(2) {
            assert!(energy(w[1], d) > energy(w[0], d), "energy not increasing in H at D={d}");
        }
    }
    for &h in &hs {
        for w in ds.windows(2) {
            let lo = vpp_power_steady(&cfg.grid, &VppGain::new(h, w[0]), &cfg.disturbance);
            let hi = vpp_power_steady(&cfg.grid, &VppGain::new(h, w[1]), &cfg.disturbance);
            assert!(hi > lo);
        }
    }
    assert!(energy(20.0, 14.2094) > energy(15.925, 14.2094));
}

#[test]
fn steady_power_matches_trajectory_tail() {
    let cfg = common::base_case();
    let gain = VppGain::new(15.925, 14.2094);
    let steady = vpp_power_steady(&cfg.grid, &gain, &cfg.disturbance);
    assert!((steady - 0.0863).abs() < 1e-4);
    let cf = ClosedForm::new(&cfg.grid, &gain, &cfg.disturbance).unwrap();
    assert!((cf.vpp_power_total(200.0) - steady).abs() < 1e-9);
}

#[test]
fn reported_gain_peak_injection() {
    let cfg = common::base_case();
    let cf = ClosedForm::new(&cfg.grid, &VppGain::new(15.925, 14.2094), &cfg.disturbance).unwrap();
    let peak = uniform_grid(60.0, 0.01)
        .into_iter()
        .map(|t| cf.vpp_power_total(t))
        .fold(f64::NEG_INFINITY, f64::max);
    assert!((peak - 0.19).abs() < 0.005, "{peak}");
}
