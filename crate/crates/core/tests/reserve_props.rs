mod common;

use vppres::freq::{freq_response, metrics, uniform_grid, vpp_power_steady, ClosedForm, VppGain};
use vppres::reserve::{
    lattice_search, line_flow_check, min_reserve, reserve_peak_baseline, PtdfLine, PtdfNetwork, SearchOptions,
};

#[test]
fn membership_agrees_with_metric_oracle_on_lattice() {
    let cfg = common::base_case();
    let region = common::base_case_region(&cfg);
    let fit = common::base_case_fit(&cfg);
    let lim = cfg.limits;
    let times = uniform_grid(2.0, 0.5);
    let mut feasible = 0;
    for i in 0..50 {
        for j in 0..50 {
            let gain = VppGain::new(30.0 * i as f64 / 49.0, 30.0 * j as f64 / 49.0);
            let oracle = match freq_response(&cfg.grid, &gain, &cfg.disturbance, &times) {
                Ok(tr) => {
                    let m = metrics(&tr, &cfg.grid, &gain, &cfg.disturbance, lim.settle_band).unwrap();
                    m.rocof_max.abs() <= lim.rocof_lim
                        && m.nadir >= -lim.nadir_lim
                        && m.qss.abs() <= lim.qss_lim
                        && fit.predict(gain.h_vpp, gain.d_vpp) <= lim.sigma
                }
                Err(_) => false,
            };
            assert_eq!(region.contains(&gain), oracle, "disagreement at {gain:?}");
            feasible += oracle as usize;
        }
    }
    assert!(feasible > 0);
}

#[test]
fn two_stage_decision_matches_joint_lattice() {
    let cfg = common::base_case();
    let region = common::base_case_region(&cfg);
    let dec = min_reserve(&region, 60.0, &SearchOptions::default()).unwrap();
    let (best, e_best) = lattice_search(&region, 200, 60.0).unwrap();
    let cell = 30.0 / 199.0;
    assert!((dec.gain.h_vpp - best.h_vpp).abs() <= cell, "{dec:?} vs {best:?}");
    assert!((dec.gain.d_vpp - best.d_vpp).abs() <= cell, "{:?} vs {best:?}", dec.gain);
    let e_dec = ClosedForm::new(&cfg.grid, &dec.gain, &cfg.disturbance).unwrap().energy_exact(60.0);
    assert!(e_dec <= e_best * (1.0 + 1e-9), "{e_dec} > {e_best}");
}

#[test]
fn both_search_stages_are_monotone() {
    let cfg = common::base_case();
    let region = common::base_case_region(&cfg);
    let dec = min_reserve(&region, 60.0, &SearchOptions::default()).unwrap();
    let steady: Vec<f64> = (0..100)
        .map(|i| vpp_power_steady(&cfg.grid, &VppGain::new(dec.gain.h_vpp, 0.3 * (i + 1) as f64), &cfg.disturbance))
        .collect();
    assert!(steady.windows(2).all(|w| w[1] > w[0]));
    let energy: Vec<f64> = (0..100)
        .map(|i| {
            let h = 10.7 + 0.19 * i as f64;
            ClosedForm::new(&cfg.grid, &VppGain::new(h, dec.gain.d_vpp), &cfg.disturbance)
                .unwrap()
                .energy_exact(60.0)
        })
        .collect();
    assert!(energy.windows(2).all(|w| w[1] > w[0]));
}

#[test]
fn peak_baseline_and_idle_share() {
    let cfg = common::base_case();
    let gain = VppGain::new(15.925, 14.2094);
    let opts = SearchOptions::default();
    let peak = reserve_peak_baseline(&cfg.grid, &gain, &cfg.disturbance, 60.0, &opts).unwrap();
    assert!((peak.energy_mwh - 3.2).abs() <= 0.03 * 3.2, "{}", peak.energy_mwh);
    assert!(peak.reserve_profile.iter().all(|&p| p == peak.peak_power));
    assert!((peak.energy - peak.peak_power * 60.0).abs() < 1e-12);
}

#[test]
fn static_flows_when_vpp_is_idle() {
    let net = PtdfNetwork {
        lines: vec![PtdfLine {
            id: "L".into(),
            limit: 0.2,
            s_vpp: 0.7,
            s_g: vec![0.3, -0.1],
            s_d: vec![0.2],
        }],
        sg_outputs: vec![0.5, 0.4],
        loads: vec![0.6],
    };
    let times = uniform_grid(5.0, 1.0);
    let v = line_flow_check(&net, &times, &vec![0.0; times.len()]).unwrap();
    assert!((v[0].max_flow - (0.15 - 0.04 - 0.12_f64).abs()).abs() < 1e-15);
    assert!(v[0].within_limit);
    assert!(line_flow_check(&net, &times, &[0.0]).is_err());
}

#[test]
fn bundled_network_peak_flow() {
    let cfg = common::base_case();
    let region = common::base_case_region(&cfg);
    let dec = min_reserve(&region, 60.0, &SearchOptions::default()).unwrap();
    let v = line_flow_check(&cfg.network, &dec.times, &dec.reserve_profile).unwrap();
    let worst = v.iter().map(|l| l.max_flow).fold(0.0, f64::max);
    assert!((worst - 0.19).abs() < 0.005 && v.iter().all(|l| l.within_limit), "{v:?}");
}
