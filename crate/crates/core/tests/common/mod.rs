#![allow(dead_code)]

use std::path::PathBuf;
use vppres::freq::VppGain;
use vppres::reserve::{feasible_region, FeasibleRegion};
use vppres::scenario::{load_config, ScenarioConfig};
use vppres::statespace::{fit_stability_surface, StabilityFit};

pub fn bundled_config_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/ieee39_table1.json")
}

pub fn base_case() -> ScenarioConfig {
    load_config(&bundled_config_path()).expect("bundled config loads")
}

pub fn base_case_fit(cfg: &ScenarioConfig) -> StabilityFit {
    fit_stability_surface(
        &cfg.grid,
        &cfg.device,
        &cfg.disturbance,
        &cfg.solver.lattice,
        cfg.solver.weighting,
    )
    .expect("fit succeeds")
}

pub fn base_case_region(cfg: &ScenarioConfig) -> FeasibleRegion {
    let fit = base_case_fit(cfg);
    feasible_region(&cfg.grid, &cfg.disturbance, &cfg.limits, &fit, cfg.caps).expect("region builds")
}

/// The minimal-reserve decision for the bundled scenario.
pub fn decision_gain() -> VppGain {
    VppGain::new(16.028, 14.142)
}

/// Brute-force optimum of a two-IBR allocation on an `n`×`n` grid of (h1, d1),
/// compared against an LP plan.
pub struct GridOracle {
    /// Best objective over feasible grid points.
    pub best: f64,
    /// Largest objective change across one grid cell.
    pub cell_bound: f64,
    /// Objective change from the LP optimum to the nearest feasible grid point.
    pub nearest_bound: f64,
}

pub fn two_ibr_grid_oracle(
    basis: &vppres::alloc::InjectionBasis,
    ibrs: &vppres::alloc::IbrParams,
    m: &vppres::alloc::MarketParams,
    gain: &VppGain,
    lp: &vppres::alloc::AllocationPlan,
    n: usize,
) -> Option<GridOracle> {
    let (h, d) = (gain.h_vpp, gain.d_vpp);
    let h_rng = (ibrs.h_bounds[0].0.max(h - ibrs.h_bounds[1].1), ibrs.h_bounds[0].1.min(h - ibrs.h_bounds[1].0));
    let d_rng = (ibrs.d_bounds[0].0.max(d - ibrs.d_bounds[1].1), ibrs.d_bounds[0].1.min(d - ibrs.d_bounds[1].0));
    let (dh, dd) = ((h_rng.1 - h_rng.0) / (n - 1) as f64, (d_rng.1 - d_rng.0) / (n - 1) as f64);
    let (wa, wd) = basis.energy_weights();
    let slope = (ibrs.c_r[0] - ibrs.c_r[1]).abs() * m.base_mva / 3600.0;
    let objective = |h1: f64, d1: f64| {
        let e1 = wa * h1 + wd * d1;
        let e2 = wa * (h - h1) + wd * (d - d1);
        m.dollars(m.c_f - ibrs.c_r[0], e1) + m.dollars(m.c_f - ibrs.c_r[1], e2)
    };
    let feasible = |h1: f64, d1: f64| {
        (0..basis.times.len()).all(|k| {
            let p1 = basis.power(h1, d1, k);
            let p2 = basis.power(h - h1, d - d1, k);
            p1 >= -1e-12 && p1 <= ibrs.p_rated[0] + 1e-12 && p2 >= -1e-12 && p2 <= ibrs.p_rated[1] + 1e-12
        })
    };
    let mut best = f64::NEG_INFINITY;
    let mut nearest = f64::INFINITY;
    for i in 0..n {
        for j in 0..n {
            let (h1, d1) = (h_rng.0 + dh * i as f64, d_rng.0 + dd * j as f64);
            if feasible(h1, d1) {
                best = best.max(objective(h1, d1));
                nearest = nearest.min(slope * (wa.abs() * (h1 - lp.h_i[0]).abs() + wd.abs() * (d1 - lp.d_i[0]).abs()));
            }
        }
    }
    best.is_finite().then_some(GridOracle {
        best,
        cell_bound: slope * (wa.abs() * dh + wd.abs() * dd),
        nearest_bound: nearest,
    })
}
