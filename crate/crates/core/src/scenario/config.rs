//! JSON scenario files in engineering units, converted to the per-unit
//! quantities used by the solvers.

use super::ScenarioError;
use crate::alloc::{Formulation, IbrParams, MarketParams, PunishmentMode};
use crate::freq::{Disturbance, GridParams, SafetyLimits, VppGain};
use crate::reserve::{PtdfLine, PtdfNetwork, SearchOptions};
use crate::statespace::{DeviceParams, FitWeighting, Lattice};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    #[serde(default)]
    pub name: String,
    pub grid: RawGrid,
    pub disturbance: RawDisturbance,
    pub limits: RawLimits,
    pub device: RawDevice,
    pub base: RawBase,
    pub caps: RawCaps,
    pub ibrs: Vec<RawIbr>,
    pub market: RawMarket,
    #[serde(default)]
    pub realization: Vec<f64>,
    pub network: RawNetwork,
    #[serde(default)]
    pub solver: RawSolver,
    #[serde(default)]
    pub sweeps: RawSweeps,
    #[serde(default)]
    pub compare_rows: Vec<RawGain>,
    #[serde(default)]
    pub simulate_gain: Option<RawGain>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawGrid {
    pub h0_s: f64,
    pub d0_pu: f64,
    pub r_droop: f64,
    pub t_sg_s: f64,
    pub f0_hz: f64,
    pub f_db1_hz: f64,
    pub f_db2_hz: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawDisturbance {
    pub p_g_pu: f64,
    pub p_v_pu: f64,
    pub p_l_pu: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawLimits {
    pub rocof_hz_per_s: f64,
    pub nadir_hz: f64,
    pub qss_hz: f64,
    pub sigma_per_s: f64,
    pub settle_band: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawDevice {
    pub kp_p: f64,
    pub kp_i: f64,
    pub kr_p: f64,
    pub kr_i: f64,
    pub l1_mh: f64,
    pub r1_ohm: f64,
    pub i0_pu: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawBase {
    pub power_mva: f64,
    pub voltage_v: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawCaps {
    pub h_max_s: f64,
    pub d_max_pu: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawIbr {
    pub c_r_per_mwh: f64,
    pub p_rated_pu: f64,
    pub h_bounds: [f64; 2],
    pub d_bounds: [f64; 2],
    #[serde(default)]
    pub fluctuation: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawMarket {
    pub c_f_per_mwh: f64,
    pub c_p_per_mwh: f64,
    pub horizon_s: f64,
    #[serde(default = "default_punishment")]
    pub punishment: PunishmentMode,
}

fn default_punishment() -> PunishmentMode {
    PunishmentMode::Shortfall
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawNetwork {
    #[serde(default)]
    pub reconstructed: bool,
    #[serde(default)]
    pub note: String,
    pub sg_outputs_pu: Vec<f64>,
    pub loads_pu: Vec<f64>,
    pub lines: Vec<RawLine>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawLine {
    pub id: String,
    pub limit_pu: f64,
    pub s_vpp: f64,
    pub s_g: Vec<f64>,
    pub s_d: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawGain {
    pub h_vpp: f64,
    pub d_vpp: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RawSolver {
    pub alloc_dt_s: f64,
    pub report_dt_s: f64,
    pub sim_dt_s: f64,
    pub fit_lattice: Lattice,
    pub fit_weighting: FitWeighting,
    pub formulation: Formulation,
    pub boundary_samples: usize,
    pub d_scan: usize,
    pub h_scan: usize,
    pub profile_dt_s: f64,
    pub fallback_lattice: usize,
}

impl Default for RawSolver {
    fn default() -> Self {
        let s = SearchOptions::default();
        Self {
            alloc_dt_s: 1.0,
            report_dt_s: 0.1,
            sim_dt_s: 1e-3,
            fit_lattice: Lattice {
                h_min: 10.0,
                h_max: 30.0,
                n_h: 30,
                d_min: 1.0,
                d_max: 30.0,
                n_d: 30,
            },
            fit_weighting: FitWeighting::Relative,
            formulation: Formulation::Reduced,
            boundary_samples: 101,
            d_scan: s.d_scan,
            h_scan: s.h_scan,
            profile_dt_s: s.profile_step,
            fallback_lattice: s.fallback_lattice,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RawSweeps {
    pub h0_s: Vec<f64>,
    pub delta_p_pu: Vec<f64>,
}

impl Default for RawSweeps {
    fn default() -> Self {
        Self {
            h0_s: (2..=9).map(f64::from).collect(),
            delta_p_pu: (0..8).map(|i| 0.21 + 0.02 * i as f64).collect(),
        }
    }
}

/// Solver settings after validation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverKnobs {
    pub alloc_dt: f64,
    pub report_dt: f64,
    pub sim_dt: f64,
    pub lattice: Lattice,
    pub weighting: FitWeighting,
    pub formulation: Formulation,
    pub boundary_samples: usize,
    pub search: SearchOptions,
}

/// A validated scenario in per-unit quantities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub name: String,
    pub grid: GridParams,
    pub device: DeviceParams,
    pub disturbance: Disturbance,
    pub limits: SafetyLimits,
    pub ibrs: IbrParams,
    pub market: MarketParams,
    pub network: PtdfNetwork,
    pub network_reconstructed: bool,
    pub caps: (f64, f64),
    pub realization: Vec<f64>,
    pub solver: SolverKnobs,
    pub sweep_h0: Vec<f64>,
    pub sweep_delta_p: Vec<f64>,
    pub compare_rows: Vec<VppGain>,
    pub simulate_gain: Option<VppGain>,
}

fn positive(field: &str, v: f64) -> Result<f64, String> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("{field} must be positive and finite, got {v}"))
    }
}

fn non_negative(field: &str, v: f64) -> Result<f64, String> {
    if v >= 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("{field} must be non-negative and finite, got {v}"))
    }
}

impl RawConfig {
    /// Applies the unit conversions and cross-field checks.
    pub fn into_config(self) -> Result<ScenarioConfig, String> {
        let g = self.grid;
        let f0 = positive("grid.f0_hz", g.f0_hz)?;
        let grid = GridParams {
            h0: positive("grid.h0_s", g.h0_s)?,
            d0: non_negative("grid.d0_pu", g.d0_pu)?,
            r_droop: non_negative("grid.r_droop", g.r_droop)?,
            t_sg: positive("grid.t_sg_s", g.t_sg_s)?,
            f0,
            f_db1: non_negative("grid.f_db1_hz", g.f_db1_hz)? / f0,
            f_db2: non_negative("grid.f_db2_hz", g.f_db2_hz)? / f0,
        };

        let l = self.limits;
        let limits = SafetyLimits {
            rocof_lim: positive("limits.rocof_hz_per_s", l.rocof_hz_per_s)? / f0,
            nadir_lim: positive("limits.nadir_hz", l.nadir_hz)? / f0,
            qss_lim: positive("limits.qss_hz", l.qss_hz)? / f0,
            sigma: l.sigma_per_s,
            settle_band: positive("limits.settle_band", l.settle_band)?,
        };
        if !(limits.sigma < 0.0) {
            return Err(format!("limits.sigma_per_s must be negative, got {}", l.sigma_per_s));
        }

        let base_mva = positive("base.power_mva", self.base.power_mva)?;
        let base_v = positive("base.voltage_v", self.base.voltage_v)?;
        let z_base = base_v * base_v / (base_mva * 1e6);
        let dv = self.device;
        let device = DeviceParams {
            kp_p: dv.kp_p,
            kp_i: dv.kp_i,
            kr_p: dv.kr_p,
            kr_i: dv.kr_i,
            l1: positive("device.l1_mh", dv.l1_mh)? * 1e-3 / z_base,
            r1: non_negative("device.r1_ohm", dv.r1_ohm)? / z_base,
            i0_v: dv.i0_pu,
            m_const: 2.0 * std::f64::consts::PI * f0,
        };
        device.validate().map_err(|e| format!("device: {e}"))?;

        let d = self.disturbance;
        let disturbance = Disturbance::from_components(d.p_g_pu, d.p_v_pu, d.p_l_pu);
        if (d.p_v_pu - dv.i0_pu).abs() > 1e-9 {
            return Err(format!(
                "disturbance.p_v_pu ({}) must equal device.i0_pu ({}) at unit voltage",
                d.p_v_pu, dv.i0_pu
            ));
        }
        if !(disturbance.delta_p > 0.0) {
            return Err(format!(
                "disturbance must be a generation deficit, got p_l - p_g - p_v = {}",
                disturbance.delta_p
            ));
        }

        let caps = (
            non_negative("caps.h_max_s", self.caps.h_max_s)?,
            non_negative("caps.d_max_pu", self.caps.d_max_pu)?,
        );

        if self.ibrs.is_empty() {
            return Err("ibrs must list at least one resource".into());
        }
        let ibrs = IbrParams {
            c_r: self.ibrs.iter().map(|i| i.c_r_per_mwh).collect(),
            p_rated: self.ibrs.iter().map(|i| i.p_rated_pu).collect(),
            h_bounds: self.ibrs.iter().map(|i| (i.h_bounds[0], i.h_bounds[1])).collect(),
            d_bounds: self.ibrs.iter().map(|i| (i.d_bounds[0], i.d_bounds[1])).collect(),
            fluctuation: self.ibrs.iter().map(|i| i.fluctuation).collect(),
        };
        ibrs.validate().map_err(|e| format!("ibrs: {e}"))?;
        if !self.realization.is_empty() {
            if self.realization.len() != ibrs.n_ibr() {
                return Err(format!(
                    "realization has {} entries, expected one per IBR ({})",
                    self.realization.len(),
                    ibrs.n_ibr()
                ));
            }
            for (i, (r, f)) in self.realization.iter().zip(&ibrs.fluctuation).enumerate() {
                if r.abs() > f + 1e-12 {
                    return Err(format!("realization[{i}] = {r} lies outside ±{f}"));
                }
            }
        }

        let m = self.market;
        let market = MarketParams {
            c_f: m.c_f_per_mwh,
            c_p: m.c_p_per_mwh,
            horizon: m.horizon_s,
            base_mva,
            punishment_mode: m.punishment,
        };
        market.validate().map_err(|e| format!("market: {e}"))?;

        let network = PtdfNetwork {
            lines: self
                .network
                .lines
                .into_iter()
                .map(|l| PtdfLine {
                    id: l.id,
                    limit: l.limit_pu,
                    s_vpp: l.s_vpp,
                    s_g: l.s_g,
                    s_d: l.s_d,
                })
                .collect(),
            sg_outputs: self.network.sg_outputs_pu,
            loads: self.network.loads_pu,
        };
        network.validate().map_err(|e| format!("network: {e}"))?;

        let s = self.solver;
        for (field, v) in [
            ("solver.alloc_dt_s", s.alloc_dt_s),
            ("solver.report_dt_s", s.report_dt_s),
            ("solver.sim_dt_s", s.sim_dt_s),
            ("solver.profile_dt_s", s.profile_dt_s),
        ] {
            positive(field, v)?;
        }
        let lat = s.fit_lattice;
        if lat.n_h < 2 || lat.n_d < 2 || !(lat.h_max > lat.h_min) || !(lat.d_max > lat.d_min) {
            return Err("solver.fit_lattice needs at least 2 points on increasing axes".into());
        }
        let solver = SolverKnobs {
            alloc_dt: s.alloc_dt_s,
            report_dt: s.report_dt_s,
            sim_dt: s.sim_dt_s,
            lattice: lat,
            weighting: s.fit_weighting,
            formulation: s.formulation,
            boundary_samples: s.boundary_samples.max(2),
            search: SearchOptions {
                d_scan: s.d_scan,
                h_scan: s.h_scan,
                profile_step: s.profile_dt_s,
                fallback_lattice: s.fallback_lattice,
                base_mva,
            },
        };

        for (i, h) in self.sweeps.h0_s.iter().enumerate() {
            positive(&format!("sweeps.h0_s[{i}]"), *h)?;
        }
        for (i, p) in self.sweeps.delta_p_pu.iter().enumerate() {
            positive(&format!("sweeps.delta_p_pu[{i}]"), *p)?;
        }
        let gain = |g: RawGain| VppGain::new(g.h_vpp, g.d_vpp);

        Ok(ScenarioConfig {
            name: self.name,
            grid,
            device,
            disturbance,
            limits,
            ibrs,
            market,
            network,
            network_reconstructed: self.network.reconstructed,
            caps,
            realization: self.realization,
            solver,
            sweep_h0: self.sweeps.h0_s,
            sweep_delta_p: self.sweeps.delta_p_pu,
            compare_rows: self.compare_rows.into_iter().map(gain).collect(),
            simulate_gain: self.simulate_gain.map(gain),
        })
    }
}

/// Parses a scenario from JSON text. An empty document counts as `{}`.
pub fn parse_config(text: &str) -> Result<ScenarioConfig, ScenarioError> {
    let text = if text.trim().is_empty() { "{}" } else { text };
    let de = &mut serde_json::Deserializer::from_str(text);
    let raw: RawConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        ScenarioError::Config(if path == "." {
            inner.to_string()
        } else {
            format!("{path}: {inner}")
        })
    })?;
    raw.into_config().map_err(ScenarioError::Config)
}

pub fn load_config(path: &Path) -> Result<ScenarioConfig, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|e| ScenarioError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_config(&text).map_err(|e| match e {
        ScenarioError::Config(m) => ScenarioError::Config(format!("{}: {m}", path.display())),
        other => other,
    })
}
