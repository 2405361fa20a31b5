//! Command pipelines over the freq, statespace, reserve and alloc modules.

use super::{ScenarioConfig, ScenarioError};
use crate::alloc::{
    allocate_even, allocate_prop, evaluate_realization, injection_basis, solve_allocation, solve_allocation_robust,
    AllocationPlan, InjectionBasis, RealizationOutcome,
};
use crate::freq::{
    cumulative_energy, freq_response, metrics, pu_s_to_mwh, uniform_grid, ClosedForm, Disturbance, GridParams,
    VppGain,
};
use crate::reserve::{
    feasible_region, idle_ratio, line_flow_check, min_reserve, reserve_peak_baseline, BoundaryPoint, Constraint,
    FeasibleRegion, LineVerdict, ReserveDecision,
};
use crate::statespace::{fit_stability_surface, simulate, StabilityFit, SwitchedModel};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    MinReserve,
    Allocate,
    AllocateRobust,
    Region,
    Simulate,
    FitStability,
    SensitivityH0,
    SensitivityDp,
    CompareRegions,
}

impl Command {
    pub const ALL: [Command; 9] = [
        Command::MinReserve,
        Command::Allocate,
        Command::AllocateRobust,
        Command::Region,
        Command::Simulate,
        Command::FitStability,
        Command::SensitivityH0,
        Command::SensitivityDp,
        Command::CompareRegions,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Command::MinReserve => "min-reserve",
            Command::Allocate => "allocate",
            Command::AllocateRobust => "allocate-robust",
            Command::Region => "region",
            Command::Simulate => "simulate",
            Command::FitStability => "fit-stability",
            Command::SensitivityH0 => "sensitivity-h0",
            Command::SensitivityDp => "sensitivity-dp",
            Command::CompareRegions => "compare-regions",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Command {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Command::ALL.into_iter().find(|c| c.name() == s).ok_or_else(|| {
            let names: Vec<&str> = Command::ALL.iter().map(|c| c.name()).collect();
            format!("unknown command `{s}`, expected one of: {}", names.join(", "))
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionReport {
    pub h_min_rocof: f64,
    pub d_min_qss: f64,
    pub h_max: f64,
    pub d_max: f64,
    pub boundary: Vec<BoundaryPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionReport {
    pub h_vpp: f64,
    pub d_vpp: f64,
    pub res_min_mwh: f64,
    pub res_peak_mwh: f64,
    /// (ResPeak − ResMin)/ResPeak.
    pub idle_ratio: f64,
    pub peak_power_pu: f64,
    pub binding: Vec<Constraint>,
    pub fallback_used: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub label: String,
    pub h_vpp: f64,
    pub d_vpp: f64,
    pub rocof_hz_per_s: f64,
    pub nadir_hz: f64,
    pub t_nadir_s: f64,
    /// Quasi-steady-state deviation (Hz, negative for a deficit).
    pub qss_dev_hz: f64,
    pub settle_time_s: Option<f64>,
    pub energy_mwh: f64,
    pub in_region: Option<bool>,
    pub nadir_consistent: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileRow {
    pub t: f64,
    pub res_min: f64,
    pub res_peak: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityRow {
    pub sweep: String,
    pub value: f64,
    pub h_vpp: f64,
    pub d_vpp: f64,
    pub res_min_mwh: f64,
    pub res_peak_mwh: f64,
    pub gap_mwh: f64,
    pub idle_ratio: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulationSample {
    pub t: f64,
    pub delta_f_closed_form: f64,
    pub delta_f_simulated: f64,
    pub dp_vpp_simulated: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub h_vpp: f64,
    pub d_vpp: f64,
    pub step_s: f64,
    pub closed_form_nadir_hz: f64,
    pub simulated_nadir_hz: f64,
    pub closed_form_t_nadir_s: f64,
    pub simulated_t_nadir_s: f64,
    /// |simulated − closed-form| / |closed-form| for the nadir deviation.
    pub nadir_rel_error: f64,
    pub t_vpp_on_s: Option<f64>,
    pub t_sg_on_s: Option<f64>,
    pub swing_residual_pu: f64,
    pub max_abs_i_oq: f64,
    pub samples: Vec<SimulationSample>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub command: Command,
    pub scenario: String,
    pub fit: Option<StabilityFit>,
    pub region: Option<RegionReport>,
    pub decision: Option<DecisionReport>,
    pub metrics: Vec<MetricsRow>,
    pub reserve_profile: Vec<ProfileRow>,
    pub line_flows: Vec<LineVerdict>,
    pub line_flows_reconstructed: bool,
    pub allocations: Vec<AllocationPlan>,
    pub realization: Vec<RealizationOutcome>,
    pub cap_binds_at_peak: Option<bool>,
    pub sensitivity: Vec<SensitivityRow>,
    pub simulation: Option<SimulationReport>,
    pub warnings: Vec<String>,
}

impl RunReport {
    fn new(cfg: &ScenarioConfig, command: Command) -> Self {
        Self {
            command,
            scenario: cfg.name.clone(),
            fit: None,
            region: None,
            decision: None,
            metrics: Vec::new(),
            reserve_profile: Vec::new(),
            line_flows: Vec::new(),
            line_flows_reconstructed: cfg.network_reconstructed,
            allocations: Vec::new(),
            realization: Vec::new(),
            cap_binds_at_peak: None,
            sensitivity: Vec::new(),
            simulation: None,
            warnings: Vec::new(),
        }
    }

    pub fn allocation(&self, strategy: crate::alloc::Strategy) -> Option<&AllocationPlan> {
        self.allocations.iter().find(|p| p.strategy == strategy)
    }
}

pub fn run_case(cfg: &ScenarioConfig, command: Command) -> Result<RunReport, ScenarioError> {
    let mut report = RunReport::new(cfg, command);
    match command {
        Command::FitStability => {
            report.fit = Some(fit(cfg, &cfg.grid)?);
        }
        Command::Region => {
            let f = fit(cfg, &cfg.grid)?;
            let region = region(cfg, &cfg.grid, &cfg.disturbance, &f)?;
            report.region = Some(region_report(cfg, &region));
            report.fit = Some(f);
        }
        Command::CompareRegions => {
            let f = fit(cfg, &cfg.grid)?;
            let region = region(cfg, &cfg.grid, &cfg.disturbance, &f)?;
            for (k, gain) in cfg.compare_rows.iter().enumerate() {
                let label = format!("row{}", k + 1);
                report.metrics.push(metrics_row(cfg, &label, gain, Some(&region))?);
            }
            report.region = Some(region_report(cfg, &region));
            report.fit = Some(f);
        }
        Command::MinReserve | Command::Allocate | Command::AllocateRobust => {
            let (f, region, decision) = min_reserve_pipeline(cfg, &mut report)?;
            report.fit = Some(f);
            report.region = Some(region_report(cfg, &region));
            if command != Command::MinReserve {
                allocation_pipeline(cfg, &decision.gain, command == Command::AllocateRobust, &mut report)?;
            }
        }
        Command::Simulate => {
            let gain = match cfg.simulate_gain {
                Some(g) => g,
                None => {
                    let (f, region, decision) = min_reserve_pipeline(cfg, &mut report)?;
                    report.fit = Some(f);
                    report.region = Some(region_report(cfg, &region));
                    decision.gain
                }
            };
            if cfg.simulate_gain.is_some() {
                report.metrics.push(metrics_row(cfg, "simulated", &gain, None)?);
            }
            report.simulation = Some(simulation(cfg, &gain)?);
        }
        Command::SensitivityH0 => {
            let points: Vec<(GridParams, Disturbance)> = cfg
                .sweep_h0
                .iter()
                .map(|&h0| (GridParams { h0, ..cfg.grid }, cfg.disturbance))
                .collect();
            report.sensitivity = sweep(cfg, "h0", &cfg.sweep_h0, &points, None)?;
        }
        Command::SensitivityDp => {
            let d = cfg.disturbance;
            let points: Vec<(GridParams, Disturbance)> = cfg
                .sweep_delta_p
                .iter()
                .map(|&dp| (cfg.grid, Disturbance::from_components(d.p_g, d.p_v, d.p_g + d.p_v + dp)))
                .collect();
            let shared = fit(cfg, &cfg.grid)?;
            report.sensitivity = sweep(cfg, "delta_p", &cfg.sweep_delta_p, &points, Some(&shared))?;
        }
    }
    Ok(report)
}

fn fit(cfg: &ScenarioConfig, grid: &GridParams) -> Result<StabilityFit, ScenarioError> {
    fit_stability_surface(grid, &cfg.device, &cfg.disturbance, &cfg.solver.lattice, cfg.solver.weighting)
        .map_err(|e| ScenarioError::from_fit("fit-stability", e))
}

fn region(
    cfg: &ScenarioConfig,
    grid: &GridParams,
    dist: &Disturbance,
    f: &StabilityFit,
) -> Result<FeasibleRegion, ScenarioError> {
    feasible_region(grid, dist, &cfg.limits, f, cfg.caps).map_err(|e| ScenarioError::from_reserve("region", e))
}

fn region_report(cfg: &ScenarioConfig, region: &FeasibleRegion) -> RegionReport {
    RegionReport {
        h_min_rocof: region.h_min_rocof,
        d_min_qss: region.d_min_qss,
        h_max: region.h_max,
        d_max: region.d_max,
        boundary: region.boundary_samples(cfg.solver.boundary_samples),
    }
}

fn decide(
    cfg: &ScenarioConfig,
    region: &FeasibleRegion,
) -> Result<(ReserveDecision, ReserveDecision), ScenarioError> {
    let horizon = cfg.market.horizon;
    let decision =
        min_reserve(region, horizon, &cfg.solver.search).map_err(|e| ScenarioError::from_reserve("min-reserve", e))?;
    let peak = reserve_peak_baseline(&region.grid, &decision.gain, &region.dist, horizon, &cfg.solver.search)
        .map_err(|e| ScenarioError::from_reserve("reserve-peak", e))?;
    Ok((decision, peak))
}

fn min_reserve_pipeline(
    cfg: &ScenarioConfig,
    report: &mut RunReport,
) -> Result<(StabilityFit, FeasibleRegion, ReserveDecision), ScenarioError> {
    let f = fit(cfg, &cfg.grid)?;
    let region = region(cfg, &cfg.grid, &cfg.disturbance, &f)?;
    let (decision, peak) = decide(cfg, &region)?;
    if decision.fallback_used {
        report
            .warnings
            .push("two-stage search found no slice; lattice fallback used".into());
    }
    report.decision = Some(DecisionReport {
        h_vpp: decision.gain.h_vpp,
        d_vpp: decision.gain.d_vpp,
        res_min_mwh: decision.energy_mwh,
        res_peak_mwh: peak.energy_mwh,
        idle_ratio: idle_ratio(&decision, &peak),
        peak_power_pu: decision.peak_power,
        binding: decision.binding.clone(),
        fallback_used: decision.fallback_used,
    });
    report
        .metrics
        .push(metrics_row(cfg, "decision", &decision.gain, Some(&region))?);

    let cf = ClosedForm::new(&cfg.grid, &decision.gain, &cfg.disturbance)
        .map_err(|e| ScenarioError::from_freq("reserve-profile", e))?;
    report.reserve_profile = uniform_grid(cfg.market.horizon, cfg.solver.report_dt)
        .into_iter()
        .map(|t| ProfileRow {
            t,
            res_min: cf.vpp_power_total(t),
            res_peak: peak.peak_power,
        })
        .collect();

    report.line_flows = line_flow_check(&cfg.network, &decision.times, &decision.reserve_profile)
        .map_err(|e| ScenarioError::from_reserve("line-flow", e))?;
    for v in report.line_flows.iter().filter(|v| !v.within_limit) {
        report.warnings.push(format!(
            "line {} exceeds its limit {} (max flow {:.4})",
            v.id, v.limit, v.max_flow
        ));
    }
    Ok((f, region, decision))
}

fn metrics_row(
    cfg: &ScenarioConfig,
    label: &str,
    gain: &VppGain,
    region: Option<&FeasibleRegion>,
) -> Result<MetricsRow, ScenarioError> {
    let (grid, dist) = (&cfg.grid, &cfg.disturbance);
    let stage = "metrics";
    let times = uniform_grid(cfg.market.horizon, cfg.solver.search.profile_step);
    let traj = freq_response(grid, gain, dist, &times).map_err(|e| ScenarioError::from_freq(stage, e))?;
    let m = metrics(&traj, grid, gain, dist, cfg.limits.settle_band).map_err(|e| ScenarioError::from_freq(stage, e))?;
    let energy = cumulative_energy(grid, gain, dist, cfg.market.horizon)
        .map_err(|e| ScenarioError::from_freq(stage, e))?;
    Ok(MetricsRow {
        label: label.to_string(),
        h_vpp: gain.h_vpp,
        d_vpp: gain.d_vpp,
        rocof_hz_per_s: grid.to_hz(m.rocof_max.abs()),
        nadir_hz: grid.absolute_hz(m.nadir),
        t_nadir_s: m.t_nadir,
        qss_dev_hz: grid.to_hz(m.qss),
        settle_time_s: m.settle_time,
        energy_mwh: pu_s_to_mwh(energy.quadrature, cfg.market.base_mva),
        in_region: region.map(|r| r.contains(gain)),
        nadir_consistent: m.nadir_consistent,
    })
}

fn allocation_pipeline(
    cfg: &ScenarioConfig,
    target: &VppGain,
    robust: bool,
    report: &mut RunReport,
) -> Result<(), ScenarioError> {
    let stage = "allocation";
    let basis: InjectionBasis = injection_basis(
        &cfg.grid,
        target,
        &cfg.disturbance,
        cfg.market.horizon,
        cfg.solver.alloc_dt,
    )
    .map_err(|e| ScenarioError::from_alloc(stage, e))?;
    let (ibrs, market) = (&cfg.ibrs, &cfg.market);
    let opt = solve_allocation(&basis, ibrs, market, target, cfg.solver.formulation)
        .map_err(|e| ScenarioError::from_alloc(stage, e))?;
    let even = allocate_even(&basis, ibrs, market, target).map_err(|e| ScenarioError::from_alloc(stage, e))?;
    let prop = allocate_prop(&basis, ibrs, market, target).map_err(|e| ScenarioError::from_alloc(stage, e))?;

    let agg = opt.aggregate_profile(&basis);
    let k_peak = agg
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(k, _)| k)
        .unwrap_or(0);
    let binds = (0..ibrs.n_ibr()).any(|i| {
        let p = basis.power(opt.h_i[i], opt.d_i[i], k_peak);
        (p - ibrs.p_rated[i]).abs() <= 1e-7 * ibrs.p_rated[i].max(1.0) || p.abs() <= 1e-7
    });
    report.cap_binds_at_peak = Some(binds);
    if !binds {
        report
            .warnings
            .push(format!("no IBR power bound binds at the peak instant t={}", basis.times[k_peak]));
    }
    for plan in [&even, &prop] {
        if plan.clamped {
            report
                .warnings
                .push(format!("{} was clamped into the gain boxes", plan.strategy.label()));
        }
        if !plan.violations.is_empty() {
            report.warnings.push(format!(
                "{} violates {} power or box constraints",
                plan.strategy.label(),
                plan.violations.len()
            ));
        }
    }
    report.allocations = vec![opt, even, prop];

    if robust {
        let rob = solve_allocation_robust(&basis, ibrs, market, target, cfg.solver.formulation)
            .map_err(|e| ScenarioError::from_alloc("allocate-robust", e))?;
        report.allocations.push(rob);
        if !cfg.realization.is_empty() {
            for plan in [&report.allocations[0], &report.allocations[3]] {
                let out = evaluate_realization(plan, &basis, ibrs, market, &cfg.realization)
                    .map_err(|e| ScenarioError::from_alloc("allocate-robust", e))?;
                report.realization.push(out);
            }
        }
    }
    Ok(())
}

fn simulation(cfg: &ScenarioConfig, gain: &VppGain) -> Result<SimulationReport, ScenarioError> {
    let stage = "simulate";
    let sw = SwitchedModel::new(&cfg.grid, &cfg.device, gain, &cfg.disturbance);
    let x0 = sw.equilibrium().map_err(|e| ScenarioError::from_sim(stage, e))?;
    let traj = simulate(&sw, &x0, cfg.market.horizon, cfg.solver.sim_dt).map_err(|e| ScenarioError::from_sim(stage, e))?;
    let cf = ClosedForm::new(&cfg.grid, gain, &cfg.disturbance).map_err(|e| ScenarioError::from_freq(stage, e))?;
    let t_cf = cf.nadir_time().map_err(|e| ScenarioError::from_freq(stage, e))?;
    let nadir_cf = cf.second_branch(t_cf);
    let (t_sim, nadir_sim) = traj.nadir();
    let every = ((cfg.solver.report_dt / cfg.solver.sim_dt).round() as usize).max(1);
    let f_sim = traj.delta_f_grid();
    let p_sim = traj.dp_vpp(cfg.device.i0_v);
    let samples = (0..traj.times.len())
        .step_by(every)
        .map(|k| SimulationSample {
            t: traj.times[k],
            delta_f_closed_form: cf.delta_f(traj.times[k]),
            delta_f_simulated: f_sim[k],
            dp_vpp_simulated: p_sim[k],
        })
        .collect();
    Ok(SimulationReport {
        h_vpp: gain.h_vpp,
        d_vpp: gain.d_vpp,
        step_s: cfg.solver.sim_dt,
        closed_form_nadir_hz: cfg.grid.absolute_hz(nadir_cf),
        simulated_nadir_hz: cfg.grid.absolute_hz(nadir_sim),
        closed_form_t_nadir_s: t_cf,
        simulated_t_nadir_s: t_sim,
        nadir_rel_error: ((nadir_sim - nadir_cf) / nadir_cf).abs(),
        t_vpp_on_s: traj.t_vpp_on,
        t_sg_on_s: traj.t_sg_on,
        swing_residual_pu: traj.swing_residual(&sw),
        max_abs_i_oq: traj
            .column(crate::statespace::model::I_OQ)
            .iter()
            .fold(0.0_f64, |m, v| m.max(v.abs())),
        samples,
    })
}

fn sweep_point(
    cfg: &ScenarioConfig,
    sweep: &str,
    value: f64,
    grid: &GridParams,
    dist: &Disturbance,
    shared_fit: Option<&StabilityFit>,
) -> Result<SensitivityRow, ScenarioError> {
    let f = match shared_fit {
        Some(f) => f.clone(),
        None => fit(cfg, grid)?,
    };
    let region = region(cfg, grid, dist, &f)?;
    let (decision, peak) = decide(cfg, &region)?;
    Ok(SensitivityRow {
        sweep: sweep.to_string(),
        value,
        h_vpp: decision.gain.h_vpp,
        d_vpp: decision.gain.d_vpp,
        res_min_mwh: decision.energy_mwh,
        res_peak_mwh: peak.energy_mwh,
        gap_mwh: peak.energy_mwh - decision.energy_mwh,
        idle_ratio: idle_ratio(&decision, &peak),
    })
}

fn sweep(
    cfg: &ScenarioConfig,
    name: &str,
    values: &[f64],
    points: &[(GridParams, Disturbance)],
    shared_fit: Option<&StabilityFit>,
) -> Result<Vec<SensitivityRow>, ScenarioError> {
    std::thread::scope(|s| {
        let handles: Vec<_> = values
            .iter()
            .zip(points)
            .map(|(&v, (grid, dist))| s.spawn(move || sweep_point(cfg, name, v, grid, dist, shared_fit)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("sweep worker panicked"))
            .collect()
    })
}
