//! Feasible region of VPP gains under the grid safety limits and the
//! stability-margin surface, the two-stage minimal reserve decision, the
//! peak-based baseline, and PTDF line-flow screening.

use crate::freq::{energy_of, ClosedForm, Disturbance, GridParams, SafetyLimits, VppGain};
use crate::statespace::StabilityFit;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReserveError {
    #[error("feasible region is empty")]
    EmptyRegion,
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("sample grids differ: {times} times vs {values} values")]
    GridMismatch { times: usize, values: usize },
}

/// The individual membership conditions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Constraint {
    Rocof,
    Nadir,
    Qss,
    Decay,
    Cap,
    Overdamped,
}

impl Constraint {
    pub fn id(&self) -> &'static str {
        match self {
            Constraint::Rocof => "rocof",
            Constraint::Nadir => "nadir",
            Constraint::Qss => "qss",
            Constraint::Decay => "decay",
            Constraint::Cap => "cap",
            Constraint::Overdamped => "overdamped",
        }
    }
}

/// Feasible H_VPP values on one D_VPP slice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Slice {
    pub d: f64,
    pub h_lo: f64,
    pub h_hi: f64,
}

/// One point of a constraint boundary curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryPoint {
    pub h: f64,
    pub d: f64,
    pub constraint: Constraint,
}

/// Bisection tolerance on each axis.
pub const BISECTION_TOL: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibleRegion {
    pub grid: GridParams,
    pub dist: Disturbance,
    pub limits: SafetyLimits,
    /// Coefficients of the stability-margin surface.
    pub fit: [f64; 4],
    /// H_VPP ≥ h_min_rocof.
    pub h_min_rocof: f64,
    /// D_VPP ≥ d_min_qss.
    pub d_min_qss: f64,
    pub h_max: f64,
    pub d_max: f64,
    /// Sampled nadir boundary (smallest H meeting the nadir limit per D).
    pub nadir_boundary: Vec<(f64, f64)>,
    /// Sampled equality curve of the decay-rate surface.
    pub decay_boundary: Vec<(f64, f64)>,
}

const BOUNDARY_SAMPLES: usize = 101;

pub fn feasible_region(
    grid: &GridParams,
    dist: &Disturbance,
    limits: &SafetyLimits,
    fit: &StabilityFit,
    caps: (f64, f64),
) -> Result<FeasibleRegion, ReserveError> {
    grid.validate().map_err(|e| ReserveError::Invalid(e.to_string()))?;
    limits.validate().map_err(|e| ReserveError::Invalid(e.to_string()))?;
    if !(caps.0 >= 0.0 && caps.1 >= 0.0) {
        return Err(ReserveError::Invalid(format!("caps must be non-negative, got {caps:?}")));
    }
    if !(limits.qss_lim > grid.f_db1) {
        return Err(ReserveError::Invalid("qss limit must exceed the VPP dead band".into()));
    }
    let (r, d0) = (grid.r_droop, grid.d0);
    let h_min_rocof = dist.delta_p / (2.0 * limits.rocof_lim) - grid.h0;
    let d_min_qss =
        (dist.delta_p + r * grid.f_db2 - limits.qss_lim * (d0 + r)) / (limits.qss_lim - grid.f_db1);
    let mut region = FeasibleRegion {
        grid: *grid,
        dist: *dist,
        limits: *limits,
        fit: fit.coefficients(),
        h_min_rocof,
        d_min_qss,
        h_max: caps.0,
        d_max: caps.1,
        nadir_boundary: Vec::new(),
        decay_boundary: Vec::new(),
    };
    let ds: Vec<f64> = (0..BOUNDARY_SAMPLES)
        .map(|i| caps.1 * i as f64 / (BOUNDARY_SAMPLES - 1) as f64)
        .collect();
    region.nadir_boundary = ds
        .iter()
        .filter_map(|&d| region.nadir_h_bound(d).map(|h| (h, d)))
        .collect();
    region.decay_boundary = ds
        .iter()
        .filter_map(|&d| region.decay_h_bound(d).map(|(h, _)| (h, d)))
        .filter(|(h, _)| (0.0..=caps.0).contains(h))
        .collect();
    Ok(region)
}

impl FeasibleRegion {
    pub fn decay_margin(&self, h: f64, d: f64) -> f64 {
        let b = &self.fit;
        b[0] + b[1] * h + b[2] * d + b[3] * h * d
    }

    fn nadir_ok(&self, h: f64, d: f64) -> bool {
        match ClosedForm::new(&self.grid, &VppGain::new(h, d), &self.dist) {
            Ok(cf) => match cf.nadir_time() {
                Ok(tn) => cf.second_branch(tn) >= -self.limits.nadir_lim,
                Err(_) => false,
            },
            Err(_) => false,
        }
    }

    fn underdamped(&self, h: f64, d: f64) -> bool {
        crate::freq::second_order_char(&self.grid, &VppGain::new(h, d)).is_ok()
    }

    /// Every condition violated at (h, d).
    pub fn violations(&self, gain: &VppGain) -> Vec<Constraint> {
        let (h, d) = (gain.h_vpp, gain.d_vpp);
        let mut v = Vec::new();
        if !(0.0..=self.h_max).contains(&h) || !(0.0..=self.d_max).contains(&d) {
            v.push(Constraint::Cap);
        }
        if h < self.h_min_rocof {
            v.push(Constraint::Rocof);
        }
        if d < self.d_min_qss {
            v.push(Constraint::Qss);
        }
        if self.decay_margin(h, d) > self.limits.sigma {
            v.push(Constraint::Decay);
        }
        if !self.underdamped(h, d) {
            v.push(Constraint::Overdamped);
        } else if !self.nadir_ok(h, d) {
            v.push(Constraint::Nadir);
        }
        v
    }

    pub fn contains(&self, gain: &VppGain) -> bool {
        self.violations(gain).is_empty()
    }

    /// Decay-surface bound on H at fixed D, with `true` for an upper bound.
    fn decay_h_bound(&self, d: f64) -> Option<(f64, bool)> {
        let b = &self.fit;
        let k = b[1] + b[3] * d;
        if k == 0.0 {
            return None;
        }
        let h = (self.limits.sigma - b[0] - b[2] * d) / k;
        Some((h, k > 0.0))
    }

    /// Range of H_VPP over which the response stays oscillatory at this D.
    fn underdamped_h_range(&self, d: f64) -> Option<(f64, f64)> {
        let (r, t) = (self.grid.r_droop, self.grid.t_sg);
        let dt = self.grid.d0 + d;
        // ζ = 1  <=>  4H² + (4DT − 8T(R+D))·H + D²T² = 0 in total inertia H.
        let b = 4.0 * dt * t - 8.0 * t * (r + dt);
        let c = dt * dt * t * t;
        let disc = b * b - 16.0 * c;
        if disc <= 0.0 {
            return None;
        }
        let sq = disc.sqrt();
        let lo = (-b - sq) / 8.0 - self.grid.h0;
        let hi = (-b + sq) / 8.0 - self.grid.h0;
        Some((lo, hi))
    }

    /// Smallest H_VPP on [0, h_max] meeting the nadir limit at this D.
    pub fn nadir_h_bound(&self, d: f64) -> Option<f64> {
        let (lo, hi) = self.underdamped_h_range(d)?;
        let lo = lo.max(0.0) + 1e-9;
        let hi = hi.min(self.h_max);
        if lo > hi {
            return None;
        }
        self.bisect_lower(d, lo, hi)
    }

    fn bisect_lower(&self, d: f64, lo: f64, hi: f64) -> Option<f64> {
        if self.nadir_ok(lo, d) {
            return Some(lo);
        }
        if !self.nadir_ok(hi, d) {
            return None;
        }
        let (mut bad, mut good) = (lo, hi);
        while good - bad > BISECTION_TOL * 1e-2 {
            let mid = 0.5 * (bad + good);
            if self.nadir_ok(mid, d) {
                good = mid;
            } else {
                bad = mid;
            }
        }
        Some(good)
    }

    /// Feasible H interval at fixed D, if any.
    pub fn slice(&self, d: f64) -> Option<Slice> {
        if !(0.0..=self.d_max).contains(&d) || d < self.d_min_qss {
            return None;
        }
        let (od_lo, od_hi) = self.underdamped_h_range(d)?;
        let mut lo = self.h_min_rocof.max(0.0).max(od_lo + 1e-9);
        let mut hi = self.h_max.min(od_hi - 1e-9);
        match self.decay_h_bound(d) {
            Some((h, true)) => hi = hi.min(h),
            Some((h, false)) => lo = lo.max(h),
            None => {
                if self.decay_margin(0.0, d) > self.limits.sigma {
                    return None;
                }
            }
        }
        if lo > hi {
            return None;
        }
        let h_lo = self.bisect_lower(d, lo, hi)?;
        let slice = Slice { d, h_lo, h_hi: hi };
        self.contains(&VppGain::new(h_lo, d)).then_some(slice)
    }

    /// Conditions within `tol` (relative) of their boundary at this gain.
    pub fn binding(&self, gain: &VppGain, tol: f64) -> Vec<Constraint> {
        let (h, d) = (gain.h_vpp, gain.d_vpp);
        let near = |a: f64, b: f64| (a - b).abs() <= tol * b.abs().max(1.0);
        let mut out = Vec::new();
        if near(h, self.h_min_rocof) {
            out.push(Constraint::Rocof);
        }
        if let Ok(cf) = ClosedForm::new(&self.grid, gain, &self.dist) {
            if let Ok(tn) = cf.nadir_time() {
                let nadir = cf.second_branch(tn);
                if (nadir + self.limits.nadir_lim).abs() <= tol * self.limits.nadir_lim {
                    out.push(Constraint::Nadir);
                }
            }
        }
        if near(d, self.d_min_qss) {
            out.push(Constraint::Qss);
        }
        if (self.decay_margin(h, d) - self.limits.sigma).abs() <= tol * self.limits.sigma.abs() {
            out.push(Constraint::Decay);
        }
        if near(h, self.h_max) || near(d, self.d_max) {
            out.push(Constraint::Cap);
        }
        out
    }

    /// Boundary curves of every constraint on `n` D samples, for plotting.
    pub fn boundary_samples(&self, n: usize) -> Vec<BoundaryPoint> {
        let n = n.max(2);
        let ds: Vec<f64> = (0..n).map(|i| self.d_max * i as f64 / (n - 1) as f64).collect();
        let hs: Vec<f64> = (0..n).map(|i| self.h_max * i as f64 / (n - 1) as f64).collect();
        let mut out = Vec::new();
        let in_h = |h: f64| (0.0..=self.h_max).contains(&h);
        let in_d = |d: f64| (0.0..=self.d_max).contains(&d);
        if in_h(self.h_min_rocof) {
            out.extend(ds.iter().map(|&d| BoundaryPoint {
                h: self.h_min_rocof,
                d,
                constraint: Constraint::Rocof,
            }));
        }
        if in_d(self.d_min_qss) {
            out.extend(hs.iter().map(|&h| BoundaryPoint {
                h,
                d: self.d_min_qss,
                constraint: Constraint::Qss,
            }));
        }
        for &d in &ds {
            if let Some(h) = self.nadir_h_bound(d) {
                out.push(BoundaryPoint {
                    h,
                    d,
                    constraint: Constraint::Nadir,
                });
            }
            if let Some((h, _)) = self.decay_h_bound(d) {
                if in_h(h) {
                    out.push(BoundaryPoint {
                        h,
                        d,
                        constraint: Constraint::Decay,
                    });
                }
            }
            if let Some((lo, hi)) = self.underdamped_h_range(d) {
                for h in [lo, hi] {
                    if in_h(h) {
                        out.push(BoundaryPoint {
                            h,
                            d,
                            constraint: Constraint::Overdamped,
                        });
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReserveDecision {
    pub gain: VppGain,
    /// Cumulative reserve energy over the horizon (p.u.·s).
    pub energy: f64,
    pub energy_mwh: f64,
    /// Maximum of the injection profile (p.u.).
    pub peak_power: f64,
    pub times: Vec<f64>,
    pub reserve_profile: Vec<f64>,
    /// Conditions active at the decision.
    pub binding: Vec<Constraint>,
    /// True when the two-stage search had to fall back to a lattice search.
    pub fallback_used: bool,
}

/// Knobs of the two-stage search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchOptions {
    /// Number of D samples scanned in stage 1.
    pub d_scan: usize,
    /// Number of H samples compared in stage 2.
    pub h_scan: usize,
    /// Step of the reported reserve profile (s).
    pub profile_step: f64,
    /// Lattice size of the fallback search.
    pub fallback_lattice: usize,
    pub base_mva: f64,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self {
            d_scan: 300,
            h_scan: 50,
            profile_step: 0.01,
            fallback_lattice: 200,
            base_mva: 1000.0,
        }
    }
}

const ENERGY_TIE_TOL: f64 = 1e-12;

fn build_decision(
    region: &FeasibleRegion,
    gain: VppGain,
    horizon: f64,
    opts: &SearchOptions,
    fallback_used: bool,
) -> Result<ReserveDecision, ReserveError> {
    let cf = ClosedForm::new(&region.grid, &gain, &region.dist).map_err(|e| ReserveError::Invalid(e.to_string()))?;
    let times = crate::freq::uniform_grid(horizon, opts.profile_step);
    let reserve_profile: Vec<f64> = times.iter().map(|&t| cf.vpp_power_total(t)).collect();
    let peak_power = reserve_profile.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let energy = energy_of(&cf, horizon).quadrature;
    Ok(ReserveDecision {
        gain,
        energy,
        energy_mwh: crate::freq::pu_s_to_mwh(energy, opts.base_mva),
        peak_power,
        times,
        reserve_profile,
        binding: region.binding(&gain, 1e-3),
        fallback_used,
    })
}

/// Stage 1: smallest D_VPP with a non-empty slice.
pub fn min_feasible_d(region: &FeasibleRegion, scan: usize) -> Option<Slice> {
    let d_start = region.d_min_qss.max(0.0);
    if d_start > region.d_max {
        return None;
    }
    if let Some(s) = region.slice(d_start) {
        return Some(s);
    }
    let n = scan.max(2);
    let step = (region.d_max - d_start) / n as f64;
    let mut prev = d_start;
    for i in 1..=n {
        let d = d_start + step * i as f64;
        if let Some(found) = region.slice(d) {
            let (mut bad, mut good, mut best) = (prev, d, found);
            while good - bad > BISECTION_TOL {
                let mid = 0.5 * (bad + good);
                match region.slice(mid) {
                    Some(s) => {
                        good = mid;
                        best = s;
                    }
                    None => bad = mid,
                }
            }
            return Some(best);
        }
        prev = d;
    }
    None
}

/// Stage 2: energy-minimising H on a slice, ties broken toward smaller H.
pub fn min_energy_h(region: &FeasibleRegion, slice: &Slice, horizon: f64, scan: usize) -> Option<f64> {
    let n = scan.max(1);
    let energy = |h: f64| {
        ClosedForm::new(&region.grid, &VppGain::new(h, slice.d), &region.dist)
            .ok()
            .map(|cf| cf.energy_exact(horizon))
    };
    let mut best: Option<(f64, f64)> = None;
    for i in 0..=n {
        let h = slice.h_lo + (slice.h_hi - slice.h_lo) * i as f64 / n as f64;
        if !region.contains(&VppGain::new(h, slice.d)) {
            continue;
        }
        if let Some(e) = energy(h) {
            if best.map_or(true, |(_, be)| e < be - ENERGY_TIE_TOL) {
                best = Some((h, e));
            }
        }
    }
    best.map(|(h, _)| h)
}

pub fn min_reserve(region: &FeasibleRegion, horizon: f64, opts: &SearchOptions) -> Result<ReserveDecision, ReserveError> {
    if !(horizon > 0.0) {
        return Err(ReserveError::Invalid(format!("horizon must be positive, got {horizon}")));
    }
    let slice = min_feasible_d(region, opts.d_scan);
    let h = slice.and_then(|s| min_energy_h(region, &s, horizon, opts.h_scan));
    match (slice, h) {
        (Some(s), Some(h)) => build_decision(region, VppGain::new(h, s.d), horizon, opts, false),
        _ => {
            let (gain, _) = lattice_search(region, opts.fallback_lattice, horizon).ok_or(ReserveError::EmptyRegion)?;
            build_decision(region, gain, horizon, opts, true)
        }
    }
}

/// Joint lattice minimisation of reserve energy over the region.
pub fn lattice_search(region: &FeasibleRegion, n: usize, horizon: f64) -> Option<(VppGain, f64)> {
    let n = n.max(2);
    let mut best: Option<(VppGain, f64)> = None;
    for i in 0..n {
        let d = region.d_max * i as f64 / (n - 1) as f64;
        for j in 0..n {
            let h = region.h_max * j as f64 / (n - 1) as f64;
            let gain = VppGain::new(h, d);
            if !region.contains(&gain) {
                continue;
            }
            let Ok(cf) = ClosedForm::new(&region.grid, &gain, &region.dist) else {
                continue;
            };
            let e = cf.energy_exact(horizon);
            if best.map_or(true, |(_, be)| e < be) {
                best = Some((gain, e));
            }
        }
    }
    best
}

/// Reserve held constant at the peak injection for the whole horizon.
pub fn reserve_peak_baseline(
    grid: &GridParams,
    gain: &VppGain,
    dist: &Disturbance,
    horizon: f64,
    opts: &SearchOptions,
) -> Result<ReserveDecision, ReserveError> {
    let cf = ClosedForm::new(grid, gain, dist).map_err(|e| ReserveError::Invalid(e.to_string()))?;
    let times = crate::freq::uniform_grid(horizon, opts.profile_step);
    let peak = times
        .iter()
        .map(|&t| cf.vpp_power_total(t))
        .fold(f64::NEG_INFINITY, f64::max);
    let energy = peak * horizon;
    Ok(ReserveDecision {
        gain: *gain,
        energy,
        energy_mwh: crate::freq::pu_s_to_mwh(energy, opts.base_mva),
        peak_power: peak,
        reserve_profile: vec![peak; times.len()],
        times,
        binding: Vec::new(),
        fallback_used: false,
    })
}

/// Share of the peak-based reserve that the time-varying profile never uses.
pub fn idle_ratio(res_min: &ReserveDecision, res_peak: &ReserveDecision) -> f64 {
    (res_peak.energy - res_min.energy) / res_peak.energy
}

/// One transmission line with its distribution factors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PtdfLine {
    pub id: String,
    /// Flow limit (p.u.).
    pub limit: f64,
    pub s_vpp: f64,
    /// Factors of each SG bus.
    pub s_g: Vec<f64>,
    /// Factors of each load bus.
    pub s_d: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PtdfNetwork {
    pub lines: Vec<PtdfLine>,
    pub sg_outputs: Vec<f64>,
    pub loads: Vec<f64>,
}

impl PtdfNetwork {
    pub fn validate(&self) -> Result<(), ReserveError> {
        for l in &self.lines {
            if !(l.limit > 0.0) {
                return Err(ReserveError::Invalid(format!("line {} has non-positive limit", l.id)));
            }
            if l.s_g.len() != self.sg_outputs.len() || l.s_d.len() != self.loads.len() {
                return Err(ReserveError::Invalid(format!(
                    "line {} factor counts do not match SG/load counts",
                    l.id
                )));
            }
            let all = std::iter::once(&l.s_vpp).chain(&l.s_g).chain(&l.s_d);
            if all.into_iter().any(|s| s.abs() > 1.0) {
                return Err(ReserveError::Invalid(format!("line {} has a |PTDF| above 1", l.id)));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineVerdict {
    pub id: String,
    pub max_flow: f64,
    pub limit: f64,
    pub within_limit: bool,
    pub first_violation: Option<f64>,
}

pub fn line_flow_check(net: &PtdfNetwork, times: &[f64], dp_vpp: &[f64]) -> Result<Vec<LineVerdict>, ReserveError> {
    if times.len() != dp_vpp.len() {
        return Err(ReserveError::GridMismatch {
            times: times.len(),
            values: dp_vpp.len(),
        });
    }
    net.validate()?;
    Ok(net
        .lines
        .iter()
        .map(|line| {
            let static_flow: f64 = line.s_g.iter().zip(&net.sg_outputs).map(|(s, p)| s * p).sum::<f64>()
                - line.s_d.iter().zip(&net.loads).map(|(s, l)| s * l).sum::<f64>();
            let mut max_flow: f64 = 0.0;
            let mut first_violation = None;
            for (&t, &p) in times.iter().zip(dp_vpp) {
                let flow = (line.s_vpp * p + static_flow).abs();
                max_flow = max_flow.max(flow);
                if flow > line.limit && first_violation.is_none() {
                    first_violation = Some(t);
                }
            }
            LineVerdict {
                id: line.id.clone(),
                max_flow,
                limit: line.limit,
                within_limit: first_violation.is_none(),
                first_violation,
            }
        })
        .collect())
}
