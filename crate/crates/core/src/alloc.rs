//! Allocation of the VPP-level virtual inertia and damping across
//! inverter-based resources (IBRs) by linear programming, with even and
//! capacity-proportional baselines, a worst-case robust variant, and the
//! punishment for undelivered support.

use crate::freq::{ClosedForm, Disturbance, FreqError, GridParams, VppGain};
use crate::lp::{Certificate, LinearProgram, LpError, Relation};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AllocError {
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("allocation is infeasible: {0}")]
    Infeasible(String),
    #[error(transparent)]
    Freq(#[from] FreqError),
    #[error("linear program failed: {0}")]
    Lp(LpError),
}

impl From<LpError> for AllocError {
    fn from(e: LpError) -> Self {
        match e {
            LpError::Infeasible { residual } => {
                AllocError::Infeasible(format!("no plan meets every power cap (phase-one residual {residual:.3e})"))
            }
            other => AllocError::Lp(other),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IbrParams {
    /// Injection cost of each IBR ($/MWh).
    pub c_r: Vec<f64>,
    /// Power cap of each IBR (p.u.).
    pub p_rated: Vec<f64>,
    pub h_bounds: Vec<(f64, f64)>,
    pub d_bounds: Vec<(f64, f64)>,
    /// Symmetric capacity fluctuation fraction of each IBR.
    pub fluctuation: Vec<f64>,
}

impl IbrParams {
    pub fn n_ibr(&self) -> usize {
        self.c_r.len()
    }

    pub fn validate(&self) -> Result<(), AllocError> {
        let n = self.n_ibr();
        if n == 0 {
            return Err(AllocError::Invalid("at least one IBR is required".into()));
        }
        let lens = [
            ("p_rated", self.p_rated.len()),
            ("h_bounds", self.h_bounds.len()),
            ("d_bounds", self.d_bounds.len()),
            ("fluctuation", self.fluctuation.len()),
        ];
        for (name, len) in lens {
            if len != n {
                return Err(AllocError::Invalid(format!("{name} has {len} entries, expected {n}")));
            }
        }
        for i in 0..n {
            let (hl, hu) = self.h_bounds[i];
            let (dl, du) = self.d_bounds[i];
            if !(0.0 <= hl && hl <= hu && 0.0 <= dl && dl <= du) {
                return Err(AllocError::Invalid(format!("bounds of IBR {} are not ordered", i + 1)));
            }
            if !(0.0..1.0).contains(&self.fluctuation[i]) {
                return Err(AllocError::Invalid(format!("fluctuation of IBR {} must lie in [0, 1)", i + 1)));
            }
            if !(self.c_r[i] >= 0.0) || !(self.p_rated[i] > 0.0) {
                return Err(AllocError::Invalid(format!(
                    "IBR {} needs a non-negative cost and a positive cap",
                    i + 1
                )));
            }
        }
        Ok(())
    }

    /// The same fleet with every cap shrunk to its worst case.
    pub fn worst_case(&self) -> IbrParams {
        IbrParams {
            p_rated: self.p_rated.iter().zip(&self.fluctuation).map(|(p, d)| p * (1.0 - d)).collect(),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PunishmentMode {
    /// Only undelivered support is charged.
    Shortfall,
    /// Any deviation from the required profile is charged.
    Absolute,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarketParams {
    /// Reserve compensation ($/MWh).
    pub c_f: f64,
    /// Penalty for unsatisfied support ($/MWh).
    pub c_p: f64,
    /// Horizon (s).
    pub horizon: f64,
    pub base_mva: f64,
    pub punishment_mode: PunishmentMode,
}

impl MarketParams {
    pub fn validate(&self) -> Result<(), AllocError> {
        if !(self.c_f >= 0.0 && self.c_p >= self.c_f) {
            return Err(AllocError::Invalid("need c_p >= c_f >= 0".into()));
        }
        if !(self.horizon > 0.0 && self.base_mva > 0.0) {
            return Err(AllocError::Invalid("horizon and base power must be positive".into()));
        }
        Ok(())
    }

    /// Dollars per (p.u.·s) at a price in $/MWh.
    pub fn dollars(&self, price: f64, energy_pu_s: f64) -> f64 {
        price * energy_pu_s * self.base_mva / 3600.0
    }
}

/// Coefficients with ΔP_IBR,i(t) = (k_d + β(t))·D_i + α(t)·H_i.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InjectionBasis {
    pub k_d: f64,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub times: Vec<f64>,
    /// Weight of every sample in energy sums (s).
    pub dt: f64,
}

impl InjectionBasis {
    pub fn power(&self, h: f64, d: f64, k: usize) -> f64 {
        (self.k_d + self.beta[k]) * d + self.alpha[k] * h
    }

    pub fn profile(&self, h: f64, d: f64) -> Vec<f64> {
        (0..self.times.len()).map(|k| self.power(h, d, k)).collect()
    }

    /// Σ_t α(t)·Δt and Σ_t (k_d + β(t))·Δt.
    pub fn energy_weights(&self) -> (f64, f64) {
        let wa = self.alpha.iter().sum::<f64>() * self.dt;
        let wd = self.beta.iter().map(|b| self.k_d + b).sum::<f64>() * self.dt;
        (wa, wd)
    }

    pub fn energy(&self, h: f64, d: f64) -> f64 {
        let (wa, wd) = self.energy_weights();
        wa * h + wd * d
    }
}

/// Basis on the uniform grid 0, Δt, ..., horizon (both ends included).
pub fn injection_basis(
    grid: &GridParams,
    gain_vpp: &VppGain,
    dist: &Disturbance,
    horizon: f64,
    dt: f64,
) -> Result<InjectionBasis, AllocError> {
    if !(dt > 0.0 && horizon > 0.0) {
        return Err(AllocError::Invalid(format!("need positive horizon and step, got {horizon}, {dt}")));
    }
    let cf = ClosedForm::new(grid, gain_vpp, dist)?;
    let times = crate::freq::uniform_grid(horizon, dt);
    let ch = cf.ch;
    let (h, t_sg) = (ch.h_total, grid.t_sg);
    let (p1, p2) = (cf.dp1, cf.dp2);
    let (sg, wd, wn2) = (ch.decay(), ch.omega_d, ch.omega_n * ch.omega_n);
    let two_ht = 2.0 * h * t_sg;
    let k_d = ((p1 + p2) / wn2 - two_ht * grid.f_db1) / two_ht;
    let mut alpha = Vec::with_capacity(times.len());
    let mut beta = Vec::with_capacity(times.len());
    for &t in &times {
        let e = (-sg * t).exp();
        let (s, c) = (wd * t).sin_cos();
        alpha.push(e * s / (h * wd) * ((p1 + p2) / t_sg - sg * p1) + e * c / h * p1);
        beta.push(
            -e * c * (p1 + p2) / (two_ht * wn2)
                + e * s / (2.0 * h * wd) * (p1 - ch.zeta * (p1 + p2) / (t_sg * ch.omega_n)),
        );
    }
    Ok(InjectionBasis {
        k_d,
        alpha,
        beta,
        times,
        dt,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Opt,
    Even,
    Prop,
    Robust,
}

impl Strategy {
    pub fn label(&self) -> &'static str {
        match self {
            Strategy::Opt => "AllocOpt",
            Strategy::Even => "AllocEven",
            Strategy::Prop => "AllocProp",
            Strategy::Robust => "AllocRobust",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Formulation {
    /// One pair of power rows per IBR and sample.
    Full,
    /// Rows only at the convex-hull vertices of the sampled (α, k_d + β).
    Reduced,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationPlan {
    pub strategy: Strategy,
    pub h_i: Vec<f64>,
    pub d_i: Vec<f64>,
    /// Reserve revenue c_F·energy ($).
    pub f_res: f64,
    /// Injection cost, negative ($).
    pub f_cost: f64,
    /// Punishment, zero or negative ($).
    pub f_pun: f64,
    /// f_res + f_cost + f_pun ($).
    pub objective: f64,
    /// Σ_t ΔP_IBR,i(t)·Δt per IBR (p.u.·s).
    pub per_ibr_energy: Vec<f64>,
    /// (c_F − c_i)·energy_i per IBR ($).
    pub per_ibr_profit: Vec<f64>,
    /// Constraints active at the plan.
    pub binding: Vec<String>,
    /// Power-cap or box violations of a plan that does not enforce them.
    pub violations: Vec<String>,
    /// True when a baseline had to be clamped into the boxes.
    pub clamped: bool,
    pub certificate: Option<Certificate>,
}

impl AllocationPlan {
    /// Σ_i ΔP_IBR,i(t) on the basis samples.
    pub fn aggregate_profile(&self, basis: &InjectionBasis) -> Vec<f64> {
        (0..basis.times.len())
            .map(|k| self.h_i.iter().zip(&self.d_i).map(|(&h, &d)| basis.power(h, d, k)).sum())
            .collect()
    }

    pub fn ibr_profile(&self, basis: &InjectionBasis, i: usize) -> Vec<f64> {
        basis.profile(self.h_i[i], self.d_i[i])
    }
}

const BIND_TOL: f64 = 1e-7;

fn evaluate_plan(
    strategy: Strategy,
    h_i: Vec<f64>,
    d_i: Vec<f64>,
    basis: &InjectionBasis,
    ibrs: &IbrParams,
    market: &MarketParams,
) -> AllocationPlan {
    let per_ibr_energy: Vec<f64> = h_i.iter().zip(&d_i).map(|(&h, &d)| basis.energy(h, d)).collect();
    let f_res: f64 = per_ibr_energy.iter().map(|&e| market.dollars(market.c_f, e)).sum();
    let f_cost: f64 = -per_ibr_energy
        .iter()
        .zip(&ibrs.c_r)
        .map(|(&e, &c)| market.dollars(c, e))
        .sum::<f64>();
    let per_ibr_profit = per_ibr_energy
        .iter()
        .zip(&ibrs.c_r)
        .map(|(&e, &c)| market.dollars(market.c_f - c, e))
        .collect();
    let mut binding = Vec::new();
    let mut violations = Vec::new();
    for i in 0..h_i.len() {
        let (hl, hu) = ibrs.h_bounds[i];
        let (dl, du) = ibrs.d_bounds[i];
        let tag = i + 1;
        for (name, v, lo, hi) in [("H", h_i[i], hl, hu), ("D", d_i[i], dl, du)] {
            if v < lo - BIND_TOL || v > hi + BIND_TOL {
                violations.push(format!("{name}_{tag}={v:.6} outside [{lo}, {hi}]"));
            } else if (v - lo).abs() <= BIND_TOL {
                binding.push(format!("{name}_{tag} at lower bound"));
            } else if (v - hi).abs() <= BIND_TOL {
                binding.push(format!("{name}_{tag} at upper bound"));
            }
        }
        let cap = ibrs.p_rated[i];
        let mut cap_hits = Vec::new();
        let mut zero_hits = Vec::new();
        for (k, &t) in basis.times.iter().enumerate() {
            let p = basis.power(h_i[i], d_i[i], k);
            if p > cap + BIND_TOL {
                violations.push(format!("IBR {tag} exceeds its cap at t={t}: {p:.6} > {cap}"));
            } else if p < -BIND_TOL {
                violations.push(format!("IBR {tag} absorbs power at t={t}: {p:.6}"));
            } else if (p - cap).abs() <= BIND_TOL * cap.max(1.0) * 10.0 {
                cap_hits.push(t);
            } else if p.abs() <= BIND_TOL * 10.0 {
                zero_hits.push(t);
            }
        }
        if !cap_hits.is_empty() {
            binding.push(format!("IBR {tag} power cap at t={:?}", cap_hits));
        }
        if !zero_hits.is_empty() {
            binding.push(format!("IBR {tag} zero-power bound at t={:?}", zero_hits));
        }
    }
    AllocationPlan {
        strategy,
        h_i,
        d_i,
        f_res,
        f_cost,
        f_pun: 0.0,
        objective: f_res + f_cost,
        per_ibr_energy,
        per_ibr_profit,
        binding,
        violations,
        clamped: false,
        certificate: None,
    }
}

/// Indices of the convex-hull vertices of a planar point set.
pub fn convex_hull(points: &[(f64, f64)]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..points.len()).collect();
    idx.sort_by(|&a, &b| {
        points[a]
            .0
            .total_cmp(&points[b].0)
            .then(points[a].1.total_cmp(&points[b].1))
    });
    idx.dedup_by(|a, b| points[*a] == points[*b]);
    if idx.len() < 3 {
        return idx;
    }
    let cross = |o: usize, a: usize, b: usize| {
        let (o, a, b) = (points[o], points[a], points[b]);
        (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
    };
    let mut hull: Vec<usize> = Vec::with_capacity(2 * idx.len());
    for &p in &idx {
        while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    let lower_len = hull.len() + 1;
    for &p in idx.iter().rev().skip(1) {
        while hull.len() >= lower_len && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    hull.pop();
    hull
}

fn power_samples(basis: &InjectionBasis, formulation: Formulation) -> Vec<usize> {
    match formulation {
        Formulation::Full => (0..basis.times.len()).collect(),
        Formulation::Reduced => {
            let pts: Vec<(f64, f64)> = basis
                .alpha
                .iter()
                .zip(&basis.beta)
                .map(|(&a, &b)| (a, basis.k_d + b))
                .collect();
            let mut v = convex_hull(&pts);
            v.sort_unstable();
            v
        }
    }
}

/// Checks the aggregate conditions every plan must meet.
fn precheck(basis: &InjectionBasis, ibrs: &IbrParams, target: &VppGain) -> Result<(), AllocError> {
    let sum = |f: &dyn Fn(&(f64, f64)) -> f64, v: &[(f64, f64)]| v.iter().map(f).sum::<f64>();
    let (h_lo, h_hi) = (sum(&|b| b.0, &ibrs.h_bounds), sum(&|b| b.1, &ibrs.h_bounds));
    let (d_lo, d_hi) = (sum(&|b| b.0, &ibrs.d_bounds), sum(&|b| b.1, &ibrs.d_bounds));
    if target.h_vpp < h_lo - 1e-9 || target.h_vpp > h_hi + 1e-9 {
        return Err(AllocError::Infeasible(format!(
            "H target {} outside aggregate bounds [{h_lo}, {h_hi}]",
            target.h_vpp
        )));
    }
    if target.d_vpp < d_lo - 1e-9 || target.d_vpp > d_hi + 1e-9 {
        return Err(AllocError::Infeasible(format!(
            "D target {} outside aggregate bounds [{d_lo}, {d_hi}]",
            target.d_vpp
        )));
    }
    let cap_total: f64 = ibrs.p_rated.iter().sum();
    for (k, &t) in basis.times.iter().enumerate() {
        let p = basis.power(target.h_vpp, target.d_vpp, k);
        if p > cap_total + 1e-9 {
            return Err(AllocError::Infeasible(format!(
                "VPP injection {p:.6} at t={t} exceeds the total cap {cap_total:.6}"
            )));
        }
        if p < -1e-9 {
            return Err(AllocError::Infeasible(format!("VPP injection is negative at t={t}: {p:.6}")));
        }
    }
    Ok(())
}

struct AllocLp {
    lp: LinearProgram,
    /// Lower bounds subtracted from (h_i, d_i), interleaved.
    shift: Vec<f64>,
}

fn build_lp(
    basis: &InjectionBasis,
    ibrs: &IbrParams,
    market: &MarketParams,
    target: &VppGain,
    formulation: Formulation,
) -> AllocLp {
    let n = ibrs.n_ibr();
    let nv = 2 * n;
    let (wa, wd) = basis.energy_weights();
    let mut obj = vec![0.0; nv];
    let mut shift = vec![0.0; nv];
    for i in 0..n {
        let margin = market.c_f - ibrs.c_r[i];
        obj[2 * i] = market.dollars(margin, wa);
        obj[2 * i + 1] = market.dollars(margin, wd);
        shift[2 * i] = ibrs.h_bounds[i].0;
        shift[2 * i + 1] = ibrs.d_bounds[i].0;
    }
    let mut lp = LinearProgram::new(obj);
    let shifted = |coefs: &[f64], rhs: f64| rhs - coefs.iter().zip(&shift).map(|(c, s)| c * s).sum::<f64>();

    let mut row_h = vec![0.0; nv];
    let mut row_d = vec![0.0; nv];
    for i in 0..n {
        row_h[2 * i] = 1.0;
        row_d[2 * i + 1] = 1.0;
    }
    let rhs_h = shifted(&row_h, target.h_vpp);
    let rhs_d = shifted(&row_d, target.d_vpp);
    lp.add_row(row_h, Relation::Eq, rhs_h);
    lp.add_row(row_d, Relation::Eq, rhs_d);

    for i in 0..n {
        for (j, (lo, hi)) in [(2 * i, ibrs.h_bounds[i]), (2 * i + 1, ibrs.d_bounds[i])] {
            let mut row = vec![0.0; nv];
            row[j] = 1.0;
            lp.add_row(row, Relation::Le, hi - lo);
        }
    }
    for k in power_samples(basis, formulation) {
        for i in 0..n {
            let mut row = vec![0.0; nv];
            row[2 * i] = basis.alpha[k];
            row[2 * i + 1] = basis.k_d + basis.beta[k];
            let hi = shifted(&row, ibrs.p_rated[i]);
            let lo = shifted(&row, 0.0);
            lp.add_row(row.clone(), Relation::Le, hi);
            lp.add_row(row, Relation::Ge, lo);
        }
    }
    AllocLp { lp, shift }
}

/// Relative slack allowed on the primary objective when breaking ties.
const TIE_TOL: f64 = 1e-9;

fn solve_lp_plan(
    strategy: Strategy,
    basis: &InjectionBasis,
    ibrs: &IbrParams,
    market: &MarketParams,
    target: &VppGain,
    formulation: Formulation,
) -> Result<AllocationPlan, AllocError> {
    ibrs.validate()?;
    market.validate()?;
    precheck(basis, ibrs, target)?;
    let AllocLp { lp, shift } = build_lp(basis, ibrs, market, target, formulation);
    let primary = lp.solve()?;

    // Among optimal plans prefer allocations to lower-indexed IBRs.
    let n = ibrs.n_ibr();
    let mut secondary = lp.clone();
    let z = primary.objective;
    secondary.add_row(lp.objective.clone(), Relation::Ge, z - TIE_TOL * z.abs().max(1.0));
    secondary.objective = (0..2 * n).map(|j| 0.5_f64.powi((j / 2) as i32)).collect();
    let y = match secondary.solve() {
        Ok(s) => s.x,
        Err(_) => primary.x.clone(),
    };
    let certificate = lp.certify(&y, &primary.duals);
    let x: Vec<f64> = y.iter().zip(&shift).map(|(v, s)| v + s).collect();
    let h_i = (0..n).map(|i| x[2 * i]).collect();
    let d_i = (0..n).map(|i| x[2 * i + 1]).collect();
    let mut plan = evaluate_plan(strategy, h_i, d_i, basis, ibrs, market);
    plan.certificate = Some(certificate);
    Ok(plan)
}

pub fn solve_allocation(
    basis: &InjectionBasis,
    ibrs: &IbrParams,
    market: &MarketParams,
    target: &VppGain,
    formulation: Formulation,
) -> Result<AllocationPlan, AllocError> {
    solve_lp_plan(Strategy::Opt, basis, ibrs, market, target, formulation)
}

/// Same program with every cap replaced by its worst case (1 − δ_i)·P_i.
pub fn solve_allocation_robust(
    basis: &InjectionBasis,
    ibrs: &IbrParams,
    market: &MarketParams,
    target: &VppGain,
    formulation: Formulation,
) -> Result<AllocationPlan, AllocError> {
    ibrs.validate()?;
    let mut plan = solve_lp_plan(Strategy::Robust, basis, &ibrs.worst_case(), market, target, formulation)?;
    let nominal = evaluate_plan(Strategy::Robust, plan.h_i.clone(), plan.d_i.clone(), basis, ibrs, market);
    plan.binding = nominal.binding;
    plan.violations = nominal.violations;
    Ok(plan)
}

/// Splits `total` in proportion to `weights`, then clamps into the boxes and
/// redistributes the excess over the unclamped entries.
fn split_clamped(total: f64, weights: &[f64], bounds: &[(f64, f64)]) -> (Vec<f64>, bool) {
    let n = weights.len();
    let mut fixed: Vec<Option<f64>> = vec![None; n];
    let mut clamped = false;
    for _ in 0..=n {
        let rest: f64 = total - fixed.iter().flatten().sum::<f64>();
        let wsum: f64 = (0..n).filter(|&i| fixed[i].is_none()).map(|i| weights[i]).sum();
        let mut changed = false;
        for i in 0..n {
            if fixed[i].is_some() {
                continue;
            }
            let v = if wsum > 0.0 { rest * weights[i] / wsum } else { 0.0 };
            let (lo, hi) = bounds[i];
            if v < lo {
                fixed[i] = Some(lo);
                changed = true;
            } else if v > hi {
                fixed[i] = Some(hi);
                changed = true;
            }
        }
        if !changed {
            break;
        }
        clamped = true;
    }
    let rest: f64 = total - fixed.iter().flatten().sum::<f64>();
    let wsum: f64 = (0..n).filter(|&i| fixed[i].is_none()).map(|i| weights[i]).sum();
    let out = (0..n)
        .map(|i| fixed[i].unwrap_or(if wsum > 0.0 { rest * weights[i] / wsum } else { 0.0 }))
        .collect();
    (out, clamped)
}

fn baseline(
    strategy: Strategy,
    weights: &[f64],
    basis: &InjectionBasis,
    ibrs: &IbrParams,
    market: &MarketParams,
    target: &VppGain,
) -> Result<AllocationPlan, AllocError> {
    ibrs.validate()?;
    market.validate()?;
    let (h_i, ch) = split_clamped(target.h_vpp, weights, &ibrs.h_bounds);
    let (d_i, cd) = split_clamped(target.d_vpp, weights, &ibrs.d_bounds);
    let mut plan = evaluate_plan(strategy, h_i, d_i, basis, ibrs, market);
    plan.clamped = ch || cd;
    Ok(plan)
}

/// Equal split of both gains. Power caps are reported, not enforced.
pub fn allocate_even(
    basis: &InjectionBasis,
    ibrs: &IbrParams,
    market: &MarketParams,
    target: &VppGain,
) -> Result<AllocationPlan, AllocError> {
    let w = vec![1.0; ibrs.n_ibr()];
    baseline(Strategy::Even, &w, basis, ibrs, market, target)
}

/// Split of both gains in proportion to rated power. Power caps are reported, not enforced.
pub fn allocate_prop(
    basis: &InjectionBasis,
    ibrs: &IbrParams,
    market: &MarketParams,
    target: &VppGain,
) -> Result<AllocationPlan, AllocError> {
    let w = ibrs.p_rated.clone();
    baseline(Strategy::Prop, &w, basis, ibrs, market, target)
}

/// Aggregate delivery when each IBR is limited to its realised capacity.
pub fn delivered_profile(
    plan: &AllocationPlan,
    basis: &InjectionBasis,
    ibrs: &IbrParams,
    realization: &[f64],
) -> Result<Vec<f64>, AllocError> {
    if realization.len() != ibrs.n_ibr() {
        return Err(AllocError::Invalid(format!(
            "realization has {} entries, expected {}",
            realization.len(),
            ibrs.n_ibr()
        )));
    }
    let caps: Vec<f64> = ibrs.p_rated.iter().zip(realization).map(|(p, r)| p * (1.0 + r)).collect();
    Ok((0..basis.times.len())
        .map(|k| {
            (0..ibrs.n_ibr())
                .map(|i| basis.power(plan.h_i[i], plan.d_i[i], k).min(caps[i]))
                .sum()
        })
        .collect())
}

/// Penalty ($, non-negative) for the gap between required and actual support.
pub fn punishment(required: &[f64], actual: &[f64], dt: f64, market: &MarketParams) -> Result<f64, AllocError> {
    if required.len() != actual.len() {
        return Err(AllocError::Invalid(format!(
            "profiles differ in length: {} vs {}",
            required.len(),
            actual.len()
        )));
    }
    let gap: f64 = required
        .iter()
        .zip(actual)
        .map(|(r, a)| match market.punishment_mode {
            PunishmentMode::Shortfall => (r - a).max(0.0),
            PunishmentMode::Absolute => (r - a).abs(),
        })
        .sum::<f64>()
        * dt;
    Ok(market.dollars(market.c_p, gap))
}

/// Outcome of a plan under one capacity realization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealizationOutcome {
    pub strategy: Strategy,
    pub punishment: f64,
    /// Punishment relative to the plan's own objective.
    pub loss_ratio: f64,
    pub objective_after: f64,
}

pub fn evaluate_realization(
    plan: &AllocationPlan,
    basis: &InjectionBasis,
    ibrs: &IbrParams,
    market: &MarketParams,
    realization: &[f64],
) -> Result<RealizationOutcome, AllocError> {
    let required = plan.aggregate_profile(basis);
    let actual = delivered_profile(plan, basis, ibrs, realization)?;
    let pun = punishment(&required, &actual, basis.dt, market)?;
    Ok(RealizationOutcome {
        strategy: plan.strategy,
        punishment: pun,
        loss_ratio: pun / plan.objective,
        objective_after: plan.objective - pun,
    })
}
