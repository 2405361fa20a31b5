//! Reduced-order frequency response of a grid with a VPP providing virtual
//! inertia and damping: closed-form trajectory, safety metrics, VPP power
//! injection and cumulative reserve energy.
//!
//! All quantities are per unit: power on the system base, frequency
//! deviations as a fraction of the nominal frequency.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FreqError {
    #[error("invalid parameter {name} = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error("overdamped response (zeta = {zeta:.6} >= 1); the oscillatory closed form does not apply")]
    Overdamped { zeta: f64 },
    #[error("sample grid is empty")]
    EmptyGrid,
    #[error("sample grid must start at 0 and be strictly increasing")]
    BadGrid,
    #[error("the SG dead band is never crossed, so the response has no nadir")]
    NoNadir,
    #[error("no stationary point found after the SG dead-band time")]
    NadirNotFound,
}

fn check_positive(name: &'static str, value: f64) -> Result<(), FreqError> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(FreqError::InvalidParameter {
            name,
            value,
            reason: "must be positive and finite",
        })
    }
}

fn check_non_negative(name: &'static str, value: f64) -> Result<(), FreqError> {
    if value >= 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(FreqError::InvalidParameter {
            name,
            value,
            reason: "must be non-negative and finite",
        })
    }
}

/// Grid-side constants of the centre-of-inertia model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridParams {
    /// Grid inertia constant (s).
    pub h0: f64,
    /// Grid load damping (p.u.).
    pub d0: f64,
    /// SG droop coefficient.
    pub r_droop: f64,
    /// Governor time constant (s).
    pub t_sg: f64,
    /// Nominal frequency (Hz).
    pub f0: f64,
    /// VPP dead band (p.u.).
    pub f_db1: f64,
    /// SG dead band (p.u.).
    pub f_db2: f64,
}

impl GridParams {
    pub fn validate(&self) -> Result<(), FreqError> {
        check_positive("h0", self.h0)?;
        check_positive("d0", self.d0)?;
        check_positive("r_droop", self.r_droop)?;
        check_positive("t_sg", self.t_sg)?;
        check_positive("f0", self.f0)?;
        check_non_negative("f_db1", self.f_db1)?;
        check_non_negative("f_db2", self.f_db2)?;
        if self.f_db1 > self.f_db2 {
            return Err(FreqError::InvalidParameter {
                name: "f_db1",
                value: self.f_db1,
                reason: "the VPP dead band must not exceed the SG dead band",
            });
        }
        Ok(())
    }

    /// Converts a per-unit frequency quantity to Hz.
    pub fn to_hz(&self, pu: f64) -> f64 {
        pu * self.f0
    }

    /// Absolute frequency in Hz for a per-unit deviation.
    pub fn absolute_hz(&self, deviation_pu: f64) -> f64 {
        self.f0 * (1.0 + deviation_pu)
    }
}

/// Aggregated virtual inertia and damping of the VPP.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VppGain {
    pub h_vpp: f64,
    pub d_vpp: f64,
}

impl VppGain {
    pub fn new(h_vpp: f64, d_vpp: f64) -> Self {
        Self { h_vpp, d_vpp }
    }

    pub fn zero() -> Self {
        Self::new(0.0, 0.0)
    }

    pub fn validate(&self) -> Result<(), FreqError> {
        check_non_negative("h_vpp", self.h_vpp)?;
        check_non_negative("d_vpp", self.d_vpp)
    }
}

/// Step power imbalance. `delta_p > 0` is a generation deficit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Disturbance {
    pub delta_p: f64,
    pub p_g: f64,
    pub p_v: f64,
    pub p_l: f64,
}

impl Disturbance {
    /// Builds the disturbance from post-step SG output, VPP output and load.
    pub fn from_components(p_g: f64, p_v: f64, p_l: f64) -> Self {
        Self {
            delta_p: p_l - p_g - p_v,
            p_g,
            p_v,
            p_l,
        }
    }

    /// A bare step with no operating-point information.
    pub fn step(delta_p: f64) -> Self {
        Self {
            delta_p,
            p_g: 0.0,
            p_v: 0.0,
            p_l: delta_p,
        }
    }
}

/// Grid safety limits; the frequency limits are magnitudes in p.u.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SafetyLimits {
    pub rocof_lim: f64,
    pub nadir_lim: f64,
    pub qss_lim: f64,
    /// Required decay rate of the dominant pole (1/s, negative).
    pub sigma: f64,
    /// Settle band as a fraction of |qss|.
    pub settle_band: f64,
}

impl SafetyLimits {
    pub fn validate(&self) -> Result<(), FreqError> {
        check_positive("rocof_lim", self.rocof_lim)?;
        check_positive("nadir_lim", self.nadir_lim)?;
        check_positive("qss_lim", self.qss_lim)?;
        check_positive("settle_band", self.settle_band)?;
        if !(self.sigma < 0.0) {
            return Err(FreqError::InvalidParameter {
                name: "sigma",
                value: self.sigma,
                reason: "must be negative",
            });
        }
        Ok(())
    }
}

/// Second-order characteristic of the closed loop with the governor lag.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SecondOrderChar {
    pub omega_n: f64,
    pub zeta: f64,
    pub omega_d: f64,
    pub phi1: f64,
    pub eta1: f64,
    pub phi2: f64,
    pub eta2: f64,
    pub h_total: f64,
    pub d_total: f64,
}

impl SecondOrderChar {
    /// Exponential decay rate ζ·ω_n of the oscillatory mode.
    pub fn decay(&self) -> f64 {
        self.zeta * self.omega_n
    }
}

pub fn second_order_char(grid: &GridParams, gain: &VppGain) -> Result<SecondOrderChar, FreqError> {
    grid.validate()?;
    gain.validate()?;
    let h = grid.h0 + gain.h_vpp;
    let d = grid.d0 + gain.d_vpp;
    let (r, t) = (grid.r_droop, grid.t_sg);
    let omega_n = ((d + r) / (2.0 * h * t)).sqrt();
    let zeta = (2.0 * h + d * t) / (2.0 * (2.0 * t * h * (r + d)).sqrt());
    if zeta >= 1.0 {
        return Err(FreqError::Overdamped { zeta });
    }
    let s = (1.0 - zeta * zeta).sqrt();
    let omega_d = omega_n * s;
    // 1 + eta1 * sin(phi1) = 0, so the deficit branch starts from zero deviation.
    let phi1 = (-omega_d).atan2(t * omega_n * omega_n - zeta * omega_n);
    let eta1 = ((1.0 - 2.0 * t * omega_n * zeta + t * t * omega_n * omega_n) / (1.0 - zeta * zeta)).sqrt();
    let phi2 = s.atan2(zeta);
    let eta2 = 1.0 / s;
    Ok(SecondOrderChar {
        omega_n,
        zeta,
        omega_d,
        phi1,
        eta1,
        phi2,
        eta2,
        h_total: h,
        d_total: d,
    })
}

/// When a dead band is first crossed on the initial (no-governor) branch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeadbandActivation {
    At(f64),
    Never,
}

impl DeadbandActivation {
    pub fn time(&self) -> Option<f64> {
        match self {
            DeadbandActivation::At(t) => Some(*t),
            DeadbandActivation::Never => None,
        }
    }

    pub fn is_active_at(&self, t: f64) -> bool {
        matches!(self, DeadbandActivation::At(ta) if t >= *ta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeadbandTimes {
    pub t_db1: DeadbandActivation,
    pub t_db2: DeadbandActivation,
}

fn crossing_time(h_total: f64, d0: f64, delta_p: f64, f_db: f64) -> DeadbandActivation {
    if f_db == 0.0 {
        return DeadbandActivation::At(0.0);
    }
    if delta_p <= 0.0 {
        return DeadbandActivation::Never;
    }
    let ratio = f_db * d0 / delta_p;
    if ratio >= 1.0 {
        DeadbandActivation::Never
    } else {
        DeadbandActivation::At(-(2.0 * h_total / d0) * (1.0 - ratio).ln())
    }
}

pub fn deadband_times(grid: &GridParams, gain: &VppGain, dist: &Disturbance) -> Result<DeadbandTimes, FreqError> {
    grid.validate()?;
    gain.validate()?;
    let h = grid.h0 + gain.h_vpp;
    Ok(DeadbandTimes {
        t_db1: crossing_time(h, grid.d0, dist.delta_p, grid.f_db1),
        t_db2: crossing_time(h, grid.d0, dist.delta_p, grid.f_db2),
    })
}

/// Precomputed closed-form response for one (grid, gain, disturbance) triple.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosedForm {
    pub grid: GridParams,
    pub gain: VppGain,
    pub dist: Disturbance,
    pub ch: SecondOrderChar,
    pub deadbands: DeadbandTimes,
    /// ΔP + D_VPP·f_db1.
    pub dp1: f64,
    /// R·f_db2.
    pub dp2: f64,
    /// D_VPP·f_db1.
    pub dp3: f64,
    coef_a: f64,
    coef_b: f64,
    coef_c: f64,
}

impl ClosedForm {
    pub fn new(grid: &GridParams, gain: &VppGain, dist: &Disturbance) -> Result<Self, FreqError> {
        let ch = second_order_char(grid, gain)?;
        let deadbands = deadband_times(grid, gain, dist)?;
        let dp1 = dist.delta_p + gain.d_vpp * grid.f_db1;
        let dp2 = grid.r_droop * grid.f_db2;
        let dp3 = gain.d_vpp * grid.f_db1;
        let wn2 = ch.omega_n * ch.omega_n;
        let t = grid.t_sg;
        let coef_a = (dp1 + dp2) * gain.d_vpp / wn2;
        let coef_b = 2.0 * t * gain.h_vpp * dp1 - coef_a;
        let coef_c = t * gain.d_vpp * dp1 + 2.0 * gain.h_vpp * (dp1 + dp2)
            - 2.0 * ch.zeta * (dp1 + dp2) * gain.d_vpp / ch.omega_n;
        Ok(Self {
            grid: *grid,
            gain: *gain,
            dist: *dist,
            ch,
            deadbands,
            dp1,
            dp2,
            dp3,
            coef_a,
            coef_b,
            coef_c,
        })
    }

    fn c_total(&self) -> f64 {
        self.gain.d_vpp + self.grid.d0 + self.grid.r_droop
    }

    fn two_ht(&self) -> f64 {
        2.0 * self.ch.h_total * self.grid.t_sg
    }

    /// Initial branch, before the governor engages.
    pub fn first_branch(&self, t: f64) -> f64 {
        let (h, d0) = (self.ch.h_total, self.grid.d0);
        -self.dist.delta_p / d0 * (1.0 - (-d0 * t / (2.0 * h)).exp())
    }

    pub fn first_branch_rate(&self, t: f64) -> f64 {
        let (h, d0) = (self.ch.h_total, self.grid.d0);
        -self.dist.delta_p / (2.0 * h) * (-d0 * t / (2.0 * h)).exp()
    }

    /// Oscillatory branch, with t measured from the disturbance onset.
    pub fn second_branch(&self, t: f64) -> f64 {
        let ch = &self.ch;
        let c = self.c_total();
        let e = (-ch.decay() * t).exp();
        let x = ch.omega_d * t;
        -self.dp1 / c * (1.0 + e * ch.eta1 * (x + ch.phi1).sin())
            - self.dp2 / c * (1.0 - e * ch.eta2 * (x + ch.phi2).sin())
    }

    pub fn second_branch_rate(&self, t: f64) -> f64 {
        let ch = &self.ch;
        let c = self.c_total();
        let (sg, wd) = (ch.decay(), ch.omega_d);
        let e = (-sg * t).exp();
        let (t1, t2) = (wd * t + ch.phi1, wd * t + ch.phi2);
        let d1 = e * (-sg * t1.sin() + wd * t1.cos());
        let d2 = e * (-sg * t2.sin() + wd * t2.cos());
        -self.dp1 / c * ch.eta1 * d1 + self.dp2 / c * ch.eta2 * d2
    }

    fn second_branch_curvature(&self, t: f64) -> f64 {
        let ch = &self.ch;
        let c = self.c_total();
        let (sg, wd) = (ch.decay(), ch.omega_d);
        let e = (-sg * t).exp();
        let dd = |th: f64| e * ((sg * sg - wd * wd) * th.sin() - 2.0 * sg * wd * th.cos());
        -self.dp1 / c * ch.eta1 * dd(wd * t + ch.phi1) + self.dp2 / c * ch.eta2 * dd(wd * t + ch.phi2)
    }

    fn on_second_branch(&self, t: f64) -> bool {
        self.deadbands.t_db2.is_active_at(t)
    }

    /// Piecewise frequency deviation (p.u.).
    pub fn delta_f(&self, t: f64) -> f64 {
        if self.dist.delta_p == 0.0 {
            return 0.0;
        }
        if self.on_second_branch(t) {
            self.second_branch(t)
        } else {
            self.first_branch(t)
        }
    }

    /// Piecewise time derivative of the deviation (p.u./s).
    pub fn delta_f_rate(&self, t: f64) -> f64 {
        if self.dist.delta_p == 0.0 {
            return 0.0;
        }
        if self.on_second_branch(t) {
            self.second_branch_rate(t)
        } else {
            self.first_branch_rate(t)
        }
    }

    /// Size of the discontinuity between the two branches at t_db2.
    pub fn branch_jump(&self) -> f64 {
        match self.deadbands.t_db2 {
            DeadbandActivation::At(t) => self.second_branch(t) - self.first_branch(t),
            DeadbandActivation::Never => 0.0,
        }
    }

    /// Quasi-steady-state deviation (p.u., negative for a deficit).
    pub fn qss(&self) -> f64 {
        -(self.dist.delta_p + self.dp3 + self.dp2) / self.c_total()
    }

    /// Initial RoCoF magnitude ΔP/(2H) (p.u./s).
    pub fn rocof(&self) -> f64 {
        self.dist.delta_p.abs() / (2.0 * self.ch.h_total)
    }

    /// First minimum of the oscillatory branch after t_db2.
    pub fn nadir_time(&self) -> Result<f64, FreqError> {
        let t_db2 = self.deadbands.t_db2.time().ok_or(FreqError::NoNadir)?;
        let ch = &self.ch;
        let (sg, wd) = (ch.decay(), ch.omega_d);
        let m = self.dp2 / self.dp1 * ch.eta2 / ch.eta1;
        let a = m * ch.phi2.cos() - ch.phi1.cos();
        let b = m * ch.phi2.sin() - ch.phi1.sin();
        let n = (wd * a - sg * b) / (sg * a + wd * b);
        let base = n.atan();
        (-2..64)
            .map(|k| (base + k as f64 * PI) / wd)
            .find(|&t| t > t_db2 && self.second_branch_curvature(t) > 0.0)
            .ok_or(FreqError::NadirNotFound)
    }

    /// Static and dynamic parts of the VPP injection (p.u.), positive for support.
    pub fn vpp_power(&self, t: f64) -> (f64, f64) {
        let ch = &self.ch;
        let two_ht = self.two_ht();
        let stat = (self.coef_a - two_ht * self.dp3) / two_ht;
        let (sg, wd) = (ch.decay(), ch.omega_d);
        let dynamic = (-sg * t).exp()
            * ((self.coef_c - sg * self.coef_b) / wd * (wd * t).sin() + self.coef_b * (wd * t).cos())
            / two_ht;
        (stat, dynamic)
    }

    pub fn vpp_power_total(&self, t: f64) -> f64 {
        let (s, d) = self.vpp_power(t);
        s + d
    }

    /// VPP injection as the inertia and droop terms acting on the piecewise deviation.
    pub fn vpp_power_piecewise(&self, t: f64) -> f64 {
        let inertia = -2.0 * self.gain.h_vpp * self.delta_f_rate(t);
        let damping = if self.deadbands.t_db1.is_active_at(t) {
            -self.gain.d_vpp * (self.delta_f(t) + self.grid.f_db1)
        } else {
            0.0
        };
        inertia + damping
    }

    /// Analytic integral of the injection over [0, horizon].
    pub fn energy_exact(&self, horizon: f64) -> f64 {
        let ch = &self.ch;
        let (sg, wd) = (ch.decay(), ch.omega_d);
        let (stat, _) = self.vpp_power(0.0);
        let z = Complex64::new(-sg, wd);
        let j = ((z * horizon).exp() - 1.0) / z;
        let k_sin = (self.coef_c - sg * self.coef_b) / wd;
        stat * horizon + (k_sin * j.im + self.coef_b * j.re) / self.two_ht()
    }

    /// Integral of the injection over [0, horizon] when the transient has died out.
    pub fn energy_approximation(&self, horizon: f64) -> f64 {
        let (stat, _) = self.vpp_power(0.0);
        let wn2 = self.ch.omega_n * self.ch.omega_n;
        stat * horizon + self.coef_c / (wn2 * self.two_ht())
    }
}

/// Sampled response of one scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FreqTrajectory {
    pub times: Vec<f64>,
    pub delta_f: Vec<f64>,
    pub dp_vpp: Vec<f64>,
    pub dp_pfr: Vec<f64>,
    pub t_db1: DeadbandActivation,
    pub t_db2: DeadbandActivation,
    /// Discontinuity of the closed form at t_db2 (p.u.).
    pub branch_jump: f64,
}

/// Uniform grid 0, step, 2·step, ... up to and including `horizon`.
pub fn uniform_grid(horizon: f64, step: f64) -> Vec<f64> {
    let n = (horizon / step).round() as usize;
    (0..=n).map(|i| i as f64 * step).collect()
}

fn check_grid(times: &[f64]) -> Result<(), FreqError> {
    if times.is_empty() {
        return Err(FreqError::EmptyGrid);
    }
    if times[0] != 0.0 || times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(FreqError::BadGrid);
    }
    Ok(())
}

pub fn freq_response(
    grid: &GridParams,
    gain: &VppGain,
    dist: &Disturbance,
    times: &[f64],
) -> Result<FreqTrajectory, FreqError> {
    check_grid(times)?;
    let cf = ClosedForm::new(grid, gain, dist)?;
    let mut delta_f = Vec::with_capacity(times.len());
    let mut dp_vpp = Vec::with_capacity(times.len());
    let mut dp_pfr = Vec::with_capacity(times.len());
    for &t in times {
        let f = cf.delta_f(t);
        let rate = cf.delta_f_rate(t);
        let p_vpp = cf.vpp_power_piecewise(t);
        delta_f.push(f);
        dp_vpp.push(p_vpp);
        dp_pfr.push(2.0 * grid.h0 * rate + grid.d0 * f + dist.delta_p - p_vpp);
    }
    Ok(FreqTrajectory {
        times: times.to_vec(),
        delta_f,
        dp_vpp,
        dp_pfr,
        t_db1: cf.deadbands.t_db1,
        t_db2: cf.deadbands.t_db2,
        branch_jump: cf.branch_jump(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FreqMetrics {
    /// Maximum RoCoF magnitude (p.u./s).
    pub rocof_max: f64,
    /// Minimum deviation (p.u.).
    pub nadir: f64,
    pub t_nadir: f64,
    pub qss: f64,
    /// `None` when the trajectory ends outside the settle band.
    pub settle_time: Option<f64>,
    /// Minimum of the sampled trajectory and its time.
    pub sampled_nadir: f64,
    pub sampled_t_nadir: f64,
    /// False when the closed-form and sampled nadir times differ by more than one step.
    pub nadir_consistent: bool,
}

/// First sample time after which |Δf − qss| stays within `band·|qss|`.
pub fn settle_time(times: &[f64], delta_f: &[f64], qss: f64, band: f64) -> Option<f64> {
    let tol = band * qss.abs();
    let last_out = delta_f.iter().rposition(|f| (f - qss).abs() > tol);
    match last_out {
        None => times.first().copied(),
        Some(i) if i + 1 < times.len() => Some(times[i + 1]),
        Some(_) => None,
    }
}

pub fn metrics(
    traj: &FreqTrajectory,
    grid: &GridParams,
    gain: &VppGain,
    dist: &Disturbance,
    settle_band: f64,
) -> Result<FreqMetrics, FreqError> {
    check_grid(&traj.times)?;
    let cf = ClosedForm::new(grid, gain, dist)?;
    let t_nadir = cf.nadir_time()?;
    let nadir = cf.second_branch(t_nadir);
    let qss = cf.qss();
    let (i_min, &sampled_nadir) = traj
        .delta_f
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .ok_or(FreqError::EmptyGrid)?;
    let sampled_t_nadir = traj.times[i_min];
    let step = traj
        .times
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(0.0_f64, f64::max);
    Ok(FreqMetrics {
        rocof_max: cf.rocof(),
        nadir,
        t_nadir,
        qss,
        settle_time: settle_time(&traj.times, &traj.delta_f, qss, settle_band),
        sampled_nadir,
        sampled_t_nadir,
        nadir_consistent: (sampled_t_nadir - t_nadir).abs() <= step * (1.0 + 1e-9),
    })
}

pub fn vpp_power(grid: &GridParams, gain: &VppGain, dist: &Disturbance, t: f64) -> Result<(f64, f64), FreqError> {
    if !(t >= 0.0) {
        return Err(FreqError::InvalidParameter {
            name: "t",
            value: t,
            reason: "must be non-negative",
        });
    }
    Ok(ClosedForm::new(grid, gain, dist)?.vpp_power(t))
}

/// Steady VPP injection; zero when the VPP provides no damping.
pub fn vpp_power_steady(grid: &GridParams, gain: &VppGain, dist: &Disturbance) -> f64 {
    if gain.d_vpp <= 0.0 {
        return 0.0;
    }
    let (r, d0) = (grid.r_droop, grid.d0);
    (dist.delta_p + r * grid.f_db2 - (d0 + r) * grid.f_db1) / (1.0 + (d0 + r) / gain.d_vpp)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyEstimate {
    /// Simpson quadrature of the injection over the horizon (p.u.·s).
    pub quadrature: f64,
    /// Analytic integral of the same profile (p.u.·s).
    pub exact: f64,
    /// Closed-form approximation assuming the transient has decayed (p.u.·s).
    pub approximation: f64,
    /// e^(−ζ·ω_n·T), the neglected transient factor.
    pub residual_factor: f64,
    pub warning: Option<String>,
}

const SIMPSON_INTERVALS: usize = 6000;

/// Composite Simpson rule on [a, b] with an even number of intervals.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, intervals: usize) -> f64 {
    let n = intervals + intervals % 2;
    let h = (b - a) / n as f64;
    let inner: f64 = (1..n)
        .map(|i| {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            w * f(a + i as f64 * h)
        })
        .sum();
    h / 3.0 * (f(a) + inner + f(b))
}

pub fn cumulative_energy(
    grid: &GridParams,
    gain: &VppGain,
    dist: &Disturbance,
    horizon: f64,
) -> Result<EnergyEstimate, FreqError> {
    check_positive("horizon", horizon)?;
    let cf = ClosedForm::new(grid, gain, dist)?;
    Ok(energy_of(&cf, horizon))
}

pub fn energy_of(cf: &ClosedForm, horizon: f64) -> EnergyEstimate {
    let quadrature = simpson(|t| cf.vpp_power_total(t), 0.0, horizon, SIMPSON_INTERVALS);
    let residual_factor = (-cf.ch.decay() * horizon).exp();
    let warning = (residual_factor > 0.01).then(|| {
        format!("transient not decayed at the horizon (e^(-zeta*wn*T) = {residual_factor:.4}); approximation unreliable")
    });
    EnergyEstimate {
        quadrature,
        exact: cf.energy_exact(horizon),
        approximation: cf.energy_approximation(horizon),
        residual_factor,
        warning,
    }
}

/// Converts p.u.·s on `base_mva` to MWh.
pub fn pu_s_to_mwh(energy: f64, base_mva: f64) -> f64 {
    energy * base_mva / 3600.0
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub fn base_case_grid() -> GridParams {
        GridParams {
            h0: 5.0,
            d0: 2.0,
            r_droop: 25.0,
            t_sg: 5.0,
            f0: 50.0,
            f_db1: 0.03 / 50.0,
            f_db2: 0.033 / 50.0,
        }
    }

    pub fn base_case_dist() -> Disturbance {
        Disturbance::from_components(0.75, 0.25, 1.25)
    }

    fn reference_gain() -> VppGain {
        VppGain::new(15.925, 14.2094)
    }

    #[test]
    fn natural_frequency_matches_hand_value() {
        let ch = second_order_char(&base_case_grid(), &reference_gain()).unwrap();
        assert!((ch.omega_n - (41.2094_f64 / 209.25).sqrt()).abs() < 1e-12);
        assert!((ch.omega_n - 0.443777).abs() < 1e-6);
        assert!(ch.zeta < 1.0);
        assert!((ch.omega_d - ch.omega_n * (1.0 - ch.zeta * ch.zeta).sqrt()).abs() < 1e-15);
        assert!(ch.eta2 >= 1.0);
    }

    #[test]
    fn zero_gain_reduces_to_grid_constants() {
        let g = base_case_grid();
        let ch = second_order_char(&g, &VppGain::zero()).unwrap();
        assert_eq!(ch.h_total, g.h0);
        assert_eq!(ch.d_total, g.d0);
        assert!((ch.omega_n - ((g.d0 + g.r_droop) / (2.0 * g.h0 * g.t_sg)).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn overdamped_gain_is_rejected() {
        let err = second_order_char(&base_case_grid(), &VppGain::new(0.0, 300.0)).unwrap_err();
        assert!(matches!(err, FreqError::Overdamped { .. }));
    }

    #[test]
    fn second_branch_starts_at_zero() {
        let cf = ClosedForm::new(&base_case_grid(), &reference_gain(), &base_case_dist()).unwrap();
        assert!(cf.second_branch(0.0).abs() < 1e-15);
        assert!(cf.branch_jump().abs() < 2e-5);
    }

    #[test]
    fn deadband_times_examples() {
        let mut g = base_case_grid();
        let d = base_case_dist();
        let gain = reference_gain();
        let tdb = deadband_times(&g, &gain, &d).unwrap();
        let t1 = tdb.t_db1.time().unwrap();
        assert!((t1 - 0.100682).abs() < 1e-5);
        assert!(t1 <= tdb.t_db2.time().unwrap());
        let cf = ClosedForm::new(&g, &gain, &d).unwrap();
        assert!((cf.first_branch(t1) + g.f_db1).abs() < 1e-15);

        g.f_db1 = 0.0;
        assert_eq!(deadband_times(&g, &gain, &d).unwrap().t_db1, DeadbandActivation::At(0.0));

        let g = base_case_grid();
        let small = Disturbance::step(0.001);
        assert_eq!(deadband_times(&g, &gain, &small).unwrap().t_db1, DeadbandActivation::Never);
    }

    #[test]
    fn zero_disturbance_gives_flat_response() {
        let times = uniform_grid(10.0, 0.1);
        let tr = freq_response(&base_case_grid(), &reference_gain(), &Disturbance::step(0.0), &times).unwrap();
        assert!(tr.delta_f.iter().all(|&f| f == 0.0));
        assert!(tr.dp_vpp.iter().all(|&p| p == 0.0));
    }

    #[test]
    fn empty_or_bad_grid_rejected() {
        let g = base_case_grid();
        assert_eq!(freq_response(&g, &reference_gain(), &base_case_dist(), &[]), Err(FreqError::EmptyGrid));
        assert_eq!(
            freq_response(&g, &reference_gain(), &base_case_dist(), &[0.0, 1.0, 1.0]),
            Err(FreqError::BadGrid)
        );
    }

    #[test]
    fn reported_decision_metrics() {
        let g = base_case_grid();
        let d = base_case_dist();
        let gain = reference_gain();
        let tr = freq_response(&g, &gain, &d, &uniform_grid(60.0, 0.01)).unwrap();
        let m = metrics(&tr, &g, &gain, &d, 0.01).unwrap();
        assert!((g.to_hz(m.rocof_max) - 0.29869).abs() < 1e-4);
        assert!((g.absolute_hz(m.nadir) - 49.5006).abs() < 1e-3);
        assert!((g.to_hz(m.qss) + 0.3342).abs() < 1e-3);
        assert!(m.nadir_consistent);
        assert!(m.nadir <= m.qss && m.qss <= 0.0);
        let settle = m.settle_time.unwrap();
        assert!((settle - 17.54).abs() < 0.02);
    }

    #[test]
    fn nadir_time_is_stationary() {
        let cf = ClosedForm::new(&base_case_grid(), &VppGain::new(19.0, 11.0), &base_case_dist()).unwrap();
        let tn = cf.nadir_time().unwrap();
        assert!(cf.second_branch_rate(tn).abs() < 1e-6);
        assert!((base_case_grid().absolute_hz(cf.second_branch(tn)) - 49.4602).abs() < 1e-3);
    }

    #[test]
    fn steady_power_examples() {
        let g = base_case_grid();
        let d = base_case_dist();
        let p = vpp_power_steady(&g, &reference_gain(), &d);
        assert!((p - 0.08633).abs() < 1e-4);
        assert_eq!(vpp_power_steady(&g, &VppGain::new(10.0, 0.0), &d), 0.0);
        let cf = ClosedForm::new(&g, &reference_gain(), &d).unwrap();
        assert!((cf.vpp_power(0.0).0 - p).abs() < 1e-12);
        assert!((cf.vpp_power_total(60.0) - p).abs() < 1e-4);
    }

    #[test]
    fn zero_gain_injects_nothing() {
        let cf = ClosedForm::new(&base_case_grid(), &VppGain::zero(), &base_case_dist()).unwrap();
        for t in [0.0, 1.0, 7.5, 60.0] {
            assert_eq!(cf.vpp_power_total(t), 0.0);
        }
        let e = cumulative_energy(&base_case_grid(), &VppGain::zero(), &base_case_dist(), 60.0).unwrap();
        assert_eq!(e.quadrature, 0.0);
    }

    #[test]
    fn reserve_energy_of_reported_decision() {
        let e = cumulative_energy(&base_case_grid(), &reference_gain(), &base_case_dist(), 60.0).unwrap();
        assert!((pu_s_to_mwh(e.quadrature, 1000.0) - 1.5427).abs() < 1e-3);
        assert!((e.quadrature - e.approximation).abs() / e.quadrature < 1e-3);
        assert!((e.quadrature - e.exact).abs() / e.quadrature < 1e-10);
        assert!(e.warning.is_none());
        let short = cumulative_energy(&base_case_grid(), &reference_gain(), &base_case_dist(), 5.0).unwrap();
        assert!(short.warning.is_some());
    }

    #[test]
    fn simpson_is_exact_for_cubics() {
        let v = simpson(|x| x * x * x - 2.0 * x, 0.0, 2.0, 4);
        assert!((v - 0.0).abs() < 1e-12);
    }
}
