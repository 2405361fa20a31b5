//! Eighth-order VPP-integrated grid model: PLL, grid swing equation, VPP
//! current loops and governor lag, with dead-band gating of the droop and
//! primary-response terms.
//!
//! State order: f_p, E_q, f_g, u_vd, u_vq, i_od, i_oq, x_pfr. Frequencies are
//! absolute per unit (nominal 1.0). `x_pfr` is the governor state, equal to
//! the negative of the SG primary response.

use crate::freq::{Disturbance, GridParams, VppGain};
use crate::linalg::{solve, Matrix};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const N_STATES: usize = 8;

pub const STATE_LABELS: [&str; N_STATES] = ["f_p", "E_q", "f_g", "u_vd", "u_vq", "i_od", "i_oq", "dP_PFR"];

pub const F_P: usize = 0;
pub const E_Q: usize = 1;
pub const F_G: usize = 2;
pub const U_VD: usize = 3;
pub const U_VQ: usize = 4;
pub const I_OD: usize = 5;
pub const I_OQ: usize = 6;
pub const X_PFR: usize = 7;

/// Divergence threshold on |x − x0|, in multiples of max(1, |x0|).
pub const DIVERGENCE_LIMIT: f64 = 1e3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("step must be positive and horizon non-negative (step = {step}, horizon = {horizon})")]
    BadStep { step: f64, horizon: f64 },
    #[error("state {label} diverged at t = {time:.4} s (|x - x0| = {magnitude:.3e})")]
    Diverged {
        time: f64,
        label: &'static str,
        magnitude: f64,
    },
    #[error("pre-disturbance equilibrium is singular")]
    SingularEquilibrium,
}

/// VPP inverter and control constants, in per unit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviceParams {
    /// PLL proportional and integral gains.
    pub kp_p: f64,
    pub kp_i: f64,
    /// Current-loop proportional and integral gains.
    pub kr_p: f64,
    pub kr_i: f64,
    /// Filter inductance (p.u.·s) and resistance (p.u.).
    pub l1: f64,
    pub r1: f64,
    /// d-axis current set point (p.u.).
    pub i0_v: f64,
    /// 2π·f0 (rad/s).
    pub m_const: f64,
}

impl DeviceParams {
    pub fn validate(&self) -> Result<(), String> {
        let checks = [
            ("kp_p", self.kp_p),
            ("kp_i", self.kp_i),
            ("kr_p", self.kr_p),
            ("kr_i", self.kr_i),
            ("l1", self.l1),
            ("m_const", self.m_const),
        ];
        for (name, v) in checks {
            if !(v > 0.0 && v.is_finite()) {
                return Err(format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.r1 >= 0.0 && self.r1.is_finite()) {
            return Err(format!("r1 must be non-negative, got {}", self.r1));
        }
        Ok(())
    }
}

/// Which dead-band-gated loops are engaged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Activation {
    pub vpp_droop: bool,
    pub sg_pfr: bool,
}

impl Activation {
    pub const NONE: Activation = Activation {
        vpp_droop: false,
        sg_pfr: false,
    };
    pub const ALL: Activation = Activation {
        vpp_droop: true,
        sg_pfr: true,
    };
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateSpaceModel {
    pub a: Matrix,
    pub bu: Vec<f64>,
    pub state_labels: [&'static str; N_STATES],
}

impl StateSpaceModel {
    pub fn derivative(&self, x: &[f64], out: &mut [f64]) {
        self.a.mul_vec_into(x, out);
        for (o, b) in out.iter_mut().zip(&self.bu) {
            *o += b;
        }
    }

    /// Row-major dump of A followed by Bu as a final line.
    pub fn to_text(&self) -> String {
        let mut s = self.a.to_text();
        let bu: Vec<String> = self.bu.iter().map(|v| format!("{v:.17e}")).collect();
        s.push_str(&bu.join(" "));
        s.push('\n');
        s
    }
}

/// Builds the model with the given load and gating.
pub fn assemble_gated(
    grid: &GridParams,
    dev: &DeviceParams,
    gain: &VppGain,
    p_g: f64,
    p_l: f64,
    act: Activation,
) -> StateSpaceModel {
    let (h0, d0, r, t) = (grid.h0, grid.d0, grid.r_droop, grid.t_sg);
    let hv = gain.h_vpp;
    let dv = if act.vpp_droop { gain.d_vpp } else { 0.0 };
    let (kpp, kpi, krp, kri) = (dev.kp_p, dev.kp_i, dev.kr_p, dev.kr_i);
    let (m, l1, r1) = (dev.m_const, dev.l1, dev.r1);
    let f_nom = 1.0;
    let mut a = Matrix::zeros(N_STATES, N_STATES);
    let mut bu = vec![0.0; N_STATES];

    // PLL
    a[(F_P, F_P)] = -kpp * m;
    a[(F_P, E_Q)] = kpi;
    a[(F_P, F_G)] = kpp * m;
    a[(E_Q, F_P)] = -m;
    a[(E_Q, F_G)] = m;

    // Grid swing equation
    a[(F_G, F_G)] = -d0 / (2.0 * h0);
    a[(F_G, I_OD)] = 1.0 / (2.0 * h0);
    a[(F_G, X_PFR)] = -1.0 / (2.0 * h0);
    bu[F_G] = (p_g - p_l + d0) / (2.0 * h0);

    // Current-loop integrators
    a[(U_VD, F_P)] = kri * (2.0 * hv * kpp * m - dv);
    a[(U_VD, E_Q)] = -2.0 * kri * hv * kpi;
    a[(U_VD, F_G)] = -2.0 * kri * hv * kpp * m;
    a[(U_VD, I_OD)] = -kri;
    a[(U_VQ, I_OQ)] = -kri;
    bu[U_VD] = kri * (dev.i0_v + dv * f_nom - dv * grid.f_db1);

    // Filter currents
    a[(I_OD, F_P)] = krp * (2.0 * kpp * hv * m - dv) / l1;
    a[(I_OD, E_Q)] = -2.0 * krp * kpi * hv / l1;
    a[(I_OD, F_G)] = -2.0 * krp * kpp * hv * m / l1;
    a[(I_OD, U_VD)] = 1.0 / l1;
    a[(I_OD, I_OD)] = -(krp + r1) / l1;
    a[(I_OQ, U_VQ)] = 1.0 / l1;
    a[(I_OQ, I_OQ)] = -(krp + r1) / l1;
    bu[I_OD] = krp * (dev.i0_v + dv * f_nom - dv * grid.f_db1) / l1;

    // Governor
    a[(X_PFR, X_PFR)] = -1.0 / t;
    if act.sg_pfr {
        a[(X_PFR, F_G)] = r / t;
        bu[X_PFR] = r / t * (grid.f_db2 - f_nom);
    }

    StateSpaceModel {
        a,
        bu,
        state_labels: STATE_LABELS,
    }
}

/// Post-activation model at the disturbed operating point.
pub fn assemble(grid: &GridParams, dev: &DeviceParams, gain: &VppGain, dist: &Disturbance) -> StateSpaceModel {
    assemble_gated(grid, dev, gain, dist.p_g, dist.p_l, Activation::ALL)
}

/// Pre-disturbance load, balanced by the SG and VPP outputs.
pub fn pre_disturbance_load(dist: &Disturbance) -> f64 {
    dist.p_g + dist.p_v
}

/// Model whose droop and PFR entries switch on when the dead bands are crossed.
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchedModel {
    pub grid: GridParams,
    pub dev: DeviceParams,
    pub gain: VppGain,
    pub dist: Disturbance,
    variants: [StateSpaceModel; 4],
}

fn variant_index(act: Activation) -> usize {
    usize::from(act.vpp_droop) + 2 * usize::from(act.sg_pfr)
}

impl SwitchedModel {
    pub fn new(grid: &GridParams, dev: &DeviceParams, gain: &VppGain, dist: &Disturbance) -> Self {
        let build = |vpp_droop, sg_pfr| {
            assemble_gated(grid, dev, gain, dist.p_g, dist.p_l, Activation { vpp_droop, sg_pfr })
        };
        Self {
            grid: *grid,
            dev: *dev,
            gain: *gain,
            dist: *dist,
            variants: [build(false, false), build(true, false), build(false, true), build(true, true)],
        }
    }

    pub fn model(&self, act: Activation) -> &StateSpaceModel {
        &self.variants[variant_index(act)]
    }

    /// Equilibrium before the load step, with both gated loops idle.
    pub fn equilibrium(&self) -> Result<Vec<f64>, SimError> {
        let pre = assemble_gated(
            &self.grid,
            &self.dev,
            &self.gain,
            self.dist.p_g,
            pre_disturbance_load(&self.dist),
            Activation::NONE,
        );
        let rhs: Vec<f64> = pre.bu.iter().map(|b| -b).collect();
        solve(&pre.a, &rhs).ok_or(SimError::SingularEquilibrium)
    }

    /// Margin of each dead-band trigger: negative once the band is crossed.
    fn triggers(&self, x: &[f64]) -> (f64, f64) {
        (
            x[F_P] - 1.0 + self.grid.f_db1,
            x[F_G] - 1.0 + self.grid.f_db2,
        )
    }
}

fn rk4_step(model: &StateSpaceModel, x: &[f64], h: f64) -> Vec<f64> {
    let n = x.len();
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    model.derivative(x, &mut k1);
    for i in 0..n {
        tmp[i] = x[i] + 0.5 * h * k1[i];
    }
    model.derivative(&tmp, &mut k2);
    for i in 0..n {
        tmp[i] = x[i] + 0.5 * h * k2[i];
    }
    model.derivative(&tmp, &mut k3);
    for i in 0..n {
        tmp[i] = x[i] + h * k3[i];
    }
    model.derivative(&tmp, &mut k4);
    (0..n)
        .map(|i| x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect()
}

/// Sampled states of a simulation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    /// Instants at which the VPP droop and SG primary response engaged.
    pub t_vpp_on: Option<f64>,
    pub t_sg_on: Option<f64>,
}

impl StateTrajectory {
    pub fn column(&self, idx: usize) -> Vec<f64> {
        self.states.iter().map(|x| x[idx]).collect()
    }

    /// Grid frequency deviation f_g − 1 (p.u.).
    pub fn delta_f_grid(&self) -> Vec<f64> {
        self.states.iter().map(|x| x[F_G] - 1.0).collect()
    }

    /// PLL frequency deviation f_p − 1 (p.u.).
    pub fn delta_f_pll(&self) -> Vec<f64> {
        self.states.iter().map(|x| x[F_P] - 1.0).collect()
    }

    /// VPP injection above its set point (p.u.).
    pub fn dp_vpp(&self, i0_v: f64) -> Vec<f64> {
        self.states.iter().map(|x| x[I_OD] - i0_v).collect()
    }

    /// SG primary response (p.u.).
    pub fn dp_pfr(&self) -> Vec<f64> {
        self.states.iter().map(|x| -x[X_PFR]).collect()
    }

    /// Gating in force at time `t`.
    pub fn activation_at(&self, t: f64) -> Activation {
        Activation {
            vpp_droop: self.t_vpp_on.is_some_and(|on| t >= on),
            sg_pfr: self.t_sg_on.is_some_and(|on| t >= on),
        }
    }

    /// Largest |ΔP_dis + ΔP_VPP + ΔP_PFR − 2H0·dΔf/dt − D0·Δf| over the
    /// samples, with dΔf/dt taken from the active model's right-hand side.
    pub fn swing_residual(&self, sw: &SwitchedModel) -> f64 {
        let mut dx = vec![0.0; N_STATES];
        let mut worst: f64 = 0.0;
        for (&t, x) in self.times.iter().zip(&self.states).skip(1) {
            sw.model(self.activation_at(t)).derivative(x, &mut dx);
            let f = x[F_G] - 1.0;
            let p_vpp = x[I_OD] - sw.dev.i0_v;
            let p_pfr = -x[X_PFR];
            let r = -sw.dist.delta_p + p_vpp + p_pfr - 2.0 * sw.grid.h0 * dx[F_G] - sw.grid.d0 * f;
            worst = worst.max(r.abs());
        }
        worst
    }

    pub fn nadir(&self) -> (f64, f64) {
        let f = self.delta_f_grid();
        let (i, v) = f
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, v)| (i, *v))
            .unwrap_or((0, 0.0));
        (self.times.get(i).copied().unwrap_or(0.0), v)
    }
}

fn check_step(horizon: f64, step: f64) -> Result<usize, SimError> {
    if !(step > 0.0 && horizon >= 0.0 && step.is_finite() && horizon.is_finite()) {
        return Err(SimError::BadStep { step, horizon });
    }
    Ok((horizon / step).round() as usize)
}

fn check_divergence(x: &[f64], x0: &[f64], t: f64, labels: &[&'static str]) -> Result<(), SimError> {
    for (i, (xi, x0i)) in x.iter().zip(x0).enumerate() {
        let magnitude = (xi - x0i).abs();
        if !(magnitude <= DIVERGENCE_LIMIT * x0i.abs().max(1.0)) {
            return Err(SimError::Diverged {
                time: t,
                label: labels.get(i).copied().unwrap_or("state"),
                magnitude,
            });
        }
    }
    Ok(())
}

/// Fixed-step RK4 of ẋ = Ax + Bu with no switching.
pub fn simulate_linear(
    model: &StateSpaceModel,
    x0: &[f64],
    horizon: f64,
    step: f64,
) -> Result<StateTrajectory, SimError> {
    let n_steps = check_step(horizon, step)?;
    let mut times = Vec::with_capacity(n_steps + 1);
    let mut states = Vec::with_capacity(n_steps + 1);
    let mut x = x0.to_vec();
    times.push(0.0);
    states.push(x.clone());
    for k in 1..=n_steps {
        x = rk4_step(model, &x, step);
        let t = k as f64 * step;
        check_divergence(&x, x0, t, &model.state_labels)?;
        times.push(t);
        states.push(x.clone());
    }
    Ok(StateTrajectory {
        times,
        states,
        t_vpp_on: None,
        t_sg_on: None,
    })
}

const CROSSING_BISECTIONS: usize = 60;

/// Fixed-step RK4 with dead-band switching. A crossing inside a step is
/// located by bisection on the sub-step length, the gated entries are
/// switched there and the remainder of the step uses the new model.
pub fn simulate(sw: &SwitchedModel, x0: &[f64], horizon: f64, step: f64) -> Result<StateTrajectory, SimError> {
    let n_steps = check_step(horizon, step)?;
    let mut act = Activation::NONE;
    let mut t_vpp_on = None;
    let mut t_sg_on = None;
    let mut times = Vec::with_capacity(n_steps + 1);
    let mut states = Vec::with_capacity(n_steps + 1);
    let mut x = x0.to_vec();
    times.push(0.0);
    states.push(x.clone());
    for k in 1..=n_steps {
        let t_start = (k - 1) as f64 * step;
        let mut x_cur = x.clone();
        let mut remaining = step;
        let mut elapsed = 0.0;
        // At most one switch per gated loop in a step.
        for _ in 0..3 {
            let model = sw.model(act);
            let trial = rk4_step(model, &x_cur, remaining);
            let (g1, g2) = sw.triggers(&trial);
            let fire1 = !act.vpp_droop && g1 <= 0.0;
            let fire2 = !act.sg_pfr && g2 <= 0.0;
            if !fire1 && !fire2 {
                x_cur = trial;
                break;
            }
            let crossed = |y: &[f64]| {
                let (a, b) = sw.triggers(y);
                (!act.vpp_droop && a <= 0.0) || (!act.sg_pfr && b <= 0.0)
            };
            let (mut lo, mut hi) = (0.0, remaining);
            for _ in 0..CROSSING_BISECTIONS {
                let mid = 0.5 * (lo + hi);
                if crossed(&rk4_step(model, &x_cur, mid)) {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            x_cur = rk4_step(model, &x_cur, hi);
            elapsed += hi;
            remaining -= hi;
            let (g1, g2) = sw.triggers(&x_cur);
            let t_cross = t_start + elapsed;
            if !act.vpp_droop && g1 <= 0.0 {
                act.vpp_droop = true;
                t_vpp_on = Some(t_cross);
            }
            if !act.sg_pfr && g2 <= 0.0 {
                act.sg_pfr = true;
                t_sg_on = Some(t_cross);
            }
            if remaining <= 0.0 {
                break;
            }
        }
        x = x_cur;
        let t = k as f64 * step;
        check_divergence(&x, x0, t, &STATE_LABELS)?;
        times.push(t);
        states.push(x.clone());
    }
    Ok(StateTrajectory {
        times,
        states,
        t_vpp_on,
        t_sg_on,
    })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::freq::tests::{base_case_dist, base_case_grid};
    use crate::freq::ClosedForm;

    pub fn base_case_device() -> DeviceParams {
        let zb = 690.0_f64 * 690.0 / 1e9;
        DeviceParams {
            kp_p: 0.637,
            kp_i: 6.37,
            kr_p: 20000.0,
            kr_i: 150000.0,
            l1: 0.0114 / zb,
            r1: 3.57 / zb,
            i0_v: 0.25,
            m_const: 2.0 * std::f64::consts::PI * 50.0,
        }
    }

    #[test]
    fn grid_damping_entry() {
        let m = assemble(&base_case_grid(), &base_case_device(), &VppGain::new(15.925, 14.2094), &base_case_dist());
        assert!((m.a[(2, 2)] + 0.2).abs() < 1e-15);
        let d = base_case_dist();
        assert!((m.bu[2] - (d.p_g - d.p_l + 2.0) / 10.0).abs() < 1e-15);
    }

    #[test]
    fn zero_gain_has_no_vpp_entries() {
        let m = assemble(&base_case_grid(), &base_case_device(), &VppGain::zero(), &base_case_dist());
        assert_eq!(m.a[(U_VD, F_P)], 0.0);
        assert_eq!(m.a[(U_VD, E_Q)], 0.0);
        assert_eq!(m.a[(U_VD, F_G)], 0.0);
        assert_eq!(m.a[(I_OD, F_P)], 0.0);
        assert_eq!(m.a[(I_OD, E_Q)], 0.0);
        assert_eq!(m.a[(I_OD, F_G)], 0.0);
    }

    #[test]
    fn equilibrium_is_fixed_point() {
        let g = base_case_grid();
        let dev = base_case_device();
        let dist = Disturbance::from_components(0.75, 0.25, 1.0);
        let sw = SwitchedModel::new(&g, &dev, &VppGain::new(15.925, 14.2094), &dist);
        let x0 = sw.equilibrium().unwrap();
        assert!((x0[F_G] - 1.0).abs() < 1e-12);
        assert!((x0[I_OD] - 0.25).abs() < 1e-12);
        let tr = simulate(&sw, &x0, 5.0, 1e-3).unwrap();
        let last = tr.states.last().unwrap();
        for (a, b) in last.iter().zip(&x0) {
            assert!((a - b).abs() < 1e-9 * b.abs().max(1.0));
        }
        assert!(tr.t_vpp_on.is_none() && tr.t_sg_on.is_none());
    }

    #[test]
    fn simulated_nadir_tracks_closed_form() {
        let g = base_case_grid();
        let dev = base_case_device();
        let dist = base_case_dist();
        let gain = VppGain::new(15.925, 14.2094);
        let sw = SwitchedModel::new(&g, &dev, &gain, &dist);
        let x0 = sw.equilibrium().unwrap();
        let tr = simulate(&sw, &x0, 20.0, 1e-3).unwrap();
        let (_, nadir) = tr.nadir();
        let cf = ClosedForm::new(&g, &gain, &dist).unwrap();
        let cf_nadir = cf.second_branch(cf.nadir_time().unwrap());
        assert!(((nadir - cf_nadir) / cf_nadir).abs() < 0.02);
        assert!(tr.column(I_OQ).iter().all(|v| v.abs() < 1e-12));
        assert!(tr.t_vpp_on.unwrap() < tr.t_sg_on.unwrap());
        assert!(tr.swing_residual(&sw) < 1e-6);
    }

    #[test]
    fn bad_step_rejected() {
        let m = assemble(&base_case_grid(), &base_case_device(), &VppGain::zero(), &base_case_dist());
        assert!(matches!(
            simulate_linear(&m, &[0.0; 8], 1.0, 0.0),
            Err(SimError::BadStep { .. })
        ));
    }

    #[test]
    fn divergence_aborts() {
        let m = StateSpaceModel {
            a: Matrix::identity(8),
            bu: vec![0.0; 8],
            state_labels: STATE_LABELS,
        };
        let err = simulate_linear(&m, &[1.0; 8], 20.0, 0.01).unwrap_err();
        assert!(matches!(err, SimError::Diverged { .. }));
    }
}
