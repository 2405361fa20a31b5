//! Dominant-pole stability margin and its bilinear surface fit
//! P*(H, D) ≈ b1 + b2·H + b3·D + b4·H·D over a lattice of VPP gains.

use super::eigen::{eigenvalues, EigenError};
use super::model::{assemble, DeviceParams, StateSpaceModel};
use crate::freq::{Disturbance, GridParams, VppGain};
use crate::linalg::{lstsq, Matrix};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("need at least 4 lattice points, got {0}")]
    TooFewPoints(usize),
    #[error("lattice is rank deficient for the basis {{1, H, D, H*D}}")]
    RankDeficient,
    #[error("eigenvalue computation failed at H = {h}, D = {d}: {source}")]
    Eigen { h: f64, d: f64, source: EigenError },
}

/// Rightmost real part over all eigenvalues of A (1/s).
pub fn dominant_pole(model: &StateSpaceModel) -> Result<f64, EigenError> {
    Ok(eigenvalues(&model.a)?.rightmost_real())
}

/// Uniform rectangular lattice of (H_VPP, D_VPP), endpoints included.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lattice {
    pub h_min: f64,
    pub h_max: f64,
    pub n_h: usize,
    pub d_min: f64,
    pub d_max: f64,
    pub n_d: usize,
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

impl Lattice {
    pub fn h_values(&self) -> Vec<f64> {
        linspace(self.h_min, self.h_max, self.n_h)
    }

    pub fn d_values(&self) -> Vec<f64> {
        linspace(self.d_min, self.d_max, self.n_d)
    }

    /// Points in row-major order (H outer, D inner) with their lattice indices.
    pub fn points(&self) -> Vec<(usize, usize, f64, f64)> {
        let ds = self.d_values();
        self.h_values()
            .into_iter()
            .enumerate()
            .flat_map(|(i, h)| ds.iter().enumerate().map(move |(j, &d)| (i, j, h, d)).collect::<Vec<_>>())
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitWeighting {
    /// Rows scaled by 1/|P*|, minimising relative residuals.
    Relative,
    /// Ordinary least squares.
    Uniform,
}

/// One sampled margin value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarginSample {
    pub h: f64,
    pub d: f64,
    pub p_star: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityFit {
    pub b1: f64,
    pub b2: f64,
    pub b3: f64,
    pub b4: f64,
    /// Root-mean-square residual over all lattice points (1/s).
    pub rms_error: f64,
    /// Mean of 1 − |residual|/|P*| over the fitted points.
    pub accuracy: f64,
    /// Same measure for a checkerboard split: fit on one colour, score the other.
    pub held_out_accuracy: f64,
    pub grid_spec: Lattice,
    pub weighting: FitWeighting,
}

impl StabilityFit {
    pub fn coefficients(&self) -> [f64; 4] {
        [self.b1, self.b2, self.b3, self.b4]
    }

    pub fn predict(&self, h: f64, d: f64) -> f64 {
        self.b1 + self.b2 * h + self.b3 * d + self.b4 * h * d
    }
}

const RANK_TOL: f64 = 1e-10;

fn weight(p: f64, weighting: FitWeighting) -> f64 {
    match weighting {
        FitWeighting::Relative if p != 0.0 => 1.0 / p.abs(),
        _ => 1.0,
    }
}

/// Least-squares coefficients on {1, H, D, H·D}.
pub fn fit_surface(samples: &[MarginSample], weighting: FitWeighting) -> Result<[f64; 4], FitError> {
    if samples.len() < 4 {
        return Err(FitError::TooFewPoints(samples.len()));
    }
    let rows: Vec<Vec<f64>> = samples
        .iter()
        .map(|s| {
            let w = weight(s.p_star, weighting);
            vec![w, w * s.h, w * s.d, w * s.h * s.d]
        })
        .collect();
    let rhs: Vec<f64> = samples.iter().map(|s| weight(s.p_star, weighting) * s.p_star).collect();
    let b = lstsq(&Matrix::from_rows(&rows), &rhs, RANK_TOL).ok_or(FitError::RankDeficient)?;
    Ok([b[0], b[1], b[2], b[3]])
}

fn eval(b: &[f64; 4], h: f64, d: f64) -> f64 {
    b[0] + b[1] * h + b[2] * d + b[3] * h * d
}

/// Mean of 1 − |residual|/|P*|.
pub fn accuracy(b: &[f64; 4], samples: &[MarginSample]) -> f64 {
    if samples.is_empty() {
        return f64::NAN;
    }
    let total: f64 = samples
        .iter()
        .map(|s| 1.0 - (eval(b, s.h, s.d) - s.p_star).abs() / s.p_star.abs())
        .sum();
    total / samples.len() as f64
}

pub fn margin_samples(
    grid: &GridParams,
    dev: &DeviceParams,
    dist: &Disturbance,
    lattice: &Lattice,
) -> Result<Vec<(usize, usize, MarginSample)>, FitError> {
    lattice
        .points()
        .into_iter()
        .map(|(i, j, h, d)| {
            let model = assemble(grid, dev, &VppGain::new(h, d), dist);
            let p_star = dominant_pole(&model).map_err(|source| FitError::Eigen { h, d, source })?;
            Ok((i, j, MarginSample { h, d, p_star }))
        })
        .collect()
}

/// Fits an already sampled lattice.
pub fn fit_from_samples(
    indexed: &[(usize, usize, MarginSample)],
    lattice: &Lattice,
    weighting: FitWeighting,
) -> Result<StabilityFit, FitError> {
    let all: Vec<MarginSample> = indexed.iter().map(|s| s.2).collect();
    let b = fit_surface(&all, weighting)?;
    let rms_error = (all.iter().map(|s| (eval(&b, s.h, s.d) - s.p_star).powi(2)).sum::<f64>()
        / all.len() as f64)
        .sqrt();
    let (even, odd): (Vec<&(usize, usize, MarginSample)>, Vec<_>) = indexed.iter().partition(|s| (s.0 + s.1) % 2 == 0);
    let even: Vec<MarginSample> = even.into_iter().map(|s| s.2).collect();
    let odd: Vec<MarginSample> = odd.into_iter().map(|s| s.2).collect();
    let held_out_accuracy = match fit_surface(&even, weighting) {
        Ok(b_even) if !odd.is_empty() => accuracy(&b_even, &odd),
        _ => f64::NAN,
    };
    Ok(StabilityFit {
        b1: b[0],
        b2: b[1],
        b3: b[2],
        b4: b[3],
        rms_error,
        accuracy: accuracy(&b, &all),
        held_out_accuracy,
        grid_spec: *lattice,
        weighting,
    })
}

pub fn fit_stability_surface(
    grid: &GridParams,
    dev: &DeviceParams,
    dist: &Disturbance,
    lattice: &Lattice,
    weighting: FitWeighting,
) -> Result<StabilityFit, FitError> {
    let samples = margin_samples(grid, dev, dist, lattice)?;
    fit_from_samples(&samples, lattice, weighting)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn affine_surface_is_recovered_exactly() {
        let samples: Vec<MarginSample> = (0..5)
            .flat_map(|i| (0..5).map(move |j| (i as f64, j as f64)))
            .map(|(h, d)| MarginSample {
                h,
                d,
                p_star: -0.5 + 0.01 * h - 0.02 * d,
            })
            .collect();
        for w in [FitWeighting::Uniform, FitWeighting::Relative] {
            let b = fit_surface(&samples, w).unwrap();
            assert!(b[3].abs() < 1e-12);
            assert!((b[0] + 0.5).abs() < 1e-12 && (b[1] - 0.01).abs() < 1e-12 && (b[2] + 0.02).abs() < 1e-12);
            assert!((accuracy(&b, &samples) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn degenerate_lattice_is_rejected() {
        let samples: Vec<MarginSample> = (0..6)
            .map(|i| MarginSample {
                h: 3.0,
                d: i as f64,
                p_star: -1.0 - i as f64,
            })
            .collect();
        assert_eq!(fit_surface(&samples, FitWeighting::Uniform), Err(FitError::RankDeficient));
        assert_eq!(fit_surface(&samples[..3], FitWeighting::Uniform), Err(FitError::TooFewPoints(3)));
    }

    #[test]
    fn lattice_points_include_endpoints() {
        let l = Lattice {
            h_min: 10.0,
            h_max: 30.0,
            n_h: 3,
            d_min: 1.0,
            d_max: 2.0,
            n_d: 2,
        };
        let p = l.points();
        assert_eq!(p.len(), 6);
        assert_eq!((p[0].2, p[0].3), (10.0, 1.0));
        assert_eq!((p[5].2, p[5].3), (30.0, 2.0));
    }
}
