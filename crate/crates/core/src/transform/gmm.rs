//! One-dimensional Gaussian mixtures for mode-specific normalization.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kmeans::kmeans;
use crate::rng;

pub const DEFAULT_MODES: usize = 10;
pub const MAX_EM_ITERATIONS: usize = 300;
pub const EM_TOLERANCE: f64 = 1e-6;
/// Modes whose weight ends up below this are deactivated.
pub const MIN_MODE_WEIGHT: f64 = 0.005;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmParams {
    pub weights: Vec<f64>,
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    pub active: Vec<bool>,
}

impl GmmParams {
    pub fn k(&self) -> usize {
        self.weights.len()
    }

    /// Indices of active modes; the encoded β block has one slot per entry.
    pub fn active_modes(&self) -> Vec<usize> {
        (0..self.k()).filter(|&k| self.active[k]).collect()
    }

    pub fn n_active(&self) -> usize {
        self.active.iter().filter(|&&a| a).count()
    }

    fn single(mean: f64, std: f64, k: usize) -> Self {
        let mut p = Self {
            weights: vec![0.0; k],
            means: vec![mean; k],
            stds: vec![std; k],
            active: vec![false; k],
        };
        p.weights[0] = 1.0;
        p.active[0] = true;
        p
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.k();
        if k == 0 || self.means.len() != k || self.stds.len() != k || self.active.len() != k {
            return Err(Error::Shape(format!("inconsistent mixture with {k} weights")));
        }
        if self.n_active() == 0 {
            return Err(Error::InvalidArgument("mixture has no active mode".into()));
        }
        let total: f64 = self.active_modes().iter().map(|&k| self.weights[k]).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!("active weights sum to {total}")));
        }
        if self.stds.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::InvalidArgument("non-positive mode std".into()));
        }
        Ok(())
    }
}

/// Result of one EM run, with the log-likelihood after every E-step.
#[derive(Debug, Clone)]
pub struct EmFit {
    pub params: GmmParams,
    pub log_likelihood: Vec<f64>,
}

fn std_floor(values: &[f64]) -> f64 {
    let (_, std) = mean_std(values);
    (1e-4 * std).max(1e-6)
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, libm::sqrt(var))
}

fn log_normal(x: f64, mean: f64, std: f64) -> f64 {
    let z = (x - mean) / std;
    -0.5 * z * z - libm::log(std) - LN_SQRT_2PI
}

fn count_distinct(values: &[f64]) -> usize {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    sorted.len()
}

/// Plain EM for exactly `k` components, seeded by k-means++.
pub fn fit_em(values: &[f64], k: usize, seed: u64) -> Result<EmFit> {
    if values.is_empty() {
        return Err(Error::EmptyInput("mixture fit values"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("mixture fit input"));
    }
    if k == 0 {
        return Err(Error::InvalidArgument("mixture needs at least one mode".into()));
    }
    let n = values.len();
    let floor = std_floor(values);
    let points: Vec<Vec<f64>> = values.iter().map(|&v| vec![v]).collect();
    let init = kmeans(&points, k, seed, 100)?;

    let mut weights = vec![0.0; k];
    let mut means: Vec<f64> = init.centroids.iter().map(|c| c[0]).collect();
    let mut sq = vec![0.0; k];
    for (i, &a) in init.assignments.iter().enumerate() {
        weights[a] += 1.0;
        sq[a] += (values[i] - means[a]) * (values[i] - means[a]);
    }
    let mut stds: Vec<f64> = (0..k)
        .map(|c| if weights[c] > 0.0 { libm::sqrt(sq[c] / weights[c]).max(floor) } else { floor })
        .collect();
    for w in &mut weights {
        *w /= n as f64;
    }

    let mut resp = vec![0.0; n * k];
    let mut logp = vec![0.0; k];
    let mut trace = Vec::new();
    for _ in 0..MAX_EM_ITERATIONS {
        // E-step.
        let mut ll = 0.0;
        for (i, &x) in values.iter().enumerate() {
            let mut top = f64::NEG_INFINITY;
            for c in 0..k {
                logp[c] = if weights[c] > 0.0 {
                    libm::log(weights[c]) + log_normal(x, means[c], stds[c])
                } else {
                    f64::NEG_INFINITY
                };
                top = top.max(logp[c]);
            }
            let mut sum = 0.0;
            for c in 0..k {
                let e = libm::exp(logp[c] - top);
                resp[i * k + c] = e;
                sum += e;
            }
            for c in 0..k {
                resp[i * k + c] /= sum;
            }
            ll += top + libm::log(sum);
        }
        if let Some(&prev) = trace.last() {
            let prev: f64 = prev;
            debug_assert!(ll >= prev - 1e-9 * prev.abs().max(1.0), "EM log-likelihood decreased: {prev} -> {ll}");
        }
        let converged = trace.last().is_some_and(|&prev: &f64| ll - prev < EM_TOLERANCE);
        trace.push(ll);
        if converged {
            break;
        }
        // M-step.
        for c in 0..k {
            let nk: f64 = (0..n).map(|i| resp[i * k + c]).sum();
            if nk <= 0.0 {
                weights[c] = 0.0;
                continue;
            }
            let mean = (0..n).map(|i| resp[i * k + c] * values[i]).sum::<f64>() / nk;
            let var = (0..n).map(|i| resp[i * k + c] * (values[i] - mean) * (values[i] - mean)).sum::<f64>() / nk;
            weights[c] = nk / n as f64;
            means[c] = mean;
            stds[c] = libm::sqrt(var).max(floor);
        }
    }
    let active = weights.iter().map(|&w| w > 0.0).collect();
    Ok(EmFit { params: GmmParams { weights, means, stds, active }, log_likelihood: trace })
}

fn bic(ll: f64, k: usize, n: usize) -> f64 {
    -2.0 * ll + (3 * k - 1) as f64 * libm::log(n as f64)
}

/// Fits a mixture with up to `k` modes.
///
/// EM is run for every component count from 1 to `k` and the fit with the
/// lowest BIC is kept; modes lighter than [`MIN_MODE_WEIGHT`] are then
/// deactivated and the remaining weights renormalized. The result always
/// has `k` slots, unused ones inactive.
pub fn fit_gmm(values: &[f64], k: usize, seed: u64) -> Result<GmmParams> {
    if values.is_empty() {
        return Err(Error::EmptyInput("mixture fit values"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("mixture fit input"));
    }
    if k == 0 {
        return Err(Error::InvalidArgument("mixture needs at least one mode".into()));
    }
    let floor = std_floor(values);
    let distinct = count_distinct(values);
    let (mean, std) = mean_std(values);
    if distinct < 2 || k == 1 {
        return Ok(GmmParams::single(mean, std.max(floor), k));
    }

    let n = values.len();
    let mut best: Option<(f64, GmmParams)> = None;
    for c in 1..=k.min(distinct) {
        let fit = if c == 1 {
            let p = GmmParams::single(mean, std.max(floor), 1);
            let ll = values.iter().map(|&x| log_normal(x, p.means[0], p.stds[0])).sum();
            EmFit { params: p, log_likelihood: vec![ll] }
        } else {
            fit_em(values, c, rng::derive_seed(seed, &format!("gmm-{c}")))?
        };
        let score = bic(*fit.log_likelihood.last().unwrap(), c, n);
        if best.as_ref().is_none_or(|(b, _)| score < *b) {
            best = Some((score, fit.params));
        }
    }
    let chosen = best.unwrap().1;

    let mut params = GmmParams {
        weights: vec![0.0; k],
        means: vec![mean; k],
        stds: vec![floor; k],
        active: vec![false; k],
    };
    for c in 0..chosen.k() {
        params.means[c] = chosen.means[c];
        params.stds[c] = chosen.stds[c];
        if chosen.weights[c] >= MIN_MODE_WEIGHT {
            params.weights[c] = chosen.weights[c];
            params.active[c] = true;
        }
    }
    let total: f64 = params.weights.iter().sum();
    for w in &mut params.weights {
        *w /= total;
    }
    Ok(params)
}

/// Posterior mode probabilities over the active modes.
pub fn mode_responsibilities(params: &GmmParams, c: f64) -> Vec<f64> {
    let active = params.active_modes();
    let mut rho: Vec<f64> = active
        .iter()
        .map(|&k| {
            let z = (c - params.means[k]) / params.stds[k];
            params.weights[k] * libm::exp(-0.5 * z * z) / (params.stds[k] * libm::sqrt(core::f64::consts::TAU))
        })
        .collect();
    let total: f64 = rho.iter().sum();
    if total > 0.0 && total.is_finite() {
        for r in &mut rho {
            *r /= total;
        }
    } else {
        let mut nearest = 0;
        for (i, &k) in active.iter().enumerate() {
            if (c - params.means[k]).abs() < (c - params.means[active[nearest]]).abs() {
                nearest = i;
            }
        }
        rho.iter_mut().for_each(|r| *r = 0.0);
        rho[nearest] = 1.0;
    }
    rho
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn constant_column() {
        let p = fit_gmm(&[5.0, 5.0, 5.0], 4, 1).unwrap();
        assert_eq!(p.n_active(), 1);
        let k = p.active_modes()[0];
        assert_eq!(p.means[k], 5.0);
        assert_eq!(p.stds[k], 1e-6);
        p.validate().unwrap();
    }

    #[test]
    fn single_mode_closed_form() {
        let v = [1.0, 2.0, 4.0, 7.0];
        let p = fit_gmm(&v, 1, 3).unwrap();
        assert!((p.means[0] - 3.5).abs() < 1e-9);
        let std = libm::sqrt((6.25 + 2.25 + 0.25 + 12.25) / 4.0);
        assert!((p.stds[0] - std).abs() < 1e-9);
    }

    #[test]
    fn bimodal_recovers_two_modes() {
        let mut r = rng::seeded(11);
        let v: Vec<f64> = (0..500)
            .map(|_| {
                let shift = if r.gen::<bool>() { 10.0 } else { 0.0 };
                shift + rng::standard_normal(&mut r)
            })
            .collect();
        let p = fit_gmm(&v, 4, 5).unwrap();
        assert_eq!(p.n_active(), 2);
        let mut means: Vec<f64> = p.active_modes().iter().map(|&k| p.means[k]).collect();
        means.sort_by(f64::total_cmp);
        assert!(means[0].abs() < 0.3, "{means:?}");
        assert!((means[1] - 10.0).abs() < 0.3, "{means:?}");
        p.validate().unwrap();
    }

    #[test]
    fn em_log_likelihood_monotone() {
        let mut r = rng::seeded(2);
        let v: Vec<f64> = (0..300).map(|i| rng::standard_normal(&mut r) + (i % 3) as f64 * 4.0).collect();
        let fit = fit_em(&v, 3, 9).unwrap();
        for w in fit.log_likelihood.windows(2) {
            assert!(w[1] >= w[0] - 1e-9 * w[0].abs());
        }
    }

    #[test]
    fn responsibilities() {
        let p = GmmParams::single(0.0, 1.0, 1);
        assert_eq!(mode_responsibilities(&p, 3.0), vec![1.0]);

        let two = GmmParams {
            weights: vec![0.5, 0.5],
            means: vec![-2.0, 2.0],
            stds: vec![1.0, 1.0],
            active: vec![true, true],
        };
        let rho = mode_responsibilities(&two, 0.0);
        assert!((rho[0] - 0.5).abs() < 1e-9 && (rho[1] - 0.5).abs() < 1e-9);

        let p = GmmParams {
            weights: vec![0.3, 0.7],
            means: vec![0.0, 10.0],
            stds: vec![1.0, 1.0],
            active: vec![true, true],
        };
        let a = 0.3 * libm::exp(-0.5);
        let b = 0.7 * libm::exp(-40.5);
        let rho = mode_responsibilities(&p, 1.0);
        assert!((rho[0] - a / (a + b)).abs() < 1e-9);
        assert!((rho[1] - b / (a + b)).abs() < 1e-9);

        // Far in the tail every density underflows.
        let rho = mode_responsibilities(&p, 1e6);
        assert_eq!(rho, vec![0.0, 1.0]);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(fit_gmm(&[], 3, 0).is_err());
        assert!(fit_gmm(&[1.0, f64::NAN], 3, 0).is_err());
    }
}
