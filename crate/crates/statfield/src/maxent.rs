//! Constrained entropy maximization: canonical distributions on discrete or gridded landscapes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fields::Grid;

/// Energies on a uniform grid (trapezoid weights) or on a discrete index set (unit weights).
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyLandscape {
    pub energy: Vec<f64>,
    weights: Vec<f64>,
}

impl EnergyLandscape {
    pub fn discrete(energy: Vec<f64>) -> Result<Self> {
        check_energies(&energy)?;
        let weights = vec![1.0; energy.len()];
        Ok(Self { energy, weights })
    }

    pub fn on_grid(grid: Grid, energy: Vec<f64>) -> Result<Self> {
        check_energies(&energy)?;
        if energy.len() != grid.n {
            return Err(Error::Invalid("energy length differs from grid size".into()));
        }
        let dx = grid.dx();
        let mut weights = vec![dx; grid.n];
        weights[0] *= 0.5;
        weights[grid.n - 1] *= 0.5;
        Ok(Self { energy, weights })
    }

    pub fn len(&self) -> usize {
        self.energy.len()
    }

    pub fn is_empty(&self) -> bool {
        self.energy.is_empty()
    }

    /// Integral (or sum) of `f` against the quadrature weights.
    pub fn integrate(&self, f: &[f64]) -> f64 {
        f.iter().zip(&self.weights).map(|(a, w)| a * w).sum()
    }

    fn bounds(&self) -> (f64, f64) {
        let lo = self.energy.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = self.energy.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }

    /// Mean energy under `rho`.
    pub fn mean_energy(&self, rho: &[f64]) -> f64 {
        let v: Vec<f64> = rho.iter().zip(&self.energy).map(|(r, e)| r * e).collect();
        self.integrate(&v)
    }

    /// -integral rho ln rho with 0 ln 0 = 0.
    pub fn entropy(&self, rho: &[f64]) -> f64 {
        let v: Vec<f64> = rho.iter().map(|&r| if r > 0.0 { -r * r.ln() } else { 0.0 }).collect();
        self.integrate(&v)
    }

    pub fn normalization(&self, rho: &[f64]) -> f64 {
        self.integrate(rho)
    }
}

fn check_energies(e: &[f64]) -> Result<()> {
    if e.len() < 2 {
        return Err(Error::Invalid("landscape needs at least two points".into()));
    }
    if e.iter().any(|v| !v.is_finite()) {
        return Err(Error::Invalid("non-finite energy".into()));
    }
    Ok(())
}

/// rho = e^{-lambda2 E} / Z with the exponent shifted by its maximum.
pub fn canonical_distribution(land: &EnergyLandscape, lambda2: f64) -> Vec<f64> {
    let (lo, hi) = land.bounds();
    let shift = if lambda2 >= 0.0 { lo } else { hi };
    let mut rho: Vec<f64> = land.energy.iter().map(|&e| (-lambda2 * (e - shift)).exp()).collect();
    let z = land.integrate(&rho);
    for r in rho.iter_mut() {
        *r /= z;
    }
    rho
}

/// Mean energy and its lambda2-derivative (minus the variance).
fn mean_and_slope(land: &EnergyLandscape, lambda2: f64) -> (f64, f64) {
    let rho = canonical_distribution(land, lambda2);
    let mean = land.mean_energy(&rho);
    let var: Vec<f64> = rho.iter().zip(&land.energy).map(|(r, e)| r * (e - mean) * (e - mean)).collect();
    (mean, -land.integrate(&var))
}

/// Largest |lambda2| * (E_max - E_min) the solver will consider.
const LAMBDA_GUARD: f64 = 700.0;

/// Solves <E>_lambda2 = target by bracketing and safeguarded Newton.
pub fn solve_lambda(land: &EnergyLandscape, target: f64) -> Result<f64> {
    let (lo, hi) = land.bounds();
    let spread = hi - lo;
    if !(target > lo && target < hi) || spread <= 0.0 {
        return Err(Error::OutOfRange { target, lo, hi });
    }
    let guard = LAMBDA_GUARD / spread;
    let f = |l: f64| mean_and_slope(land, l);
    // Mean energy decreases in lambda2, so f(a) > target > f(b) brackets the root.
    let (mut a, mut b) = (-guard, guard);
    if f(a).0 <= target || f(b).0 >= target {
        return Err(Error::OutOfRange { target, lo: f(b).0, hi: f(a).0 });
    }
    let tol = 1e-12 * spread;
    let mut x = 0.0;
    for _ in 0..500 {
        let (m, slope) = f(x);
        let r = m - target;
        if r.abs() <= tol {
            return Ok(x);
        }
        if r > 0.0 {
            a = x;
        } else {
            b = x;
        }
        let newton = if slope < 0.0 { x - r / slope } else { f64::NAN };
        x = if newton.is_finite() && newton > a && newton < b { newton } else { 0.5 * (a + b) };
        if b - a <= f64::EPSILON * (1.0 + x.abs()) {
            break;
        }
    }
    let (m, _) = f(x);
    if (m - target).abs() <= tol * 10.0 {
        Ok(x)
    } else {
        Err(Error::OutOfRange { target, lo, hi })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExtremumReport {
    pub trials: usize,
    pub delta: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub base_value: f64,
    pub max_change: f64,
    pub non_increasing: usize,
    pub pass: bool,
}

/// Checks that the constrained functional
/// K[rho] = S[rho] - lambda1 (integral rho - 1) - lambda2 (integral rho E - E*)
/// does not increase under `trials` random normalization-preserving perturbations
/// rho* (1 + delta (u - <u>)), u uniform in [-1, 1].
///
/// lambda1 is recovered from stationarity at `rho_star`. For perturbations that also
/// keep the mean energy, the change of K is the change of the entropy.
pub fn extremum_check(
    land: &EnergyLandscape,
    rho_star: &[f64],
    lambda2: f64,
    trials: usize,
    delta: f64,
    seed: u64,
) -> ExtremumReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let e_star = land.mean_energy(rho_star);
    let n = land.len();
    let lambda1 = (0..n).map(|k| -1.0 - rho_star[k].ln() - lambda2 * land.energy[k]).sum::<f64>() / n as f64;
    let k_of = |rho: &[f64]| {
        land.entropy(rho)
            - lambda1 * (land.normalization(rho) - 1.0)
            - lambda2 * (land.mean_energy(rho) - e_star)
    };
    let base = k_of(rho_star);
    let mut max_change = if trials == 0 { 0.0 } else { f64::NEG_INFINITY };
    let mut non_increasing = 0;
    for _ in 0..trials {
        let u: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let weighted: Vec<f64> = u.iter().zip(rho_star).map(|(a, r)| a * r).collect();
        let ubar = land.integrate(&weighted);
        let trial: Vec<f64> = rho_star.iter().zip(&u).map(|(r, a)| r * (1.0 + delta * (a - ubar))).collect();
        let change = k_of(&trial) - base;
        max_change = max_change.max(change);
        // Concavity makes the change negative at second order; allow round-off.
        if change <= 1e-14 * (1.0 + base.abs()) {
            non_increasing += 1;
        }
    }
    ExtremumReport {
        trials,
        delta,
        lambda1,
        lambda2,
        base_value: base,
        max_change,
        non_increasing,
        pass: non_increasing == trials,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::LN_2;

    #[test]
    fn constant_energy_or_zero_lambda_is_uniform() {
        let flat = EnergyLandscape::discrete(vec![2.0; 5]).unwrap();
        for l in [-3.0, 0.0, 4.0] {
            assert!(canonical_distribution(&flat, l).iter().all(|&p| (p - 0.2).abs() < 1e-15));
        }
        let land = EnergyLandscape::discrete(vec![0.0, 1.0, 5.0]).unwrap();
        assert!(canonical_distribution(&land, 0.0).iter().all(|&p| (p - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn two_level_closed_form() {
        let eps = 0.37;
        let land = EnergyLandscape::discrete(vec![0.0, eps]).unwrap();
        let p = canonical_distribution(&land, LN_2 / eps);
        assert!((p[0] - 2.0 / 3.0).abs() < 1e-15 && (p[1] - 1.0 / 3.0).abs() < 1e-15);
        let l = solve_lambda(&land, eps / 3.0).unwrap();
        assert!((l - LN_2 / eps).abs() < 1e-10);
    }

    #[test]
    fn infinite_temperature_mean_gives_zero() {
        let land = EnergyLandscape::discrete(vec![0.0, 1.0, 3.0, 4.5]).unwrap();
        let mean = land.mean_energy(&canonical_distribution(&land, 0.0));
        assert!(solve_lambda(&land, mean).unwrap().abs() < 1e-12);
    }

    #[test]
    fn out_of_range_targets() {
        let land = EnergyLandscape::discrete(vec![0.0, 1.0]).unwrap();
        assert!(matches!(solve_lambda(&land, 0.0), Err(Error::OutOfRange { .. })));
        assert!(matches!(solve_lambda(&land, 1.5), Err(Error::OutOfRange { .. })));
        // Within range but beyond the exponent guard.
        assert!(matches!(solve_lambda(&land, 1e-320), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn extremum_two_level_and_zero_delta() {
        let land = EnergyLandscape::discrete(vec![0.0, 1.0, 2.0]).unwrap();
        let l = solve_lambda(&land, 0.7).unwrap();
        let rho = canonical_distribution(&land, l);
        let rep = extremum_check(&land, &rho, l, 100, 1e-3, 7);
        assert!(rep.pass, "{rep:?}");
        assert!(rep.max_change < 0.0);
        let zero = extremum_check(&land, &rho, l, 10, 0.0, 7);
        assert_eq!(zero.max_change, 0.0);
        let two = EnergyLandscape::discrete(vec![0.0, 0.5]).unwrap();
        let l2 = solve_lambda(&two, 0.5 / 3.0).unwrap();
        let rep = extremum_check(&two, &canonical_distribution(&two, l2), l2, 100, 1e-3, 11);
        assert!(rep.pass && rep.max_change < 0.0, "{rep:?}");
    }

    #[test]
    fn unconstrained_maximum_is_uniform() {
        let n = 6;
        let land = EnergyLandscape::discrete((0..n).map(|i| i as f64).collect()).unwrap();
        let rho = canonical_distribution(&land, 0.0);
        assert!((land.entropy(&rho) - (n as f64).ln()).abs() < 1e-14);
    }

    #[test]
    fn grid_landscape_round_trip() {
        let g = Grid::new(-4.0, 4.0, 256).unwrap();
        let e: Vec<f64> = g.points().iter().map(|x| 0.5 * x * x).collect();
        let land = EnergyLandscape::on_grid(g, e).unwrap();
        let l = solve_lambda(&land, 0.25).unwrap();
        let rho = canonical_distribution(&land, l);
        assert!((land.normalization(&rho) - 1.0).abs() < 1e-14);
        assert!((land.mean_energy(&rho) - 0.25).abs() < 1e-12 * 8.0);
    }
}
