//! Momentum space: the scaled Fourier transform, quantum and hybrid momentum densities, h(p).

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use serde::Serialize;

use crate::fields::{floor_value, signed_index, to_wavefunction, FieldState, Grid, Spectral, WaveFunction};
use crate::observables::fisher_information;

/// phi(p) on the conjugate grid `p_j = 2 pi s j / (n dx)`, `j` in `(-n/2, n/2]`, ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentumAmplitude {
    pub p: Vec<f64>,
    pub phi: Vec<Complex64>,
    pub dp: f64,
    pub s_const: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentumDensity {
    pub p: Vec<f64>,
    pub w: Vec<f64>,
    pub dp: f64,
}

impl MomentumDensity {
    pub fn integral(&self) -> f64 {
        self.w.iter().sum::<f64>() * self.dp
    }

    /// Sum of p^k w dp.
    pub fn moment(&self, k: i32) -> f64 {
        self.p.iter().zip(&self.w).map(|(p, w)| p.powi(k) * w).sum::<f64>() * self.dp
    }
}

/// Momentum grid of the discrete transform, ascending.
pub fn conjugate_grid(grid: Grid, s_const: f64) -> (Vec<f64>, f64) {
    let n = grid.n;
    let dp = 2.0 * PI * s_const / (n as f64 * grid.dx());
    let p = (0..n).map(|i| dp * (i as i64 - (n as i64 - 1) / 2) as f64).collect::<Vec<_>>();
    // For even n this runs from -(n/2 - 1) dp to n/2 dp.
    (p, dp)
}

/// phi(p) = (2 pi)^-1/2 integral psi e^{-i p x / s} dx.
pub fn fourier_forward(psi: &WaveFunction) -> MomentumAmplitude {
    let grid = psi.grid;
    let n = grid.n;
    let dx = grid.dx();
    let s = psi.s_const;
    let sp = Spectral::new(n, dx);
    let mut buf = psi.values.clone();
    sp.forward(&mut buf);
    let (p, dp) = conjugate_grid(grid, s);
    let scale = dx / (2.0 * PI).sqrt();
    let mut phi = vec![Complex64::new(0.0, 0.0); n];
    for (j, z) in buf.into_iter().enumerate() {
        let k = sp.k[j];
        let pos = (signed_index(j, n) + (n as i64 - 1) / 2) as usize;
        phi[pos] = z * Complex64::from_polar(scale, -k * grid.x_min);
    }
    MomentumAmplitude { p, phi, dp, s_const: s }
}

/// w = |phi|^2 / s.
pub fn quantum_momentum_density(phi: &MomentumAmplitude) -> MomentumDensity {
    MomentumDensity {
        p: phi.p.clone(),
        w: phi.phi.iter().map(|z| z.norm_sqr() / phi.s_const).collect(),
        dp: phi.dp,
    }
}

/// S' per grid point, read off psi as s Im(psi* psi') / |psi|^2 with a spectral psi'.
/// Zero where rho is below the floor.
pub fn momentum_field(state: &FieldState, s_const: f64) -> Vec<f64> {
    momentum_field_psi(&to_wavefunction(state, s_const))
}

pub fn momentum_field_psi(psi: &WaveFunction) -> Vec<f64> {
    let sp = Spectral::new(psi.grid.n, psi.grid.dx());
    let d = sp.derivative_complex(&psi.values, 1);
    let rho: Vec<f64> = psi.values.iter().map(|z| z.norm_sqr()).collect();
    let floor = floor_value(&rho);
    psi.values
        .iter()
        .zip(&d)
        .zip(&rho)
        .map(|((z, dz), &r)| if r > floor { psi.s_const * (z.conj() * dz).im / r } else { 0.0 })
        .collect()
}

/// Pushforward of rho under x -> S'(x), as a rho dx weighted histogram centred on `p_grid`.
///
/// `p_grid` must be uniformly spaced; mass falling outside the outer bins is dropped.
pub fn classical_momentum_density(state: &FieldState, s_const: f64, p_grid: &[f64]) -> MomentumDensity {
    let g = momentum_field(state, s_const);
    histogram(state, &g, p_grid)
}

fn histogram(state: &FieldState, g: &[f64], p_grid: &[f64]) -> MomentumDensity {
    let grid = state.grid();
    let dx = grid.dx();
    let dp = if p_grid.len() > 1 { p_grid[1] - p_grid[0] } else { 1.0 };
    let mut w = vec![0.0; p_grid.len()];
    let r = &state.rho.values;
    let floor = floor_value(r);
    let last = grid.n - 1;
    for k in 0..grid.n {
        if r[k] <= floor {
            continue;
        }
        let weight = if k == 0 || k == last { 0.5 } else { 1.0 };
        let bin = ((g[k] - p_grid[0]) / dp).round();
        if bin >= 0.0 && (bin as usize) < w.len() {
            w[bin as usize] += weight * r[k] * dx / dp;
        }
    }
    MomentumDensity { p: p_grid.to_vec(), w, dp }
}

/// `bins` centres covering the range of S' over the above-floor support.
pub fn hybrid_grid(state: &FieldState, s_const: f64, bins: usize) -> Vec<f64> {
    let g = momentum_field(state, s_const);
    let floor = floor_value(&state.rho.values);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for (gv, r) in g.iter().zip(&state.rho.values) {
        if *r > floor {
            lo = lo.min(*gv);
            hi = hi.max(*gv);
        }
    }
    let bins = bins.max(1);
    let width = ((hi - lo) / (bins.max(2) - 1) as f64).max(f64::EPSILON * (1.0 + lo.abs()));
    (0..bins).map(|i| lo + i as f64 * width).collect()
}

/// Exact moments of the pushforward: integral of rho (S')^k for k = 0, 1, 2.
pub fn hybrid_moments(state: &FieldState, s_const: f64) -> [f64; 3] {
    let g = momentum_field(state, s_const);
    let grid = state.grid();
    let r = &state.rho.values;
    let m = |k: i32| grid.integrate(&r.iter().zip(&g).map(|(r, g)| r * g.powi(k)).collect::<Vec<_>>());
    [m(0), m(1), m(2)]
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HDiagnostic {
    pub p: Vec<f64>,
    /// Hybrid histogram minus |phi|^2 / s on the transform grid.
    pub h: Vec<f64>,
    /// Moments 0..2 of h, from exact pushforward expectations and spectral quantum moments.
    pub moments: [f64; 3],
    pub hybrid_moments: [f64; 3],
    pub quantum_moments: [f64; 3],
}

pub fn h_diagnostic(state: &FieldState, s_const: f64) -> HDiagnostic {
    let psi = to_wavefunction(state, s_const);
    let quantum = quantum_momentum_density(&fourier_forward(&psi));
    let hybrid = classical_momentum_density(state, s_const, &quantum.p);
    let h = hybrid.w.iter().zip(&quantum.w).map(|(a, b)| a - b).collect();
    let hm = hybrid_moments(state, s_const);
    let qm = [quantum.moment(0), quantum.moment(1), quantum.moment(2)];
    HDiagnostic {
        p: quantum.p,
        h,
        moments: [hm[0] - qm[0], hm[1] - qm[1], hm[2] - qm[2]],
        hybrid_moments: hm,
        quantum_moments: qm,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Kinetic {
    /// Spectral integral of p^2 w / 2m.
    pub total: f64,
    /// integral of rho S'^2 / 2m.
    pub phase_part: f64,
    /// (s^2 / 8m) I[rho].
    pub fisher_part: f64,
}

pub fn kinetic_expectation(psi: &WaveFunction, mass: f64) -> Kinetic {
    let w = quantum_momentum_density(&fourier_forward(psi));
    let total = w.moment(2) / (2.0 * mass);
    let g = momentum_field_psi(psi);
    let rho = psi.density();
    let phase_part =
        psi.grid.integrate(&rho.values.iter().zip(&g).map(|(r, g)| r * g * g).collect::<Vec<_>>()) / (2.0 * mass);
    let fisher_part = psi.s_const * psi.s_const / (8.0 * mass) * fisher_information(&rho);
    Kinetic { total, phase_part, fisher_part }
}
