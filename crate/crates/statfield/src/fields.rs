//! Uniform grids, sampled fields, derivatives and the (rho, S) <-> psi maps.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Densities below `DENSITY_FLOOR * max(rho)` are treated as numerical zeros.
pub const DENSITY_FLOOR: f64 = 1e-12;

/// Uniform grid `x_k = x_min + k dx`, `k = 0..n`, with `dx = (x_max - x_min) / n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub x_min: f64,
    pub x_max: f64,
    pub n: usize,
}

impl Grid {
    pub fn new(x_min: f64, x_max: f64, n: usize) -> Result<Self> {
        if n < 8 {
            return Err(Error::Grid(format!("need at least 8 points, got {n}")));
        }
        if !(x_min.is_finite() && x_max.is_finite()) || x_max <= x_min {
            return Err(Error::Grid(format!("bad interval [{x_min}, {x_max}]")));
        }
        Ok(Self { x_min, x_max, n })
    }

    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / self.n as f64
    }

    pub fn x(&self, k: usize) -> f64 {
        self.x_min + k as f64 * self.dx()
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n).map(|k| self.x(k)).collect()
    }

    /// Trapezoid rule over the sampled points.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        trapezoid(values, self.dx())
    }
}

pub fn trapezoid(values: &[f64], dx: f64) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let inner: f64 = values[1..n - 1].iter().sum();
    (inner + 0.5 * (values[0] + values[n - 1])) * dx
}

/// Real samples on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub grid: Grid,
    pub values: Vec<f64>,
}

impl Field {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n {
            return Err(Error::Invalid(format!(
                "{} values for a {}-point grid",
                values.len(),
                grid.n
            )));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Invalid(format!("non-finite value at index {k}")));
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> f64) -> Self {
        let values = grid.points().into_iter().map(f).collect();
        Self { grid, values }
    }

    pub fn zeros(grid: Grid) -> Self {
        Self { grid, values: vec![0.0; grid.n] }
    }

    pub fn integral(&self) -> f64 {
        self.grid.integrate(&self.values)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { grid: self.grid, values: self.values.iter().map(|&v| f(v)).collect() }
    }

    /// Checks the density invariants and rescales to unit trapezoid integral.
    pub fn normalized_density(&self) -> Result<Self> {
        if let Some(k) = self.values.iter().position(|&v| v < 0.0) {
            return Err(Error::Invalid(format!("negative density at index {k}")));
        }
        let norm = self.integral();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::Invalid("density has zero or non-finite mass".into()));
        }
        Ok(self.map(|v| v / norm))
    }
}

/// Absolute floor for a density sample vector.
pub fn floor_value(rho: &[f64]) -> f64 {
    DENSITY_FLOOR * rho.iter().cloned().fold(0.0, f64::max)
}

/// First and last indices with `rho` above the floor.
pub fn support_window(rho: &[f64]) -> Option<(usize, usize)> {
    let floor = floor_value(rho);
    let first = rho.iter().position(|&r| r > floor)?;
    let last = rho.iter().rposition(|&r| r > floor)?;
    Some((first, last))
}

/// The density/phase pair at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldState {
    pub rho: Field,
    pub phase: Field,
    pub t: f64,
}

impl FieldState {
    pub fn new(rho: Field, phase: Field, t: f64) -> Result<Self> {
        if rho.grid != phase.grid {
            return Err(Error::Invalid("rho and S live on different grids".into()));
        }
        Ok(Self { rho: rho.normalized_density()?, phase, t })
    }

    pub fn grid(&self) -> Grid {
        self.rho.grid
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WaveFunction {
    pub grid: Grid,
    pub values: Vec<Complex64>,
    pub t: f64,
    pub s_const: f64,
}

impl WaveFunction {
    pub fn density(&self) -> Field {
        Field { grid: self.grid, values: self.values.iter().map(|z| z.norm_sqr()).collect() }
    }

    pub fn norm(&self) -> f64 {
        self.density().integral()
    }
}

pub fn to_wavefunction(state: &FieldState, s_const: f64) -> WaveFunction {
    let values = state
        .rho
        .values
        .iter()
        .zip(&state.phase.values)
        .map(|(&r, &s)| Complex64::from_polar(r.sqrt(), s / s_const))
        .collect();
    WaveFunction { grid: state.grid(), values, t: state.t, s_const }
}

/// How `from_wavefunction` treats sub-floor points.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Unwrap {
    /// Every point between the first and last above-floor point must be above the floor.
    Strict,
    /// Unwrap only the contiguous above-floor run around the density maximum.
    MainLobe,
}

pub fn from_wavefunction(psi: &WaveFunction, policy: Unwrap) -> Result<FieldState> {
    let grid = psi.grid;
    let rho: Vec<f64> = psi.values.iter().map(|z| z.norm_sqr()).collect();
    let floor = floor_value(&rho);
    let (a, b) = match policy {
        Unwrap::Strict => {
            let (a, b) = support_window(&rho)
                .ok_or_else(|| Error::Invalid("wavefunction vanishes identically".into()))?;
            if let Some(k) = (a..=b).find(|&k| rho[k] <= floor) {
                return Err(Error::Node { index: k, x: grid.x(k) });
            }
            (a, b)
        }
        Unwrap::MainLobe => {
            let peak = argmax(&rho);
            let mut a = peak;
            while a > 0 && rho[a - 1] > floor {
                a -= 1;
            }
            let mut b = peak;
            while b + 1 < rho.len() && rho[b + 1] > floor {
                b += 1;
            }
            (a, b)
        }
    };
    let mut s = vec![0.0; grid.n];
    for k in a + 1..=b {
        let step = (psi.values[k] * psi.values[k - 1].conj()).arg();
        s[k] = s[k - 1] + psi.s_const * step;
    }
    for k in b + 1..grid.n {
        s[k] = s[b];
    }
    let rho = Field { grid, values: rho }.normalized_density()?;
    Ok(FieldState { rho, phase: Field { grid, values: s }, t: psi.t })
}

const EXTRAP_POINTS: usize = 8;

/// Replaces `f` outside `[a, b]` by least-squares quadratics through the
/// `EXTRAP_POINTS` samples nearest each window edge.
pub(crate) fn extrapolate_outside(f: &mut [f64], dx: f64, a: usize, b: usize) {
    let n = f.len();
    let k = EXTRAP_POINTS.min(b + 1 - a);
    if a > 0 {
        let c = quadratic_fit(&f[a..a + k], dx);
        for i in 0..a {
            let t = -((a - i) as f64) * dx;
            f[i] = c[0] + t * (c[1] + t * c[2]);
        }
    }
    if b + 1 < n {
        let window: Vec<f64> = f[b + 1 - k..=b].iter().rev().cloned().collect();
        let c = quadratic_fit(&window, -dx);
        for i in b + 1..n {
            let t = (i - b) as f64 * dx;
            f[i] = c[0] + t * (c[1] + t * c[2]);
        }
    }
}

/// Fit `y_j ~ c0 + c1 t + c2 t^2` with `t_j = j h`; degrades to lower degree for short samples.
fn quadratic_fit(y: &[f64], h: f64) -> [f64; 3] {
    match y.len() {
        0 => return [0.0; 3],
        1 => return [y[0], 0.0, 0.0],
        2 => return [y[0], (y[1] - y[0]) / h, 0.0],
        _ => {}
    }
    let mut m = [[0.0; 3]; 3];
    let mut r = [0.0; 3];
    for (j, &v) in y.iter().enumerate() {
        let t = j as f64 * h;
        let p = [1.0, t, t * t];
        for i in 0..3 {
            r[i] += p[i] * v;
            for l in 0..3 {
                m[i][l] += p[i] * p[l];
            }
        }
    }
    solve3(m, r)
}

fn solve3(mut m: [[f64; 3]; 3], mut r: [f64; 3]) -> [f64; 3] {
    for c in 0..3 {
        let p = (c..3).max_by(|&i, &j| m[i][c].abs().total_cmp(&m[j][c].abs())).unwrap();
        m.swap(c, p);
        r.swap(c, p);
        for i in c + 1..3 {
            let f = m[i][c] / m[c][c];
            for l in c..3 {
                m[i][l] -= f * m[c][l];
            }
            r[i] -= f * r[c];
        }
    }
    let mut x = [0.0; 3];
    for c in (0..3).rev() {
        let s: f64 = (c + 1..3).map(|l| m[c][l] * x[l]).sum();
        x[c] = (r[c] - s) / m[c][c];
    }
    x
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (k, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = k;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Central,
    Spectral,
}

pub fn derivative(field: &Field, order: u8, scheme: Scheme) -> Result<Field> {
    let dx = field.grid.dx();
    let values = match (scheme, order) {
        (Scheme::Central, 1) => central_d1(&field.values, dx),
        (Scheme::Central, 2) => central_d2(&field.values, dx),
        (Scheme::Spectral, 1 | 2) => Spectral::new(field.grid.n, dx).derivative_real(&field.values, order),
        _ => return Err(Error::Invalid(format!("derivative order {order} not supported"))),
    };
    Ok(Field { grid: field.grid, values })
}

/// Second-order central first derivative with one-sided second-order ends.
pub fn central_d1(f: &[f64], dx: f64) -> Vec<f64> {
    let n = f.len();
    let mut g = vec![0.0; n];
    for i in 1..n - 1 {
        g[i] = (f[i + 1] - f[i - 1]) / (2.0 * dx);
    }
    g[0] = (-3.0 * f[0] + 4.0 * f[1] - f[2]) / (2.0 * dx);
    g[n - 1] = (3.0 * f[n - 1] - 4.0 * f[n - 2] + f[n - 3]) / (2.0 * dx);
    g
}

/// Second-order central second derivative; the end closures are exact on cubics.
pub fn central_d2(f: &[f64], dx: f64) -> Vec<f64> {
    let n = f.len();
    let h2 = dx * dx;
    let mut g = vec![0.0; n];
    for i in 1..n - 1 {
        g[i] = (f[i + 1] - 2.0 * f[i] + f[i - 1]) / h2;
    }
    g[0] = (2.0 * f[0] - 5.0 * f[1] + 4.0 * f[2] - f[3]) / h2;
    g[n - 1] = (2.0 * f[n - 1] - 5.0 * f[n - 2] + 4.0 * f[n - 3] - f[n - 4]) / h2;
    g
}

/// Cached FFT plans and angular wavenumbers for one grid size.
#[derive(Clone)]
pub(crate) struct Spectral {
    pub n: usize,
    pub k: Vec<f64>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl Spectral {
    pub fn new(n: usize, dx: f64) -> Self {
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        let k = (0..n).map(|j| 2.0 * PI * signed_index(j, n) as f64 / (n as f64 * dx)).collect();
        Self { n, k, fwd, inv }
    }

    pub fn forward(&self, buf: &mut [Complex64]) {
        self.fwd.process(buf);
    }

    /// Inverse transform including the 1/n factor.
    pub fn inverse(&self, buf: &mut [Complex64]) {
        self.inv.process(buf);
        let scale = 1.0 / self.n as f64;
        for z in buf.iter_mut() {
            *z *= scale;
        }
    }

    pub fn derivative_complex(&self, f: &[Complex64], order: u8) -> Vec<Complex64> {
        let mut buf = f.to_vec();
        self.forward(&mut buf);
        let nyquist = self.n % 2 == 0;
        for (j, z) in buf.iter_mut().enumerate() {
            let k = self.k[j];
            *z *= match order {
                1 if nyquist && j == self.n / 2 => Complex64::new(0.0, 0.0),
                1 => Complex64::new(0.0, k),
                _ => Complex64::new(-k * k, 0.0),
            };
        }
        self.inverse(&mut buf);
        buf
    }

    pub fn derivative_real(&self, f: &[f64], order: u8) -> Vec<f64> {
        let z: Vec<Complex64> = f.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.derivative_complex(&z, order).into_iter().map(|z| z.re).collect()
    }
}

/// FFT bin `j` mapped to the symmetric range `(-n/2, n/2]`.
pub(crate) fn signed_index(j: usize, n: usize) -> i64 {
    if j <= n / 2 {
        j as i64
    } else {
        j as i64 - n as i64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayEntry {
    pub name: &'static str,
    pub max_abs: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayReport {
    pub tol: f64,
    pub entries: Vec<DecayEntry>,
    pub pass: bool,
}

/// Evaluates rho*A at the outermost 5% of points for A in {1, V, dS/dt, x S', S'^2}.
pub fn check_decay(state: &FieldState, potential: &Field, ds_dt: &Field, tol: f64) -> DecayReport {
    let grid = state.grid();
    let n = grid.n;
    let edge = ((0.025 * n as f64).ceil() as usize).max(1);
    let sp = central_d1(&state.phase.values, grid.dx());
    let rho = &state.rho.values;
    let probes: [(&'static str, Box<dyn Fn(usize) -> f64>); 5] = [
        ("rho", Box::new(|_| 1.0)),
        ("rho*V", Box::new(|k| potential.values[k])),
        ("rho*dS/dt", Box::new(|k| ds_dt.values[k])),
        ("rho*x*S'", Box::new(|k| grid.x(k) * sp[k])),
        ("rho*S'^2", Box::new(|k| sp[k] * sp[k])),
    ];
    let entries: Vec<DecayEntry> = probes
        .iter()
        .map(|(name, a)| {
            let max_abs = (0..edge)
                .chain(n - edge..n)
                .map(|k| (rho[k] * a(k)).abs())
                .fold(0.0, f64::max);
            DecayEntry { name, max_abs, pass: max_abs <= tol }
        })
        .collect();
    let pass = entries.iter().all(|e| e.pass);
    DecayReport { tol, entries, pass }
}

/// Normalized Gaussian density samples.
pub fn gaussian(grid: Grid, mu: f64, sigma: f64) -> Field {
    let f = Field::from_fn(grid, |x| (-(x - mu).powi(2) / (2.0 * sigma * sigma)).exp());
    f.normalized_density().expect("gaussian samples are positive")
}
