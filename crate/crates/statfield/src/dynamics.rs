//! Time evolution: continuity plus generalized Hamilton-Jacobi for any coupling, a split-step
//! Schrodinger propagator, and a conservative finite-volume scheme for barotropic couplings.

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::coupling::{l0_from_log, CouplingSpec};
use crate::error::{Error, Result};
use crate::fields::{
    central_d1, central_d2, extrapolate_outside, floor_value, from_wavefunction, to_wavefunction, trapezoid,
    Field, FieldState, Grid, Spectral, Unwrap, WaveFunction, DENSITY_FLOOR,
};
use crate::momentum::{kinetic_expectation, momentum_field_psi};
use crate::observables::{ehrenfest_residuals, fisher_information, means, shannon_entropy, ObservableRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Propagator {
    /// Method of lines on (ln rho, S) with classical RK4.
    Rk4,
    /// Strang-split spectral Schrodinger propagation (quantum coupling only).
    SplitStep,
    /// Conservative (rho, rho v) Lax-Friedrichs scheme (classical or repulsive power law).
    FiniteVolume,
}

/// Which momentum density defines the kinetic energy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentumRule {
    /// w = |phi|^2 / s, so T = <S'^2>/2m + (s^2/8m) I.
    Quantum,
    /// Pushforward of rho under S', so T = <S'^2>/2m.
    Hybrid,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvolutionConfig {
    pub dt: f64,
    pub t_final: f64,
    pub record_every: usize,
    pub scheme: Propagator,
    pub potential: Field,
    pub coupling: CouplingSpec,
    pub mass: f64,
    pub s_const: f64,
    pub momentum_rule: MomentumRule,
}

/// Per-step relative mass change above which rk4 stops.
pub const NORM_TOL: f64 = 1e-6;
/// Magnitude guard on ln rho and S.
pub const OVERFLOW_GUARD: f64 = 1e12;
/// Fourth-order damping strength, in units of s dx^2 / m.
pub const HYPERVISCOSITY: f64 = 0.02;

impl EvolutionConfig {
    /// Validates and returns warnings.
    pub fn validate(&self) -> Result<Vec<String>> {
        self.coupling.validate()?;
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Invalid("dt must be positive".into()));
        }
        if !(self.t_final >= 0.0 && self.t_final.is_finite()) {
            return Err(Error::Invalid("t_final must be non-negative".into()));
        }
        if self.record_every == 0 {
            return Err(Error::Invalid("record_every must be >= 1".into()));
        }
        if !(self.mass > 0.0 && self.s_const > 0.0) {
            return Err(Error::Invalid("mass and s_const must be positive".into()));
        }
        let mut warnings = Vec::new();
        match self.scheme {
            Propagator::SplitStep => match self.coupling {
                CouplingSpec::Quantum { hbar_eff, mass } if hbar_eff == self.s_const && mass == self.mass => {}
                _ => {
                    return Err(Error::Invalid(
                        "split_step needs a quantum coupling with hbar_eff = s_const and matching mass".into(),
                    ))
                }
            },
            Propagator::FiniteVolume => match self.coupling {
                CouplingSpec::Classical => {}
                CouplingSpec::PowerLaw { coeff, .. } if coeff <= 0.0 => {}
                _ => {
                    return Err(Error::Invalid(
                        "finite_volume supports classical and power-law couplings with coeff <= 0".into(),
                    ))
                }
            },
            Propagator::Rk4 => {
                let limit = 0.2 * self.mass * self.potential.grid.dx().powi(2) / self.s_const;
                if self.dt > limit {
                    warnings.push(format!("dt = {} exceeds the rk4 stability guide 0.2 m dx^2/s = {limit}", self.dt));
                }
            }
        }
        Ok(warnings)
    }

    fn grid(&self) -> Grid {
        self.potential.grid
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Snapshot {
    Fields(FieldState),
    /// psi with its (rho, S) view on the main lobe.
    Wave { psi: WaveFunction, view: Option<FieldState> },
    /// Finite-volume state; `state.phase` is the integral of m j / rho.
    Fluid { state: FieldState, flux: Field },
}

impl Snapshot {
    pub fn t(&self) -> f64 {
        match self {
            Snapshot::Fields(s) => s.t,
            Snapshot::Wave { psi, .. } => psi.t,
            Snapshot::Fluid { state, .. } => state.t,
        }
    }

    pub fn field_state(&self) -> Option<&FieldState> {
        match self {
            Snapshot::Fields(s) => Some(s),
            Snapshot::Wave { view, .. } => view.as_ref(),
            Snapshot::Fluid { state, .. } => Some(state),
        }
    }

    pub fn density(&self) -> Field {
        match self {
            Snapshot::Fields(s) | Snapshot::Fluid { state: s, .. } => s.rho.clone(),
            Snapshot::Wave { psi, .. } => psi.density(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub snapshots: Vec<Snapshot>,
    pub records: Vec<ObservableRecord>,
    pub warnings: Vec<String>,
}

/// Index window of above-floor points; errors if a sub-floor point lies inside it.
fn node_free_window(rho: &[f64], grid: Grid, t: f64) -> Result<(usize, usize)> {
    let floor = floor_value(rho);
    let a = rho.iter().position(|&r| r > floor).ok_or_else(|| Error::BlowUp { t, what: "density vanished".into() })?;
    let b = rho.iter().rposition(|&r| r > floor).unwrap_or(a);
    if let Some(k) = (a..=b).find(|&k| rho[k] <= floor) {
        return Err(Error::Node { index: k, x: grid.x(k) });
    }
    Ok((a, b))
}

/// Right-hand side in log form on the window `[a, b]`; `ell`, `s` are extrapolated outside it.
struct LogRhs<'a> {
    cfg: &'a EvolutionConfig,
    dx: f64,
}

impl LogRhs<'_> {
    fn eval(&self, ell: &[f64], s: &[f64], a: usize, b: usize) -> (Vec<f64>, Vec<f64>) {
        let n = ell.len();
        let m = self.cfg.mass;
        let mut l = ell.to_vec();
        let mut ph = s.to_vec();
        extrapolate_outside(&mut l, self.dx, a, b);
        extrapolate_outside(&mut ph, self.dx, a, b);
        let sp = central_d1(&ph, self.dx);
        let spp = central_d2(&ph, self.dx);
        let lp = central_d1(&l, self.dx);
        let lpp = central_d2(&l, self.dx);
        let v = &self.cfg.potential.values;
        let mut dl = vec![0.0; n];
        let mut ds = vec![0.0; n];
        for i in a..=b {
            dl[i] = -(spp[i] + lp[i] * sp[i]) / m;
            let l0 = l0_from_log(&self.cfg.coupling, l[i].exp(), lp[i], lpp[i]);
            ds[i] = l0 - sp[i] * sp[i] / (2.0 * m) - v[i];
        }
        let c4 = HYPERVISCOSITY * self.cfg.s_const / (m * self.dx * self.dx);
        let lo = a.max(2);
        let hi = b.min(n.saturating_sub(3));
        for i in lo..=hi {
            dl[i] -= c4 * fourth_difference(&l, i);
            ds[i] -= c4 * fourth_difference(&ph, i);
        }
        (dl, ds)
    }
}

fn fourth_difference(f: &[f64], i: usize) -> f64 {
    f[i + 2] - 4.0 * f[i + 1] + 6.0 * f[i] - 4.0 * f[i - 1] + f[i - 2]
}

/// Continuity and Hamilton-Jacobi rates: rho_t = -(rho S'/m)', S_t = L0 - S'^2/2m - V.
///
/// rho_t is in flux form; the rk4 propagator steps the equivalent equation for ln rho.
pub fn rhs(state: &FieldState, cfg: &EvolutionConfig) -> Result<(Field, Field)> {
    let grid = state.grid();
    let (a, b) = node_free_window(&state.rho.values, grid, state.t)?;
    let ell = log_density(&state.rho.values, a, b, grid.dx());
    let (_, ds) = LogRhs { cfg, dx: grid.dx() }.eval(&ell, &state.phase.values, a, b);
    let mut phase = state.phase.values.clone();
    extrapolate_outside(&mut phase, grid.dx(), a, b);
    let sp = central_d1(&phase, grid.dx());
    let flux: Vec<f64> = state.rho.values.iter().zip(&sp).map(|(r, p)| r * p / cfg.mass).collect();
    let drho = central_d1(&flux, grid.dx()).into_iter().map(|v| -v).collect();
    Ok((Field { grid, values: drho }, Field { grid, values: ds }))
}

fn log_density(rho: &[f64], a: usize, b: usize, dx: f64) -> Vec<f64> {
    let mut ell: Vec<f64> = rho.iter().map(|&r| if r > 0.0 { r.ln() } else { 0.0 }).collect();
    extrapolate_outside(&mut ell, dx, a, b);
    ell
}

/// Internal rk4 state: ln rho and S.
struct LogState {
    ell: Vec<f64>,
    s: Vec<f64>,
    t: f64,
}

impl LogState {
    fn from_state(state: &FieldState) -> Result<Self> {
        let grid = state.grid();
        let (a, b) = node_free_window(&state.rho.values, grid, state.t)?;
        let ell = log_density(&state.rho.values, a, b, grid.dx());
        let mut s = state.phase.values.clone();
        extrapolate_outside(&mut s, grid.dx(), a, b);
        Ok(Self { ell, s, t: state.t })
    }

    fn window(&self, grid: Grid) -> Result<(usize, usize)> {
        let top = self.ell.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let cut = top + DENSITY_FLOOR.ln();
        let a = self.ell.iter().position(|&l| l > cut).unwrap_or(0);
        let b = self.ell.iter().rposition(|&l| l > cut).unwrap_or(a);
        if let Some(k) = (a..=b).find(|&k| self.ell[k] <= cut) {
            return Err(Error::Node { index: k, x: grid.x(k) });
        }
        Ok((a, b))
    }

    fn to_state(&self, grid: Grid) -> FieldState {
        let rho = Field { grid, values: self.ell.iter().map(|l| l.exp()).collect() };
        let norm = rho.integral();
        FieldState { rho: rho.map(|v| v / norm), phase: Field { grid, values: self.s.clone() }, t: self.t }
    }

    fn step(&mut self, cfg: &EvolutionConfig, dt: f64) -> Result<()> {
        let grid = cfg.grid();
        let dx = grid.dx();
        let (a, b) = self.window(grid)?;
        let f = LogRhs { cfg, dx };
        let axpy = |x: &[f64], k: &[f64], h: f64| -> Vec<f64> { x.iter().zip(k).map(|(x, k)| x + h * k).collect() };
        let k1 = f.eval(&self.ell, &self.s, a, b);
        let k2 = f.eval(&axpy(&self.ell, &k1.0, dt / 2.0), &axpy(&self.s, &k1.1, dt / 2.0), a, b);
        let k3 = f.eval(&axpy(&self.ell, &k2.0, dt / 2.0), &axpy(&self.s, &k2.1, dt / 2.0), a, b);
        let k4 = f.eval(&axpy(&self.ell, &k3.0, dt), &axpy(&self.s, &k3.1, dt), a, b);
        for i in 0..self.ell.len() {
            self.ell[i] += dt / 6.0 * (k1.0[i] + 2.0 * k2.0[i] + 2.0 * k3.0[i] + k4.0[i]);
            self.s[i] += dt / 6.0 * (k1.1[i] + 2.0 * k2.1[i] + 2.0 * k3.1[i] + k4.1[i]);
        }
        self.t += dt;
        extrapolate_outside(&mut self.ell, dx, a, b);
        extrapolate_outside(&mut self.s, dx, a, b);
        let bad = self.ell.iter().chain(&self.s).any(|v| !v.is_finite() || v.abs() > OVERFLOW_GUARD);
        if bad {
            return Err(Error::BlowUp { t: self.t, what: "ln rho or S left the overflow guard".into() });
        }
        let mass: Vec<f64> = self.ell.iter().map(|l| l.exp()).collect();
        let norm = trapezoid(&mass, dx);
        if !norm.is_finite() || (norm - 1.0).abs() > NORM_TOL {
            return Err(Error::NormDrift { t: self.t, drift: norm - 1.0 });
        }
        let shift = norm.ln();
        for l in self.ell.iter_mut() {
            *l -= shift;
        }
        Ok(())
    }
}

/// One classical RK4 step of the (rho, S) system.
pub fn step_rk4(state: &FieldState, cfg: &EvolutionConfig) -> Result<FieldState> {
    if cfg.dt == 0.0 {
        return Ok(state.clone());
    }
    let mut ls = LogState::from_state(state)?;
    ls.step(cfg, cfg.dt)?;
    Ok(ls.to_state(state.grid()))
}

/// Strang splitting exp(-iV dt/2s) F^-1 exp(-i s k^2 dt/2m) F exp(-iV dt/2s).
pub struct SplitStep {
    spectral: Spectral,
    half_potential: Vec<Complex64>,
    kinetic: Vec<Complex64>,
}

impl SplitStep {
    pub fn new(grid: Grid, potential: &[f64], dt: f64, mass: f64, s_const: f64) -> Self {
        let spectral = Spectral::new(grid.n, grid.dx());
        let half_potential = potential.iter().map(|v| unit_phase(-v * dt / (2.0 * s_const))).collect();
        let kinetic = spectral.k.iter().map(|k| unit_phase(-s_const * k * k * dt / (2.0 * mass))).collect();
        Self { spectral, half_potential, kinetic }
    }

    pub fn apply(&self, psi: &mut [Complex64]) {
        for (z, p) in psi.iter_mut().zip(&self.half_potential) {
            *z *= p;
        }
        self.spectral.forward(psi);
        for (z, k) in psi.iter_mut().zip(&self.kinetic) {
            *z *= k;
        }
        self.spectral.inverse(psi);
        for (z, p) in psi.iter_mut().zip(&self.half_potential) {
            *z *= p;
        }
    }
}

/// e^{i theta} with one Newton correction of its modulus, so repeated products do not drift in norm.
fn unit_phase(theta: f64) -> Complex64 {
    let z = Complex64::from_polar(1.0, theta);
    z * (1.5 - 0.5 * z.norm_sqr())
}

pub fn split_step_schrodinger(psi: &WaveFunction, potential: &Field, dt: f64, mass: f64) -> WaveFunction {
    let stepper = SplitStep::new(psi.grid, &potential.values, dt, mass, psi.s_const);
    let mut out = psi.clone();
    stepper.apply(&mut out.values);
    out.t += dt;
    out
}

/// Conservative barotropic fluid on the grid: rho and j = rho v.
struct Fluid {
    rho: Vec<f64>,
    j: Vec<f64>,
    t: f64,
}

/// Density below this fraction of the maximum carries no velocity.
const FLUID_VACUUM: f64 = 1e-14;

impl Fluid {
    fn pressure_params(cfg: &EvolutionConfig) -> (f64, i32) {
        match cfg.coupling {
            CouplingSpec::PowerLaw { n, coeff } => (-coeff * (n as f64 - 1.0) / cfg.mass, n as i32),
            _ => (0.0, 1),
        }
    }

    fn velocity(rho: &[f64], j: &[f64]) -> Vec<f64> {
        let eps = FLUID_VACUUM * rho.iter().cloned().fold(0.0, f64::max);
        rho.iter().zip(j).map(|(&r, &q)| if r > eps { q / r } else { 0.0 }).collect()
    }

    fn max_speed(cfg: &EvolutionConfig, rho: &[f64], j: &[f64]) -> f64 {
        let (k, n) = Self::pressure_params(cfg);
        let v = Self::velocity(rho, j);
        rho.iter()
            .zip(&v)
            .map(|(&r, &v)| v.abs() + (k * n as f64 * r.max(0.0).powi(n - 1)).max(0.0).sqrt())
            .fold(0.0, f64::max)
    }

    fn rates(cfg: &EvolutionConfig, dvdx: &[f64], rho: &[f64], j: &[f64], dx: f64) -> (Vec<f64>, Vec<f64>) {
        let n = rho.len();
        let (k, p) = Self::pressure_params(cfg);
        let v = Self::velocity(rho, j);
        let a = Self::max_speed(cfg, rho, j);
        let mut f1 = vec![0.0; n + 1];
        let mut f2 = vec![0.0; n + 1];
        let flux2 = |i: usize| j[i] * v[i] + k * rho[i].max(0.0).powi(p);
        for i in 0..n - 1 {
            f1[i + 1] = 0.5 * (j[i] + j[i + 1]) - 0.5 * a * (rho[i + 1] - rho[i]);
            f2[i + 1] = 0.5 * (flux2(i) + flux2(i + 1)) - 0.5 * a * (j[i + 1] - j[i]);
        }
        let mut dr = vec![0.0; n];
        let mut dj = vec![0.0; n];
        for i in 0..n {
            dr[i] = -(f1[i + 1] - f1[i]) / dx;
            dj[i] = -(f2[i + 1] - f2[i]) / dx - rho[i] * dvdx[i] / cfg.mass;
        }
        (dr, dj)
    }

    fn step(&mut self, cfg: &EvolutionConfig, dvdx: &[f64], dt: f64) {
        let dx = cfg.grid().dx();
        let axpy = |x: &[f64], k: &[f64], h: f64| -> Vec<f64> { x.iter().zip(k).map(|(x, k)| x + h * k).collect() };
        let k1 = Self::rates(cfg, dvdx, &self.rho, &self.j, dx);
        let k2 = Self::rates(cfg, dvdx, &axpy(&self.rho, &k1.0, dt / 2.0), &axpy(&self.j, &k1.1, dt / 2.0), dx);
        let k3 = Self::rates(cfg, dvdx, &axpy(&self.rho, &k2.0, dt / 2.0), &axpy(&self.j, &k2.1, dt / 2.0), dx);
        let k4 = Self::rates(cfg, dvdx, &axpy(&self.rho, &k3.0, dt), &axpy(&self.j, &k3.1, dt), dx);
        for i in 0..self.rho.len() {
            self.rho[i] += dt / 6.0 * (k1.0[i] + 2.0 * k2.0[i] + 2.0 * k3.0[i] + k4.0[i]);
            self.j[i] += dt / 6.0 * (k1.1[i] + 2.0 * k2.1[i] + 2.0 * k3.1[i] + k4.1[i]);
        }
        self.t += dt;
    }

    /// Advances by `dt` in CFL-limited sub-steps.
    fn advance(&mut self, cfg: &EvolutionConfig, dvdx: &[f64], dt: f64) -> Result<()> {
        let dx = cfg.grid().dx();
        let mut left = dt;
        while left > 0.0 {
            let a = Self::max_speed(cfg, &self.rho, &self.j).max(f64::MIN_POSITIVE);
            let h = (0.2 * dx / a).min(left);
            let h = if left - h < 1e-3 * h { left } else { h };
            self.step(cfg, dvdx, h);
            left -= h;
            if self.rho.iter().chain(&self.j).any(|v| !v.is_finite() || v.abs() > OVERFLOW_GUARD) {
                return Err(Error::BlowUp { t: self.t, what: "fluid state left the overflow guard".into() });
            }
        }
        Ok(())
    }

    fn to_snapshot(&self, cfg: &EvolutionConfig) -> Snapshot {
        let grid = cfg.grid();
        let dx = grid.dx();
        let rho: Vec<f64> = self.rho.iter().map(|&r| r.max(0.0)).collect();
        let v = Self::velocity(&rho, &self.j);
        let floor = floor_value(&rho);
        let start = rho.iter().position(|&r| r > floor).unwrap_or(0);
        let mut s = vec![0.0; grid.n];
        for i in start + 1..grid.n {
            s[i] = s[i - 1] + 0.5 * cfg.mass * (v[i] + v[i - 1]) * dx;
        }
        let state = FieldState { rho: Field { grid, values: rho }, phase: Field { grid, values: s }, t: self.t };
        Snapshot::Fluid { state, flux: Field { grid, values: self.j.clone() } }
    }
}

/// Observables of one snapshot under the configured momentum rule.
pub fn observe(snapshot: &Snapshot, cfg: &EvolutionConfig) -> ObservableRecord {
    let grid = cfg.grid();
    let m = cfg.mass;
    let s = cfg.s_const;
    let (rho, momentum, kinetic_phase, fisher) = match snapshot {
        Snapshot::Fields(st) => {
            let sp = central_d1(&st.phase.values, grid.dx());
            let kin: Vec<f64> = st.rho.values.iter().zip(&sp).map(|(r, p)| r * p * p).collect();
            (st.rho.clone(), sp, grid.integrate(&kin) / (2.0 * m), fisher_information(&st.rho))
        }
        Snapshot::Wave { psi, .. } => {
            let k = kinetic_expectation(psi, m);
            let fisher = k.fisher_part * 8.0 * m / (s * s);
            (psi.density(), momentum_field_psi(psi), k.phase_part, fisher)
        }
        Snapshot::Fluid { state, flux } => {
            let sp: Vec<f64> = Fluid::velocity(&state.rho.values, &flux.values).iter().map(|v| m * v).collect();
            let kin: Vec<f64> = state.rho.values.iter().zip(&sp).map(|(r, p)| r * p * p).collect();
            (state.rho.clone(), sp, grid.integrate(&kin) / (2.0 * m), fisher_information(&state.rho))
        }
    };
    let mut mean = means(&rho, &momentum, &cfg.potential);
    if let Snapshot::Fluid { flux, .. } = snapshot {
        mean.p = m * flux.integral();
    }
    let t_mean = match (cfg.momentum_rule, snapshot) {
        (MomentumRule::Quantum, Snapshot::Wave { psi, .. }) => kinetic_expectation(psi, m).total,
        (MomentumRule::Quantum, _) => kinetic_phase + s * s / (8.0 * m) * fisher,
        (MomentumRule::Hybrid, _) => kinetic_phase,
    };
    ObservableRecord {
        t: snapshot.t(),
        x_mean: mean.x,
        p_mean: mean.p,
        f_mean: mean.f,
        t_mean,
        v_mean: mean.v,
        e_mean: t_mean + mean.v,
        fisher_i: fisher,
        entropy: shannon_entropy(&rho),
        ehrenfest_r1: 0.0,
        ehrenfest_r2: 0.0,
    }
}

/// Steps from `initial` to `t_final`, recording every `record_every` steps and at the end.
pub fn evolve(initial: &FieldState, cfg: &EvolutionConfig) -> Result<Trajectory> {
    let warnings = cfg.validate()?;
    let grid = cfg.grid();
    if initial.grid() != grid {
        return Err(Error::Invalid("initial state and potential use different grids".into()));
    }
    let steps = (cfg.t_final / cfg.dt).ceil() as usize;
    let dt = if steps > 0 { cfg.t_final / steps as f64 } else { 0.0 };
    let t0 = initial.t;
    let time = |k: usize| t0 + k as f64 * dt;
    let record = |k: usize| k % cfg.record_every == 0 || k == steps;
    let mut snapshots = Vec::new();
    let wrap = |e: Error, k: usize| -> Error {
        match e {
            Error::Node { .. } | Error::BlowUp { .. } | Error::NormDrift { .. } => e,
            other => Error::BlowUp { t: time(k), what: other.to_string() },
        }
    };

    match cfg.scheme {
        Propagator::Rk4 => {
            let mut ls = LogState::from_state(initial)?;
            snapshots.push(Snapshot::Fields(ls.to_state(grid)));
            for k in 1..=steps {
                ls.step(cfg, dt).map_err(|e| wrap(e, k))?;
                ls.t = time(k);
                if record(k) {
                    snapshots.push(Snapshot::Fields(ls.to_state(grid)));
                }
            }
        }
        Propagator::SplitStep => {
            let mut psi = to_wavefunction(initial, cfg.s_const);
            let stepper = SplitStep::new(grid, &cfg.potential.values, dt, cfg.mass, cfg.s_const);
            let view = |psi: &WaveFunction| from_wavefunction(psi, Unwrap::MainLobe).ok();
            snapshots.push(Snapshot::Wave { view: view(&psi), psi: psi.clone() });
            for k in 1..=steps {
                stepper.apply(&mut psi.values);
                psi.t = time(k);
                if record(k) {
                    if psi.values.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                        return Err(Error::BlowUp { t: psi.t, what: "non-finite wavefunction".into() });
                    }
                    snapshots.push(Snapshot::Wave { view: view(&psi), psi: psi.clone() });
                }
            }
        }
        Propagator::FiniteVolume => {
            let sp = central_d1(&initial.phase.values, grid.dx());
            let j = initial.rho.values.iter().zip(&sp).map(|(r, p)| r * p / cfg.mass).collect();
            let mut fluid = Fluid { rho: initial.rho.values.clone(), j, t: t0 };
            let dvdx = central_d1(&cfg.potential.values, grid.dx());
            snapshots.push(fluid.to_snapshot(cfg));
            for k in 1..=steps {
                fluid.advance(cfg, &dvdx, dt)?;
                fluid.t = time(k);
                if record(k) {
                    snapshots.push(fluid.to_snapshot(cfg));
                }
            }
        }
    }

    let mut records: Vec<ObservableRecord> = snapshots.iter().map(|s| observe(s, cfg)).collect();
    if records.len() >= 5 {
        let (r1, r2) = ehrenfest_residuals(&records, cfg.mass)?;
        for (rec, (a, b)) in records.iter_mut().zip(r1.into_iter().zip(r2)) {
            rec.ehrenfest_r1 = a;
            rec.ehrenfest_r2 = b;
        }
    }
    Ok(Trajectory { snapshots, records, warnings })
}

/// r(t) = integral of [L0 - Q_s] rho_t with Q_s = (s^2/2m)(sqrt rho)''/sqrt rho under the
/// quantum momentum rule (Q_s = 0 under the hybrid rule); rho_t from the analytic rhs.
///
/// Equals dE/dt of the configured energy. Snapshots without a (rho, S) view give NaN.
pub fn energy_balance_residual(traj: &Trajectory, cfg: &EvolutionConfig) -> Result<Vec<(f64, f64)>> {
    if traj.snapshots.len() < 3 {
        return Err(Error::Invalid("energy balance needs at least 3 snapshots".into()));
    }
    let grid = cfg.grid();
    let dx = grid.dx();
    let reference = CouplingSpec::Quantum { hbar_eff: cfg.s_const, mass: cfg.mass };
    traj.snapshots
        .iter()
        .map(|snap| {
            let t = snap.t();
            let Some(state) = snap.field_state() else {
                return Ok((t, f64::NAN));
            };
            let (a, b) = match node_free_window(&state.rho.values, grid, t) {
                Ok(w) => w,
                Err(_) => return Ok((t, f64::NAN)),
            };
            let (drho, _) = rhs(state, cfg)?;
            let ell = log_density(&state.rho.values, a, b, dx);
            let lp = central_d1(&ell, dx);
            let lpp = central_d2(&ell, dx);
            let mut integrand = vec![0.0; grid.n];
            for i in a..=b {
                let rho = state.rho.values[i];
                let mut bracket = l0_from_log(&cfg.coupling, rho, lp[i], lpp[i]);
                if cfg.momentum_rule == MomentumRule::Quantum {
                    bracket -= l0_from_log(&reference, rho, lp[i], lpp[i]);
                }
                integrand[i] = bracket * drho.values[i];
            }
            Ok((t, trapezoid(&integrand, dx)))
        })
        .collect()
}

/// Decay diagnostics of a state with dS/dt taken from `rhs`.
pub fn decay_report(state: &FieldState, cfg: &EvolutionConfig, tol: f64) -> Result<crate::fields::DecayReport> {
    let (_, ds) = rhs(state, cfg)?;
    Ok(crate::fields::check_decay(state, &cfg.potential, &ds, tol))
}
