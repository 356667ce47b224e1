//! Subcommand drivers. Each validates and computes before touching the output directory.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use statfield::coupling::CouplingSpec;
use statfield::dynamics::{energy_balance_residual, evolve, EvolutionConfig, Propagator, Snapshot, Trajectory};
use statfield::fields::{FieldState, Grid};
use statfield::maxent::{canonical_distribution, extremum_check, solve_lambda, EnergyLandscape, ExtremumReport};
use statfield::momentum::{classical_momentum_density, fourier_forward, h_diagnostic, quantum_momentum_density};
use statfield::observables::{ehrenfest_relative, fisher_information};
use statfield::symbolic::verification_suite;
use statfield::Error;

use crate::config::{read_csv_text, ConfigError, ScenarioConfig};
use crate::output::{write_csv, write_json};

#[derive(Debug)]
pub enum Failure {
    Io(String),
    Config(String),
    Numeric(String),
    Verification(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Io(_) => 1,
            Failure::Config(_) => 2,
            Failure::Numeric(_) => 3,
            Failure::Verification(_) => 4,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Io(m) => write!(f, "i/o error: {m}"),
            Failure::Config(m) => write!(f, "config error: {m}"),
            Failure::Numeric(m) => write!(f, "numeric failure: {m}"),
            Failure::Verification(m) => write!(f, "verification failed: {m}"),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.0)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

fn numeric(e: Error) -> Failure {
    Failure::Numeric(e.to_string())
}

/// Creates the run directory and stores the resolved config in it.
fn prepare_dir(cfg: &ScenarioConfig, dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("config.toml"), cfg.to_toml())?;
    Ok(())
}

#[derive(Serialize)]
struct EvolveSummary {
    command: &'static str,
    seed: u64,
    scheme: Propagator,
    coupling: CouplingSpec,
    records: usize,
    t_final: f64,
    norm_error: f64,
    energy_initial: f64,
    energy_final: f64,
    energy_drift_max: f64,
    momentum_change: f64,
    ehrenfest_r1_relative: Option<f64>,
    ehrenfest_r2_relative: Option<f64>,
    energy_balance_max_abs: Option<f64>,
    energy_balance_integral: Option<f64>,
    warnings: Vec<String>,
}

fn summarize(cfg: &ScenarioConfig, ecfg: &EvolutionConfig, traj: &Trajectory) -> EvolveSummary {
    let recs = &traj.records;
    let first = &recs[0];
    let last = recs.last().expect("at least one record");
    let e0 = first.e_mean;
    let drift = recs.iter().map(|r| ((r.e_mean - e0) / e0).abs()).fold(0.0, f64::max);
    let (r1, r2) = if recs.len() >= 5 {
        let (a, b) = ehrenfest_relative(recs, ecfg.mass);
        (Some(a), Some(b))
    } else {
        (None, None)
    };
    let balance = energy_balance_residual(traj, ecfg).ok().filter(|r| r.iter().all(|(_, v)| v.is_finite()));
    let (bmax, bint) = match &balance {
        Some(r) => {
            let max = r.iter().map(|(_, v)| v.abs()).fold(0.0, f64::max);
            let int = r.windows(2).map(|w| 0.5 * (w[0].1 + w[1].1) * (w[1].0 - w[0].0)).sum();
            (Some(max), Some(int))
        }
        None => (None, None),
    };
    let final_density = traj.snapshots.last().expect("snapshot").density();
    EvolveSummary {
        command: "evolve",
        seed: cfg.seed,
        scheme: ecfg.scheme,
        coupling: ecfg.coupling.clone(),
        records: recs.len(),
        t_final: last.t,
        norm_error: (final_density.integral() - 1.0).abs(),
        energy_initial: e0,
        energy_final: last.e_mean,
        energy_drift_max: drift,
        momentum_change: last.p_mean - first.p_mean,
        ehrenfest_r1_relative: r1,
        ehrenfest_r2_relative: r2,
        energy_balance_max_abs: bmax,
        energy_balance_integral: bint,
        warnings: traj.warnings.clone(),
    }
}

fn write_trajectory(dir: &Path, traj: &Trajectory) -> Result<(), Failure> {
    let r = &traj.records;
    let col = |f: fn(&statfield::observables::ObservableRecord) -> f64| r.iter().map(f).collect::<Vec<f64>>();
    let cols = [
        col(|r| r.t),
        col(|r| r.x_mean),
        col(|r| r.p_mean),
        col(|r| r.f_mean),
        col(|r| r.t_mean),
        col(|r| r.v_mean),
        col(|r| r.e_mean),
        col(|r| r.fisher_i),
        col(|r| r.entropy),
        col(|r| r.ehrenfest_r1),
        col(|r| r.ehrenfest_r2),
    ];
    let refs: Vec<&[f64]> = cols.iter().map(Vec::as_slice).collect();
    let header = [
        "t", "x_mean", "p_mean", "f_mean", "t_mean", "v_mean", "e_mean", "fisher_i", "entropy", "ehrenfest_r1",
        "ehrenfest_r2",
    ];
    write_csv(&dir.join("trajectory.csv"), &header, &refs)?;
    Ok(())
}

fn write_field_dumps(dir: &Path, grid: Grid, traj: &Trajectory) -> Result<(), Failure> {
    let fields = dir.join("fields");
    fs::create_dir_all(&fields)?;
    let x = grid.points();
    for (k, snap) in traj.snapshots.iter().enumerate() {
        let rho = snap.density();
        let phase = match snap.field_state() {
            Some(st) => st.phase.values.clone(),
            None => vec![f64::NAN; grid.n],
        };
        write_csv(&fields.join(format!("snapshot_{k:05}.csv")), &["x", "rho", "S"], &[&x, &rho.values, &phase])?;
    }
    Ok(())
}

pub fn cmd_evolve(cfg: &ScenarioConfig, dir: &Path) -> Result<String, Failure> {
    cfg.validate()?;
    let initial = cfg.initial_state()?;
    let ecfg = cfg.evolution_config()?;
    let traj = evolve(&initial, &ecfg).map_err(numeric)?;
    let summary = summarize(cfg, &ecfg, &traj);
    prepare_dir(cfg, dir)?;
    write_trajectory(dir, &traj)?;
    if cfg.evolution.as_ref().is_some_and(|e| e.field_dumps) {
        write_field_dumps(dir, ecfg.potential.grid, &traj)?;
    }
    write_json(&dir.join("summary.json"), &summary)?;
    Ok(format!(
        "evolved to t = {} ({} records), energy drift {:.3e}",
        summary.t_final, summary.records, summary.energy_drift_max
    ))
}

#[derive(Serialize)]
struct SpectrumSummary {
    command: &'static str,
    seed: u64,
    t: f64,
    s_const: f64,
    quantum_norm: f64,
    hybrid_norm: f64,
    hybrid_moments: [f64; 3],
    quantum_moments: [f64; 3],
    h_moments: [f64; 3],
    fisher_i: f64,
    second_moment_gap_expected: f64,
}

fn spectrum_state(cfg: &ScenarioConfig) -> Result<FieldState, Failure> {
    let initial = cfg.initial_state()?;
    let Some(time) = cfg.spectrum.as_ref().and_then(|s| s.time) else {
        return Ok(initial);
    };
    let mut ecfg = cfg.evolution_config()?;
    ecfg.t_final = time;
    ecfg.record_every = usize::MAX;
    let traj = evolve(&initial, &ecfg).map_err(numeric)?;
    match traj.snapshots.last() {
        Some(Snapshot::Wave { view: None, .. }) => {
            Err(Failure::Numeric(format!("state at t = {time} has a node; no (rho, S) view")))
        }
        Some(snap) => Ok(snap.field_state().expect("view present").clone()),
        None => Err(Failure::Numeric("empty trajectory".into())),
    }
}

pub fn cmd_spectrum(cfg: &ScenarioConfig, dir: &Path) -> Result<String, Failure> {
    cfg.validate()?;
    let s = cfg.spectrum.as_ref().map_or(1.0, |sp| sp.s_const);
    let state = spectrum_state(cfg)?;
    let psi = statfield::fields::to_wavefunction(&state, s);
    let quantum = quantum_momentum_density(&fourier_forward(&psi));
    let hybrid = classical_momentum_density(&state, s, &quantum.p);
    let h = h_diagnostic(&state, s);
    let fisher = fisher_information(&state.rho);
    let summary = SpectrumSummary {
        command: "spectrum",
        seed: cfg.seed,
        t: state.t,
        s_const: s,
        quantum_norm: quantum.integral(),
        hybrid_norm: hybrid.integral(),
        hybrid_moments: h.hybrid_moments,
        quantum_moments: h.quantum_moments,
        h_moments: h.moments,
        fisher_i: fisher,
        second_moment_gap_expected: s * s / 4.0 * fisher,
    };
    prepare_dir(cfg, dir)?;
    write_csv(&dir.join("quantum.csv"), &["p", "w"], &[&quantum.p, &quantum.w])?;
    write_csv(&dir.join("hybrid.csv"), &["p", "w"], &[&hybrid.p, &hybrid.w])?;
    write_csv(&dir.join("h.csv"), &["p", "h"], &[&h.p, &h.h])?;
    write_json(&dir.join("summary.json"), &summary)?;
    Ok(format!("second-moment gap {:.6e} (expected {:.6e})", -h.moments[2], summary.second_moment_gap_expected))
}

#[derive(Serialize)]
struct MaxentSummary {
    command: &'static str,
    seed: u64,
    target: f64,
    lambda2: f64,
    mean_energy: f64,
    entropy: f64,
    extremum: ExtremumReport,
}

/// Reads `x,E` (uniform abscissae) or `i,E`; returns the landscape and its first column.
fn load_landscape(path: &Path) -> Result<(EnergyLandscape, &'static str, Vec<f64>), Failure> {
    let key = "maxent.landscape";
    let text = fs::read_to_string(path).map_err(|e| Failure::Config(format!("{key}: {}: {e}", path.display())))?;
    let (which, cols) =
        read_csv_text(&text, &[&["x", "E"], &["i", "E"]]).map_err(|e| Failure::Config(format!("{key}: {e}")))?;
    let bad = |e: Error| Failure::Config(format!("{key}: {e}"));
    if which == 1 {
        let land = EnergyLandscape::discrete(cols[1].clone()).map_err(bad)?;
        return Ok((land, "i", cols[0].clone()));
    }
    let x = &cols[0];
    if x.len() < 2 {
        return Err(Failure::Config(format!("{key}: needs at least two rows")));
    }
    let dx = x[1] - x[0];
    if !(dx > 0.0) || x.windows(2).any(|w| ((w[1] - w[0]) - dx).abs() > 1e-9 * dx) {
        return Err(Failure::Config(format!("{key}: x must be uniformly increasing")));
    }
    let grid = Grid::new(x[0], x[0] + dx * x.len() as f64, x.len()).map_err(bad)?;
    let land = EnergyLandscape::on_grid(grid, cols[1].clone()).map_err(bad)?;
    Ok((land, "x", x.clone()))
}

pub fn cmd_maxent(cfg: &ScenarioConfig, dir: &Path) -> Result<String, Failure> {
    cfg.validate()?;
    let m = cfg.maxent.as_ref().ok_or_else(|| Failure::Config("maxent: missing table".into()))?;
    let (land, axis, abscissa) = load_landscape(&m.landscape)?;
    let lambda2 = match solve_lambda(&land, m.target) {
        Ok(l) => l,
        Err(e @ Error::OutOfRange { .. }) => return Err(Failure::Config(format!("maxent.target: {e}"))),
        Err(e) => return Err(numeric(e)),
    };
    let rho = canonical_distribution(&land, lambda2);
    let report = extremum_check(&land, &rho, lambda2, m.trials, m.delta, cfg.seed);
    let summary = MaxentSummary {
        command: "maxent",
        seed: cfg.seed,
        target: m.target,
        lambda2,
        mean_energy: land.mean_energy(&rho),
        entropy: land.entropy(&rho),
        extremum: report.clone(),
    };
    prepare_dir(cfg, dir)?;
    write_csv(&dir.join("rho.csv"), &[axis, "rho"], &[&abscissa, &rho])?;
    write_json(&dir.join("summary.json"), &summary)?;
    if !report.pass {
        return Err(Failure::Verification(format!(
            "extremum check: {} of {} trials non-increasing",
            report.non_increasing, report.trials
        )));
    }
    Ok(format!("lambda2 = {lambda2:.12e}, entropy = {:.12e}", summary.entropy))
}

#[derive(Serialize)]
struct SymbolicLine {
    name: String,
    pass: bool,
    detail: String,
}

/// Prints one PASS/FAIL line per check; fails if any check fails.
pub fn cmd_verify_symbolic(lo: i32, hi: i32, out: Option<&Path>) -> Result<String, Failure> {
    if lo > hi {
        return Err(Failure::Config(format!("window [{lo}, {hi}] is empty")));
    }
    let checks = verification_suite(lo, hi).map_err(numeric)?;
    for c in &checks {
        let tag = if c.pass { "PASS" } else { "FAIL" };
        println!("{tag} {}  [{}]", c.name, c.detail);
    }
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        let lines: Vec<SymbolicLine> =
            checks.iter().map(|c| SymbolicLine { name: c.name.clone(), pass: c.pass, detail: c.detail.clone() }).collect();
        write_json(&dir.join("report.json"), &lines)?;
    }
    let failed = checks.iter().filter(|c| !c.pass).count();
    if failed > 0 {
        return Err(Failure::Verification(format!("{failed} of {} symbolic checks failed", checks.len())));
    }
    Ok(format!("all {} symbolic checks passed", checks.len()))
}

#[derive(serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct BatchFile {
    configs: Vec<PathBuf>,
}

/// Config paths listed in a batch file, resolved against its directory.
pub fn load_batch(path: &Path) -> Result<Vec<PathBuf>, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    let batch: BatchFile = toml::from_str(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    Ok(batch.configs.into_iter().map(|p| if p.is_relative() { base.join(p) } else { p }).collect())
}
