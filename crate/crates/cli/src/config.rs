//! Scenario files: TOML with every table closed to unknown keys.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use statfield::coupling::CouplingSpec;
use statfield::dynamics::{EvolutionConfig, MomentumRule, Propagator};
use statfield::fields::{gaussian, Field, FieldState, Grid};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub seed: u64,
    pub grid: GridConfig,
    pub initial: InitialConfig,
    #[serde(default)]
    pub potential: PotentialConfig,
    pub coupling: CouplingSpec,
    #[serde(default)]
    pub evolution: Option<EvolutionSection>,
    #[serde(default)]
    pub spectrum: Option<SpectrumSection>,
    #[serde(default)]
    pub maxent: Option<MaxentSection>,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub x_min: f64,
    pub x_max: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialConfig {
    Gaussian {
        mu: f64,
        sigma: f64,
        #[serde(default)]
        p0: f64,
    },
    /// Ground state of m omega^2 x^2 / 2 for the evolution mass and s_const.
    HoGround { omega: f64 },
    /// CSV with header `x,rho,S` sampled on the grid.
    File { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialConfig {
    #[default]
    None,
    /// V = -force * x.
    Linear { force: f64 },
    /// V = m omega^2 x^2 / 2.
    Harmonic { omega: f64 },
    /// CSV with header `x,value` sampled on the grid.
    File { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolutionSection {
    pub dt: f64,
    pub t_final: f64,
    #[serde(default = "one")]
    pub record_every: usize,
    pub scheme: Propagator,
    #[serde(default = "unit")]
    pub mass: f64,
    #[serde(default = "unit")]
    pub s_const: f64,
    #[serde(default = "quantum_rule")]
    pub momentum_rule: MomentumRule,
    /// Write `x,rho,S` for every recorded snapshot.
    #[serde(default)]
    pub field_dumps: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumSection {
    /// Evolve to this time first (needs an `evolution` table); the initial state otherwise.
    #[serde(default)]
    pub time: Option<f64>,
    #[serde(default = "unit")]
    pub s_const: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaxentSection {
    /// CSV with header `x,E` (uniform grid) or `i,E` (discrete levels).
    pub landscape: PathBuf,
    pub target: f64,
    #[serde(default = "hundred")]
    pub trials: usize,
    #[serde(default = "milli")]
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: default_dir() }
    }
}

fn one() -> usize {
    1
}
fn hundred() -> usize {
    100
}
fn unit() -> f64 {
    1.0
}
fn milli() -> f64 {
    1e-3
}
fn quantum_rule() -> MomentumRule {
    MomentumRule::Quantum
}
fn default_dir() -> PathBuf {
    PathBuf::from("run")
}

/// A config error carries the key it concerns.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

fn bad(key: &str, msg: impl std::fmt::Display) -> ConfigError {
    ConfigError(format!("{key}: {msg}"))
}

impl ScenarioConfig {
    /// Parses `path`; relative file paths inside are resolved against its directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        let mut cfg: Self = toml::from_str(&text).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let InitialConfig::File { path } = &mut cfg.initial {
            rebase(path);
        }
        if let PotentialConfig::File { path } = &mut cfg.potential {
            rebase(path);
        }
        if let Some(m) = &mut cfg.maxent {
            rebase(&mut m.landscape);
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn grid(&self) -> Result<Grid, ConfigError> {
        let g = self.grid;
        Grid::new(g.x_min, g.x_max, g.n).map_err(|e| bad("grid", e))
    }

    fn mass_and_s(&self) -> (f64, f64) {
        self.evolution.as_ref().map_or((1.0, 1.0), |e| (e.mass, e.s_const))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let grid = self.grid()?;
        self.coupling.validate().map_err(|e| bad("coupling", e))?;
        match &self.initial {
            InitialConfig::Gaussian { sigma, .. } if !(*sigma > 0.0) => return Err(bad("initial.sigma", "must be positive")),
            InitialConfig::HoGround { omega } if !(*omega > 0.0) => return Err(bad("initial.omega", "must be positive")),
            _ => {}
        }
        if let PotentialConfig::Harmonic { omega } = self.potential {
            if !omega.is_finite() {
                return Err(bad("potential.omega", "must be finite"));
            }
        }
        if let Some(ev) = &self.evolution {
            let cfg = self.evolution_config_with(grid, Field::zeros(grid), ev);
            cfg.validate().map_err(|e| bad("evolution", e))?;
        }
        if let Some(sp) = &self.spectrum {
            if !(sp.s_const > 0.0) {
                return Err(bad("spectrum.s_const", "must be positive"));
            }
            if let Some(t) = sp.time {
                if self.evolution.is_none() {
                    return Err(bad("spectrum.time", "needs an [evolution] table"));
                }
                if !(t >= 0.0) {
                    return Err(bad("spectrum.time", "must be non-negative"));
                }
            }
        }
        if let Some(m) = &self.maxent {
            if !(m.delta >= 0.0 && m.delta < 1.0) {
                return Err(bad("maxent.delta", "must lie in [0, 1)"));
            }
        }
        Ok(())
    }

    pub fn initial_state(&self) -> Result<FieldState, ConfigError> {
        let grid = self.grid()?;
        let (mass, s) = self.mass_and_s();
        let (rho, phase) = match &self.initial {
            InitialConfig::Gaussian { mu, sigma, p0 } => (gaussian(grid, *mu, *sigma), Field::from_fn(grid, |x| p0 * x)),
            InitialConfig::HoGround { omega } => {
                (gaussian(grid, 0.0, (s / (2.0 * mass * omega)).sqrt()), Field::zeros(grid))
            }
            InitialConfig::File { path } => {
                let cols = read_csv(path, &["x", "rho", "S"]).map_err(|e| bad("initial.path", e))?;
                check_abscissa(grid, &cols[0]).map_err(|e| bad("initial.path", e))?;
                let rho = Field::new(grid, cols[1].clone()).map_err(|e| bad("initial.path", e))?;
                let phase = Field::new(grid, cols[2].clone()).map_err(|e| bad("initial.path", e))?;
                (rho, phase)
            }
        };
        FieldState::new(rho, phase, 0.0).map_err(|e| bad("initial", e))
    }

    pub fn potential(&self) -> Result<Field, ConfigError> {
        let grid = self.grid()?;
        let (mass, _) = self.mass_and_s();
        Ok(match &self.potential {
            PotentialConfig::None => Field::zeros(grid),
            PotentialConfig::Linear { force } => Field::from_fn(grid, |x| -force * x),
            PotentialConfig::Harmonic { omega } => Field::from_fn(grid, |x| 0.5 * mass * omega * omega * x * x),
            PotentialConfig::File { path } => {
                let cols = read_csv(path, &["x", "value"]).map_err(|e| bad("potential.path", e))?;
                check_abscissa(grid, &cols[0]).map_err(|e| bad("potential.path", e))?;
                Field::new(grid, cols[1].clone()).map_err(|e| bad("potential.path", e))?
            }
        })
    }

    fn evolution_config_with(&self, grid: Grid, potential: Field, ev: &EvolutionSection) -> EvolutionConfig {
        debug_assert_eq!(grid, potential.grid);
        EvolutionConfig {
            dt: ev.dt,
            t_final: ev.t_final,
            record_every: ev.record_every,
            scheme: ev.scheme,
            potential,
            coupling: self.coupling.clone(),
            mass: ev.mass,
            s_const: ev.s_const,
            momentum_rule: ev.momentum_rule,
        }
    }

    pub fn evolution_config(&self) -> Result<EvolutionConfig, ConfigError> {
        let ev = self.evolution.as_ref().ok_or_else(|| bad("evolution", "missing table"))?;
        Ok(self.evolution_config_with(self.grid()?, self.potential()?, ev))
    }
}

fn check_abscissa(grid: Grid, x: &[f64]) -> Result<(), String> {
    if x.len() != grid.n {
        return Err(format!("{} rows, grid has {}", x.len(), grid.n));
    }
    let tol = 1e-9 * grid.dx();
    match x.iter().enumerate().find(|(k, &v)| (v - grid.x(*k)).abs() > tol) {
        Some((k, v)) => Err(format!("row {}: x = {v} is off the grid point {}", k + 1, grid.x(k))),
        None => Ok(()),
    }
}

/// Reads a numeric CSV whose header must equal `header`; returns columns.
pub fn read_csv(path: &Path, header: &[&str]) -> Result<Vec<Vec<f64>>, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    read_csv_text(&text, &[header]).map(|(_, cols)| cols)
}

/// Parses CSV text whose header is one of `headers`; returns the matched header index and columns.
pub fn read_csv_text(text: &str, headers: &[&[&str]]) -> Result<(usize, Vec<Vec<f64>>), String> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, head) = lines.next().ok_or("empty file")?;
    let names: Vec<&str> = head.split(',').map(str::trim).collect();
    let which = headers
        .iter()
        .position(|h| *h == names.as_slice())
        .ok_or_else(|| format!("header `{head}` is not one of {:?}", headers.iter().map(|h| h.join(",")).collect::<Vec<_>>()))?;
    let width = names.len();
    let mut cols = vec![Vec::new(); width];
    for (no, line) in lines {
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != width {
            return Err(format!("line {}: expected {width} fields", no + 1));
        }
        for (c, cell) in cells.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| format!("line {}: `{cell}` is not a number", no + 1))?;
            cols[c].push(v);
        }
    }
    Ok((which, cols))
}
