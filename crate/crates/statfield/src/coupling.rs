//! Coupling terms L0 (and their potentials Q) closing the generalized Hamilton-Jacobi equation.

use num_rational::BigRational;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{extrapolate_outside, floor_value, Field, Spectral, DENSITY_FLOOR};
use crate::symbolic::{rational, JetPolynomial};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilyTerm {
    pub n: i32,
    pub c: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CouplingSpec {
    Classical,
    /// Q = coeff * rho^n, L0 = coeff * n * rho^(n-1).
    PowerLaw { n: u32, coeff: f64 },
    /// L0 = (hbar^2 / 2m) (sqrt rho)'' / sqrt rho.
    Quantum { hbar_eff: f64, mass: f64 },
    /// beta = rho L0 = C rho'' + D with C = sum C_n rho^n rho'^-n,
    /// D = A rho - sum (n-1)/(n-2) C_n rho^(n-1) rho'^(2-n).
    PolynomialFamily {
        a: f64,
        #[serde(default)]
        terms: Vec<FamilyTerm>,
    },
}

pub fn admissible_index(n: i32) -> bool {
    n <= 0 || n >= 3
}

impl CouplingSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            CouplingSpec::Classical => Ok(()),
            CouplingSpec::PowerLaw { n, coeff } => {
                if *n < 1 {
                    return Err(Error::Invalid("power-law exponent must be >= 1".into()));
                }
                finite(*coeff, "power-law coeff")
            }
            CouplingSpec::Quantum { hbar_eff, mass } => {
                if !(*hbar_eff > 0.0 && *mass > 0.0 && hbar_eff.is_finite() && mass.is_finite()) {
                    return Err(Error::Invalid("hbar_eff and mass must be positive".into()));
                }
                Ok(())
            }
            CouplingSpec::PolynomialFamily { a, terms } => {
                finite(*a, "family constant A")?;
                for (i, t) in terms.iter().enumerate() {
                    if !admissible_index(t.n) {
                        return Err(Error::BadIndex(t.n));
                    }
                    if terms[..i].iter().any(|u| u.n == t.n) {
                        return Err(Error::Invalid(format!("family index {} repeated", t.n)));
                    }
                    finite(t.c, "family coefficient")?;
                }
                Ok(())
            }
        }
    }

    /// The quantum coupling rewritten as its polynomial-family member (A = 0, C0 = hbar^2/4m).
    pub fn as_family(&self) -> Option<(f64, Vec<FamilyTerm>)> {
        match self {
            CouplingSpec::Quantum { hbar_eff, mass } => {
                Some((0.0, vec![FamilyTerm { n: 0, c: hbar_eff * hbar_eff / (4.0 * mass) }]))
            }
            CouplingSpec::PolynomialFamily { a, terms } => Some((*a, terms.clone())),
            _ => None,
        }
    }

    fn divides_by_density(&self) -> bool {
        matches!(self, CouplingSpec::Quantum { .. } | CouplingSpec::PolynomialFamily { .. })
    }
}

fn finite(v: f64, what: &str) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::Invalid(format!("{what} must be finite")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CouplingEval {
    pub l0: Field,
    pub q: Field,
}

/// Evaluates L0 and Q with spectral derivatives.
///
/// For couplings dividing by rho, values outside the above-floor window are
/// quadratic extrapolations of the window edges.
pub fn eval_l0(spec: &CouplingSpec, rho: &Field) -> Result<CouplingEval> {
    spec.validate()?;
    let grid = rho.grid;
    let n = grid.n;
    let r = &rho.values;
    let mut l0 = vec![0.0; n];
    let mut q = vec![0.0; n];
    match spec {
        CouplingSpec::Classical => {}
        CouplingSpec::PowerLaw { n: p, coeff } => {
            let p = *p as i32;
            for k in 0..n {
                l0[k] = coeff * p as f64 * r[k].powi(p - 1);
                q[k] = coeff * r[k].powi(p);
            }
        }
        _ => {
            let (a, b) = divisible_window(r)?;
            let sp = Spectral::new(n, grid.dx());
            match spec {
                CouplingSpec::Quantum { hbar_eff, mass } => {
                    let u: Vec<f64> = r.iter().map(|v| v.sqrt()).collect();
                    let u1 = sp.derivative_real(&u, 1);
                    let u2 = sp.derivative_real(&u, 2);
                    let k = hbar_eff * hbar_eff / (2.0 * mass);
                    for i in a..=b {
                        l0[i] = k * u2[i] / u[i];
                        q[i] = k * u1[i] * u1[i];
                    }
                }
                CouplingSpec::PolynomialFamily { a: big_a, terms } => {
                    let r1 = sp.derivative_real(r, 1);
                    let r2 = sp.derivative_real(r, 2);
                    let needs_slope = terms.iter().any(|t| t.n > 0);
                    let slope_floor = DENSITY_FLOOR * r1.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                    for i in a..=b {
                        if needs_slope && r1[i].abs() <= slope_floor {
                            return Err(Error::DivisionByFloor { index: i });
                        }
                        let (lv, qv) = family_point(*big_a, terms, r[i], r1[i], r2[i]);
                        l0[i] = lv;
                        q[i] = qv;
                    }
                }
                _ => unreachable!(),
            }
            extrapolate_outside(&mut l0, grid.dx(), a, b);
            for (i, v) in q.iter_mut().enumerate() {
                if i < a || i > b {
                    *v = 0.0;
                }
            }
        }
    }
    debug_assert!(!spec.divides_by_density() || l0.iter().all(|v| v.is_finite()));
    Ok(CouplingEval { l0: Field { grid, values: l0 }, q: Field { grid, values: q } })
}

fn divisible_window(r: &[f64]) -> Result<(usize, usize)> {
    let floor = floor_value(r);
    let a = r.iter().position(|&v| v > floor).ok_or(Error::DivisionByFloor { index: 0 })?;
    let b = r.iter().rposition(|&v| v > floor).unwrap_or(a);
    if let Some(k) = (a..=b).find(|&k| r[k] <= floor) {
        return Err(Error::DivisionByFloor { index: k });
    }
    Ok((a, b))
}

/// (L0, Q) of the polynomial family at one point given rho, rho', rho''.
fn family_point(a: f64, terms: &[FamilyTerm], r: f64, r1: f64, r2: f64) -> (f64, f64) {
    let mut beta = a * r;
    let mut q = a * r;
    for t in terms {
        let n = t.n;
        let ratio = (n - 1) as f64 / (n - 2) as f64;
        beta += t.c * (r.powi(n) * r1.powi(-n) * r2 - ratio * r.powi(n - 1) * r1.powi(2 - n));
        q += t.c * r.powi(n - 1) * r1.powi(2 - n) / (2 - n) as f64;
    }
    (beta / r, q)
}

/// L0 in terms of l = ln rho and its derivatives.
pub(crate) fn l0_from_log(spec: &CouplingSpec, rho: f64, l1: f64, l2: f64) -> f64 {
    match spec {
        CouplingSpec::Classical => 0.0,
        CouplingSpec::PowerLaw { n, coeff } => coeff * *n as f64 * rho.powi(*n as i32 - 1),
        CouplingSpec::Quantum { hbar_eff, mass } => {
            hbar_eff * hbar_eff / (2.0 * mass) * (0.5 * l2 + 0.25 * l1 * l1)
        }
        CouplingSpec::PolynomialFamily { a, terms } => {
            let mut v = *a;
            for t in terms {
                let n = t.n;
                let ratio = (n - 1) as f64 / (n - 2) as f64;
                v += t.c * (l1.powi(-n) * (l2 + l1 * l1) - ratio * l1.powi(2 - n));
            }
            v
        }
    }
}

fn exact(v: f64) -> BigRational {
    BigRational::from_float(v).expect("finite coefficient")
}

/// beta(rho, rho', rho'') of the polynomial family as an exact jet polynomial.
pub fn family_member(a: f64, terms: &[FamilyTerm]) -> Result<JetPolynomial> {
    let mut beta = JetPolynomial::term(1, 1, 1, 0, 0).scale(&exact(a));
    for t in terms {
        if !admissible_index(t.n) {
            return Err(Error::BadIndex(t.n));
        }
        let n = exponent(t.n)?;
        let c = exact(t.c);
        let ratio = rational((t.n - 1) as i64, (t.n - 2) as i64);
        let cpart = JetPolynomial::monomial([n, -n, 1, 0, 0], c.clone())?;
        let dpart = JetPolynomial::monomial([n - 1, 2 - n, 0, 0, 0], c * ratio)?;
        beta = beta + cpart - dpart;
    }
    Ok(beta)
}

/// Q of the polynomial family, satisfying dQ/dx = rho' L0.
pub fn family_potential(a: f64, terms: &[FamilyTerm]) -> Result<JetPolynomial> {
    let mut q = JetPolynomial::term(1, 1, 1, 0, 0).scale(&exact(a));
    for t in terms {
        if !admissible_index(t.n) {
            return Err(Error::BadIndex(t.n));
        }
        let n = exponent(t.n)?;
        let c = exact(t.c) * rational(1, (2 - t.n) as i64);
        q = q + JetPolynomial::monomial([n - 1, 2 - n, 0, 0, 0], c)?;
    }
    Ok(q)
}

fn exponent(n: i32) -> Result<i8> {
    i8::try_from(n).ok().filter(|v| v.abs() < 16).ok_or(Error::ExponentOverflow)
}
