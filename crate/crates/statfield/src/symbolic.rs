//! Exact Laurent polynomials in the jet variables u0 = rho, u1 = rho', ..., u4 = rho''''.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Neg, Sub};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};

pub const JET_ORDER: usize = 4;
pub const MAX_EXPONENT: i8 = 16;

pub type Exponents = [i8; JET_ORDER + 1];

/// Sparse map from exponent tuples to nonzero rational coefficients.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct JetPolynomial {
    terms: BTreeMap<Exponents, BigRational>,
}

pub fn rational(num: i64, den: i64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

impl JetPolynomial {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: BigRational) -> Self {
        Self::monomial([0; JET_ORDER + 1], c).expect("zero exponents are in range")
    }

    /// `c * u0^e0 * ... * u4^e4`.
    pub fn monomial(exps: Exponents, c: BigRational) -> Result<Self> {
        if exps.iter().any(|e| e.abs() > MAX_EXPONENT) {
            return Err(Error::ExponentOverflow);
        }
        let mut terms = BTreeMap::new();
        if !c.is_zero() {
            terms.insert(exps, c);
        }
        Ok(Self { terms })
    }

    /// The jet variable `u_k`.
    pub fn var(k: usize) -> Self {
        let mut e = [0; JET_ORDER + 1];
        e[k] = 1;
        Self::monomial(e, BigRational::one()).expect("unit exponent is in range")
    }

    /// Shorthand for `c * u0^a * u1^b * u2^c2` with an integer ratio coefficient.
    pub fn term(num: i64, den: i64, a: i8, b: i8, c2: i8) -> Self {
        Self::monomial([a, b, c2, 0, 0], rational(num, den)).expect("exponents in range")
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Exponents, &BigRational)> {
        self.terms.iter()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Highest `k` with a nonzero exponent on `u_k` in any term, or `None` for constants.
    pub fn max_order(&self) -> Option<usize> {
        self.terms
            .keys()
            .filter_map(|e| (0..=JET_ORDER).rev().find(|&k| e[k] != 0))
            .max()
    }

    fn add_term(&mut self, e: Exponents, c: BigRational) {
        if c.is_zero() {
            return;
        }
        let entry = self.terms.entry(e).or_insert_with(BigRational::zero);
        *entry += c;
        if entry.is_zero() {
            self.terms.remove(&e);
        }
    }

    pub fn scale(&self, c: &BigRational) -> Self {
        if c.is_zero() {
            return Self::zero();
        }
        Self { terms: self.terms.iter().map(|(e, v)| (*e, v * c)).collect() }
    }

    pub fn try_mul(&self, other: &Self) -> Result<Self> {
        let mut out = Self::zero();
        for (ea, ca) in &self.terms {
            for (eb, cb) in &other.terms {
                let mut e = [0i8; JET_ORDER + 1];
                for k in 0..=JET_ORDER {
                    let s = ea[k] as i16 + eb[k] as i16;
                    if s.abs() > MAX_EXPONENT as i16 {
                        return Err(Error::ExponentOverflow);
                    }
                    e[k] = s as i8;
                }
                out.add_term(e, ca * cb);
            }
        }
        Ok(out)
    }

    /// Multiplies by `u_k^power`.
    pub fn shift(&self, k: usize, power: i8) -> Result<Self> {
        let mut out = Self::zero();
        for (e, c) in &self.terms {
            let mut e = *e;
            let s = e[k] as i16 + power as i16;
            if s.abs() > MAX_EXPONENT as i16 {
                return Err(Error::ExponentOverflow);
            }
            e[k] = s as i8;
            out.add_term(e, c.clone());
        }
        Ok(out)
    }

    /// Partial derivative with respect to `u_k`.
    pub fn partial(&self, k: usize) -> Result<Self> {
        let mut out = Self::zero();
        for (e, c) in &self.terms {
            if e[k] == 0 {
                continue;
            }
            let mut ne = *e;
            ne[k] -= 1;
            if ne[k] < -MAX_EXPONENT {
                return Err(Error::ExponentOverflow);
            }
            out.add_term(ne, c * BigRational::from_integer(BigInt::from(e[k])));
        }
        Ok(out)
    }

    /// d/dx = sum_k u_{k+1} d/du_k.
    pub fn total_derivative(&self) -> Result<Self> {
        if self.terms.keys().any(|e| e[JET_ORDER] != 0) {
            return Err(Error::JetOverflow);
        }
        let mut out = Self::zero();
        for k in 0..JET_ORDER {
            let p = self.partial(k)?.shift(k + 1, 1)?;
            out = out + p;
        }
        Ok(out)
    }

    pub fn evaluate(&self, u: &[f64; JET_ORDER + 1]) -> f64 {
        self.terms
            .iter()
            .map(|(e, c)| {
                let c = c.to_f64().unwrap_or(f64::NAN);
                e.iter().zip(u).fold(c, |acc, (&p, &x)| acc * x.powi(p as i32))
            })
            .sum()
    }
}

impl Add for JetPolynomial {
    type Output = Self;
    fn add(mut self, rhs: Self) -> Self {
        for (e, c) in rhs.terms {
            self.add_term(e, c);
        }
        self
    }
}

impl Neg for JetPolynomial {
    type Output = Self;
    fn neg(self) -> Self {
        Self { terms: self.terms.into_iter().map(|(e, c)| (e, -c)).collect() }
    }
}

impl Sub for JetPolynomial {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        self + (-rhs)
    }
}

impl fmt::Display for JetPolynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (i, (e, c)) in self.terms.iter().enumerate() {
            let neg = c.is_negative();
            let a = c.abs();
            match (i, neg) {
                (0, true) => write!(f, "-")?,
                (0, false) => {}
                (_, true) => write!(f, " - ")?,
                (_, false) => write!(f, " + ")?,
            }
            let vars: Vec<String> = e
                .iter()
                .enumerate()
                .filter(|(_, &p)| p != 0)
                .map(|(k, &p)| if p == 1 { format!("u{k}") } else { format!("u{k}^{p}") })
                .collect();
            if vars.is_empty() {
                write!(f, "{a}")?;
            } else if a.is_one() {
                write!(f, "{}", vars.join("*"))?;
            } else {
                write!(f, "{a}*{}", vars.join("*"))?;
            }
        }
        Ok(())
    }
}

/// -D^2(dB/du2) + D(dB/du1) - dB/du0 + B/u0; zero iff beta solves the variational PDE.
pub fn pde_residual(beta: &JetPolynomial) -> Result<JetPolynomial> {
    require_second_order(beta)?;
    let c2 = beta.partial(2)?.total_derivative()?.total_derivative()?;
    let c1 = beta.partial(1)?.total_derivative()?;
    let c0 = beta.partial(0)?;
    let cb = beta.shift(0, -1)?;
    Ok(c1 - c2 - c0 + cb)
}

/// The density-dependent part of the Euler-Lagrange equation for a coupling `L0(u0, u1, u2)`:
/// -D^2(u0 dL0/du2) + u1 dL0/du1 + u0 D(dL0/du1) - u0 dL0/du0.
pub fn euler_lagrange_residual(l0: &JetPolynomial) -> Result<JetPolynomial> {
    require_second_order(l0)?;
    let a = l0.partial(2)?.shift(0, 1)?.total_derivative()?.total_derivative()?;
    let b = l0.partial(1)?.shift(1, 1)?;
    let c = l0.partial(1)?.total_derivative()?.shift(0, 1)?;
    let d = l0.partial(0)?.shift(0, 1)?;
    Ok(b + c - a - d)
}

fn require_second_order(p: &JetPolynomial) -> Result<()> {
    match p.max_order() {
        Some(k) if k > 2 => Err(Error::Invalid("expected a polynomial in u0, u1, u2 only".into())),
        _ => Ok(()),
    }
}

/// Outcome of the first-order criterion: `holds` iff D^2(dB/du2) vanishes; `witness` is that polynomial.
#[derive(Debug, Clone, PartialEq)]
pub struct CriterionResult {
    pub holds: bool,
    pub witness: JetPolynomial,
}

pub fn first_order_criterion(beta: &JetPolynomial) -> Result<CriterionResult> {
    require_second_order(beta)?;
    let witness = beta.partial(2)?.total_derivative()?.total_derivative()?;
    Ok(CriterionResult { holds: witness.is_zero(), witness })
}

/// Coefficients c_{n,m}, d_{n,m} of C = sum c rho^n rho'^m and D = sum d rho^n rho'^m over `[lo, hi]^2`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoefficientGrid {
    pub lo: i32,
    pub hi: i32,
    pub c: BTreeMap<(i32, i32), BigRational>,
    pub d: BTreeMap<(i32, i32), BigRational>,
}

impl CoefficientGrid {
    pub fn in_window(&self, n: i32, m: i32) -> bool {
        (self.lo..=self.hi).contains(&n) && (self.lo..=self.hi).contains(&m)
    }

    /// beta = C u2 + D.
    pub fn beta(&self) -> Result<JetPolynomial> {
        let mut beta = JetPolynomial::zero();
        for (&(n, m), v) in &self.c {
            beta = beta + JetPolynomial::monomial([exp(n)?, exp(m)?, 1, 0, 0], v.clone())?;
        }
        for (&(n, m), v) in &self.d {
            beta = beta + JetPolynomial::monomial([exp(n)?, exp(m)?, 0, 0, 0], v.clone())?;
        }
        Ok(beta)
    }
}

fn exp(v: i32) -> Result<i8> {
    i8::try_from(v).ok().filter(|e| e.abs() <= MAX_EXPONENT).ok_or(Error::ExponentOverflow)
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug)]
enum Unknown {
    C(i32, i32),
    D(i32, i32),
}

/// Exact nullspace of the coefficient recursions over the window `[lo, hi]^2`.
///
/// Every equation touching at least one in-window unknown is imposed, with
/// out-of-window coefficients set to zero.
pub fn solve_recursions(lo: i32, hi: i32) -> Vec<CoefficientGrid> {
    let inside = |n: i32, m: i32| (lo..=hi).contains(&n) && (lo..=hi).contains(&m);
    let mut unknowns = Vec::new();
    for n in lo..=hi {
        for m in lo..=hi {
            unknowns.push(Unknown::C(n, m));
        }
    }
    for n in lo..=hi {
        for m in lo..=hi {
            unknowns.push(Unknown::D(n, m));
        }
    }
    let col: BTreeMap<Unknown, usize> = unknowns.iter().enumerate().map(|(i, u)| (*u, i)).collect();

    // Each relation reads  a * c_{cn,cm} - b * d_{dn,dm} = 0.
    let mut rows: Vec<Vec<BigInt>> = Vec::new();
    let mut push = |a: i64, cnm: (i32, i32), b: i64, dnm: (i32, i32)| {
        let mut row = vec![BigInt::zero(); unknowns.len()];
        let mut any = false;
        if inside(cnm.0, cnm.1) && a != 0 {
            row[col[&Unknown::C(cnm.0, cnm.1)]] = BigInt::from(a);
            any = true;
        }
        if inside(dnm.0, dnm.1) && b != 0 {
            row[col[&Unknown::D(dnm.0, dnm.1)]] = BigInt::from(-b);
            any = true;
        }
        if any {
            rows.push(row);
        }
    };
    for n in lo - 3..=hi + 3 {
        for m in lo - 3..=hi + 3 {
            let (n64, m64) = (n as i64, m as i64);
            push(n64 * m64 + 2 * n64 + m64 + 1, (n + 1, m), (m64 + 1) * (m64 + 2), (n, m + 2));
            push((n64 + 1) * (n64 + 2), (n + 2, m - 2), n64 * m64 - n64 + m64, (n + 1, m));
        }
    }

    nullspace(rows, unknowns.len())
        .into_iter()
        .map(|v| {
            let mut g = CoefficientGrid { lo, hi, c: BTreeMap::new(), d: BTreeMap::new() };
            for (i, x) in v.into_iter().enumerate() {
                if x.is_zero() {
                    continue;
                }
                match unknowns[i] {
                    Unknown::C(n, m) => g.c.insert((n, m), x),
                    Unknown::D(n, m) => g.d.insert((n, m), x),
                };
            }
            g
        })
        .collect()
}

/// Fraction-free row reduction followed by rational back substitution.
fn nullspace(mut rows: Vec<Vec<BigInt>>, ncols: usize) -> Vec<Vec<BigRational>> {
    let mut pivots: Vec<usize> = Vec::new();
    let mut r = 0;
    for c in 0..ncols {
        let Some(p) = (r..rows.len()).find(|&i| !rows[i][c].is_zero()) else {
            continue;
        };
        rows.swap(r, p);
        let pivot_row = rows[r].clone();
        for (i, row) in rows.iter_mut().enumerate() {
            if i == r || row[c].is_zero() {
                continue;
            }
            let a = pivot_row[c].clone();
            let b = row[c].clone();
            for k in 0..ncols {
                if pivot_row[k].is_zero() && row[k].is_zero() {
                    continue;
                }
                row[k] = &row[k] * &a - &pivot_row[k] * &b;
            }
            reduce_content(row);
        }
        pivots.push(c);
        r += 1;
        if r == rows.len() {
            break;
        }
    }
    let is_pivot: Vec<Option<usize>> = {
        let mut v = vec![None; ncols];
        for (i, &c) in pivots.iter().enumerate() {
            v[c] = Some(i);
        }
        v
    };
    let mut basis = Vec::new();
    for free in (0..ncols).filter(|&c| is_pivot[c].is_none()) {
        let mut v = vec![BigRational::zero(); ncols];
        v[free] = BigRational::one();
        for (i, &pc) in pivots.iter().enumerate() {
            let coeff = &rows[i][free];
            if !coeff.is_zero() {
                v[pc] = -BigRational::new(coeff.clone(), rows[i][pc].clone());
            }
        }
        basis.push(v);
    }
    basis
}

fn reduce_content(row: &mut [BigInt]) {
    use num_integer::Integer;
    let mut g = BigInt::zero();
    for x in row.iter() {
        if !x.is_zero() {
            g = g.gcd(x);
        }
    }
    if !g.is_zero() && !g.is_one() {
        for x in row.iter_mut() {
            if !x.is_zero() {
                *x = &*x / &g;
            }
        }
    }
}

/// One line of the symbolic verification suite.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SuiteCheck {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

fn check(name: impl Into<String>, pass: bool, detail: impl Into<String>) -> SuiteCheck {
    SuiteCheck { name: name.into(), pass, detail: detail.into() }
}

/// Family indices whose coefficients c_{n,-n} and d_{n-1,2-n} both fit in `[lo, hi]^2`.
fn expected_members(lo: i32, hi: i32) -> Vec<i32> {
    let w = |v: i32| (lo..=hi).contains(&v);
    (lo..=hi).filter(|&n| n != 1 && n != 2 && w(-n) && w(n - 1) && w(2 - n)).collect()
}

/// Exact checks of the closed-form solutions, the family, the recursion nullspace over
/// `[lo, hi]^2` and the first-order criterion.
pub fn verification_suite(lo: i32, hi: i32) -> Result<Vec<SuiteCheck>> {
    use crate::coupling::{family_member, FamilyTerm};

    let mut out = Vec::new();
    let quantum = JetPolynomial::term(1, 1, 0, 0, 1) - JetPolynomial::term(1, 2, -1, 2, 0);
    let r = pde_residual(&quantum)?;
    out.push(check("residual of u2 - u1^2/(2 u0) is zero", r.is_zero(), r.to_string()));
    let minus_one = JetPolynomial::term(1, 1, -1, 1, 1) - JetPolynomial::term(2, 3, -2, 3, 0);
    let r = pde_residual(&minus_one)?;
    out.push(check("residual of u1 u2/u0 - 2 u1^3/(3 u0^2) is zero", r.is_zero(), r.to_string()));
    for n in [-3, -2, -1, 0, 3, 4] {
        let r = pde_residual(&family_member(0.0, &[FamilyTerm { n, c: 1.0 }])?)?;
        out.push(check(format!("family member n = {n} solves the PDE"), r.is_zero(), r.to_string()));
    }
    let r = pde_residual(&family_member(1.0, &[])?)?;
    out.push(check("linear term A u0 solves the PDE", r.is_zero(), r.to_string()));
    let power = JetPolynomial::term(2, 1, 2, 0, 0);
    let r = pde_residual(&power)?;
    out.push(check("power law 2 u0^2 does not solve the PDE", !r.is_zero(), r.to_string()));

    let basis = solve_recursions(lo, hi);
    let mut closed_form = true;
    let mut support = std::collections::BTreeSet::new();
    for g in &basis {
        let mut rebuilt = CoefficientGrid { lo, hi, c: BTreeMap::new(), d: BTreeMap::new() };
        for (&(n, m), v) in &g.c {
            if m != -n || n == 2 {
                closed_form = false;
                continue;
            }
            support.insert(n);
            rebuilt.c.insert((n, m), v.clone());
            let ratio = BigRational::new(BigInt::from(n - 1), BigInt::from(n - 2));
            let d = -(v * ratio);
            if !d.is_zero() {
                rebuilt.d.insert((n - 1, 2 - n), d);
            }
        }
        if let Some(a) = g.d.get(&(1, 0)) {
            rebuilt.d.insert((1, 0), a.clone());
        }
        closed_form &= rebuilt == *g && pde_residual(&g.beta()?)?.is_zero();
    }
    let with_a = basis.iter().filter(|g| g.d.contains_key(&(1, 0))).count();
    out.push(check(
        format!("nullspace over [{lo}, {hi}] lies in the closed-form family"),
        closed_form,
        format!("{} basis vectors", basis.len()),
    ));
    let expected = expected_members(lo, hi);
    let missing: Vec<i32> = expected.iter().copied().filter(|n| !support.contains(n)).collect();
    out.push(check(
        "nullspace contains every admissible member and the linear term",
        missing.is_empty() && with_a > 0 && basis.len() == support.len() + 1,
        format!("members {support:?}, missing {missing:?}"),
    ));
    for n in [1, 2] {
        let present = support.contains(&n);
        let detail = if present {
            format!("c_{{{n},{}}} is free; beta = u0^{n} u1^{} u2 solves the PDE", -n, -n)
        } else {
            format!("c_{{{n},{}}} = 0", -n)
        };
        out.push(check(format!("nullspace excludes n = {n}"), !present, detail));
    }

    for n in [-3, -2, -1, 0, 3, 4] {
        let c = first_order_criterion(&family_member(0.0, &[FamilyTerm { n, c: 1.0 }])?)?;
        let want = n == 0;
        out.push(check(
            format!("first-order criterion {} for n = {n}", if want { "holds" } else { "fails" }),
            c.holds == want,
            c.witness.to_string(),
        ));
    }
    Ok(out)
}
