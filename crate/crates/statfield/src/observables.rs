//! Scalar functionals: means, Ehrenfest residuals, Fisher information and entropies.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fields::{central_d1, floor_value, trapezoid, Field, Grid, Spectral};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObservableRecord {
    pub t: f64,
    pub x_mean: f64,
    pub p_mean: f64,
    pub f_mean: f64,
    pub t_mean: f64,
    pub v_mean: f64,
    pub e_mean: f64,
    pub fisher_i: f64,
    pub entropy: f64,
    pub ehrenfest_r1: f64,
    pub ehrenfest_r2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Means {
    pub x: f64,
    pub p: f64,
    pub f: f64,
    pub v: f64,
}

/// Means of x, p = S', F = -V' and V under `rho`; `momentum` holds S' per grid point.
pub fn means(rho: &Field, momentum: &[f64], potential: &Field) -> Means {
    let grid = rho.grid;
    let r = &rho.values;
    let dv = central_d1(&potential.values, grid.dx());
    let xs = grid.points();
    let weighted = |f: &dyn Fn(usize) -> f64| -> f64 {
        let v: Vec<f64> = (0..grid.n).map(|k| r[k] * f(k)).collect();
        grid.integrate(&v)
    };
    Means {
        x: weighted(&|k| xs[k]),
        p: weighted(&|k| momentum[k]),
        f: -weighted(&|k| dv[k]),
        v: weighted(&|k| potential.values[k]),
    }
}

/// Fornberg weights for the first derivative at `x0` from the nodes `xs`.
fn first_derivative_weights(x0: f64, xs: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let mut c = vec![[0.0f64; 2]; n];
    let mut c1 = 1.0;
    let mut c4 = xs[0] - x0;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(1);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = xs[i] - x0;
        for j in 0..i {
            let c3 = xs[i] - xs[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[j][k] = (c4 * c[j][k] - k as f64 * c[j][k - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    c.iter().map(|w| w[1]).collect()
}

/// Fourth-order time derivative of a sampled series (5-point stencils, shifted at the ends).
pub fn time_derivative(t: &[f64], y: &[f64]) -> Result<Vec<f64>> {
    let n = t.len();
    if n < 5 || y.len() != n {
        return Err(Error::Invalid("need at least 5 equally long samples".into()));
    }
    Ok((0..n)
        .map(|i| {
            let start = i.saturating_sub(2).min(n - 5);
            let w = first_derivative_weights(t[i], &t[start..start + 5]);
            w.iter().zip(&y[start..start + 5]).map(|(a, b)| a * b).sum()
        })
        .collect())
}

/// r1 = dx/dt - p/m and r2 = dp/dt - F along recorded series.
pub fn ehrenfest_residuals(records: &[ObservableRecord], mass: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let t: Vec<f64> = records.iter().map(|r| r.t).collect();
    let x: Vec<f64> = records.iter().map(|r| r.x_mean).collect();
    let p: Vec<f64> = records.iter().map(|r| r.p_mean).collect();
    let dx = time_derivative(&t, &x)?;
    let dp = time_derivative(&t, &p)?;
    let r1 = dx.iter().zip(records).map(|(d, r)| d - r.p_mean / mass).collect();
    let r2 = dp.iter().zip(records).map(|(d, r)| d - r.f_mean).collect();
    Ok((r1, r2))
}

/// Residuals relative to a velocity scale (max of |p/m| and the rms speed sqrt(2T/m)) and a
/// force scale (max of |F| and m times that velocity over the recorded span).
///
/// The rms terms keep the ratio meaningful for states whose mean momentum or force vanishes.
pub fn ehrenfest_relative(records: &[ObservableRecord], mass: f64) -> (f64, f64) {
    let maxabs = |f: &dyn Fn(&ObservableRecord) -> f64| records.iter().map(|r| f(r).abs()).fold(0.0, f64::max);
    let r1 = maxabs(&|r| r.ehrenfest_r1);
    let r2 = maxabs(&|r| r.ehrenfest_r2);
    let speed = maxabs(&|r| r.p_mean / mass).max(maxabs(&|r| (2.0 * r.t_mean.max(0.0) / mass).sqrt()));
    let span = match (records.first(), records.last()) {
        (Some(a), Some(b)) if b.t > a.t => b.t - a.t,
        _ => 1.0,
    };
    let force = maxabs(&|r| r.f_mean).max(mass * speed / span);
    (ratio(r1, speed), ratio(r2, force))
}

fn ratio(a: f64, scale: f64) -> f64 {
    if scale > 0.0 {
        a / scale
    } else {
        a
    }
}

/// I = integral of rho'^2 / rho over above-floor points, with a spectral rho'.
pub fn fisher_information(rho: &Field) -> f64 {
    let sp = Spectral::new(rho.grid.n, rho.grid.dx());
    fisher_from_slope(&rho.values, &sp.derivative_real(&rho.values, 1), rho.grid.dx())
}

fn fisher_from_slope(r: &[f64], r1: &[f64], dx: f64) -> f64 {
    let floor = floor_value(r);
    let v: Vec<f64> = r.iter().zip(r1).map(|(&p, &d)| if p > floor { d * d / p } else { 0.0 }).collect();
    trapezoid(&v, dx)
}

/// -integral of rho ln rho (k = 1) over above-floor points.
pub fn shannon_entropy(rho: &Field) -> f64 {
    let floor = floor_value(&rho.values);
    let v: Vec<f64> = rho.values.iter().map(|&p| if p > floor { -p * p.ln() } else { 0.0 }).collect();
    rho.grid.integrate(&v)
}

/// -sum p ln p with 0 ln 0 = 0.
pub fn discrete_entropy(probs: &[f64]) -> f64 {
    probs.iter().filter(|&&p| p > 0.0).map(|&p| -p * p.ln()).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ShiftEntropy {
    pub shift: f64,
    /// G = -integral rho(x) ln[rho(x) / rho(x + shift)].
    pub g: f64,
    /// -shift^2 I / 2.
    pub expansion: f64,
}

/// Relative entropy of `rho` against its translate, with cubic interpolation of the shifted samples.
pub fn relative_entropy_shift(rho: &Field, shift: f64) -> ShiftEntropy {
    let grid = rho.grid;
    let r = &rho.values;
    let n = grid.n;
    let dx = grid.dx();
    let floor = floor_value(r);
    let mut v = vec![0.0; n];
    for k in 0..n {
        if r[k] <= floor {
            continue;
        }
        let Some(shifted) = cubic_sample(r, k as f64 + shift / dx) else {
            continue;
        };
        if shifted > floor {
            v[k] = -r[k] * (r[k] / shifted).ln();
        }
    }
    let g = trapezoid(&v, dx);
    ShiftEntropy { shift, g, expansion: -shift * shift * fisher_information(rho) / 2.0 }
}

/// Four-point Lagrange interpolation at fractional index `s`; exact at integer `s`.
fn cubic_sample(f: &[f64], s: f64) -> Option<f64> {
    let n = f.len() as isize;
    let j = s.floor() as isize;
    let u = s - j as f64;
    if u == 0.0 {
        return (0..n).contains(&j).then(|| f[j as usize]);
    }
    if j < 1 || j + 2 >= n {
        return None;
    }
    let j = j as usize;
    let w = [
        -u * (u - 1.0) * (u - 2.0) / 6.0,
        (u + 1.0) * (u - 1.0) * (u - 2.0) / 2.0,
        -(u + 1.0) * u * (u - 2.0) / 2.0,
        (u + 1.0) * u * (u - 1.0) / 6.0,
    ];
    Some(w[0] * f[j - 1] + w[1] * f[j] + w[2] * f[j + 1] + w[3] * f[j + 2])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CompositionReport {
    pub entropy_1: f64,
    pub entropy_2: f64,
    pub entropy_joint: f64,
    pub fisher_1: f64,
    pub fisher_2: f64,
    pub fisher_joint: f64,
    pub entropy_defect: f64,
    pub fisher_defect: f64,
    pub pass: bool,
}

pub const COMPOSITION_TOL: f64 = 1e-8;

/// Builds rho1(x) rho2(y) on the tensor grid and compares joint functionals with the 1-D sums.
pub fn entropy_composition_check(rho1: &Field, rho2: &Field) -> CompositionReport {
    let (g1, g2) = (rho1.grid, rho2.grid);
    let joint: Vec<Vec<f64>> = rho1.values.iter().map(|&a| rho2.values.iter().map(|&b| a * b).collect()).collect();
    let (entropy_joint, fisher_joint) = joint_functionals(&joint, g1, g2);
    let entropy_1 = shannon_entropy(rho1);
    let entropy_2 = shannon_entropy(rho2);
    let fisher_1 = fisher_information(rho1);
    let fisher_2 = fisher_information(rho2);
    let entropy_defect = (entropy_joint - entropy_1 - entropy_2).abs();
    let fisher_defect = (fisher_joint - fisher_1 - fisher_2).abs();
    let pass = entropy_defect <= COMPOSITION_TOL * (1.0 + entropy_joint.abs())
        && fisher_defect <= COMPOSITION_TOL * (1.0 + fisher_joint.abs());
    CompositionReport {
        entropy_1,
        entropy_2,
        entropy_joint,
        fisher_1,
        fisher_2,
        fisher_joint,
        entropy_defect,
        fisher_defect,
        pass,
    }
}

fn joint_functionals(rho: &[Vec<f64>], g1: Grid, g2: Grid) -> (f64, f64) {
    let (n1, n2) = (g1.n, g2.n);
    let max = rho.iter().flatten().cloned().fold(0.0, f64::max);
    let floor = crate::fields::DENSITY_FLOOR * max;
    let sp1 = Spectral::new(n1, g1.dx());
    let sp2 = Spectral::new(n2, g2.dx());
    let d2: Vec<Vec<f64>> = rho.iter().map(|row| sp2.derivative_real(row, 1)).collect();
    let mut d1 = vec![vec![0.0; n2]; n1];
    for j in 0..n2 {
        let col: Vec<f64> = (0..n1).map(|i| rho[i][j]).collect();
        for (i, v) in sp1.derivative_real(&col, 1).into_iter().enumerate() {
            d1[i][j] = v;
        }
    }
    let mut ent_rows = vec![0.0; n1];
    let mut fis_rows = vec![0.0; n1];
    for i in 0..n1 {
        let e: Vec<f64> = rho[i].iter().map(|&p| if p > floor { -p * p.ln() } else { 0.0 }).collect();
        let f: Vec<f64> = (0..n2)
            .map(|j| {
                let p = rho[i][j];
                if p > floor {
                    (d1[i][j] * d1[i][j] + d2[i][j] * d2[i][j]) / p
                } else {
                    0.0
                }
            })
            .collect();
        ent_rows[i] = g2.integrate(&e);
        fis_rows[i] = g2.integrate(&f);
    }
    (g1.integrate(&ent_rows), g1.integrate(&fis_rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::gaussian;
    use std::f64::consts::{E, PI};

    #[test]
    fn gaussian_means() {
        let g = Grid::new(-15.0, 15.0, 1024).unwrap();
        let (mu, sigma, k, m, w) = (0.7, 1.2, 0.3, 2.0, 1.5);
        let rho = gaussian(g, mu, sigma);
        let zero = vec![0.0; g.n];
        let lin = means(&rho, &zero, &Field::from_fn(g, |x| k * x));
        assert!((lin.f + k).abs() < 1e-12);
        assert!((lin.x - mu).abs() < 1e-12);
        let ho = means(&rho, &zero, &Field::from_fn(g, |x| 0.5 * m * w * w * x * x));
        assert!((ho.v - 0.5 * m * w * w * (mu * mu + sigma * sigma)).abs() < 1e-10);
    }

    #[test]
    fn parity_zeroes_means() {
        let g = Grid::new(-10.0, 10.0, 512).unwrap();
        let rho = gaussian(g, 0.0, 1.0);
        let v = Field::from_fn(g, |x| x * x + 0.1 * x.powi(4));
        let m = means(&rho, &vec![0.0; g.n], &v);
        // The grid is not symmetric about 0 (x_max excluded) but rho vanishes there.
        assert!(m.x.abs() < 1e-12 && m.f.abs() < 1e-10);
    }

    #[test]
    fn time_derivative_is_fourth_order_exact_on_quartics() {
        let t: Vec<f64> = (0..9).map(|i| 0.1 * i as f64 + if i == 8 { 0.03 } else { 0.0 }).collect();
        let y: Vec<f64> = t.iter().map(|t| 1.0 + t - 2.0 * t * t + t.powi(4)).collect();
        let d = time_derivative(&t, &y).unwrap();
        for (ti, di) in t.iter().zip(&d) {
            assert!((di - (1.0 - 4.0 * ti + 4.0 * ti.powi(3))).abs() < 1e-10);
        }
        assert!(time_derivative(&t[..4], &y[..4]).is_err());
    }

    #[test]
    fn gaussian_fisher_and_entropy() {
        let g = Grid::new(-20.0, 20.0, 1024).unwrap();
        let sigma = 1.7;
        let rho = gaussian(g, 0.3, sigma);
        let i = fisher_information(&rho);
        assert!((i * sigma * sigma - 1.0).abs() < 1e-10);
        let s = shannon_entropy(&rho);
        assert!((s - 0.5 * (2.0 * PI * E * sigma * sigma).ln()).abs() < 1e-10);
    }

    #[test]
    fn discrete_entropy_limits() {
        let n = 7;
        assert!((discrete_entropy(&vec![1.0 / n as f64; n]) - (n as f64).ln()).abs() < 1e-15);
        assert_eq!(discrete_entropy(&[0.0, 1.0, 0.0]), 0.0);
    }

    #[test]
    fn fisher_scaling() {
        let g = Grid::new(-30.0, 30.0, 2048).unwrap();
        let base = |x: f64| (-x * x / 2.0).exp() * (1.0 + 0.3 * (x).sin().powi(2));
        let rho = Field::from_fn(g, base).normalized_density().unwrap();
        for lambda in [0.7, 1.6] {
            let scaled = Field::from_fn(g, |x| base(x / lambda) / lambda).normalized_density().unwrap();
            let r = fisher_information(&scaled) * lambda * lambda / fisher_information(&rho);
            assert!((r - 1.0).abs() < 1e-8, "{r}");
        }
    }

    #[test]
    fn shift_entropy_gaussian() {
        let g = Grid::new(-10.0, 10.0, 2000).unwrap();
        let rho = gaussian(g, 0.0, 1.0);
        assert_eq!(relative_entropy_shift(&rho, 0.0).g, 0.0);
        let s = relative_entropy_shift(&rho, 0.01);
        assert!((s.g / -5e-5 - 1.0).abs() < 1e-2);
        assert!((s.g / s.expansion - 1.0).abs() < 1e-6);
    }

    #[test]
    fn composition_uniform_adds_nothing() {
        let g1 = Grid::new(-10.0, 10.0, 256).unwrap();
        let unit = Grid::new(0.0, 1.0, 64).unwrap();
        let rho1 = gaussian(g1, 0.0, 1.0);
        // Trapezoid over the sampled points of [0, 63/64]; constant samples normalize to 64/63.
        let uni = Field::from_fn(unit, |_| 1.0).normalized_density().unwrap();
        let rep = entropy_composition_check(&rho1, &uni);
        assert!(rep.pass, "{rep:?}");
        assert!((rep.fisher_2).abs() < 1e-12);
        let twin = entropy_composition_check(&rho1, &rho1);
        assert!(twin.pass);
        assert!((twin.entropy_joint - 2.0 * twin.entropy_1).abs() < 1e-8);
    }
}
