//! Random smooth states shared by the property tests.
#![allow(dead_code)]

use proptest::prelude::*;
use statfield::fields::{Field, FieldState, Grid};

#[derive(Debug, Clone)]
pub struct Mixture {
    /// (weight, centre, width)
    pub bumps: Vec<(f64, f64, f64)>,
    pub p0: f64,
    /// (amplitude, centre) of a Gaussian bump in S.
    pub phase_bump: (f64, f64),
}

impl Mixture {
    pub fn rho(&self, x: f64) -> f64 {
        self.bumps.iter().map(|&(w, c, s)| w * (-(x - c) * (x - c) / (2.0 * s * s)).exp() / s).sum()
    }

    pub fn phase(&self, x: f64) -> f64 {
        let (a, c) = self.phase_bump;
        self.p0 * x + a * (-(x - c) * (x - c)).exp()
    }

    pub fn state(&self, grid: Grid) -> FieldState {
        FieldState::new(Field::from_fn(grid, |x| self.rho(x)), Field::from_fn(grid, |x| self.phase(x)), 0.0)
            .expect("positive mixture")
    }
}

pub fn mixture() -> impl Strategy<Value = Mixture> {
    (
        prop::collection::vec((0.2f64..1.0, -2.0f64..2.0, 0.7f64..1.5), 1..=3),
        -1.5f64..1.5,
        (-0.8f64..0.8, -1.5f64..1.5),
    )
        .prop_map(|(bumps, p0, phase_bump)| Mixture { bumps, p0, phase_bump })
}

pub fn wide_grid() -> Grid {
    Grid::new(-20.0, 20.0, 1024).unwrap()
}
