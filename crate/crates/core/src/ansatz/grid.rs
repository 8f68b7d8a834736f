use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

pub const MIN_NODES: usize = 64;
pub const MIN_HALF_WIDTH: f64 = 8.0;

/// Uniform grid `ρ_j = -R + 2Rj/(N-1)` on the truncated symmetry axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RhoGrid {
    pub half_width: f64,
    pub nodes: usize,
}

impl RhoGrid {
    pub fn new(half_width: f64, nodes: usize) -> Result<Self> {
        if nodes < MIN_NODES {
            return Err(LabError::InvalidGrid(format!(
                "N = {nodes} is below the minimum of {MIN_NODES} nodes"
            )));
        }
        if !(half_width >= MIN_HALF_WIDTH) || !half_width.is_finite() {
            return Err(LabError::InvalidGrid(format!(
                "R = {half_width} is below the minimum half-width {MIN_HALF_WIDTH}"
            )));
        }
        Ok(Self { half_width, nodes })
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / (self.nodes - 1) as f64
    }

    pub fn node(&self, j: usize) -> f64 {
        -self.half_width + self.spacing() * j as f64
    }

    pub fn rho(&self) -> Vec<f64> {
        (0..self.nodes).map(|j| self.node(j)).collect()
    }

    /// Index of the node closest to `rho` (clamped to the grid).
    pub fn nearest(&self, rho: f64) -> usize {
        let x = (rho + self.half_width) / self.spacing();
        (x.round().max(0.0) as usize).min(self.nodes - 1)
    }

    pub fn doubled(&self) -> Self {
        Self {
            half_width: self.half_width,
            nodes: 2 * self.nodes,
        }
    }
}

/// A real function sampled on a [`RhoGrid`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    pub grid: RhoGrid,
    pub values: Vec<f64>,
}

impl Profile {
    pub fn new(grid: RhoGrid, values: Vec<f64>) -> Self {
        assert_eq!(
            values.len(),
            grid.nodes,
            "profile length must match the grid"
        );
        Self { grid, values }
    }

    pub fn from_fn(grid: RhoGrid, f: impl Fn(f64) -> f64) -> Self {
        Self::new(grid, grid.rho().into_iter().map(f).collect())
    }

    pub fn constant(grid: RhoGrid, c: f64) -> Self {
        Self::new(grid, vec![c; grid.nodes])
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::new(self.grid, self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_with(&self, other: &Profile, f: impl Fn(f64, f64) -> f64) -> Self {
        assert_eq!(self.grid, other.grid, "profiles live on different grids");
        Self::new(
            self.grid,
            self.values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        )
    }

    pub fn add(&self, other: &Profile) -> Self {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Profile) -> Self {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|v| s * v)
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn argmax(&self) -> usize {
        argext(&self.values, |a, b| a > b)
    }

    pub fn argmin(&self) -> usize {
        argext(&self.values, |a, b| a < b)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn sup_diff(&self, other: &Profile) -> f64 {
        self.sub(other).max_abs()
    }

    /// First derivative: centered in the interior, one-sided second order at the ends.
    pub fn derivative(&self) -> Profile {
        let h = self.grid.spacing();
        let f = &self.values;
        let n = f.len();
        let mut d = vec![0.0; n];
        for j in 1..n - 1 {
            d[j] = (f[j + 1] - f[j - 1]) / (2.0 * h);
        }
        d[0] = (-3.0 * f[0] + 4.0 * f[1] - f[2]) / (2.0 * h);
        d[n - 1] = (3.0 * f[n - 1] - 4.0 * f[n - 2] + f[n - 3]) / (2.0 * h);
        Profile::new(self.grid, d)
    }

    /// Second derivative: centered in the interior, one-sided second order at the ends.
    pub fn second_derivative(&self) -> Profile {
        let h2 = self.grid.spacing().powi(2);
        let f = &self.values;
        let n = f.len();
        let mut d = vec![0.0; n];
        for j in 1..n - 1 {
            d[j] = (f[j + 1] - 2.0 * f[j] + f[j - 1]) / h2;
        }
        d[0] = (2.0 * f[0] - 5.0 * f[1] + 4.0 * f[2] - f[3]) / h2;
        d[n - 1] = (2.0 * f[n - 1] - 5.0 * f[n - 2] + 4.0 * f[n - 3] - f[n - 4]) / h2;
        Profile::new(self.grid, d)
    }

    /// Trapezoid rule over the whole grid.
    pub fn integral(&self) -> f64 {
        let h = self.grid.spacing();
        let f = &self.values;
        let inner: f64 = f[1..f.len() - 1].iter().sum();
        h * (inner + 0.5 * (f[0] + f[f.len() - 1]))
    }

    /// Running trapezoid integral starting at zero on the left end.
    pub fn cumulative_integral(&self) -> Profile {
        let h = self.grid.spacing();
        let mut acc = 0.0;
        let mut out = Vec::with_capacity(self.len());
        out.push(0.0);
        for w in self.values.windows(2) {
            acc += 0.5 * h * (w[0] + w[1]);
            out.push(acc);
        }
        Profile::new(self.grid, out)
    }

    /// `∫ self · weight / ∫ weight`.
    pub fn weighted_mean(&self, weight: &Profile) -> f64 {
        self.zip_with(weight, |a, w| a * w).integral() / weight.integral()
    }

    /// Four-point Lagrange interpolation (fourth order), clamped to the grid.
    pub fn interpolate(&self, rho: f64) -> f64 {
        let h = self.grid.spacing();
        let n = self.len();
        let x = ((rho + self.grid.half_width) / h).clamp(0.0, (n - 1) as f64);
        let base = (x.floor() as isize - 1).clamp(0, n as isize - 4) as usize;
        let s = x - base as f64;
        let mut acc = 0.0;
        for i in 0..4 {
            let mut w = 1.0;
            for m in 0..4 {
                if m != i {
                    w *= (s - m as f64) / (i as f64 - m as f64);
                }
            }
            acc += w * self.values[base + i];
        }
        acc
    }

    /// Resample onto another grid with [`Profile::interpolate`].
    pub fn resample(&self, grid: RhoGrid) -> Profile {
        Profile::from_fn(grid, |r| self.interpolate(r))
    }
}

fn argext(v: &[f64], better: impl Fn(f64, f64) -> bool) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if better(x, v[best]) {
            best = i;
        }
    }
    best
}

/// `log(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// The logistic function `1 / (1 + e^{-x})`.
pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_validation() {
        assert!(RhoGrid::new(15.0, 10).is_err());
        assert!(RhoGrid::new(4.0, 128).is_err());
        let g = RhoGrid::new(15.0, 2048).unwrap();
        assert_eq!(g.node(0), -15.0);
        assert!((g.node(2047) - 15.0).abs() < 1e-12);
        assert_eq!(g.nearest(-15.0), 0);
        assert_eq!(g.nearest(40.0), 2047);
    }

    #[test]
    fn derivatives_are_second_order() {
        let err = |n: usize| {
            let g = RhoGrid::new(8.0, n).unwrap();
            let f = Profile::from_fn(g, |x| (0.3 * x).sin());
            let d1 = f
                .derivative()
                .sub(&Profile::from_fn(g, |x| 0.3 * (0.3 * x).cos()));
            let d2 = f
                .second_derivative()
                .add(&Profile::from_fn(g, |x| 0.09 * (0.3 * x).sin()));
            (d1.max_abs(), d2.max_abs())
        };
        let (a1, a2) = err(128);
        let (b1, b2) = err(256);
        assert!(a1 / b1 > 3.5, "first derivative ratio {}", a1 / b1);
        assert!(a2 / b2 > 3.5, "second derivative ratio {}", a2 / b2);
    }

    #[test]
    fn integrals() {
        let g = RhoGrid::new(10.0, 1001).unwrap();
        let f = Profile::from_fn(g, |x| (-x * x).exp());
        assert!((f.integral() - std::f64::consts::PI.sqrt()).abs() < 1e-12);
        let c = Profile::constant(g, 2.0).cumulative_integral();
        assert!((c.values[1000] - 40.0).abs() < 1e-12);
        let w = Profile::constant(g, 1.0);
        assert!((Profile::constant(g, 3.0).weighted_mean(&w) - 3.0).abs() < 1e-14);
    }

    #[test]
    fn interpolation_is_accurate() {
        let g = RhoGrid::new(8.0, 200).unwrap();
        let f = Profile::from_fn(g, |x| x.cos());
        for x in [-7.9, -1.234, 0.0, 3.3, 7.99] {
            assert!((f.interpolate(x) - x.cos()).abs() < 1e-5);
        }
    }

    #[test]
    fn softplus_and_logistic() {
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-15);
        assert!((softplus(800.0) - 800.0).abs() < 1e-12);
        assert!(softplus(-800.0) >= 0.0);
        assert!((logistic(0.0) - 0.5).abs() < 1e-15);
        assert!(logistic(-800.0) >= 0.0 && logistic(800.0) <= 1.0);
    }
}
