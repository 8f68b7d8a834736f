//! The discretized right-hand side `F(u, t) = log det(g₀(t) + ddᶜu)/g₀ - u + f`
//! and its tridiagonal Jacobian.

use crate::ansatz::{InvariantForm, Profile, RhoGrid, Scenario};
use crate::picard::{a_of, b_of};

/// Three-point stencil rows: `(Lu)_j = lo_j u_{j-1} + di_j u_j + up_j u_{j+1}`.
#[derive(Debug, Clone)]
pub(crate) struct Stencil {
    pub lo: Vec<f64>,
    pub di: Vec<f64>,
    pub up: Vec<f64>,
}

impl Stencil {
    fn zero(n: usize) -> Self {
        Self {
            lo: vec![0.0; n],
            di: vec![0.0; n],
            up: vec![0.0; n],
        }
    }

    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        let n = u.len();
        (0..n)
            .map(|j| {
                let mut s = self.di[j] * u[j];
                if j > 0 {
                    s += self.lo[j] * u[j - 1];
                }
                if j + 1 < n {
                    s += self.up[j] * u[j + 1];
                }
                s
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
enum Reference {
    /// `g₀(t) = (p0 + a(t)p_η, q0 + a(t)q_η)`.
    Calabi {
        p0: Vec<f64>,
        q0: Vec<f64>,
        p_eta: Vec<f64>,
        q_eta: Vec<f64>,
        k: u32,
    },
    /// `g₀(t) = b(t)·g₀` with `g₀` the unit flat metric.
    Flat { dim: u32, r: Option<f64> },
}

/// The spatial operator of one scenario.
#[derive(Debug, Clone)]
pub struct FlowOperator {
    grid: RhoGrid,
    reference: Reference,
    /// `P₀Q₀` of the time-zero reference.
    ref_det: Vec<f64>,
    f: Vec<f64>,
    pub(crate) d1: Stencil,
    pub(crate) d2: Stencil,
}

/// Metric coefficients of `g₀(t) + ddᶜu` at every node.
#[derive(Debug, Clone)]
pub struct MetricValues {
    pub p: Vec<f64>,
    pub q: Vec<f64>,
}

impl MetricValues {
    pub fn is_positive(&self) -> bool {
        self.p.iter().chain(&self.q).all(|&x| x > 0.0)
    }
}

impl FlowOperator {
    pub fn new(scenario: &Scenario) -> Self {
        let grid = scenario.grid();
        let n = grid.nodes;
        let h = grid.spacing();
        let mut d1 = Stencil::zero(n);
        let mut d2 = Stencil::zero(n);
        // Even reflection at both ends: u' = 0 at ±R, so ddᶜu carries no class
        // and the curve pairings of g equal those of g₀(t) exactly.
        for j in 0..n {
            d2.di[j] = -2.0 / (h * h);
            if j > 0 {
                d2.lo[j] = 1.0 / (h * h);
            }
            if j + 1 < n {
                d2.up[j] = 1.0 / (h * h);
            }
        }
        d2.up[0] = 2.0 / (h * h);
        d2.lo[n - 1] = 2.0 / (h * h);
        let (reference, ref_det) = match scenario {
            Scenario::Calabi(c) => {
                for j in 1..n - 1 {
                    d1.lo[j] = -0.5 / h;
                    d1.up[j] = 0.5 / h;
                }
                let p0 = c.g0_form.p.values.clone();
                let q0 = c.g0_form.q.values.clone();
                let det = p0.iter().zip(&q0).map(|(p, q)| p * q).collect();
                (
                    Reference::Calabi {
                        p0,
                        q0,
                        p_eta: c.eta.p.values.clone(),
                        q_eta: c.eta.q.values.clone(),
                        k: c.k,
                    },
                    det,
                )
            }
            Scenario::Flat(fl) => (
                Reference::Flat {
                    dim: fl.dim,
                    r: scenario.r(),
                },
                vec![1.0; n],
            ),
        };
        Self {
            grid,
            reference,
            ref_det,
            f: scenario.f().values.clone(),
            d1,
            d2,
        }
    }

    pub fn grid(&self) -> RhoGrid {
        self.grid
    }

    pub fn nodes(&self) -> usize {
        self.grid.nodes
    }

    /// `(P, Q)` of the reference family `g₀(t)`.
    pub fn reference(&self, t: f64) -> MetricValues {
        match &self.reference {
            Reference::Calabi {
                p0,
                q0,
                p_eta,
                q_eta,
                ..
            } => {
                let a = a_of(t);
                MetricValues {
                    p: p0.iter().zip(p_eta).map(|(x, e)| x + a * e).collect(),
                    q: q0.iter().zip(q_eta).map(|(x, e)| x + a * e).collect(),
                }
            }
            Reference::Flat { r, .. } => {
                let b = b_of(*r, t);
                MetricValues {
                    p: vec![b; self.nodes()],
                    q: vec![b; self.nodes()],
                }
            }
        }
    }

    /// `(P, Q)` of the time-zero reference `g₀`.
    pub fn initial_reference(&self) -> MetricValues {
        match &self.reference {
            Reference::Calabi { p0, q0, .. } => MetricValues {
                p: p0.clone(),
                q: q0.clone(),
            },
            Reference::Flat { .. } => MetricValues {
                p: vec![1.0; self.nodes()],
                q: vec![1.0; self.nodes()],
            },
        }
    }

    /// `g₀(t) + ddᶜu`.
    pub fn metric(&self, u: &[f64], t: f64) -> MetricValues {
        let mut m = self.reference(t);
        for (p, d) in m.p.iter_mut().zip(self.d1.apply(u)) {
            *p += d;
        }
        for (q, d) in m.q.iter_mut().zip(self.d2.apply(u)) {
            *q += d;
        }
        m
    }

    /// Exponent of the transverse factor in the determinant.
    fn p_power(&self) -> f64 {
        match self.reference {
            Reference::Calabi { .. } => 1.0,
            Reference::Flat { dim, .. } => dim as f64 - 1.0,
        }
    }

    /// Nodewise `det(g/g₀)` for metric values `m`.
    pub fn det_ratio(&self, m: &MetricValues) -> Vec<f64> {
        let e = self.p_power();
        m.p.iter()
            .zip(&m.q)
            .zip(&self.ref_det)
            .map(|((&p, &q), &d)| {
                if e == 1.0 {
                    p * q / d
                } else {
                    p.powf(e) * q / d
                }
            })
            .collect()
    }

    /// `F(u, t)`; `None` when `g` is not positive somewhere.
    pub fn rhs(&self, u: &[f64], t: f64) -> Option<(Vec<f64>, MetricValues)> {
        let m = self.metric(u, t);
        if !m.is_positive() {
            return None;
        }
        let det = self.det_ratio(&m);
        let v = det
            .iter()
            .zip(u)
            .zip(&self.f)
            .map(|((d, u), f)| d.ln() - u + f)
            .collect();
        Some((v, m))
    }

    /// Tridiagonal Jacobian of `F` at metric values `m`.
    pub(crate) fn jacobian(&self, m: &MetricValues) -> Stencil {
        let n = self.nodes();
        let e = self.p_power();
        let mut j = Stencil::zero(n);
        for i in 0..n {
            let ip = e / m.p[i];
            let iq = 1.0 / m.q[i];
            j.lo[i] = ip * self.d1.lo[i] + iq * self.d2.lo[i];
            j.di[i] = ip * self.d1.di[i] + iq * self.d2.di[i] - 1.0;
            j.up[i] = ip * self.d1.up[i] + iq * self.d2.up[i];
        }
        j
    }

    /// Metric values as an invariant form (`k = 0` on the torus).
    pub fn form(&self, m: &MetricValues) -> InvariantForm {
        let k = match self.reference {
            Reference::Calabi { k, .. } => k,
            Reference::Flat { .. } => 0,
        };
        InvariantForm::new(
            Profile::new(self.grid, m.p.clone()),
            Profile::new(self.grid, m.q.clone()),
            k,
        )
    }

    pub fn f(&self) -> &[f64] {
        &self.f
    }

    pub fn is_flat(&self) -> bool {
        matches!(self.reference, Reference::Flat { .. })
    }

    /// `∫ exp(v + u - f) dV₀ = ∫ det(g/g₀) dV₀`, by the trapezoid rule.
    pub fn volume_of(&self, m: &MetricValues) -> f64 {
        let det = self.det_ratio(m);
        let w: Vec<f64> = det.iter().zip(&self.ref_det).map(|(a, b)| a * b).collect();
        Profile::new(self.grid, w).integral()
    }

    pub fn initial_volume(&self) -> f64 {
        Profile::new(self.grid, self.ref_det.clone()).integral()
    }
}

/// Solves the tridiagonal system `A x = rhs` by the Thomas algorithm.
pub(crate) fn solve_tridiagonal(a: &Stencil, rhs: &[f64]) -> Option<Vec<f64>> {
    let n = rhs.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut denom = a.di[0];
    if denom == 0.0 || !denom.is_finite() {
        return None;
    }
    c[0] = a.up[0] / denom;
    d[0] = rhs[0] / denom;
    for i in 1..n {
        denom = a.di[i] - a.lo[i] * c[i - 1];
        if denom == 0.0 || !denom.is_finite() {
            return None;
        }
        c[i] = if i + 1 < n { a.up[i] / denom } else { 0.0 };
        d[i] = (rhs[i] - a.lo[i] * d[i - 1]) / denom;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = d[i] - c[i] * x[i + 1];
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thomas_matches_dense_solution() {
        let n = 6;
        let a = Stencil {
            lo: vec![0.0, 1.0, -0.5, 0.3, 1.0, 2.0],
            di: vec![4.0, 5.0, 3.0, 4.0, 6.0, 7.0],
            up: vec![1.0, -1.0, 0.5, 1.0, 0.2, 0.0],
        };
        let x_true = [1.0, -2.0, 0.5, 3.0, -1.0, 0.25];
        let rhs = a.apply(&x_true);
        let x = solve_tridiagonal(&a, &rhs).unwrap();
        for i in 0..n {
            assert!((x[i] - x_true[i]).abs() < 1e-13);
        }
    }

    #[test]
    fn end_stencils_preserve_pairings() {
        use crate::ansatz::ScenarioSpec;
        use crate::picard::{DivisorClass, SurfaceKind};
        let grid = RhoGrid::new(10.0, 256).unwrap();
        let sc = ScenarioSpec::new(
            SurfaceKind::Hirzebruch(1),
            DivisorClass::from_ints(&[4, -1]),
            grid,
        )
        .build()
        .unwrap();
        let op = FlowOperator::new(&sc);
        let n = grid.nodes;
        // Constants are annihilated by both stencils at every node.
        let c = vec![2.5; n];
        assert!(op.d1.apply(&c).iter().all(|x| x.abs() < 1e-12));
        assert!(op.d2.apply(&c).iter().all(|x| x.abs() < 1e-12));
        // The ends see no first derivative, so pairings are those of g₀(t).
        let u: Vec<f64> = grid.rho().iter().map(|r| r.sin()).collect();
        let d1 = op.d1.apply(&u);
        assert_eq!(d1[0], 0.0);
        assert_eq!(d1[n - 1], 0.0);
        let m = op.metric(&u, 0.3);
        let r = op.reference(0.3);
        assert_eq!((m.p[0], m.p[n - 1]), (r.p[0], r.p[n - 1]));
    }

    #[test]
    fn rhs_at_zero_is_f() {
        use crate::ansatz::ScenarioSpec;
        use crate::picard::{DivisorClass, SurfaceKind};
        let grid = RhoGrid::new(15.0, 512).unwrap();
        let sc = ScenarioSpec::new(
            SurfaceKind::Hirzebruch(1),
            DivisorClass::from_ints(&[4, -1]),
            grid,
        )
        .build()
        .unwrap();
        let op = FlowOperator::new(&sc);
        let (v, _) = op.rhs(&vec![0.0; grid.nodes], 0.0).unwrap();
        assert_eq!(v, sc.f().values);
    }
}
