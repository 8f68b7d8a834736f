//! Rotation-invariant (1,1)-forms on `F_k`.
//!
//! A form is a pair `(p, q)` meaning `p·k·ω_FS + q·dρ∧dᶜρ`; closed forms have
//! `q = p'`, and `ddᶜG = (G', G'')` for a function `G(ρ)`. Pairings with the
//! fiber and the negative section are `⟨α, F⟩ = p(R) - p(-R)` and
//! `⟨α, E⟩ = k·p(-R)`.

use serde::{Deserialize, Serialize};

use super::grid::{softplus, Profile, RhoGrid};
use crate::error::{LabError, Result};
use crate::picard::{intersect_real, RealClass, SurfaceKind, SurfaceModel};

/// Relative closedness tolerance used when none is supplied.
pub const DEFAULT_CLOSED_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvariantForm {
    pub p: Profile,
    pub q: Profile,
    pub k: u32,
}

impl InvariantForm {
    pub fn new(p: Profile, q: Profile, k: u32) -> Self {
        assert_eq!(p.grid, q.grid, "form components on different grids");
        Self { p, q, k }
    }

    pub fn zero(grid: RhoGrid, k: u32) -> Self {
        Self::new(
            Profile::constant(grid, 0.0),
            Profile::constant(grid, 0.0),
            k,
        )
    }

    pub fn grid(&self) -> RhoGrid {
        self.p.grid
    }

    pub fn add(&self, other: &Self) -> Self {
        Self::new(self.p.add(&other.p), self.q.add(&other.q), self.k)
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self::new(self.p.sub(&other.p), self.q.sub(&other.q), self.k)
    }

    pub fn scale(&self, s: f64) -> Self {
        Self::new(self.p.scale(s), self.q.scale(s), self.k)
    }

    /// Adds the constant base term `c·k·ω_FS`, which is `ddᶜ(cρ)`.
    pub fn shift_base(&self, c: f64) -> Self {
        Self::new(self.p.map(|v| v + c), self.q.clone(), self.k)
    }

    /// Largest interior mismatch between `p'` and `q`.
    ///
    /// Uses the compact pairing `(p_{j+1} - p_{j-1})/2h` against
    /// `(q_{j+1} + 2q_j + q_{j-1})/4`, which vanishes identically when
    /// `(p, q)` are the centered differences of one potential. Nodes next to
    /// the ends are skipped since the end values use one-sided stencils.
    pub fn closedness_defect(&self) -> f64 {
        let h = self.grid().spacing();
        let p = &self.p.values;
        let q = &self.q.values;
        (2..p.len() - 2)
            .map(|j| {
                let dp = (p[j + 1] - p[j - 1]) / (2.0 * h);
                let qa = 0.25 * (q[j + 1] + 2.0 * q[j] + q[j - 1]);
                (dp - qa).abs()
            })
            .fold(0.0, f64::max)
    }

    pub fn check_closed(&self, rel_tol: f64) -> Result<()> {
        let tol = rel_tol * self.q.max_abs() + 1e-13 * (1.0 + self.p.max_abs());
        let defect = self.closedness_defect();
        if defect > tol {
            return Err(LabError::NotClosed { defect, tol });
        }
        Ok(())
    }

    pub fn is_nonnegative(&self) -> bool {
        self.p.values.iter().all(|&v| v >= 0.0) && self.q.values.iter().all(|&v| v >= 0.0)
    }

    /// `(⟨α, E⟩, ⟨α, F⟩)`.
    pub fn pairings(&self) -> (f64, f64) {
        let p = &self.p.values;
        let lo = p[0];
        let hi = p[p.len() - 1];
        (self.k as f64 * lo, hi - lo)
    }
}

/// `ddᶜF = (F', F'')`.
pub fn form_of_potential(f: &Profile, k: u32) -> InvariantForm {
    InvariantForm::new(f.derivative(), f.second_derivative(), k)
}

/// Inverts [`form_of_potential`]: integrates `p` and fixes the constant so the
/// `volume`-weighted mean equals `gauge`.
pub fn potential_of_form(form: &InvariantForm, gauge: f64, volume: &Profile) -> Result<Profile> {
    form.check_closed(DEFAULT_CLOSED_TOL)?;
    let raw = form.p.cumulative_integral();
    let shift = gauge - raw.weighted_mean(volume);
    Ok(raw.map(|v| v + shift))
}

/// Reconstructs the class of a closed form from its curve pairings.
pub fn class_of(form: &InvariantForm, s: &SurfaceModel) -> Result<RealClass> {
    match s.kind {
        SurfaceKind::Hirzebruch(k) if k == form.k => {}
        _ => {
            return Err(LabError::Precondition(format!(
                "class extraction needs F{} but got {}",
                form.k,
                s.name()
            )))
        }
    }
    let (pe, pf) = form.pairings();
    let measured = [pe, pf];
    let curves: Vec<Vec<f64>> = ["E", "F"]
        .iter()
        .map(|l| s.curve(l).expect("Hirzebruch basis").class.to_real().coeffs)
        .collect();
    // Solve Σ_j x_j (e_j · C_i) = measured_i.
    let rank = s.picard_rank();
    let mut m = vec![vec![0.0; rank]; rank];
    for (i, c) in curves.iter().enumerate() {
        for (j, row) in m[i].iter_mut().enumerate() {
            let mut e = vec![0.0; rank];
            e[j] = 1.0;
            *row = intersect_real(&e, c, s);
        }
    }
    let coeffs = solve2(&m, &measured).ok_or(LabError::SingularSystem)?;
    Ok(RealClass { coeffs })
}

fn solve2(m: &[Vec<f64>], b: &[f64; 2]) -> Option<Vec<f64>> {
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    if det.abs() < 1e-14 {
        return None;
    }
    Some(vec![
        (b[0] * m[1][1] - m[0][1] * b[1]) / det,
        (m[0][0] * b[1] - b[0] * m[1][0]) / det,
    ])
}

/// A metric given by its momentum potential `U`: `k·U'·ω_FS + U''·dρ∧dᶜρ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricProfile {
    pub potential: Profile,
    pub k: u32,
}

impl MetricProfile {
    pub fn new(potential: Profile, k: u32) -> Self {
        Self { potential, k }
    }

    pub fn grid(&self) -> RhoGrid {
        self.potential.grid
    }

    pub fn form(&self) -> InvariantForm {
        form_of_potential(&self.potential, self.k)
    }

    pub fn scale(&self, c: f64) -> Self {
        Self::new(self.potential.scale(c), self.k)
    }

    pub fn check_positive(&self) -> Result<()> {
        check_positive(&self.form())
    }

    /// A random smooth positive metric `U = cρ + Σ wᵢ·softplus(ρ - xᵢ)`.
    ///
    /// Unit widths keep `U'' ~ e^{-|ρ|}` at both ends; a width `s` would
    /// leave a cone of angle `2π/s` there.
    pub fn random<R: rand::Rng>(grid: RhoGrid, k: u32, rng: &mut R) -> Self {
        let c = rng.gen_range(0.2..2.0) / k as f64;
        let terms: Vec<(f64, f64)> = (0..rng.gen_range(1..=4))
            .map(|_| (rng.gen_range(0.2..2.0), rng.gen_range(-3.0..3.0)))
            .collect();
        let u = Profile::from_fn(grid, |r| {
            c * r + terms.iter().map(|&(w, x)| w * softplus(r - x)).sum::<f64>()
        });
        Self::new(u, k)
    }
}

pub(crate) fn check_positive(form: &InvariantForm) -> Result<()> {
    for (j, (&p, &q)) in form.p.values.iter().zip(&form.q.values).enumerate() {
        if !(p > 0.0 && q > 0.0) {
            return Err(LabError::NotPositive { node: j, p, q });
        }
    }
    Ok(())
}

/// The Ricci form of a positive metric form:
/// `Ric = -ddᶜ[log(U'U'') - ρ] - (k-2)ω_FS`.
pub fn ricci_of_form(g: &InvariantForm) -> Result<InvariantForm> {
    check_positive(g)?;
    let grid = g.grid();
    let potential = Profile::new(
        grid,
        g.p.values
            .iter()
            .zip(&g.q.values)
            .zip(grid.rho())
            .map(|((&p, &q), r)| (p * q).ln() - r)
            .collect(),
    );
    let k = g.k as f64;
    let mut form = form_of_potential(&potential, g.k);
    // The end values fix the class. Near the ends log(PQ) - ρ is affine up to
    // exponentially small terms, so a least-squares slope over a unit window
    // damps the round-off that one-sided differences amplify.
    let n = grid.nodes;
    let m = ((1.0 / grid.spacing()).ceil() as usize).clamp(3, n / 4);
    form.p.values[0] = ls_slope(&grid.rho()[..m], &potential.values[..m]);
    form.p.values[n - 1] = ls_slope(&grid.rho()[n - m..], &potential.values[n - m..]);
    Ok(form.scale(-1.0).shift_base(-(k - 2.0) / k))
}

fn ls_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

pub fn ricci_form(g: &MetricProfile) -> Result<InvariantForm> {
    ricci_of_form(&g.form())
}

/// Nodewise `det(g/g_ref) = (P Q)/(P_ref Q_ref)` for forms.
pub fn det_ratio_forms(g: &InvariantForm, g_ref: &InvariantForm) -> Profile {
    let num = g.p.zip_with(&g.q, |p, q| p * q);
    let den = g_ref.p.zip_with(&g_ref.q, |p, q| p * q);
    num.zip_with(&den, |a, b| a / b)
}

pub fn det_ratio(g: &MetricProfile, g_ref: &MetricProfile) -> Profile {
    det_ratio_forms(&g.form(), &g_ref.form())
}

/// The flat metric on a torus, used by the torus branch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlatMetric {
    pub dim: u32,
    pub scale: f64,
}

impl FlatMetric {
    /// A flat metric has vanishing Ricci form.
    pub fn ricci_form(&self, grid: RhoGrid) -> InvariantForm {
        InvariantForm::zero(grid, 0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ansatz::grid::logistic;
    use crate::picard::SurfaceModel;

    fn grid(n: usize) -> RhoGrid {
        RhoGrid::new(15.0, n).unwrap()
    }

    /// `U' = b + (a - b)σ(ρ)`.
    fn logistic_metric(g: RhoGrid, b: f64, a: f64, k: u32) -> MetricProfile {
        MetricProfile::new(Profile::from_fn(g, |r| b * r + (a - b) * softplus(r)), k)
    }

    #[test]
    fn ddc_of_constant_and_linear() {
        let g = grid(256);
        let c = form_of_potential(&Profile::constant(g, 3.0), 1);
        assert!(c.p.max_abs() < 1e-12 && c.q.max_abs() < 1e-12);
        let l = form_of_potential(&Profile::from_fn(g, |r| r), 1);
        assert!(l.p.values.iter().all(|v| (v - 1.0).abs() < 1e-12));
        assert!(l.q.max_abs() < 1e-9);
    }

    #[test]
    fn ddc_of_fubini_study_pullback() {
        let g = grid(2048);
        let f = form_of_potential(&Profile::from_fn(g, softplus), 1);
        let p = Profile::from_fn(g, logistic);
        let q = Profile::from_fn(g, |r| logistic(r) * (1.0 - logistic(r)));
        assert!(f.p.sup_diff(&p) < 1e-4);
        assert!(f.q.sup_diff(&q) < 1e-4);
        assert!(f.closedness_defect() < 1e-10);
        assert!(f.is_nonnegative());
    }

    #[test]
    fn potential_round_trip() {
        let g = grid(1024);
        let volume = logistic_metric(g, 1.0, 4.0, 1).form();
        let volume = volume.p.zip_with(&volume.q, |p, q| p * q);
        let f = Profile::from_fn(g, softplus);
        let mean = f.weighted_mean(&volume);
        let back = potential_of_form(&form_of_potential(&f, 1), mean, &volume).unwrap();
        assert!(
            back.sup_diff(&f) <= 1e-4,
            "round trip error {}",
            back.sup_diff(&f)
        );

        let zero = potential_of_form(&InvariantForm::zero(g, 1), 0.0, &volume).unwrap();
        assert_eq!(zero.max_abs(), 0.0);

        let a = potential_of_form(&form_of_potential(&f, 1), 2.5, &volume).unwrap();
        let b = potential_of_form(&form_of_potential(&f, 1), -1.0, &volume).unwrap();
        assert!(a.sub(&b).values.iter().all(|d| (d - 3.5).abs() < 1e-12));
    }

    #[test]
    fn potential_of_open_form_is_rejected() {
        let g = grid(256);
        let bad = InvariantForm::new(
            Profile::from_fn(g, |r| r.sin()),
            Profile::constant(g, 1.0),
            1,
        );
        assert!(matches!(
            potential_of_form(&bad, 0.0, &Profile::constant(g, 1.0)),
            Err(LabError::NotClosed { .. })
        ));
    }

    #[test]
    fn class_extraction_examples() {
        let s = SurfaceModel::hirzebruch(1);
        let g = grid(2048);
        let m = logistic_metric(g, 1.0, 4.0, 1).form();
        let c = class_of(&m, &s).unwrap();
        assert!(
            c.max_abs_diff(&RealClass {
                coeffs: vec![4.0, -1.0]
            }) < 1e-5
        );

        let h_minus_e = InvariantForm::new(Profile::constant(g, 1.0), Profile::constant(g, 0.0), 1);
        let c = class_of(&h_minus_e, &s).unwrap();
        assert!(
            c.max_abs_diff(&RealClass {
                coeffs: vec![1.0, -1.0]
            }) < 1e-12
        );

        let c = class_of(&InvariantForm::zero(g, 1), &s).unwrap();
        assert_eq!(c.coeffs, vec![0.0, 0.0]);

        assert!(class_of(&m, &SurfaceModel::hirzebruch(2)).is_err());
    }

    #[test]
    fn ricci_class_is_anticanonical() {
        let g = grid(2048);
        for k in 1..=3 {
            let s = SurfaceModel::hirzebruch(k);
            let m = logistic_metric(g, 1.0 / k as f64, 2.0, k);
            let ric = ricci_form(&m).unwrap();
            let c = class_of(&ric, &s).unwrap();
            let minus_k: Vec<f64> = s
                .canonical_class
                .to_real()
                .coeffs
                .iter()
                .map(|x| -x)
                .collect();
            assert!(
                c.max_abs_diff(&RealClass { coeffs: minus_k }) <= 1e-3,
                "k = {k}: {:?}",
                c
            );
            assert!(ric.closedness_defect() < 1e-8);
        }
    }

    #[test]
    fn random_metrics_are_positive_with_anticanonical_ricci() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let s = SurfaceModel::hirzebruch(1);
        for _ in 0..4 {
            let m = MetricProfile::random(grid(2048), 1, &mut rng);
            m.check_positive().unwrap();
            let c = class_of(&ricci_form(&m).unwrap(), &s).unwrap();
            assert!(
                c.max_abs_diff(&RealClass {
                    coeffs: vec![3.0, -1.0]
                }) <= 1e-3,
                "{c:?}"
            );
        }
    }

    #[test]
    fn ricci_is_scale_invariant() {
        let g = grid(512);
        let m = logistic_metric(g, 1.0, 4.0, 1);
        let a = ricci_form(&m).unwrap();
        // a power of two keeps the finite differences bit-identical
        let b = ricci_form(&m.scale(4.0)).unwrap();
        assert!(a.p.sup_diff(&b.p) < 1e-9);
        assert!(a.q.sup_diff(&b.q) < 1e-7);
    }

    #[test]
    fn ricci_rejects_degenerate_metric() {
        let g = grid(256);
        let m = MetricProfile::new(Profile::from_fn(g, |r| r), 1);
        assert!(matches!(ricci_form(&m), Err(LabError::NotPositive { .. })));
    }

    #[test]
    fn flat_torus_is_ricci_flat() {
        let g = grid(64);
        let flat = FlatMetric { dim: 2, scale: 1.0 };
        let r = flat.ricci_form(g);
        assert_eq!(r.p.max_abs() + r.q.max_abs(), 0.0);
    }

    #[test]
    fn det_ratio_examples() {
        let g = grid(2048);
        let m = logistic_metric(g, 1.0, 4.0, 1);
        assert!(det_ratio(&m, &m)
            .values
            .iter()
            .all(|v| (v - 1.0).abs() < 1e-14));
        let c = det_ratio(&m.scale(2.0), &m);
        assert!(c.values.iter().all(|v| (v - 4.0).abs() < 1e-12));

        // shifted logistic, forms given by analytic derivatives
        let analytic = |shift: f64| {
            InvariantForm::new(
                Profile::from_fn(g, |r| 1.0 + 3.0 * logistic(r - shift)),
                Profile::from_fn(g, |r| {
                    3.0 * logistic(r - shift) * (1.0 - logistic(r - shift))
                }),
                1,
            )
        };
        let num = |r: f64, s: f64| {
            let sg = logistic(r - s);
            (1.0 + 3.0 * sg) * 3.0 * sg * (1.0 - sg)
        };
        let exact = Profile::from_fn(g, |r| num(r, 0.7) / num(r, 0.0));
        let ratio = det_ratio_forms(&analytic(0.7), &analytic(0.0));
        assert!(ratio.sup_diff(&exact) <= 1e-6);
    }

    #[test]
    fn det_ratio_is_multiplicative() {
        let g = grid(512);
        let a = logistic_metric(g, 1.0, 4.0, 1);
        let b = logistic_metric(g, 2.0, 3.0, 1);
        let c = MetricProfile::new(
            Profile::from_fn(g, |r| 0.5 * r + 2.0 * softplus(r + 1.0)),
            1,
        );
        let lhs = det_ratio(&a, &b).zip_with(&det_ratio(&b, &c), |x, y| x * y);
        let rhs = det_ratio(&a, &c);
        let rel = lhs.zip_with(&rhs, |x, y| (x - y).abs() / y.abs());
        assert!(rel.max() < 1e-12);
    }
}
