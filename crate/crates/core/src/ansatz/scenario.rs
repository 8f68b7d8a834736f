//! Scenario assembly: reference metric, `η_L`, `η` and `f` for a catalog
//! surface with a chosen ample class.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::forms::{class_of, form_of_potential, potential_of_form, InvariantForm, MetricProfile};
use super::grid::{logistic, softplus, Profile, RhoGrid};
use crate::error::{LabError, Result};
use crate::picard::{
    self, classify_contraction, intersect, rational_to_f64, ContractionInfo, ContractionKind,
    DivisorClass, RealClass, SurfaceKind, SurfaceModel,
};

/// Tolerance on class pairings when validating a freshly built scenario.
pub const CLASS_TOL: f64 = 1e-3;

/// One term of a gauge function `h(ρ)`; every term is a smooth function on the
/// compact surface (its derivative decays like `e^{-|ρ|}` at both ends).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum GaugeTerm {
    /// `amp · (log(1 + e^ρ) - log(1 + e^{ρ - shift}))`
    SoftplusStep { amp: f64, shift: f64 },
    /// `amp · σ(ρ - center)`
    Logistic { amp: f64, center: f64 },
}

impl GaugeTerm {
    pub fn eval(&self, r: f64) -> f64 {
        match *self {
            GaugeTerm::SoftplusStep { amp, shift } => amp * (softplus(r) - softplus(r - shift)),
            GaugeTerm::Logistic { amp, center } => amp * logistic(r - center),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaugeSpec {
    pub terms: Vec<GaugeTerm>,
}

impl GaugeSpec {
    pub fn profile(&self, grid: RhoGrid) -> Profile {
        Profile::from_fn(grid, |r| self.terms.iter().map(|t| t.eval(r)).sum())
    }
}

/// Everything needed to rebuild a scenario deterministically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub surface: SurfaceKind,
    pub ample: DivisorClass,
    pub grid: RhoGrid,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gauge: Option<GaugeSpec>,
}

impl ScenarioSpec {
    pub fn new(surface: SurfaceKind, ample: DivisorClass, grid: RhoGrid) -> Self {
        Self {
            surface,
            ample,
            grid,
            gauge: None,
        }
    }

    pub fn with_gauge(mut self, gauge: GaugeSpec) -> Self {
        self.gauge = Some(gauge);
        self
    }

    pub fn with_grid(mut self, grid: RhoGrid) -> Self {
        self.grid = grid;
        self
    }

    /// Stable content hash of the scenario description.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("scenario serializes");
        hex::encode(&Sha256::digest(&json)[..8])
    }

    pub fn build(&self) -> Result<Scenario> {
        build_scenario(self)
    }
}

/// A Hirzebruch scenario in the Calabi ansatz.
#[derive(Debug, Clone)]
pub struct CalabiScenario {
    pub spec: ScenarioSpec,
    pub surface: SurfaceModel,
    pub k: u32,
    pub info: ContractionInfo,
    pub r: f64,
    pub g0: MetricProfile,
    pub g0_form: InvariantForm,
    pub eta_l: InvariantForm,
    pub eta: InvariantForm,
    pub eta0: InvariantForm,
    pub f: Profile,
    /// `dV₀` density `U₀'U₀''`.
    pub volume: Profile,
}

impl CalabiScenario {
    pub fn grid(&self) -> RhoGrid {
        self.spec.grid
    }

    /// `g₀(t) = g₀ + a(t)η`.
    pub fn reference_at(&self, t: f64) -> InvariantForm {
        self.g0_form.add(&self.eta.scale(picard::a_of(t)))
    }

    pub fn class_path(&self, t: f64) -> RealClass {
        picard::class_path(&self.spec.ample, &self.surface, t).expect("validated at build")
    }

    pub fn b(&self, t: f64) -> f64 {
        picard::b_of(Some(self.r), t)
    }
}

/// A flat torus scenario; every profile is constant in the flat coordinate.
#[derive(Debug, Clone)]
pub struct FlatScenario {
    pub spec: ScenarioSpec,
    pub surface: SurfaceModel,
    pub dim: u32,
    pub info: ContractionInfo,
    pub f: Profile,
    pub volume: Profile,
}

#[derive(Debug, Clone)]
pub enum Scenario {
    Calabi(Box<CalabiScenario>),
    Flat(FlatScenario),
}

impl Scenario {
    pub fn spec(&self) -> &ScenarioSpec {
        match self {
            Scenario::Calabi(c) => &c.spec,
            Scenario::Flat(f) => &f.spec,
        }
    }

    pub fn grid(&self) -> RhoGrid {
        self.spec().grid
    }

    pub fn hash(&self) -> String {
        self.spec().hash()
    }

    pub fn info(&self) -> &ContractionInfo {
        match self {
            Scenario::Calabi(c) => &c.info,
            Scenario::Flat(f) => &f.info,
        }
    }

    pub fn surface(&self) -> &SurfaceModel {
        match self {
            Scenario::Calabi(c) => &c.surface,
            Scenario::Flat(f) => &f.surface,
        }
    }

    /// Finite nef threshold, or `None` when `K` is nef.
    pub fn r(&self) -> Option<f64> {
        self.info().nef_threshold.as_ref().map(rational_to_f64)
    }

    pub fn singular_time(&self) -> f64 {
        self.info().singular_time
    }

    pub fn kind(&self) -> ContractionKind {
        self.info().kind
    }

    pub fn f(&self) -> &Profile {
        match self {
            Scenario::Calabi(c) => &c.f,
            Scenario::Flat(f) => &f.f,
        }
    }

    pub fn volume(&self) -> &Profile {
        match self {
            Scenario::Calabi(c) => &c.volume,
            Scenario::Flat(f) => &f.volume,
        }
    }

    /// Complex dimension of the surface.
    pub fn dim(&self) -> u32 {
        2
    }

    pub fn as_calabi(&self) -> Option<&CalabiScenario> {
        match self {
            Scenario::Calabi(c) => Some(c),
            Scenario::Flat(_) => None,
        }
    }
}

/// The default reference metric in class `A`: `U₀' = b + (a - b)σ(ρ)` with
/// `b = A·E/k` and `a = b + A·F`.
pub fn reference_potential(grid: RhoGrid, k: u32, pair_e: f64, pair_f: f64) -> Profile {
    let lo = pair_e / k as f64;
    Profile::from_fn(grid, |r| lo * r + pair_f * softplus(r))
}

/// `log(U0'U0'') - ρ` for [`reference_potential`], in closed form. The
/// finite-difference product underflows relative precision at the ends.
pub fn reference_ricci_potential(grid: RhoGrid, k: u32, pair_e: f64, pair_f: f64) -> Profile {
    let lo = pair_e / k as f64;
    Profile::from_fn(grid, |r| {
        (lo + pair_f * logistic(r)).ln() + pair_f.ln() - softplus(-r) - softplus(r) - r
    })
}

fn pairings_exact(d: &DivisorClass, s: &SurfaceModel) -> Result<(f64, f64)> {
    let e = intersect(d, &s.curve("E").expect("Hirzebruch").class, s)?;
    let f = intersect(d, &s.curve("F").expect("Hirzebruch").class, s)?;
    Ok((rational_to_f64(&e), rational_to_f64(&f)))
}

fn check_class(
    what: &'static str,
    form: &InvariantForm,
    expected: &DivisorClass,
    s: &SurfaceModel,
) -> Result<()> {
    let measured = class_of(form, s)?;
    let expected = expected.to_real();
    if measured.max_abs_diff(&expected) > CLASS_TOL {
        return Err(LabError::ClassMismatch {
            what,
            measured: measured.coeffs,
            expected: expected.coeffs,
        });
    }
    Ok(())
}

pub fn build_scenario(spec: &ScenarioSpec) -> Result<Scenario> {
    let surface = SurfaceModel::new(spec.surface)?;
    let info = classify_contraction(&spec.ample, &surface)?;
    let grid = spec.grid;
    match spec.surface {
        SurfaceKind::Torus(n) => {
            if spec.gauge.is_some() {
                return Err(LabError::Precondition(
                    "gauge changes are only supported on Hirzebruch scenarios".into(),
                ));
            }
            Ok(Scenario::Flat(FlatScenario {
                spec: spec.clone(),
                surface,
                dim: n,
                info,
                f: Profile::constant(grid, 0.0),
                volume: Profile::constant(grid, 1.0),
            }))
        }
        SurfaceKind::Hirzebruch(k) => {
            let r = info
                .nef_threshold
                .as_ref()
                .map(rational_to_f64)
                .expect("K is never nef on a Hirzebruch surface");
            let l = info.semiample_class.clone().expect("finite threshold");
            let (ae, af) = pairings_exact(&spec.ample, &surface)?;
            let g0 = MetricProfile::new(reference_potential(grid, k, ae, af), k);
            let g0_form = g0.form();
            g0.check_positive()?;
            // Canonical semipositive representative of L; constant when L·F = 0.
            let (le, lf) = pairings_exact(&l, &surface)?;
            let eta_l = form_of_potential(&reference_potential(grid, k, le, lf), k);
            let mut eta = eta_l.sub(&g0_form.scale(r + 1.0)).scale(1.0 / r);
            let kf = k as f64;
            let ric = form_of_potential(&reference_ricci_potential(grid, k, ae, af), k)
                .scale(-1.0)
                .shift_base(-(kf - 2.0) / kf);
            let eta0 = g0_form.add(&ric).scale(-1.0);
            let volume = g0_form.p.zip_with(&g0_form.q, |p, q| p * q);
            let mut f = potential_of_form(&eta0.sub(&eta), 0.0, &volume)?;

            check_class("g0", &g0_form, &spec.ample, &surface)?;
            check_class("eta_L", &eta_l, &l, &surface)?;
            let k_minus_a = surface.canonical_class.sub(&spec.ample);
            check_class("eta", &eta, &k_minus_a, &surface)?;
            check_class("eta0", &eta0, &k_minus_a, &surface)?;

            if let Some(gauge) = &spec.gauge {
                let h = gauge.profile(grid);
                eta = eta.sub(&form_of_potential(&h, k));
                f = f.add(&h);
            }
            Ok(Scenario::Calabi(Box::new(CalabiScenario {
                spec: spec.clone(),
                surface,
                k,
                info,
                r,
                g0,
                g0_form,
                eta_l,
                eta,
                eta0,
                f,
                volume,
            })))
        }
        SurfaceKind::P2 => Err(LabError::UnsupportedSurface(
            "P2 has no flow model in the Calabi family".into(),
        )),
    }
}

/// JSON summary of a scenario: grid, endpoint slopes and class pairings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioDump {
    pub spec: ScenarioSpec,
    pub hash: String,
    pub contraction: ContractionInfo,
    pub spacing: f64,
    pub endpoint_slopes: Option<(f64, f64)>,
    pub pairings: Vec<(String, f64, f64)>,
}

impl Scenario {
    pub fn dump(&self) -> ScenarioDump {
        let (endpoint_slopes, pairings) = match self {
            Scenario::Calabi(c) => {
                let p = &c.g0_form.p.values;
                let pr = |name: &str, f: &InvariantForm| {
                    let (e, fib) = f.pairings();
                    (name.to_string(), e, fib)
                };
                (
                    Some((p[0], p[p.len() - 1])),
                    vec![
                        pr("g0", &c.g0_form),
                        pr("eta_L", &c.eta_l),
                        pr("eta", &c.eta),
                        pr("eta0", &c.eta0),
                    ],
                )
            }
            Scenario::Flat(_) => (None, vec![]),
        };
        ScenarioDump {
            spec: self.spec().clone(),
            hash: self.hash(),
            contraction: self.info().clone(),
            spacing: self.grid().spacing(),
            endpoint_slopes,
            pairings,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn divisorial(n: usize) -> ScenarioSpec {
        ScenarioSpec::new(
            SurfaceKind::Hirzebruch(1),
            DivisorClass::from_ints(&[4, -1]),
            RhoGrid::new(15.0, n).unwrap(),
        )
    }

    fn assert_class(form: &InvariantForm, s: &SurfaceModel, expected: &[f64]) {
        let c = class_of(form, s).unwrap();
        assert!(
            c.max_abs_diff(&RealClass {
                coeffs: expected.to_vec()
            }) <= 1e-3,
            "{:?} vs {:?}",
            c.coeffs,
            expected
        );
    }

    #[test]
    fn divisorial_scenario_classes() {
        let sc = divisorial(2048).build().unwrap();
        let c = sc.as_calabi().unwrap();
        assert_class(&c.g0_form, &c.surface, &[4.0, -1.0]);
        assert_class(&c.eta_l, &c.surface, &[1.0, 0.0]);
        assert_class(&c.eta, &c.surface, &[-7.0, 2.0]);
        assert_class(&c.eta0.sub(&c.eta), &c.surface, &[0.0, 0.0]);
        assert!(c.eta_l.is_nonnegative());
        assert!(c.f.weighted_mean(&c.volume).abs() < 1e-12);
    }

    #[test]
    fn fiber_scenario_has_constant_eta_l() {
        let spec = ScenarioSpec::new(
            SurfaceKind::Hirzebruch(1),
            DivisorClass::from_ints(&[2, -1]),
            RhoGrid::new(15.0, 512).unwrap(),
        );
        let sc = spec.build().unwrap();
        let c = sc.as_calabi().unwrap();
        assert_eq!(c.info.kind, ContractionKind::FiberType);
        assert!(c.eta_l.q.max_abs() < 1e-9);
        assert!(c.eta_l.p.values.iter().all(|v| (v - 0.5).abs() < 1e-12));
    }

    #[test]
    fn reference_family_stays_positive_before_t() {
        let sc = divisorial(1024).build().unwrap();
        let c = sc.as_calabi().unwrap();
        let t_end = sc.singular_time() - 1e-3;
        for i in 0..200 {
            let t = t_end * i as f64 / 199.0;
            let g = c.reference_at(t);
            assert!(
                g.p.min() > 0.0 && g.q.min() > 0.0,
                "g0(t) not positive at t = {t}"
            );
            // agrees with (1/r)(a η_L + b g0)
            let alt = c
                .eta_l
                .scale(picard::a_of(t))
                .add(&c.g0_form.scale(c.b(t)))
                .scale(1.0 / c.r);
            assert!(g.p.sup_diff(&alt.p) < 1e-12 && g.q.sup_diff(&alt.q) < 1e-12);
        }
    }

    #[test]
    fn gauge_changes_eta_and_f() {
        let gauge = GaugeSpec {
            terms: vec![GaugeTerm::SoftplusStep {
                amp: 0.3,
                shift: 3.0,
            }],
        };
        let plain = divisorial(512).build().unwrap();
        let gauged = divisorial(512).with_gauge(gauge.clone()).build().unwrap();
        let (p, g) = (plain.as_calabi().unwrap(), gauged.as_calabi().unwrap());
        let h = gauge.profile(p.grid());
        assert!(g.f.sub(&p.f).sup_diff(&h) < 1e-14);
        let ddc = form_of_potential(&h, 1);
        assert!(p.eta.sub(&g.eta).p.sup_diff(&ddc.p) < 1e-14);
        assert_ne!(plain.hash(), gauged.hash());
        // h is a function on the surface: its class vanishes.
        assert_class(&ddc, &p.surface, &[0.0, 0.0]);
    }

    #[test]
    fn torus_and_p2() {
        let spec = ScenarioSpec::new(
            SurfaceKind::Torus(2),
            DivisorClass::from_ints(&[1]),
            RhoGrid::new(8.0, 64).unwrap(),
        );
        let sc = spec.build().unwrap();
        assert!(sc.r().is_none());
        assert_eq!(sc.f().max_abs(), 0.0);
        let p2 = ScenarioSpec::new(
            SurfaceKind::P2,
            DivisorClass::from_ints(&[1]),
            RhoGrid::new(8.0, 64).unwrap(),
        );
        assert!(p2.build().is_err());
    }

    #[test]
    fn non_ample_scenario_is_rejected() {
        let spec = ScenarioSpec::new(
            SurfaceKind::Hirzebruch(1),
            DivisorClass::from_ints(&[1, 0]),
            RhoGrid::new(15.0, 128).unwrap(),
        );
        assert!(matches!(spec.build(), Err(LabError::NotAmple { .. })));
    }

    #[test]
    fn dump_serializes() {
        let sc = divisorial(128).build().unwrap();
        let d = sc.dump();
        let back: ScenarioDump = serde_json::from_str(&serde_json::to_string(&d).unwrap()).unwrap();
        assert_eq!(back, d);
        let (lo, hi) = d.endpoint_slopes.unwrap();
        assert!((lo - 1.0).abs() < 1e-5 && (hi - 4.0).abs() < 1e-5);
    }
}
