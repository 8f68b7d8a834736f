//! Exact intersection theory on the catalog surfaces.
//!
//! Every class lives in a fixed rational basis of the Picard group and all
//! arithmetic here is exact. The catalog is restricted to surfaces whose Mori
//! cone is known explicitly, so nef tests reduce to finitely many pairings.
//!
//! Bases:
//! - `P2`: the line `H`, with `H² = 1`.
//! - `Hirzebruch(k)`: `(E∞, E)` where `E` is the negative section (`E² = -k`)
//!   and `E∞ = E + kF` the positive section (`E∞² = k`, `E∞·E = 0`). For
//!   `k = 1` this is the familiar `(H, E)` basis of the blow-up of `P2`; for
//!   larger `k` it is a rational basis and the fiber is `F = (E∞ - E)/k`.
//! - `Torus(2)`: a principally polarized abelian surface of Picard rank one,
//!   basis `Θ` with `Θ² = 2`.

use std::fmt;
use std::str::FromStr;

use num_rational::Ratio;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{LabError, Result};

pub type Rational = Ratio<i64>;

/// Serde adapter writing rationals as `"p/q"` strings (or `"p"` when integral).
pub mod rational_str {
    use super::*;

    pub fn serialize<S: Serializer>(r: &Rational, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&format_rational(r))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Rational, D::Error> {
        let s = String::deserialize(d)?;
        parse_rational(&s).map_err(serde::de::Error::custom)
    }

    pub mod vec {
        use super::*;

        pub fn serialize<S: Serializer>(
            v: &[Rational],
            s: S,
        ) -> std::result::Result<S::Ok, S::Error> {
            let strs: Vec<String> = v.iter().map(format_rational).collect();
            strs.serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(
            d: D,
        ) -> std::result::Result<Vec<Rational>, D::Error> {
            let strs = Vec::<String>::deserialize(d)?;
            strs.iter()
                .map(|s| parse_rational(s).map_err(serde::de::Error::custom))
                .collect()
        }
    }

    pub mod option {
        use super::*;

        pub fn serialize<S: Serializer>(
            v: &Option<Rational>,
            s: S,
        ) -> std::result::Result<S::Ok, S::Error> {
            v.as_ref().map(format_rational).serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(
            d: D,
        ) -> std::result::Result<Option<Rational>, D::Error> {
            let s = Option::<String>::deserialize(d)?;
            s.map(|s| parse_rational(&s).map_err(serde::de::Error::custom))
                .transpose()
        }
    }
}

pub fn format_rational(r: &Rational) -> String {
    if r.is_integer() {
        format!("{}", r.numer())
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

pub fn parse_rational(s: &str) -> std::result::Result<Rational, String> {
    let s = s.trim();
    let parse_int = |t: &str| {
        t.trim()
            .parse::<i64>()
            .map_err(|e| format!("bad rational {s:?}: {e}"))
    };
    match s.split_once('/') {
        Some((p, q)) => {
            let q = parse_int(q)?;
            if q == 0 {
                return Err(format!("bad rational {s:?}: zero denominator"));
            }
            Ok(Rational::new(parse_int(p)?, q))
        }
        None => Ok(Rational::from_integer(parse_int(s)?)),
    }
}

/// A divisor class: rational coefficients in the surface's basis.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DivisorClass {
    #[serde(with = "rational_str::vec")]
    pub coeffs: Vec<Rational>,
}

impl DivisorClass {
    pub fn new(coeffs: Vec<Rational>) -> Self {
        Self { coeffs }
    }

    pub fn from_ints(coeffs: &[i64]) -> Self {
        Self::new(coeffs.iter().map(|&c| Rational::from_integer(c)).collect())
    }

    pub fn zero(rank: usize) -> Self {
        Self::new(vec![Rational::zero(); rank])
    }

    pub fn rank(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(Zero::is_zero)
    }

    pub fn scale(&self, s: Rational) -> Self {
        Self::new(self.coeffs.iter().map(|c| c * s).collect())
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(
            self.rank(),
            other.rank(),
            "adding classes of different rank"
        );
        Self::new(
            self.coeffs
                .iter()
                .zip(&other.coeffs)
                .map(|(a, b)| a + b)
                .collect(),
        )
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(-Rational::one()))
    }

    pub fn to_real(&self) -> RealClass {
        RealClass {
            coeffs: self.coeffs.iter().map(rational_to_f64).collect(),
        }
    }
}

impl fmt::Display for DivisorClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.coeffs.iter().map(format_rational).collect();
        write!(f, "({})", parts.join(", "))
    }
}

/// A class with real coefficients, as measured from forms or along the flow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealClass {
    pub coeffs: Vec<f64>,
}

impl RealClass {
    pub fn max_abs_diff(&self, other: &RealClass) -> f64 {
        self.coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

pub fn rational_to_f64(r: &Rational) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "type", content = "index")]
pub enum SurfaceKind {
    P2,
    Hirzebruch(u32),
    Torus(u32),
}

impl fmt::Display for SurfaceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SurfaceKind::P2 => write!(f, "P2"),
            SurfaceKind::Hirzebruch(k) => write!(f, "F{k}"),
            SurfaceKind::Torus(n) => write!(f, "T{n}"),
        }
    }
}

impl FromStr for SurfaceKind {
    type Err = LabError;

    /// Accepts `P2`, `F<k>` (Hirzebruch) and `T<n>` (torus), case-insensitive.
    fn from_str(s: &str) -> Result<Self> {
        let up = s.trim().to_ascii_uppercase();
        let index = |rest: &str| {
            rest.parse::<u32>()
                .map_err(|_| LabError::UnsupportedSurface(s.to_string()))
        };
        if up == "P2" {
            Ok(SurfaceKind::P2)
        } else if let Some(rest) = up.strip_prefix('F') {
            Ok(SurfaceKind::Hirzebruch(index(rest)?))
        } else if let Some(rest) = up.strip_prefix('T') {
            Ok(SurfaceKind::Torus(index(rest)?))
        } else {
            Err(LabError::UnsupportedSurface(s.to_string()))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveClass {
    pub label: String,
    pub class: DivisorClass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExceptionalDivisor {
    pub label: String,
    pub class: DivisorClass,
    #[serde(with = "rational_str")]
    pub discrepancy: Rational,
}

/// A catalog surface with its intersection form and Mori cone generators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceModel {
    pub kind: SurfaceKind,
    pub intersection_matrix: Vec<Vec<i64>>,
    pub canonical_class: DivisorClass,
    pub curve_basis: Vec<CurveClass>,
    pub exceptional_data: Vec<ExceptionalDivisor>,
}

impl SurfaceModel {
    pub fn new(kind: SurfaceKind) -> Result<Self> {
        match kind {
            SurfaceKind::P2 => Ok(Self::p2()),
            SurfaceKind::Hirzebruch(k) if k >= 1 => Ok(Self::hirzebruch(k)),
            SurfaceKind::Torus(2) => Ok(Self::torus()),
            other => Err(LabError::UnsupportedSurface(other.to_string())),
        }
    }

    pub fn p2() -> Self {
        Self {
            kind: SurfaceKind::P2,
            intersection_matrix: vec![vec![1]],
            canonical_class: DivisorClass::from_ints(&[-3]),
            curve_basis: vec![CurveClass {
                label: "H".into(),
                class: DivisorClass::from_ints(&[1]),
            }],
            exceptional_data: vec![],
        }
    }

    /// The Hirzebruch surface `F_k` in the `(E∞, E)` basis.
    pub fn hirzebruch(k: u32) -> Self {
        assert!(k >= 1, "Hirzebruch index must be positive");
        let k = k as i64;
        let kr = Rational::from_integer(k);
        let fiber = DivisorClass::new(vec![kr.recip(), -kr.recip()]);
        let section = DivisorClass::from_ints(&[0, 1]);
        // K = -2E - (k+2)F
        let canonical = section
            .scale(Rational::from_integer(-2))
            .sub(&fiber.scale(Rational::from_integer(k + 2)));
        Self {
            kind: SurfaceKind::Hirzebruch(k as u32),
            intersection_matrix: vec![vec![k, 0], vec![0, -k]],
            canonical_class: canonical,
            curve_basis: vec![
                CurveClass {
                    label: "E".into(),
                    class: section.clone(),
                },
                CurveClass {
                    label: "F".into(),
                    class: fiber,
                },
            ],
            // K·E = α E² gives α = (2 - k)/k; α = 1 for the blow-down of a point.
            exceptional_data: vec![ExceptionalDivisor {
                label: "E".into(),
                class: section,
                discrepancy: Rational::new(2 - k, k),
            }],
        }
    }

    pub fn torus() -> Self {
        Self {
            kind: SurfaceKind::Torus(2),
            intersection_matrix: vec![vec![2]],
            canonical_class: DivisorClass::from_ints(&[0]),
            curve_basis: vec![CurveClass {
                label: "Theta".into(),
                class: DivisorClass::from_ints(&[1]),
            }],
            exceptional_data: vec![],
        }
    }

    pub fn picard_rank(&self) -> usize {
        self.intersection_matrix.len()
    }

    pub fn name(&self) -> String {
        self.kind.to_string()
    }

    pub fn curve(&self, label: &str) -> Option<&CurveClass> {
        self.curve_basis.iter().find(|c| c.label == label)
    }

    pub fn check(&self, d: &DivisorClass) -> Result<()> {
        if d.rank() != self.picard_rank() {
            return Err(LabError::DimensionMismatch {
                expected: self.picard_rank(),
                got: d.rank(),
            });
        }
        Ok(())
    }
}

/// `D1ᵀ · M · D2`, exact.
pub fn intersect(d1: &DivisorClass, d2: &DivisorClass, s: &SurfaceModel) -> Result<Rational> {
    s.check(d1)?;
    s.check(d2)?;
    let mut acc = Rational::zero();
    for (i, row) in s.intersection_matrix.iter().enumerate() {
        for (j, &m) in row.iter().enumerate() {
            if m != 0 {
                acc += d1.coeffs[i] * d2.coeffs[j] * Rational::from_integer(m);
            }
        }
    }
    Ok(acc)
}

/// Real-coefficient pairing, used for measured classes.
pub fn intersect_real(d1: &[f64], d2: &[f64], s: &SurfaceModel) -> f64 {
    let mut acc = 0.0;
    for (i, row) in s.intersection_matrix.iter().enumerate() {
        for (j, &m) in row.iter().enumerate() {
            acc += d1[i] * d2[j] * m as f64;
        }
    }
    acc
}

fn pairings(d: &DivisorClass, s: &SurfaceModel) -> Result<Vec<Rational>> {
    s.curve_basis
        .iter()
        .map(|c| intersect(d, &c.class, s))
        .collect()
}

pub fn is_nef(d: &DivisorClass, s: &SurfaceModel) -> Result<bool> {
    Ok(pairings(d, s)?.iter().all(|p| !p.is_negative()))
}

/// Strict positivity on every Mori generator plus positive self-intersection.
pub fn is_ample(d: &DivisorClass, s: &SurfaceModel) -> Result<bool> {
    Ok(pairings(d, s)?.iter().all(Signed::is_positive) && intersect(d, d, s)?.is_positive())
}

fn require_ample(a: &DivisorClass, s: &SurfaceModel) -> Result<()> {
    if !is_ample(a, s)? {
        let mut shown: Vec<String> = s
            .curve_basis
            .iter()
            .map(|c| {
                intersect(a, &c.class, s)
                    .map(|p| format!("{}·{} = {}", a, c.label, format_rational(&p)))
            })
            .collect::<Result<_>>()?;
        shown.push(format!("{a}² = {}", format_rational(&intersect(a, a, s)?)));
        return Err(LabError::NotAmple {
            surface: s.name(),
            pairings: shown,
        });
    }
    Ok(())
}

/// The nef threshold `max { s : A + sK nef }`; `None` stands for `+∞`.
pub fn nef_threshold(a: &DivisorClass, s: &SurfaceModel) -> Result<Option<Rational>> {
    require_ample(a, s)?;
    let mut best: Option<Rational> = None;
    for c in &s.curve_basis {
        let kc = intersect(&s.canonical_class, &c.class, s)?;
        if kc.is_negative() {
            let cand = intersect(a, &c.class, s)? / -kc;
            best = Some(best.map_or(cand, |b| b.min(cand)));
        }
    }
    Ok(best)
}

/// `log(r + 1)`, or `+∞` when `K` is nef.
pub fn singular_time(r: Option<Rational>) -> f64 {
    r.map_or(f64::INFINITY, |r| (rational_to_f64(&r) + 1.0).ln())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContractionKind {
    Divisorial,
    FiberType,
    PointCollapse,
    NoneNeeded,
}

impl fmt::Display for ContractionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ContractionKind::Divisorial => "divisorial",
            ContractionKind::FiberType => "fiber_type",
            ContractionKind::PointCollapse => "point_collapse",
            ContractionKind::NoneNeeded => "none_needed",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractionInfo {
    pub kind: ContractionKind,
    /// Label of the contracted Mori generator, if any.
    pub contracted_label: Option<String>,
    pub contracted_ray: Option<DivisorClass>,
    pub semiample_class: Option<DivisorClass>,
    #[serde(with = "rational_str::option")]
    pub nef_threshold: Option<Rational>,
    #[serde(with = "crate::serde_ext::f64_ext")]
    pub singular_time: f64,
    /// Discrepancies of the contracted exceptional divisors.
    pub discrepancies: Vec<ExceptionalDivisor>,
}

pub fn classify_contraction(a: &DivisorClass, s: &SurfaceModel) -> Result<ContractionInfo> {
    let r = nef_threshold(a, s)?;
    let Some(r) = r else {
        return Ok(ContractionInfo {
            kind: ContractionKind::NoneNeeded,
            contracted_label: None,
            contracted_ray: None,
            semiample_class: None,
            nef_threshold: None,
            singular_time: f64::INFINITY,
            discrepancies: vec![],
        });
    };
    let l = a.add(&s.canonical_class.scale(r));
    let t = singular_time(Some(r));
    if l.is_zero() {
        return Ok(ContractionInfo {
            kind: ContractionKind::PointCollapse,
            contracted_label: None,
            contracted_ray: None,
            semiample_class: Some(l),
            nef_threshold: Some(r),
            singular_time: t,
            discrepancies: vec![],
        });
    }
    let mut ray = None;
    for c in &s.curve_basis {
        if intersect(&l, &c.class, s)?.is_zero() {
            ray = Some(c.clone());
            break;
        }
    }
    let ray = ray.expect("L sits on the boundary of the nef cone, so it annihilates a generator");
    let self_int = intersect(&ray.class, &ray.class, s)?;
    let kind = if self_int.is_negative() {
        ContractionKind::Divisorial
    } else {
        ContractionKind::FiberType
    };
    let discrepancies = if kind == ContractionKind::Divisorial {
        s.exceptional_data
            .iter()
            .filter(|e| e.class == ray.class)
            .cloned()
            .collect()
    } else {
        vec![]
    };
    Ok(ContractionInfo {
        kind,
        contracted_label: Some(ray.label.clone()),
        contracted_ray: Some(ray.class),
        semiample_class: Some(l),
        nef_threshold: Some(r),
        singular_time: t,
        discrepancies,
    })
}

/// `a(t) = 1 - e^{-t}`.
pub fn a_of(t: f64) -> f64 {
    -(-t).exp_m1()
}

/// `a'(t) = e^{-t}`.
pub fn a_prime(t: f64) -> f64 {
    (-t).exp()
}

/// `b(t) = (r + 1)e^{-t} - 1` for finite `r`, and `e^{-t}` when `K` is nef.
pub fn b_of(r: Option<f64>, t: f64) -> f64 {
    match r {
        Some(r) => (r + 1.0) * (-t).exp() - 1.0,
        None => (-t).exp(),
    }
}

/// The class path in closed form `A(t) = constant + e^{-t} · decaying`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SymbolicClassPath {
    pub constant: DivisorClass,
    pub decaying: DivisorClass,
}

impl SymbolicClassPath {
    pub fn eval(&self, t: f64) -> RealClass {
        let x = (-t).exp();
        RealClass {
            coeffs: self
                .constant
                .coeffs
                .iter()
                .zip(&self.decaying.coeffs)
                .map(|(c, d)| rational_to_f64(c) + x * rational_to_f64(d))
                .collect(),
        }
    }
}

/// `A + a(t)(K - A)` written as `K + e^{-t}(A - K)`.
pub fn class_path_symbolic(a: &DivisorClass, s: &SurfaceModel) -> Result<SymbolicClassPath> {
    s.check(a)?;
    Ok(SymbolicClassPath {
        constant: s.canonical_class.clone(),
        decaying: a.sub(&s.canonical_class),
    })
}

/// `(1/r)(a(t) L + b(t) A)` in the same closed form; requires finite `r`.
pub fn class_path_decomposed(a: &DivisorClass, s: &SurfaceModel) -> Result<SymbolicClassPath> {
    let r = nef_threshold(a, s)?
        .ok_or_else(|| LabError::Precondition("decomposition needs finite r".into()))?;
    let l = a.add(&s.canonical_class.scale(r));
    let inv = r.recip();
    // a(t) = 1 - x, b(t) = (r + 1)x - 1 with x = e^{-t}
    let constant = l.sub(a).scale(inv);
    let decaying = a.scale(r + Rational::one()).sub(&l).scale(inv);
    Ok(SymbolicClassPath { constant, decaying })
}

pub fn class_path(a: &DivisorClass, s: &SurfaceModel, t: f64) -> Result<RealClass> {
    Ok(class_path_symbolic(a, s)?.eval(t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn q(p: i64, d: i64) -> Rational {
        Rational::new(p, d)
    }

    #[test]
    fn blowup_lattice_pairings() {
        let s = SurfaceModel::hirzebruch(1);
        let h = DivisorClass::from_ints(&[1, 0]);
        let e = DivisorClass::from_ints(&[0, 1]);
        assert_eq!(intersect(&h, &h, &s).unwrap(), q(1, 1));
        assert_eq!(intersect(&e, &e, &s).unwrap(), q(-1, 1));
        assert_eq!(intersect(&h, &e, &s).unwrap(), q(0, 1));
        let a = DivisorClass::from_ints(&[4, -1]);
        assert_eq!(intersect(&a, &e, &s).unwrap(), q(1, 1));
        let f = DivisorClass::from_ints(&[1, -1]);
        assert_eq!(intersect(&a, &f, &s).unwrap(), q(3, 1));
    }

    #[test]
    fn torus_canonical_pairs_to_zero() {
        let s = SurfaceModel::torus();
        let a = DivisorClass::from_ints(&[3]);
        assert!(intersect(&a, &s.canonical_class, &s).unwrap().is_zero());
    }

    #[test]
    fn rank_mismatch_is_rejected() {
        let s = SurfaceModel::hirzebruch(1);
        let bad = DivisorClass::from_ints(&[1]);
        assert!(matches!(
            intersect(&bad, &bad, &s),
            Err(LabError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn hirzebruch_curve_basis_relations() {
        for k in 1..=5 {
            let s = SurfaceModel::hirzebruch(k);
            let e = &s.curve("E").unwrap().class;
            let f = &s.curve("F").unwrap().class;
            assert_eq!(intersect(e, e, &s).unwrap(), q(-(k as i64), 1));
            assert_eq!(intersect(f, f, &s).unwrap(), q(0, 1));
            assert_eq!(intersect(e, f, &s).unwrap(), q(1, 1));
            // adjunction on the rational curves E and F
            let kk = &s.canonical_class;
            assert_eq!(
                intersect(kk, e, &s).unwrap() + intersect(e, e, &s).unwrap(),
                q(-2, 1)
            );
            assert_eq!(intersect(kk, f, &s).unwrap(), q(-2, 1));
        }
        assert_eq!(
            SurfaceModel::hirzebruch(1).canonical_class,
            DivisorClass::from_ints(&[-3, 1])
        );
    }

    #[test]
    fn nef_examples() {
        let s = SurfaceModel::hirzebruch(1);
        assert!(is_nef(&DivisorClass::from_ints(&[1, 0]), &s).unwrap());
        assert!(is_nef(&DivisorClass::from_ints(&[2, -1]), &s).unwrap());
        assert!(!is_nef(&DivisorClass::from_ints(&[1, -2]), &s).unwrap());
        assert!(!is_nef(&s.canonical_class, &s).unwrap());
    }

    #[test]
    fn nef_threshold_catalog() {
        let f1 = SurfaceModel::hirzebruch(1);
        let r = nef_threshold(&DivisorClass::from_ints(&[4, -1]), &f1).unwrap();
        assert_eq!(r, Some(q(1, 1)));
        assert!((singular_time(r) - 2f64.ln()).abs() < 1e-15);
        let r = nef_threshold(&DivisorClass::from_ints(&[2, -1]), &f1).unwrap();
        assert_eq!(r, Some(q(1, 2)));
        assert!((singular_time(r) - 1.5f64.ln()).abs() < 1e-15);
        let p2 = SurfaceModel::p2();
        assert_eq!(
            nef_threshold(&DivisorClass::from_ints(&[1]), &p2).unwrap(),
            Some(q(1, 3))
        );
        let t2 = SurfaceModel::torus();
        assert_eq!(
            nef_threshold(&DivisorClass::from_ints(&[1]), &t2).unwrap(),
            None
        );
    }

    #[test]
    fn non_ample_is_rejected() {
        let f1 = SurfaceModel::hirzebruch(1);
        let err = nef_threshold(&DivisorClass::from_ints(&[1, 0]), &f1).unwrap_err();
        assert!(matches!(err, LabError::NotAmple { .. }));
    }

    #[test]
    fn contraction_examples() {
        let f1 = SurfaceModel::hirzebruch(1);
        let info = classify_contraction(&DivisorClass::from_ints(&[4, -1]), &f1).unwrap();
        assert_eq!(info.kind, ContractionKind::Divisorial);
        assert_eq!(info.semiample_class, Some(DivisorClass::from_ints(&[1, 0])));
        assert_eq!(info.contracted_label.as_deref(), Some("E"));
        assert_eq!(info.discrepancies.len(), 1);
        assert_eq!(info.discrepancies[0].discrepancy, q(1, 1));

        let info = classify_contraction(&DivisorClass::from_ints(&[2, -1]), &f1).unwrap();
        assert_eq!(info.kind, ContractionKind::FiberType);
        let l = info.semiample_class.unwrap();
        assert_eq!(l, DivisorClass::new(vec![q(1, 2), q(-1, 2)]));
        assert!(intersect(&l, &DivisorClass::from_ints(&[1, -1]), &f1)
            .unwrap()
            .is_zero());

        let info =
            classify_contraction(&DivisorClass::from_ints(&[1]), &SurfaceModel::p2()).unwrap();
        assert_eq!(info.kind, ContractionKind::PointCollapse);
        assert_eq!(info.nef_threshold, Some(q(1, 3)));

        let info =
            classify_contraction(&DivisorClass::from_ints(&[1]), &SurfaceModel::torus()).unwrap();
        assert_eq!(info.kind, ContractionKind::NoneNeeded);
        assert!(info.semiample_class.is_none());
        assert!(info.singular_time.is_infinite());
    }

    #[test]
    fn class_path_examples() {
        let f1 = SurfaceModel::hirzebruch(1);
        let a = DivisorClass::from_ints(&[4, -1]);
        assert_eq!(class_path(&a, &f1, 0.0).unwrap(), a.to_real());
        let at = class_path(&a, &f1, 2f64.ln()).unwrap();
        assert!(
            at.max_abs_diff(&RealClass {
                coeffs: vec![0.5, 0.0]
            }) < 1e-15
        );
        for r in [q(1, 1), q(1, 2), q(7, 3)] {
            let r = rational_to_f64(&r);
            assert!(b_of(Some(r), (r + 1.0).ln()).abs() < 1e-15);
        }
    }

    #[test]
    fn rational_strings_round_trip() {
        for s in ["3", "-1/2", "7/3"] {
            assert_eq!(format_rational(&parse_rational(s).unwrap()), s);
        }
        assert!(parse_rational("1/0").is_err());
        assert!(parse_rational("x").is_err());
        let c = DivisorClass::new(vec![q(4, 1), q(-1, 3)]);
        let json = serde_json::to_string(&c).unwrap();
        assert_eq!(json, r#"{"coeffs":["4","-1/3"]}"#);
        assert_eq!(serde_json::from_str::<DivisorClass>(&json).unwrap(), c);
    }

    fn ample_on(k: u32) -> impl Strategy<Value = DivisorClass> {
        // D·E = e > 0, D·F = f > 0 gives y = -e/k, x = f + e/k.
        (1i64..20, 1i64..20, 1i64..6).prop_map(move |(e, f, d)| {
            let k = k as i64;
            let e = Rational::new(e, d);
            let f = Rational::new(f, d);
            DivisorClass::new(vec![f + e / k, -e / k])
        })
    }

    proptest! {
        #[test]
        fn threshold_is_scale_equivariant(
            (k, a) in (1u32..5).prop_flat_map(|k| (Just(k), ample_on(k))),
            m in 1i64..9,
            d in 1i64..9,
        ) {
            let s = SurfaceModel::hirzebruch(k);
            prop_assert!(is_ample(&a, &s).unwrap());
            let m = Rational::new(m, d);
            let r = nef_threshold(&a, &s).unwrap().unwrap();
            let rm = nef_threshold(&a.scale(m), &s).unwrap().unwrap();
            prop_assert_eq!(rm, r * m);
        }

        #[test]
        fn nef_boundary_is_exact(a in ample_on(1)) {
            let s = SurfaceModel::hirzebruch(1);
            let r = nef_threshold(&a, &s).unwrap().unwrap();
            let k = &s.canonical_class;
            prop_assert!(is_nef(&a.add(&k.scale(r)), &s).unwrap());
            prop_assert!(is_nef(&a.add(&k.scale(r / 2)), &s).unwrap());
            prop_assert!(!is_nef(&a.add(&k.scale(r + Rational::new(1, 1000))), &s).unwrap());
        }

        #[test]
        fn class_path_stays_ample_before_t(a in ample_on(1)) {
            let s = SurfaceModel::hirzebruch(1);
            let info = classify_contraction(&a, &s).unwrap();
            let t_sing = info.singular_time;
            for i in 0..100 {
                let t = t_sing * i as f64 / 100.0;
                let at = class_path(&a, &s, t).unwrap();
                for c in &s.curve_basis {
                    prop_assert!(intersect_real(&at.coeffs, &c.class.to_real().coeffs, &s) > 0.0);
                }
            }
            let at = class_path(&a, &s, t_sing).unwrap();
            match info.contracted_ray {
                Some(ray) => {
                    let pairing = intersect_real(&at.coeffs, &ray.to_real().coeffs, &s);
                    prop_assert!(pairing.abs() < 1e-12);
                }
                None => prop_assert!(at.coeffs.iter().all(|c| c.abs() < 1e-12)),
            }
        }

        #[test]
        fn decomposition_is_an_exact_identity(a in ample_on(1)) {
            let s = SurfaceModel::hirzebruch(1);
            prop_assert_eq!(
                class_path_symbolic(&a, &s).unwrap(),
                class_path_decomposed(&a, &s).unwrap()
            );
        }
    }
}
