//! Sparse Laurent polynomials in one formal variable and formal delta
//! series, over double-precision complex coefficients.
//!
//! The variable `u` stands for `q^j` where `j` indexes the basis of the
//! infinite oscillator-like module. Tracing over `j` sends the monomial
//! `u^k` to the formal symbol `delta(q^k)`; distinct `k` are kept as
//! independent symbols and never assigned numerical values here.

use num_complex::Complex64;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::collections::BTreeMap;

use crate::{QopError, Result};

pub type Scalar = Complex64;

/// Relative magnitude below which a coefficient is treated as float dust
/// and pruned, so that rounding noise cannot pollute delta supports.
pub const PRUNE_REL: f64 = 1e-14;

fn canonicalize(terms: &mut BTreeMap<i64, Scalar>) {
    let max = terms.values().fold(0.0_f64, |m, c| m.max(c.norm()));
    if max == 0.0 {
        terms.clear();
        return;
    }
    let cut = PRUNE_REL * max;
    terms.retain(|_, c| c.norm() >= cut);
}

macro_rules! sparse_map_type {
    ($name:ident, $doc:literal) => {
        #[doc = $doc]
        #[derive(Clone, Debug, Default, PartialEq)]
        pub struct $name {
            terms: BTreeMap<i64, Scalar>,
        }

        impl $name {
            pub fn zero() -> Self {
                Self::default()
            }

            pub fn from_terms<I: IntoIterator<Item = (i64, Scalar)>>(iter: I) -> Self {
                let mut terms: BTreeMap<i64, Scalar> = BTreeMap::new();
                for (k, c) in iter {
                    debug_assert!(c.re.is_finite() && c.im.is_finite());
                    *terms.entry(k).or_insert(Scalar::ZERO) += c;
                }
                canonicalize(&mut terms);
                Self { terms }
            }

            pub fn monomial(exp: i64, coeff: Scalar) -> Self {
                Self::from_terms([(exp, coeff)])
            }

            pub fn coeff(&self, exp: i64) -> Scalar {
                self.terms.get(&exp).copied().unwrap_or(Scalar::ZERO)
            }

            pub fn iter(&self) -> impl Iterator<Item = (i64, Scalar)> + '_ {
                self.terms.iter().map(|(k, c)| (*k, *c))
            }

            pub fn support(&self) -> Vec<i64> {
                self.terms.keys().copied().collect()
            }

            pub fn is_zero(&self) -> bool {
                self.terms.is_empty()
            }

            pub fn max_abs(&self) -> f64 {
                self.terms.values().fold(0.0, |m, c| m.max(c.norm()))
            }

            pub fn add(&self, other: &Self) -> Self {
                Self::from_terms(self.iter().chain(other.iter()))
            }

            pub fn sub(&self, other: &Self) -> Self {
                Self::from_terms(
                    self.iter().chain(other.iter().map(|(k, c)| (k, -c))),
                )
            }

            pub fn scale(&self, s: Scalar) -> Self {
                Self::from_terms(self.iter().map(|(k, c)| (k, c * s)))
            }
        }

        impl Serialize for $name {
            fn serialize<S: Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
                let repr = TermsRepr {
                    terms: self.terms.iter().map(|(k, c)| (*k, [c.re, c.im])).collect(),
                };
                repr.serialize(ser)
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
                let repr = TermsRepr::deserialize(de)?;
                let mut terms = BTreeMap::new();
                for (k, [re, im]) in repr.terms {
                    if !(re.is_finite() && im.is_finite()) {
                        return Err(D::Error::custom("non-finite coefficient"));
                    }
                    if terms.insert(k, Scalar::new(re, im)).is_some() {
                        return Err(D::Error::custom("duplicate exponent"));
                    }
                }
                // parsed data is taken verbatim (bit-identical round trip);
                // canonical form is the writer's responsibility
                Ok(Self { terms })
            }
        }
    };
}

sparse_map_type!(
    LaurentPoly,
    "Sparse exponent-to-coefficient map in the formal variable `u = q^j`."
);
sparse_map_type!(
    DeltaSeries,
    "Finite linear combination of formal symbols `delta(q^k)`, keyed by `k`."
);

#[derive(Serialize, Deserialize)]
struct TermsRepr {
    terms: Vec<(i64, [f64; 2])>,
}

impl LaurentPoly {
    pub fn one() -> Self {
        Self::monomial(0, Scalar::ONE)
    }

    /// Numerical value at a concrete `u`; used when an action is applied to
    /// a single basis vector rather than kept symbolic.
    pub fn eval(&self, u: Scalar) -> Scalar {
        self.iter().map(|(k, c)| c * u.powi(k as i32)).sum()
    }
}

/// Product of two Laurent polynomials (exponent-wise convolution).
pub fn lp_mul(a: &LaurentPoly, b: &LaurentPoly) -> LaurentPoly {
    let mut terms: BTreeMap<i64, Scalar> = BTreeMap::new();
    for (k1, c1) in a.iter() {
        for (k2, c2) in b.iter() {
            *terms.entry(k1 + k2).or_insert(Scalar::ZERO) += c1 * c2;
        }
    }
    canonicalize(&mut terms);
    LaurentPoly { terms }
}

/// Substitution `u -> q^m u`: the coefficient of `u^k` picks up `q^{mk}`.
/// This is the reindexing a site sees when the chain to its right has
/// already shifted the module index by `m`.
pub fn lp_shift(p: &LaurentPoly, m: i64, q: Scalar) -> Result<LaurentPoly> {
    if q == Scalar::ZERO {
        return Err(QopError::ZeroShiftBase);
    }
    Ok(LaurentPoly::from_terms(
        p.iter().map(|(k, c)| (k, c * q.powi((m * k) as i32))),
    ))
}

/// Formal trace over `j` of a polynomial in `u = q^j`: termwise
/// `u^k -> delta(q^k)`, support preserved exactly.
pub fn lp_trace_to_delta(p: &LaurentPoly) -> DeltaSeries {
    DeltaSeries::from_terms(p.iter())
}

/// Universal check record: a named residual against a tolerance.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ResidualReport {
    pub check: String,
    pub residual: f64,
    pub tol: f64,
    pub pass: bool,
}

impl ResidualReport {
    pub fn new(check: impl Into<String>, residual: f64, tol: f64) -> Self {
        assert!(tol > 0.0, "tolerance must be positive");
        ResidualReport {
            check: check.into(),
            residual,
            tol,
            pass: residual.is_finite() && residual < tol,
        }
    }
}

/// Coefficient-wise comparison over the union of supports, relative to
/// `1 + |b_k|` per symbol. Disjoint support therefore counts in full.
pub fn delta_compare(a: &DeltaSeries, b: &DeltaSeries, tol: f64) -> ResidualReport {
    let mut worst = 0.0_f64;
    let keys: std::collections::BTreeSet<i64> =
        a.support().into_iter().chain(b.support()).collect();
    for k in keys {
        let ak = a.coeff(k);
        let bk = b.coeff(k);
        worst = worst.max((ak - bk).norm() / (1.0 + bk.norm()));
    }
    ResidualReport::new("delta-compare", worst, tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Scalar {
        Scalar::new(re, im)
    }

    fn re(x: f64) -> Scalar {
        Scalar::new(x, 0.0)
    }

    #[test]
    fn mul_difference_of_squares() {
        let a = LaurentPoly::from_terms([(1, re(1.0)), (-1, re(1.0))]);
        let b = LaurentPoly::from_terms([(1, re(1.0)), (-1, re(-1.0))]);
        let p = lp_mul(&a, &b);
        assert_eq!(p.support(), vec![-2, 2]);
        assert!((p.coeff(2) - re(1.0)).norm() < 1e-15);
        assert!((p.coeff(-2) - re(-1.0)).norm() < 1e-15);
    }

    #[test]
    fn mul_by_empty_annihilates() {
        let a = LaurentPoly::from_terms([(3, c(2.0, 1.0)), (0, re(5.0))]);
        assert!(lp_mul(&a, &LaurentPoly::zero()).is_zero());
    }

    #[test]
    fn mul_exponent_cancellation() {
        let a = LaurentPoly::monomial(2, re(2.0));
        let b = LaurentPoly::monomial(-2, re(3.0));
        let p = lp_mul(&a, &b);
        assert_eq!(p.support(), vec![0]);
        assert!((p.coeff(0) - re(6.0)).norm() < 1e-15);
    }

    #[test]
    fn shift_single_term_and_constant() {
        let q = c(0.3, 1.1);
        let p = lp_shift(&LaurentPoly::monomial(1, re(1.0)), 2, q).unwrap();
        assert!((p.coeff(1) - q * q).norm() < 1e-15);
        let k = lp_shift(&LaurentPoly::monomial(0, re(5.0)), 7, q).unwrap();
        assert!((k.coeff(0) - re(5.0)).norm() < 1e-15);
    }

    #[test]
    fn shift_two_term_oracle() {
        // p = u^2 + u^-1, m = 1, q = 2 -> 4 u^2 + 0.5 u^-1
        let p = LaurentPoly::from_terms([(2, re(1.0)), (-1, re(1.0))]);
        let s = lp_shift(&p, 1, re(2.0)).unwrap();
        assert!((s.coeff(2) - re(4.0)).norm() < 1e-15);
        assert!((s.coeff(-1) - re(0.5)).norm() < 1e-15);
    }

    #[test]
    fn shift_rejects_zero_base() {
        let p = LaurentPoly::one();
        assert!(matches!(
            lp_shift(&p, 1, Scalar::ZERO),
            Err(QopError::ZeroShiftBase)
        ));
    }

    #[test]
    fn trace_is_termwise() {
        let p = LaurentPoly::from_terms([(2, re(3.0)), (0, re(5.0))]);
        let d = lp_trace_to_delta(&p);
        assert_eq!(d.support(), vec![0, 2]);
        assert!((d.coeff(2) - re(3.0)).norm() < 1e-15);
        assert!((d.coeff(0) - re(5.0)).norm() < 1e-15);
        assert!(lp_trace_to_delta(&LaurentPoly::zero()).is_zero());
        let m = lp_trace_to_delta(&LaurentPoly::monomial(-4, re(1.0)));
        assert_eq!(m.support(), vec![-4]);
    }

    #[test]
    fn delta_compare_examples() {
        let d = DeltaSeries::from_terms([(0, re(1.0)), (2, re(2.0))]);
        let r = delta_compare(&d, &d, 1e-9);
        assert!(r.pass && r.residual == 0.0);

        // disjoint support: residual 1/(1+0) = 1
        let a = DeltaSeries::monomial(2, re(1.0));
        let r = delta_compare(&a, &DeltaSeries::zero(), 1e-9);
        assert!(!r.pass);
        assert!((r.residual - 1.0).abs() < 1e-15);

        let a = DeltaSeries::monomial(0, re(1.0 + 1e-12));
        let b = DeltaSeries::monomial(0, re(1.0));
        assert!(delta_compare(&a, &b, 1e-9).pass);
    }

    #[test]
    fn pruning_drops_dust_not_signal() {
        let p = LaurentPoly::from_terms([(0, re(1.0)), (5, re(1e-20))]);
        assert_eq!(p.support(), vec![0]);
        let tiny = LaurentPoly::from_terms([(0, re(1e-20)), (5, re(2e-20))]);
        assert_eq!(tiny.support(), vec![0, 5]);
    }

    // magnitudes bounded away from zero and exponents kept moderate, so the
    // dynamic range stays far below the pruning threshold and both sides of
    // each identity see identical canonicalization
    fn arb_scalar() -> impl Strategy<Value = Scalar> {
        (0.1..2.0f64, 0.0..std::f64::consts::TAU)
            .prop_map(|(mag, ph)| Scalar::from_polar(mag, ph))
    }

    fn arb_poly() -> impl Strategy<Value = LaurentPoly> {
        proptest::collection::vec((-6i64..=6, arb_scalar()), 0..6)
            .prop_map(LaurentPoly::from_terms)
    }

    fn nonzero_scalar() -> impl Strategy<Value = Scalar> {
        (0.5..2.0f64, 0.0..std::f64::consts::TAU)
            .prop_map(|(mag, ph)| Scalar::from_polar(mag, ph))
    }

    fn poly_close(a: &LaurentPoly, b: &LaurentPoly, tol: f64) -> bool {
        a.sub(b).max_abs() < tol * (1.0 + a.max_abs().max(b.max_abs()))
    }

    proptest! {
        #[test]
        fn mul_commutative(a in arb_poly(), b in arb_poly()) {
            prop_assert!(poly_close(&lp_mul(&a, &b), &lp_mul(&b, &a), 1e-13));
        }

        #[test]
        fn mul_associative(a in arb_poly(), b in arb_poly(), c in arb_poly()) {
            let lhs = lp_mul(&lp_mul(&a, &b), &c);
            let rhs = lp_mul(&a, &lp_mul(&b, &c));
            prop_assert!(poly_close(&lhs, &rhs, 1e-13));
        }

        #[test]
        fn shift_composes(p in arb_poly(), m1 in -2i64..=2, m2 in -2i64..=2, q in nonzero_scalar()) {
            let two = lp_shift(&lp_shift(&p, m1, q).unwrap(), m2, q).unwrap();
            let one = lp_shift(&p, m1 + m2, q).unwrap();
            prop_assert_eq!(two.support(), one.support());
            prop_assert!(poly_close(&two, &one, 1e-12));
        }

        #[test]
        fn trace_linear(a in arb_poly(), b in arb_poly()) {
            let lhs = lp_trace_to_delta(&a.add(&b));
            let rhs = lp_trace_to_delta(&a).add(&lp_trace_to_delta(&b));
            prop_assert!(lhs.sub(&rhs).max_abs() < 1e-13);
        }

        #[test]
        fn json_round_trip_bit_identical(p in arb_poly()) {
            let text = serde_json::to_string(&p).unwrap();
            let back: LaurentPoly = serde_json::from_str(&text).unwrap();
            prop_assert_eq!(p.support(), back.support());
            for (k, c) in p.iter() {
                let d = back.coeff(k);
                prop_assert_eq!(c.re.to_bits(), d.re.to_bits());
                prop_assert_eq!(c.im.to_bits(), d.im.to_bits());
            }
        }
    }
}
