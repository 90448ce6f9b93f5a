//! R-matrices and intertwiners: the normalized 6-vertex R-matrix, the
//! closed-form W-operator on the Borel module tensored with a two-dimensional
//! evaluation module, its recursion system and phi coefficients, the
//! decomposition checks on the triple tensor space, and a generic
//! finite-dimensional intertwiner solver used by fusion.

use nalgebra::DMatrix;
use std::collections::{HashMap, HashSet};
use std::ops::RangeInclusive;

use crate::laurent::{lp_mul, LaurentPoly, ResidualReport, Scalar};
use crate::repmod::{
    a_coeff, d_coeff, d_poly, eval_rep_action, AlgebraParams, BorelParams, EvalModuleSpec, Gen,
};
use crate::{QopError, Result};

/// Normalization scheme for the W-operator entries.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Scheme {
    /// rho identically 1; entries are rational in the raw parameters.
    Unit,
    /// rho = exp(i v / 2) in the angle parametrization q = exp(2 i eta),
    /// w/(z q) = exp(2 i v). Taking the angle as input instead of a branch
    /// of a quarter power removes all branch ambiguity. Defined only on the
    /// two-parameter family s1 = s2 = 0.
    Baxter { v: f64 },
}

impl Scheme {
    pub fn rho(&self) -> Scalar {
        match self {
            Scheme::Unit => Scalar::ONE,
            Scheme::Baxter { v } => (Scalar::I * (v / 2.0)).exp(),
        }
    }
}

/// The normalized two-site R-matrix, on the ordered basis
/// v0 (x) v0, v0 (x) v1, v1 (x) v0, v1 (x) v1 (first leg major).
#[derive(Clone, Debug)]
pub struct RMatrixValue {
    pub zeta: Scalar,
    pub matrix: DMatrix<Scalar>,
}

pub fn rbar(zeta: Scalar, q: Scalar) -> Result<RMatrixValue> {
    let denom = Scalar::ONE - q * q * zeta;
    if denom.norm() < 1e-13 * (1.0 + (q * q * zeta).norm()) {
        return Err(QopError::RMatrixPole);
    }
    let b = q * (Scalar::ONE - zeta) / denom;
    let c_upper = (Scalar::ONE - q * q) / denom;
    let c_lower = zeta * c_upper;
    let mut m = DMatrix::<Scalar>::zeros(4, 4);
    m[(0, 0)] = Scalar::ONE;
    m[(3, 3)] = Scalar::ONE;
    m[(1, 1)] = b;
    m[(2, 2)] = b;
    m[(1, 2)] = c_upper;
    m[(2, 1)] = c_lower;
    Ok(RMatrixValue { zeta, matrix: m })
}

pub fn mat_max_abs(m: &DMatrix<Scalar>) -> f64 {
    m.iter().map(|c| c.norm()).fold(0.0, f64::max)
}

fn kron_id_left(dim: usize, m: &DMatrix<Scalar>) -> DMatrix<Scalar> {
    DMatrix::<Scalar>::identity(dim, dim).kronecker(m)
}

fn kron_id_right(m: &DMatrix<Scalar>, dim: usize) -> DMatrix<Scalar> {
    m.kronecker(&DMatrix::<Scalar>::identity(dim, dim))
}

fn embed_13(m: &DMatrix<Scalar>) -> DMatrix<Scalar> {
    // legs of dimension 2 each; m acts on legs 1 and 3 of three
    let mut out = DMatrix::<Scalar>::zeros(8, 8);
    for i1 in 0..2 {
        for i3 in 0..2 {
            for j1 in 0..2 {
                for j3 in 0..2 {
                    for mid in 0..2 {
                        out[(4 * i1 + 2 * mid + i3, 4 * j1 + 2 * mid + j3)] =
                            m[(2 * i1 + i3, 2 * j1 + j3)];
                    }
                }
            }
        }
    }
    out
}

/// Residual of R12(z1/z2) R13(z1) R23(z2) = R23(z2) R13(z1) R12(z1/z2)
/// on the triple tensor space, with the third spectral parameter fixed to 1.
pub fn yang_baxter_residual(z1: Scalar, z2: Scalar, q: Scalar) -> Result<ResidualReport> {
    let r12 = kron_id_right(&rbar(z1 / z2, q)?.matrix, 2);
    let r13 = embed_13(&rbar(z1, q)?.matrix);
    let r23 = kron_id_left(2, &rbar(z2, q)?.matrix);
    let lhs = &r12 * &r13 * &r23;
    let rhs = &r23 * &r13 * &r12;
    let resid = mat_max_abs(&(lhs.clone() - rhs)) / (1.0 + mat_max_abs(&lhs));
    Ok(ResidualReport::new("yang-baxter", resid, 1e-12))
}

/// Closed-form W-operator entries, each a Laurent polynomial in u = q^j
/// where j is the index of the incoming Borel-module basis vector. The four
/// families are the (+ -> +), (- -> -), (+ -> -) and (- -> +) amplitudes;
/// the module index moves by (outgoing spin - incoming spin)/2.
#[derive(Clone, Debug)]
pub struct WOperatorSymbolic {
    pub params: BorelParams,
    pub w: Scalar,
    pub q: Scalar,
    pub scheme: Scheme,
    pub alpha0: LaurentPoly,
    pub alpha1: LaurentPoly,
    pub beta0: LaurentPoly,
    pub beta1: LaurentPoly,
}

impl WOperatorSymbolic {
    /// (entry polynomial, module-index shift) for incoming spin `input` and
    /// outgoing spin `output`, spins in {+1, -1}.
    pub fn entry(&self, output: i8, input: i8) -> (&LaurentPoly, i64) {
        match (output, input) {
            (1, 1) => (&self.alpha0, 0),
            (-1, -1) => (&self.alpha1, 0),
            (-1, 1) => (&self.beta0, -1),
            (1, -1) => (&self.beta1, 1),
            _ => unreachable!("spins must be +1 or -1"),
        }
    }
}

pub fn w_closed_form(
    params: &BorelParams,
    w: Scalar,
    q: Scalar,
    scheme: Scheme,
) -> Result<WOperatorSymbolic> {
    if w == Scalar::ZERO {
        return Err(QopError::Degenerate("w = 0".into()));
    }
    if (q * q - Scalar::ONE).norm() < 1e-14 * (1.0 + q.norm_sqr()) {
        return Err(QopError::Degenerate("q^2 = 1".into()));
    }
    if let Scheme::Baxter { .. } = scheme {
        if params.s1 != Scalar::ZERO || params.s2 != Scalar::ZERO {
            return Err(QopError::SchemeRequiresZeroS(
                "baxter normalization is defined only at s1 = s2 = 0".into(),
            ));
        }
    }
    let rho = scheme.rho();
    let qq = q - q.inv();
    let (s0, s1, s2) = (params.s0, params.s1, params.s2);
    let alpha0 = LaurentPoly::from_terms([
        (1, -rho / qq),
        (-1, rho * s2 * q * (Scalar::ONE - q * q) / w),
    ]);
    let alpha1 = LaurentPoly::from_terms([
        (1, rho * s0 * s1 * q * (q.powi(-2) - Scalar::ONE) / w),
        (-1, -rho * s0 / qq),
    ]);
    let beta0 = LaurentPoly::monomial(1, rho);
    let beta1 = lp_mul(
        &LaurentPoly::monomial(-1, rho * s0 / w),
        &d_poly(params.z, s1, s2, q)?,
    );
    Ok(WOperatorSymbolic {
        params: *params,
        w,
        q,
        scheme,
        alpha0,
        alpha1,
        beta0,
        beta1,
    })
}

/// Pointwise check of the eight first-order recursions tying the four entry
/// families together, over j in j_range. Returns the worst relative residual.
pub fn w_recursion_residual(
    wop: &WOperatorSymbolic,
    j_range: RangeInclusive<i64>,
) -> Result<ResidualReport> {
    let q = wop.q;
    let p = &wop.params;
    let s0 = p.s0;
    let w = wop.w;
    let a0 = |j: i64| wop.alpha0.eval(q.powi(j as i32));
    let a1 = |j: i64| wop.alpha1.eval(q.powi(j as i32));
    let b0 = |j: i64| wop.beta0.eval(q.powi(j as i32));
    let b1 = |j: i64| wop.beta1.eval(q.powi(j as i32));
    let d = |j: i64| d_coeff(j, p.z, p.s1, p.s2, q);
    let mut worst = 0.0_f64;
    let mut push = |lhs: Scalar, rhs: Scalar| {
        worst = worst.max((lhs - rhs).norm() / (1.0 + rhs.norm()));
    };
    for j in j_range {
        let su = s0 * q.powi(-2 * j as i32);
        let si = q.powi(2 * j as i32) / s0;
        push(b0(j - 1), b0(j) / q);
        push(a0(j - 1), q * a0(j) + b0(j));
        push(a1(j - 1) + su * b0(j), a1(j) / q);
        push(b1(j - 1) + su * a0(j), a1(j) + q * b1(j));
        push(d(j)? * a0(j + 1) + si * w * b1(j), d(j)? * a0(j) / q);
        push(
            d(j)? * b0(j + 1) + si * w * a1(j),
            w * a0(j) + q * d(j - 1)? * b0(j),
        );
        push(d(j)? * a1(j + 1), q * d(j)? * a1(j) + w * b1(j));
        push(d(j)? * b1(j + 1), d(j + 1)? * b1(j) / q);
    }
    Ok(ResidualReport::new("w-recursions", worst, 1e-10))
}

#[derive(Clone, Copy, Debug)]
pub struct PhiPair {
    pub phi1: Scalar,
    pub phi2: Scalar,
}

/// The two scalar coefficients appearing in the two-term functional relation.
/// In the unit scheme they are ((w-z)/(w-q^2 z), q); the baxter normalization
/// moves a factor q from the second to the first.
pub fn phi_coeffs(params: &BorelParams, w: Scalar, q: Scalar, scheme: Scheme) -> Result<PhiPair> {
    let denom = w - q * q * params.z;
    if denom.norm() < 1e-13 * (1.0 + w.norm() + (q * q * params.z).norm()) {
        return Err(QopError::RMatrixPole);
    }
    let base = (w - params.z) / denom;
    Ok(match scheme {
        Scheme::Unit => PhiPair {
            phi1: base,
            phi2: q,
        },
        Scheme::Baxter { .. } => PhiPair {
            phi1: q * base,
            phi2: Scalar::ONE,
        },
    })
}

/// Sparse vector on the triple space: key = (Borel index, spin index of the
/// z-leg, spin index of the w-leg), spin indices 0 for v0 and 1 for v1.
type TripleVector = HashMap<(i64, u8, u8), Scalar>;

fn tadd(out: &mut TripleVector, key: (i64, u8, u8), val: Scalar) {
    *out.entry(key).or_insert(Scalar::ZERO) += val;
}

fn tscale(v: &TripleVector, s: Scalar) -> TripleVector {
    v.iter().map(|(k, c)| (*k, *c * s)).collect()
}

fn tsum(parts: &[TripleVector]) -> TripleVector {
    let mut out = TripleVector::new();
    for p in parts {
        for (k, c) in p {
            tadd(&mut out, *k, *c);
        }
    }
    out
}

fn tresid(a: &TripleVector, b: &TripleVector) -> f64 {
    let scale = b.values().map(|c| c.norm()).fold(0.0, f64::max);
    let keys: HashSet<_> = a.keys().chain(b.keys()).collect();
    let mut worst = 0.0_f64;
    for k in keys {
        let x = a.get(k).copied().unwrap_or(Scalar::ZERO);
        let y = b.get(k).copied().unwrap_or(Scalar::ZERO);
        worst = worst.max((x - y).norm());
    }
    worst / (1.0 + scale)
}

fn apply_rbar23(vec: &TripleVector, zeta: Scalar, q: Scalar) -> Result<TripleVector> {
    let r = rbar(zeta, q)?;
    let b = r.matrix[(1, 1)];
    let c_upper = r.matrix[(1, 2)];
    let c_lower = r.matrix[(2, 1)];
    let mut out = TripleVector::new();
    for (&(m, ez, ew), &c) in vec {
        match (ez, ew) {
            (0, 0) | (1, 1) => tadd(&mut out, (m, ez, ew), c),
            (0, 1) => {
                tadd(&mut out, (m, 0, 1), c * b);
                tadd(&mut out, (m, 1, 0), c * c_lower);
            }
            (1, 0) => {
                tadd(&mut out, (m, 1, 0), c * b);
                tadd(&mut out, (m, 0, 1), c * c_upper);
            }
            _ => unreachable!(),
        }
    }
    Ok(out)
}

fn apply_w13(vec: &TripleVector, wop: &WOperatorSymbolic) -> TripleVector {
    let q = wop.q;
    let mut out = TripleVector::new();
    for (&(m, ez, ew), &c) in vec {
        let u = q.powi(m as i32);
        if ew == 0 {
            tadd(&mut out, (m, ez, 0), c * wop.alpha0.eval(u));
            tadd(&mut out, (m - 1, ez, 1), c * wop.beta0.eval(u));
        } else {
            tadd(&mut out, (m, ez, 1), c * wop.alpha1.eval(u));
            tadd(&mut out, (m + 1, ez, 0), c * wop.beta1.eval(u));
        }
    }
    out
}

fn a_tensor(j: i64, ew: u8, p: &BorelParams, q: Scalar) -> TripleVector {
    let mut v = TripleVector::new();
    tadd(&mut v, (j, 0, ew), a_coeff(j, p, q));
    tadd(&mut v, (j - 1, 1, ew), Scalar::ONE);
    v
}

fn b_tensor(j: i64, ew: u8) -> TripleVector {
    let mut v = TripleVector::new();
    tadd(&mut v, (j + 1, 0, ew), Scalar::ONE);
    v
}

#[derive(Clone, Debug)]
pub struct SrOutcome {
    pub report: ResidualReport,
    /// phi1 read off from the first relation by coefficient ratio.
    pub phi1: Scalar,
    /// phi2 read off from the third relation by coefficient ratio.
    pub phi2: Scalar,
}

/// Verifies the four decomposition relations for W13(z,s;w) R23(z/w) acting
/// on the distinguished A/B vectors of the submodule filtration, including
/// the two inhomogeneous A-terms in the fourth relation and their vanishing
/// in the B-quotient. The scalar coefficients on the right-hand sides are
/// the W entries at shifted parameters (z q^{+-2}, s^{+-}).
pub fn check_sr_relations(
    params: &BorelParams,
    w: Scalar,
    q: Scalar,
    j_range: RangeInclusive<i64>,
) -> Result<SrOutcome> {
    let p = params;
    let zeta = p.z / w;
    let denom = w - q * q * p.z;
    if denom.norm() < 1e-13 * (1.0 + w.norm() + (q * q * p.z).norm()) {
        return Err(QopError::RMatrixPole);
    }
    let wop = w_closed_form(p, w, q, Scheme::Unit)?;
    let pp = p.shifted(q, 1);
    let pm = p.shifted(q, -1);
    let wplus = w_closed_form(&pp, w, q, Scheme::Unit)?;
    let wminus = w_closed_form(&pm, w, q, Scheme::Unit)?;
    let phi1 = (w - p.z) / denom;
    let phi2 = q;
    let gamma = p.z * (Scalar::ONE - q * q) / denom;
    let apply = |v: &TripleVector| -> Result<TripleVector> {
        Ok(apply_w13(&apply_rbar23(v, zeta, q)?, &wop))
    };
    let ev = |poly: &LaurentPoly, j: i64| poly.eval(q.powi(j as i32));
    let mut worst = 0.0_f64;
    let mut phi1_ex = Scalar::ZERO;
    let mut phi2_ex = Scalar::ZERO;
    let mut phi_ref = 0.0_f64;
    for j in j_range {
        // incoming A_j (x) v0
        let lhs1 = apply(&a_tensor(j, 0, p, q))?;
        let rhs1 = tsum(&[
            tscale(&a_tensor(j, 0, p, q), phi1 * ev(&wplus.alpha0, j)),
            tscale(&a_tensor(j - 1, 1, p, q), phi1 * ev(&wplus.beta0, j)),
        ]);
        worst = worst.max(tresid(&lhs1, &rhs1));
        // incoming A_j (x) v1
        let lhs2 = apply(&a_tensor(j, 1, p, q))?;
        let rhs2 = tsum(&[
            tscale(&a_tensor(j, 1, p, q), phi1 * ev(&wplus.alpha1, j)),
            tscale(&a_tensor(j + 1, 0, p, q), phi1 * ev(&wplus.beta1, j)),
        ]);
        worst = worst.max(tresid(&lhs2, &rhs2));
        // incoming B_j (x) v0
        let lhs3 = apply(&b_tensor(j, 0))?;
        let rhs3 = tsum(&[
            tscale(&b_tensor(j, 0), phi2 * ev(&wminus.alpha0, j)),
            tscale(&b_tensor(j - 1, 1), phi2 * ev(&wminus.beta0, j)),
        ]);
        worst = worst.max(tresid(&lhs3, &rhs3));
        // incoming B_j (x) v1: two extra A-terms at ambient parameters
        let lhs4 = apply(&b_tensor(j, 1))?;
        let rhs4 = tsum(&[
            tscale(&b_tensor(j, 1), phi2 * ev(&wminus.alpha1, j)),
            tscale(&b_tensor(j + 1, 0), phi2 * ev(&wminus.beta1, j)),
            tscale(&a_tensor(j + 1, 1, p, q), gamma * ev(&wop.beta0, j + 1)),
            tscale(&a_tensor(j + 2, 0, p, q), gamma * ev(&wop.alpha0, j + 1)),
        ]);
        worst = worst.max(tresid(&lhs4, &rhs4));
        // quotient form of the fourth relation: subtract the B-part, then
        // the remainder must lie in the span of the two A-vectors, whose
        // leading keys are disjoint from everything else
        let mut rem = lhs4.clone();
        for (k, c) in tsum(&[
            tscale(&b_tensor(j, 1), phi2 * ev(&wminus.alpha1, j)),
            tscale(&b_tensor(j + 1, 0), phi2 * ev(&wminus.beta1, j)),
        ]) {
            tadd(&mut rem, k, -c);
        }
        let x = rem.get(&(j, 1, 1)).copied().unwrap_or(Scalar::ZERO);
        let y = rem.get(&(j + 1, 1, 0)).copied().unwrap_or(Scalar::ZERO);
        let quotient_rhs = tsum(&[
            tscale(&a_tensor(j + 1, 1, p, q), x),
            tscale(&a_tensor(j + 2, 0, p, q), y),
        ]);
        worst = worst.max(tresid(&rem, &quotient_rhs));
        // coefficient-ratio extraction of the phis, at the best-conditioned j
        let den1 = ev(&wplus.alpha0, j);
        if den1.norm() > phi_ref {
            phi_ref = den1.norm();
            phi1_ex = lhs1.get(&(j - 1, 1, 0)).copied().unwrap_or(Scalar::ZERO) / den1;
            let den3 = ev(&wminus.alpha0, j);
            phi2_ex = lhs3.get(&(j + 1, 0, 0)).copied().unwrap_or(Scalar::ZERO) / den3;
        }
    }
    Ok(SrOutcome {
        report: ResidualReport::new("sr-relations", worst, 1e-10),
        phi1: phi1_ex,
        phi2: phi2_ex,
    })
}

/// Matrix of the coproduct (primed: opposite coproduct) action of a Borel
/// generator on the tensor product of two evaluation modules, first leg major.
pub fn coproduct_action(
    spec_a: &EvalModuleSpec,
    spec_b: &EvalModuleSpec,
    g: Gen,
    q: Scalar,
    primed: bool,
) -> Result<DMatrix<Scalar>> {
    let ap = AlgebraParams::new(q);
    let act_a = |h: Gen| eval_rep_action(spec_a, h, &ap);
    let act_b = |h: Gen| eval_rep_action(spec_b, h, &ap);
    let id_a = DMatrix::<Scalar>::identity(spec_a.n + 1, spec_a.n + 1);
    let id_b = DMatrix::<Scalar>::identity(spec_b.n + 1, spec_b.n + 1);
    Ok(match g {
        Gen::T1 => act_a(Gen::T1)?.kronecker(&act_b(Gen::T1)?),
        Gen::T1Inv => act_a(Gen::T1Inv)?.kronecker(&act_b(Gen::T1Inv)?),
        Gen::E0 | Gen::E1 => {
            let cartan = if g == Gen::E0 { Gen::T1Inv } else { Gen::T1 };
            if primed {
                id_a.kronecker(&act_b(g)?) + act_a(g)?.kronecker(&act_b(cartan)?)
            } else {
                act_a(g)?.kronecker(&id_b) + act_a(cartan)?.kronecker(&act_b(g)?)
            }
        }
        Gen::F0 | Gen::F1 => {
            return Err(QopError::NotBorelGenerator(g.label().into()));
        }
    })
}

#[derive(Clone, Debug)]
pub struct IntertwinerMatrix {
    pub matrix: DMatrix<Scalar>,
    /// Index of the entry pinned to 1 (highest weight to highest weight).
    pub normalized_entry: (usize, usize),
}

/// Worst relative intertwining defect of X over the three Borel generators.
pub fn intertwiner_residual(
    x: &DMatrix<Scalar>,
    spec_a: &EvalModuleSpec,
    spec_b: &EvalModuleSpec,
    q: Scalar,
) -> Result<f64> {
    let scale = 1.0 + mat_max_abs(x);
    let mut worst = 0.0_f64;
    for g in [Gen::E0, Gen::E1, Gen::T1] {
        let d = coproduct_action(spec_a, spec_b, g, q, false)?;
        let dp = coproduct_action(spec_a, spec_b, g, q, true)?;
        worst = worst.max(mat_max_abs(&(x * d - dp * x)) / scale);
    }
    Ok(worst)
}

/// Solves X (pi (x) pi)Delta(g) = (pi (x) pi)Delta'(g) X for the three Borel
/// generators by stacking the vectorized constraints and extracting the
/// nullspace; errors unless the solution space is exactly one-dimensional.
pub fn solve_intertwiner(
    spec_a: &EvalModuleSpec,
    spec_b: &EvalModuleSpec,
    q: Scalar,
) -> Result<IntertwinerMatrix> {
    let dim = (spec_a.n + 1) * (spec_b.n + 1);
    if dim > 16 {
        return Err(QopError::IntertwinerTooLarge(spec_a.n + 1, spec_b.n + 1));
    }
    let id = DMatrix::<Scalar>::identity(dim, dim);
    let mut stacked = DMatrix::<Scalar>::zeros(3 * dim * dim, dim * dim);
    for (row, g) in [Gen::E0, Gen::E1, Gen::T1].into_iter().enumerate() {
        let d = coproduct_action(spec_a, spec_b, g, q, false)?;
        let dp = coproduct_action(spec_a, spec_b, g, q, true)?;
        let block = d.transpose().kronecker(&id) - id.kronecker(&dp);
        stacked
            .view_mut((row * dim * dim, 0), (dim * dim, dim * dim))
            .copy_from(&block);
    }
    let svd = stacked.svd(false, true);
    let v_t = svd.v_t.as_ref().expect("requested right singular vectors");
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    if smax == 0.0 {
        return Err(QopError::IntertwinerNotUnique(dim * dim));
    }
    let null_idx: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] < 1e-10 * smax)
        .collect();
    if null_idx.len() != 1 {
        return Err(QopError::IntertwinerNotUnique(null_idx.len()));
    }
    let nv = v_t.row(null_idx[0]).adjoint();
    let mut x = DMatrix::<Scalar>::from_column_slice(dim, dim, nv.as_slice());
    // weight cleanup: the Cartan constraint forces entries between distinct
    // weight eigenvalues to vanish; make those zeros exact
    let t_diag = coproduct_action(spec_a, spec_b, Gen::T1, q, false)?;
    let weight_scale = mat_max_abs(&t_diag);
    for i in 0..dim {
        for j in 0..dim {
            if (t_diag[(i, i)] - t_diag[(j, j)]).norm() > 1e-6 * weight_scale {
                x[(i, j)] = Scalar::ZERO;
            }
        }
    }
    let pivot = x[(0, 0)];
    if pivot.norm() < 1e-8 * mat_max_abs(&x) {
        return Err(QopError::Degenerate(
            "intertwiner normalizing entry vanishes (module pair on a reducibility locus)".into(),
        ));
    }
    x /= pivot;
    Ok(IntertwinerMatrix {
        matrix: x,
        normalized_entry: (0, 0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::repmod::qnum;

    fn re(x: f64) -> Scalar {
        Scalar::new(x, 0.0)
    }

    fn generic() -> (BorelParams, Scalar, Scalar) {
        let q = Scalar::new(0.83, 0.41);
        let p = BorelParams::new(
            Scalar::new(1.3, -0.4),
            Scalar::new(0.7, 0.9),
            Scalar::new(-0.6, 1.1),
            Scalar::new(0.5, -0.8),
        );
        (p, Scalar::new(0.9, 0.3), q)
    }

    #[test]
    fn rbar_permutation_at_one() {
        let q = Scalar::new(0.6, 1.2);
        let r = rbar(Scalar::ONE, q).unwrap();
        let mut perm = DMatrix::<Scalar>::zeros(4, 4);
        perm[(0, 0)] = Scalar::ONE;
        perm[(1, 2)] = Scalar::ONE;
        perm[(2, 1)] = Scalar::ONE;
        perm[(3, 3)] = Scalar::ONE;
        assert!(mat_max_abs(&(r.matrix - perm)) < 1e-14);
    }

    #[test]
    fn rbar_zeta_to_zero() {
        let q = Scalar::new(0.6, 1.2);
        let r = rbar(Scalar::ZERO, q).unwrap();
        assert!((r.matrix[(1, 1)] - q).norm() < 1e-14);
        assert!(r.matrix[(2, 1)].norm() < 1e-14);
        assert!((r.matrix[(1, 2)] - (Scalar::ONE - q * q)).norm() < 1e-14);
    }

    #[test]
    fn rbar_pole_and_charge_structure() {
        let q = Scalar::new(0.6, 1.2);
        assert!(matches!(
            rbar((q * q).inv(), q),
            Err(QopError::RMatrixPole)
        ));
        let r = rbar(Scalar::new(0.3, 0.9), q).unwrap().matrix;
        for (i, j) in [
            (0, 1),
            (0, 2),
            (0, 3),
            (1, 0),
            (2, 0),
            (3, 0),
            (1, 3),
            (2, 3),
            (3, 1),
            (3, 2),
        ] {
            assert_eq!(r[(i, j)], Scalar::ZERO);
        }
        assert_eq!(r[(0, 0)], Scalar::ONE);
        assert_eq!(r[(3, 3)], Scalar::ONE);
    }

    #[test]
    fn yang_baxter_generic_equal_and_unimodular() {
        let q = Scalar::new(0.83, 0.41);
        let z1 = Scalar::new(1.7, 0.2);
        let z2 = Scalar::new(0.6, -0.7);
        assert!(yang_baxter_residual(z1, z2, q).unwrap().pass);
        assert!(yang_baxter_residual(z1, z1, q).unwrap().pass);
        let qu = (Scalar::I * 0.77).exp();
        assert!(yang_baxter_residual(z1, z2, qu).unwrap().pass);
    }

    #[test]
    fn w_entries_unit_scheme() {
        let (p, w, q) = generic();
        let wop = w_closed_form(&p, w, q, Scheme::Unit).unwrap();
        let qq = q - q.inv();
        assert!((wop.alpha0.coeff(1) + qq.inv()).norm() < 1e-13);
        assert!((wop.alpha0.coeff(-1) - p.s2 * q * (Scalar::ONE - q * q) / w).norm() < 1e-13);
        assert!((wop.alpha1.coeff(-1) + p.s0 / qq).norm() < 1e-13);
        assert!(
            (wop.alpha1.coeff(1) - p.s0 * p.s1 * q * (q.powi(-2) - Scalar::ONE) / w).norm()
                < 1e-13
        );
        // beta0 is exactly the monomial u
        assert_eq!(wop.beta0.support(), vec![1]);
        assert_eq!(wop.beta0.coeff(1), Scalar::ONE);
        // beta1 carries the d-coefficient: s0 q^{-j} d_j / w
        for j in -3..=3i64 {
            let want = p.s0 * q.powi(-j as i32) * d_coeff(j, p.z, p.s1, p.s2, q).unwrap() / w;
            assert!((wop.beta1.eval(q.powi(j as i32)) - want).norm() < 1e-12);
        }
    }

    #[test]
    fn w_entries_degenerate_s() {
        let (p, w, q) = generic();
        let p0 = BorelParams::new(p.z, p.s0, Scalar::ZERO, Scalar::ZERO);
        let wop = w_closed_form(&p0, w, q, Scheme::Unit).unwrap();
        let qq = q - q.inv();
        assert_eq!(wop.alpha0.support(), vec![1]);
        assert!((wop.alpha0.coeff(1) + qq.inv()).norm() < 1e-13);
        assert_eq!(wop.alpha1.support(), vec![-1]);
        assert_eq!(wop.beta1.support(), vec![-1]);
        assert!((wop.beta1.coeff(-1) - p.z * p.s0 / (w * qq * qq)).norm() < 1e-13);
    }

    #[test]
    fn baxter_scheme_requires_special_s() {
        let (p, w, q) = generic();
        assert!(matches!(
            w_closed_form(&p, w, q, Scheme::Baxter { v: 0.3 }),
            Err(QopError::SchemeRequiresZeroS(_))
        ));
        let p0 = BorelParams::new(p.z, p.s0, Scalar::ZERO, Scalar::ZERO);
        let wop = w_closed_form(&p0, w, q, Scheme::Baxter { v: 0.3 }).unwrap();
        let rho = (Scalar::I * 0.15).exp();
        assert!((wop.beta0.coeff(1) - rho).norm() < 1e-14);
    }

    #[test]
    fn consolidated_form_matches_on_circuits() {
        // in the angle parametrization the compact exponential form of the
        // entries agrees with the closed form around any closed chain of
        // transitions, up to one fixed factor per step
        let eta = 0.37_f64;
        let v = 0.81_f64;
        let ls0 = Scalar::new(0.21, -0.33);
        let q = (Scalar::I * (2.0 * eta)).exp();
        let w = Scalar::ONE;
        let z = (Scalar::I * (-2.0 * (v + eta))).exp();
        let s0 = ls0.exp();
        let p = BorelParams::new(z, s0, Scalar::ZERO, Scalar::ZERO);
        let wop = w_closed_form(&p, w, q, Scheme::Baxter { v }).unwrap();
        let rho = (Scalar::I * (v / 2.0)).exp();
        let nice = |alpha: i8, beta: i8, j: i64| -> Scalar {
            let zw_pow = (Scalar::I * (-2.0 * (v + eta)))
                .scale((1.0 - f64::from(alpha) * f64::from(beta)) / 4.0)
                .exp();
            let s0_pow = (-ls0 * (f64::from(alpha) + f64::from(beta)) / 4.0).exp();
            zw_pow * s0_pow * rho * q.powi((j * i64::from(beta)) as i32)
        };
        let per_step = -s0.sqrt() / (q - q.inv());
        // closed circuits: spin pairs whose index offsets return to start
        let circuits: [&[(i8, i8)]; 3] = [
            &[(1, 1), (-1, -1)],
            &[(-1, 1), (1, -1)],
            &[(-1, 1), (-1, -1), (1, -1), (1, 1)],
        ];
        for steps in circuits {
            let mut j = 2_i64;
            let mut closed = Scalar::ONE;
            let mut compact = Scalar::ONE;
            for &(alpha, beta) in steps {
                let (poly, shift) = wop.entry(alpha, beta);
                closed *= poly.eval(q.powi(j as i32));
                compact *= nice(alpha, beta, j) * per_step;
                j += shift;
            }
            assert_eq!(j, 2);
            assert!(
                (closed - compact).norm() < 1e-12 * (1.0 + compact.norm()),
                "{closed} vs {compact}"
            );
        }
    }

    #[test]
    fn w_recursions_hold_and_are_sensitive() {
        let (p, w, q) = generic();
        let wop = w_closed_form(&p, w, q, Scheme::Unit).unwrap();
        let rep = w_recursion_residual(&wop, -5..=5).unwrap();
        assert!(rep.pass, "residual {}", rep.residual);

        let p0 = BorelParams::new(p.z, p.s0, Scalar::ZERO, Scalar::ZERO);
        let wop0 = w_closed_form(&p0, w, q, Scheme::Unit).unwrap();
        assert!(w_recursion_residual(&wop0, -5..=5).unwrap().pass);

        let mut bad = wop.clone();
        bad.beta0 = bad.beta0.add(&LaurentPoly::monomial(1, re(1e-3)));
        let rep = w_recursion_residual(&bad, -5..=5).unwrap();
        assert!(rep.residual >= 1e-4, "perturbation residual {}", rep.residual);
    }

    #[test]
    fn phi_values_per_scheme() {
        let (p, w, q) = generic();
        let unit = phi_coeffs(&p, w, q, Scheme::Unit).unwrap();
        let want1 = (w - p.z) / (w - q * q * p.z);
        assert!((unit.phi1 - want1).norm() < 1e-14);
        assert!((unit.phi2 - q).norm() < 1e-14);
        let bax = phi_coeffs(&p, w, q, Scheme::Baxter { v: 0.4 }).unwrap();
        assert!((bax.phi1 - q * want1).norm() < 1e-14);
        assert!((bax.phi2 - Scalar::ONE).norm() < 1e-14);
        let at_w = phi_coeffs(&BorelParams::new(w, p.s0, p.s1, p.s2), w, q, Scheme::Unit).unwrap();
        assert!(at_w.phi1.norm() < 1e-14);
        let pole = BorelParams::new(w / (q * q), p.s0, p.s1, p.s2);
        assert!(matches!(
            phi_coeffs(&pole, w, q, Scheme::Unit),
            Err(QopError::RMatrixPole)
        ));
    }

    #[test]
    fn sr_relations_and_phi_extraction() {
        let (p, w, q) = generic();
        let out = check_sr_relations(&p, w, q, -4..=4).unwrap();
        assert!(out.report.pass, "residual {}", out.report.residual);
        let phis = phi_coeffs(&p, w, q, Scheme::Unit).unwrap();
        assert!((out.phi1 - phis.phi1).norm() < 1e-10);
        assert!((out.phi2 - phis.phi2).norm() < 1e-10);
    }

    #[test]
    fn intertwiner_reproduces_rbar() {
        let q = Scalar::new(0.83, 0.41);
        let zb = Scalar::new(0.9, 0.3);
        let zeta = Scalar::new(1.4, -0.5);
        let spec_a = EvalModuleSpec { n: 1, z: zeta * zb };
        let spec_b = EvalModuleSpec { n: 1, z: zb };
        let x = solve_intertwiner(&spec_a, &spec_b, q).unwrap();
        let r = rbar(zeta, q).unwrap();
        assert!(mat_max_abs(&(x.matrix.clone() - r.matrix)) < 1e-10);
        assert!(intertwiner_residual(&x.matrix, &spec_a, &spec_b, q).unwrap() < 1e-10);
    }

    #[test]
    fn intertwiner_spin1_spin_half() {
        let q = Scalar::new(0.83, 0.41);
        let spec_a = EvalModuleSpec {
            n: 2,
            z: Scalar::new(1.1, 0.6),
        };
        let spec_b = EvalModuleSpec {
            n: 1,
            z: Scalar::new(0.7, -0.4),
        };
        let x = solve_intertwiner(&spec_a, &spec_b, q).unwrap();
        assert_eq!(x.matrix.nrows(), 6);
        assert!(intertwiner_residual(&x.matrix, &spec_a, &spec_b, q).unwrap() < 1e-10);
        assert_eq!(x.matrix[(0, 0)], Scalar::ONE);
    }

    #[test]
    fn intertwiner_degeneration_flagged() {
        let q = Scalar::new(0.83, 0.41);
        let zb = Scalar::new(0.9, 0.3);
        // reducibility locus of the pair: ratio q^{+-(n+1)} with n = 1. At
        // the negative orientation the unique solution factors through the
        // one-dimensional module, so its normalizing corner vanishes and the
        // solve is rejected.
        let spec_a = EvalModuleSpec {
            n: 1,
            z: zb / (q * q),
        };
        let spec_b = EvalModuleSpec { n: 1, z: zb };
        let res = solve_intertwiner(&spec_a, &spec_b, q);
        assert!(res.is_err(), "expected degeneration flag, got {res:?}");
        // at the positive orientation the solution space stays
        // one-dimensional and the solve returns the (singular) limit of rbar
        let spec_c = EvalModuleSpec {
            n: 1,
            z: zb * q * q,
        };
        let x = solve_intertwiner(&spec_c, &spec_b, q).unwrap();
        let r = rbar(q * q, q).unwrap();
        assert!(mat_max_abs(&(x.matrix - r.matrix)) < 1e-10);
    }

    #[test]
    fn coproduct_matrices_satisfy_borel_relations() {
        // Delta is an algebra map: check t1 e1 t1^{-1} = q^2 e1 and
        // t1 e0 t1^{-1} = q^{-2} e0 in both coproducts
        let q = Scalar::new(1.2, 0.5);
        let spec_a = EvalModuleSpec {
            n: 2,
            z: Scalar::new(0.8, 0.1),
        };
        let spec_b = EvalModuleSpec {
            n: 1,
            z: Scalar::new(1.3, -0.9),
        };
        for primed in [false, true] {
            let t1 = coproduct_action(&spec_a, &spec_b, Gen::T1, q, primed).unwrap();
            let t1i = coproduct_action(&spec_a, &spec_b, Gen::T1Inv, q, primed).unwrap();
            let e1 = coproduct_action(&spec_a, &spec_b, Gen::E1, q, primed).unwrap();
            let e0 = coproduct_action(&spec_a, &spec_b, Gen::E0, q, primed).unwrap();
            let lhs1 = &t1 * &e1 * &t1i;
            assert!(mat_max_abs(&(lhs1 - &e1 * (q * q))) < 1e-12);
            let lhs0 = &t1 * &e0 * &t1i;
            assert!(mat_max_abs(&(lhs0 - &e0 * (q * q).inv())) < 1e-12);
        }
        let _ = qnum(2, q).unwrap();
    }
}
