//! Suite runner: JSON configuration, deterministic seeded sampling with
//! guarded redraws, named check suites with integrated negative controls,
//! and deterministic operator dumps.
//!
//! Every expected-fail check is first class: the suite is unsatisfied if a
//! must-fail relation accidentally passes, since that indicates a wiring
//! bug rather than good luck.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::time::Instant;

use crate::intertwine::{
    check_sr_relations, phi_coeffs, w_closed_form, w_recursion_residual, yang_baxter_residual,
    Scheme,
};
use crate::laurent::Scalar;
use crate::qtransfer::{
    baxter_q, check_tq_explicit, check_tq_generic, commutator_norms, commutator_norms_sectors,
    cross_oracle_check, fusion_fit, q_explicit, q_generic, sector_charges, transfer_matrix,
    trace_additivity_check, wedge_identity_check, BaxterParams, BlockEntries, ChainSpec,
    SectorOperator,
};
use crate::repmod::{
    a_coeff, check_prop22, d_coeff, qnum, qoscillator_constant_check, serre_recursion_check,
    BorelParams, Gen, Prop22Part,
};
use crate::{QopError, Result};

pub const SUITE_NAMES: [&str; 12] = [
    "tq-explicit",
    "tq-generic",
    "commute",
    "wedge",
    "fusion",
    "prop22",
    "qosc",
    "yang-baxter",
    "w-recursions",
    "sr-relations",
    "trace-additivity",
    "cross-oracle",
];

const MAX_REDRAWS: usize = 100;

/// One explicit parameter point. Complex values are [re, im]. Suites read
/// the fields they need and reject sets that omit them; the `_alt` fields
/// feed checks that compare two parameter points.
#[derive(Serialize, Deserialize, Clone, Debug, Default)]
#[serde(deny_unknown_fields)]
pub struct ParamSet {
    pub eta: Option<f64>,
    pub v: Option<f64>,
    pub v_alt: Option<f64>,
    pub q: Option<[f64; 2]>,
    pub z: Option<[f64; 2]>,
    pub z_alt: Option<[f64; 2]>,
    pub w: Option<[f64; 2]>,
    pub s0: Option<[f64; 2]>,
    pub s0_alt: Option<[f64; 2]>,
    pub s1: Option<[f64; 2]>,
    pub s2: Option<[f64; 2]>,
}

#[derive(Serialize, Deserialize, Clone, Debug)]
#[serde(tag = "mode", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ParamSource {
    Seeded { draws: usize },
    Explicit { sets: Vec<ParamSet> },
}

impl Default for ParamSource {
    fn default() -> Self {
        ParamSource::Seeded { draws: 5 }
    }
}

#[derive(Serialize, Deserialize, Clone, Debug)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// optional cross-check against the CLI subcommand
    #[serde(default)]
    pub suite: Option<String>,
    pub n_sites: usize,
    /// charge sectors for the sector-addressed suites; suite default if absent
    #[serde(default)]
    pub sectors: Option<Vec<i64>>,
    #[serde(default)]
    pub params: ParamSource,
    #[serde(default)]
    pub allow_root_of_unity: bool,
    /// overrides by exact check name, or "default" for the whole suite
    #[serde(default)]
    pub tolerances: BTreeMap<String, f64>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub out: Option<String>,
}

pub fn validate_config(config: &RunConfig) -> Result<()> {
    if config.n_sites == 0 || config.n_sites > 12 {
        return Err(QopError::Config(format!(
            "n_sites must lie in 1..=12, got {}",
            config.n_sites
        )));
    }
    for (name, tol) in &config.tolerances {
        if !tol.is_finite() || *tol <= 0.0 {
            return Err(QopError::Config(format!(
                "tolerance `{name}` must be a positive finite number"
            )));
        }
    }
    if let ParamSource::Explicit { sets } = &config.params {
        if sets.is_empty() {
            return Err(QopError::Config(
                "explicit parameter mode needs at least one set".into(),
            ));
        }
    }
    Ok(())
}

pub fn load_config(path: &std::path::Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)?;
    let config: RunConfig = serde_json::from_str(&text)?;
    validate_config(&config)?;
    Ok(config)
}

#[derive(Serialize, Clone, Debug)]
pub struct CheckReport {
    pub check: String,
    pub residual: f64,
    pub tol: f64,
    pub pass: bool,
    pub expected_fail: bool,
    /// pass for ordinary checks, fail for expected-fail checks
    pub satisfied: bool,
    #[serde(skip)]
    pub elapsed_ms: f64,
}

#[derive(Serialize, Clone, Debug)]
pub struct SuiteReport {
    pub suite: String,
    pub n_sites: usize,
    pub seed: u64,
    pub overall: bool,
    pub checks: Vec<CheckReport>,
    pub redraw_log: Vec<String>,
    pub config: RunConfig,
    #[serde(skip)]
    pub total_ms: f64,
}

pub fn render_report(report: &SuiteReport) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("report serializes");
    s.push('\n');
    s
}

/// Deterministic draws on the annulus 0.5 <= |x| <= 2 with uniform phase.
pub struct Sampler {
    rng: ChaCha12Rng,
    pub log: Vec<String>,
}

fn unity_guard_ok(q: Scalar, max_pow: usize) -> bool {
    let mut p = Scalar::ONE;
    let mut pi = Scalar::ONE;
    let qi = q.inv();
    for _ in 1..=max_pow {
        p *= q;
        pi *= qi;
        if (p - Scalar::ONE).norm() < 1e-3 || (pi - Scalar::ONE).norm() < 1e-3 {
            return false;
        }
    }
    true
}

impl Sampler {
    pub fn new(seed: u64) -> Self {
        Sampler {
            rng: ChaCha12Rng::seed_from_u64(seed),
            log: Vec::new(),
        }
    }

    pub fn scalar(&mut self) -> Scalar {
        let mag = self.rng.random_range(0.5..2.0);
        let phase = self.rng.random_range(0.0..TAU);
        Scalar::from_polar(mag, phase)
    }

    pub fn index(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }

    /// Deformation parameter bounded away from every root of unity up to
    /// the given power, in both the base and its inverse.
    pub fn q_guarded(&mut self, max_pow: usize) -> Result<Scalar> {
        for attempt in 0..=MAX_REDRAWS {
            let q = self.scalar();
            if unity_guard_ok(q, max_pow) {
                if attempt > 0 {
                    self.log.push(format!("q accepted after {attempt} redraws"));
                }
                return Ok(q);
            }
        }
        Err(QopError::SamplingExhausted(MAX_REDRAWS))
    }

    /// Twist angle with exp(2 i eta) off the guarded roots of unity.
    pub fn eta_guarded(&mut self, max_pow: usize, allow_unity: bool) -> Result<f64> {
        for attempt in 0..=MAX_REDRAWS {
            let eta = self.rng.random_range(0.1..1.47);
            let q = (Scalar::I * (2.0 * eta)).exp();
            if allow_unity || unity_guard_ok(q, max_pow) {
                if attempt > 0 {
                    self.log
                        .push(format!("eta accepted after {attempt} redraws"));
                }
                return Ok(eta);
            }
        }
        Err(QopError::SamplingExhausted(MAX_REDRAWS))
    }

    /// Spectral angle keeping the transfer matrix at z = exp(-2i(v+eta))
    /// away from its pole.
    pub fn v_guarded(&mut self, eta: f64) -> Result<f64> {
        for attempt in 0..=MAX_REDRAWS {
            let v = self.rng.random_range(-1.5..1.5);
            let pole = (Scalar::I * (2.0 * (eta - v))).exp();
            if (pole - Scalar::ONE).norm() >= 1e-3 {
                if attempt > 0 {
                    self.log.push(format!("v accepted after {attempt} redraws"));
                }
                return Ok(v);
            }
        }
        Err(QopError::SamplingExhausted(MAX_REDRAWS))
    }
}

fn is_redraw_class(e: &QopError) -> bool {
    matches!(
        e,
        QopError::RMatrixPole
            | QopError::Degenerate(_)
            | QopError::IntertwinerNotUnique(_)
            | QopError::RootOfUnityGuard(_)
            | QopError::ZeroShiftBase
    )
}

fn with_redraws<T>(
    sampler: &mut Sampler,
    explicit: bool,
    label: &str,
    mut f: impl FnMut(&mut Sampler) -> Result<T>,
) -> Result<T> {
    if explicit {
        return f(sampler);
    }
    for attempt in 0..MAX_REDRAWS {
        match f(sampler) {
            Ok(v) => return Ok(v),
            Err(e) if is_redraw_class(&e) => {
                sampler
                    .log
                    .push(format!("{label}: redraw {}: {e}", attempt + 1));
            }
            Err(e) => return Err(e),
        }
    }
    Err(QopError::SamplingExhausted(MAX_REDRAWS))
}

fn cx(v: [f64; 2]) -> Scalar {
    Scalar::new(v[0], v[1])
}

fn want_cx(
    set: Option<&ParamSet>,
    pick: fn(&ParamSet) -> Option<[f64; 2]>,
    name: &str,
    sampler: &mut Sampler,
) -> Result<Scalar> {
    match set {
        Some(ps) => pick(ps).map(cx).ok_or_else(|| {
            QopError::Config(format!("explicit parameter set is missing `{name}`"))
        }),
        None => Ok(sampler.scalar()),
    }
}

struct Ctx<'a> {
    config: &'a RunConfig,
    sampler: Sampler,
    checks: Vec<CheckReport>,
}

impl<'a> Ctx<'a> {
    fn draw_count(&self, seeded_default: usize) -> usize {
        match &self.config.params {
            ParamSource::Seeded { draws } => {
                if *draws == 0 {
                    seeded_default
                } else {
                    *draws
                }
            }
            ParamSource::Explicit { sets } => sets.len(),
        }
    }

    fn set(&self, i: usize) -> Option<ParamSet> {
        match &self.config.params {
            ParamSource::Seeded { .. } => None,
            ParamSource::Explicit { sets } => Some(sets[i].clone()),
        }
    }

    fn explicit(&self) -> bool {
        matches!(self.config.params, ParamSource::Explicit { .. })
    }

    fn tol(&self, name: &str, default: f64) -> f64 {
        self.config
            .tolerances
            .get(name)
            .or_else(|| self.config.tolerances.get("default"))
            .copied()
            .unwrap_or(default)
    }

    fn push(
        &mut self,
        name: impl Into<String>,
        residual: f64,
        default_tol: f64,
        expected_fail: bool,
        started: Instant,
    ) {
        let check = name.into();
        let tol = self.tol(&check, default_tol);
        let pass = residual < tol;
        self.checks.push(CheckReport {
            check,
            residual,
            tol,
            pass,
            expected_fail,
            satisfied: pass != expected_fail,
            elapsed_ms: started.elapsed().as_secs_f64() * 1e3,
        });
    }
}

fn baxter_params(
    set: Option<&ParamSet>,
    sampler: &mut Sampler,
    n_sites: usize,
    allow_unity: bool,
) -> Result<BaxterParams> {
    let eta = match set {
        Some(ps) => ps
            .eta
            .ok_or_else(|| QopError::Config("explicit parameter set is missing `eta`".into()))?,
        None => sampler.eta_guarded(2 * n_sites, allow_unity)?,
    };
    let v = match set {
        Some(ps) => ps
            .v
            .ok_or_else(|| QopError::Config("explicit parameter set is missing `v`".into()))?,
        None => sampler.v_guarded(eta)?,
    };
    let s0 = want_cx(set, |p| p.s0, "s0", sampler)?;
    let p = BaxterParams::new(eta, v, s0);
    Ok(if allow_unity { p.with_unity_allowed() } else { p })
}

fn borel_draw(
    set: Option<&ParamSet>,
    sampler: &mut Sampler,
    n_sites: usize,
) -> Result<(Scalar, Scalar, BorelParams)> {
    let q = match set {
        Some(ps) => ps.q.map(cx).ok_or_else(|| {
            QopError::Config("explicit parameter set is missing `q`".into())
        })?,
        None => sampler.q_guarded(2 * n_sites)?,
    };
    let w = want_cx(set, |p| p.w, "w", sampler)?;
    let z = want_cx(set, |p| p.z, "z", sampler)?;
    let s0 = want_cx(set, |p| p.s0, "s0", sampler)?;
    let s1 = want_cx(set, |p| p.s1, "s1", sampler)?;
    let s2 = want_cx(set, |p| p.s2, "s2", sampler)?;
    Ok((q, w, BorelParams::new(z, s0, s1, s2)))
}

fn transfer_pole_guard(q: Scalar, z: Scalar, w: Scalar) -> Result<()> {
    if (w - q * q * z).norm() < 1e-3 * (1.0 + (q * q * z).norm()) {
        return Err(QopError::RMatrixPole);
    }
    Ok(())
}

fn suite_tq_explicit(ctx: &mut Ctx) -> Result<()> {
    let n = ctx.config.n_sites;
    let n_i = n as i64;
    // even chains default to the neutral sector; odd chains to the lowest
    // sector, where the relation also holds at generic parameters
    let default_sector = if n % 2 == 0 { 0 } else { -n_i };
    let sectors = ctx
        .config
        .sectors
        .clone()
        .unwrap_or_else(|| vec![default_sector]);
    for &sec in &sectors {
        if (sec - n_i) % 2 != 0 || sec.abs() > n_i {
            return Err(QopError::BadSector(sec, n));
        }
    }
    let allow = ctx.config.allow_root_of_unity;
    let explicit = ctx.explicit();
    for d in 0..ctx.draw_count(5) {
        let set = ctx.set(d);
        let params = with_redraws(&mut ctx.sampler, explicit, "tq-explicit", |s| {
            let p = baxter_params(set.as_ref(), s, n, allow)?;
            transfer_pole_guard(p.q(), p.z(), Scalar::ONE)?;
            Ok(p)
        })?;
        let q = params.q();
        for &sec in &sectors {
            let t0 = Instant::now();
            let rep = check_tq_explicit(n, &params, sec)?;
            let near_unity = (q.powi(sec.unsigned_abs() as i32) - Scalar::ONE).norm() < 1e-6;
            // the lowest sector satisfies the relation identically; any
            // other charged sector holds only where q^n = 1
            let required = sec == 0 || sec == -n_i || near_unity;
            let tol = if required { 1e-9 } else { 1e-3 };
            ctx.push(
                format!("tq-explicit[draw={d},n={sec}]"),
                rep.residual,
                tol,
                !required,
                t0,
            );
        }
    }
    Ok(())
}

fn suite_tq_generic(ctx: &mut Ctx) -> Result<()> {
    let n = ctx.config.n_sites;
    if n > 4 {
        return Err(QopError::ChainTooLong(n, 4));
    }
    let explicit = ctx.explicit();
    for d in 0..ctx.draw_count(5) {
        let set = ctx.set(d);
        let t0 = Instant::now();
        let out = with_redraws(&mut ctx.sampler, explicit, "tq-generic", |s| {
            let (q, w0, params) = borel_draw(set.as_ref(), s, n)?;
            // independent inhomogeneities exercise the general relation
            let ws: Vec<Scalar> = match set.as_ref().and_then(|p| p.w) {
                Some(_) => vec![w0; n],
                None => std::iter::once(w0)
                    .chain((1..n).map(|_| s.scalar()))
                    .collect(),
            };
            for w in &ws {
                transfer_pole_guard(q, params.z, *w)?;
            }
            let chain = ChainSpec { q, w: ws };
            check_tq_generic(&chain, params.z, &params)
        })?;
        ctx.push(
            format!("tq-generic-delta0[draw={d}]"),
            out.delta0.residual,
            1e-9,
            false,
            t0,
        );
        // the all-coefficients comparison must fail: the relation holds
        // only after every delta symbol collapses to its weight at zero
        ctx.push(
            format!("tq-generic-strict[draw={d}]"),
            out.strict.residual,
            1e-3,
            true,
            t0,
        );
    }
    Ok(())
}

fn suite_commute(ctx: &mut Ctx) -> Result<()> {
    let n = ctx.config.n_sites;
    let n_i = n as i64;
    let allow = ctx.config.allow_root_of_unity;
    let explicit = ctx.explicit();
    for d in 0..ctx.draw_count(5) {
        let set = ctx.set(d);
        let (pa, pb, zt) = with_redraws(&mut ctx.sampler, explicit, "commute", |s| {
            let pa = baxter_params(set.as_ref(), s, n, allow)?;
            let v2 = match set.as_ref() {
                Some(ps) => ps.v_alt.ok_or_else(|| {
                    QopError::Config("explicit parameter set is missing `v_alt`".into())
                })?,
                None => s.v_guarded(pa.eta)?,
            };
            let s0b = want_cx(set.as_ref(), |p| p.s0_alt, "s0_alt", s)?;
            let pb = if allow {
                BaxterParams::new(pa.eta, v2, s0b).with_unity_allowed()
            } else {
                BaxterParams::new(pa.eta, v2, s0b)
            };
            let q = pa.q();
            let zt = match set.as_ref().and_then(|p| p.z) {
                Some(z) => cx(z),
                None => s.scalar(),
            };
            transfer_pole_guard(q, zt, Scalar::ONE)?;
            Ok((pa, pb, zt))
        })?;
        let qa = q_explicit(n, &pa)?;
        let qb = q_explicit(n, &pb)?;
        let t0 = Instant::now();
        let rep = commutator_norms(&qa, &qb)?;
        ctx.push(
            format!("commute-q-pair[draw={d}]"),
            rep.residual,
            1e-10,
            false,
            t0,
        );
        let chain = ChainSpec::homogeneous(n, Scalar::ONE, pa.q());
        let t = transfer_matrix(&chain, zt)?;
        let t0 = Instant::now();
        // the neutral sector commutes at any parameters; odd chains fall
        // back to the one-dimensional lowest sector
        let good = if n % 2 == 0 { 0 } else { -n_i };
        let rep = commutator_norms_sectors(&t, &qa, Some(&[good]))?;
        ctx.push(
            format!("commute-qt[draw={d},n={good}]"),
            rep.residual,
            1e-9,
            false,
            t0,
        );
        // a charged sector of dimension > 1 fails at generic q
        let charged = if n % 2 == 0 { 2 } else { 1 };
        if n >= 3 && !allow {
            let t0 = Instant::now();
            let rep = commutator_norms_sectors(&t, &qa, Some(&[charged]))?;
            ctx.push(
                format!("commute-qt-charged[draw={d},n={charged}]"),
                rep.residual,
                1e-3,
                true,
                t0,
            );
        }
    }
    // generic-s operators at different parameters do not commute; the
    // control always runs on two sites, where the neutral block is the
    // smallest one that can detect it
    let set0 = ctx.set(0);
    let (qg1, qg2) = with_redraws(&mut ctx.sampler, explicit, "commute generic-s", |s| {
        let nn = 2;
        let (q, w, p1) = borel_draw(set0.as_ref(), s, nn)?;
        let z2 = match set0.as_ref().and_then(|p| p.z_alt) {
            Some(z) => cx(z),
            None => s.scalar(),
        };
        let p2 = BorelParams::new(z2, p1.s0 * Scalar::new(0.73, 0.31), p1.s2, p1.s1);
        let chain = ChainSpec::homogeneous(nn, w, q);
        Ok((q_generic(&chain, p1.z, &p1)?, q_generic(&chain, p2.z, &p2)?))
    })?;
    let t0 = Instant::now();
    let rep = commutator_norms(&qg1, &qg2)?;
    ctx.push("commute-generic-s-pair", rep.residual, 1e-3, true, t0);
    Ok(())
}

fn suite_wedge(ctx: &mut Ctx) -> Result<()> {
    let n = ctx.config.n_sites;
    let t0 = Instant::now();
    let out = wedge_identity_check(n)?;
    ctx.push("wedge-identity", out.max_wedge as f64, 0.5, false, t0);
    let t0 = Instant::now();
    // nested transposition products do not reach every same-sector
    // configuration once N exceeds 3
    let reach_fails = n >= 4;
    ctx.push(
        "wedge-reachability",
        out.unreachable_pairs as f64,
        0.5,
        reach_fails,
        t0,
    );
    let expected = [0usize, 0, 0, 2, 20, 132];
    if n <= 6 {
        let t0 = Instant::now();
        let census_residual = (out.unreachable_pairs as f64 - expected[n - 1] as f64).abs();
        ctx.push("wedge-reachability-census", census_residual, 0.5, false, t0);
    }
    Ok(())
}

fn suite_fusion(ctx: &mut Ctx) -> Result<()> {
    let n = ctx.config.n_sites;
    if n > 4 {
        return Err(QopError::ChainTooLong(n, 4));
    }
    let explicit = ctx.explicit();
    for d in 0..ctx.draw_count(5) {
        let set = ctx.set(d);
        let t0 = Instant::now();
        let out = with_redraws(&mut ctx.sampler, explicit, "fusion", |s| {
            let q = match set.as_ref().and_then(|p| p.q) {
                Some(q) => cx(q),
                None => s.q_guarded(2 * n + 4)?,
            };
            let w = want_cx(set.as_ref(), |p| p.w, "w", s)?;
            let z = want_cx(set.as_ref(), |p| p.z, "z", s)?;
            let chain = ChainSpec::homogeneous(n, w, q);
            fusion_fit(&chain, z)
        })?;
        ctx.push(
            format!("fusion-fit[draw={d}]"),
            out.report.residual,
            1e-8,
            false,
            t0,
        );
        ctx.push(
            format!("fusion-order-agreement[draw={d}]"),
            out.order_agreement,
            1e-8,
            false,
            t0,
        );
    }
    Ok(())
}

fn suite_prop22(ctx: &mut Ctx) -> Result<()> {
    let n = ctx.config.n_sites;
    let explicit = ctx.explicit();
    for d in 0..ctx.draw_count(20) {
        let set = ctx.set(d);
        let (q, params) = with_redraws(&mut ctx.sampler, explicit, "prop22", |s| {
            let (q, _w, params) = borel_draw(set.as_ref(), s, n)?;
            Ok((q, params))
        })?;
        let t0 = Instant::now();
        let rep = check_prop22(&params, q, Prop22Part::A, -4..=4)?;
        ctx.push(
            format!("prop22-part-a[draw={d}]"),
            rep.residual,
            1e-10,
            false,
            t0,
        );
        let t0 = Instant::now();
        let rep = with_redraws(&mut ctx.sampler, explicit, "prop22 part b", |_| {
            check_prop22(&params, q, Prop22Part::B, -4..=4)
        })?;
        ctx.push(
            format!("prop22-part-b[draw={d}]"),
            rep.residual,
            1e-10,
            false,
            t0,
        );
        // the d-coefficients solve the two-step recursion behind the
        // quartic Serre relation at every offset
        let t0 = Instant::now();
        let three = qnum(3, q)?;
        let mut serre = 0.0_f64;
        for j in -5..=5 {
            let g: Vec<Scalar> = (0..4)
                .map(|k| d_coeff(j + k, params.z, params.s1, params.s2, q))
                .collect::<Result<_>>()?;
            let scale = g.iter().map(|c| c.norm()).fold(0.0, f64::max) * (1.0 + three.norm());
            serre = serre.max(
                serre_recursion_check(&[g[0], g[1], g[2], g[3]], q)?.norm() / (1.0 + scale),
            );
        }
        ctx.push(format!("serre-family[draw={d}]"), serre, 1e-12, false, t0);
        let t0 = Instant::now();
        let mut arec = 0.0_f64;
        for j in -5..=5 {
            let lhs = a_coeff(j - 1, &params, q);
            let step = params.s0 * q.powi(2 * (1 - j) as i32);
            let rhs = a_coeff(j, &params, q) + step;
            let scale = a_coeff(j, &params, q).norm().max(step.norm());
            arec = arec.max((lhs - rhs).norm() / (1.0 + scale));
        }
        ctx.push(format!("a-recursion[draw={d}]"), arec, 1e-12, false, t0);
    }
    Ok(())
}

fn suite_qosc(ctx: &mut Ctx) -> Result<()> {
    let n = ctx.config.n_sites;
    let explicit = ctx.explicit();
    for d in 0..ctx.draw_count(5) {
        let set = ctx.set(d);
        let (q, params) = with_redraws(&mut ctx.sampler, explicit, "qosc", |s| {
            let (q, _w, params) = borel_draw(set.as_ref(), s, n)?;
            Ok((q, params))
        })?;
        let lower = BorelParams::new(params.z, params.s0, params.s1, Scalar::ZERO);
        let raise = BorelParams::new(params.z, params.s0, Scalar::ZERO, params.s2);
        let t0 = Instant::now();
        let rep = qoscillator_constant_check(&lower, q, -3..=3)?;
        ctx.push(
            format!("qosc-s2-zero[draw={d}]"),
            rep.residual,
            1e-12,
            false,
            t0,
        );
        let t0 = Instant::now();
        let rep = qoscillator_constant_check(&raise, q, -3..=3)?;
        ctx.push(
            format!("qosc-s1-zero[draw={d}]"),
            rep.residual,
            1e-12,
            false,
            t0,
        );
        // with both parameters alive the oscillator relation has no
        // constant branch and the check must refuse to run
        let t0 = Instant::now();
        let guard = match qoscillator_constant_check(&params, q, -3..=3) {
            Err(QopError::OscillatorBranch { .. }) => 0.0,
            _ => 1.0,
        };
        ctx.push(format!("qosc-guard[draw={d}]"), guard, 0.5, false, t0);
    }
    Ok(())
}

fn suite_yang_baxter(ctx: &mut Ctx) -> Result<()> {
    let n = ctx.config.n_sites;
    let explicit = ctx.explicit();
    for d in 0..ctx.draw_count(50) {
        let set = ctx.set(d);
        let t0 = Instant::now();
        let rep = with_redraws(&mut ctx.sampler, explicit, "yang-baxter", |s| {
            let q = match set.as_ref().and_then(|p| p.q) {
                Some(q) => cx(q),
                None => s.q_guarded(2 * n)?,
            };
            let z1 = want_cx(set.as_ref(), |p| p.z, "z", s)?;
            let z2 = want_cx(set.as_ref(), |p| p.z_alt, "z_alt", s)?;
            yang_baxter_residual(z1, z2, q)
        })?;
        ctx.push(
            format!("yang-baxter[draw={d}]"),
            rep.residual,
            1e-12,
            false,
            t0,
        );
    }
    Ok(())
}

fn suite_w_recursions(ctx: &mut Ctx) -> Result<()> {
    let n = ctx.config.n_sites;
    let explicit = ctx.explicit();
    for d in 0..ctx.draw_count(20) {
        let set = ctx.set(d);
        let (q, w, params, v) = with_redraws(&mut ctx.sampler, explicit, "w-recursions", |s| {
            let (q, w, params) = borel_draw(set.as_ref(), s, n)?;
            let v = match set.as_ref() {
                Some(ps) => ps.v.unwrap_or(0.0),
                None => s.rng.random_range(-1.5..1.5),
            };
            Ok((q, w, params, v))
        })?;
        let t0 = Instant::now();
        let wop = w_closed_form(&params, w, q, Scheme::Unit)?;
        let rep = w_recursion_residual(&wop, -5..=5)?;
        ctx.push(
            format!("w-recursions-generic-s[draw={d}]"),
            rep.residual,
            1e-10,
            false,
            t0,
        );
        let special = BorelParams::new(params.z, params.s0, Scalar::ZERO, Scalar::ZERO);
        let t0 = Instant::now();
        let wop = w_closed_form(&special, w, q, Scheme::Baxter { v })?;
        let rep = w_recursion_residual(&wop, -5..=5)?;
        ctx.push(
            format!("w-recursions-two-parameter[draw={d}]"),
            rep.residual,
            1e-10,
            false,
            t0,
        );
    }
    Ok(())
}

fn suite_sr_relations(ctx: &mut Ctx) -> Result<()> {
    let n = ctx.config.n_sites;
    let explicit = ctx.explicit();
    for d in 0..ctx.draw_count(10) {
        let set = ctx.set(d);
        let t0 = Instant::now();
        let (out, phis) = with_redraws(&mut ctx.sampler, explicit, "sr-relations", |s| {
            let (q, w, params) = borel_draw(set.as_ref(), s, n)?;
            let out = check_sr_relations(&params, w, q, -4..=4)?;
            let phis = phi_coeffs(&params, w, q, Scheme::Unit)?;
            Ok((out, phis))
        })?;
        ctx.push(
            format!("sr-relations[draw={d}]"),
            out.report.residual,
            1e-10,
            false,
            t0,
        );
        let t0 = Instant::now();
        let scale = 1.0 + phis.phi1.norm().max(phis.phi2.norm());
        let mismatch = (out.phi1 - phis.phi1)
            .norm()
            .max((out.phi2 - phis.phi2).norm())
            / scale;
        ctx.push(format!("phi-extraction[draw={d}]"), mismatch, 1e-10, false, t0);
    }
    Ok(())
}

fn suite_trace_additivity(ctx: &mut Ctx) -> Result<()> {
    let n = ctx.config.n_sites;
    let explicit = ctx.explicit();
    let letters = [Gen::E0, Gen::E1, Gen::T1, Gen::T1Inv];
    for d in 0..ctx.draw_count(10) {
        let set = ctx.set(d);
        let (q, z) = with_redraws(&mut ctx.sampler, explicit, "trace-additivity", |s| {
            let q = match set.as_ref().and_then(|p| p.q) {
                Some(q) => cx(q),
                None => s.q_guarded(2 * n.max(3))?,
            };
            let z = want_cx(set.as_ref(), |p| p.z, "z", s)?;
            Ok((q, z))
        })?;
        let mut words = Vec::new();
        for _ in 0..10 {
            let len = 1 + ctx.sampler.index(4);
            let word: Vec<Gen> = (0..len)
                .map(|_| letters[ctx.sampler.index(letters.len())])
                .collect();
            words.push(word);
        }
        let t0 = Instant::now();
        let rep = trace_additivity_check(q, z, &words)?;
        ctx.push(
            format!("trace-additivity[draw={d}]"),
            rep.residual,
            1e-10,
            false,
            t0,
        );
    }
    Ok(())
}

fn suite_cross_oracle(ctx: &mut Ctx) -> Result<()> {
    let n = ctx.config.n_sites;
    if n > 5 {
        return Err(QopError::ChainTooLong(n, 5));
    }
    let allow = ctx.config.allow_root_of_unity;
    let explicit = ctx.explicit();
    for d in 0..ctx.draw_count(5) {
        let set = ctx.set(d);
        let t0 = Instant::now();
        let out = with_redraws(&mut ctx.sampler, explicit, "cross-oracle", |s| {
            let p = baxter_params(set.as_ref(), s, n, allow)?;
            cross_oracle_check(n, &p)
        })?;
        ctx.push(
            format!("cross-oracle[draw={d}]"),
            out.report.residual,
            1e-10,
            false,
            t0,
        );
        ctx.push(
            format!("cross-oracle-support[draw={d}]"),
            out.off_support,
            1e-12,
            false,
            t0,
        );
    }
    Ok(())
}

pub fn run_suite(name: &str, config: &RunConfig, seed: u64) -> Result<SuiteReport> {
    validate_config(config)?;
    if let Some(declared) = &config.suite {
        if declared != name {
            return Err(QopError::Config(format!(
                "config declares suite `{declared}` but `{name}` was requested"
            )));
        }
    }
    let started = Instant::now();
    let mut ctx = Ctx {
        config,
        sampler: Sampler::new(seed),
        checks: Vec::new(),
    };
    match name {
        "tq-explicit" => suite_tq_explicit(&mut ctx)?,
        "tq-generic" => suite_tq_generic(&mut ctx)?,
        "commute" => suite_commute(&mut ctx)?,
        "wedge" => suite_wedge(&mut ctx)?,
        "fusion" => suite_fusion(&mut ctx)?,
        "prop22" => suite_prop22(&mut ctx)?,
        "qosc" => suite_qosc(&mut ctx)?,
        "yang-baxter" => suite_yang_baxter(&mut ctx)?,
        "w-recursions" => suite_w_recursions(&mut ctx)?,
        "sr-relations" => suite_sr_relations(&mut ctx)?,
        "trace-additivity" => suite_trace_additivity(&mut ctx)?,
        "cross-oracle" => suite_cross_oracle(&mut ctx)?,
        other => {
            return Err(QopError::Config(format!(
                "unknown suite `{other}`; expected one of {}",
                SUITE_NAMES.join(", ")
            )))
        }
    }
    let overall = ctx.checks.iter().all(|c| c.satisfied);
    Ok(SuiteReport {
        suite: name.to_string(),
        n_sites: config.n_sites,
        seed,
        overall,
        checks: ctx.checks,
        redraw_log: ctx.sampler.log,
        config: config.clone(),
        total_ms: started.elapsed().as_secs_f64() * 1e3,
    })
}

fn fmt_f(x: f64) -> String {
    format!("{x:.16e}")
}

fn fmt_cx(c: Scalar) -> String {
    format!("[{},{}]", fmt_f(c.re), fmt_f(c.im))
}

/// Renders a sector operator as deterministic JSON: fixed key order,
/// sectors from the highest charge down, row-major entries, and float
/// formatting with 17 significant digits.
pub fn render_sector_operator(op: &SectorOperator) -> Result<String> {
    let mut s = String::new();
    s.push_str(&format!("{{\"N\": {},\n \"sectors\": [", op.n_sites));
    for (i, n) in sector_charges(op.n_sites).into_iter().enumerate() {
        if i > 0 {
            s.push_str(",\n  ");
        } else {
            s.push_str("\n  ");
        }
        let block = op.sector(n)?;
        let basis = block
            .basis
            .iter()
            .map(|b| format!("\"{b}\""))
            .collect::<Vec<_>>()
            .join(",");
        let kind = match &block.entries {
            BlockEntries::Scalar(_) => "scalar",
            BlockEntries::Delta(_) => "delta",
        };
        s.push_str(&format!(
            "{{\"n\": {n}, \"basis\": [{basis}], \"kind\": \"{kind}\", \"entries\": ["
        ));
        match &block.entries {
            BlockEntries::Scalar(m) => {
                let dim = block.dim();
                let mut first = true;
                for r in 0..dim {
                    for c in 0..dim {
                        if !first {
                            s.push(',');
                        }
                        first = false;
                        s.push_str(&fmt_cx(m[(r, c)]));
                    }
                }
            }
            BlockEntries::Delta(v) => {
                for (j, series) in v.iter().enumerate() {
                    if j > 0 {
                        s.push(',');
                    }
                    s.push('[');
                    let mut first = true;
                    for (k, coeff) in series.iter() {
                        if !first {
                            s.push(',');
                        }
                        first = false;
                        s.push_str(&format!("[{k},{}]", fmt_cx(coeff)));
                    }
                    s.push(']');
                }
            }
        }
        s.push_str("]}");
    }
    s.push_str("\n]}\n");
    Ok(s)
}

/// Builds and renders one operator. Kinds: `t`, `q-generic`, `q-explicit`,
/// `q-baxter`. Parameters come from the first explicit set, or are drawn
/// from the seed.
pub fn dump_operator(kind: &str, config: &RunConfig, seed: u64) -> Result<String> {
    validate_config(config)?;
    let n = config.n_sites;
    let mut sampler = Sampler::new(seed);
    let set = match &config.params {
        ParamSource::Explicit { sets } => Some(sets[0].clone()),
        ParamSource::Seeded { .. } => None,
    };
    let op = match kind.to_ascii_lowercase().as_str() {
        "t" => {
            // angle parameters take precedence so that transfer dumps can
            // sit at the same point as explicit-Q dumps
            let (q, z, w) = if set.as_ref().map(|p| p.eta.is_some()).unwrap_or(false) {
                let p = baxter_params(set.as_ref(), &mut sampler, n, config.allow_root_of_unity)?;
                (p.q(), p.z(), Scalar::ONE)
            } else {
                let q = match set.as_ref().and_then(|p| p.q) {
                    Some(q) => cx(q),
                    None => sampler.q_guarded(2 * n)?,
                };
                let w = want_cx(set.as_ref(), |p| p.w, "w", &mut sampler)?;
                let z = want_cx(set.as_ref(), |p| p.z, "z", &mut sampler)?;
                (q, z, w)
            };
            transfer_matrix(&ChainSpec::homogeneous(n, w, q), z)?
        }
        "q-generic" => {
            let (q, w, params) = borel_draw(set.as_ref(), &mut sampler, n)?;
            q_generic(&ChainSpec::homogeneous(n, w, q), params.z, &params)?
        }
        "q-explicit" => {
            let p = baxter_params(set.as_ref(), &mut sampler, n, config.allow_root_of_unity)?;
            q_explicit(n, &p)?
        }
        "q-baxter" => {
            let p = baxter_params(set.as_ref(), &mut sampler, n, config.allow_root_of_unity)?;
            baxter_q(n, &p)
        }
        other => return Err(QopError::UnknownOperatorKind(other.into())),
    };
    render_sector_operator(&op)
}

/// Process exit code classes: 1 suite unsatisfied, 2 configuration or
/// JSON, 3 construction (poles, degenerations, guards), 4 io.
pub fn error_exit_code(e: &QopError) -> i32 {
    match e {
        QopError::Io(_) => 4,
        QopError::Json(_)
        | QopError::Config(_)
        | QopError::UnknownScheme(_)
        | QopError::UnknownOperatorKind(_)
        | QopError::BadSector(_, _)
        | QopError::BadFusedWeight(_)
        | QopError::ChainTooLong(_, _)
        | QopError::NotBorelGenerator(_)
        | QopError::SchemeRequiresZeroS(_)
        | QopError::IntertwinerTooLarge(_, _) => 2,
        _ => 3,
    }
}

/// Applies the QOPLAB_THREADS cap to the global worker pool. A no-op when
/// the variable is unset, unparseable, or the pool already exists.
pub fn init_threads() {
    if let Ok(v) = std::env::var("QOPLAB_THREADS") {
        if let Ok(threads) = v.parse::<usize>() {
            if threads > 0 {
                let _ = rayon::ThreadPoolBuilder::new()
                    .num_threads(threads)
                    .build_global();
            }
        }
    }
}
