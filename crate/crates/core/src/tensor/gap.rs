//! Sampling experiments between the min and max tensor cones.
//!
//! Every sample ends in one bucket: certified in both cones (an explicit max
//! certificate at slack `eps`), refuted in the min cone (a separator or a
//! unitary evaluation with a negative eigenvalue), or unresolved. Unresolved
//! samples carry no claim either way.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::feasibility::{
    certify_fixed, solve_with, verify_certificate, AffinePsdProblem, ConeCertificate, SolverOptions, Status,
};
use crate::linalg::json::MatrixJson;
use crate::linalg::random::{complex_gaussian, derive_seed, haar_unitary, random_psd, rng_from_seed};
use crate::linalg::{hermitian_basis, hermitize, kron, min_eig, unit, CMat};
use crate::opsys::{element_min_eig, make_system, BlockElement, SystemKind};
use crate::quotient::MAX_ITER;

use super::{
    max_tensor_inner_search, verify_max_witness, witness_target_min_certificate, MaxConeWitness, MaxSearchOptions,
    TensorPair,
};

pub const MAX_N: usize = 4;
pub const MAX_P: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GapMode {
    /// `W_n ⊗ W_n`, bracketed by two-sided lifts and unitary evaluations.
    Ww,
    /// `E_n ⊗ E_n`.
    Ee,
    /// Witnesses in `U_n ⊗ U_n` re-checked in `V_n ⊗ V_n`.
    UuVv,
}

impl FromStr for GapMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ww" => Ok(Self::Ww),
            "ee" => Ok(Self::Ee),
            "uu_vv" | "uu-vv" => Ok(Self::UuVv),
            other => invalid(format!("unknown mode '{other}' (expected ww, ee or uu_vv)")),
        }
    }
}

impl fmt::Display for GapMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Ww => "ww",
            Self::Ee => "ee",
            Self::UuVv => "uu_vv",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapConfig {
    pub mode: GapMode,
    pub n: usize,
    pub p: usize,
    pub samples: usize,
    pub seed: u64,
    pub eps: f64,
    pub tol: f64,
}

impl GapConfig {
    pub fn new(mode: GapMode, n: usize, p: usize, samples: usize, seed: u64) -> Self {
        Self { mode, n, p, samples, seed, eps: 1e-3, tol: 1e-8 }
    }

    fn validate(&self) -> Result<()> {
        if self.n < 2 || self.n > MAX_N || self.p == 0 || self.p > MAX_P {
            return invalid(format!("sizes out of range: need 2 ≤ n ≤ {MAX_N} and 1 ≤ p ≤ {MAX_P}"));
        }
        if !(self.eps > 0.0) || !(self.tol > 0.0) {
            return invalid("eps and tol must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bucket {
    CertifiedInBoth,
    RefutedInMin,
    Unresolved,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GapEvidence {
    /// `α(P ⊗ Q)α* = x + eps·1`; in mode uu_vv it verifies in both pairs.
    MaxWitness { witness: MaxConeWitness },
    /// Minimal eigenprojector of the ambient matrix.
    MinSeparator { certificate: ConeCertificate },
    /// PSD representative of `x + eps·1` modulo the kernel of `M_n ⊗ M_n → W_n ⊗ W_n`.
    LiftWitness { certificate: ConeCertificate },
    /// Unitaries `u_i, v_k` whose evaluation of `x` has a negative eigenvalue.
    UnitaryRefutation { u: Vec<MatrixJson>, v: Vec<MatrixJson>, min_eig: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapCertificate {
    pub name: String,
    pub instance: usize,
    /// Ambient matrix of the sample (a representative in mode ww).
    pub element: MatrixJson,
    pub evidence: GapEvidence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapInstance {
    pub id: usize,
    pub seed: u64,
    pub recipe: String,
    pub bucket: Bucket,
    pub certificate_ref: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    #[serde(flatten)]
    pub config: GapConfig,
    /// "bracketed" in mode ww, where min membership is only bracketed.
    pub min_test: String,
    pub instances: Vec<GapInstance>,
    pub certified_in_both: Vec<usize>,
    pub refuted_in_min: Vec<usize>,
    pub unresolved: Vec<usize>,
    /// Every emitted certificate replays.
    pub sound: bool,
    /// No sample is both certified and refuted, and every max witness has a
    /// min-feasible target.
    pub consistent: bool,
    pub certificates: Vec<GapCertificate>,
}

pub fn gap_search(cfg: &GapConfig) -> Result<GapReport> {
    cfg.validate()?;
    let ctx = Context::new(cfg)?;
    let rows: Vec<Row> = (0..cfg.samples).into_par_iter().map(|id| ctx.run(id)).collect::<Result<_>>()?;
    let mut report = GapReport {
        config: cfg.clone(),
        min_test: if cfg.mode == GapMode::Ww { "bracketed" } else { "exact" }.into(),
        instances: Vec::with_capacity(rows.len()),
        certified_in_both: Vec::new(),
        refuted_in_min: Vec::new(),
        unresolved: Vec::new(),
        sound: true,
        consistent: true,
        certificates: Vec::new(),
    };
    for row in rows {
        match row.instance.bucket {
            Bucket::CertifiedInBoth => report.certified_in_both.push(row.instance.id),
            Bucket::RefutedInMin => report.refuted_in_min.push(row.instance.id),
            Bucket::Unresolved => report.unresolved.push(row.instance.id),
        }
        report.consistent &= row.consistent;
        if let Some(c) = row.certificate {
            report.sound &= ctx.replay(&c)?;
            report.certificates.push(c);
        }
        report.instances.push(row.instance);
    }
    Ok(report)
}

/// Re-check a stored certificate under the configuration it was issued for.
pub fn replay_gap_certificate(cfg: &GapConfig, c: &GapCertificate) -> Result<bool> {
    cfg.validate()?;
    Context::new(cfg)?.replay(c)
}

struct Row {
    instance: GapInstance,
    certificate: Option<GapCertificate>,
    consistent: bool,
}

struct Context {
    cfg: GapConfig,
    /// The pair searched; `U ⊗ U` in mode uu_vv.
    pair: Option<TensorPair>,
    /// `V ⊗ V` in mode uu_vv.
    outer: Option<TensorPair>,
}

fn square_pair(kind: SystemKind, n: usize) -> Result<TensorPair> {
    let s = Arc::new(make_system(kind, n)?);
    TensorPair::new(Arc::clone(&s), s)
}

impl Context {
    fn new(cfg: &GapConfig) -> Result<Self> {
        let (pair, outer) = match cfg.mode {
            GapMode::Ww => (None, None),
            GapMode::Ee => (Some(square_pair(SystemKind::En, cfg.n)?), None),
            GapMode::UuVv => (Some(square_pair(SystemKind::Un, cfg.n)?), Some(square_pair(SystemKind::Vn, cfg.n)?)),
        };
        Ok(Self { cfg: cfg.clone(), pair, outer })
    }

    fn run(&self, id: usize) -> Result<Row> {
        let seed = derive_seed(self.cfg.seed, id as u64);
        let mut rng = rng_from_seed(seed);
        let name = format!("{}-{id:04}", self.cfg.mode);
        let (recipe, element, evidence) = match self.cfg.mode {
            GapMode::Ww => self.run_ww(id, &mut rng)?,
            _ => self.run_concrete(id, seed, &mut rng)?,
        };
        let mut consistent = true;
        let bucket = match &evidence {
            None => Bucket::Unresolved,
            Some(GapEvidence::MinSeparator { .. } | GapEvidence::UnitaryRefutation { .. }) => Bucket::RefutedInMin,
            Some(GapEvidence::MaxWitness { witness }) => {
                // sandwich: the witnessed target must be min-positive
                let x = self.pair().from_ambient(&element, self.cfg.p)?;
                consistent = witness_target_min_certificate(&x, witness, self.cfg.tol).status == Status::Feasible;
                Bucket::CertifiedInBoth
            }
            Some(GapEvidence::LiftWitness { .. }) => {
                let shifted = &element + CMat::identity(element.nrows(), element.nrows()).scale(self.cfg.eps);
                consistent = self.ww_refutation(&shifted, &mut rng).is_none();
                Bucket::CertifiedInBoth
            }
        };
        let certificate = evidence.map(|evidence| GapCertificate {
            name: name.clone(),
            instance: id,
            element: MatrixJson::from_matrix(&element),
            evidence,
        });
        let certificate_ref = certificate.as_ref().map(|_| name);
        Ok(Row { instance: GapInstance { id, seed, recipe: recipe.into(), bucket, certificate_ref }, certificate, consistent })
    }

    fn pair(&self) -> &TensorPair {
        self.pair.as_ref().expect("concrete modes carry a pair")
    }

    /// Samples of `S ⊗ S ⊗ M_p` in rotation: elementary, planted, on the min
    /// boundary, and just outside it.
    fn run_concrete<R: Rng + ?Sized>(
        &self,
        id: usize,
        seed: u64,
        rng: &mut R,
    ) -> Result<(&'static str, CMat, Option<GapEvidence>)> {
        let pair = self.pair();
        let p = self.cfg.p;
        let member = |rng: &mut R, level: usize| {
            let e = pair.s().random_hermitian_element(rng, level);
            e.shift_unit(0.05 - element_min_eig(&e))
        };
        let (recipe, x) = match id % 4 {
            0 => ("elementary", pair.elementary(&member(rng, p), &member(rng, 1))?),
            1 => {
                let alpha = complex_gaussian(rng, p, 4);
                let x = pair.compress(&member(rng, 2), &member(rng, 2), &alpha)?;
                ("planted", x)
            }
            2 => {
                let e = pair.product().random_hermitian_element(rng, p);
                ("boundary", e.shift_unit(-element_min_eig(&e)))
            }
            _ => {
                let e = pair.product().random_hermitian_element(rng, p);
                let delta = rng.random_range(1e-3..1e-1);
                ("outside", e.shift_unit(-element_min_eig(&e) - delta))
            }
        };
        let xa = hermitize(&x.assemble());
        let min = certify_fixed(&xa, self.cfg.tol);
        if min.status == Status::Infeasible {
            return Ok((recipe, xa, Some(GapEvidence::MinSeparator { certificate: min })));
        }
        let opts = MaxSearchOptions { tol: self.cfg.tol, ..MaxSearchOptions::for_pair(pair, self.cfg.eps, seed) };
        let Some(witness) = max_tensor_inner_search(pair, &x, &opts)? else { return Ok((recipe, xa, None)) };
        if let Some(outer) = &self.outer {
            if !verify_max_witness(outer, &outer.from_ambient(&xa, p)?, &widen(pair, outer, &witness)?, self.cfg.tol) {
                return Ok((recipe, xa, None));
            }
        }
        Ok((recipe, xa, Some(GapEvidence::MaxWitness { witness })))
    }

    /// Representatives in `M_n ⊗ M_n ⊗ M_p` in rotation: elementary, a PSD
    /// matrix moved by a random kernel element, and the same pushed outside.
    fn run_ww<R: Rng + ?Sized>(&self, _id: usize, rng: &mut R) -> Result<(&'static str, CMat, Option<GapEvidence>)> {
        let (n, p) = (self.cfg.n, self.cfg.p);
        let d = n * n * p;
        let recipe_id = rng.random_range(0..3);
        let kernel = ww_kernel(n, p);
        let noise: CMat = kernel.iter().fold(CMat::zeros(d, d), |acc, k| acc + k.scale(rng.random_range(-1.0..1.0)));
        let (recipe, x) = match recipe_id {
            0 => {
                let r = kron(&kron(&random_psd(rng, n, n), &random_psd(rng, n, n)), &random_psd(rng, p, p));
                ("elementary", r + noise)
            }
            1 => ("lifted", random_psd(rng, d, (d / 2).max(1)) + noise),
            _ => {
                let r = random_psd(rng, d, (d / 2).max(1));
                let delta = rng.random_range(0.05..0.5) * crate::linalg::op_norm(&r) / d as f64;
                ("outside", r + noise - CMat::identity(d, d).scale(delta))
            }
        };
        let x = hermitize(&x);
        let prob = ww_lift_problem(&x, n, p, self.cfg.eps)?;
        let cert = solve_with(&prob, &SolverOptions { max_iter: MAX_ITER, ..SolverOptions::with_tol(self.cfg.tol) })?;
        if cert.status == Status::Feasible && verify_certificate(&prob, &cert, self.cfg.tol) {
            return Ok((recipe, x, Some(GapEvidence::LiftWitness { certificate: cert })));
        }
        Ok((recipe, x.clone(), self.ww_refutation(&x, rng)))
    }

    fn ww_refutation<R: Rng + ?Sized>(&self, x: &CMat, rng: &mut R) -> Option<GapEvidence> {
        let n = self.cfg.n;
        for trial in 0..REFUTATION_TRIALS {
            let r = 1 + trial % 2;
            let u: Vec<CMat> = (0..n).map(|_| haar_unitary(rng, r)).collect();
            let v: Vec<CMat> = (0..n).map(|_| haar_unitary(rng, r)).collect();
            let l = min_eig(&ww_unitary_evaluation(x, n, self.cfg.p, &u, &v));
            if l < -self.cfg.tol * (1.0 + x.norm()) {
                let js = |w: &[CMat]| w.iter().map(MatrixJson::from_matrix).collect();
                return Some(GapEvidence::UnitaryRefutation { u: js(&u), v: js(&v), min_eig: l });
            }
        }
        None
    }

    fn replay(&self, c: &GapCertificate) -> Result<bool> {
        let x = c.element.to_matrix()?;
        let (p, tol) = (self.cfg.p, self.cfg.tol);
        Ok(match (&c.evidence, self.cfg.mode) {
            (GapEvidence::MinSeparator { certificate }, GapMode::Ee | GapMode::UuVv) => {
                certificate.status == Status::Infeasible
                    && verify_certificate(&AffinePsdProblem::new(x, Vec::new())?, certificate, tol)
            }
            (GapEvidence::MaxWitness { witness }, GapMode::Ee | GapMode::UuVv) => {
                let pair = self.pair();
                let ok = verify_max_witness(pair, &pair.from_ambient(&x, p)?, witness, tol);
                match &self.outer {
                    Some(outer) => {
                        ok && verify_max_witness(outer, &outer.from_ambient(&x, p)?, &widen(pair, outer, witness)?, tol)
                    }
                    None => ok,
                }
            }
            (GapEvidence::LiftWitness { certificate }, GapMode::Ww) => {
                certificate.status == Status::Feasible
                    && verify_certificate(&ww_lift_problem(&x, self.cfg.n, p, self.cfg.eps)?, certificate, tol)
            }
            (GapEvidence::UnitaryRefutation { u, v, min_eig: l }, GapMode::Ww) => {
                let load = |w: &[MatrixJson]| w.iter().map(MatrixJson::to_matrix).collect::<Result<Vec<_>>>();
                let (u, v) = (load(u)?, load(v)?);
                if u.len() != self.cfg.n || v.len() != self.cfg.n || !u.iter().chain(&v).all(is_unitary) {
                    return Ok(false);
                }
                let r = u[0].nrows();
                if u.iter().chain(&v).any(|w| w.nrows() != r) {
                    return Ok(false);
                }
                let m = min_eig(&ww_unitary_evaluation(&x, self.cfg.n, p, &u, &v));
                m < -tol * (1.0 + x.norm()) && (m - l).abs() <= 1e-9 * (1.0 + x.norm())
            }
            _ => false,
        })
    }
}

const REFUTATION_TRIALS: usize = 64;

fn is_unitary(u: &CMat) -> bool {
    u.is_square() && (u * u.adjoint() - CMat::identity(u.nrows(), u.nrows())).norm() <= 1e-10
}

/// The same witness with its factors read in the larger systems of `outer`.
fn widen(inner: &TensorPair, outer: &TensorPair, w: &MaxConeWitness) -> Result<MaxConeWitness> {
    let (p, q, _) = w.factors(inner)?;
    let p = BlockElement::from_ambient(Arc::clone(outer.s()), &p.assemble(), w.k)?;
    let q = BlockElement::from_ambient(Arc::clone(outer.t()), &q.assemble(), w.m)?;
    Ok(MaxConeWitness { p_factor: p.to_json(), q_factor: q.to_json(), ..w.clone() })
}

/// Hermitian spanning set of the kernel `J ⊗ M_n + M_n ⊗ J` of
/// `M_n ⊗ M_n → W_n ⊗ W_n`, at level `p`.
fn ww_kernel(n: usize, p: usize) -> Vec<CMat> {
    let hn = hermitian_basis(n);
    let hp = hermitian_basis(p);
    let mut out = Vec::new();
    for i in 0..n - 1 {
        let d = unit(n, i, i) - unit(n, i + 1, i + 1);
        for h in &hn {
            for f in &hp {
                out.push(kron(&kron(&d, h), f));
                out.push(kron(&kron(h, &d), f));
            }
        }
    }
    out
}

/// `X + eps·I + K ⪰ 0` for `K` in the kernel of `M_n ⊗ M_n → W_n ⊗ W_n`.
pub fn ww_lift_problem(x: &CMat, n: usize, p: usize, eps: f64) -> Result<AffinePsdProblem> {
    let d = n * n * p;
    if x.shape() != (d, d) {
        return invalid(format!("representative must be {d}x{d}"));
    }
    AffinePsdProblem::from_spanning(x + CMat::identity(d, d).scale(eps), &ww_kernel(n, p))
}

/// `Σ (u_i u_j*/n) ⊗ (v_k v_l*/n) ⊗ X[(i,k),(j,l)]`.
pub fn ww_unitary_evaluation(x: &CMat, n: usize, p: usize, u: &[CMat], v: &[CMat]) -> CMat {
    let r = u[0].nrows();
    let w: Vec<CMat> = (0..n * n).map(|a| kron(&u[a / n], &v[a % n])).collect();
    let mut out = CMat::zeros(r * r * p, r * r * p);
    for a in 0..n * n {
        for b in 0..n * n {
            let blk = x.view((a * p, b * p), (p, p)).into_owned();
            out += kron(&(&w[a] * w[b].adjoint()), &blk);
        }
    }
    hermitize(&out.unscale((n * n) as f64))
}
