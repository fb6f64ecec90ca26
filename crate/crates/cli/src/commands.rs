use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use clap::{Args, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;

use matcone::duality::{
    dual_cone_membership, dual_cone_problem, dual_iso_sn, dual_iso_tn, dual_iso_wd_to_en, maps, verify_coi,
    ConcreteSpace, DualElement, DualJson, LinearMap, OrderedSpace, QuotientDual,
};
use matcone::feasibility::{verify_certificate, AffinePsdProblem, ConeCertificate, Status};
use matcone::linalg::json::MatrixJson;
use matcone::linalg::random::{haar_unitary, rng_from_seed};
use matcone::linalg::{kron, min_eig, BlockTridiagonal, CMat, PartialBandedMat};
use matcone::opsys::{ambient_cone_membership, BlockElement, ElementJson, MatOpSys, SystemDescriptor, SystemKind};
use matcone::quotient::{
    c_cone_membership, c_cone_problem, d_cone_membership, d_cone_problem, factorization_at, free_factorization,
    quotient_norm, sn_min_membership, sn_min_problem, wn_min_membership, wn_min_problem, QuotientElement,
    QuotientSystem, SnInstance, SnJson, WnInstance, WnJson,
};
use matcone::tensor::{
    gap_search, max_tensor_inner_search, min_tensor_membership, ps_check, pstar_check, replay_lift_certificate,
    sn_max_membership, sn_max_problem, verify_max_witness, wn_max_membership, wn_max_problem, GapConfig, GapMode,
    MaxSearchOptions, PropertyConfig, TensorPair, DEFAULT_EPS_GRID,
};

use crate::output::{split_certificates, to_value, Outcome};
use crate::CliError;

type Res<T> = Result<T, CliError>;

fn invalid<T>(msg: impl Into<String>) -> Res<T> {
    Err(CliError::Invalid(msg.into()))
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Res<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Invalid(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Invalid(format!("malformed JSON in {}: {e}", path.display())))
}

fn system(desc: &str) -> Res<Arc<MatOpSys>> {
    Ok(Arc::new(SystemDescriptor::from_str(desc)?.build()?))
}

fn required<'a>(v: &'a Option<String>, flag: &str) -> Res<&'a str> {
    v.as_deref().ok_or_else(|| CliError::Invalid(format!("--{flag} is required here")))
}

/// `M_n/J_n` or `T_n/J_n` from a descriptor of the parent.
fn quotient(desc: &str) -> Res<Arc<QuotientSystem>> {
    let d = SystemDescriptor::from_str(desc)?;
    Ok(Arc::new(match d.name {
        SystemKind::Mn => QuotientSystem::mn_jn(d.n)?,
        SystemKind::Tn => QuotientSystem::tn_jn(d.n)?,
        other => return invalid(format!("no quotient by J_n is defined for {other}")),
    }))
}

fn level_for(size: usize, ambient: usize) -> Res<usize> {
    if size == 0 || size % ambient != 0 {
        return invalid(format!("matrix of size {size} is not a level of an ambient dimension {ambient}"));
    }
    Ok(size / ambient)
}

/// Report body for a cone query, with the certificate stored separately.
fn certified(prob: &AffinePsdProblem, cert: &ConeCertificate, tol: f64) -> Res<Outcome> {
    let verified = cert.status != Status::Undecided && verify_certificate(prob, cert, tol);
    let body = json!({
        "status": cert.status,
        "margin": cert.margin,
        "iterations": cert.iterations,
        "verified": verified,
    });
    Ok(Outcome::new(body)?
        .certificate("membership", cert)?
        .require(cert.status == Status::Undecided || verified, || "membership certificate did not re-verify".into()))
}

#[derive(Debug, Args, Serialize)]
pub struct NormArgs {
    /// Parent system kind: Mn or Tn (the quotient is by the trace-zero diagonals).
    #[arg(long)]
    system: String,
    #[arg(long)]
    n: usize,
    /// Matrix unit `eIJ` (1-based, e.g. e12), `eI_J` for n ≥ 10, or `unit`.
    #[arg(long, conflicts_with = "input")]
    element: Option<String>,
    /// Representative as a matrix JSON file (level inferred from its size).
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
}

fn parse_unit(s: &str, n: usize) -> Res<(usize, usize)> {
    let bad = || CliError::Invalid(format!("element '{s}' must look like e12 or e1_2"));
    let rest = s.strip_prefix('e').ok_or_else(bad)?;
    let (i, j) = match rest.split_once('_') {
        Some((i, j)) => (i.parse::<usize>().map_err(|_| bad())?, j.parse::<usize>().map_err(|_| bad())?),
        None if rest.len() == 2 && n < 10 => {
            let d: Vec<usize> = rest.chars().map(|c| c.to_digit(10).map(|v| v as usize)).collect::<Option<_>>().ok_or_else(bad)?;
            (d[0], d[1])
        }
        None => return Err(bad()),
    };
    if i == 0 || j == 0 || i > n || j > n {
        return invalid(format!("indices of '{s}' must lie in 1..={n}"));
    }
    Ok((i - 1, j - 1))
}

pub fn norm(a: &NormArgs) -> Res<Outcome> {
    let kind = SystemKind::from_str(&a.system)?;
    let q = quotient(&SystemDescriptor { name: kind, n: a.n }.to_string())?;
    let x = match (&a.element, &a.input) {
        (Some(e), _) if e == "unit" => QuotientElement::unit(Arc::clone(&q), 1),
        (Some(e), _) => {
            let (i, j) = parse_unit(e, a.n)?;
            QuotientElement::e(Arc::clone(&q), i, j)?
        }
        (None, Some(path)) => {
            let m = read_json::<MatrixJson>(path)?.to_matrix()?;
            let p = level_for(m.nrows(), a.n)?;
            QuotientElement::from_ambient(Arc::clone(&q), &m, p)?
        }
        (None, None) => return invalid("give --element or --input"),
    };
    let b = quotient_norm(&x, a.tol)?;
    Outcome::new(json!({ "value": b.value, "lower": b.lower, "upper": b.upper }))
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Cone {
    /// Ambient PSD cone of M_p(S); input is an element JSON.
    Ambient,
    /// Quotient cone D_p of S/J; input is a representative matrix.
    D,
    /// Archimedean cone C_p of S/J at slack eps.
    C,
    /// (M_n/J_n) ⊗ M_b lift; with --system T, the max lift over T.
    Wn,
    /// (T_n/J_n) ⊗ M_b banded lift; with --system T, the max lift over T.
    Sn,
    /// Min tensor cone of S ⊗ T; input is an ambient matrix.
    MinTensor,
    /// Max tensor cone of S ⊗ T, certified from below by a witness search.
    MaxTensor,
}

#[derive(Debug, Args, Serialize)]
pub struct MembershipArgs {
    #[arg(long, value_enum)]
    cone: Cone,
    /// System descriptor such as Tn:3 (the first factor for tensor cones).
    #[arg(long)]
    system: Option<String>,
    /// Second tensor factor.
    #[arg(long = "t-system")]
    t_system: Option<String>,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

pub fn membership(a: &MembershipArgs) -> Res<Outcome> {
    match a.cone {
        Cone::Ambient => {
            let s = system(required(&a.system, "system")?)?;
            let x = BlockElement::from_json(s, &read_json::<ElementJson>(&a.input)?)?;
            let cert = ambient_cone_membership(&x, a.tol)?;
            certified(&AffinePsdProblem::new(x.assemble(), Vec::new())?, &cert, a.tol)
        }
        Cone::D | Cone::C => {
            let q = quotient(required(&a.system, "system")?)?;
            let m = read_json::<MatrixJson>(&a.input)?.to_matrix()?;
            let p = level_for(m.nrows(), q.parent().ambient_dim())?;
            let x = QuotientElement::from_ambient(q, &m, p)?;
            if let Cone::C = a.cone {
                let eps = a.eps.unwrap_or(1e-7);
                certified(&c_cone_problem(&x, eps)?, &c_cone_membership(&x, eps, a.tol)?, a.tol)
            } else {
                certified(&d_cone_problem(&x)?, &d_cone_membership(&x, a.tol)?, a.tol)
            }
        }
        Cone::Wn => {
            let inst = WnInstance::from_json(&read_json::<WnJson>(&a.input)?)?;
            match &a.system {
                Some(t) => {
                    let t = system(t)?;
                    let eps = a.eps.unwrap_or(DEFAULT_EPS_GRID[2]);
                    certified(&wn_max_problem(&t, &inst, eps)?, &wn_max_membership(&t, &inst, eps, a.tol)?, a.tol)
                }
                None => certified(&wn_min_problem(&inst)?, &wn_min_membership(&inst, a.tol)?, a.tol),
            }
        }
        Cone::Sn => {
            let inst = SnInstance::from_json(&read_json::<SnJson>(&a.input)?)?;
            match &a.system {
                Some(t) => {
                    let t = system(t)?;
                    let eps = a.eps.unwrap_or(DEFAULT_EPS_GRID[2]);
                    certified(&sn_max_problem(&t, &inst, eps)?, &sn_max_membership(&t, &inst, eps, a.tol)?, a.tol)
                }
                None => certified(&sn_min_problem(&inst)?, &sn_min_membership(&inst, a.tol)?, a.tol),
            }
        }
        Cone::MinTensor | Cone::MaxTensor => {
            let pair = TensorPair::new(system(required(&a.system, "system")?)?, system(required(&a.t_system, "t-system")?)?)?;
            let m = read_json::<MatrixJson>(&a.input)?.to_matrix()?;
            let x = pair.from_ambient(&m, level_for(m.nrows(), pair.product().ambient_dim())?)?;
            if let Cone::MinTensor = a.cone {
                let cert = min_tensor_membership(&pair, &x, a.tol)?;
                return certified(&AffinePsdProblem::new(x.assemble(), Vec::new())?, &cert, a.tol);
            }
            let opts = MaxSearchOptions { tol: a.tol, ..MaxSearchOptions::for_pair(&pair, a.eps.unwrap_or(1e-3), a.seed) };
            match max_tensor_inner_search(&pair, &x, &opts)? {
                Some(w) => {
                    let ok = verify_max_witness(&pair, &x, &w, a.tol);
                    Ok(Outcome::new(json!({ "status": "witness", "k": w.k, "m": w.m, "eps": w.eps, "residual": w.residual, "verified": ok }))?
                        .certificate("max-witness", &w)?
                        .require(ok, || "max-cone witness did not re-verify".into()))
                }
                None => Outcome::new(json!({ "status": "inconclusive", "eps": opts.eps })),
            }
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct DualArgs {
    /// System whose dual is taken, e.g. Tn:3; with --quotient, the parent of S/J_n.
    #[arg(long)]
    system: String,
    /// Functional values on the basis as a dual JSON file.
    #[arg(long)]
    input: PathBuf,
    /// Read the values as coordinates of a functional on the quotient by J_n.
    #[arg(long)]
    quotient: bool,
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
}

pub fn dual(a: &DualArgs) -> Res<Outcome> {
    let json: DualJson = read_json(&a.input)?;
    let (g, image) = if a.quotient {
        let q = quotient(&a.system)?;
        let values = json.values.iter().map(MatrixJson::to_matrix).collect::<Result<Vec<_>, _>>()?;
        let qd = QuotientDual::new(Arc::clone(&q), json.level, values)?;
        let g = qd.pullback();
        let image = match q.parent().descriptor().map(|d| d.name) {
            Some(SystemKind::Mn) => dual_iso_wd_to_en(&qd)?,
            _ => dual_iso_sn(&g)?,
        };
        (g, Some(image))
    } else {
        let s = system(&a.system)?;
        let g = DualElement::from_json(Arc::clone(&s), &json)?;
        let image = match s.descriptor().map(|d| d.name) {
            Some(SystemKind::Tn) => Some(dual_iso_tn(&g)?),
            _ => None,
        };
        (g, image)
    };
    let cert = dual_cone_membership(&g, a.tol)?;
    let mut out = certified(&dual_cone_problem(&g)?, &cert, a.tol)?;
    if let Some(img) = image {
        out.result["image"] = to_value(img.to_json())?;
        out.result["image_system"] = json!(img.system.name());
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MapKind {
    /// Dual of M_n/J_n onto E_n.
    WdEn,
    /// Dual of T_n onto V_n.
    TnVn,
    /// Dual of T_n/J_n onto U_n.
    SnUn,
    /// Inclusion E_n into M_n.
    EnMn,
    /// Transpose on M_n.
    Transpose,
    /// Identity on E_n.
    Identity,
}

#[derive(Debug, Args, Serialize)]
pub struct CoiArgs {
    #[arg(long, value_enum)]
    map: MapKind,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 2)]
    levels: usize,
    #[arg(long, default_value_t = 200)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
}

pub fn coi_verify(a: &CoiArgs) -> Res<Outcome> {
    let run = |map: LinearMap, d: &dyn OrderedSpace, c: &dyn OrderedSpace| {
        verify_coi(&map, d, c, a.levels, a.samples, a.seed, a.tol)
    };
    let report = match a.map {
        MapKind::WdEn => {
            let (m, d, c) = maps::wd_to_en(a.n)?;
            run(m, &d, &c)?
        }
        MapKind::TnVn => {
            let (m, d, c) = maps::tn_to_vn(a.n)?;
            run(m, &d, &c)?
        }
        MapKind::SnUn => {
            let (m, d, c) = maps::sn_to_un(a.n)?;
            run(m, &d, &c)?
        }
        MapKind::EnMn => {
            let (m, d, c) = maps::en_into_mn(a.n)?;
            run(m, &d, &c)?
        }
        MapKind::Transpose => {
            let (m, d, c) = maps::transpose(a.n)?;
            run(m, &d, &c)?
        }
        MapKind::Identity => {
            let e = system(&format!("En:{}", a.n))?;
            let space = ConcreteSpace(Arc::clone(&e));
            run(LinearMap::identity(e.dim()), &space, &space)?
        }
    };
    let rejected = report.certificates_rejected;
    Ok(Outcome::new(&report)?.require(rejected == 0, || format!("{rejected} certificates failed re-verification")))
}

#[derive(Debug, Args, Serialize)]
pub struct CompleteArgs {
    /// Partial matrix JSON; unspecified entries are marked by `mask`.
    #[arg(long)]
    input: PathBuf,
    /// Read the input as a block-tridiagonal matrix with blocks of this size.
    #[arg(long)]
    block_size: Option<usize>,
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
}

pub fn complete(a: &CompleteArgs) -> Res<Outcome> {
    let json: MatrixJson = read_json(&a.input)?;
    let (done, matches) = match a.block_size {
        Some(b) => {
            let partial = BlockTridiagonal::from_full(&json.to_matrix()?, b)?;
            let done = matcone::linalg::tridiag_psd_complete(&partial, a.tol)?;
            let ok = partial.matches(done.as_matrix());
            (done, ok)
        }
        None => {
            let partial = PartialBandedMat::from_json(&json)?;
            let done = partial.complete(a.tol)?;
            let ok = partial.matches(done.as_matrix());
            (done, ok)
        }
    };
    let m = done.as_matrix();
    let lmin = min_eig(m);
    let completed = MatrixJson::from_matrix(m);
    Ok(Outcome::new(json!({ "dim": m.nrows(), "min_eig": lmin, "matches_specified": matches, "completed": completed }))?
        .certificate("completion", &completed)?
        .require(matches && lmin >= -a.tol, || "completion is not PSD or alters specified entries".into()))
}

#[derive(Debug, Args, Serialize)]
pub struct PropertyArgs {
    /// The system T, e.g. Mn:2.
    #[arg(long = "T")]
    t: String,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    p: usize,
    #[arg(long, default_value_t = 50)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Comma-separated slack values.
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_EPS_GRID.to_vec())]
    eps_grid: Vec<f64>,
    /// Single slack value; overrides --eps-grid.
    #[arg(long)]
    eps: Option<f64>,
    /// Shift along the unit past the min-cone boundary.
    #[arg(long, default_value_t = 0.0)]
    offset: f64,
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
}

pub fn property(a: &PropertyArgs, banded: bool) -> Res<Outcome> {
    let t = system(&a.t)?;
    let cfg = PropertyConfig {
        eps_grid: a.eps.map_or_else(|| a.eps_grid.clone(), |e| vec![e]),
        tol: a.tol,
        offset: a.offset,
        ..PropertyConfig::new(a.n, a.p, a.samples, a.seed)
    };
    let report = if banded { ps_check(&t, &cfg)? } else { pstar_check(&t, &cfg)? };
    let mut failed = Vec::new();
    for c in &report.certificates {
        let ok = c.certificate.status == Status::Undecided || replay_lift_certificate(&t, c, a.tol)?;
        if !ok {
            failed.push(c.name.clone());
        }
    }
    let mut body = to_value(&report)?;
    let certificates = split_certificates(&mut body, "name");
    let mut out = Outcome::new(body)?.require(failed.is_empty(), || format!("certificates {failed:?} did not replay"));
    out.certificates = certificates;
    Ok(out)
}

#[derive(Debug, Args, Serialize)]
pub struct GapArgs {
    /// ww, ee or uu_vv.
    #[arg(long)]
    mode: String,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    p: usize,
    #[arg(long, default_value_t = 20)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1e-3)]
    eps: f64,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
}

pub fn gap(a: &GapArgs) -> Res<Outcome> {
    let cfg = GapConfig { eps: a.eps, tol: a.tol, ..GapConfig::new(GapMode::from_str(&a.mode)?, a.n, a.p, a.samples, a.seed) };
    let report = gap_search(&cfg)?;
    let (sound, consistent) = (report.sound, report.consistent);
    let mut body = to_value(&report)?;
    let certificates = split_certificates(&mut body, "name");
    let mut out = Outcome::new(body)?
        .require(sound, || "a gap-search certificate did not replay".into())
        .require(consistent, || "a sample was both certified and refuted".into());
    out.certificates = certificates;
    Ok(out)
}

/// `a[i][j] = A_ij`, diagonal included.
#[derive(Debug, Deserialize)]
struct FactorizeInput {
    a: Vec<Vec<MatrixJson>>,
}

#[derive(Debug, Args, Serialize)]
pub struct FactorizeArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    /// Seed of the unitaries used for the spot check.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

pub fn factorize(a: &FactorizeArgs) -> Res<Outcome> {
    let input: FactorizeInput = read_json(&a.input)?;
    let blocks: Vec<Vec<CMat>> = input
        .a
        .iter()
        .map(|row| row.iter().map(MatrixJson::to_matrix).collect::<Result<Vec<_>, _>>())
        .collect::<Result<_, _>>()?;
    let f = free_factorization(&blocks, a.tol)?;
    // evaluate both sides at random unitaries
    let mut rng = rng_from_seed(a.seed);
    let u: Vec<CMat> = (0..blocks.len()).map(|_| haar_unitary(&mut rng, 2)).collect();
    let mut lhs = CMat::zeros(2 * blocks[0][0].nrows(), 2 * blocks[0][0].nrows());
    for (i, row) in blocks.iter().enumerate() {
        for (j, b) in row.iter().enumerate() {
            lhs += kron(&(&u[i] * u[j].adjoint()), b);
        }
    }
    let spot = (lhs - factorization_at(&f.x, &u)).norm();
    let scale = 1.0 + blocks.iter().flatten().map(|b| b.norm()).fold(0.0, f64::max);
    let ok = f.residual <= 1e-8 * scale && f.constraint_residual <= 1e-8 * scale && spot <= 1e-8 * scale;
    let x: Vec<Vec<MatrixJson>> = f.x.iter().map(|row| row.iter().map(MatrixJson::from_matrix).collect()).collect();
    Ok(Outcome::new(json!({
        "residual": f.residual,
        "constraint_residual": f.constraint_residual,
        "spot_check_error": spot,
        "x": x,
    }))?
    .certificate("lift", &MatrixJson::from_matrix(f.lift.as_matrix()))?
    .require(ok, || format!("reconstruction residual {:.3e} exceeds 1e-8", f.residual.max(spot))))
}
