use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use topoidx::clifford::{complex_irrep, real_rep, verify_clifford, REAL_SIGNATURES};
use topoidx::homotopy::decouple::random_instance;
use topoidx::homotopy::{
    compress_matrix_homotopy, decouple, diii_pinning, diii_symmetrize, dimer_operator, e_to_minus_e_path,
    flatten_path_unchecked, inclusion_exclusion_series, pinning, swap_path, unitarity_residual, CertSpec, Constraint,
    Path, PathKind, PathTolerances, PinOptions,
};
use topoidx::invariants::{even_index_report, index_convergence, odd_index_report, IndexOptions, IndexReport};
use topoidx::lattice::{certify, dimer_partition, SiteIndexMap};
use topoidx::linalg::{self, c64, CMat};
use topoidx::locality::locality_profile_with;
use topoidx::models::{build_model, half_plane_projection, ssh, Disorder, ModelSpec};
use topoidx::operator::{fermi_projection, OperatorMatrix, Snapshot};
use topoidx::symmetry::{canonical_symmetry_ops, check_constraints, chiral_flatten_completed, AZClass};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::output::{envelope, json_bytes, sha256_hex, Outputs};

/// Strength of the random orthogonal rotation applied to the dimer operator
/// in the `diii-pin` pipeline.
const DIMER_ROTATION: f64 = 0.15;

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

struct Source {
    op: OperatorMatrix,
    class: Option<AZClass>,
    spec: Option<ModelSpec>,
    label: String,
}

fn ball(d: usize, r: f64, fiber: usize) -> Result<Arc<SiteIndexMap>, CliError> {
    Ok(Arc::new(SiteIndexMap::ball(d, r, fiber)?))
}

/// `[-r, r)`: an even number of sites, so the line splits into dimers.
fn even_line(r: f64) -> Result<Arc<SiteIndexMap>, CliError> {
    let r = r.floor() as i64;
    if r < 1 {
        return Err(invalid("--R must be at least 1"));
    }
    Ok(Arc::new(SiteIndexMap::from_sites(1, (-r..r).map(|x| vec![x]).collect(), 1)?))
}

fn read_snapshot(path: &std::path::Path) -> Result<Snapshot, CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io { path: path.to_path_buf(), source })?;
    serde_json::from_str(&text).map_err(|e| invalid(format!("snapshot {}: {e}", path.display())))
}

/// The operator named by `--snapshot`, or else built from the model flags.
fn load_operator(cfg: &RunConfig) -> Result<Source, CliError> {
    if let Some(path) = &cfg.snapshot {
        let snap = read_snapshot(path)?;
        let op = snap.to_operator()?;
        let stored = snap.meta.get("class").and_then(Value::as_str).map(str::parse::<AZClass>).transpose()?;
        if let (Some(a), Some(b)) = (stored, cfg.class) {
            if a != b {
                return Err(invalid(format!("snapshot is class {a}, --class says {b}")));
            }
        }
        let spec = snap.meta.get("model").cloned().and_then(|v| serde_json::from_value(v).ok());
        return Ok(Source { op, class: stored.or(cfg.class), spec, label: path.display().to_string() });
    }
    let spec = cfg.model_spec()?;
    let r = cfg.require_radius()?;
    let l = ball(spec.name.dimension(), r, spec.name.fiber())?;
    let op = spec.build(&l)?;
    Ok(Source { class: Some(spec.class()), label: format!("{:?} at R = {r}", spec.name).to_lowercase(), op, spec: Some(spec) })
}

fn path_spec(kind: PathKind, radius: f64, cfg: &RunConfig) -> CertSpec {
    let t = &cfg.tolerances;
    CertSpec::new(kind, radius).tolerances(PathTolerances { gap: t.gap, sym: t.sym, loc: t.loc })
}

fn pin_options(cfg: &RunConfig) -> PinOptions {
    PinOptions { eps: cfg.eps, grid: cfg.grid, tau_inv: cfg.tolerances.gap, ..Default::default() }
}

pub fn build(cfg: &RunConfig) -> Result<(), CliError> {
    let spec = cfg.model_spec()?;
    let r = cfg.require_radius()?;
    let (d, fiber) = (spec.name.dimension(), spec.name.fiber());
    let l = ball(d, r, fiber)?;
    let tol = &cfg.tolerances;
    let built = build_model(&spec, &l, tol.gap)?;
    let ops = canonical_symmetry_ops(spec.class(), fiber)?;
    let residuals = check_constraints(&built.h, &ops, tol.sym);
    let radii = [r / 4.0, r / 2.0, 3.0 * r / 4.0];
    let profile = locality_profile_with(&built.h, 1, &radii, tol.loc);

    let snap = Snapshot::from_operator(&built.h, json!({ "model": spec, "class": spec.class().label(), "R": r }));
    let snap_bytes = json_bytes(&snap)?;
    let snap_path = cfg.out_path("snapshot.json");
    let gap_closed = built.warning.is_some();
    let status = if gap_closed {
        "gap_closed"
    } else if !residuals.pass {
        "symmetry_violated"
    } else {
        "ok"
    };
    let result = json!({
        "model": spec,
        "lattice": { "d": d, "R": r, "N": fiber, "sites": l.len(), "dim": l.len() * fiber },
        "gap": {
            "value": built.gap.gap,
            "tol": tol.gap,
            "closed": gap_closed,
            "max_negative": built.gap.max_negative,
            "min_positive": built.gap.min_positive,
        },
        "class_residuals": residuals,
        "locality": {
            "generation": profile.generation,
            "radii": profile.radii,
            "values": profile.values,
            "threshold": profile.threshold,
            "verdict": profile.verdict,
        },
        "snapshot": { "path": snap_path, "sha256": sha256_hex(&snap_bytes) },
    });
    let mut out = Outputs::new();
    out.raw(snap_path, &snap_bytes)?;
    out.json(cfg.out_path("build.json"), &envelope(cfg, status, result))?;
    out.text(cfg.out_path("locality.csv"), &profile.to_csv())?;
    out.announce();
    println!("gap {:.6e} (tol {:.1e}), class {} residual {:.3e} (tol {:.1e})", built.gap.gap, tol.gap, spec.class(), residuals.max(), tol.sym);
    if let Some(w) = built.warning {
        return Err(w.into());
    }
    if !residuals.pass {
        return Err(invalid(format!("class {} constraints violated: {:.3e}", spec.class(), residuals.max())));
    }
    Ok(())
}

/// Even `d`: Fermi projection and the even pairing. Odd `d`: the chiral
/// unitary and the odd pairing.
fn estimate(h: &OperatorMatrix, class: Option<AZClass>, cfg: &RunConfig, opts: IndexOptions) -> Result<IndexReport, CliError> {
    let d = h.lattice().d();
    match (class, d % 2) {
        (Some(AZClass::A) | None, 0) => Ok(even_index_report(&fermi_projection(h, cfg.tolerances.gap)?, opts)?),
        (Some(AZClass::AIII) | None, 1) => {
            let (u, _) = chiral_flatten_completed(h, cfg.tolerances.chiral)?;
            Ok(odd_index_report(&u, opts)?)
        }
        (Some(c), _) => Err(invalid(format!("no integer index estimator for class {c} in d = {d}"))),
        _ => unreachable!(),
    }
}

fn index_result(rep: &IndexReport, cfg: &RunConfig, extra: Value) -> Value {
    json!({
        "value": rep.value,
        "raw": rep.raw,
        "raw_imag": rep.raw_imag,
        "residual": rep.residual,
        "certified": rep.certified,
        "power": rep.power,
        "table": rep.table,
        "tolerances": { "theta_int": cfg.tolerances.theta_int, "gap": cfg.tolerances.gap },
        "input": extra,
    })
}

pub fn index(cfg: &RunConfig) -> Result<(), CliError> {
    let opts = IndexOptions { power: cfg.power, theta_int: cfg.tolerances.theta_int };
    let mut out = Outputs::new();
    let (rep, input) = if cfg.model.as_deref() == Some("half-plane") {
        let r = cfg.require_radius()?;
        cfg.check_shape(AZClass::A, 2, 1)?;
        let (p, _) = half_plane_projection(&ball(2, r, 1)?)?;
        (even_index_report(&p, opts)?, json!({ "source": "half-plane projection", "R": r }))
    } else if let Some(radii) = cfg.radii.clone().filter(|_| cfg.snapshot.is_none()) {
        let spec = cfg.model_spec()?;
        let (d, fiber) = (spec.name.dimension(), spec.name.fiber());
        let input = json!({ "source": "nested truncations", "model": spec, "radii": radii });
        let res = index_convergence(&radii, cfg.tolerances.theta_int, |r| {
            let l = SiteIndexMap::ball(d, r, fiber)?;
            let h = spec.build(&Arc::new(l))?;
            estimate(&h, Some(spec.class()), cfg, opts).map_err(|e| match e {
                CliError::Core(e) => e,
                other => topoidx::Error::InvalidArgument(other.to_string()),
            })
        });
        match res {
            Ok(rep) => (rep, input),
            Err(e @ topoidx::Error::NotConverged(_)) => {
                let result = json!({ "certified": false, "message": e.to_string(), "tolerances": { "theta_int": cfg.tolerances.theta_int }, "input": input });
                out.json(cfg.out_path("index.json"), &envelope(cfg, "not_converged", result))?;
                out.announce();
                return Err(e.into());
            }
            Err(e) => return Err(e.into()),
        }
    } else {
        let src = load_operator(cfg)?;
        let rep = estimate(&src.op, src.class, cfg, opts)?;
        let oracle = src.spec.as_ref().and_then(|s| s.oracle(64).ok());
        (rep, json!({ "source": src.label, "class": src.class.map(AZClass::label), "momentum_oracle": oracle }))
    };
    let status = if rep.certified { "ok" } else { "not_converged" };
    out.json(cfg.out_path("index.json"), &envelope(cfg, status, index_result(&rep, cfg, input)))?;
    out.text(cfg.out_path("index.csv"), &rep.to_csv())?;
    out.announce();
    println!("index {} (raw {:.6}, residual {:.2e}, tol {:.2e}, certified {})", rep.value, rep.raw, rep.residual, cfg.tolerances.theta_int, rep.certified);
    if !rep.certified {
        return Err(topoidx::Error::NotConverged(format!("raw {:.4}, table {:?}", rep.raw, rep.table)).into());
    }
    Ok(())
}

/// `R E Rᵀ` with `R` the Cayley transform of a seeded nearest-neighbour
/// antisymmetric generator; stays inside the DIII space.
fn rotated_dimer(l: &Arc<SiteIndexMap>, e: &OperatorMatrix, strength: f64, seed: u64) -> OperatorMatrix {
    let n = l.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut k = CMat::zeros(n, n);
    for i in 0..n {
        if let Some(j) = l.index_of(&[l.site(i)[0] + 1]) {
            let v = strength * rng.gen_range(-1.0..1.0);
            k[(i, j)] = c64::new(v, 0.0);
            k[(j, i)] = c64::new(-v, 0.0);
        }
    }
    let id = linalg::eye(n);
    let rot = linalg::inverse((&id - &k).as_ref()) * (&id + &k);
    e.with_mat(&rot * e.mat() * rot.transpose())
}

fn chiral_unitary(src: &Source, cfg: &RunConfig) -> Result<OperatorMatrix, CliError> {
    if src.class == Some(AZClass::AIII) {
        return Ok(chiral_flatten_completed(&src.op, cfg.tolerances.chiral)?.0);
    }
    let res = unitarity_residual(src.op.mat());
    if res <= cfg.tolerances.sym {
        Ok(src.op.clone())
    } else {
        Err(invalid(format!("pin needs a chiral Hamiltonian or a unitary, unitarity residual {res:.3e}")))
    }
}

pub fn homotopy(cfg: &RunConfig) -> Result<(), CliError> {
    let pipeline = cfg.pipeline.as_deref().ok_or_else(|| invalid("missing --pipeline"))?;
    let (path, extra): (Path, Value) = match pipeline {
        "flatten" => {
            let src = load_operator(cfg)?;
            let mut spec = path_spec(PathKind::Hermitian, src.op.lattice().radius(), cfg);
            if let Some(c) = src.class {
                spec = spec.with(Constraint::Symmetry(canonical_symmetry_ops(c, src.op.fiber())?));
            }
            let path = flatten_path_unchecked(&src.op, cfg.grid, spec)?;
            (path, json!({ "input": src.label }))
        }
        "pin" => {
            let src = load_operator(cfg)?;
            let u = chiral_unitary(&src, cfg)?;
            let p = pinning(&u, &pin_options(cfg))?;
            let extra = json!({
                "input": src.label,
                "eps": cfg.eps,
                "centers": p.centers.family.centers.len(),
                "center_distance": p.centers.distance,
                "pinned_sites": u.lattice().len() - p.p_sites.len(),
                "blocks": p.blocks,
                "factorization_residual": p.factorization_residual,
                "nilpotent_residual": p.nilpotent_residual,
                "proper_error": p.proper_error,
            });
            (p.path, extra)
        }
        "diii-pin" => {
            let l = even_line(cfg.require_radius()?)?;
            let part = dimer_partition(&l);
            let e = dimer_operator(&l, 1, &part).e;
            let x = rotated_dimer(&l, &e, DIMER_ROTATION, cfg.seed);
            let p = diii_pinning(&x, &part, &pin_options(cfg))?;
            let extra = json!({
                "input": { "sites": l.len(), "rotation": DIMER_ROTATION, "seed": cfg.seed },
                "centers": p.centers.family.centers.len(),
                "repair": p.repair,
                "pinned_block_residual": p.pinned_block_residual,
                "off_diagonal": p.off_diagonal,
                "max_membership": p.max_membership,
            });
            (p.path, extra)
        }
        "e-flip" => {
            let l = even_line(cfg.require_radius()?)?;
            let part = dimer_partition(&l);
            let path = e_to_minus_e_path(&l, 1, &part, cfg.grid)?;
            let membership = path.report.max_residuals.get("diii").copied();
            (path, json!({ "sites": l.len(), "max_membership": membership }))
        }
        "compress" => {
            let r = cfg.require_radius()?;
            let l = ball(1, r, 1)?;
            let s: Vec<usize> = (0..l.len()).filter(|&i| l.site(i)[0].rem_euclid(3) == 0).collect();
            let p0 = certify(&l, s, 1, 2)?;
            let u = inner_unitary(&l)?;
            let (t, w) = swap_path(&u, 1, cfg.grid);
            let c = compress_matrix_homotopy(&l, 1, &t, &w, &p0)?;
            (c.path, json!({ "compression": c.report }))
        }
        other => return Err(invalid(format!("unknown pipeline {other}"))),
    };
    let rep = &path.report;
    let status = if rep.verdict { "certified" } else { "failed" };
    let result = json!({ "pipeline": pipeline, "certificate": rep, "details": extra });
    let mut out = Outputs::new();
    out.json(cfg.out_path("homotopy.json"), &envelope(cfg, status, result))?;
    out.text(cfg.out_path("homotopy.csv"), &rep.to_csv())?;
    out.announce();
    println!("{pipeline}: {status}, {} points, min gap {:.3e} (tol {:.1e})", rep.grid.len(), rep.min_gap, rep.tolerances.gap);
    if !rep.verdict {
        return Err(CliError::Certification(rep.failures.join("; ")));
    }
    Ok(())
}

/// A rotation on the sites `-3, 0` and a phase on `3`, all in `P_0`.
fn inner_unitary(l: &SiteIndexMap) -> Result<CMat, CliError> {
    let idx: Vec<usize> = [-3i64, 0, 3]
        .iter()
        .map(|&x| l.index_of(&[x]).ok_or_else(|| invalid("compress needs --R of at least 3")))
        .collect::<Result<_, _>>()?;
    let mut u = linalg::eye(l.len());
    let (c, s) = (0.6, 0.8);
    u[(idx[0], idx[0])] = c64::new(c, 0.0);
    u[(idx[0], idx[1])] = c64::new(-s, 0.0);
    u[(idx[1], idx[0])] = c64::new(s, 0.0);
    u[(idx[1], idx[1])] = c64::new(c, 0.0);
    u[(idx[2], idx[2])] = c64::new(0.0, 1.0);
    Ok(u)
}

struct Check {
    name: &'static str,
    value: f64,
    tol: f64,
    pass: bool,
    note: String,
}

fn check(name: &'static str, value: f64, tol: f64, note: String) -> Check {
    Check { name, value, tol, pass: value <= tol, note }
}

/// Fast self-checks, plus a snapshot re-check when `--snapshot` is given.
pub fn verify(cfg: &RunConfig) -> Result<(), CliError> {
    let mut checks = Vec::new();

    let mut all = true;
    for d in 1..=8 {
        let rep = verify_clifford(&complex_irrep(d), 0.0);
        all &= rep.pass;
    }
    for (p, q) in REAL_SIGNATURES {
        let rep = verify_clifford(&real_rep(p, q)?, 0.0);
        all &= rep.pass;
    }
    checks.push(Check { name: "clifford relations", value: if all { 0.0 } else { 1.0 }, tol: 0.0, pass: all, note: "complex d = 1..8 and real signatures".into() });

    let l = ball(1, 30.0, 2)?;
    let h = ssh(&l, 0.0, 1.0, Disorder::none())?;
    let rep = odd_index_report(&chiral_flatten_completed(&h, cfg.tolerances.chiral)?.0, IndexOptions::default())?;
    let dev = (rep.raw - 1.0).abs();
    checks.push(check("ssh winding", dev, cfg.tolerances.theta_int, format!("value {} at R = 30", rep.value)));

    let (p, _) = half_plane_projection(&ball(2, 10.0, 1)?)?;
    let rep = even_index_report(&p, IndexOptions::default())?;
    checks.push(check("half-plane index", rep.raw.abs(), 1e-12, format!("value {}", rep.value)));

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let dim = rng.gen_range(8..=32);
        let npairs = rng.gen_range(1..=4);
        let (a, pairs, eps) = random_instance(&mut rng, dim, npairs)?;
        let res = decouple(&a, &pairs, eps)?;
        let series = inclusion_exclusion_series(&a, &pairs)?;
        worst = worst.max(linalg::dist(res.b.as_ref(), (&a - &series).as_ref())).max(res.max_certificate());
    }
    checks.push(check("decoupling vs series", worst, 1e-12, format!("20 instances, seed {}", cfg.seed)));

    let l = even_line(10.0)?;
    let e = dimer_operator(&l, 1, &dimer_partition(&l)).e;
    let psi = diii_symmetrize(&e, 1e-8)?;
    checks.push(check("diii symmetrization fixes E", psi.dist(&e), 0.0, String::new()));

    if let Some(path) = &cfg.snapshot {
        let snap = read_snapshot(path)?;
        let op = snap.to_operator()?;
        let back = Snapshot::from_operator(&op, snap.meta.clone());
        let same = back.entries == snap.entries;
        checks.push(Check { name: "snapshot round trip", value: if same { 0.0 } else { 1.0 }, tol: 0.0, pass: same, note: path.display().to_string() });
        let herm = linalg::dist(op.mat().as_ref(), linalg::adj(op.mat().as_ref()).as_ref());
        checks.push(check("snapshot hermiticity", herm, cfg.tolerances.sym, String::new()));
        if let Some(c) = snap.meta.get("class").and_then(Value::as_str) {
            let class: AZClass = c.parse()?;
            let r = check_constraints(&op, &canonical_symmetry_ops(class, op.fiber())?, cfg.tolerances.sym);
            checks.push(check("snapshot class constraints", r.max(), cfg.tolerances.sym, format!("class {class}")));
        }
    }

    let failed: Vec<&str> = checks.iter().filter(|c| !c.pass).map(|c| c.name).collect();
    for c in &checks {
        println!("{} {} ({:.3e}, tol {:.1e}) {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.value, c.tol, c.note);
    }
    let rows: Vec<Value> = checks
        .iter()
        .map(|c| json!({ "name": c.name, "value": c.value, "tol": c.tol, "pass": c.pass, "note": c.note }))
        .collect();
    let status = if failed.is_empty() { "ok" } else { "failed" };
    let mut out = Outputs::new();
    out.json(cfg.out_path("verify.json"), &envelope(cfg, status, json!({ "checks": rows })))?;
    out.announce();
    if !failed.is_empty() {
        return Err(CliError::Certification(failed.join(", ")));
    }
    Ok(())
}
