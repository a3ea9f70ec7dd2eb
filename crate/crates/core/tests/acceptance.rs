//! Acceptance gate: nine criteria, each printed as one PASS/FAIL line.

use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use topoidx::clifford::{complex_irrep, real_rep, verify_clifford, REAL_SIGNATURES};
use topoidx::homotopy::decouple::random_instance;
use topoidx::homotopy::{
    decouple, diii_pinning, diii_rank_one_repair, diii_residual, diii_symmetrize, dimer_operator, e_to_minus_e_path,
    flatten_path, inclusion_exclusion_series, non_collinearity, pinning, CertSpec, Path, PathKind, PinOptions, Stage,
};
use topoidx::invariants::{even_index, even_index_report, index_convergence, odd_index, IndexOptions, IndexReport};
use topoidx::lattice::{dimer_partition, SiteIndexMap};
use topoidx::linalg::{self, c64, CMat};
use topoidx::locality::{bulk_nontriviality, redimerize, Redimerization, THETA_NT};
use topoidx::models::{half_plane_projection, qwz, ssh, Disorder, ModelKind, ModelSpec};
use topoidx::operator::{fermi_projection, polar_unitary, sign_flatten, OperatorMatrix};
use topoidx::symmetry::chiral_flatten_completed;
use topoidx::Error;

const TAU_GAP: f64 = 1e-6;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn ball(d: usize, r: f64, fiber: usize) -> Arc<SiteIndexMap> {
    Arc::new(SiteIndexMap::ball(d, r, fiber).unwrap())
}

fn qwz_projection(r: f64, m: f64, disorder: Disorder) -> OperatorMatrix {
    let h = qwz(&ball(2, r, 2), m, disorder).unwrap();
    fermi_projection(&h, TAU_GAP).unwrap()
}

fn ssh_unitary(r: f64, t1: f64, t2: f64) -> OperatorMatrix {
    let h = ssh(&ball(1, r, 2), t1, t2, Disorder::none()).unwrap();
    chiral_flatten_completed(&h, 1e-10).unwrap().0
}

fn has_table(rep: &IndexReport) -> bool {
    rep.certified && rep.table.len() >= 2
}

fn clifford_exactness() -> Outcome {
    let t0 = Instant::now();
    let mut count = 0;
    for d in 1..=8 {
        let rep = verify_clifford(&complex_irrep(d), 0.0);
        ensure(rep.pass, || format!("complex d={d}: {rep:?}"))?;
        count += 1;
    }
    for (p, q) in REAL_SIGNATURES {
        let rep = verify_clifford(&real_rep(p, q).map_err(|e| e.to_string())?, 0.0);
        ensure(rep.pass, || format!("real ({p},{q}): {rep:?}"))?;
        count += 1;
    }
    let el = t0.elapsed();
    ensure(el < Duration::from_secs(1), || format!("took {el:?}"))?;
    Ok(format!("{count} representations exact, {el:.2?}"))
}

fn chern_index() -> Outcome {
    let t0 = Instant::now();
    let mut notes = Vec::new();
    for m in [-1.0, 1.0, 3.0] {
        let oracle = ModelSpec::new(ModelKind::Qwz, &[("m", m)]).oracle(64).map_err(|e| e.to_string())?;
        for r in [8.0, 12.0, 16.0, 20.0] {
            let rep = even_index_report(&qwz_projection(r, m, Disorder::none()), IndexOptions::default())
                .map_err(|e| e.to_string())?;
            ensure(rep.value == oracle.value, || format!("m={m} R={r}: {} vs oracle {}", rep.raw, oracle.value))?;
            if r == 20.0 {
                ensure(rep.residual <= 0.05 && has_table(&rep), || format!("m={m} R=20: {rep:?}"))?;
                notes.push(format!("m={m}: {} (res {:.1e})", rep.value, rep.residual));
            }
        }
    }
    let el = t0.elapsed();
    ensure(el < Duration::from_secs(120), || format!("took {el:?}"))?;
    Ok(format!("{}, {el:.1?}", notes.join(", ")))
}

fn winding_index() -> Outcome {
    let t0 = Instant::now();
    let mut notes = Vec::new();
    for (t1, t2) in [(1.0, 0.0), (0.0, 1.0)] {
        let oracle = ModelSpec::new(ModelKind::Ssh, &[("t1", t1), ("t2", t2)]).oracle(64).map_err(|e| e.to_string())?;
        let rep = odd_index(&ssh_unitary(40.0, t1, t2), IndexOptions::default()).map_err(|e| e.to_string())?;
        ensure(rep.value == oracle.value && rep.residual <= 0.02 && has_table(&rep), || {
            format!("({t1},{t2}): {rep:?} vs oracle {}", oracle.value)
        })?;
        notes.push(format!("({t1},{t2}) -> {}", rep.value));
    }
    let el = t0.elapsed();
    ensure(el < Duration::from_secs(30), || format!("took {el:?}"))?;
    Ok(format!("{}, {el:.1?}", notes.join(", ")))
}

fn half_plane() -> Outcome {
    let l = ball(2, 12.0, 1);
    let (p1, p2) = half_plane_projection(&l).map_err(|e| e.to_string())?;
    let mut witnesses = 0;
    for p in [&p1, &p2] {
        let rep = even_index(p, IndexOptions::default()).map_err(|e| e.to_string())?;
        ensure(rep.value == 0 && rep.raw.abs() < 1e-12, || format!("index {rep:?}"))?;
        let bulk = bulk_nontriviality(p, 1, &[4.0, 6.0, 8.0], THETA_NT);
        ensure(!bulk.nontrivial, || "bulk non-triviality passed".into())?;
        ensure(!bulk.zero_witnesses.is_empty(), || "no exact-zero witness".into())?;
        for w in &bulk.zero_witnesses {
            let cube = bulk.cubes.iter().find(|c| c.cube == w.cube).unwrap();
            let k = bulk.radii.iter().position(|&r| r == w.radius).unwrap();
            let v = if w.side == "P" { cube.p[k] } else { cube.p_perp[k] };
            ensure(v == 0.0, || format!("witness {w:?} has mass {v}"))?;
        }
        witnesses += bulk.zero_witnesses.len();
    }
    Ok(format!("both indices 0, {witnesses} exact-zero witnesses"))
}

fn decoupling() -> Outcome {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst_series: f64 = 0.0;
    let mut worst_zero: f64 = 0.0;
    for i in 0..100 {
        let dim = rng.gen_range(8..=64);
        let npairs = rng.gen_range(1..=6);
        let (a, pairs, eps) = random_instance(&mut rng, dim, npairs).map_err(|e| e.to_string())?;
        let res = decouple(&a, &pairs, eps).map_err(|e| format!("instance {i}: {e}"))?;
        let series = inclusion_exclusion_series(&a, &pairs).map_err(|e| e.to_string())?;
        let brute = &a - &series;
        let diff = linalg::dist(res.b.as_ref(), brute.as_ref());
        ensure(res.max_certificate() <= 1e-12, || format!("instance {i}: certificate {}", res.max_certificate()))?;
        ensure(res.distance <= eps, || format!("instance {i}: ‖A−B‖ = {} > ε = {eps}", res.distance))?;
        ensure(diff <= 1e-12, || format!("instance {i}: series mismatch {diff:e}"))?;
        worst_series = worst_series.max(diff);
        worst_zero = worst_zero.max(res.max_certificate());
    }
    let el = t0.elapsed();
    ensure(el < Duration::from_secs(60), || format!("took {el:?}"))?;
    Ok(format!("100 instances, max zero {worst_zero:.1e}, max series gap {worst_series:.1e}, {el:.1?}"))
}

fn even_line(r: i64) -> Arc<SiteIndexMap> {
    Arc::new(SiteIndexMap::from_sites(1, (-r..r).map(|x| vec![x]).collect(), 1).unwrap())
}

/// `R E Rᵀ` with `R` the Cayley transform of a random nearest-neighbour
/// antisymmetric generator.
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

fn diii_calculus() -> Outcome {
    let l = even_line(20);
    let part = dimer_partition(&l);
    let e = dimer_operator(&l, 1, &part).e;
    let n = e.dim();
    let psi = diii_symmetrize(&e, 1e-8).map_err(|err| err.to_string())?;
    ensure(psi.dist(&e) == 0.0, || format!("Ψ(E) − E = {:e}", psi.dist(&e)))?;

    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst_sym: f64 = 0.0;
    for i in 0..50 {
        let pert = CMat::from_fn(n, n, |_, _| c64::new(0.01 * rng.gen_range(-1.0..1.0), 0.0));
        let a = e.with_mat(e.mat() + &pert);
        let s = diii_symmetrize(&a, 1e-8).map_err(|err| format!("instance {i}: {err}"))?;
        let r = diii_residual(s.mat());
        ensure(r <= 1e-9, || format!("instance {i}: membership {r:e}"))?;
        worst_sym = worst_sym.max(r);
    }

    // repair on a banded perturbation at 8 well-separated centers
    let pert = CMat::from_fn(n, n, |i, j| {
        if i.abs_diff(j) <= 1 {
            c64::new(0.02 * rng.gen_range(-1.0..1.0), 0.02 * rng.gen_range(-1.0..1.0))
        } else {
            c64::new(0.0, 0.0)
        }
    });
    let g = e.with_mat(e.mat() + &pert);
    let centers: Vec<usize> = part.pairs.iter().step_by(2).take(8).map(|p| p.0).collect();
    let rep = diii_rank_one_repair(&g, &centers, 0.5).map_err(|err| err.to_string())?;
    let worst_repair = rep.residuals.iter().copied().fold(0.0, f64::max);
    ensure(rep.residuals.len() == 8 && worst_repair <= 1e-10, || format!("repair residuals {:?}", rep.residuals))?;
    ensure(rep.eta_overlap == 0.0, || format!("η overlap {}", rep.eta_overlap))?;

    // non-collinearity on DIII inputs, and the repair inside the pinning pipeline
    let mut worst_ratio = f64::INFINITY;
    let mut pipeline_repair: f64 = 0.0;
    for seed in 0..4 {
        let x = rotated_dimer(&l, &e, 0.15, seed);
        let bound = 1.0 / x.norm();
        for site in 0..l.len() {
            let eta = non_collinearity(&x, site);
            ensure(eta >= bound, || format!("seed {seed} site {site}: {eta} < {bound}"))?;
            worst_ratio = worst_ratio.min(eta / bound);
        }
        let pinned = diii_pinning(&x, &part, &PinOptions { grid: 5, ..Default::default() }).map_err(|err| err.to_string())?;
        let w = pinned.repair.residuals.iter().copied().fold(0.0, f64::max);
        ensure(w <= 1e-10, || format!("seed {seed}: pipeline repair {w:e}"))?;
        pipeline_repair = pipeline_repair.max(w);
    }

    let flip = e_to_minus_e_path(&l, 1, &part, 33).map_err(|err| err.to_string())?;
    let flip_res = flip.points.iter().map(|p| diii_residual(p.mat())).fold(0.0, f64::max);
    ensure(flip_res <= 4.0 * f64::EPSILON, || format!("E ⇝ −E membership {flip_res:e}"))?;
    ensure(flip.end().dist(&e.scale(c64::new(-1.0, 0.0))) < 1e-15, || "endpoint is not −E".into())?;
    Ok(format!(
        "Ψ(E)=E, 50 symmetrizations ≤ {worst_sym:.1e}, repair ≤ {worst_repair:.1e} (pipeline {pipeline_repair:.1e}), \
         min η·‖A‖ = {worst_ratio:.2}, flip membership {flip_res:.1e}"
    ))
}

fn index_along(points: &[&OperatorMatrix], f: impl Fn(&OperatorMatrix) -> Result<IndexReport, Error>) -> Result<Vec<i64>, String> {
    points
        .iter()
        .map(|p| f(p).map(|r| r.value).map_err(|e| e.to_string()))
        .collect()
}

fn constant(values: &[i64], want: i64) -> bool {
    values.iter().all(|&v| v == want)
}

fn index_invariance() -> Outcome {
    let mut notes = Vec::new();
    let mut failures = Vec::new();
    let opts = IndexOptions::default();

    // class A: flatten QWZ(m = 1)
    let h = qwz(&ball(2, 16.0, 2), 1.0, Disorder::none()).map_err(|e| e.to_string())?;
    let spec = CertSpec::new(PathKind::Hermitian, 16.0);
    let (path, certified) = match flatten_path(&h, 11, spec.clone()) {
        Ok(p) => (p, Ok(())),
        Err(e) => {
            // rebuild without the verdict gate to still report the index along it
            let s = sign_flatten(&h, TAU_GAP).map_err(|e| e.to_string())?;
            let t: Vec<f64> = (0..11).map(|i| i as f64 / 10.0).collect();
            let points = t
                .iter()
                .map(|&t| h.with_mat(linalg::add_scaled(linalg::scale(h.mat().as_ref(), c64::new(1.0 - t, 0.0)).as_ref(), s.mat().as_ref(), c64::new(t, 0.0))))
                .collect();
            let p = Path::from_stages(vec![Stage { name: "flatten".into(), t, points }], spec).map_err(|e| e.to_string())?;
            (p, Err(e.to_string()))
        }
    };
    let pts: Vec<&OperatorMatrix> = path.checkpoints(11).into_iter().map(|i| &path.points[i]).collect();
    let v = index_along(&pts, |p| even_index(&fermi_projection(p, TAU_GAP)?, opts))?;
    if pts.len() != 11 || !constant(&v, -1) {
        failures.push(format!("QWZ flatten indices {v:?}"));
    }
    match certified {
        Ok(()) => notes.push("QWZ flatten −1".to_string()),
        Err(e) => failures.push(format!("QWZ(m=1) flatten path uncertified ({e}); index along its 11 checkpoints {v:?}")),
    }

    // class AIII: flatten SSH, then pin the flattened unitaries
    let hs = ssh(&ball(1, 40.0, 2), 1.0, 0.3, Disorder::none()).map_err(|e| e.to_string())?;
    let path = flatten_path(&hs, 11, CertSpec::new(PathKind::Hermitian, 40.0)).map_err(|e| e.to_string())?;
    let pts: Vec<&OperatorMatrix> = path.checkpoints(11).into_iter().map(|i| &path.points[i]).collect();
    let v = index_along(&pts, |p| odd_index(&chiral_flatten_completed(p, 1e-10)?.0, opts))?;
    if pts.len() == 11 && constant(&v, 0) {
        notes.push("SSH flatten 0".to_string());
    } else {
        failures.push(format!("SSH flatten: {v:?}"));
    }

    for (t1, t2, want) in [(1.0, 0.4, 0), (0.4, 1.0, 1)] {
        let u = ssh_unitary(40.0, t1, t2);
        let pinned = pinning(&u, &PinOptions::default()).map_err(|e| format!("pin ({t1},{t2}): {e}"))?;
        let path = &pinned.path;
        if !path.report.verdict {
            failures.push(format!("pin ({t1},{t2}) not certified: {:?}", path.report.failures));
        }
        let pts: Vec<&OperatorMatrix> = path.checkpoints(11).into_iter().map(|i| &path.points[i]).collect();
        let v = index_along(&pts, |p| odd_index(&polar_unitary(p, 1e-8)?, opts))?;
        if pts.len() == 11 && constant(&v, want) {
            notes.push(format!("SSH({t1},{t2}) pin {want}"));
        } else {
            failures.push(format!("pin ({t1},{t2}): {v:?}"));
        }
    }

    // disorder
    let mut seeds = Vec::new();
    for seed in 0..5 {
        let p = qwz_projection(16.0, 1.0, Disorder::new(0.5, seed));
        match even_index(&p, opts) {
            Ok(rep) if rep.value == -1 => seeds.push(rep.raw),
            other => failures.push(format!("disorder seed {seed}: {other:?}")),
        }
    }
    if seeds.len() == 5 {
        let lo = seeds.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = seeds.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        notes.push(format!("5 disorder seeds −1 (raw {lo:.3}..{hi:.3})"));
    }
    if failures.is_empty() {
        Ok(notes.join(", "))
    } else {
        Err(format!("{}; passing legs: {}", failures.join("; "), notes.join(", ")))
    }
}

fn sorted_eigs(a: &OperatorMatrix) -> Vec<f64> {
    linalg::herm_eigvals(a.mat().as_ref()).unwrap()
}

fn redimerization() -> Outcome {
    let mut notes = Vec::new();
    for (name, map, rc) in [("dominoes", Redimerization::dominoes(), 11.0), ("L-shapes", Redimerization::l_shapes(), 7.0)] {
        let (fine, _) = map.lattices(rc, 2).map_err(|e| e.to_string())?;
        let h = qwz(&fine, 1.0, Disorder::none()).map_err(|e| e.to_string())?;
        let p = fermi_projection(&h, TAU_GAP).map_err(|e| e.to_string())?;
        let radii = [2.0, 4.0, 6.0];
        let hr = redimerize(&h, &map, rc, &radii).map_err(|e| e.to_string())?;
        let pr = redimerize(&p, &map, rc, &radii).map_err(|e| e.to_string())?;
        let spec_gap = sorted_eigs(&h).iter().zip(sorted_eigs(&hr.operator)).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        ensure(spec_gap <= 1e-10, || format!("{name}: spectra differ by {spec_gap:e}"))?;
        let pr_direct = fermi_projection(&hr.operator, TAU_GAP).map_err(|e| e.to_string())?;
        let cov = pr_direct.dist(&pr.operator);
        ensure(cov <= 1e-10, || format!("{name}: functional calculus covariance {cov:e}"))?;
        let rep = even_index(&pr.operator, IndexOptions::default()).map_err(|e| format!("{name}: {e}"))?;
        ensure(rep.value == -1, || format!("{name}: coarse index {rep:?}"))?;
        ensure(hr.defect.monotone && hr.defect.radii.len() >= 3, || format!("{name}: defect {:?}", hr.defect))?;
        notes.push(format!("{name}: spectra {spec_gap:.1e}, index −1 (raw {:.3}), defects {:?}", rep.raw, hr.defect.values.iter().map(|v| format!("{v:.3}")).collect::<Vec<_>>()));
    }
    Ok(notes.join("; "))
}

fn convergence_discipline() -> Outcome {
    let opts = IndexOptions::default();
    for r in [2.0, 3.0] {
        let s = odd_index(&ssh_unitary(r, 0.0, 1.0), opts);
        ensure(matches!(s, Err(Error::NotConverged(_))), || format!("SSH R={r}: {s:?}"))?;
        let q = even_index(&qwz_projection(r, 1.0, Disorder::none()), opts);
        ensure(matches!(q, Err(Error::NotConverged(_))), || format!("QWZ R={r}: {q:?}"))?;
    }
    let c = index_convergence(&[2.0, 3.0], opts.theta_int, |r| odd_index(&ssh_unitary(r, 0.0, 1.0), opts));
    ensure(matches!(c, Err(Error::NotConverged(_))), || format!("nested R ≤ 3: {c:?}"))?;
    let ok = index_convergence(&[16.0, 20.0, 24.0], opts.theta_int, |r| odd_index(&ssh_unitary(r, 0.0, 1.0), opts))
        .map_err(|e| e.to_string())?;
    ensure(ok.value == 1 && has_table(&ok) && ok.table.len() == 3, || format!("{ok:?}"))?;
    Ok("R ≤ 3 refused with NotConverged; resolved runs carry a stabilized table".into())
}

#[test]
fn acceptance_criteria() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("1 clifford exactness", clifford_exactness),
        ("2 chern index", chern_index),
        ("3 winding index", winding_index),
        ("4 half-plane counterexample", half_plane),
        ("5 decoupling", decoupling),
        ("6 DIII calculus", diii_calculus),
        ("7 index invariance", index_invariance),
        ("8 redimerization covariance", redimerization),
        ("9 convergence discipline", convergence_discipline),
    ];
    let mut failed = Vec::new();
    for (name, f) in criteria {
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        // written straight to stdout so the lines survive output capture
        let line = match &outcome {
            Ok(msg) => format!("criterion {name}: PASS ({msg})\n"),
            Err(msg) => format!("criterion {name}: FAIL ({msg})\n"),
        };
        let mut out = std::io::stdout().lock();
        out.write_all(line.as_bytes()).unwrap();
        out.flush().unwrap();
        if outcome.is_err() {
            failed.push(name);
        }
    }
    assert!(failed.is_empty(), "failed: {failed:?}");
}
