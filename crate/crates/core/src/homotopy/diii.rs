//! The DIII space `{A invertible : A^{-1} = −Ā}`: dimer operator,
//! symmetrization, local rank-one repair, pinning and the path `E ⇝ −E`.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::lattice::{DimerPartition, SiteIndexMap};
use crate::linalg::{self, c64, CMat};
use crate::operator::{inv_sqrt_mat, rows_of, OperatorMatrix};

use super::centers::{localized_centers_with, CenterOptions, LocalizedCenters};
use super::isometry::greedy_matching;
use super::path::{diii_residual, sample_stage, CertSpec, Constraint, Path, PathKind, PathTolerances, Stage};
use super::pinning::{assemble, LocalInvertible, PinOptions};

const ZERO: c64 = c64 { re: 0.0, im: 0.0 };
const ONE: c64 = c64 { re: 1.0, im: 0.0 };

#[derive(Debug, Clone)]
pub struct DimerOperator {
    pub e: OperatorMatrix,
    /// sites without a partner, where `E` is the identity
    pub leftover: Vec<usize>,
}

/// `E δ_x = δ_y`, `E δ_y = −δ_x` on every pair, tensored with `1_N`.
pub fn dimer_operator(lattice: &Arc<SiteIndexMap>, fiber: usize, partition: &DimerPartition) -> DimerOperator {
    let n = lattice.len() * fiber;
    let mut m = CMat::zeros(n, n);
    for &(x, y) in &partition.pairs {
        for i in 0..fiber {
            m[(y * fiber + i, x * fiber + i)] = ONE;
            m[(x * fiber + i, y * fiber + i)] = -ONE;
        }
    }
    for &s in &partition.leftover {
        for i in 0..fiber {
            m[(s * fiber + i, s * fiber + i)] = ONE;
        }
    }
    DimerOperator {
        e: OperatorMatrix::new(lattice.clone(), fiber, m).expect("square by construction"),
        leftover: partition.leftover.clone(),
    }
}

/// `Ψ(A) = A (−ĀA)^{−1/2}` with the principal square root.
pub fn diii_symmetrize(a: &OperatorMatrix, tau_branch: f64) -> Result<OperatorMatrix> {
    Ok(a.with_mat(symmetrize_mat(a.mat(), tau_branch)?))
}

fn symmetrize_mat(a: &CMat, tau_branch: f64) -> Result<CMat> {
    let b = linalg::scale((linalg::conj(a.as_ref()) * a).as_ref(), -ONE);
    Ok(a * inv_sqrt_mat(&b, tau_branch)?)
}

/// Smallest singular value of `Λ_x^⊥ A Λ_x`; the distance of `Aδ_x` from
/// `ℂδ_x` when the fiber is one.
pub fn non_collinearity(a: &OperatorMatrix, x: usize) -> f64 {
    let cols = a.rows_of(&[x]);
    let rows: Vec<usize> = (0..a.dim()).filter(|r| !cols.contains(r)).collect();
    linalg::min_singular_value(linalg::submatrix(a.mat().as_ref(), &rows, &cols).as_ref())
}

#[derive(Debug, Clone, Serialize)]
pub struct Repair {
    #[serde(skip)]
    pub t: OperatorMatrix,
    /// `‖−TT̄Λ_x − Λ_x‖` per center
    pub residuals: Vec<f64>,
    /// `‖r_x‖` per center
    pub defects: Vec<f64>,
    /// smallest singular value of `η_x` per center
    pub eta: Vec<f64>,
    /// `max_{j≠k} ‖η_j* η_k‖`
    pub eta_overlap: f64,
    /// `‖Σ K_x‖`
    pub correction: f64,
}

/// `T = G + Σ_x K_x`, `K_x = −r_x (η_x*η_x)^{-1} η_x*` with
/// `r_x = (GḠ + 1)Λ_x` and `η_x = Λ_x^⊥ ḠΛ_x`.
pub fn diii_rank_one_repair(g: &OperatorMatrix, centers: &[usize], eta_bound: f64) -> Result<Repair> {
    let n = g.dim();
    let gm = g.mat();
    let gbar = linalg::conj(gm.as_ref());
    let defect = linalg::add_scaled((gm * &gbar).as_ref(), linalg::eye(n).as_ref(), ONE);
    let mut k_total = CMat::zeros(n, n);
    let mut etas: Vec<CMat> = Vec::new();
    let (mut defects, mut eta_min) = (Vec::new(), Vec::new());
    for &x in centers {
        let cols = g.rows_of(&[x]);
        let r = linalg::submatrix(defect.as_ref(), &(0..n).collect::<Vec<_>>(), &cols);
        let mut eta = linalg::submatrix(gbar.as_ref(), &(0..n).collect::<Vec<_>>(), &cols);
        for &c in &cols {
            for j in 0..eta.ncols() {
                eta[(c, j)] = ZERO;
            }
        }
        let s = linalg::min_singular_value(eta.as_ref());
        if !(s >= eta_bound) {
            return Err(Error::CollinearityFailure { site: x, eta: s, bound: eta_bound });
        }
        let gram = eta.adjoint() * &eta;
        let k = linalg::scale((&r * linalg::inverse(gram.as_ref()) * eta.adjoint()).as_ref(), -ONE);
        k_total += &k;
        defects.push(linalg::opnorm(r.as_ref()));
        eta_min.push(s);
        etas.push(eta);
    }
    let t = gm + &k_total;
    let tt = linalg::add_scaled((&t * linalg::conj(t.as_ref())).as_ref(), linalg::eye(n).as_ref(), ONE);
    let residuals = centers
        .iter()
        .map(|&x| linalg::opnorm(linalg::submatrix(tt.as_ref(), &(0..n).collect::<Vec<_>>(), &g.rows_of(&[x])).as_ref()))
        .collect();
    let mut eta_overlap: f64 = 0.0;
    for i in 0..etas.len() {
        for j in i + 1..etas.len() {
            eta_overlap = eta_overlap.max(linalg::opnorm((etas[i].adjoint() * &etas[j]).as_ref()));
        }
    }
    Ok(Repair {
        t: g.with_mat(t),
        residuals,
        defects,
        eta: eta_min,
        eta_overlap,
        correction: linalg::opnorm(k_total.as_ref()),
    })
}

fn pair_closed(sites: &[usize], partner: &[Option<usize>]) -> Result<()> {
    let mut inset = vec![false; partner.len()];
    for &s in sites {
        inset[s] = true;
    }
    for &s in sites {
        match partner[s] {
            Some(p) if inset[p] => {}
            Some(p) => return Err(Error::NotDimerClosed(format!("site {s} is in the set, its partner {p} is not"))),
            None => return Err(Error::NotDimerClosed(format!("site {s} has no partner"))),
        }
    }
    Ok(())
}

/// Real partial isometry from `Λ_P` onto `Λ_Q` sending pairs to pairs,
/// `V δ_x = δ_x̃`, `V δ_y = δ_ỹ`, so that `VE = EV`.
pub fn dimer_isometry(
    lattice: &Arc<SiteIndexMap>,
    fiber: usize,
    partition: &DimerPartition,
    p: &[usize],
    q: &[usize],
) -> Result<OperatorMatrix> {
    let partner = partition.partner_map(lattice.len());
    pair_closed(p, &partner)?;
    pair_closed(q, &partner)?;
    let firsts = |s: &[usize]| -> Vec<usize> {
        let set: std::collections::HashSet<usize> = s.iter().copied().collect();
        partition.pairs.iter().filter(|(x, _)| set.contains(x)).map(|&(x, _)| x).collect()
    };
    let (map, _, _) = greedy_matching(lattice, &firsts(p), &firsts(q));
    let n = lattice.len() * fiber;
    let mut m = CMat::zeros(n, n);
    for (xs, xt) in map {
        let (ys, yt) = (partner[xs].unwrap(), partner[xt].unwrap());
        for i in 0..fiber {
            m[(xt * fiber + i, xs * fiber + i)] = ONE;
            m[(yt * fiber + i, ys * fiber + i)] = ONE;
        }
    }
    OperatorMatrix::new(lattice.clone(), fiber, m)
}

/// `A_t = e^{2it} E = V_t E V̄_t^{-1}` with `V_t = e^{it}`, `t ∈ [0, π/2]`.
pub fn e_to_minus_e_path(lattice: &Arc<SiteIndexMap>, fiber: usize, partition: &DimerPartition, grid: usize) -> Result<Path> {
    if !partition.leftover.is_empty() {
        return Err(Error::NotDimerClosed(format!("{} unpaired sites", partition.leftover.len())));
    }
    let e = dimer_operator(lattice, fiber, partition).e;
    let grid = grid.max(2);
    let t: Vec<f64> = (0..grid).map(|i| std::f64::consts::FRAC_PI_2 * i as f64 / (grid - 1) as f64).collect();
    let points = t.iter().map(|&s| e.scale(c64::from_polar(1.0, 2.0 * s))).collect();
    let spec = CertSpec::new(PathKind::Invertible, lattice.radius())
        .with(Constraint::Diii)
        .with(Constraint::Unitary)
        .tolerances(PathTolerances { sym: 1e-10, ..Default::default() });
    Path::from_stages(vec![Stage { name: "phase".into(), t, points }], spec)
}

#[derive(Debug, Clone)]
pub struct DiiiPinned {
    pub s: OperatorMatrix,
    /// `P_out`: sites off the pinned pairs; `S = P_out S P_out + P_out^⊥ E P_out^⊥`
    pub p_sites: Vec<usize>,
    pub pinned: Vec<usize>,
    pub centers: LocalizedCenters,
    pub repair: Repair,
    pub path: Path,
    /// `‖P_out^⊥ S P_out^⊥ − P_out^⊥ E P_out^⊥‖`
    pub pinned_block_residual: f64,
    /// `‖P_out S P_out^⊥‖ + ‖P_out^⊥ S P_out‖` at the end
    pub off_diagonal: f64,
    /// largest `‖AĀ + 1‖` along the path
    pub max_membership: f64,
}

pub fn diii_pinning(x: &OperatorMatrix, partition: &DimerPartition, opts: &PinOptions) -> Result<DiiiPinned> {
    if !partition.leftover.is_empty() {
        return Err(Error::NotDimerClosed(format!("{} unpaired sites", partition.leftover.len())));
    }
    let l = x.lattice_arc();
    let n = x.dim();
    let nf = x.fiber();
    let membership0 = diii_residual(x.mat());
    if membership0 > 1e-8 {
        return Err(Error::InvalidArgument(format!("input is off the DIII space: ‖XX̄ + 1‖ = {membership0:.3e}")));
    }
    let e = dimer_operator(&l, nf, partition).e;
    let mut copts = CenterOptions::new(opts.eps);
    copts.generation = opts.generation;
    copts.wanted = opts.wanted;
    copts.dimers = Some(partition.clone());
    let centers = localized_centers_with(x, &copts)?;
    let eta_bound = 1.0 / (2.0 * x.norm());
    let repair = diii_rank_one_repair(&centers.b, &centers.family.centers, eta_bound)?;
    let tm = repair.t.mat().clone();
    let xm = x.mat().clone();
    let tau = 1e-8;
    let psi_t = symmetrize_mat(&tm, tau)?;

    // per island: V δ_x = δ_x, V Tδ_x = δ_y
    let mut locals = Vec::new();
    for (k, &cx) in centers.family.centers.iter().enumerate() {
        let cy = centers.family.partners[k].expect("dimer mode");
        let rows = x.rows_of(&centers.family.islands[k]);
        let xc = x.rows_of(&[cx]);
        let yc = x.rows_of(&[cy]);
        let tcol = linalg::submatrix(tm.as_ref(), &rows, &xc);
        let unit = |target: &[usize]| {
            CMat::from_fn(rows.len(), nf, |i, j| if rows[i] == target[j] { ONE } else { ZERO })
        };
        let c = linalg::hcat(unit(&xc).as_ref(), tcol.as_ref());
        let ev = linalg::hcat(unit(&xc).as_ref(), unit(&yc).as_ref());
        let loc = LocalInvertible::new(&c, &ev)?;
        let mut basis = CMat::zeros(n, loc.basis.ncols());
        for (i, &r) in rows.iter().enumerate() {
            for j in 0..loc.basis.ncols() {
                basis[(r, j)] = loc.basis[(i, j)];
            }
        }
        locals.push((basis, loc));
    }
    let congruence = |f: &dyn Fn(&LocalInvertible) -> CMat| -> CMat {
        let fwd: Vec<(&CMat, CMat)> = locals.iter().map(|(b, loc)| (b, f(loc))).collect();
        let inv: Vec<(&CMat, CMat)> = locals.iter().map(|(b, loc)| (b, linalg::inverse(f(loc).as_ref()))).collect();
        let v = assemble(n, &fwd);
        let vinv = assemble(n, &inv);
        &v * &psi_t * linalg::conj(vinv.as_ref())
    };
    let s_pinned = congruence(&|loc| loc.vb.clone());

    let mut is_pinned = vec![false; n];
    let pinned_sites = centers.family.pinned_sites();
    for r in rows_of(&pinned_sites, nf) {
        is_pinned[r] = true;
    }
    let part = |m: &CMat, rp: bool, cp: bool| {
        CMat::from_fn(n, n, |i, j| if is_pinned[i] == rp && is_pinned[j] == cp { m[(i, j)] } else { ZERO })
    };
    let xo = part(&s_pinned, true, false);
    let bo = part(&s_pinned, false, false);
    let nil = &xo * linalg::conj(bo.as_ref());
    let nil_bar = linalg::conj(nil.as_ref());

    let kind = PathKind::Invertible;
    let (grid, depth) = (opts.grid, opts.refine_depth);
    let wrap = |m: CMat| x.with_mat(m);
    let s1 = sample_stage("symmetrized approximation", 0.0, 1.0, grid, kind, depth, |t| {
        let a = linalg::add_scaled(linalg::scale(xm.as_ref(), c64::new(1.0 - t, 0.0)).as_ref(), tm.as_ref(), c64::new(t, 0.0));
        Ok(wrap(symmetrize_mat(&a, tau)?))
    })?;
    let s2 = sample_stage("rotate", 0.0, 1.0, grid, kind, depth, |t| Ok(wrap(congruence(&|loc| loc.rotated(t)))))?;
    let s3 = sample_stage("stretch", 0.0, 1.0, grid, kind, depth, |t| Ok(wrap(congruence(&|loc| loc.stretched(t)))))?;
    let s4 = sample_stage("eliminate", 0.0, 0.5, grid, kind, depth, |t| {
        let w = linalg::eye(n) + linalg::scale(nil.as_ref(), c64::new(t, 0.0));
        let wbar_inv = linalg::eye(n) - linalg::scale(nil_bar.as_ref(), c64::new(t, 0.0));
        Ok(wrap(w * &s_pinned * wbar_inv))
    })?;
    let cert_radius = opts.cert_radius.unwrap_or(l.radius() / 2.0);
    let mut spec = CertSpec::new(kind, l.radius())
        .with(Constraint::Diii)
        .tolerances(PathTolerances { gap: opts.tau_inv, ..Default::default() });
    spec.cert_radius = cert_radius;
    spec.generation = opts.generation;
    let path = Path::from_stages(vec![s1, s2, s3, s4], spec)?;
    let max_membership = path.report.max_residuals.get("diii").copied().unwrap_or(0.0);

    let s = path.end().clone();
    let sm = s.mat();
    let pinned_block_residual = linalg::dist(part(sm, true, true).as_ref(), part(e.mat(), true, true).as_ref());
    let off_diagonal = linalg::opnorm(part(sm, true, false).as_ref()) + linalg::opnorm(part(sm, false, true).as_ref());
    let p_sites: Vec<usize> = {
        let mut c = vec![false; l.len()];
        for &p in &pinned_sites {
            c[p] = true;
        }
        (0..l.len()).filter(|&i| !c[i]).collect()
    };
    Ok(DiiiPinned {
        s,
        p_sites,
        pinned: pinned_sites,
        centers,
        repair,
        path,
        pinned_block_residual,
        off_diagonal,
        max_membership,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::dimer_partition;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Sites `−r..r−1` on a line: an even count, so every site is paired.
    fn even_line(r: i64) -> Arc<SiteIndexMap> {
        Arc::new(SiteIndexMap::from_sites(1, (-r..r).map(|x| vec![x]).collect(), 1).unwrap())
    }

    fn cayley_rotation(l: &SiteIndexMap, strength: f64, seed: u64) -> CMat {
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
        linalg::inverse((&id - &k).as_ref()) * (&id + &k)
    }

    #[test]
    fn single_pair_block() {
        let l = even_line(1);
        let p = dimer_partition(&l);
        assert_eq!(p.pairs.len(), 1);
        let e = dimer_operator(&l, 1, &p).e;
        let (x, y) = p.pairs[0];
        assert_eq!(e.mat()[(y, x)], ONE);
        assert_eq!(e.mat()[(x, y)], -ONE);
        assert_eq!(diii_residual(e.mat()), 0.0);
        assert!(linalg::is_zero((linalg::conj(e.mat().as_ref()) - e.mat()).as_ref()));
    }

    #[test]
    fn symmetrize_fixes_e_and_repairs_perturbation() {
        let l = even_line(6);
        let e = dimer_operator(&l, 1, &dimer_partition(&l)).e;
        let psi = diii_symmetrize(&e, 1e-8).unwrap();
        assert!(psi.dist(&e) < 1e-14);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = e.dim();
        let pert = CMat::from_fn(n, n, |_, _| c64::new(0.01 * rng.gen_range(-1.0..1.0), 0.0));
        let a = e.with_mat(e.mat() + &pert);
        let psi = diii_symmetrize(&a, 1e-8).unwrap();
        assert!(diii_residual(psi.mat()) <= 1e-9);
    }

    #[test]
    fn identity_hits_branch_cut() {
        let l = even_line(2);
        let one = OperatorMatrix::identity(l, 1);
        assert!(matches!(diii_symmetrize(&one, 1e-8), Err(Error::BranchCutHit { .. })));
    }

    #[test]
    fn repair_restores_local_relations() {
        let l = even_line(30);
        let part = dimer_partition(&l);
        let e = dimer_operator(&l, 1, &part).e;
        let unchanged = diii_rank_one_repair(&e, &[part.pairs[3].0], 0.4).unwrap();
        assert!(unchanged.t.dist(&e) == 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = e.dim();
        // banded perturbation so the islands stay disjoint
        let pert = CMat::from_fn(n, n, |i, j| {
            if i.abs_diff(j) <= 1 { c64::new(0.02 * rng.gen_range(-1.0..1.0), 0.02 * rng.gen_range(-1.0..1.0)) } else { ZERO }
        });
        let g = e.with_mat(e.mat() + &pert);
        let centers: Vec<usize> = part.pairs.iter().step_by(3).take(8).map(|p| p.0).collect();
        let r = diii_rank_one_repair(&g, &centers, 0.5).unwrap();
        assert_eq!(r.residuals.len(), 8);
        for res in &r.residuals {
            assert!(*res <= 1e-10, "{res}");
        }
        assert!(r.eta_overlap == 0.0);
    }

    #[test]
    fn collinear_input_rejected() {
        let l = even_line(3);
        let one = OperatorMatrix::identity(l.clone(), 1);
        let c = l.index_of(&[0]).unwrap();
        assert!(matches!(diii_rank_one_repair(&one, &[c], 0.1), Err(Error::CollinearityFailure { .. })));
    }

    #[test]
    fn dimer_isometry_commutes_with_e() {
        let l = even_line(10);
        let part = dimer_partition(&l);
        let e = dimer_operator(&l, 1, &part).e;
        let all = part.paired_sites();
        let v = dimer_isometry(&l, 1, &part, &all, &all).unwrap();
        assert!(linalg::is_zero((v.mat() - linalg::eye(v.dim())).as_ref()));
        let p: Vec<usize> = part.pairs.iter().step_by(2).flat_map(|&(x, y)| [x, y]).collect();
        let q: Vec<usize> = part.pairs.iter().skip(1).step_by(2).flat_map(|&(x, y)| [x, y]).collect();
        let v = dimer_isometry(&l, 1, &part, &p, &q).unwrap();
        let vm = v.mat();
        assert!(linalg::is_zero((vm * e.mat() - e.mat() * vm).as_ref()));
        assert!(linalg::is_zero((linalg::conj(vm.as_ref()) - vm).as_ref()));
        let lq = OperatorMatrix::projector(l.clone(), 1, &q);
        assert!(linalg::is_zero((vm * vm.adjoint() - lq.mat()).as_ref()));
        let broken = vec![part.pairs[0].0];
        assert!(matches!(dimer_isometry(&l, 1, &part, &broken, &q), Err(Error::NotDimerClosed(_))));
    }

    #[test]
    fn e_to_minus_e_stays_in_diii() {
        let l = even_line(8);
        let part = dimer_partition(&l);
        let path = e_to_minus_e_path(&l, 1, &part, 11).unwrap();
        let e = dimer_operator(&l, 1, &part).e;
        assert!(path.end().dist(&e.scale(-ONE)) < 1e-15);
        assert!(path.report.verdict, "{:?}", path.report.failures);
        for p in &path.points {
            assert!(diii_residual(p.mat()) <= 4.0 * f64::EPSILON);
            assert!(super::super::path::unitarity_residual(p.mat()) <= 4.0 * f64::EPSILON);
        }
    }

    #[test]
    fn literal_rotation_leaves_diii_midway() {
        let c = std::f64::consts::FRAC_1_SQRT_2;
        let r = linalg::real_rows(&[&[c, -c], &[c, c]]);
        let e = linalg::real_rows(&[&[0.0, -1.0], &[1.0, 0.0]]);
        let mid = &r * &e * &r;
        assert!((diii_residual(&mid) - 2.0).abs() < 1e-14);
    }

    #[test]
    fn pinning_e_is_trivial() {
        let l = even_line(16);
        let part = dimer_partition(&l);
        let e = dimer_operator(&l, 1, &part).e;
        let r = diii_pinning(&e, &part, &PinOptions { grid: 5, ..Default::default() }).unwrap();
        assert!(r.s.dist(&e) < 1e-13);
        assert!(r.path.points.iter().all(|p| p.dist(&e) < 1e-13));
    }

    #[test]
    fn pinning_rotated_dimer() {
        let l = even_line(24);
        let part = dimer_partition(&l);
        let e = dimer_operator(&l, 1, &part).e;
        let rot = cayley_rotation(&l, 0.15, 2);
        let x = e.with_mat(&rot * e.mat() * rot.transpose());
        assert!(diii_residual(x.mat()) < 1e-12);
        let r = diii_pinning(&x, &part, &PinOptions { grid: 7, ..Default::default() }).unwrap();
        assert!(r.max_membership <= 1e-8, "{}", r.max_membership);
        assert!(r.off_diagonal <= 1e-9, "{}", r.off_diagonal);
        assert!(r.pinned_block_residual <= 1e-8, "{}", r.pinned_block_residual);
        assert!(r.centers.family.len() >= 2);
    }
}
