//! Deforming a local unitary, through invertibles, into one that acts as the
//! identity on a sequence of pinned sites.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::lattice::{certify, ProperSet};
use crate::linalg::{self, c64, CMat};
use crate::operator::OperatorMatrix;

use super::centers::{localized_centers_with, CenterOptions, LocalizedCenters};
use super::path::{require_pass, sample_stage, CertSpec, Path, PathKind, PathTolerances, DEFAULT_GRID};

#[derive(Debug, Clone)]
pub struct PinOptions {
    pub eps: f64,
    /// points per stage
    pub grid: usize,
    pub tau_inv: f64,
    pub generation: u32,
    /// per-cone count required when certifying the returned set
    pub m_min: usize,
    /// defaults to half the lattice radius
    pub cert_radius: Option<f64>,
    pub wanted: Option<usize>,
    pub refine_depth: usize,
}

impl Default for PinOptions {
    fn default() -> Self {
        Self {
            eps: 0.1,
            grid: DEFAULT_GRID,
            tau_inv: 1e-6,
            generation: 1,
            m_min: 1,
            cert_radius: None,
            wanted: None,
            refine_depth: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct BlockResiduals {
    /// `‖P^⊥ W P^⊥ − P^⊥‖`
    pub diagonal: f64,
    /// `‖P W P^⊥‖ + ‖P^⊥ W P‖`
    pub off_diagonal: f64,
}

#[derive(Debug, Clone)]
pub struct Pinned {
    pub w: OperatorMatrix,
    /// `P`: every site except the pinned centers
    pub p_sites: Vec<usize>,
    pub proper: Option<ProperSet>,
    /// why `p_sites` could not be certified, if it could not
    pub proper_error: Option<String>,
    pub centers: LocalizedCenters,
    pub path: Path,
    pub blocks: BlockResiduals,
    /// `‖VG − (P^⊥ + P VG P)(1 + P^⊥ VG P)‖`, with `P^⊥` the centers
    pub factorization_residual: f64,
    /// `‖(1 + N)(1 − N) − 1‖` for the nilpotent leg `N`
    pub nilpotent_residual: f64,
}

/// One island's invertible, stored on the span `B` of `Gδ_x` and `δ_x`:
/// `V = B V_B B* + (1 − BB*)`.
#[derive(Debug, Clone)]
pub(crate) struct LocalInvertible {
    pub basis: CMat,
    pub vb: CMat,
    /// polar factors of `vb`
    pub unitary: CMat,
    pub positive: CMat,
    /// eigenbasis and phases of `unitary`
    pub eig: CMat,
    pub phases: Vec<f64>,
}

/// Eigen-decomposition of a unitary through the Hermitian pencil
/// `(U + U*)/2 + γ (U − U*)/2i`.
pub(crate) fn unitary_eig(u: &CMat) -> Result<(CMat, Vec<f64>)> {
    const GAMMA: f64 = 0.618_033_988_749_894_9;
    let n = u.nrows();
    let ua = u.adjoint().to_owned();
    let h = CMat::from_fn(n, n, |i, j| {
        let s = (u[(i, j)] + ua[(i, j)]) * 0.5;
        let d = (u[(i, j)] - ua[(i, j)]) * c64::new(0.0, -0.5);
        s + d * GAMMA
    });
    let (_, q) = linalg::herm_eig(h.as_ref())?;
    let d = q.adjoint() * u * &q;
    let phases = (0..n).map(|i| d[(i, i)].im.atan2(d[(i, i)].re)).collect();
    Ok((q, phases))
}

impl LocalInvertible {
    /// `V_B` with `V_B c = e`: `[e e⊥][c c⊥]⁻¹`.
    pub fn new(c: &CMat, e: &CMat) -> Result<Self> {
        let span = linalg::hcat(c.as_ref(), e.as_ref());
        let basis = linalg::orth_range(span.as_ref(), 1e-13)?;
        let cb = basis.adjoint() * c;
        let eb = basis.adjoint() * e;
        let cperp = linalg::orth_complement(cb.as_ref(), 1e-13)?;
        let eperp = linalg::orth_complement(eb.as_ref(), 1e-13)?;
        if cperp.ncols() != eperp.ncols() {
            return Err(Error::NotInvertible { smin: 0.0, tol: 1e-13 });
        }
        let cm = linalg::hcat(cb.as_ref(), cperp.as_ref());
        let em = linalg::hcat(eb.as_ref(), eperp.as_ref());
        let vb = &em * linalg::inverse(cm.as_ref());
        let (unitary, _) = crate::operator::polar_completion(&vb)?;
        let positive = unitary.adjoint() * &vb;
        let positive = linalg::scale((&positive + positive.adjoint()).as_ref(), c64::new(0.5, 0.0));
        let (eig, phases) = unitary_eig(&unitary)?;
        Ok(Self { basis, vb, unitary, positive, eig, phases })
    }

    /// `exp(s log U_B)`
    pub fn rotated(&self, s: f64) -> CMat {
        let m = self.eig.nrows();
        let scaled = CMat::from_fn(m, m, |i, j| self.eig[(i, j)] * c64::from_polar(1.0, s * self.phases[j]));
        &scaled * self.eig.adjoint()
    }

    /// `U_B ((1 − s) + s H_B)`
    pub fn stretched(&self, s: f64) -> CMat {
        let m = self.positive.nrows();
        let mix = CMat::from_fn(m, m, |i, j| {
            let id = if i == j { 1.0 - s } else { 0.0 };
            self.positive[(i, j)] * s + id
        });
        &self.unitary * mix
    }
}

/// `1 + Σ_k B_k (M_k − 1) B_k*`
pub(crate) fn assemble(n: usize, parts: &[(&CMat, CMat)]) -> CMat {
    let mut v = linalg::eye(n);
    for (b, m) in parts {
        let d = linalg::sub_identity(m.as_ref());
        v += *b * d * b.adjoint();
    }
    v
}

/// `A |A|^{−t}` through the eigen-decomposition of `A*A`.
pub(crate) fn polar_retraction(a: &CMat, t: f64) -> Result<CMat> {
    let aa = a.adjoint() * a;
    let aa = linalg::scale((&aa + aa.adjoint()).as_ref(), c64::new(0.5, 0.0));
    let (vals, vecs) = linalg::herm_eig(aa.as_ref())?;
    Ok(a * linalg::spectral_apply(&vals, vecs.as_ref(), |l| c64::new(l.max(1e-300).powf(-t / 2.0), 0.0)))
}

fn embed_columns(n: usize, rows: &[usize], local: &CMat) -> CMat {
    let mut m = CMat::zeros(n, local.ncols());
    for (i, &r) in rows.iter().enumerate() {
        for j in 0..local.ncols() {
            m[(r, j)] = local[(i, j)];
        }
    }
    m
}

pub fn pinning(u: &OperatorMatrix, opts: &PinOptions) -> Result<Pinned> {
    let l = u.lattice_arc();
    let n = u.dim();
    let nf = u.fiber();
    let mut copts = CenterOptions::new(opts.eps);
    copts.generation = opts.generation;
    copts.wanted = opts.wanted;
    let centers = localized_centers_with(u, &copts)?;
    let g = centers.b.clone();
    let gm = g.mat().clone();
    let um = u.mat().clone();

    let mut locals = Vec::with_capacity(centers.family.len());
    for (k, &x) in centers.family.centers.iter().enumerate() {
        let rows = u.rows_of(&centers.family.islands[k]);
        let xcols = u.rows_of(&[x]);
        let c = linalg::submatrix(gm.as_ref(), &rows, &xcols);
        let e = CMat::from_fn(rows.len(), nf, |i, j| {
            if rows[i] == xcols[j] { c64::new(1.0, 0.0) } else { c64::new(0.0, 0.0) }
        });
        let loc = LocalInvertible::new(&c, &e)?;
        let basis = embed_columns(n, &rows, &loc.basis);
        locals.push((basis, loc));
    }

    let v_at = |f: &dyn Fn(&LocalInvertible) -> CMat| -> CMat {
        let parts: Vec<(&CMat, CMat)> = locals.iter().map(|(b, loc)| (b, f(loc))).collect();
        assemble(n, &parts)
    };
    let v_full = v_at(&|loc| loc.vb.clone());
    let x = &v_full * &gm;

    // P^⊥ = centers
    let pinned = u.rows_of(&centers.family.centers);
    let mut is_pinned = vec![false; n];
    for &r in &pinned {
        is_pinned[r] = true;
    }
    let zero = c64::new(0.0, 0.0);
    let d = CMat::from_fn(n, n, |i, j| match (is_pinned[i], is_pinned[j]) {
        (true, true) => {
            if i == j { c64::new(1.0, 0.0) } else { zero }
        }
        (false, false) => x[(i, j)],
        _ => zero,
    });
    let nil = CMat::from_fn(n, n, |i, j| if is_pinned[i] && !is_pinned[j] { x[(i, j)] } else { zero });
    let factorization_residual = linalg::dist(x.as_ref(), (&d * (linalg::eye(n) + &nil)).as_ref());
    let nilpotent_residual =
        linalg::opnorm(linalg::sub_identity(((linalg::eye(n) + &nil) * (linalg::eye(n) - &nil)).as_ref()).as_ref());

    let kind = PathKind::Invertible;
    let grid = opts.grid;
    let depth = opts.refine_depth;
    let wrap = |m: CMat| u.with_mat(m);
    let s1 = sample_stage("approximate", 0.0, 1.0, grid, kind, depth, |t| {
        Ok(wrap(linalg::add_scaled(linalg::scale(um.as_ref(), c64::new(1.0 - t, 0.0)).as_ref(), gm.as_ref(), c64::new(t, 0.0))))
    })?;
    let s2 = sample_stage("rotate", 0.0, 1.0, grid, kind, depth, |t| Ok(wrap(v_at(&|loc| loc.rotated(t)) * &gm)))?;
    let s3 = sample_stage("stretch", 0.0, 1.0, grid, kind, depth, |t| {
        Ok(wrap(v_at(&|loc| loc.stretched(t)) * &gm))
    })?;
    let s4 = sample_stage("triangular", 0.0, 1.0, grid, kind, depth, |t| {
        let leg = linalg::eye(n) + linalg::scale(nil.as_ref(), c64::new(1.0 - t, 0.0));
        Ok(wrap(&d * leg))
    })?;
    let s5 = sample_stage("polar", 0.0, 1.0, grid, kind, depth, |t| Ok(wrap(polar_retraction(&d, t)?)))?;

    let cert_radius = opts.cert_radius.unwrap_or(l.radius() / 2.0);
    let mut spec = CertSpec::new(kind, l.radius()).tolerances(PathTolerances { gap: opts.tau_inv, ..Default::default() });
    spec.cert_radius = cert_radius;
    spec.generation = opts.generation;
    let path = Path::from_stages(vec![s1, s2, s3, s4, s5], spec)?;
    if path.report.min_gap < opts.tau_inv {
        require_pass(&path)?;
    }

    let w = path.end().clone();
    let wm = w.mat();
    let blk = |rp: bool, cp: bool| {
        CMat::from_fn(n, n, |i, j| if is_pinned[i] == rp && is_pinned[j] == cp { wm[(i, j)] } else { zero })
    };
    let pp = blk(true, true);
    let id_pinned = CMat::from_fn(n, n, |i, j| if i == j && is_pinned[i] { c64::new(1.0, 0.0) } else { zero });
    let blocks = BlockResiduals {
        diagonal: linalg::dist(pp.as_ref(), id_pinned.as_ref()),
        off_diagonal: linalg::opnorm(blk(false, true).as_ref()) + linalg::opnorm(blk(true, false).as_ref()),
    };

    let p_sites: Vec<usize> = {
        let mut c = vec![false; l.len()];
        for &x in &centers.family.centers {
            c[x] = true;
        }
        (0..l.len()).filter(|&i| !c[i]).collect()
    };
    let (proper, proper_error) = match certify(&l, p_sites.clone(), opts.generation, opts.m_min) {
        Ok(p) => (Some(p), None),
        Err(e) => (None, Some(e.to_string())),
    };
    Ok(Pinned { w, p_sites, proper, proper_error, centers, path, blocks, factorization_residual, nilpotent_residual })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::SiteIndexMap;
    use crate::models::{ssh, Disorder};
    use crate::symmetry::chiral_flatten_completed;
    use std::sync::Arc;

    fn ssh_unitary(r: f64, t1: f64, t2: f64) -> OperatorMatrix {
        let l = Arc::new(SiteIndexMap::ball(1, r, 2).unwrap());
        let h = ssh(&l, t1, t2, Disorder::none()).unwrap();
        chiral_flatten_completed(&h, 1e-10).unwrap().0
    }

    #[test]
    fn local_invertible_maps_column_to_delta() {
        let c = linalg::real_rows(&[&[0.8], &[0.3], &[0.1]]);
        let e = linalg::real_rows(&[&[1.0], &[0.0], &[0.0]]);
        let loc = LocalInvertible::new(&c, &e).unwrap();
        let v = assemble(3, &[(&loc.basis, loc.vb.clone())]);
        assert!(linalg::dist((&v * &c).as_ref(), e.as_ref()) < 1e-14);
        let r1 = assemble(3, &[(&loc.basis, loc.rotated(1.0))]);
        let s1 = assemble(3, &[(&loc.basis, loc.stretched(1.0))]);
        assert!(linalg::dist(s1.as_ref(), v.as_ref()) < 1e-13);
        assert!(linalg::dist(r1.as_ref(), assemble(3, &[(&loc.basis, loc.unitary.clone())]).as_ref()) < 1e-13);
        assert!(linalg::dist(assemble(3, &[(&loc.basis, loc.rotated(0.0))]).as_ref(), linalg::eye(3).as_ref()) < 1e-13);
    }

    #[test]
    fn identity_pins_to_identity() {
        let l = Arc::new(SiteIndexMap::ball(1, 12.0, 1).unwrap());
        let u = OperatorMatrix::identity(l, 1);
        let p = pinning(&u, &PinOptions { grid: 5, ..Default::default() }).unwrap();
        assert!(p.w.dist(&u) < 1e-13);
        assert!(p.path.points.iter().all(|a| a.dist(&u) < 1e-13));
        assert!(p.path.report.verdict);
    }

    #[test]
    fn nilpotent_leg_has_explicit_inverse() {
        let u = ssh_unitary(20.0, 1.0, 0.4);
        let p = pinning(&u, &PinOptions { grid: 5, ..Default::default() }).unwrap();
        assert!(p.nilpotent_residual < 1e-13);
        assert!(p.factorization_residual < 1e-12);
    }

    #[test]
    fn ssh_trivial_phase_pins() {
        let u = ssh_unitary(40.0, 1.0, 0.4);
        let p = pinning(&u, &PinOptions { grid: 9, ..Default::default() }).unwrap();
        assert!(p.path.report.verdict, "{:?}", p.path.report.failures);
        assert!(p.path.report.min_gap >= 0.3, "min singular value {}", p.path.report.min_gap);
        assert!(p.blocks.diagonal <= 1e-8 && p.blocks.off_diagonal <= 1e-8, "{:?}", p.blocks);
        assert!(p.proper.is_some(), "{:?}", p.proper_error);
        assert!(super::super::path::unitarity_residual(p.w.mat()) < 1e-10);
    }
}
