//! Compressing a homotopy over `M_{n+1}` back onto the lattice through
//! `V = [P_0 + V_0, V_1, …, V_n]`.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::lattice::{certify, split_proper, ProperSet, SiteIndexMap};
use crate::linalg::{self, c64, CMat};
use crate::operator::OperatorMatrix;

use super::isometry::{proper_isometry, proper_isometry_onto, ProperIsometry};
use super::path::{CertSpec, Constraint, Path, PathKind, Stage};

#[derive(Debug, Clone, Serialize)]
pub struct CompressionReport {
    pub copies: usize,
    /// sizes of `P_0, Q_0, P_1, …, P_n`
    pub piece_sizes: Vec<usize>,
    /// `‖VV* − 1‖`
    pub vv_residual: f64,
    /// `‖V*V − D‖` with `D` the block-diagonal domain projection
    pub vstarv_residual: f64,
    /// `‖V*V − 1_{n+1}‖`; the finite-volume defect
    pub vstarv_identity_defect: f64,
    /// `max_t ‖D^⊥ W_t D‖ + ‖D W_t D^⊥‖`
    pub leakage: f64,
    pub max_unitarity: f64,
}

#[derive(Debug, Clone)]
pub struct Compressed {
    pub path: Path,
    pub v: CMat,
    pub p0: Vec<usize>,
    pub q0: Vec<usize>,
    pub pieces: Vec<Vec<usize>>,
    pub isometries: Vec<ProperIsometry>,
    pub report: CompressionReport,
}

fn blocks(dim: usize) -> impl Fn(usize, usize) -> usize {
    move |copy, row| copy * dim + row
}

/// `W_t = R_t (U ⊕ 1_n) R_t*`, `R_t` rotating copy 0 into copy 1, for
/// `t ∈ [0, π/2]`: from `U ⊕ 1 ⊕ …` to `1 ⊕ U ⊕ 1 ⊕ …`.
pub fn swap_path(u: &CMat, n: usize, grid: usize) -> (Vec<f64>, Vec<CMat>) {
    let dim = u.nrows();
    let big = dim * (n + 1);
    let at = blocks(dim);
    let grid = grid.max(2);
    let ts: Vec<f64> = (0..grid).map(|i| i as f64 / (grid - 1) as f64).collect();
    let ws = ts
        .iter()
        .map(|&s| {
            let t = s * std::f64::consts::FRAC_PI_2;
            let (c, sn) = (t.cos(), t.sin());
            let mut r = linalg::eye(big);
            for i in 0..dim {
                r[(at(0, i), at(0, i))] = c64::new(c, 0.0);
                r[(at(1, i), at(1, i))] = c64::new(c, 0.0);
                r[(at(0, i), at(1, i))] = c64::new(-sn, 0.0);
                r[(at(1, i), at(0, i))] = c64::new(sn, 0.0);
            }
            let mut x = linalg::eye(big);
            for i in 0..dim {
                for j in 0..dim {
                    x[(at(0, i), at(0, j))] = u[(i, j)];
                }
            }
            &r * x * r.adjoint()
        })
        .collect();
    (ts, ws)
}

/// Splits `P_0^⊥` into `Q_0, P_1, …, P_n` by repeated halving; `P_k` takes the
/// inner draws of each split.
pub fn split_complement(l: &SiteIndexMap, p0: &ProperSet, n: usize) -> Result<(ProperSet, Vec<ProperSet>)> {
    let comp = certify(l, p0.complement(l), p0.generation, p0.m_min)
        .map_err(|e| Error::SplitFailed(format!("complement of P_0: {e}")))?;
    let mut rest = comp;
    let mut pieces = Vec::with_capacity(n);
    for _ in 0..n {
        let (f1, f2) = split_proper(l, &rest)?;
        pieces.push(f2);
        rest = f1;
    }
    Ok((rest, pieces))
}

pub fn compress_matrix_homotopy(
    lattice: &Arc<SiteIndexMap>,
    fiber: usize,
    t: &[f64],
    w: &[CMat],
    p0: &ProperSet,
) -> Result<Compressed> {
    let dim = lattice.len() * fiber;
    if w.is_empty() || w.len() != t.len() {
        return Err(Error::InvalidArgument("need one matrix per grid point".into()));
    }
    let big = w[0].nrows();
    if big % dim != 0 || big < dim || w.iter().any(|m| m.nrows() != big || m.ncols() != big) {
        return Err(Error::LatticeMismatch(format!("path lives on size {big}, lattice dimension {dim}")));
    }
    let copies = big / dim;
    let n = copies - 1;
    let (q0, pieces) = split_complement(lattice, p0, n)?;
    let p0c = p0.complement(lattice);
    let iso0 = proper_isometry_onto(lattice, fiber, &p0c, &q0.sites, p0.generation);
    let mut isos = vec![iso0];
    for p in &pieces {
        isos.push(proper_isometry(p, lattice, fiber));
    }

    let at = blocks(dim);
    let mut v = CMat::zeros(dim, big);
    let p0rows = crate::operator::rows_of(&p0.sites, fiber);
    for &r in &p0rows {
        v[(r, at(0, r))] = c64::new(1.0, 0.0);
    }
    for (k, iso) in isos.iter().enumerate() {
        let m = iso.v.mat();
        for i in 0..dim {
            for j in 0..dim {
                if m[(i, j)] != c64::new(0.0, 0.0) {
                    v[(i, at(k, j))] += m[(i, j)];
                }
            }
        }
    }
    let mut dom = vec![false; big];
    for &r in &p0rows {
        dom[at(0, r)] = true;
    }
    for (k, iso) in isos.iter().enumerate() {
        for r in crate::operator::rows_of(&iso.domain(), fiber) {
            dom[at(k, r)] = true;
        }
    }
    let dproj = CMat::from_fn(big, big, |i, j| c64::new(if i == j && dom[i] { 1.0 } else { 0.0 }, 0.0));
    let vv_residual = linalg::opnorm(linalg::sub_identity((&v * v.adjoint()).as_ref()).as_ref());
    let vsv = v.adjoint() * &v;
    let vstarv_residual = linalg::dist(vsv.as_ref(), dproj.as_ref());
    let vstarv_identity_defect = linalg::opnorm(linalg::sub_identity(vsv.as_ref()).as_ref());
    let leakage = w
        .iter()
        .map(|m| {
            let out = CMat::from_fn(big, big, |i, j| if !dom[i] && dom[j] { m[(i, j)] } else { c64::new(0.0, 0.0) });
            let inn = CMat::from_fn(big, big, |i, j| if dom[i] && !dom[j] { m[(i, j)] } else { c64::new(0.0, 0.0) });
            linalg::opnorm(out.as_ref()) + linalg::opnorm(inn.as_ref())
        })
        .fold(0.0, f64::max);

    let points: Vec<OperatorMatrix> = w
        .iter()
        .map(|m| OperatorMatrix::new(lattice.clone(), fiber, &v * m * v.adjoint()))
        .collect::<Result<_>>()?;
    let spec = CertSpec::new(PathKind::Invertible, lattice.radius()).with(Constraint::Unitary);
    let path = Path::from_stages(vec![Stage { name: "compressed".into(), t: t.to_vec(), points }], spec)?;
    let max_unitarity = path.report.max_residuals.get("unitarity").copied().unwrap_or(0.0);

    let mut piece_sizes = vec![p0.sites.len(), q0.sites.len()];
    piece_sizes.extend(pieces.iter().map(|p| p.sites.len()));
    Ok(Compressed {
        path,
        v,
        p0: p0.sites.clone(),
        q0: q0.sites,
        pieces: pieces.into_iter().map(|p| p.sites).collect(),
        isometries: isos,
        report: CompressionReport {
            copies,
            piece_sizes,
            vv_residual,
            vstarv_residual,
            vstarv_identity_defect,
            leakage,
            max_unitarity,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use super::super::path::unitarity_residual;

    fn setup() -> (Arc<SiteIndexMap>, ProperSet) {
        let l = Arc::new(SiteIndexMap::ball(1, 24.0, 1).unwrap());
        // every third site
        let s: Vec<usize> = (0..l.len()).filter(|&i| l.site(i)[0].rem_euclid(3) == 0).collect();
        let p0 = certify(&l, s, 1, 2).unwrap();
        (l, p0)
    }

    #[test]
    fn constant_identity_compresses_to_identity() {
        let (l, p0) = setup();
        let dim = l.len();
        let w = vec![linalg::eye(2 * dim); 3];
        let c = compress_matrix_homotopy(&l, 1, &[0.0, 0.5, 1.0], &w, &p0).unwrap();
        assert!(c.report.vv_residual < 1e-14);
        assert!(c.report.vstarv_residual < 1e-14);
        for p in &c.path.points {
            assert!(linalg::opnorm(linalg::sub_identity(p.mat().as_ref()).as_ref()) < 1e-14);
        }
    }

    #[test]
    fn swap_of_inner_unitary_stays_unitary() {
        let (l, p0) = setup();
        let dim = l.len();
        // U − 1 on the P_0 sites 0 and ±3, phase-rotated
        let idx: Vec<usize> = [-3i64, 0, 3].iter().map(|&x| l.index_of(&[x]).unwrap()).collect();
        let mut u = linalg::eye(dim);
        let (c, s) = (0.6f64, 0.8f64);
        u[(idx[0], idx[0])] = c64::new(c, 0.0);
        u[(idx[0], idx[1])] = c64::new(-s, 0.0);
        u[(idx[1], idx[0])] = c64::new(s, 0.0);
        u[(idx[1], idx[1])] = c64::new(c, 0.0);
        u[(idx[2], idx[2])] = c64::new(0.0, 1.0);
        let (t, w) = swap_path(&u, 1, 11);
        let c = compress_matrix_homotopy(&l, 1, &t, &w, &p0).unwrap();
        assert!(c.report.leakage <= 1e-15);
        assert!(c.report.max_unitarity <= 1e-9);
        assert!(c.report.vv_residual < 1e-14);
        assert!(c.report.vstarv_identity_defect > 0.5);
        assert!(linalg::dist(c.path.start().mat().as_ref(), u.as_ref()) < 1e-14);
        let v1 = c.isometries[1].v.mat();
        let p1 = OperatorMatrix::projector(l.clone(), 1, &c.pieces[0]);
        let want = v1 * &u * v1.adjoint() + linalg::eye(dim) - p1.mat();
        assert!(linalg::dist(c.path.end().mat().as_ref(), want.as_ref()) < 1e-14);
        for p in &c.path.points {
            assert!(unitarity_residual(p.mat()) <= 1e-9);
        }
    }
}
