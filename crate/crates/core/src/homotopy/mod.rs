//! Constructive deformations: flattening, rotations, decoupling, localized
//! centers, pinning, proper isometries, compression and the DIII calculus.
//! Every path comes with a [`PathReport`] recomputable from its points.

pub mod centers;
pub mod compress;
pub mod decouple;
pub mod diii;
pub mod isometry;
pub mod path;
pub mod pinning;

pub use centers::{localized_centers, localized_centers_with, CenterOptions, IslandFamily, LocalizedCenters};
pub use compress::{compress_matrix_homotopy, swap_path, Compressed};
pub use decouple::{decouple, decouple_sites, inclusion_exclusion_series, DecouplingResult};
pub use diii::{
    diii_pinning, diii_rank_one_repair, diii_symmetrize, dimer_isometry, dimer_operator, e_to_minus_e_path,
    non_collinearity, DiiiPinned, DimerOperator, Repair,
};
pub use isometry::{proper_isometry, proper_isometry_onto, ProperIsometry};
pub use path::{
    certify, diii_residual, require_pass, sample_stage, unitarity_residual, CertSpec, Constraint, Path, PathKind,
    PathReport, PathTolerances, Stage, DEFAULT_GRID,
};
pub use pinning::{pinning, PinOptions, Pinned};

use crate::error::{Error, Result};
use crate::linalg::{self, c64, CMat};
use crate::operator::{sign_flatten, OperatorMatrix};

/// `H_t = (1 − t)H + t sgn(H)` on a uniform grid of `grid` points.
pub fn flatten_path(h: &OperatorMatrix, grid: usize, spec: CertSpec) -> Result<Path> {
    let path = flatten_path_unchecked(h, grid, spec)?;
    require_pass(&path)?;
    Ok(path)
}

/// [`flatten_path`] without failing on a negative verdict.
pub fn flatten_path_unchecked(h: &OperatorMatrix, grid: usize, spec: CertSpec) -> Result<Path> {
    let s = sign_flatten(h, spec.tol.gap)?;
    let stage = sample_stage("flatten", 0.0, 1.0, grid, PathKind::Hermitian, 2, |t| {
        Ok(h.with_mat(linalg::add_scaled(
            linalg::scale(h.mat().as_ref(), c64::new(1.0 - t, 0.0)).as_ref(),
            s.mat().as_ref(),
            c64::new(t, 0.0),
        )))
    })?;
    Path::from_stages(vec![stage], spec)
}

fn rotation_matrix(p: &CMat, q: &CMat, v: &CMat, t: f64) -> CMat {
    let n = p.nrows();
    let (c, s) = (t.cos(), t.sin());
    let vs = v.adjoint().to_owned();
    CMat::from_fn(n, n, |i, j| {
        let id = if i == j { 1.0 } else { 0.0 };
        let pq = p[(i, j)] + q[(i, j)];
        pq * c + (v[(i, j)] - vs[(i, j)]) * s + (c64::new(id, 0.0) - pq)
    })
}

/// Rotation `R_t = cos t (P + Q) + sin t (V − V*) + (1 − P − Q)` for
/// `t ∈ [0, π/2]`, where `V*V = P`, `VV* = Q`, `PQ = 0`.
pub fn rotation_path(p: &OperatorMatrix, q: &OperatorMatrix, v: &OperatorMatrix, grid: usize) -> Result<Path> {
    let (pm, qm, vm) = (p.mat(), q.mat(), v.mat());
    let res = [
        linalg::dist((vm.adjoint() * vm).as_ref(), pm.as_ref()),
        linalg::dist((vm * vm.adjoint()).as_ref(), qm.as_ref()),
        linalg::opnorm((pm * qm).as_ref()),
    ]
    .into_iter()
    .fold(0.0, f64::max);
    if res > 1e-10 {
        return Err(Error::IsometryMismatch(res));
    }
    let grid = grid.max(2);
    let t: Vec<f64> = (0..grid).map(|i| std::f64::consts::FRAC_PI_2 * i as f64 / (grid - 1) as f64).collect();
    let points = t.iter().map(|&s| p.with_mat(rotation_matrix(pm, qm, vm, s))).collect();
    let spec = CertSpec::new(PathKind::Invertible, p.lattice().radius()).with(Constraint::Unitary);
    Path::from_stages(vec![Stage { name: "rotation".into(), t, points }], spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::SiteIndexMap;
    use crate::models::{ssh, Disorder};
    use std::sync::Arc;

    fn toy() -> (OperatorMatrix, OperatorMatrix, OperatorMatrix) {
        let l = Arc::new(SiteIndexMap::from_sites(1, vec![vec![0], vec![1]], 1).unwrap());
        let p = OperatorMatrix::projector(l.clone(), 1, &[0]);
        let q = OperatorMatrix::projector(l.clone(), 1, &[1]);
        let v = OperatorMatrix::new(l, 1, linalg::real_rows(&[&[0.0, 0.0], &[1.0, 0.0]])).unwrap();
        (p, q, v)
    }

    #[test]
    fn rotation_two_site_toy_is_givens() {
        let (p, q, v) = toy();
        let path = rotation_path(&p, &q, &v, 11).unwrap();
        assert_eq!(path.points.len(), 11);
        for (k, r) in path.points.iter().enumerate() {
            let t = path.report.grid[k] * std::f64::consts::FRAC_PI_2;
            let g = linalg::real_rows(&[&[t.cos(), -t.sin()], &[t.sin(), t.cos()]]);
            assert!(linalg::dist(r.mat().as_ref(), g.as_ref()) < 1e-14);
            assert!(unitarity_residual(r.mat()) <= 1e-12);
        }
        let r = path.end().mat();
        let conj = r * p.mat() * r.adjoint();
        assert!(linalg::dist(conj.as_ref(), q.mat().as_ref()) < 1e-14);
    }

    #[test]
    fn rotation_rejects_mismatched_isometry() {
        let (p, _, v) = toy();
        assert!(matches!(rotation_path(&p, &p, &v, 5), Err(Error::IsometryMismatch(_))));
    }

    #[test]
    fn flatten_already_flat_is_constant() {
        let l = Arc::new(SiteIndexMap::ball(1, 10.0, 2).unwrap());
        let h = ssh(&l, 1.0, 0.3, Disorder::none()).unwrap();
        let s = sign_flatten(&h, 1e-6).unwrap();
        let spec = CertSpec::new(PathKind::Hermitian, 10.0);
        let path = flatten_path(&s, 9, spec).unwrap();
        for a in &path.points {
            assert!(a.dist(&s) < 1e-12);
        }
    }

    #[test]
    fn flatten_ssh_keeps_gap_and_symmetry() {
        let l = Arc::new(SiteIndexMap::ball(1, 20.0, 2).unwrap());
        let h = ssh(&l, 1.0, 0.0, Disorder::none()).unwrap();
        let gap0 = crate::operator::spectral_gap(&h).unwrap().gap;
        let ops = crate::symmetry::canonical_symmetry_ops(crate::symmetry::AZClass::AIII, 2).unwrap();
        let spec = CertSpec::new(PathKind::Hermitian, 20.0).with(Constraint::Symmetry(ops));
        let path = flatten_path(&h, DEFAULT_GRID, spec).unwrap();
        assert!(path.report.verdict, "{:?}", path.report.failures);
        assert!(path.report.min_gap >= gap0.min(1.0) - 1e-10);
        assert_eq!(path.recertify().unwrap().verdict, path.report.verdict);
    }
}
