//! Dense operators on `l^2(B_R) ⊗ C^N` and their functional calculus.

use std::sync::{Arc, OnceLock};

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{LatticeDoc, SiteIndexMap};
use crate::linalg::{self, c64, CMat, ONE};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub gap: f64,
    pub inv: f64,
    pub branch: f64,
    pub residual: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { gap: 1e-6, inv: 1e-8, branch: 1e-8, residual: 1e-10 }
    }
}

/// Square matrix indexed by `(site, internal)`, row `site * fiber + internal`.
#[derive(Debug, Clone)]
pub struct OperatorMatrix {
    lattice: Arc<SiteIndexMap>,
    fiber: usize,
    mat: CMat,
    hermitian: OnceLock<bool>,
}

impl PartialEq for OperatorMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.fiber == other.fiber && self.lattice.sites() == other.lattice.sites() && self.mat == other.mat
    }
}

impl OperatorMatrix {
    pub fn new(lattice: Arc<SiteIndexMap>, fiber: usize, mat: CMat) -> Result<Self> {
        let n = lattice.len() * fiber;
        if mat.nrows() != n || mat.ncols() != n {
            return Err(Error::LatticeMismatch(format!(
                "matrix is {}x{}, lattice needs {n}x{n}",
                mat.nrows(),
                mat.ncols()
            )));
        }
        Ok(Self { lattice, fiber, mat, hermitian: OnceLock::new() })
    }

    pub fn zeros(lattice: Arc<SiteIndexMap>, fiber: usize) -> Self {
        let n = lattice.len() * fiber;
        Self { lattice, fiber, mat: Mat::zeros(n, n), hermitian: OnceLock::new() }
    }

    pub fn identity(lattice: Arc<SiteIndexMap>, fiber: usize) -> Self {
        let n = lattice.len() * fiber;
        Self { lattice, fiber, mat: Mat::identity(n, n), hermitian: OnceLock::new() }
    }

    /// Block diagonal over sites, block `f(site)` of size `fiber`.
    pub fn site_diagonal(lattice: Arc<SiteIndexMap>, fiber: usize, f: impl Fn(usize) -> CMat) -> Self {
        let n = lattice.len();
        let mut mat = Mat::zeros(n * fiber, n * fiber);
        for s in 0..n {
            let b = f(s);
            for i in 0..fiber {
                for j in 0..fiber {
                    mat[(s * fiber + i, s * fiber + j)] = b[(i, j)];
                }
            }
        }
        Self { lattice, fiber, mat, hermitian: OnceLock::new() }
    }

    /// `Λ_F ⊗ 1_fiber`.
    pub fn projector(lattice: Arc<SiteIndexMap>, fiber: usize, sites: &[usize]) -> Self {
        let mut mat = Mat::zeros(lattice.len() * fiber, lattice.len() * fiber);
        for &s in sites {
            for i in 0..fiber {
                mat[(s * fiber + i, s * fiber + i)] = ONE;
            }
        }
        Self { lattice, fiber, mat, hermitian: OnceLock::new() }
    }

    /// Same lattice and fiber, new entries.
    pub fn with_mat(&self, mat: CMat) -> Self {
        assert_eq!(mat.nrows(), self.dim(), "with_mat: dimension mismatch");
        Self { lattice: self.lattice.clone(), fiber: self.fiber, mat, hermitian: OnceLock::new() }
    }

    pub fn lattice(&self) -> &SiteIndexMap {
        &self.lattice
    }
    pub fn lattice_arc(&self) -> Arc<SiteIndexMap> {
        self.lattice.clone()
    }
    pub fn fiber(&self) -> usize {
        self.fiber
    }
    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }
    pub fn mat(&self) -> &CMat {
        &self.mat
    }
    pub fn into_mat(self) -> CMat {
        self.mat
    }

    pub fn is_hermitian(&self) -> bool {
        *self.hermitian.get_or_init(|| {
            let d = &self.mat - self.mat.adjoint();
            linalg::max_abs(d.as_ref()) <= 1e-12
        })
    }

    pub fn same_space(&self, other: &Self) -> Result<()> {
        if self.fiber != other.fiber || self.lattice.sites() != other.lattice.sites() {
            return Err(Error::LatticeMismatch(format!(
                "fibers {} vs {}, {} vs {} sites",
                self.fiber,
                other.fiber,
                self.lattice.len(),
                other.lattice.len()
            )));
        }
        Ok(())
    }

    pub fn adjoint(&self) -> Self {
        self.with_mat(linalg::adj(self.mat.as_ref()))
    }

    pub fn conjugate(&self) -> Self {
        self.with_mat(linalg::conj(self.mat.as_ref()))
    }

    pub fn norm(&self) -> f64 {
        linalg::opnorm(self.mat.as_ref())
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.same_space(other)?;
        Ok(self.with_mat(&self.mat * &other.mat))
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.same_space(other)?;
        Ok(self.with_mat(&self.mat + &other.mat))
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.same_space(other)?;
        Ok(self.with_mat(&self.mat - &other.mat))
    }

    pub fn scale(&self, s: c64) -> Self {
        self.with_mat(linalg::scale(self.mat.as_ref(), s))
    }

    /// `1 - A`.
    pub fn complement(&self) -> Self {
        let n = self.dim();
        self.with_mat(Mat::from_fn(n, n, |i, j| if i == j { ONE - self.mat[(i, j)] } else { -self.mat[(i, j)] }))
    }

    pub fn rows_of(&self, sites: &[usize]) -> Vec<usize> {
        rows_of(sites, self.fiber)
    }

    /// `Λ_F A Λ_G` as a rectangular matrix on the selected rows and columns.
    pub fn block_matrix(&self, f: &[usize], g: &[usize]) -> CMat {
        linalg::submatrix(self.mat.as_ref(), &self.rows_of(f), &self.rows_of(g))
    }

    /// `Λ_F A Λ_G`, embedded.
    pub fn block(&self, f: &[usize], g: &[usize]) -> Self {
        let rf = self.rows_of(f);
        let rg = self.rows_of(g);
        let mut out = Mat::zeros(self.dim(), self.dim());
        for &i in &rf {
            for &j in &rg {
                out[(i, j)] = self.mat[(i, j)];
            }
        }
        self.with_mat(out)
    }

    /// Fiber block `A_{xy}`.
    pub fn site_block(&self, x: usize, y: usize) -> CMat {
        let n = self.fiber;
        Mat::from_fn(n, n, |i, j| self.mat[(x * n + i, y * n + j)])
    }

    pub fn dist(&self, other: &Self) -> f64 {
        linalg::dist(self.mat.as_ref(), other.mat.as_ref())
    }
}

pub fn rows_of(sites: &[usize], fiber: usize) -> Vec<usize> {
    sites.iter().flat_map(|&s| (0..fiber).map(move |i| s * fiber + i)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralGapReport {
    pub gap: f64,
    pub max_negative: Option<f64>,
    pub min_positive: Option<f64>,
}

impl SpectralGapReport {
    pub fn from_eigenvalues(vals: &[f64]) -> Self {
        let gap = vals.iter().map(|v| v.abs()).fold(f64::INFINITY, f64::min);
        let max_negative = vals.iter().copied().filter(|&v| v < 0.0).reduce(f64::max);
        let min_positive = vals.iter().copied().filter(|&v| v >= 0.0).reduce(f64::min);
        Self { gap, max_negative, min_positive }
    }

    /// `min positive - max negative`, infinite when one side is empty.
    pub fn width(&self) -> f64 {
        match (self.max_negative, self.min_positive) {
            (Some(a), Some(b)) => b - a,
            _ => f64::INFINITY,
        }
    }
}

fn require_hermitian(h: &OperatorMatrix) -> Result<()> {
    let scale = linalg::max_abs(h.mat().as_ref()).max(1.0);
    let d = h.mat() - h.mat().adjoint();
    let r = linalg::max_abs(d.as_ref());
    if r > 1e-10 * scale {
        return Err(Error::InvalidArgument(format!("operator is not Hermitian (residual {r:.3e})")));
    }
    Ok(())
}

pub fn spectral_gap(h: &OperatorMatrix) -> Result<SpectralGapReport> {
    require_hermitian(h)?;
    Ok(SpectralGapReport::from_eigenvalues(&linalg::herm_eigvals(h.mat().as_ref())?))
}

/// `sgn(H)` together with the gap report.
pub fn sign_with_gap(h: &OperatorMatrix, tau_gap: f64) -> Result<(OperatorMatrix, SpectralGapReport)> {
    require_hermitian(h)?;
    let (vals, vecs) = linalg::herm_eig(h.mat().as_ref())?;
    let report = SpectralGapReport::from_eigenvalues(&vals);
    if report.gap < tau_gap {
        return Err(Error::GapClosed { gap: report.gap, tol: tau_gap });
    }
    // sgn H = 1 - 2 V₋V₋*, which needs only the negative eigenvectors
    let neg = vals.iter().take_while(|&&v| v < 0.0).count();
    let vn = vecs.as_ref().subcols(0, neg);
    let p = hermitize(vn * vn.adjoint());
    let n = h.dim();
    let s = Mat::from_fn(n, n, |i, j| {
        let v = p[(i, j)] * -2.0;
        if i == j {
            v + 1.0
        } else {
            v
        }
    });
    Ok((h.with_mat(s), report))
}

fn hermitize(a: CMat) -> CMat {
    let n = a.nrows();
    Mat::from_fn(n, n, |i, j| (a[(i, j)] + a[(j, i)].conj()) * 0.5)
}

pub fn sign_flatten(h: &OperatorMatrix, tau_gap: f64) -> Result<OperatorMatrix> {
    sign_with_gap(h, tau_gap).map(|(s, _)| s)
}

/// `χ_{(-∞,0)}(H) = (1 - sgn H)/2`.
pub fn fermi_projection(h: &OperatorMatrix, tau_gap: f64) -> Result<OperatorMatrix> {
    let s = sign_flatten(h, tau_gap)?;
    Ok(projection_from_sign(&s, -1.0))
}

/// `(H + 1)/2` for a flat `H`, the projection onto the positive half.
pub fn positive_projection(h: &OperatorMatrix, tau_gap: f64) -> Result<OperatorMatrix> {
    let s = sign_flatten(h, tau_gap)?;
    Ok(projection_from_sign(&s, 1.0))
}

fn projection_from_sign(s: &OperatorMatrix, sign: f64) -> OperatorMatrix {
    let n = s.dim();
    let m = s.mat();
    s.with_mat(Mat::from_fn(n, n, |i, j| {
        let v = m[(i, j)] * (0.5 * sign);
        if i == j {
            v + 0.5
        } else {
            v
        }
    }))
}

/// Principal `B^{-1/2}` by the Denman–Beavers iteration; fails when an
/// eigenvalue sits within `tau_branch` of `(-∞, 0]`.
pub fn inv_sqrt_mat(b: &CMat, tau_branch: f64) -> Result<CMat> {
    for l in linalg::eigvals(b.as_ref())? {
        let dist = if l.re <= 0.0 { l.im.abs() } else { l.norm() };
        if dist < tau_branch {
            return Err(Error::BranchCutHit { re: l.re, im: l.im });
        }
    }
    let n = b.nrows();
    let mut y = b.clone();
    let mut z = linalg::eye(n);
    for _ in 0..100 {
        let yi = linalg::inverse(y.as_ref());
        let zi = linalg::inverse(z.as_ref());
        let y1 = linalg::scale(linalg::add_scaled(y.as_ref(), zi.as_ref(), ONE).as_ref(), c64::new(0.5, 0.0));
        let z1 = linalg::scale(linalg::add_scaled(z.as_ref(), yi.as_ref(), ONE).as_ref(), c64::new(0.5, 0.0));
        let step = linalg::max_abs((&z1 - &z).as_ref()) / linalg::max_abs(z1.as_ref()).max(1e-300);
        y = y1;
        z = z1;
        if step < 1e-14 {
            break;
        }
    }
    let res = linalg::max_abs(linalg::sub_identity((&z * &z * b).as_ref()).as_ref());
    if res > 1e-8 {
        return Err(Error::NotConverged(format!("inverse square root residual {res:.3e}")));
    }
    Ok(z)
}

pub fn holo_inv_sqrt(b: &OperatorMatrix, tau_branch: f64) -> Result<OperatorMatrix> {
    Ok(b.with_mat(inv_sqrt_mat(b.mat(), tau_branch)?))
}

/// `A |A|^{-1}` from the SVD `A = W S V*`, i.e. `W V*`.
pub fn polar_mat(a: &CMat, tau_inv: f64) -> Result<CMat> {
    let (u, smin) = polar_completion(a)?;
    if smin < tau_inv {
        return Err(Error::NotInvertible { smin, tol: tau_inv });
    }
    Ok(u)
}

/// `W V*` from the SVD even when `A` is singular (the kernel is mapped onto
/// the cokernel), with the smallest singular value.
pub fn polar_completion(a: &CMat) -> Result<(CMat, f64)> {
    let svd = a
        .svd()
        .map_err(|e| Error::NotConverged(format!("svd: {e:?}")))?;
    let smin = svd.S().column_vector().iter().map(|s| s.re).fold(f64::INFINITY, f64::min);
    Ok((svd.U() * svd.V().adjoint(), smin))
}

pub fn polar_unitary(a: &OperatorMatrix, tau_inv: f64) -> Result<OperatorMatrix> {
    Ok(a.with_mat(polar_mat(a.mat(), tau_inv)?))
}

pub fn conjugate(a: &OperatorMatrix) -> OperatorMatrix {
    a.conjugate()
}

/// Fiberwise direct sum on a common lattice: the fiber at each site is
/// `C^{N_A} ⊕ C^{N_B}`.
pub fn direct_sum(a: &OperatorMatrix, b: &OperatorMatrix) -> Result<OperatorMatrix> {
    if a.lattice().sites() != b.lattice().sites() {
        return Err(Error::LatticeMismatch("direct_sum needs a common lattice".into()));
    }
    let (fa, fb) = (a.fiber(), b.fiber());
    let f = fa + fb;
    let n = a.lattice().len();
    let mut mat = Mat::zeros(n * f, n * f);
    for x in 0..n {
        for y in 0..n {
            for i in 0..fa {
                for j in 0..fa {
                    mat[(x * f + i, y * f + j)] = a.mat()[(x * fa + i, y * fa + j)];
                }
            }
            for i in 0..fb {
                for j in 0..fb {
                    mat[(x * f + fa + i, y * f + fa + j)] = b.mat()[(x * fb + i, y * fb + j)];
                }
            }
        }
    }
    OperatorMatrix::new(a.lattice_arc(), f, mat)
}

/// `A ⊗ 1_m`, rows ordered `(site, internal, copy)`.
pub fn tensor_fiber(a: &OperatorMatrix, m: usize) -> OperatorMatrix {
    let mat = linalg::kron(a.mat().as_ref(), linalg::eye(m).as_ref());
    OperatorMatrix::new(a.lattice_arc(), a.fiber() * m, mat).expect("kron dimension")
}

pub const SNAPSHOT_SCHEMA: &str = "topoidx.snapshot/1";

/// JSON operator snapshot: lattice header plus row-major `[re, im]` entries.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Snapshot {
    pub schema: String,
    pub lattice: LatticeDoc,
    pub fiber: usize,
    pub dim: usize,
    pub entries: Vec<[f64; 2]>,
    #[serde(default)]
    pub meta: serde_json::Value,
}

impl Snapshot {
    pub fn from_operator(a: &OperatorMatrix, meta: serde_json::Value) -> Self {
        let n = a.dim();
        let mut entries = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                let z = a.mat()[(i, j)];
                entries.push([z.re, z.im]);
            }
        }
        Self {
            schema: SNAPSHOT_SCHEMA.to_string(),
            lattice: a.lattice().to_doc(Default::default()),
            fiber: a.fiber(),
            dim: n,
            entries,
            meta,
        }
    }

    pub fn to_operator(&self) -> Result<OperatorMatrix> {
        if self.schema != SNAPSHOT_SCHEMA {
            return Err(Error::InvalidArgument(format!("unknown snapshot schema {}", self.schema)));
        }
        if self.entries.len() != self.dim * self.dim {
            return Err(Error::InvalidArgument("snapshot entry count".into()));
        }
        let lattice = Arc::new(SiteIndexMap::from_doc(&self.lattice)?);
        let n = self.dim;
        let mat = Mat::from_fn(n, n, |i, j| {
            let [r, im] = self.entries[i * n + j];
            c64::new(r, im)
        });
        OperatorMatrix::new(lattice, self.fiber, mat)
    }
}

pub fn is_zero_op(a: &OperatorMatrix) -> bool {
    linalg::max_abs(a.mat().as_ref()) == 0.0
}

pub fn trace(a: &OperatorMatrix) -> c64 {
    linalg::trace(a.mat().as_ref())
}
