//! Altland–Zirnbauer classes: canonical symmetry operators acting fiberwise,
//! constraint residuals, chiral block extraction and the real/quaternionic
//! membership residuals.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use faer::Mat;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lattice::SiteIndexMap;
use crate::linalg::{self, CMat, ONE, ZERO};
use crate::operator::{polar_completion, polar_mat, OperatorMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum AZClass {
    A,
    AIII,
    AI,
    BDI,
    D,
    DIII,
    AII,
    CII,
    C,
    CI,
}

/// `[Θ,Π] = 0` versus `{Θ,Π} = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ThetaPi {
    Commute,
    Anticommute,
}

impl AZClass {
    pub const ALL: [AZClass; 10] = [
        AZClass::A,
        AZClass::AIII,
        AZClass::AI,
        AZClass::BDI,
        AZClass::D,
        AZClass::DIII,
        AZClass::AII,
        AZClass::CII,
        AZClass::C,
        AZClass::CI,
    ];

    pub fn label(self) -> &'static str {
        match self {
            AZClass::A => "A",
            AZClass::AIII => "AIII",
            AZClass::AI => "AI",
            AZClass::BDI => "BDI",
            AZClass::D => "D",
            AZClass::DIII => "DIII",
            AZClass::AII => "AII",
            AZClass::CII => "CII",
            AZClass::C => "C",
            AZClass::CI => "CI",
        }
    }

    /// `Θ²` sign, 0 when absent.
    pub fn theta_sq(self) -> i8 {
        match self {
            AZClass::AI | AZClass::BDI | AZClass::CI => 1,
            AZClass::DIII | AZClass::AII | AZClass::CII => -1,
            _ => 0,
        }
    }

    /// `Ξ²` sign, 0 when absent.
    pub fn xi_sq(self) -> i8 {
        match self {
            AZClass::D => 1,
            AZClass::C => -1,
            _ => 0,
        }
    }

    pub fn has_pi(self) -> bool {
        matches!(self, AZClass::AIII | AZClass::BDI | AZClass::DIII | AZClass::CII | AZClass::CI)
    }

    pub fn theta_pi(self) -> Option<ThetaPi> {
        match self {
            AZClass::BDI | AZClass::CII => Some(ThetaPi::Commute),
            AZClass::DIII | AZClass::CI => Some(ThetaPi::Anticommute),
            _ => None,
        }
    }

    pub fn is_complex(self) -> bool {
        matches!(self, AZClass::A | AZClass::AIII)
    }

    /// Position `n` in the real Bott clock (AI = 0 … CI = 7).
    pub fn real_index(self) -> Option<usize> {
        match self {
            AZClass::AI => Some(0),
            AZClass::BDI => Some(1),
            AZClass::D => Some(2),
            AZClass::DIII => Some(3),
            AZClass::AII => Some(4),
            AZClass::CII => Some(5),
            AZClass::C => Some(6),
            AZClass::CI => Some(7),
            _ => None,
        }
    }

    /// Smallest `(p, q)` with `n + p - q = 1`.
    pub fn clifford_signature(self) -> Option<(usize, usize)> {
        self.real_index().map(|n| match n {
            0 => (1, 0),
            1 => (1, 1),
            n => (0, n - 1),
        })
    }

    /// Required divisor of the fiber dimension.
    pub fn fiber_divisor(self) -> usize {
        match self {
            AZClass::CII => 4,
            AZClass::AIII | AZClass::BDI | AZClass::DIII | AZClass::CI | AZClass::AII | AZClass::C => 2,
            _ => 1,
        }
    }
}

impl fmt::Display for AZClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for AZClass {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        AZClass::ALL
            .into_iter()
            .find(|c| c.label().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::UnsupportedClass(s.to_string()))
    }
}

/// `u` or `u ∘ C` on the fiber, extended trivially over sites.
#[derive(Debug, Clone, PartialEq)]
pub struct FiberOp {
    pub u: CMat,
    pub anti: bool,
}

impl FiberOp {
    pub fn unitary(u: CMat) -> Self {
        Self { u, anti: false }
    }

    pub fn antiunitary(u: CMat) -> Self {
        Self { u, anti: true }
    }

    pub fn dim(&self) -> usize {
        self.u.nrows()
    }

    /// `self ∘ other`: `(uC)(vC) = u v̄`, `(uC) v = u v̄ C`.
    pub fn compose(&self, other: &FiberOp) -> FiberOp {
        let v = if self.anti { linalg::conj(other.u.as_ref()) } else { other.u.clone() };
        FiberOp { u: &self.u * &v, anti: self.anti ^ other.anti }
    }

    pub fn square(&self) -> FiberOp {
        self.compose(self)
    }

    pub fn inverse(&self) -> FiberOp {
        // (uC)^{-1} = C u* = conj(u*) C
        let ui = linalg::adj(self.u.as_ref());
        if self.anti {
            FiberOp { u: linalg::conj(ui.as_ref()), anti: true }
        } else {
            FiberOp { u: ui, anti: false }
        }
    }

    /// `S A S^{-1}` for `A` on `l^2 ⊗ C^N`.
    pub fn conjugate_op(&self, a: &CMat) -> CMat {
        let n = self.dim();
        let src = if self.anti { linalg::conj(a.as_ref()) } else { a.clone() };
        let ua = linalg::adj(self.u.as_ref());
        let sites = a.nrows() / n;
        let mut out = Mat::zeros(a.nrows(), a.ncols());
        for y in 0..sites {
            for x in 0..sites {
                let blk = src.as_ref().submatrix(x * n, y * n, n, n);
                if linalg::is_zero(blk) {
                    continue;
                }
                let r = &self.u * blk * &ua;
                out.as_mut().submatrix_mut(x * n, y * n, n, n).copy_from(&r);
            }
        }
        out
    }

    /// Distance to `±1` if this is a (linear) scalar sign.
    pub fn sign_residual(&self, s: f64) -> f64 {
        if self.anti {
            return f64::INFINITY;
        }
        let n = self.dim();
        linalg::max_abs((&self.u - linalg::scale(linalg::eye(n).as_ref(), linalg::re(s))).as_ref())
    }
}

#[derive(Debug, Clone)]
pub struct SymmetryOps {
    pub class: AZClass,
    pub fiber: usize,
    pub theta: Option<FiberOp>,
    pub xi: Option<FiberOp>,
    pub pi: Option<FiberOp>,
}

fn j2() -> CMat {
    // -iσ_y
    linalg::real_rows(&[&[0.0, -1.0], &[1.0, 0.0]])
}

fn block2(a: &CMat, b: &CMat, c: &CMat, d: &CMat) -> CMat {
    let (p, q) = (a.nrows(), a.ncols());
    Mat::from_fn(2 * p, 2 * q, |i, j| match (i < p, j < q) {
        (true, true) => a[(i, j)],
        (true, false) => b[(i, j - q)],
        (false, true) => c[(i - p, j)],
        (false, false) => d[(i - p, j - q)],
    })
}

/// `diag(1_W, -1_W)`.
pub fn chiral_pi(n: usize) -> CMat {
    let w = n / 2;
    linalg::diag(&(0..n).map(|i| if i < w { ONE } else { -ONE }).collect::<Vec<_>>())
}

/// `1_{n/2} ⊗ (-iσ_y)`.
pub fn quaternionic_j(n: usize) -> CMat {
    linalg::kron(linalg::eye(n / 2).as_ref(), j2().as_ref())
}

/// Normal forms: AI/D `C`; AII/C `-iσ_y C` on fiber pairs; BDI `Θ = C`;
/// DIII `Θ = -iσ_y C` across chiral blocks; CI `σ_x C` across chiral blocks;
/// CII `-iσ_y C` inside each chiral block.
pub fn canonical_symmetry_ops(class: AZClass, fiber: usize) -> Result<SymmetryOps> {
    let need = class.fiber_divisor();
    if fiber == 0 || fiber % need != 0 {
        return Err(Error::FiberParity { class: class.label().into(), fiber, need });
    }
    let n = fiber;
    let w = n / 2;
    let id = linalg::eye(n);
    let pi = class.has_pi().then(|| FiberOp::unitary(chiral_pi(n)));
    let (theta, xi) = match class {
        AZClass::A | AZClass::AIII => (None, None),
        AZClass::AI | AZClass::BDI => (Some(FiberOp::antiunitary(id)), None),
        AZClass::D => (None, Some(FiberOp::antiunitary(id))),
        AZClass::AII => (Some(FiberOp::antiunitary(quaternionic_j(n))), None),
        AZClass::C => (None, Some(FiberOp::antiunitary(quaternionic_j(n)))),
        AZClass::DIII => {
            let (z, e) = (linalg::zeros(w, w), linalg::eye(w));
            let u = block2(&z, &linalg::scale(e.as_ref(), -ONE), &e, &z);
            (Some(FiberOp::antiunitary(u)), None)
        }
        AZClass::CI => {
            let (z, e) = (linalg::zeros(w, w), linalg::eye(w));
            (Some(FiberOp::antiunitary(block2(&z, &e, &e, &z))), None)
        }
        AZClass::CII => {
            let (z, q) = (linalg::zeros(w, w), quaternionic_j(w));
            (Some(FiberOp::antiunitary(block2(&q, &z, &z, &q))), None)
        }
    };
    Ok(SymmetryOps { class, fiber, theta, xi, pi })
}

#[derive(Debug, Clone, Serialize)]
pub struct Residual {
    pub name: String,
    pub value: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ResidualReport {
    pub class: AZClass,
    pub residuals: Vec<Residual>,
    pub tol: f64,
    pub pass: bool,
}

impl ResidualReport {
    fn new(class: AZClass, residuals: Vec<Residual>, tol: f64) -> Self {
        let pass = residuals.iter().all(|r| r.value <= tol);
        Self { class, residuals, tol, pass }
    }

    pub fn max(&self) -> f64 {
        self.residuals.iter().map(|r| r.value).fold(0.0, f64::max)
    }
}

/// `‖[H,Θ]‖`, `‖{H,Ξ}‖`, `‖{H,Π}‖` for the structures present.
pub fn check_constraints(h: &OperatorMatrix, ops: &SymmetryOps, tol: f64) -> ResidualReport {
    let m = h.mat();
    let mut res = Vec::new();
    if let Some(t) = &ops.theta {
        // ‖HΘ - ΘH‖ = ‖H - ΘHΘ^{-1}‖
        res.push(Residual { name: "[H,Theta]".into(), value: linalg::opnorm((m - t.conjugate_op(m)).as_ref()) });
    }
    if let Some(x) = &ops.xi {
        res.push(Residual { name: "{H,Xi}".into(), value: linalg::opnorm((m + x.conjugate_op(m)).as_ref()) });
    }
    if let Some(p) = &ops.pi {
        res.push(Residual { name: "{H,Pi}".into(), value: linalg::opnorm((m + p.conjugate_op(m)).as_ref()) });
    }
    ResidualReport::new(ops.class, res, tol)
}

/// Residuals of the algebraic relations of the operators themselves.
pub fn check_algebra(ops: &SymmetryOps) -> ResidualReport {
    let c = ops.class;
    let mut res = Vec::new();
    if let Some(t) = &ops.theta {
        res.push(Residual { name: "Theta^2".into(), value: t.square().sign_residual(c.theta_sq() as f64) });
    }
    if let Some(x) = &ops.xi {
        res.push(Residual { name: "Xi^2".into(), value: x.square().sign_residual(c.xi_sq() as f64) });
    }
    if let Some(p) = &ops.pi {
        res.push(Residual { name: "Pi^2".into(), value: p.square().sign_residual(1.0) });
    }
    if let (Some(t), Some(p), Some(rel)) = (&ops.theta, &ops.pi, c.theta_pi()) {
        let tp = t.compose(p);
        let pt = p.compose(t);
        let v = match rel {
            ThetaPi::Commute => linalg::max_abs((&tp.u - &pt.u).as_ref()),
            ThetaPi::Anticommute => linalg::max_abs((&tp.u + &pt.u).as_ref()),
        };
        res.push(Residual { name: "Theta-Pi relation".into(), value: v });
    }
    ResidualReport::new(c, res, 0.0)
}

/// Row indices of the positive (first `W`) and negative chiral fiber slots.
fn chiral_rows(sites: usize, n: usize) -> (Vec<usize>, Vec<usize>) {
    let w = n / 2;
    let plus = (0..sites).flat_map(|x| (0..w).map(move |i| x * n + i)).collect();
    let minus = (0..sites).flat_map(|x| (0..w).map(move |i| x * n + w + i)).collect();
    (plus, minus)
}

fn require_even(h: &OperatorMatrix) -> Result<()> {
    if h.fiber() % 2 != 0 {
        return Err(Error::FiberParity { class: "chiral".into(), fiber: h.fiber(), need: 2 });
    }
    Ok(())
}

/// `U` from `H = [[0, U*], [U, 0]]` in the `Π` eigenbasis.
pub fn chiral_offdiag(h: &OperatorMatrix, tol: f64) -> Result<OperatorMatrix> {
    require_even(h)?;
    let pi = FiberOp::unitary(chiral_pi(h.fiber()));
    let r = linalg::opnorm((h.mat() + pi.conjugate_op(h.mat())).as_ref());
    if r > tol {
        return Err(Error::NotChiral(r));
    }
    let (plus, minus) = chiral_rows(h.lattice().len(), h.fiber());
    let u = linalg::submatrix(h.mat().as_ref(), &minus, &plus);
    let uu = &u * u.adjoint();
    let f = linalg::opnorm(linalg::sub_identity(uu.as_ref()).as_ref());
    if f > tol {
        return Err(Error::NotFlat(f));
    }
    OperatorMatrix::new(h.lattice_arc(), h.fiber() / 2, u)
}

/// Polar part of the lower-left chiral block: the unitary of the flattened
/// chiral Hamiltonian.
pub fn chiral_flatten(h: &OperatorMatrix, chiral_tol: f64, tau_inv: f64) -> Result<OperatorMatrix> {
    require_even(h)?;
    let pi = FiberOp::unitary(chiral_pi(h.fiber()));
    let r = linalg::opnorm((h.mat() + pi.conjugate_op(h.mat())).as_ref());
    if r > chiral_tol {
        return Err(Error::NotChiral(r));
    }
    let (plus, minus) = chiral_rows(h.lattice().len(), h.fiber());
    let b = linalg::submatrix(h.mat().as_ref(), &minus, &plus);
    OperatorMatrix::new(h.lattice_arc(), h.fiber() / 2, polar_mat(&b, tau_inv)?)
}

/// Like [`chiral_flatten`], but a singular block (edge zero modes of an open
/// truncation) is completed to a unitary by the SVD. Returns the smallest
/// singular value of the block.
pub fn chiral_flatten_completed(h: &OperatorMatrix, chiral_tol: f64) -> Result<(OperatorMatrix, f64)> {
    require_even(h)?;
    let pi = FiberOp::unitary(chiral_pi(h.fiber()));
    let r = linalg::opnorm((h.mat() + pi.conjugate_op(h.mat())).as_ref());
    if r > chiral_tol {
        return Err(Error::NotChiral(r));
    }
    let (plus, minus) = chiral_rows(h.lattice().len(), h.fiber());
    let b = linalg::submatrix(h.mat().as_ref(), &minus, &plus);
    let (u, smin) = polar_completion(&b)?;
    Ok((OperatorMatrix::new(h.lattice_arc(), h.fiber() / 2, u)?, smin))
}

/// `[[0, U*], [U, 0]]` on fiber `2W`.
pub fn embed(u: &OperatorMatrix) -> OperatorMatrix {
    let w = u.fiber();
    let n = 2 * w;
    let sites = u.lattice().len();
    let (plus, minus) = chiral_rows(sites, n);
    let mut m = Mat::zeros(sites * n, sites * n);
    let um = u.mat();
    for (a, &ra) in minus.iter().enumerate() {
        for (b, &cb) in plus.iter().enumerate() {
            let v = um[(a, b)];
            if v != ZERO {
                m[(ra, cb)] = v;
                m[(cb, ra)] = v.conj();
            }
        }
    }
    OperatorMatrix::new(u.lattice_arc(), n, m).expect("shape by construction")
}

/// Which characterization `symmetry_space_membership` evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MembershipForm {
    Projection,
    Unitary,
}

/// Residual of the real/quaternionic characterization of each real class:
/// D `‖P̄ - P^⊥‖`, DIII `‖U* + Ū‖`, AI/BDI `‖X̄ - X‖`, AII/CII `‖JXJ^{-1} - X‖`,
/// C `‖JPJ^{-1} - P^⊥‖` (same as `‖JPJ + P^⊥‖`), CI `‖JUJ - U*‖`, with
/// `J = -iσ_y C` on fiber pairs.
pub fn symmetry_space_membership(x: &OperatorMatrix, class: AZClass) -> Result<ResidualReport> {
    let m = x.mat();
    let n = x.fiber();
    let need_j = || -> Result<FiberOp> {
        if n % 2 != 0 {
            return Err(Error::FiberParity { class: class.label().into(), fiber: n, need: 2 });
        }
        Ok(FiberOp::antiunitary(quaternionic_j(n)))
    };
    let xbar = || linalg::conj(m.as_ref());
    let (name, value) = match class {
        AZClass::A | AZClass::AIII => return Err(Error::UnsupportedClass(class.label().into())),
        AZClass::AI | AZClass::BDI => ("conj(X) - X", linalg::opnorm((xbar() - m).as_ref())),
        AZClass::D => {
            let perp = x.complement();
            ("conj(P) - P_perp", linalg::opnorm((xbar() - perp.mat()).as_ref()))
        }
        AZClass::DIII => ("U* + conj(U)", linalg::opnorm((m.adjoint() + xbar()).as_ref())),
        AZClass::AII | AZClass::CII => {
            let j = need_j()?;
            ("J X J^-1 - X", linalg::opnorm((j.conjugate_op(m) - m).as_ref()))
        }
        AZClass::C => {
            let j = need_j()?;
            let perp = x.complement();
            ("J P J + P_perp", linalg::opnorm((j.conjugate_op(m) - perp.mat()).as_ref()))
        }
        AZClass::CI => {
            let j = need_j()?;
            // JUJ = -J U J^{-1}
            ("J U J - U*", linalg::opnorm((j.conjugate_op(m) + m.adjoint()).as_ref()))
        }
    };
    Ok(ResidualReport::new(class, vec![Residual { name: name.into(), value }], 0.0))
}

/// Membership against a threshold instead of exact zero.
pub fn symmetry_space_membership_tol(x: &OperatorMatrix, class: AZClass, tol: f64) -> Result<ResidualReport> {
    let r = symmetry_space_membership(x, class)?;
    Ok(ResidualReport::new(class, r.residuals, tol))
}

/// Site-diagonal extension of a fiber operator to an `OperatorMatrix`
/// (the conjugation flag is dropped).
pub fn lift(op: &FiberOp, lattice: &Arc<SiteIndexMap>) -> OperatorMatrix {
    OperatorMatrix::site_diagonal(lattice.clone(), op.dim(), |_| op.u.clone())
}
