//! Matrix representations of complex and real Clifford algebras.
//!
//! Quaternions are stored through `a + bi + cj + dk ↦ [[a+ib, c+id], [-c+id, a-ib]]`,
//! so every representation lives in complex matrices.

use faer::Mat;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{adj, conj, cx, eye, kron, max_abs, real_rows, CMat, I, ONE, ZERO};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CliffordKind {
    Complex(usize),
    Real { p: usize, q: usize },
}

/// Grading automorphism of the represented algebra.
#[derive(Debug, Clone)]
pub enum Grading {
    /// Ungraded (complex algebra with an odd number of generators).
    None,
    /// `Ad diag(1_k, -1_{n-k})`.
    DiagonalSplit(usize),
    /// `X ↦ S X S*` with `S` unitary.
    Inner(CMat),
    /// `X ↦ S X̄ S*`, antilinear on the complex envelope.
    ConjugateInner(CMat),
}

impl Grading {
    pub fn apply(&self, x: &CMat) -> CMat {
        match self {
            Grading::None => x.clone(),
            Grading::DiagonalSplit(k) => {
                let k = *k;
                Mat::from_fn(x.nrows(), x.ncols(), |i, j| {
                    if (i < k) == (j < k) {
                        x[(i, j)]
                    } else {
                        -x[(i, j)]
                    }
                })
            }
            Grading::Inner(s) => s * x * adj(s.as_ref()),
            Grading::ConjugateInner(s) => s * conj(x.as_ref()) * adj(s.as_ref()),
        }
    }

    pub fn is_graded(&self) -> bool {
        !matches!(self, Grading::None)
    }

    fn label(&self) -> &'static str {
        match self {
            Grading::None => "none",
            Grading::DiagonalSplit(_) => "diagonal-split",
            Grading::Inner(_) => "inner-conjugation",
            Grading::ConjugateInner(_) => "explicit-map",
        }
    }
}

#[derive(Debug, Clone)]
pub struct CliffordRep {
    pub kind: CliffordKind,
    pub generators: Vec<CMat>,
    pub grading: Grading,
}

impl CliffordRep {
    pub fn dim(&self) -> usize {
        self.generators.first().map_or(1, |g| g.nrows())
    }

    /// `s_i` with `E_i^2 = s_i`.
    pub fn signs(&self) -> Vec<f64> {
        match self.kind {
            CliffordKind::Complex(d) => vec![1.0; d],
            CliffordKind::Real { p, q } => {
                let mut s = vec![1.0; p];
                s.extend(std::iter::repeat(-1.0).take(q));
                s
            }
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        let gens: Vec<Vec<Vec<[f64; 2]>>> = self
            .generators
            .iter()
            .map(|g| {
                (0..g.nrows())
                    .map(|i| (0..g.ncols()).map(|j| [g[(i, j)].re, g[(i, j)].im]).collect())
                    .collect()
            })
            .collect();
        serde_json::json!({
            "kind": self.kind,
            "grading": self.grading.label(),
            "generators": gens,
        })
    }
}

fn pauli() -> [CMat; 3] {
    let sx = real_rows(&[&[0.0, 1.0], &[1.0, 0.0]]);
    let sy = Mat::from_fn(2, 2, |i, j| match (i, j) {
        (0, 1) => -I,
        (1, 0) => I,
        _ => ZERO,
    });
    let sz = real_rows(&[&[1.0, 0.0], &[0.0, -1.0]]);
    [sx, sy, sz]
}

/// Irreducible self-adjoint generators of `Cl_d(C)`, size `2^⌊d/2⌋`.
pub fn complex_irrep(d: usize) -> CliffordRep {
    assert!(d >= 1, "complex_irrep needs d >= 1");
    let gens = complex_generators(d);
    let grading = if d % 2 == 0 { Grading::DiagonalSplit(gens[0].nrows() / 2) } else { Grading::None };
    CliffordRep { kind: CliffordKind::Complex(d), generators: gens, grading }
}

fn complex_generators(d: usize) -> Vec<CMat> {
    if d == 1 {
        return vec![eye(1)];
    }
    let [sx, sy, _] = pauli();
    if d % 2 == 0 {
        // off-diagonal doubling of the d-1 generators, last one σ_y ⊗ 1
        let inner = complex_generators(d - 1);
        let m = inner[0].nrows();
        let mut out: Vec<CMat> = inner.iter().map(|g| kron(sx.as_ref(), g.as_ref())).collect();
        out.push(kron(sy.as_ref(), eye(m).as_ref()));
        out
    } else {
        // append the chirality of the even algebra
        let mut out = complex_generators(d - 1);
        let m = out[0].nrows();
        let mut chi = eye(m);
        for g in &out {
            chi = &chi * g;
        }
        let k = (d - 1) / 2;
        let phase = match k % 4 {
            0 => ONE,
            1 => -I,
            2 => -ONE,
            _ => I,
        };
        out.push(crate::linalg::scale(chi.as_ref(), phase));
        out
    }
}

fn quat(a: f64, b: f64, c: f64, d: f64) -> CMat {
    Mat::from_fn(2, 2, |i, j| match (i, j) {
        (0, 0) => cx(a, b),
        (0, 1) => cx(c, d),
        (1, 0) => cx(-c, d),
        _ => cx(a, -b),
    })
}

fn perm(p: &[usize]) -> CMat {
    Mat::from_fn(p.len(), p.len(), |i, j| if p[i] == j { ONE } else { ZERO })
}

fn conj_by_real(p: &CMat, x: &CMat) -> CMat {
    p * x * p.transpose()
}

fn cl04_generators() -> Vec<CMat> {
    let [sx, _, _] = pauli();
    let j2 = real_rows(&[&[0.0, 1.0], &[-1.0, 0.0]]);
    vec![
        kron(j2.as_ref(), eye(2).as_ref()),
        kron(sx.as_ref(), quat(0.0, 1.0, 0.0, 0.0).as_ref()),
        kron(sx.as_ref(), quat(0.0, 0.0, 1.0, 0.0).as_ref()),
        kron(sx.as_ref(), quat(0.0, 0.0, 0.0, 1.0).as_ref()),
    ]
}

/// Explicit representations of `Cl_{p,q}` for the signatures of the real
/// Altland–Zirnbauer table.
pub fn real_rep(p: usize, q: usize) -> Result<CliffordRep> {
    let [sx, _, sz] = pauli();
    let kind = CliffordKind::Real { p, q };
    let (generators, grading) = match (p, q) {
        // R ⊕ R as diagonal 2x2, E1 = (1,-1), grading swaps summands
        (1, 0) => (vec![sz.clone()], Grading::Inner(sx.clone())),
        (1, 1) => (
            vec![sx.clone(), real_rows(&[&[0.0, -1.0], &[1.0, 0.0]])],
            Grading::DiagonalSplit(1),
        ),
        // C with grading by complex conjugation
        (0, 1) => (vec![crate::linalg::scale(eye(1).as_ref(), I)], Grading::ConjugateInner(eye(1))),
        (0, 2) => (
            vec![quat(0.0, 0.0, 1.0, 0.0), quat(0.0, 0.0, 0.0, 1.0)],
            Grading::DiagonalSplit(1),
        ),
        // H ⊕ H, E_q = (q, -q), grading swaps summands
        (0, 3) => {
            let gens = [quat(0.0, 1.0, 0.0, 0.0), quat(0.0, 0.0, 1.0, 0.0), quat(0.0, 0.0, 0.0, 1.0)]
                .iter()
                .map(|qm| kron(sz.as_ref(), qm.as_ref()))
                .collect();
            (gens, Grading::Inner(kron(sx.as_ref(), eye(2).as_ref())))
        }
        // M_2(H), grading Ad σ_3
        (0, 4) => (cl04_generators(), Grading::DiagonalSplit(2)),
        // M_2(R) ⊗ H ⊗ C = M_4(C), fifth generator σ_3 ⊗ i, then the basis
        // reordering e0,e3,e1,e2 that brings the grading to X ↦ S X̄ S^{-1}
        (0, 5) => {
            let mut gens = cl04_generators();
            gens.push(kron(sz.as_ref(), crate::linalg::scale(eye(2).as_ref(), I).as_ref()));
            let b = perm(&[0, 3, 1, 2]);
            let gens = gens.iter().map(|g| conj_by_real(&b, g)).collect();
            let s = Mat::from_fn(4, 4, |i, j| {
                if j == i + 2 {
                    ONE
                } else if i == j + 2 {
                    -ONE
                } else {
                    ZERO
                }
            });
            (gens, Grading::ConjugateInner(s))
        }
        // M_2(R) ⊗ H ⊗ H = M_8(R) as [[U, V], [V̄, Ū]]
        (0, 6) => {
            let j2 = real_rows(&[&[0.0, 1.0], &[-1.0, 0.0]]);
            let one = quat(1.0, 0.0, 0.0, 0.0);
            let qi = quat(0.0, 1.0, 0.0, 0.0);
            let qj = quat(0.0, 0.0, 1.0, 0.0);
            let qk = quat(0.0, 0.0, 0.0, 1.0);
            let b = real_rows(&[
                &[1.0, 0.0, 0.0, 0.0],
                &[0.0, 1.0, 0.0, 0.0],
                &[0.0, 0.0, 0.0, 1.0],
                &[0.0, 0.0, -1.0, 0.0],
            ]);
            let hh = |q1: &CMat, q2: &CMat| conj_by_real(&b, &kron(q2.as_ref(), q1.as_ref()));
            let outer = kron(perm(&[0, 3, 1, 2]).as_ref(), eye(2).as_ref());
            let triples: [(&CMat, &CMat, &CMat); 6] = [
                (&j2, &one, &one),
                (&sx, &qi, &one),
                (&sx, &qj, &one),
                (&sx, &qk, &one),
                (&sz, &one, &qj),
                (&sz, &one, &qk),
            ];
            let gens = triples
                .iter()
                .map(|(m, q1, q2)| conj_by_real(&outer, &kron(m.as_ref(), hh(q1, q2).as_ref())))
                .collect();
            (gens, Grading::DiagonalSplit(4))
        }
        _ => return Err(Error::UnsupportedSignature(p, q)),
    };
    Ok(CliffordRep { kind, generators, grading })
}

#[derive(Debug, Clone, Serialize)]
pub struct CliffordReport {
    pub anticommutation: f64,
    pub adjointness: f64,
    pub oddness: f64,
    pub involution: f64,
    pub even_fixed: f64,
    pub pass: bool,
}

/// Residuals of the defining relations. Entries are signed units, so a
/// correct representation gives exact zeros.
pub fn verify_clifford(rep: &CliffordRep, tol: f64) -> CliffordReport {
    let s = rep.signs();
    let n = rep.dim();
    let g = &rep.generators;
    let mut anti = 0.0f64;
    let mut adjo = 0.0f64;
    let mut odd = 0.0f64;
    let mut invol = 0.0f64;
    let mut even = 0.0f64;
    for i in 0..g.len() {
        for j in i..g.len() {
            let mut a = &g[i] * &g[j] + &g[j] * &g[i];
            if i == j {
                a -= crate::linalg::scale(eye(n).as_ref(), cx(2.0 * s[i], 0.0));
            }
            anti = anti.max(max_abs(a.as_ref()));
            if rep.grading.is_graded() && i < j {
                let e = &g[i] * &g[j];
                even = even.max(max_abs((rep.grading.apply(&e) - &e).as_ref()));
            }
        }
        let a = adj(g[i].as_ref()) - crate::linalg::scale(g[i].as_ref(), cx(s[i], 0.0));
        adjo = adjo.max(max_abs(a.as_ref()));
        if rep.grading.is_graded() {
            odd = odd.max(max_abs((rep.grading.apply(&g[i]) + &g[i]).as_ref()));
        }
    }
    if rep.grading.is_graded() {
        // involutive on a spanning family: products of up to two generators
        let mut probes = vec![eye(n)];
        probes.extend(g.iter().cloned());
        for a in g {
            for b in g {
                probes.push(a * b);
            }
        }
        for x in &probes {
            let back = rep.grading.apply(&rep.grading.apply(x));
            invol = invol.max(max_abs((back - x).as_ref()));
        }
    }
    let pass = anti <= tol && adjo <= tol && odd <= tol && invol <= tol && even <= tol;
    CliffordReport { anticommutation: anti, adjointness: adjo, oddness: odd, involution: invol, even_fixed: even, pass }
}

pub const REAL_SIGNATURES: [(usize, usize); 8] = [(1, 0), (1, 1), (0, 1), (0, 2), (0, 3), (0, 4), (0, 5), (0, 6)];

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{is_zero, re};

    #[test]
    fn low_dimensional_irreps() {
        let r = complex_irrep(2);
        let [sx, sy, sz] = pauli();
        assert_eq!(r.generators, vec![sx.clone(), sy.clone()]);
        let r3 = complex_irrep(3);
        assert_eq!(r3.generators, vec![sx, sy, sz]);
        assert_eq!(complex_irrep(1).generators[0], eye(1));
    }

    #[test]
    fn complex_irreps_exact() {
        for d in 1..=8 {
            let r = complex_irrep(d);
            assert_eq!(r.dim(), 1 << (d / 2));
            assert_eq!(r.generators.len(), d);
            let rep = verify_clifford(&r, 0.0);
            assert!(rep.pass, "d={d}: {rep:?}");
        }
    }

    #[test]
    fn even_irreps_off_diagonal() {
        for d in [2, 4, 6] {
            let r = complex_irrep(d);
            let h = r.dim() / 2;
            for g in &r.generators {
                for i in 0..r.dim() {
                    for j in 0..r.dim() {
                        if (i < h) == (j < h) {
                            assert_eq!(g[(i, j)], ZERO);
                        }
                    }
                }
            }
            // last generator is [[0,-i],[i,0]] blockwise
            let last = r.generators.last().unwrap();
            assert_eq!(last[(0, h)], -I);
            assert_eq!(last[(h, 0)], I);
        }
    }

    #[test]
    fn real_reps_exact() {
        for (p, q) in REAL_SIGNATURES {
            let r = real_rep(p, q).unwrap();
            assert_eq!(r.generators.len(), p + q);
            let rep = verify_clifford(&r, 0.0);
            assert!(rep.pass, "({p},{q}): {rep:?}");
        }
        assert!(matches!(real_rep(2, 0), Err(Error::UnsupportedSignature(2, 0))));
    }

    #[test]
    fn stated_generators() {
        let r = real_rep(1, 0).unwrap();
        assert_eq!(r.generators[0], real_rows(&[&[1.0, 0.0], &[0.0, -1.0]]));
        let r = real_rep(0, 2).unwrap();
        assert_eq!(r.generators[0], real_rows(&[&[0.0, 1.0], &[-1.0, 0.0]]));
        assert_eq!(r.generators[1], Mat::from_fn(2, 2, |i, j| if i != j { I } else { ZERO }));
        let r = real_rep(1, 1).unwrap();
        assert_eq!(r.generators[0], real_rows(&[&[0.0, 1.0], &[1.0, 0.0]]));
        assert_eq!(r.generators[1], real_rows(&[&[0.0, -1.0], &[1.0, 0.0]]));
    }

    // the real subalgebra of M_8(C) used for Cl_{0,6} is {[[U,V],[V̄,Ū]]}
    #[test]
    fn cl06_generators_in_real_form() {
        let r = real_rep(0, 6).unwrap();
        for g in &r.generators {
            for i in 0..4 {
                for j in 0..4 {
                    assert_eq!(g[(i + 4, j)], g[(i, j + 4)].conj());
                    assert_eq!(g[(i + 4, j + 4)], g[(i, j)].conj());
                }
            }
        }
    }

    // even part of Cl_{0,5} is {[[A,B],[-B̄,Ā]]}
    #[test]
    fn cl05_even_block_form() {
        let r = real_rep(0, 5).unwrap();
        let g = &r.generators;
        let e = &g[0] * &g[3];
        for i in 0..2 {
            for j in 0..2 {
                assert_eq!(e[(i + 2, j + 2)], e[(i, j)].conj());
                assert_eq!(e[(i + 2, j)], -e[(i, j + 2)].conj());
            }
        }
    }

    #[test]
    fn perturbation_is_flagged() {
        let mut r = complex_irrep(4);
        r.generators[0][(0, 2)] += re(1e-3);
        let rep = verify_clifford(&r, 1e-12);
        assert!(!rep.pass);
        assert!(rep.anticommutation >= 1e-3, "{rep:?}");
    }

    #[test]
    fn grading_involutive_on_cl06() {
        let r = real_rep(0, 6).unwrap();
        let x = &r.generators[0] * &r.generators[4] * &r.generators[5];
        let back = r.grading.apply(&r.grading.apply(&x));
        assert!(is_zero((back - &x).as_ref()));
    }
}
