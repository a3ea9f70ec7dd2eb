//! Turning off countably many blocks `P_k A Q_k` at once.

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, c64, CMat};
use crate::operator::OperatorMatrix;

#[derive(Debug, Clone, Serialize)]
pub struct DecouplingResult {
    #[serde(skip)]
    pub b: CMat,
    /// `‖A − B‖`
    pub distance: f64,
    /// `Σ_k 2^{k−1} ‖P_k A Q_k‖`, an upper bound for `distance`
    pub bound: f64,
    pub eps: f64,
    /// `(k, ‖P_k B Q_k‖)`, 1-based
    pub certificates: Vec<(usize, f64)>,
    /// `‖P_k A Q_k‖`
    pub pair_norms: Vec<f64>,
}

impl DecouplingResult {
    pub fn max_certificate(&self) -> f64 {
        self.certificates.iter().map(|c| c.1).fold(0.0, f64::max)
    }

    pub fn operator(&self, like: &OperatorMatrix) -> OperatorMatrix {
        like.with_mat(self.b.clone())
    }
}

/// `ε / 2^{2k−1}` for 1-based `k`.
pub fn schedule(eps: f64, k: usize) -> f64 {
    eps / 2f64.powi(2 * k as i32 - 1)
}

/// Schedule when the `Q_k` are mutually orthogonal: `A − B = Σ P_k A Q_k`
/// then has disjoint column supports, so `ε/2^k` already gives `‖A − B‖ ≤ ε`.
pub fn disjoint_schedule(eps: f64, k: usize) -> f64 {
    eps / 2f64.powi(k as i32)
}

fn sandwich(p: &CMat, a: &CMat, q: &CMat) -> CMat {
    p * a * q
}

fn commute_check(family: &[&CMat], what: &str) -> Result<()> {
    for i in 0..family.len() {
        for j in i + 1..family.len() {
            let c = linalg::opnorm(linalg::commutator(family[i].as_ref(), family[j].as_ref()).as_ref());
            if c > 1e-10 {
                return Err(Error::InvalidArgument(format!("{what}_{} and {what}_{} do not commute ({c:.2e})", i + 1, j + 1)));
            }
        }
    }
    Ok(())
}

fn check_schedule(norms: &[f64], eps: f64) -> Result<()> {
    for (i, &n) in norms.iter().enumerate() {
        let bound = schedule(eps, i + 1);
        if n > bound * (1.0 + 1e-12) {
            return Err(Error::PreconditionBound { k: i + 1, norm: n, bound });
        }
    }
    Ok(())
}

fn bound_of(norms: &[f64]) -> f64 {
    norms.iter().enumerate().map(|(i, n)| 2f64.powi(i as i32) * n).sum()
}

/// `B = A − S_n` with `S_{k+1} = S_k + P_{k+1} A Q_{k+1} − P_{k+1} S_k Q_{k+1}`,
/// run as `B_{k+1} = B_k − P_{k+1} B_k Q_{k+1}`.
pub fn decouple(a: &CMat, pairs: &[(CMat, CMat)], eps: f64) -> Result<DecouplingResult> {
    commute_check(&pairs.iter().map(|p| &p.0).collect::<Vec<_>>(), "P")?;
    commute_check(&pairs.iter().map(|p| &p.1).collect::<Vec<_>>(), "Q")?;
    let norms: Vec<f64> = pairs.iter().map(|(p, q)| linalg::opnorm(sandwich(p, a, q).as_ref())).collect();
    check_schedule(&norms, eps)?;
    let mut b = a.clone();
    for (p, q) in pairs {
        let d = sandwich(p, &b, q);
        b -= d;
    }
    let s = a - &b;
    let certificates = pairs
        .iter()
        .enumerate()
        .map(|(k, (p, q))| (k + 1, linalg::opnorm(sandwich(p, &b, q).as_ref())))
        .collect();
    Ok(DecouplingResult {
        distance: linalg::opnorm(s.as_ref()),
        bound: bound_of(&norms),
        eps,
        certificates,
        pair_norms: norms,
        b,
    })
}

fn masked(x: &CMat, rows: &[bool], cols: &[bool]) -> CMat {
    CMat::from_fn(x.nrows(), x.ncols(), |i, j| if rows[i] && cols[j] { x[(i, j)] } else { c64::new(0.0, 0.0) })
}

fn row_mask(a: &OperatorMatrix, sites: &[usize]) -> Vec<bool> {
    let mut m = vec![false; a.dim()];
    for r in a.rows_of(sites) {
        m[r] = true;
    }
    m
}

/// Same recursion for site projections `Λ_{F_k}`, `Λ_{G_k}`, which commute
/// automatically.
pub fn decouple_sites(a: &OperatorMatrix, pairs: &[(Vec<usize>, Vec<usize>)], eps: f64) -> Result<DecouplingResult> {
    let masks: Vec<(Vec<bool>, Vec<bool>)> = pairs.iter().map(|(f, g)| (row_mask(a, f), row_mask(a, g))).collect();
    let am = a.mat();
    let norms: Vec<f64> = masks.iter().map(|(r, c)| linalg::opnorm(masked(am, r, c).as_ref())).collect();
    let disjoint = (0..a.dim()).all(|j| masks.iter().filter(|(_, c)| c[j]).count() <= 1);
    if disjoint {
        for (i, &nk) in norms.iter().enumerate() {
            let bound = disjoint_schedule(eps, i + 1);
            if nk > bound {
                return Err(Error::PreconditionBound { k: i + 1, norm: nk, bound });
            }
        }
    } else {
        check_schedule(&norms, eps)?;
    }
    // masked blocks are set to exact zeros
    let mut b = am.clone();
    for (r, c) in &masks {
        for j in (0..b.ncols()).filter(|&j| c[j]) {
            for i in (0..b.nrows()).filter(|&i| r[i]) {
                b[(i, j)] = c64::new(0.0, 0.0);
            }
        }
    }
    let s = am - &b;
    let certificates = masks
        .iter()
        .enumerate()
        .map(|(k, (r, c))| (k + 1, linalg::opnorm(masked(&b, r, c).as_ref())))
        .collect();
    Ok(DecouplingResult {
        distance: linalg::opnorm(s.as_ref()),
        bound: if disjoint { norms.iter().sum() } else { bound_of(&norms) },
        eps,
        certificates,
        pair_norms: norms,
        b,
    })
}

/// `S = Σ_{∅≠I} (−1)^{|I|+1} P_I A Q_I` summed over every subset, with
/// `P_I = Π_{i∈I} P_i`. Exponential in the number of pairs.
pub fn inclusion_exclusion_series(a: &CMat, pairs: &[(CMat, CMat)]) -> Result<CMat> {
    let n = pairs.len();
    if n > 16 {
        return Err(Error::InvalidArgument(format!("{n} pairs is too many for the subset sum")));
    }
    let mut s = CMat::zeros(a.nrows(), a.ncols());
    for mask in 1u32..(1 << n) {
        let mut p = linalg::eye(a.nrows());
        let mut q = linalg::eye(a.ncols());
        for (i, (pi, qi)) in pairs.iter().enumerate() {
            if mask & (1 << i) != 0 {
                p = &p * pi;
                q = &q * qi;
            }
        }
        let sign = if mask.count_ones() % 2 == 1 { 1.0 } else { -1.0 };
        s += linalg::scale((&p * a * &q).as_ref(), c64::new(sign, 0.0));
    }
    Ok(s)
}

fn gaussian_matrix<R: Rng>(rng: &mut R, n: usize) -> CMat {
    CMat::from_fn(n, n, |_, _| c64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
}

/// A random decoupling instance: `A` of size `dim`, `npairs` pairs whose
/// `P`'s (and `Q`'s) are diagonal in a shared random unitary basis, and the
/// smallest `ε` meeting the schedule, inflated by a random factor in `[1, 2)`.
pub fn random_instance<R: Rng>(rng: &mut R, dim: usize, npairs: usize) -> Result<(CMat, Vec<(CMat, CMat)>, f64)> {
    let a = gaussian_matrix(rng, dim);
    let h = gaussian_matrix(rng, dim);
    let h = linalg::scale((&h + h.adjoint()).as_ref(), c64::new(0.5, 0.0));
    let (_, w) = linalg::herm_eig(h.as_ref())?;
    let proj = |rng: &mut R| {
        let d: Vec<c64> = (0..dim).map(|_| c64::new(if rng.gen_bool(0.5) { 1.0 } else { 0.0 }, 0.0)).collect();
        &w * linalg::diag(&d) * w.adjoint()
    };
    let pairs: Vec<(CMat, CMat)> = (0..npairs).map(|_| (proj(rng), proj(rng))).collect();
    let eps = pairs
        .iter()
        .enumerate()
        .map(|(k, (p, q))| linalg::opnorm((p * &a * q).as_ref()) * 2f64.powi(2 * k as i32 + 1))
        .fold(0.0, f64::max)
        * (1.0 + rng.gen_range(0.0..1.0));
    Ok((a, pairs, eps.max(f64::MIN_POSITIVE)))
}
