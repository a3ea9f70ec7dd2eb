//! Strong indices as relative indices of projection pairs,
//! `tr((Q - P)^{2n+1})`, with windowed traces and convergence tables.
//!
//! `ind(PUP + P^⊥) = tr((UPU* - P)^{2n+1})` whenever the difference is in a
//! Schatten class; for the unit right shift on the half line both sides
//! equal `-1`.

use faer::Mat;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, c64, CMat, ZERO};
use crate::locality::dirac_phase_local;
use crate::operator::OperatorMatrix;

pub const THETA_INT: f64 = 0.05;

#[derive(Debug, Clone, Serialize)]
pub struct IndexReport {
    pub value: i64,
    pub raw: f64,
    pub raw_imag: f64,
    pub residual: f64,
    pub power: usize,
    /// `(radius, raw trace)`: trace windows or nested truncations
    pub table: Vec<(f64, f64)>,
    pub certified: bool,
}

impl IndexReport {
    fn from_table(table: Vec<(f64, f64)>, raw_imag: f64, power: usize, theta: f64) -> Self {
        let raw = table.last().map_or(0.0, |t| t.1);
        let value = raw.round();
        let residual = (raw - value).abs();
        let stable = table.len() >= 2 && table.windows(2).last().is_some_and(|w| (w[1].1 - w[0].1).abs() < theta / 2.0);
        Self {
            value: value as i64,
            raw,
            raw_imag,
            residual,
            power,
            table,
            certified: stable && residual <= theta && raw_imag.abs() <= theta,
        }
    }

    fn require_certified(self) -> Result<Self> {
        if self.certified {
            Ok(self)
        } else {
            Err(Error::NotConverged(format!(
                "raw {:.4} (residual {:.3e}), table {:?}",
                self.raw, self.residual, self.table
            )))
        }
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("radius,raw\n");
        for (r, v) in &self.table {
            s.push_str(&format!("{r},{v}\n"));
        }
        s
    }
}

#[derive(Debug, Clone, Copy)]
pub struct IndexOptions {
    /// odd power `2n+1`; `None` picks the smallest odd number `> d`
    pub power: Option<usize>,
    pub theta_int: f64,
}

impl Default for IndexOptions {
    fn default() -> Self {
        Self { power: None, theta_int: THETA_INT }
    }
}

pub fn default_power(d: usize) -> usize {
    (d + 1) | 1
}

fn check_power(p: usize) -> Result<usize> {
    if p % 2 == 0 || p == 0 {
        return Err(Error::InvalidArgument(format!("power {p} must be odd")));
    }
    Ok(p)
}

/// `Σ_{i ∈ rows} (D^p)_{ii}`, propagating only the selected rows.
pub fn windowed_power_trace(d: &CMat, rows: &[usize], p: usize) -> c64 {
    if rows.is_empty() {
        return ZERO;
    }
    let mut r = Mat::from_fn(rows.len(), d.ncols(), |i, j| d[(rows[i], j)]);
    for _ in 1..p - 1 {
        r = &r * d;
    }
    if p == 1 {
        return rows.iter().enumerate().map(|(i, &k)| r[(i, k)]).fold(ZERO, |a, b| a + b);
    }
    rows.iter()
        .enumerate()
        .map(|(i, &k)| (0..d.nrows()).map(|l| r[(i, l)] * d[(l, k)]).fold(ZERO, |a, b| a + b))
        .fold(ZERO, |a, b| a + b)
}

/// Traces of `D^p` over nested row sets (each a subset of the last one),
/// propagating the largest set once.
pub fn nested_window_traces(d: &CMat, windows: &[Vec<usize>], p: usize) -> Vec<c64> {
    let Some(outer) = windows.last() else { return Vec::new() };
    let mut pos = vec![usize::MAX; d.nrows()];
    for (i, &r) in outer.iter().enumerate() {
        pos[r] = i;
    }
    let mut r = Mat::from_fn(outer.len(), d.ncols(), |i, j| d[(outer[i], j)]);
    for _ in 1..p.max(1) - 1 {
        r = &r * d;
    }
    let diag: Vec<c64> = if p == 1 {
        outer.iter().enumerate().map(|(i, &k)| r[(i, k)]).collect()
    } else {
        outer
            .par_iter()
            .enumerate()
            .map(|(i, &k)| (0..d.nrows()).map(|l| r[(i, l)] * d[(l, k)]).fold(ZERO, |a, b| a + b))
            .collect()
    };
    windows
        .iter()
        .map(|w| w.iter().map(|&k| diag[pos[k]]).fold(ZERO, |a, b| a + b))
        .collect()
}

fn projection_residual(p: &CMat) -> f64 {
    linalg::max_abs((p * p - p).as_ref()).max(linalg::max_abs((p - p.adjoint()).as_ref()))
}

/// `tr((P - Q)^{2n+1})` over the whole truncation.
pub fn relative_index(p: &OperatorMatrix, q: &OperatorMatrix, n: usize) -> Result<IndexReport> {
    relative_index_with(p, q, n, THETA_INT)
}

pub fn relative_index_with(p: &OperatorMatrix, q: &OperatorMatrix, n: usize, theta: f64) -> Result<IndexReport> {
    p.same_space(q)?;
    for (name, m) in [("P", p.mat()), ("Q", q.mat())] {
        let r = projection_residual(m);
        if r > 1e-8 {
            return Err(Error::InvalidArgument(format!("{name} is not a projection (residual {r:.3e})")));
        }
    }
    let power = 2 * n + 1;
    let d = p.mat() - q.mat();
    let rows: Vec<usize> = (0..d.nrows()).collect();
    let t = windowed_power_trace(&d, &rows, power);
    let radius = p.lattice().radius();
    // a full trace is exact for the pair; one entry twice marks it stable
    let r = IndexReport::from_table(vec![(radius, t.re), (radius, t.re)], t.im, power, theta);
    r.require_certified()
}

/// Trace windows `R - margin - step·i`, `i = 2, 1, 0`.
pub fn trace_windows(radius: f64) -> Vec<f64> {
    let margin = (radius / 4.0).ceil().max(2.0);
    let step = (radius / 10.0).floor().max(1.0);
    (0..3).rev().map(|i| radius - margin - step * i as f64).collect()
}

/// Windowed relative index of `(Q, P)` for `D = Q - P` on a lattice with
/// total fiber `fiber`.
fn windowed_index(op: &OperatorMatrix, d: &CMat, fiber: usize, power: usize, theta: f64) -> Result<IndexReport> {
    let l = op.lattice();
    let radius = l.radius();
    if radius <= 3.0 {
        return Err(Error::NotConverged(format!("radius {radius} leaves no trace window")));
    }
    let windows = trace_windows(radius);
    let traces = nested_window_traces(d, &windows.iter().map(|&r| crate::operator::rows_of(&l.ball_indices(r), fiber)).collect::<Vec<_>>(), power);
    let imag = traces.iter().map(|t| t.im.abs()).fold(0.0, f64::max);
    let table = windows.iter().zip(&traces).map(|(&r, t)| (r, t.re)).collect();
    Ok(IndexReport::from_table(table, imag, power, theta))
}

/// `ind(Λ_d U_(2^k) Λ_d + Λ_d^⊥) = tr((Ũ Λ_d Ũ* - Λ_d)^p)` for odd `d`,
/// uncertified reports included.
pub fn odd_index_report(u: &OperatorMatrix, opts: IndexOptions) -> Result<IndexReport> {
    let l = u.lattice_arc();
    let d = l.d();
    if d % 2 == 0 {
        return Err(Error::EvenDimension(d));
    }
    let power = check_power(opts.power.unwrap_or_else(|| default_power(d)))?;
    let n = u.fiber();
    // Ũ Λ Ũ* - Λ = ½ Σ_j (U X̂_j U* - X̂_j) ⊗ Γ_j
    let gamma = crate::clifford::complex_irrep(d);
    let aux = gamma.dim();
    let dim = u.dim();
    let ua = u.mat().adjoint().to_owned();
    let mut big = Mat::<c64>::zeros(dim * aux, dim * aux);
    for (j, g) in gamma.generators.iter().enumerate() {
        let xj: Vec<f64> = (0..dim).map(|r| l.direction(r / n)[j]).collect();
        let ux = Mat::from_fn(dim, dim, |a, b| u.mat()[(a, b)] * xj[b]);
        let mut c = &ux * &ua;
        for r in 0..dim {
            c[(r, r)] -= linalg::re(xj[r]);
        }
        for a in 0..dim {
            for b in 0..dim {
                let v = c[(a, b)] * 0.5;
                if v == ZERO {
                    continue;
                }
                for s in 0..aux {
                    for t in 0..aux {
                        big[(a * aux + s, b * aux + t)] += v * g[(s, t)];
                    }
                }
            }
        }
    }
    windowed_index(u, &big, n * aux, power, opts.theta_int)
}

pub fn odd_index(u: &OperatorMatrix, opts: IndexOptions) -> Result<IndexReport> {
    odd_index_report(u, opts)?.require_certified()
}

/// `ind(P̃ L_d P̃ + P̃^⊥) = tr((L_d P̃ L_d* - P̃)^p)`, `P̃ = P ⊗ 1_{2^{k-1}}`,
/// for even `d`, uncertified reports included.
pub fn even_index_report(p: &OperatorMatrix, opts: IndexOptions) -> Result<IndexReport> {
    let l = p.lattice_arc();
    let d = l.d();
    if d % 2 == 1 {
        return Err(Error::OddDimension(d));
    }
    let power = check_power(opts.power.unwrap_or_else(|| default_power(d)))?;
    let phase = dirac_phase_local(&l, p.fiber())?;
    let q = phase.sandwich(p.mat());
    let pt = linalg::kron(p.mat().as_ref(), linalg::eye(phase.aux).as_ref());
    let diff = q - pt;
    windowed_index(p, &diff, phase.total_fiber(), power, opts.theta_int)
}

pub fn even_index(p: &OperatorMatrix, opts: IndexOptions) -> Result<IndexReport> {
    even_index_report(p, opts)?.require_certified()
}

/// Index of a unitary (odd `d`) or projection (even `d`), by dimension.
pub fn strong_index_report(op: &OperatorMatrix, opts: IndexOptions) -> Result<IndexReport> {
    if op.lattice().d() % 2 == 1 {
        odd_index_report(op, opts)
    } else {
        even_index_report(op, opts)
    }
}

/// Recomputes on nested truncations and certifies stabilization of the
/// largest-radius value. `compute(R)` builds the input at radius `R`.
pub fn index_convergence<F>(radii: &[f64], theta: f64, compute: F) -> Result<IndexReport>
where
    F: Fn(f64) -> Result<IndexReport> + Sync,
{
    if radii.len() < 2 {
        return Err(Error::NotConverged("need at least two radii".into()));
    }
    if let Some(&r) = radii.iter().find(|&&r| r <= 3.0) {
        return Err(Error::NotConverged(format!("radius {r} is under-resolved")));
    }
    let mut sorted = radii.to_vec();
    sorted.sort_by(f64::total_cmp);
    let reports: Vec<IndexReport> = sorted.par_iter().map(|&r| compute(r)).collect::<Result<_>>()?;
    let table: Vec<(f64, f64)> = sorted.iter().zip(&reports).map(|(&r, rep)| (r, rep.raw)).collect();
    let last = reports.last().expect("nonempty");
    let mut out = IndexReport::from_table(table, last.raw_imag, last.power, theta);
    out.certified &= last.certified;
    out.require_certified()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::build_lattice;
    use crate::linalg::ONE;
    use crate::locality::dirac_projection;
    use std::sync::Arc;

    fn chain(r: f64) -> Arc<crate::lattice::SiteIndexMap> {
        Arc::new(build_lattice(1, r, 1).unwrap())
    }

    fn shift(l: &crate::lattice::SiteIndexMap) -> OperatorMatrix {
        // δ_x ↦ δ_{x+1}, with the last site wrapped to the first
        let n = l.len();
        let m = Mat::from_fn(n, n, |i, j| if i == (j + 1) % n { ONE } else { ZERO });
        OperatorMatrix::new(Arc::new(l.clone()), 1, m).unwrap()
    }

    #[test]
    fn relative_index_examples() {
        let l = chain(6.0);
        let p = OperatorMatrix::projector(l.clone(), 1, &[5, 6, 7, 8]);
        assert_eq!(relative_index(&p, &p, 1).unwrap().raw, 0.0);
        let q = OperatorMatrix::projector(l.clone(), 1, &[6, 7, 8]);
        assert_eq!(relative_index(&p, &q, 1).unwrap().value, 1);
        let r = relative_index(&q, &p, 2).unwrap();
        assert_eq!((r.value, r.power), (-1, 5));
    }

    #[test]
    fn shift_pair_brute_force() {
        // P = Λ (x ≥ 0), Q = SΛS*: the difference is δ_0 ⊗ δ_0 plus the wrap
        let l = chain(50.0);
        let s = shift(&l);
        let lam = dirac_projection(&l, 1).unwrap();
        let q = s.mul(&lam).unwrap().mul(&s.adjoint()).unwrap();
        let win: Vec<usize> = l.ball_indices(40.0);
        let d = lam.mat() - q.mat();
        let t = windowed_power_trace(&d, &win, 3);
        assert!((t - ONE).norm() < 1e-12);
    }

    #[test]
    fn fredholm_sign_of_shift() {
        // Λ S Λ on the half line is injective with one-dimensional cokernel:
        // index -1, which the odd index reproduces
        let l = chain(12.0);
        let rep = odd_index(&shift(&l), IndexOptions::default()).unwrap();
        assert_eq!(rep.value, -1);
        assert!(rep.residual < 1e-12);
        let back = odd_index(&shift(&l).adjoint(), IndexOptions::default()).unwrap();
        assert_eq!(back.value, 1);
    }

    #[test]
    fn identity_and_zero() {
        let l = chain(10.0);
        assert_eq!(odd_index(&OperatorMatrix::identity(l.clone(), 2), IndexOptions::default()).unwrap().raw, 0.0);
        let l2 = Arc::new(build_lattice(2, 6.0, 1).unwrap());
        assert_eq!(even_index(&OperatorMatrix::zeros(l2, 2), IndexOptions::default()).unwrap().raw, 0.0);
    }

    #[test]
    fn under_resolved_is_refused() {
        let l = chain(3.0);
        let r = odd_index(&OperatorMatrix::identity(l, 1), IndexOptions::default());
        assert!(matches!(r, Err(Error::NotConverged(_))));
        let c = index_convergence(&[2.0, 3.0], THETA_INT, |_| unreachable!());
        assert!(matches!(c, Err(Error::NotConverged(_))));
    }

    #[test]
    fn windows() {
        assert_eq!(trace_windows(20.0), vec![11.0, 13.0, 15.0]);
        assert_eq!(trace_windows(8.0), vec![4.0, 5.0, 6.0]);
        assert_eq!(default_power(1), 3);
        assert_eq!(default_power(2), 3);
        assert_eq!(default_power(3), 5);
    }
}
