//! Unit position operators, Dirac phase and projection, and the finite-volume
//! locality diagnostics (shell decay of cross-cone blocks).

use std::sync::Arc;

use faer::Mat;
use rayon::prelude::*;
use serde::Serialize;

use crate::clifford::complex_irrep;
use crate::error::{Error, Result};
use crate::lattice::{cone_sites, dyadic_cubes, DyadicCube, SiteIndexMap};
use crate::linalg::{self, c64, re, CMat, I, ONE, ZERO};
use crate::operator::OperatorMatrix;

/// `X̂_j ⊗ 1_N` for `j = 1..d`.
pub fn unit_position_ops(lattice: &Arc<SiteIndexMap>, fiber: usize) -> Vec<OperatorMatrix> {
    (0..lattice.d())
        .map(|j| rho_eval(lattice, fiber, |u| re(u[j])))
        .collect()
}

/// Multiplication by `f` sampled at the unit direction of each site.
pub fn rho_eval(lattice: &Arc<SiteIndexMap>, fiber: usize, f: impl Fn(&[f64]) -> c64) -> OperatorMatrix {
    let vals: Vec<c64> = (0..lattice.len()).map(|s| f(lattice.direction(s))).collect();
    OperatorMatrix::site_diagonal(lattice.clone(), fiber, |s| linalg::scale(linalg::eye(fiber).as_ref(), vals[s]))
}

/// Operator `⊕_x 1_N ⊗ b_x` acting on `l^2 ⊗ C^N ⊗ C^aux`.
#[derive(Debug, Clone)]
pub struct SiteLocal {
    pub lattice: Arc<SiteIndexMap>,
    pub fiber: usize,
    pub aux: usize,
    pub blocks: Vec<CMat>,
}

impl SiteLocal {
    pub fn total_fiber(&self) -> usize {
        self.fiber * self.aux
    }

    pub fn to_operator(&self) -> OperatorMatrix {
        let (n, a) = (self.fiber, self.aux);
        OperatorMatrix::site_diagonal(self.lattice.clone(), n * a, |s| {
            linalg::kron(linalg::eye(n).as_ref(), self.blocks[s].as_ref())
        })
    }

    /// `B (P ⊗ 1_aux) B*` for `P` on `l^2 ⊗ C^N`.
    pub fn sandwich(&self, p: &CMat) -> CMat {
        let (n, a) = (self.fiber, self.aux);
        let sites = self.lattice.len();
        let dim = sites * n * a;
        if a == 1 {
            let b: Vec<c64> = self.blocks.iter().map(|m| m[(0, 0)]).collect();
            return Mat::from_fn(dim, dim, |i, j| b[i / n] * p[(i, j)] * b[j / n].conj());
        }
        // (b_x b_y*)_{st} = Σ_u b_x[s,u] conj(b_y[t,u])
        let flat: Vec<Vec<c64>> = self
            .blocks
            .iter()
            .map(|m| (0..a * a).map(|k| m[(k / a, k % a)]).collect())
            .collect();
        let mut out = Mat::zeros(dim, dim);
        let mut m = vec![ZERO; a * a];
        for y in 0..sites {
            for x in 0..sites {
                for s in 0..a {
                    for t in 0..a {
                        m[s * a + t] = (0..a).map(|u| flat[x][s * a + u] * flat[y][t * a + u].conj()).sum();
                    }
                }
                for i in 0..n {
                    for j in 0..n {
                        let v = p[(x * n + i, y * n + j)];
                        if v == ZERO {
                            continue;
                        }
                        for s in 0..a {
                            for t in 0..a {
                                out[((x * n + i) * a + s, (y * n + j) * a + t)] = v * m[s * a + t];
                            }
                        }
                    }
                }
            }
        }
        out
    }

    /// `[A ⊗ 1_aux, B]`, entrywise `A_{xy} ⊗ (b_y - b_x)`.
    pub fn commutator_with(&self, a_mat: &CMat) -> CMat {
        let (n, a) = (self.fiber, self.aux);
        let sites = self.lattice.len();
        let mut out = Mat::zeros(sites * n * a, sites * n * a);
        for y in 0..sites {
            for x in 0..sites {
                let diff = &self.blocks[y] - &self.blocks[x];
                if linalg::is_zero(diff.as_ref()) {
                    continue;
                }
                for i in 0..n {
                    for j in 0..n {
                        let v = a_mat[(x * n + i, y * n + j)];
                        if v == ZERO {
                            continue;
                        }
                        for s in 0..a {
                            for t in 0..a {
                                out[((x * n + i) * a + s, (y * n + j) * a + t)] = v * diff[(s, t)];
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

/// Dirac phase `L_d = Σ_{j<d} X̂_j ⊗ 1_N ⊗ Ω_j + i X̂_d ⊗ 1_N ⊗ 1`, `Ω` the
/// irreducible representation of `Cl_{d-1}(C)`.
pub fn dirac_phase_local(lattice: &Arc<SiteIndexMap>, fiber: usize) -> Result<SiteLocal> {
    let d = lattice.d();
    if d % 2 == 1 {
        return Err(Error::OddDimension(d));
    }
    let omega = complex_irrep(d - 1);
    let a = omega.dim();
    let blocks = (0..lattice.len())
        .map(|s| {
            let u = lattice.direction(s);
            let mut b = linalg::scale(linalg::eye(a).as_ref(), I * u[d - 1]);
            for (j, g) in omega.generators.iter().enumerate() {
                b = linalg::add_scaled(b.as_ref(), g.as_ref(), re(u[j]));
            }
            b
        })
        .collect();
    Ok(SiteLocal { lattice: lattice.clone(), fiber, aux: a, blocks })
}

pub fn dirac_phase(lattice: &Arc<SiteIndexMap>, fiber: usize) -> Result<OperatorMatrix> {
    Ok(dirac_phase_local(lattice, fiber)?.to_operator())
}

/// Dirac projection `Λ_d = (Σ_j X̂_j ⊗ 1_N ⊗ Γ_j + 1)/2`.
pub fn dirac_projection_local(lattice: &Arc<SiteIndexMap>, fiber: usize) -> Result<SiteLocal> {
    let d = lattice.d();
    if d % 2 == 0 {
        return Err(Error::EvenDimension(d));
    }
    let w = flat_dirac_local(lattice, fiber);
    let a = w.aux;
    let blocks = w
        .blocks
        .iter()
        .map(|b| linalg::scale(linalg::add_scaled(b.as_ref(), linalg::eye(a).as_ref(), ONE).as_ref(), re(0.5)))
        .collect();
    Ok(SiteLocal { blocks, ..w })
}

pub fn dirac_projection(lattice: &Arc<SiteIndexMap>, fiber: usize) -> Result<OperatorMatrix> {
    Ok(dirac_projection_local(lattice, fiber)?.to_operator())
}

/// Flat Dirac operator `W_d = Σ_j X̂_j ⊗ 1_N ⊗ Γ_j`.
pub fn flat_dirac_local(lattice: &Arc<SiteIndexMap>, fiber: usize) -> SiteLocal {
    let gamma = complex_irrep(lattice.d());
    let a = gamma.dim();
    let blocks = (0..lattice.len())
        .map(|s| {
            let u = lattice.direction(s);
            let mut b = Mat::zeros(a, a);
            for (j, g) in gamma.generators.iter().enumerate() {
                b = linalg::add_scaled(b.as_ref(), g.as_ref(), re(u[j]));
            }
            b
        })
        .collect();
    SiteLocal { lattice: lattice.clone(), fiber, aux: a, blocks }
}

/// `‖[A ⊗ 1, W_d]‖`, restricted to sites with `|x| >= r` when given.
pub fn dirac_commutator_norm(a: &OperatorMatrix, shell: Option<f64>) -> f64 {
    let w = flat_dirac_local(&a.lattice_arc(), a.fiber());
    let c = w.commutator_with(a.mat());
    match shell {
        None => linalg::opnorm(c.as_ref()),
        Some(r) => {
            let rows = crate::operator::rows_of(&a.lattice().shell(r), w.total_fiber());
            linalg::opnorm(linalg::submatrix(c.as_ref(), &rows, &rows).as_ref())
        }
    }
}

/// `‖Λ_{≥r} [A, X̂_j] Λ_{≥r}‖` for each `j`.
pub fn shell_commutator_norms(a: &OperatorMatrix, r: f64) -> Vec<f64> {
    let l = a.lattice();
    let shell = l.shell(r);
    let n = a.fiber();
    (0..l.d())
        .map(|j| {
            let rows = a.rows_of(&shell);
            let m = Mat::from_fn(rows.len(), rows.len(), |p, q| {
                let (x, y) = (rows[p] / n, rows[q] / n);
                a.mat()[(rows[p], rows[q])] * (l.direction(y)[j] - l.direction(x)[j])
            });
            linalg::opnorm(m.as_ref())
        })
        .collect()
}

/// Spectral norm of a fiber block, closed form up to `2x2`.
pub fn block_norm(a: &CMat, x: usize, y: usize, n: usize) -> f64 {
    match n {
        1 => a[(x, y)].norm(),
        2 => {
            let (p, q, r, s) = (a[(2 * x, 2 * y)], a[(2 * x, 2 * y + 1)], a[(2 * x + 1, 2 * y)], a[(2 * x + 1, 2 * y + 1)]);
            let t = p.norm_sqr() + q.norm_sqr() + r.norm_sqr() + s.norm_sqr();
            let det = (p * s - q * r).norm_sqr();
            let disc = (t * t - 4.0 * det).max(0.0).sqrt();
            ((t + disc) / 2.0).sqrt()
        }
        _ => {
            let b = Mat::from_fn(n, n, |i, j| a[(x * n + i, y * n + j)]);
            linalg::opnorm(b.as_ref())
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LocalityCheck {
    pub pass: bool,
    pub max_violation: f64,
    pub witness: Option<(Vec<i64>, Vec<i64>)>,
}

fn pointwise_check(a: &OperatorMatrix, bound: impl Fn(usize, usize) -> f64 + Sync) -> LocalityCheck {
    let l = a.lattice();
    let n = a.fiber();
    let sites = l.len();
    let (viol, wit) = (0..sites)
        .into_par_iter()
        .map(|x| {
            let mut best = (0.0f64, None);
            for y in 0..sites {
                let v = block_norm(a.mat(), x, y, n) - bound(x, y);
                if v > best.0 {
                    best = (v, Some((x, y)));
                }
            }
            best
        })
        .reduce(|| (0.0, None), |p, q| if q.0 > p.0 || (q.0 == p.0 && q.1 < p.1 && q.1.is_some()) { q } else { p });
    LocalityCheck {
        pass: wit.is_none(),
        max_violation: viol,
        witness: wit.map(|(x, y)| (l.site(x).to_vec(), l.site(y).to_vec())),
    }
}

/// `‖A_{xy}‖ <= C e^{-μ|x-y|}` for all site pairs.
pub fn is_exponentially_local(a: &OperatorMatrix, c: f64, mu: f64) -> LocalityCheck {
    let l = a.lattice_arc();
    pointwise_check(a, |x, y| c * (-mu * l.distance(x, y)).exp() * (1.0 + 1e-12))
}

/// `‖A_{xy}‖ <= C_μ (1+|x-y|)^{-μ} (1+|x|)^{ν}`.
pub fn is_weakly_local(a: &OperatorMatrix, nu: f64, mu: f64, c_mu: f64) -> LocalityCheck {
    let l = a.lattice_arc();
    pointwise_check(a, |x, y| {
        c_mu * (1.0 + l.distance(x, y)).powf(-mu) * (1.0 + l.norm(x)).powf(nu) * (1.0 + 1e-12)
    })
}

/// Pairs of generation-`g` cubes with nonempty cones whose closed boxes are
/// disjoint, with their cone site lists.
pub fn disjoint_cube_pairs(lattice: &SiteIndexMap, g: u32) -> Vec<(DyadicCube, Vec<usize>, DyadicCube, Vec<usize>)> {
    let cones: Vec<(DyadicCube, Vec<usize>)> = dyadic_cubes(lattice.d(), g)
        .into_iter()
        .map(|c| {
            let s = cone_sites(lattice, &c).sites;
            (c, s)
        })
        .filter(|(_, s)| !s.is_empty())
        .collect();
    let mut out = Vec::new();
    for (i, (a, sa)) in cones.iter().enumerate() {
        for (b, sb) in cones.iter().skip(i + 1) {
            if a.disjoint(b) {
                out.push((a.clone(), sa.clone(), b.clone(), sb.clone()));
            }
        }
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct PairValue {
    pub first: Vec<i64>,
    pub second: Vec<i64>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct LocalityProfile {
    pub generation: u32,
    pub radii: Vec<f64>,
    /// max over disjoint cube pairs, per radius
    pub values: Vec<f64>,
    pub pairs: Vec<PairValue>,
    /// `‖Λ_{≥r}[A, X̂_j]Λ_{≥r}‖`, per radius then per `j`
    pub commutators: Vec<Vec<f64>>,
    pub threshold: f64,
    pub verdict: bool,
}

impl LocalityProfile {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("radius,pair,value\n");
        for p in &self.pairs {
            for (r, v) in self.radii.iter().zip(&p.values) {
                s.push_str(&format!("{r},{:?}|{:?},{v:e}\n", p.first, p.second));
            }
        }
        s
    }
}

pub const THETA_LOC: f64 = 1e-3;

/// Monotone non-increasing (up to rounding) over at least three radii and
/// below `theta` at the last one.
pub fn decays(values: &[f64], theta: f64) -> bool {
    values.len() >= 3
        && values.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-9) + 1e-14)
        && values.last().is_some_and(|&v| v <= theta)
}

/// Largest cross-cone block `‖Λ_{C_I ∖ B_r} A Λ_{C_J ∖ B_r}‖` over disjoint
/// generation-`g` cube pairs, both orders.
pub fn cone_coupling(a: &OperatorMatrix, g: u32, r: f64) -> f64 {
    let l = a.lattice();
    disjoint_cube_pairs(l, g)
        .iter()
        .map(|(_, s1, _, s2)| {
            let f: Vec<usize> = s1.iter().copied().filter(|&i| l.norm(i) >= r - 1e-12).collect();
            let h: Vec<usize> = s2.iter().copied().filter(|&i| l.norm(i) >= r - 1e-12).collect();
            if f.is_empty() || h.is_empty() {
                return 0.0;
            }
            let b1 = a.block_matrix(&f, &h);
            let b2 = a.block_matrix(&h, &f);
            linalg::opnorm(b1.as_ref()).max(linalg::opnorm(b2.as_ref()))
        })
        .fold(0.0, f64::max)
}

pub fn locality_profile(a: &OperatorMatrix, g: u32, radii: &[f64]) -> LocalityProfile {
    locality_profile_with(a, g, radii, THETA_LOC)
}

pub fn locality_profile_with(a: &OperatorMatrix, g: u32, radii: &[f64], theta: f64) -> LocalityProfile {
    let l = a.lattice();
    let pairs_in = disjoint_cube_pairs(l, g);
    let pairs: Vec<PairValue> = pairs_in
        .par_iter()
        .map(|(c1, s1, c2, s2)| {
            let values = radii
                .iter()
                .map(|&r| {
                    let f: Vec<usize> = s1.iter().copied().filter(|&i| l.norm(i) >= r - 1e-12).collect();
                    let h: Vec<usize> = s2.iter().copied().filter(|&i| l.norm(i) >= r - 1e-12).collect();
                    let b1 = a.block_matrix(&f, &h);
                    let b2 = a.block_matrix(&h, &f);
                    linalg::opnorm(b1.as_ref()).max(linalg::opnorm(b2.as_ref()))
                })
                .collect();
            PairValue { first: c1.corner.clone(), second: c2.corner.clone(), values }
        })
        .collect();
    let values: Vec<f64> = (0..radii.len())
        .map(|k| pairs.iter().map(|p| p.values[k]).fold(0.0, f64::max))
        .collect();
    let commutators = radii.iter().map(|&r| shell_commutator_norms(a, r)).collect();
    let verdict = decays(&values, theta);
    LocalityProfile { generation: g, radii: radii.to_vec(), values, pairs, commutators, threshold: theta, verdict }
}

#[derive(Debug, Clone, Serialize)]
pub struct CubeMass {
    pub cube: Vec<i64>,
    /// `‖Λ_{I,≥r} P Λ_{I,≥r}‖` per radius
    pub p: Vec<f64>,
    /// same for `P^⊥`
    pub p_perp: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Witness {
    pub cube: Vec<i64>,
    pub side: String,
    pub radius: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BulkReport {
    pub generation: u32,
    pub radii: Vec<f64>,
    pub threshold: f64,
    pub cubes: Vec<CubeMass>,
    /// cone blocks that vanish identically
    pub zero_witnesses: Vec<Witness>,
    pub nontrivial: bool,
}

pub const THETA_NT: f64 = 1e-3;

/// Largest singular value of `P` and `P^⊥` compressed to each cone shell.
pub fn bulk_nontriviality(p: &OperatorMatrix, g: u32, radii: &[f64], theta: f64) -> BulkReport {
    let l = p.lattice();
    let pp = p.complement();
    let cones: Vec<(DyadicCube, Vec<usize>)> = dyadic_cubes(l.d(), g)
        .into_iter()
        .map(|c| {
            let s = cone_sites(l, &c).sites;
            (c, s)
        })
        .filter(|(_, s)| !s.is_empty())
        .collect();
    let results: Vec<(CubeMass, Vec<Witness>)> = cones
        .par_iter()
        .map(|(c, s)| {
            let mut mp = Vec::new();
            let mut mq = Vec::new();
            let mut wit = Vec::new();
            for &r in radii {
                let f: Vec<usize> = s.iter().copied().filter(|&i| l.norm(i) >= r - 1e-12).collect();
                let bp = p.block_matrix(&f, &f);
                let bq = pp.block_matrix(&f, &f);
                if !f.is_empty() && linalg::is_zero(bp.as_ref()) {
                    wit.push(Witness { cube: c.corner.clone(), side: "P".into(), radius: r });
                }
                if !f.is_empty() && linalg::is_zero(bq.as_ref()) {
                    wit.push(Witness { cube: c.corner.clone(), side: "P_perp".into(), radius: r });
                }
                mp.push(linalg::opnorm(bp.as_ref()));
                mq.push(linalg::opnorm(bq.as_ref()));
            }
            (CubeMass { cube: c.corner.clone(), p: mp, p_perp: mq }, wit)
        })
        .collect();
    let nontrivial = results
        .iter()
        .all(|(m, _)| m.p.iter().chain(&m.p_perp).all(|&v| v >= theta));
    let (cubes, wits): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    BulkReport {
        generation: g,
        radii: radii.to_vec(),
        threshold: theta,
        cubes,
        zero_witnesses: wits.into_iter().flatten().collect(),
        nontrivial,
    }
}

fn det_int(m: &[Vec<i64>]) -> i64 {
    let n = m.len();
    if n == 1 {
        return m[0][0];
    }
    (0..n)
        .map(|c| {
            let minor: Vec<Vec<i64>> = m[1..]
                .iter()
                .map(|row| row.iter().enumerate().filter(|(k, _)| *k != c).map(|(_, v)| *v).collect())
                .collect();
            let s = if c % 2 == 0 { 1 } else { -1 };
            s * m[0][c] * det_int(&minor)
        })
        .sum()
}

fn adjugate(m: &[Vec<i64>]) -> Vec<Vec<i64>> {
    let n = m.len();
    if n == 1 {
        return vec![vec![1]];
    }
    let mut adj = vec![vec![0; n]; n];
    for i in 0..n {
        for j in 0..n {
            let minor: Vec<Vec<i64>> = m
                .iter()
                .enumerate()
                .filter(|(r, _)| *r != i)
                .map(|(_, row)| row.iter().enumerate().filter(|(k, _)| *k != j).map(|(_, v)| *v).collect())
                .collect();
            let s = if (i + j) % 2 == 0 { 1 } else { -1 };
            adj[j][i] = s * det_int(&minor);
        }
    }
    adj
}

/// Superlattice `M Z^d` with coset representatives `R`.
#[derive(Debug, Clone)]
pub struct Redimerization {
    pub m: Vec<Vec<i64>>,
    pub reps: Vec<Vec<i64>>,
    det: i64,
    adj: Vec<Vec<i64>>,
}

impl Redimerization {
    pub fn new(m: Vec<Vec<i64>>, reps: Vec<Vec<i64>>) -> Result<Self> {
        let d = m.len();
        if d == 0 || m.iter().any(|r| r.len() != d) || reps.iter().any(|r| r.len() != d) {
            return Err(Error::InvalidCosets("shape mismatch".into()));
        }
        let det = det_int(&m);
        if det == 0 || det.unsigned_abs() as usize != reps.len() {
            return Err(Error::InvalidCosets(format!("|det M| = {} but {} representatives", det.abs(), reps.len())));
        }
        let adj = adjugate(&m);
        let me = Self { m, reps, det, adj };
        for i in 0..me.reps.len() {
            for j in 0..i {
                let diff: Vec<i64> = me.reps[i].iter().zip(&me.reps[j]).map(|(a, b)| a - b).collect();
                if me.coarse_of(&diff).is_some() {
                    return Err(Error::InvalidCosets(format!(
                        "{:?} and {:?} are congruent mod M",
                        me.reps[i], me.reps[j]
                    )));
                }
            }
        }
        Ok(me)
    }

    pub fn dominoes() -> Self {
        Self::new(vec![vec![2, 0], vec![0, 1]], vec![vec![0, 0], vec![1, 0]]).expect("domino cosets")
    }

    /// P-pentomino tiling. The listed tiles are a residue system for the
    /// lattice spanned by the rows of `[[2,-1],[1,2]]`, so the column basis is
    /// its transpose.
    pub fn l_shapes() -> Self {
        Self::new(
            vec![vec![2, 1], vec![-1, 2]],
            vec![vec![0, 0], vec![0, 1], vec![1, 0], vec![1, 1], vec![0, 2]],
        )
        .expect("L-shape cosets")
    }

    pub fn index(&self) -> usize {
        self.reps.len()
    }

    /// `M^{-1} v` when integral.
    fn coarse_of(&self, v: &[i64]) -> Option<Vec<i64>> {
        let d = v.len();
        let mut q = vec![0; d];
        for i in 0..d {
            let s: i64 = (0..d).map(|k| self.adj[i][k] * v[k]).sum();
            if s % self.det != 0 {
                return None;
            }
            q[i] = s / self.det;
        }
        Some(q)
    }

    pub fn apply_m(&self, q: &[i64]) -> Vec<i64> {
        self.m.iter().map(|row| row.iter().zip(q).map(|(a, b)| a * b).sum()).collect()
    }

    /// `(q, r)` with `x = M q + r`.
    pub fn decompose(&self, x: &[i64]) -> (Vec<i64>, usize) {
        for (k, r) in self.reps.iter().enumerate() {
            let v: Vec<i64> = x.iter().zip(r).map(|(a, b)| a - b).collect();
            if let Some(q) = self.coarse_of(&v) {
                return (q, k);
            }
        }
        unreachable!("representatives form a complete residue system")
    }

    /// Coarse ball `B_{R_c}` and the fine region `{Mq + r}` covering it.
    pub fn lattices(&self, coarse_radius: f64, fiber: usize) -> Result<(Arc<SiteIndexMap>, Arc<SiteIndexMap>)> {
        let d = self.m.len();
        let coarse = SiteIndexMap::ball(d, coarse_radius, fiber * self.index())?;
        let mut sites: Vec<Vec<i64>> = coarse
            .sites()
            .iter()
            .flat_map(|q| {
                let mq = self.apply_m(q);
                self.reps.iter().map(move |r| mq.iter().zip(r).map(|(a, b)| a + b).collect::<Vec<i64>>())
            })
            .collect();
        sites.sort();
        let fine = SiteIndexMap::from_sites(d, sites, fiber)?;
        Ok((Arc::new(fine), Arc::new(coarse)))
    }

    /// Row permutation `fine (x, i) ↦ coarse (q, r, i)`.
    pub fn row_map(&self, fine: &SiteIndexMap, coarse: &SiteIndexMap, fiber: usize) -> Result<Vec<usize>> {
        let k = self.index();
        let mut map = vec![0; fine.len() * fiber];
        for s in 0..fine.len() {
            let (q, r) = self.decompose(fine.site(s));
            let c = coarse
                .index_of(&q)
                .ok_or_else(|| Error::LatticeMismatch(format!("site {:?} has no coarse image", fine.site(s))))?;
            for i in 0..fiber {
                map[s * fiber + i] = (c * k + r) * fiber + i;
            }
        }
        Ok(map)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DefectDecay {
    pub radii: Vec<f64>,
    /// `sup_{|x| >= r} |D_j(x)|` per radius, max over `j`
    pub values: Vec<f64>,
    /// `sup_{|x| >= r} 2|r_x|/|M q_x|`
    pub bound: Vec<f64>,
    pub monotone: bool,
}

pub struct Redimerized {
    pub coarse: Arc<SiteIndexMap>,
    pub operator: OperatorMatrix,
    pub row_map: Vec<usize>,
    pub defect: DefectDecay,
}

/// Permutes a matrix by `map` (rows and columns).
pub fn permute(a: &CMat, map: &[usize]) -> CMat {
    let n = a.nrows();
    let mut out = Mat::zeros(n, n);
    for j in 0..n {
        for i in 0..n {
            out[(map[i], map[j])] = a[(i, j)];
        }
    }
    out
}

/// `U A U*` with `U δ_x = δ_q ⊗ e_r`, plus the shell decay of
/// `D_j = X̂_j - U*(Ŷ_j ⊗ 1)U`, `Ŷ = M X̂ / |M X̂|`.
pub fn redimerize(a: &OperatorMatrix, map: &Redimerization, coarse_radius: f64, radii: &[f64]) -> Result<Redimerized> {
    let fiber = a.fiber();
    let (fine, coarse) = map.lattices(coarse_radius, fiber)?;
    if fine.sites() != a.lattice().sites() {
        return Err(Error::LatticeMismatch("operator must live on the fine region of the map".into()));
    }
    let row_map = map.row_map(&fine, &coarse, fiber)?;
    let b = permute(a.mat(), &row_map);
    let operator = OperatorMatrix::new(coarse.clone(), fiber * map.index(), b)?;
    let d = fine.d();
    let defects: Vec<(f64, f64, f64)> = (0..fine.len())
        .map(|s| {
            let x = fine.site(s);
            let (q, r) = map.decompose(x);
            let mut mq = map.apply_m(&q);
            if q.iter().all(|&v| v == 0) {
                let mut e1 = vec![0; d];
                e1[0] = 1;
                mq = map.apply_m(&e1);
            }
            let yn = (mq.iter().map(|v| (v * v) as f64).sum::<f64>()).sqrt();
            let u = fine.direction(s);
            let dj = (0..d).map(|j| (u[j] - mq[j] as f64 / yn).abs()).fold(0.0, f64::max);
            let rn = (map.reps[r].iter().map(|v| (v * v) as f64).sum::<f64>()).sqrt();
            (fine.norm(s), dj, 2.0 * rn / yn)
        })
        .collect();
    let values: Vec<f64> = radii
        .iter()
        .map(|&r| defects.iter().filter(|t| t.0 >= r).map(|t| t.1).fold(0.0, f64::max))
        .collect();
    let bound: Vec<f64> = radii
        .iter()
        .map(|&r| defects.iter().filter(|t| t.0 >= r).map(|t| t.2).fold(0.0, f64::max))
        .collect();
    let monotone = values.len() >= 3 && values.windows(2).all(|w| w[1] < w[0]);
    Ok(Redimerized { coarse, operator, row_map, defect: DefectDecay { radii: radii.to_vec(), values, bound, monotone } })
}
