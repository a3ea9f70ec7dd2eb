//! Model Hamiltonians on truncated lattices, seeded disorder, the half-plane
//! projections and momentum-space oracles.
//!
//! Translation-invariant parts are described once by [`Hopping`] terms; the
//! real-space builder truncates them with open boundaries and the oracles
//! evaluate the Bloch symbol `Σ T_e e^{-ik·e}` on a periodic grid.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::Arc;

use faer::Mat;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::SiteIndexMap;
use crate::linalg::{self, c64, cx, re, CMat, I, ONE, ZERO};
use crate::operator::{spectral_gap, OperatorMatrix, SpectralGapReport};
use crate::symmetry::AZClass;

/// Block `T` placed at rows of `x + disp`, columns of `x`.
#[derive(Debug, Clone)]
pub struct Hopping {
    pub disp: Vec<i64>,
    pub block: CMat,
}

#[derive(Debug, Clone)]
pub struct TranslationModel {
    pub d: usize,
    pub fiber: usize,
    pub terms: Vec<Hopping>,
}

impl TranslationModel {
    /// `Σ_e T_e e^{-i k·e}`.
    pub fn symbol(&self, k: &[f64]) -> CMat {
        let mut s = linalg::zeros(self.fiber, self.fiber);
        for t in &self.terms {
            let ph: f64 = t.disp.iter().zip(k).map(|(&e, &k)| e as f64 * k).sum();
            s = linalg::add_scaled(s.as_ref(), t.block.as_ref(), c64::from_polar(1.0, -ph));
        }
        s
    }

    /// `∂_{k_j}` of the symbol.
    pub fn symbol_derivative(&self, k: &[f64], j: usize) -> CMat {
        let mut s = linalg::zeros(self.fiber, self.fiber);
        for t in &self.terms {
            if t.disp[j] == 0 {
                continue;
            }
            let ph: f64 = t.disp.iter().zip(k).map(|(&e, &k)| e as f64 * k).sum();
            let c = c64::from_polar(1.0, -ph) * cx(0.0, -(t.disp[j] as f64));
            s = linalg::add_scaled(s.as_ref(), t.block.as_ref(), c);
        }
        s
    }

    /// Open-boundary truncation to the lattice sites.
    pub fn real_space(&self, lattice: &SiteIndexMap) -> CMat {
        let n = self.fiber;
        let mut m = Mat::zeros(lattice.len() * n, lattice.len() * n);
        for x in 0..lattice.len() {
            for t in &self.terms {
                let y: Vec<i64> = lattice.site(x).iter().zip(&t.disp).map(|(a, b)| a + b).collect();
                if let Some(yi) = lattice.index_of(&y) {
                    for i in 0..n {
                        for j in 0..n {
                            m[(yi * n + i, x * n + j)] += t.block[(i, j)];
                        }
                    }
                }
            }
        }
        m
    }
}

fn pauli(k: usize) -> CMat {
    match k {
        0 => linalg::eye(2),
        1 => linalg::real_rows(&[&[0.0, 1.0], &[1.0, 0.0]]),
        2 => linalg::from_rows(&[vec![ZERO, -I], vec![I, ZERO]]),
        3 => linalg::real_rows(&[&[1.0, 0.0], &[0.0, -1.0]]),
        _ => unreachable!(),
    }
}

fn unit(d: usize, j: usize, s: i64) -> Vec<i64> {
    let mut e = vec![0; d];
    e[j] = s;
    e
}

/// Uniform `[-W, W]` disorder with a seeded stream.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct Disorder {
    pub amplitude: f64,
    pub seed: u64,
}

impl Disorder {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn new(amplitude: f64, seed: u64) -> Self {
        Self { amplitude, seed }
    }

    fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }

    /// Independent stream for realization `i` of an ensemble.
    pub fn realization(&self, i: u64) -> Self {
        let mut r = ChaCha8Rng::seed_from_u64(self.seed);
        r.set_stream(i + 1);
        Self { amplitude: self.amplitude, seed: r.gen() }
    }

    fn draws(&self, n: usize) -> Vec<f64> {
        let w = self.amplitude;
        if w == 0.0 {
            return vec![0.0; n];
        }
        let mut r = self.rng();
        (0..n).map(|_| r.gen_range(-w..=w)).collect()
    }
}

fn require_d(lattice: &SiteIndexMap, d: usize, name: &str) -> Result<()> {
    if lattice.d() != d {
        return Err(Error::InvalidArgument(format!("{name} needs d = {d}, lattice has d = {}", lattice.d())));
    }
    Ok(())
}

/// SSH chiral block `U = H_{BA}`: `t1` inside the cell, `t2` from `A_{x+1}`
/// to `B_x`; symbol `t1 + t2 e^{ik}`.
pub fn ssh_block(t1: f64, t2: f64) -> TranslationModel {
    TranslationModel {
        d: 1,
        fiber: 1,
        terms: vec![
            Hopping { disp: vec![0], block: linalg::real_rows(&[&[t1]]) },
            Hopping { disp: vec![-1], block: linalg::real_rows(&[&[t2]]) },
        ],
    }
}

/// Two-band SSH chain, orbitals `(A, B)`, `Π = σ_z`; disorder on every bond.
pub fn ssh(lattice: &Arc<SiteIndexMap>, t1: f64, t2: f64, disorder: Disorder) -> Result<OperatorMatrix> {
    require_d(lattice, 1, "ssh")?;
    let n = lattice.len();
    let xi = disorder.draws(2 * n);
    let mut m = Mat::zeros(2 * n, 2 * n);
    for x in 0..n {
        let a = t1 + xi[2 * x];
        m[(2 * x + 1, 2 * x)] = re(a);
        m[(2 * x, 2 * x + 1)] = re(a);
        if let Some(y) = lattice.index_of(&[lattice.site(x)[0] + 1]) {
            let b = t2 + xi[2 * x + 1];
            // B_x ↔ A_{x+1}
            m[(2 * x + 1, 2 * y)] = re(b);
            m[(2 * y, 2 * x + 1)] = re(b);
        }
    }
    OperatorMatrix::new(lattice.clone(), 2, m)
}

/// Qi–Wu–Zhang: hopping `T_j = (σ_z - iσ_j)/2` along `+e_j`, `T_j*` back,
/// mass `m σ_z`; symbol `(m + Σ cos k_j) σ_z - Σ sin k_j σ_j`.
pub fn qwz_model(m: f64) -> TranslationModel {
    let mut terms = vec![Hopping { disp: vec![0, 0], block: linalg::scale(pauli(3).as_ref(), re(m)) }];
    for j in 0..2 {
        let t = linalg::scale(linalg::add_scaled(pauli(3).as_ref(), pauli(j + 1).as_ref(), -I).as_ref(), re(0.5));
        terms.push(Hopping { disp: unit(2, j, -1), block: linalg::adj(t.as_ref()) });
        terms.push(Hopping { disp: unit(2, j, 1), block: t });
    }
    TranslationModel { d: 2, fiber: 2, terms }
}

/// QWZ with on-site disorder `diag(ξ, ξ')`.
pub fn qwz(lattice: &Arc<SiteIndexMap>, m: f64, disorder: Disorder) -> Result<OperatorMatrix> {
    require_d(lattice, 2, "qwz")?;
    let mut h = qwz_model(m).real_space(lattice);
    let xi = disorder.draws(2 * lattice.len());
    for (i, v) in xi.iter().enumerate() {
        h[(i, i)] += re(*v);
    }
    OperatorMatrix::new(lattice.clone(), 2, h)
}

/// Kitaev chain in the Majorana basis `(a_x, b_x)`: `H = iA`, `A` real
/// antisymmetric, so `H̄ = -H`. Disorder shifts `μ` and `Δ` per site.
pub fn kitaev_chain(lattice: &Arc<SiteIndexMap>, mu: f64, t: f64, delta: f64, disorder: Disorder) -> Result<OperatorMatrix> {
    require_d(lattice, 1, "kitaev_chain")?;
    let n = lattice.len();
    let xi = disorder.draws(2 * n);
    let mut a = vec![vec![0.0; 2 * n]; 2 * n];
    let mut set = |i: usize, j: usize, v: f64| {
        a[i][j] += v;
        a[j][i] -= v;
    };
    for x in 0..n {
        let mux = mu + xi[2 * x];
        set(2 * x, 2 * x + 1, -mux / 2.0);
        if let Some(y) = lattice.index_of(&[lattice.site(x)[0] + 1]) {
            let dx = delta + xi[2 * x + 1];
            set(2 * x + 1, 2 * y, (t + dx) / 2.0);
            set(2 * x, 2 * y + 1, (-t + dx) / 2.0);
        }
    }
    let h = Mat::from_fn(2 * n, 2 * n, |i, j| cx(0.0, a[i][j]));
    OperatorMatrix::new(lattice.clone(), 2, h)
}

/// Eigenvalues with `|λ| < tol` (Majorana end modes of an open chain).
pub fn zero_mode_count(h: &OperatorMatrix, tol: f64) -> Result<usize> {
    Ok(linalg::herm_eigvals(h.mat().as_ref())?.iter().filter(|v| v.abs() < tol).count())
}

/// Chiral block of the 3d lattice Dirac operator:
/// `q = m + Σ_j (B_j S_{+e_j} + C_j S_{-e_j})`, `B_j = (1+σ_j)/2`,
/// `C_j = (1-σ_j)/2`; symbol `m + Σ cos k_j - i Σ sin k_j σ_j`.
pub fn dirac3d_block(m: f64) -> TranslationModel {
    let mut terms = vec![Hopping { disp: vec![0, 0, 0], block: linalg::scale(linalg::eye(2).as_ref(), re(m)) }];
    for j in 0..3 {
        let s = pauli(j + 1);
        let b = linalg::scale(linalg::add_scaled(linalg::eye(2).as_ref(), s.as_ref(), ONE).as_ref(), re(0.5));
        let c = linalg::scale(linalg::add_scaled(linalg::eye(2).as_ref(), s.as_ref(), -ONE).as_ref(), re(0.5));
        terms.push(Hopping { disp: unit(3, j, 1), block: b });
        terms.push(Hopping { disp: unit(3, j, -1), block: c });
    }
    TranslationModel { d: 3, fiber: 2, terms }
}

/// `H = [[0, q*], [q, 0]]` on fiber 4 (chiral halves of size 2), mass
/// disorder `m + ξ_x`.
pub fn dirac_lattice_3d(lattice: &Arc<SiteIndexMap>, m: f64, disorder: Disorder) -> Result<OperatorMatrix> {
    require_d(lattice, 3, "dirac_lattice_3d")?;
    let mut q = dirac3d_block(m).real_space(lattice);
    let xi = disorder.draws(lattice.len());
    for (x, v) in xi.iter().enumerate() {
        q[(2 * x, 2 * x)] += re(*v);
        q[(2 * x + 1, 2 * x + 1)] += re(*v);
    }
    let u = OperatorMatrix::new(lattice.clone(), 2, q)?;
    Ok(crate::symmetry::embed(&u))
}

/// `Λ_{I+}` (`ω_1 > 0`) and `Λ_{I-}` (`ω_1 < 0`) on a planar lattice.
pub fn half_plane_projection(lattice: &Arc<SiteIndexMap>) -> Result<(OperatorMatrix, OperatorMatrix)> {
    require_d(lattice, 2, "half_plane_projection")?;
    let plus: Vec<usize> = (0..lattice.len()).filter(|&i| lattice.direction(i)[0] > 0.0).collect();
    let minus: Vec<usize> = (0..lattice.len()).filter(|&i| lattice.direction(i)[0] < 0.0).collect();
    Ok((
        OperatorMatrix::projector(lattice.clone(), 1, &plus),
        OperatorMatrix::projector(lattice.clone(), 1, &minus),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Ssh,
    Qwz,
    Kitaev,
    Dirac3d,
}

impl ModelKind {
    pub fn dimension(self) -> usize {
        match self {
            ModelKind::Ssh | ModelKind::Kitaev => 1,
            ModelKind::Qwz => 2,
            ModelKind::Dirac3d => 3,
        }
    }

    pub fn class(self) -> AZClass {
        match self {
            ModelKind::Ssh | ModelKind::Dirac3d => AZClass::AIII,
            ModelKind::Qwz => AZClass::A,
            ModelKind::Kitaev => AZClass::D,
        }
    }

    pub fn fiber(self) -> usize {
        match self {
            ModelKind::Ssh | ModelKind::Qwz | ModelKind::Kitaev => 2,
            ModelKind::Dirac3d => 4,
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ssh" => Ok(ModelKind::Ssh),
            "qwz" => Ok(ModelKind::Qwz),
            "kitaev" => Ok(ModelKind::Kitaev),
            "dirac3d" => Ok(ModelKind::Dirac3d),
            _ => Err(Error::InvalidArgument(format!("unknown model {s}"))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelSpec {
    pub name: ModelKind,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    #[serde(default)]
    pub disorder: Disorder,
}

impl ModelSpec {
    pub fn new(name: ModelKind, params: &[(&str, f64)]) -> Self {
        Self {
            name,
            params: params.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            disorder: Disorder::none(),
        }
    }

    pub fn with_disorder(mut self, d: Disorder) -> Self {
        self.disorder = d;
        self
    }

    fn param(&self, key: &str, default: f64) -> f64 {
        self.params.get(key).copied().unwrap_or(default)
    }

    pub fn class(&self) -> AZClass {
        self.name.class()
    }

    pub fn build(&self, lattice: &Arc<SiteIndexMap>) -> Result<OperatorMatrix> {
        let w = self.disorder;
        match self.name {
            ModelKind::Ssh => ssh(lattice, self.param("t1", 1.0), self.param("t2", 0.0), w),
            ModelKind::Qwz => qwz(lattice, self.param("m", 1.0), w),
            ModelKind::Kitaev => kitaev_chain(lattice, self.param("mu", 0.0), self.param("t", 1.0), self.param("delta", 1.0), w),
            ModelKind::Dirac3d => dirac_lattice_3d(lattice, self.param("m", 2.0), w),
        }
    }

    /// Momentum-space value in the orientation of the real-space index.
    /// For d ≥ 2 the Clifford orientation used by the Dirac phase and
    /// projection is opposite to the textbook Chern / 3d winding integrals,
    /// so those come back negated. In d = 1 the two already agree.
    pub fn oracle(&self, nk: usize) -> Result<OracleResult> {
        match self.name {
            ModelKind::Ssh => winding_1d(&ssh_block(self.param("t1", 1.0), self.param("t2", 0.0)), nk),
            ModelKind::Qwz => chern_fhs(&qwz_model(self.param("m", 1.0)), nk).map(OracleResult::negated),
            ModelKind::Dirac3d => winding_3d(&dirac3d_block(self.param("m", 2.0)), nk).map(OracleResult::negated),
            ModelKind::Kitaev => Err(Error::InvalidArgument("no momentum oracle for the Kitaev chain".into())),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BuiltModel {
    pub h: OperatorMatrix,
    pub gap: SpectralGapReport,
    pub warning: Option<Error>,
}

/// Builds and reports the spectral gap; a closed gap is a warning here.
pub fn build_model(spec: &ModelSpec, lattice: &Arc<SiteIndexMap>, tau_gap: f64) -> Result<BuiltModel> {
    let h = spec.build(lattice)?;
    let gap = spectral_gap(&h)?;
    let warning = (gap.gap < tau_gap).then_some(Error::GapClosed { gap: gap.gap, tol: tau_gap });
    Ok(BuiltModel { h, gap, warning })
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleResult {
    pub value: i64,
    pub raw: f64,
    pub residual: f64,
    pub grid: usize,
}

impl OracleResult {
    pub fn negated(self) -> Self {
        OracleResult { value: -self.value, raw: -self.raw, ..self }
    }
}

const ORACLE_MAX_RESIDUAL: f64 = 0.1;

fn finish(raw: f64, grid: usize) -> Result<OracleResult> {
    let value = raw.round();
    let residual = (raw - value).abs();
    if !residual.is_finite() || residual > ORACLE_MAX_RESIDUAL {
        return Err(Error::GridTooCoarse(residual));
    }
    Ok(OracleResult { value: value as i64, raw, residual, grid })
}

fn det(a: &CMat) -> c64 {
    match a.nrows() {
        1 => a[(0, 0)],
        2 => a[(0, 0)] * a[(1, 1)] - a[(0, 1)] * a[(1, 0)],
        _ => linalg::eigvals(a.as_ref()).map(|v| v.iter().product()).unwrap_or(c64::new(f64::NAN, 0.0)),
    }
}

/// `(1/2πi) ∮ tr(q⁻¹ ∂_k q) dk` on an `nk`-point periodic grid.
pub fn winding_1d(q: &TranslationModel, nk: usize) -> Result<OracleResult> {
    let dk = 2.0 * PI / nk as f64;
    let mut total = ZERO;
    for i in 0..nk {
        let k = [i as f64 * dk];
        let qi = linalg::inverse(q.symbol(&k).as_ref());
        total += linalg::trace_of_product(qi.as_ref(), q.symbol_derivative(&k, 0).as_ref());
    }
    let raw = total * dk / cx(0.0, 2.0 * PI);
    let mut r = finish(raw.re, nk)?;
    r.residual = r.residual.hypot(raw.im);
    if r.residual > ORACLE_MAX_RESIDUAL {
        return Err(Error::GridTooCoarse(r.residual));
    }
    Ok(r)
}

/// Chern number of the negative-energy bands: plaquette sum of Berry
/// curvature from link variables on an `nk × nk` grid.
pub fn chern_fhs(h: &TranslationModel, nk: usize) -> Result<OracleResult> {
    let states: Vec<Vec<CMat>> = (0..nk)
        .map(|i| {
            (0..nk)
                .map(|j| {
                    let k = [2.0 * PI * i as f64 / nk as f64, 2.0 * PI * j as f64 / nk as f64];
                    let (vals, vecs) = linalg::herm_eig(h.symbol(&k).as_ref())?;
                    let occ = vals.iter().filter(|&&v| v < 0.0).count();
                    Ok(vecs.as_ref().subcols(0, occ).to_owned())
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let link = |a: &CMat, b: &CMat| det(&(a.adjoint() * b));
    let mut total = 0.0;
    for i in 0..nk {
        for j in 0..nk {
            let (i1, j1) = ((i + 1) % nk, (j + 1) % nk);
            let u1 = link(&states[i][j], &states[i1][j]);
            let u2 = link(&states[i1][j], &states[i1][j1]);
            let u3 = link(&states[i1][j1], &states[i][j1]);
            let u4 = link(&states[i][j1], &states[i][j]);
            total += (u1 * u2 * u3 * u4).arg();
        }
    }
    finish(total / (2.0 * PI), nk)
}

/// `(1/24π²) ∫ ε^{ijk} tr(q⁻¹∂_i q q⁻¹∂_j q q⁻¹∂_k q) d³k`, midpoint rule.
pub fn winding_3d(q: &TranslationModel, nk: usize) -> Result<OracleResult> {
    let dk = 2.0 * PI / nk as f64;
    let mut total = 0.0;
    for a in 0..nk {
        for b in 0..nk {
            for c in 0..nk {
                let k = [(a as f64 + 0.5) * dk, (b as f64 + 0.5) * dk, (c as f64 + 0.5) * dk];
                let qi = linalg::inverse(q.symbol(&k).as_ref());
                let g: Vec<CMat> = (0..3).map(|j| &qi * q.symbol_derivative(&k, j)).collect();
                let mut s = ZERO;
                for (i, j, l, sign) in [(0, 1, 2, 1.0), (1, 2, 0, 1.0), (2, 0, 1, 1.0), (0, 2, 1, -1.0), (2, 1, 0, -1.0), (1, 0, 2, -1.0)] {
                    s += linalg::trace((&g[i] * &g[j] * &g[l]).as_ref()) * sign;
                }
                total += s.re;
            }
        }
    }
    finish(total * dk.powi(3) / (24.0 * PI * PI), nk)
}

/// Degree of `k ↦ (a_0, a)/|·|` for the 3d Dirac block, counted at the
/// regular value `(1,0,0,0)`: preimages are the corners of `{0,π}³` with
/// `a_0 > 0`, each weighted by the sign of `det ∂a/∂k = Π(-cos k_j)`.
pub fn dirac3d_degree(m: f64) -> i64 {
    let mut deg = 0;
    for mask in 0..8u32 {
        let cos: Vec<f64> = (0..3).map(|j| if mask >> j & 1 == 1 { -1.0 } else { 1.0 }).collect();
        if m + cos.iter().sum::<f64>() > 0.0 {
            deg += cos.iter().map(|c| -c).product::<f64>() as i64;
        }
    }
    deg
}

/// Independent momentum-space value for translation-invariant models.
pub fn momentum_oracle(kind: ModelKind, params: &[(&str, f64)], nk: usize) -> Result<OracleResult> {
    ModelSpec::new(kind, params).oracle(nk)
}
