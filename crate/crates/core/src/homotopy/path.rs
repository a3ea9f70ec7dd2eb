//! Sampled paths and their admissibility certificates.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, CMat};
use crate::locality::{cone_coupling, THETA_LOC};
use crate::operator::{spectral_gap, OperatorMatrix, Snapshot};
use crate::symmetry::{check_constraints, SymmetryOps};

pub const DEFAULT_GRID: usize = 33;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PathKind {
    /// gap = distance of the spectrum from 0
    Hermitian,
    /// gap = smallest singular value
    Invertible,
}

#[derive(Debug, Clone)]
pub enum Constraint {
    Symmetry(SymmetryOps),
    /// `‖U*U − 1‖`
    Unitary,
    /// `‖AĀ + 1‖`, membership in the DIII space
    Diii,
}

impl Constraint {
    pub fn name(&self) -> String {
        match self {
            Constraint::Symmetry(ops) => format!("class {}", ops.class),
            Constraint::Unitary => "unitarity".into(),
            Constraint::Diii => "diii".into(),
        }
    }

    fn residuals(&self, a: &OperatorMatrix) -> Vec<(String, f64)> {
        match self {
            Constraint::Symmetry(ops) => check_constraints(a, ops, 0.0)
                .residuals
                .into_iter()
                .map(|r| (r.name, r.value))
                .collect(),
            Constraint::Unitary => vec![(self.name(), unitarity_residual(a.mat()))],
            Constraint::Diii => vec![(self.name(), diii_residual(a.mat()))],
        }
    }
}

pub fn unitarity_residual(u: &CMat) -> f64 {
    linalg::opnorm(linalg::sub_identity((u.adjoint() * u).as_ref()).as_ref())
}

/// `‖AĀ + 1‖`; zero exactly on `{A : A^{-1} = −Ā}`.
pub fn diii_residual(a: &CMat) -> f64 {
    let p = a * linalg::conj(a.as_ref());
    let n = p.nrows();
    let q = CMat::from_fn(n, n, |i, j| if i == j { p[(i, j)] + 1.0 } else { p[(i, j)] });
    linalg::opnorm(q.as_ref())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PathTolerances {
    pub gap: f64,
    pub sym: f64,
    pub loc: f64,
}

impl Default for PathTolerances {
    fn default() -> Self {
        Self { gap: 1e-6, sym: 1e-8, loc: THETA_LOC }
    }
}

/// What to measure at each grid point.
#[derive(Debug, Clone)]
pub struct CertSpec {
    pub kind: PathKind,
    pub constraints: Vec<Constraint>,
    pub generation: u32,
    pub cert_radius: f64,
    pub tol: PathTolerances,
}

impl CertSpec {
    /// Certification radius half the lattice radius, generation 1 cubes.
    pub fn new(kind: PathKind, lattice_radius: f64) -> Self {
        Self {
            kind,
            constraints: Vec::new(),
            generation: 1,
            cert_radius: lattice_radius / 2.0,
            tol: PathTolerances::default(),
        }
    }

    pub fn with(mut self, c: Constraint) -> Self {
        self.constraints.push(c);
        self
    }

    pub fn tolerances(mut self, tol: PathTolerances) -> Self {
        self.tol = tol;
        self
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PathReport {
    pub kind: PathKind,
    /// global parameter: stage index plus the stage-local `t`
    pub grid: Vec<f64>,
    pub stages: Vec<String>,
    pub gaps: Vec<f64>,
    pub min_gap: f64,
    /// per constraint, the value at every grid point
    pub residual_series: BTreeMap<String, Vec<f64>>,
    pub max_residuals: BTreeMap<String, f64>,
    pub locality: Vec<f64>,
    pub max_locality: f64,
    pub cert_radius: f64,
    pub generation: u32,
    pub tolerances: PathTolerances,
    pub verdict: bool,
    pub failures: Vec<String>,
}

impl PathReport {
    pub fn to_csv(&self) -> String {
        let names: Vec<&String> = self.residual_series.keys().collect();
        let mut s = String::from("t,stage,gap,locality");
        for n in &names {
            s.push(',');
            s.push_str(&n.replace(',', ";"));
        }
        s.push('\n');
        for i in 0..self.grid.len() {
            s.push_str(&format!("{},{},{:e},{:e}", self.grid[i], self.stages[i], self.gaps[i], self.locality[i]));
            for n in &names {
                s.push_str(&format!(",{:e}", self.residual_series[*n][i]));
            }
            s.push('\n');
        }
        s
    }
}

fn gap_of(a: &OperatorMatrix, kind: PathKind) -> Result<f64> {
    Ok(match kind {
        PathKind::Hermitian => spectral_gap(a)?.gap,
        PathKind::Invertible => linalg::min_singular_value(a.mat().as_ref()),
    })
}

/// Measures every grid point and applies the verdict rule: gap ≥ τ_gap,
/// every residual ≤ τ_sym and cross-cone coupling ≤ θ_loc, pointwise.
pub fn certify(points: &[OperatorMatrix], grid: &[f64], stages: &[String], spec: &CertSpec) -> Result<PathReport> {
    if points.is_empty() || points.len() != grid.len() || grid.len() != stages.len() {
        return Err(Error::InvalidArgument("path needs matching points, grid and stage labels".into()));
    }
    let measured: Vec<(f64, Vec<(String, f64)>, f64)> = points
        .par_iter()
        .map(|a| {
            let gap = gap_of(a, spec.kind)?;
            let res = spec.constraints.iter().flat_map(|c| c.residuals(a)).collect();
            let loc = cone_coupling(a, spec.generation, spec.cert_radius);
            Ok((gap, res, loc))
        })
        .collect::<Result<_>>()?;
    let mut residual_series: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for (_, res, _) in &measured {
        for (name, v) in res {
            residual_series.entry(name.clone()).or_default().push(*v);
        }
    }
    let gaps: Vec<f64> = measured.iter().map(|m| m.0).collect();
    let locality: Vec<f64> = measured.iter().map(|m| m.2).collect();
    let min_gap = gaps.iter().copied().fold(f64::INFINITY, f64::min);
    let max_locality = locality.iter().copied().fold(0.0, f64::max);
    let max_residuals: BTreeMap<String, f64> = residual_series
        .iter()
        .map(|(k, v)| (k.clone(), v.iter().copied().fold(0.0, f64::max)))
        .collect();
    let mut failures = Vec::new();
    for (i, &g) in gaps.iter().enumerate() {
        if !(g >= spec.tol.gap) {
            failures.push(format!("gap {g:.3e} < {:.1e} at t = {}", spec.tol.gap, grid[i]));
        }
        if !(locality[i] <= spec.tol.loc) {
            failures.push(format!("cross-cone coupling {:.3e} > {:.1e} at t = {}", locality[i], spec.tol.loc, grid[i]));
        }
    }
    for (name, series) in &residual_series {
        for (i, &v) in series.iter().enumerate() {
            if !(v <= spec.tol.sym) {
                failures.push(format!("{name} residual {v:.3e} > {:.1e} at t = {}", spec.tol.sym, grid[i]));
            }
        }
    }
    Ok(PathReport {
        kind: spec.kind,
        grid: grid.to_vec(),
        stages: stages.to_vec(),
        gaps,
        min_gap,
        residual_series,
        max_residuals,
        locality,
        max_locality,
        cert_radius: spec.cert_radius,
        generation: spec.generation,
        tolerances: spec.tol,
        verdict: failures.is_empty(),
        failures,
    })
}

/// One sampled stage: operators at stage-local parameters `t`.
#[derive(Debug, Clone)]
pub struct Stage {
    pub name: String,
    pub t: Vec<f64>,
    pub points: Vec<OperatorMatrix>,
}

/// Samples `f` on `n` uniform points of `[t0, t1]`, then bisects adjacent
/// pairs whose gaps differ by more than 10% (at most `depth` rounds).
pub fn sample_stage(
    name: &str,
    t0: f64,
    t1: f64,
    n: usize,
    kind: PathKind,
    depth: usize,
    f: impl Fn(f64) -> Result<OperatorMatrix> + Sync,
) -> Result<Stage> {
    let n = n.max(2);
    let mut t: Vec<f64> = (0..n).map(|i| t0 + (t1 - t0) * i as f64 / (n - 1) as f64).collect();
    let mut points: Vec<OperatorMatrix> = t.par_iter().map(|&s| f(s)).collect::<Result<_>>()?;
    let mut gaps: Vec<f64> = points.par_iter().map(|a| gap_of(a, kind)).collect::<Result<_>>()?;
    for _ in 0..depth {
        let mids: Vec<usize> = (0..t.len() - 1)
            .filter(|&i| {
                let (a, b) = (gaps[i], gaps[i + 1]);
                (a - b).abs() > 0.1 * a.max(b)
            })
            .collect();
        if mids.is_empty() {
            break;
        }
        let new_t: Vec<f64> = mids.iter().map(|&i| 0.5 * (t[i] + t[i + 1])).collect();
        let new_p: Vec<OperatorMatrix> = new_t.par_iter().map(|&s| f(s)).collect::<Result<_>>()?;
        let new_g: Vec<f64> = new_p.par_iter().map(|a| gap_of(a, kind)).collect::<Result<_>>()?;
        let mut merged: Vec<(f64, OperatorMatrix, f64)> = t
            .into_iter()
            .zip(points)
            .zip(gaps)
            .map(|((a, b), c)| (a, b, c))
            .chain(new_t.into_iter().zip(new_p).zip(new_g).map(|((a, b), c)| (a, b, c)))
            .collect();
        merged.sort_by(|a, b| a.0.total_cmp(&b.0));
        t = merged.iter().map(|m| m.0).collect();
        gaps = merged.iter().map(|m| m.2).collect();
        points = merged.into_iter().map(|m| m.1).collect();
    }
    Ok(Stage { name: name.to_string(), t, points })
}

/// A certified sampled path, possibly made of several stages.
#[derive(Debug, Clone)]
pub struct Path {
    pub points: Vec<OperatorMatrix>,
    pub report: PathReport,
    spec: CertSpec,
}

impl Path {
    pub fn from_stages(stages: Vec<Stage>, spec: CertSpec) -> Result<Self> {
        let mut points = Vec::new();
        let mut grid = Vec::new();
        let mut labels = Vec::new();
        for (k, st) in stages.into_iter().enumerate() {
            let (t0, t1) = (st.t[0], *st.t.last().unwrap());
            let span = if t1 > t0 { t1 - t0 } else { 1.0 };
            for (t, p) in st.t.iter().zip(st.points) {
                grid.push(k as f64 + (t - t0) / span);
                labels.push(st.name.clone());
                points.push(p);
            }
        }
        let report = certify(&points, &grid, &labels, &spec)?;
        Ok(Self { points, report, spec })
    }

    pub fn constant(a: OperatorMatrix, name: &str, spec: CertSpec) -> Result<Self> {
        Self::from_stages(vec![Stage { name: name.into(), t: vec![0.0, 1.0], points: vec![a.clone(), a] }], spec)
    }

    /// Recomputes the certificate from the stored points.
    pub fn recertify(&self) -> Result<PathReport> {
        certify(&self.points, &self.report.grid, &self.report.stages, &self.spec)
    }

    pub fn spec(&self) -> &CertSpec {
        &self.spec
    }

    pub fn start(&self) -> &OperatorMatrix {
        &self.points[0]
    }

    pub fn end(&self) -> &OperatorMatrix {
        self.points.last().unwrap()
    }

    /// `count` points spread evenly over the stored grid (by position).
    pub fn checkpoints(&self, count: usize) -> Vec<usize> {
        let n = self.points.len();
        if count >= n {
            return (0..n).collect();
        }
        let mut idx: Vec<usize> = (0..count)
            .map(|i| ((i as f64) * (n - 1) as f64 / (count - 1).max(1) as f64).round() as usize)
            .collect();
        idx.dedup();
        idx
    }

    pub fn snapshots(&self) -> Vec<Snapshot> {
        self.points
            .iter()
            .zip(&self.report.grid)
            .map(|(p, t)| Snapshot::from_operator(p, serde_json::json!({ "t": t })))
            .collect()
    }
}

pub fn require_pass(path: &Path) -> Result<()> {
    if path.report.verdict {
        return Ok(());
    }
    let first = path.report.failures.first().cloned().unwrap_or_default();
    match path.report.kind {
        PathKind::Invertible if path.report.min_gap < path.report.tolerances.gap => {
            let i = path.report.gaps.iter().position(|&g| g == path.report.min_gap).unwrap_or(0);
            Err(Error::SingularPath { t: path.report.grid[i], smin: path.report.min_gap })
        }
        PathKind::Hermitian if path.report.min_gap < path.report.tolerances.gap => {
            Err(Error::GapClosed { gap: path.report.min_gap, tol: path.report.tolerances.gap })
        }
        _ => Err(Error::NotConverged(format!("path not certified: {first}"))),
    }
}
