//! Localized centers: a spherically proper run of sites `x_k` in disjoint
//! annuli, and a nearby operator whose columns at `x_k` stay in the annulus.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::lattice::{cone_sites, dyadic_cubes, DimerPartition, SiteIndexMap};
use crate::linalg::{self, CMat};
use crate::locality::disjoint_cube_pairs;
use crate::operator::OperatorMatrix;

use super::decouple::{decouple_sites, disjoint_schedule, DecouplingResult};

#[derive(Debug, Clone)]
pub struct CenterOptions {
    pub eps: f64,
    pub generation: u32,
    /// fail with `InsufficientVolume` unless this many islands fit
    pub wanted: Option<usize>,
    /// centers must be the first site of a dimer whose partner joins the island
    pub dimers: Option<DimerPartition>,
    /// radii must stay strictly below this; defaults to the lattice radius minus one
    pub r_max: Option<f64>,
}

impl CenterOptions {
    pub fn new(eps: f64) -> Self {
        Self { eps, generation: 1, wanted: None, dimers: None, r_max: None }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ConeSeparation {
    pub cube_a: Vec<i64>,
    pub cube_b: Vec<i64>,
    pub generation: u32,
    /// islands meeting both cones
    pub count: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct IslandFamily {
    pub centers: Vec<usize>,
    pub partners: Vec<Option<usize>>,
    pub islands: Vec<Vec<usize>>,
    /// `r_{k−1}`, the inner radius of each annulus
    pub inner: Vec<f64>,
    /// `r_k`
    pub radii: Vec<f64>,
    /// `t_k`: beyond it the ball `B_{r_k}` is weakly coupled
    pub buffers: Vec<f64>,
    /// `ε_k`
    pub eps: Vec<f64>,
    /// `‖Λ_{annulus^c} A Λ_{x_k}‖`
    pub couplings: Vec<f64>,
    pub cone_separation: Vec<ConeSeparation>,
}

impl IslandFamily {
    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn pairwise_disjoint(&self, n: usize) -> bool {
        let mut seen = vec![false; n];
        for isl in &self.islands {
            for &s in isl {
                if seen[s] {
                    return false;
                }
                seen[s] = true;
            }
        }
        true
    }

    /// Every island inside its shell `r_{k−1} < |z| ≤ r_k`.
    pub fn shell_contained(&self, lattice: &SiteIndexMap) -> bool {
        self.islands.iter().enumerate().all(|(k, isl)| {
            isl.iter().all(|&s| {
                let r = lattice.norm(s);
                r > self.inner[k] && r <= self.radii[k] + 1e-12
            })
        })
    }

    /// All sites of all islands, sorted.
    pub fn union(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.islands.iter().flatten().copied().collect();
        v.sort_unstable();
        v
    }

    /// Centers and, in dimer mode, their partners.
    pub fn pinned_sites(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.centers.clone();
        v.extend(self.partners.iter().flatten());
        v.sort_unstable();
        v
    }
}

#[derive(Debug, Clone)]
pub struct LocalizedCenters {
    pub b: OperatorMatrix,
    pub family: IslandFamily,
    /// `‖A − B‖`
    pub distance: f64,
    /// `‖A − B‖ / ε`
    pub constant: f64,
    pub decoupling: DecouplingResult,
}

pub fn localized_centers(a: &OperatorMatrix, eps: f64) -> Result<LocalizedCenters> {
    localized_centers_with(a, &CenterOptions::new(eps))
}

fn block_norm(a: &CMat, rows: &[usize], cols: &[usize]) -> f64 {
    if rows.is_empty() || cols.is_empty() {
        return 0.0;
    }
    linalg::opnorm(linalg::submatrix(a.as_ref(), rows, cols).as_ref())
}

/// Smallest `r` among `levels` (sorted, starting at index `from`) with
/// `f(r) ≤ bound`, for `f` nonincreasing in `r`.
fn first_below(levels: &[f64], from: usize, bound: f64, f: impl Fn(f64) -> f64) -> Option<usize> {
    let (mut lo, mut hi) = (from, levels.len());
    while lo < hi {
        let mid = (lo + hi) / 2;
        if f(levels[mid]) <= bound {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    (lo < levels.len()).then_some(lo)
}

pub fn localized_centers_with(a: &OperatorMatrix, opts: &CenterOptions) -> Result<LocalizedCenters> {
    let l = a.lattice();
    let n = l.len();
    let am = a.mat();
    let r_max = opts.r_max.unwrap_or(l.radius() - 1.0);
    let partner = opts.dimers.as_ref().map(|p| p.partner_map(n));
    let first_of_pair: Option<Vec<bool>> = opts.dimers.as_ref().map(|p| {
        let mut v = vec![false; n];
        for &(x, _) in &p.pairs {
            v[x] = true;
        }
        v
    });

    let cones: Vec<Vec<usize>> = dyadic_cubes(l.d(), opts.generation)
        .iter()
        .map(|c| {
            let mut s = cone_sites(l, c).sites;
            s.sort_by_key(|&i| (l.norm2(i), i));
            s
        })
        .filter(|s| !s.is_empty())
        .collect();
    if cones.is_empty() {
        return Err(Error::InsufficientVolume { found: 0, wanted: opts.wanted.unwrap_or(1) });
    }

    let mut levels: Vec<f64> = (0..n).map(|i| l.norm(i)).collect();
    levels.sort_by(f64::total_cmp);
    levels.dedup_by(|x, y| (*x - *y).abs() < 1e-12);
    let outside = |r: f64| -> Vec<usize> { (0..n).filter(|&i| l.norm(i) > r + 1e-12).collect() };
    let inside = |r: f64| -> Vec<usize> { (0..n).filter(|&i| l.norm(i) <= r + 1e-12).collect() };

    let mut fam = IslandFamily {
        centers: vec![],
        partners: vec![],
        islands: vec![],
        inner: vec![],
        radii: vec![],
        buffers: vec![],
        eps: vec![],
        couplings: vec![],
        cone_separation: vec![],
    };
    let mut annuli: Vec<Vec<usize>> = Vec::new();
    let (mut r_prev, mut t_prev) = (-1.0f64, -1.0f64);
    let mut k = 1usize;
    let mut misses = 0usize;
    let mut cube = 0usize;
    loop {
        if misses == cones.len() {
            break;
        }
        let cone = &cones[cube % cones.len()];
        cube += 1;
        let pick = cone.iter().copied().find(|&x| {
            if l.norm(x) <= t_prev + 1e-12 {
                return false;
            }
            match (&first_of_pair, &partner) {
                (Some(first), Some(pm)) => first[x] && pm[x].is_some_and(|y| l.norm(y) > t_prev + 1e-12),
                _ => true,
            }
        });
        let Some(x) = pick else {
            misses += 1;
            continue;
        };
        misses = 0;
        let y = partner.as_ref().and_then(|pm| pm[x]);
        let m = y.map_or(l.norm(x), |y| l.norm(x).max(l.norm(y)));
        let eps_k = disjoint_schedule(opts.eps, k);
        let xcols = a.rows_of(&[x]);
        let start = levels.iter().position(|&v| v >= m - 1e-12).unwrap_or(levels.len());
        let Some(ri) = first_below(&levels, start, eps_k / 2.0, |r| {
            block_norm(am, &a.rows_of(&outside(r)), &xcols)
        }) else {
            break;
        };
        let r_k = levels[ri];
        if r_k >= r_max {
            break;
        }
        let ball = a.rows_of(&inside(r_k));
        let eps_next = disjoint_schedule(opts.eps, k + 1);
        let t_k = first_below(&levels, ri, eps_next / 2.0, |t| {
            let out = a.rows_of(&outside(t));
            block_norm(am, &ball, &out)
        })
            .map(|i| levels[i])
            .unwrap_or(f64::INFINITY);
        let annulus: Vec<usize> = (0..n)
            .filter(|&i| {
                let v = l.norm(i);
                v > r_prev + 1e-12 && v <= r_k + 1e-12
            })
            .collect();
        let complement: Vec<usize> = {
            let mut inn = vec![false; n];
            for &i in &annulus {
                inn[i] = true;
            }
            (0..n).filter(|&i| !inn[i]).collect()
        };
        fam.couplings.push(block_norm(am, &a.rows_of(&complement), &xcols));
        fam.centers.push(x);
        fam.partners.push(y);
        fam.inner.push(r_prev);
        fam.radii.push(r_k);
        fam.buffers.push(t_k);
        fam.eps.push(eps_k);
        annuli.push(complement);
        if !(t_k < r_max) {
            break;
        }
        r_prev = r_k;
        t_prev = t_k;
        k += 1;
    }

    let found = fam.centers.len();
    let wanted = opts.wanted.unwrap_or(1);
    if found < wanted {
        return Err(Error::InsufficientVolume { found, wanted });
    }

    let pairs: Vec<(Vec<usize>, Vec<usize>)> =
        annuli.into_iter().zip(&fam.centers).map(|(c, &x)| (c, vec![x])).collect();
    let dec = decouple_sites(a, &pairs, opts.eps)?;
    let b = dec.operator(a);
    let nf = a.fiber();
    for (k, &x) in fam.centers.iter().enumerate() {
        let mut isl: Vec<usize> = (0..n)
            .filter(|&z| {
                (0..nf).any(|i| (0..nf).any(|j| dec.b[(z * nf + i, x * nf + j)] != linalg::c64::new(0.0, 0.0)))
            })
            .collect();
        isl.push(x);
        if let Some(y) = fam.partners[k] {
            isl.push(y);
        }
        isl.sort_unstable();
        isl.dedup();
        fam.islands.push(isl);
    }
    fam.cone_separation = cone_separation(l, &fam.islands, opts.generation);

    let distance = dec.distance;
    Ok(LocalizedCenters { b, distance, constant: distance / opts.eps, family: fam, decoupling: dec })
}

/// For every disjoint pair of generation-`g` cones, the number of islands
/// meeting both.
pub fn cone_separation(l: &SiteIndexMap, islands: &[Vec<usize>], g: u32) -> Vec<ConeSeparation> {
    disjoint_cube_pairs(l, g)
        .into_iter()
        .map(|(ca, sa, cb, sb)| {
            let count = islands
                .iter()
                .filter(|isl| isl.iter().any(|s| sa.contains(s)) && isl.iter().any(|s| sb.contains(s)))
                .count();
            ConeSeparation { cube_a: ca.corner.clone(), cube_b: cb.corner.clone(), generation: g, count }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::Disorder;
    use crate::symmetry::chiral_flatten_completed;
    use std::sync::Arc;

    #[test]
    fn diagonal_operator_gives_singleton_islands() {
        let l = Arc::new(SiteIndexMap::ball(2, 8.0, 1).unwrap());
        let a = OperatorMatrix::site_diagonal(l.clone(), 1, |s| linalg::real_rows(&[&[1.0 + s as f64]]));
        let r = localized_centers(&a, 0.1).unwrap();
        assert!(r.family.len() >= 2);
        for (isl, &x) in r.family.islands.iter().zip(&r.family.centers) {
            assert_eq!(isl, &vec![x]);
        }
        assert_eq!(r.distance, 0.0);
        assert!(r.b.dist(&a) == 0.0);
    }

    #[test]
    fn ssh_flattened_unitary_hosts_six_islands() {
        let l = Arc::new(SiteIndexMap::ball(1, 60.0, 2).unwrap());
        let h = crate::models::ssh(&l, 1.0, 0.4, Disorder::none()).unwrap();
        let (u, _) = chiral_flatten_completed(&h, 1e-10).unwrap();
        let r = localized_centers(&u, 0.1).unwrap();
        let f = &r.family;
        assert!(f.len() >= 6, "only {} islands", f.len());
        assert!(f.pairwise_disjoint(u.lattice().len()));
        assert!(f.shell_contained(u.lattice()));
        assert!(r.decoupling.max_certificate() == 0.0);
        assert!(r.distance <= 0.1);
    }

    #[test]
    fn too_many_islands_requested() {
        let l = Arc::new(SiteIndexMap::ball(1, 6.0, 1).unwrap());
        let a = OperatorMatrix::identity(l, 1);
        let mut o = CenterOptions::new(0.1);
        o.wanted = Some(50);
        assert!(matches!(localized_centers_with(&a, &o), Err(Error::InsufficientVolume { wanted: 50, .. })));
    }
}
