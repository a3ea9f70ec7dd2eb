//! Truncated lattices `B_R ∩ Z^d`, directional cones and the combinatorial
//! site-set constructions built on top of them.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sites of `Z^d` with `|x| <= R` in lexicographic order, plus a per-site
/// fiber dimension. Row of `(site, internal)` is `site * fiber + internal`.
#[derive(Debug, Clone, PartialEq)]
pub struct SiteIndexMap {
    d: usize,
    radius: f64,
    fiber: usize,
    sites: Vec<Vec<i64>>,
    norm2: Vec<i64>,
    dirs: Vec<Vec<f64>>,
    index: HashMap<Vec<i64>, usize>,
}

pub fn build_lattice(d: usize, radius: f64, fiber: usize) -> Result<SiteIndexMap> {
    SiteIndexMap::ball(d, radius, fiber)
}

impl SiteIndexMap {
    pub fn ball(d: usize, radius: f64, fiber: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidLattice("dimension must be positive".into()));
        }
        if fiber == 0 {
            return Err(Error::InvalidLattice("fiber must be positive".into()));
        }
        if !(radius.is_finite() && radius > 0.0) {
            return Err(Error::InvalidLattice(format!("bad radius {radius}")));
        }
        let r = radius.floor() as i64;
        let r2 = radius * radius * (1.0 + 1e-12);
        let mut sites = Vec::new();
        let mut x = vec![-r; d];
        loop {
            let n2: i64 = x.iter().map(|v| v * v).sum();
            if (n2 as f64) <= r2 {
                sites.push(x.clone());
            }
            // odometer increment, last coordinate fastest
            let mut i = d;
            loop {
                if i == 0 {
                    return Self::assemble(d, radius, fiber, sites);
                }
                i -= 1;
                if x[i] < r {
                    x[i] += 1;
                    break;
                }
                x[i] = -r;
            }
        }
    }

    /// Lattice on an explicit site list (kept in the given order).
    pub fn from_sites(d: usize, sites: Vec<Vec<i64>>, fiber: usize) -> Result<Self> {
        if d == 0 || fiber == 0 {
            return Err(Error::InvalidLattice("dimension and fiber must be positive".into()));
        }
        if sites.iter().any(|s| s.len() != d) {
            return Err(Error::InvalidLattice("site of wrong dimension".into()));
        }
        let radius = sites
            .iter()
            .map(|s| (s.iter().map(|v| v * v).sum::<i64>() as f64).sqrt())
            .fold(0.0, f64::max);
        Self::assemble(d, radius, fiber, sites)
    }

    fn assemble(d: usize, radius: f64, fiber: usize, sites: Vec<Vec<i64>>) -> Result<Self> {
        if sites.len() < 2 {
            return Err(Error::InvalidLattice(format!(
                "radius {radius} gives {} site(s), need at least 2",
                sites.len()
            )));
        }
        let mut index = HashMap::with_capacity(sites.len());
        for (i, s) in sites.iter().enumerate() {
            if index.insert(s.clone(), i).is_some() {
                return Err(Error::InvalidLattice(format!("duplicate site {s:?}")));
            }
        }
        let norm2 = sites.iter().map(|s| s.iter().map(|v| v * v).sum()).collect();
        let dirs = sites.iter().map(|s| unit_direction(s)).collect();
        Ok(Self { d, radius, fiber, sites, norm2, dirs, index })
    }

    /// Same sites, different fiber.
    pub fn with_fiber(&self, fiber: usize) -> Self {
        let mut out = self.clone();
        out.fiber = fiber.max(1);
        out
    }

    pub fn d(&self) -> usize {
        self.d
    }
    pub fn radius(&self) -> f64 {
        self.radius
    }
    pub fn fiber(&self) -> usize {
        self.fiber
    }
    pub fn len(&self) -> usize {
        self.sites.len()
    }
    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }
    pub fn dim(&self) -> usize {
        self.sites.len() * self.fiber
    }
    pub fn sites(&self) -> &[Vec<i64>] {
        &self.sites
    }
    pub fn site(&self, i: usize) -> &[i64] {
        &self.sites[i]
    }
    pub fn index_of(&self, x: &[i64]) -> Option<usize> {
        self.index.get(x).copied()
    }
    pub fn norm2(&self, i: usize) -> i64 {
        self.norm2[i]
    }
    pub fn norm(&self, i: usize) -> f64 {
        (self.norm2[i] as f64).sqrt()
    }
    pub fn direction(&self, i: usize) -> &[f64] {
        &self.dirs[i]
    }
    pub fn row(&self, site: usize, internal: usize) -> usize {
        site * self.fiber + internal
    }

    /// Indices of sites with `|x| >= r`.
    pub fn shell(&self, r: f64) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.norm(i) >= r - 1e-12).collect()
    }

    /// Indices of sites with `|x| <= r`.
    pub fn ball_indices(&self, r: f64) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.norm(i) <= r + 1e-12).collect()
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        let s: i64 = self.sites[i]
            .iter()
            .zip(&self.sites[j])
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        (s as f64).sqrt()
    }

    pub fn to_doc(&self, sets: BTreeMap<String, Vec<usize>>) -> LatticeDoc {
        LatticeDoc { d: self.d, radius: self.radius, fiber: self.fiber, sites: self.sites.clone(), sets }
    }

    pub fn from_doc(doc: &LatticeDoc) -> Result<Self> {
        let mut l = Self::from_sites(doc.d, doc.sites.clone(), doc.fiber)?;
        l.radius = doc.radius;
        Ok(l)
    }
}

/// JSON form `{d, R, N, sites, sets}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeDoc {
    pub d: usize,
    #[serde(rename = "R")]
    pub radius: f64,
    #[serde(rename = "N")]
    pub fiber: usize,
    pub sites: Vec<Vec<i64>>,
    #[serde(default)]
    pub sets: BTreeMap<String, Vec<usize>>,
}

/// `x / |x|`, and `e_1` at the origin.
pub fn unit_direction(x: &[i64]) -> Vec<f64> {
    let n2: i64 = x.iter().map(|v| v * v).sum();
    if n2 == 0 {
        let mut e = vec![0.0; x.len()];
        if let Some(first) = e.first_mut() {
            *first = 1.0;
        }
        return e;
    }
    let n = (n2 as f64).sqrt();
    x.iter().map(|&v| v as f64 / n).collect()
}

/// Closed box `prod [j_i 2^-k, (j_i+1) 2^-k]`, considered on the sphere.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DyadicCube {
    pub generation: u32,
    pub corner: Vec<i64>,
}

// compares b * sqrt(n) with a exactly (n > 0)
fn cmp_sqrt(b: i64, n: i64, a: i64) -> Ordering {
    let (b, n, a) = (b as i128, n as i128, a as i128);
    match (b.signum(), a.signum()) {
        (sb, sa) if sb != sa => sb.cmp(&sa),
        (0, _) => Ordering::Equal,
        (1, _) => (b * b * n).cmp(&(a * a)),
        _ => (a * a).cmp(&(b * b * n)),
    }
}

impl DyadicCube {
    fn scale(&self) -> i64 {
        1i64 << self.generation
    }

    pub fn dim(&self) -> usize {
        self.corner.len()
    }

    /// Whether the closed box meets the unit sphere.
    pub fn meets_sphere(&self) -> bool {
        let s = self.scale() as i128;
        let mut lo = 0i128;
        let mut hi = 0i128;
        for &j in &self.corner {
            let (a, b) = (j as i128, j as i128 + 1);
            let m = if a <= 0 && b >= 0 { 0 } else { a.abs().min(b.abs()) };
            lo += m * m;
            hi += (a * a).max(b * b);
        }
        lo <= s * s && s * s <= hi
    }

    /// Exact membership of the direction of the nonzero lattice vector `x`.
    pub fn contains_site(&self, x: &[i64]) -> bool {
        let n2: i64 = x.iter().map(|v| v * v).sum();
        if n2 == 0 {
            return false;
        }
        let s = self.scale();
        self.corner.iter().zip(x).all(|(&j, &xi)| {
            cmp_sqrt(j, n2, s * xi) != Ordering::Greater && cmp_sqrt(j + 1, n2, s * xi) != Ordering::Less
        })
    }

    /// Membership of a point of the sphere (floating point).
    pub fn contains_direction(&self, u: &[f64]) -> bool {
        let s = self.scale() as f64;
        self.corner.iter().zip(u).all(|(&j, &ui)| {
            let v = ui * s;
            v >= j as f64 - 1e-12 && v <= (j + 1) as f64 + 1e-12
        })
    }

    /// True when the closed boxes do not touch.
    pub fn disjoint(&self, other: &DyadicCube) -> bool {
        if self.generation != other.generation {
            let (a, b) = if self.generation < other.generation { (self, other) } else { (other, self) };
            let shift = b.generation - a.generation;
            return a.corner.iter().zip(&b.corner).any(|(&ja, &jb)| {
                let lo = ja << shift;
                let hi = (ja + 1) << shift;
                jb + 1 < lo || jb > hi
            });
        }
        self.corner.iter().zip(&other.corner).any(|(a, b)| (a - b).abs() >= 2)
    }

    /// Whether this cube lies inside `coarse` (a lower generation cube).
    pub fn inside(&self, coarse: &DyadicCube) -> bool {
        if coarse.generation > self.generation {
            return false;
        }
        let shift = self.generation - coarse.generation;
        self.corner.iter().zip(&coarse.corner).all(|(&j, &c)| j >> shift == c)
    }
}

/// All generation-`k` cubes meeting `S^{d-1}`, lexicographic in the corner.
pub fn dyadic_cubes(d: usize, k: u32) -> Vec<DyadicCube> {
    let s = 1i64 << k;
    let mut out = Vec::new();
    let mut j = vec![-s; d];
    loop {
        let c = DyadicCube { generation: k, corner: j.clone() };
        if c.meets_sphere() {
            out.push(c);
        }
        let mut i = d;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if j[i] < s - 1 {
                j[i] += 1;
                break;
            }
            j[i] = -s;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ConeRegion {
    Cube(DyadicCube),
    Predicate(String),
}

/// Lattice sites `x != 0` whose direction lies in a region.
#[derive(Debug, Clone, PartialEq)]
pub struct ConeSet {
    pub region: ConeRegion,
    pub sites: Vec<usize>,
}

pub fn cone_sites(lattice: &SiteIndexMap, cube: &DyadicCube) -> ConeSet {
    let sites = (0..lattice.len())
        .filter(|&i| cube.contains_site(lattice.site(i)))
        .collect();
    ConeSet { region: ConeRegion::Cube(cube.clone()), sites }
}

pub fn cone_sites_by<F: Fn(&[f64]) -> bool>(lattice: &SiteIndexMap, label: &str, pred: F) -> ConeSet {
    let sites = (0..lattice.len())
        .filter(|&i| lattice.norm2(i) > 0 && pred(lattice.direction(i)))
        .collect();
    ConeSet { region: ConeRegion::Predicate(label.to_string()), sites }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProperStrategy {
    Even1d,
    RayRepresentatives,
    DiagonalSelection(u32),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CubeCount {
    pub cube: DyadicCube,
    pub in_set: usize,
    pub in_complement: usize,
}

/// Finite surrogate of a spherically-proper site set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProperSet {
    pub sites: Vec<usize>,
    pub generation: u32,
    pub m_min: usize,
    pub certificate: Vec<CubeCount>,
}

pub const DEFAULT_M_MIN: usize = 2;

impl ProperSet {
    pub fn contains(&self, i: usize) -> bool {
        self.sites.binary_search(&i).is_ok()
    }

    pub fn complement(&self, lattice: &SiteIndexMap) -> Vec<usize> {
        (0..lattice.len()).filter(|&i| !self.contains(i)).collect()
    }

    pub fn min_count(&self) -> usize {
        self.certificate
            .iter()
            .map(|c| c.in_set.min(c.in_complement))
            .min()
            .unwrap_or(0)
    }
}

/// Counts `|F ∩ C_I|`, `|F^c ∩ C_I|` over every generation-`g` cube whose cone
/// holds lattice sites.
pub fn cube_counts(lattice: &SiteIndexMap, sites: &[usize], g: u32) -> Vec<CubeCount> {
    let mut member = vec![false; lattice.len()];
    for &i in sites {
        member[i] = true;
    }
    dyadic_cubes(lattice.d(), g)
        .into_iter()
        .filter_map(|cube| {
            let cone = cone_sites(lattice, &cube);
            if cone.sites.is_empty() {
                return None;
            }
            let in_set = cone.sites.iter().filter(|&&i| member[i]).count();
            Some(CubeCount { cube, in_set, in_complement: cone.sites.len() - in_set })
        })
        .collect()
}

pub fn certify(lattice: &SiteIndexMap, mut sites: Vec<usize>, g: u32, m_min: usize) -> Result<ProperSet> {
    sites.sort_unstable();
    sites.dedup();
    let certificate = cube_counts(lattice, &sites, g);
    if let Some(bad) = certificate
        .iter()
        .find(|c| c.in_set < m_min || c.in_complement < m_min)
    {
        return Err(Error::CannotCertify(format!(
            "cube {:?} (generation {g}) has {} sites in F and {} in F^c, need {m_min}",
            bad.cube.corner, bad.in_set, bad.in_complement
        )));
    }
    Ok(ProperSet { sites, generation: g, m_min, certificate })
}

pub fn proper_set(lattice: &SiteIndexMap, strategy: ProperStrategy) -> Result<ProperSet> {
    let g = match strategy {
        ProperStrategy::DiagonalSelection(g) => g,
        _ => 1,
    };
    proper_set_with(lattice, strategy, g, DEFAULT_M_MIN)
}

pub fn proper_set_with(
    lattice: &SiteIndexMap,
    strategy: ProperStrategy,
    g: u32,
    m_min: usize,
) -> Result<ProperSet> {
    let d = lattice.d();
    let sites: Vec<usize> = match strategy {
        ProperStrategy::Even1d => {
            if d != 1 {
                return Err(Error::InvalidArgument("even-1d needs d = 1".into()));
            }
            (0..lattice.len()).filter(|&i| lattice.site(i)[0] % 2 == 0).collect()
        }
        ProperStrategy::RayRepresentatives => {
            if d < 2 {
                return Err(Error::InvalidArgument("ray representatives need d >= 2".into()));
            }
            // the primitive vector is the representative of its ray
            (0..lattice.len())
                .filter(|&i| lattice.site(i).iter().fold(0, |a, &b| gcd(a, b.abs())) == 1)
                .collect()
        }
        ProperStrategy::DiagonalSelection(_) => diagonal_selection(lattice, g),
    };
    certify(lattice, sites, g, m_min)
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

// cycle through the cubes, each time taking the innermost unused site of the
// cone strictly outside the previous pick
fn diagonal_selection(lattice: &SiteIndexMap, g: u32) -> Vec<usize> {
    let cones: Vec<Vec<usize>> = dyadic_cubes(lattice.d(), g)
        .iter()
        .map(|c| {
            let mut s = cone_sites(lattice, c).sites;
            s.sort_by_key(|&i| (lattice.norm2(i), i));
            s
        })
        .filter(|s| !s.is_empty())
        .collect();
    let mut used = vec![false; lattice.len()];
    let mut picks = Vec::new();
    let mut t2 = 0i64;
    loop {
        let mut progress = false;
        for cone in &cones {
            if let Some(&x) = cone.iter().find(|&&i| !used[i] && lattice.norm2(i) > t2) {
                used[x] = true;
                t2 = lattice.norm2(x);
                picks.push(x);
                progress = true;
            }
        }
        if !progress {
            return picks;
        }
    }
}

/// Splits a certified set in two. Cubes are visited round-robin; each visit
/// draws the two innermost unassigned sites of the cone, the inner one going
/// to `F2` and the outer one to `F1`. Sites never drawn go to `F1`.
pub fn split_proper(lattice: &SiteIndexMap, f: &ProperSet) -> Result<(ProperSet, ProperSet)> {
    let g = f.generation;
    let mut member = vec![false; lattice.len()];
    for &i in &f.sites {
        member[i] = true;
    }
    let mut cones = Vec::new();
    for c in &f.certificate {
        let mut s: Vec<usize> = cone_sites(lattice, &c.cube)
            .sites
            .into_iter()
            .filter(|&i| member[i])
            .collect();
        if s.len() == 1 {
            return Err(Error::SplitFailed(format!(
                "cube {:?} holds a single site of F",
                c.cube.corner
            )));
        }
        s.sort_by_key(|&i| (lattice.norm2(i), i));
        cones.push(s);
    }
    // 0 = unassigned, 1 = F1, 2 = F2
    let mut label = vec![0u8; lattice.len()];
    let mut cursor = vec![0usize; cones.len()];
    loop {
        let mut progress = false;
        for (cone, cur) in cones.iter().zip(cursor.iter_mut()) {
            let mut drawn = Vec::with_capacity(2);
            while drawn.len() < 2 && *cur < cone.len() {
                let x = cone[*cur];
                *cur += 1;
                if label[x] == 0 {
                    drawn.push(x);
                }
            }
            match drawn[..] {
                [inner, outer] => {
                    label[inner] = 2;
                    label[outer] = 1;
                    progress = true;
                }
                [single] => {
                    // an odd remainder is left for the F1 sweep
                    label[single] = 0;
                }
                _ => {}
            }
        }
        if !progress {
            break;
        }
    }
    let f1: Vec<usize> = f.sites.iter().copied().filter(|&i| label[i] != 2).collect();
    let f2: Vec<usize> = f.sites.iter().copied().filter(|&i| label[i] == 2).collect();
    let m = (f.m_min / 2).max(1);
    let a = certify(lattice, f1, g, m).map_err(|e| Error::SplitFailed(format!("F1: {e}")))?;
    let b = certify(lattice, f2, g, m).map_err(|e| Error::SplitFailed(format!("F2: {e}")))?;
    Ok((a, b))
}

/// Nearest-neighbour pairs `(x_k, y_k)`; `y_k` is the first free neighbour of
/// `x_k` in the order `+e_1..+e_d, -e_1..-e_d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimerPartition {
    pub pairs: Vec<(usize, usize)>,
    pub leftover: Vec<usize>,
}

impl DimerPartition {
    /// Partner of each site in a pair, `None` on leftovers.
    pub fn partner_map(&self, n: usize) -> Vec<Option<usize>> {
        let mut m = vec![None; n];
        for &(x, y) in &self.pairs {
            m[x] = Some(y);
            m[y] = Some(x);
        }
        m
    }

    pub fn paired_sites(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.pairs.iter().flat_map(|&(x, y)| [x, y]).collect();
        v.sort_unstable();
        v
    }
}

pub fn dimer_partition(lattice: &SiteIndexMap) -> DimerPartition {
    let d = lattice.d();
    let mut taken = vec![false; lattice.len()];
    let mut pairs = Vec::new();
    let mut leftover = Vec::new();
    for i in 0..lattice.len() {
        if taken[i] {
            continue;
        }
        let x = lattice.site(i);
        let mut partner = None;
        'search: for sign in [1i64, -1] {
            for axis in 0..d {
                let mut y = x.to_vec();
                y[axis] += sign;
                if let Some(j) = lattice.index_of(&y) {
                    if !taken[j] {
                        partner = Some(j);
                        break 'search;
                    }
                }
            }
        }
        taken[i] = true;
        match partner {
            Some(j) => {
                taken[j] = true;
                pairs.push((i, j));
            }
            None => leftover.push(i),
        }
    }
    DimerPartition { pairs, leftover }
}
