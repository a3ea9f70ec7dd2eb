//! Greedy minimal-norm matchings and the real partial isometries they define.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::lattice::{ProperSet, SiteIndexMap};
use crate::linalg::{c64, CMat};
use crate::locality::disjoint_cube_pairs;
use crate::operator::OperatorMatrix;

#[derive(Debug, Clone, Serialize)]
pub struct CrossCone {
    pub cube_a: Vec<i64>,
    pub cube_b: Vec<i64>,
    /// matched pairs `y → x` with `y` in one cone and `x` in the other
    pub count: usize,
}

#[derive(Debug, Clone)]
pub struct ProperIsometry {
    /// `(y, x)`: `V δ_y = δ_x`
    pub map: Vec<(usize, usize)>,
    /// domain sites left without a target
    pub unmatched: Vec<usize>,
    /// targets never used
    pub unused: Vec<usize>,
    pub cross_cone: Vec<CrossCone>,
    pub v: OperatorMatrix,
}

impl ProperIsometry {
    pub fn require_domain(&self) -> Result<()> {
        if self.unmatched.is_empty() {
            Ok(())
        } else {
            Err(Error::MatchingFailed(self.unmatched.len()))
        }
    }

    pub fn domain(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.map.iter().map(|p| p.0).collect();
        v.sort_unstable();
        v
    }

    pub fn range(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.map.iter().map(|p| p.1).collect();
        v.sort_unstable();
        v
    }
}

fn dir_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Walks the domain in order of `(|y|², index)`; the `k`-th site takes the
/// unused target of least `(|x|², index)` with `|x̂ − ŷ| < 1/k`, or failing
/// that the unused target of nearest direction.
pub fn greedy_matching(l: &SiteIndexMap, domain: &[usize], targets: &[usize]) -> (Vec<(usize, usize)>, Vec<usize>, Vec<usize>) {
    let mut dom = domain.to_vec();
    dom.sort_by_key(|&i| (l.norm2(i), i));
    let mut tg = targets.to_vec();
    tg.sort_by_key(|&i| (l.norm2(i), i));
    let mut used = vec![false; tg.len()];
    let mut map = Vec::with_capacity(dom.len().min(tg.len()));
    let mut unmatched = Vec::new();
    for (k, &y) in dom.iter().enumerate() {
        let win = 1.0 / (k + 1) as f64;
        let dy = l.direction(y);
        let in_window = (0..tg.len()).find(|&j| !used[j] && dir_dist(l.direction(tg[j]), dy) < win);
        let pick = in_window.or_else(|| {
            (0..tg.len()).filter(|&j| !used[j]).min_by(|&a, &b| {
                dir_dist(l.direction(tg[a]), dy)
                    .total_cmp(&dir_dist(l.direction(tg[b]), dy))
                    .then((l.norm2(tg[a]), tg[a]).cmp(&(l.norm2(tg[b]), tg[b])))
            })
        });
        match pick {
            Some(j) => {
                used[j] = true;
                map.push((y, tg[j]));
            }
            None => unmatched.push(y),
        }
    }
    let unused = (0..tg.len()).filter(|&j| !used[j]).map(|j| tg[j]).collect();
    (map, unmatched, unused)
}

/// `V δ_y = δ_x ⊗ 1_N` for every matched `(y, x)`; real by construction.
pub fn isometry_matrix(l: &Arc<SiteIndexMap>, fiber: usize, map: &[(usize, usize)]) -> OperatorMatrix {
    let n = l.len() * fiber;
    let mut m = CMat::zeros(n, n);
    for &(y, x) in map {
        for i in 0..fiber {
            m[(x * fiber + i, y * fiber + i)] = c64::new(1.0, 0.0);
        }
    }
    OperatorMatrix::new(l.clone(), fiber, m).expect("square by construction")
}

pub fn cross_cone_counts(l: &SiteIndexMap, map: &[(usize, usize)], g: u32) -> Vec<CrossCone> {
    disjoint_cube_pairs(l, g)
        .into_iter()
        .map(|(ca, sa, cb, sb)| {
            let count = map
                .iter()
                .filter(|&&(y, x)| (sa.contains(&y) && sb.contains(&x)) || (sb.contains(&y) && sa.contains(&x)))
                .count();
            CrossCone { cube_a: ca.corner, cube_b: cb.corner, count }
        })
        .collect()
}

/// Matching of an explicit domain onto explicit targets.
pub fn proper_isometry_onto(
    l: &Arc<SiteIndexMap>,
    fiber: usize,
    domain: &[usize],
    targets: &[usize],
    g: u32,
) -> ProperIsometry {
    let (map, unmatched, unused) = greedy_matching(l, domain, targets);
    let cross_cone = cross_cone_counts(l, &map, g);
    let v = isometry_matrix(l, fiber, &map);
    ProperIsometry { map, unmatched, unused, cross_cone, v }
}

/// Isometry from the whole lattice onto `Λ_F`. At finite volume the outer
/// domain sites stay unmatched; `F` itself is always exhausted.
pub fn proper_isometry(f: &ProperSet, l: &Arc<SiteIndexMap>, fiber: usize) -> ProperIsometry {
    let all: Vec<usize> = (0..l.len()).collect();
    proper_isometry_onto(l, fiber, &all, &f.sites, f.generation)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::certify;
    use crate::linalg;

    fn line(r: f64) -> Arc<SiteIndexMap> {
        Arc::new(SiteIndexMap::ball(1, r, 1).unwrap())
    }

    #[test]
    fn evens_trace_in_one_dimension() {
        let l = line(3.0);
        let idx = |x: i64| l.index_of(&[x]).unwrap();
        let f: Vec<usize> = [-2, 0, 2].iter().map(|&x| idx(x)).collect();
        let all: Vec<usize> = (0..l.len()).collect();
        let (map, unmatched, unused) = greedy_matching(&l, &all, &f);
        assert_eq!(map, vec![(idx(0), idx(0)), (idx(-1), idx(-2)), (idx(1), idx(2))]);
        assert_eq!(unmatched, vec![idx(-2), idx(2), idx(-3), idx(3)]);
        assert!(unused.is_empty());
    }

    #[test]
    fn isometry_is_real_and_range_is_f() {
        let l = line(12.0);
        let evens: Vec<usize> = (0..l.len()).filter(|&i| l.site(i)[0] % 2 == 0).collect();
        let f = certify(&l, evens, 1, 2).unwrap();
        let iso = proper_isometry(&f, &l, 2);
        let v = iso.v.mat();
        assert!(linalg::is_zero((linalg::conj(v.as_ref()) - v).as_ref()));
        let lf = OperatorMatrix::projector(l.clone(), 2, &f.sites);
        assert!(linalg::is_zero((v * v.adjoint() - lf.mat()).as_ref()));
        let ld = OperatorMatrix::projector(l.clone(), 2, &iso.domain());
        assert!(linalg::is_zero((v.adjoint() * v - ld.mat()).as_ref()));
        assert!(matches!(iso.require_domain(), Err(Error::MatchingFailed(_))));
        assert!(iso.cross_cone.iter().all(|c| c.count <= 1));
    }

    #[test]
    fn same_set_gives_identity_map() {
        let l = Arc::new(SiteIndexMap::ball(2, 5.0, 1).unwrap());
        let s: Vec<usize> = (0..l.len()).filter(|&i| (l.site(i)[0] + l.site(i)[1]).rem_euclid(2) == 0).collect();
        let (map, unmatched, unused) = greedy_matching(&l, &s, &s);
        assert!(unmatched.is_empty() && unused.is_empty());
        assert!(map.iter().all(|(y, x)| y == x));
    }
}
