//! Nonnegative atomic measures on the unit square.

use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::transport::{gen_wasserstein, GroundNorm};

/// Coordinates closer than this are treated as one location.
pub const MERGE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub t: f64,
    pub s: f64,
}

impl Point {
    pub const fn new(t: f64, s: f64) -> Self {
        Point { t, s }
    }

    pub fn max_dist(&self, other: &Point) -> f64 {
        (self.t - other.t).abs().max((self.s - other.s).abs())
    }

    pub fn is_interior(&self) -> bool {
        self.t > 0.0 && self.t < 1.0 && self.s > 0.0 && self.s < 1.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Atom {
    pub loc: Point,
    pub weight: f64,
}

/// Finite sum of positively weighted Dirac masses in [0,1]².
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AtomicMeasure {
    atoms: Vec<Atom>,
}

impl AtomicMeasure {
    pub fn empty() -> Self {
        AtomicMeasure { atoms: Vec::new() }
    }

    /// Validates locations and weights, drops zero weights and merges
    /// atoms whose coordinates agree to [`MERGE_TOL`].
    pub fn new(atoms: impl IntoIterator<Item = Atom>) -> Result<Self> {
        let mut out: Vec<Atom> = Vec::new();
        for a in atoms {
            let Point { t, s } = a.loc;
            let w = a.weight;
            let ok = t.is_finite()
                && s.is_finite()
                && w.is_finite()
                && (0.0..=1.0).contains(&t)
                && (0.0..=1.0).contains(&s)
                && w >= 0.0;
            if !ok {
                return Err(Error::InvalidAtom { t, s, w });
            }
            if w == 0.0 {
                continue;
            }
            match out.iter_mut().find(|b| {
                (b.loc.t - t).abs() <= MERGE_TOL && (b.loc.s - s).abs() <= MERGE_TOL
            }) {
                Some(b) => b.weight += w,
                None => out.push(a),
            }
        }
        Ok(AtomicMeasure { atoms: out })
    }

    /// Builds a measure from `(t, s, weight)` triples.
    pub fn from_triples(triples: &[(f64, f64, f64)]) -> Result<Self> {
        Self::new(triples.iter().map(|&(t, s, w)| Atom {
            loc: Point::new(t, s),
            weight: w,
        }))
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn locations(&self) -> Vec<Point> {
        self.atoms.iter().map(|a| a.loc).collect()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.atoms.iter().map(|a| a.weight).collect()
    }

    pub fn tv_norm(&self) -> f64 {
        self.atoms.iter().map(|a| a.weight).sum()
    }

    /// True iff every atom lies in the open square.
    pub fn is_interior(&self) -> bool {
        self.atoms.iter().all(|a| a.loc.is_interior())
    }

    /// Largest ν such that all per-coordinate pairwise gaps and all
    /// boundary gaps are at least ν.
    pub fn sep(&self) -> Result<f64> {
        if self.atoms.is_empty() {
            return Err(Error::UndefinedSeparation);
        }
        if let Some(a) = self.atoms.iter().find(|a| !a.loc.is_interior()) {
            return Err(Error::BoundarySupport {
                t: a.loc.t,
                s: a.loc.s,
            });
        }
        let mut nu = f64::INFINITY;
        for (k, a) in self.atoms.iter().enumerate() {
            let Point { t, s } = a.loc;
            nu = nu.min(t).min(1.0 - t).min(s).min(1.0 - s);
            for b in &self.atoms[k + 1..] {
                nu = nu.min((t - b.loc.t).abs()).min((s - b.loc.s).abs());
            }
        }
        Ok(nu)
    }

    pub fn union(&self, other: &AtomicMeasure) -> AtomicMeasure {
        // Inputs are already validated, so merging cannot fail.
        AtomicMeasure::new(self.atoms.iter().chain(other.atoms.iter()).copied())
            .unwrap_or_default()
    }

    /// Swaps the roles of t and s.
    pub fn transpose(&self) -> AtomicMeasure {
        AtomicMeasure {
            atoms: self
                .atoms
                .iter()
                .map(|a| Atom {
                    loc: Point::new(a.loc.s, a.loc.t),
                    weight: a.weight,
                })
                .collect(),
        }
    }

    /// Total weight of atoms inside `region`.
    pub fn mass_in(&self, region: impl Fn(&Point) -> bool) -> f64 {
        self.atoms
            .iter()
            .filter(|a| region(&a.loc))
            .map(|a| a.weight)
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scope {
    /// Max-norm boxes ‖θ − θ_k‖_∞ ≤ ε.
    Joint,
    /// Intervals |t − t_k| ≤ ε on the first coordinate.
    AxisT,
    /// Intervals |s − s_k| ≤ ε on the second coordinate.
    AxisS,
}

/// Union of ε-neighbourhoods around a set of centers.
#[derive(Debug, Clone, PartialEq)]
pub struct Neighborhood {
    pub centers: Vec<Point>,
    pub radius: f64,
    pub scope: Scope,
}

impl Neighborhood {
    pub fn new(centers: Vec<Point>, radius: f64, scope: Scope) -> Result<Self> {
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(invalid("neighborhood radius must be positive"));
        }
        Ok(Neighborhood {
            centers,
            radius,
            scope,
        })
    }

    fn member(&self, c: &Point, p: &Point) -> bool {
        match self.scope {
            Scope::Joint => c.max_dist(p) <= self.radius,
            Scope::AxisT => (c.t - p.t).abs() <= self.radius,
            Scope::AxisS => (c.s - p.s).abs() <= self.radius,
        }
    }

    /// Index of the first neighbourhood containing `p`.
    pub fn index_of(&self, p: &Point) -> Option<usize> {
        self.centers.iter().position(|c| self.member(c, p))
    }

    pub fn contains(&self, p: &Point) -> bool {
        self.index_of(p).is_some()
    }

    pub fn contains_in(&self, k: usize, p: &Point) -> bool {
        self.centers.get(k).is_some_and(|c| self.member(c, p))
    }
}

/// Result of [`approximate_sparse`].
#[derive(Debug, Clone, PartialEq)]
pub struct SparseApprox {
    pub measure: AtomicMeasure,
    pub residual: f64,
    /// Minimum of the residual over the coarse candidate grid, when the
    /// instance is small enough for the oracle.
    pub oracle: Option<f64>,
    /// `residual ≤ λ · oracle`, when the oracle ran.
    pub certified: Option<bool>,
}

/// Residual of the best witness with the given centers: every atom either
/// moves to its nearest center or is destroyed, whichever is cheaper.
pub fn residual_for_centers(x: &AtomicMeasure, centers: &[Point], norm: GroundNorm) -> f64 {
    x.atoms()
        .iter()
        .map(|a| {
            let d = centers
                .iter()
                .map(|c| norm.dist(&a.loc, c))
                .fold(f64::INFINITY, f64::min);
            a.weight * d.min(1.0)
        })
        .sum()
}

/// Witness measure for fixed centers: each center receives the mass of the
/// atoms it serves.
fn witness_for_centers(x: &AtomicMeasure, centers: &[Point], norm: GroundNorm) -> AtomicMeasure {
    let mut mass = alloc::vec![0.0; centers.len()];
    for a in x.atoms() {
        if let Some((j, d)) = nearest(&a.loc, centers, norm) {
            if d < 1.0 {
                mass[j] += a.weight;
            }
        }
    }
    AtomicMeasure::new(centers.iter().zip(mass).map(|(c, w)| Atom { loc: *c, weight: w }))
        .unwrap_or_default()
}

fn nearest(p: &Point, centers: &[Point], norm: GroundNorm) -> Option<(usize, f64)> {
    centers
        .iter()
        .enumerate()
        .map(|(j, c)| (j, norm.dist(p, c)))
        .fold(None, |best: Option<(usize, f64)>, (j, d)| match best {
            Some((_, bd)) if bd <= d => best,
            _ => Some((j, d)),
        })
}

/// K-sparse, ε-separated approximation x_{K,ε} of `x` and the residual
/// d_GW(x, x_{K,ε}).
///
/// The witness is feasible but not provably optimal. For at most three
/// atoms and K ≤ 3 a coarse-grid oracle also runs and `certified` reports
/// whether the residual is within `lambda` of it.
pub fn approximate_sparse(
    x: &AtomicMeasure,
    k: usize,
    epsilon: f64,
    lambda: f64,
    norm: GroundNorm,
) -> Result<SparseApprox> {
    if k == 0 {
        return Err(invalid("K must be at least 1"));
    }
    if !(epsilon > 0.0 && epsilon <= 0.5) {
        return Err(invalid("epsilon must lie in (0, 1/2]"));
    }
    if !(lambda > 1.0) {
        return Err(invalid("lambda must exceed 1"));
    }
    if (k as f64 + 1.0) * epsilon > 1.0 {
        return Err(Error::InfeasibleGeometry { k, epsilon });
    }
    if let Some(a) = x.atoms().iter().find(|a| !a.loc.is_interior()) {
        return Err(Error::BoundarySupport {
            t: a.loc.t,
            s: a.loc.s,
        });
    }
    if x.is_empty() {
        return Ok(SparseApprox {
            measure: AtomicMeasure::empty(),
            residual: 0.0,
            oracle: Some(0.0),
            certified: Some(true),
        });
    }

    let (measure, residual) = if x.len() <= k && x.sep()? >= epsilon {
        (x.clone(), 0.0)
    } else {
        let mut best: Option<(Vec<Point>, f64)> = None;
        for kk in 1..=k.min(x.len()) {
            let centers = cluster_search(x, kk, epsilon, norm);
            let r = residual_for_centers(x, &centers, norm);
            if best.as_ref().is_none_or(|(_, br)| r < *br) {
                best = Some((centers, r));
            }
        }
        let (centers, _) = best.ok_or(Error::UndefinedSeparation)?;
        let w = witness_for_centers(x, &centers, norm);
        let (r, _) = gen_wasserstein(x, &w, norm);
        (w, r)
    };

    let (oracle, certified) = if x.len() <= 3 && k <= 3 {
        let o = oracle_residual(x, k, epsilon, norm);
        (Some(o), Some(residual <= lambda * o + 1e-12))
    } else {
        (None, None)
    };
    Ok(SparseApprox {
        measure,
        residual,
        oracle,
        certified,
    })
}

/// Greedy clustering followed by median refinement and projection.
fn cluster_search(x: &AtomicMeasure, k: usize, eps: f64, norm: GroundNorm) -> Vec<Point> {
    let atoms = x.atoms();
    let mut order: Vec<usize> = (0..atoms.len()).collect();
    order.sort_by(|&a, &b| {
        atoms[b]
            .weight
            .partial_cmp(&atoms[a].weight)
            .unwrap_or(core::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });

    // Greedy assignment with running weighted centroids.
    let mut centers: Vec<Point> = Vec::new();
    let mut mass: Vec<f64> = Vec::new();
    let mut label = alloc::vec![0usize; atoms.len()];
    for &i in &order {
        let p = atoms[i].loc;
        let w = atoms[i].weight;
        let close = centers
            .iter()
            .enumerate()
            .filter(|(_, c)| c.max_dist(&p) <= eps)
            .map(|(j, c)| (j, norm.dist(&p, c)))
            .fold(None, |b: Option<(usize, f64)>, (j, d)| match b {
                Some((_, bd)) if bd <= d => b,
                _ => Some((j, d)),
            });
        let j = match close {
            Some((j, _)) => j,
            None if centers.len() < k => {
                centers.push(p);
                mass.push(0.0);
                centers.len() - 1
            }
            None => nearest(&p, &centers, norm).map(|(j, _)| j).unwrap_or(0),
        };
        let m = mass[j] + w;
        centers[j] = Point::new(
            (centers[j].t * mass[j] + p.t * w) / m,
            (centers[j].s * mass[j] + p.s * w) / m,
        );
        mass[j] = m;
        label[i] = j;
    }

    let mut best_centers = project(&medians(x, &label, centers.len(), norm, &centers), &mass, eps);
    let mut best_r = residual_for_centers(x, &best_centers, norm);
    let mut current = best_centers.clone();
    for _ in 0..50 {
        for (i, a) in atoms.iter().enumerate() {
            if let Some((j, _)) = nearest(&a.loc, &current, norm) {
                label[i] = j;
            }
        }
        let mut m = alloc::vec![0.0; current.len()];
        for (i, a) in atoms.iter().enumerate() {
            m[label[i]] += a.weight;
        }
        let next = project(&medians(x, &label, current.len(), norm, &current), &m, eps);
        let r = residual_for_centers(x, &next, norm);
        if r < best_r - 1e-15 {
            best_r = r;
            best_centers = next.clone();
            current = next;
        } else {
            break;
        }
    }
    best_centers
}

/// Weighted geometric median of each cluster; empty clusters keep their
/// previous center.
fn medians(
    x: &AtomicMeasure,
    label: &[usize],
    n: usize,
    norm: GroundNorm,
    previous: &[Point],
) -> Vec<Point> {
    (0..n)
        .map(|j| {
            let pts: Vec<(Point, f64)> = x
                .atoms()
                .iter()
                .zip(label)
                .filter(|(_, &l)| l == j)
                .map(|(a, _)| (a.loc, a.weight))
                .collect();
            if pts.is_empty() {
                previous[j]
            } else {
                geometric_median(&pts, norm)
            }
        })
        .collect()
}

fn weighted_median(vals: &mut [(f64, f64)]) -> f64 {
    vals.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(core::cmp::Ordering::Equal));
    let total: f64 = vals.iter().map(|v| v.1).sum();
    let mut acc = 0.0;
    for (i, &(v, w)) in vals.iter().enumerate() {
        acc += w;
        if acc >= total / 2.0 {
            // Exactly half: any point between the two middle values is optimal.
            if (acc - total / 2.0).abs() <= 1e-15 * total && i + 1 < vals.len() {
                return 0.5 * (v + vals[i + 1].0);
            }
            return v;
        }
    }
    vals.last().map(|v| v.0).unwrap_or(0.5)
}

fn geometric_median(pts: &[(Point, f64)], norm: GroundNorm) -> Point {
    match norm {
        GroundNorm::L1 => {
            let mut ts: Vec<(f64, f64)> = pts.iter().map(|(p, w)| (p.t, *w)).collect();
            let mut ss: Vec<(f64, f64)> = pts.iter().map(|(p, w)| (p.s, *w)).collect();
            Point::new(weighted_median(&mut ts), weighted_median(&mut ss))
        }
        GroundNorm::Linf => {
            // ‖·‖_∞ is ‖·‖_1 / 2 after a 45° rotation.
            let mut us: Vec<(f64, f64)> = pts.iter().map(|(p, w)| (p.t + p.s, *w)).collect();
            let mut vs: Vec<(f64, f64)> = pts.iter().map(|(p, w)| (p.t - p.s, *w)).collect();
            let u = weighted_median(&mut us);
            let v = weighted_median(&mut vs);
            Point::new(((u + v) / 2.0).clamp(0.0, 1.0), ((u - v) / 2.0).clamp(0.0, 1.0))
        }
        GroundNorm::L2 => {
            let total: f64 = pts.iter().map(|p| p.1).sum();
            let mut c = Point::new(
                pts.iter().map(|(p, w)| p.t * w).sum::<f64>() / total,
                pts.iter().map(|(p, w)| p.s * w).sum::<f64>() / total,
            );
            for _ in 0..200 {
                let (mut nt, mut ns, mut den) = (0.0, 0.0, 0.0);
                let mut at_point = None;
                for (p, w) in pts {
                    let d = GroundNorm::L2.dist(p, &c);
                    if d < 1e-14 {
                        at_point = Some(*p);
                        continue;
                    }
                    nt += w * p.t / d;
                    ns += w * p.s / d;
                    den += w / d;
                }
                if den == 0.0 {
                    return at_point.unwrap_or(c);
                }
                let next = Point::new(nt / den, ns / den);
                let step = GroundNorm::L2.dist(&next, &c);
                c = next;
                if step < 1e-13 {
                    break;
                }
            }
            c
        }
    }
}

/// Projects centers onto an ε-separated interior configuration, axis by
/// axis, by weighted isotonic regression on the shifted coordinates.
fn project(centers: &[Point], mass: &[f64], eps: f64) -> Vec<Point> {
    let ts: Vec<f64> = centers.iter().map(|c| c.t).collect();
    let ss: Vec<f64> = centers.iter().map(|c| c.s).collect();
    let w: Vec<f64> = mass.iter().map(|m| m.max(1e-12)).collect();
    let pt = project_axis(&ts, &w, eps);
    let ps = project_axis(&ss, &w, eps);
    pt.into_iter().zip(ps).map(|(t, s)| Point::new(t, s)).collect()
}

fn project_axis(v: &[f64], w: &[f64], eps: f64) -> Vec<f64> {
    let p = v.len();
    // A hair of extra room so rounding never pulls a gap below ε.
    let gap = eps * (1.0 + 1e-12) + 1e-15;
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| v[a].partial_cmp(&v[b]).unwrap_or(core::cmp::Ordering::Equal).then(a.cmp(&b)));
    // u_r = v_(r) − r·gap must be nondecreasing and lie in [gap, 1 − p·gap].
    let u: Vec<f64> = order.iter().enumerate().map(|(r, &i)| v[i] - r as f64 * gap).collect();
    let uw: Vec<f64> = order.iter().map(|&i| w[i]).collect();
    let fitted = pava(&u, &uw);
    let lo = gap;
    let hi = (1.0 - p as f64 * gap).max(lo);
    let mut out = alloc::vec![0.0; p];
    for (r, &i) in order.iter().enumerate() {
        out[i] = fitted[r].clamp(lo, hi) + r as f64 * gap;
    }
    out
}

/// Weighted least-squares isotonic (nondecreasing) fit.
fn pava(y: &[f64], w: &[f64]) -> Vec<f64> {
    let mut blocks: Vec<(f64, f64, usize)> = Vec::new();
    for (&yi, &wi) in y.iter().zip(w) {
        blocks.push((yi, wi, 1));
        while blocks.len() > 1 {
            let n = blocks.len();
            if blocks[n - 2].0 <= blocks[n - 1].0 {
                break;
            }
            let (v2, w2, c2) = blocks.pop().unwrap_or((0.0, 0.0, 0));
            let (v1, w1, c1) = blocks.pop().unwrap_or((0.0, 0.0, 0));
            blocks.push(((v1 * w1 + v2 * w2) / (w1 + w2), w1 + w2, c1 + c2));
        }
    }
    blocks
        .into_iter()
        .flat_map(|(v, _, c)| core::iter::repeat_n(v, c))
        .collect()
}

/// Minimum residual over ≤K ε-separated centers drawn from the interior
/// grid {i/51 : i = 1..50}², for measures with at most three atoms.
pub fn oracle_residual(x: &AtomicMeasure, k: usize, eps: f64, norm: GroundNorm) -> f64 {
    let atoms = x.atoms();
    let n = atoms.len();
    if n == 0 {
        return 0.0;
    }
    let axis: Vec<f64> = (1..=50)
        .map(|i| i as f64 / 51.0)
        .filter(|&c| c >= eps && c <= 1.0 - eps)
        .collect();
    let cands: Vec<Point> = axis
        .iter()
        .flat_map(|&t| axis.iter().map(move |&s| Point::new(t, s)))
        .collect();
    let destroy_all: f64 = atoms.iter().map(|a| a.weight).sum();
    if cands.is_empty() {
        return destroy_all;
    }
    let mut best = destroy_all;

    // Every assignment of atoms to at most k groups, as restricted growth strings.
    let mut labels = alloc::vec![0usize; n];
    loop {
        let groups = labels.iter().copied().max().map_or(0, |m| m + 1);
        if groups <= k {
            // Candidate costs for each group, sorted ascending.
            let mut lists: Vec<Vec<(f64, usize)>> = (0..groups)
                .map(|g| {
                    let mut l: Vec<(f64, usize)> = cands
                        .iter()
                        .enumerate()
                        .map(|(ci, c)| {
                            let cost = atoms
                                .iter()
                                .zip(&labels)
                                .filter(|(_, &lab)| lab == g)
                                .map(|(a, _)| a.weight * norm.dist(&a.loc, c).min(1.0))
                                .sum::<f64>();
                            (cost, ci)
                        })
                        .collect();
                    l.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(core::cmp::Ordering::Equal));
                    l
                })
                .collect();
            let mins: Vec<f64> = lists.iter().map(|l| l[0].0).collect();
            let mut chosen: Vec<Point> = Vec::new();
            branch(&mut lists, &mins, &cands, eps, 0, 0.0, &mut chosen, &mut best);
        }
        // Next restricted growth string.
        let mut i = n;
        loop {
            if i == 1 {
                return best;
            }
            i -= 1;
            let prefix_max = labels[..i].iter().copied().max().unwrap_or(0);
            if labels[i] <= prefix_max && labels[i] + 1 < k {
                labels[i] += 1;
                for l in labels.iter_mut().skip(i + 1) {
                    *l = 0;
                }
                break;
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn branch(
    lists: &mut [Vec<(f64, usize)>],
    mins: &[f64],
    cands: &[Point],
    eps: f64,
    g: usize,
    acc: f64,
    chosen: &mut Vec<Point>,
    best: &mut f64,
) {
    if g == lists.len() {
        if acc < *best {
            *best = acc;
        }
        return;
    }
    let rest: f64 = mins[g + 1..].iter().sum();
    for idx in 0..lists[g].len() {
        let (cost, ci) = lists[g][idx];
        if acc + cost + rest >= *best {
            break;
        }
        let c = cands[ci];
        let separated = chosen
            .iter()
            .all(|o| (o.t - c.t).abs() >= eps - 1e-12 && (o.s - c.s).abs() >= eps - 1e-12);
        if !separated {
            continue;
        }
        chosen.push(c);
        branch(lists, mins, cands, eps, g + 1, acc + cost, chosen, best);
        chosen.pop();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pava_pools_violators() {
        let f = pava(&[0.5, 0.31], &[1.0, 1.0]);
        assert!((f[0] - 0.405).abs() < 1e-15 && (f[1] - 0.405).abs() < 1e-15);
        let g = pava(&[1.0, 2.0, 0.0], &[1.0, 1.0, 2.0]);
        assert!((g[0] - 0.75).abs() < 1e-15);
        assert!(g.windows(2).all(|p| p[0] <= p[1]));
    }

    #[test]
    fn weighted_median_splits_ties() {
        let mut v = [(0.2, 1.0), (0.6, 1.0)];
        assert!((weighted_median(&mut v) - 0.4).abs() < 1e-15);
        let mut v = [(0.2, 1.0), (0.6, 3.0)];
        assert_eq!(weighted_median(&mut v), 0.6);
    }

    #[test]
    fn projection_reaches_separation() {
        let c = [Point::new(0.5, 0.3), Point::new(0.51, 0.7)];
        let p = project(&c, &[1.0, 1.0], 0.2);
        assert!((p[0].t - 0.405).abs() < 1e-9 && (p[1].t - 0.605).abs() < 1e-9);
        assert_eq!(p[0].s, 0.3);
        let m = AtomicMeasure::new(p.iter().map(|&loc| Atom { loc, weight: 1.0 })).unwrap();
        assert!(m.sep().unwrap() >= 0.2);
    }
}
