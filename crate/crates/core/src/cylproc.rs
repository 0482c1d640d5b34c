//! Windowed Poisson cylinder process: realizations, the cylinder-intersection
//! graph, chemical distance and connection-probability estimators.
//!
//! A realization holds the lines of a Poisson line process that meet
//! `B(o, window_r)`; each line carries a cylinder of radius `s`. Two cylinders
//! meet exactly when their axes are at distance at most `2s`.

use std::collections::VecDeque;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_range, Result};
use crate::hypgeo::{dist, dist_point_geodesic, geodesics_within, Geodesic, Isometry, Point};
use crate::linemeasure::{
    estimate_measure_intersection, measure_hitting_ball, poisson_count, HitRegion, LineWindow, MeasureEstimate,
};
use crate::mc::{derive_seed, replicate_map, Estimate, RngStream};

/// Expected line count above which a realization is refused; pair
/// computations are quadratic in the count.
pub const DEFAULT_REALIZATION_CAP: f64 = 20_000.0;

/// Tolerance on the `2s` adjacency threshold.
pub const ADJACENCY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CylinderProcessRealization {
    pub d: usize,
    pub u: f64,
    pub window_r: f64,
    pub s: f64,
    pub lines: Vec<Geodesic>,
    pub seed: u64,
    pub stream_id: u64,
}

impl CylinderProcessRealization {
    /// A realization with explicitly chosen lines.
    pub fn planted(d: usize, window_r: f64, s: f64, lines: Vec<Geodesic>) -> Self {
        Self {
            d,
            u: f64::NAN,
            window_r,
            s,
            lines,
            seed: 0,
            stream_id: 0,
        }
    }

    /// Union of two independent realizations on the same window: a
    /// realization at the summed intensity.
    pub fn superpose(&self, other: &Self) -> Self {
        let mut lines = self.lines.clone();
        lines.extend(other.lines.iter().cloned());
        Self {
            u: self.u + other.u,
            lines,
            ..self.clone()
        }
    }

    pub fn len(&self) -> usize {
        self.lines.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lines.is_empty()
    }
}

/// Samples the cylinder process in `B(o, window_r)`.
pub fn realize(rng: &mut RngStream, u: f64, d: usize, window_r: f64, s: f64) -> Result<CylinderProcessRealization> {
    realize_capped(rng, u, d, window_r, s, DEFAULT_REALIZATION_CAP)
}

pub fn realize_capped(
    rng: &mut RngStream,
    u: f64,
    d: usize,
    window_r: f64,
    s: f64,
    cap: f64,
) -> Result<CylinderProcessRealization> {
    check_range("u", u, u >= 0.0 && u.is_finite(), ">= 0")?;
    check_range("s", s, s > 0.0, "> 0")?;
    let window = LineWindow::new(d, window_r)?;
    let (seed, stream_id) = (rng.master_seed(), rng.stream_id());
    let count = poisson_count(rng, u * window.measure(), cap)?;
    let lines = (0..count).map(|_| window.sample(rng)).collect();
    Ok(CylinderProcessRealization {
        d,
        u,
        window_r,
        s,
        lines,
        seed,
        stream_id,
    })
}

/// The feet `a(L)` of all lines.
pub fn closest_point_process(real: &CylinderProcessRealization) -> Vec<Point> {
    real.lines.iter().map(|l| l.foot().clone()).collect()
}

/// Disjoint-set forest with path halving and union by size.
#[derive(Debug, Clone)]
pub struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (mut a, mut b) = (self.find(a), self.find(b));
        if a == b {
            return false;
        }
        if self.size[a] < self.size[b] {
            std::mem::swap(&mut a, &mut b);
        }
        self.parent[b] = a;
        self.size[a] += self.size[b];
        true
    }

    /// Labels `0, 1, ...` in order of first appearance.
    pub fn labels(&mut self) -> Vec<usize> {
        let n = self.parent.len();
        let mut map = vec![usize::MAX; n];
        let mut next = 0;
        (0..n)
            .map(|i| {
                let r = self.find(i);
                if map[r] == usize::MAX {
                    map[r] = next;
                    next += 1;
                }
                map[r]
            })
            .collect()
    }
}

/// Cylinder-intersection graph of a realization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConnectivityGraph {
    pub n_nodes: usize,
    pub edges: Vec<(usize, usize)>,
    pub component_labels: Vec<usize>,
    #[serde(skip)]
    adjacency: Vec<Vec<usize>>,
}

fn adjacent(a: &Geodesic, b: &Geodesic, s: f64) -> bool {
    geodesics_within(a, b, 2.0 * s + ADJACENCY_TOL)
}

/// Builds the full graph. Pairs are tested in parallel; the output does not
/// depend on the number of workers.
pub fn build_graph(real: &CylinderProcessRealization) -> ConnectivityGraph {
    build_graph_lines(&real.lines, real.s)
}

pub fn build_graph_lines(lines: &[Geodesic], s: f64) -> ConnectivityGraph {
    let n = lines.len();
    let adjacency: Vec<Vec<usize>> = (0..n)
        .into_par_iter()
        .map(|i| (0..n).filter(|&j| j != i && adjacent(&lines[i], &lines[j], s)).collect())
        .collect();
    let mut uf = UnionFind::new(n);
    let mut edges = Vec::new();
    for (i, nbrs) in adjacency.iter().enumerate() {
        for &j in nbrs.iter().filter(|&&j| j > i) {
            edges.push((i, j));
            uf.union(i, j);
        }
    }
    ConnectivityGraph {
        n_nodes: n,
        edges,
        component_labels: uf.labels(),
        adjacency,
    }
}

/// Component labels only; skips pairs already known to be connected.
pub fn component_labels(lines: &[Geodesic], s: f64) -> Vec<usize> {
    let n = lines.len();
    let mut uf = UnionFind::new(n);
    for i in 0..n {
        for j in i + 1..n {
            if uf.find(i) != uf.find(j) && adjacent(&lines[i], &lines[j], s) {
                uf.union(i, j);
            }
        }
    }
    uf.labels()
}

/// Component statistics from a label vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComponentSummary {
    pub n_lines: usize,
    pub n_components: usize,
    pub largest: usize,
    /// Fraction of unordered pairs in a common component; `None` below two lines.
    pub pair_connected: Option<f64>,
}

pub fn summarize_labels(labels: &[usize]) -> ComponentSummary {
    let n_components = labels.iter().max().map_or(0, |m| m + 1);
    let mut sizes = vec![0usize; n_components];
    for &l in labels {
        sizes[l] += 1;
    }
    let n = labels.len();
    let pair_connected = (n >= 2).then(|| {
        let same: f64 = sizes.iter().map(|&k| (k * k.saturating_sub(1)) as f64 / 2.0).sum();
        same / ((n * (n - 1)) as f64 / 2.0)
    });
    ComponentSummary {
        n_lines: n,
        n_components,
        largest: sizes.iter().copied().max().unwrap_or(0),
        pair_connected,
    }
}

impl ConnectivityGraph {
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.adjacency[i]
    }

    pub fn n_components(&self) -> usize {
        summarize_labels(&self.component_labels).n_components
    }

    pub fn summary(&self) -> ComponentSummary {
        summarize_labels(&self.component_labels)
    }

    fn bfs(&self, src: usize) -> Vec<Option<usize>> {
        let mut depth = vec![None; self.n_nodes];
        depth[src] = Some(0);
        let mut queue = VecDeque::from([src]);
        while let Some(v) = queue.pop_front() {
            let dv = depth[v].unwrap();
            for &w in &self.adjacency[v] {
                if depth[w].is_none() {
                    depth[w] = Some(dv + 1);
                    queue.push_back(w);
                }
            }
        }
        depth
    }

    /// Minimal number of intermediate cylinders joining `i` and `j`; `None`
    /// when they are in different components. Adjacent cylinders have
    /// distance 0, as does a cylinder with itself.
    pub fn cdist(&self, i: usize, j: usize) -> Option<usize> {
        if i == j {
            return Some(0);
        }
        self.bfs(i)[j].map(|k| k - 1)
    }

    /// Largest finite `cdist` over all pairs.
    pub fn diam_hat(&self) -> Option<usize> {
        (0..self.n_nodes)
            .into_par_iter()
            .filter_map(|i| {
                self.bfs(i)
                    .into_iter()
                    .enumerate()
                    .filter(|&(j, _)| j != i)
                    .filter_map(|(_, k)| k.map(|k| k - 1))
                    .max()
            })
            .max()
    }
}

/// Result of a vacancy query.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Coverage {
    pub covered: bool,
    /// Set when `x` is close enough to the window edge that lines outside
    /// the window could cover it.
    pub edge_warning: bool,
}

/// Whether `x` lies in the occupied set.
pub fn covers_point(real: &CylinderProcessRealization, x: &Point) -> Result<Coverage> {
    let rho = dist(&Point::origin(x.dim()), x)?;
    let mut covered = false;
    for l in &real.lines {
        if dist_point_geodesic(x, l)?.d <= real.s {
            covered = true;
            break;
        }
    }
    Ok(Coverage {
        covered,
        edge_warning: rho + real.s > real.window_r,
    })
}

/// One-step connection probability of `B(x,1)` and `B(y,1)` through a
/// single radius-1 cylinder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OneStepConnection {
    /// `1 - exp(-u μ)` with `μ` the (estimated) measure of lines meeting both
    /// `B(x,2)` and `B(y,2)`.
    pub probability: f64,
    pub measure: MeasureEstimate,
    /// True when `μ` is exact (`x = y`).
    pub exact: bool,
}

pub fn connect_prob_one_step(seed: u64, d: usize, u: f64, x: &Point, y: &Point, n: usize) -> Result<OneStepConnection> {
    check_range("u", u, u >= 0.0 && u.is_finite(), ">= 0")?;
    let r = dist(x, y)?;
    if r == 0.0 {
        let mu = measure_hitting_ball(d, 2.0)?;
        return Ok(OneStepConnection {
            probability: -(-u * mu).exp_m1(),
            measure: MeasureEstimate {
                mean: mu,
                stderr: 0.0,
                n_samples: 0,
                seed,
            },
            exact: true,
        });
    }
    // The measure is isometry invariant: move x to the origin.
    let to_origin = Isometry::translation_to(x).inverse();
    let y0 = to_origin.apply(y);
    let a = HitRegion::ball(Point::origin(d), 2.0);
    let b = HitRegion::ball(y0, 2.0);
    let mu = estimate_measure_intersection(seed, d, &a, &b, 2.0, n)?;
    Ok(OneStepConnection {
        probability: -(-u * mu.mean).exp_m1(),
        measure: mu,
        exact: false,
    })
}

/// Smallest number of cylinders in a chain from a line within distance
/// `2s` of `a` to a line within `2s` of `b`, searching at most `max_len`
/// cylinders. Adjacency is evaluated lazily from the frontier.
pub fn chain_length(lines: &[Geodesic], s: f64, a: &Point, b: &Point, max_len: usize) -> Option<usize> {
    let reach = 2.0 * s + ADJACENCY_TOL;
    let near = |p: &Point, l: &Geodesic| dist_point_geodesic(p, l).is_ok_and(|r| r.d <= reach);
    let is_target: Vec<bool> = lines.iter().map(|l| near(b, l)).collect();
    let mut seen: Vec<bool> = lines.iter().map(|l| near(a, l)).collect();
    let mut frontier: Vec<usize> = (0..lines.len()).filter(|&i| seen[i]).collect();
    for len in 1..=max_len {
        if frontier.iter().any(|&i| is_target[i]) {
            return Some(len);
        }
        if len == max_len {
            break;
        }
        let mut next = Vec::new();
        for j in 0..lines.len() {
            if !seen[j] && frontier.iter().any(|&i| adjacent(&lines[i], &lines[j], s)) {
                seen[j] = true;
                next.push(j);
            }
        }
        if next.is_empty() {
            break;
        }
        frontier = next;
    }
    None
}

/// Windowed estimate of the probability that `B(o,1)` and `B(y,1)`,
/// `d(o,y) = R`, are joined by at most `m` unit cylinders.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MStepEstimate {
    pub estimate: MeasureEstimate,
    pub r: f64,
    pub m: usize,
    pub margin: f64,
    pub window_r: f64,
    /// Chains of three or more cylinders may leave any finite window.
    pub truncation_possible: bool,
}

pub fn estimate_connect_prob_msteps(
    seed: u64,
    d: usize,
    u: f64,
    r: f64,
    m: usize,
    margin: f64,
    reps: usize,
) -> Result<MStepEstimate> {
    check_range("m", m as f64, m >= 1, ">= 1")?;
    check_range("R", r, r > 0.0, "> 0")?;
    check_range("margin", margin, margin >= 0.0, ">= 0")?;
    let window_r = r + margin;
    let o = Point::origin(d);
    let mut e1 = vec![0.0; d];
    e1[0] = 1.0;
    let y = Point::from_polar(r, &e1);
    let hits = replicate_map(reps, seed, |rng| {
        let real = realize(rng, u, d, window_r, 1.0)?;
        Ok(chain_length(&real.lines, 1.0, &o, &y, m).is_some())
    })?;
    let k = hits.iter().filter(|&&h| h).count() as u64;
    Ok(MStepEstimate {
        estimate: Estimate::from_proportion(k, reps, 1.0, seed).into(),
        r,
        m,
        margin,
        window_r,
        truncation_possible: m >= 3 || margin < 2.0,
    })
}

/// The m-step estimate at `margin` and `margin + 2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarginSensitivity {
    pub base: MStepEstimate,
    pub wider: MStepEstimate,
    /// Set when the two estimates differ by more than two combined standard errors.
    pub flagged: bool,
}

pub fn margin_sensitivity(
    seed: u64,
    d: usize,
    u: f64,
    r: f64,
    m: usize,
    margin: f64,
    reps: usize,
) -> Result<MarginSensitivity> {
    let base = estimate_connect_prob_msteps(seed, d, u, r, m, margin, reps)?;
    let wider = estimate_connect_prob_msteps(derive_seed(seed, 1), d, u, r, m, margin + 2.0, reps)?;
    let se = base.estimate.stderr.hypot(wider.estimate.stderr);
    let flagged = (base.estimate.mean - wider.estimate.mean).abs() > 2.0 * se;
    Ok(MarginSensitivity { base, wider, flagged })
}

/// One row of a phase scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseRow {
    pub u: f64,
    pub reps: usize,
    pub mean_components: f64,
    pub components_se: f64,
    pub largest_frac: f64,
    pub largest_frac_se: f64,
    /// Averaged over realizations with at least two lines.
    pub pair_conn: f64,
    pub pair_conn_se: f64,
}

pub const PHASE_CSV_HEADER: &str = "u,reps,mean_components,se,largest_frac,se,pair_conn,se";

impl PhaseRow {
    pub fn csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.u,
            self.reps,
            self.mean_components,
            self.components_se,
            self.largest_frac,
            self.largest_frac_se,
            self.pair_conn,
            self.pair_conn_se
        )
    }
}

/// Component statistics of windowed realizations over a grid of intensities.
/// Each intensity uses its own seed derived from `seed` and its grid index.
pub fn phase_scan(seed: u64, d: usize, window_r: f64, u_grid: &[f64], reps: usize) -> Result<Vec<PhaseRow>> {
    check_range("reps", reps as f64, reps >= 2, ">= 2")?;
    u_grid
        .iter()
        .enumerate()
        .map(|(k, &u)| {
            let sub = derive_seed(seed, k as u64);
            let rows = replicate_map(reps, sub, |rng| {
                let real = realize(rng, u, d, window_r, 1.0)?;
                Ok(summarize_labels(&component_labels(&real.lines, real.s)))
            })?;
            let comps: Vec<f64> = rows.iter().map(|r| r.n_components as f64).collect();
            let largest: Vec<f64> = rows
                .iter()
                .map(|r| if r.n_lines == 0 { 0.0 } else { r.largest as f64 / r.n_lines as f64 })
                .collect();
            let pairs: Vec<f64> = rows.iter().filter_map(|r| r.pair_connected).collect();
            let (c, l, p) = (
                Estimate::from_samples(&comps, sub),
                Estimate::from_samples(&largest, sub),
                Estimate::from_samples(&pairs, sub),
            );
            Ok(PhaseRow {
                u,
                reps,
                mean_components: c.mean,
                components_se: c.stderr,
                largest_frac: l.mean,
                largest_frac_se: l.stderr,
                pair_conn: p.mean,
                pair_conn_se: p.stderr,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn perp(rho: f64, sign: f64) -> Geodesic {
        Geodesic::from_foot(rho, &[sign, 0.0], &[0.0, 1.0]).unwrap()
    }

    #[test]
    fn union_find_labels_by_first_appearance() {
        let mut uf = UnionFind::new(5);
        uf.union(3, 4);
        uf.union(1, 3);
        assert_eq!(uf.labels(), vec![0, 1, 2, 1, 1]);
    }

    #[test]
    fn empty_realization() {
        let mut rng = RngStream::new(0, 0);
        let r = realize(&mut rng, 0.0, 2, 3.0, 1.0).unwrap();
        assert!(r.is_empty());
        let g = build_graph(&r);
        assert_eq!(g.n_components(), 0);
        assert!(closest_point_process(&r).is_empty());
        assert!(!covers_point(&r, &Point::origin(2)).unwrap().covered);
    }

    #[test]
    fn summary_of_labels() {
        let s = summarize_labels(&[0, 0, 1, 0, 2]);
        assert_eq!(s.n_components, 3);
        assert_eq!(s.largest, 3);
        assert!((s.pair_connected.unwrap() - 0.3).abs() < 1e-15);
        assert_eq!(summarize_labels(&[0]).pair_connected, None);
    }

    #[test]
    fn planted_components() {
        // Feet on a common perpendicular at 0, 0.5 and 3 give pairwise
        // distances 0.5, 3, 2.5: only the first pair is adjacent.
        let lines = vec![perp(0.0, 1.0), perp(0.5, 1.0), perp(3.0, -1.0)];
        let g = build_graph_lines(&lines, 1.0);
        assert_eq!(g.edges, vec![(0, 1)]);
        assert_eq!(g.n_components(), 2);
        assert_eq!(g.cdist(0, 2), None);
        assert_eq!(g.cdist(0, 1), Some(0));
        assert_eq!(g.cdist(2, 2), Some(0));
        assert_eq!(component_labels(&lines, 1.0), g.component_labels);
    }

    #[test]
    fn one_step_zero_intensity() {
        let x = Point::origin(2);
        let y = Point::from_polar(3.0, &[1.0, 0.0]);
        let r = connect_prob_one_step(1, 2, 0.0, &x, &y, 1000).unwrap();
        assert_eq!(r.probability, 0.0);
    }

    #[test]
    fn one_step_coincident_points_is_exact() {
        let x = Point::from_polar(1.0, &[0.0, 1.0]);
        let r = connect_prob_one_step(1, 2, 0.1, &x, &x, 10).unwrap();
        assert!(r.exact);
        assert!((r.probability - 0.856_165_553_013_517_6).abs() < 1e-12);
    }
}
