//! Causal structure of finite event sets in flat space-time.
//!
//! Events are points `(t, x_1, ..., x_n)`; intervals use `-c^2 dt^2 + |dx|^2`.
//! Curves become paths in a [`CausalGraph`] whose edges join
//! future-directed timelike or null pairs within a neighbour radius.
//!
//! A path is *causal* when every edge is timelike or null, and
//! *chronological* when it is causal and contains at least one timelike
//! edge. The second rule makes `I+` absorb causal extensions on either side
//! (`J+(I+(S)) = I+(J+(S)) = I+(S)` up to `S`), which is what the achronality
//! of the future boundary rests on. Flat-space soundness is kept: a sum of
//! future causal vectors with one timelike term is timelike.
//!
//! Event subsets are passed as index slices and returned as sorted index
//! vectors. Indices out of range panic.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Relative tolerance of the null test: `|s| <= NULL_TOL (c^2 dt^2 + |dx|^2)`.
pub const NULL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum IntervalClass {
    TimelikeFuture,
    NullFuture,
    Spacelike,
    TimelikePast,
    NullPast,
    Coincident,
}

/// `-c^2 (q_0 - p_0)^2 + sum_i (q_i - p_i)^2`.
pub fn interval(p: &[f64], q: &[f64], c: f64) -> f64 {
    let dt = c * (q[0] - p[0]);
    let dx2: f64 = p[1..].iter().zip(&q[1..]).map(|(a, b)| (b - a) * (b - a)).sum();
    -dt * dt + dx2
}

pub fn classify_interval(p: &[f64], q: &[f64], c: f64) -> IntervalClass {
    let dt = c * (q[0] - p[0]);
    let dx2: f64 = p[1..].iter().zip(&q[1..]).map(|(a, b)| (b - a) * (b - a)).sum();
    let scale = dt * dt + dx2;
    if scale == 0.0 {
        return IntervalClass::Coincident;
    }
    let s = -dt * dt + dx2;
    let future = dt > 0.0;
    if s.abs() <= NULL_TOL * scale {
        if future {
            IntervalClass::NullFuture
        } else {
            IntervalClass::NullPast
        }
    } else if s > 0.0 {
        IntervalClass::Spacelike
    } else if future {
        IntervalClass::TimelikeFuture
    } else {
        IntervalClass::TimelikePast
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ConeRelation {
    Chronological,
    Causal,
    Neither,
}

/// Exact flat cone membership of `q` relative to `p`, no tolerance.
pub fn flat_cone_oracle(p: &[f64], q: &[f64], c: f64) -> ConeRelation {
    let dt = q[0] - p[0];
    if !(dt > 0.0) {
        return ConeRelation::Neither;
    }
    let t2 = c * c * dt * dt;
    let x2: f64 = p[1..].iter().zip(&q[1..]).map(|(a, b)| (b - a) * (b - a)).sum();
    if t2 > x2 {
        ConeRelation::Chronological
    } else if t2 == x2 {
        ConeRelation::Causal
    } else {
        ConeRelation::Neither
    }
}

/// Finite set of distinct events sharing a speed constant `c`.
#[derive(Debug, Clone, PartialEq)]
pub struct EventSet {
    dim: usize,
    coords: Vec<f64>,
    c: f64,
}

impl EventSet {
    pub fn new(events: Vec<Vec<f64>>, c: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::Events(format!("speed constant c = {c} must be positive")));
        }
        let dim = events.first().map_or(1, Vec::len);
        if dim < 1 {
            return Err(Error::Events("events need a time coordinate".into()));
        }
        let mut coords = Vec::with_capacity(events.len() * dim);
        for (i, e) in events.iter().enumerate() {
            if e.len() != dim {
                return Err(Error::Events(format!("event {i} has {} coordinates, expected {dim}", e.len())));
            }
            if e.iter().any(|x| !x.is_finite()) {
                return Err(Error::Events(format!("event {i} has a non-finite coordinate")));
            }
            coords.extend_from_slice(e);
        }
        let mut order: Vec<usize> = (0..events.len()).collect();
        order.sort_by(|&a, &b| events[a].partial_cmp(&events[b]).expect("finite"));
        if let Some(w) = order.windows(2).find(|w| events[w[0]] == events[w[1]]) {
            return Err(Error::Events(format!("events {} and {} coincide", w[0].min(w[1]), w[0].max(w[1]))));
        }
        Ok(Self { dim, coords, c })
    }

    /// Regular grid with `counts[a]` nodes of spacing `spacings[a]` along
    /// axis `a` (axis 0 is time), starting at the origin. Events are
    /// numbered row-major with time slowest.
    pub fn flat_grid(counts: &[usize], spacings: &[f64], c: f64) -> Result<Self> {
        if counts.len() != spacings.len() || counts.is_empty() || counts.contains(&0) {
            return Err(Error::Events("grid needs one positive count and spacing per axis".into()));
        }
        let total: usize = counts.iter().product();
        let mut events = Vec::with_capacity(total);
        let mut idx = vec![0usize; counts.len()];
        for _ in 0..total {
            events.push(idx.iter().zip(spacings).map(|(&i, &h)| i as f64 * h).collect());
            for a in (0..counts.len()).rev() {
                idx[a] += 1;
                if idx[a] < counts[a] {
                    break;
                }
                idx[a] = 0;
            }
        }
        Self::new(events, c)
    }

    /// Parses one event per line, whitespace-separated coordinates with time
    /// first; blank lines and `#` comments are skipped.
    pub fn parse(text: &str, c: f64) -> Result<Self> {
        let mut events = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let e = line
                .split_whitespace()
                .map(|w| {
                    w.parse::<f64>()
                        .map_err(|_| Error::Events(format!("line {}: cannot parse {w:?}", lineno + 1)))
                })
                .collect::<Result<Vec<_>>>()?;
            events.push(e);
        }
        if events.is_empty() {
            return Err(Error::Events("no events".into()));
        }
        Self::new(events, c)
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    /// Number of coordinates per event, `n + 1`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn event(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn euclidean_distance(&self, a: usize, b: usize) -> f64 {
        self.event(a)
            .iter()
            .zip(self.event(b))
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt()
    }

    pub fn classify(&self, a: usize, b: usize) -> IntervalClass {
        classify_interval(self.event(a), self.event(b), self.c)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EdgeKind {
    Timelike,
    Null,
}

/// Future-directed neighbour edges of an [`EventSet`].
#[derive(Debug, Clone)]
pub struct CausalGraph {
    events: EventSet,
    radius: f64,
    out: Vec<Vec<(usize, EdgeKind)>>,
    inc: Vec<Vec<(usize, EdgeKind)>>,
    /// All events within `radius`, causal or not.
    near: Vec<Vec<usize>>,
    /// Events by increasing time (ties by index); a topological order.
    order: Vec<usize>,
}

/// Edge `p -> q` iff `|q - p|_E <= radius` and `q` is in the timelike or null
/// future of `p`. Edges are listed by target index.
pub fn build_graph(events: &EventSet, radius: f64) -> Result<CausalGraph> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::Events(format!("neighbour radius {radius} must be positive")));
    }
    let n = events.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        events.event(a)[0]
            .partial_cmp(&events.event(b)[0])
            .expect("finite")
            .then(a.cmp(&b))
    });
    let mut out = vec![Vec::new(); n];
    let mut inc = vec![Vec::new(); n];
    let mut near = vec![Vec::new(); n];
    // Sweep in time order; only pairs with |dt| <= radius can be neighbours.
    for (pos, &a) in order.iter().enumerate() {
        let ta = events.event(a)[0];
        for &b in &order[pos + 1..] {
            if events.event(b)[0] - ta > radius {
                break;
            }
            if events.euclidean_distance(a, b) > radius {
                continue;
            }
            near[a].push(b);
            near[b].push(a);
            let (from, to, kind) = match events.classify(a, b) {
                IntervalClass::TimelikeFuture => (a, b, EdgeKind::Timelike),
                IntervalClass::NullFuture => (a, b, EdgeKind::Null),
                IntervalClass::TimelikePast => (b, a, EdgeKind::Timelike),
                IntervalClass::NullPast => (b, a, EdgeKind::Null),
                IntervalClass::Spacelike | IntervalClass::Coincident => continue,
            };
            out[from].push((to, kind));
            inc[to].push((from, kind));
        }
    }
    for v in out.iter_mut().chain(inc.iter_mut()) {
        v.sort_unstable_by_key(|e| e.0);
    }
    for v in &mut near {
        v.sort_unstable();
    }
    Ok(CausalGraph {
        events: events.clone(),
        radius,
        out,
        inc,
        near,
        order,
    })
}

impl CausalGraph {
    pub fn events(&self) -> &EventSet {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.out.len()
    }

    pub fn is_empty(&self) -> bool {
        self.out.is_empty()
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn out_edges(&self, p: usize) -> &[(usize, EdgeKind)] {
        &self.out[p]
    }

    pub fn in_edges(&self, p: usize) -> &[(usize, EdgeKind)] {
        &self.inc[p]
    }

    pub fn neighbours(&self, p: usize) -> &[usize] {
        &self.near[p]
    }

    pub fn edge(&self, from: usize, to: usize) -> Option<EdgeKind> {
        self.out[from]
            .binary_search_by_key(&to, |e| e.0)
            .ok()
            .map(|i| self.out[from][i].1)
    }

    pub fn edge_count(&self) -> usize {
        self.out.iter().map(Vec::len).sum()
    }

    pub fn sources(&self) -> Vec<usize> {
        (0..self.len()).filter(|&p| self.inc[p].is_empty()).collect()
    }

    pub fn sinks(&self) -> Vec<usize> {
        (0..self.len()).filter(|&p| self.out[p].is_empty()).collect()
    }

    /// Topological order (increasing time).
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    /// Every edge strictly increases time, so the graph has no cycle. This
    /// is also what makes strong causality automatic.
    pub fn is_acyclic(&self) -> bool {
        (0..self.len()).all(|p| {
            self.out[p]
                .iter()
                .all(|&(q, _)| self.events.event(q)[0] > self.events.event(p)[0])
        })
    }
}

fn mask(n: usize, s: &[usize]) -> Vec<bool> {
    let mut m = vec![false; n];
    for &i in s {
        assert!(i < n, "event index {i} out of range (0..{n})");
        m[i] = true;
    }
    m
}

fn indices(m: &[bool]) -> Vec<usize> {
    m.iter().enumerate().filter(|(_, b)| **b).map(|(i, _)| i).collect()
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Dir {
    Future,
    Past,
}

/// `(J, I)` masks: causal-path reach including `S`, and reach by causal paths
/// with at least one timelike edge.
fn reach(g: &CausalGraph, s: &[usize], dir: Dir) -> (Vec<bool>, Vec<bool>) {
    let n = g.len();
    let mut j = mask(n, s);
    let mut i = vec![false; n];
    let mut visit = |p: usize| {
        let preds = match dir {
            Dir::Future => &g.inc[p],
            Dir::Past => &g.out[p],
        };
        for &(q, kind) in preds {
            if j[q] {
                j[p] = true;
                if i[q] || kind == EdgeKind::Timelike {
                    i[p] = true;
                    break;
                }
            }
        }
    };
    match dir {
        Dir::Future => g.order.iter().for_each(|&p| visit(p)),
        Dir::Past => g.order.iter().rev().for_each(|&p| visit(p)),
    }
    (j, i)
}

/// `I+(S)`: events reached from `S` by a chronological path.
pub fn chronological_future(s: &[usize], g: &CausalGraph) -> Vec<usize> {
    indices(&reach(g, s, Dir::Future).1)
}

/// `J+(S)`: `S` together with events reached by a causal path.
pub fn causal_future(s: &[usize], g: &CausalGraph) -> Vec<usize> {
    indices(&reach(g, s, Dir::Future).0)
}

pub fn chronological_past(s: &[usize], g: &CausalGraph) -> Vec<usize> {
    indices(&reach(g, s, Dir::Past).1)
}

pub fn causal_past(s: &[usize], g: &CausalGraph) -> Vec<usize> {
    indices(&reach(g, s, Dir::Past).0)
}

/// `(I-(S), J-(S))`.
pub fn pasts(s: &[usize], g: &CausalGraph) -> (Vec<usize>, Vec<usize>) {
    let (j, i) = reach(g, s, Dir::Past);
    (indices(&i), indices(&j))
}

/// `I+(S) ∩ S = ∅`.
pub fn is_achronal(s: &[usize], g: &CausalGraph) -> bool {
    let (_, i) = reach(g, s, Dir::Future);
    s.iter().all(|&p| !i[p])
}

/// Discrete future boundary of `I+(S)`: events outside `I+(S)` that are
/// either in `J+(S)` or within the neighbour radius of `I+(S)`, and whose own
/// chronological future lies inside `I+(S)`.
///
/// The last condition holds automatically for limit points of `I+(S)` in the
/// continuum; on a finite set it filters events that only look adjacent.
/// Membership of `J+(S) \ I+(S)` events is never filtered: their futures are
/// inside `I+(S)` by the path rule.
pub fn future_boundary(s: &[usize], g: &CausalGraph) -> Vec<usize> {
    let (j, i) = reach(g, s, Dir::Future);
    let mut out = vec![false; g.len()];
    for p in 0..g.len() {
        if i[p] {
            continue;
        }
        if j[p] {
            out[p] = true;
        } else if g.near[p].iter().any(|&q| i[q]) {
            let (_, ip) = reach(g, &[p], Dir::Future);
            out[p] = ip.iter().zip(&i).all(|(a, b)| !a || *b);
        }
    }
    indices(&out)
}

/// Largest `|interval|` over consecutive steps of a path, and the step where
/// it occurs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NullCheck {
    pub max_abs_interval: f64,
    /// Most negative step interval (timelike steps make it `< 0`).
    pub min_interval: f64,
    pub worst_step: usize,
}

impl NullCheck {
    pub fn is_null(&self, tol: f64) -> bool {
        self.max_abs_interval <= tol
    }
}

pub fn null_boundary_check(path: &[usize], g: &CausalGraph) -> Result<NullCheck> {
    let mut rep = NullCheck {
        max_abs_interval: 0.0,
        min_interval: 0.0,
        worst_step: 0,
    };
    for (k, w) in path.windows(2).enumerate() {
        if g.edge(w[0], w[1]).is_none() {
            return Err(Error::NotNeighbor { from: w[0], to: w[1] });
        }
        let s = interval(g.events.event(w[0]), g.events.event(w[1]), g.events.c);
        if s.abs() > rep.max_abs_interval {
            rep.max_abs_interval = s.abs();
            rep.worst_step = k;
        }
        rep.min_interval = rep.min_interval.min(s);
    }
    Ok(rep)
}

fn dependence(s: &[usize], g: &CausalGraph, dir: Dir) -> Vec<bool> {
    let mut good = mask(g.len(), s);
    let mut visit = |p: usize| {
        if good[p] {
            return;
        }
        let preds = match dir {
            Dir::Future => &g.inc[p],
            Dir::Past => &g.out[p],
        };
        good[p] = !preds.is_empty() && preds.iter().all(|&(q, _)| good[q]);
    };
    match dir {
        Dir::Future => g.order.iter().for_each(|&p| visit(p)),
        Dir::Past => g.order.iter().rev().for_each(|&p| visit(p)),
    }
    good
}

/// `D+(S)`: events all of whose maximal backward causal paths meet `S`.
pub fn future_dependence(s: &[usize], g: &CausalGraph) -> Vec<usize> {
    indices(&dependence(s, g, Dir::Future))
}

/// `D-(S)`: events all of whose maximal forward causal paths meet `S`.
pub fn past_dependence(s: &[usize], g: &CausalGraph) -> Vec<usize> {
    indices(&dependence(s, g, Dir::Past))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CauchyWitness {
    /// `to` lies in the chronological future of `from`, both in `Σ`.
    Chronology { from: usize, to: usize },
    /// Event outside `D+(Σ) ∪ D-(Σ)`.
    Uncovered(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CauchyVerdict {
    pub is_cauchy: bool,
    pub witness: Option<CauchyWitness>,
}

pub fn is_cauchy_surface(sigma: &[usize], g: &CausalGraph) -> CauchyVerdict {
    let (_, i) = reach(g, sigma, Dir::Future);
    if let Some(&to) = sigma.iter().find(|&&p| i[p]) {
        let from = sigma
            .iter()
            .copied()
            .find(|&p| reach(g, &[p], Dir::Future).1[to])
            .expect("a chronological predecessor in the set");
        return CauchyVerdict {
            is_cauchy: false,
            witness: Some(CauchyWitness::Chronology { from, to }),
        };
    }
    let dp = dependence(sigma, g, Dir::Future);
    let dm = dependence(sigma, g, Dir::Past);
    match (0..g.len()).find(|&p| !dp[p] && !dm[p]) {
        Some(p) => CauchyVerdict {
            is_cauchy: false,
            witness: Some(CauchyWitness::Uncovered(p)),
        },
        None => CauchyVerdict {
            is_cauchy: true,
            witness: None,
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathSampling {
    /// Every maximal path; fails when there are more than `limit`.
    Exhaustive { limit: usize },
    /// `count` maximal paths grown in both directions from uniformly chosen
    /// events, taking uniformly chosen edges.
    Sampled { count: usize, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InterceptReport {
    pub paths_checked: usize,
    pub exhaustive: bool,
    /// Paths missing `Σ`, `I+(Σ)` or `I-(Σ)` (first few kept).
    pub violations: Vec<Vec<usize>>,
    pub violation_count: usize,
}

impl InterceptReport {
    pub fn ok(&self) -> bool {
        self.violation_count == 0
    }
}

const KEPT_VIOLATIONS: usize = 16;

/// Checks that maximal causal paths meet `Σ`, `I+(Σ)` and `I-(Σ)`.
pub fn intercept_check(sigma: &[usize], g: &CausalGraph, mode: PathSampling) -> Result<InterceptReport> {
    let verdict = is_cauchy_surface(sigma, g);
    if !verdict.is_cauchy {
        return Err(Error::Precondition(format!("not a Cauchy surface: {:?}", verdict.witness)));
    }
    let on = mask(g.len(), sigma);
    let ip = reach(g, sigma, Dir::Future).1;
    let im = reach(g, sigma, Dir::Past).1;
    let mut rep = InterceptReport {
        paths_checked: 0,
        exhaustive: matches!(mode, PathSampling::Exhaustive { .. }),
        violations: Vec::new(),
        violation_count: 0,
    };
    let check = |path: &[usize], rep: &mut InterceptReport| {
        rep.paths_checked += 1;
        let meets = |m: &[bool]| path.iter().any(|&p| m[p]);
        if !(meets(&on) && meets(&ip) && meets(&im)) {
            rep.violation_count += 1;
            if rep.violations.len() < KEPT_VIOLATIONS {
                rep.violations.push(path.to_vec());
            }
        }
    };
    match mode {
        PathSampling::Exhaustive { limit } => {
            // Iterative DFS from every source over out-edges.
            for src in g.sources() {
                let mut path = vec![src];
                let mut next = vec![0usize];
                while let Some(&p) = path.last() {
                    let k = *next.last().expect("aligned with path");
                    if g.out[p].is_empty() && k == 0 {
                        if rep.paths_checked >= limit {
                            return Err(Error::Precondition(format!("more than {limit} maximal paths")));
                        }
                        check(&path, &mut rep);
                    }
                    if k < g.out[p].len() {
                        *next.last_mut().expect("nonempty") += 1;
                        path.push(g.out[p][k].0);
                        next.push(0);
                    } else {
                        path.pop();
                        next.pop();
                    }
                }
            }
        }
        PathSampling::Sampled { count, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for _ in 0..count {
                let start = rng.gen_range(0..g.len());
                let mut back = VecDeque::from([start]);
                while let Some(&p) = back.front() {
                    let e = &g.inc[p];
                    if e.is_empty() {
                        break;
                    }
                    back.push_front(e[rng.gen_range(0..e.len())].0);
                }
                loop {
                    let p = *back.back().expect("nonempty");
                    let e = &g.out[p];
                    if e.is_empty() {
                        break;
                    }
                    back.push_back(e[rng.gen_range(0..e.len())].0);
                }
                let path: Vec<usize> = back.into_iter().collect();
                check(&path, &mut rep);
            }
        }
    }
    Ok(rep)
}

/// All maximal backward causal paths from `p` (each starts at `p`). Meant for
/// desk-scale graphs.
pub fn backward_paths(p: usize, g: &CausalGraph) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut path = vec![p];
    fn go(g: &CausalGraph, path: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        let last = *path.last().expect("nonempty");
        if g.inc[last].is_empty() {
            out.push(path.clone());
            return;
        }
        for &(q, _) in &g.inc[last] {
            path.push(q);
            go(g, path, out);
            path.pop();
        }
    }
    go(g, &mut path, &mut out);
    out
}
