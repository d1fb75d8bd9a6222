//! Configurations, stabilization and threshold searches.
//!
//! Particle counts are generic over [`Grains`]: `u64` with checked arithmetic
//! for grid-sized experiments, `BigUint` where counts grow exponentially.

use std::collections::VecDeque;
use std::fmt::{Debug, Display};

use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::{CheckedAdd, CheckedMul, FromPrimitive, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SandlabError};
use crate::graph::{SandpileGraph, VertexId};

/// Unsigned particle counter.
pub trait Grains:
    Clone + Ord + Debug + Display + Integer + CheckedAdd + CheckedMul + FromPrimitive + ToPrimitive + Send + Sync
{
    fn from_count(x: u64) -> Self {
        Self::from_u64(x).expect("u64 fits every counter type")
    }
}

impl<T> Grains for T where
    T: Clone + Ord + Debug + Display + Integer + CheckedAdd + CheckedMul + FromPrimitive + ToPrimitive + Send + Sync
{
}

fn add<T: Grains>(a: &T, b: &T) -> Result<T> {
    a.checked_add(b).ok_or(SandlabError::Overflow)
}

fn mul<T: Grains>(a: &T, b: &T) -> Result<T> {
    a.checked_mul(b).ok_or(SandlabError::Overflow)
}

/// Particle counts indexed by vertex id; the sink slot is always zero.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Configuration<T = u64> {
    values: Vec<T>,
}

impl<T: Grains> Configuration<T> {
    pub fn empty(g: &SandpileGraph) -> Self {
        Configuration { values: vec![T::zero(); g.vertex_count()] }
    }

    pub fn point(g: &SandpileGraph, v: VertexId, x: T) -> Result<Self> {
        g.check_ordinary(v)?;
        let mut c = Self::empty(g);
        c.values[v] = x;
        Ok(c)
    }

    pub fn uniform(g: &SandpileGraph, sites: &[VertexId], x: T) -> Result<Self> {
        let mut c = Self::empty(g);
        for &v in sites {
            g.check_ordinary(v)?;
            c.values[v] = x.clone();
        }
        Ok(c)
    }

    /// Build from values listed for ordinary vertices in id order.
    pub fn from_ordinary(g: &SandpileGraph, ordinary_values: Vec<T>) -> Result<Self> {
        if ordinary_values.len() != g.ordinary_count() {
            return Err(SandlabError::ConfigurationLength {
                expected: g.ordinary_count(),
                got: ordinary_values.len(),
            });
        }
        let mut values = Vec::with_capacity(g.vertex_count());
        let mut it = ordinary_values.into_iter();
        for v in 0..g.vertex_count() {
            values.push(if v == g.sink() { T::zero() } else { it.next().unwrap() });
        }
        Ok(Configuration { values })
    }

    pub fn ordinary_values(&self, g: &SandpileGraph) -> Vec<T> {
        g.ordinary().map(|v| self.values[v].clone()).collect()
    }

    pub fn get(&self, v: VertexId) -> &T {
        &self.values[v]
    }

    pub fn set(&mut self, v: VertexId, x: T) {
        self.values[v] = x;
    }

    pub fn add_at(&mut self, v: VertexId, x: &T) -> Result<()> {
        self.values[v] = add(&self.values[v], x)?;
        Ok(())
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    /// `|c|`, the total particle count.
    pub fn weight(&self) -> Result<T> {
        self.values.iter().try_fold(T::zero(), |acc, x| add(&acc, x))
    }

    pub fn is_stable(&self, g: &SandpileGraph) -> bool {
        g.ordinary().all(|v| self.values[v] < T::from_count(g.degree(v)))
    }

    pub fn scaled(&self, k: &T) -> Result<Self> {
        let values = self.values.iter().map(|x| mul(x, k)).collect::<Result<_>>()?;
        Ok(Configuration { values })
    }

    /// Pointwise `self <= other`.
    pub fn le(&self, other: &Self) -> bool {
        self.values.iter().zip(&other.values).all(|(a, b)| a <= b)
    }
}

impl Configuration<u64> {
    pub fn to_json(&self, g: &SandpileGraph) -> ConfigurationJson {
        ConfigurationJson { values: self.ordinary_values(g) }
    }

    pub fn from_json(g: &SandpileGraph, json: &ConfigurationJson) -> Result<Self> {
        Self::from_ordinary(g, json.values.clone())
    }

    pub fn to_big(&self) -> Configuration<BigUint> {
        Configuration { values: self.values.iter().map(|&x| BigUint::from(x)).collect() }
    }
}

/// `{"values": [...]}` indexed by vertex id with the sink omitted.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfigurationJson {
    pub values: Vec<u64>,
}

/// Order in which unstable sites are relaxed. Never affects the result.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum TopplingPolicy {
    #[default]
    Fifo,
    Lifo,
    SeededRandom(u64),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StabilizationResult<T = u64> {
    pub stable: Configuration<T>,
    /// Toppling count per vertex (zero at the sink).
    pub score: Vec<T>,
    pub topplings_total: T,
    pub sink_absorbed: T,
    /// Vertices that held or received at least one particle.
    pub flooded: Vec<bool>,
}

impl<T: Grains> StabilizationResult<T> {
    pub fn toppled(&self, v: VertexId) -> bool {
        !self.score[v].is_zero()
    }
}

impl StabilizationResult<u64> {
    pub fn to_json(&self, g: &SandpileGraph) -> StabilizationJson {
        StabilizationJson {
            stable: self.stable.ordinary_values(g),
            score: g.ordinary().map(|v| self.score[v]).collect(),
            topplings_total: self.topplings_total,
            sink_absorbed: self.sink_absorbed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StabilizationJson {
    pub stable: Vec<u64>,
    pub score: Vec<u64>,
    pub topplings_total: u64,
    pub sink_absorbed: u64,
}

enum Worklist {
    Fifo(VecDeque<VertexId>),
    Lifo(Vec<VertexId>),
    Random(Vec<VertexId>, ChaCha8Rng),
}

impl Worklist {
    fn new(policy: TopplingPolicy) -> Self {
        match policy {
            TopplingPolicy::Fifo => Worklist::Fifo(VecDeque::new()),
            TopplingPolicy::Lifo => Worklist::Lifo(Vec::new()),
            TopplingPolicy::SeededRandom(seed) => {
                Worklist::Random(Vec::new(), ChaCha8Rng::seed_from_u64(seed))
            }
        }
    }

    fn push(&mut self, v: VertexId) {
        match self {
            Worklist::Fifo(q) => q.push_back(v),
            Worklist::Lifo(s) | Worklist::Random(s, _) => s.push(v),
        }
    }

    fn pop(&mut self) -> Option<VertexId> {
        match self {
            Worklist::Fifo(q) => q.pop_front(),
            Worklist::Lifo(s) => s.pop(),
            Worklist::Random(s, rng) => {
                if s.is_empty() {
                    None
                } else {
                    let i = rng.gen_range(0..s.len());
                    Some(s.swap_remove(i))
                }
            }
        }
    }
}

/// Relax `c` to its unique stable configuration, tracking the score vector.
///
/// An unstable site holding `x >= deg` particles fires `x / deg` times in one
/// batch, which is a legal toppling sequence.
pub fn stabilize<T: Grains>(
    g: &SandpileGraph,
    c: &Configuration<T>,
    policy: TopplingPolicy,
) -> Result<StabilizationResult<T>> {
    if c.values.len() != g.vertex_count() {
        return Err(SandlabError::ConfigurationLength {
            expected: g.vertex_count(),
            got: c.values.len(),
        });
    }
    let sink = g.sink();
    let mut values = c.values.clone();
    values[sink] = T::zero();
    let degree: Vec<T> = (0..g.vertex_count()).map(|v| T::from_count(g.degree(v))).collect();
    let mut score = vec![T::zero(); g.vertex_count()];
    let mut flooded: Vec<bool> = values.iter().map(|x| !x.is_zero()).collect();
    let mut queued = vec![false; g.vertex_count()];
    let mut work = Worklist::new(policy);
    let mut topplings_total = T::zero();
    let mut sink_absorbed = T::zero();

    for v in g.ordinary() {
        if values[v] >= degree[v] {
            queued[v] = true;
            work.push(v);
        }
    }
    while let Some(v) = work.pop() {
        queued[v] = false;
        let (fires, rest) = values[v].div_rem(&degree[v]);
        if fires.is_zero() {
            continue;
        }
        values[v] = rest;
        score[v] = add(&score[v], &fires)?;
        topplings_total = add(&topplings_total, &fires)?;
        for &(u, m) in g.neighbors(v) {
            let sent = mul(&fires, &T::from_count(m as u64))?;
            if u == sink {
                sink_absorbed = add(&sink_absorbed, &sent)?;
                continue;
            }
            values[u] = add(&values[u], &sent)?;
            flooded[u] = true;
            if !queued[u] && values[u] >= degree[u] {
                queued[u] = true;
                work.push(u);
            }
        }
    }

    let result = StabilizationResult {
        stable: Configuration { values },
        score,
        topplings_total,
        sink_absorbed,
        flooded,
    };
    audit::record(g, c, &result);
    Ok(result)
}

/// Process-wide verification of every stabilization.
///
/// When enabled, each call to [`stabilize`] re-checks the Laplacian identity
/// and particle conservation in exact integer arithmetic.
pub mod audit {
    use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};

    use super::{Configuration, Grains, StabilizationResult};
    use crate::graph::SandpileGraph;
    use crate::potential::verify_laplacian_identity;

    static ENABLED: AtomicBool = AtomicBool::new(false);
    static CHECKED: AtomicU64 = AtomicU64::new(0);
    static FAILED: AtomicU64 = AtomicU64::new(0);

    pub fn enable() {
        ENABLED.store(true, Ordering::SeqCst);
    }

    /// `(checked, failed)` counts since the process started.
    pub fn counts() -> (u64, u64) {
        (CHECKED.load(Ordering::SeqCst), FAILED.load(Ordering::SeqCst))
    }

    pub(super) fn record<T: Grains>(
        g: &SandpileGraph,
        c: &Configuration<T>,
        result: &StabilizationResult<T>,
    ) {
        if !ENABLED.load(Ordering::Relaxed) {
            return;
        }
        CHECKED.fetch_add(1, Ordering::Relaxed);
        if !verify_laplacian_identity(g, c, result) {
            FAILED.fetch_add(1, Ordering::Relaxed);
        }
    }
}

/// Where particles are placed for a threshold search.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Source {
    Vertex(VertexId),
    /// The same count on every listed vertex.
    Uniform(Vec<VertexId>),
}

impl Source {
    fn configuration<T: Grains>(&self, g: &SandpileGraph, x: T) -> Result<Configuration<T>> {
        match self {
            Source::Vertex(v) => Configuration::point(g, *v, x),
            Source::Uniform(set) => Configuration::uniform(g, set, x),
        }
    }

    fn validate(&self, g: &SandpileGraph) -> Result<()> {
        match self {
            Source::Vertex(v) => g.check_ordinary(*v),
            Source::Uniform(set) if set.is_empty() => Err(SandlabError::EmptySource),
            Source::Uniform(set) => set.iter().try_for_each(|&v| g.check_ordinary(v)),
        }
    }
}

/// Smallest `x` with `pred(x)`, for a predicate monotone in `x`.
///
/// Doubles from `start` until the predicate holds, then bisects.
pub fn least_satisfying<T, F>(start: T, mut pred: F) -> Result<T>
where
    T: Grains,
    F: FnMut(&T) -> Result<bool>,
{
    if pred(&T::zero())? {
        return Ok(T::zero());
    }
    let two = T::from_count(2);
    let mut lo = T::zero();
    let mut hi = if start.is_zero() { T::one() } else { start };
    while !pred(&hi)? {
        lo = hi.clone();
        hi = mul(&hi, &two)?;
    }
    // pred(lo) false, pred(hi) true
    while add(&lo, &T::one())? < hi {
        let mid = add(&lo, &hi)?.div_floor(&two);
        if pred(&mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Minimum count that topples a site, with the largest count that does not.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ToppleThreshold<T = u64> {
    pub topple: T,
    pub no_topple: T,
}

/// Minimum particles (per source site) whose stabilization topples `w`.
pub fn min_to_topple<T: Grains>(
    g: &SandpileGraph,
    source: &Source,
    w: VertexId,
) -> Result<ToppleThreshold<T>> {
    if w == g.sink() {
        return Err(SandlabError::SinkNeverTopples);
    }
    g.check_ordinary(w)?;
    source.validate(g)?;
    let topple = least_satisfying(T::from_count(g.degree(w)), |x| {
        let c = source.configuration(g, x.clone())?;
        Ok(stabilize(g, &c, TopplingPolicy::Fifo)?.toppled(w))
    })?;
    let no_topple = topple.clone() - T::one();
    Ok(ToppleThreshold { topple, no_topple })
}

/// Minimum particles at `v` such that every target vertex receives one.
pub fn flood_count<T: Grains>(g: &SandpileGraph, v: VertexId, target: &[VertexId]) -> Result<T> {
    g.check_ordinary(v)?;
    for &u in target {
        if u == g.sink() {
            return Err(SandlabError::TargetContainsSink);
        }
        g.check_ordinary(u)?;
    }
    least_satisfying(T::from_count(g.degree(v)), |x| floods(g, &Source::Vertex(v), x, target))
}

/// Does placing `x` per source site flood every target vertex?
pub fn floods<T: Grains>(g: &SandpileGraph, source: &Source, x: &T, target: &[VertexId]) -> Result<bool> {
    let c = source.configuration(g, x.clone())?;
    let r = stabilize(g, &c, TopplingPolicy::Fifo)?;
    Ok(target.iter().all(|&u| r.flooded[u]))
}

/// Burning test: add one particle per sink edge and stabilize; `c` is
/// recurrent iff every vertex topples exactly once and `c` comes back.
pub fn is_recurrent<T: Grains>(g: &SandpileGraph, c: &Configuration<T>) -> Result<bool> {
    if !c.is_stable(g) {
        return Err(SandlabError::UnstableConfiguration);
    }
    let mut burnt = c.clone();
    for v in g.ordinary() {
        burnt.add_at(v, &T::from_count(g.sink_multiplicity(v)))?;
    }
    let r = stabilize(g, &burnt, TopplingPolicy::Fifo)?;
    Ok(g.ordinary().all(|v| r.score[v].is_one()) && r.stable == *c)
}

pub const DEFAULT_STATE_LIMIT: u64 = 1 << 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TclMode {
    Exact,
    SingleSite,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TclWitness {
    /// Sites receiving the counted additions, in order.
    Additions(Vec<VertexId>),
    Site(VertexId),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TclResult {
    pub value: BigUint,
    pub mode: TclMode,
    pub witness: TclWitness,
}

/// Mixed-radix indexing of stable configurations.
struct StableStates<'g> {
    g: &'g SandpileGraph,
    sites: Vec<VertexId>,
    count: u64,
}

impl<'g> StableStates<'g> {
    fn new(g: &'g SandpileGraph, limit: u64) -> Result<Self> {
        let sites: Vec<VertexId> = g.ordinary().collect();
        let count: u128 = sites.iter().map(|&v| g.degree(v) as u128).product();
        if count > limit as u128 {
            return Err(SandlabError::StateSpaceLimit { states: count, limit });
        }
        Ok(StableStates { g, sites, count: count as u64 })
    }

    fn decode(&self, mut index: u64) -> Configuration<u64> {
        let mut c = Configuration::empty(self.g);
        for &v in &self.sites {
            let d = self.g.degree(v);
            c.values[v] = index % d;
            index /= d;
        }
        c
    }

    fn encode(&self, c: &Configuration<u64>) -> u64 {
        self.sites
            .iter()
            .rev()
            .fold(0, |acc, &v| acc * self.g.degree(v) + c.values[v])
    }
}

/// Number of recurrent stable configurations, by burning every stable state.
pub fn count_recurrent(g: &SandpileGraph, limit: u64) -> Result<u64> {
    let states = StableStates::new(g, limit)?;
    let mut total = 0;
    for i in 0..states.count {
        if is_recurrent(g, &states.decode(i))? {
            total += 1;
        }
    }
    Ok(total)
}

/// Longest run of single-particle additions from the empty configuration
/// that keeps every stabilized intermediate transient.
///
/// Additions that land in a recurrent configuration are not counted, so a
/// sandpile whose empty configuration is already recurrent has value 0.
pub fn tcl_exact(g: &SandpileGraph, limit: u64) -> Result<TclResult> {
    let mut search = TransientSearch::new(g, limit)?;
    let empty = Configuration::empty(g);
    let start = search.states.encode(&empty);
    if !search.is_transient(start, &empty)? {
        return Ok(TclResult {
            value: BigUint::zero(),
            mode: TclMode::Exact,
            witness: TclWitness::Additions(Vec::new()),
        });
    }
    search.longest_from(start)?;

    let mut witness = Vec::new();
    let mut cur = start as usize;
    while let Some((v, j)) = search.best_move[cur] {
        witness.push(v);
        cur = j as usize;
    }
    Ok(TclResult {
        value: BigUint::from(search.longest[start as usize]),
        mode: TclMode::Exact,
        witness: TclWitness::Additions(witness),
    })
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Mark {
    Unseen,
    Open,
    Done,
}

/// Longest-path search over the transient part of the addition graph.
struct TransientSearch<'g> {
    states: StableStates<'g>,
    // 0 unknown, 1 transient, 2 recurrent
    kind: Vec<u8>,
    mark: Vec<Mark>,
    longest: Vec<u64>,
    best_move: Vec<Option<(VertexId, u64)>>,
}

impl<'g> TransientSearch<'g> {
    fn new(g: &'g SandpileGraph, limit: u64) -> Result<Self> {
        let states = StableStates::new(g, limit)?;
        let n = states.count as usize;
        Ok(TransientSearch {
            states,
            kind: vec![0; n],
            mark: vec![Mark::Unseen; n],
            longest: vec![0; n],
            best_move: vec![None; n],
        })
    }

    fn is_transient(&mut self, i: u64, c: &Configuration<u64>) -> Result<bool> {
        let k = &mut self.kind[i as usize];
        if *k == 0 {
            *k = if is_recurrent(self.states.g, c)? { 2 } else { 1 };
        }
        Ok(*k == 1)
    }

    /// Transient states reachable from `i` by one addition, with the site.
    fn successors(&mut self, i: u64) -> Result<Vec<(VertexId, u64)>> {
        let g = self.states.g;
        let c = self.states.decode(i);
        let mut next = Vec::new();
        for idx in 0..self.states.sites.len() {
            let v = self.states.sites[idx];
            let mut bumped = c.clone();
            bumped.values[v] += 1;
            let s = stabilize(g, &bumped, TopplingPolicy::Fifo)?.stable;
            let j = self.states.encode(&s);
            if self.is_transient(j, &s)? {
                next.push((v, j));
            }
        }
        Ok(next)
    }

    /// Iterative post-order DFS filling `longest` and `best_move`.
    fn longest_from(&mut self, start: u64) -> Result<()> {
        let mut stack: Vec<(u64, Vec<(VertexId, u64)>, usize)> = Vec::new();
        self.mark[start as usize] = Mark::Open;
        let succ = self.successors(start)?;
        stack.push((start, succ, 0));
        while let Some((i, succ, pos)) = stack.last_mut() {
            let i = *i as usize;
            let Some(&(v, j)) = succ.get(*pos) else {
                self.mark[i] = Mark::Done;
                stack.pop();
                continue;
            };
            match self.mark[j as usize] {
                Mark::Open => return Err(SandlabError::TransientCycle),
                Mark::Done => {
                    *pos += 1;
                    let through = self.longest[j as usize] + 1;
                    if self.best_move[i].is_none() || through > self.longest[i] {
                        self.longest[i] = through;
                        self.best_move[i] = Some((v, j));
                    }
                }
                Mark::Unseen => {
                    // the edge is relaxed when the child is done
                    self.mark[j as usize] = Mark::Open;
                    let child = self.successors(j)?;
                    stack.push((j, child, 0));
                }
            }
        }
        Ok(())
    }
}

/// Minimum particles at `v` (from empty) after which every ordinary vertex
/// has toppled at least once.
pub fn tcl_single_site<T: Grains>(g: &SandpileGraph, v: VertexId) -> Result<T> {
    g.check_ordinary(v)?;
    least_satisfying(T::from_count(g.degree(v)), |x| {
        let c = Configuration::point(g, v, x.clone())?;
        let r = stabilize(g, &c, TopplingPolicy::Fifo)?;
        Ok(g.ordinary().all(|u| r.toppled(u)))
    })
}

/// [`tcl_single_site`] in arbitrary precision, packaged as a [`TclResult`].
pub fn tcl_single_site_result(g: &SandpileGraph, v: VertexId) -> Result<TclResult> {
    let value = tcl_single_site::<BigUint>(g, v)?;
    Ok(TclResult { value, mode: TclMode::SingleSite, witness: TclWitness::Site(v) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{gen_family, Family};

    fn at(g: &SandpileGraph, x: i64, y: i64) -> VertexId {
        g.vertex_at((x, y)).unwrap()
    }

    /// Least fixed point of z(v) = floor((c(v) + inflow(v)) / deg(v)),
    /// iterated from zero. Independent of the worklist engine.
    fn score_oracle(g: &SandpileGraph, c: &[u64]) -> Vec<u64> {
        let mut z = vec![0u64; g.vertex_count()];
        loop {
            let mut next = z.clone();
            for v in g.ordinary() {
                let inflow: u64 = g
                    .neighbors(v)
                    .iter()
                    .filter(|&&(u, _)| u != g.sink())
                    .map(|&(u, m)| z[u] * m as u64)
                    .sum();
                next[v] = (c[v] + inflow) / g.degree(v);
            }
            if next == z {
                return z;
            }
            z = next;
        }
    }

    #[test]
    fn single_toppling_on_grid2() {
        let g = gen_family(Family::Grid { n: 2 }).unwrap();
        let c = Configuration::point(&g, at(&g, 0, 0), 4u64).unwrap();
        let r = stabilize(&g, &c, TopplingPolicy::Fifo).unwrap();
        assert_eq!(*r.stable.get(at(&g, 1, 0)), 1);
        assert_eq!(*r.stable.get(at(&g, 0, 1)), 1);
        assert_eq!(*r.stable.get(at(&g, 0, 0)), 0);
        assert_eq!(r.score[at(&g, 0, 0)], 1);
        assert_eq!(r.topplings_total, 1);
        assert_eq!(r.sink_absorbed, 2);
    }

    #[test]
    fn stable_input_is_fixed() {
        let g = gen_family(Family::Grid { n: 3 }).unwrap();
        let c = Configuration::from_ordinary(&g, vec![3, 0, 2, 1, 3, 3, 0, 0, 1]).unwrap();
        let r = stabilize(&g, &c, TopplingPolicy::Lifo).unwrap();
        assert_eq!(r.stable, c);
        assert!(r.score.iter().all(|&z| z == 0));
    }

    #[test]
    fn thirty_at_far_corner_matches_oracle() {
        let g = gen_family(Family::Grid { n: 2 }).unwrap();
        let c = Configuration::point(&g, at(&g, 1, 1), 30u64).unwrap();
        let z = score_oracle(&g, c.values());
        assert_eq!(z[at(&g, 0, 0)], 1);
        assert_eq!(z[at(&g, 0, 1)], 2);
        assert_eq!(z[at(&g, 1, 0)], 2);
        assert_eq!(z[at(&g, 1, 1)], 8);
        let r = stabilize(&g, &c, TopplingPolicy::Fifo).unwrap();
        assert_eq!(r.score, z);
        assert_eq!(r.stable.ordinary_values(&g), vec![0, 1, 1, 2]);
        assert_eq!(r.sink_absorbed, 26);
    }

    #[test]
    fn engine_matches_fixed_point_oracle_on_random_inputs() {
        let g = gen_family(Family::Grid { n: 5 }).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let vals: Vec<u64> = (0..g.ordinary_count()).map(|_| rng.gen_range(0..40)).collect();
            let c = Configuration::from_ordinary(&g, vals).unwrap();
            let r = stabilize(&g, &c, TopplingPolicy::SeededRandom(3)).unwrap();
            assert_eq!(r.score, score_oracle(&g, c.values()));
        }
    }

    #[test]
    fn big_counters_agree_with_u64() {
        let g = gen_family(Family::Line { n: 6 }).unwrap();
        let c = Configuration::point(&g, 0, 5000u64).unwrap();
        let small = stabilize(&g, &c, TopplingPolicy::Fifo).unwrap();
        let big = stabilize(&g, &c.to_big(), TopplingPolicy::Fifo).unwrap();
        assert_eq!(big.stable.values().iter().map(|x| x.to_u64().unwrap()).collect::<Vec<_>>(), small.stable.values());
        assert_eq!(big.sink_absorbed, BigUint::from(small.sink_absorbed));
    }

    #[test]
    fn overflow_is_reported() {
        let g = gen_family(Family::Grid { n: 2 }).unwrap();
        let c = Configuration::from_ordinary(&g, vec![u64::MAX, u64::MAX, 0, 0]).unwrap();
        assert!(matches!(stabilize(&g, &c, TopplingPolicy::Fifo), Err(SandlabError::Overflow)));
        let big = stabilize(&g, &c.to_big(), TopplingPolicy::Fifo).unwrap();
        assert!(big.stable.is_stable(&g));
    }

    #[test]
    fn min_to_topple_examples() {
        let g = gen_family(Family::Grid { n: 2 }).unwrap();
        let w = at(&g, 0, 0);
        let same = min_to_topple::<u64>(&g, &Source::Vertex(w), w).unwrap();
        assert_eq!(same.topple, 4);
        let far = min_to_topple::<u64>(&g, &Source::Vertex(at(&g, 1, 1)), w).unwrap();
        assert_eq!(far.topple, 30);
        assert_eq!(far.no_topple, 29);
        let all: Vec<_> = g.ordinary().collect();
        let uni = min_to_topple::<u64>(&g, &Source::Uniform(all), w).unwrap();
        assert_eq!(uni.topple, 4);
        assert_eq!(uni.no_topple, 3);

        assert!(matches!(
            min_to_topple::<u64>(&g, &Source::Vertex(w), g.sink()),
            Err(SandlabError::SinkNeverTopples)
        ));
        assert!(matches!(
            min_to_topple::<u64>(&g, &Source::Uniform(vec![]), w),
            Err(SandlabError::EmptySource)
        ));
    }

    #[test]
    fn uniform_threshold_over_far_ball() {
        let g = gen_family(Family::Grid { n: 2 }).unwrap();
        let ball = g.ordinary_ball(at(&g, 1, 1), 1).unwrap();
        let t = min_to_topple::<u64>(&g, &Source::Uniform(ball), at(&g, 0, 0)).unwrap();
        assert_eq!(t.topple, 6);
        assert_eq!(t.no_topple, 5);
    }

    #[test]
    fn flood_count_examples() {
        let g = gen_family(Family::Grid { n: 9 }).unwrap();
        let v = at(&g, 4, 4);
        let b1 = g.metric_query(v, 1).unwrap().ball;
        let b2 = g.metric_query(v, 2).unwrap().ball;
        assert_eq!(flood_count::<u64>(&g, v, &b1).unwrap(), 4);
        assert_eq!(flood_count::<u64>(&g, v, &b2).unwrap(), 16);
        assert_eq!(flood_count::<u64>(&g, v, &[v]).unwrap(), 1);
        assert!(matches!(
            flood_count::<u64>(&g, v, &[g.sink()]),
            Err(SandlabError::TargetContainsSink)
        ));
    }

    #[test]
    fn recurrence_examples() {
        let g = gen_family(Family::Grid { n: 2 }).unwrap();
        let full = Configuration::from_ordinary(&g, vec![3; 4]).unwrap();
        assert!(is_recurrent(&g, &full).unwrap());
        assert!(!is_recurrent(&g, &Configuration::<u64>::empty(&g)).unwrap());
        let single = gen_family(Family::Line { n: 1 }).unwrap();
        assert!(is_recurrent(&single, &Configuration::<u64>::empty(&single)).unwrap());
        let unstable = Configuration::from_ordinary(&g, vec![4, 0, 0, 0]).unwrap();
        assert!(matches!(is_recurrent(&g, &unstable), Err(SandlabError::UnstableConfiguration)));
    }

    #[test]
    fn tcl_exact_small_cases() {
        let single = gen_family(Family::Line { n: 1 }).unwrap();
        assert_eq!(tcl_exact(&single, DEFAULT_STATE_LIMIT).unwrap().value, BigUint::zero());
        assert_eq!(count_recurrent(&single, DEFAULT_STATE_LIMIT).unwrap(), 4);

        let line2 = gen_family(Family::Line { n: 2 }).unwrap();
        assert_eq!(tcl_exact(&line2, DEFAULT_STATE_LIMIT).unwrap().value, BigUint::zero());
        assert_eq!(count_recurrent(&line2, DEFAULT_STATE_LIMIT).unwrap(), 15);

        let grid2 = gen_family(Family::Grid { n: 2 }).unwrap();
        assert_eq!(count_recurrent(&grid2, DEFAULT_STATE_LIMIT).unwrap(), 192);
        let t = tcl_exact(&grid2, DEFAULT_STATE_LIMIT).unwrap();
        match &t.witness {
            TclWitness::Additions(seq) => assert_eq!(seq.len() as u64, t.value.to_u64().unwrap()),
            other => panic!("unexpected witness {other:?}"),
        }
    }

    #[test]
    fn tcl_exact_respects_limit() {
        let g = gen_family(Family::Grid { n: 4 }).unwrap();
        assert!(matches!(tcl_exact(&g, 1000), Err(SandlabError::StateSpaceLimit { .. })));
    }

    #[test]
    fn tcl_single_site_examples() {
        let single = gen_family(Family::Line { n: 1 }).unwrap();
        assert_eq!(tcl_single_site::<u64>(&single, 0).unwrap(), 4);
        let g = gen_family(Family::Grid { n: 2 }).unwrap();
        assert_eq!(tcl_single_site::<u64>(&g, at(&g, 1, 1)).unwrap(), 30);
        let l5 = gen_family(Family::Line { n: 5 }).unwrap();
        let l6 = gen_family(Family::Line { n: 6 }).unwrap();
        let v5 = tcl_single_site_result(&l5, 0).unwrap().value;
        let v6 = tcl_single_site_result(&l6, 0).unwrap().value;
        assert!(v6 > v5 * 2u32);
    }
}
