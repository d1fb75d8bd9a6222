//! Epicenter propagation: flooding a target by moving a flooded ball along a
//! central path, one bounded multiplicative step at a time.

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Serialize, Serializer};

use crate::engine::{self, Configuration, Grains, TopplingPolicy};
use crate::error::{Result, SandlabError};
use crate::graph::{Coord, SandpileGraph, VertexId};

/// Least-squares slope at or above which a segment is an expansion.
pub const PHASE_SLOPE: f64 = 0.1;
/// Slack on the `|a_l|, |a_u| <= 1` linearity bounds.
pub const LINEARITY_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Expansion,
    Contraction,
    Drift,
}

/// Maximal piece of a path over which `eta` is linear (or which is short).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Segment {
    /// Indices into [`CentralPath::vertices`], inclusive.
    pub start: usize,
    pub end: usize,
    /// Least-squares slope of `eta` against position along the path.
    pub b: f64,
    /// `eta(v_d) - eta(v_start) - b d` lies in `[a_l, a_u]`.
    pub a_l: f64,
    pub a_u: f64,
    pub phase: Phase,
    /// Smallest `eta` on the segment.
    pub eta_min: u32,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }

    /// Radius growth factor per step: `1 + b/2` when expanding,
    /// `(1 + b/2)^-1` when contracting, `None` for drift.
    pub fn growth(&self) -> Option<f64> {
        match self.phase {
            Phase::Expansion => Some(1.0 + self.b / 2.0),
            Phase::Contraction => Some(1.0 / (1.0 + self.b / 2.0)),
            Phase::Drift => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CentralPath {
    pub vertices: Vec<VertexId>,
    pub eta: Vec<u32>,
    pub segments: Vec<Segment>,
    /// Number of segments.
    pub k: usize,
    /// Drift-length constant used for classification.
    pub l: f64,
}

impl CentralPath {
    fn empty(l: f64) -> Self {
        CentralPath { vertices: Vec::new(), eta: Vec::new(), segments: Vec::new(), k: 0, l }
    }

    pub fn len(&self) -> usize {
        self.vertices.len().saturating_sub(1)
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    /// Smallest growth factor over non-drift segments.
    pub fn g_hat(&self) -> Option<f64> {
        self.segments.iter().filter_map(Segment::growth).reduce(f64::min)
    }
}

/// Highest lattice points on or below the segment from `a` to `b`, joined
/// by axis steps. Vertical moves happen in the column whose point is higher.
fn staircase(a: Coord, b: Coord) -> Vec<Coord> {
    let (x0, y0) = a;
    let (x1, y1) = b;
    if x0 == x1 {
        let step = (y1 - y0).signum();
        return (0..=(y1 - y0).abs()).map(|t| (x0, y0 + step * t)).collect();
    }
    let sx = (x1 - x0).signum();
    let columns = (x1 - x0).abs();
    // floor of the segment height over column x0 + sx t
    let height = |t: i64| y0 + ((y1 - y0) * t).div_euclid(columns);
    let mut out = vec![(x0, y0)];
    let mut y = y0;
    for t in 1..=columns {
        let (x, target) = (x0 + sx * t, height(t));
        if target < y {
            // descend in the current (higher) column first
            while y > target {
                y -= 1;
                out.push((x - sx, y));
            }
            out.push((x, y));
        } else {
            out.push((x, y));
            while y < target {
                y += 1;
                out.push((x, y));
            }
        }
    }
    out
}

/// Central path between `p` and `q` on a grid sandpile: the staircase under
/// the straight segment, routed through the center unless an endpoint is the
/// center. For even sides the center is the middle vertex nearest `p`.
pub fn find_central_path_grid(g: &SandpileGraph, p: VertexId, q: VertexId, l: f64) -> Result<CentralPath> {
    let n = g.grid_side().ok_or(SandlabError::NotGridFamily)?;
    g.check_ordinary(p)?;
    g.check_ordinary(q)?;
    if p == q {
        return Ok(CentralPath::empty(l));
    }
    let (cp, cq) = (g.coord(p).unwrap(), g.coord(q).unwrap());
    let lo = ((n - 1) / 2) as i64;
    let hi = (n / 2) as i64;
    let center = (cp.0.clamp(lo, hi), cp.1.clamp(lo, hi));
    let mut coords = Vec::new();
    let mut breaks = Vec::new();
    if cp == center || cq == center {
        coords = staircase(cp, cq);
    } else {
        coords.extend(staircase(cp, center));
        breaks.push(coords.len() - 1);
        coords.extend(staircase(center, cq).into_iter().skip(1));
    }
    let vertices: Vec<VertexId> = coords.iter().map(|&c| g.vertex_at(c).expect("staircase stays in the grid")).collect();
    classify_pieces(g, vertices, &breaks, l)
}

/// Shortest sink-free path, classified as one piece. A heuristic for
/// non-grid families; it may fail to be central.
pub fn find_central_path_bfs(g: &SandpileGraph, p: VertexId, q: VertexId, l: f64) -> Result<CentralPath> {
    g.check_ordinary(p)?;
    g.check_ordinary(q)?;
    if p == q {
        return Ok(CentralPath::empty(l));
    }
    let dist = g.distances_from(q, false);
    let mut path = vec![p];
    let mut cur = p;
    while cur != q {
        let d = dist[cur].ok_or(SandlabError::SubsetNotConnected)?;
        cur = g
            .neighbors(cur)
            .iter()
            .map(|&(u, _)| u)
            .filter(|&u| u != g.sink() && dist[u] == Some(d - 1))
            .min()
            .expect("a BFS predecessor exists");
        path.push(cur);
    }
    classify_path(g, &path, l)
}

/// Central path on grids, or the BFS heuristic elsewhere when allowed.
pub fn find_central_path(g: &SandpileGraph, p: VertexId, q: VertexId, l: f64, allow_bfs: bool) -> Result<CentralPath> {
    match find_central_path_grid(g, p, q, l) {
        Err(SandlabError::NotGridFamily) if allow_bfs => find_central_path_bfs(g, p, q, l),
        other => other,
    }
}

/// Fit and phase-label a path treated as a single maximal piece.
pub fn classify_path(g: &SandpileGraph, path: &[VertexId], l: f64) -> Result<CentralPath> {
    classify_pieces(g, path.to_vec(), &[], l)
}

fn classify_pieces(g: &SandpileGraph, vertices: Vec<VertexId>, breaks: &[usize], l: f64) -> Result<CentralPath> {
    for w in vertices.windows(2) {
        if !g.neighbors(w[0]).iter().any(|&(u, _)| u == w[1]) {
            return Err(SandlabError::PathNotCentral(format!("vertices {} and {} are not adjacent", w[0], w[1])));
        }
    }
    for &v in &vertices {
        g.check_ordinary(v)?;
    }
    let eta: Vec<u32> = vertices.iter().map(|&v| g.eta(v)).collect();
    let drift_len = l * (g.ordinary_count() as f64).ln();
    let mut bounds = vec![0];
    bounds.extend(breaks.iter().copied());
    bounds.push(vertices.len().saturating_sub(1));
    let mut segments = Vec::new();
    for w in bounds.windows(2) {
        if w[1] > w[0] {
            split_fit(&eta, w[0], w[1], drift_len, &mut segments)?;
        }
    }
    Ok(CentralPath { k: segments.len(), vertices, eta, segments, l })
}

fn fit(eta: &[u32], start: usize, end: usize) -> (f64, f64, f64) {
    let xs: Vec<f64> = (0..=end - start).map(|d| d as f64).collect();
    let ys: Vec<f64> = eta[start..=end].iter().map(|&e| e as f64).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let b = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let offsets = xs.iter().zip(&ys).map(|(x, y)| y - ys[0] - b * x);
    let a_l = offsets.clone().fold(f64::INFINITY, f64::min);
    let a_u = offsets.fold(f64::NEG_INFINITY, f64::max);
    (b, a_l, a_u)
}

fn split_fit(eta: &[u32], start: usize, end: usize, drift_len: f64, out: &mut Vec<Segment>) -> Result<()> {
    let (b, a_l, a_u) = fit(eta, start, end);
    let linear = a_l >= -1.0 - LINEARITY_TOLERANCE && a_u <= 1.0 + LINEARITY_TOLERANCE;
    let eta_min = *eta[start..=end].iter().min().unwrap();
    let len = (end - start) as f64;
    let segment = |phase| Segment { start, end, b, a_l, a_u, phase, eta_min };
    if linear && b >= PHASE_SLOPE {
        out.push(segment(Phase::Expansion));
        return Ok(());
    }
    if linear && b <= -PHASE_SLOPE {
        out.push(segment(Phase::Contraction));
        return Ok(());
    }
    if b.abs() < PHASE_SLOPE && len <= drift_len {
        out.push(segment(Phase::Drift));
        return Ok(());
    }
    // split at an interior extreme of eta, else at the worst residual
    let interior = start + 1..end;
    let extreme = interior.clone().find(|&i| {
        let e = eta[i];
        (e > eta[start] && e > eta[end] && eta[start..=end].iter().all(|&x| x <= e))
            || (e < eta[start] && e < eta[end] && eta[start..=end].iter().all(|&x| x >= e))
    });
    let worst = || {
        interior
            .clone()
            .max_by(|&i, &j| {
                let ri = (eta[i] as f64 - eta[start] as f64 - b * (i - start) as f64).abs();
                let rj = (eta[j] as f64 - eta[start] as f64 - b * (j - start) as f64).abs();
                ri.total_cmp(&rj).then(j.cmp(&i))
            })
            .filter(|_| !linear)
    };
    match extreme.or_else(worst) {
        Some(mid) => {
            split_fit(eta, start, mid, drift_len, out)?;
            split_fit(eta, mid, end, drift_len, out)
        }
        None => Err(SandlabError::PathNotCentral(format!(
            "segment {start}..{end} has slope {b:.3} and length {len} beyond drift allowance {drift_len:.3}"
        ))),
    }
}

/// Constants feeding the propagation bounds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BoundParams {
    pub c_sigma: f64,
    pub c_h: f64,
    pub delta_max: f64,
    pub delta_lo: f64,
    pub alpha: f64,
    pub k: f64,
    pub l: f64,
    pub g_hat: f64,
}

impl BoundParams {
    /// Single-step multiplier bound `(C_s/C_h) (D(D+1)/d) 3^alpha`.
    pub fn big_k(&self) -> f64 {
        (self.c_sigma / self.c_h) * (self.delta_max * (self.delta_max + 1.0) / self.delta_lo) * 3f64.powf(self.alpha)
    }

    /// Lemma bound for one step with radius ratio `eta(u) / (eta(v)/2)`.
    pub fn step_bound(&self, ratio: f64) -> f64 {
        (self.c_sigma / self.c_h) * (self.delta_max * (self.delta_max + 1.0) / self.delta_lo) * ratio.powf(self.alpha)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TclBound {
    pub big_k: f64,
    pub exponent: f64,
    /// `log10` of the bound, finite even when the bound overflows `f64`.
    pub log10: f64,
    pub value: f64,
}

/// `C_s D n^(k + (2l+1) k log_g K)`.
pub fn tcl_bound(params: &BoundParams, n: u64) -> Result<TclBound> {
    if !(params.g_hat > 1.0) {
        return Err(SandlabError::NonAdvancingPhase(params.g_hat));
    }
    if n < 2 {
        return Err(SandlabError::InvalidParameters("n must be at least 2".into()));
    }
    let big_k = params.big_k();
    let exponent = params.k + (2.0 * params.l + 1.0) * params.k * big_k.ln() / params.g_hat.ln();
    let log10 = (params.c_sigma * params.delta_max).log10() + exponent * (n as f64).log10();
    Ok(TclBound { big_k, exponent, log10, value: 10f64.powf(log10) })
}

fn decimal<S: Serializer>(x: &BigUint, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&x.to_string())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FloodStep {
    pub segment: usize,
    /// Path index of the previous epicenter and of the new one.
    pub from: usize,
    pub to: usize,
    pub center: VertexId,
    pub radius: u32,
    #[serde(serialize_with = "decimal")]
    pub multiplier: BigUint,
    /// `eta` at the previous epicenter.
    pub eta_from: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FloodTrace {
    pub source: VertexId,
    pub target: VertexId,
    pub path: CentralPath,
    pub init_center: Option<VertexId>,
    pub init_radius: u32,
    #[serde(rename = "K0", serialize_with = "decimal")]
    pub k0: BigUint,
    pub steps: Vec<FloodStep>,
    #[serde(serialize_with = "decimal")]
    pub total: BigUint,
    pub target_flooded: bool,
}

impl FloodTrace {
    pub fn steps_in_segment(&self, segment: usize) -> usize {
        self.steps.iter().filter(|s| s.segment == segment).count()
    }

    /// `K0 * prod K_i`.
    pub fn product(&self) -> BigUint {
        self.steps.iter().fold(self.k0.clone(), |acc, s| acc * &s.multiplier)
    }
}

/// Stabilize `x` particles at `p`, in 64 bits when they fit.
fn flooded_by(g: &SandpileGraph, p: VertexId, x: &BigUint) -> Result<Vec<bool>> {
    fn run<T: Grains>(g: &SandpileGraph, p: VertexId, x: T) -> Result<Vec<bool>> {
        let c = Configuration::point(g, p, x)?;
        Ok(engine::stabilize(g, &c, TopplingPolicy::Fifo)?.flooded)
    }
    match x.to_u64().map(|small| run(g, p, small)) {
        Some(Err(SandlabError::Overflow)) | None => run(g, p, x.clone()),
        Some(result) => result,
    }
}

/// Least `k >= 1` such that `k * base` particles at `p` flood `target`.
fn least_multiplier(g: &SandpileGraph, p: VertexId, base: &BigUint, target: &[VertexId]) -> Result<BigUint> {
    engine::least_satisfying(BigUint::one(), |k: &BigUint| {
        if k.is_zero() {
            return Ok(false);
        }
        let flooded = flooded_by(g, p, &(base * k))?;
        Ok(target.iter().all(|&u| flooded[u]))
    })
}

/// Normal ball `B(v, eta(v))`; the radius stops one short of the sink.
fn normal_ball(g: &SandpileGraph, v: VertexId, radius: u32) -> Result<Vec<VertexId>> {
    Ok(g.metric_query(v, radius)?.ball)
}

/// Result of one executed lemma step.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SingleStep {
    pub k_emp: u64,
    pub bound: f64,
    pub eta_v: u32,
    pub eta_u: u32,
}

/// Least `k` such that `k * c_base` floods `B(u, eta(u))`, where `c_base`
/// floods `B(v, eta(v))` and `u` sits at distance `floor(eta(v)/2)` from `v`.
pub fn single_step(
    g: &SandpileGraph,
    v: VertexId,
    u: VertexId,
    c_base: &Configuration,
    params: &BoundParams,
) -> Result<SingleStep> {
    g.check_ordinary(v)?;
    g.check_ordinary(u)?;
    let eta_v = g.eta(v);
    if eta_v < 2 {
        return Err(SandlabError::NoInteriorBall { vertex: v, eta: eta_v });
    }
    let expected = eta_v / 2;
    let actual = g.distances_from(v, false)[u].unwrap_or(u32::MAX);
    if u != v && actual != expected {
        return Err(SandlabError::WrongDistance { vertex: u, expected, actual });
    }
    let eta_u = g.eta(u);
    assert!(
        eta_v <= 2 * eta_u + 1 && 2 * eta_u <= 3 * eta_v,
        "eta ratio outside [1/2, 3/2] on a valid step"
    );
    let base_flooded = engine::stabilize(g, c_base, TopplingPolicy::Fifo)?.flooded;
    if !normal_ball(g, v, eta_v)?.iter().all(|&x| base_flooded[x]) {
        return Err(SandlabError::StartNotFlooded);
    }
    let target = normal_ball(g, u, eta_u)?;
    let k_emp = engine::least_satisfying(1u64, |k: &u64| {
        if *k == 0 {
            return Ok(false);
        }
        let r = engine::stabilize(g, &c_base.scaled(k)?, TopplingPolicy::Fifo)?;
        Ok(target.iter().all(|&x| r.flooded[x]))
    })?;
    let ratio = if u == v { 1.0 } else { eta_u as f64 / (eta_v as f64 / 2.0) };
    Ok(SingleStep { k_emp, bound: params.step_bound(ratio), eta_v, eta_u })
}

/// Default cap on propagation steps per path vertex.
pub const STEP_BUDGET_PER_VERTEX: usize = 4;

/// Flood `q` from particles at `p` by epicenter propagation along `path`.
pub fn propagate_along(g: &SandpileGraph, path: CentralPath, p: VertexId, q: VertexId) -> Result<FloodTrace> {
    g.check_ordinary(p)?;
    g.check_ordinary(q)?;
    let mut trace = FloodTrace {
        source: p,
        target: q,
        init_center: None,
        init_radius: 0,
        k0: BigUint::one(),
        steps: Vec::new(),
        total: BigUint::one(),
        target_flooded: true,
        path,
    };
    if p == q || trace.path.is_empty() {
        // a single particle at p floods p
        return Ok(trace);
    }
    let path = &trace.path;
    let first = &path.segments[0];
    let (init_index, init_radius, init_ball) = match first.phase {
        Phase::Expansion => {
            let i = first.start + 3.min(first.len());
            let v = path.vertices[i];
            let radius = 3.max(path.eta[i]);
            (i, radius, g.ordinary_ball(v, radius)?)
        }
        Phase::Contraction => (first.start, path.eta[first.start], normal_ball(g, p, path.eta[first.start])?),
        Phase::Drift => (first.start, first.eta_min, normal_ball(g, p, first.eta_min)?),
    };
    let k0 = BigUint::from(engine::flood_count::<u64>(g, p, &init_ball).or_else(|e| match e {
        SandlabError::Overflow => engine::flood_count::<BigUint>(g, p, &init_ball)?.to_u64().ok_or(SandlabError::Overflow),
        e => Err(e),
    })?);
    let mut total = k0.clone();
    let mut steps = Vec::new();
    let budget = STEP_BUDGET_PER_VERTEX * path.vertices.len() + 8;
    let mut i = init_index;
    let mut flooded = flooded_by(g, p, &total)?[q];
    for (s, seg) in path.segments.iter().enumerate() {
        while !flooded && i < seg.end {
            if steps.len() >= budget {
                return Err(SandlabError::NotFlooded { steps: steps.len() });
            }
            let eta_i = path.eta[i];
            let jump = match seg.phase {
                Phase::Drift => (seg.eta_min / 2).max(1),
                _ => (eta_i / 2).max(1),
            } as usize;
            let j = (i + jump).min(seg.end);
            let center = path.vertices[j];
            let radius = if seg.phase == Phase::Drift { seg.eta_min.min(path.eta[j]) } else { path.eta[j] };
            let target = normal_ball(g, center, radius)?;
            let multiplier = least_multiplier(g, p, &total, &target)?;
            total *= &multiplier;
            steps.push(FloodStep { segment: s, from: i, to: j, center, radius, multiplier, eta_from: eta_i });
            flooded = flooded_by(g, p, &total)?[q];
            i = j;
        }
    }
    if !flooded {
        return Err(SandlabError::NotFlooded { steps: steps.len() });
    }
    trace.init_center = Some(trace.path.vertices[init_index]);
    trace.init_radius = init_radius;
    trace.k0 = k0;
    trace.steps = steps;
    trace.total = total;
    Ok(trace)
}

/// Construct a central path from `p` to `q` and propagate along it.
pub fn propagate(g: &SandpileGraph, p: VertexId, q: VertexId, l: f64, allow_bfs: bool) -> Result<FloodTrace> {
    let path = find_central_path(g, p, q, l, allow_bfs)?;
    propagate_along(g, path, p, q)
}
