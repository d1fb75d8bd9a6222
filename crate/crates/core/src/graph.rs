//! Multigraphs, sandpile construction and shortest-path metric queries.
//!
//! A [`SandpileGraph`] is a connected multigraph with one distinguished sink.
//! Lattice-derived graphs carry integer coordinates so that the grid toolkit
//! and the central-path construction can address sites geometrically.

use std::collections::{BTreeMap, HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Result, SandlabError};

pub type VertexId = usize;
pub type Coord = (i64, i64);

const LATTICE_STEPS: [Coord; 4] = [(1, 0), (-1, 0), (0, 1), (0, -1)];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Edge {
    pub u: VertexId,
    pub v: VertexId,
    pub multiplicity: u32,
}

/// An undirected multigraph on dense vertex ids `0..vertex_count`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Multigraph {
    vertex_count: usize,
    edges: Vec<Edge>,
    coords: BTreeMap<VertexId, Coord>,
}

impl Multigraph {
    pub fn new(vertex_count: usize, edges: Vec<Edge>) -> Result<Self> {
        for e in &edges {
            if e.u >= vertex_count || e.v >= vertex_count {
                return Err(SandlabError::UnknownVertex(e.u.max(e.v)));
            }
            if e.u == e.v {
                return Err(SandlabError::InvalidGraph(format!("self-loop at {}", e.u)));
            }
            if e.multiplicity == 0 {
                return Err(SandlabError::InvalidGraph(format!(
                    "zero multiplicity on edge ({}, {})",
                    e.u, e.v
                )));
            }
        }
        Ok(Multigraph { vertex_count, edges, coords: BTreeMap::new() })
    }

    pub fn with_coords(mut self, coords: BTreeMap<VertexId, Coord>) -> Result<Self> {
        if let Some((&v, _)) = coords.iter().find(|(&v, _)| v >= self.vertex_count) {
            return Err(SandlabError::UnknownVertex(v));
        }
        self.coords = coords;
        Ok(self)
    }

    /// Finite window `[x0, x0+width) × [y0, y0+height)` of the square lattice.
    /// Vertex ids are row-major: `(y - y0) * width + (x - x0)`.
    pub fn lattice_window(origin: Coord, width: usize, height: usize) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(SandlabError::InvalidFamily("empty lattice window".into()));
        }
        let id = |x: usize, y: usize| y * width + x;
        let mut edges = Vec::new();
        let mut coords = BTreeMap::new();
        for y in 0..height {
            for x in 0..width {
                coords.insert(id(x, y), (origin.0 + x as i64, origin.1 + y as i64));
                if x + 1 < width {
                    edges.push(Edge { u: id(x, y), v: id(x + 1, y), multiplicity: 1 });
                }
                if y + 1 < height {
                    edges.push(Edge { u: id(x, y), v: id(x, y + 1), multiplicity: 1 });
                }
            }
        }
        Multigraph::new(width * height, edges)?.with_coords(coords)
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_count
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn coords(&self) -> &BTreeMap<VertexId, Coord> {
        &self.coords
    }

    pub fn vertex_at(&self, c: Coord) -> Option<VertexId> {
        self.coords.iter().find(|(_, &xy)| xy == c).map(|(&v, _)| v)
    }

    fn aggregated_adjacency(&self) -> Vec<BTreeMap<VertexId, u32>> {
        let mut adj = vec![BTreeMap::new(); self.vertex_count];
        for e in &self.edges {
            *adj[e.u].entry(e.v).or_insert(0) += e.multiplicity;
            *adj[e.v].entry(e.u).or_insert(0) += e.multiplicity;
        }
        adj
    }
}

/// Collapse everything outside `subset` into a single sink.
///
/// Internal edges are kept, every edge leaving the subset is redirected to the
/// sink and parallel redirected edges have their multiplicities summed.
/// Ordinary vertices are relabelled `0..|subset|` in increasing ambient id;
/// the sink receives id `|subset|`.
pub fn build_sandpile(ambient: &Multigraph, subset: &[VertexId]) -> Result<SandpileGraph> {
    if subset.is_empty() {
        return Err(SandlabError::EmptySubset);
    }
    let mut members: Vec<VertexId> = subset.to_vec();
    members.sort_unstable();
    members.dedup();
    let mut relabel = HashMap::with_capacity(members.len());
    for (i, &v) in members.iter().enumerate() {
        if v >= ambient.vertex_count {
            return Err(SandlabError::UnknownVertex(v));
        }
        relabel.insert(v, i);
    }
    let sink = members.len();

    let adj = ambient.aggregated_adjacency();
    // connectivity of the induced subgraph
    let mut seen = vec![false; members.len()];
    let mut queue = VecDeque::from([0usize]);
    seen[0] = true;
    while let Some(i) = queue.pop_front() {
        for &u in adj[members[i]].keys() {
            if let Some(&j) = relabel.get(&u) {
                if !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
    }
    if seen.iter().any(|s| !s) {
        return Err(SandlabError::SubsetNotConnected);
    }

    let mut edges = Vec::new();
    let mut to_sink = vec![0u32; members.len()];
    for (i, &v) in members.iter().enumerate() {
        for (&u, &m) in &adj[v] {
            match relabel.get(&u) {
                Some(&j) if i < j => edges.push(Edge { u: i, v: j, multiplicity: m }),
                Some(_) => {}
                None => to_sink[i] += m,
            }
        }
    }
    if to_sink.iter().all(|&m| m == 0) {
        return Err(SandlabError::SinkUnreachable);
    }
    for (i, &m) in to_sink.iter().enumerate() {
        if m > 0 {
            edges.push(Edge { u: i, v: sink, multiplicity: m });
        }
    }
    let coords = members
        .iter()
        .enumerate()
        .filter_map(|(i, v)| ambient.coords.get(v).map(|&c| (i, c)))
        .collect();
    let graph = Multigraph::new(members.len() + 1, edges)?.with_coords(coords)?;
    SandpileGraph::new(&graph, sink)
}

/// A connected multigraph with a distinguished sink.
///
/// Immutable after construction; all queries take `&self`.
#[derive(Clone, Debug)]
pub struct SandpileGraph {
    sink: VertexId,
    adjacency: Vec<Vec<(VertexId, u32)>>,
    degree: Vec<u64>,
    sink_mult: Vec<u64>,
    coords: Vec<Option<Coord>>,
    coord_index: HashMap<Coord, VertexId>,
    eta: Vec<u32>,
}

impl SandpileGraph {
    pub fn new(graph: &Multigraph, sink: VertexId) -> Result<Self> {
        let n = graph.vertex_count;
        if sink >= n {
            return Err(SandlabError::UnknownVertex(sink));
        }
        if n < 2 {
            return Err(SandlabError::InvalidGraph("need at least one ordinary vertex".into()));
        }
        let adjacency: Vec<Vec<(VertexId, u32)>> = graph
            .aggregated_adjacency()
            .into_iter()
            .map(|m| m.into_iter().collect())
            .collect();
        let degree: Vec<u64> = adjacency
            .iter()
            .map(|nb| nb.iter().map(|&(_, m)| m as u64).sum())
            .collect();
        let sink_mult: Vec<u64> = adjacency
            .iter()
            .map(|nb| {
                nb.iter().filter(|&&(u, _)| u == sink).map(|&(_, m)| m as u64).sum()
            })
            .collect();

        // distance to sink over the whole graph
        let dist = bfs(&adjacency, &[sink], None);
        for v in 0..n {
            if v == sink {
                continue;
            }
            if degree[v] == 0 {
                return Err(SandlabError::InvalidGraph(format!("vertex {v} has degree 0")));
            }
            if dist[v].is_none() {
                return Err(SandlabError::InvalidGraph(format!(
                    "sink unreachable from vertex {v}"
                )));
            }
        }
        let eta = dist
            .iter()
            .enumerate()
            .map(|(v, d)| if v == sink { 0 } else { d.unwrap() - 1 })
            .collect();

        let mut coords = vec![None; n];
        let mut coord_index = HashMap::new();
        for (&v, &c) in &graph.coords {
            if v != sink {
                coords[v] = Some(c);
                coord_index.insert(c, v);
            }
        }
        Ok(SandpileGraph { sink, adjacency, degree, sink_mult, coords, coord_index, eta })
    }

    pub fn vertex_count(&self) -> usize {
        self.adjacency.len()
    }

    pub fn ordinary_count(&self) -> usize {
        self.adjacency.len() - 1
    }

    pub fn sink(&self) -> VertexId {
        self.sink
    }

    pub fn is_ordinary(&self, v: VertexId) -> bool {
        v < self.adjacency.len() && v != self.sink
    }

    pub fn ordinary(&self) -> impl Iterator<Item = VertexId> + '_ {
        let sink = self.sink;
        (0..self.adjacency.len()).filter(move |&v| v != sink)
    }

    pub fn check_ordinary(&self, v: VertexId) -> Result<()> {
        if v >= self.adjacency.len() {
            Err(SandlabError::UnknownVertex(v))
        } else if v == self.sink {
            Err(SandlabError::NotOrdinary(v))
        } else {
            Ok(())
        }
    }

    /// Neighbours with aggregated multiplicities, sorted by id (sink included).
    pub fn neighbors(&self, v: VertexId) -> &[(VertexId, u32)] {
        &self.adjacency[v]
    }

    pub fn degree(&self, v: VertexId) -> u64 {
        self.degree[v]
    }

    pub fn sink_multiplicity(&self, v: VertexId) -> u64 {
        self.sink_mult[v]
    }

    /// Maximum degree over ordinary vertices.
    pub fn max_degree(&self) -> u64 {
        self.ordinary().map(|v| self.degree[v]).max().unwrap_or(0)
    }

    pub fn coord(&self, v: VertexId) -> Option<Coord> {
        self.coords.get(v).copied().flatten()
    }

    pub fn vertex_at(&self, c: Coord) -> Option<VertexId> {
        self.coord_index.get(&c).copied()
    }

    pub fn has_coords(&self) -> bool {
        !self.coord_index.is_empty()
    }

    /// Distance from `v` to the vertex boundary (sink-adjacent vertices).
    pub fn eta(&self, v: VertexId) -> u32 {
        self.eta[v]
    }

    /// BFS distances from `v`. With `through_sink == false` the sink is
    /// neither entered nor used as a relay.
    pub fn distances_from(&self, v: VertexId, through_sink: bool) -> Vec<Option<u32>> {
        let blocked = if through_sink { None } else { Some(self.sink) };
        bfs(&self.adjacency, &[v], blocked)
    }

    pub fn distance(&self, u: VertexId, v: VertexId) -> Option<u32> {
        self.distances_from(u, true)[v]
    }

    /// Ordinary vertices within distance `r` of `v`, measured without passing
    /// through the sink. Unlike [`metric_query`](Self::metric_query) this does
    /// not require the ball to stay clear of the sink.
    pub fn ordinary_ball(&self, v: VertexId, r: u32) -> Result<Vec<VertexId>> {
        self.check_ordinary(v)?;
        let dist = self.distances_from(v, false);
        Ok((0..self.vertex_count()).filter(|&u| matches!(dist[u], Some(d) if d <= r)).collect())
    }

    /// Ball, volume, boundaries and `eta` of `B(v, r)`.
    ///
    /// Fails if the ball would contain the sink.
    pub fn metric_query(&self, v: VertexId, r: u32) -> Result<MetricQuery> {
        self.check_ordinary(v)?;
        let dist = self.distances_from(v, true);
        let to_sink = dist[self.sink].expect("sink reachable");
        if to_sink <= r {
            return Err(SandlabError::BallReachesSink { center: v, radius: r });
        }
        let ball: Vec<VertexId> =
            (0..self.vertex_count()).filter(|&u| matches!(dist[u], Some(d) if d <= r)).collect();
        Ok(MetricQuery {
            center: v,
            radius: r,
            vol: self.volume(&ball),
            vertex_boundary: self.vertex_boundary(&ball),
            edge_boundary: self.edge_boundary(&ball),
            eta: self.eta[v],
            ball,
        })
    }

    fn membership(&self, set: &[VertexId]) -> Vec<bool> {
        let mut inside = vec![false; self.vertex_count()];
        for &u in set {
            inside[u] = true;
        }
        inside
    }

    /// Multiplicity-weighted count of edges with both endpoints in `set`.
    pub fn volume(&self, set: &[VertexId]) -> u64 {
        let inside = self.membership(set);
        let twice: u64 = set
            .iter()
            .flat_map(|&u| self.adjacency[u].iter())
            .filter(|&&(w, _)| inside[w])
            .map(|&(_, m)| m as u64)
            .sum();
        twice / 2
    }

    /// Vertices of `set` with a neighbour outside it (the sink counts as outside).
    pub fn vertex_boundary(&self, set: &[VertexId]) -> Vec<VertexId> {
        let inside = self.membership(set);
        set.iter()
            .copied()
            .filter(|&u| self.adjacency[u].iter().any(|&(w, _)| !inside[w]))
            .collect()
    }

    pub fn edge_boundary(&self, set: &[VertexId]) -> Vec<Edge> {
        let inside = self.membership(set);
        set.iter()
            .flat_map(|&u| {
                self.adjacency[u]
                    .iter()
                    .filter(|&&(w, _)| !inside[w])
                    .map(move |&(w, m)| Edge { u, v: w, multiplicity: m })
            })
            .collect()
    }

    /// Side length if this is `grid(n)`: a full `n × n` coordinate block where
    /// every vertex has degree 4 and the sink takes the missing lattice edges.
    pub fn grid_side(&self) -> Option<usize> {
        let n = (self.ordinary_count() as f64).sqrt().round() as usize;
        if n < 2 || n * n != self.ordinary_count() {
            return None;
        }
        let (x0, y0) = self.ordinary().filter_map(|v| self.coord(v)).min()?;
        for v in self.ordinary() {
            let (x, y) = self.coord(v)?;
            let (dx, dy) = (x - x0, y - y0);
            if dx < 0 || dy < 0 || dx >= n as i64 || dy >= n as i64 || self.degree[v] != 4 {
                return None;
            }
            for &(sx, sy) in &LATTICE_STEPS {
                let expected = self.vertex_at((x + sx, y + sy));
                let linked = match expected {
                    Some(u) => self.adjacency[v].iter().any(|&(w, m)| w == u && m == 1),
                    None => true,
                };
                if !linked {
                    return None;
                }
            }
        }
        Some(n)
    }

    pub fn to_multigraph(&self) -> Multigraph {
        let mut edges = Vec::new();
        for (u, nb) in self.adjacency.iter().enumerate() {
            for &(v, m) in nb {
                if u < v {
                    edges.push(Edge { u, v, multiplicity: m });
                }
            }
        }
        let coords = self.coord_index.iter().map(|(&c, &v)| (v, c)).collect();
        Multigraph { vertex_count: self.vertex_count(), edges, coords }
    }

    pub fn to_json(&self) -> GraphJson {
        let m = self.to_multigraph();
        GraphJson {
            n_vertices: m.vertex_count,
            sink: self.sink,
            edges: m.edges.iter().map(|e| [e.u as u64, e.v as u64, e.multiplicity as u64]).collect(),
            coords: if m.coords.is_empty() {
                None
            } else {
                Some(m.coords.iter().map(|(&v, &(x, y))| (v, [x, y])).collect())
            },
        }
    }

    pub fn from_json(json: &GraphJson) -> Result<Self> {
        let edges = json
            .edges
            .iter()
            .map(|&[u, v, m]| {
                let m = u32::try_from(m)
                    .map_err(|_| SandlabError::InvalidGraph("multiplicity too large".into()))?;
                Ok(Edge { u: u as usize, v: v as usize, multiplicity: m })
            })
            .collect::<Result<Vec<_>>>()?;
        let mut graph = Multigraph::new(json.n_vertices, edges)?;
        if let Some(coords) = &json.coords {
            graph = graph.with_coords(coords.iter().map(|(&v, &[x, y])| (v, (x, y))).collect())?;
        }
        SandpileGraph::new(&graph, json.sink)
    }
}

/// On-disk graph format; field order is the serialization order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphJson {
    pub n_vertices: usize,
    pub sink: VertexId,
    pub edges: Vec<[u64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coords: Option<BTreeMap<VertexId, [i64; 2]>>,
}

/// Result of [`SandpileGraph::metric_query`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MetricQuery {
    pub center: VertexId,
    pub radius: u32,
    pub ball: Vec<VertexId>,
    pub vol: u64,
    pub vertex_boundary: Vec<VertexId>,
    pub edge_boundary: Vec<Edge>,
    pub eta: u32,
}

/// Volume-growth and degree constants of a family.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilyConstants {
    pub alpha: f64,
    pub delta_lo: f64,
    pub delta_max: f64,
}

fn bfs(adj: &[Vec<(VertexId, u32)>], sources: &[VertexId], blocked: Option<VertexId>) -> Vec<Option<u32>> {
    let mut dist = vec![None; adj.len()];
    let mut queue = VecDeque::new();
    for &s in sources {
        dist[s] = Some(0);
        queue.push_back(s);
    }
    while let Some(x) = queue.pop_front() {
        let d = dist[x].unwrap();
        for &(y, _) in &adj[x] {
            if Some(y) == blocked || dist[y].is_some() {
                continue;
            }
            dist[y] = Some(d + 1);
            queue.push_back(y);
        }
    }
    dist
}

/// Generated graph families.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    /// `n × n` block of the square lattice.
    Grid { n: usize },
    /// `1 × n` block: a path whose vertices all have degree 4.
    Line { n: usize },
    /// `k × n` block (k rows, n columns).
    Strip { k: usize, n: usize },
}

/// Family kind without size, used by the estimators.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FamilyKind {
    Grid,
    Line,
    Strip { k: usize },
}

impl FamilyKind {
    pub fn member(self, n: usize) -> Family {
        match self {
            FamilyKind::Grid => Family::Grid { n },
            FamilyKind::Line => Family::Line { n },
            FamilyKind::Strip { k } => Family::Strip { k, n },
        }
    }

    pub fn name(self) -> String {
        match self {
            FamilyKind::Grid => "grid".into(),
            FamilyKind::Line => "line".into(),
            FamilyKind::Strip { k } => format!("strip{k}"),
        }
    }
}

/// Build a member of one of the lattice-derived families.
///
/// Each family is the collapse of a block of the square lattice; the block is
/// cut from a window with a one-site margin so every exterior lattice edge
/// ends on the sink.
pub fn gen_family(family: Family) -> Result<SandpileGraph> {
    let (width, height) = match family {
        Family::Grid { n } if n >= 2 => (n, n),
        Family::Line { n } if n >= 1 => (n, 1),
        Family::Strip { k, n } if k >= 1 && n >= 1 => (n, k),
        other => return Err(SandlabError::InvalidFamily(format!("{other:?}"))),
    };
    let window = Multigraph::lattice_window((-1, -1), width + 2, height + 2)?;
    let subset: Vec<VertexId> = (0..height)
        .flat_map(|y| (0..width).map(move |x| (y + 1) * (width + 2) + (x + 1)))
        .collect();
    build_sandpile(&window, &subset)
}
