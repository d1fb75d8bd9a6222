//! Independent oracles shared by the integration tests. None of them calls
//! into the worklist engine, the sparse solver or the bisection helpers.

#![allow(dead_code)]

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use sandlab_core::graph::{SandpileGraph, VertexId};

/// Least fixed point of `z(v) = floor((c(v) + sum_u m(u,v) z(u)) / deg(v))`
/// iterated from zero; returns `(sigma, z)`.
pub fn fixed_point_stabilize(g: &SandpileGraph, c: &[u64]) -> (Vec<u64>, Vec<u64>) {
    let sink = g.sink();
    let mut z = vec![0u64; g.vertex_count()];
    loop {
        let mut next = z.clone();
        for v in g.ordinary() {
            let inflow: u64 = g.neighbors(v).iter().filter(|e| e.0 != sink).map(|&(u, m)| z[u] * m as u64).sum();
            next[v] = (c[v] + inflow) / g.degree(v);
        }
        if next == z {
            break;
        }
        z = next;
    }
    let mut sigma = vec![0u64; g.vertex_count()];
    for v in g.ordinary() {
        let inflow: u64 = g.neighbors(v).iter().filter(|e| e.0 != sink).map(|&(u, m)| z[u] * m as u64).sum();
        sigma[v] = c[v] + inflow - g.degree(v) * z[v];
    }
    (sigma, z)
}

/// Vertices that receive a particle when `c` is stabilized: nonzero start
/// value or a neighbor that topples.
pub fn fixed_point_flooded(g: &SandpileGraph, c: &[u64]) -> Vec<bool> {
    let (_, z) = fixed_point_stabilize(g, c);
    (0..g.vertex_count())
        .map(|v| g.is_ordinary(v) && (c[v] > 0 || g.neighbors(v).iter().any(|&(u, _)| u != g.sink() && z[u] > 0)))
        .collect()
}

/// Smallest `x` found by linear scan with `pred(x)` true.
pub fn linear_scan(mut pred: impl FnMut(u64) -> bool) -> u64 {
    (0..).find(|&x| pred(x)).unwrap()
}

fn ordinary_index(g: &SandpileGraph) -> (Vec<VertexId>, Vec<Option<usize>>) {
    let verts: Vec<VertexId> = g.ordinary().collect();
    let mut idx = vec![None; g.vertex_count()];
    for (i, &v) in verts.iter().enumerate() {
        idx[v] = Some(i);
    }
    (verts, idx)
}

fn reduced_laplacian(g: &SandpileGraph) -> Vec<Vec<BigRational>> {
    let (verts, idx) = ordinary_index(g);
    let n = verts.len();
    let mut a = vec![vec![BigRational::zero(); n]; n];
    for (i, &v) in verts.iter().enumerate() {
        a[i][i] = BigRational::from_integer(BigInt::from(g.degree(v)));
        for &(u, m) in g.neighbors(v) {
            if let Some(j) = idx[u] {
                a[i][j] -= BigRational::from_integer(BigInt::from(m));
            }
        }
    }
    a
}

/// Exact Green's function column `G(., w)` by Gauss-Jordan elimination over
/// the rationals, indexed by vertex id (sink zero).
pub fn rational_green(g: &SandpileGraph, w: VertexId) -> Vec<BigRational> {
    let (verts, idx) = ordinary_index(g);
    let n = verts.len();
    let mut a = reduced_laplacian(g);
    let mut b = vec![BigRational::zero(); n];
    b[idx[w].unwrap()] = BigRational::one();
    for col in 0..n {
        let pivot = (col..n).find(|&r| !a[r][col].is_zero()).expect("reduced Laplacian is nonsingular");
        a.swap(col, pivot);
        b.swap(col, pivot);
        let inv = a[col][col].recip();
        for j in col..n {
            a[col][j] = &a[col][j] * &inv;
        }
        b[col] = &b[col] * &inv;
        for r in 0..n {
            if r != col && !a[r][col].is_zero() {
                let f = a[r][col].clone();
                for j in col..n {
                    let t = &f * &a[col][j];
                    a[r][j] -= t;
                }
                let t = &f * &b[col];
                b[r] -= t;
            }
        }
    }
    let mut out = vec![BigRational::zero(); g.vertex_count()];
    for (i, &v) in verts.iter().enumerate() {
        out[v] = b[i].clone();
    }
    out
}

/// Exact potential `pi_w = G(., w) / G(w, w)`.
pub fn rational_potential(g: &SandpileGraph, w: VertexId) -> Vec<BigRational> {
    let green = rational_green(g, w);
    let scale = green[w].clone();
    green.into_iter().map(|x| x / &scale).collect()
}

pub fn to_f64(x: &BigRational) -> f64 {
    use num_traits::ToPrimitive;
    x.to_f64().unwrap()
}

/// Determinant of the reduced Laplacian by rational elimination.
pub fn rational_det(g: &SandpileGraph) -> BigInt {
    let mut a = reduced_laplacian(g);
    let n = a.len();
    let mut det = BigRational::one();
    for col in 0..n {
        let Some(pivot) = (col..n).find(|&r| !a[r][col].is_zero()) else {
            return BigInt::zero();
        };
        if pivot != col {
            a.swap(col, pivot);
            det = -det;
        }
        det *= &a[col][col];
        for r in col + 1..n {
            let f = &a[r][col] / &a[col][col];
            for j in col..n {
                let t = &f * &a[col][j];
                a[r][j] -= t;
            }
        }
    }
    assert!(det.is_integer());
    det.to_integer().abs()
}

/// Dhar's criterion: a stable `c` is recurrent iff no nonempty vertex set
/// `F` has `c(v) < deg_F(v)` for every `v` in `F`. Exponential in the size.
pub fn recurrent_by_forbidden_sets(g: &SandpileGraph, c: &[u64]) -> bool {
    let verts: Vec<VertexId> = g.ordinary().collect();
    assert!(verts.len() <= 16);
    for mask in 1u32..(1 << verts.len()) {
        let inside = |v: VertexId| verts.iter().position(|&x| x == v).is_some_and(|i| mask >> i & 1 == 1);
        let forbidden = verts.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).all(|(_, &v)| {
            let deg_f: u64 = g.neighbors(v).iter().filter(|e| inside(e.0)).map(|e| e.1 as u64).sum();
            c[v] < deg_f
        });
        if forbidden {
            return false;
        }
    }
    true
}

/// Every stable configuration of a small graph, as vertex-indexed vectors.
pub fn all_stable(g: &SandpileGraph) -> Vec<Vec<u64>> {
    let verts: Vec<VertexId> = g.ordinary().collect();
    let mut out = vec![vec![0u64; g.vertex_count()]];
    for &v in &verts {
        let mut next = Vec::new();
        for c in &out {
            for x in 0..g.degree(v) {
                let mut d = c.clone();
                d[v] = x;
                next.push(d);
            }
        }
        out = next;
    }
    out
}
