//! Square-lattice toolkit: dihedral symmetry, axis monotonicity, ball
//! capacities, and the diamond/square sandwich of toppling supports.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::engine::{flood_count, stabilize, Configuration, StabilizationResult, TopplingPolicy};
use crate::error::{Result, SandlabError};
use crate::graph::{gen_family, Coord, Family, SandpileGraph};

/// Finitely supported function on the lattice with a distinguished center.
/// Points absent from `support` carry the value zero.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LatticeFunction {
    pub center: Coord,
    pub support: BTreeMap<Coord, u64>,
}

impl LatticeFunction {
    pub fn new(center: Coord) -> Self {
        LatticeFunction { center, support: BTreeMap::new() }
    }

    pub fn point_mass(center: Coord, at: Coord, value: u64) -> Self {
        let mut f = LatticeFunction::new(center);
        f.set(at, value);
        f
    }

    pub fn get(&self, p: Coord) -> u64 {
        self.support.get(&p).copied().unwrap_or(0)
    }

    pub fn set(&mut self, p: Coord, value: u64) {
        if value == 0 {
            self.support.remove(&p);
        } else {
            self.support.insert(p, value);
        }
    }

    /// Values of a per-vertex vector on a graph with lattice coordinates.
    pub fn from_vertex_values(g: &SandpileGraph, center: Coord, values: &[u64]) -> Self {
        let mut f = LatticeFunction::new(center);
        for v in g.ordinary() {
            if let Some(p) = g.coord(v) {
                f.set(p, values[v]);
            }
        }
        f
    }

    pub fn to_json(&self) -> LatticeFunctionJson {
        LatticeFunctionJson {
            center: [self.center.0, self.center.1],
            values: self.support.iter().map(|(&(x, y), &v)| (format!("{x},{y}"), v)).collect(),
        }
    }

    pub fn from_json(json: &LatticeFunctionJson) -> Result<Self> {
        let mut f = LatticeFunction::new((json.center[0], json.center[1]));
        for (key, &value) in &json.values {
            let parsed = key
                .split_once(',')
                .and_then(|(x, y)| Some((x.trim().parse().ok()?, y.trim().parse().ok()?)));
            let p = parsed.ok_or_else(|| SandlabError::InvalidParameters(format!("bad lattice key {key:?}")))?;
            f.set(p, value);
        }
        Ok(f)
    }
}

/// Sparse JSON form: `{"center": [x, y], "values": {"x,y": value}}`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatticeFunctionJson {
    pub center: [i64; 2],
    pub values: BTreeMap<String, u64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct SymmetryFlags {
    pub d4: bool,
    pub axis_monotone: bool,
}

impl SymmetryFlags {
    pub fn both(&self) -> bool {
        self.d4 && self.axis_monotone
    }
}

/// The eight images of an offset under the symmetries of the square.
fn d4_images((dx, dy): Coord) -> [Coord; 8] {
    [(dx, dy), (-dx, dy), (dx, -dy), (-dx, -dy), (dy, dx), (-dy, dx), (dy, -dx), (-dy, -dx)]
}

/// One-step moves from offset `(dx, dy)` toward each of the four symmetry
/// axes. Axis monotonicity is generated by these dominations.
fn steps_toward_axes((dx, dy): Coord) -> Vec<Coord> {
    let mut out = Vec::with_capacity(4);
    if dx != 0 {
        out.push((dx - dx.signum(), dy));
    }
    if dy != 0 {
        out.push((dx, dy - dy.signum()));
    }
    let u = dx - dy;
    if u.abs() >= 2 {
        out.push((dx - u.signum(), dy + u.signum()));
    }
    let s = dx + dy;
    if s.abs() >= 2 {
        out.push((dx - s.signum(), dy - s.signum()));
    }
    out
}

pub fn symmetry_flags(f: &LatticeFunction) -> SymmetryFlags {
    let (cx, cy) = f.center;
    let offset = |(x, y): Coord| (x - cx, y - cy);
    let at = |(dx, dy): Coord| f.get((cx + dx, cy + dy));
    let d4 = f
        .support
        .iter()
        .all(|(&p, &value)| d4_images(offset(p)).iter().all(|&img| at(img) == value));
    let axis_monotone = f
        .support
        .iter()
        .all(|(&p, &value)| steps_toward_axes(offset(p)).iter().all(|&q| at(q) >= value));
    SymmetryFlags { d4, axis_monotone }
}

/// `(|B_inf(v,n)|, |B_1(v,n)|)` scaled by the largest stable height 3.
pub fn ball_capacities(n: u64) -> (u64, u64) {
    (3 * (2 * n + 1) * (2 * n + 1), 6 * n * n + 6 * n + 3)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Sandwich {
    /// Largest l-infinity distance of the support from the center.
    pub radius: u64,
    /// Diamond of that radius inside the support, support inside the square.
    pub ok: bool,
}

/// Tests `B_1(center, r) ⊆ support ⊆ B_inf(center, r)` for the support
/// radius `r`. An empty support has radius 0 and fails the lower inclusion.
pub fn support_sandwich(f: &LatticeFunction) -> Result<Sandwich> {
    if !symmetry_flags(f).both() {
        return Err(SandlabError::Asymmetric);
    }
    let (cx, cy) = f.center;
    let radius = f
        .support
        .keys()
        .map(|&(x, y)| (x - cx).unsigned_abs().max((y - cy).unsigned_abs()))
        .max()
        .unwrap_or(0);
    let r = radius as i64;
    // the upper inclusion holds by the choice of radius
    let diamond_inside = (-r..=r).all(|dx| {
        let rest = r - dx.abs();
        (-rest..=rest).all(|dy| f.get((cx + dx, cy + dy)) > 0)
    });
    Ok(Sandwich { radius, ok: diamond_inside })
}

/// Center of `grid(n)` for odd `n`.
pub fn grid_center(n: usize) -> Result<Coord> {
    if n.is_multiple_of(2) {
        return Err(SandlabError::CenterUndefined(n));
    }
    Ok(((n / 2) as i64, (n / 2) as i64))
}

/// Outcome of dropping `N` particles at the center of `grid(n)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PreservationReport {
    pub n: usize,
    pub particles: u64,
    /// Flags of the toppling-count function, the object the lemma concerns.
    pub toppling: SymmetryFlags,
    /// Flags of the final stable configuration, reported for information.
    pub final_configuration: SymmetryFlags,
    /// Sandwich of the toppling support, absent when nothing toppled.
    pub sandwich: Option<Sandwich>,
    pub sink_absorbed: u64,
}

impl PreservationReport {
    /// The toppling function is symmetric, axis-monotone and sandwiched, and
    /// the final configuration keeps the dihedral symmetry.
    pub fn passed(&self) -> bool {
        self.toppling.both() && self.final_configuration.d4 && self.sandwich.is_none_or(|s| s.ok)
    }
}

/// Center drop on `grid(n)`: stabilize and return the two lattice functions.
pub fn center_drop(n: usize, particles: u64) -> Result<(SandpileGraph, StabilizationResult)> {
    let center = grid_center(n)?;
    let g = gen_family(Family::Grid { n })?;
    let v = g.vertex_at(center).expect("center lies in the grid");
    let c = Configuration::point(&g, v, particles)?;
    let r = stabilize(&g, &c, TopplingPolicy::Fifo)?;
    Ok((g, r))
}

pub fn check_preservation_lemma(n: usize, particles: u64) -> Result<PreservationReport> {
    let center = grid_center(n)?;
    let (g, r) = center_drop(n, particles)?;
    let z = LatticeFunction::from_vertex_values(&g, center, &r.score);
    let sigma = LatticeFunction::from_vertex_values(&g, center, r.stable.values());
    let toppling = symmetry_flags(&z);
    let sandwich = if z.support.is_empty() || !toppling.both() { None } else { Some(support_sandwich(&z)?) };
    Ok(PreservationReport {
        n,
        particles,
        toppling,
        final_configuration: symmetry_flags(&sigma),
        sandwich,
        sink_absorbed: r.sink_absorbed,
    })
}

/// Minimum particles at the center of a window of side `4n + 3` that flood
/// the l1 ball of radius `n`, together with the capacity `6n² + 6n + 3`.
pub fn l1_ball_flood_count(n: u64) -> Result<(u64, u64)> {
    let side = 4 * n as usize + 3;
    let center = grid_center(side)?;
    let g = gen_family(Family::Grid { n: side })?;
    let v = g.vertex_at(center).expect("center lies in the grid");
    let ball = g.ordinary_ball(v, n as u32)?;
    Ok((flood_count(&g, v, &ball)?, ball_capacities(n).1))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn point_masses() {
        let f = LatticeFunction::point_mass((0, 0), (0, 0), 7);
        assert_eq!(symmetry_flags(&f), SymmetryFlags { d4: true, axis_monotone: true });
        assert_eq!(support_sandwich(&f).unwrap(), Sandwich { radius: 0, ok: true });
        let off = LatticeFunction::point_mass((0, 0), (1, 0), 7);
        assert!(!symmetry_flags(&off).d4);
        assert!(matches!(support_sandwich(&off), Err(SandlabError::Asymmetric)));
    }

    #[test]
    fn plus_shape_is_monotone_and_ring_is_not() {
        let mut plus = LatticeFunction::new((0, 0));
        plus.set((0, 0), 2);
        for p in [(1, 0), (-1, 0), (0, 1), (0, -1)] {
            plus.set(p, 1);
        }
        assert!(symmetry_flags(&plus).both());
        assert_eq!(support_sandwich(&plus).unwrap(), Sandwich { radius: 1, ok: true });

        let mut ring = plus.clone();
        ring.set((0, 0), 0);
        let flags = symmetry_flags(&ring);
        assert!(flags.d4 && !flags.axis_monotone);
    }

    #[test]
    fn diagonal_domination_is_checked() {
        // symmetric and monotone along the coordinate axes, but (2,0) holds
        // more than (1,1), one step closer to the diagonal
        let mut f = LatticeFunction::new((0, 0));
        f.set((0, 0), 5);
        for p in d4_images((1, 0)) {
            f.set(p, 3);
        }
        for p in d4_images((1, 1)) {
            f.set(p, 2);
        }
        for p in d4_images((2, 0)) {
            f.set(p, 3);
        }
        let flags = symmetry_flags(&f);
        assert!(flags.d4);
        assert!(!flags.axis_monotone);
    }

    #[test]
    fn capacities() {
        assert_eq!(ball_capacities(0), (3, 3));
        assert_eq!(ball_capacities(1), (27, 15));
        assert_eq!(ball_capacities(2), (75, 39));
    }

    #[test]
    fn small_drops_are_vacuous() {
        for particles in 0..4 {
            let r = check_preservation_lemma(11, particles).unwrap();
            assert!(r.passed());
            assert_eq!(r.sandwich, None);
        }
        assert!(matches!(check_preservation_lemma(10, 5), Err(SandlabError::CenterUndefined(10))));
    }

    #[test]
    fn large_center_drop_is_symmetric() {
        let r = check_preservation_lemma(31, 2000).unwrap();
        assert!(r.toppling.both());
        assert!(r.final_configuration.d4);
        assert!(r.passed());
        let s = r.sandwich.unwrap();
        // every site outside the support radius holds nothing; inside at most 3
        assert!(ball_capacities(s.radius + 1).0 >= 2000 - r.sink_absorbed);
    }

    #[test]
    fn json_round_trip() {
        let (g, r) = center_drop(11, 300).unwrap();
        let f = LatticeFunction::from_vertex_values(&g, (5, 5), &r.score);
        let json = serde_json::to_string(&f.to_json()).unwrap();
        let back = LatticeFunction::from_json(&serde_json::from_str(&json).unwrap()).unwrap();
        assert_eq!(back, f);
    }

    #[test]
    fn l1_flooding_within_capacity() {
        for n in 1..=3 {
            let (count, cap) = l1_ball_flood_count(n).unwrap();
            assert!(count <= cap, "n={n}: {count} > {cap}");
        }
        assert_eq!(l1_ball_flood_count(1).unwrap().0, 4);
        assert_eq!(l1_ball_flood_count(2).unwrap().0, 16);
    }
}
