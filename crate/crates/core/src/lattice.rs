//! Square and Lieb lattice geometry.
//!
//! Sites are enumerated row-major, bottom row first. For the Lieb lattice a row
//! `y` lists `v(0,y), h(0,y), v(1,y), h(1,y), ...` followed by the vertical
//! edges `V(x,y)` joining row `y` to row `y+1`, so the top boundary reads as an
//! interleaved vertex/edge chain. Dangling edges of a rough bottom sit at
//! `y = 0` and come first.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum LatticeError {
    #[error("lattice dimensions {lx}x{ly} too small (need Lx >= 2, Ly >= 2)")]
    TooSmall { lx: usize, ly: usize },
    #[error("periodic x boundary needs Lx >= 3, got {0}")]
    PeriodicTooNarrow(usize),
    #[error("rough bottom boundary is only defined for the Lieb lattice")]
    RoughSquare,
    #[error("unknown site index {0}")]
    UnknownSite(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LatticeKind {
    Square,
    Lieb,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Bottom {
    Smooth,
    Rough,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Role {
    Plain,
    Vertex,
    HorizontalEdge,
    VerticalEdge,
}

/// Bipartition label. `Spin` sites (drawn as open circles) carry Ising spins;
/// `Coupling` sites (filled) carry pair or plaquette interactions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Sublattice {
    Spin,
    Coupling,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SiteId {
    pub index: usize,
    pub x: usize,
    pub y: usize,
    pub role: Role,
    pub boundary: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LatticeSpec {
    pub kind: LatticeKind,
    pub lx: usize,
    pub ly: usize,
    pub x_periodic: bool,
    pub bottom: Bottom,
}

impl LatticeSpec {
    pub fn square(lx: usize, ly: usize) -> Self {
        Self { kind: LatticeKind::Square, lx, ly, x_periodic: false, bottom: Bottom::Smooth }
    }

    pub fn lieb(lx: usize, ly: usize, bottom: Bottom) -> Self {
        Self { kind: LatticeKind::Lieb, lx, ly, x_periodic: false, bottom }
    }

    pub fn periodic(mut self) -> Self {
        self.x_periodic = true;
        self
    }

    pub fn validate(&self) -> Result<(), LatticeError> {
        if self.lx < 2 || self.ly < 2 {
            return Err(LatticeError::TooSmall { lx: self.lx, ly: self.ly });
        }
        // Lx = 2 with wraparound would double the bond between the two columns.
        if self.x_periodic && self.lx < 3 {
            return Err(LatticeError::PeriodicTooNarrow(self.lx));
        }
        if self.kind == LatticeKind::Square && self.bottom == Bottom::Rough {
            return Err(LatticeError::RoughSquare);
        }
        Ok(())
    }

    /// Number of horizontal edges per Lieb row.
    pub fn h_edges_per_row(&self) -> usize {
        if self.x_periodic {
            self.lx
        } else {
            self.lx - 1
        }
    }
}

/// A validated lattice with precomputed adjacency. Immutable after construction.
#[derive(Clone, Debug)]
pub struct Lattice {
    pub spec: LatticeSpec,
    sites: Vec<SiteId>,
    adj: Vec<Vec<usize>>,
    lookup: HashMap<(Role, usize, usize), usize>,
}

impl Lattice {
    pub fn new(spec: LatticeSpec) -> Result<Self, LatticeError> {
        spec.validate()?;
        let mut sites = Vec::new();
        let mut push = |x: usize, y: usize, role: Role, boundary: bool| {
            let index = sites.len();
            sites.push(SiteId { index, x, y, role, boundary });
        };
        match spec.kind {
            LatticeKind::Square => {
                for y in 1..=spec.ly {
                    for x in 0..spec.lx {
                        push(x, y, Role::Plain, y == spec.ly);
                    }
                }
            }
            LatticeKind::Lieb => {
                if spec.bottom == Bottom::Rough {
                    for x in 0..spec.lx {
                        push(x, 0, Role::VerticalEdge, false);
                    }
                }
                for y in 1..=spec.ly {
                    let top = y == spec.ly;
                    for x in 0..spec.lx {
                        push(x, y, Role::Vertex, top);
                        if x + 1 < spec.lx || spec.x_periodic {
                            push(x, y, Role::HorizontalEdge, top);
                        }
                    }
                    if !top {
                        for x in 0..spec.lx {
                            push(x, y, Role::VerticalEdge, false);
                        }
                    }
                }
            }
        }
        let lookup: HashMap<_, _> =
            sites.iter().map(|s| ((s.role, s.x, s.y), s.index)).collect();
        let mut adj = vec![Vec::new(); sites.len()];
        let right = |x: usize| if x + 1 < spec.lx { Some(x + 1) } else if spec.x_periodic { Some(0) } else { None };
        let left = |x: usize| if x > 0 { Some(x - 1) } else if spec.x_periodic { Some(spec.lx - 1) } else { None };
        for s in &sites {
            let nb = &mut adj[s.index];
            let mut add = |key: (Role, usize, usize)| {
                if let Some(&j) = lookup.get(&key) {
                    nb.push(j);
                }
            };
            match s.role {
                Role::Plain => {
                    if s.y > 1 {
                        add((Role::Plain, s.x, s.y - 1));
                    }
                    if let Some(l) = left(s.x) {
                        add((Role::Plain, l, s.y));
                    }
                    if let Some(r) = right(s.x) {
                        add((Role::Plain, r, s.y));
                    }
                    add((Role::Plain, s.x, s.y + 1));
                }
                Role::Vertex => {
                    if s.y > 0 {
                        add((Role::VerticalEdge, s.x, s.y - 1));
                    }
                    if let Some(l) = left(s.x) {
                        add((Role::HorizontalEdge, l, s.y));
                    }
                    add((Role::HorizontalEdge, s.x, s.y));
                    add((Role::VerticalEdge, s.x, s.y));
                }
                Role::HorizontalEdge => {
                    add((Role::Vertex, s.x, s.y));
                    if let Some(r) = right(s.x) {
                        add((Role::Vertex, r, s.y));
                    }
                }
                Role::VerticalEdge => {
                    if s.y > 0 {
                        add((Role::Vertex, s.x, s.y));
                    }
                    add((Role::Vertex, s.x, s.y + 1));
                }
            }
        }
        Ok(Self { spec, sites, adj, lookup })
    }

    pub fn sites(&self) -> &[SiteId] {
        &self.sites
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn site(&self, index: usize) -> Result<SiteId, LatticeError> {
        self.sites.get(index).copied().ok_or(LatticeError::UnknownSite(index))
    }

    pub fn find(&self, role: Role, x: usize, y: usize) -> Option<usize> {
        self.lookup.get(&(role, x, y)).copied()
    }

    pub fn neighbors(&self, index: usize) -> Result<&[usize], LatticeError> {
        self.adj.get(index).map(|v| v.as_slice()).ok_or(LatticeError::UnknownSite(index))
    }

    pub fn sublattice(&self, index: usize) -> Sublattice {
        let s = self.sites[index];
        match s.role {
            Role::Vertex => Sublattice::Spin,
            Role::HorizontalEdge | Role::VerticalEdge => Sublattice::Coupling,
            Role::Plain => {
                if (s.x + s.y) % 2 == 1 {
                    Sublattice::Spin
                } else {
                    Sublattice::Coupling
                }
            }
        }
    }

    /// Unmeasured top-row sites in enumeration order.
    pub fn boundary_sites(&self) -> Vec<usize> {
        self.sites.iter().filter(|s| s.boundary).map(|s| s.index).collect()
    }

    /// Bulk (measured) sites in enumeration order.
    pub fn bulk_sites(&self) -> Vec<usize> {
        self.sites.iter().filter(|s| !s.boundary).map(|s| s.index).collect()
    }

    /// All bonds `(a, b)` with `a < b`, ordered by `a` then by neighbor order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (a, nb) in self.adj.iter().enumerate() {
            for &b in nb {
                if a < b {
                    out.push((a, b));
                }
            }
        }
        out
    }
}

pub fn enumerate_sites(spec: LatticeSpec) -> Result<Vec<SiteId>, LatticeError> {
    Ok(Lattice::new(spec)?.sites)
}

pub fn boundary_sites(spec: LatticeSpec) -> Result<Vec<SiteId>, LatticeError> {
    let lat = Lattice::new(spec)?;
    Ok(lat.boundary_sites().into_iter().map(|i| lat.sites[i]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_counts_and_wrap() {
        let lat = Lattice::new(LatticeSpec::square(3, 2).periodic()).unwrap();
        assert_eq!(lat.len(), 6);
        let s = lat.find(Role::Plain, 2, 1).unwrap();
        let r = lat.find(Role::Plain, 0, 1).unwrap();
        assert!(lat.neighbors(s).unwrap().contains(&r));
        let sq = Lattice::new(LatticeSpec::square(2, 2)).unwrap();
        assert_eq!(sq.len(), 4);
        assert_eq!(sq.neighbors(0).unwrap().len(), 2);
    }

    #[test]
    fn lieb_counts() {
        let lat = Lattice::new(LatticeSpec::lieb(2, 2, Bottom::Smooth)).unwrap();
        assert_eq!(lat.len(), 2 * 2 + 1 * 2 + 2 * 1);
        for lx in 2..6 {
            for ly in 2..5 {
                let l = Lattice::new(LatticeSpec::lieb(lx, ly, Bottom::Smooth)).unwrap();
                assert_eq!(l.len(), lx * ly + (lx - 1) * ly + lx * (ly - 1));
                let r = Lattice::new(LatticeSpec::lieb(lx, ly, Bottom::Rough)).unwrap();
                assert_eq!(r.len(), l.len() + lx);
            }
        }
    }

    #[test]
    fn lieb_boundary() {
        let b = boundary_sites(LatticeSpec::lieb(3, 3, Bottom::Smooth)).unwrap();
        assert_eq!(b.len(), 5);
        assert_eq!(b.iter().filter(|s| s.role == Role::Vertex).count(), 3);
        let p = boundary_sites(LatticeSpec::lieb(3, 3, Bottom::Smooth).periodic()).unwrap();
        assert_eq!(p.len(), 6);
        assert_eq!(boundary_sites(LatticeSpec::square(4, 4)).unwrap().len(), 4);
    }

    #[test]
    fn lieb_edges_have_two_vertices() {
        let lat = Lattice::new(LatticeSpec::lieb(3, 3, Bottom::Smooth).periodic()).unwrap();
        for s in lat.sites() {
            let nb = lat.neighbors(s.index).unwrap();
            if s.role != Role::Vertex {
                assert_eq!(nb.len(), 2);
                assert!(nb.iter().all(|&j| lat.sites()[j].role == Role::Vertex));
            }
        }
    }

    #[test]
    fn sublattice_convention() {
        let lat = Lattice::new(LatticeSpec::square(3, 3)).unwrap();
        assert_eq!(lat.sublattice(lat.find(Role::Plain, 0, 1).unwrap()), Sublattice::Spin);
        assert_eq!(lat.sublattice(lat.find(Role::Plain, 1, 1).unwrap()), Sublattice::Coupling);
    }

    #[test]
    fn invalid_specs() {
        assert!(Lattice::new(LatticeSpec::square(1, 3)).is_err());
        assert!(Lattice::new(LatticeSpec::square(2, 3).periodic()).is_err());
        let mut s = LatticeSpec::square(3, 3);
        s.bottom = Bottom::Rough;
        assert_eq!(s.validate(), Err(LatticeError::RoughSquare));
    }
}
