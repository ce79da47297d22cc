//! Layered circuit representation and the five-block variational ansatz.
//!
//! Circuits alternate single-qubit Y-rotation layers with two patterns of CZ
//! layers (even bonds / odd bonds, plus the ring-closing pair under periodic
//! boundaries). The equivalence-preserving passes trade the terminal CZ layer
//! for a conjugated observable and collapse the projection circuit's
//! CZ-X-CZ sandwich into a single Pauli-Y layer.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Boundary, CutConfig, ModelParams, Spin};
use crate::pauli::{PauliError, PauliSum};

#[derive(Debug, Error, PartialEq)]
pub enum CircuitError {
    #[error("CZ layer pairs must be disjoint (site {0} repeated)")]
    OverlappingPairs(usize),
    #[error("periodic ansatz needs an even number of sites, got {0}")]
    OddPbc(usize),
    #[error("schedule must define all 5 blocks")]
    IncompleteSchedule,
    #[error("last layer is not a CZ layer")]
    LastLayerNotCz,
    #[error(transparent)]
    Pauli(#[from] PauliError),
}

/// One gate layer. Y layers carry one angle per site (zero on sites the
/// layer does not touch); X layers list the flipped sites.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Layer {
    Y { angles: Vec<f64> },
    Cz { pairs: Vec<(usize, usize)> },
    X { sites: Vec<usize> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CircuitIR {
    pub num_sites: usize,
    pub boundary: Boundary,
    pub layers: Vec<Layer>,
}

impl CircuitIR {
    pub fn new(num_sites: usize, boundary: Boundary) -> Self {
        CircuitIR { num_sites, boundary, layers: Vec::new() }
    }

    pub fn push(&mut self, layer: Layer) -> Result<(), CircuitError> {
        if let Layer::Cz { pairs } = &layer {
            let mut seen = std::collections::HashSet::new();
            for &(a, b) in pairs {
                for s in [a, b] {
                    if !seen.insert(s) {
                        return Err(CircuitError::OverlappingPairs(s));
                    }
                }
            }
        }
        self.layers.push(layer);
        Ok(())
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn num_cz_layers(&self) -> usize {
        self.layers.iter().filter(|l| matches!(l, Layer::Cz { .. })).count()
    }

    pub fn num_y_layers(&self) -> usize {
        self.layers.iter().filter(|l| matches!(l, Layer::Y { .. })).count()
    }

    /// Reversed circuit: layer order flipped, Y angles negated; CZ and X
    /// layers are their own inverses.
    pub fn invert(&self) -> CircuitIR {
        let layers = self
            .layers
            .iter()
            .rev()
            .map(|l| match l {
                Layer::Y { angles } => Layer::Y { angles: angles.iter().map(|a| -a).collect() },
                other => other.clone(),
            })
            .collect();
        CircuitIR { num_sites: self.num_sites, boundary: self.boundary, layers }
    }

    /// Concatenation `other . self` in application order (self runs first).
    pub fn then(&self, other: &CircuitIR) -> CircuitIR {
        let mut layers = self.layers.clone();
        layers.extend(other.layers.iter().cloned());
        CircuitIR { num_sites: self.num_sites, boundary: self.boundary, layers }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("circuit serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }
}

/// CZ pattern A: even bonds (0,1), (2,3), ...
pub fn cz_pattern_a(l: usize) -> Vec<(usize, usize)> {
    (0..l.saturating_sub(1)).step_by(2).map(|i| (i, i + 1)).collect()
}

/// CZ pattern B: odd bonds (1,2), (3,4), ...; under PBC the ring-closing
/// pair (L-1, 0) is appended.
pub fn cz_pattern_b(l: usize, boundary: Boundary) -> Vec<(usize, usize)> {
    let mut pairs: Vec<(usize, usize)> = (1..l.saturating_sub(1)).step_by(2).map(|i| (i, i + 1)).collect();
    if boundary == Boundary::Pbc && l % 2 == 0 {
        pairs.push((l - 1, 0));
    }
    pairs
}

/// Which CZ pattern opens the ansatz. The published figure is read as
/// even-bonds-first; the alternative ordering is exposed because the
/// optimized schedules absorb the difference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CzPatternOrder {
    #[default]
    EvenFirst,
    OddFirst,
}

/// Site-dependent model of one block's rotation angles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum BlockSchedule {
    /// theta_i = c for every site (periodic chains).
    Uniform { c: f64 },
    /// theta_i = a (D_i + 1)^b + c with D_i the distance to the nearest
    /// boundary of the site's open segment.
    PowerLaw { a: f64, b: f64, c: f64 },
}

impl BlockSchedule {
    pub fn angle(&self, dist_to_boundary: usize) -> f64 {
        match *self {
            BlockSchedule::Uniform { c } => c,
            BlockSchedule::PowerLaw { a, b, c } => a * ((dist_to_boundary + 1) as f64).powf(b) + c,
        }
    }
}

/// Rotation-angle model for all five blocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSchedule {
    pub blocks: Vec<BlockSchedule>,
}

impl ParamSchedule {
    pub fn uniform(cs: [f64; 5]) -> Self {
        ParamSchedule { blocks: cs.iter().map(|&c| BlockSchedule::Uniform { c }).collect() }
    }

    pub fn power_law(abc: [(f64, f64, f64); 5]) -> Self {
        ParamSchedule {
            blocks: abc.iter().map(|&(a, b, c)| BlockSchedule::PowerLaw { a, b, c }).collect(),
        }
    }

    pub fn zero() -> Self {
        ParamSchedule::uniform([0.0; 5])
    }
}

/// Unpinned open segments and pinned sites of a (possibly cut) register.
#[derive(Debug, Clone, PartialEq)]
pub struct SiteLayout {
    pub l: usize,
    /// Inclusive index ranges of unpinned sites; empty when the uncut ring
    /// is fully translation invariant.
    pub segments: Vec<(usize, usize)>,
    pub pinned: Vec<(usize, Spin)>,
}

impl SiteLayout {
    pub fn from_cut(l: usize, boundary: Boundary, cut: &CutConfig) -> Self {
        let pinned = cut.pinned_sites(l);
        let severed = cut.severed_bonds(l);
        if boundary == Boundary::Obc {
            return SiteLayout { l, segments: vec![(0, l - 1)], pinned: Vec::new() };
        }
        if severed.is_empty() {
            return SiteLayout { l, segments: Vec::new(), pinned };
        }
        // walk the ring, breaking at severed bonds and pinned sites
        let pinned_set: std::collections::BTreeSet<usize> = pinned.iter().map(|&(i, _)| i).collect();
        let broken = |i: usize| severed.contains(&(i, (i + 1) % l)) || severed.contains(&((i + 1) % l, i));
        // find a starting break
        let start = (0..l)
            .find(|&i| broken(i) || pinned_set.contains(&((i + 1) % l)))
            .map(|i| (i + 1) % l)
            .unwrap_or(0);
        let mut segments = Vec::new();
        let mut cur: Option<(usize, usize)> = None;
        for k in 0..l {
            let site = (start + k) % l;
            if pinned_set.contains(&site) {
                if let Some(seg) = cur.take() {
                    segments.push(seg);
                }
                continue;
            }
            match cur {
                None => cur = Some((site, site)),
                Some((s, _)) => cur = Some((s, site)),
            }
            if broken(site) {
                if let Some(seg) = cur.take() {
                    segments.push(seg);
                }
            }
        }
        if let Some(seg) = cur.take() {
            segments.push(seg);
        }
        SiteLayout { l, segments, pinned }
    }

    /// Distance of `site` to the nearest boundary of its segment, or `None`
    /// for pinned sites. For the uncut ring every site reports distance 0;
    /// uniform schedules ignore it.
    pub fn boundary_distance(&self, site: usize) -> Option<usize> {
        if self.pinned.iter().any(|&(i, _)| i == site) {
            return None;
        }
        if self.segments.is_empty() {
            return Some(0);
        }
        for &(lo, hi) in &self.segments {
            if lo <= hi {
                if site >= lo && site <= hi {
                    return Some((site - lo).min(hi - site));
                }
            } else {
                // segment wraps around the ring end
                if site >= lo || site <= hi {
                    let from_lo = (site + self.l - lo) % self.l;
                    let from_hi = (hi + self.l - site) % self.l;
                    return Some(from_lo.min(from_hi));
                }
            }
        }
        None
    }
}

/// Builds the five-block ansatz: Y(theta) layers interleaved with four CZ
/// layers in alternating patterns. Pinned sites get a fixed angle (0 for up,
/// pi for down) in the first Y layer and are excluded from every CZ pair and
/// later Y layer.
pub fn build_ansatz(
    p: &ModelParams,
    sched: &ParamSchedule,
    cut: &CutConfig,
    order: CzPatternOrder,
) -> Result<CircuitIR, CircuitError> {
    if sched.blocks.len() != 5 {
        return Err(CircuitError::IncompleteSchedule);
    }
    let l = p.l;
    if p.boundary == Boundary::Pbc && l % 2 != 0 {
        // odd rings cannot host the alternating bond patterns consistently
        return Err(CircuitError::OddPbc(l));
    }
    let layout = SiteLayout::from_cut(l, p.boundary, cut);
    let pinned_set: std::collections::HashSet<usize> =
        layout.pinned.iter().map(|&(i, _)| i).collect();

    let keep = |pairs: Vec<(usize, usize)>| -> Vec<(usize, usize)> {
        pairs
            .into_iter()
            .filter(|&(a, b)| !pinned_set.contains(&a) && !pinned_set.contains(&b))
            .collect()
    };
    let pat_a = keep(cz_pattern_a(l));
    let pat_b = keep(cz_pattern_b(l, p.boundary));
    let (first, second) = match order {
        CzPatternOrder::EvenFirst => (pat_a, pat_b),
        CzPatternOrder::OddFirst => {
            let (a, b) = (cz_pattern_b(l, p.boundary), cz_pattern_a(l));
            (keep(a), keep(b))
        }
    };

    let mut circ = CircuitIR::new(l, p.boundary);
    for blk in 0..5 {
        let mut angles = vec![0.0; l];
        for site in 0..l {
            if let Some(&(_, spin)) = layout.pinned.iter().find(|&&(i, _)| i == site) {
                if blk == 0 {
                    angles[site] = match spin {
                        Spin::Up => 0.0,
                        Spin::Down => std::f64::consts::PI,
                    };
                }
                continue;
            }
            let d = layout.boundary_distance(site).unwrap_or(0);
            angles[site] = sched.blocks[blk].angle(d);
        }
        circ.push(Layer::Y { angles })?;
        if blk < 4 {
            let pairs = if blk % 2 == 0 { first.clone() } else { second.clone() };
            circ.push(Layer::Cz { pairs })?;
        }
    }
    Ok(circ)
}

/// Drops a terminal CZ layer and conjugates the observable through it, so
/// that expectation values are unchanged.
pub fn simplify_terminal_cz(
    c: &CircuitIR,
    obs: &PauliSum,
) -> Result<(CircuitIR, PauliSum), CircuitError> {
    match c.layers.last() {
        Some(Layer::Cz { pairs }) => {
            let obs2 = obs.conjugate_by_cz_layer(pairs)?;
            let mut out = c.clone();
            out.layers.pop();
            Ok((out, obs2))
        }
        _ => Err(CircuitError::LastLayerNotCz),
    }
}

/// Result of the sandwich-fusion pass.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FuseOutcome {
    /// The CZ-X-CZ sandwich at the reported layer index was replaced.
    Applied { at_layer: usize },
    /// No matching pattern; the circuit is returned unchanged.
    PatternNotFound,
}

fn is_perfect_matching(pairs: &[(usize, usize)], l: usize) -> bool {
    let mut covered = vec![false; l];
    for &(a, b) in pairs {
        if a >= l || b >= l || covered[a] || covered[b] {
            return false;
        }
        covered[a] = true;
        covered[b] = true;
    }
    covered.into_iter().all(|c| c)
}

/// Replaces a contiguous `CZ(P) . X(all sites) . CZ(P)` sandwich, with `P` a
/// perfect matching of the register, by a single Pauli-Y layer (encoded as a
/// Y(pi) rotation layer; the circuits agree up to the untracked global phase
/// i^L). Identity-angle Y layers inside the sandwich are tolerated and
/// elided. Returns the (possibly) rewritten circuit and a diagnostic.
pub fn fuse_sandwiched_x_layer(c: &CircuitIR) -> (CircuitIR, FuseOutcome) {
    let l = c.num_sites;
    let is_trivial_y = |layer: &Layer| match layer {
        Layer::Y { angles } => angles.iter().all(|a| a.abs() < 1e-12),
        _ => false,
    };
    for i in 0..c.layers.len() {
        let Layer::Cz { pairs: p1 } = &c.layers[i] else { continue };
        if !is_perfect_matching(p1, l) {
            continue;
        }
        // scan forward over trivial Y layers, one full X layer, more trivial
        // Y layers, then the matching CZ layer
        let mut j = i + 1;
        while j < c.layers.len() && is_trivial_y(&c.layers[j]) {
            j += 1;
        }
        let Some(Layer::X { sites }) = c.layers.get(j) else { continue };
        let mut all = sites.clone();
        all.sort_unstable();
        if all != (0..l).collect::<Vec<_>>() {
            continue;
        }
        let mut k = j + 1;
        while k < c.layers.len() && is_trivial_y(&c.layers[k]) {
            k += 1;
        }
        let Some(Layer::Cz { pairs: p2 }) = c.layers.get(k) else { continue };
        let mut s1 = p1.clone();
        let mut s2 = p2.clone();
        let norm = |v: &mut Vec<(usize, usize)>| {
            for p in v.iter_mut() {
                if p.0 > p.1 {
                    *p = (p.1, p.0);
                }
            }
            v.sort_unstable();
        };
        norm(&mut s1);
        norm(&mut s2);
        if s1 != s2 {
            continue;
        }
        // CZ (X x X) CZ = Y x Y on every matched pair, with phases cancelling
        // pairwise; as a rotation layer this is Y(pi) up to global phase.
        let mut out = CircuitIR::new(l, c.boundary);
        out.layers.extend(c.layers[..i].iter().cloned());
        out.layers.push(Layer::Y { angles: vec![std::f64::consts::PI; l] });
        out.layers.extend(c.layers[k + 1..].iter().cloned());
        return (out, FuseOutcome::Applied { at_layer: i });
    }
    (c.clone(), FuseOutcome::PatternNotFound)
}
