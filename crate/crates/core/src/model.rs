//! Cluster Ising chain: Hamiltonian family, boundary and cut configurations,
//! and the spin-flip symmetry machinery.
//!
//! The chain couples nearest-neighbour ZZ bonds (weight `g`), three-site
//! cluster terms ZXZ (weight `J`) and a transverse field (weight `h`). At
//! `J = g, h = 0` the model sits at a self-dual critical point whose boundary
//! physics is probed through "physical cuts": severed ring bonds with the two
//! adjacent spins either pinned to a product state or left free.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pauli::{Pauli, PauliSum, PauliTerm};

/// Pinning field strength for cut spins, matching the DMRG penalty scale.
pub const PINNING_FIELD: f64 = 50.0;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("chain needs at least 3 sites, got {0}")]
    TooFewSites(usize),
    #[error("cut configurations require periodic boundaries")]
    CutNeedsPbc,
    #[error("cut b needs an even number of sites, got {0}")]
    CutBOddSize(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    Pbc,
    Obc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Spin {
    Up,
    Down,
}

impl Spin {
    pub fn sign(self) -> f64 {
        match self {
            Spin::Up => 1.0,
            Spin::Down => -1.0,
        }
    }
}

/// Boundary condition applied at one cut position.
///
/// `Free` severs the couplings across the bond without pinning the adjacent
/// spins; it realizes the control configuration for the trivial critical
/// point, where pinned cuts would not distinguish the two models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CutKind {
    #[default]
    None,
    Free,
    Up,
    Down,
}

impl CutKind {
    pub fn is_active(self) -> bool {
        self != CutKind::None
    }

    pub fn pin(self) -> Option<Spin> {
        match self {
            CutKind::Up => Some(Spin::Up),
            CutKind::Down => Some(Spin::Down),
            _ => None,
        }
    }
}

/// Cuts at the two fixed positions: cut a severs the ring bond between sites
/// L-1 and 0, cut b the bond between sites L/2-1 and L/2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CutConfig {
    pub cut_a: CutKind,
    pub cut_b: CutKind,
}

impl CutConfig {
    pub const UNCUT: CutConfig = CutConfig { cut_a: CutKind::None, cut_b: CutKind::None };

    pub fn one_cut(a: CutKind) -> Self {
        CutConfig { cut_a: a, cut_b: CutKind::None }
    }

    pub fn two_cuts(a: CutKind, b: CutKind) -> Self {
        CutConfig { cut_a: a, cut_b: b }
    }

    /// Severed ring bonds `(i, i+1 mod L)` for a chain of `l` sites.
    pub fn severed_bonds(&self, l: usize) -> Vec<(usize, usize)> {
        let mut v = Vec::new();
        if self.cut_a.is_active() {
            v.push((l - 1, 0));
        }
        if self.cut_b.is_active() {
            v.push((l / 2 - 1, l / 2));
        }
        v
    }

    /// Pinned sites with their spin directions.
    pub fn pinned_sites(&self, l: usize) -> Vec<(usize, Spin)> {
        let mut v = Vec::new();
        if let Some(s) = self.cut_a.pin() {
            v.push((0, s));
            v.push((l - 1, s));
        }
        if let Some(s) = self.cut_b.pin() {
            v.push((l / 2 - 1, s));
            v.push((l / 2, s));
        }
        v.sort_by_key(|&(i, _)| i);
        v
    }
}

/// Couplings and geometry of one chain instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub l: usize,
    /// Cluster (ZXZ) coupling.
    pub j: f64,
    /// Ising (ZZ) coupling.
    pub g: f64,
    /// Transverse field.
    pub h: f64,
    pub boundary: Boundary,
}

impl ModelParams {
    pub fn new(l: usize, j: f64, g: f64, h: f64, boundary: Boundary) -> Result<Self, ModelError> {
        if l < 3 {
            return Err(ModelError::TooFewSites(l));
        }
        Ok(ModelParams { l, j, g, h, boundary })
    }

    /// Critical cluster Ising point, J = g = 1, h = 0.
    pub fn critical_ci(l: usize, boundary: Boundary) -> Self {
        ModelParams::new(l, 1.0, 1.0, 0.0, boundary).expect("l >= 3")
    }

    /// Critical transverse-field Ising point, J = 0, g = h = 1.
    pub fn critical_tfi(l: usize, boundary: Boundary) -> Self {
        ModelParams::new(l, 0.0, 1.0, 1.0, boundary).expect("l >= 3")
    }
}

/// Builds the chain Hamiltonian
/// `H = -g sum Z_j Z_{j+1} - J sum Z_{j-1} X_j Z_{j+1} - h sum X_j`.
pub fn build_hamiltonian(p: &ModelParams) -> Result<PauliSum, ModelError> {
    if p.l < 3 {
        return Err(ModelError::TooFewSites(p.l));
    }
    let mut h = PauliSum::new(p.l);
    let bonds = match p.boundary {
        Boundary::Pbc => p.l,
        Boundary::Obc => p.l - 1,
    };
    for j in 0..bonds {
        h.add_term(PauliTerm::new(-p.g, &[(j, Pauli::Z), ((j + 1) % p.l, Pauli::Z)]))
            .expect("in range");
    }
    let clusters = match p.boundary {
        Boundary::Pbc => p.l,
        Boundary::Obc => p.l - 2,
    };
    for j in 0..clusters {
        h.add_term(PauliTerm::new(
            -p.j,
            &[(j, Pauli::Z), ((j + 1) % p.l, Pauli::X), ((j + 2) % p.l, Pauli::Z)],
        ))
        .expect("in range");
    }
    if p.h != 0.0 {
        for j in 0..p.l {
            h.add_term(PauliTerm::new(-p.h, &[(j, Pauli::X)])).expect("in range");
        }
    }
    Ok(h)
}

/// Builds the Hamiltonian of a cut ring: every term straddling an active
/// cut's bond is removed; pinned sites lose their X-containing terms and gain
/// a strong polarizing field `-PINNING_FIELD * s * Z`, so they are exact
/// product-state factors of the ground state. Returns the operator together
/// with the pinned-site assignment.
pub fn build_cut_hamiltonian(
    p: &ModelParams,
    c: &CutConfig,
) -> Result<(PauliSum, Vec<(usize, Spin)>), ModelError> {
    if p.boundary != Boundary::Pbc && (c.cut_a.is_active() || c.cut_b.is_active()) {
        return Err(ModelError::CutNeedsPbc);
    }
    if c.cut_b.is_active() && p.l % 2 != 0 {
        return Err(ModelError::CutBOddSize(p.l));
    }
    let severed = c.severed_bonds(p.l);
    let pinned = c.pinned_sites(p.l);
    let pinned_set: std::collections::HashSet<usize> = pinned.iter().map(|&(i, _)| i).collect();

    let crosses = |run: &[usize]| -> bool {
        run.windows(2).any(|w| severed.contains(&(w[0], w[1])) || severed.contains(&(w[1], w[0])))
    };

    let mut h = PauliSum::new(p.l);
    for j in 0..p.l {
        let run = [j, (j + 1) % p.l];
        if crosses(&run) {
            continue;
        }
        h.add_term(PauliTerm::new(-p.g, &[(run[0], Pauli::Z), (run[1], Pauli::Z)]))
            .expect("in range");
    }
    for j in 0..p.l {
        let run = [j, (j + 1) % p.l, (j + 2) % p.l];
        if crosses(&run) || pinned_set.contains(&run[1]) {
            continue;
        }
        h.add_term(PauliTerm::new(
            -p.j,
            &[(run[0], Pauli::Z), (run[1], Pauli::X), (run[2], Pauli::Z)],
        ))
        .expect("in range");
    }
    if p.h != 0.0 {
        for j in 0..p.l {
            if pinned_set.contains(&j) {
                continue;
            }
            h.add_term(PauliTerm::new(-p.h, &[(j, Pauli::X)])).expect("in range");
        }
    }
    for &(site, spin) in &pinned {
        h.add_term(PauliTerm::new(-PINNING_FIELD * spin.sign(), &[(site, Pauli::Z)]))
            .expect("in range");
    }
    Ok((h, pinned))
}

/// Spin-flip symmetry generator `O_X = prod_j X_j`.
pub fn spin_flip_operator(l: usize) -> PauliSum {
    let factors: Vec<(usize, Pauli)> = (0..l).map(|j| (j, Pauli::X)).collect();
    PauliSum::from_terms(l, vec![PauliTerm::new(1.0, &factors)]).expect("in range")
}

/// Z2 projector `P = (I + prod_j X_j) / 2` onto the spin-flip-even sector.
pub fn symmetry_projector(l: usize) -> PauliSum {
    let mut p = spin_flip_operator(l);
    p.add_term(PauliTerm::identity(num_complex::Complex64::new(1.0, 0.0)))
        .expect("in range");
    p.scale(num_complex::Complex64::new(0.5, 0.0));
    p
}

/// Connected components of the unpinned sites under the term-support graph
/// of `h`. Used to check that a doubly cut ring splits into two segments.
pub fn unpinned_components(h: &PauliSum, l: usize, pinned: &[(usize, Spin)]) -> usize {
    let pinned_set: std::collections::HashSet<usize> = pinned.iter().map(|&(i, _)| i).collect();
    let mut parent: Vec<usize> = (0..l).collect();
    fn find(parent: &mut Vec<usize>, i: usize) -> usize {
        if parent[i] != i {
            let r = find(parent, parent[i]);
            parent[i] = r;
        }
        parent[i]
    }
    for support in h.term_supports() {
        let free: Vec<usize> = support.into_iter().filter(|s| !pinned_set.contains(s)).collect();
        for w in free.windows(2) {
            let (a, b) = (find(&mut parent, w[0]), find(&mut parent, w[1]));
            if a != b {
                parent[a] = b;
            }
        }
    }
    let mut roots = std::collections::HashSet::new();
    for i in 0..l {
        if !pinned_set.contains(&i) {
            let r = find(&mut parent, i);
            roots.insert(r);
        }
    }
    roots.len()
}
