//! Sparse Pauli-string algebra.
//!
//! Operators are weighted products of single-site Pauli matrices, stored in a
//! canonical sparse form (identity factors are never kept). [`PauliSum`]s of
//! such terms carry Hamiltonians, symmetry projectors and measured
//! observables, and support the exact conjugation identities used by the
//! circuit simplification passes.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64 as C64;
use thiserror::Error;

/// Tolerance below which merged term coefficients are dropped.
pub const MERGE_TOL: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum PauliError {
    #[error("CZ layer has overlapping pairs: site {0} appears twice")]
    OverlappingPairs(usize),
    #[error("operator acts on site {site} but the state has only {num_sites} sites")]
    SiteOutOfRange { site: usize, num_sites: usize },
    #[error("expectation of a Hermitian operator has imaginary residue {0:e}")]
    ImaginaryResidue(f64),
    #[error("operator is not Hermitian after merging (term {0} has complex weight)")]
    NotHermitian(usize),
    #[error("parse error in line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// Single-site Pauli factor. Identity is represented by absence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize, serde::Deserialize)]
pub enum Pauli {
    X,
    Y,
    Z,
}

impl Pauli {
    pub fn as_char(self) -> char {
        match self {
            Pauli::X => 'X',
            Pauli::Y => 'Y',
            Pauli::Z => 'Z',
        }
    }
}

/// Product of two single-site Paulis: returns (phase, factor), `None` factor
/// meaning identity. E.g. X*Z = -i Y.
fn single_site_mul(a: Pauli, b: Pauli) -> (C64, Option<Pauli>) {
    use Pauli::*;
    let one = C64::new(1.0, 0.0);
    let i = C64::new(0.0, 1.0);
    match (a, b) {
        (X, X) | (Y, Y) | (Z, Z) => (one, None),
        (X, Y) => (i, Some(Z)),
        (Y, X) => (-i, Some(Z)),
        (Y, Z) => (i, Some(X)),
        (Z, Y) => (-i, Some(X)),
        (Z, X) => (i, Some(Y)),
        (X, Z) => (-i, Some(Y)),
    }
}

/// A weighted product of single-site Pauli operators.
///
/// `factors` maps site index to the non-identity Pauli on that site, so two
/// terms built in different orders compare equal.
#[derive(Debug, Clone, PartialEq)]
pub struct PauliTerm {
    pub coeff: C64,
    pub factors: BTreeMap<usize, Pauli>,
}

impl PauliTerm {
    pub fn identity(coeff: C64) -> Self {
        PauliTerm { coeff, factors: BTreeMap::new() }
    }

    /// Term `coeff * P_{s0} P_{s1} ...` from (site, pauli) pairs. Pairs on the
    /// same site are multiplied out.
    pub fn new(coeff: f64, factors: &[(usize, Pauli)]) -> Self {
        let mut t = PauliTerm::identity(C64::new(coeff, 0.0));
        for &(site, p) in factors {
            t = t.mul_single(site, p, C64::new(1.0, 0.0));
        }
        t
    }

    fn mul_single(mut self, site: usize, p: Pauli, weight: C64) -> Self {
        self.coeff *= weight;
        match self.factors.remove(&site) {
            None => {
                self.factors.insert(site, p);
            }
            Some(existing) => {
                let (phase, prod) = single_site_mul(existing, p);
                self.coeff *= phase;
                if let Some(q) = prod {
                    self.factors.insert(site, q);
                }
            }
        }
        self
    }

    /// Largest site index touched, if any.
    pub fn max_site(&self) -> Option<usize> {
        self.factors.keys().next_back().copied()
    }

    pub fn weight(&self) -> usize {
        self.factors.len()
    }

    pub fn is_identity(&self) -> bool {
        self.factors.is_empty()
    }

    /// Bit masks for fast application to computational-basis amplitudes:
    /// `P|b> = coeff * i^{nY} * (-1)^{popcount(b & phase_mask)} |b ^ flip_mask>`.
    pub fn masks(&self) -> TermMasks {
        let mut flip = 0u64;
        let mut phase = 0u64;
        let mut n_y = 0u32;
        for (&site, &p) in &self.factors {
            debug_assert!(site < 64);
            match p {
                Pauli::X => flip |= 1 << site,
                Pauli::Y => {
                    flip |= 1 << site;
                    phase |= 1 << site;
                    n_y += 1;
                }
                Pauli::Z => phase |= 1 << site,
            }
        }
        let i_pow = match n_y % 4 {
            0 => C64::new(1.0, 0.0),
            1 => C64::new(0.0, 1.0),
            2 => C64::new(-1.0, 0.0),
            _ => C64::new(0.0, -1.0),
        };
        TermMasks { flip_mask: flip, phase_mask: phase, prefactor: self.coeff * i_pow }
    }
}

/// Precomputed application masks for a [`PauliTerm`].
#[derive(Debug, Clone, Copy)]
pub struct TermMasks {
    pub flip_mask: u64,
    pub phase_mask: u64,
    /// coeff * i^{#Y}; the remaining sign is (-1)^{popcount(b & phase_mask)}.
    pub prefactor: C64,
}

impl TermMasks {
    #[inline]
    pub fn amplitude(&self, basis: u64) -> C64 {
        if (basis & self.phase_mask).count_ones() % 2 == 1 {
            -self.prefactor
        } else {
            self.prefactor
        }
    }
}

/// Product of two Pauli terms with the correct accumulated phase.
pub fn multiply(a: &PauliTerm, b: &PauliTerm) -> PauliTerm {
    let mut out = a.clone();
    out.coeff *= b.coeff;
    for (&site, &p) in &b.factors {
        out = out.mul_single(site, p, C64::new(1.0, 0.0));
    }
    out
}

/// Conjugates `op` by a layer of CZ gates: returns `U op U` with
/// `U = prod CZ(a,b)` (CZ is self-inverse). The result is again a single
/// Pauli term with unchanged coefficient magnitude.
pub fn conjugate_by_cz_layer(op: &PauliTerm, layer: &[(usize, usize)]) -> Result<PauliTerm, PauliError> {
    let mut seen = std::collections::HashSet::new();
    for &(a, b) in layer {
        for s in [a, b] {
            if !seen.insert(s) {
                return Err(PauliError::OverlappingPairs(s));
            }
        }
    }
    let mut out = PauliTerm::identity(op.coeff);
    let mut handled: std::collections::HashSet<usize> = std::collections::HashSet::new();
    for &(a, b) in layer {
        // CZ X_a CZ = X_a Z_b, CZ Y_a CZ = Y_a Z_b, CZ Z_a CZ = Z_a; same with
        // a <-> b. Conjugate each factor and multiply the images.
        for (s, o) in [(a, b), (b, a)] {
            if let Some(&p) = op.factors.get(&s) {
                handled.insert(s);
                out = out.mul_single(s, p, C64::new(1.0, 0.0));
                if p != Pauli::Z {
                    out = out.mul_single(o, Pauli::Z, C64::new(1.0, 0.0));
                }
            }
        }
    }
    for (&site, &p) in &op.factors {
        if !handled.contains(&site) {
            out = out.mul_single(site, p, C64::new(1.0, 0.0));
        }
    }
    Ok(out)
}

/// Sum of Pauli terms on a register of `num_sites` sites. Terms with equal
/// factor maps are always merged.
#[derive(Debug, Clone, PartialEq)]
pub struct PauliSum {
    terms: Vec<PauliTerm>,
    num_sites: usize,
}

impl PauliSum {
    pub fn new(num_sites: usize) -> Self {
        PauliSum { terms: Vec::new(), num_sites }
    }

    pub fn from_terms(num_sites: usize, terms: Vec<PauliTerm>) -> Result<Self, PauliError> {
        let mut s = PauliSum::new(num_sites);
        for t in terms {
            s.add_term(t)?;
        }
        Ok(s)
    }

    pub fn num_sites(&self) -> usize {
        self.num_sites
    }

    pub fn terms(&self) -> &[PauliTerm] {
        &self.terms
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    /// Adds a term, merging with an existing term of equal factors. Terms
    /// whose merged coefficient falls below [`MERGE_TOL`] are removed.
    pub fn add_term(&mut self, t: PauliTerm) -> Result<(), PauliError> {
        if let Some(site) = t.max_site() {
            if site >= self.num_sites {
                return Err(PauliError::SiteOutOfRange { site, num_sites: self.num_sites });
            }
        }
        match self.terms.iter_mut().find(|u| u.factors == t.factors) {
            Some(u) => {
                u.coeff += t.coeff;
                if u.coeff.norm() < MERGE_TOL {
                    self.terms.retain(|u| u.coeff.norm() >= MERGE_TOL);
                }
            }
            None => {
                if t.coeff.norm() >= MERGE_TOL {
                    self.terms.push(t);
                }
            }
        }
        Ok(())
    }

    pub fn scale(&mut self, k: C64) {
        for t in &mut self.terms {
            t.coeff *= k;
        }
    }

    pub fn add(&self, other: &PauliSum) -> Result<PauliSum, PauliError> {
        let mut out = self.clone();
        for t in &other.terms {
            out.add_term(t.clone())?;
        }
        Ok(out)
    }

    /// Operator product of two sums (used e.g. to verify projector idempotency).
    pub fn mul(&self, other: &PauliSum) -> Result<PauliSum, PauliError> {
        let mut out = PauliSum::new(self.num_sites.max(other.num_sites));
        for a in &self.terms {
            for b in &other.terms {
                out.add_term(multiply(a, b))?;
            }
        }
        Ok(out)
    }

    /// True when every merged coefficient is real within [`MERGE_TOL`].
    pub fn is_hermitian(&self) -> bool {
        self.terms.iter().all(|t| t.coeff.im.abs() < MERGE_TOL)
    }

    pub fn conjugate_by_cz_layer(&self, layer: &[(usize, usize)]) -> Result<PauliSum, PauliError> {
        let mut out = PauliSum::new(self.num_sites);
        for t in &self.terms {
            out.add_term(conjugate_by_cz_layer(t, layer)?)?;
        }
        Ok(out)
    }

    /// Sites of each term, for connectivity analyses.
    pub fn term_supports(&self) -> Vec<Vec<usize>> {
        self.terms.iter().map(|t| t.factors.keys().copied().collect()).collect()
    }

    /// Textual round-trip format: one term per line,
    /// `<re>,<im> <site>:<P> <site>:<P> ...`.
    pub fn to_text(&self) -> String {
        let mut lines: Vec<String> = Vec::with_capacity(self.terms.len());
        for t in &self.terms {
            let mut s = format!("{:.17e},{:.17e}", t.coeff.re, t.coeff.im);
            for (&site, &p) in &t.factors {
                s.push_str(&format!(" {}:{}", site, p.as_char()));
            }
            lines.push(s);
        }
        lines.join("\n")
    }

    pub fn from_text(num_sites: usize, text: &str) -> Result<Self, PauliError> {
        let mut sum = PauliSum::new(num_sites);
        for (ln, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let coeff_s = parts.next().ok_or_else(|| PauliError::Parse { line: ln + 1, msg: "missing coefficient".into() })?;
            let (re_s, im_s) = coeff_s.split_once(',').ok_or_else(|| PauliError::Parse {
                line: ln + 1,
                msg: "coefficient must be <re>,<im>".into(),
            })?;
            let re = f64::from_str(re_s).map_err(|e| PauliError::Parse { line: ln + 1, msg: e.to_string() })?;
            let im = f64::from_str(im_s).map_err(|e| PauliError::Parse { line: ln + 1, msg: e.to_string() })?;
            let mut factors = Vec::new();
            for tok in parts {
                let (site_s, p_s) = tok.split_once(':').ok_or_else(|| PauliError::Parse {
                    line: ln + 1,
                    msg: format!("bad factor token `{tok}`"),
                })?;
                let site = usize::from_str(site_s).map_err(|e| PauliError::Parse { line: ln + 1, msg: e.to_string() })?;
                let p = match p_s {
                    "X" => Pauli::X,
                    "Y" => Pauli::Y,
                    "Z" => Pauli::Z,
                    other => {
                        return Err(PauliError::Parse { line: ln + 1, msg: format!("unknown Pauli `{other}`") })
                    }
                };
                factors.push((site, p));
            }
            let mut t = PauliTerm::identity(C64::new(re, im));
            for (site, p) in factors {
                t = t.mul_single(site, p, C64::new(1.0, 0.0));
            }
            sum.add_term(t)?;
        }
        Ok(sum)
    }

    /// Dense matrix representation (site 0 is the least significant bit).
    /// Intended for small oracles and tests.
    pub fn to_dense(&self) -> nalgebra::DMatrix<C64> {
        let dim = 1usize << self.num_sites;
        let mut m = nalgebra::DMatrix::<C64>::zeros(dim, dim);
        for t in &self.terms {
            let masks = t.masks();
            for b in 0..dim as u64 {
                let amp = masks.amplitude(b);
                m[((b ^ masks.flip_mask) as usize, b as usize)] += amp;
            }
        }
        m
    }

    /// Applies the operator to a real amplitude vector. Only valid when every
    /// term has a real matrix representation (real coefficient, even number
    /// of Y factors); panics otherwise. This is the hot path of the dense
    /// eigensolver oracle.
    pub fn apply_real(&self, v: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for t in &self.terms {
            let masks = t.masks();
            let pre = masks.prefactor;
            assert!(pre.im.abs() < MERGE_TOL, "operator is not real");
            let pre = pre.re;
            let flip = masks.flip_mask as usize;
            let pm = masks.phase_mask;
            for b in 0..v.len() {
                let sign = if (b as u64 & pm).count_ones() % 2 == 1 { -pre } else { pre };
                out[b ^ flip] += sign * v[b];
            }
        }
    }
}

impl fmt::Display for PauliSum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_text())
    }
}
