//! Dense statevector and density-operator simulation of layered circuits,
//! the inverse-circuit overlap protocol, and randomized-basis sampling.
//!
//! Site `s` is bit `s` of the amplitude index (site 0 least significant).

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circuit::{CircuitIR, Layer};
use crate::pauli::PauliSum;

/// Largest register simulated as a dense pure state.
pub const DENSE_LIMIT: usize = 24;
/// Largest register simulated as a dense density operator.
pub const DENSITY_LIMIT: usize = 12;

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("register of {0} sites exceeds the dense limit {1}")]
    OverLimit(usize, usize),
    #[error("registers must match: {0} vs {1} sites")]
    SizeMismatch(usize, usize),
    #[error("expectation of Hermitian operator has imaginary residue {0:e}")]
    ImaginaryResidue(f64),
    #[error("noise probability {0} outside [0, 1]")]
    BadProbability(f64),
}

/// Dense amplitude vector of a pure state.
#[derive(Debug, Clone)]
pub struct DenseState {
    pub amps: Vec<C64>,
    pub num_sites: usize,
}

impl DenseState {
    pub fn zero_state(l: usize) -> Self {
        assert!(l <= DENSE_LIMIT);
        let mut amps = vec![C64::new(0.0, 0.0); 1 << l];
        amps[0] = C64::new(1.0, 0.0);
        DenseState { amps, num_sites: l }
    }

    pub fn from_real(v: &nalgebra::DVector<f64>, l: usize) -> Self {
        assert_eq!(v.len(), 1 << l);
        DenseState { amps: v.iter().map(|&x| C64::new(x, 0.0)).collect(), num_sites: l }
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn inner(&self, other: &DenseState) -> C64 {
        self.amps.iter().zip(&other.amps).map(|(a, b)| a.conj() * b).sum()
    }

    pub fn apply_y(&mut self, site: usize, theta: f64) {
        let (c, s) = ((theta / 2.0).cos(), (theta / 2.0).sin());
        let bit = 1usize << site;
        for b in 0..self.amps.len() {
            if b & bit == 0 {
                let (a0, a1) = (self.amps[b], self.amps[b | bit]);
                self.amps[b] = c * a0 - s * a1;
                self.amps[b | bit] = s * a0 + c * a1;
            }
        }
    }

    pub fn apply_x(&mut self, site: usize) {
        let bit = 1usize << site;
        for b in 0..self.amps.len() {
            if b & bit == 0 {
                self.amps.swap(b, b | bit);
            }
        }
    }

    pub fn apply_1q(&mut self, site: usize, u: &[[C64; 2]; 2]) {
        let bit = 1usize << site;
        for b in 0..self.amps.len() {
            if b & bit == 0 {
                let (a0, a1) = (self.amps[b], self.amps[b | bit]);
                self.amps[b] = u[0][0] * a0 + u[0][1] * a1;
                self.amps[b | bit] = u[1][0] * a0 + u[1][1] * a1;
            }
        }
    }

    pub fn apply_cz_pair(&mut self, a: usize, b: usize) {
        let mask = (1usize << a) | (1usize << b);
        for idx in 0..self.amps.len() {
            if idx & mask == mask {
                self.amps[idx] = -self.amps[idx];
            }
        }
    }

    /// Controlled-phase by `phi` on a pair (used for coherent CZ errors).
    pub fn apply_cp_pair(&mut self, a: usize, b: usize, phi: f64) {
        let mask = (1usize << a) | (1usize << b);
        let ph = C64::from_polar(1.0, phi);
        for idx in 0..self.amps.len() {
            if idx & mask == mask {
                self.amps[idx] *= ph;
            }
        }
    }

    pub fn apply_layer(&mut self, layer: &Layer) {
        match layer {
            Layer::Y { angles } => {
                for (site, &th) in angles.iter().enumerate() {
                    if th != 0.0 {
                        self.apply_y(site, th);
                    }
                }
            }
            Layer::Cz { pairs } => {
                for &(a, b) in pairs {
                    self.apply_cz_pair(a, b);
                }
            }
            Layer::X { sites } => {
                for &s in sites {
                    self.apply_x(s);
                }
            }
        }
    }

    pub fn probability_of(&self, basis: u64) -> f64 {
        self.amps[basis as usize].norm_sqr()
    }

    /// `<psi|op|psi>` as a complex number.
    pub fn expectation_c64(&self, op: &PauliSum) -> Result<C64, SimError> {
        if op.num_sites() != self.num_sites {
            return Err(SimError::SizeMismatch(op.num_sites(), self.num_sites));
        }
        let mut acc = C64::new(0.0, 0.0);
        for t in op.terms() {
            let m = t.masks();
            let flip = m.flip_mask as usize;
            let mut term_acc = C64::new(0.0, 0.0);
            for b in 0..self.amps.len() {
                if self.amps[b] != C64::new(0.0, 0.0) {
                    term_acc += self.amps[b ^ flip].conj() * m.amplitude(b as u64) * self.amps[b];
                }
            }
            acc += term_acc;
        }
        Ok(acc)
    }

    /// Real expectation of a Hermitian operator; imaginary residue above
    /// 1e-10 is an error.
    pub fn expectation(&self, op: &PauliSum) -> Result<f64, SimError> {
        let v = self.expectation_c64(op)?;
        if v.im.abs() > 1e-10 {
            return Err(SimError::ImaginaryResidue(v.im));
        }
        Ok(v.re)
    }
}

/// Noise channels attached to the entangling gates.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// Two-qubit depolarizing rate applied after every CZ pair.
    pub p_cz: f64,
    /// State-level depolarizing mixed in after the full circuit.
    pub p_global: f64,
    /// Coherent controlled-phase overrotation after every CZ pair.
    pub cz_phase_error: f64,
}

impl NoiseSpec {
    pub fn depolarizing(p_cz: f64) -> Self {
        NoiseSpec { p_cz, p_global: 0.0, cz_phase_error: 0.0 }
    }

    pub fn is_noiseless(&self) -> bool {
        self.p_cz == 0.0 && self.p_global == 0.0 && self.cz_phase_error == 0.0
    }

    pub fn validate(&self) -> Result<(), SimError> {
        for p in [self.p_cz, self.p_global] {
            if !(0.0..=1.0).contains(&p) {
                return Err(SimError::BadProbability(p));
            }
        }
        Ok(())
    }
}

/// Runs a circuit on |0...0> without noise.
pub fn run(c: &CircuitIR) -> Result<DenseState, SimError> {
    if c.num_sites > DENSE_LIMIT {
        return Err(SimError::OverLimit(c.num_sites, DENSE_LIMIT));
    }
    let mut st = DenseState::zero_state(c.num_sites);
    for layer in &c.layers {
        st.apply_layer(layer);
    }
    Ok(st)
}

/// Dense density operator for the noisy path.
#[derive(Debug, Clone)]
pub struct DensityOp {
    pub mat: DMatrix<C64>,
    pub num_sites: usize,
}

impl DensityOp {
    pub fn zero_state(l: usize) -> Self {
        assert!(l <= DENSITY_LIMIT);
        let dim = 1 << l;
        let mut mat = DMatrix::zeros(dim, dim);
        mat[(0, 0)] = C64::new(1.0, 0.0);
        DensityOp { mat, num_sites: l }
    }

    pub fn from_pure(st: &DenseState) -> Self {
        let dim = st.amps.len();
        let mut mat = DMatrix::zeros(dim, dim);
        for i in 0..dim {
            for j in 0..dim {
                mat[(i, j)] = st.amps[i] * st.amps[j].conj();
            }
        }
        DensityOp { mat, num_sites: st.num_sites }
    }

    pub fn purity(&self) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.mat.nrows() {
            for j in 0..self.mat.ncols() {
                acc += (self.mat[(i, j)] * self.mat[(j, i)]).re;
            }
        }
        acc
    }

    fn map_columns(&mut self, f: impl Fn(&mut [C64])) {
        let dim = self.mat.nrows();
        let mut col = vec![C64::new(0.0, 0.0); dim];
        for c in 0..dim {
            for r in 0..dim {
                col[r] = self.mat[(r, c)];
            }
            f(&mut col);
            for r in 0..dim {
                self.mat[(r, c)] = col[r];
            }
        }
        // rows transform with the conjugate
        let mut row = vec![C64::new(0.0, 0.0); dim];
        for r in 0..dim {
            for c in 0..dim {
                row[c] = self.mat[(r, c)].conj();
            }
            f(&mut row);
            for c in 0..dim {
                self.mat[(r, c)] = row[c].conj();
            }
        }
    }

    pub fn apply_layer(&mut self, layer: &Layer) {
        let l = self.num_sites;
        match layer {
            Layer::Y { angles } => {
                let angles = angles.clone();
                self.map_columns(|col| {
                    let mut st = DenseState { amps: col.to_vec(), num_sites: l };
                    for (site, &th) in angles.iter().enumerate() {
                        if th != 0.0 {
                            st.apply_y(site, th);
                        }
                    }
                    col.copy_from_slice(&st.amps);
                });
            }
            Layer::Cz { pairs } => {
                let pairs = pairs.clone();
                self.map_columns(|col| {
                    let mut st = DenseState { amps: col.to_vec(), num_sites: l };
                    for &(a, b) in &pairs {
                        st.apply_cz_pair(a, b);
                    }
                    col.copy_from_slice(&st.amps);
                });
            }
            Layer::X { sites } => {
                let sites = sites.clone();
                self.map_columns(|col| {
                    let mut st = DenseState { amps: col.to_vec(), num_sites: l };
                    for &s in &sites {
                        st.apply_x(s);
                    }
                    col.copy_from_slice(&st.amps);
                });
            }
        }
    }

    pub fn apply_cp_pair(&mut self, a: usize, b: usize, phi: f64) {
        let l = self.num_sites;
        self.map_columns(|col| {
            let mut st = DenseState { amps: col.to_vec(), num_sites: l };
            st.apply_cp_pair(a, b, phi);
            col.copy_from_slice(&st.amps);
        });
    }

    /// Two-qubit depolarizing channel: with weight `p` the pair is replaced
    /// by the maximally mixed state.
    pub fn depolarize_pair(&mut self, a: usize, b: usize, p: f64) {
        if p == 0.0 {
            return;
        }
        let dim = self.mat.nrows();
        let mask_a = 1usize << a;
        let mask_b = 1usize << b;
        // partial trace over the pair, re-embedded as I/4 x rho_rest
        let mut traced = DMatrix::<C64>::zeros(dim, dim);
        for i in 0..dim {
            for j in 0..dim {
                if (i & (mask_a | mask_b)) != (j & (mask_a | mask_b)) {
                    continue;
                }
                // sum over the pair settings with rest indices fixed
                let rest_i = i & !(mask_a | mask_b);
                let rest_j = j & !(mask_a | mask_b);
                let mut acc = C64::new(0.0, 0.0);
                for pa in 0..2usize {
                    for pb in 0..2usize {
                        let pair_bits = pa * mask_a + pb * mask_b;
                        acc += self.mat[(rest_i | pair_bits, rest_j | pair_bits)];
                    }
                }
                traced[(i, j)] = acc * C64::new(0.25, 0.0);
            }
        }
        self.mat = self.mat.clone() * C64::new(1.0 - p, 0.0) + traced * C64::new(p, 0.0);
    }

    /// Global depolarizing: rho -> (1-p) rho + p I/d.
    pub fn depolarize_global(&mut self, p: f64) {
        if p == 0.0 {
            return;
        }
        let dim = self.mat.nrows();
        let mix = C64::new(p / dim as f64, 0.0);
        self.mat *= C64::new(1.0 - p, 0.0);
        for i in 0..dim {
            self.mat[(i, i)] += mix;
        }
    }

    pub fn probability_of(&self, basis: u64) -> f64 {
        self.mat[(basis as usize, basis as usize)].re
    }

    pub fn expectation(&self, op: &PauliSum) -> Result<f64, SimError> {
        if op.num_sites() != self.num_sites {
            return Err(SimError::SizeMismatch(op.num_sites(), self.num_sites));
        }
        let mut acc = C64::new(0.0, 0.0);
        for t in op.terms() {
            let m = t.masks();
            let flip = m.flip_mask as usize;
            for b in 0..self.mat.nrows() {
                // Tr(rho P) = sum_b <b|rho P|b> = sum_b rho[b, b^flip] amp(b^flip)
                let src = b ^ flip;
                acc += self.mat[(b, src)] * m.amplitude(src as u64);
            }
        }
        if acc.im.abs() > 1e-9 {
            return Err(SimError::ImaginaryResidue(acc.im));
        }
        Ok(acc.re)
    }
}

/// Runs a circuit under the noise model on the density-operator path.
pub fn run_noisy(c: &CircuitIR, noise: &NoiseSpec) -> Result<DensityOp, SimError> {
    noise.validate()?;
    if c.num_sites > DENSITY_LIMIT {
        return Err(SimError::OverLimit(c.num_sites, DENSITY_LIMIT));
    }
    let mut rho = DensityOp::zero_state(c.num_sites);
    for layer in &c.layers {
        rho.apply_layer(layer);
        if let Layer::Cz { pairs } = layer {
            for &(a, b) in pairs {
                if noise.cz_phase_error != 0.0 {
                    rho.apply_cp_pair(a, b, noise.cz_phase_error);
                }
                rho.depolarize_pair(a, b, noise.p_cz);
            }
        }
    }
    rho.depolarize_global(noise.p_global);
    Ok(rho)
}

/// Unbiased trajectory sampling of the CZ depolarizing channel for registers
/// beyond the density-operator limit: with probability `p_cz` a uniformly
/// random two-qubit Pauli is inserted after the CZ. Returns the mean
/// probability of returning to |0...0>.
pub fn run_noisy_trajectories_p0(
    c: &CircuitIR,
    noise: &NoiseSpec,
    trajectories: usize,
    seed: u64,
) -> Result<f64, SimError> {
    use rand::SeedableRng;
    noise.validate()?;
    if c.num_sites > DENSE_LIMIT {
        return Err(SimError::OverLimit(c.num_sites, DENSE_LIMIT));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut acc = 0.0;
    for _ in 0..trajectories {
        let mut st = DenseState::zero_state(c.num_sites);
        for layer in &c.layers {
            st.apply_layer(layer);
            if let Layer::Cz { pairs } = layer {
                for &(a, b) in pairs {
                    if noise.cz_phase_error != 0.0 {
                        st.apply_cp_pair(a, b, noise.cz_phase_error);
                    }
                    if noise.p_cz > 0.0 && rng.gen::<f64>() < noise.p_cz {
                        for site in [a, b] {
                            match rng.gen_range(0..4) {
                                0 => {}
                                1 => st.apply_x(site),
                                2 => {
                                    // Y = i X Z up to global phase
                                    st.apply_1q(site, &Y_PAULI);
                                }
                                _ => st.apply_1q(site, &Z_PAULI),
                            }
                        }
                    }
                }
            }
        }
        let mut p0 = st.probability_of(0);
        if noise.p_global > 0.0 {
            p0 = (1.0 - noise.p_global) * p0 + noise.p_global / st.amps.len() as f64;
        }
        acc += p0;
    }
    Ok(acc / trajectories as f64)
}

const Y_PAULI: [[C64; 2]; 2] = [
    [C64::new(0.0, 0.0), C64::new(0.0, -1.0)],
    [C64::new(0.0, 1.0), C64::new(0.0, 0.0)],
];
const Z_PAULI: [[C64; 2]; 2] = [
    [C64::new(1.0, 0.0), C64::new(0.0, 0.0)],
    [C64::new(0.0, 0.0), C64::new(-1.0, 0.0)],
];

/// How the Z2 projection enters the overlap protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Projection {
    /// No operator insertion: measures |<ref|prep>|^2.
    None,
    /// Circuit-level insertion of the X layer between the two circuits:
    /// measures |<ref|O_X|prep>|^2.
    SpinFlip,
}

/// Builds the overlap-protocol circuit U_ref^dagger (O) U_prep.
pub fn overlap_circuit(u_prep: &CircuitIR, u_ref: &CircuitIR, proj: Projection) -> Result<CircuitIR, SimError> {
    if u_prep.num_sites != u_ref.num_sites {
        return Err(SimError::SizeMismatch(u_prep.num_sites, u_ref.num_sites));
    }
    let mut mid = u_prep.clone();
    if proj == Projection::SpinFlip {
        mid.layers.push(Layer::X { sites: (0..u_prep.num_sites).collect() });
    }
    Ok(mid.then(&u_ref.invert()))
}

/// Runs the overlap protocol and returns the measured probability of the
/// all-zeros outcome; its square root is the overlap magnitude.
pub fn overlap_protocol(
    u_prep: &CircuitIR,
    u_ref: &CircuitIR,
    proj: Projection,
    noise: &NoiseSpec,
) -> Result<f64, SimError> {
    let circ = overlap_circuit(u_prep, u_ref, proj)?;
    if noise.is_noiseless() {
        Ok(run(&circ)?.probability_of(0))
    } else if circ.num_sites <= DENSITY_LIMIT {
        Ok(run_noisy(&circ, noise)?.probability_of(0))
    } else {
        run_noisy_trajectories_p0(&circ, noise, 400, 0x5eed)
    }
}

/// Measurement basis per site.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BasisAxis {
    X,
    Y,
    Z,
}

impl BasisAxis {
    pub fn as_char(self) -> char {
        match self {
            BasisAxis::X => 'X',
            BasisAxis::Y => 'Y',
            BasisAxis::Z => 'Z',
        }
    }

    /// Single-qubit rotation mapping this axis onto Z.
    pub fn rotation(self) -> Option<[[C64; 2]; 2]> {
        let inv_sqrt2 = 1.0 / 2.0f64.sqrt();
        match self {
            BasisAxis::Z => None,
            BasisAxis::X => Some([
                [C64::new(inv_sqrt2, 0.0), C64::new(inv_sqrt2, 0.0)],
                [C64::new(inv_sqrt2, 0.0), C64::new(-inv_sqrt2, 0.0)],
            ]),
            // H S^dagger maps Y to Z
            BasisAxis::Y => Some([
                [C64::new(inv_sqrt2, 0.0), C64::new(0.0, -inv_sqrt2)],
                [C64::new(inv_sqrt2, 0.0), C64::new(0.0, inv_sqrt2)],
            ]),
        }
    }
}

/// Rotates a copy of the state into the product basis and returns the Born
/// distribution over computational outcomes.
pub fn born_distribution(state: &DenseState, bases: &[BasisAxis]) -> Vec<f64> {
    assert_eq!(bases.len(), state.num_sites);
    let mut st = state.clone();
    for (site, b) in bases.iter().enumerate() {
        if let Some(u) = b.rotation() {
            st.apply_1q(site, &u);
        }
    }
    st.amps.iter().map(|a| a.norm_sqr()).collect()
}

/// Multinomial sampling of `shots` outcomes; returns a sorted sparse
/// histogram of (bitstring, count).
pub fn sample_distribution(probs: &[f64], shots: u32, rng: &mut ChaCha8Rng) -> Vec<(u64, u32)> {
    let mut cdf = Vec::with_capacity(probs.len());
    let mut acc = 0.0;
    for &p in probs {
        acc += p.max(0.0);
        cdf.push(acc);
    }
    let total = acc;
    let mut hist: std::collections::BTreeMap<u64, u32> = std::collections::BTreeMap::new();
    for _ in 0..shots {
        let x = rng.gen::<f64>() * total;
        let idx = cdf.partition_point(|&c| c < x).min(probs.len() - 1);
        *hist.entry(idx as u64).or_insert(0) += 1;
    }
    hist.into_iter().collect()
}

/// Samples a state in the given product basis.
pub fn sample(state: &DenseState, bases: &[BasisAxis], shots: u32, rng: &mut ChaCha8Rng) -> Vec<(u64, u32)> {
    sample_distribution(&born_distribution(state, bases), shots, rng)
}

/// A randomized-measurement dataset: per-setting product bases over the full
/// register with sampled histograms.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MeasurementDataset {
    pub num_sites: usize,
    pub shots: u32,
    pub settings: Vec<Vec<BasisAxis>>,
    pub histograms: Vec<Vec<(u64, u32)>>,
}

impl MeasurementDataset {
    /// Draws `n_settings` uniformly random product bases and samples the
    /// state in each.
    pub fn collect(state: &DenseState, n_settings: usize, shots: u32, seed: u64) -> Self {
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let l = state.num_sites;
        let mut settings = Vec::with_capacity(n_settings);
        let mut histograms = Vec::with_capacity(n_settings);
        for _ in 0..n_settings {
            let bases: Vec<BasisAxis> = (0..l)
                .map(|_| match rng.gen_range(0..3) {
                    0 => BasisAxis::X,
                    1 => BasisAxis::Y,
                    _ => BasisAxis::Z,
                })
                .collect();
            let hist = sample(state, &bases, shots, &mut rng);
            settings.push(bases);
            histograms.push(hist);
        }
        MeasurementDataset { num_sites: l, shots, settings, histograms }
    }

    /// CSV rows `setting_id,basis_string,bitstring,count` (site 0 is the
    /// first character of both strings).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("setting_id,basis_string,bitstring,count\n");
        for (sid, (bases, hist)) in self.settings.iter().zip(&self.histograms).enumerate() {
            let basis_s: String = bases.iter().map(|b| b.as_char()).collect();
            for &(bits, count) in hist {
                let bit_s: String =
                    (0..self.num_sites).map(|s| if (bits >> s) & 1 == 1 { '1' } else { '0' }).collect();
                out.push_str(&format!("{sid},{basis_s},{bit_s},{count}\n"));
            }
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self, String> {
        let mut lines = text.lines();
        let header = lines.next().ok_or("empty csv")?;
        if header.trim() != "setting_id,basis_string,bitstring,count" {
            return Err(format!("unexpected header `{header}`"));
        }
        let mut settings: Vec<Vec<BasisAxis>> = Vec::new();
        let mut histograms: Vec<Vec<(u64, u32)>> = Vec::new();
        let mut num_sites = 0;
        for (ln, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 4 {
                return Err(format!("line {}: expected 4 columns", ln + 2));
            }
            let sid: usize = cols[0].parse().map_err(|e| format!("line {}: {e}", ln + 2))?;
            let bases: Vec<BasisAxis> = cols[1]
                .chars()
                .map(|ch| match ch {
                    'X' => Ok(BasisAxis::X),
                    'Y' => Ok(BasisAxis::Y),
                    'Z' => Ok(BasisAxis::Z),
                    other => Err(format!("line {}: bad basis {other}", ln + 2)),
                })
                .collect::<Result<_, _>>()?;
            num_sites = bases.len();
            let mut bits = 0u64;
            for (s, ch) in cols[2].chars().enumerate() {
                if ch == '1' {
                    bits |= 1 << s;
                }
            }
            let count: u32 = cols[3].parse().map_err(|e| format!("line {}: {e}", ln + 2))?;
            while settings.len() <= sid {
                settings.push(Vec::new());
                histograms.push(Vec::new());
            }
            settings[sid] = bases;
            histograms[sid].push((bits, count));
        }
        let shots = histograms.first().map(|h| h.iter().map(|&(_, c)| c).sum()).unwrap_or(0);
        Ok(MeasurementDataset { num_sites, shots, settings, histograms })
    }

    /// Marginal empirical probabilities over a window of sites, per setting:
    /// (window bases, probs over 2^w outcomes indexed by window bit order).
    pub fn window_marginals(&self, window: &[usize]) -> Vec<(Vec<BasisAxis>, Vec<f64>)> {
        let w = window.len();
        let mut out = Vec::with_capacity(self.settings.len());
        for (bases, hist) in self.settings.iter().zip(&self.histograms) {
            let wb: Vec<BasisAxis> = window.iter().map(|&s| bases[s]).collect();
            let mut probs = vec![0.0f64; 1 << w];
            let total: f64 = hist.iter().map(|&(_, c)| c as f64).sum();
            for &(bits, count) in hist {
                let mut idx = 0usize;
                for (k, &s) in window.iter().enumerate() {
                    if (bits >> s) & 1 == 1 {
                        idx |= 1 << k;
                    }
                }
                probs[idx] += count as f64 / total;
            }
            out.push((wb, probs));
        }
        out
    }
}

/// Reduced density matrix of a contiguous-or-not site set from a dense
/// state. Returns a real symmetric matrix; the imaginary part must vanish
/// (our circuit states are real) and is checked.
pub fn reduced_density_dense(state: &DenseState, sites: &[usize]) -> DMatrix<f64> {
    let l = state.num_sites;
    let w = sites.len();
    assert!(w <= 12);
    let rest: Vec<usize> = (0..l).filter(|s| !sites.contains(s)).collect();
    let dim_w = 1usize << w;
    let dim_r = 1usize << rest.len();
    // M[r][w] = amplitude
    let mut m = DMatrix::<C64>::zeros(dim_r, dim_w);
    for b in 0..state.amps.len() {
        let mut wi = 0usize;
        for (k, &s) in sites.iter().enumerate() {
            if (b >> s) & 1 == 1 {
                wi |= 1 << k;
            }
        }
        let mut ri = 0usize;
        for (k, &s) in rest.iter().enumerate() {
            if (b >> s) & 1 == 1 {
                ri |= 1 << k;
            }
        }
        m[(ri, wi)] = state.amps[b];
    }
    let rho = m.adjoint() * &m;
    let mut out = DMatrix::<f64>::zeros(dim_w, dim_w);
    for i in 0..dim_w {
        for j in 0..dim_w {
            debug_assert!(rho[(i, j)].im.abs() < 1e-9);
            out[(i, j)] = rho[(i, j)].re;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{build_ansatz, CzPatternOrder, ParamSchedule};
    use crate::model::{Boundary, CutConfig, ModelParams};
    use approx::assert_relative_eq;
    use rand::SeedableRng;

    #[test]
    fn empty_circuit_gives_zero_state() {
        let c = CircuitIR::new(3, Boundary::Obc);
        let st = run(&c).unwrap();
        assert_relative_eq!(st.probability_of(0), 1.0);
    }

    #[test]
    fn y_pi_layer_flips_everything() {
        let mut c = CircuitIR::new(2, Boundary::Obc);
        c.push(Layer::Y { angles: vec![std::f64::consts::PI; 2] }).unwrap();
        let st = run(&c).unwrap();
        assert_relative_eq!(st.probability_of(0b11), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn zero_angle_ansatz_is_identity() {
        let c = build_ansatz(
            &ModelParams::critical_ci(6, Boundary::Pbc),
            &ParamSchedule::zero(),
            &CutConfig::UNCUT,
            CzPatternOrder::EvenFirst,
        )
        .unwrap();
        let st = run(&c).unwrap();
        assert_relative_eq!(st.probability_of(0), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn norm_preserved_through_ansatz() {
        let c = build_ansatz(
            &ModelParams::critical_ci(8, Boundary::Pbc),
            &ParamSchedule::uniform([0.3, -0.4, 0.8, 0.2, -0.6]),
            &CutConfig::UNCUT,
            CzPatternOrder::EvenFirst,
        )
        .unwrap();
        let st = run(&c).unwrap();
        assert_relative_eq!(st.norm(), 1.0, epsilon = 1e-10);
    }

    #[test]
    fn expectation_on_product_state() {
        // |0>^4 with sum Z_j Z_{j+1} (OBC) -> 3
        let p = ModelParams::new(4, 0.0, 1.0, 0.0, Boundary::Obc).unwrap();
        let h = crate::model::build_hamiltonian(&p).unwrap();
        let st = DenseState::zero_state(4);
        assert_relative_eq!(st.expectation(&h).unwrap(), -3.0, epsilon = 1e-12);
    }

    #[test]
    fn computational_basis_kills_cluster_terms() {
        // <0^8|H_CI(OBC)|0^8> = -7: ZZ terms give -7, ZXZ terms average to 0
        let p = ModelParams::critical_ci(8, Boundary::Obc);
        let h = crate::model::build_hamiltonian(&p).unwrap();
        let st = DenseState::zero_state(8);
        assert_relative_eq!(st.expectation(&h).unwrap(), -7.0, epsilon = 1e-12);
    }

    #[test]
    fn spin_flip_squares_to_identity_in_expectation() {
        let ox = crate::model::spin_flip_operator(5);
        let ox2 = ox.mul(&ox).unwrap();
        let c = build_ansatz(
            &ModelParams::critical_ci(5, Boundary::Obc),
            &ParamSchedule::power_law([(0.3, -1.0, 0.4); 5]),
            &CutConfig::UNCUT,
            CzPatternOrder::EvenFirst,
        )
        .unwrap();
        let st = run(&c).unwrap();
        assert_relative_eq!(st.expectation(&ox2).unwrap(), 1.0, epsilon = 1e-10);
    }

    #[test]
    fn self_overlap_protocol_is_unity() {
        let c = build_ansatz(
            &ModelParams::critical_ci(6, Boundary::Pbc),
            &ParamSchedule::uniform([0.5, 0.1, -0.3, 0.2, 0.4]),
            &CutConfig::UNCUT,
            CzPatternOrder::EvenFirst,
        )
        .unwrap();
        let p = overlap_protocol(&c, &c, Projection::None, &NoiseSpec::default()).unwrap();
        assert_relative_eq!(p, 1.0, epsilon = 1e-10);
    }

    #[test]
    fn protocol_matches_direct_inner_products() {
        let a = build_ansatz(
            &ModelParams::critical_ci(6, Boundary::Pbc),
            &ParamSchedule::uniform([0.5, 0.1, -0.3, 0.2, 0.4]),
            &CutConfig::UNCUT,
            CzPatternOrder::EvenFirst,
        )
        .unwrap();
        let b = build_ansatz(
            &ModelParams::critical_ci(6, Boundary::Pbc),
            &ParamSchedule::uniform([0.2, -0.2, 0.6, -0.1, 0.3]),
            &CutConfig::UNCUT,
            CzPatternOrder::EvenFirst,
        )
        .unwrap();
        let sa = run(&a).unwrap();
        let sb = run(&b).unwrap();
        let direct = sa.inner(&sb).norm_sqr();
        let p = overlap_protocol(&b, &a, Projection::None, &NoiseSpec::default()).unwrap();
        assert_relative_eq!(p, direct, epsilon = 1e-10);
        // projected bracket |<a|O_X|b>|^2
        let ox = crate::model::spin_flip_operator(6);
        let mut flipped = sb.clone();
        for s in 0..6 {
            flipped.apply_x(s);
        }
        let direct_x = sa.inner(&flipped).norm_sqr();
        let px = overlap_protocol(&b, &a, Projection::SpinFlip, &NoiseSpec::default()).unwrap();
        assert_relative_eq!(px, direct_x, epsilon = 1e-10);
        drop(ox);
    }

    #[test]
    fn sampling_zero_state_all_mass_on_zero() {
        let st = DenseState::zero_state(4);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let hist = sample(&st, &[BasisAxis::Z; 4], 500, &mut rng);
        assert_eq!(hist, vec![(0, 500)]);
    }

    #[test]
    fn sampling_plus_state_is_binomial() {
        // |+> measured in Z: p(0) = 1/2 within 3 sigma
        let mut st = DenseState::zero_state(1);
        st.apply_y(0, std::f64::consts::FRAC_PI_2);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let shots = 3000u32;
        let hist = sample(&st, &[BasisAxis::Z], shots, &mut rng);
        let n0 = hist.iter().find(|&&(b, _)| b == 0).map(|&(_, c)| c).unwrap_or(0) as f64;
        let sigma = (shots as f64 * 0.25).sqrt();
        assert!((n0 - shots as f64 / 2.0).abs() < 3.0 * sigma);
    }

    #[test]
    fn x_basis_sampling_of_plus_state_is_deterministic() {
        let mut st = DenseState::zero_state(1);
        st.apply_y(0, std::f64::consts::FRAC_PI_2); // |+>
        let probs = born_distribution(&st, &[BasisAxis::X]);
        assert_relative_eq!(probs[0], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn depolarizing_reduces_purity_monotonically() {
        let c = build_ansatz(
            &ModelParams::critical_ci(6, Boundary::Pbc),
            &ParamSchedule::uniform([0.4, 0.3, -0.2, 0.1, 0.5]),
            &CutConfig::UNCUT,
            CzPatternOrder::EvenFirst,
        )
        .unwrap();
        let mut last = f64::INFINITY;
        for &p in &[0.0, 0.002, 0.01, 0.05] {
            let rho = run_noisy(&c, &NoiseSpec::depolarizing(p)).unwrap();
            let purity = rho.purity();
            assert!(purity <= last + 1e-12, "purity not monotone at p={p}");
            last = purity;
        }
        // p = 0 equals the pure-state projector
        let rho0 = run_noisy(&c, &NoiseSpec::default()).unwrap();
        let pure = DensityOp::from_pure(&run(&c).unwrap());
        assert!((&rho0.mat - &pure.mat).norm() < 1e-10);
    }

    #[test]
    fn trajectory_estimate_matches_density_path() {
        let c = build_ansatz(
            &ModelParams::critical_ci(6, Boundary::Pbc),
            &ParamSchedule::uniform([0.4, 0.3, -0.2, 0.1, 0.5]),
            &CutConfig::UNCUT,
            CzPatternOrder::EvenFirst,
        )
        .unwrap();
        let circ = overlap_circuit(&c, &c, Projection::None).unwrap();
        let noise = NoiseSpec::depolarizing(0.01);
        let exact = run_noisy(&circ, &noise).unwrap().probability_of(0);
        let est = run_noisy_trajectories_p0(&circ, &noise, 3000, 42).unwrap();
        // ~24 CZ pairs at p=0.01: binomial fluctuation well under 0.02
        assert!((est - exact).abs() < 0.02, "est {est} vs exact {exact}");
    }

    #[test]
    fn dataset_csv_round_trip() {
        let mut st = DenseState::zero_state(3);
        st.apply_y(0, 0.7);
        st.apply_y(2, -0.4);
        let ds = MeasurementDataset::collect(&st, 4, 100, 9);
        let back = MeasurementDataset::from_csv(&ds.to_csv()).unwrap();
        assert_eq!(back.settings, ds.settings);
        assert_eq!(back.histograms, ds.histograms);
    }

    #[test]
    fn window_marginals_sum_to_one() {
        let mut st = DenseState::zero_state(4);
        st.apply_y(1, 0.9);
        let ds = MeasurementDataset::collect(&st, 3, 200, 21);
        for (_, probs) in ds.window_marginals(&[1, 2]) {
            assert_relative_eq!(probs.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn rdm_of_product_state_is_rank_one() {
        let mut st = DenseState::zero_state(4);
        st.apply_y(0, 0.3);
        st.apply_y(1, 1.1);
        let rho = reduced_density_dense(&st, &[0, 1]);
        let evs = crate::linalg::sym_eigenvalues(&rho);
        assert_relative_eq!(evs[evs.len() - 1], 1.0, epsilon = 1e-10);
        assert_relative_eq!(rho.trace(), 1.0, epsilon = 1e-12);
    }
}
