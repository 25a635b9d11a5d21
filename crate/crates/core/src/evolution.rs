//! Exact continuous-time propagation, brick-wall circuits with four gate
//! families, and the pulsed σ_x charging protocol.

use std::collections::HashMap;

use nalgebra::{DVector, Matrix2, Matrix4};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::hilbert::{hermitian_eig, CMatrix, Spectrum, StateVector, C64, ZERO};
use crate::models::{build_gate2_h, BasisAction, Gate2Kind};
use crate::stabilizer::{Clifford2, StabilizerTableau};

/// Independent generator for trajectory `stream` under `master` seed.
pub fn trajectory_rng(master: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(stream);
    rng
}

/// Basis states reachable from `seeds` through the nonzero entries of H.
fn closure(seeds: impl IntoIterator<Item = usize>, mut neighbors: impl FnMut(usize, &mut Vec<usize>)) -> Vec<usize> {
    let mut seen: Vec<usize> = Vec::new();
    let mut index: HashMap<usize, ()> = HashMap::new();
    for s in seeds {
        if index.insert(s, ()).is_none() {
            seen.push(s);
        }
    }
    let mut next = 0;
    let mut buf = Vec::new();
    while next < seen.len() {
        buf.clear();
        neighbors(seen[next], &mut buf);
        for &t in &buf {
            if index.insert(t, ()).is_none() {
                seen.push(t);
            }
        }
        next += 1;
    }
    seen.sort_unstable();
    seen
}

fn support(psi: &StateVector) -> impl Iterator<Item = usize> + '_ {
    psi.amplitudes()
        .iter()
        .enumerate()
        .filter(|(_, a)| a.re != 0.0 || a.im != 0.0)
        .map(|(s, _)| s)
}

/// Matrix of H between the given basis states (entries leaving the set are
/// dropped).
pub fn restricted_matrix(h: &dyn BasisAction, basis: &[usize]) -> CMatrix {
    let pos: HashMap<usize, usize> = basis.iter().enumerate().map(|(k, &s)| (s, k)).collect();
    let m = basis.len();
    let mut sub = CMatrix::zeros(m, m);
    let mut tmp = Vec::new();
    for (c, &s) in basis.iter().enumerate() {
        tmp.clear();
        h.act(s, &mut tmp);
        for &(r, v) in &tmp {
            if let Some(&k) = pos.get(&r) {
                sub[(k, c)] += v;
            }
        }
    }
    sub
}

/// ⟨ψ|H|ψ⟩ through the basis action.
pub fn action_expectation(h: &dyn BasisAction, psi: &StateVector) -> Result<f64> {
    if h.n_sites() != psi.n_sites() {
        return invalid("operator and state differ in size");
    }
    let a = psi.amplitudes();
    let mut acc = C64::new(0.0, 0.0);
    let mut tmp = Vec::new();
    for (s, amp) in a.iter().enumerate() {
        if amp.re == 0.0 && amp.im == 0.0 {
            continue;
        }
        tmp.clear();
        h.act(s, &mut tmp);
        for &(r, v) in &tmp {
            acc += a[r].conj() * v * amp;
        }
    }
    Ok(acc.re)
}

/// `e^{−iHt}` through the spectral decomposition of H, optionally restricted
/// to an invariant subspace spanned by basis states.
#[derive(Clone, Debug)]
pub struct Propagator {
    n_sites: usize,
    /// Sorted basis states spanning the subspace; all states when `None`.
    basis: Option<Vec<usize>>,
    spectrum: Spectrum,
}

impl Propagator {
    pub fn new(h: &CMatrix) -> Result<Self> {
        let d = h.nrows();
        if !d.is_power_of_two() || h.ncols() != d {
            return invalid(format!("Hamiltonian must be 2^N x 2^N, got {}x{}", h.nrows(), h.ncols()));
        }
        Ok(Self {
            n_sites: d.trailing_zeros() as usize,
            basis: None,
            spectrum: hermitian_eig(h)?,
        })
    }

    /// Propagator on the smallest coordinate subspace containing `seeds`
    /// that H leaves invariant.
    pub fn in_sector(h: &dyn BasisAction, seeds: &[usize]) -> Result<Self> {
        let n = h.n_sites();
        if let Some(&s) = seeds.iter().find(|&&s| s >> n != 0) {
            return invalid(format!("seed state {s} outside the {n}-site basis"));
        }
        let mut tmp = Vec::new();
        let basis = closure(seeds.iter().copied(), |s, out| {
            tmp.clear();
            h.act(s, &mut tmp);
            out.extend(tmp.iter().filter(|(_, v)| v.re != 0.0 || v.im != 0.0).map(|&(r, _)| r));
        });
        let sub = restricted_matrix(h, &basis);
        Ok(Self {
            n_sites: n,
            basis: Some(basis),
            spectrum: hermitian_eig(&sub)?,
        })
    }

    /// Restriction of a dense H to the invariant subspace reached from the
    /// support of `psi0`.
    pub fn for_state(h: &CMatrix, psi0: &StateVector) -> Result<Self> {
        if h.nrows() != psi0.dim() || h.ncols() != psi0.dim() {
            return invalid(format!("H is {}x{} but the state has dimension {}", h.nrows(), h.ncols(), psi0.dim()));
        }
        let basis = closure(support(psi0), |s, out| {
            out.extend((0..h.nrows()).filter(|&r| h[(r, s)] != ZERO));
        });
        let sub = CMatrix::from_fn(basis.len(), basis.len(), |r, c| h[(basis[r], basis[c])]);
        Ok(Self {
            n_sites: psi0.n_sites(),
            basis: Some(basis),
            spectrum: hermitian_eig(&sub)?,
        })
    }

    pub fn subspace_dim(&self) -> usize {
        self.spectrum.eigenvalues.len()
    }

    pub fn energies(&self) -> &[f64] {
        &self.spectrum.eigenvalues
    }

    fn restrict(&self, psi: &StateVector) -> Result<DVector<C64>> {
        if psi.n_sites() != self.n_sites {
            return invalid(format!("state has {} sites, propagator {}", psi.n_sites(), self.n_sites));
        }
        let amps = psi.amplitudes();
        match &self.basis {
            None => Ok(DVector::from_column_slice(amps)),
            Some(basis) => {
                let inside: f64 = basis.iter().map(|&s| amps[s].norm_sqr()).sum();
                if (psi.norm_sqr() - inside).abs() > 1e-12 {
                    return invalid("state has weight outside the propagator subspace");
                }
                Ok(DVector::from_iterator(basis.len(), basis.iter().map(|&s| amps[s])))
            }
        }
    }

    /// ψ(t_k) = V e^{−iΛt_k} V† ψ0 for every requested time.
    pub fn evolve_many(&self, psi0: &StateVector, times: &[f64]) -> Result<Vec<StateVector>> {
        check_times(times)?;
        let v = &self.spectrum.eigenvectors;
        let coeffs = v.adjoint() * self.restrict(psi0)?;
        let mut out = Vec::with_capacity(times.len());
        let mut rotated = coeffs.clone();
        for &t in times {
            for (k, (r, c)) in rotated.iter_mut().zip(coeffs.iter()).enumerate() {
                let lam = self.spectrum.eigenvalues[k];
                *r = c * C64::from_polar(1.0, -lam * t);
            }
            let sub = v * &rotated;
            let amps = match &self.basis {
                None => sub.as_slice().to_vec(),
                Some(basis) => {
                    let mut a = vec![ZERO; 1usize << self.n_sites];
                    for (&s, &z) in basis.iter().zip(sub.iter()) {
                        a[s] = z;
                    }
                    a
                }
            };
            out.push(StateVector::from_amplitudes(self.n_sites, amps)?);
        }
        Ok(out)
    }

    pub fn evolve(&self, psi0: &StateVector, t: f64) -> Result<StateVector> {
        if !(t >= 0.0) {
            return invalid("time must be non-negative");
        }
        Ok(self.evolve_many(psi0, &[t])?.remove(0))
    }
}

fn check_times(times: &[f64]) -> Result<()> {
    if let Some(&t0) = times.first() {
        if !(t0 >= 0.0) {
            return invalid("times must start at t >= 0");
        }
    }
    if times.windows(2).any(|w| !(w[1] >= w[0])) {
        return invalid("times must be ascending");
    }
    Ok(())
}

/// Exact evolution of `psi0` under dense H at the given times.
pub fn exact_evolve(h: &CMatrix, psi0: &StateVector, times: &[f64]) -> Result<Vec<StateVector>> {
    check_times(times)?;
    Propagator::for_state(h, psi0)?.evolve_many(psi0, times)
}

fn ginibre4<R: Rng + ?Sized>(rng: &mut R) -> Matrix4<C64> {
    Matrix4::from_fn(|_, _| {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        C64::new(re, im)
    })
}

/// Haar-random U(4): QR of a Ginibre matrix with the diagonal of R made
/// real-positive.
pub fn sample_haar2<R: Rng + ?Sized>(rng: &mut R) -> Matrix4<C64> {
    let qr = ginibre4(rng).qr();
    let (mut q, r) = qr.unpack();
    for k in 0..4 {
        let d = r[(k, k)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { C64::new(1.0, 0.0) };
        for row in 0..4 {
            q[(row, k)] *= phase;
        }
    }
    q
}

fn sample_haar_u2<R: Rng + ?Sized>(rng: &mut R) -> Matrix2<C64> {
    let g = Matrix2::from_fn(|_, _| {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        C64::new(re, im)
    });
    let (mut q, r) = g.qr().unpack();
    for k in 0..2 {
        let d = r[(k, k)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { C64::new(1.0, 0.0) };
        for row in 0..2 {
            q[(row, k)] *= phase;
        }
    }
    q
}

/// Magnetization-conserving two-site unitary: phases on |↓↓⟩ and |↑↑⟩ and a
/// Haar U(2) block on span{|↑↓⟩, |↓↑⟩}.
pub fn sample_u1_haar2<R: Rng + ?Sized>(rng: &mut R) -> Matrix4<C64> {
    let tau = std::f64::consts::TAU;
    let t0 = rng.random_range(0.0..tau);
    let t3 = rng.random_range(0.0..tau);
    let block = sample_haar_u2(rng);
    let mut u = Matrix4::<C64>::zeros();
    u[(0, 0)] = C64::from_polar(1.0, t0);
    u[(3, 3)] = C64::from_polar(1.0, t3);
    for r in 0..2 {
        for c in 0..2 {
            u[(1 + r, 1 + c)] = block[(r, c)];
        }
    }
    u
}

/// Uniform two-qubit Clifford element.
pub fn sample_clifford2<R: Rng + ?Sized>(rng: &mut R) -> Clifford2 {
    Clifford2::sample(rng)
}

fn one() -> f64 {
    1.0
}

/// Distribution of the two-site gates of a brick-wall circuit.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum GateFamily {
    Haar2,
    U1Haar2,
    Clifford2,
    /// `exp(−i J_ij h τ)` with `J_ij ~ U[0, j]` redrawn per gate.
    FromHamiltonian {
        kind: Gate2Kind,
        j: f64,
        #[serde(default = "one")]
        tau: f64,
    },
}

impl GateFamily {
    pub fn conserves_magnetization(&self) -> bool {
        match self {
            GateFamily::U1Haar2 => true,
            GateFamily::FromHamiltonian { kind, .. } => !matches!(kind, Gate2Kind::Ising),
            _ => false,
        }
    }

    pub fn name(&self) -> String {
        match self {
            GateFamily::Haar2 => "haar".into(),
            GateFamily::U1Haar2 => "u1".into(),
            GateFamily::Clifford2 => "clifford".into(),
            GateFamily::FromHamiltonian { kind, .. } => format!("hamiltonian-{kind:?}").to_lowercase(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[allow(clippy::large_enum_variant)]
pub enum Gate {
    Dense(Matrix4<C64>),
    Clifford(Clifford2),
}

impl Gate {
    pub fn matrix(&self) -> Matrix4<C64> {
        match self {
            Gate::Dense(m) => *m,
            Gate::Clifford(c) => c.to_matrix(),
        }
    }
}

/// Gate family plus its private random stream.
#[derive(Clone, Debug)]
pub struct GateSource {
    family: GateFamily,
    rng: ChaCha8Rng,
    /// Spectral data of the unit-coupling generator for Hamiltonian gates.
    generator: Option<(Vec<f64>, Matrix4<C64>)>,
}

impl GateSource {
    pub fn new(family: GateFamily, rng: ChaCha8Rng) -> Result<Self> {
        let generator = match family {
            GateFamily::FromHamiltonian { kind, j, tau } => {
                if !(j >= 0.0) || !(tau > 0.0) {
                    return invalid("Hamiltonian gates need j >= 0 and tau > 0");
                }
                let h = build_gate2_h(kind, 1.0)?;
                let spec = hermitian_eig(&CMatrix::from_fn(4, 4, |r, c| h[(r, c)]))?;
                let v = Matrix4::from_fn(|r, c| spec.eigenvectors[(r, c)]);
                Some((spec.eigenvalues, v))
            }
            _ => None,
        };
        Ok(Self { family, rng, generator })
    }

    pub fn family(&self) -> GateFamily {
        self.family
    }

    pub fn next_gate(&mut self) -> Gate {
        match self.family {
            GateFamily::Haar2 => Gate::Dense(sample_haar2(&mut self.rng)),
            GateFamily::U1Haar2 => Gate::Dense(sample_u1_haar2(&mut self.rng)),
            GateFamily::Clifford2 => Gate::Clifford(sample_clifford2(&mut self.rng)),
            GateFamily::FromHamiltonian { j, tau, .. } => {
                let jij = if j > 0.0 { self.rng.random_range(0.0..j) } else { 0.0 };
                let (lams, v) = self.generator.as_ref().expect("generator prepared in new");
                let phases = Matrix4::from_diagonal(&nalgebra::Vector4::from_fn(|k, _| {
                    C64::from_polar(1.0, -lams[k] * jij * tau)
                }));
                Gate::Dense(v * phases * v.adjoint())
            }
        }
    }
}

/// Which bonds the first layer acts on (0-indexed sites).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerParity {
    /// (0,1), (2,3), …
    #[default]
    Odd,
    /// (1,2), (3,4), …
    Even,
}

impl LayerParity {
    fn flip(self) -> Self {
        match self {
            LayerParity::Odd => LayerParity::Even,
            LayerParity::Even => LayerParity::Odd,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CircuitSpec {
    pub n_sites: usize,
    pub depth: usize,
    #[serde(default)]
    pub first_layer_parity: LayerParity,
    pub family: GateFamily,
}

impl CircuitSpec {
    fn validate(&self) -> Result<()> {
        if self.n_sites < 2 || !self.n_sites.is_multiple_of(2) {
            return invalid(format!("brick-wall circuits need an even N >= 2, got {}", self.n_sites));
        }
        Ok(())
    }

    /// Bonds of layer `layer` (0-based).
    pub fn layer_pairs(&self, layer: usize) -> Vec<(usize, usize)> {
        let parity = if layer.is_multiple_of(2) {
            self.first_layer_parity
        } else {
            self.first_layer_parity.flip()
        };
        let start = match parity {
            LayerParity::Odd => 0,
            LayerParity::Even => 1,
        };
        (start..self.n_sites - 1).step_by(2).map(|i| (i, i + 1)).collect()
    }
}

/// Runs the circuit on a state vector. Returns the state after every layer
/// (`record_each_layer`) or only the final state.
pub fn run_brickwall(
    spec: &CircuitSpec,
    source: &mut GateSource,
    psi0: &StateVector,
    record_each_layer: bool,
) -> Result<Vec<StateVector>> {
    spec.validate()?;
    if psi0.n_sites() != spec.n_sites {
        return invalid(format!("state has {} sites, circuit {}", psi0.n_sites(), spec.n_sites));
    }
    let mut psi = psi0.clone();
    let mut out = Vec::new();
    for layer in 0..spec.depth {
        for (i, j) in spec.layer_pairs(layer) {
            psi.apply_two_site(&source.next_gate().matrix(), i, j)?;
        }
        if record_each_layer {
            out.push(psi.clone());
        }
    }
    if !record_each_layer {
        out.push(psi);
    }
    Ok(out)
}

/// Clifford circuit on a stabilizer tableau; `observe` sees the tableau
/// after every layer.
pub fn run_brickwall_tableau(
    spec: &CircuitSpec,
    source: &mut GateSource,
    tableau: &mut StabilizerTableau,
    mut observe: impl FnMut(usize, &StabilizerTableau),
) -> Result<()> {
    spec.validate()?;
    if tableau.n_sites() != spec.n_sites {
        return invalid("tableau size does not match the circuit");
    }
    for layer in 0..spec.depth {
        for (i, j) in spec.layer_pairs(layer) {
            match source.next_gate() {
                Gate::Clifford(c) => tableau.apply_clifford2(&c, i, j)?,
                Gate::Dense(_) => return invalid("tableau circuits need the Clifford gate family"),
            }
        }
        observe(layer + 1, tableau);
    }
    Ok(())
}

/// One charging pulse: `exp(−i σ_x π/4)` on every site.
pub fn apply_pulse(psi: &mut StateVector) -> Result<()> {
    let c = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    let s = C64::new(0.0, -std::f64::consts::FRAC_1_SQRT_2);
    let rot = [[c, s], [s, c]];
    for site in 0..psi.n_sites() {
        psi.apply_single_site(&rot, site)?;
    }
    Ok(())
}

/// States after each of `k` pulses.
pub fn pulsed_charge(psi_gs: &StateVector, k: usize) -> Result<Vec<StateVector>> {
    if k < 1 {
        return invalid("need at least one pulse");
    }
    let mut psi = psi_gs.clone();
    let mut out = Vec::with_capacity(k);
    for _ in 0..k {
        apply_pulse(&mut psi)?;
        out.push(psi.clone());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{build_xxz, charging_hamiltonian, dense_matrix, Charging, SpinUnit, Xxz};

    fn unitary_defect(u: &Matrix4<C64>) -> f64 {
        (u.adjoint() * u - Matrix4::identity()).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    fn random_state(n: usize, rng: &mut ChaCha8Rng) -> StateVector {
        let amps = (0..1usize << n)
            .map(|_| C64::new(StandardNormal.sample(rng), StandardNormal.sample(rng)))
            .collect();
        let mut s = StateVector::from_amplitudes(n, amps).unwrap();
        s.normalize();
        s
    }

    #[test]
    fn zero_hamiltonian_is_identity() {
        let psi = StateVector::domain_wall(2).unwrap();
        let h = CMatrix::zeros(16, 16);
        for s in exact_evolve(&h, &psi, &[0.0, 1.0, 7.5]).unwrap() {
            assert_eq!(s.amplitudes(), psi.amplitudes());
        }
    }

    #[test]
    fn two_site_flip_probability() {
        let h = build_xxz(2, 1.0, 1.0).unwrap();
        let psi = StateVector::basis_state(2, 0b01).unwrap();
        let times: Vec<f64> = (0..50).map(|k| 0.13 * k as f64).collect();
        let states = exact_evolve(&h, &psi, &times).unwrap();
        for (t, s) in times.iter().zip(&states) {
            let p = s.amplitudes()[0b10].norm_sqr();
            assert!((p - (t / 2.0).sin().powi(2)).abs() < 1e-12);
        }
    }

    #[test]
    fn energy_and_norm_conserved_n8() {
        let h = charging_hamiltonian(4, SpinUnit::Half, &build_xxz(8, 1.0, 1.0).unwrap()).unwrap();
        let psi = StateVector::domain_wall(4).unwrap();
        let e0 = psi.expectation(&h).unwrap();
        let times: Vec<f64> = (0..50).map(|k| 0.4 * k as f64).collect();
        for s in exact_evolve(&h, &psi, &times).unwrap() {
            assert!((s.norm_sqr() - 1.0).abs() < 1e-10);
            assert!((s.expectation(&h).unwrap() - e0).abs() < 1e-9);
        }
    }

    #[test]
    fn sector_and_dense_propagators_agree() {
        let xxz = Xxz { n_sites: 6, j: 1.0, delta: 0.7 };
        let action = Charging { n_b: 3, unit: SpinUnit::Full, interaction: &xxz };
        let dense = dense_matrix(&action);
        let psi = StateVector::domain_wall(3).unwrap();
        let sector = Propagator::in_sector(&action, &[0b000111]).unwrap();
        assert_eq!(sector.subspace_dim(), 20);
        let full = Propagator::new(&dense).unwrap();
        let a = sector.evolve(&psi, 2.3).unwrap();
        let b = full.evolve(&psi, 2.3).unwrap();
        for (x, y) in a.amplitudes().iter().zip(b.amplitudes()) {
            assert!((x - y).norm() < 1e-10);
        }
    }

    #[test]
    fn propagator_group_law() {
        let mut rng = trajectory_rng(3, 0);
        let h = build_xxz(5, 1.3, -0.4).unwrap();
        let psi = random_state(5, &mut rng);
        let p = Propagator::new(&h).unwrap();
        let direct = p.evolve(&psi, 1.7).unwrap();
        let split = p.evolve(&p.evolve(&psi, 0.5).unwrap(), 1.2).unwrap();
        for (x, y) in direct.amplitudes().iter().zip(split.amplitudes()) {
            assert!((x - y).norm() < 1e-9);
        }
        assert!(exact_evolve(&h, &psi, &[1.0, 0.5]).is_err());
        assert!(exact_evolve(&h, &psi, &[-0.1]).is_err());
        assert!(exact_evolve(&CMatrix::zeros(4, 4), &psi, &[0.0]).is_err());
    }

    #[test]
    fn haar_unitarity_and_first_moment() {
        let mut rng = trajectory_rng(11, 0);
        let draws = 10_000;
        let mut moment = vec![C64::new(0.0, 0.0); 256];
        let mut bins = [0usize; 10];
        for _ in 0..draws {
            let u = sample_haar2(&mut rng);
            assert!(unitary_defect(&u) < 1e-12);
            for (idx, m) in moment.iter_mut().enumerate() {
                let (i, j, k, l) = (idx & 3, (idx >> 2) & 3, (idx >> 4) & 3, idx >> 6);
                *m += u[(i, j)] * u[(k, l)].conj();
            }
            for z in nalgebra::Schur::new(u).eigenvalues().expect("triangular Schur form").iter() {
                let a = z.arg();
                let b = (((a + std::f64::consts::PI) / std::f64::consts::TAU) * 10.0) as usize;
                bins[b.min(9)] += 1;
            }
        }
        for (idx, m) in moment.iter().enumerate() {
            let (i, j, k, l) = (idx & 3, (idx >> 2) & 3, (idx >> 4) & 3, idx >> 6);
            let want = if i == k && j == l { 0.25 } else { 0.0 };
            assert!((m / draws as f64 - want).norm() < 0.02, "{idx}");
        }
        let expect = (4 * draws) as f64 / 10.0;
        for &b in &bins {
            assert!((b as f64 - expect).abs() < 3.0 * expect.sqrt(), "{bins:?}");
        }
    }

    #[test]
    fn u1_haar_block_structure() {
        let mut rng = trajectory_rng(12, 0);
        let mut avg = [0.0f64; 4];
        let draws = 10_000;
        for _ in 0..draws {
            let u = sample_u1_haar2(&mut rng);
            assert!(unitary_defect(&u) < 1e-12);
            assert_eq!(crate::models::u1_violation4(&u), 0.0);
            assert!((u[(0, 0)].norm() - 1.0).abs() < 1e-14);
            for (k, (r, c)) in [(1, 1), (1, 2), (2, 1), (2, 2)].into_iter().enumerate() {
                avg[k] += u[(r, c)].norm_sqr();
            }
        }
        // Haar on U(2): E|u_rc|^2 = 1/2
        for a in avg {
            assert!((a / draws as f64 - 0.5).abs() < 0.01);
        }
    }

    #[test]
    fn gate_sources_are_reproducible() {
        for fam in [
            GateFamily::Haar2,
            GateFamily::U1Haar2,
            GateFamily::Clifford2,
            GateFamily::FromHamiltonian { kind: Gate2Kind::Xx, j: 1.0, tau: 1.0 },
        ] {
            let mut a = GateSource::new(fam, trajectory_rng(9, 4)).unwrap();
            let mut b = GateSource::new(fam, trajectory_rng(9, 4)).unwrap();
            let mut c = GateSource::new(fam, trajectory_rng(9, 5)).unwrap();
            let ga: Vec<Gate> = (0..20).map(|_| a.next_gate()).collect();
            let gb: Vec<Gate> = (0..20).map(|_| b.next_gate()).collect();
            let gc: Vec<Gate> = (0..20).map(|_| c.next_gate()).collect();
            assert_eq!(ga, gb);
            assert_ne!(ga, gc);
        }
    }

    #[test]
    fn hamiltonian_gates_are_unitary_and_symmetric() {
        for kind in [Gate2Kind::Ising, Gate2Kind::Xx, Gate2Kind::Heisenberg] {
            let fam = GateFamily::FromHamiltonian { kind, j: 2.0, tau: 1.0 };
            let mut src = GateSource::new(fam, trajectory_rng(1, 1)).unwrap();
            for _ in 0..50 {
                let u = src.next_gate().matrix();
                assert!(unitary_defect(&u) < 1e-12);
                if fam.conserves_magnetization() {
                    assert!(crate::models::u1_violation4(&u) < 1e-14);
                }
            }
        }
    }

    #[test]
    fn layer_patterns() {
        let spec = CircuitSpec {
            n_sites: 6,
            depth: 2,
            first_layer_parity: LayerParity::Odd,
            family: GateFamily::Haar2,
        };
        assert_eq!(spec.layer_pairs(0), vec![(0, 1), (2, 3), (4, 5)]);
        assert_eq!(spec.layer_pairs(1), vec![(1, 2), (3, 4)]);
        let even = CircuitSpec { first_layer_parity: LayerParity::Even, ..spec };
        assert_eq!(even.layer_pairs(0), vec![(1, 2), (3, 4)]);
    }

    #[test]
    fn brickwall_basics() {
        let psi = StateVector::domain_wall(3).unwrap();
        let mut spec = CircuitSpec {
            n_sites: 6,
            depth: 0,
            first_layer_parity: LayerParity::Odd,
            family: GateFamily::U1Haar2,
        };
        let mut src = GateSource::new(spec.family, trajectory_rng(2, 0)).unwrap();
        assert_eq!(run_brickwall(&spec, &mut src, &psi, false).unwrap()[0], psi);
        spec.depth = 30;
        for s in run_brickwall(&spec, &mut src, &psi, true).unwrap() {
            assert!(s.total_magnetization().abs() < 1e-10);
            assert!((s.norm_sqr() - 1.0).abs() < 1e-10);
        }
        let odd = CircuitSpec { n_sites: 5, ..spec };
        assert!(run_brickwall(&odd, &mut src, &StateVector::basis_state(5, 0).unwrap(), false).is_err());
    }

    #[test]
    fn pulses() {
        let psi = StateVector::basis_state(1, 0).unwrap();
        let one = pulsed_charge(&psi, 1).unwrap().remove(0);
        let r = std::f64::consts::FRAC_1_SQRT_2;
        assert!((one.amplitudes()[0] - C64::new(r, 0.0)).norm() < 1e-15);
        assert!((one.amplitudes()[1] - C64::new(0.0, -r)).norm() < 1e-15);

        let mut rng = trajectory_rng(4, 0);
        let psi = random_state(4, &mut rng);
        let eight = pulsed_charge(&psi, 8).unwrap().pop().unwrap();
        let overlap = psi.inner(&eight).norm();
        assert!((overlap - 1.0).abs() < 1e-12);
        assert!(pulsed_charge(&psi, 0).is_err());
    }
}
