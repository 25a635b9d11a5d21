//! Dense Hamiltonians for the battery, the charger and every charger–battery
//! interaction used by the charging protocols.
//!
//! All matrices use the layout of [`BasisConvention`]. Open boundaries
//! throughout.

use nalgebra::Matrix4;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::hilbert::{BasisConvention, CMatrix, C64, ZERO};

/// Coefficient in front of σ_z in the battery and charger Hamiltonians.
///
/// `Half` is the spin-operator convention `S_z = σ_z / 2`; `Full` uses σ_z
/// directly, so the battery ladder reads `E_k = −n_b + 2k`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SpinUnit {
    #[default]
    Half,
    Full,
}

impl SpinUnit {
    pub fn scale(self) -> f64 {
        match self {
            SpinUnit::Half => 0.5,
            SpinUnit::Full => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SpinUnit::Half => "half",
            SpinUnit::Full => "full",
        }
    }
}

/// Two-site generators used for Hamiltonian-generated brick-wall gates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gate2Kind {
    /// J σ_x σ_x
    Ising,
    /// J (σ_x σ_x + σ_y σ_y)
    Xx,
    /// J (σ_x σ_x + σ_y σ_y + σ_z σ_z)
    Heisenberg,
}

/// Parameterized description of one Hamiltonian family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum HamiltonianSpec {
    /// Σ_{battery sites} scale·σ_z on a chain of `2 n_b` sites.
    Battery { n_b: usize, unit: SpinUnit },
    /// Σ_{charger sites} scale·σ_z on a chain of `2 n_b` sites.
    ChargerZ { n_b: usize, unit: SpinUnit },
    /// Σ_i σ_x^i over all sites.
    ChargerX { n_sites: usize },
    Xxz { n_sites: usize, j: f64, delta: f64 },
    Csyk { n_sites: usize, j: f64, seed: u64 },
    Xy { n_sites: usize, j_prime: f64, gamma: f64, h_prime: f64 },
    Gate2 { kind: Gate2Kind, j: f64 },
}

impl HamiltonianSpec {
    pub fn build(&self) -> Result<CMatrix> {
        match *self {
            HamiltonianSpec::Battery { n_b, unit } => {
                Ok(diagonal_matrix(&battery_energies_full(n_b, unit)?))
            }
            HamiltonianSpec::ChargerZ { n_b, unit } => {
                Ok(diagonal_matrix(&charger_energies_full(n_b, unit)?))
            }
            HamiltonianSpec::ChargerX { n_sites } => build_transverse_x(n_sites),
            HamiltonianSpec::Xxz { n_sites, j, delta } => build_xxz(n_sites, j, delta),
            HamiltonianSpec::Csyk { n_sites, j, seed } => build_csyk(n_sites, j, seed).map(|(h, _)| h),
            HamiltonianSpec::Xy {
                n_sites,
                j_prime,
                gamma,
                h_prime,
            } => build_xy(n_sites, j_prime, gamma, h_prime),
            HamiltonianSpec::Gate2 { kind, j } => {
                let m = build_gate2_h(kind, j)?;
                Ok(CMatrix::from_fn(4, 4, |r, c| m[(r, c)]))
            }
        }
    }
}

pub(crate) fn diagonal_matrix(diag: &[f64]) -> CMatrix {
    CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        diag.len(),
        diag.iter().map(|&d| C64::new(d, 0.0)),
    ))
}

/// Battery energies over the 2^{n_b} battery basis: scale · Σ_i σ_z^i.
pub fn build_battery_h(n_b: usize, unit: SpinUnit) -> Result<Vec<f64>> {
    if n_b < 1 {
        return invalid("battery needs n_b >= 1");
    }
    Ok((0..1usize << n_b)
        .map(|b| unit.scale() * BasisConvention::total_sigma_z(b, n_b) as f64)
        .collect())
}

/// Battery energy of every basis state of the `2 n_b` chain.
pub fn battery_energies_full(n_b: usize, unit: SpinUnit) -> Result<Vec<f64>> {
    let levels = build_battery_h(n_b, unit)?;
    let conv = BasisConvention::new(2 * n_b);
    Ok((0..conv.dim()).map(|s| levels[conv.battery_part(s)]).collect())
}

/// Charger energy (same form as the battery) of every basis state.
pub fn charger_energies_full(n_b: usize, unit: SpinUnit) -> Result<Vec<f64>> {
    let levels = build_battery_h(n_b, unit)?;
    let conv = BasisConvention::new(2 * n_b);
    Ok((0..conv.dim()).map(|s| levels[conv.charger_part(s)]).collect())
}

fn check_chain(n: usize, min: usize) -> Result<()> {
    if n < min {
        return invalid(format!("chain needs at least {min} sites, got {n}"));
    }
    if n > crate::hilbert::MAX_STATEVECTOR_SITES {
        return Err(crate::error::Error::SizeLimit {
            what: "n_sites",
            value: n,
            max: crate::hilbert::MAX_STATEVECTOR_SITES,
        });
    }
    Ok(())
}

/// Column action of a Hamiltonian on basis states: `act(s)` pushes the
/// nonzero `(row, H[row, s])` entries. Duplicate rows are summed.
pub trait BasisAction: Sync {
    fn n_sites(&self) -> usize;
    fn act(&self, s: usize, out: &mut Vec<(usize, C64)>);
}

/// Dense matrix of an action over the full basis.
pub fn dense_matrix(action: &dyn BasisAction) -> CMatrix {
    let d = 1usize << action.n_sites();
    let mut h = CMatrix::zeros(d, d);
    let mut buf = Vec::new();
    for s in 0..d {
        buf.clear();
        action.act(s, &mut buf);
        for &(r, v) in &buf {
            h[(r, s)] += v;
        }
    }
    h
}

/// Σ_i σ_x^i.
pub struct TransverseX {
    pub n_sites: usize,
}

impl BasisAction for TransverseX {
    fn n_sites(&self) -> usize {
        self.n_sites
    }

    fn act(&self, s: usize, out: &mut Vec<(usize, C64)>) {
        for i in 0..self.n_sites {
            out.push((s ^ (1 << i), C64::new(1.0, 0.0)));
        }
    }
}

pub fn build_transverse_x(n: usize) -> Result<CMatrix> {
    check_chain(n, 1)?;
    Ok(dense_matrix(&TransverseX { n_sites: n }))
}

/// −J Σ_i [S_x S_x + S_y S_y + Δ S_z S_z] on bonds (i, i+1), S = σ/2.
#[derive(Clone, Copy, Debug)]
pub struct Xxz {
    pub n_sites: usize,
    pub j: f64,
    pub delta: f64,
}

impl BasisAction for Xxz {
    fn n_sites(&self) -> usize {
        self.n_sites
    }

    fn act(&self, s: usize, out: &mut Vec<(usize, C64)>) {
        let mut diag = 0.0;
        for i in 0..self.n_sites - 1 {
            let a = BasisConvention::is_up(s, i);
            let b = BasisConvention::is_up(s, i + 1);
            diag += -self.j * self.delta * if a == b { 0.25 } else { -0.25 };
            if a != b {
                out.push((s ^ (0b11 << i), C64::new(-self.j * 0.5, 0.0)));
            }
        }
        out.push((s, C64::new(diag, 0.0)));
    }
}

pub fn build_xxz(n: usize, j: f64, delta: f64) -> Result<CMatrix> {
    check_chain(n, 2)?;
    Ok(dense_matrix(&Xxz { n_sites: n, j, delta }))
}

/// (J′/4) Σ [(1+γ) σ_xσ_x + (1−γ) σ_yσ_y] + (h′/2) Σ σ_z.
///
/// The dimensionless field is `h = h′ / J′`.
#[derive(Clone, Copy, Debug)]
pub struct Xy {
    pub n_sites: usize,
    pub j_prime: f64,
    pub gamma: f64,
    pub h_prime: f64,
}

impl BasisAction for Xy {
    fn n_sites(&self) -> usize {
        self.n_sites
    }

    fn act(&self, s: usize, out: &mut Vec<(usize, C64)>) {
        let n = self.n_sites;
        let g = self.gamma;
        out.push((s, C64::new(0.5 * self.h_prime * BasisConvention::total_sigma_z(s, n) as f64, 0.0)));
        for i in 0..n - 1 {
            let parallel = BasisConvention::is_up(s, i) == BasisConvention::is_up(s, i + 1);
            // σ_xσ_x contributes +1 on every pair; σ_yσ_y gives −1 (parallel) or +1.
            let amp = if parallel { (1.0 + g) - (1.0 - g) } else { (1.0 + g) + (1.0 - g) };
            if amp != 0.0 {
                out.push((s ^ (0b11 << i), C64::new(0.25 * self.j_prime * amp, 0.0)));
            }
        }
    }
}

pub fn build_xy(n: usize, j_prime: f64, gamma: f64, h_prime: f64) -> Result<CMatrix> {
    check_chain(n, 2)?;
    Ok(dense_matrix(&Xy {
        n_sites: n,
        j_prime,
        gamma,
        h_prime,
    }))
}

/// Two-site generator on the local basis `bit_i + 2 bit_j`.
pub fn build_gate2_h(kind: Gate2Kind, j: f64) -> Result<Matrix4<C64>> {
    if !(j >= 0.0) {
        return invalid("gate coupling must be non-negative");
    }
    let mut m = Matrix4::<C64>::zeros();
    for s in 0..4usize {
        let parallel = (s & 1) == (s >> 1);
        let flipped = s ^ 0b11;
        let (flip, zz) = match kind {
            Gate2Kind::Ising => (1.0, 0.0),
            Gate2Kind::Xx => (if parallel { 0.0 } else { 2.0 }, 0.0),
            Gate2Kind::Heisenberg => (
                if parallel { 0.0 } else { 2.0 },
                if parallel { 1.0 } else { -1.0 },
            ),
        };
        m[(flipped, s)] += C64::new(j * flip, 0.0);
        m[(s, s)] += C64::new(j * zz, 0.0);
    }
    Ok(m)
}

/// Dimensionless transverse field of the XY chain.
pub fn xy_dimensionless_field(j_prime: f64, h_prime: f64) -> f64 {
    h_prime / j_prime
}

/// Complex SYK couplings on the canonical index set.
///
/// Pairs `(i<j)` are enumerated lexicographically; entries are stored for
/// `pair(ij) <= pair(kl)` and every other ordering follows from
/// `J_{ij,kl} = −J_{ji,kl} = −J_{ij,lk} = conj(J_{kl,ij})`.
#[derive(Clone, Debug)]
pub struct CsykCouplings {
    n_sites: usize,
    pairs: Vec<(usize, usize)>,
    /// Row-major over pair indices, full Hermitian matrix in pair space.
    values: Vec<C64>,
    pub variance: f64,
}

impl CsykCouplings {
    pub fn sample<R: Rng + ?Sized>(n_sites: usize, j: f64, rng: &mut R) -> Result<Self> {
        if n_sites < 4 {
            return invalid("cSYK needs at least 4 sites");
        }
        let pairs: Vec<(usize, usize)> = (0..n_sites)
            .flat_map(|i| (i + 1..n_sites).map(move |k| (i, k)))
            .collect();
        let np = pairs.len();
        let diag = Normal::new(0.0, j.abs()).map_err(|e| crate::error::Error::InvalidArgument(e.to_string()))?;
        let off = Normal::new(0.0, j.abs() / std::f64::consts::SQRT_2)
            .map_err(|e| crate::error::Error::InvalidArgument(e.to_string()))?;
        let mut values = vec![ZERO; np * np];
        for a in 0..np {
            for b in a..np {
                let z = if a == b {
                    C64::new(diag.sample(rng), 0.0)
                } else {
                    let re = off.sample(rng);
                    let im = off.sample(rng);
                    C64::new(re, im)
                };
                values[a * np + b] = z;
                values[b * np + a] = z.conj();
            }
        }
        Ok(Self {
            n_sites,
            pairs,
            values,
            variance: j * j,
        })
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    fn pair_index(&self, i: usize, j: usize) -> usize {
        // offset of row i in the lexicographic pair list
        let n = self.n_sites;
        i * (2 * n - i - 1) / 2 + (j - i - 1)
    }

    /// J_{ij,kl} for arbitrary index order (zero when i == j or k == l).
    pub fn get(&self, i: usize, j: usize, k: usize, l: usize) -> C64 {
        if i == j || k == l {
            return ZERO;
        }
        let (a, s1) = if i < j { (self.pair_index(i, j), 1.0) } else { (self.pair_index(j, i), -1.0) };
        let (b, s2) = if k < l { (self.pair_index(k, l), 1.0) } else { (self.pair_index(l, k), -1.0) };
        self.values[a * self.pairs.len() + b] * (s1 * s2)
    }

    /// Independent draws: canonical upper-triangle entries in pair space.
    pub fn canonical_values(&self) -> impl Iterator<Item = C64> + '_ {
        let np = self.pairs.len();
        (0..np).flat_map(move |a| (a..np).map(move |b| self.values[a * np + b]))
    }
}

/// (−1)^{number of down sites below `j`}: the σ_z string of the
/// Jordan–Wigner map `c†_j = σ⁺_j Π_{m<j} σ_z^m`.
#[inline]
pub(crate) fn jw_sign(state: usize, j: usize) -> f64 {
    let below = state & ((1usize << j) - 1);
    let downs = j as u32 - below.count_ones();
    if downs.is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

/// Applies `c_j` (`create == false`) or `c†_j` to a basis state.
#[inline]
pub(crate) fn jw_apply(state: usize, j: usize, create: bool) -> Option<(usize, f64)> {
    let occupied = BasisConvention::is_up(state, j);
    if occupied == create {
        return None;
    }
    Some((state ^ (1 << j), jw_sign(state, j)))
}

/// Complex SYK interaction `N^{-3/2} Σ J_{ij,kl} c†_i c†_j c_k c_l` over
/// `i<j`, `k<l`, with fermions realized through the Jordan–Wigner string.
pub fn build_csyk(n: usize, j: f64, seed: u64) -> Result<(CMatrix, CsykCouplings)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    build_csyk_with_rng(n, j, &mut rng)
}

pub fn build_csyk_with_rng<R: Rng + ?Sized>(
    n: usize,
    j: f64,
    rng: &mut R,
) -> Result<(CMatrix, CsykCouplings)> {
    check_chain(n, 4)?;
    let couplings = CsykCouplings::sample(n, j, rng)?;
    let h = csyk_matrix(&couplings);
    Ok((h, couplings))
}

pub fn csyk_matrix(couplings: &CsykCouplings) -> CMatrix {
    dense_matrix(couplings)
}

impl BasisAction for CsykCouplings {
    fn n_sites(&self) -> usize {
        self.n_sites
    }

    fn act(&self, s: usize, out: &mut Vec<(usize, C64)>) {
        let norm = 1.0 / (self.n_sites as f64).powi(3).sqrt();
        let np = self.pairs.len();
        for (b, &(k, l)) in self.pairs.iter().enumerate() {
            let Some((s1, g1)) = jw_apply(s, l, false) else { continue };
            let Some((s2, g2)) = jw_apply(s1, k, false) else { continue };
            for (a, &(i, jj)) in self.pairs.iter().enumerate() {
                let Some((s3, g3)) = jw_apply(s2, jj, true) else { continue };
                let Some((s4, g4)) = jw_apply(s3, i, true) else { continue };
                out.push((s4, self.values[a * np + b] * (g1 * g2 * g3 * g4 * norm)));
            }
        }
    }
}

/// `H_B + H_C + interaction` on `2 n_b` sites.
pub struct Charging<'a> {
    pub n_b: usize,
    pub unit: SpinUnit,
    pub interaction: &'a dyn BasisAction,
}

impl BasisAction for Charging<'_> {
    fn n_sites(&self) -> usize {
        2 * self.n_b
    }

    fn act(&self, s: usize, out: &mut Vec<(usize, C64)>) {
        // H_B + H_C is the total σ_z times the unit scale
        let z = BasisConvention::total_sigma_z(s, 2 * self.n_b) as f64;
        out.push((s, C64::new(self.unit.scale() * z, 0.0)));
        self.interaction.act(s, out);
    }
}

/// Composite charging Hamiltonian `H_B + H_C + H_BC` on `2 n_b` sites.
pub fn charging_hamiltonian(n_b: usize, unit: SpinUnit, interaction: &CMatrix) -> Result<CMatrix> {
    let d = 1usize << (2 * n_b);
    if interaction.nrows() != d || interaction.ncols() != d {
        return invalid("interaction dimension does not match 2 n_b sites");
    }
    let hb = battery_energies_full(n_b, unit)?;
    let hc = charger_energies_full(n_b, unit)?;
    let mut h = interaction.clone();
    for s in 0..d {
        h[(s, s)] += C64::new(hb[s] + hc[s], 0.0);
    }
    Ok(h)
}

/// max |[H, Σσ_z]_{rs}| = max |H_rs (m_s − m_r)|.
pub fn u1_violation(h: &CMatrix) -> f64 {
    let n = h.nrows().trailing_zeros() as usize;
    let mut worst: f64 = 0.0;
    for c in 0..h.ncols() {
        let mc = BasisConvention::total_sigma_z(c, n);
        for r in 0..h.nrows() {
            let mr = BasisConvention::total_sigma_z(r, n);
            if mr != mc {
                worst = worst.max(h[(r, c)].norm() * (mc - mr).abs() as f64);
            }
        }
    }
    worst
}

/// Same check for a two-site gate on the local basis `bit_i + 2 bit_j`.
pub fn u1_violation4(m: &Matrix4<C64>) -> f64 {
    let mut worst: f64 = 0.0;
    for c in 0..4usize {
        for r in 0..4usize {
            let dm = (c.count_ones() as i32 - r.count_ones() as i32).abs();
            if dm != 0 {
                worst = worst.max(m[(r, c)].norm() * dm as f64);
            }
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{hermitian_eig, hermiticity_defect, ONE};

    // Reference operators assembled from Kronecker products; independent of
    // the bit-twiddling constructors above.
    fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
        a.kronecker(b)
    }

    fn single(n: usize, site: usize, op: &CMatrix) -> CMatrix {
        // basis index bit `site` <-> kron factor position n-1-site
        let id = CMatrix::identity(2, 2);
        let mut m = CMatrix::identity(1, 1);
        for pos in (0..n).rev() {
            m = kron(&m, if pos == site { op } else { &id });
        }
        m
    }

    fn sx() -> CMatrix {
        CMatrix::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO])
    }
    fn sy() -> CMatrix {
        // basis (↓, ↑)
        let i = C64::new(0.0, 1.0);
        CMatrix::from_row_slice(2, 2, &[ZERO, i, -i, ZERO])
    }
    fn sz() -> CMatrix {
        CMatrix::from_row_slice(2, 2, &[-ONE, ZERO, ZERO, ONE])
    }
    fn sminus() -> CMatrix {
        // |↓⟩⟨↑|
        CMatrix::from_row_slice(2, 2, &[ZERO, ONE, ZERO, ZERO])
    }

    fn maxabs(m: &CMatrix) -> f64 {
        m.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    #[test]
    fn pauli_matrices_consistent() {
        // σ_y = i σ_x σ_z and σ_z|↑⟩ = +|↑⟩ in this basis
        let i = C64::new(0.0, 1.0);
        assert!(maxabs(&(sy() - sx() * sz() * i)) < 1e-15);
        assert_eq!(sz()[(1, 1)], ONE);
    }

    #[test]
    fn battery_levels() {
        assert_eq!(build_battery_h(1, SpinUnit::Half).unwrap(), vec![-0.5, 0.5]);
        assert_eq!(build_battery_h(2, SpinUnit::Half).unwrap(), vec![-1.0, 0.0, 0.0, 1.0]);
        let e = build_battery_h(3, SpinUnit::Full).unwrap();
        for (level, g) in [(-3.0, 1), (-1.0, 3), (1.0, 3), (3.0, 1)] {
            assert_eq!(e.iter().filter(|&&x| x == level).count(), g);
        }
        assert!(build_battery_h(0, SpinUnit::Half).is_err());
    }

    #[test]
    fn xxz_elements() {
        let h = build_xxz(2, 1.0, 1.0).unwrap();
        // |↑↓⟩ (site0 up) = 1, |↓↑⟩ = 2, |↑↑⟩ = 3
        assert!((h[(1, 2)].re + 0.5).abs() < 1e-15);
        assert!((h[(3, 3)].re + 0.25).abs() < 1e-15);
        assert!(build_xxz(1, 1.0, 1.0).is_err());
    }

    #[test]
    fn xxz_matches_kronecker_reference() {
        let n = 4;
        let (j, delta) = (0.7, 0.4);
        let mut r = CMatrix::zeros(1 << n, 1 << n);
        for i in 0..n - 1 {
            let xx = single(n, i, &sx()) * single(n, i + 1, &sx());
            let yy = single(n, i, &sy()) * single(n, i + 1, &sy());
            let zz = single(n, i, &sz()) * single(n, i + 1, &sz());
            r += (xx + yy + zz * C64::new(delta, 0.0)) * C64::new(-j / 4.0, 0.0);
        }
        assert!(maxabs(&(build_xxz(n, j, delta).unwrap() - r)) < 1e-14);
    }

    #[test]
    fn xxz_commutes_with_magnetization() {
        assert_eq!(u1_violation(&build_xxz(6, 1.0, 1.0).unwrap()), 0.0);
    }

    #[test]
    fn xy_matches_kronecker_reference() {
        let n = 4;
        let (jp, g, hp) = (1.3, 0.2, 0.7);
        let mut r = CMatrix::zeros(1 << n, 1 << n);
        for i in 0..n - 1 {
            let xx = single(n, i, &sx()) * single(n, i + 1, &sx());
            let yy = single(n, i, &sy()) * single(n, i + 1, &sy());
            r += (xx * C64::new(1.0 + g, 0.0) + yy * C64::new(1.0 - g, 0.0)) * C64::new(jp / 4.0, 0.0);
        }
        for i in 0..n {
            r += single(n, i, &sz()) * C64::new(hp / 2.0, 0.0);
        }
        assert!(maxabs(&(build_xy(n, jp, g, hp).unwrap() - r)) < 1e-14);
    }

    #[test]
    fn xy_examples() {
        let s = hermitian_eig(&build_xy(2, 1.0, 0.0, 0.0).unwrap()).unwrap();
        let want = [-0.5, 0.0, 0.0, 0.5];
        for (a, b) in s.eigenvalues.iter().zip(want) {
            assert!((a - b).abs() < 1e-12);
        }
        // γ = 1: only σ_xσ_x with strength J′/2
        let h = build_xy(2, 1.0, 1.0, 0.0).unwrap();
        let r = (single(2, 0, &sx()) * single(2, 1, &sx())) * C64::new(0.5, 0.0);
        assert!(maxabs(&(h - r)) < 1e-15);
        assert_eq!(xy_dimensionless_field(2.0, 1.0), 0.5);
    }

    #[test]
    fn gate2_spectra_and_symmetry() {
        let ev = |k| {
            let m = build_gate2_h(k, 1.0).unwrap();
            hermitian_eig(&CMatrix::from_fn(4, 4, |r, c| m[(r, c)])).unwrap().eigenvalues
        };
        for (a, b) in ev(Gate2Kind::Ising).iter().zip([-1.0, -1.0, 1.0, 1.0]) {
            assert!((a - b).abs() < 1e-12);
        }
        for (a, b) in ev(Gate2Kind::Xx).iter().zip([-2.0, 0.0, 0.0, 2.0]) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(u1_violation4(&build_gate2_h(Gate2Kind::Heisenberg, 1.0).unwrap()), 0.0);
        assert_eq!(u1_violation4(&build_gate2_h(Gate2Kind::Xx, 0.3).unwrap()), 0.0);
        assert!(u1_violation4(&build_gate2_h(Gate2Kind::Ising, 1.0).unwrap()) > 0.0);
        assert!(build_gate2_h(Gate2Kind::Xx, -1.0).is_err());

        // Heisenberg against Kronecker reference on two sites
        let m = build_gate2_h(Gate2Kind::Heisenberg, 0.8).unwrap();
        let r = (single(2, 0, &sx()) * single(2, 1, &sx())
            + single(2, 0, &sy()) * single(2, 1, &sy())
            + single(2, 0, &sz()) * single(2, 1, &sz()))
            * C64::new(0.8, 0.0);
        assert!(maxabs(&(CMatrix::from_fn(4, 4, |a, b| m[(a, b)]) - r)) < 1e-15);
    }

    fn jw_reference(n: usize) -> Vec<CMatrix> {
        (0..n)
            .map(|j| {
                let mut m = single(n, j, &sminus());
                for k in 0..j {
                    m = single(n, k, &sz()) * m;
                }
                m
            })
            .collect()
    }

    #[test]
    fn jordan_wigner_anticommutation() {
        let n = 4;
        let c = jw_reference(n);
        let d = 1 << n;
        for i in 0..n {
            for j in 0..n {
                let cdj = c[j].adjoint();
                let ac = &c[i] * &cdj + &cdj * &c[i];
                let want = if i == j { CMatrix::identity(d, d) } else { CMatrix::zeros(d, d) };
                assert!(maxabs(&(ac - want)) < 1e-12);
                let cc = &c[i] * &c[j] + &c[j] * &c[i];
                assert!(maxabs(&cc) < 1e-12);
            }
        }
        // bitwise action agrees with the matrix operators
        for j in 0..n {
            for s in 0..d {
                for t in 0..d {
                    let want = c[j][(t, s)];
                    let got = match jw_apply(s, j, false) {
                        Some((t2, g)) if t2 == t => C64::new(g, 0.0),
                        _ => ZERO,
                    };
                    assert_eq!(want, got);
                }
            }
        }
    }

    #[test]
    fn csyk_matches_operator_products() {
        let n = 5;
        let (h, couplings) = build_csyk(n, 1.0, 3).unwrap();
        let c = jw_reference(n);
        let mut r = CMatrix::zeros(1 << n, 1 << n);
        for &(i, j) in couplings.pairs() {
            for &(k, l) in couplings.pairs() {
                let term = c[i].adjoint() * c[j].adjoint() * &c[k] * &c[l];
                r += term * couplings.get(i, j, k, l);
            }
        }
        r /= C64::new((n as f64).powi(3).sqrt(), 0.0);
        assert!(maxabs(&(h - r)) < 1e-13);
    }

    #[test]
    fn csyk_hermitian_and_u1() {
        for seed in 0..3 {
            let (h, _) = build_csyk(6, 1.0, seed).unwrap();
            assert!(hermiticity_defect(&h) < 1e-12);
            assert!(u1_violation(&h) < 1e-10);
        }
        assert!(build_csyk(3, 1.0, 0).is_err());
    }

    #[test]
    fn csyk_coupling_symmetries() {
        let (_, cp) = build_csyk(6, 1.0, 9).unwrap();
        for (i, j, k, l) in [(0, 1, 2, 3), (1, 4, 0, 5), (2, 3, 2, 3)] {
            let v = cp.get(i, j, k, l);
            assert_eq!(cp.get(j, i, k, l), -v);
            assert_eq!(cp.get(i, j, l, k), -v);
            assert_eq!(cp.get(k, l, i, j), v.conj());
        }
        assert_eq!(cp.get(2, 3, 2, 3).im, 0.0);
    }

    #[test]
    fn csyk_coupling_statistics() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let j = 1.3;
        let mut samples = Vec::new();
        while samples.len() < 20_000 {
            let cp = CsykCouplings::sample(6, j, &mut rng).unwrap();
            samples.extend(cp.canonical_values());
        }
        let n = samples.len() as f64;
        let mean: C64 = samples.iter().sum::<C64>() / n;
        let var = samples.iter().map(|z| z.norm_sqr()).sum::<f64>() / n;
        let se = (var / n).sqrt();
        assert!(mean.norm() < 5.0 * se, "mean {mean} se {se}");
        assert!((var - j * j).abs() < 0.05 * j * j, "variance {var}");
    }

    #[test]
    fn spec_build_dispatch() {
        let h = HamiltonianSpec::Battery { n_b: 1, unit: SpinUnit::Half }.build().unwrap();
        // sites: charger 0, battery 1 -> battery up for indices 2, 3
        assert_eq!(h[(2, 2)].re, 0.5);
        assert_eq!(h[(1, 1)].re, -0.5);
        let x = HamiltonianSpec::ChargerX { n_sites: 2 }.build().unwrap();
        assert_eq!(x[(1, 0)], ONE);
        assert!(HamiltonianSpec::Gate2 { kind: Gate2Kind::Ising, j: 1.0 }.build().is_ok());
    }
}
