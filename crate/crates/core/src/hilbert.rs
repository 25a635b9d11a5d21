//! Basis conventions, pure states, reduced density matrices and dense
//! Hermitian diagonalization for chains of spin-1/2 sites.

use nalgebra::{DMatrix, Matrix4, SymmetricEigen};
use num_complex::Complex;

use crate::error::{invalid, Error, Result};

pub type C64 = Complex<f64>;
pub type CMatrix = DMatrix<C64>;

/// Largest chain handled by the dense state-vector backend.
pub const MAX_STATEVECTOR_SITES: usize = 24;

pub(crate) const ZERO: C64 = C64::new(0.0, 0.0);
pub(crate) const ONE: C64 = C64::new(1.0, 0.0);

/// The single bit/site layout shared by every module.
///
/// * site `i` is bit `i` of the basis index (site 0 least significant);
/// * a cleared bit is `|↓⟩` (σ_z = −1), a set bit is `|↑⟩` (σ_z = +1);
/// * for charger/battery experiments sites `0..n_b` form the charger and
///   sites `n_b..2 n_b` form the battery.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BasisConvention {
    pub n_sites: usize,
}

impl BasisConvention {
    pub const fn new(n_sites: usize) -> Self {
        Self { n_sites }
    }

    pub const fn dim(&self) -> usize {
        1 << self.n_sites
    }

    #[inline]
    pub const fn is_up(index: usize, site: usize) -> bool {
        (index >> site) & 1 == 1
    }

    /// σ_z eigenvalue of `site` in basis state `index`.
    #[inline]
    pub const fn sigma_z(index: usize, site: usize) -> f64 {
        if Self::is_up(index, site) {
            1.0
        } else {
            -1.0
        }
    }

    /// Number of battery sites (half the chain).
    pub const fn n_battery(&self) -> usize {
        self.n_sites / 2
    }

    pub const fn charger_mask(&self) -> usize {
        (1 << self.n_battery()) - 1
    }

    #[inline]
    pub const fn charger_part(&self, index: usize) -> usize {
        index & self.charger_mask()
    }

    #[inline]
    pub const fn battery_part(&self, index: usize) -> usize {
        index >> self.n_battery()
    }

    #[inline]
    pub const fn join(&self, charger: usize, battery: usize) -> usize {
        charger | (battery << self.n_battery())
    }

    /// Σ_i σ_z^i for a basis state of `n_sites` spins.
    #[inline]
    pub const fn total_sigma_z(index: usize, n_sites: usize) -> i64 {
        2 * (index.count_ones() as i64) - n_sites as i64
    }
}

/// Normalized pure state over the 2^N computational basis.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    n_sites: usize,
    amps: Vec<C64>,
}

impl StateVector {
    pub fn from_amplitudes(n_sites: usize, amps: Vec<C64>) -> Result<Self> {
        if n_sites == 0 || n_sites > MAX_STATEVECTOR_SITES {
            return Err(Error::SizeLimit {
                what: "n_sites",
                value: n_sites,
                max: MAX_STATEVECTOR_SITES,
            });
        }
        if amps.len() != 1 << n_sites {
            return invalid(format!(
                "expected {} amplitudes for {} sites, got {}",
                1usize << n_sites,
                n_sites,
                amps.len()
            ));
        }
        Ok(Self { n_sites, amps })
    }

    pub fn basis_state(n_sites: usize, index: usize) -> Result<Self> {
        let mut amps = vec![ZERO; 1usize.checked_shl(n_sites as u32).unwrap_or(0)];
        if index >= amps.len() {
            return invalid(format!("basis index {index} out of range"));
        }
        amps[index] = ONE;
        Self::from_amplitudes(n_sites, amps)
    }

    /// Charger fully up, battery fully down: `|↑…↑⟩_C ⊗ |↓…↓⟩_B`.
    pub fn domain_wall(n_b: usize) -> Result<Self> {
        if n_b < 1 {
            return invalid("domain wall needs n_b >= 1");
        }
        Self::basis_state(2 * n_b, (1 << n_b) - 1)
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn convention(&self) -> BasisConvention {
        BasisConvention::new(self.n_sites)
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn amplitudes_mut(&mut self) -> &mut [C64] {
        &mut self.amps
    }

    pub fn into_amplitudes(self) -> Vec<C64> {
        self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn normalize(&mut self) {
        let n = self.norm_sqr().sqrt();
        if n > 0.0 {
            self.amps.iter_mut().for_each(|a| *a /= n);
        }
    }

    pub fn inner(&self, other: &StateVector) -> C64 {
        self.amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    /// ⟨σ_z^site⟩.
    pub fn local_magnetization(&self, site: usize) -> Result<f64> {
        if site >= self.n_sites {
            return invalid(format!("site {site} out of range for N = {}", self.n_sites));
        }
        Ok(self
            .amps
            .iter()
            .enumerate()
            .map(|(s, a)| a.norm_sqr() * BasisConvention::sigma_z(s, site))
            .sum())
    }

    pub fn magnetizations(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.n_sites];
        for (s, a) in self.amps.iter().enumerate() {
            let p = a.norm_sqr();
            for (i, mi) in m.iter_mut().enumerate() {
                *mi += p * BasisConvention::sigma_z(s, i);
            }
        }
        m
    }

    /// ⟨Σ_i σ_z^i⟩ over the whole chain.
    pub fn total_magnetization(&self) -> f64 {
        self.amps
            .iter()
            .enumerate()
            .map(|(s, a)| a.norm_sqr() * BasisConvention::total_sigma_z(s, self.n_sites) as f64)
            .sum()
    }

    /// ⟨ψ|D|ψ⟩ for an operator diagonal in the computational basis.
    pub fn expectation_diagonal(&self, diag: &[f64]) -> f64 {
        self.amps
            .iter()
            .zip(diag)
            .map(|(a, d)| a.norm_sqr() * d)
            .sum()
    }

    /// ⟨ψ|H|ψ⟩ for a dense Hermitian `H` (real part).
    pub fn expectation(&self, h: &CMatrix) -> Result<f64> {
        if h.nrows() != self.dim() || h.ncols() != self.dim() {
            return invalid("operator dimension does not match state");
        }
        let mut acc = ZERO;
        for c in 0..self.dim() {
            let bc = self.amps[c];
            if bc == ZERO {
                continue;
            }
            let col = h.column(c);
            let mut hc = ZERO;
            for (r, &hv) in col.iter().enumerate() {
                hc += self.amps[r].conj() * hv;
            }
            acc += hc * bc;
        }
        Ok(acc.re)
    }

    /// ρ_B[b, b'] = Σ_c ψ(c, b) ψ*(c, b') over charger patterns `c`.
    pub fn partial_trace_battery(&self) -> Result<DensityMatrix> {
        if !self.n_sites.is_multiple_of(2) {
            return invalid("partial trace over the charger needs an even number of sites");
        }
        let conv = self.convention();
        let db = 1usize << conv.n_battery();
        let dc = db;
        let mut rho = CMatrix::zeros(db, db);
        for b in 0..db {
            for bp in b..db {
                let mut acc = ZERO;
                for c in 0..dc {
                    acc += self.amps[conv.join(c, b)] * self.amps[conv.join(c, bp)].conj();
                }
                rho[(b, bp)] = acc;
                rho[(bp, b)] = acc.conj();
            }
        }
        Ok(DensityMatrix {
            n_sites: conv.n_battery(),
            matrix: rho,
        })
    }

    /// Applies a one-site operator `[[g00, g01], [g10, g11]]` (rows = output bit).
    pub fn apply_single_site(&mut self, gate: &[[C64; 2]; 2], site: usize) -> Result<()> {
        if site >= self.n_sites {
            return invalid(format!("site {site} out of range"));
        }
        let bit = 1usize << site;
        for s in 0..self.amps.len() {
            if s & bit != 0 {
                continue;
            }
            let a0 = self.amps[s];
            let a1 = self.amps[s | bit];
            self.amps[s] = gate[0][0] * a0 + gate[0][1] * a1;
            self.amps[s | bit] = gate[1][0] * a0 + gate[1][1] * a1;
        }
        Ok(())
    }

    /// Applies a two-site operator to the ordered pair `(i, j)`.
    ///
    /// The 4×4 matrix acts on the local index `bit_i + 2·bit_j`.
    pub fn apply_two_site(&mut self, gate: &Matrix4<C64>, i: usize, j: usize) -> Result<()> {
        if i == j || i >= self.n_sites || j >= self.n_sites {
            return invalid(format!("bad site pair ({i}, {j}) for N = {}", self.n_sites));
        }
        let bi = 1usize << i;
        let bj = 1usize << j;
        for s in 0..self.amps.len() {
            if s & (bi | bj) != 0 {
                continue;
            }
            let idx = [s, s | bi, s | bj, s | bi | bj];
            let v = [
                self.amps[idx[0]],
                self.amps[idx[1]],
                self.amps[idx[2]],
                self.amps[idx[3]],
            ];
            for (r, &target) in idx.iter().enumerate() {
                self.amps[target] = gate[(r, 0)] * v[0]
                    + gate[(r, 1)] * v[1]
                    + gate[(r, 2)] * v[2]
                    + gate[(r, 3)] * v[3];
            }
        }
        Ok(())
    }

    /// Product state `self ⊗ other` with `self` on the low sites.
    pub fn tensor(&self, other: &StateVector) -> Result<StateVector> {
        let n = self.n_sites + other.n_sites;
        let mut amps = vec![ZERO; 1 << n];
        for (hi, b) in other.amps.iter().enumerate() {
            for (lo, a) in self.amps.iter().enumerate() {
                amps[lo | (hi << self.n_sites)] = a * b;
            }
        }
        StateVector::from_amplitudes(n, amps)
    }

    /// Binary state file: `QBSV`, version u16, N u16, then 2^N (re, im)
    /// pairs of f64, all little-endian.
    pub fn to_qbsv(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + 16 * self.amps.len());
        out.extend_from_slice(QBSV_MAGIC);
        out.extend_from_slice(&QBSV_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.n_sites as u16).to_le_bytes());
        for a in &self.amps {
            out.extend_from_slice(&a.re.to_le_bytes());
            out.extend_from_slice(&a.im.to_le_bytes());
        }
        out
    }

    pub fn from_qbsv(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 8 || &bytes[..4] != QBSV_MAGIC {
            return invalid("not a QBSV file");
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != QBSV_VERSION {
            return invalid(format!("unsupported QBSV version {version}"));
        }
        let n = u16::from_le_bytes([bytes[6], bytes[7]]) as usize;
        if n > MAX_STATEVECTOR_SITES {
            return Err(Error::SizeLimit {
                what: "n_sites",
                value: n,
                max: MAX_STATEVECTOR_SITES,
            });
        }
        let body = &bytes[8..];
        if body.len() != 16usize << n {
            return invalid(format!("QBSV body has {} bytes, expected {}", body.len(), 16usize << n));
        }
        let f = |c: &[u8]| f64::from_le_bytes(c.try_into().expect("8-byte chunk"));
        let amps = body.chunks_exact(16).map(|c| C64::new(f(&c[..8]), f(&c[8..]))).collect();
        StateVector::from_amplitudes(n, amps)
    }
}

pub const QBSV_MAGIC: &[u8; 4] = b"QBSV";
pub const QBSV_VERSION: u16 = 1;

/// Reduced state of the battery half.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    n_sites: usize,
    matrix: CMatrix,
}

impl DensityMatrix {
    /// Validates Hermiticity (1e-12), unit trace (1e-10) and positivity (−1e-10).
    pub fn new(n_sites: usize, matrix: CMatrix) -> Result<Self> {
        let d = 1usize << n_sites;
        if matrix.nrows() != d || matrix.ncols() != d {
            return invalid("density matrix dimension must be 2^n_sites");
        }
        if hermiticity_defect(&matrix) > 1e-12 {
            return invalid("density matrix is not Hermitian");
        }
        let tr = matrix.trace();
        if (tr.re - 1.0).abs() > 1e-10 || tr.im.abs() > 1e-10 {
            return invalid(format!("density matrix trace {tr} != 1"));
        }
        let spec = hermitian_eig(&matrix)?;
        if spec.eigenvalues[0] < -1e-10 {
            return invalid(format!(
                "density matrix has negative eigenvalue {}",
                spec.eigenvalues[0]
            ));
        }
        Ok(Self { n_sites, matrix })
    }

    pub fn from_diagonal(n_sites: usize, diag: &[f64]) -> Result<Self> {
        let m = CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            diag.len(),
            diag.iter().map(|&p| C64::new(p, 0.0)),
        ));
        Self::new(n_sites, m)
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace().re
    }

    pub fn purity(&self) -> f64 {
        self.matrix.iter().map(|z| z.norm_sqr()).sum()
    }

    /// Tr(ρ D) for a diagonal operator.
    pub fn expectation_diagonal(&self, diag: &[f64]) -> f64 {
        (0..self.dim()).map(|i| self.matrix[(i, i)].re * diag[i]).sum()
    }

    /// ⟨σ_z^site⟩ with `site` indexed within the subsystem.
    pub fn magnetization(&self, site: usize) -> f64 {
        (0..self.dim())
            .map(|i| self.matrix[(i, i)].re * BasisConvention::sigma_z(i, site))
            .sum()
    }

    pub fn spectrum(&self) -> Result<Spectrum> {
        hermitian_eig(&self.matrix)
    }
}

/// Ascending eigenvalues with eigenvectors stored as columns.
#[derive(Clone, Debug)]
pub struct Spectrum {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: CMatrix,
}

impl Spectrum {
    /// V diag(λ) V†.
    pub fn reconstruct(&self) -> CMatrix {
        let v = &self.eigenvectors;
        let mut scaled = v.clone();
        for (k, &l) in self.eigenvalues.iter().enumerate() {
            scaled.column_mut(k).scale_mut(l);
        }
        &scaled * v.adjoint()
    }
}

pub(crate) fn hermiticity_defect(m: &CMatrix) -> f64 {
    let n = m.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

/// Dense Hermitian diagonalization with ascending eigenvalues.
///
/// Purely real input goes through the real symmetric solver.
pub fn hermitian_eig(matrix: &CMatrix) -> Result<Spectrum> {
    if matrix.nrows() != matrix.ncols() {
        return invalid("matrix is not square");
    }
    let n = matrix.nrows();
    if n == 0 {
        return invalid("empty matrix");
    }
    let scale = matrix.iter().map(|z| z.norm()).fold(1.0, f64::max);
    if hermiticity_defect(matrix) > 1e-10 * scale {
        return invalid("matrix is not Hermitian");
    }
    let (values, vectors) = if matrix.iter().all(|z| z.im == 0.0) {
        let real = matrix.map(|z| z.re);
        let eig = SymmetricEigen::new(real);
        (eig.eigenvalues, eig.eigenvectors.map(|x| C64::new(x, 0.0)))
    } else {
        let eig = SymmetricEigen::new(matrix.clone());
        (eig.eigenvalues, eig.eigenvectors)
    };
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    let eigenvalues = order.iter().map(|&k| values[k]).collect();
    let mut eigenvectors = CMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        eigenvectors.set_column(dst, &vectors.column(src));
    }
    Ok(Spectrum {
        eigenvalues,
        eigenvectors,
    })
}
