//! GF(2) stabilizer tableaus for Clifford brick-wall dynamics, the battery
//! stabilizer rank, and the rank-determined ergotropy of flat-spectrum
//! battery states.
//!
//! Paulis use the Hermitian convention `i^{|x∧z|} X^x Z^z` with the physical
//! σ matrices of [`crate::hilbert::BasisConvention`] (so `σ_z |↓⟩ = −|↓⟩`).
//! A tableau row stores `i^phase · P(x, z)` with `phase ∈ {0, 2}`.

use std::sync::OnceLock;

use nalgebra::Matrix4;
use num_bigint::{BigInt, BigUint};
use num_traits::{One, ToPrimitive, Zero};
use rand::Rng;

use crate::error::{invalid, Result};
use crate::hilbert::{C64, ONE, ZERO};

/// Exponent `e` (mod 4) with `P(x1,z1) P(x2,z2) = i^e P(x1^x2, z1^z2)` for
/// one 64-bit word of Hermitian Paulis.
#[inline]
pub(crate) fn product_phase_word(x1: u64, z1: u64, x2: u64, z2: u64) -> i32 {
    let (px, py, pz) = (x1 & !z1, x1 & z1, !x1 & z1);
    let (qx, qy, qz) = (x2 & !z2, x2 & z2, !x2 & z2);
    // XY = iZ, YZ = iX, ZX = iY and their reverses pick up −i
    let plus = (px & qy) | (py & qz) | (pz & qx);
    let minus = (py & qx) | (pz & qy) | (px & qz);
    plus.count_ones() as i32 - minus.count_ones() as i32
}

#[derive(Clone, Debug, PartialEq, Eq)]
struct Row {
    x: Vec<u64>,
    z: Vec<u64>,
    phase: u8,
}

impl Row {
    fn zero(words: usize) -> Self {
        Self {
            x: vec![0; words],
            z: vec![0; words],
            phase: 0,
        }
    }

    #[inline]
    fn get(v: &[u64], q: usize) -> bool {
        (v[q / 64] >> (q % 64)) & 1 == 1
    }

    #[inline]
    fn set(v: &mut [u64], q: usize, val: bool) {
        let m = 1u64 << (q % 64);
        if val {
            v[q / 64] |= m;
        } else {
            v[q / 64] &= !m;
        }
    }

    /// self ← self · other
    fn mul_assign(&mut self, other: &Row) {
        let mut e = self.phase as i32 + other.phase as i32;
        for w in 0..self.x.len() {
            e += product_phase_word(self.x[w], self.z[w], other.x[w], other.z[w]);
            self.x[w] ^= other.x[w];
            self.z[w] ^= other.z[w];
        }
        self.phase = e.rem_euclid(4) as u8;
    }

    fn anticommutes(&self, other: &Row) -> bool {
        let mut parity = 0u32;
        for w in 0..self.x.len() {
            parity ^= ((self.x[w] & other.z[w]) ^ (self.z[w] & other.x[w])).count_ones() & 1;
        }
        parity == 1
    }
}

/// Two-qubit Clifford element up to global phase.
///
/// Stored as the images of `X_a, Z_a, X_b, Z_b`; each image is a 4-bit code
/// `x_a | z_a<<1 | x_b<<2 | z_b<<3` plus a sign.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Clifford2 {
    images: [u8; 4],
    negative: [bool; 4],
}

#[inline]
fn code_xz(code: u8) -> (u64, u64) {
    let x = (code & 1) as u64 | (((code >> 2) & 1) as u64) << 1;
    let z = ((code >> 1) & 1) as u64 | (((code >> 3) & 1) as u64) << 1;
    (x, z)
}

#[inline]
fn xz_code(x: u64, z: u64) -> u8 {
    ((x & 1) | ((z & 1) << 1) | (((x >> 1) & 1) << 2) | (((z >> 1) & 1) << 3)) as u8
}

fn symplectic_form(u: u8, v: u8) -> u8 {
    let (ux, uz) = code_xz(u);
    let (vx, vz) = code_xz(v);
    (((ux & vz) ^ (uz & vx)).count_ones() & 1) as u8
}

/// The 720 symplectic images `(X_a, Z_a, X_b, Z_b) ↦ codes` of Sp(4, 2),
/// enumerated in lexicographic order.
pub fn symplectic_table() -> &'static [[u8; 4]] {
    static TABLE: OnceLock<Vec<[u8; 4]>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut out = Vec::with_capacity(720);
        for a in 1..16u8 {
            for b in 1..16u8 {
                if symplectic_form(a, b) != 1 {
                    continue;
                }
                for c in 1..16u8 {
                    if symplectic_form(a, c) != 0 || symplectic_form(b, c) != 0 {
                        continue;
                    }
                    for d in 1..16u8 {
                        if symplectic_form(c, d) == 1
                            && symplectic_form(a, d) == 0
                            && symplectic_form(b, d) == 0
                        {
                            out.push([a, b, c, d]);
                        }
                    }
                }
            }
        }
        out
    })
}

impl Clifford2 {
    pub const GROUP_ORDER: usize = 11520;

    pub fn identity() -> Self {
        Self {
            images: [0b0001, 0b0010, 0b0100, 0b1000],
            negative: [false; 4],
        }
    }

    /// CNOT flipping `b` when `a` is up. Since σ_z = −Z in the bit basis,
    /// σ_z^b maps to −σ_z^a σ_z^b.
    pub fn cnot() -> Self {
        Self {
            images: [0b0101, 0b0010, 0b0100, 0b1010],
            negative: [false, false, false, true],
        }
    }

    /// Hadamard on qubit `a`.
    pub fn hadamard_a() -> Self {
        Self {
            images: [0b0010, 0b0001, 0b0100, 0b1000],
            negative: [false; 4],
        }
    }

    pub fn from_parts(images: [u8; 4], negative: [bool; 4]) -> Result<Self> {
        let sym = &images;
        let ok = symplectic_form(sym[0], sym[1]) == 1
            && symplectic_form(sym[2], sym[3]) == 1
            && [(0, 2), (0, 3), (1, 2), (1, 3)]
                .iter()
                .all(|&(p, q)| symplectic_form(sym[p], sym[q]) == 0);
        if !ok {
            return invalid("images do not preserve the symplectic form");
        }
        Ok(Self { images, negative })
    }

    /// Uniform draw from the 11520-element group: a uniform symplectic image
    /// times a uniform Pauli sign pattern.
    pub fn sample<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let table = symplectic_table();
        let idx = rng.random_range(0..table.len());
        let signs: u8 = rng.random_range(0..16);
        Self {
            images: table[idx],
            negative: [signs & 1 == 1, signs & 2 == 2, signs & 4 == 4, signs & 8 == 8],
        }
    }

    pub fn images(&self) -> [u8; 4] {
        self.images
    }

    pub fn signs(&self) -> [bool; 4] {
        self.negative
    }

    /// Conjugates the Hermitian Pauli `code`: returns `(image code, negative)`.
    pub fn conjugate(&self, code: u8) -> (u8, bool) {
        let (x, z) = code_xz(code);
        let mut acc_x = 0u64;
        let mut acc_z = 0u64;
        let mut phase = 0i32;
        let mut mul = |img: usize, phase: &mut i32| {
            let (ix, iz) = code_xz(self.images[img]);
            *phase += product_phase_word(acc_x, acc_z, ix, iz);
            if self.negative[img] {
                *phase += 2;
            }
            acc_x ^= ix;
            acc_z ^= iz;
        };
        for q in 0..2 {
            let (xq, zq) = ((x >> q) & 1, (z >> q) & 1);
            if xq == 1 && zq == 1 {
                // Y = i X Z
                phase += 1;
            }
            if xq == 1 {
                mul(2 * q, &mut phase);
            }
            if zq == 1 {
                mul(2 * q + 1, &mut phase);
            }
        }
        let p = phase.rem_euclid(4);
        debug_assert!(p == 0 || p == 2, "image of a Hermitian Pauli must be Hermitian");
        (xz_code(acc_x, acc_z), p == 2)
    }

    /// 4×4 unitary on the local basis `bit_a + 2 bit_b` realizing this element.
    pub fn to_matrix(&self) -> Matrix4<C64> {
        let image = |k: usize| {
            let m = pauli4(self.images[k]);
            if self.negative[k] {
                -m
            } else {
                m
            }
        };
        let (xa, za, xb, zb) = (image(0), image(1), image(2), image(3));
        let id = Matrix4::<C64>::identity();
        // U|↓↓⟩ is the joint −1 eigenvector of the images of σ_z^a, σ_z^b
        let proj = (id - za) * (id - zb) * C64::new(0.25, 0.0);
        let best = (0..4)
            .max_by(|&p, &q| proj.column(p).norm().total_cmp(&proj.column(q).norm()))
            .unwrap();
        let phi = proj.column(best) / C64::new(proj.column(best).norm(), 0.0);
        let mut u = Matrix4::<C64>::zeros();
        for l in 0..4usize {
            let mut v = phi.clone_owned();
            if l & 1 == 1 {
                v = xa * v;
            }
            if l & 2 == 2 {
                v = xb * v;
            }
            u.set_column(l, &v);
        }
        u
    }
}

/// Hermitian two-qubit Pauli as a 4×4 matrix on the local basis.
pub fn pauli4(code: u8) -> Matrix4<C64> {
    let i = C64::new(0.0, 1.0);
    let single = |x: u64, z: u64| -> [[C64; 2]; 2] {
        match (x, z) {
            (0, 0) => [[ONE, ZERO], [ZERO, ONE]],
            (1, 0) => [[ZERO, ONE], [ONE, ZERO]],
            (0, 1) => [[-ONE, ZERO], [ZERO, ONE]],
            _ => [[ZERO, i], [-i, ZERO]],
        }
    };
    let (x, z) = code_xz(code);
    let a = single(x & 1, z & 1);
    let b = single(x >> 1, z >> 1);
    Matrix4::from_fn(|r, c| a[r & 1][c & 1] * b[r >> 1][c >> 1])
}

/// Pure stabilizer state on `n` qubits: `n` commuting, independent signed
/// Pauli generators.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StabilizerTableau {
    n: usize,
    rows: Vec<Row>,
}

/// Number of independent stabilizer generators supported on the battery.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BatteryRank {
    pub n_b: usize,
    pub r: usize,
}

impl BatteryRank {
    /// log₂ of the number of nonzero reduced-state eigenvalues.
    pub fn support_log2(&self) -> usize {
        self.n_b - self.r
    }

    /// The common nonzero eigenvalue `2^{−(n_b − r)}`.
    pub fn eigenvalue(&self) -> f64 {
        (-(self.support_log2() as f64)).exp2()
    }
}

impl StabilizerTableau {
    /// Computational basis state; `up(site)` selects `|↑⟩`.
    pub fn computational(n: usize, up: impl Fn(usize) -> bool) -> Result<Self> {
        if n == 0 {
            return invalid("tableau needs at least one qubit");
        }
        let words = n.div_ceil(64);
        let rows = (0..n)
            .map(|q| {
                let mut r = Row::zero(words);
                Row::set(&mut r.z, q, true);
                // σ_z|↓⟩ = −|↓⟩, so a down spin is stabilized by −σ_z
                r.phase = if up(q) { 0 } else { 2 };
                r
            })
            .collect();
        Ok(Self { n, rows })
    }

    pub fn domain_wall(n_b: usize) -> Result<Self> {
        if n_b < 1 {
            return invalid("domain wall needs n_b >= 1");
        }
        Self::computational(2 * n_b, |q| q < n_b)
    }

    pub fn n_sites(&self) -> usize {
        self.n
    }

    /// Generator `k` as `(x bits, z bits, negative)`.
    pub fn generator(&self, k: usize) -> (Vec<bool>, Vec<bool>, bool) {
        let r = &self.rows[k];
        (
            (0..self.n).map(|q| Row::get(&r.x, q)).collect(),
            (0..self.n).map(|q| Row::get(&r.z, q)).collect(),
            r.phase == 2,
        )
    }

    pub fn apply_clifford2(&mut self, gate: &Clifford2, i: usize, j: usize) -> Result<()> {
        if i == j || i >= self.n || j >= self.n {
            return invalid(format!("bad site pair ({i}, {j}) for N = {}", self.n));
        }
        let mut table = [(0u8, false); 16];
        for (c, slot) in table.iter_mut().enumerate() {
            *slot = gate.conjugate(c as u8);
        }
        for row in &mut self.rows {
            let code = (Row::get(&row.x, i) as u8)
                | (Row::get(&row.z, i) as u8) << 1
                | (Row::get(&row.x, j) as u8) << 2
                | (Row::get(&row.z, j) as u8) << 3;
            let (img, neg) = table[code as usize];
            Row::set(&mut row.x, i, img & 1 == 1);
            Row::set(&mut row.z, i, img & 2 == 2);
            Row::set(&mut row.x, j, img & 4 == 4);
            Row::set(&mut row.z, j, img & 8 == 8);
            if neg {
                row.phase = (row.phase + 2) % 4;
            }
        }
        Ok(())
    }

    /// Hadamard on one site (X ↔ Z, Y → −Y).
    pub fn apply_hadamard(&mut self, q: usize) -> Result<()> {
        if q >= self.n {
            return invalid(format!("site {q} out of range"));
        }
        for row in &mut self.rows {
            let x = Row::get(&row.x, q);
            let z = Row::get(&row.z, q);
            if x && z {
                row.phase = (row.phase + 2) % 4;
            }
            Row::set(&mut row.x, q, z);
            Row::set(&mut row.z, q, x);
        }
        Ok(())
    }

    /// Rows commute pairwise, are independent over GF(2) and carry real signs.
    pub fn check_invariants(&self) -> Result<()> {
        for a in 0..self.n {
            if !self.rows[a].phase.is_multiple_of(2) {
                return invalid("generator with imaginary phase");
            }
            for b in a + 1..self.n {
                if self.rows[a].anticommutes(&self.rows[b]) {
                    return invalid(format!("generators {a} and {b} anticommute"));
                }
            }
        }
        let vecs: Vec<Vec<u64>> = self
            .rows
            .iter()
            .map(|r| r.x.iter().chain(r.z.iter()).copied().collect())
            .collect();
        if gf2_rank(vecs) != self.n {
            return invalid("generators are not independent");
        }
        Ok(())
    }

    /// Fully reduced row-echelon form with x columns before z columns.
    /// Returns the reduced rows and, per z column, the index of the pure-z
    /// row pivoting there.
    fn reduced(&self) -> (Vec<Row>, Vec<Option<usize>>) {
        let mut rows = self.rows.clone();
        let n = self.n;
        let mut next = 0usize;
        let mut z_pivot = vec![None; n];
        for col in 0..2 * n {
            let (is_x, q) = if col < n { (true, col) } else { (false, col - n) };
            let bit = |r: &Row| if is_x { Row::get(&r.x, q) } else { Row::get(&r.z, q) };
            let Some(p) = (next..n).find(|&k| bit(&rows[k])) else { continue };
            rows.swap(next, p);
            let pivot = rows[next].clone();
            for (k, row) in rows.iter_mut().enumerate() {
                if k != next && bit(row) {
                    row.mul_assign(&pivot);
                }
            }
            if !is_x {
                z_pivot[q] = Some(next);
            }
            next += 1;
        }
        (rows, z_pivot)
    }

    /// +1 / −1 when ±σ_z^site is in the stabilizer group, else 0.
    pub fn z_expectation(&self, site: usize) -> i8 {
        if site >= self.n {
            return 0;
        }
        if self.rows.iter().any(|r| Row::get(&r.x, site)) {
            return 0;
        }
        self.magnetizations()[site]
    }

    /// ⟨σ_z^i⟩ for every site from one reduction.
    pub fn magnetizations(&self) -> Vec<i8> {
        let (rows, z_pivot) = self.reduced();
        (0..self.n)
            .map(|q| {
                let Some(k) = z_pivot[q] else { return 0 };
                let row = &rows[k];
                let mut target = Row::zero(row.x.len());
                Row::set(&mut target.z, q, true);
                if row.x != target.x || row.z != target.z {
                    return 0;
                }
                if row.phase == 0 {
                    1
                } else {
                    -1
                }
            })
            .collect()
    }

    /// r = 2 n_b − rank_GF(2)(generators restricted to the charger).
    pub fn battery_rank(&self) -> Result<BatteryRank> {
        if !self.n.is_multiple_of(2) {
            return invalid("battery rank needs an even number of sites");
        }
        let n_b = self.n / 2;
        let words = (2 * n_b).div_ceil(64);
        let vecs: Vec<Vec<u64>> = self
            .rows
            .iter()
            .map(|r| {
                let mut v = vec![0u64; words];
                for q in 0..n_b {
                    Row::set(&mut v, q, Row::get(&r.x, q));
                    Row::set(&mut v, n_b + q, Row::get(&r.z, q));
                }
                v
            })
            .collect();
        let rank = gf2_rank(vecs);
        Ok(BatteryRank {
            n_b,
            r: 2 * n_b - rank,
        })
    }

    /// Product of the generators flagged in `select`.
    pub fn product_of(&self, select: &[bool]) -> (Vec<bool>, Vec<bool>, bool) {
        let words = self.n.div_ceil(64);
        let mut acc = Row::zero(words);
        for (k, &s) in select.iter().enumerate() {
            if s {
                acc.mul_assign(&self.rows[k]);
            }
        }
        debug_assert!(acc.phase.is_multiple_of(2));
        (
            (0..self.n).map(|q| Row::get(&acc.x, q)).collect(),
            (0..self.n).map(|q| Row::get(&acc.z, q)).collect(),
            acc.phase == 2,
        )
    }
}

fn gf2_rank(mut vecs: Vec<Vec<u64>>) -> usize {
    let Some(words) = vecs.first().map(Vec::len) else { return 0 };
    let mut rank = 0;
    for col in 0..words * 64 {
        let (w, b) = (col / 64, 1u64 << (col % 64));
        let Some(p) = (rank..vecs.len()).find(|&k| vecs[k][w] & b != 0) else { continue };
        vecs.swap(rank, p);
        let pivot = vecs[rank].clone();
        for (k, v) in vecs.iter_mut().enumerate() {
            if k != rank && v[w] & b != 0 {
                v.iter_mut().zip(&pivot).for_each(|(a, p)| *a ^= p);
            }
        }
        rank += 1;
    }
    rank
}

/// C(n, k) as an exact integer.
pub(crate) fn binomial_big(n: usize, k: usize) -> BigUint {
    if k > n {
        return BigUint::zero();
    }
    let k = k.min(n - k);
    let mut acc = BigUint::one();
    for i in 0..k {
        acc = acc * BigUint::from(n - i) / BigUint::from(i + 1);
    }
    acc
}

/// Smallest `k*` with `Σ_{k≤k*} C(n_b, k) ≥ 2^{n_b − r}`.
pub fn passive_filling_level(n_b: usize, r: usize) -> Result<usize> {
    if r > n_b {
        return invalid(format!("rank {r} exceeds n_b = {n_b}"));
    }
    let support = BigUint::one() << (n_b - r);
    let mut cum = BigUint::zero();
    for k in 0..=n_b {
        cum += binomial_big(n_b, k);
        if cum >= support {
            return Ok(k);
        }
    }
    unreachable!("Σ_k C(n_b, k) = 2^n_b covers every support")
}

/// Energy (σ_z units, `E_k = −n_b + 2k`) of the passive state of a flat
/// spectrum supported on `2^{n_b − r}` levels.
pub fn clifford_passive_energy(n_b: usize, r: usize) -> Result<f64> {
    let kstar = passive_filling_level(n_b, r)?;
    let support = BigUint::one() << (n_b - r);
    let mut below = BigUint::zero();
    let mut numerator = BigInt::zero();
    for k in 0..kstar {
        let g = binomial_big(n_b, k);
        numerator += BigInt::from(g.clone()) * (2 * k as i64 - n_b as i64);
        below += g;
    }
    let rest = BigInt::from(support.clone()) - BigInt::from(below);
    numerator += rest * (2 * kstar as i64 - n_b as i64);
    // the denominator is a power of two, so this division is exact in f64
    let num = numerator.to_f64().expect("finite numerator");
    Ok(num / support.to_f64().expect("finite support"))
}

/// Ergotropy of a flat-spectrum battery state: `total_mz − E_p`, σ_z units.
pub fn clifford_ergotropy(n_b: usize, r: usize, total_mz: f64) -> Result<f64> {
    if r > n_b {
        return invalid(format!("rank {r} exceeds n_b = {n_b}"));
    }
    if total_mz.abs() > n_b as f64 + 1e-9 {
        return invalid(format!("|total_mz| = {} exceeds n_b = {n_b}", total_mz.abs()));
    }
    Ok(total_mz - clifford_passive_energy(n_b, r)?)
}

/// Γ(x) = −x log₂ x − (1−x) log₂(1−x).
pub fn binary_entropy(x: f64) -> f64 {
    if x <= 0.0 || x >= 1.0 {
        return 0.0;
    }
    -x * x.log2() - (1.0 - x) * (1.0 - x).log2()
}

/// Inverse of Γ on the branch `[0, 1/2]`, by bisection to 1e-12.
pub fn inverse_binary_entropy(y: f64) -> f64 {
    if y <= 0.0 {
        return 0.0;
    }
    if y >= 1.0 {
        return 0.5;
    }
    let (mut lo, mut hi) = (0.0f64, 0.5f64);
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if binary_entropy(mid) < y {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Long-time ergotropy fixed by the battery rank alone:
/// `n_b [1 − 2 Γ⁻¹(1 − r_inf / n_b)]`.
pub fn asymptotic_ergotropy(n_b: usize, r_inf: usize) -> Result<f64> {
    if n_b == 0 || r_inf > n_b {
        return invalid(format!("need 0 <= r_inf <= n_b, got r_inf = {r_inf}, n_b = {n_b}"));
    }
    let x = inverse_binary_entropy(1.0 - r_inf as f64 / n_b as f64);
    Ok(n_b as f64 * (1.0 - 2.0 * x))
}
