//! Stored work, ergotropy, stabilizer Rényi entropy, time and disorder
//! averages, and the steady-state block model of U(1) charging.

use std::path::{Path, PathBuf};

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::evolution::trajectory_rng;
use crate::hilbert::{BasisConvention, DensityMatrix, StateVector, C64};
use crate::models::SpinUnit;
use crate::stabilizer::binomial_big;

/// Largest N accepted by the enumerating SRE.
pub const SRE_NAIVE_MAX_SITES: usize = 8;
/// Largest N accepted by the transform-based SRE.
pub const SRE_FAST_MAX_SITES: usize = 14;

/// Hermitian Pauli string `i^{|x∧z|} X^x Z^z`; bit `i` of each mask is site `i`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PauliString {
    pub n_sites: usize,
    pub x: u64,
    pub z: u64,
}

impl PauliString {
    pub fn new(n_sites: usize, x: u64, z: u64) -> Result<Self> {
        if n_sites > 64 || (n_sites < 64 && ((x | z) >> n_sites) != 0) {
            return invalid("Pauli masks exceed the number of sites");
        }
        Ok(Self { n_sites, x, z })
    }

    /// Single-site σ_z.
    pub fn z(n_sites: usize, site: usize) -> Result<Self> {
        Self::new(n_sites, 0, 1 << site)
    }

    pub fn weight(&self) -> u32 {
        (self.x | self.z).count_ones()
    }

    /// P|s⟩ = coefficient · |s ⊕ x⟩.
    pub fn act(&self, s: usize) -> (usize, C64) {
        let (x, z) = (self.x as usize, self.z as usize);
        // σ_z|↓⟩ = −|↓⟩ with ↓ = bit 0
        let sign = if (z & !s).count_ones().is_multiple_of(2) { 1.0 } else { -1.0 };
        let phase = match (self.x & self.z).count_ones() % 4 {
            0 => C64::new(sign, 0.0),
            1 => C64::new(0.0, sign),
            2 => C64::new(-sign, 0.0),
            _ => C64::new(0.0, -sign),
        };
        (s ^ x, phase)
    }

    pub fn expectation(&self, psi: &StateVector) -> Result<f64> {
        if psi.n_sites() != self.n_sites {
            return invalid("Pauli string and state differ in size");
        }
        let a = psi.amplitudes();
        let mut acc = C64::new(0.0, 0.0);
        for (s, amp) in a.iter().enumerate() {
            let (t, c) = self.act(s);
            acc += a[t].conj() * c * amp;
        }
        Ok(acc.re)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SreMethod {
    Naive,
    Fast,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SreResult {
    pub alpha: f64,
    /// Bits.
    pub value: f64,
    pub method: SreMethod,
}

fn check_sre_args(psi: &StateVector, alpha: f64, max: usize) -> Result<()> {
    if !(alpha >= 0.0) || !alpha.is_finite() {
        return invalid(format!("alpha must be finite and >= 0, got {alpha}"));
    }
    if alpha == 1.0 {
        return invalid("alpha = 1 is not supported");
    }
    if psi.n_sites() > max {
        return Err(Error::SizeLimit {
            what: "n_sites",
            value: psi.n_sites(),
            max,
        });
    }
    Ok(())
}

#[inline]
fn moment(v: f64, alpha: f64) -> f64 {
    if alpha == 0.0 {
        if v > 1e-12 {
            1.0
        } else {
            0.0
        }
    } else if alpha == 2.0 {
        let sq = v * v;
        sq * sq
    } else {
        v.powf(2.0 * alpha)
    }
}

fn finish(sum: f64, n: usize, alpha: f64) -> f64 {
    (sum / (n as f64).exp2()).log2() / (1.0 - alpha)
}

/// M_α by enumerating all 4^N Pauli strings.
pub fn sre_naive(psi: &StateVector, alpha: f64) -> Result<SreResult> {
    check_sre_args(psi, alpha, SRE_NAIVE_MAX_SITES)?;
    let n = psi.n_sites();
    let mut sum = 0.0;
    for x in 0..1u64 << n {
        for z in 0..1u64 << n {
            let p = PauliString { n_sites: n, x, z };
            sum += moment(p.expectation(psi)?.abs(), alpha);
        }
    }
    Ok(SreResult {
        alpha,
        value: finish(sum, n, alpha),
        method: SreMethod::Naive,
    })
}

/// In-place Walsh–Hadamard transform: F(z) = Σ_s f(s) (−1)^{z·s}.
fn walsh_hadamard(buf: &mut [C64]) {
    let n = buf.len();
    let mut h = 1;
    while h < n {
        for block in buf.chunks_mut(2 * h) {
            let (lo, hi) = block.split_at_mut(h);
            for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
                let (u, v) = (*a, *b);
                *a = u + v;
                *b = u - v;
            }
        }
        h *= 2;
    }
}

/// Σ_z |⟨X^x Z^z⟩|^{2α} for one x-mask.
fn x_sector_sum(a: &[C64], x: usize, alpha: f64) -> f64 {
    let mut f: Vec<C64> = (0..a.len()).map(|s| a[s ^ x].conj() * a[s]).collect();
    walsh_hadamard(&mut f);
    f.iter().map(|v| moment(v.norm(), alpha)).sum()
}

/// M_α from one Walsh–Hadamard transform per x-mask. The per-x partial sums
/// are reduced in x order, so the result does not depend on thread count.
pub fn sre_fast(psi: &StateVector, alpha: f64) -> Result<SreResult> {
    check_sre_args(psi, alpha, SRE_FAST_MAX_SITES)?;
    let a = psi.amplitudes();
    let partial: Vec<f64> = (0..a.len()).into_par_iter().map(|x| x_sector_sum(a, x, alpha)).collect();
    let sum: f64 = partial.iter().sum();
    Ok(SreResult {
        alpha,
        value: finish(sum, psi.n_sites(), alpha),
        method: SreMethod::Fast,
    })
}

/// M₂ through the fast path.
pub fn sre2(psi: &StateVector) -> Result<f64> {
    Ok(sre_fast(psi, 2.0)?.value)
}

/// Σ_P ⟨P⟩², equal to 2^N for pure states.
pub fn pauli_square_sum(psi: &StateVector) -> Result<f64> {
    check_sre_args(psi, 0.5, SRE_FAST_MAX_SITES)?;
    let a = psi.amplitudes();
    let partial: Vec<f64> = (0..a.len()).into_par_iter().map(|x| x_sector_sum(a, x, 1.0)).collect();
    Ok(partial.iter().sum())
}

/// W = ⟨H_B⟩ − e0 with `battery_h` the 2^{n_b} battery level energies.
pub fn stored_work(psi: &StateVector, battery_h: &[f64], e0: f64) -> Result<f64> {
    Ok(battery_energy(psi, battery_h)? - e0)
}

/// ⟨H_B⟩ for a state on `2 n_b` sites.
pub fn battery_energy(psi: &StateVector, battery_h: &[f64]) -> Result<f64> {
    let conv = psi.convention();
    if !psi.n_sites().is_multiple_of(2) || battery_h.len() != 1usize << conv.n_battery() {
        return invalid("battery energies must cover the 2^{N/2} battery states");
    }
    Ok(psi
        .amplitudes()
        .iter()
        .enumerate()
        .map(|(s, a)| a.norm_sqr() * battery_h[conv.battery_part(s)])
        .sum())
}

/// Σ_i p_i ε_i for populations in nonincreasing and levels in nondecreasing
/// order.
pub fn passive_energy(eigvals_desc: &[f64], levels_asc: &[f64]) -> Result<f64> {
    if eigvals_desc.len() != levels_asc.len() {
        return invalid(format!(
            "{} populations against {} levels",
            eigvals_desc.len(),
            levels_asc.len()
        ));
    }
    Ok(eigvals_desc.iter().zip(levels_asc).map(|(p, e)| p * e).sum())
}

/// Tr(ρH_B) minus the energy of the passive rearrangement of ρ.
pub fn ergotropy(rho: &DensityMatrix, battery_h: &[f64]) -> Result<f64> {
    if battery_h.len() != rho.dim() {
        return invalid("battery energies and density matrix differ in dimension");
    }
    let mut pops = rho.spectrum()?.eigenvalues;
    pops.sort_by(|a, b| b.total_cmp(a));
    let mut levels = battery_h.to_vec();
    levels.sort_by(f64::total_cmp);
    Ok(rho.expectation_diagonal(battery_h) - passive_energy(&pops, &levels)?)
}

/// Running average (1/t) ∫₀ᵗ X dt' by the trapezoidal rule; `values[0]` at t = 0.
pub fn time_average(times: &[f64], values: &[f64]) -> Result<Vec<f64>> {
    if times.len() != values.len() {
        return invalid("times and values differ in length");
    }
    if times.windows(2).any(|w| !(w[1] > w[0])) {
        return invalid("times must be strictly increasing");
    }
    let mut out = Vec::with_capacity(times.len());
    let mut integral = 0.0;
    for k in 0..times.len() {
        if k > 0 {
            integral += 0.5 * (values[k] + values[k - 1]) * (times[k] - times[k - 1]);
        }
        let span = times[k] - times[0];
        out.push(if span > 0.0 { integral / span } else { values[k] });
    }
    Ok(out)
}

/// Maximally mixed state inside each battery magnetization sector, weighted
/// by the hypergeometric sector populations of the charged domain wall.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockStateModel {
    pub n_sites: usize,
    pub unit: SpinUnit,
    /// Battery magnetization m = k − n_b/2 for k up spins.
    pub m: Vec<f64>,
    pub weights: Vec<f64>,
    pub dims: Vec<usize>,
}

pub fn block_state_model(n_sites: usize) -> Result<BlockStateModel> {
    block_state_model_with_unit(n_sites, SpinUnit::Half)
}

pub fn block_state_model_with_unit(n_sites: usize, unit: SpinUnit) -> Result<BlockStateModel> {
    if n_sites < 2 || !n_sites.is_multiple_of(2) {
        return invalid(format!("block model needs an even N >= 2, got {n_sites}"));
    }
    let n_b = n_sites / 2;
    let total = binomial_big(n_sites, n_b);
    let to_f = |b: num_bigint::BigUint| num_traits::ToPrimitive::to_f64(&b).expect("finite binomial");
    let total_f = to_f(total);
    let mut m = Vec::new();
    let mut weights = Vec::new();
    let mut dims = Vec::new();
    for k in 0..=n_b {
        let d = binomial_big(n_b, k);
        m.push(k as f64 - n_b as f64 / 2.0);
        weights.push(to_f(&d * &d) / total_f);
        dims.push(num_traits::ToPrimitive::to_usize(&d).unwrap_or(usize::MAX));
    }
    Ok(BlockStateModel {
        n_sites,
        unit,
        m,
        weights,
        dims,
    })
}

impl BlockStateModel {
    fn level(&self, idx: usize) -> f64 {
        // scale · (2k − n_b) = 2 · scale · m
        2.0 * self.unit.scale() * self.m[idx]
    }
}

/// Ergotropy of the block steady state from the passive construction on
/// its full 2^{n_b} spectrum.
pub fn steady_ergotropy_exact(model: &BlockStateModel) -> Result<f64> {
    let n_b = model.n_sites / 2;
    if n_b > 20 {
        return Err(Error::SizeLimit {
            what: "n_b",
            value: n_b,
            max: 20,
        });
    }
    let mut pops = Vec::with_capacity(1 << n_b);
    let mut levels = Vec::with_capacity(1 << n_b);
    let mut mean = 0.0;
    for k in 0..model.m.len() {
        let d = model.dims[k];
        let e = model.level(k);
        mean += model.weights[k] * e;
        for _ in 0..d {
            pops.push(model.weights[k] / d as f64);
            levels.push(e);
        }
    }
    pops.sort_by(|a, b| b.total_cmp(a));
    levels.sort_by(f64::total_cmp);
    Ok(mean - passive_energy(&pops, &levels)?)
}

/// Σ_m |m| p_m in the model's energy unit: the sector-wise estimate of −E_p.
pub fn steady_ergotropy_sector_estimate(model: &BlockStateModel) -> f64 {
    (0..model.m.len()).map(|k| model.level(k).abs() * model.weights[k]).sum()
}

/// √(N / 4π).
pub fn steady_ergotropy_gauss(n_sites: usize) -> f64 {
    (n_sites as f64 / (4.0 * std::f64::consts::PI)).sqrt()
}

/// Time series of one run plus everything needed to reproduce it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub times: Vec<f64>,
    pub w: Vec<f64>,
    pub e: Vec<f64>,
    pub m2: Vec<f64>,
    pub avg_w: Vec<f64>,
    pub avg_e: Vec<f64>,
    pub avg_m2: Vec<f64>,
    pub unit: SpinUnit,
    pub seed: u64,
    pub stream: Option<u64>,
    pub params: serde_json::Value,
}

impl RunRecord {
    /// Builds a record and its running averages. `times` must be strictly
    /// increasing; for circuits pass the layer index.
    pub fn from_series(
        times: Vec<f64>,
        w: Vec<f64>,
        e: Vec<f64>,
        m2: Vec<f64>,
        unit: SpinUnit,
        seed: u64,
    ) -> Result<Self> {
        if w.len() != times.len() || e.len() != times.len() || m2.len() != times.len() {
            return invalid("series lengths differ");
        }
        let avg_w = time_average(&times, &w)?;
        let avg_e = time_average(&times, &e)?;
        let avg_m2 = time_average(&times, &m2)?;
        Ok(Self {
            times,
            w,
            e,
            m2,
            avg_w,
            avg_e,
            avg_m2,
            unit,
            seed,
            stream: None,
            params: serde_json::Value::Null,
        })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn ensure_same_unit(&self, other: &RunRecord) -> Result<()> {
        if self.unit != other.unit {
            return Err(Error::UnitMismatch(format!(
                "{} vs {}",
                self.unit.name(),
                other.unit.name()
            )));
        }
        Ok(())
    }

    /// CSV with columns t,W,E,M2,avgW,avgE,avgM2 at 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,W,E,M2,avgW,avgE,avgM2\n");
        for k in 0..self.len() {
            let row = [
                self.times[k],
                self.w[k],
                self.e[k],
                self.m2[k],
                self.avg_w[k],
                self.avg_e[k],
                self.avg_m2[k],
            ];
            let cells: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    /// Metadata for the JSON sidecar; `extra` is merged in at top level.
    pub fn sidecar(&self, extra: serde_json::Value) -> serde_json::Value {
        let mut obj = serde_json::json!({
            "unit": self.unit,
            "seed": self.seed,
            "stream": self.stream,
            "rows": self.len(),
            "columns": ["t", "W", "E", "M2", "avgW", "avgE", "avgM2"],
            "params": self.params,
        });
        if let (Some(map), serde_json::Value::Object(more)) = (obj.as_object_mut(), extra) {
            map.extend(more);
        }
        obj
    }

    /// Writes `<stem>.csv` and `<stem>.json` into `dir`.
    pub fn write(&self, dir: &Path, stem: &str, extra: serde_json::Value) -> Result<(PathBuf, PathBuf)> {
        std::fs::create_dir_all(dir)?;
        let csv = dir.join(format!("{stem}.csv"));
        let json = dir.join(format!("{stem}.json"));
        std::fs::write(&csv, self.to_csv())?;
        std::fs::write(&json, serde_json::to_string_pretty(&self.sidecar(extra))?)?;
        Ok((csv, json))
    }
}

/// Pointwise mean over realizations with standard errors of W, E and M₂.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DisorderAverage {
    pub mean: RunRecord,
    pub stderr_w: Vec<f64>,
    pub stderr_e: Vec<f64>,
    pub stderr_m2: Vec<f64>,
    pub samples: Vec<RunRecord>,
}

fn mean_and_stderr(cols: &[&[f64]]) -> (Vec<f64>, Vec<f64>) {
    let n = cols.len() as f64;
    let len = cols[0].len();
    let mut mean = vec![0.0; len];
    let mut se = vec![0.0; len];
    for k in 0..len {
        let mu = cols.iter().map(|c| c[k]).sum::<f64>() / n;
        mean[k] = mu;
        if cols.len() > 1 {
            let var = cols.iter().map(|c| (c[k] - mu).powi(2)).sum::<f64>() / (n - 1.0);
            se[k] = (var / n).sqrt();
        }
    }
    (mean, se)
}

/// Runs `run(stream, rng)` for streams `0..n_samples` of `master_seed` in
/// parallel and averages in stream order.
pub fn disorder_average<F>(run: F, n_samples: usize, master_seed: u64) -> Result<DisorderAverage>
where
    F: Fn(u64, ChaCha8Rng) -> Result<RunRecord> + Sync,
{
    if n_samples < 1 {
        return invalid("need at least one sample");
    }
    let samples: Vec<RunRecord> = (0..n_samples as u64)
        .into_par_iter()
        .map(|k| {
            let mut r = run(k, trajectory_rng(master_seed, k))?;
            r.stream = Some(k);
            Ok(r)
        })
        .collect::<Result<_>>()?;
    average_records(samples)
}

/// Pointwise average of already computed runs.
pub fn average_records(samples: Vec<RunRecord>) -> Result<DisorderAverage> {
    let Some(first) = samples.first() else {
        return invalid("need at least one sample");
    };
    for s in &samples {
        first.ensure_same_unit(s)?;
        if s.times != first.times {
            return invalid("realizations use different time grids");
        }
    }
    let col = |f: fn(&RunRecord) -> &Vec<f64>| -> (Vec<f64>, Vec<f64>) {
        let cols: Vec<&[f64]> = samples.iter().map(|s| f(s).as_slice()).collect();
        mean_and_stderr(&cols)
    };
    let (w, stderr_w) = col(|r| &r.w);
    let (e, stderr_e) = col(|r| &r.e);
    let (m2, stderr_m2) = col(|r| &r.m2);
    let mut mean = RunRecord::from_series(first.times.clone(), w, e, m2, first.unit, first.seed)?;
    mean.params = first.params.clone();
    Ok(DisorderAverage {
        mean,
        stderr_w,
        stderr_e,
        stderr_m2,
        samples,
    })
}

/// Battery magnetization per site, used by tableau cross-checks.
pub fn battery_total_sigma_z(psi: &StateVector) -> f64 {
    let n_b = BasisConvention::new(psi.n_sites()).n_battery();
    psi.magnetizations()[n_b..].iter().sum()
}
