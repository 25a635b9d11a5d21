//! Scenario runners: XXZ and cSYK charging, brick-wall circuits and the
//! pulsed XY protocol, each producing a RunRecord (or P_max table) plus
//! derived fits.

use std::path::{Path, PathBuf};

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::analysis::{
    fit_tanh_power, fit_tanh_sum, growth_exponent, master_curve_rescale, max_curve_deviation, monotone_prefix,
    pearson, tail_mean, FitResult,
};
use crate::error::{invalid, Error, Result};
use crate::evolution::{
    action_expectation, apply_pulse, restricted_matrix, run_brickwall as run_circuit, trajectory_rng, CircuitSpec,
    GateFamily, GateSource, LayerParity, Propagator,
};
use crate::hilbert::{hermitian_eig, StateVector, C64};
use crate::models::{build_battery_h, BasisAction, Charging, CsykCouplings, SpinUnit, Xxz, Xy};
use crate::observables::{
    average_records, battery_energy, disorder_average, ergotropy, sre2, DisorderAverage, RunRecord,
};
use crate::stabilizer::{clifford_ergotropy, StabilizerTableau};

/// Largest N for state-vector runs that also compute M₂.
pub const MAX_SITES_WITH_SRE: usize = 14;
/// Largest N for state-vector runs without M₂.
pub const MAX_SITES_STATEVECTOR: usize = 16;
/// Largest N for tableau-only Clifford runs.
pub const MAX_SITES_TABLEAU: usize = 256;
/// Largest N for the pulsed XY protocol.
pub const MAX_SITES_XY: usize = 12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    XxzCharge,
    CsykCharge,
    Brickwall,
    XyPulsed,
}

fn d_one() -> f64 {
    1.0
}
fn d_tmax() -> f64 {
    20.0
}
fn d_dt() -> f64 {
    0.05
}
fn d_depth() -> usize {
    60
}
fn d_family() -> GateFamily {
    GateFamily::Haar2
}
fn d_gammas() -> Vec<f64> {
    vec![0.2, 1.0]
}
fn d_hmax() -> f64 {
    2.0
}
fn d_hstep() -> f64 {
    0.02
}
fn d_kmax() -> usize {
    64
}
fn d_disorder() -> usize {
    8
}
fn d_true() -> bool {
    true
}

/// Everything a runner needs. Unused fields are ignored by scenarios that
/// do not need them; every field is echoed into the sidecar.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub n_sites: usize,
    /// Coupling J (XXZ, cSYK) in energy units.
    #[serde(default = "d_one")]
    pub j: f64,
    /// XXZ anisotropy Δ.
    #[serde(default = "d_one")]
    pub delta: f64,
    /// Final time in units of 1/J.
    #[serde(default = "d_tmax")]
    pub t_max: f64,
    /// Time step in units of 1/J.
    #[serde(default = "d_dt")]
    pub dt: f64,
    /// Brick-wall layers.
    #[serde(default = "d_depth")]
    pub depth: usize,
    #[serde(default = "d_family")]
    pub family: GateFamily,
    #[serde(default)]
    pub first_layer_parity: LayerParity,
    /// Run Clifford circuits on the stabilizer tableau only.
    #[serde(default)]
    pub tableau_only: bool,
    /// XY anisotropies γ.
    #[serde(default = "d_gammas")]
    pub gammas: Vec<f64>,
    /// XY coupling J′; the field is h′ = h J′.
    #[serde(default = "d_one")]
    pub j_prime: f64,
    #[serde(default)]
    pub h_min: f64,
    #[serde(default = "d_hmax")]
    pub h_max: f64,
    #[serde(default = "d_hstep")]
    pub h_step: f64,
    #[serde(default = "d_kmax")]
    pub k_max: usize,
    /// Disorder realizations (cSYK) or circuit seeds (brick-wall).
    #[serde(default = "d_disorder")]
    pub n_disorder: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default)]
    pub unit: SpinUnit,
    #[serde(default = "d_true")]
    pub compute_sre: bool,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(scenario: Scenario, n_sites: usize) -> Self {
        serde_json::from_value(json!({ "scenario": scenario, "n_sites": n_sites }))
            .expect("defaults deserialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// t_k = k dt for k = 0..=round(t_max/dt).
    pub fn time_grid(&self) -> Result<Vec<f64>> {
        if !(self.dt > 0.0) || !(self.t_max >= 0.0) || !self.t_max.is_finite() {
            return invalid("need dt > 0 and a finite t_max >= 0");
        }
        let steps = (self.t_max / self.dt).round();
        if (steps * self.dt - self.t_max).abs() > 1e-9 * self.t_max.max(1.0) {
            return invalid(format!("t_max = {} is not a multiple of dt = {}", self.t_max, self.dt));
        }
        if steps > 1e7 {
            return invalid("time grid too long");
        }
        let scale = 1.0 / self.j.abs().max(f64::MIN_POSITIVE);
        Ok((0..=steps as usize).map(|k| k as f64 * self.dt * scale).collect())
    }

    /// h_k = h_min + k h_step up to h_max.
    pub fn h_grid(&self) -> Result<Vec<f64>> {
        if !(self.h_step > 0.0) || !(self.h_max >= self.h_min) {
            return invalid("need h_step > 0 and h_max >= h_min");
        }
        let steps = ((self.h_max - self.h_min) / self.h_step + 1e-9).floor() as usize;
        Ok((0..=steps).map(|k| self.h_min + k as f64 * self.h_step).collect())
    }
}

fn size_cap(what: &'static str, value: usize, max: usize) -> Result<()> {
    if value > max {
        return Err(Error::SizeLimit { what, value, max });
    }
    Ok(())
}

fn even_chain(n: usize, min: usize) -> Result<()> {
    if n < min || !n.is_multiple_of(2) {
        return invalid(format!("need an even N >= {min}, got {n}"));
    }
    Ok(())
}

/// Battery observables relative to the initial battery energy.
struct Meter {
    battery_h: Vec<f64>,
    e0: f64,
    sre: bool,
}

impl Meter {
    fn new(n_b: usize, unit: SpinUnit, psi0: &StateVector, sre: bool) -> Result<Self> {
        let battery_h = build_battery_h(n_b, unit)?;
        let e0 = battery_energy(psi0, &battery_h)?;
        Ok(Self { battery_h, e0, sre })
    }

    /// (W, E, M₂); M₂ is NaN when not computed.
    fn measure(&self, psi: &StateVector) -> Result<(f64, f64, f64)> {
        let w = battery_energy(psi, &self.battery_h)? - self.e0;
        let e = ergotropy(&psi.partial_trace_battery()?, &self.battery_h)?;
        let m2 = if self.sre { sre2(psi)? } else { f64::NAN };
        Ok((w, e, m2))
    }
}

fn check_sre_cap(cfg: &ExperimentConfig) -> Result<()> {
    if cfg.compute_sre {
        size_cap("n_sites", cfg.n_sites, MAX_SITES_WITH_SRE)
    } else {
        size_cap("n_sites", cfg.n_sites, MAX_SITES_STATEVECTOR)
    }
}

/// Charges the domain wall under `H_B + H_C + interaction` and records
/// W, E, M₂ on the time grid.
fn charge(
    cfg: &ExperimentConfig,
    interaction: &dyn BasisAction,
    times: &[f64],
    seed: u64,
) -> Result<(RunRecord, f64)> {
    let n_b = cfg.n_sites / 2;
    let psi0 = StateVector::domain_wall(n_b)?;
    let h = Charging {
        n_b,
        unit: cfg.unit,
        interaction,
    };
    let prop = Propagator::in_sector(&h, &[(1usize << n_b) - 1])?;
    let meter = Meter::new(n_b, cfg.unit, &psi0, cfg.compute_sre)?;
    let m0 = psi0.total_magnetization();
    let rows: Vec<(f64, f64, f64, f64)> = times
        .par_iter()
        .map(|&t| {
            let psi = prop.evolve(&psi0, t)?;
            let (w, e, m2) = meter.measure(&psi)?;
            Ok((w, e, m2, (psi.total_magnetization() - m0).abs()))
        })
        .collect::<Result<_>>()?;
    let drift = rows.iter().map(|r| r.3).fold(0.0, f64::max);
    let record = RunRecord::from_series(
        times.to_vec(),
        rows.iter().map(|r| r.0).collect(),
        rows.iter().map(|r| r.1).collect(),
        rows.iter().map(|r| r.2).collect(),
        cfg.unit,
        seed,
    )?;
    Ok((record, drift))
}

#[derive(Clone, Debug, Serialize)]
pub struct XxzOutput {
    pub record: RunRecord,
    /// First grid time with E > 1e-6.
    pub onset_time: Option<f64>,
    /// Pearson r of ⟨M₂⟩ against ⟨E⟩ after the onset.
    pub avg_correlation: Option<f64>,
    pub magnetization_drift: f64,
}

pub fn run_xxz_charge(cfg: &ExperimentConfig) -> Result<XxzOutput> {
    even_chain(cfg.n_sites, 2)?;
    check_sre_cap(cfg)?;
    let times = cfg.time_grid()?;
    let xxz = Xxz {
        n_sites: cfg.n_sites,
        j: cfg.j,
        delta: cfg.delta,
    };
    let (mut record, drift) = charge(cfg, &xxz, &times, cfg.master_seed)?;
    record.params = serde_json::to_value(cfg)?;
    let onset = record.times.iter().zip(&record.e).find(|(_, &e)| e > 1e-6).map(|(&t, _)| t);
    let avg_correlation = onset.and_then(|t0| {
        let (x, y): (Vec<f64>, Vec<f64>) = record
            .times
            .iter()
            .zip(record.avg_e.iter().zip(&record.avg_m2))
            .filter(|(&t, _)| t >= t0)
            .map(|(_, (&e, &m))| (e, m))
            .unzip();
        pearson(&x, &y).ok()
    });
    Ok(XxzOutput {
        record,
        onset_time: onset,
        avg_correlation,
        magnetization_drift: drift,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct CsykOutput {
    pub average: DisorderAverage,
    /// M₂ ~ t^α over the growth window; absent when SRE is skipped.
    pub alpha: Option<FitResult>,
    /// E ~ t^β over the growth window.
    pub beta: FitResult,
    pub tanh_sum: Option<FitResult>,
    pub m2_sat: f64,
    pub rescaled_e: Vec<f64>,
    pub rescaled_m2: Vec<f64>,
    pub magnetization_drift: f64,
}

/// Growth-exponent window in units of 1/J.
pub const CSYK_GROWTH_WINDOW: (f64, f64) = (0.1, 1.0);

pub fn run_csyk_charge(cfg: &ExperimentConfig) -> Result<CsykOutput> {
    even_chain(cfg.n_sites, 4)?;
    size_cap("n_sites", cfg.n_sites, 12)?;
    check_sre_cap(cfg)?;
    let times = cfg.time_grid()?;
    let drifts = std::sync::Mutex::new(Vec::new());
    let run = |k: u64, mut rng: ChaCha8Rng| -> Result<RunRecord> {
        let couplings = CsykCouplings::sample(cfg.n_sites, cfg.j, &mut rng)?;
        let (record, drift) = charge(cfg, &couplings, &times, cfg.master_seed)?;
        drifts.lock().expect("drift lock").push((k, drift));
        Ok(record)
    };
    let mut average = disorder_average(run, cfg.n_disorder, cfg.master_seed)?;
    average.mean.params = serde_json::to_value(cfg)?;
    let drift = drifts.into_inner().expect("drift lock").iter().map(|d| d.1).fold(0.0, f64::max);
    let mean = &average.mean;
    let scale = 1.0 / cfg.j.abs();
    let (lo, hi) = (CSYK_GROWTH_WINDOW.0 * scale, CSYK_GROWTH_WINDOW.1 * scale);
    let beta = growth_exponent(&mean.times, &mean.e, lo, hi)?;
    let (alpha, tanh_sum, m2_sat) = if cfg.compute_sre {
        (
            Some(growth_exponent(&mean.times, &mean.m2, lo, hi)?),
            fit_tanh_sum(&mean.e, &mean.m2).ok(),
            tail_mean(&mean.m2, 0.2)?,
        )
    } else {
        (None, None, f64::NAN)
    };
    let (rescaled_e, rescaled_m2) = if m2_sat > 0.0 {
        master_curve_rescale(mean, m2_sat, cfg.n_sites)?
    } else {
        (Vec::new(), Vec::new())
    };
    Ok(CsykOutput {
        average,
        alpha,
        beta,
        tanh_sum,
        m2_sat,
        rescaled_e,
        rescaled_m2,
        magnetization_drift: drift,
    })
}

/// Max vertical distance between two master curves over their common Ẽ
/// range, using the leading stretch where Ẽ increases.
pub fn collapse_deviation(a: &CsykOutput, b: &CsykOutput) -> Result<f64> {
    let (xa, ya) = monotone_prefix(&a.rescaled_e, &a.rescaled_m2);
    let (xb, yb) = monotone_prefix(&b.rescaled_e, &b.rescaled_m2);
    max_curve_deviation(&xa, &ya, &xb, &yb, 400)
}

#[derive(Clone, Debug, Serialize)]
pub struct BrickwallOutput {
    pub average: DisorderAverage,
    /// Mean battery stabilizer rank per layer (Clifford family).
    pub rank: Option<Vec<f64>>,
    /// Mean rank-formula ergotropy per layer (Clifford family).
    pub rank_ergotropy: Option<Vec<f64>>,
    /// Tail-mean M₂ (U(1) family).
    pub m2_sat: Option<f64>,
    pub log2_central_binomial: f64,
    /// a₁ tanh(a₂ E^{a₃}) fit over the pre-saturation window (U(1) family).
    pub tanh_power: Option<FitResult>,
    /// Fit SSE over Σ(M₂ − mean)² on that window.
    pub tanh_power_relative_sse: Option<f64>,
    pub max_magnetization_violation: f64,
}

/// Samples before M₂ first reaches 95% of its saturation value.
pub fn presaturation_len(m2: &[f64], m2_sat: f64) -> usize {
    m2.iter().position(|&v| v >= 0.95 * m2_sat).unwrap_or(m2.len())
}

fn log2_binomial(n: usize, k: usize) -> f64 {
    let b = crate::stabilizer::binomial_big(n, k);
    num_traits::ToPrimitive::to_f64(&b).map(f64::log2).unwrap_or(f64::INFINITY)
}

struct TableauTrace {
    w: Vec<f64>,
    e: Vec<f64>,
    rank: Vec<f64>,
}

/// W, rank-formula E and r per layer from a Clifford tableau.
fn tableau_trace(spec: &CircuitSpec, source: &mut GateSource, unit: SpinUnit) -> Result<TableauTrace> {
    let n_b = spec.n_sites / 2;
    let mut tab = StabilizerTableau::domain_wall(n_b)?;
    let mut trace = TableauTrace {
        w: Vec::new(),
        e: Vec::new(),
        rank: Vec::new(),
    };
    let mut err = None;
    let mut record = |t: &StabilizerTableau| {
        let mz: i64 = t.magnetizations()[n_b..].iter().map(|&v| v as i64).sum();
        match t.battery_rank().and_then(|r| Ok((r.r, clifford_ergotropy(n_b, r.r, mz as f64)?))) {
            Ok((r, e)) => {
                // battery starts fully down: total σ_z = −n_b
                trace.w.push(unit.scale() * (mz + n_b as i64) as f64);
                trace.e.push(unit.scale() * e);
                trace.rank.push(r as f64);
            }
            Err(e) => err = Some(e),
        }
    };
    record(&tab);
    crate::evolution::run_brickwall_tableau(spec, source, &mut tab, |_, t| record(t))?;
    match err {
        Some(e) => Err(e),
        None => Ok(trace),
    }
}

pub fn run_brickwall(cfg: &ExperimentConfig) -> Result<BrickwallOutput> {
    even_chain(cfg.n_sites, 2)?;
    let clifford = matches!(cfg.family, GateFamily::Clifford2);
    let tableau_only = clifford && (cfg.tableau_only || cfg.n_sites > MAX_SITES_STATEVECTOR);
    if cfg.tableau_only && !clifford {
        return invalid("tableau-only runs need the Clifford gate family");
    }
    if tableau_only {
        size_cap("n_sites", cfg.n_sites, MAX_SITES_TABLEAU)?;
    } else {
        check_sre_cap(cfg)?;
    }
    let spec = CircuitSpec {
        n_sites: cfg.n_sites,
        depth: cfg.depth,
        first_layer_parity: cfg.first_layer_parity,
        family: cfg.family,
    };
    let layers: Vec<f64> = (0..=cfg.depth).map(|l| l as f64).collect();
    let n_b = cfg.n_sites / 2;

    struct Sample {
        record: RunRecord,
        rank: Option<TableauTrace>,
        violation: f64,
    }
    let samples: Vec<Sample> = (0..cfg.n_disorder as u64)
        .into_par_iter()
        .map(|k| -> Result<Sample> {
            let rng = trajectory_rng(cfg.master_seed, k);
            let rank = if clifford {
                let mut src = GateSource::new(cfg.family, rng.clone())?;
                Some(tableau_trace(&spec, &mut src, cfg.unit)?)
            } else {
                None
            };
            let (w, e, m2, violation) = if tableau_only {
                let t = rank.as_ref().expect("clifford trace");
                (t.w.clone(), t.e.clone(), vec![0.0; t.w.len()], 0.0)
            } else {
                let psi0 = StateVector::domain_wall(n_b)?;
                let meter = Meter::new(n_b, cfg.unit, &psi0, cfg.compute_sre)?;
                let mut src = GateSource::new(cfg.family, rng)?;
                let mut states = vec![psi0.clone()];
                states.extend(run_circuit(&spec, &mut src, &psi0, true)?);
                let m0 = psi0.total_magnetization();
                let mut w = Vec::new();
                let mut e = Vec::new();
                let mut m2 = Vec::new();
                let mut viol: f64 = 0.0;
                for s in &states {
                    let (a, b, c) = meter.measure(s)?;
                    w.push(a);
                    e.push(b);
                    m2.push(c);
                    viol = viol.max((s.total_magnetization() - m0).abs());
                }
                (w, e, m2, viol)
            };
            let mut record = RunRecord::from_series(layers.clone(), w, e, m2, cfg.unit, cfg.master_seed)?;
            record.stream = Some(k);
            Ok(Sample {
                record,
                rank,
                violation,
            })
        })
        .collect::<Result<_>>()?;

    let violation = samples.iter().map(|s| s.violation).fold(0.0, f64::max);
    let (rank, rank_ergotropy) = if clifford {
        let n = samples.len() as f64;
        let mean = |f: fn(&TableauTrace) -> &Vec<f64>| -> Vec<f64> {
            (0..layers.len())
                .map(|l| samples.iter().map(|s| f(s.rank.as_ref().expect("trace"))[l]).sum::<f64>() / n)
                .collect()
        };
        (Some(mean(|t| &t.rank)), Some(mean(|t| &t.e)))
    } else {
        (None, None)
    };
    let mut average = average_records(samples.into_iter().map(|s| s.record).collect())?;
    average.mean.params = serde_json::to_value(cfg)?;

    let (mut m2_sat, mut tanh_power, mut rel) = (None, None, None);
    if matches!(cfg.family, GateFamily::U1Haar2) && cfg.compute_sre {
        let mean = &average.mean;
        let sat = tail_mean(&mean.m2, 0.2)?;
        m2_sat = Some(sat);
        let cut = presaturation_len(&mean.m2, sat);
        if cut >= 8 {
            let fit = fit_tanh_power(&mean.e[..cut], &mean.m2[..cut])?;
            let y = &mean.m2[..cut];
            let mu = y.iter().sum::<f64>() / cut as f64;
            let ss: f64 = y.iter().map(|v| (v - mu).powi(2)).sum();
            rel = Some(if ss > 0.0 { fit.residual_sse / ss } else { f64::INFINITY });
            tanh_power = Some(fit);
        }
    }
    Ok(BrickwallOutput {
        average,
        rank,
        rank_ergotropy,
        m2_sat,
        log2_central_binomial: log2_binomial(cfg.n_sites, n_b),
        tanh_power,
        tanh_power_relative_sse: rel,
        max_magnetization_violation: violation,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PmaxRecord {
    pub h: f64,
    pub gamma: f64,
    /// M₂ of the ground state, bits.
    pub initial_sre: f64,
    /// max_k W(k)/k, energy per pulse.
    pub p_max: f64,
    pub argmax_k: usize,
    pub ground_energy: f64,
    /// Parity of the number of up spins in the chosen ground state.
    pub odd_parity: bool,
}

/// Ground state of an action that conserves Π σ_z: the lower of the two
/// parity-sector ground states, ties within 1e-10 going to even parity.
pub fn parity_ground_state(h: &dyn BasisAction) -> Result<(f64, StateVector, bool)> {
    let n = h.n_sites();
    let mut best: Option<(f64, StateVector, bool)> = None;
    for odd in [false, true] {
        let basis: Vec<usize> = (0..1usize << n).filter(|s| (s.count_ones() % 2 == 1) == odd).collect();
        let spec = hermitian_eig(&restricted_matrix(h, &basis))?;
        let e0 = spec.eigenvalues[0];
        let mut amps = vec![C64::new(0.0, 0.0); 1 << n];
        for (k, &s) in basis.iter().enumerate() {
            amps[s] = spec.eigenvectors[(k, 0)];
        }
        let mut psi = StateVector::from_amplitudes(n, amps)?;
        psi.normalize();
        if best.as_ref().is_none_or(|b| e0 < b.0 - 1e-10) {
            best = Some((e0, psi, odd));
        }
    }
    Ok(best.expect("two sectors"))
}

pub fn run_xy_pulsed(cfg: &ExperimentConfig) -> Result<Vec<PmaxRecord>> {
    if cfg.n_sites < 2 {
        return invalid("XY chain needs at least two sites");
    }
    size_cap("n_sites", cfg.n_sites, MAX_SITES_XY)?;
    if cfg.k_max < 1 {
        return invalid("k_max must be >= 1");
    }
    if cfg.gammas.is_empty() {
        return invalid("need at least one gamma");
    }
    let hs = cfg.h_grid()?;
    let points: Vec<(f64, f64)> = cfg.gammas.iter().flat_map(|&g| hs.iter().map(move |&h| (g, h))).collect();
    points
        .par_iter()
        .map(|&(gamma, h)| {
            let xy = Xy {
                n_sites: cfg.n_sites,
                j_prime: cfg.j_prime,
                gamma,
                h_prime: h * cfg.j_prime,
            };
            let (e_gs, gs, odd) = parity_ground_state(&xy)?;
            let initial_sre = sre2(&gs)?;
            let mut psi = gs;
            let (mut p_max, mut argmax) = (f64::NEG_INFINITY, 0);
            for k in 1..=cfg.k_max {
                apply_pulse(&mut psi)?;
                let w = action_expectation(&xy, &psi)? - e_gs;
                let p = w / k as f64;
                if p > p_max {
                    p_max = p;
                    argmax = k;
                }
            }
            Ok(PmaxRecord {
                h,
                gamma,
                initial_sre,
                p_max,
                argmax_k: argmax,
                ground_energy: e_gs,
                odd_parity: odd,
            })
        })
        .collect()
}

/// Two grid points at one γ whose initial M₂ agree within `sre_tol`
/// (relative) while P_max differs by more than `pmax_tol` (relative).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InjectivityWitness {
    pub a: PmaxRecord,
    pub b: PmaxRecord,
    pub sre_rel: f64,
    pub pmax_rel: f64,
}

fn rel_diff(a: f64, b: f64) -> f64 {
    let s = a.abs().max(b.abs());
    if s == 0.0 {
        0.0
    } else {
        (a - b).abs() / s
    }
}

/// The pair with the largest P_max spread among those meeting the SRE
/// tolerance, if any exceeds `pmax_tol`.
pub fn injectivity_witness(records: &[PmaxRecord], gamma: f64, sre_tol: f64, pmax_tol: f64) -> Option<InjectivityWitness> {
    let rs: Vec<&PmaxRecord> = records.iter().filter(|r| (r.gamma - gamma).abs() < 1e-12).collect();
    let mut best: Option<InjectivityWitness> = None;
    for (i, a) in rs.iter().enumerate() {
        for b in &rs[i + 1..] {
            let sre_rel = rel_diff(a.initial_sre, b.initial_sre);
            let pmax_rel = rel_diff(a.p_max, b.p_max);
            if sre_rel <= sre_tol && pmax_rel > pmax_tol && best.as_ref().is_none_or(|w| pmax_rel > w.pmax_rel) {
                best = Some(InjectivityWitness {
                    a: (*a).clone(),
                    b: (*b).clone(),
                    sre_rel,
                    pmax_rel,
                });
            }
        }
    }
    best
}

/// Record with the largest P_max at `gamma`, and its initial M₂ over the
/// largest initial M₂ at that γ.
pub fn global_pmax(records: &[PmaxRecord], gamma: f64) -> Option<(PmaxRecord, f64)> {
    let rs: Vec<&PmaxRecord> = records.iter().filter(|r| (r.gamma - gamma).abs() < 1e-12).collect();
    let top = rs.iter().copied().max_by(|a, b| a.p_max.total_cmp(&b.p_max))?;
    let m_max = rs.iter().map(|r| r.initial_sre).fold(f64::NEG_INFINITY, f64::max);
    let ratio = if m_max > 0.0 { top.initial_sre / m_max } else { 0.0 };
    Some((top.clone(), ratio))
}

pub fn pmax_csv(records: &[PmaxRecord]) -> String {
    let mut out = String::from("gamma,h,initial_sre,p_max,argmax_k,ground_energy\n");
    for r in records {
        out.push_str(&format!(
            "{:.16e},{:.16e},{:.16e},{:.16e},{},{:.16e}\n",
            r.gamma, r.h, r.initial_sre, r.p_max, r.argmax_k, r.ground_energy
        ));
    }
    out
}

/// Result of any scenario.
#[derive(Clone, Debug, Serialize)]
#[serde(tag = "scenario", rename_all = "snake_case")]
pub enum ExperimentOutput {
    XxzCharge(XxzOutput),
    CsykCharge(CsykOutput),
    Brickwall(BrickwallOutput),
    XyPulsed { records: Vec<PmaxRecord> },
}

pub fn run(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    Ok(match cfg.scenario {
        Scenario::XxzCharge => ExperimentOutput::XxzCharge(run_xxz_charge(cfg)?),
        Scenario::CsykCharge => ExperimentOutput::CsykCharge(run_csyk_charge(cfg)?),
        Scenario::Brickwall => ExperimentOutput::Brickwall(run_brickwall(cfg)?),
        Scenario::XyPulsed => ExperimentOutput::XyPulsed {
            records: run_xy_pulsed(cfg)?,
        },
    })
}

impl ExperimentOutput {
    /// Main CSV body.
    pub fn csv(&self) -> String {
        match self {
            ExperimentOutput::XxzCharge(o) => o.record.to_csv(),
            ExperimentOutput::CsykCharge(o) => o.average.mean.to_csv(),
            ExperimentOutput::Brickwall(o) => o.average.mean.to_csv(),
            ExperimentOutput::XyPulsed { records } => pmax_csv(records),
        }
    }

    /// Sidecar JSON: the effective config plus scenario diagnostics.
    pub fn sidecar(&self, cfg: &ExperimentConfig) -> Result<serde_json::Value> {
        let config = serde_json::to_value(cfg)?;
        Ok(match self {
            ExperimentOutput::XxzCharge(o) => o.record.sidecar(json!({
                "config": config,
                "onset_time": o.onset_time,
                "avg_correlation": o.avg_correlation,
                "magnetization_drift": o.magnetization_drift,
            })),
            ExperimentOutput::CsykCharge(o) => o.average.mean.sidecar(json!({
                "config": config,
                "alpha": o.alpha,
                "beta": o.beta,
                "tanh_sum": o.tanh_sum,
                "m2_sat": o.m2_sat,
                "magnetization_drift": o.magnetization_drift,
                "stderr_w": o.average.stderr_w,
                "stderr_e": o.average.stderr_e,
                "stderr_m2": o.average.stderr_m2,
                "streams": o.average.samples.iter().map(|s| s.stream).collect::<Vec<_>>(),
            })),
            ExperimentOutput::Brickwall(o) => o.average.mean.sidecar(json!({
                "config": config,
                "rank": o.rank,
                "rank_ergotropy": o.rank_ergotropy,
                "m2_sat": o.m2_sat,
                "log2_central_binomial": o.log2_central_binomial,
                "tanh_power": o.tanh_power,
                "tanh_power_relative_sse": o.tanh_power_relative_sse,
                "max_magnetization_violation": o.max_magnetization_violation,
                "streams": o.average.samples.iter().map(|s| s.stream).collect::<Vec<_>>(),
            })),
            ExperimentOutput::XyPulsed { records } => json!({
                "config": config,
                "unit": cfg.unit,
                "seed": cfg.master_seed,
                "rows": records.len(),
                "columns": ["gamma", "h", "initial_sre", "p_max", "argmax_k", "ground_energy"],
            }),
        })
    }

    pub fn stem(&self, cfg: &ExperimentConfig) -> String {
        match self {
            ExperimentOutput::XxzCharge(_) => format!("xxz-n{}", cfg.n_sites),
            ExperimentOutput::CsykCharge(_) => format!("csyk-n{}", cfg.n_sites),
            ExperimentOutput::Brickwall(_) => format!("brickwall-{}-n{}", cfg.family.name(), cfg.n_sites),
            ExperimentOutput::XyPulsed { .. } => format!("xy-pulsed-n{}", cfg.n_sites),
        }
    }

    /// Writes `<stem>.csv` and `<stem>.json` into `dir`.
    pub fn write(&self, cfg: &ExperimentConfig, dir: &Path) -> Result<(PathBuf, PathBuf)> {
        std::fs::create_dir_all(dir)?;
        let stem = self.stem(cfg);
        let csv = dir.join(format!("{stem}.csv"));
        let json = dir.join(format!("{stem}.json"));
        std::fs::write(&csv, self.csv())?;
        std::fs::write(&json, serde_json::to_string_pretty(&self.sidecar(cfg)?)?)?;
        Ok((csv, json))
    }
}
