//! Closed-form oracle suite behind the `selftest` command.

use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::analysis::perturbative_predictions;
use crate::evolution::{pulsed_charge, trajectory_rng};
use crate::experiments::{run_xxz_charge, ExperimentConfig, Scenario};
use crate::hilbert::{StateVector, C64};
use crate::observables::{block_state_model, sre_fast, sre_naive, steady_ergotropy_exact};
use crate::stabilizer::{asymptotic_ergotropy, clifford_ergotropy, symplectic_table};

#[derive(Clone, Debug, Serialize)]
pub struct OracleCheck {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, result: crate::Result<(bool, String)>) -> OracleCheck {
    match result {
        Ok((passed, detail)) => OracleCheck { name, passed, detail },
        Err(e) => OracleCheck {
            name,
            passed: false,
            detail: format!("error: {e}"),
        },
    }
}

fn two_site_closed_form() -> crate::Result<(bool, String)> {
    let cfg = ExperimentConfig {
        t_max: 10.0,
        ..ExperimentConfig::new(Scenario::XxzCharge, 2)
    };
    let r = run_xxz_charge(&cfg)?.record;
    let mut worst: f64 = 0.0;
    for k in 0..r.len() {
        let t = r.times[k];
        let m2 = -((1.0 + t.sin().powi(4) + t.cos().powi(4)) / 2.0).log2();
        worst = worst.max((r.w[k] - (t / 2.0).sin().powi(2)).abs());
        worst = worst.max((r.m2[k] - m2).abs());
    }
    Ok((worst < 1e-9, format!("max error {worst:.2e}")))
}

fn perturbative_n4() -> crate::Result<(bool, String)> {
    let cfg = ExperimentConfig {
        t_max: 0.3,
        dt: 0.01,
        ..ExperimentConfig::new(Scenario::XxzCharge, 4)
    };
    let r = run_xxz_charge(&cfg)?.record;
    let mut worst: f64 = 0.0;
    for k in 0..r.len() {
        let p = perturbative_predictions(1.0, r.times[k]);
        worst = worst.max((r.w[k] - p.w).abs()).max((r.m2[k] - p.m2).abs()).max(r.e[k]);
    }
    Ok((worst < 5e-3, format!("max deviation {worst:.2e}")))
}

fn sre_dual() -> crate::Result<(bool, String)> {
    let mut rng = trajectory_rng(2024, 0);
    let mut worst: f64 = 0.0;
    for n in 2..=5 {
        let amps = (0..1usize << n)
            .map(|_| C64::new(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng)))
            .collect();
        let mut psi = StateVector::from_amplitudes(n, amps)?;
        psi.normalize();
        worst = worst.max((sre_fast(&psi, 2.0)?.value - sre_naive(&psi, 2.0)?.value).abs());
    }
    Ok((worst < 1e-9, format!("max |fast - naive| {worst:.2e}")))
}

fn single_qubit_sre() -> crate::Result<(bool, String)> {
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let psi = StateVector::from_amplitudes(1, vec![C64::new(r, 0.0), C64::from_polar(r, std::f64::consts::FRAC_PI_4)])?;
    let got = sre_fast(&psi, 2.0)?.value;
    let want = (4.0f64 / 3.0).log2();
    Ok(((got - want).abs() < 1e-12, format!("{got:.12} vs {want:.12}")))
}

fn clifford_rank_formula() -> crate::Result<(bool, String)> {
    let e = clifford_ergotropy(3, 1, 0.0)?;
    Ok(((e - 1.5).abs() < 1e-15, format!("E(n_b=3, r=1, mz=0) = {e}")))
}

fn asymptotic_convergence() -> crate::Result<(bool, String)> {
    let gap = |n_b: usize| -> crate::Result<f64> {
        Ok((asymptotic_ergotropy(n_b, n_b / 2)? - clifford_ergotropy(n_b, n_b / 2, 0.0)?).abs() / n_b as f64)
    };
    let (g32, g64) = (gap(32)?, gap(64)?);
    Ok((g32 < 0.08 && g64 < 0.05 && g64 < g32, format!("gap 32: {g32:.4}, gap 64: {g64:.4}")))
}

fn block_model_n4() -> crate::Result<(bool, String)> {
    let e = steady_ergotropy_exact(&block_state_model(4)?)?;
    Ok(((e - 1.0 / 6.0).abs() < 1e-14, format!("E(N=4) = {e:.15}")))
}

fn clifford_group_order() -> crate::Result<(bool, String)> {
    let n = symplectic_table().len();
    Ok((n == 720, format!("{n} symplectic images x 16 signs")))
}

fn pulse_period() -> crate::Result<(bool, String)> {
    let psi = StateVector::domain_wall(2)?;
    let after = pulsed_charge(&psi, 8)?.pop().expect("eight pulses");
    let overlap = psi.inner(&after).norm();
    Ok(((overlap - 1.0).abs() < 1e-12, format!("|<psi|U^8 psi>| = {overlap:.15}")))
}

/// Runs every oracle; the suite passes when all entries pass.
pub fn run_oracles() -> Vec<OracleCheck> {
    vec![
        check("two-site closed form", two_site_closed_form()),
        check("perturbative N=4", perturbative_n4()),
        check("sre fast vs naive", sre_dual()),
        check("single-qubit sre", single_qubit_sre()),
        check("clifford rank ergotropy", clifford_rank_formula()),
        check("asymptotic ergotropy", asymptotic_convergence()),
        check("block model N=4", block_model_n4()),
        check("clifford group order", clifford_group_order()),
        check("pulse period", pulse_period()),
    ]
}

#[cfg(test)]
mod tests {
    #[test]
    fn all_oracles_pass() {
        for c in super::run_oracles() {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }
}
