//! Acceptance gate: one PASS/FAIL line per criterion, nonzero exit if any fails.

use std::time::{Duration, Instant};

use rand_distr::{Distribution, StandardNormal};

use qbmagic::analysis::{fit_power_law, perturbative_predictions};
use qbmagic::evolution::{run_brickwall, run_brickwall_tableau, sample_clifford2, trajectory_rng, CircuitSpec, GateFamily, GateSource, LayerParity};
use qbmagic::experiments::{
    collapse_deviation, global_pmax, injectivity_witness, run, run_csyk_charge, run_xxz_charge, run_xy_pulsed,
    ExperimentConfig, Scenario,
};
use qbmagic::hilbert::{StateVector, C64};
use qbmagic::models::{build_battery_h, SpinUnit};
use qbmagic::observables::{block_state_model, ergotropy, sre2, sre_fast, sre_naive, steady_ergotropy_exact};
use qbmagic::stabilizer::{asymptotic_ergotropy, clifford_ergotropy, StabilizerTableau};
use qbmagic::Result;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Result<Outcome> {
    Ok(Outcome {
        passed,
        detail: detail.into(),
    })
}

fn random_state(n: usize, rng: &mut rand_chacha::ChaCha8Rng) -> StateVector {
    let amps = (0..1usize << n)
        .map(|_| C64::new(StandardNormal.sample(&mut *rng), StandardNormal.sample(&mut *rng)))
        .collect();
    let mut psi = StateVector::from_amplitudes(n, amps).unwrap();
    psi.normalize();
    psi
}

fn two_site_exact() -> Result<Outcome> {
    // 200 points on [0, 10]
    let cfg = ExperimentConfig {
        t_max: 9.95,
        dt: 0.05,
        ..ExperimentConfig::new(Scenario::XxzCharge, 2)
    };
    let r = run_xxz_charge(&cfg)?.record;
    let mut worst: f64 = 0.0;
    for k in 0..r.len() {
        let t = r.times[k];
        let m2 = -((1.0 + t.sin().powi(4) + t.cos().powi(4)) / 2.0).log2();
        worst = worst.max((r.m2[k] - m2).abs()).max((r.w[k] - (t / 2.0).sin().powi(2)).abs());
    }
    outcome(r.len() == 200 && worst < 1e-9, format!("{} points, max error {worst:.2e}", r.len()))
}

fn perturbative() -> Result<Outcome> {
    let (mut dw, mut dm, mut e_max) = (0.0f64, 0.0f64, 0.0f64);
    for n in [4, 6, 8] {
        let cfg = ExperimentConfig {
            t_max: 0.3,
            dt: 0.01,
            ..ExperimentConfig::new(Scenario::XxzCharge, n)
        };
        let r = run_xxz_charge(&cfg)?.record;
        for k in 0..r.len() {
            let p = perturbative_predictions(1.0, r.times[k]);
            dw = dw.max((r.w[k] - p.w).abs());
            dm = dm.max((r.m2[k] - p.m2).abs());
            e_max = e_max.max(r.e[k]);
        }
    }
    outcome(
        dw < 5e-3 && dm < 5e-3 && e_max < 1e-3,
        format!("|dW| {dw:.2e}, |dM2| {dm:.2e}, max E {e_max:.2e}"),
    )
}

fn sre_equivalence() -> Result<Outcome> {
    let mut rng = trajectory_rng(31, 0);
    let mut dual: f64 = 0.0;
    for k in 0..100 {
        let psi = random_state(2 + k % 5, &mut rng);
        dual = dual.max((sre_fast(&psi, 2.0)?.value - sre_naive(&psi, 2.0)?.value).abs());
    }
    let mut additivity: f64 = 0.0;
    for _ in 0..20 {
        let a = random_state(4, &mut rng);
        let b = random_state(3, &mut rng);
        additivity = additivity.max((sre2(&a.tensor(&b)?)? - sre2(&a)? - sre2(&b)?).abs());
    }
    let mut invariance: f64 = 0.0;
    for k in 0..20 {
        let n = 3 + k % 4;
        let mut psi = random_state(n, &mut rng);
        let before = sre2(&psi)?;
        for _ in 0..3 * n {
            let i = rand::Rng::random_range(&mut rng, 0..n);
            let j = (i + rand::Rng::random_range(&mut rng, 1..n)) % n;
            psi.apply_two_site(&sample_clifford2(&mut rng).to_matrix(), i, j)?;
        }
        invariance = invariance.max((sre2(&psi)? - before).abs());
    }
    outcome(
        dual < 1e-9 && additivity < 1e-8 && invariance < 1e-8,
        format!("fast vs naive {dual:.2e}, additivity {additivity:.2e}, clifford invariance {invariance:.2e}"),
    )
}

fn tableau_equivalence() -> Result<Outcome> {
    let (n, n_b, depth) = (10, 5, 20);
    let levels = build_battery_h(n_b, SpinUnit::Full)?;
    let spec = CircuitSpec {
        n_sites: n,
        depth,
        first_layer_parity: LayerParity::Odd,
        family: GateFamily::Clifford2,
    };
    let psi0 = StateVector::domain_wall(n_b)?;
    let (mut mismatches, mut worst_e, mut worst_m2) = (0usize, 0.0f64, 0.0f64);
    for c in 0..50u64 {
        let rng = trajectory_rng(4242, c);
        let states = run_brickwall(&spec, &mut GateSource::new(spec.family, rng.clone())?, &psi0, true)?;
        let mut tabs = Vec::new();
        let mut tab = StabilizerTableau::domain_wall(n_b)?;
        run_brickwall_tableau(&spec, &mut GateSource::new(spec.family, rng)?, &mut tab, |_, t| tabs.push(t.clone()))?;
        for (psi, t) in states.iter().zip(&tabs) {
            let mz_tab = t.magnetizations();
            let mz_sv = psi.magnetizations();
            if mz_tab.iter().zip(&mz_sv).any(|(&a, &b)| (a as f64 - b).abs() > 1e-9) {
                mismatches += 1;
            }
            let rank = t.battery_rank()?;
            let rho = psi.partial_trace_battery()?;
            let spectrum = rho.spectrum()?.eigenvalues;
            let support = spectrum.iter().filter(|&&p| p > 1e-9).count();
            let flat = spectrum.iter().filter(|&&p| p > 1e-9).all(|&p| (p - rank.eigenvalue()).abs() < 1e-9);
            if support != 1usize << rank.support_log2() || !flat {
                mismatches += 1;
            }
            let total: i64 = mz_tab[n_b..].iter().map(|&v| v as i64).sum();
            let e_rank = clifford_ergotropy(n_b, rank.r, total as f64)?;
            worst_e = worst_e.max((e_rank - ergotropy(&rho, &levels)?).abs());
            worst_m2 = worst_m2.max(sre2(psi)?.abs());
        }
    }
    outcome(
        mismatches == 0 && worst_e < 1e-9 && worst_m2 < 1e-9,
        format!("50 circuits x {depth} layers: {mismatches} mismatches, |dE| {worst_e:.2e}, max M2 {worst_m2:.2e}"),
    )
}

fn proposition_convergence() -> Result<Outcome> {
    let sizes = [16usize, 32, 64, 128];
    let gaps = sizes
        .iter()
        .map(|&n_b| Ok((asymptotic_ergotropy(n_b, n_b / 2)? - clifford_ergotropy(n_b, n_b / 2, 0.0)?).abs() / n_b as f64))
        .collect::<Result<Vec<f64>>>()?;
    let decreasing = gaps.windows(2).all(|w| w[1] < w[0]);
    let text = sizes.iter().zip(&gaps).map(|(n, g)| format!("{n}: {g:.4}")).collect::<Vec<_>>().join(", ");
    outcome(gaps[1] < 0.08 && gaps[2] < 0.05 && decreasing, format!("gap/n_b {text}"))
}

fn sqrt_n_scaling() -> Result<Outcome> {
    let ns = [8usize, 12, 16, 20];
    let e = ns
        .iter()
        .map(|&n| steady_ergotropy_exact(&block_state_model(n)?))
        .collect::<Result<Vec<f64>>>()?;
    let x: Vec<f64> = ns.iter().map(|&n| n as f64).collect();
    let a2 = fit_power_law(&x, &e)?.parameters[1];
    let ratio = e[2] / (16.0 / (4.0 * std::f64::consts::PI)).sqrt();
    outcome(
        (0.4..=0.6).contains(&a2) && (ratio - 1.0).abs() <= 0.15,
        format!("exponent {a2:.3}, E(16)/sqrt(16/4pi) = {ratio:.3}, E = {e:.3?}"),
    )
}

fn csyk(n: usize, seed: u64) -> Result<qbmagic::experiments::CsykOutput> {
    run_csyk_charge(&ExperimentConfig {
        n_disorder: 8,
        master_seed: seed,
        ..ExperimentConfig::new(Scenario::CsykCharge, n)
    })
}

fn growth_exponents() -> Result<Outcome> {
    let o = csyk(8, 1234)?;
    let a = o.alpha.as_ref().map_or(f64::NAN, |f| f.parameters[1]);
    let b = o.beta.parameters[1];
    outcome(
        (1.5..=2.5).contains(&a) && (1.5..=2.5).contains(&b) && o.magnetization_drift < 1e-9,
        format!("alpha {a:.3}, beta {b:.3}, magnetization drift {:.2e}", o.magnetization_drift),
    )
}

fn master_curve() -> Result<Outcome> {
    let d = collapse_deviation(&csyk(6, 1234)?, &csyk(8, 1234)?)?;
    outcome(d < 0.1, format!("max vertical deviation {d:.4} (N = 6 vs 8)"))
}

fn u1_saturation() -> Result<Outcome> {
    let o = match run(&ExperimentConfig {
        family: GateFamily::U1Haar2,
        depth: 60,
        n_disorder: 20,
        master_seed: 1234,
        ..ExperimentConfig::new(Scenario::Brickwall, 10)
    })? {
        qbmagic::experiments::ExperimentOutput::Brickwall(o) => o,
        _ => unreachable!(),
    };
    let sat = o.m2_sat.unwrap_or(f64::NAN);
    let rel = (sat - o.log2_central_binomial).abs() / o.log2_central_binomial;
    let sse = o.tanh_power_relative_sse.unwrap_or(f64::INFINITY);
    outcome(
        rel < 0.15 && sse < 0.05,
        format!(
            "M2sat {sat:.3} vs log2 C(10,5) {:.3} ({:.1}%), tanh-power SSE/variance {sse:.4}",
            o.log2_central_binomial,
            100.0 * rel
        ),
    )
}

fn xy_non_monotonic() -> Result<Outcome> {
    let records = run_xy_pulsed(&ExperimentConfig {
        gammas: vec![0.2, 1.0],
        ..ExperimentConfig::new(Scenario::XyPulsed, 8)
    })?;
    let peak = |g: f64| {
        records
            .iter()
            .filter(|r| r.gamma == g)
            .max_by(|a, b| a.initial_sre.total_cmp(&b.initial_sre))
            .map(|r| r.h)
            .unwrap_or(f64::NAN)
    };
    let (peak1, peak02) = (peak(1.0), peak(0.2));
    let witness = injectivity_witness(&records, 0.2, 0.05, 0.2);
    let g1 = global_pmax(&records, 1.0).expect("gamma 1 records");
    let g02 = global_pmax(&records, 0.2).expect("gamma 0.2 records");
    let w_text = match &witness {
        Some(w) => format!("h {:.2} vs {:.2} (dM2 {:.1}%, dPmax {:.1}%)", w.a.h, w.b.h, 100.0 * w.sre_rel, 100.0 * w.pmax_rel),
        None => "none".into(),
    };
    outcome(
        (0.8..=1.2).contains(&peak1) && witness.is_some() && g1.1 < 0.25 && g02.1 < 0.25,
        format!(
            "M2 peak at h {peak1:.2} (gamma 1; gamma 0.2 peaks at {peak02:.2}), witness {w_text}, \
             global Pmax at h {:.2}/{:.2} with M2 ratio {:.3}/{:.3} (gamma 1/0.2)",
            g1.0.h, g02.0.h, g1.1, g02.1
        ),
    )
}

fn reproducibility() -> Result<Outcome> {
    let configs = [
        ExperimentConfig {
            t_max: 5.0,
            master_seed: 7,
            ..ExperimentConfig::new(Scenario::XxzCharge, 6)
        },
        ExperimentConfig {
            t_max: 3.0,
            n_disorder: 4,
            master_seed: 7,
            ..ExperimentConfig::new(Scenario::CsykCharge, 6)
        },
        ExperimentConfig {
            depth: 10,
            n_disorder: 4,
            master_seed: 7,
            ..ExperimentConfig::new(Scenario::Brickwall, 8)
        },
        ExperimentConfig {
            depth: 10,
            n_disorder: 4,
            master_seed: 7,
            family: GateFamily::Clifford2,
            ..ExperimentConfig::new(Scenario::Brickwall, 8)
        },
        ExperimentConfig {
            h_step: 0.25,
            k_max: 16,
            master_seed: 7,
            ..ExperimentConfig::new(Scenario::XyPulsed, 6)
        },
    ];
    let mut identical = 0;
    for cfg in &configs {
        let runs = [1usize, 4]
            .iter()
            .map(|&t| {
                let pool = rayon::ThreadPoolBuilder::new().num_threads(t).build().expect("pool");
                pool.install(|| run(cfg)).map(|o| o.csv().into_bytes())
            })
            .collect::<Result<Vec<_>>>()?;
        if runs[0] == runs[1] {
            identical += 1;
        }
    }
    outcome(
        identical == configs.len(),
        format!("{identical}/{} scenarios byte-identical across reruns (1 and 4 threads)", configs.len()),
    )
}

fn main() {
    type Criterion = (&'static str, fn() -> Result<Outcome>, Duration);
    let criteria: [Criterion; 11] = [
        ("two-site closed form", two_site_exact, Duration::from_secs(1)),
        ("perturbative short-time oracle", perturbative, Duration::from_secs(60)),
        ("sre dual implementation", sre_equivalence, Duration::from_secs(120)),
        ("clifford tableau equivalence", tableau_equivalence, Duration::from_secs(120)),
        ("asymptotic ergotropy convergence", proposition_convergence, Duration::from_secs(1)),
        ("steady ergotropy sqrt(N) scaling", sqrt_n_scaling, Duration::from_secs(1)),
        ("csyk growth exponents", growth_exponents, Duration::from_secs(600)),
        ("csyk master-curve collapse", master_curve, Duration::from_secs(900)),
        ("u1 brick-wall saturation", u1_saturation, Duration::from_secs(1200)),
        ("xy pulsed non-monotonicity", xy_non_monotonic, Duration::from_secs(300)),
        ("reproducibility", reproducibility, Duration::from_secs(600)),
    ];
    let mut failed = 0;
    for (k, (name, check, budget)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = check();
        let took = start.elapsed();
        let (passed, detail) = match result {
            Ok(o) => (o.passed && took <= *budget, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        if !passed {
            failed += 1;
        }
        println!(
            "{} criterion {}: {name}: {detail} [{:.2}s of {}s]",
            if passed { "PASS" } else { "FAIL" },
            k + 1,
            took.as_secs_f64(),
            budget.as_secs()
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
