use std::hash::{BuildHasher, Hasher};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Map, Value};

use qbmagic::experiments::{run, ExperimentConfig, Scenario};
use qbmagic::hilbert::StateVector;
use qbmagic::observables::sre_fast;
use qbmagic::selftest::run_oracles;
use qbmagic::Error;

/// Quantum-battery charging simulations: work, ergotropy and stabilizer
/// Rényi entropy.
#[derive(Parser, Debug)]
#[command(
    name = "qbmagic",
    version,
    after_help = "Units: energies in units of J (or J' for xy-pulsed), times in 1/J, \
M2 in bits, battery energy in S_z = sigma_z/2 units unless --unit full.\n\
Exit codes: 0 ok, 1 runtime failure, 2 bad arguments or config, 3 size limit exceeded."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Domain-wall charging through an XXZ chain.
    Xxz(XxzArgs),
    /// Disorder-averaged charging through complex SYK couplings.
    Csyk(CsykArgs),
    /// Brick-wall random circuits on the domain-wall state.
    Brickwall(BrickwallArgs),
    /// Pulsed σ_x charging of the XY ground state; P_max per field value.
    XyPulsed(XyArgs),
    /// Print M_α (bits) of a state stored in a QBSV file.
    Sre {
        /// QBSV file: "QBSV", version u16, N u16, 2^N little-endian (re, im) f64 pairs.
        file: PathBuf,
        /// Rényi index α (dimensionless, α ≠ 1).
        #[arg(long, default_value_t = 2.0)]
        alpha: f64,
    },
    /// Run the closed-form oracle suite.
    Selftest,
}

#[derive(Args, Debug)]
struct Common {
    /// JSON config file; flags given on the command line override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Number of sites N (charger + battery).
    #[arg(long)]
    n: Option<usize>,
    /// Master seed (integer). Omitted: drawn from OS entropy and recorded in the sidecar.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: available cores). Affects wall time only.
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory for the CSV and JSON sidecar (default: config `output`, else ".").
    #[arg(long)]
    out: Option<PathBuf>,
    /// Energy unit of H_B and H_C: half (S_z = σ_z/2) or full (σ_z).
    #[arg(long, value_enum)]
    unit: Option<UnitArg>,
    /// Skip the stabilizer Rényi entropy (M2 column becomes NaN).
    #[arg(long)]
    no_sre: bool,
}

#[derive(Args, Debug)]
struct TimeArgs {
    /// Coupling J (energy).
    #[arg(long)]
    j: Option<f64>,
    /// Final time t_max in units of 1/J.
    #[arg(long)]
    tmax: Option<f64>,
    /// Time step δt in units of 1/J.
    #[arg(long)]
    dt: Option<f64>,
}

#[derive(Args, Debug)]
struct XxzArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    time: TimeArgs,
    /// Anisotropy Δ (dimensionless).
    #[arg(long)]
    delta: Option<f64>,
}

#[derive(Args, Debug)]
struct CsykArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    time: TimeArgs,
    /// Disorder realizations (count).
    #[arg(long)]
    disorder: Option<usize>,
}

#[derive(Args, Debug)]
struct BrickwallArgs {
    #[command(flatten)]
    common: Common,
    /// Gate family.
    #[arg(long, value_enum)]
    family: Option<FamilyArg>,
    /// Gate coupling scale J for Hamiltonian-generated gates (energy); J_ij ~ U[0, J].
    #[arg(long, default_value_t = 1.0)]
    gate_j: f64,
    /// Gate time τ for Hamiltonian-generated gates (units of 1/J).
    #[arg(long, default_value_t = 1.0)]
    tau: f64,
    /// Circuit depth (layers).
    #[arg(long)]
    depth: Option<usize>,
    /// Circuit seeds averaged over (count).
    #[arg(long)]
    samples: Option<usize>,
    /// Bonds of the first layer: odd = (1,2),(3,4),…; even = (2,3),(4,5),… (1-indexed).
    #[arg(long, value_enum)]
    parity: Option<ParityArg>,
    /// Clifford family only: evolve the stabilizer tableau without a state vector.
    #[arg(long)]
    tableau_only: bool,
}

#[derive(Args, Debug)]
struct XyArgs {
    #[command(flatten)]
    common: Common,
    /// Anisotropy γ (dimensionless); repeat for several values.
    #[arg(long)]
    gamma: Vec<f64>,
    /// Lowest field h = h′/J′ (dimensionless).
    #[arg(long)]
    hmin: Option<f64>,
    /// Highest field h (dimensionless).
    #[arg(long)]
    hmax: Option<f64>,
    /// Field step (dimensionless).
    #[arg(long)]
    hstep: Option<f64>,
    /// Number of pulses K_max (count).
    #[arg(long)]
    kmax: Option<usize>,
    /// XY coupling J′ (energy).
    #[arg(long)]
    jprime: Option<f64>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum UnitArg {
    Half,
    Full,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FamilyArg {
    Haar,
    U1,
    Clifford,
    Ising,
    Xx,
    Heisenberg,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ParityArg {
    Odd,
    Even,
}

fn entropy_seed() -> u64 {
    let mut h = std::collections::hash_map::RandomState::new().build_hasher();
    h.write_u128(
        std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_nanos())
            .unwrap_or(0),
    );
    h.write_u32(std::process::id());
    h.finish()
}

struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure {
            code: e.exit_code() as u8,
            message: e.to_string(),
        }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        message: message.into(),
    }
}

fn set<T: serde::Serialize>(map: &mut Map<String, Value>, key: &str, v: Option<T>) {
    if let Some(v) = v {
        map.insert(key.to_string(), json!(v));
    }
}

/// Config file values, then the scenario, then command-line overrides.
fn base_config(common: &Common, scenario: Scenario) -> Result<Map<String, Value>, Failure> {
    let mut map = match &common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
            match serde_json::from_str::<Value>(&text) {
                Ok(Value::Object(m)) => m,
                Ok(_) => return Err(usage("config must be a JSON object")),
                Err(e) => return Err(usage(format!("invalid config JSON: {e}"))),
            }
        }
        None => Map::new(),
    };
    if let Some(s) = map.get("scenario") {
        if *s != json!(scenario) {
            return Err(usage(format!("config scenario {s} does not match the subcommand")));
        }
    }
    map.insert("scenario".into(), json!(scenario));
    set(&mut map, "n_sites", common.n);
    set(&mut map, "master_seed", common.seed);
    if !map.contains_key("master_seed") {
        map.insert("master_seed".into(), json!(entropy_seed()));
    }
    set(
        &mut map,
        "unit",
        common.unit.map(|u| match u {
            UnitArg::Half => "half",
            UnitArg::Full => "full",
        }),
    );
    if common.no_sre {
        map.insert("compute_sre".into(), json!(false));
    }
    Ok(map)
}

fn time_overrides(map: &mut Map<String, Value>, t: &TimeArgs) {
    set(map, "j", t.j);
    set(map, "t_max", t.tmax);
    set(map, "dt", t.dt);
}

fn build(common: &Common, map: Map<String, Value>) -> Result<(ExperimentConfig, PathBuf), Failure> {
    let mut cfg: ExperimentConfig =
        serde_json::from_value(Value::Object(map)).map_err(|e| usage(format!("invalid config: {e}")))?;
    if common.out.is_some() {
        cfg.output = common.out.clone();
    }
    let out = cfg.output.clone().unwrap_or_else(|| PathBuf::from("."));
    Ok((cfg, out))
}

fn family_json(f: FamilyArg, j: f64, tau: f64) -> Value {
    match f {
        FamilyArg::Haar => json!({ "family": "haar2" }),
        FamilyArg::U1 => json!({ "family": "u1_haar2" }),
        FamilyArg::Clifford => json!({ "family": "clifford2" }),
        FamilyArg::Ising => json!({ "family": "from_hamiltonian", "kind": "ising", "j": j, "tau": tau }),
        FamilyArg::Xx => json!({ "family": "from_hamiltonian", "kind": "xx", "j": j, "tau": tau }),
        FamilyArg::Heisenberg => json!({ "family": "from_hamiltonian", "kind": "heisenberg", "j": j, "tau": tau }),
    }
}

fn set_threads(common: &Common) -> Result<(), Failure> {
    if let Some(t) = common.threads {
        if t == 0 {
            return Err(usage("--threads must be >= 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| usage(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn experiment(common: &Common, map: Map<String, Value>) -> Result<(), Failure> {
    set_threads(common)?;
    let (cfg, out) = build(common, map)?;
    let result = run(&cfg)?;
    let (csv, json) = result.write(&cfg, &out)?;
    println!("{}", csv.display());
    println!("{}", json.display());
    Ok(())
}

fn sre_command(file: &PathBuf, alpha: f64) -> Result<(), Failure> {
    let bytes = std::fs::read(file).map_err(|e| usage(format!("cannot read {}: {e}", file.display())))?;
    let psi = StateVector::from_qbsv(&bytes)?;
    if (psi.norm_sqr() - 1.0).abs() > 1e-8 {
        return Err(usage(format!("state is not normalized (norm² = {})", psi.norm_sqr())));
    }
    let m = sre_fast(&psi, alpha)?;
    println!("{:.6}", m.value.max(0.0));
    Ok(())
}

fn selftest() -> Result<(), Failure> {
    let checks = run_oracles();
    let mut failed = 0;
    for c in &checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
        if !c.passed {
            failed += 1;
        }
    }
    if failed > 0 {
        return Err(Failure {
            code: 1,
            message: format!("{failed} of {} oracles failed", checks.len()),
        });
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Xxz(a) => {
            let mut map = base_config(&a.common, Scenario::XxzCharge)?;
            time_overrides(&mut map, &a.time);
            set(&mut map, "delta", a.delta);
            experiment(&a.common, map)
        }
        Command::Csyk(a) => {
            let mut map = base_config(&a.common, Scenario::CsykCharge)?;
            time_overrides(&mut map, &a.time);
            set(&mut map, "n_disorder", a.disorder);
            experiment(&a.common, map)
        }
        Command::Brickwall(a) => {
            let mut map = base_config(&a.common, Scenario::Brickwall)?;
            set(&mut map, "family", a.family.map(|f| family_json(f, a.gate_j, a.tau)));
            set(&mut map, "depth", a.depth);
            set(&mut map, "n_disorder", a.samples);
            set(
                &mut map,
                "first_layer_parity",
                a.parity.map(|p| match p {
                    ParityArg::Odd => "odd",
                    ParityArg::Even => "even",
                }),
            );
            if a.tableau_only {
                map.insert("tableau_only".into(), json!(true));
            }
            experiment(&a.common, map)
        }
        Command::XyPulsed(a) => {
            let mut map = base_config(&a.common, Scenario::XyPulsed)?;
            if !a.gamma.is_empty() {
                map.insert("gammas".into(), json!(a.gamma));
            }
            set(&mut map, "h_min", a.hmin);
            set(&mut map, "h_max", a.hmax);
            set(&mut map, "h_step", a.hstep);
            set(&mut map, "k_max", a.kmax);
            set(&mut map, "j_prime", a.jprime);
            experiment(&a.common, map)
        }
        Command::Sre { file, alpha } => sre_command(&file, alpha),
        Command::Selftest => selftest(),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            if f.code == 2 {
                eprintln!("run `qbmagic --help` for usage");
            }
            ExitCode::from(f.code)
        }
    }
}
