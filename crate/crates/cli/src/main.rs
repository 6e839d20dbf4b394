//! Reproducible experiment runner: builds the configured scenario, runs the
//! requested pipeline, and writes byte-stable artifacts (identical config and
//! seed give identical files; timestamps live only in the sidecar `run.log`).

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::RunConfig;
use qdarwin::analysis::{partition_fragments, sbs_check, SbsOptions};
use qdarwin::darwinism::{
    branch_block, branch_evolve_fast, brute_force_evolve, build_model, discard_ensemble,
    props_oracle_run, DarwinModel, ModelConfig,
};
use qdarwin::nogo::{run_measurement_protocol, run_unitary_protocol, ProtocolResult};
use qdarwin::qmath::partial_trace;

const EXIT_CONFIG: u8 = 2;
const EXIT_CAP: u8 = 3;
const EXIT_INTERNAL: u8 = 4;

#[derive(Parser)]
#[command(name = "qdarwin", version, about = "Decoherence and objectivity experiment runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Run configuration file ([model]/[run] key-value sections).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Random seed (overrides the config file).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory for artifacts.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Distinguishability threshold (overrides the config file).
    #[arg(long, global = true)]
    epsilon: Option<f64>,
    /// Trial count for sampling/oracle subcommands.
    #[arg(long, global = true)]
    trials: Option<usize>,
    /// Dense-dimension cap for brute-force and Holevo computations.
    #[arg(long, global = true)]
    cap_dim: Option<usize>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Signaling bound, unitary protocol: nonlocal vs localized operations.
    NogoUnitary,
    /// Signaling bound, measurement protocol: nonlocal vs localized.
    NogoMeasure,
    /// Validate the single-step analytic update laws against dense oracles.
    Props,
    /// Build the spin-bath model, evolve it, and report objectivity metrics.
    Darwin,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::NogoUnitary => "nogo-unitary",
            Command::NogoMeasure => "nogo-measure",
            Command::Props => "props",
            Command::Darwin => "darwin",
        }
    }
}

/// Failure category carrying the process exit code.
enum Failure {
    Config(String),
    Cap(String),
    Internal(String),
}

impl Failure {
    fn exit(&self) -> u8 {
        match self {
            Failure::Config(_) => EXIT_CONFIG,
            Failure::Cap(_) => EXIT_CAP,
            Failure::Internal(_) => EXIT_INTERNAL,
        }
    }
    fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Cap(m) | Failure::Internal(m) => m,
        }
    }
}

/// Library errors during a run: the cap keeps its dedicated exit code,
/// everything else is an internal invariant failure.
fn run_err(e: qdarwin::Error) -> Failure {
    match e {
        qdarwin::Error::ResourceCap { needed, cap } => {
            Failure::Cap(format!("resource cap exceeded: needed {needed}, cap {cap}"))
        }
        other => Failure::Internal(other.to_string()),
    }
}

fn fmt_f(x: f64) -> String {
    format!("{x:.17e}")
}

/// Atomic write: temp file in the target directory, then rename.
fn write_artifact(dir: &Path, name: &str, contents: &str) -> Result<(), Failure> {
    let io = |e: std::io::Error| Failure::Internal(format!("writing {name}: {e}"));
    std::fs::create_dir_all(dir).map_err(io)?;
    let tmp = dir.join(format!(".{name}.tmp"));
    std::fs::write(&tmp, contents).map_err(io)?;
    std::fs::rename(&tmp, dir.join(name)).map_err(io)?;
    Ok(())
}

/// Sidecar log; the only artifact allowed to carry a timestamp.
fn append_log(dir: &Path, line: &str) {
    let stamp = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let _ = std::fs::create_dir_all(dir);
    let entry = format!("[{stamp}] {line}\n");
    use std::io::Write;
    if let Ok(mut f) = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(dir.join("run.log"))
    {
        let _ = f.write_all(entry.as_bytes());
    }
}

fn protocol_section(label: &str, r: &ProtocolResult) -> String {
    let mut out = format!("variant = {label}\n");
    for ((a, b), p) in r.joint.table() {
        out.push_str(&format!("  p = {a} {b} {}\n", fmt_f(*p)));
    }
    out.push_str(&format!("  mutual_info_bits = {}\n", fmt_f(r.mutual_info_bits)));
    out.push_str(&format!("  nflcp_violated = {}\n", r.nflcp_violated));
    out
}

fn run_nogo(cfg: &RunConfig, command: Command) -> Result<(), Failure> {
    let run = |localized| match command {
        Command::NogoUnitary => run_unitary_protocol(localized),
        _ => run_measurement_protocol(localized),
    };
    let nonlocal = run(false).map_err(run_err)?;
    let localized = run(true).map_err(run_err)?;
    let mut out = cfg.resolved_text(command.name());
    out.push_str("format = nogo-report-v1\n");
    out.push_str(&protocol_section("nonlocal", &nonlocal));
    out.push_str(&protocol_section("localized", &localized));
    write_artifact(&cfg.out_dir, "report.txt", &out)
}

fn run_props(cfg: &RunConfig) -> Result<(), Failure> {
    let report = props_oracle_run(cfg.trials, cfg.seed).map_err(run_err)?;
    let mut out = cfg.resolved_text("props");
    out.push_str("format = props-report-v1\n");
    out.push_str(&format!("trials = {}\n", report.trials));
    out.push_str(&format!(
        "max_bloch_vector_dev = {}\n",
        fmt_f(report.max_bloch_vector_dev)
    ));
    out.push_str(&format!(
        "max_bloch_norm_dev = {}\n",
        fmt_f(report.max_bloch_norm_dev)
    ));
    out.push_str(&format!(
        "max_omega_entry_dev = {}\n",
        fmt_f(report.max_omega_entry_dev)
    ));
    out.push_str(&format!(
        "max_omega_norm_dev = {}\n",
        fmt_f(report.max_omega_norm_dev)
    ));
    out.push_str(&format!("max_deviation = {}\n", fmt_f(report.max_deviation())));
    write_artifact(&cfg.out_dir, "report.txt", &out)
}

/// Cross-checks the fast engine against the dense one when the full state
/// fits under the cap; returns the worst per-en-sub state deviation.
fn brute_force_check(
    model: &DarwinModel,
    ens: &qdarwin::darwinism::BranchEnsemble,
    cap: usize,
) -> Result<Option<f64>, qdarwin::Error> {
    let dim = model
        .d
        .checked_shl(model.n_ensubs() as u32 + 1)
        .unwrap_or(usize::MAX);
    if dim > cap {
        return Ok(None);
    }
    let full = brute_force_evolve(model, cap)?;
    let mut worst: f64 = 0.0;
    for i in 0..model.d {
        let (p, block) = branch_block(&full, i)?;
        worst = worst.max((p - ens.branch_probs[i]).abs());
        for e in 0..model.n_ensubs() {
            let reduced = partial_trace(&block, &[1 + e])?;
            worst = worst.max((reduced.matrix() - ens.branch_states[i][e].matrix()).norm());
        }
    }
    Ok(Some(worst))
}

fn run_darwin(cfg: &RunConfig) -> Result<(), Failure> {
    let mut mc = ModelConfig::new(cfg.d, cfg.ensubs_per_site.clone(), cfg.seed);
    mc.theta_range = cfg.theta_range;
    mc.bloch_norm_max = cfg.bloch_norm_max;
    mc.discard_fraction = cfg.discard_fraction;
    mc.amplitudes = cfg.amplitudes.clone();
    let model = build_model(&mc).map_err(|e| Failure::Config(e.to_string()))?;

    let evolved = branch_evolve_fast(&model).map_err(run_err)?;
    let brute_dev = brute_force_check(&model, &evolved, cfg.cap_dim).map_err(run_err)?;
    let flags: Vec<bool> = model.ensubs.iter().map(|e| e.discarded).collect();
    let kept = discard_ensemble(&model, &evolved, &flags).map_err(run_err)?;
    let spec = partition_fragments(&model, cfg.fragments, cfg.seed)
        .map_err(|e| Failure::Config(e.to_string()))?;
    let opts = SbsOptions {
        epsilon: cfg.epsilon,
        born_trials: cfg.trials,
        born_seed: cfg.seed,
        holevo_cap: cfg.cap_dim,
    };
    let report = sbs_check(&model, &kept, &spec, &opts).map_err(run_err)?;

    let header = cfg.resolved_text("darwin");

    let mut report_txt = header.clone();
    match brute_dev {
        Some(dev) => report_txt.push_str(&format!(
            "# brute_force_max_state_dev = {}\n",
            fmt_f(dev)
        )),
        None => report_txt.push_str("# brute_force = skipped (over cap)\n"),
    }
    report_txt.push_str(&format!(
        "# non_decohering_steps = {}\n",
        kept.non_decohering_steps
    ));
    report_txt.push_str(&report.to_text());
    write_artifact(&cfg.out_dir, "report.txt", &report_txt)?;

    let model_txt = format!("{header}{}", model.to_text());
    write_artifact(&cfg.out_dir, "model.txt", &model_txt)?;

    let fidelity_csv = format!("{header}{}", report.to_csv());
    write_artifact(&cfg.out_dir, "fidelity.csv", &fidelity_csv)?;

    let mut holevo_csv = format!("{header}fragment,size,bits\n");
    for (k, bits) in report.holevo_bits_per_fragment.iter().enumerate() {
        let cell = match bits {
            Some(b) => fmt_f(*b),
            None => "over-cap".to_string(),
        };
        holevo_csv.push_str(&format!("{k},{},{cell}\n", report.fragment_sizes[k]));
    }
    write_artifact(&cfg.out_dir, "holevo.csv", &holevo_csv)?;

    let mut born_csv = format!("{header}site,frequency\n");
    for (i, f) in report.born_freqs.iter().enumerate() {
        born_csv.push_str(&format!("{i},{}\n", fmt_f(*f)));
    }
    write_artifact(&cfg.out_dir, "born.csv", &born_csv)?;
    Ok(())
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path).map_err(Failure::Config)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    if let Some(eps) = cli.epsilon {
        cfg.epsilon = eps;
    }
    if let Some(trials) = cli.trials {
        cfg.trials = trials;
    }
    if let Some(cap) = cli.cap_dim {
        cfg.cap_dim = cap;
    }
    cfg.validate().map_err(Failure::Config)?;

    append_log(&cfg.out_dir, &format!("start {}", cli.command.name()));
    let result = match cli.command {
        Command::NogoUnitary | Command::NogoMeasure => run_nogo(&cfg, cli.command),
        Command::Props => run_props(&cfg),
        Command::Darwin => run_darwin(&cfg),
    };
    match &result {
        Ok(()) => append_log(&cfg.out_dir, &format!("done {}", cli.command.name())),
        Err(f) => append_log(
            &cfg.out_dir,
            &format!("failed {} ({})", cli.command.name(), f.message()),
        ),
    }
    result
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("qdarwin: {}", f.message());
            ExitCode::from(f.exit())
        }
    }
}
