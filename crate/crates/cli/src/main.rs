//! `steercert`: certify steering-based randomness from the command line.
//!
//! Every command prints one JSON object on standard output. Exit codes:
//! 0 on success, 2 for unreadable or invalid input (including bad flags),
//! 3 when a numerical solve fails.

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use steercert::certify::{
    guessing_probability_assemblage, guessing_probability_pmd, is_star_compatible, star_incompatibility_weight,
    CertificateSummary, DualCertificate, Verdict,
};
use steercert::experiments::{family_threshold, gnuplot_script, run_sweep_with, write_csv, Family, SweepConfig};
use steercert::instance::{load_assemblage, load_pmd, load_state, resolve_setting, InstanceFile, JointFile};
use steercert::linalg::maximally_entangled;
use steercert::quantum::assemblage_from;
use steercert::seesaw::{seesaw_minimize, SeesawConfig};
use steercert::{sdp, Error, Hermitian};

#[derive(Parser)]
#[command(name = "steercert", version, about = "Steering-based randomness certification")]
struct Cli {
    /// Interior-point stopping tolerance.
    #[arg(long, global = true, env = "CERT_SOLVER_TOL", default_value_t = sdp::DEFAULT_SOLVER_TOL)]
    solver_tol: f64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Guessing probability of an assemblage.
    Guess {
        assemblage: PathBuf,
        #[command(flatten)]
        target: Target,
    },
    /// Guessing probability from a device and a shared state.
    GuessPmd {
        pmd: PathBuf,
        state: PathBuf,
        #[command(flatten)]
        target: Target,
    },
    /// Star-compatibility of a device; `--out` receives the joint measurements.
    StarCompat {
        pmd: PathBuf,
        #[command(flatten)]
        target: Target,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Star-incompatibility weight; `--out` receives the decomposition.
    Weight {
        pmd: PathBuf,
        #[command(flatten)]
        target: Target,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// See-saw search for the state minimizing the guessing probability;
    /// `--out` receives the best state.
    Seesaw {
        pmd: PathBuf,
        #[command(flatten)]
        target: Target,
        #[command(flatten)]
        seesaw: SeesawFlags,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sweep the noise parameter of a device family and write a CSV table.
    Sweep {
        #[arg(long, value_enum, default_value_t = FamilyArg::Pauli)]
        family: FamilyArg,
        #[arg(long, default_value_t = 0.65)]
        eta_start: f64,
        #[arg(long, default_value_t = 1.0)]
        eta_end: f64,
        #[arg(long, default_value_t = 0.01)]
        eta_step: f64,
        /// Family setting label (1, 2 or 3 for pauli).
        #[arg(short = 'x', long = "target", default_value_t = 1)]
        target: usize,
        #[command(flatten)]
        seesaw: SeesawFlags,
        #[arg(long, default_value = "sweep.csv")]
        out: PathBuf,
        /// Also write a gnuplot script next to the CSV.
        #[arg(long)]
        emit_gnuplot: bool,
    },
    /// Locate the noise level where star-compatibility is lost.
    Threshold {
        #[arg(long, value_enum, default_value_t = FamilyArg::Pauli)]
        family: FamilyArg,
        /// Family setting label (1, 2 or 3 for pauli).
        #[arg(short = 'x', long = "target", default_value_t = 1)]
        target: usize,
        #[arg(long, default_value_t = 1e-3)]
        tol: f64,
    },
    /// Write instance files for a family member and the maximally entangled state.
    Export {
        #[arg(long, value_enum, default_value_t = FamilyArg::Pauli)]
        family: FamilyArg,
        #[arg(long)]
        eta: f64,
        #[arg(long, value_enum)]
        kind: ExportKind,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct Target {
    /// Target setting: a label from the file, or a 0-based index.
    #[arg(short = 'x', long = "target")]
    target: String,
}

#[derive(Args)]
struct SeesawFlags {
    #[arg(long, default_value_t = 10)]
    restarts: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 1e-8)]
    eps_p: f64,
    #[arg(long, default_value_t = 1e-10)]
    eps_rho: f64,
    #[arg(long, default_value_t = 100)]
    t_max: usize,
    #[arg(long, default_value_t = 4)]
    k_stall: usize,
    /// Run independent work items on separate threads.
    #[arg(long)]
    parallel: bool,
}

impl SeesawFlags {
    fn config(&self) -> SeesawConfig {
        SeesawConfig {
            eps_p: self.eps_p,
            eps_rho: self.eps_rho,
            t_max: self.t_max,
            k_stall: self.k_stall,
            restarts: self.restarts,
            seed: self.seed,
            warm_start: None,
            parallel: self.parallel,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum FamilyArg {
    Pauli,
}

impl From<FamilyArg> for Family {
    fn from(f: FamilyArg) -> Self {
        match f {
            FamilyArg::Pauli => Family::Pauli,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ExportKind {
    Pmd,
    Assemblage,
    State,
}

type CmdResult = Result<Value, Error>;

fn summary(cert: &DualCertificate, violation: f64) -> CertificateSummary {
    CertificateSummary { dual_objective: cert.objective, max_dual_violation: violation }
}

fn write_json(path: &Path, value: &Value) -> Result<(), Error> {
    let mut text = serde_json::to_string_pretty(value).expect("JSON values serialize");
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn cmd_guess(path: &Path, target: &str) -> CmdResult {
    let loaded = load_assemblage(path)?;
    let x_star = resolve_setting(&loaded.labels, target)?;
    let members = loaded.assemblage.members();
    let guess = guessing_probability_assemblage(&loaded.assemblage, x_star)?;
    let identity = Hermitian::identity(loaded.assemblage.dim_b());
    let (violation, _) = guess.certificate.guessing_check(members, &identity);
    Ok(json!({
        "p": guess.p,
        "primal": guess.primal,
        "dual": guess.dual,
        "gap": guess.gap,
        "target": x_star,
        "certificate": summary(&guess.certificate, violation),
    }))
}

fn cmd_guess_pmd(pmd_path: &Path, state_path: &Path, target: &str) -> CmdResult {
    let loaded = load_pmd(pmd_path)?;
    let x_star = resolve_setting(&loaded.labels, target)?;
    let state = load_state(state_path)?;
    if state.dim_a() != loaded.pmd.dim() {
        return Err(Error::DimensionMismatch(format!(
            "state has first factor of dimension {}, device acts on dimension {}",
            state.dim_a(),
            loaded.pmd.dim()
        )));
    }
    let rho_a = state.reduced_a()?;
    let guess = guessing_probability_pmd(&loaded.pmd, &rho_a, x_star)?;
    let side: Vec<Vec<_>> = loaded.pmd.settings().iter().map(|s| s.elements().to_vec()).collect();
    let (violation, _) = guess.certificate.guessing_check(&side, rho_a.op());
    Ok(json!({
        "p": guess.p,
        "primal": guess.primal,
        "dual": guess.dual,
        "gap": guess.gap,
        "target": x_star,
        "certificate": summary(&guess.certificate, violation),
    }))
}

fn cmd_star_compat(path: &Path, target: &str, out: Option<&Path>) -> CmdResult {
    let loaded = load_pmd(path)?;
    let x_star = resolve_setting(&loaded.labels, target)?;
    let verdict = is_star_compatible(&loaded.pmd, x_star)?;
    let mut witness_path = Value::Null;
    if let (Verdict::Feasible { witness, .. }, Some(out)) = (&verdict, out) {
        write_json(out, &serde_json::to_value(JointFile::from_family(&witness.0)).expect("serializable"))?;
        witness_path = json!(out.display().to_string());
    }
    Ok(json!({
        "compatible": verdict.compatible(),
        "margin": verdict.margin(),
        "target": x_star,
        "witness": witness_path,
    }))
}

fn cmd_weight(path: &Path, target: &str, out: Option<&Path>) -> CmdResult {
    let loaded = load_pmd(path)?;
    let x_star = resolve_setting(&loaded.labels, target)?;
    let result = star_incompatibility_weight(&loaded.pmd, x_star)?;
    let mut decomposition_path = Value::Null;
    if let Some(out) = out {
        let d = &result.decomposition;
        let labels = Some(loaded.labels.as_slice());
        write_json(
            out,
            &json!({
                "w": d.w,
                "compatible_part": InstanceFile::from_pmd(&d.compat_part, labels)?,
                "noise_part": InstanceFile::from_pmd(&d.noise_part, labels)?,
                "witness": JointFile::from_family(&d.witness.0),
                "degenerate_compatible_part": d.degenerate_compat,
            }),
        )?;
        decomposition_path = json!(out.display().to_string());
    }
    let (violation, _) = result.certificate.weight_check(&loaded.pmd);
    Ok(json!({
        "w": result.w,
        "primal": result.primal,
        "dual": result.dual,
        "gap": result.gap,
        "target": x_star,
        "certificate": summary(&result.certificate, violation),
        "decomposition": decomposition_path,
    }))
}

fn cmd_seesaw(path: &Path, target: &str, flags: &SeesawFlags, out: Option<&Path>) -> CmdResult {
    let loaded = load_pmd(path)?;
    let x_star = resolve_setting(&loaded.labels, target)?;
    let config = flags.config();
    let result = seesaw_minimize(&loaded.pmd, x_star, &config)?;
    let mut state_path = Value::Null;
    if let Some(out) = out {
        let d = loaded.pmd.dim();
        InstanceFile::from_density(d, d, &result.best_state)?.write(out)?;
        state_path = json!(out.display().to_string());
    }
    Ok(json!({
        "best_p": result.best_p,
        "restart_index": result.restart_index,
        "converged": result.converged,
        "restarts_used": result.restarts_used,
        "restarts_failed": result.restarts_failed,
        "iterations_total": result.iterations_total,
        "trajectory": result.trajectory,
        "target": x_star,
        "state": state_path,
    }))
}

struct SweepArgs<'a> {
    family: Family,
    eta: (f64, f64, f64),
    target: usize,
    seesaw: &'a SeesawFlags,
    out: &'a Path,
    emit_gnuplot: bool,
}

fn cmd_sweep(args: SweepArgs<'_>) -> CmdResult {
    let config = SweepConfig {
        family: args.family,
        eta_start: args.eta.0,
        eta_end: args.eta.1,
        eta_step: args.eta.2,
        x_star: args.family.setting_index(args.target)?,
        seesaw: SeesawConfig { parallel: false, ..args.seesaw.config() },
        parallel: args.seesaw.parallel,
    };
    let rows = run_sweep_with(&config, |row| {
        eprintln!(
            "eta = {:.4}  p = {:.9}  w = {:.9}  converged = {}",
            row.eta, row.p_guess, row.weight, row.converged
        );
    })?;
    write_csv(&rows, BufWriter::new(fs::File::create(args.out)?))?;
    let mut script = Value::Null;
    if args.emit_gnuplot {
        let gp = args.out.with_extension("gp");
        let svg = args.out.with_extension("svg");
        fs::write(&gp, gnuplot_script(&args.out.display().to_string(), &svg.display().to_string()))?;
        script = json!(gp.display().to_string());
    }
    Ok(json!({
        "rows": rows.len(),
        "failed_rows": rows.iter().filter(|r| r.is_failed()).count(),
        "out": args.out.display().to_string(),
        "gnuplot": script,
    }))
}

fn cmd_threshold(family: Family, target: usize, tol: f64) -> CmdResult {
    let report = family_threshold(family, family.setting_index(target)?, tol)?;
    Ok(serde_json::to_value(report).expect("serializable"))
}

fn cmd_export(family: Family, eta: f64, kind: ExportKind, out: &Path) -> CmdResult {
    let pmd = family.device(eta)?;
    let labels: Vec<String> = (1..=pmd.setting_count()).map(|i| i.to_string()).collect();
    let psi = maximally_entangled(pmd.dim())?;
    let source = Some(format!("{family:?} family, eta = {eta}").to_lowercase());
    let (file, description) = match kind {
        ExportKind::Pmd => (InstanceFile::from_pmd(&pmd, Some(&labels))?, None),
        ExportKind::Assemblage => {
            let assemblage = assemblage_from(&pmd, &psi.density())?;
            (
                InstanceFile::from_assemblage(&assemblage, Some(&labels))?,
                Some("assemblage on the maximally entangled state"),
            )
        }
        ExportKind::State => (InstanceFile::from_pure_state(&psi), Some("maximally entangled state")),
    };
    let file = file.with_metadata(description.map(String::from), source);
    file.write(out)?;
    Ok(json!({ "kind": file.kind(), "out": out.display().to_string() }))
}

fn run(cli: Cli) -> CmdResult {
    sdp::set_default_tolerance(cli.solver_tol)?;
    match cli.command {
        Command::Guess { assemblage, target } => cmd_guess(&assemblage, &target.target),
        Command::GuessPmd { pmd, state, target } => cmd_guess_pmd(&pmd, &state, &target.target),
        Command::StarCompat { pmd, target, out } => cmd_star_compat(&pmd, &target.target, out.as_deref()),
        Command::Weight { pmd, target, out } => cmd_weight(&pmd, &target.target, out.as_deref()),
        Command::Seesaw { pmd, target, seesaw, out } => cmd_seesaw(&pmd, &target.target, &seesaw, out.as_deref()),
        Command::Sweep { family, eta_start, eta_end, eta_step, target, seesaw, out, emit_gnuplot } => {
            cmd_sweep(SweepArgs {
                family: family.into(),
                eta: (eta_start, eta_end, eta_step),
                target,
                seesaw: &seesaw,
                out: &out,
                emit_gnuplot,
            })
        }
        Command::Threshold { family, target, tol } => cmd_threshold(family.into(), target, tol),
        Command::Export { family, eta, kind, out } => cmd_export(family.into(), eta, kind, &out),
    }
}

const EXIT_INPUT: u8 = 2;
const EXIT_SOLVER: u8 = 3;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_INPUT) } else { ExitCode::SUCCESS };
        }
    };
    match std::panic::catch_unwind(|| run(cli)) {
        Ok(Ok(value)) => {
            println!("{value}");
            ExitCode::SUCCESS
        }
        Ok(Err(e)) => {
            let code = if e.is_solver_failure() { EXIT_SOLVER } else { EXIT_INPUT };
            eprintln!("{}", json!({ "error": e.to_string(), "exit_code": code }));
            ExitCode::from(code)
        }
        Err(_) => ExitCode::from(EXIT_SOLVER),
    }
}
