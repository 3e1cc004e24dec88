//! `margin-gate`: impedance-based stability margin gate.
//!
//! Exit codes: 0 compliant, 1 caution or violation, 2 input or processing error.

use std::fs;
use std::io::IsTerminal;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use margin_gate::{
    assess, build_report, compliance_table, parse_response, random_case, render, summarize_margins, write_response,
    AssessConfig, AtStage, CaseFixture, Format, FrequencyResponse, MarginPolicy, Stage, StageError, Verdict,
};

#[derive(Parser, Debug)]
#[command(name = "margin-gate", version, about = "Stability margin gate for paralleled power park modules")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Full assessment: margins, impedance limit, compliance, encirclements, report files.
    Check(CheckArgs),
    /// Existing and updated loop gains as impedance-table files.
    Loopgain(LoopgainArgs),
    /// Crossovers and margins of one loop-gain table.
    Margins(MarginsArgs),
    /// Impedance limit and compliance table.
    Limit(CheckArgs),
    /// Evaluate a case file (or a seeded random case) to impedance tables.
    Synth(SynthArgs),
    /// Render the Nyquist plot with stability regions, without gating.
    Nyquist(CheckArgs),
}

#[derive(Args, Debug, Clone)]
struct InputArgs {
    /// Existing PPM impedance table.
    #[arg(long, value_name = "FILE", requires_all = ["z_net_old", "z_ppm_new"], conflicts_with = "synth")]
    z_ppm_existing: Option<PathBuf>,
    /// Network impedance seen by the existing PPM, before the new connection.
    #[arg(long, value_name = "FILE")]
    z_net_old: Option<PathBuf>,
    /// New PPM impedance table.
    #[arg(long, value_name = "FILE")]
    z_ppm_new: Option<PathBuf>,
    /// Case file with network descriptions of all three impedances.
    #[arg(long, value_name = "CASE_JSON")]
    synth: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
struct PolicyArgs {
    #[arg(long, default_value_t = 15.0)]
    pm_min_deg: f64,
    #[arg(long, default_value_t = 30.0)]
    pm_cau_deg: f64,
    #[arg(long, default_value_t = 15.0)]
    gm_min_db: f64,
}

impl PolicyArgs {
    fn policy(&self) -> Result<MarginPolicy, StageError> {
        MarginPolicy::new(self.pm_min_deg, self.pm_cau_deg, self.gm_min_db).at(Stage::Config)
    }
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum LimitAt {
    /// Gain crossovers detected on the new loop gain.
    Crossovers,
    /// Frequencies given with --critical-freqs.
    Critical,
}

#[derive(Args, Debug, Clone)]
struct CheckArgs {
    #[command(flatten)]
    inputs: InputArgs,
    #[command(flatten)]
    policy: PolicyArgs,
    /// Where the impedance limit is evaluated.
    #[arg(long, value_enum, default_value_t = LimitAt::Crossovers)]
    limit_at: LimitAt,
    /// Comma-separated frequencies in Hz (with --limit-at critical).
    #[arg(long, value_delimiter = ',', value_name = "HZ")]
    critical_freqs: Vec<f64>,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// Comma-separated: json, markdown, nyquist_svg, bode_svg.
    #[arg(long, value_delimiter = ',', default_value = "json")]
    format: Vec<String>,
}

#[derive(Args, Debug)]
struct LoopgainArgs {
    #[command(flatten)]
    inputs: InputArgs,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args, Debug)]
struct MarginsArgs {
    /// Loop-gain table (dimensionless).
    #[arg(value_name = "FILE")]
    loop_gain: PathBuf,
    #[command(flatten)]
    policy: PolicyArgs,
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Case file to evaluate.
    #[arg(value_name = "CASE_JSON", required_unless_present = "seed", conflicts_with = "seed")]
    case: Option<PathBuf>,
    /// Generate a random case from this seed instead.
    #[arg(long)]
    seed: Option<u64>,
    /// Strings in the random network.
    #[arg(long, default_value_t = 3)]
    strings: usize,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

struct Styler {
    color: bool,
}

impl Styler {
    fn detect() -> Self {
        let color = std::env::var_os("MARGIN_GATE_NO_COLOR").is_none() && std::io::stderr().is_terminal();
        Self { color }
    }

    fn verdict(&self, v: Verdict) -> String {
        if !self.color {
            return v.to_string();
        }
        let code = match v {
            Verdict::Compliant => "32",
            Verdict::Caution => "33",
            Verdict::Violation | Verdict::Error => "31",
        };
        format!("\x1b[1;{code}m{v}\x1b[0m")
    }
}

fn read_response(path: &Path) -> Result<FrequencyResponse, StageError> {
    let bytes = fs::read(path).map_err(|e| io_error(Stage::Parse, path, e))?;
    let r = parse_response(&bytes).at(Stage::Parse)?;
    if r.label().is_empty() {
        let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        Ok(r.with_label(stem))
    } else {
        Ok(r)
    }
}

fn read_case(path: &Path) -> Result<CaseFixture, StageError> {
    let bytes = fs::read(path).map_err(|e| io_error(Stage::Parse, path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| StageError {
        stage: Stage::Parse,
        source: margin_gate::Error::InvalidNetwork(format!("{}: {e}", path.display())),
    })
}

fn io_error(stage: Stage, path: &Path, e: std::io::Error) -> StageError {
    StageError { stage, source: margin_gate::Error::Precondition(format!("{}: {e}", path.display())) }
}

fn load_inputs(args: &InputArgs) -> Result<[FrequencyResponse; 3], StageError> {
    if let Some(case) = &args.synth {
        return read_case(case)?.evaluate().at(Stage::Synth);
    }
    match (&args.z_ppm_existing, &args.z_net_old, &args.z_ppm_new) {
        (Some(a), Some(b), Some(c)) => Ok([read_response(a)?, read_response(b)?, read_response(c)?]),
        _ => Err(StageError {
            stage: Stage::Config,
            source: margin_gate::Error::Precondition(
                "give --z-ppm-existing, --z-net-old and --z-ppm-new, or --synth".into(),
            ),
        }),
    }
}

fn config(args: &CheckArgs) -> Result<AssessConfig, StageError> {
    let policy = args.policy.policy()?;
    let critical_freqs = match (args.limit_at, args.critical_freqs.is_empty()) {
        (LimitAt::Crossovers, true) => None,
        (LimitAt::Critical, false) => Some(args.critical_freqs.clone()),
        (LimitAt::Crossovers, false) => {
            return Err(StageError {
                stage: Stage::Config,
                source: margin_gate::Error::Precondition("--critical-freqs needs --limit-at critical".into()),
            })
        }
        (LimitAt::Critical, true) => {
            return Err(StageError {
                stage: Stage::Config,
                source: margin_gate::Error::Precondition("--limit-at critical needs --critical-freqs".into()),
            })
        }
    };
    Ok(AssessConfig { policy, critical_freqs })
}

fn write_file(dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf, StageError> {
    fs::create_dir_all(dir).map_err(|e| io_error(Stage::Write, dir, e))?;
    let path = dir.join(name);
    fs::write(&path, bytes).map_err(|e| io_error(Stage::Write, &path, e))?;
    Ok(path)
}

fn gate_exit(v: Verdict, style: &Styler) -> ExitCode {
    match v {
        Verdict::Compliant => ExitCode::SUCCESS,
        Verdict::Caution => ExitCode::from(1),
        Verdict::Violation | Verdict::Error => {
            eprintln!("margin-gate: {}", style.verdict(Verdict::Violation));
            ExitCode::from(1)
        }
    }
}

fn run_check(args: &CheckArgs, style: &Styler) -> Result<ExitCode, StageError> {
    let formats = args.format.iter().map(|f| f.parse::<Format>()).collect::<Result<Vec<_>, _>>().at(Stage::Config)?;
    let cfg = config(args)?;
    let [a, b, c] = load_inputs(&args.inputs)?;
    let assessment = assess(&a, &b, &c, &cfg)?;
    let report = build_report(&assessment).at(Stage::Report)?;
    for f in formats {
        let bytes = render(&report, f).at(Stage::Render)?;
        write_file(&args.out_dir, f.file_name(), &bytes)?;
    }
    println!(
        "overall: {} (new-loop margins {}, {} compliance record(s), windings {}/{})",
        style.verdict(report.overall_verdict),
        report.l_new.verdict,
        report.compliance.len(),
        report.encirclements.l_old.winding,
        report.encirclements.l_new.winding
    );
    Ok(gate_exit(report.overall_verdict, style))
}

fn run_limit(args: &CheckArgs, style: &Styler) -> Result<ExitCode, StageError> {
    let cfg = config(args)?;
    let [a, b, c] = load_inputs(&args.inputs)?;
    let assessment = assess(&a, &b, &c, &cfg)?;
    let table = compliance_table(&assessment.compliance);
    write_file(&args.out_dir, "compliance.csv", table.as_bytes())?;
    print!("{table}");
    let violated = assessment.compliance.iter().any(|r| r.verdict == margin_gate::ComplianceVerdict::Violation);
    Ok(gate_exit(if violated { Verdict::Violation } else { Verdict::Compliant }, style))
}

fn run_nyquist(args: &CheckArgs) -> Result<ExitCode, StageError> {
    let cfg = config(args)?;
    let [a, b, c] = load_inputs(&args.inputs)?;
    let report = build_report(&assess(&a, &b, &c, &cfg)?).at(Stage::Report)?;
    let bytes = render(&report, Format::NyquistSvg).at(Stage::Render)?;
    let path = write_file(&args.out_dir, Format::NyquistSvg.file_name(), &bytes)?;
    println!("{}", path.display());
    Ok(ExitCode::SUCCESS)
}

fn run_loopgain(args: &LoopgainArgs) -> Result<ExitCode, StageError> {
    let [a, b, c] = load_inputs(&args.inputs)?;
    let out = assess(&a, &b, &c, &AssessConfig::default())?;
    write_file(&args.out_dir, "l_old.csv", &write_response(&out.l_old.clone().with_label("L_old")))?;
    write_file(&args.out_dir, "l_new.csv", &write_response(&out.l_new))?;
    println!("consistency_error {:e}", out.consistency_error);
    Ok(ExitCode::SUCCESS)
}

fn run_margins(args: &MarginsArgs, style: &Styler) -> Result<ExitCode, StageError> {
    let policy = args.policy.policy()?;
    let l = read_response(&args.loop_gain)?;
    let summary = summarize_margins(&l, &policy).at(Stage::Margins)?;
    let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    println!("{json}");
    Ok(gate_exit(summary.verdict, style))
}

fn run_synth(args: &SynthArgs) -> Result<ExitCode, StageError> {
    let case = match (&args.case, args.seed) {
        (Some(path), _) => read_case(path)?,
        (None, Some(seed)) => {
            let case = random_case(seed, args.strings, (1.0, 1e4)).at(Stage::Synth)?;
            let json = serde_json::to_vec_pretty(&case).expect("case serializes");
            write_file(&args.out_dir, "case.json", &json)?;
            case
        }
        (None, None) => unreachable!("clap requires a case or a seed"),
    };
    for r in case.evaluate().at(Stage::Synth)? {
        let path = write_file(&args.out_dir, &format!("{}.csv", r.label()), &write_response(&r))?;
        println!("{}", path.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let style = Styler::detect();
    let result = match &cli.command {
        Command::Check(a) => run_check(a, &style),
        Command::Limit(a) => run_limit(a, &style),
        Command::Nyquist(a) => run_nyquist(a),
        Command::Loopgain(a) => run_loopgain(a),
        Command::Margins(a) => run_margins(a, &style),
        Command::Synth(a) => run_synth(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("margin-gate: error [stage {}]: {}", e.stage, e.source);
            ExitCode::from(2)
        }
    }
}
