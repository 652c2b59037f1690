use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use roc_core::config::{ConfigFile, EnergySection, GridSection, OracleSection, OutputFormat, OutputSection, ToleranceSection};
use roc_core::criteria::Tolerances;
use roc_core::energymodel::EnergySpec;
use roc_core::linescan::{
    convexity_scan, crossing_count_suite, cso2_rank_one_scan, ordered_dot_suite, planar_crossing_suite,
    sum_rule_suite, ScanVerdict, SuiteReport,
};
use roc_core::smallmat::{singular_values, Matrix, RankOneSegment};
use roc_core::verdict::{self, load_witness, replay, to_json, write_atomic, Report, Status};
use roc_core::{Result, RocError};

const EXIT_ERROR: u8 = 3;

/// Rank-one convexity checks for isotropic energies given by ĝ.
#[derive(Parser, Debug)]
#[command(name = "roc", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Grid criterion plus line-scan oracle; writes a JSON report.
    Check(CheckArgs),
    /// Scan one rank-one segment.
    Scan(ScanArgs),
    /// Run the randomized lemma suites.
    VerifyLemmas(LemmaArgs),
    /// Re-check a witness from a report or witness file.
    Replay(ReplayArgs),
}

#[derive(Args, Debug, Default)]
struct EnergyArgs {
    /// TOML configuration file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in energy name.
    #[arg(long)]
    zoo: Option<String>,
    /// Expression for ĝ in l1..ln.
    #[arg(long, allow_hyphen_values = true)]
    ghat: Option<String>,
    /// Expression for ĥ in t (conformal) or d (with --f).
    #[arg(long, allow_hyphen_values = true)]
    hhat: Option<String>,
    /// Expression for f in d (volumetric part).
    #[arg(long, allow_hyphen_values = true)]
    f: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    /// c1-closure or c2-closure.
    #[arg(long)]
    regularity: Option<String>,
    #[arg(long)]
    tol_abs: Option<f64>,
    #[arg(long)]
    tol_rel: Option<f64>,
    /// Seed; the ROC_SEED environment variable takes precedence.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct CheckArgs {
    #[command(flatten)]
    energy: EnergyArgs,
    #[arg(long)]
    grid_lo: Option<f64>,
    #[arg(long)]
    grid_hi: Option<f64>,
    #[arg(long)]
    grid_points: Option<usize>,
    #[arg(long)]
    min_gap: Option<f64>,
    #[arg(long)]
    segments: Option<usize>,
    #[arg(long)]
    samples: Option<usize>,
    /// Report path (default roc-report.json).
    #[arg(long)]
    out: Option<PathBuf>,
    /// json or csv.
    #[arg(long)]
    format: Option<String>,
}

#[derive(Args, Debug)]
struct ScanArgs {
    #[command(flatten)]
    energy: EnergyArgs,
    /// Base point F, rows separated by `;`, entries by `,`.
    #[arg(long)]
    matrix: String,
    #[arg(long)]
    xi: String,
    #[arg(long)]
    eta: String,
    #[arg(long, default_value = "0,1")]
    t_range: String,
    #[arg(long, default_value_t = 512)]
    samples: usize,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    format: Option<String>,
}

#[derive(Args, Debug)]
struct LemmaArgs {
    #[arg(long, default_value_t = 10_000)]
    trials: usize,
    /// Dimension for the sum-rule suite.
    #[arg(long, default_value_t = 3)]
    n: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ReplayArgs {
    /// Report or witness JSON file.
    witness: PathBuf,
    #[command(flatten)]
    energy: EnergyArgs,
}

fn env_seed() -> Result<Option<u64>> {
    match std::env::var("ROC_SEED") {
        Ok(s) => s
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| RocError::Input(format!("ROC_SEED must be an unsigned integer, got `{s}`"))),
        Err(_) => Ok(None),
    }
}

fn parse_vec(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|x| {
            x.trim()
                .parse::<f64>()
                .map_err(|_| RocError::Input(format!("not a number: `{x}`")))
        })
        .collect()
}

fn parse_matrix(s: &str) -> Result<Matrix> {
    let rows = s.split(';').map(parse_vec).collect::<Result<Vec<_>>>()?;
    Matrix::from_rows(&rows)
}

impl EnergyArgs {
    fn base(&self) -> Result<ConfigFile> {
        let file = match &self.config {
            Some(p) => ConfigFile::load(p)?,
            None => ConfigFile::default(),
        };
        let seed = env_seed()?.or(self.seed);
        let flags = ConfigFile {
            energy: EnergySection {
                zoo: self.zoo.clone(),
                ghat: self.ghat.clone(),
                hhat: self.hhat.clone(),
                f: self.f.clone(),
                n: self.n,
                regularity: self.regularity.clone(),
            },
            grid: GridSection {
                seed,
                ..Default::default()
            },
            oracle: OracleSection {
                seed,
                ..Default::default()
            },
            tolerances: ToleranceSection {
                abs: self.tol_abs,
                rel: self.tol_rel,
            },
            output: OutputSection::default(),
        };
        Ok(file.overlay(flags))
    }

    fn has_energy(&self) -> bool {
        self.config.is_some() || self.zoo.is_some() || self.ghat.is_some() || self.hhat.is_some()
    }
}

fn print_report_summary(r: &Report) {
    println!("energy      {} (n = {}, regularity {})", r.energy.name, r.dimension, r.energy.regularity.as_str());
    println!(
        "criterion   {}: {} ({} of {} points evaluated)",
        r.criterion.criterion,
        if r.criterion.passed { "satisfied" } else { "not satisfied" },
        r.criterion.points_evaluated,
        r.criterion.points_total
    );
    for c in &r.criterion.conditions {
        println!("  {:<10} worst {:>+.6e}  failures {}", c.id, c.worst, c.failures);
    }
    println!(
        "oracle      {} segments scanned, {} violated",
        r.oracle.segments_scanned, r.oracle.segments_violated
    );
    println!("verdict     {:?}", r.verdict);
    println!("reason      {}", r.reason);
}

fn criterion_csv(r: &Report) -> String {
    let mut s = String::from("condition,worst,worst_point,failures,noise_scale_failures\n");
    for c in &r.criterion.conditions {
        let point = c
            .worst_point
            .iter()
            .map(|x| format!("{x:.16e}"))
            .collect::<Vec<_>>()
            .join(" ");
        s.push_str(&format!(
            "{},{:.16e},{},{},{}\n",
            c.id, c.worst, point, c.failures, c.noise_scale_failures
        ));
    }
    s
}

fn format_of(s: &Option<String>, file: Option<OutputFormat>) -> Result<OutputFormat> {
    match s {
        Some(s) => OutputFormat::parse(s),
        None => Ok(file.unwrap_or_default()),
    }
}

fn witness_path(out: &Path) -> PathBuf {
    out.with_extension("witness.json")
}

fn run_check(a: CheckArgs) -> Result<u8> {
    let base = a.energy.base()?;
    let flags = ConfigFile {
        grid: GridSection {
            lo: a.grid_lo,
            hi: a.grid_hi,
            points: a.grid_points,
            min_gap: a.min_gap,
            ..Default::default()
        },
        oracle: OracleSection {
            segments: a.segments,
            samples: a.samples,
            ..Default::default()
        },
        ..Default::default()
    };
    let file = base.overlay(flags);
    let format = format_of(&a.format, file.output.format)?;
    let out = a
        .out
        .or_else(|| file.output.path.clone().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("roc-report.json"));
    let cfg = file.resolve()?;
    let report = verdict::check_config(&cfg)?;
    match format {
        OutputFormat::Json => verdict::write_report(&out, &report)?,
        OutputFormat::Csv => write_atomic(&out, criterion_csv(&report).as_bytes())?,
    }
    print_report_summary(&report);
    println!("report      {}", out.display());
    if let Some(w) = &report.witness {
        let wp = witness_path(&out);
        write_atomic(&wp, to_json(w)?.as_bytes())?;
        println!("witness     {}", wp.display());
    }
    Ok(report.verdict.exit_code() as u8)
}

fn run_scan(a: ScanArgs) -> Result<u8> {
    let file = a.energy.base()?;
    let cfg = file.resolve()?;
    let spec = cfg.validate()?;
    let f = parse_matrix(&a.matrix)?;
    let tr = parse_vec(&a.t_range)?;
    if tr.len() != 2 {
        return Err(RocError::Input("--t-range takes two numbers `a,b`".into()));
    }
    let seg = RankOneSegment::new(f, parse_vec(&a.xi)?, parse_vec(&a.eta)?, (tr[0], tr[1]))?;
    let scan = convexity_scan(&spec, &seg, a.samples, &cfg.tolerances)?;
    let format = format_of(&a.format, file.output.format)?;
    let body = match format {
        OutputFormat::Json => to_json(&scan)?,
        OutputFormat::Csv => scan_csv(&spec, &seg, a.samples)?,
    };
    match &a.out {
        Some(p) => write_atomic(p, body.as_bytes())?,
        None => print!("{body}"),
    }
    let line = format!(
        "segment: {:?}, {} crossings, {} second-difference violations, min second difference {:.6e}",
        scan.verdict,
        scan.crossings.len(),
        scan.violations.len(),
        scan.min_second_difference
    );
    if a.out.is_some() {
        println!("{line}");
    } else {
        eprintln!("{line}");
    }
    Ok(match scan.verdict {
        ScanVerdict::ConvexOnSegment => 0,
        ScanVerdict::Violated => 1,
    })
}

fn scan_csv(spec: &EnergySpec, seg: &RankOneSegment, m: usize) -> Result<String> {
    let n = seg.dim();
    let mut s = String::from("t");
    for i in 1..=n {
        s.push_str(&format!(",sigma{i}"));
    }
    s.push_str(",W\n");
    let (t0, t1) = seg.t_range();
    let dt = (t1 - t0) / m as f64;
    for k in 0..=m {
        let t = t0 + k as f64 * dt;
        let x = seg.at(t);
        s.push_str(&format!("{t:.16e}"));
        for v in singular_values(&x)? {
            s.push_str(&format!(",{v:.16e}"));
        }
        match spec.eval_w(&x) {
            Ok(w) => s.push_str(&format!(",{w:.16e}\n")),
            Err(_) => s.push_str(",nan\n"),
        }
    }
    Ok(s)
}

fn run_lemmas(a: LemmaArgs) -> Result<u8> {
    if a.trials == 0 {
        return Err(RocError::Input("--trials must be positive".into()));
    }
    let seed = env_seed()?.or(a.seed).unwrap_or(0);
    let suites: Vec<SuiteReport> = vec![
        planar_crossing_suite(a.trials, seed),
        sum_rule_suite(a.n, a.trials, seed),
        cso2_rank_one_scan(a.trials, seed),
        ordered_dot_suite(a.trials, seed),
        crossing_count_suite(a.trials, 256, seed),
    ];
    for s in &suites {
        println!(
            "{:<4} {:<45} {}/{} passed, {} skipped, max equality error {:.3e}, min slack {:.3e}",
            if s.passed { "PASS" } else { "FAIL" },
            s.name,
            s.passed_trials,
            s.trials,
            s.skipped,
            s.max_equality_error,
            s.min_slack
        );
        for f in s.failures.iter().take(3) {
            println!("       {f}");
        }
    }
    if let Some(p) = &a.out {
        write_atomic(p, to_json(&suites)?.as_bytes())?;
    }
    Ok(if suites.iter().all(|s| s.passed) { 0 } else { 1 })
}

fn run_replay(a: ReplayArgs) -> Result<u8> {
    let text = std::fs::read_to_string(&a.witness)?;
    let (w, embedded) = load_witness(&text)?;
    let (spec, current): (EnergySpec, Option<Tolerances>) = if a.energy.has_energy() {
        let cfg = a.energy.base()?.resolve()?;
        (cfg.validate()?, Some(cfg.tolerances))
    } else if let Some(cfg) = embedded {
        let tol = ConfigFile {
            tolerances: ToleranceSection {
                abs: a.energy.tol_abs,
                rel: a.energy.tol_rel,
            },
            ..Default::default()
        };
        let current = Tolerances {
            abs: tol.tolerances.abs.unwrap_or(cfg.tolerances.abs),
            rel: tol.tolerances.rel.unwrap_or(cfg.tolerances.rel),
        };
        (cfg.validate()?, Some(current))
    } else {
        return Err(RocError::Input(
            "a bare witness file needs the energy (--zoo, --ghat, --hhat or --config)".into(),
        ));
    };
    let out = replay(&spec, &w, current.as_ref())?;
    for warning in &out.warnings {
        eprintln!("warning: {warning}");
    }
    println!(
        "witness at t = {} ({:?}): value {:.16e}, threshold {:.3e}, {}",
        w.t,
        w.kind,
        out.value,
        out.threshold,
        if out.reproduced { "reproduced" } else { "NOT reproduced" }
    );
    Ok(if out.reproduced {
        Status::Refuted.exit_code() as u8
    } else {
        Status::Inconclusive.exit_code() as u8
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Check(a) => run_check(a),
        Command::Scan(a) => run_scan(a),
        Command::VerifyLemmas(a) => run_lemmas(a),
        Command::Replay(a) => run_replay(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}
