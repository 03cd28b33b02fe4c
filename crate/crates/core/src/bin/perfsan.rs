use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use perfsan::corpus;
use perfsan::logger::LoggerConfig;
use perfsan::report::{emit_csv, histogram, render_findings, HistogramKind};
use perfsan::rules::{evaluate, parse_rule_list, run_rules, RuleConfig, RuleId};
use perfsan::symbols::SymbolMap;
use perfsan::tracedb::TraceDb;

#[derive(Parser)]
#[command(
    name = "perfsan",
    version,
    about = "Container misuse analyzer for .w1log traces"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Analyze a log and print ranked findings.
    Report(ReportArgs),
    /// Print every instance timeline in the log.
    Dump { log: PathBuf },
    /// Print a histogram (size, lifetime, refcount, string-dup).
    Histogram {
        log: PathBuf,
        kind: HistogramKind,
        /// Also write the histogram as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Run the built-in anti-pattern programs and check every rule fires.
    Selftest {
        /// Run only this rule's negative program and check the rule stays silent.
        #[arg(long)]
        negative: Option<RuleId>,
    },
    /// Write the built-in corpus log plus a matching `.sym` symbol map.
    Demo { out: PathBuf },
}

#[derive(Args)]
struct ReportArgs {
    log: PathBuf,
    #[arg(long)]
    symbols: Option<PathBuf>,
    /// Comma-separated rule names or numbers.
    #[arg(long)]
    rules: Option<String>,
    #[arg(long, default_value_t = 20)]
    top: usize,
    #[arg(long, default_value_t = 0)]
    min_severity: u64,
    /// Exit with status 1 when any finding is reported.
    #[arg(long)]
    fail_on_findings: bool,
    #[command(flatten)]
    thresholds: Thresholds,
}

#[derive(Args)]
struct Thresholds {
    #[arg(long)]
    short_lifetime_ticks: Option<u64>,
    #[arg(long)]
    small_vector_max: Option<u64>,
    #[arg(long)]
    shrink_waste_min: Option<u64>,
    #[arg(long)]
    duplicate_string_min: Option<u64>,
    #[arg(long)]
    high_refcount_min: Option<u64>,
    #[arg(long)]
    double_lookup_window: Option<usize>,
    #[arg(long)]
    data_shift_min: Option<u64>,
    #[arg(long)]
    min_instances_per_finding: Option<u64>,
}

impl Thresholds {
    fn apply(&self, mut cfg: RuleConfig) -> RuleConfig {
        macro_rules! set {
            ($($f:ident),*) => { $(if let Some(v) = self.$f { cfg.$f = v; })* };
        }
        set!(
            short_lifetime_ticks,
            small_vector_max,
            shrink_waste_min,
            duplicate_string_min,
            high_refcount_min,
            double_lookup_window,
            data_shift_min,
            min_instances_per_finding
        );
        cfg
    }
}

/// Failure with the exit status it maps to.
struct Failure(u8, String);

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure(2, e.to_string())
    }
}

/// Writes report content to stdout; a closed pipe is not an error.
fn emit(text: &str) {
    let _ = std::io::stdout().lock().write_all(text.as_bytes());
}

fn load(path: &Path) -> Result<TraceDb, Failure> {
    let bytes = std::fs::read(path).map_err(|e| Failure(2, format!("{}: {e}", path.display())))?;
    let db =
        TraceDb::from_bytes(&bytes).map_err(|e| Failure(2, format!("{}: {e}", path.display())))?;
    for w in &db.warnings {
        eprintln!("warning: {w}");
    }
    Ok(db)
}

fn report(args: &ReportArgs) -> Result<u8, Failure> {
    let cfg = args.thresholds.apply(RuleConfig::default());
    cfg.validate()?;
    let rules = match &args.rules {
        Some(list) => parse_rule_list(list)?,
        None => RuleId::ALL.to_vec(),
    };
    let symbols = match &args.symbols {
        Some(p) => SymbolMap::load(p).map_err(|e| Failure(2, format!("{}: {e}", p.display())))?,
        None => SymbolMap::default(),
    };
    let db = load(&args.log)?;
    let findings: Vec<_> = run_rules(&rules, &db.reconstruct_instances(), &cfg)
        .into_iter()
        .filter(|f| f.severity >= args.min_severity)
        .collect();
    emit(&render_findings(&findings, &db, &symbols, args.top));
    Ok(u8::from(args.fail_on_findings && !findings.is_empty()))
}

fn selftest(negative: Option<RuleId>) -> Result<u8, Failure> {
    let buffer = LoggerConfig::from_env()?.buffer_capacity;
    let cfg = RuleConfig::default();
    if let Some(rule) = negative {
        let bytes = corpus::record(buffer, |h| corpus::run_rule_program(h, rule, false))?;
        let db = TraceDb::from_bytes(&bytes)?;
        let n = evaluate(rule, &db.reconstruct_instances(), &cfg).len();
        let ok = n == 0;
        emit(&format!(
            "{} {} negative: {n} findings\n",
            if ok { "PASS" } else { "FAIL" },
            rule.name()
        ));
        return Ok(u8::from(!ok));
    }
    let result = corpus::selftest(buffer, &cfg)?;
    emit(&result.render());
    Ok(u8::from(!result.passed()))
}

fn run(cli: Cli) -> Result<u8, Failure> {
    match cli.command {
        Command::Report(args) => report(&args),
        Command::Dump { log } => {
            emit(&load(&log)?.dump());
            Ok(0)
        }
        Command::Histogram { log, kind, csv } => {
            let h = histogram(&load(&log)?.reconstruct_instances(), kind);
            emit(&h.render_text());
            if let Some(path) = csv {
                emit_csv(&h, &path).map_err(|e| Failure(2, format!("{}: {e}", path.display())))?;
            }
            Ok(0)
        }
        Command::Selftest { negative } => selftest(negative),
        Command::Demo { out } => {
            let buffer = LoggerConfig::from_env()?.buffer_capacity;
            let bytes = corpus::record(buffer, corpus::full_corpus)?;
            std::fs::write(&out, bytes)?;
            let sym = out.with_extension("sym");
            std::fs::write(&sym, corpus::symbol_map_text())?;
            eprintln!("wrote {} and {}", out.display(), sym.display());
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(Failure(code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}
