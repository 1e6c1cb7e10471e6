//! Command-line front end: detection reports, guard instrumentation, batch
//! runs and the persisted costly-loop standard.

pub mod batch;
pub mod config;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::Parser;
use soliditycheck_core::report::{
    compute_metrics, render_machine, render_metrics, render_text, render_text_batch, Annotations,
};
use soliditycheck_core::rule_engine::run_all;
use soliditycheck_core::{
    overflow, reentrancy, Clock, DetectionReport, FixedClock, GasModel, InstrumentedSource,
    RuleCatalog, ScanContext, SystemClock,
};

use batch::{read_source, FileError};
use config::{config_path, Config, ReportFormat};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FINDINGS: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_ANALYSIS: i32 = 4;

const AFTER_HELP: &str = "\
Exit codes: 0 no findings, 1 findings present, 2 usage error, 3 I/O error, 4 analysis error.
With --r and --o together, re-entrancy vaccines are inserted first, then overflow guards.";

#[derive(Parser, Debug)]
#[command(name = "soliditycheck", version, about = "Static analysis and guard instrumentation for Solidity", after_help = AFTER_HELP)]
pub struct Cli {
    /// Insert re-entrancy vaccines into FILES.
    #[arg(long = "r")]
    pub r: bool,
    /// Insert integer overflow guards into FILES.
    #[arg(long = "o")]
    pub o: bool,
    /// Detect the 18 problem classes in FILES and write reports.
    #[arg(long = "d")]
    pub d: bool,
    /// Set the costly-loop statement limit, or re-derive it from --gas and --avg.
    #[arg(long = "g", value_name = "LIMIT", num_args = 0..=1)]
    pub g: Option<Option<u64>>,
    /// Gas of an expensive transaction (with --g).
    #[arg(long, requires = "g")]
    pub gas: Option<u64>,
    /// Average gas per statement (with --g).
    #[arg(long, requires = "g")]
    pub avg: Option<u64>,
    /// Print the current costly-loop standard.
    #[arg(long = "s")]
    pub s: bool,
    /// Detect every .sol file under DIR and print corpus metrics.
    #[arg(long = "f", value_name = "DIR")]
    pub f: Option<PathBuf>,
    /// Config file to use instead of the default location.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Report format for this run.
    #[arg(long, value_enum)]
    pub format: Option<ReportFormat>,
    /// Batch worker count (0: one per core).
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Directory for reports and guarded sources instead of beside the input.
    #[arg(long, value_name = "DIR")]
    pub out_dir: Option<PathBuf>,
    /// Ground-truth annotations for batch precision and recall.
    #[arg(long, value_name = "FILE", requires = "f")]
    pub truth: Option<PathBuf>,
    /// Report this many seconds for every timing.
    #[arg(long, hide = true, value_name = "SECS")]
    pub fixed_clock: Option<f64>,
    pub files: Vec<PathBuf>,
}

/// Exit status of several operations: I/O failures dominate analysis
/// failures, which dominate findings.
fn worse(a: i32, b: i32) -> i32 {
    let rank = |c| match c {
        EXIT_IO => 4,
        EXIT_ANALYSIS => 3,
        EXIT_USAGE => 2,
        EXIT_FINDINGS => 1,
        _ => 0,
    };
    if rank(b) > rank(a) {
        b
    } else {
        a
    }
}

fn error_code(e: &FileError) -> i32 {
    if e.is_io() {
        EXIT_IO
    } else {
        EXIT_ANALYSIS
    }
}

pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    run_with(argv, &mut std::io::stdout().lock(), &mut std::io::stderr().lock())
}

pub fn run_with<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.to_string();
            return if e.use_stderr() {
                let _ = write!(err, "{text}");
                EXIT_USAGE
            } else {
                let _ = write!(out, "{text}");
                EXIT_OK
            };
        }
    };
    Session { cli, out, err }.run()
}

struct Session<'a> {
    cli: Cli,
    out: &'a mut dyn Write,
    err: &'a mut dyn Write,
}

impl Session<'_> {
    fn usage(&mut self, msg: &str) -> i32 {
        let _ = writeln!(self.err, "error: {msg}\n\nFor more information, try '--help'.");
        EXIT_USAGE
    }

    fn run(mut self) -> i32 {
        let instrument = self.cli.r || self.cli.o;
        let any_action = instrument || self.cli.d || self.cli.g.is_some() || self.cli.s || self.cli.f.is_some();
        if !any_action {
            return self.usage("no command given; use one of --d, --r, --o, --f, --g, --s");
        }
        if (instrument || self.cli.d) && self.cli.files.is_empty() {
            return self.usage("--d, --r and --o need at least one file");
        }
        if !(instrument || self.cli.d) && !self.cli.files.is_empty() {
            return self.usage("files given without --d, --r or --o");
        }

        let cfg_path = config_path(self.cli.config.as_deref());
        let mut cfg = match Config::load(&cfg_path) {
            Ok(c) => c,
            Err(e) => {
                let _ = writeln!(self.err, "error: {e}");
                return EXIT_IO;
            }
        };

        let mut code = EXIT_OK;
        if let Some(g) = self.cli.g {
            let gm = match (g, self.cli.gas, self.cli.avg) {
                (Some(limit), None, None) => cfg.gas_model.with_limit(limit),
                (None, Some(_), Some(0)) => return self.usage("--avg must be positive"),
                (None, Some(gas), Some(avg)) => GasModel {
                    expensive_tx_gas: gas,
                    ave_gas_per_stmt: avg,
                    stmt_limit_override: None,
                },
                _ => return self.usage("--g takes either a LIMIT or both --gas and --avg"),
            };
            cfg.gas_model = gm;
            if let Err(e) = cfg.save(&cfg_path) {
                let _ = writeln!(self.err, "error: {e}");
                return EXIT_IO;
            }
            let _ = writeln!(self.out, "Saved to {}", cfg_path.display());
            self.print_standard(&cfg.gas_model);
        }
        if self.cli.s && self.cli.g.is_none() {
            self.print_standard(&cfg.gas_model);
        }

        if let Some(f) = self.cli.format {
            cfg.report_format = f;
        }
        if let Some(j) = self.cli.jobs {
            cfg.parallelism = j;
        }
        let clock: Box<dyn Clock> = match self.cli.fixed_clock {
            Some(secs) if secs.is_finite() && secs >= 0.0 => Box::new(FixedClock(Duration::from_secs_f64(secs))),
            Some(_) => return self.usage("--fixed-clock needs a non-negative number of seconds"),
            None => Box::new(SystemClock),
        };

        if let Some(root) = self.cli.f.clone() {
            code = worse(code, self.batch(&root, &cfg, clock.as_ref()));
        }
        let files = self.cli.files.clone();
        if self.cli.d {
            for path in &files {
                code = worse(code, self.detect(path, &cfg, clock.as_ref()));
            }
        }
        if instrument {
            for path in &files {
                code = worse(code, self.instrument(path));
            }
        }
        code
    }

    fn print_standard(&mut self, gm: &GasModel) {
        match gm.stmt_limit() {
            Ok(limit) => {
                let how = if gm.stmt_limit_override.is_some() { "set explicitly" } else { "derived" };
                let _ = writeln!(self.out, "Costly loop standard: {limit} statements ({how})");
            }
            Err(e) => {
                let _ = writeln!(self.out, "Costly loop standard: invalid ({e})");
            }
        }
        let _ = writeln!(self.out, "Expensive transaction gas: {}", gm.expensive_tx_gas);
        let _ = writeln!(self.out, "Average gas per statement: {}", gm.ave_gas_per_stmt);
    }

    /// Where an output derived from `input` goes: beside it, or under
    /// `--out-dir` at `rel`'s position.
    fn output_path(&self, input: &Path, rel: &Path, suffix: &str) -> PathBuf {
        let stem = input.file_stem().map_or_else(|| "out".into(), |s| s.to_string_lossy().into_owned());
        let name = format!("{stem}{suffix}");
        match &self.cli.out_dir {
            Some(dir) => dir.join(rel.parent().unwrap_or(Path::new(""))).join(name),
            None => input.with_file_name(name),
        }
    }

    fn write_file(&mut self, path: &Path, text: &str) -> Result<(), std::io::Error> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(path, text)
    }

    fn write_report(&mut self, input: &Path, rel: &Path, report: &DetectionReport, fmt: ReportFormat) -> Result<Vec<PathBuf>, std::io::Error> {
        let mut written = Vec::new();
        if fmt.text() {
            let p = self.output_path(input, rel, ".report.txt");
            self.write_file(&p, &render_text(report))?;
            written.push(p);
        }
        if fmt.json() {
            let p = self.output_path(input, rel, ".report.json");
            self.write_file(&p, &(render_machine(report) + "\n"))?;
            written.push(p);
        }
        Ok(written)
    }

    fn fail(&mut self, path: &Path, e: &dyn std::fmt::Display, code: i32) -> i32 {
        let _ = writeln!(self.err, "error: {}: {e}", path.display());
        code
    }

    fn detect(&mut self, path: &Path, cfg: &Config, clock: &dyn Clock) -> i32 {
        let fs = match read_source(path) {
            Ok(fs) => fs,
            Err(e) => return self.fail(path, &e, error_code(&e)),
        };
        let ctx = ScanContext {
            gas: cfg.gas_model,
            inheritance: None,
            prefilter: true,
        };
        let catalog = RuleCatalog::standard();
        let result = match run_all(catalog, &fs, &ctx, clock) {
            Ok(r) => r,
            Err(e) => return self.fail(path, &e, EXIT_ANALYSIS),
        };
        let report = DetectionReport::from_result(&result, catalog);
        let rel = PathBuf::from(path.file_name().unwrap_or_default());
        match self.write_report(path, &rel, &report, cfg.report_format) {
            Ok(written) => {
                let names: Vec<String> = written.iter().map(|p| p.display().to_string()).collect();
                let _ = writeln!(
                    self.out,
                    "{}: {} problematic statement(s); report: {}",
                    path.display(),
                    report.total_problem_count,
                    names.join(", ")
                );
            }
            Err(e) => return self.fail(path, &e, EXIT_IO),
        }
        if report.total_problem_count > 0 {
            EXIT_FINDINGS
        } else {
            EXIT_OK
        }
    }

    fn instrument(&mut self, path: &Path) -> i32 {
        let fs = match read_source(path) {
            Ok(fs) => fs,
            Err(e) => return self.fail(path, &e, error_code(&e)),
        };
        let guarded: Result<InstrumentedSource, _> = match (self.cli.r, self.cli.o) {
            (true, true) => reentrancy::insert_vaccines(&fs)
                .and_then(|first| overflow::instrument(&first.to_formatted()).map(|second| first.compose(second))),
            (true, false) => reentrancy::insert_vaccines(&fs),
            _ => overflow::instrument(&fs),
        };
        let guarded = match guarded {
            Ok(g) => g,
            Err(e) => return self.fail(path, &e, EXIT_ANALYSIS),
        };
        let suffix = match (self.cli.r, self.cli.o) {
            (true, true) => ".guarded.sol",
            (true, false) => ".reentrancy_guarded.sol",
            _ => ".overflow_guarded.sol",
        };
        let rel = PathBuf::from(path.file_name().unwrap_or_default());
        let target = self.output_path(path, &rel, suffix);
        if let Err(e) = self.write_file(&target, &guarded.render()) {
            return self.fail(&target, &e, EXIT_IO);
        }
        let _ = writeln!(
            self.out,
            "{}: {} line(s) inserted; written to {}",
            path.display(),
            guarded.insertions.len(),
            target.display()
        );
        for n in &guarded.notices {
            let _ = writeln!(self.out, "  note: {n}");
        }
        for ins in &guarded.insertions {
            let _ = writeln!(self.out, "  line {} [{}] {}", ins.line, ins.kind.label(), ins.text);
        }
        EXIT_OK
    }

    fn batch(&mut self, root: &Path, cfg: &Config, clock: &dyn Clock) -> i32 {
        let truth = match self.cli.truth.clone() {
            Some(p) => match std::fs::read_to_string(&p) {
                Ok(text) => match Annotations::parse(&text) {
                    Ok(a) => Some(a),
                    Err(e) => return self.fail(&p, &e, EXIT_USAGE),
                },
                Err(e) => return self.fail(&p, &e, EXIT_IO),
            },
            None => None,
        };
        let paths = match batch::gather(root) {
            Ok(p) => p,
            Err(e) => return self.fail(root, &e, EXIT_IO),
        };
        let run = batch::run_batch(&paths, cfg.gas_model, cfg.parallelism, clock);
        let mut code = EXIT_OK;
        let catalog = RuleCatalog::standard();
        let mut reports = Vec::with_capacity(run.results.len());
        for result in &run.results {
            let input = PathBuf::from(&result.path);
            let rel = input.strip_prefix(root).unwrap_or(&input).to_path_buf();
            let report = DetectionReport::from_result(result, catalog);
            if let Err(e) = self.write_report(&input, &rel, &report, cfg.report_format) {
                code = worse(code, self.fail(&input, &e, EXIT_IO));
            }
            let _ = writeln!(self.out, "{}: {} problematic statement(s)", input.display(), report.total_problem_count);
            if report.total_problem_count > 0 {
                code = worse(code, EXIT_FINDINGS);
            }
            reports.push(report);
        }
        for (path, e) in &run.errors {
            code = worse(code, self.fail(path, e, error_code(e)));
        }
        match compute_metrics(&run.results, run.elapsed, truth.as_ref()) {
            Ok(m) => {
                let table = render_metrics(&m);
                let _ = write!(self.out, "{table}");
                if let Some(dir) = self.cli.out_dir.clone() {
                    let combined = render_text_batch(&reports);
                    for (name, text) in [("batch.report.txt", combined), ("metrics.txt", table)] {
                        if let Err(e) = self.write_file(&dir.join(name), &text) {
                            code = worse(code, self.fail(&dir.join(name), &e, EXIT_IO));
                        }
                    }
                }
            }
            Err(e) => {
                let _ = writeln!(self.err, "warning: {}: {e}", root.display());
            }
        }
        code
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_code_precedence() {
        assert_eq!(worse(EXIT_FINDINGS, EXIT_ANALYSIS), EXIT_ANALYSIS);
        assert_eq!(worse(EXIT_IO, EXIT_ANALYSIS), EXIT_IO);
        assert_eq!(worse(EXIT_OK, EXIT_FINDINGS), EXIT_FINDINGS);
        assert_eq!(worse(EXIT_ANALYSIS, EXIT_OK), EXIT_ANALYSIS);
    }
}
