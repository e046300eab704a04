//! Command-line surface: `slice`, `check`, `reduce`, `gen`, `bench`, `dot`.
//!
//! Exit codes are the process-level contract: 0 success / certificate valid,
//! 1 certificate invalid or analysis failure, 2 usage or parse error.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::agraph::export_dot;
use crate::certificate::{check_certificate, emit_certificate, Certificate};
use crate::ir::{parse_program, parse_ss_config, serialize_program, Program, SsConfig};
use crate::slicer::{slice, SliceMode, SliceResult};
use crate::testkit::{
    bench_context_note, gen_program, rows_to_csv, run_corpus, scatter_svg, GenParams,
};
use crate::transform::reduce_program;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    /// Success; for `check`, the certificate is valid.
    Success,
    /// Certificate invalid or analysis-level failure.
    Failure,
    /// Usage, parse, or validation error.
    Usage,
}

impl ExitStatus {
    pub fn code(self) -> i32 {
        match self {
            ExitStatus::Success => 0,
            ExitStatus::Failure => 1,
            ExitStatus::Usage => 2,
        }
    }
}

#[derive(Parser)]
#[command(
    name = "dslicer",
    version,
    about = "Flow-insensitive source/sink slicer with checkable certificates"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct ModeArg {
    /// Slice mode: both | fwd | bwd
    #[arg(long, default_value = "both", value_parser = parse_mode)]
    mode: SliceMode,
}

fn parse_mode(s: &str) -> Result<SliceMode, String> {
    SliceMode::from_tag(s).ok_or_else(|| format!("unknown mode `{s}` (expected both, fwd, bwd)"))
}

#[derive(Subcommand)]
enum Cmd {
    /// Compute the relevant/irrelevant method partition of a program.
    Slice {
        /// Program file (.ir)
        program: PathBuf,
        /// Source/sink configuration file
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        mode: ModeArg,
        /// Write a certificate here
        #[arg(long)]
        cert: Option<PathBuf>,
        /// Also write the report here
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Check a certificate against a program and configuration.
    Check {
        program: PathBuf,
        certificate: PathBuf,
        #[arg(long)]
        config: PathBuf,
    },
    /// Write a copy of the program containing only relevant methods.
    Reduce {
        program: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        mode: ModeArg,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Generate a seeded synthetic program.
    Gen {
        #[arg(long)]
        classes: usize,
        #[arg(long)]
        methods: usize,
        #[arg(long)]
        instrs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.35)]
        call_density: f64,
        #[arg(long, default_value_t = 0.25)]
        field_density: f64,
        #[arg(long, default_value_t = 0.15)]
        source_density: f64,
        #[arg(long, default_value_t = 0.15)]
        sink_density: f64,
        #[arg(long, default_value_t = 3)]
        inheritance_depth: usize,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Analyze every .ir file in a directory and emit timing rows as CSV.
    Bench {
        dir: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        csv: PathBuf,
        /// Optional SVG scatter (time and reduction vs method count)
        #[arg(long)]
        plot: Option<PathBuf>,
    },
    /// Export the assignment graph as DOT.
    Dot {
        program: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
}

/// Parses `argv` and runs the selected subcommand. All output paths come from
/// flags; nothing else is written.
pub fn run_cli<I, T>(argv: I) -> ExitStatus
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            // clap renders its own help/version output on stdout with success.
            let code = if e.use_stderr() {
                ExitStatus::Usage
            } else {
                ExitStatus::Success
            };
            let _ = e.print();
            return code;
        }
    };
    match cli.cmd {
        Cmd::Slice {
            program,
            config,
            mode,
            cert,
            report,
        } => cmd_slice(
            &program,
            &config,
            mode.mode,
            cert.as_deref(),
            report.as_deref(),
        ),
        Cmd::Check {
            program,
            certificate,
            config,
        } => cmd_check(&program, &certificate, &config),
        Cmd::Reduce {
            program,
            config,
            mode,
            output,
            report,
        } => cmd_reduce(&program, &config, mode.mode, &output, report.as_deref()),
        Cmd::Gen {
            classes,
            methods,
            instrs,
            seed,
            call_density,
            field_density,
            source_density,
            sink_density,
            inheritance_depth,
            output,
        } => {
            let params = GenParams {
                classes,
                methods_per_class: methods,
                instrs_per_method: instrs,
                call_density,
                field_density,
                source_density,
                sink_density,
                inheritance_depth,
                seed,
            };
            let p = gen_program(&params);
            match fs::write(&output, serialize_program(&p)) {
                Ok(()) => {
                    println!("wrote {} ({} methods)", output.display(), p.method_count());
                    ExitStatus::Success
                }
                Err(e) => {
                    eprintln!("error: cannot write {}: {e}", output.display());
                    ExitStatus::Usage
                }
            }
        }
        Cmd::Bench {
            dir,
            config,
            csv,
            plot,
        } => cmd_bench(&dir, &config, &csv, plot.as_deref()),
        Cmd::Dot {
            program,
            config,
            output,
        } => cmd_dot(&program, &config, &output),
    }
}

fn load_program(path: &Path) -> Result<Program, ExitStatus> {
    let text = fs::read_to_string(path).map_err(|e| {
        eprintln!("error: cannot read {}: {e}", path.display());
        ExitStatus::Usage
    })?;
    parse_program(&text).map_err(|diags| {
        for d in &diags {
            eprintln!("{}: {d}", path.display());
        }
        ExitStatus::Usage
    })
}

fn load_config(path: &Path) -> Result<SsConfig, ExitStatus> {
    let text = fs::read_to_string(path).map_err(|e| {
        eprintln!("error: cannot read {}: {e}", path.display());
        ExitStatus::Usage
    })?;
    parse_ss_config(&text).map_err(|diags| {
        for d in &diags {
            eprintln!("{}: {d}", path.display());
        }
        ExitStatus::Usage
    })
}

fn write_file(path: &Path, contents: &str) -> Result<(), ExitStatus> {
    fs::write(path, contents).map_err(|e| {
        eprintln!("error: cannot write {}: {e}", path.display());
        ExitStatus::Usage
    })
}

fn slice_report(p: &Program, res: &SliceResult) -> String {
    let mut out = String::new();
    out.push_str(&format!("mode: {}\n", res.mode));
    out.push_str(&format!(
        "graph: {} nodes, {} edges\n",
        res.graph.node_count(),
        res.graph.edge_count()
    ));
    for site in res.graph.unresolved_calls() {
        out.push_str(&format!("warning: {site}\n"));
    }
    let relevant = &res.relevant_methods;
    let irrelevant = res.irrelevant_methods(p);
    out.push_str(&format!("relevant methods ({}):\n", relevant.len()));
    for m in relevant {
        out.push_str(&format!("  {m}\n"));
    }
    out.push_str(&format!("irrelevant methods ({}):\n", irrelevant.len()));
    for m in &irrelevant {
        out.push_str(&format!("  {m}\n"));
    }
    out
}

fn cmd_slice(
    program: &Path,
    config: &Path,
    mode: SliceMode,
    cert_out: Option<&Path>,
    report_out: Option<&Path>,
) -> ExitStatus {
    let (p, cfg) = match (load_program(program), load_config(config)) {
        (Ok(p), Ok(c)) => (p, c),
        (Err(e), _) | (_, Err(e)) => return e,
    };
    let res = match slice(&p, &cfg, mode) {
        Ok(res) => res,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitStatus::Failure;
        }
    };
    let report = slice_report(&p, &res);
    print!("{report}");
    if let Some(path) = report_out {
        if let Err(e) = write_file(path, &report) {
            return e;
        }
    }
    if let Some(path) = cert_out {
        let cert = emit_certificate(&p, &res.graph, &res.marking, mode);
        if let Err(e) = write_file(path, &cert.to_text()) {
            return e;
        }
        println!("certificate written to {}", path.display());
    }
    ExitStatus::Success
}

fn cmd_check(program: &Path, certificate: &Path, config: &Path) -> ExitStatus {
    let (p, cfg) = match (load_program(program), load_config(config)) {
        (Ok(p), Ok(c)) => (p, c),
        (Err(e), _) | (_, Err(e)) => return e,
    };
    let cert_text = match fs::read_to_string(certificate) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", certificate.display());
            return ExitStatus::Usage;
        }
    };
    let cert = match Certificate::parse(&cert_text) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {}: {e}", certificate.display());
            return ExitStatus::Usage;
        }
    };
    match check_certificate(&p, &cert, &cfg) {
        Ok(report) if report.verdict.is_valid() => {
            println!("VALID");
            println!(
                "checked {} nodes, {} edges ({} extra edges permitted)",
                report.verdict.stats.node_visits,
                report.verdict.stats.edge_visits,
                report.verdict.stats.extra_edges
            );
            println!("relevant methods ({}):", report.relevant_methods.len());
            for m in &report.relevant_methods {
                println!("  {m}");
            }
            ExitStatus::Success
        }
        Ok(report) => {
            println!("INVALID");
            for v in &report.verdict.violations {
                println!("  {v}");
            }
            ExitStatus::Failure
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitStatus::Failure
        }
    }
}

fn cmd_reduce(
    program: &Path,
    config: &Path,
    mode: SliceMode,
    output: &Path,
    report_out: Option<&Path>,
) -> ExitStatus {
    let (p, cfg) = match (load_program(program), load_config(config)) {
        (Ok(p), Ok(c)) => (p, c),
        (Err(e), _) | (_, Err(e)) => return e,
    };
    let res = match slice(&p, &cfg, mode) {
        Ok(res) => res,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitStatus::Failure;
        }
    };
    let (reduced, report) = reduce_program(&p, &res.relevant_methods);
    if let Err(e) = write_file(output, &serialize_program(&reduced)) {
        return e;
    }
    let mut text = String::new();
    text.push_str(&format!(
        "kept {} methods, removed {} ({:.2}% reduction)\n",
        report.kept.len(),
        report.removed.len(),
        report.reduction_pct
    ));
    for m in &report.removed {
        text.push_str(&format!("  removed {m}\n"));
    }
    print!("{text}");
    println!("reduced program written to {}", output.display());
    if let Some(path) = report_out {
        if let Err(e) = write_file(path, &text) {
            return e;
        }
    }
    ExitStatus::Success
}

fn cmd_bench(dir: &Path, config: &Path, csv_out: &Path, plot: Option<&Path>) -> ExitStatus {
    let cfg = match load_config(config) {
        Ok(c) => c,
        Err(e) => return e,
    };
    let entries = match fs::read_dir(dir) {
        Ok(en) => en,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", dir.display());
            return ExitStatus::Usage;
        }
    };
    let mut programs: Vec<(String, Program)> = Vec::new();
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "ir"))
        .collect();
    paths.sort();
    for path in paths {
        let id = path
            .file_stem()
            .unwrap_or_default()
            .to_string_lossy()
            .to_string();
        match fs::read_to_string(&path)
            .map_err(|e| e.to_string())
            .and_then(|t| {
                parse_program(&t).map_err(|d| d.first().map(|d| d.to_string()).unwrap_or_default())
            }) {
            Ok(p) => programs.push((id, p)),
            Err(e) => {
                eprintln!("warning: skipping {}: {e}", path.display());
            }
        }
    }
    let rows = run_corpus(&programs, &cfg);
    for r in rows.iter().filter(|r| r.error.is_some()) {
        eprintln!(
            "warning: {}: {}",
            r.program_id,
            r.error.as_deref().unwrap_or("")
        );
    }
    if let Err(e) = write_file(csv_out, &rows_to_csv(&rows)) {
        return e;
    }
    println!(
        "benchmarked {} programs -> {}",
        rows.len(),
        csv_out.display()
    );
    if let Some(path) = plot {
        if let Err(e) = write_file(path, &scatter_svg(&rows)) {
            return e;
        }
        println!("scatter written to {}", path.display());
    }
    println!("{}", bench_context_note());
    ExitStatus::Success
}

fn cmd_dot(program: &Path, config: &Path, output: &Path) -> ExitStatus {
    let (p, cfg) = match (load_program(program), load_config(config)) {
        (Ok(p), Ok(c)) => (p, c),
        (Err(e), _) | (_, Err(e)) => return e,
    };
    let res = match slice(&p, &cfg, SliceMode::Both) {
        Ok(res) => res,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitStatus::Failure;
        }
    };
    if let Err(e) = write_file(output, &export_dot(&res.graph)) {
        return e;
    }
    println!("dot written to {}", output.display());
    ExitStatus::Success
}
