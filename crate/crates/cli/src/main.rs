//! `leakscope` command-line entry point.

mod args;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Parser;
use rayon::prelude::*;
use walkdir::WalkDir;

use args::{AnalyzeArgs, Cli, Command, EvalArgs, Format, RunArgs};
use leakscope::detector::{analyze, AnalysisOptions, LeakReport};
use leakscope::eval::{load_dataset, MetricsReport};
use leakscope::frontend::{extract_methods, select_methods, MethodSnippet};
use leakscope::gateway::Gateway;
use leakscope::paths::render_paths;

const CLEAN: u8 = 0;
const LEAKS: u8 = 1;
const FAILURE: u8 = 2;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .init();
    let status = match &cli.command {
        Some(Command::Eval(args)) => run_eval(args),
        None => run_analyze(&cli.analyze),
    };
    ExitCode::from(status)
}

fn thread_pool(run: &RunArgs) -> Result<rayon::ThreadPool, String> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(run.jobs.unwrap_or(0))
        .build()
        .map_err(|e| format!("error: cannot start worker threads: {e}"))
}

/// Every `.java` file under the given paths, in a stable order.
fn collect_inputs(inputs: &[PathBuf]) -> Result<Vec<PathBuf>, String> {
    let mut files = Vec::new();
    for input in inputs {
        if input.is_file() {
            files.push(input.clone());
            continue;
        }
        if !input.is_dir() {
            return Err(format!(
                "{}: error: no such file or directory",
                input.display()
            ));
        }
        for entry in WalkDir::new(input).sort_by_file_name() {
            let entry = entry.map_err(|e| format!("{}: error: {e}", input.display()))?;
            if entry.file_type().is_file() && entry.path().extension().is_some_and(|e| e == "java")
            {
                files.push(entry.into_path());
            }
        }
    }
    Ok(files)
}

/// A method to analyze, or a diagnostic for a file that yielded none.
enum Unit {
    Method {
        file: PathBuf,
        snippet: MethodSnippet,
    },
    Failed(String),
}

fn load_units(files: &[PathBuf], selector: Option<&str>) -> Vec<Unit> {
    let mut units = Vec::new();
    for file in files {
        let text = match std::fs::read_to_string(file) {
            Ok(t) => t,
            Err(e) => {
                units.push(Unit::Failed(format!("{}: error: {e}", file.display())));
                continue;
            }
        };
        match extract_methods(&text) {
            Ok(methods) => units.extend(select_methods(methods, selector).into_iter().map(
                |snippet| Unit::Method {
                    file: file.clone(),
                    snippet,
                },
            )),
            Err(e) => units.push(Unit::Failed(format!(
                "{}:{}: error: {e}",
                file.display(),
                e.line().unwrap_or(1)
            ))),
        }
    }
    units
}

#[derive(Default)]
struct Outcome {
    stdout: String,
    stderr: String,
    leaks: usize,
    failed: bool,
}

fn method_id(file: &Path, snippet: &MethodSnippet) -> String {
    format!("{}:{}", file.display(), snippet.symbol())
}

fn render_report(out: &mut String, file: &Path, name: &str, r: &LeakReport, format: Format) {
    match format {
        Format::Json => {
            out.push_str(&serde_json::to_string(r).expect("reports serialize"));
            out.push('\n');
        }
        Format::Text => {
            let lines: Vec<String> = r.acquire_lines.iter().map(u32::to_string).collect();
            let _ = writeln!(
                out,
                "{}:{}: leak: `{}` acquired at line {} in {} is not released on path {}",
                file.display(),
                r.acquire_lines.first().copied().unwrap_or(0),
                r.resource,
                lines.join(", "),
                name,
                r.witness_intervals
            );
        }
    }
}

fn analyze_unit(
    file: &Path,
    snippet: &MethodSnippet,
    gateway: &Gateway,
    args: &AnalyzeArgs,
) -> Outcome {
    let mut out = Outcome::default();
    let fail = |out: &mut Outcome, line: Option<u32>, msg: String| {
        let _ = writeln!(
            out.stderr,
            "{}:{}: error: {msg}",
            file.display(),
            line.unwrap_or(snippet.first_line())
        );
        out.failed = true;
    };
    let intents = match gateway.infer(snippet) {
        Ok(i) => i,
        Err(e) => {
            fail(&mut out, None, e.to_string());
            return out;
        }
    };
    let options = AnalysisOptions {
        max_paths: args.run.max_paths,
    };
    let analysis = match analyze(snippet, &intents, &options) {
        Ok(a) => a,
        Err(e) => {
            fail(&mut out, e.line(), e.to_string());
            return out;
        }
    };
    let id = method_id(file, snippet);
    if args.dump_cfg {
        let _ = write!(out.stderr, "cfg {id}\n{}", analysis.cfg.dump());
    }
    if args.dump_paths {
        let _ = writeln!(out.stderr, "paths {id}");
        for p in render_paths(&analysis.cfg, &analysis.paths) {
            let _ = writeln!(out.stderr, "  {p}");
        }
    }
    for res in &analysis.suppressed {
        log::info!("{id}: `{res}` is closed by try-with-resources");
    }
    let name = snippet.name().unwrap_or("<block>");
    for mut report in analysis.reports {
        report.method_id = id.clone();
        render_report(&mut out.stdout, file, name, &report, args.run.format);
        out.leaks += 1;
    }
    out
}

fn run_analyze(args: &AnalyzeArgs) -> u8 {
    let files = match collect_inputs(&args.input) {
        Ok(f) => f,
        Err(msg) => {
            eprintln!("{msg}");
            return FAILURE;
        }
    };
    let gateway = match Gateway::from_config(&args.provider.config()) {
        Ok(g) => g,
        Err(e) => {
            eprintln!("error: {e}");
            return FAILURE;
        }
    };
    let pool = match thread_pool(&args.run) {
        Ok(p) => p,
        Err(msg) => {
            eprintln!("{msg}");
            return FAILURE;
        }
    };
    let units = load_units(&files, args.method.as_deref());
    let outcomes: Vec<Outcome> = pool.install(|| {
        units
            .par_iter()
            .map(|u| match u {
                Unit::Method { file, snippet } => analyze_unit(file, snippet, &gateway, args),
                Unit::Failed(msg) => Outcome {
                    stderr: format!("{msg}\n"),
                    failed: true,
                    ..Outcome::default()
                },
            })
            .collect()
    });
    let mut status = CLEAN;
    for o in &outcomes {
        eprint!("{}", o.stderr);
        print!("{}", o.stdout);
        if o.failed {
            status = FAILURE;
        } else if o.leaks > 0 && status == CLEAN {
            status = LEAKS;
        }
    }
    status
}

fn run_eval(args: &EvalArgs) -> u8 {
    let result = (|| -> Result<MetricsReport, String> {
        let pairs = load_dataset(&args.dataset).map_err(|e| e.to_string())?;
        let gateway = Gateway::from_config(&args.provider.config()).map_err(|e| e.to_string())?;
        let pool = thread_pool(&args.run)?;
        let options = AnalysisOptions {
            max_paths: args.run.max_paths,
        };
        pool.install(|| MetricsReport::run(&pairs, &gateway, &options))
            .map_err(|e| e.to_string())
    })();
    match result {
        Ok(report) => {
            match args.run.format {
                Format::Text => print!("{}", report.render_table()),
                Format::Json => println!("{}", report.to_json()),
            }
            CLEAN
        }
        Err(msg) => {
            eprintln!("error: {msg}");
            FAILURE
        }
    }
}
