use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, ValueEnum};
use ffiscope::diagnostics::DedupOptions;
use ffiscope::machine::{MachineConfig, DEFAULT_STEP_BUDGET};
use ffiscope::runner::{
    combine_exit_codes, load_scenario, render_corpus, render_diff, render_run, run_corpus, run_differential,
    run_single, ModelSelection,
};

const EXIT_USAGE: u8 = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Model {
    Tb,
    Sb,
    Both,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
}

/// Interpret mixed host/foreign scenarios and report aliasing, lifetime and
/// boundary errors.
#[derive(Debug, Parser)]
#[command(name = "ffiscope", version)]
struct Cli {
    /// Scenario files to run.
    #[arg(required_unless_present = "corpus", conflicts_with = "corpus")]
    scenarios: Vec<PathBuf>,

    /// Run every `.scn` file under this directory and check `expect` lines.
    #[arg(long, value_name = "DIR")]
    corpus: Option<PathBuf>,

    #[arg(long, value_enum, default_value = "tb")]
    model: Model,

    /// Run both models with the same seed and compare them.
    #[arg(long)]
    diff: bool,

    #[arg(long)]
    strict_provenance: bool,

    /// Foreign allocations start zeroed; implies --no-permissive-loads.
    #[arg(long)]
    zero_init_foreign: bool,

    /// Foreign loads of uninitialized memory fail instead of yielding undef.
    #[arg(long)]
    no_permissive_loads: bool,

    #[arg(long)]
    no_symbolic_alignment: bool,

    /// Do not retag boxes as mutable references.
    #[arg(long)]
    no_unique_as_mutable: bool,

    /// Leave the host call-site frame out of foreign error fingerprints.
    #[arg(long)]
    exclusive_boundary: bool,

    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Step budget before the run is reported as a timeout.
    #[arg(long, default_value_t = DEFAULT_STEP_BUDGET)]
    steps: u64,

    #[arg(long, value_enum, default_value = "text")]
    format: Format,

    /// Write the structured (JSON) report here.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

impl Cli {
    fn config(&self) -> MachineConfig {
        MachineConfig {
            strict_provenance: self.strict_provenance,
            zero_init_foreign: self.zero_init_foreign,
            permissive_foreign_loads: !self.no_permissive_loads,
            unique_as_mutable: !self.no_unique_as_mutable,
            symbolic_alignment: !self.no_symbolic_alignment,
            seed: self.seed,
            step_budget: self.steps,
            ..MachineConfig::default()
        }
    }

    fn selection(&self) -> ModelSelection {
        match (self.diff, self.model) {
            (true, _) | (_, Model::Both) => ModelSelection::Both,
            (_, Model::Tb) => ModelSelection::Tb,
            (_, Model::Sb) => ModelSelection::Sb,
        }
    }
}

struct Report {
    text: String,
    json: serde_json::Value,
    exit: i32,
}

fn run_files(cli: &Cli, opts: DedupOptions) -> anyhow::Result<Report> {
    let config = cli.config();
    let selection = cli.selection();
    let mut texts = Vec::new();
    let mut jsons = Vec::new();
    let mut codes = Vec::new();
    for path in &cli.scenarios {
        let program = load_scenario(path)?;
        let name = path.display().to_string();
        match selection {
            ModelSelection::Both => {
                let d = run_differential(&name, &program, &config, opts);
                texts.push(render_diff(&d));
                codes.push(d.exit_code());
                jsons.push(serde_json::to_value(&d)?);
            }
            single => {
                let r = run_single(&name, &program, &config.with_model(single.models()[0]), opts);
                texts.push(render_run(&r));
                codes.push(r.exit_code);
                jsons.push(serde_json::to_value(&r)?);
            }
        }
    }
    let json = match <[_; 1]>::try_from(jsons) {
        Ok([one]) => one,
        Err(many) => serde_json::Value::Array(many),
    };
    Ok(Report { text: texts.join("\n"), json, exit: combine_exit_codes(codes) })
}

fn run_dir(cli: &Cli, dir: &Path, opts: DedupOptions) -> anyhow::Result<Report> {
    let summary = run_corpus(dir, &cli.config(), cli.selection(), opts)?;
    Ok(Report { text: render_corpus(&summary), json: serde_json::to_value(&summary)?, exit: summary.exit_code() })
}

fn emit(cli: &Cli, report: &Report) -> anyhow::Result<()> {
    let pretty = serde_json::to_string_pretty(&report.json)?;
    if let Some(out) = &cli.out {
        fs::write(out, format!("{pretty}\n")).with_context(|| format!("writing {}", out.display()))?;
    }
    match cli.format {
        Format::Text => print!("{}", report.text),
        Format::Json if cli.out.is_none() => println!("{pretty}"),
        Format::Json => {}
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let opts = DedupOptions { exclusive_boundary: cli.exclusive_boundary };
    let report = match &cli.corpus {
        Some(dir) => run_dir(&cli, dir, opts),
        None => run_files(&cli, opts),
    };
    match report.and_then(|r| emit(&cli, &r).map(|()| r.exit)) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}
