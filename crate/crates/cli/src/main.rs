use std::path::PathBuf;
use std::process::ExitCode;

use autores_cli::{config::ConfigError, load, prepare, run, write_outcome, BUNDLED, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_OK};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "autores", version, about = "Autoresonance scenario runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one or more scenarios (files or bundled names), one worker each.
    Run {
        #[arg(required = true)]
        configs: Vec<String>,
        /// Output root; each scenario writes to <DIR>/<name>/.
        #[arg(long, default_value = "runs")]
        out: PathBuf,
        /// key=value, applied after parsing (repeatable).
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Check a scenario without running it.
    Validate {
        #[arg(required = true)]
        configs: Vec<String>,
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// List the bundled scenarios.
    List {
        /// Print the full TOML of each.
        #[arg(long)]
        verbose: bool,
    },
}

fn run_one(spec: &str, out: &std::path::Path, overrides: &[String]) -> i32 {
    let result = load(spec).and_then(|src| prepare(&src, overrides)).and_then(|(s, plan)| {
        let outcome = run::execute(&s, &plan)?;
        let dir = write_outcome(out, &s.name, &outcome).map_err(|e| ConfigError(format!("{}: cannot write output: {e}", s.name)))?;
        Ok((s.name, dir, outcome.aborted, outcome.summary))
    });
    match result {
        Ok((name, dir, aborted, summary)) => {
            if aborted {
                let msg = summary["failure"]["message"].as_str().unwrap_or("numerical failure");
                eprintln!("{name}: aborted: {msg} (partial results in {})", dir.display());
                EXIT_NUMERICAL
            } else {
                println!("{name}: ok -> {}", dir.display());
                EXIT_OK
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_CONFIG
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Run { configs, out, overrides } => {
            let codes: Vec<i32> = std::thread::scope(|scope| {
                let handles: Vec<_> = configs.iter().map(|c| scope.spawn(|| run_one(c, &out, &overrides))).collect();
                handles.into_iter().map(|h| h.join().unwrap_or(EXIT_NUMERICAL)).collect()
            });
            codes.into_iter().max().unwrap_or(EXIT_OK)
        }
        Command::Validate { configs, overrides } => {
            let mut code = EXIT_OK;
            for c in &configs {
                match load(c).and_then(|src| prepare(&src, &overrides)) {
                    Ok((s, _)) => println!("{c}: ok ({})", s.name),
                    Err(e) => {
                        eprintln!("error: {e}");
                        code = EXIT_CONFIG;
                    }
                }
            }
            code
        }
        Command::List { verbose } => {
            for (name, text) in BUNDLED {
                let description = autores_cli::config::parse(text, name).map(|s| s.description).unwrap_or_default();
                println!("{name:<30} {description}");
                if verbose {
                    println!("{text}");
                }
            }
            EXIT_OK
        }
    };
    ExitCode::from(code as u8)
}
