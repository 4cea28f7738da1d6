use std::path::PathBuf;
use std::process::ExitCode;

use carnot_sf::experiments::{load_spec, ExtremalParams};
use carnot_sf::parallel::configure_threads;
use carnot_sf::report::Report;
use carnot_sf::{io, run_experiment, run_suite, Experiment, ExperimentSpec, GroupRef, NormRef, SuiteParams};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "carnot-sf", version, about = "Extremals, asymptotics and distance oracles on step-2 sub-Finsler Carnot groups")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment described by a JSON spec.
    Run {
        spec: PathBuf,
        /// Output directory, overriding the one in the spec.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Run the invariant and acceptance suite.
    Suite {
        #[arg(long)]
        quick: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Extra group definition files to validate.
        #[arg(long = "group")]
        groups: Vec<String>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Integrate one normal extremal and write its CSVs.
    Extremal {
        #[arg(long, default_value = "heisenberg:1")]
        group: String,
        #[arg(long, default_value = "euclidean")]
        norm: String,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        a0: Vec<f64>,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        b: Vec<f64>,
        #[arg(short = 'T', long = "horizon")]
        horizon: f64,
        #[arg(long, default_value_t = 1e-3)]
        dt: f64,
        #[arg(long)]
        unit_speed: bool,
        #[arg(short, long, default_value = "out")]
        output: PathBuf,
    },
}

fn print_summary(report: &serde_json::Value, passed: bool) {
    if let Some(checks) = report.pointer("/result/checks").and_then(|c| c.as_array()) {
        for c in checks {
            let ok = c["passed"].as_bool().unwrap_or(false);
            println!(
                "{} {}: {}",
                if ok { "PASS" } else { "FAIL" },
                c["id"].as_str().unwrap_or("?"),
                c["title"].as_str().unwrap_or("")
            );
        }
    }
    println!("{}", if passed { "passed" } else { "FAILED" });
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    configure_threads();
    let outcome = match cli.command {
        Command::Run { spec, output } => load_spec(&spec).and_then(|mut s| {
            if output.is_some() {
                s.output = output;
            }
            run_experiment(&s).map(|o| (o.report, o.passed))
        }),
        Command::Suite {
            quick,
            seed,
            groups,
            output,
        } => {
            let params = SuiteParams {
                quick,
                groups: groups.into_iter().map(GroupRef::Name).collect(),
                ..SuiteParams::default()
            };
            let mut spec = ExperimentSpec::new(Experiment::Suite(params.clone()), "heisenberg:1", "euclidean");
            spec.seed = seed;
            spec.output = output.clone();
            run_suite(&params, seed).and_then(|rep| {
                let passed = rep.passed;
                let report = serde_json::to_value(Report::new(&spec, rep.tolerances(), passed, rep))?;
                if let Some(dir) = &output {
                    io::write_json(&dir.join("report.json"), &report)?;
                }
                Ok((report, passed))
            })
        }
        Command::Extremal {
            group,
            norm,
            a0,
            b,
            horizon,
            dt,
            unit_speed,
            output,
        } => {
            let params = ExtremalParams {
                a0,
                b,
                start: None,
                horizon,
                dt,
                tol: 1e-6,
                unit_speed,
            };
            let mut spec = ExperimentSpec::new(Experiment::Extremal(params), &group, &norm);
            spec.norm = NormRef::Name(norm);
            spec.output = Some(output);
            run_experiment(&spec).map(|o| (o.report, o.passed))
        }
    };
    match outcome {
        Ok((report, passed)) => {
            print_summary(&report, passed);
            if passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
