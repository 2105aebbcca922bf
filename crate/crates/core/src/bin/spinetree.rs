//! Thin command-line front end over the library: simulate, dump, evaluate,
//! query oracles, and run verification suites. All heavy lifting lives in
//! the library; this binary only parses flags and moves bytes.

use std::error::Error;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use spinetree::config::FileConfig;
use spinetree::dump::{dump_tree, parse_tree};
use spinetree::eigen::{build_matrix, principal_eigenpair};
use spinetree::harness::{run_suite, suite_names, ExperimentReport, SuiteParams};
use spinetree::martingale::{
    eval_z, eval_zeta, eval_zeta_tilde, gibbs_boltzmann_weights, spine_decomposition,
};
use spinetree::model::MotionLaw;
use spinetree::oracle::{expected_population, many_to_one_type_oracle};
use spinetree::simulate::{simulate, Measure};

#[derive(Parser)]
#[command(
    name = "spinetree",
    about = "Branching Markov processes with distinguished spines: samplers, \
             martingale evaluators, and Monte Carlo verification suites."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate replicates; write tree dumps to a directory or a summary CSV.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_parser = ["p", "ptilde", "qtilde"])]
        measure: String,
        /// Override the config's horizon.
        #[arg(long)]
        tmax: Option<f64>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        replicates: u64,
        /// Directory for per-replicate dumps, or a `.csv` path for a summary.
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate a single replicate and print its dump.
    DumpTree {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_parser = ["p", "ptilde", "qtilde"])]
        measure: String,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 0)]
        replicate: u64,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate the martingales and weights on a dumped tree.
    Eval {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        tree: PathBuf,
        #[arg(long)]
        t: f64,
    },
    /// Print deterministic oracle values for a config.
    Oracle {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        t: f64,
    },
    /// Run a named verification suite and write report.csv / report.json.
    Verify {
        #[arg(long, default_value = "all")]
        suite: String,
        /// Optional config whose [verify] section supplies defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Override the suite's pinned replicate counts.
        #[arg(long)]
        replicates: Option<u64>,
        #[arg(long, default_value_t = 4.0)]
        threshold: f64,
        /// Output directory for report.csv and report.json.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-render a stored report.json as CSV or pretty JSON.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value = "csv", value_parser = ["csv", "json"])]
        format: String,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn measure_for(config: &FileConfig, tag: &str) -> Result<Measure, Box<dyn Error>> {
    Ok(match tag {
        "p" => Measure::P,
        "ptilde" => Measure::PTilde,
        "qtilde" => {
            let model = config.build_model()?;
            Measure::QTilde(config.build_martingale(&model)?)
        }
        other => return Err(format!("unknown measure `{other}`").into()),
    })
}

fn write_or_print(out: Option<&Path>, text: &str) -> Result<(), Box<dyn Error>> {
    match out {
        Some(path) => std::fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn run() -> Result<bool, Box<dyn Error>> {
    let cli = Cli::parse();
    match cli.command {
        Command::Simulate {
            config,
            measure,
            tmax,
            seed,
            replicates,
            out,
        } => {
            let file = FileConfig::load(&config)?;
            let measure = measure_for(&file, &measure)?;
            let mut sim = file.sim_config(measure, seed)?;
            if let Some(t) = tmax {
                sim.t_max = t;
            }
            let summary_mode = out.extension().map(|e| e == "csv").unwrap_or(false);
            let mut summary = String::from("replicate,nodes,leaves_at_horizon,spine_depth\n");
            if !summary_mode {
                std::fs::create_dir_all(&out)?;
            }
            for rep in 0..replicates {
                let sim = sim.clone().with_replicate(rep);
                let (tree, spine) = simulate(&sim)?;
                if summary_mode {
                    let leaves = tree
                        .iter()
                        .filter(|(_, m)| m.offspring().is_none())
                        .count();
                    let depth = spine
                        .as_ref()
                        .map(|s| s.tip().depth().to_string())
                        .unwrap_or_else(|| "-".into());
                    summary.push_str(&format!("{rep},{},{leaves},{depth}\n", tree.len()));
                } else {
                    let text = dump_tree(&tree, spine.as_ref());
                    std::fs::write(out.join(format!("tree_{rep:06}.txt")), text)?;
                }
            }
            if summary_mode {
                std::fs::write(&out, summary)?;
            }
            Ok(true)
        }
        Command::DumpTree {
            config,
            measure,
            seed,
            replicate,
            out,
        } => {
            let file = FileConfig::load(&config)?;
            let measure = measure_for(&file, &measure)?;
            let sim = file.sim_config(measure, seed)?.with_replicate(replicate);
            let (tree, spine) = simulate(&sim)?;
            write_or_print(out.as_deref(), &dump_tree(&tree, spine.as_ref()))?;
            Ok(true)
        }
        Command::Eval { config, tree, t } => {
            let file = FileConfig::load(&config)?;
            let model = file.build_model()?;
            let spec = file.build_martingale(&model)?;
            let text = std::fs::read_to_string(&tree)?;
            let (tree, spine) = parse_tree(&text)?;
            let z = eval_z(&spec, &model, &tree, t)?;
            println!("Z {}", z.value());
            if let Some(spine) = &spine {
                let node = spine.node_at(&tree, t)?;
                let path = tree.extended_path(&node, t)?;
                println!("zeta {}", eval_zeta(&spec, &model, &path, t)?);
                println!(
                    "zeta_tilde {}",
                    eval_zeta_tilde(&spec, &model, &tree, spine, t)?
                );
                println!(
                    "spine_decomposition {}",
                    spine_decomposition(&spec, &model, &tree, spine, t)?
                );
            }
            println!("label,weight");
            for (label, w) in gibbs_boltzmann_weights(&spec, &model, &tree, t)? {
                println!("{label},{w}");
            }
            Ok(true)
        }
        Command::Oracle { config, t } => {
            let file = FileConfig::load(&config)?;
            let model = file.build_model()?;
            match &model.motion {
                MotionLaw::FiniteType { .. } => {
                    let spec = file.build_martingale(&model)?;
                    let m = build_matrix(&model, spec.lambda)?;
                    let (e, v) = principal_eigenpair(&m)?;
                    println!("eigenvalue {e}");
                    println!(
                        "eigenvector {}",
                        v.iter()
                            .map(|x| x.to_string())
                            .collect::<Vec<_>>()
                            .join(" ")
                    );
                    let n = model.n_types();
                    let ones = vec![1.0; n];
                    for y0 in 0..n {
                        println!(
                            "expected_population_from_type_{} {}",
                            y0 + 1,
                            many_to_one_type_oracle(&model, &ones, y0, t)?
                        );
                    }
                }
                _ => {
                    let start = file.start_point();
                    let r = model.rate.at(start);
                    let m = model.offspring.mean_at(start);
                    println!("expected_population {}", expected_population(r, m, t));
                }
            }
            Ok(true)
        }
        Command::Verify {
            suite,
            config,
            seed,
            replicates,
            threshold,
            out,
        } => {
            let mut params = SuiteParams {
                seed,
                threshold,
                replicates_override: replicates,
            };
            if let Some(path) = config {
                let file = FileConfig::load(&path)?;
                if let Some(verify) = &file.verify {
                    if let Some(th) = verify.threshold {
                        params.threshold = th.0;
                    }
                    if params.replicates_override.is_none() {
                        params.replicates_override = verify.replicates;
                    }
                }
            }
            if !suite_names().contains(&suite.as_str()) {
                return Err(format!(
                    "unknown suite `{suite}`; available: {}",
                    suite_names().join(", ")
                )
                .into());
            }
            let report = run_suite(&suite, &params)?;
            for row in &report.rows {
                println!("{}", row.display_line());
            }
            println!(
                "suite {}: {} rows, {}",
                report.suite,
                report.rows.len(),
                if report.passed() { "all pass" } else { "FAILURES" }
            );
            if let Some(dir) = out {
                std::fs::create_dir_all(&dir)?;
                std::fs::write(dir.join("report.csv"), report.to_csv())?;
                std::fs::write(dir.join("report.json"), report.to_json())?;
            }
            Ok(report.passed())
        }
        Command::Report { input, format, out } => {
            let text = std::fs::read_to_string(&input)?;
            let report: ExperimentReport = serde_json::from_str(&text)?;
            let rendered = match format.as_str() {
                "csv" => report.to_csv(),
                _ => report.to_json(),
            };
            write_or_print(out.as_deref(), &rendered)?;
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(2)
        }
    }
}
