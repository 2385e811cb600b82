use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use alns_mip::bnb::{solve_mip, MipStatus, SolveLimits};
use alns_mip::engine::{self, SearchStatus};
use alns_mip::generate::{generate, Family, GraphModel, InstanceSpec};
use alns_mip::metrics::{arm_distribution, write_distribution_csv, write_trace_csv};
use alns_mip::model::{MipInstance, SolutionState};
use alns_mip::mps::{parse_mps, parse_solution_file, write_mps, write_solution_file};

mod bench;
mod config;

use config::RunConfig;

#[derive(Parser)]
#[command(name = "alns-mip", version, about = "Adaptive large neighborhood search for mixed-integer programs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Improve a solution of one instance with the bandit-driven search.
    Solve {
        instance: PathBuf,
        /// TOML run configuration.
        #[arg(long, conflicts_with = "preset")]
        config: Option<PathBuf>,
        /// Named preset instead of a configuration file.
        #[arg(long)]
        preset: Option<String>,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the configured seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the search on every .mps file of a directory and summarize gaps.
    Bench {
        dir: PathBuf,
        #[arg(long, conflicts_with = "preset")]
        config: Option<PathBuf>,
        #[arg(long)]
        preset: Option<String>,
        /// Summary CSV; per-run arm shares go next to it with an `_arms` suffix.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Write generated instances as family_seed_k.mps files.
    Gen {
        family: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        count: usize,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        params: GenParams,
    },
    /// Solve one instance with the built-in branch-and-bound. Speaks the
    /// external solver protocol, so the search can call it as a backend.
    Mip {
        input: PathBuf,
        output: PathBuf,
        #[arg(long)]
        time_limit: Option<f64>,
        #[arg(long)]
        nodes: Option<u64>,
        /// Solution file used as the starting incumbent.
        #[arg(long)]
        warm_start: Option<PathBuf>,
    },
    /// Print a preset configuration, or list the preset names.
    Preset { name: Option<String> },
}

#[derive(Clone, Copy, ValueEnum)]
enum GraphKind {
    Er,
    Ba,
}

#[derive(clap::Args)]
struct GenParams {
    /// Items (mk).
    #[arg(long)]
    items: Option<usize>,
    /// Knapsacks (mk).
    #[arg(long)]
    knapsacks: Option<usize>,
    /// Elements to cover (sc).
    #[arg(long)]
    rows: Option<usize>,
    /// Candidate sets (sc).
    #[arg(long)]
    cols: Option<usize>,
    /// Membership probability (sc).
    #[arg(long)]
    density: Option<f64>,
    /// Graph nodes (mis, mvc).
    #[arg(long)]
    nodes: Option<usize>,
    #[arg(long, value_enum)]
    graph: Option<GraphKind>,
    /// Edge probability for Erdős–Rényi graphs.
    #[arg(long)]
    p: Option<f64>,
    /// Edges per new node for Barabási–Albert graphs.
    #[arg(long)]
    affinity: Option<usize>,
}

impl GenParams {
    fn spec(&self, family: Family) -> Result<InstanceSpec> {
        let base = InstanceSpec::default_for(family);
        let spec = match base {
            InstanceSpec::MultipleKnapsack { items, knapsacks } => InstanceSpec::MultipleKnapsack {
                items: self.items.unwrap_or(items),
                knapsacks: self.knapsacks.unwrap_or(knapsacks),
            },
            InstanceSpec::SetCover { rows, cols, density } => InstanceSpec::SetCover {
                rows: self.rows.unwrap_or(rows),
                cols: self.cols.unwrap_or(cols),
                density: self.density.unwrap_or(density),
            },
            InstanceSpec::MaxIndependentSet { nodes, model } | InstanceSpec::MinVertexCover { nodes, model } => {
                let model = self.graph_model(model)?;
                let nodes = self.nodes.unwrap_or(nodes);
                if family == Family::MaxIndependentSet {
                    InstanceSpec::MaxIndependentSet { nodes, model }
                } else {
                    InstanceSpec::MinVertexCover { nodes, model }
                }
            }
        };
        let graph_flags = self.nodes.is_some() || self.graph.is_some() || self.p.is_some() || self.affinity.is_some();
        let mk_flags = self.items.is_some() || self.knapsacks.is_some();
        let sc_flags = self.rows.is_some() || self.cols.is_some() || self.density.is_some();
        let stray = match family {
            Family::MultipleKnapsack => graph_flags || sc_flags,
            Family::SetCover => graph_flags || mk_flags,
            Family::MaxIndependentSet | Family::MinVertexCover => mk_flags || sc_flags,
        };
        if stray {
            bail!("parameter not used by family {family}");
        }
        Ok(spec)
    }

    fn graph_model(&self, default: GraphModel) -> Result<GraphModel> {
        let kind = self.graph.unwrap_or(match default {
            GraphModel::ErdosRenyi { .. } => GraphKind::Er,
            GraphModel::BarabasiAlbert { .. } => GraphKind::Ba,
        });
        Ok(match kind {
            GraphKind::Er => {
                if self.affinity.is_some() {
                    bail!("--affinity applies to --graph ba");
                }
                let default_p = match default {
                    GraphModel::ErdosRenyi { edge_probability } => edge_probability,
                    GraphModel::BarabasiAlbert { .. } => 0.1,
                };
                GraphModel::ErdosRenyi {
                    edge_probability: self.p.unwrap_or(default_p),
                }
            }
            GraphKind::Ba => {
                if self.p.is_some() {
                    bail!("--p applies to --graph er");
                }
                let default_affinity = match default {
                    GraphModel::BarabasiAlbert { affinity } => affinity,
                    GraphModel::ErdosRenyi { .. } => 2,
                };
                GraphModel::BarabasiAlbert {
                    affinity: self.affinity.unwrap_or(default_affinity),
                }
            }
        })
    }
}

pub(crate) fn load_config(path: Option<&Path>, preset: Option<&str>) -> Result<RunConfig> {
    let mut cfg = match (path, preset) {
        (Some(p), _) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
            RunConfig::from_toml(&text).with_context(|| format!("parsing config {}", p.display()))?
        }
        (None, Some(name)) => config::preset(name)?,
        (None, None) => bail!("either --config or --preset is required"),
    };
    cfg.apply_env();
    Ok(cfg)
}

pub(crate) fn read_instance(path: &Path) -> Result<MipInstance> {
    let bytes = fs::read(path).with_context(|| format!("reading instance {}", path.display()))?;
    parse_mps(&bytes).with_context(|| format!("parsing {}", path.display()))
}

pub(crate) fn status_word(status: SearchStatus) -> &'static str {
    match status {
        SearchStatus::Completed => "completed",
        SearchStatus::SolvedUpfront => "solved_upfront",
        SearchStatus::NoInitialFeasible => "no_initial_feasible",
        SearchStatus::Aborted => "aborted",
    }
}

fn cmd_solve(instance: &Path, cfg: &RunConfig, out: &Path) -> Result<ExitCode> {
    let inst = read_instance(instance)?;
    let search = cfg.to_search()?;
    let result = engine::solve(&inst, &search)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let sol_path = out.join("solution.sol");
    let sol = match &result.best {
        Some(best) => write_solution_file(&inst, best.values(), Some(status_word(result.status))),
        None => format!("# status {}\n", status_word(result.status)),
    };
    fs::write(&sol_path, sol).with_context(|| format!("writing {}", sol_path.display()))?;
    write_trace_csv(&result.trace, fs::File::create(out.join("trace.csv"))?)?;
    let dist = arm_distribution(&result.trace, false);
    write_distribution_csv(&dist, fs::File::create(out.join("arms.csv"))?)?;
    let best = result
        .best
        .as_ref()
        .map(|b| b.objective().to_string())
        .unwrap_or_else(|| "none".into());
    println!(
        "status={} best={} iterations={} time_s={:.3}",
        status_word(result.status),
        best,
        result.trace.events.len(),
        result.end_time
    );
    if let Some(m) = &result.message {
        eprintln!("{m}");
    }
    Ok(match result.status {
        SearchStatus::Completed | SearchStatus::SolvedUpfront => ExitCode::SUCCESS,
        SearchStatus::NoInitialFeasible => ExitCode::from(2),
        SearchStatus::Aborted => ExitCode::FAILURE,
    })
}

fn cmd_gen(family: &str, params: &GenParams, seed: u64, count: usize, out: &Path) -> Result<ExitCode> {
    let family: Family = family.parse()?;
    let spec = params.spec(family)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    for k in 0..count {
        let inst_seed = seed.wrapping_mul(1_000_003).wrapping_add(k as u64);
        let inst = generate(&spec, inst_seed)?;
        let path = out.join(format!("{family}_{seed}_{k}.mps"));
        fs::write(&path, write_mps(&inst)).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_mip(
    input: &Path,
    output: &Path,
    time_limit: Option<f64>,
    nodes: Option<u64>,
    warm: Option<&Path>,
) -> Result<ExitCode> {
    let inst = read_instance(input)?;
    let mut limits = SolveLimits {
        node_limit: nodes,
        ..SolveLimits::default()
    };
    if let Some(s) = time_limit {
        if !(s > 0.0) || !s.is_finite() {
            bail!("--time-limit must be positive, got {s}");
        }
        limits.time_limit = Some(Duration::from_secs_f64(s));
    }
    if let Some(p) = warm {
        let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        let sol = parse_solution_file(&text).with_context(|| format!("parsing {}", p.display()))?;
        let values = sol.to_dense(&inst);
        if inst.is_feasible(&values) {
            limits.incumbent_warm_start = Some(SolutionState::new(&inst, values)?);
        } else {
            log::warn!("warm start {} is infeasible; ignored", p.display());
        }
    }
    let result = solve_mip(&inst, &limits);
    let word = match result.status {
        MipStatus::Optimal => "optimal",
        MipStatus::Feasible | MipStatus::LimitReachedWithIncumbent => "feasible",
        MipStatus::Infeasible => "infeasible",
        MipStatus::LimitReachedNoIncumbent => "unknown",
        MipStatus::Unbounded => "unbounded",
    };
    let text = match &result.best {
        Some(best) => write_solution_file(&inst, best.values(), Some(word)),
        None => format!("# status {word}\n"),
    };
    fs::write(output, text).with_context(|| format!("writing {}", output.display()))?;
    Ok(ExitCode::SUCCESS)
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Solve {
            instance,
            config,
            preset,
            out,
            seed,
        } => {
            let mut cfg = load_config(config.as_deref(), preset.as_deref())?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            cmd_solve(&instance, &cfg, &out)
        }
        Command::Bench {
            dir,
            config,
            preset,
            out,
            jobs,
        } => {
            let cfg = load_config(config.as_deref(), preset.as_deref())?;
            bench::run(&dir, &cfg, &out, jobs)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Gen {
            family,
            seed,
            count,
            out,
            params,
        } => cmd_gen(&family, &params, seed, count, &out),
        Command::Mip {
            input,
            output,
            time_limit,
            nodes,
            warm_start,
        } => cmd_mip(&input, &output, time_limit, nodes, warm_start.as_deref()),
        Command::Preset { name: None } => {
            let mut out = std::io::stdout().lock();
            for n in config::preset_names() {
                if writeln!(out, "{n}").is_err() {
                    break;
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Preset { name: Some(n) } => {
            print!("{}", config::preset(&n)?.to_toml());
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::FAILURE } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
