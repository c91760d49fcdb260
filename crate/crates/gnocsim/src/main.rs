//! Thin command-line front end over the simulator library.
//!
//! Exit codes: 0 success, 2 config error, 3 infeasible capacity, 4 runtime
//! error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use gnocsim::error::{Result, SimError};
use gnocsim::experiment::{
    compare_routing, load_config, mapping_from_report, routing_csv, run_experiment_with,
    summary_csv, sweep, sweep_csv, tile_stats_csv, MappingReport, SweepParam,
};
use gnocsim::graph::{induced_subgraph, load_edge_list, partition, EdgeListOptions};
use gnocsim::tiling::{tile_adjacency, zero_stats, ZeroStats};

#[derive(Parser)]
#[command(name = "gnocsim", version, about = "ReRAM + 3D-NoC GNN training simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write report.json + summary.csv.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Override the config's root seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Replay a saved mapping.json instead of annealing.
        #[arg(long)]
        mapping_in: Option<PathBuf>,
    },
    /// Run one experiment per value of a parameter and write sweep.csv.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// beta | epe_crossbar_size | routing_mode
        #[arg(long)]
        param: String,
        #[arg(long, value_delimiter = ',')]
        values: Vec<String>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Zero-storage stats of a graph's adjacency across crossbar sizes.
    TileStats {
        /// Edge-list file.
        #[arg(long)]
        graph: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "8,128")]
        sizes: Vec<usize>,
        /// Tile per-partition subgraphs and sum, instead of the whole graph.
        #[arg(long)]
        num_parts: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        self_loops: bool,
        /// Write CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Per-stage unicast vs multicast communication on the same mapping.
    CompareRouting {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Write CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, contents)?;
    Ok(())
}

fn emit(out: Option<&Path>, contents: &str) -> Result<()> {
    match out {
        Some(path) => write_file(path, contents),
        None => {
            print!("{contents}");
            Ok(())
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Simulate {
            config,
            seed,
            out,
            mapping_in,
        } => {
            let mut cfg = load_config(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let mapping = match &mapping_in {
                Some(path) => {
                    let text = std::fs::read_to_string(path).map_err(|e| {
                        SimError::config(format!("cannot read {}: {e}", path.display()))
                    })?;
                    let report: MappingReport = serde_json::from_str(&text).map_err(|e| {
                        SimError::config(format!("{}: {e}", path.display()))
                    })?;
                    Some(mapping_from_report(&report))
                }
                None => None,
            };
            let report = run_experiment_with(&cfg, mapping.as_ref())?;
            let json = serde_json::to_string_pretty(&report)
                .map_err(|e| SimError::invalid(e.to_string()))?;
            write_file(&out.join("report.json"), &json)?;
            write_file(&out.join("summary.csv"), &summary_csv(&report)?)?;
            let mapping_json = serde_json::to_string_pretty(&report.mapping)
                .map_err(|e| SimError::invalid(e.to_string()))?;
            write_file(&out.join("mapping.json"), &mapping_json)?;
            println!(
                "makespan {:.6e} s | energy {:.6e} J | EDP {:.6e} | bottleneck {} ({})",
                report.makespan_s,
                report.energy.total_j,
                report.edp,
                report.pipeline.bottleneck_stage,
                if report.pipeline.comm_bound {
                    "communication"
                } else {
                    "compute"
                }
            );
            println!("wrote {}", out.join("report.json").display());
            Ok(())
        }
        Command::Sweep {
            config,
            param,
            values,
            out,
            seed,
        } => {
            let mut cfg = load_config(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if values.is_empty() {
                return Err(SimError::config("sweep needs at least one value"));
            }
            let param: SweepParam = param.parse()?;
            let rows = sweep(&cfg, param, &values);
            write_file(&out.join("sweep.csv"), &sweep_csv(&rows)?)?;
            for row in &rows {
                if let Some(rep) = &row.report {
                    let json = serde_json::to_string_pretty(rep)
                        .map_err(|e| SimError::invalid(e.to_string()))?;
                    write_file(&out.join(format!("report_{param}_{}.json", row.value)), &json)?;
                }
                println!("{param}={}: {}", row.value, row.status);
            }
            println!("wrote {}", out.join("sweep.csv").display());
            Ok(())
        }
        Command::TileStats {
            graph,
            sizes,
            num_parts,
            seed,
            self_loops,
            out,
        } => {
            if sizes.is_empty() {
                return Err(SimError::config("need at least one tile size"));
            }
            let opts = EdgeListOptions {
                self_loops,
                feature_dim: 1,
            };
            let (g, _meta) = load_edge_list(&graph, &opts)?;
            let dataset = graph
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "graph".to_string());

            let mut stats: Vec<ZeroStats> = Vec::new();
            for &m in &sizes {
                let s = match num_parts {
                    None => zero_stats(&tile_adjacency(&g, m, self_loops)?),
                    Some(k) => {
                        // Sum over the partition's subgraphs.
                        let ps = partition(&g, k, seed)?;
                        let mut acc = ZeroStats {
                            m,
                            nonempty_tiles: 0,
                            stored_zeros: 0,
                            nnz: 0,
                        };
                        for part in ps.parts() {
                            let sub = induced_subgraph(&g, part)?;
                            let zs = zero_stats(&tile_adjacency(&sub, m, self_loops)?);
                            acc.nonempty_tiles += zs.nonempty_tiles;
                            acc.stored_zeros += zs.stored_zeros;
                            acc.nnz += zs.nnz;
                        }
                        acc
                    }
                };
                stats.push(s);
            }
            emit(out.as_deref(), &tile_stats_csv(&dataset, &stats)?)
        }
        Command::CompareRouting { config, seed, out } => {
            let mut cfg = load_config(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let rows = compare_routing(&cfg)?;
            emit(out.as_deref(), &routing_csv(&rows)?)
        }
    }
}
