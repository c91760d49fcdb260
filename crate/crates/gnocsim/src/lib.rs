//! Deterministic desk-scale simulator of a heterogeneous ReRAM + 3D-NoC
//! manycore architecture for pipelined GNN training.
//!
//! The model stack, bottom to top:
//!
//! - [`graph`]: load/generate graphs, partition them, and merge parts back
//!   into training batches (`NumInput = ceil(NumPart / beta)`).
//! - [`tiling`]: block each batch's adjacency into M x M crossbar tiles,
//!   discard all-zero blocks, and account for the zeros still stored.
//! - [`workload`]: the 4L-stage forward/backward pipeline, per-stage MAC
//!   and traffic volumes, and the synchronous-slot makespan formula.
//! - [`hw`]: deterministic latency/energy model of the V-PE (128x128) and
//!   E-PE (8x8) ReRAM tiles.
//! - [`noc`]: the 3-tier sandwiched 3D mesh - dimension-order routing, tree
//!   multicast, flow generation, and conflict-free static scheduling.
//! - [`mapping`]: simulated-annealing placement of stages onto tiles.
//! - [`experiment`]: configuration, end-to-end runs, sweeps, and reports.
//!
//! Everything is a pure function of its inputs and seeds; two runs with the
//! same configuration produce byte-identical reports.
//!
//! ```no_run
//! use gnocsim::experiment::{run_experiment, ExperimentConfig};
//!
//! let cfg = ExperimentConfig::small_demo();
//! let report = run_experiment(&cfg).unwrap();
//! println!("makespan {:.3} ms", report.makespan_s * 1e3);
//! ```

pub mod error;
pub mod experiment;
pub mod graph;
pub mod hw;
pub mod mapping;
pub mod noc;
pub mod seeds;
pub mod tiling;
pub mod workload;

pub use error::{Result, SimError};
