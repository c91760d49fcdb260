//! Experiment configuration, end-to-end orchestration, and reporting.
//!
//! A run executes load -> partition -> batch -> tile -> stage graph ->
//! allocate -> map (SA) -> flows -> communication schedule -> pipeline
//! makespan -> energy, entirely determined by the configuration and its
//! root seed. Reports carry a provenance block (config hash, seed, tool
//! version) so every CSV row can be traced back to the exact run.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Result, SimError};
use crate::graph::{
    edge_cut, generate_synthetic, load_edge_list, make_batches, partition, Batch, EdgeListOptions,
    Graph, SynthKind,
};
use crate::hw::{
    compute_energy, compute_time, logical_units, EnergyParams, TileSpec,
};
use crate::mapping::{
    initial_mapping, mapping_cost, sa_optimize, CostCtx, Mapping, SaParams, StageDemand,
};
use crate::noc::{
    comm_makespan, flow_energy, flow_links, gen_flows, CommReport, LinkParams, RoutingMode,
    Topology3D,
};
use crate::seeds;
use crate::tiling::{epe_requirement, tile_adjacency, zero_stats, TileGrid};
use crate::workload::{
    build_stage_graph, pipeline_makespan, stage_work, GnnConfig, Phase, StageGraph, StageKind,
    StageTime, StageWork,
};

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

/// Where the input graph comes from: exactly one of `path` or `synthetic`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSource {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SynthSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthKindName {
    PowerLaw,
    Grid,
    Random,
}

/// Synthetic-graph block of the config file. Parameters not used by the
/// chosen kind are rejected rather than silently ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub kind: SynthKindName,
    pub num_nodes: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exponent: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub avg_degree: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edge_prob: Option<f64>,
}

impl SynthSpec {
    fn to_kind(&self) -> Result<SynthKind> {
        let reject = |field: &str| {
            Err(SimError::config(format!(
                "synthetic field '{field}' does not apply to kind {:?}",
                self.kind
            )))
        };
        match self.kind {
            SynthKindName::PowerLaw => {
                if self.edge_prob.is_some() {
                    return reject("edge_prob");
                }
                Ok(SynthKind::PowerLaw {
                    exponent: self.exponent.unwrap_or(2.5),
                    avg_degree: self.avg_degree.unwrap_or(4.0),
                })
            }
            SynthKindName::Grid => {
                if self.exponent.is_some() || self.avg_degree.is_some() {
                    return reject("exponent/avg_degree");
                }
                if self.edge_prob.is_some() {
                    return reject("edge_prob");
                }
                Ok(SynthKind::Grid)
            }
            SynthKindName::Random => {
                if self.exponent.is_some() || self.avg_degree.is_some() {
                    return reject("exponent/avg_degree");
                }
                let p = self
                    .edge_prob
                    .ok_or_else(|| SimError::config("random graph needs edge_prob"))?;
                Ok(SynthKind::Random { edge_prob: p })
            }
        }
    }
}

/// Hardware block: one spec per PE kind plus adjacency-storage knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HardwareConfig {
    pub v_pe: TileSpec,
    pub e_pe: TileSpec,
    /// Bits per stored adjacency value (1 = binary adjacency).
    #[serde(default = "default_adj_bits")]
    pub adj_value_bits: u32,
    /// Charge a per-batch E-PE write cost for reloading adjacencies.
    #[serde(default)]
    pub adj_reload: bool,
    #[serde(default = "default_reload_cycles")]
    pub reload_cycles_per_cell: u64,
    /// Folds loss/optimizer cost into the final backward-V stage.
    #[serde(default = "default_unit")]
    pub bv1_cost_multiplier: f64,
    /// Report E-PE demand for all in-flight batches (2L) instead of one.
    #[serde(default)]
    pub inflight_epe_sizing: bool,
}

fn default_adj_bits() -> u32 {
    1
}

fn default_reload_cycles() -> u64 {
    10
}

fn default_unit() -> f64 {
    1.0
}

/// NoC block: mesh dims plus link timing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NocConfig {
    pub mesh_x: usize,
    pub mesh_y: usize,
    pub tiles_per_router: usize,
    #[serde(default)]
    pub link: LinkParams,
    /// Placement-cost weight of vertical hops relative to planar hops.
    #[serde(default = "default_unit")]
    pub vertical_hop_weight: f64,
}

/// Full experiment description. Unknown keys anywhere are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub graph: GraphSource,
    pub gnn: GnnConfig,
    pub num_parts: usize,
    pub beta: usize,
    #[serde(default)]
    pub seed: u64,
    pub hardware: HardwareConfig,
    pub noc: NocConfig,
    #[serde(default)]
    pub energy: EnergyParams,
    #[serde(default)]
    pub routing: RoutingMode,
    #[serde(default)]
    pub sa: SaParams,
    /// Treat the adjacency diagonal as set when tiling (and keep self-loop
    /// lines when loading edge lists).
    #[serde(default)]
    pub self_loops: bool,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        match (&self.graph.path, &self.graph.synthetic) {
            (Some(_), Some(_)) => {
                return Err(SimError::config("graph source: give path OR synthetic, not both"))
            }
            (None, None) => {
                return Err(SimError::config("graph source: give path or synthetic"))
            }
            _ => {}
        }
        if let Some(s) = &self.graph.synthetic {
            s.to_kind()?;
            if s.num_nodes == 0 {
                return Err(SimError::config("synthetic num_nodes must be >= 1"));
            }
        }
        self.gnn.validate()?;
        if self.num_parts == 0 {
            return Err(SimError::config("num_parts must be >= 1"));
        }
        if self.beta == 0 || self.beta > self.num_parts {
            return Err(SimError::config(format!(
                "beta {} out of range 1..={}",
                self.beta, self.num_parts
            )));
        }
        self.hardware.v_pe.validate()?;
        self.hardware.e_pe.validate()?;
        if self.hardware.adj_value_bits == 0 {
            return Err(SimError::config("adj_value_bits must be >= 1"));
        }
        if !self.hardware.bv1_cost_multiplier.is_finite() || self.hardware.bv1_cost_multiplier < 0.0
        {
            return Err(SimError::config("bv1_cost_multiplier must be >= 0"));
        }
        self.topology().validate()?;
        self.noc.link.validate()?;
        if !self.noc.vertical_hop_weight.is_finite() || self.noc.vertical_hop_weight < 0.0 {
            return Err(SimError::config("vertical_hop_weight must be >= 0"));
        }
        self.energy.validate()?;
        self.sa.validate()?;
        Ok(())
    }

    pub fn topology(&self) -> Topology3D {
        Topology3D::sandwich(self.noc.mesh_x, self.noc.mesh_y, self.noc.tiles_per_router)
    }

    /// SHA-256 over the canonical JSON form.
    pub fn hash(&self) -> String {
        let canon = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(canon.as_bytes());
        let mut hex = String::with_capacity(64);
        for b in digest {
            hex.push_str(&format!("{b:02x}"));
        }
        hex
    }

    /// A fast synthetic setup exercising every subsystem: 512-node
    /// power-law graph, 16 parts, beta 4, two neural layers, 4x4 mesh.
    pub fn small_demo() -> Self {
        ExperimentConfig {
            graph: GraphSource {
                path: None,
                synthetic: Some(SynthSpec {
                    kind: SynthKindName::PowerLaw,
                    num_nodes: 512,
                    exponent: Some(2.5),
                    avg_degree: Some(4.0),
                    edge_prob: None,
                }),
            },
            gnn: GnnConfig {
                layer_dims: vec![64, 64, 32],
                value_bits: 16,
                num_epochs: 1,
            },
            num_parts: 16,
            beta: 4,
            seed: 7,
            hardware: HardwareConfig {
                v_pe: TileSpec::v_pe(),
                e_pe: TileSpec::e_pe(),
                adj_value_bits: 1,
                adj_reload: false,
                reload_cycles_per_cell: 10,
                bv1_cost_multiplier: 1.0,
                inflight_epe_sizing: false,
            },
            noc: NocConfig {
                mesh_x: 4,
                mesh_y: 4,
                tiles_per_router: 4,
                link: LinkParams::default(),
                vertical_hop_weight: 1.0,
            },
            energy: EnergyParams::default(),
            routing: RoutingMode::Multicast,
            sa: SaParams {
                iterations_per_temp: 40,
                cooling_rate: 0.9,
                ..SaParams::default()
            },
            self_loops: false,
        }
    }
}

/// Parse and validate a config file.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| SimError::config(format!("cannot read {}: {e}", path.display())))?;
    let cfg: ExperimentConfig = serde_json::from_str(&text)
        .map_err(|e| SimError::config(format!("{}: {e}", path.display())))?;
    cfg.validate()?;
    Ok(cfg)
}

// ---------------------------------------------------------------------------
// Report
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool_version: String,
    pub config_hash: String,
    pub seed: u64,
    /// Unix seconds at report time; excluded from determinism comparisons.
    pub timestamp: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphSummary {
    pub num_nodes: usize,
    pub num_edges: usize,
    pub feature_dim: usize,
    pub connected_components: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionSummary {
    pub num_parts: usize,
    pub beta: usize,
    pub num_inputs: usize,
    pub max_batch_nodes: usize,
    pub min_batch_nodes: usize,
    pub edge_cut: u64,
}

/// Tiling stats of the largest batch (the one that sizes the E-PEs).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TilingSummary {
    pub m: usize,
    pub max_batch_tiles: u64,
    pub nnz: u64,
    pub stored_zeros: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub id: usize,
    pub label: String,
    pub kind: StageKind,
    pub phase: Phase,
    pub layer: usize,
    pub macs: u64,
    pub logical_ops: u64,
    pub output_bits: u64,
    pub tiles: usize,
    pub logical_units: u64,
    pub compute_s: f64,
    pub comm_s: f64,
    pub comm_bound: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineSummary {
    pub slot_s: f64,
    pub num_inputs: usize,
    pub num_stages: usize,
    pub epochs: usize,
    pub bottleneck_stage: String,
    pub comm_bound: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkUtilization {
    pub link: String,
    pub flits: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NocSummary {
    pub mode: RoutingMode,
    /// Slot communication makespan under the configured mode.
    pub comm_slot_s: f64,
    pub comm_slot_cycles: u64,
    pub unicast_slot_s: f64,
    pub multicast_slot_s: f64,
    pub unicast_link_flits: u64,
    pub multicast_link_flits: u64,
    /// Measured unicast penalty, percent: (uni - multi) / multi * 100.
    pub unicast_penalty_pct: f64,
    /// Ten busiest links of the configured-mode schedule.
    pub top_links: Vec<LinkUtilization>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MappedTile {
    pub tile: usize,
    pub router: [usize; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MappedStage {
    pub stage: usize,
    pub label: String,
    pub tiles: Vec<MappedTile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MappingReport {
    pub cost_bit_hops: f64,
    pub initial_cost_bit_hops: f64,
    pub sa_evals: usize,
    pub stages: Vec<MappedStage>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergySummary {
    pub compute_j: f64,
    pub noc_j: f64,
    pub write_j: f64,
    pub total_j: f64,
}

/// Everything one run produces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub provenance: Provenance,
    pub graph: GraphSummary,
    pub partitioning: PartitionSummary,
    pub tiling: TilingSummary,
    /// E-PE tiles needed for the sizing batch (times 2L with
    /// `inflight_epe_sizing`).
    pub epe_requirement: u64,
    pub stages: Vec<StageReport>,
    pub pipeline: PipelineSummary,
    pub noc: NocSummary,
    pub mapping: MappingReport,
    pub energy: EnergySummary,
    pub makespan_s: f64,
    pub edp: f64,
}

fn link_label(topo: &Topology3D, link: (usize, usize)) -> String {
    let (ax, ay, az) = topo.router_coord(link.0);
    let (bx, by, bz) = topo.router_coord(link.1);
    format!("({ax},{ay},{az})->({bx},{by},{bz})")
}

/// Rebuild a [`Mapping`] from a serialized mapping report.
pub fn mapping_from_report(report: &MappingReport) -> Mapping {
    let mut stage_tiles = vec![Vec::new(); report.stages.len()];
    for s in &report.stages {
        stage_tiles[s.stage] = s.tiles.iter().map(|t| t.tile).collect();
    }
    Mapping { stage_tiles }
}

fn mapping_report_stages(mapping: &Mapping, sg: &StageGraph, topo: &Topology3D) -> Vec<MappedStage> {
    sg.stages
        .iter()
        .map(|s| MappedStage {
            stage: s.id,
            label: s.label(),
            tiles: mapping.stage_tiles[s.id]
                .iter()
                .map(|&t| {
                    let (x, y, z) = topo.router_coord(topo.tile_router(t));
                    MappedTile {
                        tile: t,
                        router: [x, y, z],
                    }
                })
                .collect(),
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Orchestration
// ---------------------------------------------------------------------------

/// Intermediate state shared by `run_experiment` and `compare_routing`.
struct Prepared {
    graph: Graph,
    components: usize,
    cut: u64,
    batches: Vec<Batch>,
    grids: Vec<TileGrid>,
    sizing_grid: usize,
    sg: StageGraph,
    works_per_batch: Vec<Vec<StageWork>>,
    max_works: Vec<StageWork>,
    mapping: Mapping,
    sa_evals: usize,
    sa_initial_cost: f64,
    topo: Topology3D,
}

fn stage_profile(
    sg: &StageGraph,
    stage_id: usize,
    cfg: &ExperimentConfig,
    sizing_tiles: u64,
) -> (u64, u64) {
    let stage = &sg.stages[stage_id];
    let v = &cfg.hardware.v_pe;
    match stage.kind {
        StageKind::V => {
            let d_in = cfg.gnn.layer_dims[stage.layer - 1] as u64;
            let d_out = cfg.gnn.layer_dims[stage.layer] as u64;
            let m = v.crossbar_size as u64;
            let groups = d_in.div_ceil(m) * d_out.div_ceil(m);
            let groups = match stage.phase {
                Phase::Forward => groups,
                Phase::Backward => 2 * groups,
            };
            let rep = u64::from(v.weight_bits).div_ceil(u64::from(v.cell_bits));
            (groups, rep)
        }
        StageKind::E => {
            let rep = u64::from(cfg.hardware.adj_value_bits)
                .div_ceil(u64::from(cfg.hardware.e_pe.cell_bits));
            (sizing_tiles.max(1), rep)
        }
    }
}

fn prepare(cfg: &ExperimentConfig, mapping_in: Option<&Mapping>) -> Result<Prepared> {
    cfg.validate().map_err(|e| e.in_phase("config"))?;
    let seed = cfg.seed;
    let d0 = cfg.gnn.layer_dims[0];

    // Load or synthesize the graph.
    let (graph, components) = match (&cfg.graph.path, &cfg.graph.synthetic) {
        (Some(path), None) => {
            let opts = EdgeListOptions {
                self_loops: cfg.self_loops,
                feature_dim: d0,
            };
            let (g, _meta) = load_edge_list(path, &opts).map_err(|e| e.in_phase("load"))?;
            let components = g.connected_components();
            (g, components)
        }
        (None, Some(spec)) => {
            let kind = spec.to_kind().map_err(|e| e.in_phase("load"))?;
            let (g, meta) =
                generate_synthetic(&kind, spec.num_nodes, d0, seeds::sub_seed(seed, "synth"))
                    .map_err(|e| e.in_phase("load"))?;
            (g, meta.connected_components)
        }
        _ => unreachable!("validated"),
    };

    let ps = partition(&graph, cfg.num_parts, seeds::sub_seed(seed, "partition"))
        .map_err(|e| e.in_phase("partition"))?;
    let cut = edge_cut(&graph, &ps);

    let batches = make_batches(&graph, &ps, cfg.beta, seeds::sub_seed(seed, "batch"))
        .map_err(|e| e.in_phase("batch"))?;

    let m_e = cfg.hardware.e_pe.crossbar_size;
    let grids: Vec<TileGrid> = batches
        .iter()
        .map(|b| tile_adjacency(&b.subgraph, m_e, cfg.self_loops))
        .collect::<Result<_>>()
        .map_err(|e| e.in_phase("tile"))?;
    let sizing_grid = grids
        .iter()
        .enumerate()
        .max_by_key(|(_, g)| g.num_tiles())
        .map(|(i, _)| i)
        .expect("at least one batch");

    let sg = build_stage_graph(&cfg.gnn);
    let v_m = cfg.hardware.v_pe.crossbar_size;
    let works_per_batch: Vec<Vec<StageWork>> = batches
        .iter()
        .zip(&grids)
        .map(|(b, grid)| {
            (0..sg.num_stages())
                .map(|s| stage_work(&sg, s, b.subgraph.num_nodes(), &cfg.gnn, grid, v_m))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()
        .map_err(|e| e.in_phase("stage"))?;

    // Componentwise max over batches: the sizing work per stage.
    let max_works: Vec<StageWork> = (0..sg.num_stages())
        .map(|s| {
            let mut acc = works_per_batch[0][s].clone();
            for per_batch in &works_per_batch[1..] {
                let w = &per_batch[s];
                acc.macs = acc.macs.max(w.macs);
                acc.logical_ops = acc.logical_ops.max(w.logical_ops);
                acc.output_bits = acc.output_bits.max(w.output_bits);
                for (k, v) in &w.consumer_bits {
                    let slot = acc.consumer_bits.entry(*k).or_insert(0);
                    *slot = (*slot).max(*v);
                }
            }
            acc
        })
        .collect();

    let sizing_tiles = grids[sizing_grid].num_tiles() as u64;
    let demands: Vec<StageDemand> = sg
        .stages
        .iter()
        .map(|s| {
            let (groups, rep) = stage_profile(&sg, s.id, cfg, sizing_tiles);
            StageDemand {
                kind: s.kind,
                crossbars: groups * rep,
            }
        })
        .collect();

    let topo = cfg.topology();
    let ctx = CostCtx {
        sg: &sg,
        works: &max_works,
        topo: &topo,
        mode: cfg.routing,
        demands: &demands,
        v_spec: &cfg.hardware.v_pe,
        e_spec: &cfg.hardware.e_pe,
        vertical_weight: cfg.noc.vertical_hop_weight,
    };

    let m0 = initial_mapping(&sg, &topo, &demands, &cfg.hardware.v_pe, &cfg.hardware.e_pe)
        .map_err(|e| e.in_phase("allocate"))?;

    let (mapping, sa_evals, sa_initial_cost) = match mapping_in {
        Some(m) => {
            m.validate(&ctx).map_err(|e| e.in_phase("map"))?;
            let cost = mapping_cost(
                m,
                &sg,
                &max_works,
                &topo,
                cfg.routing,
                cfg.noc.vertical_hop_weight,
            )
            .map_err(|e| e.in_phase("map"))?;
            (m.clone(), 0, cost)
        }
        None => {
            let mut params = cfg.sa.clone();
            if params.seed.is_none() {
                params.seed = Some(seeds::sub_seed(seed, "sa"));
            }
            let result = sa_optimize(&m0, &params, &ctx).map_err(|e| e.in_phase("map"))?;
            (result.mapping, result.evals, result.initial_cost)
        }
    };

    Ok(Prepared {
        graph,
        components,
        cut,
        batches,
        grids,
        sizing_grid,
        sg,
        works_per_batch,
        max_works,

        mapping,
        sa_evals,
        sa_initial_cost,
        topo,
    })
}

/// Per-stage communication finish times within one slot schedule.
fn stage_comm_finish(report: &CommReport, num_stages: usize) -> Vec<u64> {
    let mut finish = vec![0u64; num_stages];
    for &(_, stage, end) in &report.flow_finish {
        finish[stage] = finish[stage].max(end);
    }
    finish
}

/// Run the full pipeline and assemble the report.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<SimReport> {
    run_experiment_with(cfg, None)
}

/// Like [`run_experiment`], but replaying a previously saved mapping
/// instead of annealing a new one.
pub fn run_experiment_with(
    cfg: &ExperimentConfig,
    mapping_in: Option<&Mapping>,
) -> Result<SimReport> {
    let p = prepare(cfg, mapping_in)?;
    let lp = &cfg.noc.link;
    let epochs = cfg.gnn.num_epochs;

    // Sibling schedules for both routing modes over the same mapping.
    let flows_multi = gen_flows(&p.sg, &p.max_works, &p.mapping, RoutingMode::Multicast)
        .map_err(|e| e.in_phase("flows"))?;
    let flows_uni = gen_flows(&p.sg, &p.max_works, &p.mapping, RoutingMode::Unicast)
        .map_err(|e| e.in_phase("flows"))?;
    let comm_multi =
        comm_makespan(&p.topo, &flows_multi, lp).map_err(|e| e.in_phase("comm"))?;
    let comm_uni = comm_makespan(&p.topo, &flows_uni, lp).map_err(|e| e.in_phase("comm"))?;
    let active_comm = match cfg.routing {
        RoutingMode::Multicast => &comm_multi,
        RoutingMode::Unicast => &comm_uni,
    };

    let stage_finish = stage_comm_finish(active_comm, p.sg.num_stages());

    // Per-stage compute times from the sizing works.
    let sizing_tiles = p.grids[p.sizing_grid].num_tiles() as u64;
    let e_spec = &cfg.hardware.e_pe;
    let v_spec = &cfg.hardware.v_pe;
    let mut stage_times = Vec::with_capacity(p.sg.num_stages());
    let mut units_per_stage = Vec::with_capacity(p.sg.num_stages());
    for stage in &p.sg.stages {
        let (groups, rep) = stage_profile(&p.sg, stage.id, cfg, sizing_tiles);
        let spec = match stage.kind {
            StageKind::V => v_spec,
            StageKind::E => e_spec,
        };
        let units = logical_units(groups, rep, p.mapping.stage_tiles[stage.id].len(), spec);
        let mut compute_s = compute_time(&p.max_works[stage.id], units, spec);
        if stage.kind == StageKind::E && cfg.hardware.adj_reload {
            let cells = sizing_tiles * (e_spec.crossbar_size * e_spec.crossbar_size) as u64 * rep;
            compute_s += (cells * cfg.hardware.reload_cycles_per_cell) as f64 / e_spec.frequency_hz;
        }
        if stage.kind == StageKind::V
            && stage.phase == Phase::Backward
            && stage.layer == 1
        {
            compute_s *= cfg.hardware.bv1_cost_multiplier;
        }
        let comm_s = stage_finish[stage.id] as f64 / lp.noc_frequency_hz;
        stage_times.push(StageTime { compute_s, comm_s });
        units_per_stage.push(units);
    }

    let num_inputs = p.batches.len();
    let mk = pipeline_makespan(&stage_times, num_inputs, epochs)
        .map_err(|e| e.in_phase("pipeline"))?;

    // Energy: compute + NoC + optional adjacency rewrites, over all batches
    // and epochs.
    let mut compute_j = 0.0;
    let mut noc_j = 0.0;
    let mut write_j = 0.0;
    for (b, works) in p.works_per_batch.iter().enumerate() {
        for stage in &p.sg.stages {
            let spec = match stage.kind {
                StageKind::V => v_spec,
                StageKind::E => e_spec,
            };
            compute_j += compute_energy(&works[stage.id], spec, &cfg.energy);
            if stage.kind == StageKind::E && cfg.hardware.adj_reload {
                let (_, rep) = stage_profile(&p.sg, stage.id, cfg, sizing_tiles);
                let cells = p.grids[b].num_tiles() as u64
                    * (e_spec.crossbar_size * e_spec.crossbar_size) as u64
                    * rep;
                write_j += cells as f64 * cfg.energy.e_write_cell;
            }
        }
        let flows = gen_flows(&p.sg, works, &p.mapping, cfg.routing)
            .map_err(|e| e.in_phase("energy"))?;
        for flow in &flows {
            noc_j += flow_energy(
                &p.topo,
                flow,
                lp,
                cfg.energy.e_router_hop,
                cfg.energy.e_link_hop,
            )
            .map_err(|e| e.in_phase("energy"))?;
        }
    }
    let epochs_f = epochs as f64;
    compute_j *= epochs_f;
    noc_j *= epochs_f;
    write_j *= epochs_f;
    let total_j = compute_j + noc_j + write_j;

    // E-PE requirement for the sizing batch.
    let mut epe = epe_requirement(&p.grids[p.sizing_grid], e_spec, cfg.hardware.adj_value_bits)
        .map_err(|e| e.in_phase("tile"))?;
    if cfg.hardware.inflight_epe_sizing {
        epe *= 2 * p.sg.num_layers() as u64;
    }

    let zs = zero_stats(&p.grids[p.sizing_grid]);
    let mapping_final_cost = mapping_cost(
        &p.mapping,
        &p.sg,
        &p.max_works,
        &p.topo,
        cfg.routing,
        cfg.noc.vertical_hop_weight,
    )
    .map_err(|e| e.in_phase("map"))?;

    let stages: Vec<StageReport> = p
        .sg
        .stages
        .iter()
        .map(|s| {
            let w = &p.max_works[s.id];
            let t = &stage_times[s.id];
            StageReport {
                id: s.id,
                label: s.label(),
                kind: s.kind,
                phase: s.phase,
                layer: s.layer,
                macs: w.macs,
                logical_ops: w.logical_ops,
                output_bits: w.output_bits,
                tiles: p.mapping.stage_tiles[s.id].len(),
                logical_units: units_per_stage[s.id],
                compute_s: t.compute_s,
                comm_s: t.comm_s,
                comm_bound: t.comm_s > t.compute_s,
            }
        })
        .collect();

    let mut top_links: Vec<LinkUtilization> = active_comm
        .link_flits
        .iter()
        .map(|(&l, &f)| (l, f))
        .collect::<Vec<_>>()
        .into_iter()
        .map(|(l, f)| LinkUtilization {
            link: link_label(&p.topo, l),
            flits: f,
        })
        .collect();
    top_links.sort_by(|a, b| b.flits.cmp(&a.flits).then(a.link.cmp(&b.link)));
    top_links.truncate(10);

    let uni = comm_uni.cycles as f64;
    let multi = comm_multi.cycles as f64;
    let penalty = if multi > 0.0 {
        (uni - multi) / multi * 100.0
    } else {
        0.0
    };

    let batch_sizes: Vec<usize> = p.batches.iter().map(|b| b.subgraph.num_nodes()).collect();
    let makespan_s = mk.makespan_s;
    let edp = makespan_s * total_j;

    Ok(SimReport {
        provenance: Provenance {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: cfg.hash(),
            seed: cfg.seed,
            timestamp: unix_timestamp(),
        },
        graph: GraphSummary {
            num_nodes: p.graph.num_nodes(),
            num_edges: p.graph.num_edges(),
            feature_dim: p.graph.feature_dim(),
            connected_components: p.components,
        },
        partitioning: PartitionSummary {
            num_parts: cfg.num_parts,
            beta: cfg.beta,
            num_inputs,
            max_batch_nodes: batch_sizes.iter().copied().max().unwrap_or(0),
            min_batch_nodes: batch_sizes.iter().copied().min().unwrap_or(0),
            edge_cut: p.cut,
        },
        tiling: TilingSummary {
            m: e_spec.crossbar_size,
            max_batch_tiles: zs.nonempty_tiles,
            nnz: zs.nnz,
            stored_zeros: zs.stored_zeros,
        },
        epe_requirement: epe,
        stages,
        pipeline: PipelineSummary {
            slot_s: mk.slot_s,
            num_inputs,
            num_stages: p.sg.num_stages(),
            epochs,
            bottleneck_stage: p.sg.stages[mk.bottleneck_stage].label(),
            comm_bound: mk.comm_bound,
        },
        noc: NocSummary {
            mode: cfg.routing,
            comm_slot_s: active_comm.seconds,
            comm_slot_cycles: active_comm.cycles,
            unicast_slot_s: comm_uni.seconds,
            multicast_slot_s: comm_multi.seconds,
            unicast_link_flits: comm_uni.total_link_flits(),
            multicast_link_flits: comm_multi.total_link_flits(),
            unicast_penalty_pct: penalty,
            top_links,
        },
        mapping: MappingReport {
            cost_bit_hops: mapping_final_cost,
            initial_cost_bit_hops: p.sa_initial_cost,
            sa_evals: p.sa_evals,
            stages: mapping_report_stages(&p.mapping, &p.sg, &p.topo),
        },
        energy: EnergySummary {
            compute_j,
            noc_j,
            write_j,
            total_j,
        },
        makespan_s,
        edp,
    })
}

fn unix_timestamp() -> String {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs().to_string())
        .unwrap_or_else(|_| "0".to_string())
}

// ---------------------------------------------------------------------------
// Routing comparison
// ---------------------------------------------------------------------------

/// One row of the `compare-routing` CSV.
#[derive(Debug, Clone, Serialize)]
pub struct RoutingRow {
    pub slot: usize,
    pub stage: String,
    pub mode: String,
    pub comm_cycles: u64,
    pub bottleneck_link: String,
    pub max_link_flits: u64,
}

/// Schedule one slot's flows under both routing modes on the same mapping
/// and report per-stage and whole-slot communication.
pub fn compare_routing(cfg: &ExperimentConfig) -> Result<Vec<RoutingRow>> {
    let p = prepare(cfg, None)?;
    let lp = &cfg.noc.link;
    let mut rows = Vec::new();

    for mode in [RoutingMode::Unicast, RoutingMode::Multicast] {
        let flows =
            gen_flows(&p.sg, &p.max_works, &p.mapping, mode).map_err(|e| e.in_phase("flows"))?;
        let report = comm_makespan(&p.topo, &flows, lp).map_err(|e| e.in_phase("comm"))?;

        let mut finish = vec![0u64; p.sg.num_stages()];
        for &(_, stage, end) in &report.flow_finish {
            finish[stage] = finish[stage].max(end);
        }
        // Busiest link among each stage's own flows.
        let mut per_stage: Vec<BTreeMap<(usize, usize), u64>> =
            vec![BTreeMap::new(); p.sg.num_stages()];
        for flow in &flows {
            let flits = flow.volume_bits.div_ceil(lp.flit_bits);
            for link in flow_links(&p.topo, flow).map_err(|e| e.in_phase("comm"))? {
                *per_stage[flow.stage].entry(link).or_insert(0) += flits;
            }
        }
        for stage in &p.sg.stages {
            let busiest = per_stage[stage.id]
                .iter()
                .max_by_key(|&(link, flits)| (*flits, std::cmp::Reverse(*link)));
            rows.push(RoutingRow {
                slot: 0,
                stage: stage.label(),
                mode: mode.to_string(),
                comm_cycles: finish[stage.id],
                bottleneck_link: busiest
                    .map(|(&l, _)| link_label(&p.topo, l))
                    .unwrap_or_else(|| "-".to_string()),
                max_link_flits: busiest.map(|(_, &f)| f).unwrap_or(0),
            });
        }
        let global = report.bottleneck_link();
        rows.push(RoutingRow {
            slot: 0,
            stage: "all".to_string(),
            mode: mode.to_string(),
            comm_cycles: report.cycles,
            bottleneck_link: global
                .map(|(l, _)| link_label(&p.topo, l))
                .unwrap_or_else(|| "-".to_string()),
            max_link_flits: global.map(|(_, f)| f).unwrap_or(0),
        });
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// Sweeps
// ---------------------------------------------------------------------------

/// Parameter swept by the `sweep` subcommand.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    Beta,
    EpeCrossbarSize,
    RoutingMode,
}

impl std::str::FromStr for SweepParam {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "beta" => Ok(SweepParam::Beta),
            "epe_crossbar_size" => Ok(SweepParam::EpeCrossbarSize),
            "routing_mode" => Ok(SweepParam::RoutingMode),
            other => Err(SimError::config(format!(
                "unknown sweep param '{other}' (beta, epe_crossbar_size, routing_mode)"
            ))),
        }
    }
}

impl std::fmt::Display for SweepParam {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SweepParam::Beta => write!(f, "beta"),
            SweepParam::EpeCrossbarSize => write!(f, "epe_crossbar_size"),
            SweepParam::RoutingMode => write!(f, "routing_mode"),
        }
    }
}

/// Outcome of one sweep point: the report, or the error that killed it.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub param: SweepParam,
    pub value: String,
    pub status: String,
    pub report: Option<SimReport>,
}

fn apply_sweep_value(
    cfg: &ExperimentConfig,
    param: SweepParam,
    value: &str,
) -> Result<ExperimentConfig> {
    let mut next = cfg.clone();
    match param {
        SweepParam::Beta => {
            next.beta = value
                .parse()
                .map_err(|_| SimError::config(format!("bad beta value '{value}'")))?;
        }
        SweepParam::EpeCrossbarSize => {
            next.hardware.e_pe.crossbar_size = value
                .parse()
                .map_err(|_| SimError::config(format!("bad crossbar size '{value}'")))?;
        }
        SweepParam::RoutingMode => {
            next.routing = match value {
                "unicast" => RoutingMode::Unicast,
                "multicast" => RoutingMode::Multicast,
                other => {
                    return Err(SimError::config(format!("bad routing mode '{other}'")))
                }
            };
        }
    }
    Ok(next)
}

/// Run one experiment per value. Invalid values abort only their own point
/// and are recorded as failed rows.
pub fn sweep(cfg: &ExperimentConfig, param: SweepParam, values: &[String]) -> Vec<SweepRow> {
    values
        .iter()
        .map(|value| {
            let outcome = apply_sweep_value(cfg, param, value).and_then(|c| run_experiment(&c));
            match outcome {
                Ok(report) => SweepRow {
                    param,
                    value: value.clone(),
                    status: "ok".to_string(),
                    report: Some(report),
                },
                Err(e) => SweepRow {
                    param,
                    value: value.clone(),
                    status: format!("error: {e}"),
                    report: None,
                },
            }
        })
        .collect()
}

// ---------------------------------------------------------------------------
// CSV rendering
// ---------------------------------------------------------------------------

fn csv_to_string(wtr: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = wtr
        .into_inner()
        .map_err(|e| SimError::invalid(format!("csv flush: {e}")))?;
    String::from_utf8(bytes).map_err(|e| SimError::invalid(format!("csv utf8: {e}")))
}

/// One row per stage.
pub fn summary_csv(report: &SimReport) -> Result<String> {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record([
        "stage",
        "label",
        "kind",
        "phase",
        "layer",
        "macs",
        "logical_ops",
        "output_bits",
        "tiles",
        "logical_units",
        "compute_s",
        "comm_s",
        "bound",
    ])
    .map_err(|e| SimError::invalid(e.to_string()))?;
    for s in &report.stages {
        wtr.write_record([
            s.id.to_string(),
            s.label.clone(),
            format!("{:?}", s.kind),
            format!("{:?}", s.phase).to_lowercase(),
            s.layer.to_string(),
            s.macs.to_string(),
            s.logical_ops.to_string(),
            s.output_bits.to_string(),
            s.tiles.to_string(),
            s.logical_units.to_string(),
            format!("{:.9e}", s.compute_s),
            format!("{:.9e}", s.comm_s),
            if s.comm_bound { "communication" } else { "compute" }.to_string(),
        ])
        .map_err(|e| SimError::invalid(e.to_string()))?;
    }
    csv_to_string(wtr)
}

/// Sweep table with columns normalized to the first successful row.
pub fn sweep_csv(rows: &[SweepRow]) -> Result<String> {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record([
        "param",
        "value",
        "status",
        "num_inputs",
        "epe_requirement",
        "slot_s",
        "comm_slot_s",
        "makespan_s",
        "energy_j",
        "edp",
        "norm_makespan",
        "norm_energy",
        "norm_edp",
        "norm_epe",
    ])
    .map_err(|e| SimError::invalid(e.to_string()))?;

    let baseline = rows.iter().find_map(|r| r.report.as_ref());
    for row in rows {
        match (&row.report, baseline) {
            (Some(rep), Some(base)) => {
                let norm = |x: f64, b: f64| if b > 0.0 { x / b } else { 0.0 };
                wtr.write_record([
                    row.param.to_string(),
                    row.value.clone(),
                    row.status.clone(),
                    rep.partitioning.num_inputs.to_string(),
                    rep.epe_requirement.to_string(),
                    format!("{:.9e}", rep.pipeline.slot_s),
                    format!("{:.9e}", rep.noc.comm_slot_s),
                    format!("{:.9e}", rep.makespan_s),
                    format!("{:.9e}", rep.energy.total_j),
                    format!("{:.9e}", rep.edp),
                    format!("{:.6}", norm(rep.makespan_s, base.makespan_s)),
                    format!("{:.6}", norm(rep.energy.total_j, base.energy.total_j)),
                    format!("{:.6}", norm(rep.edp, base.edp)),
                    format!(
                        "{:.6}",
                        norm(rep.epe_requirement as f64, base.epe_requirement as f64)
                    ),
                ])
                .map_err(|e| SimError::invalid(e.to_string()))?;
            }
            _ => {
                wtr.write_record([
                    row.param.to_string(),
                    row.value.clone(),
                    row.status.clone(),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                ])
                .map_err(|e| SimError::invalid(e.to_string()))?;
            }
        }
    }
    csv_to_string(wtr)
}

/// `compare-routing` CSV.
pub fn routing_csv(rows: &[RoutingRow]) -> Result<String> {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record([
        "slot",
        "stage",
        "mode",
        "comm_cycles",
        "bottleneck_link",
        "max_link_flits",
    ])
    .map_err(|e| SimError::invalid(e.to_string()))?;
    for r in rows {
        wtr.write_record([
            r.slot.to_string(),
            r.stage.clone(),
            r.mode.clone(),
            r.comm_cycles.to_string(),
            r.bottleneck_link.clone(),
            r.max_link_flits.to_string(),
        ])
        .map_err(|e| SimError::invalid(e.to_string()))?;
    }
    csv_to_string(wtr)
}

/// `tile-stats` CSV: zero-storage across crossbar sizes, normalized to the
/// first listed size.
pub fn tile_stats_csv(dataset: &str, stats: &[crate::tiling::ZeroStats]) -> Result<String> {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record([
        "dataset",
        "M",
        "nonempty_tiles",
        "nnz",
        "stored_zeros",
        "normalized_zeros",
    ])
    .map_err(|e| SimError::invalid(e.to_string()))?;
    let base = stats.first().map(|s| s.stored_zeros).unwrap_or(0);
    for s in stats {
        let norm = if base > 0 {
            s.stored_zeros as f64 / base as f64
        } else {
            0.0
        };
        wtr.write_record([
            dataset.to_string(),
            s.m.to_string(),
            s.nonempty_tiles.to_string(),
            s.nnz.to_string(),
            s.stored_zeros.to_string(),
            format!("{norm:.6}"),
        ])
        .map_err(|e| SimError::invalid(e.to_string()))?;
    }
    csv_to_string(wtr)
}
