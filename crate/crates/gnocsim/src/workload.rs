//! The 4L-stage training pipeline and its per-stage work quantities.
//!
//! Each neural layer splits into a vertex sub-layer (dense weight multiply)
//! and an edge sub-layer (adjacency SpMV), and each has a backward-phase
//! twin, giving 4L pipeline stages per training step. Batches advance
//! through the stages in global slots of length T, where T is the worst
//! compute-or-communication time of any stage; once the pipeline fills,
//! every stage is busy every slot.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::tiling::TileGrid;

/// Which PE kind a stage runs on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum StageKind {
    V,
    E,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Forward,
    Backward,
}

/// One pipeline stage. `id` is the ordinal in pipeline order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stage {
    pub kind: StageKind,
    pub phase: Phase,
    /// 1-based neural-layer index.
    pub layer: usize,
    pub id: usize,
}

impl Stage {
    /// Short name: V1, E1, ..., BE2, BV1.
    pub fn label(&self) -> String {
        let prefix = match (self.phase, self.kind) {
            (Phase::Forward, StageKind::V) => "V",
            (Phase::Forward, StageKind::E) => "E",
            (Phase::Backward, StageKind::V) => "BV",
            (Phase::Backward, StageKind::E) => "BE",
        };
        format!("{prefix}{}", self.layer)
    }
}

/// How a producer's output reaches its consumers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeClass {
    /// Each consumer tile receives a distinct slice.
    Partition,
    /// Every consumer tile receives the full payload.
    Replicate,
}

/// Dataflow edge from one producer stage to one or more consumer stages.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageEdge {
    pub producer: usize,
    pub consumers: Vec<usize>,
    pub class: EdgeClass,
}

/// The 4L stages in pipeline order plus their dataflow edges.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageGraph {
    pub stages: Vec<Stage>,
    pub edges: Vec<StageEdge>,
}

/// GNN shape: `layer_dims = [d0, d1, ..., dL]` feature widths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GnnConfig {
    pub layer_dims: Vec<usize>,
    #[serde(default = "default_value_bits")]
    pub value_bits: u32,
    #[serde(default = "default_epochs")]
    pub num_epochs: usize,
}

fn default_value_bits() -> u32 {
    16
}

fn default_epochs() -> usize {
    1
}

impl GnnConfig {
    pub fn num_layers(&self) -> usize {
        self.layer_dims.len().saturating_sub(1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_layers() < 1 {
            return Err(SimError::config("layer_dims needs at least [d0, d1]"));
        }
        if self.layer_dims.iter().any(|&d| d == 0) {
            return Err(SimError::config("all layer dims must be >= 1"));
        }
        if self.value_bits == 0 {
            return Err(SimError::config("value_bits must be >= 1"));
        }
        Ok(())
    }
}

/// Build the 4L-stage pipeline: forward V1,E1,...,VL,EL then backward
/// BEL,BVL,...,BE1,BV1. Each forward V output replicates to both its
/// successor E stage and its own backward stage; all other edges partition
/// to a single consumer.
pub fn build_stage_graph(cfg: &GnnConfig) -> StageGraph {
    let l = cfg.num_layers();
    let mut stages = Vec::with_capacity(4 * l);
    for layer in 1..=l {
        stages.push(Stage {
            kind: StageKind::V,
            phase: Phase::Forward,
            layer,
            id: stages.len(),
        });
        stages.push(Stage {
            kind: StageKind::E,
            phase: Phase::Forward,
            layer,
            id: stages.len(),
        });
    }
    for layer in (1..=l).rev() {
        stages.push(Stage {
            kind: StageKind::E,
            phase: Phase::Backward,
            layer,
            id: stages.len(),
        });
        stages.push(Stage {
            kind: StageKind::V,
            phase: Phase::Backward,
            layer,
            id: stages.len(),
        });
    }

    let fwd_v = |layer: usize| 2 * (layer - 1);
    let fwd_e = |layer: usize| 2 * (layer - 1) + 1;
    let bwd_e = |layer: usize| 2 * l + 2 * (l - layer);
    let bwd_v = |layer: usize| 2 * l + 2 * (l - layer) + 1;

    let mut edges = Vec::new();
    for layer in 1..=l {
        // Forward V feeds its E stage and its own backward stage.
        edges.push(StageEdge {
            producer: fwd_v(layer),
            consumers: vec![fwd_e(layer), bwd_v(layer)],
            class: EdgeClass::Replicate,
        });
        // Forward E feeds the next layer, or the backward chain at the top.
        let next = if layer < l { fwd_v(layer + 1) } else { bwd_e(l) };
        edges.push(StageEdge {
            producer: fwd_e(layer),
            consumers: vec![next],
            class: EdgeClass::Partition,
        });
        // Backward E feeds backward V of the same layer.
        edges.push(StageEdge {
            producer: bwd_e(layer),
            consumers: vec![bwd_v(layer)],
            class: EdgeClass::Partition,
        });
        // Backward V feeds the next backward E (BV1 terminates the batch).
        if layer > 1 {
            edges.push(StageEdge {
                producer: bwd_v(layer),
                consumers: vec![bwd_e(layer - 1)],
                class: EdgeClass::Partition,
            });
        }
    }
    edges.sort_by_key(|e| e.producer);
    StageGraph { stages, edges }
}

impl StageGraph {
    pub fn num_stages(&self) -> usize {
        self.stages.len()
    }

    pub fn num_layers(&self) -> usize {
        self.stages.len() / 4
    }

    /// Edges leaving the given stage.
    pub fn edges_from(&self, stage: usize) -> impl Iterator<Item = &StageEdge> {
        self.edges.iter().filter(move |e| e.producer == stage)
    }

    /// DOT-format rendering for documentation.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph stages {\n  rankdir=LR;\n");
        for s in &self.stages {
            let shape = match s.kind {
                StageKind::V => "box",
                StageKind::E => "ellipse",
            };
            let _ = writeln!(out, "  {} [label=\"{}\", shape={shape}];", s.id, s.label());
        }
        for e in &self.edges {
            let style = match e.class {
                EdgeClass::Replicate => " [style=dashed]",
                EdgeClass::Partition => "",
            };
            for &c in &e.consumers {
                let _ = writeln!(out, "  {} -> {}{style};", e.producer, c);
            }
        }
        out.push_str("}\n");
        out
    }
}

/// Work done by one stage on one batch.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageWork {
    /// Scalar multiply-accumulates.
    pub macs: u64,
    /// M-wide crossbar operations (MACs divided by M^2, per-block ceiling).
    pub logical_ops: u64,
    /// Bits produced per batch: n_batch * d_out * value_bits.
    pub output_bits: u64,
    /// Bits owed to each consuming stage.
    pub consumer_bits: BTreeMap<usize, u64>,
}

/// Quantify one stage's work on a batch of `batch_nodes` nodes whose
/// adjacency tiling is `grid`. `v_crossbar` is the V-PE crossbar size.
///
/// Forward V computes `n * d_in * d_out` MACs; backward V doubles that
/// (input-gradient and weight-gradient products). Forward E burns
/// `tiles * M^2 * d` MACs (zeros inside retained tiles still cost work);
/// backward E equals forward E because the adjacency is symmetric.
pub fn stage_work(
    sg: &StageGraph,
    stage_id: usize,
    batch_nodes: usize,
    cfg: &GnnConfig,
    grid: &TileGrid,
    v_crossbar: usize,
) -> Result<StageWork> {
    let stage = sg
        .stages
        .get(stage_id)
        .ok_or_else(|| SimError::invalid(format!("stage {stage_id} out of range")))?;
    if grid.n() != batch_nodes {
        return Err(SimError::invalid(format!(
            "grid order {} does not match batch size {batch_nodes}",
            grid.n()
        )));
    }
    let n = batch_nodes as u64;
    let d_in = cfg.layer_dims[stage.layer - 1] as u64;
    let d_out = cfg.layer_dims[stage.layer] as u64;
    let m_v = v_crossbar as u64;
    let m_e = grid.m() as u64;
    let tiles = grid.num_tiles() as u64;

    let (macs, logical_ops, out_width) = match (stage.kind, stage.phase) {
        (StageKind::V, Phase::Forward) => (
            n * d_in * d_out,
            n * d_in.div_ceil(m_v) * d_out.div_ceil(m_v),
            d_out,
        ),
        (StageKind::V, Phase::Backward) => (
            2 * n * d_in * d_out,
            2 * n * d_in.div_ceil(m_v) * d_out.div_ceil(m_v),
            d_in,
        ),
        (StageKind::E, _) => (tiles * m_e * m_e * d_out, tiles * d_out, d_out),
    };
    let output_bits = n * out_width * u64::from(cfg.value_bits);
    let consumer_bits = sg
        .edges_from(stage_id)
        .flat_map(|e| e.consumers.iter().map(|&c| (c, output_bits)))
        .collect();
    Ok(StageWork {
        macs,
        logical_ops,
        output_bits,
        consumer_bits,
    })
}

/// Per-stage compute and communication delay for one pipeline slot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageTime {
    pub compute_s: f64,
    pub comm_s: f64,
}

/// Pipeline timing summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MakespanReport {
    /// Global slot length T: the worst stage time.
    pub slot_s: f64,
    /// `epochs * (num_inputs + 4L - 1) * T`.
    pub makespan_s: f64,
    pub bottleneck_stage: usize,
    /// Whether communication (rather than compute) set T.
    pub comm_bound: bool,
}

/// Synchronous-slot pipeline makespan: all batches advance one stage per
/// slot of length `T = max over stages of max(compute, comm)`, and the last
/// of `num_inputs` batches clears stage `S` after `num_inputs + S - 1` slots.
pub fn pipeline_makespan(
    stage_times: &[StageTime],
    num_inputs: usize,
    epochs: usize,
) -> Result<MakespanReport> {
    if stage_times.is_empty() {
        return Err(SimError::invalid("pipeline needs at least one stage"));
    }
    if num_inputs == 0 {
        return Err(SimError::invalid("num_inputs must be >= 1"));
    }
    if stage_times
        .iter()
        .any(|t| t.compute_s < 0.0 || t.comm_s < 0.0)
    {
        return Err(SimError::invalid("stage times must be >= 0"));
    }
    let mut slot = 0.0f64;
    let mut bottleneck_stage = 0;
    let mut comm_bound = false;
    for (i, t) in stage_times.iter().enumerate() {
        let worst = t.compute_s.max(t.comm_s);
        if worst > slot {
            slot = worst;
            bottleneck_stage = i;
            comm_bound = t.comm_s > t.compute_s;
        }
    }
    let slots = (num_inputs + stage_times.len() - 1) as f64;
    Ok(MakespanReport {
        slot_s: slot,
        makespan_s: epochs as f64 * slots * slot,
        bottleneck_stage,
        comm_bound,
    })
}
