//! Stage-to-tile placement with simulated annealing.
//!
//! Stages own whole tiles (a tile hosts at most one stage), sized so that
//! at least one copy of the stage's operand fits. The annealer minimizes
//! hop-weighted traffic (bit-hops), the standard placement surrogate for
//! "put highly communicating layers on nearby PEs"; the true scheduled
//! communication makespan is recomputed by the reporting layer afterwards.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::hw::TileSpec;
use crate::noc::{gen_flows, multicast_tree, route_xyz, RoutingMode, TileId, Topology3D};
use crate::workload::{StageGraph, StageKind, StageWork};

/// Assignment of each stage to an ordered list of tiles, indexed by stage id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mapping {
    pub stage_tiles: Vec<Vec<TileId>>,
}

/// Crossbar demand of one stage (one operand copy).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageDemand {
    pub kind: StageKind,
    pub crossbars: u64,
}

impl StageDemand {
    /// Whole tiles needed to hold one copy of the operand.
    pub fn tiles_needed(&self, spec: &TileSpec) -> usize {
        (self.crossbars.div_ceil(spec.tile_crossbars()).max(1)) as usize
    }
}

/// Simulated-annealing schedule. `initial_temp` defaults to the standard
/// deviation of 100 random-neighbor cost deltas; `min_temp` defaults to
/// `initial_temp / 1e4`; `seed` defaults to the experiment's `sa`
/// sub-stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SaParams {
    pub initial_temp: Option<f64>,
    pub cooling_rate: f64,
    pub iterations_per_temp: usize,
    pub min_temp: Option<f64>,
    pub seed: Option<u64>,
}

impl Default for SaParams {
    fn default() -> Self {
        SaParams {
            initial_temp: None,
            cooling_rate: 0.95,
            iterations_per_temp: 200,
            min_temp: None,
            seed: None,
        }
    }
}

impl SaParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.cooling_rate > 0.0 && self.cooling_rate < 1.0) {
            return Err(SimError::config("cooling_rate must be in (0, 1)"));
        }
        if self.iterations_per_temp == 0 {
            return Err(SimError::config("iterations_per_temp must be >= 1"));
        }
        Ok(())
    }
}

/// Everything the cost function and move generator need.
pub struct CostCtx<'a> {
    pub sg: &'a StageGraph,
    pub works: &'a [StageWork],
    pub topo: &'a Topology3D,
    pub mode: RoutingMode,
    pub demands: &'a [StageDemand],
    pub v_spec: &'a TileSpec,
    pub e_spec: &'a TileSpec,
    /// Cost weight of a vertical hop relative to a planar hop.
    pub vertical_weight: f64,
}

impl CostCtx<'_> {
    fn spec_for(&self, kind: StageKind) -> &TileSpec {
        match kind {
            StageKind::V => self.v_spec,
            StageKind::E => self.e_spec,
        }
    }
}

impl Mapping {
    /// Check kind constraints, tile-exclusivity, and that every stage has
    /// room for one operand copy.
    pub fn validate(&self, ctx: &CostCtx) -> Result<()> {
        if self.stage_tiles.len() != ctx.sg.num_stages() {
            return Err(SimError::invalid(format!(
                "mapping covers {} stages, stage graph has {}",
                self.stage_tiles.len(),
                ctx.sg.num_stages()
            )));
        }
        let mut used = vec![false; ctx.topo.num_tiles()];
        for (sid, tiles) in self.stage_tiles.iter().enumerate() {
            let demand = &ctx.demands[sid];
            if tiles.len() < demand.tiles_needed(ctx.spec_for(demand.kind)) {
                return Err(SimError::invalid(format!(
                    "stage {sid} has {} tiles, needs {}",
                    tiles.len(),
                    demand.tiles_needed(ctx.spec_for(demand.kind))
                )));
            }
            for &t in tiles {
                if t >= ctx.topo.num_tiles() {
                    return Err(SimError::invalid(format!("tile {t} out of range")));
                }
                if ctx.topo.tile_kind(t) != demand.kind {
                    return Err(SimError::invalid(format!(
                        "stage {sid} ({:?}) mapped to a {:?} tile",
                        demand.kind,
                        ctx.topo.tile_kind(t)
                    )));
                }
                if used[t] {
                    return Err(SimError::invalid(format!("tile {t} assigned twice")));
                }
                used[t] = true;
            }
        }
        Ok(())
    }
}

/// Feasible starting point: stages take tiles in pipeline order from their
/// tier's tiles in router-scanline order.
pub fn initial_mapping(
    sg: &StageGraph,
    topo: &Topology3D,
    demands: &[StageDemand],
    v_spec: &TileSpec,
    e_spec: &TileSpec,
) -> Result<Mapping> {
    // Capacity check first, reporting the deficit per tier kind.
    for kind in [StageKind::V, StageKind::E] {
        let spec = match kind {
            StageKind::V => v_spec,
            StageKind::E => e_spec,
        };
        let needed: usize = demands
            .iter()
            .filter(|d| d.kind == kind)
            .map(|d| d.tiles_needed(spec))
            .sum();
        let available = topo.tiles_of_kind(kind).len();
        if needed > available {
            return Err(SimError::Infeasible {
                kind: match kind {
                    StageKind::V => "V",
                    StageKind::E => "E",
                },
                needed_tiles: needed,
                available_tiles: available,
            });
        }
    }

    let mut pools = [topo.tiles_of_kind(StageKind::V), topo.tiles_of_kind(StageKind::E)];
    let mut cursors = [0usize, 0usize];
    let mut stage_tiles = Vec::with_capacity(sg.num_stages());
    for stage in &sg.stages {
        let demand = &demands[stage.id];
        let spec = match demand.kind {
            StageKind::V => v_spec,
            StageKind::E => e_spec,
        };
        let count = demand.tiles_needed(spec);
        let pool_idx = match demand.kind {
            StageKind::V => 0,
            StageKind::E => 1,
        };
        let start = cursors[pool_idx];
        let tiles: Vec<TileId> = pools[pool_idx][start..start + count].to_vec();
        cursors[pool_idx] += count;
        stage_tiles.push(tiles);
    }
    let _ = &mut pools;
    Ok(Mapping { stage_tiles })
}

/// Hop-weighted traffic of a mapping, in bit-hops: the sum over flows of
/// `volume_bits * occupied mesh links` (tree links for multicast flows),
/// with vertical links weighted by `vertical_weight`.
pub fn mapping_cost(
    m: &Mapping,
    sg: &StageGraph,
    works: &[StageWork],
    topo: &Topology3D,
    mode: RoutingMode,
    vertical_weight: f64,
) -> Result<f64> {
    let flows = gen_flows(sg, works, m, mode)?;
    let mut cost = 0.0;
    for flow in &flows {
        let src_r = topo.tile_router(flow.src_tile);
        let links: Vec<(usize, usize)> = match flow.mode {
            RoutingMode::Unicast => route_xyz(topo, src_r, topo.tile_router(flow.dst_tiles[0]))?.links,
            RoutingMode::Multicast => {
                let dsts = flow.dst_tiles.iter().map(|&t| topo.tile_router(t)).collect();
                multicast_tree(topo, src_r, &dsts)?
                    .links
                    .into_iter()
                    .collect()
            }
        };
        let weighted: f64 = links
            .iter()
            .map(|&l| if topo.is_vertical(l) { vertical_weight } else { 1.0 })
            .sum();
        cost += flow.volume_bits as f64 * weighted;
    }
    Ok(cost)
}

/// Result of an annealing run.
#[derive(Debug, Clone)]
pub struct SaResult {
    pub mapping: Mapping,
    pub initial_cost: f64,
    pub best_cost: f64,
    /// Best-seen cost after each temperature level (nonincreasing).
    pub trace: Vec<f64>,
    pub evals: usize,
}

enum Move {
    Swap(usize, usize),
    Migrate {
        stage: usize,
        slot: usize,
        to: TileId,
    },
}

fn propose_move(m: &Mapping, ctx: &CostCtx, rng: &mut ChaCha8Rng) -> Option<Move> {
    let num_stages = m.stage_tiles.len();
    if rng.gen::<bool>() {
        // Swap the tile lists of two same-kind stages.
        let a = rng.gen_range(0..num_stages);
        let same: Vec<usize> = (0..num_stages)
            .filter(|&b| b != a && ctx.demands[b].kind == ctx.demands[a].kind)
            .collect();
        if same.is_empty() {
            return None;
        }
        let b = same[rng.gen_range(0..same.len())];
        // Both demands must fit in the other's tile count.
        let spec_a = ctx.spec_for(ctx.demands[a].kind);
        if ctx.demands[a].tiles_needed(spec_a) > m.stage_tiles[b].len()
            || ctx.demands[b].tiles_needed(spec_a) > m.stage_tiles[a].len()
        {
            return None;
        }
        Some(Move::Swap(a, b))
    } else {
        // Migrate one tile of one stage to a free same-kind tile.
        let stage = rng.gen_range(0..num_stages);
        let kind = ctx.demands[stage].kind;
        let mut used = vec![false; ctx.topo.num_tiles()];
        for tiles in &m.stage_tiles {
            for &t in tiles {
                used[t] = true;
            }
        }
        let free: Vec<TileId> = ctx
            .topo
            .tiles_of_kind(kind)
            .into_iter()
            .filter(|&t| !used[t])
            .collect();
        if free.is_empty() || m.stage_tiles[stage].is_empty() {
            return None;
        }
        let slot = rng.gen_range(0..m.stage_tiles[stage].len());
        let to = free[rng.gen_range(0..free.len())];
        Some(Move::Migrate { stage, slot, to })
    }
}

fn apply_move(m: &Mapping, mv: &Move) -> Mapping {
    let mut next = m.clone();
    match *mv {
        Move::Swap(a, b) => next.stage_tiles.swap(a, b),
        Move::Migrate { stage, slot, to } => next.stage_tiles[stage][slot] = to,
    }
    next
}

/// Anneal from `m0`: swap/migrate neighbor moves, Metropolis acceptance,
/// geometric cooling, best-seen result. Deterministic per seed.
pub fn sa_optimize(m0: &Mapping, params: &SaParams, ctx: &CostCtx) -> Result<SaResult> {
    params.validate()?;
    m0.validate(ctx)?;
    let cost_of = |m: &Mapping| -> Result<f64> {
        mapping_cost(m, ctx.sg, ctx.works, ctx.topo, ctx.mode, ctx.vertical_weight)
    };
    let seed = params.seed.unwrap_or(0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let initial_cost = cost_of(m0)?;
    let mut evals = 1usize;

    let initial_temp = match params.initial_temp {
        Some(t) => t,
        None => {
            // Standard deviation of 100 random-neighbor cost deltas.
            let mut deltas = Vec::with_capacity(100);
            for _ in 0..100 {
                if let Some(mv) = propose_move(m0, ctx, &mut rng) {
                    let c = cost_of(&apply_move(m0, &mv))?;
                    evals += 1;
                    deltas.push(c - initial_cost);
                }
            }
            if deltas.is_empty() {
                1.0
            } else {
                let mean = deltas.iter().sum::<f64>() / deltas.len() as f64;
                let var = deltas.iter().map(|d| (d - mean).powi(2)).sum::<f64>()
                    / deltas.len() as f64;
                let sd = var.sqrt();
                if sd > 0.0 {
                    sd
                } else {
                    1.0
                }
            }
        }
    };
    let min_temp = params.min_temp.unwrap_or(initial_temp / 1.0e4);

    let mut current = m0.clone();
    let mut current_cost = initial_cost;
    let mut best = m0.clone();
    let mut best_cost = initial_cost;
    let mut trace = Vec::new();

    let mut temp = initial_temp;
    while temp > min_temp {
        for _ in 0..params.iterations_per_temp {
            let Some(mv) = propose_move(&current, ctx, &mut rng) else {
                continue;
            };
            let candidate = apply_move(&current, &mv);
            let cost = cost_of(&candidate)?;
            evals += 1;
            let delta = cost - current_cost;
            if delta <= 0.0 || rng.gen::<f64>() < (-delta / temp).exp() {
                debug_assert!(candidate.validate(ctx).is_ok());
                current = candidate;
                current_cost = cost;
                if current_cost < best_cost {
                    best = current.clone();
                    best_cost = current_cost;
                }
            }
        }
        trace.push(best_cost);
        temp *= params.cooling_rate;
    }

    Ok(SaResult {
        mapping: best,
        initial_cost,
        best_cost,
        trace,
        evals,
    })
}
