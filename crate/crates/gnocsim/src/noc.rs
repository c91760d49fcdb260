//! Three-tier sandwiched 3D mesh NoC: dimension-order routing, tree
//! multicast, flow generation from a mapped stage graph, and conflict-free
//! static scheduling of one pipeline slot's flows.
//!
//! The middle tier carries the V-PEs and sits between two E-PE tiers, so
//! every V router reaches an E router in one vertical hop in both
//! directions. Traffic is scheduled statically: flows claim their whole
//! route (wormhole style) for `hops * router_delay + flits / link_rate`
//! cycles, greedily in descending-volume order, each at the earliest time
//! all of its links are free.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::mapping::Mapping;
use crate::workload::{EdgeClass, StageGraph, StageKind, StageWork};

/// Router index. Routers are numbered tier-major, then row-major in (y, x).
pub type RouterId = usize;
/// Tile index. Tiles are numbered router-major within each tier.
pub type TileId = usize;

/// Directed mesh link between adjacent routers.
pub type Link = (RouterId, RouterId);

/// Three stacked router meshes with tiles hanging off each router.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Topology3D {
    pub mesh_x: usize,
    pub mesh_y: usize,
    pub tiles_per_router: usize,
    /// Tier kinds, bottom to top: always `[E, V, E]` (the sandwich).
    pub tiers: Vec<StageKind>,
}

impl Topology3D {
    /// Sandwich topology with the given per-tier mesh dims.
    pub fn sandwich(mesh_x: usize, mesh_y: usize, tiles_per_router: usize) -> Self {
        Topology3D {
            mesh_x,
            mesh_y,
            tiles_per_router,
            tiers: vec![StageKind::E, StageKind::V, StageKind::E],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.mesh_x == 0 || self.mesh_y == 0 || self.tiles_per_router == 0 {
            return Err(SimError::config("mesh dims and tiles_per_router must be >= 1"));
        }
        if self.tiers != [StageKind::E, StageKind::V, StageKind::E] {
            return Err(SimError::config(
                "topology must be the E/V/E sandwich (one V tier between two E tiers)",
            ));
        }
        Ok(())
    }

    pub fn routers_per_tier(&self) -> usize {
        self.mesh_x * self.mesh_y
    }

    pub fn num_routers(&self) -> usize {
        self.routers_per_tier() * self.tiers.len()
    }

    pub fn num_tiles(&self) -> usize {
        self.num_routers() * self.tiles_per_router
    }

    pub fn router_coord(&self, r: RouterId) -> (usize, usize, usize) {
        let per = self.routers_per_tier();
        let z = r / per;
        let rem = r % per;
        (rem % self.mesh_x, rem / self.mesh_x, z)
    }

    pub fn coord_router(&self, x: usize, y: usize, z: usize) -> RouterId {
        z * self.routers_per_tier() + y * self.mesh_x + x
    }

    pub fn tile_router(&self, tile: TileId) -> RouterId {
        tile / self.tiles_per_router
    }

    pub fn tile_kind(&self, tile: TileId) -> StageKind {
        let (_, _, z) = self.router_coord(self.tile_router(tile));
        self.tiers[z]
    }

    /// Tiles of one PE kind in router-scanline order (tier, then y, x).
    pub fn tiles_of_kind(&self, kind: StageKind) -> Vec<TileId> {
        (0..self.num_tiles())
            .filter(|&t| self.tile_kind(t) == kind)
            .collect()
    }

    /// True when the link connects vertically adjacent routers.
    pub fn is_vertical(&self, link: Link) -> bool {
        let (_, _, z0) = self.router_coord(link.0);
        let (_, _, z1) = self.router_coord(link.1);
        z0 != z1
    }
}

/// A dimension-order route: the mesh links from source to destination.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Route {
    pub links: Vec<Link>,
}

impl Route {
    pub fn hops(&self) -> usize {
        self.links.len()
    }
}

/// Deterministic dimension-order (X, then Y, then tier) route.
pub fn route_xyz(topo: &Topology3D, src: RouterId, dst: RouterId) -> Result<Route> {
    if src >= topo.num_routers() || dst >= topo.num_routers() {
        return Err(SimError::invalid(format!("unknown router {src} or {dst}")));
    }
    let (mut x, mut y, mut z) = topo.router_coord(src);
    let (dx, dy, dz) = topo.router_coord(dst);
    let mut links = Vec::new();
    let mut cur = src;
    let step = |x: usize, y: usize, z: usize, cur: &mut RouterId, links: &mut Vec<Link>| {
        let next = topo.coord_router(x, y, z);
        links.push((*cur, next));
        *cur = next;
    };
    while x != dx {
        x = if x < dx { x + 1 } else { x - 1 };
        step(x, y, z, &mut cur, &mut links);
    }
    while y != dy {
        y = if y < dy { y + 1 } else { y - 1 };
        step(x, y, z, &mut cur, &mut links);
    }
    while z != dz {
        z = if z < dz { z + 1 } else { z - 1 };
        step(x, y, z, &mut cur, &mut links);
    }
    Ok(Route { links })
}

/// Union of the dimension-order routes from one source to many
/// destinations. Dimension-order routes from a common source are
/// prefix-closed, so the union is a tree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MulticastTree {
    pub root: RouterId,
    pub links: BTreeSet<Link>,
    pub destinations: BTreeSet<RouterId>,
    /// Longest root-to-destination distance, in links.
    pub max_depth: usize,
}

pub fn multicast_tree(
    topo: &Topology3D,
    src: RouterId,
    dsts: &BTreeSet<RouterId>,
) -> Result<MulticastTree> {
    if dsts.is_empty() {
        return Err(SimError::invalid("multicast needs at least one destination"));
    }
    let mut links = BTreeSet::new();
    let mut max_depth = 0;
    for &d in dsts {
        let route = route_xyz(topo, src, d)?;
        max_depth = max_depth.max(route.hops());
        links.extend(route.links);
    }
    Ok(MulticastTree {
        root: src,
        links,
        destinations: dsts.clone(),
        max_depth,
    })
}

impl MulticastTree {
    /// Check the tree and path-containment invariants.
    pub fn validate(&self, topo: &Topology3D) -> Result<()> {
        let mut routers: BTreeSet<RouterId> = BTreeSet::new();
        routers.insert(self.root);
        for &(a, b) in &self.links {
            routers.insert(a);
            routers.insert(b);
        }
        if self.links.len() != routers.len() - 1 {
            return Err(SimError::invalid(format!(
                "not a tree: {} links over {} routers",
                self.links.len(),
                routers.len()
            )));
        }
        for &d in &self.destinations {
            let route = route_xyz(topo, self.root, d)?;
            for link in &route.links {
                if !self.links.contains(link) {
                    return Err(SimError::invalid(format!(
                        "tree misses link {:?} of the route to {d}",
                        link
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Routing discipline for replicate-class traffic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoutingMode {
    Unicast,
    Multicast,
}

impl Default for RoutingMode {
    fn default() -> Self {
        RoutingMode::Multicast
    }
}

impl std::fmt::Display for RoutingMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RoutingMode::Unicast => write!(f, "unicast"),
            RoutingMode::Multicast => write!(f, "multicast"),
        }
    }
}

/// One scheduled transfer: a payload from a source tile to one or more
/// destination tiles within a pipeline slot.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Flow {
    pub id: usize,
    pub src_tile: TileId,
    /// Nonempty, sorted, excludes the source tile.
    pub dst_tiles: Vec<TileId>,
    pub volume_bits: u64,
    pub slot: usize,
    pub mode: RoutingMode,
    /// Producing stage, for per-stage reporting.
    pub stage: usize,
}

/// Expand the mapped stage graph into per-slot flows.
///
/// Each producer tile holds an equal slice (`ceil(volume / |producer
/// tiles|)`). Partition edges split every slice evenly across the consumer
/// stage's tiles as unicasts. Replicate edges send the full slice to every
/// consumer tile of every consuming stage: one multicast flow per producer
/// tile in multicast mode, one unicast copy per consumer tile otherwise.
/// Deliveries to the producer tile itself stay local and generate no flow.
pub fn gen_flows(
    sg: &StageGraph,
    works: &[StageWork],
    mapping: &Mapping,
    mode: RoutingMode,
) -> Result<Vec<Flow>> {
    let mut flows = Vec::new();
    let mut next_id = 0usize;
    for edge in &sg.edges {
        let producers = mapping
            .stage_tiles
            .get(edge.producer)
            .filter(|t| !t.is_empty())
            .ok_or_else(|| SimError::invalid(format!("stage {} unmapped", edge.producer)))?;
        let work = &works[edge.producer];

        match edge.class {
            EdgeClass::Partition => {
                for &consumer in &edge.consumers {
                    let volume = *work.consumer_bits.get(&consumer).unwrap_or(&0);
                    if volume == 0 {
                        continue;
                    }
                    let slice = volume.div_ceil(producers.len() as u64);
                    let targets = mapping
                        .stage_tiles
                        .get(consumer)
                        .filter(|t| !t.is_empty())
                        .ok_or_else(|| SimError::invalid(format!("stage {consumer} unmapped")))?;
                    let per_target = slice.div_ceil(targets.len() as u64);
                    for &src in producers {
                        for &dst in targets {
                            if dst == src {
                                continue;
                            }
                            flows.push(Flow {
                                id: next_id,
                                src_tile: src,
                                dst_tiles: vec![dst],
                                volume_bits: per_target,
                                slot: 0,
                                mode: RoutingMode::Unicast,
                                stage: edge.producer,
                            });
                            next_id += 1;
                        }
                    }
                }
            }
            EdgeClass::Replicate => {
                let volume = edge
                    .consumers
                    .iter()
                    .map(|c| *work.consumer_bits.get(c).unwrap_or(&0))
                    .max()
                    .unwrap_or(0);
                if volume == 0 {
                    continue;
                }
                let slice = volume.div_ceil(producers.len() as u64);
                let mut all_targets: BTreeSet<TileId> = BTreeSet::new();
                for &consumer in &edge.consumers {
                    let targets = mapping
                        .stage_tiles
                        .get(consumer)
                        .filter(|t| !t.is_empty())
                        .ok_or_else(|| SimError::invalid(format!("stage {consumer} unmapped")))?;
                    all_targets.extend(targets.iter().copied());
                }
                for &src in producers {
                    let dsts: Vec<TileId> =
                        all_targets.iter().copied().filter(|&t| t != src).collect();
                    if dsts.is_empty() {
                        continue;
                    }
                    match mode {
                        RoutingMode::Multicast => {
                            flows.push(Flow {
                                id: next_id,
                                src_tile: src,
                                dst_tiles: dsts,
                                volume_bits: slice,
                                slot: 0,
                                mode: RoutingMode::Multicast,
                                stage: edge.producer,
                            });
                            next_id += 1;
                        }
                        RoutingMode::Unicast => {
                            for dst in dsts {
                                flows.push(Flow {
                                    id: next_id,
                                    src_tile: src,
                                    dst_tiles: vec![dst],
                                    volume_bits: slice,
                                    slot: 0,
                                    mode: RoutingMode::Unicast,
                                    stage: edge.producer,
                                });
                                next_id += 1;
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(flows)
}

/// NoC link/router timing parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LinkParams {
    pub flit_bits: u64,
    /// Flits accepted per cycle per link.
    pub link_rate: u64,
    /// Cycles per router traversal.
    pub router_delay: u64,
    pub noc_frequency_hz: f64,
}

impl Default for LinkParams {
    fn default() -> Self {
        LinkParams {
            flit_bits: 32,
            link_rate: 1,
            router_delay: 1,
            noc_frequency_hz: 1.0e9,
        }
    }
}

impl LinkParams {
    pub fn validate(&self) -> Result<()> {
        if self.flit_bits == 0 || self.link_rate == 0 || self.router_delay == 0 {
            return Err(SimError::config("link params must be > 0"));
        }
        if !(self.noc_frequency_hz > 0.0) {
            return Err(SimError::config("noc frequency must be positive"));
        }
        Ok(())
    }
}

/// Outcome of scheduling one slot's flows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommReport {
    pub cycles: u64,
    pub seconds: f64,
    /// Flits carried per mesh link.
    pub link_flits: BTreeMap<Link, u64>,
    /// (flow id, stage, finish cycle) per flow, in schedule order.
    pub flow_finish: Vec<(usize, usize, u64)>,
    /// Largest single-flow latency.
    pub max_flow_cycles: u64,
}

impl CommReport {
    pub fn total_link_flits(&self) -> u64 {
        self.link_flits.values().sum()
    }

    pub fn bottleneck_link(&self) -> Option<(Link, u64)> {
        self.link_flits
            .iter()
            .max_by_key(|&(link, flits)| (*flits, std::cmp::Reverse(*link)))
            .map(|(&l, &f)| (l, f))
    }
}

struct FlowPath {
    links: Vec<Link>,
    /// Router traversals for latency: mesh hops plus the two local
    /// (tile-to-router) hops at the ends.
    hops: u64,
}

fn flow_path(topo: &Topology3D, flow: &Flow) -> Result<FlowPath> {
    let src_r = topo.tile_router(flow.src_tile);
    match flow.mode {
        RoutingMode::Unicast => {
            let dst_r = topo.tile_router(flow.dst_tiles[0]);
            let route = route_xyz(topo, src_r, dst_r)?;
            let hops = route.hops() as u64 + 2;
            Ok(FlowPath {
                links: route.links,
                hops,
            })
        }
        RoutingMode::Multicast => {
            let dsts: BTreeSet<RouterId> = flow
                .dst_tiles
                .iter()
                .map(|&t| topo.tile_router(t))
                .collect();
            if dsts.len() == 1 && dsts.contains(&src_r) {
                return Ok(FlowPath {
                    links: Vec::new(),
                    hops: 2,
                });
            }
            let tree = multicast_tree(topo, src_r, &dsts)?;
            Ok(FlowPath {
                links: tree.links.into_iter().collect(),
                hops: tree.max_depth as u64 + 2,
            })
        }
    }
}

/// Statically schedule one slot's flows and report the communication
/// makespan.
///
/// Each flow occupies all of its links for
/// `hops * router_delay + ceil(flits / link_rate)` cycles. Flows are placed
/// greedily in descending-volume order (flow id breaks ties) at the
/// earliest start time at which every link of the flow is free.
pub fn comm_makespan(topo: &Topology3D, flows: &[Flow], lp: &LinkParams) -> Result<CommReport> {
    let mut order: Vec<usize> = (0..flows.len()).collect();
    order.sort_by_key(|&i| (std::cmp::Reverse(flows[i].volume_bits), flows[i].id));

    let mut busy: BTreeMap<Link, Vec<(u64, u64)>> = BTreeMap::new();
    let mut link_flits: BTreeMap<Link, u64> = BTreeMap::new();
    let mut flow_finish = Vec::with_capacity(flows.len());
    let mut makespan = 0u64;
    let mut max_flow_cycles = 0u64;

    for &i in &order {
        let flow = &flows[i];
        let path = flow_path(topo, flow)?;
        let flits = flow.volume_bits.div_ceil(lp.flit_bits);
        let duration = path.hops * lp.router_delay + flits.div_ceil(lp.link_rate);
        max_flow_cycles = max_flow_cycles.max(duration);

        // Earliest time at which [t, t + duration) is free on every link.
        let mut candidates: Vec<u64> = vec![0];
        for link in &path.links {
            if let Some(iv) = busy.get(link) {
                candidates.extend(iv.iter().map(|&(_, end)| end));
            }
        }
        candidates.sort_unstable();
        candidates.dedup();
        let start = candidates
            .into_iter()
            .find(|&t| {
                path.links.iter().all(|link| {
                    busy.get(link).map_or(true, |iv| {
                        iv.iter().all(|&(s, e)| t + duration <= s || t >= e)
                    })
                })
            })
            .expect("an interval past all reservations always fits");

        let end = start + duration;
        for link in &path.links {
            let iv = busy.entry(*link).or_default();
            iv.push((start, end));
            iv.sort_unstable();
            *link_flits.entry(*link).or_insert(0) += flits;
        }
        flow_finish.push((flow.id, flow.stage, end));
        makespan = makespan.max(end);
    }

    Ok(CommReport {
        cycles: makespan,
        seconds: makespan as f64 / lp.noc_frequency_hz,
        link_flits,
        flow_finish,
        max_flow_cycles,
    })
}

/// Mesh links a flow occupies (route links, or tree links for multicast).
pub fn flow_links(topo: &Topology3D, flow: &Flow) -> Result<Vec<Link>> {
    Ok(flow_path(topo, flow)?.links)
}

/// Energy of `flits` flits crossing `mesh_links` links. Router traversals
/// are the links' routers plus the two local tile-router hops.
pub fn hop_energy(mesh_links: usize, flits: u64, e_router_hop: f64, e_link_hop: f64) -> f64 {
    let routers = mesh_links as f64 + 2.0;
    flits as f64 * (mesh_links as f64 * e_link_hop + routers * e_router_hop)
}

/// NoC energy of one flow: flits times per-link and per-router costs.
pub fn flow_energy(
    topo: &Topology3D,
    flow: &Flow,
    lp: &LinkParams,
    e_router_hop: f64,
    e_link_hop: f64,
) -> Result<f64> {
    let path = flow_path(topo, flow)?;
    let flits = flow.volume_bits.div_ceil(lp.flit_bits);
    Ok(hop_energy(path.links.len(), flits, e_router_hop, e_link_hop))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use std::collections::VecDeque;

    fn topo() -> Topology3D {
        Topology3D::sandwich(4, 4, 4)
    }

    #[test]
    fn default_sandwich_matches_expected_counts() {
        let t = topo();
        t.validate().unwrap();
        assert_eq!(t.num_routers(), 48);
        assert_eq!(t.num_tiles(), 192);
        assert_eq!(t.tiles_of_kind(StageKind::V).len(), 64);
        assert_eq!(t.tiles_of_kind(StageKind::E).len(), 128);
    }

    #[test]
    fn sandwich_gives_one_hop_vertical_access_both_ways() {
        let t = topo();
        for y in 0..4 {
            for x in 0..4 {
                let v = t.coord_router(x, y, 1);
                let below = t.coord_router(x, y, 0);
                let above = t.coord_router(x, y, 2);
                assert_eq!(route_xyz(&t, v, below).unwrap().hops(), 1);
                assert_eq!(route_xyz(&t, v, above).unwrap().hops(), 1);
                assert_eq!(route_xyz(&t, below, v).unwrap().hops(), 1);
                assert_eq!(route_xyz(&t, above, v).unwrap().hops(), 1);
            }
        }
    }

    #[test]
    fn route_same_router_is_empty() {
        let t = topo();
        assert_eq!(route_xyz(&t, 5, 5).unwrap().hops(), 0);
    }

    #[test]
    fn route_follows_x_then_y_then_z() {
        let t = topo();
        let src = t.coord_router(0, 0, 0);
        let dst = t.coord_router(2, 3, 1);
        let route = route_xyz(&t, src, dst).unwrap();
        assert_eq!(route.hops(), 6);
        let coords: Vec<(usize, usize, usize)> = route
            .links
            .iter()
            .map(|&(_, b)| t.router_coord(b))
            .collect();
        assert_eq!(
            coords,
            vec![
                (1, 0, 0),
                (2, 0, 0),
                (2, 1, 0),
                (2, 2, 0),
                (2, 3, 0),
                (2, 3, 1)
            ]
        );
    }

    /// BFS oracle over the router mesh.
    fn bfs_distance(t: &Topology3D, src: RouterId, dst: RouterId) -> usize {
        let mut dist = vec![usize::MAX; t.num_routers()];
        let mut q = VecDeque::new();
        dist[src] = 0;
        q.push_back(src);
        while let Some(r) = q.pop_front() {
            if r == dst {
                return dist[r];
            }
            let (x, y, z) = t.router_coord(r);
            let mut push = |nx: isize, ny: isize, nz: isize| {
                if nx < 0 || ny < 0 || nz < 0 {
                    return;
                }
                let (nx, ny, nz) = (nx as usize, ny as usize, nz as usize);
                if nx >= t.mesh_x || ny >= t.mesh_y || nz >= t.tiers.len() {
                    return;
                }
                let nr = t.coord_router(nx, ny, nz);
                if dist[nr] == usize::MAX {
                    dist[nr] = dist[r] + 1;
                    q.push_back(nr);
                }
            };
            let (x, y, z) = (x as isize, y as isize, z as isize);
            push(x - 1, y, z);
            push(x + 1, y, z);
            push(x, y - 1, z);
            push(x, y + 1, z);
            push(x, y, z - 1);
            push(x, y, z + 1);
        }
        dist[dst]
    }

    #[test]
    fn route_length_matches_bfs_oracle() {
        let t = topo();
        let mut rng = crate::seeds::rng_for(9, "route_bfs");
        for _ in 0..200 {
            let src = rng.gen_range(0..t.num_routers());
            let dst = rng.gen_range(0..t.num_routers());
            let hops = route_xyz(&t, src, dst).unwrap().hops();
            assert_eq!(hops, bfs_distance(&t, src, dst), "{src}->{dst}");
        }
    }

    #[test]
    fn single_destination_tree_equals_unicast_route() {
        let t = topo();
        let dsts: BTreeSet<RouterId> = [t.coord_router(3, 2, 0)].into_iter().collect();
        let tree = multicast_tree(&t, t.coord_router(0, 0, 1), &dsts).unwrap();
        let route = route_xyz(&t, t.coord_router(0, 0, 1), t.coord_router(3, 2, 0)).unwrap();
        assert_eq!(tree.links.len(), route.hops());
        tree.validate(&t).unwrap();
    }

    #[test]
    fn shared_prefix_is_deduplicated() {
        // Routes (0,0,0)->(3,0,0) and (0,0,0)->(3,1,0) share the 3-link X
        // prefix: the tree has 4 links against 7 unicast link-traversals.
        let t = topo();
        let src = t.coord_router(0, 0, 0);
        let dsts: BTreeSet<RouterId> = [t.coord_router(3, 0, 0), t.coord_router(3, 1, 0)]
            .into_iter()
            .collect();
        let tree = multicast_tree(&t, src, &dsts).unwrap();
        assert_eq!(tree.links.len(), 4);
        assert_eq!(tree.max_depth, 4);
        tree.validate(&t).unwrap();
    }

    #[test]
    fn tree_size_bounded_by_route_sum_with_equality_iff_disjoint() {
        let t = topo();
        let mut rng = crate::seeds::rng_for(10, "tree_union");
        for _ in 0..300 {
            let src = rng.gen_range(0..t.num_routers());
            let count = rng.gen_range(1..=6);
            let dsts: BTreeSet<RouterId> = (0..count)
                .map(|_| rng.gen_range(0..t.num_routers()))
                .filter(|&d| d != src)
                .collect();
            if dsts.is_empty() {
                continue;
            }
            let tree = multicast_tree(&t, src, &dsts).unwrap();
            tree.validate(&t).unwrap();
            // Path-union oracle.
            let mut sum = 0usize;
            let mut union: BTreeSet<Link> = BTreeSet::new();
            let mut disjoint = true;
            for &d in &dsts {
                let r = route_xyz(&t, src, d).unwrap();
                sum += r.hops();
                for link in r.links {
                    if !union.insert(link) {
                        disjoint = false;
                    }
                }
            }
            assert_eq!(tree.links, union);
            assert!(tree.links.len() <= sum);
            if disjoint {
                assert_eq!(tree.links.len(), sum);
            } else {
                assert!(tree.links.len() < sum);
            }
        }
    }

    #[test]
    fn empty_destination_set_rejected() {
        let t = topo();
        assert!(multicast_tree(&t, 0, &BTreeSet::new()).is_err());
    }

    fn unicast_flow(id: usize, src: TileId, dst: TileId, bits: u64) -> Flow {
        Flow {
            id,
            src_tile: src,
            dst_tiles: vec![dst],
            volume_bits: bits,
            slot: 0,
            mode: RoutingMode::Unicast,
            stage: 0,
        }
    }

    #[test]
    fn wormhole_latency_formula() {
        // Two mesh links plus the two local hops: 4 router traversals and
        // 10 flits of payload at one flit per cycle gives 14 cycles.
        let t = topo();
        let lp = LinkParams::default();
        let src = 0; // router (0,0,0)
        let dst_tile = t.coord_router(2, 0, 0) * t.tiles_per_router;
        let flows = vec![unicast_flow(0, src, dst_tile, 10 * lp.flit_bits)];
        let report = comm_makespan(&t, &flows, &lp).unwrap();
        assert_eq!(report.cycles, 14);
    }

    #[test]
    fn link_disjoint_flows_run_in_parallel() {
        let t = topo();
        let lp = LinkParams::default();
        // Flows in different tiers never share mesh links.
        let a = unicast_flow(0, 0, t.tiles_per_router, 320);
        let b_src = t.coord_router(0, 0, 2) * t.tiles_per_router;
        let b_dst = t.coord_router(1, 0, 2) * t.tiles_per_router;
        let b = unicast_flow(1, b_src, b_dst, 640);
        let individual_a = comm_makespan(&t, &[a.clone()], &lp).unwrap().cycles;
        let individual_b = comm_makespan(&t, &[b.clone()], &lp).unwrap().cycles;
        let both = comm_makespan(&t, &[a, b], &lp).unwrap().cycles;
        assert_eq!(both, individual_a.max(individual_b));
    }

    #[test]
    fn same_router_flow_costs_local_hops_only() {
        let t = topo();
        let lp = LinkParams::default();
        let flows = vec![unicast_flow(0, 0, 1, 32)];
        let report = comm_makespan(&t, &flows, &lp).unwrap();
        assert_eq!(report.cycles, 2 * lp.router_delay + 1);
        assert!(report.link_flits.is_empty());
    }

    /// Event-driven serialization oracle: same greedy priority order,
    /// brute-force per-cycle link occupancy.
    fn event_driven_makespan(t: &Topology3D, flows: &[Flow], lp: &LinkParams) -> u64 {
        let mut order: Vec<usize> = (0..flows.len()).collect();
        order.sort_by_key(|&i| (std::cmp::Reverse(flows[i].volume_bits), flows[i].id));
        let mut busy: BTreeMap<Link, Vec<bool>> = BTreeMap::new();
        let mut makespan = 0u64;
        for &i in &order {
            let path = flow_path(t, &flows[i]).unwrap();
            let flits = flows[i].volume_bits.div_ceil(lp.flit_bits);
            let dur = (path.hops * lp.router_delay + flits.div_ceil(lp.link_rate)) as usize;
            let mut start = 0usize;
            'search: loop {
                for link in &path.links {
                    let lane = busy.entry(*link).or_default();
                    if lane.len() < start + dur {
                        lane.resize(start + dur, false);
                    }
                    if let Some(pos) = (start..start + dur).find(|&c| lane[c]) {
                        start = pos + 1;
                        continue 'search;
                    }
                }
                break;
            }
            for link in &path.links {
                let lane = busy.get_mut(link).unwrap();
                for c in start..start + dur {
                    lane[c] = true;
                }
            }
            makespan = makespan.max((start + dur) as u64);
        }
        makespan
    }

    #[test]
    fn contended_schedule_matches_event_driven_oracle() {
        let t = topo();
        let lp = LinkParams::default();
        let mut rng = crate::seeds::rng_for(14, "sched");
        for trial in 0..60 {
            let n = rng.gen_range(2..=14);
            let flows: Vec<Flow> = (0..n)
                .map(|id| {
                    let src = rng.gen_range(0..t.num_tiles());
                    let mut dst = rng.gen_range(0..t.num_tiles());
                    while dst == src {
                        dst = rng.gen_range(0..t.num_tiles());
                    }
                    unicast_flow(id, src, dst, rng.gen_range(1..=20) * lp.flit_bits)
                })
                .collect();
            let report = comm_makespan(&t, &flows, &lp).unwrap();
            let oracle = event_driven_makespan(&t, &flows, &lp);
            assert_eq!(report.cycles, oracle, "trial {trial}");

            // Lower bounds: worst single-flow latency and worst link load.
            let link_bound = report
                .link_flits
                .values()
                .map(|&f| f.div_ceil(lp.link_rate))
                .max()
                .unwrap_or(0);
            assert!(report.cycles >= report.max_flow_cycles);
            assert!(report.cycles >= link_bound);
        }
    }

    #[test]
    fn determinism_of_schedule() {
        let t = topo();
        let lp = LinkParams::default();
        let flows: Vec<Flow> = (0..10)
            .map(|id| unicast_flow(id, id, 100 + id, 64 * (id as u64 + 1)))
            .collect();
        let a = comm_makespan(&t, &flows, &lp).unwrap();
        let b = comm_makespan(&t, &flows, &lp).unwrap();
        assert_eq!(a, b);
    }
}
