//! Blocked adjacency tiling for the edge-computation crossbars.
//!
//! The (sub)graph adjacency matrix is cut into M x M blocks; any block whose
//! entries are all zero is discarded and the rest are stored dense, exactly
//! as they would occupy ReRAM crossbars. Zeros inside retained blocks (and
//! the zero padding of ragged final blocks) still occupy cells and still
//! burn multiply operations, which is what makes small crossbars pay off on
//! sparse adjacencies.

use std::collections::BTreeMap;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::graph::Graph;
use crate::hw::TileSpec;

/// One retained M x M block of the adjacency pattern, stored as a bitset in
/// row-major order (`bit = local_row * M + local_col`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tile {
    pub block_row: u32,
    pub block_col: u32,
    words: Vec<u64>,
}

impl Tile {
    fn new(m: usize) -> Self {
        Tile {
            block_row: 0,
            block_col: 0,
            words: vec![0; (m * m).div_ceil(64)],
        }
    }

    fn set(&mut self, r: usize, c: usize, m: usize) {
        let bit = r * m + c;
        self.words[bit / 64] |= 1 << (bit % 64);
    }

    pub fn get(&self, r: usize, c: usize, m: usize) -> bool {
        let bit = r * m + c;
        self.words[bit / 64] & (1 << (bit % 64)) != 0
    }

    /// Number of nonzeros stored in this block.
    pub fn nnz(&self) -> u64 {
        self.words.iter().map(|w| u64::from(w.count_ones())).sum()
    }

    /// Iterate set positions as (local_row, local_col).
    pub fn ones(&self, m: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.words.iter().enumerate().flat_map(move |(wi, &w)| {
            let mut w = w;
            std::iter::from_fn(move || {
                if w == 0 {
                    return None;
                }
                let tz = w.trailing_zeros() as usize;
                w &= w - 1;
                let bit = wi * 64 + tz;
                Some((bit / m, bit % m))
            })
        })
    }
}

/// The nonempty M x M blocks of a (sub)graph adjacency matrix.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TileGrid {
    n: usize,
    m: usize,
    grid_dim: usize,
    tiles: Vec<Tile>,
}

impl TileGrid {
    /// Matrix order (number of nodes of the tiled subgraph).
    pub fn n(&self) -> usize {
        self.n
    }

    /// Tile edge length M.
    pub fn m(&self) -> usize {
        self.m
    }

    /// Number of block rows/columns, `ceil(n / M)`.
    pub fn grid_dim(&self) -> usize {
        self.grid_dim
    }

    /// Retained tiles, sorted by (block_row, block_col).
    pub fn tiles(&self) -> &[Tile] {
        &self.tiles
    }

    pub fn num_tiles(&self) -> usize {
        self.tiles.len()
    }

    /// Total nonzeros across all retained tiles.
    pub fn nnz(&self) -> u64 {
        self.tiles.iter().map(Tile::nnz).sum()
    }

    /// Adjacency entry (r, c), reconstructed from the blocked form.
    /// Absent tiles are zero blocks.
    pub fn entry(&self, r: usize, c: usize) -> bool {
        let key = ((r / self.m) as u32, (c / self.m) as u32);
        match self
            .tiles
            .binary_search_by_key(&key, |t| (t.block_row, t.block_col))
        {
            Ok(i) => self.tiles[i].get(r % self.m, c % self.m, self.m),
            Err(_) => false,
        }
    }
}

/// Zero-storage accounting for one tiling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ZeroStats {
    pub m: usize,
    pub nonempty_tiles: u64,
    pub stored_zeros: u64,
    pub nnz: u64,
}

/// Block the adjacency pattern of `subgraph` into M x M tiles, discarding
/// all-zero blocks. With `self_loops` the full diagonal is treated as set.
/// The last block row/column is zero-padded when M does not divide n.
pub fn tile_adjacency(subgraph: &Graph, m: usize, self_loops: bool) -> Result<TileGrid> {
    if m == 0 {
        return Err(SimError::invalid("tile size M must be >= 1"));
    }
    let n = subgraph.num_nodes();
    if n == 0 {
        return Err(SimError::invalid("cannot tile an empty subgraph"));
    }
    let grid_dim = n.div_ceil(m);

    let mut blocks: BTreeMap<(u32, u32), Tile> = BTreeMap::new();
    let set = |r: usize, c: usize, blocks: &mut BTreeMap<(u32, u32), Tile>| {
        let key = ((r / m) as u32, (c / m) as u32);
        let tile = blocks.entry(key).or_insert_with(|| Tile::new(m));
        tile.set(r % m, c % m, m);
    };

    for &(u, v) in subgraph.edges() {
        let (u, v) = (u as usize, v as usize);
        set(u, v, &mut blocks);
        if u != v {
            set(v, u, &mut blocks);
        }
    }
    if self_loops {
        for i in 0..n {
            set(i, i, &mut blocks);
        }
    }

    let tiles = blocks
        .into_iter()
        .map(|((br, bc), mut t)| {
            t.block_row = br;
            t.block_col = bc;
            t
        })
        .collect();
    Ok(TileGrid {
        n,
        m,
        grid_dim,
        tiles,
    })
}

/// Count the zeros occupying cells inside retained tiles:
/// `stored_zeros = nonempty_tiles * M^2 - nnz`.
pub fn zero_stats(grid: &TileGrid) -> ZeroStats {
    let nonempty_tiles = grid.num_tiles() as u64;
    let nnz = grid.nnz();
    ZeroStats {
        m: grid.m(),
        nonempty_tiles,
        stored_zeros: nonempty_tiles * (grid.m() * grid.m()) as u64 - nnz,
        nnz,
    }
}

/// Functional model of the edge layer: `Adj * X` over the blocked form,
/// exact integer arithmetic. Padded rows contribute zeros and are truncated.
pub fn tiled_spmv(grid: &TileGrid, x: &Array2<i64>) -> Result<Array2<i64>> {
    if x.nrows() != grid.n() {
        return Err(SimError::invalid(format!(
            "X has {} rows, adjacency order is {}",
            x.nrows(),
            grid.n()
        )));
    }
    let d = x.ncols();
    let mut y = Array2::<i64>::zeros((grid.n(), d));
    let m = grid.m();
    for tile in grid.tiles() {
        let base_r = tile.block_row as usize * m;
        let base_c = tile.block_col as usize * m;
        for (r, c) in tile.ones(m) {
            let (gr, gc) = (base_r + r, base_c + c);
            for j in 0..d {
                y[[gr, j]] += x[[gc, j]];
            }
        }
    }
    Ok(y)
}

/// Number of E-PE tiles needed to hold this grid:
/// `ceil(nonempty_tiles * replication / (imas_per_tile * crossbars_per_ima))`
/// with `replication = ceil(adj_value_bits / cell_bits)` (1 for the default
/// binary adjacency).
pub fn epe_requirement(grid: &TileGrid, tile_spec: &TileSpec, adj_value_bits: u32) -> Result<u64> {
    if tile_spec.crossbar_size != grid.m() {
        return Err(SimError::invalid(format!(
            "crossbar size {} does not match tile size {}",
            tile_spec.crossbar_size,
            grid.m()
        )));
    }
    let replication = u64::from(adj_value_bits.max(1)).div_ceil(u64::from(tile_spec.cell_bits));
    let capacity = (tile_spec.imas_per_tile * tile_spec.crossbars_per_ima) as u64;
    Ok((grid.num_tiles() as u64 * replication).div_ceil(capacity))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{generate_synthetic, SynthKind};
    use rand::Rng;

    fn edgeless(n: usize) -> Graph {
        Graph::new(n, 1, Vec::new()).unwrap()
    }

    #[test]
    fn identity_pattern_single_tile() {
        let g = edgeless(8);
        let grid = tile_adjacency(&g, 8, true).unwrap();
        assert_eq!(grid.num_tiles(), 1);
        assert_eq!(grid.nnz(), 8);
        let zs = zero_stats(&grid);
        assert_eq!(zs.stored_zeros, 64 - 8);
    }

    #[test]
    fn identity_pattern_m2_four_tiles() {
        let g = edgeless(8);
        let grid = tile_adjacency(&g, 2, true).unwrap();
        assert_eq!(grid.num_tiles(), 4);
        assert_eq!(zero_stats(&grid).stored_zeros, 4 * 4 - 8);
    }

    #[test]
    fn edgeless_without_loops_has_no_tiles() {
        let g = edgeless(8);
        let grid = tile_adjacency(&g, 4, false).unwrap();
        assert_eq!(grid.num_tiles(), 0);
        assert_eq!(grid.nnz(), 0);
    }

    #[test]
    fn two_disjoint_edges_two_tiles() {
        // Edges (0,1) and (2,3): symmetric nonzeros land in blocks (0,0)
        // and (1,1) only at M=2. Oracle: enumerating the four blocks by
        // hand shows blocks (0,1) and (1,0) are all-zero.
        let g = Graph::new(4, 1, vec![(0, 1), (2, 3)]).unwrap();
        let grid = tile_adjacency(&g, 2, false).unwrap();
        assert_eq!(grid.num_tiles(), 2);
        let coords: Vec<(u32, u32)> = grid
            .tiles()
            .iter()
            .map(|t| (t.block_row, t.block_col))
            .collect();
        assert_eq!(coords, vec![(0, 0), (1, 1)]);
        assert_eq!(grid.nnz(), 4);
    }

    #[test]
    fn ragged_padding_counts_as_stored_zeros() {
        // 5 nodes at M=4: nonzeros in the last block row live in a padded
        // 4x4 block.
        let g = Graph::new(5, 1, vec![(4, 4)]).unwrap();
        let grid = tile_adjacency(&g, 4, false).unwrap();
        assert_eq!(grid.grid_dim(), 2);
        assert_eq!(grid.num_tiles(), 1);
        assert_eq!(zero_stats(&grid).stored_zeros, 15);
    }

    #[test]
    fn zero_tile_size_rejected() {
        let g = edgeless(4);
        assert!(tile_adjacency(&g, 0, false).is_err());
    }

    #[test]
    fn nonzero_conservation_across_tile_sizes() {
        let (g, _) = generate_synthetic(&SynthKind::Random { edge_prob: 0.05 }, 100, 1, 1).unwrap();
        for m in [1, 3, 8, 16, 128] {
            let grid = tile_adjacency(&g, m, false).unwrap();
            assert_eq!(grid.nnz(), g.nnz(false), "M={m}");
        }
        for m in [1, 8] {
            let grid = tile_adjacency(&g, m, true).unwrap();
            assert_eq!(grid.nnz(), g.nnz(true), "M={m} with loops");
        }
    }

    #[test]
    fn discard_soundness_reconstructs_adjacency() {
        let (g, _) = generate_synthetic(&SynthKind::Random { edge_prob: 0.1 }, 37, 1, 9).unwrap();
        let grid = tile_adjacency(&g, 8, false).unwrap();
        let mut dense = vec![vec![false; 37]; 37];
        for &(u, v) in g.edges() {
            dense[u as usize][v as usize] = true;
            dense[v as usize][u as usize] = true;
        }
        for r in 0..37 {
            for c in 0..37 {
                assert_eq!(grid.entry(r, c), dense[r][c], "({r},{c})");
            }
        }
    }

    #[test]
    fn zero_monotonicity_under_nested_blocking() {
        // Every nonempty M1-block lies inside a nonempty M2-block whenever
        // M1 | M2, so larger crossbars can only store more zeros.
        let mut rng = crate::seeds::rng_for(77, "zero_mono");
        for trial in 0..200 {
            let p = rng.gen_range(0.005..0.2);
            let n = rng.gen_range(32..=256);
            let seed = rng.gen::<u64>();
            let (g, _) = generate_synthetic(&SynthKind::Random { edge_prob: p }, n, 1, seed).unwrap();
            let small = zero_stats(&tile_adjacency(&g, 8, false).unwrap());
            let large = zero_stats(&tile_adjacency(&g, 128, false).unwrap());
            assert!(
                large.stored_zeros >= small.stored_zeros,
                "trial {trial}: n={n} p={p} small={} large={}",
                small.stored_zeros,
                large.stored_zeros
            );
        }
    }

    fn dense_spmv(g: &Graph, x: &Array2<i64>, self_loops: bool) -> Array2<i64> {
        let n = g.num_nodes();
        let mut adj = Array2::<i64>::zeros((n, n));
        for &(u, v) in g.edges() {
            adj[[u as usize, v as usize]] = 1;
            adj[[v as usize, u as usize]] = 1;
        }
        if self_loops {
            for i in 0..n {
                adj[[i, i]] = 1;
            }
        }
        adj.dot(x)
    }

    #[test]
    fn spmv_identity_returns_input() {
        let g = edgeless(10);
        let grid = tile_adjacency(&g, 4, true).unwrap();
        let x = Array2::from_shape_fn((10, 3), |(i, j)| (i * 3 + j) as i64 - 7);
        let y = tiled_spmv(&grid, &x).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn spmv_empty_grid_is_zero() {
        let g = edgeless(6);
        let grid = tile_adjacency(&g, 4, false).unwrap();
        let x = Array2::from_elem((6, 2), 5i64);
        let y = tiled_spmv(&grid, &x).unwrap();
        assert!(y.iter().all(|&v| v == 0));
    }

    #[test]
    fn spmv_matches_dense_oracle() {
        let mut rng = crate::seeds::rng_for(3, "spmv");
        for _ in 0..20 {
            let seed = rng.gen::<u64>();
            let (g, _) =
                generate_synthetic(&SynthKind::Random { edge_prob: 0.15 }, 64, 1, seed).unwrap();
            let x = Array2::from_shape_fn((64, 5), |_| rng.gen_range(-8i64..=8));
            for m in [3, 8, 16] {
                let grid = tile_adjacency(&g, m, false).unwrap();
                assert_eq!(tiled_spmv(&grid, &x).unwrap(), dense_spmv(&g, &x, false));
            }
        }
    }

    #[test]
    fn spmv_dimension_mismatch_rejected() {
        let g = edgeless(6);
        let grid = tile_adjacency(&g, 4, true).unwrap();
        let x = Array2::<i64>::zeros((5, 2));
        assert!(tiled_spmv(&grid, &x).is_err());
    }

    #[test]
    fn epe_requirement_capacity_arithmetic() {
        let spec = TileSpec::e_pe();
        assert_eq!(spec.imas_per_tile * spec.crossbars_per_ima, 96);

        let g = edgeless(8);
        let empty = tile_adjacency(&g, 8, false).unwrap();
        assert_eq!(epe_requirement(&empty, &spec, 1).unwrap(), 0);

        // 96 tiles -> 1 E-PE, 97 -> 2. Build a diagonal-block pattern with
        // exactly k nonempty tiles using one self-loop per block.
        for (tiles, want) in [(96usize, 1u64), (97, 2)] {
            let n = tiles * 8;
            let loops: Vec<(u32, u32)> = (0..tiles).map(|b| ((b * 8) as u32, (b * 8) as u32)).collect();
            let g = Graph::new(n, 1, loops).unwrap();
            let grid = tile_adjacency(&g, 8, false).unwrap();
            assert_eq!(grid.num_tiles(), tiles);
            assert_eq!(epe_requirement(&grid, &spec, 1).unwrap(), want);
        }
    }

    #[test]
    fn epe_requirement_rejects_size_mismatch() {
        let g = edgeless(8);
        let grid = tile_adjacency(&g, 4, true).unwrap();
        assert!(epe_requirement(&grid, &TileSpec::e_pe(), 1).is_err());
    }
}
