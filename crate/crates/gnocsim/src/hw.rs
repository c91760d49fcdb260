//! Deterministic latency/energy model of the ReRAM processing-element tiles.
//!
//! ReRAM arrays execute in order with deterministic instruction latencies,
//! so stage compute times reduce to closed-form arithmetic: activations
//! stream bit-serially through 1-bit DACs, one logical M-wide crossbar
//! operation per `input_bits` cycles, and a stage's allocated logical units
//! work in parallel.
//!
//! The energy constants are editable configuration defaults, not ground
//! truth; they exist so that energy and EDP reports have sane magnitudes.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::workload::StageWork;

/// Geometry and timing of one ReRAM tile kind (V-PE or E-PE).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TileSpec {
    /// Crossbar edge length M (128 for V-PEs, 8 for E-PEs).
    pub crossbar_size: usize,
    pub crossbars_per_ima: usize,
    pub imas_per_tile: usize,
    pub frequency_hz: f64,
    /// Bits stored per ReRAM cell.
    pub cell_bits: u32,
    pub adc_bits: u32,
    pub dac_bits: u32,
    /// Activation bit width, streamed bit-serially.
    #[serde(default = "default_value_bits")]
    pub input_bits: u32,
    /// Weight value width; determines crossbar replication for bit slicing.
    #[serde(default = "default_value_bits")]
    pub weight_bits: u32,
    /// Extra cycles charged per logical op (0 = peripherals hidden under
    /// the crossbar pipeline).
    #[serde(default)]
    pub op_overhead_cycles: u64,
}

fn default_value_bits() -> u32 {
    16
}

impl TileSpec {
    /// 128x128 crossbars, 8 per IMA, 12 IMAs, 10 MHz, 2-bit cells,
    /// 8-bit ADCs, 1-bit DACs.
    pub fn v_pe() -> Self {
        TileSpec {
            crossbar_size: 128,
            crossbars_per_ima: 8,
            imas_per_tile: 12,
            frequency_hz: 10.0e6,
            cell_bits: 2,
            adc_bits: 8,
            dac_bits: 1,
            input_bits: 16,
            weight_bits: 16,
            op_overhead_cycles: 0,
        }
    }

    /// 8x8 crossbars, 8 per IMA, 12 IMAs, 10 MHz, 2-bit cells,
    /// 6-bit ADCs, 1-bit DACs.
    pub fn e_pe() -> Self {
        TileSpec {
            crossbar_size: 8,
            adc_bits: 6,
            ..TileSpec::v_pe()
        }
    }

    /// Physical crossbars in one tile.
    pub fn tile_crossbars(&self) -> u64 {
        (self.imas_per_tile * self.crossbars_per_ima) as u64
    }

    /// Seconds per logical M-wide crossbar operation.
    pub fn op_seconds(&self) -> f64 {
        (u64::from(self.input_bits) + self.op_overhead_cycles) as f64 / self.frequency_hz
    }

    pub fn validate(&self) -> Result<()> {
        if self.crossbar_size == 0
            || self.crossbars_per_ima == 0
            || self.imas_per_tile == 0
            || self.cell_bits == 0
            || self.adc_bits == 0
            || self.dac_bits == 0
            || self.input_bits == 0
            || self.weight_bits == 0
        {
            return Err(SimError::config("tile spec counts must all be >= 1"));
        }
        if !(self.frequency_hz > 0.0) {
            return Err(SimError::config("tile frequency must be positive"));
        }
        Ok(())
    }
}

/// Energy constants, joules per event. Defaults are config values tuned for
/// plausible magnitudes only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnergyParams {
    /// Per M-wide crossbar operation.
    pub e_xbar_op: f64,
    /// Per ADC conversion.
    pub e_adc: f64,
    /// Per DAC bit conversion.
    pub e_dac: f64,
    /// Per flit per router traversal.
    pub e_router_hop: f64,
    /// Per flit per mesh-link traversal.
    pub e_link_hop: f64,
    /// Per ReRAM cell write.
    pub e_write_cell: f64,
}

impl Default for EnergyParams {
    fn default() -> Self {
        EnergyParams {
            e_xbar_op: 1.0e-10,
            e_adc: 2.0e-12,
            e_dac: 1.0e-12,
            e_router_hop: 5.0e-12,
            e_link_hop: 2.0e-12,
            e_write_cell: 1.0e-11,
        }
    }
}

impl EnergyParams {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.e_xbar_op,
            self.e_adc,
            self.e_dac,
            self.e_router_hop,
            self.e_link_hop,
            self.e_write_cell,
        ];
        if all.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(SimError::config("energy constants must be >= 0"));
        }
        Ok(())
    }
}

/// Physical crossbars needed to hold one `d_in x d_out` weight matrix:
/// `ceil(d_in/M) * ceil(d_out/M)` blocks, each replicated over
/// `ceil(weight_bits / cell_bits)` bit-slice crossbars.
pub fn crossbars_needed(d_in: usize, d_out: usize, spec: &TileSpec) -> u64 {
    let m = spec.crossbar_size as u64;
    let blocks = (d_in as u64).div_ceil(m) * (d_out as u64).div_ceil(m);
    blocks * u64::from(spec.weight_bits).div_ceil(u64::from(spec.cell_bits))
}

/// Stage compute latency: `ceil(logical_ops / alloc_units)` sequential
/// logical operations, each taking `input_bits` (plus overhead) cycles.
pub fn compute_time(work: &StageWork, alloc_units: u64, spec: &TileSpec) -> f64 {
    if work.logical_ops == 0 {
        return 0.0;
    }
    let units = alloc_units.max(1);
    work.logical_ops.div_ceil(units) as f64 * spec.op_seconds()
}

/// Stage compute energy:
/// `logical_ops * (e_xbar_op + input_bits * dac_count * e_dac + adc_count * e_adc)`
/// with `dac_count = adc_count = crossbar_size` (one DAC per input row,
/// one output conversion per column).
pub fn compute_energy(work: &StageWork, spec: &TileSpec, ep: &EnergyParams) -> f64 {
    let m = spec.crossbar_size as f64;
    let per_op = ep.e_xbar_op + f64::from(spec.input_bits) * m * ep.e_dac + m * ep.e_adc;
    work.logical_ops as f64 * per_op
}

/// Resources granted to one stage: its tiles and how many logical M x M
/// crossbar groups operate in parallel across them.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageAllocation {
    pub tiles: Vec<usize>,
    pub logical_units: u64,
}

/// Per-stage allocation, indexed by stage id.
pub type Allocation = Vec<StageAllocation>;

/// Parallel logical units available to a stage holding `groups_per_copy`
/// logical crossbar groups (each `replication` physical crossbars wide) on
/// `tiles_assigned` tiles. At least one copy of the operand always fits by
/// construction of the tile assignment.
pub fn logical_units(
    groups_per_copy: u64,
    replication: u64,
    tiles_assigned: usize,
    spec: &TileSpec,
) -> u64 {
    if groups_per_copy == 0 {
        return 1;
    }
    let total = tiles_assigned as u64 * spec.tile_crossbars();
    let per_copy = groups_per_copy * replication.max(1);
    let copies = (total / per_copy).max(1);
    copies * groups_per_copy
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn work(ops: u64) -> StageWork {
        StageWork {
            macs: 0,
            logical_ops: ops,
            output_bits: 0,
            consumer_bits: BTreeMap::new(),
        }
    }

    #[test]
    fn one_weight_matrix_fills_one_ima() {
        // 128x128 weights at 16-bit values on 2-bit cells: the replication
        // factor is 8, one IMA's worth of crossbars.
        let spec = TileSpec::v_pe();
        assert_eq!(crossbars_needed(128, 128, &spec), 8);
        assert_eq!(crossbars_needed(129, 128, &spec), 16);
    }

    #[test]
    fn binary_adjacency_tile_is_one_crossbar() {
        let mut spec = TileSpec::e_pe();
        spec.weight_bits = 1;
        assert_eq!(crossbars_needed(8, 8, &spec), 1);
    }

    #[test]
    fn op_time_is_sixteen_cycles_at_ten_megahertz() {
        let spec = TileSpec::v_pe();
        let t = compute_time(&work(1), 1, &spec);
        assert!((t - 1.6e-6).abs() < 1e-18, "{t}");
    }

    #[test]
    fn ops_divide_across_units_with_ceiling() {
        let spec = TileSpec::v_pe();
        let t = compute_time(&work(10), 4, &spec);
        assert!((t - 3.0 * 1.6e-6).abs() < 1e-15);
        assert_eq!(compute_time(&work(0), 4, &spec), 0.0);
    }

    #[test]
    fn compute_time_inverse_in_units_up_to_ceiling() {
        let spec = TileSpec::v_pe();
        let mut last = f64::INFINITY;
        for units in 1..=64 {
            let t = compute_time(&work(1000), units, &spec);
            assert!(t <= last);
            last = t;
            // time * frequency is an integer multiple of input_bits.
            let cycles = t * spec.frequency_hz;
            let per = f64::from(spec.input_bits);
            assert!((cycles / per - (cycles / per).round()).abs() < 1e-9);
        }
    }

    #[test]
    fn energy_is_linear_in_ops() {
        let spec = TileSpec::e_pe();
        let ep = EnergyParams::default();
        assert_eq!(compute_energy(&work(0), &spec, &ep), 0.0);
        let one = compute_energy(&work(1), &spec, &ep);
        let two = compute_energy(&work(2), &spec, &ep);
        assert!((two - 2.0 * one).abs() < 1e-24);
    }

    #[test]
    fn single_op_energy_matches_hand_sum() {
        // Hand-computed with the default constants and M = 8:
        // e_xbar_op + 16 * 8 * e_dac + 8 * e_adc.
        let spec = TileSpec::e_pe();
        let ep = EnergyParams::default();
        let expected = 1.0e-10 + 16.0 * 8.0 * 1.0e-12 + 8.0 * 2.0e-12;
        let got = compute_energy(&work(1), &spec, &ep);
        assert!((got - expected).abs() < 1e-24, "got {got} want {expected}");
    }

    #[test]
    fn logical_units_scale_with_spare_crossbars() {
        let spec = TileSpec::v_pe();
        // One 8-crossbar weight copy on a 96-crossbar tile: 12 copies.
        assert_eq!(logical_units(1, 8, 1, &spec), 12);
        // Two tiles double the copies.
        assert_eq!(logical_units(1, 8, 2, &spec), 24);
        // A grid of 50 adjacency tiles on one 96-crossbar E tile: one copy.
        let e = TileSpec::e_pe();
        assert_eq!(logical_units(50, 1, 1, &e), 50);
    }

    #[test]
    fn validation_rejects_zero_fields() {
        let mut spec = TileSpec::v_pe();
        spec.cell_bits = 0;
        assert!(spec.validate().is_err());
        let mut ep = EnergyParams::default();
        ep.e_adc = -1.0;
        assert!(ep.validate().is_err());
    }
}
