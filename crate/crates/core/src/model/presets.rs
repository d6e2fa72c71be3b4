//! The two three-community synthetic presets.
//!
//! Both use `χ = √3·e_c` with c uniform, `φ(t) = B(t)χ/3`, and the mode basis
//! u₁ = (1,1,1)/√3 (overall connectivity), u₂ = (1,1,−2)/√6 (community 3
//! against 1 and 2), u₃ = (1,−1,0)/√2 (community 1 against 2).
//!
//! Only the change locations and orders are fixed by the benchmark design;
//! the magnitudes below are our own choice. They keep every B(t) entry in
//! [0, 1] and give the modes well separated total variation, in the order
//! recorded by `mode_order`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{AnchorDistribution, LatentModel, PlantedChange};
use crate::changepoint::Order;
use crate::error::{Error, Result};

pub const DATASET1_HORIZON: usize = 16;
pub const DATASET2_HORIZON: usize = 70;

/// Dataset 1, mode 1 (u₁): flat level, slope change at t = 4.
pub const D1_GLOBAL_BASE: f64 = 0.30;
pub const D1_GLOBAL_SLOPE: f64 = 0.05;
pub const D1_GLOBAL_KINK: usize = 4;
/// Dataset 1, mode 2 (u₂): level jump at t = 9.
pub const D1_SPLIT3_LEVELS: [f64; 2] = [0.10, 0.40];
pub const D1_SPLIT3_JUMP: usize = 9;
/// Dataset 1, mode 3 (u₃): level jump at t = 13.
pub const D1_SPLIT12_LEVELS: [f64; 2] = [0.05, 0.30];
pub const D1_SPLIT12_JUMP: usize = 13;

/// Dataset 2, u₁ (mode 3): descent that stops at 11, level drop at 41.
pub const D2_GLOBAL_BASE: f64 = 0.90;
pub const D2_GLOBAL_DESCENT: f64 = 0.04;
pub const D2_GLOBAL_KINK: usize = 11;
pub const D2_GLOBAL_DROP: f64 = 0.08;
pub const D2_GLOBAL_JUMP: usize = 41;
/// Dataset 2, u₂ (mode 2): level drop at 21, ramp from 51.
pub const D2_SPLIT3_LEVELS: [f64; 2] = [0.40, 0.15];
pub const D2_SPLIT3_JUMP: usize = 21;
pub const D2_SPLIT3_SLOPE: f64 = 0.035;
pub const D2_SPLIT3_KINK: usize = 51;
/// Dataset 2, u₃ (mode 1): level jumps at 31 and 61.
pub const D2_SPLIT12_LEVELS: [f64; 3] = [0.00, 0.50, 0.10];
pub const D2_SPLIT12_JUMPS: [usize; 2] = [31, 61];

pub(crate) fn community_mode_basis() -> DMatrix<f64> {
    let s3 = 3f64.sqrt();
    let s6 = 6f64.sqrt();
    let s2 = 2f64.sqrt();
    DMatrix::from_column_slice(
        3,
        3,
        &[
            1.0 / s3,
            1.0 / s3,
            1.0 / s3, //
            1.0 / s6,
            1.0 / s6,
            -2.0 / s6, //
            1.0 / s2,
            -1.0 / s2,
            0.0,
        ],
    )
}

fn community_model(name: &str, strengths: Vec<Vec<f64>>) -> LatentModel {
    LatentModel::new(
        name,
        community_mode_basis(),
        strengths,
        AnchorDistribution::CommunityAtoms { scale: 3f64.sqrt() },
        1.0 / 3.0,
    )
    .expect("preset strengths are valid")
}

/// ramp(t) = max(t − knot, 0) for 1-based t.
fn ramp(t: usize, knot: usize) -> f64 {
    t.saturating_sub(knot) as f64
}

fn step(t: usize, at: usize) -> bool {
    t >= at
}

/// Dataset 1: T = 16, one change per mode.
pub fn dataset1_spec() -> LatentModel {
    let times = 1..=DATASET1_HORIZON;
    let global = times
        .clone()
        .map(|t| D1_GLOBAL_BASE + D1_GLOBAL_SLOPE * ramp(t, D1_GLOBAL_KINK))
        .collect();
    let split3 = times
        .clone()
        .map(|t| D1_SPLIT3_LEVELS[step(t, D1_SPLIT3_JUMP) as usize])
        .collect();
    let split12 = times
        .map(|t| D1_SPLIT12_LEVELS[step(t, D1_SPLIT12_JUMP) as usize])
        .collect();
    community_model("dataset1", vec![global, split3, split12])
        .with_events(vec![
            PlantedChange {
                basis: 0,
                time: D1_GLOBAL_KINK,
                order: Order::Slope,
            },
            PlantedChange {
                basis: 1,
                time: D1_SPLIT3_JUMP,
                order: Order::Level,
            },
            PlantedChange {
                basis: 2,
                time: D1_SPLIT12_JUMP,
                order: Order::Level,
            },
        ])
        .and_then(|m| m.with_mode_order(vec![0, 1, 2]))
        .expect("preset events are valid")
}

/// Dataset 2: T = 70, two changes per mode, modes permuted against the basis.
pub fn dataset2_spec() -> LatentModel {
    let times = 1..=DATASET2_HORIZON;
    let global = times
        .clone()
        .map(|t| {
            D2_GLOBAL_BASE + D2_GLOBAL_DESCENT * D2_GLOBAL_KINK.saturating_sub(t) as f64
                - if step(t, D2_GLOBAL_JUMP) {
                    D2_GLOBAL_DROP
                } else {
                    0.0
                }
        })
        .collect();
    let split3 = times
        .clone()
        .map(|t| {
            D2_SPLIT3_LEVELS[step(t, D2_SPLIT3_JUMP) as usize]
                + D2_SPLIT3_SLOPE * ramp(t, D2_SPLIT3_KINK)
        })
        .collect();
    let split12 = times
        .map(|t| {
            let regime = D2_SPLIT12_JUMPS.iter().filter(|&&j| t >= j).count();
            D2_SPLIT12_LEVELS[regime]
        })
        .collect();
    community_model("dataset2", vec![global, split3, split12])
        .with_events(vec![
            PlantedChange {
                basis: 0,
                time: D2_GLOBAL_KINK,
                order: Order::Slope,
            },
            PlantedChange {
                basis: 0,
                time: D2_GLOBAL_JUMP,
                order: Order::Level,
            },
            PlantedChange {
                basis: 1,
                time: D2_SPLIT3_JUMP,
                order: Order::Level,
            },
            PlantedChange {
                basis: 1,
                time: D2_SPLIT3_KINK,
                order: Order::Slope,
            },
            PlantedChange {
                basis: 2,
                time: D2_SPLIT12_JUMPS[0],
                order: Order::Level,
            },
            PlantedChange {
                basis: 2,
                time: D2_SPLIT12_JUMPS[1],
                order: Order::Level,
            },
        ])
        .and_then(|m| m.with_mode_order(vec![2, 1, 0]))
        .expect("preset events are valid")
}

pub fn preset_by_name(name: &str) -> Result<LatentModel> {
    match name {
        "dataset1" => Ok(dataset1_spec()),
        "dataset2" => Ok(dataset2_spec()),
        other => Err(Error::Validation(format!(
            "unknown preset `{other}` (expected dataset1 or dataset2)"
        ))),
    }
}

/// Serializable description of a preset's strength curves and basis.
///
/// Schema: `basis[k]` is the k-th basis vector, `strengths[k][t-1]` is
/// ξ_k(t), `mode_order[r]` is the basis index of the r-th mode by variation,
/// and every event gives a 0-based `basis` index, a 1-based `time` and an
/// `order` of `"level"` (0th) or `"slope"` (1st).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PresetExport {
    pub name: String,
    pub dim: usize,
    pub horizon: usize,
    pub block_scale: f64,
    pub basis: Vec<Vec<f64>>,
    pub strengths: Vec<Vec<f64>>,
    pub mode_order: Vec<usize>,
    pub events: Vec<PlantedChange>,
}

impl PresetExport {
    pub fn from_model(model: &LatentModel) -> Self {
        Self {
            name: model.name().to_string(),
            dim: model.dim(),
            horizon: model.horizon(),
            block_scale: model.block_scale(),
            basis: (0..model.dim())
                .map(|k| model.basis().column(k).iter().copied().collect())
                .collect(),
            strengths: model.strengths().to_vec(),
            mode_order: model.mode_order().to_vec(),
            events: model.events().to_vec(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dataset1_shape() {
        let m = dataset1_spec();
        assert_eq!(m.horizon(), 16);
        assert_eq!(m.dim(), 3);
        assert_eq!(m.change_times(), vec![4, 9, 13]);
        assert_eq!(m.mode_events(0)[0].order, Order::Slope);
        assert_eq!(m.mode_events(1)[0].order, Order::Level);
        assert_eq!(m.mode_events(2)[0].time, 13);
    }

    #[test]
    fn dataset2_shape() {
        let m = dataset2_spec();
        assert_eq!(m.horizon(), 70);
        assert_eq!(m.change_times(), vec![11, 21, 31, 41, 51, 61]);
        assert_eq!(m.mode_order(), &[2, 1, 0]);
        let mode1: Vec<_> = m.mode_events(0).iter().map(|e| (e.time, e.order)).collect();
        assert_eq!(mode1, vec![(31, Order::Level), (61, Order::Level)]);
        let mode2: Vec<_> = m.mode_events(1).iter().map(|e| (e.time, e.order)).collect();
        assert_eq!(mode2, vec![(21, Order::Level), (51, Order::Slope)]);
        let mode3: Vec<_> = m.mode_events(2).iter().map(|e| (e.time, e.order)).collect();
        assert_eq!(mode3, vec![(11, Order::Slope), (41, Order::Level)]);
    }

    #[test]
    fn presets_are_valid_probabilities_at_every_time() {
        for m in [dataset1_spec(), dataset2_spec()] {
            m.validate_block_probabilities().unwrap();
            for t in 0..m.horizon() {
                assert!(m.block_matrix(t).iter().all(|&p| (0.0..=1.0).contains(&p)));
            }
        }
    }

    #[test]
    fn planted_orders_match_curves() {
        // a level change moves ξ at t, a slope change moves its first difference
        for m in [dataset1_spec(), dataset2_spec()] {
            for e in m.events() {
                let xi = &m.strengths()[e.basis];
                let t = e.time - 1;
                match e.order {
                    Order::Level => assert!((xi[t] - xi[t - 1]).abs() > 0.05),
                    Order::Slope => {
                        let before = xi[t] - xi[t - 1];
                        let after = xi[t + 1] - xi[t];
                        assert!((after - before).abs() > 1e-3);
                        assert!(
                            before.abs() < 1e-12
                                || after.abs() < 1e-12
                                || (before - after).abs() > 1e-3
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn export_round_trips_through_json() {
        let e = PresetExport::from_model(&dataset2_spec());
        let back: PresetExport = serde_json::from_str(&e.to_json().unwrap()).unwrap();
        assert_eq!(back, e);
    }
}
