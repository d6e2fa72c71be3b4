//! Node-level attribution of temporal variation.
//!
//! For a pair (t, s) with node displacements `Δ_i = Ŷ_i(t) − Ŷ_i(s)`:
//!
//! * trace variation: `a_i = ‖Δ_i‖²/n`, and `Σ_i a_i = d̂_TV²`;
//! * mode k: `a_i = ⟨Δ_i, û_k⟩/√n` (signed), and `Σ_i a_i² = d̂_k²`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::embedding::EmbeddingSeries;
use crate::error::{Error, Result};
use crate::geometry::{displacement_second_moment, mv_distance, Metric, ModeBasis};
use crate::trajectory::Trajectory;

/// Rows `Δ_i = Ŷ_i(t) − Ŷ_i(s)` for 0-based times.
pub fn node_displacements(y: &EmbeddingSeries, t: usize, s: usize) -> Result<DMatrix<f64>> {
    let horizon = y.horizon();
    if t >= horizon || s >= horizon {
        return Err(Error::OutOfRange(format!(
            "pair ({t}, {s}) with horizon {horizon}"
        )));
    }
    Ok(y.block(t) - y.block(s))
}

/// Per-node contributions to one distance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttributionTable {
    /// 0-based time pair.
    pub pair: (usize, usize),
    pub metric: Metric,
    pub values: Vec<f64>,
    pub node_ids: Vec<String>,
}

impl AttributionTable {
    pub fn with_node_ids(mut self, ids: &[String]) -> Result<Self> {
        if ids.len() != self.values.len() {
            return Err(Error::Validation(format!(
                "{} node ids for {} nodes",
                ids.len(),
                self.values.len()
            )));
        }
        self.node_ids = ids.to_vec();
        Ok(self)
    }

    /// Squared distance implied by the table.
    pub fn squared_distance(&self) -> f64 {
        match self.metric {
            Metric::Mode(_) => self.values.iter().map(|a| a * a).sum(),
            _ => self.values.iter().sum(),
        }
    }

    /// Node indices ordered by decreasing |a_i|, ties by index.
    pub fn order_by_magnitude(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.values.len()).collect();
        idx.sort_by(|&a, &b| self.values[b].abs().total_cmp(&self.values[a].abs()));
        idx
    }
}

/// Attribution table for the trace or a mode-wise distance.
pub fn attribute(
    y: &EmbeddingSeries,
    t: usize,
    s: usize,
    metric: Metric,
    basis: Option<&ModeBasis>,
) -> Result<AttributionTable> {
    let delta = node_displacements(y, t, s)?;
    let n = y.n() as f64;
    let values: Vec<f64> = match metric {
        Metric::Tv => delta.row_iter().map(|r| r.norm_squared() / n).collect(),
        Metric::Mode(k) => {
            let basis = basis.ok_or(Error::MissingBasis)?;
            if k >= basis.dim() || basis.dim() != y.dim() {
                return Err(Error::OutOfRange(format!(
                    "mode {} of a {}-dimensional basis for {}-dimensional embeddings",
                    k + 1,
                    basis.dim(),
                    y.dim()
                )));
            }
            let u = basis.vector(k);
            let scale = n.sqrt();
            delta
                .row_iter()
                .map(|r| r.dot(&u.transpose()) / scale)
                .collect()
        }
        Metric::Mv => {
            return Err(Error::Unsupported(
                "maximum directional variation has no per-node table; use the sandwich check"
                    .into(),
            ))
        }
    };
    Ok(AttributionTable {
        pair: (t, s),
        metric,
        node_ids: (0..values.len()).map(|i| i.to_string()).collect(),
        values,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeScore {
    pub index: usize,
    pub node: String,
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopKReport {
    pub pair: (usize, usize),
    pub metric: Metric,
    /// K largest signed values, decreasing.
    #[serde(rename = "topK")]
    pub top: Vec<NodeScore>,
    /// K smallest signed values, increasing.
    #[serde(rename = "bottomK")]
    pub bottom: Vec<NodeScore>,
}

/// The K largest and K smallest signed attributions, ties broken by node index.
pub fn top_k_report(table: &AttributionTable, k: usize) -> TopKReport {
    let v = &table.values;
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[b].total_cmp(&v[a]).then(a.cmp(&b)));
    let pick = |i: usize| NodeScore {
        index: i,
        node: table.node_ids[i].clone(),
        score: v[i],
    };
    let top = idx.iter().take(k).map(|&i| pick(i)).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]).then(a.cmp(&b)));
    let bottom = idx.iter().take(k).map(|&i| pick(i)).collect();
    TopKReport {
        pair: table.pair,
        metric: table.metric,
        top,
        bottom,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairResidual {
    pub t: usize,
    pub s: usize,
    /// ‖ψ(t) − ψ(s)‖².
    pub trajectory: f64,
    /// Node-level average for the metric, i.e. d̂(t,s)².
    pub node_term: f64,
    pub residual: f64,
    pub holds: bool,
}

/// Pairwise and aggregated node-to-trajectory bounds for one trajectory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub metric: Metric,
    pub c: usize,
    /// `2 (Σ_{i>c} λ_i(Ê)²)^{1/2}`.
    pub bound: f64,
    pub pairs: Vec<PairResidual>,
    pub max_residual: f64,
    /// Smallest `bound − residual` over pairs.
    pub min_slack: f64,
    /// `Σ_{t<s} residual²`.
    pub aggregated: f64,
    /// `4 (T − 1) Σ_{i>c} λ_i(Ê)²`.
    pub aggregated_bound: f64,
    pub aggregated_holds: bool,
    pub all_hold: bool,
}

/// Rounding allowance relative to the largest node term.
const BOUND_ROUNDING: f64 = 1e-10;

fn node_term(
    y: &EmbeddingSeries,
    t: usize,
    s: usize,
    metric: Metric,
    basis: Option<&ModeBasis>,
) -> Result<f64> {
    match metric {
        Metric::Mv => {
            let m = displacement_second_moment(y, t, s)?;
            Ok(mv_distance(&m).powi(2))
        }
        _ => Ok(attribute(y, t, s, metric, basis)?.squared_distance()),
    }
}

/// Compares `‖ψ(t) − ψ(s)‖²` with the node-level average for every pair.
///
/// The tail sum runs over the Gram eigenvalues beyond the first `traj.dim()`.
pub fn pairwise_bound_check(
    traj: &Trajectory,
    y: &EmbeddingSeries,
    metric: Metric,
    basis: Option<&ModeBasis>,
) -> Result<BoundReport> {
    let horizon = y.horizon();
    if traj.horizon() != horizon {
        return Err(Error::Validation(format!(
            "trajectory has {} points for a series of {horizon}",
            traj.horizon()
        )));
    }
    let c = traj.dim();
    let tail: f64 = traj.spectrum.iter().skip(c).map(|l| l * l).sum();
    let bound = 2.0 * tail.sqrt();
    let mut pairs = Vec::new();
    for t in 0..horizon {
        for s in (t + 1)..horizon {
            let node = node_term(y, t, s, metric, basis)?;
            let tr = traj.distance(t, s).powi(2);
            pairs.push(PairResidual {
                t,
                s,
                trajectory: tr,
                node_term: node,
                residual: (tr - node).abs(),
                holds: false,
            });
        }
    }
    let scale = pairs
        .iter()
        .map(|p| p.node_term)
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    let allowance = BOUND_ROUNDING * scale;
    for p in &mut pairs {
        p.holds = p.residual <= bound + allowance;
    }
    let max_residual = pairs.iter().map(|p| p.residual).fold(0.0, f64::max);
    let min_slack = pairs
        .iter()
        .map(|p| bound - p.residual)
        .fold(f64::INFINITY, f64::min);
    let aggregated: f64 = pairs.iter().map(|p| p.residual * p.residual).sum();
    let aggregated_bound = 4.0 * (horizon as f64 - 1.0) * tail;
    let aggregated_holds =
        aggregated <= aggregated_bound + allowance * allowance * pairs.len() as f64;
    Ok(BoundReport {
        metric,
        c,
        bound,
        all_hold: pairs.iter().all(|p| p.holds),
        pairs,
        max_residual,
        min_slack: if min_slack.is_finite() {
            min_slack
        } else {
            bound
        },
        aggregated,
        aggregated_bound,
        aggregated_holds,
    })
}

/// Two-sided check for trajectories of the maximum directional variation:
/// `(1/(nd)) Σ‖Δ_i‖² − ρ ≤ ‖ψ(t) − ψ(s)‖² ≤ (1/n) Σ‖Δ_i‖² + ρ` with
/// `ρ = 2 (Σ_{i>c} λ_i(Ê)²)^{1/2}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SandwichReport {
    pub c: usize,
    pub rho: f64,
    /// (t, s, lower, trajectory, upper).
    pub pairs: Vec<(usize, usize, f64, f64, f64)>,
    pub all_hold: bool,
}

pub fn mv_sandwich_check(traj: &Trajectory, y: &EmbeddingSeries) -> Result<SandwichReport> {
    let horizon = y.horizon();
    if traj.horizon() != horizon {
        return Err(Error::Validation(
            "trajectory and series horizons differ".into(),
        ));
    }
    let c = traj.dim();
    let rho = 2.0
        * traj
            .spectrum
            .iter()
            .skip(c)
            .map(|l| l * l)
            .sum::<f64>()
            .sqrt();
    let d = y.dim() as f64;
    let mut pairs = Vec::new();
    let mut all_hold = true;
    for t in 0..horizon {
        for s in (t + 1)..horizon {
            let tv2 = displacement_second_moment(y, t, s)?.trace().max(0.0);
            let tr = traj.distance(t, s).powi(2);
            let lower = tv2 / d - rho;
            let upper = tv2 + rho;
            let tol = BOUND_ROUNDING * tv2.max(f64::MIN_POSITIVE);
            all_hold &= tr >= lower - tol && tr <= upper + tol;
            pairs.push((t, s, lower, tr, upper));
        }
    }
    Ok(SandwichReport {
        c,
        rho,
        pairs,
        all_hold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::Flavor;
    use crate::geometry::{distance_matrix, tv_distance};
    use crate::trajectory::cmds_distances;

    fn series() -> EmbeddingSeries {
        EmbeddingSeries::new(
            vec![
                DMatrix::from_row_slice(3, 2, &[1., 0., 0., 1., 1., 1.]),
                DMatrix::from_row_slice(3, 2, &[2., 0., 0., 3., 0., 1.]),
                DMatrix::from_row_slice(3, 2, &[0., 1., 1., 1., 2., 2.]),
            ],
            Flavor::Modified,
        )
        .unwrap()
    }

    #[test]
    fn displacements_and_trace_identity() {
        let y = series();
        assert_eq!(node_displacements(&y, 1, 1).unwrap(), DMatrix::zeros(3, 2));
        let delta = node_displacements(&y, 0, 1).unwrap();
        assert_eq!(delta, y.block(0) - y.block(1));
        let table = attribute(&y, 0, 1, Metric::Tv, None).unwrap();
        let m = displacement_second_moment(&y, 0, 1).unwrap();
        assert!((table.squared_distance() - m.trace()).abs() < 1e-12);
        assert!((table.squared_distance() - tv_distance(&m).powi(2)).abs() < 1e-12);
    }

    #[test]
    fn uniform_displacement_gives_uniform_attribution() {
        let base = DMatrix::from_row_slice(4, 2, &[1., 2., 3., 4., 5., 6., 7., 8.]);
        let shift = DMatrix::from_fn(4, 2, |_, j| [0.3, -0.4][j]);
        let y = EmbeddingSeries::new(vec![base.clone(), base + shift], Flavor::Modified).unwrap();
        let table = attribute(&y, 1, 0, Metric::Tv, None).unwrap();
        for v in &table.values {
            assert!((v - 0.25 / 4.0).abs() < 1e-15);
        }
    }

    #[test]
    fn mode_metric_needs_basis() {
        let y = series();
        assert!(matches!(
            attribute(&y, 0, 1, Metric::Mode(0), None),
            Err(Error::MissingBasis)
        ));
        assert!(matches!(
            attribute(&y, 0, 1, Metric::Mv, None),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn top_k_examples() {
        let table = AttributionTable {
            pair: (0, 1),
            metric: Metric::Mode(0),
            values: vec![0.0, 0.0, 0.0, 0.0],
            node_ids: vec!["a".into(), "b".into(), "c".into(), "d".into()],
        };
        let r = top_k_report(&table, 0);
        assert!(r.top.is_empty() && r.bottom.is_empty());
        let r = top_k_report(&table, 2);
        assert_eq!(
            r.top.iter().map(|n| n.index).collect::<Vec<_>>(),
            vec![0, 1]
        );
        assert_eq!(
            r.bottom.iter().map(|n| n.index).collect::<Vec<_>>(),
            vec![0, 1]
        );

        let mut signed = table.clone();
        signed.values = vec![0.1, -0.5, 0.9, 0.2];
        let r = top_k_report(&signed, 1);
        assert_eq!(r.top[0].node, "c");
        assert_eq!(r.bottom[0].node, "b");
    }

    #[test]
    fn full_rank_bound_is_tight() {
        let y = series();
        let d = distance_matrix(&y, Metric::Tv, None).unwrap();
        let traj = cmds_distances(&d, 3).unwrap();
        let report = pairwise_bound_check(&traj, &y, Metric::Tv, None).unwrap();
        assert!(report.all_hold && report.aggregated_holds);
        assert!(report.max_residual < 1e-8);
        assert!(report.bound < 1e-8);
    }

    #[test]
    fn mv_sandwich_holds_on_small_example() {
        let y = series();
        let d = distance_matrix(&y, Metric::Mv, None).unwrap();
        for c in 1..=2 {
            let traj = cmds_distances(&d, c).unwrap();
            assert!(mv_sandwich_check(&traj, &y).unwrap().all_hold);
            assert!(
                pairwise_bound_check(&traj, &y, Metric::Mv, None)
                    .unwrap()
                    .all_hold
            );
        }
    }
}
