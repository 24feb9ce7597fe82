//! PageRank-centrality sensor placement.
//!
//! Junctions that a damped random walk visits least often are the hardest to
//! infer from their neighbours, so the `s` lowest-ranked junctions receive the
//! sensors.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::GraphTopology;
use crate::network::JunctionIndex;

pub const DEFAULT_ALPHA: f64 = 0.85;
pub const DEFAULT_EPSILON: f64 = 1e-10;
pub const MAX_ITERATIONS: usize = 100_000;

/// Scores closer than this are treated as tied and ordered by junction index.
const TIE_QUANTUM: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlacementError {
    #[error("node {0} is isolated (degree 0)")]
    IsolatedNode(usize),
    #[error("PageRank did not converge within {0} iterations")]
    NonConvergence(usize),
    #[error("sensor count {s} outside 1..={n}")]
    InvalidSensorCount { s: usize, n: usize },
    #[error("junction index {index} out of range for {n} junctions")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("junction index {0} listed more than once")]
    DuplicateIndex(usize),
    #[error("unknown junction label {0}")]
    UnknownLabel(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PageRankResult {
    pub scores: Vec<f64>,
    pub alpha: f64,
    pub epsilon: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlacementMethod {
    Pagerank,
    Arbitrary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensorPlacement {
    /// Instrumented junction indices in selection order.
    pub sensors: Vec<usize>,
    pub mask: Vec<u8>,
    pub method: PlacementMethod,
    pub pagerank: Option<PageRankResult>,
}

impl SensorPlacement {
    pub fn len(&self) -> usize {
        self.sensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sensors.is_empty()
    }

    pub fn mask_f64(&self) -> Vec<f64> {
        self.mask.iter().map(|&m| m as f64).collect()
    }

    pub fn is_sensed(&self, i: usize) -> bool {
        self.mask[i] == 1
    }

    pub fn report(&self, index: &JunctionIndex) -> PlacementReport {
        PlacementReport {
            method: self.method,
            alpha: self.pagerank.as_ref().map(|p| p.alpha),
            epsilon: self.pagerank.as_ref().map(|p| p.epsilon),
            scores: self
                .pagerank
                .as_ref()
                .map(|p| {
                    p.scores
                        .iter()
                        .enumerate()
                        .map(|(i, &p)| LabeledScore {
                            label: index.label(i).to_string(),
                            p,
                        })
                        .collect()
                })
                .unwrap_or_default(),
            sensors: self.sensors.iter().map(|&i| index.label(i).to_string()).collect(),
        }
    }
}

/// Placement file contents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacementReport {
    pub method: PlacementMethod,
    pub alpha: Option<f64>,
    pub epsilon: Option<f64>,
    pub scores: Vec<LabeledScore>,
    pub sensors: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledScore {
    pub label: String,
    pub p: f64,
}

impl PlacementReport {
    /// Rebuilds the placement against a junction index.
    pub fn to_placement(&self, index: &JunctionIndex) -> Result<SensorPlacement, PlacementError> {
        let sensors = self
            .sensors
            .iter()
            .map(|l| index.index_of(l).ok_or_else(|| PlacementError::UnknownLabel(l.clone())))
            .collect::<Result<Vec<_>, _>>()?;
        let mut placement = build(index.len(), sensors, self.method)?;
        if let (Some(alpha), Some(epsilon)) = (self.alpha, self.epsilon) {
            let mut scores = vec![0.0; index.len()];
            for s in &self.scores {
                let i = index
                    .index_of(&s.label)
                    .ok_or_else(|| PlacementError::UnknownLabel(s.label.clone()))?;
                scores[i] = s.p;
            }
            placement.pagerank = Some(PageRankResult {
                scores,
                alpha,
                epsilon,
                iterations: 0,
            });
        }
        Ok(placement)
    }
}

/// Power iteration `p ← αMp + (1−α)v` with `M = A D⁻¹`, `v = 1/n`, started
/// from `v` and stopped when successive iterates differ by at most `epsilon`
/// in the 2-norm.
pub fn pagerank(g: &GraphTopology, alpha: f64, epsilon: f64) -> Result<PageRankResult, PlacementError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(PlacementError::InvalidParameter(format!("alpha {alpha} not in (0, 1)")));
    }
    if !(epsilon > 0.0) {
        return Err(PlacementError::InvalidParameter(format!("epsilon {epsilon} must be positive")));
    }
    let n = g.n();
    let degrees = g.degrees();
    if let Some(i) = degrees.iter().position(|&d| d == 0) {
        return Err(PlacementError::IsolatedNode(i));
    }
    let teleport = (1.0 - alpha) / n as f64;
    let mut p = vec![1.0 / n as f64; n];
    let mut next = vec![0.0; n];
    let mut share = vec![0.0; n];
    for iter in 1..=MAX_ITERATIONS {
        for i in 0..n {
            share[i] = p[i] / degrees[i] as f64;
        }
        for (j, out) in next.iter_mut().enumerate() {
            let walk: f64 = g.neighbors(j).iter().map(|&i| share[i]).sum();
            *out = alpha * walk + teleport;
        }
        let diff = p
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        std::mem::swap(&mut p, &mut next);
        if diff <= epsilon {
            return Ok(PageRankResult {
                scores: p,
                alpha,
                epsilon,
                iterations: iter,
            });
        }
    }
    Err(PlacementError::NonConvergence(MAX_ITERATIONS))
}

/// Junction indices ordered by ascending score, ties by ascending index.
pub fn ascending_order(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by_key(|&i| ((scores[i] / TIE_QUANTUM).round() as i64, i));
    order
}

/// Instruments the `s` junctions with the smallest PageRank.
pub fn place_pagerank(
    g: &GraphTopology,
    s: usize,
    alpha: f64,
    epsilon: f64,
) -> Result<SensorPlacement, PlacementError> {
    if s == 0 || s > g.n() {
        return Err(PlacementError::InvalidSensorCount { s, n: g.n() });
    }
    let pr = pagerank(g, alpha, epsilon)?;
    let sensors = ascending_order(&pr.scores)[..s].to_vec();
    let mut placement = build(g.n(), sensors, PlacementMethod::Pagerank)?;
    placement.pagerank = Some(pr);
    Ok(placement)
}

/// Baseline placement from an explicit junction set, kept in the given order.
pub fn place_arbitrary(g: &GraphTopology, explicit: &[usize]) -> Result<SensorPlacement, PlacementError> {
    build(g.n(), explicit.to_vec(), PlacementMethod::Arbitrary)
}

fn build(n: usize, sensors: Vec<usize>, method: PlacementMethod) -> Result<SensorPlacement, PlacementError> {
    if sensors.is_empty() || sensors.len() > n {
        return Err(PlacementError::InvalidSensorCount { s: sensors.len(), n });
    }
    let mut mask = vec![0u8; n];
    for &i in &sensors {
        if i >= n {
            return Err(PlacementError::IndexOutOfRange { index: i, n });
        }
        if mask[i] == 1 {
            return Err(PlacementError::DuplicateIndex(i));
        }
        mask[i] = 1;
    }
    Ok(SensorPlacement {
        sensors,
        mask,
        method,
        pagerank: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net1;

    fn net1_graph() -> GraphTopology {
        GraphTopology::from_dense(&net1::ADJACENCY).unwrap()
    }

    fn labels(idx: &[usize]) -> Vec<&'static str> {
        idx.iter().map(|&i| net1::LABELS[i]).collect()
    }

    #[test]
    fn complete_graph_is_uniform() {
        for n in 2..8 {
            let edges: Vec<_> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
            let g = GraphTopology::from_edges(n, &edges).unwrap();
            for alpha in [0.1, 0.5, 0.85, 0.99] {
                let pr = pagerank(&g, alpha, 1e-12).unwrap();
                for p in pr.scores {
                    assert!((p - 1.0 / n as f64).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn net1_three_sensors() {
        let p = place_pagerank(&net1_graph(), 3, DEFAULT_ALPHA, DEFAULT_EPSILON).unwrap();
        assert_eq!(labels(&p.sensors), ["10", "23", "32"]);
        assert_eq!(p.mask.iter().filter(|&&m| m == 1).count(), 3);
    }

    #[test]
    fn net1_five_sensors_tie_break() {
        let p = place_pagerank(&net1_graph(), 5, DEFAULT_ALPHA, DEFAULT_EPSILON).unwrap();
        assert_eq!(labels(&p.sensors), ["10", "23", "32", "13", "31"]);
    }

    #[test]
    fn all_sensors() {
        let g = net1_graph();
        let p = place_pagerank(&g, 9, DEFAULT_ALPHA, DEFAULT_EPSILON).unwrap();
        assert!(p.mask.iter().all(|&m| m == 1));
        assert_eq!(
            place_pagerank(&g, 0, DEFAULT_ALPHA, DEFAULT_EPSILON),
            Err(PlacementError::InvalidSensorCount { s: 0, n: 9 })
        );
        assert!(place_pagerank(&g, 10, DEFAULT_ALPHA, DEFAULT_EPSILON).is_err());
    }

    #[test]
    fn selection_stable_across_tolerances() {
        let g = net1_graph();
        let base = place_pagerank(&g, 5, DEFAULT_ALPHA, 1e-10).unwrap().sensors;
        for eps in [1e-8, 1e-12] {
            assert_eq!(place_pagerank(&g, 5, DEFAULT_ALPHA, eps).unwrap().sensors, base);
        }
    }

    #[test]
    fn monotone_containment() {
        let g = net1_graph();
        for s in 1..9 {
            let small = place_pagerank(&g, s, DEFAULT_ALPHA, DEFAULT_EPSILON).unwrap().sensors;
            let big = place_pagerank(&g, s + 1, DEFAULT_ALPHA, DEFAULT_EPSILON).unwrap().sensors;
            assert_eq!(&big[..s], small.as_slice());
        }
    }

    #[test]
    fn arbitrary_validation() {
        let g = net1_graph();
        let idx: Vec<usize> = ["13", "22", "31"]
            .iter()
            .map(|l| net1::LABELS.iter().position(|x| x == l).unwrap())
            .collect();
        let p = place_arbitrary(&g, &idx).unwrap();
        assert_eq!(labels(&p.sensors), ["13", "22", "31"]);
        assert_eq!(p.method, PlacementMethod::Arbitrary);
        assert_eq!(place_arbitrary(&g, &[]), Err(PlacementError::InvalidSensorCount { s: 0, n: 9 }));
        assert_eq!(place_arbitrary(&g, &[0, 0, 6]), Err(PlacementError::DuplicateIndex(0)));
        assert_eq!(
            place_arbitrary(&g, &[9]),
            Err(PlacementError::IndexOutOfRange { index: 9, n: 9 })
        );
    }

    #[test]
    fn isolated_node_rejected() {
        let g = GraphTopology::from_edges(3, &[(0, 1)]).unwrap();
        assert_eq!(pagerank(&g, 0.85, 1e-10), Err(PlacementError::IsolatedNode(2)));
    }

    #[test]
    fn report_round_trip() {
        let g = net1_graph();
        let idx = JunctionIndex::new(net1::LABELS.iter().map(|s| s.to_string()).collect()).unwrap();
        let p = place_pagerank(&g, 3, DEFAULT_ALPHA, DEFAULT_EPSILON).unwrap();
        let report = p.report(&idx);
        let json = serde_json::to_string(&report).unwrap();
        let back: PlacementReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, report);
        let rebuilt = back.to_placement(&idx).unwrap();
        assert_eq!(rebuilt.sensors, p.sensors);
        assert_eq!(rebuilt.pagerank.unwrap().scores, p.pagerank.unwrap().scores);
    }
}
