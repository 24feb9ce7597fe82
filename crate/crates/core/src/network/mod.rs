//! Water distribution network model and its junction-only view.

mod inp;

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{GraphError, GraphTopology};

pub use inp::{parse_inp, to_inp, ParseWarning, Parsed};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InpError {
    #[error("line {line}: {reason}")]
    Syntax { line: usize, reason: String },
    #[error("line {line}: unknown section header {name}")]
    UnknownSection { line: usize, name: String },
    #[error("{kind} {id} references unknown {what} {target}")]
    Reference {
        kind: &'static str,
        id: String,
        what: &'static str,
        target: String,
    },
    #[error("duplicate id {0}")]
    DuplicateId(String),
    #[error("{0}")]
    Value(String),
    #[error("unsupported units {0}: only CMH (SI, m and m3/h) is accepted")]
    Units(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Junction {
    pub id: String,
    /// m
    pub elevation: f64,
    /// m³/h
    pub base_demand: f64,
    pub demand_pattern: Option<String>,
    /// Emitter coefficient, m³/h per m^γ of pressure head.
    pub emitter_coeff: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reservoir {
    pub id: String,
    pub total_head: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tank {
    pub id: String,
    pub elevation: f64,
    pub init_level: f64,
    pub min_level: f64,
    pub max_level: f64,
    pub diameter: f64,
}

impl Tank {
    pub fn area(&self) -> f64 {
        std::f64::consts::PI * self.diameter * self.diameter / 4.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pipe {
    pub id: String,
    pub from: String,
    pub to: String,
    /// m
    pub length: f64,
    /// m
    pub diameter: f64,
    /// Hazen–Williams C
    pub roughness: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pump {
    pub id: String,
    pub from: String,
    pub to: String,
    pub curve_id: String,
}

/// Pump head curve: (flow m³/h, head gain m) points with strictly increasing flow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub id: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pattern {
    pub id: String,
    pub multipliers: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Times {
    pub duration_s: Option<f64>,
    pub hydraulic_step_s: Option<f64>,
    pub pattern_step_s: f64,
}

impl Default for Times {
    fn default() -> Self {
        Times {
            duration_s: None,
            hydraulic_step_s: None,
            pattern_step_s: 3600.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    Junction(usize),
    Reservoir(usize),
    Tank(usize),
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct NetworkModel {
    pub title: String,
    pub junctions: Vec<Junction>,
    pub reservoirs: Vec<Reservoir>,
    pub tanks: Vec<Tank>,
    pub pipes: Vec<Pipe>,
    pub pumps: Vec<Pump>,
    pub curves: Vec<Curve>,
    pub patterns: Vec<Pattern>,
    pub times: Times,
}

impl NetworkModel {
    pub fn node_kind(&self, id: &str) -> Option<NodeKind> {
        if let Some(i) = self.junctions.iter().position(|j| j.id == id) {
            return Some(NodeKind::Junction(i));
        }
        if let Some(i) = self.reservoirs.iter().position(|r| r.id == id) {
            return Some(NodeKind::Reservoir(i));
        }
        self.tanks
            .iter()
            .position(|t| t.id == id)
            .map(NodeKind::Tank)
    }

    pub fn curve(&self, id: &str) -> Option<&Curve> {
        self.curves.iter().find(|c| c.id == id)
    }

    pub fn pattern(&self, id: &str) -> Option<&Pattern> {
        self.patterns.iter().find(|p| p.id == id)
    }

    pub fn junction_index(&self) -> JunctionIndex {
        JunctionIndex::new(self.junctions.iter().map(|j| j.id.clone()).collect())
            .expect("validated model has unique junction ids")
    }

    /// Checks every structural and physical invariant of the model.
    pub fn validate(&self) -> Result<(), InpError> {
        let mut nodes = HashSet::new();
        let node_ids = self
            .junctions
            .iter()
            .map(|j| &j.id)
            .chain(self.reservoirs.iter().map(|r| &r.id))
            .chain(self.tanks.iter().map(|t| &t.id));
        for id in node_ids {
            if !nodes.insert(id.as_str()) {
                return Err(InpError::DuplicateId(id.clone()));
            }
        }
        let mut links = HashSet::new();
        for id in self.pipes.iter().map(|p| &p.id).chain(self.pumps.iter().map(|p| &p.id)) {
            if !links.insert(id.as_str()) {
                return Err(InpError::DuplicateId(id.clone()));
            }
        }
        let mut seen = HashSet::new();
        for c in &self.curves {
            if !seen.insert(c.id.as_str()) {
                return Err(InpError::DuplicateId(c.id.clone()));
            }
        }
        seen.clear();
        for p in &self.patterns {
            if !seen.insert(p.id.as_str()) {
                return Err(InpError::DuplicateId(p.id.clone()));
            }
        }

        for j in &self.junctions {
            check_finite(&j.id, "elevation", j.elevation)?;
            check_finite(&j.id, "demand", j.base_demand)?;
            if j.emitter_coeff < 0.0 || !j.emitter_coeff.is_finite() {
                return Err(InpError::Value(format!(
                    "junction {}: emitter coefficient must be non-negative",
                    j.id
                )));
            }
            if let Some(p) = &j.demand_pattern {
                if self.pattern(p).is_none() {
                    return Err(InpError::Reference {
                        kind: "junction",
                        id: j.id.clone(),
                        what: "pattern",
                        target: p.clone(),
                    });
                }
            }
        }
        for r in &self.reservoirs {
            check_finite(&r.id, "head", r.total_head)?;
        }
        for t in &self.tanks {
            check_finite(&t.id, "elevation", t.elevation)?;
            check_positive(&t.id, "diameter", t.diameter)?;
            if !(t.min_level <= t.init_level && t.init_level <= t.max_level) || t.min_level < 0.0 {
                return Err(InpError::Value(format!(
                    "tank {}: levels must satisfy 0 <= min <= init <= max",
                    t.id
                )));
            }
        }
        for p in &self.pipes {
            self.check_endpoints("pipe", &p.id, &p.from, &p.to)?;
            check_positive(&p.id, "length", p.length)?;
            check_positive(&p.id, "diameter", p.diameter)?;
            check_positive(&p.id, "roughness", p.roughness)?;
            if p.diameter > 20.0 {
                return Err(InpError::Value(format!(
                    "pipe {}: diameter {} m is implausible (diameters are metres, not millimetres)",
                    p.id, p.diameter
                )));
            }
        }
        for p in &self.pumps {
            self.check_endpoints("pump", &p.id, &p.from, &p.to)?;
            let curve = self.curve(&p.curve_id).ok_or_else(|| InpError::Reference {
                kind: "pump",
                id: p.id.clone(),
                what: "curve",
                target: p.curve_id.clone(),
            })?;
            if curve.points.is_empty() {
                return Err(InpError::Value(format!("curve {} has no points", curve.id)));
            }
            if curve.points.windows(2).any(|w| w[1].0 <= w[0].0) {
                return Err(InpError::Value(format!(
                    "curve {}: flows must be strictly increasing",
                    curve.id
                )));
            }
            if curve.points.windows(2).any(|w| w[1].1 > w[0].1) {
                return Err(InpError::Value(format!(
                    "curve {}: pump head must not increase with flow",
                    curve.id
                )));
            }
        }
        for p in &self.patterns {
            if p.multipliers.is_empty() || p.multipliers.iter().any(|m| !m.is_finite() || *m < 0.0) {
                return Err(InpError::Value(format!(
                    "pattern {}: multipliers must be non-empty and non-negative",
                    p.id
                )));
            }
        }
        check_positive("TIMES", "pattern timestep", self.times.pattern_step_s)?;
        Ok(())
    }

    fn check_endpoints(&self, kind: &'static str, id: &str, from: &str, to: &str) -> Result<(), InpError> {
        for node in [from, to] {
            if self.node_kind(node).is_none() {
                return Err(InpError::Reference {
                    kind,
                    id: id.to_string(),
                    what: "node",
                    target: node.to_string(),
                });
            }
        }
        if from == to {
            return Err(InpError::Value(format!("{kind} {id} connects node {from} to itself")));
        }
        Ok(())
    }
}

fn check_positive(id: &str, what: &str, v: f64) -> Result<(), InpError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(InpError::Value(format!("{id}: {what} must be strictly positive, got {v}")))
    }
}

fn check_finite(id: &str, what: &str, v: f64) -> Result<(), InpError> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(InpError::Value(format!("{id}: {what} is not finite")))
    }
}

/// Junction label ↔ matrix row mapping, in file order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct JunctionIndex {
    labels: Vec<String>,
    index_of: HashMap<String, usize>,
}

impl JunctionIndex {
    pub fn new(labels: Vec<String>) -> Result<Self, InpError> {
        let mut index_of = HashMap::with_capacity(labels.len());
        for (i, l) in labels.iter().enumerate() {
            if index_of.insert(l.clone(), i).is_some() {
                return Err(InpError::DuplicateId(l.clone()));
            }
        }
        Ok(JunctionIndex { labels, index_of })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> &str {
        &self.labels[i]
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.index_of.get(label).copied()
    }
}

impl TryFrom<Vec<String>> for JunctionIndex {
    type Error = InpError;

    fn try_from(labels: Vec<String>) -> Result<Self, Self::Error> {
        JunctionIndex::new(labels)
    }
}

impl From<JunctionIndex> for Vec<String> {
    fn from(idx: JunctionIndex) -> Self {
        idx.labels
    }
}

/// Extracts the junction–junction connectivity of the network.
///
/// Only pipes whose both endpoints are junctions produce an edge. Tanks,
/// reservoirs and pumps are boundary elements and contribute nothing;
/// parallel pipes collapse into a single unweighted edge.
pub fn junction_graph(model: &NetworkModel) -> Result<(GraphTopology, JunctionIndex), GraphError> {
    if model.junctions.is_empty() {
        return Err(GraphError::EmptyGraph);
    }
    let index = model.junction_index();
    let mut edges = Vec::new();
    for p in &model.pipes {
        if let (Some(i), Some(j)) = (index.index_of(&p.from), index.index_of(&p.to)) {
            if i != j {
                edges.push((i, j));
            }
        }
    }
    let graph = GraphTopology::from_edges(index.len(), &edges)?;
    Ok((graph, index))
}
