//! The EPANET Net1 benchmark: topology, labels, and a Net1-shaped SI network.
//!
//! Topology, elevations, pipe sizes, base demands and the demand pattern are
//! Net1's, converted to SI. The pump curve is not Net1's single-point curve:
//! without the original tank-level pump controls that curve would overfill the
//! tank, so a lower curve is used whose operating point keeps the tank cycling
//! inside its level band. Absolute pressures therefore differ from published
//! Net1 runs while the network structure is unchanged.

/// Junction labels in `[JUNCTIONS]` file order; row `i` of [`ADJACENCY`] is `LABELS[i]`.
pub const LABELS: [&str; 9] = ["10", "11", "12", "13", "21", "22", "23", "31", "32"];

/// Junction-only adjacency of Net1.
pub const ADJACENCY: [[u8; 9]; 9] = [
    [0, 1, 0, 0, 0, 0, 0, 0, 0],
    [1, 0, 1, 0, 1, 0, 0, 0, 0],
    [0, 1, 0, 1, 0, 1, 0, 0, 0],
    [0, 0, 1, 0, 0, 0, 1, 0, 0],
    [0, 1, 0, 0, 0, 1, 0, 1, 0],
    [0, 0, 1, 0, 1, 0, 1, 0, 1],
    [0, 0, 0, 1, 0, 1, 0, 0, 0],
    [0, 0, 0, 0, 1, 0, 0, 0, 1],
    [0, 0, 0, 0, 0, 1, 0, 1, 0],
];

pub const INP: &str = include_str!("../assets/net1.inp");

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{junction_graph, parse_inp};

    #[test]
    fn net1_inp_matches_published_adjacency() {
        let parsed = parse_inp(INP).unwrap();
        assert!(parsed.warnings.is_empty(), "{:?}", parsed.warnings);
        let m = &parsed.model;
        assert_eq!(m.junctions.len(), 9);
        assert_eq!(m.pipes.len(), 12);
        assert_eq!(m.pumps.len(), 1);
        assert_eq!(m.reservoirs.len(), 1);
        assert_eq!(m.tanks.len(), 1);
        let (g, idx) = junction_graph(m).unwrap();
        assert_eq!(idx.labels(), LABELS);
        let dense = g.adjacency_dense();
        for (row, want) in dense.iter().zip(ADJACENCY.iter()) {
            assert_eq!(row.as_slice(), want.as_slice());
        }
    }
}
