use hydrosentinel_core::net1;
use hydrosentinel_core::network::{
    junction_graph, parse_inp, to_inp, Curve, Junction, NetworkModel, Pattern, Pipe, Pump, Reservoir, Tank, Times,
};
use proptest::prelude::*;

#[test]
fn net1_round_trips_through_text() {
    let model = parse_inp(net1::INP).unwrap().model;
    let again = parse_inp(&to_inp(&model)).unwrap();
    assert!(again.warnings.is_empty());
    assert_eq!(again.model, model);
}

#[test]
fn junction_order_is_stable() {
    let a = parse_inp(net1::INP).unwrap().model.junction_index();
    let b = parse_inp(net1::INP).unwrap().model.junction_index();
    assert_eq!(a, b);
}

#[test]
fn minimal_network() {
    let text = "[RESERVOIRS]\nR 100\n[JUNCTIONS]\nJ 90 0\n[PIPES]\nP R J 100 0.3 120\n[END]\n";
    let m = parse_inp(text).unwrap().model;
    let (g, idx) = junction_graph(&m).unwrap();
    assert_eq!(g.n(), 1);
    assert_eq!(g.adjacency_dense(), vec![vec![0u8]]);
    assert_eq!(idx.labels(), ["J"]);
}

fn finite(lo: f64, hi: f64) -> impl Strategy<Value = f64> {
    // quantized so printed values stay short
    (0u32..10_000).prop_map(move |k| lo + (hi - lo) * f64::from(k) / 10_000.0)
}

prop_compose! {
    fn arb_network()(
        n in 1usize..8,
    )(
        elevations in prop::collection::vec(finite(0.0, 100.0), n),
        demands in prop::collection::vec(finite(0.0, 50.0), n),
        links in prop::collection::vec((0..n + 2, 0..n + 2, finite(1.0, 2000.0), finite(0.05, 1.0), finite(60.0, 150.0)), 0..14),
        pattern in prop::collection::vec(finite(0.0, 2.0), 1..6),
        emitters in prop::collection::vec(prop::option::of(finite(0.01, 5.0)), n),
        with_pump in any::<bool>(),
        n in Just(n),
    ) -> NetworkModel {
        let id = |i: usize| match i {
            i if i < n => format!("J{i}"),
            i if i == n => "R".to_string(),
            _ => "T".to_string(),
        };
        let junctions = (0..n)
            .map(|i| Junction {
                id: id(i),
                elevation: elevations[i],
                base_demand: demands[i],
                demand_pattern: (i % 2 == 0).then(|| "P1".to_string()),
                emitter_coeff: emitters[i].unwrap_or(0.0),
            })
            .collect();
        let pipes = links
            .iter()
            .filter(|(a, b, ..)| a != b)
            .enumerate()
            .map(|(k, &(a, b, length, diameter, roughness))| Pipe {
                id: format!("P{k}"),
                from: id(a),
                to: id(b),
                length,
                diameter,
                roughness,
            })
            .collect();
        let (pumps, curves) = if with_pump {
            (
                vec![Pump { id: "U".into(), from: "R".into(), to: id(0), curve_id: "C".into() }],
                vec![Curve { id: "C".into(), points: vec![(0.0, 40.0), (100.0, 30.0), (200.0, 0.0)] }],
            )
        } else {
            (vec![], vec![])
        };
        NetworkModel {
            title: "random".into(),
            junctions,
            reservoirs: vec![Reservoir { id: "R".into(), total_head: 150.0 }],
            tanks: vec![Tank {
                id: "T".into(),
                elevation: 120.0,
                init_level: 3.0,
                min_level: 1.0,
                max_level: 6.0,
                diameter: 12.5,
            }],
            pipes,
            pumps,
            curves,
            patterns: vec![Pattern { id: "P1".into(), multipliers: pattern }],
            times: Times { duration_s: Some(7200.0), hydraulic_step_s: Some(60.0), pattern_step_s: 3600.0 },
        }
    }
}

proptest! {
    #[test]
    fn random_networks_round_trip(model in arb_network()) {
        model.validate().unwrap();
        let parsed = parse_inp(&to_inp(&model)).unwrap();
        prop_assert_eq!(parsed.model, model);
    }

    #[test]
    fn junction_graph_symmetric_zero_diagonal(model in arb_network()) {
        let (g, idx) = junction_graph(&model).unwrap();
        prop_assert_eq!(idx.len(), model.junctions.len());
        let a = g.adjacency_dense();
        for i in 0..g.n() {
            prop_assert_eq!(a[i][i], 0);
            for j in 0..g.n() {
                prop_assert_eq!(a[i][j], a[j][i]);
            }
        }
        // an edge exists exactly when some pipe joins the two junctions directly
        for i in 0..g.n() {
            for j in (i + 1)..g.n() {
                let (li, lj) = (idx.label(i), idx.label(j));
                let piped = model.pipes.iter().any(|p| (p.from == li && p.to == lj) || (p.from == lj && p.to == li));
                prop_assert_eq!(a[i][j] == 1, piped);
            }
        }
    }
}
