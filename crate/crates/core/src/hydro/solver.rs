//! Steady-state hydraulics by the global gradient (Todini–Pilati) Newton scheme.

use nalgebra::{DMatrix, DVector};

use super::HydroError;
use crate::network::{NetworkModel, NodeKind};

/// Hazen–Williams SI constant for flow in m³/s.
pub const HW_COEFF: f64 = 10.67;
pub const HW_EXPONENT: f64 = 1.852;
pub const HW_DIAMETER_EXPONENT: f64 = 4.87;

/// Head loss in metres of a pipe carrying `q` m³/h.
pub fn hazen_williams_headloss(length: f64, diameter: f64, roughness: f64, q: f64) -> f64 {
    let q_s = q / 3600.0;
    HW_COEFF * length * q_s.abs().powf(HW_EXPONENT) * q_s.signum()
        / (roughness.powf(HW_EXPONENT) * diameter.powf(HW_DIAMETER_EXPONENT))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub max_iter: usize,
    /// Largest admissible nodal flow imbalance, m³/h.
    pub flow_tol: f64,
    /// Largest admissible link energy residual, m.
    pub head_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            max_iter: 200,
            flow_tol: 1e-6,
            head_tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum End {
    Junction(usize),
    Fixed(usize),
}

#[derive(Debug, Clone)]
enum LinkKind {
    /// headloss = r · |q|^0.852 · q with q in m³/h
    Pipe { r: f64 },
    Pump { curve: Vec<(f64, f64)> },
}

#[derive(Debug, Clone)]
pub(crate) struct Link {
    pub from: End,
    pub to: End,
    kind: LinkKind,
}

impl Link {
    /// Energy drop from `from` to `to` implied by flow `q`, and its derivative
    /// floored away from zero.
    fn loss(&self, q: f64) -> (f64, f64) {
        match &self.kind {
            LinkKind::Pipe { r } => {
                const Q_FLOOR: f64 = 1e-4;
                let h = r * q.abs().powf(HW_EXPONENT - 1.0) * q;
                let g = HW_EXPONENT * r * q.abs().max(Q_FLOOR).powf(HW_EXPONENT - 1.0);
                (h, g)
            }
            LinkKind::Pump { curve } => {
                const SLOPE_FLOOR: f64 = 1e-6;
                let (gain, slope) = pump_head(curve, q);
                (-gain, (-slope).max(SLOPE_FLOOR))
            }
        }
    }
}

/// Piecewise-linear pump head and slope, clamped outside the curve.
pub fn pump_head(curve: &[(f64, f64)], q: f64) -> (f64, f64) {
    let first = curve[0];
    let last = curve[curve.len() - 1];
    if curve.len() == 1 || q <= first.0 {
        return (first.1, 0.0);
    }
    if q >= last.0 {
        return (last.1, 0.0);
    }
    let k = curve.partition_point(|p| p.0 <= q);
    let (q0, h0) = curve[k - 1];
    let (q1, h1) = curve[k];
    let slope = (h1 - h0) / (q1 - q0);
    (h0 + slope * (q - q0), slope)
}

#[derive(Debug, Clone, PartialEq)]
pub struct HydraulicState {
    /// Total head per junction, m.
    pub heads: Vec<f64>,
    /// Flow per pipe (model order), m³/h, positive from `from` to `to`.
    pub pipe_flows: Vec<f64>,
    /// Flow per pump (model order), m³/h.
    pub pump_flows: Vec<f64>,
    /// Emitter outflow per junction, m³/h.
    pub emitter_flows: Vec<f64>,
    pub iterations: usize,
}

/// Pressure-dependent outflow `coeff · max(p, 0)^exponent` at a junction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Emitter {
    pub junction: usize,
    pub coeff: f64,
    pub exponent: f64,
}

impl Emitter {
    fn flow(&self, pressure: f64) -> (f64, f64) {
        const P_FLOOR: f64 = 1e-4;
        if self.coeff == 0.0 {
            return (0.0, 0.0);
        }
        let q = if pressure > 0.0 {
            self.coeff * pressure.powf(self.exponent)
        } else {
            0.0
        };
        let dq = self.exponent * self.coeff * pressure.max(P_FLOOR).powf(self.exponent - 1.0);
        (q, dq)
    }
}

/// Precomputed link/node layout of a network.
#[derive(Debug, Clone)]
pub struct HydraulicSolver {
    n: usize,
    elevations: Vec<f64>,
    pub(crate) links: Vec<Link>,
    n_pipes: usize,
    /// Fixed-head nodes: reservoirs first, then tanks.
    n_fixed: usize,
    n_reservoirs: usize,
    initial_flows: Vec<f64>,
    junction_ids: Vec<String>,
    pub options: SolverOptions,
}

impl HydraulicSolver {
    pub fn new(model: &NetworkModel) -> Result<Self, HydroError> {
        let n_res = model.reservoirs.len();
        if n_res + model.tanks.len() == 0 {
            return Err(HydroError::NoFixedHead);
        }
        let end = |id: &str| -> End {
            match model.node_kind(id).expect("validated model") {
                NodeKind::Junction(i) => End::Junction(i),
                NodeKind::Reservoir(i) => End::Fixed(i),
                NodeKind::Tank(i) => End::Fixed(n_res + i),
            }
        };
        let mut links = Vec::new();
        let mut initial_flows = Vec::new();
        for p in &model.pipes {
            let r = HW_COEFF * p.length
                / (p.roughness.powf(HW_EXPONENT) * p.diameter.powf(HW_DIAMETER_EXPONENT) * 3600f64.powf(HW_EXPONENT));
            links.push(Link {
                from: end(&p.from),
                to: end(&p.to),
                kind: LinkKind::Pipe { r },
            });
            // 0.3 m/s
            initial_flows.push(std::f64::consts::PI * p.diameter * p.diameter / 4.0 * 0.3 * 3600.0);
        }
        for p in &model.pumps {
            let curve = model.curve(&p.curve_id).expect("validated model").points.clone();
            initial_flows.push(curve.last().unwrap().0 / 2.0);
            links.push(Link {
                from: end(&p.from),
                to: end(&p.to),
                kind: LinkKind::Pump { curve },
            });
        }
        let solver = HydraulicSolver {
            n: model.junctions.len(),
            elevations: model.junctions.iter().map(|j| j.elevation).collect(),
            links,
            n_pipes: model.pipes.len(),
            n_fixed: n_res + model.tanks.len(),
            n_reservoirs: n_res,
            initial_flows,
            junction_ids: model.junctions.iter().map(|j| j.id.clone()).collect(),
            options: SolverOptions::default(),
        };
        solver.check_connectivity()?;
        Ok(solver)
    }

    pub fn n_junctions(&self) -> usize {
        self.n
    }

    pub fn n_reservoirs(&self) -> usize {
        self.n_reservoirs
    }

    pub fn n_fixed(&self) -> usize {
        self.n_fixed
    }

    fn check_connectivity(&self) -> Result<(), HydroError> {
        let mut adj = vec![Vec::new(); self.n];
        let mut reached = vec![false; self.n];
        let mut stack = Vec::new();
        for l in &self.links {
            match (l.from, l.to) {
                (End::Junction(a), End::Junction(b)) => {
                    adj[a].push(b);
                    adj[b].push(a);
                }
                (End::Junction(a), End::Fixed(_)) | (End::Fixed(_), End::Junction(a)) => {
                    if !reached[a] {
                        reached[a] = true;
                        stack.push(a);
                    }
                }
                _ => {}
            }
        }
        while let Some(i) = stack.pop() {
            for &j in &adj[i] {
                if !reached[j] {
                    reached[j] = true;
                    stack.push(j);
                }
            }
        }
        match reached.iter().position(|r| !r) {
            Some(i) => Err(HydroError::DisconnectedComponent(self.junction_ids[i].clone())),
            None => Ok(()),
        }
    }

    fn head(&self, end: End, heads: &[f64], fixed: &[f64]) -> f64 {
        match end {
            End::Junction(i) => heads[i],
            End::Fixed(k) => fixed[k],
        }
    }

    /// Residuals: per-junction flow imbalance (outflow positive) and per-link
    /// energy mismatch. Also returns emitter outflows and their derivatives.
    fn residuals(
        &self,
        heads: &[f64],
        flows: &[f64],
        demands: &[f64],
        emitters: &[Emitter],
        fixed: &[f64],
    ) -> (Vec<f64>, Vec<(f64, f64)>, Vec<f64>, Vec<f64>) {
        let mut imbalance = demands.to_vec();
        let mut link_terms = Vec::with_capacity(self.links.len());
        for (l, &q) in self.links.iter().zip(flows) {
            let (h, g) = l.loss(q);
            let f1 = h - (self.head(l.from, heads, fixed) - self.head(l.to, heads, fixed));
            link_terms.push((f1, g));
            if let End::Junction(a) = l.from {
                imbalance[a] += q;
            }
            if let End::Junction(b) = l.to {
                imbalance[b] -= q;
            }
        }
        let mut e_flow = vec![0.0; self.n];
        let mut e_deriv = vec![0.0; self.n];
        for e in emitters {
            let (q, dq) = e.flow(heads[e.junction] - self.elevations[e.junction]);
            e_flow[e.junction] += q;
            e_deriv[e.junction] += dq;
        }
        for i in 0..self.n {
            imbalance[i] += e_flow[i];
        }
        (imbalance, link_terms, e_flow, e_deriv)
    }

    /// Solves for heads and flows given junction demands (m³/h), emitters and
    /// the heads of every fixed-head node (reservoirs then tanks).
    pub fn solve(
        &self,
        demands: &[f64],
        emitters: &[Emitter],
        fixed_heads: &[f64],
        warm: Option<&HydraulicState>,
    ) -> Result<HydraulicState, HydroError> {
        assert_eq!(demands.len(), self.n);
        assert_eq!(fixed_heads.len(), self.n_fixed);
        let n = self.n;
        let (mut heads, mut flows) = match warm {
            Some(s) => (
                s.heads.clone(),
                s.pipe_flows.iter().chain(&s.pump_flows).copied().collect::<Vec<_>>(),
            ),
            None => {
                let top = fixed_heads.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                (vec![top; n], self.initial_flows.clone())
            }
        };

        let mut last_residual = f64::INFINITY;
        for iter in 0..=self.options.max_iter {
            let (imbalance, link_terms, e_flow, e_deriv) =
                self.residuals(&heads, &flows, demands, emitters, fixed_heads);
            let max_flow_err = imbalance.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let max_head_err = link_terms.iter().fold(0.0f64, |m, (f1, _)| m.max(f1.abs()));
            if !max_flow_err.is_finite() || !max_head_err.is_finite() {
                break;
            }
            last_residual = max_flow_err;
            if max_flow_err <= self.options.flow_tol && max_head_err <= self.options.head_tol {
                return Ok(HydraulicState {
                    heads,
                    pipe_flows: flows[..self.n_pipes].to_vec(),
                    pump_flows: flows[self.n_pipes..].to_vec(),
                    emitter_flows: e_flow,
                    iterations: iter,
                });
            }
            if iter == self.options.max_iter {
                break;
            }

            // J ΔH = −F2 + Σ s F1/g, with J = Σ s sᵀ / g + diag(e')
            let mut jac = DMatrix::<f64>::zeros(n, n);
            let mut rhs = DVector::<f64>::from_iterator(n, imbalance.iter().map(|v| -v));
            for i in 0..n {
                jac[(i, i)] += e_deriv[i];
            }
            for (l, &(f1, g)) in self.links.iter().zip(&link_terms) {
                let c = 1.0 / g;
                if let End::Junction(a) = l.from {
                    jac[(a, a)] += c;
                    rhs[a] += f1 * c;
                }
                if let End::Junction(b) = l.to {
                    jac[(b, b)] += c;
                    rhs[b] -= f1 * c;
                }
                if let (End::Junction(a), End::Junction(b)) = (l.from, l.to) {
                    jac[(a, b)] -= c;
                    jac[(b, a)] -= c;
                }
            }
            let dh = jac
                .cholesky()
                .ok_or(HydroError::Singular)?
                .solve(&rhs);
            for i in 0..n {
                heads[i] += dh[i];
            }
            for (k, (l, &(f1, g))) in self.links.iter().zip(&link_terms).enumerate() {
                let d = |e: End| match e {
                    End::Junction(i) => dh[i],
                    End::Fixed(_) => 0.0,
                };
                flows[k] += (d(l.from) - d(l.to) - f1) / g;
            }
        }
        Err(HydroError::NonConvergence {
            iterations: self.options.max_iter,
            residual: last_residual,
        })
    }

    /// Net inflow (m³/h) into each fixed-head node for a solved state.
    pub fn fixed_inflows(&self, state: &HydraulicState) -> Vec<f64> {
        let mut inflow = vec![0.0; self.n_fixed];
        let flows = state.pipe_flows.iter().chain(&state.pump_flows);
        for (l, &q) in self.links.iter().zip(flows) {
            if let End::Fixed(k) = l.from {
                inflow[k] -= q;
            }
            if let End::Fixed(k) = l.to {
                inflow[k] += q;
            }
        }
        inflow
    }

    pub fn elevations(&self) -> &[f64] {
        &self.elevations
    }
}

/// Steady state of `model` with demands `base_demand × multiplier`, the
/// model's own emitters (exponent 0.5), reservoir heads from the model and
/// the given tank heads.
pub fn solve_steady_state(
    model: &NetworkModel,
    demand_multipliers: &[f64],
    tank_heads: &[f64],
) -> Result<HydraulicState, HydroError> {
    let solver = HydraulicSolver::new(model)?;
    if demand_multipliers.len() != model.junctions.len() || tank_heads.len() != model.tanks.len() {
        return Err(HydroError::InvalidConfig(
            "demand multipliers or tank heads have the wrong length".into(),
        ));
    }
    let demands: Vec<f64> = model
        .junctions
        .iter()
        .zip(demand_multipliers)
        .map(|(j, m)| j.base_demand * m)
        .collect();
    let emitters: Vec<Emitter> = model
        .junctions
        .iter()
        .enumerate()
        .filter(|(_, j)| j.emitter_coeff > 0.0)
        .map(|(i, j)| Emitter {
            junction: i,
            coeff: j.emitter_coeff,
            exponent: super::DEFAULT_EMITTER_EXPONENT,
        })
        .collect();
    let fixed: Vec<f64> = model
        .reservoirs
        .iter()
        .map(|r| r.total_head)
        .chain(tank_heads.iter().copied())
        .collect();
    solver.solve(&demands, &emitters, &fixed, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::parse_inp;

    fn one_pipe(demand: f64) -> NetworkModel {
        let text = format!(
            "[RESERVOIRS]\nR 100\n[JUNCTIONS]\nJ 90 {demand}\n[PIPES]\nP R J 1000 0.2 120\n"
        );
        parse_inp(&text).unwrap().model
    }

    #[test]
    fn zero_flow_equilibrium() {
        let s = solve_steady_state(&one_pipe(0.0), &[1.0], &[]).unwrap();
        assert!((s.heads[0] - 90.0 - 10.0).abs() < 1e-8);
        assert!(s.pipe_flows[0].abs() < 1e-6);
    }

    #[test]
    fn single_pipe_matches_bisection() {
        let s = solve_steady_state(&one_pipe(10.0), &[1.0], &[]).unwrap();
        // h(q) is monotone in q; the junction head is 100 − h(10).
        let loss = hazen_williams_headloss(1000.0, 0.2, 120.0, 10.0);
        let (mut lo, mut hi) = (0.0, 100.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let q = {
                // flow through the pipe for head difference 100 − mid
                let (mut a, mut b) = (0.0, 1e4);
                for _ in 0..200 {
                    let m = 0.5 * (a + b);
                    if hazen_williams_headloss(1000.0, 0.2, 120.0, m) < 100.0 - mid {
                        a = m;
                    } else {
                        b = m;
                    }
                }
                0.5 * (a + b)
            };
            if q > 10.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let oracle = 0.5 * (lo + hi);
        assert!((s.heads[0] - oracle).abs() < 1e-6, "{} vs {}", s.heads[0], oracle);
        assert!((s.heads[0] - (100.0 - loss)).abs() < 1e-6);
        assert!((s.pipe_flows[0] - 10.0).abs() < 1e-6);
    }

    #[test]
    fn emitter_withdrawal_matches_definition() {
        let mut m = one_pipe(0.0);
        m.junctions[0].emitter_coeff = 2.5;
        let s = solve_steady_state(&m, &[1.0], &[]).unwrap();
        let p = s.heads[0] - 90.0;
        assert!(p > 0.0);
        assert!((s.emitter_flows[0] - 2.5 * p.sqrt()).abs() < 1e-9);
        assert!((s.pipe_flows[0] - s.emitter_flows[0]).abs() < 1e-6);
    }

    #[test]
    fn pump_curve_interpolation() {
        let c = [(0.0, 50.0), (100.0, 40.0), (200.0, 0.0)];
        assert_eq!(pump_head(&c, -5.0), (50.0, 0.0));
        assert_eq!(pump_head(&c, 50.0), (45.0, -0.1));
        assert_eq!(pump_head(&c, 150.0), (20.0, -0.4));
        assert_eq!(pump_head(&c, 300.0), (0.0, 0.0));
        assert_eq!(pump_head(&[(10.0, 7.0)], 3.0), (7.0, 0.0));
    }

    #[test]
    fn disconnected_junction_detected() {
        let text = "[RESERVOIRS]\nR 100\n[JUNCTIONS]\nA 90 1\nB 90 1\nC 90 1\n[PIPES]\nP1 R A 10 0.2 100\nP2 B C 10 0.2 100\n";
        let m = parse_inp(text).unwrap().model;
        assert!(matches!(
            HydraulicSolver::new(&m),
            Err(HydroError::DisconnectedComponent(id)) if id == "B"
        ));
    }

    #[test]
    fn no_fixed_head_rejected() {
        let text = "[JUNCTIONS]\nA 90 1\nB 90 1\n[PIPES]\nP1 A B 10 0.2 100\n";
        let m = parse_inp(text).unwrap().model;
        assert!(matches!(HydraulicSolver::new(&m), Err(HydroError::NoFixedHead)));
    }
}
