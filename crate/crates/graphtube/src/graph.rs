//! Star metric graphs with weighted endpoint spaces, and functions sampled
//! on them.
//!
//! A star has one interior vertex `v` of degree `n >= 2`; edge `e` is the
//! interval `[0, l_e]` with `s = 0` at `v`. The weight `p_e > 0` enters the
//! vertex space through the constraint `f_e(0) = p_e f(v)`: endpoint vectors
//! of admissible functions lie on the line spanned by `p`. Outer endpoints
//! always carry Neumann conditions.

use crate::{estimates, Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Coupling {
    /// Continuity `f_e(0) = p_e f(v)` plus `sum_e p_e f'_e(0) = q f(v)`.
    /// `q = 0` with unit weights is the free (Kirchhoff) vertex.
    Delta { q: f64 },
    /// Equal derivatives `f'_e(0) = f'(v)` plus `sum_e f_e(0) = beta f'(v)`.
    /// Requires unit lengths and weights; `beta = 0` means the constrained
    /// form with `sum_e f_e(0) = 0`.
    DeltaPrimeS { beta: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Edge {
    pub length: f64,
    pub weight: f64,
}

#[derive(Clone, Debug)]
pub struct StarGraph {
    edges: Vec<Edge>,
    coupling: Coupling,
}

impl StarGraph {
    pub fn build_star(
        n: usize,
        lengths: &[f64],
        weights: &[f64],
        coupling: Coupling,
    ) -> Result<Self> {
        if n < 2 {
            return Err(Error::Invalid(format!("star needs degree >= 2, got {n}")));
        }
        if lengths.len() != n || weights.len() != n {
            return Err(Error::Invalid(format!(
                "expected {n} lengths and weights, got {} and {}",
                lengths.len(),
                weights.len()
            )));
        }
        for (&l, &p) in lengths.iter().zip(weights) {
            if !(l > 0.0) || !l.is_finite() {
                return Err(Error::Invalid(format!("edge length must be positive, got {l}")));
            }
            if !(p > 0.0) || !p.is_finite() {
                return Err(Error::Invalid(format!("edge weight must be positive, got {p}")));
            }
        }
        let graph = StarGraph {
            edges: lengths
                .iter()
                .zip(weights)
                .map(|(&length, &weight)| Edge { length, weight })
                .collect(),
            coupling,
        };
        if let Coupling::DeltaPrimeS { .. } = coupling {
            if !graph.is_unit() {
                return Err(Error::Invalid(
                    "delta-prime coupling requires unit lengths and weights".into(),
                ));
            }
        }
        Ok(graph)
    }

    /// Star with `n` unit edges and unit weights.
    pub fn unit_star(n: usize, coupling: Coupling) -> Self {
        Self::build_star(n, &vec![1.0; n], &vec![1.0; n], coupling).unwrap()
    }

    pub fn from_json(doc: &str) -> Result<Self> {
        let parsed: GraphDoc = serde_json::from_str(doc)?;
        let coupling = match parsed.coupling {
            CouplingDoc::Delta { strength } => Coupling::Delta { q: strength },
            CouplingDoc::DeltaPrimeS { strength } => Coupling::DeltaPrimeS { beta: strength },
            CouplingDoc::Kirchhoff { strength } => match strength {
                Some(s) if s != 0.0 => {
                    return Err(Error::Invalid(format!(
                        "kirchhoff coupling cannot carry strength {s}"
                    )))
                }
                _ => Coupling::Delta { q: 0.0 },
            },
        };
        let n = parsed.edges.len();
        let lengths: Vec<f64> = parsed.edges.iter().map(|e| e.length).collect();
        let weights: Vec<f64> = parsed.edges.iter().map(|e| e.weight).collect();
        Self::build_star(n, &lengths, &weights, coupling)
    }

    pub fn n(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn coupling(&self) -> Coupling {
        self.coupling
    }

    pub fn lengths(&self) -> Vec<f64> {
        self.edges.iter().map(|e| e.length).collect()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.edges.iter().map(|e| e.weight).collect()
    }

    /// Shortest edge length, `l_-`.
    pub fn min_length(&self) -> f64 {
        self.edges.iter().map(|e| e.length).fold(f64::INFINITY, f64::min)
    }

    /// `min(1, l_-)`, the length floor used by the error constants.
    pub fn length_floor(&self) -> f64 {
        self.min_length().min(1.0)
    }

    /// `|p|^2 = sum_e p_e^2`.
    pub fn weight_norm_sq(&self) -> f64 {
        self.edges.iter().map(|e| e.weight * e.weight).sum()
    }

    /// Weighted total length `sum_e l_e p_e^2` (the volume of the edge part
    /// of the associated thin neighborhood, per unit width).
    pub fn volume(&self) -> f64 {
        self.edges.iter().map(|e| e.length * e.weight * e.weight).sum()
    }

    pub fn is_unit(&self) -> bool {
        self.edges.iter().all(|e| e.length == 1.0 && e.weight == 1.0)
    }

    pub fn delta_strength(&self) -> Option<f64> {
        match self.coupling {
            Coupling::Delta { q } => Some(q),
            Coupling::DeltaPrimeS { .. } => None,
        }
    }
}

#[derive(Deserialize)]
struct GraphDoc {
    edges: Vec<EdgeDoc>,
    coupling: CouplingDoc,
}

#[derive(Deserialize)]
struct EdgeDoc {
    length: f64,
    weight: f64,
}

#[derive(Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum CouplingDoc {
    Delta { strength: f64 },
    DeltaPrimeS { strength: f64 },
    Kirchhoff { strength: Option<f64> },
}

/// Function sampled on a uniform grid per edge, endpoints included. Norms
/// use trapezoidal quadrature; first derivatives use centered differences
/// inside and one-sided differences at the ends.
#[derive(Clone, Debug)]
pub struct GraphFunction {
    /// values[e][j] = f_e(j * step[e])
    values: Vec<Vec<f64>>,
    steps: Vec<f64>,
}

impl GraphFunction {
    /// Sample `f(e, s)` with grid step at most `h` on every edge.
    pub fn from_fn(graph: &StarGraph, h: f64, f: impl Fn(usize, f64) -> f64) -> Result<Self> {
        if !(h > 0.0) {
            return Err(Error::Invalid(format!("grid step must be positive, got {h}")));
        }
        let mut values = Vec::with_capacity(graph.n());
        let mut steps = Vec::with_capacity(graph.n());
        for (e, edge) in graph.edges().iter().enumerate() {
            let cells = (edge.length / h).ceil().max(1.0) as usize;
            let step = edge.length / cells as f64;
            values.push((0..=cells).map(|j| f(e, j as f64 * step)).collect());
            steps.push(step);
        }
        Ok(GraphFunction { values, steps })
    }

    /// Random smooth function compatible with the weighted vertex space:
    /// `f_e(s) = p_e (c0 + sum_m a_em (cos(m pi s / l_e) - 1))`, so the
    /// endpoint vector is exactly `c0 * p`.
    pub fn smooth_sample(graph: &StarGraph, h: f64, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c0: f64 = rng.gen_range(-1.0..1.0);
        let coef: Vec<[f64; 4]> = (0..graph.n())
            .map(|_| {
                let mut a = [0.0; 4];
                for (m, slot) in a.iter_mut().enumerate() {
                    *slot = rng.gen_range(-1.0..1.0) / ((m + 1) as f64 * (m + 1) as f64);
                }
                a
            })
            .collect();
        let lengths = graph.lengths();
        let weights = graph.weights();
        Self::from_fn(graph, h, move |e, s| {
            let mut v = c0;
            for (m, a) in coef[e].iter().enumerate() {
                let w = (m + 1) as f64 * std::f64::consts::PI / lengths[e];
                v += a * ((w * s).cos() - 1.0);
            }
            weights[e] * v
        })
    }

    /// Wrap station values computed elsewhere (one uniform grid per edge,
    /// endpoints included).
    pub fn from_values(values: Vec<Vec<f64>>, steps: Vec<f64>) -> Result<Self> {
        if values.len() != steps.len() || values.is_empty() {
            return Err(Error::Invalid("per-edge values and steps must align".into()));
        }
        for (e, (v, &h)) in values.iter().zip(&steps).enumerate() {
            if v.len() < 2 || !(h > 0.0) {
                return Err(Error::Invalid(format!(
                    "edge {e} needs >= 2 stations and a positive step, got {} and {h}",
                    v.len()
                )));
            }
        }
        Ok(GraphFunction { values, steps })
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn steps(&self) -> &[f64] {
        &self.steps
    }

    /// Trapezoidal L^2 norm squared over all edges.
    pub fn norm_sq(&self) -> f64 {
        self.values
            .iter()
            .zip(&self.steps)
            .map(|(v, &h)| {
                let inner: f64 = v[1..v.len() - 1].iter().map(|x| x * x).sum();
                h * (inner + 0.5 * (v[0] * v[0] + v[v.len() - 1] * v[v.len() - 1]))
            })
            .sum()
    }

    /// Trapezoidal L^2 inner product; the grids must match.
    pub fn dot(&self, other: &GraphFunction) -> Result<f64> {
        if self.values.len() != other.values.len() {
            return Err(Error::Invalid("edge counts differ".into()));
        }
        let mut acc = 0.0;
        for ((a, b), (&ha, &hb)) in self
            .values
            .iter()
            .zip(&other.values)
            .zip(self.steps.iter().zip(&other.steps))
        {
            if a.len() != b.len() || (ha - hb).abs() > 1e-9 * (1.0 + ha.abs()) {
                return Err(Error::Invalid("station grids differ".into()));
            }
            let m = a.len();
            let inner: f64 = (1..m - 1).map(|j| a[j] * b[j]).sum();
            acc += ha * (inner + 0.5 * (a[0] * b[0] + a[m - 1] * b[m - 1]));
        }
        Ok(acc)
    }

    /// Trapezoidal norm squared of the difference-quotient derivative.
    pub fn h1_seminorm_sq(&self) -> f64 {
        self.values
            .iter()
            .zip(&self.steps)
            .map(|(v, &h)| {
                let n = v.len();
                if n < 2 {
                    return 0.0;
                }
                let d = |j: usize| -> f64 {
                    if j == 0 {
                        (v[1] - v[0]) / h
                    } else if j == n - 1 {
                        (v[n - 1] - v[n - 2]) / h
                    } else {
                        (v[j + 1] - v[j - 1]) / (2.0 * h)
                    }
                };
                let inner: f64 = (1..n - 1).map(|j| d(j) * d(j)).sum();
                h * (inner + 0.5 * (d(0) * d(0) + d(n - 1) * d(n - 1)))
            })
            .sum()
    }

    /// `f_e(0)` for each edge.
    pub fn endpoint_vector(&self) -> Vec<f64> {
        self.values.iter().map(|v| v[0]).collect()
    }

    /// Relative residual of projecting the endpoint vector onto span(p).
    /// Zero (up to roundoff) exactly when the function lies in the weighted
    /// vertex space.
    pub fn membership_residual(&self, graph: &StarGraph) -> f64 {
        let f0 = self.endpoint_vector();
        let p = graph.weights();
        let pp: f64 = p.iter().map(|x| x * x).sum();
        let fp: f64 = f0.iter().zip(&p).map(|(a, b)| a * b).sum();
        let c = fp / pp;
        let res: f64 = f0.iter().zip(&p).map(|(a, b)| (a - c * b) * (a - c * b)).sum::<f64>().sqrt();
        let scale: f64 = f0.iter().map(|x| x * x).sum::<f64>().sqrt();
        if scale == 0.0 {
            0.0
        } else {
            res / scale
        }
    }

    /// Vertex value `f(v)` recovered from the endpoint vector; errors if the
    /// endpoints do not lie on span(p).
    pub fn vertex_value(&self, graph: &StarGraph) -> Result<f64> {
        let res = self.membership_residual(graph);
        if res > 1e-12 {
            return Err(Error::Invalid(format!(
                "endpoint vector is off the weighted vertex space (residual {res:.3e})"
            )));
        }
        let f0 = self.endpoint_vector();
        let p = graph.weights();
        let pp: f64 = p.iter().map(|x| x * x).sum();
        Ok(f0.iter().zip(&p).map(|(a, b)| a * b).sum::<f64>() / pp)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct BoundCheck {
    pub lhs: f64,
    pub rhs: f64,
    /// Constant in front of `||f||^2` on the right side (trace: `2/a`
    /// scaled by the weights; form: the explicit relative-bound constant).
    pub zeroth_coefficient: f64,
}

/// Vertex trace bound: `|f(v)|^2 <= |p|^{-2} (a ||f'||^2 + (2/a) ||f||^2)`
/// for `0 < a <= l_-`. Returns both sides evaluated by quadrature.
pub fn trace_bound_check(graph: &StarGraph, f: &GraphFunction, a: f64) -> Result<BoundCheck> {
    if !(a > 0.0) || a > graph.min_length() {
        return Err(Error::Invalid(format!(
            "trace parameter must satisfy 0 < a <= {}, got {a}",
            graph.min_length()
        )));
    }
    let fv = f.vertex_value(graph)?;
    let pp = graph.weight_norm_sq();
    let lhs = fv * fv;
    let rhs = (a * f.h1_seminorm_sq() + (2.0 / a) * f.norm_sq()) / pp;
    Ok(BoundCheck { lhs, rhs, zeroth_coefficient: 2.0 / (a * pp) })
}

/// Relative form bound for the delta term:
/// `|q| |f(v)|^2 <= eta ||f'||^2 + C_eta ||f||^2` with the explicit `C_eta`.
pub fn form_bound_check(graph: &StarGraph, f: &GraphFunction, eta: f64) -> Result<BoundCheck> {
    if !(eta > 0.0 && eta < 1.0) {
        return Err(Error::Invalid(format!("eta must lie in (0,1), got {eta}")));
    }
    let q = graph.delta_strength().ok_or_else(|| {
        Error::Invalid("form bound applies to delta couplings only".into())
    })?;
    let fv = f.vertex_value(graph)?;
    let c_eta = estimates::c_eta(q, graph.weight_norm_sq(), graph.min_length(), eta);
    let lhs = q.abs() * fv * fv;
    let rhs = eta * f.h1_seminorm_sq() + c_eta * f.norm_sq();
    Ok(BoundCheck { lhs, rhs, zeroth_coefficient: c_eta })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn kirchhoff3() -> StarGraph {
        StarGraph::unit_star(3, Coupling::Delta { q: 0.0 })
    }

    #[test]
    fn constructor_validates() {
        assert!(StarGraph::build_star(1, &[1.0], &[1.0], Coupling::Delta { q: 0.0 }).is_err());
        assert!(
            StarGraph::build_star(2, &[1.0, -1.0], &[1.0, 1.0], Coupling::Delta { q: 0.0 })
                .is_err()
        );
        assert!(
            StarGraph::build_star(2, &[1.0, 1.0], &[0.0, 1.0], Coupling::Delta { q: 0.0 })
                .is_err()
        );
        // delta-prime needs the unit normalization
        assert!(StarGraph::build_star(
            3,
            &[1.0, 2.0, 1.0],
            &[1.0, 1.0, 1.0],
            Coupling::DeltaPrimeS { beta: -1.0 }
        )
        .is_err());
        let g = StarGraph::build_star(
            3,
            &[1.0, 1.0, 1.0],
            &[1.0, 1.0, 1.0],
            Coupling::DeltaPrimeS { beta: -1.0 },
        )
        .unwrap();
        assert_eq!(g.n(), 3);
    }

    #[test]
    fn derived_quantities() {
        let g = StarGraph::build_star(
            3,
            &[2.0, 0.5, 1.0],
            &[1.0, 2.0, 1.0],
            Coupling::Delta { q: -1.0 },
        )
        .unwrap();
        assert_eq!(g.min_length(), 0.5);
        assert_eq!(g.length_floor(), 0.5);
        assert_eq!(g.weight_norm_sq(), 6.0);
        assert_eq!(g.volume(), 2.0 + 2.0 + 1.0);
    }

    #[test]
    fn json_roundtrip() {
        let g = StarGraph::from_json(
            r#"{"edges":[{"length":1.0,"weight":1.0},{"length":2.0,"weight":0.5}],
                "coupling":{"type":"delta","strength":-1.5}}"#,
        )
        .unwrap();
        assert_eq!(g.n(), 2);
        assert_eq!(g.coupling(), Coupling::Delta { q: -1.5 });
        assert_eq!(g.edges()[1].weight, 0.5);

        let k = StarGraph::from_json(
            r#"{"edges":[{"length":1.0,"weight":1.0},{"length":1.0,"weight":1.0}],
                "coupling":{"type":"kirchhoff"}}"#,
        )
        .unwrap();
        assert_eq!(k.coupling(), Coupling::Delta { q: 0.0 });

        let dp = StarGraph::from_json(
            r#"{"edges":[{"length":1.0,"weight":1.0},{"length":1.0,"weight":1.0},{"length":1.0,"weight":1.0}],
                "coupling":{"type":"delta_prime_s","strength":-1.0}}"#,
        )
        .unwrap();
        assert_eq!(dp.coupling(), Coupling::DeltaPrimeS { beta: -1.0 });

        assert!(StarGraph::from_json(
            r#"{"edges":[{"length":1.0,"weight":1.0},{"length":1.0,"weight":1.0}],
                "coupling":{"type":"kirchhoff","strength":2.0}}"#
        )
        .is_err());
    }

    #[test]
    fn trace_bound_constant_function() {
        let g = kirchhoff3();
        let f = GraphFunction::from_fn(&g, 1e-3, |_, _| 1.0).unwrap();
        let b = trace_bound_check(&g, &f, 1.0).unwrap();
        assert_relative_eq!(b.lhs, 1.0, epsilon = 1e-12);
        assert_relative_eq!(b.rhs, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn trace_bound_zero_function() {
        let g = kirchhoff3();
        let f = GraphFunction::from_fn(&g, 1e-3, |_, _| 0.0).unwrap();
        let b = trace_bound_check(&g, &f, 0.7).unwrap();
        assert_eq!(b.lhs, 0.0);
        assert_eq!(b.rhs, 0.0);
    }

    #[test]
    fn trace_bound_rejects_bad_a() {
        let g = kirchhoff3();
        let f = GraphFunction::from_fn(&g, 1e-2, |_, _| 1.0).unwrap();
        assert!(trace_bound_check(&g, &f, 0.0).is_err());
        assert!(trace_bound_check(&g, &f, 1.5).is_err());
    }

    #[test]
    fn form_bound_hand_example() {
        // f = 1, q = -1, p = (1,1,1), eta = 1/2:
        // a = min(eta |p|^2 / |q|, l_-) = 1, C_eta = 2 max(q^2/(eta |p|^4), |q|/(l_- |p|^2)) = 2/3
        let g = StarGraph::build_star(
            3,
            &[1.0; 3],
            &[1.0; 3],
            Coupling::Delta { q: -1.0 },
        )
        .unwrap();
        let f = GraphFunction::from_fn(&g, 1e-3, |_, _| 1.0).unwrap();
        let b = form_bound_check(&g, &f, 0.5).unwrap();
        assert_relative_eq!(b.zeroth_coefficient, 2.0 / 3.0, epsilon = 1e-14);
        assert_relative_eq!(b.lhs, 1.0, epsilon = 1e-12);
        assert_relative_eq!(b.rhs, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn form_bound_zero_strength() {
        let g = kirchhoff3();
        let f = GraphFunction::smooth_sample(&g, 1e-3, 7).unwrap();
        let b = form_bound_check(&g, &f, 0.3).unwrap();
        assert_eq!(b.lhs, 0.0);
    }

    #[test]
    fn form_bound_strong_negative() {
        let g = StarGraph::build_star(
            3,
            &[1.0; 3],
            &[1.0; 3],
            Coupling::Delta { q: -5.0 },
        )
        .unwrap();
        for seed in 0..50 {
            let f = GraphFunction::smooth_sample(&g, 1e-3, seed).unwrap();
            let b = form_bound_check(&g, &f, 0.1).unwrap();
            assert!(
                b.lhs <= b.rhs * 1.05,
                "seed {seed}: lhs {} rhs {}",
                b.lhs,
                b.rhs
            );
        }
    }

    #[test]
    fn endpoint_vector_in_weight_span_by_construction() {
        let g = StarGraph::build_star(
            3,
            &[1.0, 0.8, 1.3],
            &[1.0, 2.0, 0.5],
            Coupling::Delta { q: -2.0 },
        )
        .unwrap();
        for seed in [0u64, 1, 2, 99] {
            let f = GraphFunction::smooth_sample(&g, 1e-3, seed).unwrap();
            assert!(f.membership_residual(&g) < 1e-12);
            let fv = f.vertex_value(&g).unwrap();
            for (e, edge) in g.edges().iter().enumerate() {
                assert_relative_eq!(f.values()[e][0], fv * edge.weight, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn trace_bound_thousand_seeds() {
        let g = StarGraph::build_star(
            3,
            &[1.0, 0.6, 1.4],
            &[1.0, 1.5, 0.7],
            Coupling::Delta { q: 0.0 },
        )
        .unwrap();
        let l = g.min_length();
        for seed in 0..1000u64 {
            let f = GraphFunction::smooth_sample(&g, 1e-3, seed).unwrap();
            let a = l * (0.1 + 0.9 * ((seed % 10) as f64) / 10.0);
            let b = trace_bound_check(&g, &f, a).unwrap();
            assert!(
                b.lhs <= b.rhs * 1.05,
                "seed {seed}: lhs {} rhs {}",
                b.lhs,
                b.rhs
            );
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn trace_bound_holds_for_arbitrary_smooth_functions(
            c0 in -2.0..2.0f64,
            coef in proptest::collection::vec(-1.0..1.0f64, 12),
            l1 in 0.3..2.0f64,
            l2 in 0.3..2.0f64,
            l3 in 0.3..2.0f64,
            w1 in 0.5..2.0f64,
            w2 in 0.5..2.0f64,
            w3 in 0.5..2.0f64,
            afrac in 0.05..1.0f64,
        ) {
            let g = StarGraph::build_star(
                3,
                &[l1, l2, l3],
                &[w1, w2, w3],
                Coupling::Delta { q: 0.0 },
            ).unwrap();
            let lengths = g.lengths();
            let weights = g.weights();
            let f = GraphFunction::from_fn(&g, 1e-3, |e, s| {
                let mut v = c0;
                for m in 0..4 {
                    let w = (m + 1) as f64 * std::f64::consts::PI / lengths[e];
                    v += coef[4 * e + m] / ((m + 1) as f64 * (m + 1) as f64)
                        * ((w * s).cos() - 1.0);
                }
                weights[e] * v
            }).unwrap();
            let a = afrac * g.min_length();
            let b = trace_bound_check(&g, &f, a).unwrap();
            prop_assert!(b.lhs <= b.rhs * 1.05 + 1e-12);
        }
    }
}
