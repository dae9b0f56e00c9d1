//! Second-order finite-difference oracle for the star operators. Built
//! independently of the secular solvers so the two can cross-check each
//! other: piecewise-linear stiffness on a uniform grid per edge, trapezoid
//! mass, coupling terms written directly into the matrices.

use super::{intermediate::IntermediateParams, ModelKind, SolverKind, SpectralResult};
use crate::graph::{Coupling, StarGraph};
use crate::linalg::{lowest, EigOpts, SymCsr, Triplet};
use crate::{Error, Result};

/// Discretized eigenvalue problem K x = lambda M x together with the grid
/// layout needed to interpret dof vectors.
pub struct FdSystem {
    pub k: SymCsr<f64>,
    pub m: SymCsr<f64>,
    /// dof of the shared center value, when the scheme has one
    pub center: Option<usize>,
    /// first dof of each edge's chain (excluding a shared center)
    pub edge_offsets: Vec<usize>,
    /// dofs in each edge chain
    pub edge_nodes: Vec<usize>,
    /// grid step per edge (uniform within an edge for graph couplings)
    pub steps: Vec<f64>,
}

impl FdSystem {
    pub fn dim(&self) -> usize {
        self.k.n()
    }
}

/// Hard ceiling on the discrete dimension; keeps oracle runs at desk scale.
pub const FD_DIM_GUARD: usize = 200_000;

fn check_dim(dim: usize) -> Result<()> {
    if dim > FD_DIM_GUARD {
        return Err(Error::TooLarge { size: dim, guard: FD_DIM_GUARD });
    }
    Ok(())
}

fn check_step(h: f64, l_minus: f64) -> Result<()> {
    if !(h > 0.0) {
        return Err(Error::Invalid("grid step must be positive".into()));
    }
    if h > l_minus / 10.0 {
        return Err(Error::Invalid(format!(
            "grid step {h} too coarse for shortest edge {l_minus}; need h <= l/10"
        )));
    }
    Ok(())
}

/// Assemble the finite-difference system for a star graph with its coupling.
pub fn fd_graph_system(graph: &StarGraph, h: f64) -> Result<FdSystem> {
    check_step(h, graph.min_length())?;
    match graph.coupling() {
        Coupling::Delta { q } => fd_delta(graph, h, q),
        Coupling::DeltaPrimeS { beta } => {
            if beta == 0.0 {
                fd_deltaprime_constrained(graph, h)
            } else {
                fd_deltaprime(graph, h, beta)
            }
        }
    }
}

fn cells_for(l: f64, h: f64) -> (usize, f64) {
    let n = (l / h).ceil().max(1.0) as usize;
    (n, l / n as f64)
}

fn fd_delta(graph: &StarGraph, h: f64, q: f64) -> Result<FdSystem> {
    let n = graph.n();
    let lengths = graph.lengths();
    let weights = graph.weights();
    let mut edge_offsets = Vec::with_capacity(n);
    let mut edge_nodes = Vec::with_capacity(n);
    let mut steps = Vec::with_capacity(n);
    let mut dim = 1usize; // center
    for e in 0..n {
        let (cells, he) = cells_for(lengths[e], h);
        edge_offsets.push(dim);
        edge_nodes.push(cells);
        steps.push(he);
        dim += cells;
    }
    check_dim(dim)?;

    let mut kt: Vec<Triplet<f64>> = Vec::new();
    let mut mt: Vec<Triplet<f64>> = Vec::new();
    kt.push((0, 0, q));
    let mut m_center = 0.0;
    for e in 0..n {
        let he = steps[e];
        let p = weights[e];
        let off = edge_offsets[e] as u32;
        let cells = edge_nodes[e];
        // first cell couples the chain to p_e * (center value)
        kt.push((0, 0, p * p / he));
        kt.push((0, off, -p / he));
        kt.push((off, off, 1.0 / he));
        for j in 1..cells {
            let a = off + (j - 1) as u32;
            let b = off + j as u32;
            kt.push((b, b, 1.0 / he));
            kt.push((a, a, 1.0 / he));
            kt.push((a, b, -1.0 / he));
        }
        m_center += p * p * he / 2.0;
        for j in 0..cells {
            let w = if j + 1 == cells { he / 2.0 } else { he };
            mt.push((off + j as u32, off + j as u32, w));
        }
    }
    mt.push((0, 0, m_center));
    Ok(FdSystem {
        k: SymCsr::from_triplets(dim, &kt),
        m: SymCsr::from_triplets(dim, &mt),
        center: Some(0),
        edge_offsets,
        edge_nodes,
        steps,
    })
}

fn deltaprime_layout(graph: &StarGraph, h: f64) -> (Vec<usize>, Vec<usize>, Vec<f64>, usize) {
    let n = graph.n();
    let lengths = graph.lengths();
    let mut edge_offsets = Vec::with_capacity(n);
    let mut edge_nodes = Vec::with_capacity(n);
    let mut steps = Vec::with_capacity(n);
    let mut dim = 0usize;
    for e in 0..n {
        let (cells, he) = cells_for(lengths[e], h);
        edge_offsets.push(dim);
        edge_nodes.push(cells + 1); // nodes 0..=cells, no sharing
        steps.push(he);
        dim += cells + 1;
    }
    (edge_offsets, edge_nodes, steps, dim)
}

fn edge_chain(
    kt: &mut Vec<Triplet<f64>>,
    mt: &mut Vec<Triplet<f64>>,
    off: u32,
    nodes: usize,
    he: f64,
) {
    for j in 0..nodes - 1 {
        let a = off + j as u32;
        let b = off + j as u32 + 1;
        kt.push((a, a, 1.0 / he));
        kt.push((b, b, 1.0 / he));
        kt.push((a, b, -1.0 / he));
    }
    for j in 0..nodes {
        let w = if j == 0 || j + 1 == nodes { he / 2.0 } else { he };
        mt.push((off + j as u32, off + j as u32, w));
    }
}

fn fd_deltaprime(graph: &StarGraph, h: f64, beta: f64) -> Result<FdSystem> {
    let (edge_offsets, edge_nodes, steps, dim) = deltaprime_layout(graph, h);
    check_dim(dim)?;
    let mut kt: Vec<Triplet<f64>> = Vec::new();
    let mut mt: Vec<Triplet<f64>> = Vec::new();
    for e in 0..graph.n() {
        edge_chain(&mut kt, &mut mt, edge_offsets[e] as u32, edge_nodes[e], steps[e]);
    }
    // (1/beta) |sum_e f_e(0)|^2 over the inner endpoint dofs
    for e in 0..graph.n() {
        let de = edge_offsets[e] as u32;
        for e2 in e..graph.n() {
            kt.push((de, edge_offsets[e2] as u32, 1.0 / beta));
        }
    }
    Ok(FdSystem {
        k: SymCsr::from_triplets(dim, &kt),
        m: SymCsr::from_triplets(dim, &mt),
        center: None,
        edge_offsets,
        edge_nodes,
        steps,
    })
}

/// beta = 0: the endpoint values must sum to zero. The first edge's inner
/// endpoint is eliminated, f_{0}(0) = -sum_{e>=1} f_e(0), which makes both
/// matrices pick up a dense block over the surviving endpoint dofs (the mass
/// matrix stops being diagonal).
fn fd_deltaprime_constrained(graph: &StarGraph, h: f64) -> Result<FdSystem> {
    let n = graph.n();
    let lengths = graph.lengths();
    let mut edge_offsets = Vec::with_capacity(n);
    let mut edge_nodes = Vec::with_capacity(n);
    let mut steps = Vec::with_capacity(n);
    let mut dim = 0usize;
    for e in 0..n {
        let (cells, he) = cells_for(lengths[e], h);
        edge_offsets.push(dim);
        // edge 0 loses its inner endpoint dof
        edge_nodes.push(if e == 0 { cells } else { cells + 1 });
        steps.push(he);
        dim += edge_nodes[e];
    }
    check_dim(dim)?;

    let mut kt: Vec<Triplet<f64>> = Vec::new();
    let mut mt: Vec<Triplet<f64>> = Vec::new();
    // edges >= 1 are plain chains
    for e in 1..n {
        edge_chain(&mut kt, &mut mt, edge_offsets[e] as u32, edge_nodes[e], steps[e]);
    }
    // edge 0: nodes are s = h, 2h, ... ; its endpoint value is the negated
    // sum of the other edges' endpoint dofs
    let he = steps[0];
    let off0 = edge_offsets[0] as u32;
    let nodes0 = edge_nodes[0];
    for j in 0..nodes0 - 1 {
        let a = off0 + j as u32;
        let b = off0 + j as u32 + 1;
        kt.push((a, a, 1.0 / he));
        kt.push((b, b, 1.0 / he));
        kt.push((a, b, -1.0 / he));
    }
    for j in 0..nodes0 {
        let w = if j + 1 == nodes0 { he / 2.0 } else { he };
        mt.push((off0 + j as u32, off0 + j as u32, w));
    }
    // first cell of edge 0: (f_{0,1} + sum_e y_e)^2 / h with y_e the other
    // endpoints; mass of the eliminated node: (h/2) (sum_e y_e)^2
    let mut group: Vec<u32> = vec![off0];
    for e in 1..n {
        group.push(edge_offsets[e] as u32);
    }
    for (i, &gi) in group.iter().enumerate() {
        for &gj in group.iter().skip(i) {
            kt.push((gi, gj, 1.0 / he));
        }
    }
    for (i, &gi) in group.iter().enumerate().skip(1) {
        for &gj in group.iter().skip(i) {
            mt.push((gi, gj, he / 2.0));
        }
    }
    Ok(FdSystem {
        k: SymCsr::from_triplets(dim, &kt),
        m: SymCsr::from_triplets(dim, &mt),
        center: None,
        edge_offsets,
        edge_nodes,
        steps,
    })
}

/// Assemble the intermediate operator on the unit star: center strength b,
/// satellites of strength c at arclength a (placed exactly on a grid node).
pub fn fd_intermediate_system(params: &IntermediateParams, h: f64) -> Result<FdSystem> {
    check_step(h, 1.0)?;
    let IntermediateParams { n, a, b, c } = *params;
    let n1 = ((a / h).round().max(1.0)) as usize;
    let h1 = a / n1 as f64;
    let n2 = (((1.0 - a) / h).round().max(1.0)) as usize;
    let h2 = (1.0 - a) / n2 as f64;
    let nodes_per_edge = n1 + n2;
    let dim = 1 + n * nodes_per_edge;
    check_dim(dim)?;

    let mut kt: Vec<Triplet<f64>> = Vec::new();
    let mut mt: Vec<Triplet<f64>> = Vec::new();
    kt.push((0, 0, b));
    let mut edge_offsets = Vec::with_capacity(n);
    for e in 0..n {
        let off = (1 + e * nodes_per_edge) as u32;
        edge_offsets.push(off as usize);
        let step_of = |cell: usize| if cell < n1 { h1 } else { h2 };
        // cell 0 joins the center
        kt.push((0, 0, 1.0 / h1));
        kt.push((0, off, -1.0 / h1));
        kt.push((off, off, 1.0 / h1));
        for j in 1..nodes_per_edge {
            let he = step_of(j);
            let p = off + j as u32 - 1;
            let q = off + j as u32;
            kt.push((p, p, 1.0 / he));
            kt.push((q, q, 1.0 / he));
            kt.push((p, q, -1.0 / he));
        }
        // satellite delta sits at the grid node with s = a, dof off + n1 - 1
        let sat = off + n1 as u32 - 1;
        kt.push((sat, sat, c));
        // trapezoid mass with the step change at the satellite
        for j in 0..nodes_per_edge {
            let left = step_of(j);
            let right = if j + 1 < nodes_per_edge { step_of(j + 1) } else { 0.0 };
            let w = if j + 1 == nodes_per_edge { left / 2.0 } else { (left + right) / 2.0 };
            mt.push((off + j as u32, off + j as u32, w));
        }
    }
    mt.push((0, 0, n as f64 * h1 / 2.0));
    Ok(FdSystem {
        k: SymCsr::from_triplets(dim, &kt),
        m: SymCsr::from_triplets(dim, &mt),
        center: Some(0),
        edge_offsets,
        edge_nodes: vec![nodes_per_edge; n],
        steps: vec![h1; n],
    })
}

/// Lowest `count` eigenvalues of the discretized star operator.
pub fn fd_oracle(graph: &StarGraph, h: f64, count: usize) -> Result<SpectralResult> {
    let sys = fd_graph_system(graph, h)?;
    solve_system(&sys, count)
}

/// Lowest `count` eigenvalues of the discretized intermediate operator.
pub fn fd_oracle_intermediate(
    params: &IntermediateParams,
    h: f64,
    count: usize,
) -> Result<SpectralResult> {
    let sys = fd_intermediate_system(params, h)?;
    solve_system(&sys, count)
}

fn solve_system(sys: &FdSystem, count: usize) -> Result<SpectralResult> {
    let eigs = lowest(&sys.k, &sys.m, &EigOpts { count, ..EigOpts::default() })?;
    let mut r = SpectralResult::from_values(
        eigs.values.clone(),
        1e-7,
        SolverKind::FdOracle,
        ModelKind::Graph,
    );
    r.eigenvectors = Some(eigs.vectors);
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::inertia_below;
    use crate::spectra::{
        intermediate_spectrum_raw, star_delta_spectrum, star_deltaprime_spectrum,
    };

    fn unit(coupling: Coupling) -> StarGraph {
        StarGraph::unit_star(3, coupling)
    }

    #[test]
    fn delta_oracle_matches_secular() {
        let g = unit(Coupling::Delta { q: -1.0 });
        let fd = fd_oracle(&g, 1e-3, 6).unwrap();
        let sec = star_delta_spectrum(-1.0, 3, 7.0).unwrap();
        let target = sec.flattened();
        for (a, b) in fd.flattened().iter().zip(&target[..6]) {
            assert!((a - b).abs() <= 1e-3 * (1.0 + b.abs()), "{a} vs {b}");
        }
    }

    #[test]
    fn deltaprime_oracle_matches_secular() {
        let g = unit(Coupling::DeltaPrimeS { beta: -1.0 });
        let fd = fd_oracle(&g, 1e-3, 6).unwrap();
        let sec = star_deltaprime_spectrum(-1.0, 3, 7.0).unwrap();
        let target = sec.flattened();
        for (a, b) in fd.flattened().iter().zip(&target[..6]) {
            assert!((a - b).abs() <= 1e-3 * (1.0 + b.abs()), "{a} vs {b}");
        }
    }

    #[test]
    fn deltaprime_constrained_oracle() {
        // beta = 0 keeps the zero modes of multiplicity n-1 and the branch
        // eigenvalues n cos k = 0 -> k = (m + 1/2) pi on the symmetric part
        let g = unit(Coupling::DeltaPrimeS { beta: 0.0 });
        let fd = fd_oracle(&g, 1e-3, 6).unwrap();
        let sec = star_deltaprime_spectrum(0.0, 3, 7.0).unwrap();
        let target = sec.flattened();
        for (a, b) in fd.flattened().iter().zip(&target[..6]) {
            assert!((a - b).abs() <= 1e-3 * (1.0 + b.abs()), "{a} vs {b}");
        }
    }

    #[test]
    fn intermediate_oracle_matches_secular() {
        let p = IntermediateParams::from_beta(-1.0, 0.1, 3).unwrap();
        let fd = fd_oracle_intermediate(&p, 1e-3, 6).unwrap();
        let sec = intermediate_spectrum_raw(-1.0, 0.1, 3, 7.0).unwrap();
        let target = sec.flattened();
        for (a, b) in fd.flattened().iter().zip(&target[..6]) {
            assert!((a - b).abs() <= 1e-3 * (1.0 + b.abs()), "{a} vs {b}");
        }
    }

    #[test]
    fn weighted_delta_oracle_matches_secular() {
        let g = StarGraph::build_star(
            3,
            &[0.9, 1.3, 0.7],
            &[1.2, 0.8, 1.0],
            Coupling::Delta { q: -2.0 },
        )
        .unwrap();
        let fd = fd_oracle(&g, 5e-4, 5).unwrap();
        let sec = crate::spectra::star_delta_spectrum_weighted(&g, 9.0).unwrap();
        let target = sec.flattened();
        for (a, b) in fd.flattened().iter().zip(&target[..5]) {
            assert!((a - b).abs() <= 1e-3 * (1.0 + b.abs()), "{a} vs {b}");
        }
    }

    #[test]
    fn negative_count_matches_branch_prediction() {
        // delta: exactly one negative eigenvalue iff q < 0
        for (q, expect) in [(-1.0, 1usize), (0.0, 0), (2.0, 0)] {
            let sys = fd_graph_system(&unit(Coupling::Delta { q }), 2e-3).unwrap();
            let (neg, _) = inertia_below(&sys.k, &sys.m, 0.0).unwrap();
            assert_eq!(neg, expect, "q = {q}");
        }
        // delta-prime: one negative iff beta < 0
        for (beta, expect) in [(-3.0, 1usize), (1.0, 0)] {
            let sys = fd_graph_system(&unit(Coupling::DeltaPrimeS { beta }), 2e-3).unwrap();
            let (neg, _) = inertia_below(&sys.k, &sys.m, 0.0).unwrap();
            assert_eq!(neg, expect, "beta = {beta}");
        }
    }

    #[test]
    fn lower_bound_by_volume_ratio() {
        // min spec <= q / vol(graph) for the delta star, checked on the oracle
        let g = unit(Coupling::Delta { q: -1.0 });
        let fd = fd_oracle(&g, 1e-3, 1).unwrap();
        assert!(fd.eigenvalues[0] <= -1.0 / 3.0 + 1e-6);
    }

    #[test]
    fn oracle_rejects_bad_input() {
        let g = unit(Coupling::Delta { q: -1.0 });
        assert!(fd_oracle(&g, 0.2, 4).is_err()); // too coarse
        assert!(matches!(fd_graph_system(&g, 1e-6), Err(Error::TooLarge { .. })));
    }

    #[test]
    fn refinement_improves_quadratically() {
        let g = unit(Coupling::Delta { q: -1.0 });
        let exact = star_delta_spectrum(-1.0, 3, 4.0).unwrap().flattened()[3]; // 9.1936
        let mut errs = Vec::new();
        for h in [4e-3, 2e-3, 1e-3] {
            let fd = fd_oracle(&g, h, 4).unwrap();
            errs.push((fd.flattened()[3] - exact).abs());
        }
        // order two: each halving divides the error by about four
        assert!(errs[0] / errs[1] > 3.3 && errs[0] / errs[1] < 4.7);
        assert!(errs[1] / errs[2] > 3.3 && errs[1] / errs[2] < 4.7);
    }
}
