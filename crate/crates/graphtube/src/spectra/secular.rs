//! Closed-form secular equations for star graphs.
//!
//! Unit stars split into a symmetric branch (radial eigenfunctions, simple
//! eigenvalues) and an antisymmetric branch of multiplicity n-1. Weighted
//! stars with generic edge data use a product-form secular function with no
//! poles; multiplicities there come out of root clustering only, so that
//! solver is meant for incommensurate edge lengths.

use super::{scan_roots, ModelKind, SolverKind, SpectralResult, CLUSTER_GAP};
use crate::graph::{Coupling, StarGraph};
use crate::{Error, Result};

const K_STEP: f64 = 0.01;
const DEDUP: f64 = 1e-6;

/// Solve cosh(kappa) + (beta kappa / n) sinh(kappa) = 0 for the single
/// negative eigenvalue -kappa^2 of the delta-prime star. Returns `None` when
/// beta >= 0 (no negative spectrum).
pub fn solve_kappa_beta(beta: f64, n: usize) -> Result<Option<f64>> {
    if n < 2 {
        return Err(Error::Invalid("star needs degree >= 2".into()));
    }
    if beta >= 0.0 {
        return Ok(None);
    }
    // normalized: 1 + (beta kappa / n) tanh(kappa), strictly decreasing
    let g = |k: f64| 1.0 + beta * k * k.tanh() / n as f64;
    // g(k) < 0 once beta k tanh k < -n; tanh k >= tanh 1 past k = 1
    let hi = (1.0 + n as f64 / (-beta) / 1f64.tanh()).max(2.0);
    let roots = scan_roots(g, 1e-9, hi + 1.0, K_STEP, DEDUP)?;
    debug_assert_eq!(roots.len(), 1);
    Ok(roots.first().copied())
}

/// Spectrum of the unit star with a delta coupling of strength `q` at the
/// center, Neumann outer ends, up to spectral parameter `k_max` (so all
/// eigenvalues through `k_max^2`).
pub fn star_delta_spectrum(q: f64, n: usize, k_max: f64) -> Result<SpectralResult> {
    if n < 2 {
        return Err(Error::Invalid("star needs degree >= 2".into()));
    }
    let nf = n as f64;
    let mut values: Vec<f64> = Vec::new();
    let mut residual: f64 = 0.0;

    if q < 0.0 {
        // n kappa tanh(kappa) = -q, unique root
        let hi = (-q / nf + 2.0).max(4.0);
        let g = |k: f64| nf * k * k.tanh() + q;
        let roots = scan_roots(g, 1e-9, hi, K_STEP, DEDUP)?;
        debug_assert_eq!(roots.len(), 1);
        let kap = roots[0];
        // defect of the matching condition for f_e = cosh(kappa (1 - s))
        residual = residual.max((nf * kap * kap.sinh() + q * kap.cosh()).abs() / kap.cosh());
        values.push(-kap * kap);
    }
    if q == 0.0 {
        values.push(0.0); // constant eigenfunction
    }

    // symmetric branch: n k sin k = q cos k
    let sym = |k: f64| nf * k * k.sin() - q * k.cos();
    for k in scan_roots(sym, 1e-9, k_max, K_STEP, DEDUP)? {
        residual = residual.max(sym(k).abs() / (1.0 + nf * k));
        values.push(k * k);
    }
    // antisymmetric branch: cos k = 0, multiplicity n - 1
    let mut m = 0usize;
    loop {
        let k = (m as f64 + 0.5) * std::f64::consts::PI;
        if k > k_max {
            break;
        }
        residual = residual.max(k.cos().abs());
        for _ in 0..n - 1 {
            values.push(k * k);
        }
        m += 1;
    }

    let mut r = SpectralResult::from_values(values, CLUSTER_GAP, SolverKind::Secular, ModelKind::Graph);
    r.max_vertex_residual = Some(residual);
    Ok(r)
}

/// Spectrum of a weighted star with arbitrary edge lengths, delta coupling.
/// Uses the pole-free secular function
///   F(k) = sum_e p_e^2 k sin(k l_e) prod_{e' != e} cos(k l_e')
///          - q prod_e cos(k l_e),
/// whose positive roots are the positive eigenvalues. Roots of even local
/// multiplicity (commensurate lengths) do not produce sign changes, so feed
/// this generic edge data only.
pub fn star_delta_spectrum_weighted(graph: &StarGraph, k_max: f64) -> Result<SpectralResult> {
    let q = match graph.coupling() {
        Coupling::Delta { q } => q,
        _ => return Err(Error::Invalid("weighted secular solver covers delta couplings".into())),
    };
    let ls = graph.lengths();
    let ps = graph.weights();
    let n = ls.len();
    let sec = |k: f64| {
        let mut acc = 0.0;
        for e in 0..n {
            let mut term = ps[e] * ps[e] * k * (k * ls[e]).sin();
            for (e2, &l2) in ls.iter().enumerate() {
                if e2 != e {
                    term *= (k * l2).cos();
                }
            }
            acc += term;
        }
        let mut prod = q;
        for &l in &ls {
            prod *= (k * l).cos();
        }
        acc - prod
    };

    let mut values: Vec<f64> = Vec::new();
    let mut residual: f64 = 0.0;
    if q < 0.0 {
        // sum_e p_e^2 kappa tanh(kappa l_e) = -q; cleared of (positive) cosh
        let g = |k: f64| {
            let mut acc = q;
            for e in 0..n {
                acc += ps[e] * ps[e] * k * (k * ls[e]).tanh();
            }
            acc
        };
        let hi = (-q / graph.weight_norm_sq() / graph.min_length().tanh() + 2.0).max(4.0);
        let roots = scan_roots(g, 1e-9, hi, K_STEP, DEDUP)?;
        debug_assert_eq!(roots.len(), 1);
        let kap = roots[0];
        residual = residual.max(g(kap).abs() / (1.0 + kap));
        values.push(-kap * kap);
    }
    if q == 0.0 {
        values.push(0.0);
    }
    for k in scan_roots(sec, 1e-9, k_max, K_STEP, DEDUP)? {
        residual = residual.max(sec(k).abs() / (1.0 + k * k));
        values.push(k * k);
    }
    let mut r = SpectralResult::from_values(values, CLUSTER_GAP, SolverKind::Secular, ModelKind::Graph);
    r.max_vertex_residual = Some(residual);
    Ok(r)
}

/// Spectrum of the unit star with the symmetric delta-prime coupling of
/// strength `beta`: common outward derivative at the center and
/// sum_e f_e(0) = beta f'(v).
pub fn star_deltaprime_spectrum(beta: f64, n: usize, k_max: f64) -> Result<SpectralResult> {
    if n < 2 {
        return Err(Error::Invalid("star needs degree >= 2".into()));
    }
    let nf = n as f64;
    let mut values: Vec<f64> = Vec::new();
    let mut residual: f64 = 0.0;

    if let Some(kap) = solve_kappa_beta(beta, n)? {
        residual = residual
            .max((kap.cosh() + beta * kap * kap.sinh() / nf).abs() / kap.cosh() * nf);
        values.push(-kap * kap);
    }

    // piecewise-constant kernel with zero mean: multiplicity n - 1 for every
    // coupling strength
    for _ in 0..n - 1 {
        values.push(0.0);
    }

    // symmetric branch: n cos k = beta k sin k
    let sym = |k: f64| nf * k.cos() - beta * k * k.sin();
    for k in scan_roots(sym, 1e-9, k_max, K_STEP, DEDUP)? {
        residual = residual.max(sym(k).abs() / (1.0 + beta.abs() * k));
        values.push(k * k);
    }
    // antisymmetric branch: sin k = 0, k > 0, multiplicity n - 1
    let mut m = 1usize;
    loop {
        let k = m as f64 * std::f64::consts::PI;
        if k > k_max {
            break;
        }
        residual = residual.max(k.sin().abs());
        for _ in 0..n - 1 {
            values.push(k * k);
        }
        m += 1;
    }

    let mut r = SpectralResult::from_values(values, CLUSTER_GAP, SolverKind::Secular, ModelKind::Graph);
    r.max_vertex_residual = Some(residual);
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{Coupling, StarGraph};
    use approx::assert_relative_eq;

    #[test]
    fn kappa_known_values() {
        // tanh(kappa) = 1/kappa at beta = -3, n = 3
        let k = solve_kappa_beta(-3.0, 3).unwrap().unwrap();
        assert_relative_eq!(k, 1.1996786402577338, max_relative = 1e-10);
        let k = solve_kappa_beta(-1.0, 3).unwrap().unwrap();
        assert_relative_eq!(k, 3.0144827760337728, max_relative = 1e-10);
        assert!(solve_kappa_beta(0.0, 3).unwrap().is_none());
        assert!(solve_kappa_beta(2.0, 4).unwrap().is_none());
    }

    #[test]
    fn delta_attractive_star() {
        // q = -1, n = 3
        let r = star_delta_spectrum(-1.0, 3, 2.1 * std::f64::consts::PI).unwrap();
        let flat = r.flattened();
        let expect = [
            -0.37387512778192252,
            2.4674011002723395,
            2.4674011002723395,
            9.19361493294795,
            22.206609902451056,
            22.206609902451056,
            38.809528533147,
        ];
        assert_eq!(flat.len(), expect.len());
        for (a, b) in flat.iter().zip(expect) {
            assert_relative_eq!(*a, b, max_relative = 1e-9);
        }
        assert_eq!(r.multiplicities[1], 2);
        assert!(r.max_vertex_residual.unwrap() < 1e-6);
    }

    #[test]
    fn delta_kirchhoff_star() {
        // q = 0: spectrum is 0 plus (m pi/2)^2 style branches; lowest is 0 simple
        let r = star_delta_spectrum(0.0, 3, 7.0).unwrap();
        assert_eq!(r.eigenvalues[0], 0.0);
        assert_eq!(r.multiplicities[0], 1);
        // sym branch roots at k = m pi, antisym at (m + 1/2) pi
        let pi = std::f64::consts::PI;
        assert_relative_eq!(r.eigenvalues[1], (pi / 2.0) * (pi / 2.0), max_relative = 1e-10);
        assert_eq!(r.multiplicities[1], 2);
        assert_relative_eq!(r.eigenvalues[2], pi * pi, max_relative = 1e-10);
    }

    #[test]
    fn delta_repulsive_has_no_negative_or_zero() {
        let r = star_delta_spectrum(2.5, 4, 5.0).unwrap();
        assert!(r.eigenvalues[0] > 0.0);
    }

    #[test]
    fn deltaprime_attractive_star() {
        let r = star_deltaprime_spectrum(-1.0, 3, 2.01 * std::f64::consts::PI).unwrap();
        let flat = r.flattened();
        let expect = [
            -9.0871064070042813,
            0.0,
            0.0,
            4.85993221478,
            9.86960440109,
            9.86960440109,
            33.7129047533,
            39.4784176044,
            39.4784176044,
        ];
        assert_eq!(flat.len(), expect.len());
        for (a, b) in flat.iter().zip(expect) {
            if b == 0.0 {
                assert_eq!(*a, 0.0);
            } else {
                assert_relative_eq!(*a, b, max_relative = 1e-9);
            }
        }
        assert!(r.max_vertex_residual.unwrap() < 1e-6);
    }

    #[test]
    fn deltaprime_repulsive_star() {
        let r = star_deltaprime_spectrum(1.0, 3, 7.0).unwrap();
        // zero has multiplicity n - 1 = 2 even for beta > 0
        assert_eq!(r.eigenvalues[0], 0.0);
        assert_eq!(r.multiplicities[0], 2);
        let flat = r.flattened();
        assert_relative_eq!(flat[2], 1.42195805966241, max_relative = 1e-9);
        assert_relative_eq!(flat[5], 14.5066696424029, max_relative = 1e-9);
        assert_relative_eq!(flat[8], 44.943023043624, max_relative = 1e-9);
    }

    #[test]
    fn deltaprime_large_beta_approaches_decoupled() {
        // beta -> +-inf: symmetric branch roots approach the antisymmetric
        // family sin k = 0, so eigenvalues pair up near (m pi)^2
        for beta in [1e6, -1e6] {
            let r = star_deltaprime_spectrum(beta, 3, 7.0).unwrap();
            let pi = std::f64::consts::PI;
            let ks: Vec<f64> = r
                .eigenvalues
                .iter()
                .filter(|&&v| v > 0.1)
                .map(|v| v.sqrt())
                .collect();
            assert!((ks[0] - pi).abs() < 1e-4);
            assert!((ks[1] - pi).abs() < 1e-4);
            assert!((ks[2] - 2.0 * pi).abs() < 1e-4);
            assert!((ks[3] - 2.0 * pi).abs() < 1e-4);
        }
    }

    #[test]
    fn degree_two_kirchhoff_matches_neumann_interval() {
        // an invisible degree-2 vertex: the unit 2-star with q = 0 carries the
        // spectrum of the length-2 Neumann interval, (m pi / 2)^2
        let r = star_delta_spectrum(0.0, 2, 9.9).unwrap();
        let flat = r.flattened();
        let pi = std::f64::consts::PI;
        for (m, v) in flat.iter().enumerate() {
            let exact = (m as f64 * pi / 2.0).powi(2);
            assert!((v - exact).abs() <= 1e-10 * (1.0 + exact));
        }
    }

    #[test]
    fn weighted_matches_unit_on_generic_lengths() {
        // unequal lengths so that the product-form secular has simple roots
        let g = StarGraph::build_star(
            3,
            &[0.9, 1.3, 0.7],
            &[1.0, 1.0, 1.0],
            Coupling::Delta { q: -1.0 },
        )
        .unwrap();
        let r = star_delta_spectrum_weighted(&g, 8.0).unwrap();
        assert!(r.eigenvalues[0] < 0.0);
        assert!(r.max_vertex_residual.unwrap() < 1e-6);
        // cross-check the negative eigenvalue against the scalar equation
        let kap = (-r.eigenvalues[0]).sqrt();
        let resid = kap * ((kap * 0.9).tanh() + (kap * 1.3).tanh() + (kap * 0.7).tanh()) - 1.0;
        assert!(resid.abs() < 1e-9);
    }

    #[test]
    fn weighted_reduces_to_unit_star() {
        let g = StarGraph::unit_star(3, Coupling::Delta { q: -1.0 });
        // perturb lengths infinitesimally is not needed; unit lengths make the
        // antisymmetric roots even-order for the product form, so compare only
        // the simple branch values
        let rw = star_delta_spectrum_weighted(&g, 7.0).unwrap();
        let ru = star_delta_spectrum(-1.0, 3, 7.0).unwrap();
        assert_relative_eq!(rw.eigenvalues[0], ru.eigenvalues[0], max_relative = 1e-10);
        // the weighted scan sees the simple symmetric roots
        for v in &rw.eigenvalues {
            assert!(ru.eigenvalues.iter().any(|u| (u - v).abs() < 1e-7 * (1.0 + v.abs())));
        }
    }
}
