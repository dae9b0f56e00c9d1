//! Finite-dimensional resolvent-difference surrogates at the spectral point
//! z = i. The intermediate operator and its delta-prime target are
//! discretized on one common grid, the intermediate resolvent is conjugated
//! into the target's dof space, and the L2 operator norm of the difference
//! comes out of power iteration on the M-adjoint square.

use super::fd::{fd_graph_system, fd_intermediate_system};
use super::intermediate::IntermediateParams;
use crate::graph::{Coupling, StarGraph};
use crate::linalg::{ldlt, Ldlt, SymCsr};
use crate::{Error, Result};
use nalgebra::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type C = Complex<f64>;

/// L2 operator norm of a complex linear map `d` via power iteration on
/// B = M^{-1} D^H M D, where `d_adj` applies the plain Hermitian adjoint
/// D^H and `m_diag` holds the (diagonal, positive) mass matrix.
pub fn operator_norm_complex(
    m_diag: &[f64],
    d: &mut dyn FnMut(&[C]) -> Vec<C>,
    d_adj: &mut dyn FnMut(&[C]) -> Vec<C>,
    iters: usize,
) -> f64 {
    let n = m_diag.len();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut v: Vec<C> = (0..n)
        .map(|_| C::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect();
    let m_norm = |x: &[C]| -> f64 {
        x.iter().zip(m_diag).map(|(xi, &mi)| xi.norm_sqr() * mi).sum::<f64>().sqrt()
    };
    let mut est = 0.0;
    for _ in 0..iters {
        let nv = m_norm(&v);
        if nv == 0.0 {
            return 0.0;
        }
        for x in v.iter_mut() {
            *x /= nv;
        }
        let w = d(&v);
        let new_est = m_norm(&w);
        // B v = M^{-1} D^H (M w)
        let mw: Vec<C> = w.iter().zip(m_diag).map(|(wi, &mi)| wi * mi).collect();
        let mut bv = d_adj(&mw);
        for (x, &mi) in bv.iter_mut().zip(m_diag) {
            *x /= mi;
        }
        let done = (new_est - est).abs() <= 1e-10 * (1.0 + new_est);
        est = new_est;
        v = bv.drain(..).collect();
        if done {
            break;
        }
    }
    est
}

/// Complex shifted matrix K - i M as a complex-symmetric CSR.
fn shifted(k: &SymCsr<f64>, m: &SymCsr<f64>) -> SymCsr<C> {
    let kc = k.map(|v| C::new(v, 0.0));
    let mc = m.map(|v| C::new(v, 0.0));
    kc.add_scaled(&mc, C::new(0.0, -1.0))
}

/// Solve (K + i M) x = b through the factorization of (K - i M): conjugate
/// the data, solve, conjugate back. Valid because K and M are real.
fn solve_conjugate(f: &Ldlt<C>, b: &[C]) -> Vec<C> {
    let bc: Vec<C> = b.iter().map(|z| z.conj()).collect();
    let mut x = f.solve(&bc);
    for z in x.iter_mut() {
        *z = z.conj();
    }
    x
}

/// ||R_int(i) - R_dp(i)|| on the delta-prime dof space, where the
/// intermediate operator with spacing `a` is embedded through the shared
/// uniform grid. Requires a/h integral so the satellite lies on a grid node
/// of the common mesh, and beta != 0 so the target mass stays diagonal.
pub fn deltaprime_resolvent_gap(beta: f64, a: f64, n: usize, h: f64) -> Result<f64> {
    if beta == 0.0 {
        return Err(Error::Invalid("resolvent surrogate needs beta != 0".into()));
    }
    let ratio = a / h;
    if (ratio - ratio.round()).abs() > 1e-9 * ratio || (1.0 / h - (1.0 / h).round()).abs() > 1e-9 / h {
        return Err(Error::Invalid(format!(
            "spacing a = {a} and edge length 1 must be multiples of the grid step h = {h}"
        )));
    }

    let graph = StarGraph::unit_star(n, Coupling::DeltaPrimeS { beta });
    let dp = fd_graph_system(&graph, h)?;
    let params = IntermediateParams::from_beta(beta, a, n)?;
    let im = fd_intermediate_system(&params, h)?;
    // common grid: both systems must see the same per-edge node spacing
    debug_assert!((dp.steps[0] - im.steps[0]).abs() < 1e-12);

    let nodes_dp = dp.edge_nodes[0]; // per edge, includes s = 0
    let nodes_im = im.edge_nodes[0]; // per edge, excludes the shared center
    debug_assert_eq!(nodes_dp, nodes_im + 1);

    // E maps intermediate dof vectors into the delta-prime dof space by
    // copying the center value to every edge's s = 0 slot
    let embed = |z: &[C]| -> Vec<C> {
        let mut out = vec![C::new(0.0, 0.0); dp.dim()];
        for e in 0..n {
            let od = dp.edge_offsets[e];
            let oi = im.edge_offsets[e];
            out[od] = z[0];
            for j in 0..nodes_im {
                out[od + 1 + j] = z[oi + j];
            }
        }
        out
    };
    let embed_t = |u: &[C]| -> Vec<C> {
        let mut out = vec![C::new(0.0, 0.0); im.dim()];
        for e in 0..n {
            let od = dp.edge_offsets[e];
            let oi = im.edge_offsets[e];
            out[0] += u[od];
            for j in 0..nodes_im {
                out[oi + j] = u[od + 1 + j];
            }
        }
        out
    };

    let f_dp = ldlt(&shifted(&dp.k, &dp.m))?;
    let f_im = ldlt(&shifted(&im.k, &im.m))?;
    let m_dp: Vec<f64> = dp.m.diagonal();

    // D v = E (K_im - iM_im)^{-1} E^T M_dp v - (K_dp - iM_dp)^{-1} M_dp v
    let mut apply = |v: &[C]| -> Vec<C> {
        let mv: Vec<C> = v.iter().zip(&m_dp).map(|(z, &mi)| z * mi).collect();
        let r1 = embed(&f_im.solve(&embed_t(&mv)));
        let r2 = f_dp.solve(&mv);
        r1.iter().zip(&r2).map(|(a, b)| a - b).collect()
    };
    // D^H u = M_dp E (K_im + iM_im)^{-1} E^T u - M_dp (K_dp + iM_dp)^{-1} u
    let mut apply_adj = |u: &[C]| -> Vec<C> {
        let r1 = embed(&solve_conjugate(&f_im, &embed_t(u)));
        let r2 = solve_conjugate(&f_dp, u);
        r1.iter()
            .zip(&r2)
            .zip(&m_dp)
            .map(|((a, b), &mi)| (a - b) * mi)
            .collect()
    };
    Ok(operator_norm_complex(&m_dp, &mut apply, &mut apply_adj, 300))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn norm_of_diagonal_map() {
        let m = vec![1.0, 1.0, 1.0];
        let d = nalgebra::Matrix3::new(2.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, 0.5);
        let mut apply = |v: &[C]| -> Vec<C> {
            (0..3).map(|i| (0..3).map(|j| C::new(d[(i, j)], 0.0) * v[j]).sum()).collect()
        };
        let mut apply_adj = |v: &[C]| -> Vec<C> {
            (0..3).map(|i| (0..3).map(|j| C::new(d[(j, i)], 0.0) * v[j]).sum()).collect()
        };
        let nrm = operator_norm_complex(&m, &mut apply, &mut apply_adj, 400);
        assert!((nrm - 2.0).abs() < 1e-8);
    }

    #[test]
    fn weighted_norm_accounts_for_mass() {
        // D = [[0, 1], [0, 0]] with M = diag(4, 1): ||D||_M = sup ||Dv||_M/||v||_M
        // = sup |v2| * 2 / |v2| = 2
        let m = vec![4.0, 1.0];
        let mut apply = |v: &[C]| -> Vec<C> { vec![v[1], C::new(0.0, 0.0)] };
        let mut apply_adj = |v: &[C]| -> Vec<C> { vec![C::new(0.0, 0.0), v[0]] };
        let nrm = operator_norm_complex(&m, &mut apply, &mut apply_adj, 400);
        assert!((nrm - 2.0).abs() < 1e-8);
    }

    #[test]
    fn gap_shrinks_with_spacing() {
        let g1 = deltaprime_resolvent_gap(-1.0, 0.2, 3, 1.0 / 200.0).unwrap();
        let g2 = deltaprime_resolvent_gap(-1.0, 0.1, 3, 1.0 / 200.0).unwrap();
        let g3 = deltaprime_resolvent_gap(-1.0, 0.05, 3, 1.0 / 200.0).unwrap();
        assert!(g1 > g2 && g2 > g3, "{g1} {g2} {g3}");
        assert!(g3 < 0.6 * g1);
        assert!(g1 < 2.0); // resolvents at z = i have norm <= 1, difference < 2
    }

    #[test]
    fn adjoint_pairing_is_consistent() {
        // <D u, v>_M == <u, D^H_M v>_M for the full surrogate pipeline
        let beta = -1.0;
        let (a, n, h) = (0.2, 3, 1.0 / 40.0);
        let graph = StarGraph::unit_star(n, Coupling::DeltaPrimeS { beta });
        let dp = fd_graph_system(&graph, h).unwrap();
        let params = IntermediateParams::from_beta(beta, a, n).unwrap();
        let im = fd_intermediate_system(&params, h).unwrap();
        let f_dp = ldlt(&shifted(&dp.k, &dp.m)).unwrap();
        let f_im = ldlt(&shifted(&im.k, &im.m)).unwrap();
        let m_dp: Vec<f64> = dp.m.diagonal();
        let nodes_im = im.edge_nodes[0];
        let embed = |z: &[C]| -> Vec<C> {
            let mut out = vec![C::new(0.0, 0.0); dp.dim()];
            for e in 0..n {
                let (od, oi) = (dp.edge_offsets[e], im.edge_offsets[e]);
                out[od] = z[0];
                for j in 0..nodes_im {
                    out[od + 1 + j] = z[oi + j];
                }
            }
            out
        };
        let embed_t = |u: &[C]| -> Vec<C> {
            let mut out = vec![C::new(0.0, 0.0); im.dim()];
            for e in 0..n {
                let (od, oi) = (dp.edge_offsets[e], im.edge_offsets[e]);
                out[0] += u[od];
                for j in 0..nodes_im {
                    out[oi + j] = u[od + 1 + j];
                }
            }
            out
        };
        let apply = |v: &[C]| -> Vec<C> {
            let mv: Vec<C> = v.iter().zip(&m_dp).map(|(z, &mi)| z * mi).collect();
            let r1 = embed(&f_im.solve(&embed_t(&mv)));
            let r2 = f_dp.solve(&mv);
            r1.iter().zip(&r2).map(|(a, b)| a - b).collect()
        };
        // M-adjoint: D* v = M^{-1} D^H (M v); the leading M^{-1} and the
        // trailing factor of D^H cancel against the diagonal mass
        let apply_adj_m = |u: &[C]| -> Vec<C> {
            let mu: Vec<C> = u.iter().zip(&m_dp).map(|(z, &mi)| z * mi).collect();
            let r1 = embed(&solve_conjugate(&f_im, &embed_t(&mu)));
            let r2 = solve_conjugate(&f_dp, &mu);
            r1.iter().zip(&r2).map(|(a, b)| a - b).collect()
        };

        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let dim = dp.dim();
        let u: Vec<C> = (0..dim)
            .map(|_| C::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let v: Vec<C> = (0..dim)
            .map(|_| C::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let du = apply(&u);
        let dv = apply_adj_m(&v);
        let lhs: C = du.iter().zip(&v).zip(&m_dp).map(|((a, b), &mi)| a * b.conj() * mi).sum();
        let rhs: C = u.iter().zip(&dv).zip(&m_dp).map(|((a, b), &mi)| a * b.conj() * mi).sum();
        assert!((lhs - rhs).norm() < 1e-9 * (1.0 + lhs.norm()));
    }
}
