//! Eigenvalue computations for the graph-side operators: secular equations
//! for unit and weighted stars with delta / symmetric delta-prime couplings,
//! the interpolating point-interaction operator with shrinking spacing, a
//! finite-difference oracle for cross-validation, and finite-dimensional
//! resolvent-difference surrogates.

mod fd;
mod intermediate;
mod resolvent;
mod secular;

pub use fd::{fd_graph_system, fd_intermediate_system, fd_oracle, fd_oracle_intermediate, FdSystem};
pub use intermediate::{
    continue_radial_root, intermediate_full_spectrum, intermediate_negative_spectrum,
    intermediate_spectrum_raw, radial_negative_root, rayleigh_constant_test,
    rayleigh_quotient_of_ones, transverse_branch_rootfree, IntermediateParams,
};
pub use resolvent::{deltaprime_resolvent_gap, operator_norm_complex};
pub use secular::{
    solve_kappa_beta, star_delta_spectrum, star_delta_spectrum_weighted,
    star_deltaprime_spectrum,
};

use serde::Serialize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    Secular,
    FdOracle,
    Fem,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Graph,
    Manifold,
}

/// Sorted spectrum with multiplicity clusters.
#[derive(Clone, Debug, Serialize)]
pub struct SpectralResult {
    /// one entry per cluster, ascending
    pub eigenvalues: Vec<f64>,
    pub multiplicities: Vec<usize>,
    pub solver: SolverKind,
    pub model: ModelKind,
    /// gap threshold used to merge clusters
    pub cluster_gap: f64,
    /// worst analytic defect of the vertex conditions across eigenfunctions,
    /// where closed forms are available
    pub max_vertex_residual: Option<f64>,
    /// discrete eigenvectors aligned with the flattened spectrum, when the
    /// solver produces them
    #[serde(skip)]
    pub eigenvectors: Option<Vec<Vec<f64>>>,
}

impl SpectralResult {
    /// Cluster a multiplicity-expanded sorted list by the gap threshold.
    pub fn from_values(
        mut values: Vec<f64>,
        gap: f64,
        solver: SolverKind,
        model: ModelKind,
    ) -> Self {
        values.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut eigenvalues: Vec<f64> = Vec::new();
        let mut multiplicities: Vec<usize> = Vec::new();
        for v in values {
            match (eigenvalues.last_mut(), multiplicities.last_mut()) {
                (Some(last), Some(m)) if (v - *last).abs() <= gap * (1.0 + last.abs()) => {
                    // cluster representative: running mean keeps it central
                    *last += (v - *last) / (*m + 1) as f64;
                    *m += 1;
                }
                _ => {
                    eigenvalues.push(v);
                    multiplicities.push(1);
                }
            }
        }
        SpectralResult {
            eigenvalues,
            multiplicities,
            solver,
            model,
            cluster_gap: gap,
            max_vertex_residual: None,
            eigenvectors: None,
        }
    }

    /// Multiplicity-expanded eigenvalue list.
    pub fn flattened(&self) -> Vec<f64> {
        self.eigenvalues
            .iter()
            .zip(&self.multiplicities)
            .flat_map(|(&v, &m)| std::iter::repeat(v).take(m))
            .collect()
    }

    /// Total eigenvalue count with multiplicity.
    pub fn count(&self) -> usize {
        self.multiplicities.iter().sum()
    }

    /// Eigenvalues (cluster representatives) within `[lo, hi]`.
    pub fn in_window(&self, lo: f64, hi: f64) -> Vec<(f64, usize)> {
        self.eigenvalues
            .iter()
            .zip(&self.multiplicities)
            .filter(|(&v, _)| v >= lo && v <= hi)
            .map(|(&v, &m)| (v, m))
            .collect()
    }
}

/// Default clustering gap: secular multiplicities are exact, so only
/// numerically coincident roots merge.
pub const CLUSTER_GAP: f64 = 1e-8;

/// Bracket sign changes of `f` on a uniform grid over `[lo, hi]` and bisect
/// each bracket. Roots closer than `dedup` merge. A sign change in the final
/// cell is reported as an error because roots may continue past `hi`.
pub(crate) fn scan_roots(
    f: impl Fn(f64) -> f64,
    lo: f64,
    hi: f64,
    step: f64,
    dedup: f64,
) -> crate::Result<Vec<f64>> {
    assert!(hi > lo && step > 0.0);
    let cells = ((hi - lo) / step).ceil() as usize;
    let mut roots: Vec<f64> = Vec::new();
    let mut xa = lo;
    let mut fa = f(xa);
    for c in 0..cells {
        let xb = (lo + (c + 1) as f64 * step).min(hi);
        let fb = f(xb);
        // an exact zero at the left scan boundary is underflow, not a root
        if fa == 0.0 && xa > lo {
            push_root(&mut roots, xa, dedup);
        } else if fa * fb < 0.0 {
            if c + 1 == cells {
                return Err(crate::Error::Invalid(format!(
                    "root bracketed in the last scan cell near {xb:.6}; widen the scan range"
                )));
            }
            push_root(&mut roots, bisect(&f, xa, xb), dedup);
        }
        xa = xb;
        fa = fb;
    }
    if fa == 0.0 {
        push_root(&mut roots, xa, dedup);
    }
    Ok(roots)
}

fn push_root(roots: &mut Vec<f64>, r: f64, dedup: f64) {
    if roots.last().map_or(true, |&last| (r - last).abs() > dedup) {
        roots.push(r);
    }
}

/// Bisection to machine-level interval width; the bracket must hold a sign
/// change.
pub(crate) fn bisect(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let mut fa = f(a);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m == a || m == b {
            break;
        }
        let fm = f(m);
        if fm == 0.0 {
            return m;
        }
        if fa * fm < 0.0 {
            b = m;
        } else {
            a = m;
            fa = fm;
        }
    }
    0.5 * (a + b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clusters_and_flattens() {
        let r = SpectralResult::from_values(
            vec![1.0, 1.0 + 1e-12, 2.0, 2.0, 5.0],
            1e-8,
            SolverKind::Secular,
            ModelKind::Graph,
        );
        assert_eq!(r.multiplicities, vec![2, 2, 1]);
        assert_eq!(r.count(), 5);
        assert_eq!(r.flattened().len(), 5);
        assert_eq!(r.in_window(0.5, 3.0).len(), 2);
    }

    #[test]
    fn scan_finds_cosine_roots() {
        let pi = std::f64::consts::PI;
        let roots = scan_roots(|x| x.cos(), 0.0, 8.0, 0.01, 1e-6).unwrap();
        assert_eq!(roots.len(), 3);
        for (r, m) in roots.iter().zip([0.5, 1.5, 2.5]) {
            assert!((r - m * pi).abs() < 1e-12);
        }
    }

    #[test]
    fn scan_reports_boundary_root() {
        // cos has a root just below 11 = 3.5 pi + eps
        let e = scan_roots(|x| x.cos(), 0.0, 3.5 * std::f64::consts::PI + 0.004, 0.01, 1e-6);
        assert!(e.is_err());
    }
}
