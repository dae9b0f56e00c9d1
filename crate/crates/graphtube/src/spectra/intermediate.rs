//! The interpolating star operator: a delta potential of strength
//! b(a) = -beta / a^2 at the center together with delta potentials of
//! strength c(a) = -1/a at distance `a` along every edge. As a -> 0 its
//! spectrum approaches the delta-prime star with strength beta.

use super::{bisect, scan_roots, ModelKind, SolverKind, SpectralResult, CLUSTER_GAP};
use crate::{Error, Result};

const K_STEP: f64 = 0.01;
const DEDUP: f64 = 1e-6;

/// Interpolating operator on the unit n-star: center strength `b`, satellite
/// strength `c` at arclength `a` on each edge.
#[derive(Clone, Copy, Debug)]
pub struct IntermediateParams {
    pub n: usize,
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl IntermediateParams {
    /// Strengths derived from the delta-prime target:
    /// b = -beta/a^2 and c = -1/a, recomputed exactly from `beta` and `a`.
    pub fn from_beta(beta: f64, a: f64, n: usize) -> Result<Self> {
        if !(a > 0.0 && a < 1.0) {
            return Err(Error::Invalid("satellite position must satisfy 0 < a < 1".into()));
        }
        if n < 2 {
            return Err(Error::Invalid("star needs degree >= 2".into()));
        }
        Ok(IntermediateParams { n, a, b: -beta / (a * a), c: -1.0 / a })
    }

    /// Raw strengths, for limiting cases in tests (b = c = 0 gives the
    /// Kirchhoff star regardless of `a`).
    pub fn with_strengths(b: f64, c: f64, a: f64, n: usize) -> Result<Self> {
        if !(a > 0.0 && a < 1.0) {
            return Err(Error::Invalid("satellite position must satisfy 0 < a < 1".into()));
        }
        if n < 2 {
            return Err(Error::Invalid("star needs degree >= 2".into()));
        }
        Ok(IntermediateParams { n, a, b, c })
    }
}

/// Secular function of the radial (multiplicity-1) negative branch for the
/// beta-derived strengths. Roots kappa give eigenvalues -kappa^2.
fn radial_negative(beta: f64, a: f64, n: usize, kap: f64) -> f64 {
    let nf = n as f64;
    (beta / (a * a)) * ((kap * a).sinh() * (kap * (1.0 - a)).cosh() - a * kap * kap.cosh())
        + nf * kap * (kap * a * kap.sinh() - (kap * a).cosh() * (kap * (1.0 - a)).cosh())
}

/// Secular function of the multiplicity-(n-1) negative branch; it has no
/// roots for any 0 < a < 1 (checked separately), so the negative spectrum is
/// carried by the radial branch alone.
fn transverse_negative(a: f64, kap: f64) -> f64 {
    (kap * a).sinh() * (kap * (1.0 - a)).cosh() - kap * a * kap.cosh()
}

/// Negative spectrum of the beta-derived intermediate operator: a list of
/// (kappa, multiplicity) pairs, eigenvalues -kappa^2, sorted by kappa
/// descending (most negative eigenvalue first).
pub fn intermediate_negative_spectrum(beta: f64, a: f64, n: usize) -> Result<Vec<(f64, usize)>> {
    let p = IntermediateParams::from_beta(beta, a, n)?;
    let nf = n as f64;

    // deep-well asymptote: an attractive point potential of strength s on the
    // star binds at kappa ~ s/n, so the scan reaches past the attractive parts
    let (b_att, c_att) = ((-p.b).max(0.0), (-p.c).max(0.0));
    let kap_hi = (b_att / nf + c_att + 2.0 * ((b_att + c_att) / nf).sqrt() + 10.0).max(50.0);
    if kap_hi > 600.0 {
        return Err(Error::Invalid(format!(
            "negative-branch scan range {kap_hi:.1} exceeds the overflow guard; increase a"
        )));
    }
    let mut out: Vec<(f64, usize)> = Vec::new();
    for kap in scan_roots(|k| radial_negative(beta, a, n, k), 1e-9, kap_hi, K_STEP, DEDUP)? {
        out.push((kap, 1));
    }
    for kap in scan_roots(|k| transverse_negative(p.a, k), 1e-9, 50.0, K_STEP, DEDUP)? {
        out.push((kap, n - 1));
    }
    out.sort_by(|x, y| y.0.partial_cmp(&x.0).unwrap());
    Ok(out)
}

/// Transfer of a Neumann half-edge solution across the satellite down to the
/// center: returns (P, R) with psi(0) = P and psi'(0) = k R for the solution
/// psi(s) = cos(k (1 - s)) on [a, 1].
fn shoot(c: f64, a: f64, k: f64) -> (f64, f64) {
    let psi_a = (k * (1.0 - a)).cos();
    // jump condition at the satellite: psi'(a-) = psi'(a+) - c psi(a)
    let dpsi_am = k * (k * (1.0 - a)).sin() - c * psi_a;
    let p = psi_a * (k * a).cos() - (dpsi_am / k) * (k * a).sin();
    let r = psi_a * (k * a).sin() + (dpsi_am / k) * (k * a).cos();
    (p, r)
}

/// Full spectrum of the intermediate operator up to k_max (eigenvalues
/// through k_max^2), with the exact zero modes of multiplicity n-1 that the
/// satellite strength c = -1/a pins for beta-derived parameters.
pub fn intermediate_full_spectrum(params: &IntermediateParams, k_max: f64) -> Result<SpectralResult> {
    let IntermediateParams { n, a, b, c } = *params;
    let nf = n as f64;
    let mut values: Vec<f64> = Vec::new();
    let mut residual: f64 = 0.0;

    // negative branch, generic strengths: radial via shooting in kappa
    let rad_neg = |kap: f64| {
        let psi_a = (kap * (1.0 - a)).cosh();
        let dpsi_am = -kap * (kap * (1.0 - a)).sinh() - c * psi_a;
        // propagate to 0 with cosh/sinh fundamental system
        let p = psi_a * (kap * a).cosh() - (dpsi_am / kap) * (kap * a).sinh();
        let dp = -kap * psi_a * (kap * a).sinh() + dpsi_am * (kap * a).cosh();
        nf * dp - b * p
    };
    let trans_neg = |kap: f64| {
        let psi_a = (kap * (1.0 - a)).cosh();
        let dpsi_am = -kap * (kap * (1.0 - a)).sinh() - c * psi_a;
        psi_a * (kap * a).cosh() - (dpsi_am / kap) * (kap * a).sinh()
    };
    let (b_att, c_att) = ((-b).max(0.0), (-c).max(0.0));
    let kap_hi = (b_att / nf + c_att + 2.0 * ((b_att + c_att) / nf).sqrt() + 10.0).max(50.0);
    if kap_hi > 600.0 {
        return Err(Error::Invalid(format!(
            "negative-branch scan range {kap_hi:.1} exceeds the overflow guard; increase a"
        )));
    }
    // the shooting forms lose a full cancellation digit near kappa = 0, so
    // the scan floor sits one step up; roots below it belong to the zero
    // cluster anyway
    for kap in scan_roots(rad_neg, K_STEP, kap_hi, K_STEP, DEDUP)? {
        values.push(-kap * kap);
        residual = residual.max(rad_neg(kap).abs() / (1.0 + kap * kap.cosh()));
    }
    for kap in scan_roots(trans_neg, K_STEP, kap_hi, K_STEP, DEDUP)? {
        for _ in 0..n - 1 {
            values.push(-kap * kap);
        }
    }

    // zero modes: with c = -1/a exactly, piecewise-linear kernels with zero
    // center value and zero derivative sum persist for every a and b
    if (c * a + 1.0).abs() < 1e-12 {
        for _ in 0..n - 1 {
            values.push(0.0);
        }
    } else if b == 0.0 && c == 0.0 {
        values.push(0.0); // Kirchhoff constant
    }

    // positive branches via the satellite transfer
    let sym = |k: f64| {
        let (p, r) = shoot(c, a, k);
        nf * k * r - b * p
    };
    let anti = |k: f64| shoot(c, a, k).0;
    for k in scan_roots(sym, K_STEP, k_max, K_STEP, DEDUP)? {
        values.push(k * k);
        residual = residual.max(sym(k).abs() / (1.0 + nf * k + b.abs()));
    }
    for k in scan_roots(anti, K_STEP, k_max, K_STEP, DEDUP)? {
        for _ in 0..n - 1 {
            values.push(k * k);
        }
        residual = residual.max(anti(k).abs());
    }

    let mut r = SpectralResult::from_values(values, CLUSTER_GAP, SolverKind::Secular, ModelKind::Graph);
    r.max_vertex_residual = Some(residual);
    Ok(r)
}

/// Spectrum for beta-derived strengths; see [`intermediate_full_spectrum`].
pub fn intermediate_spectrum_raw(beta: f64, a: f64, n: usize, k_max: f64) -> Result<SpectralResult> {
    intermediate_full_spectrum(&IntermediateParams::from_beta(beta, a, n)?, k_max)
}

/// Value of the frozen constant-test-function bound for the lowest
/// eigenvalue: -(1/n)(beta/a^2 + 1/a), evaluated by two algebraic routes
/// that must agree to 1e-14 relative.
pub fn rayleigh_constant_test(beta: f64, a: f64, n: usize) -> Result<f64> {
    if !(a > 0.0 && a < 1.0) || n < 2 {
        return Err(Error::Invalid("need 0 < a < 1 and degree >= 2".into()));
    }
    let nf = n as f64;
    let direct = -(beta / (a * a) + 1.0 / a) / nf;
    let cleared = -(beta + a) / (nf * a * a);
    let scale = direct.abs().max(cleared.abs()).max(1e-300);
    if (direct - cleared).abs() > 1e-14 * scale {
        return Err(Error::Invalid(format!(
            "constant-test evaluation routes disagree: {direct:e} vs {cleared:e}"
        )));
    }
    Ok(direct)
}

/// Rayleigh quotient of the constant function 1 in the intermediate form:
/// (b + n c)/n = -(1/n) beta/a^2 - 1/a. A certified upper bound for the
/// lowest eigenvalue, slightly below the frozen constant of
/// [`rayleigh_constant_test`].
pub fn rayleigh_quotient_of_ones(beta: f64, a: f64, n: usize) -> Result<f64> {
    let p = IntermediateParams::from_beta(beta, a, n)?;
    Ok((p.b + p.n as f64 * p.c) / p.n as f64)
}

/// Root of the radial negative branch refined from a bracketing guess; used
/// by convergence sweeps that track kappa(a) across a grid of spacings.
pub fn radial_negative_root(beta: f64, a: f64, n: usize) -> Result<Option<f64>> {
    let roots = intermediate_negative_spectrum(beta, a, n)?;
    Ok(roots.iter().find(|(_, m)| *m == 1).map(|(k, _)| *k))
}

/// Verify on a grid that the multiplicity-(n-1) negative branch stays
/// root-free for every spacing in `a_grid`, scanning kappa in (0, 50].
pub fn transverse_branch_rootfree(a_grid: &[f64]) -> Result<bool> {
    for &a in a_grid {
        if !(a > 0.0 && a < 1.0) {
            return Err(Error::Invalid("spacings must lie in (0, 1)".into()));
        }
        if !scan_roots(|k| transverse_negative(a, k), 1e-9, 50.0, K_STEP, DEDUP)?.is_empty() {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Refine the radial kappa near a previous value, for fast continuation in a
/// sweeps. Falls back to the full scan when the local bracket fails.
pub fn continue_radial_root(beta: f64, a: f64, n: usize, near: f64) -> Result<Option<f64>> {
    let f = |k: f64| radial_negative(beta, a, n, k);
    let lo = (near * 0.5).max(1e-9);
    let hi = near * 1.8 + 1.0;
    if f(lo) * f(hi) < 0.0 {
        // narrow by scanning at fine steps, then bisect
        let roots = scan_roots(f, lo, hi, (hi - lo) / 400.0, DEDUP);
        if let Ok(r) = roots {
            if r.len() == 1 {
                return Ok(Some(r[0]));
            }
        }
        return Ok(Some(bisect(&f, lo, hi)));
    }
    radial_negative_root(beta, a, n)
}

#[cfg(test)]
mod tests {
    use super::super::secular::solve_kappa_beta;
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn kappa_table_beta_minus_one() {
        let table = [
            (0.2, 1.76402136719239),
            (0.1, 2.18757635678477),
            (0.05, 2.5278159855928),
            (0.025, 2.74877764141476),
        ];
        for (a, kap_expect) in table {
            let roots = intermediate_negative_spectrum(-1.0, a, 3).unwrap();
            assert_eq!(roots.len(), 1);
            assert_eq!(roots[0].1, 1);
            assert_relative_eq!(roots[0].0, kap_expect, max_relative = 1e-9);
        }
    }

    #[test]
    fn kappa_converges_to_deltaprime_limit() {
        let kap_inf = solve_kappa_beta(-1.0, 3).unwrap().unwrap();
        let mut errs = Vec::new();
        for a in [0.2, 0.1, 0.05, 0.025] {
            let kap = radial_negative_root(-1.0, a, 3).unwrap().unwrap();
            errs.push((kap - kap_inf).abs());
        }
        for w in errs.windows(2) {
            assert!(w[1] < w[0]);
        }
        assert_relative_eq!(errs[0], 1.2504614, max_relative = 1e-6);
        assert_relative_eq!(errs[3], 0.26570513, max_relative = 1e-6);
    }

    #[test]
    fn transverse_branch_has_no_roots() {
        let grid: Vec<f64> = (1..20).map(|i| i as f64 * 0.05).collect();
        assert!(transverse_branch_rootfree(&grid).unwrap());
    }

    #[test]
    fn kappa_bounded_for_negative_beta_divergent_otherwise() {
        // beta < 0: kappa(a) stays bounded as a -> 0
        let mut prev = 0.0;
        for a in [0.5, 0.25, 0.125, 0.0625, 0.03125] {
            let kap = radial_negative_root(-1.0, a, 3).unwrap().unwrap();
            assert!(kap < 3.2);
            assert!(kap > prev); // monotone approach from below
            prev = kap;
        }
        // beta >= 0: the lowest eigenvalue dives like the constant bound
        for beta in [0.0, 1.0] {
            for a in [0.2, 0.1, 0.05] {
                let kap = radial_negative_root(beta, a, 3).unwrap().unwrap();
                let bound = rayleigh_constant_test(beta, a, 3).unwrap();
                // -kappa^2 <= inf spec <= constant-test bound
                assert!(-kap * kap <= bound + 1e-9);
            }
            let k1 = radial_negative_root(beta, 0.1, 3).unwrap().unwrap();
            let k2 = radial_negative_root(beta, 0.05, 3).unwrap().unwrap();
            assert!(k2 > 1.3 * k1, "kappa should diverge for beta = {beta}");
        }
    }

    #[test]
    fn constant_test_values() {
        assert_relative_eq!(
            rayleigh_constant_test(0.0, 0.1, 3).unwrap(),
            -10.0 / 3.0,
            max_relative = 1e-14
        );
        assert_relative_eq!(
            rayleigh_constant_test(1.0, 0.1, 3).unwrap(),
            -110.0 / 3.0,
            max_relative = 1e-14
        );
        assert_relative_eq!(
            rayleigh_constant_test(2.0, 0.5, 4).unwrap(),
            -2.5,
            max_relative = 1e-14
        );
        // the true quotient of the constant function sits below the frozen bound
        let honest = rayleigh_quotient_of_ones(1.0, 0.1, 3).unwrap();
        assert_relative_eq!(honest, -1.0 / 0.03 - 10.0, max_relative = 1e-12);
        assert!(honest <= rayleigh_constant_test(1.0, 0.1, 3).unwrap());
    }

    #[test]
    fn full_spectrum_beta_minus_one() {
        // a = 0.1: lowest is -kappa^2, then the pinned zeros, then the
        // positive branches feeding the convergence tables
        let r = intermediate_spectrum_raw(-1.0, 0.1, 3, 7.0).unwrap();
        assert_relative_eq!(r.eigenvalues[0], -2.18757635678477f64.powi(2), max_relative = 1e-9);
        assert_eq!(r.eigenvalues[1], 0.0);
        assert_eq!(r.multiplicities[1], 2);
        assert!(r.max_vertex_residual.unwrap() < 1e-6);
        // positive eigenvalues approach the delta-prime ones from above as a -> 0
        let target_sym = 4.85993221478;
        let sym_err = (r.eigenvalues[2] - target_sym).abs();
        let r2 = intermediate_spectrum_raw(-1.0, 0.05, 3, 7.0).unwrap();
        let sym_err2 = (r2.eigenvalues[2] - target_sym).abs();
        assert!(sym_err2 < sym_err);
        assert_relative_eq!(sym_err, 2.0136376, max_relative = 1e-5);
        assert_relative_eq!(sym_err2, 0.98847614, max_relative = 1e-5);
    }

    #[test]
    fn positive_branch_error_table() {
        let sym_expect = [4.017278, 2.0136376, 0.98847614, 0.48608171];
        let anti_expect = [3.2382528, 1.4575683, 0.69211264, 0.33736543];
        let sym_target = 4.85993221478;
        let anti_target = 9.86960440109;
        for (i, a) in [0.2, 0.1, 0.05, 0.025].into_iter().enumerate() {
            let r = intermediate_spectrum_raw(-1.0, a, 3, 4.5).unwrap();
            // first positive simple eigenvalue and first positive pair
            let mut sym_val = None;
            let mut anti_val = None;
            for (v, m) in r.eigenvalues.iter().zip(&r.multiplicities) {
                if *v > 1e-9 {
                    if *m == 1 && sym_val.is_none() {
                        sym_val = Some(*v);
                    }
                    if *m == 2 && anti_val.is_none() {
                        anti_val = Some(*v);
                    }
                }
            }
            assert_relative_eq!(
                (sym_val.unwrap() - sym_target).abs(),
                sym_expect[i],
                max_relative = 1e-5
            );
            assert_relative_eq!(
                (anti_val.unwrap() - anti_target).abs(),
                anti_expect[i],
                max_relative = 1e-5
            );
        }
    }

    #[test]
    fn zero_strengths_reduce_to_kirchhoff() {
        let p = IntermediateParams::with_strengths(0.0, 0.0, 0.5, 3).unwrap();
        let r = intermediate_full_spectrum(&p, 7.0).unwrap();
        let k = crate::spectra::star_delta_spectrum(0.0, 3, 7.0).unwrap();
        let (a, b) = (r.flattened(), k.flattened());
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() <= 1e-9 * (1.0 + y.abs()));
        }
    }

    #[test]
    fn chain_scale_kappa_values() {
        // spacings a = eps^alpha arising in the thin-neighborhood chain
        let table = [(0.94157748, 1.116861405), (0.92268083, 1.116525325), (0.89125094, 1.117287729)];
        for (a, kap_expect) in table {
            let kap = radial_negative_root(-1.0, a, 3).unwrap().unwrap();
            assert_relative_eq!(kap, kap_expect, max_relative = 1e-7);
        }
    }

    #[test]
    fn continuation_tracks_scan() {
        let k0 = radial_negative_root(-1.0, 0.2, 3).unwrap().unwrap();
        let k1 = continue_radial_root(-1.0, 0.19, 3, k0).unwrap().unwrap();
        let k1_full = radial_negative_root(-1.0, 0.19, 3).unwrap().unwrap();
        assert_relative_eq!(k1, k1_full, max_relative = 1e-8);
    }

    #[test]
    fn rejects_bad_spacing() {
        assert!(IntermediateParams::from_beta(-1.0, 0.0, 3).is_err());
        assert!(IntermediateParams::from_beta(-1.0, 1.0, 3).is_err());
        assert!(rayleigh_constant_test(-1.0, 2.0, 3).is_err());
    }
}
