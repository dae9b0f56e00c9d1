//! Closed-form error constants: the relative form bounds on both sides, the
//! spectral lower bound, the identification-operator defect delta_eps, and
//! the exponent bookkeeping for the shrinking-edge chain.
//!
//! Every formula here is evaluated literally, term by term; max-expressions
//! also report which term was active so sweeps can show what limits them.

use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Graph-side relative bound: `|q| |f(v)|^2 <= eta ||f'||^2 + C_eta ||f||^2`
/// with `C_eta = 2 max{ q^2 / (eta |p|^4), |q| / (l_- |p|^2) }`.
pub fn c_eta(q: f64, weight_norm_sq: f64, l_minus: f64, eta: f64) -> f64 {
    let pp = weight_norm_sq;
    2.0 * (q * q / (eta * pp * pp)).max(q.abs() / (l_minus * pp))
}

/// Geometric and potential data the explicit constants depend on.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct BoundInputs {
    /// sup norm of the unscaled vertex potential Q
    pub q_sup: f64,
    /// shortest edge length
    pub l_minus: f64,
    /// second (first nonzero) Neumann eigenvalue of the vertex template
    pub lambda2_vertex: f64,
    /// smallest second Neumann eigenvalue over the cross sections
    pub lambda2_edge: f64,
    /// vol X_v / vol boundary(X_v)
    pub c_vol: f64,
    /// |p|^2; equals vol boundary(X_v) for the template normalization
    pub weight_norm_sq: f64,
    /// integral of Q over the vertex region (the delta strength)
    pub q_vertex: f64,
    /// tube width
    pub eps: f64,
}

impl BoundInputs {
    pub fn l0(&self) -> f64 {
        self.l_minus.min(1.0)
    }

    pub fn vol_vertex(&self) -> f64 {
        self.c_vol * self.weight_norm_sq
    }

    fn validate(&self) -> Result<()> {
        let pos = [
            ("l_minus", self.l_minus),
            ("lambda2_vertex", self.lambda2_vertex),
            ("lambda2_edge", self.lambda2_edge),
            ("c_vol", self.c_vol),
            ("weight_norm_sq", self.weight_norm_sq),
            ("eps", self.eps),
        ];
        for (name, v) in pos {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if self.q_sup < 0.0 || !self.q_sup.is_finite() {
            return Err(Error::Invalid(format!("q_sup must be >= 0, got {}", self.q_sup)));
        }
        // q(v) is the integral of Q over the vertex region
        if self.q_vertex.abs() > self.q_sup * self.vol_vertex() * (1.0 + 1e-12) {
            return Err(Error::Invalid(format!(
                "q_vertex {} inconsistent with q_sup {} on a region of volume {}",
                self.q_vertex,
                self.q_sup,
                self.vol_vertex()
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct BoundReport {
    pub inputs: BoundInputs,
    pub eta: f64,
    /// graph-side relative bound constant
    pub c_eta: f64,
    /// largest tube width for which the manifold form bound holds;
    /// unbounded (None) when the potential vanishes
    pub eps_eta: Option<f64>,
    /// manifold-side relative bound constant
    pub c_tilde_eta: f64,
    /// upper bound for the graph constant at eta = 1/2
    pub c_half_bound: f64,
    /// manifold constant at eta = 1/2; dominates c_half_bound
    pub c_tilde_half: f64,
    /// uniform spectral lower bound -c_tilde_half for both operators
    pub lambda_0: f64,
    /// identification defect
    pub delta_eps: f64,
    pub delta_eps_sq_terms: [f64; 5],
    /// index of the active (maximal) term in delta_eps_sq_terms
    pub delta_eps_active_term: usize,
    /// quadratic-form closeness scale, sqrt(2) delta_eps
    pub form_prefactor: f64,
    /// resolvent-difference scale, 3 sqrt(2) delta_eps
    pub resolvent_prefactor: f64,
    /// spectral-distance scale, 10 delta_eps max{c_tilde_half, sqrt(2)}
    pub spectrum_prefactor: f64,
}

/// Evaluate every explicit constant for the given inputs and relative bound
/// `eta`.
pub fn compute_bounds(inputs: &BoundInputs, eta: f64) -> Result<BoundReport> {
    if !(eta > 0.0 && eta < 1.0) {
        return Err(Error::Invalid(format!("eta must lie in (0,1), got {eta}")));
    }
    inputs.validate()?;
    let q = inputs.q_sup;
    let lm = inputs.l_minus;
    let l0 = inputs.l0();
    let cv = inputs.c_vol;
    let l2v = inputs.lambda2_vertex;
    let l2e = inputs.lambda2_edge;
    let eps = inputs.eps;

    let c_eta_graph = c_eta(inputs.q_vertex, inputs.weight_norm_sq, lm, eta);

    let bracket = 1.0 / l2v + cv * (lm + 2.0 / (lm * l2v));
    let eps_eta = if q > 0.0 { Some(eta / (4.0 * q) / bracket) } else { None };
    let c_tilde = |eta: f64| 8.0 * cv * q * (4.0 * cv * q / eta).max(1.0 / lm);
    let c_tilde_eta = c_tilde(eta);
    let c_tilde_half = c_tilde(0.5);
    let c_half_bound = (4.0 * cv * cv * q * q).max(2.0 * cv * q / lm);

    let terms = [
        8.0 * eps * cv / l0,
        eps * eps / l2e,
        4.0 * eps * eps * (1.0 / l2v + cv * (1.0 + 2.0 / (l0 * l2v))),
        2.0 * eps / l0 * (1.0 + 2.0 / (l0 * l2v)),
        4.0 * eps * cv * q * q / (l0 * l2v),
    ];
    let (active, &max_term) = terms
        .iter()
        .enumerate()
        .max_by(|(_, a), (_, b)| a.partial_cmp(b).unwrap())
        .unwrap();
    let delta_eps = max_term.sqrt();

    let sqrt2 = std::f64::consts::SQRT_2;
    Ok(BoundReport {
        inputs: *inputs,
        eta,
        c_eta: c_eta_graph,
        eps_eta,
        c_tilde_eta,
        c_half_bound,
        c_tilde_half,
        lambda_0: -c_tilde_half,
        delta_eps,
        delta_eps_sq_terms: terms,
        delta_eps_active_term: active,
        form_prefactor: sqrt2 * delta_eps,
        resolvent_prefactor: 3.0 * sqrt2 * delta_eps,
        spectrum_prefactor: 10.0 * delta_eps * c_tilde_half.max(sqrt2),
    })
}

/// Rayleigh-quotient upper bounds for the spectral infima when the coupling
/// strength is nonpositive: `q / vol X_E` on the graph and
/// `q / (vol X_E + eps vol X_v)` on the manifold.
pub fn spectral_infimum_bounds(
    q_vertex: f64,
    vol_edges: f64,
    vol_vertex: f64,
    eps: f64,
) -> Result<(f64, f64)> {
    if q_vertex > 0.0 {
        return Err(Error::Invalid(format!(
            "infimum bounds need a nonpositive strength, got {q_vertex}"
        )));
    }
    if !(vol_edges > 0.0) || !(vol_vertex > 0.0) || !(eps > 0.0) {
        return Err(Error::Invalid("volumes and eps must be positive".into()));
    }
    Ok((q_vertex / vol_edges, q_vertex / (vol_edges + eps * vol_vertex)))
}

/// Exponent bookkeeping for the shrinking-edge chain with spacing
/// `a = eps^alpha`. The chain is admissible only for `alpha < 1/13`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ChainOrderReport {
    pub alpha: f64,
    pub eps: f64,
    /// shortest edge of the chain graph, eps^alpha
    pub l_minus: f64,
    /// manifold form-bound constant at eta = 1/2, order eps^{-4 alpha}
    pub c_tilde_half: f64,
    /// admissible width threshold, order eps^{3 alpha}
    pub eps_half: f64,
    /// identification defect, order eps^{(1 - 5 alpha)/2}
    pub delta_eps: f64,
    /// spectral error scale delta_eps * c_tilde_half, order eps^{(1-13 alpha)/2}
    pub product: f64,
    pub exponent_c_tilde: f64,
    pub exponent_eps_half: f64,
    pub exponent_delta: f64,
    pub exponent_product: f64,
    /// true exactly when the product exponent is positive, alpha < 1/13
    pub valid: bool,
}

/// Evaluate the chain constants with `l_- = eps^alpha` and the scaled vertex
/// potential `|Q| ~ max{|beta|, 1} eps^{-2 alpha}`; normalized template
/// geometry (unit c_vol and spectral gaps) keeps the exponents visible.
pub fn deltaprime_orders(beta: f64, alpha: f64, eps: f64) -> Result<ChainOrderReport> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Invalid(format!("alpha must lie in (0,1), got {alpha}")));
    }
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::Invalid(format!("eps must lie in (0,1), got {eps}")));
    }
    let a = eps.powf(alpha);
    let q_sup = beta.abs().max(1.0) * eps.powf(-2.0 * alpha);
    let inputs = BoundInputs {
        q_sup,
        l_minus: a,
        lambda2_vertex: 1.0,
        lambda2_edge: 1.0,
        c_vol: 1.0,
        weight_norm_sq: 1.0,
        q_vertex: 0.0,
        eps,
    };
    let report = compute_bounds(&inputs, 0.5)?;
    Ok(ChainOrderReport {
        alpha,
        eps,
        l_minus: a,
        c_tilde_half: report.c_tilde_half,
        eps_half: report.eps_eta.expect("nonzero potential"),
        delta_eps: report.delta_eps,
        product: report.delta_eps * report.c_tilde_half,
        exponent_c_tilde: -4.0 * alpha,
        exponent_eps_half: 3.0 * alpha,
        exponent_delta: (1.0 - 5.0 * alpha) / 2.0,
        exponent_product: (1.0 - 13.0 * alpha) / 2.0,
        valid: alpha < 1.0 / 13.0,
    })
}

/// Defect of identifying a strip of length `l` with one of length
/// `(1 - eps) l`: the forms are `2 eps / sqrt(1 - eps)`-close and the
/// resolvents twice that.
pub fn edge_rescale_bound(eps: f64) -> Result<(f64, f64)> {
    if !(eps >= 0.0 && eps < 1.0) {
        return Err(Error::Invalid(format!("rescale needs 0 <= eps < 1, got {eps}")));
    }
    let form = 2.0 * eps / (1.0 - eps).sqrt();
    Ok((form, 2.0 * form))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit_inputs(eps: f64) -> BoundInputs {
        let pi2 = std::f64::consts::PI * std::f64::consts::PI;
        BoundInputs {
            q_sup: 1.0,
            l_minus: 1.0,
            lambda2_vertex: pi2,
            lambda2_edge: pi2,
            c_vol: 0.25,
            weight_norm_sq: 4.0,
            q_vertex: -1.0,
            eps,
        }
    }

    #[test]
    fn delta_eps_terms_hand_evaluated() {
        // Q = 1, l0 = 1, lambda2 = pi^2 both, c_vol = 1/4, eps = 0.1
        let r = compute_bounds(&unit_inputs(0.1), 0.5).unwrap();
        let pi2 = std::f64::consts::PI * std::f64::consts::PI;
        assert_relative_eq!(r.delta_eps_sq_terms[0], 0.2, epsilon = 1e-14);
        assert_relative_eq!(r.delta_eps_sq_terms[1], 0.01 / pi2, epsilon = 1e-14);
        assert_relative_eq!(
            r.delta_eps_sq_terms[2],
            0.04 * (1.0 / pi2 + 0.25 * (1.0 + 2.0 / pi2)),
            epsilon = 1e-14
        );
        assert_relative_eq!(
            r.delta_eps_sq_terms[3],
            0.2 * (1.0 + 2.0 / pi2),
            epsilon = 1e-14
        );
        assert_relative_eq!(r.delta_eps_sq_terms[4], 0.1 / pi2, epsilon = 1e-14);
        // term 4 (index 3) dominates: 0.2405 vs 0.2, 0.0010, 0.0161, 0.0101
        assert_eq!(r.delta_eps_active_term, 3);
        assert_relative_eq!(
            r.delta_eps,
            (0.2 * (1.0 + 2.0 / pi2)).sqrt(),
            epsilon = 1e-14
        );
    }

    #[test]
    fn every_term_vanishes_with_eps() {
        let mut last = f64::INFINITY;
        for &eps in &[0.2, 0.1, 0.05, 0.025, 0.0125, 1e-4] {
            let r = compute_bounds(&unit_inputs(eps), 0.5).unwrap();
            assert!(r.delta_eps < last);
            last = r.delta_eps;
        }
        let tiny = compute_bounds(&unit_inputs(1e-12), 0.5).unwrap();
        assert!(tiny.delta_eps < 1e-5);
    }

    #[test]
    fn delta_eps_is_half_order_in_eps() {
        // slope of log delta_eps vs log eps approaches >= 1/2 from above
        let eps: Vec<f64> = (0..8).map(|k| 0.1f64 * 0.5f64.powi(k)).collect();
        let del: Vec<f64> = eps
            .iter()
            .map(|&e| compute_bounds(&unit_inputs(e), 0.5).unwrap().delta_eps)
            .collect();
        let fit = crate::linalg::log_log_fit(&eps, &del).unwrap();
        assert!(fit.slope >= 0.499, "slope {}", fit.slope);
        assert!(fit.slope < 0.75, "slope {}", fit.slope);
    }

    #[test]
    fn graph_constant_dominated_by_manifold_constant() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let q_sup: f64 = rng.gen_range(0.01..10.0);
            let c_vol: f64 = rng.gen_range(0.05..3.0);
            let l_minus: f64 = rng.gen_range(0.05..4.0);
            let pp: f64 = rng.gen_range(0.5..6.0);
            // most extreme admissible strength: |q(v)| = q_sup vol X_v
            let qv = -q_sup * c_vol * pp;
            let inputs = BoundInputs {
                q_sup,
                l_minus,
                lambda2_vertex: rng.gen_range(0.5..15.0),
                lambda2_edge: rng.gen_range(0.5..15.0),
                c_vol,
                weight_norm_sq: pp,
                q_vertex: qv,
                eps: rng.gen_range(0.001..0.3),
            };
            let r = compute_bounds(&inputs, 0.5).unwrap();
            assert!(
                r.c_half_bound <= r.c_tilde_half * (1.0 + 1e-12),
                "c_half {} vs c_tilde_half {}",
                r.c_half_bound,
                r.c_tilde_half
            );
            // the eta = 1/2 graph constant itself sits below its bound
            let direct = c_eta(qv, pp, l_minus, 0.5);
            assert!(direct <= 2.0 * r.c_half_bound * (1.0 + 1e-12));
        }
    }

    #[test]
    fn max_formulas_match_term_lists() {
        let r = compute_bounds(&unit_inputs(0.07), 0.3).unwrap();
        let m = r
            .delta_eps_sq_terms
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(r.delta_eps, m.sqrt());
        assert_eq!(r.delta_eps_sq_terms[r.delta_eps_active_term], m);
    }

    #[test]
    fn vanishing_potential_has_no_width_threshold() {
        let mut inputs = unit_inputs(0.1);
        inputs.q_sup = 0.0;
        inputs.q_vertex = 0.0;
        let r = compute_bounds(&inputs, 0.5).unwrap();
        assert!(r.eps_eta.is_none());
        assert_eq!(r.c_tilde_eta, 0.0);
        assert_eq!(r.lambda_0, 0.0);
    }

    #[test]
    fn infimum_bounds() {
        let (g, m) = spectral_infimum_bounds(-1.0, 3.0, 2.598, 0.1).unwrap();
        assert_relative_eq!(g, -1.0 / 3.0, epsilon = 1e-15);
        assert_relative_eq!(m, -1.0 / (3.0 + 0.2598), epsilon = 1e-12);
        assert!(spectral_infimum_bounds(1.0, 3.0, 1.0, 0.1).is_err());
    }

    #[test]
    fn chain_exponents() {
        let r = deltaprime_orders(-1.0, 1.0 / 13.0, 0.1).unwrap();
        assert_relative_eq!(r.exponent_product, 0.0, epsilon = 1e-15);
        assert!(!r.valid);

        let r = deltaprime_orders(-1.0, 0.05, 0.1).unwrap();
        assert_relative_eq!(r.exponent_product, (1.0 - 13.0 * 0.05) / 2.0, epsilon = 1e-15);
        assert_relative_eq!(r.exponent_product, 7.0 / 40.0, epsilon = 1e-15);
        assert!(r.valid);

        // computed values follow the stated orders on a geometric eps grid;
        // the five-term max switches to its asymptotic term near eps ~ 0.03,
        // so the delta fit runs below that
        let alpha = 0.05;
        let eps: Vec<f64> = (0..7).map(|k| 1e-4 * 0.5f64.powi(k)).collect();
        let reports: Vec<ChainOrderReport> =
            eps.iter().map(|&e| deltaprime_orders(-1.0, alpha, e).unwrap()).collect();
        let cts: Vec<f64> = reports.iter().map(|r| r.c_tilde_half).collect();
        let fit = crate::linalg::log_log_fit(&eps, &cts).unwrap();
        assert_relative_eq!(fit.slope, -4.0 * alpha, epsilon = 1e-6);
        let dels: Vec<f64> = reports.iter().map(|r| r.delta_eps).collect();
        let fit = crate::linalg::log_log_fit(&eps, &dels).unwrap();
        assert!((fit.slope - (1.0 - 5.0 * alpha) / 2.0).abs() < 0.01, "slope {}", fit.slope);
        for w in reports.windows(2) {
            assert!(w[0].delta_eps > w[1].delta_eps);
            assert!(w[0].c_tilde_half < w[1].c_tilde_half);
        }
        // monotone in eps at desk scale too
        let coarse: Vec<f64> = [0.3, 0.2, 0.1, 0.05]
            .iter()
            .map(|&e| deltaprime_orders(-1.0, alpha, e).unwrap().delta_eps)
            .collect();
        for w in coarse.windows(2) {
            assert!(w[0] > w[1]);
        }
    }

    #[test]
    fn rescale_bound_values() {
        assert_eq!(edge_rescale_bound(0.0).unwrap().0, 0.0);
        let (f, r) = edge_rescale_bound(0.19).unwrap();
        assert_relative_eq!(f, 2.0 * 0.19 / 0.9, epsilon = 1e-12);
        assert_relative_eq!(r, 2.0 * f, epsilon = 1e-15);
        let (f, _) = edge_rescale_bound(0.5).unwrap();
        assert_relative_eq!(f, std::f64::consts::SQRT_2, epsilon = 1e-12);
        assert!(edge_rescale_bound(1.0).is_err());
    }

    #[test]
    fn rejects_inconsistent_strength() {
        let mut inputs = unit_inputs(0.1);
        // |q(v)| cannot exceed q_sup * vol X_v = 1 * 1
        inputs.q_vertex = -1.5;
        assert!(compute_bounds(&inputs, 0.5).is_err());
    }
}
