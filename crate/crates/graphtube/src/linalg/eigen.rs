use super::{dot, ldlt, SymCsr};
use crate::{Error, Result};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Debug)]
pub struct EigOpts {
    /// How many of the lowest eigenpairs to return.
    pub count: usize,
    /// Initial shift; automatically lowered until it sits strictly below the
    /// spectrum (certified by the factorization inertia).
    pub shift: f64,
    /// Absolute residual target for ||A x - lambda M x|| at ||x||_M = 1.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for EigOpts {
    fn default() -> Self {
        EigOpts { count: 6, shift: -1.0, tol: 1e-9, max_iter: 600 }
    }
}

#[derive(Clone, Debug)]
pub struct Eigs {
    pub values: Vec<f64>,
    /// M-normalized eigenvectors, one per value, sign-canonicalized so the
    /// largest-magnitude entry is positive.
    pub vectors: Vec<Vec<f64>>,
    pub residuals: Vec<f64>,
    pub iterations: usize,
    /// Shift actually used after the descent.
    pub shift: f64,
}

/// Number of generalized eigenvalues of (A, M) strictly below `sigma`, and
/// the number of factorization pivots that landed on zero (a nonzero second
/// component means `sigma` essentially hit an eigenvalue). M must be
/// positive definite.
pub fn inertia_below(a: &SymCsr<f64>, m: &SymCsr<f64>, sigma: f64) -> Result<(usize, usize)> {
    let shifted = a.add_scaled(m, -sigma);
    let f = ldlt(&shifted)?;
    Ok((f.n_neg, f.n_zero))
}

/// Lowest `opts.count` eigenpairs of A x = lambda M x by block shift-invert
/// subspace iteration with Rayleigh-Ritz extraction. Deterministic: fixed
/// internal seed, sequential arithmetic, stable sign convention.
pub fn lowest(a: &SymCsr<f64>, m: &SymCsr<f64>, opts: &EigOpts) -> Result<Eigs> {
    let n = a.n();
    assert_eq!(m.n(), n);
    let count = opts.count.min(n);
    if count == 0 {
        return Ok(Eigs {
            values: vec![],
            vectors: vec![],
            residuals: vec![],
            iterations: 0,
            shift: opts.shift,
        });
    }
    let q = (count + count / 2 + 4).min(n);

    // lower the shift until the factorization certifies sigma < lambda_min
    let mut sigma = opts.shift;
    let mut step = 1.0 + 0.25 * sigma.abs();
    let mut fact = None;
    for _ in 0..90 {
        let shifted = a.add_scaled(m, -sigma);
        let f = ldlt(&shifted)?;
        if f.n_neg == 0 && f.n_zero == 0 {
            fact = Some(f);
            break;
        }
        sigma -= step;
        step *= 2.0;
    }
    let fact = fact.ok_or_else(|| {
        Error::Eigensolve(format!("no shift below the spectrum found (last tried {sigma:.3e})"))
    })?;

    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut x: Vec<Vec<f64>> = Vec::with_capacity(q);
    x.push(vec![1.0; n]);
    for _ in 1..q {
        x.push((0..n).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect());
    }
    m_orthonormalize(&mut x, m, &mut rng);

    let mut values = vec![0.0; q];
    let mut residuals = vec![f64::INFINITY; count];
    let mut iterations = 0;

    for it in 1..=opts.max_iter {
        iterations = it;
        // Y = (A - sigma M)^{-1} M X
        let mut y: Vec<Vec<f64>> = x.iter().map(|col| fact.solve(&m.apply(col))).collect();
        m_orthonormalize(&mut y, m, &mut rng);

        // Rayleigh-Ritz on the M-orthonormal block
        let ay: Vec<Vec<f64>> = y.iter().map(|col| a.apply(col)).collect();
        let mut h = DMatrix::zeros(q, q);
        for r in 0..q {
            for c in r..q {
                let v = dot(&y[r], &ay[c]);
                h[(r, c)] = v;
                h[(c, r)] = v;
            }
        }
        let se = h.symmetric_eigen();
        let mut idx: Vec<usize> = (0..q).collect();
        idx.sort_by(|&i, &j| se.eigenvalues[i].partial_cmp(&se.eigenvalues[j]).unwrap());

        let mut xn: Vec<Vec<f64>> = Vec::with_capacity(q);
        for (slot, &j) in idx.iter().enumerate() {
            values[slot] = se.eigenvalues[j];
            let mut col = vec![0.0; n];
            for r in 0..q {
                let w = se.eigenvectors[(r, j)];
                if w != 0.0 {
                    for (ci, yi) in col.iter_mut().zip(&y[r]) {
                        *ci += w * yi;
                    }
                }
            }
            xn.push(col);
        }
        x = xn;

        let mut done = true;
        for j in 0..count {
            let ax = a.apply(&x[j]);
            let mx = m.apply(&x[j]);
            let r2: f64 = ax
                .iter()
                .zip(&mx)
                .map(|(av, mv)| (av - values[j] * mv) * (av - values[j] * mv))
                .sum();
            residuals[j] = r2.sqrt();
            if residuals[j] >= opts.tol {
                done = false;
            }
        }
        if done {
            break;
        }
        if it == opts.max_iter {
            return Err(Error::Eigensolve(format!(
                "no convergence after {} iterations (worst residual {:.3e}, target {:.1e})",
                it,
                residuals.iter().cloned().fold(0.0, f64::max),
                opts.tol
            )));
        }
    }

    let mut vectors = Vec::with_capacity(count);
    for (j, mut col) in x.into_iter().enumerate().take(count) {
        let pk = col
            .iter()
            .enumerate()
            .max_by(|(_, a), (_, b)| a.abs().partial_cmp(&b.abs()).unwrap())
            .map(|(i, _)| i)
            .unwrap_or(0);
        if col[pk] < 0.0 {
            for v in &mut col {
                *v = -*v;
            }
        }
        let _ = j;
        vectors.push(col);
    }

    Ok(Eigs {
        values: values[..count].to_vec(),
        vectors,
        residuals,
        iterations,
        shift: sigma,
    })
}

/// Modified Gram-Schmidt in the M inner product, two passes, with
/// deterministic replacement of collapsed columns.
fn m_orthonormalize(x: &mut Vec<Vec<f64>>, m: &SymCsr<f64>, rng: &mut ChaCha8Rng) {
    let n = m.n();
    let q = x.len();
    let mut mx: Vec<Vec<f64>> = Vec::with_capacity(q);
    for j in 0..q {
        let mut attempts = 0;
        loop {
            for _pass in 0..2 {
                for i in 0..j {
                    let c = dot(&x[j], &mx[i]);
                    if c != 0.0 {
                        let (head, tail) = x.split_at_mut(j);
                        for (v, u) in tail[0].iter_mut().zip(&head[i]) {
                            *v -= c * u;
                        }
                    }
                }
            }
            let mxj = m.apply(&x[j]);
            let nrm = dot(&x[j], &mxj).sqrt();
            if nrm > 1e-12 {
                for v in x[j].iter_mut() {
                    *v /= nrm;
                }
                mx.push(m.apply(&x[j]));
                break;
            }
            attempts += 1;
            assert!(attempts < 20, "start block degenerated");
            x[j] = (0..n).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// Dirichlet Laplacian on (0,1) with n interior points: exact discrete
    /// eigenvalues (2/h^2)(1 - cos(k pi h)).
    fn dirichlet_pair(n: usize) -> (SymCsr<f64>, SymCsr<f64>, f64) {
        let h = 1.0 / (n as f64 + 1.0);
        let mut trips = Vec::new();
        for i in 0..n {
            trips.push((i as u32, i as u32, 2.0 / h));
            if i + 1 < n {
                trips.push((i as u32, i as u32 + 1, -1.0 / h));
            }
        }
        let k = SymCsr::from_triplets(n, &trips);
        let m = SymCsr::diag(&vec![h; n]);
        (k, m, h)
    }

    #[test]
    fn finds_lowest_eigenvalues() {
        let (k, m, h) = dirichlet_pair(200);
        let eigs = lowest(&k, &m, &EigOpts { count: 5, shift: 0.0, ..Default::default() }).unwrap();
        for j in 0..5 {
            let exact = 2.0 / (h * h) * (1.0 - ((j as f64 + 1.0) * std::f64::consts::PI * h).cos());
            assert_relative_eq!(eigs.values[j], exact, epsilon = 1e-7);
            assert!(eigs.residuals[j] < 1e-9);
        }
        // M-normalization
        let v = &eigs.vectors[0];
        let nrm = m.quad(v, v);
        assert_relative_eq!(nrm, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn shift_descends_below_negative_spectrum() {
        // A = K - 30*M has negative eigenvalues; start the shift above them
        let (k, m, _) = dirichlet_pair(100);
        let a = k.add_scaled(&m, -30.0);
        let eigs = lowest(&a, &m, &EigOpts { count: 3, shift: -1.0, ..Default::default() }).unwrap();
        assert!(eigs.shift < eigs.values[0]);
        assert!(eigs.values[0] < 0.0);
    }

    #[test]
    fn deterministic_across_runs() {
        let (k, m, _) = dirichlet_pair(80);
        let opts = EigOpts { count: 4, shift: 0.0, ..Default::default() };
        let a = lowest(&k, &m, &opts).unwrap();
        let b = lowest(&k, &m, &opts).unwrap();
        assert_eq!(a.values, b.values);
        assert_eq!(a.vectors, b.vectors);
    }

    #[test]
    fn inertia_matches_eigenvalue_count() {
        let (k, m, h) = dirichlet_pair(60);
        let lam3 = 2.0 / (h * h) * (1.0 - (3.0 * std::f64::consts::PI * h).cos());
        let lam4 = 2.0 / (h * h) * (1.0 - (4.0 * std::f64::consts::PI * h).cos());
        let (below, hit) = inertia_below(&k, &m, 0.5 * (lam3 + lam4)).unwrap();
        assert_eq!(below, 3);
        assert_eq!(hit, 0);
    }
}
