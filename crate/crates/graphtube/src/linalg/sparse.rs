use super::Scalar;

/// One matrix entry `(row, col, value)`. Assembly passes each undirected
/// entry once, in either orientation; duplicates for the same position are
/// summed.
pub type Triplet<T> = (u32, u32, T);

/// Sparse symmetric matrix in CSR form. Both triangles are stored so that
/// `matvec` is a plain row sweep; constructors take only one orientation of
/// each off-diagonal entry and mirror it.
#[derive(Clone, Debug)]
pub struct SymCsr<T = f64> {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<u32>,
    vals: Vec<T>,
}

impl<T: Scalar> SymCsr<T> {
    /// Assemble from triplets, summing duplicates. Each logical entry (i, j)
    /// with i != j must appear in one orientation only (repeats of that same
    /// orientation are fine and accumulate).
    pub fn from_triplets(n: usize, triplets: &[Triplet<T>]) -> Self {
        let mut entries: Vec<(u32, u32, T)> = Vec::with_capacity(triplets.len());
        for &(i, j, v) in triplets {
            assert!((i as usize) < n && (j as usize) < n, "triplet out of range");
            // canonical orientation lower-first so duplicates collapse
            if i <= j {
                entries.push((i, j, v));
            } else {
                entries.push((j, i, v));
            }
        }
        entries.sort_unstable_by_key(|&(i, j, _)| ((i as u64) << 32) | j as u64);

        // merge duplicates, then mirror
        let mut merged: Vec<(u32, u32, T)> = Vec::with_capacity(entries.len());
        for (i, j, v) in entries {
            match merged.last_mut() {
                Some(last) if last.0 == i && last.1 == j => last.2 = last.2 + v,
                _ => merged.push((i, j, v)),
            }
        }
        let mut full: Vec<(u32, u32, T)> = Vec::with_capacity(merged.len() * 2);
        for &(i, j, v) in &merged {
            full.push((i, j, v));
            if i != j {
                full.push((j, i, v));
            }
        }
        full.sort_unstable_by_key(|&(i, j, _)| ((i as u64) << 32) | j as u64);

        let mut row_ptr = vec![0usize; n + 1];
        for &(i, _, _) in &full {
            row_ptr[i as usize + 1] += 1;
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        let col_idx = full.iter().map(|&(_, j, _)| j).collect();
        let vals = full.iter().map(|&(_, _, v)| v).collect();
        SymCsr { n, row_ptr, col_idx, vals }
    }

    /// Diagonal matrix.
    pub fn diag(d: &[T]) -> Self {
        let n = d.len();
        SymCsr {
            n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n as u32).collect(),
            vals: d.to_vec(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Stored entries (both triangles).
    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> (&[u32], &[T]) {
        let lo = self.row_ptr[i];
        let hi = self.row_ptr[i + 1];
        (&self.col_idx[lo..hi], &self.vals[lo..hi])
    }

    pub fn diagonal(&self) -> Vec<T> {
        (0..self.n)
            .map(|i| {
                let (cols, vals) = self.row(i);
                cols.iter()
                    .position(|&c| c as usize == i)
                    .map(|p| vals[p])
                    .unwrap_or_else(T::zero)
            })
            .collect()
    }

    pub fn matvec(&self, x: &[T], y: &mut [T]) {
        assert_eq!(x.len(), self.n);
        assert_eq!(y.len(), self.n);
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            let mut acc = T::zero();
            for (c, v) in cols.iter().zip(vals) {
                acc = acc + *v * x[*c as usize];
            }
            y[i] = acc;
        }
    }

    pub fn apply(&self, x: &[T]) -> Vec<T> {
        let mut y = vec![T::zero(); self.n];
        self.matvec(x, &mut y);
        y
    }

    /// `self + alpha * other`, pattern merged.
    pub fn add_scaled(&self, other: &SymCsr<T>, alpha: T) -> SymCsr<T> {
        assert_eq!(self.n, other.n);
        let mut trips: Vec<Triplet<T>> =
            Vec::with_capacity(self.nnz() + other.nnz());
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            for (c, v) in cols.iter().zip(vals) {
                if *c as usize >= i {
                    trips.push((i as u32, *c, *v));
                }
            }
            let (cols, vals) = other.row(i);
            for (c, v) in cols.iter().zip(vals) {
                if *c as usize >= i {
                    trips.push((i as u32, *c, alpha * *v));
                }
            }
        }
        SymCsr::from_triplets(self.n, &trips)
    }

    pub fn map<U: Scalar>(&self, f: impl Fn(T) -> U) -> SymCsr<U> {
        SymCsr {
            n: self.n,
            row_ptr: self.row_ptr.clone(),
            col_idx: self.col_idx.clone(),
            vals: self.vals.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Upper-triangle triplets (i <= j), row-major. Used by the exporters.
    pub fn upper_triplets(&self) -> Vec<Triplet<T>> {
        let mut out = Vec::new();
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            for (c, v) in cols.iter().zip(vals) {
                if *c as usize >= i {
                    out.push((i as u32, *c, *v));
                }
            }
        }
        out
    }

    pub fn pattern(&self) -> (&[usize], &[u32]) {
        (&self.row_ptr, &self.col_idx)
    }
}

impl SymCsr<f64> {
    /// x^T A y.
    pub fn quad(&self, x: &[f64], y: &[f64]) -> f64 {
        let ay = self.apply(y);
        super::dot(x, &ay)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn assembles_and_mirrors() {
        // [[2, -1, 0], [-1, 2, -1], [0, -1, 2]] from duplicate triplets
        let trips = vec![
            (0, 0, 1.0),
            (0, 0, 1.0),
            (1, 0, -1.0),
            (1, 1, 2.0),
            (2, 1, -1.0),
            (2, 2, 2.0),
        ];
        let a = SymCsr::from_triplets(3, &trips);
        assert_eq!(a.nnz(), 7);
        let y = a.apply(&[1.0, 2.0, 3.0]);
        assert_eq!(y, vec![0.0, 0.0, 4.0]);
        assert_eq!(a.diagonal(), vec![2.0, 2.0, 2.0]);
    }

    #[test]
    fn add_scaled_merges_patterns() {
        let a = SymCsr::from_triplets(2, &[(0, 0, 1.0), (1, 1, 1.0)]);
        let b = SymCsr::from_triplets(2, &[(0, 1, 1.0)]);
        let c = a.add_scaled(&b, -2.0);
        let y = c.apply(&[1.0, 1.0]);
        assert_eq!(y, vec![-1.0, -1.0]);
    }

    #[test]
    fn quad_form() {
        let a = SymCsr::from_triplets(2, &[(0, 0, 2.0), (0, 1, 1.0), (1, 1, 3.0)]);
        assert_eq!(a.quad(&[1.0, 1.0], &[1.0, 1.0]), 7.0);
    }
}
