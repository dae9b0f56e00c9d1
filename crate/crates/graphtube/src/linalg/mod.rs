//! Minimal sparse symmetric toolbox: CSR storage, reverse Cuthill-McKee
//! ordering, profile (skyline) LDL^T factorization with inertia counts, a
//! block shift-invert subspace eigensolver, and log-log order fitting.
//!
//! Everything here is deterministic: no threading inside the solvers, a
//! fixed internal seed for the start block, and stable tie-breaking in the
//! ordering. Two runs on the same inputs produce bitwise identical output.

mod eigen;
mod factor;
mod fit;
mod sparse;

pub use eigen::{inertia_below, lowest, EigOpts, Eigs};
pub use factor::{ldlt, rcm, Ldlt};
pub use fit::{log_log_fit, pairwise_orders, LogLogFit};
pub use sparse::{SymCsr, Triplet};

use num_traits::Zero;

/// Scalar for the sparse kernels. The factorization is the same code for
/// real symmetric and complex symmetric (unconjugated) matrices, so the
/// trait deliberately has no conjugation.
pub trait Scalar:
    Copy
    + Zero
    + PartialEq
    + std::fmt::Debug
    + std::ops::Sub<Output = Self>
    + std::ops::Mul<Output = Self>
    + std::ops::Div<Output = Self>
    + std::ops::Neg<Output = Self>
    + 'static
{
    fn abs2(self) -> f64;
    /// Replacement for a vanishing pivot, keeping its sign/direction.
    fn pivot_nudge(self, eps: f64) -> Self;
    /// Strictly negative test for inertia counting; complex scalars have no
    /// sign and always return false.
    fn is_negative(self) -> bool;
}

impl Scalar for f64 {
    fn abs2(self) -> f64 {
        self * self
    }
    fn pivot_nudge(self, eps: f64) -> Self {
        if self < 0.0 {
            -eps
        } else {
            eps
        }
    }
    fn is_negative(self) -> bool {
        self < 0.0
    }
}

impl Scalar for nalgebra::Complex<f64> {
    fn abs2(self) -> f64 {
        self.norm_sqr()
    }
    fn pivot_nudge(self, eps: f64) -> Self {
        let m = self.norm();
        if m > 0.0 {
            self * (eps / m)
        } else {
            nalgebra::Complex::new(eps, 0.0)
        }
    }
    fn is_negative(self) -> bool {
        false
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
