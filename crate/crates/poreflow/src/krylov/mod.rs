//! Sparse linear algebra: CSR matrices, preconditioned conjugate gradients
//! with unpreconditioned-norm stopping, and a classical algebraic multigrid
//! preconditioner.

mod amg;
mod csr;
mod pcg;

pub use amg::{amg_setup, AmgHierarchy, AmgOptions, AmgWorkspace};
pub use csr::{CsrBuilder, CsrMatrix};
pub use pcg::{pcg, SolveStats};

/// Euclidean norm with a fixed serial reduction order.
pub fn norm2(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// Dot product with a fixed serial reduction order.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}
