//! Dense numeric kernels used by the model and feature components.

mod jacobi;
mod lbfgs;

pub use jacobi::{jacobi_eigen, Eigen};
pub use lbfgs::{lbfgs_minimize, LbfgsOptions, LbfgsResult, StopReason};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NumericError {
    #[error("history size must be at least 1")]
    ZeroMemory,
    #[error("objective or gradient is not finite at iteration {0}")]
    NonFinite(usize),
    #[error("matrix is not square ({rows} x {cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not symmetric: |a[{i}][{j}] - a[{j}][{i}]| = {diff:e}")]
    Asymmetric { i: usize, j: usize, diff: f64 },
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}
