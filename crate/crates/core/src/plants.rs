//! Reference systems used throughout the tests, the CLI and the README.

use crate::linmat::Matrix;
use crate::sysmodel::{LtiSystem, OfPlant, SfPlant};

/// The two-state SISO demonstration system
/// `A = [[0, 1], [−2, −3]], B = [0; 1], C = [1, −1]`
/// with impulse response `h(t) = 2e^{−t} − 3e^{−2t}`.
pub fn illustrative_system() -> LtiSystem {
    LtiSystem::new(
        Matrix::from_row_slice(2, 2, &[0.0, 1.0, -2.0, -3.0]),
        Matrix::from_row_slice(2, 1, &[0.0, 1.0]),
        Matrix::from_row_slice(1, 2, &[1.0, -1.0]),
    )
    .expect("illustrative system is well formed")
}

/// Output-feedback benchmark with `A = [[0, 1], [β, 0]]`.
///
/// Disturbances enter both states and the measurement (through the third
/// channel); the regulated output is `z = (x₁, x₂, u)`.
pub fn benchmark_plant(beta: f64) -> OfPlant {
    OfPlant::new(
        Matrix::from_row_slice(2, 2, &[0.0, 1.0, beta, 0.0]),
        Matrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]),
        Matrix::from_row_slice(2, 1, &[0.0, 1.0]),
        Matrix::from_row_slice(1, 2, &[1.0, 0.0]),
        Matrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]),
        Matrix::from_row_slice(1, 3, &[0.0, 0.0, 1.0]),
        Matrix::from_row_slice(3, 1, &[0.0, 0.0, 1.0]),
    )
    .expect("benchmark plant is well formed")
}

/// Three-state state-feedback plant whose α ↦ ε(α) curve has two local
/// minima (near α ≈ 0.09 and α ≈ 2.06).
pub fn nonconvex_plant() -> SfPlant {
    SfPlant::new(
        Matrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 1.0]),
        Matrix::from_row_slice(3, 1, &[0.0, 1.0, 1.0]),
        Matrix::from_row_slice(3, 1, &[2.0, 1.0, 0.0]),
        Matrix::from_row_slice(2, 3, &[1.0, 0.0, 10.0, 0.0, 0.0, 0.0]),
        Matrix::from_row_slice(2, 1, &[0.0, 1.0]),
    )
    .expect("counterexample plant is well formed")
}
