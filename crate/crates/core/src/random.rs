//! Seeded generators of random test systems.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::linmat::{self, Matrix};
use crate::sysmodel::{pbh_test, LtiSystem, OfPlant, PbhProperty};

pub type TestRng = ChaCha8Rng;

pub fn rng(seed: u64) -> TestRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rng: &mut TestRng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

/// Random matrix with singular values in [0.5, 2].
pub fn random_invertible(rng: &mut TestRng, n: usize) -> Matrix {
    loop {
        let t = random_matrix(rng, n, n) + Matrix::identity(n, n);
        let sv = linmat::singular_values(&t);
        if sv[0] <= 4.0 && sv[n - 1] >= 0.25 {
            return t;
        }
    }
}

fn well_posed(a: &Matrix, b: &Matrix, c: &Matrix, margin: f64) -> bool {
    let ok = |p: PbhProperty, x: &Matrix, y: &Matrix| {
        pbh_test("", p, x, y, margin).map(|c| c.holds).unwrap_or(false)
    };
    ok(PbhProperty::Controllable, a, b)
        && ok(PbhProperty::Observable, &a.transpose(), &c.transpose())
}

/// Random stable, controllable and observable system with full-rank B, C.
///
/// The spectral abscissa is drawn from [−1, −0.2] and the PBH margins are
/// kept above 1e-2 so Gramians stay comfortably positive definite.
///
/// Panics unless `1 ≤ m, k ≤ n`.
pub fn random_stable_system(rng: &mut TestRng, n: usize, m: usize, k: usize) -> LtiSystem {
    assert!(m >= 1 && k >= 1 && m <= n && k <= n, "need 1 <= m, k <= n (n={n}, m={m}, k={k})");
    loop {
        let m0 = random_matrix(rng, n, n) * 1.5;
        let r = linmat::spectral_abscissa(&m0).expect("finite matrix");
        let target = -rng.random_range(0.2..1.0);
        let a = m0 - Matrix::identity(n, n) * (r - target);
        let b = random_matrix(rng, n, m);
        let c = random_matrix(rng, k, n);
        if !well_posed(&a, &b, &c, 1e-2) {
            continue;
        }
        if let Ok(sys) = LtiSystem::new(a, b, c) {
            return sys;
        }
    }
}

/// Random output-feedback plant satisfying every structural assumption.
///
/// Orthogonality is built in: the measurement noise and the control
/// penalty live in extra channels that the state equation never sees.
pub fn random_of_plant(rng: &mut TestRng, n: usize) -> OfPlant {
    loop {
        let a = random_matrix(rng, n, n) * 1.5;
        let b1s = random_matrix(rng, n, n);
        let b2 = random_matrix(rng, n, 1);
        let c1 = random_matrix(rng, 1, n);
        let c2s = random_matrix(rng, n, n);
        let mut b1 = Matrix::zeros(n, n + 1);
        b1.view_mut((0, 0), (n, n)).copy_from(&b1s);
        let mut d1 = Matrix::zeros(1, n + 1);
        d1[(0, n)] = rng.random_range(0.5..1.5);
        let mut c2 = Matrix::zeros(n + 1, n);
        c2.view_mut((0, 0), (n, n)).copy_from(&c2s);
        let mut d2 = Matrix::zeros(n + 1, 1);
        d2[(n, 0)] = rng.random_range(0.5..1.5);
        if !well_posed(&a, &b2, &c1, 1e-2) || !well_posed(&a, &b1, &c2, 1e-2) {
            continue;
        }
        if let Ok(p) = OfPlant::new(a, b1, b2, c1, c2, d1, d2) {
            return p;
        }
    }
}
