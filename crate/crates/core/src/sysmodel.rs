//! System and plant data, structural checks, Gramians and impulse response.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linmat::{self, Matrix};

/// Default PBH rank-margin tolerance, relative to ‖[A B]‖.
pub const DEFAULT_PBH_TOL: f64 = 1e-8;
/// Relative tolerance for the orthogonality assumptions (CᵀD = 0, BDᵀ = 0).
pub const ORTHOGONALITY_TOL: f64 = 1e-9;
/// Singular-value threshold (relative to σmax) for full-rank B and C.
pub const RANK_TOL: f64 = 1e-10;
/// Largest admissible condition number of DᵀD / DDᵀ.
pub const MAX_WEIGHT_CONDITION: f64 = 1e12;

/// Strictly proper LTI system `ẋ = Ax + Bu, y = Cx`.
#[derive(Debug, Clone, PartialEq)]
pub struct LtiSystem {
    pub a: Matrix,
    pub b: Matrix,
    pub c: Matrix,
}

fn check_square(a: &Matrix) -> Result<usize> {
    if a.nrows() == 0 || !a.is_square() {
        return Err(Error::InvalidModel(format!(
            "A must be square and non-empty, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if !a.iter().all(|v| v.is_finite()) {
        return Err(Error::InvalidModel("A has non-finite entries".into()));
    }
    Ok(a.nrows())
}

fn check_shape(name: &str, m: &Matrix, rows: Option<usize>, cols: Option<usize>) -> Result<()> {
    let bad_rows = rows.is_some_and(|r| r != m.nrows());
    let bad_cols = cols.is_some_and(|c| c != m.ncols());
    if bad_rows || bad_cols || m.nrows() == 0 || m.ncols() == 0 {
        let want = |d: Option<usize>| d.map_or("*".to_string(), |v| v.to_string());
        return Err(Error::InvalidModel(format!(
            "dimension mismatch: {name} is {}x{}, expected {}x{}",
            m.nrows(),
            m.ncols(),
            want(rows),
            want(cols)
        )));
    }
    if !m.iter().all(|v| v.is_finite()) {
        return Err(Error::InvalidModel(format!("{name} has non-finite entries")));
    }
    Ok(())
}

fn full_rank(m: &Matrix) -> bool {
    let sv = linmat::singular_values(m);
    let smax = sv.iter().copied().fold(0.0, f64::max);
    smax > 0.0 && sv.iter().all(|&s| s > RANK_TOL * smax)
}

impl LtiSystem {
    /// Builds a system, enforcing consistent dimensions and full-rank B and C.
    pub fn new(a: Matrix, b: Matrix, c: Matrix) -> Result<Self> {
        let sys = Self::realization(a, b, c)?;
        if sys.b.ncols() > sys.n() || !full_rank(&sys.b) {
            return Err(Error::InvalidModel(
                "B must have full column rank (remove linearly dependent inputs)".into(),
            ));
        }
        if sys.c.nrows() > sys.n() || !full_rank(&sys.c) {
            return Err(Error::InvalidModel(
                "C must have full row rank (remove linearly dependent outputs)".into(),
            ));
        }
        Ok(sys)
    }

    /// Builds a realization checking dimensions only.
    ///
    /// Used for derived systems (closed loops, sums, cascades) whose input or
    /// output maps may be rank deficient.
    pub fn realization(a: Matrix, b: Matrix, c: Matrix) -> Result<Self> {
        let n = check_square(&a)?;
        check_shape("B", &b, Some(n), None)?;
        check_shape("C", &c, None, Some(n))?;
        Ok(Self { a, b, c })
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    /// Number of inputs.
    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    /// Number of outputs.
    pub fn k(&self) -> usize {
        self.c.nrows()
    }

    pub fn spectral_abscissa(&self) -> Result<f64> {
        linmat::spectral_abscissa(&self.a)
    }

    /// Errors with `SolverDegenerate` unless A is Hurwitz; returns the abscissa.
    pub fn require_stable(&self) -> Result<f64> {
        let r = self.spectral_abscissa()?;
        if r >= 0.0 {
            return Err(Error::SolverDegenerate(format!(
                "system is unstable (spectral abscissa {r:.6})"
            )));
        }
        Ok(r)
    }

    /// The dual system (Aᵀ, Cᵀ, Bᵀ).
    pub fn dual(&self) -> Self {
        Self { a: self.a.transpose(), b: self.c.transpose(), c: self.b.transpose() }
    }

    /// Similarity transform x ↦ T x.
    pub fn transformed(&self, t: &Matrix) -> Result<Self> {
        let t_inv = t
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::InvalidModel("similarity transform is singular".into()))?;
        Self::realization(t * &self.a * &t_inv, t * &self.b, &self.c * t_inv)
    }
}

/// Plant for state-feedback synthesis: `ẋ = Ax + Bu + B_w w, z = Cx + Du`.
#[derive(Debug, Clone, PartialEq)]
pub struct SfPlant {
    pub a: Matrix,
    pub b: Matrix,
    pub bw: Matrix,
    pub c: Matrix,
    pub d: Matrix,
}

/// Plant for filter synthesis: `ẋ = Ax + Bw, y = Cx + Dw`, error `z = C_z(x − x̂)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterPlant {
    pub a: Matrix,
    pub b: Matrix,
    pub c: Matrix,
    pub d: Matrix,
    pub cz: Matrix,
}

/// Plant for output-feedback synthesis:
/// `ẋ = Ax + B₁w + B₂u, y = C₁x + D₁w, z = C₂x + D₂u`.
#[derive(Debug, Clone, PartialEq)]
pub struct OfPlant {
    pub a: Matrix,
    pub b1: Matrix,
    pub b2: Matrix,
    pub c1: Matrix,
    pub c2: Matrix,
    pub d1: Matrix,
    pub d2: Matrix,
}

impl SfPlant {
    pub fn new(a: Matrix, b: Matrix, bw: Matrix, c: Matrix, d: Matrix) -> Result<Self> {
        let n = check_square(&a)?;
        check_shape("B", &b, Some(n), None)?;
        check_shape("Bw", &bw, Some(n), None)?;
        check_shape("C", &c, None, Some(n))?;
        check_shape("D", &d, Some(c.nrows()), Some(b.ncols()))?;
        Ok(Self { a, b, bw, c, d })
    }
}

impl FilterPlant {
    pub fn new(a: Matrix, b: Matrix, c: Matrix, d: Matrix, cz: Matrix) -> Result<Self> {
        let n = check_square(&a)?;
        check_shape("B", &b, Some(n), None)?;
        check_shape("C", &c, None, Some(n))?;
        check_shape("D", &d, Some(c.nrows()), Some(b.ncols()))?;
        check_shape("Cz", &cz, None, Some(n))?;
        Ok(Self { a, b, c, d, cz })
    }
}

impl OfPlant {
    pub fn new(
        a: Matrix,
        b1: Matrix,
        b2: Matrix,
        c1: Matrix,
        c2: Matrix,
        d1: Matrix,
        d2: Matrix,
    ) -> Result<Self> {
        let n = check_square(&a)?;
        check_shape("B1", &b1, Some(n), None)?;
        check_shape("B2", &b2, Some(n), None)?;
        check_shape("C1", &c1, None, Some(n))?;
        check_shape("C2", &c2, None, Some(n))?;
        check_shape("D1", &d1, Some(c1.nrows()), Some(b1.ncols()))?;
        check_shape("D2", &d2, Some(c2.nrows()), Some(b2.ncols()))?;
        Ok(Self { a, b1, b2, c1, c2, d1, d2 })
    }

    /// The state-feedback subproblem (A, B₂, B₁, C₂, D₂).
    pub fn state_feedback_part(&self) -> SfPlant {
        SfPlant {
            a: self.a.clone(),
            b: self.b2.clone(),
            bw: self.b1.clone(),
            c: self.c2.clone(),
            d: self.d2.clone(),
        }
    }

    /// The filtering subproblem (A, B₁, C₁, D₁) with error output C_z = C₂.
    pub fn filter_part(&self) -> FilterPlant {
        FilterPlant {
            a: self.a.clone(),
            b: self.b1.clone(),
            c: self.c1.clone(),
            d: self.d1.clone(),
            cz: self.c2.clone(),
        }
    }
}

/// Which PBH property a check establishes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PbhProperty {
    Controllable,
    Stabilizable,
    Observable,
    Detectable,
}

/// Outcome of one eigenvalue-wise PBH rank test.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PbhCheck {
    /// Human-readable pair, e.g. "(A,B2)".
    pub pair: String,
    pub property: PbhProperty,
    pub holds: bool,
    /// Worst σmin over the tested eigenvalues, relative to the pair's scale.
    pub margin: f64,
}

/// A residual-type assumption such as CᵀD = 0 or cond(DᵀD) bounded.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualCheck {
    pub name: String,
    pub residual: f64,
    pub threshold: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct StructureReport {
    pub pbh: Vec<PbhCheck>,
    pub residuals: Vec<ResidualCheck>,
}

impl StructureReport {
    pub fn all_hold(&self) -> bool {
        self.pbh.iter().all(|c| c.holds) && self.residuals.iter().all(|c| c.holds)
    }

    /// Describes the first violated assumption, if any.
    pub fn first_failure(&self) -> Option<String> {
        if let Some(c) = self.pbh.iter().find(|c| !c.holds) {
            let what = match c.property {
                PbhProperty::Controllable => "controllable",
                PbhProperty::Stabilizable => "stabilizable",
                PbhProperty::Observable => "observable",
                PbhProperty::Detectable => "detectable",
            };
            return Some(format!("{} is not {} (PBH margin {:.3e})", c.pair, what, c.margin));
        }
        self.residuals.iter().find(|c| !c.holds).map(|c| {
            if c.name.contains("cond") {
                format!("{} not invertible (condition {:.3e})", c.name, c.residual)
            } else {
                format!("orthogonality violated: {} = {:.3e}", c.name, c.residual)
            }
        })
    }

    /// `Ok(())` when every assumption holds, else `InvalidModel`.
    pub fn ensure(&self) -> Result<()> {
        match self.first_failure() {
            None => Ok(()),
            Some(msg) => Err(Error::InvalidModel(msg)),
        }
    }
}

/// Smallest singular value of the complex matrix `[λI − A, B]`, computed
/// through its real embedding.
fn pbh_sigma_min(a: &Matrix, b: &Matrix, re: f64, im: f64) -> f64 {
    let n = a.nrows();
    let m = b.ncols();
    let mut x = Matrix::zeros(n, n + m);
    let mut y = Matrix::zeros(n, n + m);
    x.view_mut((0, 0), (n, n)).copy_from(&(Matrix::identity(n, n) * re - a));
    x.view_mut((0, n), (n, m)).copy_from(b);
    for i in 0..n {
        y[(i, i)] = im;
    }
    let mut big = Matrix::zeros(2 * n, 2 * (n + m));
    big.view_mut((0, 0), (n, n + m)).copy_from(&x);
    big.view_mut((0, n + m), (n, n + m)).copy_from(&(-&y));
    big.view_mut((n, 0), (n, n + m)).copy_from(&y);
    big.view_mut((n, n + m), (n, n + m)).copy_from(&x);
    let sv = linmat::singular_values(&big);
    sv.iter().copied().fold(f64::INFINITY, f64::min)
}

/// PBH test of the pair (a, b); for observability pass (aᵀ, cᵀ).
pub fn pbh_test(
    pair: &str,
    property: PbhProperty,
    a: &Matrix,
    b: &Matrix,
    tol: f64,
) -> Result<PbhCheck> {
    let n = a.nrows();
    let mut ab = Matrix::zeros(n, n + b.ncols());
    ab.view_mut((0, 0), (n, n)).copy_from(a);
    ab.view_mut((0, n), (n, b.ncols())).copy_from(b);
    let scale = ab.norm().max(f64::MIN_POSITIVE);
    let only_unstable = matches!(property, PbhProperty::Stabilizable | PbhProperty::Detectable);
    let mut worst = f64::INFINITY;
    for e in linmat::eigenvalues(a)? {
        if only_unstable && e.re < 0.0 {
            continue;
        }
        worst = worst.min(pbh_sigma_min(a, b, e.re, e.im) / scale);
    }
    if !worst.is_finite() {
        // No eigenvalue needed testing (e.g. stabilizability of a stable A).
        worst = 1.0;
    }
    Ok(PbhCheck { pair: pair.to_string(), property, holds: worst > tol, margin: worst })
}

fn orthogonality(name: &str, product: &Matrix, x: &Matrix, y: &Matrix) -> ResidualCheck {
    let scale = (x.norm() * y.norm()).max(f64::MIN_POSITIVE);
    let residual = product.norm() / scale;
    ResidualCheck {
        name: name.to_string(),
        residual,
        threshold: ORTHOGONALITY_TOL,
        holds: residual <= ORTHOGONALITY_TOL,
    }
}

fn invertibility(name: &str, w: &Matrix) -> ResidualCheck {
    let sv = linmat::singular_values(w);
    let smax = sv.iter().copied().fold(0.0, f64::max);
    let smin = sv.iter().copied().fold(f64::INFINITY, f64::min);
    let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    ResidualCheck {
        name: format!("cond({name})"),
        residual: cond,
        threshold: MAX_WEIGHT_CONDITION,
        holds: cond <= MAX_WEIGHT_CONDITION,
    }
}

/// Anything whose structural assumptions can be checked.
pub trait Validate {
    fn validate(&self, tol: f64) -> Result<StructureReport>;
}

impl Validate for LtiSystem {
    /// Reports all four PBH properties of (A, B, C).
    fn validate(&self, tol: f64) -> Result<StructureReport> {
        let at = self.a.transpose();
        let ct = self.c.transpose();
        Ok(StructureReport {
            pbh: vec![
                pbh_test("(A,B)", PbhProperty::Controllable, &self.a, &self.b, tol)?,
                pbh_test("(A,B)", PbhProperty::Stabilizable, &self.a, &self.b, tol)?,
                pbh_test("(C,A)", PbhProperty::Observable, &at, &ct, tol)?,
                pbh_test("(C,A)", PbhProperty::Detectable, &at, &ct, tol)?,
            ],
            residuals: Vec::new(),
        })
    }
}

impl Validate for SfPlant {
    fn validate(&self, tol: f64) -> Result<StructureReport> {
        let ctd = self.c.transpose() * &self.d;
        let dtd = self.d.transpose() * &self.d;
        Ok(StructureReport {
            pbh: vec![
                pbh_test("(A,B)", PbhProperty::Stabilizable, &self.a, &self.b, tol)?,
                pbh_test("(C,A)", PbhProperty::Observable, &self.a.transpose(), &self.c.transpose(), tol)?,
            ],
            residuals: vec![orthogonality("C'D", &ctd, &self.c, &self.d), invertibility("D'D", &dtd)],
        })
    }
}

impl Validate for FilterPlant {
    fn validate(&self, tol: f64) -> Result<StructureReport> {
        let bdt = &self.b * self.d.transpose();
        let ddt = &self.d * self.d.transpose();
        Ok(StructureReport {
            pbh: vec![
                pbh_test("(C,A)", PbhProperty::Detectable, &self.a.transpose(), &self.c.transpose(), tol)?,
                pbh_test("(A,B)", PbhProperty::Controllable, &self.a, &self.b, tol)?,
            ],
            residuals: vec![orthogonality("BD'", &bdt, &self.b, &self.d), invertibility("DD'", &ddt)],
        })
    }
}

impl Validate for OfPlant {
    fn validate(&self, tol: f64) -> Result<StructureReport> {
        let at = self.a.transpose();
        Ok(StructureReport {
            pbh: vec![
                pbh_test("(A,B2)", PbhProperty::Stabilizable, &self.a, &self.b2, tol)?,
                pbh_test("(C1,A)", PbhProperty::Detectable, &at, &self.c1.transpose(), tol)?,
                pbh_test("(A,B1)", PbhProperty::Controllable, &self.a, &self.b1, tol)?,
                pbh_test("(C2,A)", PbhProperty::Observable, &at, &self.c2.transpose(), tol)?,
            ],
            residuals: vec![
                orthogonality("B1D1'", &(&self.b1 * self.d1.transpose()), &self.b1, &self.d1),
                orthogonality("C2'D2", &(self.c2.transpose() * &self.d2), &self.c2, &self.d2),
                invertibility("D1D1'", &(&self.d1 * self.d1.transpose())),
                invertibility("D2'D2", &(self.d2.transpose() * &self.d2)),
            ],
        })
    }
}

/// Controllability and observability Gramians `(P, Q)`:
/// `AP + PAᵀ + BBᵀ = 0`, `QA + AᵀQ + CᵀC = 0`.
pub fn gramians(sys: &LtiSystem) -> Result<(Matrix, Matrix)> {
    sys.require_stable()?;
    let p = linmat::lyap_solve(&sys.a, &(&sys.b * sys.b.transpose()))?;
    let q = linmat::lyap_solve(&sys.a.transpose(), &(sys.c.transpose() * &sys.c))?;
    Ok((p, q))
}

/// Impulse response `C e^{At} B`.
pub fn impulse_response(sys: &LtiSystem, t: f64) -> Result<Matrix> {
    if t < 0.0 {
        return Err(Error::InvalidModel(format!("impulse response needs t >= 0, got {t}")));
    }
    Ok(&sys.c * linmat::matexp(&sys.a, t)? * &sys.b)
}

/// On-disk model description: every matrix as a row-major array of rows.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(rename = "A", default, skip_serializing_if = "Option::is_none")]
    pub a: Option<Vec<Vec<f64>>>,
    #[serde(rename = "B", default, skip_serializing_if = "Option::is_none")]
    pub b: Option<Vec<Vec<f64>>>,
    #[serde(rename = "C", default, skip_serializing_if = "Option::is_none")]
    pub c: Option<Vec<Vec<f64>>>,
    #[serde(rename = "Bw", default, skip_serializing_if = "Option::is_none")]
    pub bw: Option<Vec<Vec<f64>>>,
    #[serde(rename = "D", default, skip_serializing_if = "Option::is_none")]
    pub d: Option<Vec<Vec<f64>>>,
    #[serde(rename = "Cz", default, skip_serializing_if = "Option::is_none")]
    pub cz: Option<Vec<Vec<f64>>>,
    #[serde(rename = "B1", default, skip_serializing_if = "Option::is_none")]
    pub b1: Option<Vec<Vec<f64>>>,
    #[serde(rename = "B2", default, skip_serializing_if = "Option::is_none")]
    pub b2: Option<Vec<Vec<f64>>>,
    #[serde(rename = "C1", default, skip_serializing_if = "Option::is_none")]
    pub c1: Option<Vec<Vec<f64>>>,
    #[serde(rename = "C2", default, skip_serializing_if = "Option::is_none")]
    pub c2: Option<Vec<Vec<f64>>>,
    #[serde(rename = "D1", default, skip_serializing_if = "Option::is_none")]
    pub d1: Option<Vec<Vec<f64>>>,
    #[serde(rename = "D2", default, skip_serializing_if = "Option::is_none")]
    pub d2: Option<Vec<Vec<f64>>>,
}

/// Converts row-major nested arrays into a matrix.
pub fn matrix_from_rows(name: &str, rows: &[Vec<f64>]) -> Result<Matrix> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if nrows == 0 || ncols == 0 {
        return Err(Error::InvalidModel(format!("{name} is empty")));
    }
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::InvalidModel(format!("{name} has rows of unequal length")));
    }
    Ok(Matrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

/// Row-major nested arrays of a matrix.
pub fn matrix_to_rows(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn field(name: &str, v: &Option<Vec<Vec<f64>>>) -> Result<Matrix> {
    match v {
        Some(rows) => matrix_from_rows(name, rows),
        None => Err(Error::InvalidModel(format!("missing field \"{name}\""))),
    }
}

impl ModelFile {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidModel(format!("malformed JSON: {e}")))
    }

    pub fn to_system(&self) -> Result<LtiSystem> {
        LtiSystem::new(field("A", &self.a)?, field("B", &self.b)?, field("C", &self.c)?)
    }

    pub fn to_sf_plant(&self) -> Result<SfPlant> {
        SfPlant::new(
            field("A", &self.a)?,
            field("B", &self.b)?,
            field("Bw", &self.bw)?,
            field("C", &self.c)?,
            field("D", &self.d)?,
        )
    }

    pub fn to_filter_plant(&self) -> Result<FilterPlant> {
        FilterPlant::new(
            field("A", &self.a)?,
            field("B", &self.b)?,
            field("C", &self.c)?,
            field("D", &self.d)?,
            field("Cz", &self.cz)?,
        )
    }

    pub fn to_of_plant(&self) -> Result<OfPlant> {
        OfPlant::new(
            field("A", &self.a)?,
            field("B1", &self.b1)?,
            field("B2", &self.b2)?,
            field("C1", &self.c1)?,
            field("C2", &self.c2)?,
            field("D1", &self.d1)?,
            field("D2", &self.d2)?,
        )
    }

    pub fn from_system(name: Option<&str>, sys: &LtiSystem) -> Self {
        Self {
            name: name.map(str::to_string),
            a: Some(matrix_to_rows(&sys.a)),
            b: Some(matrix_to_rows(&sys.b)),
            c: Some(matrix_to_rows(&sys.c)),
            ..Self::default()
        }
    }

    pub fn from_of_plant(name: Option<&str>, p: &OfPlant) -> Self {
        Self {
            name: name.map(str::to_string),
            a: Some(matrix_to_rows(&p.a)),
            b1: Some(matrix_to_rows(&p.b1)),
            b2: Some(matrix_to_rows(&p.b2)),
            c1: Some(matrix_to_rows(&p.c1)),
            c2: Some(matrix_to_rows(&p.c2)),
            d1: Some(matrix_to_rows(&p.d1)),
            d2: Some(matrix_to_rows(&p.d2)),
            ..Self::default()
        }
    }
}
