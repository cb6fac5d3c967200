//! α-parameterized invariant ellipsoids and sampled reachable / observable
//! sets.
//!
//! The exact sets are only accessible through oracles: support functions
//! of the reachable sets and radial boundary distances of the observable
//! sets. Both are evaluated on a shared exponential table so that sweeping
//! hundreds of directions stays cheap.

use std::f64::consts::PI;
use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linmat::{self, Matrix, Vector};
use crate::quad::{self, ExpSamples, ExpTable};
use crate::sysmodel::LtiSystem;

/// Default number of directions for polygon export.
pub const DEFAULT_DIRECTIONS: usize = 360;
/// Default absolute membership slack.
pub const DEFAULT_SLACK: f64 = 1e-9;
/// Directions below this output norm are treated as unobservable.
const UNOBSERVABLE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum EllipsoidForm {
    /// `{x : xᵀ S⁻¹ x ≤ 1}`
    PForm,
    /// `{x : xᵀ S x ≤ 1}`
    QForm,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ellipsoid {
    pub shape: Matrix,
    pub form: EllipsoidForm,
    pub alpha: Option<f64>,
}

impl Ellipsoid {
    pub fn new(shape: Matrix, form: EllipsoidForm, alpha: Option<f64>) -> Result<Self> {
        if !shape.is_square() || shape.nrows() == 0 {
            return Err(Error::InvalidModel("ellipsoid shape must be square".into()));
        }
        let sym = linmat::symmetrize(&shape);
        if (&sym - &shape).amax() > 1e-9 * shape.amax().max(1.0) {
            return Err(Error::InvalidModel("ellipsoid shape must be symmetric".into()));
        }
        if !linmat::is_spd(&sym, 1e-12) {
            return Err(Error::NumericalFailure("ellipsoid shape is not positive definite".into()));
        }
        Ok(Self { shape: sym, form, alpha })
    }

    pub fn dim(&self) -> usize {
        self.shape.nrows()
    }

    /// The quadratic form compared against 1 for membership.
    pub fn form_value(&self, x: &Vector) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::InvalidModel(format!(
                "point has dimension {}, ellipsoid {}",
                x.len(),
                self.dim()
            )));
        }
        Ok(match self.form {
            EllipsoidForm::QForm => x.dot(&(&self.shape * x)),
            EllipsoidForm::PForm => {
                let chol = nalgebra::Cholesky::new(self.shape.clone())
                    .ok_or_else(|| Error::NumericalFailure("shape lost definiteness".into()))?;
                x.dot(&chol.solve(x))
            }
        })
    }

    pub fn contains(&self, x: &Vector, slack: f64) -> Result<bool> {
        Ok(self.form_value(x)? <= 1.0 + slack)
    }

    /// Support function `max_{x ∈ E} ηᵀx`.
    pub fn support(&self, eta: &Vector) -> Result<f64> {
        let v = match self.form {
            EllipsoidForm::PForm => eta.dot(&(&self.shape * eta)),
            EllipsoidForm::QForm => {
                let inv = linmat::spd_inverse(&self.shape)?;
                eta.dot(&(inv * eta))
            }
        };
        Ok(v.max(0.0).sqrt())
    }

    /// Boundary point `L u` (P-form, S = LLᵀ) or `L⁻ᵀu` (Q-form) for unit `u`.
    pub fn boundary_point(&self, u: &Vector) -> Result<Vector> {
        let chol = nalgebra::Cholesky::new(self.shape.clone())
            .ok_or_else(|| Error::NumericalFailure("shape lost definiteness".into()))?;
        let l = chol.l();
        let u = u / u.norm();
        Ok(match self.form {
            EllipsoidForm::PForm => l * u,
            EllipsoidForm::QForm => l
                .transpose()
                .solve_upper_triangular(&u)
                .ok_or_else(|| Error::NumericalFailure("singular Cholesky factor".into()))?,
        })
    }
}

/// Membership test against `1 + slack`.
pub fn contains(e: &Ellipsoid, x: &Vector, slack: f64) -> Result<bool> {
    e.contains(x, slack)
}

/// Upper end `−2r` of the admissible α window (requires stable A).
pub fn alpha_window(sys: &LtiSystem) -> Result<f64> {
    Ok(-2.0 * sys.require_stable()?)
}

fn check_alpha(sys: &LtiSystem, alpha: f64) -> Result<()> {
    let upper = alpha_window(sys)?;
    if !(alpha > 0.0 && alpha < upper) {
        return Err(Error::AlphaOutOfRange { alpha, upper });
    }
    Ok(())
}

fn shifted(a: &Matrix, alpha: f64) -> Matrix {
    a + Matrix::identity(a.nrows(), a.ncols()) * (0.5 * alpha)
}

/// Shape matrix of `AP + PAᵀ + αP + BBᵀ/α = 0`.
pub fn p_alpha_matrix(sys: &LtiSystem, alpha: f64) -> Result<Matrix> {
    check_alpha(sys, alpha)?;
    linmat::lyap_solve(&shifted(&sys.a, alpha), &(&sys.b * sys.b.transpose() / alpha))
}

/// Shape matrix of `QA + AᵀQ + αQ + CᵀC/α = 0`.
pub fn q_alpha_matrix(sys: &LtiSystem, alpha: f64) -> Result<Matrix> {
    check_alpha(sys, alpha)?;
    linmat::lyap_solve(&shifted(&sys.a, alpha).transpose(), &(sys.c.transpose() * &sys.c / alpha))
}

/// Outer ellipsoid `{x : xᵀP_α⁻¹x ≤ 1}` of the peak-bounded reachable set.
pub fn p_alpha(sys: &LtiSystem, alpha: f64) -> Result<Ellipsoid> {
    Ellipsoid::new(p_alpha_matrix(sys, alpha)?, EllipsoidForm::PForm, Some(alpha))
}

/// Inner ellipsoid `{x : xᵀQ_αx ≤ 1}` of the integral-bounded observable set.
pub fn q_alpha(sys: &LtiSystem, alpha: f64) -> Result<Ellipsoid> {
    Ellipsoid::new(q_alpha_matrix(sys, alpha)?, EllipsoidForm::QForm, Some(alpha))
}

/// Signal norm used for inputs (reachability) or outputs (observability).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SignalNorm {
    One,
    Inf,
}

fn check_direction(v: &Vector, n: usize) -> Result<()> {
    if v.len() != n {
        return Err(Error::InvalidModel(format!("direction has dimension {}, expected {n}", v.len())));
    }
    if (v.norm() - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidModel("direction must be a unit vector".into()));
    }
    Ok(())
}

/// Evaluates reachable-set oracles for one system and horizon.
pub struct ReachOracle<'a> {
    sys: &'a LtiSystem,
    table: ExpTable,
    samples: ExpSamples,
}

impl<'a> ReachOracle<'a> {
    pub fn new(sys: &'a LtiSystem, horizon: f64) -> Result<Self> {
        Ok(Self { sys, table: ExpTable::new(&sys.a, horizon)?, samples: ExpSamples::new(&sys.a, horizon)? })
    }

    /// `v(s) = Bᵀ e^{Aᵀs} η`.
    fn costate(&self, e: &Matrix, eta: &Vector) -> Vector {
        (e * &self.sys.b).transpose() * eta
    }

    /// Support function of R_p(T) in direction `eta`.
    pub fn support(&self, p: SignalNorm, eta: &Vector) -> Result<f64> {
        check_direction(eta, self.sys.n())?;
        match p {
            SignalNorm::Inf => self.table.integrate_norm(|e| self.costate(e, eta)),
            SignalNorm::One => Ok(self.samples.maximize(|e| self.costate(e, eta).norm())?.1),
        }
    }

    /// Exposed boundary point of R_p(T) in direction `eta`.
    pub fn boundary_point(&self, p: SignalNorm, eta: &Vector) -> Result<Vector> {
        check_direction(eta, self.sys.n())?;
        let b = &self.sys.b;
        match p {
            SignalNorm::Inf => {
                let value = |e: &Matrix| {
                    let v = self.costate(e, eta);
                    let nv = v.norm();
                    if nv < 1e-300 {
                        Vector::zeros(e.nrows())
                    } else {
                        e * b * (v / nv)
                    }
                };
                if b.ncols() == 1 {
                    self.table.integrate(value, Some(|e: &Matrix| self.costate(e, eta)[0]))
                } else {
                    self.table.integrate(value, None::<fn(&Matrix) -> f64>)
                }
            }
            SignalNorm::One => {
                let (s, _) = self.samples.maximize(|e| self.costate(e, eta).norm())?;
                let e = linmat::matexp(&self.sys.a, s)?;
                let v = self.costate(&e, eta);
                let nv = v.norm();
                if nv < 1e-300 {
                    return Ok(Vector::zeros(self.sys.n()));
                }
                Ok(e * b * (v / nv))
            }
        }
    }
}

/// Support function of the reachable set R_p(T) in direction `eta`.
///
/// `Inf`: ∫₀ᵀ |Bᵀe^{Aᵀs}η| ds. `One`: max over s ∈ [0, T] of the same norm.
pub fn reach_support(sys: &LtiSystem, p: SignalNorm, horizon: f64, eta: &Vector) -> Result<f64> {
    ReachOracle::new(sys, horizon)?.support(p, eta)
}

/// Evaluates observable-set radii for one (stable) system.
pub struct ObsOracle<'a> {
    sys: &'a LtiSystem,
    table: ExpTable,
    samples: ExpSamples,
}

impl<'a> ObsOracle<'a> {
    pub fn new(sys: &'a LtiSystem) -> Result<Self> {
        let horizon = quad::default_horizon(&sys.a)?;
        Ok(Self { sys, table: ExpTable::new(&sys.a, horizon)?, samples: ExpSamples::new(&sys.a, horizon)? })
    }

    /// ‖y‖_q of the free response from `x0`.
    pub fn output_norm(&self, q: SignalNorm, x0: &Vector) -> Result<f64> {
        let c = &self.sys.c;
        match q {
            SignalNorm::One => self.table.integrate_norm(|e| c * (e * x0)),
            SignalNorm::Inf => Ok(self.samples.maximize(|e| (c * (e * x0)).norm())?.1),
        }
    }

    /// Distance to the boundary of O_q along `direction`; `+∞` if unobservable.
    pub fn radius(&self, q: SignalNorm, direction: &Vector) -> Result<f64> {
        check_direction(direction, self.sys.n())?;
        let denom = self.output_norm(q, direction)?;
        Ok(if denom < UNOBSERVABLE_TOL { f64::INFINITY } else { 1.0 / denom })
    }
}

/// Boundary radius of the observable set O_q along a unit direction.
pub fn obs_radius(sys: &LtiSystem, q: SignalNorm, direction: &Vector) -> Result<f64> {
    ObsOracle::new(sys)?.radius(q, direction)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PolygonKind {
    ReachInf,
    Reach1,
    Obs1,
    ObsInf,
    EllipsoidBoundary,
}

impl PolygonKind {
    pub fn label(self) -> &'static str {
        match self {
            PolygonKind::ReachInf => "reach_inf",
            PolygonKind::Reach1 => "reach_1",
            PolygonKind::Obs1 => "obs_1",
            PolygonKind::ObsInf => "obs_inf",
            PolygonKind::EllipsoidBoundary => "ellipsoid",
        }
    }
}

/// Ordered 2-D boundary samples of a set.
#[derive(Debug, Clone, PartialEq)]
pub struct SetPolygon {
    pub kind: PolygonKind,
    /// Free-form CSV label; defaults to the kind's label.
    pub label: String,
    pub vertices: Vec<[f64; 2]>,
    pub horizon: f64,
}

impl SetPolygon {
    /// True when every turn has the same orientation (within `tol` on the
    /// normalized cross product), after merging coincident vertices.
    pub fn is_convex(&self, tol: f64) -> bool {
        // Corner vertices of bang-bang sets repeat up to roundoff; merge them.
        let scale = self.vertices.iter().fold(0.0_f64, |m, p| m.max(p[0].hypot(p[1])));
        let mut v: Vec<[f64; 2]> = Vec::with_capacity(self.vertices.len());
        for p in &self.vertices {
            if v.last().is_none_or(|q| (p[0] - q[0]).hypot(p[1] - q[1]) > 1e-9 * scale) {
                v.push(*p);
            }
        }
        while v.len() > 1 && (v[0][0] - v[v.len() - 1][0]).hypot(v[0][1] - v[v.len() - 1][1]) <= 1e-9 * scale {
            v.pop();
        }
        let n = v.len();
        if n < 3 {
            return true;
        }
        let mut sign = 0.0;
        for i in 0..n {
            let (p, q, r) = (v[i], v[(i + 1) % n], v[(i + 2) % n]);
            let (ax, ay) = (q[0] - p[0], q[1] - p[1]);
            let (bx, by) = (r[0] - q[0], r[1] - q[1]);
            let scale = (ax.hypot(ay) * bx.hypot(by)).max(f64::MIN_POSITIVE);
            let cross = (ax * by - ay * bx) / scale;
            if cross.abs() <= tol {
                continue;
            }
            if sign == 0.0 {
                sign = cross.signum();
            } else if cross.signum() != sign {
                return false;
            }
        }
        true
    }
}

fn unit_directions(n_dirs: usize) -> Vec<Vector> {
    (0..n_dirs)
        .map(|i| {
            let th = 2.0 * PI * i as f64 / n_dirs as f64;
            Vector::from_vec(vec![th.cos(), th.sin()])
        })
        .collect()
}

/// Boundary polygon of one of the four sets for a two-state system.
///
/// Reachable sets are outer polygons formed by intersecting consecutive
/// support lines; observable sets are sampled radially.
pub fn set_polygon(sys: &LtiSystem, kind: PolygonKind, horizon: f64, n_dirs: usize) -> Result<SetPolygon> {
    if sys.n() != 2 {
        return Err(Error::InvalidModel(format!("set polygons need n = 2, got n = {}", sys.n())));
    }
    if n_dirs < 8 {
        return Err(Error::InvalidModel(format!("need at least 8 directions, got {n_dirs}")));
    }
    let dirs = unit_directions(n_dirs);
    let vertices = match kind {
        PolygonKind::ReachInf | PolygonKind::Reach1 => {
            let p = if kind == PolygonKind::ReachInf { SignalNorm::Inf } else { SignalNorm::One };
            let oracle = ReachOracle::new(sys, horizon)?;
            let h: Vec<f64> = dirs.iter().map(|d| oracle.support(p, d)).collect::<Result<_>>()?;
            (0..n_dirs)
                .map(|i| {
                    let j = (i + 1) % n_dirs;
                    let (d1, d2) = (&dirs[i], &dirs[j]);
                    let det = d1[0] * d2[1] - d1[1] * d2[0];
                    [(h[i] * d2[1] - h[j] * d1[1]) / det, (d1[0] * h[j] - d2[0] * h[i]) / det]
                })
                .collect()
        }
        PolygonKind::Obs1 | PolygonKind::ObsInf => {
            let q = if kind == PolygonKind::Obs1 { SignalNorm::One } else { SignalNorm::Inf };
            let oracle = ObsOracle::new(sys)?;
            dirs.iter()
                .map(|d| {
                    let r = oracle.radius(q, d)?;
                    if !r.is_finite() {
                        return Err(Error::InvalidModel(
                            "observable set is unbounded (unobservable direction)".into(),
                        ));
                    }
                    Ok([r * d[0], r * d[1]])
                })
                .collect::<Result<_>>()?
        }
        PolygonKind::EllipsoidBoundary => {
            return Err(Error::InvalidModel("use ellipse_polygon for ellipsoid boundaries".into()))
        }
    };
    Ok(SetPolygon { kind, label: kind.label().to_string(), vertices, horizon })
}

/// Parametric boundary of a 2-D ellipsoid.
pub fn ellipse_polygon(e: &Ellipsoid, n_points: usize) -> Result<SetPolygon> {
    if e.dim() != 2 {
        return Err(Error::InvalidModel("ellipse polygons need a 2-D ellipsoid".into()));
    }
    let vertices = unit_directions(n_points.max(8))
        .iter()
        .map(|u| e.boundary_point(u).map(|x| [x[0], x[1]]))
        .collect::<Result<_>>()?;
    Ok(SetPolygon {
        kind: PolygonKind::EllipsoidBoundary,
        label: PolygonKind::EllipsoidBoundary.label().to_string(),
        vertices,
        horizon: 0.0,
    })
}

/// CSV with header `kind,index,x1,x2`.
pub fn polygons_to_csv(polys: &[SetPolygon]) -> String {
    let mut out = String::from("kind,index,x1,x2\n");
    for p in polys {
        for (i, v) in p.vertices.iter().enumerate() {
            let _ = writeln!(out, "{},{},{},{}", p.label, i, crate::io::fmt_num(v[0]), crate::io::fmt_num(v[1]));
        }
    }
    out
}
