//! LMI-defined norms ω, ∘ and ∘′ by a log-barrier path-following method.
//!
//! The decision variable is the Lyapunov right-hand side `R`, with
//! `P̃ = L(R)` solving `A P̃ + P̃ Aᵀ + R = 0`. Stability of the witness is
//! then simply `R ⪰ εI`, and the remaining constraint `P̃ ⪰ BBᵀ` is affine
//! in `R`. Gradients use one adjoint solve `L*(Y) = lyap_solve(Aᵀ, Y)` per
//! log-det term.
//!
//! The Q-side problems are the P-side problems of the dual system.

use nalgebra::Cholesky;

use crate::error::{Error, Result};
use crate::linmat::{self, Matrix, Vector};
use crate::sysmodel::LtiSystem;

/// Relative agreement required between the P-side and Q-side ω values.
pub const OMEGA_SIDE_TOL: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarrierConfig {
    pub mu0: f64,
    pub mu_shrink: f64,
    /// Margin ε in `R ⪰ εI` and `P̃ − BBᵀ ⪰ εI`; `None` means `1e-6·‖BBᵀ‖`.
    pub strict_margin: Option<f64>,
    /// Newton decrement threshold (λ²/2) for each centering step.
    pub inner_tol: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    /// Stop once the duality-gap bound ν·μ falls below `gap_tol·max(1, |f|)`.
    pub gap_tol: f64,
}

impl Default for BarrierConfig {
    fn default() -> Self {
        Self {
            mu0: 1.0,
            mu_shrink: 0.2,
            strict_margin: None,
            inner_tol: 1e-8,
            max_outer: 30,
            max_inner: 200,
            gap_tol: 1e-10,
        }
    }
}

impl BarrierConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu_shrink > 0.0 && self.mu_shrink < 1.0) {
            return Err(Error::InvalidModel(format!("mu_shrink must lie in (0, 1), got {}", self.mu_shrink)));
        }
        if !(self.mu0 > 0.0) {
            return Err(Error::InvalidModel(format!("mu0 must be positive, got {}", self.mu0)));
        }
        if let Some(e) = self.strict_margin {
            if !(e > 0.0) {
                return Err(Error::InvalidModel(format!("strict_margin must be positive, got {e}")));
            }
        }
        if self.max_outer == 0 || self.max_inner == 0 {
            return Err(Error::InvalidModel("iteration limits must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmiSolution {
    /// Lyapunov right-hand side: `A W + W Aᵀ + R = 0` for the witness `W`.
    pub r: Matrix,
    /// P̃ (P-side) or Q̃ (Q-side).
    pub witness: Matrix,
    /// Trace objective, or the level λ for ω problems.
    pub objective: f64,
    /// Duality-gap bound ν·μ at the returned point.
    pub kkt_residual: f64,
    pub strictly_feasible: bool,
    /// λmin(R), i.e. the stability margin of the witness.
    pub stability_margin: f64,
    /// λmin(W − floor) with floor = BBᵀ or CᵀC.
    pub floor_margin: f64,
    pub margin: f64,
    /// Objective after each outer iteration.
    pub path: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OmegaResult {
    pub value: f64,
    pub p_side: LmiSolution,
    pub q_side: LmiSolution,
}

/// Barrier problem data for one side.
struct Problem {
    /// `L(R) = lyap_solve(a, R)`.
    a: Matrix,
    floor: Matrix,
    /// Objective `trace(out · L(R) · outᵀ)` or level bound on its λmax.
    out: Matrix,
    eps: f64,
    level: bool,
    pairs: Vec<(usize, usize)>,
    /// `L(E_k)` for the orthonormal symmetric basis.
    images: Vec<Matrix>,
    /// `L*(outᵀ out)`: gradient of the trace objective.
    obj_grad: Matrix,
}

struct Blocks {
    r: Matrix,
    lambda: f64,
    s1: Cholesky<f64, nalgebra::Dyn>,
    s2: Cholesky<f64, nalgebra::Dyn>,
    s3: Option<Cholesky<f64, nalgebra::Dyn>>,
}

fn logdet(c: &Cholesky<f64, nalgebra::Dyn>) -> f64 {
    2.0 * c.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>()
}

fn basis(n: usize, (i, j): (usize, usize)) -> Matrix {
    let mut e = Matrix::zeros(n, n);
    if i == j {
        e[(i, i)] = 1.0;
    } else {
        let v = std::f64::consts::FRAC_1_SQRT_2;
        e[(i, j)] = v;
        e[(j, i)] = v;
    }
    e
}

fn inner(x: &Matrix, y: &Matrix) -> f64 {
    x.component_mul(y).sum()
}

impl Problem {
    fn new(a: Matrix, floor: Matrix, out: Matrix, eps: f64, level: bool) -> Result<Self> {
        let n = a.nrows();
        let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i..n).map(move |j| (i, j))).collect();
        let images = pairs.iter().map(|&p| linmat::lyap_solve(&a, &basis(n, p))).collect::<Result<_>>()?;
        let obj_grad = linmat::lyap_solve(&a.transpose(), &(out.transpose() * &out))?;
        Ok(Self { a, floor, out, eps, level, pairs, images, obj_grad })
    }

    fn n(&self) -> usize {
        self.a.nrows()
    }

    fn dim(&self) -> usize {
        self.pairs.len() + usize::from(self.level)
    }

    /// Barrier parameter ν (total size of the log-det blocks).
    fn nu(&self) -> f64 {
        (2 * self.n() + if self.level { self.out.nrows() } else { 0 }) as f64
    }

    fn smat(&self, x: &Vector) -> Matrix {
        let n = self.n();
        let mut r = Matrix::zeros(n, n);
        for (k, &(i, j)) in self.pairs.iter().enumerate() {
            if i == j {
                r[(i, i)] = x[k];
            } else {
                let v = x[k] * std::f64::consts::FRAC_1_SQRT_2;
                r[(i, j)] = v;
                r[(j, i)] = v;
            }
        }
        r
    }

    fn svec(&self, m: &Matrix) -> Vec<f64> {
        self.pairs
            .iter()
            .map(|&(i, j)| if i == j { m[(i, i)] } else { std::f64::consts::SQRT_2 * 0.5 * (m[(i, j)] + m[(j, i)]) })
            .collect()
    }

    fn pack(&self, r: &Matrix, lambda: f64) -> Vector {
        let mut v = self.svec(r);
        if self.level {
            v.push(lambda);
        }
        Vector::from_vec(v)
    }

    fn witness(&self, r: &Matrix) -> Result<Matrix> {
        linmat::lyap_solve(&self.a, r)
    }

    fn objective(&self, x: &Vector) -> f64 {
        if self.level {
            x[self.dim() - 1]
        } else {
            inner(&self.obj_grad, &self.smat(x))
        }
    }

    /// Cholesky factors of every block, or `None` outside the interior.
    fn blocks(&self, x: &Vector) -> Result<Option<Blocks>> {
        let n = self.n();
        let r = self.smat(x);
        let lambda = if self.level { x[self.dim() - 1] } else { 0.0 };
        let eye = Matrix::identity(n, n);
        let Some(s1) = Cholesky::new(&r - &eye * self.eps) else { return Ok(None) };
        let w = self.witness(&r)?;
        let Some(s2) = Cholesky::new(&w - &self.floor - &eye * self.eps) else { return Ok(None) };
        let s3 = if self.level {
            let k = self.out.nrows();
            let y = linmat::symmetrize(&(&self.out * &w * self.out.transpose()));
            match Cholesky::new(Matrix::identity(k, k) * lambda - y) {
                Some(c) => Some(c),
                None => return Ok(None),
            }
        } else {
            None
        };
        Ok(Some(Blocks { r, lambda, s1, s2, s3 }))
    }

    fn phi(&self, x: &Vector, t: f64) -> Result<Option<f64>> {
        Ok(self.blocks(x)?.map(|b| {
            let mut v = t * self.objective(x) - logdet(&b.s1) - logdet(&b.s2);
            if let Some(s3) = &b.s3 {
                v -= logdet(s3);
            }
            v
        }))
    }

    /// Gradient with respect to R as a symmetric matrix, plus ∂/∂λ.
    fn gradient_parts(&self, b: &Blocks, t: f64) -> Result<(Matrix, f64)> {
        let at = self.a.transpose();
        let s1i = linmat::symmetrize(&b.s1.inverse());
        let s2i = linmat::symmetrize(&b.s2.inverse());
        let mut g = -s1i - linmat::lyap_solve(&at, &s2i)?;
        let mut g_lambda = 0.0;
        match &b.s3 {
            None => g += &self.obj_grad * t,
            Some(s3) => {
                let s3i = linmat::symmetrize(&s3.inverse());
                g += linmat::lyap_solve(&at, &(self.out.transpose() * &s3i * &self.out))?;
                g_lambda = t - s3i.trace();
            }
        }
        Ok((g, g_lambda))
    }

    fn gradient(&self, b: &Blocks, t: f64) -> Result<Vector> {
        let (g, gl) = self.gradient_parts(b, t)?;
        Ok(self.pack(&g, gl))
    }

    fn hessian(&self, b: &Blocks) -> Matrix {
        let n = self.n();
        let d = self.dim();
        let np = self.pairs.len();
        let s1i = linmat::symmetrize(&b.s1.inverse());
        let s2i = linmat::symmetrize(&b.s2.inverse());
        let es: Vec<Matrix> = self.pairs.iter().map(|&p| basis(n, p)).collect();
        let a1: Vec<Matrix> = es.iter().map(|e| &s1i * e * &s1i).collect();
        let a2: Vec<Matrix> = self.images.iter().map(|m| &s2i * m * &s2i).collect();
        let mut h = Matrix::zeros(d, d);
        for k in 0..np {
            for l in k..np {
                let v = inner(&a1[k], &es[l]) + inner(&a2[k], &self.images[l]);
                h[(k, l)] = v;
                h[(l, k)] = v;
            }
        }
        if let Some(s3) = &b.s3 {
            let s3i = linmat::symmetrize(&s3.inverse());
            let ns: Vec<Matrix> = self.images.iter().map(|m| -(&self.out * m * self.out.transpose())).collect();
            let a3: Vec<Matrix> = ns.iter().map(|nk| &s3i * nk * &s3i).collect();
            for k in 0..np {
                for l in k..np {
                    let v = inner(&a3[k], &ns[l]);
                    h[(k, l)] += v;
                    if l != k {
                        h[(l, k)] += v;
                    }
                }
                let v = a3[k].trace();
                h[(k, np)] = v;
                h[(np, k)] = v;
            }
            h[(np, np)] = (&s3i * &s3i).trace();
        }
        h
    }

    /// Strictly feasible start: `R = cI` with `c·L(I) ≻ floor + εI`.
    fn start(&self) -> Result<Vector> {
        let n = self.n();
        let eye = Matrix::identity(n, n);
        let li = self.witness(&eye)?;
        let chol = Cholesky::new(li.clone())
            .ok_or_else(|| Error::InfeasibleLmi("Lyapunov image of I is not positive definite".into()))?;
        let l = chol.l();
        let linv = l
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::InfeasibleLmi("singular Lyapunov image".into()))?;
        let target = &self.floor + &eye * self.eps;
        let gen = linmat::lambda_max(&(&linv * target * linv.transpose()))?;
        let c = 2.0 * gen.max(self.eps).max(f64::MIN_POSITIVE);
        let r = &eye * c;
        let lambda = if self.level {
            let y = &self.out * (li * c) * self.out.transpose();
            2.0 * linmat::lambda_max(&y)?.max(0.0) + 1e-12 * (1.0 + y.norm())
        } else {
            0.0
        };
        Ok(self.pack(&r, lambda))
    }

    /// Damped Newton centering at weight `t`. Returns `false` on stall.
    fn center(&self, x: &mut Vector, t: f64, cfg: &BarrierConfig) -> Result<bool> {
        for _ in 0..cfg.max_inner {
            let b = self.blocks(x)?.ok_or_else(|| Error::NumericalFailure("iterate left the feasible set".into()))?;
            let g = self.gradient(&b, t)?;
            let h = self.hessian(&b);
            let step = solve_spd(&h, &(-&g))?;
            let dec2 = -g.dot(&step);
            if dec2 / 2.0 <= cfg.inner_tol {
                return Ok(true);
            }
            let phi0 = self.phi(x, t)?.expect("current point is feasible");
            let mut s = if dec2.sqrt() > 0.25 { 1.0 / (1.0 + dec2.sqrt()) } else { 1.0 };
            let mut accepted = false;
            while s > 1e-14 {
                let trial = &*x + &step * s;
                if let Some(v) = self.phi(&trial, t)? {
                    if v <= phi0 - 0.25 * s * dec2 {
                        *x = trial;
                        accepted = true;
                        break;
                    }
                }
                s *= 0.5;
            }
            if !accepted {
                return Ok(false);
            }
        }
        Ok(false)
    }

    fn solve(&self, cfg: &BarrierConfig) -> Result<LmiSolution> {
        cfg.validate()?;
        let mut x = self.start()?;
        let mut t = 1.0 / cfg.mu0;
        let mut path = Vec::new();
        let nu = self.nu();
        let mut outer = 0;
        loop {
            let centered = self.center(&mut x, t, cfg)?;
            let f = self.objective(&x);
            let gap = nu / t;
            if !centered {
                // Near the optimum roundoff stops the line search first.
                if gap <= 1e-6 * f.abs().max(1.0) && !path.is_empty() {
                    log::debug!("barrier: line search stalled at gap {gap:.3e}, accepting");
                    path.push(f);
                    break;
                }
                return Err(Error::NumericalFailure(format!("barrier stalled at outer step {outer} (gap {gap:.3e})")));
            }
            path.push(f);
            outer += 1;
            if gap <= cfg.gap_tol * f.abs().max(1.0) || outer >= cfg.max_outer {
                break;
            }
            t /= cfg.mu_shrink;
        }
        let b = self.blocks(&x)?.ok_or_else(|| Error::NumericalFailure("final iterate infeasible".into()))?;
        let witness = self.witness(&b.r)?;
        let stability_margin = linmat::lambda_min(&b.r)?;
        let floor_margin = linmat::lambda_min(&(&witness - &self.floor))?;
        let strictly_feasible = stability_margin >= self.eps / 2.0 && floor_margin >= self.eps / 2.0;
        let objective = if self.level { b.lambda } else { self.objective(&x) };
        log::debug!("barrier: objective {objective:.10} after {} outer steps, gap {:.3e}", path.len(), nu / t);
        Ok(LmiSolution {
            r: b.r,
            witness,
            objective,
            kkt_residual: nu / t,
            strictly_feasible,
            stability_margin,
            floor_margin,
            margin: self.eps,
            path,
        })
    }
}

fn solve_spd(h: &Matrix, rhs: &Vector) -> Result<Vector> {
    if let Some(c) = Cholesky::new(h.clone()) {
        return Ok(c.solve(rhs));
    }
    let ridge = 1e-14 * h.diagonal().amax().max(f64::MIN_POSITIVE);
    let reg = h + Matrix::identity(h.nrows(), h.ncols()) * ridge;
    Cholesky::new(reg)
        .map(|c| c.solve(rhs))
        .or_else(|| h.clone().lu().solve(rhs))
        .ok_or_else(|| Error::NumericalFailure("singular barrier Hessian".into()))
}

fn margin(cfg: &BarrierConfig, floor: &Matrix) -> Result<f64> {
    Ok(match cfg.strict_margin {
        Some(e) => e,
        None => 1e-6 * linmat::lambda_max(floor)?.max(f64::MIN_POSITIVE),
    })
}

fn p_problem(sys: &LtiSystem, cfg: &BarrierConfig, level: bool) -> Result<Problem> {
    sys.require_stable()?;
    let floor = &sys.b * sys.b.transpose();
    let eps = margin(cfg, &floor)?;
    Problem::new(sys.a.clone(), floor, sys.c.clone(), eps, level)
}

fn q_problem(sys: &LtiSystem, cfg: &BarrierConfig, level: bool) -> Result<Problem> {
    p_problem(&sys.dual(), cfg, level)
}

/// `min trace(C P̃ Cᵀ)` over `AP̃ + P̃Aᵀ ≺ 0, P̃ ⪰ BBᵀ` (the ∘-norm squared).
pub fn min_trace_p(sys: &LtiSystem, cfg: &BarrierConfig) -> Result<LmiSolution> {
    p_problem(sys, cfg, false)?.solve(cfg)
}

/// `min trace(Bᵀ Q̃ B)` over `Q̃A + AᵀQ̃ ≺ 0, Q̃ ⪰ CᵀC` (the ∘′-norm squared).
pub fn min_trace_q(sys: &LtiSystem, cfg: &BarrierConfig) -> Result<LmiSolution> {
    q_problem(sys, cfg, false)?.solve(cfg)
}

/// ω-norm: `min λmax(C P̃ Cᵀ)` and `min λmax(Bᵀ Q̃ B)` over the same
/// constraint sets, each solved as an epigraph problem in `(R, λ)`.
///
/// Returns `sqrt` of the P-side level; fails if the sides disagree by more
/// than [`OMEGA_SIDE_TOL`] relative.
pub fn omega_norm(sys: &LtiSystem, cfg: &BarrierConfig) -> Result<OmegaResult> {
    let p_side = p_problem(sys, cfg, true)?.solve(cfg)?;
    let q_side = q_problem(sys, cfg, true)?.solve(cfg)?;
    let (vp, vq) = (p_side.objective.sqrt(), q_side.objective.sqrt());
    if (vp - vq).abs() > OMEGA_SIDE_TOL * vp.max(vq) {
        return Err(Error::NumericalFailure(format!("ω sides disagree: P-side {vp:.6}, Q-side {vq:.6}")));
    }
    Ok(OmegaResult { value: vp, p_side, q_side })
}

/// `max_t λmax(e^{Aᵀt} CᵀC e^{At} − Q̃)` over the given sample times.
pub fn exp_bound_violation(sys: &LtiSystem, q_witness: &Matrix, t_samples: &[f64]) -> Result<f64> {
    let ctc = sys.c.transpose() * &sys.c;
    let mut worst = f64::NEG_INFINITY;
    for &t in t_samples {
        let e = linmat::matexp(&sys.a, t)?;
        let m = e.transpose() * &ctc * e - q_witness;
        worst = worst.max(linmat::lambda_max(&linmat::symmetrize(&m))?);
    }
    Ok(worst)
}
