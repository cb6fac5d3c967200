//! ε-norm-optimal synthesis: α-parameterized Riccati equations, state
//! feedback, filtering and output feedback, plus closed-loop assembly.

use std::cell::Cell;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linmat::{self, Matrix};
use crate::norms;
use crate::search::{self, AlphaMinimum, AlphaSearchConfig, Boundary};
use crate::sysmodel::{FilterPlant, LtiSystem, OfPlant, SfPlant, Validate, DEFAULT_PBH_TOL, MAX_WEIGHT_CONDITION};

/// Newton–Kleinman iteration cap.
pub const MAX_NEWTON_ITERATIONS: usize = 50;
/// Relative residual at which Newton–Kleinman stops early.
pub const NEWTON_TOL: f64 = 1e-13;
/// Residual below which Newton–Kleinman is taken to be in its quadratic phase.
pub const NEWTON_PHASE: f64 = 1e-6;
/// Relative residual above which a Riccati solve counts as failed.
pub const RICCATI_FAILURE: f64 = 1e-6;
/// Relative gap between the two output-feedback trace forms treated as a bug.
pub const FORM_GAP_GUARD: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct RiccatiSolution {
    pub x: Matrix,
    pub alpha: f64,
    /// Relative residual of the defining equation.
    pub residual: f64,
    /// Whether the associated closed-loop matrix is Hurwitz.
    pub stabilizing: bool,
    pub iterations: usize,
}

/// Inverse of a weight `DᵀD` / `DDᵀ`, rejecting ill-conditioned weights.
fn weight_inverse(w: &Matrix, name: &str) -> Result<Matrix> {
    let (vals, _) = linmat::eig_sym(w)?;
    let (lo, hi) = (vals[0], vals[vals.len() - 1]);
    if !(lo > 0.0) || hi / lo > MAX_WEIGHT_CONDITION {
        return Err(Error::InvalidModel(format!(
            "{name} is not invertible (condition number {:.3e})",
            if lo > 0.0 { hi / lo } else { f64::INFINITY }
        )));
    }
    linmat::spd_inverse(w)
}

/// Stabilizing solution of `XA + AᵀX − X B R⁻¹ Bᵀ X + H = 0` by
/// Newton–Kleinman, started from a Bass gain when `A` is not Hurwitz.
///
/// Returns `(X, iterations, relative residual, stabilizing)`.
pub fn care(a: &Matrix, b: &Matrix, r: &Matrix, h: &Matrix) -> Result<(Matrix, usize, f64, bool)> {
    let n = a.nrows();
    let rinv = weight_inverse(r, "R")?;
    let g = b * &rinv * b.transpose();
    let residual = |x: &Matrix| {
        let xa = x * a;
        let xgx = x * &g * x;
        let res = &xa + xa.transpose() - &xgx + h;
        let scale = 2.0 * xa.norm() + xgx.norm() + h.norm();
        res.norm() / scale.max(f64::MIN_POSITIVE)
    };

    let mut f = if linmat::spectral_abscissa(a)? < 0.0 {
        Matrix::zeros(b.ncols(), n)
    } else {
        bass_gain(a, b)?
    };
    let mut x = Matrix::zeros(n, n);
    let mut res = f64::INFINITY;
    let mut iterations = 0;
    for it in 1..=MAX_NEWTON_ITERATIONS {
        let ac = a - b * &f;
        let w = f.transpose() * r * &f + h;
        let next = linmat::lyap_solve(&ac.transpose(), &w)?;
        let next_res = residual(&next);
        iterations = it;
        // Once in the quadratic phase, a non-decreasing residual means the
        // roundoff floor of this instance has been reached.
        if next_res >= res && res <= NEWTON_PHASE {
            break;
        }
        x = next;
        res = next_res;
        f = &rinv * b.transpose() * &x;
        if res <= NEWTON_TOL {
            break;
        }
    }
    if !(res <= RICCATI_FAILURE) {
        return Err(Error::NumericalFailure(format!(
            "Newton–Kleinman did not converge (relative residual {res:.3e} after {iterations} steps)"
        )));
    }
    let stabilizing = linmat::spectral_abscissa(&(a - &g * &x))? < 0.0;
    Ok((x, iterations, res, stabilizing))
}

/// Bass stabilizing gain: with `β` above the spectral spread,
/// `−(A+βI)Z − Z(A+βI)ᵀ + 2BBᵀ = 0` gives `F = BᵀZ⁻¹` and `A − BF` Hurwitz.
fn bass_gain(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    let n = a.nrows();
    let eigs = linmat::eigenvalues(a)?;
    let min_re = eigs.iter().map(|e| e.re).fold(f64::INFINITY, f64::min);
    let rho = eigs.iter().map(|e| e.re.hypot(e.im)).fold(0.0, f64::max);
    let beta = (-min_re).max(0.0) + (0.1 * rho).max(0.1);
    let shifted = -(a + Matrix::identity(n, n) * beta);
    let z = linmat::lyap_solve(&shifted, &(b * b.transpose() * 2.0))?;
    let zinv = linmat::spd_inverse(&z)
        .map_err(|_| Error::NumericalFailure("Bass initialization failed: (A, B) is not controllable".into()))?;
    Ok(b.transpose() * zinv)
}

fn shifted(a: &Matrix, alpha: f64) -> Matrix {
    a + Matrix::identity(a.nrows(), a.ncols()) * (0.5 * alpha)
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::AlphaOutOfRange { alpha, upper: f64::INFINITY });
    }
    Ok(())
}

/// `QA + AᵀQ + αQ − αQB(DᵀD)⁻¹BᵀQ + CᵀC/α = 0` for raw data.
pub fn ric_q_data(a: &Matrix, b: &Matrix, c: &Matrix, d: &Matrix, alpha: f64) -> Result<RiccatiSolution> {
    check_alpha(alpha)?;
    let (x, iterations, residual, stabilizing) = care(
        &shifted(a, alpha),
        &(b * alpha.sqrt()),
        &(d.transpose() * d),
        &(c.transpose() * c / alpha),
    )?;
    Ok(RiccatiSolution { x, alpha, residual, stabilizing, iterations })
}

/// `AP + PAᵀ + αP − αPCᵀ(DDᵀ)⁻¹CP + BBᵀ/α = 0` for raw data.
pub fn ric_p_data(a: &Matrix, b: &Matrix, c: &Matrix, d: &Matrix, alpha: f64) -> Result<RiccatiSolution> {
    ric_q_data(&a.transpose(), &c.transpose(), &b.transpose(), &d.transpose(), alpha)
}

/// Q-side Riccati solution of a state-feedback plant.
pub fn ric_q(plant: &SfPlant, alpha: f64) -> Result<RiccatiSolution> {
    ric_q_data(&plant.a, &plant.b, &plant.c, &plant.d, alpha)
}

/// P-side Riccati solution of a filter plant.
pub fn ric_p(plant: &FilterPlant, alpha: f64) -> Result<RiccatiSolution> {
    ric_p_data(&plant.a, &plant.b, &plant.c, &plant.d, alpha)
}

/// `K = −α (DᵀD)⁻¹ Bᵀ Q_α`.
pub fn sf_gain(sol: &RiccatiSolution, plant: &SfPlant) -> Result<Matrix> {
    let rinv = weight_inverse(&(plant.d.transpose() * &plant.d), "D'D")?;
    Ok(-(rinv * plant.b.transpose() * &sol.x) * sol.alpha)
}

/// `L = −α P_α Cᵀ (DDᵀ)⁻¹`.
pub fn filter_gain(sol: &RiccatiSolution, plant: &FilterPlant) -> Result<Matrix> {
    let rinv = weight_inverse(&(&plant.d * plant.d.transpose()), "DD'")?;
    Ok(-(&sol.x * plant.c.transpose() * rinv) * sol.alpha)
}

/// `ẋ = (A + BK)x + B_w w, z = (C + DK)x`.
pub fn sf_closed_loop(plant: &SfPlant, k: &Matrix) -> Result<LtiSystem> {
    LtiSystem::realization(&plant.a + &plant.b * k, plant.bw.clone(), &plant.c + &plant.d * k)
}

/// Estimation error system `ė = (A + LC)e + (B + LD)w, z = C_z e`.
pub fn filter_error_system(plant: &FilterPlant, l: &Matrix) -> Result<LtiSystem> {
    LtiSystem::realization(&plant.a + l * &plant.c, &plant.b + l * &plant.d, plant.cz.clone())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Realization {
    /// States `(x, e)` with `e = x − x̂`.
    StateError,
    /// States `(x̂, e)`.
    EstimateError,
}

/// Observer-based output-feedback loop `u = K x̂`,
/// `x̂̇ = Ax̂ + B₂u − L(y − C₁x̂)`.
pub fn closed_loop(plant: &OfPlant, k: &Matrix, l: &Matrix, realization: Realization) -> Result<LtiSystem> {
    let n = plant.a.nrows();
    if k.shape() != (plant.b2.ncols(), n) || l.shape() != (n, plant.c1.nrows()) {
        return Err(Error::InvalidModel(format!(
            "gain dimensions: K is {}x{}, L is {}x{}",
            k.nrows(),
            k.ncols(),
            l.nrows(),
            l.ncols()
        )));
    }
    let (w, kz) = (plant.b1.ncols(), plant.c2.nrows());
    let abk = &plant.a + &plant.b2 * k;
    let alc = &plant.a + l * &plant.c1;
    let mut a = Matrix::zeros(2 * n, 2 * n);
    let mut b = Matrix::zeros(2 * n, w);
    let mut c = Matrix::zeros(kz, 2 * n);
    a.view_mut((0, 0), (n, n)).copy_from(&abk);
    a.view_mut((n, n), (n, n)).copy_from(&alc);
    b.view_mut((n, 0), (n, w)).copy_from(&(&plant.b1 + l * &plant.d1));
    c.view_mut((0, 0), (kz, n)).copy_from(&(&plant.c2 + &plant.d2 * k));
    match realization {
        Realization::StateError => {
            a.view_mut((0, n), (n, n)).copy_from(&(-(&plant.b2 * k)));
            b.view_mut((0, 0), (n, w)).copy_from(&plant.b1);
            c.view_mut((0, n), (kz, n)).copy_from(&(-(&plant.d2 * k)));
        }
        Realization::EstimateError => {
            a.view_mut((0, n), (n, n)).copy_from(&(-(l * &plant.c1)));
            b.view_mut((0, 0), (n, w)).copy_from(&(-(l * &plant.d1)));
            c.view_mut((0, n), (kz, n)).copy_from(&plant.c2);
        }
    }
    LtiSystem::realization(a, b, c)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthesisKind {
    Sf,
    Filter,
    Of,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SynthesisResult {
    pub kind: SynthesisKind,
    #[serde(with = "crate::io::opt_matrix_rows", skip_serializing_if = "Option::is_none")]
    pub k: Option<Matrix>,
    #[serde(with = "crate::io::opt_matrix_rows", skip_serializing_if = "Option::is_none")]
    pub l: Option<Matrix>,
    pub alpha_hat: f64,
    pub eps_norm: f64,
    pub boundary_flag: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub boundary: Option<Boundary>,
    pub curve: Vec<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub norm_form_a: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub norm_form_b: Option<f64>,
    /// Largest relative gap between the two trace forms over every α evaluated.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_form_gap: Option<f64>,
    /// Spectral abscissa of the closed loop (or error system).
    pub closed_loop_abscissa: f64,
}

fn ensure_valid<T: Validate>(plant: &T) -> Result<()> {
    plant.validate(DEFAULT_PBH_TOL)?.ensure()
}

fn result_from(kind: SynthesisKind, m: &AlphaMinimum) -> SynthesisResult {
    SynthesisResult {
        kind,
        k: None,
        l: None,
        alpha_hat: m.alpha,
        eps_norm: m.value,
        boundary_flag: m.boundary == Some(Boundary::High),
        boundary: m.boundary,
        curve: m.curve.iter().map(|&(a, v)| [a, v]).collect(),
        norm_form_a: None,
        norm_form_b: None,
        max_form_gap: None,
        closed_loop_abscissa: f64::NAN,
    }
}

fn require_hurwitz(sys: &LtiSystem, what: &str) -> Result<f64> {
    let r = sys.spectral_abscissa()?;
    if r >= 0.0 {
        return Err(Error::NumericalFailure(format!("{what} is not stable (abscissa {r:.3e})")));
    }
    Ok(r)
}

/// `sqrt(trace(B_wᵀ Q_α B_w))`, the optimal closed-loop ε(α)-norm.
pub fn sf_value(plant: &SfPlant, alpha: f64) -> Result<f64> {
    let q = ric_q(plant, alpha)?;
    Ok((plant.bw.transpose() * &q.x * &plant.bw).trace().max(0.0).sqrt())
}

/// `sqrt(trace(C_z P_α C_zᵀ))`, the optimal error-system ε(α)-norm.
pub fn filter_value(plant: &FilterPlant, alpha: f64) -> Result<f64> {
    let p = ric_p(plant, alpha)?;
    Ok((&plant.cz * &p.x * plant.cz.transpose()).trace().max(0.0).sqrt())
}

/// Optimal state feedback over α.
pub fn synth_state_feedback(plant: &SfPlant, cfg: &AlphaSearchConfig) -> Result<SynthesisResult> {
    ensure_valid(plant)?;
    cfg.validate()?;
    let m = search::minimize(|a| sf_value(plant, a), cfg.grid_min, cfg.grid_max, cfg)?;
    let q = ric_q(plant, m.alpha)?;
    let k = sf_gain(&q, plant)?;
    let mut out = result_from(SynthesisKind::Sf, &m);
    out.closed_loop_abscissa = require_hurwitz(&sf_closed_loop(plant, &k)?, "A + BK")?;
    out.k = Some(k);
    Ok(out)
}

/// Optimal observer gain over α.
pub fn synth_filter(plant: &FilterPlant, cfg: &AlphaSearchConfig) -> Result<SynthesisResult> {
    ensure_valid(plant)?;
    cfg.validate()?;
    let m = search::minimize(|a| filter_value(plant, a), cfg.grid_min, cfg.grid_max, cfg)?;
    let p = ric_p(plant, m.alpha)?;
    let l = filter_gain(&p, plant)?;
    let mut out = result_from(SynthesisKind::Filter, &m);
    out.closed_loop_abscissa = require_hurwitz(&filter_error_system(plant, &l)?, "A + LC")?;
    out.l = Some(l);
    Ok(out)
}

/// Gains and both trace forms of the output-feedback problem at one α.
#[derive(Debug, Clone, PartialEq)]
pub struct OfEvaluation {
    pub alpha: f64,
    pub k: Matrix,
    pub l: Matrix,
    pub q: RiccatiSolution,
    pub p: RiccatiSolution,
    /// `trace(B₁ᵀQB₁) + trace(D₂KPKᵀD₂ᵀ)`
    pub form_a: f64,
    /// `trace(C₂PC₂ᵀ) + trace(D₁ᵀLᵀQLD₁)`
    pub form_b: f64,
}

impl OfEvaluation {
    pub fn relative_gap(&self) -> f64 {
        (self.form_a - self.form_b).abs() / self.form_a.abs().max(f64::MIN_POSITIVE)
    }

    pub fn eps_alpha(&self) -> f64 {
        self.form_a.max(0.0).sqrt()
    }
}

pub fn evaluate_output_feedback(plant: &OfPlant, alpha: f64) -> Result<OfEvaluation> {
    let sf = plant.state_feedback_part();
    let fp = plant.filter_part();
    let q = ric_q(&sf, alpha)?;
    let p = ric_p(&fp, alpha)?;
    let k = sf_gain(&q, &sf)?;
    let l = filter_gain(&p, &fp)?;
    let form_a = (plant.b1.transpose() * &q.x * &plant.b1).trace()
        + (&plant.d2 * &k * &p.x * k.transpose() * plant.d2.transpose()).trace();
    let form_b = (&plant.c2 * &p.x * plant.c2.transpose()).trace()
        + (plant.d1.transpose() * l.transpose() * &q.x * &l * &plant.d1).trace();
    let ev = OfEvaluation { alpha, k, l, q, p, form_a, form_b };
    if ev.relative_gap() > FORM_GAP_GUARD {
        return Err(Error::NumericalFailure(format!(
            "output-feedback trace forms disagree at α = {alpha}: {form_a:.12e} vs {form_b:.12e}"
        )));
    }
    Ok(ev)
}

/// Optimal observer-based output feedback over α.
pub fn synth_output_feedback(plant: &OfPlant, cfg: &AlphaSearchConfig) -> Result<SynthesisResult> {
    ensure_valid(plant)?;
    cfg.validate()?;
    let max_gap = Cell::new(0.0_f64);
    let m = search::minimize(
        |a| {
            let ev = evaluate_output_feedback(plant, a)?;
            max_gap.set(max_gap.get().max(ev.relative_gap()));
            Ok(ev.eps_alpha())
        },
        cfg.grid_min,
        cfg.grid_max,
        cfg,
    )?;
    let ev = evaluate_output_feedback(plant, m.alpha)?;
    max_gap.set(max_gap.get().max(ev.relative_gap()));
    let mut out = result_from(SynthesisKind::Of, &m);
    let cl = closed_loop(plant, &ev.k, &ev.l, Realization::StateError)?;
    out.closed_loop_abscissa = require_hurwitz(&cl, "output-feedback closed loop")?;
    out.norm_form_a = Some(ev.form_a.sqrt());
    out.norm_form_b = Some(ev.form_b.sqrt());
    out.max_form_gap = Some(max_gap.get());
    out.k = Some(ev.k);
    out.l = Some(ev.l);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeparationReport {
    pub sf_alpha: f64,
    pub sf_eps: f64,
    pub filter_alpha: f64,
    pub filter_eps: f64,
    pub joint_alpha: f64,
    pub joint_eps: f64,
    /// ε-norm of the loop built from the subproblem gains at their own α̂'s.
    pub mixed_eps: f64,
    pub mixed_alpha: f64,
}

/// Compares the two subproblem optima, the joint optimum, and the loop
/// assembled from separately optimized gains.
pub fn separation_gap(plant: &OfPlant, cfg: &AlphaSearchConfig) -> Result<SeparationReport> {
    let sf = synth_state_feedback(&plant.state_feedback_part(), cfg)?;
    let fl = synth_filter(&plant.filter_part(), cfg)?;
    let joint = synth_output_feedback(plant, cfg)?;
    let k = sf.k.as_ref().expect("state feedback yields K");
    let l = fl.l.as_ref().expect("filter yields L");
    let mixed = closed_loop(plant, k, l, Realization::StateError)?;
    let mixed_norm = norms::eps_norm(&mixed, &AlphaSearchConfig::analysis())?;
    Ok(SeparationReport {
        sf_alpha: sf.alpha_hat,
        sf_eps: sf.eps_norm,
        filter_alpha: fl.alpha_hat,
        filter_eps: fl.eps_norm,
        joint_alpha: joint.alpha_hat,
        joint_eps: joint.eps_norm,
        mixed_eps: mixed_norm.value,
        mixed_alpha: mixed_norm.alpha,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ellipsoids;
    use crate::norms::eps_alpha;
    use crate::plants::{benchmark_plant, nonconvex_plant};
    use crate::random::{random_matrix, random_of_plant, random_stable_system, rng};
    use crate::sysmodel::impulse_response;
    use approx::assert_relative_eq;

    fn scalar_sf() -> SfPlant {
        // a = 0, b = 1, CᵀC = 1, DᵀD = 1 (orthogonal channels).
        SfPlant::new(
            Matrix::from_element(1, 1, 0.0),
            Matrix::from_element(1, 1, 1.0),
            Matrix::from_element(1, 1, 1.0),
            Matrix::from_row_slice(2, 1, &[1.0, 0.0]),
            Matrix::from_row_slice(2, 1, &[0.0, 1.0]),
        )
        .unwrap()
    }

    fn scalar_filter() -> FilterPlant {
        FilterPlant::new(
            Matrix::from_element(1, 1, 0.0),
            Matrix::from_row_slice(1, 2, &[1.0, 0.0]),
            Matrix::from_element(1, 1, 1.0),
            Matrix::from_row_slice(1, 2, &[0.0, 1.0]),
            Matrix::from_element(1, 1, 1.0),
        )
        .unwrap()
    }

    #[test]
    fn scalar_riccati_roots() {
        let q = ric_q(&scalar_sf(), 2.0).unwrap();
        assert_relative_eq!(q.x[(0, 0)], (1.0 + 2f64.sqrt()) / 2.0, epsilon = 1e-12);
        assert!(q.stabilizing);
        let q = ric_q(&scalar_sf(), 1.0).unwrap();
        assert_relative_eq!(q.x[(0, 0)], (1.0 + 5f64.sqrt()) / 2.0, epsilon = 1e-12);
        let k = sf_gain(&ric_q(&scalar_sf(), 2.0).unwrap(), &scalar_sf()).unwrap();
        assert_relative_eq!(k[(0, 0)], -(1.0 + 2f64.sqrt()), epsilon = 1e-12);
    }

    #[test]
    fn scalar_filter_riccati_is_dual() {
        let p = ric_p(&scalar_filter(), 2.0).unwrap();
        assert_relative_eq!(p.x[(0, 0)], (1.0 + 2f64.sqrt()) / 2.0, epsilon = 1e-12);
        let l = filter_gain(&p, &scalar_filter()).unwrap();
        assert_relative_eq!(l[(0, 0)], -2.0 * p.x[(0, 0)], epsilon = 1e-12);
    }

    #[test]
    fn riccati_transposition_identity() {
        let mut r = rng(17);
        for _ in 0..5 {
            let p = random_of_plant(&mut r, 3);
            let q = ric_q_data(&p.a, &p.b2, &p.c2, &p.d2, 0.7).unwrap();
            let pd = ric_p_data(&p.a.transpose(), &p.c2.transpose(), &p.b2.transpose(), &p.d2.transpose(), 0.7).unwrap();
            assert!((&q.x - pd.x.transpose()).amax() <= 1e-10 * q.x.amax());
        }
    }

    #[test]
    fn riccati_without_control_is_the_lyapunov_solution() {
        let mut r = rng(23);
        let sys = random_stable_system(&mut r, 3, 1, 2);
        let w = ellipsoids::alpha_window(&sys).unwrap();
        let alpha = 0.4 * w;
        let b0 = Matrix::zeros(3, 1);
        let d = Matrix::from_row_slice(3, 1, &[0.0, 0.0, 1.0]);
        let c = sys.c.clone().insert_row(2, 0.0);
        let q = ric_q_data(&sys.a, &b0, &c, &d, alpha).unwrap();
        let lyap = ellipsoids::q_alpha_matrix(&sys, alpha).unwrap();
        assert!((&q.x - &lyap).amax() <= 1e-10 * lyap.amax());
    }

    #[test]
    fn sf_gain_value_is_remeasured_on_the_closed_loop() {
        let mut r = rng(29);
        for _ in 0..5 {
            let p = random_of_plant(&mut r, 3).state_feedback_part();
            for alpha in [0.2, 1.0, 3.0] {
                let q = ric_q(&p, alpha).unwrap();
                let k = sf_gain(&q, &p).unwrap();
                let cl = sf_closed_loop(&p, &k).unwrap();
                assert!(cl.spectral_abscissa().unwrap() < -alpha / 2.0);
                let want = (p.bw.transpose() * &q.x * &p.bw).trace().sqrt();
                assert_relative_eq!(eps_alpha(&cl, alpha).unwrap(), want, max_relative = 1e-8);
            }
        }
    }

    #[test]
    fn filter_value_is_remeasured_on_the_error_system() {
        let mut r = rng(31);
        for _ in 0..5 {
            let p = random_of_plant(&mut r, 3).filter_part();
            for alpha in [0.2, 1.0, 3.0] {
                let sol = ric_p(&p, alpha).unwrap();
                let l = filter_gain(&sol, &p).unwrap();
                let err = filter_error_system(&p, &l).unwrap();
                let want = (&p.cz * &sol.x * p.cz.transpose()).trace().sqrt();
                assert_relative_eq!(eps_alpha(&err, alpha).unwrap(), want, max_relative = 1e-8);
            }
        }
    }

    #[test]
    fn benchmark_gains_at_reported_alphas() {
        let p = benchmark_plant(1.0);
        let ev = evaluate_output_feedback(&p, 0.82).unwrap();
        assert!((ev.k[(0, 0)] + 3.54).abs() < 0.02 && (ev.k[(0, 1)] + 3.28).abs() < 0.02, "{}", ev.k);
        assert!((ev.l[(0, 0)] + 3.28).abs() < 0.02 && (ev.l[(1, 0)] + 3.54).abs() < 0.02, "{}", ev.l);
        let p = benchmark_plant(-1.0);
        let ev = evaluate_output_feedback(&p, 0.43).unwrap();
        assert!((ev.k[(0, 0)] + 0.81).abs() < 0.02 && (ev.k[(0, 1)] + 1.85).abs() < 0.02, "{}", ev.k);
        assert!((ev.l[(0, 0)] + 1.85).abs() < 0.02 && (ev.l[(1, 0)] + 0.81).abs() < 0.02, "{}", ev.l);
    }

    #[test]
    fn output_feedback_benchmark_optimum() {
        let cfg = AlphaSearchConfig::synthesis();
        let res = synth_output_feedback(&benchmark_plant(-1.0), &cfg).unwrap();
        assert!((res.alpha_hat - 0.43).abs() < 0.01, "{}", res.alpha_hat);
        assert!((res.eps_norm - 6.62).abs() < 0.05, "{}", res.eps_norm);
        assert!(res.max_form_gap.unwrap() <= 1e-8);
        assert!(!res.boundary_flag);
        let json = crate::io::to_json(&res).unwrap();
        assert!(json.contains("\"k\"") && json.contains("\"curve\""));
    }

    #[test]
    fn nonconvex_curve_has_two_local_minima() {
        let cfg = AlphaSearchConfig { grid_points: 400, ..AlphaSearchConfig::synthesis() };
        let res = synth_state_feedback(&nonconvex_plant(), &cfg).unwrap();
        let curve: Vec<(f64, f64)> = res.curve.iter().map(|p| (p[0], p[1])).collect();
        let mins: Vec<f64> = search::local_minima(&curve).iter().map(|&i| curve[i].0).collect();
        assert_eq!(mins.len(), 2, "{mins:?}");
        assert!((mins[0] - 0.09).abs() < 0.02 && (mins[1] - 2.06).abs() < 0.1, "{mins:?}");
    }

    #[test]
    fn scalar_synthesis_equals_grid_minimum() {
        let cfg = AlphaSearchConfig::synthesis();
        let res = synth_state_feedback(&scalar_sf(), &cfg).unwrap();
        let grid_min = res.curve.iter().map(|p| p[1]).fold(f64::INFINITY, f64::min);
        assert!(res.eps_norm <= grid_min);
        assert_relative_eq!(res.eps_norm, sf_value(&scalar_sf(), res.alpha_hat).unwrap(), epsilon = 1e-14);
        let res = synth_filter(&scalar_filter(), &cfg).unwrap();
        let grid_min = res.curve.iter().map(|p| p[1]).fold(f64::INFINITY, f64::min);
        assert!(res.eps_norm <= grid_min);
    }

    #[test]
    fn realizations_share_the_transfer() {
        let p = benchmark_plant(-1.0);
        let ev = evaluate_output_feedback(&p, 0.43).unwrap();
        let s1 = closed_loop(&p, &ev.k, &ev.l, Realization::StateError).unwrap();
        let s2 = closed_loop(&p, &ev.k, &ev.l, Realization::EstimateError).unwrap();
        assert!(s1.spectral_abscissa().unwrap() < 0.0);
        for t in [0.0, 0.1, 0.5, 2.0, 7.0] {
            let d = impulse_response(&s1, t).unwrap() - impulse_response(&s2, t).unwrap();
            assert!(d.amax() <= 1e-9);
        }
        let (e1, e2) = (eps_alpha(&s1, 0.43).unwrap(), eps_alpha(&s2, 0.43).unwrap());
        assert_relative_eq!(e1, e2, max_relative = 1e-8);
        assert_relative_eq!(e1, ev.eps_alpha(), max_relative = 1e-8);
    }

    #[test]
    fn zero_gain_loop_decouples() {
        let mut p = benchmark_plant(-1.0);
        p.b2 = Matrix::zeros(2, 1);
        let ev = evaluate_output_feedback(&benchmark_plant(-1.0), 0.5).unwrap();
        let k = Matrix::zeros(1, 2);
        let cl = closed_loop(&p, &k, &ev.l, Realization::StateError).unwrap();
        assert!(cl.a.view((0, 2), (2, 2)).amax() == 0.0);
        assert!(cl.a.view((2, 0), (2, 2)).amax() == 0.0);
    }

    #[test]
    fn structural_violations_are_reported() {
        let mut p = benchmark_plant(1.0);
        p.d2 = Matrix::from_row_slice(3, 1, &[1.0, 0.0, 1.0]);
        match synth_output_feedback(&p, &AlphaSearchConfig::synthesis()) {
            Err(Error::InvalidModel(m)) => assert!(m.contains("orthogonality violated"), "{m}"),
            other => panic!("expected InvalidModel, got {other:?}"),
        }
        let mut p = benchmark_plant(1.0);
        p.d1 = Matrix::zeros(1, 3);
        assert!(matches!(synth_output_feedback(&p, &AlphaSearchConfig::synthesis()), Err(Error::InvalidModel(_))));
    }

    #[test]
    fn separation_on_symmetric_plant() {
        let rep = separation_gap(&benchmark_plant(1.0), &AlphaSearchConfig::synthesis()).unwrap();
        assert_relative_eq!(rep.sf_alpha, rep.filter_alpha, max_relative = 1e-6);
        assert!((rep.joint_alpha - 0.82).abs() < 0.02);
        assert!((rep.sf_alpha - rep.joint_alpha).abs() > 0.02);
        assert!(rep.mixed_eps >= rep.joint_eps - 1e-9);
    }

    #[test]
    fn newton_kleinman_converges_on_random_instances() {
        let mut r = rng(41);
        for n in 1..=8 {
            let a = random_matrix(&mut r, n, n) * 2.0;
            let b = random_matrix(&mut r, n, 1 + n / 3);
            let c = random_matrix(&mut r, n, n);
            let rw = Matrix::identity(b.ncols(), b.ncols());
            let (x, it, res, stab) = care(&a, &b, &rw, &(c.transpose() * c)).unwrap();
            assert!(res <= 1e-9 && it <= MAX_NEWTON_ITERATIONS && stab);
            assert!(linmat::is_spd(&x, 1e-14));
        }
    }
}
