//! Gramian-based norms, the ε(α) family and its minimizers, time-domain
//! gain oracles, and system composition.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::ellipsoids::{self, p_alpha_matrix, q_alpha_matrix};
use crate::error::{Error, Result};
use crate::linmat::{self, Matrix, Vector};
use crate::lmi::{self, BarrierConfig};
use crate::quad::{self, ExpSamples, ExpTable};
use crate::search::{self, AlphaMinimum, AlphaSearchConfig, Boundary};
use crate::sysmodel::{gramians, LtiSystem};

/// Relative mismatch between the P- and Q-forms of ε(α) treated as a bug.
pub const EPS_DUAL_GUARD: f64 = 1e-6;
/// Default absolute slack of the sampled gain-versus-bound checks.
pub const DEFAULT_CHAIN_SLACK: f64 = 1e-3;

pub fn h2_norm(sys: &LtiSystem) -> Result<f64> {
    let (p, _) = gramians(sys)?;
    Ok((&sys.c * p * sys.c.transpose()).trace().max(0.0).sqrt())
}

/// `(‖S‖∞,2, ‖S‖2,i)`: square roots of λmax(CPCᵀ) and λmax(BᵀQB).
pub fn peak_norms(sys: &LtiSystem) -> Result<(f64, f64)> {
    let (p, q) = gramians(sys)?;
    let e2p = linmat::lambda_max(&(&sys.c * p * sys.c.transpose()))?;
    let i2e = linmat::lambda_max(&(sys.b.transpose() * q * &sys.b))?;
    Ok((e2p.max(0.0).sqrt(), i2e.max(0.0).sqrt()))
}

/// `(trace(C P_α Cᵀ), trace(Bᵀ Q_α B))`.
pub fn eps_alpha_traces(sys: &LtiSystem, alpha: f64) -> Result<(f64, f64)> {
    let p = p_alpha_matrix(sys, alpha)?;
    let q = q_alpha_matrix(sys, alpha)?;
    Ok(((&sys.c * p * sys.c.transpose()).trace(), (sys.b.transpose() * q * &sys.b).trace()))
}

/// ε(α)-norm `sqrt(trace(C P_α Cᵀ))`, cross-checked against the Q-form.
pub fn eps_alpha(sys: &LtiSystem, alpha: f64) -> Result<f64> {
    let (tp, tq) = eps_alpha_traces(sys, alpha)?;
    if (tp - tq).abs() > EPS_DUAL_GUARD * tp.abs().max(tq.abs()) {
        return Err(Error::NumericalFailure(format!(
            "ε(α) forms disagree at α = {alpha}: {tp:.12e} vs {tq:.12e}"
        )));
    }
    Ok(tp.max(0.0).sqrt())
}

/// α range actually searched: `[grid_min, min(grid_max, 0.999·(−2r))]`.
pub fn analysis_range(sys: &LtiSystem, cfg: &AlphaSearchConfig) -> Result<(f64, f64)> {
    cfg.validate()?;
    let window = ellipsoids::alpha_window(sys)?;
    let hi = cfg.grid_max.min(0.999 * window);
    let lo = if cfg.grid_min < hi {
        cfg.grid_min
    } else {
        log::warn!("α window {window:.3e} is below grid_min; searching [1e-3·hi, hi]");
        1e-3 * hi
    };
    Ok((lo, hi))
}

/// ε-norm: minimum of ε(α) over the admissible window.
pub fn eps_norm(sys: &LtiSystem, cfg: &AlphaSearchConfig) -> Result<AlphaMinimum> {
    let (lo, hi) = analysis_range(sys, cfg)?;
    search::minimize(|a| eps_alpha(sys, a), lo, hi, cfg)
}

/// `sqrt(λmax(C P_α Cᵀ))`.
pub fn star_alpha(sys: &LtiSystem, alpha: f64) -> Result<f64> {
    let p = p_alpha_matrix(sys, alpha)?;
    Ok(linmat::lambda_max(&(&sys.c * p * sys.c.transpose()))?.max(0.0).sqrt())
}

/// `sqrt(λmax(Bᵀ Q_α B))`.
pub fn star_prime_alpha(sys: &LtiSystem, alpha: f64) -> Result<f64> {
    let q = q_alpha_matrix(sys, alpha)?;
    Ok(linmat::lambda_max(&(sys.b.transpose() * q * &sys.b))?.max(0.0).sqrt())
}

/// `(∗-norm, ∗′-norm)` from independent α searches.
pub fn star_norms(sys: &LtiSystem, cfg: &AlphaSearchConfig) -> Result<(AlphaMinimum, AlphaMinimum)> {
    let (lo, hi) = analysis_range(sys, cfg)?;
    let star = search::minimize(|a| star_alpha(sys, a), lo, hi, cfg)?;
    let star_prime = search::minimize(|a| star_prime_alpha(sys, a), lo, hi, cfg)?;
    Ok((star, star_prime))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GainKind {
    PeakToPeak,
    ImpulseToIntegral,
    IntegralToPeak,
    ImpulseToPeak,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GainEstimate {
    pub kind: GainKind,
    pub value: f64,
    /// True when the value is a maximum over sampled directions (a lower bound).
    pub sampled: bool,
    pub directions: usize,
    pub horizon: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct OracleConfig {
    /// Override for the number of sampled directions.
    pub dirs: Option<usize>,
    /// Integration horizon; default is the decay horizon of A.
    pub horizon: Option<f64>,
    /// Seed for random directions in dimension ≥ 4.
    pub seed: u64,
}


/// Unit directions in `R^dim`; `ζ` and `−ζ` give equal gains, so only one
/// of each pair is generated in 2-D.
///
/// dim 1: `[1]`; dim 2: 256 angles on `[0, π)`; dim 3: 2048-point
/// Fibonacci sphere; higher: seeded Gaussian samples.
pub fn sample_directions(dim: usize, count: Option<usize>, seed: u64) -> Vec<Vector> {
    match dim {
        0 => vec![],
        1 => vec![Vector::from_element(1, 1.0)],
        2 => {
            let n = count.unwrap_or(256).max(1);
            (0..n)
                .map(|i| {
                    let th = std::f64::consts::PI * i as f64 / n as f64;
                    Vector::from_vec(vec![th.cos(), th.sin()])
                })
                .collect()
        }
        3 => {
            let n = count.unwrap_or(2048).max(2);
            let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
            (0..n)
                .map(|i| {
                    let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
                    let r = (1.0 - z * z).sqrt();
                    let th = golden * i as f64;
                    Vector::from_vec(vec![r * th.cos(), r * th.sin(), z])
                })
                .collect()
        }
        _ => {
            let n = count.unwrap_or(2048).max(1);
            let mut rng = crate::random::rng(seed);
            (0..n)
                .map(|_| {
                    let v = Vector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
                    let nv = v.norm();
                    if nv > 0.0 {
                        v / nv
                    } else {
                        Vector::from_fn(dim, |i, _| if i == 0 { 1.0 } else { 0.0 })
                    }
                })
                .collect()
        }
    }
}

/// Evaluates all four oracle gains off one impulse-response table.
pub struct GainOracle<'a> {
    sys: &'a LtiSystem,
    cfg: OracleConfig,
    horizon: f64,
    table: ExpTable,
}

impl<'a> GainOracle<'a> {
    pub fn new(sys: &'a LtiSystem, cfg: OracleConfig) -> Result<Self> {
        sys.require_stable()?;
        let horizon = match cfg.horizon {
            Some(t) => t,
            None => quad::default_horizon(&sys.a)?,
        };
        let table = ExpTable::sandwiched(&sys.a, horizon, Some(&sys.c), Some(&sys.b))?;
        Ok(Self { sys, cfg, horizon, table })
    }

    pub fn gain(&self, kind: GainKind) -> Result<GainEstimate> {
        let (value, sampled, directions) = match kind {
            GainKind::PeakToPeak => {
                let dirs = sample_directions(self.sys.k(), self.cfg.dirs, self.cfg.seed);
                let mut best = 0.0_f64;
                for z in &dirs {
                    best = best.max(self.table.integrate_norm(|h| h.transpose() * z)?);
                }
                (best, self.sys.k() > 1, dirs.len())
            }
            GainKind::ImpulseToIntegral => {
                let dirs = sample_directions(self.sys.m(), self.cfg.dirs, self.cfg.seed);
                let mut best = 0.0_f64;
                for u in &dirs {
                    best = best.max(self.table.integrate_norm(|h| h * u)?);
                }
                (best, self.sys.m() > 1, dirs.len())
            }
            GainKind::IntegralToPeak | GainKind::ImpulseToPeak => {
                let samples = ExpSamples::new(&self.sys.a, self.horizon)?;
                let (c, b) = (&self.sys.c, &self.sys.b);
                let (_, v) = samples.maximize(|e| linmat::sigma_max(&(c * e * b)))?;
                (v, false, 0)
            }
        };
        Ok(GainEstimate { kind, value, sampled, directions, horizon: self.horizon })
    }
}

/// Time-domain estimate of one of the four gains bounded by the norms.
pub fn gain_oracle(sys: &LtiSystem, kind: GainKind) -> Result<GainEstimate> {
    GainOracle::new(sys, OracleConfig::default())?.gain(kind)
}

/// `S1 + S2`: shared input, summed outputs.
pub fn sum_system(s1: &LtiSystem, s2: &LtiSystem) -> Result<LtiSystem> {
    if s1.m() != s2.m() || s1.k() != s2.k() {
        return Err(Error::InvalidModel(format!(
            "sum needs equal input/output sizes: ({}, {}) vs ({}, {})",
            s1.m(),
            s1.k(),
            s2.m(),
            s2.k()
        )));
    }
    let (n1, n2) = (s1.n(), s2.n());
    let mut a = Matrix::zeros(n1 + n2, n1 + n2);
    a.view_mut((0, 0), (n1, n1)).copy_from(&s1.a);
    a.view_mut((n1, n1), (n2, n2)).copy_from(&s2.a);
    let mut b = Matrix::zeros(n1 + n2, s1.m());
    b.view_mut((0, 0), (n1, s1.m())).copy_from(&s1.b);
    b.view_mut((n1, 0), (n2, s1.m())).copy_from(&s2.b);
    let mut c = Matrix::zeros(s1.k(), n1 + n2);
    c.view_mut((0, 0), (s1.k(), n1)).copy_from(&s1.c);
    c.view_mut((0, n1), (s1.k(), n2)).copy_from(&s2.c);
    LtiSystem::realization(a, b, c)
}

/// Cascade `S2 S1` (S1 first), each stage with optional feedthrough.
///
/// State `(x1, x2)`:
/// `A = [[A1, 0], [B2 C1, A2]]`, `B = [B1; B2 D1]`, `C = [D2 C1, C2]`.
/// The overall feedthrough `D2 D1` must vanish.
pub fn series_system(s2: &LtiSystem, d2: Option<&Matrix>, s1: &LtiSystem, d1: Option<&Matrix>) -> Result<LtiSystem> {
    if s1.k() != s2.m() {
        return Err(Error::InvalidModel(format!(
            "cascade needs S1 outputs ({}) = S2 inputs ({})",
            s1.k(),
            s2.m()
        )));
    }
    if let Some(d) = d1 {
        if d.shape() != (s1.k(), s1.m()) {
            return Err(Error::InvalidModel("D1 has the wrong shape".into()));
        }
    }
    if let Some(d) = d2 {
        if d.shape() != (s2.k(), s2.m()) {
            return Err(Error::InvalidModel("D2 has the wrong shape".into()));
        }
    }
    if let (Some(x), Some(y)) = (d2, d1) {
        if (x * y).amax() > 0.0 {
            return Err(Error::InvalidModel("cascade has a direct feedthrough D2·D1 ≠ 0".into()));
        }
    }
    let (n1, n2) = (s1.n(), s2.n());
    let mut a = Matrix::zeros(n1 + n2, n1 + n2);
    a.view_mut((0, 0), (n1, n1)).copy_from(&s1.a);
    a.view_mut((n1, 0), (n2, n1)).copy_from(&(&s2.b * &s1.c));
    a.view_mut((n1, n1), (n2, n2)).copy_from(&s2.a);
    let mut b = Matrix::zeros(n1 + n2, s1.m());
    b.view_mut((0, 0), (n1, s1.m())).copy_from(&s1.b);
    if let Some(d) = d1 {
        b.view_mut((n1, 0), (n2, s1.m())).copy_from(&(&s2.b * d));
    }
    let mut c = Matrix::zeros(s2.k(), n1 + n2);
    if let Some(d) = d2 {
        c.view_mut((0, 0), (s2.k(), n1)).copy_from(&(d * &s1.c));
    }
    c.view_mut((0, n1), (s2.k(), n2)).copy_from(&s2.c);
    LtiSystem::realization(a, b, c)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleGains {
    pub peak_to_peak: f64,
    pub peak_to_peak_sampled: bool,
    pub impulse_to_integral: f64,
    pub impulse_to_integral_sampled: bool,
    pub integral_to_peak: f64,
    pub impulse_to_peak: f64,
    pub horizon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChainCheck {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
    pub holds: bool,
}

impl ChainCheck {
    pub fn new(name: &str, lhs: f64, rhs: f64, slack: f64) -> Self {
        Self { name: name.to_string(), lhs, rhs, slack, holds: lhs <= rhs + slack }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NormReport {
    pub h2: f64,
    pub energy_to_peak: f64,
    pub impulse_to_energy: f64,
    pub eps: f64,
    pub alpha_hat: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha_hat_boundary: Option<Boundary>,
    pub eps_alpha_curve: Vec<[f64; 2]>,
    pub star: f64,
    pub star_alpha: f64,
    pub star_prime: f64,
    pub star_prime_alpha: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub circ: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub circ_prime: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gains: Option<OracleGains>,
    pub chain_checks: Vec<ChainCheck>,
}

impl NormReport {
    pub fn chains_hold(&self) -> bool {
        self.chain_checks.iter().all(|c| c.holds)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalysisConfig {
    pub search: AlphaSearchConfig,
    pub barrier: BarrierConfig,
    pub oracle: OracleConfig,
    pub lmi: bool,
    pub oracles: bool,
    pub chain_slack: f64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            search: AlphaSearchConfig::analysis(),
            barrier: BarrierConfig::default(),
            oracle: OracleConfig::default(),
            lmi: true,
            oracles: true,
            chain_slack: DEFAULT_CHAIN_SLACK,
        }
    }
}

/// Full analysis: Gramian norms, ε/∗/∗′ searches, LMI norms and oracle
/// gains, plus every gain-versus-bound inequality.
pub fn analyze(sys: &LtiSystem, cfg: &AnalysisConfig) -> Result<NormReport> {
    sys.require_stable()?;
    let h2 = h2_norm(sys)?;
    let (energy_to_peak, impulse_to_energy) = peak_norms(sys)?;
    let eps = eps_norm(sys, &cfg.search)?;
    let (mut star, mut star_prime) = star_norms(sys, &cfg.search)?;
    // Both are minima over α, so the ε minimizer is a valid candidate too.
    let s = star_alpha(sys, eps.alpha)?;
    if s < star.value {
        star.value = s;
        star.alpha = eps.alpha;
    }
    let s = star_prime_alpha(sys, eps.alpha)?;
    if s < star_prime.value {
        star_prime.value = s;
        star_prime.alpha = eps.alpha;
    }

    let (omega, circ, circ_prime) = if cfg.lmi {
        let w = lmi::omega_norm(sys, &cfg.barrier)?;
        let c = lmi::min_trace_p(sys, &cfg.barrier)?;
        let cp = lmi::min_trace_q(sys, &cfg.barrier)?;
        (Some(w.value), Some(c.objective.sqrt()), Some(cp.objective.sqrt()))
    } else {
        (None, None, None)
    };

    let gains = if cfg.oracles {
        let o = GainOracle::new(sys, cfg.oracle)?;
        let p2p = o.gain(GainKind::PeakToPeak)?;
        let i2i = o.gain(GainKind::ImpulseToIntegral)?;
        let int2p = o.gain(GainKind::IntegralToPeak)?;
        let imp2p = o.gain(GainKind::ImpulseToPeak)?;
        Some(OracleGains {
            peak_to_peak: p2p.value,
            peak_to_peak_sampled: p2p.sampled,
            impulse_to_integral: i2i.value,
            impulse_to_integral_sampled: i2i.sampled,
            integral_to_peak: int2p.value,
            impulse_to_peak: imp2p.value,
            horizon: p2p.horizon,
        })
    } else {
        None
    };

    let exact = |x: f64| 1e-12 * x.abs().max(1.0);
    let mut checks = vec![
        ChainCheck::new("energy_to_peak <= h2", energy_to_peak, h2, exact(h2)),
        ChainCheck::new("impulse_to_energy <= h2", impulse_to_energy, h2, exact(h2)),
        ChainCheck::new("star <= eps", star.value, eps.value, exact(eps.value)),
        ChainCheck::new("star_prime <= eps", star_prime.value, eps.value, exact(eps.value)),
    ];
    if let (Some(w), Some(c), Some(cp)) = (omega, circ, circ_prime) {
        checks.push(ChainCheck::new("omega <= circ", w, c, 1e-6 * c));
        checks.push(ChainCheck::new("omega <= circ_prime", w, cp, 1e-6 * cp));
    }
    if let Some(g) = &gains {
        let sl = cfg.chain_slack;
        checks.push(ChainCheck::new("peak_to_peak <= star", g.peak_to_peak, star.value, sl));
        checks.push(ChainCheck::new("impulse_to_integral <= star_prime", g.impulse_to_integral, star_prime.value, sl));
        if let Some(w) = omega {
            checks.push(ChainCheck::new("integral_to_peak <= omega", g.integral_to_peak, w, sl));
            checks.push(ChainCheck::new("impulse_to_peak <= omega", g.impulse_to_peak, w, sl));
        }
    }
    for c in checks.iter().filter(|c| !c.holds) {
        log::warn!("inequality {} fails: {} > {} + {}", c.name, c.lhs, c.rhs, c.slack);
    }

    Ok(NormReport {
        h2,
        energy_to_peak,
        impulse_to_energy,
        eps: eps.value,
        alpha_hat: eps.alpha,
        alpha_hat_boundary: eps.boundary,
        eps_alpha_curve: eps.curve.iter().map(|&(a, v)| [a, v]).collect(),
        star: star.value,
        star_alpha: star.alpha,
        star_prime: star_prime.value,
        star_prime_alpha: star_prime.alpha,
        omega,
        circ,
        circ_prime,
        gains,
        chain_checks: checks,
    })
}
