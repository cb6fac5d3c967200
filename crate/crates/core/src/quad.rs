//! Time-domain quadrature and maximization over `e^{As}`.
//!
//! The matrix exponential is tabulated once per system on composite
//! 8-point Gauss–Legendre panels; integrands are then cheap closures over
//! the cached values. Integrands with sign switches (|h(t)| for scalar h)
//! are split at the switching times so every sub-panel is smooth.

use crate::error::{Error, Result};
use crate::linmat::{self, Matrix, Vector};

const GL_NODES: [f64; 8] = [
    -0.960_289_856_497_536_2,
    -0.796_666_477_413_626_7,
    -0.525_532_409_916_329,
    -0.183_434_642_495_649_8,
    0.183_434_642_495_649_8,
    0.525_532_409_916_329,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_2,
];
const GL_WEIGHTS: [f64; 8] = [
    0.101_228_536_290_376_26,
    0.222_381_034_453_374_47,
    0.313_706_645_877_887_3,
    0.362_683_783_378_362,
    0.362_683_783_378_362,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_47,
    0.101_228_536_290_376_26,
];

/// Size below which ‖e^{AT}‖ counts as fully decayed.
pub const DECAY_TOL: f64 = 1e-12;
/// Samples used for time maximization before golden-section refinement.
pub const MAX_SAMPLES: usize = 2048;
const MAX_PANELS: usize = 100_000;

/// Smallest doubling of `1/|r|` after which ‖e^{AT}‖_F ≤ 1e-12.
pub fn default_horizon(a: &Matrix) -> Result<f64> {
    let r = linmat::spectral_abscissa(a)?;
    if r >= 0.0 {
        return Err(Error::SolverDegenerate(format!(
            "infinite-horizon integral needs a stable A (spectral abscissa {r:.6})"
        )));
    }
    let mut t = 1.0 / (-r);
    for _ in 0..60 {
        if linmat::matexp(a, t)?.norm() <= DECAY_TOL {
            return Ok(t);
        }
        t *= 2.0;
    }
    Err(Error::NumericalFailure("could not find a decay horizon".into()))
}

/// `L e^{As} R` tabulated on Gauss–Legendre panels covering `[0, horizon]`
/// (`L = R = I` unless built with [`ExpTable::sandwiched`]).
pub struct ExpTable {
    a: Matrix,
    left: Option<Matrix>,
    right: Option<Matrix>,
    edges: Vec<f64>,
    edge_exps: Vec<Matrix>,
    /// For panel p, entries `8p..8p+8`.
    node_times: Vec<f64>,
    node_exps: Vec<Matrix>,
}

fn sandwich(left: Option<&Matrix>, e: Matrix, right: Option<&Matrix>) -> Matrix {
    let e = match left {
        Some(l) => l * e,
        None => e,
    };
    match right {
        Some(r) => e * r,
        None => e,
    }
}

fn gauss_panel<F>(lo: f64, hi: f64, mut f: F) -> Result<Vector>
where
    F: FnMut(f64) -> Result<Vector>,
{
    let half = 0.5 * (hi - lo);
    let mid = 0.5 * (hi + lo);
    let mut acc: Option<Vector> = None;
    for (x, w) in GL_NODES.iter().zip(GL_WEIGHTS) {
        let v = f(mid + half * x)? * (w * half);
        acc = Some(match acc {
            None => v,
            Some(a) => a + v,
        });
    }
    Ok(acc.expect("eight nodes"))
}

impl ExpTable {
    pub fn new(a: &Matrix, horizon: f64) -> Result<Self> {
        Self::sandwiched(a, horizon, None, None)
    }

    /// Tabulate `left · e^{As} · right`, e.g. the impulse response `C e^{As} B`.
    pub fn sandwiched(a: &Matrix, horizon: f64, left: Option<&Matrix>, right: Option<&Matrix>) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::InvalidModel(format!("horizon must be positive, got {horizon}")));
        }
        let rate = a.norm().max(1e-12);
        let width = (horizon / 16.0).min(0.5 / rate);
        let panels = ((horizon / width).ceil() as usize).clamp(1, MAX_PANELS);
        let width = horizon / panels as f64;
        let half = 0.5 * width;
        let offsets: Vec<Matrix> = GL_NODES
            .iter()
            .map(|x| linmat::matexp(a, half * (1.0 + x)))
            .collect::<Result<_>>()?;
        let mut edges = Vec::with_capacity(panels + 1);
        let mut edge_exps = Vec::with_capacity(panels + 1);
        let mut node_times = Vec::with_capacity(8 * panels);
        let mut node_exps = Vec::with_capacity(8 * panels);
        for p in 0..=panels {
            let s = p as f64 * width;
            let e = linmat::matexp(a, s)?;
            if p < panels {
                for (x, off) in GL_NODES.iter().zip(&offsets) {
                    node_times.push(s + half * (1.0 + x));
                    node_exps.push(sandwich(left, &e * off, right));
                }
            }
            edges.push(s);
            edge_exps.push(sandwich(left, e, right));
        }
        Ok(Self { a: a.clone(), left: left.cloned(), right: right.cloned(), edges, edge_exps, node_times, node_exps })
    }

    fn eval(&self, s: f64) -> Result<Matrix> {
        Ok(sandwich(self.left.as_ref(), linmat::matexp(&self.a, s)?, self.right.as_ref()))
    }

    pub fn horizon(&self) -> f64 {
        *self.edges.last().expect("at least one panel")
    }

    /// ∫₀ᵀ value(M(s)) ds for the tabulated `M(s)`, splitting panels where
    /// `switch(M(s))` changes sign.
    pub fn integrate<F, G>(&self, value: F, switch: Option<G>) -> Result<Vector>
    where
        F: Fn(&Matrix) -> Vector,
        G: Fn(&Matrix) -> f64,
    {
        let panels = self.edges.len() - 1;
        let mut total: Option<Vector> = None;
        for p in 0..panels {
            let (lo, hi) = (self.edges[p], self.edges[p + 1]);
            let mut breaks = Vec::new();
            if let Some(sw) = switch.as_ref() {
                let mut times = vec![lo];
                let mut vals = vec![sw(&self.edge_exps[p])];
                for j in 0..8 {
                    times.push(self.node_times[8 * p + j]);
                    vals.push(sw(&self.node_exps[8 * p + j]));
                }
                times.push(hi);
                vals.push(sw(&self.edge_exps[p + 1]));
                for w in 0..times.len() - 1 {
                    if vals[w] * vals[w + 1] < 0.0 {
                        breaks.push(self.locate_switch(sw, times[w], times[w + 1], vals[w])?);
                    }
                }
            }
            let part = if breaks.is_empty() {
                let half = 0.5 * (hi - lo);
                let mut acc = value(&self.node_exps[8 * p]) * (GL_WEIGHTS[0] * half);
                for j in 1..8 {
                    acc += value(&self.node_exps[8 * p + j]) * (GL_WEIGHTS[j] * half);
                }
                acc
            } else {
                let mut cuts = vec![lo];
                cuts.extend(breaks);
                cuts.push(hi);
                let mut acc: Option<Vector> = None;
                for w in cuts.windows(2) {
                    let sub = gauss_panel(w[0], w[1], |s| Ok(value(&self.eval(s)?)))?;
                    acc = Some(match acc {
                        None => sub,
                        Some(a) => a + sub,
                    });
                }
                acc.expect("at least one sub-panel")
            };
            total = Some(match total {
                None => part,
                Some(t) => t + part,
            });
        }
        Ok(total.expect("at least one panel"))
    }

    /// ∫₀ᵀ |f(M(s))|₂ ds; scalar integrands are split at their zeros.
    pub fn integrate_norm<F>(&self, f: F) -> Result<f64>
    where
        F: Fn(&Matrix) -> Vector,
    {
        let probe = f(&self.edge_exps[0]);
        let value = |e: &Matrix| Vector::from_element(1, f(e).norm());
        let out = if probe.len() == 1 {
            self.integrate(value, Some(|e: &Matrix| f(e)[0]))?
        } else {
            self.integrate(value, None::<fn(&Matrix) -> f64>)?
        };
        Ok(out[0])
    }

    fn locate_switch<G>(&self, sw: &G, mut lo: f64, mut hi: f64, f_lo: f64) -> Result<f64>
    where
        G: Fn(&Matrix) -> f64,
    {
        let sign_lo = f_lo.signum();
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if hi - lo <= 1e-15 * hi.max(1.0) {
                break;
            }
            let v = sw(&self.eval(mid)?);
            if v == 0.0 {
                return Ok(mid);
            }
            if v.signum() == sign_lo {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }
}

/// `e^{As}` on a uniform grid of `MAX_SAMPLES` points over `[0, horizon]`.
pub struct ExpSamples {
    a: Matrix,
    times: Vec<f64>,
    exps: Vec<Matrix>,
}

impl ExpSamples {
    pub fn new(a: &Matrix, horizon: f64) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::InvalidModel(format!("horizon must be positive, got {horizon}")));
        }
        let count = MAX_SAMPLES;
        let h = horizon / (count - 1) as f64;
        // Re-anchor with a fresh exponential every 64 steps to bound drift.
        let step = linmat::matexp(a, h)?;
        let mut times = Vec::with_capacity(count);
        let mut exps = Vec::with_capacity(count);
        let mut e = Matrix::identity(a.nrows(), a.ncols());
        for i in 0..count {
            let t = i as f64 * h;
            if i > 0 {
                e = if i % 64 == 0 { linmat::matexp(a, t)? } else { &e * &step };
            }
            times.push(t);
            exps.push(e.clone());
        }
        Ok(Self { a: a.clone(), times, exps })
    }

    /// `(argmax, max)` of `f(e^{As})` over `[0, horizon]`: best sample, then
    /// golden-section refinement inside its neighbouring bracket.
    pub fn maximize<F>(&self, f: F) -> Result<(f64, f64)>
    where
        F: Fn(&Matrix) -> f64,
    {
        let mut best = 0;
        let mut best_val = f64::NEG_INFINITY;
        for (i, e) in self.exps.iter().enumerate() {
            let v = f(e);
            if v > best_val {
                best_val = v;
                best = i;
            }
        }
        let lo = self.times[best.saturating_sub(1)];
        let hi = self.times[(best + 1).min(self.times.len() - 1)];
        let eval = |s: f64| -> Result<f64> { Ok(f(&linmat::matexp(&self.a, s)?)) };
        let (s, v) = golden_max(eval, lo, hi, 1e-12 * hi.max(1.0))?;
        if v > best_val {
            Ok((s, v))
        } else {
            Ok((self.times[best], best_val))
        }
    }
}

/// Golden-section maximization of a unimodal function on `[lo, hi]`.
pub fn golden_max<F>(f: F, lo: f64, hi: f64, tol: f64) -> Result<(f64, f64)>
where
    F: Fn(f64) -> Result<f64>,
{
    let (s, v) = golden_min(|x| f(x).map(|v| -v), lo, hi, tol)?;
    Ok((s, -v))
}

/// Golden-section minimization of a unimodal function on `[lo, hi]`.
///
/// The endpoints are compared too, so a monotone function returns its
/// minimizing endpoint.
pub fn golden_min<F>(f: F, lo: f64, hi: f64, tol: f64) -> Result<(f64, f64)>
where
    F: Fn(f64) -> Result<f64>,
{
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    for _ in 0..200 {
        if (b - a).abs() <= tol {
            break;
        }
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d)?;
        }
    }
    let mut best = if fc <= fd { (c, fc) } else { (d, fd) };
    for x in [lo, hi] {
        let v = f(x)?;
        if v < best.1 {
            best = (x, v);
        }
    }
    Ok(best)
}
