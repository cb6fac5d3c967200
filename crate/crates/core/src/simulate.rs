//! Time-domain runs under unit-bounded disturbances and empirical checks of
//! ellipsoid invariance.

use std::fmt::Write as _;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::ellipsoids::{Ellipsoid, EllipsoidForm};
use crate::error::{Error, Result};
use crate::io::fmt_num;
use crate::linmat::{self, Matrix, Vector};
use crate::random::{rng, TestRng};
use crate::sysmodel::LtiSystem;

/// Worst-case directions below this norm produce `w = 0`.
pub const WORST_CASE_FLOOR: f64 = 1e-12;
/// Default step as a fraction of the slowest time constant `−1/r`.
pub const DEFAULT_DT_FRACTION: f64 = 1e-3;

/// A disturbance law with `|w| ≤ 1` (Euclidean).
pub trait Policy {
    fn label(&self) -> String;
    fn disturbance(&mut self, t: f64, x: &Vector) -> Vector;
}

pub struct ZeroPolicy {
    pub m: usize,
}

impl Policy for ZeroPolicy {
    fn label(&self) -> String {
        "zero".into()
    }

    fn disturbance(&mut self, _t: f64, _x: &Vector) -> Vector {
        Vector::zeros(self.m)
    }
}

pub struct ConstantPolicy {
    w: Vector,
}

impl ConstantPolicy {
    pub fn new(w: Vector) -> Result<Self> {
        if !(w.norm() <= 1.0 + 1e-12) {
            return Err(Error::InvalidModel(format!("constant disturbance has norm {} > 1", w.norm())));
        }
        Ok(Self { w })
    }
}

impl Policy for ConstantPolicy {
    fn label(&self) -> String {
        "constant".into()
    }

    fn disturbance(&mut self, _t: f64, _x: &Vector) -> Vector {
        self.w.clone()
    }
}

/// Fresh uniform direction on the unit sphere at every step.
pub struct RandomPolicy {
    m: usize,
    seed: u64,
    rng: TestRng,
}

impl RandomPolicy {
    pub fn new(m: usize, seed: u64) -> Self {
        Self { m, seed, rng: rng(seed) }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

impl Policy for RandomPolicy {
    fn label(&self) -> String {
        format!("random(seed={})", self.seed)
    }

    fn disturbance(&mut self, _t: f64, _x: &Vector) -> Vector {
        loop {
            let g = Vector::from_fn(self.m, |_, _| self.rng.sample::<f64, _>(StandardNormal));
            let n = g.norm();
            if n > 1e-12 {
                return g / n;
            }
        }
    }
}

/// `w(x) = normalize(Bᵀ ∇V(x))` for the membership form `V` of an ellipsoid,
/// i.e. the disturbance that maximizes `V̇`.
pub struct WorstCasePolicy {
    gain: Matrix,
}

impl Policy for WorstCasePolicy {
    fn label(&self) -> String {
        "worst_case".into()
    }

    fn disturbance(&mut self, _t: f64, x: &Vector) -> Vector {
        let g = &self.gain * x;
        let n = g.norm();
        if n < WORST_CASE_FLOOR {
            Vector::zeros(g.len())
        } else {
            g / n
        }
    }
}

pub fn worst_case_policy(e: &Ellipsoid, sys: &LtiSystem) -> Result<WorstCasePolicy> {
    if e.dim() != sys.n() {
        return Err(Error::InvalidModel(format!("ellipsoid dimension {} vs system order {}", e.dim(), sys.n())));
    }
    let gain = match e.form {
        EllipsoidForm::PForm => sys.b.transpose() * linmat::spd_inverse(&e.shape)?,
        EllipsoidForm::QForm => sys.b.transpose() * &e.shape,
    };
    Ok(WorstCasePolicy { gain })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vector>,
    pub outputs: Vec<Vector>,
    /// Membership form against the reference ellipsoid, or `|x|²` without one.
    pub v_values: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// `t,x1..xn,z1..zk,v`
    pub fn to_csv(&self) -> String {
        let n = self.states.first().map_or(0, |x| x.len());
        let k = self.outputs.first().map_or(0, |z| z.len());
        let mut out = String::from("t");
        for i in 1..=n {
            let _ = write!(out, ",x{i}");
        }
        for i in 1..=k {
            let _ = write!(out, ",z{i}");
        }
        out.push_str(",v\n");
        for i in 0..self.len() {
            out.push_str(&fmt_num(self.times[i]));
            for v in self.states[i].iter().chain(self.outputs[i].iter()) {
                out.push(',');
                out.push_str(&fmt_num(*v));
            }
            out.push(',');
            out.push_str(&fmt_num(self.v_values[i]));
            out.push('\n');
        }
        out
    }
}

/// `−1/r`-scaled default step.
pub fn default_dt(sys: &LtiSystem) -> Result<f64> {
    let r = sys.require_stable()?;
    Ok(DEFAULT_DT_FRACTION / -r)
}

/// Fixed-step RK4 with the disturbance sampled at the start of each step and
/// held. The step is shrunk so that a whole number of steps ends at `t_end`.
pub fn integrate(
    sys: &LtiSystem,
    policy: &mut dyn Policy,
    x0: &Vector,
    t_end: f64,
    dt: f64,
    reference: Option<&Ellipsoid>,
) -> Result<Trajectory> {
    if !(dt > 0.0 && dt.is_finite()) || !(t_end > 0.0 && t_end.is_finite()) {
        return Err(Error::InvalidModel(format!("need dt > 0 and t_end > 0, got dt = {dt}, t_end = {t_end}")));
    }
    if x0.len() != sys.n() {
        return Err(Error::InvalidModel(format!("x0 has length {}, system order is {}", x0.len(), sys.n())));
    }
    if let Some(e) = reference {
        if e.dim() != sys.n() {
            return Err(Error::InvalidModel("reference ellipsoid dimension mismatch".into()));
        }
    }
    let steps = (t_end / dt).ceil().max(1.0) as usize;
    let h = t_end / steps as f64;
    let v_of = |x: &Vector| -> Result<f64> {
        match reference {
            Some(e) => e.form_value(x),
            None => Ok(x.norm_squared()),
        }
    };

    let mut traj = Trajectory {
        times: Vec::with_capacity(steps + 1),
        states: Vec::with_capacity(steps + 1),
        outputs: Vec::with_capacity(steps + 1),
        v_values: Vec::with_capacity(steps + 1),
    };
    let mut x = x0.clone();
    for i in 0..=steps {
        let t = i as f64 * h;
        traj.times.push(t);
        traj.outputs.push(&sys.c * &x);
        traj.v_values.push(v_of(&x)?);
        traj.states.push(x.clone());
        if i == steps {
            break;
        }
        let w = policy.disturbance(t, &x);
        if w.len() != sys.m() || w.norm() > 1.0 + 1e-12 {
            return Err(Error::InvalidModel(format!("policy {} returned an inadmissible disturbance", policy.label())));
        }
        let bw = &sys.b * w;
        let f = |x: &Vector| &sys.a * x + &bw;
        let k1 = f(&x);
        let k2 = f(&(&x + &k1 * (0.5 * h)));
        let k3 = f(&(&x + &k2 * (0.5 * h)));
        let k4 = f(&(&x + &k3 * h));
        x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::NumericalFailure(format!("state became non-finite at t = {}", t + h)));
        }
    }
    Ok(traj)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InvarianceReport {
    /// Largest membership value from the first entry onward.
    pub max_v: f64,
    /// First sample time with form ≤ 1, or the final time if never reached.
    pub first_entry_time: f64,
    pub entered: bool,
}

impl InvarianceReport {
    pub fn excess(&self) -> f64 {
        (self.max_v - 1.0).max(0.0)
    }
}

pub fn invariance_report(traj: &Trajectory, e: &Ellipsoid) -> Result<InvarianceReport> {
    if traj.is_empty() {
        return Err(Error::InvalidModel("empty trajectory".into()));
    }
    let v: Vec<f64> = traj.states.iter().map(|x| e.form_value(x)).collect::<Result<_>>()?;
    let (start, entered) = match v.iter().position(|&v| v <= 1.0) {
        Some(i) => (i, true),
        None => (v.len() - 1, false),
    };
    let max_v = v[start..].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(InvarianceReport { max_v, first_entry_time: traj.times[start], entered })
}

/// Run configuration echoed next to a trajectory CSV.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationSidecar {
    pub policy: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub dt: f64,
    pub t_end: f64,
    pub steps: usize,
    pub x0: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference_alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub invariance: Option<InvarianceReport>,
}
