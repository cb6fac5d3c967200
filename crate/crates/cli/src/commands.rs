use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use epsctl_core::ellipsoids::{
    self, ellipse_polygon, p_alpha, q_alpha, set_polygon, Ellipsoid, EllipsoidForm, ObsOracle, PolygonKind,
    SetPolygon, SignalNorm,
};
use epsctl_core::io::{fmt_num, to_json};
use epsctl_core::linmat::{Matrix, Vector};
use epsctl_core::lmi::{self, BarrierConfig};
use epsctl_core::norms::{self, AnalysisConfig, OracleConfig};
use epsctl_core::plants::benchmark_plant;
use epsctl_core::quad;
use epsctl_core::search::{log_grid, AlphaSearchConfig};
use epsctl_core::simulate::{self, ConstantPolicy, Policy, RandomPolicy, SimulationSidecar, ZeroPolicy};
use epsctl_core::synth::{self, Realization};
use epsctl_core::sysmodel::{matrix_from_rows, LtiSystem, ModelFile, Validate, DEFAULT_PBH_TOL};
use epsctl_core::Error;

use crate::args::*;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(Error::InvalidModel(_) | Error::SolverDegenerate(_) | Error::AlphaOutOfRange { .. }) => 2,
            CliError::Core(Error::InfeasibleLmi(_) | Error::NumericalFailure(_)) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "{m}"),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

type CliResult<T> = Result<T, CliError>;

pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Analyze(a) => analyze(a),
        Command::Synthesize(a) => synthesize(a),
        Command::Scan(a) => scan(a),
        Command::Sets(a) => sets(a),
        Command::Simulate(a) => simulate(a),
        Command::Compare(a) => compare(a),
    }
}

fn read_model(path: &Path) -> CliResult<ModelFile> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    Ok(ModelFile::from_json(&text)?)
}

fn emit(out: &OutputArgs, text: &str) -> CliResult<()> {
    match &out.out {
        Some(p) => fs::write(p, text).map_err(|e| CliError::Usage(format!("cannot write {}: {e}", p.display()))),
        None => {
            let mut so = std::io::stdout().lock();
            so.write_all(text.as_bytes()).map_err(|e| CliError::Usage(format!("stdout: {e}")))
        }
    }
}

fn require_format(out: &OutputArgs, allowed: Format, command: &str) -> CliResult<()> {
    match out.format {
        Some(f) if f != allowed => Err(CliError::Usage(format!("{command} does not support --format {f:?}"))),
        _ => Ok(()),
    }
}

fn grid_config(base: AlphaSearchConfig, g: &GridArgs) -> CliResult<AlphaSearchConfig> {
    let cfg = AlphaSearchConfig {
        grid_min: g.alpha_min.unwrap_or(base.grid_min),
        grid_max: g.alpha_max.unwrap_or(base.grid_max),
        grid_points: g.alpha_points.unwrap_or(base.grid_points),
        ..base
    };
    cfg.validate()?;
    Ok(cfg)
}

fn fmt_matrix(m: &Matrix) -> String {
    let rows: Vec<String> = (0..m.nrows())
        .map(|i| m.row(i).iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>().join(", "))
        .collect();
    format!("[{}]", rows.join("; "))
}

fn analyze(a: AnalyzeArgs) -> CliResult<()> {
    require_format(&a.output, Format::Json, "analyze")?;
    let sys = read_model(&a.system)?.to_system()?;
    let cfg = AnalysisConfig {
        search: grid_config(AlphaSearchConfig::analysis(), &a.grid)?,
        oracle: OracleConfig { dirs: a.dirs, horizon: a.horizon, seed: a.seed },
        lmi: !a.no_lmi,
        oracles: !a.no_oracles,
        ..AnalysisConfig::default()
    };
    let rep = norms::analyze(&sys, &cfg)?;
    eprintln!("eps = {:.6} at alpha = {:.6}", rep.eps, rep.alpha_hat);
    for c in rep.chain_checks.iter().filter(|c| !c.holds) {
        log::warn!("chain {} violated: {} > {} + {}", c.name, c.lhs, c.rhs, c.slack);
    }
    emit(&a.output, &to_json(&rep)?)
}

fn synthesize(a: SynthArgs) -> CliResult<()> {
    require_format(&a.output, Format::Json, "synthesize")?;
    let model = read_model(&a.plant)?;
    let cfg = grid_config(AlphaSearchConfig::synthesis(), &a.grid)?;
    let res = match a.kind {
        Kind::Sf => synth::synth_state_feedback(&model.to_sf_plant()?, &cfg)?,
        Kind::Filter => synth::synth_filter(&model.to_filter_plant()?, &cfg)?,
        Kind::Of => synth::synth_output_feedback(&model.to_of_plant()?, &cfg)?,
    };
    eprintln!("alpha_hat = {:.6}, eps_norm = {:.6}", res.alpha_hat, res.eps_norm);
    if let Some(k) = &res.k {
        eprintln!("K = {}", fmt_matrix(k));
    }
    if let Some(l) = &res.l {
        eprintln!("L = {}", fmt_matrix(l));
    }
    if res.boundary_flag {
        log::warn!("minimizer sits on the upper end of the α grid");
    }
    emit(&a.output, &to_json(&res)?)
}

fn scan(a: ScanArgs) -> CliResult<()> {
    require_format(&a.output, Format::Csv, "scan")?;
    let model = read_model(&a.plant)?;
    let mut out = String::from("alpha,eps_alpha\n");
    let mut push = |alpha: f64, v: f64| {
        out.push_str(&format!("{},{}\n", fmt_num(alpha), fmt_num(v)));
    };
    match a.kind {
        None => {
            let sys = model.to_system()?;
            let cfg = grid_config(AlphaSearchConfig::analysis(), &a.grid)?;
            let (lo, hi) = norms::analysis_range(&sys, &cfg)?;
            for alpha in log_grid(lo, hi, cfg.grid_points) {
                push(alpha, norms::eps_alpha(&sys, alpha)?);
            }
        }
        Some(kind) => {
            let cfg = grid_config(AlphaSearchConfig::synthesis(), &a.grid)?;
            let grid = log_grid(cfg.grid_min, cfg.grid_max, cfg.grid_points);
            match kind {
                Kind::Sf => {
                    let p = model.to_sf_plant()?;
                    p.validate(DEFAULT_PBH_TOL)?.ensure()?;
                    for alpha in grid {
                        push(alpha, synth::sf_value(&p, alpha)?);
                    }
                }
                Kind::Filter => {
                    let p = model.to_filter_plant()?;
                    p.validate(DEFAULT_PBH_TOL)?.ensure()?;
                    for alpha in grid {
                        push(alpha, synth::filter_value(&p, alpha)?);
                    }
                }
                Kind::Of => {
                    let p = model.to_of_plant()?;
                    p.validate(DEFAULT_PBH_TOL)?.ensure()?;
                    for alpha in grid {
                        push(alpha, synth::evaluate_output_feedback(&p, alpha)?.eps_alpha());
                    }
                }
            }
        }
    }
    emit(&a.output, &out)
}

fn labelled(mut p: SetPolygon, label: &str) -> SetPolygon {
    p.label = label.to_string();
    p
}

/// Largest membership value over the vertices of a polygon.
fn max_form(e: &Ellipsoid, poly: &SetPolygon) -> CliResult<f64> {
    let mut worst = 0.0_f64;
    for v in &poly.vertices {
        worst = worst.max(e.form_value(&Vector::from_vec(v.to_vec()))?);
    }
    Ok(worst)
}

/// Largest ratio of ellipse boundary distance to observable-set radius.
fn max_radial_ratio(sys: &LtiSystem, q: SignalNorm, ellipse: &SetPolygon) -> CliResult<f64> {
    let oracle = ObsOracle::new(sys)?;
    let mut worst = 0.0_f64;
    for v in &ellipse.vertices {
        let x = Vector::from_vec(v.to_vec());
        let r = oracle.radius(q, &(&x / x.norm()))?;
        worst = worst.max(x.norm() / r);
    }
    Ok(worst)
}

fn sets(a: SetsArgs) -> CliResult<()> {
    require_format(&a.output, Format::Csv, "sets")?;
    let sys = read_model(&a.system)?.to_system()?;
    if sys.n() != 2 {
        return Err(Error::InvalidModel(format!("set polygons need n = 2, got n = {}", sys.n())).into());
    }
    let horizon = match a.horizon {
        Some(t) => t,
        None => quad::default_horizon(&sys.a)?,
    };
    let kinds = if a.kinds.is_empty() {
        vec![SetKind::ReachInf, SetKind::Reach1, SetKind::Obs1, SetKind::ObsInf]
    } else {
        a.kinds.clone()
    };
    let alpha = norms::eps_norm(&sys, &AlphaSearchConfig::analysis())?.alpha;
    let barrier = BarrierConfig::default();
    let mut polys = Vec::new();
    for kind in kinds {
        let (pk, ellipse, label) = match kind {
            SetKind::ReachInf => (PolygonKind::ReachInf, p_alpha(&sys, alpha)?, "ellipse_p_alpha"),
            SetKind::Reach1 => {
                let w = lmi::min_trace_p(&sys, &barrier)?.witness;
                (PolygonKind::Reach1, Ellipsoid::new(w, EllipsoidForm::PForm, None)?, "ellipse_p_tilde")
            }
            SetKind::Obs1 => (PolygonKind::Obs1, q_alpha(&sys, alpha)?, "ellipse_q_alpha"),
            SetKind::ObsInf => {
                let w = lmi::min_trace_q(&sys, &barrier)?.witness;
                (PolygonKind::ObsInf, Ellipsoid::new(w, EllipsoidForm::QForm, None)?, "ellipse_q_tilde")
            }
        };
        let poly = set_polygon(&sys, pk, horizon, a.dirs)?;
        let ell = labelled(ellipse_polygon(&ellipse, a.dirs)?, label);
        match pk {
            PolygonKind::ReachInf | PolygonKind::Reach1 => {
                let v = max_form(&ellipse, &poly)?;
                eprintln!("{} inside {}: max form {:.6} ({})", pk.label(), label, v, verdict(v <= 1.0 + 1e-3));
            }
            _ => {
                let q = if pk == PolygonKind::Obs1 { SignalNorm::One } else { SignalNorm::Inf };
                let v = max_radial_ratio(&sys, q, &ell)?;
                eprintln!("{} inside {}: max radial ratio {:.6} ({})", label, pk.label(), v, verdict(v <= 1.0 + 1e-3));
            }
        }
        polys.push(poly);
        polys.push(ell);
    }
    emit(&a.output, &ellipsoids::polygons_to_csv(&polys))
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "ok"
    } else {
        "VIOLATED"
    }
}

fn gain_field(v: &Value, name: &str) -> CliResult<Matrix> {
    let rows: Vec<Vec<f64>> = serde_json::from_value(
        v.get(name).cloned().ok_or_else(|| CliError::Usage(format!("gains file has no \"{name}\"")))?,
    )
    .map_err(|e| CliError::Usage(format!("gains field \"{name}\": {e}")))?;
    Ok(matrix_from_rows(name, &rows)?)
}

fn simulation_system(a: &SimulateArgs) -> CliResult<LtiSystem> {
    if let Some(path) = &a.system {
        return Ok(read_model(path)?.to_system()?);
    }
    let (Some(plant), Some(kind), Some(gains)) = (&a.plant, a.kind, &a.gains) else {
        return Err(CliError::Usage("simulate needs --system, or --plant with --kind and --gains".into()));
    };
    let model = read_model(plant)?;
    let text = fs::read_to_string(gains).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", gains.display())))?;
    let g: Value = serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("malformed gains JSON: {e}")))?;
    Ok(match kind {
        Kind::Sf => synth::sf_closed_loop(&model.to_sf_plant()?, &gain_field(&g, "k")?)?,
        Kind::Filter => synth::filter_error_system(&model.to_filter_plant()?, &gain_field(&g, "l")?)?,
        Kind::Of => synth::closed_loop(
            &model.to_of_plant()?,
            &gain_field(&g, "k")?,
            &gain_field(&g, "l")?,
            Realization::StateError,
        )?,
    })
}

fn simulate(a: SimulateArgs) -> CliResult<()> {
    require_format(&a.output, Format::Csv, "simulate")?;
    let sys = simulation_system(&a)?;
    sys.require_stable()?;
    let alpha = match a.alpha {
        Some(v) => v,
        None => norms::eps_norm(&sys, &AlphaSearchConfig::analysis())?.alpha,
    };
    let reference = p_alpha(&sys, alpha)?;
    let x0 = if a.x0.is_empty() {
        let mut e1 = Vector::zeros(sys.n());
        e1[0] = 1.0;
        reference.boundary_point(&e1)?
    } else if a.x0.len() == sys.n() {
        Vector::from_vec(a.x0.clone())
    } else {
        return Err(CliError::Usage(format!("--x0 has {} entries, system order is {}", a.x0.len(), sys.n())));
    };
    let mut policy: Box<dyn Policy> = match a.policy {
        PolicyKind::Zero => Box::new(ZeroPolicy { m: sys.m() }),
        PolicyKind::Constant => {
            if a.w.len() != sys.m() {
                return Err(CliError::Usage(format!("--w needs {} entries", sys.m())));
            }
            Box::new(ConstantPolicy::new(Vector::from_vec(a.w.clone()))?)
        }
        PolicyKind::Random => Box::new(RandomPolicy::new(sys.m(), a.seed)),
        PolicyKind::WorstCase => Box::new(simulate::worst_case_policy(&reference, &sys)?),
    };
    let dt = match a.dt {
        Some(v) => v,
        None => simulate::default_dt(&sys)?,
    };
    let traj = simulate::integrate(&sys, policy.as_mut(), &x0, a.t_end, dt, Some(&reference))?;
    let rep = simulate::invariance_report(&traj, &reference)?;
    let monotone = traj.v_values.windows(2).all(|w| w[1] <= w[0]);
    eprintln!(
        "max_v = {:.9}, first entry at t = {}, v monotone decreasing: {}",
        rep.max_v,
        fmt_num(rep.first_entry_time),
        if monotone { "yes" } else { "no" }
    );
    let sidecar = SimulationSidecar {
        policy: policy.label(),
        seed: (a.policy == PolicyKind::Random).then_some(a.seed),
        dt: traj.times[1] - traj.times[0],
        t_end: a.t_end,
        steps: traj.len() - 1,
        x0: x0.iter().copied().collect(),
        reference_alpha: Some(alpha),
        invariance: Some(rep),
    };
    emit(&a.output, &traj.to_csv())?;
    if let Some(p) = &a.output.out {
        let side = p.with_file_name(format!("{}.json", p.file_name().and_then(|s| s.to_str()).unwrap_or("trajectory")));
        fs::write(&side, to_json(&sidecar)?)
            .map_err(|e| CliError::Usage(format!("cannot write {}: {e}", side.display())))?;
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct CompareRow {
    beta: f64,
    alpha_hat: f64,
    k: Vec<f64>,
    l: Vec<f64>,
    eps_norm: f64,
    boundary_flag: bool,
    /// Largest relative gap between the two trace forms over the search.
    max_form_gap: f64,
    /// Relative gap between the ε(α̂) of the two closed-loop realizations.
    realization_gap: f64,
}

#[derive(Debug, Serialize)]
struct CompareTable {
    rows: Vec<CompareRow>,
}

fn compare(a: CompareArgs) -> CliResult<()> {
    if !(-1.0..=1.0).contains(&a.beta_min) || !(-1.0..=1.0).contains(&a.beta_max) || a.beta_min > a.beta_max {
        return Err(CliError::Usage(format!(
            "β range [{}, {}] must lie within [-1, 1] and be ordered",
            a.beta_min, a.beta_max
        )));
    }
    if a.beta_points == 0 {
        return Err(CliError::Usage("--beta-points must be positive".into()));
    }
    let cfg = grid_config(AlphaSearchConfig::synthesis(), &a.grid)?;
    let betas: Vec<f64> = if a.beta_points == 1 {
        vec![a.beta_min]
    } else {
        (0..a.beta_points)
            .map(|i| a.beta_min + (a.beta_max - a.beta_min) * i as f64 / (a.beta_points - 1) as f64)
            .collect()
    };
    let mut rows = Vec::new();
    for beta in betas {
        let plant = benchmark_plant(beta);
        let res = synth::synth_output_feedback(&plant, &cfg)?;
        let (k, l) = (res.k.clone().expect("K"), res.l.clone().expect("L"));
        let e1 = norms::eps_alpha(&synth::closed_loop(&plant, &k, &l, Realization::StateError)?, res.alpha_hat)?;
        let e2 = norms::eps_alpha(&synth::closed_loop(&plant, &k, &l, Realization::EstimateError)?, res.alpha_hat)?;
        eprintln!("beta = {beta:+.3}: alpha_hat = {:.4}, eps = {:.4}", res.alpha_hat, res.eps_norm);
        rows.push(CompareRow {
            beta,
            alpha_hat: res.alpha_hat,
            k: k.iter().copied().collect(),
            l: l.iter().copied().collect(),
            eps_norm: res.eps_norm,
            boundary_flag: res.boundary_flag,
            max_form_gap: res.max_form_gap.unwrap_or(0.0),
            realization_gap: (e1 - e2).abs() / e1.max(f64::MIN_POSITIVE),
        });
    }
    let text = match a.output.format.unwrap_or(Format::Json) {
        Format::Json => to_json(&CompareTable { rows })?,
        Format::Csv => {
            let mut s = String::from("beta,alpha_hat,k1,k2,l1,l2,eps_norm,boundary_flag,max_form_gap,realization_gap\n");
            for r in &rows {
                let nums = [r.beta, r.alpha_hat, r.k[0], r.k[1], r.l[0], r.l[1], r.eps_norm];
                let mut line: Vec<String> = nums.iter().map(|v| fmt_num(*v)).collect();
                line.push(r.boundary_flag.to_string());
                line.push(fmt_num(r.max_form_gap));
                line.push(fmt_num(r.realization_gap));
                s.push_str(&line.join(","));
                s.push('\n');
            }
            s
        }
    };
    emit(&a.output, &text)
}
