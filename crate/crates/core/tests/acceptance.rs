//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails. Tolerances are pinned below.

use std::panic::{self, AssertUnwindSafe};
use std::time::Instant;

use rand::Rng;

use epsctl_core::ellipsoids::{alpha_window, p_alpha};
use epsctl_core::linmat::{self, Matrix, Vector};
use epsctl_core::lmi::{self, BarrierConfig};
use epsctl_core::norms::{analyze, eps_alpha, eps_alpha_traces, series_system, sum_system, AnalysisConfig};
use epsctl_core::plants::{benchmark_plant, illustrative_system, nonconvex_plant};
use epsctl_core::quad;
use epsctl_core::random::{random_matrix, random_of_plant, random_stable_system, rng, TestRng};
use epsctl_core::search::{local_minima, AlphaSearchConfig};
use epsctl_core::simulate::{integrate, invariance_report, worst_case_policy};
use epsctl_core::synth::{self, closed_loop, evaluate_output_feedback, Realization};
use epsctl_core::sysmodel::LtiSystem;
use epsctl_core::Error;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn within(x: f64, target: f64, tol: f64) -> bool {
    (x - target).abs() <= tol
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

/// The 20 random systems shared by criteria 4 and 5.
fn suite_systems() -> Vec<LtiSystem> {
    let mut r = rng(2024);
    (0..20)
        .map(|i| {
            let n = 1 + i % 4;
            let m = 1 + (i / 4) % n.min(2);
            let k = 1 + (i / 2) % n.min(2);
            random_stable_system(&mut r, n, m, k)
        })
        .collect()
}

fn criterion_1() -> Outcome {
    const EPS: f64 = 0.914;
    const OMEGA: f64 = 1.144;
    const TOL: f64 = 5e-3;
    let start = Instant::now();
    let rep = match analyze(&illustrative_system(), &AnalysisConfig::default()) {
        Ok(r) => r,
        Err(e) => return outcome(false, format!("analysis failed: {e}")),
    };
    let secs = start.elapsed().as_secs_f64();
    let g = rep.gains.as_ref().expect("oracles enabled");
    let (omega, circ, circ_p) = (rep.omega.unwrap(), rep.circ.unwrap(), rep.circ_prime.unwrap());
    let pass = secs < 5.0
        && within(rep.eps, EPS, TOL)
        && within(rep.alpha_hat, 0.67, 0.02)
        && within(rep.star, EPS, TOL)
        && within(rep.star_prime, EPS, TOL)
        && [omega, circ, circ_p].iter().all(|&v| within(v, OMEGA, TOL))
        && within(g.peak_to_peak, 5.0 / 6.0, TOL)
        && within(g.integral_to_peak, 1.0, TOL)
        && within(g.impulse_to_peak, 1.0, TOL);
    outcome(
        pass,
        format!(
            "eps={:.5} alpha={:.4} star={:.5} star'={:.5} omega={:.5} circ={:.5} circ'={:.5} p2p={:.5} i2p={:.5} imp2p={:.5} in {:.2}s",
            rep.eps, rep.alpha_hat, rep.star, rep.star_prime, omega, circ, circ_p, g.peak_to_peak, g.integral_to_peak,
            g.impulse_to_peak, secs
        ),
    )
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let cfg = AlphaSearchConfig::synthesis();
    // (β, α̂, tol, K, L, gain tol, ε, ε tol)
    let cases = [
        (-1.0, 0.43, 0.01, [-0.81, -1.85], [-1.85, -0.81], 0.02, 6.62, 0.05),
        (1.0, 0.82, 0.02, [-3.54, -3.28], [-3.28, -3.54], 0.04, 15.3, 0.15),
    ];
    let mut pass = true;
    let mut detail = Vec::new();
    for (beta, alpha, atol, k, l, gtol, eps, etol) in cases {
        let res = match synth::synth_output_feedback(&benchmark_plant(beta), &cfg) {
            Ok(r) => r,
            Err(e) => return outcome(false, format!("beta={beta}: {e}")),
        };
        let (km, lm) = (res.k.unwrap(), res.l.unwrap());
        pass &= within(res.alpha_hat, alpha, atol)
            && within(res.eps_norm, eps, etol)
            && (0..2).all(|i| within(km[(0, i)], k[i], gtol) && within(lm[(i, 0)], l[i], gtol));
        detail.push(format!(
            "beta={beta:+}: alpha={:.4} eps={:.4} K=[{:.4},{:.4}] L=[{:.4};{:.4}]",
            res.alpha_hat,
            res.eps_norm,
            km[(0, 0)],
            km[(0, 1)],
            lm[(0, 0)],
            lm[(1, 0)]
        ));
    }
    let secs = start.elapsed().as_secs_f64();
    pass &= secs < 30.0;
    outcome(pass, format!("{} in {secs:.2}s", detail.join("; ")))
}

fn criterion_3() -> Outcome {
    let cfg = AlphaSearchConfig { grid_points: 400, ..AlphaSearchConfig::synthesis() };
    let res = match synth::synth_state_feedback(&nonconvex_plant(), &cfg) {
        Ok(r) => r,
        Err(e) => return outcome(false, e.to_string()),
    };
    let curve: Vec<(f64, f64)> = res.curve.iter().map(|p| (p[0], p[1])).collect();
    let minima: Vec<f64> = local_minima(&curve).iter().map(|&i| curve[i].0).collect();
    let pass = minima.len() == 2 && within(minima[0], 0.09, 0.02) && within(minima[1], 2.06, 0.1);
    outcome(pass, format!("{} grid points, local minima at {minima:.4?}", curve.len()))
}

fn criterion_4() -> Outcome {
    const TRACE_TOL: f64 = 1e-9;
    const OMEGA_TOL: f64 = 1e-3;
    let mut worst_trace: f64 = 0.0;
    let mut worst_omega: f64 = 0.0;
    for (i, sys) in suite_systems().iter().enumerate() {
        let w = alpha_window(sys).unwrap();
        for j in 1..=10 {
            let alpha = w * j as f64 / 11.0;
            match eps_alpha_traces(sys, alpha) {
                Ok((tp, tq)) => worst_trace = worst_trace.max(rel(tp, tq)),
                Err(e) => return outcome(false, format!("system {i}, alpha={alpha}: {e}")),
            }
        }
        match lmi::omega_norm(sys, &BarrierConfig::default()) {
            Ok(o) => worst_omega = worst_omega.max(rel(o.p_side.objective.sqrt(), o.q_side.objective.sqrt())),
            Err(e) => return outcome(false, format!("system {i}: {e}")),
        }
    }
    outcome(
        worst_trace <= TRACE_TOL && worst_omega <= OMEGA_TOL,
        format!("max trace gap {worst_trace:.2e} (tol {TRACE_TOL:e}), max omega side gap {worst_omega:.2e} (tol {OMEGA_TOL:e})"),
    )
}

fn criterion_5() -> Outcome {
    const SLACK: f64 = 1e-3;
    let mut worst = f64::NEG_INFINITY;
    let mut failures = Vec::new();
    for (i, sys) in suite_systems().iter().enumerate() {
        let rep = match analyze(sys, &AnalysisConfig::default()) {
            Ok(r) => r,
            Err(e) => return outcome(false, format!("system {i}: {e}")),
        };
        let g = rep.gains.as_ref().unwrap();
        let omega = rep.omega.unwrap();
        let chains = [
            ("peak_to_peak <= star", g.peak_to_peak, rep.star),
            ("impulse_to_integral <= star_prime", g.impulse_to_integral, rep.star_prime),
            ("integral_to_peak <= omega", g.integral_to_peak, omega),
            ("impulse_to_peak <= omega", g.impulse_to_peak, omega),
        ];
        for (name, lhs, rhs) in chains {
            worst = worst.max(lhs - rhs);
            if lhs > rhs + SLACK {
                failures.push(format!("system {i}: {name} ({lhs:.6} > {rhs:.6})"));
            }
        }
    }
    outcome(
        failures.is_empty(),
        if failures.is_empty() {
            format!("80 chain checks, max (gain - bound) = {worst:.3e}, slack {SLACK:e}")
        } else {
            failures.join("; ")
        },
    )
}

fn orthogonal_pair(r: &mut TestRng, n1: usize, n2: usize, m: usize) -> (LtiSystem, LtiSystem) {
    let s1 = random_stable_system(r, n1, m.min(n1), 1);
    let s2 = random_stable_system(r, n2, m.min(n2), 1);
    let m = s1.m().min(s2.m());
    let pad = |s: &LtiSystem, top: bool| {
        let mut c = Matrix::zeros(2, s.n());
        c.row_mut(if top { 0 } else { 1 }).copy_from(&s.c.row(0));
        LtiSystem::realization(s.a.clone(), s.b.columns(0, m).into_owned(), c).unwrap()
    };
    (pad(&s1, true), pad(&s2, false))
}

fn criterion_6() -> Outcome {
    const EXP_TOL: f64 = 1e-8;
    const SUM_TOL: f64 = 1e-9;
    const CASCADE_TOL: f64 = 1e-8;
    let mut r = rng(606);

    // Exponential bound on Q̃ and, through the dual, on P̃.
    let mut l1: f64 = f64::NEG_INFINITY;
    let mut systems = vec![illustrative_system()];
    for n in 1..=3 {
        systems.push(random_stable_system(&mut r, n, 1, 1));
    }
    for sys in &systems {
        let horizon = quad::default_horizon(&sys.a).unwrap();
        let times: Vec<f64> = (0..50).map(|i| horizon * i as f64 / 49.0).collect();
        let q = lmi::min_trace_q(sys, &BarrierConfig::default()).unwrap().witness;
        let p = lmi::min_trace_p(sys, &BarrierConfig::default()).unwrap().witness;
        l1 = l1.max(lmi::exp_bound_violation(sys, &q, &times).unwrap());
        l1 = l1.max(lmi::exp_bound_violation(&sys.dual(), &p, &times).unwrap());
    }

    // Additivity of ε(α)² for sums with orthogonal output channels.
    let mut l2: f64 = 0.0;
    for i in 0..10 {
        let (s1, s2) = orthogonal_pair(&mut r, 1 + i % 3, 1 + (i + 1) % 3, 1 + i % 2);
        let sum = sum_system(&s1, &s2).unwrap();
        let w = alpha_window(&s1).unwrap().min(alpha_window(&s2).unwrap());
        for j in 1..=5 {
            let alpha = w * j as f64 / 6.0;
            let lhs = eps_alpha(&sum, alpha).unwrap().powi(2);
            let rhs = eps_alpha(&s1, alpha).unwrap().powi(2) + eps_alpha(&s2, alpha).unwrap().powi(2);
            l2 = l2.max(rel(lhs, rhs));
        }
    }

    // Cascade identities with synthesized K and L.
    let mut l3: f64 = 0.0;
    for i in 0..5 {
        let n1 = 1 + i % 3;
        let n2 = 1 + (i + 2) % 3;

        // (i) S2* S1 against S1' = (A1, B1, D2 C1).
        let s1 = random_stable_system(&mut r, n1, 1, 1);
        let p2 = random_of_plant(&mut r, n2);
        let alpha = 0.5 * alpha_window(&s1).unwrap();
        let q = synth::ric_q_data(&p2.a, &p2.b2, &p2.c2, &p2.d2, alpha).unwrap();
        let k = synth::sf_gain(&q, &p2.state_feedback_part()).unwrap();
        let s2_star =
            LtiSystem::realization(&p2.a + &p2.b2 * &k, p2.b2.clone(), &p2.c2 + &p2.d2 * &k).unwrap();
        let product = series_system(&s2_star, Some(&p2.d2), &s1, None).unwrap();
        let s1_prime = LtiSystem::realization(s1.a.clone(), s1.b.clone(), &p2.d2 * &s1.c).unwrap();
        l3 = l3.max(rel(eps_alpha(&product, alpha).unwrap(), eps_alpha(&s1_prime, alpha).unwrap()));

        // (ii) S2 S1* against S2' = (A2, B2 D1, C2).
        let p1 = random_of_plant(&mut r, n1);
        let s2 = random_stable_system(&mut r, n2, 1, 1);
        let alpha = 0.5 * alpha_window(&s2).unwrap();
        let p = synth::ric_p_data(&p1.a, &p1.b1, &p1.c1, &p1.d1, alpha).unwrap();
        let l = synth::filter_gain(&p, &p1.filter_part()).unwrap();
        let s1_star = LtiSystem::realization(&p1.a + &l * &p1.c1, &p1.b1 + &l * &p1.d1, p1.c1.clone()).unwrap();
        let product = series_system(&s2, None, &s1_star, Some(&p1.d1)).unwrap();
        let s2_prime = LtiSystem::realization(s2.a.clone(), &s2.b * &p1.d1, s2.c.clone()).unwrap();
        l3 = l3.max(rel(eps_alpha(&product, alpha).unwrap(), eps_alpha(&s2_prime, alpha).unwrap()));
    }

    outcome(
        l1 <= EXP_TOL && l2 <= SUM_TOL && l3 <= CASCADE_TOL,
        format!(
            "exp bound max violation {l1:.2e} (tol {EXP_TOL:e}); sum additivity max gap {l2:.2e} (tol {SUM_TOL:e}); cascade identities max gap {l3:.2e} (tol {CASCADE_TOL:e})"
        ),
    )
}

fn criterion_7() -> Outcome {
    const TOL: f64 = 1e-8;
    let cfg = AlphaSearchConfig::synthesis();
    let mut form_gap: f64 = 0.0;
    let mut real_gap: f64 = 0.0;
    for beta in [-1.0, 0.0, 1.0] {
        let plant = benchmark_plant(beta);
        let res = match synth::synth_output_feedback(&plant, &cfg) {
            Ok(r) => r,
            Err(e) => return outcome(false, format!("beta={beta}: {e}")),
        };
        form_gap = form_gap.max(res.max_form_gap.unwrap());
        let (k, l) = (res.k.unwrap(), res.l.unwrap());
        let e1 = eps_alpha(&closed_loop(&plant, &k, &l, Realization::StateError).unwrap(), res.alpha_hat).unwrap();
        let e2 = eps_alpha(&closed_loop(&plant, &k, &l, Realization::EstimateError).unwrap(), res.alpha_hat).unwrap();
        real_gap = real_gap.max(rel(e1, e2));
        real_gap = real_gap.max(rel(e1, res.eps_norm));
    }
    outcome(
        form_gap <= TOL && real_gap <= TOL,
        format!("max two-form gap {form_gap:.2e}, max realization gap {real_gap:.2e} (tol {TOL:e})"),
    )
}

fn criterion_8() -> Outcome {
    const TOL: f64 = 1e-6;
    const SCALE: f64 = 0.01;
    let plant = benchmark_plant(1.0);
    let res = synth::synth_output_feedback(&plant, &AlphaSearchConfig::synthesis()).unwrap();
    let alpha = res.alpha_hat;
    let ev = evaluate_output_feedback(&plant, alpha).unwrap();
    let measure = |k: &Matrix, l: &Matrix| -> f64 {
        match closed_loop(&plant, k, l, Realization::StateError).and_then(|s| eps_alpha(&s, alpha)) {
            Ok(v) => v,
            Err(Error::AlphaOutOfRange { .. }) | Err(Error::SolverDegenerate(_)) => f64::INFINITY,
            Err(e) => panic!("{e}"),
        }
    };
    let base = measure(&ev.k, &ev.l);
    let mut r = rng(808);
    let mut worst_drop = f64::NEG_INFINITY;
    for _ in 0..50 {
        let k = ev.k.map(|v| v * (1.0 + SCALE * r.random_range(-1.0..1.0)));
        let l = ev.l.map(|v| v * (1.0 + SCALE * r.random_range(-1.0..1.0)));
        worst_drop = worst_drop.max(base - measure(&k, &l));
    }
    outcome(
        worst_drop <= TOL,
        format!("alpha={alpha:.4}, base eps(alpha)={base:.6}, largest reduction over 50 probes {worst_drop:.3e} (tol {TOL:e})"),
    )
}

fn criterion_9() -> Outcome {
    const MAX_V_TOL: f64 = 5e-3;
    const RATIO: f64 = 8.0;
    // Below this the excess is roundoff, not discretization.
    const FLOOR: f64 = 1e-12;
    let sys = illustrative_system();
    let e = p_alpha(&sys, 0.67).unwrap();
    let dt = epsctl_core::simulate::default_dt(&sys).unwrap();
    let run = |dt: f64| -> f64 {
        let mut worst = f64::NEG_INFINITY;
        for k in 0..16 {
            let th = k as f64 * std::f64::consts::PI / 8.0;
            let x0 = e.boundary_point(&Vector::from_vec(vec![th.cos(), th.sin()])).unwrap();
            let mut policy = worst_case_policy(&e, &sys).unwrap();
            let traj = integrate(&sys, &mut policy, &x0, 30.0, dt, Some(&e)).unwrap();
            worst = worst.max(invariance_report(&traj, &e).unwrap().max_v);
        }
        worst
    };
    let (v1, v2) = (run(dt), run(dt / 2.0));
    let (x1, x2) = ((v1 - 1.0).max(0.0), (v2 - 1.0).max(0.0));
    let halving_ok = x1 <= FLOOR || x1 / x2.max(f64::MIN_POSITIVE) >= RATIO;
    outcome(
        v1 <= 1.0 + MAX_V_TOL && v2 <= 1.0 + MAX_V_TOL && halving_ok,
        format!(
            "max_v={v1:.12} at dt={dt:e}, {v2:.12} at dt/2; excess {x1:.2e} -> {x2:.2e} ({})",
            if x1 <= FLOOR { "at roundoff floor, not discretization-dominated" } else { "ratio checked" }
        ),
    )
}

fn criterion_10() -> Outcome {
    const TOL: f64 = 1e-9;
    let mut r = rng(1010);
    let mut worst_ric: f64 = 0.0;
    let mut worst_lyap: f64 = 0.0;
    let mut max_iter = 0;
    for i in 0..100 {
        let n = 1 + i % 8;
        let p = random_of_plant(&mut r, n);
        let alpha = r.random_range(0.05..5.0);
        let sol = match synth::ric_q_data(&p.a, &p.b2, &p.c2, &p.d2, alpha) {
            Ok(s) => s,
            Err(e) => return outcome(false, format!("instance {i}: {e}")),
        };
        max_iter = max_iter.max(sol.iterations);
        // Independent residual of XA + AᵀX + αX − αXB(DᵀD)⁻¹BᵀX + CᵀC/α.
        let x = &sol.x;
        let rinv = (p.d2.transpose() * &p.d2).try_inverse().unwrap();
        let xa = x * &p.a;
        let quad_term = x * &p.b2 * rinv * p.b2.transpose() * x * alpha;
        let h = p.c2.transpose() * &p.c2 / alpha;
        let res = &xa + xa.transpose() + x * alpha - &quad_term + &h;
        let scale = 2.0 * xa.norm() + alpha * x.norm() + quad_term.norm() + h.norm();
        worst_ric = worst_ric.max(res.norm() / scale);

        let a = random_matrix(&mut r, n, n);
        let a = &a - Matrix::identity(n, n) * (linmat::spectral_abscissa(&a).unwrap() + 0.3);
        let w = random_matrix(&mut r, n, n);
        let w = &w * w.transpose();
        let xl = linmat::lyap_solve(&a, &w).unwrap();
        let scale = 2.0 * (&a * &xl).norm() + w.norm();
        worst_lyap = worst_lyap.max(linmat::lyap_residual(&a, &xl, &w) / scale);
    }
    outcome(
        worst_ric <= TOL && worst_lyap <= TOL && max_iter <= synth::MAX_NEWTON_ITERATIONS,
        format!(
            "100 instances, n <= 8: max Riccati residual {worst_ric:.2e}, max Lyapunov residual {worst_lyap:.2e} (tol {TOL:e}), max Newton steps {max_iter}"
        ),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("reference system norms and gains", criterion_1),
        ("benchmark table reproduction", criterion_2),
        ("non-convex alpha curve", criterion_3),
        ("duality identities", criterion_4),
        ("gain-versus-norm chains", criterion_5),
        ("exponential bound, sum and cascade identities", criterion_6),
        ("two trace forms and realizations", criterion_7),
        ("optimality probes", criterion_8),
        ("invariance simulation", criterion_9),
        ("Riccati/Lyapunov solver health", criterion_10),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let out = panic::catch_unwind(AssertUnwindSafe(f))
            .unwrap_or_else(|p| {
                let msg = p
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                outcome(false, format!("panicked: {msg}"))
            });
        if !out.pass {
            failed += 1;
        }
        println!(
            "criterion {:>2} [{}] {name}: {} ({:.2}s)",
            i + 1,
            if out.pass { "PASS" } else { "FAIL" },
            out.detail,
            start.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
