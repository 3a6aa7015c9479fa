//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails.

use std::f64::consts::{FRAC_PI_4, LN_10, SQRT_2};
use std::process::ExitCode;
use std::time::Instant;

use frictionless::dynamics::{
    build_multiswitch, first_integral_x, first_integral_y, propagate, sample_with_control, PropagationOptions,
    ReducedState,
};
use frictionless::elliptic::{ellip_f, ellip_pi};
use frictionless::gpe::{thomas_fermi, validate, GpeParams, ValidationOptions};
use frictionless::quadrature::integrate;
use frictionless::schedules::{minimal_feasible_duration, reconstruct_control, DurationSearch, ScaleSchedule, ScaleShape};
use frictionless::synthesis::{
    solve, switch_velocity, switching_point, t1_closed_form, t1_quadrature, t2_closed_form, t2_quadrature,
};
use frictionless::{Error, Execution};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const GAMMAS: [f64; 9] = [1.1, 1.5, 2.0, 3.0, 5.0, 10.0, 20.0, 50.0, 100.0];

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn lift<T>(r: Result<T, Error>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn transit_times() -> Outcome {
    let mut worst: f64 = 0.0;
    for g in GAMMAS {
        let d1 = (lift(t1_closed_form(g))? - lift(t1_quadrature(g))?).abs();
        let d2 = (lift(t2_closed_form(g))? - lift(t2_quadrature(g))?).abs();
        worst = worst.max(d1).max(d2);
    }
    check(worst <= 1e-8, format!("max |closed form - quadrature| = {worst:.3e} (limit 1e-8)"))
}

fn endpoint_reachability() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut min_x1 = f64::INFINITY;
    let mut min_x2 = f64::INFINITY;
    for g in GAMMAS {
        let syn = lift(solve(g))?;
        let traj = lift(propagate(ReducedState::initial(), &syn.schedule, 1e-10))?;
        worst = worst.max(traj.final_state().distance(&ReducedState::new(g, 0.0)));
        min_x1 = min_x1.min(traj.min_x1());
        min_x2 = min_x2.min(traj.min_x2());
    }
    // The terminal x2 is exactly zero; allow integration noise around it.
    check(
        worst <= 1e-6 && min_x1 > 0.0 && min_x2 >= -1e-9,
        format!("max endpoint error {worst:.3e} (limit 1e-6), min x1 {min_x1:.3}, min x2 {min_x2:.1e}"),
    )
}

fn switching_geometry() -> Outcome {
    let b1 = lift(switching_point(1.0))?;
    let b2 = lift(switching_point(2.0))?;
    let mut worst: f64 = 0.0;
    for g in GAMMAS.iter().copied().chain([1e3, 1e4]) {
        let s = ReducedState::new(lift(switching_point(g))?, lift(switch_velocity(g))?);
        // Residuals relative to the largest term of each integral.
        let scale = s.x1 * s.x1 + s.x2 * s.x2 + 2.0 / s.x1;
        let rx = (lift(first_integral_x(s))? - 1.0).abs() / scale;
        let ry = (lift(first_integral_y(s, g))? - (g * g + 2.0 / g)).abs() / scale;
        worst = worst.max(rx).max(ry);
    }
    let ratio = lift(switching_point(1e3))? / (1e3 / SQRT_2);
    check(
        b1 == 1.0 && (b2 - SQRT_2).abs() <= 1e-14 && worst <= 1e-12 && (ratio - 1.0).abs() <= 2e-3,
        format!(
            "beta(1) = {b1}, |beta(2) - sqrt2| = {:.1e}, first-integral residual {worst:.1e}, beta(1e3)/(1e3/sqrt2) = {ratio:.6}",
            (b2 - SQRT_2).abs()
        ),
    )
}

fn asymptotics() -> Outcome {
    let t2 = lift(t2_closed_form(1e3))?;
    let t_hi = lift(solve(1e3))?.result.total;
    let t_lo = lift(solve(1e2))?.result.total;
    let grid: Vec<f64> = (0..=16).map(|i| 10f64.powf(2.0 + 2.0 * i as f64 / 16.0)).collect();
    let mut excess = Vec::new();
    for &g in &grid {
        excess.push(lift(solve(g))?.result.total - g.ln());
    }
    let steps: Vec<f64> = excess.windows(2).map(|w| w[1] - w[0]).collect();
    let monotone = steps.iter().all(|s| *s <= 0.0) || steps.iter().all(|s| *s >= 0.0);
    let shrinking = steps.windows(2).all(|w| w[1].abs() <= w[0].abs());
    let t2_err = (t2 / FRAC_PI_4 - 1.0).abs();
    let ln_err = ((t_hi - t_lo) / LN_10 - 1.0).abs();
    check(
        t2_err <= 0.02 && ln_err <= 0.05 && monotone && shrinking,
        format!(
            "T2(1e3)/(pi/4) - 1 = {t2_err:.2e}, (T(1e3)-T(1e2))/ln10 - 1 = {ln_err:.2e}, T - ln g: {:.9} -> {:.9}, last step {:.1e}",
            excess[0],
            excess[excess.len() - 1],
            steps[steps.len() - 1]
        ),
    )
}

/// Random strictly increasing interior loci with spacing at least `gap`,
/// kept only if the resulting multi-switch path is feasible.
fn random_multiswitch(rng: &mut ChaCha8Rng, gamma: f64) -> Vec<f64> {
    let gap = 1e-3 * (gamma - 1.0);
    loop {
        let pairs = rng.gen_range(1..=3);
        let mut pts: Vec<f64> = (0..2 * pairs).map(|_| rng.gen_range(1.0..gamma)).collect();
        pts.sort_by(f64::total_cmp);
        let spaced = pts.first().is_some_and(|p| p - 1.0 >= gap) && pts.windows(2).all(|w| w[1] - w[0] >= gap);
        if spaced && build_multiswitch(gamma, &pts).is_ok() {
            return pts;
        }
    }
}

fn optimality_dominance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_2024);
    let mut min_excess = f64::INFINITY;
    let mut worst_endpoint: f64 = 0.0;
    let mut count = 0;
    for g in [2.0, 5.0, 10.0] {
        let optimum = lift(solve(g))?.result.total;
        let candidates: Vec<Vec<f64>> = (0..50).map(|_| random_multiswitch(&mut rng, g)).collect();
        let results = Execution::default().map(&candidates, |pts| -> Result<(f64, f64), Error> {
            let sched = build_multiswitch(g, pts)?;
            let end = propagate(ReducedState::initial(), &sched, 1e-10)?.final_state();
            Ok((sched.total_duration(), end.distance(&ReducedState::new(g, 0.0))))
        });
        for r in results {
            let (total, endpoint) = lift(r)?;
            min_excess = min_excess.min(total - optimum);
            worst_endpoint = worst_endpoint.max(endpoint);
            count += 1;
        }
    }
    check(
        count == 150 && min_excess > 1e-6 && worst_endpoint <= 1e-6,
        format!("{count} schedules, min excess over T {min_excess:.3e} (must exceed 1e-6), max endpoint error {worst_endpoint:.1e}"),
    )
}

fn shapes(g: f64) -> [ScaleShape; 2] {
    [ScaleShape::Polynomial { gamma: g }, ScaleShape::ExponentialPolynomial { gamma: g }]
}

fn reference_dominance() -> Outcome {
    let mut min_ratio = f64::INFINITY;
    let mut worst_boundary: f64 = 0.0;
    for g in [1.5, 2.0, 5.0, 10.0] {
        let optimum = lift(solve(g))?.result.total;
        for shape in shapes(g) {
            let d = lift(minimal_feasible_duration(&shape, &DurationSearch::default(), Execution::default()))?.duration;
            min_ratio = min_ratio.min(d / optimum);
            let c = lift(reconstruct_control(&lift(ScaleSchedule::new(shape, d))?, 4096))?;
            worst_boundary = worst_boundary.max((c.u[0] - 1.0).abs()).max((c.u[c.u.len() - 1] - g.powi(-3)).abs());
        }
    }
    check(
        min_ratio > 1.0 && worst_boundary <= 1e-10,
        format!("min reference/optimal duration ratio {min_ratio:.4}, max boundary error of u {worst_boundary:.1e}"),
    )
}

fn round_trip() -> Outcome {
    let mut worst: f64 = 0.0;
    for g in [1.5, 2.0, 5.0, 10.0] {
        let shape = ScaleShape::Polynomial { gamma: g };
        let d = lift(minimal_feasible_duration(&shape, &DurationSearch::default(), Execution::default()))?.duration;
        let sch = lift(ScaleSchedule::new(shape, d))?;
        let sampled = lift(reconstruct_control(&sch, 400))?;
        let states = lift(sample_with_control(
            ReducedState::initial(),
            |t| sch.control_at(t).unwrap_or(f64::NAN),
            &[],
            &sampled.t,
            &PropagationOptions::with_tol(1e-11),
        ))?;
        for (s, b) in states.iter().zip(&sampled.b) {
            worst = worst.max((s.x1 - b).abs());
        }
    }
    check(worst <= 1e-6, format!("max |x1(t) - b_p(t)| = {worst:.2e} (limit 1e-6)"))
}

fn quad_f(z: f64, m: f64) -> Result<f64, String> {
    lift(integrate(|t: f64| 1.0 / (1.0 - m * t.sin().powi(2)).sqrt(), 0.0, z.asin(), 1e-15, 1e-14)).map(|e| e.value)
}

fn quad_pi(n: f64, z: f64, m: f64) -> Result<f64, String> {
    lift(integrate(
        |t: f64| {
            let s2 = t.sin().powi(2);
            1.0 / ((1.0 - n * s2) * (1.0 - m * s2).sqrt())
        },
        0.0,
        z.asin(),
        1e-15,
        1e-14,
    ))
    .map(|e| e.value)
}

fn elliptic_kernels() -> Outcome {
    // 100 points over z in (0, 1), m in [-3, 0.95], n in [-4, 0.9] with the
    // characteristic kept off its pole.
    let mut worst: f64 = 0.0;
    let mut worst_pi0: f64 = 0.0;
    let mut negative_n = 0;
    for i in 0..100 {
        let a = (i as f64 + 0.5) / 100.0;
        let z = 0.02 + 0.96 * ((7.0 * a) % 1.0);
        let m = -3.0 + 3.95 * ((3.0 * a + 0.31) % 1.0);
        let n = -4.0 + 4.9 * ((11.0 * a + 0.17) % 1.0);
        if n < 0.0 {
            negative_n += 1;
        }
        let f = lift(ellip_f(z, m))?;
        let p = lift(ellip_pi(n, z, m))?;
        worst = worst.max((f - quad_f(z, m)?).abs()).max((p - quad_pi(n, z, m)?).abs());
        worst_pi0 = worst_pi0.max((lift(ellip_pi(0.0, z, m))? - f).abs());
    }
    check(
        worst <= 1e-10 && worst_pi0 <= 1e-12 && negative_n > 0,
        format!("max |kernel - quadrature| = {worst:.1e}, max |Pi(0) - F| = {worst_pi0:.1e}, {negative_n}/100 negative n"),
    )
}

fn gpe_validation() -> Outcome {
    let params = GpeParams::default();
    let syn = lift(solve(2.0))?;
    let r = lift(validate(&syn.schedule, 2.0, &params, &ValidationOptions::default(), Execution::default()))?;
    let conv = r.dt_convergence.unwrap_or(f64::INFINITY);
    check(
        params.grid_points == 2048 && r.tf_ratio >= 20.0 && r.fidelity >= 0.99 && r.norm_drift <= 1e-8 && conv < 1e-4,
        format!(
            "fidelity {:.6} (ground state {:.6}), norm drift {:.1e}, dt-halving change {:.1e}, TF ratio {:.1}",
            r.fidelity, r.fidelity_ground_state, r.norm_drift, conv, r.tf_ratio
        ),
    )
}

fn thomas_fermi_identities() -> Outcome {
    let p = GpeParams::default();
    let mut worst_mu: f64 = 0.0;
    let mut worst_profile: f64 = 0.0;
    for g in [1.5f64, 2.0, 5.0, 10.0] {
        let w_t = g.powf(-1.5);
        let tf0 = lift(thomas_fermi(1.0, &p))?;
        let tft = lift(thomas_fermi(w_t, &p))?;
        worst_mu = worst_mu.max((tf0.mu / tft.mu - (1.0 / w_t).powf(2.0 / 3.0)).abs());
        for i in 0..=1000 {
            let x = -1.2 * tft.radius + 2.4 * tft.radius * i as f64 / 1000.0;
            let lhs = w_t.cbrt() * tf0.amplitude(w_t.powf(2.0 / 3.0) * x);
            worst_profile = worst_profile.max((lhs - tft.amplitude(x)).abs());
        }
    }
    check(
        worst_mu <= 1e-12 && worst_profile <= 1e-12,
        format!("mu scaling error {worst_mu:.1e}, rescaled profile error {worst_profile:.1e}"),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("closed-form transit times match quadrature", transit_times),
        ("optimal schedule reaches (gamma, 0)", endpoint_reachability),
        ("switching point geometry", switching_geometry),
        ("large-gamma asymptotics", asymptotics),
        ("multi-switch schedules are slower than XY", optimality_dominance),
        ("reference schedules are slower than XY", reference_dominance),
        ("reference control round trip", round_trip),
        ("elliptic kernels match quadrature", elliptic_kernels),
        ("Gross-Pitaevskii validation for gamma = 2", gpe_validation),
        ("Thomas-Fermi scaling identities", thomas_fermi_identities),
    ];
    let mut failures = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = f();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS [{:>2}] {name}: {detail} ({secs:.2}s)", i + 1),
            Err(detail) => {
                failures += 1;
                println!("FAIL [{:>2}] {name}: {detail} ({secs:.2}s)", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failures, criteria.len());
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
