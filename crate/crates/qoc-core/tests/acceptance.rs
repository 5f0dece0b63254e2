//! Acceptance gate for the pulse-design stack.
//!
//! Every test here checks one bar the project must clear end to end —
//! attainment of the ideal yield, monotone trends across dissipation and
//! fluence, tightness of the fluence controller, agreement between frames —
//! and prints a single `criterion <n>: PASS|FAIL - <detail>` line, so a run
//! with `--nocapture` reads as a checklist. Every tolerance is written
//! literally at its assertion site.
//!
//! The expensive optimization runs are shared through one lazily built
//! fixture, so the gate costs a single pass over the scenario set no matter
//! how the tests are scheduled. Build and query helpers panic with the sweep
//! point's label when a run is missing, which turns a broken fixture into an
//! immediate, readable failure of every dependent criterion.
//!
//! ```text
//! cargo test -p qoc-core --test acceptance -- --nocapture --test-threads=1
//! ```

use std::sync::LazyLock;
use std::time::Instant;

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qoc_core::dynamics::{
    propagate_costate, propagate_density, relaxation_adjoint_apply, relaxation_apply,
    ControlField, DensityState, Frame, SourceTrack, SystemSpec, TimeGrid,
};
use qoc_core::experiments::{builtin, run_scenario, PointOutcome, Scenario, ScenarioResult};
use qoc_core::mat2::Mat2;
use qoc_core::objectives::{
    evaluate_functionals, purity, purity_rate, window_integral, ControlWindow, PenaltyWeight,
    TargetSpec,
};
use qoc_core::optimizer::{
    objective_gradient, optimize, OptimizationRun, OptimizerConfig, TerminationReason,
};

// ---------------------------------------------------------------------------
// Shared fixture
// ---------------------------------------------------------------------------

struct Fixture {
    /// Type-I runs over dephasing {0..0.5} x fluence {0.1, 0.2, 0.3}.
    grid: ScenarioResult,
    /// Type-II runs over dephasing {0..0.5} at fluence 0.2, each with a
    /// type-I cross-evaluation row.
    type2: ScenarioResult,
    /// Population-decay sweep at dephasing 0.2 with no-decay reference rows.
    gpop: ScenarioResult,
    /// Two-window fluence sweep at dephasing 0.5.
    twowin: ScenarioResult,
    /// Penalty-free saturation run at dephasing 0.5.
    pfree: ScenarioResult,
    /// Penalized runs over amplitudes {0.1, 0.5, 2.0, 5.0} at dephasing 0.2.
    ladder: ScenarioResult,
    /// Standalone dissipation-free run at fluence 0.2, timed in isolation.
    lone: OptimizationRun,
    lone_secs: f64,
    /// Rotating-frame counterpart of the dephasing-0.1 run at fluence 0.2.
    rwa: OptimizationRun,
}

fn scenario(name: &str) -> Scenario {
    builtin(name).unwrap_or_else(|| panic!("builtin scenario '{name}' missing"))
}

fn run_all(s: &Scenario) -> ScenarioResult {
    run_scenario(s).unwrap_or_else(|e| panic!("scenario '{}' failed to run: {e}", s.name))
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * (1.0 + b.abs())
}

/// The completed run of an outcome, or a panic naming the failed point.
fn run_of(o: &PointOutcome) -> &OptimizationRun {
    if let Some(err) = &o.error {
        panic!("sweep point '{}' failed: {err}", o.point.label);
    }
    o.run
        .as_ref()
        .unwrap_or_else(|| panic!("sweep point '{}' produced no run", o.point.label))
}

impl Fixture {
    fn build() -> Fixture {
        let grid = run_all(&scenario("fig3"));

        let mut t2 = scenario("fig7");
        t2.sweep.gamma_deph = Some(vec![0.0, 0.05, 0.1, 0.2, 0.3, 0.5]);
        let type2 = run_all(&t2);

        let gpop = run_all(&scenario("fig5"));
        let twowin = run_all(&scenario("fig12"));
        let pfree = run_all(&scenario("fig4"));

        let mut lad = scenario("fig10");
        lad.sweep.a0 = Some(vec![0.1, 0.5, 2.0, 5.0]);
        let ladder = run_all(&lad);

        // Dissipation-free point, run on its own so the wall time measured is
        // that single optimization and nothing else.
        let fig1 = scenario("fig1");
        let points = fig1.sweep_points();
        let p0 = points
            .iter()
            .find(|p| p.gamma_deph == 0.0)
            .expect("dissipation-free point");
        let problem = fig1.problem_for(p0);
        let config = fig1
            .optimizer_config_for(p0)
            .expect("config for the dissipation-free point");
        let started = Instant::now();
        let lone = optimize(&problem, &config).expect("dissipation-free run");
        let lone_secs = started.elapsed().as_secs_f64();

        // Rotating-frame twin of the dephasing-0.1 run. Its equilibrium
        // penalty amplitude sits within a few percent of the lab one, and at
        // this dephasing the target fluence is close to saturation, where the
        // fluence barely responds to the amplitude and every decade of
        // amplitude walk costs thousands of clamped controller steps — so
        // start exactly at the lab-calibrated value (itself backed off a few
        // percent below equilibrium) rather than farther below.
        let p1 = points
            .iter()
            .find(|p| close(p.gamma_deph, 0.1))
            .expect("dephasing-0.1 point");
        let mut rwa_problem = fig1.problem_for(p1);
        rwa_problem.system.frame = Frame::RotatingRwa;
        let lab_a0 = fig1.resolved_a0(p1).expect("calibrated amplitude");
        let rwa_config = OptimizerConfig::fluence_targeted(0.2, lab_a0);
        let rwa = optimize(&rwa_problem, &rwa_config).expect("rotating-frame run");

        Fixture {
            grid,
            type2,
            gpop,
            twowin,
            pfree,
            ladder,
            lone,
            lone_secs,
            rwa,
        }
    }

    fn grid_run(&self, gd: f64, f0: f64) -> &OptimizationRun {
        let o = self
            .grid
            .outcomes
            .iter()
            .find(|o| close(o.point.gamma_deph, gd) && close(o.point.f0.unwrap_or(f64::NAN), f0))
            .unwrap_or_else(|| panic!("no grid point at gamma_deph {gd}, f0 {f0}"));
        run_of(o)
    }

    fn type2_outcome(&self, gd: f64) -> &PointOutcome {
        self.type2
            .outcomes
            .iter()
            .find(|o| close(o.point.gamma_deph, gd))
            .unwrap_or_else(|| panic!("no type-II point at gamma_deph {gd}"))
    }

    fn twowin_outcome(&self, f0: f64) -> &PointOutcome {
        self.twowin
            .outcomes
            .iter()
            .find(|o| close(o.point.f0.unwrap_or(f64::NAN), f0))
            .unwrap_or_else(|| panic!("no two-window point at f0 {f0}"))
    }
}

static FIX: LazyLock<Fixture> = LazyLock::new(Fixture::build);

/// Prints the per-criterion checklist line, then enforces it.
fn report(label: &str, pass: bool, detail: &str) {
    println!(
        "criterion {label}: {} - {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "criterion {label}: {detail}");
}

// ---------------------------------------------------------------------------
// Criteria
// ---------------------------------------------------------------------------

#[test]
fn criterion_01_dissipation_free_run_reaches_the_ideal_yield() {
    let f = &*FIX;
    let yield_i = f.lone.report.functional;
    let pass = yield_i >= 14.985 && f.lone_secs < 300.0;
    // Context for the expected miss: with the pi/2 rotation costing
    // (1/2) Int env^2 dt of the 0.2 budget, the creation transient must
    // overlap the window's rising edge, and the variational optimum over all
    // rotation profiles (Euler-Lagrange separatrix, solved independently)
    // caps the yield at 14.96897. The optimizer reproduces that ceiling to
    // six figures from unrelated seeds, so the floor below tests the model's
    // budget arithmetic, not optimizer quality.
    report(
        "1",
        pass,
        &format!(
            "type-I yield {yield_i:.4} (floor 14.985 = 0.999 x 15) with no dissipation \
             at fluence 0.2; run took {:.1} s (limit 300 s); variational ceiling at \
             this fluence is 14.96897",
            f.lone_secs
        ),
    );
}

#[test]
fn criterion_02_window_area_sets_one_ideal_for_both_functionals() {
    let grid = TimeGrid::default();
    let window = ControlWindow {
        edges: vec![5.0, 20.0],
        alpha: 3.0,
    };
    let area = window_integral(&window, &grid);

    let sys = SystemSpec::default();
    let field = ControlField::zeros(Frame::LabExact, &grid);
    let traj = propagate_density(&sys, &grid, &field, DensityState::ground()).unwrap();
    let pen = PenaltyWeight::new(1.0);
    let ideal_1 = evaluate_functionals(&sys, &grid, &field, &traj, &TargetSpec::type1(), &window, &pen)
        .unwrap()
        .ideal;
    let ideal_2 = evaluate_functionals(&sys, &grid, &field, &traj, &TargetSpec::type2(), &window, &pen)
        .unwrap()
        .ideal;

    let pass = (area - 15.0).abs() <= 1e-3
        && (ideal_1 - area).abs() <= 1e-12
        && (ideal_2 - area).abs() <= 1e-12;
    report(
        "2",
        pass,
        &format!(
            "window area {area:.6} matches 15.000 within 1e-3 and both functionals \
             report it as the ideal yield (type I {ideal_1:.6}, type II {ideal_2:.6})"
        ),
    );
}

#[test]
fn criterion_03_type2_pulses_hold_up_under_the_type1_score() {
    let f = &*FIX;
    let expected = [
        (0.0, 14.99),
        (0.05, 10.39),
        (0.1, 7.95),
        (0.2, 5.61),
        (0.5, 3.18),
    ];
    let mut pass = true;
    let mut rows = Vec::new();
    for (gd, want) in expected {
        let o = f.type2_outcome(gd);
        run_of(o);
        let cross = o
            .cross
            .iter()
            .find(|r| r.kind == "alternate_target")
            .unwrap_or_else(|| panic!("point '{}' has no alternate-target row", o.point.label));
        let best = f.grid_run(gd, 0.2).report.functional;
        let rel = (cross.functional - want).abs() / want;
        let ratio = cross.functional / best;
        pass &= rel <= 0.10 && ratio >= 0.90;
        rows.push(format!(
            "gd {gd}: {:.2} (want {want} +-10%, got {:+.1}%; {:.1}% of the type-I optimum {best:.2})",
            cross.functional,
            100.0 * (cross.functional - want) / want,
            100.0 * ratio
        ));
    }
    report(
        "3",
        pass,
        &format!(
            "type-I score of each type-II pulse within 10% of its expected value and \
             at least 90% of the directly optimized type-I yield [{}]",
            rows.join("; ")
        ),
    );
}

#[test]
fn criterion_04_penalty_free_run_saturates_at_half_purity() {
    let f = &*FIX;
    let run = run_of(&f.pfree.outcomes[0]);
    let final_purity = purity(run.trajectory.states.last().unwrap());
    let unconstrained = run.report.functional;
    let constrained = f.grid_run(0.5, 0.3).report.functional;
    let headroom = (unconstrained - constrained) / constrained;
    let pass = run.termination == TerminationReason::Converged
        && (final_purity - 0.5).abs() <= 1e-2
        && headroom < 0.05;
    report(
        "4",
        pass,
        &format!(
            "penalty-free run at dephasing 0.5 {} with final purity {final_purity:.4} \
             (0.5 within 1e-2) and yield {unconstrained:.3}, only {:.2}% above the \
             fluence-0.3 run's {constrained:.3} (cap 5%)",
            run.termination.name(),
            100.0 * headroom
        ),
    );
}

#[test]
fn criterion_05_yield_falls_with_dephasing_and_rises_with_fluence() {
    let f = &*FIX;
    let gds = [0.0, 0.05, 0.1, 0.2, 0.3, 0.5];
    let f0s = [0.1, 0.2, 0.3];
    let mut worst = 0.0_f64; // most negative margin seen, as a violation
    for &f0 in &f0s {
        for pair in gds.windows(2) {
            let drop = f.grid_run(pair[0], f0).report.functional
                - f.grid_run(pair[1], f0).report.functional;
            worst = worst.min(drop);
        }
    }
    for &gd in &gds {
        for pair in f0s.windows(2) {
            let rise = f.grid_run(gd, pair[1]).report.functional
                - f.grid_run(gd, pair[0]).report.functional;
            worst = worst.min(rise);
        }
    }
    let pass = worst >= -1e-6;
    report(
        "5",
        pass,
        &format!(
            "across the 6x3 dephasing-fluence grid the yield never increases with \
             dephasing nor decreases with fluence (worst margin {worst:.2e}, \
             tolerance -1e-6)"
        ),
    );
}

#[test]
fn criterion_06_population_decay_raises_the_attainable_yield() {
    let f = &*FIX;
    let outs = &f.gpop.outcomes;
    let mut pass = true;
    let mut rows = Vec::new();
    for (i, o) in outs.iter().enumerate() {
        let run = run_of(o);
        if i > 0 {
            pass &= run.report.functional > run_of(&outs[i - 1]).report.functional;
            let reference = o
                .cross
                .iter()
                .find(|r| r.kind == "reference_field")
                .unwrap_or_else(|| panic!("point '{}' has no reference row", o.point.label));
            pass &= run.report.functional > reference.functional;
            rows.push(format!(
                "gp {}: {:.3} (> reference pulse's {:.3})",
                o.point.gamma_pop, run.report.functional, reference.functional
            ));
        } else {
            rows.push(format!(
                "gp {}: {:.3}",
                o.point.gamma_pop, run.report.functional
            ));
        }
    }
    report(
        "6",
        pass,
        &format!(
            "yield rises strictly with the population-decay rate and beats the \
             re-used no-decay pulse at every rate [{}]",
            rows.join("; ")
        ),
    );
}

#[test]
fn criterion_07_fluence_controller_lands_on_its_target() {
    let f = &*FIX;
    let cases: [(&str, &OptimizationRun); 4] = [
        ("type I, gd 0", f.grid_run(0.0, 0.2)),
        ("type I, gd 0.3", f.grid_run(0.3, 0.2)),
        ("type II, gd 0", run_of(f.type2_outcome(0.0))),
        ("type II, gd 0.3", run_of(f.type2_outcome(0.3))),
    ];
    let mut pass = true;
    let mut rows = Vec::new();
    for (name, run) in cases {
        let miss = (run.report.fluence - 0.2).abs() / 0.2;
        pass &= run.termination == TerminationReason::Converged && miss <= 1e-10;
        rows.push(format!(
            "{name}: {} after {} iterations, |f - f0|/f0 = {miss:.2e}",
            run.termination.name(),
            run.history.len() - 1
        ));
    }
    report(
        "7",
        pass,
        &format!(
            "all four controller runs converge with relative fluence error at most \
             1e-10 [{}]",
            rows.join("; ")
        ),
    );
}

#[test]
fn criterion_08_softer_penalty_lifts_objective_yield_and_fluence() {
    let f = &*FIX;
    let outs = &f.ladder.outcomes;
    let mut pass = outs.len() == 4;
    let mut rows = Vec::new();
    for (i, o) in outs.iter().enumerate() {
        let r = &run_of(o).report;
        rows.push(format!(
            "a0 {}: J {:.4}, F {:.4}, f {:.4}",
            o.point.a0.unwrap_or(f64::NAN),
            r.objective,
            r.functional,
            r.fluence
        ));
        if i > 0 {
            let prev = &run_of(&outs[i - 1]).report;
            pass &= r.objective - prev.objective > -1e-8;
            pass &= r.functional - prev.functional > -1e-8;
            pass &= r.fluence - prev.fluence > -1e-8;
        }
    }
    report(
        "8",
        pass,
        &format!(
            "objective, yield and fluence all increase along the penalty ladder \
             0.1 -> 0.5 -> 2.0 -> 5.0 (tolerance 1e-8) [{}]",
            rows.join("; ")
        ),
    );
}

#[test]
fn criterion_09_second_window_carries_more_fluence_for_similar_yield() {
    let f = &*FIX;
    let o = f.twowin_outcome(0.2);
    run_of(o);
    assert_eq!(o.window_splits.len(), 2, "expected two window splits");
    let w1 = &o.window_splits[0];
    let w2 = &o.window_splits[1];
    let fluence_ratio = w2.fluence / w1.fluence;
    let yield_ratio = w2.functional / w1.functional;

    let f07 = run_of(f.twowin_outcome(0.7)).report.functional;
    let f09 = run_of(f.twowin_outcome(0.9)).report.functional;
    let gain = (f09 - f07) / f07;

    let pass = (fluence_ratio - 1.78).abs() <= 0.15 * 1.78
        && (yield_ratio - 1.04).abs() <= 0.1
        && gain < 0.05;
    report(
        "9",
        pass,
        &format!(
            "window fluence ratio {fluence_ratio:.3} (1.78 +-15%), window yield ratio \
             {yield_ratio:.3} (1.04 +-0.1) at f0 0.2; raising f0 0.7 -> 0.9 gains only \
             {:.2}% yield (cap 5%)",
            100.0 * gain
        ),
    );
}

// ---------------------------------------------------------------------------
// Criterion 10: property checks, each bounded to a minute
// ---------------------------------------------------------------------------

#[test]
fn criterion_10a_purity_rate_formula_matches_its_trajectories() {
    let f = &*FIX;
    let started = Instant::now();

    let lab_sys = SystemSpec {
        gamma_deph: 0.5,
        ..SystemSpec::default()
    };
    let decay_sys = SystemSpec {
        gamma_deph: 0.2,
        gamma_pop: 0.1,
        ..SystemSpec::default()
    };
    let rwa_sys = SystemSpec {
        frame: Frame::RotatingRwa,
        gamma_deph: 0.1,
        ..SystemSpec::default()
    };
    let gp_outcome = f
        .gpop
        .outcomes
        .iter()
        .find(|o| close(o.point.gamma_pop, 0.1))
        .expect("gamma_pop 0.1 point");
    let cases = [
        (&lab_sys, f.grid_run(0.5, 0.2)),
        (&decay_sys, run_of(gp_outcome)),
        (&rwa_sys, &f.rwa),
    ];

    // Five-point stencil: the leftover O(dt^4) truncation stays far below the
    // bound even with the counter-rotating purity ripple of the lab frame.
    let mut max_err = 0.0_f64;
    for (sys, run) in cases {
        let p: Vec<f64> = run.trajectory.states.iter().map(purity).collect();
        let dt = run.trajectory.grid.dt();
        for j in 2..p.len() - 2 {
            let fd = (p[j - 2] - 8.0 * p[j - 1] + 8.0 * p[j + 1] - p[j + 2]) / (12.0 * dt);
            let err = (fd - purity_rate(sys, &run.trajectory.states[j])).abs();
            max_err = max_err.max(err);
        }
    }

    let secs = started.elapsed().as_secs_f64();
    let pass = max_err < 1e-5 && secs < 60.0;
    report(
        "10a",
        pass,
        &format!(
            "purity rate matches finite differences along three optimized \
             trajectories, max deviation {max_err:.2e} (bound 1e-5), {secs:.1} s"
        ),
    );
}

#[test]
fn criterion_10b_backward_stepping_is_the_exact_adjoint() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x0acc_e97a);
    let mut rmat = {
        let mut inner = ChaCha8Rng::seed_from_u64(0x0acc_e97b);
        move || {
            let mut e = || C64::new(inner.random_range(-1.0..1.0), inner.random_range(-1.0..1.0));
            Mat2::new(e(), e(), e(), e())
        }
    };

    let mut worst = 0.0_f64;
    for case in 0..100 {
        let frame = if case % 2 == 0 {
            Frame::LabExact
        } else {
            Frame::RotatingRwa
        };
        let sys = SystemSpec {
            frame,
            gamma_deph: rng.random_range(0.0..0.6),
            gamma_pop: rng.random_range(0.0..0.3),
            ..SystemSpec::default()
        };

        // Pairing conservation through paired forward/backward RK4 steps.
        // Short spans keep omega10 * dt well inside the stability region, so
        // roundoff is not amplified by growing modes.
        let grid = TimeGrid::new(rng.random_range(0.05..0.13), 8).unwrap();
        let n = grid.n_points();
        let field = match frame {
            Frame::LabExact => {
                ControlField::Lab((0..n).map(|_| rng.random_range(-2.0..2.0)).collect())
            }
            Frame::RotatingRwa => ControlField::Rwa {
                x: (0..n).map(|_| rng.random_range(-2.0..2.0)).collect(),
                y: (0..n).map(|_| rng.random_range(-2.0..2.0)).collect(),
            },
        };
        let rho00 = rng.random_range(0.0..1.0);
        let rho0 = DensityState {
            rho00,
            rho11: 1.0 - rho00,
            rho01: C64::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5)),
        };
        let xi_final = rmat();

        let rho = propagate_density(&sys, &grid, &field, rho0).unwrap();
        let xi = propagate_costate(&sys, &grid, &field, &SourceTrack::zero(&grid), xi_final)
            .unwrap();
        let first = xi.states[0].inner(rho.states[0].to_matrix());
        let last = xi.states[n - 1].inner(rho.states[n - 1].to_matrix());
        worst = worst.max((first - last).norm());

        // The relaxation map and its adjoint agree under the pairing.
        let (x, y) = (rmat(), rmat());
        let lhs = relaxation_adjoint_apply(&sys, x).inner(y);
        let rhs = x.inner(relaxation_apply(&sys, y));
        worst = worst.max((lhs - rhs).norm());
    }

    let secs = started.elapsed().as_secs_f64();
    let pass = worst < 1e-12 && secs < 60.0;
    report(
        "10b",
        pass,
        &format!(
            "costate pairing and relaxation adjoint identities hold on 100 random \
             cases, worst deviation {worst:.2e} (bound 1e-12), {secs:.1} s"
        ),
    );
}

#[test]
fn criterion_10c_update_direction_matches_finite_differences() {
    let started = Instant::now();

    let sys = SystemSpec {
        gamma_deph: 0.1,
        gamma_pop: 0.02,
        ..SystemSpec::default()
    };
    // Production resolution: the adjoint-assembled density is the continuum
    // sensitivity, and its O(dt^2) gap to the exact discrete derivative only
    // sits below the bound on a carrier-resolving grid.
    let grid = TimeGrid::new(25.0, 30_000).unwrap();
    let window = ControlWindow {
        edges: vec![5.0, 20.0],
        alpha: 3.0,
    };
    let problem = qoc_core::optimizer::ControlProblem {
        system: sys,
        grid,
        target: TargetSpec::type1(),
        window,
        ramp_width: 1.0,
    };
    let penalty = PenaltyWeight::new(2.0);
    let base: Vec<f64> = grid
        .times()
        .map(|t| {
            let env = (std::f64::consts::PI * t / 25.0).sin().powi(2);
            (0.12 * (30.0 * t).cos() + 0.02 * (7.3 * t).sin()) * env
        })
        .collect();

    let objective = |samples: &[f64]| -> f64 {
        let field = ControlField::Lab(samples.to_vec());
        let traj = propagate_density(&problem.system, &grid, &field, DensityState::ground())
            .expect("propagation");
        evaluate_functionals(
            &problem.system,
            &grid,
            &field,
            &traj,
            &problem.target,
            &problem.window,
            &penalty,
        )
        .expect("evaluation")
        .objective
    };

    let gradient = objective_gradient(&problem, &penalty, &ControlField::Lab(base.clone()))
        .expect("gradient");
    let ControlField::Lab(g) = gradient else {
        panic!("lab problem must yield a lab gradient");
    };
    let g_max = g.iter().fold(0.0_f64, |m, v| m.max(v.abs()));

    // Probe 20 interior samples where the gradient is not degenerate (at
    // least 5% of its peak), drawn from a fixed-seed stream.
    let mut rng = ChaCha8Rng::seed_from_u64(0x0acc_e97c);
    let dt = grid.dt();
    let h = 1e-5;
    let mut probed = 0;
    let mut worst_rel = 0.0_f64;
    while probed < 20 {
        let j = rng.random_range(1..grid.n_points() - 1);
        if g[j].abs() < 0.05 * g_max {
            continue;
        }
        let mut plus = base.clone();
        plus[j] += h;
        let mut minus = base.clone();
        minus[j] -= h;
        let fd = (objective(&plus) - objective(&minus)) / (2.0 * h);
        worst_rel = worst_rel.max((fd - g[j] * dt).abs() / (g[j] * dt).abs());
        probed += 1;
    }

    let secs = started.elapsed().as_secs_f64();
    let pass = worst_rel < 1e-4 && secs < 60.0;
    report(
        "10c",
        pass,
        &format!(
            "update direction matches central differences of the objective at 20 \
             sampled times, worst relative error {worst_rel:.2e} (bound 1e-4), \
             {secs:.1} s"
        ),
    );
}

#[test]
fn criterion_10d_decay_and_pi_pulse_oracles_hold() {
    let started = Instant::now();

    // Free coherence: rho01(t) = rho01(0) exp((i omega10 - gamma_deph) t).
    let sys = SystemSpec {
        gamma_deph: 0.3,
        ..SystemSpec::default()
    };
    let grid = TimeGrid::default();
    let field = ControlField::zeros(Frame::LabExact, &grid);
    let traj = propagate_density(&sys, &grid, &field, DensityState::balanced()).unwrap();
    let expected = C64::new(-7.5, 750.0).exp() * 0.5;
    let decay_err = (traj.states.last().unwrap().rho01 - expected).norm();

    // Resonant pulse of area pi inverts the ground state. In the lab frame
    // counter-rotating terms leave O((amplitude/omega10)^2) residue; the
    // rotating frame integrates the envelope exactly.
    let pulse_grid = TimeGrid::new(5.0, 6000).unwrap();
    let amp = std::f64::consts::PI / 5.0;
    let lab_sys = SystemSpec::default();
    let lab_field = ControlField::Lab(
        pulse_grid
            .times()
            .map(|t| amp * (30.0 * t).cos())
            .collect(),
    );
    let lab_traj =
        propagate_density(&lab_sys, &pulse_grid, &lab_field, DensityState::ground()).unwrap();
    let lab_err = (lab_traj.states.last().unwrap().rho11 - 1.0).abs();

    let rwa_sys = SystemSpec {
        frame: Frame::RotatingRwa,
        ..SystemSpec::default()
    };
    let n = pulse_grid.n_points();
    let rwa_field = ControlField::Rwa {
        x: vec![amp; n],
        y: vec![0.0; n],
    };
    let rwa_traj =
        propagate_density(&rwa_sys, &pulse_grid, &rwa_field, DensityState::ground()).unwrap();
    let rwa_err = (rwa_traj.states.last().unwrap().rho11 - 1.0).abs();

    let secs = started.elapsed().as_secs_f64();
    let pass = decay_err < 1e-8 && lab_err < 2e-3 && rwa_err < 1e-9 && secs < 60.0;
    report(
        "10d",
        pass,
        &format!(
            "free-decay coherence off by {decay_err:.2e} (bound 1e-8); pi-pulse \
             inversion off by {lab_err:.2e} lab (bound 2e-3) and {rwa_err:.2e} \
             rotating (bound 1e-9), {secs:.1} s"
        ),
    );
}

#[test]
fn criterion_10e_stored_trajectories_stay_physical() {
    let f = &*FIX;
    let started = Instant::now();

    let mut states = 0_u64;
    let mut worst_trace = 0.0_f64;
    let mut purity_low = 1.0_f64;
    let mut purity_high = 0.0_f64;
    let results = [
        &f.grid, &f.type2, &f.gpop, &f.twowin, &f.pfree, &f.ladder,
    ];
    let extra = [&f.lone, &f.rwa];
    let runs = results
        .iter()
        .flat_map(|r| r.outcomes.iter().map(run_of))
        .chain(extra.iter().copied());
    for run in runs {
        for s in &run.trajectory.states {
            states += 1;
            worst_trace = worst_trace.max((s.trace() - 1.0).abs());
            let p = purity(s);
            purity_low = purity_low.min(p);
            purity_high = purity_high.max(p);
        }
    }

    let secs = started.elapsed().as_secs_f64();
    let pass = worst_trace < 1e-9
        && purity_low >= 0.5 - 1e-9
        && purity_high <= 1.0 + 1e-9
        && secs < 60.0;
    report(
        "10e",
        pass,
        &format!(
            "{states} stored states keep |trace - 1| <= {worst_trace:.2e} (bound 1e-9) \
             and purity within [{purity_low:.12}, {purity_high:.12}] \
             (allowed [0.5, 1] +-1e-9), {secs:.1} s"
        ),
    );
}

#[test]
fn criterion_10f_lab_and_rotating_frames_agree_on_the_yield() {
    let f = &*FIX;
    let started = Instant::now();

    let lab = &f.grid_run(0.1, 0.2).report;
    let rwa = &f.rwa.report;
    // The comparison only makes sense with both pulses on the same fluence.
    let rwa_miss = (rwa.fluence - 0.2).abs() / 0.2;
    let rel = (lab.functional - rwa.functional).abs() / lab.functional;

    let secs = started.elapsed().as_secs_f64();
    let pass = rwa_miss <= 1e-3 && rel <= 0.01 && secs < 60.0;
    report(
        "10f",
        pass,
        &format!(
            "type-I yield at dephasing 0.1, fluence 0.2: lab {:.4} vs rotating {:.4}, \
             {:.2}% apart (cap 1%; rotating run {} with fluence misfit {rwa_miss:.1e}), \
             {secs:.1} s",
            lab.functional,
            rwa.functional,
            100.0 * rel,
            f.rwa.termination.name()
        ),
    );
}
