//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fail.

mod common;

use std::time::{Duration, Instant};

use mgstab_core::criteria::{cond1_sigma, cond4_full_hessian, cond4_schur, large_signal_verdict, max_real_eigenvalue};
use mgstab_core::dynamics::{classify_run, jacobian_at, rhs, simulate, Verdict};
use mgstab_core::equilibrium::{all_equilibria, max_deliverable_power, upper_equilibrium};
use mgstab_core::netmodel::{InitialState, Scenario};
use mgstab_core::potential::{assemble_forms, PotentialPoint, Region};
use mgstab_core::rlcbench::{compare_methods, BmRegion};
use mgstab_core::sweep::sweep;
use mgstab_core::{compare_controllers, presets, Equilibrium, GridSpec, State};
use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

type Check = std::result::Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn criterion(id: &str, name: &str, limit: Duration, f: impl FnOnce() -> Check) -> bool {
    let t0 = Instant::now();
    let out = f();
    let dt = t0.elapsed();
    let (pass, detail) = match out {
        Ok(d) if dt <= limit => (true, d),
        Ok(d) => (false, format!("{d}; exceeded time limit")),
        Err(e) => (false, e),
    };
    println!(
        "{} {id:<3} {name}: {detail} [{:.2} s / {:.0} s]",
        if pass { "PASS" } else { "FAIL" },
        dt.as_secs_f64(),
        limit.as_secs_f64()
    );
    pass
}

fn secs(s: u64) -> Duration {
    Duration::from_secs(s)
}

fn plug_in_checklist() -> Check {
    let mut got = Vec::new();
    for (p, want) in [(800.0, true), (805.0, true), (810.0, false), (825.0, false)] {
        let r = large_signal_verdict(&presets::plug_in(p).grid).map_err(|e| e.to_string())?;
        let pass = r.large_signal == Some(true);
        ensure(pass == want, || format!("P_L = {p}: large_signal = {pass}, expected {want}"))?;
        got.push(format!("{p}:{}", if pass { "yes" } else { "no" }));
    }
    let p_max = max_deliverable_power(&presets::plug_in(800.0).grid);
    ensure((p_max - 808.75).abs() <= 0.01, || format!("boundary {p_max:.4} W"))?;
    Ok(format!("{}; boundary {p_max:.4} W", got.join(" ")))
}

fn plug_in_transient() -> Check {
    let run = |p: f64| {
        let t0 = Instant::now();
        let s = presets::plug_in(p);
        let series = simulate(&s).map_err(|e| e.to_string())?;
        let m = classify_run(&series, &s.grid).map_err(|e| e.to_string())?;
        let dt = t0.elapsed();
        ensure(dt < secs(5), || format!("P_L = {p} run took {dt:?}"))?;
        Ok::<_, String>((series, m))
    };
    let (series, m800) = run(800.0)?;
    let pre = series
        .times
        .iter()
        .zip(&series.states)
        .rfind(|(&t, _)| t < series.plug_in_time)
        .map(|(_, s)| s.v_l)
        .ok_or("no pre-plug-in samples")?;
    ensure((pre - 54.35).abs() <= 0.5, || format!("pre-plug-in v_l = {pre}"))?;
    ensure(m800.verdict == Verdict::Stable, || format!("800 W: {:?}", m800.verdict))?;
    ensure((m800.steady_value - 30.0).abs() <= 0.3, || format!("800 W settles at {}", m800.steady_value))?;
    let (_, m825) = run(825.0)?;
    ensure(m825.verdict == Verdict::Oscillating, || format!("825 W: {:?}", m825.verdict))?;
    Ok(format!(
        "pre-plug {pre:.3} V; 800 W {:?} at {:.3} V; 825 W {:?}",
        m800.verdict, m800.steady_value, m825.verdict
    ))
}

fn rlc_benchmark() -> Check {
    let r = compare_methods(1.0, 1.0, -2.0, 1000).map_err(|e| e.to_string())?;
    ensure(r.proposed_agreement == 1.0, || {
        format!("agreement {} over {} off-boundary samples", r.proposed_agreement, r.n_off_boundary)
    })?;
    ensure(matches!(r.bm_region, BmRegion::Empty { .. }), || format!("B-M region {}", r.bm_region))?;
    Ok(format!(
        "roots {} / proposed {} / B-M {}; agreement {:.1} % of {} samples (literal reading {:.1} %)",
        r.root_region,
        r.proposed_region,
        r.bm_region,
        100.0 * r.proposed_agreement,
        r.n_off_boundary,
        100.0 * r.literal_agreement
    ))
}

fn fast_bus() -> Check {
    let s = presets::fast_bus();
    let c1 = cond1_sigma(&s.grid).map_err(|e| e.to_string())?;
    ensure(c1.pass, || format!("C1 fails: {}", c1.detail))?;
    let eq = upper_equilibrium(&s.grid).map_err(|e| e.to_string())?;
    ensure((eq.v_l - 77.5).abs() <= 0.1, || format!("v_e = {}", eq.v_l))?;
    let c4 = cond4_schur(&s.grid, &eq).map_err(|e| e.to_string())?;
    ensure(c4.pass && (c4.margin - 0.425).abs() <= 0.005, || format!("C4 margin {}", c4.margin))?;
    let series = simulate(&s).map_err(|e| e.to_string())?;
    let m = classify_run(&series, &s.grid).map_err(|e| e.to_string())?;
    ensure(m.verdict == Verdict::Stable, || format!("simulation {:?}", m.verdict))?;
    Ok(format!(
        "σ_max {:.4}, v_e {:.3} V, C4 margin {:.4}, simulation {:?}",
        1.0 - c1.margin,
        eq.v_l,
        c4.margin,
        m.verdict
    ))
}

fn controllers() -> Check {
    let c = compare_controllers(&presets::comparison(530.0)).map_err(|e| e.to_string())?;
    let (p, d) = (&c.proposed, &c.droop);
    let (ps, ds) = (p.startup.ok_or("no startup window")?, d.startup.ok_or("no startup window")?);
    let (pp, dp) = (p.post_plug.ok_or("no post window")?, d.post_plug.ok_or("no post window")?);
    let detail = format!(
        "startup overshoot {:.3} vs {:.3} V, post-plug-in {:.3} vs {:.3} V, steady {:.3} / {:.3} V",
        ps.overshoot, ds.overshoot, pp.overshoot, dp.overshoot, p.metrics.steady_value, d.metrics.steady_value
    );
    ensure(c.claims.startup_overshoot_lower && c.claims.post_plug_overshoot_lower, || detail.clone())?;
    for r in [p, d] {
        ensure((r.metrics.steady_value - 92.4).abs() <= 1.0, || detail.clone())?;
    }
    Ok(detail)
}

fn region() -> Check {
    let spec = presets::region_sweep(50);
    let g = sweep(&spec).map_err(|e| e.to_string())?;
    let bad = g.containment_violations();
    ensure(bad.is_empty(), || format!("{} cells large-Stable but not small-Stable", bad.len()))?;
    let w = spec.sim_window.expect("window");
    let near: Vec<_> = g
        .mismatch_cells()
        .into_iter()
        .filter(|c| {
            (c.x - w.center[0]).abs() <= w.radius * (spec.axis1.max - spec.axis1.min)
                && (c.y - w.center[1]).abs() <= w.radius * (spec.axis2.max - spec.axis2.min)
        })
        .collect();
    let simulated = g.cells.iter().filter(|c| c.sim.is_some()).count();
    ensure(!near.is_empty(), || format!("no mismatch cell among {simulated} simulated cells"))?;
    Ok(format!(
        "containment holds on 2500 cells; {} of {simulated} simulated cells small-Stable/large-Unstable/oscillating, e.g. ({:.1} W, {:.4} F)",
        near.len(),
        near[0].x,
        near[0].y
    ))
}

fn rel_err(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).amax() / b.amax().max(1.0)
}

/// Random states kept `margin` relative away from `v_min`.
fn state_off_joint(rng: &mut ChaCha8Rng, g: &GridSpec, margin: f64) -> State {
    loop {
        let s = common::random_state(rng, g);
        if (s.v_l - g.cpl.v_min).abs() > margin * g.cpl.v_min {
            return s;
        }
    }
}

fn fd_gradient_hessian() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(71);
    let (mut worst_g, mut worst_h) = (0.0f64, 0.0f64);
    for _ in 0..100 {
        let g = common::random_grid(&mut rng);
        let form = assemble_forms(&g).map_err(|e| e.to_string())?;
        let pt = PotentialPoint::from_state(&g, &state_off_joint(&mut rng, &g, 1e-2)).unwrap();
        let x = pt.to_vector();
        let m = pt.i.len();
        let grad = form.grad_vector(&pt).unwrap();
        let hess = form.hess(&pt).unwrap();
        let mut g_fd = DVector::zeros(x.len());
        let mut h_fd = hess.clone() * 0.0;
        for k in 0..x.len() {
            let h = 1e-5 * x[k].abs().max(1.0);
            let (mut xp, mut xm) = (x.clone(), x.clone());
            xp[k] += h;
            xm[k] -= h;
            let (pp, pm) = (PotentialPoint::from_vector(&xp, m), PotentialPoint::from_vector(&xm, m));
            g_fd[k] = (form.eval(&pp).unwrap() - form.eval(&pm).unwrap()) / (2.0 * h);
            let col = (form.grad_vector(&pp).unwrap() - form.grad_vector(&pm).unwrap()) / (2.0 * h);
            h_fd.set_column(k, &col);
        }
        worst_g = worst_g.max(rel_err(&g_fd, &grad));
        worst_h = worst_h.max((&h_fd - &hess).amax() / hess.amax().max(1.0));
    }
    ensure(worst_g <= 1e-6 && worst_h <= 1e-5, || format!("gradient {worst_g:.2e}, Hessian {worst_h:.2e}"))?;
    Ok(format!("worst relative error: gradient {worst_g:.2e}, Hessian {worst_h:.2e}"))
}

fn attractors(r: &mgstab_core::StabilityReport) -> Vec<Equilibrium> {
    r.attractor_set().cloned().collect()
}

fn slowest_rate(g: &GridSpec, eqs: &[Equilibrium]) -> f64 {
    eqs.iter()
        .map(|e| -max_real_eigenvalue(g, &e.state))
        .fold(f64::INFINITY, f64::min)
}

fn scenario_from(g: &GridSpec, x0: State, t_end: f64) -> Scenario {
    let mut s = Scenario::new(g.clone(), t_end).unwrap();
    s.initial_state = InitialState::Given(x0);
    s
}

fn potential_identity() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(72);
    let mut worst = 0.0f64;
    let mut samples = 0;
    for _ in 0..10 {
        let (g, r) = common::random_stable_grid(&mut rng);
        let form = assemble_forms(&g).unwrap();
        let eqs = attractors(&r);
        let x0 = common::perturb(&mut rng, &g, &eqs[0].state);
        let series = simulate(&scenario_from(&g, x0, 5.0 / slowest_rate(&g, &eqs))).map_err(|e| e.to_string())?;
        let jm = form.j_matrix();
        let n = g.n_branches();
        for (t, s) in series.times.iter().zip(&series.states) {
            let pt = PotentialPoint::from_state(&g, s).unwrap();
            let d = rhs(&g, s, *t);
            // ẋ in potential coordinates; the I_p rows carry zero inductance
            let mut xdot = DVector::zeros(4 * n + 1);
            for k in 0..n {
                xdot[n + k] = d.i_q[k];
                xdot[2 * n + k] = d.i_t[k];
                xdot[3 * n + k] = d.v_c[k];
            }
            xdot[4 * n] = d.v_l;
            let res = &jm * xdot + form.grad_vector(&pt).unwrap();
            worst = worst.max(res.amax());
            samples += 1;
        }
    }
    ensure(worst < 1e-6, || format!("max residual {worst:.2e}"))?;
    Ok(format!("max |J ẋ + ∂P/∂x| = {worst:.2e} over {samples} samples"))
}

fn schur_vs_hessian() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(73);
    let (mut checked, mut passing) = (0, 0);
    for _ in 0..200 {
        let g = common::random_grid(&mut rng);
        for e in all_equilibria(&g, true).map_err(|e| e.to_string())? {
            let s = cond4_schur(&g, &e).map_err(|e| e.to_string())?;
            let h = cond4_full_hessian(&g, &e).map_err(|e| e.to_string())?;
            ensure(s.pass == h.pass, || {
                format!("v_e = {}: Schur {} vs Hessian {}", e.v_l, s.margin, h.margin)
            })?;
            checked += 1;
            passing += s.pass as usize;
        }
    }
    Ok(format!("{checked} equilibria agree ({passing} pass, {} fail)", checked - passing))
}

fn c1_joint() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(74);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let g = common::random_grid(&mut rng);
        let form = assemble_forms(&g).unwrap();
        let mut s = common::random_state(&mut rng, &g);
        s.v_l = g.cpl.v_min;
        let pt = PotentialPoint::from_state(&g, &s).unwrap();
        let (ph, pc) = (
            form.eval_piece(&pt, Region::Hyperbola).unwrap(),
            form.eval_piece(&pt, Region::ConstCurrent).unwrap(),
        );
        worst = worst.max((ph - pc).abs() / ph.abs().max(1.0));
        let (gh, gc) = (
            form.grad_piece(&pt, Region::Hyperbola).unwrap(),
            form.grad_piece(&pt, Region::ConstCurrent).unwrap(),
        );
        worst = worst.max(rel_err(&gh.1, &gc.1)).max(rel_err(&gh.0, &gc.0));
        // one-sided limits through the evaluator itself
        let h = 1e-7 * g.cpl.v_min;
        let mut lo = pt.clone();
        lo.v[g.n_branches()] -= h;
        let mut hi = pt.clone();
        hi.v[g.n_branches()] += h;
        let jump = (form.eval(&hi).unwrap() - form.eval(&lo).unwrap()).abs();
        let slope = form.grad(&pt).unwrap().1[g.n_branches()].abs();
        worst = worst.max((jump - 2.0 * h * slope).abs() / ph.abs().max(1.0));
    }
    ensure(worst <= 1e-9, || format!("worst mismatch {worst:.2e}"))?;
    Ok(format!("value/gradient mismatch at v_min ≤ {worst:.2e}"))
}

fn jacobian_fd() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(75);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let g = common::random_grid(&mut rng);
        let s = state_off_joint(&mut rng, &g, 1e-2);
        let j = jacobian_at(&g, &s, true);
        let x = s.to_vec();
        for k in 0..x.len() {
            let h = 1e-6 * x[k].abs().max(1.0);
            let (mut xp, mut xm) = (x.clone(), x.clone());
            xp[k] += h;
            xm[k] -= h;
            let fp = rhs(&g, &State::from_slice(&g, &xp), 0.0).to_vec();
            let fm = rhs(&g, &State::from_slice(&g, &xm), 0.0).to_vec();
            let col = DVector::from_iterator(x.len(), fp.iter().zip(&fm).map(|(a, b)| (a - b) / (2.0 * h)));
            worst = worst.max(rel_err(&col, &j.column(k).into_owned()));
        }
    }
    ensure(worst <= 1e-6, || format!("worst relative error {worst:.2e}"))?;
    Ok(format!("worst relative error {worst:.2e}"))
}

fn random_convergence() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(76);
    let (mut runs, mut to_cc, mut unique) = (0, 0, 0);
    for _ in 0..500 {
        let (g, r) = common::random_stable_grid(&mut rng);
        let eqs = attractors(&r);
        let operating: Vec<_> = eqs.iter().filter(|e| e.v_l > 0.0).cloned().collect();
        unique += (r.equilibria.iter().filter(|e| e.operating).count() == 1) as usize;
        let t_end = 40.0 / slowest_rate(&g, &operating);
        let start = r.upper().unwrap_or(&operating[0]).state.clone();
        for _ in 0..20 {
            let x0 = common::perturb(&mut rng, &g, &start);
            let series = simulate(&scenario_from(&g, x0, t_end)).map_err(|e| e.to_string())?;
            let last = series.last().unwrap().v_l;
            let target = eqs
                .iter()
                .min_by(|a, b| (a.v_l - last).abs().total_cmp(&(b.v_l - last).abs()))
                .unwrap();
            let tol = 0.01 * target.v_l.abs().max(1.0);
            let settled = series
                .times
                .iter()
                .zip(series.v_l())
                .filter(|(&t, _)| t >= 0.5 * t_end)
                .all(|(_, v)| (v - target.v_l).abs() < tol);
            ensure(settled, || {
                format!("run from {:?} ended at v_l = {last} (nearest attractor {})", series.states[0], target.v_l)
            })?;
            to_cc += !target.on_hyperbola as usize;
            runs += 1;
        }
    }
    Ok(format!(
        "{runs} runs on 500 grids converged ({unique} grids with a single operating point, {to_cc} runs to the constant-current point)"
    ))
}

fn main() {
    let t0 = Instant::now();
    let results = [
        criterion("1", "plug-in power checklist", secs(1), plug_in_checklist),
        criterion("2", "plug-in transient", secs(10), plug_in_transient),
        criterion("3", "RLC benchmark", secs(1), rlc_benchmark),
        criterion("4", "fast-bus scenario", secs(5), fast_bus),
        criterion("5", "controller comparison", secs(10), controllers),
        criterion("6", "region containment and mismatch", secs(300), region),
    ];
    let t7 = Instant::now();
    let props = [
        criterion("7a", "potential gradient/Hessian vs FD", secs(600), fd_gradient_hessian),
        criterion("7b", "J ẋ = -∂P/∂x along trajectories", secs(600), potential_identity),
        criterion("7c", "Schur form vs full Hessian", secs(600), schur_vs_hessian),
        criterion("7d", "C¹ joint at v_min", secs(600), c1_joint),
        criterion("7e", "analytic Jacobian vs FD", secs(600), jacobian_fd),
        criterion("7f", "random initial conditions converge", secs(600), random_convergence),
    ];
    let t7 = t7.elapsed();
    let p7 = criterion("7", "property suites total", secs(600), || {
        ensure(props.iter().all(|&p| p), || "a sub-suite failed".into())?;
        ensure(t7 <= secs(600), || format!("{:.1} s", t7.as_secs_f64()))?;
        Ok(format!("all sub-suites pass in {:.1} s", t7.as_secs_f64()))
    });
    let failed = results.iter().chain(&props).filter(|&&p| !p).count() + (!p7) as usize;
    println!("{failed} failed; total {:.1} s", t0.elapsed().as_secs_f64());
    if failed > 0 {
        std::process::exit(1);
    }
}
