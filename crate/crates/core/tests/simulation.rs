use tvra::oracle::{penalty_cross_check, solve_frozen};
use tvra::scenario::{builtin_scenario, load_scenario, save_scenario, Scenario};
use tvra::sim::{integrate, write_trace_csv, Method, SimOptions, SimOutput};
use tvra::Error;

fn short(name: &str, t_end: f64) -> Scenario {
    let mut s = builtin_scenario(name).unwrap();
    s.t_end = t_end;
    s
}

fn csv(out: &SimOutput) -> Vec<u8> {
    let mut buf = Vec::new();
    write_trace_csv(&out.trace, &mut buf).unwrap();
    buf
}

#[test]
fn saved_scenario_reproduces_the_builtin_run() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("case2.json");
    let scn = short("case2", 1.0);
    save_scenario(&scn, &path).unwrap();
    let loaded = load_scenario(&path).unwrap();
    let opts = SimOptions {
        decimate: 50,
        ..Default::default()
    };
    let a = integrate(&scn, &opts).unwrap();
    let b = integrate(&loaded, &opts).unwrap();
    assert_eq!(csv(&a), csv(&b));
    assert_eq!(a.events, b.events);
}

#[test]
fn trace_times_follow_the_decimated_grid() {
    let scn = short("case1", 0.5);
    let out = integrate(
        &scn,
        &SimOptions {
            decimate: 7,
            ..Default::default()
        },
    )
    .unwrap();
    assert_eq!(out.steps, 5000);
    for (k, r) in out.trace.iter().enumerate().take(out.trace.len() - 1) {
        assert_eq!(r.t, (7 * k) as f64 * scn.dt);
    }
    assert_eq!(out.trace.last().unwrap().t, 0.5);
    assert_eq!(out.final_state.t, 0.5);
}

#[test]
fn estimator_sums_are_conserved() {
    let scn = short("case3", 0.5);
    let out = integrate(
        &scn,
        &SimOptions {
            decimate: 100,
            ..Default::default()
        },
    )
    .unwrap();
    for r in &out.trace {
        assert!(
            r.theta_sum.abs() < 1e-9 && r.theta_p_sum.abs() < 1e-9,
            "{}",
            r.t
        );
    }
}

#[test]
fn integrators_agree_on_a_smoothed_run() {
    // with the signum smoothed the field is Lipschitz, so both methods converge
    let scn = short("case1", 1.0);
    let run = |method| {
        integrate(
            &scn,
            &SimOptions {
                method,
                smooth_sign: Some(1e-2),
                decimate: 10_000,
                ..Default::default()
            },
        )
        .unwrap()
        .final_state
    };
    let (euler, rk4) = (run(Method::Euler), run(Method::Rk4));
    for (a, b) in euler.x.iter().zip(&rk4.x) {
        assert!((a - b).abs() < 1e-2, "{a} vs {b}");
    }
}

#[test]
fn smoothing_trades_chattering_for_bias() {
    let scn = short("case1", 3.0);
    // (largest second difference of e_0 between steps, largest dual spread)
    let measure = |smooth_sign| {
        let out = integrate(
            &scn,
            &SimOptions {
                smooth_sign,
                ..Default::default()
            },
        )
        .unwrap();
        let tail: Vec<_> = out.trace.iter().filter(|r| r.t > 2.0).collect();
        let rough = tail
            .windows(3)
            .map(|w| (w[2].e[0] - 2.0 * w[1].e[0] + w[0].e[0]).abs())
            .fold(0.0, f64::max);
        let spread = tail.iter().map(|r| r.consensus_err).fold(0.0, f64::max);
        (rough, spread)
    };
    let (exact_rough, exact_spread) = measure(None);
    let (smooth_rough, smooth_spread) = measure(Some(1e-1));
    assert!(
        smooth_rough < 1e-4 * exact_rough,
        "{smooth_rough} vs {exact_rough}"
    );
    assert!(
        smooth_spread > exact_spread,
        "{smooth_spread} vs {exact_spread}"
    );
}

#[test]
fn oracle_tracking_is_recorded_when_verifying() {
    let scn = short("case2", 0.2);
    let out = integrate(
        &scn,
        &SimOptions {
            decimate: 500,
            verify: true,
            ..Default::default()
        },
    )
    .unwrap();
    for r in &out.trace {
        let o = r.oracle.as_ref().unwrap();
        let sol = solve_frozen(&scn, r.t).unwrap();
        assert_eq!(o.x_star, sol.x_star);
        let err =
            r.x.iter()
                .zip(&sol.x_star)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
        assert_eq!(o.tracking_err, err);
    }
}

#[test]
fn penalty_solutions_approach_the_exact_one() {
    let scn = builtin_scenario("case2").unwrap();
    for t in [0.0, 12.0, 46.0] {
        let gaps: Vec<f64> = penalty_cross_check(&scn, t)
            .unwrap()
            .into_iter()
            .map(|(_, g)| g)
            .collect();
        assert!(gaps.windows(2).all(|w| w[1] <= w[0] + 1e-12), "{gaps:?}");
        assert!(gaps[2] < 1e-3, "{gaps:?}");
    }
}

#[test]
fn oversized_step_diverges_cleanly() {
    let mut scn = short("case1", 100.0);
    scn.dt = 0.5;
    assert!(matches!(
        integrate(&scn, &SimOptions::default()),
        Err(Error::Diverged { .. })
    ));
}
