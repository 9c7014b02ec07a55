//! The three reference instances.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{AgentSpec, Algorithm, Gains, Scenario};
use crate::error::{Error, Result};
use crate::graph::CommGraph;

pub const BUILTIN_NAMES: [&str; 3] = ["case1", "case2", "case3"];

/// Seed of the synthetic profiles in the built-in 33-bus instance.
pub const CASE3_SEED: u64 = 33;

pub fn builtin_scenario(name: &str) -> Result<Scenario> {
    match name {
        "case1" => Ok(case1()),
        "case2" => Ok(case2()),
        "case3" => Ok(case3(CASE3_SEED)),
        _ => Err(Error::UnknownScenario(name.to_owned())),
    }
}

/// Six agents split into two groups of three, every agent talking to the
/// whole other group.
fn six_agent_graph() -> CommGraph {
    CommGraph::complete_bipartite(3, 3).expect("K3,3 is connected")
}

fn case1_agent(i: usize) -> AgentSpec {
    AgentSpec::parse(
        1.0,
        &format!("(1+0.1*{i})*x^2 + 0.2*sin(0.1*{i}*t)*x^2"),
        &format!("10*{i} + 5*sin(0.1*{i}*t) + 0.1*{i}*t"),
        None,
        None,
    )
    .expect("case 1 expressions are well formed")
}

fn case1() -> Scenario {
    Scenario {
        name: "case1".into(),
        agents: (1..=6).map(case1_agent).collect(),
        graph: six_agent_graph(),
        gains: Gains::reference(),
        t_end: 60.0,
        dt: 1e-4,
        x0: vec![0.0; 6],
        lambda0: vec![0.0; 6],
        theta0: vec![0.0; 6],
        theta0p: vec![0.0; 6],
        algorithm: Algorithm::Ff,
        seed: 0,
    }
}

fn case2() -> Scenario {
    let mut s = case1();
    s.name = "case2".into();
    s.algorithm = Algorithm::ProjFf;
    let bounds: [(usize, Option<&str>, Option<&str>); 3] = [
        (0, None, Some("50")),
        (3, None, Some("40")),
        (5, Some("t"), Some("10 + 0.1*t^2")),
    ];
    for (k, lower, upper) in bounds {
        let base = &s.agents[k];
        s.agents[k] = AgentSpec::new(
            base.a,
            base.cost.clone(),
            base.activity.clone(),
            lower.map(|e| super::parse_expr(e).expect("bound")),
            upper.map(|e| super::parse_expr(e).expect("bound")),
        )
        .expect("case 2 bounds are valid");
    }
    s.x0[5] = -10.0;
    s
}

/// Line list of the IEEE 33-bus radial feeder, buses numbered from 0.
pub fn ieee33_edges() -> Vec<(usize, usize)> {
    let mut edges: Vec<(usize, usize)> = (0..17).map(|i| (i, i + 1)).collect();
    edges.push((1, 18));
    edges.extend((18..21).map(|i| (i, i + 1)));
    edges.push((2, 22));
    edges.extend((22..24).map(|i| (i, i + 1)));
    edges.push((5, 25));
    edges.extend((25..32).map(|i| (i, i + 1)));
    edges
}

/// Buses hosting dispatchable generation; all other buses are flexible loads.
const CASE3_GENERATORS: [usize; 7] = [6, 13, 17, 21, 24, 29, 32];
/// Buses whose renewable output deviates from its forecast.
const CASE3_RENEWABLES: [usize; 4] = [13, 17, 24, 32];

fn sinusoids(rng: &mut ChaCha8Rng, amp: (f64, f64), freq: (f64, f64)) -> String {
    (0..3)
        .map(|_| {
            let a = rng.random_range(amp.0..amp.1);
            let w = rng.random_range(freq.0..freq.1);
            let phase = rng.random_range(0.0..std::f64::consts::TAU);
            format!("{a:.3}*sin({w:.4}*t + {phase:.3})")
        })
        .collect::<Vec<_>>()
        .join(" + ")
}

/// 33 bus agents absorbing renewable deviations. Each agent pays
/// `0.5*w(t)*(x - r(t))^2` for leaving its reference `r`, loads enter the
/// balance with `A = 1` and generators with `A = -1`.
pub fn case3(seed: u64) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 33;
    let mut x0 = Vec::with_capacity(n);
    let agents = (0..n)
        .map(|i| {
            let generator = CASE3_GENERATORS.contains(&i);
            let a = if generator { -1.0 } else { 1.0 };
            let base: f64 = if generator {
                rng.random_range(40.0..100.0)
            } else {
                rng.random_range(20.0..60.0)
            };
            x0.push((base * 100.0).round() / 100.0);
            let reference = format!("{base:.2} + {}", sinusoids(&mut rng, (0.5, 2.0), (0.02, 0.2)));
            let weight_freq = rng.random_range(0.05..0.2);
            let weight_phase = rng.random_range(0.0..std::f64::consts::TAU);
            let cost = format!(
                "0.5*(1.1 + 0.5*sin({weight_freq:.4}*t + {weight_phase:.3})^2)*(x - ({reference}))^2"
            );
            let deviation = if CASE3_RENEWABLES.contains(&i) {
                sinusoids(&mut rng, (1.0, 4.0), (0.05, 0.3))
            } else {
                "0".to_owned()
            };
            let activity = format!("{a}*({reference}) + {deviation}");
            let half_width = rng.random_range(2.0..8.0);
            let lower = format!("{:.2}", base - half_width);
            let upper = format!("{:.2}", base + half_width);
            AgentSpec::parse(a, &cost, &activity, Some(&lower), Some(&upper))
                .expect("case 3 expressions are well formed")
        })
        .collect::<Vec<_>>();
    Scenario {
        name: "case3".into(),
        agents,
        graph: CommGraph::new(n, &ieee33_edges()).expect("feeder is a tree"),
        gains: case3_gains(),
        t_end: 30.0,
        dt: 1e-4,
        x0,
        lambda0: vec![0.0; n],
        theta0: vec![0.0; n],
        theta0p: vec![0.0; n],
        algorithm: Algorithm::ProjFf,
        seed,
    }
}

/// Reference gains with softer signum terms: on a long tree the λ and e
/// chattering of 33 agents otherwise piles up in the balance residual.
fn case3_gains() -> Gains {
    Gains {
        gamma_lambda3: 30.0,
        gamma_e3: 2.0,
        ..Gains::reference()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_name() {
        assert!(matches!(
            builtin_scenario("case4"),
            Err(Error::UnknownScenario(n)) if n == "case4"
        ));
    }

    #[test]
    fn builtins_are_valid() {
        for name in BUILTIN_NAMES {
            builtin_scenario(name).unwrap().validate().unwrap();
        }
    }

    #[test]
    fn case1_values() {
        let s = builtin_scenario("case1").unwrap();
        assert_eq!(s.n(), 6);
        assert!((s.agents[2].cost_value(2.0, 0.0) - 5.2).abs() < 1e-12);
        let total: f64 = s.agents.iter().map(|a| a.b(0.0)).sum();
        assert!((total - 210.0).abs() < 1e-12);
        assert!((s.agents[0].f_xx(3.0, 0.0) - 2.2).abs() < 1e-12);
        let floor = s
            .agents
            .iter()
            .map(|a| a.min_curvature(s.t_end).0)
            .fold(f64::INFINITY, f64::min);
        assert!(floor >= 1.8 - 1e-9, "{floor}");
        assert!(floor < 1.81, "{floor}");
    }

    #[test]
    fn case2_bounds_and_start() {
        let s = builtin_scenario("case2").unwrap();
        assert_eq!(s.x0, vec![0.0, 0.0, 0.0, 0.0, 0.0, -10.0]);
        assert_eq!(s.agents[0].upper_at(7.0), 50.0);
        assert_eq!(s.agents[3].upper_at(7.0), 40.0);
        assert_eq!(s.agents[5].lower_at(7.0), 7.0);
        assert!((s.agents[5].upper_at(10.0) - 20.0).abs() < 1e-12);
        assert!(s.x0[5] < s.agents[5].lower_at(0.0));
    }

    #[test]
    fn feeder_is_a_spanning_tree() {
        let edges = ieee33_edges();
        assert_eq!(edges.len(), 32);
        let g = CommGraph::new(33, &edges).unwrap();
        assert_eq!(g.degree(1), 3);
        assert_eq!(g.degree(5), 3);
    }

    #[test]
    fn case3_is_seeded() {
        assert_eq!(case3(7), case3(7));
        assert_ne!(case3(7).agents[0].cost, case3(8).agents[0].cost);
        let s = case3(CASE3_SEED);
        let generators = s.agents.iter().filter(|a| a.a < 0.0).count();
        assert_eq!(generators, CASE3_GENERATORS.len());
    }
}
