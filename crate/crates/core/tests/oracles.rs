//! Ground-truth checks against oracles written independently of the library:
//! a dense linear solve for policy evaluation and breadth-first search for the
//! expert.

use std::collections::{HashMap, VecDeque};

use hitl_core::env::{obs_key, CellKind, Observation};
use hitl_core::expert::plan_optimal;
use hitl_core::oracle::{exact_policy_eval, mc_variance};
use hitl_core::{maps, Action, EnvParams, GridWorld, ObsKey, ObservationMode, Pos};

fn world(name: &str, psi: f64) -> GridWorld {
    GridWorld::new(maps::builtin(name).unwrap(), EnvParams::default().with_psi(psi)).unwrap()
}

fn key(w: &GridWorld, p: Pos) -> ObsKey {
    obs_key(&Observation::at(&w.map, p, ObservationMode::Full))
}

/// The expert's moves as a full-observation policy.
fn expert_moves(w: &GridWorld) -> HashMap<ObsKey, Action> {
    let expert = plan_optimal(w).unwrap();
    w.map.free_cells().into_iter().map(|p| (key(w, p), expert.expert_action(p).unwrap())).collect()
}

/// Gaussian elimination with partial pivoting.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, pivot);
        b.swap(col, pivot);
        let (top, rest) = a.split_at_mut(col + 1);
        let pivot_row = &top[col];
        for (offset, row) in rest.iter_mut().enumerate() {
            let f = row[col] / pivot_row[col];
            for (x, &y) in row[col..].iter_mut().zip(&pivot_row[col..]) {
                *x -= f * y;
            }
            b[col + 1 + offset] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x
}

struct LinearTruth {
    q: HashMap<(Pos, Action), f64>,
    var: HashMap<(Pos, Action), f64>,
}

/// Mean and variance of the discounted return by solving the Bellman
/// equations for the first and second moments as linear systems.
fn linear_truth(w: &GridWorld, policy: &HashMap<ObsKey, Action>) -> LinearTruth {
    let cells = w.map.free_cells();
    let index: HashMap<Pos, usize> = cells.iter().enumerate().map(|(i, &p)| (p, i)).collect();
    let n = cells.len();
    let g = w.params.gamma;
    let outcomes = |p: Pos, a: Action| -> Vec<(f64, f64, Option<usize>)> {
        w.transitions(p, a, false)
            .into_iter()
            .map(|(dest, prob)| {
                let (r, _) = w.reward_on_entry(dest);
                (prob, r, index.get(&dest).copied())
            })
            .collect()
    };

    let mut a1 = vec![vec![0.0; n]; n];
    let mut b1 = vec![0.0; n];
    for (i, &p) in cells.iter().enumerate() {
        a1[i][i] += 1.0;
        for (prob, r, next) in outcomes(p, policy[&key(w, p)]) {
            b1[i] += prob * r;
            if let Some(j) = next {
                a1[i][j] -= g * prob;
            }
        }
    }
    let v = solve(a1, b1);

    let mut a2 = vec![vec![0.0; n]; n];
    let mut b2 = vec![0.0; n];
    for (i, &p) in cells.iter().enumerate() {
        a2[i][i] += 1.0;
        for (prob, r, next) in outcomes(p, policy[&key(w, p)]) {
            b2[i] += prob * r * r;
            if let Some(j) = next {
                b2[i] += prob * 2.0 * g * r * v[j];
                a2[i][j] -= g * g * prob;
            }
        }
    }
    let second = solve(a2, b2);

    let (mut q, mut var) = (HashMap::new(), HashMap::new());
    for &p in &cells {
        for a in Action::ALL {
            let (mut mean, mut m) = (0.0, 0.0);
            for (prob, r, next) in outcomes(p, a) {
                let (vn, wn) = next.map_or((0.0, 0.0), |j| (v[j], second[j]));
                mean += prob * (r + g * vn);
                m += prob * (r * r + 2.0 * g * r * vn + g * g * wn);
            }
            q.insert((p, a), mean);
            var.insert((p, a), m - mean * mean);
        }
    }
    LinearTruth { q, var }
}

#[test]
fn exact_evaluation_matches_linear_solve() {
    for (name, psi) in [("trap_world", 0.45), ("trap_world", 0.8), ("shortcut_world", 0.6)] {
        let w = world(name, psi);
        let policy = expert_moves(&w);
        let truth = linear_truth(&w, &policy);
        let ev = exact_policy_eval(&w, ObservationMode::Full, &policy).unwrap();
        for &p in ev.cells() {
            for a in Action::ALL {
                let (tq, tv) = (truth.q[&(p, a)], truth.var[&(p, a)]);
                let (q, v) = (ev.q(p, a).unwrap(), ev.variance(p, a).unwrap());
                assert!((q - tq).abs() < 1e-6 * tq.abs().max(1.0), "{name} {p} {a}: q {q} vs {tq}");
                assert!((v - tv).abs() < 1e-6 * tv.abs().max(1.0), "{name} {p} {a}: var {v} vs {tv}");
            }
        }
    }
}

#[test]
fn corridor_with_certain_moves_has_closed_form_values() {
    let w = GridWorld::new(hitl_core::env::parse_map("S...G").unwrap(), EnvParams { psi: 1.0, ..EnvParams::default() })
        .unwrap();
    let policy: HashMap<ObsKey, Action> = w.map.free_cells().into_iter().map(|p| (key(&w, p), Action::Right)).collect();
    let ev = exact_policy_eval(&w, ObservationMode::Full, &policy).unwrap();
    let (g, step, goal) = (w.params.gamma, w.params.step_penalty, w.params.goal_reward);
    for x in 0..4 {
        // d moves to the goal: d - 1 plain steps, then the goal entry.
        let d = 4 - x;
        let expected = (0..d).map(|k| g.powi(k as i32) * step).sum::<f64>() + g.powi(d as i32 - 1) * goal;
        let q = ev.q(Pos::new(x, 0), Action::Right).unwrap();
        assert!((q - expected).abs() < 1e-9, "x={x}: {q} vs {expected}");
        assert_eq!(ev.variance(Pos::new(x, 0), Action::Right), Some(0.0));
    }
}

/// Slip-free distance to the nearest goal, never passing through a trap.
fn goal_distances(w: &GridWorld) -> HashMap<Pos, usize> {
    let map = &w.map;
    let mut dist = HashMap::new();
    let mut queue = VecDeque::new();
    for p in map.positions().filter(|&p| map.cell(p) == CellKind::Goal) {
        dist.insert(p, 0);
        queue.push_back(p);
    }
    while let Some(p) = queue.pop_front() {
        for q in map.free_cells() {
            if dist.contains_key(&q) {
                continue;
            }
            if Action::ALL.iter().any(|&a| map.destination(q, a) == p) {
                dist.insert(q, dist[&p] + 1);
                queue.push_back(q);
            }
        }
    }
    dist
}

#[test]
fn expert_follows_shortest_safe_paths() {
    for name in maps::builtin_names() {
        let w = world(name, 0.45);
        let expert = plan_optimal(&w).unwrap();
        let dist = goal_distances(&w);
        let (g, step, goal) = (w.params.gamma, w.params.step_penalty, w.params.goal_reward);
        for p in w.map.free_cells() {
            let Some(&d) = dist.get(&p) else {
                assert!(!expert.covers(p), "{name} {p}: expert acts where no goal is reachable");
                continue;
            };
            let next = w.map.destination(p, expert.expert_action(p).unwrap());
            assert_eq!(dist.get(&next), Some(&(d - 1)), "{name} {p}: expert does not shorten the path");
            let expected = (0..d).map(|k| g.powi(k as i32) * step).sum::<f64>() + g.powi(d as i32 - 1) * goal;
            let value = expert.value(p).unwrap();
            assert!((value - expected).abs() < 1e-6, "{name} {p}: value {value} vs {expected}");
        }
    }
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / 2.0
    }
}

#[test]
fn monte_carlo_gap_to_exact_shrinks_with_rollouts() {
    let w = world("trap_world", 0.45);
    let policy = expert_moves(&w);
    let exact = exact_policy_eval(&w, ObservationMode::Full, &policy).unwrap().variance_map("expert");
    let mut gaps = Vec::new();
    for k in [100, 1_000, 10_000] {
        let mc = mc_variance(&w, ObservationMode::Full, &policy, k, 11, "expert").unwrap();
        assert_eq!(mc.values.len(), exact.values.len());
        gaps.push(median(exact.values.iter().map(|(p, v)| (mc.values[p] - v).abs()).collect()));
    }
    assert!(gaps[0] > gaps[1] && gaps[1] > gaps[2], "median gaps {gaps:?}");
}

#[test]
fn monte_carlo_standard_errors_cover_exact_values() {
    let w = world("trap_world", 0.45);
    let policy = expert_moves(&w);
    let exact = exact_policy_eval(&w, ObservationMode::Full, &policy).unwrap().variance_map("expert");
    let mc = mc_variance(&w, ObservationMode::Full, &policy, 5_000, 5, "expert").unwrap();
    let se = mc.stderr.as_ref().unwrap();
    let within = exact.values.iter().filter(|(p, v)| (mc.values[p] - *v).abs() <= 3.0 * se[p]).count();
    // Each cell misses its 3 SE band with probability near 0.3%.
    assert!(within + 1 >= exact.values.len(), "{within} of {} cells within 3 SE", exact.values.len());
}
