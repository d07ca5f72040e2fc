mod common;

use common::{det, micro};
use cptrack::appearance::{build_cost_automaton, build_label_automaton, ColorClassModel, ColorHistogram, CostParams};
use cptrack::assoc::*;
use cptrack::SolveMode;
use cptrack_cp::{solve, solve_all, Domains, VarId};
use proptest::prelude::*;

fn batch(frames: Vec<Vec<BatchDet>>) -> BatchInstance {
    BatchInstance::new((1..=frames.len() as u32).collect(), frames).unwrap()
}

fn one_class() -> cptrack::appearance::AppearanceAutomaton {
    build_label_automaton(1, &CostParams::default()).unwrap()
}

#[test]
fn constraint_counts_for_two_by_two() {
    let b = batch(vec![vec![det(0.0, 0.0, 1), det(50.0, 0.0, 1)]; 2]);
    let p = ModelParams::exact(&b, 1);
    assert_eq!(p.tau, 3);
    let am = build_model(&b, &p, &one_class()).unwrap();
    assert_eq!(am.t.iter().flatten().count(), 6);
    assert_eq!(am.d.iter().flatten().count(), 6);
    assert_eq!(am.c.iter().flatten().count(), 6);
    let c = am.counts;
    assert_eq!(
        (c.inverse, c.all_different, c.position, c.cost_regular, c.sum),
        (2, 4, 3, 3, 1)
    );
    assert_eq!(c.element, 6);
    let posted = am.model.constraints();
    let kinds = |k: &str| posted.iter().filter(|c| c.kind() == k).count();
    assert_eq!(posted.len(), 2 + 4 + 6 + 3 + 3 + 1);
    assert_eq!(kinds("sum"), 1);
}

#[test]
fn single_detection_has_no_position_constraints() {
    let b = batch(vec![vec![det(5.0, 5.0, 1)]]);
    let p = ModelParams::exact(&b, 1);
    assert_eq!(p.tau, 2);
    let am = build_model(&b, &p, &one_class()).unwrap();
    assert_eq!(am.counts.position, 0);
}

#[test]
fn far_detections_never_share_a_track() {
    let b = batch(vec![
        vec![det(0.0, 0.0, 1), det(100.0, 0.0, 1)],
        vec![det(0.0, 0.0, 1), det(100.0, 0.0, 1)],
    ]);
    let p = ModelParams::exact(&b, 1);
    let am = build_model(&b, &p, &one_class()).unwrap();
    let all = solve_all(&am.model, &Default::default()).unwrap();
    assert!(!all.is_empty());
    for s in &all {
        let t = |i: usize, j: usize| s.value(am.t[i][j]);
        assert_ne!(t(0, 0), t(1, 1));
        assert_ne!(t(0, 1), t(1, 0));
    }
    // oracle: with 3 tracks, frame 1 has 3 * 2 placements; frame 2 then
    // avoids the cross pairing
    let mut expected = 0;
    for a in 1..=3 {
        for b2 in (1..=3).filter(|&x| x != a) {
            for c in 1..=3 {
                for d in (1..=3).filter(|&x| x != c) {
                    if c != b2 && d != a {
                        expected += 1;
                    }
                }
            }
        }
    }
    assert_eq!(all.len(), expected);
}

/// Domains with `t[0][j] = tracks[j]` fixed and propagated.
fn after_first_frame(am: &AssocModel, tracks: &[i64]) -> Domains {
    let mut dom = am.model.domains().clone();
    for (j, &k) in tracks.iter().enumerate() {
        dom.assign(am.t[0][j], k).unwrap();
    }
    dom
}

fn order(cfg: &cptrack_cp::SearchConfig, v: VarId, dom: &Domains) -> Vec<i64> {
    (cfg.value_order.as_ref().unwrap())(v, dom)
}

#[test]
fn branching_prefers_nearest_track_then_fresh() {
    let b = batch(vec![
        vec![det(11.0, 10.0, 1), det(50.0, 50.0, 1)],
        vec![det(10.0, 10.0, 1)],
    ]);
    let mut p = ModelParams::exact(&b, 2);
    p.lambda_x = 100.0;
    p.lambda_y = 100.0;
    let am = build_model(&b, &p, &one_class()).unwrap();
    let cfg = branching_plan(&b, &p, &am);
    let dom = after_first_frame(&am, &[1, 2]);
    assert_eq!(order(&cfg, am.t[1][0], &dom), vec![1, 2, 3]);
    // same ranking with the tracks swapped
    let dom = after_first_frame(&am, &[2, 1]);
    assert_eq!(order(&cfg, am.t[1][0], &dom), vec![2, 1, 3]);
}

#[test]
fn branching_starts_with_fresh_track_one() {
    let b = batch(vec![vec![det(0.0, 0.0, 1), det(50.0, 0.0, 1)]]);
    let p = ModelParams::exact(&b, 2);
    let am = build_model(&b, &p, &one_class()).unwrap();
    let cfg = branching_plan(&b, &p, &am);
    let root = am.model.domains().clone();
    assert_eq!(order(&cfg, am.t[0][0], &root), vec![1]);
    assert_eq!(cfg.var_order[0], am.t[0][0]);
}

#[test]
fn branching_breaks_distance_ties_by_track() {
    let b = batch(vec![
        vec![det(0.0, 10.0, 1), det(20.0, 10.0, 1)],
        vec![det(10.0, 10.0, 1)],
    ]);
    let p = ModelParams::exact(&b, 1);
    let am = build_model(&b, &p, &one_class()).unwrap();
    let cfg = branching_plan(&b, &p, &am);
    let dom = after_first_frame(&am, &[2, 1]);
    assert_eq!(order(&cfg, am.t[1][0], &dom), vec![1, 2, 3]);
}

#[test]
fn unambiguous_pairs_keep_identity() {
    let b = batch(vec![
        vec![det(0.0, 0.0, 1), det(200.0, 0.0, 1)],
        vec![det(5.0, 0.0, 1), det(205.0, 0.0, 1)],
    ]);
    let p = ModelParams::exact(&b, 2);
    let aut = one_class();
    let s = solve_batch(&b, &p, &aut).unwrap();
    let oracle = brute_force_associate(&b, &p, &aut).unwrap();
    assert_eq!(s.objective, 0);
    assert_eq!(oracle.objective, 0);
    assert_eq!(s.tracks[0], s.tracks[1]);
    assert!(s.optimal);
}

#[test]
fn single_detection_single_track() {
    let b = batch(vec![vec![det(1.0, 1.0, 1)]]);
    let s = solve_batch(&b, &ModelParams::exact(&b, 1), &one_class()).unwrap();
    assert_eq!(s.tracks, vec![vec![1]]);
    assert_eq!(s.objective, 0);
}

#[test]
fn motion_bound_splits_tracks() {
    let b = batch(vec![vec![det(0.0, 0.0, 1)], vec![det(100.0, 0.0, 1)]]);
    let p = ModelParams::exact(&b, 1);
    let aut = one_class();
    let s = solve_batch(&b, &p, &aut).unwrap();
    assert_ne!(s.tracks[0][0], s.tracks[1][0]);
    // the first track goes dark in frame 2
    assert_eq!(s.objective, 300);
    assert_eq!(brute_force_associate(&b, &p, &aut).unwrap().objective, 300);
}

#[test]
fn color_outweighs_proximity() {
    let model = ColorClassModel::new(vec![
        ColorHistogram::new(vec![0.5, 0.5]).unwrap(),
        ColorHistogram::new(vec![1.0, 0.0]).unwrap(),
    ])
    .unwrap();
    let aut = build_cost_automaton(&model, &CostParams::default()).unwrap();
    assert_eq!(aut.replay(&[1, 2]), Some(541));
    // class 1 moves right and class 2 left; in frame 2 each sits nearer the other's path
    let b = batch(vec![
        vec![det(0.0, 0.0, 1), det(30.0, 0.0, 2)],
        vec![det(14.0, 0.0, 2), det(16.0, 0.0, 1)],
        vec![det(0.0, 0.0, 2), det(30.0, 0.0, 1)],
    ]);
    let p = ModelParams::exact(&b, 1);
    let s = solve_batch(&b, &p, &aut).unwrap();
    let oracle = brute_force_associate(&b, &p, &aut).unwrap();
    assert_eq!(s.objective, oracle.objective);
    assert_eq!(s.objective, 0);
    let class1 = s.tracks[0][0];
    assert_eq!(s.tracks[1][1], class1);
    assert_eq!(s.tracks[2][1], class1);
    assert!(check_association(&b, &p, &aut, &s).is_empty());
}

#[test]
fn satisfy_mode_returns_a_valid_association() {
    let m = micro(3);
    let mut p = m.params.clone();
    p.mode = SolveMode::Satisfy;
    let s = solve_batch(&m.batch, &p, &m.aut).unwrap();
    assert!(!s.optimal);
    assert!(check_association(&m.batch, &p, &m.aut, &s).is_empty());
}

#[test]
fn checker_reports_violations() {
    let b = batch(vec![vec![det(0.0, 0.0, 1)], vec![det(100.0, 0.0, 1)]]);
    let p = ModelParams::exact(&b, 1);
    let aut = one_class();
    let bad = AssociationSolution {
        tau: 2,
        tracks: vec![vec![1], vec![1]],
        track_costs: vec![0, 0],
        objective: 0,
        optimal: true,
        satisfy_fallback: false,
    };
    let v = check_association(&b, &p, &aut, &bad);
    assert!(v.iter().any(|m| m.contains("too far")), "{v:?}");
    let dup = AssociationSolution {
        tracks: vec![vec![1, 1], vec![2]],
        ..bad.clone()
    };
    let b2 = batch(vec![vec![det(0.0, 0.0, 1), det(1.0, 0.0, 1)], vec![det(0.0, 0.0, 1)]]);
    assert!(!check_association(&b2, &ModelParams::exact(&b2, 1), &aut, &dup).is_empty());
    let wrong_cost = AssociationSolution {
        tracks: vec![vec![1], vec![2]],
        track_costs: vec![0, 0],
        objective: 0,
        ..bad
    };
    let v = check_association(&b, &p, &aut, &wrong_cost);
    assert!(v.iter().any(|m| m.contains("replay")), "{v:?}");
}

#[test]
fn brute_force_refuses_huge_spaces() {
    let b = batch(vec![vec![det(0.0, 0.0, 1); 3]; 12]);
    assert!(brute_force_associate(&b, &ModelParams::exact(&b, 5), &one_class()).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(120))]

    #[test]
    fn solutions_satisfy_model_invariants(seed in any::<u64>()) {
        let m = micro(seed);
        let am = build_model(&m.batch, &m.params, &m.aut).unwrap();
        let cfg = branching_plan(&m.batch, &m.params, &am);
        let (out, _) = solve(&am.model, &cfg).unwrap();
        let sol = out.solution().expect("micro-instances are always feasible");
        prop_assert!(am.model.violations(sol.values()).is_empty());
        let tau = am.tau as i64;
        for i in 0..m.batch.m() {
            let mut ts: Vec<i64> = am.t[i].iter().map(|&v| sol.value(v)).collect();
            for (j, &k) in ts.iter().enumerate() {
                prop_assert_eq!(sol.value(am.d[i][k as usize - 1]), j as i64 + 1);
            }
            ts.sort_unstable();
            prop_assert_eq!(ts, (1..=tau).collect::<Vec<_>>());
        }
        let a = am.extract(&m.batch, sol);
        prop_assert!(check_association(&m.batch, &m.params, &m.aut, &a).is_empty());
        for i in 1..m.batch.m() {
            for (j, k) in a.tracks[i].iter().enumerate() {
                if let Some(pj) = a.tracks[i - 1].iter().position(|x| x == k) {
                    let (p, q) = (&m.batch.dets()[i - 1][pj], &m.batch.dets()[i][j]);
                    prop_assert!((p.cx - q.cx).abs() <= 40.0 && (p.cy - q.cy).abs() <= 40.0);
                }
            }
        }
    }

    #[test]
    fn minimize_equals_brute_force(seed in any::<u64>()) {
        let m = micro(seed);
        let s = solve_batch(&m.batch, &m.params, &m.aut).unwrap();
        let oracle = brute_force_associate(&m.batch, &m.params, &m.aut).unwrap();
        prop_assert!(s.optimal);
        prop_assert_eq!(s.objective, oracle.objective);
        prop_assert!(check_association(&m.batch, &m.params, &m.aut, &s).is_empty());
    }

    #[test]
    fn solving_is_deterministic(seed in any::<u64>()) {
        let m = micro(seed);
        let a = solve_batch(&m.batch, &m.params, &m.aut).unwrap();
        let b = solve_batch(&m.batch, &m.params, &m.aut).unwrap();
        prop_assert_eq!(a, b);
    }
}

#[test]
fn infeasible_tau_is_retried_with_more_tracks() {
    // three classes too far apart to share a track, each in its own frame
    let aut = build_label_automaton(3, &CostParams::default()).unwrap();
    let b = batch(vec![vec![det(0.0, 0.0, 1)], vec![det(0.0, 0.0, 2)], vec![det(0.0, 0.0, 3)]]);
    let p = ModelParams::exact(&b, 1);
    assert_eq!(p.tau, 2);
    assert!(brute_force_associate(&b, &p, &aut).is_err());
    let s = solve_batch(&b, &p, &aut).unwrap();
    assert_eq!(s.tau, 3);
    let wider = ModelParams { tau: 3, ..p };
    assert!(check_association(&b, &wider, &aut, &s).is_empty());
    assert_eq!(s.objective, brute_force_associate(&b, &wider, &aut).unwrap().objective);
}
