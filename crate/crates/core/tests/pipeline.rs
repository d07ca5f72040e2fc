use std::collections::HashSet;

use cptrack::assoc::AssociationSolution;
use cptrack::harness::{generate_scene, ObjectSpec, Occlusion, SceneSpec};
use cptrack::io::write_tracks;
use cptrack::pipeline::*;
use cptrack::{BBox, Config, Frames, Provenance, TrackSet};
use proptest::prelude::*;

fn positions(batches: &[Batch], frames: &[u32]) -> Vec<(usize, usize)> {
    batches
        .iter()
        .map(|b| {
            let first = frames.iter().position(|&f| f == b.frames[0]).unwrap() + 1;
            (first, first + b.frames.len() - 1)
        })
        .collect()
}

#[test]
fn seventy_frames_in_three_batches() {
    let frames: Vec<u32> = (1..=70).collect();
    let b = make_batches(&frames, 30, 5, 10).unwrap();
    assert_eq!(positions(&b, &frames), vec![(1, 30), (26, 55), (51, 70)]);
    assert_eq!(b.iter().map(|b| b.overlap).collect::<Vec<_>>(), vec![0, 5, 5]);
}

#[test]
fn positions_count_non_empty_frames_only() {
    // every other frame id is empty; gaps of one never split
    let frames: Vec<u32> = (1..=70).map(|i| 2 * i).collect();
    let b = make_batches(&frames, 30, 5, 10).unwrap();
    assert_eq!(positions(&b, &frames), vec![(1, 30), (26, 55), (51, 70)]);
}

#[test]
fn long_empty_run_starts_an_independent_batch() {
    let mut frames: Vec<u32> = (1..=30).collect();
    frames.extend(42..=51);
    let b = make_batches(&frames, 30, 5, 10).unwrap();
    assert_eq!(b.len(), 2);
    assert_eq!(b[1].frames, (42..=51).collect::<Vec<u32>>());
    assert_eq!(b[1].overlap, 0);
    // a run of exactly G empty ids does not split
    let mut frames: Vec<u32> = (1..=30).collect();
    frames.extend(41..=50);
    let b = make_batches(&frames, 30, 5, 10).unwrap();
    assert_eq!(b.len(), 2);
    assert_eq!(b[1].overlap, 5);
}

fn solution(tracks: Vec<Vec<u32>>) -> AssociationSolution {
    let tau = tracks.iter().flatten().copied().max().unwrap_or(0) as usize + 1;
    AssociationSolution {
        tau,
        tracks,
        track_costs: vec![0; tau],
        objective: 0,
        optimal: true,
        satisfy_fallback: false,
    }
}

#[test]
fn identical_overlap_inherits_every_track() {
    let mut s = Stitcher::new();
    let first = Batch {
        frames: vec![1, 2, 3],
        overlap: 0,
    };
    let st = s.stitch(&first, &solution(vec![vec![1, 2]; 3]));
    assert_eq!(st.fresh, 2);
    let second = Batch {
        frames: vec![2, 3, 4],
        overlap: 2,
    };
    let st = s.stitch(&second, &solution(vec![vec![2, 1]; 3]));
    assert_eq!((st.inherited, st.fresh), (2, 0));
    // local track 2 holds detection 0 throughout, so it inherits that id
    assert_eq!(s.global_id(4, 0), s.global_id(1, 0));
    assert_eq!(s.global_id(4, 1), s.global_id(1, 1));
}

#[test]
fn independent_batch_gets_fresh_ids() {
    let mut s = Stitcher::new();
    s.stitch(
        &Batch {
            frames: vec![1, 2],
            overlap: 0,
        },
        &solution(vec![vec![1, 2]; 2]),
    );
    let st = s.stitch(
        &Batch {
            frames: vec![20, 21],
            overlap: 0,
        },
        &solution(vec![vec![1, 2]; 2]),
    );
    assert_eq!((st.inherited, st.fresh), (0, 2));
    let old: HashSet<u64> = [s.global_id(1, 0), s.global_id(1, 1)].into_iter().flatten().collect();
    assert!(!old.contains(&s.global_id(20, 0).unwrap()));
    assert!(!old.contains(&s.global_id(20, 1).unwrap()));
}

#[test]
fn majority_overlap_decides_the_id() {
    let mut s = Stitcher::new();
    // previous batch: frames 1-3 on track A, frames 4-5 on track B
    s.stitch(
        &Batch {
            frames: vec![1, 2, 3, 4, 5],
            overlap: 0,
        },
        &solution(vec![vec![1], vec![1], vec![1], vec![2], vec![2]]),
    );
    let a = s.global_id(1, 0).unwrap();
    let b = s.global_id(4, 0).unwrap();
    assert_ne!(a, b);
    let st = s.stitch(
        &Batch {
            frames: vec![1, 2, 3, 4, 5, 6],
            overlap: 5,
        },
        &solution(vec![vec![1]; 6]),
    );
    assert_eq!(st.inherited, 1);
    assert_eq!(s.global_id(6, 0), Some(a));
    // overlap detections keep their earlier ids
    assert_eq!(s.global_id(4, 0), Some(b));
}

fn track(points: &[(u32, f64, Provenance)]) -> TrackSet {
    let mut t = TrackSet::new();
    for &(f, x, p) in points {
        t.push(1, f, BBox::from_center(x, x, 10.0, 10.0), p);
    }
    t
}

#[test]
fn prune_counts_detector_boxes_only() {
    let d = Provenance::Detector;
    let three = track(&[(1, 0.0, d), (2, 0.0, d), (3, 0.0, d)]);
    assert!(prune_tracks(&three, 4).is_empty());
    assert_eq!(prune_tracks(&three, 0), three);
    let mut pts: Vec<(u32, f64, Provenance)> = (1..=4).map(|f| (f, 0.0, d)).collect();
    pts.extend((5..=14).map(|f| (f, 0.0, Provenance::Predicted)));
    let mixed = track(&pts);
    assert_eq!(prune_tracks(&mixed, 4), mixed);
    assert!(prune_tracks(&mixed, 5).is_empty());
}

#[test]
fn gaps_are_interpolated_linearly() {
    let d = Provenance::Detector;
    let t = track(&[(1, 0.0, d), (4, 6.0, d)]);
    let filled = fill_gaps(&t, 2);
    let pts = filled.get(1).unwrap();
    assert_eq!(pts.len(), 4);
    assert_eq!(pts[1].bbox.center(), (2.0, 2.0));
    assert_eq!(pts[2].bbox.center(), (4.0, 4.0));
    assert_eq!(pts[1].provenance, Provenance::Interpolated);
    assert_eq!(pts[1].bbox.width, 10.0);
    let wide = track(&[(1, 0.0, d), (8, 6.0, d)]);
    assert_eq!(fill_gaps(&wide, 5), wide);
    assert_eq!(fill_gaps(&wide, 6).num_boxes(), 8);
    let dense = track(&[(1, 0.0, d), (2, 6.0, d)]);
    assert_eq!(fill_gaps(&dense, 5), dense);
}

fn two_objects(occlusions: Vec<Occlusion>) -> SceneSpec {
    SceneSpec {
        seed: 5,
        frames: 60,
        objects: vec![
            ObjectSpec {
                entry: 1,
                exit: 60,
                left: 100.0,
                top: 100.0,
                vx: 3.0,
                vy: 0.5,
                width: 40.0,
                height: 50.0,
                class: 1,
            },
            ObjectSpec {
                entry: 1,
                exit: 60,
                left: 900.0,
                top: 500.0,
                vx: -2.0,
                vy: -1.0,
                width: 35.0,
                height: 35.0,
                class: 2,
            },
        ],
        occlusions,
        ..SceneSpec::default()
    }
}

#[test]
fn clean_scene_reproduces_ground_truth() {
    let scene = generate_scene(&two_objects(vec![])).unwrap();
    let appearance = Appearance::Histograms {
        hists: &scene.histograms,
        model: Some(&scene.centers),
    };
    let out = track_video(&scene.detections, appearance, &Config::default()).unwrap();
    assert_eq!(out.tracks.len(), 2);
    assert_eq!(out.tracks, scene.gt.renumbered());
    assert_eq!(out.greedy_fallbacks, 0);
    assert_eq!(out.batches, 3);
}

#[test]
fn occluded_object_stays_one_track() {
    let scene = generate_scene(&two_objects(vec![Occlusion {
        object: 0,
        start: 20,
        end: 21,
    }]))
    .unwrap();
    let appearance = Appearance::Histograms {
        hists: &scene.histograms,
        model: Some(&scene.centers),
    };
    let out = track_video(&scene.detections, appearance, &Config::default()).unwrap();
    assert_eq!(out.tracks.len(), 2);
    let first = out.tracks.iter().find(|(_, pts)| pts[0].bbox.left == 100.0).unwrap().1;
    assert_eq!(first.len(), 60);
    let predicted: Vec<u32> = first
        .iter()
        .filter(|p| p.provenance == Provenance::Predicted)
        .map(|p| p.frame)
        .collect();
    assert_eq!(predicted, vec![20, 21]);
    // constant velocity makes the prediction exact
    let gt = scene.gt.get(1).unwrap();
    for p in first {
        let g = &gt[p.frame as usize - 1];
        assert!((p.bbox.left - g.bbox.left).abs() < 1e-9 && (p.bbox.top - g.bbox.top).abs() < 1e-9);
    }
}

#[test]
fn empty_input_gives_no_tracks() {
    let out = track_video(&Frames::new(), Appearance::Labels, &Config::default()).unwrap();
    assert!(out.tracks.is_empty());
    assert_eq!(out.batches, 0);
}

#[test]
fn tracking_is_deterministic() {
    let spec = SceneSpec {
        miss_prob: 0.1,
        fp_rate: 0.5,
        jitter: 1.0,
        ..two_objects(vec![])
    };
    let scene = generate_scene(&spec).unwrap();
    let run = || {
        let appearance = Appearance::Histograms {
            hists: &scene.histograms,
            model: None,
        };
        // a node budget instead of a wall-clock one keeps early stops reproducible
        let cfg = Config {
            batch_time_limit_ms: 0,
            batch_node_limit: Some(2_000),
            ..Config::default()
        };
        write_tracks(&track_video(&scene.detections, appearance, &cfg).unwrap().tracks)
    };
    assert_eq!(run(), run());
}

#[test]
fn missing_histogram_is_an_error() {
    let scene = generate_scene(&two_objects(vec![])).unwrap();
    let mut hists = scene.histograms.clone();
    hists.remove(&(7, 1));
    let appearance = Appearance::Histograms {
        hists: &hists,
        model: Some(&scene.centers),
    };
    assert!(track_video(&scene.detections, appearance, &Config::default()).is_err());
}

fn frame_ids() -> impl Strategy<Value = Vec<u32>> {
    prop::collection::vec(1u32..15, 0..120).prop_map(|steps| {
        let mut f = 0;
        steps
            .into_iter()
            .map(|s| {
                f += if s > 12 { s } else { 1 };
                f
            })
            .collect()
    })
}

fn random_tracks() -> impl Strategy<Value = TrackSet> {
    prop::collection::vec(
        (prop::collection::btree_set(1u32..40, 1..12), 0u8..3, 0.0..100.0f64),
        0..5,
    )
    .prop_map(|tracks| {
        let mut t = TrackSet::new();
        for (id, (frames, prov, x)) in tracks.into_iter().enumerate() {
            for f in frames {
                let p = Provenance::from_flag(if f % 3 == 0 { prov } else { 0 }).unwrap();
                t.push(id as u64 + 1, f, BBox::new(x + f as f64, x, 10.0, 12.0), p);
            }
        }
        t
    })
}

proptest! {
    #[test]
    fn batches_cover_every_frame(frames in frame_ids(), kappa in 2usize..12, beta in 0usize..6) {
        prop_assume!(beta < kappa);
        let batches = make_batches(&frames, kappa, beta, 10).unwrap();
        let mut seen = std::collections::HashMap::new();
        for b in &batches {
            prop_assert!(!b.frames.is_empty() && b.frames.len() <= kappa);
            for f in &b.frames {
                *seen.entry(*f).or_insert(0) += 1;
            }
        }
        for f in &frames {
            prop_assert!(seen.contains_key(f));
        }
        for (i, b) in batches.iter().enumerate() {
            if b.overlap > 0 {
                prop_assert_eq!(b.overlap, beta);
                let prev = &batches[i - 1];
                prop_assert_eq!(&prev.frames[prev.frames.len() - beta..], &b.frames[..beta]);
            }
        }
        let repeats: usize = seen.values().map(|n| n - 1).sum();
        prop_assert_eq!(repeats, batches.iter().map(|b| b.overlap).sum::<usize>());
        if beta * 2 <= kappa {
            prop_assert!(seen.values().all(|&n| n <= 2));
        }
    }

    #[test]
    fn stitched_ids_are_unique_per_frame(
        dets in prop::collection::vec(1usize..4, 1..40),
        seed in any::<u64>(),
        kappa in 3usize..10,
    ) {
        use rand::{seq::SliceRandom, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let frames: Vec<u32> = (1..=dets.len() as u32).collect();
        let batches = make_batches(&frames, kappa, 2, 10).unwrap();
        let mut s = Stitcher::new();
        for b in &batches {
            let tracks = b
                .frames
                .iter()
                .map(|&f| {
                    let mut ks: Vec<u32> = (1..=5).collect();
                    ks.shuffle(&mut rng);
                    ks[..dets[f as usize - 1]].to_vec()
                })
                .collect();
            s.stitch(b, &solution(tracks));
        }
        for &f in &frames {
            let ids: Vec<u64> = (0..dets[f as usize - 1]).map(|j| s.global_id(f, j).unwrap()).collect();
            let unique: HashSet<u64> = ids.iter().copied().collect();
            prop_assert_eq!(unique.len(), ids.len());
        }
    }

    #[test]
    fn prune_and_fill_are_idempotent(t in random_tracks(), beta_d in 0usize..5, gamma_d in 0u32..6) {
        let p = prune_tracks(&t, beta_d);
        prop_assert_eq!(prune_tracks(&p, beta_d), p.clone());
        let f = fill_gaps(&t, gamma_d);
        prop_assert_eq!(fill_gaps(&f, gamma_d), f.clone());
        // existing entries are untouched
        for (id, pts) in t.iter() {
            let filled = f.get(id).unwrap();
            for p in pts {
                prop_assert!(filled.contains(p));
            }
            prop_assert!(filled.iter().filter(|p| !pts.contains(p)).all(|p| p.provenance == Provenance::Interpolated));
        }
    }
}
