use cptrack::appearance::*;
use cptrack::BBox;
use proptest::prelude::*;

fn h(bins: &[f64]) -> ColorHistogram {
    ColorHistogram::from_counts(bins).unwrap()
}

fn dist(p: &ColorHistogram, q: &ColorHistogram) -> f64 {
    bhattacharyya_distance(p, q).unwrap()
}

/// `sqrt(1 - sum sqrt(p q))` evaluated directly.
fn coefficient_distance(p: &[f64], q: &[f64]) -> f64 {
    let bc: f64 = p.iter().zip(q).map(|(a, b)| (a * b).sqrt()).sum();
    (1.0 - bc).max(0.0).sqrt()
}

fn histogram(n: usize) -> impl Strategy<Value = ColorHistogram> {
    prop::collection::vec(0.0..1.0f64, n)
        .prop_filter("nonzero", |v| v.iter().sum::<f64>() > 1e-3)
        .prop_map(|v| h(&v))
}

#[test]
fn distance_matches_coefficient_form() {
    let p = h(&[0.5, 0.5]);
    let q = h(&[1.0, 0.0]);
    let d = dist(&p, &q);
    assert!((d - (1.0 - 0.5f64.sqrt()).sqrt()).abs() < 1e-12);
    assert!((d - 0.5412).abs() < 5e-5);
    assert_eq!(dist(&h(&[1.0, 0.0, 0.0]), &h(&[0.0, 0.3, 0.7])), 1.0);
}

#[test]
fn kmeans_with_one_cluster_per_histogram() {
    let hs = vec![h(&[1.0, 0.0, 0.0]), h(&[0.0, 1.0, 0.0]), h(&[0.2, 0.2, 0.6])];
    let c = kmeans_cluster(&hs, 3, 9).unwrap();
    let mut centers: Vec<Vec<f64>> = c.model.centers().iter().map(|c| c.bins().to_vec()).collect();
    let mut inputs: Vec<Vec<f64>> = hs.iter().map(|c| c.bins().to_vec()).collect();
    centers.sort_by(|a, b| a.partial_cmp(b).unwrap());
    inputs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    assert_eq!(centers, inputs);
    let mut labels = c.labels.clone();
    labels.sort_unstable();
    assert_eq!(labels, vec![1, 2, 3]);
}

#[test]
fn kmeans_on_identical_histograms() {
    let one = h(&[0.1, 0.2, 0.3, 0.4]);
    let c = kmeans_cluster(&vec![one.clone(); 5], 1, 0).unwrap();
    assert_eq!(c.model.centers()[0].bins(), one.bins());
    assert!(c.labels.iter().all(|&l| l == 1));
}

#[test]
fn kmeans_separates_two_groups() {
    let a = [
        h(&[0.9, 0.1, 0.0, 0.0]),
        h(&[0.8, 0.2, 0.0, 0.0]),
        h(&[0.85, 0.1, 0.05, 0.0]),
    ];
    let b = [h(&[0.0, 0.0, 0.3, 0.7]), h(&[0.0, 0.05, 0.25, 0.7]), h(&[0.0, 0.0, 0.4, 0.6])];
    let all: Vec<ColorHistogram> = a.iter().chain(&b).cloned().collect();
    let max_intra = a
        .iter()
        .flat_map(|x| a.iter().map(move |y| (x, y)))
        .chain(b.iter().flat_map(|x| b.iter().map(move |y| (x, y))))
        .map(|(x, y)| dist(x, y))
        .fold(0.0, f64::max);
    let min_inter = a
        .iter()
        .flat_map(|x| b.iter().map(move |y| dist(x, y)))
        .fold(1.0, f64::min);
    assert!(max_intra < min_inter);
    for seed in 0..10 {
        let c = kmeans_cluster(&all, 2, seed).unwrap();
        assert!(c.labels[..3].iter().all(|&l| l == c.labels[0]), "seed {seed}");
        assert!(c.labels[3..].iter().all(|&l| l == c.labels[3]), "seed {seed}");
        assert_ne!(c.labels[0], c.labels[3], "seed {seed}");
    }
}

#[test]
fn kmeans_rejects_bad_k() {
    let hs = vec![h(&[1.0, 0.0])];
    assert!(kmeans_cluster(&hs, 0, 0).is_err());
    assert!(kmeans_cluster(&hs, 2, 0).is_err());
}

#[test]
fn class_assignment_examples() {
    let centers = vec![h(&[1.0, 0.0, 0.0]), h(&[0.0, 1.0, 0.0]), h(&[0.0, 0.0, 1.0])];
    let model = ColorClassModel::new(centers).unwrap();
    assert_eq!(assign_color_class(&h(&[0.0, 0.0, 1.0]), &model).unwrap(), 3);
    assert_eq!(assign_color_class(&h(&[0.5, 0.5, 0.0]), &model).unwrap(), 1);
    let near2 = h(&[0.2, 0.7, 0.1]);
    let d1 = coefficient_distance(near2.bins(), model.centers()[0].bins());
    let d2 = coefficient_distance(near2.bins(), model.centers()[1].bins());
    assert!(d2 < d1);
    assert_eq!(assign_color_class(&near2, &model).unwrap(), 2);
}

#[test]
fn occlusion_costs_replay() {
    let model = ColorClassModel::new(vec![h(&[1.0, 0.0]), h(&[0.0, 1.0])]).unwrap();
    let params = CostParams::default();
    assert_eq!((params.c_occ, params.c_stay), (300, 30));
    let a = build_cost_automaton(&model, &params).unwrap();
    let e = a.empty();
    assert_eq!(a.replay(&[1, e, e, 1]), Some(300 + 30));
    assert_eq!(a.replay(&[e, e, 2, 2]), Some(0));
    assert_eq!(a.replay(&[2, e]), Some(300));
    // distinct disjoint classes are at distance 1, above the cap
    assert_eq!(a.replay(&[1, 2]), None);
}

#[test]
fn identical_centers_switch_for_free() {
    let c = h(&[0.3, 0.7]);
    let model = ColorClassModel::new(vec![c.clone(), c]).unwrap();
    let a = build_cost_automaton(&model, &CostParams::default()).unwrap();
    assert_eq!(a.replay(&[1, 2, 1]), Some(0));
    let e = a.empty();
    assert_eq!(a.replay(&[1, e, 2]), Some(300));
}

#[test]
fn cross_class_cost_is_scaled_distance() {
    let p = h(&[0.5, 0.5]);
    let q = h(&[1.0, 0.0]);
    let model = ColorClassModel::new(vec![p.clone(), q.clone()]).unwrap();
    let a = build_cost_automaton(&model, &CostParams::default()).unwrap();
    let expected = (1000.0 * coefficient_distance(p.bins(), q.bins())).round() as i64;
    assert_eq!(expected, 541);
    assert_eq!(a.replay(&[1, 2]), Some(expected));
    assert_eq!(a.replay(&[2, 1]), Some(expected));
    let tight = CostParams {
        cap: 540,
        ..CostParams::default()
    };
    let b = build_cost_automaton(&model, &tight).unwrap();
    assert_eq!(b.replay(&[1, 2]), None);
}

#[test]
fn label_automaton_keeps_classes_apart() {
    let a = build_label_automaton(3, &CostParams::default()).unwrap();
    assert_eq!(a.k(), 3);
    assert_eq!(a.empty(), 4);
    assert_eq!(a.automaton().states(), 7);
    assert_eq!(a.replay(&[3, 3, 4, 3]), Some(300));
    assert_eq!(a.replay(&[3, 1]), None);
}

fn red_blue(width: usize, height: usize) -> RgbImage {
    RgbImage::from_fn(width, height, |x, _| if x < width / 2 { [255, 0, 0] } else { [0, 0, 255] })
}

#[test]
fn uniform_patch_is_one_bin() {
    let img = RgbImage::from_fn(8, 6, |_, _| [250, 3, 3]);
    let hist = extract_histogram(&img, &BBox::new(1.0, 1.0, 4.0, 3.0)).unwrap();
    let mass: Vec<f64> = hist.bins().iter().copied().filter(|&b| b > 0.0).collect();
    assert_eq!(mass, vec![1.0]);
    assert_eq!(hist.len(), RGB_BINS);
    // red falls in the top red bin: index (7 * 8 + 0) * 8 + 0
    assert_eq!(hist.bins()[7 * 64], 1.0);
}

#[test]
fn half_red_half_blue_patch() {
    let img = red_blue(10, 4);
    let hist = extract_histogram(&img, &BBox::new(0.0, 0.0, 10.0, 4.0)).unwrap();
    let mass: Vec<f64> = hist.bins().iter().copied().filter(|&b| b > 0.0).collect();
    assert_eq!(mass, vec![0.5, 0.5]);
    assert_eq!(hist.bins()[7 * 64], 0.5);
    assert_eq!(hist.bins()[7], 0.5);
}

#[test]
fn clipped_box_uses_visible_pixels_only() {
    let img = RgbImage::from_fn(12, 9, |x, y| [(x * 20) as u8, (y * 25) as u8, ((x + y) * 10) as u8]);
    let clipped = extract_histogram(&img, &BBox::new(7.0, -4.0, 10.0, 8.0)).unwrap();
    let sub = RgbImage::from_fn(5, 4, |x, y| {
        let p = img.pixel(x + 7, y);
        [p[0] as u8, p[1] as u8, p[2] as u8]
    });
    let whole = extract_histogram(&sub, &BBox::new(0.0, 0.0, 5.0, 4.0)).unwrap();
    assert_eq!(clipped.bins(), whole.bins());
    assert!(extract_histogram(&img, &BBox::new(20.0, 0.0, 5.0, 5.0)).is_err());
}

#[test]
fn ppm_round_trip() {
    let img = red_blue(6, 3);
    let bytes = img.to_ppm();
    assert!(bytes.starts_with(b"P6\n6 3\n255\n"));
    assert_eq!(RgbImage::parse_ppm(&bytes).unwrap(), img);
    let mut commented = b"P6\n# a comment\n6 3\n255\n".to_vec();
    commented.extend_from_slice(&bytes[11..]);
    assert_eq!(RgbImage::parse_ppm(&commented).unwrap(), img);
    assert!(RgbImage::parse_ppm(b"P3\n1 1\n255\n").is_err());
    assert!(RgbImage::parse_ppm(&bytes[..bytes.len() - 1]).is_err());
}

#[test]
fn wide_ppm_bins_like_narrow() {
    let mut bytes = b"P6\n1 1\n65535\n".to_vec();
    bytes.extend_from_slice(&[0xff, 0xff, 0x00, 0x00, 0x00, 0x10]);
    let img = RgbImage::parse_ppm(&bytes).unwrap();
    let hist = extract_histogram(&img, &BBox::new(0.0, 0.0, 1.0, 1.0)).unwrap();
    assert_eq!(hist.bins()[7 * 64], 1.0);
}

proptest! {
    #[test]
    fn distance_axioms(p in histogram(6), q in histogram(6)) {
        let d = dist(&p, &q);
        prop_assert_eq!(d, dist(&q, &p));
        prop_assert!(dist(&p, &p) <= 1e-9);
        prop_assert!((0.0..=1.0).contains(&d));
        prop_assert!((d - coefficient_distance(p.bins(), q.bins())).abs() < 1e-6);
    }

    #[test]
    fn kmeans_objective_never_increases(
        hs in prop::collection::vec(histogram(5), 2..20),
        k in 1usize..5,
        seed in 0u64..1000,
    ) {
        let k = k.min(hs.len());
        let c = kmeans_cluster(&hs, k, seed).unwrap();
        for w in c.objective.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-12, "{:?}", c.objective);
        }
        // the reported labels are the nearest-center labels of the final model
        for (hh, &l) in hs.iter().zip(&c.labels) {
            let nearest = assign_color_class(hh, &c.model).unwrap();
            let dl = dist(hh, &c.model.centers()[l as usize - 1]);
            let dn = dist(hh, &c.model.centers()[nearest as usize - 1]);
            prop_assert!((dl - dn).abs() < 1e-12);
        }
    }

    #[test]
    fn kmeans_is_deterministic(hs in prop::collection::vec(histogram(4), 3..12), seed in 0u64..100) {
        let a = kmeans_cluster(&hs, 3, seed).unwrap();
        let b = kmeans_cluster(&hs, 3, seed).unwrap();
        prop_assert_eq!(a.model, b.model);
        prop_assert_eq!(a.labels, b.labels);
    }

    #[test]
    fn classification_ignores_bin_order(
        hh in histogram(6),
        centers in prop::collection::vec(histogram(6), 1..5),
        perm in Just((0..6usize).collect::<Vec<_>>()).prop_shuffle(),
    ) {
        let shuffle = |x: &ColorHistogram| h(&perm.iter().map(|&i| x.bins()[i]).collect::<Vec<_>>());
        let model = ColorClassModel::new(centers.clone()).unwrap();
        let permuted = ColorClassModel::new(centers.iter().map(shuffle).collect()).unwrap();
        prop_assert_eq!(
            assign_color_class(&hh, &model).unwrap(),
            assign_color_class(&shuffle(&hh), &permuted).unwrap()
        );
    }

    #[test]
    fn one_class_words_with_gaps_are_accepted(
        k in 1usize..5,
        class in 1usize..5,
        pattern in prop::collection::vec(any::<bool>(), 1..20),
    ) {
        let class = class.min(k) as i64;
        let a = build_label_automaton(k, &CostParams::default()).unwrap();
        let word: Vec<i64> = pattern.iter().map(|&v| if v { class } else { a.empty() }).collect();
        let cost = a.replay(&word);
        prop_assert!(cost.is_some());
        // oracle: c_occ for the first missing frame after a sighting, c_stay for each further one
        let mut expected = 0;
        let mut seen = false;
        let mut prev_visible = false;
        for &v in &pattern {
            if !v && seen {
                expected += if prev_visible { 300 } else { 30 };
            }
            seen |= v;
            prev_visible = v;
        }
        prop_assert_eq!(cost, Some(expected));
    }
}
