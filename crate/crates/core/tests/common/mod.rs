#![allow(dead_code)]

use cptrack::appearance::{build_cost_automaton, AppearanceAutomaton, ColorClassModel, ColorHistogram, CostParams};
use cptrack::assoc::{brute_force_associate, BatchDet, BatchInstance, ModelParams};
use cptrack::Provenance;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A small association problem.
pub struct Micro {
    pub batch: BatchInstance,
    pub params: ModelParams,
    pub aut: AppearanceAutomaton,
}

pub fn det(cx: f64, cy: f64, label: u32) -> BatchDet {
    BatchDet {
        cx,
        cy,
        width: 10.0,
        height: 10.0,
        label,
        provenance: Provenance::Detector,
    }
}

/// At most 4 frames of at most 3 detections, `tau <= 4`, `K <= 3`, with
/// random color centers so that some class switches are allowed and some
/// exceed the cap. Draws are repeated until the instance is feasible.
pub fn micro(seed: u64) -> Micro {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let m = draw(&mut rng);
        if brute_force_associate(&m.batch, &m.params, &m.aut).is_ok() {
            return m;
        }
    }
}

/// One draw of [`micro`], feasible or not.
pub fn draw(rng: &mut ChaCha8Rng) -> Micro {
    let m = rng.random_range(1..=4usize);
    let k = rng.random_range(1..=3u32);
    let centers: Vec<ColorHistogram> = (0..k)
        .map(|_| {
            let bins: Vec<f64> = (0..4).map(|_| rng.random_range(0.0..1.0)).collect();
            ColorHistogram::from_counts(&bins).unwrap()
        })
        .collect();
    let aut = build_cost_automaton(&ColorClassModel::new(centers).unwrap(), &CostParams::default()).unwrap();
    let dets: Vec<Vec<BatchDet>> = (0..m)
        .map(|_| {
            let n = rng.random_range(1..=3usize);
            (0..n)
                .map(|_| {
                    det(
                        rng.random_range(0.0..120.0f64).round(),
                        rng.random_range(0.0..120.0f64).round(),
                        rng.random_range(1..=k),
                    )
                })
                .collect()
        })
        .collect();
    let batch = BatchInstance::new((1..=m as u32).collect(), dets).unwrap();
    let extra = rng.random_range(1..=4 - batch.max_n());
    let params = ModelParams::exact(&batch, extra);
    assert!(params.tau <= 4);
    Micro { batch, params, aut }
}
