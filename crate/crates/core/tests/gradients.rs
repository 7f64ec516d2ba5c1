//! Hand-written backprop against central finite differences.

use langsim_core::refmodel::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const STEP: f64 = 1e-5;
const TOL: f64 = 1e-4;
/// Denominator floor per unit of |f|. Central differences carry roundoff of
/// about eps·|f|/STEP ≈ 2e-11·|f|, so coordinates with a true gradient near 0
/// are compared against this floor instead of their own magnitude.
const FLOOR: f64 = 1e-6;

fn rel_err(a: f64, b: f64, f: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(FLOOR * f.abs().max(1.0))
}

fn worst_error(model: &ToyModel, f: impl Fn(&ToyModel) -> (f64, Vec<f64>)) -> f64 {
    let (f0, grad) = f(model);
    let mut m = model.clone();
    let mut worst: f64 = 0.0;
    for i in 0..grad.len() {
        let x = m.theta[i];
        m.theta[i] = x + STEP;
        let up = f(&m).0;
        m.theta[i] = x - STEP;
        let down = f(&m).0;
        m.theta[i] = x;
        worst = worst.max(rel_err(grad[i], (up - down) / (2.0 * STEP), f0));
    }
    worst
}

fn random_sentence(rng: &mut ChaCha8Rng, vocab: usize) -> Vec<u32> {
    let len = rng.random_range(1..=20);
    (0..len).map(|_| rng.random_range(0..vocab as u32)).collect()
}

#[test]
fn masked_lm_gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut worst: f64 = 0.0;
    for draw in 0..100u64 {
        let model = ToyModel::random(ModelDims::default(), 1000 + draw);
        let s = random_sentence(&mut rng, 64);
        let pos = mask_positions(s.len(), draw);
        worst = worst.max(worst_error(&model, |m| mlm_with_positions(m, &s, &pos).unwrap()));
    }
    assert!(worst <= TOL, "worst relative error {worst:e}");
}

#[test]
fn task_head_gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for draw in 0..100u64 {
        let model = ToyModel::random(ModelDims::default(), 2000 + draw);
        let head = TaskHead::random(3, 64, draw).unwrap();
        let s = random_sentence(&mut rng, 64);
        let label = rng.random_range(0..3);
        worst = worst.max(worst_error(&model, |m| taskhead_logprob_and_grad(m, &head, &s, label).unwrap()));
    }
    assert!(worst <= TOL, "worst relative error {worst:e}");
}

#[test]
fn mlm_seeded_masking_is_reproducible() {
    let model = ToyModel::random(ModelDims::default(), 3);
    let s = [1u32, 5, 9, 12, 40, 41, 2, 7];
    assert_eq!(mlm_logprob_and_grad(&model, &s, 5).unwrap(), mlm_logprob_and_grad(&model, &s, 5).unwrap());
}
