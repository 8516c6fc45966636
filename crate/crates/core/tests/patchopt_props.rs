mod common;

use aisc::patchcheck::{connected_components, BinaryMask, Connectivity};
use aisc::patchopt::*;
use common::*;
use proptest::prelude::*;
use rand::Rng;

const FD_STEP: f64 = 1e-6;
const FD_TOL: f64 = 1e-5;

fn palette() -> Palette {
    vec![
        [0.1, 0.2, 0.3],
        [0.8, 0.1, 0.5],
        [0.4, 0.9, 0.2],
        [0.95, 0.95, 0.9],
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(25))]

    #[test]
    fn tv_gradients_match_differences(seed in any::<u64>()) {
        let mut r = rng(seed);
        let x = random_texture(&mut r, 8, 8, 3);
        for mode in [TvMode::Sqrt, TvMode::Squared] {
            let analytic = tv_loss(&x, mode).unwrap().grad;
            let numeric = numeric_grad(&x, FD_STEP, |t| tv_loss(t, mode).unwrap().value);
            prop_assert!(rel_err(analytic.data(), numeric.data()) <= FD_TOL);
        }
    }

    #[test]
    fn nps_gradient_matches_differences(seed in any::<u64>()) {
        let mut r = rng(seed);
        let x = random_texture(&mut r, 8, 8, 3);
        let pal = palette();
        let analytic = nps_loss(&x, &pal).unwrap().grad;
        let numeric = numeric_grad(&x, FD_STEP, |t| nps_loss(t, &pal).unwrap().value);
        prop_assert!(rel_err(analytic.data(), numeric.data()) <= FD_TOL);
    }

    #[test]
    fn placement_gradient_matches_differences(seed in any::<u64>()) {
        let mut r = rng(seed);
        let x = random_texture(&mut r, 8, 8, 3);
        let frame = random_texture(&mut r, 24, 24, 3);
        let weights = Texture::from_fn(24, 24, 3, |_, _, _| r.random_range(-1.0..1.0));
        let side = r.random_range(3..16);
        let bbox = PixelBox { x: r.random_range(0..24 - side), y: r.random_range(0..24 - side), width: side, height: side };
        let f = |t: &Texture| apply_patch(&frame, t, bbox).unwrap().dot(&weights);
        let analytic = apply_patch_backward(&weights, (8, 8), bbox).unwrap();
        let numeric = numeric_grad(&x, FD_STEP, f);
        prop_assert!(rel_err(analytic.data(), numeric.data()) <= FD_TOL);
    }

    #[test]
    fn combine_is_linear(seed in any::<u64>(), w in proptest::collection::vec(-3.0f64..3.0, 1..5)) {
        let mut r = rng(seed);
        let parts: Vec<LossGrad> = w
            .iter()
            .map(|_| LossGrad { value: r.random_range(-10.0..10.0), grad: random_texture(&mut r, 3, 3, 3) })
            .collect();
        let c = combine_loss(&parts, &w).unwrap();
        let mut value = 0.0;
        for (p, wi) in parts.iter().zip(&w) {
            value += wi * p.value;
        }
        prop_assert_eq!(c.value, value);
        prop_assert_eq!(ensemble_adv_loss(&parts, &w).unwrap(), c);
    }

    #[test]
    fn composite_is_idempotent(seed in any::<u64>()) {
        let mut r = rng(seed);
        let (h, w) = (r.random_range(1..20), r.random_range(1..20));
        let frame = random_texture(&mut r, h, w, 3);
        let patch = random_texture(&mut r, h, w, 3);
        let mask = BinaryMask::new(w, h, (0..w * h).map(|_| r.random_bool(0.5)).collect()).unwrap();
        let once = composite(&frame, &mask, &patch).unwrap();
        prop_assert_eq!(composite(&once, &mask, &patch).unwrap(), once);
    }

    #[test]
    fn zero_momentum_is_sign_descent(seed in any::<u64>(), step in 0.001f64..0.2) {
        let mut r = rng(seed);
        let x = random_texture(&mut r, 5, 5, 3);
        let grad = Texture::from_fn(5, 5, 3, |_, _, _| r.random_range(-1.0..1.0));
        let mut state = PatchState::new(x.clone());
        momentum_step(&mut state, &grad, 0.0, step).unwrap();
        for ((got, x0), g) in state.texture.data().iter().zip(x.data()).zip(grad.data()) {
            prop_assert_eq!(*got, (x0 - step * g.signum()).clamp(0.0, 1.0));
        }
    }

    #[test]
    fn updates_stay_in_unit_box(seed in any::<u64>(), lr in 0.0f64..5.0) {
        let mut r = rng(seed);
        let mut a = PatchState::new(random_texture(&mut r, 4, 4, 3));
        let mut m = a.clone();
        for _ in 0..10 {
            let g = Texture::from_fn(4, 4, 3, |_, _, _| r.random_range(-1e3..1e3));
            adam_step(&mut a, &g, AdamParams::new(lr)).unwrap();
            momentum_step(&mut m, &g, 0.9, lr).unwrap();
        }
        prop_assert!(a.texture.data().iter().chain(m.texture.data()).all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn zoom_telescopes(n in 3usize..500, a in 0usize..500, b in 0usize..500, c in 0usize..500) {
        let model = PinholeModel { n, base_box: [0.0, 0.0, 10.0, 10.0] };
        let (a, b, c) = (a % n, b % n, c % n);
        let lhs = zoom_factor(&model, a, b).unwrap() * zoom_factor(&model, b, c).unwrap();
        prop_assert!((lhs - zoom_factor(&model, a, c).unwrap()).abs() < 1e-12);
    }
}

#[test]
fn block_masks_obey_limits() {
    let spec = BlockMaskSpec::new(64, 48, 4, 900);
    for seed in 0..1000 {
        let mask = random_block_mask(&spec, seed).unwrap();
        let report = connected_components(&mask, Connectivity::Eight);
        assert!(report.count() <= spec.max_components, "seed {seed}");
        assert!(report.total_area <= spec.max_area, "seed {seed}");
    }
}

fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

fn anchor_set(logits: &[Vec<f64>]) -> AnchorSet {
    AnchorSet {
        anchors: logits
            .iter()
            .map(|z| Anchor {
                objectness: 0.5,
                class_scores: softmax(z),
            })
            .collect(),
        class_names: (0..logits[0].len()).map(|c| format!("c{c}")).collect(),
        suppress: (0..logits[0].len()).collect(),
        obj_threshold: 0.0,
    }
}

#[test]
fn targeted_gradient_matches_differences() {
    let mut r = rng(11);
    for _ in 0..50 {
        let logits: Vec<Vec<f64>> = (0..6)
            .map(|_| (0..4).map(|_| r.random_range(-2.0..2.0)).collect())
            .collect();
        let target = 2;
        let set = anchor_set(&logits);
        let loss = targeted_cls_loss(&set, target).unwrap();
        // Chain the probability gradient through the softmax Jacobian.
        let mut analytic = Vec::new();
        for (a, g) in set.anchors.iter().zip(&loss.grad_classes) {
            let p = &a.class_scores;
            let gp: f64 = g.iter().zip(p).map(|(gi, pi)| gi * pi).sum();
            analytic.extend(p.iter().zip(g).map(|(pk, gk)| pk * (gk - gp)));
        }
        let mut numeric = Vec::new();
        for i in 0..logits.len() {
            for k in 0..logits[i].len() {
                let eval = |d: f64| {
                    let mut z = logits.clone();
                    z[i][k] += d;
                    targeted_cls_loss(&anchor_set(&z), target).unwrap().value
                };
                numeric.push((eval(FD_STEP) - eval(-FD_STEP)) / (2.0 * FD_STEP));
            }
        }
        assert!(rel_err(&analytic, &numeric) <= FD_TOL);
    }
}
