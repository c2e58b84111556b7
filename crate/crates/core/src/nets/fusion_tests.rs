use rand::{Rng as _, SeedableRng};

use super::*;
use crate::error::Error;
use crate::rng::Rng;
use crate::stream::ImageShape;
use crate::tensor::Matrix;

fn shape() -> ImageShape {
    ImageShape {
        height: 4,
        width: 4,
        channels: 1,
    }
}

fn spec(out: usize) -> ExtractorSpec {
    ExtractorSpec {
        widths: vec![2, out],
        kernel_size: 3,
        pool_after: vec![true, false],
        bias: true,
        masked: true,
        mask_gain: Default::default(),
    }
}

fn extractor(rng: &mut Rng, out: usize) -> MaskedFeatureExtractor {
    let mut e = MaskedFeatureExtractor::new(shape(), &spec(out), rng).unwrap();
    for l in &mut e.layers {
        l.randomize_bias(rng, 0.2);
    }
    e
}

fn layout(d: usize) -> FusionLayout {
    FusionLayout {
        transforms: true,
        common_dim: d,
        fusion: FusionMode::Concatenate,
        fused_head: true,
        freeze_old: true,
        freeze_old_transforms: false,
    }
}

fn old_branch(rng: &mut Rng, round: usize, d: usize) -> Branch {
    let extractor = extractor(rng, 3);
    let transform = Some(Linear::new(3, d, rng));
    Branch {
        round,
        extractor,
        transform,
    }
}

fn batch(rng: &mut Rng, n: usize) -> Matrix {
    Matrix::from_vec(n, 16, (0..n * 16).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

#[test]
fn first_round_has_single_branch() {
    let mut rng = Rng::seed_from_u64(1);
    let e = extractor(&mut rng, 3);
    let m = build_fusion_model(vec![], e, 0, &layout(5), 0, 2, None, None, &mut rng).unwrap();
    assert_eq!(m.branch_count(), 1);
    assert_eq!(m.fused_dim(), 5);
    assert_eq!(m.num_classes(), 2);
}

#[test]
fn concatenated_head_width() {
    let mut rng = Rng::seed_from_u64(2);
    let old = vec![old_branch(&mut rng, 0, 64), old_branch(&mut rng, 1, 64)];
    let e = extractor(&mut rng, 3);
    let m = build_fusion_model(old, e, 2, &layout(64), 4, 2, None, None, &mut rng).unwrap();
    assert_eq!(m.fused_head.as_ref().unwrap().in_dim, 192);
    let x = batch(&mut rng, 3);
    assert_eq!(m.fused_logits(&x).unwrap().cols, 6);
    assert_eq!(m.aux_logits(&x).unwrap().cols, 6);
    assert!(m.old.iter().all(|b| b.extractor.frozen));
}

#[test]
fn average_fusion_keeps_common_dim() {
    let mut rng = Rng::seed_from_u64(3);
    let old = vec![old_branch(&mut rng, 0, 4)];
    let e = extractor(&mut rng, 3);
    let l = FusionLayout {
        fusion: FusionMode::Average,
        ..layout(4)
    };
    let m = build_fusion_model(old, e, 1, &l, 2, 2, None, None, &mut rng).unwrap();
    assert_eq!(m.fused_dim(), 4);
    let x = batch(&mut rng, 2);
    let fa = m.old[0].transform.as_ref().unwrap().forward(&m.old[0].extractor.extract_features(&x).unwrap()).unwrap();
    let fb = m.current.transform.as_ref().unwrap().forward(&m.current.extractor.extract_features(&x).unwrap()).unwrap();
    let fused = m.embed(&x).unwrap();
    for i in 0..fused.data.len() {
        assert!((fused.data[i] - 0.5 * (fa.data[i] + fb.data[i])).abs() < 1e-12);
    }
}

#[test]
fn inconsistent_common_dim_is_error() {
    let mut rng = Rng::seed_from_u64(4);
    let old = vec![old_branch(&mut rng, 0, 8)];
    let e = extractor(&mut rng, 3);
    let r = build_fusion_model(old, e, 1, &layout(6), 2, 2, None, None, &mut rng);
    assert!(matches!(r, Err(Error::InvalidArgument(_))));
}

#[test]
fn unfreezing_adds_old_parameters_to_theta() {
    let mut rng = Rng::seed_from_u64(5);
    let old = vec![old_branch(&mut rng, 0, 4)];
    let e = extractor(&mut rng, 3);
    let mut frozen = build_fusion_model(old.clone(), e.clone(), 1, &layout(4), 2, 2, None, None, &mut rng).unwrap();
    let l = FusionLayout {
        freeze_old: false,
        ..layout(4)
    };
    let mut open = build_fusion_model(old.clone(), e, 1, &l, 2, 2, None, None, &mut rng).unwrap();
    let extra = old[0].extractor.clone().params_mut().iter().map(|p| p.len()).sum::<usize>();
    assert_eq!(open.trainable_param_count(), frozen.trainable_param_count() + extra);
}

#[test]
fn zero_heads_give_zero_logits() {
    let mut rng = Rng::seed_from_u64(6);
    let e = extractor(&mut rng, 3);
    let mut m = build_fusion_model(vec![], e, 0, &layout(4), 0, 3, None, None, &mut rng).unwrap();
    m.fused_head = Some(Linear::zeros(4, 3));
    m.aux_head = Linear::zeros(3, 3);
    let x = batch(&mut rng, 2);
    assert!(m.fused_logits(&x).unwrap().data.iter().all(|&v| v == 0.0));
    assert!(m.aux_logits(&x).unwrap().data.iter().all(|&v| v == 0.0));
}

#[test]
fn old_extractor_only_reaches_fused_path() {
    let mut rng = Rng::seed_from_u64(7);
    let old = vec![old_branch(&mut rng, 0, 4)];
    let e = extractor(&mut rng, 3);
    let m = build_fusion_model(old, e, 1, &layout(4), 2, 2, None, None, &mut rng).unwrap();
    let x = batch(&mut rng, 4);
    let mut p = m.clone();
    p.old[0].extractor.layers[1].weight.iter_mut().for_each(|w| *w += 0.3);
    assert_ne!(m.fused_logits(&x).unwrap(), p.fused_logits(&x).unwrap());
    assert_eq!(m.aux_logits(&x).unwrap(), p.aux_logits(&x).unwrap());
}

#[test]
fn grown_head_keeps_old_block() {
    let mut rng = Rng::seed_from_u64(8);
    let e = extractor(&mut rng, 3);
    let m1 = build_fusion_model(vec![], e, 0, &layout(4), 0, 2, None, None, &mut rng).unwrap();
    let old = vec![Branch {
        extractor: {
            let mut x = m1.current.extractor.clone();
            x.freeze();
            x
        },
        ..m1.current.clone()
    }];
    let e2 = extractor(&mut rng, 3);
    let m2 = build_fusion_model(old, e2, 1, &layout(4), 2, 2, m1.fused_head.as_ref(), None, &mut rng).unwrap();
    let h1 = m1.fused_head.as_ref().unwrap();
    let h2 = m2.fused_head.as_ref().unwrap();
    assert_eq!((h2.in_dim, h2.out_dim), (8, 4));
    for o in 0..2 {
        assert_eq!(h2.weight[o * 8..o * 8 + 4], h1.weight[o * 4..o * 4 + 4]);
    }
}

/// Every trainable parameter's gradient of `<probe, logits>` against central differences.
#[test]
fn model_backward_matches_finite_differences() {
    for fusion in [FusionMode::Concatenate, FusionMode::Average] {
        for freeze_old in [true, false] {
            let mut rng = Rng::seed_from_u64(9);
            let old = vec![old_branch(&mut rng, 0, 3)];
            let e = extractor(&mut rng, 3);
            let l = FusionLayout {
                fusion,
                freeze_old,
                ..layout(3)
            };
            let mut m = build_fusion_model(old, e, 1, &l, 2, 1, None, None, &mut rng).unwrap();
            for layer in &mut m.current.extractor.layers {
                if let Some(e) = &mut layer.mask_logits {
                    e.iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
                }
            }
            let x = batch(&mut rng, 3);
            let pf = batch(&mut rng, 1).data[..9].to_vec();
            let pa = batch(&mut rng, 1).data[..9].to_vec();
            let objective = |m: &FusionClassifier| -> f64 {
                let f = m.fused_logits(&x).unwrap();
                let a = m.aux_logits(&x).unwrap();
                f.data.iter().zip(&pf).map(|(u, v)| u * v).sum::<f64>() + a.data.iter().zip(&pa).map(|(u, v)| u * v).sum::<f64>()
            };
            let (_, trace) = m.forward_train(&x, None).unwrap();
            let df = Matrix::from_vec(3, 3, pf.clone()).unwrap();
            let da = Matrix::from_vec(3, 3, pa.clone()).unwrap();
            let grads = m.backward(&trace, Some(&df), &da).unwrap().into_flat();
            let shapes: Vec<usize> = m.trainable_params_mut().iter().map(|p| p.len()).collect();
            assert_eq!(shapes, grads.iter().map(Vec::len).collect::<Vec<_>>());
            let eps = 1e-6;
            for (t, len) in shapes.iter().enumerate() {
                for i in 0..*len {
                    let mut p = m.clone();
                    p.trainable_params_mut()[t][i] += eps;
                    let mut q = m.clone();
                    q.trainable_params_mut()[t][i] -= eps;
                    let num = (objective(&p) - objective(&q)) / (2.0 * eps);
                    let a = grads[t][i];
                    let s = a.abs().max(num.abs());
                    assert!(s < 1e-9 || (a - num).abs() / s < 1e-4, "{fusion:?} tensor {t}[{i}]: {a} vs {num}");
                }
            }
        }
    }
}

#[test]
fn cached_features_require_frozen_extractor() {
    let mut rng = Rng::seed_from_u64(10);
    let old = vec![old_branch(&mut rng, 0, 3)];
    let e = extractor(&mut rng, 3);
    let m = build_fusion_model(old, e, 1, &layout(3), 2, 1, None, None, &mut rng).unwrap();
    let x = batch(&mut rng, 2);
    let cached = vec![m.old[0].extractor.extract_features(&x).unwrap()];
    let (a, _) = m.forward_train(&x, Some(&cached)).unwrap();
    let (b, _) = m.forward_train(&x, None).unwrap();
    assert_eq!(a.fused_logits, b.fused_logits);
    let mut open = m.clone();
    open.old[0].extractor.frozen = false;
    assert!(open.forward_train(&x, Some(&cached)).is_err());
}
