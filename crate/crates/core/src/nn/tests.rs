use ndarray::{s, Array2, Array3};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use super::*;
use crate::rng::substream;

fn random_layer(cell: CellKind, d: usize, h: usize, dirs: usize, seed: u64) -> RecurrentLayer<f64> {
    let mut rng = substream(seed, "test-layer", &[]);
    let g = cell.gates() * h;
    let mut gen = |r, c| Array2::from_shape_simple_fn((r, c), || 0.5 * { let v: f64 = StandardNormal.sample(&mut rng); v });
    let directions = (0..dirs)
        .map(|_| CellParams {
            w_input: gen(g, d),
            w_recurrent: gen(g, h),
            bias: gen(1, g).row(0).to_owned(),
        })
        .collect();
    RecurrentLayer {
        cell,
        merge: MergeMode::Concat,
        return_sequences: true,
        directions,
    }
}

fn random_input(b: usize, t: usize, d: usize, seed: u64) -> Array3<f64> {
    let mut rng = substream(seed, "test-input", &[]);
    Array3::from_shape_simple_fn((b, t, d), || { let v: f64 = StandardNormal.sample(&mut rng); v })
}

/// Runs one direction with the single-step reference cell.
fn reference_direction(layer: &RecurrentLayer<f64>, dir: usize, x: &Array2<f64>) -> Vec<Vec<f64>> {
    let p = &layer.directions[dir];
    let h_size = p.hidden();
    let steps = x.nrows();
    let mut h = vec![0.0; h_size];
    let mut c = vec![0.0; h_size];
    let mut out = vec![vec![]; steps];
    for k in 0..steps {
        let t = if dir == 0 { k } else { steps - 1 - k };
        let xt = x.row(t).to_vec();
        match layer.cell {
            CellKind::Lstm => {
                let (h2, c2) = lstm_step(&xt, &h, &c, p).unwrap();
                h = h2;
                c = c2;
            }
            CellKind::Gru => h = gru_step(&xt, &h, p).unwrap(),
        }
        out[t] = h.clone();
    }
    out
}

#[test]
fn bidirectional_matches_step_oracle() {
    for cell in [CellKind::Lstm, CellKind::Gru] {
        let layer = random_layer(cell, 4, 3, 2, 7);
        let x = random_input(1, 5, 4, 8).index_axis_move(ndarray::Axis(0), 0);
        let out = bidirectional_forward(&layer, x.view()).unwrap();
        let fwd = reference_direction(&layer, 0, &x);
        let bwd = reference_direction(&layer, 1, &x);
        assert_eq!(out.dim(), (5, 6));
        for t in 0..5 {
            for j in 0..3 {
                assert!((out[[t, j]] - fwd[t][j]).abs() < 1e-12);
                assert!((out[[t, 3 + j]] - bwd[t][j]).abs() < 1e-12);
            }
        }

        let mut last = layer.clone();
        last.return_sequences = false;
        let fin = bidirectional_forward(&last, x.view()).unwrap();
        assert_eq!(fin.dim(), (1, 6));
        for j in 0..3 {
            assert!((fin[[0, j]] - fwd[4][j]).abs() < 1e-12);
            assert!((fin[[0, 3 + j]] - bwd[0][j]).abs() < 1e-12);
        }

        let mut summed = layer.clone();
        summed.merge = MergeMode::Sum;
        let sm = bidirectional_forward(&summed, x.view()).unwrap();
        assert_eq!(sm.dim(), (5, 3));
        assert!((sm[[2, 1]] - fwd[2][1] - bwd[2][1]).abs() < 1e-12);
    }
}

#[test]
fn palindrome_with_tied_weights_mirrors() {
    let mut layer = random_layer(CellKind::Lstm, 3, 4, 2, 11);
    layer.directions[1] = layer.directions[0].clone();
    let half = random_input(1, 3, 3, 12).index_axis_move(ndarray::Axis(0), 0);
    let mut x = Array2::zeros((6, 3));
    for t in 0..3 {
        x.row_mut(t).assign(&half.row(t));
        x.row_mut(5 - t).assign(&half.row(t));
    }
    let out = bidirectional_forward(&layer, x.view()).unwrap();
    for t in 0..6 {
        for j in 0..4 {
            assert_eq!(out[[t, j]], out[[5 - t, 4 + j]]);
        }
    }
}

#[test]
fn single_step_is_two_cells() {
    let layer = random_layer(CellKind::Gru, 2, 3, 2, 13);
    let x = random_input(1, 1, 2, 14).index_axis_move(ndarray::Axis(0), 0);
    let out = bidirectional_forward(&layer, x.view()).unwrap();
    let xt = x.row(0).to_vec();
    let a = gru_step(&xt, &[0.0; 3], &layer.directions[0]).unwrap();
    let b = gru_step(&xt, &[0.0; 3], &layer.directions[1]).unwrap();
    let want: Vec<f64> = a.into_iter().chain(b).collect();
    for (got, want) in out.row(0).iter().zip(&want) {
        assert!((got - want).abs() < 1e-12);
    }
    assert!(bidirectional_forward(&layer, Array2::<f64>::zeros((0, 2)).view()).is_err());
}

fn tiny_specs(kind: LayerKind, merge: MergeMode) -> Vec<LayerSpec> {
    let first = match kind {
        LayerKind::BiGru => LayerSpec::bigru(6, 4, true),
        _ => LayerSpec::bilstm(6, 4, true),
    };
    let second = match kind {
        LayerKind::BiGru => LayerSpec::bigru(first.output_width(), 4, false),
        _ => LayerSpec::bilstm(first.output_width(), 4, false),
    }
    .with_merge(merge);
    vec![
        first,
        LayerSpec::dropout(first.output_width(), 0.3),
        second,
        LayerSpec::dropout(second.output_width(), 0.2),
        LayerSpec::dense(second.output_width(), 3),
        LayerSpec::softmax(3),
    ]
}

/// Central finite differences on a random sample of parameters.
fn gradient_check(specs: &[LayerSpec], frozen_layers: &[usize]) -> (usize, f64) {
    let mut model: RecurrentModel<f64> = build_model(specs, 21).unwrap();
    // Nonzero biases so every path is exercised.
    let mut rng = substream(22, "perturb", &[]);
    for block in model.parameters_mut() {
        for v in block.values.iter_mut() {
            *v += 0.1 * rng.random::<f64>() - 0.05;
        }
    }
    for &l in frozen_layers {
        model.set_frozen(l, true).unwrap();
    }
    let x = random_input(3, 7, 6, 23);
    let labels = [0, 2, 1];
    let grads = model.loss_and_gradients(x.view(), &labels, None).unwrap();

    let names: Vec<(String, usize)> = model
        .parameters()
        .iter()
        .filter(|b| !model.is_frozen(b.layer))
        .map(|b| (b.name.clone(), b.values.len()))
        .collect();
    assert_eq!(grads.entries.len(), names.len());
    let total: usize = names.iter().map(|n| n.1).sum();
    let samples = 240.min(total);
    let mut worst = 0.0f64;
    let step = 1e-5;
    for k in 0..samples {
        let mut pick = rng.random_range(0..total);
        if samples == total {
            pick = k;
        }
        let (bi, idx) = {
            let mut rem = pick;
            let mut bi = 0;
            while rem >= names[bi].1 {
                rem -= names[bi].1;
                bi += 1;
            }
            (bi, rem)
        };
        let name = &names[bi].0;
        let analytic = grads.get(name).unwrap()[idx];
        let eval = |delta: f64| {
            let mut m = model.clone();
            for b in m.parameters_mut() {
                if &b.name == name {
                    b.values[idx] += delta;
                }
            }
            m.loss(x.view(), &labels).unwrap()
        };
        let numeric = (eval(step) - eval(-step)) / (2.0 * step);
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
        assert!(rel < 1e-4, "{name}[{idx}]: analytic {analytic} numeric {numeric}");
        worst = worst.max(rel);
    }
    (samples, worst)
}

#[test]
fn bilstm_gradients_match_finite_differences() {
    let (n, worst) = gradient_check(&tiny_specs(LayerKind::BiLstm, MergeMode::Concat), &[]);
    assert!(n >= 200, "{n} checked, worst {worst}");
}

#[test]
fn bigru_gradients_match_finite_differences() {
    let (n, _) = gradient_check(&tiny_specs(LayerKind::BiGru, MergeMode::Concat), &[]);
    assert!(n >= 200);
}

#[test]
fn sum_merge_and_unidirectional_gradients() {
    gradient_check(&tiny_specs(LayerKind::BiLstm, MergeMode::Sum), &[]);
    let specs = vec![
        LayerSpec::gru(6, 5, true),
        LayerSpec::lstm(5, 4, false),
        LayerSpec::dense(4, 3),
        LayerSpec::softmax(3),
    ];
    gradient_check(&specs, &[]);
}

#[test]
fn frozen_layers_get_no_gradient_entries() {
    let specs = tiny_specs(LayerKind::BiLstm, MergeMode::Concat);
    gradient_check(&specs, &[0]);
    gradient_check(&specs, &[0, 2]);
    let mut model: RecurrentModel<f64> = build_model(&specs, 3).unwrap();
    model.freeze_recurrent();
    let g = model
        .loss_and_gradients(random_input(2, 7, 6, 4).view(), &[1, 2], None)
        .unwrap();
    let names: Vec<&str> = g.entries.iter().map(|e| e.name.as_str()).collect();
    assert_eq!(names, ["layer4.weight", "layer4.bias"]);
}

#[test]
fn saturated_correct_logits_give_zero_gradient() {
    let specs = tiny_specs(LayerKind::BiLstm, MergeMode::Concat);
    let mut model: RecurrentModel<f64> = build_model(&specs, 5).unwrap();
    if let Layer::Dense(d) = &mut model.layers_mut()[4] {
        d.weight.fill(0.0);
        d.bias.assign(&ndarray::array![60.0, 0.0, 0.0]);
    }
    let g = model
        .loss_and_gradients(random_input(4, 7, 6, 6).view(), &[0, 0, 0, 0], None)
        .unwrap();
    assert!(g.loss < 1e-12);
    assert!(g.norm() < 1e-8, "norm {}", g.norm());
}

#[test]
fn duplicated_sample_has_same_mean_gradient() {
    let specs = tiny_specs(LayerKind::BiGru, MergeMode::Concat);
    let model: RecurrentModel<f64> = build_model(&specs, 9).unwrap();
    let one = random_input(1, 7, 6, 10);
    let two = ndarray::concatenate(ndarray::Axis(0), &[one.view(), one.view()]).unwrap();
    let g1 = model.loss_and_gradients(one.view(), &[2], None).unwrap();
    let g2 = model.loss_and_gradients(two.view(), &[2, 2], None).unwrap();
    for (a, b) in g1.entries.iter().zip(&g2.entries) {
        assert_eq!(a.name, b.name);
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((x - y).abs() <= 1e-12 * x.abs().max(1e-3), "{}", a.name);
        }
    }
}

#[test]
fn build_is_deterministic_and_checked() {
    let specs = Architecture::reference_bilstm().layers();
    let a: RecurrentModel<f32> = build_model(&specs, 42).unwrap();
    let b: RecurrentModel<f32> = build_model(&specs, 42).unwrap();
    assert_eq!(a, b);
    let want: usize = 2 * (4 * 128 * 512 + 4 * 512 * 512 + 4 * 512) + 2 * (4 * 1024 * 256 + 4 * 256 * 256 + 4 * 256) + 512 * 5 + 5;
    assert_eq!(a.parameter_count(), want);
    let c: RecurrentModel<f32> = build_model(&specs, 43).unwrap();
    assert_ne!(a, c);

    let bad = vec![LayerSpec::bilstm(8, 4, false), LayerSpec::dense(4, 3), LayerSpec::softmax(3)];
    assert!(build_model::<f32>(&bad, 1).is_err());
}

#[test]
fn initialization_follows_scheme() {
    let specs = vec![LayerSpec::bilstm(10, 6, false), LayerSpec::dense(12, 4), LayerSpec::softmax(4)];
    let m: RecurrentModel<f64> = build_model(&specs, 1).unwrap();
    let Layer::Recurrent(r) = &m.layers()[0] else { panic!() };
    let p = &r.directions[1];
    let limit = (6.0f64 / (10.0 + 24.0)).sqrt();
    assert!(p.w_input.iter().all(|v| v.abs() <= limit));
    for g in 0..4 {
        let q = p.w_recurrent.slice(s![g * 6..(g + 1) * 6, ..]);
        let qtq = q.t().dot(&q);
        for i in 0..6 {
            for j in 0..6 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((qtq[[i, j]] - want).abs() < 1e-12);
            }
        }
    }
    let bias = p.bias.to_vec();
    assert!(bias[..6].iter().all(|v| *v == 0.0));
    assert!(bias[6..12].iter().all(|v| *v == 1.0));
    assert!(bias[12..].iter().all(|v| *v == 0.0));
    let Layer::Dense(d) = &m.layers()[1] else { panic!() };
    assert_eq!(d.weight.dim(), (12, 4));
    assert!(d.weight.iter().all(|v| v.abs() <= (6.0f64 / 16.0).sqrt()));
}

#[test]
fn eval_forward_is_batch_independent() {
    let specs = tiny_specs(LayerKind::BiLstm, MergeMode::Concat);
    let model: RecurrentModel<f64> = build_model(&specs, 31).unwrap();
    let x = random_input(5, 7, 6, 32);
    let all = model.predict_proba(x.view()).unwrap();
    for b in 0..5 {
        let single = model.predict_proba(x.slice(s![b..b + 1, .., ..])).unwrap();
        for k in 0..3 {
            assert!((all[[b, k]] - single[[0, k]]).abs() < 1e-12);
        }
        assert!((all.row(b).sum() - 1.0).abs() < 1e-12);
    }
    assert_eq!(all, model.predict_proba(x.view()).unwrap());
}

#[test]
fn adam_never_moves_frozen_layers() {
    let specs = tiny_specs(LayerKind::BiLstm, MergeMode::Concat);
    let mut model: RecurrentModel<f32> = build_model(&specs, 41).unwrap();
    model.freeze_recurrent();
    let before = model.recurrent_fingerprint();
    let dense_before = model.parameters()[12].values.to_vec();
    let mut adam = AdamState::new(AdamConfig::default());
    let x = random_input(4, 7, 6, 42).mapv(|v| v as f32);
    let mut rng = substream(1, "dropout", &[]);
    for _ in 0..5 {
        let mut g = model.loss_and_gradients(x.view(), &[0, 1, 2, 0], Some(&mut rng)).unwrap();
        // Stray entries for frozen blocks must still be ignored.
        g.entries.push(ParamGrad {
            layer: 0,
            name: "layer0.fwd.bias".into(),
            values: vec![1.0; 16],
        });
        adam.step(&mut model, &g).unwrap();
    }
    assert_eq!(adam.step, 5);
    assert_eq!(model.recurrent_fingerprint(), before);
    assert_ne!(model.parameters()[12].values.to_vec(), dense_before);
    assert!(adam.m.keys().all(|k| k.starts_with("layer4.")));
}

#[test]
fn adam_with_zero_gradients_is_identity() {
    let specs = tiny_specs(LayerKind::BiGru, MergeMode::Concat);
    let mut model: RecurrentModel<f64> = build_model(&specs, 2).unwrap();
    let before = model.clone();
    let grads = Gradients {
        loss: 0.0,
        entries: model
            .parameters()
            .iter()
            .map(|b| ParamGrad {
                layer: b.layer,
                name: b.name.clone(),
                values: vec![0.0; b.values.len()],
            })
            .collect(),
    };
    let mut adam = AdamState::new(AdamConfig::default());
    adam.step(&mut model, &grads).unwrap();
    assert_eq!(model, before);
}

#[test]
fn first_adam_step_moves_every_parameter_by_lr() {
    let specs = vec![LayerSpec::lstm(2, 2, false), LayerSpec::dense(2, 2), LayerSpec::softmax(2)];
    let mut model: RecurrentModel<f64> = build_model(&specs, 2).unwrap();
    let before = model.clone();
    let grads = Gradients {
        loss: 0.0,
        entries: model
            .parameters()
            .iter()
            .map(|b| ParamGrad {
                layer: b.layer,
                name: b.name.clone(),
                values: vec![1.0; b.values.len()],
            })
            .collect(),
    };
    AdamState::new(AdamConfig::default()).step(&mut model, &grads).unwrap();
    for (a, b) in model.parameters().iter().zip(before.parameters()) {
        for (x, y) in a.values.iter().zip(b.values) {
            assert!((x - y + 1e-4 / (1.0 + 1e-8)).abs() < 1e-15);
        }
    }
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let specs = tiny_specs(LayerKind::BiGru, MergeMode::Sum);
    let mut model: RecurrentModel<f32> = build_model(&specs, 77).unwrap();
    model.set_frozen(2, true).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.rmdl");
    save_model(&model, &path).unwrap();
    let back = load_model(&path).unwrap();
    assert_eq!(back, model);
    assert_eq!(model_to_bytes(&back), model_to_bytes(&model));

    let mut bytes = model_to_bytes(&model);
    bytes.truncate(bytes.len() - 3);
    assert!(model_from_bytes(&bytes, &path).is_err());
    bytes = model_to_bytes(&model);
    bytes[0] = b'X';
    assert!(model_from_bytes(&bytes, &path).is_err());
}

#[test]
fn head_path_matches_full_model() {
    let specs = tiny_specs(LayerKind::BiLstm, MergeMode::Concat);
    let mut model: RecurrentModel<f64> = build_model(&specs, 51).unwrap();
    model.freeze_recurrent();
    assert_eq!(model.head_start(), 3);
    let x = random_input(4, 7, 6, 52);
    let labels = [1, 0, 2, 2];
    let z = model.encode(x.view()).unwrap();
    assert_eq!(z.dim(), (4, 8));
    let full = model.predict_proba(x.view()).unwrap();
    let head = model.predict_proba_head(z.view()).unwrap();
    assert!(full.iter().zip(head.iter()).all(|(a, b)| (a - b).abs() < 1e-14));
    let g_full = model.loss_and_gradients(x.view(), &labels, None).unwrap();
    let g_head = model.loss_and_gradients_head(z.view(), &labels, None).unwrap();
    assert_eq!(g_full.entries.len(), g_head.entries.len());
    for (a, b) in g_full.entries.iter().zip(&g_head.entries) {
        assert_eq!(a.name, b.name);
        assert!(a.values.iter().zip(&b.values).all(|(u, v)| (u - v).abs() < 1e-14));
    }
}
