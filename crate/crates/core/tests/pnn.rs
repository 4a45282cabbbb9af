mod common;

use common::{gradient_check, naive_pnn, random_pnn};
use mfrl::nn::{ParamStore, Tape};
use mfrl::rng::seeded;
use ndarray::Array2;
use rand::Rng;

#[test]
fn forward_matches_literal_transcription_for_two_and_three_columns() {
    for columns in [2, 3] {
        for seed in 0..5 {
            let (pnn, store) = random_pnn(columns, seed, &[9, 8, 7]);
            let mut rng = seeded(1000 + seed);
            for _ in 0..4 {
                let x: Vec<f64> = (0..5).map(|_| rng.random_range(-1.5..1.5)).collect();
                let got = pnn.forward(&store, &x).unwrap();
                let want = naive_pnn(&store, columns, pnn.head_layer(), &x);
                for (a, b) in got.iter().zip(&want) {
                    assert!((a - b).abs() < 1e-12, "K={columns}: {a} vs {b}");
                }
            }
        }
    }
}

#[test]
fn three_columns_only_train_the_last() {
    let (pnn, store) = random_pnn(3, 7, &[6, 6]);
    for (name, e) in store.iter() {
        let trainable = name.starts_with("col3.") || name.starts_with("adapt.k3.");
        assert_eq!(e.trainable, trainable, "{name}");
    }
    assert_eq!(pnn.num_columns(), 3);
}

#[test]
fn zero_mixing_weights_reduce_to_standalone_column() {
    let (pnn, mut store) = random_pnn(2, 3, &[8, 8, 8]);
    let names: Vec<String> = store.names().filter(|n| n.ends_with(".U")).map(String::from).collect();
    for n in names {
        store.get_mut(&n).unwrap().values.iter_mut().for_each(|v| *v = 0.0);
    }
    let x = Array2::from_shape_fn((5, 5), |(i, j)| ((i * 5 + j) as f64).cos());
    assert_eq!(pnn.forward_batch(&store, x.view()).unwrap(), pnn.column(2).forward_batch(&store, x.view()).unwrap());
}

#[test]
fn gradients_reach_adapters_and_new_column_only() {
    for columns in [2, 3] {
        let (pnn, store) = random_pnn(columns, 9, &[6, 5, 4]);
        let x = Array2::from_shape_fn((3, 5), |(i, j)| (i as f64 + 1.0) * (j as f64 - 2.0) * 0.2);
        let lg = |s: &ParamStore| {
            let mut tape = Tape::new();
            let xv = tape.constant(x.clone());
            let y = pnn.record(&mut tape, s, xv).unwrap();
            let sq = tape.square(y);
            let l = tape.mean(sq);
            (tape.scalar(l), tape.backward(l).unwrap())
        };
        let (_, g) = lg(&store);
        for name in pnn.adapter_names() {
            assert!(g.contains(&name), "{name}");
        }
        assert!(g.names().all(|n| !n.starts_with("col1.")));
        let err = gradient_check(&store, &g, &|s| lg(s).0, 1e-6, 40);
        assert!(err < 1e-5, "K={columns}: {err:e}");
    }
}

#[test]
fn restoring_a_gain_restores_outputs_bit_for_bit() {
    let (pnn, mut store) = random_pnn(2, 4, &[8, 8, 8]);
    let x = Array2::from_elem((2, 5), 0.4);
    let before = pnn.forward_batch(&store, x.view()).unwrap();
    let g = pnn.adapter_gain(&store, 3, 1).unwrap();
    pnn.set_adapter_gain(&mut store, 3, 1, 0.0).unwrap();
    assert_ne!(pnn.forward_batch(&store, x.view()).unwrap(), before);
    pnn.set_adapter_gain(&mut store, 3, 1, g).unwrap();
    assert_eq!(pnn.forward_batch(&store, x.view()).unwrap(), before);
    assert!(!store.get("adapt.l3.c1.alpha").unwrap().trainable);
}
