//! Times one forward/backward pass per architecture on a random batch.
//!
//! `cargo run --release -p crossroads-nn --example step_timing -- [batch] [rows]`

use std::time::Instant;

use crossroads_nn::{Adam, AdamConfig, ArchKind, ArchSpec, Model, SetBatch, Tape};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() {
    let args: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let batch = args.first().copied().unwrap_or(128);
    let max_rows = args.get(1).copied().unwrap_or(6);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let sets: Vec<(Vec<f64>, f64)> = (0..batch)
        .map(|_| {
            let n = rng.gen_range(1..=max_rows);
            ((0..n * 16).map(|_| rng.gen_range(-1.0..1.0)).collect(), rng.gen_range(-1.0..1.0))
        })
        .collect();
    let data = SetBatch::from_sets(16, sets.iter().map(|(v, b)| (v.as_slice(), *b))).unwrap();
    for kind in ArchKind::ALL {
        let (model, mut params) = Model::new(ArchSpec::new(kind, 16, 8), &mut rng);
        let mut adam = Adam::new(AdamConfig::default(), &params);
        let reps = 3;
        let start = Instant::now();
        for _ in 0..reps {
            let grads = {
                let mut t = Tape::new(&params);
                let [a, b] = model.forward(&mut t, &data).unwrap();
                let s = t.add(a, b);
                let s = t.square(s);
                let loss = t.sum(s);
                t.backward(loss).params
            };
            adam.step(&mut params, &grads);
        }
        let train = start.elapsed().as_secs_f64() / reps as f64;
        let start = Instant::now();
        model.q_values(&params, &data).unwrap();
        let fwd = start.elapsed().as_secs_f64();
        println!("{:>10}: {} params, train step {:.1} ms, forward {:.1} ms", kind.label(), params.numel(), train * 1e3, fwd * 1e3);
    }
}
