//! Shuffles the non-ego rows of one observation and shows which networks
//! notice.
//!
//! `cargo run --release -p crossroads-nn --example permutation`

use crossroads_nn::{ArchKind, ArchSpec, Model, SetBatch};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 5;
    let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..16).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect();
    let mut order: Vec<usize> = (1..n).collect();
    order.shuffle(&mut rng);
    let shuffled: Vec<f64> = std::iter::once(0).chain(order.iter().copied()).flat_map(|i| rows[i].clone()).collect();
    let original: Vec<f64> = rows.concat();
    let batch = SetBatch::from_sets(16, [(original.as_slice(), 0.4), (shuffled.as_slice(), 0.4)]).unwrap();

    println!("row order after shuffle: 0 {order:?}");
    for kind in ArchKind::ALL {
        let (model, params) = Model::new(ArchSpec::new(kind, 16, 8), &mut rng);
        let q = model.q_values(&params, &batch).unwrap();
        let diff = q[0].iter().flatten().zip(q[1].iter().flatten()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        println!("{:>10}: Q = {:?}  max |ΔQ| after shuffle = {diff:.2e}", kind.label(), q[0]);
    }
}
