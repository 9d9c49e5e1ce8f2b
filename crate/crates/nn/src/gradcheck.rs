//! Central finite-difference checks against the recorded gradients.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::arch::{Model, SetBatch};
use crate::params::{ParamId, Parameters};
use crate::tape::{Tape, Var};

/// `|a − n| / max(|a|, |n|, floor)`; the floor keeps near-zero pairs from
/// reporting huge ratios over rounding noise.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// `Σ_b Σ_a w1[b,a]·q1[b,a] + w2[b,a]·q2[b,a]`: a scalar that depends on every
/// output of both heads.
pub fn probe_loss(t: &mut Tape, model: &Model, batch: &SetBatch, weights: &[f64]) -> Var {
    let [q1, q2] = model.forward(t, batch).expect("valid batch");
    let n = batch.len();
    let w1 = t.input(n, 2, weights[..2 * n].to_vec());
    let w2 = t.input(n, 2, weights[2 * n..4 * n].to_vec());
    let a = t.mul(q1, w1);
    let b = t.mul(q2, w2);
    let s = t.add(a, b);
    t.sum(s)
}

fn probe_value(model: &Model, params: &Parameters, batch: &SetBatch, weights: &[f64]) -> f64 {
    let mut t = Tape::new(params);
    let l = probe_loss(&mut t, model, batch, weights);
    t.value(l)[0]
}

/// `h` and `h / 10`: a ReLU kink within `h` of the point spoils the wider
/// difference but rarely both.
fn steps(h: f64) -> impl Iterator<Item = f64> {
    [h, h / 10.0].into_iter()
}

/// Chooses `per_tensor` coordinates from every parameter tensor (all of
/// them when the tensor is smaller).
pub fn sample_coordinates(params: &Parameters, per_tensor: usize, rng: &mut impl Rng) -> Vec<(ParamId, usize)> {
    let mut out = Vec::new();
    for id in params.ids() {
        let n = params.get(id).len();
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(rng);
        out.extend(idx.into_iter().take(per_tensor).map(|i| (id, i)));
    }
    out
}

/// Largest relative error between recorded and central-difference
/// gradients of [`probe_loss`] over `coords`.
pub fn model_gradient_error(
    model: &Model,
    params: &Parameters,
    batch: &SetBatch,
    weights: &[f64],
    coords: &[(ParamId, usize)],
    h: f64,
) -> f64 {
    let analytic = {
        let mut t = Tape::new(params);
        let l = probe_loss(&mut t, model, batch, weights);
        t.backward(l).params
    };
    let mut p = params.clone();
    let mut worst: f64 = 0.0;
    for &(id, i) in coords {
        let x0 = p.get(id).data[i];
        let mut best = f64::INFINITY;
        for step in steps(h) {
            p.get_mut(id).data[i] = x0 + step;
            let up = probe_value(model, &p, batch, weights);
            p.get_mut(id).data[i] = x0 - step;
            let down = probe_value(model, &p, batch, weights);
            p.get_mut(id).data[i] = x0;
            let numeric = (up - down) / (2.0 * step);
            best = best.min(relative_error(analytic.get(id)[i], numeric, 1e-5));
        }
        worst = worst.max(best);
    }
    worst
}

/// Compares the derivative along a random unit direction over all
/// parameters at once.
pub fn model_directional_error(
    model: &Model,
    params: &Parameters,
    batch: &SetBatch,
    weights: &[f64],
    h: f64,
    rng: &mut impl Rng,
) -> f64 {
    let analytic = {
        let mut t = Tape::new(params);
        let l = probe_loss(&mut t, model, batch, weights);
        t.backward(l).params
    };
    let mut dirs: Vec<Vec<f64>> = params
        .iter()
        .map(|(_, t)| (0..t.len()).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    let norm = dirs.iter().flatten().map(|d| d * d).sum::<f64>().sqrt();
    dirs.iter_mut().flatten().for_each(|d| *d /= norm);
    let along: f64 = analytic
        .grads
        .iter()
        .zip(&dirs)
        .flat_map(|(g, d)| g.iter().zip(d).map(|(a, b)| a * b))
        .sum();
    let shifted = |s: f64| {
        let mut p = params.clone();
        for (id, d) in params.ids().zip(&dirs) {
            p.get_mut(id).data.iter_mut().zip(d).for_each(|(x, dx)| *x += s * dx);
        }
        probe_value(model, &p, batch, weights)
    };
    steps(h)
        .map(|s| relative_error(along, (shifted(s) - shifted(-s)) / (2.0 * s), 1e-5))
        .fold(f64::INFINITY, f64::min)
}

/// An input leaf for [`op_gradient_error`]: `(rows, cols, data)`.
pub type Leaf = (usize, usize, Vec<f64>);

/// Largest relative error between recorded and central-difference input
/// gradients of `build`, reduced to a scalar with fixed random weights.
pub fn op_gradient_error(inputs: &[Leaf], build: impl Fn(&mut Tape, &[Var]) -> Var, h: f64, rng: &mut impl Rng) -> f64 {
    let params = Parameters::new();
    let n = {
        let mut t = Tape::new(&params);
        let vars: Vec<Var> = inputs.iter().map(|(r, c, d)| t.input(*r, *c, d.clone())).collect();
        let y = build(&mut t, &vars);
        let (r, c) = t.dims(y);
        r * c
    };
    let w: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let loss_of = |vals: &[Leaf], grads: bool| -> (f64, Vec<Vec<f64>>) {
        let mut t = Tape::new(&params);
        let vars: Vec<Var> = vals.iter().map(|(r, c, d)| t.input(*r, *c, d.clone())).collect();
        let y = build(&mut t, &vars);
        let (r, c) = t.dims(y);
        let wv = t.input(r, c, w.clone());
        let p = t.mul(y, wv);
        let l = t.sum(p);
        if !grads {
            return (t.value(l)[0], Vec::new());
        }
        let b = t.backward(l);
        let g = vars
            .iter()
            .zip(vals)
            .map(|(v, (r, c, _))| {
                let g = b.of(*v);
                if g.is_empty() {
                    vec![0.0; r * c]
                } else {
                    g.to_vec()
                }
            })
            .collect();
        (t.value(l)[0], g)
    };
    let (_, analytic) = loss_of(inputs, true);
    let mut worst: f64 = 0.0;
    let mut x = inputs.to_vec();
    for k in 0..x.len() {
        for i in 0..x[k].2.len() {
            let x0 = x[k].2[i];
            let mut best = f64::INFINITY;
            for step in steps(h) {
                x[k].2[i] = x0 + step;
                let up = loss_of(&x, false).0;
                x[k].2[i] = x0 - step;
                let down = loss_of(&x, false).0;
                x[k].2[i] = x0;
                best = best.min(relative_error(analytic[k][i], (up - down) / (2.0 * step), 1e-6));
            }
            worst = worst.max(best);
        }
    }
    worst
}
