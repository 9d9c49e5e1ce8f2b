//! Building blocks shared by the architectures.

use rand::Rng;

use crate::params::{ParamId, Parameters};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct Dense {
    pub w: ParamId,
    pub b: Option<ParamId>,
}

impl Dense {
    pub fn new(p: &mut Parameters, name: &str, fan_in: usize, fan_out: usize, bias: bool, rng: &mut impl Rng) -> Dense {
        let w = p.add_uniform(format!("{name}.w"), vec![fan_in, fan_out], fan_in, rng);
        let b = bias.then(|| p.add_uniform(format!("{name}.b"), vec![1, fan_out], fan_in, rng));
        Dense { w, b }
    }

    pub fn forward(&self, t: &mut Tape, x: Var) -> Var {
        let w = t.param(self.w);
        let b = self.b.map(|b| t.param(b));
        t.linear(x, w, b)
    }
}

/// Dense layers with ReLU between them (none after the last).
#[derive(Debug, Clone)]
pub struct Perceptron(pub Vec<Dense>);

impl Perceptron {
    pub fn new(p: &mut Parameters, name: &str, dims: &[usize], rng: &mut impl Rng) -> Perceptron {
        Perceptron(
            dims.windows(2)
                .enumerate()
                .map(|(i, d)| Dense::new(p, &format!("{name}.{i}"), d[0], d[1], true, rng))
                .collect(),
        )
    }

    pub fn forward(&self, t: &mut Tape, mut x: Var) -> Var {
        for (i, layer) in self.0.iter().enumerate() {
            if i > 0 {
                x = t.relu(x);
            }
            x = layer.forward(t, x);
        }
        x
    }
}

#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub g: ParamId,
    pub b: ParamId,
}

impl LayerNorm {
    pub fn new(p: &mut Parameters, name: &str, dim: usize) -> LayerNorm {
        LayerNorm {
            g: p.add(format!("{name}.g"), Tensor::full(vec![1, dim], 1.0)),
            b: p.add(format!("{name}.b"), Tensor::zeros(vec![1, dim])),
        }
    }

    pub fn forward(&self, t: &mut Tape, x: Var) -> Var {
        let (g, b) = (t.param(self.g), t.param(self.b));
        t.layer_norm(x, g, b)
    }
}

/// Multihead attention block of the set transformer:
/// `H = LN(Q' + Att(Q', K', V'))`, `out = LN(H + ReLU(H·Wo))`.
#[derive(Debug, Clone)]
pub struct Mab {
    pub q: Dense,
    pub k: Dense,
    pub v: Dense,
    pub o: Dense,
    pub ln: Option<(LayerNorm, LayerNorm)>,
    pub heads: usize,
}

impl Mab {
    #[allow(clippy::too_many_arguments)]
    pub fn new(p: &mut Parameters, name: &str, dim_q: usize, dim_k: usize, dim_out: usize, heads: usize, ln: bool, rng: &mut impl Rng) -> Mab {
        Mab {
            q: Dense::new(p, &format!("{name}.q"), dim_q, dim_out, true, rng),
            k: Dense::new(p, &format!("{name}.k"), dim_k, dim_out, true, rng),
            v: Dense::new(p, &format!("{name}.v"), dim_k, dim_out, true, rng),
            o: Dense::new(p, &format!("{name}.o"), dim_out, dim_out, true, rng),
            ln: ln.then(|| (LayerNorm::new(p, &format!("{name}.ln0"), dim_out), LayerNorm::new(p, &format!("{name}.ln1"), dim_out))),
            heads,
        }
    }

    /// `q_proj` is the already projected query (`B·nq × dim_out`).
    pub fn forward_projected(&self, t: &mut Tape, q_proj: Var, nq: usize, x: Var, nk: usize, mask: Option<&[bool]>) -> Var {
        let k = self.k.forward(t, x);
        let v = self.v.forward(t, x);
        let a = t.attention(q_proj, k, v, self.heads, nq, nk, mask);
        let mut h = t.add(q_proj, a);
        if let Some((ln0, _)) = &self.ln {
            h = ln0.forward(t, h);
        }
        let f = self.o.forward(t, h);
        let f = t.relu(f);
        let mut out = t.add(h, f);
        if let Some((_, ln1)) = &self.ln {
            out = ln1.forward(t, out);
        }
        out
    }

    pub fn forward(&self, t: &mut Tape, q: Var, nq: usize, x: Var, nk: usize, mask: Option<&[bool]>) -> Var {
        let qp = self.q.forward(t, q);
        self.forward_projected(t, qp, nq, x, nk, mask)
    }

    /// Query is a learned `nq × d` matrix shared by every set in the batch:
    /// project once, then tile.
    pub fn forward_shared_query(&self, t: &mut Tape, query: ParamId, batch: usize, x: Var, nk: usize, mask: Option<&[bool]>) -> Var {
        let qv = t.param(query);
        let nq = t.dims(qv).0;
        let qp = self.q.forward(t, qv);
        let qp = t.tile(qp, batch);
        self.forward_projected(t, qp, nq, x, nk, mask)
    }
}

/// Induced set attention block with `m` learned inducing points.
#[derive(Debug, Clone)]
pub struct Isab {
    pub inducing: ParamId,
    pub to_inducing: Mab,
    pub from_inducing: Mab,
}

impl Isab {
    #[allow(clippy::too_many_arguments)]
    pub fn new(p: &mut Parameters, name: &str, dim_in: usize, dim_out: usize, heads: usize, m: usize, ln: bool, rng: &mut impl Rng) -> Isab {
        Isab {
            inducing: p.add_uniform(format!("{name}.i"), vec![m, dim_out], dim_out, rng),
            to_inducing: Mab::new(p, &format!("{name}.mab0"), dim_out, dim_in, dim_out, heads, ln, rng),
            from_inducing: Mab::new(p, &format!("{name}.mab1"), dim_in, dim_out, dim_out, heads, ln, rng),
        }
    }

    pub fn forward(&self, t: &mut Tape, x: Var, batch: usize, n: usize, mask: Option<&[bool]>) -> Var {
        let m = t.params().get(self.inducing).shape[0];
        let h = self.to_inducing.forward_shared_query(t, self.inducing, batch, x, n, mask);
        self.from_inducing.forward(t, x, n, h, m, None)
    }
}

/// Pooling by multihead attention onto `seeds` learned queries.
#[derive(Debug, Clone)]
pub struct Pma {
    pub seeds: ParamId,
    pub mab: Mab,
}

impl Pma {
    pub fn new(p: &mut Parameters, name: &str, dim: usize, heads: usize, seeds: usize, ln: bool, rng: &mut impl Rng) -> Pma {
        Pma {
            seeds: p.add_uniform(format!("{name}.s"), vec![seeds, dim], dim, rng),
            mab: Mab::new(p, &format!("{name}.mab"), dim, dim, dim, heads, ln, rng),
        }
    }

    /// Returns `B·seeds × dim`.
    pub fn forward(&self, t: &mut Tape, x: Var, batch: usize, n: usize, mask: Option<&[bool]>) -> Var {
        self.mab.forward_shared_query(t, self.seeds, batch, x, n, mask)
    }
}

/// Set attention block: self-attention over each set.
#[derive(Debug, Clone)]
pub struct Sab(pub Mab);

impl Sab {
    #[allow(clippy::too_many_arguments)]
    pub fn new(p: &mut Parameters, name: &str, dim_in: usize, dim_out: usize, heads: usize, ln: bool, rng: &mut impl Rng) -> Sab {
        Sab(Mab::new(p, name, dim_in, dim_in, dim_out, heads, ln, rng))
    }

    pub fn forward(&self, t: &mut Tape, x: Var, n: usize, mask: Option<&[bool]>) -> Var {
        self.0.forward(t, x, n, x, n, mask)
    }
}

/// Attention with the ego row as the only query; heads are concatenated
/// and projected.
#[derive(Debug, Clone)]
pub struct EgoAttention {
    pub q: Dense,
    pub k: Dense,
    pub v: Dense,
    pub o: Dense,
    pub heads: usize,
}

impl EgoAttention {
    pub fn new(p: &mut Parameters, name: &str, dim: usize, heads: usize, rng: &mut impl Rng) -> EgoAttention {
        EgoAttention {
            q: Dense::new(p, &format!("{name}.q"), dim, dim, false, rng),
            k: Dense::new(p, &format!("{name}.k"), dim, dim, false, rng),
            v: Dense::new(p, &format!("{name}.v"), dim, dim, false, rng),
            o: Dense::new(p, &format!("{name}.o"), dim, dim, true, rng),
            heads,
        }
    }

    /// Returns one row per set.
    pub fn forward(&self, t: &mut Tape, x: Var, batch: usize, n: usize, mask: Option<&[bool]>) -> Var {
        let ego_rows: Vec<usize> = (0..batch).map(|b| b * n).collect();
        let ego = t.gather_rows(x, &ego_rows);
        let q = self.q.forward(t, ego);
        let k = self.k.forward(t, x);
        let v = self.v.forward(t, x);
        let a = t.attention(q, k, v, self.heads, 1, n, mask);
        self.o.forward(t, a)
    }
}
