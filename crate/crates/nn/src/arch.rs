//! The four value networks. Each encodes the observation and the ego's
//! driver type separately, adds the driver-type encoding to the ego row
//! only, and feeds the result to two q-value heads of identical structure.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::layers::{Dense, EgoAttention, Isab, Perceptron, Pma, Sab};
use crate::params::Parameters;
use crate::tape::{Tape, Var};
use crate::NnError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ArchKind {
    Mlp,
    DeepSet,
    SocialAttention,
    Midas,
}

impl ArchKind {
    pub const ALL: [ArchKind; 4] = [ArchKind::Mlp, ArchKind::DeepSet, ArchKind::SocialAttention, ArchKind::Midas];

    pub fn label(self) -> &'static str {
        match self {
            ArchKind::Mlp => "mlp",
            ArchKind::DeepSet => "deepset",
            ArchKind::SocialAttention => "socialattn",
            ArchKind::Midas => "midas",
        }
    }

    pub fn is_set(self) -> bool {
        self != ArchKind::Mlp
    }
}

impl fmt::Display for ArchKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for ArchKind {
    type Err = NnError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ArchKind::ALL
            .into_iter()
            .find(|k| k.label() == s)
            .ok_or_else(|| NnError::UnknownArch(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchSpec {
    pub kind: ArchKind,
    /// Features per agent row.
    pub feature_dim: usize,
    /// Rows of the flattened MLP input; set networks accept any count.
    pub max_agents: usize,
}

impl ArchSpec {
    pub fn new(kind: ArchKind, feature_dim: usize, max_agents: usize) -> Self {
        ArchSpec {
            kind,
            feature_dim,
            max_agents,
        }
    }

    pub fn flat_dim(&self) -> usize {
        self.feature_dim * self.max_agents
    }
}

/// A batch of sets padded to a common row count. Valid rows come first in
/// each block; row 0 of every block is the ego.
#[derive(Debug, Clone, PartialEq)]
pub struct SetBatch {
    pub feature_dim: usize,
    pub rows: usize,
    pub data: Vec<f64>,
    pub counts: Vec<usize>,
    pub beta: Vec<f64>,
}

impl SetBatch {
    /// Each set is given as its rows flattened, with the ego's driver type.
    pub fn from_sets<'a>(feature_dim: usize, sets: impl IntoIterator<Item = (&'a [f64], f64)>) -> Result<SetBatch, NnError> {
        let sets: Vec<_> = sets.into_iter().collect();
        if sets.is_empty() {
            return Err(NnError::EmptySet);
        }
        let mut counts = Vec::with_capacity(sets.len());
        for (flat, _) in &sets {
            if flat.is_empty() || flat.len() % feature_dim != 0 {
                return Err(NnError::ShapeMismatch(format!(
                    "set of {} values is not a nonempty multiple of {feature_dim}",
                    flat.len()
                )));
            }
            counts.push(flat.len() / feature_dim);
        }
        let rows = *counts.iter().max().expect("nonempty");
        let mut data = vec![0.0; sets.len() * rows * feature_dim];
        for (b, (flat, _)) in sets.iter().enumerate() {
            data[b * rows * feature_dim..][..flat.len()].copy_from_slice(flat);
        }
        Ok(SetBatch {
            feature_dim,
            rows,
            data,
            counts,
            beta: sets.iter().map(|s| s.1).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn mask(&self) -> Vec<bool> {
        self.counts
            .iter()
            .flat_map(|&c| (0..self.rows).map(move |r| r < c))
            .collect()
    }

    /// Re-pads to exactly `rows` rows per set.
    fn padded_to(&self, rows: usize) -> Vec<f64> {
        let f = self.feature_dim;
        let mut out = vec![0.0; self.len() * rows * f];
        for b in 0..self.len() {
            let n = self.counts[b] * f;
            out[b * rows * f..][..n].copy_from_slice(&self.data[b * self.rows * f..][..n]);
        }
        out
    }
}

#[derive(Debug, Clone)]
enum Body {
    Mlp {
        obs: Perceptron,
    },
    DeepSet {
        obs: Perceptron,
        inter: Perceptron,
    },
    SocialAttention {
        obs: Perceptron,
        inter: Perceptron,
        attn: EgoAttention,
    },
    Midas {
        isab: [Isab; 2],
    },
}

#[derive(Debug, Clone)]
enum Head {
    Dense(Perceptron),
    Midas { pma: Pma, sab: [Sab; 2], out: Dense },
}

/// Network structure; the weights live in a separate [`Parameters`] so a
/// lagged copy shares the same layout.
#[derive(Debug, Clone)]
pub struct Model {
    pub spec: ArchSpec,
    body: Body,
    beta: Perceptron,
    heads: [Head; 2],
}

const MIDAS_HEADS: usize = 4;
const MIDAS_INDUCING: usize = 32;
const MIDAS_SEEDS: usize = 2;

impl Model {
    /// Builds the structure and freshly initialized parameters.
    pub fn new(spec: ArchSpec, rng: &mut impl Rng) -> (Model, Parameters) {
        let mut p = Parameters::new();
        let f = spec.feature_dim;
        let (body, beta, width) = match spec.kind {
            ArchKind::Mlp => (
                Body::Mlp {
                    obs: Perceptron::new(&mut p, "obs", &[spec.flat_dim(), 128, 128], rng),
                },
                Perceptron::new(&mut p, "beta", &[1, 64, 128], rng),
                128,
            ),
            ArchKind::DeepSet => (
                Body::DeepSet {
                    obs: Perceptron::new(&mut p, "obs", &[f, 128, 64, 128], rng),
                    inter: Perceptron::new(&mut p, "inter", &[128, 128, 128], rng),
                },
                Perceptron::new(&mut p, "beta", &[1, 64, 128], rng),
                128,
            ),
            ArchKind::SocialAttention => (
                Body::SocialAttention {
                    obs: Perceptron::new(&mut p, "obs", &[f, 64, 64, 64], rng),
                    inter: Perceptron::new(&mut p, "inter", &[64, 64, 64], rng),
                    attn: EgoAttention::new(&mut p, "inter.attn", 64, 2, rng),
                },
                Perceptron::new(&mut p, "beta", &[1, 64, 64, 64], rng),
                64,
            ),
            ArchKind::Midas => (
                Body::Midas {
                    isab: [
                        Isab::new(&mut p, "obs.isab0", f, 128, MIDAS_HEADS, MIDAS_INDUCING, true, rng),
                        Isab::new(&mut p, "obs.isab1", 128, 128, MIDAS_HEADS, MIDAS_INDUCING, true, rng),
                    ],
                },
                Perceptron::new(&mut p, "beta", &[1, 64, 128, 128], rng),
                128,
            ),
        };
        let mut head = |p: &mut Parameters, name: &str| match spec.kind {
            ArchKind::Midas => Head::Midas {
                pma: Pma::new(p, &format!("{name}.pma"), 128, MIDAS_HEADS, MIDAS_SEEDS, true, rng),
                sab: [
                    Sab::new(p, &format!("{name}.sab0"), 128, 128, MIDAS_HEADS, true, rng),
                    Sab::new(p, &format!("{name}.sab1"), 128, 128, MIDAS_HEADS, true, rng),
                ],
                out: Dense::new(p, &format!("{name}.out"), 128, 1, true, rng),
            },
            _ => Head::Dense(Perceptron::new(p, name, &[width, width, 2], rng)),
        };
        let heads = [head(&mut p, "head1"), head(&mut p, "head2")];
        (Model { spec, body, beta, heads }, p)
    }

    /// Rebuilds the structure for `spec` and checks that `params` fits it.
    pub fn for_params(spec: ArchSpec, params: &Parameters) -> Result<Model, NnError> {
        use rand::SeedableRng;
        let (model, fresh) = Model::new(spec, &mut rand_chacha::ChaCha8Rng::seed_from_u64(0));
        if !fresh.same_layout(params) {
            return Err(NnError::ShapeMismatch(format!("parameters do not match the {} layout", spec.kind)));
        }
        Ok(model)
    }

    pub fn check(&self, batch: &SetBatch) -> Result<(), NnError> {
        if batch.is_empty() {
            return Err(NnError::EmptySet);
        }
        if batch.feature_dim != self.spec.feature_dim {
            return Err(NnError::ShapeMismatch(format!(
                "rows have {} features, network expects {}",
                batch.feature_dim, self.spec.feature_dim
            )));
        }
        if self.spec.kind == ArchKind::Mlp && batch.rows > self.spec.max_agents {
            return Err(NnError::TooManyRows {
                rows: batch.rows,
                max: self.spec.max_agents,
            });
        }
        Ok(())
    }

    /// Shared encoding `Z`: `B × w` for the dense heads, `B·n × w` rows for MIDAS.
    fn encode(&self, t: &mut Tape, batch: &SetBatch) -> Var {
        let (b, n) = (batch.len(), batch.rows);
        let beta_in = t.input(b, 1, batch.beta.clone());
        let beta = self.beta.forward(t, beta_in);
        match &self.body {
            Body::Mlp { obs } => {
                let m = self.spec.max_agents;
                let x = t.input(b, m * batch.feature_dim, batch.padded_to(m));
                let o = obs.forward(t, x);
                t.add(o, beta)
            }
            Body::DeepSet { obs, inter } => {
                let x = t.input(b * n, batch.feature_dim, batch.data.clone());
                let o = obs.forward(t, x);
                let o = t.add_first_row(o, beta, n);
                let pooled = t.masked_mean(o, n, &batch.counts);
                inter.forward(t, pooled)
            }
            Body::SocialAttention { obs, inter, attn } => {
                let x = t.input(b * n, batch.feature_dim, batch.data.clone());
                let o = obs.forward(t, x);
                let o = t.add_first_row(o, beta, n);
                let o = inter.forward(t, o);
                let mask = batch.mask();
                attn.forward(t, o, b, n, Some(&mask))
            }
            Body::Midas { isab } => {
                let x = t.input(b * n, batch.feature_dim, batch.data.clone());
                let mask = batch.mask();
                let o = isab[0].forward(t, x, b, n, Some(&mask));
                let o = isab[1].forward(t, o, b, n, Some(&mask));
                t.add_first_row(o, beta, n)
            }
        }
    }

    fn head(&self, t: &mut Tape, h: usize, z: Var, batch: &SetBatch) -> Var {
        match &self.heads[h] {
            Head::Dense(p) => p.forward(t, z),
            Head::Midas { pma, sab, out } => {
                let (b, n) = (batch.len(), batch.rows);
                let mask = batch.mask();
                let y = pma.forward(t, z, b, n, Some(&mask));
                let y = sab[0].forward(t, y, MIDAS_SEEDS, None);
                let y = sab[1].forward(t, y, MIDAS_SEEDS, None);
                let y = out.forward(t, y);
                t.reshape(y, b, MIDAS_SEEDS)
            }
        }
    }

    /// Both heads' q-values, each `B × 2` (Stop, Go).
    pub fn forward(&self, t: &mut Tape, batch: &SetBatch) -> Result<[Var; 2], NnError> {
        self.check(batch)?;
        let z = self.encode(t, batch);
        Ok([self.head(t, 0, z, batch), self.head(t, 1, z, batch)])
    }

    /// A single head (`0` or `1`).
    pub fn forward_head(&self, t: &mut Tape, batch: &SetBatch, head: usize) -> Result<Var, NnError> {
        self.check(batch)?;
        let z = self.encode(t, batch);
        Ok(self.head(t, head, z, batch))
    }

    /// Evaluates both heads without keeping the recording.
    pub fn q_values(&self, params: &Parameters, batch: &SetBatch) -> Result<Vec<[[f64; 2]; 2]>, NnError> {
        let mut t = Tape::new(params);
        let [h1, h2] = self.forward(&mut t, batch)?;
        let (a, b) = (t.value(h1), t.value(h2));
        Ok((0..batch.len())
            .map(|i| [[a[2 * i], a[2 * i + 1]], [b[2 * i], b[2 * i + 1]]])
            .collect())
    }

    /// Names of the output weights of the driver-type encoder.
    pub fn beta_output_params(&self) -> Vec<crate::ParamId> {
        let last = self.beta.0.last().expect("beta encoder has layers");
        std::iter::once(last.w).chain(last.b).collect()
    }
}
