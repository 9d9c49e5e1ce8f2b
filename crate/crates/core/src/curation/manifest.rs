use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Curator, CurationError, EpisodeSpec};
use crate::derive_seed;

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Split {
    Train,
    Val,
    Test,
    TestInteraction,
}

impl Split {
    pub fn label(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
            Split::TestInteraction => "test-interaction",
        }
    }

    pub fn parse(s: &str) -> Option<Split> {
        [Split::Train, Split::Val, Split::Test, Split::TestInteraction]
            .into_iter()
            .find(|x| x.label() == s)
    }
}

/// Unscaled split sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetCounts {
    /// Training episodes, mixed 25% generic / 25% collision / 50% interaction.
    pub train: usize,
    pub val_generic: usize,
    pub val_interaction: usize,
    pub test_generic: usize,
    pub test_interaction: usize,
    /// Interaction episodes generated before drawing the interaction test split.
    pub interaction_pool: usize,
    pub interaction_only: usize,
}

impl Default for DatasetCounts {
    fn default() -> Self {
        DatasetCounts {
            train: 2000,
            val_generic: 100,
            val_interaction: 100,
            test_generic: 250,
            test_interaction: 250,
            interaction_pool: 1917,
            interaction_only: 381,
        }
    }
}

impl DatasetCounts {
    /// Every count multiplied by `factor` and rounded to the nearest integer.
    pub fn scaled(&self, factor: f64) -> DatasetCounts {
        let f = |n: usize| (n as f64 * factor).round() as usize;
        DatasetCounts {
            train: f(self.train),
            val_generic: f(self.val_generic),
            val_interaction: f(self.val_interaction),
            test_generic: f(self.test_generic),
            test_interaction: f(self.test_interaction),
            interaction_pool: f(self.interaction_pool).max(f(self.interaction_only)),
            interaction_only: f(self.interaction_only),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub split: Split,
    pub spec: EpisodeSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: u32,
    pub map: String,
    pub seed: u64,
    pub scale: f64,
    pub counts: DatasetCounts,
    pub entries: Vec<ManifestEntry>,
    /// SHA-256 over every other field.
    pub hash: String,
}

impl DatasetManifest {
    pub fn compute_hash(&self) -> String {
        let body = serde_json::to_vec(&(
            self.version,
            &self.map,
            self.seed,
            self.scale,
            &self.counts,
            &self.entries,
        ))
        .expect("manifest serializes");
        hex::encode(Sha256::digest(&body))
    }

    pub fn hash_ok(&self) -> bool {
        self.hash == self.compute_hash()
    }

    pub fn split(&self, split: Split) -> Vec<&EpisodeSpec> {
        self.entries.iter().filter(|e| e.split == split).map(|e| &e.spec).collect()
    }

    pub fn split_len(&self, split: Split) -> usize {
        self.entries.iter().filter(|e| e.split == split).count()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }
}

/// Generates every split. Each spec draws from its own random stream
/// derived from `seed`, so the result depends only on the inputs.
pub fn build_datasets(
    curator: &Curator<'_>,
    counts: &DatasetCounts,
    scale: f64,
    seed: u64,
) -> Result<DatasetManifest, CurationError> {
    let n = counts.scaled(scale);
    let mut entries = Vec::new();
    let mut stream = 0u64;
    let mut next_rng = || {
        stream += 1;
        ChaCha8Rng::seed_from_u64(derive_seed(seed, stream))
    };
    let setting_of = |i: usize| (i % 3) as u8 + 1;

    let n_collision = n.train / 4;
    let n_generic = n.train / 4;
    for i in 0..n.train {
        let mut rng = next_rng();
        let spec = if i < n_generic {
            curator.gen_generic(&mut rng)?
        } else if i < n_generic + n_collision {
            curator.gen_collision(&mut rng)?
        } else {
            curator.gen_interaction(setting_of(i), &mut rng)?
        };
        entries.push(ManifestEntry { split: Split::Train, spec });
    }
    for (split, generic, interaction) in [
        (Split::Val, n.val_generic, n.val_interaction),
        (Split::Test, n.test_generic, n.test_interaction),
    ] {
        for _ in 0..generic {
            let spec = curator.gen_generic(&mut next_rng())?;
            entries.push(ManifestEntry { split, spec });
        }
        for i in 0..interaction {
            let spec = curator.gen_interaction(setting_of(i), &mut next_rng())?;
            entries.push(ManifestEntry { split, spec });
        }
    }
    let mut pool = Vec::with_capacity(n.interaction_pool);
    for i in 0..n.interaction_pool {
        pool.push(curator.gen_interaction(setting_of(i), &mut next_rng())?);
    }
    let mut picks = sample(&mut next_rng(), pool.len(), n.interaction_only).into_vec();
    picks.sort_unstable();
    for k in picks {
        entries.push(ManifestEntry {
            split: Split::TestInteraction,
            spec: pool[k].clone(),
        });
    }

    let mut manifest = DatasetManifest {
        version: MANIFEST_VERSION,
        map: curator.graph.name.clone(),
        seed,
        scale,
        counts: counts.clone(),
        entries,
        hash: String::new(),
    };
    manifest.hash = manifest.compute_hash();
    Ok(manifest)
}
