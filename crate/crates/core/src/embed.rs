//! Embedding providers.
//!
//! Two backends sit behind [`EmbeddingProvider`]: a deterministic
//! feature-hashing provider used for tests and desk-scale runs, and a
//! precomputed store read from `embeddings.bin` + `embeddings.manifest.json`.
//! Both are pure: equal input gives a bit-identical vector.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::index::tokenize;

pub const EMBEDDINGS_BIN: &str = "embeddings.bin";
pub const EMBEDDINGS_MANIFEST: &str = "embeddings.manifest.json";

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().all(|v| v.is_finite()) {
            Ok(EmbeddingVector(values))
        } else {
            Err(Error::NonFiniteEmbedding)
        }
    }

    pub fn zeros(dim: usize) -> Self {
        EmbeddingVector(vec![0.0; dim])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    fn normalized(mut self) -> Self {
        let n = self.norm();
        if n > 0.0 {
            self.0.iter_mut().for_each(|v| *v /= n);
        }
        self
    }
}

/// `dot(u, v) / (|u| |v|)`, or 0 when either vector is zero.
pub fn cosine(u: &EmbeddingVector, v: &EmbeddingVector) -> Result<f64> {
    if u.dim() != v.dim() {
        return Err(Error::DimensionMismatch {
            left: u.dim(),
            right: v.dim(),
        });
    }
    let (mut dot, mut uu, mut vv) = (0.0, 0.0, 0.0);
    for (a, b) in u.0.iter().zip(&v.0) {
        dot += a * b;
        uu += a * a;
        vv += b * b;
    }
    if uu == 0.0 || vv == 0.0 {
        return Ok(0.0);
    }
    Ok((dot / (uu.sqrt() * vv.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Modality {
    Text,
    Visual,
}

impl Modality {
    fn name(self) -> &'static str {
        match self {
            Modality::Text => "text",
            Modality::Visual => "visual",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProviderKind {
    DeterministicHash,
    PrecomputedFile,
}

/// `hash:<dim>` or `file:<dir>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EmbedderSpec {
    Hash { dim: usize },
    File { path: PathBuf },
}

impl Default for EmbedderSpec {
    fn default() -> Self {
        EmbedderSpec::Hash { dim: 256 }
    }
}

impl FromStr for EmbedderSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidEmbedderSpec(s.to_string());
        match s.split_once(':') {
            Some(("hash", dim)) => {
                let dim: usize = dim.parse().map_err(|_| bad())?;
                if dim == 0 {
                    return Err(bad());
                }
                Ok(EmbedderSpec::Hash { dim })
            }
            Some(("file", path)) if !path.is_empty() => Ok(EmbedderSpec::File {
                path: PathBuf::from(path),
            }),
            _ => Err(bad()),
        }
    }
}

impl fmt::Display for EmbedderSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EmbedderSpec::Hash { dim } => write!(f, "hash:{dim}"),
            EmbedderSpec::File { path } => write!(f, "file:{}", path.display()),
        }
    }
}

impl Serialize for EmbedderSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for EmbedderSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StoreManifest {
    dim: usize,
    entries: BTreeMap<String, StoreEntry>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StoreEntry {
    /// Byte offset into `embeddings.bin`.
    offset: u64,
    dim: usize,
}

/// Precomputed vectors keyed by unit id, crop ref, doc id or query text.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecomputedStore {
    dim: usize,
    vectors: BTreeMap<String, Vec<f32>>,
}

impl PrecomputedStore {
    pub fn new(dim: usize) -> Self {
        PrecomputedStore {
            dim,
            vectors: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, key: impl Into<String>, values: Vec<f32>) -> Result<()> {
        if values.len() != self.dim {
            return Err(Error::DimensionMismatch {
                left: self.dim,
                right: values.len(),
            });
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFiniteEmbedding);
        }
        self.vectors.insert(key.into(), values);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, key: &str) -> Option<EmbeddingVector> {
        self.vectors
            .get(key)
            .map(|v| EmbeddingVector(v.iter().map(|&x| x as f64).collect()))
    }

    /// Writes `embeddings.bin` (little-endian f32) and its JSON manifest into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut bin = Vec::with_capacity(self.vectors.len() * self.dim * 4);
        let mut entries = BTreeMap::new();
        for (key, values) in &self.vectors {
            entries.insert(
                key.clone(),
                StoreEntry {
                    offset: bin.len() as u64,
                    dim: values.len(),
                },
            );
            for v in values {
                bin.extend_from_slice(&v.to_le_bytes());
            }
        }
        let manifest = StoreManifest {
            dim: self.dim,
            entries,
        };
        std::fs::write(dir.join(EMBEDDINGS_BIN), bin)?;
        std::fs::write(
            dir.join(EMBEDDINGS_MANIFEST),
            serde_json::to_vec_pretty(&manifest)?,
        )?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let manifest_path = dir.join(EMBEDDINGS_MANIFEST);
        let manifest: StoreManifest =
            serde_json::from_slice(&std::fs::read(&manifest_path)?)?;
        let bin_path = dir.join(EMBEDDINGS_BIN);
        let bin = std::fs::read(&bin_path)?;
        let corrupt = |reason: String| Error::CorruptIndex {
            path: bin_path.clone(),
            reason,
        };
        let mut store = PrecomputedStore::new(manifest.dim);
        for (key, entry) in manifest.entries {
            if entry.dim != manifest.dim {
                return Err(corrupt(format!(
                    "entry `{key}` has dim {} but store dim is {}",
                    entry.dim, manifest.dim
                )));
            }
            let start = entry.offset as usize;
            let end = start + entry.dim * 4;
            let bytes = bin
                .get(start..end)
                .ok_or_else(|| corrupt(format!("entry `{key}` runs past end of file")))?;
            let values = bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            store.insert(key, values)?;
        }
        Ok(store)
    }
}

#[derive(Debug, Clone)]
enum Backend {
    Hash,
    Precomputed(Arc<PrecomputedStore>),
}

#[derive(Debug, Clone)]
pub struct EmbeddingProvider {
    backend: Backend,
    modality: Modality,
    dim: usize,
}

impl EmbeddingProvider {
    pub fn hash(modality: Modality, dim: usize) -> Self {
        EmbeddingProvider {
            backend: Backend::Hash,
            modality,
            dim,
        }
    }

    pub fn precomputed(store: Arc<PrecomputedStore>, modality: Modality) -> Self {
        EmbeddingProvider {
            dim: store.dim(),
            backend: Backend::Precomputed(store),
            modality,
        }
    }

    /// Text and visual providers for a spec. A file spec shares one store
    /// between both modalities.
    pub fn pair_from_spec(spec: &EmbedderSpec) -> Result<(Self, Self)> {
        match spec {
            EmbedderSpec::Hash { dim } => Ok((
                Self::hash(Modality::Text, *dim),
                Self::hash(Modality::Visual, *dim),
            )),
            EmbedderSpec::File { path } => {
                let store = Arc::new(PrecomputedStore::load(path)?);
                Ok((
                    Self::precomputed(Arc::clone(&store), Modality::Text),
                    Self::precomputed(store, Modality::Visual),
                ))
            }
        }
    }

    pub fn kind(&self) -> ProviderKind {
        match self.backend {
            Backend::Hash => ProviderKind::DeterministicHash,
            Backend::Precomputed(_) => ProviderKind::PrecomputedFile,
        }
    }

    pub fn modality(&self) -> Modality {
        self.modality
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Embeds free text. On a visual provider this is the query-side encoder
    /// into the visual space. Precomputed stores look the text up verbatim.
    pub fn embed_text(&self, text: &str) -> Result<EmbeddingVector> {
        self.embed_keyed_text(text, text)
    }

    /// Like [`embed_text`](Self::embed_text), but a precomputed store looks
    /// up `key` (a unit or doc id) instead of the text itself.
    pub fn embed_keyed_text(&self, key: &str, text: &str) -> Result<EmbeddingVector> {
        match &self.backend {
            Backend::Hash => Ok(hash_text(self.salt(), text, self.dim)),
            Backend::Precomputed(store) => lookup(store, key),
        }
    }

    pub fn embed_visual(&self, crop_ref: &str) -> Result<EmbeddingVector> {
        if self.modality != Modality::Visual {
            return Err(Error::ModalityMismatch {
                expected: Modality::Visual.name(),
                actual: self.modality.name(),
            });
        }
        match &self.backend {
            Backend::Hash => Ok(hash_crop(crop_ref, self.dim)),
            Backend::Precomputed(store) => lookup(store, crop_ref),
        }
    }

    fn salt(&self) -> &'static [u8] {
        match self.modality {
            Modality::Text => b"text\x1f",
            Modality::Visual => b"visual-query\x1f",
        }
    }
}

fn lookup(store: &PrecomputedStore, key: &str) -> Result<EmbeddingVector> {
    store
        .get(key)
        .ok_or_else(|| Error::MissingEmbedding(key.to_string()))
}

fn fnv1a(salt: &[u8], feature: &str) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    salt.iter()
        .chain(feature.as_bytes())
        .fold(OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(PRIME))
}

/// Signed feature hashing of unigrams and bigrams, L2-normalized. Text
/// without any indexable term maps to the zero vector.
fn hash_text(salt: &[u8], text: &str, dim: usize) -> EmbeddingVector {
    let terms = tokenize(text);
    let mut values = vec![0.0; dim];
    let mut add = |feature: &str| {
        let h = fnv1a(salt, feature);
        let bucket = (h % dim as u64) as usize;
        values[bucket] += if h >> 63 == 1 { -1.0 } else { 1.0 };
    };
    for t in &terms {
        add(t);
    }
    for pair in terms.windows(2) {
        add(&format!("{} {}", pair[0], pair[1]));
    }
    EmbeddingVector(values).normalized()
}

/// Content-addressed stand-in for an image encoder: the crop ref seeds a
/// ChaCha stream.
fn hash_crop(crop_ref: &str, dim: usize) -> EmbeddingVector {
    let digest = Sha256::new()
        .chain_update(b"crop\x1f")
        .chain_update(crop_ref.as_bytes())
        .finalize();
    let mut rng = ChaCha8Rng::from_seed(digest.into());
    EmbeddingVector((0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect()).normalized()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::HashSet;

    fn text() -> EmbeddingProvider {
        EmbeddingProvider::hash(Modality::Text, 256)
    }

    fn visual() -> EmbeddingProvider {
        EmbeddingProvider::hash(Modality::Visual, 256)
    }

    #[test]
    fn empty_text_is_zero_vector() {
        let v = text().embed_text("").unwrap();
        assert_eq!(v, EmbeddingVector::zeros(256));
    }

    #[test]
    fn hash_text_is_unit_norm_and_pure() {
        let p = text();
        let a = p.embed_text("apollo crew").unwrap();
        let b = p.embed_text("apollo crew").unwrap();
        assert_eq!(a, b);
        assert!((a.norm() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn crop_vectors_do_not_collide() {
        let p = visual();
        let mut seen = HashSet::new();
        for i in 0..1000 {
            let v = p.embed_visual(&format!("crops/page{}/block{}.png", i / 7, i)).unwrap();
            let key: Vec<u64> = v.values().iter().map(|x| x.to_bits()).collect();
            assert!(seen.insert(key), "collision at {i}");
        }
        assert_eq!(p.embed_visual("a").unwrap(), p.embed_visual("a").unwrap());
    }

    #[test]
    fn visual_on_text_provider_is_rejected() {
        assert!(matches!(
            text().embed_visual("x"),
            Err(Error::ModalityMismatch { .. })
        ));
    }

    #[test]
    fn cosine_examples() {
        let v = |xs: &[f64]| EmbeddingVector::new(xs.to_vec()).unwrap();
        assert!((cosine(&v(&[3.0, 4.0]), &v(&[3.0, 4.0])).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(cosine(&v(&[1.0, 0.0]), &v(&[0.0, 1.0])).unwrap(), 0.0);
        let expected = 32.0 / (14f64.sqrt() * 77f64.sqrt());
        let got = cosine(&v(&[1.0, 2.0, 3.0]), &v(&[4.0, 5.0, 6.0])).unwrap();
        assert!((got - expected).abs() < 1e-12);
        assert!((got - 0.974631).abs() < 1e-6);
        assert_eq!(cosine(&v(&[0.0, 0.0]), &v(&[1.0, 0.0])).unwrap(), 0.0);
        assert!(matches!(
            cosine(&v(&[1.0]), &v(&[1.0, 2.0])),
            Err(Error::DimensionMismatch { left: 1, right: 2 })
        ));
        assert!(EmbeddingVector::new(vec![f64::NAN]).is_err());
    }

    #[test]
    fn spec_parsing() {
        assert_eq!("hash:64".parse::<EmbedderSpec>().unwrap(), EmbedderSpec::Hash { dim: 64 });
        assert_eq!(
            "file:/tmp/e".parse::<EmbedderSpec>().unwrap(),
            EmbedderSpec::File { path: "/tmp/e".into() }
        );
        for bad in ["hash:0", "hash:x", "file:", "bert:12", "hash"] {
            assert!(bad.parse::<EmbedderSpec>().is_err(), "{bad}");
        }
        assert_eq!(EmbedderSpec::Hash { dim: 8 }.to_string(), "hash:8");
    }

    #[test]
    fn precomputed_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = PrecomputedStore::new(3);
        store.insert("crops/a.png", vec![0.1, -2.5, 3.25e-7]).unwrap();
        store.insert("u1", vec![1.0, 0.0, 0.0]).unwrap();
        store.save(dir.path()).unwrap();
        let back = PrecomputedStore::load(dir.path()).unwrap();
        assert_eq!(back, store);

        let (t, v) = EmbeddingProvider::pair_from_spec(&EmbedderSpec::File {
            path: dir.path().to_path_buf(),
        })
        .unwrap();
        assert_eq!(t.kind(), ProviderKind::PrecomputedFile);
        let got = v.embed_visual("crops/a.png").unwrap();
        let want: Vec<f64> = [0.1f32, -2.5, 3.25e-7].iter().map(|&x| x as f64).collect();
        assert_eq!(got.values(), want.as_slice());
        assert!(matches!(
            t.embed_keyed_text("missing", "whatever"),
            Err(Error::MissingEmbedding(k)) if k == "missing"
        ));
    }

    proptest! {
        #[test]
        fn cosine_is_symmetric(a in prop::collection::vec(-10f64..10.0, 8), b in prop::collection::vec(-10f64..10.0, 8)) {
            let a = EmbeddingVector::new(a).unwrap();
            let b = EmbeddingVector::new(b).unwrap();
            prop_assert_eq!(cosine(&a, &b).unwrap().to_bits(), cosine(&b, &a).unwrap().to_bits());
        }

        #[test]
        fn hash_text_norm(s in "[a-z]{1,8}( [a-z]{1,8}){0,12}") {
            let v = text().embed_text(&s).unwrap();
            let n = v.norm();
            prop_assert!(n == 0.0 || (n - 1.0).abs() < 1e-9);
        }
    }
}
