//! Engine configuration: one flat TOML table.
//!
//! Every key is optional; missing keys take their defaults. Unknown keys are
//! rejected so typos do not silently fall back to defaults.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{sha256_json, IndexConfig};
use crate::embed::EmbedderSpec;
use crate::error::{Error, Result};
use crate::packing::PackingConfig;
use crate::retrieval::{DocFieldMode, FusionMode, RetrievalConfig, RoutingMode};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    pub embedder: EmbedderSpec,
    pub doc_card_max_tokens: usize,
    pub k1: f64,
    pub b: f64,

    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub k_doc: usize,
    pub k_sec: usize,
    pub routing_mode: RoutingMode,
    pub fusion_mode: FusionMode,
    pub doc_fields: DocFieldMode,

    pub budget: i64,
    pub m: usize,
    pub image_token_cost: usize,
    pub image_cap: usize,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self::from_parts(
            &IndexConfig::default(),
            &RetrievalConfig::default(),
            &PackingConfig::default(),
        )
    }
}

impl EngineConfig {
    pub fn from_parts(index: &IndexConfig, retrieval: &RetrievalConfig, packing: &PackingConfig) -> Self {
        EngineConfig {
            embedder: index.embedder.clone(),
            doc_card_max_tokens: index.doc_card_max_tokens,
            k1: index.k1,
            b: index.b,
            alpha: retrieval.alpha,
            beta: retrieval.beta,
            gamma: retrieval.gamma,
            lambda: retrieval.lambda,
            k_doc: retrieval.k_doc,
            k_sec: retrieval.k_sec,
            routing_mode: retrieval.routing_mode,
            fusion_mode: retrieval.fusion_mode,
            doc_fields: retrieval.doc_fields,
            budget: packing.budget,
            m: packing.m,
            image_token_cost: packing.image_token_cost,
            image_cap: packing.image_cap,
        }
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: EngineConfig = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Like [`EngineConfig::load`], also returning the keys the file sets.
    pub fn load_explicit(path: &Path) -> Result<(Self, BTreeSet<String>)> {
        let cfg = Self::load(path)?;
        let text = std::fs::read_to_string(path)?;
        let table: toml::Table = toml::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
        Ok((cfg, table.keys().cloned().collect()))
    }

    /// Errors when any of `keys` names an index-time setting that differs
    /// from `index`.
    pub fn check_index_keys(&self, keys: &BTreeSet<String>, index: &IndexConfig) -> Result<()> {
        let ours = self.index();
        let clashes = [
            ("embedder", ours.embedder != index.embedder),
            ("doc_card_max_tokens", ours.doc_card_max_tokens != index.doc_card_max_tokens),
            ("k1", ours.k1 != index.k1),
            ("b", ours.b != index.b),
        ];
        for (key, differs) in clashes {
            if differs && keys.contains(key) {
                return Err(Error::Config(format!(
                    "`{key}` in the config file conflicts with the value the index was built with"
                )));
            }
        }
        Ok(())
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes to toml")
    }

    pub fn index(&self) -> IndexConfig {
        IndexConfig {
            embedder: self.embedder.clone(),
            doc_card_max_tokens: self.doc_card_max_tokens,
            k1: self.k1,
            b: self.b,
        }
    }

    pub fn retrieval(&self) -> RetrievalConfig {
        RetrievalConfig {
            alpha: self.alpha,
            beta: self.beta,
            gamma: self.gamma,
            lambda: self.lambda,
            k_doc: self.k_doc,
            k_sec: self.k_sec,
            routing_mode: self.routing_mode,
            fusion_mode: self.fusion_mode,
            doc_fields: self.doc_fields,
        }
    }

    pub fn packing(&self) -> PackingConfig {
        PackingConfig {
            budget: self.budget,
            m: self.m,
            image_token_cost: self.image_token_cost,
            image_cap: self.image_cap,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.index().validate()?;
        self.retrieval().validate()?;
        self.packing().validate()
    }

    /// Hex sha256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        sha256_json(self)
    }
}
