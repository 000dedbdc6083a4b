//! Okapi BM25 over an in-memory inverted index.

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::tokenize::tokenize;
use crate::error::{Error, Result};

pub const DEFAULT_K1: f64 = 1.5;
pub const DEFAULT_B: f64 = 0.75;

const MAGIC: &[u8; 8] = b"HKPOST\0\0";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SparseField {
    /// Doc card title + section headers.
    DocHierarchy,
    /// Doc card concatenated body text.
    DocBody,
    /// Unit scoring text (body for Text units, upper context for Table/Image).
    UnitText,
}

impl SparseField {
    pub const ALL: [SparseField; 3] = [
        SparseField::DocHierarchy,
        SparseField::DocBody,
        SparseField::UnitText,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SparseField::DocHierarchy => "doc_hierarchy",
            SparseField::DocBody => "doc_body",
            SparseField::UnitText => "unit_text",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|f| f.name() == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params {
            k1: DEFAULT_K1,
            b: DEFAULT_B,
        }
    }
}

impl Bm25Params {
    pub fn validate(&self) -> Result<()> {
        if !(self.k1 > 0.0 && self.k1.is_finite()) {
            return Err(Error::Config(format!("k1 must be > 0, got {}", self.k1)));
        }
        if !(0.0..=1.0).contains(&self.b) {
            return Err(Error::Config(format!("b must be in [0, 1], got {}", self.b)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Posting {
    pub ordinal: u32,
    pub tf: u32,
}

/// Inverted index for one field. Entries are addressed by string id or by
/// their ordinal (insertion position).
#[derive(Debug, Clone, PartialEq)]
pub struct SparseIndex {
    field: SparseField,
    params: Bm25Params,
    ids: Vec<String>,
    lookup: HashMap<String, u32>,
    doc_lengths: Vec<u32>,
    avg_doc_length: f64,
    postings: BTreeMap<String, Vec<Posting>>,
}

impl SparseIndex {
    /// Tokenizes each `(id, text)` pair and indexes it.
    pub fn build<I, S, T>(field: SparseField, params: Bm25Params, docs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, T)>,
        S: Into<String>,
        T: AsRef<str>,
    {
        Self::from_tokens(
            field,
            params,
            docs.into_iter()
                .map(|(id, text)| (id.into(), tokenize(text.as_ref()))),
        )
    }

    pub fn from_tokens<I>(field: SparseField, params: Bm25Params, docs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (String, Vec<String>)>,
    {
        params.validate()?;
        let mut ids = Vec::new();
        let mut lookup = HashMap::new();
        let mut doc_lengths = Vec::new();
        let mut postings: BTreeMap<String, Vec<Posting>> = BTreeMap::new();
        for (id, terms) in docs {
            let ordinal = ids.len() as u32;
            if lookup.insert(id.clone(), ordinal).is_some() {
                return Err(Error::Config(format!(
                    "duplicate id `{id}` in {} index",
                    field.name()
                )));
            }
            ids.push(id);
            doc_lengths.push(terms.len() as u32);
            let mut tf: BTreeMap<String, u32> = BTreeMap::new();
            for t in terms {
                *tf.entry(t).or_default() += 1;
            }
            for (term, count) in tf {
                postings.entry(term).or_default().push(Posting { ordinal, tf: count });
            }
        }
        let avg_doc_length = mean_length(&doc_lengths);
        Ok(SparseIndex {
            field,
            params,
            ids,
            lookup,
            doc_lengths,
            avg_doc_length,
            postings,
        })
    }

    pub fn field(&self) -> SparseField {
        self.field
    }

    pub fn params(&self) -> Bm25Params {
        self.params
    }

    /// Corpus size N.
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn ordinal(&self, id: &str) -> Option<usize> {
        self.lookup.get(id).map(|&o| o as usize)
    }

    pub fn doc_length(&self, ordinal: usize) -> u32 {
        self.doc_lengths[ordinal]
    }

    pub fn avg_doc_length(&self) -> f64 {
        self.avg_doc_length
    }

    pub fn vocabulary_len(&self) -> usize {
        self.postings.len()
    }

    pub fn postings(&self, term: &str) -> &[Posting] {
        self.postings.get(term).map_or(&[], Vec::as_slice)
    }

    pub fn df(&self, term: &str) -> usize {
        self.postings(term).len()
    }

    /// `ln((N - df + 0.5) / (df + 0.5) + 1)`, never negative.
    pub fn idf(&self, term: &str) -> f64 {
        let n = self.len() as f64;
        let df = self.df(term) as f64;
        ((n - df + 0.5) / (df + 0.5) + 1.0).ln()
    }

    fn term_weight(&self, idf: f64, tf: u32, len: u32) -> f64 {
        let Bm25Params { k1, b } = self.params;
        let tf = tf as f64;
        let norm = if self.avg_doc_length > 0.0 {
            1.0 - b + b * len as f64 / self.avg_doc_length
        } else {
            1.0
        };
        idf * tf * (k1 + 1.0) / (tf + k1 * norm)
    }

    /// BM25 of one entry, summing over every query term occurrence.
    pub fn score(&self, query_terms: &[String], id: &str) -> Result<f64> {
        let ordinal = self
            .ordinal(id)
            .ok_or_else(|| Error::UnknownId(id.to_string()))?;
        Ok(self.score_ordinal(query_terms, ordinal))
    }

    pub fn score_ordinal(&self, query_terms: &[String], ordinal: usize) -> f64 {
        let len = self.doc_lengths[ordinal];
        query_terms
            .iter()
            .map(|term| {
                let list = self.postings(term);
                match list.binary_search_by_key(&(ordinal as u32), |p| p.ordinal) {
                    Ok(pos) => self.term_weight(self.idf(term), list[pos].tf, len),
                    Err(_) => 0.0,
                }
            })
            .sum()
    }

    /// Scores every entry; the result is indexed by ordinal.
    pub fn score_all(&self, query_terms: &[String]) -> Vec<f64> {
        let mut scores = vec![0.0; self.len()];
        for term in query_terms {
            let list = self.postings(term);
            if list.is_empty() {
                continue;
            }
            let idf = self.idf(term);
            for p in list {
                scores[p.ordinal as usize] +=
                    self.term_weight(idf, p.tf, self.doc_lengths[p.ordinal as usize]);
            }
        }
        scores
    }

    pub fn write_to(&self, mut w: impl Write) -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        write_str(&mut w, self.field.name())?;
        w.write_all(&self.params.k1.to_le_bytes())?;
        w.write_all(&self.params.b.to_le_bytes())?;
        w.write_all(&(self.ids.len() as u32).to_le_bytes())?;
        for (id, len) in self.ids.iter().zip(&self.doc_lengths) {
            write_str(&mut w, id)?;
            w.write_all(&len.to_le_bytes())?;
        }
        w.write_all(&(self.postings.len() as u32).to_le_bytes())?;
        for (term, list) in &self.postings {
            write_str(&mut w, term)?;
            w.write_all(&(list.len() as u32).to_le_bytes())?;
            for p in list {
                w.write_all(&p.ordinal.to_le_bytes())?;
                w.write_all(&p.tf.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        std::fs::write(path, buf)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        Self::read_from(&mut bytes.as_slice()).map_err(|reason| Error::CorruptIndex {
            path: path.to_path_buf(),
            reason,
        })
    }

    fn read_from(r: &mut &[u8]) -> std::result::Result<Self, String> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(|e| e.to_string())?;
        if &magic != MAGIC {
            return Err("bad magic".into());
        }
        let version = read_u32(r)?;
        if version != FORMAT_VERSION {
            return Err(format!("unsupported version {version}"));
        }
        let name = read_str(r)?;
        let field = SparseField::from_name(&name).ok_or(format!("unknown field `{name}`"))?;
        let params = Bm25Params {
            k1: read_f64(r)?,
            b: read_f64(r)?,
        };
        let n = read_u32(r)? as usize;
        let mut ids = Vec::with_capacity(n);
        let mut lookup = HashMap::with_capacity(n);
        let mut doc_lengths = Vec::with_capacity(n);
        for ordinal in 0..n {
            let id = read_str(r)?;
            if lookup.insert(id.clone(), ordinal as u32).is_some() {
                return Err(format!("duplicate id `{id}`"));
            }
            ids.push(id);
            doc_lengths.push(read_u32(r)?);
        }
        let terms = read_u32(r)? as usize;
        let mut postings = BTreeMap::new();
        for _ in 0..terms {
            let term = read_str(r)?;
            let count = read_u32(r)? as usize;
            let mut list = Vec::with_capacity(count);
            for _ in 0..count {
                let ordinal = read_u32(r)?;
                if ordinal as usize >= n {
                    return Err(format!("posting ordinal {ordinal} out of range"));
                }
                list.push(Posting {
                    ordinal,
                    tf: read_u32(r)?,
                });
            }
            postings.insert(term, list);
        }
        if !r.is_empty() {
            return Err("trailing bytes".into());
        }
        let avg_doc_length = mean_length(&doc_lengths);
        Ok(SparseIndex {
            field,
            params,
            ids,
            lookup,
            doc_lengths,
            avg_doc_length,
            postings,
        })
    }
}

fn mean_length(lengths: &[u32]) -> f64 {
    if lengths.is_empty() {
        0.0
    } else {
        lengths.iter().map(|&l| l as f64).sum::<f64>() / lengths.len() as f64
    }
}

fn write_str(w: &mut impl Write, s: &str) -> std::io::Result<()> {
    w.write_all(&(s.len() as u32).to_le_bytes())?;
    w.write_all(s.as_bytes())
}

fn read_u32(r: &mut &[u8]) -> std::result::Result<u32, String> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(|e| e.to_string())?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64(r: &mut &[u8]) -> std::result::Result<f64, String> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(|e| e.to_string())?;
    Ok(f64::from_le_bytes(b))
}

fn read_str(r: &mut &[u8]) -> std::result::Result<String, String> {
    let len = read_u32(r)? as usize;
    if len > r.len() {
        return Err("string length past end of file".into());
    }
    let (head, tail) = r.split_at(len);
    let s = String::from_utf8(head.to_vec()).map_err(|e| e.to_string())?;
    *r = tail;
    Ok(s)
}
