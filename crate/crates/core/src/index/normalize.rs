use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};

/// Normalized value given to every entry when all raw scores are equal.
pub const DEGENERATE_MINMAX: f64 = 0.5;

/// Raw per-query scores keyed by id, with their min–max normalized values.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreTable {
    entries: BTreeMap<String, f64>,
    normalized: BTreeMap<String, f64>,
}

impl ScoreTable {
    pub fn new<I, S>(entries: I) -> Self
    where
        I: IntoIterator<Item = (S, f64)>,
        S: Into<String>,
    {
        ScoreTable {
            entries: entries.into_iter().map(|(k, v)| (k.into(), v)).collect(),
            normalized: BTreeMap::new(),
        }
    }

    pub fn entries(&self) -> &BTreeMap<String, f64> {
        &self.entries
    }

    /// Empty until the table has been through [`minmax_normalize`].
    pub fn normalized(&self) -> &BTreeMap<String, f64> {
        &self.normalized
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

pub fn minmax_normalize(table: &ScoreTable) -> Result<ScoreTable> {
    if table.is_empty() {
        return Err(Error::EmptyScoreTable);
    }
    let mut values: Vec<f64> = table.entries.values().copied().collect();
    minmax_in_place(&mut values);
    Ok(ScoreTable {
        entries: table.entries.clone(),
        normalized: table.entries.keys().cloned().zip(values).collect(),
    })
}

/// `(s - min) / (max - min)`; all entries become 0.5 when `max == min`.
/// An empty slice is left alone.
pub fn minmax_in_place(values: &mut [f64]) {
    let (min, max) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    if values.is_empty() {
        return;
    }
    let span = max - min;
    if span == 0.0 || !span.is_finite() {
        values.fill(DEGENERATE_MINMAX);
        return;
    }
    for v in values.iter_mut() {
        *v = ((*v - min) / span).clamp(0.0, 1.0);
    }
}

pub fn minmax(values: &[f64]) -> Vec<f64> {
    let mut out = values.to_vec();
    minmax_in_place(&mut out);
    out
}
