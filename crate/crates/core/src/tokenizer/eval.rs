//! Compression ratio: tokens per Unicode scalar value.

use std::collections::BTreeMap;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{TokenizerError, TokenizerModel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LangRatio {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub count: usize,
}

impl fmt::Display for LangRatio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.3} ± {:.3}", self.mean, self.std)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompressionReport {
    /// `l_token / l_origin` over the whole set.
    pub r: f64,
    pub l_token: u64,
    /// Unicode scalar values.
    pub l_origin: u64,
    /// Mean and spread of the per-text ratios.
    pub overall: LangRatio,
    pub per_lang: BTreeMap<String, LangRatio>,
}

fn summarize(rs: &[f64]) -> LangRatio {
    let n = rs.len() as f64;
    let mean = rs.iter().sum::<f64>() / n;
    let var = rs.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
    LangRatio {
        mean,
        std: var.sqrt(),
        count: rs.len(),
    }
}

/// Ratio per text, aggregated per language and overall.
pub fn compression_ratio<L: AsRef<str> + Sync, T: AsRef<str> + Sync>(
    model: &TokenizerModel,
    texts: &[(L, T)],
) -> Result<CompressionReport, TokenizerError> {
    if texts.is_empty() {
        return Err(TokenizerError::EmptyText(0));
    }
    if let Some(i) = texts.iter().position(|(_, t)| t.as_ref().is_empty()) {
        return Err(TokenizerError::EmptyText(i));
    }
    let lengths: Vec<(u64, u64)> = texts
        .par_iter()
        .map(|(_, t)| (model.encode(t.as_ref()).len() as u64, t.as_ref().chars().count() as u64))
        .collect();
    let mut by_lang: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut all = Vec::with_capacity(texts.len());
    for ((lang, _), &(tok, orig)) in texts.iter().zip(&lengths) {
        let r = tok as f64 / orig as f64;
        by_lang.entry(lang.as_ref().to_string()).or_default().push(r);
        all.push(r);
    }
    let l_token: u64 = lengths.iter().map(|l| l.0).sum();
    let l_origin: u64 = lengths.iter().map(|l| l.1).sum();
    Ok(CompressionReport {
        r: l_token as f64 / l_origin as f64,
        l_token,
        l_origin,
        overall: summarize(&all),
        per_lang: by_lang.into_iter().map(|(k, v)| (k, summarize(&v))).collect(),
    })
}
