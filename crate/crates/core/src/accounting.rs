//! Token accounting, pricing and cache-marker placement.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{Message, Usage};

/// Default spacing of cache markers, in estimated tokens.
pub const DEFAULT_CACHE_GRID: u64 = 2048;

const PER_MILLION: f64 = 1_000_000.0;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum AccountingError {
    #[error("model '{0}' has cache tokens but its price sheet does not support caching")]
    CacheUnsupported(String),
    #[error("no price sheet for model '{0}'")]
    UnknownModel(String),
    #[error("price sheet '{model}': {message}")]
    InvalidSheet { model: String, message: String },
}

/// Per-million-token rates for one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriceSheet {
    pub model_id: String,
    pub input: f64,
    pub output: f64,
    #[serde(default)]
    pub cache_read: f64,
    #[serde(default)]
    pub cache_write: f64,
    #[serde(default)]
    pub cache_supported: bool,
}

impl PriceSheet {
    pub fn new(model_id: &str, input: f64, output: f64) -> Self {
        Self {
            model_id: model_id.into(),
            input,
            output,
            cache_read: 0.0,
            cache_write: 0.0,
            cache_supported: false,
        }
    }

    pub fn with_cache(mut self, read: f64, write: f64) -> Self {
        self.cache_read = read;
        self.cache_write = write;
        self.cache_supported = true;
        self
    }

    fn validate(&self) -> Result<(), AccountingError> {
        let rates = [self.input, self.output, self.cache_read, self.cache_write];
        if rates.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
            return Err(AccountingError::InvalidSheet {
                model: self.model_id.clone(),
                message: "rates must be finite and nonnegative".into(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub input_cost: f64,
    pub output_cost: f64,
    pub cache_read_cost: f64,
    pub cache_write_cost: f64,
    pub total: f64,
}

/// Price `usage`. Each component is tokens × rate / 10⁶.
pub fn cost(usage: &Usage, sheet: &PriceSheet) -> Result<CostBreakdown, AccountingError> {
    if !sheet.cache_supported && usage.has_cache_tokens() {
        return Err(AccountingError::CacheUnsupported(sheet.model_id.clone()));
    }
    let price = |tokens: u64, rate: f64| tokens as f64 * rate / PER_MILLION;
    let input_cost = price(usage.input_tokens, sheet.input);
    let output_cost = price(usage.output_tokens, sheet.output);
    let cache_read_cost = price(usage.cache_read_tokens, sheet.cache_read);
    let cache_write_cost = price(usage.cache_write_tokens, sheet.cache_write);
    Ok(CostBreakdown {
        input_cost,
        output_cost,
        cache_read_cost,
        cache_write_cost,
        total: input_cost + output_cost + cache_read_cost + cache_write_cost,
    })
}

/// `1 − actual / counterfactual`, where the counterfactual bills cached reads
/// and writes at the fresh input rate. Zero when the counterfactual is zero.
/// Negative when cache writes outweigh the read discount.
pub fn cache_savings(usage: &Usage, sheet: &PriceSheet) -> Result<f64, AccountingError> {
    if !sheet.cache_supported {
        return Err(AccountingError::CacheUnsupported(sheet.model_id.clone()));
    }
    let actual = cost(usage, sheet)?.total;
    let fresh = Usage {
        input_tokens: usage.input_tokens + usage.cache_read_tokens + usage.cache_write_tokens,
        output_tokens: usage.output_tokens,
        ..Usage::default()
    };
    let counterfactual = cost(&fresh, sheet)?.total;
    if counterfactual == 0.0 {
        return Ok(0.0);
    }
    Ok(1.0 - actual / counterfactual)
}

/// Copy of `messages` with cache markers on a grid of estimated tokens.
///
/// Walking forward, a marker goes after the first message at which the tokens
/// accumulated since the previous marker reach `grid_step`. Existing markers
/// are replaced, so repeated calls on a growing conversation keep earlier
/// markers in place.
///
/// # Panics
/// If `grid_step` is zero.
pub fn mark_cache_points(messages: &[Message], grid_step: u64) -> Vec<Message> {
    let sizes: Vec<u64> = messages.iter().map(Message::estimated_tokens).collect();
    let marks = marker_positions(&sizes, grid_step);
    messages
        .iter()
        .enumerate()
        .map(|(i, m)| Message {
            cache_marker: marks.contains(&i),
            ..m.clone()
        })
        .collect()
}

/// Indices of the messages that receive a marker, for message sizes `sizes`.
pub fn marker_positions(sizes: &[u64], grid_step: u64) -> Vec<usize> {
    assert!(grid_step >= 1, "grid_step must be positive");
    let mut since = 0u64;
    let mut out = Vec::new();
    for (i, &s) in sizes.iter().enumerate() {
        since += s;
        if since >= grid_step {
            out.push(i);
            since = 0;
        }
    }
    out
}

/// Running total of usage across turns.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct UsageAccumulator {
    total: Usage,
    turns: u64,
}

impl UsageAccumulator {
    pub fn add(&mut self, usage: &Usage) {
        self.total += *usage;
        self.turns += 1;
    }

    pub fn total(&self) -> Usage {
        self.total
    }

    pub fn turns(&self) -> u64 {
        self.turns
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PriceFile {
    #[serde(rename = "model")]
    models: Vec<PriceSheet>,
}

/// Price sheets keyed by model id.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceBook {
    sheets: BTreeMap<String, PriceSheet>,
}

impl Default for PriceBook {
    /// The three sheets of the study: Claude with caching, Mistral and Llama without.
    fn default() -> Self {
        Self::from_sheets([
            PriceSheet::new("claude-3.7-sonnet", 3.0, 15.0).with_cache(0.3, 3.75),
            PriceSheet::new("mistral-large-3", 0.5, 1.5),
            PriceSheet::new("llama-3.3-70b", 0.15, 0.6),
        ])
        .expect("default price sheets are valid")
    }
}

impl PriceBook {
    pub fn from_sheets(sheets: impl IntoIterator<Item = PriceSheet>) -> Result<Self, AccountingError> {
        let mut map = BTreeMap::new();
        for s in sheets {
            s.validate()?;
            if map.insert(s.model_id.clone(), s.clone()).is_some() {
                return Err(AccountingError::InvalidSheet {
                    model: s.model_id,
                    message: "duplicate model id".into(),
                });
            }
        }
        Ok(Self { sheets: map })
    }

    /// Parse a TOML file of `[[model]]` tables.
    pub fn from_toml(text: &str) -> Result<Self, AccountingError> {
        let file: PriceFile = toml::from_str(text).map_err(|e| AccountingError::InvalidSheet {
            model: "<file>".into(),
            message: e.message().to_string(),
        })?;
        Self::from_sheets(file.models)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, AccountingError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| AccountingError::InvalidSheet {
            model: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_toml(&text)
    }

    pub fn get(&self, model_id: &str) -> Result<&PriceSheet, AccountingError> {
        self.sheets
            .get(model_id)
            .ok_or_else(|| AccountingError::UnknownModel(model_id.to_string()))
    }

    pub fn sheets(&self) -> impl Iterator<Item = &PriceSheet> {
        self.sheets.values()
    }
}
