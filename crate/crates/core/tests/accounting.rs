use std::path::PathBuf;

use repomine::accounting::{cache_savings, cost, marker_positions, PriceBook};
use repomine::gateway::Usage;

const CLAUDE: &str = "claude-3.7-sonnet";

/// Independent oracle: exact cost in units of 1e-8 currency, with rates given
/// in the same unit per token (3.0 per million = 300 per token).
fn cost_units(u: &Usage, input: u64, output: u64, read: u64, write: u64) -> u64 {
    u.input_tokens * input + u.output_tokens * output + u.cache_read_tokens * read + u.cache_write_tokens * write
}

fn worked() -> Usage {
    Usage {
        input_tokens: 10_000,
        output_tokens: 1_000,
        cache_read_tokens: 20_000,
        cache_write_tokens: 5_000,
    }
}

#[test]
fn shipped_sheets_match_defaults() {
    let file = PriceBook::load(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/prices.toml")).unwrap();
    let defaults = PriceBook::default();
    assert_eq!(file.sheets().collect::<Vec<_>>(), defaults.sheets().collect::<Vec<_>>());
}

#[test]
fn one_million_input_tokens() {
    let book = PriceBook::default();
    let u = Usage {
        input_tokens: 1_000_000,
        ..Usage::default()
    };
    assert_eq!(cost(&u, book.get(CLAUDE).unwrap()).unwrap().total, 3.0);
    assert_eq!(cost(&u, book.get("mistral-large-3").unwrap()).unwrap().total, 0.5);
    assert_eq!(cost(&u, book.get("llama-3.3-70b").unwrap()).unwrap().total, 0.15);
}

#[test]
fn worked_breakdown_matches_oracle() {
    let book = PriceBook::default();
    let sheet = book.get(CLAUDE).unwrap();
    let u = worked();
    let actual = cost_units(&u, 300, 1500, 30, 375);
    assert_eq!(actual, 6_975_000);
    let c = cost(&u, sheet).unwrap();
    assert!((c.input_cost - 0.03).abs() < 1e-12);
    assert!((c.output_cost - 0.015).abs() < 1e-12);
    assert!((c.cache_read_cost - 0.006).abs() < 1e-12);
    assert!((c.cache_write_cost - 0.01875).abs() < 1e-12);
    assert!((c.total - actual as f64 * 1e-8).abs() < 1e-12);

    // counterfactual bills every cached token at the fresh input rate
    let fresh = cost_units(&u, 300, 1500, 300, 300);
    assert_eq!(fresh, 12_000_000);
    let expected = 1.0 - actual as f64 / fresh as f64;
    assert!((expected - 0.41875).abs() < 1e-12);
    assert!((cache_savings(&u, sheet).unwrap() - expected).abs() < 1e-12);
}

#[test]
fn fully_cached_reads_save_ninety_percent() {
    let book = PriceBook::default();
    let u = Usage {
        cache_read_tokens: 123_456,
        ..Usage::default()
    };
    let expected = 1.0 - cost_units(&u, 300, 1500, 30, 375) as f64 / cost_units(&u, 300, 1500, 300, 300) as f64;
    assert!((expected - 0.9).abs() < 1e-12);
    assert!((cache_savings(&u, book.get(CLAUDE).unwrap()).unwrap() - expected).abs() < 1e-12);
}

#[test]
fn marker_placement_examples() {
    assert_eq!(marker_positions(&[900, 900, 900], 1000), [1]);
    assert!(marker_positions(&[10, 20], 1000).is_empty());
    assert_eq!(marker_positions(&[50_000], 1000), [0]);
}
