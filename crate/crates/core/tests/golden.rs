//! Frozen outputs. Regenerate with `AGRICHAT_BLESS=1 cargo test --test golden`
//! and review the diff by hand.

mod common;

use std::fs;
use std::path::Path;

use agrichat::orchestrator::pages::forecast_text;
use agrichat::replay::{self, ReplayOptions, ReplayScript};
use agrichat::sim::{weather_forecast, SimConfig};

use common::*;

fn compare(path: &Path, actual: &str) {
    if std::env::var_os("AGRICHAT_BLESS").is_some() {
        fs::write(path, actual).unwrap();
        return;
    }
    let expected = fs::read_to_string(path).unwrap();
    assert_eq!(actual, expected, "{} differs", path.display());
}

#[test]
fn weekly_forecast_seed_42() {
    let cfg = SimConfig {
        seed: 42,
        ..SimConfig::default()
    };
    let days: Vec<_> = (0..7).map(|d| weather_forecast(&cfg, d)).collect();
    for f in &days {
        assert!(f.min_temp <= f.max_temp);
        assert!(f.rain_chance <= 100);
    }
    compare(&golden_path("forecast_seed42.txt"), &(forecast_text(&days) + "\n"));
}

#[test]
fn demo_transcript_in_process() {
    let script = ReplayScript::load(&data_path("demo.script")).unwrap();
    let outcome = replay::run(
        &script,
        &ReplayOptions {
            seed: Some(42),
            ..ReplayOptions::default()
        },
    )
    .unwrap();
    compare(&golden_path("demo_transcript.log"), &outcome.transcript());
    assert!(outcome.gateway.errors().is_empty(), "{:?}", outcome.gateway.errors());
}

#[test]
fn session_gate_holds_in_golden_transcript() {
    use agrichat::orchestrator::pages::{FAREWELL, PROMPT_START, WELCOME};
    use std::collections::HashMap;

    let text = std::fs::read_to_string(golden_path("demo_transcript.log")).unwrap();
    let mut active: HashMap<String, bool> = HashMap::new();
    for m in messages(&text) {
        let is_active = active.entry(m.user_id.clone()).or_insert(false);
        match m.as_text() {
            Some(WELCOME) => *is_active = true,
            Some(FAREWELL) => *is_active = false,
            Some(PROMPT_START) => {}
            _ => assert!(*is_active, "{m:?} sent to an inactive session"),
        }
    }
}
