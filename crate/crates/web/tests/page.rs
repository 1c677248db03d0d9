//! The demo page only calls what the crate exports, with inputs shaped the
//! way the page builds them.

use serde_json::{json, Value};
use spanlab_web::{evaluate_json, parse_json, step_json};

const PAGE: &str = include_str!("../www/index.html");
const LIB: &str = include_str!("../src/lib.rs");

#[test]
fn page_imports_exported_functions() {
    let import = PAGE
        .lines()
        .find(|l| l.starts_with("import init"))
        .expect("module import");
    assert!(import.contains("\"./pkg/spanlab_web.js\""));
    for name in ["evaluate", "parse", "step"] {
        assert!(import.contains(name), "{name}");
        assert!(LIB.contains(&format!("#[wasm_bindgen]\npub fn {name}(")), "{name}");
    }
}

#[test]
fn default_inputs_round_trip() {
    let out: Value = serde_json::from_str(
        &step_json(
            &json!({
                "text": "He went to Saint - Gaudens yesterday .",
                "categories": ["LOC", "PER"],
                "schema": "plain",
                "prefix": "[{\"text\": \"Saint-Gaudens\", \"label\": \"LOC\"}]",
            })
            .to_string(),
        )
        .unwrap(),
    )
    .unwrap();
    assert_eq!(out["refused_at"], 16);

    let out: Value = serde_json::from_str(
        &parse_json(
            &json!({
                "strategy": "match",
                "text": "Turing was born in London.",
                "categories": ["PER", "LOC"],
                "output": "[{\"text\": \"Turing\", \"label\": \"PER\"}, {\"text\": \"Londres\", \"label\": \"LOC\"}]",
            })
            .to_string(),
        )
        .unwrap(),
    )
    .unwrap();
    assert_eq!(out["spans"].as_array().unwrap().len(), 1);
    assert_eq!(out["span_content_errors"], 1);

    let out: Value = serde_json::from_str(
        &evaluate_json(
            &json!({
                "gold": [{"start": 0, "end": 10, "label": "A"}],
                "pred": [{"start": 0, "end": 5, "label": "A"}, {"start": 5, "end": 15, "label": "B"}],
            })
            .to_string(),
        )
        .unwrap(),
    )
    .unwrap();
    assert_eq!(out["soft"]["recall"], 1.0);
}
