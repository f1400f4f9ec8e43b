use serde_json::Value;

use dfpsim_web::{assignment_json, reconstruct_probs, simulate_json};

const SMALL: &str = r#"{"protocol": "vl1", "n_agents": 5, "t_final": 300, "replications": 3, "seed": 4, "record_every": 10}"#;

#[test]
fn simulate_returns_rows() {
    let out: Value = serde_json::from_str(&simulate_json(SMALL).unwrap()).unwrap();
    let rows = out["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 30);
    assert_eq!(rows[29]["step"], 300);
    assert!(out["attempts"].as_u64().unwrap() >= out["successes"].as_u64().unwrap());
    assert_eq!(simulate_json(SMALL).unwrap(), simulate_json(SMALL).unwrap());
}

#[test]
fn assignment_has_positions_and_profile() {
    let out: Value = serde_json::from_str(&assignment_json(SMALL).unwrap()).unwrap();
    assert_eq!(out["agents"].as_array().unwrap().len(), 5);
    assert_eq!(out["targets"].as_array().unwrap().len(), 5);
    let profile = out["profile"].as_array().unwrap();
    assert!(profile.iter().all(|k| k.as_u64().unwrap() < 5));
}

#[test]
fn bad_configs_are_reported() {
    assert!(simulate_json("{\"rho\": 2.0}").is_err());
    assert!(simulate_json("{\"bogus\": 1}").is_err());
    assert!(simulate_json(r#"{"game_file": "x.toml"}"#).is_err());
    assert!(simulate_json(r#"{"n_agents": 40, "t_final": 100000, "replications": 100}"#)
        .unwrap_err()
        .contains("demo limit"));
}

#[test]
fn reconstruction_widget() {
    let p = reconstruct_probs(0.6, 1, 5, "uniform_remainder").unwrap();
    assert_eq!(p.len(), 5);
    assert!((p[1] - 0.6).abs() < 1e-15);
    assert!((p[0] - 0.1).abs() < 1e-15);
    assert_eq!(reconstruct_probs(0.6, 1, 3, "full_support").unwrap(), vec![0.0, 1.0, 0.0]);
    assert!(reconstruct_probs(0.1, 0, 5, "full_support").is_err());
    assert!(reconstruct_probs(0.6, 0, 5, "nearest").is_err());
}
