#![allow(dead_code)]

use kbdialog_core::corpus::{normalize, Dialogue, RawDialogue};
use kbdialog_core::training::TrainConfig;

/// The eight-row navigation KB with its gas-station dialogue.
pub fn gas_station_dialogue() -> Dialogue {
    let rows = [
        ["638 Amherst St", "3 miles", "grocery store", "Sigona Farmers Market", "car collision nearby"],
        ["269 Alger Dr", "1 miles", "coffee or tea place", "Cafe Venetia", "car collision nearby"],
        ["5672 barringer street", "5 miles", "certain address", "5672 barringer street", "no traffic"],
        ["200 Alester Ave", "2 miles", "gas station", "Valero", "road block nearby"],
        ["899 Ames Ct", "5 miles", "hospital", "Stanford Childrens Health", "moderate traffic"],
        ["481 Amaranta Ave", "1 miles", "parking garage", "Palo Alto Garage R", "moderate traffic"],
        ["145 Amherst St", "1 miles", "coffee or tea place", "Teavana", "road block nearby"],
        ["409 Bollard St", "5 miles", "grocery store", "Willows Market", "no traffic"],
    ];
    let raw = RawDialogue {
        domain: "navigate".into(),
        columns: ["Address", "Distance", "POI type", "POI", "Traffic info"]
            .iter()
            .map(|s| s.to_string())
            .collect(),
        rows: rows.iter().map(|r| r.iter().map(|s| s.to_string()).collect()).collect(),
        turns: vec![
            (
                "Address to the gas station.".into(),
                "Valero is located at 200 Alester Ave.".into(),
            ),
            (
                "OK , please give me directions via a route that avoids all heavy traffic.".into(),
                "Since there is a road block nearby, I found another route for you and I sent it on your screen.".into(),
            ),
        ],
    };
    normalize(vec![raw], "fixture").unwrap().remove(0)
}

/// Small, dropout-free settings that overfit toy corpora quickly.
pub fn toy_config(epochs: usize) -> TrainConfig {
    TrainConfig {
        emb_dim: 16,
        hidden_dim: 16,
        dropout: 0.0,
        lr: 0.01,
        epochs,
        ..TrainConfig::default()
    }
}
