//! Small seeded navigation-style corpora for smoke tests, benchmarks and
//! overfitting checks.

use rand::seq::SliceRandom;
use rand::Rng;

use super::formats::{normalize, RawDialogue};
use super::Dialogue;
use crate::numeric::seeded_rng;

const PLACES: &[(&str, &[&str])] = &[
    ("gas station", &["Valero", "Chevron", "Shell", "Mobil"]),
    ("coffee or tea place", &["Teavana", "Cafe Venetia", "Peets Coffee", "Coupa"]),
    ("grocery store", &["Sigona Farmers Market", "Willows Market", "Safeway", "Whole Foods"]),
    ("hospital", &["Stanford Childrens Health", "Palo Alto Medical", "El Camino Hospital", "Valley Medical"]),
    ("parking garage", &["Palo Alto Garage R", "Civic Center Garage", "Dish Parking", "Webster Garage"]),
    ("rest stop", &["Rest Area Nine", "Vista Point", "Oak Rest Stop", "Hillside Rest"]),
    ("chinese restaurant", &["Panda Express", "Mandarin Roots", "Tai Pan", "Jing Jing"]),
    ("shopping center", &["Stanford Shopping Center", "Town And Country", "Midtown Mall", "Ravenswood Plaza"]),
];

const STREETS: &[&str] = &[
    "Alester Ave", "Amherst St", "Alger Dr", "Ames Ct", "Amaranta Ave", "Bollard St", "Barringer Street",
    "Arastradero Rd", "Cowper St", "Hawthorne Ave", "Elm St", "Oak Rd", "Maple Way", "Pine Ct",
];

const DISTANCES: &[&str] = &["1 miles", "2 miles", "3 miles", "4 miles", "5 miles", "6 miles"];
const TRAFFIC: &[&str] = &["no traffic", "moderate traffic", "heavy traffic", "road block nearby", "car collision nearby"];

/// Column names of every synthetic KB.
pub const COLUMNS: &[&str] = &["poi", "poi type", "address", "distance", "traffic info"];

/// `dialogues` two-turn navigation dialogues over `rows`-row KBs (at most
/// 8). Each dialogue is about one row; that row's cells are the only ones
/// that can match all five columns, so its weak label is unambiguous.
pub fn navigation_corpus(dialogues: usize, rows: usize, seed: u64) -> Vec<Dialogue> {
    assert!((1..=PLACES.len()).contains(&rows), "rows must be in 1..={}", PLACES.len());
    let mut rng = seeded_rng(seed);
    let mut raw = Vec::with_capacity(dialogues);
    for _ in 0..dialogues {
        let mut types: Vec<usize> = (0..PLACES.len()).collect();
        types.shuffle(&mut rng);
        let mut streets: Vec<&str> = STREETS.to_vec();
        streets.shuffle(&mut rng);
        let kb_rows: Vec<Vec<String>> = types[..rows]
            .iter()
            .zip(&streets)
            .map(|(&t, street)| {
                let (kind, names) = PLACES[t];
                vec![
                    names[rng.gen_range(0..names.len())].to_string(),
                    kind.to_string(),
                    format!("{} {}", rng.gen_range(100..999), street),
                    DISTANCES[rng.gen_range(0..DISTANCES.len())].to_string(),
                    TRAFFIC[rng.gen_range(0..TRAFFIC.len())].to_string(),
                ]
            })
            .collect();
        let target = &kb_rows[rng.gen_range(0..rows)];
        let (poi, kind, address, distance, traffic) = (&target[0], &target[1], &target[2], &target[3], &target[4]);
        let turns = vec![
            (
                format!("where is the nearest {kind}"),
                format!("{poi} is located at {address} ."),
            ),
            (
                "how far is it and how is the traffic".to_string(),
                format!("{poi} is {distance} away with {traffic} ."),
            ),
        ];
        raw.push(RawDialogue {
            domain: "navigate".to_string(),
            columns: COLUMNS.iter().map(|s| s.to_string()).collect(),
            rows: kb_rows,
            turns,
        });
    }
    normalize(raw, "synthetic").expect("synthetic corpus is well formed")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_well_formed() {
        let a = navigation_corpus(5, 5, 7);
        assert_eq!(a, navigation_corpus(5, 5, 7));
        assert_ne!(a, navigation_corpus(5, 5, 8));
        for d in &a {
            assert_eq!((d.kb.num_rows(), d.kb.num_cols()), (5, 5));
            assert_eq!(d.turns.len(), 2);
            assert!(d.turns.iter().all(|t| t.gold_entities.len() >= 2));
        }
    }
}
