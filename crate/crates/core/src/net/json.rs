//! Parser for the native JSON case format.
//!
//! The format mirrors [`Network`] directly, with short field names and
//! per-unit quantities throughout:
//!
//! ```json
//! {
//!   "base_mva": 100.0,
//!   "buses": [{ "id": 0, "kind": "slack", "pd": 0.0, "qd": 0.0, "vset": 1.0 }],
//!   "branches": [{ "from": 0, "to": 1, "r": 0.01, "x": 0.1, "b": 0.0, "tap": 1.0, "rate": 1.5 }],
//!   "generators": [{ "bus": 0, "pmin": 0.0, "pmax": 2.0, "c2": 100.0, "pg": 0.0 }]
//! }
//! ```
//!
//! Omitted optional fields default to `r = b = pd = qd = pg = 0`,
//! `tap = vset = 1`, and an effectively unlimited rating.

use serde::Deserialize;

use super::{Branch, Bus, BusKind, Generator, LoadOptions, Network};
use crate::error::{Error, Result};

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCase {
    base_mva: f64,
    buses: Vec<RawBus>,
    branches: Vec<RawBranch>,
    #[serde(default)]
    generators: Vec<RawGenerator>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBus {
    id: usize,
    kind: BusKind,
    #[serde(default)]
    pd: f64,
    #[serde(default)]
    qd: f64,
    #[serde(default = "one")]
    vset: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBranch {
    from: usize,
    to: usize,
    #[serde(default)]
    r: f64,
    x: f64,
    #[serde(default)]
    b: f64,
    #[serde(default = "one")]
    tap: f64,
    #[serde(default)]
    rate: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGenerator {
    bus: usize,
    #[serde(default)]
    pmin: f64,
    pmax: f64,
    #[serde(default)]
    c2: f64,
    #[serde(default)]
    pg: f64,
}

fn one() -> f64 {
    1.0
}

pub(crate) fn parse(text: &str, path: &str, opts: &LoadOptions) -> Result<Network> {
    let raw: RawCase = serde_json::from_str(text).map_err(|e| Error::Parse {
        path: path.to_string(),
        line: e.line(),
        msg: e.to_string(),
    })?;

    let mut buses = Vec::with_capacity(raw.buses.len());
    for (i, b) in raw.buses.iter().enumerate() {
        if b.id != i {
            return Err(Error::InvalidNetwork(format!(
                "{path}: bus ids must be contiguous from 0, position {i} has id {}",
                b.id
            )));
        }
        buses.push(Bus {
            id: b.id,
            kind: b.kind,
            p_demand: b.pd,
            q_demand: b.qd,
            v_setpoint: b.vset,
        });
    }

    let branches = raw
        .branches
        .iter()
        .map(|b| Branch {
            from: b.from,
            to: b.to,
            r: b.r,
            x_nominal: b.x,
            b_charging: b.b,
            tap: b.tap,
            f_rating: b.rate.unwrap_or(opts.unlimited_rating_cap),
        })
        .collect();

    let generators = raw
        .generators
        .iter()
        .map(|g| Generator {
            bus: g.bus,
            p_min: g.pmin,
            p_max: g.pmax,
            cost_quadratic: g.c2,
            p_nominal: g.pg,
        })
        .collect();

    Network::new(buses, branches, generators, raw.base_mva)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_triangle_fixture() {
        let text = std::fs::read_to_string(concat!(
            env!("CARGO_MANIFEST_DIR"),
            "/../../data/triangle.json"
        ))
        .unwrap();
        let net = parse(&text, "triangle.json", &LoadOptions::default()).unwrap();
        assert_eq!(net.n_buses(), 3);
        assert_eq!(net.n_branches(), 3);
        assert_eq!(net.n_cycles(), 1);
        assert_eq!(net.slack(), 0);
        assert!((net.buses[1].p_demand - 0.6).abs() < 1e-12);
        assert!((net.generators[0].p_max - 2.0).abs() < 1e-12);
    }

    #[test]
    fn missing_rate_defaults_to_cap() {
        let text = r#"{
            "base_mva": 100.0,
            "buses": [
                { "id": 0, "kind": "slack" },
                { "id": 1, "kind": "pq", "pd": 0.1 }
            ],
            "branches": [{ "from": 0, "to": 1, "x": 0.2 }],
            "generators": [{ "bus": 0, "pmax": 1.0 }]
        }"#;
        let net = parse(text, "mini.json", &LoadOptions::default()).unwrap();
        assert_eq!(net.branches[0].f_rating, 99.0);
        assert_eq!(net.branches[0].tap, 1.0);
        assert_eq!(net.branches[0].r, 0.0);
    }

    #[test]
    fn rejects_gapped_ids() {
        let text = r#"{
            "base_mva": 100.0,
            "buses": [
                { "id": 0, "kind": "slack" },
                { "id": 2, "kind": "pq" }
            ],
            "branches": [{ "from": 0, "to": 1, "x": 0.2 }]
        }"#;
        assert!(parse(text, "bad.json", &LoadOptions::default()).is_err());
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let text = r#"{
            "base_mva": 100.0,
            "buses": [{ "id": 0, "kind": "slack", "voltage": 1.0 }],
            "branches": []
        }"#;
        let err = parse(text, "bad.json", &LoadOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Parse { .. }));
    }
}
