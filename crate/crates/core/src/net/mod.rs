//! Network data model: buses, branches, generators, and case-file ingestion.
//!
//! A [`Network`] is an immutable description of a transmission grid. Buses are
//! re-indexed to `0..N-1` at ingestion and branch orientation is taken from
//! the case file's from/to columns and never changed afterwards; every signed
//! quantity downstream (incidence rows, cycle indicators, flow signs) depends
//! on that orientation.

mod graph;
mod json;
mod matpower;

pub use graph::{CycleBasis, IncidenceMatrix};

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// AC power-flow role of a bus.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BusKind {
    Slack,
    Pv,
    Pq,
}

/// A bus with its nominal demand. Powers are per unit on the system base.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Bus {
    pub id: usize,
    pub kind: BusKind,
    pub p_demand: f64,
    pub q_demand: f64,
    /// Voltage magnitude setpoint, meaningful for PV and slack buses.
    pub v_setpoint: f64,
}

/// A transmission line or transformer. `x_nominal` is the uncontrolled
/// series reactance; `f_rating` the active-power flow limit, both per unit.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Branch {
    pub from: usize,
    pub to: usize,
    pub r: f64,
    pub x_nominal: f64,
    pub b_charging: f64,
    pub tap: f64,
    pub f_rating: f64,
}

/// A dispatchable generator. `cost_quadratic` is the diagonal entry of the
/// quadratic dispatch cost, in cost units per (p.u.)^2.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Generator {
    pub bus: usize,
    pub p_min: f64,
    pub p_max: f64,
    pub cost_quadratic: f64,
    /// Active-power output in the case's stored operating point, p.u.
    pub p_nominal: f64,
}

/// Options controlling case ingestion.
#[derive(Clone, Debug)]
pub struct LoadOptions {
    /// Branches with a zero (= unlimited) rating are mapped to this cap, p.u.
    pub unlimited_rating_cap: f64,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions {
            unlimited_rating_cap: 99.0,
        }
    }
}

/// An immutable network: buses, directed branches, and generators.
///
/// Invariants enforced at construction: the underlying undirected graph is
/// connected, there is exactly one slack bus, bus ids are contiguous, and all
/// branch parameters are in range.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Network {
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    pub generators: Vec<Generator>,
    pub base_mva: f64,
}

impl Network {
    /// Validates all structural invariants and returns the network.
    pub fn new(
        buses: Vec<Bus>,
        branches: Vec<Branch>,
        generators: Vec<Generator>,
        base_mva: f64,
    ) -> Result<Self> {
        let net = Network {
            buses,
            branches,
            generators,
            base_mva,
        };
        net.validate()?;
        Ok(net)
    }

    pub fn n_buses(&self) -> usize {
        self.buses.len()
    }

    pub fn n_branches(&self) -> usize {
        self.branches.len()
    }

    pub fn n_generators(&self) -> usize {
        self.generators.len()
    }

    /// Number of independent cycles, `C = E - N + 1`.
    pub fn n_cycles(&self) -> usize {
        self.n_branches() + 1 - self.n_buses()
    }

    /// Index of the unique slack bus.
    pub fn slack(&self) -> usize {
        self.buses
            .iter()
            .position(|b| b.kind == BusKind::Slack)
            .expect("validated network has a slack bus")
    }

    /// Nominal branch reactances, in branch order.
    pub fn x_nominal(&self) -> Vec<f64> {
        self.branches.iter().map(|b| b.x_nominal).collect()
    }

    /// Branch flow ratings, in branch order.
    pub fn ratings(&self) -> Vec<f64> {
        self.branches.iter().map(|b| b.f_rating).collect()
    }

    /// Nominal active and reactive bus demand vectors, p.u.
    pub fn nominal_demand(&self) -> (Vec<f64>, Vec<f64>) {
        let p = self.buses.iter().map(|b| b.p_demand).collect();
        let q = self.buses.iter().map(|b| b.q_demand).collect();
        (p, q)
    }

    /// Net bus injections for a per-generator dispatch and a bus demand
    /// vector: `p[k] = sum of p_gen at k - p_demand[k]`.
    pub fn injections(&self, p_gen: &[f64], p_demand: &[f64]) -> Vec<f64> {
        assert_eq!(p_gen.len(), self.generators.len());
        assert_eq!(p_demand.len(), self.n_buses());
        let mut p: Vec<f64> = p_demand.iter().map(|d| -d).collect();
        for (g, pg) in self.generators.iter().zip(p_gen) {
            p[g.bus] += pg;
        }
        p
    }

    /// Loads a case from a MATPOWER `.m` file or the native `.json` format,
    /// decided by extension (anything other than `.json` is treated as
    /// MATPOWER text).
    pub fn load_case<P: AsRef<Path>>(path: P) -> Result<Network> {
        Self::load_case_with(path, &LoadOptions::default())
    }

    pub fn load_case_with<P: AsRef<Path>>(path: P, opts: &LoadOptions) -> Result<Network> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let is_json = path
            .extension()
            .map(|e| e.eq_ignore_ascii_case("json"))
            .unwrap_or(false);
        if is_json {
            json::parse(&text, &path.display().to_string(), opts)
        } else {
            matpower::parse(&text, &path.display().to_string(), opts)
        }
    }

    /// Signed edge-node incidence matrix of the branch list.
    pub fn incidence(&self) -> IncidenceMatrix {
        IncidenceMatrix::from_network(self)
    }

    /// Fundamental cycle basis of a BFS spanning tree rooted at the slack
    /// bus, neighbors visited in bus-index order.
    pub fn cycle_basis(&self) -> CycleBasis {
        CycleBasis::from_network(self)
    }

    /// Indices of bridge branches: edges whose removal disconnects the graph.
    pub fn find_bridges(&self) -> Vec<usize> {
        graph::find_bridges(self)
    }

    /// True iff the network is a tree (`E = N - 1`).
    pub fn is_radial(&self) -> bool {
        self.n_branches() == self.n_buses() - 1
    }

    fn validate(&self) -> Result<()> {
        let n = self.n_buses();
        if n == 0 {
            return Err(Error::InvalidNetwork("no buses".into()));
        }
        for (i, b) in self.buses.iter().enumerate() {
            if b.id != i {
                return Err(Error::InvalidNetwork(format!(
                    "bus ids must be contiguous 0..N-1; position {i} holds id {}",
                    b.id
                )));
            }
        }
        let slacks: Vec<usize> = self
            .buses
            .iter()
            .filter(|b| b.kind == BusKind::Slack)
            .map(|b| b.id)
            .collect();
        match slacks.len() {
            0 => return Err(Error::NoSlack),
            1 => {}
            _ => return Err(Error::MultipleSlack(slacks)),
        }
        for (e, br) in self.branches.iter().enumerate() {
            if br.from >= n || br.to >= n {
                return Err(Error::InvalidNetwork(format!(
                    "branch {e} references bus {} outside 0..{n}",
                    br.from.max(br.to)
                )));
            }
            if br.from == br.to {
                return Err(Error::InvalidNetwork(format!(
                    "branch {e} is a self-loop at bus {}",
                    br.from
                )));
            }
            if !(br.x_nominal > 0.0) {
                return Err(Error::InvalidNetwork(format!(
                    "branch {e} has non-positive reactance {}",
                    br.x_nominal
                )));
            }
            if !(br.f_rating > 0.0) {
                return Err(Error::InvalidNetwork(format!(
                    "branch {e} has non-positive rating {}",
                    br.f_rating
                )));
            }
            if !(br.tap > 0.0) {
                return Err(Error::InvalidNetwork(format!(
                    "branch {e} has non-positive tap ratio {}",
                    br.tap
                )));
            }
        }
        for (i, g) in self.generators.iter().enumerate() {
            if g.bus >= n {
                return Err(Error::InvalidNetwork(format!(
                    "generator {i} references bus {} outside 0..{n}",
                    g.bus
                )));
            }
            if g.p_min > g.p_max {
                return Err(Error::InvalidNetwork(format!(
                    "generator {i} has p_min {} > p_max {}",
                    g.p_min, g.p_max
                )));
            }
            if g.cost_quadratic < 0.0 {
                return Err(Error::InvalidNetwork(format!(
                    "generator {i} has negative quadratic cost",
                )));
            }
        }
        let components = graph::component_count(n, &self.branches, None);
        if components != 1 {
            return Err(Error::Disconnected { components });
        }
        Ok(())
    }
}
