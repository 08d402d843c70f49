//! Grid data model: buses, generators, branches, and the nodal admittance matrix.
//!
//! Case files (a MATPOWER text subset or the native JSON schema) are parsed into
//! a validated [`Network`] with all quantities converted to per-unit on the
//! system MVA base and bus numbering remapped to contiguous internal indices.
//! [`build_ybus`] assembles the dense complex Y-bus every other module consumes.

mod json;
mod matpower;

pub use json::serialize_case;

use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

use crate::powerflow::DemandVector;

/// Default phase-angle box when a case file carries no per-bus angle limits.
pub const DEFAULT_ANGLE_BOUND: f64 = PI / 2.0;

#[derive(Debug, Error)]
pub enum CaseError {
    #[error("syntax error at line {line}, column {col}: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("semantic error: {0}")]
    Semantic(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("json error: {0}")]
    Json(String),
}

/// Bus role in the conventional PV/PQ/slack partition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BusKind {
    Load,
    Generator,
    Reference,
}

/// A single bus. Internal `id` is the 0-based contiguous index; `ext_id`
/// retains the original case-file numbering for output.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Bus {
    pub id: usize,
    pub ext_id: usize,
    pub kind: BusKind,
    /// Nominal active demand, per-unit.
    pub p_demand_nominal: f64,
    /// Nominal reactive demand, per-unit.
    pub q_demand_nominal: f64,
    pub v_min: f64,
    pub v_max: f64,
    /// Phase-angle bounds, radians.
    pub ang_min: f64,
    pub ang_max: f64,
    /// Shunt admittance, per-unit.
    pub shunt_g: f64,
    pub shunt_b: f64,
    pub base_kv: f64,
    /// Stored operating-point voltage magnitude from the case file, per-unit.
    pub vm_operating: f64,
    /// Stored operating-point angle, radians.
    pub va_operating: f64,
}

/// A dispatchable unit. At most one per bus: parallel machines in a source
/// file are aggregated at parse time.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Generator {
    /// Internal index of the host bus.
    pub bus: usize,
    pub p_min: f64,
    pub p_max: f64,
    pub q_min: f64,
    pub q_max: f64,
    /// Quadratic cost coefficients in $/hr against MW dispatch.
    pub cost_c2: f64,
    pub cost_c1: f64,
    pub cost_c0: f64,
    /// Case-file operating point, per-unit.
    pub pg_setpoint: f64,
    pub qg_setpoint: f64,
    /// Voltage magnitude setpoint, per-unit.
    pub vg_setpoint: f64,
}

/// A pi-model branch, possibly with an off-nominal tap and phase shift.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Branch {
    pub from_bus: usize,
    pub to_bus: usize,
    /// Series impedance, per-unit.
    pub r: f64,
    pub x: f64,
    /// Total line-charging susceptance, per-unit.
    pub b_charging: f64,
    /// Off-nominal turns ratio; 1.0 when none.
    pub tap: f64,
    /// Phase shift, radians.
    pub shift: f64,
    /// Apparent-power rating, per-unit; 0 means unlimited.
    pub s_max: f64,
}

/// The static grid description every other module consumes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Network {
    pub name: String,
    pub base_mva: f64,
    pub buses: Vec<Bus>,
    pub generators: Vec<Generator>,
    pub branches: Vec<Branch>,
}

impl Network {
    pub fn n(&self) -> usize {
        self.buses.len()
    }

    /// Internal index of the reference bus.
    pub fn reference_bus(&self) -> usize {
        self.buses
            .iter()
            .position(|b| b.kind == BusKind::Reference)
            .expect("validated network has a reference bus")
    }

    /// Generator index hosted at internal bus `i`, if any.
    pub fn generator_at(&self, i: usize) -> Option<usize> {
        self.generators.iter().position(|g| g.bus == i)
    }

    pub fn is_generator_bus(&self, i: usize) -> bool {
        self.buses[i].kind != BusKind::Load
    }

    /// Internal indices of buses hosting a generator, ascending.
    pub fn generator_buses(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.generators.iter().map(|g| g.bus).collect();
        v.sort_unstable();
        v
    }

    /// Internal indices of load buses, ascending.
    pub fn load_buses(&self) -> Vec<usize> {
        (0..self.n()).filter(|&i| !self.is_generator_bus(i)).collect()
    }

    /// Structural validation; every parsed network passes through here.
    pub fn validate(&self) -> Result<(), CaseError> {
        let n = self.n();
        if n < 2 {
            return Err(CaseError::Semantic(format!("need at least 2 buses, found {n}")));
        }
        if self.base_mva <= 0.0 {
            return Err(CaseError::Semantic("base_mva must be positive".into()));
        }
        let mut ext_seen = std::collections::HashSet::new();
        for (i, b) in self.buses.iter().enumerate() {
            if b.id != i {
                return Err(CaseError::Semantic(format!(
                    "bus internal id {} does not match position {i}",
                    b.id
                )));
            }
            if !ext_seen.insert(b.ext_id) {
                return Err(CaseError::Semantic(format!("duplicate bus id {}", b.ext_id)));
            }
            if !(b.v_min > 0.0) {
                return Err(CaseError::Semantic(format!("bus {}: v_min must be > 0", b.ext_id)));
            }
            if b.v_min > b.v_max {
                return Err(CaseError::Semantic(format!("bus {}: v_min > v_max", b.ext_id)));
            }
            if b.ang_min > b.ang_max {
                return Err(CaseError::Semantic(format!("bus {}: ang_min > ang_max", b.ext_id)));
            }
        }
        let refs: Vec<_> = self.buses.iter().filter(|b| b.kind == BusKind::Reference).collect();
        if refs.len() != 1 {
            return Err(CaseError::Semantic(format!(
                "exactly one reference bus required, found {}",
                refs.len()
            )));
        }
        let mut gen_buses = std::collections::HashSet::new();
        for g in &self.generators {
            if g.bus >= n {
                return Err(CaseError::Semantic(format!("generator references bus index {}", g.bus)));
            }
            if !gen_buses.insert(g.bus) {
                return Err(CaseError::Semantic(format!(
                    "more than one generator at bus {}",
                    self.buses[g.bus].ext_id
                )));
            }
            if g.p_min > g.p_max || g.q_min > g.q_max {
                return Err(CaseError::Semantic(format!(
                    "generator at bus {}: inverted dispatch bounds",
                    self.buses[g.bus].ext_id
                )));
            }
            if g.cost_c2 < 0.0 {
                return Err(CaseError::Semantic(format!(
                    "generator at bus {}: cost_c2 must be nonnegative",
                    self.buses[g.bus].ext_id
                )));
            }
        }
        for b in &self.buses {
            let has_gen = gen_buses.contains(&b.id);
            match b.kind {
                BusKind::Load if has_gen => {
                    return Err(CaseError::Semantic(format!(
                        "bus {} is marked load but hosts a generator",
                        b.ext_id
                    )))
                }
                BusKind::Generator | BusKind::Reference if !has_gen => {
                    return Err(CaseError::Semantic(format!(
                        "bus {} is marked {:?} but hosts no generator",
                        b.ext_id, b.kind
                    )))
                }
                _ => {}
            }
        }
        for (k, br) in self.branches.iter().enumerate() {
            if br.from_bus >= n || br.to_bus >= n {
                return Err(CaseError::Semantic(format!("branch {k} references a missing bus")));
            }
            if br.from_bus == br.to_bus {
                return Err(CaseError::Semantic(format!(
                    "branch {k} connects bus {} to itself",
                    self.buses[br.from_bus].ext_id
                )));
            }
            if br.r == 0.0 && br.x == 0.0 {
                return Err(CaseError::Semantic(format!("branch {k} has zero impedance")));
            }
            if !(br.tap > 0.0) {
                return Err(CaseError::Semantic(format!("branch {k} has nonpositive tap")));
            }
        }
        Ok(())
    }
}

/// Dense complex nodal admittance matrix.
#[derive(Debug, Clone)]
pub struct AdmittanceMatrix {
    pub n: usize,
    entries: Array2<Complex64>,
}

impl AdmittanceMatrix {
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.entries[(i, j)]
    }

    pub fn row(&self, i: usize) -> ndarray::ArrayView1<'_, Complex64> {
        self.entries.row(i)
    }

    pub fn entries(&self) -> &Array2<Complex64> {
        &self.entries
    }

    /// Matrix-vector product `Y v`.
    pub fn mul_vec(&self, v: &[Complex64]) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); self.n];
        for i in 0..self.n {
            let mut acc = Complex64::new(0.0, 0.0);
            let row = self.entries.row(i);
            for j in 0..self.n {
                acc += row[j] * v[j];
            }
            out[i] = acc;
        }
        out
    }

    /// Transpose-vector product `Yᵀ v`.
    pub fn mul_vec_transpose(&self, v: &[Complex64]) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); self.n];
        for i in 0..self.n {
            let vi = v[i];
            let row = self.entries.row(i);
            for j in 0..self.n {
                out[j] += row[j] * vi;
            }
        }
        out
    }
}

/// Assemble the nodal admittance matrix from branch and shunt data.
///
/// For a branch with series admittance `y = 1/(r + jx)`, charging `b`, tap `t`
/// and shift `θ`: the from-bus diagonal gains `y/t² + jb/2`, the to-bus
/// diagonal `y + jb/2`, entry (from, to) `−y/(t·e^{−jθ})` and entry (to, from)
/// `−y/(t·e^{jθ})`. Bus shunts `g + jb` add to the diagonals. Entries with no
/// connection stay exactly zero.
pub fn build_ybus(network: &Network) -> AdmittanceMatrix {
    let n = network.n();
    let mut y = Array2::from_elem((n, n), Complex64::new(0.0, 0.0));
    for br in &network.branches {
        let (f, t) = (br.from_bus, br.to_bus);
        let ys = Complex64::new(1.0, 0.0) / Complex64::new(br.r, br.x);
        let half_charge = Complex64::new(0.0, br.b_charging / 2.0);
        let tap = br.tap;
        let shift = Complex64::from_polar(1.0, br.shift);
        y[(f, f)] += ys / (tap * tap) + half_charge;
        y[(t, t)] += ys + half_charge;
        y[(f, t)] += -ys / (tap * shift.conj());
        y[(t, f)] += -ys / (tap * shift);
    }
    for b in &network.buses {
        y[(b.id, b.id)] += Complex64::new(b.shunt_g, b.shunt_b);
    }
    AdmittanceMatrix { n, entries: y }
}

/// Per-bus nominal demand exactly as stored in the case.
pub fn nominal_demand(network: &Network) -> DemandVector {
    DemandVector {
        pd: network.buses.iter().map(|b| b.p_demand_nominal).collect(),
        qd: network.buses.iter().map(|b| b.q_demand_nominal).collect(),
    }
}

/// Parse a case file (MATPOWER text subset or the native JSON schema) into a
/// validated [`Network`].
pub fn parse_case(text: &str) -> Result<Network, CaseError> {
    let trimmed = text.trim_start();
    let net = if trimmed.starts_with('{') {
        json::parse_json_case(text)?
    } else {
        matpower::parse_matpower(text)?
    };
    net.validate()?;
    Ok(net)
}

/// Parse a case from a file path, with the network name taken from the stem.
pub fn parse_case_file(path: &std::path::Path) -> Result<Network, CaseError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CaseError::Semantic(format!("cannot read {}: {e}", path.display())))?;
    let mut net = parse_case(&text)?;
    if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
        net.name = stem.to_string();
    }
    Ok(net)
}
