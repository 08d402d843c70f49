//! Native JSON case schema, mirroring [`Network`] one-to-one.
//!
//! All quantities are per-unit and angles are in radians, exactly as held in
//! memory; `parse_case` on the emitted text reproduces the network bit-exactly.

use super::{CaseError, Network};

/// Serialize a network to the native JSON case format.
pub fn serialize_case(network: &Network) -> String {
    serde_json::to_string_pretty(network).expect("network serializes")
}

pub(super) fn parse_json_case(text: &str) -> Result<Network, CaseError> {
    serde_json::from_str(text).map_err(|e| CaseError::Json(e.to_string()))
}
