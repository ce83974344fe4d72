use serde_json::{Map, Value};

pub const REFERENCE_JSON: &str = include_str!("../../data/reference_values.json");

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceCell {
    pub coords: Map<String, Value>,
    pub value: f64,
}

fn document() -> Value {
    serde_json::from_str(REFERENCE_JSON).expect("embedded reference file is valid JSON")
}

/// Cells of a reference set: `"1"`…`"4"` for the tables, or `"beta_crit"` and
/// `"external_beta_crit"`. Unknown names give an empty list.
pub fn reference_cells(set: &str) -> Vec<ReferenceCell> {
    let doc = document();
    let node = match set {
        "beta_crit" | "external_beta_crit" => &doc[set],
        table => &doc["tables"][table],
    };
    node["cells"]
        .as_array()
        .map(|cells| {
            cells
                .iter()
                .map(|c| ReferenceCell {
                    coords: c["coords"].as_object().cloned().unwrap_or_default(),
                    value: c["value"].as_f64().expect("numeric reference value"),
                })
                .collect()
        })
        .unwrap_or_default()
}

/// External value for `(θ, d, u)`, if one is embedded.
pub(crate) fn external_beta_crit(theta: u32, d: usize, u: f64) -> Option<f64> {
    let doc = document();
    let ext = &doc["external_beta_crit"];
    if ext["theta"].as_u64() != Some(theta as u64) || ext["d"].as_u64() != Some(d as u64) {
        return None;
    }
    reference_cells("external_beta_crit")
        .into_iter()
        .find(|c| c.coords.get("u").and_then(Value::as_f64) == Some(u))
        .map(|c| c.value)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_sizes() {
        assert_eq!(reference_cells("1").len(), 36);
        assert_eq!(reference_cells("2").len(), 4);
        assert_eq!(reference_cells("3").len(), 25);
        assert_eq!(reference_cells("4").len(), 10);
        assert!(reference_cells("9").is_empty());
    }

    #[test]
    fn external_lookup() {
        assert_eq!(external_beta_crit(2, 3, 0.5), Some(0.313));
        assert_eq!(external_beta_crit(2, 3, 0.0), Some(0.346));
        assert_eq!(external_beta_crit(3, 3, 0.5), None);
    }
}
