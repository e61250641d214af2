//! Known differences between the built networks and the reference layer
//! tables, shipped as a tab-separated file.

use super::spec::Topology;
use crate::error::{Error, Result};

const LEDGER: &str = include_str!("../../data/table_deviations.tsv");

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Column {
    Params,
    Output,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Deviation {
    pub topology: Topology,
    pub layer: String,
    pub column: Column,
    pub table: String,
    pub computed: String,
    pub reason: String,
}

/// The shipped ledger.
pub fn deviations() -> Vec<Deviation> {
    parse_ledger(LEDGER).expect("shipped ledger parses")
}

/// Raw text of the shipped ledger.
pub fn ledger_text() -> &'static str {
    LEDGER
}

pub fn parse_ledger(text: &str) -> Result<Vec<Deviation>> {
    let mut out = Vec::new();
    let mut header_seen = false;
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if !header_seen {
            header_seen = true;
            if fields.first() == Some(&"network") {
                continue;
            }
        }
        let bad = |why: String| Error::line(i + 1, why);
        let [net, layer, column, table, computed, reason] = fields[..] else {
            return Err(bad(format!("expected 6 tab-separated fields, got {}", fields.len())));
        };
        let column = match column {
            "params" => Column::Params,
            "output" => Column::Output,
            other => return Err(bad(format!("unknown column {other:?}"))),
        };
        out.push(Deviation {
            topology: Topology::parse(net).map_err(|e| bad(e.to_string()))?,
            layer: layer.to_string(),
            column,
            table: table.to_string(),
            computed: computed.to_string(),
            reason: reason.to_string(),
        });
    }
    Ok(out)
}

pub fn is_listed(topology: Topology, layer: &str, column: Column) -> bool {
    deviations().iter().any(|d| d.topology == topology && d.layer == layer && d.column == column)
}

/// Whether `value` rounds to a printed count such as `"832"`, `"9.2K"` or
/// `"590K"`: it must lie within half a unit of the last printed digit.
pub fn within_printed_rounding(printed: &str, value: usize) -> Result<bool> {
    let printed = printed.trim();
    let (digits, scale) = match printed.strip_suffix(['K', 'k']) {
        Some(d) => (d, 1000.0),
        None => (printed, 1.0),
    };
    let figure: f64 = digits.parse().map_err(|_| Error::Input(format!("unreadable parameter count {printed:?}")))?;
    let decimals = digits.split_once('.').map_or(0, |(_, frac)| frac.len());
    let half_unit = 0.5 * 10f64.powi(-(decimals as i32));
    Ok((value as f64 / scale - figure).abs() <= half_unit + 1e-9)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_ledger_parses() {
        let rows = deviations();
        assert!(rows.len() >= 7);
        assert!(is_listed(Topology::Vgg, "Conv2D-1-1", Column::Params));
        assert!(!is_listed(Topology::Vgg, "Conv2D-2-2", Column::Params));
    }

    #[test]
    fn rounding_rule() {
        assert!(within_printed_rounding("9.2K", 9248).unwrap());
        assert!(!within_printed_rounding("9.2K", 9251).unwrap());
        assert!(within_printed_rounding("37K", 36_928).unwrap());
        assert!(within_printed_rounding("832", 832).unwrap());
        assert!(!within_printed_rounding("2560", 2570).unwrap());
        assert!(within_printed_rounding("66K", 65_792).unwrap());
        assert!(within_printed_rounding("x", 1).is_err());
    }

    #[test]
    fn malformed_rows_name_their_line() {
        let err = parse_ledger("network\tlayer\n vgg\tx\tparams\n").unwrap_err();
        assert!(matches!(err, Error::Line { line: 2, .. }), "{err}");
    }
}
