use std::io::Write;

use serde::Serialize;

use super::scenarios::DemandScenarioSet;
use crate::error::{Error, Result};

#[derive(Serialize)]
struct AnnualRow<'a> {
    node_id: &'a str,
    scenario: &'a str,
    year: i32,
    point: f64,
    lo95: f64,
    hi95: f64,
}

/// Annual rollups of every node and scenario as CSV
/// (node_id, scenario, year, point, lo95, hi95).
pub fn write_annual_csv<W: Write>(set: &DemandScenarioSet, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for (s, f) in &set.scenarios {
        for (node, nf) in &f.nodes {
            for a in &nf.annual {
                w.serialize(AnnualRow {
                    node_id: node,
                    scenario: s.code(),
                    year: a.year,
                    point: a.point,
                    lo95: a.lo95,
                    hi95: a.hi95,
                })?;
            }
        }
    }
    w.flush().map_err(|e| Error::io("<annual csv>", e))?;
    Ok(())
}
