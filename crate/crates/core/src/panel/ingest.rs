//! Mixed-frequency source ingestion into the tidy monthly panel.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::dataset::{from_cells, PanelDataset, SeriesKey};
use super::hierarchy::{GeoHierarchy, GeoLevel};
use super::variable::{Frequency, VariableId};
use crate::calendar::{Month, MonthSpan, Period};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpanDecl {
    pub start: String,
    pub end: String,
}

impl SpanDecl {
    pub fn to_span(&self) -> Result<MonthSpan> {
        MonthSpan::between(self.start.parse()?, self.end.parse()?)
    }

    pub fn from_span(span: MonthSpan) -> Self {
        Self {
            start: span.start.to_string(),
            end: span.end().to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceDecl {
    pub file: String,
    pub variable: VariableId,
    pub frequency: Frequency,
    pub level: GeoLevel,
}

/// Roster manifest mapping each source file to its variable, native
/// frequency and hierarchy level. `span` clips every source to a common
/// window; without it the intersection of all sources is used.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RosterManifest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub span: Option<SpanDecl>,
    pub sources: Vec<SourceDecl>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SourceRow {
    node_id: String,
    period: String,
    value: f64,
}

/// One source at its native frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceTable {
    pub label: String,
    pub variable: VariableId,
    pub frequency: Frequency,
    pub level: GeoLevel,
    pub rows: Vec<(String, Period, f64)>,
}

impl SourceTable {
    pub fn read_csv(path: &Path, decl: &SourceDecl) -> Result<Self> {
        let mut r = csv::Reader::from_path(path).map_err(|e| Error::parse(path, e))?;
        let mut rows = Vec::new();
        for row in r.deserialize() {
            let row: SourceRow = row.map_err(|e| Error::parse(path, e))?;
            let period: Period = row.period.parse()?;
            rows.push((row.node_id, period, row.value));
        }
        Ok(Self {
            label: decl.file.clone(),
            variable: decl.variable,
            frequency: decl.frequency,
            level: decl.level,
            rows,
        })
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::parse(path, e))?;
        for (node, period, value) in &self.rows {
            w.serialize(SourceRow {
                node_id: node.clone(),
                period: period.to_string(),
                value: *value,
            })?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

fn period_frequency(p: &Period) -> Frequency {
    match p {
        Period::Month(_) => Frequency::Monthly,
        Period::Quarter { .. } => Frequency::Quarterly,
        Period::Year(_) => Frequency::Annual,
    }
}

/// Split quarterly or annual values equally across their months.
pub fn disaggregate(frequency: Frequency, values: &[(Period, f64)]) -> Result<Vec<(Month, f64)>> {
    if frequency == Frequency::Monthly {
        return Err(Error::InvalidInput(
            "disaggregate needs QUARTERLY or ANNUAL input; MONTHLY is already monthly".into(),
        ));
    }
    let k = frequency.months_per_period();
    let mut out = Vec::with_capacity(values.len() * k);
    for (period, v) in values {
        if period_frequency(period) != frequency {
            return Err(Error::InvalidPeriod(format!("{period} is not a {frequency:?} period")));
        }
        let share = v / k as f64;
        out.extend(period.months().into_iter().map(|m| (m, share)));
    }
    Ok(out)
}

/// Merge source tables into one monthly panel.
pub fn assemble_panel(
    tables: &[SourceTable],
    hierarchy: &GeoHierarchy,
    span: Option<MonthSpan>,
) -> Result<PanelDataset> {
    let mut cells: BTreeMap<SeriesKey, BTreeMap<Month, f64>> = BTreeMap::new();
    for t in tables {
        if t.frequency != t.variable.frequency() {
            return Err(Error::InvalidInput(format!(
                "{}: {} is a {:?} variable, declared {:?}",
                t.label,
                t.variable,
                t.variable.frequency(),
                t.frequency
            )));
        }
        // group rows per node so disaggregation sees whole series
        let mut per_node: BTreeMap<&str, Vec<(Period, f64)>> = BTreeMap::new();
        for (node, period, value) in &t.rows {
            let n = hierarchy.node(node).ok_or_else(|| Error::UnknownNode {
                code: node.clone(),
                context: Some(t.label.clone()),
            })?;
            if n.level != t.level {
                return Err(Error::InvalidInput(format!(
                    "{}: node {node} is {:?}, source declares {:?}",
                    t.label, n.level, t.level
                )));
            }
            if period_frequency(period) != t.frequency {
                return Err(Error::InvalidPeriod(format!(
                    "{}: period {period} does not match {:?}",
                    t.label, t.frequency
                )));
            }
            per_node.entry(node).or_default().push((*period, *value));
        }
        for (node, values) in per_node {
            let monthly: Vec<(Month, f64)> = match t.frequency {
                Frequency::Monthly => values
                    .iter()
                    .map(|(p, v)| (p.months()[0], *v))
                    .collect(),
                f => disaggregate(f, &values)?,
            };
            let key = SeriesKey::new(node, t.variable);
            let slot = cells.entry(key).or_default();
            for (m, v) in monthly {
                if slot.insert(m, v).is_some() {
                    return Err(Error::DuplicateCell {
                        node: node.to_string(),
                        variable: t.variable.code(),
                        month: m.to_string(),
                    });
                }
            }
        }
    }
    if let Some(span) = span {
        for months in cells.values_mut() {
            months.retain(|m, _| span.contains(*m));
        }
    }
    from_cells(cells, span)
}

/// Load every source listed in the manifest; file paths resolve relative to
/// the manifest's directory.
pub fn load_panel(manifest_path: &Path, hierarchy: &GeoHierarchy) -> Result<PanelDataset> {
    let text = std::fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let manifest: RosterManifest = serde_json::from_str(&text).map_err(|e| Error::parse(manifest_path, e))?;
    let base = manifest_path.parent().map(Path::to_path_buf).unwrap_or_default();
    load_manifest(&manifest, &base, hierarchy)
}

pub fn load_manifest(manifest: &RosterManifest, base: &Path, hierarchy: &GeoHierarchy) -> Result<PanelDataset> {
    let span = manifest.span.as_ref().map(SpanDecl::to_span).transpose()?;
    let tables = manifest
        .sources
        .iter()
        .map(|decl| {
            let path: PathBuf = base.join(&decl.file);
            if !path.exists() {
                return Err(Error::io(
                    &path,
                    std::io::Error::new(std::io::ErrorKind::NotFound, "source file not found"),
                ));
            }
            SourceTable::read_csv(&path, decl)
        })
        .collect::<Result<Vec<_>>>()?;
    assemble_panel(&tables, hierarchy, span)
}

/// Write tables as one CSV per source plus a `roster.json` manifest.
pub fn write_sources(tables: &[SourceTable], span: Option<MonthSpan>, dir: &Path) -> Result<RosterManifest> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut sources = Vec::new();
    for t in tables {
        t.write_csv(&dir.join(&t.label))?;
        sources.push(SourceDecl {
            file: t.label.clone(),
            variable: t.variable,
            frequency: t.frequency,
            level: t.level,
        });
    }
    let manifest = RosterManifest {
        span: span.map(SpanDecl::from_span),
        sources,
    };
    let path = dir.join("roster.json");
    std::fs::write(&path, serde_json::to_string_pretty(&manifest)?).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}
