use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::hierarchy::{GeoHierarchy, GeoLevel};
use super::variable::VariableId;
use crate::calendar::{Month, MonthSpan};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SeriesKey {
    pub node: String,
    pub variable: VariableId,
}

impl SeriesKey {
    pub fn new(node: impl Into<String>, variable: VariableId) -> Self {
        Self {
            node: node.into(),
            variable,
        }
    }
}

/// Tidy monthly panel. Every series covers the full span; there are no
/// missing cells. Immutable once built, so it can be shared across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelDataset {
    span: MonthSpan,
    series: BTreeMap<SeriesKey, Vec<f64>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TidyRow {
    node_id: String,
    month: String,
    variable: String,
    value: f64,
}

impl PanelDataset {
    pub fn new(span: MonthSpan) -> Self {
        Self {
            span,
            series: BTreeMap::new(),
        }
    }

    pub fn span(&self) -> MonthSpan {
        self.span
    }

    pub fn insert(&mut self, node: impl Into<String>, variable: VariableId, values: Vec<f64>) -> Result<()> {
        let key = SeriesKey::new(node, variable);
        if values.len() != self.span.len {
            return Err(Error::SpanMismatch(format!(
                "series {}/{} has {} values, span has {}",
                key.node,
                key.variable,
                values.len(),
                self.span.len
            )));
        }
        if self.series.contains_key(&key) {
            return Err(Error::DuplicateCell {
                node: key.node,
                variable: key.variable.code(),
                month: self.span.start.to_string(),
            });
        }
        self.series.insert(key, values);
        Ok(())
    }

    pub fn get(&self, node: &str, variable: VariableId) -> Option<&[f64]> {
        self.series
            .get(&SeriesKey::new(node, variable))
            .map(Vec::as_slice)
    }

    pub fn require(&self, node: &str, variable: VariableId) -> Result<&[f64]> {
        self.get(node, variable)
            .ok_or_else(|| Error::MissingCells(format!("no {variable} series for node {node}")))
    }

    pub fn value(&self, node: &str, month: Month, variable: VariableId) -> Option<f64> {
        let pos = self.span.position(month)?;
        self.get(node, variable).map(|s| s[pos])
    }

    /// Series for `node`, falling back to the nearest ancestor that carries
    /// the variable (national-level drivers broadcast to every ICB).
    pub fn resolve<'a>(
        &'a self,
        hierarchy: &'a GeoHierarchy,
        node: &str,
        variable: VariableId,
    ) -> Option<(&'a str, &'a [f64])> {
        hierarchy
            .lineage(node)
            .into_iter()
            .find_map(|n| self.get(&n.id, variable).map(|s| (n.id.as_str(), s)))
    }

    pub fn series(&self) -> impl Iterator<Item = (&SeriesKey, &Vec<f64>)> {
        self.series.iter()
    }

    pub fn series_count(&self) -> usize {
        self.series.len()
    }

    pub fn cell_count(&self) -> usize {
        self.series.len() * self.span.len
    }

    pub fn nodes(&self) -> BTreeSet<&str> {
        self.series.keys().map(|k| k.node.as_str()).collect()
    }

    pub fn variables(&self) -> BTreeSet<VariableId> {
        self.series.keys().map(|k| k.variable).collect()
    }

    pub fn nodes_with(&self, variable: VariableId) -> Vec<&str> {
        self.series
            .keys()
            .filter(|k| k.variable == variable)
            .map(|k| k.node.as_str())
            .collect()
    }

    /// Panel restricted to months up to and including `end`.
    pub fn truncate(&self, end: Month) -> Result<Self> {
        let len = self
            .span
            .position(end)
            .ok_or_else(|| Error::InvalidInput(format!("{end} outside panel span")))?
            + 1;
        Ok(Self {
            span: MonthSpan::new(self.span.start, len),
            series: self
                .series
                .iter()
                .map(|(k, v)| (k.clone(), v[..len].to_vec()))
                .collect(),
        })
    }

    /// Schema checks on values: finite, counts nonnegative, rates in [0, 1].
    pub fn validate(&self) -> Result<()> {
        for (k, values) in &self.series {
            for (i, &v) in values.iter().enumerate() {
                let at = || format!("{}/{} at {}", k.node, k.variable, self.span.month(i));
                if !v.is_finite() {
                    return Err(Error::InvalidValue(format!("non-finite value {}", at())));
                }
                if k.variable.is_count() && v < 0.0 {
                    return Err(Error::InvalidValue(format!("negative count {v} {}", at())));
                }
                if k.variable.is_rate() && !(0.0..=1.0).contains(&v) {
                    return Err(Error::InvalidValue(format!("rate {v} outside [0,1] {}", at())));
                }
            }
        }
        Ok(())
    }

    /// Canonical long-form CSV: `node_id,month,variable,value`.
    pub fn write_tidy_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut keys: Vec<&SeriesKey> = self.series.keys().collect();
        keys.sort_by(|a, b| a.node.cmp(&b.node).then(a.variable.code().cmp(&b.variable.code())));
        for k in keys {
            let values = &self.series[k];
            for (i, v) in values.iter().enumerate() {
                w.serialize(TidyRow {
                    node_id: k.node.clone(),
                    month: self.span.month(i).to_string(),
                    variable: k.variable.code(),
                    value: *v,
                })?;
            }
        }
        w.flush().map_err(|e| Error::io("<tidy csv>", e))?;
        Ok(())
    }

    pub fn to_tidy_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_tidy_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }

    /// Parse canonical tidy CSV. With a hierarchy, node codes are checked.
    pub fn read_tidy_csv<R: Read>(reader: R, hierarchy: Option<&GeoHierarchy>) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let mut cells: BTreeMap<SeriesKey, BTreeMap<Month, f64>> = BTreeMap::new();
        for row in r.deserialize() {
            let row: TidyRow = row?;
            if let Some(h) = hierarchy {
                if h.node(&row.node_id).is_none() {
                    return Err(Error::UnknownNode {
                        code: row.node_id,
                        context: Some("tidy panel".into()),
                    });
                }
            }
            let variable: VariableId = row.variable.parse()?;
            let month: Month = row.month.parse()?;
            let key = SeriesKey::new(row.node_id, variable);
            let slot = cells.entry(key.clone()).or_default();
            if slot.insert(month, row.value).is_some() {
                return Err(Error::DuplicateCell {
                    node: key.node,
                    variable: key.variable.code(),
                    month: month.to_string(),
                });
            }
        }
        from_cells(cells, None)
    }

    pub fn read_tidy_path(path: &std::path::Path, hierarchy: Option<&GeoHierarchy>) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_tidy_csv(f, hierarchy).map_err(|e| match e {
            Error::Csv(c) => Error::parse(path, c),
            other => other,
        })
    }
}

/// Assemble a panel from sparse cells. Each series must be contiguous and,
/// after clipping to `span` (or the common span when `None`), complete.
pub(crate) fn from_cells(
    cells: BTreeMap<SeriesKey, BTreeMap<Month, f64>>,
    span: Option<MonthSpan>,
) -> Result<PanelDataset> {
    for (k, months) in &cells {
        let gaps = gaps_in(months.keys().copied(), span);
        if !gaps.is_empty() {
            return Err(Error::NonContiguous {
                node: k.node.clone(),
                variable: k.variable.code(),
                gaps,
            });
        }
    }
    let span = match span {
        Some(s) => s,
        None => {
            let start = cells
                .values()
                .filter_map(|m| m.keys().next().copied())
                .max()
                .ok_or_else(|| Error::MissingCells("no observations".into()))?;
            let end = cells
                .values()
                .filter_map(|m| m.keys().next_back().copied())
                .min()
                .expect("non-empty");
            MonthSpan::between(start, end)?
        }
    };
    let mut panel = PanelDataset::new(span);
    for (k, months) in cells {
        let mut values = Vec::with_capacity(span.len);
        for m in span.months() {
            match months.get(&m) {
                Some(v) => values.push(*v),
                None => {
                    return Err(Error::MissingCells(format!(
                        "{}/{} has no value for {m}",
                        k.node, k.variable
                    )))
                }
            }
        }
        panel.insert(k.node, k.variable, values)?;
    }
    panel.validate()?;
    Ok(panel)
}

fn gaps_in(months: impl Iterator<Item = Month>, within: Option<MonthSpan>) -> Vec<String> {
    let months: Vec<Month> = months
        .filter(|m| within.map_or(true, |s| s.contains(*m)))
        .collect();
    let mut gaps = Vec::new();
    for w in months.windows(2) {
        if w[1].0 - w[0].0 > 1 {
            let from = w[0].next();
            let to = w[1].offset(-1);
            if from == to {
                gaps.push(from.to_string());
            } else {
                gaps.push(format!("{from}..{to}"));
            }
        }
    }
    gaps
}

/// Bottom-up sums of an additive variable: each region is the sum of its
/// ICBs, the national node the sum of its regions.
pub fn aggregate_hierarchy(
    panel: &PanelDataset,
    hierarchy: &GeoHierarchy,
    variable: VariableId,
) -> Result<BTreeMap<String, Vec<f64>>> {
    if !variable.is_additive() {
        return Err(Error::NotAdditive(variable.code()));
    }
    let n = panel.span().len;
    let mut out = BTreeMap::new();
    let mut national = vec![0.0; n];
    let national_id = hierarchy.national().id.clone();
    // canonical (sorted) summation order: child order in the hierarchy
    // never changes the result
    let mut regions: Vec<&str> = hierarchy.regions().iter().map(|r| r.id.as_str()).collect();
    regions.sort_unstable();
    for region in regions {
        let mut total = vec![0.0; n];
        let mut children: Vec<&String> = hierarchy.children(region).iter().collect();
        children.sort_unstable();
        for child in children {
            let s = panel
                .get(child, variable)
                .ok_or_else(|| Error::MissingChild(child.clone()))?;
            for (t, v) in total.iter_mut().zip(s) {
                *t += v;
            }
        }
        for (t, v) in national.iter_mut().zip(&total) {
            *t += v;
        }
        out.insert(region.to_string(), total);
    }
    out.insert(national_id, national);
    Ok(out)
}

/// ICB-level series of one variable, in hierarchy order.
pub fn icb_series<'a>(
    panel: &'a PanelDataset,
    hierarchy: &'a GeoHierarchy,
    variable: VariableId,
) -> Vec<(&'a str, &'a [f64])> {
    hierarchy
        .at_level(GeoLevel::Icb)
        .filter_map(|n| panel.get(&n.id, variable).map(|s| (n.id.as_str(), s)))
        .collect()
}
