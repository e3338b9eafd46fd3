use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::calendar::Month;
use crate::error::{Error, Result};
use crate::panel::{GeoHierarchy, GeoLevel, PanelDataset, VariableId};

/// One model input column. Every spec has a stable column name that parses
/// back to the same spec.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FeatureSpec {
    Level(VariableId),
    Lag(VariableId, usize),
    /// v(t) - v(t-1)
    Diff(VariableId),
    MonthOfYear,
    Quarter,
    RegionOneHot(String),
    IcbOneHot(String),
    RegionCode,
    IcbCode,
}

impl FeatureSpec {
    pub fn name(&self) -> String {
        self.to_string()
    }

    /// Months of history this feature needs before row month t.
    pub fn lookback(&self) -> usize {
        match self {
            FeatureSpec::Lag(_, k) => *k,
            FeatureSpec::Diff(_) => 1,
            _ => 0,
        }
    }

    pub fn variable(&self) -> Option<VariableId> {
        match self {
            FeatureSpec::Level(v) | FeatureSpec::Lag(v, _) | FeatureSpec::Diff(v) => Some(*v),
            _ => None,
        }
    }

    pub fn is_static(&self) -> bool {
        matches!(
            self,
            FeatureSpec::RegionOneHot(_) | FeatureSpec::IcbOneHot(_) | FeatureSpec::RegionCode | FeatureSpec::IcbCode
        )
    }
}

impl fmt::Display for FeatureSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeatureSpec::Level(v) => write!(f, "{v}"),
            FeatureSpec::Lag(v, k) => write!(f, "{v}_lag{k}"),
            FeatureSpec::Diff(v) => write!(f, "{v}_diff"),
            FeatureSpec::MonthOfYear => f.write_str("month"),
            FeatureSpec::Quarter => f.write_str("quarter"),
            FeatureSpec::RegionOneHot(id) => write!(f, "region={id}"),
            FeatureSpec::IcbOneHot(id) => write!(f, "icb={id}"),
            FeatureSpec::RegionCode => f.write_str("region_code"),
            FeatureSpec::IcbCode => f.write_str("icb_code"),
        }
    }
}

impl FromStr for FeatureSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidInput(format!("unrecognised feature column '{s}'"));
        Ok(match s {
            "month" => FeatureSpec::MonthOfYear,
            "quarter" => FeatureSpec::Quarter,
            "region_code" => FeatureSpec::RegionCode,
            "icb_code" => FeatureSpec::IcbCode,
            _ => {
                if let Some(id) = s.strip_prefix("region=") {
                    FeatureSpec::RegionOneHot(id.to_string())
                } else if let Some(id) = s.strip_prefix("icb=") {
                    FeatureSpec::IcbOneHot(id.to_string())
                } else if let Some(v) = s.strip_suffix("_diff") {
                    FeatureSpec::Diff(v.parse().map_err(|_| bad())?)
                } else if let Some((v, k)) = s.rsplit_once("_lag") {
                    let k: usize = k.parse().map_err(|_| bad())?;
                    FeatureSpec::Lag(v.parse().map_err(|_| bad())?, k)
                } else {
                    FeatureSpec::Level(s.parse().map_err(|_| bad())?)
                }
            }
        })
    }
}

impl Serialize for FeatureSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for FeatureSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RowKey {
    pub node: String,
    pub month: Month,
}

/// Column-major design matrix keyed by (node, month) rows.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub rows: Vec<RowKey>,
    pub names: Vec<String>,
    pub columns: Vec<Vec<f64>>,
    pub target: Option<Vec<f64>>,
}

/// Evaluates feature specs against a panel. The panel may extend past the
/// observed span (future predictor paths appended) for recursive forecasting.
pub struct FeatureContext<'a> {
    pub panel: &'a PanelDataset,
    pub hierarchy: &'a GeoHierarchy,
    region_codes: BTreeMap<String, usize>,
    icb_codes: BTreeMap<String, usize>,
}

impl<'a> FeatureContext<'a> {
    pub fn new(panel: &'a PanelDataset, hierarchy: &'a GeoHierarchy) -> Self {
        Self {
            panel,
            hierarchy,
            region_codes: hierarchy.level_codes(GeoLevel::Region),
            icb_codes: hierarchy.level_codes(GeoLevel::Icb),
        }
    }

    fn series<'b>(&'b self, node: &str, v: VariableId, overrides: &[(VariableId, &'b [f64])]) -> Result<&'b [f64]> {
        if let Some((_, s)) = overrides.iter().find(|(o, _)| *o == v) {
            return Ok(s);
        }
        self.panel
            .resolve(self.hierarchy, node, v)
            .map(|(_, s)| s)
            .ok_or_else(|| Error::MissingCells(format!("no {v} series for node {node} or its ancestors")))
    }

    /// Value of `spec` for `node` at panel position `pos`; None when the
    /// lookback underflows the span.
    pub fn eval(&self, spec: &FeatureSpec, node: &str, pos: usize) -> Result<Option<f64>> {
        self.eval_with(spec, node, pos, &[])
    }

    /// As [`eval`](Self::eval), reading the variables in `overrides` from the
    /// given node-local series instead of the panel (used when recursive
    /// forecasting feeds predictions back as lags).
    pub fn eval_with(
        &self,
        spec: &FeatureSpec,
        node: &str,
        pos: usize,
        overrides: &[(VariableId, &[f64])],
    ) -> Result<Option<f64>> {
        if pos < spec.lookback() {
            return Ok(None);
        }
        let month = self.panel.span().month(pos);
        let region = || self.hierarchy.region_of(node).map(|r| r.id.as_str());
        let at = |s: &[f64], i: usize| {
            s.get(i)
                .copied()
                .ok_or_else(|| Error::MissingCells(format!("{spec} has no value at {} for {node}", self.panel.span().month(i))))
        };
        Ok(Some(match spec {
            FeatureSpec::Level(v) => at(self.series(node, *v, overrides)?, pos)?,
            FeatureSpec::Lag(v, k) => at(self.series(node, *v, overrides)?, pos - k)?,
            FeatureSpec::Diff(v) => {
                let s = self.series(node, *v, overrides)?;
                at(s, pos)? - at(s, pos - 1)?
            }
            FeatureSpec::MonthOfYear => month.month_of_year() as f64,
            FeatureSpec::Quarter => month.quarter() as f64,
            FeatureSpec::RegionOneHot(id) => f64::from(u8::from(region() == Some(id.as_str()))),
            FeatureSpec::IcbOneHot(id) => f64::from(u8::from(node == id)),
            FeatureSpec::RegionCode => region().and_then(|r| self.region_codes.get(r)).map_or(-1.0, |&c| c as f64),
            FeatureSpec::IcbCode => self.icb_codes.get(node).map_or(-1.0, |&c| c as f64),
        }))
    }

    pub fn row(&self, specs: &[FeatureSpec], node: &str, pos: usize) -> Result<Option<Vec<f64>>> {
        self.row_with(specs, node, pos, &[])
    }

    pub fn row_with(
        &self,
        specs: &[FeatureSpec],
        node: &str,
        pos: usize,
        overrides: &[(VariableId, &[f64])],
    ) -> Result<Option<Vec<f64>>> {
        let mut out = Vec::with_capacity(specs.len());
        for s in specs {
            match self.eval_with(s, node, pos, overrides)? {
                Some(v) => out.push(v),
                None => return Ok(None),
            }
        }
        Ok(Some(out))
    }
}

impl FeatureMatrix {
    /// Rows for every node and every month at which all features are
    /// defined; rows whose lookback underflows the span are dropped.
    pub fn build(
        panel: &PanelDataset,
        hierarchy: &GeoHierarchy,
        nodes: &[&str],
        specs: &[FeatureSpec],
        target: Option<VariableId>,
    ) -> Result<Self> {
        let n = panel.span().len;
        for s in specs {
            if let FeatureSpec::Lag(_, 0) = s {
                return Err(Error::InvalidInput("lags must be at least 1".into()));
            }
            if s.lookback() >= n {
                return Err(Error::InvalidInput(format!(
                    "feature {s} needs {} months of history, series has {n}",
                    s.lookback()
                )));
            }
        }
        let ctx = FeatureContext::new(panel, hierarchy);
        let mut rows = Vec::new();
        let mut columns = vec![Vec::new(); specs.len()];
        let mut y = Vec::new();
        for &node in nodes {
            hierarchy.require(node)?;
            let target_series = target.map(|v| panel.require(node, v)).transpose()?;
            for pos in 0..n {
                let Some(row) = ctx.row(specs, node, pos)? else { continue };
                for (c, v) in columns.iter_mut().zip(row) {
                    c.push(v);
                }
                if let Some(t) = target_series {
                    y.push(t[pos]);
                }
                rows.push(RowKey {
                    node: node.to_string(),
                    month: panel.span().month(pos),
                });
            }
        }
        Ok(Self {
            rows,
            names: specs.iter().map(FeatureSpec::name).collect(),
            columns,
            target: target.map(|_| y),
        })
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.names.iter().position(|n| n == name).map(|i| self.columns[i].as_slice())
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c[i]).collect()
    }

    pub fn specs(&self) -> Result<Vec<FeatureSpec>> {
        self.names.iter().map(|n| n.parse()).collect()
    }

    /// Subset of rows for which `keep` holds.
    pub fn filter_rows(&self, keep: impl Fn(&RowKey) -> bool) -> Self {
        let mask: Vec<bool> = self.rows.iter().map(keep).collect();
        self.take_rows(&mask)
    }

    /// Rows whose mask entry is true.
    pub fn take_rows(&self, mask: &[bool]) -> Self {
        let idx: Vec<usize> = (0..self.n_rows()).filter(|&i| mask[i]).collect();
        Self {
            rows: idx.iter().map(|&i| self.rows[i].clone()).collect(),
            names: self.names.clone(),
            columns: self.columns.iter().map(|c| idx.iter().map(|&i| c[i]).collect()).collect(),
            target: self.target.as_ref().map(|t| idx.iter().map(|&i| t[i]).collect()),
        }
    }

    /// Columns named in `names`, in that order.
    pub fn select(&self, names: &[String]) -> Result<Self> {
        let mut columns = Vec::with_capacity(names.len());
        for n in names {
            let c = self
                .column(n)
                .ok_or_else(|| Error::InvalidInput(format!("no feature column '{n}'")))?;
            columns.push(c.to_vec());
        }
        Ok(Self {
            rows: self.rows.clone(),
            names: names.to_vec(),
            columns,
            target: self.target.clone(),
        })
    }

    /// CSV with node_id, month, the feature columns and (if present) a
    /// trailing `target` column.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["node_id".to_string(), "month".to_string()];
        header.extend(self.names.iter().cloned());
        if self.target.is_some() {
            header.push("target".into());
        }
        w.write_record(&header)?;
        for i in 0..self.n_rows() {
            let mut rec = vec![self.rows[i].node.clone(), self.rows[i].month.to_string()];
            rec.extend(self.columns.iter().map(|c| c[i].to_string()));
            if let Some(t) = &self.target {
                rec.push(t[i].to_string());
            }
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<feature matrix>", e))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        if header.len() < 2 || header[0] != "node_id" || header[1] != "month" {
            return Err(Error::parse("<feature matrix>", "header must start with node_id,month"));
        }
        let has_target = header.last().is_some_and(|h| h == "target");
        let names: Vec<String> = header[2..header.len() - usize::from(has_target)].to_vec();
        let mut m = Self {
            rows: Vec::new(),
            columns: vec![Vec::new(); names.len()],
            names,
            target: has_target.then(Vec::new),
        };
        for rec in r.records() {
            let rec = rec?;
            let num = |i: usize| -> Result<f64> {
                rec[i]
                    .parse()
                    .map_err(|_| Error::InvalidValue(format!("'{}' in column {}", &rec[i], header[i])))
            };
            m.rows.push(RowKey {
                node: rec[0].to_string(),
                month: rec[1].parse()?,
            });
            for c in 0..m.names.len() {
                m.columns[c].push(num(c + 2)?);
            }
            if let Some(t) = &mut m.target {
                t.push(num(header.len() - 1)?);
            }
        }
        Ok(m)
    }
}

/// Lag columns `var_lagK` for every ICB carrying the first variable.
pub fn make_lags(
    panel: &PanelDataset,
    hierarchy: &GeoHierarchy,
    variables: &[VariableId],
    lags: &[usize],
) -> Result<FeatureMatrix> {
    if let Some(&k) = lags.iter().find(|&&k| k == 0) {
        return Err(Error::InvalidInput(format!("lags must be at least 1, got {k}")));
    }
    let specs: Vec<FeatureSpec> = variables
        .iter()
        .flat_map(|&v| lags.iter().map(move |&k| FeatureSpec::Lag(v, k)))
        .collect();
    let nodes: Vec<&str> = match variables.first() {
        Some(&v) => panel
            .nodes_with(v)
            .into_iter()
            .filter(|n| hierarchy.node(n).is_some_and(|g| g.level == GeoLevel::Icb))
            .collect(),
        None => Vec::new(),
    };
    FeatureMatrix::build(panel, hierarchy, &nodes, &specs, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calendar::MonthSpan;

    #[test]
    fn names_round_trip() {
        let specs = [
            FeatureSpec::Level(VariableId::Mhs01),
            FeatureSpec::Lag(VariableId::Mhs32, 1),
            FeatureSpec::Lag(VariableId::Population(crate::panel::AgeBand::ALL[0]), 12),
            FeatureSpec::Diff(VariableId::Headcount),
            FeatureSpec::MonthOfYear,
            FeatureSpec::Quarter,
            FeatureSpec::RegionOneHot("Y56".into()),
            FeatureSpec::IcbOneHot("ICB01".into()),
            FeatureSpec::RegionCode,
            FeatureSpec::IcbCode,
        ];
        for s in specs {
            assert_eq!(s.name().parse::<FeatureSpec>().unwrap(), s);
        }
        assert_eq!(FeatureSpec::Lag(VariableId::Mhs01, 1).name(), "MHS01_lag1");
    }

    #[test]
    fn csv_round_trip() {
        let h = GeoHierarchy::synthetic(&[2]).unwrap();
        let mut p = PanelDataset::new(MonthSpan::new(Month(0), 4));
        p.insert("ICB01", VariableId::Mhs01, vec![1.0, 2.0, 3.0, 4.5]).unwrap();
        p.insert("ICB01", VariableId::Headcount, vec![9.0, 8.0, 7.0, 6.0]).unwrap();
        let specs = [FeatureSpec::Lag(VariableId::Mhs01, 1), FeatureSpec::MonthOfYear];
        let m = FeatureMatrix::build(&p, &h, &["ICB01"], &specs, Some(VariableId::Headcount)).unwrap();
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        let back = FeatureMatrix::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, m);
        assert_eq!(m.target.as_deref(), Some(&[8.0, 7.0, 6.0][..]));
    }
}
