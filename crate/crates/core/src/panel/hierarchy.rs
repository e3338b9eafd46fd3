//! Three-level geography: one national node, regions, and ICBs.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum GeoLevel {
    National,
    Region,
    Icb,
}

impl GeoLevel {
    fn expected_parent(self) -> Option<GeoLevel> {
        match self {
            GeoLevel::National => None,
            GeoLevel::Region => Some(GeoLevel::National),
            GeoLevel::Icb => Some(GeoLevel::Region),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeoNode {
    pub id: String,
    pub level: GeoLevel,
    pub parent: Option<String>,
    pub name: String,
}

/// Nested JSON form: `{id, name, level, children[]}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HierarchyTree {
    pub id: String,
    pub name: String,
    pub level: GeoLevel,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<HierarchyTree>,
}

#[derive(Debug, Clone)]
pub struct GeoHierarchy {
    nodes: Vec<GeoNode>,
    index: HashMap<String, usize>,
    children: HashMap<String, Vec<String>>,
}

/// The seven NHS England regions, keyed by their ONS region codes.
pub const NHSE_REGIONS: [(&str, &str); 7] = [
    ("Y61", "East of England"),
    ("Y56", "London"),
    ("Y60", "Midlands"),
    ("Y63", "North East and Yorkshire"),
    ("Y62", "North West"),
    ("Y59", "South East"),
    ("Y58", "South West"),
];

/// ICB counts per region used by the synthetic reference hierarchy (45 total).
pub const REFERENCE_ICB_LAYOUT: [usize; 7] = [6, 5, 11, 8, 7, 5, 3];

impl GeoHierarchy {
    /// Build from a flat node list, validating the tree invariants.
    pub fn from_nodes(nodes: Vec<GeoNode>) -> Result<Self> {
        let mut index = HashMap::new();
        for (i, n) in nodes.iter().enumerate() {
            if n.id.trim().is_empty() {
                return Err(Error::Hierarchy("empty node id".into()));
            }
            if index.insert(n.id.clone(), i).is_some() {
                return Err(Error::Hierarchy(format!("duplicate node id `{}`", n.id)));
            }
        }
        let nationals: Vec<&GeoNode> = nodes.iter().filter(|n| n.level == GeoLevel::National).collect();
        if nationals.len() != 1 {
            return Err(Error::Hierarchy(format!(
                "expected exactly one NATIONAL node, found {}",
                nationals.len()
            )));
        }
        let mut children: HashMap<String, Vec<String>> = HashMap::new();
        for n in &nodes {
            match (n.level.expected_parent(), &n.parent) {
                (None, None) => {}
                (None, Some(p)) => {
                    return Err(Error::Hierarchy(format!("national node `{}` has parent `{p}`", n.id)))
                }
                (Some(_), None) => return Err(Error::Hierarchy(format!("node `{}` has no parent", n.id))),
                (Some(want), Some(p)) => {
                    let parent = index
                        .get(p)
                        .map(|&i| &nodes[i])
                        .ok_or_else(|| Error::Hierarchy(format!("node `{}` has unknown parent `{p}`", n.id)))?;
                    if parent.level != want {
                        return Err(Error::Hierarchy(format!(
                            "node `{}` ({:?}) must have a {:?} parent, `{p}` is {:?}",
                            n.id, n.level, want, parent.level
                        )));
                    }
                    children.entry(p.clone()).or_default().push(n.id.clone());
                }
            }
        }
        // Levels strictly decrease towards the root, so parent links cannot cycle.
        Ok(Self {
            nodes,
            index,
            children,
        })
    }

    pub fn from_tree(tree: &HierarchyTree) -> Result<Self> {
        let mut nodes = Vec::new();
        fn walk(t: &HierarchyTree, parent: Option<&str>, out: &mut Vec<GeoNode>) {
            out.push(GeoNode {
                id: t.id.clone(),
                level: t.level,
                parent: parent.map(str::to_string),
                name: t.name.clone(),
            });
            for c in &t.children {
                walk(c, Some(&t.id), out);
            }
        }
        walk(tree, None, &mut nodes);
        Self::from_nodes(nodes)
    }

    pub fn to_tree(&self) -> HierarchyTree {
        fn build(h: &GeoHierarchy, id: &str) -> HierarchyTree {
            let n = h.node(id).expect("node exists");
            HierarchyTree {
                id: n.id.clone(),
                name: n.name.clone(),
                level: n.level,
                children: h.children(id).iter().map(|c| build(h, c)).collect(),
            }
        }
        build(self, &self.national().id)
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let tree: HierarchyTree = serde_json::from_str(&text).map_err(|e| Error::parse(path, e))?;
        Self::from_tree(&tree)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_tree()).expect("hierarchy serialises")
    }

    /// National root, 7 NHSE regions, and ICBs laid out per `icbs_per_region`.
    /// ICB ids are synthetic (`ICB01`..).
    pub fn synthetic(icbs_per_region: &[usize]) -> Result<Self> {
        if icbs_per_region.is_empty() || icbs_per_region.len() > NHSE_REGIONS.len() {
            return Err(Error::InvalidInput(format!(
                "expected 1..=7 regions, got {}",
                icbs_per_region.len()
            )));
        }
        let mut nodes = vec![GeoNode {
            id: "ENG".into(),
            level: GeoLevel::National,
            parent: None,
            name: "NHS England".into(),
        }];
        let mut k = 0;
        for (&(rid, rname), &count) in NHSE_REGIONS.iter().zip(icbs_per_region) {
            nodes.push(GeoNode {
                id: rid.into(),
                level: GeoLevel::Region,
                parent: Some("ENG".into()),
                name: rname.into(),
            });
            for _ in 0..count {
                k += 1;
                nodes.push(GeoNode {
                    id: format!("ICB{k:02}"),
                    level: GeoLevel::Icb,
                    parent: Some(rid.into()),
                    name: format!("{rname} ICB {k}"),
                });
            }
        }
        Self::from_nodes(nodes)
    }

    pub fn reference() -> Self {
        Self::synthetic(&REFERENCE_ICB_LAYOUT).expect("reference layout is valid")
    }

    pub fn nodes(&self) -> &[GeoNode] {
        &self.nodes
    }

    pub fn node(&self, id: &str) -> Option<&GeoNode> {
        self.index.get(id).map(|&i| &self.nodes[i])
    }

    pub fn require(&self, id: &str) -> Result<&GeoNode> {
        self.node(id).ok_or_else(|| Error::UnknownNode {
            code: id.to_string(),
            context: None,
        })
    }

    pub fn national(&self) -> &GeoNode {
        self.nodes
            .iter()
            .find(|n| n.level == GeoLevel::National)
            .expect("validated on construction")
    }

    pub fn at_level(&self, level: GeoLevel) -> impl Iterator<Item = &GeoNode> {
        self.nodes.iter().filter(move |n| n.level == level)
    }

    pub fn regions(&self) -> Vec<&GeoNode> {
        self.at_level(GeoLevel::Region).collect()
    }

    pub fn icbs(&self) -> Vec<&GeoNode> {
        self.at_level(GeoLevel::Icb).collect()
    }

    pub fn children(&self, id: &str) -> &[String] {
        self.children.get(id).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn parent(&self, id: &str) -> Option<&GeoNode> {
        self.node(id)?.parent.as_deref().and_then(|p| self.node(p))
    }

    /// The node itself followed by its ancestors up to the national root.
    pub fn lineage(&self, id: &str) -> Vec<&GeoNode> {
        let mut out = Vec::new();
        let mut cur = self.node(id);
        while let Some(n) = cur {
            out.push(n);
            cur = n.parent.as_deref().and_then(|p| self.node(p));
        }
        out
    }

    /// Region that owns an ICB (or the region itself).
    pub fn region_of(&self, id: &str) -> Option<&GeoNode> {
        self.lineage(id).into_iter().find(|n| n.level == GeoLevel::Region)
    }

    /// Stable integer code per node within its level, in hierarchy order.
    pub fn level_codes(&self, level: GeoLevel) -> BTreeMap<String, usize> {
        self.at_level(level)
            .enumerate()
            .map(|(i, n)| (n.id.clone(), i))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn ids(&self) -> HashSet<&str> {
        self.nodes.iter().map(|n| n.id.as_str()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_hierarchy_shape() {
        let h = GeoHierarchy::reference();
        assert_eq!(h.regions().len(), 7);
        assert_eq!(h.icbs().len(), 45);
        assert_eq!(h.len(), 53);
        for icb in h.icbs() {
            assert_eq!(h.parent(&icb.id).unwrap().level, GeoLevel::Region);
        }
        for r in h.regions() {
            assert_eq!(h.parent(&r.id).unwrap().id, "ENG");
        }
    }

    #[test]
    fn tree_round_trip() {
        let h = GeoHierarchy::reference();
        let back = GeoHierarchy::from_tree(&h.to_tree()).unwrap();
        assert_eq!(back.nodes(), h.nodes());
    }

    #[test]
    fn rejects_bad_trees() {
        let icb_under_national = HierarchyTree {
            id: "ENG".into(),
            name: "E".into(),
            level: GeoLevel::National,
            children: vec![HierarchyTree {
                id: "X".into(),
                name: "x".into(),
                level: GeoLevel::Icb,
                children: vec![],
            }],
        };
        assert!(GeoHierarchy::from_tree(&icb_under_national).is_err());

        let dup = HierarchyTree {
            id: "ENG".into(),
            name: "E".into(),
            level: GeoLevel::National,
            children: vec![
                HierarchyTree {
                    id: "R".into(),
                    name: "r".into(),
                    level: GeoLevel::Region,
                    children: vec![],
                },
                HierarchyTree {
                    id: "R".into(),
                    name: "r2".into(),
                    level: GeoLevel::Region,
                    children: vec![],
                },
            ],
        };
        assert!(matches!(GeoHierarchy::from_tree(&dup), Err(Error::Hierarchy(_))));
    }

    #[test]
    fn lineage_walks_to_root() {
        let h = GeoHierarchy::reference();
        let ids: Vec<&str> = h.lineage("ICB01").iter().map(|n| n.id.as_str()).collect();
        assert_eq!(ids, ["ICB01", "Y61", "ENG"]);
        assert_eq!(h.region_of("ICB07").unwrap().id, "Y56");
    }
}
