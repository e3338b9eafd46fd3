//! Geography, variable roster, tidy panel, ingestion and exploratory features.

pub mod dataset;
pub mod hierarchy;
pub mod ingest;
pub mod synth;
pub mod tsfeatures;
pub mod variable;

pub use dataset::{aggregate_hierarchy, icb_series, PanelDataset, SeriesKey};
pub use hierarchy::{GeoHierarchy, GeoLevel, GeoNode, HierarchyTree};
pub use ingest::{assemble_panel, disaggregate, load_manifest, load_panel, write_sources, RosterManifest, SourceDecl, SourceTable, SpanDecl};
pub use synth::{synth_bundle, synth_generate, Coupling, SynthConfig, SynthOutput};
pub use tsfeatures::{decompose, ts_features, TsFeatureSet};
pub use variable::{AgeBand, Frequency, VariableId, VariableKind};
