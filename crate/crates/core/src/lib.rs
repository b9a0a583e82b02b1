//! Anisotropic eikonal fast marching on triangle meshes, extended with
//! restitution-driven re-excitability for simulating re-entrant activation.
//!
//! Units: cm, ms and cm/ms internally. Conduction velocities in files and
//! restitution tables are cm/s.

// Negated float comparisons are deliberate: they reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adjacency;
pub mod compare;
pub mod engine;
pub mod error;
pub mod export;
pub mod fmm;
pub mod generate;
pub mod geom;
pub mod heap;
pub mod ionic;
pub mod local;
pub mod mesh;
pub mod metric;
pub mod restitution;
pub mod scenario;
pub mod tridiag;

pub use adjacency::{build_adjacency, Adjacency};
pub use compare::{compare_fields, FieldComparison};
pub use engine::{
    init_engine, BlockLine, Engine, EngineConfig, Event, NodeDynamicState, NodeState, Snapshot, SnapshotSeries,
    StimulusEvent,
};
pub use error::{Error, Result};
pub use export::{read_snapshot_csv, write_events_jsonl, write_snapshot_csv, write_vtk, SnapshotWriter};
pub use fmm::{dijkstra_solve, fmm_solve, ActivationField, MarchState};
pub use generate::{generate_annulus, generate_structured_square, Rect, ScarLayout, Stretch};
pub use heap::WavefrontHeap;
pub use local::{edge_update, node_update, triangle_update, LocalUpdateProblem};
pub use ionic::{CableConfig, MsParameters, Protocol};
pub use mesh::{load_mesh, save_mesh, Mesh, TissueId};
pub use metric::{acuteness_audit, metric_tensor, AuditReport, MetricField, MetricTensor};
pub use restitution::{load_table, save_table, RestitutionTable};
pub use scenario::{parse_scenario, OutputFormat, Scenario};
