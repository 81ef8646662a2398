//! Batch sweeps over reproduction methods, speaker counts and listener
//! poses, with criterion contours, the aliasing overlay and reports.

pub mod config;
pub mod report;
pub mod surface;
pub mod sweep;

pub use config::{CriterionTable, MetricKind, Preset, SweepConfig, CONFIG_SCHEMA_VERSION, DEFAULT_HEAD_RADIUS};
pub use report::{derive, read_surfaces, report, ReportData};
pub use surface::{
    aliasing_count, aliasing_overlay, calibrate_threshold, contour_extract, criterion_count, usable_bandwidth,
    AliasingPoint, Contour, ErrorSurface, SurfaceMetric,
};
pub use sweep::{resolve_hrir, run_sweep, surface_rows, CellKey, CellRecord, RunOptions, SweepResult};
