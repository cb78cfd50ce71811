//! Datasets of noisy/clean slice pairs, patient-level splits and the
//! simulated desk cohort.

pub mod cohort;
pub mod dataset;
pub mod ingest;
pub mod ops;
pub mod split;

pub use cohort::{simulate_cohort, simulate_quarter_dose, CohortSpec};
pub use dataset::{augment, epoch_order, Access, AccessKind, AccessLog, AuditSummary, Dataset, NoisyPool, PairedPool, SlicePair};
pub use ingest::{ingest, write_dataset, IngestOptions};
pub use ops::{normalize_window, resize_area, AugmentOp, DEFAULT_TRAIN_WINDOW_HU, DISPLAY_WINDOW_HU};
pub use split::{make_split, Fold, SplitPlan};
