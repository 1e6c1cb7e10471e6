//! Static analysis and guard instrumentation for Solidity sources.
//!
//! Sources are first reformatted to one statement per line. Eighteen rules
//! then scan the formatted lines, and two rewriters insert run-time guards
//! against re-entrancy and integer overflow.

pub(crate) mod text;

pub mod detectors;
pub mod formatter;
pub mod instrument;
pub mod loop_analyzer;
pub mod overflow;
pub mod reentrancy;
pub mod report;
pub mod rule_engine;
pub mod structure;

pub use detectors::{InheritanceIndex, RuleCatalog};
pub use formatter::{format_source, FormatError, FormattedSource};
pub use instrument::{Insertion, InsertionKind, InstrumentedSource};
pub use loop_analyzer::GasModel;
pub use report::{CorpusMetrics, DetectionReport};
pub use rule_engine::{
    run_all, Clock, DetectionResult, FixedClock, Finding, RuleId, ScanContext, Severity, SystemClock,
};
pub use structure::AnalysisError;
