use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use soliditycheck_core::rule_engine::run_all;
use soliditycheck_core::{
    format_source, AnalysisError, Clock, DetectionResult, FormatError, FormattedSource, GasModel,
    InheritanceIndex, RuleCatalog, ScanContext,
};

#[derive(Debug, thiserror::Error)]
pub enum FileError {
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Format(#[from] FormatError),
    #[error("{0}")]
    Analysis(#[from] AnalysisError),
}

impl FileError {
    pub fn is_io(&self) -> bool {
        matches!(self, FileError::Io(_))
    }
}

pub fn read_source(path: &Path) -> Result<FormattedSource, FileError> {
    let bytes = std::fs::read(path)?;
    Ok(format_source(path, &String::from_utf8_lossy(&bytes))?)
}

/// Every `*.sol` file under `root`, sorted by path.
pub fn gather(root: &Path) -> Result<Vec<PathBuf>, walkdir::Error> {
    let mut out = Vec::new();
    for entry in walkdir::WalkDir::new(root).follow_links(true) {
        let entry = entry?;
        if entry.file_type().is_file() && entry.path().extension().is_some_and(|e| e == "sol") {
            out.push(entry.into_path());
        }
    }
    out.sort();
    Ok(out)
}

#[derive(Debug)]
pub struct BatchRun {
    /// Sorted by path.
    pub results: Vec<DetectionResult>,
    pub errors: Vec<(PathBuf, FileError)>,
    /// Seconds spent reading, formatting and detecting.
    pub elapsed: f64,
}

/// Detects every file in `paths` on a pool of `jobs` workers (0 means one per
/// core). Contracts declared anywhere in the batch count as inheritance roots
/// for every file.
pub fn run_batch(paths: &[PathBuf], gas: GasModel, jobs: usize, clock: &dyn Clock) -> BatchRun {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .expect("thread pool");
    let start = Instant::now();
    let formatted: Vec<Result<FormattedSource, FileError>> =
        pool.install(|| paths.par_iter().map(|p| read_source(p)).collect());

    let mut index = InheritanceIndex::new();
    for fs in formatted.iter().flatten() {
        // A file with broken braces contributes nothing; its own detection
        // reports the error.
        let _ = index.add_source(fs);
    }

    let ctx = ScanContext {
        gas,
        inheritance: Some(&index),
        prefilter: true,
    };
    let catalog = RuleCatalog::standard();
    let outcomes: Vec<Result<DetectionResult, FileError>> = pool.install(|| {
        formatted
            .into_par_iter()
            .map(|fs| Ok(run_all(catalog, &fs?, &ctx, clock)?))
            .collect()
    });
    let elapsed = clock.elapsed_since(start).as_secs_f64();

    let mut results = Vec::new();
    let mut errors = Vec::new();
    for (path, outcome) in paths.iter().zip(outcomes) {
        match outcome {
            Ok(r) => results.push(r),
            Err(e) => errors.push((path.clone(), e)),
        }
    }
    BatchRun {
        results,
        errors,
        elapsed,
    }
}
