//! Batch drivers behind the command-line tool: manifest ingestion,
//! dataset-wide refinement and evaluation, upscale fusion, the
//! label-noise study and single-file utilities.
//!
//! Every command is deterministic in its inputs and `RunConfig`; entries
//! run concurrently on a pool of `RunConfig::parallelism` threads and
//! write only to entry-unique paths.

mod commands;
mod config;
mod detect;
mod manifest;
mod study;
mod synth;

pub use commands::{
    cmd_canny, cmd_crispness, cmd_eval, cmd_nms, cmd_refine, cmd_upscale_fuse, EntryStatus,
    EvalReport, RefineEntry, RefineSummary,
};
pub use config::{BackendConfig, RunConfig};
pub use detect::{upscale_fuse, Detector, ExternalDetector, Fusion, SoftDetector};
pub use manifest::{DatasetManifest, ManifestEntry};
pub use study::{
    cmd_noise_study, mix_csv, noise_csv, ImageMeasure, MixColumns, MixRow, NoiseColumns, NoiseRow, StudyColumns,
    StudyReport, STUDY_NOTE,
};
pub use synth::{load_corpus, write_synthetic_corpus, SyntheticSpec};

use crate::error::{Error, Result};

/// Process exit status for a batch: 0 when everything succeeded, 1 when
/// every entry failed, 2 for a partial failure.
pub fn exit_code(succeeded: usize, failed: usize) -> i32 {
    match (succeeded, failed) {
        (_, 0) => 0,
        (0, _) => 1,
        _ => 2,
    }
}

/// Runs `f` on a dedicated pool of `threads` workers; 0 uses the number of
/// available cores.
pub(crate) fn with_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot build thread pool: {e}")))?;
    Ok(pool.install(f))
}

pub(crate) fn write_json<T: serde::Serialize>(value: &T, path: &std::path::Path) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub(crate) fn create_dir(path: &std::path::Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}
