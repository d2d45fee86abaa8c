//! File formats: WAV audio, analysis JSON documents and corpus directories.
mod analysis;
mod corpus;
mod wav;

pub use analysis::{AnalysisDocument, AnalysisSegment, ANALYSIS_SCHEMA};
pub use corpus::scan_corpus;
pub use wav::{read_wav, write_wav};
