//! Test harness: corpus execution, differential comparison, and cost
//! reporting.

pub mod corpus;
pub mod fuzz;
pub mod report;

pub use corpus::{
    build_entry, load_corpus, run_corpus, run_entry, BuiltEntry, Category, CorpusEntry,
    CorpusError, EntryResult, GuardedExpectation, UnguardedExpectation,
};
pub use fuzz::{differential_run, fuzz_programs, generate_program, FuzzOutcome, FuzzSummary};
pub use report::{
    default_sweep, measure_bloat, measure_overheads, report_corpus, report_csv, report_json,
    Aggregate, BloatReport, OverheadPoint, OverheadReport, RunReport,
};
