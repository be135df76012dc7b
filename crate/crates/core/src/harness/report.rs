//! Report assembly: corpus verdicts with aggregates, the cache and
//! header-register sweep, and static-size bloat, serialized as JSON and a
//! CSV summary. Reports are deterministic: entries stay in name order, the
//! full cost model is embedded, and nothing time- or host-dependent is
//! included.

use serde::Serialize;

use super::corpus::{build_entry, run_corpus, Category, CorpusEntry, CorpusError, EntryResult};
use crate::memsys::{CacheConfig, CostModel, HeaderRegsConfig};
use crate::simulator::{run_image, NullTrace, RunConfig, RunStatus};

#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub cost: CostModel,
    pub entries: Vec<EntryResult>,
    pub aggregate: Aggregate,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct Aggregate {
    pub total: usize,
    pub passed: usize,
    pub exploits_total: usize,
    pub exploits_trapped: usize,
    pub benign_total: usize,
    pub benign_clean: usize,
    /// Mean guarded/unguarded cycle ratio over benign entries.
    pub mean_cycle_overhead: f64,
    pub mean_size_bloat: f64,
    pub median_size_bloat: f64,
}

fn median(mut xs: Vec<f64>) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.sort_by(|a, b| a.partial_cmp(b).expect("bloat is finite"));
    let mid = xs.len() / 2;
    if xs.len() % 2 == 1 {
        xs[mid]
    } else {
        (xs[mid - 1] + xs[mid]) / 2.0
    }
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

pub fn aggregate(results: &[EntryResult]) -> Aggregate {
    let exploits: Vec<_> = results.iter().filter(|r| r.category == Category::Exploit).collect();
    let benign: Vec<_> = results.iter().filter(|r| r.category == Category::Benign).collect();
    let overheads: Vec<f64> = benign.iter().map(|r| r.cycle_overhead).collect();
    let bloats: Vec<f64> = results.iter().map(|r| r.size_bloat).collect();
    Aggregate {
        total: results.len(),
        passed: results.iter().filter(|r| r.pass).count(),
        exploits_total: exploits.len(),
        exploits_trapped: exploits.iter().filter(|r| r.pass).count(),
        benign_total: benign.len(),
        benign_clean: benign.iter().filter(|r| r.pass).count(),
        mean_cycle_overhead: mean(&overheads),
        mean_size_bloat: mean(&bloats),
        median_size_bloat: median(bloats),
    }
}

/// Run every entry under `cost` and assemble the full report.
pub fn report_corpus(entries: &[CorpusEntry], cost: CostModel) -> Result<RunReport, CorpusError> {
    let results = run_corpus(entries, cost)?;
    let aggregate = aggregate(&results);
    Ok(RunReport { cost, entries: results, aggregate })
}

pub fn report_json(report: &RunReport) -> String {
    serde_json::to_string_pretty(report).expect("report serializes") + "\n"
}

/// One row per entry; status cells are compact (`exit 42`, `trap
/// above-bound`, `limit`) so the table stays comma-clean.
pub fn report_csv(report: &RunReport) -> String {
    let mut out = String::from("name,category,pass,guarded,unguarded,cycle_overhead,size_bloat\n");
    for e in &report.entries {
        let cell = |o: &crate::simulator::RunOutcome| match o.status {
            RunStatus::Completed => format!("exit {}", o.exit_value),
            RunStatus::Trapped => match &o.trap {
                Some(t) => format!("trap {}", t.kind),
                None => "trap".into(),
            },
            RunStatus::LimitExceeded => "limit".into(),
        };
        out.push_str(&format!(
            "{},{},{},{},{},{:.4},{:.4}\n",
            e.name,
            e.category,
            e.pass,
            cell(&e.guarded),
            cell(&e.unguarded),
            e.cycle_overhead,
            e.size_bloat,
        ));
    }
    out
}

/// One benign entry measured under one cost configuration.
#[derive(Clone, Debug, Serialize)]
pub struct OverheadRow {
    pub name: String,
    pub guarded_cycles: u64,
    pub unguarded_cycles: u64,
    /// Guarded cycles over unguarded cycles.
    pub ratio: f64,
    pub header_reads: u64,
    pub header_reg_hits: u64,
    pub cache_hit_rate: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct OverheadPoint {
    pub cost: CostModel,
    pub rows: Vec<OverheadRow>,
    pub mean_ratio: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct OverheadReport {
    pub points: Vec<OverheadPoint>,
}

/// The standard sweep: cache disabled and three sizes, each with header
/// registers off and on.
pub fn default_sweep() -> Vec<CostModel> {
    let mut configs = Vec::new();
    for size in [None, Some(256), Some(1024), Some(4096)] {
        for hregs in [false, true] {
            let cache = match size {
                Some(s) => CacheConfig { size: s, ..CacheConfig::default() },
                None => CacheConfig { enabled: false, ..CacheConfig::default() },
            };
            configs.push(CostModel {
                cache,
                headerregs: HeaderRegsConfig { enabled: hregs },
                ..CostModel::default()
            });
        }
    }
    configs
}

/// Measure guarded/unguarded cycle ratios for the benign entries under each
/// configuration. Exploit entries are skipped: a trapped run's cycle count
/// measures the attack's progress, not the instrumentation.
pub fn measure_overheads(
    entries: &[CorpusEntry],
    configs: &[CostModel],
) -> Result<OverheadReport, CorpusError> {
    let mut points = Vec::new();
    for &cost in configs {
        let mut rows = Vec::new();
        for entry in entries.iter().filter(|e| e.category == Category::Benign) {
            let built = build_entry(entry)?;
            let cfg = RunConfig { cost, ..RunConfig::default() };
            let guarded = run_image(&built.guarded_image, &cfg, &mut NullTrace)
                .expect("validated cost model");
            let unguarded = run_image(&built.unguarded_image, &cfg, &mut NullTrace)
                .expect("validated cost model");
            rows.push(OverheadRow {
                name: entry.name.clone(),
                guarded_cycles: guarded.cycles,
                unguarded_cycles: unguarded.cycles,
                ratio: guarded.cycles as f64 / unguarded.cycles.max(1) as f64,
                header_reads: guarded.stats.header_reads,
                header_reg_hits: guarded.stats.header_reg_hits,
                cache_hit_rate: guarded.stats.cache_hit_rate(),
            });
        }
        let mean_ratio = mean(&rows.iter().map(|r| r.ratio).collect::<Vec<_>>());
        points.push(OverheadPoint { cost, rows, mean_ratio });
    }
    Ok(OverheadReport { points })
}

#[derive(Clone, Debug, Serialize)]
pub struct BloatRow {
    pub name: String,
    pub guarded_insns: u32,
    pub unguarded_insns: u32,
    /// Instrumented/plain static instruction ratio minus one.
    pub bloat: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct BloatReport {
    pub rows: Vec<BloatRow>,
    pub mean: f64,
    pub median: f64,
}

/// Static instruction bloat per entry and in aggregate.
pub fn measure_bloat(entries: &[CorpusEntry]) -> Result<BloatReport, CorpusError> {
    let mut rows = Vec::new();
    for entry in entries {
        let built = build_entry(entry)?;
        rows.push(BloatRow {
            name: entry.name.clone(),
            guarded_insns: built.guarded_insns,
            unguarded_insns: built.unguarded_insns,
            bloat: built.guarded_insns as f64 / built.unguarded_insns.max(1) as f64 - 1.0,
        });
    }
    let bloats: Vec<f64> = rows.iter().map(|r| r.bloat).collect();
    Ok(BloatReport { mean: mean(&bloats), median: median(bloats), rows })
}
