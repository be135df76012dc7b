//! Command-line front end.
//!
//! Exit codes are part of the interface: 0 on success, 1 when `run`
//! executes a program that traps (or blows its instruction budget), 2 for
//! usage, I/O, and compile errors, 3 when `corpus` or `bench` find an
//! expectation violated.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use gandalf_core::compiler::{assemble, compile, parse, BlockKind, FrameLayout};
use gandalf_core::harness::{
    default_sweep, load_corpus, measure_bloat, measure_overheads, report_corpus, report_json,
    OverheadPoint,
};
use gandalf_core::machine::ProgramImage;
use gandalf_core::memsys::{CostModel, HeaderRegsConfig};
use gandalf_core::simulator::{
    run_image, NullTrace, RunConfig, RunOutcome, RunStatus, WriteTrace, DEFAULT_MAX_INSTRUCTIONS,
};

const TRAPPED: u8 = 1;
const ERROR: u8 = 2;
const EXPECTATION_FAILED: u8 = 3;

/// Cost-model config file honored when set; flags still win.
const COST_ENV: &str = "GANDALF_COST_CONFIG";

#[derive(Parser)]
#[command(name = "gandalf", version, about = "Bounds-checked toy ISA toolchain")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Compile a source file to a loadable image.
    Compile {
        /// Source file.
        src: PathBuf,
        /// Instrument with protection headers and checks.
        #[arg(long)]
        gandalf: bool,
        /// Image output path (defaults to the source with extension .img).
        #[arg(short, long)]
        out: Option<PathBuf>,
        /// Print the generated assembly to stdout.
        #[arg(long)]
        emit_asm: bool,
        /// Print every function's frame layout to stdout.
        #[arg(long)]
        dump_layout: bool,
    },
    /// Execute an image and report the outcome and cost counters.
    Run {
        /// Image file produced by `compile`.
        image: PathBuf,
        /// Write one line per retired instruction and check to stderr.
        #[arg(long)]
        trace: bool,
        /// Cache override: a size in bytes, or `off`.
        #[arg(long, value_name = "BYTES|off")]
        cache: Option<String>,
        /// Store-buffer capacity override (0 disables buffering).
        #[arg(long, value_name = "ENTRIES")]
        storebuf: Option<u32>,
        /// Enable the header registers.
        #[arg(long)]
        headerregs: bool,
        /// Instruction budget before the run is cut off.
        #[arg(long, value_name = "N", default_value_t = DEFAULT_MAX_INSTRUCTIONS)]
        max_insns: u64,
    },
    /// Build and run every corpus entry in both modes and check the
    /// expectation manifests.
    Corpus {
        /// Directory of `<name>.mg` / `<name>.expect` pairs.
        dir: PathBuf,
        /// Also write the full report as JSON (`-` for stdout).
        #[arg(long, value_name = "FILE")]
        json: Option<PathBuf>,
    },
    /// Measure cycle overhead and size bloat over the benign entries.
    Bench {
        /// Directory of corpus entries.
        dir: PathBuf,
        /// Sweep cache sizes and header registers instead of the single
        /// configured cost model.
        #[arg(long)]
        sweep: bool,
    },
}

fn main() -> ExitCode {
    // Die quietly when stdout closes early (`gandalf run … | head`) instead
    // of panicking on the broken pipe.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }

    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Compile { src, gandalf, out, emit_asm, dump_layout } => {
            cmd_compile(&src, gandalf, out, emit_asm, dump_layout)
        }
        Cmd::Run { image, trace, cache, storebuf, headerregs, max_insns } => {
            cmd_run(&image, trace, cache.as_deref(), storebuf, headerregs, max_insns)
        }
        Cmd::Corpus { dir, json } => cmd_corpus(&dir, json),
        Cmd::Bench { dir, sweep } => cmd_bench(&dir, sweep),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(msg) => {
            eprintln!("gandalf: {msg}");
            ExitCode::from(ERROR)
        }
    }
}

/// Defaults, overridden by the `GANDALF_COST_CONFIG` file when present.
fn configured_cost() -> Result<CostModel, String> {
    match std::env::var_os(COST_ENV) {
        None => Ok(CostModel::default()),
        Some(path) => {
            let text = std::fs::read_to_string(&path)
                .map_err(|e| format!("{COST_ENV} {}: {e}", PathBuf::from(&path).display()))?;
            toml::from_str(&text)
                .map_err(|e| format!("{COST_ENV} {}: {e}", PathBuf::from(&path).display()))
        }
    }
}

fn cmd_compile(
    src: &Path,
    gandalf: bool,
    out: Option<PathBuf>,
    emit_asm: bool,
    dump_layout: bool,
) -> Result<u8, String> {
    let text = std::fs::read_to_string(src).map_err(|e| format!("{}: {e}", src.display()))?;
    let program = parse(&text).map_err(|e| format!("{}: {e}", src.display()))?;
    let asm = compile(&program, gandalf).map_err(|e| format!("{}: {e}", src.display()))?;

    if emit_asm {
        print!("{}", asm.text());
    }
    if dump_layout {
        for layout in asm.layouts.values() {
            print_layout(layout);
        }
    }

    let assembled = assemble(&asm).map_err(|e| format!("{}: {e}", src.display()))?;
    let out = out.unwrap_or_else(|| src.with_extension("img"));
    std::fs::write(&out, assembled.image.to_bytes())
        .map_err(|e| format!("{}: {e}", out.display()))?;
    eprintln!(
        "wrote {} ({} instructions, entry {:#010x}{})",
        out.display(),
        asm.instruction_count(),
        assembled.image.entry,
        if gandalf { ", instrumented" } else { "" }
    );
    Ok(0)
}

fn block_kind(kind: BlockKind) -> &'static str {
    match kind {
        BlockKind::System => "system",
        BlockKind::Scalars => "scalars",
        BlockKind::Array => "array",
        BlockKind::Pointer => "pointer",
    }
}

fn print_layout(layout: &FrameLayout) {
    println!(
        "{}: frame {} bytes{}",
        layout.function,
        layout.frame_size,
        if layout.guarded { ", instrumented" } else { "" }
    );
    for b in &layout.blocks {
        let header = match b.header_offset {
            Some(h) => format!("header @{h:<4}"),
            None => "            ".to_string(),
        };
        println!(
            "  {:<8} {:<12} {header} data @{:<4} {:>4} bytes",
            block_kind(b.kind),
            b.name,
            b.data_offset,
            b.size
        );
    }
}

fn cmd_run(
    path: &Path,
    trace: bool,
    cache: Option<&str>,
    storebuf: Option<u32>,
    headerregs: bool,
    max_insns: u64,
) -> Result<u8, String> {
    let bytes = std::fs::read(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let image = ProgramImage::from_bytes(&bytes).map_err(|e| format!("{}: {e}", path.display()))?;

    let mut cost = configured_cost()?;
    match cache {
        Some("off") => cost.cache.enabled = false,
        Some(size) => {
            cost.cache.enabled = true;
            cost.cache.size = size
                .parse()
                .map_err(|_| format!("--cache expects a byte size or `off`, got `{size}`"))?;
        }
        None => {}
    }
    if let Some(capacity) = storebuf {
        cost.storebuf.capacity = capacity;
    }
    if headerregs {
        cost.headerregs = HeaderRegsConfig { enabled: true };
    }

    let cfg = RunConfig { cost, max_instructions: max_insns };
    let outcome = if trace {
        run_image(&image, &cfg, &mut WriteTrace(std::io::stderr().lock()))
    } else {
        run_image(&image, &cfg, &mut NullTrace)
    }
    .map_err(|e| e.to_string())?;

    print_outcome(&outcome);
    Ok(match outcome.status {
        RunStatus::Completed => 0,
        RunStatus::Trapped | RunStatus::LimitExceeded => TRAPPED,
    })
}

fn print_outcome(out: &RunOutcome) {
    println!("status        {}", out.status);
    match &out.trap {
        Some(t) => {
            println!(
                "trap          {} at pc {:#010x}, ea {:#010x}",
                t.kind, t.pc, t.effective_address
            );
            println!("              {}", t.detail);
        }
        None => println!("exit value    {}", out.exit_value),
    }
    println!("instructions  {}", out.instructions);
    println!("cycles        {}", out.cycles);
    let s = &out.stats;
    println!(
        "memory        reads {} writes {} header-reads {} stall-cycles {}",
        s.data_reads, s.data_writes, s.header_reads, s.store_stall_cycles
    );
    let rate = match s.cache_hit_rate() {
        Some(r) => format!(" (hit rate {:.1}%)", 100.0 * r),
        None => String::new(),
    };
    println!(
        "cache         hits {} misses {} forwards {}{rate}",
        s.cache_hits, s.cache_misses, s.store_forwards
    );
    println!(
        "checks        allowed {} mismatched {} header-reg hits {}",
        s.checks_allowed, s.checks_mismatched, s.header_reg_hits
    );
}

fn cmd_corpus(dir: &Path, json: Option<PathBuf>) -> Result<u8, String> {
    let entries = load_corpus(dir).map_err(|e| e.to_string())?;
    let cost = configured_cost()?;
    let report = report_corpus(&entries, cost).map_err(|e| e.to_string())?;

    // `--json -` claims stdout for the report, so the table moves to stderr.
    let json_on_stdout = json.as_deref().is_some_and(|p| p.as_os_str() == "-");
    let mut table = String::new();
    for e in &report.entries {
        let verdict = if e.pass { "pass" } else { "FAIL" };
        let detail = match &e.failure {
            Some(msg) => format!(" — {msg}"),
            None => String::new(),
        };
        let _ = writeln!(
            table,
            "{verdict}  {:<20} {:<7} overhead {:>5.2}x  bloat {:>5.1}%{detail}",
            e.name,
            e.category.to_string(),
            e.cycle_overhead,
            100.0 * e.size_bloat
        );
    }
    let a = &report.aggregate;
    let _ = writeln!(
        table,
        "{}/{} passed — exploits trapped {}/{}, benign clean {}/{}, mean overhead {:.2}x, \
         median bloat {:.1}%",
        a.passed,
        a.total,
        a.exploits_trapped,
        a.exploits_total,
        a.benign_clean,
        a.benign_total,
        a.mean_cycle_overhead,
        100.0 * a.median_size_bloat
    );
    if json_on_stdout {
        eprint!("{table}");
    } else {
        print!("{table}");
    }

    if let Some(path) = json {
        let text = report_json(&report);
        if json_on_stdout {
            print!("{text}");
        } else {
            std::fs::write(&path, text).map_err(|e| format!("{}: {e}", path.display()))?;
        }
    }
    Ok(if report.aggregate.passed == report.aggregate.total { 0 } else { EXPECTATION_FAILED })
}

fn cmd_bench(dir: &Path, sweep: bool) -> Result<u8, String> {
    let entries = load_corpus(dir).map_err(|e| e.to_string())?;

    let bloat = measure_bloat(&entries).map_err(|e| e.to_string())?;
    println!("static size bloat:");
    for row in &bloat.rows {
        println!(
            "  {:<20} {:>4} → {:>4} instructions  {:>5.1}%",
            row.name,
            row.unguarded_insns,
            row.guarded_insns,
            100.0 * row.bloat
        );
    }
    println!("  median {:.1}%  mean {:.1}%", 100.0 * bloat.median, 100.0 * bloat.mean);

    let configs = if sweep { default_sweep() } else { vec![configured_cost()?] };
    let overheads = measure_overheads(&entries, &configs).map_err(|e| e.to_string())?;
    println!("cycle overhead (instrumented / plain):");
    for point in &overheads.points {
        println!("  {}:", describe_cost(&point.cost));
        for row in &point.rows {
            let rate = match row.cache_hit_rate {
                Some(r) => format!("  hit rate {:>5.1}%", 100.0 * r),
                None => String::new(),
            };
            println!(
                "    {:<20} {:>5.2}x  header reads {:>6}  reg hits {:>6}{rate}",
                row.name, row.ratio, row.header_reads, row.header_reg_hits
            );
        }
        println!("    mean {:.2}x", point.mean_ratio);
    }

    if sweep && !locality_is_monotone(&overheads.points) {
        println!("FAIL: enabling the cache increased an overhead ratio");
        return Ok(EXPECTATION_FAILED);
    }
    Ok(0)
}

fn describe_cost(cost: &CostModel) -> String {
    let mut s = String::new();
    match cost.cache.enabled {
        true => {
            let _ = write!(s, "cache {}B/{}B", cost.cache.size, cost.cache.line);
        }
        false => s.push_str("cache off"),
    }
    let _ = write!(s, ", store buffer {}", cost.storebuf.capacity);
    let _ = write!(s, ", header registers {}", if cost.headerregs.enabled { "on" } else { "off" });
    s
}

/// Within each header-register setting, no cached point may show a higher
/// per-entry ratio than the uncached baseline.
fn locality_is_monotone(points: &[OverheadPoint]) -> bool {
    for hregs in [false, true] {
        let Some(baseline) =
            points.iter().find(|p| p.cost.headerregs.enabled == hregs && !p.cost.cache.enabled)
        else {
            continue;
        };
        for point in
            points.iter().filter(|p| p.cost.headerregs.enabled == hregs && p.cost.cache.enabled)
        {
            for (row, base) in point.rows.iter().zip(&baseline.rows) {
                assert_eq!(row.name, base.name, "sweep rows share entry order");
                if row.ratio > base.ratio + 1e-9 {
                    return false;
                }
            }
        }
    }
    true
}
