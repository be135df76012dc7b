//! Execution tracing.

use std::fmt;
use std::io::Write;

use crate::guard::CheckResult;
use crate::machine::Instruction;

/// Events the engine emits as it runs. `Check` fires for every guard
/// validation (before the verdict is acted on), `Retired` for every
/// instruction that completes.
#[derive(Clone, Copy, Debug)]
pub enum TraceEvent {
    Retired {
        pc: u32,
        insn: Instruction,
    },
    Check {
        pc: u32,
        object_base: u32,
        effective_address: u32,
        /// Header words fetched from memory for this check (0 on a
        /// header-register hit, otherwise what the short-circuit consumed).
        header_reads: u32,
        verdict: CheckResult,
    },
}

impl fmt::Display for TraceEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TraceEvent::Retired { pc, insn } => write!(f, "{pc:#010x}  {insn}"),
            TraceEvent::Check { pc, object_base, effective_address, header_reads, verdict } => {
                write!(
                    f,
                    "{pc:#010x}  check base={object_base:#010x} ea={effective_address:#010x} \
                     reads={header_reads} verdict={}",
                    match verdict {
                        CheckResult::Allow => "allow".to_string(),
                        CheckResult::Mismatch { reason, .. } => format!("mismatch:{reason}"),
                    }
                )
            }
        }
    }
}

pub trait TraceSink {
    fn event(&mut self, ev: &TraceEvent);
}

/// Discards everything; the default sink.
pub struct NullTrace;

impl TraceSink for NullTrace {
    fn event(&mut self, _ev: &TraceEvent) {}
}

/// Collects events for inspection (handy in tests).
impl TraceSink for Vec<TraceEvent> {
    fn event(&mut self, ev: &TraceEvent) {
        self.push(*ev);
    }
}

/// Writes one line per event.
pub struct WriteTrace<W: Write>(pub W);

impl<W: Write> TraceSink for WriteTrace<W> {
    fn event(&mut self, ev: &TraceEvent) {
        // Tracing is best-effort; a full pipe should not crash the run.
        let _ = writeln!(self.0, "{ev}");
    }
}
