//! Fetch–decode–execute engine with guard enforcement and the cycle cost
//! model.
//!
//! Each retired instruction costs one base cycle plus whatever the memory
//! system charges for its data and header traffic, so for any run
//! `cycles == instructions + mem_cycles` exactly. Instruction fetch is not
//! priced (an ideal instruction path); only data and header accesses go
//! through [`MemorySystem`].
//!
//! Traps are precise: the faulting instruction commits nothing — a refused
//! store does not write, a refused load does not touch its destination
//! register, and `pc` still names the faulting instruction. The trapped
//! instruction does count toward the instruction and cycle totals (it
//! occupied the pipeline, and its header reads happened).

mod sched;
mod trace;

pub use sched::{Process, ProcessOutcome, Scheduler, SchedulerConfig};
pub use trace::{NullTrace, TraceEvent, TraceSink, WriteTrace};

use serde::{Deserialize, Serialize};

use crate::guard::{self, header_addresses, CheckResult};
use crate::machine::{
    effective_address, Instruction, MachineState, ProgramImage, Reg, TrapKind, TrapRecord,
    SPR_BIT_GEB,
};
use crate::memsys::{ConfigError, CostModel, MemStats, MemorySystem};

/// Cycles every instruction costs before memory traffic.
pub const BASE_CYCLES: u64 = 1;

/// Default ceiling on executed instructions, so runaway programs (wild
/// jumps that land in a loop of zero words) terminate.
pub const DEFAULT_MAX_INSTRUCTIONS: u64 = 10_000_000;

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum StepResult {
    Running,
    Halted,
    Trapped,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunStatus {
    Completed,
    Trapped,
    LimitExceeded,
}

impl std::fmt::Display for RunStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            RunStatus::Completed => "completed",
            RunStatus::Trapped => "trapped",
            RunStatus::LimitExceeded => "limit-exceeded",
        })
    }
}

/// Everything a finished (or stopped) run reports.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunOutcome {
    pub status: RunStatus,
    pub trap: Option<TrapRecord>,
    /// `r11` at the end, meaningful when status is `Completed`.
    pub exit_value: u32,
    pub instructions: u64,
    pub cycles: u64,
    pub stats: MemStats,
}

#[derive(Clone, Copy, Debug)]
pub struct RunConfig {
    pub cost: CostModel,
    pub max_instructions: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig { cost: CostModel::default(), max_instructions: DEFAULT_MAX_INSTRUCTIONS }
    }
}

/// Fresh machine with the image loaded, pc at the entry point, and the
/// stack pointer initialized.
pub fn boot(image: &ProgramImage) -> MachineState {
    let mut state = MachineState::new();
    image.load_into(&mut state.mem);
    state.pc = image.entry;
    state.set_reg(Reg::SP, image.initial_sp);
    state
}

fn trap(state: &mut MachineState, kind: TrapKind, ea: u32, detail: String) -> StepResult {
    state.trap = Some(TrapRecord { kind, pc: state.pc, effective_address: ea, detail });
    StepResult::Trapped
}

/// Validate one access while the guard is armed. Returns the cycles spent
/// on header words (charged whether or not the access was allowed) and the
/// trap record for a refused one.
fn guarded_check(
    state: &MachineState,
    memsys: &mut MemorySystem,
    trace: &mut dyn TraceSink,
    object_base: u32,
    ea: u32,
) -> (u64, Option<TrapRecord>) {
    let addrs = header_addresses(object_base);
    let (verdict, reads, cycles) = if memsys.headerregs_enabled() {
        let lookup = memsys.header_lookup(object_base, |a| state.mem.load_word(a));
        (guard::evaluate(addrs, lookup.words, ea), lookup.reads, lookup.cycles)
    } else {
        // No header registers: fetch lazily, paying only for the words the
        // short-circuit actually consulted.
        let verdict = guard::check_access(&state.mem, state.spr, object_base, ea);
        let reads = guard::header_read_count(verdict);
        let mut cycles = 0;
        for addr in [addrs.magic, addrs.base, addrs.bound].into_iter().take(reads as usize) {
            cycles += memsys.header_read(addr);
        }
        (verdict, reads, cycles)
    };
    trace.event(&TraceEvent::Check {
        pc: state.pc,
        object_base,
        effective_address: ea,
        header_reads: reads,
        verdict,
    });
    match verdict {
        CheckResult::Allow => {
            memsys.stats.checks_allowed += 1;
            (cycles, None)
        }
        CheckResult::Mismatch { reason, effective_address } => {
            memsys.stats.checks_mismatched += 1;
            let detail = format!(
                "object base {:#010x}: magic[{:#010x}]={:#010x} base[{:#010x}]={:#010x} \
                 bound[{:#010x}]={:#010x}",
                object_base,
                addrs.magic,
                state.mem.load_word(addrs.magic),
                addrs.base,
                state.mem.load_word(addrs.base),
                addrs.bound,
                state.mem.load_word(addrs.bound),
            );
            let record = TrapRecord {
                kind: TrapKind::Mismatch(reason),
                pc: state.pc,
                effective_address,
                detail,
            };
            (cycles, Some(record))
        }
    }
}

/// Execute one instruction.
pub fn step(
    state: &mut MachineState,
    memsys: &mut MemorySystem,
    trace: &mut dyn TraceSink,
) -> StepResult {
    if state.trap.is_some() {
        return StepResult::Trapped;
    }
    let pc = state.pc;
    if !pc.is_multiple_of(4) {
        return trap(state, TrapKind::Alignment, pc, "pc is not word-aligned".into());
    }
    let word = state.mem.load_word(pc);
    let insn = match Instruction::decode(word) {
        Ok(insn) => insn,
        Err(e) => return trap(state, TrapKind::Decode, pc, e.to_string()),
    };

    state.instructions += 1;
    let mut mem_cycles = 0u64;
    let mut next_pc = pc.wrapping_add(4);
    let mut halted = false;

    // Resolve loads and stores to (object_base, ea, Option<store value>, rd).
    let access = match insn {
        Instruction::Load { rd, ra, imm } => {
            Some((state.reg(ra), effective_address(state.reg(ra), imm), None, Some(rd)))
        }
        Instruction::LoadIdx { rd, ra, rx } => {
            let base = state.reg(ra);
            Some((base, base.wrapping_add(state.reg(rx)), None, Some(rd)))
        }
        Instruction::Store { ra, imm, rb } => {
            Some((state.reg(ra), effective_address(state.reg(ra), imm), Some(state.reg(rb)), None))
        }
        Instruction::StoreIdx { ra, rx, rb } => {
            let base = state.reg(ra);
            Some((base, base.wrapping_add(state.reg(rx)), Some(state.reg(rb)), None))
        }
        _ => None,
    };

    if let Some((object_base, ea, store_value, rd)) = access {
        if ea % 4 != 0 {
            return trap(
                state,
                TrapKind::Alignment,
                ea,
                format!("data address {ea:#010x} is not word-aligned"),
            );
        }
        if state.spr.guard_active() {
            let (cycles, refused) = guarded_check(state, memsys, trace, object_base, ea);
            mem_cycles += cycles;
            if let Some(record) = refused {
                // The refused access commits nothing, but the instruction
                // itself retires into the counts along with the header
                // reads it performed.
                state.cycles += BASE_CYCLES + mem_cycles;
                memsys.tick(BASE_CYCLES + mem_cycles);
                state.trap = Some(record);
                return StepResult::Trapped;
            }
        }
        match store_value {
            Some(value) => {
                state.mem.store_word(ea, value);
                mem_cycles += memsys.data_write(ea);
            }
            None => {
                let value = state.mem.load_word(ea);
                mem_cycles += memsys.data_read(ea);
                state.set_reg(rd.unwrap(), value);
            }
        }
    } else {
        match insn {
            Instruction::Alu { op, rd, ra, rb } => {
                let v = op.apply(state.reg(ra), state.reg(rb));
                state.set_reg(rd, v);
            }
            Instruction::AluImm { op, rd, ra, imm } => {
                let v = op.apply_imm(state.reg(ra), imm);
                state.set_reg(rd, v);
            }
            Instruction::Mtspr { bit, value } => match bit {
                SPR_BIT_GEB => state.spr.geb = value,
                _ => state.spr.phwe = value,
            },
            Instruction::Mfspr { rd, bit } => {
                let v = match bit {
                    SPR_BIT_GEB => state.spr.geb,
                    _ => state.spr.phwe,
                };
                state.set_reg(rd, u32::from(v));
            }
            Instruction::Branch { cond, ra, rb, offset } => {
                if cond.holds(state.reg(ra), state.reg(rb)) {
                    next_pc = effective_address(pc.wrapping_add(4), offset.wrapping_mul(4));
                }
            }
            Instruction::Jal { target } => {
                state.set_reg(Reg::LINK, pc.wrapping_add(4));
                next_pc = target.wrapping_mul(4);
            }
            Instruction::Jalr { ra } => next_pc = state.reg(ra),
            Instruction::Halt => halted = true,
            _ => unreachable!("memory forms handled above"),
        }
    }

    state.cycles += BASE_CYCLES + mem_cycles;
    memsys.tick(BASE_CYCLES + mem_cycles);
    trace.event(&TraceEvent::Retired { pc, insn });
    if halted {
        StepResult::Halted
    } else {
        state.pc = next_pc;
        StepResult::Running
    }
}

/// Run a booted machine to completion (halt, trap, or instruction limit).
pub fn run_machine(
    state: &mut MachineState,
    memsys: &mut MemorySystem,
    max_instructions: u64,
    trace: &mut dyn TraceSink,
) -> RunStatus {
    loop {
        if state.instructions >= max_instructions {
            return RunStatus::LimitExceeded;
        }
        match step(state, memsys, trace) {
            StepResult::Running => {}
            StepResult::Halted => return RunStatus::Completed,
            StepResult::Trapped => return RunStatus::Trapped,
        }
    }
}

/// Boot and run an image under the given cost model.
pub fn run_image(
    image: &ProgramImage,
    cfg: &RunConfig,
    trace: &mut dyn TraceSink,
) -> Result<RunOutcome, ConfigError> {
    let mut state = boot(image);
    let mut memsys = MemorySystem::new(cfg.cost)?;
    let status = run_machine(&mut state, &mut memsys, cfg.max_instructions, trace);
    Ok(outcome_of(&state, &memsys.stats, status))
}

pub(crate) fn outcome_of(state: &MachineState, stats: &MemStats, status: RunStatus) -> RunOutcome {
    RunOutcome {
        status,
        trap: state.trap.clone(),
        exit_value: state.exit_value(),
        instructions: state.instructions,
        cycles: state.cycles,
        stats: *stats,
    }
}
