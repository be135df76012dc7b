//! Round-robin multiprogramming over one set of guard hardware.
//!
//! Processes have private architectural state (registers, memory, pc) but
//! share the physical flag bits, the cache, and the header registers —
//! exactly the sharing that makes the guard an operating-system concern.
//! The scheduler models the OS choice with `save_flags`: when true, the
//! flag bits are saved and restored around every slice (correct kernels do
//! this); when false, each process inherits whatever flag state the
//! previous one left behind, and guarded programs break in observable ways
//! — a process preempted inside its header-population window leaks
//! header-write-enable into its neighbor, or has the window slammed shut
//! under its feet.
//!
//! Header registers are invalidated at every switch regardless: they name
//! addresses in the outgoing process's address space.

use crate::machine::{MachineState, ProgramImage, SprFlags};
use crate::memsys::{ConfigError, CostModel, MemStats, MemorySystem};

use super::{boot, outcome_of, step, NullTrace, RunOutcome, RunStatus, StepResult};

#[derive(Clone, Copy, Debug)]
pub struct SchedulerConfig {
    /// Instructions per slice; 1 preempts between every two instructions.
    pub quantum: u64,
    /// Save and restore the flag bits across switches.
    pub save_flags: bool,
    /// Per-process instruction budget.
    pub max_instructions: u64,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        SchedulerConfig {
            quantum: 64,
            save_flags: true,
            max_instructions: super::DEFAULT_MAX_INSTRUCTIONS,
        }
    }
}

pub struct Process {
    pub name: String,
    state: MachineState,
    saved_flags: SprFlags,
    stats: MemStats,
    status: Option<RunStatus>,
}

#[derive(Clone, Debug)]
pub struct ProcessOutcome {
    pub name: String,
    pub outcome: RunOutcome,
}

pub struct Scheduler {
    procs: Vec<Process>,
    memsys: MemorySystem,
    cfg: SchedulerConfig,
    /// The one physical copy of the flag bits.
    live_flags: SprFlags,
}

impl Scheduler {
    pub fn new(
        images: &[(String, ProgramImage)],
        cost: CostModel,
        cfg: SchedulerConfig,
    ) -> Result<Scheduler, ConfigError> {
        assert!(cfg.quantum >= 1, "a zero quantum never runs anything");
        Ok(Scheduler {
            procs: images
                .iter()
                .map(|(name, image)| Process {
                    name: name.clone(),
                    state: boot(image),
                    saved_flags: SprFlags::default(),
                    stats: MemStats::default(),
                    status: None,
                })
                .collect(),
            memsys: MemorySystem::new(cost)?,
            cfg,
            live_flags: SprFlags::default(),
        })
    }

    /// Give one process one slice. Returns its status if it finished.
    fn run_slice(&mut self, index: usize) -> Option<RunStatus> {
        let proc = &mut self.procs[index];
        // Switch in: the physical flags become whatever this process is
        // entitled to see.
        proc.state.spr = if self.cfg.save_flags { proc.saved_flags } else { self.live_flags };
        self.memsys.invalidate_header_regs();
        let before = self.memsys.stats;

        let mut finished = None;
        for _ in 0..self.cfg.quantum {
            if proc.state.instructions >= self.cfg.max_instructions {
                finished = Some(RunStatus::LimitExceeded);
                break;
            }
            match step(&mut proc.state, &mut self.memsys, &mut NullTrace) {
                StepResult::Running => {}
                StepResult::Halted => {
                    finished = Some(RunStatus::Completed);
                    break;
                }
                StepResult::Trapped => {
                    finished = Some(RunStatus::Trapped);
                    break;
                }
            }
        }

        // Switch out.
        proc.stats = proc.stats.plus(&self.memsys.stats.since(&before));
        self.live_flags = proc.state.spr;
        if self.cfg.save_flags {
            proc.saved_flags = proc.state.spr;
        }
        proc.status = finished;
        finished
    }

    /// Round-robin every process to completion.
    pub fn run(mut self) -> Vec<ProcessOutcome> {
        loop {
            let mut any_live = false;
            for i in 0..self.procs.len() {
                if self.procs[i].status.is_none() {
                    any_live = true;
                    self.run_slice(i);
                }
            }
            if !any_live {
                break;
            }
        }
        self.procs
            .into_iter()
            .map(|p| ProcessOutcome {
                name: p.name,
                outcome: outcome_of(&p.state, &p.stats, p.status.unwrap()),
            })
            .collect()
    }
}
