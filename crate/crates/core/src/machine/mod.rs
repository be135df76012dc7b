//! The target machine: a word-addressed 32-bit load/store ISA.
//!
//! Thirty-two general registers, a program counter, two special-purpose flag
//! bits, and a sparse byte-addressed memory. Instructions are fixed 32-bit
//! words, stored big-endian. Only whole words move between registers and
//! memory, and data accesses must be 4-byte aligned.
//!
//! Register conventions (enforced by the compiler, not the hardware, except
//! for `r0` which reads as zero):
//!
//! | register | role |
//! |----------|------|
//! | `r0`     | constant zero |
//! | `r1`     | stack pointer (grows downward) |
//! | `r2`     | frame scalar-block base |
//! | `r3`-`r8`| argument registers |
//! | `r9`     | link register (written by `jal`) |
//! | `r11`    | return / exit value |

mod image;
mod insn;
mod state;

pub use image::{ImageError, ProgramImage, DEFAULT_STACK_TOP};
pub use insn::{
    effective_address, imm16, AluOp, BranchCond, DecodeError, EncodeError, Instruction, Reg,
};
pub use state::{
    MachineState, Memory, MismatchReason, SprFlags, TrapKind, TrapRecord, SPR_BIT_GEB, SPR_BIT_PHWE,
};
