//! Executable model of a hardware/software co-design for spatial memory
//! safety on a small 32-bit load/store machine.
//!
//! Every protected variable gets a three-word *protection header* placed
//! immediately below its storage: a magic word holding its own address, a
//! base word, and a bound word. Hardware (modeled in [`guard`]) validates
//! each load and store against the header derived from the access's base
//! register; the compiler (in [`compiler`]) lays out frames so that every
//! memory operand carries its object base in that register. The [`memsys`]
//! module prices the extra header traffic with a small cache, store-buffer,
//! and header-register model, and [`harness`] runs an exploit/benign corpus
//! differentially with instrumentation on and off.

pub mod compiler;
pub mod guard;
pub mod harness;
pub mod machine;
pub mod memsys;
pub mod simulator;
