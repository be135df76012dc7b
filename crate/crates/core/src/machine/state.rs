//! Architectural state: registers, flags, memory, and trap records.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::Reg;

/// Flag bit arming the guard: checks apply only while set.
pub const SPR_BIT_GEB: u8 = 17;
/// Flag bit suspending the guard so headers themselves can be written.
pub const SPR_BIT_PHWE: u8 = 18;

/// The two special-purpose flag bits the guard hardware consumes.
#[derive(Clone, Copy, Default, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct SprFlags {
    /// Guard-enable: when set, loads and stores are checked.
    pub geb: bool,
    /// Header-write-enable: when set, checking is suspended so trusted code
    /// can populate the protection headers themselves.
    pub phwe: bool,
}

impl SprFlags {
    /// True when accesses are actually validated.
    pub fn guard_active(self) -> bool {
        self.geb && !self.phwe
    }
}

const PAGE_SHIFT: u32 = 12;
const PAGE_SIZE: usize = 1 << PAGE_SHIFT;

/// Sparse byte-addressed memory over the full 32-bit space.
///
/// Pages materialize on first write; unwritten memory reads as zero. Words
/// are big-endian. `load_word`/`store_word` accept any byte address — the
/// simulator enforces alignment before memory is touched, so alignment is a
/// policy of the pipeline, not of the storage.
#[derive(Clone, Default)]
pub struct Memory {
    pages: HashMap<u32, Box<[u8; PAGE_SIZE]>>,
}

impl Memory {
    pub fn new() -> Memory {
        Memory::default()
    }

    fn byte(&self, addr: u32) -> u8 {
        match self.pages.get(&(addr >> PAGE_SHIFT)) {
            Some(page) => page[(addr as usize) & (PAGE_SIZE - 1)],
            None => 0,
        }
    }

    fn set_byte(&mut self, addr: u32, value: u8) {
        let page = self.pages.entry(addr >> PAGE_SHIFT).or_insert_with(|| Box::new([0; PAGE_SIZE]));
        page[(addr as usize) & (PAGE_SIZE - 1)] = value;
    }

    pub fn load_word(&self, addr: u32) -> u32 {
        let mut word = 0u32;
        for i in 0..4 {
            word = (word << 8) | u32::from(self.byte(addr.wrapping_add(i)));
        }
        word
    }

    pub fn store_word(&mut self, addr: u32, value: u32) {
        for (i, byte) in value.to_be_bytes().into_iter().enumerate() {
            self.set_byte(addr.wrapping_add(i as u32), byte);
        }
    }

    /// Canonical image of every nonzero word, keyed by aligned address.
    /// Two memories with the same observable contents compare equal here
    /// even if one allocated pages that only ever held zeros.
    pub fn nonzero_words(&self) -> BTreeMap<u32, u32> {
        let mut words = BTreeMap::new();
        for (&page_no, page) in &self.pages {
            for (i, chunk) in page.chunks_exact(4).enumerate() {
                let word = u32::from_be_bytes(chunk.try_into().unwrap());
                if word != 0 {
                    words.insert((page_no << PAGE_SHIFT) + (i as u32) * 4, word);
                }
            }
        }
        words
    }
}

impl fmt::Debug for Memory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Memory({} pages)", self.pages.len())
    }
}

/// Why a checked access was refused, in the order the header words are
/// consulted.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MismatchReason {
    /// The word below the presumed header did not contain its own address.
    BadMagic,
    /// The effective address was not strictly above the stored base word.
    BelowBase,
    /// The effective address was not strictly below the stored bound word.
    AboveBound,
}

impl fmt::Display for MismatchReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MismatchReason::BadMagic => "bad-magic",
            MismatchReason::BelowBase => "below-base",
            MismatchReason::AboveBound => "above-bound",
        })
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrapKind {
    /// The guard refused a load or store.
    Mismatch(MismatchReason),
    /// The fetched word does not decode.
    Decode,
    /// A data address or jump target was not word-aligned.
    Alignment,
}

impl fmt::Display for TrapKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TrapKind::Mismatch(reason) => write!(f, "mismatch:{reason}"),
            TrapKind::Decode => f.write_str("decode"),
            TrapKind::Alignment => f.write_str("alignment"),
        }
    }
}

/// A precise trap: `pc` is the faulting instruction, and no architectural
/// effect of that instruction has been committed.
#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct TrapRecord {
    pub kind: TrapKind,
    pub pc: u32,
    pub effective_address: u32,
    /// Human-readable diagnosis; for mismatches this includes the object
    /// base, the derived header addresses, and the stored header words.
    pub detail: String,
}

impl fmt::Display for TrapRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "trap {} at pc={:#010x} ea={:#010x}: {}",
            self.kind, self.pc, self.effective_address, self.detail
        )
    }
}

/// Full architectural state of one hardware context.
#[derive(Clone, Debug)]
pub struct MachineState {
    regs: [u32; 32],
    pub pc: u32,
    pub spr: SprFlags,
    pub mem: Memory,
    /// Cycles consumed so far under the cost model (architecturally inert).
    pub cycles: u64,
    /// Instructions that entered execution, including one that trapped.
    pub instructions: u64,
    pub trap: Option<TrapRecord>,
}

impl MachineState {
    pub fn new() -> MachineState {
        MachineState {
            regs: [0; 32],
            pc: 0,
            spr: SprFlags::default(),
            mem: Memory::new(),
            cycles: 0,
            instructions: 0,
            trap: None,
        }
    }

    /// Read a register; `r0` always reads zero.
    pub fn reg(&self, r: Reg) -> u32 {
        if r == Reg::ZERO {
            0
        } else {
            self.regs[r.index()]
        }
    }

    /// Write a register; writes to `r0` are discarded.
    pub fn set_reg(&mut self, r: Reg, value: u32) {
        if r != Reg::ZERO {
            self.regs[r.index()] = value;
        }
    }

    /// The program's result by convention: `r11` at halt.
    pub fn exit_value(&self) -> u32 {
        self.reg(Reg::RET)
    }

    /// Registers `r1..r31` as a slice-compatible snapshot (for differential
    /// comparison; `r0` is omitted because it is not state).
    pub fn reg_file(&self) -> [u32; 31] {
        let mut out = [0; 31];
        out.copy_from_slice(&self.regs[1..]);
        out
    }
}

impl Default for MachineState {
    fn default() -> Self {
        Self::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn r0_reads_zero_and_ignores_writes() {
        let mut st = MachineState::new();
        st.set_reg(Reg::ZERO, 0xdead_beef);
        assert_eq!(st.reg(Reg::ZERO), 0);
        st.set_reg(Reg::r(7), 42);
        assert_eq!(st.reg(Reg::r(7)), 42);
    }

    #[test]
    fn memory_is_zero_until_written_and_big_endian() {
        let mut mem = Memory::new();
        assert_eq!(mem.load_word(0x1234_5678 & !3), 0);
        mem.store_word(0x100, 0x0102_0304);
        assert_eq!(mem.load_word(0x100), 0x0102_0304);
        // Big-endian byte order: most significant byte at the low address.
        assert_eq!(mem.load_word(0x101), 0x0203_0400);
    }

    #[test]
    fn memory_wraps_at_the_top_of_the_address_space() {
        let mut mem = Memory::new();
        mem.store_word(0xffff_fffe, 0xaabb_ccdd);
        assert_eq!(mem.byte(0xffff_fffe), 0xaa);
        assert_eq!(mem.byte(0xffff_ffff), 0xbb);
        assert_eq!(mem.byte(0x0000_0000), 0xcc);
        assert_eq!(mem.byte(0x0000_0001), 0xdd);
    }

    #[test]
    fn nonzero_words_ignores_pages_of_zeros() {
        let mut a = Memory::new();
        let mut b = Memory::new();
        a.store_word(0x2000, 5);
        a.store_word(0x3000, 0); // allocates a page, stores nothing visible
        b.store_word(0x2000, 5);
        assert_eq!(a.nonzero_words(), b.nonzero_words());
        assert_eq!(a.nonzero_words(), BTreeMap::from([(0x2000, 5)]));
    }
}
