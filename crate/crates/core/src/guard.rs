//! The hardware protection check applied to every load and store while the
//! guard is armed.
//!
//! Each protected object carries a three-word header immediately below its
//! storage. For an object whose first data word sits at `B`:
//!
//! ```text
//! B - 12   magic  — holds its own address, B - 12
//! B -  8   base   — holds B - 1
//! B -  4   bound  — holds B + size_in_bytes
//! B ...    data
//! ```
//!
//! The magic word is self-describing: the probability that an arbitrary
//! word of program data happens to equal its own address is what makes the
//! scheme probabilistic rather than absolute. Storing `B - 1` and
//! `B + size` lets the hardware use strict comparisons: an access at
//! effective address `ea` with base register pointing at `B` is legal iff
//!
//! ```text
//! mem[B-12] == B-12   and   mem[B-8] < ea   and   mem[B-4] > ea
//! ```
//!
//! evaluated in exactly that order with unsigned comparisons. The order
//! matters for cost: a failed magic check consults one header word, a
//! below-base failure two, everything else three. Checks apply only when
//! the guard-enable flag is set and the header-write-enable flag is clear;
//! the latter is how the compiler's prologue writes the headers without
//! tripping over itself.

use crate::machine::{Memory, SprFlags};

pub use crate::machine::MismatchReason;

/// Byte distance from an object's first data word down to its magic word.
pub const HEADER_SIZE: u32 = 12;

/// Where the three header words of an object based at `object_base` live.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct HeaderAddresses {
    pub magic: u32,
    pub base: u32,
    pub bound: u32,
}

/// The three header *values* as fetched from memory.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct HeaderWords {
    pub magic: u32,
    pub base: u32,
    pub bound: u32,
}

/// Verdict of one check.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum CheckResult {
    Allow,
    Mismatch { reason: MismatchReason, effective_address: u32 },
}

impl CheckResult {
    pub fn is_allow(self) -> bool {
        matches!(self, CheckResult::Allow)
    }
}

/// Derive header addresses from an object base, wrapping at zero.
///
/// The subtraction wraps so the *check itself* is total; an object based
/// below 12 simply finds its header at the top of the address space and
/// (in any real layout) fails the magic comparison there.
pub fn header_addresses(object_base: u32) -> HeaderAddresses {
    HeaderAddresses {
        magic: object_base.wrapping_sub(12),
        base: object_base.wrapping_sub(8),
        bound: object_base.wrapping_sub(4),
    }
}

/// Compose the header words the compiler must store for an object of
/// `size` bytes based at `object_base`. Inverse of what [`evaluate`]
/// consumes: with these words in place, exactly the aligned addresses in
/// `[object_base, object_base + size - 4]` pass.
pub fn header_words_for(object_base: u32, size: u32) -> HeaderWords {
    HeaderWords {
        magic: object_base.wrapping_sub(12),
        base: object_base.wrapping_sub(1),
        bound: object_base.wrapping_add(size),
    }
}

/// The pure comparison chain, applied to already-fetched header words.
pub fn evaluate(addrs: HeaderAddresses, words: HeaderWords, ea: u32) -> CheckResult {
    let reason = if words.magic != addrs.magic {
        MismatchReason::BadMagic
    } else if words.base >= ea {
        MismatchReason::BelowBase
    } else if words.bound <= ea {
        MismatchReason::AboveBound
    } else {
        return CheckResult::Allow;
    };
    CheckResult::Mismatch { reason, effective_address: ea }
}

/// Full check against live memory, honoring the flag bits: inactive guard
/// (enable clear, or header-write-enable set) allows everything without
/// touching memory. Header words are fetched lazily in comparison order;
/// [`header_read_count`] reports how many a given verdict consumed.
pub fn check_access(mem: &Memory, spr: SprFlags, object_base: u32, ea: u32) -> CheckResult {
    if !spr.guard_active() {
        return CheckResult::Allow;
    }
    let addrs = header_addresses(object_base);
    if mem.load_word(addrs.magic) != addrs.magic {
        return CheckResult::Mismatch { reason: MismatchReason::BadMagic, effective_address: ea };
    }
    if mem.load_word(addrs.base) >= ea {
        return CheckResult::Mismatch { reason: MismatchReason::BelowBase, effective_address: ea };
    }
    if mem.load_word(addrs.bound) <= ea {
        return CheckResult::Mismatch { reason: MismatchReason::AboveBound, effective_address: ea };
    }
    CheckResult::Allow
}

/// How many header words an *active* check with this verdict fetched.
/// The chain short-circuits: bad magic stops after one word, below-base
/// after two; above-bound and allow both consult all three.
pub fn header_read_count(result: CheckResult) -> u32 {
    match result {
        CheckResult::Mismatch { reason: MismatchReason::BadMagic, .. } => 1,
        CheckResult::Mismatch { reason: MismatchReason::BelowBase, .. } => 2,
        _ => 3,
    }
}

/// Write an object's header into memory (what the compiler's prologue
/// stores do one word at a time).
pub fn install_header(mem: &mut Memory, object_base: u32, size: u32) {
    let addrs = header_addresses(object_base);
    let words = header_words_for(object_base, size);
    mem.store_word(addrs.magic, words.magic);
    mem.store_word(addrs.base, words.base);
    mem.store_word(addrs.bound, words.bound);
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn active() -> SprFlags {
        SprFlags { geb: true, phwe: false }
    }

    #[test]
    fn header_addresses_sit_directly_below_the_object() {
        let a = header_addresses(0x8001_2350);
        assert_eq!(a.magic, 0x8001_2344);
        assert_eq!(a.base, 0x8001_2348);
        assert_eq!(a.bound, 0x8001_234c);
    }

    #[test]
    fn magic_word_holds_its_own_address() {
        // An object based at 0x8001234c keeps its magic at 0x80012340, and
        // the value stored there is that same address.
        let words = header_words_for(0x8001_234c, 16);
        assert_eq!(words.magic, 0x8001_2340);
    }

    #[test]
    fn installed_header_admits_exactly_the_object_words() {
        let base = 0x0000_9000;
        let size = 24; // six words
        let mut mem = Memory::new();
        install_header(&mut mem, base, size);

        for word in 0..6 {
            let ea = base + 4 * word;
            assert!(check_access(&mem, active(), base, ea).is_allow(), "word {word}");
        }
        assert_eq!(
            check_access(&mem, active(), base, base.wrapping_sub(4)),
            CheckResult::Mismatch {
                reason: MismatchReason::BelowBase,
                effective_address: base - 4
            }
        );
        assert_eq!(
            check_access(&mem, active(), base, base + size),
            CheckResult::Mismatch {
                reason: MismatchReason::AboveBound,
                effective_address: base + size
            }
        );
    }

    #[test]
    fn missing_header_fails_on_magic_after_one_read() {
        let mem = Memory::new(); // all zeros: no header anywhere
        let verdict = check_access(&mem, active(), 0x4000, 0x4000);
        assert_eq!(
            verdict,
            CheckResult::Mismatch { reason: MismatchReason::BadMagic, effective_address: 0x4000 }
        );
        assert_eq!(header_read_count(verdict), 1);
    }

    #[test]
    fn read_counts_follow_the_short_circuit() {
        let base = 0x6000;
        let mut mem = Memory::new();
        install_header(&mut mem, base, 8);
        let allow = check_access(&mem, active(), base, base);
        let above = check_access(&mem, active(), base, base + 8);
        let below = check_access(&mem, active(), base, base - 4);
        assert_eq!(header_read_count(allow), 3);
        assert_eq!(header_read_count(above), 3);
        assert_eq!(header_read_count(below), 2);
    }

    #[test]
    fn inactive_flags_allow_without_reading_memory() {
        let mem = Memory::new();
        for spr in [
            SprFlags { geb: false, phwe: false },
            SprFlags { geb: false, phwe: true },
            SprFlags { geb: true, phwe: true }, // header-write window
        ] {
            assert!(check_access(&mem, spr, 0x4000, 0x4000).is_allow());
        }
    }

    #[test]
    fn zero_sized_object_admits_nothing() {
        let base = 0x7000;
        let mut mem = Memory::new();
        install_header(&mut mem, base, 0);
        // bound == base, so even the base address is above the bound.
        assert_eq!(
            check_access(&mem, active(), base, base),
            CheckResult::Mismatch { reason: MismatchReason::AboveBound, effective_address: base }
        );
    }

    proptest! {
        /// For any placement and size, the installed header admits an
        /// aligned address iff it falls inside the object. (Bases are kept
        /// away from the wrapping edges of the address space; the compiler
        /// never places objects there.)
        #[test]
        fn admission_matches_object_extent(
            base_word in 4u32..1 << 20,
            size_words in 0u32..64,
            probe_word in 0u32..1 << 21,
        ) {
            let base = base_word * 4;
            let size = size_words * 4;
            let ea = probe_word * 4;
            let mut mem = Memory::new();
            install_header(&mut mem, base, size);
            let inside = ea >= base && ea < base + size;
            prop_assert_eq!(check_access(&mem, active(), base, ea).is_allow(), inside);
        }

        /// evaluate() and check_access() agree when the header words come
        /// from memory.
        #[test]
        fn evaluate_agrees_with_fetching(
            base_word in 4u32..1 << 20,
            size_words in 0u32..64,
            probe in any::<u32>(),
        ) {
            let base = base_word * 4;
            let mut mem = Memory::new();
            install_header(&mut mem, base, size_words * 4);
            let addrs = header_addresses(base);
            let words = HeaderWords {
                magic: mem.load_word(addrs.magic),
                base: mem.load_word(addrs.base),
                bound: mem.load_word(addrs.bound),
            };
            prop_assert_eq!(
                evaluate(addrs, words, probe),
                check_access(&mem, active(), base, probe)
            );
        }
    }
}
