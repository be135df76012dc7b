//! Instruction set: encoding, decoding, and effective-address arithmetic.
//!
//! Word layout: bits 31..26 hold the opcode, the rest is format-specific.
//!
//! ```text
//! alu    op=0x00  rd[25:21] ra[20:16] rb[15:11] funct[3:0]
//! alui   0x01-06  rd[25:21] ra[20:16] imm16[15:0]       (addi subi andi ori shli muli)
//! load   0x08     rd[25:21] ra[20:16] imm16[15:0]       rd := mem[ra + sext(imm)]
//! store  0x09     ra[25:21] rb[20:16] imm16[15:0]       mem[ra + sext(imm)] := rb
//! loadx  0x0a     rd[25:21] ra[20:16] rx[15:11]         rd := mem[ra + rx]
//! storex 0x0b     ra[25:21] rx[20:16] rb[15:11]         mem[ra + rx] := rb
//! mtspr  0x0c     bit[20:16] value[0]                   flag[bit] := value
//! mfspr  0x0d     rd[25:21] bit[20:16]                  rd := flag[bit]
//! beq    0x10     ra[25:21] rb[20:16] off16[15:0]       pc := pc+4 + 4*sext(off) if ra == rb
//! bne    0x11     (same fields)                         ... if ra != rb
//! blt    0x12     (same fields)                         ... if ra < rb, signed
//! jal    0x14     target[25:0]                          r9 := pc+4; pc := 4*target
//! jalr   0x15     ra[25:21]                             pc := ra
//! halt   0x3e     (no fields)
//! ```
//!
//! All other opcodes, `alu` funct values above 5, and special-purpose
//! register numbers other than the two guard flags are decode errors. The
//! all-ones word `0xffff_ffff` therefore never decodes, which makes wild
//! jumps into unwritten (zero) or smashed memory fail fast: the zero word
//! decodes as `add r0, r0, r0` but a pc that walks into garbage hits a
//! reserved opcode almost immediately.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A general-purpose register index, guaranteed in `0..32`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Reg(u8);

impl Reg {
    pub const ZERO: Reg = Reg(0);
    pub const SP: Reg = Reg(1);
    pub const FP: Reg = Reg(2);
    pub const LINK: Reg = Reg(9);
    pub const RET: Reg = Reg(11);

    /// Construct from an arbitrary index; `None` if out of range.
    pub fn new(index: u8) -> Option<Reg> {
        (index < 32).then_some(Reg(index))
    }

    /// Construct from a compile-time-known index. Panics above 31.
    pub const fn r(index: u8) -> Reg {
        assert!(index < 32);
        Reg(index)
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    fn from_bits(word: u32, shift: u32) -> Reg {
        Reg(((word >> shift) & 0x1f) as u8)
    }

    fn bits(self, shift: u32) -> u32 {
        u32::from(self.0) << shift
    }
}

impl fmt::Display for Reg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "r{}", self.0)
    }
}

impl fmt::Debug for Reg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "r{}", self.0)
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub enum AluOp {
    Add,
    Sub,
    And,
    Or,
    Shl,
    Mul,
}

impl AluOp {
    const ALL: [AluOp; 6] = [AluOp::Add, AluOp::Sub, AluOp::And, AluOp::Or, AluOp::Shl, AluOp::Mul];

    fn funct(self) -> u32 {
        self as u32
    }

    pub(crate) fn mnemonic(self) -> &'static str {
        match self {
            AluOp::Add => "add",
            AluOp::Sub => "sub",
            AluOp::And => "and",
            AluOp::Or => "or",
            AluOp::Shl => "shl",
            AluOp::Mul => "mul",
        }
    }

    /// Register-register semantics. `shl` uses the low five bits of the
    /// shift amount, everything else wraps.
    pub fn apply(self, a: u32, b: u32) -> u32 {
        match self {
            AluOp::Add => a.wrapping_add(b),
            AluOp::Sub => a.wrapping_sub(b),
            AluOp::And => a & b,
            AluOp::Or => a | b,
            AluOp::Shl => a << (b & 31),
            AluOp::Mul => a.wrapping_mul(b),
        }
    }

    /// Immediate-form semantics: arithmetic ops sign-extend the immediate,
    /// bitwise ops zero-extend it, shifts mask to five bits. The asymmetry
    /// lets `ori` splice low halfwords when materializing 32-bit constants
    /// without the sign bit bleeding upward.
    pub fn apply_imm(self, a: u32, imm: i16) -> u32 {
        match self {
            AluOp::Add | AluOp::Sub | AluOp::Mul => self.apply(a, imm as i32 as u32),
            AluOp::And | AluOp::Or => self.apply(a, u32::from(imm as u16)),
            AluOp::Shl => a << (u32::from(imm as u16) & 31),
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub enum BranchCond {
    Eq,
    Ne,
    Lt,
}

impl BranchCond {
    /// `Lt` compares signed; loop counters and indices are signed ints.
    pub fn holds(self, a: u32, b: u32) -> bool {
        match self {
            BranchCond::Eq => a == b,
            BranchCond::Ne => a != b,
            BranchCond::Lt => (a as i32) < (b as i32),
        }
    }

    pub(crate) fn mnemonic(self) -> &'static str {
        match self {
            BranchCond::Eq => "beq",
            BranchCond::Ne => "bne",
            BranchCond::Lt => "blt",
        }
    }
}

/// One decoded instruction.
///
/// `Load`/`Store` displace by a signed immediate; `LoadIdx`/`StoreIdx`
/// displace by a register. In both forms `ra` is the *base* register, and
/// the protection check (when armed) treats `ra`'s value as the object base
/// from which the header location is derived — so compiled code keeps the
/// raw object address in `ra` and puts all offset arithmetic in the
/// displacement.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub enum Instruction {
    Alu { op: AluOp, rd: Reg, ra: Reg, rb: Reg },
    AluImm { op: AluOp, rd: Reg, ra: Reg, imm: i16 },
    Load { rd: Reg, ra: Reg, imm: i16 },
    Store { ra: Reg, imm: i16, rb: Reg },
    LoadIdx { rd: Reg, ra: Reg, rx: Reg },
    StoreIdx { ra: Reg, rx: Reg, rb: Reg },
    Mtspr { bit: u8, value: bool },
    Mfspr { rd: Reg, bit: u8 },
    Branch { cond: BranchCond, ra: Reg, rb: Reg, offset: i16 },
    Jal { target: u32 },
    Jalr { ra: Reg },
    Halt,
}

const OP_ALU: u32 = 0x00;
const OP_ADDI: u32 = 0x01;
const OP_MULI: u32 = 0x06;
const OP_LOAD: u32 = 0x08;
const OP_STORE: u32 = 0x09;
const OP_LOADX: u32 = 0x0a;
const OP_STOREX: u32 = 0x0b;
const OP_MTSPR: u32 = 0x0c;
const OP_MFSPR: u32 = 0x0d;
const OP_BEQ: u32 = 0x10;
const OP_BLT: u32 = 0x12;
const OP_JAL: u32 = 0x14;
const OP_JALR: u32 = 0x15;
const OP_HALT: u32 = 0x3e;

/// Highest word-index `jal` can name: 26 bits of target.
pub const JAL_TARGET_LIMIT: u32 = 1 << 26;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EncodeError {
    #[error("immediate {0} does not fit in 16 signed bits")]
    ImmediateRange(i64),
    #[error("jal target word {0:#x} does not fit in 26 bits")]
    JalRange(u32),
    #[error("special-purpose register bit {0} is not implemented")]
    BadSprBit(u8),
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("cannot decode word {word:#010x}: {reason}")]
pub struct DecodeError {
    pub word: u32,
    pub reason: &'static str,
}

impl DecodeError {
    fn new(word: u32, reason: &'static str) -> DecodeError {
        DecodeError { word, reason }
    }
}

/// Range-check an assembler-level integer into an instruction immediate.
pub fn imm16(value: i64) -> Result<i16, EncodeError> {
    i16::try_from(value).map_err(|_| EncodeError::ImmediateRange(value))
}

/// Compute a data address: base plus sign-extended displacement, wrapping
/// around the 32-bit space.
pub fn effective_address(base: u32, displacement: i16) -> u32 {
    base.wrapping_add(displacement as i32 as u32)
}

fn spr_bit_ok(bit: u8) -> bool {
    bit == super::SPR_BIT_GEB || bit == super::SPR_BIT_PHWE
}

impl Instruction {
    pub fn encode(self) -> Result<u32, EncodeError> {
        let word = match self {
            Instruction::Alu { op, rd, ra, rb } => {
                rd.bits(21) | ra.bits(16) | rb.bits(11) | op.funct()
            }
            Instruction::AluImm { op, rd, ra, imm } => {
                ((OP_ADDI + op.funct()) << 26) | rd.bits(21) | ra.bits(16) | u32::from(imm as u16)
            }
            Instruction::Load { rd, ra, imm } => {
                (OP_LOAD << 26) | rd.bits(21) | ra.bits(16) | u32::from(imm as u16)
            }
            Instruction::Store { ra, imm, rb } => {
                (OP_STORE << 26) | ra.bits(21) | rb.bits(16) | u32::from(imm as u16)
            }
            Instruction::LoadIdx { rd, ra, rx } => {
                (OP_LOADX << 26) | rd.bits(21) | ra.bits(16) | rx.bits(11)
            }
            Instruction::StoreIdx { ra, rx, rb } => {
                (OP_STOREX << 26) | ra.bits(21) | rx.bits(16) | rb.bits(11)
            }
            Instruction::Mtspr { bit, value } => {
                if !spr_bit_ok(bit) {
                    return Err(EncodeError::BadSprBit(bit));
                }
                (OP_MTSPR << 26) | (u32::from(bit) << 16) | u32::from(value)
            }
            Instruction::Mfspr { rd, bit } => {
                if !spr_bit_ok(bit) {
                    return Err(EncodeError::BadSprBit(bit));
                }
                (OP_MFSPR << 26) | rd.bits(21) | (u32::from(bit) << 16)
            }
            Instruction::Branch { cond, ra, rb, offset } => {
                ((OP_BEQ + cond as u32) << 26)
                    | ra.bits(21)
                    | rb.bits(16)
                    | u32::from(offset as u16)
            }
            Instruction::Jal { target } => {
                if target >= JAL_TARGET_LIMIT {
                    return Err(EncodeError::JalRange(target));
                }
                (OP_JAL << 26) | target
            }
            Instruction::Jalr { ra } => (OP_JALR << 26) | ra.bits(21),
            Instruction::Halt => OP_HALT << 26,
        };
        Ok(word)
    }

    pub fn decode(word: u32) -> Result<Instruction, DecodeError> {
        let opcode = word >> 26;
        let imm = (word & 0xffff) as u16 as i16;
        let insn = match opcode {
            OP_ALU => {
                let funct = word & 0xf;
                let op = *AluOp::ALL
                    .get(funct as usize)
                    .ok_or_else(|| DecodeError::new(word, "reserved alu funct"))?;
                Instruction::Alu {
                    op,
                    rd: Reg::from_bits(word, 21),
                    ra: Reg::from_bits(word, 16),
                    rb: Reg::from_bits(word, 11),
                }
            }
            OP_ADDI..=OP_MULI => Instruction::AluImm {
                op: AluOp::ALL[(opcode - OP_ADDI) as usize],
                rd: Reg::from_bits(word, 21),
                ra: Reg::from_bits(word, 16),
                imm,
            },
            OP_LOAD => Instruction::Load {
                rd: Reg::from_bits(word, 21),
                ra: Reg::from_bits(word, 16),
                imm,
            },
            OP_STORE => Instruction::Store {
                ra: Reg::from_bits(word, 21),
                rb: Reg::from_bits(word, 16),
                imm,
            },
            OP_LOADX => Instruction::LoadIdx {
                rd: Reg::from_bits(word, 21),
                ra: Reg::from_bits(word, 16),
                rx: Reg::from_bits(word, 11),
            },
            OP_STOREX => Instruction::StoreIdx {
                ra: Reg::from_bits(word, 21),
                rx: Reg::from_bits(word, 16),
                rb: Reg::from_bits(word, 11),
            },
            OP_MTSPR => {
                let bit = ((word >> 16) & 0x1f) as u8;
                if !spr_bit_ok(bit) {
                    return Err(DecodeError::new(word, "unimplemented spr bit"));
                }
                Instruction::Mtspr { bit, value: word & 1 != 0 }
            }
            OP_MFSPR => {
                let bit = ((word >> 16) & 0x1f) as u8;
                if !spr_bit_ok(bit) {
                    return Err(DecodeError::new(word, "unimplemented spr bit"));
                }
                Instruction::Mfspr { rd: Reg::from_bits(word, 21), bit }
            }
            OP_BEQ..=OP_BLT => Instruction::Branch {
                cond: [BranchCond::Eq, BranchCond::Ne, BranchCond::Lt][(opcode - OP_BEQ) as usize],
                ra: Reg::from_bits(word, 21),
                rb: Reg::from_bits(word, 16),
                offset: imm,
            },
            OP_JAL => Instruction::Jal { target: word & (JAL_TARGET_LIMIT - 1) },
            OP_JALR => Instruction::Jalr { ra: Reg::from_bits(word, 21) },
            OP_HALT => Instruction::Halt,
            _ => return Err(DecodeError::new(word, "reserved opcode")),
        };
        Ok(insn)
    }
}

impl fmt::Display for Instruction {
    /// Canonical assembly text. Branch offsets and jump targets print
    /// numerically; the assembler layer substitutes labels.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Instruction::Alu { op, rd, ra, rb } => {
                write!(f, "{} {rd}, {ra}, {rb}", op.mnemonic())
            }
            Instruction::AluImm { op, rd, ra, imm } => {
                write!(f, "{}i {rd}, {ra}, {imm}", op.mnemonic())
            }
            Instruction::Load { rd, ra, imm } => write!(f, "load {rd}, {ra}, {imm}"),
            Instruction::Store { ra, imm, rb } => write!(f, "store {ra}, {imm}, {rb}"),
            Instruction::LoadIdx { rd, ra, rx } => write!(f, "loadx {rd}, {ra}, {rx}"),
            Instruction::StoreIdx { ra, rx, rb } => write!(f, "storex {ra}, {rx}, {rb}"),
            Instruction::Mtspr { bit, value } => write!(f, "mtspr {bit}, {}", u8::from(value)),
            Instruction::Mfspr { rd, bit } => write!(f, "mfspr {rd}, {bit}"),
            Instruction::Branch { cond, ra, rb, offset } => {
                write!(f, "{} {ra}, {rb}, {offset}", cond.mnemonic())
            }
            Instruction::Jal { target } => write!(f, "jal {target}"),
            Instruction::Jalr { ra } => write!(f, "jalr {ra}"),
            Instruction::Halt => write!(f, "halt"),
        }
    }
}
