//! Assembly layer: symbolic instructions, two-pass label resolution, and a
//! text round-trip.
//!
//! The generator emits `AsmItem`s; `assemble` turns them into a loadable
//! image. Branch targets may be labels or raw numeric word offsets (the
//! generator uses a bare `+1` to skip one instruction in comparison
//! sequences), and `jal` targets may be labels or absolute word indices.
//!
//! Text format, one item per line (`;` starts a comment):
//!
//! ```text
//! .stack 0x00100000
//! _start:
//!     mtspr 17, 1
//!     jal main
//!     halt
//! ```

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use super::layout::FrameLayout;
use crate::machine::{
    AluOp, BranchCond, EncodeError, Instruction, ProgramImage, Reg, DEFAULT_STACK_TOP,
};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum AsmInsn {
    /// Fully resolved instruction.
    Op(Instruction),
    /// Branch to a label (resolved to a pc-relative word offset).
    BranchTo { cond: BranchCond, ra: Reg, rb: Reg, target: String },
    /// Call a label (resolved to an absolute word index).
    JalTo { target: String },
}

impl fmt::Display for AsmInsn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AsmInsn::Op(i) => write!(f, "{i}"),
            AsmInsn::BranchTo { cond, ra, rb, target } => {
                write!(f, "{} {ra}, {rb}, {target}", cond.mnemonic())
            }
            AsmInsn::JalTo { target } => write!(f, "jal {target}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum AsmItem {
    Label(String),
    Insn(AsmInsn),
}

/// A symbolic program plus the compiler metadata that travels with it.
#[derive(Clone, Debug)]
pub struct AsmProgram {
    pub items: Vec<AsmItem>,
    /// Label execution starts at.
    pub entry: String,
    pub initial_sp: u32,
    /// Frame layouts per function (empty when parsed from text).
    pub layouts: BTreeMap<String, FrameLayout>,
    /// Static instruction count per function (empty when parsed from text).
    pub per_function_insns: BTreeMap<String, u32>,
}

impl AsmProgram {
    pub fn instruction_count(&self) -> u32 {
        self.items.iter().filter(|i| matches!(i, AsmItem::Insn(_))).count() as u32
    }

    /// Render as assembly text; `parse_asm` reads the same format back.
    pub fn text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(".stack {:#010x}\n", self.initial_sp));
        for item in &self.items {
            match item {
                AsmItem::Label(name) => out.push_str(&format!("{name}:\n")),
                AsmItem::Insn(insn) => out.push_str(&format!("    {insn}\n")),
            }
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct Assembled {
    pub image: ProgramImage,
    /// Label name → byte address.
    pub symbols: BTreeMap<String, u32>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AsmError {
    #[error("label `{0}` is defined twice")]
    DuplicateLabel(String),
    #[error("label `{0}` is never defined")]
    UndefinedLabel(String),
    #[error(
        "branch at word {at_word} to `{target}` is {offset} words away, beyond a 16-bit offset"
    )]
    BranchRange { at_word: u32, target: String, offset: i64 },
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error("entry label `{0}` is never defined")]
    MissingEntry(String),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// Resolve labels and encode. Two passes: addresses, then words.
pub fn assemble(program: &AsmProgram) -> Result<Assembled, AsmError> {
    let mut symbols = BTreeMap::new();
    let mut word = 0u32;
    for item in &program.items {
        match item {
            AsmItem::Label(name) => {
                if symbols.insert(name.clone(), word * 4).is_some() {
                    return Err(AsmError::DuplicateLabel(name.clone()));
                }
            }
            AsmItem::Insn(_) => word += 1,
        }
    }

    let lookup = |name: &str| -> Result<u32, AsmError> {
        symbols.get(name).copied().ok_or_else(|| AsmError::UndefinedLabel(name.to_string()))
    };

    let mut words = Vec::with_capacity(word as usize);
    let mut at = 0u32;
    for item in &program.items {
        let AsmItem::Insn(insn) = item else { continue };
        let resolved = match insn {
            AsmInsn::Op(i) => *i,
            AsmInsn::BranchTo { cond, ra, rb, target } => {
                let dest_word = lookup(target)? / 4;
                let offset = i64::from(dest_word) - i64::from(at) - 1;
                let offset = i16::try_from(offset).map_err(|_| AsmError::BranchRange {
                    at_word: at,
                    target: target.clone(),
                    offset,
                })?;
                Instruction::Branch { cond: *cond, ra: *ra, rb: *rb, offset }
            }
            AsmInsn::JalTo { target } => Instruction::Jal { target: lookup(target)? / 4 },
        };
        words.push(resolved.encode()?);
        at += 1;
    }

    let entry =
        lookup(&program.entry).map_err(|_| AsmError::MissingEntry(program.entry.clone()))?;
    Ok(Assembled { image: ProgramImage { entry, initial_sp: program.initial_sp, words }, symbols })
}

/// Parse assembly text back into a symbolic program. Layout metadata does
/// not survive the text round-trip; the items and image do.
pub fn parse_asm(text: &str) -> Result<AsmProgram, AsmError> {
    let mut items = Vec::new();
    let mut initial_sp = DEFAULT_STACK_TOP;

    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let mut src = raw;
        if let Some(cut) = src.find(';') {
            src = &src[..cut];
        }
        let src = src.trim();
        if src.is_empty() {
            continue;
        }
        if let Some(rest) = src.strip_prefix(".stack") {
            initial_sp = parse_int(rest.trim())
                .and_then(|v| u32::try_from(v).ok())
                .ok_or_else(|| err(line, "expected an address after .stack"))?;
            continue;
        }
        if let Some(name) = src.strip_suffix(':') {
            if !is_label(name) {
                return Err(err(line, format!("`{name}` is not a valid label")));
            }
            items.push(AsmItem::Label(name.to_string()));
            continue;
        }
        items.push(AsmItem::Insn(parse_insn(src, line)?));
    }

    Ok(AsmProgram {
        items,
        entry: "_start".into(),
        initial_sp,
        layouts: BTreeMap::new(),
        per_function_insns: BTreeMap::new(),
    })
}

fn err(line: usize, msg: impl Into<String>) -> AsmError {
    AsmError::Parse { line, msg: msg.into() }
}

fn is_label(s: &str) -> bool {
    !s.is_empty()
        && s.chars().next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_' || c == '.')
        && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.')
}

fn parse_int(s: &str) -> Option<i64> {
    let (neg, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s),
    };
    let v = if let Some(hex) = body.strip_prefix("0x").or_else(|| body.strip_prefix("0X")) {
        i64::from_str_radix(hex, 16).ok()?
    } else {
        body.parse::<i64>().ok()?
    };
    Some(if neg { -v } else { v })
}

fn parse_insn(src: &str, line: usize) -> Result<AsmInsn, AsmError> {
    let (mnemonic, rest) = match src.split_once(char::is_whitespace) {
        Some((m, r)) => (m, r.trim()),
        None => (src, ""),
    };
    let ops: Vec<&str> =
        if rest.is_empty() { Vec::new() } else { rest.split(',').map(str::trim).collect() };

    let reg = |i: usize| -> Result<Reg, AsmError> {
        let s = ops
            .get(i)
            .ok_or_else(|| err(line, format!("`{mnemonic}` is missing operand {}", i + 1)))?;
        s.strip_prefix('r')
            .and_then(|n| n.parse::<u8>().ok())
            .and_then(Reg::new)
            .ok_or_else(|| err(line, format!("`{s}` is not a register")))
    };
    let int = |i: usize| -> Result<i64, AsmError> {
        let s = ops
            .get(i)
            .ok_or_else(|| err(line, format!("`{mnemonic}` is missing operand {}", i + 1)))?;
        parse_int(s).ok_or_else(|| err(line, format!("`{s}` is not a number")))
    };
    let imm = |i: usize| -> Result<i16, AsmError> {
        let v = int(i)?;
        i16::try_from(v).map_err(|_| err(line, format!("{v} does not fit in 16 bits")))
    };
    let arity = |n: usize| -> Result<(), AsmError> {
        if ops.len() == n {
            Ok(())
        } else {
            Err(err(line, format!("`{mnemonic}` takes {n} operands, got {}", ops.len())))
        }
    };

    let alu = |op: AluOp| -> Result<AsmInsn, AsmError> {
        arity(3)?;
        Ok(AsmInsn::Op(Instruction::Alu { op, rd: reg(0)?, ra: reg(1)?, rb: reg(2)? }))
    };
    let alui = |op: AluOp| -> Result<AsmInsn, AsmError> {
        arity(3)?;
        Ok(AsmInsn::Op(Instruction::AluImm { op, rd: reg(0)?, ra: reg(1)?, imm: imm(2)? }))
    };
    let branch = |cond: BranchCond| -> Result<AsmInsn, AsmError> {
        arity(3)?;
        let (ra, rb) = (reg(0)?, reg(1)?);
        match parse_int(ops[2]) {
            Some(v) => {
                let offset = i16::try_from(v)
                    .map_err(|_| err(line, format!("{v} does not fit in 16 bits")))?;
                Ok(AsmInsn::Op(Instruction::Branch { cond, ra, rb, offset }))
            }
            None if is_label(ops[2]) => {
                Ok(AsmInsn::BranchTo { cond, ra, rb, target: ops[2].to_string() })
            }
            None => Err(err(line, format!("`{}` is not an offset or label", ops[2]))),
        }
    };

    match mnemonic {
        "add" => alu(AluOp::Add),
        "sub" => alu(AluOp::Sub),
        "and" => alu(AluOp::And),
        "or" => alu(AluOp::Or),
        "shl" => alu(AluOp::Shl),
        "mul" => alu(AluOp::Mul),
        "addi" => alui(AluOp::Add),
        "subi" => alui(AluOp::Sub),
        "andi" => alui(AluOp::And),
        "ori" => alui(AluOp::Or),
        "shli" => alui(AluOp::Shl),
        "muli" => alui(AluOp::Mul),
        "load" => {
            arity(3)?;
            Ok(AsmInsn::Op(Instruction::Load { rd: reg(0)?, ra: reg(1)?, imm: imm(2)? }))
        }
        "store" => {
            arity(3)?;
            Ok(AsmInsn::Op(Instruction::Store { ra: reg(0)?, imm: imm(1)?, rb: reg(2)? }))
        }
        "loadx" => {
            arity(3)?;
            Ok(AsmInsn::Op(Instruction::LoadIdx { rd: reg(0)?, ra: reg(1)?, rx: reg(2)? }))
        }
        "storex" => {
            arity(3)?;
            Ok(AsmInsn::Op(Instruction::StoreIdx { ra: reg(0)?, rx: reg(1)?, rb: reg(2)? }))
        }
        "mtspr" => {
            arity(2)?;
            let bit = u8::try_from(int(0)?).map_err(|_| err(line, "bad flag number"))?;
            let value = match int(1)? {
                0 => false,
                1 => true,
                v => return Err(err(line, format!("flag value must be 0 or 1, got {v}"))),
            };
            Ok(AsmInsn::Op(Instruction::Mtspr { bit, value }))
        }
        "mfspr" => {
            arity(2)?;
            let rd = reg(0)?;
            let bit = u8::try_from(int(1)?).map_err(|_| err(line, "bad flag number"))?;
            Ok(AsmInsn::Op(Instruction::Mfspr { rd, bit }))
        }
        "beq" => branch(BranchCond::Eq),
        "bne" => branch(BranchCond::Ne),
        "blt" => branch(BranchCond::Lt),
        "jal" => {
            arity(1)?;
            match parse_int(ops[0]) {
                Some(v) => {
                    let target = u32::try_from(v)
                        .map_err(|_| err(line, format!("{v} is not a word index")))?;
                    Ok(AsmInsn::Op(Instruction::Jal { target }))
                }
                None if is_label(ops[0]) => Ok(AsmInsn::JalTo { target: ops[0].to_string() }),
                None => Err(err(line, format!("`{}` is not a target", ops[0]))),
            }
        }
        "jalr" => {
            arity(1)?;
            Ok(AsmInsn::Op(Instruction::Jalr { ra: reg(0)? }))
        }
        "halt" => {
            arity(0)?;
            Ok(AsmInsn::Op(Instruction::Halt))
        }
        _ => Err(err(line, format!("unknown mnemonic `{mnemonic}`"))),
    }
}
