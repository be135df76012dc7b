//! Code generation.
//!
//! Deliberately naive: every expression result round-trips through a
//! frame temp slot, so values never live in registers across a statement,
//! a call, or a subexpression boundary. That keeps recursion and calls
//! trivially correct at the price of extra memory traffic — which is the
//! honest price to measure, since every one of those slot accesses is a
//! guarded access in an instrumented build.
//!
//! Register conventions on top of the machine's fixed ones (`r0` zero,
//! `r1` stack, `r2` scalar-block base, `r9` link, `r11` return value):
//!
//! | register | use |
//! |----------|-----|
//! | `r3`-`r8`  | argument registers (a pointer argument takes two: base, offset) |
//! | `r10`      | scratch: comparison results, scaled displacement amounts |
//! | `r12`      | staging: pointer-pair and header addresses |
//! | `r13`      | object base of the access being built |
//! | `r14`      | current integer value (also pointer base before it moves to `r13`) |
//! | `r15`      | byte offset of the access being built |
//!
//! Every load or store of program data is emitted with the object's base
//! address in the base register and all displacement in the immediate or
//! index register, because that is the address the guard derives the
//! header from. Pointer values are (base, byte-offset) pairs in guarded
//! builds — dereferencing one reproduces the original object base in
//! `r13` — and plain absolute addresses in unguarded builds.

use std::collections::BTreeMap;

use thiserror::Error;

use super::asm::{AsmInsn, AsmItem, AsmProgram};
use super::ast::{BinOp, Expr, Function, LValue, ParamKind, Program, Stmt};
use super::layout::{layout_frame, FrameLayout, VarSlot};
use crate::machine::{AluOp, BranchCond, Instruction, Reg, SPR_BIT_GEB, SPR_BIT_PHWE};

const SP: Reg = Reg::SP;
const SB: Reg = Reg::FP; // scalar-block base
const LR: Reg = Reg::LINK;
const RV: Reg = Reg::RET;
const T0: Reg = Reg::r(10);
const P0: Reg = Reg::r(12);
const OB: Reg = Reg::r(13); // object base
const V0: Reg = Reg::r(14);
const V1: Reg = Reg::r(15);

/// First argument register; a call may use up to six argument words.
const ARG_BASE: u8 = 3;
const ARG_UNITS: u32 = 6;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CompileError {
    #[error("function `{0}` is defined more than once")]
    DuplicateFunction(String),
    #[error("in `{function}`: variable `{name}` is declared more than once")]
    DuplicateVariable { function: String, name: String },
    #[error("in `{function}`: frame of {size} bytes exceeds the {limit}-byte limit")]
    FrameTooLarge { function: String, size: u32, limit: u32 },
    #[error("in `{function}`: `{name}` is not declared")]
    UnknownVariable { function: String, name: String },
    #[error("in `{function}`: call to undefined function `{callee}`")]
    UnknownFunction { function: String, callee: String },
    #[error("in `{function}`: `{callee}` takes {expected} arguments, got {got}")]
    ArityMismatch { function: String, callee: String, expected: usize, got: usize },
    #[error("in `{function}`: call to `{callee}` needs more than {ARG_UNITS} argument words")]
    TooManyArgWords { function: String, callee: String },
    #[error("integer literal {0} does not fit in a 32-bit word")]
    IntRange(i64),
    #[error("in `{function}`: {msg}")]
    Type { function: String, msg: String },
    #[error("program has no `main` function")]
    MissingMain,
    #[error("`main` must take no parameters")]
    MainHasParams,
}

#[derive(Clone, Copy, Debug)]
pub struct CodegenOptions {
    /// Emit protection headers, header population, and pointer pairs.
    pub guarded: bool,
    /// Emit the guard-enable flag write in the startup stub. On by default
    /// exactly when `guarded`; the differential harness turns it off to
    /// show instrumented code runs identically with the guard dormant.
    pub arm_guard: bool,
}

/// Compile with instrumentation on or off.
pub fn compile(program: &Program, guarded: bool) -> Result<AsmProgram, CompileError> {
    compile_with(program, CodegenOptions { guarded, arm_guard: guarded })
}

pub fn compile_with(program: &Program, opts: CodegenOptions) -> Result<AsmProgram, CompileError> {
    let mut sigs: BTreeMap<String, Vec<ParamKind>> = BTreeMap::new();
    for f in &program.functions {
        let kinds = f.params.iter().map(|p| p.kind).collect();
        if sigs.insert(f.name.clone(), kinds).is_some() {
            return Err(CompileError::DuplicateFunction(f.name.clone()));
        }
    }
    match sigs.get("main") {
        None => return Err(CompileError::MissingMain),
        Some(kinds) if !kinds.is_empty() => return Err(CompileError::MainHasParams),
        Some(_) => {}
    }

    let mut items = vec![AsmItem::Label("_start".into())];
    if opts.arm_guard {
        items
            .push(AsmItem::Insn(AsmInsn::Op(Instruction::Mtspr { bit: SPR_BIT_GEB, value: true })));
    }
    items.push(AsmItem::Insn(AsmInsn::JalTo { target: "main".into() }));
    items.push(AsmItem::Insn(AsmInsn::Op(Instruction::Halt)));

    let mut layouts = BTreeMap::new();
    let mut per_function_insns = BTreeMap::new();
    let mut label_seq = 0u32;
    for f in &program.functions {
        let layout = layout_frame(f, &sigs, opts.guarded)?;
        let before = items.len();
        let mut emit = Emit {
            opts,
            sigs: &sigs,
            f,
            layout: &layout,
            items: &mut items,
            label_seq: &mut label_seq,
        };
        emit.function()?;
        let count = items[before..].iter().filter(|i| matches!(i, AsmItem::Insn(_))).count() as u32;
        per_function_insns.insert(f.name.clone(), count);
        layouts.insert(f.name.clone(), layout);
    }

    Ok(AsmProgram {
        items,
        entry: "_start".into(),
        initial_sp: crate::machine::DEFAULT_STACK_TOP,
        layouts,
        per_function_insns,
    })
}

struct Emit<'a> {
    opts: CodegenOptions,
    sigs: &'a BTreeMap<String, Vec<ParamKind>>,
    f: &'a Function,
    layout: &'a FrameLayout,
    items: &'a mut Vec<AsmItem>,
    label_seq: &'a mut u32,
}

impl<'a> Emit<'a> {
    fn op(&mut self, insn: Instruction) {
        self.items.push(AsmItem::Insn(AsmInsn::Op(insn)));
    }

    fn label(&mut self, name: String) {
        self.items.push(AsmItem::Label(name));
    }

    fn fresh(&mut self, stem: &str) -> String {
        *self.label_seq += 1;
        format!(".L{}_{stem}", *self.label_seq)
    }

    fn branch_to(&mut self, cond: BranchCond, ra: Reg, rb: Reg, target: &str) {
        self.items.push(AsmItem::Insn(AsmInsn::BranchTo {
            cond,
            ra,
            rb,
            target: target.to_string(),
        }));
    }

    fn jump(&mut self, target: &str) {
        self.branch_to(BranchCond::Eq, Reg::ZERO, Reg::ZERO, target);
    }

    fn err_type<T>(&self, msg: impl Into<String>) -> Result<T, CompileError> {
        Err(CompileError::Type { function: self.f.name.clone(), msg: msg.into() })
    }

    fn slot(&self, name: &str) -> Result<VarSlot, CompileError> {
        self.layout.slot(name).ok_or_else(|| CompileError::UnknownVariable {
            function: self.f.name.clone(),
            name: name.to_string(),
        })
    }

    fn imm(&self, value: u32) -> i16 {
        // Frame-relative offsets always fit: the layout caps frames at
        // an i16 immediate.
        i16::try_from(value).expect("frame offset exceeds imm16")
    }

    fn addi(&mut self, rd: Reg, ra: Reg, value: i16) {
        self.op(Instruction::AluImm { op: AluOp::Add, rd, ra, imm: value });
    }

    fn mov(&mut self, rd: Reg, ra: Reg) {
        self.op(Instruction::Alu { op: AluOp::Add, rd, ra, rb: Reg::ZERO });
    }

    /// Materialize an arbitrary word into `rd` (one insn when it fits a
    /// signed immediate, else the classic high/shift/or triple).
    fn mat(&mut self, rd: Reg, value: u32) {
        if let Ok(small) = i16::try_from(value as i32) {
            self.addi(rd, Reg::ZERO, small);
        } else {
            self.addi(rd, Reg::ZERO, (value >> 16) as u16 as i16);
            self.op(Instruction::AluImm { op: AluOp::Shl, rd, ra: rd, imm: 16 });
            self.op(Instruction::AluImm { op: AluOp::Or, rd, ra: rd, imm: value as u16 as i16 });
        }
    }

    /// Store `V0` into temp slot `d`.
    fn park(&mut self, d: u32) {
        let off = self.imm(self.layout.temp_offset(d));
        self.op(Instruction::Store { ra: SB, imm: off, rb: V0 });
    }

    /// Load temp slot `d` into `rd`.
    fn unpark(&mut self, rd: Reg, d: u32) {
        let off = self.imm(self.layout.temp_offset(d));
        self.op(Instruction::Load { rd, ra: SB, imm: off });
    }

    fn function(&mut self) -> Result<(), CompileError> {
        let l = self.layout;
        self.label(self.f.name.clone());
        self.addi(SP, SP, -self.imm(l.frame_size));

        if self.opts.guarded {
            self.header_population();
        }

        // Save the system words (guarded builds validate these stores
        // against the freshly written system-block header).
        let sys = self.imm(l.system_data_offset);
        self.addi(P0, SP, sys);
        self.op(Instruction::Store { ra: P0, imm: 0, rb: LR });
        self.op(Instruction::Store { ra: P0, imm: 4, rb: SB });
        self.addi(SB, SP, self.imm(l.scalar_data_offset));

        // Park incoming arguments in their frame homes.
        let mut unit = 0u8;
        for p in &self.f.params {
            let arg = |u: u8| Reg::r(ARG_BASE + u);
            match self.slot(&p.name)? {
                VarSlot::Scalar { offset } => {
                    self.op(Instruction::Store { ra: SB, imm: self.imm(offset), rb: arg(unit) });
                    unit += 1;
                }
                VarSlot::Pointer { data_offset } => {
                    // Pointers travel as (base, offset) register pairs in
                    // both modes; an unguarded callee folds the pair into
                    // its single-word slot here.
                    self.addi(P0, SP, self.imm(data_offset));
                    if self.opts.guarded {
                        self.op(Instruction::Store { ra: P0, imm: 0, rb: arg(unit) });
                        self.op(Instruction::Store { ra: P0, imm: 4, rb: arg(unit + 1) });
                    } else {
                        self.op(Instruction::Alu {
                            op: AluOp::Add,
                            rd: T0,
                            ra: arg(unit),
                            rb: arg(unit + 1),
                        });
                        self.op(Instruction::Store { ra: P0, imm: 0, rb: T0 });
                    }
                    unit += 2;
                }
                VarSlot::Array { .. } => unreachable!("params are scalars or pointers"),
            }
        }

        for stmt in &self.f.body {
            self.stmt(stmt)?;
        }

        // Fallthrough without an explicit return yields 0.
        self.addi(RV, Reg::ZERO, 0);
        self.label(format!(".Lret_{}", self.f.name));
        let sys = self.imm(l.system_data_offset);
        self.addi(P0, SP, sys);
        self.op(Instruction::Load { rd: LR, ra: P0, imm: 0 });
        self.op(Instruction::Load { rd: SB, ra: P0, imm: 4 });
        self.addi(SP, SP, self.imm(l.frame_size));
        self.op(Instruction::Jalr { ra: LR });
        Ok(())
    }

    /// The header-write window: suspend checking, store every block's
    /// three header words, resume. Each magic word receives its own
    /// address; base words hold `data - 1`, bound words `data + size`, so
    /// the guard's strict comparisons admit exactly the block's words.
    fn header_population(&mut self) {
        self.op(Instruction::Mtspr { bit: SPR_BIT_PHWE, value: true });
        for b in &self.layout.blocks {
            let h = b.header_offset.expect("guarded layout has headers");
            self.addi(P0, SP, self.imm(h));
            self.op(Instruction::Store { ra: P0, imm: 0, rb: P0 });
            self.addi(OB, SP, self.imm(b.data_offset - 1));
            self.op(Instruction::Store { ra: P0, imm: 4, rb: OB });
            self.addi(OB, SP, self.imm(b.data_offset + b.size));
            self.op(Instruction::Store { ra: P0, imm: 8, rb: OB });
        }
        self.op(Instruction::Mtspr { bit: SPR_BIT_PHWE, value: false });
    }

    fn stmt(&mut self, s: &Stmt) -> Result<(), CompileError> {
        match s {
            Stmt::DeclScalar { name, init } => {
                if let Some(e) = init {
                    self.assign_scalar(name, e)?;
                }
                Ok(())
            }
            Stmt::DeclArray { .. } => Ok(()),
            Stmt::DeclPointer { name, init } => {
                if let Some(e) = init {
                    self.assign_pointer(name, e)?;
                }
                Ok(())
            }
            Stmt::Assign { target, value } => match target {
                LValue::Scalar(name) => match self.slot(name)? {
                    VarSlot::Scalar { .. } => self.assign_scalar(name, value),
                    VarSlot::Pointer { .. } => self.assign_pointer(name, value),
                    VarSlot::Array { .. } => {
                        self.err_type(format!("array `{name}` cannot be assigned"))
                    }
                },
                LValue::Index { base, index } => self.assign_indexed(base, index, value),
                LValue::Deref(name) => self.assign_deref(name, value),
            },
            Stmt::If { cond, then_body, else_body } => {
                let else_l = self.fresh("else");
                let end_l = self.fresh("endif");
                self.int_expr(cond, 0)?;
                self.branch_to(BranchCond::Eq, V0, Reg::ZERO, &else_l);
                for s in then_body {
                    self.stmt(s)?;
                }
                self.jump(&end_l);
                self.label(else_l);
                for s in else_body {
                    self.stmt(s)?;
                }
                self.label(end_l);
                Ok(())
            }
            Stmt::While { cond, body } => {
                let head = self.fresh("while");
                let end = self.fresh("endwhile");
                self.label(head.clone());
                self.int_expr(cond, 0)?;
                self.branch_to(BranchCond::Eq, V0, Reg::ZERO, &end);
                for s in body {
                    self.stmt(s)?;
                }
                self.jump(&head);
                self.label(end);
                Ok(())
            }
            Stmt::Return(e) => {
                self.int_expr(e, 0)?;
                self.mov(RV, V0);
                let ret = format!(".Lret_{}", self.f.name);
                self.jump(&ret);
                Ok(())
            }
            Stmt::Call { name, args } => {
                self.call(name, args, 0)?;
                Ok(())
            }
        }
    }

    fn assign_scalar(&mut self, name: &str, value: &Expr) -> Result<(), CompileError> {
        match self.slot(name)? {
            VarSlot::Scalar { offset } => {
                self.int_expr(value, 0)?;
                self.op(Instruction::Store { ra: SB, imm: self.imm(offset), rb: V0 });
                Ok(())
            }
            VarSlot::Pointer { .. } => self.assign_pointer(name, value),
            VarSlot::Array { .. } => self.err_type(format!("array `{name}` cannot be assigned")),
        }
    }

    fn assign_pointer(&mut self, name: &str, value: &Expr) -> Result<(), CompileError> {
        let VarSlot::Pointer { data_offset } = self.slot(name)? else {
            return self.err_type(format!("`{name}` is not a pointer"));
        };
        self.ptr_expr(value, 0)?;
        self.addi(P0, SP, self.imm(data_offset));
        if self.opts.guarded {
            self.op(Instruction::Store { ra: P0, imm: 0, rb: OB });
            self.op(Instruction::Store { ra: P0, imm: 4, rb: V1 });
        } else {
            // Unguarded pointers are one absolute word: base + offset.
            self.op(Instruction::Alu { op: AluOp::Add, rd: V0, ra: OB, rb: V1 });
            self.op(Instruction::Store { ra: P0, imm: 0, rb: V0 });
        }
        Ok(())
    }

    fn assign_indexed(
        &mut self,
        base: &str,
        index: &Expr,
        value: &Expr,
    ) -> Result<(), CompileError> {
        self.int_expr(value, 0)?; // parked in t0
        match self.slot(base)? {
            VarSlot::Array { data_offset, .. } => {
                if let Some(k) = const_index(index) {
                    let byte = element_byte_offset(k)?;
                    self.addi(OB, SP, self.imm(data_offset));
                    if let Ok(imm) = i16::try_from(byte) {
                        self.op(Instruction::Store { ra: OB, imm, rb: V0 });
                    } else {
                        self.mat(V1, byte as u32);
                        self.op(Instruction::StoreIdx { ra: OB, rx: V1, rb: V0 });
                    }
                } else {
                    self.int_expr(index, 1)?;
                    self.op(Instruction::AluImm { op: AluOp::Shl, rd: V1, ra: V0, imm: 2 });
                    self.addi(OB, SP, self.imm(data_offset));
                    self.unpark(V0, 0);
                    self.op(Instruction::StoreIdx { ra: OB, rx: V1, rb: V0 });
                }
                Ok(())
            }
            VarSlot::Pointer { .. } => {
                // p[i] = v  ≡  *(p + i) = v
                self.int_expr(index, 1)?;
                self.ptr_var(base, 2)?;
                self.unpark(T0, 1);
                self.op(Instruction::AluImm { op: AluOp::Shl, rd: T0, ra: T0, imm: 2 });
                self.op(Instruction::Alu { op: AluOp::Add, rd: V1, ra: V1, rb: T0 });
                self.unpark(V0, 0);
                self.op(Instruction::StoreIdx { ra: OB, rx: V1, rb: V0 });
                Ok(())
            }
            VarSlot::Scalar { .. } => self.err_type(format!("`{base}` is not indexable")),
        }
    }

    fn assign_deref(&mut self, name: &str, value: &Expr) -> Result<(), CompileError> {
        self.int_expr(value, 0)?;
        self.ptr_var(name, 1)?;
        self.unpark(V0, 0);
        self.op(Instruction::StoreIdx { ra: OB, rx: V1, rb: V0 });
        Ok(())
    }

    /// Evaluate an integer-valued expression. Leaves the value in `V0`
    /// *and* parked in temp slot `d`.
    fn int_expr(&mut self, e: &Expr, d: u32) -> Result<(), CompileError> {
        match e {
            Expr::Int(v) => {
                let word = int_literal(*v)?;
                self.mat(V0, word);
                self.park(d);
            }
            Expr::Neg(inner) => {
                if let Some(word) = const_value(e) {
                    self.mat(V0, word?);
                    self.park(d);
                } else {
                    self.int_expr(inner, d)?;
                    self.op(Instruction::Alu { op: AluOp::Sub, rd: V0, ra: Reg::ZERO, rb: V0 });
                    self.park(d);
                }
            }
            Expr::Var(name) => match self.slot(name)? {
                VarSlot::Scalar { offset } => {
                    self.op(Instruction::Load { rd: V0, ra: SB, imm: self.imm(offset) });
                    self.park(d);
                }
                _ => {
                    return self.err_type(format!(
                        "`{name}` is not an integer (arrays and pointers have no integer value)"
                    ))
                }
            },
            Expr::Index { base, index } => {
                match self.slot(base)? {
                    VarSlot::Array { data_offset, .. } => {
                        if let Some(k) = const_index(index) {
                            let byte = element_byte_offset(k)?;
                            self.addi(OB, SP, self.imm(data_offset));
                            if let Ok(imm) = i16::try_from(byte) {
                                self.op(Instruction::Load { rd: V0, ra: OB, imm });
                            } else {
                                self.mat(V1, byte as u32);
                                self.op(Instruction::LoadIdx { rd: V0, ra: OB, rx: V1 });
                            }
                        } else {
                            self.int_expr(index, d)?;
                            self.op(Instruction::AluImm { op: AluOp::Shl, rd: V1, ra: V0, imm: 2 });
                            self.addi(OB, SP, self.imm(data_offset));
                            self.op(Instruction::LoadIdx { rd: V0, ra: OB, rx: V1 });
                        }
                    }
                    VarSlot::Pointer { .. } => {
                        self.int_expr(index, d)?;
                        self.ptr_var(base, d + 1)?;
                        self.unpark(T0, d);
                        self.op(Instruction::AluImm { op: AluOp::Shl, rd: T0, ra: T0, imm: 2 });
                        self.op(Instruction::Alu { op: AluOp::Add, rd: V1, ra: V1, rb: T0 });
                        self.op(Instruction::LoadIdx { rd: V0, ra: OB, rx: V1 });
                    }
                    VarSlot::Scalar { .. } => {
                        return self.err_type(format!("`{base}` is not indexable"))
                    }
                }
                self.park(d);
            }
            Expr::Deref(name) => {
                self.ptr_var(name, d)?;
                self.op(Instruction::LoadIdx { rd: V0, ra: OB, rx: V1 });
                self.park(d);
            }
            Expr::AddrOf { .. } => {
                return self.err_type("address-of yields a pointer, not an integer".to_string())
            }
            Expr::Binary { op, lhs, rhs } => {
                if matches!(op, BinOp::Add | BinOp::Sub) && self.is_pointer_expr(lhs) {
                    return self.err_type(
                        "pointer arithmetic yields a pointer, not an integer".to_string(),
                    );
                }
                self.int_expr(lhs, d)?;
                self.int_expr(rhs, d + 1)?;
                self.unpark(V1, d); // lhs
                match op {
                    BinOp::Add | BinOp::Sub | BinOp::Mul => {
                        let alu = match op {
                            BinOp::Add => AluOp::Add,
                            BinOp::Sub => AluOp::Sub,
                            _ => AluOp::Mul,
                        };
                        self.op(Instruction::Alu { op: alu, rd: V0, ra: V1, rb: V0 });
                    }
                    _ => self.comparison(*op),
                }
                self.park(d);
            }
            Expr::Call { name, args } => {
                self.call(name, args, d)?;
            }
        }
        Ok(())
    }

    /// Lower a comparison to 0/1 in `V0`. Operands: lhs in `V1`, rhs in
    /// `V0`. Three instructions: seed the result, conditionally skip the
    /// flip. `blt` is a signed compare.
    fn comparison(&mut self, op: BinOp) {
        // (seed, cond, ra, rb): result = seed; if cond(ra, rb) skip; flip.
        let (seed, cond, ra, rb) = match op {
            BinOp::Eq => (1, BranchCond::Eq, V1, V0),
            BinOp::Ne => (1, BranchCond::Ne, V1, V0),
            BinOp::Lt => (1, BranchCond::Lt, V1, V0),
            BinOp::Gt => (1, BranchCond::Lt, V0, V1),
            BinOp::Le => (0, BranchCond::Lt, V0, V1), // l <= r  ≡  !(r < l)
            BinOp::Ge => (0, BranchCond::Lt, V1, V0),
            _ => unreachable!("not a comparison"),
        };
        self.addi(T0, Reg::ZERO, seed);
        self.op(Instruction::Branch { cond, ra, rb, offset: 1 });
        self.addi(T0, Reg::ZERO, 1 - seed);
        self.mov(V0, T0);
    }

    /// Does this expression have pointer type? (Syntactic: the symbol
    /// table decides for names; address-of and pointer arithmetic
    /// propagate.)
    fn is_pointer_expr(&self, e: &Expr) -> bool {
        match e {
            Expr::AddrOf { .. } => true,
            Expr::Var(name) => matches!(
                self.layout.slot(name),
                Some(VarSlot::Pointer { .. } | VarSlot::Array { .. })
            ),
            Expr::Binary { op: BinOp::Add | BinOp::Sub, lhs, .. } => self.is_pointer_expr(lhs),
            _ => false,
        }
    }

    /// Evaluate a pointer-valued expression: object base lands in `OB`
    /// (`r13`), byte offset in `V1` (`r15`). Unguarded builds carry the
    /// absolute address in `OB` with a zero or folded offset in `V1`.
    fn ptr_expr(&mut self, e: &Expr, d: u32) -> Result<(), CompileError> {
        match e {
            Expr::Var(name) => self.ptr_var(name, d),
            Expr::AddrOf { var, index } => match self.slot(var)? {
                VarSlot::Array { data_offset, .. } => match index {
                    None => {
                        self.addi(OB, SP, self.imm(data_offset));
                        self.addi(V1, Reg::ZERO, 0);
                        Ok(())
                    }
                    Some(i) => {
                        if let Some(k) = const_index(i) {
                            let byte = element_byte_offset(k)?;
                            self.addi(OB, SP, self.imm(data_offset));
                            self.mat(V1, byte as u32);
                        } else {
                            self.int_expr(i, d)?;
                            self.op(Instruction::AluImm { op: AluOp::Shl, rd: V1, ra: V0, imm: 2 });
                            self.addi(OB, SP, self.imm(data_offset));
                        }
                        Ok(())
                    }
                },
                VarSlot::Scalar { offset } => {
                    if index.is_some() {
                        return self.err_type(format!("`{var}` is not indexable"));
                    }
                    self.mov(OB, SB);
                    self.addi(V1, Reg::ZERO, self.imm(offset));
                    Ok(())
                }
                VarSlot::Pointer { .. } => self.err_type(format!(
                    "cannot take the address of pointer `{var}` (no pointer-to-pointer)"
                )),
            },
            Expr::Binary { op: op @ (BinOp::Add | BinOp::Sub), lhs, rhs } => {
                if !self.is_pointer_expr(lhs) {
                    return self
                        .err_type("pointer arithmetic needs the pointer on the left".to_string());
                }
                self.int_expr(rhs, d)?; // element count, parked in t_d
                self.ptr_expr(lhs, d + 1)?;
                self.unpark(T0, d);
                self.op(Instruction::AluImm { op: AluOp::Shl, rd: T0, ra: T0, imm: 2 });
                let alu = if *op == BinOp::Add { AluOp::Add } else { AluOp::Sub };
                self.op(Instruction::Alu { op: alu, rd: V1, ra: V1, rb: T0 });
                Ok(())
            }
            _ => self.err_type("expression does not have pointer type".to_string()),
        }
    }

    /// Load the (base, offset) value of a named pointer or array into
    /// `OB`/`V1`.
    fn ptr_var(&mut self, name: &str, _d: u32) -> Result<(), CompileError> {
        match self.slot(name)? {
            VarSlot::Pointer { data_offset } => {
                self.addi(P0, SP, self.imm(data_offset));
                self.op(Instruction::Load { rd: OB, ra: P0, imm: 0 });
                if self.opts.guarded {
                    self.op(Instruction::Load { rd: V1, ra: P0, imm: 4 });
                } else {
                    self.addi(V1, Reg::ZERO, 0);
                }
                Ok(())
            }
            VarSlot::Array { data_offset, .. } => {
                self.addi(OB, SP, self.imm(data_offset));
                self.addi(V1, Reg::ZERO, 0);
                Ok(())
            }
            VarSlot::Scalar { .. } => self.err_type(format!("`{name}` is not a pointer")),
        }
    }

    /// Emit a call: arguments evaluate left to right into consecutive temps
    /// (a pointer argument takes two), then load the argument registers,
    /// jump, and park `r11` as the result in slot `d`.
    fn call(&mut self, callee: &str, args: &[Expr], d: u32) -> Result<(), CompileError> {
        let Some(kinds) = self.sigs.get(callee).cloned() else {
            return Err(CompileError::UnknownFunction {
                function: self.f.name.clone(),
                callee: callee.to_string(),
            });
        };
        if kinds.len() != args.len() {
            return Err(CompileError::ArityMismatch {
                function: self.f.name.clone(),
                callee: callee.to_string(),
                expected: kinds.len(),
                got: args.len(),
            });
        }
        let words: u32 = kinds.iter().map(|k| if *k == ParamKind::Pointer { 2 } else { 1 }).sum();
        if words > ARG_UNITS {
            return Err(CompileError::TooManyArgWords {
                function: self.f.name.clone(),
                callee: callee.to_string(),
            });
        }

        let mut used = 0u32;
        for (arg, kind) in args.iter().zip(&kinds) {
            match kind {
                ParamKind::Scalar => {
                    self.int_expr(arg, d + used)?;
                    used += 1;
                }
                ParamKind::Pointer => {
                    if !self.is_pointer_expr(arg) {
                        return self.err_type(format!("argument to `{callee}` must be a pointer"));
                    }
                    self.ptr_expr(arg, d + used)?;
                    // Park the pair: base then offset.
                    self.mov(V0, OB);
                    self.park(d + used);
                    self.mov(V0, V1);
                    self.park(d + used + 1);
                    used += 2;
                }
            }
        }
        for u in 0..used {
            self.unpark(Reg::r(ARG_BASE + u as u8), d + u);
        }
        self.items.push(AsmItem::Insn(AsmInsn::JalTo { target: callee.to_string() }));
        self.mov(V0, RV);
        self.park(d);
        Ok(())
    }
}

/// Evaluate a literal (possibly negated) to a word, if the expression is
/// constant. Used for folding array indices and negation.
fn const_value(e: &Expr) -> Option<Result<u32, CompileError>> {
    match e {
        Expr::Int(v) => Some(int_literal(*v)),
        Expr::Neg(inner) => match &**inner {
            Expr::Int(v) => Some(int_literal(-*v)),
            _ => None,
        },
        _ => None,
    }
}

fn const_index(e: &Expr) -> Option<i64> {
    match e {
        Expr::Int(v) => Some(*v),
        Expr::Neg(inner) => match &**inner {
            Expr::Int(v) => Some(-*v),
            _ => None,
        },
        _ => None,
    }
}

fn int_literal(v: i64) -> Result<u32, CompileError> {
    if v < i64::from(i32::MIN) || v > i64::from(u32::MAX) {
        return Err(CompileError::IntRange(v));
    }
    Ok(v as u32)
}

/// Byte offset of element `k`, kept within the 32-bit space.
fn element_byte_offset(k: i64) -> Result<i64, CompileError> {
    let byte = k.checked_mul(4).ok_or(CompileError::IntRange(k))?;
    if byte < i64::from(i32::MIN) || byte > i64::from(i32::MAX) {
        return Err(CompileError::IntRange(k));
    }
    Ok(byte)
}

/// Statically audit generated code: inside every header-write window
/// (`mtspr 18,1 … mtspr 18,0`) stores may touch only the current frame's
/// header words, and outside a window no store may be statically aimed at
/// one. Tracks `rX = r1 + K` facts along straight-line code, conservatively
/// dropping facts at labels, branches, and calls; windows must therefore be
/// straight-line, which the generator guarantees.
pub fn audit_header_writes(program: &AsmProgram) -> Vec<String> {
    use std::collections::HashMap;

    let mut findings = Vec::new();
    let mut facts: HashMap<Reg, i64> = HashMap::new();
    let mut in_window = false;
    let mut current: Option<&FrameLayout> = None;

    for (idx, item) in program.items.iter().enumerate() {
        match item {
            AsmItem::Label(name) => {
                if let Some(l) = program.layouts.get(name) {
                    current = Some(l);
                    if in_window {
                        findings.push(format!(
                            "item {idx}: function `{name}` begins inside an open header-write window"
                        ));
                        in_window = false;
                    }
                }
                facts.clear();
            }
            AsmItem::Insn(AsmInsn::BranchTo { .. }) | AsmItem::Insn(AsmInsn::JalTo { .. }) => {
                if in_window {
                    findings.push(format!("item {idx}: control flow inside a header-write window"));
                }
                // Calls clobber scratch registers; r2 survives by ABI.
                let keep = facts.get(&SB).copied();
                facts.clear();
                if let Some(k) = keep {
                    facts.insert(SB, k);
                }
            }
            AsmItem::Insn(AsmInsn::Op(insn)) => match *insn {
                Instruction::Mtspr { bit: SPR_BIT_PHWE, value } => in_window = value,
                Instruction::AluImm { op: AluOp::Add, rd, ra, imm } => {
                    if rd == SP {
                        if ra == SP {
                            // The frame moved: every fact shifts with it.
                            for k in facts.values_mut() {
                                *k -= i64::from(imm);
                            }
                        } else {
                            facts.clear();
                        }
                    } else if ra == SP {
                        facts.insert(rd, i64::from(imm));
                    } else if let Some(base) = facts.get(&ra).copied() {
                        facts.insert(rd, base + i64::from(imm));
                    } else {
                        facts.remove(&rd);
                    }
                }
                Instruction::Store { ra, imm, .. } => {
                    let target = if ra == SP {
                        Some(i64::from(imm))
                    } else {
                        facts.get(&ra).map(|k| k + i64::from(imm))
                    };
                    let header_words: Vec<i64> = current
                        .map(|l| l.header_word_offsets().iter().map(|&o| i64::from(o)).collect())
                        .unwrap_or_default();
                    match (in_window, target) {
                        (true, Some(t)) if header_words.contains(&t) => {}
                        (true, Some(t)) => findings.push(format!(
                            "item {idx}: store to frame offset {t} inside a header-write window"
                        )),
                        (true, None) => findings.push(format!(
                            "item {idx}: store with unknown target inside a header-write window"
                        )),
                        (false, Some(t)) if header_words.contains(&t) => findings.push(format!(
                            "item {idx}: store statically aimed at header word {t} outside a window"
                        )),
                        (false, _) => {}
                    }
                }
                Instruction::StoreIdx { .. } => {
                    if in_window {
                        findings.push(format!(
                            "item {idx}: indexed store inside a header-write window"
                        ));
                    }
                }
                Instruction::Branch { .. } | Instruction::Jalr { .. } | Instruction::Jal { .. } => {
                    if in_window {
                        findings
                            .push(format!("item {idx}: control flow inside a header-write window"));
                    }
                    facts.clear();
                }
                Instruction::Alu { rd, .. }
                | Instruction::AluImm { rd, .. }
                | Instruction::Load { rd, .. }
                | Instruction::LoadIdx { rd, .. }
                | Instruction::Mfspr { rd, .. } => {
                    facts.remove(&rd);
                }
                Instruction::Mtspr { .. } | Instruction::Halt => {}
            },
        }
    }
    findings
}
