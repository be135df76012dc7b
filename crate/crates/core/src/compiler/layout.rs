//! Frame layout: where every variable, temp slot, and protection header
//! lives relative to the stack pointer.
//!
//! A guarded frame is a sequence of *blocks*, each a 12-byte header
//! followed by its data, growing upward from `r1` after the prologue drops
//! the stack pointer:
//!
//! ```text
//! r1 + 0            system block header
//! r1 + 12           system data: saved return address, saved r2
//! r1 + 20           scalar block header
//! r1 + 32           scalar data: named scalars, then expression temps   (r2 points here)
//! …                 one block per array: header, then the elements
//! …                 one block per pointer: header, then the (base, offset) pair
//! r1 + frame_size   caller's frame
//! ```
//!
//! Scalars share one block so that plain variable accesses — always
//! `r2`-relative — are all validated against a single frame-level header,
//! matching hardware that treats the frame's non-array storage as one
//! object. Arrays and pointers get their own headers (their own bases and
//! bounds are the whole point). The saved return address and frame pointer
//! live in their own system block, so even they are guarded: a compiled
//! store can only reach them through the system block's base register, and
//! stray indexing from a neighboring array mismatches on that array's own
//! bound first.
//!
//! Unguarded frames keep the same block order minus every header, and
//! pointers shrink from an 8-byte (base, offset) pair to a single absolute
//! address:
//!
//! ```text
//! r1 + 0    saved return address, saved r2
//! r1 + 8    scalars and temps                                           (r2 points here)
//! …         arrays, then single-word pointers
//! ```
//!
//! Everything is word-sized and word-aligned; total frame size must fit a
//! 16-bit immediate so a single `addi` moves the stack pointer.

use std::collections::BTreeMap;

use serde::Serialize;

use super::ast::{Expr, Function, LValue, ParamKind, Stmt};
use super::codegen::CompileError;
use crate::guard::HEADER_SIZE;

/// Bytes of guarded system data: saved return address + saved r2.
const SYSTEM_DATA: u32 = 8;

/// Largest frame a single immediate can allocate.
const MAX_FRAME: u32 = i16::MAX as u32 & !3;

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BlockKind {
    System,
    Scalars,
    Array,
    Pointer,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct BlockLayout {
    pub kind: BlockKind,
    /// Variable name, or `<system>` / `<scalars>`.
    pub name: String,
    /// Frame offset of the header's magic word; absent when unguarded.
    pub header_offset: Option<u32>,
    /// Frame offset of the first data word.
    pub data_offset: u32,
    /// Data bytes (headers excluded).
    pub size: u32,
}

/// Where one named variable lives.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum VarSlot {
    /// Offset is relative to the scalar data base (`r2`).
    Scalar { offset: u32 },
    /// Offset is the array's first element, frame-relative.
    Array { data_offset: u32, len: u32 },
    /// Offset of the pointer's storage, frame-relative.
    Pointer { data_offset: u32 },
}

#[derive(Clone, Debug, Serialize)]
pub struct FrameLayout {
    pub function: String,
    pub guarded: bool,
    pub frame_size: u32,
    /// Frame offset `r2` is set to (start of scalar data).
    pub scalar_data_offset: u32,
    /// Frame offset of the system data (saved ra at +0, saved r2 at +4).
    pub system_data_offset: u32,
    pub blocks: Vec<BlockLayout>,
    pub vars: BTreeMap<String, VarSlot>,
    /// Scalar-block slots reserved for expression temporaries, after the
    /// named scalars.
    pub temp_slots: u32,
    /// First temp slot's offset relative to `r2`.
    pub temps_base: u32,
}

impl FrameLayout {
    pub fn slot(&self, name: &str) -> Option<VarSlot> {
        self.vars.get(name).copied()
    }

    /// `r2`-relative offset of temp slot `i`.
    pub fn temp_offset(&self, i: u32) -> u32 {
        assert!(i < self.temp_slots, "temp slot {i} out of {}", self.temp_slots);
        self.temps_base + 4 * i
    }

    /// Frame offsets of every header word (for static checks over the
    /// generated code: exactly these words may be stored inside a
    /// header-write window).
    pub fn header_word_offsets(&self) -> Vec<u32> {
        self.blocks.iter().filter_map(|b| b.header_offset).flat_map(|h| [h, h + 4, h + 8]).collect()
    }

    /// The header words a populated frame based at `frame_base` must hold:
    /// `(address, expected value)` per word. Magic words hold their own
    /// address, base words `data - 1`, bound words `data + size`.
    pub fn expected_header_words(&self, frame_base: u32) -> Vec<(u32, u32)> {
        let mut words = Vec::new();
        for b in &self.blocks {
            if let Some(h) = b.header_offset {
                let magic = frame_base.wrapping_add(h);
                let data = frame_base.wrapping_add(b.data_offset);
                words.push((magic, magic));
                words.push((magic + 4, data.wrapping_sub(1)));
                words.push((magic + 8, data.wrapping_add(b.size)));
            }
        }
        words
    }
}

/// Declarations gathered from a function body, in source order.
struct Decls {
    scalars: Vec<String>,
    arrays: Vec<(String, u32)>,
    pointers: Vec<String>,
}

fn collect_decls(f: &Function) -> Result<Decls, CompileError> {
    let mut decls = Decls { scalars: Vec::new(), arrays: Vec::new(), pointers: Vec::new() };
    let mut seen = std::collections::BTreeSet::new();
    let mut declare = |name: &str, f: &Function| -> Result<(), CompileError> {
        if !seen.insert(name.to_string()) {
            return Err(CompileError::DuplicateVariable {
                function: f.name.clone(),
                name: name.to_string(),
            });
        }
        Ok(())
    };
    for p in &f.params {
        declare(&p.name, f)?;
        match p.kind {
            ParamKind::Scalar => decls.scalars.push(p.name.clone()),
            ParamKind::Pointer => decls.pointers.push(p.name.clone()),
        }
    }
    fn walk(
        stmts: &[Stmt],
        f: &Function,
        decls: &mut Decls,
        declare: &mut dyn FnMut(&str, &Function) -> Result<(), CompileError>,
    ) -> Result<(), CompileError> {
        for s in stmts {
            match s {
                Stmt::DeclScalar { name, .. } => {
                    declare(name, f)?;
                    decls.scalars.push(name.clone());
                }
                Stmt::DeclArray { name, len } => {
                    declare(name, f)?;
                    decls.arrays.push((name.clone(), *len));
                }
                Stmt::DeclPointer { name, .. } => {
                    declare(name, f)?;
                    decls.pointers.push(name.clone());
                }
                Stmt::If { then_body, else_body, .. } => {
                    walk(then_body, f, decls, declare)?;
                    walk(else_body, f, decls, declare)?;
                }
                Stmt::While { body, .. } => walk(body, f, decls, declare)?,
                _ => {}
            }
        }
        Ok(())
    }
    walk(&f.body, f, &mut decls, &mut declare)?;
    Ok(decls)
}

/// Upper bound on simultaneously-live expression temporaries, mirroring the
/// slot discipline in codegen (left operand parks in slot `d`, right
/// operand evaluates with slots `d+1..`; call arguments occupy consecutive
/// slots until the argument registers are loaded).
fn expr_temps(e: &Expr, sigs: &BTreeMap<String, Vec<ParamKind>>) -> u32 {
    match e {
        Expr::Int(_) | Expr::Var(_) | Expr::Deref(_) => 1,
        Expr::Neg(inner) => expr_temps(inner, sigs),
        Expr::AddrOf { index, .. } => match index {
            Some(i) => expr_temps(i, sigs).max(1),
            None => 1,
        },
        Expr::Index { index, .. } => expr_temps(index, sigs).max(1),
        Expr::Binary { lhs, rhs, .. } => expr_temps(lhs, sigs).max(1 + expr_temps(rhs, sigs)),
        Expr::Call { name, args } => {
            let kinds = sigs.get(name);
            let mut used = 0u32; // slots already parked by earlier args
            let mut worst = 1u32; // the result itself needs a slot
            for (i, arg) in args.iter().enumerate() {
                let need = match classify_arg(kinds, i) {
                    ParamKind::Pointer => ptr_temps(arg, sigs).max(2),
                    ParamKind::Scalar => expr_temps(arg, sigs),
                };
                worst = worst.max(used + need);
                used += match classify_arg(kinds, i) {
                    ParamKind::Pointer => 2,
                    ParamKind::Scalar => 1,
                };
            }
            worst.max(used)
        }
    }
}

/// Temp bound for evaluating a pointer-valued expression: displacement
/// amounts are parked in temps before the pointer registers are formed.
fn ptr_temps(e: &Expr, sigs: &BTreeMap<String, Vec<ParamKind>>) -> u32 {
    match e {
        Expr::Var(_) | Expr::AddrOf { index: None, .. } => 0,
        Expr::AddrOf { index: Some(i), .. } => expr_temps(i, sigs),
        Expr::Binary { lhs, rhs, .. } => {
            // amount first (one slot parked), then the base pointer
            expr_temps(rhs, sigs).max(1 + ptr_temps(lhs, sigs))
        }
        Expr::Neg(inner) => ptr_temps(inner, sigs),
        _ => expr_temps(e, sigs),
    }
}

fn classify_arg(kinds: Option<&Vec<ParamKind>>, i: usize) -> ParamKind {
    kinds.and_then(|k| k.get(i).copied()).unwrap_or(ParamKind::Scalar)
}

fn stmt_temps(stmts: &[Stmt], sigs: &BTreeMap<String, Vec<ParamKind>>) -> u32 {
    let mut worst = 0;
    for s in stmts {
        let need = match s {
            Stmt::DeclScalar { init: Some(e), .. } => expr_temps(e, sigs),
            Stmt::DeclPointer { init: Some(e), .. } => ptr_temps(e, sigs),
            Stmt::DeclScalar { .. } | Stmt::DeclArray { .. } | Stmt::DeclPointer { .. } => 0,
            Stmt::Assign { target, value } => {
                match target {
                    // Pointer variables take pointer-valued right-hand
                    // sides; everything else is an int store.
                    LValue::Scalar(_) => expr_temps(value, sigs).max(ptr_temps(value, sigs)),
                    LValue::Deref(_) => expr_temps(value, sigs),
                    LValue::Index { index, .. } => {
                        expr_temps(value, sigs).max(1 + expr_temps(index, sigs))
                    }
                }
            }
            Stmt::If { cond, then_body, else_body } => expr_temps(cond, sigs)
                .max(stmt_temps(then_body, sigs))
                .max(stmt_temps(else_body, sigs)),
            Stmt::While { cond, body } => expr_temps(cond, sigs).max(stmt_temps(body, sigs)),
            Stmt::Return(e) => expr_temps(e, sigs),
            Stmt::Call { name, args } => {
                expr_temps(&Expr::Call { name: name.clone(), args: args.clone() }, sigs)
            }
        };
        worst = worst.max(need);
    }
    worst
}

/// Compute the frame layout for one function.
pub fn layout_frame(
    f: &Function,
    sigs: &BTreeMap<String, Vec<ParamKind>>,
    guarded: bool,
) -> Result<FrameLayout, CompileError> {
    let decls = collect_decls(f)?;
    let temp_slots = stmt_temps(&f.body, sigs);

    let header = if guarded { HEADER_SIZE } else { 0 };
    let mut blocks = Vec::new();
    let mut vars = BTreeMap::new();
    let mut cursor = 0u32;

    let mut push_block = |cursor: &mut u32, kind, name: &str, size: u32| -> BlockLayout {
        let header_offset = guarded.then_some(*cursor);
        let data_offset = *cursor + header;
        *cursor = data_offset + size;
        let b = BlockLayout { kind, name: name.to_string(), header_offset, data_offset, size };
        blocks.push(b.clone());
        b
    };

    let system = push_block(&mut cursor, BlockKind::System, "<system>", SYSTEM_DATA);
    let scalar_bytes = 4 * (decls.scalars.len() as u32 + temp_slots);
    let scalars = push_block(&mut cursor, BlockKind::Scalars, "<scalars>", scalar_bytes);
    for (i, name) in decls.scalars.iter().enumerate() {
        vars.insert(name.clone(), VarSlot::Scalar { offset: 4 * i as u32 });
    }
    let temps_base = 4 * decls.scalars.len() as u32;

    for (name, len) in &decls.arrays {
        let b = push_block(&mut cursor, BlockKind::Array, name, 4 * len);
        vars.insert(name.clone(), VarSlot::Array { data_offset: b.data_offset, len: *len });
    }
    let ptr_bytes = if guarded { 8 } else { 4 };
    for name in &decls.pointers {
        let b = push_block(&mut cursor, BlockKind::Pointer, name, ptr_bytes);
        vars.insert(name.clone(), VarSlot::Pointer { data_offset: b.data_offset });
    }

    let frame_size = cursor;
    if frame_size > MAX_FRAME {
        return Err(CompileError::FrameTooLarge {
            function: f.name.clone(),
            size: frame_size,
            limit: MAX_FRAME,
        });
    }

    Ok(FrameLayout {
        function: f.name.clone(),
        guarded,
        frame_size,
        scalar_data_offset: scalars.data_offset,
        system_data_offset: system.data_offset,
        blocks,
        vars,
        temp_slots,
        temps_base,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compiler::parse;

    fn layout(src: &str, guarded: bool) -> FrameLayout {
        let prog = parse(src).unwrap();
        let sigs = BTreeMap::from([(
            prog.functions[0].name.clone(),
            prog.functions[0].params.iter().map(|p| p.kind).collect(),
        )]);
        layout_frame(&prog.functions[0], &sigs, guarded).unwrap()
    }

    const SRC: &str = "int main() {
        int x = 1;
        int y;
        int a[4];
        int *p;
        y = x + 2;
        return y;
    }";

    #[test]
    fn guarded_frame_interleaves_headers() {
        let l = layout(SRC, true);
        // system hdr 0, data 12 (8 B); scalars hdr 20, data 32.
        assert_eq!(l.system_data_offset, 12);
        assert_eq!(l.scalar_data_offset, 32);
        let a = &l.blocks[2];
        assert_eq!(a.kind, BlockKind::Array);
        // x, y, and at least one temp precede it: 32 + (2 + T)*4 + header.
        let scalar_bytes = l.blocks[1].size;
        assert_eq!(a.header_offset, Some(32 + scalar_bytes));
        assert_eq!(a.data_offset, 32 + scalar_bytes + 12);
        assert_eq!(a.size, 16);
        let p = &l.blocks[3];
        assert_eq!(p.kind, BlockKind::Pointer);
        assert_eq!(p.size, 8);
        assert_eq!(l.frame_size, p.data_offset + 8);
        assert_eq!(l.slot("x"), Some(VarSlot::Scalar { offset: 0 }));
        assert_eq!(l.slot("y"), Some(VarSlot::Scalar { offset: 4 }));
    }

    #[test]
    fn unguarded_frame_has_no_headers_and_thin_pointers() {
        let l = layout(SRC, false);
        assert_eq!(l.system_data_offset, 0);
        assert_eq!(l.scalar_data_offset, 8);
        assert!(l.blocks.iter().all(|b| b.header_offset.is_none()));
        let p = l.blocks.last().unwrap();
        assert_eq!(p.size, 4);
        assert_eq!(l.header_word_offsets(), Vec::<u32>::new());
    }

    #[test]
    fn layouts_differ_only_by_headers_and_pointer_width() {
        let on = layout(SRC, true);
        let off = layout(SRC, false);
        assert_eq!(on.blocks.len(), off.blocks.len());
        for (a, b) in on.blocks.iter().zip(&off.blocks) {
            assert_eq!(a.name, b.name);
            assert_eq!(a.kind, b.kind);
            if a.kind != BlockKind::Pointer {
                assert_eq!(a.size, b.size);
            }
        }
    }

    #[test]
    fn expected_header_words_describe_a_populated_frame() {
        let l = layout("int main() { int a[2]; return a[0]; }", true);
        let base = 0x000f_0000;
        let words = l.expected_header_words(base);
        // Three blocks (system, scalars, a) → nine header words.
        assert_eq!(words.len(), 9);
        let a = l.blocks.iter().find(|b| b.name == "a").unwrap();
        let magic = base + a.header_offset.unwrap();
        let data = base + a.data_offset;
        assert!(words.contains(&(magic, magic)));
        assert!(words.contains(&(magic + 4, data - 1)));
        assert!(words.contains(&(magic + 8, data + 8)));
    }

    #[test]
    fn duplicate_declarations_are_rejected() {
        let prog = parse("int main() { int x; int x; return 0; }").unwrap();
        let err = layout_frame(&prog.functions[0], &BTreeMap::new(), true).unwrap_err();
        assert!(matches!(err, CompileError::DuplicateVariable { .. }));
    }

    #[test]
    fn oversized_frames_are_rejected() {
        let prog = parse("int main() { int a[9000]; return 0; }").unwrap();
        let err = layout_frame(&prog.functions[0], &BTreeMap::new(), true).unwrap_err();
        assert!(matches!(err, CompileError::FrameTooLarge { .. }));
    }
}
