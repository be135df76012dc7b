//! Compiler from a small imperative language to instrumented assembly.

pub mod asm;
pub mod ast;
pub mod codegen;
pub mod layout;
pub mod lexer;
pub mod parser;

pub use asm::{assemble, parse_asm, AsmError, AsmInsn, AsmItem, AsmProgram, Assembled};
pub use ast::{BinOp, Expr, Function, LValue, Param, ParamKind, Program, Stmt};
pub use codegen::{audit_header_writes, compile, compile_with, CodegenOptions, CompileError};
pub use layout::{layout_frame, BlockKind, BlockLayout, FrameLayout, VarSlot};
pub use parser::{parse, ParseError};
