//! Abstract syntax for the source language.
//!
//! The language has exactly three kinds of variable — `int` scalars,
//! fixed-length `int` arrays, and `int*` pointers — and no heap, casts,
//! or globals. Everything lives in function frames. The parser is
//! type-oblivious beyond declarations; expressions are classified as
//! integer- or pointer-valued during code generation, where the symbol
//! table lives.

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Program {
    pub functions: Vec<Function>,
}

impl Program {
    pub fn function(&self, name: &str) -> Option<&Function> {
        self.functions.iter().find(|f| f.name == name)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Function {
    pub name: String,
    pub params: Vec<Param>,
    pub body: Vec<Stmt>,
    /// Source line of the definition (for error messages).
    pub line: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamKind {
    Scalar,
    Pointer,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Param {
    pub name: String,
    pub kind: ParamKind,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Stmt {
    /// `int x;` or `int x = e;`
    DeclScalar { name: String, init: Option<Expr> },
    /// `int a[N];`
    DeclArray { name: String, len: u32 },
    /// `int *p;` or `int *p = e;`
    DeclPointer { name: String, init: Option<Expr> },
    /// `lvalue = e;`
    Assign { target: LValue, value: Expr },
    /// `if (cond) { … } else { … }` — else optional (empty block).
    If { cond: Expr, then_body: Vec<Stmt>, else_body: Vec<Stmt> },
    /// `while (cond) { … }`
    While { cond: Expr, body: Vec<Stmt> },
    /// `return e;`
    Return(Expr),
    /// Bare call for effect: `f(a, b);`
    Call { name: String, args: Vec<Expr> },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LValue {
    /// `x = …`
    Scalar(String),
    /// `a[i] = …` (also `p[i] = …` through a pointer)
    Index { base: String, index: Expr },
    /// `*p = …`
    Deref(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Eq,
    Ne,
    Lt,
    Gt,
    Le,
    Ge,
}

impl BinOp {
    pub fn is_comparison(self) -> bool {
        matches!(self, BinOp::Eq | BinOp::Ne | BinOp::Lt | BinOp::Gt | BinOp::Le | BinOp::Ge)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Expr {
    /// Integer literal (parsed into i64 so `-2147483648` survives; codegen
    /// range-checks into a word).
    Int(i64),
    /// Named variable: scalar read, or a pointer/array when it appears in
    /// pointer position.
    Var(String),
    /// `a[i]` / `p[i]`
    Index {
        base: String,
        index: Box<Expr>,
    },
    /// `*p`
    Deref(String),
    /// `&x`, `&a[i]`
    AddrOf {
        var: String,
        index: Option<Box<Expr>>,
    },
    /// `-e`
    Neg(Box<Expr>),
    Binary {
        op: BinOp,
        lhs: Box<Expr>,
        rhs: Box<Expr>,
    },
    Call {
        name: String,
        args: Vec<Expr>,
    },
}

impl Expr {
    pub fn int(v: i64) -> Expr {
        Expr::Int(v)
    }

    pub fn var(name: &str) -> Expr {
        Expr::Var(name.to_string())
    }

    pub fn bin(op: BinOp, lhs: Expr, rhs: Expr) -> Expr {
        Expr::Binary { op, lhs: Box::new(lhs), rhs: Box::new(rhs) }
    }
}
