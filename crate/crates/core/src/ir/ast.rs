//! Scenario programs: functions in two dialects plus the bindings that connect them.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::types::{TypeDesc, TypeTable};
use crate::borrows::AliasingModel;
use crate::diagnostics::DiagnosticKind;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dialect {
    Host,
    Foreign,
}

impl fmt::Display for Dialect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Dialect::Host => "host",
            Dialect::Foreign => "foreign",
        })
    }
}

/// Source line of an item. Positions are not part of program identity, so
/// every `Line` compares equal to every other; this keeps re-rendered
/// programs equal to their originals.
#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
pub struct Line(pub u32);

impl PartialEq for Line {
    fn eq(&self, _: &Line) -> bool {
        true
    }
}

impl Eq for Line {}

/// Parameter and return types of a foreign function as seen from one side.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BindingSignature {
    pub params: Vec<TypeDesc>,
    pub ret: TypeDesc,
    pub variadic: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Param {
    pub name: String,
    pub ty: TypeDesc,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FnDef {
    pub name: String,
    pub dialect: Dialect,
    pub params: Vec<Param>,
    pub ret: TypeDesc,
    pub variadic: bool,
    pub body: Vec<Stmt>,
    /// For foreign functions: the host-side declarations that target this
    /// definition. They are not checked against the definition.
    pub bindings: Vec<BindingSignature>,
    pub line: Line,
}

impl FnDef {
    pub fn signature(&self) -> BindingSignature {
        BindingSignature {
            params: self.params.iter().map(|p| p.ty.clone()).collect(),
            ret: self.ret.clone(),
            variadic: self.variadic,
        }
    }

    /// Index of the statement following `label`.
    pub fn label_index(&self, label: &str) -> Option<usize> {
        self.body
            .iter()
            .position(|s| matches!(&s.kind, StmtKind::Label(l) if l == label))
    }
}

/// A host-side `extern fn` declaration.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Binding {
    pub name: String,
    /// Name of the foreign definition this binding links against.
    pub symbol: String,
    pub param_names: Vec<Option<String>>,
    pub sig: BindingSignature,
    pub line: Line,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StaticDef {
    pub name: String,
    pub ty: TypeDesc,
    pub init: Option<Init>,
    pub line: Line,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Init {
    /// Explicitly uninitialized, like `MaybeUninit::uninit()`.
    Uninit,
    Zeroed,
    Int(i128),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExpectTag {
    /// Clean run without leaks.
    Pass,
    /// No undefined behavior, but at least one leak.
    MemoryLeak,
    Unsupported,
    Timeout,
    Bug(DiagnosticKind),
}

impl fmt::Display for ExpectTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExpectTag::Pass => f.write_str("pass"),
            ExpectTag::MemoryLeak => f.write_str("memory-leak"),
            ExpectTag::Unsupported => f.write_str("unsupported"),
            ExpectTag::Timeout => f.write_str("timeout"),
            ExpectTag::Bug(k) => write!(f, "{k}"),
        }
    }
}

impl std::str::FromStr for ExpectTag {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "pass" => ExpectTag::Pass,
            "memory-leak" => ExpectTag::MemoryLeak,
            "unsupported" => ExpectTag::Unsupported,
            "timeout" => ExpectTag::Timeout,
            other => ExpectTag::Bug(other.parse()?),
        })
    }
}

/// `expect [tb|sb] <tag>`; no model means the expectation holds for both.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Expectation {
    pub model: Option<AliasingModel>,
    pub tag: ExpectTag,
    pub line: Line,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Operand {
    Int(i128),
    Local(String),
    Static(String),
    SizeOf(TypeDesc),
    Null,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Projection {
    Field(String),
    Index(u64),
}

/// `[*]base(.field | [index])*`. With `deref`, `base` holds a pointer and
/// the place is its pointee; without it, `base` must be a memory-backed local.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Place {
    pub deref: bool,
    pub base: String,
    pub projections: Vec<Projection>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum StmtKind {
    // host dialect
    Let { name: String, ty: TypeDesc, init: Option<Init> },
    Borrow { dst: String, place: Place, mutable: bool },
    RawCast { dst: String, src: Operand, ty: Option<TypeDesc> },
    AddrOf { dst: String, place: Place },
    Offset { dst: String, ptr: Operand, count: Operand },
    Read { dst: String, place: Place },
    Write { place: Place, value: Operand },
    CellGet { dst: String, place: Place },
    BoxNew { dst: String, ty: TypeDesc, init: Option<Init> },
    IntoRaw { dst: String, src: String },
    FromRaw { dst: String, src: Operand },
    Drop { name: String },
    Dealloc { ptr: Operand },
    Forget { ptr: Operand },
    Expose { dst: String, ptr: Operand },
    FromExposed { dst: String, addr: Operand, ty: Option<TypeDesc> },
    AssumeInit { place: Place },
    Spawn { dst: String, func: String, args: Vec<Operand> },
    Join { dst: Option<String>, thread: String },
    AssertEq { left: Operand, right: Operand },
    // foreign dialect
    Malloc { dst: String, size: Operand },
    Free { ptr: Operand },
    Alloca { dst: String, ty: TypeDesc },
    Load { dst: String, ty: TypeDesc, ptr: Operand },
    Store { ptr: Operand, ty: TypeDesc, value: Operand },
    Memset { ptr: Operand, byte: Operand, len: Operand },
    Memcpy { dst: Operand, src: Operand, len: Operand },
    Gep { dst: String, ptr: Operand, offset: Operand },
    // both dialects
    Call { dst: Option<String>, func: String, args: Vec<Operand> },
    Return { value: Option<Operand> },
    Set { dst: String, ty: Option<TypeDesc>, value: Operand },
    Arith { dst: String, op: ArithOp, lhs: Operand, rhs: Operand },
    Label(String),
    Goto(String),
    If { lhs: Operand, cmp: CmpOp, rhs: Operand, target: String },
    DumpBorrows { ptr: Operand },
}

impl StmtKind {
    pub fn keyword(&self) -> &'static str {
        match self {
            StmtKind::Let { .. } => "let",
            StmtKind::Borrow { mutable: true, .. } => "borrow_mut",
            StmtKind::Borrow { mutable: false, .. } => "borrow_shared",
            StmtKind::RawCast { .. } => "raw_cast",
            StmtKind::AddrOf { .. } => "addr_of",
            StmtKind::Offset { .. } => "offset",
            StmtKind::Read { .. } => "read",
            StmtKind::Write { .. } => "write",
            StmtKind::CellGet { .. } => "cell_get",
            StmtKind::BoxNew { .. } => "box_new",
            StmtKind::IntoRaw { .. } => "into_raw",
            StmtKind::FromRaw { .. } => "from_raw",
            StmtKind::Drop { .. } => "drop",
            StmtKind::Dealloc { .. } => "dealloc",
            StmtKind::Forget { .. } => "forget",
            StmtKind::Expose { .. } => "expose",
            StmtKind::FromExposed { .. } => "from_exposed",
            StmtKind::AssumeInit { .. } => "assume_init",
            StmtKind::Spawn { .. } => "spawn",
            StmtKind::Join { .. } => "join",
            StmtKind::AssertEq { .. } => "assert_eq",
            StmtKind::Malloc { .. } => "malloc",
            StmtKind::Free { .. } => "free",
            StmtKind::Alloca { .. } => "alloca",
            StmtKind::Load { .. } => "load",
            StmtKind::Store { .. } => "store",
            StmtKind::Memset { .. } => "memset",
            StmtKind::Memcpy { .. } => "memcpy",
            StmtKind::Gep { .. } => "gep",
            StmtKind::Call { .. } => "call",
            StmtKind::Return { .. } => "return",
            StmtKind::Set { .. } => "set",
            StmtKind::Arith { op: ArithOp::Add, .. } => "add",
            StmtKind::Arith { op: ArithOp::Sub, .. } => "sub",
            StmtKind::Arith { op: ArithOp::Mul, .. } => "mul",
            StmtKind::Label(_) => "label",
            StmtKind::Goto(_) => "goto",
            StmtKind::If { .. } => "if",
            StmtKind::DumpBorrows { .. } => "dump_borrows",
        }
    }

    /// `None` when the form is valid in both dialects.
    pub fn dialect(&self) -> Option<Dialect> {
        use StmtKind::*;
        match self {
            Let { .. } | Borrow { .. } | RawCast { .. } | AddrOf { .. } | Offset { .. }
            | Read { .. } | Write { .. } | CellGet { .. } | BoxNew { .. } | IntoRaw { .. }
            | FromRaw { .. } | Drop { .. } | Dealloc { .. } | Forget { .. } | Expose { .. }
            | FromExposed { .. } | AssumeInit { .. } | Spawn { .. } | Join { .. }
            | AssertEq { .. } => Some(Dialect::Host),
            Malloc { .. } | Free { .. } | Alloca { .. } | Load { .. } | Store { .. }
            | Memset { .. } | Memcpy { .. } | Gep { .. } => Some(Dialect::Foreign),
            Call { .. } | Return { .. } | Set { .. } | Arith { .. } | Label(_) | Goto(_)
            | If { .. } | DumpBorrows { .. } => None,
        }
    }

    /// The local this statement defines, if any.
    pub fn defines(&self) -> Option<&str> {
        use StmtKind::*;
        match self {
            Let { name, .. } => Some(name),
            Borrow { dst, .. } | RawCast { dst, .. } | AddrOf { dst, .. } | Offset { dst, .. }
            | Read { dst, .. } | CellGet { dst, .. } | BoxNew { dst, .. } | IntoRaw { dst, .. }
            | FromRaw { dst, .. } | Expose { dst, .. } | FromExposed { dst, .. }
            | Spawn { dst, .. } | Malloc { dst, .. } | Alloca { dst, .. } | Load { dst, .. }
            | Gep { dst, .. } | Set { dst, .. } | Arith { dst, .. } => Some(dst),
            Join { dst, .. } | Call { dst, .. } => dst.as_deref(),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Stmt {
    pub kind: StmtKind,
    pub line: Line,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ScenarioProgram {
    pub types: TypeTable,
    pub statics: Vec<StaticDef>,
    pub bindings: Vec<Binding>,
    pub functions: Vec<FnDef>,
    pub entry: String,
    pub expectations: Vec<Expectation>,
    /// Free-form classification tags (`tag offset-beyond-borrow`).
    pub tags: Vec<String>,
}

impl ScenarioProgram {
    pub fn function(&self, name: &str) -> Option<&FnDef> {
        self.functions.iter().find(|f| f.name == name)
    }

    pub fn function_index(&self, name: &str) -> Option<usize> {
        self.functions.iter().position(|f| f.name == name)
    }

    pub fn binding(&self, name: &str) -> Option<&Binding> {
        self.bindings.iter().find(|b| b.name == name)
    }

    pub fn static_def(&self, name: &str) -> Option<&StaticDef> {
        self.statics.iter().find(|s| s.name == name)
    }

    pub fn has_tag(&self, tag: &str) -> bool {
        self.tags.iter().any(|t| t == tag)
    }

    /// Expectations that apply to `model`, in declaration order.
    pub fn expectations_for(&self, model: AliasingModel) -> Vec<ExpectTag> {
        self.expectations
            .iter()
            .filter(|e| e.model.is_none_or(|m| m == model))
            .map(|e| e.tag)
            .collect()
    }

    pub fn statement_count(&self) -> usize {
        self.functions.iter().map(|f| f.body.len()).sum()
    }
}
