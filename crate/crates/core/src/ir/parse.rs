//! Line-oriented scenario parser.
//!
//! Every statement sits on its own line and starts with a keyword. Items
//! with bodies (`type`, `host fn`, `foreign fn`) open with `{` at the end of
//! the header line and close with a lone `}`.

use std::collections::{BTreeSet, HashSet};

use thiserror::Error;

use super::ast::*;
use super::layout::{layout_of, LayoutError};
use super::types::*;
use crate::borrows::AliasingModel;

#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("{line}:{column}: {kind}")]
pub struct ParseError {
    pub line: u32,
    pub column: u32,
    pub kind: ParseErrorKind,
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum ParseErrorKind {
    #[error("syntax error: {0}")]
    Syntax(String),
    #[error("unknown type `{0}`")]
    UnknownType(String),
    #[error("unknown function `{0}`")]
    UnknownFunction(String),
    #[error("unknown local `{0}`")]
    UnknownLocal(String),
    #[error("unknown static `{0}`")]
    UnknownStatic(String),
    #[error("unknown label `{0}`")]
    UnknownLabel(String),
    #[error("`{keyword}` is not allowed in a {dialect} function")]
    DialectViolation { keyword: String, dialect: Dialect },
    #[error("duplicate definition of `{0}`")]
    Duplicate(String),
    #[error("`{func}` expects {expected} argument(s), got {got}")]
    Arity {
        func: String,
        expected: usize,
        got: usize,
    },
    #[error("entry function: {0}")]
    Entry(String),
    #[error(transparent)]
    Layout(#[from] LayoutError),
}

impl ParseError {
    fn new(line: u32, column: u32, kind: ParseErrorKind) -> Self {
        ParseError { line, column, kind }
    }

    fn syntax(line: u32, column: u32, msg: impl Into<String>) -> Self {
        Self::new(line, column, ParseErrorKind::Syntax(msg.into()))
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Ident(String),
    Int(i128),
    Sym(&'static str),
}

#[derive(Clone, Debug)]
struct Token {
    tok: Tok,
    col: u32,
}

const SYMBOLS: &[&str] = &[
    "...", "->", "==", "!=", "{", "}", "(", ")", "[", "]", ",", ":", ";", "=", "*", "&", ".", "@",
    "<", ">",
];

fn lex(text: &str, line: u32) -> Result<Vec<Token>, ParseError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let col = i as u32 + 1;
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push(Token {
                tok: Tok::Ident(chars[start..i].iter().collect()),
                col,
            });
            continue;
        }
        let negative = c == '-' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit());
        if c.is_ascii_digit() || negative {
            let start = i;
            i += 1;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            let raw: String = chars[start..i].iter().filter(|c| **c != '_').collect();
            let (neg, body) = match raw.strip_prefix('-') {
                Some(b) => (true, b),
                None => (false, raw.as_str()),
            };
            let value = if let Some(hex) = body.strip_prefix("0x") {
                i128::from_str_radix(hex, 16)
            } else {
                body.parse::<i128>()
            }
            .map_err(|_| ParseError::syntax(line, col, format!("bad integer `{raw}`")))?;
            out.push(Token {
                tok: Tok::Int(if neg { -value } else { value }),
                col,
            });
            continue;
        }
        let rest: String = chars[i..chars.len().min(i + 3)].iter().collect();
        let Some(sym) = SYMBOLS.iter().find(|s| rest.starts_with(**s)) else {
            return Err(ParseError::syntax(line, col, format!("unexpected character `{c}`")));
        };
        out.push(Token {
            tok: Tok::Sym(sym),
            col,
        });
        i += sym.len();
    }
    Ok(out)
}

struct Cursor {
    toks: Vec<Token>,
    pos: usize,
    line: u32,
    end_col: u32,
}

impl Cursor {
    fn new(text: &str, line: u32) -> Result<Self, ParseError> {
        Ok(Cursor {
            toks: lex(text, line)?,
            pos: 0,
            line,
            end_col: text.chars().count() as u32 + 1,
        })
    }

    fn col(&self) -> u32 {
        self.toks.get(self.pos).map_or(self.end_col, |t| t.col)
    }

    fn err(&self, msg: impl Into<String>) -> ParseError {
        ParseError::syntax(self.line, self.col(), msg)
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.tok)
    }

    fn peek_at(&self, n: usize) -> Option<&Tok> {
        self.toks.get(self.pos + n).map(|t| &t.tok)
    }

    fn at_end(&self) -> bool {
        self.pos >= self.toks.len()
    }

    fn is_sym(&self, s: &str) -> bool {
        matches!(self.peek(), Some(Tok::Sym(x)) if *x == s)
    }

    fn is_ident(&self, s: &str) -> bool {
        matches!(self.peek(), Some(Tok::Ident(x)) if x == s)
    }

    fn eat_sym(&mut self, s: &str) -> bool {
        if self.is_sym(s) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn eat_ident(&mut self, s: &str) -> bool {
        if self.is_ident(s) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_sym(&mut self, s: &str) -> Result<(), ParseError> {
        if self.eat_sym(s) {
            Ok(())
        } else {
            Err(self.err(format!("expected `{s}`")))
        }
    }

    fn expect_keyword(&mut self, s: &str) -> Result<(), ParseError> {
        if self.eat_ident(s) {
            Ok(())
        } else {
            Err(self.err(format!("expected `{s}`")))
        }
    }

    fn ident(&mut self) -> Result<String, ParseError> {
        match self.peek() {
            Some(Tok::Ident(s)) => {
                let s = s.clone();
                self.pos += 1;
                Ok(s)
            }
            _ => Err(self.err("expected a name")),
        }
    }

    fn int(&mut self) -> Result<i128, ParseError> {
        match self.peek() {
            Some(Tok::Int(v)) => {
                let v = *v;
                self.pos += 1;
                Ok(v)
            }
            _ => Err(self.err("expected an integer")),
        }
    }

    fn uint(&mut self) -> Result<u64, ParseError> {
        let col = self.col();
        let v = self.int()?;
        u64::try_from(v).map_err(|_| ParseError::syntax(self.line, col, "expected a non-negative integer"))
    }

    fn finish(&self) -> Result<(), ParseError> {
        if self.at_end() {
            Ok(())
        } else {
            Err(self.err("unexpected trailing tokens"))
        }
    }

    fn ty(&mut self) -> Result<TypeDesc, ParseError> {
        if self.eat_sym("&") {
            let kind = if self.eat_ident("mut") {
                PtrKind::MutRef
            } else {
                PtrKind::SharedRef
            };
            return self.pointee(kind);
        }
        if self.eat_sym("*") {
            let kind = if self.eat_ident("mut") {
                PtrKind::RawMut
            } else if self.eat_ident("const") {
                PtrKind::RawConst
            } else {
                return Err(self.err("expected `const` or `mut` after `*`"));
            };
            return self.pointee(kind);
        }
        if self.eat_sym("[") {
            let elem = self.ty()?;
            self.expect_sym(";")?;
            let n = self.uint()?;
            self.expect_sym("]")?;
            return Ok(TypeDesc::Array(Box::new(elem), n));
        }
        if self.eat_sym("(") {
            self.expect_sym(")")?;
            return Ok(TypeDesc::Unit);
        }
        let col = self.col();
        let name = self.ident()?;
        let t = match name.as_str() {
            "unit" => TypeDesc::Unit,
            "i8" => TypeDesc::Int(IntType::I8),
            "i16" => TypeDesc::Int(IntType::I16),
            "i32" => TypeDesc::Int(IntType::I32),
            "i64" | "isize" => TypeDesc::Int(IntType::I64),
            "u8" | "bool" => TypeDesc::Int(IntType::U8),
            "u16" => TypeDesc::Int(IntType::U16),
            "u32" => TypeDesc::Int(IntType::U32),
            "u64" | "usize" => TypeDesc::Int(IntType::U64),
            "ptr" => {
                if self.eat_sym("<") {
                    let p = self.ty()?;
                    self.expect_sym(">")?;
                    TypeDesc::ptr(PtrKind::Opaque, p)
                } else {
                    TypeDesc::opaque_ptr()
                }
            }
            "cell" | "phantom" => {
                self.expect_sym("<")?;
                let inner = Box::new(self.ty()?);
                self.expect_sym(">")?;
                if name == "cell" {
                    TypeDesc::Cell(inner)
                } else {
                    TypeDesc::Phantom(inner)
                }
            }
            "opaque" => {
                return Err(ParseError::syntax(self.line, col, "`opaque` is only valid as a pointee"))
            }
            _ => TypeDesc::Struct(name),
        };
        Ok(t)
    }

    fn pointee(&mut self, kind: PtrKind) -> Result<TypeDesc, ParseError> {
        if self.eat_ident("opaque") {
            Ok(TypeDesc::Ptr { kind, pointee: None })
        } else {
            Ok(TypeDesc::ptr(kind, self.ty()?))
        }
    }

    fn init(&mut self) -> Result<Option<Init>, ParseError> {
        if !self.eat_sym("=") {
            return Ok(None);
        }
        if self.eat_ident("uninit") {
            Ok(Some(Init::Uninit))
        } else if self.eat_ident("zeroed") {
            Ok(Some(Init::Zeroed))
        } else {
            Ok(Some(Init::Int(self.int()?)))
        }
    }

    fn operand(&mut self) -> Result<Operand, ParseError> {
        match self.peek() {
            Some(Tok::Int(_)) => Ok(Operand::Int(self.int()?)),
            Some(Tok::Sym("@")) => {
                self.pos += 1;
                Ok(Operand::Static(self.ident()?))
            }
            Some(Tok::Ident(s)) if s == "null" => {
                self.pos += 1;
                Ok(Operand::Null)
            }
            Some(Tok::Ident(s)) if s == "sizeof" => {
                self.pos += 1;
                self.expect_sym("(")?;
                let t = self.ty()?;
                self.expect_sym(")")?;
                Ok(Operand::SizeOf(t))
            }
            Some(Tok::Ident(_)) => Ok(Operand::Local(self.ident()?)),
            _ => Err(self.err("expected an operand")),
        }
    }

    fn place(&mut self) -> Result<Place, ParseError> {
        let deref = self.eat_sym("*");
        let base = self.ident()?;
        let mut projections = Vec::new();
        loop {
            if self.eat_sym(".") {
                projections.push(Projection::Field(self.ident()?));
            } else if self.eat_sym("[") {
                projections.push(Projection::Index(self.uint()?));
                self.expect_sym("]")?;
            } else {
                break;
            }
        }
        Ok(Place {
            deref,
            base,
            projections,
        })
    }

    fn args(&mut self) -> Result<Vec<Operand>, ParseError> {
        self.expect_sym("(")?;
        let mut args = Vec::new();
        if !self.eat_sym(")") {
            loop {
                args.push(self.operand()?);
                if self.eat_sym(")") {
                    break;
                }
                self.expect_sym(",")?;
            }
        }
        Ok(args)
    }

    /// `name = ` prefix used by most value-producing statements.
    fn dst(&mut self) -> Result<String, ParseError> {
        let name = self.ident()?;
        self.expect_sym("=")?;
        Ok(name)
    }

    fn opt_as_type(&mut self) -> Result<Option<TypeDesc>, ParseError> {
        if self.eat_ident("as") {
            Ok(Some(self.ty()?))
        } else {
            Ok(None)
        }
    }

    fn pair(&mut self) -> Result<(Operand, Operand), ParseError> {
        let a = self.operand()?;
        self.expect_sym(",")?;
        Ok((a, self.operand()?))
    }
}

fn parse_stmt(c: &mut Cursor) -> Result<StmtKind, ParseError> {
    let kw = c.ident()?;
    let kind = match kw.as_str() {
        "let" => {
            let name = c.ident()?;
            c.expect_sym(":")?;
            let ty = c.ty()?;
            StmtKind::Let { name, ty, init: c.init()? }
        }
        "borrow_mut" | "borrow_shared" => {
            let dst = c.dst()?;
            StmtKind::Borrow {
                dst,
                place: c.place()?,
                mutable: kw == "borrow_mut",
            }
        }
        "raw_cast" => {
            let dst = c.dst()?;
            let src = c.operand()?;
            StmtKind::RawCast { dst, src, ty: c.opt_as_type()? }
        }
        "addr_of" => {
            let dst = c.dst()?;
            StmtKind::AddrOf { dst, place: c.place()? }
        }
        "offset" => {
            let dst = c.dst()?;
            let (ptr, count) = c.pair()?;
            StmtKind::Offset { dst, ptr, count }
        }
        "read" => {
            let dst = c.dst()?;
            StmtKind::Read { dst, place: c.place()? }
        }
        "write" => {
            let place = c.place()?;
            c.expect_sym("=")?;
            StmtKind::Write { place, value: c.operand()? }
        }
        "cell_get" => {
            let dst = c.dst()?;
            StmtKind::CellGet { dst, place: c.place()? }
        }
        "box_new" => {
            let dst = c.ident()?;
            c.expect_sym(":")?;
            let ty = c.ty()?;
            StmtKind::BoxNew { dst, ty, init: c.init()? }
        }
        "into_raw" => {
            let dst = c.dst()?;
            StmtKind::IntoRaw { dst, src: c.ident()? }
        }
        "from_raw" => {
            let dst = c.dst()?;
            StmtKind::FromRaw { dst, src: c.operand()? }
        }
        "drop" => StmtKind::Drop { name: c.ident()? },
        "dealloc" => StmtKind::Dealloc { ptr: c.operand()? },
        "forget" => StmtKind::Forget { ptr: c.operand()? },
        "expose" => {
            let dst = c.dst()?;
            StmtKind::Expose { dst, ptr: c.operand()? }
        }
        "from_exposed" => {
            let dst = c.dst()?;
            let addr = c.operand()?;
            StmtKind::FromExposed { dst, addr, ty: c.opt_as_type()? }
        }
        "assume_init" => StmtKind::AssumeInit { place: c.place()? },
        "spawn" => {
            let dst = c.dst()?;
            let func = c.ident()?;
            StmtKind::Spawn { dst, func, args: c.args()? }
        }
        "join" => {
            let dst = if matches!(c.peek_at(1), Some(Tok::Sym("="))) {
                Some(c.dst()?)
            } else {
                None
            };
            StmtKind::Join { dst, thread: c.ident()? }
        }
        "assert_eq" => {
            let (left, right) = c.pair()?;
            StmtKind::AssertEq { left, right }
        }
        "malloc" => {
            let dst = c.dst()?;
            StmtKind::Malloc { dst, size: c.operand()? }
        }
        "free" => StmtKind::Free { ptr: c.operand()? },
        "alloca" => {
            let dst = c.ident()?;
            c.expect_sym(":")?;
            StmtKind::Alloca { dst, ty: c.ty()? }
        }
        "load" => {
            let dst = c.ident()?;
            c.expect_sym(":")?;
            let ty = c.ty()?;
            c.expect_sym("=")?;
            StmtKind::Load { dst, ty, ptr: c.operand()? }
        }
        "store" => {
            let ptr = c.operand()?;
            c.expect_sym(":")?;
            let ty = c.ty()?;
            c.expect_sym("=")?;
            StmtKind::Store { ptr, ty, value: c.operand()? }
        }
        "memset" | "memcpy" => {
            let a = c.operand()?;
            c.expect_sym(",")?;
            let (b, len) = c.pair()?;
            if kw == "memset" {
                StmtKind::Memset { ptr: a, byte: b, len }
            } else {
                StmtKind::Memcpy { dst: a, src: b, len }
            }
        }
        "gep" => {
            let dst = c.dst()?;
            let (ptr, offset) = c.pair()?;
            StmtKind::Gep { dst, ptr, offset }
        }
        "call" => {
            let dst = if matches!(c.peek_at(1), Some(Tok::Sym("="))) {
                Some(c.dst()?)
            } else {
                None
            };
            let func = c.ident()?;
            StmtKind::Call { dst, func, args: c.args()? }
        }
        "return" => StmtKind::Return {
            value: if c.at_end() { None } else { Some(c.operand()?) },
        },
        "set" => {
            let dst = c.ident()?;
            let ty = if c.eat_sym(":") { Some(c.ty()?) } else { None };
            c.expect_sym("=")?;
            StmtKind::Set { dst, ty, value: c.operand()? }
        }
        "add" | "sub" | "mul" => {
            let dst = c.dst()?;
            let (lhs, rhs) = c.pair()?;
            let op = match kw.as_str() {
                "add" => ArithOp::Add,
                "sub" => ArithOp::Sub,
                _ => ArithOp::Mul,
            };
            StmtKind::Arith { dst, op, lhs, rhs }
        }
        "label" => StmtKind::Label(c.ident()?),
        "goto" => StmtKind::Goto(c.ident()?),
        "if" => {
            let lhs = c.operand()?;
            let cmp = if c.eat_sym("==") {
                CmpOp::Eq
            } else if c.eat_sym("!=") {
                CmpOp::Ne
            } else if c.eat_sym("<") {
                CmpOp::Lt
            } else {
                return Err(c.err("expected `==`, `!=` or `<`"));
            };
            let rhs = c.operand()?;
            c.expect_keyword("goto")?;
            StmtKind::If { lhs, cmp, rhs, target: c.ident()? }
        }
        "dump_borrows" => StmtKind::DumpBorrows { ptr: c.operand()? },
        other => {
            return Err(ParseError::syntax(
                c.line,
                c.toks[0].col,
                format!("unknown statement `{other}`"),
            ))
        }
    };
    c.finish()?;
    Ok(kind)
}

/// Parses `(params) [-> ret]`. Parameters may be `name: T` or a bare `T`
/// unless `named` is set; `...` marks a variadic list.
fn parse_signature(
    c: &mut Cursor,
    named: bool,
) -> Result<(Vec<(Option<String>, TypeDesc)>, TypeDesc, bool), ParseError> {
    c.expect_sym("(")?;
    let mut params = Vec::new();
    let mut variadic = false;
    if !c.eat_sym(")") {
        loop {
            if c.eat_sym("...") {
                variadic = true;
                c.expect_sym(")")?;
                break;
            }
            let has_name = matches!(c.peek(), Some(Tok::Ident(_))) && matches!(c.peek_at(1), Some(Tok::Sym(":")));
            let name = if has_name || named {
                let n = c.ident()?;
                c.expect_sym(":")?;
                Some(n)
            } else {
                None
            };
            params.push((name, c.ty()?));
            if c.eat_sym(")") {
                break;
            }
            c.expect_sym(",")?;
        }
    }
    let ret = if c.eat_sym("->") { c.ty()? } else { TypeDesc::Unit };
    Ok((params, ret, variadic))
}

enum Open {
    Type(StructDef, u32),
    Func(FnDef),
}

/// Parses and validates a scenario. Never panics on malformed input.
pub fn parse_scenario(text: &str) -> Result<ScenarioProgram, ParseError> {
    let mut types = TypeTable::new();
    let mut type_lines = Vec::new();
    let mut statics = Vec::new();
    let mut bindings = Vec::new();
    let mut functions: Vec<FnDef> = Vec::new();
    let mut expectations = Vec::new();
    let mut tags = Vec::new();
    let mut entry: Option<String> = None;
    let mut open: Option<Open> = None;

    for (idx, raw) in text.lines().enumerate() {
        let line = idx as u32 + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let indent = raw.len() - raw.trim_start().len();
        if content == "}" {
            match open.take() {
                Some(Open::Type(def, l)) => {
                    if types.contains(&def.name) {
                        return Err(ParseError::new(l, 1, ParseErrorKind::Duplicate(def.name)));
                    }
                    type_lines.push((def.name.clone(), l));
                    types.insert(def);
                }
                Some(Open::Func(f)) => functions.push(f),
                None => return Err(ParseError::syntax(line, indent as u32 + 1, "unmatched `}`")),
            }
            continue;
        }
        match &mut open {
            Some(Open::Type(def, _)) => {
                let mut c = Cursor::new(raw, line)?;
                let name = c.ident()?;
                c.expect_sym(":")?;
                let ty = c.ty()?;
                let offset = if c.eat_sym("@") { Some(c.uint()?) } else { None };
                c.finish()?;
                if def.fields.iter().any(|f| f.name == name) {
                    return Err(ParseError::new(line, indent as u32 + 1, ParseErrorKind::Duplicate(name)));
                }
                def.fields.push(FieldDef { name, ty, offset });
                continue;
            }
            Some(Open::Func(f)) => {
                let mut c = Cursor::new(raw, line)?;
                let kind = parse_stmt(&mut c)?;
                f.body.push(Stmt { kind, line: Line(line) });
                continue;
            }
            None => {}
        }

        let words: Vec<&str> = content.split_whitespace().collect();
        match words[0] {
            "expect" => {
                let (model, tag) = match words.as_slice() {
                    [_, tag] => (None, *tag),
                    [_, m, tag] => {
                        let model = m.parse::<AliasingModel>().map_err(|e| {
                            ParseError::syntax(line, indent as u32 + 8, e)
                        })?;
                        (Some(model), *tag)
                    }
                    _ => return Err(ParseError::syntax(line, 1, "expected `expect [tb|sb] <outcome>`")),
                };
                let tag = tag
                    .parse::<ExpectTag>()
                    .map_err(|e| ParseError::syntax(line, indent as u32 + 1, e))?;
                expectations.push(Expectation { model, tag, line: Line(line) });
            }
            "tag" => {
                if words.len() != 2 {
                    return Err(ParseError::syntax(line, 1, "expected `tag <name>`"));
                }
                tags.push(words[1].to_string());
            }
            _ => {
                let mut c = Cursor::new(raw, line)?;
                let kw = c.ident()?;
                match kw.as_str() {
                    "entry" => {
                        entry = Some(c.ident()?);
                        c.finish()?;
                    }
                    "type" => {
                        let name = c.ident()?;
                        c.expect_sym("{")?;
                        c.finish()?;
                        open = Some(Open::Type(StructDef { name, fields: Vec::new() }, line));
                    }
                    "static" => {
                        let name = c.ident()?;
                        c.expect_sym(":")?;
                        let ty = c.ty()?;
                        let init = c.init()?;
                        c.finish()?;
                        statics.push(StaticDef { name, ty, init, line: Line(line) });
                    }
                    "extern" => {
                        c.expect_keyword("fn")?;
                        let name = c.ident()?;
                        let (params, ret, variadic) = parse_signature(&mut c, false)?;
                        let symbol = if c.eat_ident("link") { c.ident()? } else { name.clone() };
                        c.finish()?;
                        let (param_names, params): (Vec<_>, Vec<_>) = params.into_iter().unzip();
                        bindings.push(Binding {
                            name,
                            symbol,
                            param_names,
                            sig: BindingSignature { params, ret, variadic },
                            line: Line(line),
                        });
                    }
                    "host" | "foreign" => {
                        let dialect = if kw == "host" { Dialect::Host } else { Dialect::Foreign };
                        c.expect_keyword("fn")?;
                        let name = c.ident()?;
                        let (params, ret, variadic) = parse_signature(&mut c, true)?;
                        if variadic && dialect == Dialect::Host {
                            return Err(c.err("host functions cannot be variadic"));
                        }
                        c.expect_sym("{")?;
                        c.finish()?;
                        open = Some(Open::Func(FnDef {
                            name,
                            dialect,
                            params: params
                                .into_iter()
                                .map(|(n, ty)| Param { name: n.unwrap_or_default(), ty })
                                .collect(),
                            ret,
                            variadic,
                            body: Vec::new(),
                            bindings: Vec::new(),
                            line: Line(line),
                        }));
                    }
                    other => {
                        return Err(ParseError::syntax(
                            line,
                            indent as u32 + 1,
                            format!("unexpected `{other}` at top level"),
                        ))
                    }
                }
            }
        }
    }
    if open.is_some() {
        let line = text.lines().count() as u32;
        return Err(ParseError::syntax(line.max(1), 1, "unterminated block"));
    }

    let mut program = ScenarioProgram {
        types,
        statics,
        bindings,
        functions,
        entry: entry.unwrap_or_else(|| "main".to_string()),
        expectations,
        tags,
    };
    validate(&mut program, &type_lines)?;
    Ok(program)
}

fn check_type(ty: &TypeDesc, types: &TypeTable, line: u32) -> Result<(), ParseError> {
    let unknown = |n: &str| ParseError::new(line, 1, ParseErrorKind::UnknownType(n.to_string()));
    match ty {
        TypeDesc::Unit | TypeDesc::Int(_) => Ok(()),
        TypeDesc::Ptr { pointee, .. } => match pointee {
            Some(p) => check_type(p, types, line),
            None => Ok(()),
        },
        TypeDesc::Struct(n) => {
            if types.contains(n) {
                Ok(())
            } else {
                Err(unknown(n))
            }
        }
        TypeDesc::Array(e, _) | TypeDesc::Cell(e) | TypeDesc::Phantom(e) => check_type(e, types, line),
    }
}

fn validate(p: &mut ScenarioProgram, type_lines: &[(String, u32)]) -> Result<(), ParseError> {
    for (name, line) in type_lines {
        let def = p.types.get(name).expect("recorded type");
        for f in &def.fields {
            check_type(&f.ty, &p.types, *line)?;
        }
        layout_of(&TypeDesc::Struct(name.clone()), &p.types)
            .map_err(|e| ParseError::new(*line, 1, e.into()))?;
    }
    let mut seen = HashSet::new();
    for s in &p.statics {
        check_type(&s.ty, &p.types, s.line.0)?;
        if !seen.insert(s.name.clone()) {
            return Err(ParseError::new(s.line.0, 1, ParseErrorKind::Duplicate(s.name.clone())));
        }
    }
    let mut fn_names = HashSet::new();
    for f in &p.functions {
        if !fn_names.insert(f.name.clone()) {
            return Err(ParseError::new(f.line.0, 1, ParseErrorKind::Duplicate(f.name.clone())));
        }
        for param in &f.params {
            check_type(&param.ty, &p.types, f.line.0)?;
        }
        check_type(&f.ret, &p.types, f.line.0)?;
    }
    let mut binding_names = HashSet::new();
    for b in &p.bindings {
        if !binding_names.insert(b.name.clone()) {
            return Err(ParseError::new(b.line.0, 1, ParseErrorKind::Duplicate(b.name.clone())));
        }
        if p.function(&b.name).is_some_and(|f| f.dialect == Dialect::Host) {
            return Err(ParseError::new(b.line.0, 1, ParseErrorKind::Duplicate(b.name.clone())));
        }
        for t in b.sig.params.iter().chain(std::iter::once(&b.sig.ret)) {
            check_type(t, &p.types, b.line.0)?;
        }
        if let Some(target) = p.function(&b.symbol) {
            if target.dialect != Dialect::Foreign {
                return Err(ParseError::new(
                    b.line.0,
                    1,
                    ParseErrorKind::Syntax(format!("binding `{}` links to host function `{}`", b.name, b.symbol)),
                ));
            }
        }
    }
    let entry_line = p.functions.first().map_or(1, |f| f.line.0);
    match p.function(&p.entry) {
        None => {
            return Err(ParseError::new(
                entry_line,
                1,
                ParseErrorKind::Entry(format!("`{}` is not defined", p.entry)),
            ))
        }
        Some(f) if f.dialect != Dialect::Host => {
            return Err(ParseError::new(f.line.0, 1, ParseErrorKind::Entry("must be a host function".into())))
        }
        Some(f) if !f.params.is_empty() => {
            return Err(ParseError::new(f.line.0, 1, ParseErrorKind::Entry("must take no parameters".into())))
        }
        _ => {}
    }

    for f in &p.functions {
        validate_body(p, f)?;
    }

    let bindings = p.bindings.clone();
    for f in &mut p.functions {
        if f.dialect == Dialect::Foreign {
            f.bindings = bindings.iter().filter(|b| b.symbol == f.name).map(|b| b.sig.clone()).collect();
        }
    }
    Ok(())
}

fn validate_body(p: &ScenarioProgram, f: &FnDef) -> Result<(), ParseError> {
    let mut scope: BTreeSet<&str> = f.params.iter().map(|p| p.name.as_str()).collect();
    let labels: BTreeSet<&str> = f
        .body
        .iter()
        .filter_map(|s| match &s.kind {
            StmtKind::Label(l) => Some(l.as_str()),
            _ => None,
        })
        .collect();
    for stmt in &f.body {
        let line = stmt.line.0;
        let err = |kind| ParseError::new(line, 1, kind);
        if let Some(d) = stmt.kind.dialect() {
            if d != f.dialect {
                return Err(err(ParseErrorKind::DialectViolation {
                    keyword: stmt.kind.keyword().to_string(),
                    dialect: f.dialect,
                }));
            }
        }
        let mut operands: Vec<&Operand> = Vec::new();
        let mut places: Vec<&Place> = Vec::new();
        let mut names: Vec<&str> = Vec::new();
        let mut types: Vec<&TypeDesc> = Vec::new();
        use StmtKind::*;
        match &stmt.kind {
            Let { ty, .. } | BoxNew { ty, .. } | Alloca { ty, .. } => types.push(ty),
            Borrow { place, .. } | AddrOf { place, .. } | Read { place, .. } | CellGet { place, .. }
            | AssumeInit { place } => places.push(place),
            Write { place, value } => {
                places.push(place);
                operands.push(value);
            }
            RawCast { src, ty, .. } => {
                operands.push(src);
                types.extend(ty.iter());
            }
            FromExposed { addr, ty, .. } => {
                operands.push(addr);
                types.extend(ty.iter());
            }
            Offset { ptr, count, .. } => operands.extend([ptr, count]),
            IntoRaw { src, .. } => names.push(src),
            Drop { name } => names.push(name),
            FromRaw { src, .. } => operands.push(src),
            Dealloc { ptr } | Forget { ptr } | Expose { ptr, .. } | Free { ptr }
            | DumpBorrows { ptr } => operands.push(ptr),
            Join { thread, .. } => names.push(thread),
            AssertEq { left, right } => operands.extend([left, right]),
            Malloc { size, .. } => operands.push(size),
            Load { ty, ptr, .. } => {
                types.push(ty);
                operands.push(ptr);
            }
            Store { ptr, ty, value } => {
                types.push(ty);
                operands.extend([ptr, value]);
            }
            Memset { ptr, byte, len } => operands.extend([ptr, byte, len]),
            Memcpy { dst, src, len } => operands.extend([dst, src, len]),
            Gep { ptr, offset, .. } => operands.extend([ptr, offset]),
            Call { func, args, .. } | Spawn { func, args, .. } => {
                operands.extend(args.iter());
                check_call(p, f, &stmt.kind, func, args.len(), line)?;
            }
            Return { value } => operands.extend(value.iter()),
            Set { ty, value, .. } => {
                types.extend(ty.iter());
                operands.push(value);
            }
            Arith { lhs, rhs, .. } => operands.extend([lhs, rhs]),
            Label(_) => {}
            Goto(target) | If { target, .. } => {
                if let If { lhs, rhs, .. } = &stmt.kind {
                    operands.extend([lhs, rhs]);
                }
                if !labels.contains(target.as_str()) {
                    return Err(err(ParseErrorKind::UnknownLabel(target.clone())));
                }
            }
        }
        for t in types {
            check_type(t, &p.types, line)?;
        }
        for op in operands {
            match op {
                Operand::Local(n) => names.push(n),
                Operand::Static(n) => {
                    if p.static_def(n).is_none() {
                        return Err(err(ParseErrorKind::UnknownStatic(n.clone())));
                    }
                }
                Operand::SizeOf(t) => check_type(t, &p.types, line)?,
                Operand::Int(_) | Operand::Null => {}
            }
        }
        names.extend(places.iter().map(|pl| pl.base.as_str()));
        for n in names {
            if !scope.contains(n) {
                return Err(err(ParseErrorKind::UnknownLocal(n.to_string())));
            }
        }
        if let Some(d) = stmt.kind.defines() {
            scope.insert(d);
        }
    }
    Ok(())
}

fn check_call(
    p: &ScenarioProgram,
    caller: &FnDef,
    kind: &StmtKind,
    func: &str,
    argc: usize,
    line: u32,
) -> Result<(), ParseError> {
    let err = |k| ParseError::new(line, 1, k);
    let arity = |expected: usize, variadic: bool| {
        if argc == expected || (variadic && argc > expected) {
            Ok(())
        } else {
            Err(err(ParseErrorKind::Arity { func: func.to_string(), expected, got: argc }))
        }
    };
    if matches!(kind, StmtKind::Spawn { .. }) {
        return match p.function(func) {
            Some(t) if t.dialect == Dialect::Host => arity(t.params.len(), false),
            _ => Err(err(ParseErrorKind::UnknownFunction(func.to_string()))),
        };
    }
    match caller.dialect {
        Dialect::Host => {
            if let Some(t) = p.function(func).filter(|t| t.dialect == Dialect::Host) {
                return arity(t.params.len(), false);
            }
            match p.binding(func) {
                Some(b) => arity(b.sig.params.len(), b.sig.variadic),
                None => Err(err(ParseErrorKind::UnknownFunction(func.to_string()))),
            }
        }
        Dialect::Foreign => match p.function(func) {
            Some(t) => arity(t.params.len(), t.variadic),
            None => Err(err(ParseErrorKind::UnknownFunction(func.to_string()))),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO_BORROWS: &str = "\
host fn main() {
  let x: i32 = 0
  borrow_mut y = x
  raw_cast y = y
  borrow_mut z = x
  write *y = 1
  write *z = 0
}
";

    #[test]
    fn expired_permission_example_parses() {
        let p = parse_scenario(TWO_BORROWS).unwrap();
        assert_eq!(p.functions.len(), 1);
        assert_eq!(p.functions[0].dialect, Dialect::Host);
        assert_eq!(p.statement_count(), 6);
    }

    #[test]
    fn empty_entry() {
        let p = parse_scenario("host fn main() {\n}\n").unwrap();
        assert_eq!(p.statement_count(), 0);
    }

    #[test]
    fn borrow_in_foreign_body_is_a_dialect_violation() {
        let src = "foreign fn f(p: ptr) {\n  borrow_mut q = *p\n}\nhost fn main() {\n}\n";
        let e = parse_scenario(src).unwrap_err();
        assert_eq!(e.line, 2);
        assert!(matches!(e.kind, ParseErrorKind::DialectViolation { dialect: Dialect::Foreign, .. }));
    }

    #[test]
    fn malloc_in_host_body_is_a_dialect_violation() {
        let e = parse_scenario("host fn main() {\n  malloc p = 4\n}\n").unwrap_err();
        assert!(matches!(e.kind, ParseErrorKind::DialectViolation { dialect: Dialect::Host, .. }));
    }

    #[test]
    fn syntax_errors_carry_positions() {
        let e = parse_scenario("host fn main() {\n  let x: i32 = = 0\n}\n").unwrap_err();
        assert_eq!((e.line, e.column), (2, 16));
        assert!(matches!(e.kind, ParseErrorKind::Syntax(_)));
    }

    #[test]
    fn unknown_names() {
        let e = parse_scenario("host fn main() {\n  let x: Nope\n}\n").unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::UnknownType("Nope".into()));
        let e = parse_scenario("host fn main() {\n  call nope()\n}\n").unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::UnknownFunction("nope".into()));
        let e = parse_scenario("host fn main() {\n  write *p = 1\n}\n").unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::UnknownLocal("p".into()));
    }

    #[test]
    fn locals_must_be_defined_before_use() {
        let src = "host fn main() {\n  write *p = 1\n  let q: i32 = 0\n  addr_of p = q\n}\n";
        assert!(parse_scenario(src).is_err());
    }

    #[test]
    fn entry_must_be_parameterless_host_fn() {
        let e = parse_scenario("foreign fn main() {\n}\n").unwrap_err();
        assert!(matches!(e.kind, ParseErrorKind::Entry(_)));
        let e = parse_scenario("host fn main(x: i32) {\n}\n").unwrap_err();
        assert!(matches!(e.kind, ParseErrorKind::Entry(_)));
    }

    #[test]
    fn bindings_attach_to_definitions() {
        let src = "\
foreign fn check(v: i64) -> i32 {
  return 0
}
extern fn check(i32)
extern fn check_alt(v: i64) -> i32 link check
host fn main() {
  call check(1)
  call r = check_alt(1)
}
expect invalid-binding
expect sb pass
tag typing
";
        let p = parse_scenario(src).unwrap();
        let f = p.function("check").unwrap();
        assert_eq!(f.bindings.len(), 2);
        assert_eq!(f.bindings[0].params, vec![TypeDesc::Int(IntType::I32)]);
        assert_eq!(f.bindings[0].ret, TypeDesc::Unit);
        assert_eq!(p.expectations.len(), 2);
        assert_eq!(p.expectations[1].model, Some(AliasingModel::StackedBorrows));
        assert!(p.has_tag("typing"));
    }

    #[test]
    fn binding_arity_is_checked() {
        let src = "extern fn f(i32, i32)\nhost fn main() {\n  call f(1)\n}\n";
        let e = parse_scenario(src).unwrap_err();
        assert!(matches!(e.kind, ParseErrorKind::Arity { expected: 2, got: 1, .. }));
    }

    #[test]
    fn types_parse() {
        let src = "\
type Pair {
  a: cell<i32>
  b: *mut Pair
  c: [u8; 3] @ 16
  d: phantom<cell<ptr>>
}
host fn main() {
  let p: Pair = uninit
}
";
        let p = parse_scenario(src).unwrap();
        let def = p.types.get("Pair").unwrap();
        assert_eq!(def.fields[2].offset, Some(16));
        assert_eq!(def.fields[3].ty.to_string(), "phantom<cell<ptr>>");
    }

    #[test]
    fn garbage_never_panics() {
        for src in ["}", "host fn", "type {", "host fn main() {", "expect", "\u{0}\u{1}", "let", "host fn main() {\n  if a goto\n}"] {
            assert!(parse_scenario(src).is_err(), "{src:?}");
        }
    }
}
