//! Renders a program back to scenario text. `parse_scenario(render(p)) == p`.

use std::fmt::Write;

use super::ast::*;
use super::types::TypeDesc;

fn operand(op: &Operand) -> String {
    match op {
        Operand::Int(v) => v.to_string(),
        Operand::Local(n) => n.clone(),
        Operand::Static(n) => format!("@{n}"),
        Operand::SizeOf(t) => format!("sizeof({t})"),
        Operand::Null => "null".to_string(),
    }
}

fn place(p: &Place) -> String {
    let mut s = String::new();
    if p.deref {
        s.push('*');
    }
    s.push_str(&p.base);
    for proj in &p.projections {
        match proj {
            Projection::Field(f) => write!(s, ".{f}").unwrap(),
            Projection::Index(i) => write!(s, "[{i}]").unwrap(),
        }
    }
    s
}

fn init(i: &Option<Init>) -> String {
    match i {
        None => String::new(),
        Some(Init::Uninit) => " = uninit".into(),
        Some(Init::Zeroed) => " = zeroed".into(),
        Some(Init::Int(v)) => format!(" = {v}"),
    }
}

fn args(a: &[Operand]) -> String {
    a.iter().map(operand).collect::<Vec<_>>().join(", ")
}

fn as_type(t: &Option<TypeDesc>) -> String {
    t.as_ref().map(|t| format!(" as {t}")).unwrap_or_default()
}

fn ret(t: &TypeDesc) -> String {
    if t.is_unit() {
        String::new()
    } else {
        format!(" -> {t}")
    }
}

pub fn render_stmt(kind: &StmtKind) -> String {
    use StmtKind::*;
    let kw = kind.keyword();
    match kind {
        Let { name, ty, init: i } | BoxNew { dst: name, ty, init: i } => {
            format!("{kw} {name}: {ty}{}", init(i))
        }
        Borrow { dst, place: p, .. } | AddrOf { dst, place: p } | Read { dst, place: p }
        | CellGet { dst, place: p } => format!("{kw} {dst} = {}", place(p)),
        RawCast { dst, src, ty } => format!("{kw} {dst} = {}{}", operand(src), as_type(ty)),
        FromExposed { dst, addr, ty } => format!("{kw} {dst} = {}{}", operand(addr), as_type(ty)),
        Offset { dst, ptr: a, count: b } | Gep { dst, ptr: a, offset: b } | Arith { dst, lhs: a, rhs: b, .. } => {
            format!("{kw} {dst} = {}, {}", operand(a), operand(b))
        }
        Write { place: p, value } => format!("{kw} {} = {}", place(p), operand(value)),
        IntoRaw { dst, src } => format!("{kw} {dst} = {src}"),
        FromRaw { dst, src } | Expose { dst, ptr: src } | Malloc { dst, size: src } => {
            format!("{kw} {dst} = {}", operand(src))
        }
        Drop { name } => format!("{kw} {name}"),
        Dealloc { ptr } | Forget { ptr } | Free { ptr } | DumpBorrows { ptr } => {
            format!("{kw} {}", operand(ptr))
        }
        AssumeInit { place: p } => format!("{kw} {}", place(p)),
        Spawn { dst, func, args: a } => format!("{kw} {dst} = {func}({})", args(a)),
        Join { dst, thread } => match dst {
            Some(d) => format!("{kw} {d} = {thread}"),
            None => format!("{kw} {thread}"),
        },
        AssertEq { left, right } => format!("{kw} {}, {}", operand(left), operand(right)),
        Alloca { dst, ty } => format!("{kw} {dst}: {ty}"),
        Load { dst, ty, ptr } => format!("{kw} {dst}: {ty} = {}", operand(ptr)),
        Store { ptr, ty, value } => format!("{kw} {}: {ty} = {}", operand(ptr), operand(value)),
        Memset { ptr: a, byte: b, len } | Memcpy { dst: a, src: b, len } => {
            format!("{kw} {}, {}, {}", operand(a), operand(b), operand(len))
        }
        Call { dst, func, args: a } => match dst {
            Some(d) => format!("{kw} {d} = {func}({})", args(a)),
            None => format!("{kw} {func}({})", args(a)),
        },
        Return { value } => match value {
            Some(v) => format!("{kw} {}", operand(v)),
            None => kw.to_string(),
        },
        Set { dst, ty, value } => match ty {
            Some(t) => format!("{kw} {dst}: {t} = {}", operand(value)),
            None => format!("{kw} {dst} = {}", operand(value)),
        },
        Label(l) | Goto(l) => format!("{kw} {l}"),
        If { lhs, cmp, rhs, target } => {
            let c = match cmp {
                CmpOp::Eq => "==",
                CmpOp::Ne => "!=",
                CmpOp::Lt => "<",
            };
            format!("{kw} {} {c} {} goto {target}", operand(lhs), operand(rhs))
        }
    }
}

pub fn render_program(p: &ScenarioProgram) -> String {
    let mut out = String::new();
    for def in p.types.iter() {
        writeln!(out, "type {} {{", def.name).unwrap();
        for f in &def.fields {
            match f.offset {
                Some(o) => writeln!(out, "  {}: {} @ {o}", f.name, f.ty).unwrap(),
                None => writeln!(out, "  {}: {}", f.name, f.ty).unwrap(),
            }
        }
        out.push_str("}\n");
    }
    for s in &p.statics {
        writeln!(out, "static {}: {}{}", s.name, s.ty, init(&s.init)).unwrap();
    }
    for b in &p.bindings {
        let mut params: Vec<String> = b
            .sig
            .params
            .iter()
            .zip(&b.param_names)
            .map(|(t, n)| match n {
                Some(n) => format!("{n}: {t}"),
                None => t.to_string(),
            })
            .collect();
        if b.sig.variadic {
            params.push("...".into());
        }
        let link = if b.symbol != b.name { format!(" link {}", b.symbol) } else { String::new() };
        writeln!(out, "extern fn {}({}){}{link}", b.name, params.join(", "), ret(&b.sig.ret)).unwrap();
    }
    for f in &p.functions {
        let mut params: Vec<String> = f.params.iter().map(|pa| format!("{}: {}", pa.name, pa.ty)).collect();
        if f.variadic {
            params.push("...".into());
        }
        writeln!(out, "{} fn {}({}){} {{", f.dialect, f.name, params.join(", "), ret(&f.ret)).unwrap();
        for s in &f.body {
            writeln!(out, "  {}", render_stmt(&s.kind)).unwrap();
        }
        out.push_str("}\n");
    }
    if p.entry != "main" {
        writeln!(out, "entry {}", p.entry).unwrap();
    }
    for e in &p.expectations {
        match e.model {
            Some(m) => writeln!(out, "expect {m} {}", e.tag).unwrap(),
            None => writeln!(out, "expect {}", e.tag).unwrap(),
        }
    }
    for t in &p.tags {
        writeln!(out, "tag {t}").unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::parse::parse_scenario;

    #[test]
    fn round_trip_covers_every_form() {
        let src = "\
type S {
  a: cell<i32>
  b: [u8; 4] @ 8
}
static G: i32 = 7
static P: ptr
extern fn f(x: *mut S, i64, ...) -> i32 link g
host fn helper(r: &mut S, n: i64) -> i64 {
  return n
}
foreign fn g(p: ptr, n: i64, ...) -> i32 {
  malloc m = 16
  alloca t: S
  load v: i32 = p
  store m: i64 = v
  memset t, 0, sizeof(S)
  memcpy p, t, 12
  gep q = p, 8
  call r = helper(p, 2)
  free m
  return v
}
host fn main() {
  let s: S = zeroed
  let u: i32 = uninit
  borrow_mut r = s
  borrow_shared c = *r.b[2]
  raw_cast w = r as *mut S
  addr_of a = s.a
  offset o = w, 1
  read x = *r.a
  write *w.b[1] = -3
  cell_get cg = s.a
  box_new b: i64 = 5
  into_raw rb = b
  from_raw b2 = rb
  expose e = w
  from_exposed fe = e as *mut i32
  assume_init s
  spawn t = worker(1)
  join j = t
  assert_eq j, 1
  set k: i64 = @G
  set k2 = null
  add k3 = k, 1
  call rv = f(w, 1, 2)
  call helper(r, 2)
  label top
  if k < 10 goto top
  goto done
  label done
  dump_borrows w
  drop b2
  forget e
  dealloc e
  return
}
host fn worker(n: i64) -> i64 {
  return n
}
expect tb expired-permission
expect pass
tag offset-beyond-borrow
";
        let p = parse_scenario(src).unwrap();
        let text = render_program(&p);
        let q = parse_scenario(&text).unwrap();
        assert_eq!(p, q);
        assert_eq!(text, render_program(&q));
    }
}
