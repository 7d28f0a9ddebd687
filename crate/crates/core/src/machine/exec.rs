//! Statement semantics for both dialects.

use std::fmt;

use crate::borrows::RetagKind;
use crate::diagnostics::{DiagnosticKind, Snapshot};
use crate::ir::{
    layout_of, ArithOp, CmpOp, Dialect, IntType, Layout, Operand, Place, Projection, PtrKind, StmtKind, TypeDesc,
};
use crate::memory::{AbstractByte, AllocOrigin, Allocator, Pointer};
use crate::translate::type_opaque_pointer;
use crate::value::Value;

use super::{bug, Fault, Local, Machine, Status, Wait};

enum Flow {
    Next,
    Jump(usize),
    /// The statement blocked or transferred control; the pc is advanced
    /// when the call or join completes.
    Stay,
}

const MALLOC_ALIGN: u64 = 16;

fn as_pointer(v: &Value, what: &dyn fmt::Display) -> Result<Pointer, Fault> {
    match v {
        Value::Ptr(p) => Ok(*p),
        Value::Int { undef: true, .. } => Err(bug(
            DiagnosticKind::UninitializedRead,
            format!("{what} is an uninitialized pointer"),
        )),
        Value::Int { bits, .. } => Ok(Pointer::from_int(*bits)),
        other => Err(Fault::Unsupported(format!("{what} is not a pointer ({other})"))),
    }
}

/// First run of uninitialized bytes outside padding.
fn uninit_range(bytes: &[AbstractByte], layout: &Layout) -> Option<(u64, u64)> {
    let bad = |i: &usize| !bytes[*i].is_init() && !layout.is_padding(*i as u64);
    let start = (0..bytes.len()).find(bad)?;
    let end = (start..bytes.len()).find(|i| !bad(i)).unwrap_or(bytes.len());
    Some((start as u64, end as u64))
}

fn raw_mut(ty: &TypeDesc) -> TypeDesc {
    TypeDesc::raw_mut(ty.clone())
}

impl<'p> Machine<'p> {
    fn layout(&self, ty: &TypeDesc) -> Result<Layout, Fault> {
        layout_of(ty, &self.program.types).map_err(|e| Fault::Unsupported(e.to_string()))
    }

    fn local(&self, tid: usize, name: &str) -> Result<&Local, Fault> {
        self.top(tid)
            .locals
            .get(name)
            .ok_or_else(|| Fault::Unsupported(format!("local `{name}` used before it was assigned")))
    }

    /// Evaluates an operand. Integer literals take the expected type when
    /// there is one.
    fn eval(&mut self, tid: usize, op: &Operand, expect: Option<&TypeDesc>) -> Result<(Value, TypeDesc), Fault> {
        match op {
            Operand::Int(n) => {
                let ty = expect
                    .map(|t| t.peel_cells().clone())
                    .filter(|t| t.as_int().is_some() || t.is_pointer())
                    .unwrap_or(TypeDesc::Int(IntType::I64));
                let v = match &ty {
                    TypeDesc::Int(t) => Value::int(*n, *t),
                    _ => Value::Ptr(Pointer::from_int(*n as u64)),
                };
                Ok((v, ty))
            }
            Operand::Null => {
                let ty = expect.filter(|t| t.is_pointer()).cloned().unwrap_or_else(TypeDesc::opaque_ptr);
                Ok((Value::Ptr(Pointer::null()), ty))
            }
            Operand::SizeOf(t) => Ok((Value::u64(self.layout(t)?.size), TypeDesc::Int(IntType::U64))),
            Operand::Static(name) => {
                let (p, ty) = self.statics[name].clone();
                Ok((Value::Ptr(p), raw_mut(&ty)))
            }
            Operand::Local(name) => match self.local(tid, name)?.clone() {
                Local::Reg { value, ty } => {
                    if value.is_undef() && self.dialect(tid) == Dialect::Host {
                        return Err(bug(
                            DiagnosticKind::UninitializedRead,
                            format!("host code used `{name}`, which holds an uninitialized value"),
                        ));
                    }
                    Ok((value, ty))
                }
                Local::Slot { ptr, ty } => {
                    let v = self.load(tid, ptr, &ty, &name)?;
                    Ok((v, ty))
                }
            },
        }
    }

    fn eval_ptr(&mut self, tid: usize, op: &Operand) -> Result<(Pointer, TypeDesc), Fault> {
        let (v, ty) = self.eval(tid, op, None)?;
        Ok((as_pointer(&v, &Shown(op))?, ty))
    }

    fn eval_u64(&mut self, tid: usize, op: &Operand) -> Result<u64, Fault> {
        let (v, _) = self.eval(tid, op, Some(&TypeDesc::Int(IntType::U64)))?;
        v.raw_bits()
            .ok_or_else(|| Fault::Unsupported(format!("{} is not an integer", Shown(op))))
    }

    /// Pointee type behind a pointer of static type `ty`, using the opaque
    /// pointer heuristic when the type does not say.
    fn pointee_of(&self, p: Pointer, ty: &TypeDesc) -> TypeDesc {
        match ty.pointee() {
            Some(t) => t.clone(),
            None => type_opaque_pointer(p, &self.mem).pointee().cloned().expect("heuristic yields a pointee"),
        }
    }

    fn place(&mut self, tid: usize, place: &Place) -> Result<(Pointer, TypeDesc), Fault> {
        let (mut ptr, mut ty) = if place.deref {
            let (p, t) = self.eval_ptr(tid, &Operand::Local(place.base.clone()))?;
            let pointee = self.pointee_of(p, &t);
            (p, pointee)
        } else {
            match self.local(tid, &place.base)? {
                Local::Slot { ptr, ty } => (*ptr, ty.clone()),
                Local::Reg { .. } => {
                    return Err(Fault::Unsupported(format!(
                        "`{}` is not a memory-backed local; declare it with `let`",
                        place.base
                    )))
                }
            }
        };
        for proj in &place.projections {
            match (proj, ty.peel_cells().clone()) {
                (Projection::Field(f), TypeDesc::Struct(name)) => {
                    let def = self.program.types.get(&name).expect("validated struct");
                    let Some((idx, field)) = def.field(f) else {
                        return Err(Fault::Unsupported(format!("`{name}` has no field `{f}`")));
                    };
                    let layout = self.layout(&ty)?;
                    ptr = ptr.wrapping_offset(layout.field_offsets[idx] as i64);
                    ty = field.ty.clone();
                }
                (Projection::Index(i), TypeDesc::Array(elem, _)) => {
                    let size = self.layout(&elem)?.size;
                    ptr = ptr.wrapping_offset((i * size) as i64);
                    ty = *elem;
                }
                (p, other) => return Err(Fault::Unsupported(format!("cannot project {p:?} on `{other}`"))),
            }
        }
        Ok((ptr, ty))
    }

    /// A typed read. Host reads require every non-padding byte to be
    /// initialized; foreign reads may produce undef in permissive mode.
    fn load(&mut self, tid: usize, ptr: Pointer, ty: &TypeDesc, what: &dyn fmt::Display) -> Result<Value, Fault> {
        let site = self.site(tid);
        let actor = self.dialect(tid);
        let layout = self.layout(ty)?;
        let bytes = self.mem.read_bytes(ptr, layout.size, layout.align, actor, &site)?;
        if let Some((a, b)) = uninit_range(&bytes, &layout) {
            if actor == Dialect::Host || !self.config.permissive_foreign_loads {
                let mut d = crate::diagnostics::Diagnostic::boxed(
                    DiagnosticKind::UninitializedRead,
                    format!("{actor} read of `{what}` as `{ty}`: bytes {a}..{b} are uninitialized"),
                );
                if let Some(id) = ptr.alloc {
                    d.allocation = Some(self.mem.get(id).info());
                }
                d.addresses.push(ptr.addr);
                return Err(Fault::Bug(d));
            }
        }
        Ok(Value::from_bytes(&bytes, ty))
    }

    fn store(&mut self, tid: usize, ptr: Pointer, ty: &TypeDesc, value: Value, from: Option<&TypeDesc>) -> Result<(), Fault> {
        let site = self.site(tid);
        let actor = self.dialect(tid);
        let layout = self.layout(ty)?;
        let bytes = value.coerce(from, ty).to_bytes(ty, layout.size);
        self.mem.write_bytes(ptr, &bytes, layout.align, actor, &site)?;
        Ok(())
    }

    /// Writes through a `let` slot of the same name, or rebinds a register.
    fn assign(&mut self, tid: usize, dst: &str, value: Value, ty: TypeDesc) -> Result<(), Fault> {
        if let Some(Local::Slot { ptr, ty: slot_ty }) = self.top(tid).locals.get(dst).cloned() {
            return self.store(tid, ptr, &slot_ty, value, Some(&ty));
        }
        self.top_mut(tid).locals.insert(dst.to_string(), Local::Reg { value, ty });
        Ok(())
    }

    fn retag_place(
        &mut self,
        tid: usize,
        ptr: Pointer,
        ty: &TypeDesc,
        kind: RetagKind,
        label: &str,
    ) -> Result<Pointer, Fault> {
        let site = self.site(tid);
        let layout = self.layout(ty)?;
        Ok(self.mem.retag(ptr, layout.size, kind, &layout.cell_ranges, false, label, &site)?)
    }

    fn own(&mut self, tid: usize, name: &str) {
        let owned = &mut self.top_mut(tid).owned;
        owned.retain(|n| n != name);
        owned.push(name.to_string());
    }

    fn disown(&mut self, tid: usize, name: &str) -> bool {
        let owned = &mut self.top_mut(tid).owned;
        let before = owned.len();
        owned.retain(|n| n != name);
        owned.len() != before
    }

    fn jump(&self, tid: usize, label: &str) -> usize {
        self.func(self.top(tid).func).label_index(label).expect("validated label")
    }

    pub(super) fn exec(&mut self, tid: usize, stmt: &'p StmtKind) -> Result<(), Fault> {
        let flow = self.exec_inner(tid, stmt)?;
        if let Some(frame) = self.threads[tid].frames.last_mut() {
            match flow {
                Flow::Next => frame.pc += 1,
                Flow::Jump(i) => frame.pc = i,
                Flow::Stay => {}
            }
        }
        Ok(())
    }

    fn exec_inner(&mut self, tid: usize, stmt: &'p StmtKind) -> Result<Flow, Fault> {
        let site = self.site(tid);
        match stmt {
            StmtKind::Let { name, ty, init } => {
                let layout = self.layout(ty)?;
                let ptr = self.mem.allocate(layout.size, layout.align, AllocOrigin::HostStack, name, Some(site.clone()));
                self.top_mut(tid).stack.push(ptr);
                if let Some(init) = init {
                    self.initialize(ptr, ty, layout.size, layout.align, *init, &site)?;
                }
                self.top_mut(tid).locals.insert(name.clone(), Local::Slot { ptr, ty: ty.clone() });
            }
            StmtKind::Borrow { dst, place, mutable } => {
                let (ptr, ty) = self.place(tid, place)?;
                let kind = if *mutable { RetagKind::MutRef } else { RetagKind::SharedRef };
                let np = self.retag_place(tid, ptr, &ty, kind, dst)?;
                let pk = if *mutable { PtrKind::MutRef } else { PtrKind::SharedRef };
                self.assign(tid, dst, Value::Ptr(np), TypeDesc::ptr(pk, ty))?;
            }
            StmtKind::RawCast { dst, src, ty } => {
                let (p, from) = self.eval_ptr(tid, src)?;
                let ty = ty.clone().unwrap_or_else(|| match &from {
                    TypeDesc::Ptr { kind: PtrKind::MutRef, pointee } => TypeDesc::Ptr { kind: PtrKind::RawMut, pointee: pointee.clone() },
                    TypeDesc::Ptr { kind: PtrKind::SharedRef, pointee } => TypeDesc::Ptr { kind: PtrKind::RawConst, pointee: pointee.clone() },
                    other => other.clone(),
                });
                self.assign(tid, dst, Value::Ptr(p), ty)?;
            }
            StmtKind::AddrOf { dst, place } => {
                let (p, ty) = self.place(tid, place)?;
                self.assign(tid, dst, Value::Ptr(p), raw_mut(&ty))?;
            }
            StmtKind::Offset { dst, ptr, count } => {
                let (p, ty) = self.eval_ptr(tid, ptr)?;
                let (n, nt) = self.eval(tid, count, Some(&TypeDesc::Int(IntType::I64)))?;
                let n = n.as_i128(nt.as_int()).unwrap_or(0) as i64;
                let size = self.layout(&self.pointee_of(p, &ty))?.size as i64;
                self.assign(tid, dst, Value::Ptr(p.wrapping_offset(n.wrapping_mul(size))), ty)?;
            }
            StmtKind::Read { dst, place } => {
                let (p, ty) = self.place(tid, place)?;
                let v = self.load(tid, p, &ty, &Shown(place))?;
                self.assign(tid, dst, v, ty.peel_cells().clone())?;
            }
            StmtKind::Write { place, value } => {
                let (p, ty) = self.place(tid, place)?;
                let (v, vt) = self.eval(tid, value, Some(&ty))?;
                self.store(tid, p, &ty, v, Some(&vt))?;
            }
            StmtKind::CellGet { dst, place } => {
                let (p, ty) = self.place(tid, place)?;
                let TypeDesc::Cell(inner) = &ty else {
                    return Err(Fault::Unsupported(format!("cell_get on `{ty}`, which is not a cell")));
                };
                let np = self.retag_place(tid, p, &ty, RetagKind::Cell, dst)?;
                self.assign(tid, dst, Value::Ptr(np), raw_mut(inner))?;
            }
            StmtKind::BoxNew { dst, ty, init } => {
                let layout = self.layout(ty)?;
                let p = self.mem.allocate(layout.size, layout.align, AllocOrigin::HostHeap, dst, Some(site.clone()));
                if let Some(init) = init {
                    self.initialize(p, ty, layout.size, layout.align, *init, &site)?;
                }
                let p = if self.config.unique_as_mutable {
                    self.retag_place(tid, p, ty, RetagKind::MutRef, dst)?
                } else {
                    p
                };
                self.top_mut(tid).locals.insert(dst.clone(), Local::Reg { value: Value::Ptr(p), ty: raw_mut(ty) });
                self.own(tid, dst);
            }
            StmtKind::IntoRaw { dst, src } => {
                let (p, ty) = self.eval_ptr(tid, &Operand::Local(src.clone()))?;
                self.disown(tid, src);
                self.assign(tid, dst, Value::Ptr(p), ty)?;
            }
            StmtKind::FromRaw { dst, src } => {
                let (p, ty) = self.eval_ptr(tid, src)?;
                let pointee = self.pointee_of(p, &ty);
                let p = if self.config.unique_as_mutable {
                    self.retag_place(tid, p, &pointee, RetagKind::MutRef, dst)?
                } else {
                    p
                };
                self.top_mut(tid).locals.insert(dst.clone(), Local::Reg { value: Value::Ptr(p), ty: raw_mut(&pointee) });
                self.own(tid, dst);
            }
            StmtKind::Drop { name } => {
                if self.disown(tid, name) {
                    let (p, _) = self.eval_ptr(tid, &Operand::Local(name.clone()))?;
                    self.mem.deallocate(p, Allocator::Host, &site)?;
                }
            }
            StmtKind::Dealloc { ptr } => {
                let (p, _) = self.eval_ptr(tid, ptr)?;
                self.mem.deallocate(p, Allocator::Host, &site)?;
            }
            StmtKind::Forget { ptr } => {
                let (p, _) = self.eval_ptr(tid, ptr)?;
                self.mem.forget(p);
                if let Operand::Local(name) = ptr {
                    self.disown(tid, name);
                }
            }
            StmtKind::Expose { dst, ptr } => {
                let (p, _) = self.eval_ptr(tid, ptr)?;
                let addr = self.mem.expose(p);
                self.assign(tid, dst, Value::u64(addr), TypeDesc::Int(IntType::U64))?;
            }
            StmtKind::FromExposed { dst, addr, ty } => {
                let a = self.eval_u64(tid, addr)?;
                let p = self.mem.from_exposed(a)?;
                let ty = ty.clone().unwrap_or_else(TypeDesc::opaque_ptr);
                self.assign(tid, dst, Value::Ptr(p), ty)?;
            }
            StmtKind::AssumeInit { place } => {
                let (p, ty) = self.place(tid, place)?;
                let layout = self.layout(&ty)?;
                let bytes = self.mem.read_bytes(p, layout.size, layout.align, Dialect::Host, &site)?;
                if let Some((a, b)) = uninit_range(&bytes, &layout) {
                    let mut d = crate::diagnostics::Diagnostic::boxed(
                        DiagnosticKind::UninitializedRead,
                        format!(
                            "assume_init on `{}` of type `{ty}`: bytes {a}..{b} are uninitialized",
                            Shown(place)
                        ),
                    );
                    if let Some(id) = p.alloc {
                        d.allocation = Some(self.mem.get(id).info());
                    }
                    return Err(Fault::Bug(d));
                }
            }
            StmtKind::Spawn { dst, func, args } => {
                let idx = self.program.function_index(func).expect("validated spawn target");
                let callee = self.func(idx);
                let mut values = Vec::with_capacity(args.len());
                for (a, p) in args.iter().zip(&callee.params) {
                    let (v, t) = self.eval(tid, a, Some(&p.ty))?;
                    values.push(v.coerce(Some(&t), &p.ty));
                }
                let frame = self.enter(idx, values, &site)?;
                let t = self.spawn_thread(frame, None);
                self.assign(tid, dst, Value::Thread(t), TypeDesc::Unit)?;
            }
            StmtKind::Join { thread, .. } => {
                let (v, _) = self.eval(tid, &Operand::Local(thread.clone()), None)?;
                let Value::Thread(t) = v else {
                    return Err(Fault::Unsupported(format!("`{thread}` is not a thread handle")));
                };
                if self.threads[t].joined {
                    return Err(Fault::Unsupported(format!("thread `{thread}` joined twice")));
                }
                self.threads[tid].status = Status::Waiting(Wait::Join { thread: t });
                return Ok(Flow::Stay);
            }
            StmtKind::AssertEq { left, right } => {
                let (l, lt) = self.eval(tid, left, None)?;
                let (r, _) = self.eval(tid, right, Some(&lt))?;
                if l.raw_bits() != r.raw_bits() {
                    return Err(bug(
                        DiagnosticKind::AssertionFailed,
                        format!("assertion failed: {} == {} ({l} != {r})", Shown(left), Shown(right)),
                    ));
                }
            }
            StmtKind::Malloc { dst, size } => {
                let n = self.eval_u64(tid, size)?;
                let p = self.mem.allocate(n, MALLOC_ALIGN, AllocOrigin::ForeignHeap, dst, Some(site.clone()));
                self.assign(tid, dst, Value::Ptr(p), TypeDesc::opaque_ptr())?;
            }
            StmtKind::Free { ptr } => {
                let (p, _) = self.eval_ptr(tid, ptr)?;
                if !p.is_null() {
                    self.mem.deallocate(p, Allocator::Foreign, &site)?;
                }
            }
            StmtKind::Alloca { dst, ty } => {
                let layout = self.layout(ty)?;
                let p = self.mem.allocate(layout.size, layout.align, AllocOrigin::ForeignStack, dst, Some(site.clone()));
                self.top_mut(tid).stack.push(p);
                let pty = TypeDesc::Ptr { kind: PtrKind::Opaque, pointee: Some(Box::new(ty.clone())) };
                self.assign(tid, dst, Value::Ptr(p), pty)?;
            }
            StmtKind::Load { dst, ty, ptr } => {
                let (p, _) = self.eval_ptr(tid, ptr)?;
                let v = self.load(tid, p, ty, &Shown(ptr))?;
                self.assign(tid, dst, v, ty.clone())?;
            }
            StmtKind::Store { ptr, ty, value } => {
                let (p, _) = self.eval_ptr(tid, ptr)?;
                let (v, vt) = self.eval(tid, value, Some(ty))?;
                self.store(tid, p, ty, v, Some(&vt))?;
            }
            StmtKind::Memset { ptr, byte, len } => {
                let (p, _) = self.eval_ptr(tid, ptr)?;
                let b = self.eval_u64(tid, byte)? as u8;
                let n = self.eval_u64(tid, len)?;
                if n > 0 {
                    let bytes = vec![AbstractByte::Init(b, None); n as usize];
                    self.mem.write_bytes(p, &bytes, 1, Dialect::Foreign, &site)?;
                }
            }
            StmtKind::Memcpy { dst, src, len } => {
                let (d, _) = self.eval_ptr(tid, dst)?;
                let (s, _) = self.eval_ptr(tid, src)?;
                let n = self.eval_u64(tid, len)?;
                if n > 0 {
                    let bytes = self.mem.read_bytes(s, n, 1, Dialect::Foreign, &site)?;
                    self.mem.write_bytes(d, &bytes, 1, Dialect::Foreign, &site)?;
                }
            }
            StmtKind::Gep { dst, ptr, offset } => {
                let (p, ty) = self.eval_ptr(tid, ptr)?;
                let (n, nt) = self.eval(tid, offset, Some(&TypeDesc::Int(IntType::I64)))?;
                let n = n.as_i128(nt.as_int()).unwrap_or(0) as i64;
                self.assign(tid, dst, Value::Ptr(p.wrapping_offset(n)), ty)?;
            }
            StmtKind::Call { func, args, .. } => {
                let params: Vec<TypeDesc> = match self.program.binding(func) {
                    Some(b) => b.sig.params.clone(),
                    None => self.program.function(func).map(|f| f.params.iter().map(|p| p.ty.clone()).collect()).unwrap_or_default(),
                };
                let mut vals = Vec::with_capacity(args.len());
                for (i, a) in args.iter().enumerate() {
                    vals.push(self.eval(tid, a, params.get(i))?);
                }
                self.call(tid, func, vals)?;
                return Ok(Flow::Stay);
            }
            StmtKind::Return { value } => {
                let ret = self.func(self.top(tid).func).ret.clone();
                let (v, t) = match value {
                    Some(op) => {
                        let (v, t) = self.eval(tid, op, Some(&ret))?;
                        (v, Some(t))
                    }
                    None => (Value::Unit, None),
                };
                self.do_return(tid, v, t)?;
                return Ok(Flow::Stay);
            }
            StmtKind::Set { dst, ty, value } => {
                let expect = ty.clone().or_else(|| match self.top(tid).locals.get(dst) {
                    Some(Local::Reg { ty, .. } | Local::Slot { ty, .. }) => Some(ty.clone()),
                    None => None,
                });
                let (v, vt) = self.eval(tid, value, expect.as_ref())?;
                let (v, t) = match ty {
                    Some(t) => (v.coerce(Some(&vt), t), t.clone()),
                    None => (v, vt),
                };
                self.assign(tid, dst, v, t)?;
            }
            StmtKind::Arith { dst, op, lhs, rhs } => {
                let (a, at) = self.eval(tid, lhs, None)?;
                let (b, bt) = self.eval(tid, rhs, Some(&at))?;
                let (Value::Int { bits: x, undef: ua }, Value::Int { bits: y, undef: ub }) = (&a, &b.coerce(Some(&bt), &at)) else {
                    return Err(Fault::Unsupported("arithmetic on non-integers; use offset or gep for pointers".into()));
                };
                let t = at.as_int().unwrap_or(IntType::I64);
                let r = match op {
                    ArithOp::Add => x.wrapping_add(*y),
                    ArithOp::Sub => x.wrapping_sub(*y),
                    ArithOp::Mul => x.wrapping_mul(*y),
                };
                let v = Value::Int { bits: r & t.width.mask(), undef: *ua || *ub };
                self.assign(tid, dst, v, TypeDesc::Int(t))?;
            }
            StmtKind::Label(_) => {}
            StmtKind::Goto(label) => return Ok(Flow::Jump(self.jump(tid, label))),
            StmtKind::If { lhs, cmp, rhs, target } => {
                let (a, at) = self.eval(tid, lhs, None)?;
                let (b, bt) = self.eval(tid, rhs, Some(&at))?;
                let t = at.as_int().or(bt.as_int());
                let (x, y) = (a.as_i128(t).unwrap_or(0), b.as_i128(t).unwrap_or(0));
                let taken = match cmp {
                    CmpOp::Eq => x == y,
                    CmpOp::Ne => x != y,
                    CmpOp::Lt => x < y,
                };
                if taken {
                    return Ok(Flow::Jump(self.jump(tid, target)));
                }
            }
            StmtKind::DumpBorrows { ptr } => {
                let (p, _) = self.eval_ptr(tid, ptr)?;
                if let Some(tree) = self.mem.snapshot(p) {
                    self.snapshots.push(Snapshot { site: site.clone(), tree });
                }
            }
        }
        Ok(Flow::Next)
    }
}

/// Lazily formatted operand or place name for messages.
struct Shown<'a, T>(&'a T);

impl fmt::Display for Shown<'_, Operand> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            Operand::Int(n) => write!(f, "{n}"),
            Operand::Local(n) => f.write_str(n),
            Operand::Static(n) => write!(f, "@{n}"),
            Operand::SizeOf(t) => write!(f, "sizeof({t})"),
            Operand::Null => f.write_str("null"),
        }
    }
}

impl fmt::Display for Shown<'_, Place> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let p = self.0;
        if p.deref {
            f.write_str("*")?;
        }
        f.write_str(&p.base)?;
        for proj in &p.projections {
            match proj {
                Projection::Field(name) => write!(f, ".{name}")?,
                Projection::Index(i) => write!(f, "[{i}]")?,
            }
        }
        Ok(())
    }
}
