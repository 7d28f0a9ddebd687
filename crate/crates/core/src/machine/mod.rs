//! The joint machine: both dialects over one memory, with boundary calls
//! run as simulated threads and a seeded scheduler choosing among them.

mod exec;

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::{RngExt, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};

use crate::borrows::{AliasingModel, RetagKind};
use crate::diagnostics::{Classification, Diagnostic, DiagnosticKind, Outcome, Site, Snapshot};
use crate::ir::{layout_of, Dialect, FnDef, Init, PtrKind, ScenarioProgram, StmtKind, TypeDesc};
use crate::memory::{AllocOrigin, Allocator, Memory, MemoryConfig, Pointer};
use crate::translate::{abi_value, lower_call, raise_return, TranslateError};
use crate::value::Value;

pub const DEFAULT_STEP_BUDGET: u64 = 1_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MachineConfig {
    pub model: AliasingModel,
    pub strict_provenance: bool,
    pub zero_init_foreign: bool,
    /// Foreign loads of uninitialized bytes yield undef instead of failing.
    pub permissive_foreign_loads: bool,
    /// Boxes get a mutable-reference retag when created or re-owned.
    pub unique_as_mutable: bool,
    pub symbolic_alignment: bool,
    pub seed: u64,
    pub step_budget: u64,
}

impl Default for MachineConfig {
    fn default() -> Self {
        MachineConfig {
            model: AliasingModel::TreeBorrows,
            strict_provenance: false,
            zero_init_foreign: false,
            permissive_foreign_loads: true,
            unique_as_mutable: true,
            symbolic_alignment: true,
            seed: 0,
            step_budget: DEFAULT_STEP_BUDGET,
        }
    }
}

impl MachineConfig {
    pub fn with_model(self, model: AliasingModel) -> Self {
        MachineConfig { model, ..self }
    }

    /// Zero-initializing foreign memory and permissive loads are exclusive
    /// modes; the former wins.
    pub fn normalized(self) -> Self {
        if self.zero_init_foreign {
            MachineConfig { permissive_foreign_loads: false, ..self }
        } else {
            self
        }
    }

    fn memory_config(&self) -> MemoryConfig {
        MemoryConfig {
            model: self.model,
            strict_provenance: self.strict_provenance,
            zero_init_foreign: self.zero_init_foreign,
            symbolic_alignment: self.symbolic_alignment,
            seed: self.seed,
        }
    }
}

/// Why a statement stopped the run.
#[derive(Debug)]
pub(crate) enum Fault {
    Bug(Box<Diagnostic>),
    Unsupported(String),
}

impl From<Box<Diagnostic>> for Fault {
    fn from(d: Box<Diagnostic>) -> Self {
        Fault::Bug(d)
    }
}

impl From<TranslateError> for Fault {
    fn from(e: TranslateError) -> Self {
        match e {
            TranslateError::InvalidBinding(msg) => Fault::Bug(Diagnostic::boxed(DiagnosticKind::InvalidBinding, msg)),
            TranslateError::Unsupported(msg) => Fault::Unsupported(msg),
            TranslateError::Layout(e) => Fault::Unsupported(e.to_string()),
            TranslateError::Fault(d) => Fault::Bug(d),
        }
    }
}

pub(crate) fn bug(kind: DiagnosticKind, msg: impl Into<String>) -> Fault {
    Fault::Bug(Diagnostic::boxed(kind, msg))
}

#[derive(Clone, Debug)]
enum Local {
    /// A `let` binding: lives in memory and is accessed through its base tag.
    Slot { ptr: Pointer, ty: TypeDesc },
    Reg { value: Value, ty: TypeDesc },
}

#[derive(Clone, Debug)]
struct Frame {
    func: usize,
    pc: usize,
    locals: BTreeMap<String, Local>,
    /// Locals holding boxes this frame must drop, in declaration order.
    owned: Vec<String>,
    /// Stack allocations released when the frame exits.
    stack: Vec<Pointer>,
    /// Argument pointers whose tags are protected until the frame exits.
    protected: Vec<Pointer>,
}

impl Frame {
    fn new(func: usize) -> Self {
        Frame {
            func,
            pc: 0,
            locals: BTreeMap::new(),
            owned: Vec::new(),
            stack: Vec::new(),
            protected: Vec::new(),
        }
    }
}

#[derive(Clone, Debug)]
enum Wait {
    /// Blocked on a boundary call running in `thread`.
    Call { thread: usize, def_ret: TypeDesc, bind_ret: TypeDesc },
    Join { thread: usize },
}

#[derive(Clone, Debug)]
enum Status {
    Running,
    Waiting(Wait),
    Finished(Value, TypeDesc),
}

#[derive(Clone, Debug)]
struct Thread {
    frames: Vec<Frame>,
    status: Status,
    /// Thread blocked on this one through a boundary call.
    caller: Option<usize>,
    /// Result already collected by a `join`.
    joined: bool,
}

pub enum StepResult {
    Running,
    Finished(Box<Outcome>),
}

pub struct Machine<'p> {
    program: &'p ScenarioProgram,
    config: MachineConfig,
    mem: Memory,
    threads: Vec<Thread>,
    statics: BTreeMap<String, (Pointer, TypeDesc)>,
    rng: Xoshiro256PlusPlus,
    steps: u64,
    schedule: u64,
    snapshots: Vec<Snapshot>,
    /// Function names, shared by every site that mentions them.
    names: Vec<Arc<str>>,
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// Runs `program` to completion under `config`.
pub fn run(program: &ScenarioProgram, config: &MachineConfig) -> Outcome {
    let mut m = match Machine::new(program, config) {
        Ok(m) => m,
        Err(o) => return *o,
    };
    loop {
        if let StepResult::Finished(o) = m.step() {
            return *o;
        }
    }
}

impl<'p> Machine<'p> {
    pub fn new(program: &'p ScenarioProgram, config: &MachineConfig) -> Result<Self, Box<Outcome>> {
        let config = config.normalized();
        let mut m = Machine {
            program,
            config,
            mem: Memory::new(config.memory_config()),
            threads: Vec::new(),
            statics: BTreeMap::new(),
            rng: Xoshiro256PlusPlus::seed_from_u64(config.seed),
            steps: 0,
            schedule: FNV_OFFSET,
            snapshots: Vec::new(),
            names: program.functions.iter().map(|f| Arc::from(f.name.as_str())).collect(),
        };
        if let Err(f) = m.init_statics() {
            return Err(Box::new(m.finish_fault(f, None)));
        }
        let entry = program.function_index(&program.entry).expect("validated entry");
        m.threads.push(Thread {
            frames: vec![Frame::new(entry)],
            status: Status::Running,
            caller: None,
            joined: false,
        });
        Ok(m)
    }

    fn init_statics(&mut self) -> Result<(), Fault> {
        for s in &self.program.statics {
            let layout = layout_of(&s.ty, &self.program.types).map_err(|e| Fault::Unsupported(e.to_string()))?;
            let site = Site::new(Dialect::Host, format!("static {}", s.name), s.line.0);
            let ptr = self.mem.allocate(layout.size, layout.align, AllocOrigin::Static, &s.name, Some(site.clone()));
            let init = s.init.unwrap_or(Init::Zeroed);
            self.initialize(ptr, &s.ty, layout.size, layout.align, init, &site)?;
            self.statics.insert(s.name.clone(), (ptr, s.ty.clone()));
        }
        Ok(())
    }

    fn initialize(&mut self, ptr: Pointer, ty: &TypeDesc, size: u64, align: u64, init: Init, site: &Site) -> Result<(), Fault> {
        let bytes = match init {
            Init::Uninit => return Ok(()),
            Init::Zeroed => vec![crate::memory::AbstractByte::Init(0, None); size as usize],
            Init::Int(n) => match ty.peel_cells() {
                TypeDesc::Int(t) => Value::int(n, *t).to_bytes(ty, size),
                TypeDesc::Ptr { .. } => Value::u64(n as u64).to_bytes(ty, size),
                other => return Err(Fault::Unsupported(format!("integer initializer for `{other}`"))),
            },
        };
        self.mem.write_bytes(ptr, &bytes, align, Dialect::Host, site)?;
        Ok(())
    }

    pub fn memory(&self) -> &Memory {
        &self.mem
    }

    pub fn config(&self) -> &MachineConfig {
        &self.config
    }

    fn func(&self, idx: usize) -> &'p FnDef {
        &self.program.functions[idx]
    }

    fn top(&self, tid: usize) -> &Frame {
        self.threads[tid].frames.last().expect("live thread has a frame")
    }

    fn top_mut(&mut self, tid: usize) -> &mut Frame {
        self.threads[tid].frames.last_mut().expect("live thread has a frame")
    }

    fn frame_site(&self, f: &Frame) -> Site {
        let func = self.func(f.func);
        let line = func
            .body
            .get(f.pc)
            .or(func.body.last())
            .map_or(func.line.0, |s| s.line.0);
        Site::new(func.dialect, self.names[f.func].clone(), line)
    }

    fn site(&self, tid: usize) -> Site {
        self.frame_site(self.top(tid))
    }

    fn dialect(&self, tid: usize) -> Dialect {
        self.func(self.top(tid).func).dialect
    }

    /// Innermost-first call stack, following boundary calls back to the
    /// threads that made them.
    fn trace(&self, mut tid: usize) -> Vec<Site> {
        let mut out = Vec::new();
        loop {
            let t = &self.threads[tid];
            out.extend(t.frames.iter().rev().map(|f| self.frame_site(f)));
            match t.caller {
                Some(c) => tid = c,
                None => return out,
            }
        }
    }

    fn foreign_running(&self) -> bool {
        self.threads.iter().any(|t| {
            matches!(t.status, Status::Running)
                && t.frames.last().is_some_and(|f| self.func(f.func).dialect == Dialect::Foreign)
        })
    }

    /// A host thread about to enter foreign code, which must wait while
    /// another thread runs foreign code.
    fn about_to_enter_foreign(&self, t: &Thread) -> bool {
        let Some(f) = t.frames.last() else { return false };
        let func = self.func(f.func);
        func.dialect == Dialect::Host
            && matches!(func.body.get(f.pc), Some(s) if matches!(&s.kind, StmtKind::Call { func, .. } if self.program.binding(func).is_some()))
    }

    fn runnable(&self) -> Vec<usize> {
        let foreign_busy = self.foreign_running();
        (0..self.threads.len())
            .filter(|&i| {
                let t = &self.threads[i];
                match &t.status {
                    Status::Running => !(foreign_busy && self.about_to_enter_foreign(t)),
                    Status::Waiting(Wait::Call { thread, .. } | Wait::Join { thread }) => {
                        matches!(self.threads[*thread].status, Status::Finished(..))
                    }
                    Status::Finished(..) => false,
                }
            })
            .collect()
    }

    fn schedule_hex(&self) -> String {
        format!("{:016x}", self.schedule)
    }

    fn outcome(&self, classification: Classification, diagnostics: Vec<Diagnostic>, reason: Option<String>) -> Outcome {
        let leaks = if classification == Classification::Pass { self.mem.leak_report() } else { Vec::new() };
        Outcome {
            classification,
            diagnostics,
            leaks,
            reason,
            snapshots: self.snapshots.clone(),
            steps: self.steps,
            schedule: self.schedule_hex(),
        }
    }

    fn finish_fault(&self, fault: Fault, tid: Option<usize>) -> Outcome {
        match fault {
            Fault::Bug(mut d) => {
                if let Some(tid) = tid {
                    if d.location.is_none() {
                        d.location = Some(self.site(tid));
                    }
                    d.trace = self.trace(tid);
                }
                let kind = d.kind;
                self.outcome(Classification::Bug(kind), vec![*d], None)
            }
            Fault::Unsupported(reason) => self.outcome(Classification::Unsupported, Vec::new(), Some(reason)),
        }
    }

    /// Executes one statement of a scheduler-chosen thread.
    pub fn step(&mut self) -> StepResult {
        if matches!(self.threads[0].status, Status::Finished(..)) {
            return StepResult::Finished(Box::new(self.outcome(Classification::Pass, Vec::new(), None)));
        }
        if self.steps >= self.config.step_budget {
            let reason = format!("step budget of {} exhausted", self.config.step_budget);
            return StepResult::Finished(Box::new(self.outcome(Classification::Timeout, Vec::new(), Some(reason))));
        }
        let runnable = self.runnable();
        if runnable.is_empty() {
            let reason = "deadlock: no runnable thread".to_string();
            return StepResult::Finished(Box::new(self.outcome(Classification::Unsupported, Vec::new(), Some(reason))));
        }
        let tid = if runnable.len() == 1 { runnable[0] } else { runnable[self.rng.random_range(0..runnable.len())] };
        self.steps += 1;
        for b in (tid as u32).to_le_bytes() {
            self.schedule = (self.schedule ^ b as u64).wrapping_mul(FNV_PRIME);
        }
        match self.step_thread(tid) {
            Ok(()) => StepResult::Running,
            Err(f) => StepResult::Finished(Box::new(self.finish_fault(f, Some(tid)))),
        }
    }

    fn step_thread(&mut self, tid: usize) -> Result<(), Fault> {
        if let Status::Waiting(w) = &self.threads[tid].status {
            let w = w.clone();
            return self.resume(tid, w);
        }
        let frame = self.top(tid);
        let func = self.func(frame.func);
        match func.body.get(frame.pc) {
            Some(stmt) => self.exec(tid, &stmt.kind),
            None => self.do_return(tid, Value::Unit, None),
        }
    }

    fn resume(&mut self, tid: usize, wait: Wait) -> Result<(), Fault> {
        match wait {
            Wait::Call { thread, def_ret, bind_ret } => {
                let Status::Finished(v, _) = self.threads[thread].status.clone() else { unreachable!() };
                let abi = abi_value(&v, &def_ret, &self.program.types)?;
                let raised = raise_return(abi, &def_ret, &bind_ret, &self.program.types, &mut self.mem)?;
                self.threads[tid].status = Status::Running;
                if self.dialect(tid) == Dialect::Host && raised.is_undef() {
                    return Err(bug(
                        DiagnosticKind::UninitializedRead,
                        format!("foreign function returned an uninitialized `{bind_ret}` to host code"),
                    ));
                }
                self.finish_call(tid, raised, bind_ret);
            }
            Wait::Join { thread } => {
                let Status::Finished(v, ty) = self.threads[thread].status.clone() else { unreachable!() };
                self.threads[thread].joined = true;
                self.threads[tid].status = Status::Running;
                self.finish_call(tid, v, ty);
            }
        }
        Ok(())
    }

    /// Stores a call or join result into the destination named by the
    /// current statement and moves past it.
    fn finish_call(&mut self, tid: usize, value: Value, ty: TypeDesc) {
        let frame = self.top(tid);
        let stmt = &self.func(frame.func).body[frame.pc].kind;
        let dst = match stmt {
            StmtKind::Call { dst, .. } | StmtKind::Join { dst, .. } => dst.clone(),
            _ => None,
        };
        if let Some(dst) = dst {
            self.top_mut(tid).locals.insert(dst, Local::Reg { value, ty });
        }
        self.top_mut(tid).pc += 1;
    }

    /// Builds a frame for `callee`, retagging and protecting reference
    /// parameters of host functions.
    fn enter(&mut self, callee: usize, args: Vec<Value>, site: &Site) -> Result<Frame, Fault> {
        let func = self.func(callee);
        let mut frame = Frame::new(callee);
        for (param, value) in func.params.iter().zip(args) {
            let mut value = value;
            if func.dialect == Dialect::Host {
                if value.is_undef() {
                    return Err(bug(
                        DiagnosticKind::UninitializedRead,
                        format!("argument `{}` of `{}` is uninitialized", param.name, func.name),
                    ));
                }
                if let (Some(kind), Some(pointee), Value::Ptr(p)) = (param.ty.pointer_kind(), param.ty.pointee(), &value) {
                    if kind.is_reference() {
                        let layout = layout_of(pointee, &self.program.types).map_err(|e| Fault::Unsupported(e.to_string()))?;
                        let rk = if kind == PtrKind::MutRef { RetagKind::MutRef } else { RetagKind::SharedRef };
                        let np = self.mem.retag(*p, layout.size, rk, &layout.cell_ranges, true, &param.name, site)?;
                        frame.protected.push(np);
                        value = Value::Ptr(np);
                    }
                }
            }
            frame.locals.insert(param.name.clone(), Local::Reg { value, ty: param.ty.clone() });
        }
        Ok(frame)
    }

    fn spawn_thread(&mut self, frame: Frame, caller: Option<usize>) -> usize {
        self.threads.push(Thread {
            frames: vec![frame],
            status: Status::Running,
            caller,
            joined: false,
        });
        self.threads.len() - 1
    }

    /// Dispatches a call statement. Same-dialect calls push a frame; calls
    /// across the boundary run the callee on a new thread that the caller
    /// joins.
    fn call(&mut self, tid: usize, name: &str, args: Vec<(Value, TypeDesc)>) -> Result<(), Fault> {
        let site = self.site(tid);
        let caller_dialect = self.dialect(tid);
        if let Some(binding) = self.program.binding(name) {
            let Some(def_idx) = self
                .program
                .function_index(&binding.symbol)
                .filter(|&i| self.func(i).dialect == Dialect::Foreign)
            else {
                return Err(Fault::Unsupported(format!("no foreign definition linked for `{}`", binding.symbol)));
            };
            let def = self.func(def_idx);
            let lowered = lower_call(&args, &binding.sig, &def.signature(), &self.program.types, &mut self.mem)?;
            let values = lowered.into_iter().map(|a| a.into_value()).collect();
            let frame = self.enter(def_idx, values, &site)?;
            let callee = self.spawn_thread(frame, Some(tid));
            self.threads[tid].status = Status::Waiting(Wait::Call {
                thread: callee,
                def_ret: def.ret.clone(),
                bind_ret: binding.sig.ret.clone(),
            });
            return Ok(());
        }
        let idx = self.program.function_index(name).expect("validated call target");
        let callee = self.func(idx);
        if callee.dialect == caller_dialect {
            let values = args
                .into_iter()
                .zip(&callee.params)
                .map(|((v, from), p)| v.coerce(Some(&from), &p.ty))
                .collect();
            let frame = self.enter(idx, values, &site)?;
            self.threads[tid].frames.push(frame);
            return Ok(());
        }
        // Callback from foreign code: the caller's argument types act as the
        // binding.
        let binding = crate::ir::BindingSignature {
            params: args.iter().map(|(_, t)| t.clone()).collect(),
            ret: callee.ret.clone(),
            variadic: false,
        };
        let lowered = lower_call(&args, &binding, &callee.signature(), &self.program.types, &mut self.mem)?;
        let values = lowered.into_iter().map(|a| a.into_value()).collect();
        let frame = self.enter(idx, values, &site)?;
        let thread = self.spawn_thread(frame, Some(tid));
        self.threads[tid].status = Status::Waiting(Wait::Call {
            thread,
            def_ret: callee.ret.clone(),
            bind_ret: callee.ret.clone(),
        });
        Ok(())
    }

    /// Pops the top frame: drops owned boxes in reverse declaration order,
    /// releases protectors, frees stack slots, then delivers `value`.
    fn do_return(&mut self, tid: usize, value: Value, from: Option<TypeDesc>) -> Result<(), Fault> {
        let site = self.site(tid);
        let ret_ty = self.func(self.top(tid).func).ret.clone();
        let value = value.coerce(from.as_ref(), &ret_ty);
        let owned: Vec<String> = self.top(tid).owned.iter().rev().cloned().collect();
        for name in owned {
            if let Some(Local::Reg { value: Value::Ptr(p), .. }) = self.top(tid).locals.get(&name) {
                let p = *p;
                self.mem.deallocate(p, Allocator::Host, &site)?;
            }
        }
        let frame = self.threads[tid].frames.pop().expect("frame to return from");
        for p in &frame.protected {
            self.mem.end_protector(*p, &site);
        }
        for p in &frame.stack {
            self.mem.release_stack(*p);
        }
        if self.threads[tid].frames.is_empty() {
            self.threads[tid].status = Status::Finished(value, ret_ty);
        } else {
            self.finish_call(tid, value, ret_ty);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::parse_scenario;

    fn run_src(src: &str, config: MachineConfig) -> Outcome {
        run(&parse_scenario(src).unwrap(), &config)
    }

    #[test]
    fn empty_program_passes() {
        let o = run_src("host fn main() {\n}\n", MachineConfig::default());
        assert_eq!(o.classification, Classification::Pass);
        assert_eq!(o.exit_code(), 0);
    }

    #[test]
    fn budget_exhaustion_times_out() {
        let src = "host fn main() {\n  label top\n  goto top\n}\n";
        let o = run_src(src, MachineConfig { step_budget: 10, ..Default::default() });
        assert_eq!(o.classification, Classification::Timeout);
        assert_eq!(o.steps, 10);
    }

    #[test]
    fn same_seed_same_schedule() {
        let src = "\
host fn worker(n: i32) -> i32 {
  set i: i32 = 0
  label top
  add i = i, 1
  if i < 5 goto top
  return n
}
host fn main() {
  spawn a = worker(1)
  spawn b = worker(2)
  join x = a
  join y = b
  assert_eq x, 1
  assert_eq y, 2
}
";
        let cfg = MachineConfig { seed: 7, ..Default::default() };
        let a = run_src(src, cfg);
        let b = run_src(src, cfg);
        assert_eq!(a.classification, Classification::Pass, "{a:?}");
        assert_eq!(a.schedule, b.schedule);
        let c = run_src(src, MachineConfig { seed: 8, ..cfg });
        assert_eq!(c.classification, Classification::Pass);
    }
}
