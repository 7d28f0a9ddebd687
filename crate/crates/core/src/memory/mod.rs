//! Shared allocation store. Every access goes through the allocation's
//! borrow tracker.

use std::collections::BTreeSet;
use std::fmt;
use std::ops::Range;

use rand::{RngExt, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};

use crate::borrows::{AccessKind, AliasingModel, ProvTag, RetagKind, RetagRequest, Tag, Tracker, TreeSnapshot};
use crate::diagnostics::{AllocationInfo, DiagResult, Diagnostic, DiagnosticKind, Site};
use crate::ir::{align_up, Dialect};

pub const FIRST_ADDRESS: u64 = 0x10000;
pub const GUARD_GAP: u64 = 16;
pub const POINTER_BYTES: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AllocId(pub u32);

impl fmt::Display for AllocId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "alloc{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AllocOrigin {
    HostStack,
    HostHeap,
    ForeignHeap,
    ForeignStack,
    Static,
}

impl AllocOrigin {
    pub fn is_heap(self) -> bool {
        matches!(self, AllocOrigin::HostHeap | AllocOrigin::ForeignHeap)
    }

    pub fn is_foreign(self) -> bool {
        matches!(self, AllocOrigin::ForeignHeap | AllocOrigin::ForeignStack)
    }
}

impl fmt::Display for AllocOrigin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AllocOrigin::HostStack => "host-stack",
            AllocOrigin::HostHeap => "host-heap",
            AllocOrigin::ForeignHeap => "foreign-heap",
            AllocOrigin::ForeignStack => "foreign-stack",
            AllocOrigin::Static => "static",
        })
    }
}

/// Which allocator a deallocation goes through.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Allocator {
    Host,
    Foreign,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Provenance {
    Concrete(Tag),
    /// Rebuilt from an integer; may use any exposed capability.
    Wildcard,
    None,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Pointer {
    pub addr: u64,
    /// Absent exactly when provenance is `None`.
    pub alloc: Option<AllocId>,
    pub prov: Provenance,
}

impl Pointer {
    pub fn null() -> Self {
        Pointer::from_int(0)
    }

    /// An address without provenance.
    pub fn from_int(addr: u64) -> Self {
        Pointer { addr, alloc: None, prov: Provenance::None }
    }

    pub fn is_null(&self) -> bool {
        self.addr == 0 && self.alloc.is_none()
    }

    pub fn wrapping_offset(self, delta: i64) -> Self {
        Pointer { addr: self.addr.wrapping_add_signed(delta), ..self }
    }

    pub fn tag(&self) -> Option<ProvTag> {
        match self.prov {
            Provenance::Concrete(t) => Some(ProvTag::Concrete(t)),
            Provenance::Wildcard => Some(ProvTag::Wildcard),
            Provenance::None => None,
        }
    }
}

impl fmt::Display for Pointer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.alloc, self.prov) {
            (Some(a), Provenance::Concrete(t)) => write!(f, "{:#x}[{a}]{t}", self.addr),
            (Some(a), _) => write!(f, "{:#x}[{a}]<wildcard>", self.addr),
            (None, _) => write!(f, "{:#x}", self.addr),
        }
    }
}

/// Identifies one byte of a stored pointer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PtrFragment {
    pub alloc: Option<AllocId>,
    pub prov: Provenance,
    pub index: u8,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AbstractByte {
    Uninit,
    Init(u8, Option<PtrFragment>),
}

impl AbstractByte {
    pub fn is_init(self) -> bool {
        matches!(self, AbstractByte::Init(..))
    }

    pub fn value(self) -> Option<u8> {
        match self {
            AbstractByte::Init(v, _) => Some(v),
            AbstractByte::Uninit => None,
        }
    }
}

/// Encodes `ptr` as eight little-endian bytes carrying fragments.
pub fn pointer_bytes(ptr: Pointer) -> Vec<AbstractByte> {
    ptr.addr
        .to_le_bytes()
        .iter()
        .enumerate()
        .map(|(i, b)| {
            let frag = (ptr.prov != Provenance::None).then_some(PtrFragment {
                alloc: ptr.alloc,
                prov: ptr.prov,
                index: i as u8,
            });
            AbstractByte::Init(*b, frag)
        })
        .collect()
}

/// Decodes eight bytes. Provenance survives only if all eight carry the
/// fragments of one pointer, in order.
pub fn decode_pointer(bytes: &[AbstractByte]) -> Option<Pointer> {
    if bytes.len() != POINTER_BYTES {
        return None;
    }
    let mut raw = [0u8; 8];
    for (i, b) in bytes.iter().enumerate() {
        raw[i] = b.value()?;
    }
    let addr = u64::from_le_bytes(raw);
    let frags: Vec<Option<PtrFragment>> = bytes
        .iter()
        .map(|b| match b {
            AbstractByte::Init(_, f) => *f,
            AbstractByte::Uninit => None,
        })
        .collect();
    let consistent = match frags[0] {
        Some(first) => frags
            .iter()
            .enumerate()
            .all(|(i, f)| matches!(f, Some(f) if f.index as usize == i && f.alloc == first.alloc && f.prov == first.prov)),
        None => false,
    };
    Some(match (consistent, frags[0]) {
        (true, Some(f)) => Pointer { addr, alloc: f.alloc, prov: f.prov },
        _ => Pointer::from_int(addr),
    })
}

#[derive(Clone, Debug)]
pub struct Allocation {
    pub id: AllocId,
    pub base: u64,
    pub size: u64,
    pub align: u64,
    pub bytes: Vec<AbstractByte>,
    pub origin: AllocOrigin,
    pub live: bool,
    pub exposed: BTreeSet<Tag>,
    pub tracker: Tracker,
    pub base_tag: Tag,
    pub label: String,
    pub created: Option<Site>,
    /// Marked by `forget`: an intentional leak, exempt from the leak report.
    pub forgotten: bool,
}

impl Allocation {
    pub fn info(&self) -> AllocationInfo {
        AllocationInfo {
            id: self.id.0,
            label: self.label.clone(),
            origin: self.origin,
            size: self.size,
            created: self.created.clone(),
        }
    }

    pub fn init_mask(&self) -> Vec<bool> {
        self.bytes.iter().map(|b| b.is_init()).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MemoryConfig {
    pub model: AliasingModel,
    pub strict_provenance: bool,
    pub zero_init_foreign: bool,
    pub symbolic_alignment: bool,
    pub seed: u64,
}

impl Default for MemoryConfig {
    fn default() -> Self {
        MemoryConfig {
            model: AliasingModel::TreeBorrows,
            strict_provenance: false,
            zero_init_foreign: false,
            symbolic_alignment: true,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Memory {
    allocs: Vec<Allocation>,
    next_addr: u64,
    next_tag: u64,
    rng: Xoshiro256PlusPlus,
    pub config: MemoryConfig,
}

fn with_alloc(mut d: Box<Diagnostic>, a: &Allocation, addr: u64) -> Box<Diagnostic> {
    if d.allocation.is_none() {
        d.allocation = Some(a.info());
    }
    d.addresses.push(addr);
    d
}

impl Memory {
    pub fn new(config: MemoryConfig) -> Self {
        Memory {
            allocs: Vec::new(),
            next_addr: FIRST_ADDRESS,
            next_tag: 0,
            // Address jitter uses its own stream so it never perturbs scheduling.
            rng: Xoshiro256PlusPlus::seed_from_u64(config.seed ^ 0x6d65_6d6f_7279),
            config,
        }
    }

    pub fn fresh_tag(&mut self) -> Tag {
        let t = Tag(self.next_tag);
        self.next_tag += 1;
        t
    }

    pub fn allocations(&self) -> &[Allocation] {
        &self.allocs
    }

    pub fn get(&self, id: AllocId) -> &Allocation {
        &self.allocs[id.0 as usize]
    }

    fn get_mut(&mut self, id: AllocId) -> &mut Allocation {
        &mut self.allocs[id.0 as usize]
    }

    pub fn allocate(&mut self, size: u64, align: u64, origin: AllocOrigin, label: &str, site: Option<Site>) -> Pointer {
        let align = align.max(1);
        debug_assert!(align.is_power_of_two());
        let jitter = self.rng.random_range(0..=3u64) * GUARD_GAP;
        let base = align_up(self.next_addr + jitter, align);
        self.next_addr = base + size + GUARD_GAP;
        let id = AllocId(self.allocs.len() as u32);
        let base_tag = self.fresh_tag();
        let zero = self.config.zero_init_foreign && origin.is_foreign();
        let fill = if zero { AbstractByte::Init(0, None) } else { AbstractByte::Uninit };
        self.allocs.push(Allocation {
            id,
            base,
            size,
            align,
            bytes: vec![fill; size as usize],
            origin,
            live: true,
            exposed: BTreeSet::new(),
            tracker: Tracker::new(self.config.model, size, base_tag, label, site.clone()),
            base_tag,
            label: label.to_string(),
            created: site,
            forgotten: false,
        });
        Pointer { addr: base, alloc: Some(id), prov: Provenance::Concrete(base_tag) }
    }

    /// Liveness, provenance and bounds. Returns the allocation and offset.
    fn locate(&self, ptr: Pointer, size: u64, what: &str) -> DiagResult<(AllocId, u64)> {
        let Some(id) = ptr.alloc.filter(|_| ptr.prov != Provenance::None) else {
            let mut d = Diagnostic::boxed(
                DiagnosticKind::AccessOutOfBounds,
                format!("{what} of {size} bytes through pointer {ptr} without provenance"),
            );
            d.addresses.push(ptr.addr);
            return Err(d);
        };
        let a = self.get(id);
        if !a.live {
            let d = Diagnostic::boxed(
                DiagnosticKind::UseAfterFree,
                format!("{what} of {size} bytes at {ptr}: {id} has been freed"),
            );
            return Err(with_alloc(d, a, ptr.addr));
        }
        let offset = ptr.addr.wrapping_sub(a.base);
        if ptr.addr < a.base || offset.checked_add(size).is_none_or(|end| end > a.size) {
            let d = Diagnostic::boxed(
                DiagnosticKind::AccessOutOfBounds,
                format!(
                    "{what} of {size} bytes at {ptr} is outside {id} ({} bytes)",
                    a.size
                ),
            );
            return Err(with_alloc(d, a, ptr.addr));
        }
        Ok((id, offset))
    }

    /// Runs every check of an access without touching bytes: liveness,
    /// provenance, bounds, symbolic alignment (host actors only), then the
    /// borrow tracker.
    pub fn check_access(
        &mut self,
        ptr: Pointer,
        size: u64,
        align: u64,
        kind: AccessKind,
        actor: Dialect,
        site: &Site,
    ) -> DiagResult<(AllocId, u64)> {
        let (id, offset) = self.locate(ptr, size, &kind.to_string())?;
        let a = self.get(id);
        if self.config.symbolic_alignment && actor == Dialect::Host && (offset % align != 0 || a.align < align) {
            let d = Diagnostic::boxed(
                DiagnosticKind::MisalignedAccess,
                format!(
                    "{kind} at offset {offset} of {id} requires alignment {align} (allocation aligned to {})",
                    a.align
                ),
            );
            return Err(with_alloc(d, a, ptr.addr));
        }
        let tag = ptr.tag().expect("located pointers have provenance");
        let a = self.get_mut(id);
        let exposed = a.exposed.clone();
        if let Err(d) = a.tracker.access(tag, offset..offset + size, kind, &exposed, site) {
            return Err(with_alloc(d, self.get(id), ptr.addr));
        }
        Ok((id, offset))
    }

    pub fn read_bytes(
        &mut self,
        ptr: Pointer,
        size: u64,
        align: u64,
        actor: Dialect,
        site: &Site,
    ) -> DiagResult<Vec<AbstractByte>> {
        let (id, offset) = self.check_access(ptr, size, align, AccessKind::Read, actor, site)?;
        Ok(self.get(id).bytes[offset as usize..(offset + size) as usize].to_vec())
    }

    /// Writes `bytes`. An uninit source byte leaves an initialized
    /// destination byte as it was, so the init mask never shrinks.
    pub fn write_bytes(
        &mut self,
        ptr: Pointer,
        bytes: &[AbstractByte],
        align: u64,
        actor: Dialect,
        site: &Site,
    ) -> DiagResult<()> {
        let (id, offset) = self.check_access(ptr, bytes.len() as u64, align, AccessKind::Write, actor, site)?;
        let a = self.get_mut(id);
        for (dst, src) in a.bytes[offset as usize..].iter_mut().zip(bytes) {
            if src.is_init() {
                *dst = *src;
            }
        }
        Ok(())
    }

    /// Creates a derived pointer for a reference, raw cast or cell access.
    pub fn retag(
        &mut self,
        ptr: Pointer,
        size: u64,
        kind: RetagKind,
        cell_ranges: &[Range<u64>],
        protect: bool,
        label: &str,
        site: &Site,
    ) -> DiagResult<Pointer> {
        let (id, offset) = self.locate(ptr, size, "retag")?;
        let tag = ptr.tag().expect("located pointers have provenance");
        let new_tag = self.fresh_tag();
        let shifted: Vec<Range<u64>> = cell_ranges.iter().map(|r| r.start + offset..r.end + offset).collect();
        let a = self.get_mut(id);
        let exposed = a.exposed.clone();
        let req = RetagRequest {
            new_tag,
            kind,
            range: offset..offset + size,
            cell_ranges: &shifted,
            protect,
            label: label.to_string(),
            site: site.clone(),
        };
        match a.tracker.retag(tag, req, &exposed) {
            Ok(ProvTag::Concrete(t)) => Ok(Pointer { prov: Provenance::Concrete(t), ..ptr }),
            Ok(ProvTag::Wildcard) => Ok(Pointer { prov: Provenance::Wildcard, ..ptr }),
            Err(d) => Err(with_alloc(d, self.get(id), ptr.addr)),
        }
    }

    pub fn end_protector(&mut self, ptr: Pointer, site: &Site) {
        if let (Some(id), Provenance::Concrete(tag)) = (ptr.alloc, ptr.prov) {
            self.get_mut(id).tracker.end_protector(tag, site);
        }
    }

    pub fn deallocate(&mut self, ptr: Pointer, via: Allocator, site: &Site) -> DiagResult<()> {
        let Some(id) = ptr.alloc.filter(|_| ptr.prov != Provenance::None) else {
            let mut d = Diagnostic::boxed(
                DiagnosticKind::InvalidDealloc,
                format!("deallocation of pointer {ptr} which does not point to an allocation"),
            );
            d.addresses.push(ptr.addr);
            return Err(d);
        };
        let a = self.get(id);
        let fail = |kind, msg: String| Err(with_alloc(Diagnostic::boxed(kind, msg), a, ptr.addr));
        if !a.live {
            return fail(DiagnosticKind::DoubleFree, format!("{id} ({}) has already been freed", a.label));
        }
        if ptr.addr != a.base {
            return fail(
                DiagnosticKind::InvalidDealloc,
                format!("deallocation at offset {} of {id}; only the start may be freed", ptr.addr.wrapping_sub(a.base) as i64),
            );
        }
        if !a.origin.is_heap() {
            return fail(DiagnosticKind::InvalidDealloc, format!("deallocation of {} memory {id} ({})", a.origin, a.label));
        }
        let mismatch = match via {
            Allocator::Host => a.origin == AllocOrigin::ForeignHeap,
            Allocator::Foreign => a.origin == AllocOrigin::HostHeap,
        };
        if mismatch {
            let (by, from) = match via {
                Allocator::Host => ("the host allocator", "foreign malloc"),
                Allocator::Foreign => ("foreign free", "the host allocator"),
            };
            return fail(
                DiagnosticKind::CrossLanguageDealloc,
                format!("{id} ({}) was allocated by {from} but released by {by}", a.label),
            );
        }
        // Deallocation counts as a write to every byte, then the tracker
        // vetoes it if any tag is still protected.
        let tag = ptr.tag().expect("located pointers have provenance");
        let size = a.size;
        let a = self.get_mut(id);
        let exposed = a.exposed.clone();
        let checked = a
            .tracker
            .access(tag, 0..size, AccessKind::Write, &exposed, site)
            .and_then(|()| a.tracker.dealloc_check());
        if let Err(d) = checked {
            return Err(with_alloc(d, self.get(id), ptr.addr));
        }
        self.get_mut(id).live = false;
        Ok(())
    }

    /// Ends a stack allocation at frame exit. No checks: the frame owns it.
    pub fn release_stack(&mut self, ptr: Pointer) {
        if let Some(id) = ptr.alloc {
            self.get_mut(id).live = false;
        }
    }

    /// Marks the pointer's tag as exposed and returns its address.
    pub fn expose(&mut self, ptr: Pointer) -> u64 {
        if let (Some(id), Provenance::Concrete(tag)) = (ptr.alloc, ptr.prov) {
            self.get_mut(id).exposed.insert(tag);
        }
        ptr.addr
    }

    pub fn live_allocation_at(&self, addr: u64) -> Option<AllocId> {
        self.allocs
            .iter()
            .find(|a| a.live && a.base <= addr && addr <= a.base + a.size)
            .map(|a| a.id)
    }

    pub fn from_exposed(&self, addr: u64) -> DiagResult<Pointer> {
        if self.config.strict_provenance {
            let mut d = Diagnostic::boxed(
                DiagnosticKind::StrictProvenanceViolation,
                format!("integer-to-pointer conversion of {addr:#x} under strict provenance"),
            );
            d.addresses.push(addr);
            return Err(d);
        }
        Ok(match self.live_allocation_at(addr) {
            Some(id) => Pointer { addr, alloc: Some(id), prov: Provenance::Wildcard },
            None => Pointer::from_int(addr),
        })
    }

    pub fn forget(&mut self, ptr: Pointer) {
        if let Some(id) = ptr.alloc {
            self.get_mut(id).forgotten = true;
        }
    }

    /// One memory-leak diagnostic per live heap allocation not marked as an
    /// intentional leak.
    pub fn leak_report(&self) -> Vec<Diagnostic> {
        self.allocs
            .iter()
            .filter(|a| a.live && a.origin.is_heap() && !a.forgotten)
            .map(|a| {
                let mut d = Diagnostic::new(
                    DiagnosticKind::MemoryLeak,
                    format!("{} bytes of {} memory in {} ({}) were never freed", a.size, a.origin, a.id, a.label),
                );
                d.allocation = Some(a.info());
                d.location = a.created.clone();
                d.addresses.push(a.base);
                d
            })
            .collect()
    }

    pub fn snapshot(&self, ptr: Pointer) -> Option<TreeSnapshot> {
        let id = ptr.alloc?;
        let a = self.get(id);
        let offset = ptr.addr.checked_sub(a.base)?;
        Some(a.tracker.snapshot(ptr.tag()?, offset))
    }

    /// Locations where the allocation holds a Tree Borrows tag, or stack item.
    pub fn has_tag(&self, id: AllocId, tag: Tag) -> bool {
        self.get(id).tracker.has_tag(tag)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn site() -> Site {
        Site::new(Dialect::Host, "main", 1)
    }

    fn mem() -> Memory {
        Memory::new(MemoryConfig::default())
    }

    #[test]
    fn fresh_allocation_has_base_tag_at_offset_zero() {
        let mut m = mem();
        let p = m.allocate(4, 4, AllocOrigin::HostStack, "x", None);
        let a = m.get(p.alloc.unwrap());
        assert_eq!(p.addr, a.base);
        assert_eq!(p.prov, Provenance::Concrete(a.base_tag));
        assert!(a.bytes.iter().all(|b| !b.is_init()));
    }

    #[test]
    fn zero_init_foreign() {
        let mut m = Memory::new(MemoryConfig { zero_init_foreign: true, ..Default::default() });
        let p = m.allocate(8, 8, AllocOrigin::ForeignHeap, "m", None);
        assert!(m.get(p.alloc.unwrap()).bytes.iter().all(|b| *b == AbstractByte::Init(0, None)));
        let q = m.allocate(8, 8, AllocOrigin::HostHeap, "h", None);
        assert!(m.get(q.alloc.unwrap()).bytes.iter().all(|b| !b.is_init()));
    }

    #[test]
    fn allocations_are_disjoint_and_aligned() {
        let mut m = mem();
        let a = m.allocate(24, 8, AllocOrigin::HostHeap, "a", None);
        let b = m.allocate(4, 4, AllocOrigin::HostHeap, "b", None);
        assert!(b.addr >= a.addr + 24 + GUARD_GAP);
        assert_eq!(a.addr % 8, 0);
        assert!(a.addr >= FIRST_ADDRESS);
    }

    #[test]
    fn alignment_is_symbolic() {
        let mut m = mem();
        let p = m.allocate(8, 8, AllocOrigin::HostStack, "x", None);
        let err = m.read_bytes(p.wrapping_offset(2), 4, 4, Dialect::Host, &site()).unwrap_err();
        assert_eq!(err.kind, DiagnosticKind::MisalignedAccess);
        m.write_bytes(p.wrapping_offset(4), &[AbstractByte::Init(1, None); 4], 4, Dialect::Host, &site()).unwrap();
        m.read_bytes(p.wrapping_offset(4), 4, 4, Dialect::Host, &site()).unwrap();
        // An allocation with smaller alignment than the value is rejected
        // even when the address happens to line up.
        let q = m.allocate(8, 1, AllocOrigin::HostStack, "bytes", None);
        let err = m.read_bytes(q, 4, 4, Dialect::Host, &site()).unwrap_err();
        assert_eq!(err.kind, DiagnosticKind::MisalignedAccess);
    }

    #[test]
    fn out_of_bounds_and_freed() {
        let mut m = mem();
        let p = m.allocate(4, 4, AllocOrigin::HostHeap, "x", None);
        assert_eq!(
            m.read_bytes(p.wrapping_offset(4), 4, 4, Dialect::Host, &site()).unwrap_err().kind,
            DiagnosticKind::AccessOutOfBounds
        );
        m.deallocate(p, Allocator::Host, &site()).unwrap();
        assert_eq!(m.read_bytes(p, 4, 4, Dialect::Host, &site()).unwrap_err().kind, DiagnosticKind::UseAfterFree);
        assert_eq!(m.deallocate(p, Allocator::Host, &site()).unwrap_err().kind, DiagnosticKind::DoubleFree);
    }

    #[test]
    fn deallocation_checks() {
        let mut m = mem();
        let h = m.allocate(4, 4, AllocOrigin::HostHeap, "h", None);
        assert_eq!(
            m.deallocate(h, Allocator::Foreign, &site()).unwrap_err().kind,
            DiagnosticKind::CrossLanguageDealloc
        );
        assert_eq!(
            m.deallocate(h.wrapping_offset(1), Allocator::Host, &site()).unwrap_err().kind,
            DiagnosticKind::InvalidDealloc
        );
        let s = m.allocate(4, 4, AllocOrigin::HostStack, "s", None);
        assert_eq!(m.deallocate(s, Allocator::Host, &site()).unwrap_err().kind, DiagnosticKind::InvalidDealloc);
        let f = m.allocate(4, 4, AllocOrigin::ForeignHeap, "f", None);
        assert_eq!(
            m.deallocate(f, Allocator::Host, &site()).unwrap_err().kind,
            DiagnosticKind::CrossLanguageDealloc
        );
        m.deallocate(f, Allocator::Foreign, &site()).unwrap();
    }

    #[test]
    fn expose_and_from_exposed() {
        let mut m = mem();
        let p = m.allocate(8, 8, AllocOrigin::HostStack, "x", None);
        let addr = m.expose(p);
        assert_eq!(addr, p.addr);
        m.expose(p);
        assert_eq!(m.get(p.alloc.unwrap()).exposed.len(), 1);
        let w = m.from_exposed(addr + 4).unwrap();
        assert_eq!((w.alloc, w.prov), (p.alloc, Provenance::Wildcard));
        let none = m.from_exposed(1).unwrap();
        assert_eq!(none.prov, Provenance::None);
        assert_eq!(m.read_bytes(none, 1, 1, Dialect::Host, &site()).unwrap_err().kind, DiagnosticKind::AccessOutOfBounds);
        let strict = Memory::new(MemoryConfig { strict_provenance: true, ..Default::default() });
        assert_eq!(strict.from_exposed(addr).unwrap_err().kind, DiagnosticKind::StrictProvenanceViolation);
    }

    #[test]
    fn pointer_bytes_round_trip_and_degrade() {
        let mut m = mem();
        let p = m.allocate(8, 8, AllocOrigin::HostStack, "x", None);
        let mut bytes = pointer_bytes(p);
        assert_eq!(decode_pointer(&bytes), Some(p));
        bytes[3] = AbstractByte::Init(bytes[3].value().unwrap(), None);
        let d = decode_pointer(&bytes).unwrap();
        assert_eq!((d.addr, d.prov), (p.addr, Provenance::None));
    }

    #[test]
    fn leaks() {
        let mut m = mem();
        let a = m.allocate(4, 4, AllocOrigin::HostHeap, "a", None);
        let b = m.allocate(4, 4, AllocOrigin::ForeignHeap, "b", None);
        m.allocate(4, 4, AllocOrigin::HostStack, "s", None);
        assert_eq!(m.leak_report().len(), 2);
        m.deallocate(b, Allocator::Foreign, &site()).unwrap();
        m.forget(a);
        assert!(m.leak_report().is_empty());
    }
}
