//! The simulated type system.
//!
//! Struct types are referenced by name and resolved through a [`TypeTable`],
//! which lets two structs point at each other without building a cyclic value.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

/// Width of an integer type in bytes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum IntWidth {
    W8,
    W16,
    W32,
    W64,
}

impl IntWidth {
    pub fn bytes(self) -> u64 {
        match self {
            IntWidth::W8 => 1,
            IntWidth::W16 => 2,
            IntWidth::W32 => 4,
            IntWidth::W64 => 8,
        }
    }

    pub fn bits(self) -> u32 {
        self.bytes() as u32 * 8
    }

    pub fn from_bytes(n: u64) -> Option<IntWidth> {
        match n {
            1 => Some(IntWidth::W8),
            2 => Some(IntWidth::W16),
            4 => Some(IntWidth::W32),
            8 => Some(IntWidth::W64),
            _ => None,
        }
    }

    pub fn mask(self) -> u64 {
        match self {
            IntWidth::W64 => u64::MAX,
            w => (1u64 << w.bits()) - 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct IntType {
    pub width: IntWidth,
    pub signed: bool,
}

impl IntType {
    pub const I8: IntType = IntType::new(IntWidth::W8, true);
    pub const I16: IntType = IntType::new(IntWidth::W16, true);
    pub const I32: IntType = IntType::new(IntWidth::W32, true);
    pub const I64: IntType = IntType::new(IntWidth::W64, true);
    pub const U8: IntType = IntType::new(IntWidth::W8, false);
    pub const U16: IntType = IntType::new(IntWidth::W16, false);
    pub const U32: IntType = IntType::new(IntWidth::W32, false);
    pub const U64: IntType = IntType::new(IntWidth::W64, false);

    pub const fn new(width: IntWidth, signed: bool) -> Self {
        IntType { width, signed }
    }
}

impl fmt::Display for IntType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", if self.signed { 'i' } else { 'u' }, self.width.bits())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PtrKind {
    SharedRef,
    MutRef,
    RawConst,
    RawMut,
    /// A pointer whose pointee is not known on this side of the boundary.
    Opaque,
}

impl PtrKind {
    pub fn is_reference(self) -> bool {
        matches!(self, PtrKind::SharedRef | PtrKind::MutRef)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TypeDesc {
    Unit,
    Int(IntType),
    /// `pointee == None` means the pointee is opaque.
    Ptr {
        kind: PtrKind,
        pointee: Option<Box<TypeDesc>>,
    },
    /// A named struct, resolved through the [`TypeTable`].
    Struct(String),
    Array(Box<TypeDesc>, u64),
    /// Interior mutability: same layout as the inner type.
    Cell(Box<TypeDesc>),
    /// Zero-sized marker that behaves like its inner type for typing only.
    Phantom(Box<TypeDesc>),
}

impl TypeDesc {
    pub fn int(t: IntType) -> Self {
        TypeDesc::Int(t)
    }

    pub fn ptr(kind: PtrKind, pointee: TypeDesc) -> Self {
        TypeDesc::Ptr {
            kind,
            pointee: Some(Box::new(pointee)),
        }
    }

    pub fn opaque_ptr() -> Self {
        TypeDesc::Ptr {
            kind: PtrKind::Opaque,
            pointee: None,
        }
    }

    pub fn raw_mut(pointee: TypeDesc) -> Self {
        TypeDesc::ptr(PtrKind::RawMut, pointee)
    }

    pub fn is_pointer(&self) -> bool {
        matches!(self, TypeDesc::Ptr { .. })
    }

    pub fn is_unit(&self) -> bool {
        matches!(self, TypeDesc::Unit)
    }

    pub fn is_aggregate(&self) -> bool {
        match self {
            TypeDesc::Struct(_) | TypeDesc::Array(..) => true,
            TypeDesc::Cell(inner) => inner.is_aggregate(),
            _ => false,
        }
    }

    pub fn as_int(&self) -> Option<IntType> {
        match self {
            TypeDesc::Int(t) => Some(*t),
            TypeDesc::Cell(inner) => inner.as_int(),
            _ => None,
        }
    }

    pub fn pointer_kind(&self) -> Option<PtrKind> {
        match self {
            TypeDesc::Ptr { kind, .. } => Some(*kind),
            TypeDesc::Cell(inner) => inner.pointer_kind(),
            _ => None,
        }
    }

    /// The pointee of a pointer type; `None` for opaque pointers and non-pointers.
    pub fn pointee(&self) -> Option<&TypeDesc> {
        match self {
            TypeDesc::Ptr { pointee, .. } => pointee.as_deref(),
            TypeDesc::Cell(inner) => inner.pointee(),
            _ => None,
        }
    }

    /// Strips any number of `cell` wrappers.
    pub fn peel_cells(&self) -> &TypeDesc {
        match self {
            TypeDesc::Cell(inner) => inner.peel_cells(),
            t => t,
        }
    }
}

impl fmt::Display for TypeDesc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TypeDesc::Unit => f.write_str("unit"),
            TypeDesc::Int(t) => write!(f, "{t}"),
            TypeDesc::Ptr { kind, pointee } => {
                let Some(p) = pointee else {
                    return match kind {
                        PtrKind::Opaque => f.write_str("ptr"),
                        PtrKind::SharedRef => f.write_str("&opaque"),
                        PtrKind::MutRef => f.write_str("&mut opaque"),
                        PtrKind::RawConst => f.write_str("*const opaque"),
                        PtrKind::RawMut => f.write_str("*mut opaque"),
                    };
                };
                match kind {
                    PtrKind::SharedRef => write!(f, "&{p}"),
                    PtrKind::MutRef => write!(f, "&mut {p}"),
                    PtrKind::RawConst => write!(f, "*const {p}"),
                    PtrKind::RawMut => write!(f, "*mut {p}"),
                    PtrKind::Opaque => write!(f, "ptr<{p}>"),
                }
            }
            TypeDesc::Struct(name) => f.write_str(name),
            TypeDesc::Array(elem, n) => write!(f, "[{elem}; {n}]"),
            TypeDesc::Cell(inner) => write!(f, "cell<{inner}>"),
            TypeDesc::Phantom(inner) => write!(f, "phantom<{inner}>"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldDef {
    pub name: String,
    pub ty: TypeDesc,
    pub offset: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructDef {
    pub name: String,
    pub fields: Vec<FieldDef>,
}

impl StructDef {
    pub fn field(&self, name: &str) -> Option<(usize, &FieldDef)> {
        self.fields.iter().enumerate().find(|(_, f)| f.name == name)
    }
}

/// All struct definitions of a program, keyed by name.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TypeTable {
    structs: BTreeMap<String, StructDef>,
}

impl TypeTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns the previous definition if the name was already taken.
    pub fn insert(&mut self, def: StructDef) -> Option<StructDef> {
        self.structs.insert(def.name.clone(), def)
    }

    pub fn get(&self, name: &str) -> Option<&StructDef> {
        self.structs.get(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.structs.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = &StructDef> {
        self.structs.values()
    }

    pub fn len(&self) -> usize {
        self.structs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.structs.is_empty()
    }
}
