//! C-style layout on a 64-bit little-endian target.

use std::ops::Range;

use thiserror::Error;

use super::types::{TypeDesc, TypeTable};

pub const POINTER_SIZE: u64 = 8;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Layout {
    pub size: u64,
    pub align: u64,
    /// Offsets of the direct fields of a struct (empty for other types).
    pub field_offsets: Vec<u64>,
    pub padding: Vec<Range<u64>>,
    /// Byte ranges that sit under interior mutability.
    pub cell_ranges: Vec<Range<u64>>,
}

impl Layout {
    fn scalar(size: u64) -> Self {
        Layout {
            size,
            align: size.max(1),
            field_offsets: Vec::new(),
            padding: Vec::new(),
            cell_ranges: Vec::new(),
        }
    }

    fn zero_sized() -> Self {
        Layout {
            size: 0,
            align: 1,
            field_offsets: Vec::new(),
            padding: Vec::new(),
            cell_ranges: Vec::new(),
        }
    }

    pub fn is_padding(&self, offset: u64) -> bool {
        self.padding.iter().any(|r| r.contains(&offset))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum LayoutError {
    #[error("unknown type `{0}`")]
    UnknownType(String),
    #[error("type `{0}` contains itself without indirection")]
    Recursive(String),
    #[error("field `{field}` of `{ty}`: explicit offset {offset} {problem}")]
    BadOffset {
        ty: String,
        field: String,
        offset: u64,
        problem: &'static str,
    },
    #[error("type `{0}` is too large")]
    Overflow(String),
}

pub fn align_up(value: u64, align: u64) -> u64 {
    debug_assert!(align.is_power_of_two());
    (value + align - 1) & !(align - 1)
}

/// Computes the layout of `ty`. Deterministic and free of side effects.
pub fn layout_of(ty: &TypeDesc, types: &TypeTable) -> Result<Layout, LayoutError> {
    let mut visiting = Vec::new();
    layout_inner(ty, types, &mut visiting)
}

fn layout_inner(
    ty: &TypeDesc,
    types: &TypeTable,
    visiting: &mut Vec<String>,
) -> Result<Layout, LayoutError> {
    match ty {
        TypeDesc::Unit | TypeDesc::Phantom(_) => Ok(Layout::zero_sized()),
        TypeDesc::Int(t) => Ok(Layout::scalar(t.width.bytes())),
        TypeDesc::Ptr { .. } => Ok(Layout::scalar(POINTER_SIZE)),
        TypeDesc::Cell(inner) => {
            let mut l = layout_inner(inner, types, visiting)?;
            l.cell_ranges = if l.size == 0 { Vec::new() } else { vec![0..l.size] };
            Ok(l)
        }
        TypeDesc::Array(elem, count) => {
            let e = layout_inner(elem, types, visiting)?;
            let size = e
                .size
                .checked_mul(*count)
                .ok_or_else(|| LayoutError::Overflow(ty.to_string()))?;
            let mut padding = Vec::new();
            let mut cells = Vec::new();
            for i in 0..*count {
                let base = i * e.size;
                padding.extend(e.padding.iter().map(|r| r.start + base..r.end + base));
                cells.extend(e.cell_ranges.iter().map(|r| r.start + base..r.end + base));
            }
            Ok(Layout {
                size,
                align: e.align,
                field_offsets: Vec::new(),
                padding: coalesce(padding),
                cell_ranges: coalesce(cells),
            })
        }
        TypeDesc::Struct(name) => {
            if visiting.iter().any(|v| v == name) {
                return Err(LayoutError::Recursive(name.clone()));
            }
            let def = types
                .get(name)
                .ok_or_else(|| LayoutError::UnknownType(name.clone()))?;
            visiting.push(name.clone());
            let mut cursor = 0u64;
            let mut align = 1u64;
            let mut offsets = Vec::with_capacity(def.fields.len());
            let mut padding = Vec::new();
            let mut cells = Vec::new();
            for field in &def.fields {
                let fl = layout_inner(&field.ty, types, visiting)?;
                let natural = align_up(cursor, fl.align);
                let offset = match field.offset {
                    None => natural,
                    Some(off) => {
                        if off % fl.align != 0 {
                            return Err(LayoutError::BadOffset {
                                ty: name.clone(),
                                field: field.name.clone(),
                                offset: off,
                                problem: "is not a multiple of the field alignment",
                            });
                        }
                        if off < cursor {
                            return Err(LayoutError::BadOffset {
                                ty: name.clone(),
                                field: field.name.clone(),
                                offset: off,
                                problem: "overlaps an earlier field",
                            });
                        }
                        off
                    }
                };
                if offset > cursor {
                    padding.push(cursor..offset);
                }
                padding.extend(fl.padding.iter().map(|r| r.start + offset..r.end + offset));
                cells.extend(fl.cell_ranges.iter().map(|r| r.start + offset..r.end + offset));
                offsets.push(offset);
                cursor = offset + fl.size;
                align = align.max(fl.align);
            }
            visiting.pop();
            let size = align_up(cursor, align);
            if size > cursor {
                padding.push(cursor..size);
            }
            Ok(Layout {
                size,
                align,
                field_offsets: offsets,
                padding: coalesce(padding),
                cell_ranges: coalesce(cells),
            })
        }
    }
}

/// Sorts and merges touching ranges; drops empty ones.
pub fn coalesce(mut ranges: Vec<Range<u64>>) -> Vec<Range<u64>> {
    ranges.retain(|r| r.start < r.end);
    ranges.sort_by_key(|r| r.start);
    let mut out: Vec<Range<u64>> = Vec::with_capacity(ranges.len());
    for r in ranges {
        match out.last_mut() {
            Some(last) if r.start <= last.end => last.end = last.end.max(r.end),
            _ => out.push(r),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::types::{FieldDef, IntType, PtrKind, StructDef};

    fn table(defs: Vec<StructDef>) -> TypeTable {
        let mut t = TypeTable::new();
        for d in defs {
            t.insert(d);
        }
        t
    }

    fn field(name: &str, ty: TypeDesc) -> FieldDef {
        FieldDef {
            name: name.into(),
            ty,
            offset: None,
        }
    }

    #[test]
    fn i32_is_four_bytes() {
        let l = layout_of(&TypeDesc::Int(IntType::I32), &TypeTable::new()).unwrap();
        assert_eq!((l.size, l.align), (4, 4));
    }

    #[test]
    fn struct_with_interior_padding() {
        let t = table(vec![StructDef {
            name: "S".into(),
            fields: vec![
                field("a", TypeDesc::Int(IntType::I32)),
                field("b", TypeDesc::Int(IntType::I64)),
            ],
        }]);
        let l = layout_of(&TypeDesc::Struct("S".into()), &t).unwrap();
        assert_eq!(l.size, 16);
        assert_eq!(l.align, 8);
        assert_eq!(l.field_offsets, vec![0, 8]);
        assert_eq!(l.padding, vec![4..8]);
    }

    #[test]
    fn cell_field_gives_cell_range() {
        let t = table(vec![StructDef {
            name: "S".into(),
            fields: vec![
                field("c", TypeDesc::Cell(Box::new(TypeDesc::Int(IntType::I32)))),
                field("p", TypeDesc::ptr(PtrKind::RawMut, TypeDesc::Int(IntType::I32))),
            ],
        }]);
        let l = layout_of(&TypeDesc::Struct("S".into()), &t).unwrap();
        assert_eq!(l.size, 16);
        assert_eq!(l.cell_ranges, vec![0..4]);
    }

    #[test]
    fn phantom_cell_is_inert() {
        let ty = TypeDesc::Phantom(Box::new(TypeDesc::Cell(Box::new(TypeDesc::Int(
            IntType::I32,
        )))));
        let l = layout_of(&ty, &TypeTable::new()).unwrap();
        assert_eq!(l.size, 0);
        assert!(l.cell_ranges.is_empty());
    }

    #[test]
    fn self_containing_struct_is_rejected() {
        let t = table(vec![StructDef {
            name: "R".into(),
            fields: vec![field("me", TypeDesc::Struct("R".into()))],
        }]);
        assert_eq!(
            layout_of(&TypeDesc::Struct("R".into()), &t),
            Err(LayoutError::Recursive("R".into()))
        );
    }

    #[test]
    fn recursion_through_pointer_is_fine() {
        let t = table(vec![StructDef {
            name: "Node".into(),
            fields: vec![
                field("v", TypeDesc::Int(IntType::I64)),
                field("next", TypeDesc::raw_mut(TypeDesc::Struct("Node".into()))),
            ],
        }]);
        assert_eq!(layout_of(&TypeDesc::Struct("Node".into()), &t).unwrap().size, 16);
    }

    #[test]
    fn explicit_offsets_are_checked() {
        let mut f = field("b", TypeDesc::Int(IntType::I32));
        f.offset = Some(6);
        let t = table(vec![StructDef {
            name: "S".into(),
            fields: vec![field("a", TypeDesc::Int(IntType::I8)), f],
        }]);
        assert!(matches!(
            layout_of(&TypeDesc::Struct("S".into()), &t),
            Err(LayoutError::BadOffset { .. })
        ));
    }

    #[test]
    fn explicit_offset_leaves_padding() {
        let mut f = field("b", TypeDesc::Int(IntType::I32));
        f.offset = Some(8);
        let t = table(vec![StructDef {
            name: "S".into(),
            fields: vec![field("a", TypeDesc::Int(IntType::I8)), f],
        }]);
        let l = layout_of(&TypeDesc::Struct("S".into()), &t).unwrap();
        assert_eq!(l.field_offsets, vec![0, 8]);
        assert_eq!(l.padding, vec![1..8]);
        assert_eq!(l.size, 12);
    }

    #[test]
    fn array_of_cells() {
        let ty = TypeDesc::Array(Box::new(TypeDesc::Cell(Box::new(TypeDesc::Int(IntType::U16)))), 3);
        let l = layout_of(&ty, &TypeTable::new()).unwrap();
        assert_eq!(l.size, 6);
        assert_eq!(l.cell_ranges, vec![0..6]);
    }
}
