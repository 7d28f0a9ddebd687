//! Value conversion across the host/foreign boundary.
//!
//! Bindings are never checked against definitions ahead of time; instead
//! each call pairs the caller's view of every argument with the callee's
//! declared parameter and requires the byte sizes to agree.

use thiserror::Error;

use crate::diagnostics::Diagnostic;
use crate::ir::{layout_of, BindingSignature, IntType, IntWidth, LayoutError, TypeDesc, TypeTable};
use crate::memory::{AbstractByte, AllocOrigin, Memory, Pointer};
use crate::value::Value;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum AbiValue {
    Scalar { width: IntWidth, bits: u64, undef: bool },
    Pointer(Pointer),
    /// An aggregate passed by value, as its byte image.
    Blob(Vec<AbstractByte>),
}

impl AbiValue {
    pub fn into_value(self) -> Value {
        match self {
            AbiValue::Scalar { bits, undef, .. } => Value::Int { bits, undef },
            AbiValue::Pointer(p) => Value::Ptr(p),
            AbiValue::Blob(b) => Value::Bytes(b),
        }
    }
}

#[derive(Debug, Error)]
pub enum TranslateError {
    #[error("{0}")]
    InvalidBinding(String),
    #[error("{0}")]
    Unsupported(String),
    #[error(transparent)]
    Layout(#[from] LayoutError),
    #[error("{0}")]
    Fault(Box<Diagnostic>),
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Shape {
    Unit,
    Scalar(IntWidth),
    Pointer,
    Aggregate {
        size: u64,
        fields: Vec<TypeDesc>,
        homogeneous: bool,
    },
}

fn shape(ty: &TypeDesc, types: &TypeTable) -> Result<Shape, LayoutError> {
    Ok(match ty.peel_cells() {
        TypeDesc::Unit | TypeDesc::Phantom(_) => Shape::Unit,
        TypeDesc::Int(t) => Shape::Scalar(t.width),
        TypeDesc::Ptr { .. } => Shape::Pointer,
        agg @ (TypeDesc::Struct(_) | TypeDesc::Array(..)) => {
            let layout = layout_of(agg, types)?;
            let fields: Vec<TypeDesc> = match agg {
                TypeDesc::Array(elem, n) => vec![(**elem).clone(); *n as usize],
                TypeDesc::Struct(name) => {
                    let def = types.get(name).ok_or_else(|| LayoutError::UnknownType(name.clone()))?;
                    let mut out = Vec::new();
                    for f in &def.fields {
                        if layout_of(&f.ty, types)?.size > 0 {
                            out.push(f.ty.clone());
                        }
                    }
                    out
                }
                _ => unreachable!(),
            };
            let homogeneous = !fields.is_empty()
                && layout.padding.is_empty()
                && fields.iter().all(|f| f.peel_cells() == fields[0].peel_cells() && !f.is_aggregate());
            Shape::Aggregate {
                size: layout.size,
                fields,
                homogeneous,
            }
        }
        TypeDesc::Cell(_) => unreachable!("cells are peeled"),
    })
}

fn size_of(ty: &TypeDesc, types: &TypeTable) -> Result<u64, LayoutError> {
    Ok(layout_of(ty, types)?.size)
}

fn mismatch(from: &TypeDesc, to: &TypeDesc, types: &TypeTable, what: &str) -> TranslateError {
    let fs = size_of(from, types).unwrap_or(0);
    let ts = size_of(to, types).unwrap_or(0);
    TranslateError::InvalidBinding(format!(
        "{what}: binding type `{from}` ({fs} bytes) does not match definition type `{to}` ({ts} bytes)"
    ))
}

fn bytes_of(v: &Value, ty: &TypeDesc, types: &TypeTable) -> Result<Vec<AbstractByte>, LayoutError> {
    Ok(v.to_bytes(ty, size_of(ty, types)?))
}

/// Converts one value of type `from` into a parameter of type `to`.
fn convert(
    v: &Value,
    from: &TypeDesc,
    to: &TypeDesc,
    types: &TypeTable,
    mem: &mut Memory,
    what: &str,
) -> Result<AbiValue, TranslateError> {
    let (fs, ts) = (shape(from, types)?, shape(to, types)?);
    let as_pointer = |v: &Value| match v {
        Value::Ptr(p) => *p,
        other => Pointer::from_int(other.raw_bits().unwrap_or(0)),
    };
    match (&fs, &ts) {
        (Shape::Scalar(a), Shape::Scalar(b)) if a == b => {
            let (bits, undef) = match v {
                Value::Int { bits, undef } => (*bits, *undef),
                other => (other.raw_bits().unwrap_or(0), false),
            };
            Ok(AbiValue::Scalar { width: *b, bits: bits & b.mask(), undef })
        }
        (Shape::Pointer, Shape::Pointer) => Ok(AbiValue::Pointer(as_pointer(v))),
        (Shape::Pointer, Shape::Scalar(IntWidth::W64)) => {
            let addr = mem.expose(as_pointer(v));
            Ok(AbiValue::Scalar { width: IntWidth::W64, bits: addr, undef: false })
        }
        (Shape::Scalar(IntWidth::W64), Shape::Pointer) => {
            if v.is_undef() {
                return Ok(AbiValue::Scalar { width: IntWidth::W64, bits: 0, undef: true });
            }
            let addr = v.raw_bits().unwrap_or(0);
            mem.from_exposed(addr).map(AbiValue::Pointer).map_err(TranslateError::Fault)
        }
        (Shape::Aggregate { size: a, fields: fa, .. }, Shape::Aggregate { size: b, fields: fb, .. })
            if a == b && fa.len() == fb.len() =>
        {
            Ok(AbiValue::Blob(bytes_of(v, from, types)?))
        }
        (Shape::Aggregate { size, .. }, Shape::Scalar(w)) if w.bytes() == *size => {
            let bytes = bytes_of(v, from, types)?;
            match Value::from_bytes(&bytes, &TypeDesc::Int(IntType::new(*w, false))) {
                Value::Int { bits, undef } => Ok(AbiValue::Scalar { width: *w, bits, undef }),
                _ => unreachable!(),
            }
        }
        (Shape::Scalar(w), Shape::Aggregate { size, fields, .. }) if w.bytes() == *size && fields.len() == 1 => {
            Ok(AbiValue::Blob(bytes_of(v, from, types)?))
        }
        _ => Err(mismatch(from, to, types, what)),
    }
}

/// Pairs host arguments with the definition's parameters. `args` carry the
/// caller's static types; the binding supplies the declared type of each
/// fixed argument.
pub fn lower_call(
    args: &[(Value, TypeDesc)],
    binding: &BindingSignature,
    definition: &BindingSignature,
    types: &TypeTable,
    mem: &mut Memory,
) -> Result<Vec<AbiValue>, TranslateError> {
    let mut out = Vec::with_capacity(definition.params.len());
    let fixed = definition.params.len();
    let mut j = 0;
    for (i, (v, own)) in args.iter().enumerate() {
        let from = binding.params.get(i).unwrap_or(own);
        let what = format!("argument {}", i + 1);
        if j >= fixed {
            if !definition.variadic {
                return Err(TranslateError::InvalidBinding(format!(
                    "binding passes {} arguments but the definition takes {fixed}",
                    args.len()
                )));
            }
            match shape(from, types)? {
                Shape::Aggregate { .. } => {
                    return Err(TranslateError::Unsupported(format!(
                        "aggregate `{from}` passed as a variadic argument"
                    )))
                }
                Shape::Pointer => out.push(convert(v, from, from, types, mem, &what)?),
                Shape::Scalar(_) => out.push(convert(v, from, from, types, mem, &what)?),
                Shape::Unit => {}
            }
            continue;
        }
        let to = &definition.params[j];
        match convert(v, from, to, types, mem, &what) {
            Ok(a) => {
                out.push(a);
                j += 1;
            }
            Err(TranslateError::InvalidBinding(msg)) => {
                let Shape::Aggregate { fields, homogeneous: true, .. } = shape(from, types)? else {
                    return Err(TranslateError::InvalidBinding(msg));
                };
                let remaining = args.len() - i - 1;
                if fixed - j < remaining + fields.len() {
                    return Err(TranslateError::InvalidBinding(msg));
                }
                let bytes = bytes_of(v, from, types)?;
                let mut at = 0usize;
                for field in &fields {
                    let fsize = size_of(field, types)? as usize;
                    let fv = Value::from_bytes(&bytes[at..at + fsize], field);
                    at += fsize;
                    out.push(convert(&fv, field, &definition.params[j], types, mem, &what)?);
                    j += 1;
                }
            }
            Err(e) => return Err(e),
        }
    }
    if j < fixed {
        return Err(TranslateError::InvalidBinding(format!(
            "binding supplies {j} of the {fixed} parameters the definition expects"
        )));
    }
    Ok(out)
}

/// Converts the callee's return value into the type the caller declared.
pub fn raise_return(
    v: AbiValue,
    definition: &TypeDesc,
    binding: &TypeDesc,
    types: &TypeTable,
    mem: &mut Memory,
) -> Result<Value, TranslateError> {
    let (ds, bs) = (shape(definition, types)?, shape(binding, types)?);
    match (ds == Shape::Unit, bs == Shape::Unit) {
        (true, true) => return Ok(Value::Unit),
        (false, true) => {
            return Err(TranslateError::InvalidBinding(format!(
                "definition returns `{definition}` but the binding declares no return type"
            )))
        }
        (true, false) => {
            return Err(TranslateError::InvalidBinding(format!(
                "binding expects `{binding}` but the definition returns nothing"
            )))
        }
        (false, false) => {}
    }
    let value = v.into_value();
    convert(&value, definition, binding, types, mem, "return value")
        .map(AbiValue::into_value)
        .map_err(|e| match e {
            TranslateError::InvalidBinding(_) => mismatch_return(definition, binding, types),
            other => other,
        })
}

fn mismatch_return(definition: &TypeDesc, binding: &TypeDesc, types: &TypeTable) -> TranslateError {
    TranslateError::InvalidBinding(format!(
        "return value: definition returns `{definition}` ({} bytes) but the binding declares `{binding}` ({} bytes)",
        size_of(definition, types).unwrap_or(0),
        size_of(binding, types).unwrap_or(0)
    ))
}

/// Wraps a callee-side value for [`raise_return`].
pub fn abi_value(v: &Value, ty: &TypeDesc, types: &TypeTable) -> Result<AbiValue, TranslateError> {
    Ok(match shape(ty, types)? {
        Shape::Unit => AbiValue::Blob(Vec::new()),
        Shape::Scalar(width) => match v {
            Value::Int { bits, undef } => AbiValue::Scalar { width, bits: *bits, undef: *undef },
            other => AbiValue::Scalar { width, bits: other.raw_bits().unwrap_or(0) & width.mask(), undef: false },
        },
        Shape::Pointer => match v {
            Value::Ptr(p) => AbiValue::Pointer(*p),
            Value::Int { undef: true, .. } => AbiValue::Scalar { width: IntWidth::W64, bits: 0, undef: true },
            other => AbiValue::Pointer(Pointer::from_int(other.raw_bits().unwrap_or(0))),
        },
        Shape::Aggregate { .. } => AbiValue::Blob(bytes_of(v, ty, types)?),
    })
}

/// Types a pointer whose pointee is unknown on the host side: a pointer to
/// a stack or static allocation of primitive size gets that integer type,
/// anything else is treated as pointing to bytes.
pub fn type_opaque_pointer(p: Pointer, mem: &Memory) -> TypeDesc {
    let refined = p.alloc.map(|id| mem.get(id)).and_then(|a| {
        let stackish = matches!(a.origin, AllocOrigin::HostStack | AllocOrigin::ForeignStack | AllocOrigin::Static);
        stackish.then(|| IntWidth::from_bytes(a.size)).flatten()
    });
    let width = refined.unwrap_or(IntWidth::W8);
    TypeDesc::raw_mut(TypeDesc::Int(IntType::new(width, false)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::{FieldDef, PtrKind, StructDef};
    use crate::memory::{MemoryConfig, Provenance};

    fn i(t: IntType) -> TypeDesc {
        TypeDesc::Int(t)
    }

    fn sig(params: Vec<TypeDesc>, ret: TypeDesc) -> BindingSignature {
        BindingSignature { params, ret, variadic: false }
    }

    fn pair_table() -> TypeTable {
        let mut t = TypeTable::new();
        t.insert(StructDef {
            name: "Pair".into(),
            fields: vec![
                FieldDef { name: "a".into(), ty: i(IntType::I32), offset: None },
                FieldDef { name: "b".into(), ty: i(IntType::I32), offset: None },
            ],
        });
        t
    }

    #[test]
    fn pointer_to_size_t_exposes() {
        let types = TypeTable::new();
        let mut mem = Memory::new(MemoryConfig::default());
        let p = mem.allocate(4, 4, AllocOrigin::HostStack, "x", None);
        let ptr_ty = TypeDesc::ptr(PtrKind::RawMut, i(IntType::I32));
        let b = sig(vec![ptr_ty.clone()], TypeDesc::Unit);
        let d = sig(vec![i(IntType::U64)], TypeDesc::Unit);
        let out = lower_call(&[(Value::Ptr(p), ptr_ty)], &b, &d, &types, &mut mem).unwrap();
        assert_eq!(out, vec![AbiValue::Scalar { width: IntWidth::W64, bits: p.addr, undef: false }]);
        let Provenance::Concrete(tag) = p.prov else { unreachable!() };
        assert!(mem.get(p.alloc.unwrap()).exposed.contains(&tag));
    }

    #[test]
    fn homogeneous_pair_flattens() {
        let types = pair_table();
        let mut mem = Memory::new(MemoryConfig::default());
        let pair = TypeDesc::Struct("Pair".into());
        let mut bytes = Value::int(7, IntType::I32).to_bytes(&i(IntType::I32), 4);
        bytes.extend(Value::int(9, IntType::I32).to_bytes(&i(IntType::I32), 4));
        let b = sig(vec![pair.clone()], TypeDesc::Unit);
        let d = sig(vec![i(IntType::I32), i(IntType::I32)], TypeDesc::Unit);
        let out = lower_call(&[(Value::Bytes(bytes), pair)], &b, &d, &types, &mut mem).unwrap();
        assert_eq!(
            out,
            vec![
                AbiValue::Scalar { width: IntWidth::W32, bits: 7, undef: false },
                AbiValue::Scalar { width: IntWidth::W32, bits: 9, undef: false },
            ]
        );
    }

    #[test]
    fn flattening_respects_parameter_count() {
        let types = pair_table();
        let mut mem = Memory::new(MemoryConfig::default());
        let pair = TypeDesc::Struct("Pair".into());
        let b = sig(vec![pair.clone(), i(IntType::I32)], TypeDesc::Unit);
        // Two fields plus one remaining argument need three parameters.
        let d = sig(vec![i(IntType::I32), i(IntType::I32)], TypeDesc::Unit);
        let args = [(Value::Bytes(vec![AbstractByte::Init(0, None); 8]), pair), (Value::int(1, IntType::I32), i(IntType::I32))];
        assert!(matches!(lower_call(&args, &b, &d, &types, &mut mem), Err(TranslateError::InvalidBinding(_))));
    }

    #[test]
    fn i32_for_size_t_is_invalid() {
        let types = TypeTable::new();
        let mut mem = Memory::new(MemoryConfig::default());
        let b = sig(vec![i(IntType::I32)], TypeDesc::Unit);
        let d = sig(vec![i(IntType::U64)], TypeDesc::Unit);
        let err = lower_call(&[(Value::int(3, IntType::I32), i(IntType::I32))], &b, &d, &types, &mut mem).unwrap_err();
        assert!(matches!(err, TranslateError::InvalidBinding(_)));
    }

    #[test]
    fn identical_scalars_pass_through() {
        let types = TypeTable::new();
        let mut mem = Memory::new(MemoryConfig::default());
        let s = sig(vec![i(IntType::I64)], i(IntType::I64));
        let out = lower_call(&[(Value::int(-2, IntType::I64), i(IntType::I64))], &s, &s, &types, &mut mem).unwrap();
        assert_eq!(out[0].clone().into_value(), Value::int(-2, IntType::I64));
    }

    #[test]
    fn variadic_aggregate_is_unsupported() {
        let types = pair_table();
        let mut mem = Memory::new(MemoryConfig::default());
        let pair = TypeDesc::Struct("Pair".into());
        let b = BindingSignature { params: vec![], ret: TypeDesc::Unit, variadic: true };
        let d = BindingSignature { params: vec![], ret: TypeDesc::Unit, variadic: true };
        let err = lower_call(&[(Value::Bytes(vec![AbstractByte::Init(0, None); 8]), pair)], &b, &d, &types, &mut mem)
            .unwrap_err();
        assert!(matches!(err, TranslateError::Unsupported(_)));
    }

    #[test]
    fn return_checks() {
        let types = TypeTable::new();
        let mut mem = Memory::new(MemoryConfig::default());
        let v = AbiValue::Scalar { width: IntWidth::W32, bits: 1, undef: false };
        assert!(matches!(
            raise_return(v.clone(), &i(IntType::I32), &TypeDesc::Unit, &types, &mut mem),
            Err(TranslateError::InvalidBinding(_))
        ));
        let b = AbiValue::Scalar { width: IntWidth::W8, bits: 1, undef: false };
        assert!(matches!(
            raise_return(b, &i(IntType::U8), &i(IntType::I32), &types, &mut mem),
            Err(TranslateError::InvalidBinding(_))
        ));
        let w = AbiValue::Scalar { width: IntWidth::W64, bits: u64::MAX - 1, undef: false };
        assert_eq!(
            raise_return(w, &i(IntType::I64), &i(IntType::I64), &types, &mut mem).unwrap(),
            Value::Int { bits: u64::MAX - 1, undef: false }
        );
    }

    #[test]
    fn opaque_pointer_typing() {
        let mut mem = Memory::new(MemoryConfig::default());
        let s = mem.allocate(4, 4, AllocOrigin::Static, "S", None);
        let h = mem.allocate(24, 8, AllocOrigin::HostHeap, "h", None);
        let k = mem.allocate(8, 8, AllocOrigin::HostStack, "k", None);
        assert_eq!(type_opaque_pointer(s, &mem), TypeDesc::raw_mut(i(IntType::U32)));
        assert_eq!(type_opaque_pointer(h, &mem), TypeDesc::raw_mut(i(IntType::U8)));
        assert_eq!(type_opaque_pointer(k, &mem), TypeDesc::raw_mut(i(IntType::U64)));
    }
}
