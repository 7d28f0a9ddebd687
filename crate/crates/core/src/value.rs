//! Typed runtime values and their byte encoding.

use std::fmt;

use crate::ir::{IntType, TypeDesc};
use crate::memory::{decode_pointer, pointer_bytes, AbstractByte, Pointer, POINTER_BYTES};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Value {
    Unit,
    /// Bits are kept masked to the value's width. `undef` marks a value
    /// loaded from uninitialized memory by permissive foreign code.
    Int { bits: u64, undef: bool },
    Ptr(Pointer),
    /// Aggregates travel as raw bytes.
    Bytes(Vec<AbstractByte>),
    Thread(usize),
}

impl Value {
    pub fn int(n: i128, t: IntType) -> Self {
        Value::Int { bits: (n as u64) & t.width.mask(), undef: false }
    }

    pub fn u64(n: u64) -> Self {
        Value::Int { bits: n, undef: false }
    }

    pub fn undef() -> Self {
        Value::Int { bits: 0, undef: true }
    }

    pub fn is_undef(&self) -> bool {
        match self {
            Value::Int { undef, .. } => *undef,
            Value::Bytes(b) => b.iter().any(|b| !b.is_init()),
            _ => false,
        }
    }

    /// The raw 64-bit payload: integer bits or pointer address.
    pub fn raw_bits(&self) -> Option<u64> {
        match self {
            Value::Int { bits, .. } => Some(*bits),
            Value::Ptr(p) => Some(p.addr),
            _ => None,
        }
    }

    /// Reinterprets the value for `ty`: integers are truncated or extended,
    /// integers used as pointers carry no provenance.
    pub fn coerce(self, from: Option<&TypeDesc>, to: &TypeDesc) -> Value {
        let to = to.peel_cells();
        match (self, to) {
            (Value::Int { bits, undef }, TypeDesc::Int(t)) => {
                let wide = match from.and_then(|f| f.as_int()) {
                    Some(f) if f.signed => sign_extend(bits, f),
                    _ => bits,
                };
                Value::Int { bits: wide & t.width.mask(), undef }
            }
            (Value::Int { bits, undef: false }, TypeDesc::Ptr { .. }) => Value::Ptr(Pointer::from_int(bits)),
            (Value::Ptr(p), TypeDesc::Int(t)) => Value::Int { bits: p.addr & t.width.mask(), undef: false },
            (v, _) => v,
        }
    }

    pub fn to_bytes(&self, ty: &TypeDesc, size: u64) -> Vec<AbstractByte> {
        let mut out = match (self, ty.peel_cells()) {
            (Value::Int { undef: true, .. }, _) => vec![AbstractByte::Uninit; size as usize],
            (Value::Int { bits, .. }, _) => bits
                .to_le_bytes()
                .iter()
                .take(size as usize)
                .map(|b| AbstractByte::Init(*b, None))
                .collect(),
            (Value::Ptr(p), _) => pointer_bytes(*p),
            (Value::Bytes(b), _) => b.clone(),
            (Value::Thread(t), _) => (*t as u64).to_le_bytes().iter().map(|b| AbstractByte::Init(*b, None)).collect(),
            (Value::Unit, _) => Vec::new(),
        };
        out.resize(size as usize, AbstractByte::Uninit);
        out
    }

    /// Decodes memory bytes as `ty`. Scalars with any uninit byte become
    /// `undef`; the caller decides whether that is an error.
    pub fn from_bytes(bytes: &[AbstractByte], ty: &TypeDesc) -> Value {
        match ty.peel_cells() {
            TypeDesc::Unit | TypeDesc::Phantom(_) => Value::Unit,
            TypeDesc::Int(_) => {
                if bytes.iter().all(|b| b.is_init()) {
                    let mut raw = [0u8; 8];
                    for (i, b) in bytes.iter().enumerate().take(8) {
                        raw[i] = b.value().unwrap_or(0);
                    }
                    Value::Int { bits: u64::from_le_bytes(raw), undef: false }
                } else {
                    Value::undef()
                }
            }
            TypeDesc::Ptr { .. } if bytes.len() == POINTER_BYTES => match decode_pointer(bytes) {
                Some(p) => Value::Ptr(p),
                None => Value::undef(),
            },
            _ => Value::Bytes(bytes.to_vec()),
        }
    }

    /// Signed view of an integer of type `t`.
    pub fn as_i128(&self, t: Option<IntType>) -> Option<i128> {
        let bits = self.raw_bits()?;
        Some(match t {
            Some(t) if t.signed => sign_extend(bits, t) as i64 as i128,
            _ => bits as i128,
        })
    }
}

fn sign_extend(bits: u64, t: IntType) -> u64 {
    let shift = 64 - t.width.bits();
    (((bits << shift) as i64) >> shift) as u64
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Unit => f.write_str("()"),
            Value::Int { undef: true, .. } => f.write_str("undef"),
            Value::Int { bits, .. } => write!(f, "{bits}"),
            Value::Ptr(p) => write!(f, "{p}"),
            Value::Bytes(b) => write!(f, "<{} bytes>", b.len()),
            Value::Thread(t) => write!(f, "thread#{t}"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::IntType;

    #[test]
    fn coerce_truncates_and_sign_extends() {
        let v = Value::int(-1, IntType::I8);
        assert_eq!(v, Value::Int { bits: 0xff, undef: false });
        let w = v.clone().coerce(Some(&TypeDesc::Int(IntType::I8)), &TypeDesc::Int(IntType::I32));
        assert_eq!(w.raw_bits(), Some(0xffff_ffff));
        let u = v.coerce(Some(&TypeDesc::Int(IntType::U8)), &TypeDesc::Int(IntType::I32));
        assert_eq!(u.raw_bits(), Some(0xff));
    }

    #[test]
    fn int_bytes_round_trip() {
        let ty = TypeDesc::Int(IntType::I32);
        let v = Value::int(-5, IntType::I32);
        let bytes = v.to_bytes(&ty, 4);
        assert_eq!(Value::from_bytes(&bytes, &ty), v);
        assert_eq!(Value::int(-5, IntType::I32).as_i128(Some(IntType::I32)), Some(-5));
    }

    #[test]
    fn undef_stores_uninit() {
        let ty = TypeDesc::Int(IntType::I16);
        let bytes = Value::undef().to_bytes(&ty, 2);
        assert!(bytes.iter().all(|b| !b.is_init()));
        assert!(Value::from_bytes(&bytes, &ty).is_undef());
    }
}
