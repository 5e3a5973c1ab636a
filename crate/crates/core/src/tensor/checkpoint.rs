//! `PYC1` named-tensor checkpoints.

use crate::codec::{put_f32s, put_u32, ByteReader};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"PYC1";
pub const VERSION: u32 = 1;

pub fn encode<'a>(tensors: impl IntoIterator<Item = (&'a str, &'a Tensor)>) -> Vec<u8> {
    let items: Vec<_> = tensors.into_iter().collect();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, VERSION);
    put_u32(&mut out, items.len() as u32);
    for (name, t) in items {
        put_u32(&mut out, name.len() as u32);
        out.extend_from_slice(name.as_bytes());
        put_u32(&mut out, t.rank() as u32);
        for &d in t.shape() {
            put_u32(&mut out, d as u32);
        }
        put_f32s(&mut out, t.data());
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<Vec<(String, Tensor)>> {
    let mut r = ByteReader::new(bytes);
    r.magic(MAGIC)?;
    let at = r.offset();
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(Error::format(at, format!("unsupported version {version}")));
    }
    let count = r.u32("tensor count")?;
    let mut out = Vec::new();
    for _ in 0..count {
        let len = r.u32("name length")? as usize;
        let at = r.offset();
        let name = std::str::from_utf8(r.take(len, "name")?)
            .map_err(|_| Error::format(at, "tensor name is not UTF-8"))?
            .to_owned();
        let rank = r.u32("rank")? as usize;
        if rank > 8 {
            return Err(Error::format(r.offset() - 4, format!("implausible rank {rank} for {name}")));
        }
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u32("extent")? as usize);
        }
        let at = r.offset();
        let numel = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
        let numel = numel.ok_or_else(|| Error::format(at, format!("shape {shape:?} overflows")))?;
        let data = r.f32s(numel, "tensor data")?;
        let t = Tensor::new(&shape, data).map_err(|e| Error::format(at, e.to_string()))?;
        out.push((name, t));
    }
    r.finish()?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let a = Tensor::new(&[2, 3], vec![1.0, -0.0, f32::MIN_POSITIVE, 3.5, -7.25, 1e-30]).unwrap();
        let b = Tensor::scalar(0.1);
        let bytes = encode([("enc.w", &a), ("s", &b)]);
        let back = decode(&bytes).unwrap();
        assert_eq!(back[0].0, "enc.w");
        let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&back[0].1), bits(&a));
        assert_eq!(back[1].1.shape(), &[] as &[usize]);
        assert_eq!(encode(back.iter().map(|(n, t)| (n.as_str(), t))), bytes);
    }

    #[test]
    fn truncation_names_offset() {
        let a = Tensor::zeros(&[4]).unwrap();
        let bytes = encode([("w", &a)]);
        match decode(&bytes[..bytes.len() - 3]) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, 4 + 4 + 4 + 4 + 1 + 4 + 4),
            other => panic!("{other:?}"),
        }
        assert!(matches!(decode(b"PYC2"), Err(Error::Format { offset: 0, .. })));
    }
}
