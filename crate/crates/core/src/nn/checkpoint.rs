//! `OMRL-NET1` checkpoint records.
//!
//! ```text
//! "OMRL-NET1"                      9 bytes
//! layer count L                    u32
//! widths [in, hidden.., out]       (L + 1) x u64
//! per layer: weights row-major, then biases, f64
//! ```
//!
//! All integers and floats are little-endian. A file may hold several
//! records back to back (one per agent).

use std::path::Path;

use ndarray::{Array1, Array2};

use super::mlp::Mlp;
use crate::codec::{ByteReader, ByteWriter};
use crate::error::{Error, Result};

pub const NET_MAGIC: &[u8; 9] = b"OMRL-NET1";

const MAX_WIDTH: u64 = 1 << 20;

pub(crate) fn write_network(w: &mut ByteWriter, net: &Mlp) {
    w.bytes(NET_MAGIC);
    w.u32(net.num_layers() as u32);
    for &d in net.dims() {
        w.u64(d as u64);
    }
    for (wt, b) in net.weights().iter().zip(net.biases()) {
        for &v in wt.iter() {
            w.f64(v);
        }
        for &v in b.iter() {
            w.f64(v);
        }
    }
}

pub(crate) fn read_network(r: &mut ByteReader<'_>) -> Result<Mlp> {
    let magic = r.take(NET_MAGIC.len(), "network magic")?;
    if magic != NET_MAGIC {
        return Err(Error::Format {
            offset: r.offset() - NET_MAGIC.len(),
            detail: "bad network magic".into(),
        });
    }
    let layers = r.u32("layer count")? as usize;
    if layers == 0 || layers > 64 {
        return r.fail(format!("implausible layer count {layers}"));
    }
    let mut dims = Vec::with_capacity(layers + 1);
    for _ in 0..=layers {
        let d = r.u64("layer width")?;
        if d == 0 || d > MAX_WIDTH {
            return r.fail(format!("implausible layer width {d}"));
        }
        dims.push(d as usize);
    }
    let expected: usize = dims.windows(2).map(|p| p[0] * p[1] + p[1]).sum::<usize>() * 8;
    if r.remaining() < expected {
        return r.fail(format!(
            "truncated parameters: need {expected} bytes, {} left",
            r.remaining()
        ));
    }
    let mut weights = Vec::with_capacity(layers);
    let mut biases = Vec::with_capacity(layers);
    for p in dims.windows(2) {
        let (fan_in, fan_out) = (p[0], p[1]);
        let mut wv = Vec::with_capacity(fan_in * fan_out);
        for _ in 0..fan_in * fan_out {
            wv.push(r.finite_f64("weight")?);
        }
        let mut bv = Vec::with_capacity(fan_out);
        for _ in 0..fan_out {
            bv.push(r.finite_f64("bias")?);
        }
        weights.push(Array2::from_shape_vec((fan_out, fan_in), wv).unwrap());
        biases.push(Array1::from_vec(bv));
    }
    Mlp::from_layers(weights, biases)
}

pub fn encode_networks(nets: &[Mlp]) -> Vec<u8> {
    let mut w = ByteWriter::default();
    for net in nets {
        write_network(&mut w, net);
    }
    w.buf
}

pub fn decode_networks(bytes: &[u8]) -> Result<Vec<Mlp>> {
    let mut r = ByteReader::new(bytes);
    let mut nets = Vec::new();
    while r.remaining() > 0 {
        nets.push(read_network(&mut r)?);
    }
    if nets.is_empty() {
        return r.fail("no network records");
    }
    Ok(nets)
}

pub fn save_networks(path: impl AsRef<Path>, nets: &[Mlp]) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_networks(nets)).map_err(|e| Error::io(path, e))
}

pub fn load_networks(path: impl AsRef<Path>) -> Result<Vec<Mlp>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_networks(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded_rng;

    #[test]
    fn roundtrip_is_bit_exact() {
        let mut rng = seeded_rng(9, "test");
        let a = Mlp::new(6, &[7, 5], 3, &mut rng).unwrap();
        let b = Mlp::new(17, &[4], 30, &mut rng).unwrap();
        let bytes = encode_networks(&[a.clone(), b.clone()]);
        assert_eq!(&bytes[..9], NET_MAGIC);
        let back = decode_networks(&bytes).unwrap();
        assert_eq!(back, vec![a, b]);
        assert_eq!(encode_networks(&back), bytes);
    }

    #[test]
    fn truncation_reports_offset() {
        let net = Mlp::zeros(2, &[3], 1);
        let bytes = encode_networks(&[net]);
        let err = decode_networks(&bytes[..bytes.len() - 4]).unwrap_err();
        match err {
            Error::Format { offset, .. } => assert!(offset > 9),
            other => panic!("unexpected {other}"),
        }
        assert!(decode_networks(b"OMRL-NET2").is_err());
    }
}
