//! Binary checkpoint format.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic        8 bytes  "HIPCKPT\0"
//! version      u32      = 1
//! role         u32 length + UTF-8 bytes
//! meta count   u32, then per entry: u32 key length + UTF-8 key + f64 value
//! seed         u64
//! layer count  u32
//! per layer    u32 fan_in, u32 fan_out, u8 activation (0 identity, 1 relu)
//! per layer    fan_in*fan_out f64 weights (row-major), then fan_out f64 biases
//! ```

use std::io::{Read, Write};

use super::network::{Activation, Dense, Network};
use super::{NnError, Tensor};

pub const MAGIC: &[u8; 8] = b"HIPCKPT\0";
pub const FORMAT_VERSION: u32 = 1;

/// A network plus the header metadata it was saved with.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub role: String,
    pub meta: Vec<(String, f64)>,
    pub network: Network,
}

/// Header fields without the weight payload.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointHeader {
    pub version: u32,
    pub role: String,
    pub meta: Vec<(String, f64)>,
    pub seed: u64,
    pub layers: Vec<(usize, usize, Activation)>,
}

impl Checkpoint {
    pub fn meta_value(&self, key: &str) -> Option<f64> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| *v)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        write_str(w, &self.role)?;
        w.write_all(&(self.meta.len() as u32).to_le_bytes())?;
        for (k, v) in &self.meta {
            write_str(w, k)?;
            w.write_all(&v.to_le_bytes())?;
        }
        w.write_all(&self.network.seed().to_le_bytes())?;
        let layers = self.network.layers();
        w.write_all(&(layers.len() as u32).to_le_bytes())?;
        for l in layers {
            w.write_all(&(l.fan_in() as u32).to_le_bytes())?;
            w.write_all(&(l.fan_out() as u32).to_le_bytes())?;
            w.write_all(&[l.activation.code()])?;
        }
        for l in layers {
            for v in l.weight.data().iter().chain(l.bias.data()) {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, NnError> {
        let mut r = bytes;
        let header = read_header(&mut r)?;
        let mut layers = Vec::with_capacity(header.layers.len());
        for &(fi, fo, act) in &header.layers {
            let weight = read_f64s(&mut r, fi * fo)?;
            let bias = read_f64s(&mut r, fo)?;
            layers.push(Dense {
                weight: Tensor::new(vec![fi, fo], weight)?,
                bias: Tensor::new(vec![fo], bias)?,
                activation: act,
            });
        }
        if !r.is_empty() {
            return Err(NnError::Checkpoint(format!("{} trailing bytes", r.len())));
        }
        Ok(Self {
            role: header.role,
            meta: header.meta,
            network: Network::from_layers(layers, header.seed)?,
        })
    }

    pub fn save(&self, path: &std::path::Path) -> Result<(), NnError> {
        std::fs::write(path, self.to_bytes()).map_err(|e| NnError::Checkpoint(e.to_string()))
    }

    pub fn load(path: &std::path::Path) -> Result<Self, NnError> {
        let bytes = std::fs::read(path).map_err(|e| NnError::Checkpoint(format!("{}: {e}", path.display())))?;
        Self::from_bytes(&bytes)
    }
}

/// Parses only the header of a checkpoint file.
pub fn read_header_bytes(bytes: &[u8]) -> Result<CheckpointHeader, NnError> {
    let mut r = bytes;
    read_header(&mut r)
}

fn read_header(r: &mut &[u8]) -> Result<CheckpointHeader, NnError> {
    let mut magic = [0u8; 8];
    read_exact(r, &mut magic)?;
    if &magic != MAGIC {
        return Err(NnError::Checkpoint("bad magic".into()));
    }
    let version = read_u32(r)?;
    if version != FORMAT_VERSION {
        return Err(NnError::Checkpoint(format!("unsupported version {version}")));
    }
    let role = read_str(r)?;
    let n_meta = read_u32(r)? as usize;
    let mut meta = Vec::with_capacity(n_meta.min(1024));
    for _ in 0..n_meta {
        let k = read_str(r)?;
        let v = f64::from_le_bytes(read_array(r)?);
        meta.push((k, v));
    }
    let seed = u64::from_le_bytes(read_array(r)?);
    let n_layers = read_u32(r)? as usize;
    let mut layers = Vec::with_capacity(n_layers.min(1024));
    for _ in 0..n_layers {
        let fi = read_u32(r)? as usize;
        let fo = read_u32(r)? as usize;
        let [code] = read_array::<1>(r)?;
        let act = Activation::from_code(code)
            .ok_or_else(|| NnError::Checkpoint(format!("unknown activation code {code}")))?;
        layers.push((fi, fo, act));
    }
    Ok(CheckpointHeader {
        version,
        role,
        meta,
        seed,
        layers,
    })
}

fn write_str<W: Write>(w: &mut W, s: &str) -> std::io::Result<()> {
    w.write_all(&(s.len() as u32).to_le_bytes())?;
    w.write_all(s.as_bytes())
}

fn read_exact(r: &mut &[u8], buf: &mut [u8]) -> Result<(), NnError> {
    r.read_exact(buf)
        .map_err(|_| NnError::Checkpoint("truncated checkpoint".into()))
}

fn read_array<const N: usize>(r: &mut &[u8]) -> Result<[u8; N], NnError> {
    let mut buf = [0u8; N];
    read_exact(r, &mut buf)?;
    Ok(buf)
}

fn read_u32(r: &mut &[u8]) -> Result<u32, NnError> {
    Ok(u32::from_le_bytes(read_array(r)?))
}

fn read_str(r: &mut &[u8]) -> Result<String, NnError> {
    let n = read_u32(r)? as usize;
    if n > r.len() {
        return Err(NnError::Checkpoint("truncated checkpoint".into()));
    }
    let mut buf = vec![0u8; n];
    read_exact(r, &mut buf)?;
    String::from_utf8(buf).map_err(|_| NnError::Checkpoint("invalid UTF-8".into()))
}

fn read_f64s(r: &mut &[u8], n: usize) -> Result<Vec<f64>, NnError> {
    if n.saturating_mul(8) > r.len() {
        return Err(NnError::Checkpoint("truncated checkpoint".into()));
    }
    let (head, tail) = r.split_at(n * 8);
    *r = tail;
    Ok(head
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(
            seed in any::<u64>(),
            input in 1usize..12,
            hidden in proptest::collection::vec(1usize..10, 0..3),
            output in 1usize..6,
            meta_val in proptest::num::f64::ANY,
        ) {
            let ck = Checkpoint {
                role: "test".into(),
                meta: vec![("k".into(), meta_val)],
                network: Network::mlp(input, &hidden, output, seed),
            };
            let bytes = ck.to_bytes();
            let back = Checkpoint::from_bytes(&bytes).unwrap();
            prop_assert_eq!(back.to_bytes(), bytes);
            prop_assert_eq!(back.network, ck.network);
        }
    }

    #[test]
    fn header_fields_are_readable() {
        let ck = Checkpoint {
            role: "denoiser".into(),
            meta: vec![("schedule.steps".into(), 100.0)],
            network: Network::mlp(3, &[4], 2, 9),
        };
        let h = read_header_bytes(&ck.to_bytes()).unwrap();
        assert_eq!(h.role, "denoiser");
        assert_eq!(h.seed, 9);
        assert_eq!(h.layers, vec![(3, 4, Activation::Relu), (4, 2, Activation::Identity)]);
        assert_eq!(ck.meta_value("schedule.steps"), Some(100.0));
    }

    #[test]
    fn corrupted_inputs_are_rejected() {
        let ck = Checkpoint {
            role: "x".into(),
            meta: vec![],
            network: Network::mlp(2, &[], 1, 0),
        };
        let bytes = ck.to_bytes();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(Checkpoint::from_bytes(&bad).is_err());
        let mut long = bytes;
        long.push(0);
        assert!(Checkpoint::from_bytes(&long).is_err());
    }
}
