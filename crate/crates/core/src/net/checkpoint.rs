//! Checkpoint layout (little-endian):
//!
//! ```text
//! magic "RLNET\0\0\0" | version u32 | config block | config hash (8 bytes)
//! | tensor count u64 | per tensor: length u64, f32 × length
//! ```
//!
//! Tensors appear in declared layer order, weights before biases.

use std::path::Path;

use sha2::{Digest, Sha256};

use super::{ConvLayer, LayerParams, NetworkConfig, NetworkParams};
use crate::codec::{Decoder, Encoder};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"RLNET\0\0\0";
const VERSION: u32 = 1;

fn encode_config(c: &NetworkConfig) -> Vec<u8> {
    let mut e = Encoder::default();
    e.len(c.input_rings);
    e.len(c.input_buckets);
    e.len(c.conv.len());
    for l in &c.conv {
        for v in [l.kernel_h, l.kernel_w, l.channels, l.pool] {
            e.len(v);
        }
    }
    e.len(c.hidden.len());
    for &h in &c.hidden {
        e.len(h);
    }
    e.len(c.output_dim);
    e.f64(c.margin);
    e.u64(c.seed);
    e.buf
}

fn decode_config(d: &mut Decoder) -> Result<NetworkConfig> {
    let input_rings = d.u64()? as usize;
    let input_buckets = d.u64()? as usize;
    let nconv = d.len(32)?;
    let mut conv = Vec::with_capacity(nconv);
    for _ in 0..nconv {
        conv.push(ConvLayer {
            kernel_h: d.u64()? as usize,
            kernel_w: d.u64()? as usize,
            channels: d.u64()? as usize,
            pool: d.u64()? as usize,
        });
    }
    let nhidden = d.len(8)?;
    let hidden = (0..nhidden)
        .map(|_| d.u64().map(|v| v as usize))
        .collect::<Result<Vec<_>>>()?;
    let config = NetworkConfig {
        input_rings,
        input_buckets,
        conv,
        hidden,
        output_dim: d.u64()? as usize,
        margin: d.f64()?,
        seed: d.u64()?,
    };
    config.validate()?;
    Ok(config)
}

/// First 8 bytes of the SHA-256 of the encoded config.
pub fn config_hash(config: &NetworkConfig) -> [u8; 8] {
    let digest = Sha256::digest(encode_config(config));
    digest[..8].try_into().expect("digest is 32 bytes")
}

pub fn encode_checkpoint(params: &NetworkParams) -> Vec<u8> {
    let mut e = Encoder::default();
    e.bytes(MAGIC);
    e.u32(VERSION);
    e.bytes(&encode_config(params.config()));
    e.bytes(&config_hash(params.config()));
    e.len(params.layers.len() * 2);
    for layer in &params.layers {
        for tensor in [&layer.weights, &layer.bias] {
            e.len(tensor.len());
            for &v in tensor {
                e.f32(v as f32);
            }
        }
    }
    e.buf
}

/// Decodes a checkpoint. With `expected` set, the stored config hash must
/// match the hash of `expected`.
pub fn decode_checkpoint(bytes: &[u8], expected: Option<&NetworkConfig>) -> Result<NetworkParams> {
    let mut d = Decoder::new(bytes, "checkpoint");
    d.magic(MAGIC)?;
    let version = d.u32()?;
    if version != VERSION {
        return Err(Error::Version(version));
    }
    let config = decode_config(&mut d)?;
    let stored: [u8; 8] = d.take(8)?.try_into().expect("8 bytes");
    if stored != config_hash(&config) {
        return Err(Error::ConfigHash);
    }
    if let Some(exp) = expected {
        if config_hash(exp) != stored {
            return Err(Error::ConfigHash);
        }
    }
    let ntensors = d.len(8)?;
    if ntensors % 2 != 0 {
        return Err(Error::Format("checkpoint: odd tensor count".into()));
    }
    let mut layers = Vec::with_capacity(ntensors / 2);
    for _ in 0..ntensors / 2 {
        let mut read = || -> Result<Vec<f64>> {
            let n = d.len(4)?;
            (0..n).map(|_| d.f32().map(f64::from)).collect()
        };
        let weights = read()?;
        let bias = read()?;
        layers.push(LayerParams { weights, bias });
    }
    d.finish()?;
    let params = NetworkParams::from_layers(config, layers)?;
    if !params.is_finite() {
        return Err(Error::NonFinite {
            layer: "checkpoint".into(),
        });
    }
    Ok(params)
}

pub fn save_checkpoint(params: &NetworkParams, path: &Path) -> Result<()> {
    std::fs::write(path, encode_checkpoint(params)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path, expected: Option<&NetworkConfig>) -> Result<NetworkParams> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes, expected)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> NetworkParams {
        let mut c = NetworkConfig::for_input(4, 16);
        c.hidden = vec![5];
        c.output_dim = 3;
        NetworkParams::init(&c).unwrap()
    }

    #[test]
    fn round_trip_narrows_to_f32() {
        let p = params();
        let bytes = encode_checkpoint(&p);
        let back = decode_checkpoint(&bytes, Some(p.config())).unwrap();
        assert_eq!(back.config(), p.config());
        for (a, b) in p.values().zip(back.values()) {
            assert_eq!(*a as f32 as f64, *b);
        }
        // f32-exact params survive bit for bit
        assert_eq!(encode_checkpoint(&back), bytes);
    }

    #[test]
    fn rejects_mismatched_config() {
        let p = params();
        let mut other = p.config().clone();
        other.margin = 8.0;
        assert!(matches!(
            decode_checkpoint(&encode_checkpoint(&p), Some(&other)),
            Err(Error::ConfigHash)
        ));
    }

    #[test]
    fn rejects_corruption() {
        let bytes = encode_checkpoint(&params());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode_checkpoint(&bad, None), Err(Error::BadMagic { .. })));
        assert!(decode_checkpoint(&bytes[..bytes.len() - 3], None).is_err());
        let mut bad = bytes.clone();
        bad[8] = 9;
        assert!(matches!(decode_checkpoint(&bad, None), Err(Error::Version(9))));
        // flip a byte in the margin field
        let mut bad = bytes;
        bad[12 + 8 * 8] ^= 1;
        assert!(decode_checkpoint(&bad, None).is_err());
    }
}
