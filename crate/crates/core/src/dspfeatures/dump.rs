//! Spectrogram dump: `b"TMEL"`, little-endian `u32` header length, a JSON
//! header, then `frames × n_mels` little-endian `f32` values.

use serde::{Deserialize, Serialize};

use super::mel::{FeatureParams, MelSpectrogram};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"TMEL";
const VERSION: u32 = 1;
const MAX_HEADER: usize = 1 << 16;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DumpHeader {
    version: u32,
    frames: usize,
    n_mels: usize,
    params: FeatureParams,
}

pub fn encode_dump(mel: &MelSpectrogram) -> Result<Vec<u8>> {
    let header = serde_json::to_vec(&DumpHeader {
        version: VERSION,
        frames: mel.frames,
        n_mels: mel.n_mels,
        params: mel.params,
    })?;
    let mut out = Vec::with_capacity(8 + header.len() + 4 * mel.data.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    for &v in &mel.data {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    Ok(out)
}

pub fn decode_dump(bytes: &[u8]) -> Result<MelSpectrogram> {
    if bytes.len() < 8 || &bytes[..4] != MAGIC {
        return Err(Error::format("not a spectrogram dump"));
    }
    let hlen = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    if hlen > MAX_HEADER || bytes.len() < 8 + hlen {
        return Err(Error::format("truncated dump header"));
    }
    let header: DumpHeader = serde_json::from_slice(&bytes[8..8 + hlen])?;
    if header.version != VERSION {
        return Err(Error::format(format!("unsupported dump version {}", header.version)));
    }
    if header.n_mels != header.params.n_mels {
        return Err(Error::format("n_mels disagrees with params"));
    }
    let body = &bytes[8 + hlen..];
    let expected = header
        .frames
        .checked_mul(header.n_mels)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::format("dump shape overflows"))?;
    if body.len() != expected {
        return Err(Error::format(format!(
            "dump body has {} bytes, shape needs {expected}",
            body.len()
        )));
    }
    let data: Vec<f64> = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::format("non-finite value in dump body"));
    }
    Ok(MelSpectrogram {
        frames: header.frames,
        n_mels: header.n_mels,
        data,
        params: header.params,
    })
}
