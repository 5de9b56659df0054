//! Self-describing binary container shared by datasets and checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic[4] | version u32 | header_len u64 | header (UTF-8 JSON)
//! | payload_len u64 | payload (f64 LE × payload_len) | sha256[32]
//! ```
//!
//! The trailing digest covers every preceding byte.

use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

pub fn encode(magic: &[u8; 4], version: u32, header: &serde_json::Value, payload: &[f64]) -> Vec<u8> {
    let header = serde_json::to_vec(header).expect("JSON values always serialize");
    let mut out = Vec::with_capacity(4 + 4 + 8 + header.len() + 8 + 8 * payload.len() + 32);
    out.extend_from_slice(magic);
    out.extend_from_slice(&version.to_le_bytes());
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    for v in payload {
        out.extend_from_slice(&v.to_le_bytes());
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Format(format!("truncated while reading {what}")))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }
}

pub fn decode(bytes: &[u8], magic: &[u8; 4], version: u32) -> Result<(serde_json::Value, Vec<f64>)> {
    if bytes.len() < 32 {
        return Err(Error::Format("file too short".into()));
    }
    let (body, digest) = bytes.split_at(bytes.len() - 32);
    let mut r = Reader { bytes: body, pos: 0 };
    let found = r.take(4, "magic")?;
    if found != magic {
        return Err(Error::Format(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(found),
            String::from_utf8_lossy(magic)
        )));
    }
    let found_version = u32::from_le_bytes(r.take(4, "version")?.try_into().expect("4 bytes"));
    if found_version != version {
        return Err(Error::Format(format!(
            "unsupported version {found_version}, expected {version}"
        )));
    }
    let header_len = r.u64("header length")? as usize;
    let header_bytes = r.take(header_len, "header")?;
    let payload_len = r.u64("payload length")? as usize;
    let payload_bytes = r.take(
        payload_len
            .checked_mul(8)
            .ok_or_else(|| Error::Format("payload length overflow".into()))?,
        "payload",
    )?;
    if r.pos != body.len() {
        return Err(Error::Format("trailing bytes before checksum".into()));
    }
    if Sha256::digest(body).as_slice() != digest {
        return Err(Error::Format("checksum mismatch".into()));
    }
    let header = serde_json::from_slice(header_bytes)
        .map_err(|e| Error::Format(format!("header is not valid JSON: {e}")))?;
    let payload = payload_bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Ok((header, payload))
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn round_trip() {
        let h = json!({"a": 1, "b": [1, 2]});
        let p = [1.0, -0.0, f64::MIN_POSITIVE, 1e300];
        let bytes = encode(b"TEST", 3, &h, &p);
        let (h2, p2) = decode(&bytes, b"TEST", 3).unwrap();
        assert_eq!(h, h2);
        assert_eq!(p.map(f64::to_bits).to_vec(), p2.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }

    #[test]
    fn every_truncation_is_a_format_error() {
        let bytes = encode(b"TEST", 1, &json!({"k": "v"}), &[1.0, 2.0]);
        for n in 0..bytes.len() {
            assert!(matches!(decode(&bytes[..n], b"TEST", 1), Err(Error::Format(_))), "n = {n}");
        }
    }

    #[test]
    fn corruption_and_version_are_detected() {
        let mut bytes = encode(b"TEST", 1, &json!(null), &[1.0]);
        assert!(matches!(decode(&bytes, b"TEST", 2), Err(Error::Format(_))));
        assert!(matches!(decode(&bytes, b"XXXX", 1), Err(Error::Format(_))));
        let n = bytes.len();
        bytes[n - 40] ^= 1;
        assert!(matches!(decode(&bytes, b"TEST", 1), Err(Error::Format(_))));
    }

    #[test]
    fn sha_of_empty() {
        assert_eq!(
            sha256_hex(b""),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
    }
}
