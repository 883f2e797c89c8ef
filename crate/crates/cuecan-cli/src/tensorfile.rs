//! The CUET0001 tensor container: 8-byte magic, a u32-LE length-prefixed
//! ASCII header `dtype=f64;dims=B,H,W,C`, then the payload little-endian in
//! row-major (B,H,W,C) order. f64 is written; f64 and f32 payloads are read.

use std::path::Path;

use cuecan_core::tensor::{Dims4, Tensor4};

use crate::errors::{parse_err, CliResult};

pub const MAGIC: &[u8; 8] = b"CUET0001";

pub fn encode_tensor(out: &mut Vec<u8>, t: &Tensor4) {
    let d = t.dims();
    out.extend_from_slice(MAGIC);
    let header = format!("dtype=f64;dims={},{},{},{}", d.b, d.h, d.w, d.c);
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(header.as_bytes());
    for v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn take<'a>(buf: &'a [u8], at: &mut usize, n: usize, path: &Path, what: &str) -> CliResult<&'a [u8]> {
    let end = at
        .checked_add(n)
        .filter(|&e| e <= buf.len())
        .ok_or_else(|| parse_err(path, *at, format!("truncated {what}")))?;
    let s = &buf[*at..end];
    *at = end;
    Ok(s)
}

/// Parse one tensor starting at `*at`, advancing it past the payload.
pub fn parse_tensor(buf: &[u8], at: &mut usize, path: &Path) -> CliResult<Tensor4> {
    let magic_at = *at;
    if take(buf, at, MAGIC.len(), path, "magic")? != MAGIC {
        return Err(parse_err(path, magic_at, "bad tensor magic, wanted CUET0001"));
    }
    let len_at = *at;
    let len = u32::from_le_bytes(take(buf, at, 4, path, "header length")?.try_into().unwrap());
    if len > 4096 {
        return Err(parse_err(path, len_at, format!("implausible header length {len}")));
    }
    let header_at = *at;
    let header = std::str::from_utf8(take(buf, at, len as usize, path, "header")?)
        .map_err(|_| parse_err(path, header_at, "header is not ASCII"))?;

    let mut dtype: Option<&str> = None;
    let mut dims: Option<[usize; 4]> = None;
    for field in header.split(';') {
        let (key, value) = field
            .split_once('=')
            .ok_or_else(|| parse_err(path, header_at, format!("bad header field '{field}'")))?;
        match key {
            "dtype" => dtype = Some(value),
            "dims" => {
                let parts: Vec<&str> = value.split(',').collect();
                if parts.len() != 4 {
                    return Err(parse_err(path, header_at, "dims wants 4 comma-separated sizes"));
                }
                let mut d = [0usize; 4];
                for (slot, p) in d.iter_mut().zip(&parts) {
                    *slot = p.parse().map_err(|_| {
                        parse_err(path, header_at, format!("bad dimension '{p}'"))
                    })?;
                }
                dims = Some(d);
            }
            other => return Err(parse_err(path, header_at, format!("unknown header key '{other}'"))),
        }
    }
    let dtype = dtype.ok_or_else(|| parse_err(path, header_at, "header missing dtype"))?;
    let [b, h, w, c] = dims.ok_or_else(|| parse_err(path, header_at, "header missing dims"))?;
    let numel = b
        .checked_mul(h)
        .and_then(|n| n.checked_mul(w))
        .and_then(|n| n.checked_mul(c))
        .ok_or_else(|| parse_err(path, header_at, "dims overflow"))?;
    if numel == 0 {
        return Err(parse_err(path, header_at, "zero-sized tensor"));
    }

    let elem = match dtype {
        "f64" => 8,
        "f32" => 4,
        other => return Err(parse_err(path, header_at, format!("unsupported dtype '{other}'"))),
    };
    let payload = take(buf, at, numel * elem, path, "tensor payload")?;
    let data: Vec<f64> = match dtype {
        "f64" => payload
            .chunks_exact(8)
            .map(|ch| f64::from_le_bytes(ch.try_into().unwrap()))
            .collect(),
        _ => payload
            .chunks_exact(4)
            .map(|ch| f32::from_le_bytes(ch.try_into().unwrap()) as f64)
            .collect(),
    };
    Tensor4::from_vec(Dims4::new(b, h, w, c), data)
        .map_err(|e| parse_err(path, header_at, e.to_string()))
}

pub fn write_tensor_file(path: &Path, t: &Tensor4) -> CliResult<()> {
    let mut out = Vec::new();
    encode_tensor(&mut out, t);
    std::fs::write(path, out).map_err(|e| crate::errors::io_err(path, e))
}

pub fn read_tensor_file(path: &Path) -> CliResult<Tensor4> {
    let buf = std::fs::read(path).map_err(|e| crate::errors::io_err(path, e))?;
    let mut at = 0;
    let t = parse_tensor(&buf, &mut at, path)?;
    if at != buf.len() {
        return Err(parse_err(path, at, "trailing bytes after tensor payload"));
    }
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::errors::CliError;

    fn tmp(name: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join("cuecan-tensorfile-tests");
        std::fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    #[test]
    fn roundtrip_preserves_every_bit() {
        let t = Tensor4::from_fn(Dims4::new(2, 3, 4, 5), |i| (i as f64).sin() * 1e3);
        let p = tmp("rt.cuet");
        write_tensor_file(&p, &t).unwrap();
        let back = read_tensor_file(&p).unwrap();
        assert_eq!(back.dims(), t.dims());
        assert_eq!(back.data(), t.data());
    }

    #[test]
    fn header_layout_is_as_documented() {
        let t = Tensor4::zeros(Dims4::new(1, 2, 3, 4));
        let mut buf = Vec::new();
        encode_tensor(&mut buf, &t);
        assert_eq!(&buf[..8], b"CUET0001");
        let len = u32::from_le_bytes(buf[8..12].try_into().unwrap()) as usize;
        assert_eq!(&buf[12..12 + len], b"dtype=f64;dims=1,2,3,4");
        assert_eq!(buf.len(), 12 + len + 24 * 8);
    }

    #[test]
    fn f32_payloads_are_read() {
        let vals: [f32; 4] = [1.5, -2.25, 0.0, 3.75];
        let mut buf = Vec::new();
        buf.extend_from_slice(MAGIC);
        let header = b"dtype=f32;dims=1,1,2,2";
        buf.extend_from_slice(&(header.len() as u32).to_le_bytes());
        buf.extend_from_slice(header);
        for v in vals {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        let p = tmp("f32.cuet");
        std::fs::write(&p, &buf).unwrap();
        let t = read_tensor_file(&p).unwrap();
        assert_eq!(t.data(), &[1.5, -2.25, 0.0, 3.75]);
    }

    #[test]
    fn corrupt_files_report_the_offset() {
        let p = tmp("bad-magic.cuet");
        std::fs::write(&p, b"CUET9999............").unwrap();
        match read_tensor_file(&p) {
            Err(CliError::Data { offset: Some(0), .. }) => {}
            other => panic!("wanted magic error at offset 0, got {other:?}"),
        }

        let t = Tensor4::zeros(Dims4::new(1, 1, 1, 3));
        let mut buf = Vec::new();
        encode_tensor(&mut buf, &t);
        buf.truncate(buf.len() - 5);
        let p = tmp("short.cuet");
        std::fs::write(&p, &buf).unwrap();
        match read_tensor_file(&p) {
            Err(CliError::Data { offset: Some(o), msg, .. }) => {
                assert_eq!(o, 12 + 22, "payload starts after magic+len+header");
                assert!(msg.contains("payload"), "{msg}");
            }
            other => panic!("wanted truncation error, got {other:?}"),
        }

        let p = tmp("bad-dtype.cuet");
        let mut buf = Vec::new();
        buf.extend_from_slice(MAGIC);
        let header = b"dtype=f16;dims=1,1,1,1";
        buf.extend_from_slice(&(header.len() as u32).to_le_bytes());
        buf.extend_from_slice(header);
        buf.extend_from_slice(&[0; 2]);
        std::fs::write(&p, &buf).unwrap();
        assert!(matches!(read_tensor_file(&p), Err(CliError::Data { .. })));
    }
}
