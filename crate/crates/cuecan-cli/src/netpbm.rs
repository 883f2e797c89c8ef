//! Binary PPM (P6) and PGM (P5) with maxval 255. Parse failures report the
//! file and the byte offset where the format broke.

use std::fs;
use std::path::Path;

use cuecan_core::tensor::{Dims4, Tensor4};

use crate::errors::{data_err, io_err, parse_err, CliResult};

struct Cursor<'a> {
    buf: &'a [u8],
    at: usize,
    path: &'a Path,
}

impl<'a> Cursor<'a> {
    fn bump(&mut self) -> CliResult<u8> {
        let b = *self
            .buf
            .get(self.at)
            .ok_or_else(|| parse_err(self.path, self.at, "unexpected end of file"))?;
        self.at += 1;
        Ok(b)
    }

    /// Skip whitespace and `#` comments between header tokens.
    fn skip_separators(&mut self) -> CliResult<()> {
        loop {
            match self.buf.get(self.at) {
                Some(b) if b.is_ascii_whitespace() => self.at += 1,
                Some(b'#') => {
                    while !matches!(self.buf.get(self.at), None | Some(b'\n')) {
                        self.at += 1;
                    }
                }
                _ => return Ok(()),
            }
        }
    }

    fn number(&mut self, what: &str) -> CliResult<usize> {
        self.skip_separators()?;
        let start = self.at;
        while self.buf.get(self.at).is_some_and(u8::is_ascii_digit) {
            self.at += 1;
        }
        if self.at == start {
            return Err(parse_err(self.path, start, format!("expected {what}")));
        }
        std::str::from_utf8(&self.buf[start..self.at])
            .expect("digits are utf8")
            .parse()
            .map_err(|_| parse_err(self.path, start, format!("{what} out of range")))
    }
}

fn parse(buf: &[u8], path: &Path, magic: &[u8; 2]) -> CliResult<(usize, usize, Vec<u8>)> {
    let mut cur = Cursor { buf, at: 0, path };
    for want in magic {
        let got = cur.bump()?;
        if got != *want {
            return Err(parse_err(path, cur.at - 1, format!("bad magic, wanted {magic:?}")));
        }
    }
    let w = cur.number("width")?;
    let h = cur.number("height")?;
    let maxval = cur.number("maxval")?;
    if maxval != 255 {
        return Err(parse_err(path, cur.at, format!("maxval must be 255, got {maxval}")));
    }
    let sep = cur.bump()?;
    if !sep.is_ascii_whitespace() {
        return Err(parse_err(path, cur.at - 1, "expected single whitespace after maxval"));
    }
    let channels = if magic == b"P6" { 3 } else { 1 };
    let want = w
        .checked_mul(h)
        .and_then(|n| n.checked_mul(channels))
        .ok_or_else(|| parse_err(path, cur.at, "image dimensions overflow"))?;
    let have = buf.len() - cur.at;
    if have != want {
        return Err(parse_err(
            path,
            cur.at,
            format!("payload is {have} bytes, dimensions require {want}"),
        ));
    }
    if w == 0 || h == 0 {
        return Err(parse_err(path, 2, "zero-sized image"));
    }
    Ok((w, h, buf[cur.at..].to_vec()))
}

fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Write a (1,H,W,3) tensor with values in [0,1] as binary PPM.
pub fn write_ppm(path: &Path, t: &Tensor4) -> CliResult<()> {
    let d = t.dims();
    if d.b != 1 || d.c != 3 {
        return Err(data_err(path, format!("PPM wants a (1,H,W,3) tensor, got {d:?}")));
    }
    let mut out = format!("P6\n{} {}\n255\n", d.w, d.h).into_bytes();
    out.extend(t.data().iter().map(|&v| quantize(v)));
    fs::write(path, out).map_err(|e| io_err(path, e))
}

/// Read a binary PPM into a (1,H,W,3) tensor with values k/255.
pub fn read_ppm(path: &Path) -> CliResult<Tensor4> {
    let buf = fs::read(path).map_err(|e| io_err(path, e))?;
    let (w, h, bytes) = parse(&buf, path, b"P6")?;
    Ok(Tensor4::from_fn(Dims4::new(1, h, w, 3), |i| bytes[i] as f64 / 255.0))
}

/// Write raw grayscale bytes (row-major) as binary PGM.
pub fn write_pgm(path: &Path, bytes: &[u8], h: usize, w: usize) -> CliResult<()> {
    if bytes.len() != h * w {
        return Err(data_err(path, format!("PGM payload {} != {h}x{w}", bytes.len())));
    }
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    out.extend_from_slice(bytes);
    fs::write(path, out).map_err(|e| io_err(path, e))
}

/// Read a binary PGM; returns (height, width, bytes).
pub fn read_pgm(path: &Path) -> CliResult<(usize, usize, Vec<u8>)> {
    let buf = fs::read(path).map_err(|e| io_err(path, e))?;
    let (w, h, bytes) = parse(&buf, path, b"P5")?;
    Ok((h, w, bytes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::errors::CliError;
    use std::path::PathBuf;

    fn tmp(name: &str) -> PathBuf {
        let dir = std::env::temp_dir().join("cuecan-netpbm-tests");
        fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    #[test]
    fn ppm_roundtrip_is_exact_on_quantized_values() {
        let t = Tensor4::from_fn(Dims4::new(1, 5, 4, 3), |i| (i % 256) as f64 / 255.0);
        let p = tmp("rt.ppm");
        write_ppm(&p, &t).unwrap();
        let back = read_ppm(&p).unwrap();
        assert_eq!(back.dims(), t.dims());
        assert_eq!(back.data(), t.data());
        // a second write of the re-read image is byte-identical
        let p2 = tmp("rt2.ppm");
        write_ppm(&p2, &back).unwrap();
        assert_eq!(fs::read(&p).unwrap(), fs::read(&p2).unwrap());
    }

    #[test]
    fn header_matches_the_declared_layout() {
        let t = Tensor4::zeros(Dims4::new(1, 64, 64, 3));
        let p = tmp("hdr.ppm");
        write_ppm(&p, &t).unwrap();
        let bytes = fs::read(&p).unwrap();
        assert!(bytes.starts_with(b"P6\n64 64\n255\n"));
        assert_eq!(bytes.len(), 13 + 64 * 64 * 3);
    }

    #[test]
    fn pgm_roundtrip_and_comment_handling() {
        let p = tmp("mask.pgm");
        write_pgm(&p, &[0, 255, 7, 128, 9, 1], 2, 3).unwrap();
        let (h, w, bytes) = read_pgm(&p).unwrap();
        assert_eq!((h, w), (2, 3));
        assert_eq!(bytes, vec![0, 255, 7, 128, 9, 1]);

        let c = tmp("comment.pgm");
        fs::write(&c, b"P5 # a comment\n2 1\n# another\n255\n\x01\x02").unwrap();
        let (h, w, bytes) = read_pgm(&c).unwrap();
        assert_eq!((h, w, bytes), (1, 2, vec![1, 2]));
    }

    #[test]
    fn malformed_files_name_the_byte_offset() {
        let p = tmp("bad-magic.ppm");
        fs::write(&p, b"P5\n2 2\n255\n----").unwrap();
        match read_ppm(&p) {
            Err(CliError::Data { offset: Some(1), .. }) => {}
            other => panic!("wanted offset-1 data error, got {other:?}"),
        }

        let p = tmp("short.pgm");
        fs::write(&p, b"P5\n3 3\n255\n\x00\x00").unwrap();
        match read_pgm(&p) {
            Err(CliError::Data { offset: Some(11), msg, .. }) => {
                assert!(msg.contains("payload is 2 bytes"), "{msg}");
            }
            other => panic!("wanted payload error at offset 11, got {other:?}"),
        }

        let p = tmp("bad-maxval.pgm");
        fs::write(&p, b"P5\n2 2\n65535\n\x00\x00\x00\x00").unwrap();
        assert!(matches!(read_pgm(&p), Err(CliError::Data { .. })));

        let p = tmp("trailing.pgm");
        fs::write(&p, b"P5\n1 1\n255\n\x00\x00").unwrap();
        assert!(read_pgm(&p).is_err(), "trailing bytes must be rejected");
    }
}
