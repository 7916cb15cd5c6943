//! Single-file container: one line of JSON header followed by a raw
//! little-endian float64 payload.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

pub(crate) fn write<H: Serialize>(path: &Path, header: &H, payload: &[f64]) -> io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer(&mut w, header)?;
    w.write_all(b"\n")?;
    for v in payload {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()
}

pub(crate) fn read<H: DeserializeOwned>(path: &Path) -> io::Result<(H, Vec<f64>)> {
    let mut r = BufReader::new(File::open(path)?);
    let mut line = String::new();
    r.read_line(&mut line)?;
    let header = serde_json::from_str(line.trim_end())?;
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() % 8 != 0 {
        return Err(io::Error::new(
            io::ErrorKind::InvalidData,
            "payload length is not a multiple of 8 bytes",
        ));
    }
    let payload = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    Ok((header, payload))
}
