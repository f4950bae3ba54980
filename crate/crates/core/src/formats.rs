//! File formats: bitstring samples (text and binary), amplitude CSV and probability NDJSON.

use serde::{Deserialize, Serialize};
use std::io::{BufRead, Read, Write};

use crate::error::{Error, Result};
use crate::C64;

pub const SAMPLES_SCHEMA_VERSION: u32 = 1;
pub const AMPLITUDES_SCHEMA_VERSION: u32 = 1;
pub const PROBS_SCHEMA_VERSION: u32 = 1;
pub const ESTIMATE_SCHEMA_VERSION: u32 = 1;
pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// (format name, version) for every stable file format.
pub fn schema_versions() -> Vec<(&'static str, u32)> {
    vec![
        ("circuit", crate::circuit::CIRCUIT_SCHEMA_VERSION),
        ("samples", SAMPLES_SCHEMA_VERSION),
        ("amplitudes", AMPLITUDES_SCHEMA_VERSION),
        ("probs", PROBS_SCHEMA_VERSION),
        ("estimate", ESTIMATE_SCHEMA_VERSION),
        ("report", REPORT_SCHEMA_VERSION),
    ]
}

/// `n` characters, most significant (highest qubit) first.
pub fn format_bitstring(x: u64, n: usize) -> String {
    (0..n)
        .rev()
        .map(|k| if (x >> k) & 1 == 1 { '1' } else { '0' })
        .collect()
}

pub fn parse_bitstring(s: &str) -> Result<u64> {
    let s = s.trim();
    if s.is_empty() || s.len() > 64 {
        return Err(Error::Format(format!("bad bitstring length in `{s}`")));
    }
    s.bytes().try_fold(0u64, |acc, b| match b {
        b'0' => Ok(acc << 1),
        b'1' => Ok((acc << 1) | 1),
        _ => Err(Error::Format(format!("bad bitstring `{s}`"))),
    })
}

pub fn write_bitstrings_text<W: Write>(mut w: W, bits: &[u64], n: usize) -> Result<()> {
    for &x in bits {
        writeln!(w, "{}", format_bitstring(x, n))?;
    }
    Ok(())
}

/// Reads newline-delimited bitstrings; returns (qubit count, values). Blank lines are skipped.
pub fn read_bitstrings_text<R: BufRead>(r: R) -> Result<(usize, Vec<u64>)> {
    let mut n = None;
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        match n {
            None => n = Some(t.len()),
            Some(k) if k != t.len() => {
                return Err(Error::Format(format!("bitstring `{t}` has length {} not {k}", t.len())))
            }
            _ => {}
        }
        out.push(parse_bitstring(t)?);
    }
    Ok((n.unwrap_or(0), out))
}

pub fn write_bitstrings_binary<W: Write>(mut w: W, bits: &[u64]) -> Result<()> {
    for &x in bits {
        w.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_bitstrings_binary<R: Read>(mut r: R) -> Result<Vec<u64>> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    if buf.len() % 8 != 0 {
        return Err(Error::Format("binary sample file length is not a multiple of 8".into()));
    }
    Ok(buf
        .chunks_exact(8)
        .map(|c| u64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect())
}

/// CSV with header `bitstring,re,im`.
pub fn write_amplitudes_csv<W: Write>(mut w: W, bits: &[u64], amps: &[C64], n: usize) -> Result<()> {
    if bits.len() != amps.len() {
        return Err(Error::InvalidArgument("bitstring and amplitude counts differ".into()));
    }
    writeln!(w, "bitstring,re,im")?;
    for (&x, a) in bits.iter().zip(amps) {
        writeln!(w, "{},{:e},{:e}", format_bitstring(x, n), a.re, a.im)?;
    }
    Ok(())
}

pub fn read_amplitudes_csv<R: BufRead>(r: R) -> Result<Vec<(u64, C64)>> {
    let mut lines = r.lines();
    let header = lines.next().transpose()?.unwrap_or_default();
    if header.trim() != "bitstring,re,im" {
        return Err(Error::Format("missing `bitstring,re,im` header".into()));
    }
    let mut out = Vec::new();
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 3 {
            return Err(Error::Format(format!("bad amplitude row `{line}`")));
        }
        let num = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| Error::Format(format!("bad number `{s}`: {e}")))
        };
        out.push((parse_bitstring(f[0])?, C64::new(num(f[1])?, num(f[2])?)));
    }
    Ok(out)
}

/// One measured bitstring with its simulated ideal probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbRow {
    pub circuit_id: String,
    pub bitstring: String,
    pub p_s: f64,
}

pub fn write_prob_rows<W: Write>(mut w: W, rows: &[ProbRow]) -> Result<()> {
    for r in rows {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Streams NDJSON rows without holding the whole file.
pub fn prob_rows<R: BufRead>(r: R) -> impl Iterator<Item = Result<ProbRow>> {
    r.lines().filter_map(|line| match line {
        Err(e) => Some(Err(e.into())),
        Ok(l) if l.trim().is_empty() => None,
        Ok(l) => Some(serde_json::from_str(&l).map_err(Error::from)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn bitstring_msb_first() {
        assert_eq!(format_bitstring(0b01, 2), "01");
        assert_eq!(format_bitstring(1, 4), "0001");
        assert_eq!(parse_bitstring("0110").unwrap(), 6);
        assert!(parse_bitstring("01a").is_err());
        assert!(parse_bitstring("").is_err());
    }

    #[test]
    fn text_round_trip() {
        let bits = vec![0, 5, 7, 2];
        let mut buf = Vec::new();
        write_bitstrings_text(&mut buf, &bits, 3).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), "000\n101\n111\n010\n");
        assert_eq!(read_bitstrings_text(&buf[..]).unwrap(), (3, bits));
        assert!(read_bitstrings_text(&b"01\n011\n"[..]).is_err());
    }

    #[test]
    fn amplitude_csv_round_trip() {
        let amps = vec![C64::new(0.5, -0.25), C64::new(1e-9, 3.0)];
        let mut buf = Vec::new();
        write_amplitudes_csv(&mut buf, &[1, 2], &amps, 2).unwrap();
        let back = read_amplitudes_csv(&buf[..]).unwrap();
        assert_eq!(back, vec![(1, amps[0]), (2, amps[1])]);
        assert!(read_amplitudes_csv(&b"x,y\n"[..]).is_err());
    }

    #[test]
    fn ndjson_rows() {
        let rows = vec![ProbRow {
            circuit_id: "c0".into(),
            bitstring: "0101".into(),
            p_s: 0.125,
        }];
        let mut buf = Vec::new();
        write_prob_rows(&mut buf, &rows).unwrap();
        assert_eq!(
            String::from_utf8(buf.clone()).unwrap(),
            "{\"circuit_id\":\"c0\",\"bitstring\":\"0101\",\"p_s\":0.125}\n"
        );
        let back: Vec<ProbRow> = prob_rows(&buf[..]).collect::<Result<_>>().unwrap();
        assert_eq!(back, rows);
    }

    proptest! {
        #[test]
        fn binary_round_trip(bits in proptest::collection::vec(any::<u64>(), 0..50)) {
            let mut buf = Vec::new();
            write_bitstrings_binary(&mut buf, &bits).unwrap();
            prop_assert_eq!(read_bitstrings_binary(&buf[..]).unwrap(), bits);
        }

        #[test]
        fn text_bitstring_round_trip(x in any::<u64>(), n in 1usize..=64) {
            let masked = if n == 64 { x } else { x & ((1u64 << n) - 1) };
            prop_assert_eq!(parse_bitstring(&format_bitstring(masked, n)).unwrap(), masked);
        }
    }
}
