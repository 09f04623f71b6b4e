use std::fmt;
use std::io::{BufRead, Write};

use super::{GroupingError, Result};

pub const DEFAULT_FINGERPRINT_LENGTH: usize = 881;

/// Fixed-length binary structural fingerprint.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Fingerprint {
    words: Vec<u64>,
    len: usize,
}

impl Fingerprint {
    pub fn zeros(len: usize) -> Self {
        Fingerprint {
            words: vec![0; len.div_ceil(64)],
            len,
        }
    }

    pub fn from_bits(bits: &[bool]) -> Self {
        let mut fp = Self::zeros(bits.len());
        for (i, &b) in bits.iter().enumerate() {
            fp.set(i, b);
        }
        fp
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len);
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn set(&mut self, i: usize, value: bool) {
        assert!(i < self.len);
        let mask = 1u64 << (i % 64);
        if value {
            self.words[i / 64] |= mask;
        } else {
            self.words[i / 64] &= !mask;
        }
    }

    pub fn count_ones(&self) -> u32 {
        self.words.iter().map(|w| w.count_ones()).sum()
    }

    /// Jaccard (Tanimoto) distance `1 - |a∧b| / |a∨b|`; two empty prints are identical.
    pub fn tanimoto_distance(&self, other: &Fingerprint) -> f64 {
        debug_assert_eq!(self.len, other.len);
        let (mut and, mut or) = (0u32, 0u32);
        for (a, b) in self.words.iter().zip(&other.words) {
            and += (a & b).count_ones();
            or += (a | b).count_ones();
        }
        if or == 0 {
            0.0
        } else {
            1.0 - and as f64 / or as f64
        }
    }

    pub fn parse(bits: &str, expected_len: usize) -> Result<Self> {
        if bits.len() != expected_len {
            return Err(GroupingError::Fingerprint(format!(
                "expected {expected_len} bits, found {}",
                bits.len()
            )));
        }
        let mut fp = Self::zeros(expected_len);
        for (i, c) in bits.bytes().enumerate() {
            match c {
                b'0' => {}
                b'1' => fp.set(i, true),
                other => {
                    return Err(GroupingError::Fingerprint(format!(
                        "invalid bit character {:?}",
                        other as char
                    )))
                }
            }
        }
        Ok(fp)
    }
}

impl fmt::Display for Fingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.len {
            f.write_str(if self.get(i) { "1" } else { "0" })?;
        }
        Ok(())
    }
}

/// Reads `chemical IRI <TAB> bitstring` lines.
pub fn read_fingerprints_tsv<R: BufRead>(
    reader: R,
    expected_len: usize,
) -> Result<Vec<(String, Fingerprint)>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let (iri, bits) = line.split_once('\t').ok_or_else(|| {
            GroupingError::Fingerprint(format!(
                "line {}: expected two tab-separated columns",
                i + 1
            ))
        })?;
        let fp = Fingerprint::parse(bits.trim(), expected_len)
            .map_err(|e| GroupingError::Fingerprint(format!("line {}: {e}", i + 1)))?;
        out.push((iri.trim().to_owned(), fp));
    }
    Ok(out)
}

pub fn write_fingerprints_tsv<W: Write>(
    prints: &[(String, Fingerprint)],
    mut out: W,
) -> Result<()> {
    for (iri, fp) in prints {
        writeln!(out, "{iri}\t{fp}")?;
    }
    Ok(())
}
