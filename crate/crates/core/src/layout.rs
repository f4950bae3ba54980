//! Qubit grids, coupler parity classes and coupler activation patterns.

use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

const SYCAMORE53: &str = include_str!("../data/sycamore53.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
pub enum PatternId {
    A,
    B,
    C,
    D,
    E,
    F,
    G,
    H,
}

impl PatternId {
    pub fn is_supremacy(self) -> bool {
        matches!(self, PatternId::A | PatternId::B | PatternId::C | PatternId::D)
    }

    pub fn from_char(c: char) -> Option<Self> {
        Some(match c.to_ascii_uppercase() {
            'A' => PatternId::A,
            'B' => PatternId::B,
            'C' => PatternId::C,
            'D' => PatternId::D,
            'E' => PatternId::E,
            'F' => PatternId::F,
            'G' => PatternId::G,
            'H' => PatternId::H,
            _ => return None,
        })
    }
}

impl fmt::Display for PatternId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self)
    }
}

/// Parses strings such as "ABCDCDAB" or "EFGH".
pub fn parse_sequence(s: &str) -> Result<Vec<PatternId>> {
    if s.is_empty() {
        return Err(Error::InvalidSequence("empty sequence".into()));
    }
    s.chars()
        .map(|c| {
            PatternId::from_char(c).ok_or_else(|| Error::InvalidSequence(format!("unknown pattern `{c}` in `{s}`")))
        })
        .collect()
}

pub fn sequence_string(seq: &[PatternId]) -> String {
    seq.iter().map(|p| p.to_string()).collect()
}

pub const SUPREMACY_SEQUENCE: &str = "ABCDCDAB";
pub const VERIFIABLE_SEQUENCE: &str = "EFGH";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Orientation {
    #[serde(rename = "h")]
    Horizontal,
    #[serde(rename = "v")]
    Vertical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Coupler {
    pub a: usize,
    pub b: usize,
    pub orientation: Orientation,
    pub supremacy: PatternId,
    pub verifiable: PatternId,
}

impl Coupler {
    pub fn in_pattern(&self, p: PatternId) -> bool {
        self.supremacy == p || self.verifiable == p
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct LayoutFile {
    id: String,
    qubits: Vec<(i32, i32)>,
    order: Vec<usize>,
    couplers: Vec<Coupler>,
    default_cut: Vec<usize>,
}

/// A grid of qubits indexed in the order they are added to circuits.
#[derive(Debug, Clone, PartialEq)]
pub struct QubitLayout {
    pub id: String,
    /// Grid coordinates (row, col) of qubit index i.
    pub coords: Vec<(i32, i32)>,
    pub couplers: Vec<Coupler>,
    /// Partition A of the default cut.
    pub default_cut: Vec<usize>,
}

/// Supremacy (A-D) and verifiable (E-H) classes of the coupler leaving `top_left`.
pub fn coupler_classes(top_left: (i32, i32), orientation: Orientation) -> (PatternId, PatternId) {
    let (r, c) = top_left;
    let even = (r + c).rem_euclid(2) == 0;
    match orientation {
        Orientation::Vertical => (
            if even { PatternId::A } else { PatternId::B },
            if r.rem_euclid(2) == 0 {
                PatternId::F
            } else {
                PatternId::H
            },
        ),
        Orientation::Horizontal => (
            if even { PatternId::D } else { PatternId::C },
            if c.rem_euclid(2) == 0 {
                PatternId::E
            } else {
                PatternId::G
            },
        ),
    }
}

impl QubitLayout {
    /// The bundled 53-qubit layout.
    pub fn sycamore53() -> Self {
        Self::from_json(SYCAMORE53).expect("bundled layout is valid")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: LayoutFile = serde_json::from_str(text)?;
        let n = f.qubits.len();
        let mut seen = vec![false; n];
        for &o in &f.order {
            if o >= n || seen[o] {
                return Err(Error::Format("layout order is not a permutation".into()));
            }
            seen[o] = true;
        }
        if f.order.len() != n {
            return Err(Error::Format("layout order has wrong length".into()));
        }
        let coords = f.order.iter().map(|&o| f.qubits[o]).collect();
        let layout = Self {
            id: f.id,
            coords,
            couplers: f.couplers,
            default_cut: f.default_cut,
        };
        layout.validate()?;
        Ok(layout)
    }

    pub fn to_json(&self) -> String {
        let f = LayoutFile {
            id: self.id.clone(),
            qubits: self.coords.clone(),
            order: (0..self.coords.len()).collect(),
            couplers: self.couplers.clone(),
            default_cut: self.default_cut.clone(),
        };
        serde_json::to_string_pretty(&f).expect("layout serializes")
    }

    /// A `rows x cols` grid indexed row-major; the default cut splits the long axis in half.
    pub fn rectangular(rows: usize, cols: usize) -> Self {
        let coords: Vec<(i32, i32)> = (0..rows)
            .flat_map(|r| (0..cols).map(move |c| (r as i32, c as i32)))
            .collect();
        let idx = |r: usize, c: usize| r * cols + c;
        let mut couplers = Vec::new();
        for r in 0..rows {
            for c in 0..cols {
                for (dr, dc, o) in [(0, 1, Orientation::Horizontal), (1, 0, Orientation::Vertical)] {
                    let (r2, c2) = (r + dr, c + dc);
                    if r2 < rows && c2 < cols {
                        let (s, v) = coupler_classes((r as i32, c as i32), o);
                        couplers.push(Coupler {
                            a: idx(r, c),
                            b: idx(r2, c2),
                            orientation: o,
                            supremacy: s,
                            verifiable: v,
                        });
                    }
                }
            }
        }
        let default_cut = if cols >= rows {
            (0..rows).flat_map(|r| (0..cols / 2).map(move |c| idx(r, c))).collect()
        } else {
            (0..(rows / 2) * cols).collect()
        };
        Self {
            id: format!("rect{rows}x{cols}"),
            coords,
            couplers,
            default_cut,
        }
    }

    /// Resolves "sycamore53", "rectRxC" / "rect:RxC", or a path to a layout JSON file.
    pub fn resolve(name: &str) -> Result<Self> {
        if name == "sycamore53" {
            return Ok(Self::sycamore53());
        }
        let rect = name.strip_prefix("rect:").or_else(|| name.strip_prefix("rect"));
        if let Some(dims) = rect {
            if let Some((r, c)) = dims.split_once('x') {
                if let (Ok(r), Ok(c)) = (r.parse(), c.parse()) {
                    return Ok(Self::rectangular(r, c));
                }
            }
        }
        let text =
            std::fs::read_to_string(name).map_err(|e| Error::InvalidSpec(format!("unknown layout `{name}`: {e}")))?;
        Self::from_json(&text)
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        let mut pos = HashMap::new();
        for (i, &q) in self.coords.iter().enumerate() {
            if pos.insert(q, i).is_some() {
                return Err(Error::Format(format!("duplicate qubit coordinate {q:?}")));
            }
        }
        for cp in &self.couplers {
            if cp.a >= n || cp.b >= n || cp.a == cp.b {
                return Err(Error::Format(format!("bad coupler {}-{}", cp.a, cp.b)));
            }
            let (p, q) = (self.coords[cp.a], self.coords[cp.b]);
            if (p.0 - q.0).abs() + (p.1 - q.1).abs() != 1 {
                return Err(Error::Format(format!("coupler {}-{} joins non-neighbours", cp.a, cp.b)));
            }
            if !cp.supremacy.is_supremacy() || cp.verifiable.is_supremacy() {
                return Err(Error::Format("coupler class out of range".into()));
            }
        }
        if self.default_cut.iter().any(|&q| q >= n) {
            return Err(Error::Format("default cut references unknown qubit".into()));
        }
        Ok(())
    }

    /// Couplers whose endpoints both lie in `0..n`, in layout order.
    pub fn active_couplers(&self, n: usize) -> impl Iterator<Item = &Coupler> {
        self.couplers.iter().filter(move |c| c.a < n && c.b < n)
    }

    /// Qubit pairs (a < b) activated by pattern `p` among the first `n` qubits.
    pub fn pattern_pairs(&self, p: PatternId, n: usize) -> Vec<(usize, usize)> {
        let mut v: Vec<(usize, usize)> = self
            .active_couplers(n)
            .filter(|c| c.in_pattern(p))
            .map(|c| (c.a.min(c.b), c.a.max(c.b)))
            .collect();
        v.sort_unstable();
        v
    }

    /// Default partition A restricted to the first `n` qubits.
    pub fn default_partition(&self, n: usize) -> Vec<usize> {
        let mut v: Vec<usize> = self.default_cut.iter().copied().filter(|&q| q < n).collect();
        v.sort_unstable();
        v
    }
}

impl FromStr for QubitLayout {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::resolve(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_layout() {
        let l = QubitLayout::sycamore53();
        assert_eq!(l.len(), 53);
        assert_eq!(l.couplers.len(), 86);
        assert_eq!(l.default_cut.len(), 26);
        l.validate().unwrap();
    }

    #[test]
    fn patterns_partition_couplers() {
        for l in [QubitLayout::sycamore53(), QubitLayout::rectangular(4, 5)] {
            for family in [SUPREMACY_SEQUENCE, VERIFIABLE_SEQUENCE] {
                let pats: Vec<PatternId> = "ABCD"
                    .chars()
                    .chain("EFGH".chars())
                    .filter_map(PatternId::from_char)
                    .filter(|p| p.is_supremacy() == (family == SUPREMACY_SEQUENCE))
                    .collect();
                let mut total = 0;
                for c in &l.couplers {
                    let k = pats.iter().filter(|&&p| c.in_pattern(p)).count();
                    assert_eq!(k, 1);
                    total += 1;
                }
                assert_eq!(total, l.couplers.len());
            }
        }
    }

    #[test]
    fn patterns_are_matchings() {
        let l = QubitLayout::sycamore53();
        for p in "ABCDEFGH".chars().filter_map(PatternId::from_char) {
            let pairs = l.pattern_pairs(p, 53);
            let mut used = vec![false; 53];
            for (a, b) in pairs {
                assert!(!used[a] && !used[b]);
                used[a] = true;
                used[b] = true;
            }
        }
    }

    #[test]
    fn json_round_trip() {
        let l = QubitLayout::rectangular(3, 4);
        let back = QubitLayout::from_json(&l.to_json()).unwrap();
        assert_eq!(l, back);
        assert_eq!(QubitLayout::resolve("rect:3x4").unwrap(), l);
    }

    #[test]
    fn sequence_parsing() {
        assert_eq!(parse_sequence("ABCDCDAB").unwrap().len(), 8);
        assert!(parse_sequence("ABX").is_err());
        assert!(parse_sequence("").is_err());
    }
}
