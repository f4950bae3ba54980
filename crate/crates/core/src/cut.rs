//! Circuit cuts: cross-partition gates, wedges and Schmidt path counting.

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};

use crate::circuit::Circuit;
use crate::error::{Error, Result};
use crate::gates::{schmidt_decompose, FsimParams};
use crate::layout::QubitLayout;

const RANK_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrossGate {
    pub cycle: usize,
    pub a: usize,
    pub b: usize,
    /// Accounting rank: 4 for generic fSim, 2 where the gate reduces to a controlled phase.
    pub schmidt_rank: u32,
}

/// Two cross gates in consecutive cycles sharing exactly one qubit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Wedge {
    pub first: usize,
    pub second: usize,
    pub shared: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cut {
    pub partition_a: Vec<usize>,
    pub partition_b: Vec<usize>,
    pub cross_gates: Vec<CrossGate>,
    pub wedges: Vec<Wedge>,
}

impl Cut {
    pub fn in_a(&self, q: usize) -> bool {
        self.partition_a.binary_search(&q).is_ok()
    }
}

fn connected(set: &[usize], layout: &QubitLayout, n: usize) -> bool {
    if set.is_empty() {
        return false;
    }
    let mut member = vec![false; n];
    for &q in set {
        member[q] = true;
    }
    let mut seen = vec![false; n];
    let mut stack = vec![set[0]];
    seen[set[0]] = true;
    let mut count = 1;
    while let Some(q) = stack.pop() {
        for c in layout.active_couplers(n) {
            let other = if c.a == q {
                c.b
            } else if c.b == q {
                c.a
            } else {
                continue;
            };
            if member[other] && !seen[other] {
                seen[other] = true;
                count += 1;
                stack.push(other);
            }
        }
    }
    count == set.len()
}

fn is_cphase_reducible(p: &FsimParams) -> bool {
    (p.theta.sin().abs() - 1.0).abs() < 1e-12
}

/// Builds the cut for `partition_a` (or the layout's default cut).
///
/// Explicit partitions must induce connected subgraphs on both sides. The
/// default cut is accepted as is, since truncating it to few qubits can split it.
pub fn plan_cut(circuit: &Circuit, layout: &QubitLayout, partition_a: Option<&[usize]>) -> Result<Cut> {
    let n = circuit.n();
    let mut a: Vec<usize> = match partition_a {
        Some(p) => p.to_vec(),
        None => layout.default_partition(n),
    };
    a.sort_unstable();
    a.dedup();
    if let Some(&q) = a.iter().find(|&&q| q >= n) {
        return Err(Error::InvalidCut(format!("qubit {q} not in circuit of {n} qubits")));
    }
    let b: Vec<usize> = (0..n).filter(|q| a.binary_search(q).is_err()).collect();
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidCut("both partitions must be non-empty".into()));
    }
    let explicit = partition_a.is_some();
    if explicit && n <= layout.len() && (!connected(&a, layout, n) || !connected(&b, layout, n)) {
        return Err(Error::InvalidCut("partition is not connected".into()));
    }
    let mut cut = Cut {
        partition_a: a,
        partition_b: b,
        cross_gates: Vec::new(),
        wedges: Vec::new(),
    };
    cut.cross_gates = cross_gates(circuit, &cut);
    cut.wedges = find_wedges(circuit, &cut);
    apply_boundary_ranks(circuit, &mut cut);
    Ok(cut)
}

fn cross_gates(circuit: &Circuit, cut: &Cut) -> Vec<CrossGate> {
    let mut out = Vec::new();
    for (c, cyc) in circuit.cycles.iter().enumerate() {
        let mut here: Vec<_> = cyc.pairs.iter().filter(|p| cut.in_a(p.a) != cut.in_a(p.b)).collect();
        here.sort_by_key(|p| p.a.min(p.b));
        for p in here {
            out.push(CrossGate {
                cycle: c,
                a: p.a,
                b: p.b,
                schmidt_rank: schmidt_decompose(&p.matrix()).rank(RANK_TOL) as u32,
            });
        }
    }
    out
}

/// Lowers to 2 the rank of cphase-reducible gates outside wedges that open or
/// close the two-qubit history of both their qubits.
fn apply_boundary_ranks(circuit: &Circuit, cut: &mut Cut) {
    let n = circuit.n();
    let mut first = vec![usize::MAX; n];
    let mut last = vec![0usize; n];
    for (c, cyc) in circuit.cycles.iter().enumerate() {
        for p in &cyc.pairs {
            for q in [p.a, p.b] {
                first[q] = first[q].min(c);
                last[q] = last[q].max(c);
            }
        }
    }
    let mut in_wedge = vec![false; cut.cross_gates.len()];
    for w in &cut.wedges {
        in_wedge[w.first] = true;
        in_wedge[w.second] = true;
    }
    for (g, w) in cut.cross_gates.iter_mut().zip(in_wedge) {
        let params = pair_params(circuit, g);
        let opens = first[g.a] == g.cycle && first[g.b] == g.cycle;
        let closes = last[g.a] == g.cycle && last[g.b] == g.cycle;
        if !w && g.schmidt_rank == 4 && is_cphase_reducible(&params) && (opens || closes) {
            g.schmidt_rank = 2;
        }
    }
}

fn pair_params(circuit: &Circuit, g: &CrossGate) -> FsimParams {
    circuit.cycles[g.cycle]
        .pairs
        .iter()
        .find(|p| p.a == g.a && p.b == g.b)
        .map(|p| p.params)
        .unwrap_or_default()
}

/// Greedy time-ordered wedge detection over cross gates of full Schmidt rank.
pub fn find_wedges(circuit: &Circuit, cut: &Cut) -> Vec<Wedge> {
    let gates = &cut.cross_gates;
    let full: Vec<bool> = gates
        .iter()
        .map(|g| g.schmidt_rank == 4 || schmidt_decompose(&pair_matrix(circuit, g)).rank(RANK_TOL) == 4)
        .collect();
    let mut used = vec![false; gates.len()];
    let mut out = Vec::new();
    for i in 0..gates.len() {
        if used[i] || !full[i] {
            continue;
        }
        let g = gates[i];
        for j in i + 1..gates.len() {
            let h = gates[j];
            if h.cycle > g.cycle + 1 {
                break;
            }
            if used[j] || h.cycle != g.cycle + 1 || !full[j] {
                continue;
            }
            let shared: Vec<usize> = [g.a, g.b].into_iter().filter(|q| *q == h.a || *q == h.b).collect();
            if shared.len() == 1 {
                used[i] = true;
                used[j] = true;
                out.push(Wedge {
                    first: i,
                    second: j,
                    shared: shared[0],
                });
                break;
            }
        }
    }
    out
}

fn pair_matrix(circuit: &Circuit, g: &CrossGate) -> crate::gates::Unitary4 {
    crate::gates::general_fsim_matrix(&pair_params(circuit, g))
}

/// Number of Schmidt paths; each fused wedge contributes 4 instead of 16.
pub fn count_paths(circuit: &Circuit, cut: &Cut, fuse_wedges: bool) -> BigUint {
    let _ = circuit;
    let mut in_wedge = vec![false; cut.cross_gates.len()];
    let mut total = BigUint::from(1u32);
    if fuse_wedges {
        for w in &cut.wedges {
            in_wedge[w.first] = true;
            in_wedge[w.second] = true;
            total *= 4u32;
        }
    }
    for (g, w) in cut.cross_gates.iter().zip(&in_wedge) {
        if !w {
            total *= g.schmidt_rank;
        }
    }
    total
}

/// Path-space summary written next to SFA outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathReport {
    pub cross_gates: usize,
    pub ranks: Vec<u32>,
    pub wedges: usize,
    pub total_paths: String,
    pub prefix_len: usize,
}

impl PathReport {
    pub fn new(circuit: &Circuit, cut: &Cut, fuse_wedges: bool, prefix_len: usize) -> Self {
        Self {
            cross_gates: cut.cross_gates.len(),
            ranks: cut.cross_gates.iter().map(|g| g.schmidt_rank).collect(),
            wedges: if fuse_wedges { cut.wedges.len() } else { 0 },
            total_paths: count_paths(circuit, cut, fuse_wedges).to_string(),
            prefix_len,
        }
    }
}
