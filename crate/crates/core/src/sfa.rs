//! Schrödinger-Feynman simulation: the circuit is split by a cut, each cross
//! gate is replaced by its operator Schmidt decomposition, and amplitudes are
//! summed over Schmidt paths of the two half-circuits.

use nalgebra::DMatrix;
use num_bigint::BigUint;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

use crate::circuit::{Circuit, ExtraGate, Op, SingleGate};
use crate::cut::{count_paths, Cut};
use crate::error::{Error, Result};
use crate::gates::{schmidt_decompose, schmidt_decompose_dims, single_qubit_matrix};
use crate::statevec::{check_memory, fuse_gates, FusedGate, StateVector};
use crate::C64;

const LAMBDA_TOL: f64 = 1e-12;
const BRA_MEMORY_CAP: usize = 1 << 28;

/// One cross gate or fused wedge, expanded into Schmidt terms.
#[derive(Debug, Clone)]
pub struct BranchPoint {
    /// Indices into `Cut::cross_gates` covered by this branch point.
    pub gates: Vec<usize>,
    pub lambdas: Vec<f64>,
    /// Side-A operator of each term, with its coefficient absorbed.
    pub ops_a: Vec<FusedGate>,
    pub ops_b: Vec<FusedGate>,
}

/// A circuit compiled into two half-circuits separated by branch points.
#[derive(Debug, Clone)]
pub struct SfaProgram {
    pub partition_a: Vec<usize>,
    pub partition_b: Vec<usize>,
    /// `segments[s][k]` are the side-`s` gates between branch points `k-1` and `k`.
    pub segments: [Vec<Vec<FusedGate>>; 2],
    pub branches: Vec<BranchPoint>,
}

fn gate1(q: usize, u: crate::gates::Unitary2) -> FusedGate {
    FusedGate {
        qubits: vec![q],
        matrix: DMatrix::from_fn(2, 2, |r, c| u[(r, c)]),
    }
}

impl SfaProgram {
    pub fn compile(circuit: &Circuit, cut: &Cut, fuse_wedges: bool) -> Result<Self> {
        let n = circuit.n();
        let mut loc = vec![(0usize, 0usize); n];
        let mut seen = vec![false; n];
        for (side, part) in [&cut.partition_a, &cut.partition_b].into_iter().enumerate() {
            for (i, &q) in part.iter().enumerate() {
                if q >= n || seen[q] {
                    return Err(Error::InvalidCut(format!("qubit {q} repeated or out of range")));
                }
                seen[q] = true;
                loc[q] = (side, i);
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::InvalidCut("partitions do not cover every qubit".into()));
        }

        let mut first_of: HashMap<usize, usize> = HashMap::new();
        let mut second: Vec<bool> = vec![false; cut.cross_gates.len()];
        let mut absorbed: HashMap<(usize, usize), ()> = HashMap::new();
        if fuse_wedges {
            for (wi, w) in cut.wedges.iter().enumerate() {
                first_of.insert(w.first, wi);
                second[w.second] = true;
                let (g1, g2) = (cut.cross_gates[w.first], cut.cross_gates[w.second]);
                for q in [g1.a, g1.b, g2.a, g2.b] {
                    absorbed.insert((g2.cycle, q), ());
                }
            }
        }
        let cross_index: HashMap<(usize, usize, usize), usize> = cut
            .cross_gates
            .iter()
            .enumerate()
            .map(|(i, g)| ((g.cycle, g.a, g.b), i))
            .collect();

        let mut segs: [Vec<Vec<FusedGate>>; 2] = [vec![Vec::new()], vec![Vec::new()]];
        let mut branches = Vec::new();
        let push_local = |segs: &mut [Vec<Vec<FusedGate>>; 2], q: usize, u: crate::gates::Unitary2| {
            let (s, i) = loc[q];
            segs[s].last_mut().unwrap().push(gate1(i, u));
        };
        let emit = |segs: &mut [Vec<Vec<FusedGate>>; 2], branches: &mut Vec<BranchPoint>, b: BranchPoint| {
            branches.push(b);
            segs[0].push(Vec::new());
            segs[1].push(Vec::new());
        };

        let m = circuit.m();
        for (c, cyc) in circuit.cycles.iter().enumerate() {
            for s in &cyc.singles {
                if !absorbed.contains_key(&(c, s.q)) {
                    push_local(&mut segs, s.q, single_qubit_matrix(s.axis));
                }
            }
            for e in &cyc.extra {
                if !absorbed.contains_key(&(c, e.q)) {
                    push_local(&mut segs, e.q, e.gate.matrix());
                }
            }
            let mut wedge_here = Vec::new();
            for p in &cyc.pairs {
                let (sa, ia) = loc[p.a];
                let (sb, ib) = loc[p.b];
                if sa == sb {
                    let u = p.matrix();
                    segs[sa].last_mut().unwrap().push(FusedGate {
                        qubits: vec![ia, ib],
                        matrix: DMatrix::from_fn(4, 4, |r, c| u[(r, c)]),
                    });
                    continue;
                }
                let gi = *cross_index
                    .get(&(c, p.a, p.b))
                    .ok_or_else(|| Error::InvalidCut("cut does not match circuit".into()))?;
                if second[gi] {
                    continue;
                }
                if let Some(&wi) = first_of.get(&gi) {
                    wedge_here.push(wi);
                    continue;
                }
                let b = cross_branch(p.matrix(), (sa, ia), (sb, ib), gi);
                emit(&mut segs, &mut branches, b);
            }
            for wi in wedge_here {
                let b = wedge_branch(circuit, cut, wi, &loc)?;
                emit(&mut segs, &mut branches, b);
            }
        }
        for s in &circuit.half_cycle {
            push_local(&mut segs, s.q, single_qubit_matrix(s.axis));
        }
        for e in &circuit.half_cycle_extra {
            push_local(&mut segs, e.q, e.gate.matrix());
        }
        let _ = m;
        let sizes = [cut.partition_a.len(), cut.partition_b.len()];
        let segments = [0, 1].map(|s| {
            std::mem::take(&mut segs[s])
                .into_iter()
                .map(|seg| fuse_gates(sizes[s], seg))
                .collect()
        });
        Ok(Self {
            partition_a: cut.partition_a.clone(),
            partition_b: cut.partition_b.clone(),
            segments,
            branches,
        })
    }

    pub fn ranks(&self) -> Vec<u32> {
        self.branches.iter().map(|b| b.lambdas.len() as u32).collect()
    }

    /// Number of engine paths, or `None` beyond `u64`.
    pub fn total_paths(&self) -> Option<u64> {
        self.ranks().iter().try_fold(1u64, |acc, &r| acc.checked_mul(r as u64))
    }

    fn side_n(&self, s: usize) -> usize {
        if s == 0 {
            self.partition_a.len()
        } else {
            self.partition_b.len()
        }
    }
}

/// Splits a cross gate `u` (basis `2*bit(b) + bit(a)`) into Schmidt terms.
fn cross_branch(u: crate::gates::Unitary4, a: (usize, usize), b: (usize, usize), gi: usize) -> BranchPoint {
    let d = schmidt_decompose(&u);
    // Left operators act on the high bit, which is qubit `b`.
    let mut out = BranchPoint {
        gates: vec![gi],
        lambdas: Vec::new(),
        ops_a: Vec::new(),
        ops_b: Vec::new(),
    };
    for k in 0..d.coefficients.len() {
        let l = d.coefficients[k];
        if l <= LAMBDA_TOL {
            continue;
        }
        let hi = FusedGate {
            qubits: vec![b.1],
            matrix: d.left_ops[k].clone(),
        };
        let lo = FusedGate {
            qubits: vec![a.1],
            matrix: d.right_ops[k].clone(),
        };
        let (mut on_a, on_b) = if b.0 == 0 { (hi, lo) } else { (lo, hi) };
        on_a.matrix *= C64::from(l);
        out.lambdas.push(l);
        out.ops_a.push(on_a);
        out.ops_b.push(on_b);
    }
    out
}

fn wedge_branch(circuit: &Circuit, cut: &Cut, wi: usize, loc: &[(usize, usize)]) -> Result<BranchPoint> {
    let w = cut.wedges[wi];
    let (g1, g2) = (cut.cross_gates[w.first], cut.cross_gates[w.second]);
    let s = w.shared;
    let x = if g1.a == s { g1.b } else { g1.a };
    let y = if g2.a == s { g2.b } else { g2.a };
    // Local three-qubit register: x -> 0, y -> 1, s -> 2.
    let sim = |q: usize| {
        if q == x {
            0
        } else if q == y {
            1
        } else {
            2
        }
    };
    let pair = |cycle: usize, a: usize, b: usize| {
        circuit.cycles[cycle]
            .pairs
            .iter()
            .find(|p| p.a == a && p.b == b)
            .map(|p| p.matrix())
            .ok_or_else(|| Error::InvalidCut("wedge gate missing from circuit".into()))
    };
    let u1 = pair(g1.cycle, g1.a, g1.b)?;
    let u2 = pair(g2.cycle, g2.a, g2.b)?;
    let mid = &circuit.cycles[g2.cycle];
    let singles: Vec<&SingleGate> = mid.singles.iter().filter(|g| [x, y, s].contains(&g.q)).collect();
    let extras: Vec<&ExtraGate> = mid.extra.iter().filter(|g| [x, y, s].contains(&g.q)).collect();
    let mut w8 = DMatrix::<C64>::zeros(8, 8);
    for j in 0..8 {
        let mut e = vec![C64::new(0.0, 0.0); 8];
        e[j] = C64::new(1.0, 0.0);
        let mut sv = StateVector::<f64>::from_amplitudes(e)?;
        sv.apply_op(&Op::Two {
            a: sim(g1.a),
            b: sim(g1.b),
            u: u1,
        })?;
        for g in &singles {
            sv.apply_1q(&single_qubit_matrix(g.axis), sim(g.q))?;
        }
        for g in &extras {
            sv.apply_1q(&g.gate.matrix(), sim(g.q))?;
        }
        sv.apply_op(&Op::Two {
            a: sim(g2.a),
            b: sim(g2.b),
            u: u2,
        })?;
        for i in 0..8 {
            w8[(i, j)] = sv.amplitude(i as u64);
        }
    }
    // Row index 4*bit(s) + (bit(x) + 2*bit(y)): s is the left subsystem.
    let d = schmidt_decompose_dims(&w8, 2, 4);
    let (s_side, s_loc) = loc[s];
    let pair_loc = vec![loc[x].1, loc[y].1];
    let mut out = BranchPoint {
        gates: vec![w.first, w.second],
        lambdas: Vec::new(),
        ops_a: Vec::new(),
        ops_b: Vec::new(),
    };
    for k in 0..d.coefficients.len() {
        let l = d.coefficients[k];
        if l <= LAMBDA_TOL {
            continue;
        }
        let one = FusedGate {
            qubits: vec![s_loc],
            matrix: d.left_ops[k].clone(),
        };
        let two = FusedGate {
            qubits: pair_loc.clone(),
            matrix: d.right_ops[k].clone(),
        };
        let (mut on_a, on_b) = if s_side == 0 { (one, two) } else { (two, one) };
        on_a.matrix *= C64::from(l);
        out.lambdas.push(l);
        out.ops_a.push(on_a);
        out.ops_b.push(on_b);
    }
    Ok(out)
}

/// The Schmidt-path index space of a compiled program.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PathSpace {
    pub cut: Cut,
    /// Engine branch counts, one per branch point (numerical Schmidt ranks).
    pub branch_counts: Vec<u32>,
    pub total_paths: BigUint,
    /// Path count under the rank-2 boundary simplification.
    pub accounting_paths: BigUint,
    pub fused_wedges: bool,
    pub prefix_len: usize,
}

impl PathSpace {
    pub fn new(circuit: &Circuit, cut: &Cut, fuse_wedges: bool, prefix_len: Option<usize>) -> Result<Self> {
        let prog = SfaProgram::compile(circuit, cut, fuse_wedges)?;
        let counts = prog.ranks();
        let g = counts.len();
        let p = prefix_len.unwrap_or(g / 2);
        if p > g {
            return Err(Error::InvalidArgument(format!(
                "prefix length {p} exceeds {g} branch points"
            )));
        }
        let total = counts.iter().fold(BigUint::from(1u32), |acc, &r| acc * r);
        Ok(Self {
            cut: cut.clone(),
            branch_counts: counts,
            total_paths: total,
            accounting_paths: count_paths(circuit, cut, fuse_wedges),
            fused_wedges: fuse_wedges,
            prefix_len: p,
        })
    }

    /// Mixed-radix digits of `index`, most significant first.
    pub fn digits(&self, mut index: u64) -> Vec<u32> {
        let mut d = vec![0u32; self.branch_counts.len()];
        for (k, &r) in self.branch_counts.iter().enumerate().rev() {
            d[k] = (index % r as u64) as u32;
            index /= r as u64;
        }
        d
    }

    pub fn index(&self, digits: &[u32]) -> u64 {
        digits
            .iter()
            .zip(&self.branch_counts)
            .fold(0u64, |acc, (&d, &r)| acc * r as u64 + d as u64)
    }

    /// JSON summary: `{cross_gates, ranks, wedges, total_paths, prefix_len, ...}`.
    pub fn report(&self) -> serde_json::Value {
        serde_json::json!({
            "cross_gates": self.cut.cross_gates.len(),
            "ranks": self.cut.cross_gates.iter().map(|g| g.schmidt_rank).collect::<Vec<_>>(),
            "wedges": if self.fused_wedges { self.cut.wedges.len() } else { 0 },
            "total_paths": self.accounting_paths.to_string(),
            "prefix_len": self.prefix_len,
            "engine_branch_counts": self.branch_counts,
            "engine_total_paths": self.total_paths.to_string(),
            "partition_a": self.cut.partition_a,
        })
    }
}

/// Which Schmidt paths enter the sum.
#[derive(Debug, Clone, PartialEq)]
pub enum PathSelection {
    All,
    /// Paths `0..k` in index order.
    FirstK(u64),
    /// Sorted, deduplicated path indices.
    Explicit(Vec<u64>),
}

impl PathSelection {
    fn any_in(&self, lo: u64, hi: u64) -> bool {
        match self {
            PathSelection::All => true,
            PathSelection::FirstK(k) => lo < *k,
            PathSelection::Explicit(v) => {
                let i = v.partition_point(|&x| x < lo);
                i < v.len() && v[i] < hi
            }
        }
    }

    fn count(&self, total: u64) -> u64 {
        match self {
            PathSelection::All => total,
            PathSelection::FirstK(k) => (*k).min(total),
            PathSelection::Explicit(v) => v.iter().filter(|&&x| x < total).count() as u64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PathOrder {
    #[default]
    Index,
    Weight,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SfaOptions {
    /// Fraction of paths summed, in (0, 1].
    pub fraction: f64,
    /// Branch points fixed per checkpointed prefix; defaults to half of them.
    pub prefix_len: Option<usize>,
    pub order: PathOrder,
    pub fuse_wedges: bool,
}

impl Default for SfaOptions {
    fn default() -> Self {
        Self {
            fraction: 1.0,
            prefix_len: None,
            order: PathOrder::Index,
            fuse_wedges: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SfaResult {
    /// Raw truncated amplitudes (not rescaled).
    pub amplitudes: Vec<C64>,
    pub paths_used: u64,
    pub total_paths: u64,
    /// Implied fidelity of the truncated sum, `paths_used / total_paths`.
    pub fraction: f64,
}

#[derive(Debug, Clone)]
struct Kahan {
    sum: Vec<C64>,
    comp: Vec<C64>,
}

impl Kahan {
    fn new(len: usize) -> Self {
        Self {
            sum: vec![C64::new(0.0, 0.0); len],
            comp: vec![C64::new(0.0, 0.0); len],
        }
    }

    #[inline]
    fn add(&mut self, i: usize, v: C64) {
        let y = v - self.comp[i];
        let t = self.sum[i] + y;
        self.comp[i] = (t - self.sum[i]) - y;
        self.sum[i] = t;
    }
}

enum Targets {
    List {
        halves: [Vec<usize>; 2],
        pairs: Vec<(u32, u32)>,
    },
    All {
        scatter: [Vec<usize>; 2],
    },
}

impl Targets {
    fn len(&self) -> usize {
        match self {
            Targets::List { pairs, .. } => pairs.len(),
            Targets::All { scatter } => scatter[0].len() * scatter[1].len(),
        }
    }
}

fn half_index(x: u64, part: &[usize]) -> usize {
    part.iter()
        .enumerate()
        .map(|(i, &q)| (((x >> q) & 1) as usize) << i)
        .sum()
}

/// How one side produces its half-amplitudes at a leaf.
enum Leaf {
    /// Apply the tail segment, then read amplitudes.
    Evolve,
    /// Dot products with precomputed `U_tail^dagger |x>`.
    Bras(Vec<Vec<C64>>),
}

struct Engine<'a> {
    prog: &'a SfaProgram,
    ranks: Vec<u32>,
    /// `strides[k]` = number of paths below one node at level `k`.
    strides: Vec<u64>,
    targets: Targets,
    leaf: [Leaf; 2],
    selection: PathSelection,
}

struct Workspace {
    bufs: [Vec<StateVector<f64>>; 2],
    vals: [Vec<C64>; 2],
}

impl<'a> Engine<'a> {
    fn new(prog: &'a SfaProgram, targets: Targets, selection: PathSelection) -> Result<Self> {
        let ranks = prog.ranks();
        let g = ranks.len();
        let mut strides = vec![1u64; g + 1];
        for k in (0..g).rev() {
            strides[k] = strides[k + 1]
                .checked_mul(ranks[k] as u64)
                .ok_or_else(|| Error::InvalidArgument("path space exceeds 2^64 paths".into()))?;
        }
        let leaf = [0, 1].map(|s| match &targets {
            Targets::List { halves, .. } => {
                let ns = prog.side_n(s);
                let tail = &prog.segments[s][g];
                let tail_cost: usize = tail.iter().map(|op| op.matrix.nrows()).sum();
                let distinct = halves[s].len();
                if distinct < tail_cost && distinct.saturating_mul(16 << ns) <= BRA_MEMORY_CAP {
                    Leaf::Bras(halves[s].iter().map(|&x| tail_bra(ns, tail, x)).collect())
                } else {
                    Leaf::Evolve
                }
            }
            Targets::All { .. } => Leaf::Evolve,
        });
        Ok(Self {
            prog,
            ranks,
            strides,
            targets,
            leaf,
            selection,
        })
    }

    fn g(&self) -> usize {
        self.ranks.len()
    }

    fn workspace(&self, from: usize) -> Result<Workspace> {
        let g = self.g();
        let mk = |s: usize| -> Result<Vec<StateVector<f64>>> {
            (from..=g).map(|_| StateVector::new(self.prog.side_n(s))).collect()
        };
        let vals = match &self.targets {
            Targets::List { halves, .. } => [halves[0].len(), halves[1].len()],
            Targets::All { scatter } => [scatter[0].len(), scatter[1].len()],
        };
        Ok(Workspace {
            bufs: [mk(0)?, mk(1)?],
            vals: vals.map(|l| vec![C64::new(0.0, 0.0); l]),
        })
    }

    /// State of both sides at the root (segment 0 applied unless it is the tail).
    fn root(&self) -> Result<[StateVector<f64>; 2]> {
        let mut out = [
            StateVector::new(self.prog.side_n(0))?,
            StateVector::new(self.prog.side_n(1))?,
        ];
        if self.g() > 0 {
            for (s, sv) in out.iter_mut().enumerate() {
                sv.apply_fused(&self.prog.segments[s][0])?;
            }
        }
        Ok(out)
    }

    fn child(&self, parent: &StateVector<f64>, dst: &mut StateVector<f64>, s: usize, k: usize, d: usize) -> Result<()> {
        dst.clone_from(parent);
        let b = &self.prog.branches[k];
        let op = if s == 0 { &b.ops_a[d] } else { &b.ops_b[d] };
        dst.apply_dense(&op.matrix, &op.qubits)?;
        if k + 1 < self.g() {
            dst.apply_fused(&self.prog.segments[s][k + 1])?;
        }
        Ok(())
    }

    /// Depth-first sum over the subtree rooted at level `level`, node `node`.
    /// `ws.bufs[s][0]` holds the node state.
    fn dfs(&self, ws: &mut Workspace, base: usize, level: usize, node: u64, acc: &mut Kahan) -> Result<()> {
        let g = self.g();
        if level == g {
            return self.leaf(ws, level - base, acc);
        }
        let r = self.ranks[level] as u64;
        let stride = self.strides[level + 1];
        for d in 0..r {
            let child = node * r + d;
            if !self.selection.any_in(child * stride, (child + 1) * stride) {
                continue;
            }
            let slot = level - base;
            for s in 0..2 {
                let (lo, hi) = ws.bufs[s].split_at_mut(slot + 1);
                self.child(&lo[slot], &mut hi[0], s, level, d as usize)?;
            }
            self.dfs(ws, base, level + 1, child, acc)?;
        }
        Ok(())
    }

    fn leaf(&self, ws: &mut Workspace, slot: usize, acc: &mut Kahan) -> Result<()> {
        let g = self.g();
        for s in 0..2 {
            let sv = &mut ws.bufs[s][slot];
            match &self.leaf[s] {
                Leaf::Bras(bras) => {
                    let amps = sv.amplitudes();
                    for (v, w) in ws.vals[s].iter_mut().zip(bras) {
                        *v = w.iter().zip(amps).map(|(a, b)| a.conj() * b).sum();
                    }
                }
                Leaf::Evolve => {
                    sv.apply_fused(&self.prog.segments[s][g])?;
                    let amps = sv.amplitudes();
                    match &self.targets {
                        Targets::List { halves, .. } => {
                            for (v, &x) in ws.vals[s].iter_mut().zip(&halves[s]) {
                                *v = amps[x];
                            }
                        }
                        Targets::All { .. } => ws.vals[s].copy_from_slice(amps),
                    }
                }
            }
        }
        match &self.targets {
            Targets::List { pairs, .. } => {
                for (j, &(ia, ib)) in pairs.iter().enumerate() {
                    acc.add(j, ws.vals[0][ia as usize] * ws.vals[1][ib as usize]);
                }
            }
            Targets::All { scatter } => {
                for (xb, &vb) in ws.vals[1].iter().enumerate() {
                    let ob = scatter[1][xb];
                    for (xa, &va) in ws.vals[0].iter().enumerate() {
                        acc.add(scatter[0][xa] | ob, va * vb);
                    }
                }
            }
        }
        Ok(())
    }

    /// Full sum: serial prefix descent, then parallel subtrees merged in order.
    fn run(&self, prefix_len: usize) -> Result<Vec<C64>> {
        let g = self.g();
        let p = prefix_len.min(g);
        let len = self.targets.len();
        let mut total = Kahan::new(len);
        let threads = rayon::current_num_threads().max(1);
        let mut pool: Vec<Workspace> = Vec::new();
        let mut batch: Vec<(u64, [StateVector<f64>; 2])> = Vec::new();

        let flush = |batch: &mut Vec<(u64, [StateVector<f64>; 2])>,
                     pool: &mut Vec<Workspace>,
                     total: &mut Kahan|
         -> Result<()> {
            while pool.len() < batch.len() {
                pool.push(self.workspace(p)?);
            }
            let results: Vec<Result<Kahan>> = batch
                .par_iter()
                .zip(pool.par_iter_mut())
                .map(|((node, states), ws)| {
                    for s in 0..2 {
                        ws.bufs[s][0].clone_from(&states[s]);
                    }
                    let mut acc = Kahan::new(len);
                    self.dfs(ws, p, p, *node, &mut acc)?;
                    Ok(acc)
                })
                .collect();
            for r in results {
                let part = r?;
                for (i, v) in part.sum.iter().enumerate() {
                    total.add(i, *v);
                }
            }
            batch.clear();
            Ok(())
        };

        // Serial descent through the prefix levels with one checkpoint per level.
        let root = self.root()?;
        let mut stack: Vec<[StateVector<f64>; 2]> = vec![root];
        let mut digits: Vec<u64> = Vec::new();
        let mut node: u64 = 0;
        self.prefix_walk(p, &mut stack, &mut digits, &mut node, &mut |node, states| {
            batch.push((node, states.clone()));
            if batch.len() >= threads {
                flush(&mut batch, &mut pool, &mut total)?;
            }
            Ok(())
        })?;
        if !batch.is_empty() {
            flush(&mut batch, &mut pool, &mut total)?;
        }
        Ok(total.sum)
    }

    fn prefix_walk(
        &self,
        p: usize,
        stack: &mut Vec<[StateVector<f64>; 2]>,
        digits: &mut Vec<u64>,
        node: &mut u64,
        visit: &mut dyn FnMut(u64, &[StateVector<f64>; 2]) -> Result<()>,
    ) -> Result<()> {
        let level = digits.len();
        if level == p {
            return visit(*node, stack.last().unwrap());
        }
        let r = self.ranks[level] as u64;
        let stride = self.strides[level + 1];
        for d in 0..r {
            let child = *node * r + d;
            if !self.selection.any_in(child * stride, (child + 1) * stride) {
                continue;
            }
            let parent = stack.last().unwrap();
            let mut next = parent.clone();
            for (s, sv) in next.iter_mut().enumerate() {
                self.child(&parent[s], sv, s, level, d as usize)?;
            }
            stack.push(next);
            digits.push(d);
            let saved = *node;
            *node = child;
            self.prefix_walk(p, stack, digits, node, visit)?;
            *node = saved;
            digits.pop();
            stack.pop();
        }
        Ok(())
    }
}

fn tail_bra(ns: usize, tail: &[FusedGate], x: usize) -> Vec<C64> {
    let mut amps = vec![C64::new(0.0, 0.0); 1 << ns];
    amps[x] = C64::new(1.0, 0.0);
    let mut sv = StateVector::<f64>::from_amplitudes(amps).expect("power of two");
    for op in tail.iter().rev() {
        sv.apply_dense(&op.matrix.adjoint(), &op.qubits).expect("valid tail op");
    }
    sv.amplitudes().to_vec()
}

fn check_halves(prog: &SfaProgram) -> Result<()> {
    check_memory(prog.partition_a.len())?;
    check_memory(prog.partition_b.len())
}

fn selection_for(prog: &SfaProgram, opts: &SfaOptions) -> Result<(PathSelection, u64)> {
    if !(opts.fraction > 0.0 && opts.fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "fraction {} not in (0, 1]",
            opts.fraction
        )));
    }
    let total = prog
        .total_paths()
        .ok_or_else(|| Error::InvalidArgument("path space exceeds 2^64 paths".into()))?;
    let k = ((opts.fraction * total as f64).ceil() as u64).clamp(1, total);
    let sel = if k == total {
        PathSelection::All
    } else {
        match opts.order {
            PathOrder::Index => PathSelection::FirstK(k),
            PathOrder::Weight => {
                let lambdas: Vec<Vec<f64>> = prog.branches.iter().map(|b| b.lambdas.clone()).collect();
                let order = path_order_by_weight(&lambdas)?;
                let mut chosen = order.order[..k as usize].to_vec();
                chosen.sort_unstable();
                PathSelection::Explicit(chosen)
            }
        }
    };
    Ok((sel, total))
}

/// (paths used, total paths) that `opts` selects for this circuit and cut.
pub fn selected_paths(circuit: &Circuit, cut: &Cut, opts: &SfaOptions) -> Result<(u64, u64)> {
    let prog = SfaProgram::compile(circuit, cut, opts.fuse_wedges)?;
    let (sel, total) = selection_for(&prog, opts)?;
    Ok((sel.count(total), total))
}

/// Amplitudes `<x|U|0>` summed over the selected Schmidt paths.
pub fn sfa_amplitudes(circuit: &Circuit, cut: &Cut, bitstrings: &[u64], opts: &SfaOptions) -> Result<SfaResult> {
    let prog = SfaProgram::compile(circuit, cut, opts.fuse_wedges)?;
    let (sel, total) = selection_for(&prog, opts)?;
    let used = sel.count(total);
    let amplitudes = sfa_amplitudes_with(&prog, bitstrings, sel, opts.prefix_len)?;
    Ok(SfaResult {
        amplitudes,
        paths_used: used,
        total_paths: total,
        fraction: used as f64 / total as f64,
    })
}

/// Path sum over an explicit selection on a compiled program.
pub fn sfa_amplitudes_with(
    prog: &SfaProgram,
    bitstrings: &[u64],
    selection: PathSelection,
    prefix_len: Option<usize>,
) -> Result<Vec<C64>> {
    if bitstrings.is_empty() {
        return Err(Error::Empty("bitstring list"));
    }
    check_halves(prog)?;
    let n = prog.partition_a.len() + prog.partition_b.len();
    if let Some(&x) = bitstrings.iter().find(|&&x| n < 64 && x >> n != 0) {
        return Err(Error::InvalidArgument(format!("bitstring {x} has more than {n} bits")));
    }
    let parts = [&prog.partition_a, &prog.partition_b];
    let mut halves: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    let mut lookup: [HashMap<usize, u32>; 2] = [HashMap::new(), HashMap::new()];
    let mut pairs = Vec::with_capacity(bitstrings.len());
    for &x in bitstrings {
        let mut ids = [0u32; 2];
        for s in 0..2 {
            let h = half_index(x, parts[s]);
            ids[s] = *lookup[s].entry(h).or_insert_with(|| {
                halves[s].push(h);
                (halves[s].len() - 1) as u32
            });
        }
        pairs.push((ids[0], ids[1]));
    }
    let engine = Engine::new(prog, Targets::List { halves, pairs }, selection)?;
    engine.run(prefix_len.unwrap_or(prog.branches.len() / 2))
}

/// All `2^n` amplitudes of the truncated path sum.
pub fn sfa_all_amplitudes(circuit: &Circuit, cut: &Cut, opts: &SfaOptions) -> Result<SfaResult> {
    let prog = SfaProgram::compile(circuit, cut, opts.fuse_wedges)?;
    check_memory(circuit.n())?;
    check_halves(&prog)?;
    let (sel, total) = selection_for(&prog, opts)?;
    let used = sel.count(total);
    let scatter = [&prog.partition_a, &prog.partition_b].map(|part| {
        (0..1usize << part.len())
            .map(|h| part.iter().enumerate().map(|(i, &q)| ((h >> i) & 1) << q).sum())
            .collect()
    });
    let engine = Engine::new(&prog, Targets::All { scatter }, sel)?;
    let amplitudes = engine.run(opts.prefix_len.unwrap_or(prog.branches.len() / 2))?;
    Ok(SfaResult {
        amplitudes,
        paths_used: used,
        total_paths: total,
        fraction: used as f64 / total as f64,
    })
}

/// Rejection sampling from the truncated path sum.
///
/// Candidates are uniform; a candidate is accepted with probability
/// `D * p(x) / (f * ceiling)` where `p(x)` is the raw truncated probability.
pub fn sfa_sample(
    circuit: &Circuit,
    cut: &Cut,
    count: usize,
    opts: &SfaOptions,
    seed: u64,
    ceiling: f64,
) -> Result<Vec<u64>> {
    if ceiling <= 0.0 {
        return Err(Error::InvalidArgument("ceiling multiple must be positive".into()));
    }
    let n = circuit.n();
    if n >= 64 {
        return Err(Error::InvalidArgument("at most 63 qubits".into()));
    }
    let prog = SfaProgram::compile(circuit, cut, opts.fuse_wedges)?;
    let (sel, total) = selection_for(&prog, opts)?;
    let f = sel.count(total) as f64 / total as f64;
    let dim = (1u64 << n) as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    let mut over = 0usize;
    while out.len() < count {
        let need = count - out.len();
        let batch = ((need as f64 * ceiling * 1.2) as usize).max(256);
        let cands: Vec<u64> = (0..batch).map(|_| rng.random_range(0..1u64 << n)).collect();
        let amps = sfa_amplitudes_with(&prog, &cands, sel.clone(), opts.prefix_len)?;
        for (x, a) in cands.into_iter().zip(amps) {
            let ratio = dim * a.norm_sqr() / f / ceiling;
            if ratio > 1.0 {
                over += 1;
            }
            if rng.random::<f64>() < ratio && out.len() < count {
                out.push(x);
            }
        }
    }
    if over > 0 {
        log::warn!("{over} candidates exceeded the acceptance ceiling of {ceiling}/D; samples are biased");
    }
    Ok(out)
}

/// Paths sorted by descending weight `prod_k lambda_{k,d_k}^2` (ties by index).
#[derive(Debug, Clone, PartialEq)]
pub struct WeightOrder {
    pub order: Vec<u64>,
    /// Weights in `order`, normalized to mean 1.
    pub weights: Vec<f64>,
}

impl WeightOrder {
    /// Index-order paths needed for fidelity `f`, divided by weight-order paths needed.
    pub fn speedup(&self, f: f64) -> f64 {
        let total: f64 = self.weights.iter().sum();
        let target = f * total;
        let mut acc = 0.0;
        let mut s = 0.0;
        for &w in &self.weights {
            if acc + w >= target {
                s += (target - acc) / w;
                break;
            }
            acc += w;
            s += 1.0;
        }
        f * self.weights.len() as f64 / s
    }
}

/// Exhaustive weight ordering; refuses path spaces above 2^24.
pub fn path_order_by_weight(lambdas: &[Vec<f64>]) -> Result<WeightOrder> {
    let total = lambdas
        .iter()
        .try_fold(1u64, |acc, l| acc.checked_mul(l.len() as u64))
        .filter(|&t| t <= 1 << 24)
        .ok_or_else(|| Error::InvalidArgument("path space too large to order exhaustively".into()))?;
    let mut weights = vec![1.0f64; total as usize];
    let mut stride = total;
    for l in lambdas {
        let r = l.len() as u64;
        stride /= r;
        let norm: f64 = l.iter().map(|x| x * x).sum::<f64>() / r as f64;
        for (i, w) in weights.iter_mut().enumerate() {
            let d = (i as u64 / stride) % r;
            *w *= l[d as usize].powi(2) / norm;
        }
    }
    let mut order: Vec<u64> = (0..total).collect();
    order.sort_by(|&a, &b| weights[b as usize].total_cmp(&weights[a as usize]).then(a.cmp(&b)));
    let weights = order.iter().map(|&i| weights[i as usize]).collect();
    Ok(WeightOrder { order, weights })
}

/// Speedup of weight-ordered over index-ordered path summation at fidelity
/// `f`, for `g` identical gates with Schmidt values `lambdas`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeedupReport {
    pub speedup: f64,
    /// Weight-ordered paths needed, as a fraction of all paths.
    pub path_fraction: f64,
    /// Largest single-path weight relative to the mean.
    pub max_weight: f64,
}

pub fn uniform_speedup(g: u32, lambdas: [f64; 4], f: f64) -> SpeedupReport {
    // Classes: a gates on lambda1, b on lambda2 or lambda3, c on lambda4.
    let norm = lambdas.iter().map(|l| l * l).sum::<f64>() / 4.0;
    let w = lambdas.map(|l| l * l / norm);
    let ln_fact: Vec<f64> = (0..=g as usize + 1)
        .scan(0.0, |acc, k| {
            if k > 0 {
                *acc += (k as f64).ln();
            }
            Some(*acc)
        })
        .collect();
    let mut classes = Vec::new();
    for a in 0..=g {
        for b in 0..=g - a {
            let c = g - a - b;
            let ln_count = ln_fact[g as usize] - ln_fact[a as usize] - ln_fact[b as usize] - ln_fact[c as usize]
                + b as f64 * 2f64.ln();
            let term = |k: u32, x: f64| if k == 0 { 0.0 } else { k as f64 * x.ln() };
            let ln_w = term(a, w[0]) + term(b, w[1]) + term(c, w[3]);
            classes.push((ln_w, ln_count));
        }
    }
    classes.sort_by(|x, y| y.0.total_cmp(&x.0));
    let ln_total = g as f64 * 4f64.ln();
    // Fractions of all paths and of total weight (mean weight is 1).
    let mut paths = 0.0;
    let mut weight = 0.0;
    for &(ln_w, ln_count) in &classes {
        let frac_paths = (ln_count - ln_total).exp();
        let frac_weight = frac_paths * ln_w.exp();
        if weight + frac_weight >= f {
            paths += (f - weight) / ln_w.exp();
            weight = f;
            break;
        }
        weight += frac_weight;
        paths += frac_paths;
    }
    let _ = weight;
    SpeedupReport {
        speedup: f / paths,
        path_fraction: paths,
        max_weight: classes[0].0.exp(),
    }
}
