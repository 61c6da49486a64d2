//! Top-K labelings via max-marginals and via branch-and-bound.
//!
//! Two routes to the K best labelings that, unlike the slot-expanded
//! dynamic programs in [`crate::chain`] and [`crate::tree`], only need
//! black-box primitives:
//!
//! * [`bmmf_topk`] works from a [`MaxMarginalProvider`]. It maintains a
//!   partition of the label space into constraint-defined cells, repeatedly
//!   extracts the best labeling not yet emitted by reading max-marginal
//!   tables, and splits the cell it came from. Each round costs at most two
//!   provider calls, so K labelings need at most 2K calls.
//! * [`branch_bound_topk`] works from an upper bound on the best score
//!   within a rectangular [`LabelSubset`]. Best-first search pops the
//!   highest-bound subset, emits singletons, and splits everything else.
//!
//! Both verify their own invariants as they run (candidate scores must match
//! the freshly computed cell optimum; emitted scores must be non-increasing)
//! and fail with [`Error::Integrity`] instead of returning a wrong list.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::graph::{
    is_feasible_score, Constraint, LabelDomain, Labeling, PotentialTable, NEG_INF_SCORE,
    DEFAULT_ENUM_CAP,
};

/// Max-marginal tables: `tables[v][j]` is the best total score among
/// labelings with y_v = j; `best` is the overall optimum.
#[derive(Clone, Debug)]
pub struct MaxMarginals {
    pub tables: Vec<Vec<f64>>,
    pub best: f64,
}

/// Source of max-marginal tables under node-level constraints.
///
/// `compute` must return `Err(Error::EmptyLabelSpace { .. })` when the
/// constraints leave some node without a feasible label, and tables whose
/// infeasible entries fail [`is_feasible_score`] otherwise.
pub trait MaxMarginalProvider {
    fn domain(&self) -> &LabelDomain;
    fn compute(&mut self, constraints: &[Constraint]) -> Result<MaxMarginals>;
}

/// Max-marginals by full enumeration; the oracle other providers are
/// measured against.
pub fn exhaustive_max_marginals(pot: &PotentialTable) -> Result<MaxMarginals> {
    let rows = pot.enumerate_scored()?;
    let mut tables: Vec<Vec<f64>> = (0..pot.num_nodes())
        .map(|v| vec![NEG_INF_SCORE; pot.domain().size(v)])
        .collect();
    for (s, y) in &rows {
        let s = s.max(NEG_INF_SCORE);
        for (v, &j) in y.labels.iter().enumerate() {
            if s > tables[v][j] {
                tables[v][j] = s;
            }
        }
    }
    let best = tables
        .iter()
        .flat_map(|t| t.iter())
        .fold(NEG_INF_SCORE, |a, &b| a.max(b));
    Ok(MaxMarginals { tables, best })
}

/// [`MaxMarginalProvider`] backed by enumeration over a score table.
pub struct ExhaustiveProvider {
    pot: PotentialTable,
    calls: usize,
}

impl ExhaustiveProvider {
    pub fn new(pot: PotentialTable) -> Self {
        Self { pot, calls: 0 }
    }

    /// Number of `compute` invocations so far, successful or not.
    pub fn calls(&self) -> usize {
        self.calls
    }
}

impl MaxMarginalProvider for ExhaustiveProvider {
    fn domain(&self) -> &LabelDomain {
        self.pot.domain()
    }

    fn compute(&mut self, constraints: &[Constraint]) -> Result<MaxMarginals> {
        self.calls += 1;
        let constrained = self.pot.constrain(constraints)?;
        exhaustive_max_marginals(&constrained)
    }
}

/// Per-node argmax of max-marginal tables, with an ambiguity flag.
///
/// Ties resolve to the smallest label; `ambiguous` reports whether any node
/// had a second label within 1e-12 of its maximum, in which case the
/// returned labeling is one of several consistent optima.
pub fn decode_from_max_marginals(mm: &MaxMarginals) -> (Labeling, bool) {
    let mut labels = Vec::with_capacity(mm.tables.len());
    let mut ambiguous = false;
    for t in &mm.tables {
        let mut arg = 0usize;
        for (j, &x) in t.iter().enumerate() {
            if x > t[arg] {
                arg = j;
            }
        }
        let near: usize = t.iter().filter(|&&x| (x - t[arg]).abs() <= 1e-12).count();
        if near > 1 {
            ambiguous = true;
        }
        labels.push(arg);
    }
    (Labeling::new(labels), ambiguous)
}

/// Result of [`bmmf_topk`].
#[derive(Clone, Debug)]
pub struct BmmfOutcome {
    /// Labelings with their scores, best first.
    pub items: Vec<(f64, Labeling)>,
    /// Provider invocations consumed; at most `2 * K`.
    pub provider_calls: usize,
}

struct BmmfPartition {
    constraints: Vec<Constraint>,
    mm: MaxMarginals,
    decoded: Labeling,
    alive: bool,
}

/// K best labelings through repeated max-marginal computations.
///
/// Round k >= 2 scans all live cells for the best (node, label) pair that
/// differs from the cell's decoded optimum and was not already used for a
/// split; ties resolve by (cell index, node, label) ascending. The winning
/// pair spawns a new cell requiring it (one provider call) and the source
/// cell forbids it (a second call; an emptied source cell dies). Candidate
/// values must agree with the spawned cell's optimum to 1e-9, and emitted
/// scores must be non-increasing, else [`Error::Integrity`].
pub fn bmmf_topk(provider: &mut dyn MaxMarginalProvider, k: usize) -> Result<BmmfOutcome> {
    if k == 0 {
        return Err(Error::InvalidInput("top-K extraction needs k >= 1".into()));
    }
    let mut calls = 0usize;
    let mm = provider.compute(&[])?;
    calls += 1;
    let (decoded, _) = decode_from_max_marginals(&mm);
    let mut items = vec![(mm.best, decoded.clone())];
    let mut cells = vec![BmmfPartition { constraints: Vec::new(), mm, decoded, alive: true }];
    let mut used: BTreeSet<(usize, usize, usize)> = BTreeSet::new();

    while items.len() < k {
        // Best unused disagreement across live cells; iteration order plus
        // strict improvement gives the (value desc, cell, node, label
        // ascending) tie rule.
        let mut best: Option<(f64, usize, usize, usize)> = None;
        for (s, cell) in cells.iter().enumerate() {
            if !cell.alive {
                continue;
            }
            for (v, table) in cell.mm.tables.iter().enumerate() {
                for (j, &val) in table.iter().enumerate() {
                    if j == cell.decoded.labels[v]
                        || !is_feasible_score(val)
                        || used.contains(&(v, j, s))
                    {
                        continue;
                    }
                    if best.is_none_or(|(bv, _, _, _)| val > bv) {
                        best = Some((val, s, v, j));
                    }
                }
            }
        }
        let Some((val, s, v, j)) = best else {
            break; // label space exhausted before reaching K
        };

        let mut spawned = cells[s].constraints.clone();
        spawned.push(Constraint::Require { node: v, label: j });
        let mm = provider.compute(&spawned)?;
        calls += 1;
        if (mm.best - val).abs() > 1e-9 * val.abs().max(1.0) {
            return Err(Error::Integrity(format!(
                "candidate value {val} disagrees with its cell optimum {}",
                mm.best
            )));
        }
        if let Some(&(prev, _)) = items.last() {
            if mm.best > prev + 1e-9 * prev.abs().max(1.0) {
                return Err(Error::Integrity(format!(
                    "emitted scores must be non-increasing: {} after {prev}",
                    mm.best
                )));
            }
        }
        let (decoded, _) = decode_from_max_marginals(&mm);
        items.push((mm.best, decoded.clone()));
        cells.push(BmmfPartition { constraints: spawned, mm, decoded, alive: true });
        used.insert((v, j, s));

        cells[s].constraints.push(Constraint::Forbid { node: v, label: j });
        let source_constraints = cells[s].constraints.clone();
        match provider.compute(&source_constraints) {
            Ok(mm) => {
                let (decoded, _) = decode_from_max_marginals(&mm);
                cells[s].mm = mm;
                cells[s].decoded = decoded;
            }
            Err(Error::EmptyLabelSpace { .. }) => {
                cells[s].alive = false;
            }
            Err(e) => return Err(e),
        }
        calls += 1;
    }
    Ok(BmmfOutcome { items, provider_calls: calls })
}

/// Rectangular subset of the label space: an allowed-label list per node.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelSubset {
    pub allowed: Vec<Vec<usize>>,
}

impl LabelSubset {
    /// The full label space of a domain.
    pub fn full(domain: &LabelDomain) -> Self {
        Self { allowed: (0..domain.num_nodes()).map(|v| (0..domain.size(v)).collect()).collect() }
    }

    pub fn is_singleton(&self) -> bool {
        self.allowed.iter().all(|a| a.len() == 1)
    }

    /// The unique labeling of a singleton subset.
    pub fn realize(&self) -> Labeling {
        debug_assert!(self.is_singleton());
        Labeling::new(self.allowed.iter().map(|a| a[0]).collect())
    }

    pub fn size(&self) -> u128 {
        self.allowed.iter().fold(1u128, |acc, a| acc.saturating_mul(a.len() as u128))
    }
}

/// How [`branch_bound_topk`] splits a non-singleton subset in two.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SplitRule {
    /// First node with more than one allowed label; its list is halved
    /// (first half rounds up).
    FirstFork,
    /// Node with the most allowed labels (ties to the smaller index); its
    /// first label is peeled off into the left part.
    PeelWidest,
}

impl SplitRule {
    /// Splits into two disjoint, non-empty parts; `None` on singletons.
    pub fn split(&self, subset: &LabelSubset) -> Option<(LabelSubset, LabelSubset)> {
        let node = match self {
            SplitRule::FirstFork => subset.allowed.iter().position(|a| a.len() > 1)?,
            SplitRule::PeelWidest => {
                let (node, len) = subset
                    .allowed
                    .iter()
                    .enumerate()
                    .map(|(v, a)| (v, a.len()))
                    .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))?;
                if len < 2 {
                    return None;
                }
                node
            }
        };
        let list = &subset.allowed[node];
        let cut = match self {
            SplitRule::FirstFork => list.len().div_ceil(2),
            SplitRule::PeelWidest => 1,
        };
        let mut left = subset.clone();
        let mut right = subset.clone();
        left.allowed[node] = list[..cut].to_vec();
        right.allowed[node] = list[cut..].to_vec();
        Some((left, right))
    }
}

/// Decomposable bound: per-node maxima plus per-edge maxima over the subset.
///
/// Upper-bounds every labeling in the subset because each term bounds its
/// contribution independently; on singleton subsets every max has a single
/// choice, so the bound collapses to the exact score. Clamped to the finite
/// sentinel so accumulated sentinel entries never reach -inf.
pub fn independent_bound(pot: &PotentialTable, subset: &LabelSubset) -> Result<f64> {
    check_subset(pot, subset)?;
    let mut acc = 0.0f64;
    for v in 0..pot.num_nodes() {
        let node_max = subset.allowed[v]
            .iter()
            .map(|&j| pot.node_score(v, j))
            .fold(f64::NEG_INFINITY, f64::max);
        acc += node_max;
        if let Some(u) = pot.topology().parent(v) {
            let mut edge_max = f64::NEG_INFINITY;
            for &j in &subset.allowed[v] {
                for &i in &subset.allowed[u] {
                    edge_max = edge_max.max(pot.edge_score(v, j, i));
                }
            }
            acc += edge_max;
        }
    }
    Ok(acc.max(NEG_INF_SCORE))
}

/// Exact bound: the true best score in the subset, by enumeration.
pub fn exact_bound(pot: &PotentialTable, subset: &LabelSubset) -> Result<f64> {
    check_subset(pot, subset)?;
    let size = subset.size();
    if size > DEFAULT_ENUM_CAP {
        return Err(Error::SpaceTooLarge { size, cap: DEFAULT_ENUM_CAP });
    }
    let p = pot.num_nodes();
    let mut idx = vec![0usize; p];
    let mut best = f64::NEG_INFINITY;
    loop {
        let y = Labeling::new((0..p).map(|v| subset.allowed[v][idx[v]]).collect());
        best = best.max(pot.score(&y)?);
        let mut v = p;
        loop {
            if v == 0 {
                return Ok(best.max(NEG_INF_SCORE));
            }
            v -= 1;
            idx[v] += 1;
            if idx[v] < subset.allowed[v].len() {
                break;
            }
            idx[v] = 0;
        }
    }
}

fn check_subset(pot: &PotentialTable, subset: &LabelSubset) -> Result<()> {
    if subset.allowed.len() != pot.num_nodes() {
        return Err(Error::InvalidInput("subset does not cover every node".into()));
    }
    for (v, a) in subset.allowed.iter().enumerate() {
        if a.is_empty() {
            return Err(Error::EmptyLabelSpace { node: v });
        }
        if a.iter().any(|&j| j >= pot.domain().size(v)) {
            return Err(Error::InvalidInput(format!("subset at node {v} has out-of-range labels")));
        }
    }
    Ok(())
}

/// Result of [`branch_bound_topk`].
#[derive(Clone, Debug)]
pub struct BranchBoundOutcome {
    /// Labelings with their scores, best first.
    pub items: Vec<(f64, Labeling)>,
    /// Subsets popped from the queue, a proxy for bound evaluations.
    pub pops: usize,
}

struct HeapItem {
    bound: f64,
    seq: usize,
    subset: LabelSubset,
}

impl PartialEq for HeapItem {
    fn eq(&self, other: &Self) -> bool {
        self.bound == other.bound && self.seq == other.seq
    }
}
impl Eq for HeapItem {}
impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        // Max-heap: larger bound first, then earlier insertion.
        self.bound.total_cmp(&other.bound).then(other.seq.cmp(&self.seq))
    }
}

/// K best labelings by best-first search over label subsets.
///
/// `bound` must be finite on non-empty subsets, dominate the true maximum of
/// the subset, and be exact on singletons ([`independent_bound`] and
/// [`exact_bound`] both qualify). Popped singletons are emitted after an
/// integrity check (their true score must not exceed the recorded bound, and
/// emission must be non-increasing); other subsets are split with `rule` and
/// re-queued. Stops after K emissions or queue exhaustion.
pub fn branch_bound_topk(
    pot: &PotentialTable,
    k: usize,
    rule: SplitRule,
    mut bound: impl FnMut(&PotentialTable, &LabelSubset) -> Result<f64>,
) -> Result<BranchBoundOutcome> {
    if k == 0 {
        return Err(Error::InvalidInput("top-K extraction needs k >= 1".into()));
    }
    let full = LabelSubset::full(pot.domain());
    let b0 = bound(pot, &full)?;
    if !b0.is_finite() {
        return Err(Error::Integrity(format!("bound must be finite, got {b0}")));
    }
    let mut heap = std::collections::BinaryHeap::new();
    heap.push(HeapItem { bound: b0, seq: 0, subset: full });
    let mut seq = 1usize;
    let mut pops = 0usize;
    let mut items: Vec<(f64, Labeling)> = Vec::new();
    while let Some(item) = heap.pop() {
        pops += 1;
        if item.subset.is_singleton() {
            let y = item.subset.realize();
            let score = pot.score(&y)?;
            let tol = 1e-9 * item.bound.abs().max(1.0);
            if score > item.bound + tol {
                return Err(Error::Integrity(format!(
                    "singleton score {score} exceeds its bound {}",
                    item.bound
                )));
            }
            if is_feasible_score(score) {
                if let Some(&(prev, _)) = items.last() {
                    let tol = 1e-9 * prev.abs().max(1.0);
                    if score > prev + tol {
                        return Err(Error::Integrity(format!(
                            "emitted scores must be non-increasing: {score} after {prev}"
                        )));
                    }
                }
                items.push((score, y));
                if items.len() == k {
                    break;
                }
            }
        } else {
            let (left, right) = rule
                .split(&item.subset)
                .expect("non-singleton subsets always split");
            for part in [left, right] {
                let b = bound(pot, &part)?;
                if !b.is_finite() {
                    return Err(Error::Integrity(format!("bound must be finite, got {b}")));
                }
                heap.push(HeapItem { bound: b, seq, subset: part });
                seq += 1;
            }
        }
    }
    Ok(BranchBoundOutcome { items, pops })
}
