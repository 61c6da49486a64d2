//! Exact and smoothed inference on chain models.
//!
//! All routines here are specialized to chains (node v's parent is v - 1)
//! and run in O(p * L^2) time for p nodes and L labels:
//!
//! * [`viterbi`] — max-sum with backtracking;
//! * [`topk_viterbi`] — K best distinct labelings by slot-expanded max-sum;
//! * [`forward_backward`] — log-space sum-product giving the partition
//!   function and exact node/edge marginals;
//! * [`exp_oracle_chain`] — entropy-smoothed max via forward-backward on
//!   temperature-scaled scores; the marginals are the gradient of the
//!   smoothed value in the score-table entries;
//! * [`topk_oracle_chain`] — top-K squared-l2 surrogate; the projection
//!   weights over the K labelings play the gradient role.
//!
//! Reported labeling scores are always recomputed with
//! [`PotentialTable::score`], so they match brute-force enumeration bitwise.

use crate::error::{Error, Result};
use crate::graph::{is_feasible_score, Labeling, PotentialTable};
use crate::smoothing::{log_sum_exp, topk_surrogate};

/// Partition function and exact marginals of a Gibbs distribution.
///
/// `node[v][j]` is P(y_v = j); `edge[v][j][i]` is P(y_v = j, y_parent = i)
/// with `edge[root] = None`. Probabilities, not logs.
#[derive(Clone, Debug)]
pub struct Marginals {
    pub log_z: f64,
    pub node: Vec<Vec<f64>>,
    pub edge: Vec<Option<Vec<Vec<f64>>>>,
}

fn require_chain(pot: &PotentialTable) -> Result<()> {
    let t = pot.topology();
    for v in 0..t.num_nodes() {
        let want = if v == 0 { None } else { Some(v - 1) };
        if t.parent(v) != want {
            return Err(Error::InvalidInput(
                "chain inference requires parent(v) = v - 1 with root 0".into(),
            ));
        }
    }
    Ok(())
}

/// Highest-scoring labeling of a chain.
///
/// Ties at each maximization resolve to the smallest label index. The
/// returned score is recomputed from the table, not read off the recursion.
pub fn viterbi(pot: &PotentialTable) -> Result<(f64, Labeling)> {
    require_chain(pot)?;
    let p = pot.num_nodes();
    let mut m: Vec<Vec<f64>> = Vec::with_capacity(p);
    let mut bp: Vec<Vec<usize>> = Vec::with_capacity(p);
    m.push(pot.node_scores(0).to_vec());
    bp.push(vec![0; pot.domain().size(0)]);
    for v in 1..p {
        let prev = &m[v - 1];
        let mut mv = Vec::with_capacity(pot.domain().size(v));
        let mut bv = Vec::with_capacity(pot.domain().size(v));
        for j in 0..pot.domain().size(v) {
            let mut best = f64::NEG_INFINITY;
            let mut arg = 0usize;
            for (i, &pi) in prev.iter().enumerate() {
                let cand = pi + pot.edge_score(v, j, i);
                if cand > best {
                    best = cand;
                    arg = i;
                }
            }
            mv.push(pot.node_score(v, j) + best);
            bv.push(arg);
        }
        m.push(mv);
        bp.push(bv);
    }
    let last = &m[p - 1];
    let mut best_j = 0usize;
    for j in 1..last.len() {
        if last[j] > last[best_j] {
            best_j = j;
        }
    }
    let mut labels = vec![0usize; p];
    labels[p - 1] = best_j;
    for v in (1..p).rev() {
        labels[v - 1] = bp[v][labels[v]];
    }
    let y = Labeling::new(labels);
    let score = pot.score(&y)?;
    if !is_feasible_score(score) {
        return Err(Error::EmptyLabelSpace { node: 0 });
    }
    Ok((score, y))
}

/// Candidate in the slot-expanded k-best recursions: score plus backtracking origin.
#[derive(Clone, Copy, Debug)]
struct Cand {
    score: f64,
    label: usize,
    slot: usize,
}

/// Keeps the best `k` candidates under the fixed tie rule:
/// score descending, then label ascending, then slot ascending.
fn keep_top_k(mut cands: Vec<Cand>, k: usize) -> Vec<Cand> {
    cands.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then(a.label.cmp(&b.label))
            .then(a.slot.cmp(&b.slot))
    });
    cands.truncate(k);
    cands
}

/// K best distinct labelings, sorted by score descending.
///
/// Fewer than K labelings may come back when the label space is smaller
/// than K or constraints make part of it infeasible. Scores are recomputed
/// from the table after backtracking.
pub fn topk_viterbi(pot: &PotentialTable, k: usize) -> Result<Vec<(f64, Labeling)>> {
    require_chain(pot)?;
    if k == 0 {
        return Err(Error::InvalidInput("top-K inference needs k >= 1".into()));
    }
    let p = pot.num_nodes();
    // slots[v][j] holds at most k partial labelings ending with y_v = j,
    // best first; `label`/`slot` point into node v - 1.
    let mut slots: Vec<Vec<Vec<Cand>>> = Vec::with_capacity(p);
    let first: Vec<Vec<Cand>> = (0..pot.domain().size(0))
        .map(|j| vec![Cand { score: pot.node_score(0, j), label: 0, slot: 0 }])
        .collect();
    slots.push(first);
    for v in 1..p {
        let mut level = Vec::with_capacity(pot.domain().size(v));
        for j in 0..pot.domain().size(v) {
            let mut cands = Vec::new();
            for i in 0..pot.domain().size(v - 1) {
                let e = pot.edge_score(v, j, i);
                for (s, c) in slots[v - 1][i].iter().enumerate() {
                    cands.push(Cand {
                        score: c.score + e + pot.node_score(v, j),
                        label: i,
                        slot: s,
                    });
                }
            }
            level.push(keep_top_k(cands, k));
        }
        slots.push(level);
    }
    let mut finals = Vec::new();
    for j in 0..pot.domain().size(p - 1) {
        for (s, c) in slots[p - 1][j].iter().enumerate() {
            finals.push(Cand { score: c.score, label: j, slot: s });
        }
    }
    let finals = keep_top_k(finals, k);
    let mut out = Vec::with_capacity(finals.len());
    for f in finals {
        if !is_feasible_score(f.score) {
            continue;
        }
        let mut labels = vec![0usize; p];
        labels[p - 1] = f.label;
        let mut slot = f.slot;
        for v in (1..p).rev() {
            let c = slots[v][labels[v]][slot];
            labels[v - 1] = c.label;
            slot = c.slot;
        }
        let y = Labeling::new(labels);
        let score = pot.score(&y)?;
        out.push((score, y));
    }
    // Re-summation can round two near-tied scores into the opposite order
    // from the DP's; a stable re-sort restores the documented invariant
    // while keeping the DP tie order among equal scores.
    out.sort_by(|a, b| b.0.total_cmp(&a.0));
    Ok(out)
}

/// Log-space sum-product on a chain: partition function and marginals.
///
/// Forward messages `la[v][j]` accumulate over prefixes ending at (v, j);
/// backward messages `lb[v][j]` over suffixes. Node and edge marginals come
/// from the standard constant-time combinations of the two.
pub fn forward_backward(pot: &PotentialTable) -> Result<Marginals> {
    require_chain(pot)?;
    let p = pot.num_nodes();
    let mut la: Vec<Vec<f64>> = Vec::with_capacity(p);
    la.push(pot.node_scores(0).to_vec());
    let mut scratch = Vec::new();
    for v in 1..p {
        let mut lv = Vec::with_capacity(pot.domain().size(v));
        for j in 0..pot.domain().size(v) {
            scratch.clear();
            for i in 0..pot.domain().size(v - 1) {
                scratch.push(la[v - 1][i] + pot.edge_score(v, j, i));
            }
            lv.push(pot.node_score(v, j) + log_sum_exp(&scratch));
        }
        la.push(lv);
    }
    let mut lb: Vec<Vec<f64>> = vec![Vec::new(); p];
    lb[p - 1] = vec![0.0; pot.domain().size(p - 1)];
    for v in (0..p.saturating_sub(1)).rev() {
        let mut lv = Vec::with_capacity(pot.domain().size(v));
        for i in 0..pot.domain().size(v) {
            scratch.clear();
            for j in 0..pot.domain().size(v + 1) {
                scratch.push(pot.edge_score(v + 1, j, i) + pot.node_score(v + 1, j) + lb[v + 1][j]);
            }
            lv.push(log_sum_exp(&scratch));
        }
        lb[v] = lv;
    }
    let log_z = log_sum_exp(&la[p - 1]);
    if !log_z.is_finite() {
        return Err(Error::InvalidInput("partition function is not finite; no feasible labeling".into()));
    }
    let node: Vec<Vec<f64>> = (0..p)
        .map(|v| {
            (0..pot.domain().size(v))
                .map(|j| (la[v][j] + lb[v][j] - log_z).exp())
                .collect()
        })
        .collect();
    let mut edge: Vec<Option<Vec<Vec<f64>>>> = vec![None];
    for v in 1..p {
        let mut table = vec![vec![0.0; pot.domain().size(v - 1)]; pot.domain().size(v)];
        for (j, row) in table.iter_mut().enumerate() {
            for (i, cell) in row.iter_mut().enumerate() {
                let l = la[v - 1][i]
                    + pot.edge_score(v, j, i)
                    + pot.node_score(v, j)
                    + lb[v][j]
                    - log_z;
                *cell = l.exp();
            }
        }
        edge.push(Some(table));
    }
    Ok(Marginals { log_z, node, edge })
}

/// Entropy-smoothed max over all labelings of a chain.
///
/// Returns `mu * log Z(psi / mu)` together with the Gibbs marginals at
/// temperature mu, which are exactly the gradient of the value with respect
/// to the node and edge score entries.
pub fn exp_oracle_chain(pot: &PotentialTable, mu: f64) -> Result<(f64, Marginals)> {
    let scaled = pot.scaled(mu)?;
    let marg = forward_backward(&scaled)?;
    Ok((mu * marg.log_z, marg))
}

/// Top-K squared-l2 surrogate of the max over labelings of a chain.
///
/// Runs k-best inference, drops infeasible slots, and smooths the resulting
/// score list. Returns the surrogate value and `(weight, labeling)` pairs;
/// weights are the simplex projection of the scores divided by mu, so the
/// gradient in the score entries is the weight-weighted sum of labeling
/// indicators.
pub fn topk_oracle_chain(
    pot: &PotentialTable,
    mu: f64,
    k: usize,
) -> Result<(f64, Vec<(f64, Labeling)>)> {
    let best = topk_viterbi(pot, k)?;
    if best.is_empty() {
        return Err(Error::EmptyLabelSpace { node: 0 });
    }
    let scores: Vec<f64> = best.iter().map(|(s, _)| *s).collect();
    let sm = topk_surrogate(&scores, mu)?;
    let pairs = sm
        .weights
        .into_iter()
        .zip(best)
        .map(|(w, (_, y))| (w, y))
        .collect();
    Ok((sm.value, pairs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::test_support::*;
    use crate::graph::Constraint;

    /// Brute-force reference for log Z from the enumeration oracle.
    fn enum_log_z(pot: &PotentialTable, mu: f64) -> f64 {
        let scores: Vec<f64> = pot
            .enumerate_scored()
            .unwrap()
            .into_iter()
            .map(|(s, _)| s / mu)
            .collect();
        log_sum_exp(&scores)
    }

    #[test]
    fn viterbi_reference_instance() {
        let pot = reference_chain();
        let (s, y) = viterbi(&pot).unwrap();
        assert_eq!(s, 3.0);
        assert_eq!(y.labels, vec![0, 1]);
    }

    #[test]
    fn viterbi_matches_enumeration_bitwise() {
        let mut rng = seeded(71);
        for _ in 0..200 {
            let pot = random_chain(&mut rng, 6, 4);
            let (s, y) = viterbi(&pot).unwrap();
            let rows = pot.enumerate_scored().unwrap();
            assert_eq!(s, rows[0].0, "scores must match bitwise");
            assert_eq!(y, rows[0].1);
        }
    }

    #[test]
    fn viterbi_single_node() {
        let pot = PotentialTable::new_chain(vec![vec![-1.0, 4.0, 2.0]], vec![]).unwrap();
        let (s, y) = viterbi(&pot).unwrap();
        assert_eq!(s, 4.0);
        assert_eq!(y.labels, vec![1]);
    }

    #[test]
    fn viterbi_respects_constraints() {
        let pot = reference_chain();
        let c = pot.constrain(&[Constraint::Require { node: 0, label: 1 }]).unwrap();
        let (s, y) = viterbi(&c).unwrap();
        assert_eq!(s, 2.5);
        assert_eq!(y.labels, vec![1, 1]);
        let c = pot.constrain(&[Constraint::Forbid { node: 1, label: 1 }]).unwrap();
        let (s, y) = viterbi(&c).unwrap();
        assert_eq!(s, 1.0);
        assert_eq!(y.labels, vec![0, 0]);
    }

    #[test]
    fn topk_reference_instance() {
        let pot = reference_chain();
        let rows = topk_viterbi(&pot, 4).unwrap();
        let expect = [
            (3.0, vec![0, 1]),
            (2.5, vec![1, 1]),
            (1.0, vec![0, 0]),
            (0.0, vec![1, 0]),
        ];
        assert_eq!(rows.len(), 4);
        for ((s, y), (es, ey)) in rows.iter().zip(expect.iter()) {
            assert_eq!(s, es);
            assert_eq!(&y.labels, ey);
        }
    }

    #[test]
    fn topk_matches_enumeration_prefix() {
        let mut rng = seeded(72);
        for _ in 0..200 {
            let pot = random_chain(&mut rng, 6, 4);
            use rand::Rng;
            let k = rng.random_range(1..=10);
            let rows = topk_viterbi(&pot, k).unwrap();
            let brute = pot.enumerate_scored().unwrap();
            assert_eq!(rows.len(), k.min(brute.len()));
            for ((s, y), (es, ey)) in rows.iter().zip(brute.iter()) {
                assert_eq!(s, es, "k-best scores must match enumeration bitwise");
                assert_eq!(y, ey);
            }
        }
    }

    #[test]
    fn topk_scores_stay_sorted_under_resummation_ties() {
        // Scores drawn from a small decimal grid make many paths sum to the
        // same real value through different rounding orders; the reported
        // ranking must stay non-increasing and the smoothed top-K oracle
        // must accept it.
        use rand::Rng;
        let mut rng = seeded(1);
        let grid = [0.1f64, 0.2, 0.3, 0.7, 0.9];
        for _ in 0..50 {
            let node: Vec<Vec<f64>> = (0..6)
                .map(|_| (0..3).map(|_| grid[rng.random_range(0..grid.len())]).collect())
                .collect();
            let pair: Vec<Vec<Vec<f64>>> = (0..5)
                .map(|_| {
                    (0..3)
                        .map(|_| {
                            (0..3).map(|_| grid[rng.random_range(0..grid.len())]).collect()
                        })
                        .collect()
                })
                .collect();
            let pot = PotentialTable::new_chain(node, pair).unwrap();
            let rows = topk_viterbi(&pot, 40).unwrap();
            assert!(
                rows.windows(2).all(|w| w[0].0 >= w[1].0),
                "k-best scores came back out of order"
            );
            topk_oracle_chain(&pot, 0.05, 40).unwrap();
        }
    }

    #[test]
    fn topk_labelings_are_distinct() {
        let mut rng = seeded(73);
        for _ in 0..50 {
            let pot = random_chain(&mut rng, 5, 3);
            let rows = topk_viterbi(&pot, 8).unwrap();
            let mut seen = std::collections::BTreeSet::new();
            for (_, y) in &rows {
                assert!(seen.insert(y.clone()), "duplicate labeling in k-best output");
            }
        }
    }

    #[test]
    fn topk_excludes_constrained_out_labelings() {
        let pot = reference_chain();
        let c = pot.constrain(&[Constraint::Forbid { node: 1, label: 1 }]).unwrap();
        let rows = topk_viterbi(&c, 10).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].0, 1.0);
        assert_eq!(rows[0].1.labels, vec![0, 0]);
        assert_eq!(rows[1].1.labels, vec![1, 0]);
    }

    #[test]
    fn forward_backward_reference_instance() {
        let pot = reference_chain();
        let m = forward_backward(&pot).unwrap();
        // Hand-computed from the four labeling scores 3, 2.5, 1, 0.
        let z = 3f64.exp() + 2.5f64.exp() + 1f64.exp() + 0f64.exp();
        assert!((m.log_z - z.ln()).abs() < 1e-12);
        let p00 = (3f64.exp() + 1f64.exp()) / z;
        assert!((m.node[0][0] - p00).abs() < 1e-12);
        let p11 = (3f64.exp() + 2.5f64.exp()) / z;
        assert!((m.node[1][1] - p11).abs() < 1e-12);
        let e10 = m.edge[1].as_ref().unwrap();
        assert!((e10[1][0] - 3f64.exp() / z).abs() < 1e-12);
        assert!((e10[1][1] - 2.5f64.exp() / z).abs() < 1e-12);
    }

    #[test]
    fn forward_backward_matches_enumeration() {
        let mut rng = seeded(74);
        for _ in 0..100 {
            let pot = random_chain(&mut rng, 6, 4);
            let m = forward_backward(&pot).unwrap();
            let rows = pot.enumerate_scored().unwrap();
            let scores: Vec<f64> = rows.iter().map(|(s, _)| *s).collect();
            let log_z = log_sum_exp(&scores);
            assert!(
                (m.log_z - log_z).abs() <= 1e-12 * log_z.abs().max(1.0),
                "log Z mismatch: {} vs {}",
                m.log_z,
                log_z
            );
            let p = pot.num_nodes();
            for v in 0..p {
                for j in 0..pot.domain().size(v) {
                    let brute: f64 = rows
                        .iter()
                        .filter(|(_, y)| y.labels[v] == j)
                        .map(|(s, _)| (s - log_z).exp())
                        .sum();
                    assert!(
                        (m.node[v][j] - brute).abs() < 1e-12,
                        "node marginal mismatch at ({v},{j})"
                    );
                }
            }
            for v in 1..p {
                let table = m.edge[v].as_ref().unwrap();
                for j in 0..pot.domain().size(v) {
                    for i in 0..pot.domain().size(v - 1) {
                        let brute: f64 = rows
                            .iter()
                            .filter(|(_, y)| y.labels[v] == j && y.labels[v - 1] == i)
                            .map(|(s, _)| (s - log_z).exp())
                            .sum();
                        assert!(
                            (table[j][i] - brute).abs() < 1e-12,
                            "edge marginal mismatch at ({v},{j},{i})"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn marginals_are_distributions() {
        let mut rng = seeded(75);
        for _ in 0..50 {
            let pot = random_chain(&mut rng, 6, 4);
            let m = forward_backward(&pot).unwrap();
            for v in 0..pot.num_nodes() {
                let s: f64 = m.node[v].iter().sum();
                assert!((s - 1.0).abs() < 1e-10);
                assert!(m.node[v].iter().all(|&x| x >= 0.0));
                if let Some(t) = &m.edge[v] {
                    let se: f64 = t.iter().flatten().sum();
                    assert!((se - 1.0).abs() < 1e-10);
                    // Row/column sums of the pair table recover the node
                    // marginals at both endpoints.
                    for j in 0..pot.domain().size(v) {
                        let row: f64 = t[j].iter().sum();
                        assert!((row - m.node[v][j]).abs() < 1e-10);
                    }
                    for i in 0..pot.domain().size(v - 1) {
                        let col: f64 = t.iter().map(|r| r[i]).sum();
                        assert!((col - m.node[v - 1][i]).abs() < 1e-10);
                    }
                }
            }
        }
    }

    #[test]
    fn exp_oracle_matches_enumeration_and_sandwich() {
        let mut rng = seeded(76);
        for _ in 0..50 {
            let pot = random_chain(&mut rng, 5, 3);
            let hard = pot.enumerate_scored().unwrap()[0].0;
            let m_count = pot.domain().total_labelings() as f64;
            for mu in [0.01, 0.1, 1.0, 10.0] {
                let (value, marg) = exp_oracle_chain(&pot, mu).unwrap();
                let want = mu * enum_log_z(&pot, mu);
                assert!(
                    (value - want).abs() <= 1e-9 * want.abs().max(1.0),
                    "smoothed value {value} vs enumeration {want} at mu={mu}"
                );
                assert!(value >= hard - 1e-9);
                assert!(value <= hard + mu * m_count.ln() + 1e-9);
                for v in 0..pot.num_nodes() {
                    let s: f64 = marg.node[v].iter().sum();
                    assert!((s - 1.0).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn topk_oracle_sandwich_and_weights() {
        let mut rng = seeded(77);
        for _ in 0..50 {
            let pot = random_chain(&mut rng, 5, 3);
            let rows = pot.enumerate_scored().unwrap();
            let hard = rows[0].0;
            use rand::Rng;
            let k = rng.random_range(1..=6);
            for mu in [0.05, 0.5, 5.0] {
                let (value, pairs) = topk_oracle_chain(&pot, mu, k).unwrap();
                assert!(value >= hard - 1e-9, "surrogate must upper bound the max");
                let w_sum: f64 = pairs.iter().map(|(w, _)| *w).sum();
                assert!((w_sum - 1.0).abs() < 1e-9);
                // Never exceeds the full squared-l2 smoothing of all scores.
                let all: Vec<f64> = rows.iter().map(|(s, _)| *s).collect();
                let full = crate::smoothing::l2_smoothed_max(&all, mu).unwrap().value;
                assert!(value <= full + 1e-9);
            }
        }
    }

    #[test]
    fn exp_oracle_handles_constrained_tables() {
        let pot = reference_chain();
        let c = pot.constrain(&[Constraint::Forbid { node: 1, label: 1 }]).unwrap();
        for mu in [0.01, 0.5, 2.0] {
            let (value, marg) = exp_oracle_chain(&c, mu).unwrap();
            // Feasible scores are 1.0 and 0.0.
            let want = mu * log_sum_exp(&[1.0 / mu, 0.0]);
            assert!((value - want).abs() < 1e-9 * want.abs().max(1.0));
            assert!(marg.node[1][1].abs() < 1e-12, "forbidden label keeps zero mass");
        }
    }

    #[test]
    fn chain_functions_reject_tree_topology() {
        let t = crate::graph::TreeTopology::tree(vec![None, Some(0), Some(0)]).unwrap();
        let d = crate::graph::LabelDomain::new(vec![2, 2, 2]).unwrap();
        let pot = PotentialTable::new(
            t,
            d,
            vec![vec![0.0; 2]; 3],
            vec![None, Some(vec![vec![0.0; 2]; 2]), Some(vec![vec![0.0; 2]; 2])],
        )
        .unwrap();
        assert!(viterbi(&pot).is_err());
        assert!(forward_backward(&pot).is_err());
    }
}
