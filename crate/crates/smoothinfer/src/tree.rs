//! Exact and smoothed inference on rooted trees.
//!
//! Counterparts to the chain routines that accept any rooted tree topology.
//! The implementations are deliberately independent of the chain code —
//! message passing over `children()` lists in height order instead of a
//! linear sweep — so the two act as cross-checks on each other where their
//! domains overlap (a chain is a tree).
//!
//! * [`max_product_tree`] — best labeling by leaf-to-root max-sum;
//! * [`topk_max_product_tree`] — K best distinct labelings; per node the
//!   child lists are folded in, keeping the K best partial subtrees;
//! * [`sum_product_tree`] — log-space belief propagation for the partition
//!   function and exact node/edge marginals;
//! * [`exp_oracle_tree`] / [`topk_oracle_tree`] — the smoothed max oracles.
//!
//! Downward messages and edge marginals need "all children except one"
//! sums; those are built with prefix/suffix arrays rather than subtracting
//! one child's message, which would turn -inf - (-inf) into NaN on
//! constrained tables.

use crate::chain::Marginals;
use crate::error::{Error, Result};
use crate::graph::{is_feasible_score, Labeling, PotentialTable};
use crate::smoothing::{log_sum_exp, topk_surrogate};

/// Highest-scoring labeling of a rooted tree.
///
/// Ties at each maximization resolve to the smallest label index; the score
/// is recomputed from the table after backtracking.
pub fn max_product_tree(pot: &PotentialTable) -> Result<(f64, Labeling)> {
    let t = pot.topology().clone();
    let p = t.num_nodes();
    // up[v][jp] = best subtree score of v given parent label jp (includes
    // the v->parent edge); bp[v][jp] = v's label achieving it.
    let mut up: Vec<Vec<f64>> = vec![Vec::new(); p];
    let mut bp: Vec<Vec<usize>> = vec![Vec::new(); p];
    // own[v][j] = node score plus incoming child messages, kept for the root
    // and reused during backtracking.
    let mut own: Vec<Vec<f64>> = vec![Vec::new(); p];
    for v in t.order_by_height() {
        let lv = pot.domain().size(v);
        let mut o: Vec<f64> = (0..lv).map(|j| pot.node_score(v, j)).collect();
        for &c in t.children(v) {
            for (j, oj) in o.iter_mut().enumerate() {
                *oj += up[c][j];
            }
        }
        if let Some(u) = t.parent(v) {
            let lu = pot.domain().size(u);
            let mut msg = Vec::with_capacity(lu);
            let mut arg = Vec::with_capacity(lu);
            for jp in 0..lu {
                let mut best = f64::NEG_INFINITY;
                let mut a = 0usize;
                for (j, &oj) in o.iter().enumerate() {
                    let cand = oj + pot.edge_score(v, j, jp);
                    if cand > best {
                        best = cand;
                        a = j;
                    }
                }
                msg.push(best);
                arg.push(a);
            }
            up[v] = msg;
            bp[v] = arg;
        }
        own[v] = o;
    }
    let root = t.root();
    let mut best_j = 0usize;
    for j in 1..own[root].len() {
        if own[root][j] > own[root][best_j] {
            best_j = j;
        }
    }
    let mut labels = vec![0usize; p];
    labels[root] = best_j;
    // Assign children in root-to-leaf order (reverse height order).
    for v in t.order_by_height().into_iter().rev() {
        for &c in t.children(v) {
            labels[c] = bp[c][labels[v]];
        }
    }
    let y = Labeling::new(labels);
    let score = pot.score(&y)?;
    if !is_feasible_score(score) {
        return Err(Error::EmptyLabelSpace { node: root });
    }
    Ok((score, y))
}

/// One of the K best realizations of a subtree, given its root's label.
#[derive(Clone, Debug)]
struct Partial {
    score: f64,
    /// Per child of this node, in `children()` order: the child's label and
    /// which of the child's own partials realizes its subtree.
    choice: Vec<(usize, usize)>,
}

/// K best distinct labelings of a rooted tree, sorted by score descending.
///
/// Scores are recomputed from the table after realization, so they compare
/// bitwise against enumeration.
pub fn topk_max_product_tree(pot: &PotentialTable, k: usize) -> Result<Vec<(f64, Labeling)>> {
    if k == 0 {
        return Err(Error::InvalidInput("top-K inference needs k >= 1".into()));
    }
    let t = pot.topology().clone();
    let p = t.num_nodes();
    // up[v][j] = up to k best partials for subtree(v) given y_v = j,
    // excluding the edge to v's parent.
    let mut up: Vec<Vec<Vec<Partial>>> = vec![Vec::new(); p];
    for v in t.order_by_height() {
        let lv = pot.domain().size(v);
        let mut lists = Vec::with_capacity(lv);
        for j in 0..lv {
            let mut partials =
                vec![Partial { score: pot.node_score(v, j), choice: Vec::new() }];
            for &c in t.children(v) {
                // Best (label, slot) options for child c under parent label j.
                let mut options: Vec<(f64, usize, usize)> = Vec::new();
                for jc in 0..pot.domain().size(c) {
                    let e = pot.edge_score(c, jc, j);
                    for (s, part) in up[c][jc].iter().enumerate() {
                        options.push((part.score + e, jc, s));
                    }
                }
                options.sort_by(|a, b| {
                    b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2))
                });
                options.truncate(k);
                let mut combined = Vec::with_capacity(partials.len() * options.len());
                for (pi, part) in partials.iter().enumerate() {
                    for (oi, opt) in options.iter().enumerate() {
                        combined.push((part.score + opt.0, pi, oi));
                    }
                }
                combined.sort_by(|a, b| {
                    b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2))
                });
                combined.truncate(k);
                partials = combined
                    .into_iter()
                    .map(|(score, pi, oi)| {
                        let mut choice = partials[pi].choice.clone();
                        choice.push((options[oi].1, options[oi].2));
                        Partial { score, choice }
                    })
                    .collect();
            }
            lists.push(partials);
        }
        up[v] = lists;
    }
    let root = t.root();
    let mut finals: Vec<(f64, usize, usize)> = Vec::new();
    for j in 0..pot.domain().size(root) {
        for (s, part) in up[root][j].iter().enumerate() {
            finals.push((part.score, j, s));
        }
    }
    finals.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    finals.truncate(k);

    fn realize(
        up: &[Vec<Vec<Partial>>],
        t: &crate::graph::TreeTopology,
        labels: &mut [usize],
        v: usize,
        j: usize,
        slot: usize,
    ) {
        labels[v] = j;
        let part = &up[v][j][slot];
        for (&c, &(jc, sc)) in t.children(v).iter().zip(&part.choice) {
            realize(up, t, labels, c, jc, sc);
        }
    }

    let mut out = Vec::with_capacity(finals.len());
    for (score, j, s) in finals {
        if !is_feasible_score(score) {
            continue;
        }
        let mut labels = vec![0usize; p];
        realize(&up, &t, &mut labels, root, j, s);
        let y = Labeling::new(labels);
        let exact = pot.score(&y)?;
        out.push((exact, y));
    }
    // Re-summation can round two near-tied scores into the opposite order
    // from the DP's; a stable re-sort restores the documented invariant
    // while keeping the DP tie order among equal scores.
    out.sort_by(|a, b| b.0.total_cmp(&a.0));
    Ok(out)
}

/// Sums `xs` excluding index i for every i, via prefix/suffix arrays.
///
/// Returns a vector `excl` with `excl[i] = sum_{j != i} xs[j]`, computed
/// without subtraction so -inf entries cannot produce NaN.
fn exclusive_sums(xs: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let mut pre = vec![0.0; n + 1];
    for i in 0..n {
        pre[i + 1] = pre[i] + xs[i];
    }
    let mut suf = vec![0.0; n + 1];
    for i in (0..n).rev() {
        suf[i] = suf[i + 1] + xs[i];
    }
    (0..n).map(|i| pre[i] + suf[i + 1]).collect()
}

/// Log-space belief propagation on a rooted tree.
///
/// Returns the partition function and exact node and edge marginals of the
/// Gibbs distribution proportional to `exp(score(y))`.
pub fn sum_product_tree(pot: &PotentialTable) -> Result<Marginals> {
    let t = pot.topology().clone();
    let p = t.num_nodes();
    // lm_up[c][jp]: message from child c to its parent, as a function of the
    // parent's label.
    let mut lm_up: Vec<Vec<f64>> = vec![Vec::new(); p];
    // up_in[v][j] = node score + sum of child messages at (v, j).
    let mut up_in: Vec<Vec<f64>> = vec![Vec::new(); p];
    let mut scratch = Vec::new();
    for v in t.order_by_height() {
        let lv = pot.domain().size(v);
        let mut o: Vec<f64> = (0..lv).map(|j| pot.node_score(v, j)).collect();
        for &c in t.children(v) {
            for (j, oj) in o.iter_mut().enumerate() {
                *oj += lm_up[c][j];
            }
        }
        if let Some(u) = t.parent(v) {
            let lu = pot.domain().size(u);
            let mut msg = Vec::with_capacity(lu);
            for jp in 0..lu {
                scratch.clear();
                for (j, &oj) in o.iter().enumerate() {
                    scratch.push(oj + pot.edge_score(v, j, jp));
                }
                msg.push(log_sum_exp(&scratch));
            }
            lm_up[v] = msg;
        }
        up_in[v] = o;
    }
    let root = t.root();
    let log_z = log_sum_exp(&up_in[root]);
    if !log_z.is_finite() {
        return Err(Error::InvalidInput("partition function is not finite; no feasible labeling".into()));
    }
    // lm_down[v][j]: message from the rest of the tree into v (everything
    // except subtree(v)), as a function of v's label.
    let mut lm_down: Vec<Vec<f64>> = vec![Vec::new(); p];
    lm_down[root] = vec![0.0; pot.domain().size(root)];
    for v in t.order_by_height().into_iter().rev() {
        let kids = t.children(v).to_vec();
        if kids.is_empty() {
            continue;
        }
        let lv = pot.domain().size(v);
        // For each label of v: down message plus all child messages except
        // the recipient's own, assembled via exclusive sums over children.
        let mut excl_by_child: Vec<Vec<f64>> = vec![Vec::with_capacity(lv); kids.len()];
        for j in 0..lv {
            let msgs: Vec<f64> = kids.iter().map(|&c| lm_up[c][j]).collect();
            let excl = exclusive_sums(&msgs);
            for (ci, e) in excl.into_iter().enumerate() {
                excl_by_child[ci].push(e);
            }
        }
        for (ci, &c) in kids.iter().enumerate() {
            let lc = pot.domain().size(c);
            let mut msg = Vec::with_capacity(lc);
            for jc in 0..lc {
                scratch.clear();
                for j in 0..lv {
                    scratch.push(
                        pot.node_score(v, j)
                            + lm_down[v][j]
                            + excl_by_child[ci][j]
                            + pot.edge_score(c, jc, j),
                    );
                }
                msg.push(log_sum_exp(&scratch));
            }
            lm_down[c] = msg;
        }
    }
    let node: Vec<Vec<f64>> = (0..p)
        .map(|v| {
            (0..pot.domain().size(v))
                .map(|j| {
                    let child_sum = up_in[v][j] - pot.node_score(v, j);
                    // up_in already folds node score + child messages; add
                    // the downward part and normalize.
                    (pot.node_score(v, j) + child_sum + lm_down[v][j] - log_z).exp()
                })
                .collect()
        })
        .collect();
    let mut edge: Vec<Option<Vec<Vec<f64>>>> = vec![None; p];
    for v in 0..p {
        let kids = t.children(v).to_vec();
        if kids.is_empty() {
            continue;
        }
        let lv = pot.domain().size(v);
        let mut excl_by_child: Vec<Vec<f64>> = vec![Vec::with_capacity(lv); kids.len()];
        for j in 0..lv {
            let msgs: Vec<f64> = kids.iter().map(|&c| lm_up[c][j]).collect();
            let excl = exclusive_sums(&msgs);
            for (ci, e) in excl.into_iter().enumerate() {
                excl_by_child[ci].push(e);
            }
        }
        for (ci, &c) in kids.iter().enumerate() {
            let lc = pot.domain().size(c);
            let mut table = vec![vec![0.0; lv]; lc];
            for (jc, row) in table.iter_mut().enumerate() {
                for (j, cell) in row.iter_mut().enumerate() {
                    let l = up_in[c][jc]
                        + pot.edge_score(c, jc, j)
                        + pot.node_score(v, j)
                        + excl_by_child[ci][j]
                        + lm_down[v][j]
                        - log_z;
                    *cell = l.exp();
                }
            }
            edge[c] = Some(table);
        }
    }
    Ok(Marginals { log_z, node, edge })
}

/// Entropy-smoothed max over all labelings of a rooted tree; see
/// [`crate::chain::exp_oracle_chain`] for the contract.
pub fn exp_oracle_tree(pot: &PotentialTable, mu: f64) -> Result<(f64, Marginals)> {
    let scaled = pot.scaled(mu)?;
    let marg = sum_product_tree(&scaled)?;
    Ok((mu * marg.log_z, marg))
}

/// Top-K squared-l2 surrogate over labelings of a rooted tree; see
/// [`crate::chain::topk_oracle_chain`] for the contract.
pub fn topk_oracle_tree(
    pot: &PotentialTable,
    mu: f64,
    k: usize,
) -> Result<(f64, Vec<(f64, Labeling)>)> {
    let best = topk_max_product_tree(pot, k)?;
    if best.is_empty() {
        return Err(Error::EmptyLabelSpace { node: pot.topology().root() });
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
