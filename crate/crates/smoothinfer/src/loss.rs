//! Structural hinge losses and their smooth surrogates.
//!
//! For an example with gold labeling g, score tables φ(·; w), and Hamming
//! task loss, the augmented score of a labeling y is
//!
//! ```text
//! ψ(y; w) = φ(y; w) + hamming(g, y) − φ(g; w)
//! ```
//!
//! and the structural hinge is `f(w) = max_y ψ(y; w) >= 0`, with equality
//! when the gold labeling wins by a margin. [`loss_augment`] bakes ψ into a
//! potential table so any inference routine can drive it; [`hinge`],
//! [`smoothed_hinge`], and [`linearized_loss`] produce values and gradients
//! for a single example, and [`objective`] averages them with ridge
//! regularization into the training objective.
//!
//! Models plug in through [`ScoreModel`]: they build potential tables from
//! parameters and scatter per-entry gradient contributions into a dense
//! parameter gradient. The loss layer never sees feature representations.

use crate::chain;
use crate::error::{Error, Result};
use crate::graph::{GraphKind, Labeling, PotentialTable};
use crate::smoothing::{l2_smoothed_max, SmootherKind, SmoothingConfig};
use crate::tree;

/// Whether scores are affine in the parameters or merely smooth.
///
/// Affine models make the hinge convex and the prox-linear linearization
/// exact; smooth nonlinear models are handled through [`linearized_loss`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelKind {
    Linear,
    SmoothNonlinear,
}

/// A parametrized scoring model over structured examples.
///
/// Implementations own the data and the feature map. The loss layer asks for
/// potential tables at given parameters and reports gradients back entry by
/// entry: `add_unary_grad` must add `coef * d(node score v,label)/dw` into
/// `grad`, and `add_pair_grad` the same for an edge entry. For nonlinear
/// models the derivative is taken at `at`, which callers set to the
/// linearization anchor when differentiating a linearized table.
pub trait ScoreModel {
    fn kind(&self) -> ModelKind;
    fn num_examples(&self) -> usize;
    fn dim(&self) -> usize;
    fn gold(&self, i: usize) -> Labeling;
    /// Score tables for example i at parameters w.
    fn potentials(&self, i: usize, w: &[f64]) -> Result<PotentialTable>;
    /// Tables of the model linearized at `anchor`, evaluated at `w`; equals
    /// `potentials(i, w)` for affine models.
    fn linearized_potentials(&self, i: usize, anchor: &[f64], w: &[f64]) -> Result<PotentialTable>;
    fn add_unary_grad(
        &self,
        i: usize,
        at: &[f64],
        v: usize,
        label: usize,
        coef: f64,
        grad: &mut [f64],
    );
    fn add_pair_grad(
        &self,
        i: usize,
        at: &[f64],
        v: usize,
        child_label: usize,
        parent_label: usize,
        coef: f64,
        grad: &mut [f64],
    );
}

/// Value, parameter gradient, and oracle-call cost of one example's loss.
#[derive(Clone, Debug)]
pub struct ExampleLoss {
    pub value: f64,
    pub gradient: Vec<f64>,
    pub oracle_calls: usize,
}

/// Value and gradient of the full regularized objective.
#[derive(Clone, Debug)]
pub struct ObjectiveEval {
    pub value: f64,
    pub gradient: Vec<f64>,
    pub oracle_calls: usize,
}

/// Best labeling of a table, dispatched on the declared topology kind.
pub fn max_oracle(pot: &PotentialTable) -> Result<(f64, Labeling)> {
    match pot.topology().kind() {
        GraphKind::Chain => chain::viterbi(pot),
        GraphKind::Tree => tree::max_product_tree(pot),
    }
}

/// Entropy-smoothed max of a table; see [`chain::exp_oracle_chain`].
pub fn exp_oracle(pot: &PotentialTable, mu: f64) -> Result<(f64, chain::Marginals)> {
    match pot.topology().kind() {
        GraphKind::Chain => chain::exp_oracle_chain(pot, mu),
        GraphKind::Tree => tree::exp_oracle_tree(pot, mu),
    }
}

/// Top-K squared-l2 surrogate of a table; see [`chain::topk_oracle_chain`].
pub fn topk_oracle(
    pot: &PotentialTable,
    mu: f64,
    k: usize,
) -> Result<(f64, Vec<(f64, Labeling)>)> {
    match pot.topology().kind() {
        GraphKind::Chain => chain::topk_oracle_chain(pot, mu, k),
        GraphKind::Tree => tree::topk_oracle_tree(pot, mu, k),
    }
}

/// Augments a table with the Hamming loss against `gold` and shifts it so
/// the gold labeling scores exactly zero.
///
/// Only node tables change: node v gets +1 on non-gold labels, then v's gold
/// node score is subtracted from all of v's entries, then (for non-root v)
/// the gold parent-edge score is subtracted likewise, folding the edge
/// correction into the child's node table. Because [`PotentialTable::score`]
/// sums each node's entry immediately followed by its parent edge's, the
/// gold labeling's contributions cancel per node and its total is bitwise
/// 0.0, making `max_y psi(y) >= 0` exact rather than approximate.
pub fn loss_augment(pot: &PotentialTable, gold: &Labeling) -> Result<PotentialTable> {
    if gold.len() != pot.num_nodes() {
        return Err(Error::InvalidInput(format!(
            "gold labeling covers {} nodes, table has {}",
            gold.len(),
            pot.num_nodes()
        )));
    }
    for (v, &j) in gold.labels.iter().enumerate() {
        if j >= pot.domain().size(v) {
            return Err(Error::InvalidInput(format!(
                "gold label {j} out of range at node {v}"
            )));
        }
    }
    let mut out = pot.clone();
    for v in 0..pot.num_nodes() {
        let gv = gold.labels[v];
        let gold_node = pot.node_score(v, gv);
        let gold_edge = pot
            .topology()
            .parent(v)
            .map(|u| pot.edge_score(v, gv, gold.labels[u]));
        let scores = out.node_scores_mut(v);
        for (j, s) in scores.iter_mut().enumerate() {
            if j != gv {
                *s += 1.0;
            }
            *s -= gold_node;
            if let Some(ge) = gold_edge {
                *s -= ge;
            }
        }
    }
    Ok(out)
}

/// Scatters the gradient of an augmented-table entry sum into `grad`.
///
/// Adds `coef * sum_entries weight(entry) * d(entry)/dw` where the entry
/// weights are given as node/edge occupancies, then subtracts the gold
/// configuration once (the augmentation's `-phi(gold; w)` term), assuming
/// the occupancies sum to one at every node.
fn scatter_occupancies<M: ScoreModel + ?Sized>(
    model: &M,
    i: usize,
    at: &[f64],
    pot: &PotentialTable,
    gold: &Labeling,
    node_occ: &[Vec<f64>],
    edge_occ: &[Option<Vec<Vec<f64>>>],
    coef: f64,
    grad: &mut [f64],
) {
    for v in 0..pot.num_nodes() {
        for (j, &m) in node_occ[v].iter().enumerate() {
            if m != 0.0 {
                model.add_unary_grad(i, at, v, j, coef * m, grad);
            }
        }
        model.add_unary_grad(i, at, v, gold.labels[v], -coef, grad);
        if let Some(u) = pot.topology().parent(v) {
            if let Some(table) = &edge_occ[v] {
                for (j, row) in table.iter().enumerate() {
                    for (jp, &m) in row.iter().enumerate() {
                        if m != 0.0 {
                            model.add_pair_grad(i, at, v, j, jp, coef * m, grad);
                        }
                    }
                }
            }
            model.add_pair_grad(i, at, v, gold.labels[v], gold.labels[u], -coef, grad);
        }
    }
}

/// Converts a weighted labeling list into node/edge occupancy tables.
fn occupancies_from_labelings(
    pot: &PotentialTable,
    pairs: &[(f64, Labeling)],
) -> (Vec<Vec<f64>>, Vec<Option<Vec<Vec<f64>>>>) {
    let p = pot.num_nodes();
    let mut node: Vec<Vec<f64>> = (0..p).map(|v| vec![0.0; pot.domain().size(v)]).collect();
    let mut edge: Vec<Option<Vec<Vec<f64>>>> = (0..p)
        .map(|v| {
            pot.topology()
                .parent(v)
                .map(|u| vec![vec![0.0; pot.domain().size(u)]; pot.domain().size(v)])
        })
        .collect();
    for (w, y) in pairs {
        for v in 0..p {
            node[v][y.labels[v]] += w;
            if let Some(u) = pot.topology().parent(v) {
                edge[v].as_mut().unwrap()[y.labels[v]][y.labels[u]] += w;
            }
        }
    }
    (node, edge)
}

/// Structural hinge loss of one example, with a subgradient.
///
/// The value is `max_y psi(y; w)`, always >= 0 because the gold labeling
/// attains exactly 0; the subgradient is the feature difference between the
/// loss-augmented argmax and the gold labeling. One oracle call.
pub fn hinge<M: ScoreModel + ?Sized>(model: &M, i: usize, w: &[f64]) -> Result<ExampleLoss> {
    let mut gradient = vec![0.0; model.dim()];
    let (value, calls) = hinge_into(model, i, w, 1.0, &mut gradient)?;
    Ok(ExampleLoss { value, gradient, oracle_calls: calls })
}

/// [`hinge`] accumulating `coef * subgradient` into a shared buffer.
pub fn hinge_into<M: ScoreModel + ?Sized>(
    model: &M,
    i: usize,
    w: &[f64],
    coef: f64,
    grad: &mut [f64],
) -> Result<(f64, usize)> {
    let pot = model.potentials(i, w)?;
    let gold = model.gold(i);
    let aug = loss_augment(&pot, &gold)?;
    let (value, best) = max_oracle(&aug)?;
    let (node_occ, edge_occ) = occupancies_from_labelings(&aug, &[(1.0, best)]);
    scatter_occupancies(model, i, w, &aug, &gold, &node_occ, &edge_occ, coef, grad);
    Ok((value, 1))
}

/// Smoothed structural hinge of one example.
///
/// The smoother selects the oracle: entropy smoothing runs sum-product and
/// assembles the gradient from marginals; top-K squared-l2 runs k-best
/// inference and weights the returned labelings by the simplex projection;
/// plain squared-l2 is the enumeration-backed reference (it errors on label
/// spaces above the enumeration cap and exists for exactness checks).
pub fn smoothed_hinge<M: ScoreModel + ?Sized>(
    model: &M,
    i: usize,
    w: &[f64],
    smoothing: &SmoothingConfig,
) -> Result<ExampleLoss> {
    let mut gradient = vec![0.0; model.dim()];
    let (value, calls) = smoothed_hinge_into(model, i, w, smoothing, 1.0, &mut gradient)?;
    Ok(ExampleLoss { value, gradient, oracle_calls: calls })
}

/// [`smoothed_hinge`] accumulating `coef * gradient` into a shared buffer.
pub fn smoothed_hinge_into<M: ScoreModel + ?Sized>(
    model: &M,
    i: usize,
    w: &[f64],
    smoothing: &SmoothingConfig,
    coef: f64,
    grad: &mut [f64],
) -> Result<(f64, usize)> {
    let pot = model.potentials(i, w)?;
    let gold = model.gold(i);
    let aug = loss_augment(&pot, &gold)?;
    smoothed_from_augmented(model, i, w, &aug, &gold, smoothing, coef, grad)
}

fn smoothed_from_augmented<M: ScoreModel + ?Sized>(
    model: &M,
    i: usize,
    at: &[f64],
    aug: &PotentialTable,
    gold: &Labeling,
    smoothing: &SmoothingConfig,
    coef: f64,
    grad: &mut [f64],
) -> Result<(f64, usize)> {
    match smoothing.kind {
        SmootherKind::Entropy => {
            let (value, marg) = exp_oracle(aug, smoothing.mu)?;
            scatter_occupancies(model, i, at, aug, gold, &marg.node, &marg.edge, coef, grad);
            Ok((value, 1))
        }
        SmootherKind::TopkL2 => {
            let (value, pairs) = topk_oracle(aug, smoothing.mu, smoothing.k)?;
            let (node_occ, edge_occ) = occupancies_from_labelings(aug, &pairs);
            scatter_occupancies(model, i, at, aug, gold, &node_occ, &edge_occ, coef, grad);
            Ok((value, 1))
        }
        SmootherKind::L2 => {
            let rows = aug.enumerate_scored()?;
            let scores: Vec<f64> = rows.iter().map(|(s, _)| *s).collect();
            let sm = l2_smoothed_max(&scores, smoothing.mu)?;
            let pairs: Vec<(f64, Labeling)> = sm
                .weights
                .iter()
                .zip(&rows)
                .filter(|(&u, _)| u != 0.0)
                .map(|(&u, (_, y))| (u, y.clone()))
                .collect();
            let (node_occ, edge_occ) = occupancies_from_labelings(aug, &pairs);
            scatter_occupancies(model, i, at, aug, gold, &node_occ, &edge_occ, coef, grad);
            Ok((sm.value, 1))
        }
    }
}

/// Loss of the model linearized at `anchor`, evaluated at `w`.
///
/// Builds the example's convex local model — score tables affine in w
/// through the anchor's value and Jacobian — then applies the smoothed (or
/// exact, when `smoothing` is `None`) hinge to it. Gradient contributions
/// are differentiated at the anchor, matching the linearization.
pub fn linearized_loss<M: ScoreModel + ?Sized>(
    model: &M,
    i: usize,
    anchor: &[f64],
    w: &[f64],
    smoothing: Option<&SmoothingConfig>,
) -> Result<ExampleLoss> {
    let mut gradient = vec![0.0; model.dim()];
    let (value, calls) =
        linearized_loss_into(model, i, anchor, w, smoothing, 1.0, &mut gradient)?;
    Ok(ExampleLoss { value, gradient, oracle_calls: calls })
}

/// [`linearized_loss`] accumulating `coef * gradient` into a shared buffer.
pub fn linearized_loss_into<M: ScoreModel + ?Sized>(
    model: &M,
    i: usize,
    anchor: &[f64],
    w: &[f64],
    smoothing: Option<&SmoothingConfig>,
    coef: f64,
    grad: &mut [f64],
) -> Result<(f64, usize)> {
    if anchor.len() != model.dim() || w.len() != model.dim() {
        return Err(Error::InvalidInput(format!(
            "parameter length must be {}, got anchor {} and w {}",
            model.dim(),
            anchor.len(),
            w.len()
        )));
    }
    let pot = model.linearized_potentials(i, anchor, w)?;
    let gold = model.gold(i);
    let aug = loss_augment(&pot, &gold)?;
    match smoothing {
        Some(cfg) => smoothed_from_augmented(model, i, anchor, &aug, &gold, cfg, coef, grad),
        None => {
            let (value, best) = max_oracle(&aug)?;
            let (node_occ, edge_occ) = occupancies_from_labelings(&aug, &[(1.0, best)]);
            scatter_occupancies(model, i, anchor, &aug, &gold, &node_occ, &edge_occ, coef, grad);
            Ok((value, 1))
        }
    }
}

/// Regularized training objective `(1/n) sum_i f_i(w) + (lambda/2)|w|^2`.
///
/// `smoothing: None` gives the non-smooth hinge objective with a
/// subgradient. Examples are reduced in index order, so values are
/// bit-reproducible.
pub fn objective<M: ScoreModel + ?Sized>(
    model: &M,
    w: &[f64],
    lambda: f64,
    smoothing: Option<&SmoothingConfig>,
) -> Result<ObjectiveEval> {
    let n = model.num_examples();
    if n == 0 {
        return Err(Error::InvalidInput("objective needs at least one example".into()));
    }
    if lambda < 0.0 || !lambda.is_finite() {
        return Err(Error::InvalidInput(format!("lambda must be nonnegative, got {lambda}")));
    }
    let mut gradient = vec![0.0; model.dim()];
    let coef = 1.0 / n as f64;
    let mut value = 0.0;
    let mut oracle_calls = 0;
    for i in 0..n {
        let (v, c) = match smoothing {
            Some(cfg) => smoothed_hinge_into(model, i, w, cfg, coef, &mut gradient)?,
            None => hinge_into(model, i, w, coef, &mut gradient)?,
        };
        value += coef * v;
        oracle_calls += c;
    }
    let sq: f64 = w.iter().map(|x| x * x).sum();
    value += 0.5 * lambda * sq;
    for (g, &x) in gradient.iter_mut().zip(w) {
        *g += lambda * x;
    }
    Ok(ObjectiveEval { value, gradient, oracle_calls })
}

/// Smooth nonlinear test model: one node, quadratic label scores.
///
/// Example i scores label y as `a[i][y] . w + 0.5 * w^T Q[i][y] w` with
/// symmetric Q. Small and fully differentiable, it exercises every
/// linearization code path and has closed-form curvature, which makes it the
/// reference workload for prox-linear experiments.
#[derive(Clone, Debug)]
pub struct QuadraticScoreModel {
    /// `a[i][y]` — linear coefficient of label y in example i.
    pub a: Vec<Vec<Vec<f64>>>,
    /// `q[i][y]` — symmetric quadratic coefficient matrix of label y.
    pub q: Vec<Vec<Vec<Vec<f64>>>>,
    /// Gold label per example.
    pub gold: Vec<usize>,
    dim: usize,
}

impl QuadraticScoreModel {
    pub fn new(
        a: Vec<Vec<Vec<f64>>>,
        q: Vec<Vec<Vec<Vec<f64>>>>,
        gold: Vec<usize>,
    ) -> Result<Self> {
        if a.is_empty() || a.len() != q.len() || a.len() != gold.len() {
            return Err(Error::InvalidInput("quadratic model needs aligned a/q/gold lists".into()));
        }
        let dim = a[0].first().map(Vec::len).unwrap_or(0);
        if dim == 0 {
            return Err(Error::InvalidInput("quadratic model needs dimension >= 1".into()));
        }
        for (i, (ai, qi)) in a.iter().zip(&q).enumerate() {
            if ai.is_empty() || ai.len() != qi.len() || gold[i] >= ai.len() {
                return Err(Error::InvalidInput(format!(
                    "example {i} has inconsistent label data"
                )));
            }
            for (av, qv) in ai.iter().zip(qi) {
                if av.len() != dim || qv.len() != dim || qv.iter().any(|r| r.len() != dim) {
                    return Err(Error::InvalidInput(format!(
                        "example {i} has entries of the wrong dimension"
                    )));
                }
            }
        }
        Ok(Self { a, q, gold, dim })
    }

    fn q_times(&self, i: usize, y: usize, x: &[f64]) -> Vec<f64> {
        self.q[i][y]
            .iter()
            .map(|row| row.iter().zip(x).map(|(r, v)| r * v).sum())
            .collect()
    }

    fn score(&self, i: usize, y: usize, w: &[f64]) -> f64 {
        let lin: f64 = self.a[i][y].iter().zip(w).map(|(c, v)| c * v).sum();
        let qw = self.q_times(i, y, w);
        let quad: f64 = qw.iter().zip(w).map(|(c, v)| c * v).sum();
        lin + 0.5 * quad
    }
}

impl ScoreModel for QuadraticScoreModel {
    fn kind(&self) -> ModelKind {
        ModelKind::SmoothNonlinear
    }

    fn num_examples(&self) -> usize {
        self.a.len()
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn gold(&self, i: usize) -> Labeling {
        Labeling::new(vec![self.gold[i]])
    }

    fn potentials(&self, i: usize, w: &[f64]) -> Result<PotentialTable> {
        let labels = self.a[i].len();
        let scores = (0..labels).map(|y| self.score(i, y, w)).collect();
        PotentialTable::new_chain(vec![scores], vec![])
    }

    fn linearized_potentials(
        &self,
        i: usize,
        anchor: &[f64],
        w: &[f64],
    ) -> Result<PotentialTable> {
        let labels = self.a[i].len();
        let scores = (0..labels)
            .map(|y| {
                let base = self.score(i, y, anchor);
                let qa = self.q_times(i, y, anchor);
                let slope: f64 = self.a[i][y]
                    .iter()
                    .zip(&qa)
                    .zip(w.iter().zip(anchor))
                    .map(|((a, qv), (wj, aj))| (a + qv) * (wj - aj))
                    .sum();
                base + slope
            })
            .collect();
        PotentialTable::new_chain(vec![scores], vec![])
    }

    fn add_unary_grad(
        &self,
        i: usize,
        at: &[f64],
        _v: usize,
        label: usize,
        coef: f64,
        grad: &mut [f64],
    ) {
        let qa = self.q_times(i, label, at);
        for ((g, a), qv) in grad.iter_mut().zip(&self.a[i][label]).zip(&qa) {
            *g += coef * (a + qv);
        }
    }

    fn add_pair_grad(
        &self,
        _i: usize,
        _at: &[f64],
        _v: usize,
        _child_label: usize,
        _parent_label: usize,
        _coef: f64,
        _grad: &mut [f64],
    ) {
        // Single-node model: no edges exist, so nothing can be scattered.
    }
}


#[cfg(test)]
mod tests {
    use super::test_support::*;
    use super::*;
    use crate::graph::test_support::seeded;
    use rand::Rng;

    #[test]
    fn augmented_gold_scores_bitwise_zero() {
        let mut rng = seeded(101);
        for _ in 0..100 {
            let model = random_table_model(&mut rng, 3, 5);
            let w = random_w(&mut rng, model.dim());
            for i in 0..model.num_examples() {
                let pot = model.potentials(i, &w).unwrap();
                let gold = model.gold(i);
                let aug = loss_augment(&pot, &gold).unwrap();
                assert_eq!(aug.score(&gold).unwrap(), 0.0, "gold must score exactly zero");
            }
        }
    }

    #[test]
    fn augmentation_leaves_edges_untouched() {
        let mut rng = seeded(102);
        let model = random_table_model(&mut rng, 1, 4);
        let w = random_w(&mut rng, model.dim());
        let pot = model.potentials(0, &w).unwrap();
        let aug = loss_augment(&pot, &model.gold(0)).unwrap();
        for v in 0..pot.num_nodes() {
            assert_eq!(pot.edge_table(v), aug.edge_table(v));
        }
    }

    #[test]
    fn augmented_scores_match_definition() {
        // psi(y) = phi(y) + hamming(gold, y) - phi(gold), checked entry-wise
        // through full enumeration.
        let mut rng = seeded(103);
        for _ in 0..50 {
            let model = random_table_model(&mut rng, 2, 4);
            let w = random_w(&mut rng, model.dim());
            let pot = model.potentials(0, &w).unwrap();
            let gold = model.gold(0);
            let aug = loss_augment(&pot, &gold).unwrap();
            let gold_score = pot.score(&gold).unwrap();
            for (_, y) in pot.enumerate_scored().unwrap() {
                let ham = y
                    .labels
                    .iter()
                    .zip(&gold.labels)
                    .filter(|(a, b)| a != b)
                    .count() as f64;
                let want = pot.score(&y).unwrap() + ham - gold_score;
                let got = aug.score(&y).unwrap();
                assert!(
                    (got - want).abs() <= 1e-12 * want.abs().max(1.0),
                    "augmented score {got} vs definition {want}"
                );
            }
        }
    }

    #[test]
    fn hinge_at_zero_is_max_hamming() {
        let model = TableModel::new(
            vec![2, 3, 2],
            vec![Labeling::new(vec![0, 1, 1])],
            vec![1.0],
        );
        let w = vec![0.0; model.dim()];
        let l = hinge(&model, 0, &w).unwrap();
        assert_eq!(l.value, 3.0, "all-zero scores leave only the Hamming term");
        assert_eq!(l.oracle_calls, 1);
    }

    #[test]
    fn hinge_zero_for_separating_parameters() {
        let model = TableModel::new(
            vec![2, 2],
            vec![Labeling::new(vec![0, 1])],
            vec![1.0],
        );
        // Reward the gold node labels heavily: margin exceeds the max
        // Hamming loss of 2, so the augmented max is attained at gold.
        let mut w = vec![0.0; model.dim()];
        w[0] = 10.0; // node 0, label 0
        w[2 + 1] = 10.0; // node 1, label 1
        let l = hinge(&model, 0, &w).unwrap();
        assert_eq!(l.value, 0.0);
        assert!(l.gradient.iter().all(|&g| g == 0.0), "argmax = gold cancels exactly");
    }

    #[test]
    fn hinge_matches_enumeration() {
        let mut rng = seeded(104);
        for _ in 0..100 {
            let model = random_table_model(&mut rng, 3, 5);
            let w = random_w(&mut rng, model.dim());
            for i in 0..model.num_examples() {
                let l = hinge(&model, i, &w).unwrap();
                let pot = model.potentials(i, &w).unwrap();
                let aug = loss_augment(&pot, &model.gold(i)).unwrap();
                let best = aug.enumerate_scored().unwrap()[0].0;
                assert_eq!(l.value, best, "hinge must match brute force bitwise");
                assert!(l.value >= 0.0);
            }
        }
    }

    #[test]
    fn hinge_majorizes_task_loss_of_prediction() {
        let mut rng = seeded(105);
        for _ in 0..100 {
            let model = random_table_model(&mut rng, 1, 4);
            let w = random_w(&mut rng, model.dim());
            let l = hinge(&model, 0, &w).unwrap();
            let pot = model.potentials(0, &w).unwrap();
            let (_, pred) = max_oracle(&pot).unwrap();
            let gold = model.gold(0);
            let ham = pred
                .labels
                .iter()
                .zip(&gold.labels)
                .filter(|(a, b)| a != b)
                .count() as f64;
            assert!(
                l.value >= ham - 1e-12,
                "hinge {} must bound the prediction's Hamming loss {ham}",
                l.value
            );
        }
    }

    fn finite_difference_gradient<M: ScoreModel>(
        model: &M,
        i: usize,
        w: &[f64],
        smoothing: &SmoothingConfig,
    ) -> Vec<f64> {
        let h = 1e-5;
        let mut fd = Vec::with_capacity(w.len());
        for j in 0..w.len() {
            let mut wp = w.to_vec();
            let mut wm = w.to_vec();
            wp[j] += h;
            wm[j] -= h;
            let vp = smoothed_hinge(model, i, &wp, smoothing).unwrap().value;
            let vm = smoothed_hinge(model, i, &wm, smoothing).unwrap().value;
            fd.push((vp - vm) / (2.0 * h));
        }
        fd
    }

    #[test]
    fn smoothed_gradients_match_finite_differences() {
        let mut rng = seeded(106);
        for trial in 0..20 {
            let model = random_table_model(&mut rng, 2, 4);
            let w = random_w(&mut rng, model.dim());
            let configs = [
                SmoothingConfig::entropy(0.5).unwrap(),
                SmoothingConfig::entropy(0.05).unwrap(),
                SmoothingConfig::topk_l2(0.5, 3).unwrap(),
            ];
            for cfg in configs {
                let l = smoothed_hinge(&model, 0, &w, &cfg).unwrap();
                let fd = finite_difference_gradient(&model, 0, &w, &cfg);
                for (j, (&g, &f)) in l.gradient.iter().zip(&fd).enumerate() {
                    let scale = f.abs().max(g.abs()).max(1e-3);
                    assert!(
                        (g - f).abs() <= 1e-5 * scale + 1e-8,
                        "trial {trial} {:?} coord {j}: analytic {g} vs fd {f}",
                        cfg.kind
                    );
                }
            }
        }
    }

    #[test]
    fn smoothed_hinge_sandwich() {
        let mut rng = seeded(107);
        for _ in 0..30 {
            let model = random_table_model(&mut rng, 1, 4);
            let w = random_w(&mut rng, model.dim());
            let exact = hinge(&model, 0, &w).unwrap().value;
            let pot = model.potentials(0, &w).unwrap();
            let ln_m = (pot.domain().total_labelings() as f64).ln();
            for mu in [0.01, 0.1, 1.0, 10.0] {
                let ent = smoothed_hinge(&model, 0, &w, &SmoothingConfig::entropy(mu).unwrap())
                    .unwrap()
                    .value;
                assert!(ent >= exact - 1e-9);
                assert!(ent <= exact + mu * ln_m + 1e-9);
                let l2 = smoothed_hinge(&model, 0, &w, &SmoothingConfig::l2(mu).unwrap())
                    .unwrap()
                    .value;
                assert!(l2 >= exact - 1e-9);
                assert!(l2 <= exact + 0.5 * mu + 1e-9);
                let topk =
                    smoothed_hinge(&model, 0, &w, &SmoothingConfig::topk_l2(mu, 2).unwrap())
                        .unwrap()
                        .value;
                assert!(topk >= exact - 1e-9);
                assert!(topk <= l2 + 1e-9, "top-K never exceeds full squared-l2");
            }
        }
    }

    #[test]
    fn topk_equals_full_l2_in_exactness_regime() {
        let mut rng = seeded(108);
        let mut verified = 0;
        for _ in 0..200 {
            let model = random_table_model(&mut rng, 1, 4);
            let w = random_w(&mut rng, model.dim());
            let k = rng.random_range(1..=4);
            let pot = model.potentials(0, &w).unwrap();
            let aug = loss_augment(&pot, &model.gold(0)).unwrap();
            let rows = aug.enumerate_scored().unwrap();
            let sorted: Vec<f64> = rows.iter().map(|(s, _)| *s).collect();
            if sorted.len() <= k {
                continue;
            }
            let gap: f64 = sorted[..k].iter().map(|z| z - sorted[k]).sum();
            if gap <= 1e-6 {
                continue;
            }
            let mu = 0.9 * gap;
            assert!(crate::smoothing::topk_exactness_holds(&sorted, k, mu));
            let topk =
                smoothed_hinge(&model, 0, &w, &SmoothingConfig::topk_l2(mu, k).unwrap()).unwrap();
            let full = smoothed_hinge(&model, 0, &w, &SmoothingConfig::l2(mu).unwrap()).unwrap();
            assert!(
                (topk.value - full.value).abs() <= 1e-9 * full.value.abs().max(1.0),
                "values must agree in the exactness regime"
            );
            for (a, b) in topk.gradient.iter().zip(&full.gradient) {
                assert!((a - b).abs() <= 1e-9, "gradients must agree in the exactness regime");
            }
            verified += 1;
        }
        assert!(verified >= 50, "only {verified} exactness cases exercised");
    }

    #[test]
    fn objective_matches_naive_summation() {
        let mut rng = seeded(109);
        let model = random_table_model(&mut rng, 10, 4);
        let w = random_w(&mut rng, model.dim());
        let lambda = 0.3;
        let cfg = SmoothingConfig::entropy(0.2).unwrap();
        let obj = objective(&model, &w, lambda, Some(&cfg)).unwrap();
        let n = model.num_examples() as f64;
        let mut want = 0.0;
        let mut want_grad = vec![0.0; model.dim()];
        for i in 0..model.num_examples() {
            let l = smoothed_hinge(&model, i, &w, &cfg).unwrap();
            want += l.value / n;
            for (g, x) in want_grad.iter_mut().zip(&l.gradient) {
                *g += x / n;
            }
        }
        let sq: f64 = w.iter().map(|x| x * x).sum();
        want += 0.5 * lambda * sq;
        for (g, &x) in want_grad.iter_mut().zip(&w) {
            *g += lambda * x;
        }
        assert!((obj.value - want).abs() <= 1e-12 * want.abs().max(1.0));
        for (a, b) in obj.gradient.iter().zip(&want_grad) {
            assert!((a - b).abs() <= 1e-12);
        }
        assert_eq!(obj.oracle_calls, model.num_examples());
    }

    #[test]
    fn objective_regularizer_only_at_zero_loss() {
        // Zero parameters with zero scales: every labeling ties, hinge value
        // is the max Hamming distance; regularizer contributes nothing.
        let model = TableModel::new(vec![2, 2], vec![Labeling::new(vec![0, 0])], vec![1.0]);
        let w = vec![0.0; model.dim()];
        let obj = objective(&model, &w, 5.0, None).unwrap();
        assert_eq!(obj.value, 2.0);
    }

    #[test]
    fn linearization_is_identity_for_linear_models() {
        let mut rng = seeded(110);
        let model = random_table_model(&mut rng, 2, 4);
        let anchor = random_w(&mut rng, model.dim());
        let w = random_w(&mut rng, model.dim());
        let cfg = SmoothingConfig::entropy(0.3).unwrap();
        let lin = linearized_loss(&model, 0, &anchor, &w, Some(&cfg)).unwrap();
        let direct = smoothed_hinge(&model, 0, &w, &cfg).unwrap();
        assert!((lin.value - direct.value).abs() <= 1e-12 * direct.value.abs().max(1.0));
        for (a, b) in lin.gradient.iter().zip(&direct.gradient) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn linearization_at_anchor_matches_loss() {
        let mut rng = seeded(111);
        let model = random_quadratic_model(&mut rng, 3, 2);
        let anchor = random_w(&mut rng, 2);
        let cfg = SmoothingConfig::entropy(0.4).unwrap();
        for i in 0..3 {
            let lin = linearized_loss(&model, i, &anchor, &anchor, Some(&cfg)).unwrap();
            let direct = smoothed_hinge(&model, i, &anchor, &cfg).unwrap();
            assert!((lin.value - direct.value).abs() <= 1e-12 * direct.value.abs().max(1.0));
        }
    }

    #[test]
    fn linearization_error_bounded_by_curvature() {
        // |f(w + z) - model(w + z)| <= (L/2) |z|^2. The augmented score of
        // label y carries -phi(gold; w), so its curvature matrix is
        // Q_y - Q_gold; L is the largest spectral norm of those differences
        // (closed form for symmetric 2x2 matrices).
        let mut rng = seeded(112);
        let model = random_quadratic_model(&mut rng, 2, 2);
        let spectral = |m: &[Vec<f64>]| -> f64 {
            let tr = m[0][0] + m[1][1];
            let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
            let disc = (tr * tr / 4.0 - det).max(0.0).sqrt();
            (tr / 2.0 + disc).abs().max((tr / 2.0 - disc).abs())
        };
        for i in 0..2 {
            let qg = &model.q[i][model.gold[i]];
            let l: f64 = model.q[i]
                .iter()
                .map(|qy| {
                    let diff: Vec<Vec<f64>> = qy
                        .iter()
                        .zip(qg)
                        .map(|(ry, rg)| ry.iter().zip(rg).map(|(a, b)| a - b).collect())
                        .collect();
                    spectral(&diff)
                })
                .fold(0.0, f64::max);
            let anchor = random_w(&mut rng, 2);
            for _ in 0..20 {
                let z = random_w(&mut rng, 2);
                let w: Vec<f64> = anchor.iter().zip(&z).map(|(a, b)| a + b).collect();
                let truth = hinge(&model, i, &w).unwrap().value;
                let lin = linearized_loss(&model, i, &anchor, &w, None).unwrap().value;
                let zz: f64 = z.iter().map(|x| x * x).sum();
                assert!(
                    (truth - lin).abs() <= 0.5 * l * zz + 1e-9,
                    "linearization error {} beyond curvature bound {}",
                    (truth - lin).abs(),
                    0.5 * l * zz
                );
            }
        }
    }

    #[test]
    fn quadratic_model_gradients_match_finite_differences() {
        let mut rng = seeded(113);
        let model = random_quadratic_model(&mut rng, 2, 3);
        let w = random_w(&mut rng, 3);
        let cfg = SmoothingConfig::entropy(0.3).unwrap();
        for i in 0..2 {
            let l = smoothed_hinge(&model, i, &w, &cfg).unwrap();
            let fd = finite_difference_gradient(&model, i, &w, &cfg);
            for (&g, &f) in l.gradient.iter().zip(&fd) {
                assert!((g - f).abs() <= 1e-5 * f.abs().max(1.0) + 1e-7);
            }
        }
    }

    #[test]
    fn objective_rejects_empty_models() {
        let model = TableModel::new(vec![2], vec![], vec![]);
        assert!(matches!(
            objective(&model, &[0.0, 0.0], 0.1, None),
            Err(Error::InvalidInput(_))
        ));
    }
}
