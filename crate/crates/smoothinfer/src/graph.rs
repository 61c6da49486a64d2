//! Discrete graphical models over chains and rooted trees.
//!
//! A model is a [`TreeTopology`] (parent pointers, one root), a
//! [`LabelDomain`] (per-node label counts), and a [`PotentialTable`] holding
//! one score vector per node and one score matrix per non-root node. The
//! total score of a labeling decomposes as
//!
//! ```text
//! score(y) = sum_v node[v][y_v] + sum_{v != root} edge[v][y_v][y_parent(v)]
//! ```
//!
//! Chains are the special case where node v's parent is v-1 and the root is
//! node 0; edge matrices are always indexed `[child label][parent label]`.
//!
//! [`PotentialTable::enumerate_scored`] is the brute-force oracle every
//! dynamic program in this crate is tested against: it scores the entire
//! label space (capped) with the same per-node summation order as
//! [`PotentialTable::score`], so comparisons can be made bitwise.

use crate::error::{Error, Result};

/// Finite stand-in for minus infinity in score tables.
///
/// Using the most negative finite f64 instead of IEEE -inf keeps additions in
/// max-sum recursions well-defined (no NaN from -inf + inf patterns) while
/// still losing every comparison against a real score.
pub const NEG_INF_SCORE: f64 = f64::MIN;

/// True when a path score does not carry a forbidden-configuration sentinel.
///
/// Any sum that includes [`NEG_INF_SCORE`] stays below half of it (scores of
/// practical magnitude cannot claw back ~9e307), so this test separates real
/// labelings from constrained-out ones in k-best outputs.
pub fn is_feasible_score(score: f64) -> bool {
    score > NEG_INF_SCORE / 2.0
}

/// Default cap on full label-space enumeration.
pub const DEFAULT_ENUM_CAP: u128 = 1_000_000;

/// Per-node label counts |Y_v| for v = 0..p.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelDomain {
    sizes: Vec<usize>,
}

impl LabelDomain {
    /// Builds a domain; every node needs at least one label.
    pub fn new(sizes: Vec<usize>) -> Result<Self> {
        if sizes.is_empty() {
            return Err(Error::InvalidInput("label domain needs at least one node".into()));
        }
        if let Some(v) = sizes.iter().position(|&s| s == 0) {
            return Err(Error::InvalidInput(format!("node {v} has an empty label set")));
        }
        Ok(Self { sizes })
    }

    pub fn num_nodes(&self) -> usize {
        self.sizes.len()
    }

    pub fn size(&self, v: usize) -> usize {
        self.sizes[v]
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    /// Total number of labelings, saturating at u128::MAX.
    pub fn total_labelings(&self) -> u128 {
        self.sizes
            .iter()
            .fold(1u128, |acc, &s| acc.saturating_mul(s as u128))
    }
}

/// Whether a topology was declared as a chain or a general rooted tree.
///
/// Chain-specialized dynamic programs require `Chain`; tree algorithms accept
/// both shapes but are only dispatched for `Tree`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GraphKind {
    Chain,
    Tree,
}

/// Rooted tree over nodes 0..p: every node except the root has one parent.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TreeTopology {
    parent: Vec<Option<usize>>,
    root: usize,
    kind: GraphKind,
    children: Vec<Vec<usize>>,
    height: Vec<usize>,
}

impl TreeTopology {
    /// Chain of p nodes rooted at node 0: parent(v) = v - 1.
    pub fn chain(p: usize) -> Result<Self> {
        if p == 0 {
            return Err(Error::InvalidInput("chain needs at least one node".into()));
        }
        let parent = (0..p).map(|v| if v == 0 { None } else { Some(v - 1) }).collect();
        Self::build(parent, GraphKind::Chain)
    }

    /// General rooted tree from parent pointers (exactly one `None` = root).
    pub fn tree(parent: Vec<Option<usize>>) -> Result<Self> {
        Self::build(parent, GraphKind::Tree)
    }

    fn build(parent: Vec<Option<usize>>, kind: GraphKind) -> Result<Self> {
        let p = parent.len();
        if p == 0 {
            return Err(Error::InvalidTopology("tree needs at least one node".into()));
        }
        let roots: Vec<usize> = (0..p).filter(|&v| parent[v].is_none()).collect();
        if roots.len() != 1 {
            return Err(Error::InvalidTopology(format!(
                "expected exactly one root, found {}",
                roots.len()
            )));
        }
        let root = roots[0];
        for (v, &pa) in parent.iter().enumerate() {
            if let Some(u) = pa {
                if u >= p {
                    return Err(Error::InvalidTopology(format!(
                        "node {v} has out-of-range parent {u}"
                    )));
                }
                if u == v {
                    return Err(Error::InvalidTopology(format!("node {v} is its own parent")));
                }
            }
        }
        // Walking up from any node must reach the root in at most p steps;
        // anything longer means a cycle disconnected from the root.
        for start in 0..p {
            let mut v = start;
            let mut steps = 0usize;
            while let Some(u) = parent[v] {
                v = u;
                steps += 1;
                if steps > p {
                    return Err(Error::InvalidTopology(format!(
                        "cycle detected walking up from node {start}"
                    )));
                }
            }
        }
        let mut children = vec![Vec::new(); p];
        for v in 0..p {
            if let Some(u) = parent[v] {
                children[u].push(v);
            }
        }
        // Height = length of the longest downward path to a leaf. Computed by
        // relaxing nodes in reverse order of an up-walk; since parents always
        // have strictly larger height, a simple multi-pass relaxation over a
        // leaf-first ordering suffices.
        let mut height = vec![0usize; p];
        let order = {
            // Sort nodes by depth descending so each child is final before
            // its parent is visited.
            let mut depth = vec![0usize; p];
            for v in 0..p {
                let mut u = v;
                while let Some(w) = parent[u] {
                    depth[v] += 1;
                    u = w;
                }
            }
            let mut idx: Vec<usize> = (0..p).collect();
            idx.sort_by_key(|&v| std::cmp::Reverse(depth[v]));
            idx
        };
        for &v in &order {
            if let Some(u) = parent[v] {
                height[u] = height[u].max(height[v] + 1);
            }
        }
        Ok(Self { parent, root, kind, children, height })
    }

    pub fn num_nodes(&self) -> usize {
        self.parent.len()
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn kind(&self) -> GraphKind {
        self.kind
    }

    pub fn parent(&self, v: usize) -> Option<usize> {
        self.parent[v]
    }

    pub fn children(&self, v: usize) -> &[usize] {
        &self.children[v]
    }

    pub fn height(&self, v: usize) -> usize {
        self.height[v]
    }

    /// Nodes in increasing height (leaves first, root last), ties by index.
    pub fn order_by_height(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.num_nodes()).collect();
        idx.sort_by_key(|&v| (self.height[v], v));
        idx
    }
}

/// One label per node.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Labeling {
    pub labels: Vec<usize>,
}

impl Labeling {
    pub fn new(labels: Vec<usize>) -> Self {
        Self { labels }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

impl std::fmt::Display for Labeling {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "(")?;
        for (i, l) in self.labels.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{l}")?;
        }
        write!(f, ")")
    }
}

/// Node-level inference constraint used for constrained max-marginals.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Constraint {
    /// Node must take exactly this label.
    Require { node: usize, label: usize },
    /// Node must not take this label.
    Forbid { node: usize, label: usize },
}

/// Decomposed score tables over a rooted tree.
///
/// `node_scores[v][j]` scores label j at node v; `edge_scores[v]` is `None`
/// for the root and otherwise a `|Y_v| x |Y_parent(v)|` matrix indexed
/// `[child label][parent label]`.
#[derive(Clone, Debug, PartialEq)]
pub struct PotentialTable {
    topology: TreeTopology,
    domain: LabelDomain,
    node_scores: Vec<Vec<f64>>,
    edge_scores: Vec<Option<Vec<Vec<f64>>>>,
}

impl PotentialTable {
    pub fn new(
        topology: TreeTopology,
        domain: LabelDomain,
        node_scores: Vec<Vec<f64>>,
        edge_scores: Vec<Option<Vec<Vec<f64>>>>,
    ) -> Result<Self> {
        let p = topology.num_nodes();
        if domain.num_nodes() != p {
            return Err(Error::InvalidInput(format!(
                "domain covers {} nodes, topology has {p}",
                domain.num_nodes()
            )));
        }
        if node_scores.len() != p || edge_scores.len() != p {
            return Err(Error::InvalidInput("score table count does not match node count".into()));
        }
        for v in 0..p {
            if node_scores[v].len() != domain.size(v) {
                return Err(Error::InvalidInput(format!(
                    "node {v} score vector has length {}, expected {}",
                    node_scores[v].len(),
                    domain.size(v)
                )));
            }
            if node_scores[v].iter().any(|s| s.is_nan() || s.is_infinite()) {
                return Err(Error::InvalidInput(format!(
                    "node {v} scores must be finite (use the sentinel for forbidden labels)"
                )));
            }
            match (topology.parent(v), &edge_scores[v]) {
                (None, None) => {}
                (None, Some(_)) => {
                    return Err(Error::InvalidInput(format!("root node {v} cannot carry an edge table")));
                }
                (Some(_), None) => {
                    return Err(Error::InvalidInput(format!("non-root node {v} is missing its edge table")));
                }
                (Some(u), Some(m)) => {
                    if m.len() != domain.size(v) || m.iter().any(|row| row.len() != domain.size(u)) {
                        return Err(Error::InvalidInput(format!(
                            "edge table at node {v} must be {} x {}",
                            domain.size(v),
                            domain.size(u)
                        )));
                    }
                    if m.iter().flatten().any(|s| s.is_nan() || s.is_infinite()) {
                        return Err(Error::InvalidInput(format!(
                            "edge table at node {v} must be finite (use the sentinel for forbidden pairs)"
                        )));
                    }
                }
            }
        }
        Ok(Self { topology, domain, node_scores, edge_scores })
    }

    /// Chain table from p node vectors and p-1 edge matrices, where
    /// `pair[i]` connects node i+1 (rows, child) to node i (columns, parent).
    pub fn new_chain(node_scores: Vec<Vec<f64>>, pair: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        let p = node_scores.len();
        if pair.len() + 1 != p {
            return Err(Error::InvalidInput(format!(
                "chain of {p} nodes needs {} edge tables, got {}",
                p.saturating_sub(1),
                pair.len()
            )));
        }
        let topology = TreeTopology::chain(p)?;
        let domain = LabelDomain::new(node_scores.iter().map(Vec::len).collect())?;
        let mut edge_scores: Vec<Option<Vec<Vec<f64>>>> = vec![None];
        edge_scores.extend(pair.into_iter().map(Some));
        Self::new(topology, domain, node_scores, edge_scores)
    }

    pub fn topology(&self) -> &TreeTopology {
        &self.topology
    }

    pub fn domain(&self) -> &LabelDomain {
        &self.domain
    }

    pub fn num_nodes(&self) -> usize {
        self.topology.num_nodes()
    }

    pub fn node_score(&self, v: usize, label: usize) -> f64 {
        self.node_scores[v][label]
    }

    pub fn node_scores(&self, v: usize) -> &[f64] {
        &self.node_scores[v]
    }

    /// Score of the edge between non-root node v and its parent.
    pub fn edge_score(&self, v: usize, child_label: usize, parent_label: usize) -> f64 {
        self.edge_scores[v].as_ref().expect("root has no edge")[child_label][parent_label]
    }

    pub fn edge_table(&self, v: usize) -> Option<&Vec<Vec<f64>>> {
        self.edge_scores[v].as_ref()
    }

    /// Mutable access used by loss augmentation; shape is preserved because
    /// only entry values change.
    pub(crate) fn node_scores_mut(&mut self, v: usize) -> &mut [f64] {
        &mut self.node_scores[v]
    }

    /// Copy with every entry divided by `mu`, clamped to the finite range so
    /// sentinel entries stay sentinels instead of overflowing to -inf.
    pub fn scaled(&self, mu: f64) -> Result<PotentialTable> {
        if !(mu.is_finite() && mu > 0.0) {
            return Err(Error::InvalidInput(format!("scale factor must be positive, got {mu}")));
        }
        let clamp = |x: f64| (x / mu).clamp(NEG_INF_SCORE, f64::MAX);
        let mut out = self.clone();
        for v in 0..out.num_nodes() {
            for s in &mut out.node_scores[v] {
                *s = clamp(*s);
            }
            if let Some(m) = &mut out.edge_scores[v] {
                for row in m {
                    for s in row {
                        *s = clamp(*s);
                    }
                }
            }
        }
        Ok(out)
    }

    fn check_labeling(&self, y: &Labeling) -> Result<()> {
        if y.len() != self.num_nodes() {
            return Err(Error::InvalidInput(format!(
                "labeling covers {} nodes, model has {}",
                y.len(),
                self.num_nodes()
            )));
        }
        for (v, &j) in y.labels.iter().enumerate() {
            if j >= self.domain.size(v) {
                return Err(Error::InvalidInput(format!(
                    "label {j} out of range at node {v} (|Y| = {})",
                    self.domain.size(v)
                )));
            }
        }
        Ok(())
    }

    /// Total score of a labeling.
    ///
    /// Summation order is fixed: nodes in ascending index, each node's score
    /// immediately followed by the score of its parent edge. Every other
    /// place that reports a labeling's score reuses this function, so equal
    /// labelings always produce bitwise-equal scores.
    pub fn score(&self, y: &Labeling) -> Result<f64> {
        self.check_labeling(y)?;
        let mut acc = 0.0;
        for v in 0..self.num_nodes() {
            acc += self.node_scores[v][y.labels[v]];
            if let Some(u) = self.topology.parent(v) {
                acc += self.edge_scores[v].as_ref().unwrap()[y.labels[v]][y.labels[u]];
            }
        }
        Ok(acc)
    }

    /// Brute-force oracle: every labeling with its exact score, sorted by
    /// (score descending, labeling lexicographically ascending).
    pub fn enumerate_scored(&self) -> Result<Vec<(f64, Labeling)>> {
        self.enumerate_scored_capped(DEFAULT_ENUM_CAP)
    }

    /// [`Self::enumerate_scored`] with an explicit size cap.
    pub fn enumerate_scored_capped(&self, cap: u128) -> Result<Vec<(f64, Labeling)>> {
        let size = self.domain.total_labelings();
        if size > cap {
            return Err(Error::SpaceTooLarge { size, cap });
        }
        let p = self.num_nodes();
        let mut out = Vec::with_capacity(size as usize);
        // Odometer over labels with the last node varying fastest, which
        // emits labelings in lexicographic ascending order.
        let mut current = Labeling::new(vec![0; p]);
        loop {
            out.push((self.score(&current)?, current.clone()));
            let mut v = p;
            loop {
                if v == 0 {
                    return Ok(finish_enumeration(out));
                }
                v -= 1;
                current.labels[v] += 1;
                if current.labels[v] < self.domain.size(v) {
                    break;
                }
                current.labels[v] = 0;
            }
        }
    }

    /// Copy with node entries violating the constraints forced to the
    /// sentinel. Errors if some node ends up with no feasible label.
    pub fn constrain(&self, constraints: &[Constraint]) -> Result<PotentialTable> {
        let mut out = self.clone();
        for c in constraints {
            let (node, label) = match *c {
                Constraint::Require { node, label } => (node, label),
                Constraint::Forbid { node, label } => (node, label),
            };
            if node >= self.num_nodes() || label >= self.domain.size(node) {
                return Err(Error::InvalidInput(format!(
                    "constraint on node {node} label {label} is out of range"
                )));
            }
            match *c {
                Constraint::Require { node, label } => {
                    for j in 0..self.domain.size(node) {
                        if j != label {
                            out.node_scores[node][j] = NEG_INF_SCORE;
                        }
                    }
                }
                Constraint::Forbid { node, label } => {
                    out.node_scores[node][label] = NEG_INF_SCORE;
                }
            }
        }
        for v in 0..out.num_nodes() {
            if out.node_scores[v].iter().all(|&s| !is_feasible_score(s)) {
                return Err(Error::EmptyLabelSpace { node: v });
            }
        }
        Ok(out)
    }
}

/// Stable sort by score descending; stability preserves the lexicographic
/// emission order among exact ties.
fn finish_enumeration(mut items: Vec<(f64, Labeling)>) -> Vec<(f64, Labeling)> {
    items.sort_by(|a, b| b.0.total_cmp(&a.0));
    items
}
