//! Deterministic synthetic problem builders shared by the criterion
//! benchmarks. Everything is seeded so successive `cargo bench` runs
//! measure identical workloads.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use smoothinfer::{
    featurize, synth_chain_dataset, LabelDomain, PotentialTable, SynthParams, TaggedDataset,
    TaggingFeatures, TreeTopology,
};

/// Chain potentials with `p` nodes, `labels` labels per node, and uniform
/// scores in (-1, 1).
pub fn chain_potentials(p: usize, labels: usize, seed: u64) -> PotentialTable {
    let mut g = ChaCha8Rng::seed_from_u64(seed);
    let node: Vec<Vec<f64>> =
        (0..p).map(|_| (0..labels).map(|_| g.random_range(-1.0..1.0)).collect()).collect();
    let pair: Vec<Vec<Vec<f64>>> = (1..p)
        .map(|_| {
            (0..labels)
                .map(|_| (0..labels).map(|_| g.random_range(-1.0..1.0)).collect())
                .collect()
        })
        .collect();
    PotentialTable::new_chain(node, pair).expect("valid chain potentials")
}

/// Random rooted tree with `nodes` nodes (parent drawn uniformly below each
/// vertex) and uniform scores in (-1, 1).
pub fn tree_potentials(nodes: usize, labels: usize, seed: u64) -> PotentialTable {
    let mut g = ChaCha8Rng::seed_from_u64(seed);
    let parents: Vec<Option<usize>> =
        (0..nodes).map(|v| if v == 0 { None } else { Some(g.random_range(0..v)) }).collect();
    let topo = TreeTopology::tree(parents).expect("valid tree");
    let node: Vec<Vec<f64>> =
        (0..nodes).map(|_| (0..labels).map(|_| g.random_range(-1.0..1.0)).collect()).collect();
    let edge: Vec<Option<Vec<Vec<f64>>>> = (0..nodes)
        .map(|v| {
            topo.parent(v).map(|_| {
                (0..labels)
                    .map(|_| (0..labels).map(|_| g.random_range(-1.0..1.0)).collect())
                    .collect()
            })
        })
        .collect();
    let domain = LabelDomain::new(vec![labels; nodes]).expect("valid domain");
    PotentialTable::new(topo, domain, node, edge).expect("valid tree potentials")
}

/// A small synthetic tagging corpus plus hashed features, for benchmarks
/// that exercise the full loss/gradient stack.
pub fn tagging_setup(n: usize, p: usize, hash_bits: u32) -> (TaggedDataset, TaggingFeatures) {
    let data = synth_chain_dataset(&SynthParams {
        seed: 77,
        n,
        p,
        num_tags: 5,
        vocab_size: 60,
        noise: 0.1,
        temperature: 1.0,
    })
    .expect("valid synthetic corpus");
    let features = featurize(&data, 1, hash_bits, 3).expect("valid features");
    (data, features)
}

/// Uniform scores in (-1, 1) for the flat smoothed-max kernels.
pub fn random_scores(len: usize, seed: u64) -> Vec<f64> {
    let mut g = ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| g.random_range(-1.0..1.0)).collect()
}
