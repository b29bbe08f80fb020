#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stacksurgeon::CallTree;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Root-first chains over `alphabet` names `f0..`, lengths 1..=`max_depth`.
pub fn random_chains(rng: &mut impl Rng, n: usize, alphabet: usize, max_depth: usize) -> Vec<Vec<String>> {
    (0..n)
        .map(|_| {
            let depth = rng.gen_range(1..=max_depth);
            (0..depth)
                .map(|_| format!("f{}", rng.gen_range(0..alphabet)))
                .collect()
        })
        .collect()
}

pub fn tree_of(chains: &[Vec<String>]) -> CallTree {
    let mut tree = CallTree::new();
    for chain in chains {
        tree.ingest(chain);
    }
    tree
}

/// Every node as (path, inclusive count, self count), in walk order.
pub fn nodes(tree: &CallTree) -> Vec<(Vec<String>, u64, u64)> {
    let mut out = Vec::new();
    tree.walk(|path, node| {
        out.push((
            path.iter().map(|s| s.to_string()).collect(),
            node.count(),
            node.self_count(),
        ))
    });
    out
}
