//! Batch entry points that fan out over rayon when the `parallel` feature is
//! enabled and fall back to plain iteration otherwise. Results are identical
//! either way.

use crate::calltree::CallTree;
use crate::source::RawSample;
use crate::symbolize::{resolve, resolve_callchain, SymbolIndex};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Chains per shard when building trees in parallel.
#[cfg_attr(not(feature = "parallel"), allow(dead_code))]
const SHARD: usize = 4096;

pub fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}

/// Maps `f` over a slice, preserving order.
pub fn map_slice<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

/// Folds root-first chains into a tree on the current thread.
pub fn build_tree_sequential<C, S>(chains: &[C]) -> CallTree
where
    C: AsRef<[S]>,
    S: AsRef<str>,
{
    let mut tree = CallTree::new();
    for chain in chains {
        tree.ingest(chain.as_ref());
    }
    tree
}

/// Folds root-first chains into a tree, one shard tree per worker merged at
/// the end.
#[cfg(feature = "parallel")]
pub fn build_tree_parallel<C, S>(chains: &[C]) -> CallTree
where
    C: AsRef<[S]> + Sync,
    S: AsRef<str>,
{
    chains
        .par_chunks(SHARD)
        .map(build_tree_sequential)
        .reduce(CallTree::new, |mut a, b| {
            a.merge_from(&b);
            a
        })
}

/// Folds root-first chains into a tree using whichever strategy is
/// compiled in.
pub fn build_tree<C, S>(chains: &[C]) -> CallTree
where
    C: AsRef<[S]> + Sync,
    S: AsRef<str>,
{
    #[cfg(feature = "parallel")]
    {
        build_tree_parallel(chains)
    }
    #[cfg(not(feature = "parallel"))]
    {
        build_tree_sequential(chains)
    }
}

/// Symbolizes leaf-first samples and folds them into a tree.
/// `callchains` selects return-address adjustment for live samples.
pub fn tree_from_samples(index: &SymbolIndex, samples: &[RawSample], callchains: bool) -> CallTree {
    let fold = |batch: &[RawSample]| {
        let mut tree = CallTree::new();
        for sample in batch {
            let names = if callchains {
                resolve_callchain(index, sample)
            } else {
                resolve(index, sample)
            };
            tree.ingest(names.iter().rev().map(|n| n.as_str()));
        }
        tree
    };
    #[cfg(feature = "parallel")]
    {
        samples.par_chunks(SHARD).map(fold).reduce(CallTree::new, |mut a, b| {
            a.merge_from(&b);
            a
        })
    }
    #[cfg(not(feature = "parallel"))]
    {
        fold(samples)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::source::Frame;

    #[test]
    fn strategies_agree() {
        let chains: Vec<Vec<String>> = (0..10_000)
            .map(|i| {
                (0..(i % 7 + 1))
                    .map(|d| format!("f{}", (i * 31 + d * 7) % 5))
                    .collect()
            })
            .collect();
        let seq = build_tree_sequential(&chains);
        assert_eq!(build_tree(&chains), seq);
        assert_eq!(seq.total_samples(), 10_000);
    }

    #[test]
    fn samples_fold_root_first() {
        let index = SymbolIndex::from_symbols([(0x10, 0x20, "leaf"), (0x20, 0x30, "main")]);
        let samples = vec![
            RawSample {
                frames: vec![Frame::Addr(0x15), Frame::Addr(0x25)],
                timestamp: 0,
                truncated: false,
                pid: None,
            };
            3
        ];
        let tree = tree_from_samples(&index, &samples, false);
        assert_eq!(tree.node(&["main", "leaf"]).unwrap().count(), 3);
        assert_eq!(tree.total_samples(), 3);
    }

    #[test]
    fn map_slice_keeps_order() {
        let v: Vec<u32> = (0..1000).collect();
        let out = map_slice(&v, |x| x * 2);
        assert!(out.iter().enumerate().all(|(i, &y)| y == 2 * i as u32));
    }
}
