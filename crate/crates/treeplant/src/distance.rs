//! Syntactic distance matrices: pairwise edge counts on dependency or
//! constituency trees, plus the sequential and random baseline generators.
//!
//! Distances ignore edge direction. The virtual ROOT of a dependency tree
//! participates as an ordinary path-through node, and constituency
//! preterminals count as edges like any other internal node.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::treebank::{ConstNode, ConstituencyTree, DependencyTree, Head};

/// Symmetric, zero-diagonal matrix of pairwise word distances (edge counts).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DistanceMatrix {
    pub n: usize,
    pub d: Vec<Vec<u32>>,
}

impl DistanceMatrix {
    pub fn get(&self, i: usize, j: usize) -> u32 {
        self.d[i][j]
    }

    /// Strict lower-triangle entries in row-major order.
    pub fn lower_triangle(&self) -> Vec<u32> {
        let mut out = Vec::with_capacity(self.n * (self.n.saturating_sub(1)) / 2);
        for i in 1..self.n {
            for j in 0..i {
                out.push(self.d[i][j]);
            }
        }
        out
    }
}

/// Pairwise path lengths between words of a dependency tree, computed by BFS
/// from each word over the undirected word/ROOT adjacency.
pub fn distance_matrix_dep(tree: &DependencyTree) -> Result<DistanceMatrix> {
    let n = tree.len();
    let root = n; // virtual ROOT sits at index n
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n + 1];
    for (i, h) in tree.heads.iter().enumerate() {
        let hi = match h {
            Head::Root => root,
            Head::Word(j) => *j,
        };
        adj[i].push(hi);
        adj[hi].push(i);
    }
    let mut d = vec![vec![0u32; n]; n];
    for start in 0..n {
        let dist = bfs(&adj, start)?;
        for j in 0..n {
            d[start][j] = dist[j];
        }
    }
    Ok(DistanceMatrix { n, d })
}

fn bfs(adj: &[Vec<usize>], start: usize) -> Result<Vec<u32>> {
    let mut dist = vec![u32::MAX; adj.len()];
    dist[start] = 0;
    let mut queue = std::collections::VecDeque::from([start]);
    while let Some(u) = queue.pop_front() {
        for &v in &adj[u] {
            if dist[v] == u32::MAX {
                dist[v] = dist[u] + 1;
                queue.push_back(v);
            }
        }
    }
    if dist.iter().any(|&x| x == u32::MAX) {
        return Err(Error::Structure("disconnected dependency structure".into()));
    }
    Ok(dist)
}

/// Pairwise leaf-to-leaf path lengths on a constituency tree:
/// `depth(i) + depth(j) - 2 * depth(lca(i, j))`, every internal node boundary
/// counting as one edge.
pub fn distance_matrix_const(tree: &ConstituencyTree) -> Result<DistanceMatrix> {
    // Flatten nodes; record each leaf's chain of ancestors.
    let mut leaf_paths: Vec<Vec<usize>> = Vec::new();
    let mut next_id = 0usize;
    collect_leaf_paths(&tree.root, &mut Vec::new(), &mut next_id, &mut leaf_paths);
    let n = leaf_paths.len();
    let mut d = vec![vec![0u32; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let a = &leaf_paths[i];
            let b = &leaf_paths[j];
            let mut common = 0usize;
            while common < a.len() && common < b.len() && a[common] == b[common] {
                common += 1;
            }
            // Paths include the leaf itself, so edge counts are len - common.
            let dist = (a.len() - common) + (b.len() - common);
            d[i][j] = dist as u32;
            d[j][i] = dist as u32;
        }
    }
    Ok(DistanceMatrix { n, d })
}

fn collect_leaf_paths(
    node: &ConstNode,
    path: &mut Vec<usize>,
    next_id: &mut usize,
    out: &mut Vec<Vec<usize>>,
) {
    let id = *next_id;
    *next_id += 1;
    path.push(id);
    if let ConstNode::Internal { children, .. } = node {
        for c in children {
            collect_leaf_paths(c, path, next_id, out);
        }
    } else {
        out.push(path.clone());
    }
    path.pop();
}

/// Positional baseline: `d[i][j] = |i - j|`.
pub fn sequential_distances(n: usize) -> DistanceMatrix {
    let mut d = vec![vec![0u32; n]; n];
    for (i, row) in d.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            *cell = (i as i64 - j as i64).unsigned_abs() as u32;
        }
    }
    DistanceMatrix { n, d }
}

/// Random baseline: each strict lower-triangle entry drawn i.i.d. from
/// `pool`, mirrored for symmetry, zero diagonal. Deterministic for a given
/// seed.
pub fn random_distances(n: usize, pool: &[u32], seed: u64) -> Result<DistanceMatrix> {
    if pool.is_empty() {
        return Err(Error::Config("empty distance pool".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut d = vec![vec![0u32; n]; n];
    for i in 1..n {
        for j in 0..i {
            let v = pool[rng.gen_range(0..pool.len())];
            d[i][j] = v;
            d[j][i] = v;
        }
    }
    Ok(DistanceMatrix { n, d })
}

/// Multiset of strict lower-triangle entries pooled across matrices, the
/// empirical distribution the random baseline resamples from.
pub fn distance_pool(mats: &[DistanceMatrix]) -> Vec<u32> {
    mats.iter().flat_map(DistanceMatrix::lower_triangle).collect()
}

/// Mean of strict lower-triangle distance entries across all sentences.
pub fn corpus_mean_distance(mats: &[DistanceMatrix]) -> Result<f64> {
    let pool = distance_pool(mats);
    if pool.is_empty() {
        return Err(Error::Data(
            "corpus has no word pairs to average over".into(),
        ));
    }
    Ok(pool.iter().map(|&x| x as f64).sum::<f64>() / pool.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{
        floyd_warshall_dep, graph_bfs_const, random_const_tree, random_dep_tree, DEP_EXAMPLE, CONST_EXAMPLE,
    };
    use crate::treebank::{parse_bracketed, parse_conllu};
    use rand::RngCore;

    #[test]
    fn dep_example_distances_to_is() {
        let tree = parse_conllu(DEP_EXAMPLE).unwrap().remove(0);
        let m = distance_matrix_dep(&tree).unwrap();
        let is_idx = 6;
        let to_is: Vec<u32> = (0..8).map(|j| m.get(is_idx, j)).collect();
        assert_eq!(to_is, vec![2, 1, 2, 3, 5, 4, 0, 1]);
    }

    #[test]
    fn const_example_distances_to_is() {
        let tree = parse_bracketed(CONST_EXAMPLE).unwrap().remove(0);
        let m = distance_matrix_const(&tree).unwrap();
        let is_idx = 6;
        let to_is: Vec<u32> = (0..8).map(|j| m.get(is_idx, j)).collect();
        assert_eq!(to_is, vec![7, 7, 7, 8, 9, 9, 0, 5]);
    }

    #[test]
    fn two_word_chain() {
        let tree = parse_conllu("1 a 2\n2 b 0\n").unwrap().remove(0);
        let m = distance_matrix_dep(&tree).unwrap();
        assert_eq!(m.get(0, 1), 1);
    }

    #[test]
    fn sibling_leaves_under_preterminals() {
        let tree = parse_bracketed("(NP (DT the) (NN cat))").unwrap().remove(0);
        let m = distance_matrix_const(&tree).unwrap();
        assert_eq!(m.get(0, 1), 4);
    }

    #[test]
    fn augmented_example_bos_to_is() {
        let tree = parse_conllu(DEP_EXAMPLE).unwrap().remove(0).augment_bos_eos().unwrap();
        let m = distance_matrix_dep(&tree).unwrap();
        // BOS -> ROOT -> is
        assert_eq!(m.get(0, 7), 2);
        // Augmentation leaves content-word distances unchanged.
        let to_is: Vec<u32> = (1..9).map(|j| m.get(7, j)).collect();
        assert_eq!(to_is, vec![2, 1, 2, 3, 5, 4, 0, 1]);
    }

    #[test]
    fn dep_matches_floyd_warshall_on_random_trees() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let n = 2 + (rng.next_u64() as usize) % 11;
            let tree = random_dep_tree(n, &mut rng);
            let m = distance_matrix_dep(&tree).unwrap();
            assert_eq!(m.d, floyd_warshall_dep(&tree));
        }
    }

    #[test]
    fn const_matches_graph_bfs_on_random_trees() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..100 {
            let n = 2 + (rng.next_u64() as usize) % 11;
            let tree = random_const_tree(n, &mut rng);
            let m = distance_matrix_const(&tree).unwrap();
            assert_eq!(m.d, graph_bfs_const(&tree));
        }
    }

    #[test]
    fn path_tree_equals_sequential() {
        // Each word heads its successor; the last word is the root.
        let n = 9;
        let mut text = String::new();
        for i in 1..=n {
            let head = if i == n { 0 } else { i + 1 };
            text.push_str(&format!("{i} w{i} {head}\n"));
        }
        let tree = parse_conllu(&text).unwrap().remove(0);
        assert_eq!(distance_matrix_dep(&tree).unwrap(), sequential_distances(n));
    }

    #[test]
    fn sequential_small_cases() {
        let m = sequential_distances(3);
        assert_eq!(m.d, vec![vec![0, 1, 2], vec![1, 0, 1], vec![2, 1, 0]]);
        assert_eq!(sequential_distances(1).d, vec![vec![0]]);
    }

    #[test]
    fn random_degenerate_pool_and_determinism() {
        let m = random_distances(4, &[1], 99).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(m.get(i, j), u32::from(i != j));
            }
        }
        let pool = vec![1, 2, 3, 5, 8];
        let a = random_distances(6, &pool, 42).unwrap();
        let b = random_distances(6, &pool, 42).unwrap();
        assert_eq!(a, b);
        assert!(random_distances(3, &[], 0).is_err());
    }

    #[test]
    fn random_matches_pool_mean() {
        let pool = vec![1, 2, 3, 4, 10];
        let pool_mean = pool.iter().map(|&x| x as f64).sum::<f64>() / pool.len() as f64;
        let mut total = 0f64;
        let mut count = 0usize;
        for s in 0..40 {
            let m = random_distances(30, &pool, s).unwrap();
            for v in m.lower_triangle() {
                total += v as f64;
                count += 1;
            }
        }
        let mean = total / count as f64;
        assert!(
            (mean - pool_mean).abs() / pool_mean < 0.01,
            "sample mean {mean} vs pool mean {pool_mean}"
        );
    }

    #[test]
    fn tree_matrix_invariants() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let n = 2 + (rng.next_u64() as usize) % 11;
            let tree = random_dep_tree(n, &mut rng);
            let m = distance_matrix_dep(&tree).unwrap();
            for i in 0..n {
                assert_eq!(m.get(i, i), 0);
                for j in 0..n {
                    assert_eq!(m.get(i, j), m.get(j, i));
                    if i != j {
                        assert!(m.get(i, j) >= 1);
                    }
                    for k in 0..n {
                        assert!(m.get(i, k) <= m.get(i, j) + m.get(j, k));
                    }
                }
            }
        }
    }

    #[test]
    fn corpus_mean_cases() {
        let single = parse_conllu("1 a 2\n2 b 0\n").unwrap().remove(0);
        let m = distance_matrix_dep(&single).unwrap();
        assert_eq!(corpus_mean_distance(&[m]).unwrap(), 1.0);

        let fig = parse_conllu(DEP_EXAMPLE).unwrap().remove(0);
        let m = distance_matrix_dep(&fig).unwrap();
        // Hand enumeration over the 28 unordered pairs of the fixture tree.
        let mut total = 0u32;
        for i in 0..8 {
            for j in 0..i {
                total += m.get(i, j);
            }
        }
        let expected = f64::from(total) / 28.0;
        assert!((corpus_mean_distance(&[m]).unwrap() - expected).abs() < 1e-12);

        assert!(corpus_mean_distance(&[]).is_err());
    }

    #[test]
    fn distance_matrix_json_round_trip() {
        let tree = parse_conllu(DEP_EXAMPLE).unwrap().remove(0);
        let m = distance_matrix_dep(&tree).unwrap();
        let json = serde_json::to_string(&m).unwrap();
        let back: DistanceMatrix = serde_json::from_str(&json).unwrap();
        assert_eq!(back, m);
    }
}
