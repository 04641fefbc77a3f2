//! Shared helpers for unit tests: random structure generators and
//! independent reference implementations (oracles) that deliberately take
//! different algorithmic routes than the code under test.

use ndarray::Array2;
use rand::{Rng, RngCore};
use rand_chacha::ChaCha8Rng;

use crate::loss::KL_EPS;
use crate::tokenizer::WordAlignment;
use crate::treebank::{ConstNode, ConstituencyTree, DependencyTree, Head, Sentence};

pub const DEP_EXAMPLE: &str =
    "1\tThe\t2\n2\tauthor\t7\n3\tnext\t2\n4\tto\t3\n5\tthe\t6\n6\tsenators\t4\n7\tis\t0\n8\tgood.\t7\n";
pub const CONST_EXAMPLE: &str = "(S (NP (NP (DT The) (NN author)) (ADVP (JJ next) (PP (IN to) (NP (DT the) (NNS senators))))) (VP (VBZ is) (ADJP (JJ good.))))";

/// Random dependency tree over `n` words: nodes are attached one at a time
/// to an already-placed node, which guarantees a tree.
pub fn random_dep_tree(n: usize, rng: &mut impl RngCore) -> DependencyTree {
    let root = (rng.next_u64() as usize) % n;
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = (rng.next_u64() as usize) % (i + 1);
        order.swap(i, j);
    }
    let rpos = order.iter().position(|&x| x == root).unwrap();
    order.swap(0, rpos);
    let mut heads = vec![Head::Root; n];
    for (k, &w) in order.iter().enumerate().skip(1) {
        let parent = order[(rng.next_u64() as usize) % k];
        heads[w] = Head::Word(parent);
    }
    let words = (0..n).map(|i| format!("w{i}")).collect();
    DependencyTree::new(Sentence::new(words).unwrap(), heads).unwrap()
}

/// Random constituency tree with `n` leaves, mixed arities, and occasional
/// unary preterminal chains.
pub fn random_const_tree(n: usize, rng: &mut impl RngCore) -> ConstituencyTree {
    fn build(lo: usize, hi: usize, rng: &mut impl RngCore, depth: usize) -> ConstNode {
        if lo + 1 == hi {
            let leaf = ConstNode::Leaf(format!("w{lo}"));
            if rng.next_u64() % 2 == 0 {
                ConstNode::Internal { label: format!("P{depth}"), children: vec![leaf] }
            } else {
                leaf
            }
        } else {
            let span = hi - lo;
            let max_arity = span.min(4);
            let arity = 2 + (rng.next_u64() as usize) % (max_arity - 1);
            let mut cuts = vec![lo, hi];
            while cuts.len() < arity + 1 {
                let c = lo + 1 + (rng.next_u64() as usize) % (span - 1);
                if !cuts.contains(&c) {
                    cuts.push(c);
                }
            }
            cuts.sort_unstable();
            let children = cuts
                .windows(2)
                .map(|w| build(w[0], w[1], rng, depth + 1))
                .collect();
            ConstNode::Internal { label: format!("N{depth}"), children }
        }
    }
    ConstituencyTree::new(build(0, n, rng, 0)).unwrap()
}

/// All-pairs oracle for dependency distances: Floyd-Warshall over the
/// explicit word/ROOT adjacency.
pub fn floyd_warshall_dep(tree: &DependencyTree) -> Vec<Vec<u32>> {
    let n = tree.len();
    let total = n + 1;
    let inf = u32::MAX / 4;
    let mut d = vec![vec![inf; total]; total];
    for (i, row) in d.iter_mut().enumerate() {
        row[i] = 0;
    }
    for (i, h) in tree.heads.iter().enumerate() {
        let hi = match h {
            Head::Root => n,
            Head::Word(j) => *j,
        };
        d[i][hi] = 1;
        d[hi][i] = 1;
    }
    for k in 0..total {
        for i in 0..total {
            for j in 0..total {
                d[i][j] = d[i][j].min(d[i][k] + d[k][j]);
            }
        }
    }
    d.truncate(n);
    for row in &mut d {
        row.truncate(n);
    }
    d
}

/// Leaf-to-leaf oracle for constituency distances: BFS over the explicit
/// node graph.
pub fn graph_bfs_const(tree: &ConstituencyTree) -> Vec<Vec<u32>> {
    let mut adj: Vec<Vec<usize>> = Vec::new();
    let mut leaves: Vec<usize> = Vec::new();
    fn build(node: &ConstNode, parent: Option<usize>, adj: &mut Vec<Vec<usize>>, leaves: &mut Vec<usize>) {
        let id = adj.len();
        adj.push(Vec::new());
        if let Some(p) = parent {
            adj[p].push(id);
            adj[id].push(p);
        }
        match node {
            ConstNode::Leaf(_) => leaves.push(id),
            ConstNode::Internal { children, .. } => {
                for c in children {
                    build(c, Some(id), adj, leaves);
                }
            }
        }
    }
    build(&tree.root, None, &mut adj, &mut leaves);
    let n = leaves.len();
    let mut out = vec![vec![0u32; n]; n];
    for (i, &leaf) in leaves.iter().enumerate() {
        let mut dist = vec![u32::MAX; adj.len()];
        dist[leaf] = 0;
        let mut queue = std::collections::VecDeque::from([leaf]);
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                if dist[v] == u32::MAX {
                    dist[v] = dist[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        for (j, &other) in leaves.iter().enumerate() {
            out[i][j] = dist[other];
        }
    }
    out
}

/// Softmax of negated distances evaluated by a different route: raw
/// `exp(-d)` terms (no stabilizing shift) with Neumaier-compensated
/// accumulation. Valid for small distances.
pub fn reference_softmax_neg(dists: &[u32]) -> Vec<f64> {
    let terms: Vec<f64> = dists.iter().map(|&d| (-f64::from(d)).exp()).collect();
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for &t in &terms {
        let s = sum + t;
        comp += if sum.abs() >= t.abs() { (sum - s) + t } else { (t - s) + sum };
        sum = s;
    }
    let total = sum + comp;
    terms.into_iter().map(|t| t / total).collect()
}

/// KL via a different factorization (`sum p ln p - sum p ln q`) with
/// Neumaier-compensated accumulation.
pub fn reference_kl(p: &[f64], q: &[f64]) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    let add = |x: f64, sum: &mut f64, comp: &mut f64| {
        let s = *sum + x;
        *comp += if sum.abs() >= x.abs() { (*sum - s) + x } else { (x - s) + *sum };
        *sum = s;
    };
    for (&pi, &qi) in p.iter().zip(q.iter()) {
        if pi > 0.0 {
            add(pi * pi.ln(), &mut sum, &mut comp);
            add(-pi * qi.max(KL_EPS).ln(), &mut sum, &mut comp);
        }
    }
    sum + comp
}

/// Random strictly-causal row-stochastic matrix with positive causal
/// entries.
pub fn random_causal_attention(t: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let mut a = Array2::zeros((t, t));
    for l in 0..t {
        let mut sum = 0.0;
        for m in 0..=l {
            let v: f64 = rng.gen_range(0.05..1.0);
            a[[l, m]] = v;
            sum += v;
        }
        for m in 0..=l {
            a[[l, m]] /= sum;
        }
    }
    a
}

/// Random alignment of `t` subwords into at least two words.
pub fn random_alignment(t: usize, rng: &mut ChaCha8Rng) -> WordAlignment {
    assert!(t >= 2);
    let words = (2 + rng.gen_range(0..t)).min(t);
    let mut cuts: Vec<usize> = vec![0, t];
    while cuts.len() < words + 1 {
        let c = rng.gen_range(1..t);
        if !cuts.contains(&c) {
            cuts.push(c);
        }
    }
    cuts.sort_unstable();
    let spans = cuts.windows(2).map(|w| (w[0], w[1] - 1)).collect();
    WordAlignment { spans }
}

/// Literal quadruple-loop reference for word-level aggregation.
pub fn quadruple_loop_oracle(attn: &Array2<f64>, align: &WordAlignment) -> Vec<Vec<f64>> {
    let n = align.words();
    let mut w = vec![vec![0.0; n]; n - 1];
    for i in 0..n - 1 {
        let mut c = vec![0.0; n];
        for j in 0..=i {
            for l in align.spans[i + 1].0..=align.spans[i + 1].1 {
                for m in align.spans[j].0..=align.spans[j].1 {
                    c[j] += attn[[l, m]];
                }
            }
        }
        let z: f64 = c[..=i].iter().sum();
        for j in 0..=i {
            w[i][j] = c[j] / z;
        }
    }
    w
}
