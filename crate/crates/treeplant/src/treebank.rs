//! Treebank ingestion: CoNLL-U dependency files, PTB-style bracketed
//! constituency files, right-factored binarization, and BOS/EOS augmentation.
//!
//! Words must not contain whitespace or parentheses; the treebank's word
//! segmentation is taken as-is (punctuation attached to a word stays part of
//! that word).

use crate::error::{Error, Result};

/// Sentence boundary markers inserted by [`augment`]-style operations.
pub const BOS_WORD: &str = "<bos>";
pub const EOS_WORD: &str = "<eos>";

/// Label of the fresh root node introduced when augmenting a constituency tree.
pub const AUG_ROOT_LABEL: &str = "ROOT";

/// An ordered word sequence. After augmentation the first word is `<bos>`
/// and the last is `<eos>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sentence {
    pub words: Vec<String>,
}

impl Sentence {
    pub fn new(words: Vec<String>) -> Result<Self> {
        if words.iter().any(|w| w.is_empty()) {
            return Err(Error::Structure("empty word string".into()));
        }
        Ok(Self { words })
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn is_augmented(&self) -> bool {
        self.words.first().map(String::as_str) == Some(BOS_WORD)
            && self.words.last().map(String::as_str) == Some(EOS_WORD)
    }
}

/// Syntactic head of a word: either another word (by 0-based index) or the
/// virtual ROOT node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Head {
    Root,
    Word(usize),
}

/// A dependency tree over a sentence. Exactly one content word attaches to
/// ROOT before augmentation; BOS and EOS attach to ROOT afterwards.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DependencyTree {
    pub sentence: Sentence,
    pub heads: Vec<Head>,
}

impl DependencyTree {
    /// Builds a tree and validates it: heads in range, acyclic, connected
    /// through ROOT.
    pub fn new(sentence: Sentence, heads: Vec<Head>) -> Result<Self> {
        let n = sentence.len();
        if heads.len() != n {
            return Err(Error::Structure(format!(
                "{} words but {} head entries",
                n,
                heads.len()
            )));
        }
        for (i, h) in heads.iter().enumerate() {
            if let Head::Word(j) = h {
                if *j >= n {
                    return Err(Error::Structure(format!(
                        "word {} has out-of-range head {}",
                        i + 1,
                        j + 1
                    )));
                }
                if *j == i {
                    return Err(Error::Structure(format!("word {} heads itself", i + 1)));
                }
            }
        }
        // Every chain must reach ROOT without revisiting a node.
        for start in 0..n {
            let mut seen = vec![false; n];
            let mut cur = start;
            loop {
                if seen[cur] {
                    return Err(Error::Structure(format!(
                        "cyclic heads involving word {}",
                        cur + 1
                    )));
                }
                seen[cur] = true;
                match heads[cur] {
                    Head::Root => break,
                    Head::Word(next) => cur = next,
                }
            }
        }
        Ok(Self { sentence, heads })
    }

    pub fn len(&self) -> usize {
        self.sentence.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentence.is_empty()
    }

    /// Inserts BOS/EOS words attached directly to ROOT; existing head indices
    /// shift by one.
    pub fn augment_bos_eos(&self) -> Result<Self> {
        if self.sentence.is_augmented() {
            return Err(Error::Structure("tree is already BOS/EOS-augmented".into()));
        }
        let mut words = Vec::with_capacity(self.len() + 2);
        words.push(BOS_WORD.to_string());
        words.extend(self.sentence.words.iter().cloned());
        words.push(EOS_WORD.to_string());

        let mut heads = Vec::with_capacity(self.len() + 2);
        heads.push(Head::Root);
        heads.extend(self.heads.iter().map(|h| match h {
            Head::Root => Head::Root,
            Head::Word(j) => Head::Word(j + 1),
        }));
        heads.push(Head::Root);
        DependencyTree::new(Sentence::new(words)?, heads)
    }
}

/// A node of a constituency tree. Leaves carry one word; internal nodes carry
/// a label and at least one child.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ConstNode {
    Leaf(String),
    Internal { label: String, children: Vec<ConstNode> },
}

impl ConstNode {
    fn push_leaves<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            ConstNode::Leaf(w) => out.push(w),
            ConstNode::Internal { children, .. } => {
                for c in children {
                    c.push_leaves(out);
                }
            }
        }
    }

    fn max_arity(&self) -> usize {
        match self {
            ConstNode::Leaf(_) => 0,
            ConstNode::Internal { children, .. } => children
                .iter()
                .map(ConstNode::max_arity)
                .max()
                .unwrap_or(0)
                .max(children.len()),
        }
    }

    /// Label used when this node appears in an introduced binarization label:
    /// the node label for internal nodes, the word itself for leaves.
    fn label_for_merge(&self) -> &str {
        match self {
            ConstNode::Leaf(w) => w,
            ConstNode::Internal { label, .. } => label,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConstituencyTree {
    pub root: ConstNode,
}

impl ConstituencyTree {
    pub fn new(root: ConstNode) -> Result<Self> {
        validate_const(&root)?;
        Ok(Self { root })
    }

    /// Leaf words in left-to-right order.
    pub fn leaves(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.root.push_leaves(&mut out);
        out
    }

    pub fn sentence(&self) -> Result<Sentence> {
        Sentence::new(self.leaves().into_iter().map(str::to_string).collect())
    }

    pub fn max_arity(&self) -> usize {
        self.root.max_arity()
    }

    fn is_augmented(&self) -> bool {
        let leaves = self.leaves();
        leaves.first() == Some(&BOS_WORD) && leaves.last() == Some(&EOS_WORD)
    }

    /// Right-factored binarization: a node with children `c1..ck` (k > 2)
    /// becomes `c1` plus an introduced node labeled
    /// `PARENT|<label(c2)-..-label(ck)>` spanning the rest, applied
    /// recursively. Nodes with at most two children are kept, and unary
    /// chains are preserved. Leaf order is unchanged.
    pub fn binarize(&self) -> Self {
        Self {
            root: binarize_node(&self.root),
        }
    }

    /// Wraps the tree in a fresh root whose children are
    /// `[BOS-leaf, original root, EOS-leaf]`.
    pub fn augment_bos_eos(&self) -> Result<Self> {
        if self.is_augmented() {
            return Err(Error::Structure("tree is already BOS/EOS-augmented".into()));
        }
        ConstituencyTree::new(ConstNode::Internal {
            label: AUG_ROOT_LABEL.to_string(),
            children: vec![
                ConstNode::Leaf(BOS_WORD.to_string()),
                self.root.clone(),
                ConstNode::Leaf(EOS_WORD.to_string()),
            ],
        })
    }
}

fn validate_const(node: &ConstNode) -> Result<()> {
    match node {
        ConstNode::Leaf(w) => {
            if w.is_empty() {
                return Err(Error::Structure("empty leaf word".into()));
            }
        }
        ConstNode::Internal { label, children } => {
            if label.is_empty() {
                return Err(Error::Structure("empty constituent label".into()));
            }
            if children.is_empty() {
                return Err(Error::Structure(format!("constituent {label} has no children")));
            }
            for c in children {
                validate_const(c)?;
            }
        }
    }
    Ok(())
}

fn binarize_node(node: &ConstNode) -> ConstNode {
    match node {
        ConstNode::Leaf(_) => node.clone(),
        ConstNode::Internal { label, children } => {
            let kids: Vec<ConstNode> = children.iter().map(binarize_node).collect();
            if kids.len() <= 2 {
                return ConstNode::Internal { label: label.clone(), children: kids };
            }
            ConstNode::Internal {
                label: label.clone(),
                children: vec![kids[0].clone(), factor_rest(label, &kids[1..])],
            }
        }
    }
}

fn factor_rest(parent: &str, rest: &[ConstNode]) -> ConstNode {
    let merged = rest
        .iter()
        .map(|c| c.label_for_merge())
        .collect::<Vec<_>>()
        .join("-");
    let label = format!("{parent}|<{merged}>");
    if rest.len() == 2 {
        ConstNode::Internal { label, children: rest.to_vec() }
    } else {
        ConstNode::Internal {
            label,
            children: vec![rest[0].clone(), factor_rest(parent, &rest[1..])],
        }
    }
}

/// Parses CoNLL-U-style text into dependency trees. Sentences are separated
/// by blank lines; comment lines (`#`) and multiword-token / empty-node ID
/// ranges are skipped. Token lines carry either the three semantic columns
/// `ID FORM HEAD` or the full ten-column CoNLL-U layout (HEAD in column 7).
/// `HEAD = 0` denotes the virtual ROOT.
pub fn parse_conllu(text: &str) -> Result<Vec<DependencyTree>> {
    let mut trees = Vec::new();
    let mut words: Vec<String> = Vec::new();
    let mut raw_heads: Vec<usize> = Vec::new();
    let mut block_start_line = 0usize;

    let mut flush = |words: &mut Vec<String>, raw_heads: &mut Vec<usize>, line: usize| -> Result<()> {
        if words.is_empty() {
            return Ok(());
        }
        let n = words.len();
        let mut heads = Vec::with_capacity(n);
        let mut roots = 0usize;
        for (i, &h) in raw_heads.iter().enumerate() {
            if h == 0 {
                roots += 1;
                heads.push(Head::Root);
            } else {
                if h > n {
                    return Err(Error::Parse {
                        line,
                        msg: format!("word {} has head {} but sentence has {} words", i + 1, h, n),
                    });
                }
                heads.push(Head::Word(h - 1));
            }
        }
        if roots != 1 {
            return Err(Error::Structure(format!(
                "sentence ending before line {line} has {roots} root words, expected exactly 1"
            )));
        }
        let tree = DependencyTree::new(Sentence::new(std::mem::take(words))?, heads)?;
        raw_heads.clear();
        trees.push(tree);
        Ok(())
    };

    for (idx, raw_line) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw_line.trim_end_matches('\r');
        if line.trim().is_empty() {
            flush(&mut words, &mut raw_heads, lineno)?;
            continue;
        }
        if line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let (id_str, form, head_str) = match fields.len() {
            3 => (fields[0], fields[1], fields[2]),
            10 => (fields[0], fields[1], fields[6]),
            k => {
                return Err(Error::Parse {
                    line: lineno,
                    msg: format!("expected 3 or 10 columns, found {k}"),
                })
            }
        };
        // Multiword tokens (1-2) and empty nodes (1.1) are not words.
        if id_str.contains('-') || id_str.contains('.') {
            continue;
        }
        let id: usize = id_str.parse().map_err(|_| Error::Parse {
            line: lineno,
            msg: format!("invalid token ID {id_str:?}"),
        })?;
        if words.is_empty() {
            block_start_line = lineno;
        }
        if id != words.len() + 1 {
            return Err(Error::Parse {
                line: lineno,
                msg: format!(
                    "token ID {} out of sequence (expected {}, sentence starts at line {})",
                    id,
                    words.len() + 1,
                    block_start_line
                ),
            });
        }
        let head: usize = head_str.parse().map_err(|_| Error::Parse {
            line: lineno,
            msg: format!("invalid HEAD {head_str:?}"),
        })?;
        words.push(form.to_string());
        raw_heads.push(head);
    }
    let last = text.lines().count() + 1;
    flush(&mut words, &mut raw_heads, last)?;
    Ok(trees)
}

/// Serializes a dependency tree as ten-column CoNLL-U lines (unused columns
/// `_`), one sentence block, no trailing blank line.
pub fn serialize_conllu(tree: &DependencyTree) -> String {
    let mut out = String::new();
    for (i, word) in tree.sentence.words.iter().enumerate() {
        let head = match tree.heads[i] {
            Head::Root => 0,
            Head::Word(j) => j + 1,
        };
        out.push_str(&format!(
            "{}\t{}\t_\t_\t_\t_\t{}\t_\t_\t_\n",
            i + 1,
            word,
            head
        ));
    }
    out
}

/// Serializes a corpus as CoNLL-U blocks separated by blank lines.
pub fn to_conllu(trees: &[DependencyTree]) -> String {
    trees
        .iter()
        .map(serialize_conllu)
        .collect::<Vec<_>>()
        .join("\n")
}

/// Parses one bracketed tree per non-empty line, e.g.
/// `(S (NP (DT The) (NN cat)) (VP (VBZ sleeps)))`.
pub fn parse_bracketed(text: &str) -> Result<Vec<ConstituencyTree>> {
    let mut trees = Vec::new();
    for line in text.lines() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        trees.push(parse_bracketed_line(line)?);
    }
    Ok(trees)
}

fn parse_bracketed_line(line: &str) -> Result<ConstituencyTree> {
    let bytes = line.as_bytes();
    let mut pos = 0usize;
    skip_ws(bytes, &mut pos);
    let node = parse_node(bytes, &mut pos)?;
    skip_ws(bytes, &mut pos);
    if pos != bytes.len() {
        return Err(Error::ParseOffset {
            offset: pos,
            msg: "trailing content after tree".into(),
        });
    }
    ConstituencyTree::new(node)
}

fn skip_ws(bytes: &[u8], pos: &mut usize) {
    while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
}

fn read_token(bytes: &[u8], pos: &mut usize) -> String {
    let start = *pos;
    while *pos < bytes.len() {
        let b = bytes[*pos];
        if b.is_ascii_whitespace() || b == b'(' || b == b')' {
            break;
        }
        *pos += 1;
    }
    String::from_utf8_lossy(&bytes[start..*pos]).into_owned()
}

fn parse_node(bytes: &[u8], pos: &mut usize) -> Result<ConstNode> {
    if *pos >= bytes.len() || bytes[*pos] != b'(' {
        return Err(Error::ParseOffset {
            offset: *pos,
            msg: "expected '('".into(),
        });
    }
    let open = *pos;
    *pos += 1;
    skip_ws(bytes, pos);
    let label = read_token(bytes, pos);
    if label.is_empty() {
        return Err(Error::Structure(format!(
            "empty constituent label at offset {open}"
        )));
    }
    let mut children = Vec::new();
    loop {
        skip_ws(bytes, pos);
        if *pos >= bytes.len() {
            return Err(Error::ParseOffset {
                offset: open,
                msg: "unbalanced parentheses: constituent never closed".into(),
            });
        }
        match bytes[*pos] {
            b')' => {
                *pos += 1;
                break;
            }
            b'(' => children.push(parse_node(bytes, pos)?),
            _ => {
                let word = read_token(bytes, pos);
                children.push(ConstNode::Leaf(word));
            }
        }
    }
    if children.is_empty() {
        return Err(Error::Structure(format!(
            "empty constituent ({label}) at offset {open}"
        )));
    }
    Ok(ConstNode::Internal { label, children })
}

/// Serializes a constituency tree back to single-line bracketed form.
pub fn serialize_bracketed(tree: &ConstituencyTree) -> String {
    let mut out = String::new();
    write_node(&tree.root, &mut out);
    out
}

fn write_node(node: &ConstNode, out: &mut String) {
    match node {
        ConstNode::Leaf(w) => out.push_str(w),
        ConstNode::Internal { label, children } => {
            out.push('(');
            out.push_str(label);
            for c in children {
                out.push(' ');
                write_node(c, out);
            }
            out.push(')');
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const DEP_EXAMPLE: &str = "1\tThe\t2\n2\tauthor\t7\n3\tnext\t2\n4\tto\t3\n5\tthe\t6\n6\tsenators\t4\n7\tis\t0\n8\tgood.\t7\n";
    const CONST_EXAMPLE: &str = "(S (NP (NP (DT The) (NN author)) (ADVP (JJ next) (PP (IN to) (NP (DT the) (NNS senators))))) (VP (VBZ is) (ADJP (JJ good.))))";

    #[test]
    fn conllu_example_heads() {
        let trees = parse_conllu(DEP_EXAMPLE).unwrap();
        assert_eq!(trees.len(), 1);
        let t = &trees[0];
        assert_eq!(
            t.sentence.words,
            vec!["The", "author", "next", "to", "the", "senators", "is", "good."]
        );
        let expected = vec![
            Head::Word(1),
            Head::Word(6),
            Head::Word(1),
            Head::Word(2),
            Head::Word(5),
            Head::Word(3),
            Head::Root,
            Head::Word(6),
        ];
        assert_eq!(t.heads, expected);
    }

    #[test]
    fn conllu_single_word_and_blank_line_split() {
        let trees = parse_conllu("1 hi 0\n\n1 a 2\n2 b 0\n").unwrap();
        assert_eq!(trees.len(), 2);
        assert_eq!(trees[0].heads, vec![Head::Root]);
        assert_eq!(trees[1].heads, vec![Head::Word(1), Head::Root]);
    }

    #[test]
    fn conllu_ten_column_and_skip_lines() {
        let text = "# sent_id = 1\n1-2\tdel\t_\t_\t_\t_\t_\t_\t_\t_\n1\tde\t_\t_\t_\t_\t2\t_\t_\t_\n2\tel\t_\t_\t_\t_\t0\t_\t_\t_\n";
        let trees = parse_conllu(text).unwrap();
        assert_eq!(trees.len(), 1);
        assert_eq!(trees[0].sentence.words, vec!["de", "el"]);
        assert_eq!(trees[0].heads, vec![Head::Word(1), Head::Root]);
    }

    #[test]
    fn conllu_bad_column_count_reports_line() {
        let err = parse_conllu("1 hi 0\n\n1 two\n").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("expected Parse error, got {other:?}"),
        }
    }

    #[test]
    fn conllu_cycle_is_structure_error() {
        let err = parse_conllu("1 a 2\n2 b 1\n3 c 0\n").unwrap_err();
        assert!(matches!(err, Error::Structure(_)), "{err:?}");
    }

    #[test]
    fn conllu_round_trip() {
        let trees = parse_conllu(DEP_EXAMPLE).unwrap();
        let text = serialize_conllu(&trees[0]);
        let reparsed = parse_conllu(&text).unwrap();
        assert_eq!(reparsed[0], trees[0]);
        assert_eq!(serialize_conllu(&reparsed[0]), text);
    }

    #[test]
    fn bracketed_three_leaf_depths() {
        let trees = parse_bracketed("(S (NP (DT The) (NN cat)) (VP (VBZ sleeps)))").unwrap();
        assert_eq!(trees[0].leaves(), vec!["The", "cat", "sleeps"]);
        // Depth from the root, counted in edges, is 3 for every leaf.
        fn depths(node: &ConstNode, d: usize, out: &mut Vec<usize>) {
            match node {
                ConstNode::Leaf(_) => out.push(d),
                ConstNode::Internal { children, .. } => {
                    for c in children {
                        depths(c, d + 1, out);
                    }
                }
            }
        }
        let mut ds = Vec::new();
        depths(&trees[0].root, 0, &mut ds);
        assert_eq!(ds, vec![3, 3, 3]);
    }

    #[test]
    fn bracketed_example_shape() {
        let trees = parse_bracketed(CONST_EXAMPLE).unwrap();
        assert_eq!(
            trees[0].leaves(),
            vec!["The", "author", "next", "to", "the", "senators", "is", "good."]
        );
    }

    #[test]
    fn bracketed_unary_chain_preserved() {
        let trees = parse_bracketed("(X (Y a))").unwrap();
        let expected = ConstNode::Internal {
            label: "X".into(),
            children: vec![ConstNode::Internal {
                label: "Y".into(),
                children: vec![ConstNode::Leaf("a".into())],
            }],
        };
        assert_eq!(trees[0].root, expected);
    }

    #[test]
    fn bracketed_unbalanced_reports_offset() {
        let err = parse_bracketed("(S (NP (DT The)").unwrap_err();
        assert!(matches!(err, Error::ParseOffset { .. }), "{err:?}");
    }

    #[test]
    fn bracketed_empty_constituent_is_structure_error() {
        let err = parse_bracketed("(S (NP) (VP (V runs)))").unwrap_err();
        assert!(matches!(err, Error::Structure(_)), "{err:?}");
    }

    #[test]
    fn bracketed_round_trip() {
        let trees = parse_bracketed(CONST_EXAMPLE).unwrap();
        let text = serialize_bracketed(&trees[0]);
        let reparsed = parse_bracketed(&text).unwrap();
        assert_eq!(reparsed[0], trees[0]);
        assert_eq!(serialize_bracketed(&reparsed[0]), text);
    }

    #[test]
    fn binarize_two_children_unchanged() {
        let t = parse_bracketed("(S (NP a) (VP b))").unwrap().remove(0);
        assert_eq!(t.binarize(), t);
    }

    #[test]
    fn binarize_three_children_right_factored() {
        let t = parse_bracketed("(A (B b) (C c) (D d))").unwrap().remove(0);
        let b = t.binarize();
        let expected = parse_bracketed("(A (B b) (A|<C-D> (C c) (D d)))")
            .unwrap()
            .remove(0);
        assert_eq!(b, expected);
    }

    #[test]
    fn binarize_four_children_nested_labels() {
        let t = parse_bracketed("(A (B b) (C c) (D d) (E e))").unwrap().remove(0);
        let b = t.binarize();
        let expected = parse_bracketed("(A (B b) (A|<C-D-E> (C c) (A|<D-E> (D d) (E e))))")
            .unwrap()
            .remove(0);
        assert_eq!(b, expected);
    }

    #[test]
    fn binarize_preserves_leaves_and_bounds_arity() {
        let t = parse_bracketed(CONST_EXAMPLE).unwrap().remove(0);
        let b = t.binarize();
        assert_eq!(b.leaves(), t.leaves());
        assert!(b.max_arity() <= 2);
    }

    #[test]
    fn augment_dependency() {
        let t = parse_conllu("1 hi 0\n").unwrap().remove(0);
        let a = t.augment_bos_eos().unwrap();
        assert_eq!(a.sentence.words, vec![BOS_WORD, "hi", EOS_WORD]);
        assert_eq!(a.heads, vec![Head::Root, Head::Root, Head::Root]);
        assert!(matches!(
            a.augment_bos_eos().unwrap_err(),
            Error::Structure(_)
        ));
    }

    #[test]
    fn augment_constituency() {
        let t = parse_bracketed("(S (NP (DT The) (NN cat)) (VP (VBZ sleeps)))")
            .unwrap()
            .remove(0);
        let a = t.augment_bos_eos().unwrap();
        assert_eq!(a.leaves(), vec![BOS_WORD, "The", "cat", "sleeps", EOS_WORD]);
        match &a.root {
            ConstNode::Internal { label, children } => {
                assert_eq!(label, AUG_ROOT_LABEL);
                assert_eq!(children.len(), 3);
            }
            _ => panic!("expected internal root"),
        }
        assert!(a.augment_bos_eos().is_err());
    }

    #[test]
    fn augment_adds_exactly_two_words() {
        let t = parse_conllu(DEP_EXAMPLE).unwrap().remove(0);
        let a = t.augment_bos_eos().unwrap();
        assert_eq!(a.len(), t.len() + 2);
    }
}
