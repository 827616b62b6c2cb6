//! Ternary trees, ornaments (simple/general kinds, edge coefficients ε),
//! exhaustive enumeration and the text cache format.
//!
//! Nodes are numbered in preorder: the root is `0`, and the subtree of any
//! node `v` occupies the contiguous id range `v..=subtree_end(v)`.

use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};

pub type NodeId = usize;

/// Conjugation sign `±_v` carried by every node.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn flip(self) -> Self {
        match self {
            Sign::Plus => Sign::Minus,
            Sign::Minus => Sign::Plus,
        }
    }

    pub fn as_int(self) -> i64 {
        match self {
            Sign::Plus => 1,
            Sign::Minus => -1,
        }
    }

    pub fn is_minus(self) -> bool {
        self == Sign::Minus
    }

    fn symbol(self) -> char {
        match self {
            Sign::Plus => '+',
            Sign::Minus => '-',
        }
    }
}

/// Kind of an internal node.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NodeKind {
    /// Diagonal cubic term: all four indices coincide.
    Simple,
    /// Full trilinear term subject to the exclusion rule.
    General,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Node {
    pub sign: Sign,
    pub children: Option<[NodeId; 3]>,
}

/// A finite ternary tree in preorder layout.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Tree {
    nodes: Vec<Node>,
    ends: Vec<NodeId>,
}

impl Tree {
    pub fn leaf(sign: Sign) -> Self {
        Self {
            nodes: vec![Node {
                sign,
                children: None,
            }],
            ends: vec![0],
        }
    }

    /// Root with sign `sign` over three subtrees, in slot order.
    pub fn join(sign: Sign, children: [&Tree; 3]) -> Self {
        let total = 1 + children.iter().map(|c| c.len()).sum::<usize>();
        let mut nodes = Vec::with_capacity(total);
        let mut ends = Vec::with_capacity(total);
        nodes.push(Node {
            sign,
            children: None,
        });
        ends.push(total - 1);
        let mut slots = [0; 3];
        for (slot, child) in children.iter().enumerate() {
            let offset = nodes.len();
            slots[slot] = offset;
            for (node, end) in child.nodes.iter().zip(&child.ends) {
                nodes.push(Node {
                    sign: node.sign,
                    children: node.children.map(|c| c.map(|x| x + offset)),
                });
                ends.push(end + offset);
            }
        }
        nodes[0].children = Some(slots);
        Self { nodes, ends }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn root(&self) -> NodeId {
        0
    }

    pub fn node(&self, v: NodeId) -> &Node {
        &self.nodes[v]
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn sign(&self, v: NodeId) -> Sign {
        self.nodes[v].sign
    }

    pub fn children(&self, v: NodeId) -> Option<[NodeId; 3]> {
        self.nodes[v].children
    }

    pub fn is_leaf(&self, v: NodeId) -> bool {
        self.nodes[v].children.is_none()
    }

    /// Last preorder id inside the subtree rooted at `v`.
    pub fn subtree_end(&self, v: NodeId) -> NodeId {
        self.ends[v]
    }

    /// `|T⁰|`.
    pub fn internal_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.children.is_some()).count()
    }

    /// `|T^∞|`.
    pub fn leaf_count(&self) -> usize {
        self.len() - self.internal_count()
    }

    pub fn leaves(&self) -> Vec<NodeId> {
        (0..self.len()).filter(|&v| self.is_leaf(v)).collect()
    }

    pub fn internal_nodes(&self) -> Vec<NodeId> {
        (0..self.len()).filter(|&v| !self.is_leaf(v)).collect()
    }

    /// Number of internal nodes in the subtree at `v` (its hook length).
    pub fn internal_count_below(&self, v: NodeId) -> usize {
        (v..=self.ends[v]).filter(|&u| !self.is_leaf(u)).count()
    }

    /// Parent of every node; `None` at the root.
    pub fn parents(&self) -> Vec<Option<NodeId>> {
        let mut parents = vec![None; self.len()];
        for v in 0..self.len() {
            if let Some(ch) = self.children(v) {
                for c in ch {
                    parents[c] = Some(v);
                }
            }
        }
        parents
    }

    /// Coefficient of `j_v` in the expansion of `j_root` through cyclicity:
    /// `−` for an odd number of middle-slot steps on the root path.
    pub fn slot_parity(&self) -> Vec<Sign> {
        let mut parity = vec![Sign::Plus; self.len()];
        for v in 0..self.len() {
            if let Some([a, b, c]) = self.children(v) {
                parity[a] = parity[v];
                parity[b] = parity[v].flip();
                parity[c] = parity[v];
            }
        }
        parity
    }

    /// Same shape with the given per-node signs.
    pub fn with_signs(&self, signs: &[Sign]) -> Self {
        assert_eq!(signs.len(), self.len(), "one sign per node");
        let mut out = self.clone();
        for (node, &s) in out.nodes.iter_mut().zip(signs) {
            node.sign = s;
        }
        out
    }

    #[cfg(test)]
    fn same_shape(&self, other: &Tree) -> bool {
        self.len() == other.len()
            && self
                .nodes
                .iter()
                .zip(&other.nodes)
                .all(|(a, b)| a.children == b.children)
    }
}

/// A tree with node kinds and edge coefficients `ε_{v,i} ∈ {−1, 0, 1}`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct OrnamentedTree {
    tree: Tree,
    kinds: Vec<Option<NodeKind>>,
    eps: Vec<[Option<i8>; 3]>,
}

impl OrnamentedTree {
    /// Ornaments `tree` with one kind per internal node (preorder) and all
    /// eligible `ε` set to zero.
    pub fn new(tree: Tree, internal_kinds: &[NodeKind]) -> Result<Self> {
        let internal = tree.internal_nodes();
        if internal.len() != internal_kinds.len() {
            return Err(Error::invalid(format!(
                "expected {} node kinds, got {}",
                internal.len(),
                internal_kinds.len()
            )));
        }
        let mut kinds = vec![None; tree.len()];
        let mut eps = vec![[None; 3]; tree.len()];
        for (&v, &k) in internal.iter().zip(internal_kinds) {
            kinds[v] = Some(k);
            let ch = tree.children(v).expect("internal");
            for i in 0..3 {
                if !tree.is_leaf(ch[i]) {
                    eps[v][i] = Some(0);
                }
            }
        }
        Ok(Self { tree, kinds, eps })
    }

    pub fn leaf(sign: Sign) -> Self {
        Self {
            tree: Tree::leaf(sign),
            kinds: vec![None],
            eps: vec![[None; 3]],
        }
    }

    /// Root of the given kind and sign over three ornamented subtrees.
    /// `eps[i]` is used only when child `i` is non-terminal.
    pub fn join(kind: NodeKind, sign: Sign, children: [&OrnamentedTree; 3], eps: [i8; 3]) -> Self {
        let tree = Tree::join(sign, [&children[0].tree, &children[1].tree, &children[2].tree]);
        let mut kinds = vec![Some(kind)];
        let mut root_eps = [None; 3];
        for i in 0..3 {
            if !children[i].tree.is_leaf(0) {
                root_eps[i] = Some(eps[i]);
            }
        }
        let mut all_eps = vec![root_eps];
        for c in children {
            kinds.extend_from_slice(&c.kinds);
            all_eps.extend_from_slice(&c.eps);
        }
        Self {
            tree,
            kinds,
            eps: all_eps,
        }
    }

    pub fn tree(&self) -> &Tree {
        &self.tree
    }

    pub fn kind(&self, v: NodeId) -> Option<NodeKind> {
        self.kinds[v]
    }

    /// `ε_{v,slot}` for a non-terminal child, `None` otherwise.
    pub fn eps(&self, v: NodeId, slot: usize) -> Option<i8> {
        self.eps[v][slot]
    }

    /// Every `(v, slot)` whose child is non-terminal, in preorder.
    pub fn eps_edges(&self) -> Vec<(NodeId, usize)> {
        let mut out = Vec::new();
        for v in 0..self.tree.len() {
            for slot in 0..3 {
                if self.eps[v][slot].is_some() {
                    out.push((v, slot));
                }
            }
        }
        out
    }

    /// Replaces all eligible `ε` (order of [`Self::eps_edges`]).
    pub fn with_eps(&self, values: &[i8]) -> Result<Self> {
        let edges = self.eps_edges();
        if edges.len() != values.len() {
            return Err(Error::invalid(format!(
                "expected {} eps values, got {}",
                edges.len(),
                values.len()
            )));
        }
        let mut out = self.clone();
        for (&(v, slot), &e) in edges.iter().zip(values) {
            if !(-1..=1).contains(&e) {
                return Err(Error::invalid(format!("eps must be in {{-1,0,1}}, got {e}")));
            }
            out.eps[v][slot] = Some(e);
        }
        Ok(out)
    }

    pub fn with_signs(&self, signs: &[Sign]) -> Self {
        Self {
            tree: self.tree.with_signs(signs),
            ..self.clone()
        }
    }

    fn write_node(&self, v: NodeId, out: &mut String) {
        let sign = self.tree.sign(v).symbol();
        match self.tree.children(v) {
            None => {
                out.push('L');
                out.push(sign);
            }
            Some(ch) => {
                out.push('(');
                out.push(match self.kinds[v] {
                    Some(NodeKind::Simple) => 'S',
                    _ => 'G',
                });
                out.push(sign);
                for (slot, &c) in ch.iter().enumerate() {
                    out.push(' ');
                    if let Some(e) = self.eps[v][slot] {
                        out.push('e');
                        out.push_str(&e.to_string());
                    }
                    self.write_node(c, out);
                }
                out.push(')');
            }
        }
    }

    /// Text form, e.g. `(G+ L+ L- L+)`.
    pub fn serialize(&self) -> String {
        let mut s = String::new();
        self.write_node(0, &mut s);
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut p = Parser {
            bytes: text.as_bytes(),
            pos: 0,
        };
        p.skip_ws();
        let t = p.node()?;
        p.skip_ws();
        if p.pos != p.bytes.len() {
            return Err(p.err("trailing input"));
        }
        Ok(t)
    }
}

impl fmt::Display for OrnamentedTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.serialize())
    }
}

impl FromStr for OrnamentedTree {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::parse(s)
    }
}

struct Parser<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn err(&self, msg: &str) -> Error {
        Error::Parse {
            pos: self.pos,
            msg: msg.to_string(),
        }
    }

    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    fn bump(&mut self) -> Option<u8> {
        let b = self.peek();
        if b.is_some() {
            self.pos += 1;
        }
        b
    }

    fn skip_ws(&mut self) {
        while matches!(self.peek(), Some(b' ' | b'\t')) {
            self.pos += 1;
        }
    }

    fn sign(&mut self) -> Result<Sign> {
        match self.bump() {
            Some(b'+') => Ok(Sign::Plus),
            Some(b'-') => Ok(Sign::Minus),
            _ => {
                self.pos = self.pos.saturating_sub(1);
                Err(self.err("expected sign '+' or '-'"))
            }
        }
    }

    fn eps(&mut self) -> Result<Option<i8>> {
        if self.peek() != Some(b'e') {
            return Ok(None);
        }
        self.pos += 1;
        let start = self.pos;
        let v = match (self.peek(), self.bytes.get(self.pos + 1).copied()) {
            (Some(b'-'), Some(b'1')) => -1,
            (Some(b'0'), _) => 0,
            (Some(b'1'), _) => 1,
            _ => return Err(self.err("expected eps value -1, 0 or 1")),
        };
        self.pos = start + if v == -1 { 2 } else { 1 };
        Ok(Some(v))
    }

    fn node(&mut self) -> Result<OrnamentedTree> {
        match self.bump() {
            Some(b'L') => Ok(OrnamentedTree::leaf(self.sign()?)),
            Some(b'(') => {
                let kind = match self.bump() {
                    Some(b'S') => NodeKind::Simple,
                    Some(b'G') => NodeKind::General,
                    _ => {
                        self.pos -= 1;
                        return Err(self.err("expected node kind 'S' or 'G'"));
                    }
                };
                let sign = self.sign()?;
                let mut children = Vec::with_capacity(3);
                let mut eps = [0i8; 3];
                for e in &mut eps {
                    if self.peek() != Some(b' ') {
                        return Err(self.err("expected ' ' before child"));
                    }
                    self.skip_ws();
                    let at = self.pos;
                    let tag = self.eps()?;
                    let child = self.node()?;
                    let nonterminal = !child.tree.is_leaf(0);
                    match (tag, nonterminal) {
                        (Some(v), true) => *e = v,
                        (None, false) => {}
                        (Some(_), false) => {
                            return Err(Error::Parse {
                                pos: at,
                                msg: "eps tag on a terminal child".into(),
                            })
                        }
                        (None, true) => {
                            return Err(Error::Parse {
                                pos: at,
                                msg: "missing eps tag before non-terminal child".into(),
                            })
                        }
                    }
                    children.push(child);
                }
                if self.bump() != Some(b')') {
                    self.pos = self.pos.saturating_sub(1);
                    return Err(self.err("expected ')'"));
                }
                Ok(OrnamentedTree::join(
                    kind,
                    sign,
                    [&children[0], &children[1], &children[2]],
                    eps,
                ))
            }
            Some(_) => {
                self.pos -= 1;
                Err(self.err("expected 'L' or '('"))
            }
            None => Err(self.err("unexpected end of input")),
        }
    }
}

/// Size limits for exhaustive enumeration.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EnumLimits {
    pub max_internal: usize,
    pub max_trees: u128,
}

impl Default for EnumLimits {
    fn default() -> Self {
        Self {
            max_internal: 6,
            max_trees: 1_000_000,
        }
    }
}

/// Fuss–Catalan number `C(3k, k) / (2k + 1)`.
pub fn fuss_catalan(k: u64) -> u128 {
    let mut binom: u128 = 1;
    for i in 0..k as u128 {
        binom = binom * (3 * k as u128 - i) / (i + 1);
    }
    binom / (2 * k as u128 + 1)
}

/// All ternary shapes with `k` internal nodes, signs `+`.
///
/// Order: by the internal-node counts `(k₁, k₂, k₃)` of the root's
/// children, lexicographically, then recursively.
pub fn enumerate_shapes(k: usize, limits: EnumLimits) -> Result<Vec<Tree>> {
    Error::check_cap("tree internal nodes", k as u128, limits.max_internal as u128)?;
    let mut table: Vec<Vec<Tree>> = vec![vec![Tree::leaf(Sign::Plus)]];
    for m in 1..=k {
        let mut level = Vec::new();
        for k1 in 0..m {
            for k2 in 0..m - k1 {
                let k3 = m - 1 - k1 - k2;
                for a in &table[k1] {
                    for b in &table[k2] {
                        for c in &table[k3] {
                            level.push(Tree::join(Sign::Plus, [a, b, c]));
                        }
                    }
                }
            }
        }
        table.push(level);
    }
    Ok(table.swap_remove(k))
}

/// Every ornamented tree with `k` internal nodes: all kind assignments; all
/// sign patterns when `with_signs`; all `ε ∈ {−1,0,1}` choices when `with_eps`
/// (otherwise `ε = 0` and signs `+`).
pub fn enumerate_ornamented(
    k: usize,
    with_signs: bool,
    with_eps: bool,
    limits: EnumLimits,
) -> Result<Vec<OrnamentedTree>> {
    Error::check_cap("tree internal nodes", k as u128, limits.max_internal as u128)?;
    let n_nodes = 3 * k as u32 + 1;
    let edges = k.saturating_sub(1) as u32;
    let per_shape = 2u128.pow(k as u32)
        * if with_signs { 2u128.pow(n_nodes) } else { 1 }
        * if with_eps { 3u128.pow(edges) } else { 1 };
    let total = fuss_catalan(k as u64) * per_shape;
    Error::check_cap("ornamented tree count", total, limits.max_trees)?;

    let mut out = Vec::with_capacity(total as usize);
    for shape in enumerate_shapes(k, limits)? {
        for mask in 0..(1u32 << k) {
            let kinds: Vec<NodeKind> = (0..k)
                .map(|i| {
                    if mask >> i & 1 == 1 {
                        NodeKind::General
                    } else {
                        NodeKind::Simple
                    }
                })
                .collect();
            let base = OrnamentedTree::new(shape.clone(), &kinds)?;
            let signed: Vec<OrnamentedTree> = if with_signs {
                (0..(1u64 << n_nodes))
                    .map(|smask| {
                        let signs: Vec<Sign> = (0..n_nodes)
                            .map(|i| if smask >> i & 1 == 1 { Sign::Minus } else { Sign::Plus })
                            .collect();
                        base.with_signs(&signs)
                    })
                    .collect()
            } else {
                vec![base]
            };
            for t in signed {
                if with_eps {
                    let n_edges = t.eps_edges().len();
                    for code in 0..3u64.pow(n_edges as u32) {
                        let mut c = code;
                        let vals: Vec<i8> = (0..n_edges)
                            .map(|_| {
                                let d = (c % 3) as i8 - 1;
                                c /= 3;
                                d
                            })
                            .collect();
                        out.push(t.with_eps(&vals)?);
                    }
                } else {
                    out.push(t);
                }
            }
        }
    }
    Ok(out)
}

/// Path of the cache file for trees with `k` internal nodes.
pub fn cache_path(dir: &Path, k: usize) -> PathBuf {
    dir.join(format!("trees_k{k}.txt"))
}

/// Writes one serialized tree per line.
pub fn write_cache(dir: &Path, k: usize, trees: &[OrnamentedTree]) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = cache_path(dir, k);
    let mut f = fs::File::create(&path)?;
    for t in trees {
        writeln!(f, "{t}")?;
    }
    Ok(path)
}

pub fn read_cache(dir: &Path, k: usize) -> Result<Vec<OrnamentedTree>> {
    let f = fs::File::open(cache_path(dir, k))?;
    let mut out = Vec::new();
    for line in BufReader::new(f).lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(OrnamentedTree::parse(&line)?);
        }
    }
    Ok(out)
}
