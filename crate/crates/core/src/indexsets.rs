//! Admissible index assignments `J(T)`, the phases `σ_v` and `ρ_v`, and the
//! frozen/alive classification with its weathered-tree partition.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;

use crate::error::{Error, Result};
use crate::trees::{NodeId, NodeKind, OrnamentedTree, Tree};

/// One integer mode index `j_v` per node, in preorder.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct IndexAssignment {
    j: Vec<i64>,
}

impl IndexAssignment {
    /// Wraps raw per-node values without checking any constraint.
    pub fn from_raw(j: Vec<i64>) -> Self {
        Self { j }
    }

    pub fn get(&self, v: NodeId) -> i64 {
        self.j[v]
    }

    pub fn values(&self) -> &[i64] {
        &self.j
    }

    pub fn root(&self) -> i64 {
        self.j[0]
    }

    /// Leaf values in preorder.
    pub fn leaf_values(&self, tree: &Tree) -> Vec<i64> {
        tree.leaves().into_iter().map(|v| self.j[v]).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Constraint {
    /// `{j_v, j_(v,2)} ∩ {j_(v,1), j_(v,3)} = ∅` at a general node.
    Exclusion,
    /// `j_v = j_(v,i)` for all `i` at a simple node.
    Simplicity,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum AssignmentError {
    #[error("expected {expected} leaf values, got {got}")]
    LeafCount { expected: usize, got: usize },
    #[error("node {node} violates the {constraint:?} constraint")]
    Rejected { node: NodeId, constraint: Constraint },
}

/// Checks the local constraint of an internal node whose index already
/// satisfies cyclicity.
pub fn local_violation(kind: NodeKind, jv: i64, [j1, j2, j3]: [i64; 3]) -> Option<Constraint> {
    match kind {
        NodeKind::General => {
            if jv == j1 || jv == j3 || j2 == j1 || j2 == j3 {
                Some(Constraint::Exclusion)
            } else {
                None
            }
        }
        NodeKind::Simple => {
            if j1 == j2 && j2 == j3 {
                None
            } else {
                Some(Constraint::Simplicity)
            }
        }
    }
}

/// Fills internal indices upward by `j_v = j_(v,1) − j_(v,2) + j_(v,3)` and
/// checks exclusion/simplicity at every internal node.
pub fn complete_assignment(
    t: &OrnamentedTree,
    leaf_values: &[i64],
) -> std::result::Result<IndexAssignment, AssignmentError> {
    let tree = t.tree();
    let leaves = tree.leaves();
    if leaves.len() != leaf_values.len() {
        return Err(AssignmentError::LeafCount {
            expected: leaves.len(),
            got: leaf_values.len(),
        });
    }
    let mut j = vec![0i64; tree.len()];
    for (&v, &x) in leaves.iter().zip(leaf_values) {
        j[v] = x;
    }
    for v in (0..tree.len()).rev() {
        if let Some([a, b, c]) = tree.children(v) {
            j[v] = j[a] - j[b] + j[c];
            let kind = t.kind(v).expect("internal node has a kind");
            if let Some(constraint) = local_violation(kind, j[v], [j[a], j[b], j[c]]) {
                return Err(AssignmentError::Rejected { node: v, constraint });
            }
        }
    }
    Ok(IndexAssignment { j })
}

/// Depth-first walk over leaf tuples drawn from per-leaf domains, completing
/// internal indices as soon as their subtree is fully assigned and pruning
/// on the first violated constraint. With `constrained = false` only
/// cyclicity is imposed.
pub(crate) struct AssignmentWalker<'a> {
    tree: &'a Tree,
    kinds: Vec<Option<NodeKind>>,
    leaves: Vec<NodeId>,
    closing: Vec<Vec<NodeId>>,
    constrained: bool,
}

impl<'a> AssignmentWalker<'a> {
    pub(crate) fn new(tree: &'a Tree, kinds: Vec<Option<NodeKind>>, constrained: bool) -> Self {
        let leaves = tree.leaves();
        let mut closing = vec![Vec::new(); leaves.len()];
        for (i, &leaf) in leaves.iter().enumerate() {
            // deepest first: larger preorder ids close before their ancestors
            closing[i] = (0..leaf)
                .rev()
                .filter(|&v| !tree.is_leaf(v) && tree.subtree_end(v) == leaf)
                .collect();
        }
        Self {
            tree,
            kinds,
            leaves,
            closing,
            constrained,
        }
    }

    pub(crate) fn for_ornamented(t: &'a OrnamentedTree, constrained: bool) -> Self {
        let kinds = (0..t.tree().len()).map(|v| t.kind(v)).collect();
        Self::new(t.tree(), kinds, constrained)
    }

    pub(crate) fn leaf_count(&self) -> usize {
        self.leaves.len()
    }

    pub(crate) fn leaves(&self) -> &[NodeId] {
        &self.leaves
    }

    /// Visits every admissible assignment with leaf `i` drawn from
    /// `domains[i]`. The visitor receives the per-node index vector.
    pub(crate) fn walk(&self, domains: &[Vec<i64>], visit: &mut impl FnMut(&[i64])) {
        assert_eq!(domains.len(), self.leaves.len());
        let mut j = vec![0i64; self.tree.len()];
        self.step(0, domains, &mut j, visit);
    }

    fn step(&self, i: usize, domains: &[Vec<i64>], j: &mut [i64], visit: &mut impl FnMut(&[i64])) {
        if i == self.leaves.len() {
            visit(j);
            return;
        }
        'values: for &x in &domains[i] {
            j[self.leaves[i]] = x;
            for &v in &self.closing[i] {
                let [a, b, c] = self.tree.children(v).expect("internal");
                j[v] = j[a] - j[b] + j[c];
                if self.constrained {
                    if let Some(kind) = self.kinds[v] {
                        if local_violation(kind, j[v], [j[a], j[b], j[c]]).is_some() {
                            continue 'values;
                        }
                    }
                }
            }
            self.step(i + 1, domains, j, visit);
        }
    }
}

/// Number of leaf tuples a walk over `domains` may visit.
pub(crate) fn tuple_count(domains: &[Vec<i64>]) -> u128 {
    domains
        .iter()
        .map(|d| d.len() as u128)
        .fold(1u128, |a, b| a.saturating_mul(b))
}

/// All of `J(T)` with leaf indices in `[−cutoff, cutoff]`; internal indices
/// are derived and may exceed the cutoff.
pub fn enumerate_assignments(t: &OrnamentedTree, cutoff: u64, budget: u128) -> Result<Vec<IndexAssignment>> {
    let n = cutoff as i64;
    let walker = AssignmentWalker::for_ornamented(t, true);
    let domains = vec![(-n..=n).collect::<Vec<_>>(); walker.leaf_count()];
    Error::check_cap("leaf tuple budget", tuple_count(&domains), budget)?;
    let mut out = Vec::new();
    walker.walk(&domains, &mut |j| out.push(IndexAssignment { j: j.to_vec() }));
    Ok(out)
}

/// `σ(j,k,l,n) = n² − j² + k² − l²`.
pub fn sigma(j: i64, k: i64, l: i64, n: i64) -> i64 {
    n * n - j * j + k * k - l * l
}

/// `σ_v(𝐣)`; zero at terminal nodes.
pub fn sigma_node(tree: &Tree, a: &IndexAssignment, v: NodeId) -> i64 {
    match tree.children(v) {
        None => 0,
        Some([x, y, z]) => sigma(a.j[x], a.j[y], a.j[z], a.j[v]),
    }
}

/// `ρ_v` for every node: `σ_v + Σ_i ε_{v,i} ρ_(v,i)`, zero at leaves.
pub fn rho_all(t: &OrnamentedTree, a: &IndexAssignment) -> Vec<i64> {
    let tree = t.tree();
    let mut rho = vec![0i64; tree.len()];
    for v in (0..tree.len()).rev() {
        if let Some(ch) = tree.children(v) {
            let mut r = sigma_node(tree, a, v);
            for (slot, &c) in ch.iter().enumerate() {
                if let Some(e) = t.eps(v, slot) {
                    r += e as i64 * rho[c];
                }
            }
            rho[v] = r;
        }
    }
    rho
}

pub fn rho_node(t: &OrnamentedTree, a: &IndexAssignment, v: NodeId) -> i64 {
    rho_all(t, a)[v]
}

/// Thresholds `c₀`, `δ` of the frozen-node test `|ρ_v| ≤ c₀ |σ_v|^{1−δ}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FrozenParams {
    c0: f64,
    delta: f64,
}

impl Default for FrozenParams {
    fn default() -> Self {
        Self {
            c0: 0.25,
            delta: 0.1,
        }
    }
}

impl FrozenParams {
    pub fn new(c0: f64, delta: f64) -> Result<Self> {
        if !(c0 > 0.0 && c0 <= 0.25) {
            return Err(Error::invalid(format!("c0 must lie in (0, 0.25], got {c0}")));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::invalid(format!("delta must lie in (0, 1), got {delta}")));
        }
        Ok(Self { c0, delta })
    }

    pub fn c0(&self) -> f64 {
        self.c0
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn is_frozen(&self, rho: i64, sigma: i64) -> bool {
        (rho.abs() as f64) <= self.c0 * (sigma.abs() as f64).powf(1.0 - self.delta)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FrozenLabel {
    Alive,
    Frozen,
    /// `ρ_v = 0`; always frozen as well.
    Exceptional,
}

impl FrozenLabel {
    pub fn is_frozen(self) -> bool {
        self != FrozenLabel::Alive
    }
}

impl fmt::Display for FrozenLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FrozenLabel::Alive => "alive",
            FrozenLabel::Frozen => "frozen",
            FrozenLabel::Exceptional => "exceptional",
        })
    }
}

/// Label of every internal node (`None` at leaves), using the tree's own `ε`.
pub fn classify_frozen(t: &OrnamentedTree, a: &IndexAssignment, fp: FrozenParams) -> Vec<Option<FrozenLabel>> {
    let tree = t.tree();
    let rho = rho_all(t, a);
    (0..tree.len())
        .map(|v| {
            if tree.is_leaf(v) {
                None
            } else if rho[v] == 0 {
                Some(FrozenLabel::Exceptional)
            } else if fp.is_frozen(rho[v], sigma_node(tree, a, v)) {
                Some(FrozenLabel::Frozen)
            } else {
                Some(FrozenLabel::Alive)
            }
        })
        .collect()
}

/// The set `T′` of frozen nodes for one assignment, sorted.
pub fn frozen_set(t: &OrnamentedTree, a: &IndexAssignment, fp: FrozenParams) -> Vec<NodeId> {
    classify_frozen(t, a, fp)
        .iter()
        .enumerate()
        .filter_map(|(v, l)| l.filter(|l| l.is_frozen()).map(|_| v))
        .collect()
}

/// Partition of `J(T)` (leaves in `[−cutoff, cutoff]`) by frozen set.
pub fn weathered_partition(
    t: &OrnamentedTree,
    cutoff: u64,
    fp: FrozenParams,
    budget: u128,
) -> Result<BTreeMap<Vec<NodeId>, Vec<IndexAssignment>>> {
    let mut fibers: BTreeMap<Vec<NodeId>, Vec<IndexAssignment>> = BTreeMap::new();
    for a in enumerate_assignments(t, cutoff, budget)? {
        fibers.entry(frozen_set(t, &a, fp)).or_default().push(a);
    }
    Ok(fibers)
}

/// Number of ordered factorizations `m = d · (m/d)` with `d > 0`.
pub fn divisor_count(m: u64) -> Result<u64> {
    if m == 0 {
        return Err(Error::invalid("divisor_count needs m >= 1"));
    }
    let mut count = 0;
    let mut d = 1u64;
    while d * d <= m {
        if m.is_multiple_of(d) {
            count += if d * d == m { 1 } else { 2 };
        }
        d += 1;
    }
    Ok(count)
}

/// Writes assignments as `node_id,j` blocks separated by blank lines.
pub fn write_assignments_csv<W: Write>(mut out: W, assignments: &[IndexAssignment]) -> Result<()> {
    for (i, a) in assignments.iter().enumerate() {
        if i > 0 {
            writeln!(out)?;
        }
        writeln!(out, "node_id,j")?;
        for (v, j) in a.j.iter().enumerate() {
            writeln!(out, "{v},{j}")?;
        }
    }
    Ok(())
}

/// Header of the frozen report, `tree,assignment_id,node_id,sigma,rho,label`.
pub const FROZEN_REPORT_HEADER: &str = "tree,assignment_id,node_id,sigma,rho,label";

/// Appends one row per internal node of `a` to a frozen report.
pub fn write_frozen_rows<W: Write>(
    mut out: W,
    t: &OrnamentedTree,
    assignment_id: usize,
    a: &IndexAssignment,
    fp: FrozenParams,
) -> Result<()> {
    let labels = classify_frozen(t, a, fp);
    let rho = rho_all(t, a);
    let name = t.serialize();
    for (v, label) in labels.iter().enumerate() {
        if let Some(label) = label {
            writeln!(
                out,
                "\"{name}\",{assignment_id},{v},{},{},{label}",
                sigma_node(t.tree(), a, v),
                rho[v]
            )?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trees::{enumerate_ornamented, EnumLimits, Sign};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashSet;

    fn three_leaves(kind: NodeKind) -> OrnamentedTree {
        let l = OrnamentedTree::leaf(Sign::Plus);
        let m = OrnamentedTree::leaf(Sign::Minus);
        OrnamentedTree::join(kind, Sign::Plus, [&l, &m, &l], [0; 3])
    }

    #[test]
    fn complete_general_accepts_and_rejects() {
        let t = three_leaves(NodeKind::General);
        let a = complete_assignment(&t, &[1, 2, 3]).unwrap();
        assert_eq!(a.root(), 2);
        assert_eq!(
            complete_assignment(&t, &[2, 2, 3]),
            Err(AssignmentError::Rejected {
                node: 0,
                constraint: Constraint::Exclusion
            })
        );
        assert!(matches!(
            complete_assignment(&t, &[1, 2]),
            Err(AssignmentError::LeafCount { expected: 3, got: 2 })
        ));
    }

    #[test]
    fn complete_simple() {
        let t = three_leaves(NodeKind::Simple);
        assert_eq!(complete_assignment(&t, &[5, 5, 5]).unwrap().values(), &[5, 5, 5, 5]);
        assert_eq!(
            complete_assignment(&t, &[5, 4, 5]),
            Err(AssignmentError::Rejected {
                node: 0,
                constraint: Constraint::Simplicity
            })
        );
    }

    #[test]
    fn assignment_counts() {
        let leaf = OrnamentedTree::leaf(Sign::Plus);
        assert_eq!(enumerate_assignments(&leaf, 2, 1 << 20).unwrap().len(), 5);

        let g = three_leaves(NodeKind::General);
        let mut brute = 0;
        for j in -1..=1i64 {
            for k in -1..=1i64 {
                for l in -1..=1i64 {
                    let n = j - k + l;
                    if n != j && n != l && k != j && k != l {
                        brute += 1;
                    }
                }
            }
        }
        assert_eq!(enumerate_assignments(&g, 1, 1 << 20).unwrap().len(), brute);

        let s = three_leaves(NodeKind::Simple);
        let all = enumerate_assignments(&s, 1, 1 << 20).unwrap();
        assert_eq!(all.len(), 3);
        for a in all {
            assert!(a.values().iter().all(|&x| x == a.root()));
        }
        assert!(matches!(enumerate_assignments(&g, 10, 100), Err(Error::Cap { .. })));
    }

    #[test]
    fn walker_matches_completion_on_all_small_trees() {
        let n = 2i64;
        for k in 0..=2 {
            for t in enumerate_ornamented(k, false, false, EnumLimits::default()).unwrap() {
                let walked: HashSet<_> = enumerate_assignments(&t, n as u64, 1 << 30).unwrap().into_iter().collect();
                let leaves = t.tree().leaf_count();
                let mut expected = HashSet::new();
                let mut tuple = vec![-n; leaves];
                loop {
                    if let Ok(a) = complete_assignment(&t, &tuple) {
                        expected.insert(a);
                    }
                    let mut i = 0;
                    while i < leaves && tuple[i] == n {
                        tuple[i] = -n;
                        i += 1;
                    }
                    if i == leaves {
                        break;
                    }
                    tuple[i] += 1;
                }
                assert_eq!(walked, expected, "{t}");
            }
        }
    }

    #[test]
    fn sigma_examples() {
        assert_eq!(sigma(1, 2, 3, 2), -2);
        assert_eq!(2 * (2 - 3), -2);
        assert_eq!(sigma(0, 0, 0, 0), 0);
        assert_eq!(sigma(5, 3, 1, 3), -8);
        assert_eq!(2 * (3 - 5) * (3 - 1), -8);
    }

    #[test]
    fn sigma_factorization_on_random_tuples() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for _ in 0..100_000 {
            let j = rng.gen_range(-1000i64..=1000);
            let k = rng.gen_range(-1000i64..=1000);
            let l = rng.gen_range(-1000i64..=1000);
            let n = j - k + l;
            assert_eq!(sigma(j, k, l, n), 2 * (n - j) * (n - l));
            assert_eq!(sigma(j, k, l, n), 2 * (k - l) * (k - j));
        }
    }

    #[test]
    fn rho_cases() {
        let g = three_leaves(NodeKind::General);
        let a = complete_assignment(&g, &[1, 2, 3]).unwrap();
        assert_eq!(rho_node(&g, &a, 1), 0);
        assert_eq!(rho_node(&g, &a, 0), sigma_node(g.tree(), &a, 0));

        // two levels, eps = 0 everywhere: ρ_root = σ_root
        let l = OrnamentedTree::leaf(Sign::Plus);
        let two = OrnamentedTree::join(NodeKind::General, Sign::Plus, [&g, &l, &l], [0; 3]);
        let a = complete_assignment(&two, &[1, 2, 3, 5, 7]).unwrap();
        assert_eq!(rho_node(&two, &a, 0), sigma_node(two.tree(), &a, 0));
        let with_eps = two.with_eps(&[-1]).unwrap();
        assert_eq!(
            rho_node(&with_eps, &a, 0),
            sigma_node(two.tree(), &a, 0) - sigma_node(two.tree(), &a, 1)
        );
    }

    #[test]
    fn frozen_classification_examples() {
        let fp = FrozenParams::default();
        let s = three_leaves(NodeKind::Simple);
        for a in enumerate_assignments(&s, 3, 1 << 20).unwrap() {
            assert_eq!(classify_frozen(&s, &a, fp)[0], Some(FrozenLabel::Exceptional));
        }
        let g = three_leaves(NodeKind::General);
        for n in 0..=3 {
            for a in enumerate_assignments(&g, n, 1 << 20).unwrap() {
                assert_eq!(classify_frozen(&g, &a, fp)[0], Some(FrozenLabel::Alive));
            }
        }
    }

    #[test]
    fn partition_examples() {
        let fp = FrozenParams::default();
        let g = three_leaves(NodeKind::General);
        let parts = weathered_partition(&g, 2, fp, 1 << 20).unwrap();
        assert_eq!(parts.len(), 1);
        assert!(parts.contains_key(&Vec::new()));

        let s = three_leaves(NodeKind::Simple);
        let parts = weathered_partition(&s, 2, fp, 1 << 20).unwrap();
        assert_eq!(parts.keys().collect::<Vec<_>>(), vec![&vec![0]]);
    }

    #[test]
    fn leaf_linear_relation_and_injectivity() {
        for k in 0..=2 {
            for t in enumerate_ornamented(k, false, false, EnumLimits::default()).unwrap() {
                let parity = t.tree().slot_parity();
                let leaves = t.tree().leaves();
                let all = enumerate_assignments(&t, 2, 1 << 30).unwrap();
                let mut seen = HashSet::new();
                for a in &all {
                    let rel: i64 = leaves.iter().map(|&w| parity[w].as_int() * a.get(w)).sum();
                    assert_eq!(rel, a.root());
                    assert!(seen.insert(a.leaf_values(t.tree())));
                }
            }
        }
    }

    #[test]
    fn divisor_counts() {
        assert_eq!(divisor_count(1).unwrap(), 1);
        assert_eq!(divisor_count(12).unwrap(), 6);
        assert_eq!(divisor_count(36).unwrap(), 9);
        assert!(divisor_count(0).is_err());
        for m in 1..500u64 {
            let brute = (1..=m).filter(|d| m % d == 0).count() as u64;
            assert_eq!(divisor_count(m).unwrap(), brute);
        }
    }

    #[test]
    fn frozen_params_validation() {
        assert!(FrozenParams::new(0.0, 0.1).is_err());
        assert!(FrozenParams::new(0.3, 0.1).is_err());
        assert!(FrozenParams::new(0.1, 1.0).is_err());
        assert!(FrozenParams::new(0.1, 0.5).is_ok());
    }

    #[test]
    fn csv_dumps() {
        let g = three_leaves(NodeKind::General);
        let all = enumerate_assignments(&g, 1, 1 << 20).unwrap();
        let mut buf = Vec::new();
        write_assignments_csv(&mut buf, &all[..2]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.matches("node_id,j").count(), 2);
        assert!(text.contains("\n\nnode_id,j\n"));

        let mut buf = Vec::new();
        write_frozen_rows(&mut buf, &g, 0, &all[0], FrozenParams::default()).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("\"(G+ L+ L- L+)\",0,0,"));
        assert!(text.trim_end().ends_with("alive"));
    }
}
