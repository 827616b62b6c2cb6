//! Multilinear tree operators: the coefficient-weighted operator `S_T(t)`,
//! the cyclicity-only `ℓ¹` operator, and the `⟨ρ⟩^{−1}`-weighted majorants.
//!
//! All three sum over leaf tuples drawn from the input supports. Work is
//! split over the first leaf's values; partial sums are merged in that
//! order, so results do not depend on the thread count.

use std::collections::{BTreeMap, HashMap};

use num_complex::Complex;
use rayon::prelude::*;

use crate::coeffs::coefficient_poly;
use crate::error::{Error, Result};
use crate::indexsets::{frozen_set, rho_all, sigma, tuple_count, AssignmentWalker, FrozenParams, IndexAssignment};
use crate::modes::{bracket, ModeSequence, SpaceParams};
use crate::scalar::{CompensatedSum, Omega, Scalar};
use crate::trees::{NodeId, OrnamentedTree, Tree};

/// Default cap on the number of leaf tuples one evaluation may visit.
pub const DEFAULT_TUPLE_BUDGET: u128 = 200_000_000;

/// One input sequence per terminal node (preorder), with conjugation flags.
#[derive(Clone, Debug, PartialEq)]
pub struct LeafInputs<T: Scalar> {
    inputs: Vec<ModeSequence<T>>,
    conj: Vec<bool>,
}

impl<T: Scalar> LeafInputs<T> {
    pub fn new(inputs: Vec<ModeSequence<T>>, conj: Vec<bool>) -> Result<Self> {
        if inputs.len() != conj.len() {
            return Err(Error::invalid("one conjugation flag per leaf input"));
        }
        Ok(Self { inputs, conj })
    }

    /// Conjugation flags taken from the leaf signs `±_w`.
    pub fn from_signs(tree: &Tree, inputs: Vec<ModeSequence<T>>) -> Result<Self> {
        let leaves = tree.leaves();
        if leaves.len() != inputs.len() {
            return Err(Error::invalid(format!(
                "tree has {} leaves but {} inputs were given",
                leaves.len(),
                inputs.len()
            )));
        }
        let conj = leaves.iter().map(|&w| tree.sign(w).is_minus()).collect();
        Ok(Self { inputs, conj })
    }

    /// The same sequence on every leaf.
    pub fn replicate(tree: &Tree, x: &ModeSequence<T>) -> Self {
        Self::from_signs(tree, vec![x.clone(); tree.leaf_count()]).expect("matching leaf count")
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn input(&self, i: usize) -> &ModeSequence<T> {
        &self.inputs[i]
    }

    pub fn is_conjugated(&self, i: usize) -> bool {
        self.conj[i]
    }

    /// `x_i(n)`, conjugated when flagged.
    #[inline]
    pub fn value(&self, i: usize, n: i64) -> Complex<T> {
        let v = self.inputs[i].get(n);
        if self.conj[i] {
            v.conj()
        } else {
            v
        }
    }

    /// Inputs replaced by their moduli (flags become irrelevant).
    pub fn moduli(&self) -> Self {
        Self {
            inputs: self
                .inputs
                .iter()
                .map(|x| x.map_values(|_, v| Complex::new(v.norm(), T::zero())))
                .collect(),
            conj: vec![false; self.conj.len()],
        }
    }

    fn domains(&self, cutoff: Option<u64>) -> Vec<Vec<i64>> {
        self.inputs
            .iter()
            .map(|x| match cutoff {
                Some(n) => x.truncate(n).support(),
                None => x.support(),
            })
            .collect()
    }
}

/// Sums `weight(𝐣) · Π_w x_w(j_w)` into output index `j_root` over every
/// walked assignment. `make_weight` builds one (possibly memoizing) weight
/// function per worker; `None` skips the assignment.
fn accumulate<T, W, M>(walker: &AssignmentWalker<'_>, domains: &[Vec<i64>], inputs: &LeafInputs<T>, make_weight: M) -> ModeSequence<T>
where
    T: Scalar,
    M: Fn() -> W + Sync,
    W: FnMut(&[i64]) -> Option<Complex<T>>,
{
    let leaves = walker.leaves();
    let partials: Vec<BTreeMap<i64, CompensatedSum<T>>> = domains[0]
        .par_iter()
        .map(|&first| {
            let mut doms = domains.to_vec();
            doms[0] = vec![first];
            let mut weight = make_weight();
            let mut acc: BTreeMap<i64, CompensatedSum<T>> = BTreeMap::new();
            walker.walk(&doms, &mut |j| {
                if let Some(w) = weight(j) {
                    let mut prod = w;
                    for (i, &leaf) in leaves.iter().enumerate() {
                        prod *= inputs.value(i, j[leaf]);
                    }
                    acc.entry(j[0]).or_default().add(prod);
                }
            });
            acc
        })
        .collect();
    let mut total: BTreeMap<i64, CompensatedSum<T>> = BTreeMap::new();
    for part in &partials {
        for (&n, s) in part {
            total.entry(n).or_default().merge(s);
        }
    }
    ModeSequence::from_entries(total.into_iter().map(|(n, s)| (n, s.value())))
}

fn check_inputs<T: Scalar>(tree: &Tree, inputs: &LeafInputs<T>) -> Result<()> {
    if inputs.len() != tree.leaf_count() {
        return Err(Error::invalid(format!(
            "tree has {} leaves but {} inputs were given",
            tree.leaf_count(),
            inputs.len()
        )));
    }
    Ok(())
}

/// `S_T(t)(x)(n) = Σ_{𝐣 ∈ J(T), j_root = n} I_T(t, 𝐣) Π_w x_w(j_w)`, leaves
/// restricted to the input supports within `[−cutoff, cutoff]`.
///
/// `omega` enters the coefficient phases `±_u ω σ_u` only.
pub fn eval_tree_operator<T: Scalar>(
    t: &OrnamentedTree,
    inputs: &LeafInputs<T>,
    time: T,
    cutoff: u64,
    omega: Omega,
    budget: u128,
) -> Result<ModeSequence<T>> {
    let tree = t.tree();
    check_inputs(tree, inputs)?;
    let domains = inputs.domains(Some(cutoff));
    Error::check_cap("leaf tuple budget", tuple_count(&domains), budget)?;
    let walker = AssignmentWalker::for_ornamented(t, true);
    let internal: Vec<(NodeId, [NodeId; 3], i64)> = tree
        .internal_nodes()
        .into_iter()
        .map(|v| (v, tree.children(v).expect("internal"), tree.sign(v).as_int() * omega.as_int()))
        .collect();
    Ok(accumulate(&walker, &domains, inputs, || {
        let mut memo: HashMap<Vec<i64>, Complex<T>> = HashMap::new();
        let mut phases = vec![0i64; tree.len()];
        let internal = &internal;
        move |j: &[i64]| {
            let key: Vec<i64> = internal
                .iter()
                .map(|&(v, [a, b, c], s)| s * sigma(j[a], j[b], j[c], j[v]))
                .collect();
            let value = *memo.entry(key).or_insert_with_key(|key| {
                for (&(v, _, _), &p) in internal.iter().zip(key) {
                    phases[v] = p;
                }
                coefficient_poly::<T>(tree, &phases).eval(time)
            });
            Some(value)
        }
    }))
}

/// `S̃_T(y)(n) = Σ_{𝐣: j_root = n} Π_w y_w(j_w)` with only cyclicity imposed.
pub fn eval_l1_operator<T: Scalar>(tree: &Tree, inputs: &LeafInputs<T>, budget: u128) -> Result<ModeSequence<T>> {
    check_inputs(tree, inputs)?;
    let domains = inputs.domains(None);
    Error::check_cap("leaf tuple budget", tuple_count(&domains), budget)?;
    let walker = AssignmentWalker::new(tree, vec![None; tree.len()], false);
    let one = Complex::new(T::one(), T::zero());
    Ok(accumulate(&walker, &domains, inputs, || move |_: &[i64]| Some(one)))
}

/// Tree sum majorant `Σ_{𝐣 ∈ J(T)} Π_{u ∈ T⁰} ⟨ρ_u⟩^{−1} Π_w y_w(j_w)`; with
/// `frozen_filter = Some(T′)` only assignments whose frozen set is exactly
/// `T′` (sorted node ids) contribute.
pub fn eval_majorant<T: Scalar>(
    t: &OrnamentedTree,
    inputs: &LeafInputs<T>,
    cutoff: u64,
    frozen_filter: Option<&[NodeId]>,
    fp: FrozenParams,
    budget: u128,
) -> Result<ModeSequence<T>> {
    let tree = t.tree();
    check_inputs(tree, inputs)?;
    let domains = inputs.domains(Some(cutoff));
    Error::check_cap("leaf tuple budget", tuple_count(&domains), budget)?;
    let walker = AssignmentWalker::for_ornamented(t, true);
    let internal = tree.internal_nodes();
    Ok(accumulate(&walker, &domains, inputs, || {
        let internal = &internal;
        move |j: &[i64]| {
            let a = IndexAssignment::from_raw(j.to_vec());
            if let Some(filter) = frozen_filter {
                if frozen_set(t, &a, fp) != filter {
                    return None;
                }
            }
            let rho = rho_all(t, &a);
            let w = internal
                .iter()
                .map(|&u| T::one() / bracket(T::of_int(rho[u])))
                .fold(T::one(), |x, y| x * y);
            Some(Complex::new(w, T::zero()))
        }
    }))
}

/// Measured quotient `‖S_T(t)x‖_{ℓ^q} / Π_w ‖x_w‖_{ℓ^p}`.
#[allow(clippy::too_many_arguments)]
pub fn operator_quotient<T: Scalar>(
    t: &OrnamentedTree,
    inputs: &LeafInputs<T>,
    time: T,
    cutoff: u64,
    omega: Omega,
    p: f64,
    q: f64,
    budget: u128,
) -> Result<T> {
    let out = eval_tree_operator(t, inputs, time, cutoff, omega, budget)?;
    let sp = SpaceParams::lp(p)?;
    let sq = SpaceParams::lp(q)?;
    let denom = (0..inputs.len())
        .map(|i| inputs.input(i).norm_lsp(sp))
        .fold(T::one(), |a, b| a * b);
    if denom == T::zero() {
        return Ok(T::zero());
    }
    Ok(out.norm_lsp(sq) / denom)
}
