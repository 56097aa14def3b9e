//! Knowledge compilation to a smooth, deterministic and decomposable circuit.
//!
//! The compiler builds a reduced ordered BDD by Shannon expansion with a
//! computed table, then emits each decision node as
//! `Or(And(lit, hi), And(not lit, lo))`, which is deterministic and
//! decomposable by construction. A smoothing pass inserts `(v or not v)`
//! gadgets over comparison variables so that the children of every Or node
//! mention the same comparison variables; derived atoms are exempt since
//! their label pair does not require it on satisfying paths of completion
//! formulas.

use crate::formula::{Formula, PropFormula, PropVarId, VarMeta};
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CircuitError {
    #[error("compilation exceeded the node budget of {0}")]
    CompilationBudgetExceeded(usize),
    #[error("formula has {0} variables, above the cap of {1}")]
    VariableCapExceeded(usize, usize),
}

#[derive(Debug, Clone, Copy)]
pub struct CompileOptions {
    pub node_cap: usize,
    pub var_cap: usize,
}

impl Default for CompileOptions {
    fn default() -> Self {
        CompileOptions {
            node_cap: 10_000_000,
            var_cap: 10_000,
        }
    }
}

// ---------------------------------------------------------------------------
// Reduced ordered BDD with hash consing
// ---------------------------------------------------------------------------

type BddRef = u32;
const BDD_FALSE: BddRef = u32::MAX;
const BDD_TRUE: BddRef = u32::MAX - 1;

#[derive(Clone, Copy)]
struct BddNode {
    level: u32,
    lo: BddRef,
    hi: BddRef,
}

struct Bdd {
    nodes: Vec<BddNode>,
    dedup: HashMap<(u32, BddRef, BddRef), BddRef>,
    and_memo: HashMap<(BddRef, BddRef), BddRef>,
    or_memo: HashMap<(BddRef, BddRef), BddRef>,
    not_memo: HashMap<BddRef, BddRef>,
    node_cap: usize,
}

impl Bdd {
    fn new(node_cap: usize) -> Self {
        Bdd {
            nodes: Vec::new(),
            dedup: HashMap::new(),
            and_memo: HashMap::new(),
            or_memo: HashMap::new(),
            not_memo: HashMap::new(),
            node_cap,
        }
    }

    fn mk(&mut self, level: u32, lo: BddRef, hi: BddRef) -> Result<BddRef, CircuitError> {
        if lo == hi {
            return Ok(lo);
        }
        if let Some(&r) = self.dedup.get(&(level, lo, hi)) {
            return Ok(r);
        }
        if self.nodes.len() >= self.node_cap {
            return Err(CircuitError::CompilationBudgetExceeded(self.node_cap));
        }
        let r = self.nodes.len() as BddRef;
        self.nodes.push(BddNode { level, lo, hi });
        self.dedup.insert((level, lo, hi), r);
        Ok(r)
    }

    fn level(&self, r: BddRef) -> u32 {
        if r == BDD_FALSE || r == BDD_TRUE {
            u32::MAX
        } else {
            self.nodes[r as usize].level
        }
    }

    fn cofactors(&self, r: BddRef, level: u32) -> (BddRef, BddRef) {
        if r == BDD_FALSE || r == BDD_TRUE || self.nodes[r as usize].level != level {
            (r, r)
        } else {
            let n = self.nodes[r as usize];
            (n.lo, n.hi)
        }
    }

    fn var(&mut self, level: u32) -> Result<BddRef, CircuitError> {
        self.mk(level, BDD_FALSE, BDD_TRUE)
    }

    fn not(&mut self, a: BddRef) -> Result<BddRef, CircuitError> {
        match a {
            BDD_FALSE => return Ok(BDD_TRUE),
            BDD_TRUE => return Ok(BDD_FALSE),
            _ => {}
        }
        if let Some(&r) = self.not_memo.get(&a) {
            return Ok(r);
        }
        let n = self.nodes[a as usize];
        let lo = self.not(n.lo)?;
        let hi = self.not(n.hi)?;
        let r = self.mk(n.level, lo, hi)?;
        self.not_memo.insert(a, r);
        Ok(r)
    }

    fn and(&mut self, a: BddRef, b: BddRef) -> Result<BddRef, CircuitError> {
        match (a, b) {
            (BDD_FALSE, _) | (_, BDD_FALSE) => return Ok(BDD_FALSE),
            (BDD_TRUE, x) | (x, BDD_TRUE) => return Ok(x),
            _ if a == b => return Ok(a),
            _ => {}
        }
        let key = (a.min(b), a.max(b));
        if let Some(&r) = self.and_memo.get(&key) {
            return Ok(r);
        }
        let level = self.level(a).min(self.level(b));
        let (alo, ahi) = self.cofactors(a, level);
        let (blo, bhi) = self.cofactors(b, level);
        let lo = self.and(alo, blo)?;
        let hi = self.and(ahi, bhi)?;
        let r = self.mk(level, lo, hi)?;
        self.and_memo.insert(key, r);
        Ok(r)
    }

    fn or(&mut self, a: BddRef, b: BddRef) -> Result<BddRef, CircuitError> {
        match (a, b) {
            (BDD_TRUE, _) | (_, BDD_TRUE) => return Ok(BDD_TRUE),
            (BDD_FALSE, x) | (x, BDD_FALSE) => return Ok(x),
            _ if a == b => return Ok(a),
            _ => {}
        }
        let key = (a.min(b), a.max(b));
        if let Some(&r) = self.or_memo.get(&key) {
            return Ok(r);
        }
        let level = self.level(a).min(self.level(b));
        let (alo, ahi) = self.cofactors(a, level);
        let (blo, bhi) = self.cofactors(b, level);
        let lo = self.or(alo, blo)?;
        let hi = self.or(ahi, bhi)?;
        let r = self.mk(level, lo, hi)?;
        self.or_memo.insert(key, r);
        Ok(r)
    }

    fn build(
        &mut self,
        f: &Formula,
        var_level: &HashMap<PropVarId, u32>,
    ) -> Result<BddRef, CircuitError> {
        Ok(match f {
            Formula::True => BDD_TRUE,
            Formula::False => BDD_FALSE,
            Formula::Var(v) => self.var(var_level[v])?,
            Formula::Not(inner) => {
                let x = self.build(inner, var_level)?;
                self.not(x)?
            }
            Formula::And(fs) => {
                let mut acc = BDD_TRUE;
                for g in fs {
                    let x = self.build(g, var_level)?;
                    acc = self.and(acc, x)?;
                    if acc == BDD_FALSE {
                        break;
                    }
                }
                acc
            }
            Formula::Or(fs) => {
                let mut acc = BDD_FALSE;
                for g in fs {
                    let x = self.build(g, var_level)?;
                    acc = self.or(acc, x)?;
                    if acc == BDD_TRUE {
                        break;
                    }
                }
                acc
            }
        })
    }
}

// ---------------------------------------------------------------------------
// Circuit
// ---------------------------------------------------------------------------

pub type NodeRef = u32;

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    TrueLeaf,
    FalseLeaf,
    Literal { var: PropVarId, positive: bool },
    And(Vec<NodeRef>),
    Or(Vec<NodeRef>),
}

/// A smooth deterministic decomposable circuit over the variables of a
/// [`PropFormula`]. `smoothable[v]` marks comparison variables (the ones the
/// smoothing pass covers).
#[derive(Debug, Clone)]
pub struct Circuit {
    pub nodes: Vec<Node>,
    pub root: NodeRef,
    pub var_count: usize,
    pub smoothable: Vec<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StructureReport {
    pub decomposable: bool,
    pub deterministic: bool,
    pub smooth: bool,
}

impl Circuit {
    fn push(&mut self, n: Node) -> NodeRef {
        let r = self.nodes.len() as NodeRef;
        self.nodes.push(n);
        r
    }

    pub fn node(&self, r: NodeRef) -> &Node {
        &self.nodes[r as usize]
    }

    /// Memoized bottom-up evaluation in any semiring.
    pub fn evaluate<T: Clone>(
        &self,
        leaf: &mut impl FnMut(PropVarId, bool) -> T,
        add: &impl Fn(T, T) -> T,
        mul: &impl Fn(T, T) -> T,
        zero: T,
        one: T,
    ) -> T {
        self.evaluate_all(leaf, add, mul, zero, one)[self.root as usize].clone()
    }

    /// Evaluates every node, returning the per-node values (used by the
    /// golden circuit tests).
    pub fn evaluate_all<T: Clone>(
        &self,
        leaf: &mut impl FnMut(PropVarId, bool) -> T,
        add: &impl Fn(T, T) -> T,
        mul: &impl Fn(T, T) -> T,
        zero: T,
        one: T,
    ) -> Vec<T> {
        let mut values: Vec<T> = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let v = match node {
                Node::TrueLeaf => one.clone(),
                Node::FalseLeaf => zero.clone(),
                Node::Literal { var, positive } => leaf(*var, *positive),
                Node::And(children) => children
                    .iter()
                    .map(|&c| values[c as usize].clone())
                    .fold(one.clone(), |a, b| mul(a, b)),
                Node::Or(children) => children
                    .iter()
                    .map(|&c| values[c as usize].clone())
                    .fold(zero.clone(), |a, b| add(a, b)),
            };
            values.push(v);
        }
        values
    }

    /// Variable sets per node (all variables, and comparison variables only).
    fn var_sets(&self) -> (Vec<VarSet>, Vec<VarSet>) {
        let words = self.var_count.div_ceil(64);
        let mut all = Vec::with_capacity(self.nodes.len());
        let mut smooth_only = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let (a, s) = match node {
                Node::TrueLeaf | Node::FalseLeaf => (VarSet::new(words), VarSet::new(words)),
                Node::Literal { var, .. } => {
                    let mut a = VarSet::new(words);
                    a.insert(var.index());
                    let mut s = VarSet::new(words);
                    if self.smoothable[var.index()] {
                        s.insert(var.index());
                    }
                    (a, s)
                }
                Node::And(children) | Node::Or(children) => {
                    let mut a = VarSet::new(words);
                    let mut s = VarSet::new(words);
                    for &c in children {
                        a.union_with(&all[c as usize]);
                        s.union_with(&smooth_only[c as usize]);
                    }
                    (a, s)
                }
            };
            all.push(a);
            smooth_only.push(s);
        }
        (all, smooth_only)
    }

    /// Inserts `(v or not v)` gadgets under Or nodes so that all non-false
    /// children mention the same comparison variables. Derived-atom
    /// variables are skipped.
    pub fn smooth(&self) -> Circuit {
        let (_, smooth_sets) = self.var_sets();
        let mut out = Circuit {
            nodes: Vec::new(),
            root: 0,
            var_count: self.var_count,
            smoothable: self.smoothable.clone(),
        };
        let mut gadgets: HashMap<usize, NodeRef> = HashMap::new();
        let mut memo: HashMap<NodeRef, NodeRef> = HashMap::new();
        let root = self.smooth_node(self.root, &smooth_sets, &mut out, &mut gadgets, &mut memo);
        out.root = root;
        out
    }

    fn smooth_node(
        &self,
        r: NodeRef,
        smooth_sets: &[VarSet],
        out: &mut Circuit,
        gadgets: &mut HashMap<usize, NodeRef>,
        memo: &mut HashMap<NodeRef, NodeRef>,
    ) -> NodeRef {
        if let Some(&m) = memo.get(&r) {
            return m;
        }
        let new_ref = match self.node(r) {
            Node::TrueLeaf => out.push(Node::TrueLeaf),
            Node::FalseLeaf => out.push(Node::FalseLeaf),
            Node::Literal { var, positive } => out.push(Node::Literal {
                var: *var,
                positive: *positive,
            }),
            Node::And(children) => {
                let cs: Vec<NodeRef> = children
                    .iter()
                    .map(|&c| self.smooth_node(c, smooth_sets, out, gadgets, memo))
                    .collect();
                out.push(Node::And(cs))
            }
            Node::Or(children) => {
                let mut target = VarSet::new(smooth_sets[r as usize].words.len());
                for &c in children {
                    if !matches!(self.node(c), Node::FalseLeaf) {
                        target.union_with(&smooth_sets[c as usize]);
                    }
                }
                let mut new_children = Vec::with_capacity(children.len());
                for &c in children {
                    let converted = self.smooth_node(c, smooth_sets, out, gadgets, memo);
                    if matches!(self.node(c), Node::FalseLeaf) {
                        new_children.push(converted);
                        continue;
                    }
                    let missing = target.difference(&smooth_sets[c as usize]);
                    if missing.is_empty() {
                        new_children.push(converted);
                    } else {
                        let mut parts = vec![converted];
                        for v in missing {
                            let g = *gadgets.entry(v).or_insert_with(|| {
                                let pos = out.push(Node::Literal {
                                    var: PropVarId(v as u32),
                                    positive: true,
                                });
                                let neg = out.push(Node::Literal {
                                    var: PropVarId(v as u32),
                                    positive: false,
                                });
                                out.push(Node::Or(vec![pos, neg]))
                            });
                            parts.push(g);
                        }
                        new_children.push(out.push(Node::And(parts)));
                    }
                }
                out.push(Node::Or(new_children))
            }
        };
        memo.insert(r, new_ref);
        new_ref
    }

    /// Verifies decomposability, determinism and smoothness structurally.
    pub fn check_structure(&self) -> StructureReport {
        let (all_sets, smooth_sets) = self.var_sets();
        let mut decomposable = true;
        let mut deterministic = true;
        let mut smooth = true;
        for (i, node) in self.nodes.iter().enumerate() {
            match node {
                Node::And(children) => {
                    let words = all_sets[i].words.len();
                    let mut acc = VarSet::new(words);
                    for &c in children {
                        if !acc.disjoint(&all_sets[c as usize]) {
                            decomposable = false;
                        }
                        acc.union_with(&all_sets[c as usize]);
                    }
                }
                Node::Or(children) => {
                    let live: Vec<NodeRef> = children
                        .iter()
                        .copied()
                        .filter(|&c| !matches!(self.node(c), Node::FalseLeaf))
                        .collect();
                    for (ai, &a) in live.iter().enumerate() {
                        for &b in &live[ai + 1..] {
                            if !self.decided_apart(a, b) {
                                deterministic = false;
                            }
                        }
                    }
                    for w in windows2(&live) {
                        if smooth_sets[w.0 as usize] != smooth_sets[w.1 as usize] {
                            smooth = false;
                        }
                    }
                }
                _ => {}
            }
        }
        StructureReport {
            decomposable,
            deterministic,
            smooth,
        }
    }

    /// True when the two Or children carry opposite literals of a common
    /// variable among their top-level conjuncts.
    fn decided_apart(&self, a: NodeRef, b: NodeRef) -> bool {
        let decision_lits = |r: NodeRef| -> Vec<(PropVarId, bool)> {
            match self.node(r) {
                Node::Literal { var, positive } => vec![(*var, *positive)],
                Node::And(children) => children
                    .iter()
                    .filter_map(|&c| match self.node(c) {
                        Node::Literal { var, positive } => Some((*var, *positive)),
                        _ => None,
                    })
                    .collect(),
                _ => Vec::new(),
            }
        };
        let da = decision_lits(a);
        let db = decision_lits(b);
        da.iter()
            .any(|&(v, s)| db.iter().any(|&(w, t)| v == w && s != t))
    }

    /// Model count over the declared variables; the circuit must be smooth
    /// over its comparison variables and the remaining (root-missing)
    /// variables are counted as free.
    pub fn model_count(&self) -> u128 {
        let (all_sets, _) = self.var_sets();
        let counts = self.evaluate_all(
            &mut |_, _| 1u128,
            &|a, b| a + b,
            &|a, b| a * b,
            0u128,
            1u128,
        );
        // Inside the circuit, an Or child missing k variables relative to
        // its siblings stands for 2^k assignments; smoothing has normalized
        // comparison variables, and BDD emission never skips a derived
        // variable on a satisfying path. What remains is the global factor.
        let mut per_node: Vec<u128> = counts;
        let missing = self.var_count - all_sets[self.root as usize].len();
        per_node[self.root as usize] <<= missing;
        per_node[self.root as usize]
    }

    pub fn to_dot(&self, vars: &[crate::formula::PropVar]) -> String {
        let mut out = String::from("digraph circuit {\n  node [shape=box];\n");
        for (i, node) in self.nodes.iter().enumerate() {
            let label = match node {
                Node::TrueLeaf => "true".to_string(),
                Node::FalseLeaf => "false".to_string(),
                Node::Literal { var, positive } => {
                    let name = &vars[var.index()].name;
                    if *positive {
                        name.clone()
                    } else {
                        format!("not {name}")
                    }
                }
                Node::And(_) => "*".to_string(),
                Node::Or(_) => "+".to_string(),
            };
            out.push_str(&format!(
                "  n{i} [label=\"{}\"];\n",
                label.replace('"', "\\\"")
            ));
            if let Node::And(children) | Node::Or(children) = node {
                for c in children {
                    out.push_str(&format!("  n{i} -> n{c};\n"));
                }
            }
        }
        out.push_str(&format!("  root -> n{};\n  root [shape=plaintext];\n}}\n", self.root));
        out
    }

    /// Number of reachable nodes (diagnostics).
    pub fn size(&self) -> usize {
        self.nodes.len()
    }
}

fn windows2(xs: &[NodeRef]) -> impl Iterator<Item = (NodeRef, NodeRef)> + '_ {
    xs.windows(2).map(|w| (w[0], w[1]))
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct VarSet {
    words: Vec<u64>,
}

impl VarSet {
    fn new(words: usize) -> Self {
        VarSet {
            words: vec![0; words],
        }
    }

    fn insert(&mut self, i: usize) {
        self.words[i / 64] |= 1 << (i % 64);
    }

    fn union_with(&mut self, other: &VarSet) {
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a |= b;
        }
    }

    fn disjoint(&self, other: &VarSet) -> bool {
        self.words.iter().zip(&other.words).all(|(a, b)| a & b == 0)
    }

    fn len(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    fn difference(&self, other: &VarSet) -> Vec<usize> {
        let mut out = Vec::new();
        for (wi, (a, b)) in self.words.iter().zip(&other.words).enumerate() {
            let mut diff = a & !b;
            while diff != 0 {
                let bit = diff.trailing_zeros() as usize;
                out.push(wi * 64 + bit);
                diff &= diff - 1;
            }
        }
        out
    }
}

/// Compiles a propositional formula to a deterministic decomposable circuit
/// (smoothing is a separate pass; see [`Circuit::smooth`]).
pub fn compile(f: &PropFormula, opts: CompileOptions) -> Result<Circuit, CircuitError> {
    let smoothable: Vec<bool> = f
        .vars
        .iter()
        .map(|v| matches!(v.meta, VarMeta::Comparison { .. }))
        .collect();
    compile_with_order(
        &f.root,
        f.var_count(),
        f.variable_order(),
        smoothable,
        opts,
    )
}

/// Compiles a raw formula under an explicit variable order; `smoothable`
/// marks the variables the smoothing pass must cover.
pub fn compile_with_order(
    root: &Formula,
    var_count: usize,
    order: &[PropVarId],
    smoothable: Vec<bool>,
    opts: CompileOptions,
) -> Result<Circuit, CircuitError> {
    if var_count > opts.var_cap {
        return Err(CircuitError::VariableCapExceeded(var_count, opts.var_cap));
    }
    let mut var_level: HashMap<PropVarId, u32> = HashMap::new();
    for (i, v) in order.iter().enumerate() {
        var_level.insert(*v, i as u32);
    }
    // Any variable missing from the order goes below the listed ones.
    let mut next = order.len() as u32;
    for i in 0..var_count {
        var_level.entry(PropVarId(i as u32)).or_insert_with(|| {
            let l = next;
            next += 1;
            l
        });
    }
    let level_var: HashMap<u32, PropVarId> =
        var_level.iter().map(|(&v, &l)| (l, v)).collect();

    let mut bdd = Bdd::new(opts.node_cap);
    let root_ref = bdd.build(root, &var_level)?;

    let mut circuit = Circuit {
        nodes: Vec::new(),
        root: 0,
        var_count,
        smoothable,
    };
    let mut memo: HashMap<BddRef, NodeRef> = HashMap::new();
    let root_node = emit(&bdd, root_ref, &level_var, &mut circuit, &mut memo);
    circuit.root = root_node;
    Ok(circuit)
}

/// Emits a BDD node as `Or(And(lit, hi), And(not lit, lo))`, dropping false
/// branches.
fn emit(
    bdd: &Bdd,
    r: BddRef,
    level_var: &HashMap<u32, PropVarId>,
    circuit: &mut Circuit,
    memo: &mut HashMap<BddRef, NodeRef>,
) -> NodeRef {
    if r == BDD_TRUE {
        return *memo
            .entry(r)
            .or_insert_with(|| circuit.push(Node::TrueLeaf));
    }
    if r == BDD_FALSE {
        return *memo
            .entry(r)
            .or_insert_with(|| circuit.push(Node::FalseLeaf));
    }
    if let Some(&m) = memo.get(&r) {
        return m;
    }
    let n = bdd.nodes[r as usize];
    let var = level_var[&n.level];
    let hi = emit(bdd, n.hi, level_var, circuit, memo);
    let lo = emit(bdd, n.lo, level_var, circuit, memo);

    let mut branches = Vec::new();
    if !matches!(circuit.node(hi), Node::FalseLeaf) {
        let lit = circuit.push(Node::Literal {
            var,
            positive: true,
        });
        let branch = if matches!(circuit.node(hi), Node::TrueLeaf) {
            lit
        } else {
            circuit.push(Node::And(vec![lit, hi]))
        };
        branches.push(branch);
    }
    if !matches!(circuit.node(lo), Node::FalseLeaf) {
        let lit = circuit.push(Node::Literal {
            var,
            positive: false,
        });
        let branch = if matches!(circuit.node(lo), Node::TrueLeaf) {
            lit
        } else {
            circuit.push(Node::And(vec![lit, lo]))
        };
        branches.push(branch);
    }
    let node = match branches.len() {
        0 => circuit.push(Node::FalseLeaf),
        1 => branches[0],
        _ => circuit.push(Node::Or(branches)),
    };
    memo.insert(r, node);
    node
}
