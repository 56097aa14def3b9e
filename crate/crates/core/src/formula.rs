//! Propositional encoding of the ground DF-PLP core via Clark's completion.
//!
//! Derived atoms become biconditionals with the disjunction of their rule
//! bodies; comparison atoms become leaf variables. Comparisons that mention a
//! single childless random variable with a statically known finite support
//! are rewritten over that variable's *selector* equalities (`v =:= value`)
//! in chain form, so the symbolic labeler can marginalize the variable
//! exactly — with only Boolean variables this reduces to the classical
//! weighted-model-counting encoding of probabilistic facts.

use crate::ast::{Atom, CmpOp};
use crate::transform::{
    CExpr, CoreCmp, CoreLit, FiniteSupport, GroundDfplpProgram, RvId, SupportKind,
};
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FormulaError {
    #[error("the rule dependency graph is cyclic: {0}")]
    CyclicRuleDependency(String),
    #[error("evidence atom {0} does not occur in the relevant ground program")]
    UnknownEvidenceAtom(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PropVarId(pub u32);

impl PropVarId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// For a chain-encoded finite variable: which support entry this selector
/// picks and its conditional selection probability given that no earlier
/// entry was picked.
#[derive(Debug, Clone)]
pub struct SelectorInfo {
    pub var: RvId,
    pub entry: usize,
    pub value: f64,
    /// `p_k / (1 - p_1 - ... - p_{k-1})`; constant when the support weights
    /// are constant.
    pub weight: CExpr,
}

#[derive(Debug, Clone)]
pub enum VarMeta {
    /// A derived (regular) ground atom.
    Derived(Atom),
    /// A comparison atom over random variables; `selector` is set when the
    /// variable is one of the chain equalities of a finite-support variable.
    Comparison {
        cmp: CoreCmp,
        selector: Option<SelectorInfo>,
    },
}

#[derive(Debug, Clone)]
pub struct PropVar {
    pub id: PropVarId,
    pub name: String,
    pub meta: VarMeta,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Formula {
    Var(PropVarId),
    Not(Box<Formula>),
    And(Vec<Formula>),
    Or(Vec<Formula>),
    True,
    False,
}

impl Formula {
    pub fn not(f: Formula) -> Formula {
        match f {
            Formula::True => Formula::False,
            Formula::False => Formula::True,
            Formula::Not(inner) => *inner,
            other => Formula::Not(Box::new(other)),
        }
    }

    pub fn and(fs: Vec<Formula>) -> Formula {
        let mut out = Vec::new();
        for f in fs {
            match f {
                Formula::True => {}
                Formula::False => return Formula::False,
                Formula::And(inner) => out.extend(inner),
                other => out.push(other),
            }
        }
        match out.len() {
            0 => Formula::True,
            1 => out.pop().unwrap(),
            _ => Formula::And(out),
        }
    }

    pub fn or(fs: Vec<Formula>) -> Formula {
        let mut out = Vec::new();
        for f in fs {
            match f {
                Formula::False => {}
                Formula::True => return Formula::True,
                Formula::Or(inner) => out.extend(inner),
                other => out.push(other),
            }
        }
        match out.len() {
            0 => Formula::False,
            1 => out.pop().unwrap(),
            _ => Formula::Or(out),
        }
    }

    pub fn iff(a: Formula, b: Formula) -> Formula {
        Formula::and(vec![
            Formula::or(vec![Formula::not(a.clone()), b.clone()]),
            Formula::or(vec![a, Formula::not(b)]),
        ])
    }

    pub fn eval(&self, assign: &impl Fn(PropVarId) -> bool) -> bool {
        match self {
            Formula::Var(v) => assign(*v),
            Formula::Not(f) => !f.eval(assign),
            Formula::And(fs) => fs.iter().all(|f| f.eval(assign)),
            Formula::Or(fs) => fs.iter().any(|f| f.eval(assign)),
            Formula::True => true,
            Formula::False => false,
        }
    }

    fn render(&self, vars: &[PropVar], out: &mut String) {
        match self {
            Formula::Var(v) => out.push_str(&format!("v{}", v.0 + 1)),
            Formula::Not(f) => {
                out.push_str("(not ");
                f.render(vars, out);
                out.push(')');
            }
            Formula::And(fs) => {
                out.push_str("(and");
                for f in fs {
                    out.push(' ');
                    f.render(vars, out);
                }
                out.push(')');
            }
            Formula::Or(fs) => {
                out.push_str("(or");
                for f in fs {
                    out.push(' ');
                    f.render(vars, out);
                }
                out.push(')');
            }
            Formula::True => out.push_str("true"),
            Formula::False => out.push_str("false"),
        }
    }
}

/// The propositional encoding of a ground core program.
#[derive(Debug, Clone)]
pub struct PropFormula {
    pub root: Formula,
    pub vars: Vec<PropVar>,
    /// Positive-polarity `delta_interval` leaves found in rule bodies:
    /// `(prop var, random variable, observed value)`.
    pub positive_deltas: Vec<(PropVarId, RvId, f64)>,
    atom_vars: HashMap<Atom, PropVarId>,
    order: Vec<PropVarId>,
}

impl PropFormula {
    pub fn atom_var(&self, atom: &Atom) -> Option<PropVarId> {
        self.atom_vars.get(atom).copied()
    }

    /// Variable order used by the compiler: derived atoms first (dependents
    /// before their dependencies), then comparison variables grouped by the
    /// random variable they mention.
    pub fn variable_order(&self) -> &[PropVarId] {
        &self.order
    }

    pub fn var_count(&self) -> usize {
        self.vars.len()
    }

    /// Conjoins a literal for an atom already present in the table.
    pub fn with_evidence(
        mut self,
        evidence: &[(Atom, bool)],
    ) -> Result<PropFormula, FormulaError> {
        let mut conj = vec![self.root.clone()];
        for (atom, value) in evidence {
            let var = self
                .atom_var(atom)
                .ok_or_else(|| FormulaError::UnknownEvidenceAtom(atom.to_string()))?;
            let lit = if *value {
                Formula::Var(var)
            } else {
                Formula::not(Formula::Var(var))
            };
            conj.push(lit);
        }
        self.root = Formula::and(conj);
        Ok(self)
    }

    /// Conjoins the positive literal of a derived atom (used for the query
    /// side of the conditional probability).
    pub fn with_atom(mut self, atom: &Atom) -> Result<PropFormula, FormulaError> {
        let var = self
            .atom_var(atom)
            .ok_or_else(|| FormulaError::UnknownEvidenceAtom(atom.to_string()))?;
        self.root = Formula::and(vec![self.root, Formula::Var(var)]);
        Ok(self)
    }

    /// Textual form: a variable legend followed by the formula in prefix
    /// notation. Stable, for golden tests.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for v in &self.vars {
            let kind = match &v.meta {
                VarMeta::Derived(_) => "derived",
                VarMeta::Comparison { selector: None, .. } => "comparison",
                VarMeta::Comparison {
                    selector: Some(_), ..
                } => "selector",
            };
            out.push_str(&format!("var v{} {} {}\n", v.id.0 + 1, kind, v.name));
        }
        out.push_str("formula ");
        self.root.render(&self.vars, &mut out);
        out.push('\n');
        out
    }
}

struct Builder<'c> {
    core: &'c GroundDfplpProgram,
    vars: Vec<PropVar>,
    atom_vars: HashMap<Atom, PropVarId>,
    cmp_vars: HashMap<CoreCmp, PropVarId>,
    /// Chain encodings for eligible finite-support variables.
    chains: HashMap<RvId, Vec<PropVarId>>,
    positive_deltas: Vec<(PropVarId, RvId, f64)>,
}

impl<'c> Builder<'c> {
    fn fresh(&mut self, name: String, meta: VarMeta) -> PropVarId {
        let id = PropVarId(self.vars.len() as u32);
        self.vars.push(PropVar { id, name, meta });
        id
    }

    fn atom_var(&mut self, atom: &Atom) -> PropVarId {
        if let Some(&v) = self.atom_vars.get(atom) {
            return v;
        }
        let id = self.fresh(atom.to_string(), VarMeta::Derived(atom.clone()));
        self.atom_vars.insert(atom.clone(), id);
        id
    }

    fn plain_cmp_var(&mut self, cmp: &CoreCmp) -> PropVarId {
        if let Some(&v) = self.cmp_vars.get(cmp) {
            return v;
        }
        let names = self.core.namer();
        let id = self.fresh(
            cmp.render(&names),
            VarMeta::Comparison {
                cmp: cmp.clone(),
                selector: None,
            },
        );
        self.cmp_vars.insert(cmp.clone(), id);
        id
    }

    /// The chain selector variables of an eligible finite-support variable,
    /// created on first use.
    fn chain_vars(&mut self, rv: RvId, support: &FiniteSupport) -> Vec<PropVarId> {
        if let Some(vs) = self.chains.get(&rv) {
            return vs.clone();
        }
        let selector_count = if support.rest.is_none() {
            support.entries.len().saturating_sub(1)
        } else {
            support.entries.len()
        };
        let mut prior = CExpr::Const(0.0);
        let mut ids = Vec::new();
        for k in 0..selector_count {
            let (p, value) = &support.entries[k];
            let denom = CExpr::Bin(
                crate::ast::BinOp::Sub,
                Box::new(CExpr::Const(1.0)),
                Box::new(prior.clone()),
            );
            let weight = simplify_div(p, &denom);
            let cmp = CoreCmp {
                op: CmpOp::EqArith,
                lhs: CExpr::Var(rv),
                rhs: CExpr::Const(*value),
            };
            let names = self.core.namer();
            let name = cmp.render(&names);
            let id = self.fresh(
                name,
                VarMeta::Comparison {
                    cmp: cmp.clone(),
                    selector: Some(SelectorInfo {
                        var: rv,
                        entry: k,
                        value: *value,
                        weight,
                    }),
                },
            );
            self.cmp_vars.insert(cmp, id);
            ids.push(id);
            prior = CExpr::Bin(
                crate::ast::BinOp::Add,
                Box::new(prior),
                Box::new(p.clone()),
            );
        }
        self.chains.insert(rv, ids.clone());
        ids
    }

    /// Formula for a comparison on a chain-encoded variable: the ordered
    /// disjunction of the support points satisfying it.
    fn chain_rewrite(&mut self, cmp: &CoreCmp, rv: RvId, support: &FiniteSupport) -> Formula {
        let selectors = self.chain_vars(rv, support);
        let holds_at = |value: f64| -> bool {
            let lookup = |v: RvId| {
                debug_assert_eq!(v, rv);
                value
            };
            cmp.eval(&lookup)
        };
        let mut patterns = Vec::new();
        let mut all_true = true;
        for (k, &sel) in selectors.iter().enumerate() {
            let value = support.entries[k].1;
            if holds_at(value) {
                let mut conj: Vec<Formula> = selectors[..k]
                    .iter()
                    .map(|&s| Formula::not(Formula::Var(s)))
                    .collect();
                conj.push(Formula::Var(sel));
                patterns.push(Formula::and(conj));
            } else {
                all_true = false;
            }
        }
        // The fallback point: last entry when exhaustive, rest value
        // otherwise.
        let fallback_value = match support.rest {
            None => support.entries.last().map(|(_, v)| *v),
            Some(v) => Some(v),
        };
        if let Some(value) = fallback_value {
            if holds_at(value) {
                let conj: Vec<Formula> = selectors
                    .iter()
                    .map(|&s| Formula::not(Formula::Var(s)))
                    .collect();
                patterns.push(Formula::and(conj));
            } else {
                all_true = false;
            }
        }
        if patterns.is_empty() {
            Formula::False
        } else if all_true {
            Formula::True
        } else {
            Formula::or(patterns)
        }
    }

    fn cmp_formula(&mut self, cmp: &CoreCmp, eligible: &HashMap<RvId, FiniteSupport>) -> Formula {
        let vars = cmp.vars();
        if let [rv] = vars.as_slice() {
            if let Some(support) = eligible.get(rv) {
                let support = support.clone();
                return self.chain_rewrite(cmp, *rv, &support);
            }
        }
        let id = self.plain_cmp_var(cmp);
        Formula::Var(id)
    }
}

fn simplify_div(num: &CExpr, denom: &CExpr) -> CExpr {
    match (num.const_value(), denom.const_value()) {
        (Some(n), Some(d)) if d != 0.0 => CExpr::Const(n / d),
        _ => CExpr::Bin(
            crate::ast::BinOp::Div,
            Box::new(num.clone()),
            Box::new(denom.clone()),
        ),
    }
}

/// Eligibility for the exact finite-support encoding: statically known
/// finite support, no children in the dependency graph, and every comparison
/// mentioning the variable mentions only it.
fn eligible_chain_vars(core: &GroundDfplpProgram) -> HashMap<RvId, FiniteSupport> {
    let mut has_child = vec![false; core.vars.len()];
    for v in &core.vars {
        for p in v.dist.parent_vars() {
            has_child[p.index()] = true;
        }
    }
    let mut sole_cmp_ok = vec![true; core.vars.len()];
    for rule in &core.rules {
        for lit in &rule.body {
            if let CoreLit::Cmp { cmp, .. } = lit {
                let vars = cmp.vars();
                if vars.len() > 1 {
                    for v in vars {
                        sole_cmp_ok[v.index()] = false;
                    }
                }
            }
        }
    }
    let mut out = HashMap::new();
    for v in &core.vars {
        if has_child[v.id.index()] || !sole_cmp_ok[v.id.index()] {
            continue;
        }
        if let SupportKind::Finite(fs) = &v.support {
            out.insert(v.id, fs.clone());
        }
    }
    out
}

/// Converts the ground core to its Clark completion. `extra_atoms` (queries,
/// evidence) are registered even when no rule defines them, in which case
/// their completion is `atom <-> false`.
pub fn clark_completion(
    core: &GroundDfplpProgram,
    extra_atoms: &[Atom],
) -> Result<PropFormula, FormulaError> {
    check_acyclic(core)?;

    let mut builder = Builder {
        core,
        vars: Vec::new(),
        atom_vars: HashMap::new(),
        cmp_vars: HashMap::new(),
        chains: HashMap::new(),
        positive_deltas: Vec::new(),
    };
    let eligible = eligible_chain_vars(core);

    // Group rule bodies by head, keeping first-occurrence head order.
    let mut head_order: Vec<Atom> = Vec::new();
    let mut bodies: HashMap<Atom, Vec<&CoreRuleBody>> = HashMap::new();
    struct CoreRuleBody(Vec<CoreLit>);
    let rule_bodies: Vec<(Atom, CoreRuleBody)> = core
        .rules
        .iter()
        .map(|r| (r.head.clone(), CoreRuleBody(r.body.clone())))
        .collect();
    for (head, body) in &rule_bodies {
        if !bodies.contains_key(head) {
            head_order.push(head.clone());
        }
        bodies.entry(head.clone()).or_default().push(body);
    }

    // Atoms mentioned in bodies or requested externally but never defined.
    let mut undefined: Vec<Atom> = Vec::new();
    let note_atom = |a: &Atom, undefined: &mut Vec<Atom>, bodies: &HashMap<_, _>| {
        if !bodies.contains_key(a) && !undefined.contains(a) {
            undefined.push(a.clone());
        }
    };
    for rule in &core.rules {
        for lit in &rule.body {
            if let CoreLit::Atom { atom, .. } = lit {
                note_atom(atom, &mut undefined, &bodies);
            }
        }
    }
    for a in extra_atoms {
        note_atom(a, &mut undefined, &bodies);
    }

    let mut conjuncts = Vec::new();
    for head in &head_order {
        let head_var = builder.atom_var(head);
        let mut disjuncts = Vec::new();
        for CoreRuleBody(body) in &bodies[head] {
            let mut parts = Vec::new();
            for lit in body {
                let f = match lit {
                    CoreLit::Atom { positive, atom } => {
                        let v = builder.atom_var(atom);
                        if *positive {
                            Formula::Var(v)
                        } else {
                            Formula::not(Formula::Var(v))
                        }
                    }
                    CoreLit::Cmp { positive, cmp } => {
                        let f = builder.cmp_formula(cmp, &eligible);
                        if cmp.op == CmpOp::DeltaInterval && *positive {
                            // Chain-encoded delta intervals become selector
                            // equalities; only plain leaves mark a forced
                            // observation.
                            if let Formula::Var(id) = f {
                                let is_delta_leaf = matches!(
                                    &builder.vars[id.index()].meta,
                                    VarMeta::Comparison { cmp: c, .. }
                                        if c.op == CmpOp::DeltaInterval
                                );
                                if is_delta_leaf {
                                    if let (CExpr::Var(rv), Some(w)) =
                                        (&cmp.lhs, cmp.rhs.const_value())
                                    {
                                        if !builder
                                            .positive_deltas
                                            .iter()
                                            .any(|(pid, _, _)| *pid == id)
                                        {
                                            builder.positive_deltas.push((id, *rv, w));
                                        }
                                    }
                                }
                            }
                        }
                        if *positive {
                            f
                        } else {
                            Formula::not(f)
                        }
                    }
                };
                parts.push(f);
            }
            disjuncts.push(Formula::and(parts));
        }
        conjuncts.push(Formula::iff(
            Formula::Var(head_var),
            Formula::or(disjuncts),
        ));
    }
    for atom in &undefined {
        let v = builder.atom_var(atom);
        conjuncts.push(Formula::not(Formula::Var(v)));
    }

    let root = Formula::and(conjuncts);
    let order = variable_order(core, &builder.vars, &head_order, &bodies_edges(core));
    Ok(PropFormula {
        root,
        vars: builder.vars,
        positive_deltas: builder.positive_deltas,
        atom_vars: builder.atom_vars,
        order,
    })
}

fn bodies_edges(core: &GroundDfplpProgram) -> HashMap<Atom, Vec<Atom>> {
    let mut edges: HashMap<Atom, Vec<Atom>> = HashMap::new();
    for rule in &core.rules {
        let entry = edges.entry(rule.head.clone()).or_default();
        for lit in &rule.body {
            if let CoreLit::Atom { atom, .. } = lit {
                if !entry.contains(atom) {
                    entry.push(atom.clone());
                }
            }
        }
    }
    edges
}

fn check_acyclic(core: &GroundDfplpProgram) -> Result<(), FormulaError> {
    let edges = bodies_edges(core);
    let mut state: HashMap<&Atom, u8> = HashMap::new();
    fn visit<'a>(
        a: &'a Atom,
        edges: &'a HashMap<Atom, Vec<Atom>>,
        state: &mut HashMap<&'a Atom, u8>,
        path: &mut Vec<String>,
    ) -> Result<(), FormulaError> {
        match state.get(a) {
            Some(1) => {
                path.push(a.to_string());
                return Err(FormulaError::CyclicRuleDependency(path.join(" -> ")));
            }
            Some(2) => return Ok(()),
            _ => {}
        }
        state.insert(a, 1);
        path.push(a.to_string());
        if let Some(next) = edges.get(a) {
            for b in next {
                visit(b, edges, state, path)?;
            }
        }
        path.pop();
        state.insert(a, 2);
        Ok(())
    }
    let mut path = Vec::new();
    for a in edges.keys() {
        visit(a, &edges, &mut state, &mut path)?;
    }
    Ok(())
}

/// Derived atoms in reverse topological order of the completion, then
/// comparison variables grouped by the random variable they mention,
/// tie-broken by first occurrence (selector chains stay adjacent and
/// ordered).
fn variable_order(
    _core: &GroundDfplpProgram,
    vars: &[PropVar],
    head_order: &[Atom],
    edges: &HashMap<Atom, Vec<Atom>>,
) -> Vec<PropVarId> {
    // Postorder over the rule graph puts dependencies first; reversing puts
    // dependents (queries) at the top of the compiled decision structure.
    let mut post: Vec<Atom> = Vec::new();
    let mut seen: HashMap<&Atom, bool> = HashMap::new();
    fn visit<'a>(
        a: &'a Atom,
        edges: &'a HashMap<Atom, Vec<Atom>>,
        seen: &mut HashMap<&'a Atom, bool>,
        post: &mut Vec<Atom>,
    ) {
        if seen.contains_key(a) {
            return;
        }
        seen.insert(a, true);
        if let Some(next) = edges.get(a) {
            for b in next {
                visit(b, edges, seen, post);
            }
        }
        post.push(a.clone());
    }
    for a in head_order {
        visit(a, edges, &mut seen, &mut post);
    }
    post.reverse();

    let atom_rank: HashMap<&Atom, usize> =
        post.iter().enumerate().map(|(i, a)| (a, i)).collect();

    let mut derived: Vec<(usize, PropVarId)> = Vec::new();
    let mut cmp_groups: Vec<(RvId, Vec<PropVarId>)> = Vec::new();
    for v in vars {
        match &v.meta {
            VarMeta::Derived(a) => {
                let rank = atom_rank.get(a).copied().unwrap_or(usize::MAX);
                derived.push((rank, v.id));
            }
            VarMeta::Comparison { cmp, .. } => {
                let group = cmp.vars().first().copied().unwrap_or(RvId(u32::MAX));
                match cmp_groups.iter_mut().find(|(g, _)| *g == group) {
                    Some((_, list)) => list.push(v.id),
                    None => cmp_groups.push((group, vec![v.id])),
                }
            }
        }
    }
    derived.sort_by_key(|&(rank, id)| (rank, id));

    let mut order: Vec<PropVarId> = derived.into_iter().map(|(_, id)| id).collect();
    for (_, group) in cmp_groups {
        order.extend(group);
    }
    order
}
