//! Relevant ground program computation.
//!
//! The grounder derives the set of potentially provable ground atoms by a
//! bottom-up fixpoint over the Herbrand instantiation (comparisons over
//! random terms and negated literals are treated as satisfiable), then keeps
//! the dependency cone of the queries, evidence and observations. Logic
//! variables inside comparison atoms are bound by unifying random subterms
//! against the heads of grounded distributional statements.

use crate::ast::*;
use std::collections::{HashMap, HashSet};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GroundError {
    #[error("unknown predicate in query or evidence: {0}")]
    UnknownPredicate(String),
    #[error("grounding exceeded {0} entries; the relevant ground program must be finite")]
    NonTerminatingGrounding(usize),
    #[error("literal `{lit}` cannot be grounded in `{clause}` (unbound variables)")]
    UngroundedLiteral { clause: String, lit: String },
    #[error("query, evidence and observation terms must be ground: {0}")]
    NonGroundTarget(String),
}

#[derive(Debug, Clone, Copy)]
pub struct GroundOptions {
    /// Bound on derived atoms, random terms and clause instances combined.
    pub max_entries: usize,
}

impl Default for GroundOptions {
    fn default() -> Self {
        GroundOptions {
            max_entries: 1_000_000,
        }
    }
}

/// A ground program: every statement instance reachable from the query task
/// by backward chaining, with an index from ground atoms to the statements
/// defining them.
#[derive(Debug, Clone)]
pub struct GroundProgram {
    pub statements: Vec<Statement>,
    pub atom_index: HashMap<Atom, Vec<usize>>,
}

impl GroundProgram {
    pub fn to_source(&self) -> String {
        let mut out = String::new();
        for s in &self.statements {
            out.push_str(&s.to_string());
            out.push('\n');
        }
        out
    }
}

type Subst = HashMap<String, Term>;

fn apply_term(t: &Term, s: &Subst) -> Term {
    match t {
        Term::Var(v) => s.get(v).cloned().unwrap_or_else(|| t.clone()),
        Term::Compound(f, args) => {
            Term::Compound(f.clone(), args.iter().map(|a| apply_term(a, s)).collect())
        }
        _ => t.clone(),
    }
}

fn apply_atom(a: &Atom, s: &Subst) -> Atom {
    Atom::new(
        a.functor.clone(),
        a.args.iter().map(|t| apply_term(t, s)).collect(),
    )
}

fn apply_expr(e: &Expr, s: &Subst) -> Expr {
    match e {
        Expr::Term(t) => Expr::Term(apply_term(t, s)),
        Expr::Neg(inner) => Expr::Neg(Box::new(apply_expr(inner, s))),
        Expr::Binary(op, a, b) => Expr::Binary(
            *op,
            Box::new(apply_expr(a, s)),
            Box::new(apply_expr(b, s)),
        ),
        Expr::Call(f, args) => {
            Expr::Call(*f, args.iter().map(|a| apply_expr(a, s)).collect())
        }
    }
}

fn apply_cmp(c: &Comparison, s: &Subst) -> Comparison {
    Comparison {
        op: c.op,
        lhs: apply_expr(&c.lhs, s),
        rhs: apply_expr(&c.rhs, s),
    }
}

fn apply_literal(l: &Literal, s: &Subst) -> Literal {
    Literal {
        positive: l.positive,
        atom: match &l.atom {
            BodyAtom::Atom(a) => BodyAtom::Atom(apply_atom(a, s)),
            BodyAtom::Cmp(c) => BodyAtom::Cmp(apply_cmp(c, s)),
        },
    }
}

fn apply_dist(d: &Distribution, s: &Subst) -> Distribution {
    match d {
        Distribution::Flip(p) => Distribution::Flip(apply_expr(p, s)),
        Distribution::Normal(a, b) => {
            Distribution::Normal(apply_expr(a, s), apply_expr(b, s))
        }
        Distribution::Beta(a, b) => Distribution::Beta(apply_expr(a, s), apply_expr(b, s)),
        Distribution::Poisson(l) => Distribution::Poisson(apply_expr(l, s)),
        Distribution::UniformCont(a, b) => {
            Distribution::UniformCont(apply_expr(a, s), apply_expr(b, s))
        }
        Distribution::Delta(v) => Distribution::Delta(apply_expr(v, s)),
        Distribution::UniformList(items) => {
            Distribution::UniformList(items.iter().map(|t| apply_term(t, s)).collect())
        }
        Distribution::Finite(pairs) => Distribution::Finite(
            pairs
                .iter()
                .map(|(p, v)| (apply_expr(p, s), apply_term(v, s)))
                .collect(),
        ),
    }
}

/// One-sided matching of a pattern (may contain variables) against a ground
/// term, extending `s`.
fn match_term(pattern: &Term, ground: &Term, s: &mut Subst) -> bool {
    match (pattern, ground) {
        (Term::Var(v), g) => match s.get(v) {
            Some(bound) => bound == g,
            None => {
                s.insert(v.clone(), g.clone());
                true
            }
        },
        (Term::Const(a), Term::Const(b)) => a == b,
        (Term::Num(a), Term::Num(b)) => a == b,
        (Term::Compound(f, fa), Term::Compound(g, ga)) => {
            f == g
                && fa.len() == ga.len()
                && fa.iter().zip(ga).all(|(p, q)| match_term(p, q, s))
        }
        _ => false,
    }
}

/// Full unification, used only to test whether a term can denote a random
/// term (pattern variables are renamed apart first).
fn unify(a: &Term, b: &Term, s: &mut Subst) -> bool {
    let a = apply_term(a, s);
    let b = apply_term(b, s);
    match (&a, &b) {
        (Term::Var(v), other) | (other, Term::Var(v)) => {
            if let Term::Var(w) = other {
                if v == w {
                    return true;
                }
            }
            s.insert(v.clone(), other.clone());
            true
        }
        (Term::Const(x), Term::Const(y)) => x == y,
        (Term::Num(x), Term::Num(y)) => x == y,
        (Term::Compound(f, fa), Term::Compound(g, ga)) => {
            f == g && fa.len() == ga.len() && fa.iter().zip(ga).all(|(p, q)| unify(p, q, s))
        }
        _ => false,
    }
}

fn rename_apart(t: &Term, tag: &str) -> Term {
    match t {
        Term::Var(v) => Term::Var(format!("{v}#{tag}")),
        Term::Compound(f, args) => Term::Compound(
            f.clone(),
            args.iter().map(|a| rename_apart(a, tag)).collect(),
        ),
        _ => t.clone(),
    }
}

/// Collects the term leaves of an expression.
fn expr_term_leaves<'a>(e: &'a Expr, out: &mut Vec<&'a Term>) {
    match e {
        Expr::Term(t) => out.push(t),
        Expr::Neg(inner) => expr_term_leaves(inner, out),
        Expr::Binary(_, a, b) => {
            expr_term_leaves(a, out);
            expr_term_leaves(b, out);
        }
        Expr::Call(_, args) => args.iter().for_each(|a| expr_term_leaves(a, out)),
    }
}

fn eval_const_expr(e: &Expr) -> Option<f64> {
    e.const_value()
}

struct Grounder<'p> {
    program: &'p Program,
    opts: GroundOptions,
    /// Ground regular atoms derivable in the over-approximation, in
    /// insertion order plus a membership set.
    derived: Vec<Atom>,
    derived_set: HashSet<Atom>,
    by_pred: HashMap<(String, usize), Vec<usize>>,
    /// Active ground random terms.
    rand_terms: Vec<Term>,
    rand_set: HashSet<Term>,
    /// Non-ground heads of distributional statements, for candidacy tests.
    rand_patterns: Vec<Term>,
    instances: Vec<(usize, Statement)>,
    instance_set: HashSet<Statement>,
}

impl<'p> Grounder<'p> {
    fn new(program: &'p Program, opts: GroundOptions) -> Self {
        let rand_patterns = program
            .statements
            .iter()
            .filter_map(|s| match s {
                Statement::DistFact { term, .. } | Statement::DistClause { term, .. } => {
                    Some(rename_apart(term, "rt"))
                }
                _ => None,
            })
            .collect();
        Grounder {
            program,
            opts,
            derived: Vec::new(),
            derived_set: HashSet::new(),
            by_pred: HashMap::new(),
            rand_terms: Vec::new(),
            rand_set: HashSet::new(),
            rand_patterns,
            instances: Vec::new(),
            instance_set: HashSet::new(),
        }
    }

    fn size(&self) -> usize {
        self.derived.len() + self.rand_terms.len() + self.instances.len()
    }

    fn check_budget(&self) -> Result<(), GroundError> {
        if self.size() > self.opts.max_entries {
            Err(GroundError::NonTerminatingGrounding(self.opts.max_entries))
        } else {
            Ok(())
        }
    }

    fn add_derived(&mut self, a: Atom) -> bool {
        if self.derived_set.contains(&a) {
            return false;
        }
        self.by_pred
            .entry((a.functor.clone(), a.args.len()))
            .or_default()
            .push(self.derived.len());
        self.derived_set.insert(a.clone());
        self.derived.push(a);
        true
    }

    fn add_rand(&mut self, t: Term) -> bool {
        if self.rand_set.contains(&t) {
            return false;
        }
        self.rand_set.insert(t.clone());
        self.rand_terms.push(t);
        true
    }

    fn add_instance(&mut self, src: usize, s: Statement) -> bool {
        if self.instance_set.contains(&s) {
            return false;
        }
        self.instance_set.insert(s.clone());
        self.instances.push((src, s));
        true
    }

    fn is_random_candidate(&self, t: &Term) -> bool {
        self.rand_patterns.iter().any(|p| {
            let mut s = Subst::new();
            unify(p, t, &mut s)
        })
    }

    /// Enumerates the substitutions under which the body is potentially
    /// satisfiable, processing literals left to right.
    fn body_substs(&self, body: &[Literal], clause_desc: &str) -> Result<Vec<Subst>, GroundError> {
        let mut substs = vec![Subst::new()];
        for lit in body {
            let mut next: Vec<Subst> = Vec::new();
            for s in &substs {
                let l = apply_literal(lit, s);
                match &l.atom {
                    BodyAtom::Atom(a) => {
                        if a.is_ground() {
                            // Negative or positive: keep as satisfiable when
                            // negative; positive requires derivability.
                            if !l.positive || self.derived_set.contains(a) {
                                next.push(s.clone());
                            }
                        } else if !l.positive {
                            return Err(GroundError::UngroundedLiteral {
                                clause: clause_desc.to_string(),
                                lit: l.to_string(),
                            });
                        } else if let Some(idxs) =
                            self.by_pred.get(&(a.functor.clone(), a.args.len()))
                        {
                            for &i in idxs {
                                let mut s2 = s.clone();
                                let mut ok = true;
                                for (p, g) in a.args.iter().zip(&self.derived[i].args) {
                                    if !match_term(p, g, &mut s2) {
                                        ok = false;
                                        break;
                                    }
                                }
                                if ok {
                                    next.push(s2);
                                }
                            }
                        }
                    }
                    BodyAtom::Cmp(c) => {
                        self.cmp_substs(c, s, clause_desc, &l, &mut next)?;
                    }
                }
            }
            substs = next;
            if substs.len() > self.opts.max_entries {
                return Err(GroundError::NonTerminatingGrounding(self.opts.max_entries));
            }
        }
        Ok(substs)
    }

    /// Extends a substitution through a comparison literal: non-ground random
    /// subterm occurrences are bound by matching against active random terms;
    /// comparisons without random subterms are evaluated.
    fn cmp_substs(
        &self,
        c: &Comparison,
        s: &Subst,
        clause_desc: &str,
        lit: &Literal,
        out: &mut Vec<Subst>,
    ) -> Result<(), GroundError> {
        let mut leaves = Vec::new();
        expr_term_leaves(&c.lhs, &mut leaves);
        expr_term_leaves(&c.rhs, &mut leaves);
        let candidates: Vec<Term> = leaves
            .into_iter()
            .filter(|t| self.is_random_candidate(t))
            .cloned()
            .collect();

        // Bind the non-ground random occurrences in all possible ways.
        let mut stack = vec![s.clone()];
        for cand in &candidates {
            let mut grown = Vec::new();
            for sub in &stack {
                let inst = apply_term(cand, sub);
                if inst.is_ground() {
                    grown.push(sub.clone());
                } else {
                    for g in &self.rand_terms {
                        let mut s2 = sub.clone();
                        if match_term(&inst, g, &mut s2) {
                            grown.push(s2);
                        }
                    }
                }
            }
            stack = grown;
        }

        for sub in stack {
            let inst = apply_cmp(c, &sub);
            let mut vars = Vec::new();
            inst.lhs.collect_vars(&mut vars);
            inst.rhs.collect_vars(&mut vars);
            if !vars.is_empty() {
                return Err(GroundError::UngroundedLiteral {
                    clause: clause_desc.to_string(),
                    lit: lit.to_string(),
                });
            }
            if candidates.is_empty() {
                // Pure arithmetic over constants: decide now.
                match (eval_const_expr(&inst.lhs), eval_const_expr(&inst.rhs)) {
                    (Some(a), Some(b)) => {
                        if inst.op.eval(a, b) == lit.positive {
                            out.push(sub);
                        }
                    }
                    _ => {
                        return Err(GroundError::UngroundedLiteral {
                            clause: clause_desc.to_string(),
                            lit: lit.to_string(),
                        })
                    }
                }
            } else {
                out.push(sub);
            }
        }
        Ok(())
    }

    fn fixpoint(&mut self) -> Result<(), GroundError> {
        loop {
            let mut changed = false;
            for (idx, stmt) in self.program.statements.iter().enumerate() {
                match stmt {
                    Statement::Clause { head, body } => {
                        for s in self.body_substs(body, &head.to_string())? {
                            let h = apply_atom(head, &s);
                            if !h.is_ground() {
                                return Err(GroundError::UngroundedLiteral {
                                    clause: head.to_string(),
                                    lit: h.to_string(),
                                });
                            }
                            let inst = Statement::Clause {
                                head: h.clone(),
                                body: body.iter().map(|l| apply_literal(l, &s)).collect(),
                            };
                            changed |= self.add_instance(idx, inst);
                            changed |= self.add_derived(h);
                        }
                    }
                    Statement::ProbFact { prob, atom } => {
                        if !atom.is_ground() {
                            return Err(GroundError::UngroundedLiteral {
                                clause: atom.to_string(),
                                lit: atom.to_string(),
                            });
                        }
                        changed |= self.add_instance(
                            idx,
                            Statement::ProbFact {
                                prob: prob.clone(),
                                atom: atom.clone(),
                            },
                        );
                        changed |= self.add_derived(atom.clone());
                    }
                    Statement::AnnotatedDisjunction { heads, body } => {
                        let desc = heads
                            .first()
                            .map(|(_, a)| a.to_string())
                            .unwrap_or_default();
                        for s in self.body_substs(body, &desc)? {
                            let inst_heads: Vec<(Expr, Atom)> = heads
                                .iter()
                                .map(|(p, a)| (apply_expr(p, &s), apply_atom(a, &s)))
                                .collect();
                            for (_, a) in &inst_heads {
                                if !a.is_ground() {
                                    return Err(GroundError::UngroundedLiteral {
                                        clause: desc.clone(),
                                        lit: a.to_string(),
                                    });
                                }
                            }
                            let inst = Statement::AnnotatedDisjunction {
                                heads: inst_heads.clone(),
                                body: body.iter().map(|l| apply_literal(l, &s)).collect(),
                            };
                            changed |= self.add_instance(idx, inst);
                            for (_, a) in inst_heads {
                                changed |= self.add_derived(a);
                            }
                        }
                    }
                    Statement::DistFact { term, dist } => {
                        if !term.is_ground() {
                            return Err(GroundError::UngroundedLiteral {
                                clause: term.to_string(),
                                lit: term.to_string(),
                            });
                        }
                        changed |= self.add_instance(
                            idx,
                            Statement::DistFact {
                                term: term.clone(),
                                dist: dist.clone(),
                            },
                        );
                        changed |= self.add_rand(term.clone());
                    }
                    Statement::DistClause { term, dist, body } => {
                        for s in self.body_substs(body, &term.to_string())? {
                            let t = apply_term(term, &s);
                            if !t.is_ground() {
                                return Err(GroundError::UngroundedLiteral {
                                    clause: term.to_string(),
                                    lit: t.to_string(),
                                });
                            }
                            let inst = Statement::DistClause {
                                term: t.clone(),
                                dist: apply_dist(dist, &s),
                                body: body.iter().map(|l| apply_literal(l, &s)).collect(),
                            };
                            changed |= self.add_instance(idx, inst);
                            changed |= self.add_rand(t);
                        }
                    }
                }
                self.check_budget()?;
            }
            if !changed {
                return Ok(());
            }
        }
    }
}

/// Computes the relevant ground program for a query task by instantiating the
/// program bottom-up and keeping the statements backward-reachable from the
/// queries, evidence and observations. Distributional statements for every
/// random term mentioned in retained comparison atoms are kept, along with
/// their ancestors.
pub fn relevant_ground_program(
    program: &Program,
    task: &QueryTask,
    opts: GroundOptions,
) -> Result<GroundProgram, GroundError> {
    let grounder = run_fixpoint(program, opts)?;

    let mut seeds: Vec<Atom> = Vec::new();
    for q in &task.queries {
        match q {
            QueryTarget::Atom(a) => seeds.push(a.clone()),
            QueryTarget::Cmp(c) => {
                return Err(GroundError::NonGroundTarget(format!(
                    "comparison query {c} must be wrapped in an auxiliary atom"
                )))
            }
        }
    }
    seeds.extend(task.evidence.iter().map(|(a, _)| a.clone()));
    for a in &seeds {
        if !a.is_ground() {
            return Err(GroundError::NonGroundTarget(a.to_string()));
        }
    }

    // Heads available in the original program, for unknown-predicate checks.
    let mut known_preds: HashSet<(String, usize)> = HashSet::new();
    for stmt in &program.statements {
        match stmt {
            Statement::Clause { head, .. } | Statement::ProbFact { atom: head, .. } => {
                known_preds.insert((head.functor.clone(), head.args.len()));
            }
            Statement::AnnotatedDisjunction { heads, .. } => {
                for (_, a) in heads {
                    known_preds.insert((a.functor.clone(), a.args.len()));
                }
            }
            _ => {}
        }
    }
    for q in &task.queries {
        if let QueryTarget::Atom(a) = q {
            if !known_preds.contains(&(a.functor.clone(), a.args.len())) {
                return Err(GroundError::UnknownPredicate(a.to_string()));
            }
        }
    }

    let seed_terms: Vec<Term> = task.observations.iter().map(|(t, _)| t.clone()).collect();
    for t in &seed_terms {
        if !t.is_ground() {
            return Err(GroundError::NonGroundTarget(t.to_string()));
        }
    }

    mark_and_collect(&grounder, seeds, seed_terms)
}

/// Grounds the whole program (used by `desugar` when no query is given).
pub fn full_ground_program(
    program: &Program,
    opts: GroundOptions,
) -> Result<GroundProgram, GroundError> {
    let grounder = run_fixpoint(program, opts)?;
    let seeds = grounder.derived.clone();
    let terms = grounder.rand_terms.clone();
    mark_and_collect(&grounder, seeds, terms)
}

fn run_fixpoint(program: &Program, opts: GroundOptions) -> Result<Grounder<'_>, GroundError> {
    let mut grounder = Grounder::new(program, opts);
    grounder.fixpoint()?;
    Ok(grounder)
}

fn mark_and_collect(
    grounder: &Grounder<'_>,
    seed_atoms: Vec<Atom>,
    seed_terms: Vec<Term>,
) -> Result<GroundProgram, GroundError> {
    // Index instances by defined atom and by defined random term.
    let mut by_atom: HashMap<Atom, Vec<usize>> = HashMap::new();
    let mut by_term: HashMap<Term, Vec<usize>> = HashMap::new();
    for (i, (_, inst)) in grounder.instances.iter().enumerate() {
        match inst {
            Statement::Clause { head, .. } => by_atom.entry(head.clone()).or_default().push(i),
            Statement::ProbFact { atom, .. } => {
                by_atom.entry(atom.clone()).or_default().push(i)
            }
            Statement::AnnotatedDisjunction { heads, .. } => {
                for (_, a) in heads {
                    by_atom.entry(a.clone()).or_default().push(i);
                }
            }
            Statement::DistFact { term, .. } | Statement::DistClause { term, .. } => {
                by_term.entry(term.clone()).or_default().push(i)
            }
        }
    }

    let mut marked = vec![false; grounder.instances.len()];
    let mut seen_atoms: HashSet<Atom> = HashSet::new();
    let mut seen_terms: HashSet<Term> = HashSet::new();
    let mut atom_stack: Vec<Atom> = seed_atoms;
    let mut term_stack: Vec<Term> = seed_terms;

    while !atom_stack.is_empty() || !term_stack.is_empty() {
        if let Some(a) = atom_stack.pop() {
            if !seen_atoms.insert(a.clone()) {
                continue;
            }
            if let Some(idxs) = by_atom.get(&a) {
                for &i in idxs {
                    if !marked[i] {
                        marked[i] = true;
                        chase_statement(
                            &grounder.instances[i].1,
                            grounder,
                            &mut atom_stack,
                            &mut term_stack,
                        );
                    }
                }
            }
        } else if let Some(t) = term_stack.pop() {
            if !seen_terms.insert(t.clone()) {
                continue;
            }
            if let Some(idxs) = by_term.get(&t) {
                for &i in idxs {
                    if !marked[i] {
                        marked[i] = true;
                        chase_statement(
                            &grounder.instances[i].1,
                            grounder,
                            &mut atom_stack,
                            &mut term_stack,
                        );
                    }
                }
            }
        }
    }

    let mut statements = Vec::new();
    let mut atom_index: HashMap<Atom, Vec<usize>> = HashMap::new();
    for (i, (_, inst)) in grounder.instances.iter().enumerate() {
        if !marked[i] {
            continue;
        }
        let new_idx = statements.len();
        match inst {
            Statement::Clause { head, .. } => {
                atom_index.entry(head.clone()).or_default().push(new_idx)
            }
            Statement::ProbFact { atom, .. } => {
                atom_index.entry(atom.clone()).or_default().push(new_idx)
            }
            Statement::AnnotatedDisjunction { heads, .. } => {
                for (_, a) in heads {
                    atom_index.entry(a.clone()).or_default().push(new_idx);
                }
            }
            _ => {}
        }
        statements.push(inst.clone());
    }
    Ok(GroundProgram {
        statements,
        atom_index,
    })
}

/// Pushes the atoms and random terms a retained statement depends on.
fn chase_statement(
    stmt: &Statement,
    grounder: &Grounder<'_>,
    atom_stack: &mut Vec<Atom>,
    term_stack: &mut Vec<Term>,
) {
    let chase_body = |body: &[Literal], atom_stack: &mut Vec<Atom>, term_stack: &mut Vec<Term>| {
        for lit in body {
            match &lit.atom {
                BodyAtom::Atom(a) => atom_stack.push(a.clone()),
                BodyAtom::Cmp(c) => {
                    let mut leaves = Vec::new();
                    expr_term_leaves(&c.lhs, &mut leaves);
                    expr_term_leaves(&c.rhs, &mut leaves);
                    for t in leaves {
                        if grounder.rand_set.contains(t) {
                            term_stack.push(t.clone());
                        }
                    }
                }
            }
        }
    };
    let chase_params = |dist: &Distribution, term_stack: &mut Vec<Term>| {
        for e in dist.param_exprs() {
            let mut leaves = Vec::new();
            expr_term_leaves(e, &mut leaves);
            for t in leaves {
                if grounder.rand_set.contains(t) {
                    term_stack.push(t.clone());
                }
            }
        }
    };
    match stmt {
        Statement::Clause { body, .. } => chase_body(body, atom_stack, term_stack),
        Statement::ProbFact { prob, .. } => {
            let mut leaves = Vec::new();
            expr_term_leaves(prob, &mut leaves);
            for t in leaves {
                if grounder.rand_set.contains(t) {
                    term_stack.push(t.clone());
                }
            }
        }
        Statement::AnnotatedDisjunction { heads, body } => {
            chase_body(body, atom_stack, term_stack);
            for (p, _) in heads {
                let mut leaves = Vec::new();
                expr_term_leaves(p, &mut leaves);
                for t in leaves {
                    if grounder.rand_set.contains(t) {
                        term_stack.push(t.clone());
                    }
                }
            }
        }
        Statement::DistFact { dist, .. } => chase_params(dist, term_stack),
        Statement::DistClause { dist, body, .. } => {
            chase_body(body, atom_stack, term_stack);
            chase_params(dist, term_stack);
        }
    }
}
