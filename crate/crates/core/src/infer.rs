//! Conditional probability queries via infinitesimal algebraic likelihood
//! weighting over compiled circuits, plus two independent oracles
//! (exhaustive enumeration for finite-discrete programs and rejection
//! sampling) used to cross-check the engine.

use crate::ast::{Atom, BodyAtom, CmpOp, Comparison, Literal, Program, QueryTarget, QueryTask, Statement, Term};
use crate::circuit::{self, Circuit, CircuitError, CompileOptions, Node};
use crate::formula::{self, FormulaError, PropFormula, PropVarId, VarMeta};
use crate::ground::{self, GroundError, GroundOptions, GroundProgram};
use crate::sampler::{self, AncestralSample, ParamError, SampleError};
use crate::semiring::{InfNum, InfNumError};
use crate::transform::{
    self, CoreLit, CoreRule, DependencyGraph, GroundDfplpProgram, RvId, TransformError,
};
use rayon::prelude::*;
use serde::Serialize;
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("validation failed:\n{0}")]
    Validate(String),
    #[error("grounding: {0}")]
    Ground(#[from] GroundError),
    #[error("transform: {0}")]
    Transform(#[from] TransformError),
    #[error("formula: {0}")]
    Formula(#[from] FormulaError),
    #[error("compile: {0}")]
    Compile(#[from] CircuitError),
    #[error("sampling: {0}")]
    Sample(#[from] SampleError),
    #[error("evidence has zero probability; the conditional query is undefined")]
    ZeroProbabilityEvidence,
    #[error("query result has residual infinitesimal order {0}; the observations make the query event infinitely less likely than the evidence")]
    NonzeroResidualOrder(i32),
    #[error("oracle: {0}")]
    Oracle(#[from] OracleError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl From<InfNumError> for PipelineError {
    fn from(e: InfNumError) -> Self {
        match e {
            InfNumError::DivisionByZero => PipelineError::ZeroProbabilityEvidence,
            InfNumError::OrderOverflow => PipelineError::NonzeroResidualOrder(i32::MAX),
        }
    }
}

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("not finitely enumerable: {0}")]
    NotFinitelyEnumerable(String),
    #[error("enumeration would visit {0} worlds, above the cap")]
    TooManyWorlds(u128),
    #[error("no accepted samples (evidence never observed)")]
    NoAcceptedSamples,
    #[error("evidence has zero probability under enumeration")]
    ZeroEvidence,
    #[error("rules are cyclic at atom {0}")]
    CyclicRules(String),
    #[error(transparent)]
    Param(#[from] ParamError),
}

/// Which labeling function the circuit evaluation uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Labeler {
    /// Every comparison leaf is an indicator on the sample; delta intervals
    /// on continuous variables contribute the density at order one.
    Ialw,
    /// Like IALW, but chain selectors of finite-support variables are
    /// replaced by their (conditional) probabilities, bypassing the sample.
    Sialw,
}

#[derive(Debug, Clone)]
pub struct InferConfig {
    pub samples: u64,
    pub seed: u64,
    pub labeler: Labeler,
    pub jobs: Option<usize>,
    pub ground: GroundOptions,
    pub compile: CompileOptions,
}

impl Default for InferConfig {
    fn default() -> Self {
        InferConfig {
            samples: 10_000,
            seed: 42,
            labeler: Labeler::Sialw,
            jobs: None,
            ground: GroundOptions::default(),
            compile: CompileOptions::default(),
        }
    }
}

/// Result of one query.
#[derive(Debug, Clone, Serialize)]
pub struct InferenceResult {
    pub query: String,
    pub probability: f64,
    pub exact: bool,
    pub order: i32,
    pub samples: u64,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ci_halfwidth: Option<f64>,
    #[serde(skip)]
    pub raw_numerator: InfNum,
    #[serde(skip)]
    pub raw_denominator: InfNum,
    #[serde(skip)]
    pub stochastic_leaf_count: usize,
}

// ---------------------------------------------------------------------------
// Labeling and circuit evaluation
// ---------------------------------------------------------------------------

/// Shared context for labeling literals of a compiled circuit.
pub struct LabelContext<'a> {
    pub core: &'a GroundDfplpProgram,
    pub vars: &'a [formula::PropVar],
    pub forced: &'a HashMap<RvId, f64>,
}

/// Label of a signed literal under an ancestral sample.
pub fn label_literal(
    ctx: &LabelContext<'_>,
    labeler: Labeler,
    var: PropVarId,
    positive: bool,
    sample: &AncestralSample,
) -> InfNum {
    match &ctx.vars[var.index()].meta {
        VarMeta::Derived(_) => InfNum::one(),
        VarMeta::Comparison {
            cmp,
            selector: Some(sel),
        } => {
            if labeler == Labeler::Sialw {
                let lookup = |p: RvId| sample.value(p);
                let q = sel.weight.eval(&lookup);
                let q = if q.is_finite() { q.clamp(0.0, 1.0) } else { 0.0 };
                if positive {
                    InfNum::new(q, 0)
                } else {
                    InfNum::new(1.0 - q, 0)
                }
            } else {
                let ind = cmp.eval(&|p: RvId| sample.value(p));
                indicator(ind, positive)
            }
        }
        VarMeta::Comparison {
            cmp,
            selector: None,
        } => {
            if cmp.op == CmpOp::DeltaInterval {
                let rv = match &cmp.lhs {
                    transform::CExpr::Var(v) => *v,
                    _ => unreachable!("delta_interval lhs is validated to be a variable"),
                };
                if ctx.core.vars[rv.index()].support.is_continuous() {
                    if positive {
                        let lookup = |p: RvId| sample.value(p);
                        let dens =
                            sampler::density(&ctx.core.vars[rv.index()].dist, &lookup, sample.value(rv))
                                .unwrap_or(0.0);
                        InfNum::new(dens, 1)
                    } else {
                        InfNum::one()
                    }
                } else {
                    // Countable support: delta_interval is =:=.
                    let ind = cmp.eval(&|p: RvId| sample.value(p));
                    indicator(ind, positive)
                }
            } else {
                let ind = cmp.eval(&|p: RvId| sample.value(p));
                indicator(ind, positive)
            }
        }
    }
}

fn indicator(holds: bool, positive: bool) -> InfNum {
    if holds == positive {
        InfNum::one()
    } else {
        InfNum::zero()
    }
}

/// Evaluates a circuit for one ancestral sample: literals map to labels, Or
/// folds with semiring addition, And with multiplication.
pub fn eval_circuit(
    c: &Circuit,
    ctx: &LabelContext<'_>,
    labeler: Labeler,
    sample: &AncestralSample,
) -> InfNum {
    c.evaluate(
        &mut |var, positive| label_literal(ctx, labeler, var, positive, sample),
        &|a, b| a.add(b),
        &|a, b| a.mul(b),
        InfNum::zero(),
        InfNum::one(),
    )
}

/// Per-node evaluation values (golden tests against the worked example).
pub fn eval_circuit_nodes(
    c: &Circuit,
    ctx: &LabelContext<'_>,
    labeler: Labeler,
    sample: &AncestralSample,
) -> Vec<InfNum> {
    c.evaluate_all(
        &mut |var, positive| label_literal(ctx, labeler, var, positive, sample),
        &|a, b| a.add(b),
        &|a, b| a.mul(b),
        InfNum::zero(),
        InfNum::one(),
    )
}

/// Semiring fold of circuit evaluations over a sample set, starting from the
/// additive neutral element.
pub fn ialw_accumulate(
    c: &Circuit,
    ctx: &LabelContext<'_>,
    labeler: Labeler,
    samples: &[AncestralSample],
) -> InfNum {
    samples
        .iter()
        .fold(InfNum::zero(), |acc, s| acc.add(eval_circuit(c, ctx, labeler, s)))
}

/// Number of distinct circuit leaves whose label can vary across samples.
pub fn stochastic_leaf_count(
    c: &Circuit,
    ctx: &LabelContext<'_>,
    labeler: Labeler,
) -> usize {
    let mut seen: Vec<bool> = vec![false; ctx.vars.len()];
    for node in &c.nodes {
        if let Node::Literal { var, .. } = node {
            seen[var.index()] = true;
        }
    }
    seen.iter()
        .enumerate()
        .filter(|&(i, &present)| present && leaf_is_stochastic(ctx, labeler, PropVarId(i as u32)))
        .count()
}

fn leaf_is_stochastic(ctx: &LabelContext<'_>, labeler: Labeler, var: PropVarId) -> bool {
    let unforced = |vars: &[RvId]| vars.iter().any(|v| !ctx.forced.contains_key(v));
    match &ctx.vars[var.index()].meta {
        VarMeta::Derived(_) => false,
        VarMeta::Comparison {
            cmp,
            selector: Some(sel),
        } => match labeler {
            Labeler::Sialw => {
                let mut vs = Vec::new();
                sel.weight.collect_vars(&mut vs);
                unforced(&vs)
            }
            Labeler::Ialw => unforced(&cmp.vars()),
        },
        VarMeta::Comparison {
            cmp,
            selector: None,
        } => {
            if cmp.op == CmpOp::DeltaInterval {
                if let transform::CExpr::Var(rv) = &cmp.lhs {
                    if ctx.core.vars[rv.index()].support.is_continuous() {
                        // Forced: the label is the density, which varies only
                        // through unforced parameter parents.
                        let mut vs = ctx.core.vars[rv.index()].dist.parent_vars();
                        vs.retain(|v| v != rv);
                        return unforced(&vs) || !ctx.forced.contains_key(rv);
                    }
                }
            }
            unforced(&cmp.vars())
        }
    }
}

// ---------------------------------------------------------------------------
// The PROB task driver
// ---------------------------------------------------------------------------

/// A program with observation and comparison queries lowered to auxiliary
/// atoms, ready for grounding.
#[derive(Debug, Clone)]
pub struct PreparedTask {
    pub program: Program,
    /// `(display name, atom)` per query, in input order.
    pub queries: Vec<(String, Atom)>,
    /// User evidence plus one positive auxiliary atom per observation.
    pub evidence: Vec<(Atom, bool)>,
}

/// Lowers observations (`term ≐ value`) and comparison queries into
/// auxiliary rules. The auxiliary predicate names contain `#` so they cannot
/// clash with source programs.
pub fn prepare(program: &Program, task: &QueryTask) -> Result<PreparedTask, PipelineError> {
    let diags = crate::ast::validate_syntax(program);
    let errors: Vec<String> = diags
        .iter()
        .filter(|d| {
            !matches!(
                d.kind,
                crate::ast::DiagnosticKind::MixedSampleSpace
            )
        })
        .map(|d| d.to_string())
        .collect();
    if !errors.is_empty() {
        return Err(PipelineError::Validate(errors.join("\n")));
    }

    for (i, (t1, n1)) in task.observations.iter().enumerate() {
        for (t2, n2) in &task.observations[i + 1..] {
            if t1 == t2 && n1.value() != n2.value() {
                return Err(PipelineError::Sample(SampleError::ImpossibleObservation {
                    var: t1.to_string(),
                    a: n1.value(),
                    b: n2.value(),
                }));
            }
        }
    }

    let mut program = program.clone();
    let mut evidence = task.evidence.clone();
    for (k, (term, num)) in task.observations.iter().enumerate() {
        let head = Atom::propositional(format!("obs#{k}"));
        program.statements.push(Statement::Clause {
            head: head.clone(),
            body: vec![Literal::pos(BodyAtom::Cmp(Comparison {
                op: CmpOp::DeltaInterval,
                lhs: crate::ast::Expr::Term(term.clone()),
                rhs: crate::ast::Expr::Term(Term::Num(*num)),
            }))],
        });
        evidence.push((head, true));
    }

    let mut queries = Vec::new();
    for (k, q) in task.queries.iter().enumerate() {
        match q {
            QueryTarget::Atom(a) => queries.push((a.to_string(), a.clone())),
            QueryTarget::Cmp(c) => {
                let head = Atom::propositional(format!("query#{k}"));
                program.statements.push(Statement::Clause {
                    head: head.clone(),
                    body: vec![Literal::pos(BodyAtom::Cmp(c.clone()))],
                });
                queries.push((c.to_string(), head));
            }
        }
    }

    Ok(PreparedTask {
        program,
        queries,
        evidence,
    })
}

/// Everything the engine shares across the queries of one task.
pub struct CompiledTask {
    pub core: GroundDfplpProgram,
    pub graph: DependencyGraph,
    pub ground: GroundProgram,
    pub formula: PropFormula,
    pub denominator: Circuit,
    pub forced: HashMap<RvId, f64>,
    pub domain_warnings: Vec<String>,
}

/// Grounds, desugars, encodes and compiles the denominator (evidence)
/// formula of a prepared task.
pub fn compile_task(
    prepared: &PreparedTask,
    cfg: &InferConfig,
) -> Result<CompiledTask, PipelineError> {
    let task = QueryTask {
        queries: prepared
            .queries
            .iter()
            .map(|(_, a)| QueryTarget::Atom(a.clone()))
            .collect(),
        evidence: prepared.evidence.clone(),
        observations: Vec::new(),
    };
    let ground = ground::relevant_ground_program(&prepared.program, &task, cfg.ground)?;
    let core = transform::desugar(&ground)?;
    let (graph, domain_diags) = transform::validate_core(&core)?;

    let mut extra_atoms: Vec<Atom> = prepared.queries.iter().map(|(_, a)| a.clone()).collect();
    extra_atoms.extend(prepared.evidence.iter().map(|(a, _)| a.clone()));
    let base = formula::clark_completion(&core, &extra_atoms)?;
    let f_den = base.with_evidence(&prepared.evidence)?;
    let forced = sampler::forced_assignments(&f_den, &core)?;
    let denominator = circuit::compile(&f_den, cfg.compile)?.smooth();

    Ok(CompiledTask {
        core,
        graph,
        ground,
        formula: f_den,
        denominator,
        forced,
        domain_warnings: domain_diags.into_iter().map(|d| d.message).collect(),
    })
}

/// Conditional probability of one query atom: compiles the query-conjoined
/// formula, accumulates both circuits over the same sample set and returns
/// the semiring ratio (Algorithm "ProbALW").
pub fn prob_alw(
    compiled: &CompiledTask,
    query: &Atom,
    cfg: &InferConfig,
) -> Result<(InfNum, InfNum, ProbStats), PipelineError> {
    let f_q = compiled.formula.clone().with_atom(query)?;
    let numerator = circuit::compile(&f_q, cfg.compile)?.smooth();
    let ctx = LabelContext {
        core: &compiled.core,
        vars: &compiled.formula.vars,
        forced: &compiled.forced,
    };
    let stochastic = stochastic_leaf_count(&numerator, &ctx, cfg.labeler)
        .max(stochastic_leaf_count(&compiled.denominator, &ctx, cfg.labeler));
    let n = if stochastic == 0 { 1 } else { cfg.samples.max(1) };

    let evaluate = |range: std::ops::Range<u64>| -> Result<Vec<(InfNum, InfNum)>, PipelineError> {
        range
            .into_par_iter()
            .map(|i| {
                let mut rng = sampler::per_sample_rng(cfg.seed, i);
                let sample =
                    sampler::draw_ancestral(&compiled.core, &compiled.graph, &compiled.forced, &mut rng)?;
                Ok((
                    eval_circuit(&numerator, &ctx, cfg.labeler, &sample),
                    eval_circuit(&compiled.denominator, &ctx, cfg.labeler, &sample),
                ))
            })
            .collect()
    };
    let per_sample = match cfg.jobs {
        Some(jobs) => rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .expect("thread pool")
            .install(|| evaluate(0..n)),
        None => evaluate(0..n),
    }?;

    // Deterministic accumulation in index order.
    let mut num = InfNum::zero();
    let mut den = InfNum::zero();
    for (a, b) in &per_sample {
        num = num.add(*a);
        den = den.add(*b);
    }

    // Confidence interval for unconditioned estimates: the denominator is
    // identically one per sample, so the estimate is a plain mean.
    let ci = if stochastic > 0
        && per_sample
            .iter()
            .all(|(_, d)| d.order == 0 && (d.real - 1.0).abs() < 1e-12)
    {
        let m = per_sample.len() as f64;
        let mean = num.real / m;
        let var = per_sample
            .iter()
            .map(|(a, _)| {
                let x = if a.order == 0 { a.real } else { 0.0 };
                (x - mean) * (x - mean)
            })
            .sum::<f64>()
            / (m - 1.0).max(1.0);
        Some(1.96 * (var / m).sqrt())
    } else {
        None
    };

    Ok((
        num,
        den,
        ProbStats {
            samples_used: n,
            stochastic_leaves: stochastic,
            ci_halfwidth: ci,
        },
    ))
}

pub struct ProbStats {
    pub samples_used: u64,
    pub stochastic_leaves: usize,
    pub ci_halfwidth: Option<f64>,
}

/// Full pipeline: ground, desugar, validate, encode, compile twice per query
/// and evaluate. The denominator compilation and the sample stream are
/// shared across queries.
pub fn answer_task(
    program: &Program,
    task: &QueryTask,
    cfg: &InferConfig,
) -> Result<Vec<InferenceResult>, PipelineError> {
    let prepared = prepare(program, task)?;
    let compiled = compile_task(&prepared, cfg)?;
    let mut results = Vec::new();
    for (display, atom) in &prepared.queries {
        let (num, den, stats) = prob_alw(&compiled, atom, cfg)?;
        let ratio = num.div(den)?;
        let probability = if ratio.real == 0.0 {
            0.0
        } else if ratio.order != 0 {
            return Err(PipelineError::NonzeroResidualOrder(ratio.order));
        } else {
            ratio.real
        };
        debug_assert!((-1e-9..=1.0 + 1e-9).contains(&probability));
        results.push(InferenceResult {
            query: display.clone(),
            probability: probability.clamp(0.0, 1.0),
            exact: stats.stochastic_leaves == 0,
            order: ratio.order,
            samples: stats.samples_used,
            seed: cfg.seed,
            ci_halfwidth: stats.ci_halfwidth,
            raw_numerator: num,
            raw_denominator: den,
            stochastic_leaf_count: stats.stochastic_leaves,
        });
    }
    Ok(results)
}

// ---------------------------------------------------------------------------
// World-level truth evaluation (shared by the oracles and the DC1 check)
// ---------------------------------------------------------------------------

/// Evaluates ground atoms through the rules of the core program under a
/// fixed assignment of the random variables (completion semantics; the rule
/// graph must be acyclic).
pub struct WorldEval<'a> {
    rules_by_head: HashMap<&'a Atom, Vec<&'a CoreRule>>,
}

impl<'a> WorldEval<'a> {
    pub fn new(core: &'a GroundDfplpProgram) -> Self {
        let mut rules_by_head: HashMap<&Atom, Vec<&CoreRule>> = HashMap::new();
        for r in &core.rules {
            rules_by_head.entry(&r.head).or_default().push(r);
        }
        WorldEval { rules_by_head }
    }

    pub fn atom_true(
        &self,
        atom: &Atom,
        values: &impl Fn(RvId) -> f64,
    ) -> Result<bool, OracleError> {
        let mut memo: HashMap<&Atom, Option<bool>> = HashMap::new();
        self.eval_atom(atom, values, &mut memo)
    }

    fn eval_atom<'b>(
        &'b self,
        atom: &'b Atom,
        values: &impl Fn(RvId) -> f64,
        memo: &mut HashMap<&'b Atom, Option<bool>>,
    ) -> Result<bool, OracleError> {
        match memo.get(atom) {
            Some(Some(v)) => return Ok(*v),
            Some(None) => return Err(OracleError::CyclicRules(atom.to_string())),
            None => {}
        }
        memo.insert(atom, None);
        let mut truth = false;
        if let Some(rules) = self.rules_by_head.get(atom) {
            'rules: for rule in rules {
                for lit in &rule.body {
                    let holds = match lit {
                        CoreLit::Atom { positive, atom } => {
                            self.eval_atom(atom, values, memo)? == *positive
                        }
                        CoreLit::Cmp { positive, cmp } => cmp.eval(values) == *positive,
                    };
                    if !holds {
                        continue 'rules;
                    }
                }
                truth = true;
                break;
            }
        }
        memo.insert(atom, Some(truth));
        Ok(truth)
    }
}

// ---------------------------------------------------------------------------
// Enumeration oracle
// ---------------------------------------------------------------------------

const WORLD_CAP: u128 = 1 << 24;

/// Exact conditional probability by exhaustive enumeration of the joint
/// support. Every random variable must have finite support (flip, finite,
/// uniform lists, delta). Deterministic `delta` variables follow their
/// parents instead of enlarging the space.
pub fn enumerate_oracle(
    core: &GroundDfplpProgram,
    graph: &DependencyGraph,
    query: &Atom,
    evidence: &[(Atom, bool)],
) -> Result<f64, OracleError> {
    use crate::transform::{CoreDist, SupportKind};

    // Choice points in topological order.
    let mut world_size: u128 = 1;
    for &id in &graph.topo {
        let v = &core.vars[id.index()];
        match (&v.support, &v.dist) {
            (_, CoreDist::Delta(_)) => {}
            (SupportKind::Finite(fs), _) => {
                let n = fs.entries.len() + usize::from(fs.rest.is_some());
                world_size = world_size.saturating_mul(n as u128);
            }
            _ => {
                return Err(OracleError::NotFinitelyEnumerable(format!(
                    "variable {} has non-finite support",
                    v.name
                )))
            }
        }
    }
    if world_size > WORLD_CAP {
        return Err(OracleError::TooManyWorlds(world_size));
    }

    let eval = WorldEval::new(core);
    let mut num = 0.0;
    let mut den = 0.0;
    let mut values = vec![f64::NAN; core.vars.len()];

    fn recurse(
        pos: usize,
        weight: f64,
        core: &GroundDfplpProgram,
        graph: &DependencyGraph,
        values: &mut Vec<f64>,
        eval: &WorldEval<'_>,
        query: &Atom,
        evidence: &[(Atom, bool)],
        num: &mut f64,
        den: &mut f64,
    ) -> Result<(), OracleError> {
        use crate::transform::{CoreDist, SupportKind};
        if pos == graph.topo.len() {
            let vals = values.clone();
            let lookup = move |id: RvId| vals[id.index()];
            for (a, expected) in evidence {
                if eval.atom_true(a, &lookup)? != *expected {
                    return Ok(());
                }
            }
            *den += weight;
            if eval.atom_true(query, &lookup)? {
                *num += weight;
            }
            return Ok(());
        }
        let id = graph.topo[pos];
        let v = &core.vars[id.index()];
        let snapshot = values.clone();
        let lookup = move |p: RvId| snapshot[p.index()];
        if let CoreDist::Delta(expr) = &v.dist {
            values[id.index()] = expr.eval(&lookup);
            recurse(pos + 1, weight, core, graph, values, eval, query, evidence, num, den)?;
            values[id.index()] = f64::NAN;
            return Ok(());
        }
        let SupportKind::Finite(fs) = &v.support else {
            unreachable!("checked above")
        };
        for (p, value) in &fs.entries {
            let w = p.eval(&lookup).max(0.0);
            if w == 0.0 {
                continue;
            }
            values[id.index()] = *value;
            recurse(pos + 1, weight * w, core, graph, values, eval, query, evidence, num, den)?;
        }
        if fs.rest.is_some() {
            let listed: f64 = fs.entries.iter().map(|(p, _)| p.eval(&lookup).max(0.0)).sum();
            let w = (1.0 - listed).max(0.0);
            if w > 0.0 {
                values[id.index()] = fs.rest.unwrap();
                recurse(pos + 1, weight * w, core, graph, values, eval, query, evidence, num, den)?;
            }
        }
        values[id.index()] = f64::NAN;
        Ok(())
    }

    recurse(
        0, 1.0, core, graph, &mut values, &eval, query, evidence, &mut num, &mut den,
    )?;
    if den == 0.0 {
        return Err(OracleError::ZeroEvidence);
    }
    Ok(num / den)
}

// ---------------------------------------------------------------------------
// Rejection-sampling oracle
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy)]
pub struct RejectionEstimate {
    pub estimate: f64,
    pub ci_halfwidth: f64,
    pub accepted: u64,
}

/// Monte Carlo approximation of a conditional query by plain rejection:
/// i.i.d. ancestral samples, no forcing. The evidence must have non-zero
/// (non-infinitesimal) probability.
pub fn rejection_oracle(
    core: &GroundDfplpProgram,
    graph: &DependencyGraph,
    query: &Atom,
    evidence: &[(Atom, bool)],
    n: u64,
    seed: u64,
) -> Result<RejectionEstimate, OracleError> {
    let eval = WorldEval::new(core);
    let forced = HashMap::new();
    let mut accepted = 0u64;
    let mut hits = 0u64;
    for i in 0..n {
        let mut rng = sampler::per_sample_rng(seed, i);
        let sample = sampler::draw_ancestral(core, graph, &forced, &mut rng)
            .map_err(|e| ParamError::from(e))?;
        let lookup = |id: RvId| sample.value(id);
        let mut ok = true;
        for (a, expected) in evidence {
            if eval.atom_true(a, &lookup)? != *expected {
                ok = false;
                break;
            }
        }
        if !ok {
            continue;
        }
        accepted += 1;
        if eval.atom_true(query, &lookup)? {
            hits += 1;
        }
    }
    if accepted == 0 {
        return Err(OracleError::NoAcceptedSamples);
    }
    let p = hits as f64 / accepted as f64;
    let ci = 1.96 * (p * (1.0 - p) / accepted as f64).sqrt();
    Ok(RejectionEstimate {
        estimate: p,
        ci_halfwidth: ci,
        accepted,
    })
}

// ---------------------------------------------------------------------------
// DC1 sampling check
// ---------------------------------------------------------------------------

/// Samples worlds and reports random terms whose distributional-clause
/// guards are simultaneously true (violating mutual exclusivity).
pub fn dc1_sampling_check(
    core: &GroundDfplpProgram,
    graph: &DependencyGraph,
    n: u64,
    seed: u64,
) -> Result<Vec<String>, OracleError> {
    let eval = WorldEval::new(core);
    let forced = HashMap::new();
    let mut violations = Vec::new();

    // Group guards by random term.
    let mut by_term: Vec<(&Term, Vec<&Vec<CoreLit>>)> = Vec::new();
    for (term, _, guard) in &core.context_guards {
        match by_term.iter_mut().find(|(t, _)| *t == term) {
            Some((_, gs)) => gs.push(guard),
            None => by_term.push((term, vec![guard])),
        }
    }
    by_term.retain(|(_, gs)| gs.len() > 1);
    if by_term.is_empty() {
        return Ok(violations);
    }

    for i in 0..n {
        let mut rng = sampler::per_sample_rng(seed, i);
        let sample = sampler::draw_ancestral(core, graph, &forced, &mut rng)
            .map_err(|e| ParamError::from(e))?;
        let lookup = |id: RvId| sample.value(id);
        for (term, guards) in &by_term {
            let mut live = 0;
            for guard in guards {
                let mut holds = true;
                for lit in guard.iter() {
                    let ok = match lit {
                        CoreLit::Atom { positive, atom } => {
                            eval.atom_true(atom, &lookup)? == *positive
                        }
                        CoreLit::Cmp { positive, cmp } => cmp.eval(&lookup) == *positive,
                    };
                    if !ok {
                        holds = false;
                        break;
                    }
                }
                if holds {
                    live += 1;
                }
            }
            if live > 1 {
                violations.push(format!(
                    "random term {term} has {live} distributional clauses active in one world (sample {i})"
                ));
            }
        }
        if !violations.is_empty() {
            break;
        }
    }
    Ok(violations)
}
