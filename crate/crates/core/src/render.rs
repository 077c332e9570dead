//! Text, JSON and DOT renderings of validation, chase, query and lab results.
//!
//! JSON documents carry a top-level `format_version`. Object keys are emitted
//! in byte order and facts in `(level, fact sort key)` order, so identical
//! inputs give byte-identical output.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde_json::{json, Value};

use crate::chase::{BudgetLimit, ChaseState, TraceStep};
use crate::constant::Constant;
use crate::lab::{PathSteps, Refutation, StabilityReport};
use crate::model::{Atom, Fact};
use crate::query::{format_tuple, CertainAnswers, Containment, ContainmentResult};
use crate::validate::{CdPartition, CdViolation};

pub const FORMAT_VERSION: u32 = 1;

/// Pretty-printed JSON with a trailing newline.
pub fn to_json_string(value: &Value) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("JSON values always serialize");
    s.push('\n');
    s
}

fn names<'a>(preds: impl IntoIterator<Item = &'a crate::model::Predicate>) -> Vec<&'a str> {
    preds.into_iter().map(|p| p.name()).collect()
}

fn fact_json(fact: &Fact) -> Value {
    json!({
        "predicate": fact.predicate().name(),
        "args": fact.args().iter().map(Constant::label).collect::<Vec<_>>(),
        "level": fact.level,
    })
}

fn stopped_by(state: &ChaseState) -> Value {
    match state.stopped_by() {
        Some(BudgetLimit::Steps) => json!("steps"),
        Some(BudgetLimit::Level) => json!("level"),
        None => Value::Null,
    }
}

fn trace_json(step: &TraceStep) -> Value {
    match step {
        TraceStep::Inclusion { dependency, parent, child } => json!({
            "rule": "inclusion",
            "dependency": dependency.to_string(),
            "parent": fact_json(parent),
            "child": fact_json(child),
        }),
        TraceStep::Key { dependency, left, right, substitution } => json!({
            "rule": "key",
            "dependency": dependency.to_string(),
            "left": fact_json(left),
            "right": fact_json(right),
            "substitution": substitution.iter().map(|(l, w)| json!([l.label(), w.label()])).collect::<Vec<_>>(),
        }),
        TraceStep::Failure { dependency, left, right, conflict } => json!({
            "rule": "failure",
            "dependency": dependency.to_string(),
            "left": fact_json(left),
            "right": fact_json(right),
            "conflict": [conflict.0.label(), conflict.1.label()],
        }),
    }
}

pub fn partition_json(partition: &CdPartition) -> Value {
    json!({
        "format_version": FORMAT_VERSION,
        "accepted": true,
        "entities": names(&partition.entities),
        "relationships": names(&partition.relationships),
        "attributes": names(&partition.attributes),
    })
}

pub fn partition_text(partition: &CdPartition) -> String {
    format!("accepted\n{partition}\n")
}

pub fn violations_json(violations: &[CdViolation]) -> Value {
    let items: Vec<Value> = violations
        .iter()
        .map(|v| json!({"condition": v.condition.letter().to_string(), "detail": v.detail}))
        .collect();
    json!({"format_version": FORMAT_VERSION, "accepted": false, "violations": items})
}

pub fn violations_text(violations: &[CdViolation]) -> String {
    let mut out = String::from("rejected\n");
    for v in violations {
        let _ = writeln!(out, "{v}");
    }
    out
}

/// Status, counters and facts of a chase; the trace too when `with_trace`
/// and the state recorded one.
pub fn chase_json(state: &ChaseState, with_trace: bool) -> Value {
    let facts: Vec<Value> = state.facts_by_level().iter().map(fact_json).collect();
    let mut doc = json!({
        "format_version": FORMAT_VERSION,
        "status": state.status().to_string(),
        "step_count": state.step_count(),
        "merge_count": state.merge_count(),
        "stopped_by": stopped_by(state),
        "prefix_bound": state.prefix_bound(),
        "facts": facts,
    });
    if let (true, Some(trace)) = (with_trace, state.trace()) {
        doc["trace"] = trace.iter().map(trace_json).collect();
    }
    doc
}

pub fn chase_text(state: &ChaseState, with_trace: bool) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "status: {}", state.status());
    let _ = writeln!(out, "steps: {}  merges: {}  facts: {}", state.step_count(), state.merge_count(), state.len());
    match (state.stopped_by(), state.prefix_bound()) {
        (Some(limit), Some(bound)) => {
            let limit = if limit == BudgetLimit::Steps { "step" } else { "level" };
            let _ = writeln!(out, "stopped by {limit} budget; levels below {bound} are complete");
        }
        (None, Some(bound)) => {
            let _ = writeln!(out, "levels below {bound} are complete");
        }
        _ => {}
    }
    let mut current = None;
    for fact in state.facts_by_level() {
        if current != Some(fact.level) {
            let _ = writeln!(out, "level {}:", fact.level);
            current = Some(fact.level);
        }
        let _ = writeln!(out, "  {}", fact.atom);
    }
    if let (true, Some(trace)) = (with_trace, state.trace()) {
        let _ = writeln!(out, "trace:");
        for (i, step) in trace.iter().enumerate() {
            let line = match step {
                TraceStep::Inclusion { dependency, parent, child } => {
                    format!("{dependency}: {} => {}", parent, child)
                }
                TraceStep::Key { dependency, left, right, substitution } => {
                    let subst: Vec<String> =
                        substitution.iter().map(|(l, w)| format!("{l} := {w}")).collect();
                    format!("{dependency}: {left}, {right} => {}", subst.join(", "))
                }
                TraceStep::Failure { dependency, left, right, conflict } => {
                    format!("{dependency}: {left}, {right} => conflict {} <> {}", conflict.0, conflict.1)
                }
            };
            let _ = writeln!(out, "  {:>4}  {line}", i + 1);
        }
    }
    out
}

fn resolve_atom(state: &ChaseState, atom: &Atom) -> Atom {
    Atom { predicate: atom.predicate.clone(), args: atom.args.iter().map(|c| state.resolve(c)).collect() }
}

/// Parent of each non-root fact: the earliest inclusion step whose child,
/// after all later merges, is that fact at its final level.
pub fn derivation_edges(state: &ChaseState) -> Vec<(Atom, Atom)> {
    let Some(trace) = state.trace() else { return Vec::new() };
    let mut parent_of: BTreeMap<Atom, Atom> = BTreeMap::new();
    for step in trace {
        if let TraceStep::Inclusion { parent, child, .. } = step {
            let c = resolve_atom(state, &child.atom);
            if state.level_of(&c) != Some(child.level) || parent_of.contains_key(&c) {
                continue;
            }
            let p = resolve_atom(state, &parent.atom);
            if state.contains(&p) {
                parent_of.insert(c, p);
            }
        }
    }
    parent_of.into_iter().map(|(c, p)| (p, c)).collect()
}

fn dot_escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

/// The derivation forest: one node per fact, an edge per inclusion step from
/// parent to child, facts of equal level on one rank. Edges need a traced state.
pub fn chase_dot(state: &ChaseState, title: &str) -> String {
    let facts = state.facts_by_level();
    let ids: BTreeMap<&Atom, usize> = facts.iter().enumerate().map(|(i, f)| (&f.atom, i)).collect();
    let mut out = String::new();
    let _ = writeln!(out, "digraph \"{}\" {{", dot_escape(title));
    let _ = writeln!(out, "  rankdir=TB;");
    let _ = writeln!(out, "  node [shape=box, fontname=\"monospace\"];");
    let mut by_level: BTreeMap<u32, Vec<&Fact>> = BTreeMap::new();
    for f in &facts {
        by_level.entry(f.level).or_default().push(f);
    }
    for (level, group) in &by_level {
        let _ = writeln!(out, "  {{ rank=same; L{level} [shape=plaintext, label=\"level {level}\"];");
        for f in group {
            let label = dot_escape(&f.atom.to_string());
            let _ = writeln!(out, "    n{} [label=\"{label}\\n@{level}\"];", ids[&f.atom]);
        }
        let _ = writeln!(out, "  }}");
    }
    let levels: Vec<&u32> = by_level.keys().collect();
    for pair in levels.windows(2) {
        let _ = writeln!(out, "  L{} -> L{} [style=invis];", pair[0], pair[1]);
    }
    let mut edges: Vec<(usize, usize)> = derivation_edges(state).iter().map(|(p, c)| (ids[p], ids[c])).collect();
    edges.sort_by_key(|&(p, c)| (c, p));
    for (parent, child) in edges {
        let _ = writeln!(out, "  n{parent} -> n{child};");
    }
    out.push_str("}\n");
    out
}

fn answer_count(n: usize) -> String {
    if n == 1 {
        "1 answer".into()
    } else {
        format!("{n} answers")
    }
}

pub fn answers_text(query_name: &str, result: &CertainAnswers) -> String {
    match result {
        CertainAnswers::Inconsistent => format!("{query_name}: inconsistent (the chase failed; every tuple is certain)\n"),
        CertainAnswers::Answers { answers, level_bound, .. } => {
            let mut out = format!("{query_name}: {} (levels < {level_bound})\n", answer_count(answers.len()));
            for t in answers.iter() {
                let _ = writeln!(out, "  {}", format_tuple(t));
            }
            out
        }
    }
}

fn answers_value(query_name: &str, result: &CertainAnswers) -> Value {
    match result {
        CertainAnswers::Inconsistent => json!({"query": query_name, "inconsistent": true}),
        CertainAnswers::Answers { answers, level_bound, chase_status } => json!({
            "query": query_name,
            "inconsistent": false,
            "level_bound": level_bound,
            "chase_status": chase_status.to_string(),
            "answers": answers.iter().map(|t| t.iter().map(Constant::label).collect::<Vec<_>>()).collect::<Vec<_>>(),
        }),
    }
}

pub fn answers_json(results: &[(String, CertainAnswers)]) -> Value {
    let items: Vec<Value> = results.iter().map(|(name, r)| answers_value(name, r)).collect();
    json!({"format_version": FORMAT_VERSION, "queries": items})
}

pub fn containment_text(q1: &str, q2: &str, result: &ContainmentResult) -> String {
    match (result.verdict, result.vacuous) {
        (Containment::Contained, true) => {
            format!("{q1} is contained in {q2} (vacuously: {q1} has no answers under the dependencies)\n")
        }
        (Containment::Contained, false) => format!("{q1} is contained in {q2}\n"),
        (Containment::NotContainedUpTo(l), _) => {
            format!("{q1} is not contained in {q2} up to level {l} (chase {})\n", result.chase_status)
        }
    }
}

pub fn containment_json(q1: &str, q2: &str, result: &ContainmentResult) -> Value {
    let verdict = match result.verdict {
        Containment::Contained => "contained",
        Containment::NotContainedUpTo(_) => "not_contained_up_to_level",
    };
    json!({
        "format_version": FORMAT_VERSION,
        "q1": q1,
        "q2": q2,
        "verdict": verdict,
        "vacuous": result.vacuous,
        "level_bound": result.level_bound,
        "chase_status": result.chase_status.to_string(),
    })
}

fn path_json(steps: &BTreeMap<usize, PathSteps>) -> Value {
    steps
        .iter()
        .map(|(i, s)| (i.to_string(), json!({"inclusion": s.inclusion, "key": s.key})))
        .collect::<serde_json::Map<_, _>>()
        .into()
}

fn int_map<V: Into<Value> + Copy>(m: &BTreeMap<usize, V>) -> Value {
    // zero-padded keys keep byte order equal to numeric order
    let width = m.keys().max().map_or(1, |k| k.to_string().len());
    m.iter().map(|(k, v)| (format!("{k:0width$}"), (*v).into())).collect::<serde_json::Map<_, _>>().into()
}

/// Everything `repro` reports for one instance size.
pub struct ReproOutcome {
    pub refutation: Refutation,
    pub stability: StabilityReport,
    pub path_steps: BTreeMap<usize, PathSteps>,
}

impl ReproOutcome {
    pub fn discrepancies(&self) -> Vec<String> {
        let mut out = self.refutation.discrepancies.clone();
        if !self.stability.no_fresh_below_probe {
            out.push(format!("fresh constants below level {}", self.refutation.report.probe_level));
        }
        if let Some(d) = &self.stability.first_divergence {
            out.push(format!("lower levels changed {d}"));
        }
        for i in 2..=self.refutation.n {
            match self.path_steps.get(&i) {
                Some(s) if s.total() == 4 => {}
                Some(s) => out.push(format!("{} rule applications from e({}) to e({i}), expected 4", s.total(), i - 1)),
                None => out.push(format!("no derivation path from e({}) to e({i})", i - 1)),
            }
        }
        out
    }
}

pub fn repro_json(outcome: &ReproOutcome) -> Value {
    let r = &outcome.refutation;
    let s = &outcome.stability;
    json!({
        "format_version": FORMAT_VERSION,
        "n": r.n,
        "probe_level": r.report.probe_level,
        "e_fact_level": int_map(&r.report.first_level_of_e_fact),
        "max_level_of_constant": int_map(&r.report.max_level_of_constant),
        "gap": r.report.gap(),
        "delta_witness": r.report.delta_witness.as_ref().map(|(l, h)| json!([fact_json(l), fact_json(h)])),
        "answer_below_probe": r.answer_below_probe,
        "answer_through_probe": r.answer_through_probe,
        "stability": {
            "steps_to_e_n": s.steps_to_e_n,
            "extra_steps": s.extra_steps,
            "snapshot_size": s.snapshot_size,
            "no_fresh_below_probe": s.no_fresh_below_probe,
            "first_divergence": s.first_divergence,
        },
        "path_steps": path_json(&outcome.path_steps),
        "discrepancies": outcome.discrepancies(),
    })
}

pub fn repro_text(outcome: &ReproOutcome) -> String {
    let r = &outcome.refutation;
    let s = &outcome.stability;
    let n = r.n;
    let probe = r.report.probe_level;
    let mut out = String::new();
    let _ = writeln!(out, "n = {n}, probe level 2n-2 = {probe}");
    let _ = writeln!(out, "{:>6}  {:>8}  {:>8}  {:>10}", "i", "e(i) at", "2(i-1)", "max level");
    for i in 1..=n {
        let level = r.report.first_level_of_e_fact.get(&i).map_or("-".into(), u32::to_string);
        let max = r.report.max_level_of_constant.get(&i).map_or("-".into(), u32::to_string);
        let _ = writeln!(out, "{i:>6}  {level:>8}  {:>8}  {max:>10}", 2 * i - 2);
    }
    let yes = |b: bool| if b { "yes" } else { "no" };
    let _ = writeln!(out, "<{n}> answered below level {probe}: {}", yes(r.answer_below_probe));
    let _ = writeln!(out, "<{n}> answered below level {}: {}", probe + 1, yes(r.answer_through_probe));
    match &r.report.delta_witness {
        Some((low, high)) => {
            let _ = writeln!(out, "gap for constant {n}: {} ({low} .. {high})", high.level - low.level);
        }
        None => {
            let _ = writeln!(out, "gap for constant {n}: none");
        }
    }
    let _ = writeln!(
        out,
        "lower levels after {} further steps: {}",
        s.extra_steps,
        if s.stable() { "unchanged" } else { "CHANGED" }
    );
    let paths: Vec<String> = outcome.path_steps.values().map(|p| p.total().to_string()).collect();
    let _ = writeln!(out, "rule applications per e-step: [{}]", paths.join(","));
    let discrepancies = outcome.discrepancies();
    if discrepancies.is_empty() {
        let _ = writeln!(out, "confirmed");
    } else {
        for d in discrepancies {
            let _ = writeln!(out, "DISCREPANCY: {d}");
        }
    }
    out
}
