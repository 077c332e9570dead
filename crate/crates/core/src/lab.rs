//! A family of instances whose chase needs a level linear in the data size.
//!
//! Schema `e/1, e'/1, r/2, s/2`, key `s{1}`, inclusions
//! `r[1] <= e[1]`, `r[2] <= e[1]`, `r[1,2] <= s[1,2]`, `e[1] <= r[1]`,
//! `s[2] <= e'[1]`, `s[1] <= e'[1]`, and data `e(1), s(1,2), ..., s(n-1,n)`.
//!
//! Each `e(i-1)` spawns `r(i-1,α)` and `s(i-1,α)`; the key on `s` merges the
//! latter with the initial `s(i-1,i)`, which turns `r(i-1,α)` into `r(i-1,i)`
//! and lets it produce `e(i)` two levels above `e(i-1)`. So `e(n)` first
//! appears at level `2n-2`: no level bound fixed in advance suffices for the
//! query `q(X) :- e(X)`, and a constant of level 0 reappears `2n-2` levels up.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::chase::{Budget, ChaseEngine, ChaseState, ChaseStatus, StepOutcome, TraceStep};
use crate::constant::Constant;
use crate::model::{Atom, Database, DependencySet, Fact, InclusionDependency, KeyDependency, Predicate, Schema};
use crate::query::{evaluate_over_prefix, ConjunctiveQuery, QueryAtom, QueryError, Term};

/// Levels chased beyond `2n-2` by [`refute_constant_bounds`].
pub const SLACK_LEVELS: u32 = 2;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LabError {
    #[error("instance size must be at least 2, got {0}")]
    TooSmall(usize),
    #[error("chase materialized only below level {available}, need below {required}")]
    ShallowPrefix { required: u32, available: u32 },
    #[error("the chase failed")]
    ChaseFailed,
    #[error(transparent)]
    Query(#[from] QueryError),
}

/// Schema, dependencies and data of one member of the family.
#[derive(Clone, Debug)]
pub struct Counterexample {
    pub n: usize,
    pub schema: Schema,
    pub deps: DependencySet,
    pub db: Database,
}

impl Counterexample {
    pub fn constant(&self, i: usize) -> Constant {
        Constant::domain(constant_name(i, self.n))
    }

    pub fn predicate(&self, name: &str) -> &Predicate {
        self.schema.get(name).expect("counterexample predicate")
    }

    pub fn e_atom(&self, i: usize) -> Atom {
        Atom { predicate: self.predicate("e").clone(), args: vec![self.constant(i)] }
    }

    /// `2n-2`, the level at which `e(n)` first appears.
    pub fn probe_level(&self) -> u32 {
        probe_level(self.n)
    }

    /// `q(X) :- e(X).`
    pub fn e_query(&self) -> ConjunctiveQuery {
        let body = vec![QueryAtom { predicate: self.predicate("e").clone(), terms: vec![Term::Var("X".into())] }];
        ConjunctiveQuery::new("q", vec!["X".into()], body).expect("well-formed query")
    }
}

pub fn probe_level(n: usize) -> u32 {
    2 * (n as u32) - 2
}

/// Decimal rendering of `i`, zero-padded to the width of `n` so that string
/// order agrees with numeric order.
pub fn constant_name(i: usize, n: usize) -> String {
    let width = n.to_string().len();
    format!("{i:0width$}")
}

pub fn build_counterexample(n: usize) -> Result<Counterexample, LabError> {
    if n < 2 {
        return Err(LabError::TooSmall(n));
    }
    let pred = |name: &str, arity| Predicate::new(name, arity).expect("positive arity");
    let (e, e1, r, s) = (pred("e", 1), pred("e'", 1), pred("r", 2), pred("s", 2));
    let schema = Schema::from_predicates([e.clone(), e1.clone(), r.clone(), s.clone()]).expect("distinct names");
    let id = |l: &Predicate, la: &[usize], rp: &Predicate, ra: &[usize]| {
        InclusionDependency::new(l.clone(), la.to_vec(), rp.clone(), ra.to_vec()).expect("valid inclusion")
    };
    let ids = vec![
        id(&r, &[1], &e, &[1]),
        id(&r, &[2], &e, &[1]),
        id(&r, &[1, 2], &s, &[1, 2]),
        id(&e, &[1], &r, &[1]),
        id(&s, &[2], &e1, &[1]),
        id(&s, &[1], &e1, &[1]),
    ];
    let kds = vec![KeyDependency::new(s.clone(), vec![1]).expect("valid key")];
    let deps = DependencySet::new(ids, kds).expect("one key");
    let c = |i: usize| Constant::domain(constant_name(i, n));
    let mut atoms = vec![Atom { predicate: e, args: vec![c(1)] }];
    atoms.extend((2..=n).map(|k| Atom { predicate: s.clone(), args: vec![c(k - 1), c(k)] }));
    let db = Database::new(atoms).expect("domain constants only");
    Ok(Counterexample { n, schema, deps, db })
}

/// Where each constant `1..n` sits in a chase of the family.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GrowthReport {
    pub n: usize,
    /// `i -> level of e(i)`, for the `e(i)` present in the chase.
    pub first_level_of_e_fact: BTreeMap<usize, u32>,
    /// `i -> highest level of a fact containing constant i`.
    pub max_level_of_constant: BTreeMap<usize, u32>,
    /// `i -> whether some fact at level 2(i-1) contains constant i`.
    pub occurs_at_expected_level: BTreeMap<usize, bool>,
    pub probe_level: u32,
    /// A level-0 fact and a level-`2n-2` fact, both containing constant `n`.
    pub delta_witness: Option<(Fact, Fact)>,
}

impl GrowthReport {
    /// Level distance between the two witness facts.
    pub fn gap(&self) -> Option<u32> {
        self.delta_witness.as_ref().map(|(low, high)| high.level - low.level)
    }
}

pub fn profile_levels(chase: &ChaseState, ce: &Counterexample) -> Result<GrowthReport, LabError> {
    let n = ce.n;
    let probe = ce.probe_level();
    if chase.status() == ChaseStatus::Failed {
        return Err(LabError::ChaseFailed);
    }
    if let Some(available) = chase.prefix_bound() {
        if available <= probe {
            return Err(LabError::ShallowPrefix { required: probe + 1, available });
        }
    }
    let facts = chase.facts_by_level();
    let mut first_level_of_e_fact = BTreeMap::new();
    let mut max_level_of_constant = BTreeMap::new();
    let mut occurs_at_expected_level = BTreeMap::new();
    for i in 1..=n {
        let c = ce.constant(i);
        if let Some(level) = chase.level_of(&ce.e_atom(i)) {
            first_level_of_e_fact.insert(i, level);
        }
        let levels: Vec<u32> = facts.iter().filter(|f| f.atom.contains(&c)).map(|f| f.level).collect();
        if let Some(&max) = levels.iter().max() {
            max_level_of_constant.insert(i, max);
        }
        occurs_at_expected_level.insert(i, levels.contains(&(2 * (i as u32) - 2)));
    }
    let cn = ce.constant(n);
    let low = facts.iter().find(|f| f.level == 0 && f.atom.contains(&cn));
    let high = facts.iter().find(|f| f.level == probe && f.atom.contains(&cn));
    let delta_witness = low.zip(high).map(|(l, h)| (l.clone(), h.clone()));
    Ok(GrowthReport {
        n,
        first_level_of_e_fact,
        max_level_of_constant,
        occurs_at_expected_level,
        probe_level: probe,
        delta_witness,
    })
}

/// Outcome of running both arguments on one instance size.
#[derive(Clone, Debug)]
pub struct Refutation {
    pub n: usize,
    pub report: GrowthReport,
    /// `q(X) :- e(X)` over levels `< 2n-2` contains `<n>`.
    pub answer_below_probe: bool,
    /// `q(X) :- e(X)` over levels `< 2n-1` contains `<n>`.
    pub answer_through_probe: bool,
    pub chase: ChaseState,
    /// Every place where the engine disagrees with the expected levels.
    pub discrepancies: Vec<String>,
}

impl Refutation {
    pub fn confirmed(&self) -> bool {
        self.discrepancies.is_empty()
    }
}

/// Chases the size-`n` instance through level `2n-2` plus slack and checks
/// that `e(i)` is at level `2(i-1)`, that `q(X) :- e(X)` gains `<n>` only
/// once level `2n-2` is included, and that constant `n` spans `2n-2` levels.
pub fn refute_constant_bounds(n: usize) -> Result<Refutation, LabError> {
    let ce = build_counterexample(n)?;
    let probe = ce.probe_level();
    let chase = ChaseEngine::new(&ce.deps).run(&ce.db, Budget::levels(probe + SLACK_LEVELS));
    let report = profile_levels(&chase, &ce)?;
    let query = ce.e_query();
    let tuple = [ce.constant(n)];
    let answer_below_probe = evaluate_over_prefix(&chase, &query, probe)?.contains(&tuple);
    let answer_through_probe = evaluate_over_prefix(&chase, &query, probe + 1)?.contains(&tuple);

    let mut discrepancies = Vec::new();
    for i in 1..=n {
        let expected = 2 * (i as u32) - 2;
        match report.first_level_of_e_fact.get(&i) {
            Some(&l) if l == expected => {}
            Some(&l) => discrepancies.push(format!("e({i}) at level {l}, expected {expected}")),
            None => discrepancies.push(format!("e({i}) missing")),
        }
        if !report.occurs_at_expected_level[&i] {
            discrepancies.push(format!("constant {i} occurs in no fact at level {expected}"));
        }
    }
    if answer_below_probe {
        discrepancies.push(format!("<{n}> already answered below level {probe}"));
    }
    if !answer_through_probe {
        discrepancies.push(format!("<{n}> not answered below level {}", probe + 1));
    }
    match report.gap() {
        Some(g) if g == probe => {}
        Some(g) => discrepancies.push(format!("constant {n} spans {g} levels, expected {probe}")),
        None => discrepancies.push(format!("no level-0/level-{probe} witness for constant {n}")),
    }
    Ok(Refutation { n, report, answer_below_probe, answer_through_probe, chase, discrepancies })
}

/// Result of continuing the chase after `e(n)` appears.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StabilityReport {
    pub n: usize,
    /// Inclusion steps taken when `e(n)` appeared.
    pub steps_to_e_n: u64,
    /// Further inclusion steps performed.
    pub extra_steps: u64,
    /// Facts below level `2n-2` at the moment `e(n)` appeared.
    pub snapshot_size: usize,
    /// No fresh constant occurs below level `2n-2` at that moment.
    pub no_fresh_below_probe: bool,
    /// Description of the first change to the lower levels, if any.
    pub first_divergence: Option<String>,
}

impl StabilityReport {
    pub fn stable(&self) -> bool {
        self.no_fresh_below_probe && self.first_divergence.is_none()
    }
}

fn lower_levels(state: &ChaseState, below: u32) -> BTreeMap<Atom, u32> {
    state.facts().filter(|f| f.level < below).map(|f| (f.atom, f.level)).collect()
}

/// Steps the chase until `e(n)` appears, then performs `extra_steps` more
/// inclusion steps and compares the facts below level `2n-2` after each one.
pub fn check_lower_level_stability(n: usize, extra_steps: u64) -> Result<StabilityReport, LabError> {
    let ce = build_counterexample(n)?;
    let probe = ce.probe_level();
    let engine = ChaseEngine::new(&ce.deps);
    let mut state = ChaseState::new(&ce.db);
    let target = ce.e_atom(n);
    // e(n) needs about n + 3n inclusion steps
    let step_cap = 100 * n as u64;
    while !state.contains(&target) {
        match engine.chase_step(&mut state) {
            StepOutcome::Applied(_) if state.step_count() < step_cap => {}
            StepOutcome::Failed => return Err(LabError::ChaseFailed),
            _ => return Err(LabError::ShallowPrefix { required: probe + 1, available: state.max_level().unwrap_or(0) }),
        }
    }
    let steps_to_e_n = state.step_count();
    let snapshot = lower_levels(&state, probe);
    let no_fresh_below_probe = snapshot.keys().all(|a| a.args.iter().all(Constant::is_domain));
    let mut first_divergence = None;
    let mut extra = 0;
    while extra < extra_steps {
        match engine.chase_step(&mut state) {
            StepOutcome::Applied(_) => extra += 1,
            StepOutcome::Completed => break,
            StepOutcome::Failed => return Err(LabError::ChaseFailed),
        }
        if first_divergence.is_none() {
            let now = lower_levels(&state, probe);
            if now != snapshot {
                let changed = snapshot
                    .iter()
                    .find(|(a, l)| now.get(*a) != Some(l))
                    .map(|(a, l)| format!("{a} @{l}"))
                    .or_else(|| now.iter().find(|(a, _)| !snapshot.contains_key(*a)).map(|(a, l)| format!("new {a} @{l}")))
                    .unwrap_or_default();
                first_divergence = Some(format!("after {extra} extra steps: {changed}"));
            }
        }
    }
    // the final saturation belongs to the last step
    engine.kd_saturate(&mut state);
    if first_divergence.is_none() && lower_levels(&state, probe) != snapshot {
        first_divergence = Some("after final key saturation".into());
    }
    Ok(StabilityReport {
        n,
        steps_to_e_n,
        extra_steps: extra,
        snapshot_size: snapshot.len(),
        no_fresh_below_probe,
        first_divergence,
    })
}

/// Rule applications on the derivation path from `e(i-1)` to `e(i)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct PathSteps {
    pub inclusion: usize,
    pub key: usize,
}

impl PathSteps {
    pub fn total(&self) -> usize {
        self.inclusion + self.key
    }
}

/// For each `i` in `2..=n` whose `e(i)` appears in `trace`, counts the rule
/// applications that derive `e(i)` from `e(i-1)`: inclusion steps whose
/// parent descends from `e(i-1)` and key merges touching such a descendant.
/// A descendant merged into a fact that does not descend from `e(i-1)` stops
/// being followed.
pub fn derivation_path_steps(ce: &Counterexample, trace: &[TraceStep]) -> BTreeMap<usize, PathSteps> {
    let mut out = BTreeMap::new();
    for i in 2..=ce.n {
        let from = ce.e_atom(i - 1);
        let to = ce.e_atom(i);
        let Some(start) = trace.iter().position(|s| matches!(s, TraceStep::Inclusion { child, .. } if child.atom == from))
        else {
            // e(1) is initial
            if i == 2 {
                if let Some(steps) = follow(trace, 0, &from, &to) {
                    out.insert(i, steps);
                }
            }
            continue;
        };
        if let Some(steps) = follow(trace, start + 1, &from, &to) {
            out.insert(i, steps);
        }
    }
    out
}

fn follow(trace: &[TraceStep], start: usize, from: &Atom, to: &Atom) -> Option<PathSteps> {
    let mut path = vec![from.clone()];
    let mut steps = PathSteps::default();
    for step in &trace[start..] {
        match step {
            TraceStep::Inclusion { parent, child, .. } if path.contains(&parent.atom) => {
                steps.inclusion += 1;
                if child.atom == *to {
                    return Some(steps);
                }
                path.push(child.atom.clone());
            }
            TraceStep::Key { left, right, substitution, .. }
                if path.contains(&left.atom) || path.contains(&right.atom) =>
            {
                steps.key += 1;
                let map: BTreeMap<&Constant, &Constant> = substitution.iter().map(|(l, w)| (l, w)).collect();
                let image = |atom: &Atom| Atom {
                    predicate: atom.predicate.clone(),
                    args: atom.args.iter().map(|c| map.get(c).map_or_else(|| c.clone(), |w| (*w).clone())).collect(),
                };
                // a path fact merged into a fact from elsewhere leaves the path
                let outside: Vec<Atom> =
                    [left, right].into_iter().filter(|f| !path.contains(&f.atom)).map(|f| image(&f.atom)).collect();
                path = path.iter().map(image).filter(|a| !outside.contains(a)).collect();
            }
            _ => {}
        }
    }
    None
}
