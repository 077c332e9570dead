//! The leveled, deterministic chase under key and inclusion dependencies.
//!
//! Each step first saturates the key dependencies and then applies the
//! inclusion rule exactly once:
//!
//! 1. While two distinct facts agree on the key of some KD, merge the pair
//!    whose lower level is smallest (ties: lexicographically first ordered
//!    pair of facts, then first KD). Non-key symbols are unified: two
//!    distinct domain constants fail the chase, a domain constant beats a
//!    fresh one, and of two fresh constants the older survives. The merged
//!    fact, and any other facts made equal by the substitution, keep the
//!    minimum level.
//! 2. Among facts with an applicable full-width inclusion, take the one at
//!    the lowest level (ties: fact order) and apply the first applicable
//!    full-width inclusion; if there is none, do the same over all
//!    inclusions. The new fact sits one level above its parent, with fresh
//!    constants filling the positions the inclusion does not determine.
//!
//! The chase may be infinite for cyclic inclusions, so runs are bounded by a
//! [`Budget`] and the state records how far the level prefix is complete.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::constant::Constant;
use crate::model::{Atom, Database, DependencyRef, DependencySet, Fact, InclusionDependency, KeyDependency, Predicate};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ChaseStatus {
    /// Rules may still be applicable; the run was cut by a budget or is in progress.
    Active,
    /// No rule is applicable.
    Completed,
    /// A key merge met two distinct domain constants: the chase does not exist.
    Failed,
}

impl fmt::Display for ChaseStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ChaseStatus::Active => "active",
            ChaseStatus::Completed => "completed",
            ChaseStatus::Failed => "failed",
        })
    }
}

/// Limits on a chase run. `None` means unbounded.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Budget {
    /// Maximum number of inclusion-rule applications, counted over the state's lifetime.
    pub max_steps: Option<u64>,
    /// No fact above this level is created.
    pub max_level: Option<u32>,
}

impl Budget {
    pub fn unlimited() -> Self {
        Budget::default()
    }

    pub fn steps(max_steps: u64) -> Self {
        Budget { max_steps: Some(max_steps), max_level: None }
    }

    pub fn levels(max_level: u32) -> Self {
        Budget { max_steps: None, max_level: Some(max_level) }
    }

    pub fn with_steps(mut self, max_steps: u64) -> Self {
        self.max_steps = Some(max_steps);
        self
    }
}

/// Which budget stopped a run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BudgetLimit {
    Steps,
    Level,
}

/// One recorded rule application.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TraceStep {
    Inclusion { dependency: InclusionDependency, parent: Fact, child: Fact },
    Key { dependency: KeyDependency, left: Fact, right: Fact, substitution: Vec<(Constant, Constant)> },
    Failure { dependency: KeyDependency, left: Fact, right: Fact, conflict: (Constant, Constant) },
}

/// A key merge that met two distinct domain constants.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KeyConflict {
    pub left: Constant,
    pub right: Constant,
}

/// Facts of a (partial) chase together with the counters that drive it.
#[derive(Clone, Debug)]
pub struct ChaseState {
    facts: BTreeMap<Atom, u32>,
    next_fresh: u64,
    status: ChaseStatus,
    step_count: u64,
    merge_count: u64,
    frontier: Option<u32>,
    stopped_by: Option<BudgetLimit>,
    resolved: BTreeMap<u64, Constant>,
    trace: Option<Vec<TraceStep>>,
}

impl ChaseState {
    /// Initial state: the database at level 0.
    pub fn new(db: &Database) -> Self {
        Self::from_facts(db.facts())
    }

    /// A state holding arbitrary facts, e.g. a frozen query whose variables
    /// are fresh constants. Duplicates keep the minimum level; new fresh
    /// constants start after the largest one present.
    pub fn from_facts(facts: impl IntoIterator<Item = Fact>) -> Self {
        let mut map = BTreeMap::new();
        let mut next_fresh = 1;
        for f in facts {
            for c in &f.atom.args {
                if let Constant::Fresh(k) = c {
                    next_fresh = next_fresh.max(k + 1);
                }
            }
            insert_min(&mut map, f.atom, f.level);
        }
        ChaseState {
            facts: map,
            next_fresh,
            status: ChaseStatus::Active,
            step_count: 0,
            merge_count: 0,
            frontier: None,
            stopped_by: None,
            resolved: BTreeMap::new(),
            trace: None,
        }
    }

    /// Starts recording a trace of every subsequent rule application.
    pub fn with_trace(mut self) -> Self {
        self.trace.get_or_insert_with(Vec::new);
        self
    }

    pub fn status(&self) -> ChaseStatus {
        self.status
    }

    /// Number of inclusion-rule applications.
    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// Number of successful key-rule applications.
    pub fn merge_count(&self) -> u64 {
        self.merge_count
    }

    pub fn next_fresh_index(&self) -> u64 {
        self.next_fresh
    }

    pub fn stopped_by(&self) -> Option<BudgetLimit> {
        self.stopped_by
    }

    pub fn trace(&self) -> Option<&[TraceStep]> {
        self.trace.as_deref()
    }

    pub fn len(&self) -> usize {
        self.facts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.facts.is_empty()
    }

    pub fn level_of(&self, atom: &Atom) -> Option<u32> {
        self.facts.get(atom).copied()
    }

    pub fn contains(&self, atom: &Atom) -> bool {
        self.facts.contains_key(atom)
    }

    /// Facts in fact sort order.
    pub fn facts(&self) -> impl Iterator<Item = Fact> + '_ {
        self.facts.iter().map(|(a, &l)| Fact::new(a.clone(), l))
    }

    /// Facts ordered by level, then fact sort order.
    pub fn facts_by_level(&self) -> Vec<Fact> {
        let mut out: Vec<Fact> = self.facts().collect();
        out.sort_by(|a, b| (a.level, &a.atom).cmp(&(b.level, &b.atom)));
        out
    }

    pub fn max_level(&self) -> Option<u32> {
        self.facts.values().copied().max()
    }

    /// Largest `L` for which the facts at levels below `L` are fully built,
    /// `None` when every level is (the chase completed).
    pub fn prefix_bound(&self) -> Option<u32> {
        match self.status {
            ChaseStatus::Completed => None,
            _ => Some(self.frontier.map_or(0, |f| f + 1)),
        }
    }

    /// The lowest level holding a fact with an applicable inclusion, as of the last scan.
    pub fn frontier_level(&self) -> Option<u32> {
        self.frontier
    }

    /// Current image of a constant under all merges performed so far.
    pub fn resolve(&self, c: &Constant) -> Constant {
        match c {
            Constant::Fresh(k) => self.resolved.get(k).cloned().unwrap_or_else(|| c.clone()),
            _ => c.clone(),
        }
    }

    /// Facts of one predicate, in sort order.
    fn relation<'a>(&'a self, pred: &'a crate::model::Predicate) -> impl Iterator<Item = (&'a Atom, u32)> + 'a {
        let start = Atom { predicate: pred.clone(), args: Vec::new() };
        self.facts.range(start..).take_while(move |(a, _)| &a.predicate == pred).map(|(a, &l)| (a, l))
    }

    /// True iff no fact over the right-hand predicate matches `atom` on the
    /// inclusion's attributes.
    pub fn id_applicable(&self, atom: &Atom, id: &InclusionDependency) -> bool {
        if atom.predicate != *id.lhs() {
            return false;
        }
        let wanted = atom.project(id.lhs_attrs());
        !self
            .relation(id.rhs())
            .any(|(t, _)| id.rhs_attrs().iter().zip(&wanted).all(|(&p, c)| &t.args[p - 1] == c))
    }

    /// Adds the fact demanded by `id` for `atom`, filling undetermined
    /// positions with new fresh constants left to right.
    ///
    /// Panics if the rule is not applicable or `atom` is not in the state.
    pub fn apply_id_rule(&mut self, atom: &Atom, id: &InclusionDependency) -> Fact {
        let level = self.level_of(atom).expect("inclusion rule applied to a fact outside the chase");
        assert!(self.id_applicable(atom, id), "inclusion rule not applicable");
        let mut args: Vec<Option<Constant>> = vec![None; id.rhs().arity()];
        for (&l, &r) in id.lhs_attrs().iter().zip(id.rhs_attrs()) {
            args[r - 1] = Some(atom.args[l - 1].clone());
        }
        let args = args
            .into_iter()
            .map(|slot| {
                slot.unwrap_or_else(|| {
                    let c = Constant::Fresh(self.next_fresh);
                    self.next_fresh += 1;
                    c
                })
            })
            .collect();
        let child = Fact::new(Atom { predicate: id.rhs().clone(), args }, level + 1);
        insert_min(&mut self.facts, child.atom.clone(), child.level);
        self.step_count += 1;
        if let Some(trace) = &mut self.trace {
            trace.push(TraceStep::Inclusion {
                dependency: id.clone(),
                parent: Fact::new(atom.clone(), level),
                child: child.clone(),
            });
        }
        child
    }

    /// True iff the two atoms are distinct facts of the key's predicate
    /// agreeing on every key position.
    pub fn kd_applicable(&self, t1: &Atom, t2: &Atom, kd: &KeyDependency) -> bool {
        t1 != t2
            && t1.predicate == *kd.pred()
            && t2.predicate == *kd.pred()
            && kd.key_attrs().iter().all(|&p| t1.args[p - 1] == t2.args[p - 1])
    }

    /// Merges `t1` and `t2` under `kd`. On a conflict between two domain
    /// constants the state is marked failed and left otherwise unchanged.
    ///
    /// Panics if the rule is not applicable or either atom is not in the state.
    pub fn apply_kd_rule(&mut self, t1: &Atom, t2: &Atom, kd: &KeyDependency) -> Result<(), KeyConflict> {
        assert!(self.kd_applicable(t1, t2, kd), "key rule not applicable");
        let l1 = self.level_of(t1).expect("key rule applied to a fact outside the chase");
        let l2 = self.level_of(t2).expect("key rule applied to a fact outside the chase");
        let mut subst: BTreeMap<Constant, Constant> = BTreeMap::new();
        for p in kd.non_key_attrs() {
            let a = find(&subst, &t1.args[p - 1]);
            let b = find(&subst, &t2.args[p - 1]);
            if a == b {
                continue;
            }
            if a.is_domain() && b.is_domain() {
                self.status = ChaseStatus::Failed;
                if let Some(trace) = &mut self.trace {
                    trace.push(TraceStep::Failure {
                        dependency: kd.clone(),
                        left: Fact::new(t1.clone(), l1),
                        right: Fact::new(t2.clone(), l2),
                        conflict: (a.clone(), b.clone()),
                    });
                }
                return Err(KeyConflict { left: a, right: b });
            }
            // domain constants precede fresh ones, so the minimum is the survivor in both cases
            let (winner, loser) = if a < b { (a, b) } else { (b, a) };
            subst.insert(loser, winner);
        }
        let substitution: Vec<(Constant, Constant)> =
            subst.keys().map(|k| (k.clone(), find(&subst, k))).collect();
        self.substitute(&substitution);
        self.merge_count += 1;
        if let Some(trace) = &mut self.trace {
            trace.push(TraceStep::Key {
                dependency: kd.clone(),
                left: Fact::new(t1.clone(), l1),
                right: Fact::new(t2.clone(), l2),
                substitution,
            });
        }
        Ok(())
    }

    /// Replaces every loser by its survivor in all facts; facts that become
    /// equal collapse to the minimum level.
    fn substitute(&mut self, substitution: &[(Constant, Constant)]) {
        if substitution.is_empty() {
            return;
        }
        let map: BTreeMap<&Constant, &Constant> = substitution.iter().map(|(l, w)| (l, w)).collect();
        let old = std::mem::take(&mut self.facts);
        for (mut atom, level) in old {
            for c in &mut atom.args {
                if let Some(w) = map.get(c) {
                    *c = (*w).clone();
                }
            }
            insert_min(&mut self.facts, atom, level);
        }
        for v in self.resolved.values_mut() {
            if let Some(w) = map.get(v) {
                *v = (*w).clone();
            }
        }
        for (loser, winner) in substitution {
            if let Constant::Fresh(k) = loser {
                self.resolved.insert(*k, winner.clone());
            }
        }
    }

    /// Rebuilds a state by re-applying a recorded trace to its initial facts.
    pub fn replay(initial: impl IntoIterator<Item = Fact>, trace: &[TraceStep]) -> Self {
        let mut state = ChaseState::from_facts(initial);
        for step in trace {
            match step {
                TraceStep::Inclusion { child, .. } => {
                    for c in &child.atom.args {
                        if let Constant::Fresh(k) = c {
                            state.next_fresh = state.next_fresh.max(k + 1);
                        }
                    }
                    insert_min(&mut state.facts, child.atom.clone(), child.level);
                    state.step_count += 1;
                }
                TraceStep::Key { substitution, .. } => {
                    state.substitute(substitution);
                    state.merge_count += 1;
                }
                TraceStep::Failure { .. } => state.status = ChaseStatus::Failed,
            }
        }
        state
    }
}

fn insert_min(map: &mut BTreeMap<Atom, u32>, atom: Atom, level: u32) {
    map.entry(atom).and_modify(|l| *l = (*l).min(level)).or_insert(level);
}

fn find(subst: &BTreeMap<Constant, Constant>, c: &Constant) -> Constant {
    let mut cur = c;
    while let Some(next) = subst.get(cur) {
        cur = next;
    }
    cur.clone()
}

/// What a single chase step did.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum StepOutcome {
    /// The inclusion rule produced this fact.
    Applied(Fact),
    Completed,
    Failed,
}

/// A selected inclusion-rule application.
#[derive(Clone, Debug)]
pub struct IdApplication<'d> {
    pub fact: Fact,
    pub dependency: &'d InclusionDependency,
}

/// Dependencies pre-sorted for rule selection.
#[derive(Clone, Debug)]
pub struct ChaseEngine<'d> {
    /// Inclusions in dependency sort order.
    inclusions: Vec<&'d InclusionDependency>,
    /// Indices into `inclusions`, ascending, per left-hand predicate.
    by_lhs: BTreeMap<Predicate, Vec<usize>>,
    keys: Vec<&'d KeyDependency>,
}

impl<'d> ChaseEngine<'d> {
    pub fn new(deps: &'d DependencySet) -> Self {
        let mut inclusions = Vec::new();
        let mut keys = Vec::new();
        for d in deps.sorted() {
            match d {
                DependencyRef::Inclusion(id) => inclusions.push(id),
                DependencyRef::Key(kd) => keys.push(kd),
            }
        }
        let mut by_lhs: BTreeMap<Predicate, Vec<usize>> = BTreeMap::new();
        for (i, id) in inclusions.iter().enumerate() {
            by_lhs.entry(id.lhs().clone()).or_default().push(i);
        }
        ChaseEngine { inclusions, by_lhs, keys }
    }

    /// The key merge that saturation would perform next.
    pub fn next_kd_application(&self, state: &ChaseState) -> Option<(Atom, Atom, &'d KeyDependency)> {
        let mut best: Option<(u32, &Atom, &Atom, usize)> = None;
        for (k, kd) in self.keys.iter().enumerate() {
            let mut groups: BTreeMap<Vec<Constant>, Vec<(&Atom, u32)>> = BTreeMap::new();
            for (atom, level) in state.relation(kd.pred()) {
                groups.entry(atom.project(kd.key_attrs())).or_default().push((atom, level));
            }
            for group in groups.values().filter(|g| g.len() > 1) {
                // group members are in fact order, so (i, j) with i < j is a normalized pair
                for (i, &(a, la)) in group.iter().enumerate() {
                    for &(b, lb) in &group[i + 1..] {
                        let cand = (la.min(lb), a, b, k);
                        if best.is_none_or(|cur| cand < cur) {
                            best = Some(cand);
                        }
                    }
                }
            }
        }
        best.map(|(_, a, b, k)| (a.clone(), b.clone(), self.keys[k]))
    }

    /// Applies key merges until none is applicable or the chase fails.
    pub fn kd_saturate(&self, state: &mut ChaseState) {
        while state.status != ChaseStatus::Failed {
            let Some((t1, t2, kd)) = self.next_kd_application(state) else { break };
            if state.apply_kd_rule(&t1, &t2, kd).is_err() {
                break;
            }
        }
    }

    /// Picks the next inclusion application and records the frontier level.
    ///
    /// Each inclusion gets the set of right-hand projections once per scan,
    /// so the scan is linear in the facts up to logarithmic factors.
    fn scan(&self, state: &mut ChaseState) -> Option<IdApplication<'d>> {
        let witnesses: Vec<BTreeSet<Vec<&Constant>>> = self
            .inclusions
            .iter()
            .map(|id| {
                state
                    .relation(id.rhs())
                    .map(|(a, _)| id.rhs_attrs().iter().map(|&p| &a.args[p - 1]).collect())
                    .collect()
            })
            .collect();
        let mut full: Option<(u32, &Atom, &'d InclusionDependency)> = None;
        let mut any: Option<(u32, &Atom, &'d InclusionDependency)> = None;
        for (atom, &level) in &state.facts {
            let want_full = full.is_none_or(|(l, _, _)| level < l);
            let want_any = any.is_none_or(|(l, _, _)| level < l);
            if !want_full && !want_any {
                continue;
            }
            let Some(candidates) = self.by_lhs.get(&atom.predicate) else { continue };
            let mut first_any = None;
            let mut first_full = None;
            for &i in candidates {
                let id = self.inclusions[i];
                let key: Vec<&Constant> = id.lhs_attrs().iter().map(|&p| &atom.args[p - 1]).collect();
                if witnesses[i].contains(&key) {
                    continue;
                }
                first_any.get_or_insert(id);
                if id.is_full_width() {
                    first_full = Some(id);
                    break;
                }
            }
            if let (true, Some(id)) = (want_full, first_full) {
                full = Some((level, atom, id));
            }
            if let (true, Some(id)) = (want_any, first_any) {
                any = Some((level, atom, id));
            }
        }
        let frontier = any.map(|(l, _, _)| l);
        let chosen = full.or(any).map(|(level, atom, dependency)| IdApplication {
            fact: Fact::new(atom.clone(), level),
            dependency,
        });
        state.frontier = frontier;
        chosen
    }

    /// The inclusion application the next step would perform, assuming the
    /// state is key-saturated.
    pub fn next_id_application(&self, state: &mut ChaseState) -> Option<IdApplication<'d>> {
        self.scan(state)
    }

    /// One chase step: key saturation, then at most one inclusion application.
    pub fn chase_step(&self, state: &mut ChaseState) -> StepOutcome {
        self.advance(state, &Budget::unlimited()).unwrap_or(StepOutcome::Completed)
    }

    /// Returns `None` when the budget forbids the next inclusion application.
    fn advance(&self, state: &mut ChaseState, budget: &Budget) -> Option<StepOutcome> {
        if state.status == ChaseStatus::Failed {
            return Some(StepOutcome::Failed);
        }
        self.kd_saturate(state);
        if state.status == ChaseStatus::Failed {
            return Some(StepOutcome::Failed);
        }
        let Some(app) = self.scan(state) else {
            state.status = ChaseStatus::Completed;
            state.stopped_by = None;
            return Some(StepOutcome::Completed);
        };
        if budget.max_steps.is_some_and(|m| state.step_count >= m) {
            state.stopped_by = Some(BudgetLimit::Steps);
            return None;
        }
        if budget.max_level.is_some_and(|m| app.fact.level >= m) {
            state.stopped_by = Some(BudgetLimit::Level);
            return None;
        }
        state.status = ChaseStatus::Active;
        Some(StepOutcome::Applied(state.apply_id_rule(&app.fact.atom, app.dependency)))
    }

    /// Continues `state` until completion, failure or budget exhaustion.
    pub fn run_from(&self, mut state: ChaseState, budget: Budget) -> ChaseState {
        loop {
            match self.advance(&mut state, &budget) {
                Some(StepOutcome::Applied(_)) => continue,
                Some(_) => return state,
                None => {
                    state.status = ChaseStatus::Active;
                    return state;
                }
            }
        }
    }

    /// Continues `state` along the same chase sequence until the facts below
    /// `level_bound` are built (`prefix_bound() >= level_bound`), the chase
    /// ends, or `budget` runs out. Facts at or above the bound may be created
    /// when the sequence needs them first, but none above `budget.max_level`.
    pub fn run_to_prefix(&self, mut state: ChaseState, level_bound: u32, budget: Budget) -> ChaseState {
        let ceiling = budget.max_level.unwrap_or(u32::MAX);
        let mut cap = level_bound.saturating_sub(1).min(ceiling);
        loop {
            state = self.run_from(state, Budget { max_steps: budget.max_steps, max_level: Some(cap) });
            match (state.status, state.stopped_by) {
                (ChaseStatus::Active, Some(BudgetLimit::Level))
                    if state.prefix_bound() < Some(level_bound) && cap < ceiling =>
                {
                    cap += 1;
                }
                _ => return state,
            }
        }
    }

    pub fn run(&self, db: &Database, budget: Budget) -> ChaseState {
        self.run_from(ChaseState::new(db), budget)
    }
}

/// Chases `db` under `deps` within `budget`.
pub fn run_chase(db: &Database, deps: &DependencySet, budget: Budget) -> ChaseState {
    ChaseEngine::new(deps).run(db, budget)
}

/// Same as [`run_chase`], recording every rule application.
pub fn run_chase_traced(db: &Database, deps: &DependencySet, budget: Budget) -> ChaseState {
    ChaseEngine::new(deps).run_from(ChaseState::new(db).with_trace(), budget)
}
