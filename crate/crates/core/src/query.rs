//! Conjunctive queries over chase prefixes.
//!
//! Answers computed over the facts below a level bound are sound certain
//! answers. They are complete only when the bound is large enough, and how
//! large that is depends on the data, so every result reports the bound it
//! was computed with.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use thiserror::Error;

use crate::chase::{Budget, ChaseEngine, ChaseState, ChaseStatus};
use crate::constant::{is_bare_constant, Constant};
use crate::dsl::{domain_constant, Cursor, ParseError, Word};
use crate::model::{Atom, Database, DependencySet, Fact, Predicate, Schema};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum QueryError {
    #[error("query body is empty")]
    EmptyBody,
    #[error("head variable `{0}` does not occur in the body")]
    UnsafeHeadVariable(String),
    #[error("`{predicate}` expects {expected} terms, got {found}")]
    ArityMismatch { predicate: String, expected: usize, found: usize },
    #[error("queries have heads of different length ({0} vs {1})")]
    HeadMismatch(usize, usize),
    #[error("the chase failed: the database is inconsistent with the key dependencies")]
    ChaseFailed,
    #[error("prefix below level {requested} is not materialized (complete only below level {available})")]
    PrefixNotMaterialized { requested: u32, available: u32 },
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Term {
    Var(String),
    Const(Constant),
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Var(v) => f.write_str(v),
            Term::Const(c) => write!(f, "{c}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QueryAtom {
    pub predicate: Predicate,
    pub terms: Vec<Term>,
}

impl fmt::Display for QueryAtom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.predicate.name())?;
        for (i, t) in self.terms.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{t}")?;
        }
        f.write_str(")")
    }
}

/// `name(head) :- body.`
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConjunctiveQuery {
    name: String,
    head: Vec<String>,
    body: Vec<QueryAtom>,
}

impl ConjunctiveQuery {
    pub fn new(name: impl Into<String>, head: Vec<String>, body: Vec<QueryAtom>) -> Result<Self, QueryError> {
        if body.is_empty() {
            return Err(QueryError::EmptyBody);
        }
        for a in &body {
            if a.terms.len() != a.predicate.arity() {
                return Err(QueryError::ArityMismatch {
                    predicate: a.predicate.name().to_string(),
                    expected: a.predicate.arity(),
                    found: a.terms.len(),
                });
            }
        }
        let q = ConjunctiveQuery { name: name.into(), head, body };
        let vars = q.variables();
        if let Some(v) = q.head.iter().find(|v| !vars.contains(v)) {
            return Err(QueryError::UnsafeHeadVariable(v.clone()));
        }
        Ok(q)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn head(&self) -> &[String] {
        &self.head
    }

    pub fn body(&self) -> &[QueryAtom] {
        &self.body
    }

    /// Distinct body variables in order of first occurrence.
    pub fn variables(&self) -> Vec<String> {
        let mut seen = Vec::new();
        for a in &self.body {
            for t in &a.terms {
                if let Term::Var(v) = t {
                    if !seen.contains(v) {
                        seen.push(v.clone());
                    }
                }
            }
        }
        seen
    }
}

impl fmt::Display for ConjunctiveQuery {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({}) :- ", self.name, self.head.join(","))?;
        for (i, a) in self.body.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{a}")?;
        }
        f.write_str(".")
    }
}

/// Parses one or more `q(X,Y) :- p(X,c), r(Y,X).` queries. Capitalized
/// identifiers are variables; other identifiers and quoted strings are constants.
pub fn parse_queries(src: &str, schema: &Schema) -> Result<Vec<ConjunctiveQuery>, ParseError> {
    let mut cur = Cursor::new(src);
    let mut out = Vec::new();
    loop {
        cur.skip_ws();
        if cur.at_eof() {
            return Ok(out);
        }
        let (name, at) = cur.ident()?;
        let mut head = Vec::new();
        cur.expect('(')?;
        if !cur.eat(')') {
            loop {
                let (v, v_at) = cur.ident()?;
                if !v.starts_with(|c: char| c.is_ascii_uppercase()) {
                    return Err(v_at.error(format!("head term `{v}` must be a variable")));
                }
                head.push(v);
                if cur.eat(')') {
                    break;
                }
                cur.expect(',')?;
            }
        }
        cur.skip_ws();
        cur.expect_str(":-")?;
        let mut body = Vec::new();
        loop {
            cur.skip_ws();
            let (pred, p_at) = cur.ident()?;
            let predicate = schema.lookup(&pred).map_err(|e| p_at.model(e))?.clone();
            cur.expect('(')?;
            let mut terms = Vec::new();
            loop {
                cur.skip_ws();
                let (word, w_at) = cur.word()?;
                terms.push(match word {
                    Word::Ident(s) if s.starts_with(|c: char| c.is_ascii_uppercase()) => Term::Var(s),
                    Word::Ident(s) | Word::Quoted(s) => Term::Const(domain_constant(s, w_at)?),
                });
                cur.skip_ws();
                if cur.eat(')') {
                    break;
                }
                cur.expect(',')?;
            }
            body.push(QueryAtom { predicate, terms });
            cur.skip_ws();
            if cur.eat('.') {
                break;
            }
            cur.expect(',')?;
        }
        out.push(ConjunctiveQuery::new(name, head, body).map_err(|e| at.error(e.to_string()))?);
    }
}

/// A total assignment of body variables to constants.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Homomorphism(pub BTreeMap<String, Constant>);

impl Homomorphism {
    pub fn get(&self, var: &str) -> Option<&Constant> {
        self.0.get(var)
    }

    pub fn apply(&self, term: &Term) -> Option<Constant> {
        match term {
            Term::Var(v) => self.0.get(v).cloned(),
            Term::Const(c) => Some(c.clone()),
        }
    }
}

/// Answer tuples over domain constants.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AnswerSet(BTreeSet<Vec<Constant>>);

impl AnswerSet {
    fn insert(&mut self, tuple: Vec<Constant>) {
        if tuple.iter().all(Constant::is_domain) {
            self.0.insert(tuple);
        }
    }

    pub fn contains(&self, tuple: &[Constant]) -> bool {
        self.0.contains(tuple)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Vec<Constant>> {
        self.0.iter()
    }

    pub fn is_subset(&self, other: &AnswerSet) -> bool {
        self.0.is_subset(&other.0)
    }
}

impl FromIterator<Vec<Constant>> for AnswerSet {
    fn from_iter<T: IntoIterator<Item = Vec<Constant>>>(iter: T) -> Self {
        let mut set = AnswerSet::default();
        for t in iter {
            set.insert(t);
        }
        set
    }
}

/// All homomorphisms from the query body into `facts`, sorted.
pub fn find_homomorphisms<'a>(query: &ConjunctiveQuery, facts: impl IntoIterator<Item = &'a Fact>) -> Vec<Homomorphism> {
    find_homomorphisms_from(query, facts, &BTreeMap::new())
}

/// Like [`find_homomorphisms`], restricted to extensions of `seed`.
pub fn find_homomorphisms_from<'a>(
    query: &ConjunctiveQuery,
    facts: impl IntoIterator<Item = &'a Fact>,
    seed: &BTreeMap<String, Constant>,
) -> Vec<Homomorphism> {
    let mut index: BTreeMap<&Predicate, Vec<&Atom>> = BTreeMap::new();
    for f in facts {
        index.entry(&f.atom.predicate).or_default().push(&f.atom);
    }
    let mut order: Vec<(usize, &QueryAtom)> = query.body.iter().enumerate().collect();
    order.sort_by_key(|(i, a)| (index.get(&a.predicate).map_or(0, Vec::len), *i));
    let atoms: Vec<(&QueryAtom, &[&Atom])> =
        order.into_iter().map(|(_, a)| (a, index.get(&a.predicate).map_or(&[][..], Vec::as_slice))).collect();

    let mut found = BTreeSet::new();
    let mut binding = seed.clone();
    extend(&atoms, &mut binding, &mut found);
    found.into_iter().collect()
}

fn extend(atoms: &[(&QueryAtom, &[&Atom])], binding: &mut BTreeMap<String, Constant>, found: &mut BTreeSet<Homomorphism>) {
    let Some(((qa, candidates), rest)) = atoms.split_first() else {
        found.insert(Homomorphism(binding.clone()));
        return;
    };
    for fact in candidates.iter() {
        let mut added = Vec::new();
        let mut ok = true;
        for (term, value) in qa.terms.iter().zip(&fact.args) {
            match term {
                Term::Const(c) => ok = c == value,
                Term::Var(v) => match binding.get(v) {
                    Some(bound) => ok = bound == value,
                    None => {
                        binding.insert(v.clone(), value.clone());
                        added.push(v.clone());
                    }
                },
            }
            if !ok {
                break;
            }
        }
        if ok {
            extend(rest, binding, found);
        }
        for v in added {
            binding.remove(&v);
        }
    }
}

fn project_head(query: &ConjunctiveQuery, h: &Homomorphism) -> Vec<Constant> {
    query.head.iter().map(|v| h.0[v].clone()).collect()
}

/// Answers over the facts at levels below `level_bound`.
pub fn evaluate_over_prefix(chase: &ChaseState, query: &ConjunctiveQuery, level_bound: u32) -> Result<AnswerSet, QueryError> {
    if chase.status() == ChaseStatus::Failed {
        return Err(QueryError::ChaseFailed);
    }
    if let Some(available) = chase.prefix_bound() {
        if level_bound > available {
            return Err(QueryError::PrefixNotMaterialized { requested: level_bound, available });
        }
    }
    let prefix: Vec<Fact> = chase.facts().filter(|f| f.level < level_bound).collect();
    Ok(find_homomorphisms(query, &prefix).iter().map(|h| project_head(query, h)).collect())
}

/// Reference evaluation by enumerating every assignment of the body
/// variables to the constants of `instance`.
pub fn brute_force_evaluate<'a>(instance: impl IntoIterator<Item = &'a Fact>, query: &ConjunctiveQuery) -> AnswerSet {
    let atoms: HashSet<&Atom> = instance.into_iter().map(|f| &f.atom).collect();
    let domain: Vec<&Constant> = atoms.iter().flat_map(|a| a.args.iter()).collect::<BTreeSet<_>>().into_iter().collect();
    let vars = query.variables();
    let mut answers = AnswerSet::default();
    if domain.is_empty() && !vars.is_empty() {
        return answers;
    }
    let mut digits = vec![0usize; vars.len()];
    loop {
        let assignment: BTreeMap<&str, &Constant> =
            vars.iter().map(String::as_str).zip(digits.iter().map(|&d| domain[d])).collect();
        let value = |t: &Term| match t {
            Term::Var(v) => assignment[v.as_str()].clone(),
            Term::Const(c) => c.clone(),
        };
        let holds = query.body.iter().all(|qa| {
            let atom = Atom { predicate: qa.predicate.clone(), args: qa.terms.iter().map(value).collect() };
            atoms.contains(&atom)
        });
        if holds {
            answers.insert(query.head.iter().map(|v| assignment[v.as_str()].clone()).collect());
        }
        // odometer
        let mut k = 0;
        loop {
            if k == digits.len() {
                return answers;
            }
            digits[k] += 1;
            if digits[k] < domain.len() {
                break;
            }
            digits[k] = 0;
            k += 1;
        }
    }
}

/// The body of a query turned into facts.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FrozenQuery {
    pub facts: Database,
    pub head: Vec<Constant>,
    /// Variable to frozen constant.
    pub mapping: BTreeMap<String, Constant>,
}

/// Maps each variable (in order of first occurrence) to `_frz1`, `_frz2`, ...
pub fn freeze_query(query: &ConjunctiveQuery) -> FrozenQuery {
    let mapping: BTreeMap<String, Constant> = query
        .variables()
        .into_iter()
        .enumerate()
        .map(|(i, v)| (v, Constant::domain(format!("_frz{}", i + 1))))
        .collect();
    let value = |t: &Term| match t {
        Term::Var(v) => mapping[v].clone(),
        Term::Const(c) => c.clone(),
    };
    let atoms = query.body.iter().map(|qa| Atom { predicate: qa.predicate.clone(), args: qa.terms.iter().map(value).collect() });
    let facts = Database::new(atoms).expect("frozen constants are domain constants");
    let head = query.head.iter().map(|v| mapping[v].clone()).collect();
    FrozenQuery { facts, head, mapping }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Containment {
    Contained,
    /// No witness among the facts below the level bound. Deeper levels may hold one.
    NotContainedUpTo(u32),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ContainmentResult {
    pub verdict: Containment,
    /// The frozen first query violates a key on domain constants, so it has
    /// no answers under the dependencies and containment holds trivially.
    pub vacuous: bool,
    pub level_bound: u32,
    pub chase_status: ChaseStatus,
}

/// Frozen variable `_frz<k>` as the fresh constant with index `k`.
fn thaw(c: &Constant, mapping: &BTreeMap<&Constant, u64>) -> Constant {
    mapping.get(c).map_or_else(|| c.clone(), |&k| Constant::Fresh(k))
}

/// Checks `q1 ⊆ q2` under `deps` by chasing the frozen body of `q1` and
/// looking for a homomorphism of `q2` into the facts below `level_bound`
/// that maps the head of `q2` onto the frozen head of `q1`.
///
/// During the chase, frozen variables behave as labeled nulls, so key merges
/// may identify them with each other or with constants of `q1`.
pub fn check_containment(
    q1: &ConjunctiveQuery,
    q2: &ConjunctiveQuery,
    deps: &DependencySet,
    level_bound: u32,
    budget: Budget,
) -> Result<ContainmentResult, QueryError> {
    if q1.head.len() != q2.head.len() {
        return Err(QueryError::HeadMismatch(q1.head.len(), q2.head.len()));
    }
    let frozen = freeze_query(q1);
    let nulls: BTreeMap<&Constant, u64> =
        frozen.mapping.values().map(|c| (c, frozen_index(c))).collect();
    let facts = frozen.facts.atoms().map(|a| {
        Fact::new(Atom { predicate: a.predicate.clone(), args: a.args.iter().map(|c| thaw(c, &nulls)).collect() }, 0)
    });
    let state = ChaseEngine::new(deps).run_to_prefix(ChaseState::from_facts(facts), level_bound, budget);
    if state.status() == ChaseStatus::Failed {
        return Ok(ContainmentResult {
            verdict: Containment::Contained,
            vacuous: true,
            level_bound,
            chase_status: state.status(),
        });
    }
    if let Some(available) = state.prefix_bound() {
        if level_bound > available {
            return Err(QueryError::PrefixNotMaterialized { requested: level_bound, available });
        }
    }
    let head: Vec<Constant> = frozen.head.iter().map(|c| state.resolve(&thaw(c, &nulls))).collect();
    let mut seed = BTreeMap::new();
    for (v, c) in q2.head.iter().zip(head) {
        if seed.insert(v.clone(), c.clone()).is_some_and(|prev| prev != c) {
            return Ok(ContainmentResult {
                verdict: Containment::NotContainedUpTo(level_bound),
                vacuous: false,
                level_bound,
                chase_status: state.status(),
            });
        }
    }
    let prefix: Vec<Fact> = state.facts().filter(|f| f.level < level_bound).collect();
    let verdict = if find_homomorphisms_from(q2, &prefix, &seed).is_empty() {
        Containment::NotContainedUpTo(level_bound)
    } else {
        Containment::Contained
    };
    Ok(ContainmentResult { verdict, vacuous: false, level_bound, chase_status: state.status() })
}

fn frozen_index(c: &Constant) -> u64 {
    c.name().and_then(|n| n.strip_prefix("_frz")).and_then(|k| k.parse().ok()).expect("frozen constant")
}

/// Result of certain-answer computation over a chase prefix.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CertainAnswers {
    Answers { answers: AnswerSet, level_bound: u32, chase_status: ChaseStatus },
    /// The chase failed: no database satisfies the dependencies, so every tuple is certain.
    Inconsistent,
}

/// Chases `db` deep enough to build the prefix below `level_bound` (within
/// `budget`) and evaluates `query` over it.
pub fn certain_answers(
    db: &Database,
    deps: &DependencySet,
    query: &ConjunctiveQuery,
    level_bound: u32,
    budget: Budget,
) -> Result<(CertainAnswers, ChaseState), QueryError> {
    let state = ChaseEngine::new(deps).run_to_prefix(ChaseState::new(db), level_bound, budget);
    if state.status() == ChaseStatus::Failed {
        return Ok((CertainAnswers::Inconsistent, state));
    }
    let answers = evaluate_over_prefix(&state, query, level_bound)?;
    Ok((CertainAnswers::Answers { answers, level_bound, chase_status: state.status() }, state))
}

/// Renders a tuple as `(a,b)`.
pub fn format_tuple(tuple: &[Constant]) -> String {
    let parts: Vec<String> = tuple
        .iter()
        .map(|c| match c.name() {
            Some(n) if is_bare_constant(n) => n.to_string(),
            _ => c.to_string(),
        })
        .collect();
    format!("({})", parts.join(","))
}
