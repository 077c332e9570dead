//! Schema, facts and dependencies.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::constant::Constant;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("predicate `{0}` must have arity at least 1")]
    ZeroArity(String),
    #[error("predicate `{0}` declared twice")]
    DuplicatePredicate(String),
    #[error("unknown predicate `{0}`")]
    UnknownPredicate(String),
    #[error("`{predicate}` expects {expected} arguments, got {found}")]
    ArityMismatch { predicate: String, expected: usize, found: usize },
    #[error("position {position} out of range for `{predicate}` (arity {arity})")]
    PositionOutOfRange { predicate: String, position: usize, arity: usize },
    #[error("position {position} repeated in attribute list of `{predicate}`")]
    RepeatedPosition { predicate: String, position: usize },
    #[error("attribute lists differ in length ({lhs} vs {rhs})")]
    LengthMismatch { lhs: usize, rhs: usize },
    #[error("empty attribute list")]
    EmptyAttributes,
    #[error("key dependency over `{0}` requires arity at least 2")]
    KeyOnUnary(String),
    #[error("second key dependency over `{0}`")]
    DuplicateKey(String),
    #[error("fresh constant `{0}` not allowed in a database")]
    FreshInDatabase(String),
}

/// A relation symbol with its arity.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Predicate {
    name: Arc<str>,
    arity: usize,
}

impl Predicate {
    pub fn new(name: impl AsRef<str>, arity: usize) -> Result<Self, ModelError> {
        if arity == 0 {
            return Err(ModelError::ZeroArity(name.as_ref().to_string()));
        }
        Ok(Predicate { name: Arc::from(name.as_ref()), arity })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    fn check_positions(&self, positions: &[usize]) -> Result<(), ModelError> {
        if positions.is_empty() {
            return Err(ModelError::EmptyAttributes);
        }
        let mut seen = BTreeSet::new();
        for &p in positions {
            if p == 0 || p > self.arity {
                return Err(ModelError::PositionOutOfRange {
                    predicate: self.name().to_string(),
                    position: p,
                    arity: self.arity,
                });
            }
            if !seen.insert(p) {
                return Err(ModelError::RepeatedPosition { predicate: self.name().to_string(), position: p });
            }
        }
        Ok(())
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.name, self.arity)
    }
}

/// The set of predicates of a relational schema, keyed by name.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Schema {
    predicates: BTreeMap<Arc<str>, Predicate>,
}

impl Schema {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_predicates(preds: impl IntoIterator<Item = Predicate>) -> Result<Self, ModelError> {
        let mut schema = Schema::new();
        for p in preds {
            schema.add(p)?;
        }
        Ok(schema)
    }

    pub fn add(&mut self, pred: Predicate) -> Result<(), ModelError> {
        if self.predicates.contains_key(pred.name()) {
            return Err(ModelError::DuplicatePredicate(pred.name().to_string()));
        }
        self.predicates.insert(pred.name.clone(), pred);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Predicate> {
        self.predicates.get(name)
    }

    pub fn lookup(&self, name: &str) -> Result<&Predicate, ModelError> {
        self.get(name).ok_or_else(|| ModelError::UnknownPredicate(name.to_string()))
    }

    /// Predicates in name order.
    pub fn predicates(&self) -> impl Iterator<Item = &Predicate> {
        self.predicates.values()
    }

    pub fn len(&self) -> usize {
        self.predicates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.predicates.is_empty()
    }
}

/// A predicate applied to constants. Ordering is by predicate name and then
/// argument-wise by constant order, which is the fact sort order used by the
/// chase; levels are not part of it.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Atom {
    pub predicate: Predicate,
    pub args: Vec<Constant>,
}

impl Atom {
    pub fn new(predicate: Predicate, args: Vec<Constant>) -> Result<Self, ModelError> {
        if args.len() != predicate.arity() {
            return Err(ModelError::ArityMismatch {
                predicate: predicate.name().to_string(),
                expected: predicate.arity(),
                found: args.len(),
            });
        }
        Ok(Atom { predicate, args })
    }

    /// Values at 1-based `positions`.
    pub fn project(&self, positions: &[usize]) -> Vec<Constant> {
        positions.iter().map(|&p| self.args[p - 1].clone()).collect()
    }

    pub fn contains(&self, c: &Constant) -> bool {
        self.args.contains(c)
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.predicate.name())?;
        for (i, a) in self.args.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{a}")?;
        }
        f.write_str(")")
    }
}

/// An atom tagged with its chase level.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Fact {
    pub atom: Atom,
    pub level: u32,
}

impl Fact {
    pub fn new(atom: Atom, level: u32) -> Self {
        Fact { atom, level }
    }

    pub fn predicate(&self) -> &Predicate {
        &self.atom.predicate
    }

    pub fn args(&self) -> &[Constant] {
        &self.atom.args
    }

    pub fn sort_key(&self) -> &Atom {
        fact_sort_key(self)
    }
}

impl fmt::Display for Fact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} @{}", self.atom, self.level)
    }
}

/// Sort token of a fact: its atom. Two facts get equal tokens iff they agree
/// on predicate and arguments.
pub fn fact_sort_key(fact: &Fact) -> &Atom {
    &fact.atom
}

/// `lhs[lhs_attrs] ⊆ rhs[rhs_attrs]`, positions 1-based.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct InclusionDependency {
    lhs: Predicate,
    lhs_attrs: Vec<usize>,
    rhs: Predicate,
    rhs_attrs: Vec<usize>,
}

impl InclusionDependency {
    pub fn new(
        lhs: Predicate,
        lhs_attrs: Vec<usize>,
        rhs: Predicate,
        rhs_attrs: Vec<usize>,
    ) -> Result<Self, ModelError> {
        lhs.check_positions(&lhs_attrs)?;
        rhs.check_positions(&rhs_attrs)?;
        if lhs_attrs.len() != rhs_attrs.len() {
            return Err(ModelError::LengthMismatch { lhs: lhs_attrs.len(), rhs: rhs_attrs.len() });
        }
        Ok(InclusionDependency { lhs, lhs_attrs, rhs, rhs_attrs })
    }

    pub fn lhs(&self) -> &Predicate {
        &self.lhs
    }

    pub fn rhs(&self) -> &Predicate {
        &self.rhs
    }

    pub fn lhs_attrs(&self) -> &[usize] {
        &self.lhs_attrs
    }

    pub fn rhs_attrs(&self) -> &[usize] {
        &self.rhs_attrs
    }

    /// Every attribute of both sides occurs exactly once.
    pub fn is_full_width(&self) -> bool {
        // positions are already known to be distinct and in range
        self.lhs_attrs.len() == self.lhs.arity() && self.rhs_attrs.len() == self.rhs.arity()
    }

    /// `ID:lhs[i,j]<=rhs[k,l]`
    pub fn encode(&self) -> String {
        format!(
            "ID:{}[{}]<={}[{}]",
            self.lhs.name(),
            join_positions(&self.lhs_attrs),
            self.rhs.name(),
            join_positions(&self.rhs_attrs)
        )
    }
}

impl fmt::Display for InclusionDependency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "inclusion {}[{}] <= {}[{}]",
            self.lhs.name(),
            join_positions(&self.lhs_attrs),
            self.rhs.name(),
            join_positions(&self.rhs_attrs)
        )
    }
}

/// `key(pred) = key_attrs`, positions 1-based and kept sorted.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct KeyDependency {
    pred: Predicate,
    key_attrs: Vec<usize>,
}

impl KeyDependency {
    pub fn new(pred: Predicate, mut key_attrs: Vec<usize>) -> Result<Self, ModelError> {
        if pred.arity() < 2 {
            return Err(ModelError::KeyOnUnary(pred.name().to_string()));
        }
        pred.check_positions(&key_attrs)?;
        key_attrs.sort_unstable();
        Ok(KeyDependency { pred, key_attrs })
    }

    pub fn pred(&self) -> &Predicate {
        &self.pred
    }

    pub fn key_attrs(&self) -> &[usize] {
        &self.key_attrs
    }

    /// Positions outside the key, ascending.
    pub fn non_key_attrs(&self) -> Vec<usize> {
        (1..=self.pred.arity()).filter(|p| !self.key_attrs.contains(p)).collect()
    }

    /// `KD:pred{i,j}`
    pub fn encode(&self) -> String {
        format!("KD:{}{{{}}}", self.pred.name(), join_positions(&self.key_attrs))
    }
}

impl fmt::Display for KeyDependency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "key {} {{{}}}", self.pred.name(), join_positions(&self.key_attrs))
    }
}

fn join_positions(ps: &[usize]) -> String {
    ps.iter().map(|p| p.to_string()).collect::<Vec<_>>().join(",")
}

/// Either kind of dependency.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DependencyRef<'a> {
    Inclusion(&'a InclusionDependency),
    Key(&'a KeyDependency),
}

impl DependencyRef<'_> {
    pub fn encode(&self) -> String {
        match self {
            DependencyRef::Inclusion(id) => id.encode(),
            DependencyRef::Key(kd) => kd.encode(),
        }
    }
}

impl fmt::Display for DependencyRef<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DependencyRef::Inclusion(id) => id.fmt(f),
            DependencyRef::Key(kd) => kd.fmt(f),
        }
    }
}

/// Sort token of a dependency: its string encoding, compared byte-wise.
pub fn dependency_sort_key(dep: DependencyRef<'_>) -> String {
    dep.encode()
}

/// Σ = Σ_I ∪ Σ_K. At most one key per predicate.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DependencySet {
    ids: Vec<InclusionDependency>,
    kds: Vec<KeyDependency>,
}

impl DependencySet {
    pub fn new(ids: Vec<InclusionDependency>, kds: Vec<KeyDependency>) -> Result<Self, ModelError> {
        let mut set = DependencySet::default();
        for id in ids {
            set.add_inclusion(id);
        }
        for kd in kds {
            set.add_key(kd)?;
        }
        Ok(set)
    }

    pub fn add_inclusion(&mut self, id: InclusionDependency) {
        self.ids.push(id);
    }

    pub fn add_key(&mut self, kd: KeyDependency) -> Result<(), ModelError> {
        if self.kds.iter().any(|k| k.pred == kd.pred) {
            return Err(ModelError::DuplicateKey(kd.pred.name().to_string()));
        }
        self.kds.push(kd);
        Ok(())
    }

    /// Returns a copy without the inclusion dependencies matching `pred`.
    pub fn without_inclusions(&self, mut pred: impl FnMut(&InclusionDependency) -> bool) -> Self {
        DependencySet { ids: self.ids.iter().filter(|id| !pred(id)).cloned().collect(), kds: self.kds.clone() }
    }

    pub fn ids(&self) -> &[InclusionDependency] {
        &self.ids
    }

    pub fn kds(&self) -> &[KeyDependency] {
        &self.kds
    }

    pub fn len(&self) -> usize {
        self.ids.len() + self.kds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty() && self.kds.is_empty()
    }

    /// All dependencies in dependency sort order.
    pub fn sorted(&self) -> Vec<DependencyRef<'_>> {
        let mut all: Vec<_> = self
            .ids
            .iter()
            .map(DependencyRef::Inclusion)
            .chain(self.kds.iter().map(DependencyRef::Key))
            .map(|d| (dependency_sort_key(d), d))
            .collect();
        all.sort_by(|a, b| a.0.cmp(&b.0));
        all.dedup_by(|a, b| a.0 == b.0);
        all.into_iter().map(|(_, d)| d).collect()
    }
}

/// An initial database: level-0 facts over domain constants only.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Database {
    facts: BTreeSet<Atom>,
}

impl Database {
    pub fn new(atoms: impl IntoIterator<Item = Atom>) -> Result<Self, ModelError> {
        let mut facts = BTreeSet::new();
        for atom in atoms {
            if let Some(c) = atom.args.iter().find(|c| c.is_fresh()) {
                return Err(ModelError::FreshInDatabase(c.label()));
            }
            facts.insert(atom);
        }
        Ok(Database { facts })
    }

    /// Atoms in fact sort order.
    pub fn atoms(&self) -> impl Iterator<Item = &Atom> {
        self.facts.iter()
    }

    pub fn facts(&self) -> impl Iterator<Item = Fact> + '_ {
        self.facts.iter().map(|a| Fact::new(a.clone(), 0))
    }

    pub fn contains(&self, atom: &Atom) -> bool {
        self.facts.contains(atom)
    }

    pub fn len(&self) -> usize {
        self.facts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.facts.is_empty()
    }
}
