//! Recognition of conceptual dependency sets.
//!
//! A set of key and inclusion dependencies encodes an Extended-ER schema when
//! the predicates can be split into entities (unary), relationships and
//! attributes such that every dependency has one of a fixed set of shapes and
//! the per-relationship / per-attribute typing constraints hold.
//!
//! The search forces unary predicates into the entity set and tries each
//! remaining predicate (in name order) as a relationship first, then as an
//! attribute, pruning as soon as a condition over the assigned predicates
//! fails. Worst case is exponential in the number of non-unary predicates.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use petgraph::graphmap::DiGraphMap;

use crate::model::{DependencySet, InclusionDependency, Predicate, Schema};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Role {
    Entity,
    Relationship,
    Attribute,
}

/// Conditions of the conceptual dependency characterization, by letter.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CdCondition {
    /// Entities are unary.
    A,
    /// Relationships and attributes have arity at least 2.
    B,
    /// Allowed key shapes.
    C,
    /// Allowed inclusion shapes.
    D,
    /// Every relationship component is typed by exactly one entity.
    E,
    /// Every attribute is attached to exactly one entity or relationship.
    F,
    /// Entity-to-relationship participation has its typing inverse.
    G,
    /// Relationship-to-attribute inclusion has its inverse.
    H,
    /// Entity-to-binary-attribute inclusion has its inverse.
    I,
}

impl CdCondition {
    pub fn letter(self) -> char {
        match self {
            CdCondition::A => 'a',
            CdCondition::B => 'b',
            CdCondition::C => 'c',
            CdCondition::D => 'd',
            CdCondition::E => 'e',
            CdCondition::F => 'f',
            CdCondition::G => 'g',
            CdCondition::H => 'h',
            CdCondition::I => 'i',
        }
    }
}

impl fmt::Display for CdCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({})", self.letter())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CdViolation {
    pub condition: CdCondition,
    pub detail: String,
}

impl CdViolation {
    fn new(condition: CdCondition, detail: String) -> Self {
        CdViolation { condition, detail }
    }
}

impl fmt::Display for CdViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.condition, self.detail)
    }
}

/// Split of the schema into entities, relationships and attributes.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CdPartition {
    pub entities: BTreeSet<Predicate>,
    pub relationships: BTreeSet<Predicate>,
    pub attributes: BTreeSet<Predicate>,
}

impl CdPartition {
    pub fn from_roles<'a>(roles: impl IntoIterator<Item = (&'a Predicate, Role)>) -> Self {
        let mut part = CdPartition::default();
        for (p, role) in roles {
            let set = match role {
                Role::Entity => &mut part.entities,
                Role::Relationship => &mut part.relationships,
                Role::Attribute => &mut part.attributes,
            };
            set.insert(p.clone());
        }
        part
    }

    pub fn role(&self, p: &Predicate) -> Option<Role> {
        if self.entities.contains(p) {
            Some(Role::Entity)
        } else if self.relationships.contains(p) {
            Some(Role::Relationship)
        } else if self.attributes.contains(p) {
            Some(Role::Attribute)
        } else {
            None
        }
    }

    /// True iff the three sets are disjoint and cover exactly the schema.
    pub fn covers(&self, schema: &Schema) -> bool {
        let total = self.entities.len() + self.relationships.len() + self.attributes.len();
        total == schema.len()
            && schema.predicates().all(|p| {
                [&self.entities, &self.relationships, &self.attributes].iter().filter(|s| s.contains(p)).count() == 1
            })
    }
}

impl fmt::Display for CdPartition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names = |s: &BTreeSet<Predicate>| s.iter().map(|p| p.name().to_string()).collect::<Vec<_>>().join(", ");
        writeln!(f, "entities: {{{}}}", names(&self.entities))?;
        writeln!(f, "relationships: {{{}}}", names(&self.relationships))?;
        write!(f, "attributes: {{{}}}", names(&self.attributes))
    }
}

/// Every attribute of both sides occurs exactly once in the attribute lists.
pub fn is_full_width(id: &InclusionDependency, schema: &Schema) -> bool {
    let covers = |pred: &Predicate, attrs: &[usize]| {
        let arity = schema.get(pred.name()).map_or(pred.arity(), Predicate::arity);
        let set: BTreeSet<_> = attrs.iter().copied().collect();
        set.len() == attrs.len() && set == (1..=arity).collect()
    };
    covers(id.lhs(), id.lhs_attrs()) && covers(id.rhs(), id.rhs_attrs())
}

/// True iff the predicate graph with an edge `lhs -> rhs` per inclusion has a cycle.
pub fn is_cyclic(ids: &[InclusionDependency]) -> bool {
    let mut graph = DiGraphMap::<&str, ()>::new();
    for id in ids {
        graph.add_edge(id.lhs().name(), id.rhs().name(), ());
    }
    petgraph::algo::is_cyclic_directed(&graph)
}

fn seq(n: usize) -> Vec<usize> {
    (1..=n).collect()
}

fn single(attrs: &[usize], i: usize) -> bool {
    attrs.len() == 1 && attrs[0] == i
}

/// Which permitted shape `id` has under the given roles, if any.
fn inclusion_form(id: &InclusionDependency, lhs: Role, rhs: Role) -> Option<u8> {
    use Role::*;
    let (la, ra) = (id.lhs_attrs(), id.rhs_attrs());
    let (l_ar, r_ar) = (id.lhs().arity(), id.rhs().arity());
    match (lhs, rhs) {
        (Entity, Entity) if single(la, 1) && single(ra, 1) => Some(1),
        (Entity, Relationship) if single(la, 1) && ra.len() == 1 => Some(2),
        (Relationship, Entity) if la.len() == 1 && single(ra, 1) => Some(3),
        (Relationship, Relationship) => {
            let mut sorted = ra.to_vec();
            sorted.sort_unstable();
            (l_ar == r_ar && la == seq(l_ar).as_slice() && sorted == seq(r_ar)).then_some(4)
        }
        (Attribute, Entity) if single(la, 1) && single(ra, 1) => Some(5),
        (Attribute, Relationship) => {
            let n = r_ar;
            (n + 1 == l_ar && la == seq(n).as_slice() && ra == seq(n).as_slice()).then_some(6)
        }
        (Entity, Attribute) if single(la, 1) && single(ra, 1) => Some(7),
        (Relationship, Attribute) => {
            let n = l_ar;
            (n + 1 == r_ar && la == seq(n).as_slice() && ra == seq(n).as_slice()).then_some(8)
        }
        _ => None,
    }
}

fn has_inclusion(deps: &DependencySet, lhs: &Predicate, la: &[usize], rhs: &Predicate, ra: &[usize]) -> bool {
    deps.ids().iter().any(|id| id.lhs() == lhs && id.lhs_attrs() == la && id.rhs() == rhs && id.rhs_attrs() == ra)
}

/// Checks every condition whose predicates all have a role. With a total
/// role assignment this is the full check.
fn check_roles(schema: &Schema, deps: &DependencySet, role: &dyn Fn(&Predicate) -> Option<Role>) -> Vec<CdViolation> {
    use CdCondition as C;
    use Role::*;
    let mut out = Vec::new();

    for p in schema.predicates() {
        match role(p) {
            Some(Entity) if p.arity() != 1 => {
                out.push(CdViolation::new(C::A, format!("entity `{}` has arity {}", p.name(), p.arity())))
            }
            Some(Relationship | Attribute) if p.arity() < 2 => {
                out.push(CdViolation::new(C::B, format!("`{}` has arity {} but is not an entity", p.name(), p.arity())))
            }
            _ => {}
        }
    }

    for kd in deps.kds() {
        let ok = match role(kd.pred()) {
            None => continue,
            Some(Relationship) => kd.key_attrs().len() == 1,
            Some(Attribute) => kd.key_attrs() == seq(kd.pred().arity() - 1).as_slice(),
            Some(Entity) => false,
        };
        if !ok {
            out.push(CdViolation::new(C::C, format!("`{kd}` has no permitted key shape")));
        }
    }

    for id in deps.ids() {
        let (Some(l), Some(r)) = (role(id.lhs()), role(id.rhs())) else { continue };
        if inclusion_form(id, l, r).is_none() {
            out.push(CdViolation::new(C::D, format!("`{id}` has no permitted inclusion shape")));
        }
    }

    for r in schema.predicates().filter(|p| role(p) == Some(Relationship)) {
        for i in 1..=r.arity() {
            let typing: BTreeSet<&str> = deps
                .ids()
                .iter()
                .filter(|id| id.lhs() == r && single(id.lhs_attrs(), i) && single(id.rhs_attrs(), 1))
                .filter(|id| role(id.rhs()) == Some(Entity))
                .map(|id| id.rhs().name())
                .collect();
            match typing.len() {
                0 => out.push(CdViolation::new(
                    C::E,
                    format!("relationship `{}` position {i} has no inclusion into an entity", r.name()),
                )),
                1 => {}
                _ => out.push(CdViolation::new(
                    C::E,
                    format!(
                        "relationship `{}` position {i} is included in several entities: {}",
                        r.name(),
                        typing.into_iter().collect::<Vec<_>>().join(", ")
                    ),
                )),
            }
        }
    }

    'attrs: for a in schema.predicates().filter(|p| role(p) == Some(Attribute)) {
        let n = a.arity() - 1;
        let mut owners = BTreeSet::new();
        for id in deps.ids() {
            let p = id.rhs();
            if id.lhs() != a || p.arity() != n || id.lhs_attrs() != seq(n) || id.rhs_attrs() != seq(n) {
                continue;
            }
            match role(p) {
                None => continue 'attrs,
                Some(Relationship | Entity) => {
                    owners.insert(p.name());
                }
                Some(Attribute) => {}
            }
        }
        match owners.len() {
            0 => out.push(CdViolation::new(C::F, format!("attribute `{}` is not attached to any owner", a.name()))),
            1 => {}
            _ => out.push(CdViolation::new(
                C::F,
                format!(
                    "attribute `{}` is attached to several owners: {}",
                    a.name(),
                    owners.into_iter().collect::<Vec<_>>().join(", ")
                ),
            )),
        }
    }

    for id in deps.ids() {
        let (Some(l), Some(r)) = (role(id.lhs()), role(id.rhs())) else { continue };
        let (la, ra) = (id.lhs_attrs(), id.rhs_attrs());
        let cond = match (l, r) {
            (Entity, Relationship) if single(la, 1) && ra.len() == 1 => C::G,
            (Relationship, Attribute)
                if id.lhs().arity() + 1 == id.rhs().arity()
                    && la == seq(id.lhs().arity())
                    && ra == seq(id.lhs().arity()) =>
            {
                C::H
            }
            (Entity, Attribute) if id.rhs().arity() == 2 && single(la, 1) && single(ra, 1) => C::I,
            _ => continue,
        };
        if !has_inclusion(deps, id.rhs(), ra, id.lhs(), la) {
            out.push(CdViolation::new(cond, format!("`{id}` lacks its inverse inclusion")));
        }
    }

    out
}

/// Full check of a fixed partition.
pub fn check_partition(schema: &Schema, deps: &DependencySet, partition: &CdPartition) -> Vec<CdViolation> {
    let mut out = check_roles(schema, deps, &|p| partition.role(p));
    for p in schema.predicates() {
        if partition.role(p).is_none() {
            out.insert(0, CdViolation::new(CdCondition::A, format!("`{}` is not assigned to any set", p.name())));
        }
    }
    out
}

/// Searches for a witnessing partition. On rejection, returns the violations
/// of the complete candidate with fewest violations (first in enumeration
/// order on ties).
pub fn validate_cd_set(schema: &Schema, deps: &DependencySet) -> Result<CdPartition, Vec<CdViolation>> {
    let mut roles: BTreeMap<&Predicate, Role> =
        schema.predicates().filter(|p| p.arity() == 1).map(|p| (p, Role::Entity)).collect();
    let open: Vec<&Predicate> = schema.predicates().filter(|p| p.arity() != 1).collect();

    if search(schema, deps, &open, &mut roles) {
        return Ok(CdPartition::from_roles(roles));
    }

    let mut best: Option<Vec<CdViolation>> = None;
    let choices = [Role::Relationship, Role::Attribute];
    for mask in 0u64..(1u64 << open.len().min(63)) {
        for (k, p) in open.iter().enumerate() {
            // most significant bit is the first predicate; 0 = relationship
            let bit = (mask >> (open.len() - 1 - k)) & 1;
            roles.insert(p, choices[bit as usize]);
        }
        let violations = check_roles(schema, deps, &|p| roles.get(p).copied());
        if best.as_ref().is_none_or(|b| violations.len() < b.len()) {
            best = Some(violations);
        }
    }
    Err(best.unwrap_or_default())
}

fn search<'s>(
    schema: &'s Schema,
    deps: &DependencySet,
    open: &[&'s Predicate],
    roles: &mut BTreeMap<&'s Predicate, Role>,
) -> bool {
    if !check_roles(schema, deps, &|p| roles.get(p).copied()).is_empty() {
        return false;
    }
    let Some((first, rest)) = open.split_first() else { return true };
    for role in [Role::Relationship, Role::Attribute] {
        roles.insert(first, role);
        if search(schema, deps, rest, roles) {
            return true;
        }
    }
    roles.remove(first);
    false
}
