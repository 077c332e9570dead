#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use cdchase::chase::TraceStep;
use cdchase::dsl::{parse_dependencies, parse_instance, parse_schema};
use cdchase::query::{QueryAtom, Term};
use cdchase::{
    Atom, ConjunctiveQuery, Constant, Database, DependencySet, Fact, InclusionDependency, KeyDependency, Predicate,
    Schema,
};
use proptest::prelude::*;

pub mod reference;

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

pub fn fixture(name: &str) -> String {
    std::fs::read_to_string(fixture_path(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

pub fn load(schema: &str, deps: &str) -> (Schema, DependencySet) {
    let schema = parse_schema(&fixture(schema)).unwrap();
    let deps = parse_dependencies(&fixture(deps), &schema).unwrap();
    (schema, deps)
}

pub fn load_data(name: &str, schema: &Schema) -> Database {
    parse_instance(&fixture(name), schema).unwrap()
}

// ---------------------------------------------------------------------------
// CD oracle: tries every assignment of the three roles and checks conditions
// (a)-(i) written directly from their statements.

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum OracleRole {
    E,
    R,
    A,
}

fn seq(n: usize) -> Vec<usize> {
    (1..=n).collect()
}

fn is_perm(v: &[usize], k: usize) -> bool {
    let mut s = v.to_vec();
    s.sort_unstable();
    s == seq(k)
}

pub fn oracle_satisfies(deps: &DependencySet, roles: &BTreeMap<Predicate, OracleRole>) -> bool {
    use OracleRole::*;
    let role = |p: &Predicate| roles[p];
    let ar = |p: &Predicate| p.arity();
    // (a), (b)
    for (p, r) in roles {
        match r {
            E if p.arity() != 1 => return false,
            R | A if p.arity() < 2 => return false,
            _ => {}
        }
    }
    // (c)
    for kd in deps.kds() {
        let ok = match role(kd.pred()) {
            R => kd.key_attrs().len() == 1,
            A => kd.key_attrs() == seq(ar(kd.pred()) - 1).as_slice(),
            E => false,
        };
        if !ok {
            return false;
        }
    }
    let has = |l: &Predicate, la: &[usize], r: &Predicate, ra: &[usize]| {
        deps.ids().iter().any(|id| id.lhs() == l && id.lhs_attrs() == la && id.rhs() == r && id.rhs_attrs() == ra)
    };
    // (d)
    for id in deps.ids() {
        let (l, r) = (id.lhs(), id.rhs());
        let (la, ra) = (id.lhs_attrs(), id.rhs_attrs());
        let single = la.len() == 1;
        let ok = match (role(l), role(r)) {
            (E, E) => la == [1] && ra == [1],
            (E, R) => la == [1] && single,
            (R, E) => single && ra == [1],
            (R, R) => ar(l) == ar(r) && la == seq(ar(l)).as_slice() && is_perm(ra, ar(r)),
            (A, E) => la == [1] && ra == [1],
            (A, R) => ar(r) == ar(l) - 1 && la == seq(ar(r)).as_slice() && ra == seq(ar(r)).as_slice(),
            (E, A) => la == [1] && ra == [1],
            (R, A) => ar(l) == ar(r) - 1 && la == seq(ar(l)).as_slice() && ra == seq(ar(l)).as_slice(),
            (A, A) => false,
        };
        if !ok {
            return false;
        }
    }
    let entities: Vec<&Predicate> = roles.iter().filter(|(_, r)| **r == E).map(|(p, _)| p).collect();
    // (e)
    for (r, _) in roles.iter().filter(|(_, x)| **x == R) {
        for i in 1..=ar(r) {
            let targets = entities.iter().filter(|e| has(r, &[i], e, &[1])).count();
            if targets != 1 {
                return false;
            }
        }
    }
    // (f)
    for (a, _) in roles.iter().filter(|(_, x)| **x == A) {
        let n = ar(a) - 1;
        let targets = roles
            .iter()
            .filter(|(p, x)| matches!(x, R | E) && ar(p) == n && has(a, &seq(n), p, &seq(n)))
            .count();
        if targets != 1 {
            return false;
        }
    }
    // (g), (h), (i)
    for id in deps.ids() {
        let (l, r) = (id.lhs(), id.rhs());
        let (la, ra) = (id.lhs_attrs(), id.rhs_attrs());
        let needed = match (role(l), role(r)) {
            (E, R) if la == [1] && ra.len() == 1 => Some((r, ra.to_vec(), l, vec![1])),
            (R, A) if ar(r) == ar(l) + 1 && la == seq(ar(l)).as_slice() && ra == la => {
                Some((r, la.to_vec(), l, la.to_vec()))
            }
            (E, A) if ar(r) == 2 && la == [1] && ra == [1] => Some((r, vec![1], l, vec![1])),
            _ => None,
        };
        if let Some((p, pa, q, qa)) = needed {
            if !has(p, &pa, q, &qa) {
                return false;
            }
        }
    }
    true
}

/// A satisfying role assignment, found by trying all `3^k` of them.
pub fn oracle_cd(schema: &Schema, deps: &DependencySet) -> Option<BTreeMap<Predicate, OracleRole>> {
    let preds: Vec<Predicate> = schema.predicates().cloned().collect();
    let k = preds.len() as u32;
    for mut code in 0..3usize.pow(k) {
        let mut roles = BTreeMap::new();
        for p in &preds {
            roles.insert(p.clone(), [OracleRole::E, OracleRole::R, OracleRole::A][code % 3]);
            code /= 3;
        }
        if oracle_satisfies(deps, &roles) {
            return Some(roles);
        }
    }
    None
}

// ---------------------------------------------------------------------------
// Naive conjunctive-query evaluation: every map from variables to the active
// domain, kept if all body atoms land in the instance.

pub fn naive_answers(facts: &[Fact], q: &ConjunctiveQuery) -> BTreeSet<Vec<Constant>> {
    let atoms: BTreeSet<&Atom> = facts.iter().map(|f| &f.atom).collect();
    let mut domain: Vec<Constant> = facts.iter().flat_map(|f| f.atom.args.iter().cloned()).collect();
    domain.sort();
    domain.dedup();
    let vars = q.variables();
    let mut out = BTreeSet::new();
    if domain.is_empty() && !vars.is_empty() {
        return out;
    }
    let total = domain.len().pow(vars.len() as u32);
    for mut code in 0..total {
        let mut h = BTreeMap::new();
        for v in &vars {
            h.insert(v.as_str(), domain[code % domain.len()].clone());
            code /= domain.len();
        }
        let ok = q.body().iter().all(|qa| {
            let args = qa
                .terms
                .iter()
                .map(|t| match t {
                    Term::Var(v) => h[v.as_str()].clone(),
                    Term::Const(c) => c.clone(),
                })
                .collect();
            atoms.contains(&Atom { predicate: qa.predicate.clone(), args })
        });
        if ok {
            let tuple: Vec<Constant> = q.head().iter().map(|v| h[v.as_str()].clone()).collect();
            if tuple.iter().all(Constant::is_domain) {
                out.insert(tuple);
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Trace checking: re-executes a trace, verifying each step against the rule
// it claims to apply.

pub fn check_trace(initial: &Database, trace: &[TraceStep]) -> Result<BTreeMap<Atom, u32>, String> {
    let mut facts: BTreeMap<Atom, u32> = initial.atoms().map(|a| (a.clone(), 0)).collect();
    let mut seen_fresh: BTreeSet<Constant> = BTreeSet::new();
    let mut last_fresh = 0u64;
    for (n, step) in trace.iter().enumerate() {
        match step {
            TraceStep::Inclusion { dependency: id, parent, child } => {
                if facts.get(&parent.atom) != Some(&parent.level) {
                    return Err(format!("step {n}: parent {parent} not present"));
                }
                if child.level != parent.level + 1 || child.atom.predicate != *id.rhs() {
                    return Err(format!("step {n}: bad child {child}"));
                }
                for (l, r) in id.lhs_attrs().iter().zip(id.rhs_attrs()) {
                    if child.atom.args[r - 1] != parent.atom.args[l - 1] {
                        return Err(format!("step {n}: child {child} does not copy parent"));
                    }
                }
                for (i, c) in child.atom.args.iter().enumerate() {
                    if !id.rhs_attrs().contains(&(i + 1)) {
                        let Constant::Fresh(k) = c else { return Err(format!("step {n}: non-fresh filler")) };
                        if *k <= last_fresh || !seen_fresh.insert(c.clone()) {
                            return Err(format!("step {n}: fresh constant {c} not new"));
                        }
                        last_fresh = *k;
                    }
                }
                let witness = facts.keys().any(|a| {
                    a.predicate == *id.rhs() && id.lhs_attrs().iter().zip(id.rhs_attrs()).all(|(l, r)| {
                        a.args[r - 1] == parent.atom.args[l - 1]
                    })
                });
                if witness {
                    return Err(format!("step {n}: {id} already satisfied for {parent}"));
                }
                let e = facts.entry(child.atom.clone()).or_insert(child.level);
                *e = (*e).min(child.level);
            }
            TraceStep::Key { dependency: kd, left, right, substitution } => {
                if !facts.contains_key(&left.atom) || !facts.contains_key(&right.atom) {
                    return Err(format!("step {n}: merged facts not present"));
                }
                if kd.key_attrs().iter().any(|k| left.atom.args[k - 1] != right.atom.args[k - 1]) {
                    return Err(format!("step {n}: facts disagree on the key"));
                }
                let map: BTreeMap<&Constant, &Constant> = substitution.iter().map(|(l, w)| (l, w)).collect();
                for (l, w) in substitution {
                    if w >= l || !l.is_fresh() {
                        return Err(format!("step {n}: {l} := {w} is not a merge into the smaller constant"));
                    }
                }
                let old = std::mem::take(&mut facts);
                for (a, lvl) in old {
                    let args = a.args.iter().map(|c| map.get(c).map_or_else(|| c.clone(), |w| (*w).clone())).collect();
                    let e = facts.entry(Atom { predicate: a.predicate, args }).or_insert(lvl);
                    *e = (*e).min(lvl);
                }
                let l2 = Atom {
                    predicate: left.atom.predicate.clone(),
                    args: left.atom.args.iter().map(|c| map.get(c).map_or_else(|| c.clone(), |w| (*w).clone())).collect(),
                };
                let r2 = Atom {
                    predicate: right.atom.predicate.clone(),
                    args: right.atom.args.iter().map(|c| map.get(c).map_or_else(|| c.clone(), |w| (*w).clone())).collect(),
                };
                if l2 != r2 {
                    return Err(format!("step {n}: merge did not identify {left} and {right}"));
                }
            }
            TraceStep::Failure { .. } => {
                if n + 1 != trace.len() {
                    return Err("failure is not the last step".into());
                }
            }
        }
    }
    Ok(facts)
}

// ---------------------------------------------------------------------------
// Generators.

/// A schema of `1..=max_preds` predicates `p0, p1, ...` of arity `1..=3`.
pub fn arb_schema(max_preds: usize) -> impl Strategy<Value = Schema> {
    prop::collection::vec(1usize..=3, 1..=max_preds).prop_map(|arities| {
        Schema::from_predicates(arities.iter().enumerate().map(|(i, &a)| Predicate::new(format!("p{i}"), a).unwrap()))
            .unwrap()
    })
}

fn pick<T: Clone>(v: &[T], i: prop::sample::Index) -> T {
    v[i.index(v.len())].clone()
}

fn positions(arity: usize, len: usize, seed: &[prop::sample::Index]) -> Vec<usize> {
    let mut pool: Vec<usize> = (1..=arity).collect();
    let mut out = Vec::new();
    for s in seed.iter().take(len) {
        out.push(pool.remove(s.index(pool.len())));
    }
    out
}

/// Random inclusions and keys over `schema`.
pub fn arb_deps(schema: Schema, max_ids: usize) -> impl Strategy<Value = DependencySet> {
    let preds: Vec<Predicate> = schema.predicates().cloned().collect();
    let id_seed = (any::<prop::sample::Index>(), any::<prop::sample::Index>(), any::<prop::sample::Index>(),
        prop::collection::vec(any::<prop::sample::Index>(), 3), prop::collection::vec(any::<prop::sample::Index>(), 3));
    let kd_seed = (any::<prop::sample::Index>(), prop::collection::vec(any::<prop::sample::Index>(), 3), any::<prop::sample::Index>());
    (prop::collection::vec(id_seed, 0..=max_ids), prop::collection::vec(kd_seed, 0..=2)).prop_map(move |(ids, kds)| {
        let mut set = DependencySet::default();
        for (l, r, len, ls, rs) in ids {
            let (l, r) = (pick(&preds, l), pick(&preds, r));
            let max = l.arity().min(r.arity());
            let len = 1 + len.index(max);
            let la = positions(l.arity(), len, &ls);
            let ra = positions(r.arity(), len, &rs);
            set.add_inclusion(InclusionDependency::new(l, la, r, ra).unwrap());
        }
        for (p, ks, len) in kds {
            let p = pick(&preds, p);
            if p.arity() < 2 {
                continue;
            }
            let len = 1 + len.index(p.arity() - 1);
            let key = positions(p.arity(), len, &ks);
            let _ = set.add_key(KeyDependency::new(p, key).unwrap());
        }
        set
    })
}

/// Up to `max_facts` facts over `schema` with constants from `a, b, c`.
pub fn arb_database(schema: Schema, max_facts: usize) -> impl Strategy<Value = Database> {
    let preds: Vec<Predicate> = schema.predicates().cloned().collect();
    let consts = ["a", "b", "c"];
    prop::collection::vec((any::<prop::sample::Index>(), prop::collection::vec(0usize..3, 3)), 0..=max_facts).prop_map(
        move |rows| {
            Database::new(rows.into_iter().map(|(p, cs)| {
                let p = pick(&preds, p);
                let args = cs[..p.arity()].iter().map(|&i| Constant::domain(consts[i])).collect();
                Atom::new(p, args).unwrap()
            }))
            .unwrap()
        },
    )
}

/// A safe query of up to `max_atoms` atoms over variables `X0..X3` and
/// constants `a, b`.
pub fn arb_query(schema: Schema, max_atoms: usize) -> impl Strategy<Value = ConjunctiveQuery> {
    let preds: Vec<Predicate> = schema.predicates().cloned().collect();
    let term = prop_oneof![4 => (0usize..4).prop_map(|i| Term::Var(format!("X{i}"))),
        1 => prop::sample::select(vec!["a", "b"]).prop_map(|c| Term::Const(Constant::domain(c)))];
    let atom = (any::<prop::sample::Index>(), prop::collection::vec(term, 3));
    (prop::collection::vec(atom, 1..=max_atoms), prop::collection::vec(any::<bool>(), 4)).prop_map(
        move |(atoms, keep)| {
            let body: Vec<QueryAtom> = atoms
                .into_iter()
                .map(|(p, terms)| {
                    let p = pick(&preds, p);
                    QueryAtom { terms: terms[..p.arity()].to_vec(), predicate: p }
                })
                .collect();
            let mut vars: Vec<String> = body
                .iter()
                .flat_map(|a| a.terms.iter())
                .filter_map(|t| match t {
                    Term::Var(v) => Some(v.clone()),
                    Term::Const(_) => None,
                })
                .collect();
            vars.sort();
            vars.dedup();
            let head = vars.into_iter().zip(&keep).filter(|(_, k)| **k).map(|(v, _)| v).collect();
            ConjunctiveQuery::new("q", head, body).unwrap()
        },
    )
}

/// Schema, dependencies and data generated together.
pub fn arb_setting(
    max_preds: usize,
    max_ids: usize,
    max_facts: usize,
) -> impl Strategy<Value = (Schema, DependencySet, Database)> {
    arb_schema(max_preds).prop_flat_map(move |s| {
        (Just(s.clone()), arb_deps(s.clone(), max_ids), arb_database(s, max_facts))
    })
}

/// A dependency set built to be conceptual over a random role assignment,
/// then possibly damaged by dropping one dependency and adding a random one.
pub fn arb_cd_like(max_preds: usize) -> impl Strategy<Value = (Schema, DependencySet)> {
    (prop::collection::vec(1usize..=3, 1..max_preds), prop::collection::vec(any::<u32>(), 64), 0u8..4, 0u8..4)
        .prop_map(|(arities, tape, drop, add)| {
            let mut tape = tape.into_iter().cycle();
            let mut next = |m: usize| tape.next().unwrap() as usize % m.max(1);
            let mut preds = vec![Predicate::new("p0", 1).unwrap()];
            preds.extend(arities.iter().enumerate().map(|(i, &a)| Predicate::new(format!("p{}", i + 1), a).unwrap()));
            let schema = Schema::from_predicates(preds.clone()).unwrap();
            let entities: Vec<&Predicate> = preds.iter().filter(|p| p.arity() == 1).collect();
            // binary and ternary predicates: relationship unless an attribute target exists and the tape says so
            let mut rels: Vec<&Predicate> = Vec::new();
            let mut attrs: Vec<(&Predicate, &Predicate)> = Vec::new();
            for p in preds.iter().filter(|p| p.arity() > 1) {
                let targets: Vec<&Predicate> = entities
                    .iter()
                    .copied()
                    .chain(rels.iter().copied())
                    .filter(|t| t.arity() == p.arity() - 1)
                    .collect();
                if !targets.is_empty() && next(2) == 0 {
                    attrs.push((p, targets[next(targets.len())]));
                } else {
                    rels.push(p);
                }
            }
            let mut ids = Vec::new();
            let mut kds = Vec::new();
            let id = |l: &Predicate, la: Vec<usize>, r: &Predicate, ra: Vec<usize>| {
                InclusionDependency::new(l.clone(), la, r.clone(), ra).unwrap()
            };
            for r in &rels {
                for i in 1..=r.arity() {
                    let e = entities[next(entities.len())];
                    ids.push(id(r, vec![i], e, vec![1]));
                    if next(3) == 0 {
                        ids.push(id(e, vec![1], r, vec![i]));
                    }
                }
                if next(2) == 0 {
                    kds.push(KeyDependency::new((*r).clone(), vec![1 + next(r.arity())]).unwrap());
                }
            }
            for (a, p) in &attrs {
                let n: Vec<usize> = (1..=p.arity()).collect();
                ids.push(id(a, n.clone(), p, n.clone()));
                if next(2) == 0 {
                    kds.push(KeyDependency::new((*a).clone(), n.clone()).unwrap());
                }
                if next(3) == 0 {
                    ids.push(id(p, n.clone(), a, n));
                }
            }
            for _ in 0..next(3) {
                let (e1, e2) = (entities[next(entities.len())], entities[next(entities.len())]);
                ids.push(id(e1, vec![1], e2, vec![1]));
            }
            if drop == 0 && !ids.is_empty() {
                ids.remove(next(ids.len()));
            }
            if add == 0 {
                let (l, r) = (&preds[next(preds.len())], &preds[next(preds.len())]);
                ids.push(id(l, vec![1 + next(l.arity())], r, vec![1 + next(r.arity())]));
            }
            (schema, DependencySet::new(ids, kds).unwrap())
        })
}
