//! A slow, direct chase used to cross-check the engine: every step rescans
//! all facts and all dependencies.

use cdchase::{Database, DependencySet};

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum V {
    D(String),
    F(u64),
}

/// Predicate name, arity, arguments: ordered like the engine's atoms.
pub type T = (String, usize, Vec<V>);

#[derive(Clone, Debug)]
struct Id {
    code: String,
    lhs: String,
    la: Vec<usize>,
    rhs: String,
    rarity: usize,
    ra: Vec<usize>,
    full: bool,
}

#[derive(Clone, Debug)]
struct Kd {
    code: String,
    pred: String,
    key: Vec<usize>,
    arity: usize,
}

pub struct Reference {
    pub facts: Vec<(T, u32)>,
    pub next: u64,
    pub failed: bool,
    pub steps: u64,
    ids: Vec<Id>,
    kds: Vec<Kd>,
}

pub fn render(t: &T) -> String {
    let args: Vec<String> = t
        .2
        .iter()
        .map(|v| match v {
            V::D(s) => s.clone(),
            V::F(k) => format!("_f{k}"),
        })
        .collect();
    format!("{}({})", t.0, args.join(","))
}

fn join(ps: &[usize]) -> String {
    ps.iter().map(|p| p.to_string()).collect::<Vec<_>>().join(",")
}

impl Reference {
    pub fn new(db: &Database, deps: &DependencySet) -> Self {
        let facts = db
            .atoms()
            .map(|a| {
                let args = a.args.iter().map(|c| V::D(c.name().unwrap().to_string())).collect();
                ((a.predicate.name().to_string(), a.predicate.arity(), args), 0)
            })
            .collect();
        let mut ids: Vec<Id> = deps
            .ids()
            .iter()
            .map(|id| Id {
                code: format!("ID:{}[{}]<={}[{}]", id.lhs().name(), join(id.lhs_attrs()), id.rhs().name(), join(id.rhs_attrs())),
                lhs: id.lhs().name().into(),
                la: id.lhs_attrs().to_vec(),
                rhs: id.rhs().name().into(),
                rarity: id.rhs().arity(),
                ra: id.rhs_attrs().to_vec(),
                full: id.lhs_attrs().len() == id.lhs().arity() && id.rhs_attrs().len() == id.rhs().arity(),
            })
            .collect();
        ids.sort_by(|a, b| a.code.cmp(&b.code));
        ids.dedup_by(|a, b| a.code == b.code);
        let mut kds: Vec<Kd> = deps
            .kds()
            .iter()
            .map(|k| Kd {
                code: format!("KD:{}{{{}}}", k.pred().name(), join(k.key_attrs())),
                pred: k.pred().name().into(),
                key: k.key_attrs().to_vec(),
                arity: k.pred().arity(),
            })
            .collect();
        kds.sort_by(|a, b| a.code.cmp(&b.code));
        Reference { facts, next: 1, failed: false, steps: 0, ids, kds }
    }

    fn applicable(&self, t: &T, id: &Id) -> bool {
        t.0 == id.lhs
            && !self.facts.iter().any(|(u, _)| {
                u.0 == id.rhs && id.la.iter().zip(&id.ra).all(|(l, r)| u.2[r - 1] == t.2[l - 1])
            })
    }

    /// One key merge; false when none applies.
    fn merge_once(&mut self) -> bool {
        let mut best: Option<(u32, T, T, usize)> = None;
        for (k, kd) in self.kds.iter().enumerate() {
            for (a, la) in &self.facts {
                for (b, lb) in &self.facts {
                    if a.0 != kd.pred || b.0 != kd.pred || a >= b {
                        continue;
                    }
                    if kd.key.iter().all(|p| a.2[p - 1] == b.2[p - 1]) {
                        let cand = (*la.min(lb), a.clone(), b.clone(), k);
                        if best.as_ref().is_none_or(|cur| cand < *cur) {
                            best = Some(cand);
                        }
                    }
                }
            }
        }
        let Some((_, a, b, k)) = best else { return false };
        let kd = self.kds[k].clone();
        let mut subst: Vec<(V, V)> = Vec::new();
        let find = |subst: &[(V, V)], v: &V| {
            let mut cur = v.clone();
            while let Some((_, w)) = subst.iter().find(|(l, _)| *l == cur) {
                cur = w.clone();
            }
            cur
        };
        for p in (1..=kd.arity).filter(|p| !kd.key.contains(p)) {
            let x = find(&subst, &a.2[p - 1]);
            let y = find(&subst, &b.2[p - 1]);
            if x == y {
                continue;
            }
            if matches!((&x, &y), (V::D(_), V::D(_))) {
                self.failed = true;
                return false;
            }
            let (w, l) = if x < y { (x, y) } else { (y, x) };
            subst.push((l, w));
        }
        let old = std::mem::take(&mut self.facts);
        for (mut t, level) in old {
            for v in &mut t.2 {
                *v = find(&subst, v);
            }
            match self.facts.iter_mut().find(|(u, _)| *u == t) {
                Some((_, l)) => *l = (*l).min(level),
                None => self.facts.push((t, level)),
            }
        }
        true
    }

    fn pick(&self, full_only: bool) -> Option<(T, u32, Id)> {
        let mut best: Option<(u32, T, Id)> = None;
        for (t, level) in &self.facts {
            if let Some(id) = self.ids.iter().find(|id| (!full_only || id.full) && self.applicable(t, id)) {
                let better = best.as_ref().is_none_or(|(bl, bt, _)| (*level, t) < (*bl, bt));
                if better {
                    best = Some((*level, t.clone(), id.clone()));
                }
            }
        }
        best.map(|(l, t, id)| (t, l, id))
    }

    /// Runs until completion, failure, `max_level` or `max_steps`. Returns
    /// true when the chase completed.
    pub fn run(&mut self, max_level: Option<u32>, max_steps: u64) -> bool {
        loop {
            while self.merge_once() {}
            if self.failed {
                return false;
            }
            let Some((t, level, id)) = self.pick(true).or_else(|| self.pick(false)) else { return true };
            if self.steps >= max_steps || max_level.is_some_and(|m| level >= m) {
                return false;
            }
            let mut args: Vec<Option<V>> = vec![None; id.rarity];
            for (l, r) in id.la.iter().zip(&id.ra) {
                args[r - 1] = Some(t.2[l - 1].clone());
            }
            let args = args
                .into_iter()
                .map(|a| {
                    a.unwrap_or_else(|| {
                        self.next += 1;
                        V::F(self.next - 1)
                    })
                })
                .collect();
            let child = (id.rhs.clone(), id.rarity, args);
            match self.facts.iter_mut().find(|(u, _)| *u == child) {
                Some((_, l)) => *l = (*l).min(level + 1),
                None => self.facts.push((child, level + 1)),
            }
            self.steps += 1;
        }
    }

    /// `pred(args)@level` strings, sorted.
    pub fn rendered(&self) -> Vec<String> {
        let mut v: Vec<String> = self.facts.iter().map(|(t, l)| format!("{}@{l}", render(t))).collect();
        v.sort();
        v
    }
}
