//! The clause database with first-argument indexing and the thermostat that
//! moves predicates between the interpreted and indexed tiers.

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, Mutex, RwLock};

use crate::binarizer::BinClause;
use crate::events::EventLog;
use crate::term::{Atom, Bindings, Term};

/// Name and binarized arity.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PredKey {
    pub name: Atom,
    pub arity: usize,
}

impl PredKey {
    pub fn new(name: impl Into<Atom>, arity: usize) -> PredKey {
        PredKey { name: name.into(), arity }
    }

    pub fn indicator(&self) -> Term {
        Term::indicator(&self.name, self.arity)
    }

    /// Reads `F/N`.
    pub fn from_indicator(t: &Term) -> Option<PredKey> {
        if !t.is_struct("/", 2) {
            return None;
        }
        let name = t.args()[0].as_atom()?.clone();
        let arity = usize::try_from(t.args()[1].as_int()?).ok()?;
        Some(PredKey { name, arity })
    }
}

impl fmt::Display for PredKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.name, self.arity)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tier {
    Interpreted,
    Indexed,
}

impl Tier {
    pub fn name(self) -> &'static str {
        match self {
            Tier::Interpreted => "interpreted",
            Tier::Indexed => "indexed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Origin {
    Local,
    Fetched(Atom),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TierPolicy {
    Adaptive,
    ForceInterpreted,
    ForceIndexed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Thermostat {
    /// Added per update.
    pub heat: u64,
    /// Removed per call.
    pub cool: u64,
    /// Calls since the last update needed before promotion.
    pub threshold: u64,
}

impl Default for Thermostat {
    fn default() -> Self {
        Thermostat { heat: 8, cool: 1, threshold: 16 }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TempStats {
    pub temperature: u64,
    pub calls: u64,
    pub updates: u64,
    pub calls_since_update: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum IndexKey {
    Atom(Atom),
    Int(i64),
    Functor(Atom, usize),
}

/// Principal functor of a (dereferenced) first argument; `None` for variables.
pub fn index_key(t: &Term) -> Option<IndexKey> {
    match t {
        Term::Var(_) => None,
        Term::Atom(a) => Some(IndexKey::Atom(a.clone())),
        Term::Int(i) => Some(IndexKey::Int(*i)),
        Term::Struct(c) => Some(IndexKey::Functor(c.name.clone(), c.args.len())),
    }
}

pub type ClauseList = Arc<[Arc<BinClause>]>;

struct Index {
    buckets: HashMap<IndexKey, ClauseList>,
    /// Clauses whose first argument is a variable.
    var_only: ClauseList,
}

impl Index {
    fn build(clauses: &[Arc<BinClause>]) -> Index {
        let firsts: Vec<Option<IndexKey>> = clauses.iter().map(|c| index_key(&c.head.args()[0])).collect();
        let mut keys: Vec<IndexKey> = Vec::new();
        for k in firsts.iter().flatten() {
            if !keys.contains(k) {
                keys.push(k.clone());
            }
        }
        let mut buckets = HashMap::new();
        for k in keys {
            let list: Vec<Arc<BinClause>> = clauses
                .iter()
                .zip(&firsts)
                .filter(|(_, f)| f.as_ref().map(|f| *f == k).unwrap_or(true))
                .map(|(c, _)| c.clone())
                .collect();
            buckets.insert(k, list.into());
        }
        let var_only: Vec<Arc<BinClause>> =
            clauses.iter().zip(&firsts).filter(|(_, f)| f.is_none()).map(|(c, _)| c.clone()).collect();
        Index { buckets, var_only: var_only.into() }
    }
}

pub struct PredicateEntry {
    pub key: PredKey,
    clauses: ClauseList,
    pub tier: Tier,
    pub origin: Origin,
    pub stats: TempStats,
    index: Option<Index>,
}

impl PredicateEntry {
    fn new(key: PredKey, origin: Origin) -> PredicateEntry {
        PredicateEntry {
            key,
            clauses: Vec::new().into(),
            tier: Tier::Interpreted,
            origin,
            stats: TempStats::default(),
            index: None,
        }
    }

    pub fn clauses(&self) -> ClauseList {
        self.clauses.clone()
    }

    fn indexable(&self) -> bool {
        self.key.arity >= 2
    }

    fn set_tier(&mut self, tier: Tier) {
        self.tier = tier;
        self.index = match tier {
            Tier::Indexed if self.indexable() => Some(Index::build(&self.clauses)),
            _ => None,
        };
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Position {
    Front,
    Back,
}

/// Read-only view returned by [`Store::stats`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StatsView {
    pub key: PredKey,
    pub tier: Tier,
    pub origin: Origin,
    pub stats: TempStats,
    pub clause_count: usize,
}

impl StatsView {
    /// `stats(F/N, Tier, Temp, Calls, Updates)`.
    pub fn to_term(&self) -> Term {
        Term::compound(
            "stats",
            vec![
                self.key.indicator(),
                Term::atom(self.tier.name()),
                Term::Int(self.stats.temperature as i64),
                Term::Int(self.stats.calls as i64),
                Term::Int(self.stats.updates as i64),
            ],
        )
    }
}

pub enum Lookup {
    Clauses(ClauseList),
    Unknown,
}

pub struct Store {
    preds: RwLock<HashMap<PredKey, Arc<Mutex<PredicateEntry>>>>,
    thermostat: Thermostat,
    policy: RwLock<TierPolicy>,
    events: Option<Arc<EventLog>>,
}

impl Default for Store {
    fn default() -> Self {
        Store::new(Thermostat::default(), None)
    }
}

impl Store {
    pub fn new(thermostat: Thermostat, events: Option<Arc<EventLog>>) -> Store {
        Store { preds: RwLock::new(HashMap::new()), thermostat, policy: RwLock::new(TierPolicy::Adaptive), events }
    }

    pub fn thermostat(&self) -> Thermostat {
        self.thermostat
    }

    pub fn set_policy(&self, policy: TierPolicy) {
        *self.policy.write().unwrap() = policy;
        for entry in self.preds.read().unwrap().values() {
            let mut e = entry.lock().unwrap();
            match policy {
                TierPolicy::ForceIndexed => e.set_tier(Tier::Indexed),
                TierPolicy::ForceInterpreted => e.set_tier(Tier::Interpreted),
                TierPolicy::Adaptive => {}
            }
        }
    }

    pub fn policy(&self) -> TierPolicy {
        *self.policy.read().unwrap()
    }

    fn entry(&self, key: &PredKey) -> Option<Arc<Mutex<PredicateEntry>>> {
        self.preds.read().unwrap().get(key).cloned()
    }

    fn entry_or_create(&self, key: &PredKey, origin: Origin) -> Arc<Mutex<PredicateEntry>> {
        if let Some(e) = self.entry(key) {
            return e;
        }
        let mut map = self.preds.write().unwrap();
        map.entry(key.clone())
            .or_insert_with(|| {
                let mut e = PredicateEntry::new(key.clone(), origin);
                if self.policy() == TierPolicy::ForceIndexed {
                    e.set_tier(Tier::Indexed);
                }
                Arc::new(Mutex::new(e))
            })
            .clone()
    }

    fn emit(&self, kind: &str, detail: String) {
        if let Some(ev) = &self.events {
            ev.emit(kind, detail);
        }
    }

    /// Appends program clauses without counting them as updates.
    pub fn define(&self, clauses: Vec<BinClause>, origin: Origin) {
        let mut groups: Vec<(PredKey, Vec<Arc<BinClause>>)> = Vec::new();
        for c in clauses {
            let (name, arity) = c.key();
            let key = PredKey { name, arity };
            match groups.iter_mut().find(|(k, _)| *k == key) {
                Some((_, v)) => v.push(Arc::new(c)),
                None => groups.push((key, vec![Arc::new(c)])),
            }
        }
        for (key, new) in groups {
            let entry = self.entry_or_create(&key, origin.clone());
            let mut e = entry.lock().unwrap();
            let mut all: Vec<Arc<BinClause>> = e.clauses.to_vec();
            all.extend(new);
            e.clauses = all.into();
            let tier = e.tier;
            e.set_tier(tier);
        }
    }

    /// Declares a predicate with no clauses, so calls fail rather than raise.
    pub fn declare(&self, key: &PredKey) {
        self.entry_or_create(key, Origin::Local);
    }

    pub fn assert_clause(&self, pos: Position, clause: BinClause) {
        let (name, arity) = clause.key();
        let key = PredKey { name, arity };
        let entry = self.entry_or_create(&key, Origin::Local);
        let mut e = entry.lock().unwrap();
        let mut all: Vec<Arc<BinClause>> = e.clauses.to_vec();
        match pos {
            Position::Front => all.insert(0, Arc::new(clause)),
            Position::Back => all.push(Arc::new(clause)),
        }
        e.clauses = all.into();
        self.updated(&mut e);
    }

    /// Removes the first clause whose user-level form unifies with `pattern`
    /// (`Head` or `Head :- Body`) and returns that form.
    pub fn retract(&self, pattern: &Term) -> Option<Term> {
        let (head, body) = if pattern.is_struct(":-", 2) {
            (pattern.args()[0].clone(), pattern.args()[1].clone())
        } else {
            (pattern.clone(), Term::atom("true"))
        };
        let (name, arity) = head.functor()?;
        let key = PredKey { name: name.clone(), arity: arity + 1 };
        let entry = self.entry(&key)?;
        let mut e = entry.lock().unwrap();
        let want = Term::compound(":-", vec![head, body]);
        let found = e.clauses.iter().enumerate().find_map(|(i, c)| {
            let u = c.unbinarize();
            let form = Term::compound(":-", vec![u.head, Term::conjunction(u.body)]);
            let mut b = Bindings::new();
            let w = b.import(&want);
            let f = b.import(&form);
            if b.unify(&w, &f) {
                Some((i, form))
            } else {
                None
            }
        });
        let (i, form) = found?;
        let mut all: Vec<Arc<BinClause>> = e.clauses.to_vec();
        all.remove(i);
        e.clauses = all.into();
        self.updated(&mut e);
        Some(form)
    }

    pub fn retract_clause(&self, pattern: &Term) -> bool {
        self.retract(pattern).is_some()
    }

    fn updated(&self, e: &mut PredicateEntry) {
        e.stats.updates += 1;
        e.stats.temperature += self.thermostat.heat;
        e.stats.calls_since_update = 0;
        match self.policy() {
            TierPolicy::ForceIndexed => e.set_tier(Tier::Indexed),
            _ => {
                if e.tier == Tier::Indexed {
                    self.emit("demote", format!("{} interpreted", e.key));
                }
                e.set_tier(Tier::Interpreted);
            }
        }
    }

    fn called(&self, e: &mut PredicateEntry) {
        e.stats.calls += 1;
        e.stats.calls_since_update += 1;
        e.stats.temperature = e.stats.temperature.saturating_sub(self.thermostat.cool);
    }

    fn promote_if_cold(&self, e: &mut PredicateEntry) -> Tier {
        if self.policy() == TierPolicy::Adaptive
            && e.tier == Tier::Interpreted
            && e.stats.temperature == 0
            && e.stats.calls_since_update >= self.thermostat.threshold
            && e.clauses.len() >= 2
        {
            e.set_tier(Tier::Indexed);
            self.emit("promote", format!("{} indexed", e.key));
        }
        e.tier
    }

    pub fn record_call(&self, key: &PredKey) {
        if let Some(entry) = self.entry(key) {
            self.called(&mut entry.lock().unwrap());
        }
    }

    pub fn record_update(&self, key: &PredKey) {
        if let Some(entry) = self.entry(key) {
            self.updated(&mut entry.lock().unwrap());
        }
    }

    pub fn maybe_promote(&self, key: &PredKey) -> Option<Tier> {
        let entry = self.entry(key)?;
        let mut e = entry.lock().unwrap();
        Some(self.promote_if_cold(&mut e))
    }

    /// Candidate clauses for a call, in source order. Counts as a call.
    pub fn lookup(&self, key: &PredKey, first: Option<&IndexKey>) -> Lookup {
        let entry = match self.entry(key) {
            Some(e) => e,
            None => return Lookup::Unknown,
        };
        let mut e = entry.lock().unwrap();
        self.called(&mut e);
        self.promote_if_cold(&mut e);
        let list = match (&e.index, first) {
            (Some(index), Some(k)) => index.buckets.get(k).cloned().unwrap_or_else(|| index.var_only.clone()),
            _ => e.clauses.clone(),
        };
        Lookup::Clauses(list)
    }

    pub fn contains(&self, key: &PredKey) -> bool {
        self.preds.read().unwrap().contains_key(key)
    }

    /// All clauses of a predicate, without touching its statistics.
    pub fn clauses(&self, key: &PredKey) -> Option<ClauseList> {
        self.entry(key).map(|e| e.lock().unwrap().clauses())
    }

    pub fn stats(&self, key: &PredKey) -> Option<StatsView> {
        let entry = self.entry(key)?;
        let e = entry.lock().unwrap();
        Some(StatsView {
            key: e.key.clone(),
            tier: e.tier,
            origin: e.origin.clone(),
            stats: e.stats,
            clause_count: e.clauses.len(),
        })
    }

    pub fn keys(&self) -> Vec<PredKey> {
        let mut keys: Vec<PredKey> = self.preds.read().unwrap().keys().cloned().collect();
        keys.sort();
        keys
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::binarizer::{binarize_clause, classify, ProgramItem};
    use crate::term::parse_term;

    fn bin(s: &str) -> BinClause {
        match classify(&parse_term(s).unwrap()).unwrap() {
            ProgramItem::Clause(c) => binarize_clause(&c).unwrap(),
            _ => unreachable!(),
        }
    }

    fn app_store() -> Store {
        let s = Store::default();
        s.define(vec![bin("app([],Ys,Ys)"), bin("app([A|Xs],Ys,[A|Zs]) :- app(Xs,Ys,Zs)")], Origin::Local);
        s
    }

    fn key(n: &str, a: usize) -> PredKey {
        PredKey::new(n, a)
    }

    fn count(l: Lookup) -> usize {
        match l {
            Lookup::Clauses(c) => c.len(),
            Lookup::Unknown => usize::MAX,
        }
    }

    #[test]
    fn assert_positions() {
        let s = Store::default();
        s.assert_clause(Position::Back, bin("c(1)"));
        assert_eq!(count(s.lookup(&key("c", 2), None)), 1);
        s.assert_clause(Position::Front, bin("c(2)"));
        let cs = s.clauses(&key("c", 2)).unwrap();
        assert!(cs[0].head.args()[0].as_int() == Some(2));
    }

    #[test]
    fn retract_examples() {
        let s = Store::default();
        s.assert_clause(Position::Back, bin("c(1)"));
        assert!(!s.retract_clause(&parse_term("c(2)").unwrap()));
        assert!(s.retract_clause(&parse_term("c(X)").unwrap()));
        assert_eq!(s.clauses(&key("c", 2)).unwrap().len(), 0);
        let p = app_store();
        p.set_policy(TierPolicy::Adaptive);
        let r = p.retract(&parse_term("app([A|B],C,D) :- Body").unwrap()).unwrap();
        assert_eq!(crate::term::canonical_text(&r), "':-'(app([_V0|_V1],_V2,[_V0|_V3]),app(_V1,_V2,_V3))");
    }

    #[test]
    fn indexed_lookup_discriminates_on_first_argument() {
        let s = app_store();
        s.set_policy(TierPolicy::ForceIndexed);
        let k = key("app", 4);
        assert_eq!(count(s.lookup(&k, Some(&IndexKey::Atom(Atom::new("[]"))))), 1);
        assert_eq!(count(s.lookup(&k, None)), 2);
        assert_eq!(count(s.lookup(&key("nope", 1), None)), usize::MAX);
    }

    #[test]
    fn thermostat_examples() {
        let s = app_store();
        let k = key("app", 4);
        for _ in 0..15 {
            s.lookup(&k, None);
        }
        assert_eq!(s.stats(&k).unwrap().tier, Tier::Interpreted);
        s.lookup(&k, None);
        assert_eq!(s.stats(&k).unwrap().tier, Tier::Indexed);

        s.record_update(&k);
        let st = s.stats(&k).unwrap();
        assert_eq!(st.tier, Tier::Interpreted);
        assert_eq!(st.stats.temperature, 8);

        let s = app_store();
        s.record_update(&k);
        for _ in 0..4 {
            s.record_call(&k);
        }
        assert_eq!(s.maybe_promote(&k), Some(Tier::Interpreted));
        assert_eq!(s.stats(&k).unwrap().stats.temperature, 4);
    }

    #[test]
    fn asserting_demotes_an_indexed_predicate() {
        let s = app_store();
        let k = key("app", 4);
        for _ in 0..16 {
            s.lookup(&k, None);
        }
        assert_eq!(s.stats(&k).unwrap().tier, Tier::Indexed);
        s.assert_clause(Position::Back, bin("app(x,y,z)"));
        assert_eq!(s.stats(&k).unwrap().tier, Tier::Interpreted);
        for _ in 0..24 {
            s.lookup(&k, None);
        }
        assert_eq!(s.stats(&k).unwrap().tier, Tier::Indexed);
        assert!(s.retract_clause(&parse_term("app(x,y,z)").unwrap()));
        assert_eq!(s.stats(&k).unwrap().tier, Tier::Interpreted);
    }

    #[test]
    fn single_clause_predicates_stay_interpreted() {
        let s = Store::default();
        s.define(vec![bin("one(a)")], Origin::Local);
        let k = key("one", 2);
        for _ in 0..100 {
            s.lookup(&k, None);
        }
        assert_eq!(s.stats(&k).unwrap().tier, Tier::Interpreted);
    }
}
