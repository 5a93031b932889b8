//! First-order terms, variable bindings and unification.
//!
//! A [`Term`] is immutable and cheap to clone. Variables are plain ids; what a
//! variable is bound to lives in a [`Bindings`] store, which also keeps the
//! undo log used for backtracking. Terms that live outside any store (parsed
//! text, stored clauses, tuples, wire payloads) are *standalone*: their
//! variables are numbered from zero and carry no bindings.

mod text;

pub use text::{canonical_text, parse_term, parse_term_with_names, plain_text, Parser, SyntaxError, TextWriter};

use std::collections::HashMap;
use std::fmt;
use std::ops::Deref;
use std::sync::Arc;

use thiserror::Error;

/// Interned-by-value symbol name.
#[derive(Clone, Eq, PartialOrd, Ord)]
pub struct Atom(Arc<str>);

impl Atom {
    pub fn new(name: &str) -> Atom {
        Atom(Arc::from(name))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl PartialEq for Atom {
    fn eq(&self, other: &Atom) -> bool {
        Arc::ptr_eq(&self.0, &other.0) || *self.0 == *other.0
    }
}

impl std::hash::Hash for Atom {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.0.hash(state)
    }
}

impl Deref for Atom {
    type Target = str;
    fn deref(&self) -> &str {
        &self.0
    }
}

impl From<&str> for Atom {
    fn from(s: &str) -> Atom {
        Atom::new(s)
    }
}

impl From<String> for Atom {
    fn from(s: String) -> Atom {
        Atom(Arc::from(s))
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", &*self.0)
    }
}

#[derive(Copy, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct VarId(pub u32);

impl VarId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// A compound term: functor name plus at least one argument.
pub struct Compound {
    pub name: Atom,
    pub args: Box<[Term]>,
}

impl Drop for Compound {
    // Long lists and continuations nest through their last argument; unlink
    // that spine iteratively so dropping them never recurses deeply.
    fn drop(&mut self) {
        let mut next = self.args.last_mut().map(|t| std::mem::replace(t, Term::Int(0)));
        while let Some(Term::Struct(arc)) = next {
            match Arc::try_unwrap(arc) {
                Ok(mut inner) => {
                    next = inner.args.last_mut().map(|t| std::mem::replace(t, Term::Int(0)));
                }
                Err(_) => break,
            }
        }
    }
}

#[derive(Clone)]
pub enum Term {
    Var(VarId),
    Atom(Atom),
    Int(i64),
    Struct(Arc<Compound>),
}

pub const NIL: &str = "[]";
pub const DOT: &str = ".";

impl Term {
    pub fn var(id: u32) -> Term {
        Term::Var(VarId(id))
    }

    pub fn atom(name: &str) -> Term {
        Term::Atom(Atom::new(name))
    }

    pub fn int(v: i64) -> Term {
        Term::Int(v)
    }

    /// Builds `name(args..)`; with no arguments the result is the atom `name`.
    pub fn compound(name: impl Into<Atom>, args: Vec<Term>) -> Term {
        let name = name.into();
        if args.is_empty() {
            Term::Atom(name)
        } else {
            Term::Struct(Arc::new(Compound { name, args: args.into_boxed_slice() }))
        }
    }

    pub fn nil() -> Term {
        Term::atom(NIL)
    }

    pub fn cons(head: Term, tail: Term) -> Term {
        Term::compound(DOT, vec![head, tail])
    }

    pub fn list(items: Vec<Term>) -> Term {
        Term::list_with_tail(items, Term::nil())
    }

    pub fn list_with_tail(items: Vec<Term>, tail: Term) -> Term {
        items.into_iter().rev().fold(tail, |acc, item| Term::cons(item, acc))
    }

    /// Right-nested conjunction `(g1,(g2,g3))`; empty input gives `true`.
    pub fn conjunction(goals: Vec<Term>) -> Term {
        let mut it = goals.into_iter().rev();
        match it.next() {
            None => Term::atom("true"),
            Some(last) => it.fold(last, |acc, g| Term::compound(",", vec![g, acc])),
        }
    }

    pub fn indicator(name: &str, arity: usize) -> Term {
        Term::compound("/", vec![Term::atom(name), Term::Int(arity as i64)])
    }

    pub fn is_var(&self) -> bool {
        matches!(self, Term::Var(_))
    }

    pub fn is_atom(&self, name: &str) -> bool {
        matches!(self, Term::Atom(a) if a.as_str() == name)
    }

    pub fn as_atom(&self) -> Option<&Atom> {
        match self {
            Term::Atom(a) => Some(a),
            _ => None,
        }
    }

    pub fn as_int(&self) -> Option<i64> {
        match self {
            Term::Int(v) => Some(*v),
            _ => None,
        }
    }

    /// Name and arity for callable terms.
    pub fn functor(&self) -> Option<(&Atom, usize)> {
        match self {
            Term::Atom(a) => Some((a, 0)),
            Term::Struct(c) => Some((&c.name, c.args.len())),
            _ => None,
        }
    }

    pub fn args(&self) -> &[Term] {
        match self {
            Term::Struct(c) => &c.args,
            _ => &[],
        }
    }

    pub fn is_struct(&self, name: &str, arity: usize) -> bool {
        matches!(self, Term::Struct(c) if c.args.len() == arity && c.name.as_str() == name)
    }

    /// Largest variable id plus one, i.e. how many cells a standalone term needs.
    pub fn var_span(&self) -> u32 {
        let mut max = 0u32;
        self.visit_vars(&mut |v| max = max.max(v.0 + 1));
        max
    }

    /// Distinct variables in depth-first, left-to-right order of first occurrence.
    pub fn vars(&self) -> Vec<VarId> {
        let mut seen = std::collections::HashSet::new();
        let mut out = Vec::new();
        self.visit_vars(&mut |v| {
            if seen.insert(v) {
                out.push(v);
            }
        });
        out
    }

    pub fn is_ground(&self) -> bool {
        let mut ground = true;
        self.visit_vars(&mut |_| ground = false);
        ground
    }

    fn visit_vars(&self, f: &mut impl FnMut(VarId)) {
        let mut stack = vec![self];
        while let Some(t) = stack.pop() {
            match t {
                Term::Var(v) => f(*v),
                Term::Struct(c) => stack.extend(c.args.iter().rev()),
                _ => {}
            }
        }
    }

    /// Rewrites every variable through `f`, preserving structure.
    pub fn map_vars(&self, f: &mut impl FnMut(VarId) -> Term) -> Term {
        match self {
            Term::Var(v) => f(*v),
            Term::Atom(_) | Term::Int(_) => self.clone(),
            Term::Struct(_) => {
                // walk the last-argument spine iteratively
                let mut spine: Vec<(Atom, Vec<Term>)> = Vec::new();
                let mut cur = self;
                loop {
                    match cur {
                        Term::Struct(c) => {
                            let n = c.args.len();
                            let front = c.args[..n - 1].iter().map(|a| a.map_vars(f)).collect();
                            spine.push((c.name.clone(), front));
                            cur = &c.args[n - 1];
                        }
                        Term::Var(v) => {
                            let mut acc = f(*v);
                            while let Some((name, mut args)) = spine.pop() {
                                args.push(acc);
                                acc = Term::compound(name, args);
                            }
                            return acc;
                        }
                        other => {
                            let mut acc = other.clone();
                            while let Some((name, mut args)) = spine.pop() {
                                args.push(acc);
                                acc = Term::compound(name, args);
                            }
                            return acc;
                        }
                    }
                }
            }
        }
    }

    /// Shifts every variable id by `base`.
    pub fn offset(&self, base: u32) -> Term {
        if base == 0 {
            return self.clone();
        }
        self.map_vars(&mut |v| Term::Var(VarId(v.0 + base)))
    }

    /// Renumbers variables 0.. by first occurrence. Returns the term and the
    /// number of distinct variables.
    pub fn normalize(&self) -> (Term, u32) {
        let mut map: HashMap<VarId, u32> = HashMap::new();
        let t = self.map_vars(&mut |v| {
            let n = map.len() as u32;
            Term::Var(VarId(*map.entry(v).or_insert(n)))
        });
        let n = map.len() as u32;
        (t, n)
    }

    /// Structural identity (same variables, same shape).
    pub fn identical(&self, other: &Term) -> bool {
        let mut stack = vec![(self, other)];
        while let Some((a, b)) = stack.pop() {
            match (a, b) {
                (Term::Var(x), Term::Var(y)) if x == y => {}
                (Term::Atom(x), Term::Atom(y)) if x == y => {}
                (Term::Int(x), Term::Int(y)) if x == y => {}
                (Term::Struct(x), Term::Struct(y)) => {
                    if Arc::ptr_eq(x, y) {
                        continue;
                    }
                    if x.name != y.name || x.args.len() != y.args.len() {
                        return false;
                    }
                    stack.extend(x.args.iter().zip(y.args.iter()));
                }
                _ => return false,
            }
        }
        true
    }
}

impl PartialEq for Term {
    fn eq(&self, other: &Term) -> bool {
        self.identical(other)
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&canonical_text(self))
    }
}

impl fmt::Debug for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&canonical_text(self))
    }
}

/// True iff the two standalone terms are equal up to a bijective variable renaming.
pub fn is_variant(a: &Term, b: &Term) -> bool {
    let mut fwd: HashMap<VarId, VarId> = HashMap::new();
    let mut back: HashMap<VarId, VarId> = HashMap::new();
    let mut stack = vec![(a, b)];
    while let Some((x, y)) = stack.pop() {
        match (x, y) {
            (Term::Var(u), Term::Var(v)) => {
                if *fwd.entry(*u).or_insert(*v) != *v || *back.entry(*v).or_insert(*u) != *u {
                    return false;
                }
            }
            (Term::Atom(p), Term::Atom(q)) if p == q => {}
            (Term::Int(p), Term::Int(q)) if p == q => {}
            (Term::Struct(p), Term::Struct(q)) => {
                if p.name != q.name || p.args.len() != q.args.len() {
                    return false;
                }
                stack.extend(p.args.iter().zip(q.args.iter()).rev());
            }
            _ => return false,
        }
    }
    true
}

/// One-sided matching: does some substitution of `general`'s variables alone
/// make it identical to `specific`? Both are standalone and treated as renamed
/// apart; `specific`'s variables behave as constants.
pub fn subsumes(general: &Term, specific: &Term) -> bool {
    let mut subst: HashMap<VarId, &Term> = HashMap::new();
    let mut stack = vec![(general, specific)];
    while let Some((g, s)) = stack.pop() {
        match g {
            Term::Var(v) => match subst.get(v) {
                Some(prev) => {
                    if !prev.identical(s) {
                        return false;
                    }
                }
                None => {
                    subst.insert(*v, s);
                }
            },
            Term::Atom(a) => {
                if !matches!(s, Term::Atom(b) if a == b) {
                    return false;
                }
            }
            Term::Int(i) => {
                if !matches!(s, Term::Int(j) if i == j) {
                    return false;
                }
            }
            Term::Struct(c) => match s {
                Term::Struct(d) if c.name == d.name && c.args.len() == d.args.len() => {
                    stack.extend(c.args.iter().zip(d.args.iter()).rev());
                }
                _ => return false,
            },
        }
    }
    true
}

/// Does a most general unifier exist for two standalone terms (renamed apart)?
pub fn unifiable(a: &Term, b: &Term) -> bool {
    let mut bindings = Bindings::new();
    let a = bindings.import(a);
    let b = bindings.import(b);
    bindings.unify(&a, &b)
}

#[derive(Debug, Clone, Error, PartialEq)]
#[error("cyclic term")]
pub struct CyclicTerm;

/// The undo log: variables bound since some mark, newest last.
#[derive(Debug, Default, Clone)]
pub struct UndoLog {
    entries: Vec<VarId>,
}

impl UndoLog {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Saved position of a [`Bindings`] store.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Mark {
    pub cells: u32,
    pub trail: usize,
}

/// Variable cells plus the trail recording which of them were bound.
#[derive(Clone)]
pub struct Bindings {
    cells: Vec<Option<Term>>,
    trail: UndoLog,
    /// Cells at or above this index were created after the newest choice
    /// point and never need trailing.
    boundary: u32,
    occurs_check: bool,
}

impl Default for Bindings {
    fn default() -> Bindings {
        Bindings { cells: Vec::new(), trail: UndoLog::default(), boundary: u32::MAX, occurs_check: false }
    }
}

impl Bindings {
    pub fn new() -> Bindings {
        Bindings::default()
    }

    pub fn with_occurs_check(mut self, on: bool) -> Bindings {
        self.occurs_check = on;
        self
    }

    pub fn set_occurs_check(&mut self, on: bool) {
        self.occurs_check = on;
    }

    pub fn cell_count(&self) -> usize {
        self.cells.len()
    }

    pub fn trail(&self) -> &UndoLog {
        &self.trail
    }

    pub fn fresh(&mut self) -> Term {
        let id = self.cells.len() as u32;
        self.cells.push(None);
        Term::Var(VarId(id))
    }

    /// Reserves `n` unbound cells and returns the id of the first.
    pub fn fresh_block(&mut self, n: u32) -> u32 {
        let base = self.cells.len() as u32;
        self.cells.resize(self.cells.len() + n as usize, None);
        base
    }

    /// Brings a standalone term into this store with fresh variables.
    pub fn import(&mut self, t: &Term) -> Term {
        let span = t.var_span();
        if span == 0 {
            return t.clone();
        }
        let base = self.fresh_block(span);
        t.offset(base)
    }

    pub fn mark(&self) -> Mark {
        Mark { cells: self.cells.len() as u32, trail: self.trail.entries.len() }
    }

    pub fn set_boundary(&mut self, cells: u32) {
        self.boundary = cells;
    }

    /// Undoes every binding recorded after `mark` and drops younger cells.
    pub fn undo_to(&mut self, mark: Mark) {
        self.undo_trail(mark.trail);
        self.cells.truncate(mark.cells as usize);
    }

    fn undo_trail(&mut self, len: usize) {
        while self.trail.entries.len() > len {
            let v = self.trail.entries.pop().unwrap();
            if let Some(c) = self.cells.get_mut(v.index()) {
                *c = None;
            }
        }
    }

    pub fn is_bound(&self, v: VarId) -> bool {
        matches!(self.cells.get(v.index()), Some(Some(_)))
    }

    pub fn lookup(&self, v: VarId) -> Option<&Term> {
        self.cells.get(v.index()).and_then(|c| c.as_ref())
    }

    pub fn walk<'a>(&'a self, mut t: &'a Term) -> &'a Term {
        while let Term::Var(v) = t {
            match self.lookup(*v) {
                Some(next) => t = next,
                None => break,
            }
        }
        t
    }

    fn bind(&mut self, v: VarId, t: Term) {
        let idx = v.index();
        if idx >= self.cells.len() {
            self.cells.resize(idx + 1, None);
        }
        self.cells[idx] = Some(t);
        self.trail.entries.push(v);
    }

    fn occurs(&self, v: VarId, t: &Term) -> bool {
        let mut stack = vec![t];
        while let Some(t) = stack.pop() {
            match self.walk(t) {
                Term::Var(w) => {
                    if *w == v {
                        return true;
                    }
                }
                Term::Struct(c) => stack.extend(c.args.iter()),
                _ => {}
            }
        }
        false
    }

    fn bind_checked(&mut self, v: VarId, t: Term) -> bool {
        if self.occurs_check && self.occurs(v, &t) {
            return false;
        }
        self.bind(v, t);
        true
    }

    /// Robinson unification without occurs check (unless enabled). On failure
    /// every binding made by this call is undone.
    pub fn unify(&mut self, a: &Term, b: &Term) -> bool {
        let start = self.trail.entries.len();
        if self.unify_inner(a, b) {
            self.compact_trail(start);
            true
        } else {
            self.undo_trail(start);
            false
        }
    }

    fn unify_inner(&mut self, a: &Term, b: &Term) -> bool {
        let mut stack: Vec<(Term, Term)> = vec![(a.clone(), b.clone())];
        while let Some((x, y)) = stack.pop() {
            let x = self.walk(&x).clone();
            let y = self.walk(&y).clone();
            match (&x, &y) {
                (Term::Var(u), Term::Var(v)) => {
                    if u == v {
                        continue;
                    }
                    // bind the younger cell to the older one
                    if u > v {
                        self.bind(*u, y);
                    } else {
                        self.bind(*v, x);
                    }
                }
                (Term::Var(u), _) => {
                    if !self.bind_checked(*u, y) {
                        return false;
                    }
                }
                (_, Term::Var(v)) => {
                    if !self.bind_checked(*v, x) {
                        return false;
                    }
                }
                (Term::Atom(p), Term::Atom(q)) => {
                    if p != q {
                        return false;
                    }
                }
                (Term::Int(p), Term::Int(q)) => {
                    if p != q {
                        return false;
                    }
                }
                (Term::Struct(p), Term::Struct(q)) => {
                    if Arc::ptr_eq(p, q) {
                        continue;
                    }
                    if p.name != q.name || p.args.len() != q.args.len() {
                        return false;
                    }
                    for (s, t) in p.args.iter().zip(q.args.iter()).rev() {
                        stack.push((s.clone(), t.clone()));
                    }
                }
                _ => return false,
            }
        }
        true
    }

    /// Unifies a standalone clause template whose variables live at
    /// `base + id` with a term of this store, without copying the template.
    pub fn unify_template(&mut self, template: &Term, base: u32, t: &Term) -> bool {
        let start = self.trail.entries.len();
        if self.unify_template_inner(template, base, t) {
            self.compact_trail(start);
            true
        } else {
            self.undo_trail(start);
            false
        }
    }

    fn unify_template_inner(&mut self, template: &Term, base: u32, t: &Term) -> bool {
        let mut stack: Vec<(&Term, Term)> = vec![(template, t.clone())];
        while let Some((tm, other)) = stack.pop() {
            match tm {
                Term::Var(v) => {
                    let cell = Term::Var(VarId(v.0 + base));
                    if !self.unify_inner(&cell, &other) {
                        return false;
                    }
                }
                Term::Atom(a) => match self.walk(&other).clone() {
                    Term::Var(w) => self.bind(w, tm.clone()),
                    Term::Atom(b) if *a == b => {}
                    _ => return false,
                },
                Term::Int(i) => match self.walk(&other).clone() {
                    Term::Var(w) => self.bind(w, tm.clone()),
                    Term::Int(j) if *i == j => {}
                    _ => return false,
                },
                Term::Struct(c) => match self.walk(&other).clone() {
                    Term::Var(w) => {
                        let built = tm.offset(base);
                        if !self.bind_checked(w, built) {
                            return false;
                        }
                    }
                    Term::Struct(d) => {
                        if c.name != d.name || c.args.len() != d.args.len() {
                            return false;
                        }
                        for (s, o) in c.args.iter().zip(d.args.iter()).rev() {
                            stack.push((s, o.clone()));
                        }
                    }
                    _ => return false,
                },
            }
        }
        true
    }

    /// Drops trail entries for cells younger than the boundary: they vanish
    /// with the cells on backtracking anyway.
    fn compact_trail(&mut self, start: usize) {
        let boundary = self.boundary;
        if self.trail.entries[start..].iter().any(|v| v.0 >= boundary) {
            let mut keep = start;
            for i in start..self.trail.entries.len() {
                let v = self.trail.entries[i];
                if v.0 < boundary {
                    self.trail.entries[keep] = v;
                    keep += 1;
                }
            }
            self.trail.entries.truncate(keep);
        }
    }

    /// Substitutes all bindings. Unbound variables keep their ids.
    pub fn resolve(&self, t: &Term) -> Result<Term, CyclicTerm> {
        let mut path = Path::default();
        self.resolve_in(t, &mut path)
    }

    fn resolve_in(&self, t: &Term, path: &mut Path) -> Result<Term, CyclicTerm> {
        // Walk the last-argument spine iteratively; recurse only into the
        // other arguments. `path` holds the bound variables we are inside of.
        let depth = path.len();
        let mut spine: Vec<(Atom, Vec<Term>)> = Vec::new();
        let mut cur = t.clone();
        let result = loop {
            match cur {
                Term::Var(v) => match self.lookup(v) {
                    Some(next) => {
                        if !path.push(v) {
                            path.truncate(depth);
                            return Err(CyclicTerm);
                        }
                        cur = next.clone();
                    }
                    None => break Term::Var(v),
                },
                Term::Struct(c) => {
                    let n = c.args.len();
                    let mut front = Vec::with_capacity(n);
                    for a in &c.args[..n - 1] {
                        match self.resolve_in(a, path) {
                            Ok(r) => front.push(r),
                            Err(e) => {
                                path.truncate(depth);
                                return Err(e);
                            }
                        }
                    }
                    spine.push((c.name.clone(), front));
                    cur = c.args[n - 1].clone();
                }
                other => break other,
            }
        };
        path.truncate(depth);
        let mut acc = result;
        while let Some((name, mut args)) = spine.pop() {
            args.push(acc);
            acc = Term::compound(name, args);
        }
        Ok(acc)
    }

    /// Resolved, renumbered standalone copy. This is what leaves an engine.
    pub fn copy_out(&self, t: &Term) -> Result<Term, CyclicTerm> {
        Ok(self.resolve(t)?.normalize().0)
    }

    /// Structurally identical copy with fresh variables inside this store;
    /// sharing is preserved.
    pub fn rename_apart(&mut self, t: &Term) -> Result<Term, CyclicTerm> {
        let standalone = self.copy_out(t)?;
        Ok(self.import(&standalone))
    }

    pub fn canonical_text(&self, t: &Term) -> Result<String, CyclicTerm> {
        Ok(canonical_text(&self.resolve(t)?))
    }

    /// Identity after dereference (the `==` test).
    pub fn identical(&self, a: &Term, b: &Term) -> bool {
        let mut stack = vec![(a.clone(), b.clone())];
        while let Some((x, y)) = stack.pop() {
            let x = self.walk(&x);
            let y = self.walk(&y);
            match (x, y) {
                (Term::Var(u), Term::Var(v)) if u == v => {}
                (Term::Atom(p), Term::Atom(q)) if p == q => {}
                (Term::Int(p), Term::Int(q)) if p == q => {}
                (Term::Struct(p), Term::Struct(q)) => {
                    if Arc::ptr_eq(p, q) {
                        continue;
                    }
                    if p.name != q.name || p.args.len() != q.args.len() {
                        return false;
                    }
                    for (s, t) in p.args.iter().zip(q.args.iter()) {
                        stack.push((s.clone(), t.clone()));
                    }
                }
                _ => return false,
            }
        }
        true
    }
}

/// Bound variables currently being expanded by `resolve`.
#[derive(Default)]
struct Path {
    order: Vec<VarId>,
    members: std::collections::HashSet<VarId>,
}

impl Path {
    fn len(&self) -> usize {
        self.order.len()
    }

    fn push(&mut self, v: VarId) -> bool {
        if self.members.insert(v) {
            self.order.push(v);
            true
        } else {
            false
        }
    }

    fn truncate(&mut self, len: usize) {
        while self.order.len() > len {
            let v = self.order.pop().unwrap();
            self.members.remove(&v);
        }
    }
}

/// Free-function form of [`Bindings::unify`].
pub fn unify(a: &Term, b: &Term, bindings: &mut Bindings) -> bool {
    bindings.unify(a, b)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(s: &str) -> Term {
        parse_term(s).unwrap()
    }

    #[test]
    fn textbook_mgu() {
        let mut b = Bindings::new();
        let x = b.import(&t("f(X,b,Y)"));
        // same variables on the other side: import separately and link
        let args = x.args().to_vec();
        assert!(b.unify(&x, &Term::compound("f", vec![Term::atom("a"), args[1].clone(), Term::atom("b")])));
        let r = b.resolve(&x).unwrap();
        assert_eq!(canonical_text(&r), "f(a,b,b)");
    }

    #[test]
    fn unify_examples() {
        let mut b = Bindings::new();
        let pair = b.import(&t("p(f(X,b), f(a,Y), X, Y)"));
        let a = pair.args();
        assert!(b.unify(&a[0], &a[1]));
        assert_eq!(b.canonical_text(&a[2]).unwrap(), "a");
        assert_eq!(b.canonical_text(&a[3]).unwrap(), "b");

        let mut b = Bindings::new();
        let f = b.import(&t("f(a)"));
        let g = b.import(&t("g(a)"));
        assert!(!b.unify(&f, &g));

        let mut b = Bindings::new();
        let l = b.import(&t("p(X,X)"));
        let r = b.import(&t("p(a,b)"));
        assert!(!b.unify(&l, &r));
        assert_eq!(b.trail().len(), 0);
        assert!(!b.is_bound(VarId(0)));
    }

    #[test]
    fn failed_unify_restores_everything() {
        let mut b = Bindings::new();
        let l = b.import(&t("f(X,Y,Z,q)"));
        let r = b.import(&t("f(1,2,3,r)"));
        let before = b.mark();
        assert!(!b.unify(&l, &r));
        assert_eq!(b.mark(), before);
        for v in l.vars() {
            assert!(!b.is_bound(v));
        }
    }

    #[test]
    fn rename_apart_preserves_sharing() {
        let mut b = Bindings::new();
        let x = b.import(&t("f(X,X,Y)"));
        let c = b.rename_apart(&x).unwrap();
        let args = c.args();
        assert!(args[0].identical(&args[1]));
        assert!(!args[0].identical(&args[2]));
        assert!(!x.args()[0].identical(&args[0]));
        assert_eq!(b.rename_apart(&Term::atom("a")).unwrap(), Term::atom("a"));

        let l = b.import(&t("[X|X]"));
        let c = b.rename_apart(&l).unwrap();
        assert!(c.args()[0].identical(&c.args()[1]));
    }

    #[test]
    fn cyclic_terms_are_rejected_at_the_boundaries() {
        let mut b = Bindings::new();
        let x = b.fresh();
        let cyc = Term::compound("k", vec![Term::atom("g"), x.clone()]);
        assert!(b.unify(&x, &cyc));
        assert_eq!(b.resolve(&x), Err(CyclicTerm));
        assert_eq!(b.canonical_text(&cyc), Err(CyclicTerm));
        assert_eq!(b.rename_apart(&x), Err(CyclicTerm));
    }

    #[test]
    fn occurs_check_flag() {
        let mut b = Bindings::new().with_occurs_check(true);
        let x = b.fresh();
        let fx = Term::compound("f", vec![x.clone()]);
        assert!(!b.unify(&x, &fx));
        let mut b = Bindings::new();
        let x = b.fresh();
        let fx = Term::compound("f", vec![x.clone()]);
        assert!(b.unify(&x, &fx));
    }

    #[test]
    fn subsumption() {
        assert!(subsumes(&t("server_id(C,H,P)"), &t("server_id(news,'a',9001)")));
        assert!(!subsumes(&t("f(a)"), &t("f(X)")));
        assert!(!subsumes(&t("f(X,X)"), &t("f(a,b)")));
        assert!(subsumes(&t("f(X,X)"), &t("f(Y,Y)")));
        assert!(!subsumes(&t("f(X,X)"), &t("f(Y,Z)")));
    }

    #[test]
    fn template_unification_matches_copying() {
        let mut b = Bindings::new();
        let goal = b.import(&t("app([],[2],R,'$stop')"));
        let head = t("app([],Ys,Ys,Cont)");
        let base = b.fresh_block(head.var_span());
        assert!(b.unify_template(&head, base, &goal));
        assert_eq!(b.canonical_text(&goal).unwrap(), "app([],[2],[2],'$stop')");
    }

    #[test]
    fn deep_lists_do_not_overflow() {
        let items: Vec<Term> = (0..200_000).map(Term::Int).collect();
        let l = Term::list(items);
        let mut b = Bindings::new();
        let x = b.fresh();
        assert!(b.unify(&x, &l));
        let r = b.resolve(&x).unwrap();
        assert!(r.identical(&l));
        let s = canonical_text(&r);
        assert!(s.starts_with("[0,1,2"));
        drop(r);
        drop(l);
    }
}
