//! LD resolution over binarized clauses.
//!
//! The goal register holds one term: the current goal with every pending goal
//! nested in its continuation argument. A step either runs a builtin or
//! resolves the goal against the store; reaching `'$stop'` is a success.
//! Choicepoints remember the heap, trail and side-log heights to restore.

mod arith;
mod builtins;
mod runtime;

pub(crate) use builtins::{atom_arg, int_arg};
pub use runtime::{
    compile, Capacity, LoadError, Query, QueryError, Runtime, RuntimeConfig, Solution, ThreadCtl, UnknownHook,
};

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use crate::binarizer::{psi, BinClause, STOP};
use crate::store::{index_key, ClauseList, Lookup, PredKey};
use crate::term::{Atom, Bindings, CyclicTerm, Mark, Term};
use crate::wire::Endpoint;

/// A thrown ball (standalone term).
#[derive(Debug, Clone)]
pub struct Exception(pub Term);

impl fmt::Display for Exception {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl Exception {
    pub fn new(ball: Term) -> Exception {
        Exception(ball)
    }

    pub fn atom(name: &str) -> Exception {
        Exception(Term::atom(name))
    }

    pub fn of(name: &str, args: Vec<Term>) -> Exception {
        Exception(Term::compound(name, args))
    }

    pub fn instantiation() -> Exception {
        Exception::atom("instantiation_error")
    }

    pub fn cyclic() -> Exception {
        Exception::atom("cyclic_term")
    }

    pub fn is_cancel(&self) -> bool {
        self.0.is_atom("$cancelled")
    }
}

impl From<CyclicTerm> for Exception {
    fn from(_: CyclicTerm) -> Exception {
        Exception::cyclic()
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EngineError {
    #[error("uncaught exception: {0}")]
    Uncaught(Term),
    #[error("cyclic_term")]
    Cyclic,
    #[error("stale_handle({0})")]
    StaleHandle(i64),
    #[error("engine {0} is busy")]
    Busy(i64),
}

impl EngineError {
    pub fn ball(&self) -> Term {
        match self {
            EngineError::Uncaught(t) => t.clone(),
            EngineError::Cyclic => Term::atom("cyclic_term"),
            EngineError::StaleHandle(h) => Term::compound("stale_handle", vec![Term::Int(*h)]),
            EngineError::Busy(h) => Term::compound("engine_busy", vec![Term::Int(*h)]),
        }
    }
}

pub enum Flow {
    Goal(Term),
    Fail,
}

pub type Res = Result<Flow, Exception>;

/// A builtin receives all arguments of the binarized goal; the last one is
/// its continuation.
pub type Builtin = fn(&mut Engine, &[Term]) -> Res;

pub type BuiltinTable = HashMap<(Atom, usize), Builtin>;

enum Alt {
    Clauses { goal: Term, clauses: ClauseList, next: usize },
    Goal(Term),
    Assumed { pattern: Term, cont: Term, below: usize },
    Counter { var: Term, next: i64, hi: i64, cont: Term },
    Catch { catcher: Term, recovery: Term, cont: Term, active: bool },
}

struct Choice {
    alt: Alt,
    mark: Mark,
    side: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum AssumeKind {
    /// Usable at most once; the term lives on this engine's heap.
    Linear,
    /// Reusable within its scope; stored standalone and renamed per use.
    Scoped,
}

struct Assumption {
    id: u64,
    kind: AssumeKind,
    term: Term,
    live: bool,
}

enum Side {
    Pushed,
    Consumed(usize),
    CatchOff(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Status {
    Idle,
    Ready,
    Succeeded,
    Exhausted,
}

pub struct Engine {
    rt: Arc<Runtime>,
    builtins: Arc<BuiltinTable>,
    bindings: Bindings,
    goal: Option<Term>,
    choices: Vec<Choice>,
    assumptions: Vec<Assumption>,
    side: Vec<Side>,
    answer: Term,
    base: Mark,
    status: Status,
    capacity: Capacity,
    call_height: usize,
    next_assumption: u64,
    steps: u64,
    pub(crate) ctl: Option<Arc<ThreadCtl>>,
    /// Where `move` and `remote_run` go when no back-link is assumed.
    pub target: Option<Endpoint>,
}

impl Engine {
    pub fn new(rt: &Arc<Runtime>) -> Engine {
        Engine::with_capacity(rt, rt.config().capacity)
    }

    pub fn with_capacity(rt: &Arc<Runtime>, capacity: Capacity) -> Engine {
        let mut bindings = Bindings::new().with_occurs_check(rt.config().occurs_check);
        bindings.set_boundary(0);
        Engine {
            rt: rt.clone(),
            builtins: rt.builtin_table(),
            bindings,
            goal: None,
            choices: Vec::new(),
            assumptions: Vec::new(),
            side: Vec::new(),
            answer: Term::nil(),
            base: Mark { cells: 0, trail: 0 },
            status: Status::Idle,
            capacity,
            call_height: 0,
            next_assumption: 0,
            steps: 0,
            ctl: None,
            target: rt.config().default_server.clone(),
        }
    }

    pub fn runtime(&self) -> &Arc<Runtime> {
        &self.rt
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Loads a goal and answer template (standalone terms sharing variables).
    /// Discards any previous state; no resolution happens yet.
    pub fn load(&mut self, goal: &Term, answer: &Term) {
        self.bindings = Bindings::new().with_occurs_check(self.rt.config().occurs_check);
        self.bindings.set_boundary(0);
        self.choices.clear();
        self.assumptions.clear();
        self.side.clear();
        let span = goal.var_span().max(answer.var_span());
        self.bindings.fresh_block(span);
        self.base = self.bindings.mark();
        self.answer = answer.clone();
        self.goal = Some(Term::compound("call", vec![goal.clone(), Term::atom(STOP)]));
        self.status = Status::Ready;
    }

    /// Next answer: a standalone copy of the answer template.
    pub fn ask(&mut self) -> Result<Option<Term>, EngineError> {
        match self.status {
            Status::Idle | Status::Exhausted => return Ok(None),
            Status::Succeeded => self.goal = None,
            Status::Ready => {}
        }
        match self.run() {
            Ok(true) => {
                self.status = Status::Succeeded;
                match self.bindings.copy_out(&self.answer) {
                    Ok(t) => Ok(Some(t)),
                    Err(_) => Err(EngineError::Cyclic),
                }
            }
            Ok(false) => {
                self.status = Status::Exhausted;
                Ok(None)
            }
            Err(ex) => {
                self.status = Status::Exhausted;
                Err(EngineError::Uncaught(ex.0))
            }
        }
    }

    /// Copies assumptions into a child engine (used by findall and friends).
    pub fn inherit_assumptions(&self, child: &mut Engine) -> Result<(), Exception> {
        for a in &self.assumptions {
            if !a.live {
                continue;
            }
            let term = match a.kind {
                AssumeKind::Linear => child.bindings.import(&self.bindings.copy_out(&a.term)?),
                AssumeKind::Scoped => a.term.clone(),
            };
            child.push_assumption(a.kind, term);
        }
        child.target = self.target.clone();
        Ok(())
    }

    /// Is the engine holding an answer it can backtrack from?
    pub fn has_alternatives(&self) -> bool {
        !self.choices.is_empty()
    }

    /// Trail entries currently recorded.
    pub fn trail_len(&self) -> usize {
        self.bindings.trail().len()
    }

    pub fn live_assumptions(&self) -> usize {
        self.assumptions.iter().filter(|a| a.live).count()
    }

    // ------------------------------------------------------------ machine

    fn run(&mut self) -> Result<bool, Exception> {
        loop {
            self.steps += 1;
            if self.steps & 63 == 0 {
                if let Some(ctl) = &self.ctl {
                    if !ctl.checkpoint() {
                        self.exhaust();
                        return Err(Exception::atom("$cancelled"));
                    }
                }
            }
            let goal = match self.goal.take() {
                Some(g) => g,
                None => match self.backtrack() {
                    Ok(true) => continue,
                    Ok(false) => return Ok(false),
                    Err(ex) => {
                        self.recover(ex)?;
                        continue;
                    }
                },
            };
            match self.step(goal) {
                Ok(true) => return Ok(true),
                Ok(false) => {}
                Err(ex) => self.recover(ex)?,
            }
        }
    }

    /// One resolution step. `Ok(true)` means the goal register reached `'$stop'`.
    fn step(&mut self, goal: Term) -> Result<bool, Exception> {
        self.check_capacity()?;
        let g = self.bindings.walk(&goal).clone();
        let (name, arity) = match &g {
            Term::Atom(a) if a.as_str() == STOP => return Ok(true),
            Term::Atom(a) => (a.clone(), 0),
            Term::Struct(c) => (c.name.clone(), c.args.len()),
            Term::Var(_) => return Err(Exception::instantiation()),
            Term::Int(_) => return Err(self.type_error("callable", &g)),
        };
        if let Some(b) = self.builtins.get(&(name.clone(), arity)).copied() {
            match b(self, g.args())? {
                Flow::Goal(next) => self.goal = Some(next),
                Flow::Fail => self.goal = None,
            }
            return Ok(false);
        }
        let key = PredKey { name, arity };
        let first = if arity >= 2 { index_key(self.bindings.walk(&g.args()[0])) } else { None };
        let mut fetched = false;
        loop {
            match self.rt.store.lookup(&key, first.as_ref()) {
                Lookup::Clauses(cs) => {
                    self.try_clauses(g, cs, 0)?;
                    return Ok(false);
                }
                Lookup::Unknown => {
                    if fetched || !self.rt.clone().unknown(self, &key)? {
                        return Err(Exception::of("unknown_predicate", vec![key.indicator()]));
                    }
                    fetched = true;
                }
            }
        }
    }

    fn try_clauses(&mut self, goal: Term, clauses: ClauseList, start: usize) -> Result<(), Exception> {
        let n = clauses.len();
        let mut i = start;
        while i < n {
            let height = self.choices.len();
            let more = i + 1 < n;
            if more {
                self.push_choice(Alt::Clauses { goal: goal.clone(), clauses: clauses.clone(), next: i + 1 });
            }
            self.call_height = height;
            if self.try_clause(&goal, &clauses[i])? {
                return Ok(());
            }
            if more {
                let ch = self.choices.pop().expect("choice just pushed");
                self.restore(&ch);
            }
            i += 1;
        }
        self.goal = None;
        Ok(())
    }

    fn try_clause(&mut self, goal: &Term, clause: &BinClause) -> Result<bool, Exception> {
        let base = self.bindings.fresh_block(clause.var_count);
        if !self.bindings.unify_template(&clause.head, base, goal) {
            return Ok(false);
        }
        for g in &clause.guards {
            let g = g.offset(base);
            if !self.run_guard(&g)? {
                return Ok(false);
            }
        }
        self.goal = Some(clause.body.offset(base));
        Ok(true)
    }

    fn run_guard(&mut self, g: &Term) -> Result<bool, Exception> {
        if g.is_struct("$cut_level", 1) {
            let level = Term::Int(self.call_height as i64);
            return Ok(self.unify(&g.args()[0], &level));
        }
        let (name, arity) = match g.functor() {
            Some((n, a)) => (n.clone(), a),
            None => return Err(self.type_error("callable", g)),
        };
        let b = match self.builtins.get(&(name, arity + 1)).copied() {
            Some(b) => b,
            None => {
                return Err(Exception::of(
                    "unknown_predicate",
                    vec![Term::indicator(&g.functor().unwrap().0.clone(), arity + 1)],
                ))
            }
        };
        let mut args = g.args().to_vec();
        args.push(Term::atom("true"));
        Ok(matches!(b(self, &args)?, Flow::Goal(_)))
    }

    fn backtrack(&mut self) -> Result<bool, Exception> {
        loop {
            let ch = match self.choices.pop() {
                Some(c) => c,
                None => {
                    self.exhaust();
                    return Ok(false);
                }
            };
            self.restore(&ch);
            match ch.alt {
                Alt::Clauses { goal, clauses, next } => {
                    self.try_clauses(goal, clauses, next)?;
                    if self.goal.is_some() {
                        return Ok(true);
                    }
                }
                Alt::Goal(t) => {
                    self.goal = Some(t);
                    return Ok(true);
                }
                Alt::Assumed { pattern, cont, below } => {
                    if let Flow::Goal(t) = self.scan_assumptions(&pattern, cont, below)? {
                        self.goal = Some(t);
                        return Ok(true);
                    }
                }
                Alt::Counter { var, next, hi, cont } => {
                    if next < hi {
                        self.push_choice(Alt::Counter { var: var.clone(), next: next + 1, hi, cont: cont.clone() });
                    }
                    if self.unify(&var, &Term::Int(next)) {
                        self.goal = Some(cont);
                        return Ok(true);
                    }
                }
                Alt::Catch { .. } => {}
            }
        }
    }

    fn recover(&mut self, ex: Exception) -> Result<(), Exception> {
        if !ex.is_cancel() {
            while let Some(ch) = self.choices.pop() {
                self.restore(&ch);
                if let Alt::Catch { catcher, recovery, cont, active: true } = ch.alt {
                    let ball = self.bindings.import(&ex.0);
                    if self.unify(&catcher, &ball) {
                        let level = Term::Int(self.choices.len() as i64);
                        self.goal = Some(self.expand(&recovery, cont, &level)?);
                        return Ok(());
                    }
                }
            }
        }
        self.exhaust();
        Err(ex)
    }

    fn exhaust(&mut self) {
        self.choices.clear();
        self.bindings.undo_to(self.base);
        self.undo_side(0);
        self.bindings.set_boundary(0);
        self.goal = None;
    }

    fn check_capacity(&self) -> Result<(), Exception> {
        let c = &self.capacity;
        let which = if self.bindings.cell_count() > c.heap {
            "heap"
        } else if self.choices.len() > c.stack {
            "stack"
        } else if self.bindings.trail().len() > c.trail {
            "trail"
        } else {
            return Ok(());
        };
        Err(Exception::of("resource_error", vec![Term::atom(which)]))
    }

    fn push_choice(&mut self, alt: Alt) {
        let mark = self.bindings.mark();
        self.choices.push(Choice { alt, mark, side: self.side.len() });
        self.bindings.set_boundary(mark.cells);
    }

    fn restore(&mut self, ch: &Choice) {
        self.bindings.undo_to(ch.mark);
        self.undo_side(ch.side);
        self.reset_boundary();
    }

    fn reset_boundary(&mut self) {
        let b = self.choices.last().map(|c| c.mark.cells).unwrap_or(0);
        self.bindings.set_boundary(b);
    }

    fn undo_side(&mut self, len: usize) {
        while self.side.len() > len {
            match self.side.pop().unwrap() {
                Side::Pushed => {
                    self.assumptions.pop();
                }
                Side::Consumed(i) => {
                    if let Some(a) = self.assumptions.get_mut(i) {
                        a.live = true;
                    }
                }
                Side::CatchOff(i) => {
                    if let Some(Choice { alt: Alt::Catch { active, .. }, .. }) = self.choices.get_mut(i) {
                        *active = true;
                    }
                }
            }
        }
    }

    // ------------------------------------------------------------ builtin API

    pub fn walk(&self, t: &Term) -> Term {
        self.bindings.walk(t).clone()
    }

    pub fn unify(&mut self, a: &Term, b: &Term) -> bool {
        self.bindings.unify(a, b)
    }

    pub fn identical(&self, a: &Term, b: &Term) -> bool {
        self.bindings.identical(a, b)
    }

    pub fn resolve(&self, t: &Term) -> Result<Term, Exception> {
        Ok(self.bindings.resolve(t)?)
    }

    /// Standalone copy of a heap term.
    pub fn copy_out(&self, t: &Term) -> Result<Term, Exception> {
        Ok(self.bindings.copy_out(t)?)
    }

    /// Brings a standalone term onto this engine's heap.
    pub fn import(&mut self, t: &Term) -> Term {
        self.bindings.import(t)
    }

    pub fn fresh_var(&mut self) -> Term {
        self.bindings.fresh()
    }

    /// Unifies `a` with `b` and continues at `k`, or fails.
    pub fn unify_then(&mut self, a: &Term, b: &Term, k: &Term) -> Res {
        if self.unify(a, b) {
            Ok(Flow::Goal(k.clone()))
        } else {
            Ok(Flow::Fail)
        }
    }

    pub fn type_error(&self, kind: &str, culprit: &Term) -> Exception {
        let c = self.bindings.copy_out(culprit).unwrap_or_else(|_| Term::atom("cyclic_term"));
        Exception::of("type_error", vec![Term::atom(kind), c])
    }

    pub fn choice_height(&self) -> usize {
        self.choices.len()
    }

    /// Removes every choicepoint above `height`.
    pub fn cut_to(&mut self, height: usize) {
        if height < self.choices.len() {
            self.choices.truncate(height);
            self.reset_boundary();
        }
    }

    /// Drops every alternative above `height` except `catch/3` frames, which
    /// keep their slots so they can still receive exceptions.
    pub fn prune_to(&mut self, height: usize) {
        for ch in self.choices.iter_mut().skip(height) {
            if !matches!(ch.alt, Alt::Catch { .. }) {
                ch.alt = Alt::Goal(Term::atom("fail"));
            }
        }
        while self.choices.len() > height
            && matches!(self.choices.last().map(|c| &c.alt), Some(Alt::Goal(t)) if t.is_atom("fail"))
        {
            self.choices.pop();
        }
        self.reset_boundary();
    }

    /// Schedules `t` as the goal to resume with on backtracking.
    pub fn push_alternative(&mut self, t: Term) {
        self.push_choice(Alt::Goal(t));
    }

    fn push_counter(&mut self, var: Term, next: i64, hi: i64, cont: Term) {
        self.push_choice(Alt::Counter { var, next, hi, cont });
    }

    fn push_catch(&mut self, catcher: Term, recovery: Term, cont: Term) {
        self.push_choice(Alt::Catch { catcher, recovery, cont, active: true });
    }

    fn catch_exit(&mut self, index: usize) {
        if index + 1 == self.choices.len() && matches!(self.choices[index].alt, Alt::Catch { .. }) {
            self.choices.pop();
            self.reset_boundary();
            return;
        }
        if let Some(Choice { alt: Alt::Catch { active, .. }, .. }) = self.choices.get_mut(index) {
            if *active {
                *active = false;
                self.side.push(Side::CatchOff(index));
            }
        }
    }

    /// ψ-expands a user goal in front of continuation `k`, turning control
    /// constructs into their internal forms. `cut` is the choicepoint height
    /// a `!` inside the goal cuts back to.
    pub fn expand(&self, g: &Term, k: Term, cut: &Term) -> Result<Term, Exception> {
        let mut goals = Vec::new();
        let mut cur = self.walk(g);
        while cur.is_struct(",", 2) {
            goals.push(cur.args()[0].clone());
            cur = self.walk(&cur.args()[1]);
        }
        goals.push(cur);
        let mut acc = k;
        for g in goals.iter().rev() {
            acc = self.expand_one(g, acc, cut)?;
        }
        Ok(acc)
    }

    fn expand_one(&self, g: &Term, k: Term, cut: &Term) -> Result<Term, Exception> {
        let g = self.walk(g);
        match &g {
            Term::Var(_) => Err(Exception::instantiation()),
            Term::Int(_) => Err(self.type_error("callable", &g)),
            _ if g.is_struct(",", 2) => self.expand(&g, k, cut),
            _ if g.is_atom("!") => Ok(Term::compound("$cut", vec![cut.clone(), k])),
            _ if g.is_struct(";", 2) => {
                let a = g.args();
                let left = self.walk(&a[0]);
                if left.is_struct("->", 2) {
                    let c = left.args();
                    Ok(Term::compound("$ite", vec![c[0].clone(), c[1].clone(), a[1].clone(), cut.clone(), k]))
                } else {
                    Ok(Term::compound("$or", vec![a[0].clone(), a[1].clone(), cut.clone(), k]))
                }
            }
            _ if g.is_struct("->", 2) => {
                let a = g.args();
                Ok(Term::compound("$ite", vec![a[0].clone(), a[1].clone(), Term::atom("fail"), cut.clone(), k]))
            }
            _ => Ok(psi(&g, k)),
        }
    }

    fn push_assumption(&mut self, kind: AssumeKind, term: Term) -> u64 {
        let id = self.next_assumption;
        self.next_assumption += 1;
        self.assumptions.push(Assumption { id, kind, term, live: true });
        self.side.push(Side::Pushed);
        id
    }

    /// Adds a linear assumption; the term keeps its identity.
    pub fn assume_linear(&mut self, t: &Term) {
        self.push_assumption(AssumeKind::Linear, t.clone());
    }

    /// Adds a scoped (intuitionistic) assumption and returns its id.
    pub fn assume_scoped(&mut self, t: &Term) -> Result<u64, Exception> {
        let c = self.copy_out(t)?;
        Ok(self.push_assumption(AssumeKind::Scoped, c))
    }

    pub fn unassume(&mut self, id: u64) {
        if let Some(i) = self.assumptions.iter().rposition(|a| a.id == id && a.live) {
            self.assumptions[i].live = false;
            self.side.push(Side::Consumed(i));
        }
    }

    /// Reads (without consuming) the newest live assumption unifying with
    /// the standalone term `pattern`, returning a standalone copy of it.
    pub fn peek_assumption(&self, pattern: &Term) -> Option<Term> {
        let p = pattern;
        for a in self.assumptions.iter().rev().filter(|a| a.live) {
            let t = match a.kind {
                AssumeKind::Linear => self.copy_out(&a.term).ok()?,
                AssumeKind::Scoped => a.term.clone(),
            };
            if let Some(m) = crate::linda::match_tuple(p, &t) {
                return Some(m);
            }
        }
        None
    }

    /// Consumes the linear assumption whose term is `cont_marker(M)` with
    /// `M` identical to `marker`. Returns whether one was found.
    pub fn consume_marker(&mut self, marker: &Term) -> bool {
        let found = self.assumptions.iter().rposition(|a| {
            a.live && a.kind == AssumeKind::Linear && {
                let t = self.bindings.walk(&a.term);
                t.is_struct("cont_marker", 1) && self.bindings.identical(&t.args()[0], marker)
            }
        });
        match found {
            Some(i) => {
                self.assumptions[i].live = false;
                self.side.push(Side::Consumed(i));
                true
            }
            None => false,
        }
    }

    /// `assumed/1`: tries live assumptions newest first, below index `below`.
    fn scan_assumptions(&mut self, pattern: &Term, cont: Term, below: usize) -> Res {
        let mut i = below.min(self.assumptions.len());
        while i > 0 {
            i -= 1;
            let a = &self.assumptions[i];
            if !a.live {
                continue;
            }
            let kind = a.kind;
            let term = match kind {
                AssumeKind::Linear => a.term.clone(),
                AssumeKind::Scoped => {
                    let t = a.term.clone();
                    self.bindings.import(&t)
                }
            };
            let (head, body) = {
                let w = self.walk(&term);
                if kind == AssumeKind::Scoped && w.is_struct(":-", 2) {
                    (w.args()[0].clone(), Some(w.args()[1].clone()))
                } else {
                    (term.clone(), None)
                }
            };
            if !crate::term::unifiable(&self.copy_out(pattern)?, &self.copy_out(&head)?) {
                continue;
            }
            self.push_choice(Alt::Assumed { pattern: pattern.clone(), cont: cont.clone(), below: i });
            if !self.unify(pattern, &head) {
                let ch = self.choices.pop().unwrap();
                self.restore(&ch);
                continue;
            }
            if kind == AssumeKind::Linear {
                self.assumptions[i].live = false;
                self.side.push(Side::Consumed(i));
            }
            return match body {
                Some(b) => {
                    let level = Term::Int(self.choices.len() as i64);
                    Ok(Flow::Goal(self.expand(&b, cont, &level)?))
                }
                None => Ok(Flow::Goal(cont)),
            };
        }
        Ok(Flow::Fail)
    }
}
