//! Clause normalization, binarization and LD composition.
//!
//! `ψ(p(T1..Tn), K) = p(T1..Tn, K)`. A clause `A :- B1,..,Bn` becomes
//! `ψ(A,K) :- ψ(B1, ψ(B2, .. ψ(Bn, K)))`. A leading run of inline builtins is
//! kept aside as guards, executed before the body goal is committed to.

use thiserror::Error;

use crate::term::{is_variant, Atom, Bindings, Term, VarId};

/// Terminates every continuation.
pub const STOP: &str = "$stop";

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ClauseError {
    #[error("instantiation_error: clause head is a variable")]
    VariableHead,
    #[error("type_error(callable, {0})")]
    NotCallable(Term),
    #[error("permission_error: {0} is reserved")]
    Reserved(String),
}

/// A source clause `head :- body`.
#[derive(Debug, Clone)]
pub struct Clause {
    pub head: Term,
    pub body: Vec<Term>,
}

impl Clause {
    pub fn new(head: Term, body: Vec<Term>) -> Clause {
        Clause { head, body }
    }

    pub fn fact(head: Term) -> Clause {
        Clause { head, body: Vec::new() }
    }

    pub fn to_term(&self) -> Term {
        if self.body.is_empty() {
            self.head.clone()
        } else {
            Term::compound(":-", vec![self.head.clone(), Term::conjunction(self.body.clone())])
        }
    }

    fn var_span(&self) -> u32 {
        self.body.iter().map(Term::var_span).fold(self.head.var_span(), u32::max)
    }
}

/// A binarized clause. Variables are numbered `0..var_count`; the last
/// argument of `head` is the continuation.
#[derive(Debug, Clone)]
pub struct BinClause {
    pub head: Term,
    pub guards: Vec<Term>,
    pub body: Term,
    pub var_count: u32,
}

impl BinClause {
    pub fn new(head: Term, guards: Vec<Term>, body: Term) -> BinClause {
        let whole = Term::compound("clause", vec![head, Term::list(guards), body]);
        BinClause::from_term(&whole.normalize().0).expect("well-formed clause term")
    }

    /// `clause(Head, Guards, Body)`, the form used for storage and transfer.
    pub fn to_term(&self) -> Term {
        Term::compound("clause", vec![self.head.clone(), Term::list(self.guards.clone()), self.body.clone()])
    }

    pub fn from_term(t: &Term) -> Option<BinClause> {
        if !t.is_struct("clause", 3) {
            return None;
        }
        let a = t.args();
        a[0].functor()?;
        a[2].functor()?;
        let mut guards = Vec::new();
        let mut cur = &a[1];
        while cur.is_struct(".", 2) {
            guards.push(cur.args()[0].clone());
            cur = &cur.args()[1];
        }
        if !cur.is_atom("[]") {
            return None;
        }
        Some(BinClause { head: a[0].clone(), guards, body: a[2].clone(), var_count: t.var_span() })
    }

    /// Name and binarized arity of the head.
    pub fn key(&self) -> (Atom, usize) {
        let (name, arity) = self.head.functor().expect("callable head");
        (name.clone(), arity)
    }

    /// The user-level clause this one was built from, continuation removed.
    /// Guards come back first in the body, as in the source.
    pub fn unbinarize(&self) -> Clause {
        let (head, cont) = strip_last(&self.head);
        let mut body: Vec<Term> = self.guards.clone();
        let mut cur = self.body.clone();
        loop {
            if cont.as_ref().map(|c| c.identical(&cur)).unwrap_or(false) {
                break;
            }
            match strip_last(&cur) {
                (g, Some(next)) => {
                    if !g.is_atom("true") {
                        body.push(g);
                    }
                    cur = next;
                }
                (g, None) => {
                    body.push(g);
                    break;
                }
            }
        }
        Clause { head, body }
    }
}

/// Splits `p(T1..Tn, K)` into `p(T1..Tn)` and `K`.
pub fn strip_last(t: &Term) -> (Term, Option<Term>) {
    match t {
        Term::Struct(c) => {
            let n = c.args.len();
            (Term::compound(c.name.clone(), c.args[..n - 1].to_vec()), Some(c.args[n - 1].clone()))
        }
        other => (other.clone(), None),
    }
}

/// ψ(E, K): appends `k` as a final argument.
pub fn psi(e: &Term, k: Term) -> Term {
    match e {
        Term::Atom(a) => Term::compound(a.clone(), vec![k]),
        Term::Struct(c) => {
            let mut args = c.args.to_vec();
            args.push(k);
            Term::compound(c.name.clone(), args)
        }
        other => Term::compound("call", vec![other.clone(), k]),
    }
}

/// Builtins that may run as clause guards.
pub fn is_inline(goal: &Term) -> bool {
    match goal.functor() {
        Some((name, arity)) => matches!(
            (name.as_str(), arity),
            ("true", 0)
                | ("fail", 0)
                | ("is", 2)
                | ("=", 2)
                | ("==", 2)
                | ("<", 2)
                | (">", 2)
                | ("=<", 2)
                | (">=", 2)
                | ("=:=", 2)
                | ("=\\=", 2)
                | ("write", 1)
                | ("nl", 0)
                | ("println", 1)
                | ("get_cont", 1)
        ),
        None => false,
    }
}

/// Splits a conjunction into its goals.
pub fn conjuncts(body: &Term) -> Vec<Term> {
    let mut out = Vec::new();
    let mut cur = body;
    loop {
        if cur.is_struct(",", 2) {
            out.extend(conjuncts(&cur.args()[0]));
            cur = &cur.args()[1];
        } else {
            out.push(cur.clone());
            return out;
        }
    }
}

/// What a program text term turns into.
#[derive(Debug, Clone)]
pub enum ProgramItem {
    Clause(Clause),
    /// `Head ::- Body`, already binary.
    Binary(BinClause),
    /// `:- Goal`.
    Directive(Term),
}

pub fn classify(t: &Term) -> Result<ProgramItem, ClauseError> {
    if t.is_struct(":-", 1) {
        return Ok(ProgramItem::Directive(t.args()[0].clone()));
    }
    if t.is_struct("::-", 2) {
        let head = &t.args()[0];
        check_head(head)?;
        let body = match &t.args()[1] {
            Term::Var(_) => return Err(ClauseError::NotCallable(t.args()[1].clone())),
            b => b.clone(),
        };
        return Ok(ProgramItem::Binary(BinClause::new(head.clone(), Vec::new(), body)));
    }
    if t.is_struct(":-", 2) {
        let head = t.args()[0].clone();
        check_head(&head)?;
        return Ok(ProgramItem::Clause(Clause::new(head, conjuncts(&t.args()[1]))));
    }
    check_head(t)?;
    Ok(ProgramItem::Clause(Clause::fact(t.clone())))
}

fn check_head(head: &Term) -> Result<(), ClauseError> {
    match head.functor() {
        None if head.is_var() => Err(ClauseError::VariableHead),
        None => Err(ClauseError::NotCallable(head.clone())),
        Some((name, _)) if name.as_str() == STOP => Err(ClauseError::Reserved(STOP.to_string())),
        Some(_) => Ok(()),
    }
}

/// Facts become `p :- true`; variable goals become `call(X)`.
pub fn normalize(c: &Clause) -> Result<Clause, ClauseError> {
    check_head(&c.head)?;
    let body = if c.body.is_empty() {
        vec![Term::atom("true")]
    } else {
        c.body
            .iter()
            .map(|g| match g {
                Term::Var(_) | Term::Int(_) => Term::compound("call", vec![g.clone()]),
                other => other.clone(),
            })
            .collect()
    };
    Ok(Clause { head: c.head.clone(), body })
}

fn contains_cut(goals: &[Term]) -> bool {
    goals.iter().any(|g| {
        g.is_atom("!")
            || ((g.is_struct(",", 2) || g.is_struct(";", 2) || g.is_struct("->", 2)) && contains_cut(g.args()))
    })
}

/// Replaces `!` in control positions by `'$cut'(Level)`.
pub fn bind_cut(g: &Term, level: &Term) -> Term {
    if g.is_atom("!") {
        return Term::compound("$cut", vec![level.clone()]);
    }
    for op in [",", ";", "->"] {
        if g.is_struct(op, 2) {
            let a = g.args();
            return Term::compound(op, vec![bind_cut(&a[0], level), bind_cut(&a[1], level)]);
        }
    }
    g.clone()
}

/// Binarizes one clause (normalizing it first).
pub fn binarize_clause(c: &Clause) -> Result<BinClause, ClauseError> {
    let c = normalize(c)?;
    let mut next_var = c.var_span();
    let cont = Term::Var(VarId(next_var));
    next_var += 1;

    let mut body = c.body.clone();
    let mut guards = Vec::new();
    if contains_cut(&body) {
        let level = Term::Var(VarId(next_var));
        body = body.iter().map(|g| bind_cut(g, &level)).collect();
        guards.push(Term::compound("$cut_level", vec![level]));
    }

    let mut rest = body.as_slice();
    while let Some((g, tail)) = rest.split_first() {
        if !is_inline(g) {
            break;
        }
        if g.is_struct("get_cont", 1) {
            guards.push(Term::compound("=", vec![g.args()[0].clone(), cont.clone()]));
        } else if !g.is_atom("true") {
            guards.push(g.clone());
        }
        rest = tail;
    }
    let goal = if rest.is_empty() {
        Term::compound("true", vec![cont.clone()])
    } else {
        rest.iter().rev().fold(cont.clone(), |k, g| psi(g, k))
    };
    Ok(BinClause::new(psi(&c.head, cont), guards, goal))
}

pub fn binarize_program(cs: &[Clause]) -> Result<Vec<BinClause>, ClauseError> {
    cs.iter().map(binarize_clause).collect()
}

/// One LD step: unfold the leftmost body goal of `c1` with `c2`. `None` is ⊥.
pub fn compose(c1: &Clause, c2: &Clause) -> Option<Clause> {
    let (first, rest) = c1.body.split_first()?;
    let mut b = Bindings::new();
    let offset = c1.var_span();
    b.fresh_block(offset + c2.var_span());
    let head2 = c2.head.offset(offset);
    if !b.unify(first, &head2) {
        return None;
    }
    let body: Vec<Term> =
        c2.body.iter().map(|g| g.offset(offset)).chain(rest.iter().cloned()).filter(|g| !g.is_atom("true")).collect();
    let whole = Term::compound("clause", vec![c1.head.clone(), Term::list(body)]);
    let resolved = b.resolve(&whole).ok()?.normalize().0;
    let a = resolved.args();
    let mut goals = Vec::new();
    let mut cur = &a[1];
    while cur.is_struct(".", 2) {
        goals.push(cur.args()[0].clone());
        cur = &cur.args()[1];
    }
    Some(Clause { head: a[0].clone(), body: goals })
}

/// Variant equality of whole clauses.
pub fn same_clause(a: &Clause, b: &Clause) -> bool {
    is_variant(&a.to_term(), &b.to_term())
}

pub fn same_bin_clause(a: &BinClause, b: &BinClause) -> bool {
    is_variant(&a.to_term(), &b.to_term())
}
