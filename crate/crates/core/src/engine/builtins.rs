//! The core builtin table: control, unification and comparison, arithmetic,
//! term inspection, output, the database, assumptions, engines, threads and
//! the local tuple space.

use std::cmp::Ordering;
use std::time::Duration;

use super::arith::{compare, eval};
use super::{Builtin, BuiltinTable, Capacity, Engine, Exception, Flow, Res};
use crate::binarizer::{binarize_clause, classify, ProgramItem};
use crate::store::{Position, PredKey};
use crate::term::{canonical_text, parse_term, unifiable, Atom, Term, TextWriter};

pub(super) fn install(t: &mut BuiltinTable) {
    let mut add = |name: &str, arity: usize, f: Builtin| {
        t.insert((Atom::new(name), arity), f);
    };
    // control
    add("true", 1, b_true);
    add("fail", 1, b_fail);
    add("false", 1, b_fail);
    for n in 2..=9 {
        add("call", n, b_call);
    }
    add(",", 3, b_conj);
    add(";", 3, b_or_body);
    add("->", 3, b_if_body);
    add("$or", 4, b_or);
    add("$ite", 5, b_ite);
    add("$ite_then", 4, b_ite_then);
    add("$call_cut", 3, b_call_cut);
    add("$cut", 2, b_cut);
    add("$nafail", 1, b_nafail);
    add("\\+", 2, b_not);
    add("not", 2, b_not);
    add("once", 2, b_once);
    add("ignore", 2, b_ignore);
    add("findall", 4, b_findall);
    add("catch", 4, b_catch);
    add("$catch_exit", 2, b_catch_exit);
    add("throw", 2, b_throw);
    add("for", 4, b_for);
    add("between", 4, b_between);
    // unification and comparison
    add("=", 3, b_unify);
    add("\\=", 3, b_not_unify);
    add("==", 3, b_identical);
    add("\\==", 3, b_not_identical);
    add("@<", 3, b_order_lt);
    add("@>", 3, b_order_gt);
    add("@=<", 3, b_order_le);
    add("@>=", 3, b_order_ge);
    add("compare", 4, b_compare);
    // arithmetic
    add("is", 3, b_is);
    add("<", 3, b_lt);
    add(">", 3, b_gt);
    add("=<", 3, b_le);
    add(">=", 3, b_ge);
    add("=:=", 3, b_eq);
    add("=\\=", 3, b_ne);
    add("succ", 3, b_succ);
    // type checks
    add("var", 2, b_var);
    add("nonvar", 2, b_nonvar);
    add("atom", 2, b_atom);
    add("integer", 2, b_integer);
    add("number", 2, b_integer);
    add("atomic", 2, b_atomic);
    add("compound", 2, b_compound);
    add("callable", 2, b_callable);
    add("is_list", 2, b_is_list);
    add("ground", 2, b_ground);
    // terms
    add("functor", 4, b_functor);
    add("arg", 4, b_arg);
    add("=..", 3, b_univ);
    add("copy_term", 3, b_copy_term);
    add("length", 3, b_length);
    add("atom_codes", 3, b_atom_codes);
    add("atom_chars", 3, b_atom_chars);
    add("atom_length", 3, b_atom_length);
    add("atom_concat", 4, b_atom_concat);
    add("number_codes", 3, b_number_codes);
    add("term_to_atom", 3, b_term_to_atom);
    add("sort", 3, b_sort);
    add("msort", 3, b_msort);
    // output
    add("write", 2, b_write);
    add("print", 2, b_write);
    add("writeq", 2, b_writeq);
    add("println", 2, b_println);
    add("nl", 1, b_nl);
    add("tab", 2, b_tab);
    // database
    add("assert", 2, b_assertz);
    add("assertz", 2, b_assertz);
    add("asserta", 2, b_asserta);
    add("retract", 2, b_retract);
    add("stats", 6, b_stats);
    // assumptions
    add("assumeal", 2, b_assumeal);
    add("assumel", 2, b_assumeal);
    add("assumed", 2, b_assumed);
    add("=>>", 3, b_assume_scoped);
    add("$unassume", 2, b_unassume);
    // engines and threads
    add("create_engine", 2, b_create_engine);
    add("create_engine", 5, b_create_engine_cap);
    add("load_engine", 4, b_load_engine);
    add("ask_engine", 3, b_ask_engine);
    add("destroy_engine", 2, b_destroy_engine);
    add("ask_thread", 3, b_ask_thread);
    add("thread_join", 2, b_thread_join);
    add("thread_suspend", 2, b_thread_suspend);
    add("thread_resume", 2, b_thread_resume);
    add("thread_cancel", 2, b_thread_cancel);
    add("synchronize_on", 4, b_synchronize_on);
    add("sleep", 2, b_sleep);
    add("sleep_ms", 2, b_sleep_ms);
    // local tuple space
    add("out", 2, b_out);
    add("in", 2, b_in);
    add("rd", 2, b_rd);
    add("inp", 2, b_inp);
    add("rdp", 2, b_rdp);
    add("all", 3, b_all);
}

fn k(a: &[Term]) -> Term {
    a.last().expect("continuation").clone()
}

fn go(a: &[Term]) -> Res {
    Ok(Flow::Goal(k(a)))
}

fn test(ok: bool, a: &[Term]) -> Res {
    if ok {
        go(a)
    } else {
        Ok(Flow::Fail)
    }
}

fn level(e: &Engine) -> Term {
    Term::Int(e.choice_height() as i64)
}

pub(crate) fn int_arg(e: &Engine, t: &Term) -> Result<i64, Exception> {
    match e.walk(t) {
        Term::Int(i) => Ok(i),
        Term::Var(_) => Err(Exception::instantiation()),
        other => Err(e.type_error("integer", &other)),
    }
}

pub(crate) fn atom_arg(e: &Engine, t: &Term) -> Result<Atom, Exception> {
    match e.walk(t) {
        Term::Atom(a) => Ok(a),
        Term::Var(_) => Err(Exception::instantiation()),
        other => Err(e.type_error("atom", &other)),
    }
}

/// Items of a proper list, or `None`.
pub(crate) fn list_items(e: &Engine, t: &Term) -> Option<Vec<Term>> {
    let mut out = Vec::new();
    let mut cur = e.walk(t);
    loop {
        if cur.is_struct(".", 2) {
            out.push(cur.args()[0].clone());
            cur = e.walk(&cur.args()[1]);
        } else if cur.is_atom("[]") {
            return Some(out);
        } else {
            return None;
        }
    }
}

fn height_of(e: &Engine, t: &Term) -> Result<usize, Exception> {
    Ok(int_arg(e, t)?.max(0) as usize)
}

// ------------------------------------------------------------ control

fn b_true(_: &mut Engine, a: &[Term]) -> Res {
    go(a)
}

fn b_fail(_: &mut Engine, _: &[Term]) -> Res {
    Ok(Flow::Fail)
}

/// `call(G, A1..An, K)`: opaque to cut.
fn b_call(e: &mut Engine, a: &[Term]) -> Res {
    let n = a.len();
    let g = e.walk(&a[0]);
    let extra = &a[1..n - 1];
    let goal = if extra.is_empty() {
        g
    } else {
        match &g {
            Term::Atom(name) => Term::compound(name.clone(), extra.to_vec()),
            Term::Struct(c) => {
                let mut args = c.args.to_vec();
                args.extend_from_slice(extra);
                Term::compound(c.name.clone(), args)
            }
            Term::Var(_) => return Err(Exception::instantiation()),
            Term::Int(_) => return Err(e.type_error("callable", &g)),
        }
    };
    let cut = level(e);
    Ok(Flow::Goal(e.expand(&goal, k(a), &cut)?))
}

fn b_conj(e: &mut Engine, a: &[Term]) -> Res {
    let g = Term::compound(",", vec![a[0].clone(), a[1].clone()]);
    let cut = level(e);
    Ok(Flow::Goal(e.expand(&g, k(a), &cut)?))
}

fn b_or_body(e: &mut Engine, a: &[Term]) -> Res {
    let cut = level(e);
    let left = e.walk(&a[0]);
    if left.is_struct("->", 2) {
        let c = left.args();
        b_ite(e, &[c[0].clone(), c[1].clone(), a[1].clone(), cut, k(a)])
    } else {
        b_or(e, &[a[0].clone(), a[1].clone(), cut, k(a)])
    }
}

fn b_if_body(e: &mut Engine, a: &[Term]) -> Res {
    let cut = level(e);
    b_ite(e, &[a[0].clone(), a[1].clone(), Term::atom("fail"), cut, k(a)])
}

/// `'$or'(L, R, Cut, K)`
fn b_or(e: &mut Engine, a: &[Term]) -> Res {
    e.push_alternative(Term::compound("$call_cut", vec![a[1].clone(), a[2].clone(), a[3].clone()]));
    Ok(Flow::Goal(e.expand(&a[0], a[3].clone(), &a[2])?))
}

/// `'$ite'(C, T, E, Cut, K)`
fn b_ite(e: &mut Engine, a: &[Term]) -> Res {
    let h = e.choice_height();
    e.push_alternative(Term::compound("$call_cut", vec![a[2].clone(), a[3].clone(), a[4].clone()]));
    let then = Term::compound("$ite_then", vec![Term::Int(h as i64), a[1].clone(), a[3].clone(), a[4].clone()]);
    Ok(Flow::Goal(e.expand(&a[0], then, &Term::Int(h as i64 + 1))?))
}

/// `'$ite_then'(H, T, Cut, K)`
fn b_ite_then(e: &mut Engine, a: &[Term]) -> Res {
    let h = height_of(e, &a[0])?;
    e.cut_to(h);
    Ok(Flow::Goal(e.expand(&a[1], a[3].clone(), &a[2])?))
}

/// `'$call_cut'(G, Cut, K)`
fn b_call_cut(e: &mut Engine, a: &[Term]) -> Res {
    Ok(Flow::Goal(e.expand(&a[0], a[2].clone(), &a[1])?))
}

fn b_cut(e: &mut Engine, a: &[Term]) -> Res {
    let h = height_of(e, &a[0])?;
    e.cut_to(h);
    go(a)
}

fn b_nafail(e: &mut Engine, a: &[Term]) -> Res {
    let h = height_of(e, &a[0])?;
    e.cut_to(h);
    Ok(Flow::Fail)
}

fn b_not(e: &mut Engine, a: &[Term]) -> Res {
    let h = e.choice_height();
    e.push_alternative(k(a));
    let fail = Term::compound("$nafail", vec![Term::Int(h as i64)]);
    Ok(Flow::Goal(e.expand(&a[0], fail, &Term::Int(h as i64 + 1))?))
}

fn b_once(e: &mut Engine, a: &[Term]) -> Res {
    let cut = level(e);
    b_ite(e, &[a[0].clone(), Term::atom("true"), Term::atom("fail"), cut, k(a)])
}

fn b_ignore(e: &mut Engine, a: &[Term]) -> Res {
    let cut = level(e);
    b_ite(e, &[a[0].clone(), Term::atom("true"), Term::atom("true"), cut, k(a)])
}

/// Runs `goal` to exhaustion on a private engine, returning copies of
/// `template` per answer.
pub(crate) fn all_answers(e: &Engine, template: &Term, goal: &Term) -> Result<Vec<Term>, Exception> {
    let pair = e.copy_out(&Term::compound("-", vec![goal.clone(), template.clone()]))?;
    let mut inner = Engine::new(e.runtime());
    inner.load(&pair.args()[0], &pair.args()[1]);
    e.inherit_assumptions(&mut inner)?;
    inner.ctl = e.ctl.clone();
    let mut out = Vec::new();
    loop {
        match inner.ask() {
            Ok(Some(t)) => out.push(t),
            Ok(None) => return Ok(out),
            Err(err) => return Err(Exception(err.ball())),
        }
    }
}

/// First answer of `goal` on a private engine.
pub(crate) fn first_answer(e: &Engine, template: &Term, goal: &Term) -> Result<Option<Term>, Exception> {
    let pair = e.copy_out(&Term::compound("-", vec![goal.clone(), template.clone()]))?;
    let mut inner = Engine::new(e.runtime());
    inner.load(&pair.args()[0], &pair.args()[1]);
    e.inherit_assumptions(&mut inner)?;
    inner.ctl = e.ctl.clone();
    inner.ask().map_err(|err| Exception(err.ball()))
}

fn b_findall(e: &mut Engine, a: &[Term]) -> Res {
    let answers = all_answers(e, &a[0], &a[1])?;
    let items: Vec<Term> = answers.iter().map(|t| e.import(t)).collect();
    let list = Term::list(items);
    e.unify_then(&a[2], &list, &a[3])
}

fn b_catch(e: &mut Engine, a: &[Term]) -> Res {
    let h = e.choice_height();
    e.push_catch(a[1].clone(), a[2].clone(), k(a));
    let exit = Term::compound("$catch_exit", vec![Term::Int(h as i64), k(a)]);
    Ok(Flow::Goal(e.expand(&a[0], exit, &Term::Int(h as i64 + 1))?))
}

fn b_catch_exit(e: &mut Engine, a: &[Term]) -> Res {
    let h = height_of(e, &a[0])?;
    e.catch_exit(h);
    go(a)
}

fn b_throw(e: &mut Engine, a: &[Term]) -> Res {
    if e.walk(&a[0]).is_var() {
        return Err(Exception::instantiation());
    }
    Err(Exception(e.copy_out(&a[0])?))
}

fn counter(e: &mut Engine, var: &Term, lo: i64, hi: i64, cont: Term) -> Res {
    match e.walk(var) {
        Term::Int(i) => Ok(if lo <= i && i <= hi { Flow::Goal(cont) } else { Flow::Fail }),
        Term::Var(_) => {
            if lo > hi {
                return Ok(Flow::Fail);
            }
            if lo < hi {
                e.push_counter(var.clone(), lo + 1, hi, cont.clone());
            }
            e.unify_then(var, &Term::Int(lo), &cont)
        }
        other => Err(e.type_error("integer", &other)),
    }
}

/// `for(I, Lo, Hi)`
fn b_for(e: &mut Engine, a: &[Term]) -> Res {
    let lo = int_arg(e, &a[1])?;
    let hi = int_arg(e, &a[2])?;
    counter(e, &a[0], lo, hi, k(a))
}

/// `between(Lo, Hi, I)`
fn b_between(e: &mut Engine, a: &[Term]) -> Res {
    let lo = int_arg(e, &a[0])?;
    let hi = int_arg(e, &a[1])?;
    counter(e, &a[2], lo, hi, k(a))
}

// ------------------------------------------------------------ comparison

fn b_unify(e: &mut Engine, a: &[Term]) -> Res {
    e.unify_then(&a[0], &a[1], &a[2])
}

fn b_not_unify(e: &mut Engine, a: &[Term]) -> Res {
    let pair = e.copy_out(&Term::compound("-", vec![a[0].clone(), a[1].clone()]))?;
    test(!unifiable(&pair.args()[0], &pair.args()[1]), a)
}

fn b_identical(e: &mut Engine, a: &[Term]) -> Res {
    test(e.identical(&a[0], &a[1]), a)
}

fn b_not_identical(e: &mut Engine, a: &[Term]) -> Res {
    test(!e.identical(&a[0], &a[1]), a)
}

fn b_order_lt(e: &mut Engine, a: &[Term]) -> Res {
    test(compare(e, &a[0], &a[1]) == Ordering::Less, a)
}

fn b_order_gt(e: &mut Engine, a: &[Term]) -> Res {
    test(compare(e, &a[0], &a[1]) == Ordering::Greater, a)
}

fn b_order_le(e: &mut Engine, a: &[Term]) -> Res {
    test(compare(e, &a[0], &a[1]) != Ordering::Greater, a)
}

fn b_order_ge(e: &mut Engine, a: &[Term]) -> Res {
    test(compare(e, &a[0], &a[1]) != Ordering::Less, a)
}

fn b_compare(e: &mut Engine, a: &[Term]) -> Res {
    let o = match compare(e, &a[1], &a[2]) {
        Ordering::Less => "<",
        Ordering::Equal => "=",
        Ordering::Greater => ">",
    };
    e.unify_then(&a[0], &Term::atom(o), &a[3])
}

// ------------------------------------------------------------ arithmetic

fn b_is(e: &mut Engine, a: &[Term]) -> Res {
    let v = eval(e, &a[1])?;
    e.unify_then(&a[0], &Term::Int(v), &a[2])
}

fn arith_cmp(e: &mut Engine, a: &[Term], ok: fn(Ordering) -> bool) -> Res {
    let x = eval(e, &a[0])?;
    let y = eval(e, &a[1])?;
    test(ok(x.cmp(&y)), a)
}

fn b_lt(e: &mut Engine, a: &[Term]) -> Res {
    arith_cmp(e, a, |o| o == Ordering::Less)
}

fn b_gt(e: &mut Engine, a: &[Term]) -> Res {
    arith_cmp(e, a, |o| o == Ordering::Greater)
}

fn b_le(e: &mut Engine, a: &[Term]) -> Res {
    arith_cmp(e, a, |o| o != Ordering::Greater)
}

fn b_ge(e: &mut Engine, a: &[Term]) -> Res {
    arith_cmp(e, a, |o| o != Ordering::Less)
}

fn b_eq(e: &mut Engine, a: &[Term]) -> Res {
    arith_cmp(e, a, |o| o == Ordering::Equal)
}

fn b_ne(e: &mut Engine, a: &[Term]) -> Res {
    arith_cmp(e, a, |o| o != Ordering::Equal)
}

fn b_succ(e: &mut Engine, a: &[Term]) -> Res {
    match e.walk(&a[0]) {
        Term::Int(x) => e.unify_then(&a[1], &Term::Int(x + 1), &a[2]),
        _ => {
            let y = int_arg(e, &a[1])?;
            if y <= 0 {
                return Ok(Flow::Fail);
            }
            e.unify_then(&a[0], &Term::Int(y - 1), &a[2])
        }
    }
}

// ------------------------------------------------------------ types

fn b_var(e: &mut Engine, a: &[Term]) -> Res {
    test(e.walk(&a[0]).is_var(), a)
}

fn b_nonvar(e: &mut Engine, a: &[Term]) -> Res {
    test(!e.walk(&a[0]).is_var(), a)
}

fn b_atom(e: &mut Engine, a: &[Term]) -> Res {
    test(matches!(e.walk(&a[0]), Term::Atom(_)), a)
}

fn b_integer(e: &mut Engine, a: &[Term]) -> Res {
    test(matches!(e.walk(&a[0]), Term::Int(_)), a)
}

fn b_atomic(e: &mut Engine, a: &[Term]) -> Res {
    test(matches!(e.walk(&a[0]), Term::Atom(_) | Term::Int(_)), a)
}

fn b_compound(e: &mut Engine, a: &[Term]) -> Res {
    test(matches!(e.walk(&a[0]), Term::Struct(_)), a)
}

fn b_callable(e: &mut Engine, a: &[Term]) -> Res {
    test(matches!(e.walk(&a[0]), Term::Atom(_) | Term::Struct(_)), a)
}

fn b_is_list(e: &mut Engine, a: &[Term]) -> Res {
    test(list_items(e, &a[0]).is_some(), a)
}

fn b_ground(e: &mut Engine, a: &[Term]) -> Res {
    test(e.resolve(&a[0])?.is_ground(), a)
}

// ------------------------------------------------------------ terms

fn b_functor(e: &mut Engine, a: &[Term]) -> Res {
    let t = e.walk(&a[0]);
    match &t {
        Term::Var(_) => {
            let name = e.walk(&a[1]);
            let n = int_arg(e, &a[2])?;
            let built = if n == 0 {
                name
            } else {
                let f = match name {
                    Term::Atom(f) => f,
                    Term::Var(_) => return Err(Exception::instantiation()),
                    other => return Err(e.type_error("atom", &other)),
                };
                let args = (0..n).map(|_| e.fresh_var()).collect();
                Term::compound(f, args)
            };
            e.unify_then(&t, &built, &a[3])
        }
        Term::Struct(c) => {
            let (name, n) = (Term::Atom(c.name.clone()), Term::Int(c.args.len() as i64));
            if e.unify(&a[1], &name) {
                e.unify_then(&a[2], &n, &a[3])
            } else {
                Ok(Flow::Fail)
            }
        }
        atomic => {
            if e.unify(&a[1], atomic) {
                e.unify_then(&a[2], &Term::Int(0), &a[3])
            } else {
                Ok(Flow::Fail)
            }
        }
    }
}

fn b_arg(e: &mut Engine, a: &[Term]) -> Res {
    let n = int_arg(e, &a[0])?;
    let t = e.walk(&a[1]);
    let args = t.args();
    if args.is_empty() {
        return Err(e.type_error("compound", &t));
    }
    if n < 1 || n as usize > args.len() {
        return Ok(Flow::Fail);
    }
    let x = args[n as usize - 1].clone();
    e.unify_then(&a[2], &x, &a[3])
}

fn b_univ(e: &mut Engine, a: &[Term]) -> Res {
    let t = e.walk(&a[0]);
    match &t {
        Term::Var(_) => {
            let items = list_items(e, &a[1]).ok_or_else(Exception::instantiation)?;
            let (head, rest) = items.split_first().ok_or_else(|| Exception::atom("domain_error"))?;
            let head = e.walk(head);
            let built = if rest.is_empty() { head } else { Term::compound(atom_arg(e, &head)?, rest.to_vec()) };
            e.unify_then(&t, &built, &a[2])
        }
        Term::Struct(c) => {
            let mut items = vec![Term::Atom(c.name.clone())];
            items.extend(c.args.iter().cloned());
            e.unify_then(&a[1], &Term::list(items), &a[2])
        }
        atomic => e.unify_then(&a[1], &Term::list(vec![atomic.clone()]), &a[2]),
    }
}

fn b_copy_term(e: &mut Engine, a: &[Term]) -> Res {
    let c = e.copy_out(&a[0])?;
    let fresh = e.import(&c);
    e.unify_then(&a[1], &fresh, &a[2])
}

fn b_length(e: &mut Engine, a: &[Term]) -> Res {
    let mut n = 0i64;
    let mut cur = e.walk(&a[0]);
    while cur.is_struct(".", 2) {
        n += 1;
        cur = e.walk(&cur.args()[1]);
    }
    match &cur {
        Term::Atom(x) if x.as_str() == "[]" => e.unify_then(&a[1], &Term::Int(n), &a[2]),
        Term::Var(_) => {
            let want = match e.walk(&a[1]) {
                Term::Int(w) => w,
                Term::Var(_) => return Err(Exception::instantiation()),
                other => return Err(e.type_error("integer", &other)),
            };
            if want < n {
                return Ok(Flow::Fail);
            }
            let items = (n..want).map(|_| e.fresh_var()).collect();
            e.unify_then(&cur, &Term::list(items), &a[2])
        }
        _ => Ok(Flow::Fail),
    }
}

fn text_of(e: &Engine, t: &Term) -> Result<String, Exception> {
    match e.walk(t) {
        Term::Atom(x) => Ok(x.as_str().to_string()),
        Term::Int(i) => Ok(i.to_string()),
        Term::Var(_) => Err(Exception::instantiation()),
        other => Err(e.type_error("atomic", &other)),
    }
}

fn codes_text(e: &Engine, t: &Term) -> Result<String, Exception> {
    let items = list_items(e, t).ok_or_else(Exception::instantiation)?;
    let mut s = String::new();
    for c in items {
        match e.walk(&c) {
            Term::Int(i) => s.push(char::from_u32(i as u32).ok_or_else(|| Exception::atom("representation_error"))?),
            Term::Atom(x) if x.chars().count() == 1 => s.push_str(x.as_str()),
            Term::Var(_) => return Err(Exception::instantiation()),
            other => return Err(e.type_error("character_code", &other)),
        }
    }
    Ok(s)
}

fn b_atom_codes(e: &mut Engine, a: &[Term]) -> Res {
    if e.walk(&a[0]).is_var() {
        let s = codes_text(e, &a[1])?;
        return e.unify_then(&a[0], &Term::atom(&s), &a[2]);
    }
    let s = text_of(e, &a[0])?;
    let codes = Term::list(s.chars().map(|c| Term::Int(c as i64)).collect());
    e.unify_then(&a[1], &codes, &a[2])
}

fn b_atom_chars(e: &mut Engine, a: &[Term]) -> Res {
    if e.walk(&a[0]).is_var() {
        let s = codes_text(e, &a[1])?;
        return e.unify_then(&a[0], &Term::atom(&s), &a[2]);
    }
    let s = text_of(e, &a[0])?;
    let chars = Term::list(s.chars().map(|c| Term::atom(&c.to_string())).collect());
    e.unify_then(&a[1], &chars, &a[2])
}

fn b_atom_length(e: &mut Engine, a: &[Term]) -> Res {
    let s = text_of(e, &a[0])?;
    e.unify_then(&a[1], &Term::Int(s.chars().count() as i64), &a[2])
}

fn b_atom_concat(e: &mut Engine, a: &[Term]) -> Res {
    let x = text_of(e, &a[0])?;
    let y = text_of(e, &a[1])?;
    e.unify_then(&a[2], &Term::atom(&format!("{x}{y}")), &a[3])
}

fn b_number_codes(e: &mut Engine, a: &[Term]) -> Res {
    if e.walk(&a[0]).is_var() {
        let s = codes_text(e, &a[1])?;
        let n: i64 = s.trim().parse().map_err(|_| Exception::of("syntax_error", vec![Term::atom("illegal_number")]))?;
        return e.unify_then(&a[0], &Term::Int(n), &a[2]);
    }
    let n = int_arg(e, &a[0])?;
    let codes = Term::list(n.to_string().chars().map(|c| Term::Int(c as i64)).collect());
    e.unify_then(&a[1], &codes, &a[2])
}

fn b_term_to_atom(e: &mut Engine, a: &[Term]) -> Res {
    let t = e.walk(&a[0]);
    if t.is_var() {
        let s = text_of(e, &a[1])?;
        let parsed =
            parse_term(&s).map_err(|err| Exception::of("syntax_error", vec![Term::Int(err.position as i64)]))?;
        let fresh = e.import(&parsed);
        return e.unify_then(&t, &fresh, &a[2]);
    }
    let s = canonical_text(&e.resolve(&t)?);
    e.unify_then(&a[1], &Term::atom(&s), &a[2])
}

fn sorted(e: &mut Engine, a: &[Term], dedup: bool) -> Res {
    let mut items = list_items(e, &a[0]).ok_or_else(Exception::instantiation)?;
    items.sort_by(|x, y| compare(e, x, y));
    if dedup {
        items.dedup_by(|x, y| compare(e, x, y) == Ordering::Equal);
    }
    e.unify_then(&a[1], &Term::list(items), &a[2])
}

fn b_sort(e: &mut Engine, a: &[Term]) -> Res {
    sorted(e, a, true)
}

fn b_msort(e: &mut Engine, a: &[Term]) -> Res {
    sorted(e, a, false)
}

// ------------------------------------------------------------ output

pub(crate) fn emit_text(e: &Engine, text: &str) {
    let rt = e.runtime();
    rt.console.write(text, &rt.events);
}

fn show(e: &Engine, t: &Term, quoted: bool) -> Result<String, Exception> {
    let r = e.resolve(t)?;
    let mut w = if quoted { TextWriter::canonical() } else { TextWriter::plain() };
    Ok(w.text(&r))
}

fn b_write(e: &mut Engine, a: &[Term]) -> Res {
    let s = show(e, &a[0], false)?;
    emit_text(e, &s);
    go(a)
}

fn b_writeq(e: &mut Engine, a: &[Term]) -> Res {
    let s = show(e, &a[0], true)?;
    emit_text(e, &s);
    go(a)
}

fn b_println(e: &mut Engine, a: &[Term]) -> Res {
    let s = show(e, &a[0], false)?;
    emit_text(e, &format!("{s}\n"));
    go(a)
}

fn b_nl(e: &mut Engine, a: &[Term]) -> Res {
    emit_text(e, "\n");
    go(a)
}

fn b_tab(e: &mut Engine, a: &[Term]) -> Res {
    let n = int_arg(e, &a[0])?.max(0) as usize;
    emit_text(e, &" ".repeat(n));
    go(a)
}

// ------------------------------------------------------------ database

fn to_bin_clause(e: &Engine, t: &Term) -> Result<crate::binarizer::BinClause, Exception> {
    let c = e.copy_out(t)?;
    let bad = |_| e.type_error("callable", t);
    match classify(&c).map_err(bad)? {
        ProgramItem::Clause(cl) => binarize_clause(&cl).map_err(bad),
        ProgramItem::Binary(b) => Ok(b),
        ProgramItem::Directive(_) => Err(e.type_error("callable", t)),
    }
}

fn b_assertz(e: &mut Engine, a: &[Term]) -> Res {
    let c = to_bin_clause(e, &a[0])?;
    e.runtime().store.assert_clause(Position::Back, c);
    go(a)
}

fn b_asserta(e: &mut Engine, a: &[Term]) -> Res {
    let c = to_bin_clause(e, &a[0])?;
    e.runtime().store.assert_clause(Position::Front, c);
    go(a)
}

fn b_retract(e: &mut Engine, a: &[Term]) -> Res {
    let pattern = e.copy_out(&a[0])?;
    match e.runtime().store.retract(&pattern) {
        None => Ok(Flow::Fail),
        Some(form) => {
            let form = e.import(&form);
            let t = e.walk(&a[0]);
            let want = if t.is_struct(":-", 2) { t } else { Term::compound(":-", vec![t, Term::atom("true")]) };
            e.unify_then(&want, &form, &a[1])
        }
    }
}

/// `stats(F/N, Tier, Temp, Calls, Updates)`, N being the binarized arity.
fn b_stats(e: &mut Engine, a: &[Term]) -> Res {
    let pi = e.resolve(&a[0])?;
    let key = PredKey::from_indicator(&pi).ok_or_else(|| e.type_error("predicate_indicator", &pi))?;
    match e.runtime().store.stats(&key) {
        None => Ok(Flow::Fail),
        Some(view) => {
            let t = e.import(&view.to_term());
            let want = Term::compound("stats", a[..5].to_vec());
            e.unify_then(&want, &t, &a[5])
        }
    }
}

// ------------------------------------------------------------ assumptions

fn b_assumeal(e: &mut Engine, a: &[Term]) -> Res {
    e.assume_linear(&a[0]);
    go(a)
}

fn b_assumed(e: &mut Engine, a: &[Term]) -> Res {
    e.scan_assumptions(&a[0], k(a), usize::MAX)
}

/// `A =>> G`: `A` is usable only while proving `G`.
fn b_assume_scoped(e: &mut Engine, a: &[Term]) -> Res {
    let id = e.assume_scoped(&a[0])?;
    let exit = Term::compound("$unassume", vec![Term::Int(id as i64), k(a)]);
    let cut = level(e);
    Ok(Flow::Goal(e.expand(&a[1], exit, &cut)?))
}

fn b_unassume(e: &mut Engine, a: &[Term]) -> Res {
    let id = int_arg(e, &a[0])?;
    e.unassume(id as u64);
    go(a)
}

// ------------------------------------------------------------ engines

fn engine_err(err: super::EngineError) -> Exception {
    Exception(err.ball())
}

fn b_create_engine(e: &mut Engine, a: &[Term]) -> Res {
    let h = e.runtime().create_engine(None);
    e.unify_then(&a[0], &Term::Int(h), &a[1])
}

fn b_create_engine_cap(e: &mut Engine, a: &[Term]) -> Res {
    let cap = Capacity {
        heap: int_arg(e, &a[0])?.max(1) as usize,
        stack: int_arg(e, &a[1])?.max(1) as usize,
        trail: int_arg(e, &a[2])?.max(1) as usize,
    };
    let h = e.runtime().create_engine(Some(cap));
    e.unify_then(&a[3], &Term::Int(h), &a[4])
}

fn b_load_engine(e: &mut Engine, a: &[Term]) -> Res {
    let h = int_arg(e, &a[0])?;
    let pair = e.copy_out(&Term::compound("-", vec![a[1].clone(), a[2].clone()]))?;
    e.runtime().load_engine(h, &pair.args()[0], &pair.args()[1]).map_err(engine_err)?;
    go(a)
}

fn b_ask_engine(e: &mut Engine, a: &[Term]) -> Res {
    let h = int_arg(e, &a[0])?;
    match e.runtime().ask_engine(h).map_err(engine_err)? {
        None => Ok(Flow::Fail),
        Some(t) => {
            let t = e.import(&t);
            e.unify_then(&a[1], &t, &a[2])
        }
    }
}

fn b_destroy_engine(e: &mut Engine, a: &[Term]) -> Res {
    let h = int_arg(e, &a[0])?;
    e.runtime().destroy_engine(h).map_err(engine_err)?;
    go(a)
}

fn b_ask_thread(e: &mut Engine, a: &[Term]) -> Res {
    let h = int_arg(e, &a[0])?;
    let rt = e.runtime().clone();
    let t = rt.ask_thread(h).map_err(engine_err)?;
    e.unify_then(&a[1], &Term::Int(t), &a[2])
}

fn b_thread_join(e: &mut Engine, a: &[Term]) -> Res {
    let t = int_arg(e, &a[0])?;
    e.runtime().thread_join(t).map_err(engine_err)?;
    go(a)
}

fn b_thread_suspend(e: &mut Engine, a: &[Term]) -> Res {
    let t = int_arg(e, &a[0])?;
    e.runtime().thread_ctl(t).map_err(engine_err)?.suspend();
    go(a)
}

fn b_thread_resume(e: &mut Engine, a: &[Term]) -> Res {
    let t = int_arg(e, &a[0])?;
    e.runtime().thread_ctl(t).map_err(engine_err)?.resume();
    go(a)
}

fn b_thread_cancel(e: &mut Engine, a: &[Term]) -> Res {
    let t = int_arg(e, &a[0])?;
    e.runtime().thread_ctl(t).map_err(engine_err)?.cancel();
    go(a)
}

/// `synchronize_on(Monitor, Goal, Answer)`: first answer of `Goal` while
/// holding the monitor.
fn b_synchronize_on(e: &mut Engine, a: &[Term]) -> Res {
    let m = e.resolve(&a[0])?;
    if !m.is_ground() {
        return Err(Exception::instantiation());
    }
    let key = canonical_text(&m);
    let rt = e.runtime().clone();
    rt.enter_monitor(&key);
    let r = first_answer(e, &a[2], &a[1]);
    rt.exit_monitor(&key);
    match r? {
        None => Ok(Flow::Fail),
        Some(t) => {
            let t = e.import(&t);
            e.unify_then(&a[2], &t, &a[3])
        }
    }
}

fn b_sleep(e: &mut Engine, a: &[Term]) -> Res {
    let s = int_arg(e, &a[0])?.max(0) as u64;
    std::thread::sleep(Duration::from_secs(s));
    go(a)
}

fn b_sleep_ms(e: &mut Engine, a: &[Term]) -> Res {
    let s = int_arg(e, &a[0])?.max(0) as u64;
    std::thread::sleep(Duration::from_millis(s));
    go(a)
}

// ------------------------------------------------------------ tuple space

fn b_out(e: &mut Engine, a: &[Term]) -> Res {
    let t = e.copy_out(&a[0])?;
    e.runtime().space.out(&t)?;
    go(a)
}

fn receive(e: &mut Engine, a: &[Term], got: Option<Term>) -> Res {
    match got {
        None => Ok(Flow::Fail),
        Some(t) => {
            let t = e.import(&t);
            e.unify_then(&a[0], &t, &a[1])
        }
    }
}

fn b_in(e: &mut Engine, a: &[Term]) -> Res {
    let p = e.copy_out(&a[0])?;
    let got = e.runtime().space.take(&p);
    receive(e, a, got)
}

fn b_rd(e: &mut Engine, a: &[Term]) -> Res {
    let p = e.copy_out(&a[0])?;
    let got = e.runtime().space.read(&p);
    receive(e, a, got)
}

fn b_inp(e: &mut Engine, a: &[Term]) -> Res {
    let p = e.copy_out(&a[0])?;
    let got = e.runtime().space.try_take(&p);
    receive(e, a, got)
}

fn b_rdp(e: &mut Engine, a: &[Term]) -> Res {
    let p = e.copy_out(&a[0])?;
    let got = e.runtime().space.try_read(&p);
    receive(e, a, got)
}

fn b_all(e: &mut Engine, a: &[Term]) -> Res {
    let p = e.copy_out(&a[0])?;
    let items = e.runtime().space.all(&p);
    let list = Term::list(items.iter().map(|t| e.import(t)).collect());
    e.unify_then(&a[1], &list, &a[2])
}
