#![allow(dead_code)]

use std::sync::Arc;

use contina::binarizer::{classify, compose, Clause, ProgramItem};
use contina::engine::{Engine, Runtime, RuntimeConfig};
use contina::store::TierPolicy;
use contina::term::{canonical_text, is_variant, parse_term, Parser, Term};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Program {
    pub name: String,
    pub source: String,
    pub queries: Vec<String>,
}

pub fn parse_program(src: &str) -> Vec<Clause> {
    let mut p = Parser::new(src);
    let mut out = Vec::new();
    while let Some(r) = p.next_clause() {
        let (t, _) = r.expect("program parses");
        match classify(&t).expect("well-formed clause") {
            ProgramItem::Clause(c) => out.push(c),
            other => panic!("unexpected program item {other:?}"),
        }
    }
    out
}

/// Answers of `query` by depth-first LD derivation built from `compose` alone.
/// `None` if the step budget runs out.
pub fn ld_answers(program: &[Clause], query: &Term, budget: usize) -> Option<Vec<String>> {
    let mut stack = vec![Clause::new(query.clone(), vec![query.clone()])];
    let mut out = Vec::new();
    let mut steps = 0;
    while let Some(c) = stack.pop() {
        if c.body.is_empty() {
            out.push(render(&c.head));
            continue;
        }
        steps += 1;
        if steps > budget {
            return None;
        }
        let next: Vec<Clause> = program.iter().filter_map(|p| compose(&c, p)).collect();
        stack.extend(next.into_iter().rev());
    }
    Some(out)
}

/// Canonical text of `t` with variables renumbered by first occurrence.
pub fn render(t: &Term) -> String {
    canonical_text(&t.normalize().0)
}

/// Occurs check on: answers must be finite terms to be compared as text.
pub fn runtime_for(src: &str) -> Arc<Runtime> {
    let rt = Runtime::new(RuntimeConfig { occurs_check: true, ..RuntimeConfig::default() });
    rt.consult_str(src).expect("program loads");
    rt
}

/// Every answer of `goal`, as instances of the goal, in engine order.
pub fn engine_answers(rt: &Arc<Runtime>, goal: &Term) -> Vec<String> {
    let mut e = Engine::new(rt);
    e.load(goal, goal);
    let mut out = Vec::new();
    while let Some(a) = e.ask().expect("query runs") {
        out.push(render(&a));
    }
    out
}

pub fn engine_answers_under(src: &str, policy: TierPolicy, queries: &[String]) -> Vec<Vec<String>> {
    let rt = runtime_for(src);
    rt.store.set_policy(policy);
    queries.iter().map(|q| engine_answers(&rt, &parse_term(q).unwrap())).collect()
}

pub fn sorted(mut v: Vec<String>) -> Vec<String> {
    v.sort();
    v
}

pub fn handcrafted() -> Vec<Program> {
    let p = |name: &str, source: &str, queries: &[&str]| Program {
        name: name.into(),
        source: source.into(),
        queries: queries.iter().map(|q| q.to_string()).collect(),
    };
    vec![
        p(
            "app",
            "app([], Ys, Ys).\napp([X|Xs], Ys, [X|Zs]) :- app(Xs, Ys, Zs).",
            &["app(X, Y, [a,b,c])", "app([a], [b], Z)", "app(X, [c], [a,b,c])", "app([a|T], Y, [a,b])"],
        ),
        p(
            "nrev",
            "app([], Ys, Ys).\napp([X|Xs], Ys, [X|Zs]) :- app(Xs, Ys, Zs).\nnrev([], []).\nnrev([X|Xs], Zs) :- nrev(Xs, Ys), app(Ys, [X], Zs).",
            &["nrev([a,b,c], R)", "nrev([], R)", "nrev([1,2,3,4,5,6], R)"],
        ),
        p(
            "mem",
            "mem(X, [X|_]).\nmem(X, [_|T]) :- mem(X, T).",
            &["mem(X, [a,b,c])", "mem(b, [a,b,c,b])", "mem(z, [a,b])", "mem(f(Y), [a,f(1),g(2),f(3)])"],
        ),
        p(
            "family",
            "parent(ann, bob).\nparent(bob, cid).\nparent(bob, dan).\nparent(cid, eve).\n\
             grand(X, Z) :- parent(X, Y), parent(Y, Z).\n\
             anc(X, Y) :- parent(X, Y).\nanc(X, Y) :- parent(X, Z), anc(Z, Y).",
            &["grand(ann, W)", "grand(W, eve)", "anc(ann, W)", "anc(W, eve)", "anc(X, Y)"],
        ),
        p(
            "sel",
            "sel(X, [X|T], T).\nsel(X, [H|T], [H|R]) :- sel(X, T, R).",
            &["sel(X, [a,b,c], R)", "sel(b, L, [a,c])"],
        ),
        p(
            "perm",
            "sel(X, [X|T], T).\nsel(X, [H|T], [H|R]) :- sel(X, T, R).\nperm([], []).\nperm(L, [X|P]) :- sel(X, L, R), perm(R, P).",
            &["perm([a,b,c], P)", "perm([1,2], P)"],
        ),
        p(
            "peano",
            "add(0, Y, Y).\nadd(s(X), Y, s(Z)) :- add(X, Y, Z).\nmul(0, _, 0).\nmul(s(X), Y, Z) :- mul(X, Y, W), add(W, Y, Z).",
            &["add(s(s(0)), s(0), Z)", "add(X, Y, s(s(0)))", "mul(s(s(0)), s(s(s(0))), Z)"],
        ),
        p(
            "path",
            "edge(a, b).\nedge(b, c).\nedge(a, c).\nedge(c, d).\n\
             path(X, Y) :- edge(X, Y).\npath(X, Y) :- edge(X, Z), path(Z, Y).",
            &["path(a, Y)", "path(X, d)", "path(a, d)", "path(d, X)"],
        ),
        p(
            "len",
            "len([], 0).\nlen([_|T], s(N)) :- len(T, N).",
            &["len([a,b,c], N)", "len(L, s(s(0)))"],
        ),
        p(
            "lastof",
            "lastof([X], X).\nlastof([_|T], X) :- lastof(T, X).",
            &["lastof([a,b,c], X)", "lastof([q], X)", "lastof([], X)"],
        ),
        p(
            "prefix",
            "app([], Ys, Ys).\napp([X|Xs], Ys, [X|Zs]) :- app(Xs, Ys, Zs).\n\
             prefix(P, L) :- app(P, _, L).\nsuffix(S, L) :- app(_, S, L).",
            &["prefix(P, [a,b,c])", "suffix(S, [a,b,c])", "prefix([a,b], [a,b,c])"],
        ),
        p(
            "coloring",
            "diff(r, g).\ndiff(r, b).\ndiff(g, r).\ndiff(g, b).\ndiff(b, r).\ndiff(b, g).\n\
             map(A, B, C) :- diff(A, B), diff(B, C), diff(A, C).",
            &["map(A, B, C)", "map(r, B, C)", "map(r, r, C)"],
        ),
        p(
            "parity",
            "even(0).\neven(s(N)) :- odd(N).\nodd(s(N)) :- even(N).",
            &["even(s(s(s(s(0)))))", "odd(s(s(0)))", "odd(s(s(s(0))))"],
        ),
        p(
            "subset",
            "subl([], []).\nsubl([X|T], [X|R]) :- subl(T, R).\nsubl([_|T], R) :- subl(T, R).",
            &["subl([a,b,c], S)", "subl([a,b], [b])"],
        ),
        p(
            "tree",
            "inside(X, node(_, X, _)).\ninside(X, node(L, _, _)) :- inside(X, L).\ninside(X, node(_, _, R)) :- inside(X, R).",
            &["inside(X, node(node(leaf, a, leaf), b, node(leaf, c, leaf)))", "inside(c, node(leaf, c, leaf))"],
        ),
    ]
}

const CONSTS: [&str; 3] = ["a", "b", "c"];
const VARS: [&str; 3] = ["X", "Y", "Z"];

fn arg(rng: &mut ChaCha8Rng, allow_struct: bool) -> String {
    match rng.gen_range(0..10) {
        0..=3 => CONSTS[rng.gen_range(0..CONSTS.len())].to_string(),
        4..=8 => VARS[rng.gen_range(0..VARS.len())].to_string(),
        _ if allow_struct => format!("f({})", arg(rng, false)),
        _ => VARS[rng.gen_range(0..VARS.len())].to_string(),
    }
}

fn atom_text(name: &str, args: &[String]) -> String {
    format!("{}({})", name, args.join(", "))
}

/// A definite program whose call graph is a DAG, so every derivation is finite.
/// At most 8 clauses. Queries call each predicate with fresh variables and with
/// a constant in front.
pub fn random_program(seed: u64) -> Program {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let preds = rng.gen_range(2..=4usize);
    let arities: Vec<usize> = (0..preds).map(|_| rng.gen_range(1..=2)).collect();
    let mut counts = vec![1usize; preds];
    let mut total = preds;
    let budget = rng.gen_range(preds..=8);
    while total < budget {
        counts[rng.gen_range(0..preds)] += 1;
        total += 1;
    }
    let mut lines = Vec::new();
    for i in 0..preds {
        for _ in 0..counts[i] {
            let head_args: Vec<String> = (0..arities[i]).map(|_| arg(&mut rng, true)).collect();
            let mut body = Vec::new();
            if i + 1 < preds {
                for _ in 0..rng.gen_range(0..=2) {
                    let j = rng.gen_range(i + 1..preds);
                    let args: Vec<String> = (0..arities[j]).map(|_| arg(&mut rng, true)).collect();
                    body.push(atom_text(&format!("p{j}"), &args));
                }
            }
            let head = atom_text(&format!("p{i}"), &head_args);
            if body.is_empty() {
                lines.push(format!("{head}."));
            } else {
                lines.push(format!("{head} :- {}.", body.join(", ")));
            }
        }
    }
    let mut queries = Vec::new();
    for (i, arity) in arities.iter().enumerate() {
        let vars: Vec<String> = (0..*arity).map(|k| format!("Q{k}")).collect();
        queries.push(atom_text(&format!("p{i}"), &vars));
        let mut first = vars.clone();
        first[0] = CONSTS[rng.gen_range(0..CONSTS.len())].to_string();
        queries.push(atom_text(&format!("p{i}"), &first));
    }
    Program { name: format!("random-{seed}"), source: lines.join("\n"), queries }
}

/// Result of checking one program: (queries compared, mismatches).
pub fn check_ld_equivalence(p: &Program) -> (usize, Vec<String>) {
    let clauses = parse_program(&p.source);
    let rt = runtime_for(&p.source);
    let mut bad = Vec::new();
    for q in &p.queries {
        let goal = parse_term(q).unwrap();
        let oracle = ld_answers(&clauses, &goal, 200_000).expect("oracle terminates");
        let engine = engine_answers(&rt, &goal);
        if sorted(oracle.clone()) != sorted(engine.clone()) {
            bad.push(format!("{}: {q}: oracle {oracle:?} engine {engine:?}", p.name));
        }
    }
    (p.queries.len(), bad)
}

/// The program's queries, plus each adjacent pair as a conjunction renamed apart.
pub fn capture_goals(p: &Program) -> Vec<Term> {
    let qs: Vec<Term> = p.queries.iter().map(|q| parse_term(q).unwrap()).collect();
    let mut out = qs.clone();
    for w in qs.windows(2) {
        let second = w[1].offset(w[0].var_span());
        out.push(Term::conjunction(vec![w[0].clone(), second]));
    }
    out
}

/// Captures `gs` with `call_with_cont(=(C))` and checks that `C` is a variant
/// of `gs` with the same answers.
pub fn capture_round_trip(rt: &Arc<Runtime>, gs: &Term) -> Result<(), String> {
    let c = Term::var(gs.var_span());
    let closure = Term::compound("=", vec![c.clone()]);
    let goal = Term::compound(
        "capture_cont_for",
        vec![Term::conjunction(vec![Term::compound("call_with_cont", vec![closure]), gs.clone()])],
    );
    let mut e = Engine::new(rt);
    e.load(&goal, &c);
    let captured = match e.ask() {
        Ok(Some(t)) => t,
        other => return Err(format!("capture of {} gave {other:?}", canonical_text(gs))),
    };
    if !is_variant(&captured, gs) {
        return Err(format!("captured {} from {}", canonical_text(&captured), canonical_text(gs)));
    }
    let direct = engine_answers(rt, gs);
    let replayed = engine_answers(rt, &captured);
    if direct != replayed {
        return Err(format!("{}: {direct:?} vs {replayed:?}", canonical_text(gs)));
    }
    Ok(())
}
