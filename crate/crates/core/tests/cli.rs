use std::io::Write;
use std::process::{Command, Output, Stdio};

use contina::cli::{repl, run_goal, EXIT_FAILED, EXIT_OK, EXIT_USAGE};
use contina::engine::{Runtime, RuntimeConfig};

const NREV: &str = "app([], Ys, Ys).
app([X|Xs], Ys, [X|Zs]) :- app(Xs, Ys, Zs).
nrev([], []).
nrev([X|Xs], Zs) :- nrev(Xs, Ys), app(Ys, [X], Zs).
";

fn contina(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_contina")).args(args).env_remove("CONTINA_MASTER").output().unwrap()
}

fn program(src: &str) -> tempfile::NamedTempFile {
    let mut f = tempfile::Builder::new().suffix(".pl").tempfile().unwrap();
    f.write_all(src.as_bytes()).unwrap();
    f
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn run_prints_canonical_bindings() {
    let f = program(NREV);
    let o = contina(&["run", f.path().to_str().unwrap(), "--goal", "nrev([1,2,3],R)"]);
    assert_eq!(o.status.code(), Some(EXIT_OK));
    assert_eq!(stdout(&o), "R=[3,2,1]\n");
}

#[test]
fn run_all_and_failure_codes() {
    let f = program(NREV);
    let path = f.path().to_str().unwrap();
    let o = contina(&["run", path, "--goal", "app(A, B, [1])", "--all"]);
    assert_eq!(stdout(&o), "A=[]\nB=[1]\n;\nA=[1]\nB=[]\n");
    let o = contina(&["run", path, "--goal", "nrev([1], [2])"]);
    assert_eq!(o.status.code(), Some(EXIT_FAILED));
    assert_eq!(stdout(&o), "no\n");
    let o = contina(&["run", path, "--goal", "nrev([1], R"]);
    assert_eq!(o.status.code(), Some(EXIT_USAGE));
}

#[test]
fn bad_arguments_are_usage_errors() {
    assert_eq!(contina(&["run", "x.pl", "--no-such-flag"]).status.code(), Some(EXIT_USAGE));
    assert_eq!(contina(&["frobnicate"]).status.code(), Some(EXIT_USAGE));
    assert_eq!(contina(&["run", "/nonexistent/file.pl"]).status.code(), Some(EXIT_USAGE));
}

#[test]
fn repl_streams_answers() {
    let rt = Runtime::new(RuntimeConfig::default());
    rt.consult_str(NREV).unwrap();
    let mut out = Vec::new();
    let input = "app(A, B, [1]).\n;\n;\nnrev([a,b], R).\nhalt.\n";
    assert_eq!(repl(&rt, input.as_bytes(), &mut out).unwrap(), EXIT_OK);
    assert_eq!(String::from_utf8(out).unwrap(), "A=[]\nB=[1]\nA=[1]\nB=[]\nno\nR=[b,a]\n");
}

#[test]
fn repl_and_run_agree() {
    let rt = Runtime::new(RuntimeConfig::default());
    rt.consult_str(NREV).unwrap();
    for goal in ["nrev([1,2,3,4], R)", "app(X, [c], [a,b,c])", "app([f(Y)], [Y], Z)"] {
        let mut a = Vec::new();
        run_goal(&rt, goal, false, &mut a).unwrap();
        let mut b = Vec::new();
        repl(&rt, format!("{goal}\n").as_bytes(), &mut b).unwrap();
        assert_eq!(a, b, "{goal}");
    }
}

#[test]
fn repl_binary_reads_standard_input() {
    let f = program(NREV);
    let mut child = Command::new(env!("CARGO_BIN_EXE_contina"))
        .args(["repl", "--load", f.path().to_str().unwrap()])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(b"nrev([x,y], R).\n").unwrap();
    let o = child.wait_with_output().unwrap();
    assert_eq!(stdout(&o), "R=[y,x]\n");
}

#[test]
fn demo_mobility_transcript() {
    let o = contina(&["demo", "mobility"]);
    assert_eq!(o.status.code(), Some(EXIT_OK));
    let out = stdout(&o);
    let lines: Vec<&str> = out.lines().collect();
    let pos = |l: &str| lines.iter().position(|x| *x == l).unwrap_or_else(|| panic!("{l} missing in {out}"));
    assert!(pos("[server] on_server") < pos("[client] back"));
    assert!(pos("[client] back") < pos("[client] X=1"));
}

#[test]
fn demo_recompile_promotes_and_demotes() {
    let o = contina(&["demo", "recompile"]);
    let out = stdout(&o);
    assert_eq!(o.status.code(), Some(EXIT_OK));
    let events: Vec<&str> = out.lines().filter(|l| l.starts_with("  ")).map(str::trim).collect();
    assert_eq!(events, ["promote color/2 indexed", "demote color/2 interpreted", "promote color/2 indexed"]);
    assert!(out.ends_with("Cs=[red,green,blue]\n"), "{out}");
}

#[test]
fn demo_linda_conserves_items() {
    let o = contina(&["demo", "linda", "--items", "20"]);
    let out = stdout(&o);
    assert_eq!(out.lines().filter(|l| l.starts_with("got(")).count(), 20);
    assert!(out.ends_with("left=0\n"));
}
