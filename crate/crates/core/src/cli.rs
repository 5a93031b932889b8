//! Command-line front end.

use std::ffi::OsString;
use std::io::{self, BufRead, BufReader, Write};
use std::process::{Child, Command, Stdio};
use std::sync::mpsc;
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use clap::{Parser, Subcommand};

use crate::engine::{EngineError, QueryError, Runtime, RuntimeConfig, Solution};
use crate::events::{Echo, Event};
use crate::node::{self, generate_password, NodeConfig};
use crate::term::{parse_term, Term};
use crate::wire::{self, Endpoint, Message};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NET: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "contina", version, about = "Mobile-continuation logic runtime")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Cmd,
}

#[derive(Subcommand, Debug)]
pub enum Cmd {
    /// Read queries from standard input.
    Repl {
        /// Program files to load first.
        #[arg(long)]
        load: Vec<String>,
        #[arg(long)]
        server: Option<String>,
        #[arg(long)]
        password: Option<String>,
    },
    /// Load a program and solve a goal.
    Run {
        file: String,
        #[arg(long)]
        goal: Option<String>,
        /// Print every answer instead of the first.
        #[arg(long)]
        all: bool,
        #[arg(long)]
        server: Option<String>,
        #[arg(long)]
        password: Option<String>,
    },
    /// Run a node.
    Serve {
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, default_value_t = 0)]
        port: u16,
        #[arg(long)]
        password: Option<String>,
        #[arg(long, env = "CONTINA_MASTER")]
        master: Option<String>,
        #[arg(long, default_value = "default")]
        channel: String,
        #[arg(long, default_value_t = 2)]
        servants: usize,
        #[arg(long)]
        strict_servant: bool,
        /// Use a fixed five second wait instead of the readiness handshake.
        #[arg(long)]
        fixed_sleep: bool,
        #[arg(long)]
        load: Vec<String>,
        /// Server used by `there` and the remote builtins.
        #[arg(long)]
        server: Option<String>,
    },
    /// Pull `todo(Task)` tuples from a node and run them here.
    Servant {
        #[arg(long)]
        target: String,
        #[arg(long)]
        strict_servant: bool,
        #[arg(long)]
        load: Vec<String>,
    },
    /// Run a registry node for `server_id/3` tuples.
    Master {
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, default_value_t = 0)]
        port: u16,
    },
    /// Scripted scenarios.
    Demo {
        #[command(subcommand)]
        which: Demo,
    },
}

#[derive(Subcommand, Debug)]
pub enum Demo {
    /// Move a computation to a server and bring its rest back.
    Mobility {
        /// Use this server instead of spawning one.
        #[arg(long)]
        server: Option<String>,
        #[arg(long)]
        password: Option<String>,
    },
    /// Show tier changes driven by updates and calls.
    Recompile,
    /// A producer and a consumer sharing a tuple space.
    Linda {
        #[arg(long, default_value_t = 5)]
        items: u32,
    },
}

#[derive(Debug)]
pub struct Failure(pub i32, pub String);

pub type CliResult = Result<i32, Failure>;

fn usage(msg: impl Into<String>) -> Failure {
    Failure(EXIT_USAGE, msg.into())
}

fn net(msg: impl Into<String>) -> Failure {
    Failure(EXIT_NET, msg.into())
}

/// Parses `argv` (including the program name) and runs it; returns the exit code.
pub fn main_with<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(Failure(code, msg)) => {
            eprintln!("error: {msg}");
            code
        }
    }
}

fn dispatch(cmd: Cmd) -> CliResult {
    match cmd {
        Cmd::Repl { load, server, password } => {
            let rt = client_runtime(server.as_deref(), password)?;
            load_all(&rt, &load)?;
            repl(&rt, io::stdin().lock(), &mut io::stdout())
        }
        Cmd::Run { file, goal, all, server, password } => {
            let rt = client_runtime(server.as_deref(), password)?;
            load_all(&rt, &[file])?;
            match goal {
                Some(g) => run_goal(&rt, &g, all, &mut io::stdout()),
                None => Ok(EXIT_OK),
            }
        }
        Cmd::Serve { host, port, password, master, channel, servants, strict_servant, fixed_sleep, load, server } => {
            let mut cfg = RuntimeConfig { echo_output: true, fixed_sleep, ..RuntimeConfig::default() };
            cfg.default_server = server.as_deref().map(endpoint).transpose()?;
            let rt = crate::runtime(cfg);
            rt.events.set_echo(Echo::Stderr);
            load_all(&rt, &load)?;
            let channel = parse_term(&channel).map_err(|e| usage(format!("bad channel: {}", e.message)))?;
            let master = master.as_deref().map(endpoint).transpose()?;
            let password = password.unwrap_or_else(|| {
                let pw = generate_password();
                eprintln!("password: {pw}");
                pw
            });
            let ncfg = NodeConfig {
                host,
                port,
                password: Some(password),
                master,
                channel,
                servants,
                strict_servant,
                announce: true,
            };
            let handle = node::start(&rt, ncfg).map_err(|e| net(e.to_string()))?;
            handle.wait();
            rt.space.close();
            Ok(EXIT_OK)
        }
        Cmd::Servant { target, strict_servant, load } => {
            let rt = crate::runtime(RuntimeConfig { echo_output: true, ..RuntimeConfig::default() });
            rt.events.set_echo(Echo::Stderr);
            load_all(&rt, &load)?;
            let target = endpoint(&target)?;
            node::servant(&rt, &target, strict_servant).map_err(|e| net(e.to_string()))?;
            Ok(EXIT_OK)
        }
        Cmd::Master { host, port } => {
            let rt = crate::runtime(RuntimeConfig::default());
            rt.events.set_echo(Echo::Stderr);
            let ncfg = NodeConfig { host, port, servants: 0, ..NodeConfig::default() };
            let handle = node::start(&rt, ncfg).map_err(|e| net(e.to_string()))?;
            handle.wait();
            Ok(EXIT_OK)
        }
        Cmd::Demo { which: Demo::Mobility { server, password } } => {
            demo_mobility(server.as_deref(), password, &mut io::stdout())
        }
        Cmd::Demo { which: Demo::Recompile } => demo_recompile(&mut io::stdout()),
        Cmd::Demo { which: Demo::Linda { items } } => demo_linda(items, &mut io::stdout()),
    }
}

fn endpoint(s: &str) -> Result<Endpoint, Failure> {
    Endpoint::parse(s).ok_or_else(|| usage(format!("expected HOST:PORT, got {s}")))
}

fn client_runtime(server: Option<&str>, password: Option<String>) -> Result<Arc<Runtime>, Failure> {
    let mut cfg = RuntimeConfig { echo_output: true, ..RuntimeConfig::default() };
    if let Some(s) = server {
        let mut ep = endpoint(s)?;
        ep.password = password.clone();
        cfg.default_server = Some(ep);
    }
    cfg.password = password;
    Ok(crate::runtime(cfg))
}

fn load_all(rt: &Arc<Runtime>, files: &[String]) -> Result<(), Failure> {
    for f in files {
        rt.consult_file(f).map_err(|e| usage(e.to_string()))?;
    }
    Ok(())
}

fn is_net_ball(ball: &Term) -> bool {
    ball.functor().is_some_and(|(n, _)| n.as_str() == "net_error")
}

fn query_failure(e: QueryError) -> Failure {
    match e {
        QueryError::Syntax(s) => usage(format!("syntax error at {}: {}", s.position, s.message)),
        QueryError::Engine(EngineError::Uncaught(ball)) if is_net_ball(&ball) => {
            net(format!("uncaught {}", crate::term::canonical_text(&ball)))
        }
        QueryError::Engine(err) => Failure(EXIT_FAILED, err.to_string()),
    }
}

fn print_solution(out: &mut dyn Write, s: &Solution) {
    let lines = s.lines();
    if lines.is_empty() {
        let _ = writeln!(out, "true");
    }
    for l in lines {
        let _ = writeln!(out, "{l}");
    }
}

/// Solves `goal`, printing the first answer (or all of them).
pub fn run_goal(rt: &Arc<Runtime>, goal: &str, all: bool, out: &mut dyn Write) -> CliResult {
    let mut q = rt.query(goal).map_err(query_failure)?;
    let mut found = 0;
    loop {
        match q.next() {
            Ok(Some(s)) => {
                if found > 0 {
                    let _ = writeln!(out, ";");
                }
                print_solution(out, &s);
                found += 1;
                if !all {
                    break;
                }
            }
            Ok(None) => break,
            Err(e) => return Err(query_failure(QueryError::Engine(e))),
        }
    }
    if found == 0 {
        let _ = writeln!(out, "no");
        return Ok(EXIT_FAILED);
    }
    let _ = out.flush();
    Ok(EXIT_OK)
}

/// Line-oriented interaction: a query prints its first answer, a line
/// holding only `;` asks for the next one.
pub fn repl(rt: &Arc<Runtime>, input: impl BufRead, out: &mut dyn Write) -> CliResult {
    let mut current: Option<crate::engine::Query> = None;
    let mut status = EXIT_OK;
    for line in input.lines() {
        let line = line.map_err(|e| usage(e.to_string()))?;
        let text = line.trim();
        if text.is_empty() {
            continue;
        }
        if text == "halt." || text == "halt" {
            break;
        }
        if text != ";" {
            match rt.query(text) {
                Ok(q) => current = Some(q),
                Err(e) => {
                    let _ = writeln!(out, "error: {e}");
                    status = EXIT_USAGE;
                    current = None;
                    continue;
                }
            }
        }
        let Some(q) = current.as_mut() else {
            let _ = writeln!(out, "no");
            continue;
        };
        match q.next() {
            Ok(Some(s)) => print_solution(out, &s),
            Ok(None) => {
                let _ = writeln!(out, "no");
                current = None;
            }
            Err(e) => {
                let _ = writeln!(out, "error: {e}");
                current = None;
            }
        }
        let _ = out.flush();
    }
    Ok(status)
}

// ------------------------------------------------------------ demos

pub const MOBILITY_GOAL: &str = "there, move, println(on_server), member(X,[1,2,3]), return, println(back)";

/// A `contina serve` child process and the lines it writes.
pub struct SpawnedServer {
    pub child: Child,
    pub endpoint: Endpoint,
    stdout: mpsc::Receiver<String>,
    stderr: mpsc::Receiver<String>,
    readers: Vec<thread::JoinHandle<()>>,
}

fn pump(stream: impl io::Read + Send + 'static, tx: mpsc::Sender<String>) -> thread::JoinHandle<()> {
    thread::spawn(move || {
        for line in BufReader::new(stream).lines().map_while(Result::ok) {
            if tx.send(line).is_err() {
                break;
            }
        }
    })
}

impl SpawnedServer {
    /// Starts `exe serve --port 0` with `extra` arguments and waits for its
    /// `listen` event.
    pub fn spawn(exe: &std::path::Path, password: &str, extra: &[&str]) -> io::Result<SpawnedServer> {
        let mut child = Command::new(exe)
            .args(["serve", "--port", "0", "--password", password])
            .args(extra)
            .env_remove("CONTINA_MASTER")
            .stdin(Stdio::null())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()?;
        let (otx, orx) = mpsc::channel();
        let (etx, erx) = mpsc::channel();
        let readers = vec![pump(child.stdout.take().unwrap(), otx), pump(child.stderr.take().unwrap(), etx)];
        let mut early = Vec::new();
        let endpoint = loop {
            match erx.recv_timeout(Duration::from_secs(10)) {
                Ok(line) => {
                    if let Some(ev) = Event::parse(&line).filter(|e| e.kind == "listen") {
                        let mut ep = Endpoint::parse(&ev.detail)
                            .ok_or_else(|| io::Error::other(format!("bad listen line {line}")))?;
                        ep.password = Some(password.to_string());
                        early.push(line);
                        break ep;
                    }
                    early.push(line);
                }
                Err(_) => {
                    let _ = child.kill();
                    return Err(io::Error::other("server did not start"));
                }
            }
        };
        let (etx2, erx2) = mpsc::channel();
        for l in early {
            let _ = etx2.send(l);
        }
        thread::spawn(move || {
            while let Ok(l) = erx.recv() {
                if etx2.send(l).is_err() {
                    break;
                }
            }
        });
        Ok(SpawnedServer { child, endpoint, stdout: orx, stderr: erx2, readers })
    }

    /// Stops the server and returns its stdout and stderr lines.
    pub fn stop(mut self) -> (Vec<String>, Vec<String>) {
        let stop = Message::Stop { pwd: self.endpoint.password_atom() };
        let _ = wire::request(&self.endpoint, &stop, Some(Duration::from_secs(5)), None);
        let deadline = std::time::Instant::now() + Duration::from_secs(5);
        while std::time::Instant::now() < deadline {
            if let Ok(Some(_)) = self.child.try_wait() {
                break;
            }
            thread::sleep(Duration::from_millis(20));
        }
        let _ = self.child.kill();
        let _ = self.child.wait();
        for r in self.readers.drain(..) {
            let _ = r.join();
        }
        (self.stdout.try_iter().collect(), self.stderr.try_iter().collect())
    }
}

fn current_exe() -> Result<std::path::PathBuf, Failure> {
    std::env::current_exe().map_err(|e| usage(e.to_string()))
}

fn demo_mobility(server: Option<&str>, password: Option<String>, out: &mut dyn Write) -> CliResult {
    let (spawned, ep) = match server {
        Some(s) => {
            let mut ep = endpoint(s)?;
            ep.password = password;
            (None, ep)
        }
        None => {
            let pw = password.unwrap_or_else(generate_password);
            let s = SpawnedServer::spawn(&current_exe()?, &pw, &[]).map_err(|e| net(e.to_string()))?;
            let ep = s.endpoint.clone();
            (Some(s), ep)
        }
    };
    let cfg =
        RuntimeConfig { default_server: Some(ep.clone()), password: ep.password.clone(), ..RuntimeConfig::default() };
    let rt = crate::runtime(cfg);
    rt.events.set_node("client");
    let _ = writeln!(out, "?- {MOBILITY_GOAL}.");
    let result = rt.solve(MOBILITY_GOAL, 1);
    let server_events: Vec<Event> = match spawned {
        Some(s) => s.stop().1.iter().filter_map(|l| Event::parse(l)).collect(),
        None => Vec::new(),
    };
    let answers = result.map_err(query_failure)?;
    let mut prints: Vec<(u64, &str, String)> =
        server_events.iter().filter(|e| e.kind == "print").map(|e| (e.t, "server", e.detail.clone())).collect();
    prints.extend(rt.events.snapshot().into_iter().filter(|e| e.kind == "print").map(|e| (e.t, "client", e.detail)));
    prints.sort_by_key(|p| p.0);
    for (_, who, line) in &prints {
        let _ = writeln!(out, "[{who}] {line}");
    }
    match answers.first() {
        Some(s) => {
            for l in s.lines() {
                let _ = writeln!(out, "[client] {l}");
            }
            Ok(EXIT_OK)
        }
        None => {
            let _ = writeln!(out, "no");
            Ok(EXIT_FAILED)
        }
    }
}

pub const RECOMPILE_PROGRAM: &str = "
color(red).
color(green).
color(blue).
rotate :- retract(color(C)), assertz(color(C)).
";

fn demo_recompile(out: &mut dyn Write) -> CliResult {
    let rt = crate::runtime(RuntimeConfig::default());
    rt.consult_str(RECOMPILE_PROGRAM).map_err(|e| usage(e.to_string()))?;
    let steps = [
        ("two updates", "rotate, rotate"),
        ("forty reads", "for(_, 1, 40), color(_), fail ; true"),
        ("one update", "rotate"),
        ("forty reads", "for(_, 1, 40), color(_), fail ; true"),
    ];
    for (label, goal) in steps {
        rt.events.clear();
        rt.solve(goal, 1).map_err(query_failure)?;
        let _ = writeln!(out, "{label}:");
        for ev in rt.events.snapshot().iter().filter(|e| e.kind == "promote" || e.kind == "demote") {
            let _ = writeln!(out, "  {} {}", ev.kind, ev.detail);
        }
    }
    let answer = rt.solve("findall(C, color(C), Cs)", 1).map_err(query_failure)?;
    if let Some(s) = answer.first() {
        for l in s.lines() {
            let _ = writeln!(out, "{l}");
        }
    }
    Ok(EXIT_OK)
}

fn demo_linda(items: u32, out: &mut dyn Write) -> CliResult {
    let rt = crate::runtime(RuntimeConfig::default());
    let producer = {
        let rt = rt.clone();
        let goal = format!("for(I, 1, {items}), out(item(I)), fail ; true");
        thread::spawn(move || rt.solve(&goal, 1).map(|_| ()))
    };
    let consumer = {
        let rt = rt.clone();
        let goal = format!("for(_, 1, {items}), in(item(X)), println(got(X)), fail ; true");
        thread::spawn(move || rt.solve(&goal, 1).map(|_| ()))
    };
    producer.join().expect("producer").map_err(query_failure)?;
    consumer.join().expect("consumer").map_err(query_failure)?;
    for l in rt.console.lines() {
        let _ = writeln!(out, "{l}");
    }
    let left = rt.space.len();
    let _ = writeln!(out, "left={left}");
    Ok(EXIT_OK)
}
