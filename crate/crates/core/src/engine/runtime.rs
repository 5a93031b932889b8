//! Per-node shared state: the store, the local tuple space, the builtin
//! table, engine and thread handles, monitors and the console.

use std::collections::{HashMap, HashSet};
use std::sync::atomic::{AtomicBool, AtomicI64, Ordering};
use std::sync::{Arc, Condvar, Mutex, OnceLock, RwLock};
use std::thread::JoinHandle;

use super::{builtins, Builtin, BuiltinTable, Engine, EngineError, Exception};
use crate::binarizer::{binarize_clause, classify, BinClause, ClauseError, ProgramItem};
use crate::events::{Console, EventLog};
use crate::linda::TupleSpace;
use crate::store::{Origin, PredKey, Store, Thermostat};
use crate::term::{parse_term_with_names, Atom, Parser, SyntaxError, Term, TextWriter};
use crate::wire::Endpoint;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Capacity {
    /// Variable cells.
    pub heap: usize,
    /// Choicepoints.
    pub stack: usize,
    /// Trail entries.
    pub trail: usize,
}

impl Default for Capacity {
    fn default() -> Self {
        Capacity { heap: 1 << 24, stack: 1 << 20, trail: 1 << 24 }
    }
}

#[derive(Debug, Clone)]
pub struct RuntimeConfig {
    pub node: String,
    pub occurs_check: bool,
    pub capacity: Capacity,
    pub thermostat: Thermostat,
    /// Target of `there` and of `remote_run/1`.
    pub default_server: Option<Endpoint>,
    /// Password sent with gated requests when none is assumed.
    pub password: Option<String>,
    /// Registry consulted by `ask_all_servers/2` and `lookup_servers/2`.
    pub master: Option<Endpoint>,
    /// Wait a fixed five seconds instead of probing the base before running
    /// a moved continuation.
    pub fixed_sleep: bool,
    pub echo_output: bool,
}

impl Default for RuntimeConfig {
    fn default() -> Self {
        RuntimeConfig {
            node: "local".into(),
            occurs_check: false,
            capacity: Capacity::default(),
            thermostat: Thermostat::default(),
            default_server: None,
            password: None,
            master: None,
            fixed_sleep: false,
            echo_output: false,
        }
    }
}

/// Consulted when a call hits a predicate the store does not know. Returns
/// whether the predicate was installed and the call should be retried.
pub type UnknownHook = fn(&mut Engine, &PredKey) -> Result<bool, Exception>;

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error("syntax error at {}: {}", .0.position, .0.message)]
    Syntax(SyntaxError),
    #[error("bad clause: {0}")]
    Clause(ClauseError),
    #[error("directive {0} raised {1}")]
    Directive(String, EngineError),
    #[error("cannot read {0}: {1}")]
    Io(String, String),
}

#[derive(Debug, thiserror::Error)]
pub enum QueryError {
    #[error("syntax error at {}: {}", .0.position, .0.message)]
    Syntax(SyntaxError),
    #[error("{0}")]
    Engine(EngineError),
}

/// One answer of a query: each named variable with its value.
#[derive(Debug, Clone)]
pub struct Solution {
    pub bindings: Vec<(String, Term)>,
}

impl Solution {
    pub fn get(&self, name: &str) -> Option<&Term> {
        self.bindings.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    /// `Name=Value` lines in canonical text; unbound variables are omitted.
    pub fn lines(&self) -> Vec<String> {
        let mut w = TextWriter::canonical();
        let mut out = Vec::new();
        for (name, value) in &self.bindings {
            if let Term::Var(id) = value {
                let shared = self.bindings.iter().filter(|(n, _)| n != name).any(|(_, v)| v.vars().contains(id));
                if !shared {
                    continue;
                }
            }
            out.push(format!("{}={}", name, w.text(value)));
        }
        out
    }
}

/// Cooperative control of an engine running on its own thread.
#[derive(Default)]
pub struct ThreadCtl {
    suspended: Mutex<bool>,
    resumed: Condvar,
    cancelled: AtomicBool,
}

impl ThreadCtl {
    pub fn suspend(&self) {
        *self.suspended.lock().unwrap() = true;
    }

    pub fn resume(&self) {
        *self.suspended.lock().unwrap() = false;
        self.resumed.notify_all();
    }

    pub fn cancel(&self) {
        self.cancelled.store(true, Ordering::SeqCst);
        self.resume();
    }

    /// Blocks while suspended; false once cancelled.
    pub fn checkpoint(&self) -> bool {
        let mut s = self.suspended.lock().unwrap();
        while *s && !self.cancelled.load(Ordering::SeqCst) {
            s = self.resumed.wait(s).unwrap();
        }
        !self.cancelled.load(Ordering::SeqCst)
    }
}

struct ThreadEntry {
    join: Option<JoinHandle<()>>,
    ctl: Arc<ThreadCtl>,
}

pub struct Runtime {
    pub store: Store,
    pub space: Arc<TupleSpace>,
    pub events: Arc<EventLog>,
    pub console: Console,
    config: RwLock<RuntimeConfig>,
    builtins: RwLock<Arc<BuiltinTable>>,
    unknown_hook: RwLock<Option<UnknownHook>>,
    engines: Mutex<HashMap<i64, Arc<Mutex<Engine>>>>,
    threads: Mutex<HashMap<i64, ThreadEntry>>,
    monitors: Mutex<HashSet<String>>,
    monitor_free: Condvar,
    next_handle: AtomicI64,
    /// Per-predicate locks so concurrent callers fetch remote code once.
    pub fetch_locks: Mutex<HashMap<PredKey, Arc<Mutex<()>>>>,
    /// This node's own server endpoint, once it listens.
    pub identity: RwLock<Option<Endpoint>>,
}

const LIBRARY: &str = include_str!("library.pl");

fn library() -> &'static [BinClause] {
    static CACHE: OnceLock<Vec<BinClause>> = OnceLock::new();
    CACHE.get_or_init(|| {
        let src = format!("{}\n{}", LIBRARY, crate::continuation::PRELUDE);
        compile(&src).expect("library compiles").0
    })
}

/// Parses and binarizes program text, returning clauses and directives.
pub fn compile(src: &str) -> Result<(Vec<BinClause>, Vec<Term>), LoadError> {
    let mut clauses = Vec::new();
    let mut directives = Vec::new();
    let mut p = Parser::new(src);
    while let Some(item) = p.next_clause() {
        let (t, _) = item.map_err(LoadError::Syntax)?;
        match classify(&t).map_err(LoadError::Clause)? {
            ProgramItem::Clause(c) => clauses.push(binarize_clause(&c).map_err(LoadError::Clause)?),
            ProgramItem::Binary(b) => clauses.push(b),
            ProgramItem::Directive(d) => directives.push(d),
        }
    }
    Ok((clauses, directives))
}

impl Runtime {
    pub fn new(config: RuntimeConfig) -> Arc<Runtime> {
        let events = Arc::new(EventLog::new(config.node.clone()));
        let console = Console::default();
        console.set_echo(config.echo_output);
        let mut table = BuiltinTable::new();
        builtins::install(&mut table);
        crate::continuation::install(&mut table);
        let rt = Arc::new(Runtime {
            store: Store::new(config.thermostat, Some(events.clone())),
            space: Arc::new(TupleSpace::new()),
            events,
            console,
            config: RwLock::new(config),
            builtins: RwLock::new(Arc::new(table)),
            unknown_hook: RwLock::new(None),
            engines: Mutex::new(HashMap::new()),
            threads: Mutex::new(HashMap::new()),
            monitors: Mutex::new(HashSet::new()),
            monitor_free: Condvar::new(),
            next_handle: AtomicI64::new(1),
            fetch_locks: Mutex::new(HashMap::new()),
            identity: RwLock::new(None),
        });
        rt.store.define(library().to_vec(), Origin::Local);
        rt
    }

    pub fn config(&self) -> RuntimeConfig {
        self.config.read().unwrap().clone()
    }

    pub fn update_config(&self, f: impl FnOnce(&mut RuntimeConfig)) {
        f(&mut self.config.write().unwrap())
    }

    pub fn builtin_table(&self) -> Arc<BuiltinTable> {
        self.builtins.read().unwrap().clone()
    }

    /// Registers a builtin under its binarized arity. Engines created
    /// afterwards see it.
    pub fn register(&self, name: &str, arity: usize, f: Builtin) {
        let mut guard = self.builtins.write().unwrap();
        let mut table: BuiltinTable = (**guard).clone();
        table.insert((Atom::new(name), arity), f);
        *guard = Arc::new(table);
    }

    pub fn set_unknown_hook(&self, hook: UnknownHook) {
        *self.unknown_hook.write().unwrap() = Some(hook);
    }

    pub(crate) fn unknown(&self, e: &mut Engine, key: &PredKey) -> Result<bool, Exception> {
        let hook = *self.unknown_hook.read().unwrap();
        match hook {
            Some(h) => h(e, key),
            None => Ok(false),
        }
    }

    pub fn node(&self) -> String {
        self.events.node()
    }

    fn fresh_handle(&self) -> i64 {
        self.next_handle.fetch_add(1, Ordering::SeqCst)
    }

    // ------------------------------------------------------------ programs

    /// Loads program text: clauses are added, directives run once in order.
    pub fn consult_str(self: &Arc<Self>, src: &str) -> Result<usize, LoadError> {
        let mut p = Parser::new(src);
        let mut pending = Vec::new();
        let mut count = 0;
        while let Some(item) = p.next_clause() {
            let (t, _) = item.map_err(LoadError::Syntax)?;
            match classify(&t).map_err(LoadError::Clause)? {
                ProgramItem::Clause(c) => pending.push(binarize_clause(&c).map_err(LoadError::Clause)?),
                ProgramItem::Binary(b) => pending.push(b),
                ProgramItem::Directive(d) => {
                    count += pending.len();
                    self.store.define(std::mem::take(&mut pending), Origin::Local);
                    let mut e = Engine::new(self);
                    e.load(&d, &Term::nil());
                    if let Err(err) = e.ask() {
                        return Err(LoadError::Directive(crate::term::canonical_text(&d), err));
                    }
                }
            }
        }
        count += pending.len();
        self.store.define(pending, Origin::Local);
        Ok(count)
    }

    pub fn consult_file(self: &Arc<Self>, path: &str) -> Result<usize, LoadError> {
        let src = std::fs::read_to_string(path).map_err(|e| LoadError::Io(path.into(), e.to_string()))?;
        self.consult_str(&src)
    }

    /// Solves query text, collecting up to `limit` solutions.
    pub fn solve(self: &Arc<Self>, query: &str, limit: usize) -> Result<Vec<Solution>, QueryError> {
        let mut q = self.query(query)?;
        let mut out = Vec::new();
        while out.len() < limit {
            match q.next().map_err(QueryError::Engine)? {
                Some(s) => out.push(s),
                None => break,
            }
        }
        Ok(out)
    }

    pub fn solve_all(self: &Arc<Self>, query: &str) -> Result<Vec<Solution>, QueryError> {
        self.solve(query, usize::MAX)
    }

    pub fn query(self: &Arc<Self>, query: &str) -> Result<Query, QueryError> {
        let (goal, names) = parse_term_with_names(query).map_err(QueryError::Syntax)?;
        let names: Vec<(String, crate::term::VarId)> = names.into_iter().filter(|(n, _)| !n.starts_with('_')).collect();
        let template = Term::list(names.iter().map(|(_, v)| Term::Var(*v)).collect());
        let mut engine = Engine::new(self);
        engine.load(&goal, &template);
        Ok(Query { engine, names: names.into_iter().map(|(n, _)| n).collect() })
    }

    // ------------------------------------------------------------ engines

    pub fn create_engine(self: &Arc<Self>, capacity: Option<Capacity>) -> i64 {
        let e = Engine::with_capacity(self, capacity.unwrap_or(self.config().capacity));
        let h = self.fresh_handle();
        self.engines.lock().unwrap().insert(h, Arc::new(Mutex::new(e)));
        h
    }

    pub fn engine(&self, h: i64) -> Result<Arc<Mutex<Engine>>, EngineError> {
        self.engines.lock().unwrap().get(&h).cloned().ok_or(EngineError::StaleHandle(h))
    }

    pub fn destroy_engine(&self, h: i64) -> Result<(), EngineError> {
        self.engines.lock().unwrap().remove(&h).map(|_| ()).ok_or(EngineError::StaleHandle(h))
    }

    pub fn load_engine(&self, h: i64, goal: &Term, answer: &Term) -> Result<(), EngineError> {
        let e = self.engine(h)?;
        let mut guard = e.try_lock().map_err(|_| EngineError::Busy(h))?;
        guard.load(goal, answer);
        Ok(())
    }

    pub fn ask_engine(&self, h: i64) -> Result<Option<Term>, EngineError> {
        let e = self.engine(h)?;
        let mut guard = e.try_lock().map_err(|_| EngineError::Busy(h))?;
        guard.ask()
    }

    /// Computes one answer of engine `h` on a new thread and delivers
    /// `answer(H, the(T))` or `answer(H, no)` to the local tuple space.
    pub fn ask_thread(self: &Arc<Self>, h: i64) -> Result<i64, EngineError> {
        let engine = self.engine(h)?;
        let ctl = Arc::new(ThreadCtl::default());
        let t = self.fresh_handle();
        let rt = self.clone();
        let ctl2 = ctl.clone();
        let join = std::thread::spawn(move || {
            let reply = {
                let mut e = engine.lock().unwrap();
                e.ctl = Some(ctl2);
                let r = e.ask();
                e.ctl = None;
                match r {
                    Ok(Some(a)) => Term::compound("the", vec![a]),
                    Ok(None) => Term::atom("no"),
                    Err(err) => Term::compound("exception", vec![err.ball()]),
                }
            };
            let _ = rt.space.out(&Term::compound("answer", vec![Term::Int(h), reply]));
        });
        self.threads.lock().unwrap().insert(t, ThreadEntry { join: Some(join), ctl });
        Ok(t)
    }

    pub fn thread_join(&self, t: i64) -> Result<(), EngineError> {
        let join = {
            let mut threads = self.threads.lock().unwrap();
            let entry = threads.get_mut(&t).ok_or(EngineError::StaleHandle(t))?;
            entry.join.take()
        };
        if let Some(j) = join {
            let _ = j.join();
        }
        Ok(())
    }

    pub fn thread_ctl(&self, t: i64) -> Result<Arc<ThreadCtl>, EngineError> {
        self.threads.lock().unwrap().get(&t).map(|e| e.ctl.clone()).ok_or(EngineError::StaleHandle(t))
    }

    // ------------------------------------------------------------ monitors

    pub fn enter_monitor(&self, key: &str) {
        let mut held = self.monitors.lock().unwrap();
        while held.contains(key) {
            held = self.monitor_free.wait(held).unwrap();
        }
        held.insert(key.to_string());
    }

    pub fn exit_monitor(&self, key: &str) {
        self.monitors.lock().unwrap().remove(key);
        self.monitor_free.notify_all();
    }
}

/// An open query over one engine.
pub struct Query {
    engine: Engine,
    names: Vec<String>,
}

impl Query {
    #[allow(clippy::should_implement_trait)]
    pub fn next(&mut self) -> Result<Option<Solution>, EngineError> {
        match self.engine.ask()? {
            None => Ok(None),
            Some(t) => {
                let mut values = Vec::new();
                let mut cur = &t;
                while cur.is_struct(".", 2) {
                    values.push(cur.args()[0].clone());
                    cur = &cur.args()[1];
                }
                Ok(Some(Solution { bindings: self.names.iter().cloned().zip(values).collect() }))
            }
        }
    }

    pub fn engine(&mut self) -> &mut Engine {
        &mut self.engine
    }
}
