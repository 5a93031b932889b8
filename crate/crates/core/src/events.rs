//! Structured event log and the console used by `write/1` and friends.
//!
//! Every event renders as one machine-parsable line:
//! `EVT kind=K node=N t=MICROS detail=D`, where `t` is microseconds since the
//! Unix epoch so lines from different processes can be ordered.

use std::io::Write;
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Event {
    pub kind: String,
    pub node: String,
    pub t: u64,
    pub detail: String,
}

impl Event {
    pub fn line(&self) -> String {
        format!("EVT kind={} node={} t={} detail={}", self.kind, self.node, self.t, self.detail)
    }

    /// Parses a line produced by [`Event::line`].
    pub fn parse(line: &str) -> Option<Event> {
        let rest = line.trim_end().strip_prefix("EVT kind=")?;
        let (kind, rest) = rest.split_once(" node=")?;
        let (node, rest) = rest.split_once(" t=")?;
        let (t, detail) = rest.split_once(" detail=")?;
        Some(Event { kind: kind.into(), node: node.into(), t: t.parse().ok()?, detail: detail.into() })
    }
}

pub fn now_micros() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_micros() as u64).unwrap_or(0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Echo {
    Off,
    Stdout,
    Stderr,
}

pub struct EventLog {
    node: Mutex<String>,
    events: Mutex<Vec<Event>>,
    echo: Mutex<Echo>,
}

impl EventLog {
    pub fn new(node: impl Into<String>) -> EventLog {
        EventLog { node: Mutex::new(node.into()), events: Mutex::new(Vec::new()), echo: Mutex::new(Echo::Off) }
    }

    pub fn set_node(&self, node: impl Into<String>) {
        *self.node.lock().unwrap() = node.into();
    }

    pub fn node(&self) -> String {
        self.node.lock().unwrap().clone()
    }

    pub fn set_echo(&self, echo: Echo) {
        *self.echo.lock().unwrap() = echo;
    }

    pub fn emit(&self, kind: &str, detail: impl Into<String>) {
        let detail: String = detail.into();
        let ev = Event { kind: kind.into(), node: self.node(), t: now_micros(), detail: detail.replace('\n', "\\n") };
        match *self.echo.lock().unwrap() {
            Echo::Off => {}
            Echo::Stdout => {
                let mut out = std::io::stdout().lock();
                let _ = writeln!(out, "{}", ev.line());
                let _ = out.flush();
            }
            Echo::Stderr => {
                let _ = writeln!(std::io::stderr().lock(), "{}", ev.line());
            }
        }
        self.events.lock().unwrap().push(ev);
    }

    pub fn snapshot(&self) -> Vec<Event> {
        self.events.lock().unwrap().clone()
    }

    pub fn count(&self, kind: &str, detail_prefix: &str) -> usize {
        self.events.lock().unwrap().iter().filter(|e| e.kind == kind && e.detail.starts_with(detail_prefix)).count()
    }

    pub fn clear(&self) {
        self.events.lock().unwrap().clear();
    }
}

/// Line-buffered program output. Completed lines are kept, optionally echoed
/// to stdout, and reported as `print` events.
pub struct Console {
    partial: Mutex<String>,
    lines: Mutex<Vec<String>>,
    echo: Mutex<bool>,
}

impl Default for Console {
    fn default() -> Self {
        Console { partial: Mutex::new(String::new()), lines: Mutex::new(Vec::new()), echo: Mutex::new(false) }
    }
}

impl Console {
    pub fn set_echo(&self, on: bool) {
        *self.echo.lock().unwrap() = on;
    }

    pub fn write(&self, text: &str, events: &EventLog) {
        let mut partial = self.partial.lock().unwrap();
        for c in text.chars() {
            if c == '\n' {
                let line = std::mem::take(&mut *partial);
                self.finish(line, events);
            } else {
                partial.push(c);
            }
        }
    }

    fn finish(&self, line: String, events: &EventLog) {
        if *self.echo.lock().unwrap() {
            let mut out = std::io::stdout().lock();
            let _ = writeln!(out, "{line}");
            let _ = out.flush();
        }
        events.emit("print", line.clone());
        self.lines.lock().unwrap().push(line);
    }

    pub fn lines(&self) -> Vec<String> {
        self.lines.lock().unwrap().clone()
    }

    pub fn take_lines(&self) -> Vec<String> {
        std::mem::take(&mut *self.lines.lock().unwrap())
    }
}
