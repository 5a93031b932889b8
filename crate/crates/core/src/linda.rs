//! Unification-based tuple space.
//!
//! Tuples are standalone terms kept in arrival order. `in` takes the oldest
//! tuple unifying with its pattern and blocks when there is none; blocked
//! callers queue in FIFO order and `out` hands a new tuple straight to the
//! oldest matching waiter instead of storing it.

use std::collections::VecDeque;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use crate::term::{Bindings, CyclicTerm, Term};

/// The tuple instance after unifying `tuple` with `pattern`, or `None`.
pub fn match_tuple(pattern: &Term, tuple: &Term) -> Option<Term> {
    let mut b = Bindings::new();
    let p = b.import(pattern);
    let t = b.import(tuple);
    if b.unify(&p, &t) {
        b.copy_out(&t).ok()
    } else {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Mode {
    Take,
    Read,
}

struct WaiterState {
    pattern: Term,
    mode: Mode,
    slot: Mutex<Option<Term>>,
    ready: Condvar,
}

struct Inner {
    tuples: VecDeque<Term>,
    waiters: VecDeque<Arc<WaiterState>>,
    outs: u64,
    takes: u64,
}

pub struct TupleSpace {
    inner: Mutex<Inner>,
    closed: AtomicBool,
}

impl Default for TupleSpace {
    fn default() -> Self {
        TupleSpace::new()
    }
}

/// A pending `in` or `rd`, served either immediately or by a later `out`.
pub struct Ticket {
    space: Arc<TupleSpace>,
    waiter: Arc<WaiterState>,
}

impl Ticket {
    pub fn poll(&self) -> Option<Term> {
        self.waiter.slot.lock().unwrap().clone()
    }

    pub fn is_served(&self) -> bool {
        self.waiter.slot.lock().unwrap().is_some()
    }

    pub fn wait(&self) -> Option<Term> {
        let mut slot = self.waiter.slot.lock().unwrap();
        loop {
            if let Some(t) = slot.clone() {
                return Some(t);
            }
            if self.space.is_closed() {
                return None;
            }
            slot = self.waiter.ready.wait(slot).unwrap();
        }
    }

    pub fn wait_timeout(&self, timeout: Duration) -> Option<Term> {
        let deadline = Instant::now() + timeout;
        let mut slot = self.waiter.slot.lock().unwrap();
        loop {
            if let Some(t) = slot.clone() {
                return Some(t);
            }
            let now = Instant::now();
            if now >= deadline || self.space.is_closed() {
                return None;
            }
            slot = self.waiter.ready.wait_timeout(slot, deadline - now).unwrap().0;
        }
    }

    /// Withdraws the request. A tuple that was already handed over to a
    /// `take` is put back so nothing is lost.
    pub fn cancel(self) {
        let mut inner = self.space.inner.lock().unwrap();
        inner.waiters.retain(|w| !Arc::ptr_eq(w, &self.waiter));
        let served = self.waiter.slot.lock().unwrap().take();
        if let (Some(t), Mode::Take) = (served, self.waiter.mode) {
            inner.takes -= 1;
            drop(inner);
            self.space.restore(t);
        }
    }
}

impl TupleSpace {
    pub fn new() -> TupleSpace {
        TupleSpace {
            inner: Mutex::new(Inner { tuples: VecDeque::new(), waiters: VecDeque::new(), outs: 0, takes: 0 }),
            closed: AtomicBool::new(false),
        }
    }

    pub fn is_closed(&self) -> bool {
        self.closed.load(Ordering::SeqCst)
    }

    /// Wakes every blocked caller with no result; later blocking calls return at once.
    pub fn close(&self) {
        self.closed.store(true, Ordering::SeqCst);
        let waiters: Vec<_> = self.inner.lock().unwrap().waiters.drain(..).collect();
        for w in waiters {
            let _guard = w.slot.lock().unwrap();
            w.ready.notify_all();
        }
    }

    pub fn out(&self, t: &Term) -> Result<(), CyclicTerm> {
        let t = Bindings::new().copy_out(t)?;
        let mut inner = self.inner.lock().unwrap();
        inner.outs += 1;
        Self::deliver(&mut inner, t);
        Ok(())
    }

    fn deliver(inner: &mut Inner, t: Term) {
        let mut i = 0;
        while i < inner.waiters.len() {
            let w = inner.waiters[i].clone();
            if let Some(inst) = match_tuple(&w.pattern, &t) {
                *w.slot.lock().unwrap() = Some(inst);
                w.ready.notify_all();
                inner.waiters.remove(i);
                if w.mode == Mode::Take {
                    inner.takes += 1;
                    return;
                }
            } else {
                i += 1;
            }
        }
        inner.tuples.push_back(t);
    }

    fn restore(&self, t: Term) {
        let mut inner = self.inner.lock().unwrap();
        Self::deliver(&mut inner, t);
    }

    fn find(inner: &Inner, pattern: &Term) -> Option<(usize, Term)> {
        inner.tuples.iter().enumerate().find_map(|(i, t)| match_tuple(pattern, t).map(|m| (i, m)))
    }

    fn register(self: &Arc<Self>, pattern: &Term, mode: Mode) -> Ticket {
        let waiter =
            Arc::new(WaiterState { pattern: pattern.clone(), mode, slot: Mutex::new(None), ready: Condvar::new() });
        let mut inner = self.inner.lock().unwrap();
        match Self::find(&inner, pattern) {
            Some((i, m)) => {
                if mode == Mode::Take {
                    inner.tuples.remove(i);
                    inner.takes += 1;
                }
                *waiter.slot.lock().unwrap() = Some(m);
            }
            None => {
                if !self.is_closed() {
                    inner.waiters.push_back(waiter.clone());
                }
            }
        }
        Ticket { space: self.clone(), waiter }
    }

    /// Starts an `in`: served now if a tuple matches, otherwise queued.
    pub fn request_take(self: &Arc<Self>, pattern: &Term) -> Ticket {
        self.register(pattern, Mode::Take)
    }

    pub fn request_read(self: &Arc<Self>, pattern: &Term) -> Ticket {
        self.register(pattern, Mode::Read)
    }

    /// Blocking `in`. Returns `None` only if the space is closed.
    pub fn take(self: &Arc<Self>, pattern: &Term) -> Option<Term> {
        self.request_take(pattern).wait()
    }

    pub fn take_timeout(self: &Arc<Self>, pattern: &Term, timeout: Duration) -> Option<Term> {
        let ticket = self.request_take(pattern);
        match ticket.wait_timeout(timeout) {
            Some(t) => Some(t),
            None => {
                ticket.cancel();
                None
            }
        }
    }

    pub fn try_take(&self, pattern: &Term) -> Option<Term> {
        let mut inner = self.inner.lock().unwrap();
        let (i, m) = Self::find(&inner, pattern)?;
        inner.tuples.remove(i);
        inner.takes += 1;
        Some(m)
    }

    /// Blocking `rd`: like `in` but the tuple stays.
    pub fn read(self: &Arc<Self>, pattern: &Term) -> Option<Term> {
        self.request_read(pattern).wait()
    }

    pub fn try_read(&self, pattern: &Term) -> Option<Term> {
        let inner = self.inner.lock().unwrap();
        Self::find(&inner, pattern).map(|(_, m)| m)
    }

    /// Copies of all stored tuples matching `pattern`, oldest first.
    pub fn all(&self, pattern: &Term) -> Vec<Term> {
        let inner = self.inner.lock().unwrap();
        inner.tuples.iter().filter_map(|t| match_tuple(pattern, t)).collect()
    }

    pub fn len(&self) -> usize {
        self.inner.lock().unwrap().tuples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn waiting(&self) -> usize {
        self.inner.lock().unwrap().waiters.len()
    }

    /// Successful `out` and `in` operations so far.
    pub fn counters(&self) -> (u64, u64) {
        let inner = self.inner.lock().unwrap();
        (inner.outs, inner.takes)
    }

    pub fn snapshot(&self) -> Vec<Term> {
        self.inner.lock().unwrap().tuples.iter().cloned().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::term::{canonical_text, parse_term};
    use std::thread;

    fn t(s: &str) -> Term {
        parse_term(s).unwrap()
    }

    fn text(ts: &[Term]) -> Vec<String> {
        ts.iter().map(canonical_text).collect()
    }

    #[test]
    fn out_then_in_is_oldest_first() {
        let s = Arc::new(TupleSpace::new());
        s.out(&t("g(1)")).unwrap();
        s.out(&t("g(2)")).unwrap();
        assert_eq!(canonical_text(&s.take(&t("g(X)")).unwrap()), "g(1)");
        assert_eq!(text(&s.snapshot()), vec!["g(2)"]);
    }

    #[test]
    fn rendezvous_and_fifo_waiters() {
        let s = Arc::new(TupleSpace::new());
        let first = s.request_take(&t("f(X)"));
        let second = s.request_take(&t("f(_)"));
        s.out(&t("f(1)")).unwrap();
        assert_eq!(canonical_text(&first.poll().unwrap()), "f(1)");
        assert!(second.poll().is_none());
        assert!(s.is_empty());
        second.cancel();
        assert_eq!(s.waiting(), 0);
    }

    #[test]
    fn blocked_in_wakes_on_out() {
        let s = Arc::new(TupleSpace::new());
        let s2 = s.clone();
        let h = thread::spawn(move || s2.take(&t("f(X)")));
        while s.waiting() == 0 {
            thread::yield_now();
        }
        s.out(&t("f(7)")).unwrap();
        assert_eq!(canonical_text(&h.join().unwrap().unwrap()), "f(7)");
    }

    #[test]
    fn non_matching_pattern_blocks() {
        let s = Arc::new(TupleSpace::new());
        s.out(&t("f(b)")).unwrap();
        assert!(s.take_timeout(&t("f(a)"), Duration::from_millis(20)).is_none());
        assert_eq!(s.len(), 1);
        assert_eq!(s.waiting(), 0);
    }

    #[test]
    fn all_is_a_snapshot() {
        let s = TupleSpace::new();
        assert!(s.all(&t("f(X)")).is_empty());
        for x in ["f(1)", "g(2)", "f(3)"] {
            s.out(&t(x)).unwrap();
        }
        assert_eq!(text(&s.all(&t("f(X)"))), vec!["f(1)", "f(3)"]);
        assert_eq!(text(&s.all(&t("f(X)"))), vec!["f(1)", "f(3)"]);
        assert_eq!(s.len(), 3);
    }

    #[test]
    fn rd_leaves_the_tuple() {
        let s = Arc::new(TupleSpace::new());
        assert!(s.try_read(&t("f(X)")).is_none());
        s.out(&t("f(1)")).unwrap();
        assert_eq!(canonical_text(&s.read(&t("f(X)")).unwrap()), "f(1)");
        assert_eq!(s.len(), 1);
        let r = s.request_read(&t("h(X)"));
        let k = s.request_take(&t("h(X)"));
        s.out(&t("h(2)")).unwrap();
        assert!(r.poll().is_some() && k.poll().is_some());
        assert!(s.all(&t("h(_)")).is_empty());
    }

    #[test]
    fn matched_instance_carries_pattern_bindings() {
        let s = TupleSpace::new();
        s.out(&t("p(X, b)")).unwrap();
        assert_eq!(canonical_text(&s.try_take(&t("p(a, Y)")).unwrap()), "p(a,b)");
    }

    #[test]
    fn cancelling_a_served_take_restores_the_tuple() {
        let s = Arc::new(TupleSpace::new());
        let k = s.request_take(&t("f(X)"));
        s.out(&t("f(1)")).unwrap();
        k.cancel();
        assert_eq!(s.len(), 1);
        assert_eq!(s.counters(), (1, 0));
    }
}
