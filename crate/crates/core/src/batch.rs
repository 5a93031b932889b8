//! Independent queries against one runtime, each on its own engine.

use std::sync::Arc;

use crate::engine::{QueryError, Runtime, Solution};

pub type BatchResult = Result<Vec<Solution>, QueryError>;

/// All answers of every query, in input order.
pub fn solve_batch_sequential(rt: &Arc<Runtime>, queries: &[String]) -> Vec<BatchResult> {
    queries.iter().map(|q| rt.solve_all(q)).collect()
}

#[cfg(feature = "parallel")]
pub fn solve_batch(rt: &Arc<Runtime>, queries: &[String]) -> Vec<BatchResult> {
    use rayon::prelude::*;
    queries.par_iter().map(|q| rt.solve_all(q)).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn solve_batch(rt: &Arc<Runtime>, queries: &[String]) -> Vec<BatchResult> {
    solve_batch_sequential(rt, queries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::RuntimeConfig;

    #[test]
    fn parallel_and_sequential_agree() {
        let rt = Runtime::new(RuntimeConfig::default());
        rt.consult_str("p(1). p(2). p(3). q(X) :- p(X), X > 1.").unwrap();
        let qs: Vec<String> = (0..40).map(|i| if i % 2 == 0 { "q(X)".into() } else { "p(X)".into() }).collect();
        let a: Vec<Vec<String>> = solve_batch(&rt, &qs)
            .into_iter()
            .map(|r| r.unwrap().iter().map(|s| s.lines().join(",")).collect())
            .collect();
        let b: Vec<Vec<String>> = solve_batch_sequential(&rt, &qs)
            .into_iter()
            .map(|r| r.unwrap().iter().map(|s| s.lines().join(",")).collect())
            .collect();
        assert_eq!(a, b);
        assert_eq!(a[0].len(), 2);
        assert_eq!(a[1].len(), 3);
    }
}
