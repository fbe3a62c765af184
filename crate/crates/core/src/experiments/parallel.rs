use rayon::prelude::*;

use crate::error::{Error, Result};

/// Runs `f` over `jobs` on `workers` threads (0 = all cores).
///
/// Results come back in job order. A failing job leaves its error in its own
/// slot; the others still run.
pub fn parallel_map<J, R, F>(jobs: &[J], workers: usize, f: F) -> Vec<Result<R>>
where
    J: Sync,
    R: Send,
    F: Fn(&J) -> Result<R> + Sync,
{
    if jobs.is_empty() {
        return Vec::new();
    }
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(pool) => pool,
        Err(e) => {
            let msg = format!("cannot start worker pool: {e}");
            return jobs.iter().map(|_| Err(Error::config(msg.clone()))).collect();
        }
    };
    pool.install(|| jobs.par_iter().map(&f).collect())
}

/// Unwraps every slot, or returns the first error along with how many jobs
/// failed.
pub fn collect_all<R>(results: Vec<Result<R>>) -> Result<Vec<R>> {
    let failed = results.iter().filter(|r| r.is_err()).count();
    let mut out = Vec::with_capacity(results.len());
    for r in results {
        match r {
            Ok(v) => out.push(v),
            Err(e) if failed > 1 => {
                return Err(Error::Config(format!("{failed} jobs failed; first: {e}")));
            }
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}
