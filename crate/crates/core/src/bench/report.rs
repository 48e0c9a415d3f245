//! Report plumbing shared by the benchmarks: CSV/summary writers and a small
//! fixed-order parallel runner for independent training runs.

use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use crate::bench::BenchError;

pub fn write_csv(path: &Path, header: &str, rows: &[String]) -> Result<(), BenchError> {
    let mut text = String::with_capacity(rows.len() * 64 + header.len() + 1);
    text.push_str(header);
    text.push('\n');
    for row in rows {
        text.push_str(row);
        text.push('\n');
    }
    std::fs::write(path, text).map_err(|e| BenchError::Io { path: path.to_path_buf(), source: e })
}

/// One encoded benchmark check.
#[derive(Clone, Debug)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CheckResult {
    pub fn new(name: &str, passed: bool, detail: String) -> Self {
        Self { name: name.to_string(), passed, detail }
    }
}

pub fn write_summary(path: &Path, checks: &[CheckResult]) -> Result<(), BenchError> {
    let mut text = String::new();
    for c in checks {
        text.push_str(&format!(
            "{}: {} ({})\n",
            c.name,
            if c.passed { "PASS" } else { "FAIL" },
            c.detail
        ));
    }
    std::fs::write(path, text).map_err(|e| BenchError::Io { path: path.to_path_buf(), source: e })
}

/// Runs `count` independent jobs on up to `workers` threads; results come
/// back in job order regardless of completion order, so reports stay
/// deterministic.
pub fn run_parallel<T, F>(count: usize, workers: usize, job: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    let workers = workers.clamp(1, count.max(1));
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<T>>> = (0..count).map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= count {
                    break;
                }
                let result = job(i);
                *slots[i].lock().expect("slot lock") = Some(result);
            });
        }
    });
    slots
        .into_iter()
        .map(|s| s.into_inner().expect("slot lock").expect("job completed"))
        .collect()
}

/// Shortest round-trip float formatting keeps CSV bytes reproducible.
pub fn fmt(v: f64) -> String {
    format!("{v}")
}
