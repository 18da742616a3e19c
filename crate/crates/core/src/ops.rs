//! Thread-local operation counter.
//!
//! Solvers charge abstract work units here (one unit per scalar visit in the
//! power-allocation kernels, `M * (M - s)` per SUS projection, `M^3` per
//! pseudo-inverse). Scaling fits use these counts instead of wall-clock time,
//! which keeps them deterministic. An allocation never migrates between
//! threads, so a before/after difference on the calling thread is exact.

use std::cell::Cell;

thread_local! {
    static COUNTER: Cell<u64> = const { Cell::new(0) };
}

#[inline]
pub fn charge(units: u64) {
    COUNTER.with(|c| c.set(c.get().wrapping_add(units)));
}

/// Current value of this thread's counter.
pub fn read() -> u64 {
    COUNTER.with(Cell::get)
}

/// Runs `f` and returns its output with the work it charged.
pub fn measure<T>(f: impl FnOnce() -> T) -> (T, u64) {
    let start = read();
    let out = f();
    (out, read().wrapping_sub(start))
}
