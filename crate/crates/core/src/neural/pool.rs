//! Per-thread recycling of large scratch buffers.
//!
//! Activation and patch buffers run to megabytes; handing them back to the
//! allocator after every pass makes each pass pay fresh page faults.

use std::cell::RefCell;

const MAX_POOLED: usize = 48;

thread_local! {
    static POOL: RefCell<Vec<Vec<f32>>> = const { RefCell::new(Vec::new()) };
}

fn take_raw(len: usize) -> Vec<f32> {
    POOL.with(|pool| {
        let mut pool = pool.borrow_mut();
        let best = pool
            .iter()
            .enumerate()
            .filter(|(_, v)| v.capacity() >= len)
            .min_by_key(|(_, v)| v.capacity())
            .map(|(i, _)| i);
        match best {
            Some(i) => pool.swap_remove(i),
            None => Vec::with_capacity(len),
        }
    })
}

/// An empty vector with capacity for at least `len` values.
pub(crate) fn take(len: usize) -> Vec<f32> {
    let mut v = take_raw(len);
    v.clear();
    v
}

/// A vector of length `len` holding arbitrary leftover values, for outputs
/// that are fully overwritten.
pub(crate) fn scratch(len: usize) -> Vec<f32> {
    let mut v = take_raw(len);
    if v.len() >= len {
        v.truncate(len);
    } else {
        v.resize(len, 0.0);
    }
    v
}

/// A zero-filled vector of length `len`.
pub(crate) fn zeros(len: usize) -> Vec<f32> {
    let mut v = take(len);
    v.resize(len, 0.0);
    v
}

pub(crate) fn give(v: Vec<f32>) {
    if v.capacity() < 1024 {
        return;
    }
    POOL.with(|pool| {
        let mut pool = pool.borrow_mut();
        if pool.len() >= MAX_POOLED {
            // Drop the smallest to keep the big ones around.
            if let Some((i, _)) = pool.iter().enumerate().min_by_key(|(_, b)| b.capacity()) {
                if pool[i].capacity() < v.capacity() {
                    pool[i] = v;
                }
            }
        } else {
            pool.push(v);
        }
    });
}
