//! Bounded single-producer single-consumer queues between workers and the main loop.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use crossbeam_queue::ArrayQueue;

#[derive(Debug)]
struct Shared<T> {
    q: ArrayQueue<T>,
    dropped: AtomicU64,
}

/// Sending half. Not `Clone`, so a queue has exactly one producer.
#[derive(Debug)]
pub struct Producer<T> {
    shared: Arc<Shared<T>>,
}

/// Receiving half. Not `Clone`, so a queue has exactly one consumer.
#[derive(Debug)]
pub struct Consumer<T> {
    shared: Arc<Shared<T>>,
}

pub fn spsc<T>(capacity: usize) -> (Producer<T>, Consumer<T>) {
    let shared = Arc::new(Shared {
        q: ArrayQueue::new(capacity.max(1)),
        dropped: AtomicU64::new(0),
    });
    (
        Producer {
            shared: shared.clone(),
        },
        Consumer { shared },
    )
}

impl<T> Producer<T> {
    /// Never blocks: when full, the oldest item is discarded and counted.
    pub fn push(&self, item: T) {
        if self.shared.q.force_push(item).is_some() {
            self.shared.dropped.fetch_add(1, Ordering::Relaxed);
        }
    }
}

impl<T> Consumer<T> {
    pub fn poll(&self) -> Option<T> {
        self.shared.q.pop()
    }

    pub fn drain(&self) -> Vec<T> {
        std::iter::from_fn(|| self.poll()).collect()
    }

    pub fn len(&self) -> usize {
        self.shared.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shared.q.is_empty()
    }

    /// Items lost to overflow so far.
    pub fn dropped(&self) -> u64 {
        self.shared.dropped.load(Ordering::Relaxed)
    }
}
