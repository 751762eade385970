//! Thread-local diagnostics channel.
//!
//! Library routines report non-fatal conditions (for example a control region
//! that contains no grid nodes) by pushing a message here instead of writing
//! to stderr. Callers decide what to do with the messages: the CLI drains the
//! channel and prints to stderr, tests drain it and assert on the content.

use std::cell::RefCell;

thread_local! {
    static MESSAGES: RefCell<Vec<String>> = const { RefCell::new(Vec::new()) };
}

/// Record a warning on the current thread's channel.
pub fn warn(message: impl Into<String>) {
    MESSAGES.with(|m| m.borrow_mut().push(message.into()));
}

/// Remove and return all messages recorded on the current thread.
pub fn drain() -> Vec<String> {
    MESSAGES.with(|m| m.borrow_mut().split_off(0))
}

/// True if the current thread has recorded messages that were not drained.
pub fn has_pending() -> bool {
    MESSAGES.with(|m| !m.borrow().is_empty())
}
