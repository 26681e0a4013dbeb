//! Deterministic step budget.

use std::cell::Cell;

use crate::error::Error;

/// Default budget, generous enough for every shipped fixture.
pub const DEFAULT_GUARD_LIMIT: u64 = 10_000_000;

/// Step budget threaded through every search and closure loop.
///
/// Spending past the limit yields a typed error, never a panic, so callers
/// can rerun with a larger budget. The counter is also the only notion of
/// cost reported anywhere; no wall clock time is ever measured.
#[derive(Debug)]
pub struct Guard {
    limit: u64,
    used: Cell<u64>,
}

impl Guard {
    pub fn new(limit: u64) -> Self {
        Guard {
            limit,
            used: Cell::new(0),
        }
    }

    /// Charge `steps` against the budget.
    pub fn spend(&self, steps: u64) -> Result<(), Error> {
        let next = self.used.get().saturating_add(steps);
        self.used.set(next);
        if next > self.limit {
            Err(Error::Resource { limit: self.limit })
        } else {
            Ok(())
        }
    }

    pub fn used(&self) -> u64 {
        self.used.get()
    }

    pub fn limit(&self) -> u64 {
        self.limit
    }
}

impl Default for Guard {
    fn default() -> Self {
        Guard::new(DEFAULT_GUARD_LIMIT)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spend_accumulates_and_trips() {
        let g = Guard::new(10);
        assert!(g.spend(4).is_ok());
        assert!(g.spend(6).is_ok());
        assert_eq!(g.used(), 10);
        assert!(matches!(g.spend(1), Err(Error::Resource { limit: 10 })));
    }
}
