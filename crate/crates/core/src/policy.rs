//! Network access policy shared by every live provider adapter.
//!
//! Offline fixtures and stub responders never consult the policy; only
//! adapters that would open a network connection do, and they must do so
//! before the connection is attempted so an exhausted budget is observable
//! even when the endpoint is unreachable.

use std::sync::atomic::{AtomicU64, Ordering};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("offline mode forbids live call to {0}")]
    OfflineForbidden(String),
    #[error("live-call budget of {budget} exhausted before call to {what}")]
    BudgetExceeded { budget: u64, what: String },
}

/// Gatekeeper for live network calls.
#[derive(Debug)]
pub struct NetworkPolicy {
    offline: bool,
    budget: Option<u64>,
    live_calls: AtomicU64,
}

impl NetworkPolicy {
    pub fn new(offline: bool, budget: Option<u64>) -> Self {
        NetworkPolicy {
            offline,
            budget,
            live_calls: AtomicU64::new(0),
        }
    }

    /// No restrictions: live calls allowed, no cap.
    pub fn unrestricted() -> Self {
        NetworkPolicy::new(false, None)
    }

    /// Forbids every live call.
    pub fn offline() -> Self {
        NetworkPolicy::new(true, None)
    }

    pub fn is_offline(&self) -> bool {
        self.offline
    }

    /// Authorizes one live call, counting it against the budget.
    ///
    /// Call this before opening the connection: the check must fire even when
    /// the endpoint is unreachable.
    pub fn authorize_live_call(&self, what: &str) -> Result<(), PolicyError> {
        if self.offline {
            return Err(PolicyError::OfflineForbidden(what.to_string()));
        }
        if let Some(budget) = self.budget {
            // Reserve a slot atomically so concurrent callers cannot
            // collectively overshoot the cap.
            let mut used = self.live_calls.load(Ordering::SeqCst);
            loop {
                if used >= budget {
                    return Err(PolicyError::BudgetExceeded {
                        budget,
                        what: what.to_string(),
                    });
                }
                match self.live_calls.compare_exchange(
                    used,
                    used + 1,
                    Ordering::SeqCst,
                    Ordering::SeqCst,
                ) {
                    Ok(_) => return Ok(()),
                    Err(actual) => used = actual,
                }
            }
        }
        self.live_calls.fetch_add(1, Ordering::SeqCst);
        Ok(())
    }

    /// Number of live calls authorized so far.
    pub fn live_calls(&self) -> u64 {
        self.live_calls.load(Ordering::SeqCst)
    }
}

impl Default for NetworkPolicy {
    fn default() -> Self {
        NetworkPolicy::unrestricted()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn offline_forbids_all_live_calls() {
        let policy = NetworkPolicy::offline();
        let err = policy.authorize_live_call("https://example.com").unwrap_err();
        assert!(matches!(err, PolicyError::OfflineForbidden(_)));
        assert_eq!(policy.live_calls(), 0);
    }

    #[test]
    fn budget_limits_live_calls() {
        let policy = NetworkPolicy::new(false, Some(2));
        policy.authorize_live_call("a").unwrap();
        policy.authorize_live_call("b").unwrap();
        let err = policy.authorize_live_call("c").unwrap_err();
        assert!(matches!(err, PolicyError::BudgetExceeded { budget: 2, .. }));
        assert_eq!(policy.live_calls(), 2);
    }

    #[test]
    fn zero_budget_rejects_before_any_call() {
        let policy = NetworkPolicy::new(false, Some(0));
        let err = policy.authorize_live_call("first").unwrap_err();
        assert!(matches!(err, PolicyError::BudgetExceeded { budget: 0, .. }));
    }

    #[test]
    fn unrestricted_just_counts() {
        let policy = NetworkPolicy::unrestricted();
        for _ in 0..5 {
            policy.authorize_live_call("x").unwrap();
        }
        assert_eq!(policy.live_calls(), 5);
    }
}
