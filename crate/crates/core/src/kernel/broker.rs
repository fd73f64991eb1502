//! Topic subscriptions with MQTT-style wildcard matching.

use std::collections::BTreeMap;

pub type SubscriptionId = u64;

/// `+` matches one level, a trailing `#` matches the parent and any depth below it.
pub fn topic_matches(pattern: &str, topic: &str) -> bool {
    let mut pat = pattern.split('/');
    let mut top = topic.split('/');
    loop {
        match (pat.next(), top.next()) {
            (Some("#"), _) => return true,
            (Some("+"), Some(_)) => {}
            (Some(p), Some(t)) if p == t => {}
            (None, None) => return true,
            _ => return false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Subscription {
    pub id: SubscriptionId,
    pub service: String,
    pub replica: String,
    pub pattern: String,
}

#[derive(Debug, Clone, Default)]
pub struct Broker {
    next_id: SubscriptionId,
    subs: BTreeMap<SubscriptionId, Subscription>,
}

impl Broker {
    /// Returns the existing id when `(replica, pattern)` is already subscribed.
    pub fn subscribe(&mut self, service: &str, replica: &str, pattern: &str) -> (SubscriptionId, bool) {
        if let Some(s) = self
            .subs
            .values()
            .find(|s| s.replica == replica && s.pattern == pattern)
        {
            return (s.id, false);
        }
        let id = self.next_id;
        self.next_id += 1;
        self.subs.insert(
            id,
            Subscription {
                id,
                service: service.to_string(),
                replica: replica.to_string(),
                pattern: pattern.to_string(),
            },
        );
        (id, true)
    }

    pub fn unsubscribe(&mut self, id: SubscriptionId) -> Option<Subscription> {
        self.subs.remove(&id)
    }

    /// Drops every subscription held by `replica`.
    pub fn unsubscribe_replica(&mut self, replica: &str) -> Vec<Subscription> {
        let ids: Vec<_> = self
            .subs
            .values()
            .filter(|s| s.replica == replica)
            .map(|s| s.id)
            .collect();
        ids.into_iter().filter_map(|id| self.subs.remove(&id)).collect()
    }

    /// Distinct `(service, replica)` pairs with a subscription matching `topic`,
    /// in first-subscription order.
    pub fn matching(&self, topic: &str) -> Vec<(String, String)> {
        let mut out: Vec<(String, String)> = Vec::new();
        for s in self.subs.values() {
            if topic_matches(&s.pattern, topic) && !out.iter().any(|(_, r)| r == &s.replica) {
                out.push((s.service.clone(), s.replica.clone()));
            }
        }
        out
    }

    pub fn subscriptions(&self) -> impl Iterator<Item = &Subscription> {
        self.subs.values()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wildcard_matching() {
        assert!(topic_matches("sensor/temperature/#", "sensor/temperature"));
        assert!(topic_matches("sensor/temperature/#", "sensor/temperature/room1"));
        assert!(topic_matches("sensor/+", "sensor/motion"));
        assert!(!topic_matches("sensor/+", "sensor/motion/x"));
        assert!(topic_matches("#", "anything/at/all"));
        assert!(!topic_matches("sensor/motion", "sensor/temperature"));
        assert!(!topic_matches("sensor/motion/x", "sensor/motion"));
    }

    #[test]
    fn duplicate_subscription_is_idempotent() {
        let mut b = Broker::default();
        let (a, fresh_a) = b.subscribe("ui", "ui#0", "sensor/#");
        let (c, fresh_c) = b.subscribe("ui", "ui#0", "sensor/#");
        assert_eq!(a, c);
        assert!(fresh_a && !fresh_c);
        assert_eq!(b.matching("sensor/motion").len(), 1);
    }

    #[test]
    fn overlapping_patterns_deliver_once_per_replica() {
        let mut b = Broker::default();
        b.subscribe("mon", "mon#0", "#");
        b.subscribe("mon", "mon#0", "sensor/#");
        b.subscribe("hc", "hc#0", "sensor/temperature");
        b.subscribe("hc", "hc#1", "sensor/temperature");
        let m = b.matching("sensor/temperature");
        assert_eq!(m.len(), 3);
    }
}
