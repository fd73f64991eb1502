//! Discrete-event kernel: virtual clock, ordered event queue, trace, RNG
//! streams and the pub/sub routing model.
//!
//! The broker is only a routing table here; whether it is up, and which
//! replicas are live, is answered by the caller through [`Topology`] so the
//! broker service itself can be killed like any other.

pub mod broker;
pub mod queue;
pub mod rng;

use std::collections::BTreeMap;
use std::ops::Range;

pub use broker::{topic_matches, Broker, SubscriptionId};
pub use queue::{Event, EventId, EventQueue};
pub use rng::RngStreams;

use crate::trace::{Detail, DropReason, EventKind, MessageBody, Trace};
use crate::{Error, Millis, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Message {
    pub id: u64,
    pub topic: String,
    pub body: MessageBody,
    pub publisher: String,
    pub publisher_service: String,
    pub published_at: Millis,
    pub deliver_delay: Millis,
}

/// Live view of the managed system needed to route one publish.
pub trait Topology {
    fn broker_available(&self) -> bool;
    /// `None` when the replica may publish, otherwise why it may not.
    fn publisher_blocked(&self, replica: &str) -> Option<DropReason>;
    fn subscriber_live(&self, replica: &str) -> bool;
    /// Injected communication delay on the replica's channel at `at`.
    fn channel_delay(&self, replica: &str, at: Millis) -> Millis;
}

#[derive(Debug, Clone, PartialEq)]
pub struct PublishOutcome {
    pub msg: u64,
    pub deliveries: Vec<(String, EventId)>,
    pub dropped: Option<DropReason>,
}

pub struct Kernel<P> {
    now: Millis,
    next_event: EventId,
    next_msg: u64,
    queue: EventQueue<P>,
    pub trace: Trace,
    pub broker: Broker,
    pub rng: RngStreams,
    messages: BTreeMap<u64, (Message, usize)>,
}

impl<P> Kernel<P> {
    pub fn new(seed: u64) -> Self {
        Self {
            now: 0,
            next_event: 0,
            next_msg: 0,
            queue: EventQueue::default(),
            trace: Trace::new(),
            broker: Broker::default(),
            rng: RngStreams::new(seed),
            messages: BTreeMap::new(),
        }
    }

    pub fn now(&self) -> Millis {
        self.now
    }

    pub fn pending(&self) -> usize {
        self.queue.len()
    }

    pub fn schedule(
        &mut self,
        fire_at: Millis,
        target: impl Into<String>,
        kind: EventKind,
        payload: P,
    ) -> Result<EventId> {
        if fire_at < self.now {
            return Err(Error::ScheduleInPast {
                fire_at,
                now: self.now,
            });
        }
        let id = self.next_event;
        self.next_event += 1;
        self.queue.push(Event {
            id,
            fire_at,
            target: target.into(),
            kind,
            payload,
        });
        Ok(id)
    }

    /// Schedules `delay` after now; never in the past.
    pub fn schedule_in(
        &mut self,
        delay: Millis,
        target: impl Into<String>,
        kind: EventKind,
        payload: P,
    ) -> EventId {
        let at = self.now + delay;
        self.schedule(at, target, kind, payload)
            .expect("relative schedule is never in the past")
    }

    /// Pops the next event due at or before `t_end`, advancing the clock and
    /// recording it in the trace.
    pub fn pop_due(&mut self, t_end: Millis) -> Option<Event<P>> {
        match self.queue.peek_time() {
            Some(t) if t <= t_end => {
                let ev = self.queue.pop().expect("peeked");
                debug_assert!(ev.fire_at >= self.now);
                self.now = ev.fire_at;
                self.trace.push(
                    self.now,
                    "kernel",
                    ev.target.clone(),
                    Detail::Processed {
                        event: ev.id,
                        kind: ev.kind,
                    },
                );
                Some(ev)
            }
            _ => None,
        }
    }

    pub fn begin_run(&self, t_end: Millis) -> Result<usize> {
        if t_end < self.now {
            return Err(Error::RunBackwards {
                t_end,
                now: self.now,
            });
        }
        Ok(self.trace.len())
    }

    /// Closes a run window: the clock lands on `t_end` even if idle.
    pub fn end_run(&mut self, t_end: Millis, start: usize) -> Range<usize> {
        self.now = self.now.max(t_end);
        start..self.trace.len()
    }

    /// Processes every event with `fire_at <= t_end`; returns the trace index
    /// range written during the window.
    pub fn run_until<F>(&mut self, t_end: Millis, mut handler: F) -> Result<Range<usize>>
    where
        F: FnMut(&mut Self, Event<P>),
    {
        let start = self.begin_run(t_end)?;
        while let Some(ev) = self.pop_due(t_end) {
            handler(self, ev);
        }
        Ok(self.end_run(t_end, start))
    }

    pub fn message(&self, id: u64) -> Option<&Message> {
        self.messages.get(&id).map(|(m, _)| m)
    }

    /// Marks one scheduled delivery of `id` consumed, returning the message.
    pub fn take_delivery(&mut self, id: u64) -> Option<Message> {
        let (msg, remaining) = self.messages.get_mut(&id)?;
        *remaining -= 1;
        let out = msg.clone();
        if *remaining == 0 {
            self.messages.remove(&id);
        }
        Some(out)
    }

    /// Routes a message through the broker model.
    ///
    /// One delivery event per live matching subscriber replica is scheduled at
    /// `now + base_delay` plus the injected delay on both the publisher's and
    /// the subscriber's channel. With the broker unavailable nothing is
    /// delivered and a drop is traced; a blocked publisher is traced as an
    /// anomaly.
    #[allow(clippy::too_many_arguments)]
    pub fn publish<T, F>(
        &mut self,
        topic: &str,
        body: MessageBody,
        publisher: &str,
        publisher_service: &str,
        truth: Option<f64>,
        base_delay: Millis,
        topo: &T,
        mut make_payload: F,
    ) -> PublishOutcome
    where
        T: Topology + ?Sized,
        F: FnMut(u64, &str) -> P,
    {
        let msg_id = self.next_msg;
        self.next_msg += 1;
        let now = self.now;

        if let Some(reason) = topo.publisher_blocked(publisher) {
            let detail = if reason == DropReason::PublisherNotHealthy {
                Detail::Anomaly {
                    service: publisher_service.to_string(),
                    what: format!("publish on {topic} from non-healthy replica {publisher}"),
                }
            } else {
                Detail::Drop {
                    msg: msg_id,
                    topic: topic.to_string(),
                    service: publisher_service.to_string(),
                    reason,
                }
            };
            self.trace.push(now, publisher, topic, detail);
            return PublishOutcome {
                msg: msg_id,
                deliveries: Vec::new(),
                dropped: Some(reason),
            };
        }

        if !topo.broker_available() {
            self.trace.push(
                now,
                publisher,
                topic,
                Detail::Drop {
                    msg: msg_id,
                    topic: topic.to_string(),
                    service: publisher_service.to_string(),
                    reason: DropReason::BrokerDown,
                },
            );
            return PublishOutcome {
                msg: msg_id,
                deliveries: Vec::new(),
                dropped: Some(DropReason::BrokerDown),
            };
        }

        let pub_delay = topo.channel_delay(publisher, now);
        let targets: Vec<(String, String)> = self
            .broker
            .matching(topic)
            .into_iter()
            .filter(|(_, r)| r != publisher && topo.subscriber_live(r))
            .collect();

        self.trace.push(
            now,
            publisher,
            topic,
            Detail::Publish {
                msg: msg_id,
                topic: topic.to_string(),
                service: publisher_service.to_string(),
                body: body.clone(),
                truth,
                deliveries: targets.len() as u32,
            },
        );

        let mut deliveries = Vec::with_capacity(targets.len());
        for (_, replica) in &targets {
            let delay = base_delay + pub_delay + topo.channel_delay(replica, now);
            let payload = make_payload(msg_id, replica);
            let id = self.schedule_in(delay, replica.clone(), EventKind::MessageDelivery, payload);
            deliveries.push((replica.clone(), id));
        }
        if !deliveries.is_empty() {
            self.messages.insert(
                msg_id,
                (
                    Message {
                        id: msg_id,
                        topic: topic.to_string(),
                        body,
                        publisher: publisher.to_string(),
                        publisher_service: publisher_service.to_string(),
                        published_at: now,
                        deliver_delay: base_delay,
                    },
                    deliveries.len(),
                ),
            );
        }
        PublishOutcome {
            msg: msg_id,
            deliveries,
            dropped: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::model::SensorType;
    use std::collections::BTreeSet;

    struct Topo {
        broker_up: bool,
        dead: BTreeSet<String>,
    }

    impl Topology for Topo {
        fn broker_available(&self) -> bool {
            self.broker_up
        }
        fn publisher_blocked(&self, r: &str) -> Option<DropReason> {
            self.dead
                .contains(r)
                .then_some(DropReason::PublisherNotHealthy)
        }
        fn subscriber_live(&self, r: &str) -> bool {
            !self.dead.contains(r)
        }
        fn channel_delay(&self, _: &str, _: Millis) -> Millis {
            0
        }
    }

    fn up() -> Topo {
        Topo {
            broker_up: true,
            dead: BTreeSet::new(),
        }
    }

    fn reading() -> MessageBody {
        MessageBody::Reading {
            sensor: SensorType::Temperature,
            value: 21.0,
            battery: 80.0,
        }
    }

    #[test]
    fn first_id_is_zero_and_ties_break_by_id() {
        let mut k: Kernel<&str> = Kernel::new(1);
        assert_eq!(k.schedule(0, "a", EventKind::Timer, "first").unwrap(), 0);
        let a = k.schedule(5, "a", EventKind::Timer, "x").unwrap();
        let b = k.schedule(5, "a", EventKind::Timer, "y").unwrap();
        assert!(b > a);
        let mut order = Vec::new();
        k.run_until(10, |_, ev| order.push((ev.fire_at, ev.id))).unwrap();
        assert_eq!(order, vec![(0, 0), (5, a), (5, b)]);
    }

    #[test]
    fn scheduling_in_the_past_is_rejected() {
        let mut k: Kernel<()> = Kernel::new(1);
        k.run_until(10, |_, _| {}).unwrap();
        assert!(matches!(
            k.schedule(9, "a", EventKind::Timer, ()),
            Err(Error::ScheduleInPast { .. })
        ));
        assert!(k.run_until(5, |_, _| {}).is_err());
    }

    #[test]
    fn run_until_boundary_is_inclusive() {
        let mut k: Kernel<u32> = Kernel::new(1);
        for t in [10, 20, 30] {
            k.schedule(t, "t", EventKind::Timer, t as u32).unwrap();
        }
        let mut seen = 0;
        k.run_until(25, |_, _| seen += 1).unwrap();
        assert_eq!(seen, 2);
        assert_eq!(k.now(), 25);

        let mut k: Kernel<()> = Kernel::new(1);
        k.schedule(1, "t", EventKind::Timer, ()).unwrap();
        let seg = k.run_until(0, |_, _| {}).unwrap();
        assert!(seg.is_empty());
    }

    #[test]
    fn publish_fans_out_to_each_replica() {
        let mut k: Kernel<(u64, String)> = Kernel::new(1);
        k.broker.subscribe("heating-control", "hc#0", "sensor/temperature/#");
        k.broker.subscribe("user-interface", "ui#0", "sensor/#");
        let out = k.publish(
            "sensor/temperature",
            reading(),
            "ts#0",
            "temperature-sensor",
            None,
            10,
            &up(),
            |m, r| (m, r.to_string()),
        );
        assert_eq!(out.deliveries.len(), 2);

        k.broker.subscribe("heating-control", "hc#1", "sensor/temperature");
        let out = k.publish(
            "sensor/temperature",
            reading(),
            "ts#0",
            "temperature-sensor",
            None,
            10,
            &up(),
            |m, r| (m, r.to_string()),
        );
        assert_eq!(out.deliveries.len(), 3);
        let mut delivered = 0;
        k.run_until(100, |k, ev| {
            if ev.kind == EventKind::MessageDelivery {
                assert!(k.take_delivery(ev.payload.0).is_some());
                assert!(ev.fire_at >= 10);
                delivered += 1;
            }
        })
        .unwrap();
        assert_eq!(delivered, 5);
    }

    #[test]
    fn broker_down_drops_and_no_subscribers_is_silent() {
        let mut k: Kernel<()> = Kernel::new(1);
        k.broker.subscribe("ui", "ui#0", "#");
        let topo = Topo {
            broker_up: false,
            dead: BTreeSet::new(),
        };
        let out = k.publish("sensor/motion", reading(), "m#0", "motion-sensor", None, 10, &topo, |_, _| ());
        assert_eq!(out.dropped, Some(DropReason::BrokerDown));
        assert!(out.deliveries.is_empty());
        assert!(k
            .trace
            .records()
            .iter()
            .any(|r| matches!(r.detail, Detail::Drop { .. })));

        let mut k: Kernel<()> = Kernel::new(1);
        let out = k.publish("nobody/listens", reading(), "m#0", "motion-sensor", None, 10, &up(), |_, _| ());
        assert!(out.deliveries.is_empty());
        assert!(out.dropped.is_none());
        assert!(!k
            .trace
            .records()
            .iter()
            .any(|r| matches!(r.detail, Detail::Anomaly { .. })));
    }

    #[test]
    fn unsubscribe_stops_delivery_and_dead_publisher_is_anomaly() {
        let mut k: Kernel<()> = Kernel::new(1);
        let (id, _) = k.broker.subscribe("hc", "hc#0", "sensor/temperature/#");
        k.broker.unsubscribe(id);
        let out = k.publish("sensor/temperature", reading(), "t#0", "t", None, 10, &up(), |_, _| ());
        assert!(out.deliveries.is_empty());

        let mut dead = up();
        dead.dead.insert("t#0".into());
        let out = k.publish("sensor/temperature", reading(), "t#0", "t", None, 10, &dead, |_, _| ());
        assert_eq!(out.dropped, Some(DropReason::PublisherNotHealthy));
        assert!(k
            .trace
            .records()
            .iter()
            .any(|r| matches!(r.detail, Detail::Anomaly { .. })));
    }
}
