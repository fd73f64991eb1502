//! Trace schema and newline-delimited export.
//!
//! Every processed event, publish, delivery, state transition, decision,
//! request, chaos action and MAPE-K step lands in one append-only record
//! list. Evaluation reads nothing else.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::chaos::model::ChaosLogEntry;
use crate::managing::model::{Diagnosis, Fault, RecoveryAction};
use crate::system::model::{
    DayBand, HeatingState, LightLevel, ReplicaState, SensorType, Weather,
};
use crate::{Error, Millis, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventKind {
    Timer,
    MessageDelivery,
    Injection,
    RecoveryAction,
    WorkloadRequest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Heating(HeatingState),
    Light(LightLevel),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "body", rename_all = "kebab-case")]
pub enum MessageBody {
    Reading {
        sensor: SensorType,
        value: f64,
        battery: f64,
    },
    Weather {
        condition: Weather,
    },
    Command {
        command: Command,
        degraded: bool,
    },
    ActuatorStatus {
        heating: Option<HeatingState>,
        light: Option<LightLevel>,
    },
    FaultReport {
        fault: Fault,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DropReason {
    BrokerDown,
    Quarantined,
    PublisherNotHealthy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ValidationCode {
    Accepted,
    OutOfRange,
    UnknownSensorType,
    /// Validation switched off along with the rest of the self-healing layer.
    Unchecked,
}

/// Inputs a control decision was computed from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct DecisionInputs {
    pub temperature: Option<f64>,
    pub occupied: Option<bool>,
    pub weather: Option<Weather>,
    pub band: Option<DayBand>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "origin", rename_all = "kebab-case")]
pub enum Origin {
    Probe,
    Workload { user: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Detail {
    Processed {
        event: u64,
        kind: EventKind,
    },
    Publish {
        msg: u64,
        topic: String,
        service: String,
        body: MessageBody,
        /// True sensor value when the payload was replaced by an injected fault.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        truth: Option<f64>,
        deliveries: u32,
    },
    Drop {
        msg: u64,
        topic: String,
        service: String,
        reason: DropReason,
    },
    Deliver {
        msg: u64,
        topic: String,
        publisher: String,
        service: String,
        latency_ms: Millis,
    },
    Subscribe {
        service: String,
        pattern: String,
        subscription: u64,
    },
    Unsubscribe {
        service: String,
        pattern: String,
        subscription: u64,
    },
    Anomaly {
        service: String,
        what: String,
    },
    ReplicaState {
        service: String,
        from: Option<ReplicaState>,
        to: ReplicaState,
    },
    Quarantine {
        service: String,
    },
    Validation {
        service: String,
        msg: u64,
        publisher: String,
        sensor: SensorType,
        value: f64,
        code: ValidationCode,
        /// Payload differs from the sensor's true value.
        is_false: bool,
    },
    Decision {
        service: String,
        command: Option<Command>,
        degraded: bool,
        missing: Vec<String>,
        observed: DecisionInputs,
        truth: DecisionInputs,
    },
    Actuate {
        service: String,
        command: Command,
        msg: u64,
    },
    Request {
        req: u64,
        service: String,
        replica: Option<String>,
        #[serde(flatten)]
        origin: Origin,
        sent_at: Millis,
        latency_ms: Millis,
        ok: bool,
    },
    Chaos(ChaosLogEntry),
    Detection {
        fault: Fault,
    },
    Diagnosis {
        diagnosis: Diagnosis,
    },
    Recovery {
        action: RecoveryAction,
        executed: bool,
        note: String,
    },
    Scale {
        service: String,
        from: u32,
        to: u32,
    },
    Battery {
        service: String,
        battery: f64,
        drain_per_min: f64,
        backup: bool,
    },
}

impl Detail {
    pub fn kind(&self) -> &'static str {
        match self {
            Detail::Processed { .. } => "processed",
            Detail::Publish { .. } => "publish",
            Detail::Drop { .. } => "drop",
            Detail::Deliver { .. } => "deliver",
            Detail::Subscribe { .. } => "subscribe",
            Detail::Unsubscribe { .. } => "unsubscribe",
            Detail::Anomaly { .. } => "anomaly",
            Detail::ReplicaState { .. } => "replica-state",
            Detail::Quarantine { .. } => "quarantine",
            Detail::Validation { .. } => "validation",
            Detail::Decision { .. } => "decision",
            Detail::Actuate { .. } => "actuate",
            Detail::Request { .. } => "request",
            Detail::Chaos(_) => "chaos",
            Detail::Detection { .. } => "detection",
            Detail::Diagnosis { .. } => "diagnosis",
            Detail::Recovery { .. } => "recovery",
            Detail::Scale { .. } => "scale",
            Detail::Battery { .. } => "battery",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub seq: u64,
    pub at: Millis,
    pub source: String,
    pub target: String,
    pub detail: Detail,
}

/// One exported line: the record plus its kind and a payload digest.
#[derive(Serialize, Deserialize)]
struct Line {
    seq: u64,
    at: Millis,
    kind: String,
    source: String,
    target: String,
    digest: String,
    detail: Detail,
}

pub fn digest(detail: &Detail) -> String {
    let bytes = serde_json::to_vec(detail).expect("trace detail serializes");
    let hash = Sha256::digest(&bytes);
    hex::encode(&hash[..8])
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    records: Vec<TraceRecord>,
}

impl Trace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_records(records: Vec<TraceRecord>) -> Self {
        Self { records }
    }

    pub fn push(
        &mut self,
        at: Millis,
        source: impl Into<String>,
        target: impl Into<String>,
        detail: Detail,
    ) -> u64 {
        let seq = self.records.len() as u64;
        self.records.push(TraceRecord {
            seq,
            at,
            source: source.into(),
            target: target.into(),
            detail,
        });
        seq
    }

    pub fn records(&self) -> &[TraceRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn write_ndjson<W: Write>(&self, mut out: W) -> Result<()> {
        for r in &self.records {
            let line = Line {
                seq: r.seq,
                at: r.at,
                kind: r.detail.kind().to_string(),
                source: r.source.clone(),
                target: r.target.clone(),
                digest: digest(&r.detail),
                detail: r.detail.clone(),
            };
            serde_json::to_writer(&mut out, &line)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_ndjson_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_ndjson(&mut buf).expect("in-memory write");
        String::from_utf8(buf).expect("json is utf-8")
    }

    pub fn read_ndjson<R: BufRead>(input: R) -> Result<Self> {
        let mut records = Vec::new();
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: Line = serde_json::from_str(&line).map_err(|e| Error::TraceParse {
                line: i + 1,
                reason: e.to_string(),
            })?;
            if digest(&parsed.detail) != parsed.digest {
                return Err(Error::TraceParse {
                    line: i + 1,
                    reason: "digest mismatch".into(),
                });
            }
            records.push(TraceRecord {
                seq: parsed.seq,
                at: parsed.at,
                source: parsed.source,
                target: parsed.target,
                detail: parsed.detail,
            });
        }
        Ok(Self { records })
    }

    pub fn chaos_log(&self) -> Vec<ChaosLogEntry> {
        self.records
            .iter()
            .filter_map(|r| match &r.detail {
                Detail::Chaos(e) => Some(e.clone()),
                _ => None,
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ndjson_round_trip_checks_digest() {
        let mut t = Trace::new();
        t.push(
            5,
            "temperature-sensor#0",
            "sensor/temperature",
            Detail::Publish {
                msg: 0,
                topic: "sensor/temperature".into(),
                service: "temperature-sensor".into(),
                body: MessageBody::Reading {
                    sensor: SensorType::Temperature,
                    value: 21.25,
                    battery: 80.0,
                },
                truth: None,
                deliveries: 2,
            },
        );
        let text = t.to_ndjson_string();
        assert!(text.contains("\"kind\":\"publish\""));
        let back = Trace::read_ndjson(text.as_bytes()).unwrap();
        assert_eq!(back, t);

        let tampered = text.replace("21.25", "21.5");
        assert!(Trace::read_ndjson(tampered.as_bytes()).is_err());
    }
}
