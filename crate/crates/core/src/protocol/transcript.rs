use std::io::{BufRead, Write};

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::noise::NoiseMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    PpToAp,
    ApToPp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageKind {
    Noise,
    Response,
    Score,
}

/// Whether records keep the serialized message or only its digest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PayloadMode {
    #[default]
    Digest,
    Full,
    /// Only round, node, direction and kind; skips serialization entirely.
    /// Meant for experiment sweeps where hashing the payloads dominates runtime.
    Headers,
}

/// PP → AP: one noise matrix per candidate and each candidate's active-set size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseMessage {
    pub matrices: Vec<NoiseMatrix>,
    pub n_active: Vec<usize>,
}

/// PP → AP: best noised score and the opaque handle of its candidate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreMessage {
    pub score: Option<f64>,
    pub handle: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub round: usize,
    pub node: usize,
    pub dir: Direction,
    pub kind: MessageKind,
    pub sha256: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload: Option<String>,
}

impl Record {
    /// Decodes the retained payload after checking it against the digest.
    pub fn decode<T: DeserializeOwned>(&self) -> Result<T> {
        let text = self.payload.as_ref().ok_or_else(|| {
            Error::Transcript(format!(
                "record {}/{} {:?} has no payload",
                self.round, self.node, self.kind
            ))
        })?;
        let bytes = B64
            .decode(text)
            .map_err(|e| Error::Transcript(format!("bad base64 payload: {e}")))?;
        if hex::encode(Sha256::digest(&bytes)) != self.sha256 {
            return Err(Error::Transcript(format!(
                "digest mismatch at {}/{} {:?}",
                self.round, self.node, self.kind
            )));
        }
        Ok(serde_json::from_slice(&bytes)?)
    }
}

/// Ordered message log of one training run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Transcript {
    pub mode: PayloadMode,
    pub records: Vec<Record>,
}

impl Transcript {
    pub fn new(mode: PayloadMode) -> Self {
        Self {
            mode,
            records: Vec::new(),
        }
    }

    pub fn push<T: Serialize>(
        &mut self,
        round: usize,
        node: usize,
        dir: Direction,
        kind: MessageKind,
        message: &T,
    ) -> Result<()> {
        if self.mode == PayloadMode::Headers {
            self.records.push(Record {
                round,
                node,
                dir,
                kind,
                sha256: String::new(),
                payload: None,
            });
            return Ok(());
        }
        let bytes = serde_json::to_vec(message)?;
        let sha256 = hex::encode(Sha256::digest(&bytes));
        let payload = (self.mode == PayloadMode::Full).then(|| B64.encode(&bytes));
        self.records.push(Record {
            round,
            node,
            dir,
            kind,
            sha256,
            payload,
        });
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Digest over the message digests in order; independent of payload retention.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for r in &self.records {
            h.update(format!(
                "{}:{}:{:?}:{:?}:{}\n",
                r.round, r.node, r.dir, r.kind, r.sha256
            ));
        }
        hex::encode(h.finalize())
    }

    /// Every node contributes exactly noise (PP→AP), response (AP→PP), score (PP→AP).
    pub fn check_alternation(&self) -> Result<()> {
        const PATTERN: [(Direction, MessageKind); 3] = [
            (Direction::PpToAp, MessageKind::Noise),
            (Direction::ApToPp, MessageKind::Response),
            (Direction::PpToAp, MessageKind::Score),
        ];
        if !self.records.len().is_multiple_of(3) {
            return Err(Error::Transcript(format!(
                "{} records is not a whole number of exchanges",
                self.records.len()
            )));
        }
        for (t, chunk) in self.records.chunks(3).enumerate() {
            for (r, (dir, kind)) in chunk.iter().zip(PATTERN) {
                if r.dir != dir
                    || r.kind != kind
                    || r.round != chunk[0].round
                    || r.node != chunk[0].node
                {
                    return Err(Error::Transcript(format!(
                        "exchange {t} breaks the noise/response/score order"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn write_ndjson<W: Write>(&self, mut out: W) -> Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut out, r)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_ndjson<R: BufRead>(input: R) -> Result<Self> {
        let mut records = Vec::new();
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: Record = serde_json::from_str(&line).map_err(|e| Error::Row {
                line: i + 1,
                message: format!("bad transcript record: {e}"),
            })?;
            records.push(rec);
        }
        let mode = if !records.is_empty() && records.iter().all(|r| r.payload.is_some()) {
            PayloadMode::Full
        } else {
            PayloadMode::Digest
        };
        Ok(Self { mode, records })
    }
}
