//! Trajectory logs, label pools and the `TRJ1` binary format.
//!
//! A [`TrajectoryLog`] holds the class-probability vector every example
//! received after every logged epoch of a supervised run. It is the only
//! input the scoring module needs, so any trainer that can write `TRJ1`
//! can drive the engine.
//!
//! `TRJ1` layout, little-endian throughout:
//!
//! ```text
//! magic        4 bytes  "TRJ1"
//! version      u32      1
//! n_examples   u64
//! n_epochs     u32
//! n_classes    u32
//! tag_len      u32, followed by tag_len bytes of UTF-8
//! epoch_ids    n_epochs x u32
//! payload      n_examples x n_epochs x n_classes x f32 (example, epoch, class)
//! labels       n_examples x { label i32, is_ground_truth u8, ground_truth i32 }
//! ```
//!
//! Absent labels are written as `-1`.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{dimension, domain, Error, Result};

pub const MAGIC: [u8; 4] = *b"TRJ1";
pub const FORMAT_VERSION: u32 = 1;
pub const SUM_TOLERANCE: f64 = 1e-6;

const LABEL_RECORD_BYTES: usize = 9;

/// One entry of the optional label section of a log.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct LabelRecord {
    pub label: Option<u32>,
    pub is_ground_truth: bool,
    pub ground_truth: Option<u32>,
}

impl LabelRecord {
    fn is_absent(&self) -> bool {
        self.label.is_none() && !self.is_ground_truth && self.ground_truth.is_none()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryLog {
    n_examples: usize,
    n_epochs: usize,
    n_classes: usize,
    probs: Vec<f32>,
    epoch_ids: Vec<u32>,
    source_tag: String,
    labels: Option<Vec<LabelRecord>>,
}

impl TrajectoryLog {
    /// Builds a log from an example-major, epoch-next, class-innermost
    /// probability buffer, checking every invariant.
    pub fn new(
        n_examples: usize,
        n_epochs: usize,
        n_classes: usize,
        probs: Vec<f32>,
        epoch_ids: Vec<u32>,
        source_tag: impl Into<String>,
    ) -> Result<Self> {
        let log = TrajectoryLog {
            n_examples,
            n_epochs,
            n_classes,
            probs,
            epoch_ids,
            source_tag: source_tag.into(),
            labels: None,
        };
        log.validate()?;
        Ok(log)
    }

    /// Attaches a label section. An all-absent section is dropped so that
    /// it round-trips through `TRJ1` unchanged.
    pub fn with_labels(mut self, labels: Vec<LabelRecord>) -> Result<Self> {
        validate_records(&labels, self.n_examples, self.n_classes)?;
        self.labels = if labels.iter().all(LabelRecord::is_absent) {
            None
        } else {
            Some(labels)
        };
        Ok(self)
    }

    pub fn with_pool(self, pool: &LabelPool) -> Result<Self> {
        if pool.len() != self.n_examples || pool.n_classes() != self.n_classes {
            return Err(dimension(format!(
                "pool has {} examples / {} classes, log has {} / {}",
                pool.len(),
                pool.n_classes(),
                self.n_examples,
                self.n_classes
            )));
        }
        self.with_labels(pool.to_records())
    }

    pub fn n_examples(&self) -> usize {
        self.n_examples
    }

    pub fn n_epochs(&self) -> usize {
        self.n_epochs
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn epoch_ids(&self) -> &[u32] {
        &self.epoch_ids
    }

    pub fn source_tag(&self) -> &str {
        &self.source_tag
    }

    pub fn probs(&self) -> &[f32] {
        &self.probs
    }

    pub fn labels(&self) -> Option<&[LabelRecord]> {
        self.labels.as_deref()
    }

    /// The embedded label section as a pool, if the log carries one.
    pub fn label_pool(&self) -> Result<Option<LabelPool>> {
        match &self.labels {
            None => Ok(None),
            Some(records) => LabelPool::from_records(records, self.n_classes).map(Some),
        }
    }

    /// All epochs of one example, `n_epochs * n_classes` values.
    pub fn example(&self, i: usize) -> &[f32] {
        let w = self.n_epochs * self.n_classes;
        &self.probs[i * w..(i + 1) * w]
    }

    pub fn row(&self, i: usize, epoch: usize) -> &[f32] {
        let start = (i * self.n_epochs + epoch) * self.n_classes;
        &self.probs[start..start + self.n_classes]
    }

    /// Restricts the log to stored epochs `first..=last` (1-based).
    pub fn slice_epochs(&self, first: usize, last: usize) -> Result<TrajectoryLog> {
        if first < 1 || first > last || last > self.n_epochs {
            return Err(domain(format!(
                "epoch range {first}..={last} outside 1..={}",
                self.n_epochs
            )));
        }
        let t = last - first + 1;
        let c = self.n_classes;
        let mut probs = Vec::with_capacity(self.n_examples * t * c);
        for i in 0..self.n_examples {
            let ex = self.example(i);
            probs.extend_from_slice(&ex[(first - 1) * c..last * c]);
        }
        Ok(TrajectoryLog {
            n_examples: self.n_examples,
            n_epochs: t,
            n_classes: c,
            probs,
            epoch_ids: self.epoch_ids[first - 1..last].to_vec(),
            source_tag: self.source_tag.clone(),
            labels: self.labels.clone(),
        })
    }

    /// Restricts the log to the given examples, in the given order.
    pub fn select_examples(&self, indices: &[usize]) -> Result<TrajectoryLog> {
        if indices.is_empty() {
            return Err(domain("empty example subset"));
        }
        let mut probs = Vec::with_capacity(indices.len() * self.n_epochs * self.n_classes);
        for &i in indices {
            if i >= self.n_examples {
                return Err(domain(format!("example index {i} out of range")));
            }
            probs.extend_from_slice(self.example(i));
        }
        Ok(TrajectoryLog {
            n_examples: indices.len(),
            n_epochs: self.n_epochs,
            n_classes: self.n_classes,
            probs,
            epoch_ids: self.epoch_ids.clone(),
            source_tag: self.source_tag.clone(),
            labels: self
                .labels
                .as_ref()
                .map(|l| indices.iter().map(|&i| l[i]).collect()),
        })
    }

    fn validate(&self) -> Result<()> {
        if self.n_examples < 1 || self.n_epochs < 1 || self.n_classes < 2 {
            return Err(Error::Invariant(format!(
                "need n_examples >= 1, n_epochs >= 1, n_classes >= 2; got {}, {}, {}",
                self.n_examples, self.n_epochs, self.n_classes
            )));
        }
        if self.epoch_ids.len() != self.n_epochs {
            return Err(Error::Invariant(format!(
                "{} epoch ids for {} epochs",
                self.epoch_ids.len(),
                self.n_epochs
            )));
        }
        if self.epoch_ids.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Invariant("epoch ids not strictly increasing".into()));
        }
        let expected = self
            .n_examples
            .checked_mul(self.n_epochs)
            .and_then(|v| v.checked_mul(self.n_classes))
            .ok_or_else(|| Error::Invariant("log dimensions overflow".into()))?;
        if self.probs.len() != expected {
            return Err(Error::Invariant(format!(
                "payload has {} values, expected {expected}",
                self.probs.len()
            )));
        }
        check_rows(&self.probs, self.n_epochs, self.n_classes)?;
        if let Some(labels) = &self.labels {
            validate_records(labels, self.n_examples, self.n_classes)?;
        }
        Ok(())
    }
}

fn check_rows(probs: &[f32], n_epochs: usize, n_classes: usize) -> Result<()> {
    for (r, row) in probs.chunks_exact(n_classes).enumerate() {
        let mut sum = 0.0f64;
        for &p in row {
            if !p.is_finite() || !(0.0..=1.0).contains(&p) {
                return Err(Error::Invariant(format!(
                    "probability {p} outside [0, 1] (example {}, epoch {})",
                    r / n_epochs,
                    r % n_epochs
                )));
            }
            sum += p as f64;
        }
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::ProbabilitySum {
                example: r / n_epochs,
                epoch: r % n_epochs,
                sum,
            });
        }
    }
    Ok(())
}

fn validate_records(records: &[LabelRecord], n: usize, n_classes: usize) -> Result<()> {
    if records.len() != n {
        return Err(dimension(format!("{} label records for {n} examples", records.len())));
    }
    for (i, r) in records.iter().enumerate() {
        for v in [r.label, r.ground_truth].into_iter().flatten() {
            if v as usize >= n_classes {
                return Err(Error::Invariant(format!(
                    "label {v} of example {i} outside 0..{n_classes}"
                )));
            }
        }
        if let (true, Some(l), Some(g)) = (r.is_ground_truth, r.label, r.ground_truth) {
            if l != g {
                return Err(Error::Invariant(format!(
                    "example {i} is ground truth but label {l} != {g}"
                )));
            }
        }
    }
    Ok(())
}

/// Per-example labels of the training pool: ground truth for the labeled
/// budget, pseudo-labels for everything else.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelPool {
    labels: Vec<usize>,
    is_ground_truth: Vec<bool>,
    ground_truth: Option<Vec<usize>>,
    n_classes: usize,
}

impl LabelPool {
    pub fn new(
        labels: Vec<usize>,
        is_ground_truth: Vec<bool>,
        ground_truth: Option<Vec<usize>>,
        n_classes: usize,
    ) -> Result<Self> {
        if n_classes < 2 {
            return Err(domain("a pool needs at least two classes"));
        }
        if is_ground_truth.len() != labels.len() {
            return Err(dimension("labels and is_ground_truth differ in length"));
        }
        if let Some(gt) = &ground_truth {
            if gt.len() != labels.len() {
                return Err(dimension("labels and ground_truth differ in length"));
            }
        }
        for (i, &l) in labels.iter().enumerate() {
            if l >= n_classes {
                return Err(Error::Invariant(format!("label {l} of example {i} out of range")));
            }
        }
        if let Some(gt) = &ground_truth {
            for (i, &g) in gt.iter().enumerate() {
                if g >= n_classes {
                    return Err(Error::Invariant(format!(
                        "ground truth {g} of example {i} out of range"
                    )));
                }
                if is_ground_truth[i] && labels[i] != g {
                    return Err(Error::Invariant(format!(
                        "example {i} is anchored but its label differs from ground truth"
                    )));
                }
            }
        }
        Ok(LabelPool {
            labels,
            is_ground_truth,
            ground_truth,
            n_classes,
        })
    }

    /// A pool whose every label is ground truth.
    pub fn from_truth(truth: &[usize], n_classes: usize) -> Result<Self> {
        LabelPool::new(
            truth.to_vec(),
            vec![true; truth.len()],
            Some(truth.to_vec()),
            n_classes,
        )
    }

    pub fn from_records(records: &[LabelRecord], n_classes: usize) -> Result<Self> {
        let mut labels = Vec::with_capacity(records.len());
        for (i, r) in records.iter().enumerate() {
            labels.push(r.label.ok_or(Error::MissingLabel(i))? as usize);
        }
        let ground_truth = records
            .iter()
            .map(|r| r.ground_truth.map(|g| g as usize))
            .collect::<Option<Vec<_>>>();
        LabelPool::new(
            labels,
            records.iter().map(|r| r.is_ground_truth).collect(),
            ground_truth,
            n_classes,
        )
    }

    pub fn to_records(&self) -> Vec<LabelRecord> {
        (0..self.len())
            .map(|i| LabelRecord {
                label: Some(self.labels[i] as u32),
                is_ground_truth: self.is_ground_truth[i],
                ground_truth: self.ground_truth.as_ref().map(|g| g[i] as u32),
            })
            .collect()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn is_ground_truth(&self) -> &[bool] {
        &self.is_ground_truth
    }

    pub fn ground_truth(&self) -> Option<&[usize]> {
        self.ground_truth.as_deref()
    }

    /// The pool restricted to `indices`, in order.
    pub fn subset(&self, indices: &[usize]) -> Result<LabelPool> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.len()) {
            return Err(domain(format!("pool index {bad} out of range")));
        }
        LabelPool::new(
            indices.iter().map(|&i| self.labels[i]).collect(),
            indices.iter().map(|&i| self.is_ground_truth[i]).collect(),
            self.ground_truth
                .as_ref()
                .map(|g| indices.iter().map(|&i| g[i]).collect()),
            self.n_classes,
        )
    }
}

pub fn write_log(log: &TrajectoryLog, path: impl AsRef<Path>) -> Result<()> {
    log.validate()?;
    let bytes = encode(log)?;
    let mut w = BufWriter::new(fs::File::create(path)?);
    w.write_all(&bytes)?;
    w.flush()?;
    Ok(())
}

pub fn read_log(path: impl AsRef<Path>) -> Result<TrajectoryLog> {
    decode(&fs::read(path)?)
}

pub fn encode(log: &TrajectoryLog) -> Result<Vec<u8>> {
    let tag = log.source_tag.as_bytes();
    let tag_len = u32::try_from(tag.len()).map_err(|_| domain("source tag too long"))?;
    let n_epochs = u32::try_from(log.n_epochs).map_err(|_| domain("too many epochs"))?;
    let n_classes = u32::try_from(log.n_classes).map_err(|_| domain("too many classes"))?;
    let mut out = Vec::with_capacity(
        28 + tag.len() + 4 * log.n_epochs + 4 * log.probs.len() + LABEL_RECORD_BYTES * log.n_examples,
    );
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(log.n_examples as u64).to_le_bytes());
    out.extend_from_slice(&n_epochs.to_le_bytes());
    out.extend_from_slice(&n_classes.to_le_bytes());
    out.extend_from_slice(&tag_len.to_le_bytes());
    out.extend_from_slice(tag);
    for id in &log.epoch_ids {
        out.extend_from_slice(&id.to_le_bytes());
    }
    for p in &log.probs {
        out.extend_from_slice(&p.to_le_bytes());
    }
    let absent = LabelRecord::default();
    for i in 0..log.n_examples {
        let r = log.labels.as_ref().map_or(&absent, |l| &l[i]);
        out.extend_from_slice(&opt_to_i32(r.label).to_le_bytes());
        out.push(r.is_ground_truth as u8);
        out.extend_from_slice(&opt_to_i32(r.ground_truth).to_le_bytes());
    }
    Ok(out)
}

fn opt_to_i32(v: Option<u32>) -> i32 {
    v.map_or(-1, |v| v as i32)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| {
                Error::Truncated(format!(
                    "{what}: need {n} bytes at offset {}, file has {}",
                    self.pos,
                    self.buf.len()
                ))
            })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }
}

pub fn decode(buf: &[u8]) -> Result<TrajectoryLog> {
    let mut cur = Cursor { buf, pos: 0 };
    let magic: [u8; 4] = cur.take(4, "magic")?.try_into().unwrap();
    if magic != MAGIC {
        return Err(Error::BadMagic(magic));
    }
    let version = cur.u32("version")?;
    if version != FORMAT_VERSION {
        return Err(Error::Version(version));
    }
    let n_examples = usize::try_from(cur.u64("n_examples")?)
        .map_err(|_| Error::Format("n_examples does not fit in memory".into()))?;
    let n_epochs = cur.u32("n_epochs")? as usize;
    let n_classes = cur.u32("n_classes")? as usize;
    let tag_len = cur.u32("source tag length")? as usize;
    let tag = std::str::from_utf8(cur.take(tag_len, "source tag")?)
        .map_err(|e| Error::Format(format!("source tag is not UTF-8: {e}")))?
        .to_owned();

    let epoch_bytes = cur.take(
        n_epochs
            .checked_mul(4)
            .ok_or_else(|| Error::Format("n_epochs overflows".into()))?,
        "epoch ids",
    )?;
    let epoch_ids = epoch_bytes
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
        .collect();

    let n_values = n_examples
        .checked_mul(n_epochs)
        .and_then(|v| v.checked_mul(n_classes))
        .ok_or_else(|| Error::Format("payload size overflows".into()))?;
    let payload_bytes = n_values
        .checked_mul(4)
        .ok_or_else(|| Error::Format("payload size overflows".into()))?;
    let payload = cur.take(payload_bytes, "payload")?;
    let probs = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();

    let label_bytes = n_examples
        .checked_mul(LABEL_RECORD_BYTES)
        .ok_or_else(|| Error::Format("label section size overflows".into()))?;
    let label_section = cur.take(label_bytes, "label section")?;
    if cur.remaining() != 0 {
        return Err(Error::Format(format!(
            "{} trailing bytes after label section",
            cur.remaining()
        )));
    }
    let mut records = Vec::with_capacity(n_examples);
    for (i, rec) in label_section.chunks_exact(LABEL_RECORD_BYTES).enumerate() {
        let label = i32::from_le_bytes(rec[0..4].try_into().unwrap());
        let flag = rec[4];
        let gt = i32::from_le_bytes(rec[5..9].try_into().unwrap());
        if flag > 1 {
            return Err(Error::Format(format!("example {i}: is_ground_truth byte {flag}")));
        }
        records.push(LabelRecord {
            label: decode_label(label, i)?,
            is_ground_truth: flag == 1,
            ground_truth: decode_label(gt, i)?,
        });
    }

    TrajectoryLog::new(n_examples, n_epochs, n_classes, probs, epoch_ids, tag)?.with_labels(records)
}

fn decode_label(v: i32, i: usize) -> Result<Option<u32>> {
    match v {
        -1 => Ok(None),
        v if v >= 0 => Ok(Some(v as u32)),
        v => Err(Error::Format(format!("example {i}: label {v}"))),
    }
}
