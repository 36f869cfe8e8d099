//! Finite-dimensional exact representations of accepted sample paths.

use crate::error::{Error, Result};
use crate::layers::{Band, IntervalRecord, Layer};
use std::time::Duration;

/// One skeletal point `(xi, X_xi)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SkeletalPoint {
    pub time: f64,
    pub value: f64,
}

/// A sub-interval between consecutive known points, together with the layer
/// constraining the path on it. Segments are what restoration consumes.
#[derive(Debug, Clone)]
pub struct Segment {
    pub t0: f64,
    pub x0: f64,
    pub t1: f64,
    pub x1: f64,
    pub layer: Layer,
}

impl Segment {
    pub fn new(t0: f64, x0: f64, t1: f64, x1: f64, layer: Layer) -> Result<Self> {
        if !(t0 < t1) {
            return Err(Error::InvalidInput(format!(
                "segment times out of order: [{t0}, {t1}]"
            )));
        }
        if !(layer.band.contains(x0) && layer.band.contains(x1)) {
            return Err(Error::InvariantViolation(format!(
                "segment endpoints ({x0}, {x1}) escape band {:?}",
                layer.band
            )));
        }
        Ok(Segment { t0, x0, t1, x1, layer })
    }

    pub fn from_record(rec: &IntervalRecord) -> Self {
        Segment {
            t0: rec.outer_s,
            x0: rec.x,
            t1: rec.outer_t,
            x1: rec.y,
            layer: rec.layer.clone(),
        }
    }

    pub fn to_record(&self) -> Result<IntervalRecord> {
        IntervalRecord::new(
            self.t0,
            self.t1,
            self.t0,
            self.t1,
            self.x0,
            self.x1,
            self.layer.clone(),
        )
    }

    pub fn band(&self) -> Band {
        self.layer.band
    }
}

/// Check that segments tile `[t0, t1]` exactly, sharing endpoint times
/// bitwise. Callers sort segments by start time first.
pub fn assert_tiling(segments: &[Segment], t0: f64, t1: f64) -> Result<()> {
    let mut cursor = t0;
    for seg in segments {
        if seg.t0 != cursor {
            return Err(Error::InvariantViolation(format!(
                "segment gap or overlap at {cursor}: next segment starts at {}",
                seg.t0
            )));
        }
        cursor = seg.t1;
    }
    if cursor != t1 {
        return Err(Error::InvariantViolation(format!(
            "segments end at {cursor}, expected {t1}"
        )));
    }
    Ok(())
}

/// Skeleton of the single-layer algorithm: endpoints, skeletal points, the
/// global layer, and (after augmentation) per-sub-interval layers required
/// for restoration. Simulation always returns skeletons augmented.
#[derive(Debug, Clone)]
pub struct SkeletonCuea {
    pub x: f64,
    pub y: f64,
    pub t_end: f64,
    pub points: Vec<SkeletalPoint>,
    pub global_layer: Layer,
    pub segments: Option<Vec<Segment>>,
}

/// Skeleton of the adaptive algorithm: per-sub-interval layers tiling
/// `[0, T]`.
#[derive(Debug, Clone)]
pub struct SkeletonCauea {
    pub x: f64,
    pub y: f64,
    pub t_end: f64,
    pub points: Vec<SkeletalPoint>,
    pub segments: Vec<Segment>,
}

/// One jump of an accepted jump-diffusion skeleton.
#[derive(Debug, Clone, Copy)]
pub struct JumpRecord {
    pub time: f64,
    pub pre: f64,
    pub post: f64,
    pub size: f64,
}

/// Inter-jump block: the diffusion skeleton between two consecutive jumps.
#[derive(Debug, Clone)]
pub struct SegmentBlock {
    pub t0: f64,
    pub t1: f64,
    pub points: Vec<SkeletalPoint>,
    pub segments: Vec<Segment>,
}

/// Skeleton of an accepted jump-diffusion bridge: jump data plus one segment
/// block per inter-jump interval.
#[derive(Debug, Clone)]
pub struct SkeletonCaujea {
    pub x: f64,
    pub y: f64,
    pub t_end: f64,
    pub jumps: Vec<JumpRecord>,
    pub blocks: Vec<SegmentBlock>,
}

impl SkeletonCaujea {
    /// Bookkeeping identity: post - pre = size at each jump, and the block
    /// boundary values chain from x to y.
    pub fn check_chain(&self) -> Result<()> {
        for (i, j) in self.jumps.iter().enumerate() {
            if (j.post - j.pre - j.size).abs() > 1e-12 {
                return Err(Error::InvariantViolation(format!(
                    "jump {i}: post - pre != size"
                )));
            }
        }
        let mut cursor = self.x;
        for (i, b) in self.blocks.iter().enumerate() {
            let first = b.segments.first().ok_or_else(|| {
                Error::InvariantViolation(format!("block {i} has no segments"))
            })?;
            if first.x0 != cursor {
                return Err(Error::InvariantViolation(format!(
                    "block {i} starts at {} expected {cursor}",
                    first.x0
                )));
            }
            let last = b.segments.last().unwrap();
            cursor = if i < self.jumps.len() {
                let j = &self.jumps[i];
                if last.x1 != j.pre {
                    return Err(Error::InvariantViolation(format!(
                        "block {i} ends at {} expected pre-jump {}",
                        last.x1, j.pre
                    )));
                }
                j.post
            } else {
                last.x1
            };
        }
        if cursor != self.y {
            return Err(Error::InvariantViolation(format!(
                "path chain ends at {cursor}, expected {}",
                self.y
            )));
        }
        Ok(())
    }
}

/// Any accepted skeleton; the uniform currency of restoration and file I/O.
#[derive(Debug, Clone)]
pub enum Skeleton {
    Cuea(SkeletonCuea),
    Cauea(SkeletonCauea),
    Caujea(SkeletonCaujea),
}

impl Skeleton {
    pub fn algorithm(&self) -> &'static str {
        match self {
            Skeleton::Cuea(_) => "cuea",
            Skeleton::Cauea(_) => "cauea",
            Skeleton::Caujea(_) => "caujea",
        }
    }

    pub fn endpoints(&self) -> (f64, f64, f64) {
        match self {
            Skeleton::Cuea(s) => (s.x, s.y, s.t_end),
            Skeleton::Cauea(s) => (s.x, s.y, s.t_end),
            Skeleton::Caujea(s) => (s.x, s.y, s.t_end),
        }
    }
}

/// Work counters for one simulation call. Replications keep their own and the
/// harness merges them.
#[derive(Debug, Clone, Default)]
pub struct DiagnosticCounters {
    pub proposals: u64,
    pub pre_rejections: u64,
    pub thinning_rejections: u64,
    pub acceptances: u64,
    /// Histogram over accepted kappa (total skeletal point count).
    pub kappa_histogram: Vec<u64>,
    pub phi_evaluations: u64,
    pub wall_clock: Duration,
}

impl DiagnosticCounters {
    pub fn record_kappa(&mut self, kappa: usize) {
        if self.kappa_histogram.len() <= kappa {
            self.kappa_histogram.resize(kappa + 1, 0);
        }
        self.kappa_histogram[kappa] += 1;
    }

    /// proposals = pre-rejections + thinning rejections + acceptances.
    pub fn balanced(&self) -> bool {
        self.proposals == self.pre_rejections + self.thinning_rejections + self.acceptances
    }

    pub fn merge(&mut self, other: &DiagnosticCounters) {
        self.proposals += other.proposals;
        self.pre_rejections += other.pre_rejections;
        self.thinning_rejections += other.thinning_rejections;
        self.acceptances += other.acceptances;
        self.phi_evaluations += other.phi_evaluations;
        self.wall_clock += other.wall_clock;
        if self.kappa_histogram.len() < other.kappa_histogram.len() {
            self.kappa_histogram.resize(other.kappa_histogram.len(), 0);
        }
        for (i, &c) in other.kappa_histogram.iter().enumerate() {
            self.kappa_histogram[i] += c;
        }
    }

    /// Mean accepted kappa, for diagnostics output.
    pub fn mean_kappa(&self) -> f64 {
        let total: u64 = self.kappa_histogram.iter().sum();
        if total == 0 {
            return 0.0;
        }
        let weighted: u64 = self
            .kappa_histogram
            .iter()
            .enumerate()
            .map(|(k, &c)| k as u64 * c)
            .sum();
        weighted as f64 / total as f64
    }
}
