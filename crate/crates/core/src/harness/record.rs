//! Skeleton record files: delimited text, one row per (skeleton, point).
//!
//! The header pins the schema, model, algorithm, seed and layer scheme. Each
//! row carries the band (and, for partition cells, the inner exclusion band)
//! of the segment *ending* at that row's time, so a file round-trips into
//! restorable skeletons. Values use the shortest representation that parses
//! back to the identical f64, which keeps files byte-stable across runs and
//! thread counts.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::layers::{Band, Layer};
use crate::skeleton::{
    JumpRecord, Segment, SegmentBlock, SkeletalPoint, Skeleton, SkeletonCauea, SkeletonCaujea,
    SkeletonCuea,
};

pub const FILE_VERSION: u32 = 1;
pub const LAYER_SCHEME: &str = "nested-bands-arithmetic-v1";

const COLUMNS: &str = "skeleton_id\tsegment_index\ttime\tvalue\tband_lo\tband_hi\tinner_lo\tinner_hi\tkind";

/// Header metadata for one record file.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordMeta {
    pub model: String,
    pub algorithm: String,
    pub seed: u64,
    pub x: f64,
    pub y: f64,
    pub t_end: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum PointKind {
    Endpoint,
    Skeletal,
    JumpPre,
    JumpPost,
    Restored,
}

impl PointKind {
    fn label(self) -> &'static str {
        match self {
            PointKind::Endpoint => "endpoint",
            PointKind::Skeletal => "skeletal",
            PointKind::JumpPre => "jump-pre",
            PointKind::JumpPost => "jump-post",
            PointKind::Restored => "restored",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "endpoint" => PointKind::Endpoint,
            "skeletal" => PointKind::Skeletal,
            "jump-pre" => PointKind::JumpPre,
            "jump-post" => PointKind::JumpPost,
            "restored" => PointKind::Restored,
            other => {
                return Err(Error::Config(format!("unknown point kind {other:?}")));
            }
        })
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x}"))
}

struct RowWriter<'a> {
    out: &'a mut String,
    skeleton_id: usize,
    segment_index: usize,
}

impl RowWriter<'_> {
    #[allow(clippy::too_many_arguments)]
    fn row(&mut self, time: f64, value: f64, layer: Option<&Layer>, kind: PointKind) {
        let (b_lo, b_hi, i_lo, i_hi) = match layer {
            Some(l) => (
                Some(l.band.lo),
                Some(l.band.hi),
                l.inner.map(|b| b.lo),
                l.inner.map(|b| b.hi),
            ),
            None => (None, None, None, None),
        };
        let _ = writeln!(
            self.out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            self.skeleton_id,
            self.segment_index,
            time,
            value,
            fmt_opt(b_lo),
            fmt_opt(b_hi),
            fmt_opt(i_lo),
            fmt_opt(i_hi),
            kind.label()
        );
        self.segment_index += 1;
    }
}

fn classify(
    time: f64,
    value: f64,
    t_end: f64,
    points: &[SkeletalPoint],
    jumps: &[JumpRecord],
) -> PointKind {
    if time == t_end {
        return PointKind::Endpoint;
    }
    if let Some(j) = jumps.iter().find(|j| j.time == time) {
        return if value == j.pre {
            PointKind::JumpPre
        } else {
            PointKind::JumpPost
        };
    }
    if points.iter().any(|p| p.time == time && p.value == value) {
        return PointKind::Skeletal;
    }
    PointKind::Restored
}

fn write_chain(
    w: &mut RowWriter<'_>,
    segments: &[Segment],
    points: &[SkeletalPoint],
    jumps: &[JumpRecord],
    t_end: f64,
) {
    for seg in segments {
        let kind = classify(seg.t1, seg.x1, t_end, points, jumps);
        w.row(seg.t1, seg.x1, Some(&seg.layer), kind);
        if kind == PointKind::JumpPre {
            if let Some(j) = jumps.iter().find(|j| j.time == seg.t1) {
                w.row(j.time, j.post, None, PointKind::JumpPost);
            }
        }
    }
}

/// Serialise skeletons with their header.
pub fn render_skeletons(meta: &RecordMeta, skeletons: &[Skeleton]) -> Result<String> {
    let mut out = String::new();
    let _ = writeln!(out, "# exact-bridges skeleton file v{FILE_VERSION}");
    let _ = writeln!(out, "# model = {}", meta.model);
    let _ = writeln!(out, "# algorithm = {}", meta.algorithm);
    let _ = writeln!(out, "# seed = {}", meta.seed);
    let _ = writeln!(out, "# layer_scheme = {LAYER_SCHEME}");
    let _ = writeln!(out, "# x = {}", meta.x);
    let _ = writeln!(out, "# y = {}", meta.y);
    let _ = writeln!(out, "# t = {}", meta.t_end);
    let _ = writeln!(out, "# columns = {COLUMNS}");
    for (id, skeleton) in skeletons.iter().enumerate() {
        let mut w = RowWriter {
            out: &mut out,
            skeleton_id: id,
            segment_index: 0,
        };
        match skeleton {
            Skeleton::Cuea(s) => {
                let segments = s.segments.as_ref().ok_or_else(|| {
                    Error::InvalidInput("cannot serialise an unaugmented skeleton".into())
                })?;
                w.row(0.0, s.x, None, PointKind::Endpoint);
                write_chain(&mut w, segments, &s.points, &[], s.t_end);
            }
            Skeleton::Cauea(s) => {
                w.row(0.0, s.x, None, PointKind::Endpoint);
                write_chain(&mut w, &s.segments, &s.points, &[], s.t_end);
            }
            Skeleton::Caujea(s) => {
                w.row(0.0, s.x, None, PointKind::Endpoint);
                for block in &s.blocks {
                    let points: Vec<SkeletalPoint> = block.points.clone();
                    write_chain(&mut w, &block.segments, &points, &s.jumps, s.t_end);
                }
            }
        }
    }
    Ok(out)
}

pub fn write_skeletons(path: &Path, meta: &RecordMeta, skeletons: &[Skeleton]) -> Result<()> {
    std::fs::write(path, render_skeletons(meta, skeletons)?)?;
    Ok(())
}

fn parse_header_line(line: &str, key: &str) -> Option<String> {
    line.strip_prefix('#')
        .map(str::trim)
        .and_then(|s| s.strip_prefix(key))
        .and_then(|s| s.trim().strip_prefix('='))
        .map(|s| s.trim().to_string())
}

fn parse_f64(field: &str, what: &str, line_no: usize) -> Result<f64> {
    field.parse().map_err(|_| {
        Error::Config(format!("line {line_no}: cannot parse {what} from {field:?}"))
    })
}

struct Row {
    skeleton_id: usize,
    time: f64,
    value: f64,
    band: Option<Band>,
    inner: Option<Band>,
    kind: PointKind,
}

/// Parse a record file back into restorable skeletons. `phi_range` refills
/// the per-band phi bounds, which are derived data not stored in the file.
pub fn read_skeletons(
    path: &Path,
    phi_range: &dyn Fn(f64, f64) -> (f64, f64),
) -> Result<(RecordMeta, Vec<Skeleton>)> {
    let text = std::fs::read_to_string(path)?;
    let mut meta = RecordMeta {
        model: String::new(),
        algorithm: String::new(),
        seed: 0,
        x: f64::NAN,
        y: f64::NAN,
        t_end: f64::NAN,
    };
    let mut rows: Vec<Row> = Vec::new();
    for (line_no, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        if line.starts_with('#') {
            if let Some(v) = parse_header_line(line, "model") {
                meta.model = v;
            } else if let Some(v) = parse_header_line(line, "algorithm") {
                meta.algorithm = v;
            } else if let Some(v) = parse_header_line(line, "seed") {
                meta.seed = v
                    .parse()
                    .map_err(|_| Error::Config(format!("line {line_no}: bad seed {v:?}")))?;
            } else if let Some(v) = parse_header_line(line, "x") {
                meta.x = parse_f64(&v, "x", line_no)?;
            } else if let Some(v) = parse_header_line(line, "y") {
                meta.y = parse_f64(&v, "y", line_no)?;
            } else if let Some(v) = parse_header_line(line, "t") {
                meta.t_end = parse_f64(&v, "t", line_no)?;
            }
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 9 {
            return Err(Error::Config(format!(
                "line {line_no}: expected 9 tab-separated fields, got {}",
                fields.len()
            )));
        }
        let opt = |f: &str, what: &str| -> Result<Option<f64>> {
            if f == "-" {
                Ok(None)
            } else {
                parse_f64(f, what, line_no).map(Some)
            }
        };
        let band = match (opt(fields[4], "band_lo")?, opt(fields[5], "band_hi")?) {
            (Some(lo), Some(hi)) => Some(Band::new(lo, hi)),
            _ => None,
        };
        let inner = match (opt(fields[6], "inner_lo")?, opt(fields[7], "inner_hi")?) {
            (Some(lo), Some(hi)) => Some(Band::new(lo, hi)),
            _ => None,
        };
        rows.push(Row {
            skeleton_id: fields[0].parse().map_err(|_| {
                Error::Config(format!("line {line_no}: bad skeleton id {:?}", fields[0]))
            })?,
            time: parse_f64(fields[2], "time", line_no)?,
            value: parse_f64(fields[3], "value", line_no)?,
            band,
            inner,
            kind: PointKind::parse(fields[8])?,
        });
    }
    if meta.algorithm.is_empty() || !meta.t_end.is_finite() {
        return Err(Error::Config("missing header fields".into()));
    }

    let mut skeletons = Vec::new();
    let mut idx = 0usize;
    while idx < rows.len() {
        let id = rows[idx].skeleton_id;
        let mut end = idx;
        while end < rows.len() && rows[end].skeleton_id == id {
            end += 1;
        }
        skeletons.push(rebuild_skeleton(&rows[idx..end], &meta, phi_range)?);
        idx = end;
    }
    Ok((meta, skeletons))
}

fn rebuild_skeleton(
    rows: &[Row],
    meta: &RecordMeta,
    phi_range: &dyn Fn(f64, f64) -> (f64, f64),
) -> Result<Skeleton> {
    if rows.len() < 2 {
        return Err(Error::Config("skeleton with fewer than two rows".into()));
    }
    let make_layer = |band: Band, inner: Option<Band>| -> Layer {
        let (phi_lo, phi_hi) = phi_range(band.lo, band.hi);
        Layer {
            band,
            inner,
            index: u32::from(inner.is_some()) + 1,
            phi_lo,
            phi_hi: phi_hi.max(phi_lo),
        }
    };

    let mut points = Vec::new();
    let mut jumps: Vec<JumpRecord> = Vec::new();
    let mut segments_all: Vec<Segment> = Vec::new();
    let mut anchor = (rows[0].time, rows[0].value);
    for row in &rows[1..] {
        match row.kind {
            PointKind::JumpPost => {
                let pre = jumps
                    .last_mut()
                    .filter(|j| j.time == row.time)
                    .ok_or_else(|| {
                        Error::Config("jump-post row without matching jump-pre".into())
                    })?;
                pre.post = row.value;
                pre.size = row.value - pre.pre;
                anchor = (row.time, row.value);
                continue;
            }
            PointKind::JumpPre => {
                jumps.push(JumpRecord {
                    time: row.time,
                    pre: row.value,
                    post: f64::NAN,
                    size: f64::NAN,
                });
            }
            PointKind::Skeletal => points.push(SkeletalPoint {
                time: row.time,
                value: row.value,
            }),
            PointKind::Endpoint | PointKind::Restored => {}
        }
        let band = row.band.ok_or_else(|| {
            Error::Config(format!("segment row at t = {} lacks a band", row.time))
        })?;
        segments_all.push(Segment::new(
            anchor.0,
            anchor.1,
            row.time,
            row.value,
            make_layer(band, row.inner),
        )?);
        anchor = (row.time, row.value);
    }

    match meta.algorithm.as_str() {
        "cuea" | "cauea" => {
            let (x, y) = (rows[0].value, anchor.1);
            let union = segments_all.iter().fold(
                Band::hull(x, y),
                |b, s| Band::new(b.lo.min(s.band().lo), b.hi.max(s.band().hi)),
            );
            if meta.algorithm == "cuea" {
                Ok(Skeleton::Cuea(SkeletonCuea {
                    x,
                    y,
                    t_end: meta.t_end,
                    points,
                    global_layer: make_layer(union, None),
                    segments: Some(segments_all),
                }))
            } else {
                Ok(Skeleton::Cauea(SkeletonCauea {
                    x,
                    y,
                    t_end: meta.t_end,
                    points,
                    segments: segments_all,
                }))
            }
        }
        "cujea" | "caujea" => {
            let (x, y) = (rows[0].value, anchor.1);
            let mut blocks = Vec::with_capacity(jumps.len() + 1);
            let mut bounds = vec![0.0];
            bounds.extend(jumps.iter().map(|j| j.time));
            bounds.push(meta.t_end);
            for w in bounds.windows(2) {
                let segs: Vec<Segment> = segments_all
                    .iter()
                    .filter(|s| s.t0 >= w[0] && s.t1 <= w[1])
                    .cloned()
                    .collect();
                let pts = points
                    .iter()
                    .filter(|p| p.time > w[0] && p.time < w[1])
                    .copied()
                    .collect();
                blocks.push(SegmentBlock {
                    t0: w[0],
                    t1: w[1],
                    points: pts,
                    segments: segs,
                });
            }
            let skel = SkeletonCaujea {
                x,
                y,
                t_end: meta.t_end,
                jumps,
                blocks,
            };
            skel.check_chain()?;
            Ok(Skeleton::Caujea(skel))
        }
        other => Err(Error::Config(format!("unknown algorithm {other:?} in header"))),
    }
}
