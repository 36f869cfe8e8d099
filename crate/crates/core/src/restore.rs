//! Exact path restoration from accepted skeletons.
//!
//! Conditional on a skeleton, the path law factorises over sub-intervals
//! into layered bridge laws, so any further finite collection of time points
//! can be simulated exactly: locate the segment, draw the bridge value
//! conditional on the segment's layer event, split the segment at the new
//! point with refined child layers, and continue. Restoration never mutates
//! its input — it returns an extended skeleton so repeated restoration stays
//! exact and reproducible.

use rand::Rng;

use crate::error::{Error, Result};
use crate::layers::{refine_layers, sample_point_given_event};
use crate::model::UnitVolatilityModel;
use crate::skeleton::{Segment, Skeleton, SkeletonCaujea};

fn check_sorted(times: &[f64]) -> Result<()> {
    if times.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidInput("query times must be ordered".into()));
    }
    Ok(())
}

/// Split `segments[idx]` at `(q, v)`; the children inherit the parent's phi
/// bounds, which remain valid on any sub-band.
fn split_segment<R: Rng>(
    segments: &mut Vec<Segment>,
    idx: usize,
    q: f64,
    rng: &mut R,
) -> Result<f64> {
    let seg = segments[idx].clone();
    let v = sample_point_given_event(
        seg.t0,
        seg.x0,
        seg.t1,
        seg.x1,
        seg.layer.band,
        seg.layer.inner,
        q,
        rng,
    )?;
    let parent_bounds = (seg.layer.phi_lo, seg.layer.phi_hi);
    let rec = seg.to_record()?;
    let bounds_fn = move |_l: f64, _u: f64| parent_bounds;
    let (left, right) = refine_layers(&rec, q, v, &bounds_fn, rng)?;
    let left_seg = Segment::new(seg.t0, seg.x0, q, v, left)?;
    let right_seg = Segment::new(q, v, seg.t1, seg.x1, right)?;
    segments.splice(idx..=idx, [left_seg, right_seg]);
    Ok(v)
}

/// Restore query times within one tiled segment chain. Queries must lie in
/// `[chain start, chain end]` and be sorted.
fn restore_chain<R: Rng>(
    segments: &mut Vec<Segment>,
    queries: &[f64],
    rng: &mut R,
) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(queries.len());
    for &q in queries {
        let idx = segments.partition_point(|s| s.t1 < q);
        if idx >= segments.len() {
            return Err(Error::InvalidInput(format!(
                "query {q} beyond the skeleton horizon"
            )));
        }
        let seg = &segments[idx];
        if q == seg.t0 {
            out.push(seg.x0);
        } else if q == seg.t1 {
            out.push(seg.x1);
        } else {
            out.push(split_segment(segments, idx, q, rng)?);
        }
    }
    Ok(out)
}

/// Simulate the path at the query times conditional on the skeleton,
/// returning the values and the extended skeleton.
pub fn restore<R: Rng>(
    skeleton: &Skeleton,
    times: &[f64],
    rng: &mut R,
) -> Result<(Vec<f64>, Skeleton)> {
    check_sorted(times)?;
    let (_, _, t_end) = skeleton.endpoints();
    if times.iter().any(|&t| t < 0.0 || t > t_end) {
        return Err(Error::InvalidInput(format!(
            "query times must lie within [0, {t_end}]"
        )));
    }
    match skeleton {
        Skeleton::Cuea(s) => {
            let mut ext = s.clone();
            let segments = ext.segments.as_mut().ok_or_else(|| {
                Error::InvalidInput(
                    "this skeleton lacks per-sub-interval layers; augment it before restoring"
                        .into(),
                )
            })?;
            let values = restore_chain(segments, times, rng)?;
            Ok((values, Skeleton::Cuea(ext)))
        }
        Skeleton::Cauea(s) => {
            let mut ext = s.clone();
            let values = restore_chain(&mut ext.segments, times, rng)?;
            Ok((values, Skeleton::Cauea(ext)))
        }
        Skeleton::Caujea(s) => {
            let mut ext = s.clone();
            let values = restore_jump_skeleton(&mut ext, times, rng)?;
            Ok((values, Skeleton::Caujea(ext)))
        }
    }
}

fn restore_jump_skeleton<R: Rng>(
    skel: &mut SkeletonCaujea,
    times: &[f64],
    rng: &mut R,
) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(times.len());
    for &q in times {
        // The path is right-continuous: a query at a jump time returns the
        // post-jump value.
        if let Some(j) = skel.jumps.iter().find(|j| j.time == q) {
            out.push(j.post);
            continue;
        }
        let block = skel
            .blocks
            .iter_mut()
            .find(|b| b.t0 <= q && q <= b.t1)
            .ok_or_else(|| Error::InvalidInput(format!("query {q} matches no block")))?;
        out.extend(restore_chain(&mut block.segments, &[q], rng)?);
    }
    Ok(out)
}

/// Map restored values back to the original scale through the inverse state
/// transform.
pub fn restore_original_scale(m: &UnitVolatilityModel, values: &[f64]) -> Result<Vec<f64>> {
    values.iter().map(|&v| m.to_original(v)).collect()
}
