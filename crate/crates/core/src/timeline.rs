//! Association of sensor acquisitions with trajectory samples.
//!
//! Every acquisition happens exactly at a trajectory timestamp, so sensor
//! poses are stored samples and never interpolated.

use crate::error::{Error, Result};
use crate::geom::Pose;
use crate::routegen::TrajectorySample;

/// Converts seconds to a whole number of nanoseconds, or `None` if the value
/// is not one to within rounding of its decimal representation.
pub fn seconds_to_ns(s: f64) -> Option<i64> {
    let ns = s * 1e9;
    let r = ns.round();
    (s.is_finite() && (ns - r).abs() <= 1e-3 + 1e-12 * r.abs()).then_some(r as i64)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SensorSchedule {
    pub sensor: String,
    pub period_ns: i64,
    /// Period in trajectory samples.
    pub multiple: u64,
    /// Index of the first acquisition.
    pub offset: u64,
}

/// Checks that a period is an exact positive multiple of the sampling
/// period, comparing in integer nanoseconds.
pub fn schedule(sensor: &str, period_s: f64, sample_ns: i64, offset: u64) -> Result<SensorSchedule> {
    if sample_ns <= 0 {
        return Err(Error::invalid("sampling period must be positive"));
    }
    let err = |period_ns: i64| Error::Schedule {
        sensor: sensor.to_string(),
        period_ns,
        sample_ns,
    };
    let period_ns = seconds_to_ns(period_s).ok_or_else(|| err((period_s * 1e9).round() as i64))?;
    if period_ns <= 0 || period_ns % sample_ns != 0 {
        return Err(err(period_ns));
    }
    Ok(SensorSchedule {
        sensor: sensor.to_string(),
        period_ns,
        multiple: (period_ns / sample_ns) as u64,
        offset,
    })
}

/// Validates `(sensor, period)` pairs; the first offending sensor is named.
pub fn validate_schedules(sample_ns: i64, sensors: &[(&str, f64)]) -> Result<Vec<SensorSchedule>> {
    sensors.iter().map(|(name, p)| schedule(name, *p, sample_ns, 0)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AcquisitionEvent {
    pub timestamp_ns: i64,
    /// Index into the schedule list.
    pub sensor: usize,
    pub sample: usize,
    /// Running count of this sensor's acquisitions.
    pub frame: usize,
}

/// Events over `n_samples` trajectory samples, sorted by time then sensor.
pub fn build_timeline(n_samples: usize, sample_ns: i64, schedules: &[SensorSchedule]) -> Vec<AcquisitionEvent> {
    let mut events = Vec::new();
    for (id, s) in schedules.iter().enumerate() {
        let mut idx = s.offset as usize;
        let mut frame = 0;
        while idx < n_samples {
            events.push(AcquisitionEvent {
                timestamp_ns: idx as i64 * sample_ns,
                sensor: id,
                sample: idx,
                frame,
            });
            frame += 1;
            idx += s.multiple as usize;
        }
    }
    events.sort();
    events
}

/// Stored sample of an event and the vehicle pose it defines (ENU,
/// forward-left-up body, located at the front bogie).
pub fn pose_at<'a>(samples: &'a [TrajectorySample], event: &AcquisitionEvent) -> Result<(Pose, &'a TrajectorySample)> {
    let s = samples
        .get(event.sample)
        .ok_or_else(|| Error::invalid(format!("event sample {} beyond {} samples", event.sample, samples.len())))?;
    Ok((vehicle_pose(s), s))
}

pub fn vehicle_pose(s: &TrajectorySample) -> Pose {
    Pose::vehicle_enu(&s.front.position, s.yaw, s.pitch, s.roll)
}
