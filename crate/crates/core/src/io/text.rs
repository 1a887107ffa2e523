//! Delimited text files: IMU samples and frame timestamps.

use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::sensors::ImuSample;

pub const IMU_HEADER: &str = "t,ax,ay,az,gx,gy,gz,mx,my,mz";

/// Seconds with nine decimals, exact for integer nanoseconds.
pub fn format_ns(t_ns: i64) -> String {
    let sign = if t_ns < 0 { "-" } else { "" };
    let a = t_ns.unsigned_abs();
    format!("{sign}{}.{:09}", a / 1_000_000_000, a % 1_000_000_000)
}

pub fn parse_ns(s: &str) -> Result<i64> {
    let bad = || Error::format(format!("bad timestamp `{s}`"));
    let (neg, body) = match s.strip_prefix('-') {
        Some(b) => (true, b),
        None => (false, s),
    };
    let (whole, frac) = body.split_once('.').unwrap_or((body, ""));
    if frac.len() > 9 || whole.is_empty() {
        return Err(bad());
    }
    let w: i64 = whole.parse().map_err(|_| bad())?;
    let f: i64 = if frac.is_empty() {
        0
    } else {
        format!("{frac:0<9}").parse().map_err(|_| bad())?
    };
    let v = w.checked_mul(1_000_000_000).and_then(|x| x.checked_add(f)).ok_or_else(bad)?;
    Ok(if neg { -v } else { v })
}

/// Header plus one row per sample. Time uses nine decimals; measurements
/// use the shortest decimal form that parses back to the same `f64`.
pub fn format_imu(samples: &[ImuSample]) -> String {
    let mut out = String::from(IMU_HEADER);
    out.push('\n');
    for s in samples {
        out.push_str(&imu_row(s));
        out.push('\n');
    }
    out
}

pub fn imu_row(s: &ImuSample) -> String {
    let mut row = format_ns(s.t_ns);
    for v in s.accel.iter().chain(s.gyro.iter()).chain(s.mag.iter()) {
        row.push(',');
        row.push_str(&v.to_string());
    }
    row
}

/// Parses an IMU file, rejecting non-increasing timestamps.
pub fn parse_imu(text: &str) -> Result<Vec<ImuSample>> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(IMU_HEADER) {
        return Err(Error::format("missing IMU header"));
    }
    let mut out: Vec<ImuSample> = Vec::new();
    for (i, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 10 {
            return Err(Error::format(format!("IMU row {}: expected 10 columns", i + 1)));
        }
        let t_ns = parse_ns(cols[0])?;
        let v: Vec<f64> = cols[1..]
            .iter()
            .map(|c| c.parse::<f64>().map_err(|e| Error::format(format!("IMU row {}: {e}", i + 1))))
            .collect::<Result<_>>()?;
        if let Some(prev) = out.last() {
            if t_ns <= prev.t_ns {
                return Err(Error::format(format!("IMU row {}: timestamps not increasing", i + 1)));
            }
        }
        out.push(ImuSample {
            t_ns,
            accel: Vec3::new(v[0], v[1], v[2]),
            gyro: Vec3::new(v[3], v[4], v[5]),
            mag: Vec3::new(v[6], v[7], v[8]),
        });
    }
    Ok(out)
}

pub fn format_times(times_ns: &[i64]) -> String {
    times_ns.iter().map(|t| format_ns(*t) + "\n").collect()
}

pub fn parse_times(text: &str) -> Result<Vec<i64>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| parse_ns(l.trim()))
        .collect()
}
