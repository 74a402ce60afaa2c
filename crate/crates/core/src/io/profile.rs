//! Calibration profiles as flat `key = value` text, SI units.

use std::fs;
use std::path::Path;

use super::IoError;
use crate::calibration::CalibrationProfile;

const KEYS: [&str; 9] = [
    "x_left",
    "x_right",
    "z_back",
    "z_front",
    "y_low",
    "y_high",
    "db_l",
    "db_u",
    "theta_offset",
];

fn fields(p: &CalibrationProfile) -> [f64; 9] {
    [
        p.x_left,
        p.x_right,
        p.z_back,
        p.z_front,
        p.y_low,
        p.y_high,
        p.db_l,
        p.db_u,
        p.theta_offset,
    ]
}

pub fn encode_profile(p: &CalibrationProfile) -> String {
    let mut out = String::from("# operator calibration profile (meters, radians)\n");
    for (k, v) in KEYS.iter().zip(fields(p)) {
        out.push_str(&format!("{k} = {v:?}\n"));
    }
    out
}

pub fn decode_profile(text: &str) -> Result<CalibrationProfile, IoError> {
    let mut vals: [Option<f64>; 9] = [None; 9];
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |message: String| IoError::Parse { line: i + 1, message };
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| err(format!("expected key = value, got {line:?}")))?;
        let (k, v) = (k.trim(), v.trim());
        let idx = KEYS
            .iter()
            .position(|key| *key == k)
            .ok_or_else(|| err(format!("unknown key {k:?}")))?;
        let value: f64 = v.parse().map_err(|_| err(format!("bad number {v:?}")))?;
        vals[idx] = Some(value);
    }
    let missing: Vec<_> = KEYS
        .iter()
        .zip(&vals)
        .filter(|(_, v)| v.is_none())
        .map(|(k, _)| *k)
        .collect();
    if !missing.is_empty() {
        return Err(IoError::Parse {
            line: text.lines().count(),
            message: format!("missing keys: {}", missing.join(", ")),
        });
    }
    let v = vals.map(|v| v.expect("checked above"));
    let profile = CalibrationProfile {
        x_left: v[0],
        x_right: v[1],
        z_back: v[2],
        z_front: v[3],
        y_low: v[4],
        y_high: v[5],
        db_l: v[6],
        db_u: v[7],
        theta_offset: v[8],
    };
    profile.validate().map_err(|e| IoError::Parse {
        line: 0,
        message: e.to_string(),
    })?;
    Ok(profile)
}

pub fn write_profile(path: &Path, p: &CalibrationProfile) -> Result<(), IoError> {
    fs::write(path, encode_profile(p))?;
    Ok(())
}

pub fn read_profile(path: &Path) -> Result<CalibrationProfile, IoError> {
    decode_profile(&fs::read_to_string(path)?)
}
