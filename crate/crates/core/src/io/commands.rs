//! Command log: header `t,u,v,growth,gripper_angle`, then one record per tick.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::IoError;
use crate::interpreter::{Command, GrowthCommand, SteerCommand};

pub const HEADER: &str = "t,u,v,growth,gripper_angle";

pub fn encode_command_log(log: &[Command]) -> String {
    let mut out = String::with_capacity(48 * (log.len() + 1));
    out.push_str(HEADER);
    out.push('\n');
    for c in log {
        out.push_str(&c.to_string());
        out.push('\n');
    }
    out
}

pub fn write_command_log(path: &Path, log: &[Command]) -> Result<(), IoError> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(encode_command_log(log).as_bytes())?;
    w.flush()?;
    Ok(())
}

pub fn decode_command_line(line: &str, line_no: usize) -> Result<Command, IoError> {
    let err = |message: String| IoError::Parse { line: line_no, message };
    let fields: Vec<&str> = line.split(',').collect();
    let [t, u, v, g, a] = fields[..] else {
        return Err(err(format!("expected 5 fields, found {}", fields.len())));
    };
    let num = |s: &str| s.parse::<f64>().map_err(|_| err(format!("bad number {s:?}")));
    Ok(Command {
        t: num(t)?,
        steer: SteerCommand::new(num(u)?, num(v)?),
        growth: GrowthCommand::from_code(g).ok_or_else(|| err(format!("bad growth code {g:?}")))?,
        gripper_angle: num(a)?,
    })
}

pub fn read_command_log(path: &Path) -> Result<Vec<Command>, IoError> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if i == 0 {
            if line != HEADER {
                return Err(IoError::Parse {
                    line: 1,
                    message: format!("expected header {HEADER:?}"),
                });
            }
            continue;
        }
        if !line.is_empty() {
            out.push(decode_command_line(&line, i + 1)?);
        }
    }
    Ok(out)
}
