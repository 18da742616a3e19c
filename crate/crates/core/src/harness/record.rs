use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scheduler::Method;

pub const CSV_HEADER: &str = "seed,K,M,N,D,P,sum_dmin,method,feasible,objective,elapsed_us,iterations";

/// A heuristic or the dual bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum RunMethod {
    Heuristic(Method),
    Bound,
}

impl RunMethod {
    pub fn tag(self) -> &'static str {
        match self {
            RunMethod::Heuristic(m) => m.tag(),
            RunMethod::Bound => "bound",
        }
    }
}

impl fmt::Display for RunMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for RunMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bound" => Ok(RunMethod::Bound),
            other => other.parse().map(RunMethod::Heuristic),
        }
    }
}

impl TryFrom<String> for RunMethod {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<RunMethod> for String {
    fn from(m: RunMethod) -> String {
        m.tag().to_string()
    }
}

impl From<Method> for RunMethod {
    fn from(m: Method) -> Self {
        RunMethod::Heuristic(m)
    }
}

mod flag {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &bool, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u8(u8::from(*v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<bool, D::Error> {
        match u8::deserialize(d)? {
            0 => Ok(false),
            1 => Ok(true),
            v => Err(serde::de::Error::custom(format!("feasible must be 0 or 1, got {v}"))),
        }
    }
}

/// One (trial, method, sweep point) outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub seed: u64,
    #[serde(rename = "K")]
    pub users: usize,
    #[serde(rename = "M")]
    pub antennas: usize,
    #[serde(rename = "N")]
    pub subchannels: usize,
    /// Number of RT users.
    #[serde(rename = "D")]
    pub rt_users: usize,
    #[serde(rename = "P")]
    pub power: f64,
    pub sum_dmin: f64,
    pub method: RunMethod,
    #[serde(with = "flag")]
    pub feasible: bool,
    /// Weighted sum rate in bits/s/Hz (bound value for `bound`).
    pub objective: f64,
    pub elapsed_us: u64,
    pub iterations: usize,
}

pub fn write_records<W: Write>(out: W, records: &[RunRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    if records.is_empty() {
        w.write_record(CSV_HEADER.split(','))?;
    }
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_records<R: Read>(input: R) -> Result<Vec<RunRecord>> {
    let mut rdr = csv::Reader::from_reader(input);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header.join(",") != CSV_HEADER {
        return Err(Error::config("csv", format!("unexpected header `{}`", header.join(","))));
    }
    Ok(rdr.deserialize().collect::<std::result::Result<Vec<RunRecord>, _>>()?)
}
