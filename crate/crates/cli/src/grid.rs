//! Value parsers for command-line flags.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

/// `start:stop:step`. Points are `start + i·step` for every `i` with
/// `start + i·step ≤ stop + step/2`, so the endpoint is kept even when
/// `(stop − start)/step` is not exactly integral in floating point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Grid {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl Grid {
    pub fn points(&self) -> Vec<f64> {
        let count = ((self.stop - self.start) / self.step + 0.5).floor() as usize;
        (0..=count)
            .map(|i| self.start + i as f64 * self.step)
            .collect()
    }
}

fn split3(s: &str) -> Result<[&str; 3], String> {
    let parts: Vec<&str> = s.split(':').collect();
    match parts[..] {
        [a, b, c] => Ok([a, b, c]),
        _ => Err(format!("expected start:stop:step, got `{s}`")),
    }
}

fn float(s: &str) -> Result<f64, String> {
    let v: f64 = s
        .trim()
        .parse()
        .map_err(|_| format!("`{s}` is not a number"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("`{s}` is not finite"))
    }
}

impl FromStr for Grid {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let [a, b, c] = split3(s)?;
        let (start, stop, step) = (float(a)?, float(b)?, float(c)?);
        if step <= 0.0 {
            return Err(format!("step must be > 0, got {step}"));
        }
        if stop < start {
            return Err(format!("stop {stop} is below start {start}"));
        }
        if (stop - start) / step > 1e7 {
            return Err("grid has more than 10^7 points".into());
        }
        Ok(Grid { start, stop, step })
    }
}

impl fmt::Display for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.start, self.stop, self.step)
    }
}

/// Integer `start:stop:step`, endpoint included when reached exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct IntGrid {
    pub start: usize,
    pub stop: usize,
    pub step: usize,
}

impl IntGrid {
    pub fn points(&self) -> Vec<usize> {
        (self.start..=self.stop).step_by(self.step).collect()
    }
}

impl FromStr for IntGrid {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let [a, b, c] = split3(s)?;
        let int = |t: &str| {
            t.trim()
                .parse::<usize>()
                .map_err(|_| format!("`{t}` is not a non-negative integer"))
        };
        let (start, stop, step) = (int(a)?, int(b)?, int(c)?);
        if step == 0 {
            return Err("step must be >= 1".into());
        }
        if start == 0 {
            return Err("network size must be >= 1".into());
        }
        if stop < start {
            return Err(format!("stop {stop} is below start {start}"));
        }
        Ok(IntGrid { start, stop, step })
    }
}

/// `lo,hi` with `0 < lo ≤ hi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Range {
    pub lo: f64,
    pub hi: f64,
}

impl FromStr for Range {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let (a, b) = s
            .split_once(',')
            .ok_or_else(|| format!("expected lo,hi, got `{s}`"))?;
        let (lo, hi) = (float(a)?, float(b)?);
        if !(lo > 0.0 && lo <= hi) {
            return Err(format!("need 0 < lo <= hi, got {lo},{hi}"));
        }
        Ok(Range { lo, hi })
    }
}

/// `N,p` for an Erdős–Rényi draw.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RandomSpec {
    pub n: usize,
    pub p: f64,
}

impl FromStr for RandomSpec {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let (a, b) = s
            .split_once(',')
            .ok_or_else(|| format!("expected N,p, got `{s}`"))?;
        let n: usize = a
            .trim()
            .parse()
            .map_err(|_| format!("`{a}` is not a node count"))?;
        let p = float(b)?;
        if n < 2 {
            return Err("random graph needs N >= 2".into());
        }
        if !(p > 0.0 && p <= 1.0) {
            return Err(format!("edge probability must lie in (0, 1], got {p}"));
        }
        Ok(RandomSpec { n, p })
    }
}

pub fn positive(s: &str) -> Result<f64, String> {
    let v = float(s)?;
    if v > 0.0 {
        Ok(v)
    } else {
        Err(format!("must be > 0, got {v}"))
    }
}

pub fn non_negative(s: &str) -> Result<f64, String> {
    let v = float(s)?;
    if v >= 0.0 {
        Ok(v)
    } else {
        Err(format!("must be >= 0, got {v}"))
    }
}

pub fn node_count(s: &str) -> Result<usize, String> {
    match s.trim().parse::<usize>() {
        Ok(n) if n >= 2 => Ok(n),
        _ => Err(format!("expected an integer >= 2, got `{s}`")),
    }
}
