use core::fmt;
use core::str::FromStr;

use crate::error::{bail, Error, Result};

/// Number of behavior clusters per psychological test.
pub const CLUSTERS: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BehaviorTest {
    Cdr,
    Mmse,
}

impl BehaviorTest {
    pub const ALL: [BehaviorTest; 2] = [BehaviorTest::Cdr, BehaviorTest::Mmse];

    pub fn as_str(self) -> &'static str {
        match self {
            BehaviorTest::Cdr => "CDR",
            BehaviorTest::Mmse => "MMSE",
        }
    }
}

impl fmt::Display for BehaviorTest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BehaviorTest {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "cdr" => Ok(BehaviorTest::Cdr),
            "mmse" => Ok(BehaviorTest::Mmse),
            other => bail!(OutOfRange, "unknown behavior test {other:?} (expected cdr or mmse)"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Cluster {
    Healthy = 0,
    Impaired = 1,
}

impl Cluster {
    pub fn index(self) -> usize {
        self as usize
    }
}

pub const CDR_CUTOFF: f64 = 0.5;
pub const MMSE_CUTOFF: f64 = 27.0;
const CDR_MAX: f64 = 3.0;
const MMSE_MAX: f64 = 30.0;

/// CDR at or above 0.5 is impaired; MMSE at or above 27 is healthy.
pub fn binarize_behavior(test: BehaviorTest, value: f64) -> Result<Cluster> {
    match test {
        BehaviorTest::Cdr => {
            if !(0.0..=CDR_MAX).contains(&value) {
                bail!(OutOfRange, "CDR {value} outside [0, {CDR_MAX}]");
            }
            Ok(if value >= CDR_CUTOFF { Cluster::Impaired } else { Cluster::Healthy })
        }
        BehaviorTest::Mmse => {
            if !(0.0..=MMSE_MAX).contains(&value) {
                bail!(OutOfRange, "MMSE {value} outside [0, {MMSE_MAX}]");
            }
            Ok(if value >= MMSE_CUTOFF { Cluster::Healthy } else { Cluster::Impaired })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn published_cutoffs() {
        assert_eq!(binarize_behavior(BehaviorTest::Cdr, 0.0).unwrap(), Cluster::Healthy);
        assert_eq!(binarize_behavior(BehaviorTest::Mmse, 14.0).unwrap(), Cluster::Impaired);
        assert_eq!(binarize_behavior(BehaviorTest::Cdr, 0.5).unwrap(), Cluster::Impaired);
        assert_eq!(binarize_behavior(BehaviorTest::Mmse, 27.0).unwrap(), Cluster::Healthy);
    }

    #[test]
    fn boundaries_exhaustively() {
        // every half-step CDR and every integer MMSE
        for k in 0..=6 {
            let cdr = f64::from(k) * 0.5;
            let want = if k >= 1 { Cluster::Impaired } else { Cluster::Healthy };
            assert_eq!(binarize_behavior(BehaviorTest::Cdr, cdr).unwrap(), want);
        }
        assert_eq!(binarize_behavior(BehaviorTest::Cdr, 0.4999).unwrap(), Cluster::Healthy);
        for m in 0..=30 {
            let want = if m >= 27 { Cluster::Healthy } else { Cluster::Impaired };
            assert_eq!(binarize_behavior(BehaviorTest::Mmse, f64::from(m)).unwrap(), want);
        }
    }

    #[test]
    fn out_of_range_scores() {
        assert!(binarize_behavior(BehaviorTest::Cdr, -0.5).is_err());
        assert!(binarize_behavior(BehaviorTest::Cdr, f64::NAN).is_err());
        assert!(binarize_behavior(BehaviorTest::Mmse, 31.0).is_err());
        assert_eq!("MMSE".parse::<BehaviorTest>().unwrap(), BehaviorTest::Mmse);
    }
}
