//! Family names: `z2`, `z3`, `Z^4`, `slab:3:2`, `slab(d=3,K=2)` and `long-range`.

use std::fmt;
use std::str::FromStr;

use trunclab_core::percolation::LatticeFamily;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FamilyArg {
    Lattice(LatticeFamily),
    /// Long-range `Z^2` with a truncated law.
    LongRange,
}

#[derive(Debug, thiserror::Error)]
#[error("unknown family `{0}` (expected z<d>, slab:<d>:<K> or long-range)")]
pub struct FamilyParseError(String);

fn number<T: FromStr>(s: &str, whole: &str) -> Result<T, FamilyParseError> {
    s.trim().parse().map_err(|_| FamilyParseError(whole.into()))
}

pub fn parse_lattice(s: &str) -> Result<LatticeFamily, FamilyParseError> {
    let t = s.trim().to_ascii_lowercase();
    let family = if let Some(d) = t.strip_prefix("z^").or_else(|| t.strip_prefix('z')) {
        LatticeFamily::Hypercubic { d: number(d, s)? }
    } else if let Some(rest) = t.strip_prefix("slab:") {
        let (d, k) = rest.split_once(':').ok_or_else(|| FamilyParseError(s.into()))?;
        LatticeFamily::Slab {
            d: number(d, s)?,
            k: number(k, s)?,
        }
    } else if let Some(rest) = t.strip_prefix("slab(d=").and_then(|r| r.strip_suffix(')')) {
        let (d, k) = rest.split_once(",k=").ok_or_else(|| FamilyParseError(s.into()))?;
        LatticeFamily::Slab {
            d: number(d, s)?,
            k: number(k, s)?,
        }
    } else {
        return Err(FamilyParseError(s.into()));
    };
    family.validate().map_err(|_| FamilyParseError(s.into()))?;
    Ok(family)
}

impl FromStr for FamilyArg {
    type Err = FamilyParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "long-range" | "longrange" | "long_range" => Ok(Self::LongRange),
            _ => parse_lattice(s).map(Self::Lattice),
        }
    }
}

impl fmt::Display for FamilyArg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Lattice(family) => family.fmt(f),
            Self::LongRange => f.write_str("long-range"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names() {
        assert_eq!(
            "z2".parse::<FamilyArg>().unwrap(),
            FamilyArg::Lattice(LatticeFamily::Hypercubic { d: 2 })
        );
        assert_eq!(
            "Z^3".parse::<FamilyArg>().unwrap(),
            FamilyArg::Lattice(LatticeFamily::Hypercubic { d: 3 })
        );
        assert_eq!(
            "slab:3:2".parse::<FamilyArg>().unwrap(),
            FamilyArg::Lattice(LatticeFamily::Slab { d: 3, k: 2 })
        );
        assert_eq!(
            "slab(d=4,K=1)".parse::<FamilyArg>().unwrap(),
            FamilyArg::Lattice(LatticeFamily::Slab { d: 4, k: 1 })
        );
        assert_eq!("long-range".parse::<FamilyArg>().unwrap(), FamilyArg::LongRange);
        for bad in ["", "z", "slab:1:2", "slab:3:0", "torus"] {
            assert!(bad.parse::<FamilyArg>().is_err(), "{bad}");
        }
    }

    #[test]
    fn display_round_trips() {
        for s in ["z2", "slab:3:2"] {
            let f: FamilyArg = s.parse().unwrap();
            assert_eq!(f.to_string().parse::<FamilyArg>().unwrap(), f);
        }
    }
}
