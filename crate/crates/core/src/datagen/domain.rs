use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sorted, pairwise-disjoint closed intervals on one axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntervalUnion {
    intervals: Vec<(f64, f64)>,
}

impl IntervalUnion {
    pub fn new(mut intervals: Vec<(f64, f64)>) -> Result<Self> {
        if intervals.is_empty() {
            return Err(Error::InvalidArgument("interval union is empty".into()));
        }
        for &(lo, hi) in &intervals {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::InvalidArgument(format!("interval [{lo}, {hi}] is empty or not finite")));
            }
        }
        intervals.sort_by(|a, b| a.0.total_cmp(&b.0));
        for w in intervals.windows(2) {
            if w[1].0 <= w[0].1 {
                return Err(Error::InvalidArgument(format!(
                    "intervals [{}, {}] and [{}, {}] overlap",
                    w[0].0, w[0].1, w[1].0, w[1].1
                )));
            }
        }
        Ok(Self { intervals })
    }

    pub fn single(lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![(lo, hi)])
    }

    pub fn intervals(&self) -> &[(f64, f64)] {
        &self.intervals
    }

    pub fn measure(&self) -> f64 {
        self.intervals.iter().map(|(lo, hi)| hi - lo).sum()
    }

    pub fn lower(&self) -> f64 {
        self.intervals[0].0
    }

    pub fn upper(&self) -> f64 {
        self.intervals[self.intervals.len() - 1].1
    }

    pub fn contains(&self, x: f64) -> bool {
        self.intervals.iter().any(|&(lo, hi)| (lo..=hi).contains(&x))
    }

    /// Inverse CDF of the uniform distribution on the union, `u ∈ [0, 1]`.
    pub fn quantile(&self, u: f64) -> f64 {
        let mut remaining = u.clamp(0.0, 1.0) * self.measure();
        for &(lo, hi) in &self.intervals {
            let len = hi - lo;
            if remaining <= len {
                return lo + remaining;
            }
            remaining -= len;
        }
        self.upper()
    }
}

/// Admissible parameter region.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    /// Cartesian product of one interval union per dimension.
    Product(Vec<IntervalUnion>),
    /// Union of pairwise-disjoint axis-aligned boxes, each a list of
    /// per-dimension `(lo, hi)` ranges.
    Boxes(Vec<Vec<(f64, f64)>>),
}

/// A parameter region together with the global bounds `(μ_min, μ_max)` it
/// must lie in.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParameterDomain {
    region: Region,
    bounds: Vec<(f64, f64)>,
}

impl ParameterDomain {
    pub fn new(region: Region, bounds: Vec<(f64, f64)>) -> Result<Self> {
        if bounds.is_empty() {
            return Err(Error::InvalidArgument("domain needs at least one dimension".into()));
        }
        for &(lo, hi) in &bounds {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::InvalidArgument(format!("global bound [{lo}, {hi}] is invalid")));
            }
        }
        let inside = |d: usize, lo: f64, hi: f64| lo >= bounds[d].0 && hi <= bounds[d].1;
        match &region {
            Region::Product(dims) => {
                if dims.len() != bounds.len() {
                    return Err(Error::DimensionMismatch {
                        context: "domain dimensions".into(),
                        expected: bounds.len(),
                        actual: dims.len(),
                    });
                }
                for (d, u) in dims.iter().enumerate() {
                    if !inside(d, u.lower(), u.upper()) {
                        return Err(Error::InvalidArgument(format!("dimension {d} leaves the global bounds")));
                    }
                }
            }
            Region::Boxes(boxes) => {
                if boxes.is_empty() {
                    return Err(Error::InvalidArgument("box union is empty".into()));
                }
                for b in boxes {
                    if b.len() != bounds.len() {
                        return Err(Error::DimensionMismatch {
                            context: "box dimensions".into(),
                            expected: bounds.len(),
                            actual: b.len(),
                        });
                    }
                    for (d, &(lo, hi)) in b.iter().enumerate() {
                        if lo >= hi || !inside(d, lo, hi) {
                            return Err(Error::InvalidArgument(format!(
                                "box side [{lo}, {hi}] in dimension {d} is empty or out of bounds"
                            )));
                        }
                    }
                }
                for (i, a) in boxes.iter().enumerate() {
                    for b in &boxes[i + 1..] {
                        let overlap = a.iter().zip(b).all(|(p, q)| p.0 < q.1 && q.0 < p.1);
                        if overlap {
                            return Err(Error::InvalidArgument(format!("boxes {a:?} and {b:?} overlap")));
                        }
                    }
                }
            }
        }
        Ok(Self { region, bounds })
    }

    /// Axis-aligned box `[lo_d, hi_d]` that is also its own global bound.
    pub fn rectangle(ranges: &[(f64, f64)]) -> Result<Self> {
        let dims = ranges
            .iter()
            .map(|&(lo, hi)| IntervalUnion::single(lo, hi))
            .collect::<Result<Vec<_>>>()?;
        Self::new(Region::Product(dims), ranges.to_vec())
    }

    pub fn region(&self) -> &Region {
        &self.region
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn contains(&self, mu: &[f64]) -> bool {
        if mu.len() != self.dim() {
            return false;
        }
        match &self.region {
            Region::Product(dims) => dims.iter().zip(mu).all(|(u, &x)| u.contains(x)),
            Region::Boxes(boxes) => boxes
                .iter()
                .any(|b| b.iter().zip(mu).all(|(&(lo, hi), &x)| (lo..=hi).contains(&x))),
        }
    }

    pub fn within_bounds(&self, mu: &[f64]) -> bool {
        mu.len() == self.dim() && self.bounds.iter().zip(mu).all(|(&(lo, hi), &x)| (lo..=hi).contains(&x))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CaseId {
    #[serde(rename = "1a")]
    C1a,
    #[serde(rename = "1b")]
    C1b,
    #[serde(rename = "1c")]
    C1c,
    #[serde(rename = "1d")]
    C1d,
}

impl CaseId {
    pub const ALL: [CaseId; 4] = [CaseId::C1a, CaseId::C1b, CaseId::C1c, CaseId::C1d];
}

impl fmt::Display for CaseId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CaseId::C1a => "1a",
            CaseId::C1b => "1b",
            CaseId::C1c => "1c",
            CaseId::C1d => "1d",
        })
    }
}

impl FromStr for CaseId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().trim_start_matches("case").trim_start_matches('-') {
            "1a" => Ok(CaseId::C1a),
            "1b" => Ok(CaseId::C1b),
            "1c" => Ok(CaseId::C1c),
            "1d" => Ok(CaseId::C1d),
            other => Err(Error::InvalidArgument(format!("unknown case {other:?}; expected 1a, 1b, 1c or 1d"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Train,
    Test,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Train => "train",
            Role::Test => "test",
        })
    }
}

impl FromStr for Role {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "train" => Ok(Role::Train),
            "test" => Ok(Role::Test),
            other => Err(Error::InvalidArgument(format!("unknown role {other:?}; expected train or test"))),
        }
    }
}

/// Stiffness range shared by every Duffing case.
pub const STIFFNESS_RANGE: (f64, f64) = (10.0, 100.0);
/// Damping range shared by every Duffing case.
pub const DAMPING_RANGE: (f64, f64) = (1.0, 10.0);

/// Train/test parameter region of a Duffing case over (stiffness, damping).
pub fn case_domain(case: CaseId, role: Role) -> Result<ParameterDomain> {
    let bounds = vec![STIFFNESS_RANGE, DAMPING_RANGE];
    if role == Role::Test {
        return ParameterDomain::rectangle(&bounds);
    }
    let region = match case {
        CaseId::C1a => Region::Product(vec![
            IntervalUnion::single(10.0, 100.0)?,
            IntervalUnion::single(1.0, 10.0)?,
        ]),
        CaseId::C1b => Region::Product(vec![
            IntervalUnion::new(vec![(10.0, 40.0), (70.0, 100.0)])?,
            IntervalUnion::new(vec![(1.0, 4.0), (7.0, 10.0)])?,
        ]),
        // Complement of the Case 1b corners: a cross made of the central
        // stiffness band and the central damping band.
        CaseId::C1c => Region::Boxes(vec![
            vec![(40.0, 70.0), (1.0, 10.0)],
            vec![(10.0, 40.0), (4.0, 7.0)],
            vec![(70.0, 100.0), (4.0, 7.0)],
        ]),
        CaseId::C1d => Region::Product(vec![
            IntervalUnion::single(25.0, 85.0)?,
            IntervalUnion::single(2.5, 8.5)?,
        ]),
    };
    ParameterDomain::new(region, bounds)
}
