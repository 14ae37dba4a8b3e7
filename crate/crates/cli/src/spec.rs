//! Parsers for `name=value` and `min:max:count` arguments.

use std::str::FromStr;

use wsep_core::Coordinate;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RangeSpec {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl RangeSpec {
    pub fn values(&self) -> Vec<f64> {
        (0..self.count)
            .map(|i| self.min + (self.max - self.min) * i as f64 / (self.count - 1) as f64)
            .collect()
    }
}

impl FromStr for RangeSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(':').collect();
        let [a, b, n] = parts.as_slice() else {
            return Err(format!("expected min:max:count, got `{s}`"));
        };
        let min: f64 = a.trim().parse().map_err(|_| format!("bad number `{a}`"))?;
        let max: f64 = b.trim().parse().map_err(|_| format!("bad number `{b}`"))?;
        let count: usize = n.trim().parse().map_err(|_| format!("bad count `{n}`"))?;
        if !(min.is_finite() && max.is_finite()) {
            return Err("range bounds must be finite".into());
        }
        if min >= max {
            return Err(format!("range {min}:{max} is empty or inverted"));
        }
        if count < 2 {
            return Err("count must be at least 2".into());
        }
        Ok(Self { min, max, count })
    }
}

/// `name=min:max:count`
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisSpec {
    pub coordinate: Coordinate,
    pub range: RangeSpec,
}

impl FromStr for AxisSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (name, range) = s.split_once('=').ok_or_else(|| format!("expected name=min:max:count, got `{s}`"))?;
        Ok(Self {
            coordinate: name.trim().parse().map_err(|e: wsep_core::Error| e.to_string())?,
            range: range.parse()?,
        })
    }
}

/// `name=value`
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixSpec {
    pub coordinate: Coordinate,
    pub value: f64,
}

impl FromStr for FixSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (name, value) = s.split_once('=').ok_or_else(|| format!("expected name=value, got `{s}`"))?;
        let value: f64 = value.trim().parse().map_err(|_| format!("bad number `{value}`"))?;
        if !value.is_finite() {
            return Err("value must be finite".into());
        }
        Ok(Self {
            coordinate: name.trim().parse().map_err(|e: wsep_core::Error| e.to_string())?,
            value,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranges() {
        let r: RangeSpec = "0.25:0.28:4".parse().unwrap();
        assert_eq!(r.count, 4);
        assert!((r.values()[3] - 0.28).abs() < 1e-15);
        assert!("0.3:0.2:5".parse::<RangeSpec>().is_err());
        assert!("0.1:0.2:1".parse::<RangeSpec>().is_err());
        assert!("0.1:0.2".parse::<RangeSpec>().is_err());
    }

    #[test]
    fn axes_and_fixes() {
        let a: AxisSpec = "invF=3:5:11".parse().unwrap();
        assert_eq!(a.coordinate, Coordinate::InvField);
        let a: AxisSpec = "phi=-3.1:-2.9:3".parse().unwrap();
        assert_eq!(a.range.min, -3.1);
        let f: FixSpec = "delta=1".parse().unwrap();
        assert_eq!((f.coordinate, f.value), (Coordinate::Delta, 1.0));
        assert!("gamma=1".parse::<FixSpec>().is_err());
    }
}
