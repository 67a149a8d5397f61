//! Valuation distributions on `[0, v_h]`.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::numeric::bisect;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ValueDistribution {
    Uniform {
        hi: f64,
    },
    /// Exponential with the given rate, conditioned on `[0, hi]`.
    TruncatedExponential {
        rate: f64,
        hi: f64,
    },
    /// Beta(2, 2) on `[0, 1]`.
    Beta22,
}

impl ValueDistribution {
    pub fn uniform() -> Self {
        ValueDistribution::Uniform { hi: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            ValueDistribution::Uniform { hi } if !(hi.is_finite() && hi > 0.0) => {
                Err(Error::Domain(format!("uniform upper end {hi} must be > 0")))
            }
            ValueDistribution::TruncatedExponential { rate, hi }
                if !(rate.is_finite() && rate > 0.0 && hi.is_finite() && hi > 0.0) =>
            {
                Err(Error::Domain(format!(
                    "truncated exponential needs rate > 0 and hi > 0, got {rate}, {hi}"
                )))
            }
            _ => Ok(()),
        }
    }

    pub fn v_high(&self) -> f64 {
        match *self {
            ValueDistribution::Uniform { hi } => hi,
            ValueDistribution::TruncatedExponential { hi, .. } => hi,
            ValueDistribution::Beta22 => 1.0,
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let hi = self.v_high();
        if x <= 0.0 {
            return 0.0;
        }
        if x >= hi {
            return 1.0;
        }
        match *self {
            ValueDistribution::Uniform { hi } => x / hi,
            ValueDistribution::TruncatedExponential { rate, hi } => (-rate * x).exp_m1() / (-rate * hi).exp_m1(),
            ValueDistribution::Beta22 => x * x * (3.0 - 2.0 * x),
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        if x < 0.0 || x > self.v_high() {
            return 0.0;
        }
        match *self {
            ValueDistribution::Uniform { hi } => 1.0 / hi,
            ValueDistribution::TruncatedExponential { rate, hi } => rate * (-rate * x).exp() / -(-rate * hi).exp_m1(),
            ValueDistribution::Beta22 => 6.0 * x * (1.0 - x),
        }
    }

    pub fn quantile(&self, p: f64) -> f64 {
        let p = p.clamp(0.0, 1.0);
        match *self {
            ValueDistribution::Uniform { hi } => p * hi,
            ValueDistribution::TruncatedExponential { rate, hi } => -(p * (-rate * hi).exp_m1()).ln_1p() / rate,
            ValueDistribution::Beta22 => {
                if p == 0.0 || p == 1.0 {
                    return p;
                }
                bisect(|x| self.cdf(x) - p, 0.0, 1.0).expect("cdf is continuous and spans [0, 1]")
            }
        }
    }

    pub fn sample<G: Rng + ?Sized>(&self, rng: &mut G) -> f64 {
        self.quantile(rng.random::<f64>())
    }
}

impl fmt::Display for ValueDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValueDistribution::Uniform { hi } => write!(f, "uniform:{hi}"),
            ValueDistribution::TruncatedExponential { rate, hi } => write!(f, "exp:{rate}:{hi}"),
            ValueDistribution::Beta22 => write!(f, "beta22"),
        }
    }
}

/// Accepts `uniform`, `uniform:HI`, `exp:RATE`, `exp:RATE:HI` and `beta22`.
impl FromStr for ValueDistribution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let num = |t: &str| {
            t.parse::<f64>()
                .map_err(|_| Error::Config(format!("'{t}' is not a number in distribution '{s}'")))
        };
        let dist = match parts.as_slice() {
            ["uniform"] => ValueDistribution::uniform(),
            ["uniform", hi] => ValueDistribution::Uniform { hi: num(hi)? },
            ["exp", rate] => ValueDistribution::TruncatedExponential {
                rate: num(rate)?,
                hi: 1.0,
            },
            ["exp", rate, hi] => ValueDistribution::TruncatedExponential {
                rate: num(rate)?,
                hi: num(hi)?,
            },
            ["beta22"] => ValueDistribution::Beta22,
            _ => return Err(Error::Config(format!("unknown distribution '{s}'"))),
        };
        dist.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(dist)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn all() -> [ValueDistribution; 3] {
        [
            ValueDistribution::Uniform { hi: 2.0 },
            ValueDistribution::TruncatedExponential { rate: 1.5, hi: 1.0 },
            ValueDistribution::Beta22,
        ]
    }

    #[test]
    fn cdf_endpoints_and_density() {
        for d in all() {
            assert_eq!(d.cdf(0.0), 0.0);
            assert_eq!(d.cdf(d.v_high()), 1.0);
            for i in 1..=10 {
                let x = d.v_high() * (i as f64 - 0.5) / 10.0;
                let fd = (d.cdf(x + 1e-6) - d.cdf(x - 1e-6)) / 2e-6;
                assert!((fd - d.pdf(x)).abs() < 1e-6, "{d} at {x}");
            }
        }
    }

    #[test]
    fn quantile_inverts_cdf() {
        for d in all() {
            for p in [0.01, 0.3, 0.5, 0.9, 0.999] {
                assert!((d.cdf(d.quantile(p)) - p).abs() < 1e-10, "{d}");
            }
        }
    }

    #[test]
    fn samples_have_the_right_mean() {
        let mut rng = seeded(3);
        let d = ValueDistribution::Beta22;
        let mean = (0..20_000).map(|_| d.sample(&mut rng)).sum::<f64>() / 20_000.0;
        assert!((mean - 0.5).abs() < 0.01);
    }

    #[test]
    fn parses_names() {
        assert_eq!(
            "uniform".parse::<ValueDistribution>().unwrap(),
            ValueDistribution::uniform()
        );
        assert_eq!(
            "exp:2:3".parse::<ValueDistribution>().unwrap(),
            ValueDistribution::TruncatedExponential { rate: 2.0, hi: 3.0 }
        );
        assert!("exp:-1".parse::<ValueDistribution>().is_err());
        assert!("normal".parse::<ValueDistribution>().is_err());
        for d in all() {
            assert_eq!(d.to_string().parse::<ValueDistribution>().unwrap(), d);
        }
    }
}
