//! Rejection-control constants `M(i, t)`, stored as `log M` with `-inf`
//! meaning `M = 0`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prc::log_of_m;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MMode {
    /// One constant per particle and time step.
    PerParticle,
    /// One constant per time step, shared by all particles.
    SharedPerTime,
    /// One constant everywhere.
    Constant,
}

impl std::str::FromStr for MMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per-particle" => Ok(Self::PerParticle),
            "shared-per-time" | "shared" => Ok(Self::SharedPerTime),
            "constant" => Ok(Self::Constant),
            other => Err(Error::Config(format!("unknown M mode `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum LogM {
    /// Indexed `[t][i]`.
    PerParticle(Vec<Vec<f64>>),
    SharedPerTime(Vec<f64>),
    Constant(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct MSchedule {
    values: LogM,
}

impl MSchedule {
    /// `M = 0` everywhere: plain importance weighting.
    pub fn zero() -> Self {
        Self {
            values: LogM::Constant(f64::NEG_INFINITY),
        }
    }

    pub fn constant(m: f64) -> Result<Self> {
        Ok(Self {
            values: LogM::Constant(log_of_m(m)?),
        })
    }

    pub fn constant_log(log_m: f64) -> Result<Self> {
        check_log_m(log_m)?;
        Ok(Self {
            values: LogM::Constant(log_m),
        })
    }

    /// `log_m[t][i]` for particle `i` proposed at step `t`.
    pub fn per_particle_log(log_m: Vec<Vec<f64>>) -> Result<Self> {
        if log_m.is_empty() {
            return Err(Error::Config("per-particle schedule needs at least one step".into()));
        }
        let n = log_m[0].len();
        for row in &log_m {
            if row.len() != n || n == 0 {
                return Err(Error::Config("per-particle schedule rows must share a non-zero length".into()));
            }
            row.iter().try_for_each(|&v| check_log_m(v))?;
        }
        Ok(Self {
            values: LogM::PerParticle(log_m),
        })
    }

    pub fn shared_log(log_m: Vec<f64>) -> Result<Self> {
        if log_m.is_empty() {
            return Err(Error::Config("shared schedule needs at least one step".into()));
        }
        log_m.iter().try_for_each(|&v| check_log_m(v))?;
        Ok(Self {
            values: LogM::SharedPerTime(log_m),
        })
    }

    pub fn mode(&self) -> MMode {
        match self.values {
            LogM::PerParticle(_) => MMode::PerParticle,
            LogM::SharedPerTime(_) => MMode::SharedPerTime,
            LogM::Constant(_) => MMode::Constant,
        }
    }

    /// `log M` for particle `i` at step `t`.
    #[inline]
    pub fn log_m(&self, particle: usize, t: usize) -> f64 {
        match &self.values {
            LogM::PerParticle(v) => v[t][particle],
            LogM::SharedPerTime(v) => v[t],
            LogM::Constant(c) => *c,
        }
    }

    pub fn is_zero(&self) -> bool {
        match &self.values {
            LogM::PerParticle(v) => v.iter().flatten().all(|x| *x == f64::NEG_INFINITY),
            LogM::SharedPerTime(v) => v.iter().all(|x| *x == f64::NEG_INFINITY),
            LogM::Constant(c) => *c == f64::NEG_INFINITY,
        }
    }

    /// Checks that the schedule covers `steps` time steps and `n` particles.
    pub fn validate(&self, n: usize, steps: usize) -> Result<()> {
        match &self.values {
            LogM::PerParticle(v) => {
                if v.len() < steps || v[0].len() < n {
                    return Err(Error::Config(format!(
                        "per-particle schedule is {}x{}, need at least {steps} steps x {n} particles",
                        v.len(),
                        v[0].len()
                    )));
                }
            }
            LogM::SharedPerTime(v) => {
                if v.len() < steps {
                    return Err(Error::Config(format!(
                        "shared schedule has {} steps, need {steps}",
                        v.len()
                    )));
                }
            }
            LogM::Constant(_) => {}
        }
        Ok(())
    }
}

fn check_log_m(v: f64) -> Result<()> {
    if v.is_nan() || v == f64::INFINITY {
        return Err(Error::Config(format!("invalid log M value {v}")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lookup_by_mode() {
        let s = MSchedule::per_particle_log(vec![vec![0.0, 1.0], vec![2.0, 3.0]]).unwrap();
        assert_eq!(s.log_m(1, 0), 1.0);
        assert_eq!(s.log_m(0, 1), 2.0);
        assert_eq!(s.mode(), MMode::PerParticle);
        let s = MSchedule::shared_log(vec![-1.0, 0.5]).unwrap();
        assert_eq!(s.log_m(7, 1), 0.5);
        assert!(MSchedule::zero().is_zero());
        assert!(!MSchedule::constant(1.0).unwrap().is_zero());
        assert!(MSchedule::constant(-1.0).is_err());
    }

    #[test]
    fn validate_shapes() {
        let s = MSchedule::shared_log(vec![0.0; 3]).unwrap();
        assert!(s.validate(4, 3).is_ok());
        assert!(s.validate(4, 4).is_err());
        assert!(MSchedule::per_particle_log(vec![vec![0.0], vec![0.0, 1.0]]).is_err());
    }
}
