use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fixed `(c, eta, beta)` for every round.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantSchedule {
    pub c: f64,
    pub eta: f64,
    pub beta: f64,
}

/// The step sizes under which the convergence theorem holds.
///
/// `parties` and `q` default to the run's K and Q when left out.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Theorem2Schedule {
    pub beta: f64,
    pub tau: f64,
    #[serde(rename = "L")]
    pub l: f64,
    #[serde(rename = "L_lambda")]
    pub l_lambda: f64,
    #[serde(rename = "L12")]
    pub l12: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parties: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScheduleSpec {
    Constant(ConstantSchedule),
    Theorem2(Theorem2Schedule),
}

impl Default for ScheduleSpec {
    /// `c = 1e-3`, `eta = 100`, `beta = 0.1`.
    fn default() -> Self {
        ScheduleSpec::Constant(ConstantSchedule { c: 1e-3, eta: 100.0, beta: 0.1 })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScheduleValues {
    pub c_t: f64,
    pub eta_t: f64,
    pub beta: f64,
}

impl ScheduleSpec {
    /// Fills in K and Q for a theorem2 schedule that left them out.
    pub fn resolve(self, parties: usize, q: usize) -> Self {
        match self {
            ScheduleSpec::Theorem2(mut s) => {
                s.parties.get_or_insert(parties);
                s.q.get_or_insert(q);
                ScheduleSpec::Theorem2(s)
            }
            other => other,
        }
    }

    pub fn check(&self) -> Result<()> {
        match *self {
            ScheduleSpec::Constant(ConstantSchedule { c, eta, beta }) => {
                for (name, v) in [("c", c), ("eta", eta), ("beta", beta)] {
                    if !(v > 0.0 && v.is_finite()) {
                        return Err(Error::Schedule(format!("constant schedule needs {name} > 0, got {v}")));
                    }
                }
            }
            ScheduleSpec::Theorem2(s) => {
                if !(s.tau > 8.0) {
                    return Err(Error::Schedule(format!("theorem2 schedule needs tau > 8, got {}", s.tau)));
                }
                if !(s.beta > 0.0) || !(s.beta >= s.l_lambda) {
                    return Err(Error::Schedule(format!(
                        "theorem2 schedule needs beta > 0 and beta >= L_lambda, got beta = {}, L_lambda = {}",
                        s.beta, s.l_lambda
                    )));
                }
                if !(s.l >= 0.0 && s.l12 >= 0.0 && s.l_lambda >= 0.0) {
                    return Err(Error::Schedule("smoothness constants must be >= 0".into()));
                }
                if s.parties == Some(0) || s.q == Some(0) {
                    return Err(Error::Schedule("theorem2 schedule needs K >= 1 and Q >= 1".into()));
                }
            }
        }
        Ok(())
    }

    pub fn beta(&self) -> f64 {
        match self {
            ScheduleSpec::Constant(s) => s.beta,
            ScheduleSpec::Theorem2(s) => s.beta,
        }
    }
}

/// `(c_t, eta_t, beta)` for round `t`.
///
/// The theorem2 schedule is undefined at `t = 0` and starts at `t = 1`:
/// `c_t = beta t^(-1/4) / 2` and `eta_t` at equality in the theorem's bound,
/// `[L^2 (KQ+2)(KQ-1) + 2(L+1)] / 4 + L12^2 K Q (1 + 32 tau sqrt(t)) / (2 beta)`.
pub fn schedule_values(spec: &ScheduleSpec, t: usize) -> Result<ScheduleValues> {
    spec.check()?;
    match *spec {
        ScheduleSpec::Constant(s) => Ok(ScheduleValues { c_t: s.c, eta_t: s.eta, beta: s.beta }),
        ScheduleSpec::Theorem2(s) => {
            if t == 0 {
                return Err(Error::Schedule("theorem2 schedule starts at t = 1".into()));
            }
            let (Some(k), Some(q)) = (s.parties, s.q) else {
                return Err(Error::Schedule("theorem2 schedule needs K and Q".into()));
            };
            let tf = t as f64;
            let kq = (k * q) as f64;
            let c_t = s.beta * tf.powf(-0.25) / 2.0;
            let eta_t = (s.l * s.l * (kq + 2.0) * (kq - 1.0) + 2.0 * (s.l + 1.0)) / 4.0
                + s.l12 * s.l12 * kq * (1.0 + 32.0 * s.tau * tf.sqrt()) / (2.0 * s.beta);
            Ok(ScheduleValues { c_t, eta_t, beta: s.beta })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t2(beta: f64, tau: f64) -> ScheduleSpec {
        ScheduleSpec::Theorem2(Theorem2Schedule {
            beta,
            tau,
            l: 1.0,
            l_lambda: 0.0,
            l12: 1.0,
            parties: Some(2),
            q: Some(1),
        })
    }

    #[test]
    fn constant_defaults() {
        for t in [0, 1, 500] {
            let v = schedule_values(&ScheduleSpec::default(), t).unwrap();
            assert_eq!((v.c_t, v.eta_t, v.beta), (1e-3, 100.0, 0.1));
        }
    }

    #[test]
    fn theorem2_values() {
        let c = schedule_values(&t2(0.1, 9.0), 16).unwrap().c_t;
        assert!((c - 0.025).abs() < 1e-15);
        // hand substitution: (1*4*1 + 2*2)/4 + 1*2*(1 + 32*9*1)/(2*1) = 2 + 289
        assert_eq!(schedule_values(&t2(1.0, 9.0), 1).unwrap().eta_t, 291.0);
    }

    #[test]
    fn theorem2_is_monotone() {
        let s = t2(0.5, 10.0);
        let mut prev = schedule_values(&s, 1).unwrap();
        for t in 2..200 {
            let v = schedule_values(&s, t).unwrap();
            assert!(v.c_t < prev.c_t && v.eta_t > prev.eta_t);
            prev = v;
        }
    }

    #[test]
    fn theorem2_rejects_bad_parameters() {
        assert!(schedule_values(&t2(1.0, 8.0), 1).is_err());
        assert!(schedule_values(&t2(1.0, 9.0), 0).is_err());
        let mut s = t2(0.1, 9.0);
        if let ScheduleSpec::Theorem2(ref mut x) = s {
            x.l_lambda = 0.2;
        }
        assert!(matches!(schedule_values(&s, 1), Err(Error::Schedule(_))));
        let bad = ScheduleSpec::Constant(ConstantSchedule { c: 0.0, eta: 100.0, beta: 0.1 });
        assert!(bad.check().is_err());
    }

    #[test]
    fn parses_and_resolves() {
        let s: ScheduleSpec = toml::from_str("kind = \"theorem2\"\nbeta = 1.0\ntau = 9.0\nL = 1.0\nL_lambda = 0.0\nL12 = 1.0").unwrap();
        let ScheduleSpec::Theorem2(r) = s.resolve(6, 4) else { panic!() };
        assert_eq!((r.parties, r.q), (Some(6), Some(4)));
        let c: ScheduleSpec = toml::from_str("kind = \"constant\"\nc = 0.001\neta = 100.0\nbeta = 0.1").unwrap();
        assert_eq!(c, ScheduleSpec::default());
        assert!(toml::from_str::<ScheduleSpec>("kind = \"constant\"\nc = 0.001\neta = 100.0\nbeta = 0.1\nx = 1").is_err());
    }
}
