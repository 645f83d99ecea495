//! Bayes composition of the model likelihood into an occurrence probability:
//!
//! `P(fire | cause, other) = P(cause | fire, other) · P(fire | other) · P(other) / P(cause, other)`

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BayesInputs {
    /// Model output, `P(cause | fire, other)`.
    pub p_cause_given_fire: f64,
    /// Externally sourced ignition probability, `P(fire | other)`.
    pub p_fire_given_other: f64,
    pub p_other: f64,
    pub p_cause_and_other: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Posterior {
    /// The composed value, never clamped.
    pub value: f64,
    /// Set when `value > 1`, meaning the inputs cannot come from one joint
    /// distribution.
    pub inconsistent: bool,
}

impl Posterior {
    pub fn clamped(&self) -> f64 {
        self.value.min(1.0)
    }
}

pub fn bayes_compose(b: &BayesInputs) -> Result<Posterior> {
    let probs = [
        ("p_cause_given_fire", b.p_cause_given_fire),
        ("p_fire_given_other", b.p_fire_given_other),
        ("p_other", b.p_other),
        ("p_cause_and_other", b.p_cause_and_other),
    ];
    for (name, p) in probs {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Domain(format!("{name} = {p} is not a probability")));
        }
    }
    if b.p_cause_and_other <= 0.0 {
        return Err(Error::Domain("P(cause, other) must be positive".into()));
    }
    let value = b.p_cause_given_fire * b.p_fire_given_other * b.p_other / b.p_cause_and_other;
    Ok(Posterior { value, inconsistent: value > 1.0 })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inputs(a: f64, b: f64, c: f64, d: f64) -> BayesInputs {
        BayesInputs {
            p_cause_given_fire: a,
            p_fire_given_other: b,
            p_other: c,
            p_cause_and_other: d,
        }
    }

    #[test]
    fn examples() {
        assert_eq!(bayes_compose(&inputs(0.0, 0.3, 0.4, 0.2)).unwrap().value, 0.0);
        let p = bayes_compose(&inputs(1.0, 1.0, 1.0, 1.0)).unwrap();
        assert_eq!(p.value, 1.0);
        assert!(!p.inconsistent);
    }

    #[test]
    fn zero_denominator_is_a_domain_error() {
        assert!(matches!(
            bayes_compose(&inputs(0.5, 0.5, 0.5, 0.0)),
            Err(Error::Domain(_))
        ));
        assert!(bayes_compose(&inputs(1.2, 0.5, 0.5, 0.5)).is_err());
    }

    #[test]
    fn values_above_one_are_flagged_not_clamped() {
        let p = bayes_compose(&inputs(0.9, 0.9, 0.9, 0.1)).unwrap();
        assert!(p.inconsistent);
        assert!(p.value > 1.0);
        assert_eq!(p.clamped(), 1.0);
    }
}
