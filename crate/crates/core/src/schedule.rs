//! Exploration schedules.

/// Linear decay from `start` to `end` over `decay_steps`, flat afterwards.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    pub decay_steps: u64,
}

impl Default for EpsilonSchedule {
    fn default() -> Self {
        Self {
            start: 1.0,
            end: 0.05,
            decay_steps: 100_000,
        }
    }
}

impl EpsilonSchedule {
    pub fn constant(epsilon: f64) -> Self {
        Self {
            start: epsilon,
            end: epsilon,
            decay_steps: 1,
        }
    }

    pub fn at(&self, step: u64) -> f64 {
        if step >= self.decay_steps {
            return self.end;
        }
        let frac = step as f64 / self.decay_steps as f64;
        self.start + (self.end - self.start) * frac
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.start) || !(0.0..=1.0).contains(&self.end) {
            return Err(format!("epsilon values must lie in [0, 1], got {} and {}", self.start, self.end));
        }
        if self.decay_steps < 1 {
            return Err("epsilon decay steps must be at least 1".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_decay() {
        let s = EpsilonSchedule::default();
        assert_eq!(s.at(0), 1.0);
        assert_eq!(s.at(100_000), 0.05);
        assert_eq!(s.at(1_000_000), 0.05);
        assert!((s.at(50_000) - 0.525).abs() < 1e-15);
    }

    #[test]
    fn constant_schedule() {
        let s = EpsilonSchedule::constant(0.3);
        assert_eq!(s.at(0), 0.3);
        assert_eq!(s.at(7), 0.3);
    }
}
