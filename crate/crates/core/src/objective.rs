//! Evaluators consumed by the optimizers.

/// Whether an evaluator is the expensive function being optimized or a
/// cheap stand-in for it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObjectiveKind {
    True,
    Surrogate,
}

/// A scalar function to be minimized.
///
/// Evaluations through a [`ObjectiveKind::True`] objective are counted and
/// archived by the optimizers; surrogate evaluations are free.
pub trait Objective {
    fn evaluate(&mut self, x: &[f64]) -> f64;

    fn kind(&self) -> ObjectiveKind {
        ObjectiveKind::True
    }

    /// Value compared against the run's target. Objectives with observation
    /// noise override this to report the underlying noiseless value.
    fn target_value(&self, _x: &[f64], observed: f64) -> f64 {
        observed
    }
}

impl<F> Objective for F
where
    F: FnMut(&[f64]) -> f64,
{
    fn evaluate(&mut self, x: &[f64]) -> f64 {
        self(x)
    }
}

/// Wraps an objective and counts the calls routed through it.
#[derive(Debug)]
pub struct Counting<O> {
    pub inner: O,
    pub calls: usize,
}

impl<O> Counting<O> {
    pub fn new(inner: O) -> Self {
        Self { inner, calls: 0 }
    }
}

impl<O: Objective> Objective for Counting<O> {
    fn evaluate(&mut self, x: &[f64]) -> f64 {
        self.calls += 1;
        self.inner.evaluate(x)
    }

    fn kind(&self) -> ObjectiveKind {
        self.inner.kind()
    }

    fn target_value(&self, x: &[f64], observed: f64) -> f64 {
        self.inner.target_value(x, observed)
    }
}
