//! Finite-difference verification of analytic gradients.
//!
//! Central differences around the evaluation point, compared per component
//! against the gradients produced by [`super::Graph::backward`]. The check
//! runs at `f32` with a coarse step or on the `f64` shadow path with a fine
//! step; the shadow path is the authoritative one for composite ops where
//! single-precision round-off would drown the signal.

use rand::seq::index::sample;
use rand::Rng;

use super::kernels::Real;

/// Step size, acceptance threshold, and per-tensor sample budget.
#[derive(Debug, Clone, Copy)]
pub struct GradCheckSettings {
    /// Perturbation half-width for central differences.
    pub step: f64,
    /// Maximum allowed relative error per component.
    pub tolerance: f64,
    /// Components sampled per input tensor; 0 checks every component.
    pub samples: usize,
}

impl GradCheckSettings {
    /// Single-precision check: coarse step, suitable for small compositions.
    pub fn single() -> Self {
        Self {
            step: 1e-3,
            tolerance: 1e-3,
            samples: 10,
        }
    }

    /// Double-precision shadow check: fine step, tight signal.
    pub fn shadow() -> Self {
        Self {
            step: 1e-5,
            tolerance: 1e-3,
            samples: 10,
        }
    }

    pub fn with_samples(mut self, samples: usize) -> Self {
        self.samples = samples;
        self
    }
}

/// One compared gradient component.
#[derive(Debug, Clone, Copy)]
pub struct GradComponent {
    /// Which input tensor the component belongs to.
    pub input: usize,
    /// Flat index within that tensor.
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_err: f64,
}

/// Outcome of a gradient check over one or more input tensors.
#[derive(Debug, Clone)]
pub struct GradReport {
    pub checked: usize,
    /// Component with the largest relative error, if anything was checked.
    pub worst: Option<GradComponent>,
    /// Components exceeding the tolerance.
    pub failures: Vec<GradComponent>,
}

impl GradReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn max_rel_err(&self) -> f64 {
        self.worst.map(|w| w.rel_err).unwrap_or(0.0)
    }
}

impl std::fmt::Display for GradReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match &self.worst {
            None => write!(f, "gradient check: nothing sampled"),
            Some(w) => write!(
                f,
                "gradient check: {} components, {} failures, worst rel_err {:.3e} \
                 (input {} index {}: analytic {:.6e} vs numeric {:.6e})",
                self.checked,
                self.failures.len(),
                w.rel_err,
                w.input,
                w.index,
                w.analytic,
                w.numeric
            ),
        }
    }
}

/// Relative error with a unit floor, so components far below 1 are compared
/// absolutely and larger ones proportionally.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1.0)
}

/// Compares analytic gradients against central differences of `f`.
///
/// `inputs` are perturbed in place and restored; `f` must re-evaluate the
/// scalar objective from the (possibly perturbed) inputs on every call and
/// must be deterministic. `analytic[i]` is the gradient for `inputs[i]`
/// (empty slice to skip an input).
pub fn check_gradients<E: Real, R: Rng, F>(
    settings: &GradCheckSettings,
    inputs: &mut [Vec<E>],
    analytic: &[&[E]],
    rng: &mut R,
    mut f: F,
) -> GradReport
where
    F: FnMut(&[Vec<E>]) -> E,
{
    assert_eq!(inputs.len(), analytic.len());
    let h = E::from_f64(settings.step);
    let two_h = settings.step * 2.0;
    let mut report = GradReport {
        checked: 0,
        worst: None,
        failures: Vec::new(),
    };
    for ti in 0..inputs.len() {
        if analytic[ti].is_empty() {
            continue;
        }
        assert_eq!(inputs[ti].len(), analytic[ti].len());
        let len = inputs[ti].len();
        let indexes: Vec<usize> = if settings.samples == 0 || len <= settings.samples {
            (0..len).collect()
        } else {
            sample(rng, len, settings.samples).into_vec()
        };
        for idx in indexes {
            let orig = inputs[ti][idx];
            inputs[ti][idx] = orig + h;
            let plus = f(inputs).to_f64();
            inputs[ti][idx] = orig - h;
            let minus = f(inputs).to_f64();
            inputs[ti][idx] = orig;
            let numeric = (plus - minus) / two_h;
            let a = analytic[ti][idx].to_f64();
            let component = GradComponent {
                input: ti,
                index: idx,
                analytic: a,
                numeric,
                rel_err: rel_err(a, numeric),
            };
            report.checked += 1;
            if report
                .worst
                .map(|w| component.rel_err > w.rel_err)
                .unwrap_or(true)
            {
                report.worst = Some(component);
            }
            if component.rel_err > settings.tolerance {
                report.failures.push(component);
            }
        }
    }
    report
}
