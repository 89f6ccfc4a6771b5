use super::{Module, Tensor};

/// Outcome of comparing analytic gradients with central differences.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub checked: usize,
    /// `name[flat index]` of the entry with the largest relative error.
    pub worst: String,
}

impl GradCheckReport {
    pub fn passed(&self, tolerance: f64) -> bool {
        self.max_rel_error < tolerance
    }

    pub fn merge(&mut self, other: &GradCheckReport) {
        if other.max_rel_error > self.max_rel_error {
            self.max_rel_error = other.max_rel_error;
            self.worst = other.worst.clone();
        }
        self.max_abs_error = self.max_abs_error.max(other.max_abs_error);
        self.checked += other.checked;
    }
}

impl Default for GradCheckReport {
    fn default() -> Self {
        GradCheckReport {
            max_rel_error: 0.0,
            max_abs_error: 0.0,
            checked: 0,
            worst: String::new(),
        }
    }
}

/// Magnitudes below this are compared absolutely rather than relatively.
const REL_FLOOR: f64 = 1e-6;

/// Checks every trainable parameter entry of `model`.
///
/// `eval(model, with_grad)` returns the scalar loss; when `with_grad` is
/// true it must also leave fresh gradients (zeroed, then accumulated) in
/// the parameters.
pub fn grad_check<M, F>(model: &mut M, mut eval: F, h: f64) -> GradCheckReport
where
    M: Module,
    F: FnMut(&mut M, bool) -> f64,
{
    eval(model, true);
    let mut analytic: Vec<(String, Tensor)> = Vec::new();
    model.visit("", &mut |name, p| {
        if p.trainable {
            analytic.push((name.to_string(), p.grad.clone()));
        }
    });

    let mut report = GradCheckReport::default();
    for (name, grad) in &analytic {
        for (idx, &a) in grad.iter().enumerate() {
            let plus = perturbed(model, name, idx, h, &mut eval);
            let minus = perturbed(model, name, idx, -h, &mut eval);
            let numeric = (plus - minus) / (2.0 * h);
            let abs = (a - numeric).abs();
            let rel = abs / a.abs().max(numeric.abs()).max(REL_FLOOR);
            report.checked += 1;
            report.max_abs_error = report.max_abs_error.max(abs);
            if rel > report.max_rel_error || report.worst.is_empty() {
                report.max_rel_error = report.max_rel_error.max(rel);
                if rel >= report.max_rel_error {
                    report.worst = format!("{name}[{idx}]");
                }
            }
        }
    }
    report
}

fn perturbed<M, F>(model: &mut M, name: &str, idx: usize, delta: f64, eval: &mut F) -> f64
where
    M: Module,
    F: FnMut(&mut M, bool) -> f64,
{
    let mut original = 0.0;
    model.visit("", &mut |n, p| {
        if n == name {
            let slot = p.value.iter_mut().nth(idx).expect("index in range");
            original = *slot;
            *slot += delta;
        }
    });
    let loss = eval(model, false);
    model.visit("", &mut |n, p| {
        if n == name {
            *p.value.iter_mut().nth(idx).expect("index in range") = original;
        }
    });
    loss
}
