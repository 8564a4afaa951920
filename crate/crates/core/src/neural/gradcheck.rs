//! Central finite-difference gradient checking.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use super::layers::Param;
use crate::error::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub checked: usize,
    pub max_rel_error: f64,
    /// Parameter element with the largest error, as `name[index]`.
    pub worst: String,
}

/// `|a − n| / max(|a|, |n|, floor)`
pub fn rel_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compares analytic gradients against central differences.
///
/// `analytic` must zero gradients, run forward + backward and return the
/// loss; `loss` must recompute the loss with the same randomness and no
/// gradient work; `visit` enumerates the parameters of the model.
pub fn check<M>(
    model: &mut M,
    h: f64,
    floor: f64,
    mut analytic: impl FnMut(&mut M) -> Result<f64>,
    mut loss: impl FnMut(&mut M) -> Result<f64>,
    mut visit: impl FnMut(&mut M, &mut dyn FnMut(&str, &mut Param<f64>)),
) -> Result<GradCheck> {
    analytic(model)?;
    let mut grads: Vec<(String, Vec<f64>)> = Vec::new();
    visit(model, &mut |name, p| grads.push((String::from(name), p.grad.data.clone())));

    let mut report = GradCheck { checked: 0, max_rel_error: 0.0, worst: String::new() };
    for (pi, (name, g)) in grads.iter().enumerate() {
        for (k, &a) in g.iter().enumerate() {
            let mut nudge = |model: &mut M, delta: f64| {
                let mut seen = 0;
                visit(model, &mut |_, p| {
                    if seen == pi {
                        p.value.data[k] += delta;
                    }
                    seen += 1;
                });
            };
            nudge(model, h);
            let up = loss(model)?;
            nudge(model, -2.0 * h);
            let down = loss(model)?;
            nudge(model, h);
            let numeric = (up - down) / (2.0 * h);
            let err = rel_error(a, numeric, floor);
            report.checked += 1;
            if err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst = format!("{name}[{k}] analytic {a} numeric {numeric}");
            }
        }
    }
    Ok(report)
}
