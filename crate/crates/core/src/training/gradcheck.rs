use crate::error::{Error, Result};
use crate::hierarchy::{derive_clocks_with, Network};

/// Gradients smaller than this are compared in absolute terms: at h = 1e-5 the
/// central difference carries roundoff of order 1e-10.
pub const REL_ERROR_FLOOR: f64 = 1e-5;

/// Outcome of comparing analytic and central-difference gradients.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_error: f64,
    pub worst_block: String,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error <= self.tolerance
    }
}

/// `|a − n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR)
}

/// Summed cross-entropy (nats) of `ids[1..]` from the zero state.
pub fn sequence_loss(net: &Network, ids: &[usize]) -> Result<f64> {
    let inputs = &ids[..ids.len() - 1];
    let plan = derive_clocks_with(inputs, net.boundaries(), net.spec().levels());
    let out = net.forward_from(&net.initial_state(), inputs, &plan, false)?;
    Ok(out.probs.iter().zip(&ids[1..]).map(|(p, &t)| -p[t].ln()).sum())
}

/// Compares every parameter's backpropagated gradient with a central difference
/// of step `h`.
pub fn gradient_check(net: &Network, ids: &[usize], h: f64, tolerance: f64) -> Result<GradCheckReport> {
    if ids.len() < 2 {
        return Err(Error::Argument("gradient check needs at least two tokens".into()));
    }
    let inputs = &ids[..ids.len() - 1];
    let plan = derive_clocks_with(inputs, net.boundaries(), net.spec().levels());
    let out = net.forward_from(&net.initial_state(), inputs, &plan, true)?;
    let mut grads = net.params.zeros_like();
    net.backward(&out.tape, &ids[1..], &mut grads)?;

    let names: Vec<String> = net.params.named_blocks(net.wiring()).into_iter().map(|(n, _)| n).collect();
    let analytic: Vec<Vec<f64>> = grads.blocks().iter().map(|m| m.data().to_vec()).collect();
    let mut probe = net.clone();
    let mut report = GradCheckReport {
        checked: 0,
        max_rel_error: 0.0,
        worst_block: String::new(),
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
        tolerance,
    };
    for (b, block) in analytic.iter().enumerate() {
        for (i, &a) in block.iter().enumerate() {
            let orig = probe.params.blocks()[b].data()[i];
            probe.params.blocks_mut()[b].data_mut()[i] = orig + h;
            let plus = sequence_loss(&probe, ids)?;
            probe.params.blocks_mut()[b].data_mut()[i] = orig - h;
            let minus = sequence_loss(&probe, ids)?;
            probe.params.blocks_mut()[b].data_mut()[i] = orig;
            let n = (plus - minus) / (2.0 * h);
            let rel = relative_error(a, n);
            report.checked += 1;
            if rel > report.max_rel_error || report.worst_block.is_empty() {
                report.max_rel_error = rel;
                report.worst_block = names[b].clone();
                report.worst_index = i;
                report.analytic = a;
                report.numeric = n;
            }
        }
    }
    Ok(report)
}
