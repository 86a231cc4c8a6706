//! Recurrent cells with external clock and reset signals.
//!
//! Every cell implements [`RecurrentCell`], a plain `s_t = f(x_t, s_{t-1})`
//! recurrence with an analytic backward pass. [`clocked_reset_step`] wraps any
//! such cell so that the state is only updated on clocked steps and the
//! previous state is zeroed before the update on reset steps:
//!
//! ```text
//! s_t = (1 - c_t)(1 - r_t) s_{t-1} + c_t f(x_t, (1 - r_t) s_{t-1})
//! ```

mod elman;
mod lstm;
mod matrix;

pub use elman::{elman_step, ElmanParams, ElmanTape};
pub use lstm::{lstm_step, LstmParams, LstmTape, Peephole};
pub use matrix::{dot, Matrix};

use crate::error::{Error, Result};

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Numerically stable softmax (max-subtracted).
pub fn softmax(z: &[f64]) -> Result<Vec<f64>> {
    if z.is_empty() {
        return Err(Error::Argument("softmax of an empty vector".into()));
    }
    if let Some(bad) = z.iter().find(|v| !v.is_finite()) {
        return Err(Error::Numeric(format!("softmax input contains {bad}")));
    }
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= sum);
    Ok(out)
}

/// Persistent state of one recurrent layer. Elman layers leave `m` empty.
#[derive(Clone, Debug, PartialEq)]
pub struct CellState {
    pub m: Vec<f64>,
    pub h: Vec<f64>,
}

impl CellState {
    pub fn zeros_lstm(hidden: usize) -> Self {
        Self {
            m: vec![0.0; hidden],
            h: vec![0.0; hidden],
        }
    }

    pub fn zeros_elman(hidden: usize) -> Self {
        Self {
            m: Vec::new(),
            h: vec![0.0; hidden],
        }
    }

    /// A zero state with the same layout as `self`.
    pub fn zeros_like(&self) -> Self {
        Self {
            m: vec![0.0; self.m.len()],
            h: vec![0.0; self.h.len()],
        }
    }

    /// The layer output `y_t = g(s_t) = h_t`.
    #[inline]
    pub fn output(&self) -> &[f64] {
        &self.h
    }

    pub fn is_finite(&self) -> bool {
        self.m.iter().chain(&self.h).all(|v| v.is_finite())
    }

    pub fn add_assign(&mut self, other: &CellState) {
        for (a, b) in self.m.iter_mut().zip(&other.m) {
            *a += b;
        }
        for (a, b) in self.h.iter_mut().zip(&other.h) {
            *a += b;
        }
    }
}

/// A named, shaped view over one parameter matrix.
pub trait ParamBlocks {
    fn blocks(&self) -> Vec<(&'static str, &Matrix)>;
    fn blocks_mut(&mut self) -> Vec<(&'static str, &mut Matrix)>;

    fn param_count(&self) -> usize {
        self.blocks().iter().map(|(_, m)| m.len()).sum()
    }
}

/// An unclocked recurrence `s_t = f(x_t, s_{t-1})` with exact reverse-mode gradients.
pub trait RecurrentCell: ParamBlocks + Clone {
    type Tape: Clone + std::fmt::Debug;

    fn input_dim(&self) -> usize;
    fn hidden_dim(&self) -> usize;
    fn zero_state(&self) -> CellState;
    /// Parameters of identical shape, all zero; used as a gradient accumulator.
    fn zeros_like(&self) -> Self;

    fn forward(&self, x: &[f64], prev: &CellState) -> Result<(CellState, Self::Tape)>;

    /// Accumulates parameter gradients into `grads` and returns `(dL/dx, dL/ds_{t-1})`
    /// given `dL/ds_t`.
    fn backward(&self, tape: &Self::Tape, d_state: &CellState, grads: &mut Self) -> (Vec<f64>, CellState);
}

/// Cached values of one clocked/reset step.
#[derive(Clone, Debug)]
pub struct TapeStep<T> {
    pub clock: bool,
    pub reset: bool,
    /// Present only on clocked steps; holds the input and the (reset-applied) previous state.
    pub inner: Option<T>,
}

/// Clocked update without reset: the state is copied verbatim when `clock` is false.
pub fn clocked_step<C: RecurrentCell>(
    cell: &C,
    x: &[f64],
    prev: &CellState,
    clock: bool,
) -> Result<(CellState, TapeStep<C::Tape>)> {
    clocked_reset_step(cell, x, prev, clock, false)
}

pub fn clocked_reset_step<C: RecurrentCell>(
    cell: &C,
    x: &[f64],
    prev: &CellState,
    clock: bool,
    reset: bool,
) -> Result<(CellState, TapeStep<C::Tape>)> {
    if clock {
        let (state, tape) = if reset {
            cell.forward(x, &prev.zeros_like())?
        } else {
            cell.forward(x, prev)?
        };
        Ok((
            state,
            TapeStep {
                clock,
                reset,
                inner: Some(tape),
            },
        ))
    } else {
        if x.len() != cell.input_dim() {
            return Err(Error::dim("clocked_reset_step input", cell.input_dim(), x.len()));
        }
        let state = if reset { prev.zeros_like() } else { prev.clone() };
        Ok((
            state,
            TapeStep {
                clock,
                reset,
                inner: None,
            },
        ))
    }
}

/// Backward through one clocked/reset step. Returns `(dL/dx, dL/ds_{t-1})`.
pub fn clocked_reset_backward<C: RecurrentCell>(
    cell: &C,
    step: &TapeStep<C::Tape>,
    d_state: &CellState,
    grads: &mut C,
) -> (Vec<f64>, CellState) {
    let (dx, d_prev) = match &step.inner {
        Some(tape) => cell.backward(tape, d_state, grads),
        None => (vec![0.0; cell.input_dim()], d_state.clone()),
    };
    if step.reset {
        (dx, d_prev.zeros_like())
    } else {
        (dx, d_prev)
    }
}

/// Result of [`cell_backward`].
#[derive(Clone, Debug)]
pub struct CellGradients<C> {
    pub params: C,
    pub inputs: Vec<Vec<f64>>,
    pub initial_state: CellState,
}

/// Reverse-mode pass over a recorded sequence of clocked/reset steps.
///
/// `output_grads[t]` is `dL/dy_t`; the final state receives no gradient.
pub fn cell_backward<C: RecurrentCell>(
    cell: &C,
    tape: &[TapeStep<C::Tape>],
    output_grads: &[Vec<f64>],
) -> Result<CellGradients<C>> {
    if tape.len() != output_grads.len() {
        return Err(Error::Argument(format!(
            "tape has {} steps but {} output gradients were given",
            tape.len(),
            output_grads.len()
        )));
    }
    let mut params = cell.zeros_like();
    let mut inputs = vec![Vec::new(); tape.len()];
    let mut d_state = cell.zero_state();
    for t in (0..tape.len()).rev() {
        if output_grads[t].len() != cell.hidden_dim() {
            return Err(Error::dim("cell_backward output grad", cell.hidden_dim(), output_grads[t].len()));
        }
        for (d, g) in d_state.h.iter_mut().zip(&output_grads[t]) {
            *d += g;
        }
        let (dx, d_prev) = clocked_reset_backward(cell, &tape[t], &d_state, &mut params);
        inputs[t] = dx;
        d_state = d_prev;
    }
    Ok(CellGradients {
        params,
        inputs,
        initial_state: d_state,
    })
}

/// Runs a clocked/reset cell over a sequence. Returns per-step outputs, the final
/// state and the tape.
pub fn run_sequence<C: RecurrentCell>(
    cell: &C,
    inputs: &[Vec<f64>],
    clocks: &[bool],
    resets: &[bool],
    initial: &CellState,
) -> Result<(Vec<Vec<f64>>, CellState, Vec<TapeStep<C::Tape>>)> {
    if clocks.len() != inputs.len() || resets.len() != inputs.len() {
        return Err(Error::Argument("clock/reset length differs from input length".into()));
    }
    let mut state = initial.clone();
    let mut outputs = Vec::with_capacity(inputs.len());
    let mut tape = Vec::with_capacity(inputs.len());
    for ((x, &c), &r) in inputs.iter().zip(clocks).zip(resets) {
        let (next, step) = clocked_reset_step(cell, x, &state, c, r)?;
        outputs.push(next.output().to_vec());
        tape.push(step);
        state = next;
    }
    Ok((outputs, state, tape))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn softmax_examples() {
        assert_eq!(softmax(&[0.0, 0.0]).unwrap(), vec![0.5, 0.5]);
        let p = softmax(&[1.0f64.ln(), 3.0f64.ln()]).unwrap();
        assert!((p[0] - 0.25).abs() < 1e-15 && (p[1] - 0.75).abs() < 1e-15);
        let z = [0.3, -1.2, 4.0];
        let shifted: Vec<f64> = z.iter().map(|v| v + 123.0).collect();
        let (a, b) = (softmax(&z).unwrap(), softmax(&shifted).unwrap());
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
        assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn softmax_survives_large_logits_and_rejects_nan() {
        let p = softmax(&[1000.0, 0.0]).unwrap();
        assert!(p.iter().all(|v| v.is_finite()));
        assert!(matches!(softmax(&[0.0, f64::NAN]), Err(Error::Numeric(_))));
        assert!(matches!(softmax(&[f64::INFINITY]), Err(Error::Numeric(_))));
    }

    fn lstm(input: usize, hidden: usize, seed: u64) -> LstmParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        LstmParams::random(input, hidden, Peephole::Full, 0.5, &mut rng)
    }

    #[test]
    fn unclocked_step_copies_state_bit_exactly() {
        let cell = lstm(3, 4, 1);
        let prev = CellState {
            m: vec![0.1, -0.2, 0.3, 1e-300],
            h: vec![-0.0, 0.5, -0.7, 0.25],
        };
        let (s, tape) = clocked_step(&cell, &[1.0, 2.0, 3.0], &prev, false).unwrap();
        assert!(tape.inner.is_none());
        assert_eq!(s.m.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), prev.m.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        assert_eq!(s.h.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), prev.h.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }

    #[test]
    fn clocked_step_equals_bare_forward() {
        let cell = lstm(3, 4, 2);
        let prev = CellState {
            m: vec![0.1, -0.2, 0.3, 0.4],
            h: vec![0.0, 0.5, -0.7, 0.25],
        };
        let x = [0.3, -0.1, 0.9];
        let (clocked, _) = clocked_step(&cell, &x, &prev, true).unwrap();
        let (bare, _) = cell.forward(&x, &prev).unwrap();
        assert_eq!(clocked, bare);
    }

    #[test]
    fn reset_cases() {
        let cell = lstm(2, 3, 3);
        let prev = CellState {
            m: vec![0.4, -0.2, 0.3],
            h: vec![0.1, 0.5, -0.7],
        };
        let x = [0.3, -0.1];
        let (s, _) = clocked_reset_step(&cell, &x, &prev, true, true).unwrap();
        let (from_zero, _) = cell.forward(&x, &cell.zero_state()).unwrap();
        assert_eq!(s, from_zero);
        let (s, _) = clocked_reset_step(&cell, &x, &prev, false, false).unwrap();
        assert_eq!(s, prev);
        let (s, _) = clocked_reset_step(&cell, &x, &prev, false, true).unwrap();
        assert_eq!(s, cell.zero_state());
    }

    #[test]
    fn alternating_clock_equals_subsampled_run() {
        let cell = lstm(3, 4, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(44);
        let xs: Vec<Vec<f64>> = (0..10)
            .map(|_| (0..3).map(|_| rand::Rng::gen_range(&mut rng, -1.0..1.0)).collect())
            .collect();
        let clocks: Vec<bool> = (0..10).map(|t| t % 2 == 0).collect();
        let (outs, last, _) = run_sequence(&cell, &xs, &clocks, &[false; 10], &cell.zero_state()).unwrap();

        // oracle: bare cell on the clocked steps only, holding between them
        let mut state = cell.zero_state();
        for t in 0..10 {
            if clocks[t] {
                state = cell.forward(&xs[t], &state).unwrap().0;
            }
            assert_eq!(outs[t], state.h);
        }
        assert_eq!(last, state);
    }

    #[test]
    fn backward_through_unclocked_step_passes_gradient_and_touches_no_params() {
        let cell = lstm(2, 3, 5);
        let prev = cell.zero_state();
        let (_, step) = clocked_step(&cell, &[1.0, -1.0], &prev, false).unwrap();
        let d = CellState {
            m: vec![0.1, 0.2, 0.3],
            h: vec![-1.0, 0.5, 2.0],
        };
        let mut grads = cell.zeros_like();
        let (dx, d_prev) = clocked_reset_backward(&cell, &step, &d, &mut grads);
        assert_eq!(d_prev, d);
        assert!(dx.iter().all(|v| *v == 0.0));
        assert_eq!(grads.param_count(), cell.param_count());
        assert!(grads.blocks().iter().all(|(_, m)| m.data().iter().all(|v| *v == 0.0)));
    }

    #[test]
    fn reset_step_blocks_gradient_to_previous_state() {
        let cell = lstm(2, 3, 6);
        let prev = CellState {
            m: vec![0.4, -0.2, 0.3],
            h: vec![0.1, 0.5, -0.7],
        };
        let d = CellState {
            m: vec![0.1, 0.2, 0.3],
            h: vec![-1.0, 0.5, 2.0],
        };
        for clock in [false, true] {
            let (_, step) = clocked_reset_step(&cell, &[1.0, -1.0], &prev, clock, true).unwrap();
            let mut grads = cell.zeros_like();
            let (_, d_prev) = clocked_reset_backward(&cell, &step, &d, &mut grads);
            assert_eq!(d_prev, cell.zero_state());
        }
    }

    #[test]
    fn cell_backward_rejects_length_mismatch() {
        let cell = lstm(2, 3, 7);
        let (_, _, tape) = run_sequence(
            &cell,
            &[vec![0.0, 1.0], vec![1.0, 0.0]],
            &[true, true],
            &[false, false],
            &cell.zero_state(),
        )
        .unwrap();
        let err = cell_backward(&cell, &tape, &[vec![0.0; 3]]).unwrap_err();
        assert!(matches!(err, Error::Argument(_)));
    }
}
