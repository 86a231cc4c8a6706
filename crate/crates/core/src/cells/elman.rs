use rand::Rng;

use super::{sigmoid, CellState, Matrix, ParamBlocks, RecurrentCell};
use crate::error::{Error, Result};

/// Elman hidden layer, `h_t = σ(W_hx x_t + W_hh h_{t-1} + b_h)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ElmanParams {
    pub w_hx: Matrix,
    pub w_hh: Matrix,
    pub b_h: Matrix,
}

#[derive(Clone, Debug)]
pub struct ElmanTape {
    x: Vec<f64>,
    h_prev: Vec<f64>,
    h: Vec<f64>,
}

impl ElmanParams {
    pub fn new(w_hx: Matrix, w_hh: Matrix, b_h: Matrix) -> Result<Self> {
        let hidden = w_hh.rows();
        if w_hh.cols() != hidden {
            return Err(Error::dim("Elman W_hh columns", hidden, w_hh.cols()));
        }
        if w_hx.rows() != hidden {
            return Err(Error::dim("Elman W_hx rows", hidden, w_hx.rows()));
        }
        if b_h.rows() != hidden || b_h.cols() != 1 {
            return Err(Error::dim("Elman b_h length", hidden, b_h.len()));
        }
        Ok(Self { w_hx, w_hh, b_h })
    }

    pub fn zeros(input: usize, hidden: usize) -> Self {
        Self {
            w_hx: Matrix::zeros(hidden, input),
            w_hh: Matrix::zeros(hidden, hidden),
            b_h: Matrix::zeros(hidden, 1),
        }
    }

    pub fn random<R: Rng + ?Sized>(input: usize, hidden: usize, scale: f64, rng: &mut R) -> Self {
        Self {
            w_hx: Matrix::uniform(hidden, input, scale, rng),
            w_hh: Matrix::uniform(hidden, hidden, scale, rng),
            b_h: Matrix::uniform(hidden, 1, scale, rng),
        }
    }
}

/// One Elman step without clocking.
pub fn elman_step(params: &ElmanParams, x: &[f64], h_prev: &[f64]) -> Result<Vec<f64>> {
    let state = CellState {
        m: Vec::new(),
        h: h_prev.to_vec(),
    };
    Ok(params.forward(x, &state)?.0.h)
}

impl ParamBlocks for ElmanParams {
    fn blocks(&self) -> Vec<(&'static str, &Matrix)> {
        vec![("W_hx", &self.w_hx), ("W_hh", &self.w_hh), ("b_h", &self.b_h)]
    }

    fn blocks_mut(&mut self) -> Vec<(&'static str, &mut Matrix)> {
        vec![("W_hx", &mut self.w_hx), ("W_hh", &mut self.w_hh), ("b_h", &mut self.b_h)]
    }
}

impl RecurrentCell for ElmanParams {
    type Tape = ElmanTape;

    fn input_dim(&self) -> usize {
        self.w_hx.cols()
    }

    fn hidden_dim(&self) -> usize {
        self.w_hh.rows()
    }

    fn zero_state(&self) -> CellState {
        CellState::zeros_elman(self.hidden_dim())
    }

    fn zeros_like(&self) -> Self {
        Self::zeros(self.input_dim(), self.hidden_dim())
    }

    fn forward(&self, x: &[f64], prev: &CellState) -> Result<(CellState, ElmanTape)> {
        if x.len() != self.input_dim() {
            return Err(Error::dim("Elman input", self.input_dim(), x.len()));
        }
        if prev.h.len() != self.hidden_dim() {
            return Err(Error::dim("Elman previous state", self.hidden_dim(), prev.h.len()));
        }
        let mut a = self.b_h.data().to_vec();
        self.w_hx.gemv_acc(x, &mut a);
        self.w_hh.gemv_acc(&prev.h, &mut a);
        let h: Vec<f64> = a.into_iter().map(sigmoid).collect();
        let tape = ElmanTape {
            x: x.to_vec(),
            h_prev: prev.h.clone(),
            h: h.clone(),
        };
        Ok((CellState { m: Vec::new(), h }, tape))
    }

    fn backward(&self, tape: &ElmanTape, d_state: &CellState, grads: &mut Self) -> (Vec<f64>, CellState) {
        let da: Vec<f64> = d_state
            .h
            .iter()
            .zip(&tape.h)
            .map(|(d, h)| d * h * (1.0 - h))
            .collect();
        grads.w_hx.outer_acc(&da, &tape.x);
        grads.w_hh.outer_acc(&da, &tape.h_prev);
        for (b, d) in grads.b_h.data_mut().iter_mut().zip(&da) {
            *b += d;
        }
        let mut dx = vec![0.0; self.input_dim()];
        self.w_hx.gemv_t_acc(&da, &mut dx);
        let mut dh_prev = vec![0.0; self.hidden_dim()];
        self.w_hh.gemv_t_acc(&da, &mut dh_prev);
        (
            dx,
            CellState {
                m: Vec::new(),
                h: dh_prev,
            },
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_weights_give_one_half() {
        let p = ElmanParams::zeros(3, 2);
        assert_eq!(elman_step(&p, &[5.0, -2.0, 1.0], &[0.3, 0.9]).unwrap(), vec![0.5, 0.5]);
    }

    #[test]
    fn identity_input_weight_on_zero_input() {
        let p = ElmanParams::new(Matrix::identity(1), Matrix::zeros(1, 1), Matrix::zeros(1, 1)).unwrap();
        assert_eq!(elman_step(&p, &[0.0], &[0.0]).unwrap(), vec![0.5]);
    }

    #[test]
    fn random_instance_matches_hand_rolled_evaluation() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let p = ElmanParams::random(3, 2, 1.0, &mut rng);
        let x = [0.2, -0.7, 1.1];
        let h_prev = [0.4, -0.3];
        let got = elman_step(&p, &x, &h_prev).unwrap();
        for r in 0..2 {
            let mut a = p.b_h.get(r, 0);
            for c in 0..3 {
                a += p.w_hx.get(r, c) * x[c];
            }
            for c in 0..2 {
                a += p.w_hh.get(r, c) * h_prev[c];
            }
            let want = 1.0 / (1.0 + (-a).exp());
            assert!((got[r] - want).abs() < 1e-15, "row {r}: {} vs {want}", got[r]);
        }
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let p = ElmanParams::zeros(3, 2);
        assert!(matches!(elman_step(&p, &[0.0; 2], &[0.0; 2]), Err(Error::Dimension { .. })));
        assert!(matches!(elman_step(&p, &[0.0; 3], &[0.0; 3]), Err(Error::Dimension { .. })));
        assert!(ElmanParams::new(Matrix::zeros(2, 3), Matrix::zeros(3, 3), Matrix::zeros(3, 1)).is_err());
    }
}
