use rand::Rng;

use super::{sigmoid, CellState, Matrix, ParamBlocks, RecurrentCell};
use crate::error::{Error, Result};

/// Shape of the memory-cell (peephole) connections into the gates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Peephole {
    /// Dense `hidden × hidden` matrices.
    #[default]
    Full,
    /// One weight per unit, stored as a `hidden × 1` matrix.
    Diagonal,
}

impl Peephole {
    pub fn as_str(self) -> &'static str {
        match self {
            Peephole::Full => "full",
            Peephole::Diagonal => "diagonal",
        }
    }

    fn cols(self, hidden: usize) -> usize {
        match self {
            Peephole::Full => hidden,
            Peephole::Diagonal => 1,
        }
    }
}

impl std::str::FromStr for Peephole {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Peephole::Full),
            "diagonal" | "diag" => Ok(Peephole::Diagonal),
            other => Err(Error::Config(format!("unknown peephole kind {other:?}"))),
        }
    }
}

/// LSTM layer with forget gate and peephole connections.
///
/// ```text
/// i_t = σ(W_ix x_t + W_ih h_{t-1} + W_im m_{t-1} + b_i)
/// f_t = σ(W_fx x_t + W_fh h_{t-1} + W_fm m_{t-1} + b_f)
/// m_t = f_t ∘ m_{t-1} + i_t ∘ tanh(W_mx x_t + W_mh h_{t-1} + b_m)
/// o_t = σ(W_ox x_t + W_oh h_{t-1} + W_om m_t + b_o)
/// h_t = o_t ∘ tanh(m_t)
/// ```
#[derive(Clone, Debug, PartialEq)]
pub struct LstmParams {
    pub peephole: Peephole,
    pub w_ix: Matrix,
    pub w_ih: Matrix,
    pub w_im: Matrix,
    pub w_fx: Matrix,
    pub w_fh: Matrix,
    pub w_fm: Matrix,
    pub w_mx: Matrix,
    pub w_mh: Matrix,
    pub w_ox: Matrix,
    pub w_oh: Matrix,
    pub w_om: Matrix,
    pub b_i: Matrix,
    pub b_f: Matrix,
    pub b_m: Matrix,
    pub b_o: Matrix,
}

/// Forward cache for one LSTM step.
#[derive(Clone, Debug)]
pub struct LstmTape {
    pub x: Vec<f64>,
    pub m_prev: Vec<f64>,
    pub h_prev: Vec<f64>,
    pub i: Vec<f64>,
    pub f: Vec<f64>,
    pub g: Vec<f64>,
    pub o: Vec<f64>,
    pub m: Vec<f64>,
    pub tanh_m: Vec<f64>,
}

impl LstmParams {
    fn build(input: usize, hidden: usize, peephole: Peephole, mut make: impl FnMut(usize, usize) -> Matrix) -> Self {
        let pc = peephole.cols(hidden);
        Self {
            peephole,
            w_ix: make(hidden, input),
            w_ih: make(hidden, hidden),
            w_im: make(hidden, pc),
            w_fx: make(hidden, input),
            w_fh: make(hidden, hidden),
            w_fm: make(hidden, pc),
            w_mx: make(hidden, input),
            w_mh: make(hidden, hidden),
            w_ox: make(hidden, input),
            w_oh: make(hidden, hidden),
            w_om: make(hidden, pc),
            b_i: make(hidden, 1),
            b_f: make(hidden, 1),
            b_m: make(hidden, 1),
            b_o: make(hidden, 1),
        }
    }

    pub fn zeros(input: usize, hidden: usize, peephole: Peephole) -> Self {
        Self::build(input, hidden, peephole, Matrix::zeros)
    }

    /// Uniform initialisation in `[-scale, scale]`.
    pub fn random<R: Rng + ?Sized>(input: usize, hidden: usize, peephole: Peephole, scale: f64, rng: &mut R) -> Self {
        Self::build(input, hidden, peephole, |r, c| Matrix::uniform(r, c, scale, rng))
    }

    /// Closed-form parameter count of a layer.
    pub fn count(input: usize, hidden: usize, peephole: Peephole) -> usize {
        4 * hidden * input + 4 * hidden * hidden + 3 * hidden * peephole.cols(hidden) + 4 * hidden
    }

    /// Checks every block against `(input, hidden)`.
    pub fn validate(&self) -> Result<()> {
        let (input, hidden) = (self.w_ix.cols(), self.w_ih.rows());
        let expected = Self::zeros(input, hidden, self.peephole);
        for ((name, want), (_, got)) in expected.blocks().into_iter().zip(self.blocks()) {
            if want.rows() != got.rows() || want.cols() != got.cols() {
                return Err(Error::Config(format!(
                    "LSTM block {name} is {}x{}, expected {}x{}",
                    got.rows(),
                    got.cols(),
                    want.rows(),
                    want.cols()
                )));
            }
        }
        Ok(())
    }

    fn peep(&self, w: &Matrix, m: &[f64], out: &mut [f64]) {
        match self.peephole {
            Peephole::Full => w.gemv_acc(m, out),
            Peephole::Diagonal => {
                for ((o, wv), mv) in out.iter_mut().zip(w.data()).zip(m) {
                    *o += wv * mv;
                }
            }
        }
    }

    fn peep_t(&self, w: &Matrix, d: &[f64], out: &mut [f64]) {
        match self.peephole {
            Peephole::Full => w.gemv_t_acc(d, out),
            Peephole::Diagonal => {
                for ((o, wv), dv) in out.iter_mut().zip(w.data()).zip(d) {
                    *o += wv * dv;
                }
            }
        }
    }

    fn peep_grad(peephole: Peephole, gw: &mut Matrix, d: &[f64], m: &[f64]) {
        match peephole {
            Peephole::Full => gw.outer_acc(d, m),
            Peephole::Diagonal => {
                for ((g, dv), mv) in gw.data_mut().iter_mut().zip(d).zip(m) {
                    *g += dv * mv;
                }
            }
        }
    }
}

/// One unclocked LSTM step.
pub fn lstm_step(params: &LstmParams, x: &[f64], prev: &CellState) -> Result<(CellState, LstmTape)> {
    params.forward(x, prev)
}

impl ParamBlocks for LstmParams {
    fn blocks(&self) -> Vec<(&'static str, &Matrix)> {
        vec![
            ("W_ix", &self.w_ix),
            ("W_ih", &self.w_ih),
            ("W_im", &self.w_im),
            ("W_fx", &self.w_fx),
            ("W_fh", &self.w_fh),
            ("W_fm", &self.w_fm),
            ("W_mx", &self.w_mx),
            ("W_mh", &self.w_mh),
            ("W_ox", &self.w_ox),
            ("W_oh", &self.w_oh),
            ("W_om", &self.w_om),
            ("b_i", &self.b_i),
            ("b_f", &self.b_f),
            ("b_m", &self.b_m),
            ("b_o", &self.b_o),
        ]
    }

    fn blocks_mut(&mut self) -> Vec<(&'static str, &mut Matrix)> {
        vec![
            ("W_ix", &mut self.w_ix),
            ("W_ih", &mut self.w_ih),
            ("W_im", &mut self.w_im),
            ("W_fx", &mut self.w_fx),
            ("W_fh", &mut self.w_fh),
            ("W_fm", &mut self.w_fm),
            ("W_mx", &mut self.w_mx),
            ("W_mh", &mut self.w_mh),
            ("W_ox", &mut self.w_ox),
            ("W_oh", &mut self.w_oh),
            ("W_om", &mut self.w_om),
            ("b_i", &mut self.b_i),
            ("b_f", &mut self.b_f),
            ("b_m", &mut self.b_m),
            ("b_o", &mut self.b_o),
        ]
    }
}

impl RecurrentCell for LstmParams {
    type Tape = LstmTape;

    fn input_dim(&self) -> usize {
        self.w_ix.cols()
    }

    fn hidden_dim(&self) -> usize {
        self.w_ih.rows()
    }

    fn zero_state(&self) -> CellState {
        CellState::zeros_lstm(self.hidden_dim())
    }

    fn zeros_like(&self) -> Self {
        Self::zeros(self.input_dim(), self.hidden_dim(), self.peephole)
    }

    fn forward(&self, x: &[f64], prev: &CellState) -> Result<(CellState, LstmTape)> {
        let hidden = self.hidden_dim();
        if x.len() != self.input_dim() {
            return Err(Error::dim("LSTM input", self.input_dim(), x.len()));
        }
        if prev.h.len() != hidden || prev.m.len() != hidden {
            return Err(Error::dim("LSTM previous state", hidden, prev.h.len().min(prev.m.len())));
        }

        let mut a_i = self.b_i.data().to_vec();
        self.w_ix.gemv_acc(x, &mut a_i);
        self.w_ih.gemv_acc(&prev.h, &mut a_i);
        self.peep(&self.w_im, &prev.m, &mut a_i);

        let mut a_f = self.b_f.data().to_vec();
        self.w_fx.gemv_acc(x, &mut a_f);
        self.w_fh.gemv_acc(&prev.h, &mut a_f);
        self.peep(&self.w_fm, &prev.m, &mut a_f);

        let mut a_g = self.b_m.data().to_vec();
        self.w_mx.gemv_acc(x, &mut a_g);
        self.w_mh.gemv_acc(&prev.h, &mut a_g);

        let i: Vec<f64> = a_i.into_iter().map(sigmoid).collect();
        let f: Vec<f64> = a_f.into_iter().map(sigmoid).collect();
        let g: Vec<f64> = a_g.into_iter().map(f64::tanh).collect();
        let m: Vec<f64> = (0..hidden).map(|k| f[k] * prev.m[k] + i[k] * g[k]).collect();

        let mut a_o = self.b_o.data().to_vec();
        self.w_ox.gemv_acc(x, &mut a_o);
        self.w_oh.gemv_acc(&prev.h, &mut a_o);
        self.peep(&self.w_om, &m, &mut a_o);
        let o: Vec<f64> = a_o.into_iter().map(sigmoid).collect();

        let tanh_m: Vec<f64> = m.iter().map(|v| v.tanh()).collect();
        let h: Vec<f64> = o.iter().zip(&tanh_m).map(|(a, b)| a * b).collect();

        let tape = LstmTape {
            x: x.to_vec(),
            m_prev: prev.m.clone(),
            h_prev: prev.h.clone(),
            i,
            f,
            g,
            o,
            m: m.clone(),
            tanh_m,
        };
        Ok((CellState { m, h }, tape))
    }

    fn backward(&self, tape: &LstmTape, d_state: &CellState, grads: &mut Self) -> (Vec<f64>, CellState) {
        let hidden = self.hidden_dim();
        let t = tape;

        let da_o: Vec<f64> = (0..hidden)
            .map(|k| d_state.h[k] * t.tanh_m[k] * t.o[k] * (1.0 - t.o[k]))
            .collect();
        let mut dm: Vec<f64> = (0..hidden)
            .map(|k| d_state.m[k] + d_state.h[k] * t.o[k] * (1.0 - t.tanh_m[k] * t.tanh_m[k]))
            .collect();
        self.peep_t(&self.w_om, &da_o, &mut dm);

        let da_i: Vec<f64> = (0..hidden).map(|k| dm[k] * t.g[k] * t.i[k] * (1.0 - t.i[k])).collect();
        let da_g: Vec<f64> = (0..hidden).map(|k| dm[k] * t.i[k] * (1.0 - t.g[k] * t.g[k])).collect();
        let da_f: Vec<f64> = (0..hidden)
            .map(|k| dm[k] * t.m_prev[k] * t.f[k] * (1.0 - t.f[k]))
            .collect();

        let peephole = self.peephole;
        grads.w_ix.outer_acc(&da_i, &t.x);
        grads.w_ih.outer_acc(&da_i, &t.h_prev);
        LstmParams::peep_grad(peephole, &mut grads.w_im, &da_i, &t.m_prev);
        grads.w_fx.outer_acc(&da_f, &t.x);
        grads.w_fh.outer_acc(&da_f, &t.h_prev);
        LstmParams::peep_grad(peephole, &mut grads.w_fm, &da_f, &t.m_prev);
        grads.w_mx.outer_acc(&da_g, &t.x);
        grads.w_mh.outer_acc(&da_g, &t.h_prev);
        grads.w_ox.outer_acc(&da_o, &t.x);
        grads.w_oh.outer_acc(&da_o, &t.h_prev);
        LstmParams::peep_grad(peephole, &mut grads.w_om, &da_o, &t.m);
        for (b, d) in [
            (&mut grads.b_i, &da_i),
            (&mut grads.b_f, &da_f),
            (&mut grads.b_m, &da_g),
            (&mut grads.b_o, &da_o),
        ] {
            for (bv, dv) in b.data_mut().iter_mut().zip(d) {
                *bv += dv;
            }
        }

        let mut dx = vec![0.0; self.input_dim()];
        self.w_ix.gemv_t_acc(&da_i, &mut dx);
        self.w_fx.gemv_t_acc(&da_f, &mut dx);
        self.w_mx.gemv_t_acc(&da_g, &mut dx);
        self.w_ox.gemv_t_acc(&da_o, &mut dx);

        let mut dh_prev = vec![0.0; hidden];
        self.w_ih.gemv_t_acc(&da_i, &mut dh_prev);
        self.w_fh.gemv_t_acc(&da_f, &mut dh_prev);
        self.w_mh.gemv_t_acc(&da_g, &mut dh_prev);
        self.w_oh.gemv_t_acc(&da_o, &mut dh_prev);

        let mut dm_prev: Vec<f64> = (0..hidden).map(|k| dm[k] * t.f[k]).collect();
        self.peep_t(&self.w_im, &da_i, &mut dm_prev);
        self.peep_t(&self.w_fm, &da_f, &mut dm_prev);

        (dx, CellState { m: dm_prev, h: dh_prev })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sig(x: f64) -> f64 {
        1.0 / (1.0 + (-x).exp())
    }

    /// Straight-line re-evaluation of the gate equations, element by element.
    fn oracle_step(p: &LstmParams, x: &[f64], m_prev: &[f64], h_prev: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = p.hidden_dim();
        let lin = |w: &Matrix, v: &[f64], r: usize| (0..v.len()).map(|c| w.get(r, c) * v[c]).sum::<f64>();
        let peep = |w: &Matrix, v: &[f64], r: usize| match p.peephole {
            Peephole::Full => lin(w, v, r),
            Peephole::Diagonal => w.get(r, 0) * v[r],
        };
        let mut m = vec![0.0; n];
        let mut h = vec![0.0; n];
        for r in 0..n {
            let i = sig(lin(&p.w_ix, x, r) + lin(&p.w_ih, h_prev, r) + peep(&p.w_im, m_prev, r) + p.b_i.get(r, 0));
            let f = sig(lin(&p.w_fx, x, r) + lin(&p.w_fh, h_prev, r) + peep(&p.w_fm, m_prev, r) + p.b_f.get(r, 0));
            let g = (lin(&p.w_mx, x, r) + lin(&p.w_mh, h_prev, r) + p.b_m.get(r, 0)).tanh();
            m[r] = f * m_prev[r] + i * g;
        }
        for r in 0..n {
            let o = sig(lin(&p.w_ox, x, r) + lin(&p.w_oh, h_prev, r) + peep(&p.w_om, &m, r) + p.b_o.get(r, 0));
            h[r] = o * m[r].tanh();
        }
        (m, h)
    }

    #[test]
    fn zero_params_zero_state() {
        let p = LstmParams::zeros(3, 2, Peephole::Full);
        let (s, tape) = lstm_step(&p, &[1.0, -2.0, 0.5], &p.zero_state()).unwrap();
        assert_eq!(tape.i, vec![0.5, 0.5]);
        assert_eq!(tape.f, vec![0.5, 0.5]);
        assert_eq!(tape.o, vec![0.5, 0.5]);
        assert_eq!(s.m, vec![0.0, 0.0]);
        assert_eq!(s.h, vec![0.0, 0.0]);
    }

    #[test]
    fn saturated_candidate_bias_limit() {
        let mut p = LstmParams::zeros(2, 3, Peephole::Full);
        p.b_m.fill(30.0);
        let prev = CellState {
            m: vec![0.4, -1.0, 2.0],
            h: vec![0.0; 3],
        };
        let (s, _) = lstm_step(&p, &[0.3, 0.7], &prev).unwrap();
        for k in 0..3 {
            let want = 0.5 * prev.m[k] + 0.5;
            assert!((s.m[k] - want).abs() < 1e-9, "{} vs {want}", s.m[k]);
        }
    }

    #[test]
    fn random_instance_matches_oracle() {
        for peephole in [Peephole::Full, Peephole::Diagonal] {
            let mut rng = ChaCha8Rng::seed_from_u64(99);
            let p = LstmParams::random(4, 3, peephole, 0.7, &mut rng);
            let x = [0.5, -0.25, 1.0, 0.0];
            let prev = CellState {
                m: vec![0.3, -0.6, 0.9],
                h: vec![-0.2, 0.1, 0.4],
            };
            let (s, _) = lstm_step(&p, &x, &prev).unwrap();
            let (m, h) = oracle_step(&p, &x, &prev.m, &prev.h);
            for k in 0..3 {
                assert!((s.m[k] - m[k]).abs() < 1e-12);
                assert!((s.h[k] - h[k]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn parameter_count_closed_form() {
        for peephole in [Peephole::Full, Peephole::Diagonal] {
            let p = LstmParams::zeros(5, 7, peephole);
            assert_eq!(p.param_count(), LstmParams::count(5, 7, peephole));
        }
        // 4 gate blocks of (n·d + d·d + d) plus three peephole blocks
        assert_eq!(LstmParams::count(4, 8, Peephole::Full), 4 * (8 * 4 + 64 + 8) + 3 * 64);
        assert_eq!(LstmParams::count(4, 8, Peephole::Diagonal), 4 * (8 * 4 + 64 + 8) + 3 * 8);
    }

    #[test]
    fn validate_catches_bad_block() {
        let mut p = LstmParams::zeros(3, 2, Peephole::Full);
        assert!(p.validate().is_ok());
        p.w_om = Matrix::zeros(2, 1);
        assert!(p.validate().is_err());
    }
}
