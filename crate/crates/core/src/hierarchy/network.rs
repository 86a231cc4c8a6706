use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::clocks::{Boundaries, ClockPlan};
use super::spec::{NetworkSpec, Source, Wiring};
use crate::cells::{
    clocked_reset_backward, clocked_reset_step, softmax, CellState, LstmParams, LstmTape, Matrix, ParamBlocks,
    RecurrentCell, TapeStep,
};
use crate::error::{Error, Result};

/// Default half-width of the uniform parameter initialisation.
pub const INIT_SCALE: f64 = 0.08;

/// All trainable weights of a network: one LSTM per wiring layer plus the softmax layer.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkParams {
    pub layers: Vec<LstmParams>,
    pub w_out: Matrix,
    pub b_out: Matrix,
}

impl NetworkParams {
    /// Flat `(name, block)` listing in a fixed order.
    pub fn named_blocks(&self, wiring: &Wiring) -> Vec<(String, &Matrix)> {
        let mut out = Vec::new();
        for (layer, w) in self.layers.iter().zip(&wiring.layers) {
            for (name, m) in layer.blocks() {
                out.push((format!("{}/{}", w.name, name), m));
            }
        }
        out.push(("softmax/W".to_string(), &self.w_out));
        out.push(("softmax/b".to_string(), &self.b_out));
        out
    }

    pub fn blocks(&self) -> Vec<&Matrix> {
        let mut out: Vec<&Matrix> = self.layers.iter().flat_map(|l| l.blocks().into_iter().map(|(_, m)| m)).collect();
        out.push(&self.w_out);
        out.push(&self.b_out);
        out
    }

    pub fn blocks_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out: Vec<&mut Matrix> = self
            .layers
            .iter_mut()
            .flat_map(|l| l.blocks_mut().into_iter().map(|(_, m)| m))
            .collect();
        out.push(&mut self.w_out);
        out.push(&mut self.b_out);
        out
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self.layers.iter().map(RecurrentCell::zeros_like).collect(),
            w_out: Matrix::zeros(self.w_out.rows(), self.w_out.cols()),
            b_out: Matrix::zeros(self.b_out.rows(), 1),
        }
    }

    pub fn param_count(&self) -> usize {
        self.blocks().iter().map(|m| m.len()).sum()
    }

    pub fn add_assign(&mut self, other: &NetworkParams) {
        for (a, b) in self.blocks_mut().into_iter().zip(other.blocks()) {
            a.add_assign(b);
        }
    }

    pub fn scale(&mut self, s: f64) {
        for m in self.blocks_mut() {
            m.scale(s);
        }
    }

    pub fn norm(&self) -> f64 {
        self.blocks().iter().map(|m| m.sum_sq()).sum::<f64>().sqrt()
    }
}

/// Runtime state of every layer plus the one-step delay buffers.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkState {
    pub layers: Vec<CellState>,
    /// Last output of each layer that feeds another layer with delay; empty otherwise.
    pub delayed: Vec<Vec<f64>>,
}

/// Cached forward values of one time step.
#[derive(Clone, Debug)]
pub struct StepTape {
    pub layers: Vec<TapeStep<LstmTape>>,
    pub output_h: Vec<f64>,
    pub probs: Vec<f64>,
}

/// Result of running the network over a sequence.
#[derive(Clone, Debug)]
pub struct ForwardOutput {
    /// `probs[t]` is the next-token distribution after consuming `ids[t]`.
    pub probs: Vec<Vec<f64>>,
    pub state: NetworkState,
    /// Empty unless requested.
    pub tape: Vec<StepTape>,
}

/// A network architecture together with its parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    spec: NetworkSpec,
    wiring: Wiring,
    delayed: Vec<bool>,
    pub params: NetworkParams,
}

impl Network {
    /// Allocates every weight named by the wiring table, uniform in `[-scale, scale]`.
    pub fn random(spec: NetworkSpec, scale: f64, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let wiring = spec.wiring();
        let layers = (0..wiring.layers.len())
            .map(|k| {
                LstmParams::random(
                    wiring.input_dim(k, spec.vocab_size),
                    wiring.layers[k].hidden,
                    spec.peephole,
                    scale,
                    &mut rng,
                )
            })
            .collect();
        let out_h = wiring.layers[wiring.output].hidden;
        let w_out = Matrix::uniform(spec.vocab_size, out_h, scale, &mut rng);
        let b_out = Matrix::uniform(spec.vocab_size, 1, scale, &mut rng);
        Self::from_params(spec, NetworkParams { layers, w_out, b_out })
    }

    pub fn zeros(spec: NetworkSpec) -> Result<Self> {
        Self::random(spec, 0.0, 0)
    }

    pub fn from_params(spec: NetworkSpec, params: NetworkParams) -> Result<Self> {
        spec.validate()?;
        let wiring = spec.wiring();
        if params.layers.len() != wiring.layers.len() {
            return Err(Error::Config(format!(
                "expected {} LSTM layers, found {}",
                wiring.layers.len(),
                params.layers.len()
            )));
        }
        for (k, layer) in params.layers.iter().enumerate() {
            layer.validate()?;
            let want = wiring.input_dim(k, spec.vocab_size);
            if layer.input_dim() != want || layer.hidden_dim() != wiring.layers[k].hidden || layer.peephole != spec.peephole {
                return Err(Error::Config(format!("layer {} has the wrong shape", wiring.layers[k].name)));
            }
        }
        let out_h = wiring.layers[wiring.output].hidden;
        if params.w_out.rows() != spec.vocab_size || params.w_out.cols() != out_h || params.b_out.rows() != spec.vocab_size {
            return Err(Error::Config("softmax layer has the wrong shape".into()));
        }
        let delayed = wiring.delayed_sources();
        Ok(Self {
            spec,
            wiring,
            delayed,
            params,
        })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn wiring(&self) -> &Wiring {
        &self.wiring
    }

    pub fn vocab_size(&self) -> usize {
        self.spec.vocab_size
    }

    pub fn boundaries(&self) -> Boundaries {
        Boundaries {
            word: self.spec.word_boundary_id,
            sentence: self.spec.sentence_boundary_id,
        }
    }

    pub fn param_count(&self) -> usize {
        self.params.param_count()
    }

    pub fn initial_state(&self) -> NetworkState {
        NetworkState {
            layers: self.wiring.layers.iter().map(|l| CellState::zeros_lstm(l.hidden)).collect(),
            delayed: self
                .wiring
                .layers
                .iter()
                .zip(&self.delayed)
                .map(|(l, &d)| if d { vec![0.0; l.hidden] } else { Vec::new() })
                .collect(),
        }
    }

    fn check_state(&self, state: &NetworkState) -> Result<()> {
        if state.layers.len() != self.wiring.layers.len() || state.delayed.len() != self.wiring.layers.len() {
            return Err(Error::Argument("state does not belong to this network".into()));
        }
        Ok(())
    }

    fn gather_input(&self, k: usize, id: usize, state: &NetworkState) -> Vec<f64> {
        let b = self.boundaries();
        let mut x = Vec::with_capacity(self.wiring.input_dim(k, self.spec.vocab_size));
        for &source in &self.wiring.layers[k].sources {
            match source {
                Source::OneHot => {
                    let start = x.len();
                    x.resize(start + self.spec.vocab_size, 0.0);
                    x[start + id] = 1.0;
                }
                Source::Boundary => {
                    x.push(if id == b.word { 1.0 } else { 0.0 });
                    x.push(if id == b.sentence { 1.0 } else { 0.0 });
                }
                Source::Layer { index, delayed: true } => x.extend_from_slice(&state.delayed[index]),
                Source::Layer { index, delayed: false } => x.extend_from_slice(&state.layers[index].h),
            }
        }
        x
    }

    /// Advances `state` by one token under explicit clock/reset bits per level.
    fn advance(
        &self,
        state: &mut NetworkState,
        id: usize,
        clock: impl Fn(usize) -> bool,
        reset: impl Fn(usize) -> bool,
        record: bool,
    ) -> Result<(Vec<f64>, Option<StepTape>)> {
        if id >= self.spec.vocab_size {
            return Err(Error::Argument(format!(
                "token id {id} out of range for vocabulary of {}",
                self.spec.vocab_size
            )));
        }
        let mut tapes = Vec::with_capacity(if record { self.wiring.layers.len() } else { 0 });
        for (k, layer) in self.wiring.layers.iter().enumerate() {
            let x = self.gather_input(k, id, state);
            let r = reset(layer.level) && (layer.level > 0 || self.spec.char_reset);
            let (next, tape) = clocked_reset_step(&self.params.layers[k], &x, &state.layers[k], clock(layer.level), r)?;
            state.layers[k] = next;
            if record {
                tapes.push(tape);
            }
        }
        for (k, &d) in self.delayed.iter().enumerate() {
            if d {
                state.delayed[k].clone_from(&state.layers[k].h);
            }
        }
        let out_h = &state.layers[self.wiring.output].h;
        let mut logits = self.params.b_out.data().to_vec();
        self.params.w_out.gemv_acc(out_h, &mut logits);
        let probs = softmax(&logits)?;
        let tape = record.then(|| StepTape {
            layers: tapes,
            output_h: out_h.clone(),
            probs: probs.clone(),
        });
        Ok((probs, tape))
    }

    /// One streaming step from `state`; clocks are derived from `id`. The input
    /// state is left untouched.
    pub fn step_stateful(&self, state: &NetworkState, id: usize) -> Result<(Vec<f64>, NetworkState)> {
        self.check_state(state)?;
        let mut next = state.clone();
        let probs = self.step_in_place(&mut next, id)?;
        Ok((probs, next))
    }

    /// Like [`Network::step_stateful`] but mutates the state.
    pub fn step_in_place(&self, state: &mut NetworkState, id: usize) -> Result<Vec<f64>> {
        let b = self.boundaries();
        let levels = self.spec.levels();
        let clock = |l: usize| b.clock(l, id);
        let reset = |l: usize| l + 1 < levels && b.clock(l + 1, id);
        Ok(self.advance(state, id, clock, reset, false)?.0)
    }

    /// Runs the network over `ids` from `initial` under `plan`.
    pub fn forward_from(
        &self,
        initial: &NetworkState,
        ids: &[usize],
        plan: &ClockPlan,
        record_tape: bool,
    ) -> Result<ForwardOutput> {
        self.check_state(initial)?;
        if plan.len() != ids.len() {
            return Err(Error::Argument(format!(
                "clock plan covers {} steps but the sequence has {}",
                plan.len(),
                ids.len()
            )));
        }
        if plan.levels() != self.spec.levels() {
            return Err(Error::Argument(format!(
                "clock plan has {} levels, network has {}",
                plan.levels(),
                self.spec.levels()
            )));
        }
        let mut state = initial.clone();
        let mut probs = Vec::with_capacity(ids.len());
        let mut tape = Vec::with_capacity(if record_tape { ids.len() } else { 0 });
        for (t, &id) in ids.iter().enumerate() {
            let (p, step) = self.advance(&mut state, id, |l| plan.clock(l, t), |l| plan.reset(l, t), record_tape)?;
            probs.push(p);
            if let Some(step) = step {
                tape.push(step);
            }
        }
        Ok(ForwardOutput { probs, state, tape })
    }

    /// Runs the network over `ids` from the zero state.
    pub fn forward(&self, ids: &[usize], plan: &ClockPlan) -> Result<ForwardOutput> {
        self.forward_from(&self.initial_state(), ids, plan, true)
    }

    /// Reverse-mode pass over a recorded window. `targets[t]` is the token that
    /// should follow step `t`. Gradients of the summed cross-entropy (in nats) are
    /// added to `grads`; the loss is returned. State gradients are not carried past
    /// the start of the window.
    pub fn backward(&self, tape: &[StepTape], targets: &[usize], grads: &mut NetworkParams) -> Result<f64> {
        if tape.len() != targets.len() {
            return Err(Error::Argument(format!(
                "tape has {} steps but {} targets were given",
                tape.len(),
                targets.len()
            )));
        }
        let n_layers = self.wiring.layers.len();
        let mut d_state: Vec<CellState> = self.wiring.layers.iter().map(|l| CellState::zeros_lstm(l.hidden)).collect();
        let mut d_delayed: Vec<Vec<f64>> = self.wiring.layers.iter().map(|l| vec![0.0; l.hidden]).collect();
        let mut loss = 0.0;

        for t in (0..tape.len()).rev() {
            let step = &tape[t];
            let target = targets[t];
            if target >= self.spec.vocab_size {
                return Err(Error::Argument(format!("target id {target} out of range")));
            }
            loss -= step.probs[target].ln();

            let mut d_logits = step.probs.clone();
            d_logits[target] -= 1.0;
            grads.w_out.outer_acc(&d_logits, &step.output_h);
            for (b, d) in grads.b_out.data_mut().iter_mut().zip(&d_logits) {
                *b += d;
            }

            let mut d_out: Vec<Vec<f64>> = self.wiring.layers.iter().map(|l| vec![0.0; l.hidden]).collect();
            self.params.w_out.gemv_t_acc(&d_logits, &mut d_out[self.wiring.output]);
            let mut d_delayed_prev: Vec<Vec<f64>> = self.wiring.layers.iter().map(|l| vec![0.0; l.hidden]).collect();

            for k in (0..n_layers).rev() {
                let mut ds = std::mem::replace(&mut d_state[k], CellState { m: Vec::new(), h: Vec::new() });
                for ((d, o), dd) in ds.h.iter_mut().zip(&d_out[k]).zip(&d_delayed[k]) {
                    *d += o + dd;
                }
                let (dx, d_prev) = clocked_reset_backward(&self.params.layers[k], &step.layers[k], &ds, &mut grads.layers[k]);
                d_state[k] = d_prev;

                let mut offset = 0;
                for &source in &self.wiring.layers[k].sources {
                    let dim = self.wiring.source_dim(source, self.spec.vocab_size);
                    if let Source::Layer { index, delayed } = source {
                        let target = if delayed { &mut d_delayed_prev[index] } else { &mut d_out[index] };
                        for (a, b) in target.iter_mut().zip(&dx[offset..offset + dim]) {
                            *a += b;
                        }
                    }
                    offset += dim;
                }
            }
            d_delayed = d_delayed_prev;
        }
        Ok(loss)
    }
}

/// Builds a freshly initialised network (uniform in `[-0.08, 0.08]`).
pub fn build_network(spec: NetworkSpec, seed: u64) -> Result<Network> {
    Network::random(spec, INIT_SCALE, seed)
}

/// Runs `net` over `ids` from the zero state under `plan`, recording the tape.
pub fn hrnn_forward(net: &Network, ids: &[usize], plan: &ClockPlan) -> Result<ForwardOutput> {
    net.forward(ids, plan)
}
