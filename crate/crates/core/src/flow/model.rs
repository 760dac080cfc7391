use serde::{Deserialize, Serialize};

use super::discretize::{discretize_time, split_time};
use crate::error::{Error, Result};
use crate::nn::{lstm_step, mlp_forward, LstmSpec, LstmState, MlpSpec, ParamVector, Tape, Var};
use crate::ode::PwcSignal;
use crate::rng;

/// Network sizes and the control period a model is built for.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowArchitecture {
    pub state_dim: usize,
    pub input_dim: usize,
    pub delta: f64,
    pub lstm_hidden: usize,
    pub encoder_hidden: Vec<usize>,
    pub decoder_hidden: Vec<usize>,
}

impl FlowArchitecture {
    /// LSTM with 8 states, encoder 2x96, decoder 2x48.
    pub fn vdp_default() -> Self {
        Self {
            state_dim: 2,
            input_dim: 1,
            delta: 0.2,
            lstm_hidden: 8,
            encoder_hidden: vec![96, 96],
            decoder_hidden: vec![48, 48],
        }
    }

    /// LSTM with 16 states, encoder 2x64, decoder 2x32.
    pub fn fhn_default() -> Self {
        Self {
            state_dim: 2,
            input_dim: 1,
            delta: 0.1,
            lstm_hidden: 16,
            encoder_hidden: vec![64, 64],
            decoder_hidden: vec![32, 32],
        }
    }

    pub fn encoder_spec(&self) -> Result<MlpSpec> {
        MlpSpec::new(self.state_dim, &self.encoder_hidden, 2 * self.lstm_hidden)
    }

    pub fn lstm_spec(&self) -> Result<LstmSpec> {
        LstmSpec::new(self.input_dim + 1, self.lstm_hidden)
    }

    pub fn decoder_spec(&self) -> Result<MlpSpec> {
        MlpSpec::new(self.lstm_hidden, &self.decoder_hidden, self.state_dim)
    }
}

/// Encoder / LSTM / decoder approximation of a flow function.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowModel {
    arch: FlowArchitecture,
    encoder: MlpSpec,
    lstm: LstmSpec,
    decoder: MlpSpec,
    params: ParamVector,
    enc_off: usize,
    lstm_off: usize,
    dec_off: usize,
}

/// `(1 - tau) z_prev + tau z_last`.
pub fn interpolate_g(z_prev: &[f64], z_last: &[f64], tau: f64) -> Vec<f64> {
    z_prev
        .iter()
        .zip(z_last)
        .map(|(a, b)| (1.0 - tau) * a + tau * b)
        .collect()
}

impl FlowModel {
    /// A model with all parameters zero.
    pub fn zeros(arch: FlowArchitecture) -> Result<Self> {
        if !(arch.delta > 0.0) {
            return Err(Error::Config(format!("model delta must be positive, got {}", arch.delta)));
        }
        let encoder = arch.encoder_spec()?;
        let lstm = arch.lstm_spec()?;
        let decoder = arch.decoder_spec()?;
        let mut params = ParamVector::new();
        let enc_off = encoder.register(&mut params, "encoder");
        let lstm_off = lstm.register(&mut params, "lstm");
        let dec_off = decoder.register(&mut params, "decoder");
        Ok(Self {
            arch,
            encoder,
            lstm,
            decoder,
            params,
            enc_off,
            lstm_off,
            dec_off,
        })
    }

    /// Seeded uniform fan-in initialisation with zero biases.
    pub fn init(arch: FlowArchitecture, seed: u64) -> Result<Self> {
        let mut model = Self::zeros(arch)?;
        let mut r = rng::stream(seed, rng::INIT_STREAM);
        let (enc, lstm, dec) = (model.enc_off, model.lstm_off, model.dec_off);
        let values = model.params.values_mut();
        model.encoder.init(&mut r, &mut values[enc..lstm]);
        model.lstm.init(&mut r, &mut values[lstm..dec]);
        model.decoder.init(&mut r, &mut values[dec..]);
        Ok(model)
    }

    /// Rebuilds a model from stored parameters, checking the layout.
    pub fn from_params(arch: FlowArchitecture, params: ParamVector) -> Result<Self> {
        let mut model = Self::zeros(arch)?;
        if model.params.layout() != params.layout() {
            return Err(Error::Format("parameter layout does not match the architecture".into()));
        }
        model.params = params;
        Ok(model)
    }

    pub fn arch(&self) -> &FlowArchitecture {
        &self.arch
    }

    pub fn encoder_spec(&self) -> &MlpSpec {
        &self.encoder
    }

    pub fn lstm_spec(&self) -> &LstmSpec {
        &self.lstm
    }

    pub fn decoder_spec(&self) -> &MlpSpec {
        &self.decoder
    }

    pub fn params(&self) -> &ParamVector {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamVector {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    fn check_query(&self, x: &[f64], signal: &PwcSignal) -> Result<()> {
        if x.len() != self.arch.state_dim {
            return Err(Error::shape("initial state", self.arch.state_dim, x.len()));
        }
        if signal.input_dim() != self.arch.input_dim {
            return Err(Error::shape("signal input dimension", self.arch.input_dim, signal.input_dim()));
        }
        if (signal.delta() - self.arch.delta).abs() > 1e-12 * self.arch.delta {
            return Err(Error::Config(format!(
                "signal period {} does not match the model period {}",
                signal.delta(),
                self.arch.delta
            )));
        }
        Ok(())
    }

    /// `h_enc(x)`, split into the initial hidden and cell states.
    pub fn encode(&self, x: &[f64]) -> Result<LstmState> {
        let mut h = mlp_forward(&self.encoder, &self.params.values()[self.enc_off..], x)?;
        let c = h.split_off(self.lstm.hidden_dim);
        Ok(LstmState { h, c })
    }

    pub fn decode(&self, z: &[f64]) -> Result<Vec<f64>> {
        mlp_forward(&self.decoder, &self.params.values()[self.dec_off..], z)
    }

    fn cell(&self, state: &LstmState, u: &[f64], tau: f64) -> Result<LstmState> {
        let mut input = u.to_vec();
        input.push(tau);
        lstm_step(&self.lstm, &self.params.values()[self.lstm_off..], &input, state)
    }

    /// `phi_hat(s, x, u)`, evaluated token by token.
    pub fn forward(&self, s: f64, x: &[f64], signal: &PwcSignal) -> Result<Vec<f64>> {
        self.check_query(x, signal)?;
        let query = discretize_time(s, self.arch.delta, signal)?;
        let mut states = Vec::with_capacity(query.tokens.len() + 1);
        states.push(self.encode(x)?);
        for tok in &query.tokens {
            let next = lstm_step(
                &self.lstm,
                &self.params.values()[self.lstm_off..],
                &tok.features(),
                states.last().expect("non-empty"),
            )?;
            states.push(next);
        }
        let k = query.steps;
        let tau = query.tokens[k].tau;
        let z = interpolate_g(&states[k].h, &states[k + 1].h, tau);
        self.decode(&z)
    }

    /// `phi_hat` at every time in `times` (sorted), sharing the LSTM prefix
    /// between queries.
    pub fn rollout(&self, times: &[f64], x: &[f64], signal: &PwcSignal) -> Result<Vec<Vec<f64>>> {
        self.check_query(x, signal)?;
        let mut prefix = self.encode(x)?;
        let mut done = 0usize;
        let mut out = Vec::with_capacity(times.len());
        let mut prev_t = 0.0;
        for &t in times {
            if t < prev_t {
                return Err(Error::InvalidArgument(format!("rollout times not sorted: {prev_t} then {t}")));
            }
            prev_t = t;
            let (k, tau) = split_time(t, self.arch.delta)?;
            while done < k {
                prefix = self.cell(&prefix, signal.value(done)?, 1.0)?;
                done += 1;
            }
            let last = self.cell(&prefix, signal.value(k)?, tau)?;
            out.push(self.decode(&interpolate_g(&prefix.h, &last.h, tau))?);
        }
        Ok(out)
    }

    /// Records `scale * sum_j ||target_j - phi_hat(t_j, x0, signal)||^2` on
    /// `tape` and returns the scalar node. `samples` must be sorted by time.
    pub fn record_loss(
        &self,
        tape: &mut Tape<'_>,
        x0: &[f64],
        signal: &PwcSignal,
        samples: &[(f64, &[f64])],
        scale: f64,
    ) -> Result<Var> {
        self.check_query(x0, signal)?;
        let hd = self.lstm.hidden_dim;
        let x = tape.constant(x0.to_vec());
        let mut prefix = tape.mlp(&self.encoder, self.enc_off, x)?;
        let mut done = 0usize;
        let mut terms = Vec::with_capacity(samples.len());
        let mut prev_t = 0.0;
        for &(t, target) in samples {
            if t < prev_t {
                return Err(Error::InvalidArgument(format!("loss samples not sorted: {prev_t} then {t}")));
            }
            prev_t = t;
            let (k, tau) = split_time(t, self.arch.delta)?;
            while done < k {
                let mut tok = signal.value(done)?.to_vec();
                tok.push(1.0);
                let tok = tape.constant(tok);
                prefix = tape.lstm_cell(&self.lstm, self.lstm_off, tok, prefix)?;
                done += 1;
            }
            let mut tok = signal.value(k)?.to_vec();
            tok.push(tau);
            let tok = tape.constant(tok);
            let last = tape.lstm_cell(&self.lstm, self.lstm_off, tok, prefix)?;
            let z = tape.lerp(prefix, last, tau, hd)?;
            let y = tape.mlp(&self.decoder, self.dec_off, z)?;
            terms.push(tape.sq_err(y, target)?);
        }
        tape.sum(terms, scale)
    }
}
